//! A toolchain for the field calculus.

pub mod blocks;
pub mod eval;
pub mod experiments;
pub mod lang;
pub mod net;
pub mod stability;
pub mod value;

#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/programs.md")]
    struct Programs;
    #[doc = include_str!("../../../book/src/evaluation.md")]
    struct Evaluation;
    #[doc = include_str!("../../../book/src/networks.md")]
    struct Networks;
    #[doc = include_str!("../../../book/src/stability.md")]
    struct Stability;
    #[doc = include_str!("../../../book/src/blocks.md")]
    struct Blocks;
    #[doc = include_str!("../../../book/src/experiments.md")]
    struct Experiments;
}
