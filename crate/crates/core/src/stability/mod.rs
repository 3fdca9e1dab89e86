//! Self-stabilisation: fragment classification, property validation and empirical checks.

pub mod empirical;
pub mod fragment;
pub mod oracle;
pub mod properties;
pub mod registry;

use thiserror::Error;

use crate::lang::LangError;
use crate::net::NetError;

pub use empirical::{
    empirical_selfstab, empirical_selfstab_with, eventual_equivalence, fields_agree, EquivalenceVerdict,
    SelfStabOptions, StabilisationVerdict, FLOAT_TOLERANCE,
};
pub use fragment::{check_fragment, FragmentReport, Obligation, RepSite, RepVerdict, Resolution};
pub use oracle::path_weight_oracle;
pub use properties::{validate_property, Clause, PropertyOutcome, Sample, Violation};
pub use registry::{OrderSpec, Property, PropertyAnnotation, Registry};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum StabilityError {
    #[error("registry: {0}")]
    Registry(String),
    #[error("sampler for `{0}` rejected too many draws")]
    SamplerExhausted(String),
    #[error("`{0}` failed on a sample: {1}")]
    Subject(String, String),
    #[error("search does not terminate: {0}")]
    NonTermination(String),
    #[error(transparent)]
    Lang(#[from] LangError),
    #[error(transparent)]
    Net(#[from] NetError),
}
