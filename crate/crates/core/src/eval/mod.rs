//! Evaluation of one firing on one device.
//!
//! [`evaluate`] turns an expression, the device identity, the value trees
//! last received from neighbours and a sensor snapshot into the value tree
//! the device will broadcast.

pub mod builtins;
pub mod evaluator;
pub mod notation;

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::lang::{Expr, Program};
use crate::value::{DeviceId, LocalValue, Value};

pub use builtins::{BuiltinCtx, BuiltinFn, BuiltinRegistry};
pub use evaluator::Evaluator;
pub use notation::{parse_tree, to_indented, to_notation, ParseTreeError};

/// Result of evaluating an expression: its value plus the trees of its subexpressions.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueTree {
    pub root: Value,
    pub children: Vec<ValueTree>,
}

impl ValueTree {
    pub fn leaf(root: impl Into<Value>) -> Self {
        ValueTree {
            root: root.into(),
            children: Vec::new(),
        }
    }

    pub fn node(root: impl Into<Value>, children: Vec<ValueTree>) -> Self {
        ValueTree {
            root: root.into(),
            children,
        }
    }

    /// Subtree `i` (0-based).
    pub fn child(&self, i: usize) -> Option<&ValueTree> {
        self.children.get(i)
    }

    /// Total number of nodes.
    pub fn size(&self) -> usize {
        1 + self.children.iter().map(ValueTree::size).sum::<usize>()
    }

    /// Every node in pre-order.
    pub fn walk<'a>(&'a self, visit: &mut impl FnMut(&'a ValueTree)) {
        visit(self);
        for c in &self.children {
            c.walk(visit);
        }
    }
}

/// Trees last received from each neighbour, keyed by sender.
pub type ValueTreeEnv = BTreeMap<DeviceId, Arc<ValueTree>>;

/// Sensor readings of one device at one firing.
#[derive(Clone, Debug, PartialEq)]
pub struct SensorSnapshot {
    pub sns_num: f64,
    /// Seconds since this device's previous firing.
    pub interval: f64,
    /// Metres to each neighbour.
    pub nbr_range: BTreeMap<DeviceId, f64>,
    /// Age in seconds of each neighbour's last message.
    pub nbr_lag: BTreeMap<DeviceId, f64>,
    /// Named extras read by 0-ary calls such as `sns_temp()`.
    pub extras: BTreeMap<String, LocalValue>,
}

impl Default for SensorSnapshot {
    fn default() -> Self {
        SensorSnapshot {
            sns_num: 0.0,
            interval: 1.0,
            nbr_range: BTreeMap::new(),
            nbr_lag: BTreeMap::new(),
            extras: BTreeMap::new(),
        }
    }
}

impl SensorSnapshot {
    pub fn with_num(mut self, x: f64) -> Self {
        self.sns_num = x;
        self
    }

    pub fn with_extra(mut self, name: &str, v: impl Into<LocalValue>) -> Self {
        self.extras.insert(name.to_string(), v.into());
        self
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvalError {
    #[error("evaluation stuck: {0}")]
    Stuck(String),
    #[error("`{name}` expects {expected} arguments, got {found}")]
    Arity {
        name: String,
        expected: String,
        found: usize,
    },
    #[error("no builtin, function or sensor named `{0}`")]
    MissingBuiltin(String),
    #[error("`{0}` applied to an empty field")]
    EmptyField(String),
    #[error("`{0}` combines fields with disjoint domains")]
    DomainMismatch(String),
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("call depth exceeded {0}")]
    DepthExceeded(usize),
}

/// Which part of each neighbour's tree to keep.
#[derive(Clone, Debug, PartialEq)]
pub enum Selector {
    /// Subtree `i`, 0-based.
    Child(usize),
    /// Last subtree, kept only where the first subtree's root equals the value.
    Branch(LocalValue),
}

/// Projects every tree of `env`, dropping entries where the projection is undefined.
pub fn align(env: &ValueTreeEnv, selector: &Selector) -> ValueTreeEnv {
    env.iter()
        .filter_map(|(d, t)| project(t, selector).map(|s| (*d, Arc::new(s.clone()))))
        .collect()
}

pub(crate) fn project<'a>(t: &'a ValueTree, selector: &Selector) -> Option<&'a ValueTree> {
    match selector {
        Selector::Child(i) => t.children.get(*i),
        Selector::Branch(l) => {
            let guard = t.children.first()?;
            match &guard.root {
                Value::Local(g) if g == l && t.children.len() >= 2 => t.children.last(),
                _ => None,
            }
        }
    }
}

/// Evaluates `e` on device `self_id` with the standard builtins.
pub fn evaluate(
    self_id: DeviceId,
    env: &ValueTreeEnv,
    sensors: &SensorSnapshot,
    e: &Expr,
    program: &Program,
) -> Result<ValueTree, EvalError> {
    let builtins = BuiltinRegistry::standard();
    Evaluator::new(program, &builtins).eval_expr(self_id, env, sensors, e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env_of(items: Vec<(DeviceId, ValueTree)>) -> ValueTreeEnv {
        items.into_iter().map(|(d, t)| (d, Arc::new(t))).collect()
    }

    #[test]
    fn child_projection() {
        let t = ValueTree::node(LocalValue::num(5.0), vec![ValueTree::leaf(LocalValue::num(2.0)), ValueTree::leaf(LocalValue::num(3.0))]);
        let env = env_of(vec![(1, t)]);
        let first = align(&env, &Selector::Child(0));
        assert_eq!(*first[&1], ValueTree::leaf(LocalValue::num(2.0)));
        assert!(align(&env, &Selector::Child(2)).is_empty());
    }

    #[test]
    fn branch_projection() {
        let inner = ValueTree::leaf(LocalValue::num(7.0));
        let t = ValueTree::node(
            LocalValue::num(7.0),
            vec![ValueTree::leaf(LocalValue::Bool(true)), inner.clone()],
        );
        let env = env_of(vec![(4, t)]);
        let kept = align(&env, &Selector::Branch(LocalValue::Bool(true)));
        assert_eq!(*kept[&4], inner);
        assert!(align(&env, &Selector::Branch(LocalValue::Bool(false))).is_empty());
    }
}
