//! Local values, neighbouring field values and the orderings used by builtins.

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Numeric identifier of a device.
pub type DeviceId = u32;

/// A value held by one device: numbers, booleans, tuples and named constructors.
#[derive(Clone, Debug)]
pub enum LocalValue {
    Num(f64),
    Bool(bool),
    Tuple(Arc<[LocalValue]>),
    Cons(Arc<str>, Arc<[LocalValue]>),
}

/// Failure to order or combine two local values.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum ValueError {
    #[error("comparison involves NaN")]
    NaN,
    #[error("cannot compare {0} with {1}")]
    Incomparable(String, String),
}

impl LocalValue {
    pub fn num(x: f64) -> Self {
        LocalValue::Num(x)
    }

    pub fn tuple(items: Vec<LocalValue>) -> Self {
        LocalValue::Tuple(items.into())
    }

    pub fn pair(a: LocalValue, b: LocalValue) -> Self {
        LocalValue::tuple(vec![a, b])
    }

    pub fn as_num(&self) -> Option<f64> {
        match self {
            LocalValue::Num(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            LocalValue::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_tuple(&self) -> Option<&[LocalValue]> {
        match self {
            LocalValue::Tuple(items) => Some(items),
            _ => None,
        }
    }

    /// Short name of the value's shape, used in diagnostics.
    pub fn kind_name(&self) -> &'static str {
        match self {
            LocalValue::Num(_) => "number",
            LocalValue::Bool(_) => "boolean",
            LocalValue::Tuple(_) => "tuple",
            LocalValue::Cons(..) => "constructor",
        }
    }

    /// Total order used by comparisons, `min`, `max` and the hood reductions.
    ///
    /// Tuples compare lexicographically between equal arities. The numeric
    /// infinities double as top and bottom of every tuple kind, which is what
    /// an empty `minHood`/`maxHood` over tuples produces.
    pub fn try_cmp(&self, other: &LocalValue) -> Result<Ordering, ValueError> {
        use LocalValue::*;
        match (self, other) {
            (Num(a), Num(b)) => a.partial_cmp(b).ok_or(ValueError::NaN),
            (Bool(a), Bool(b)) => Ok(a.cmp(b)),
            (Tuple(a), Tuple(b)) if a.len() == b.len() => lex_cmp(a, b),
            (Cons(n, a), Cons(m, b)) if n == m && a.len() == b.len() => lex_cmp(a, b),
            (Num(a), Tuple(_) | Cons(..)) if a.is_infinite() => Ok(if *a > 0.0 {
                Ordering::Greater
            } else {
                Ordering::Less
            }),
            (Tuple(_) | Cons(..), Num(b)) if b.is_infinite() => Ok(if *b > 0.0 {
                Ordering::Less
            } else {
                Ordering::Greater
            }),
            _ => Err(ValueError::Incomparable(self.to_string(), other.to_string())),
        }
    }

    /// Equality as used by the `=` builtin: NaN anywhere is an error.
    pub fn try_eq(&self, other: &LocalValue) -> Result<bool, ValueError> {
        use LocalValue::*;
        match (self, other) {
            (Num(a), Num(b)) => {
                if a.is_nan() || b.is_nan() {
                    Err(ValueError::NaN)
                } else {
                    Ok(a == b)
                }
            }
            (Bool(a), Bool(b)) => Ok(a == b),
            (Tuple(a), Tuple(b)) => seq_eq(a, b),
            (Cons(n, a), Cons(m, b)) => {
                if n != m {
                    return Ok(false);
                }
                seq_eq(a, b)
            }
            (Num(a), _) | (_, Num(a)) if a.is_nan() => Err(ValueError::NaN),
            _ => Ok(false),
        }
    }

    /// Component `index` (0-based) of a tuple; infinities project to themselves.
    pub fn project(&self, index: usize) -> Option<LocalValue> {
        match self {
            LocalValue::Tuple(items) => items.get(index).cloned(),
            LocalValue::Num(x) if x.is_infinite() => Some(LocalValue::Num(*x)),
            _ => None,
        }
    }
}

fn lex_cmp(a: &[LocalValue], b: &[LocalValue]) -> Result<Ordering, ValueError> {
    for (x, y) in a.iter().zip(b.iter()) {
        match x.try_cmp(y)? {
            Ordering::Equal => continue,
            other => return Ok(other),
        }
    }
    Ok(Ordering::Equal)
}

fn seq_eq(a: &[LocalValue], b: &[LocalValue]) -> Result<bool, ValueError> {
    if a.len() != b.len() {
        return Ok(false);
    }
    let mut all = true;
    for (x, y) in a.iter().zip(b.iter()) {
        all &= x.try_eq(y)?;
    }
    Ok(all)
}

/// Structural identity: NaN equals NaN, so stored trees can be compared for stability.
impl PartialEq for LocalValue {
    fn eq(&self, other: &Self) -> bool {
        use LocalValue::*;
        match (self, other) {
            (Num(a), Num(b)) => a == b || (a.is_nan() && b.is_nan()),
            (Bool(a), Bool(b)) => a == b,
            (Tuple(a), Tuple(b)) => a == b,
            (Cons(n, a), Cons(m, b)) => n == m && a == b,
            _ => false,
        }
    }
}

impl From<f64> for LocalValue {
    fn from(x: f64) -> Self {
        LocalValue::Num(x)
    }
}

impl From<bool> for LocalValue {
    fn from(b: bool) -> Self {
        LocalValue::Bool(b)
    }
}

/// Canonical text for a number: integers print without a fraction, infinities as `infinity`.
pub fn format_number(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x == f64::INFINITY {
        "infinity".to_string()
    } else if x == f64::NEG_INFINITY {
        "-infinity".to_string()
    } else {
        format!("{x}")
    }
}

impl fmt::Display for LocalValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LocalValue::Num(x) => f.write_str(&format_number(*x)),
            LocalValue::Bool(b) => write!(f, "{b}"),
            LocalValue::Tuple(items) => {
                f.write_str("(")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{item}")?;
                }
                if items.len() == 1 {
                    f.write_str(",")?;
                }
                f.write_str(")")
            }
            LocalValue::Cons(name, items) => {
                write!(f, "{name}(")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{item}")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// How device identifiers are spelled in the value-tree notation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DeviceNaming {
    /// `δ1`, `δ2`, ...
    #[default]
    Numeric,
    /// `δA` for 1, `δB` for 2, ..., `δZ`, `δAA`, ... (bijective base 26).
    Alpha,
}

impl DeviceNaming {
    pub fn name(self, id: DeviceId) -> String {
        match self {
            DeviceNaming::Numeric => format!("δ{id}"),
            DeviceNaming::Alpha => {
                if id == 0 {
                    return "δ0".to_string();
                }
                let mut n = id;
                let mut letters = Vec::new();
                while n > 0 {
                    let rem = (n - 1) % 26;
                    letters.push((b'A' + rem as u8) as char);
                    n = (n - 1) / 26;
                }
                letters.reverse();
                format!("δ{}", letters.into_iter().collect::<String>())
            }
        }
    }

    /// Parses the part after `δ`: digits or uppercase letters.
    pub fn parse_label(label: &str) -> Option<(DeviceId, DeviceNaming)> {
        if !label.is_empty() && label.bytes().all(|b| b.is_ascii_digit()) {
            return label.parse().ok().map(|id| (id, DeviceNaming::Numeric));
        }
        if !label.is_empty() && label.bytes().all(|b| b.is_ascii_uppercase()) {
            let mut id: u64 = 0;
            for b in label.bytes() {
                id = id * 26 + u64::from(b - b'A' + 1);
                if id > u64::from(DeviceId::MAX) {
                    return None;
                }
            }
            return Some((id as DeviceId, DeviceNaming::Alpha));
        }
        None
    }
}

/// Map from devices to local values, kept sorted by device.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NeighbouringField {
    entries: Vec<(DeviceId, LocalValue)>,
}

impl NeighbouringField {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a field from arbitrary pairs; later duplicates win.
    pub fn from_entries<I: IntoIterator<Item = (DeviceId, LocalValue)>>(items: I) -> Self {
        let mut field = NeighbouringField::new();
        for (d, v) in items {
            field.insert(d, v);
        }
        field
    }

    /// Builds a field from pairs already sorted by strictly increasing device.
    pub(crate) fn from_sorted(entries: Vec<(DeviceId, LocalValue)>) -> Self {
        debug_assert!(entries.windows(2).all(|w| w[0].0 < w[1].0));
        NeighbouringField { entries }
    }

    pub fn insert(&mut self, device: DeviceId, value: LocalValue) {
        match self.entries.binary_search_by_key(&device, |e| e.0) {
            Ok(i) => self.entries[i].1 = value,
            Err(i) => self.entries.insert(i, (device, value)),
        }
    }

    pub fn get(&self, device: DeviceId) -> Option<&LocalValue> {
        self.entries
            .binary_search_by_key(&device, |e| e.0)
            .ok()
            .map(|i| &self.entries[i].1)
    }

    pub fn contains(&self, device: DeviceId) -> bool {
        self.get(device).is_some()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (DeviceId, &LocalValue)> {
        self.entries.iter().map(|(d, v)| (*d, v))
    }

    pub fn domain(&self) -> impl Iterator<Item = DeviceId> + '_ {
        self.entries.iter().map(|e| e.0)
    }

    /// Entries other than `self_id`.
    pub fn without(&self, self_id: DeviceId) -> impl Iterator<Item = (DeviceId, &LocalValue)> {
        self.iter().filter(move |(d, _)| *d != self_id)
    }

    /// Keeps only entries whose device satisfies `keep`.
    pub fn restrict(&self, mut keep: impl FnMut(DeviceId) -> bool) -> NeighbouringField {
        NeighbouringField {
            entries: self.entries.iter().filter(|(d, _)| keep(*d)).cloned().collect(),
        }
    }

    pub fn display_with(&self, naming: DeviceNaming) -> String {
        if self.entries.is_empty() {
            return "∅".to_string();
        }
        let body: Vec<String> = self
            .entries
            .iter()
            .map(|(d, v)| format!("{}↦{}", naming.name(*d), v))
            .collect();
        format!("({})", body.join(", "))
    }
}

impl fmt::Display for NeighbouringField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.display_with(DeviceNaming::Numeric))
    }
}

/// Either a local value or a neighbouring field value.
#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Local(LocalValue),
    Field(NeighbouringField),
}

impl Value {
    pub fn as_local(&self) -> Option<&LocalValue> {
        match self {
            Value::Local(v) => Some(v),
            Value::Field(_) => None,
        }
    }

    pub fn as_field(&self) -> Option<&NeighbouringField> {
        match self {
            Value::Field(f) => Some(f),
            Value::Local(_) => None,
        }
    }

    pub fn is_field(&self) -> bool {
        matches!(self, Value::Field(_))
    }

    pub fn display_with(&self, naming: DeviceNaming) -> String {
        match self {
            Value::Local(v) => v.to_string(),
            Value::Field(f) => f.display_with(naming),
        }
    }
}

impl From<LocalValue> for Value {
    fn from(v: LocalValue) -> Self {
        Value::Local(v)
    }
}

impl From<NeighbouringField> for Value {
    fn from(f: NeighbouringField) -> Self {
        Value::Field(f)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.display_with(DeviceNaming::Numeric))
    }
}
