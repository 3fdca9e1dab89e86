//! Declared function properties, one per line:
//!
//! ```text
//! property fmp M args=0 order=lex
//! property flex_raise R args=0,1 order=component:0,component:1
//! ```
//!
//! Blank lines and lines starting with `#` are ignored.

use std::cmp::Ordering;
use std::fmt;

use super::StabilityError;
use crate::value::LocalValue;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Property {
    Converging,
    Monotonic,
    Progressive,
    Raising,
}

impl Property {
    pub fn letter(self) -> char {
        match self {
            Property::Converging => 'C',
            Property::Monotonic => 'M',
            Property::Progressive => 'P',
            Property::Raising => 'R',
        }
    }

    pub fn from_letter(c: &str) -> Option<Property> {
        Some(match c {
            "C" => Property::Converging,
            "M" => Property::Monotonic,
            "P" => Property::Progressive,
            "R" => Property::Raising,
            _ => return None,
        })
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Property::Converging => "converging",
            Property::Monotonic => "monotonic",
            Property::Progressive => "progressive",
            Property::Raising => "raising",
        };
        f.write_str(name)
    }
}

/// An order on local values, or the metric derived from it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OrderSpec {
    Numeric,
    Lex,
    /// Compares component `i` of tuples only.
    Component(usize),
}

impl OrderSpec {
    fn parse(s: &str) -> Option<OrderSpec> {
        match s {
            "numeric" => Some(OrderSpec::Numeric),
            "lex" => Some(OrderSpec::Lex),
            _ => s.strip_prefix("component:")?.parse().ok().map(OrderSpec::Component),
        }
    }

    /// `None` when the values are not comparable under this order.
    pub fn cmp(self, a: &LocalValue, b: &LocalValue) -> Option<Ordering> {
        match self {
            OrderSpec::Numeric => match (a, b) {
                (LocalValue::Num(x), LocalValue::Num(y)) => x.partial_cmp(y),
                _ => None,
            },
            OrderSpec::Lex => a.try_cmp(b).ok(),
            OrderSpec::Component(i) => a.project(i)?.try_cmp(&b.project(i)?).ok(),
        }
    }

    /// Distance between two values: absolute difference, summed over numeric
    /// leaves for tuples. Booleans count as 0 and 1; equal values are at distance 0.
    pub fn distance(self, a: &LocalValue, b: &LocalValue) -> Option<f64> {
        if a == b {
            return Some(0.0);
        }
        match self {
            OrderSpec::Numeric => Some((a.as_num()? - b.as_num()?).abs()),
            OrderSpec::Lex => leaf_distance(a, b),
            OrderSpec::Component(i) => leaf_distance(&a.project(i)?, &b.project(i)?),
        }
    }
}

fn leaf_distance(a: &LocalValue, b: &LocalValue) -> Option<f64> {
    use LocalValue::*;
    match (a, b) {
        (Num(x), Num(y)) => Some(if x == y { 0.0 } else { (x - y).abs() }),
        (Bool(x), Bool(y)) => Some(if x == y { 0.0 } else { 1.0 }),
        (Tuple(xs), Tuple(ys)) if xs.len() == ys.len() => {
            xs.iter().zip(ys.iter()).map(|(x, y)| leaf_distance(x, y)).sum()
        }
        _ => None,
    }
}

impl fmt::Display for OrderSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OrderSpec::Numeric => f.write_str("numeric"),
            OrderSpec::Lex => f.write_str("lex"),
            OrderSpec::Component(i) => write!(f, "component:{i}"),
        }
    }
}

/// A declared property of a named function.
///
/// `args` names the arguments the property speaks about: the first argument
/// for M and P, (φ, ψ) for C, (ℓ₁, ℓ₂) for R. `orders` holds one order, or two
/// for R when the raising order differs from the base order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PropertyAnnotation {
    pub function: String,
    pub property: Property,
    pub args: Vec<usize>,
    pub orders: Vec<OrderSpec>,
}

impl PropertyAnnotation {
    pub fn new(function: &str, property: Property, args: &[usize], order: OrderSpec) -> Self {
        PropertyAnnotation {
            function: function.to_string(),
            property,
            args: args.to_vec(),
            orders: vec![order],
        }
    }

    pub fn parse_line(line: &str) -> Result<PropertyAnnotation, StabilityError> {
        let bad = |m: &str| StabilityError::Registry(format!("{m}: `{line}`"));
        let words: Vec<&str> = line.split_whitespace().collect();
        if words.len() != 5 || words[0] != "property" {
            return Err(bad("expected `property <name> <C|M|P|R> args=<i,j> order=<spec>`"));
        }
        let property = Property::from_letter(words[2]).ok_or_else(|| bad("unknown property letter"))?;
        let args = words[3]
            .strip_prefix("args=")
            .ok_or_else(|| bad("missing args="))?
            .split(',')
            .map(|a| a.parse::<usize>().map_err(|_| bad("argument indices must be integers")))
            .collect::<Result<Vec<_>, _>>()?;
        let orders = words[4]
            .strip_prefix("order=")
            .ok_or_else(|| bad("missing order="))?
            .split(',')
            .map(|o| OrderSpec::parse(o).ok_or_else(|| bad("unknown order")))
            .collect::<Result<Vec<_>, _>>()?;
        let expected = match property {
            Property::Monotonic | Property::Progressive => 1,
            Property::Converging | Property::Raising => 2,
        };
        if args.len() != expected {
            return Err(bad("wrong number of argument indices for the property"));
        }
        if orders.is_empty() || orders.len() > 2 || (orders.len() == 2 && property != Property::Raising) {
            return Err(bad("only raising takes a second order"));
        }
        Ok(PropertyAnnotation {
            function: words[1].to_string(),
            property,
            args,
            orders,
        })
    }

    /// Base order (≤).
    pub fn order(&self) -> OrderSpec {
        self.orders[0]
    }

    /// Raising order (⊲); the base order when only one is given.
    pub fn raising_order(&self) -> OrderSpec {
        *self.orders.last().expect("at least one order")
    }
}

impl fmt::Display for PropertyAnnotation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let args: Vec<String> = self.args.iter().map(usize::to_string).collect();
        let orders: Vec<String> = self.orders.iter().map(OrderSpec::to_string).collect();
        write!(
            f,
            "property {} {} args={} order={}",
            self.function,
            self.property.letter(),
            args.join(","),
            orders.join(",")
        )
    }
}

/// A set of annotations looked up by function name.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Registry {
    entries: Vec<PropertyAnnotation>,
}

impl Registry {
    pub fn new() -> Self {
        Registry::default()
    }

    pub fn parse(text: &str) -> Result<Registry, StabilityError> {
        let mut r = Registry::new();
        for line in text.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            r.insert(PropertyAnnotation::parse_line(line)?);
        }
        Ok(r)
    }

    pub fn insert(&mut self, a: PropertyAnnotation) {
        if !self.entries.contains(&a) {
            self.entries.push(a);
        }
    }

    pub fn extend(&mut self, other: &Registry) {
        for a in &other.entries {
            self.insert(a.clone());
        }
    }

    pub fn entries(&self) -> &[PropertyAnnotation] {
        &self.entries
    }

    /// Annotation for `function`, falling back to the name before the first `__`
    /// so a property declared for an extended function covers its instances.
    pub fn lookup(&self, function: &str, property: Property) -> Option<&PropertyAnnotation> {
        let find = |name: &str| {
            self.entries
                .iter()
                .find(|a| a.function == name && a.property == property)
        };
        find(function).or_else(|| function.split_once("__").and_then(|(base, _)| find(base)))
    }
}

impl fmt::Display for Registry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for a in &self.entries {
            writeln!(f, "{a}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lines_round_trip() {
        for line in [
            "property fmp M args=0 order=lex",
            "property fc C args=0,1 order=numeric",
            "property flex_raise R args=0,1 order=component:0,component:1",
        ] {
            assert_eq!(PropertyAnnotation::parse_line(line).unwrap().to_string(), line);
        }
    }

    #[test]
    fn malformed_lines_are_rejected() {
        for line in [
            "property fmp X args=0 order=lex",
            "property fmp M args=0,1 order=lex",
            "property fmp M args=a order=lex",
            "property fmp M args=0 order=partial",
            "property fmp M args=0 order=lex,lex",
            "prop fmp M args=0 order=lex",
        ] {
            assert!(PropertyAnnotation::parse_line(line).is_err(), "{line}");
        }
    }

    #[test]
    fn instance_names_fall_back_to_their_base() {
        let r = Registry::parse("# gradient\nproperty fmp M args=0 order=lex\n\nproperty fmp__identity P args=0 order=lex").unwrap();
        assert!(r.lookup("fmp__addRange", Property::Monotonic).is_some());
        assert!(r.lookup("fmp__addRange", Property::Progressive).is_none());
        assert!(r.lookup("fmp__identity", Property::Progressive).is_some());
        assert!(r.lookup("other", Property::Monotonic).is_none());
    }

    #[test]
    fn distances() {
        let p = |a: f64, b: f64| LocalValue::pair(a.into(), b.into());
        assert_eq!(OrderSpec::Lex.distance(&p(1.0, 2.0), &p(4.0, 0.0)), Some(5.0));
        assert_eq!(OrderSpec::Component(1).distance(&p(1.0, 2.0), &p(4.0, 0.0)), Some(2.0));
        let inf = LocalValue::num(f64::INFINITY);
        assert_eq!(OrderSpec::Numeric.distance(&inf, &inf), Some(0.0));
        assert_eq!(OrderSpec::Numeric.cmp(&p(1.0, 2.0), &inf), None);
    }
}
