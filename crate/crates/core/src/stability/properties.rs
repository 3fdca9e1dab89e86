//! Randomised checking of converging, monotonic, progressive and raising annotations.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::registry::{OrderSpec, Property, PropertyAnnotation};
use super::StabilityError;
use crate::eval::{Evaluator, SensorSnapshot, ValueTreeEnv};
use crate::lang::Expr;
use crate::value::{DeviceId, LocalValue, NeighbouringField, Value};

/// Identity of the device a sample is evaluated on; neighbours take other ids.
pub const SELF: DeviceId = 0;

#[derive(Clone, Debug, PartialEq)]
pub struct NeighbourSample {
    pub id: DeviceId,
    /// Metres from the sampled device.
    pub range: f64,
    /// The neighbour's own arguments, for functions that look at neighbours.
    pub args: Vec<LocalValue>,
}

/// One input to a property check: the sampled device's arguments plus an optional neighbourhood.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub args: Vec<LocalValue>,
    pub neighbours: Vec<NeighbourSample>,
}

impl Sample {
    pub fn local(args: Vec<LocalValue>) -> Sample {
        Sample {
            args,
            neighbours: Vec::new(),
        }
    }

    /// Argument `i` across the neighbourhood, the sampled device included.
    pub fn field(&self, i: usize) -> NeighbouringField {
        let mut f = NeighbouringField::from_entries(
            self.neighbours
                .iter()
                .filter_map(|n| n.args.get(i).map(|v| (n.id, v.clone()))),
        );
        if let Some(v) = self.args.get(i) {
            f.insert(SELF, v.clone());
        }
        f
    }
}

/// The function under test.
pub type Subject<'a> = dyn Fn(&Sample) -> Result<LocalValue, String> + 'a;

/// Input generator; `None` rejects a draw.
pub type Sampler<'a> = dyn FnMut(&mut ChaCha8Rng) -> Option<Sample> + 'a;

/// Which part of a property's definition failed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Clause {
    Converging,
    Monotonic,
    Progressive,
    /// f(ℓ, ℓ) = ℓ
    RaisingFixpoint,
    /// f(ℓ₁, ℓ₂) ≥ min(ℓ₁, ℓ₂)
    RaisingLowerBound,
    /// f(ℓ₁, ℓ₂) ⊳ ℓ₂ or f(ℓ₁, ℓ₂) = ℓ₁
    RaisingProgress,
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Clause::Converging => "result no closer to the target than the inputs",
            Clause::Monotonic => "order of inputs not preserved",
            Clause::Progressive => "result not above its input",
            Clause::RaisingFixpoint => "f(l, l) differs from l",
            Clause::RaisingLowerBound => "result below both inputs",
            Clause::RaisingProgress => "result neither above the old value nor equal to the new one",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub clause: Clause,
    /// The values the clause was about: ℓ₁, ℓ₂ for M and R, ℓ for P, the sampled arguments for C.
    pub inputs: Vec<LocalValue>,
    pub outputs: Vec<LocalValue>,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let show = |vs: &[LocalValue]| vs.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ");
        write!(f, "{}: inputs ({}) gave ({})", self.clause, show(&self.inputs), show(&self.outputs))
    }
}

/// Result of a validation run; keeps the first witness of every violated clause.
#[derive(Clone, Debug, PartialEq)]
pub struct PropertyOutcome {
    pub trials: usize,
    pub violations: Vec<Violation>,
}

impl PropertyOutcome {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violates(&self, clause: Clause) -> bool {
        self.witness(clause).is_some()
    }

    pub fn witness(&self, clause: Clause) -> Option<&Violation> {
        self.violations.iter().find(|v| v.clause == clause)
    }

    fn record(&mut self, v: Violation) {
        if !self.violates(v.clause) {
            self.violations.push(v);
        }
    }
}

/// Consecutive rejected draws tolerated before giving up.
const MAX_REJECTIONS: usize = 1000;

/// Evaluates the definition of `ann.property` on `trials` sampled inputs.
pub fn validate_property(
    subject: &Subject<'_>,
    ann: &PropertyAnnotation,
    sampler: &mut Sampler<'_>,
    trials: usize,
    seed: u64,
) -> Result<PropertyOutcome, StabilityError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |rng: &mut ChaCha8Rng| -> Result<Sample, StabilityError> {
        for _ in 0..MAX_REJECTIONS {
            if let Some(s) = sampler(rng) {
                return Ok(s);
            }
        }
        Err(StabilityError::SamplerExhausted(ann.function.clone()))
    };
    let call = |s: &Sample| subject(s).map_err(|m| StabilityError::Subject(ann.function.clone(), m));
    let arg = |s: &Sample, k: usize| -> Result<LocalValue, StabilityError> {
        s.args.get(k).cloned().ok_or_else(|| {
            StabilityError::Subject(ann.function.clone(), format!("sample has no argument {k}"))
        })
    };
    let mut out = PropertyOutcome {
        trials,
        violations: Vec::new(),
    };
    for _ in 0..trials {
        let s = draw(&mut rng)?;
        match ann.property {
            Property::Converging => {
                let (phi, psi) = (ann.args[0], ann.args[1]);
                let result = call(&s)?;
                if !converges(ann.order(), &s, phi, psi, &result) {
                    out.record(Violation {
                        clause: Clause::Converging,
                        inputs: s.args.clone(),
                        outputs: vec![result],
                    });
                }
            }
            Property::Monotonic => {
                let k = ann.args[0];
                let other = draw(&mut rng)?;
                let (a, b) = (arg(&s, k)?, arg(&other, k)?);
                let (lo, hi) = match ann.order().cmp(&a, &b) {
                    Some(std::cmp::Ordering::Greater) => (b, a),
                    Some(_) => (a, b),
                    None => continue,
                };
                let mut s_lo = s.clone();
                s_lo.args[k] = lo.clone();
                let mut s_hi = s;
                s_hi.args[k] = hi.clone();
                let (f_lo, f_hi) = (call(&s_lo)?, call(&s_hi)?);
                let ok = matches!(
                    ann.order().cmp(&f_lo, &f_hi),
                    Some(std::cmp::Ordering::Less | std::cmp::Ordering::Equal)
                );
                if !ok {
                    out.record(Violation {
                        clause: Clause::Monotonic,
                        inputs: vec![lo, hi],
                        outputs: vec![f_lo, f_hi],
                    });
                }
            }
            Property::Progressive => {
                let l = arg(&s, ann.args[0])?;
                let result = call(&s)?;
                let ok = is_top(&result)
                    || ann.order().cmp(&result, &l) == Some(std::cmp::Ordering::Greater);
                if !ok {
                    out.record(Violation {
                        clause: Clause::Progressive,
                        inputs: vec![l],
                        outputs: vec![result],
                    });
                }
            }
            Property::Raising => {
                let (i, j) = (ann.args[0], ann.args[1]);
                let (l1, l2) = (arg(&s, i)?, arg(&s, j)?);
                let mut same = s.clone();
                same.args[j] = l1.clone();
                let fixed = call(&same)?;
                if fixed != l1 {
                    out.record(Violation {
                        clause: Clause::RaisingFixpoint,
                        inputs: vec![l1.clone(), l1.clone()],
                        outputs: vec![fixed],
                    });
                }
                let result = call(&s)?;
                let base = ann.order();
                let lower = match base.cmp(&l1, &l2) {
                    Some(std::cmp::Ordering::Greater) => Some(&l2),
                    Some(_) => Some(&l1),
                    None => None,
                };
                let above_min = lower.is_some_and(|m| {
                    matches!(
                        base.cmp(&result, m),
                        Some(std::cmp::Ordering::Greater | std::cmp::Ordering::Equal)
                    )
                });
                if !above_min {
                    out.record(Violation {
                        clause: Clause::RaisingLowerBound,
                        inputs: vec![l1.clone(), l2.clone()],
                        outputs: vec![result.clone()],
                    });
                }
                let progress = result == l1
                    || ann.raising_order().cmp(&result, &l2) == Some(std::cmp::Ordering::Greater);
                if !progress {
                    out.record(Violation {
                        clause: Clause::RaisingProgress,
                        inputs: vec![l1, l2],
                        outputs: vec![result],
                    });
                }
            }
        }
    }
    Ok(out)
}

fn converges(order: OrderSpec, s: &Sample, phi: usize, psi: usize, result: &LocalValue) -> bool {
    let (Some(target), Some(_)) = (s.args.get(psi), s.args.get(phi)) else {
        return false;
    };
    let Some(d) = order.distance(result, target) else {
        return false;
    };
    if d == 0.0 {
        return true;
    }
    let (phis, psis) = (s.field(phi), s.field(psi));
    let mut worst = f64::NEG_INFINITY;
    for (id, p) in phis.iter() {
        let Some(q) = psis.get(id) else { continue };
        match order.distance(p, q) {
            Some(x) => worst = worst.max(x),
            None => return false,
        }
    }
    d < worst
}

/// The greatest value of a kind: +∞, or a tuple of greatest values.
pub fn is_top(v: &LocalValue) -> bool {
    match v {
        LocalValue::Num(x) => *x == f64::INFINITY,
        LocalValue::Bool(b) => *b,
        LocalValue::Tuple(items) => items.iter().all(is_top),
        LocalValue::Cons(..) => false,
    }
}

/// A subject given as a Rust function of the sampled device's arguments.
pub fn local_subject<'a>(f: impl Fn(&[LocalValue]) -> LocalValue + 'a) -> Box<Subject<'a>> {
    Box::new(move |s: &Sample| Ok(f(&s.args)))
}

/// A program function or builtin applied to the sampled arguments, with no neighbours.
///
/// A field result, as produced by sensors such as `nbrRange()`, is read at the device itself.
pub fn program_subject<'a>(ev: Evaluator<'a>, name: &str) -> Box<Subject<'a>> {
    let name = name.to_string();
    Box::new(move |s: &Sample| {
        let args: Vec<Value> = s.args.iter().cloned().map(Value::Local).collect();
        let v = ev
            .apply(SELF, &SensorSnapshot::default(), &name, &args)
            .map_err(|e| e.to_string())?;
        read_at_self(v)
    })
}

/// Evaluates `template` on every sampled neighbour and then on the sampled device,
/// so `nbr` expressions inside the function see the neighbours' arguments.
///
/// Variable `params[k]` of the template stands for argument `k`.
pub fn neighbourhood_subject<'a>(ev: Evaluator<'a>, template: Expr, params: Vec<String>) -> Box<Subject<'a>> {
    Box::new(move |s: &Sample| {
        let instantiate = |args: &[LocalValue]| -> Result<Expr, String> {
            if args.len() != params.len() {
                return Err(format!("expected {} arguments, sampled {}", params.len(), args.len()));
            }
            let mut e = template.clone();
            for (p, v) in params.iter().zip(args) {
                e = e.substitute(p, &Expr::Lit(v.clone()));
            }
            Ok(e)
        };
        let mut env = ValueTreeEnv::new();
        let mut sensors = SensorSnapshot::default();
        for n in &s.neighbours {
            let mut own = SensorSnapshot::default();
            own.nbr_range.insert(n.id, 0.0);
            let t = ev
                .eval_expr(n.id, &BTreeMap::new(), &own, &instantiate(&n.args)?)
                .map_err(|e| e.to_string())?;
            env.insert(n.id, Arc::new(t));
            sensors.nbr_range.insert(n.id, n.range);
            sensors.nbr_lag.insert(n.id, 0.0);
        }
        let t = ev
            .eval_expr(SELF, &env, &sensors, &instantiate(&s.args)?)
            .map_err(|e| e.to_string())?;
        read_at_self(t.root)
    })
}

fn read_at_self(v: Value) -> Result<LocalValue, String> {
    match v {
        Value::Local(l) => Ok(l),
        Value::Field(f) => f
            .get(SELF)
            .cloned()
            .ok_or_else(|| "field result without an entry for the device".to_string()),
    }
}

/// Uniform numbers in `[lo, hi)`.
pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    use rand::Rng;
    rng.gen_range(lo..hi)
}

/// Neighbours with ids 1..=n at uniform ranges in `(0, max_range]`, each with arguments from `args`.
pub fn neighbourhood(
    rng: &mut ChaCha8Rng,
    n: usize,
    max_range: f64,
    mut args: impl FnMut(&mut ChaCha8Rng) -> Vec<LocalValue>,
) -> Vec<NeighbourSample> {
    (1..=n as DeviceId)
        .map(|id| {
            let range = max_range - uniform(rng, 0.0, max_range);
            NeighbourSample {
                id,
                range,
                args: args(rng),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n(x: f64) -> LocalValue {
        LocalValue::num(x)
    }

    fn numbers(k: usize) -> impl FnMut(&mut ChaCha8Rng) -> Option<Sample> {
        move |rng| Some(Sample::local((0..k).map(|_| n(uniform(rng, -10.0, 10.0).round())).collect()))
    }

    #[test]
    fn square_is_not_monotonic() {
        let ann = PropertyAnnotation::new("sq", Property::Monotonic, &[0], OrderSpec::Numeric);
        let sq = local_subject(|a| n(a[0].as_num().unwrap().powi(2)));
        let out = validate_property(&*sq, &ann, &mut numbers(1), 200, 1).unwrap();
        let w = out.witness(Clause::Monotonic).unwrap();
        let (lo, hi) = (w.inputs[0].as_num().unwrap(), w.inputs[1].as_num().unwrap());
        assert!(lo <= hi && lo * lo > hi * hi);
    }

    #[test]
    fn increment_is_progressive() {
        let ann = PropertyAnnotation::new("inc", Property::Progressive, &[0], OrderSpec::Numeric);
        let inc = local_subject(|a| n(a[0].as_num().unwrap() + 1.0));
        assert!(validate_property(&*inc, &ann, &mut numbers(1), 200, 1).unwrap().passed());
    }

    #[test]
    fn rejecting_sampler_is_reported() {
        let ann = PropertyAnnotation::new("inc", Property::Progressive, &[0], OrderSpec::Numeric);
        let inc = local_subject(|a| a[0].clone());
        let mut never = |_: &mut ChaCha8Rng| None;
        assert!(matches!(
            validate_property(&*inc, &ann, &mut never, 10, 1),
            Err(StabilityError::SamplerExhausted(_))
        ));
    }

    #[test]
    fn fields_include_the_sampled_device() {
        let s = Sample {
            args: vec![n(1.0)],
            neighbours: vec![NeighbourSample {
                id: 4,
                range: 2.0,
                args: vec![n(7.0)],
            }],
        };
        assert_eq!(s.field(0), NeighbouringField::from_entries([(0, n(1.0)), (4, n(7.0))]));
    }

    #[test]
    fn tops() {
        assert!(is_top(&n(f64::INFINITY)));
        assert!(!is_top(&LocalValue::pair(n(f64::INFINITY), n(0.0))));
        assert!(is_top(&LocalValue::pair(n(f64::INFINITY), n(f64::INFINITY))));
    }
}
