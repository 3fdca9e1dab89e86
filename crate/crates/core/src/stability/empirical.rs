//! Empirical self-stabilisation: many runs from scrambled states and schedules must settle to one field.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::StabilityError;
use crate::eval::{BuiltinRegistry, ValueTree};
use crate::lang::{expand_functional_params, Program};
use crate::net::{Jitter, Placement, Scenario, Simulator};
use crate::value::{DeviceId, LocalValue, Value};

/// Absolute tolerance when comparing numbers across runs.
pub const FLOAT_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct SelfStabOptions {
    pub n_inits: usize,
    pub n_schedules: usize,
    /// Rounds allowed after the environment freezes.
    pub max_rounds: usize,
    /// Forces every number in this device's scrambled state to the given value.
    pub spurious: Option<(DeviceId, f64)>,
    /// Largest difference between numbers still counted as equal.
    pub tolerance: f64,
}

impl SelfStabOptions {
    pub fn new(n_inits: usize, n_schedules: usize, max_rounds: usize) -> Self {
        SelfStabOptions {
            n_inits,
            n_schedules,
            max_rounds,
            spurious: None,
            tolerance: FLOAT_TOLERANCE,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilisationVerdict {
    /// Every run reached a stable configuration within the round budget.
    pub stabilised: bool,
    /// Worst case over runs, counted from the last environment change.
    pub rounds_to_stable: usize,
    /// Outcome of the first run.
    pub stable_field: BTreeMap<DeviceId, LocalValue>,
    pub agreement_across_runs: bool,
    pub runs: usize,
}

impl StabilisationVerdict {
    pub fn self_stabilising(&self) -> bool {
        self.stabilised && self.agreement_across_runs
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EquivalenceVerdict {
    pub equivalent: bool,
    pub left: StabilisationVerdict,
    pub right: StabilisationVerdict,
}

struct RunOutcome {
    stabilised: bool,
    rounds: usize,
    field: BTreeMap<DeviceId, LocalValue>,
}

/// Runs `n_inits × n_schedules` simulations and compares where they settle.
///
/// Init 0 starts from the empty configuration; the others overwrite every number,
/// boolean and tuple in each device's first tree with random values of the same kind.
/// Schedule 0 keeps the scenario's periods. The others give every device one common
/// period, drawn in `[0.5, 1.5]` times the base period, and fresh random phases, so
/// `nbrLag()` and `sns_interval()` stay fixed once the environment freezes.
pub fn empirical_selfstab(
    p: &Program,
    scenario: &Scenario,
    n_inits: usize,
    n_schedules: usize,
    max_rounds: usize,
) -> Result<StabilisationVerdict, StabilityError> {
    empirical_selfstab_with(p, scenario, &SelfStabOptions::new(n_inits, n_schedules, max_rounds))
}

pub fn empirical_selfstab_with(
    p: &Program,
    scenario: &Scenario,
    opts: &SelfStabOptions,
) -> Result<StabilisationVerdict, StabilityError> {
    let p = expand_functional_params(p)?;
    let base = pinned(scenario, &p)?;
    let jobs: Vec<(usize, usize)> = (0..opts.n_inits.max(1))
        .flat_map(|i| (0..opts.n_schedules.max(1)).map(move |s| (i, s)))
        .collect();
    let outcomes: Vec<RunOutcome> = jobs
        .par_iter()
        .map(|&(init, schedule)| run_once(&p, &base, init, schedule, opts))
        .collect::<Result<_, _>>()?;
    let first = &outcomes[0];
    Ok(StabilisationVerdict {
        stabilised: outcomes.iter().all(|o| o.stabilised),
        rounds_to_stable: outcomes.iter().map(|o| o.rounds).max().unwrap_or(0),
        stable_field: first.field.clone(),
        agreement_across_runs: outcomes.iter().all(|o| fields_agree(&o.field, &first.field, opts.tolerance)),
        runs: outcomes.len(),
    })
}

/// Both programs settle, and to the same field, on the scenario.
pub fn eventual_equivalence(a: &Program, b: &Program, scenario: &Scenario) -> Result<EquivalenceVerdict, StabilityError> {
    let opts = SelfStabOptions::new(2, 2, 400);
    let left = empirical_selfstab_with(a, scenario, &opts)?;
    let right = empirical_selfstab_with(b, scenario, &opts)?;
    let equivalent = left.self_stabilising()
        && right.self_stabilising()
        && fields_agree(&left.stable_field, &right.stable_field, FLOAT_TOLERANCE);
    Ok(EquivalenceVerdict {
        equivalent,
        left,
        right,
    })
}

pub fn fields_agree(a: &BTreeMap<DeviceId, LocalValue>, b: &BTreeMap<DeviceId, LocalValue>, tol: f64) -> bool {
    a.len() == b.len() && a.iter().all(|(d, v)| b.get(d).is_some_and(|w| values_close(v, w, tol)))
}

fn values_close(a: &LocalValue, b: &LocalValue, tol: f64) -> bool {
    match (a, b) {
        (LocalValue::Num(x), LocalValue::Num(y)) => x == y || (x - y).abs() <= tol || (x.is_nan() && y.is_nan()),
        (LocalValue::Tuple(xs), LocalValue::Tuple(ys)) => {
            xs.len() == ys.len() && xs.iter().zip(ys.iter()).all(|(x, y)| values_close(x, y, tol))
        }
        _ => a == b,
    }
}

fn trees_close(a: &ValueTree, b: &ValueTree, tol: f64) -> bool {
    let roots = match (&a.root, &b.root) {
        (Value::Local(x), Value::Local(y)) => values_close(x, y, tol),
        (Value::Field(x), Value::Field(y)) => {
            x.len() == y.len()
                && x.iter().zip(y.iter()).all(|((d, v), (e, w))| d == e && values_close(v, w, tol))
        }
        _ => false,
    };
    roots && a.children.len() == b.children.len() && a.children.iter().zip(&b.children).all(|(x, y)| trees_close(x, y, tol))
}

/// The scenario with positions fixed and an open-ended duration.
fn pinned(scenario: &Scenario, p: &Program) -> Result<Scenario, StabilityError> {
    let builtins = BuiltinRegistry::standard();
    let probe = Simulator::new(scenario, p, &builtins)?;
    let mut s = scenario.clone();
    s.devices.placement = Placement::Explicit;
    s.devices.positions = probe.positions().into_values().collect();
    s.duration = f64::MAX;
    Ok(s)
}

fn run_once(
    p: &Program,
    base: &Scenario,
    init: usize,
    schedule: usize,
    opts: &SelfStabOptions,
) -> Result<RunOutcome, StabilityError> {
    let mut sc = base.clone();
    if schedule > 0 {
        sc.seed = base.seed.wrapping_add(1000 * schedule as u64);
        let mut pick = ChaCha8Rng::seed_from_u64(sc.seed);
        sc.schedule.base_period = base.schedule.base_period * pick.gen_range(0.5..1.5);
        sc.schedule.jitter = Jitter::Fixed;
    }
    let builtins = BuiltinRegistry::standard();
    let mut sim = Simulator::new(&sc, p, &builtins)?;
    let devices: Vec<DeviceId> = sim.config().devices().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(base.seed ^ (0x9e37_79b9 * (init as u64 + 1)));

    let mut fired: BTreeMap<DeviceId, bool> = devices.iter().map(|d| (*d, false)).collect();
    let mut pending = devices.len();
    while pending > 0 {
        match sim.step()? {
            Some(crate::net::Step::Fired { device, tree, .. }) => {
                if !fired.insert(device, true).unwrap_or(true) {
                    pending -= 1;
                    if init > 0 {
                        let spurious = opts.spurious.filter(|(d, _)| *d == device).map(|(_, v)| v);
                        let scrambled = scramble(&tree, &mut rng, spurious);
                        sim.config_mut().set_own_tree(device, scrambled);
                    }
                }
            }
            Some(_) => {}
            None => break,
        }
    }

    let freeze = base.last_perturbation();
    sim.run_until(freeze, |_| {})?;
    let own = |sim: &Simulator<'_>| -> BTreeMap<DeviceId, Option<Arc<ValueTree>>> {
        sim.config()
            .devices()
            .map(|d| (d, sim.config().status(d).and_then(|e| e.get(&d)).cloned()))
            .collect()
    };
    let mut previous = own(&sim);
    let mut rounds = 0;
    while rounds < opts.max_rounds {
        let live: Vec<DeviceId> = sim.config().devices().collect();
        let mut waiting: BTreeMap<DeviceId, ()> = live.iter().map(|d| (*d, ())).collect();
        while !waiting.is_empty() {
            match sim.step()? {
                Some(crate::net::Step::Fired { device, .. }) => {
                    waiting.remove(&device);
                }
                Some(_) => {}
                None => break,
            }
        }
        rounds += 1;
        let current = own(&sim);
        let unchanged = current.len() == previous.len()
            && current.iter().all(|(d, t)| match (t, previous.get(d).cloned().flatten()) {
                (Some(a), Some(b)) => trees_close(a, &b, opts.tolerance),
                _ => false,
            });
        previous = current;
        if unchanged {
            // The confirming round does not count; a clean start also spent its first round.
            return Ok(RunOutcome {
                stabilised: true,
                rounds: rounds - 1 + usize::from(init == 0),
                field: sim.config().snapshot_field()?,
            });
        }
    }
    Ok(RunOutcome {
        stabilised: false,
        rounds,
        field: sim.config().snapshot_field()?,
    })
}

/// A copy of `t` with every local value replaced by a random one of the same kind.
fn scramble(t: &ValueTree, rng: &mut ChaCha8Rng, spurious: Option<f64>) -> ValueTree {
    let root = match &t.root {
        Value::Local(v) => Value::Local(scramble_local(v, rng, spurious)),
        field => field.clone(),
    };
    ValueTree {
        root,
        children: t.children.iter().map(|c| scramble(c, rng, spurious)).collect(),
    }
}

fn scramble_local(v: &LocalValue, rng: &mut ChaCha8Rng, spurious: Option<f64>) -> LocalValue {
    match v {
        LocalValue::Num(_) => LocalValue::num(spurious.unwrap_or_else(|| rng.gen_range(-20.0..50.0))),
        LocalValue::Bool(_) => LocalValue::Bool(rng.gen()),
        LocalValue::Tuple(items) => LocalValue::tuple(items.iter().map(|i| scramble_local(i, rng, spurious)).collect()),
        other => other.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse;
    use crate::net::Point;

    fn line(n: usize) -> Scenario {
        let positions = (0..n).map(|i| Point::new(i as f64 * 10.0, 0.0)).collect();
        let mut s = Scenario::frozen(positions, 15.0, 3, 1000.0);
        s.devices
            .overrides
            .push(crate::net::scenario::SensorOverride {
                device: 0,
                sensor: "sns_source".into(),
                value: crate::net::scenario::SensorValue::Bool(true),
            });
        s.devices
            .sensors
            .insert("sns_source".into(), crate::net::scenario::SensorValue::Bool(false));
        s
    }

    const HOPCOUNT: &str = "rep(infinity){(x) => min(minHood(nbr{x}) + 1, mux(sns_source(), 0, infinity))}";

    #[test]
    fn hopcount_settles_to_bfs_depths() {
        let v = empirical_selfstab(&parse(HOPCOUNT).unwrap(), &line(5), 3, 3, 100).unwrap();
        assert!(v.self_stabilising(), "{v:?}");
        let hops: Vec<f64> = v.stable_field.values().map(|x| x.as_num().unwrap()).collect();
        assert_eq!(hops, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn constants_settle_after_one_round() {
        let v = empirical_selfstab(&parse("42").unwrap(), &line(3), 2, 2, 10).unwrap();
        assert!(v.self_stabilising());
        assert_eq!(v.rounds_to_stable, 1);
    }

    #[test]
    fn gossip_keeps_a_spurious_maximum() {
        let p = parse("rep(snsNum()){(x) => max(maxHood+(nbr{x}), snsNum())}").unwrap();
        let mut opts = SelfStabOptions::new(2, 1, 50);
        opts.spurious = Some((2, 1000.0));
        let v = empirical_selfstab_with(&p, &line(4), &opts).unwrap();
        assert!(v.stabilised, "{v:?}");
        assert!(!v.agreement_across_runs, "{v:?}");
    }
}
