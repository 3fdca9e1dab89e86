//! Network configurations and the two transitions: firing and environment change.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use super::NetError;
use crate::eval::{EvalError, Evaluator, SensorSnapshot, ValueTree, ValueTreeEnv};
use crate::value::{DeviceId, LocalValue, Value};

/// A position in the arena, in metres.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist(self, o: Point) -> f64 {
        (self.x - o.x).hypot(self.y - o.y)
    }
}

/// Slow-changing sensor state of one device; ranges, lags and intervals are derived at firing time.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DeviceSensors {
    pub sns_num: f64,
    pub extras: BTreeMap<String, LocalValue>,
    pub position: Option<Point>,
}

/// Topology plus sensors, over one common set of devices.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Environment {
    pub topology: BTreeMap<DeviceId, BTreeSet<DeviceId>>,
    pub sensors: BTreeMap<DeviceId, DeviceSensors>,
}

impl Environment {
    /// Devices joined when their distance is at most `radius`.
    pub fn geometric(sensors: BTreeMap<DeviceId, DeviceSensors>, radius: f64) -> Self {
        let mut topology: BTreeMap<DeviceId, BTreeSet<DeviceId>> =
            sensors.keys().map(|d| (*d, BTreeSet::new())).collect();
        let placed: Vec<(DeviceId, Point)> = sensors
            .iter()
            .filter_map(|(d, s)| s.position.map(|p| (*d, p)))
            .collect();
        for (i, (a, pa)) in placed.iter().enumerate() {
            for (b, pb) in &placed[i + 1..] {
                if pa.dist(*pb) <= radius {
                    topology.get_mut(a).expect("device").insert(*b);
                    topology.get_mut(b).expect("device").insert(*a);
                }
            }
        }
        Environment { topology, sensors }
    }

    /// Same domain for topology and sensors, and no neighbour outside it.
    pub fn check_well_formed(&self) -> Result<(), NetError> {
        let a: BTreeSet<&DeviceId> = self.topology.keys().collect();
        let b: BTreeSet<&DeviceId> = self.sensors.keys().collect();
        if a != b {
            return Err(NetError::IllFormedEnvironment(
                "topology and sensors cover different devices".into(),
            ));
        }
        for (d, nbrs) in &self.topology {
            if let Some(x) = nbrs.iter().find(|n| !self.topology.contains_key(n)) {
                return Err(NetError::IllFormedEnvironment(format!(
                    "device {d} lists unknown neighbour {x}"
                )));
            }
        }
        Ok(())
    }

    pub fn devices(&self) -> impl Iterator<Item = DeviceId> + '_ {
        self.topology.keys().copied()
    }

    pub fn neighbours(&self, d: DeviceId) -> impl Iterator<Item = DeviceId> + '_ {
        self.topology.get(&d).into_iter().flatten().copied().filter(move |n| *n != d)
    }

    /// Recomputes the links of `d` from positions, keeping the relation symmetric.
    pub fn relink(&mut self, d: DeviceId, radius: f64) {
        let Some(p) = self.sensors.get(&d).and_then(|s| s.position) else {
            return;
        };
        let mut row = BTreeSet::new();
        for (o, s) in &self.sensors {
            if *o == d {
                continue;
            }
            let near = s.position.is_some_and(|q| q.dist(p) <= radius);
            let col = self.topology.get_mut(o).expect("well-formed");
            if near {
                row.insert(*o);
                col.insert(d);
            } else {
                col.remove(&d);
            }
        }
        self.topology.insert(d, row);
    }

    /// Distance used by `nbrRange`: Euclidean when both ends are placed, 1 otherwise.
    pub fn range(&self, a: DeviceId, b: DeviceId) -> f64 {
        let pa = self.sensors.get(&a).and_then(|s| s.position);
        let pb = self.sensors.get(&b).and_then(|s| s.position);
        match (pa, pb) {
            (Some(p), Some(q)) => p.dist(q),
            _ => 1.0,
        }
    }
}

/// Environment, status field and bookkeeping for staleness and sensor derivation.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkConfiguration {
    pub env: Environment,
    status: BTreeMap<DeviceId, ValueTreeEnv>,
    received: BTreeMap<DeviceId, BTreeMap<DeviceId, f64>>,
    last_fired: BTreeMap<DeviceId, f64>,
    last_interval: BTreeMap<DeviceId, f64>,
    last_lag: BTreeMap<DeviceId, BTreeMap<DeviceId, f64>>,
    /// Interval reported by `sns_interval` on a device's first firing.
    pub nominal_interval: BTreeMap<DeviceId, f64>,
    /// Entries older than this many seconds are ignored and discarded.
    pub horizon: f64,
    pub clock: f64,
}

impl Default for NetworkConfiguration {
    fn default() -> Self {
        NetworkConfiguration {
            env: Environment::default(),
            status: BTreeMap::new(),
            received: BTreeMap::new(),
            last_fired: BTreeMap::new(),
            last_interval: BTreeMap::new(),
            last_lag: BTreeMap::new(),
            nominal_interval: BTreeMap::new(),
            horizon: f64::INFINITY,
            clock: 0.0,
        }
    }
}

impl NetworkConfiguration {
    /// The empty network.
    pub fn new() -> Self {
        Self::default()
    }

    /// A network over `env` with every value-tree environment empty.
    pub fn with_environment(env: Environment) -> Result<Self, NetError> {
        let mut n = Self::new();
        n.env_change(env)?;
        Ok(n)
    }

    pub fn status(&self, d: DeviceId) -> Option<&ValueTreeEnv> {
        self.status.get(&d)
    }

    pub fn status_field(&self) -> &BTreeMap<DeviceId, ValueTreeEnv> {
        &self.status
    }

    pub fn devices(&self) -> impl Iterator<Item = DeviceId> + '_ {
        self.status.keys().copied()
    }

    /// Replaces the environment; new devices start empty, removed ones are forgotten.
    pub fn env_change(&mut self, env: Environment) -> Result<(), NetError> {
        env.check_well_formed()?;
        let keep = |d: &DeviceId| env.topology.contains_key(d);
        self.status.retain(|d, _| keep(d));
        self.received.retain(|d, _| keep(d));
        self.last_fired.retain(|d, _| keep(d));
        self.last_interval.retain(|d, _| keep(d));
        self.last_lag.retain(|d, _| keep(d));
        for d in env.topology.keys() {
            self.status.entry(*d).or_default();
            self.received.entry(*d).or_default();
        }
        self.env = env;
        Ok(())
    }

    /// The part of `d`'s stored environment still fresh and from current neighbours or itself.
    pub fn filter_stale(&self, d: DeviceId, horizon: f64) -> ValueTreeEnv {
        let Some(stored) = self.status.get(&d) else {
            return ValueTreeEnv::new();
        };
        let received = &self.received[&d];
        let nbrs = &self.env.topology[&d];
        stored
            .iter()
            .filter(|(s, _)| **s == d || nbrs.contains(s))
            .filter(|(s, _)| self.clock - received.get(s).copied().unwrap_or(f64::NEG_INFINITY) <= horizon)
            .map(|(s, t)| (*s, Arc::clone(t)))
            .collect()
    }

    fn snapshot(&self, d: DeviceId, view: &ValueTreeEnv, interval: f64) -> SensorSnapshot {
        let base = &self.env.sensors[&d];
        let mut s = SensorSnapshot {
            sns_num: base.sns_num,
            interval,
            extras: base.extras.clone(),
            ..SensorSnapshot::default()
        };
        let received = &self.received[&d];
        for n in view.keys().filter(|n| **n != d) {
            s.nbr_range.insert(*n, self.env.range(d, *n));
            s.nbr_lag.insert(*n, self.clock - received[n]);
        }
        s
    }

    /// One firing of `d` at the current clock.
    pub fn fire(&mut self, d: DeviceId, ev: &Evaluator<'_>) -> Result<Arc<ValueTree>, NetError> {
        if !self.status.contains_key(&d) {
            return Err(NetError::UnknownDevice(d));
        }
        let view = self.filter_stale(d, self.horizon);
        let interval = match self.last_fired.get(&d) {
            Some(t) if self.clock > *t => self.clock - *t,
            _ => self.nominal_interval.get(&d).copied().unwrap_or(1.0),
        };
        let sensors = self.snapshot(d, &view, interval);
        let tree = ev.eval_main(d, &view, &sensors).map_err(|source| NetError::Eval {
            device: d,
            time: self.clock,
            source,
        })?;
        let tree = Arc::new(tree);
        let now = self.clock;
        let received = self.received.get_mut(&d).expect("device");
        received.retain(|s, _| view.contains_key(s));
        self.status.insert(d, view);
        let targets: Vec<DeviceId> = std::iter::once(d).chain(self.env.neighbours(d)).collect();
        for n in targets {
            self.status.get_mut(&n).expect("well-formed").insert(d, Arc::clone(&tree));
            self.received.get_mut(&n).expect("well-formed").insert(d, now);
        }
        self.last_fired.insert(d, now);
        self.last_interval.insert(d, interval);
        self.last_lag.insert(d, sensors.nbr_lag);
        Ok(tree)
    }

    /// Whether firing any single device would leave every stored tree unchanged.
    ///
    /// The probe reuses each device's last interval and neighbour lags, so a
    /// firing is compared under the conditions it last ran with.
    pub fn is_stable(&self, ev: &Evaluator<'_>) -> Result<bool, NetError> {
        for d in self.devices() {
            let Some(own) = self.status[&d].get(&d) else {
                return Ok(false);
            };
            let view = self.filter_stale(d, self.horizon);
            let interval = self.last_interval.get(&d).copied().unwrap_or(1.0);
            let mut sensors = self.snapshot(d, &view, interval);
            if let Some(lags) = self.last_lag.get(&d) {
                for (n, lag) in sensors.nbr_lag.iter_mut() {
                    if let Some(old) = lags.get(n) {
                        *lag = *old;
                    }
                }
            }
            let tree = ev.eval_main(d, &view, &sensors).map_err(|source| NetError::Eval {
                device: d,
                time: self.clock,
                source,
            })?;
            if tree != **own {
                return Ok(false);
            }
            for n in self.env.neighbours(d) {
                match self.status[&n].get(&d) {
                    Some(t) if **t == tree => {}
                    _ => return Ok(false),
                }
            }
        }
        Ok(true)
    }

    /// Each device's own latest root.
    pub fn snapshot_field(&self) -> Result<BTreeMap<DeviceId, LocalValue>, NetError> {
        let mut out = BTreeMap::new();
        let mut never = Vec::new();
        for (d, env) in &self.status {
            match env.get(d).map(|t| &t.root) {
                Some(Value::Local(v)) => {
                    out.insert(*d, v.clone());
                }
                Some(Value::Field(_)) => {
                    return Err(NetError::Eval {
                        device: *d,
                        time: self.clock,
                        source: EvalError::Stuck("main evaluated to a field".into()),
                    })
                }
                None => never.push(*d),
            }
        }
        if !never.is_empty() {
            return Err(NetError::NeverFired(never));
        }
        Ok(out)
    }

    /// Overwrites the tree `d` holds for itself, as if it had fired with that outcome.
    pub fn set_own_tree(&mut self, d: DeviceId, tree: ValueTree) {
        let now = self.clock;
        if let Some(env) = self.status.get_mut(&d) {
            env.insert(d, Arc::new(tree));
            self.received.get_mut(&d).expect("device").insert(d, now);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{parse_tree, BuiltinRegistry};
    use crate::lang::parse;

    fn example_env() -> Environment {
        let mut topology = BTreeMap::new();
        topology.insert(1, BTreeSet::from([2]));
        topology.insert(2, BTreeSet::from([1, 3]));
        topology.insert(3, BTreeSet::from([2]));
        let sensors = (1..=3)
            .map(|d| {
                (
                    d,
                    DeviceSensors {
                        sns_num: f64::from(d),
                        ..DeviceSensors::default()
                    },
                )
            })
            .collect();
        Environment { topology, sensors }
    }

    fn tree(s: &str) -> Arc<ValueTree> {
        Arc::new(parse_tree(s).unwrap())
    }

    #[test]
    fn firing_updates_self_and_neighbours() {
        let p = parse("minHood+(nbr{snsNum()})").unwrap();
        let b = BuiltinRegistry::standard();
        let ev = Evaluator::new(&p, &b);
        let mut n = NetworkConfiguration::with_environment(example_env()).unwrap();
        assert!(n.status_field().values().all(|e| e.is_empty()));
        n.fire(1, &ev).unwrap();
        let theta_a = tree("1⟨(δA↦1)⟨1⟩⟩");
        assert_eq!(n.status(1).unwrap(), &ValueTreeEnv::from([(1, theta_a.clone())]));
        assert_eq!(n.status(2).unwrap(), &ValueTreeEnv::from([(1, theta_a)]));
        assert!(n.status(3).unwrap().is_empty());
    }

    #[test]
    fn env_change_keeps_survivors_and_resets_newcomers() {
        let p = parse("7").unwrap();
        let b = BuiltinRegistry::standard();
        let ev = Evaluator::new(&p, &b);
        let mut n = NetworkConfiguration::with_environment(example_env()).unwrap();
        for d in [1, 2, 3] {
            n.fire(d, &ev).unwrap();
        }
        let before = n.clone();
        n.env_change(example_env()).unwrap();
        assert_eq!(n, before);
        let mut smaller = example_env();
        smaller.topology.remove(&3);
        smaller.topology.get_mut(&2).unwrap().remove(&3);
        smaller.sensors.remove(&3);
        n.env_change(smaller).unwrap();
        assert!(n.status(3).is_none());
        n.env_change(example_env()).unwrap();
        assert!(n.status(3).unwrap().is_empty());
        assert_eq!(n.snapshot_field().unwrap_err(), NetError::NeverFired(vec![3]));
    }

    #[test]
    fn ill_formed_environments_are_rejected() {
        let mut env = example_env();
        env.topology.get_mut(&1).unwrap().insert(9);
        assert!(matches!(
            NetworkConfiguration::with_environment(env),
            Err(NetError::IllFormedEnvironment(_))
        ));
    }

    #[test]
    fn stale_and_departed_entries_are_filtered() {
        let p = parse("uid()").unwrap();
        let b = BuiltinRegistry::standard();
        let ev = Evaluator::new(&p, &b);
        let mut n = NetworkConfiguration::with_environment(example_env()).unwrap();
        n.fire(1, &ev).unwrap();
        n.fire(3, &ev).unwrap();
        n.clock = 10.0;
        assert_eq!(n.filter_stale(2, 100.0).len(), 2);
        assert!(n.filter_stale(2, 5.0).is_empty());
        let mut env = example_env();
        env.topology.get_mut(&2).unwrap().remove(&3);
        env.topology.get_mut(&3).unwrap().remove(&2);
        n.env_change(env).unwrap();
        assert_eq!(n.filter_stale(2, 100.0).keys().copied().collect::<Vec<_>>(), vec![1]);
    }

    #[test]
    fn stability_of_constant_and_gradient_programs() {
        let b = BuiltinRegistry::standard();
        let constant = parse("0").unwrap();
        let ev = Evaluator::new(&constant, &b);
        let mut n = NetworkConfiguration::with_environment(example_env()).unwrap();
        assert!(!n.is_stable(&ev).unwrap());
        for d in [1, 2, 3] {
            n.fire(d, &ev).unwrap();
        }
        assert!(n.is_stable(&ev).unwrap());

        let hop = parse("rep(infinity){(x) => mux(uid() = 1, 0, minHood(nbr{x}) + 1)}").unwrap();
        let ev = Evaluator::new(&hop, &b);
        let mut n = NetworkConfiguration::with_environment(example_env()).unwrap();
        for d in [3, 2, 1] {
            n.fire(d, &ev).unwrap();
        }
        assert!(!n.is_stable(&ev).unwrap());
        for _ in 0..5 {
            for d in [1, 2, 3] {
                n.fire(d, &ev).unwrap();
            }
        }
        assert!(n.is_stable(&ev).unwrap());
        let field: Vec<f64> = n.snapshot_field().unwrap().values().map(|v| v.as_num().unwrap()).collect();
        assert_eq!(field, vec![0.0, 1.0, 2.0]);
    }
}
