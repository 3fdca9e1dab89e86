//! Discrete-event execution of a scenario.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::config::{DeviceSensors, Environment, NetworkConfiguration, Point};
use super::scenario::{Jitter, Mobility, Perturbation, Placement, Scenario};
use super::trace::{Action, Trace, TraceRecord};
use super::NetError;
use crate::eval::{BuiltinRegistry, Evaluator, ValueTree};
use crate::lang::Program;
use crate::value::{DeviceId, LocalValue};

#[derive(Clone, Copy, Debug)]
struct Event {
    time: f64,
    /// 0 for perturbations, 1 for firings: environment changes go first at equal times.
    rank: u8,
    id: u32,
}

impl PartialEq for Event {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

impl Ord for Event {
    fn cmp(&self, o: &Self) -> Ordering {
        self.time
            .total_cmp(&o.time)
            .then(self.rank.cmp(&o.rank))
            .then(self.id.cmp(&o.id))
    }
}

/// What one step did.
#[derive(Clone, Debug)]
pub enum Step {
    Fired {
        time: f64,
        device: DeviceId,
        tree: Arc<ValueTree>,
    },
    Changed {
        time: f64,
        description: String,
    },
}

/// A running scenario: configuration, event queue, positions and mobility state.
pub struct Simulator<'p> {
    scenario: Scenario,
    ev: Evaluator<'p>,
    config: NetworkConfiguration,
    queue: BinaryHeap<Reverse<Event>>,
    perturbations: Vec<Perturbation>,
    periods: BTreeMap<DeviceId, f64>,
    moved_at: BTreeMap<DeviceId, f64>,
    goals: BTreeMap<DeviceId, Point>,
    firings: BTreeMap<DeviceId, u64>,
    rng: ChaCha8Rng,
    hasher: Sha256,
}

fn placement(s: &Scenario, rng: &mut ChaCha8Rng) -> Vec<Point> {
    let n = s.devices.count as usize;
    match s.devices.placement {
        Placement::Explicit => s.devices.positions.clone(),
        Placement::Line => {
            let spacing = s.devices.spacing.unwrap_or(s.arena.comm_radius * 0.9);
            (0..n).map(|i| Point::new(i as f64 * spacing, 0.0)).collect()
        }
        Placement::Uniform => (0..n)
            .map(|_| {
                Point::new(
                    rng.gen::<f64>() * s.arena.width,
                    rng.gen::<f64>() * s.arena.height,
                )
            })
            .collect(),
    }
}

impl<'p> Simulator<'p> {
    pub fn new(scenario: &Scenario, program: &'p Program, builtins: &'p BuiltinRegistry) -> Result<Self, NetError> {
        scenario.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
        let positions = placement(scenario, &mut rng);
        let mut sensors = BTreeMap::new();
        for (i, p) in positions.iter().enumerate() {
            let d = i as DeviceId;
            let extras = scenario
                .devices
                .sensors
                .iter()
                .map(|(k, v)| (k.clone(), v.to_local()))
                .collect();
            let sns_num = scenario.devices.sns_num.as_ref().map_or(f64::from(d), |v| v[i]);
            sensors.insert(
                d,
                DeviceSensors {
                    sns_num,
                    extras,
                    position: Some(*p),
                },
            );
        }
        for o in &scenario.devices.overrides {
            let s = sensors
                .get_mut(&o.device)
                .ok_or(NetError::UnknownDevice(o.device))?;
            s.extras.insert(o.sensor.clone(), o.value.to_local());
        }
        let env = Environment::geometric(sensors, scenario.arena.comm_radius);
        let mut config = NetworkConfiguration::with_environment(env)?;
        config.horizon = scenario.horizon();
        let mut sim = Simulator {
            scenario: scenario.clone(),
            ev: Evaluator::new(program, builtins),
            config,
            queue: BinaryHeap::new(),
            perturbations: Vec::new(),
            periods: BTreeMap::new(),
            moved_at: BTreeMap::new(),
            goals: BTreeMap::new(),
            firings: BTreeMap::new(),
            rng,
            hasher: Sha256::new(),
        };
        let devices: Vec<DeviceId> = sim.config.devices().collect();
        for d in devices {
            sim.schedule_new_device(d, 0.0);
        }
        let mut perturbations = scenario.perturbations.clone();
        perturbations.sort_by(|a, b| a.at().total_cmp(&b.at()));
        for (i, p) in perturbations.iter().enumerate() {
            sim.queue.push(Reverse(Event {
                time: p.at(),
                rank: 0,
                id: i as u32,
            }));
        }
        sim.perturbations = perturbations;
        Ok(sim)
    }

    fn schedule_new_device(&mut self, d: DeviceId, now: f64) {
        let period = match self.scenario.schedule.jitter {
            Jitter::Fixed => self.scenario.schedule.base_period,
            Jitter::Uniform { lo, hi } => {
                if hi > lo {
                    self.rng.gen_range(lo..hi)
                } else {
                    lo
                }
            }
        };
        let phase = self.rng.gen::<f64>() * period;
        self.periods.insert(d, period);
        self.moved_at.insert(d, now);
        self.config.nominal_interval.insert(d, period);
        self.queue.push(Reverse(Event {
            time: now + phase,
            rank: 1,
            id: d,
        }));
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn evaluator(&self) -> &Evaluator<'p> {
        &self.ev
    }

    pub fn config(&self) -> &NetworkConfiguration {
        &self.config
    }

    pub fn config_mut(&mut self) -> &mut NetworkConfiguration {
        &mut self.config
    }

    pub fn time(&self) -> f64 {
        self.config.clock
    }

    pub fn period(&self, d: DeviceId) -> Option<f64> {
        self.periods.get(&d).copied()
    }

    pub fn firings(&self, d: DeviceId) -> u64 {
        self.firings.get(&d).copied().unwrap_or(0)
    }

    pub fn position(&self, d: DeviceId) -> Option<Point> {
        self.config.env.sensors.get(&d).and_then(|s| s.position)
    }

    pub fn positions(&self) -> BTreeMap<DeviceId, Point> {
        self.config
            .env
            .sensors
            .iter()
            .filter_map(|(d, s)| s.position.map(|p| (*d, p)))
            .collect()
    }

    /// Target for goal-directed mobility; `None` stops the device.
    pub fn set_goal(&mut self, d: DeviceId, goal: Option<Point>) {
        match goal {
            Some(g) => {
                self.goals.insert(d, g);
            }
            None => {
                self.goals.remove(&d);
            }
        }
    }

    /// Changes a named sensor outside the perturbation schedule.
    pub fn set_sensor(&mut self, d: DeviceId, name: &str, v: LocalValue) -> Result<(), NetError> {
        let s = self
            .config
            .env
            .sensors
            .get_mut(&d)
            .ok_or(NetError::UnknownDevice(d))?;
        s.extras.insert(name.to_string(), v);
        Ok(())
    }

    /// Hex digest of every event time, acting device and position so far.
    pub fn schedule_hash(&self) -> String {
        let digest = self.hasher.clone().finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Time of the next pending event, if it falls within the scenario duration.
    pub fn peek_time(&self) -> Option<f64> {
        self.queue
            .peek()
            .map(|Reverse(e)| e.time)
            .filter(|t| *t <= self.scenario.duration)
    }

    /// Device of the next pending event when that event is a firing.
    pub fn peek_device(&self) -> Option<DeviceId> {
        match self.queue.peek() {
            Some(Reverse(e)) if e.rank == 1 && e.time <= self.scenario.duration => Some(e.id),
            _ => None,
        }
    }

    fn relocate(&mut self, d: DeviceId, now: f64) {
        let elapsed = now - self.moved_at.get(&d).copied().unwrap_or(now);
        self.moved_at.insert(d, now);
        let Some(p) = self.position(d) else {
            return;
        };
        let (w, h) = (self.scenario.arena.width, self.scenario.arena.height);
        let next = match self.scenario.devices.mobility {
            Mobility::Still => return,
            Mobility::RandomWalk { speed } => {
                let len = speed * elapsed;
                if len <= 0.0 {
                    return;
                }
                let mut chosen = None;
                for _ in 0..64 {
                    let a = self.rng.gen::<f64>() * std::f64::consts::TAU;
                    let q = Point::new(p.x + len * a.cos(), p.y + len * a.sin());
                    if (0.0..=w).contains(&q.x) && (0.0..=h).contains(&q.y) {
                        chosen = Some(q);
                        break;
                    }
                }
                // A step longer than the arena allows: head for the centre instead.
                chosen.unwrap_or_else(|| {
                    let c = Point::new(w / 2.0, h / 2.0);
                    let dist = p.dist(c).max(f64::MIN_POSITIVE);
                    let k = (len / dist).min(1.0);
                    Point::new(p.x + (c.x - p.x) * k, p.y + (c.y - p.y) * k)
                })
            }
            Mobility::Goal { speed } => {
                let Some(g) = self.goals.get(&d).copied() else {
                    return;
                };
                let dist = p.dist(g);
                let len = speed * elapsed;
                if dist <= len || dist == 0.0 {
                    g
                } else {
                    let k = len / dist;
                    Point::new(p.x + (g.x - p.x) * k, p.y + (g.y - p.y) * k)
                }
            }
        };
        self.config.env.sensors.get_mut(&d).expect("device").position = Some(next);
        self.config.env.relink(d, self.scenario.arena.comm_radius);
    }

    fn perturb(&mut self, p: &Perturbation, now: f64) -> Result<String, NetError> {
        let radius = self.scenario.arena.comm_radius;
        let mut env = self.config.env.clone();
        let sensors = |env: &mut Environment, d: DeviceId| -> Result<(), NetError> {
            if env.sensors.contains_key(&d) {
                Ok(())
            } else {
                Err(NetError::UnknownDevice(d))
            }
        };
        let text = match p {
            Perturbation::SetSensor {
                device, sensor, value, ..
            } => {
                sensors(&mut env, *device)?;
                let v = value.to_local();
                env.sensors.get_mut(device).expect("checked").extras.insert(sensor.clone(), v.clone());
                format!("set {sensor}={v} on {device}")
            }
            Perturbation::SwitchSensor { sensor, from, to, .. } => {
                sensors(&mut env, *from)?;
                sensors(&mut env, *to)?;
                env.sensors.get_mut(from).expect("checked").extras.insert(sensor.clone(), LocalValue::Bool(false));
                env.sensors.get_mut(to).expect("checked").extras.insert(sensor.clone(), LocalValue::Bool(true));
                format!("switch {sensor} from {from} to {to}")
            }
            Perturbation::Teleport { device, x, y, .. } => {
                sensors(&mut env, *device)?;
                env.sensors.get_mut(device).expect("checked").position = Some(Point::new(*x, *y));
                env.relink(*device, radius);
                format!("teleport {device} to ({x}, {y})")
            }
            Perturbation::Remove { device, .. } => {
                sensors(&mut env, *device)?;
                env.sensors.remove(device);
                env.topology.remove(device);
                for nbrs in env.topology.values_mut() {
                    nbrs.remove(device);
                }
                format!("remove {device}")
            }
            Perturbation::Add { device, x, y, .. } => {
                if env.sensors.contains_key(device) {
                    return Err(NetError::Scenario(format!("device {device} already present")));
                }
                let extras = self
                    .scenario
                    .devices
                    .sensors
                    .iter()
                    .map(|(k, v)| (k.clone(), v.to_local()))
                    .collect();
                env.sensors.insert(
                    *device,
                    DeviceSensors {
                        sns_num: f64::from(*device),
                        extras,
                        position: Some(Point::new(*x, *y)),
                    },
                );
                env.topology.insert(*device, Default::default());
                env.relink(*device, radius);
                format!("add {device} at ({x}, {y})")
            }
        };
        self.config.env_change(env)?;
        match p {
            Perturbation::Add { device, .. } => self.schedule_new_device(*device, now),
            Perturbation::Remove { device, .. } => {
                self.periods.remove(device);
            }
            _ => {}
        }
        Ok(text)
    }

    /// Executes the next event, or returns `None` once the scenario duration is reached.
    pub fn step(&mut self) -> Result<Option<Step>, NetError> {
        loop {
            let Some(Reverse(e)) = self.queue.peek().copied() else {
                return Ok(None);
            };
            if e.time > self.scenario.duration {
                return Ok(None);
            }
            self.queue.pop();
            self.config.clock = e.time;
            self.hasher.update(e.time.to_bits().to_le_bytes());
            self.hasher.update([e.rank]);
            self.hasher.update(e.id.to_le_bytes());
            if e.rank == 0 {
                let p = self.perturbations[e.id as usize].clone();
                let description = self.perturb(&p, e.time)?;
                return Ok(Some(Step::Changed {
                    time: e.time,
                    description,
                }));
            }
            let d = e.id;
            let Some(period) = self.periods.get(&d).copied() else {
                continue;
            };
            self.relocate(d, e.time);
            if let Some(p) = self.position(d) {
                self.hasher.update(p.x.to_bits().to_le_bytes());
                self.hasher.update(p.y.to_bits().to_le_bytes());
            }
            let tree = self.config.fire(d, &self.ev)?;
            *self.firings.entry(d).or_default() += 1;
            self.queue.push(Reverse(Event {
                time: e.time + period,
                rank: 1,
                id: d,
            }));
            return Ok(Some(Step::Fired {
                time: e.time,
                device: d,
                tree,
            }));
        }
    }

    /// Steps every event up to and including time `t`.
    pub fn run_until(&mut self, t: f64, mut observe: impl FnMut(&Step)) -> Result<(), NetError> {
        while self.peek_time().is_some_and(|next| next <= t) {
            if let Some(s) = self.step()? {
                observe(&s);
            }
        }
        Ok(())
    }
}

/// Runs `scenario` to completion with the standard builtins.
pub fn run(scenario: &Scenario, program: &Program) -> Result<Trace, NetError> {
    let builtins = BuiltinRegistry::standard();
    run_with(scenario, program, &builtins)
}

pub fn run_with(scenario: &Scenario, program: &Program, builtins: &BuiltinRegistry) -> Result<Trace, NetError> {
    let mut sim = Simulator::new(scenario, program, builtins)?;
    let mut trace = Trace::default();
    while let Some(s) = sim.step()? {
        trace.push(match s {
            Step::Fired { time, device, tree } => TraceRecord {
                time,
                action: Action::Fire,
                device: Some(device),
                value: tree.root.to_string(),
                metrics: Vec::new(),
            },
            Step::Changed { time, description } => TraceRecord {
                time,
                action: Action::Env,
                device: None,
                value: description,
                metrics: Vec::new(),
            },
        });
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse;

    fn single(duration: f64) -> Scenario {
        Scenario::frozen(vec![Point::new(0.0, 0.0)], 10.0, 3, duration)
    }

    #[test]
    fn one_still_device_fires_on_schedule() {
        let p = parse("rep(0){(x) => x + 1}").unwrap();
        let t = run(&single(3.5), &p).unwrap();
        let times: Vec<f64> = t.firings().map(|r| r.time).collect();
        assert!(times.len() == 3 || times.len() == 4, "{times:?}");
        assert!(times.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(t.records.last().unwrap().value, times.len().to_string());
    }

    #[test]
    fn same_seed_same_trace() {
        let src = "def g(s) { rep(infinity){(d) => mux(s, 0, minHood(nbr{d} + nbrRange()))} }\ng(uid() = 0)";
        let p = parse(src).unwrap();
        let mut s = Scenario::from_toml(
            "seed = 11\nduration = 20.0\n[arena]\nwidth = 100.0\nheight = 20.0\ncomm_radius = 30.0\n[devices]\ncount = 20\nmobility = { kind = \"random_walk\", speed = 1.0 }\n[schedule]\njitter = { kind = \"uniform\", lo = 0.5, hi = 2.0 }",
        )
        .unwrap();
        let a = run(&s, &p).unwrap().to_csv_string();
        let b = run(&s, &p).unwrap().to_csv_string();
        assert_eq!(a, b);
        s.seed = 12;
        assert_ne!(run(&s, &p).unwrap().to_csv_string(), a);
    }

    #[test]
    fn random_walk_moves_exactly_speed_times_elapsed() {
        let p = parse("0").unwrap();
        let s = Scenario::from_toml(
            "seed = 5\nduration = 30.0\n[arena]\nwidth = 50.0\nheight = 50.0\ncomm_radius = 10.0\n[devices]\ncount = 4\nmobility = { kind = \"random_walk\", speed = 1.0 }\n[schedule]\njitter = { kind = \"uniform\", lo = 0.5, hi = 2.0 }",
        )
        .unwrap();
        let b = BuiltinRegistry::standard();
        let mut sim = Simulator::new(&s, &p, &b).unwrap();
        let mut last: BTreeMap<DeviceId, (f64, Point)> = BTreeMap::new();
        while let Some(step) = sim.step().unwrap() {
            if let Step::Fired { time, device, .. } = step {
                let pos = sim.position(device).unwrap();
                if let Some((t0, p0)) = last.get(&device) {
                    assert!((pos.dist(*p0) - (time - t0)).abs() < 1e-9);
                }
                last.insert(device, (time, pos));
            }
        }
    }

    #[test]
    fn every_device_fires_within_three_periods() {
        let p = parse("0").unwrap();
        let s = Scenario::from_toml(
            "seed = 9\nduration = 40.0\n[arena]\nwidth = 50.0\nheight = 50.0\ncomm_radius = 10.0\n[devices]\ncount = 10\n[schedule]\njitter = { kind = \"uniform\", lo = 0.5, hi = 2.0 }",
        )
        .unwrap();
        let t = run(&s, &p).unwrap();
        let window = 3.0 * s.max_period();
        let mut start = 0.0;
        while start + window <= s.duration {
            for d in 0..10 {
                assert!(t
                    .firings()
                    .any(|r| r.device == Some(d) && r.time >= start && r.time < start + window));
            }
            start += 1.0;
        }
    }

    #[test]
    fn perturbations_are_recorded_and_applied() {
        let p = parse("mux(sns_source(), 1, 0)").unwrap();
        let s = Scenario::from_toml(
            "seed = 1\nduration = 5.0\n[arena]\nwidth = 10.0\nheight = 0.0\ncomm_radius = 30.0\n[devices]\ncount = 2\nplacement = \"line\"\nspacing = 5.0\nsensors = { sns_source = false }\noverrides = [{ device = 0, sensor = \"sns_source\", value = true }]\n[[perturbations]]\nat = 2.5\nkind = \"switch_sensor\"\nsensor = \"sns_source\"\nfrom = 0\nto = 1",
        )
        .unwrap();
        let t = run(&s, &p).unwrap();
        let env: Vec<&TraceRecord> = t.records.iter().filter(|r| r.action == Action::Env).collect();
        assert_eq!(env.len(), 1);
        let last_of = |d| t.firings().filter(|r| r.device == Some(d)).last().unwrap().value.clone();
        assert_eq!(last_of(0), "0");
        assert_eq!(last_of(1), "1");
    }
}
