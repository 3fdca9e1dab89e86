//! Paired comparisons of block variants under one perturbation mode.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::metrics::{component, dijkstra, metric_value_stability, settle_time, MetricSeries};
use super::{drive, keyed_rng, rows_to_csv, ExperimentError, Manifest, MetricRow, PerturbationMode};
use crate::blocks;
use crate::eval::BuiltinRegistry;
use crate::net::scenario::{Arena, Devices, Jitter, Mobility, Perturbation, Placement, Schedule, SensorOverride, SensorValue};
use crate::net::{Point, Scenario, Simulator};
use crate::value::{DeviceId, LocalValue};

const NOISE_STREAM: u64 = 0x7e57;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Family {
    G,
    C,
    T,
}

impl Family {
    pub fn parse(s: &str) -> Option<Family> {
        match s {
            "G" | "g" => Some(Family::G),
            "C" | "c" => Some(Family::C),
            "T" | "t" => Some(Family::T),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::G => "G",
            Family::C => "C",
            Family::T => "T",
        }
    }

    /// Name of the per-step error series.
    pub fn error_metric(self) -> &'static str {
        match self {
            Family::T => "rmse",
            _ => "error",
        }
    }

    /// The standard variants, with the library's tunables filled in.
    pub fn variants(self, setup_radius: f64, crf_speed: f64) -> Vec<Variant> {
        let src = "mux(sns_source(), 0, infinity)";
        match self {
            Family::G => vec![
                Variant::new("G", &format!("G_distanceTo({src})")),
                Variant::new("CRF", &format!("1st(CRF({src}, {crf_speed:?})(nbrRange))")),
                Variant::new("FLEX", &format!("G'_flex_distance({src}, {setup_radius:?})")),
            ],
            Family::C => vec![
                Variant::new("C", &format!("C_sum(G'_flex_distance({src}, {setup_radius:?}), 1)")),
                Variant::new("C'", &format!("C'_sum(G'_flex_distance({src}, {setup_radius:?}), 1)")),
            ],
            Family::T => vec![
                Variant::new("T", "T_track(sns_signal())"),
                Variant::new("T'(0.02)", "T'_track(sns_signal())"),
                Variant::new("T'(0.5)", "T'(sns_signal(), sns_signal())(meanHood, decay_05)"),
            ],
        }
    }
}

/// A named main expression over the block library.
#[derive(Clone, Debug, PartialEq)]
pub struct Variant {
    pub name: String,
    pub main: String,
}

impl Variant {
    pub fn new(name: &str, main: &str) -> Self {
        Variant {
            name: name.to_string(),
            main: main.to_string(),
        }
    }
}

/// Everything that defines one comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonSetup {
    pub family: Family,
    pub mode: PerturbationMode,
    pub variants: Vec<Variant>,
    pub seeds: Vec<u64>,
    pub devices: u32,
    pub width: f64,
    pub height: f64,
    pub comm_radius: f64,
    pub duration: f64,
    /// Seconds between source switches in `LargeSpatial`.
    pub switch_every: f64,
    pub grid: f64,
    /// Amplitude and period (s) of the sine driving the T family.
    pub signal: (f64, f64),
    /// Half-width of the uniform noise added to the signal.
    pub noise: f64,
}

/// Raising speed of CRF in the comparisons, in metres per round.
pub const COMPARISON_CRF_SPEED: f64 = 4.0;

impl ComparisonSetup {
    pub fn new(family: Family, mode: PerturbationMode, seeds: &[u64]) -> Self {
        let comm_radius = 30.0;
        ComparisonSetup {
            family,
            mode,
            variants: family.variants(comm_radius, COMPARISON_CRF_SPEED),
            seeds: seeds.to_vec(),
            devices: 100,
            width: 200.0,
            height: 20.0,
            comm_radius,
            duration: if mode == PerturbationMode::LargeSpatial { 400.0 } else { 200.0 },
            switch_every: 200.0,
            grid: 1.0,
            signal: (10.0, 100.0),
            noise: 1.0,
        }
    }

    /// Keeps only the variants with these names, in this order.
    pub fn with_variants(mut self, names: &[&str]) -> Result<Self, ExperimentError> {
        let mut chosen = Vec::new();
        for n in names {
            let v = self
                .variants
                .iter()
                .find(|v| v.name == *n)
                .ok_or_else(|| ExperimentError::Invalid(format!("family {} has no variant `{n}`", self.family.name())))?;
            chosen.push(v.clone());
        }
        self.variants = chosen;
        Ok(self)
    }

    pub fn signal_at(&self, t: f64) -> f64 {
        self.signal.0 * (TAU * t / self.signal.1).sin()
    }

    /// Devices placed uniformly from the seed; the leftmost starts as source, the rightmost is the alternate.
    pub fn scenario(&self, seed: u64) -> Scenario {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let positions: Vec<Point> = (0..self.devices)
            .map(|_| Point::new(rng.gen::<f64>() * self.width, rng.gen::<f64>() * self.height))
            .collect();
        let (primary, alternate) = extremes(&positions);
        let spatial = self.mode.is_spatial();
        let jitter = match self.mode {
            PerturbationMode::SmallTemporal => Jitter::Uniform {
                lo: 1.0 / 1.1,
                hi: 1.0 / 0.9,
            },
            PerturbationMode::LargeTemporal => Jitter::Uniform { lo: 0.5, hi: 2.0 },
            _ => Jitter::Fixed,
        };
        let mut perturbations = Vec::new();
        if self.mode == PerturbationMode::LargeSpatial {
            let mut k = 1.0;
            while k * self.switch_every < self.duration {
                let (from, to) = if perturbations.len() % 2 == 0 {
                    (primary, alternate)
                } else {
                    (alternate, primary)
                };
                perturbations.push(Perturbation::SwitchSensor {
                    at: k * self.switch_every,
                    sensor: "sns_source".into(),
                    from,
                    to,
                });
                k += 1.0;
            }
        }
        Scenario {
            seed,
            duration: self.duration,
            arena: Arena {
                width: self.width,
                height: self.height,
                comm_radius: self.comm_radius,
            },
            devices: Devices {
                count: self.devices,
                placement: Placement::Explicit,
                positions,
                spacing: None,
                mobility: if spatial {
                    Mobility::RandomWalk { speed: 1.0 }
                } else {
                    Mobility::Still
                },
                sensors: BTreeMap::from([
                    ("sns_source".to_string(), SensorValue::Bool(false)),
                    ("sns_signal".to_string(), SensorValue::Float(0.0)),
                ]),
                overrides: vec![SensorOverride {
                    device: primary,
                    sensor: "sns_source".into(),
                    value: SensorValue::Bool(true),
                }],
                sns_num: None,
            },
            schedule: Schedule {
                base_period: 1.0,
                jitter,
                horizon: None,
            },
            perturbations,
        }
    }

    /// Times at which the source moves.
    pub fn switch_times(&self) -> Vec<f64> {
        self.scenario(0).perturbations.iter().map(Perturbation::at).collect()
    }
}

fn extremes(positions: &[Point]) -> (DeviceId, DeviceId) {
    let by_x = |f: fn(f64, f64) -> bool| {
        let mut best = 0;
        for (i, p) in positions.iter().enumerate() {
            if f(p.x, positions[best].x) {
                best = i;
            }
        }
        best as DeviceId
    };
    (by_x(|a, b| a < b), by_x(|a, b| a > b))
}

/// Series of one variant under one seed.
#[derive(Clone, Debug, PartialEq)]
pub struct VariantRun {
    pub seed: u64,
    pub variant: String,
    pub error: MetricSeries,
    pub stability: MetricSeries,
    pub schedule_hash: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonOutput {
    pub setup: ComparisonSetup,
    pub runs: Vec<VariantRun>,
    pub manifest: Manifest,
}

impl ComparisonOutput {
    pub fn run(&self, seed: u64, variant: &str) -> Option<&VariantRun> {
        self.runs.iter().find(|r| r.seed == seed && r.variant == variant)
    }

    pub fn rows(&self) -> Vec<MetricRow> {
        let mut rows = Vec::new();
        for r in &self.runs {
            for s in [&r.error, &r.stability] {
                rows.extend(s.samples.iter().map(|(t, v)| MetricRow {
                    time: *t,
                    seed: r.seed,
                    variant: r.variant.clone(),
                    metric: s.name.clone(),
                    value: *v,
                }));
            }
        }
        rows
    }

    pub fn to_csv(&self) -> String {
        rows_to_csv(&self.rows())
    }

    /// Seconds after the first source switch until the error settles.
    pub fn settle_after_switch(&self, seed: u64, variant: &str) -> Option<f64> {
        let switches = self.setup.switch_times();
        let from = *switches.first()?;
        let to = switches.get(1).copied().unwrap_or(self.setup.duration + self.setup.grid);
        settle_time(&self.run(seed, variant)?.error, from, to)
    }

    /// Mean of the error series over the whole run.
    pub fn mean_error(&self, seed: u64, variant: &str) -> Option<f64> {
        self.run(seed, variant)?.error.mean()
    }

    /// Overall root-mean-square error, pooling every sample of the run.
    pub fn pooled_rmse(&self, seed: u64, variant: &str) -> Option<f64> {
        let s = &self.run(seed, variant)?.error;
        let mean_sq = s.samples.iter().map(|(_, v)| v * v).sum::<f64>() / s.samples.len() as f64;
        (!s.samples.is_empty()).then(|| mean_sq.sqrt())
    }
}

/// Runs every variant on every seed, each seed's variants on identical traces.
pub fn run_block_comparison(setup: &ComparisonSetup) -> Result<ComparisonOutput, ExperimentError> {
    if setup.variants.is_empty() {
        return Err(ExperimentError::Invalid("no variants".into()));
    }
    let programs = setup
        .variants
        .iter()
        .map(|v| Ok((v.name.clone(), blocks::program(&v.main)?)))
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    let per_seed: Vec<Vec<VariantRun>> = setup
        .seeds
        .par_iter()
        .map(|&seed| {
            let runs = programs
                .iter()
                .map(|(name, p)| run_variant(setup, seed, name, p))
                .collect::<Result<Vec<_>, _>>()?;
            if runs.windows(2).any(|w| w[0].schedule_hash != w[1].schedule_hash) {
                return Err(ExperimentError::ScheduleMismatch(seed));
            }
            Ok(runs)
        })
        .collect::<Result<_, ExperimentError>>()?;
    let scenario_text = format!("{:?}", setup.scenario(setup.seeds.first().copied().unwrap_or(0)));
    let mains: Vec<(String, String)> = setup.variants.iter().map(|v| (v.name.clone(), v.main.clone())).collect();
    let name = format!("compare-{}-{}", setup.family.name(), setup.mode);
    Ok(ComparisonOutput {
        setup: setup.clone(),
        runs: per_seed.into_iter().flatten().collect(),
        manifest: Manifest::new(&name, &setup.seeds, &scenario_text, &mains),
    })
}

fn num(v: &LocalValue) -> Option<f64> {
    v.as_num()
}

fn sources(sim: &Simulator<'_>) -> BTreeSet<DeviceId> {
    sim.config()
        .env
        .sensors
        .iter()
        .filter(|(_, s)| s.extras.get("sns_source").and_then(LocalValue::as_bool) == Some(true))
        .map(|(d, _)| *d)
        .collect()
}

fn run_variant(
    setup: &ComparisonSetup,
    seed: u64,
    name: &str,
    program: &crate::lang::Program,
) -> Result<VariantRun, ExperimentError> {
    let scenario = setup.scenario(seed);
    let builtins = BuiltinRegistry::standard();
    let mut sim = Simulator::new(&scenario, program, &builtins)?;
    let family = setup.family;
    let cap = setup.width + setup.height;
    let mut error = MetricSeries::new(family.error_metric());
    let mut snapshots: Vec<(f64, BTreeMap<DeviceId, f64>)> = Vec::new();
    drive(
        &mut sim,
        setup.grid,
        setup.grid,
        |sim, d| {
            if family == Family::T {
                let t = sim.peek_time().unwrap_or(0.0);
                let k = sim.firings(d);
                let noise = keyed_rng(seed, NOISE_STREAM, d, k).gen_range(-setup.noise..=setup.noise);
                sim.set_sensor(d, "sns_signal", LocalValue::num(setup.signal_at(t) + noise))?;
            }
            Ok(())
        },
        |t, sim, latest| {
            let field: BTreeMap<DeviceId, f64> = latest.iter().filter_map(|(d, (_, v))| Some((*d, num(v)?))).collect();
            let env = &sim.config().env;
            match family {
                Family::G => {
                    let truth = dijkstra(env, &sources(sim));
                    let errs: Vec<f64> = field
                        .iter()
                        .filter_map(|(d, est)| {
                            let r = *truth.get(d)?;
                            r.is_finite().then(|| if *est == r { 0.0 } else { (est - r).abs().min(cap) })
                        })
                        .collect();
                    if !errs.is_empty() {
                        error.push(t, errs.iter().sum::<f64>() / errs.len() as f64);
                    }
                }
                Family::C => {
                    if let Some(s) = sources(sim).into_iter().next() {
                        if let Some(est) = field.get(&s) {
                            let truth = component(env, s).len() as f64;
                            error.push(t, (est - truth).abs());
                        }
                    }
                }
                Family::T => {
                    let sq: Vec<f64> = latest
                        .iter()
                        .filter_map(|(_, (at, v))| Some((num(v)? - setup.signal_at(*at)).powi(2)))
                        .collect();
                    if !sq.is_empty() {
                        error.push(t, (sq.iter().sum::<f64>() / sq.len() as f64).sqrt());
                    }
                }
            }
            snapshots.push((t, field));
            Ok(())
        },
    )?;
    Ok(VariantRun {
        seed,
        variant: name.to_string(),
        error,
        stability: metric_value_stability("stability", &snapshots),
        schedule_hash: sim.schedule_hash(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(family: Family, mode: PerturbationMode) -> ComparisonSetup {
        let mut s = ComparisonSetup::new(family, mode, &[3]);
        s.devices = 20;
        s.width = 60.0;
        s.duration = 30.0;
        s
    }

    #[test]
    fn variants_share_the_schedule() {
        let out = run_block_comparison(&small(Family::G, PerturbationMode::SmallSpatial)).unwrap();
        let hashes: BTreeSet<&str> = out.runs.iter().map(|r| r.schedule_hash.as_str()).collect();
        assert_eq!(out.runs.len(), 3);
        assert_eq!(hashes.len(), 1);
    }

    #[test]
    fn constant_noiseless_signal_is_tracked_exactly() {
        let mut s = small(Family::T, PerturbationMode::SmallTemporal);
        s.signal = (0.0, 100.0);
        s.noise = 0.0;
        let out = run_block_comparison(&s).unwrap();
        for r in &out.runs {
            let tail = r.error.mean_between(10.0, 31.0).unwrap();
            assert!(tail.abs() < 1e-12, "{} {tail}", r.variant);
        }
    }

    #[test]
    fn frozen_gradients_reach_the_oracle() {
        let mut s = small(Family::G, PerturbationMode::SmallTemporal);
        s.variants.truncate(2);
        s.duration = 80.0;
        let out = run_block_comparison(&s).unwrap();
        for r in &out.runs {
            let last = r.error.samples.last().unwrap().1;
            assert!(last < 1e-9, "{} {last}", r.variant);
        }
    }

    #[test]
    fn large_spatial_switches_back_and_forth() {
        let mut s = ComparisonSetup::new(Family::G, PerturbationMode::LargeSpatial, &[1]);
        s.duration = 650.0;
        let sc = s.scenario(1);
        assert_eq!(s.switch_times(), vec![200.0, 400.0, 600.0]);
        let Perturbation::SwitchSensor { from, to, .. } = &sc.perturbations[1] else {
            panic!()
        };
        assert_eq!(sc.devices.overrides[0].device, *to);
        assert_ne!(from, to);
    }

    #[test]
    fn csv_rows_cover_both_metrics() {
        let out = run_block_comparison(&small(Family::C, PerturbationMode::SmallTemporal)).unwrap();
        let csv = out.to_csv();
        assert!(csv.starts_with("time,seed,variant,metric,value\n"));
        assert!(csv.contains(",3,C',error,"));
        assert!(csv.contains(",3,C,stability,"));
    }
}
