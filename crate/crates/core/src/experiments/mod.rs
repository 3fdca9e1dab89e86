//! Desk-scale block comparisons and case studies, reported as long-format CSV.
//!
//! Every variant of a comparison runs in its own simulation from the same seed.
//! Mobility, schedule and sensor noise never depend on the program, so the runs
//! see identical traces; their schedule hashes are checked to prove it.

pub mod comparison;
pub mod crowd;
pub mod evacuation;
pub mod metrics;

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::blocks::BlockError;
use crate::lang::LangError;
use crate::net::{NetError, Simulator, Step};
use crate::value::{DeviceId, LocalValue};

pub use comparison::{run_block_comparison, ComparisonOutput, ComparisonSetup, Family, Variant, VariantRun, COMPARISON_CRF_SPEED};
pub use crowd::{crowd_size_scenario, CrowdLayout, CrowdOutput, CrowdSetup};
pub use evacuation::{evacuation_error, evacuation_scenario, EvacuationOutput, EvacuationSetup};
pub use metrics::{metric_value_stability, settle_time, MetricSeries};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ExperimentError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Lang(#[from] LangError),
    #[error(transparent)]
    Block(#[from] BlockError),
    #[error("variants saw different schedules under seed {0}")]
    ScheduleMismatch(u64),
    #[error("{0}")]
    Invalid(String),
}

/// How the environment is disturbed during a comparison.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum PerturbationMode {
    /// Devices walk at 1 m/s in a fresh random direction every round.
    SmallSpatial,
    /// As `SmallSpatial`, and the source moves to an alternate device every 200 s.
    LargeSpatial,
    /// Still devices with periods uniform in `[1/1.1, 1/0.9]` s.
    SmallTemporal,
    /// Still devices with periods uniform in `[0.5, 2]` s.
    LargeTemporal,
}

impl PerturbationMode {
    pub const ALL: [PerturbationMode; 4] = [
        PerturbationMode::SmallSpatial,
        PerturbationMode::LargeSpatial,
        PerturbationMode::SmallTemporal,
        PerturbationMode::LargeTemporal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PerturbationMode::SmallSpatial => "small-spatial",
            PerturbationMode::LargeSpatial => "large-spatial",
            PerturbationMode::SmallTemporal => "small-temporal",
            PerturbationMode::LargeTemporal => "large-temporal",
        }
    }

    pub fn parse(s: &str) -> Option<PerturbationMode> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }

    pub fn is_spatial(self) -> bool {
        matches!(self, PerturbationMode::SmallSpatial | PerturbationMode::LargeSpatial)
    }
}

impl fmt::Display for PerturbationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One of the eight combinations of G or FLEX, C or multipath C, T or T'.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct BlockChoice {
    pub g_prime: bool,
    pub c_prime: bool,
    pub t_prime: bool,
}

impl BlockChoice {
    pub fn all() -> Vec<BlockChoice> {
        (0..8u8)
            .map(|k| BlockChoice {
                g_prime: k & 4 != 0,
                c_prime: k & 2 != 0,
                t_prime: k & 1 != 0,
            })
            .collect()
    }

    /// For example `G'+C+T`.
    pub fn name(self) -> String {
        let p = |b: bool| if b { "'" } else { "" };
        format!("G{}+C{}+T{}", p(self.g_prime), p(self.c_prime), p(self.t_prime))
    }

    pub fn distance(self, source: &str, radius: f64) -> String {
        if self.g_prime {
            format!("G'_flex_distance({source}, {radius:?})")
        } else {
            format!("G_distanceTo({source})")
        }
    }

    pub fn sum(self, potential: &str, value: &str) -> String {
        let c = if self.c_prime { "C'_sum" } else { "C_sum" };
        format!("{c}({potential}, {value})")
    }

    pub fn any(self, potential: &str, value: &str) -> String {
        let c = if self.c_prime { "C'_any" } else { "C_any" };
        format!("{c}({potential}, {value})")
    }

    pub fn track(self, value: &str) -> String {
        let t = if self.t_prime { "T'_track" } else { "T_track" };
        format!("{t}({value})")
    }

    /// Tracks a boolean through its 0/1 encoding.
    pub fn track_bool(self, value: &str) -> String {
        format!("({} > 0.5)", self.track(&format!("mux({value}, 1, 0)")))
    }
}

/// One CSV line: `time, seed, variant, metric, value`.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub time: f64,
    pub seed: u64,
    pub variant: String,
    pub metric: String,
    pub value: f64,
}

pub fn write_rows<W: Write>(rows: &[MetricRow], out: W) -> Result<(), ExperimentError> {
    let io = |e: csv::Error| ExperimentError::Net(NetError::Io(e.to_string()));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time", "seed", "variant", "metric", "value"]).map_err(io)?;
    for r in rows {
        w.write_record([
            r.time.to_string(),
            r.seed.to_string(),
            r.variant.clone(),
            r.metric.clone(),
            r.value.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| ExperimentError::Net(NetError::Io(e.to_string())))?;
    Ok(())
}

pub fn rows_to_csv(rows: &[MetricRow]) -> String {
    let mut buf = Vec::new();
    write_rows(rows, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv is utf-8")
}

/// Reproducibility record written next to an experiment's CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub experiment: String,
    pub seeds: Vec<u64>,
    pub scenario_sha256: String,
    /// Variant name and hash of its program text.
    pub programs: Vec<(String, String)>,
    pub toolchain: String,
}

impl Manifest {
    pub fn new(experiment: &str, seeds: &[u64], scenario: &str, programs: &[(String, String)]) -> Self {
        Manifest {
            experiment: experiment.to_string(),
            seeds: seeds.to_vec(),
            scenario_sha256: sha256_hex(scenario),
            programs: programs.iter().map(|(n, p)| (n.clone(), sha256_hex(p))).collect(),
            toolchain: format!("fieldcalc {}", env!("CARGO_PKG_VERSION")),
        }
    }
}

impl fmt::Display for Manifest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "experiment = {:?}", self.experiment)?;
        writeln!(f, "seeds = {:?}", self.seeds)?;
        writeln!(f, "scenario_sha256 = {:?}", self.scenario_sha256)?;
        writeln!(f, "toolchain = {:?}", self.toolchain)?;
        writeln!(f, "\n[programs]")?;
        for (n, h) in &self.programs {
            writeln!(f, "{n:?} = {h:?}")?;
        }
        Ok(())
    }
}

pub fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// A generator for per-device, per-firing randomness that no program can disturb.
pub(crate) fn keyed_rng(seed: u64, stream: u64, device: DeviceId, k: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ stream.rotate_left(17));
    rng.set_stream(u64::from(device) << 32 | (k & 0xffff_ffff));
    rng
}

/// Series of one program variant under one seed.
#[derive(Clone, Debug, PartialEq)]
pub struct CaseRun {
    pub seed: u64,
    pub variant: String,
    pub error: MetricSeries,
    pub schedule_hash: String,
}

/// Long-format rows of every run's error series.
pub(crate) fn case_rows(runs: &[CaseRun]) -> Vec<MetricRow> {
    runs.iter()
        .flat_map(|r| {
            r.error.samples.iter().map(move |(t, v)| MetricRow {
                time: *t,
                seed: r.seed,
                variant: r.variant.clone(),
                metric: r.error.name.clone(),
                value: *v,
            })
        })
        .collect()
}

pub(crate) fn check_paired(runs: &[CaseRun]) -> Result<(), ExperimentError> {
    for w in runs.windows(2) {
        if w[0].seed == w[1].seed && w[0].schedule_hash != w[1].schedule_hash {
            return Err(ExperimentError::ScheduleMismatch(w[0].seed));
        }
    }
    Ok(())
}

/// Latest own value of each device and when it was produced.
pub type Latest = BTreeMap<DeviceId, (f64, LocalValue)>;

/// Steps `sim` to the end, calling `before` ahead of every firing and `sample`
/// at `start`, `start + grid`, ... with the state reached just before that time.
pub(crate) fn drive(
    sim: &mut Simulator<'_>,
    start: f64,
    grid: f64,
    mut before: impl FnMut(&mut Simulator<'_>, DeviceId) -> Result<(), ExperimentError>,
    mut sample: impl FnMut(f64, &Simulator<'_>, &Latest) -> Result<(), ExperimentError>,
) -> Result<(), ExperimentError> {
    let duration = sim.scenario().duration;
    let mut latest = Latest::new();
    let mut k = 0u32;
    let grid_time = |k: u32| start + f64::from(k) * grid;
    loop {
        let next = sim.peek_time();
        while grid_time(k) <= duration && next.map_or(true, |t| t > grid_time(k)) {
            sample(grid_time(k), sim, &latest)?;
            k += 1;
        }
        if next.is_none() {
            return Ok(());
        }
        if let Some(d) = sim.peek_device() {
            before(sim, d)?;
        }
        if let Some(Step::Fired { time, device, tree }) = sim.step()? {
            if let Some(v) = tree.root.as_local() {
                latest.insert(device, (time, v.clone()));
            }
        }
    }
}
