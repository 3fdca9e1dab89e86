//! Scenario descriptions, read from TOML.
//!
//! ```toml
//! seed = 7
//! duration = 60.0
//!
//! [arena]
//! width = 200.0
//! height = 20.0
//! comm_radius = 30.0
//!
//! [devices]
//! count = 100
//! placement = "uniform"          # or "line", or "explicit" with `positions`
//! mobility = { kind = "random_walk", speed = 1.0 }
//! sensors = { source = false }
//! overrides = [{ device = 0, sensor = "source", value = true }]
//!
//! [schedule]
//! base_period = 1.0
//! jitter = { kind = "uniform", lo = 0.9, hi = 1.1 }
//!
//! [[perturbations]]
//! at = 30.0
//! kind = "set_sensor"
//! device = 0
//! sensor = "source"
//! value = false
//! ```

use std::collections::BTreeMap;

use serde::Deserialize;

use super::config::Point;
use super::NetError;
use crate::value::{DeviceId, LocalValue};

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    pub duration: f64,
    pub arena: Arena,
    pub devices: Devices,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default)]
    pub perturbations: Vec<Perturbation>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Arena {
    pub width: f64,
    pub height: f64,
    pub comm_radius: f64,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Devices {
    pub count: u32,
    #[serde(default)]
    pub placement: Placement,
    /// Coordinates for `placement = "explicit"`, one per device.
    #[serde(default)]
    pub positions: Vec<Point>,
    /// Spacing in metres for `placement = "line"`.
    #[serde(default)]
    pub spacing: Option<f64>,
    #[serde(default)]
    pub mobility: Mobility,
    /// Values of named sensors shared by every device.
    #[serde(default)]
    pub sensors: BTreeMap<String, SensorValue>,
    #[serde(default)]
    pub overrides: Vec<SensorOverride>,
    /// Reading of `snsNum()`; defaults to the device id.
    #[serde(default)]
    pub sns_num: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    #[default]
    Uniform,
    Line,
    Explicit,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Mobility {
    #[default]
    Still,
    RandomWalk { speed: f64 },
    /// Walks toward goals assigned through the simulator, standing still without one.
    Goal { speed: f64 },
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum SensorValue {
    Bool(bool),
    Int(i64),
    Float(f64),
    List(Vec<SensorValue>),
}

impl SensorValue {
    pub fn to_local(&self) -> LocalValue {
        match self {
            SensorValue::Bool(b) => LocalValue::Bool(*b),
            SensorValue::Int(i) => LocalValue::num(*i as f64),
            SensorValue::Float(x) => LocalValue::num(*x),
            SensorValue::List(items) => LocalValue::tuple(items.iter().map(SensorValue::to_local).collect()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorOverride {
    pub device: DeviceId,
    pub sensor: String,
    pub value: SensorValue,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    #[serde(default = "one")]
    pub base_period: f64,
    #[serde(default)]
    pub jitter: Jitter,
    /// Staleness horizon in seconds; three times the longest period when absent.
    #[serde(default)]
    pub horizon: Option<f64>,
}

fn one() -> f64 {
    1.0
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            base_period: 1.0,
            jitter: Jitter::Fixed,
            horizon: None,
        }
    }
}

/// How each device's period is chosen, once per run.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Jitter {
    #[default]
    Fixed,
    Uniform { lo: f64, hi: f64 },
}

/// A timed change of the environment.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Perturbation {
    SetSensor {
        at: f64,
        device: DeviceId,
        sensor: String,
        value: SensorValue,
    },
    /// Moves a boolean sensor from one device to another.
    SwitchSensor {
        at: f64,
        sensor: String,
        from: DeviceId,
        to: DeviceId,
    },
    Teleport { at: f64, device: DeviceId, x: f64, y: f64 },
    Remove { at: f64, device: DeviceId },
    Add { at: f64, device: DeviceId, x: f64, y: f64 },
}

impl Perturbation {
    pub fn at(&self) -> f64 {
        match self {
            Perturbation::SetSensor { at, .. }
            | Perturbation::SwitchSensor { at, .. }
            | Perturbation::Teleport { at, .. }
            | Perturbation::Remove { at, .. }
            | Perturbation::Add { at, .. } => *at,
        }
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Scenario, NetError> {
        let s: Scenario = toml::from_str(text).map_err(|e| NetError::Scenario(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |m: &str| Err(NetError::Scenario(m.to_string()));
        if !(self.arena.comm_radius > 0.0) {
            return bad("comm_radius must be positive");
        }
        if !(self.duration > 0.0) {
            return bad("duration must be positive");
        }
        if !(self.arena.width >= 0.0 && self.arena.height >= 0.0) {
            return bad("arena dimensions must be non-negative");
        }
        if !(self.schedule.base_period > 0.0) {
            return bad("base_period must be positive");
        }
        if let Jitter::Uniform { lo, hi } = self.schedule.jitter {
            if !(lo > 0.0 && lo <= hi) {
                return bad("jitter bounds must satisfy 0 < lo <= hi");
            }
        }
        if let Some(h) = self.schedule.horizon {
            if !(h > 0.0) {
                return bad("horizon must be positive");
            }
        }
        if self.devices.placement == Placement::Explicit
            && self.devices.positions.len() != self.devices.count as usize
        {
            return bad("explicit placement needs one position per device");
        }
        if let Some(v) = &self.devices.sns_num {
            if v.len() != self.devices.count as usize {
                return bad("sns_num needs one reading per device");
            }
        }
        for p in &self.perturbations {
            if !(p.at() >= 0.0) {
                return bad("perturbation times must be non-negative");
            }
        }
        Ok(())
    }

    /// Longest period any device can be assigned.
    pub fn max_period(&self) -> f64 {
        match self.schedule.jitter {
            Jitter::Fixed => self.schedule.base_period,
            Jitter::Uniform { hi, .. } => hi,
        }
    }

    pub fn horizon(&self) -> f64 {
        self.schedule.horizon.unwrap_or(3.0 * self.max_period())
    }

    /// Whether the environment stops changing once the perturbations are over.
    pub fn freezes(&self) -> bool {
        match self.devices.mobility {
            Mobility::Still => true,
            Mobility::RandomWalk { speed } | Mobility::Goal { speed } => speed == 0.0,
        }
    }

    /// Time of the last scheduled perturbation, or 0.
    pub fn last_perturbation(&self) -> f64 {
        self.perturbations.iter().map(Perturbation::at).fold(0.0, f64::max)
    }

    /// A still, fixed-period scenario over explicit positions.
    pub fn frozen(positions: Vec<Point>, comm_radius: f64, seed: u64, duration: f64) -> Scenario {
        let (w, h) = positions
            .iter()
            .fold((0.0f64, 0.0f64), |(w, h), p| (w.max(p.x), h.max(p.y)));
        Scenario {
            seed,
            duration,
            arena: Arena {
                width: w,
                height: h,
                comm_radius,
            },
            devices: Devices {
                count: positions.len() as u32,
                placement: Placement::Explicit,
                positions,
                spacing: None,
                mobility: Mobility::Still,
                sensors: BTreeMap::new(),
                overrides: Vec::new(),
                sns_num: None,
            },
            schedule: Schedule::default(),
            perturbations: Vec::new(),
        }
    }
}
