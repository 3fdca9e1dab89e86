//! Whole-network evolution: firings, environment changes and a seeded scheduler.

pub mod config;
pub mod scenario;
pub mod sim;
pub mod trace;

use thiserror::Error;

use crate::eval::EvalError;
use crate::value::DeviceId;

pub use config::{DeviceSensors, Environment, NetworkConfiguration, Point};
pub use scenario::{Jitter, Mobility, Perturbation, Placement, Scenario};
pub use sim::{run, run_with, Simulator, Step};
pub use trace::{Action, Trace, TraceRecord};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum NetError {
    #[error("device {device} failed at t={time}: {source}")]
    Eval {
        device: DeviceId,
        time: f64,
        source: EvalError,
    },
    #[error("ill-formed environment: {0}")]
    IllFormedEnvironment(String),
    #[error("unknown device {0}")]
    UnknownDevice(DeviceId),
    #[error("devices never fired: {0:?}")]
    NeverFired(Vec<DeviceId>),
    #[error("scenario: {0}")]
    Scenario(String),
    #[error("i/o: {0}")]
    Io(String),
}
