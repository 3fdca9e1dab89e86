//! Evacuation alerting from a hazard zone.
//!
//! A still coordinator just outside a disc-shaped zone raises an alert.
//! Devices inside the zone should then point along a path out of it, while
//! their holders walk to the nearest exit waypoint.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::{PI, TAU};

use rand::Rng;
use rayon::prelude::*;

use super::metrics::MetricSeries;
use super::{case_rows, check_paired, drive, keyed_rng, rows_to_csv, BlockChoice, CaseRun, ExperimentError, Manifest, MetricRow};
use crate::blocks;
use crate::eval::BuiltinRegistry;
use crate::net::scenario::{Arena, Devices, Jitter, Mobility, Perturbation, Placement, Schedule, SensorOverride, SensorValue};
use crate::net::{Point, Scenario, Simulator};
use crate::value::{DeviceId, LocalValue};

const PLACE_STREAM: u64 = 0xe7ac;
const GOAL_STREAM: u64 = 0x6a1e;

/// Error of one device: 0 when neither in danger nor alerted, the squared
/// normalised angle between suggested and ideal headings when both, 1 otherwise.
///
/// `suggested` is `None` when the device has no direction to offer.
pub fn evacuation_error(should_alert: bool, alerted: bool, suggested: Option<f64>, ideal: f64) -> f64 {
    match (should_alert, alerted) {
        (false, false) => 0.0,
        (true, true) => suggested.map_or(1.0, |a| {
            let d = (a - ideal).rem_euclid(TAU);
            (d.min(TAU - d) / PI).powi(2)
        }),
        _ => 1.0,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvacuationSetup {
    pub seeds: Vec<u64>,
    pub devices: u32,
    pub size: f64,
    pub zone_centre: Point,
    pub zone_radius: f64,
    pub comm_radius: f64,
    pub period: f64,
    pub duration: f64,
    pub alert_at: f64,
    /// Seconds between the alert and evacuees starting to walk.
    pub reaction: f64,
    /// Walking speed in m/s.
    pub speed: f64,
    /// Exit waypoints, evenly spaced just outside the zone boundary.
    pub waypoints: usize,
    pub variants: Vec<BlockChoice>,
}

impl EvacuationSetup {
    pub fn new(seeds: &[u64]) -> Self {
        EvacuationSetup {
            seeds: seeds.to_vec(),
            devices: 250,
            size: 400.0,
            zone_centre: Point::new(200.0, 200.0),
            zone_radius: 80.0,
            comm_radius: 50.0,
            period: 2.0,
            duration: 150.0,
            alert_at: 20.0,
            reaction: 10.0,
            speed: 1.4,
            waypoints: 8,
            variants: BlockChoice::all(),
        }
    }

    pub fn program_text(&self, choice: BlockChoice) -> String {
        let r = self.comm_radius;
        let coord = "mux(sns_coord(), 0, infinity)";
        let alerted = choice.track_bool(&choice.any(&choice.distance(coord, r), "sns_alert()"));
        let exits = format!("mux(sns_zone(), infinity, mux(G_broadcast({coord}, {alerted}), 0, infinity))");
        choice.distance(&exits, r)
    }

    pub fn in_zone(&self, p: Point) -> bool {
        p.dist(self.zone_centre) <= self.zone_radius
    }

    pub fn exits(&self) -> Vec<Point> {
        let r = self.zone_radius + 5.0;
        (0..self.waypoints)
            .map(|k| {
                let a = TAU * k as f64 / self.waypoints as f64;
                Point::new(self.zone_centre.x + r * a.cos(), self.zone_centre.y + r * a.sin())
            })
            .collect()
    }

    /// Where device `d` stops: within 5 m of its nearest exit, so that evacuees never coincide.
    pub fn destination(&self, seed: u64, d: DeviceId, from: Point) -> Point {
        let w = self.nearest_exit(from);
        let mut rng = keyed_rng(seed, GOAL_STREAM, d, 0);
        let r = 5.0 * rng.gen::<f64>().sqrt();
        let a = rng.gen::<f64>() * TAU;
        Point::new(w.x + r * a.cos(), w.y + r * a.sin())
    }

    pub fn nearest_exit(&self, p: Point) -> Point {
        self.exits()
            .into_iter()
            .min_by(|a, b| a.dist(p).total_cmp(&b.dist(p)))
            .expect("at least one waypoint")
    }

    /// Where the coordinator stands: east of the zone, 15 m past its edge.
    pub fn coordinator(&self) -> Point {
        Point::new(self.zone_centre.x + self.zone_radius + 15.0, self.zone_centre.y)
    }

    /// Device 0 is the coordinator; the rest are uniform.
    pub fn scenario(&self, seed: u64) -> Scenario {
        let mut rng = keyed_rng(seed, PLACE_STREAM, 0, 0);
        let mut positions = vec![self.coordinator()];
        positions.extend((1..self.devices).map(|_| Point::new(rng.gen::<f64>() * self.size, rng.gen::<f64>() * self.size)));
        Scenario {
            seed,
            duration: self.duration,
            arena: Arena {
                width: self.size,
                height: self.size,
                comm_radius: self.comm_radius,
            },
            devices: Devices {
                count: self.devices,
                placement: Placement::Explicit,
                positions,
                spacing: None,
                mobility: Mobility::Goal { speed: self.speed },
                sensors: BTreeMap::from([
                    ("sns_coord".to_string(), SensorValue::Bool(false)),
                    ("sns_alert".to_string(), SensorValue::Bool(false)),
                    ("sns_zone".to_string(), SensorValue::Bool(false)),
                ]),
                overrides: vec![SensorOverride {
                    device: 0,
                    sensor: "sns_coord".into(),
                    value: SensorValue::Bool(true),
                }],
                sns_num: None,
            },
            schedule: Schedule {
                base_period: self.period,
                jitter: Jitter::Uniform {
                    lo: 0.9 * self.period,
                    hi: 1.1 * self.period,
                },
                horizon: None,
            },
            perturbations: vec![Perturbation::SetSensor {
                at: self.alert_at,
                device: 0,
                sensor: "sns_alert".into(),
                value: SensorValue::Bool(true),
            }],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvacuationOutput {
    pub runs: Vec<CaseRun>,
    /// Smallest and largest single-device error seen in each run, in run order.
    pub device_error_bounds: Vec<(f64, f64)>,
    pub manifest: Manifest,
}

impl EvacuationOutput {
    pub fn run(&self, seed: u64, variant: &str) -> Option<&CaseRun> {
        self.runs.iter().find(|r| r.seed == seed && r.variant == variant)
    }

    pub fn rows(&self) -> Vec<MetricRow> {
        case_rows(&self.runs)
    }

    pub fn to_csv(&self) -> String {
        rows_to_csv(&self.rows())
    }
}

pub fn evacuation_scenario(setup: &EvacuationSetup) -> Result<EvacuationOutput, ExperimentError> {
    let programs = setup
        .variants
        .iter()
        .map(|c| Ok((c.name(), setup.program_text(*c), blocks::program(&setup.program_text(*c))?)))
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    let results: Vec<(CaseRun, (f64, f64))> = setup
        .seeds
        .par_iter()
        .map(|&seed| {
            programs
                .iter()
                .map(|(name, _, p)| run_one(setup, seed, name, p))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?
        .into_iter()
        .flatten()
        .collect();
    let (runs, device_error_bounds): (Vec<CaseRun>, Vec<(f64, f64)>) = results.into_iter().unzip();
    check_paired(&runs)?;
    let mains: Vec<(String, String)> = programs.iter().map(|(n, t, _)| (n.clone(), t.clone())).collect();
    let scenario_text = format!("{:?}", setup.scenario(setup.seeds.first().copied().unwrap_or(0)));
    Ok(EvacuationOutput {
        runs,
        device_error_bounds,
        manifest: Manifest::new("evacuation", &setup.seeds, &scenario_text, &mains),
    })
}

fn heading(from: Point, to: Point) -> f64 {
    (to.y - from.y).atan2(to.x - from.x)
}

fn run_one(
    setup: &EvacuationSetup,
    seed: u64,
    name: &str,
    program: &crate::lang::Program,
) -> Result<(CaseRun, (f64, f64)), ExperimentError> {
    let scenario = setup.scenario(seed);
    let builtins = BuiltinRegistry::standard();
    let mut sim = Simulator::new(&scenario, program, &builtins)?;
    let initially_inside: BTreeSet<DeviceId> = sim
        .positions()
        .into_iter()
        .filter(|(_, p)| setup.in_zone(*p))
        .map(|(d, _)| d)
        .collect();
    let n = initially_inside.len().max(1) as f64;
    let mut walking = BTreeSet::new();
    let mut error = MetricSeries::new("error");
    let mut bounds = (f64::INFINITY, f64::NEG_INFINITY);
    drive(
        &mut sim,
        setup.period,
        setup.period,
        |sim, d| {
            let t = sim.peek_time().unwrap_or(0.0);
            let p = sim.position(d).ok_or(crate::net::NetError::UnknownDevice(d))?;
            if d != 0 && t >= setup.alert_at + setup.reaction && initially_inside.contains(&d) && walking.insert(d) {
                sim.set_goal(d, Some(setup.destination(seed, d, p)));
            }
            sim.set_sensor(d, "sns_zone", LocalValue::Bool(setup.in_zone(p)))?;
            Ok(())
        },
        |t, sim, latest| {
            let out: BTreeMap<DeviceId, f64> = latest.iter().filter_map(|(d, (_, v))| Some((*d, v.as_num()?))).collect();
            let env = &sim.config().env;
            let mut total = 0.0;
            for (d, p) in sim.positions() {
                let should = setup.in_zone(p) && t >= setup.alert_at;
                let alerted = out.get(&d).is_some_and(|v| v.is_finite() && *v > 0.0);
                let toward = env
                    .neighbours(d)
                    .filter_map(|e| out.get(&e).map(|v| (*v, e)))
                    .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                    .and_then(|(_, e)| sim.position(e));
                let suggested = toward.map(|q| heading(p, q));
                let e = evacuation_error(should, alerted, suggested, heading(p, setup.nearest_exit(p)));
                bounds = (bounds.0.min(e), bounds.1.max(e));
                total += e;
            }
            error.push(t, total / n);
            Ok(())
        },
    )?;
    let run = CaseRun {
        seed,
        variant: name.to_string(),
        error,
        schedule_hash: sim.schedule_hash(),
    };
    Ok((run, bounds))
}
