//! Crowd-size estimation around two acts.
//!
//! People walk toward a spot near one of two acts; a person is part of a crowd
//! when enough others stand close by. Each act estimates how many crowd members
//! are watching it, and is scored against a geometric ground truth.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::Rng;
use rayon::prelude::*;

use super::metrics::MetricSeries;
use super::{case_rows, check_paired, drive, keyed_rng, rows_to_csv, BlockChoice, CaseRun, ExperimentError, Manifest, MetricRow};
use crate::blocks;
use crate::eval::BuiltinRegistry;
use crate::net::scenario::{Arena, Devices, Jitter, Mobility, Placement, Schedule, SensorOverride, SensorValue};
use crate::net::{Point, Scenario, Simulator};
use crate::value::{DeviceId, LocalValue};

const GOAL_STREAM: u64 = 0xc20d;
const PLACE_STREAM: u64 = 0x91ac;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CrowdLayout {
    /// People start uniformly in the arena and walk toward a random act.
    Walking,
    /// People stand still on a tight grid around the first act; the second act is out of range.
    Clustered { spacing: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct CrowdSetup {
    pub seeds: Vec<u64>,
    pub layout: CrowdLayout,
    pub people: u32,
    pub width: f64,
    pub height: f64,
    pub acts: [Point; 2],
    pub comm_radius: f64,
    pub period: f64,
    pub duration: f64,
    /// Walking speed in m/s.
    pub speed: f64,
    /// Radius of the spot around an act that each person heads for.
    pub spread: f64,
    /// A person is in a crowd with at least `crowd_min` others within `crowd_radius` metres.
    pub crowd_radius: f64,
    pub crowd_min: usize,
    /// Crowd members closer than this belong to one region; a region touching an act within this distance watches it.
    pub link: f64,
    pub variants: Vec<BlockChoice>,
}

impl CrowdSetup {
    pub fn new(seeds: &[u64]) -> Self {
        CrowdSetup {
            seeds: seeds.to_vec(),
            layout: CrowdLayout::Walking,
            people: 120,
            width: 600.0,
            height: 300.0,
            acts: [Point::new(150.0, 150.0), Point::new(450.0, 150.0)],
            comm_radius: 40.0,
            period: 5.0,
            duration: 600.0,
            speed: 1.4,
            spread: 15.0,
            crowd_radius: 10.0,
            crowd_min: 3,
            link: 20.0,
            variants: BlockChoice::all(),
        }
    }

    /// Still people packed around the first act, with the second act disconnected.
    pub fn degenerate(seeds: &[u64], people: u32) -> Self {
        CrowdSetup {
            layout: CrowdLayout::Clustered { spacing: 1.5 },
            people,
            duration: 200.0,
            ..CrowdSetup::new(seeds)
        }
    }

    pub fn program_text(&self, choice: BlockChoice) -> String {
        let potential = choice.distance("mux(sns_act(), 0, infinity)", self.comm_radius);
        choice.track(&choice.sum(&potential, &choice.track("sns_crowd()")))
    }

    fn positions(&self, seed: u64) -> Vec<Point> {
        let mut out = self.acts.to_vec();
        match self.layout {
            CrowdLayout::Walking => {
                let mut rng = keyed_rng(seed, PLACE_STREAM, 0, 0);
                out.extend((0..self.people).map(|_| Point::new(rng.gen::<f64>() * self.width, rng.gen::<f64>() * self.height)));
            }
            CrowdLayout::Clustered { spacing } => {
                let side = (f64::from(self.people).sqrt().ceil() as u32).max(1);
                let c = self.acts[0];
                let off = f64::from(side - 1) * spacing / 2.0;
                out.extend((0..self.people).map(|k| {
                    let (i, j) = (k % side, k / side);
                    Point::new(c.x - off + f64::from(i) * spacing, c.y + spacing + f64::from(j) * spacing)
                }));
            }
        }
        out
    }

    pub fn scenario(&self, seed: u64) -> Scenario {
        let positions = self.positions(seed);
        let overrides = (0..2)
            .map(|d| SensorOverride {
                device: d,
                sensor: "sns_act".into(),
                value: SensorValue::Bool(true),
            })
            .collect();
        Scenario {
            seed,
            duration: self.duration,
            arena: Arena {
                width: self.width,
                height: self.height,
                comm_radius: self.comm_radius,
            },
            devices: Devices {
                count: positions.len() as u32,
                placement: Placement::Explicit,
                positions,
                spacing: None,
                mobility: Mobility::Goal { speed: self.speed },
                sensors: BTreeMap::from([
                    ("sns_act".to_string(), SensorValue::Bool(false)),
                    ("sns_crowd".to_string(), SensorValue::Float(0.0)),
                ]),
                overrides,
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
            perturbations: Vec::new(),
        }
    }

    fn goal(&self, seed: u64, d: DeviceId) -> Point {
        let mut rng = keyed_rng(seed, GOAL_STREAM, d, 0);
        let act = self.acts[usize::from(rng.gen_bool(0.5))];
        let r = self.spread * rng.gen::<f64>().sqrt();
        let a = rng.gen::<f64>() * std::f64::consts::TAU;
        Point::new(act.x + r * a.cos(), act.y + r * a.sin())
    }
}

/// Whether each person has at least `min` others within `radius`.
pub fn crowd_flags(people: &BTreeMap<DeviceId, Point>, radius: f64, min: usize) -> BTreeMap<DeviceId, bool> {
    people
        .iter()
        .map(|(d, p)| {
            let close = people.iter().filter(|(e, q)| *e != d && p.dist(**q) <= radius).count();
            (*d, close >= min)
        })
        .collect()
}

/// True number of crowd members watching each act.
///
/// Crowd members within `link` of each other form regions. A member counts for
/// its nearest act when its region comes within `link` of some act.
pub fn watchers(acts: &[Point], people: &BTreeMap<DeviceId, Point>, radius: f64, min: usize, link: f64) -> Vec<usize> {
    let flags = crowd_flags(people, radius, min);
    let crowd: Vec<Point> = people.iter().filter(|(d, _)| flags[*d]).map(|(_, p)| *p).collect();
    let mut counts = vec![0; acts.len()];
    let mut seen = BTreeSet::new();
    for start in 0..crowd.len() {
        if !seen.insert(start) {
            continue;
        }
        let mut region = vec![start];
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            for j in 0..crowd.len() {
                if crowd[i].dist(crowd[j]) <= link && seen.insert(j) {
                    region.push(j);
                    queue.push_back(j);
                }
            }
        }
        let reaches = region.iter().any(|&i| acts.iter().any(|a| a.dist(crowd[i]) <= link));
        if reaches {
            for &i in &region {
                let nearest = (0..acts.len())
                    .min_by(|&a, &b| acts[a].dist(crowd[i]).total_cmp(&acts[b].dist(crowd[i])))
                    .expect("at least one act");
                counts[nearest] += 1;
            }
        }
    }
    counts
}

#[derive(Clone, Debug, PartialEq)]
pub struct CrowdOutput {
    pub runs: Vec<CaseRun>,
    pub manifest: Manifest,
}

impl CrowdOutput {
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

/// Runs every variant on every seed and scores the acts' estimates.
pub fn crowd_size_scenario(setup: &CrowdSetup) -> Result<CrowdOutput, ExperimentError> {
    let programs = setup
        .variants
        .iter()
        .map(|c| Ok((c.name(), setup.program_text(*c), blocks::program(&setup.program_text(*c))?)))
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    let runs: Vec<CaseRun> = setup
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
    check_paired(&runs)?;
    let mains: Vec<(String, String)> = programs.iter().map(|(n, t, _)| (n.clone(), t.clone())).collect();
    let scenario_text = format!("{:?}", setup.scenario(setup.seeds.first().copied().unwrap_or(0)));
    Ok(CrowdOutput {
        runs,
        manifest: Manifest::new("crowd-size", &setup.seeds, &scenario_text, &mains),
    })
}

fn people_of(sim: &Simulator<'_>) -> BTreeMap<DeviceId, Point> {
    sim.positions().into_iter().filter(|(d, _)| *d >= 2).collect()
}

fn run_one(setup: &CrowdSetup, seed: u64, name: &str, program: &crate::lang::Program) -> Result<CaseRun, ExperimentError> {
    let scenario = setup.scenario(seed);
    let builtins = BuiltinRegistry::standard();
    let mut sim = Simulator::new(&scenario, program, &builtins)?;
    if setup.layout == CrowdLayout::Walking {
        for d in 2..scenario.devices.count {
            sim.set_goal(d, Some(setup.goal(seed, d)));
        }
    }
    let mut error = MetricSeries::new("error");
    drive(
        &mut sim,
        setup.period,
        setup.period,
        |sim, d| {
            if d >= 2 {
                let people = people_of(sim);
                let p = people[&d];
                let close = people.iter().filter(|(e, q)| **e != d && p.dist(**q) <= setup.crowd_radius).count();
                let v = if close >= setup.crowd_min { 1.0 } else { 0.0 };
                sim.set_sensor(d, "sns_crowd", LocalValue::num(v))?;
            }
            Ok(())
        },
        |t, sim, latest| {
            let truth = watchers(&setup.acts, &people_of(sim), setup.crowd_radius, setup.crowd_min, setup.link);
            let estimates: Option<Vec<f64>> = (0..2).map(|a| latest.get(&a).and_then(|(_, v)| v.as_num())).collect();
            if let Some(est) = estimates {
                let e = est.iter().zip(&truth).map(|(p, w)| (p - *w as f64).abs()).sum::<f64>() / 2.0;
                error.push(t, e);
            }
            Ok(())
        },
    )?;
    Ok(CaseRun {
        seed,
        variant: name.to_string(),
        error,
        schedule_hash: sim.schedule_hash(),
    })
}
