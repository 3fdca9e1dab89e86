//! Acceptance criteria 1 to 10, one PASS/FAIL line each.
//!
//! `ACCEPTANCE_ONLY=3,5 cargo test --test acceptance -- --nocapture` runs a subset.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use fieldcalc::blocks;
use fieldcalc::eval::{parse_tree, to_notation, BuiltinRegistry, Evaluator, ValueTree, ValueTreeEnv};
use fieldcalc::experiments::{
    crowd_size_scenario, evacuation_scenario, run_block_comparison, BlockChoice, ComparisonSetup, CrowdSetup,
    EvacuationSetup, Family, PerturbationMode,
};
use fieldcalc::lang::{parse, Program};
use fieldcalc::net::scenario::{SensorOverride, SensorValue};
use fieldcalc::net::{run, DeviceSensors, Environment, NetworkConfiguration, Point, Scenario};
use fieldcalc::stability::properties::{local_subject, neighbourhood, neighbourhood_subject, uniform};
use fieldcalc::stability::{
    check_fragment, empirical_selfstab, empirical_selfstab_with, eventual_equivalence, validate_property, Clause,
    OrderSpec, Property, PropertyAnnotation, RepVerdict, Registry, Sample, SelfStabOptions,
};
use fieldcalc::value::{DeviceId, DeviceNaming, LocalValue, Value};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

struct Criterion {
    number: u32,
    title: &'static str,
    budget: Duration,
    check: fn() -> Outcome,
}

const CRITERIA: [Criterion; 10] = [
    Criterion { number: 1, title: "value-tree golden sequence", budget: Duration::from_secs(1), check: golden_sequence },
    Criterion { number: 2, title: "rep counter", budget: Duration::from_secs(1), check: rep_counter },
    Criterion { number: 3, title: "gradients match shortest paths", budget: Duration::from_secs(60), check: gradient_oracles },
    Criterion { number: 4, title: "collection exactness", budget: Duration::from_secs(60), check: collection_exactness },
    Criterion { number: 5, title: "self-stabilisation battery", budget: Duration::from_secs(300), check: selfstab_battery },
    Criterion { number: 6, title: "substitutability", budget: Duration::from_secs(300), check: substitutability },
    Criterion { number: 7, title: "block comparison trends", budget: Duration::from_secs(900), check: comparison_trends },
    Criterion { number: 8, title: "case-study metrics", budget: Duration::from_secs(600), check: case_studies },
    Criterion { number: 9, title: "worked property examples", budget: Duration::from_secs(60), check: property_examples },
    Criterion { number: 10, title: "determinism", budget: Duration::from_secs(120), check: determinism },
];

#[test]
fn acceptance_criteria() {
    let only: Option<BTreeSet<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut failed = Vec::new();
    for c in CRITERIA.iter().filter(|c| only.as_ref().map_or(true, |o| o.contains(&c.number))) {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if took > c.budget => Err(format!("{detail}; over the {:?} budget", c.budget)),
            o => o,
        };
        let (verdict, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("criterion {:>2} {verdict} {} ({:.1}s): {detail}", c.number, c.title, took.as_secs_f64());
        if outcome.is_err() {
            failed.push(c.number);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

// ---------------------------------------------------------------- helpers

fn n(x: f64) -> LocalValue {
    LocalValue::num(x)
}

fn tree(s: &str) -> ValueTree {
    parse_tree(s).unwrap_or_else(|e| panic!("{s}: {e}"))
}

/// Random connected geometric graph in a `side` square, resampled until connected.
fn connected_positions(rng: &mut ChaCha8Rng, count: usize, side: f64, radius: f64) -> Vec<Point> {
    loop {
        let pts: Vec<Point> = (0..count).map(|_| Point::new(rng.gen::<f64>() * side, rng.gen::<f64>() * side)).collect();
        let mut seen = BTreeSet::from([0usize]);
        let mut queue = VecDeque::from([0usize]);
        while let Some(i) = queue.pop_front() {
            for j in 0..count {
                if pts[i].dist(pts[j]) <= radius && seen.insert(j) {
                    queue.push_back(j);
                }
            }
        }
        if seen.len() == count {
            return pts;
        }
    }
}

fn frozen(positions: Vec<Point>, radius: f64, seed: u64, flags: &[bool]) -> Scenario {
    let mut s = Scenario::frozen(positions, radius, seed, 1000.0);
    s.devices.sensors.insert("sns_source".into(), SensorValue::Bool(false));
    s.devices.sensors.insert("sns_flag".into(), SensorValue::Bool(false));
    s.devices.overrides.push(SensorOverride {
        device: 0,
        sensor: "sns_source".into(),
        value: SensorValue::Bool(true),
    });
    for (d, f) in flags.iter().enumerate() {
        if *f {
            s.devices.overrides.push(SensorOverride {
                device: d as DeviceId,
                sensor: "sns_flag".into(),
                value: SensorValue::Bool(true),
            });
        }
    }
    s
}

/// Plain O(n²) Dijkstra from device 0 with edge weights `w(distance)`.
fn shortest_from_zero(pts: &[Point], radius: f64, w: impl Fn(f64) -> f64) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; pts.len()];
    let mut done = vec![false; pts.len()];
    dist[0] = 0.0;
    for _ in 0..pts.len() {
        let Some(u) = (0..pts.len()).filter(|i| !done[*i]).min_by(|a, b| dist[*a].total_cmp(&dist[*b])) else {
            break;
        };
        done[u] = true;
        for v in 0..pts.len() {
            let r = pts[u].dist(pts[v]);
            if v != u && r <= radius {
                dist[v] = dist[v].min(dist[u] + w(r));
            }
        }
    }
    dist
}

fn stable_field(p: &Program, s: &Scenario, rounds: usize) -> Result<BTreeMap<DeviceId, LocalValue>, String> {
    let v = empirical_selfstab(p, s, 1, 1, rounds).map_err(|e| e.to_string())?;
    ensure!(v.stabilised, "no stable state within {rounds} rounds");
    Ok(v.stable_field)
}

fn num_of(v: &LocalValue) -> f64 {
    v.as_num().unwrap_or(f64::NAN)
}

// ---------------------------------------------------------------- 1

fn golden_sequence() -> Outcome {
    let (a, b, c) = (1, 2, 3);
    let sensors = |x: f64| DeviceSensors {
        sns_num: x,
        ..DeviceSensors::default()
    };
    let env = Environment {
        topology: BTreeMap::from([(a, BTreeSet::from([b])), (b, BTreeSet::from([a, c])), (c, BTreeSet::from([b]))]),
        sensors: BTreeMap::from([(a, sensors(1.0)), (b, sensors(2.0)), (c, sensors(3.0))]),
    };
    let mut net = NetworkConfiguration::with_environment(env).map_err(|e| e.to_string())?;
    ensure!(net.status_field().values().all(|e| e.is_empty()), "initial status not empty");
    let p = parse("minHood+(nbr{snsNum()})").unwrap();
    let builtins = BuiltinRegistry::standard();
    let ev = Evaluator::new(&p, &builtins);

    let theta_a = tree("1⟨(δA↦1)⟨1⟩⟩");
    let theta_c = tree("3⟨(δC↦3)⟨3⟩⟩");
    let theta_b = tree("1⟨(δA↦1, δB↦2, δC↦3)⟨2⟩⟩");
    let env_of = |items: &[(DeviceId, &ValueTree)]| -> ValueTreeEnv {
        items.iter().map(|(d, t)| (*d, Arc::new((*t).clone()))).collect()
    };

    let fired = net.fire(a, &ev).map_err(|e| e.to_string())?;
    ensure!(*fired == theta_a, "θ_A = {}", to_notation(&fired, DeviceNaming::Alpha));
    let psi1 = BTreeMap::from([(a, env_of(&[(a, &theta_a)])), (b, env_of(&[(a, &theta_a)])), (c, ValueTreeEnv::new())]);
    ensure!(*net.status_field() == psi1, "first status update differs");

    let fired = net.fire(c, &ev).map_err(|e| e.to_string())?;
    ensure!(*fired == theta_c, "θ_C = {}", to_notation(&fired, DeviceNaming::Alpha));
    let psi2 = BTreeMap::from([
        (a, env_of(&[(a, &theta_a)])),
        (b, env_of(&[(a, &theta_a), (c, &theta_c)])),
        (c, env_of(&[(c, &theta_c)])),
    ]);
    ensure!(*net.status_field() == psi2, "second status update differs");

    let fired = net.fire(b, &ev).map_err(|e| e.to_string())?;
    ensure!(*fired == theta_b, "θ_B = {}", to_notation(&fired, DeviceNaming::Alpha));
    let psi3 = BTreeMap::from([
        (a, env_of(&[(a, &theta_a), (b, &theta_b)])),
        (b, env_of(&[(a, &theta_a), (b, &theta_b), (c, &theta_c)])),
        (c, env_of(&[(b, &theta_b), (c, &theta_c)])),
    ]);
    ensure!(*net.status_field() == psi3, "third status update differs");
    Ok(format!(
        "θ_A {}, θ_C {}, θ_B {}; three status updates equal",
        to_notation(&theta_a, DeviceNaming::Alpha),
        to_notation(&theta_c, DeviceNaming::Alpha),
        to_notation(&theta_b, DeviceNaming::Alpha)
    ))
}

// ---------------------------------------------------------------- 2

fn rep_counter() -> Outcome {
    let env = Environment {
        topology: BTreeMap::from([(1, BTreeSet::new())]),
        sensors: BTreeMap::from([(1, DeviceSensors::default())]),
    };
    let mut net = NetworkConfiguration::with_environment(env).map_err(|e| e.to_string())?;
    let p = parse("rep(0){(x) => +(x, 1)}").unwrap();
    let builtins = BuiltinRegistry::standard();
    let ev = Evaluator::new(&p, &builtins);
    let mut roots = Vec::new();
    for _ in 0..3 {
        roots.push(net.fire(1, &ev).map_err(|e| e.to_string())?.root.clone());
    }
    let want: Vec<Value> = [1.0, 2.0, 3.0].map(|x| Value::Local(n(x))).to_vec();
    ensure!(roots == want, "roots {roots:?}");
    Ok("1, 2, 3".into())
}

// ---------------------------------------------------------------- 3

fn gradient_oracles() -> Outcome {
    let (count, side, radius) = (30, 100.0, 30.0);
    let distortion = 0.2;
    let g = blocks::entry("G_distanceTo").unwrap().default_program().unwrap();
    let crf = blocks::entry("CRF").unwrap().default_program().unwrap();
    let flex = blocks::entry("FLEX")
        .unwrap()
        .program(&BTreeMap::from([("radius".to_string(), radius), ("distortion".to_string(), distortion)]))
        .unwrap();
    let mut worst = [0.0f64; 3];
    for graph in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0x3000 + graph);
        let pts = connected_positions(&mut rng, count, side, radius);
        let plain = shortest_from_zero(&pts, radius, |r| r);
        let distorted = shortest_from_zero(&pts, radius, |r| r.max(distortion * radius));
        let s = frozen(pts, radius, graph, &[]);
        for (k, (name, p, truth)) in [("G", &g, &plain), ("CRF", &crf, &plain), ("FLEX", &flex, &distorted)]
            .into_iter()
            .enumerate()
        {
            let field = stable_field(p, &s, 500).map_err(|e| format!("graph {graph} {name}: {e}"))?;
            for (d, v) in &field {
                let err = (num_of(v) - truth[*d as usize]).abs();
                ensure!(err <= 1e-9, "graph {graph} {name} device {d}: {v} against {}", truth[*d as usize]);
                worst[k] = worst[k].max(err);
            }
        }
    }
    Ok(format!(
        "20 graphs; largest deviations G {:.1e}, CRF {:.1e}, FLEX {:.1e}",
        worst[0], worst[1], worst[2]
    ))
}

// ---------------------------------------------------------------- 4

fn collection_exactness() -> Outcome {
    let (count, side, radius) = (30, 100.0, 30.0);
    let programs: Vec<(&str, Program)> = ["C_sum", "C'_sum", "C_any", "C'_any"]
        .iter()
        .map(|name| (*name, blocks::entry(name).unwrap().default_program().unwrap()))
        .collect();
    let mut worst_prime = 0.0f64;
    let mut any_true = 0;
    for net in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0x4000 + net);
        let pts = connected_positions(&mut rng, count, side, radius);
        let p_flag = [0.0, 0.02, 0.1][net as usize % 3];
        let flags: Vec<bool> = (0..count).map(|_| rng.gen_bool(p_flag)).collect();
        let or = flags.iter().any(|f| *f);
        any_true += usize::from(or);
        let s = frozen(pts, radius, net, &flags);
        for (name, p) in &programs {
            let field = stable_field(p, &s, 500).map_err(|e| format!("network {net} {name}: {e}"))?;
            let at_source = &field[&0];
            match *name {
                "C_sum" => ensure!(*at_source == n(count as f64), "network {net} C_sum {at_source}"),
                "C'_sum" => {
                    let err = (num_of(at_source) - count as f64).abs();
                    ensure!(err <= 1e-6, "network {net} C'_sum {at_source}");
                    worst_prime = worst_prime.max(err);
                }
                _ => ensure!(*at_source == LocalValue::Bool(or), "network {net} {name} {at_source}, expected {or}"),
            }
        }
    }
    Ok(format!("20 networks ({any_true} with a flag set); C'_sum off by at most {worst_prime:.1e}"))
}

// ---------------------------------------------------------------- 5

fn battery() -> Vec<Scenario> {
    (0..5u64)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5000 + k);
            let pts = connected_positions(&mut rng, 8, 40.0, 20.0);
            let flags: Vec<bool> = (0..8).map(|_| rng.gen_bool(0.2)).collect();
            frozen(pts, 20.0, 50 + k, &flags)
        })
        .collect()
}

const FILTER: &str = "def filter(v) { rep (v) { (x) => (v+x)/2 } }";
const F2C: &str = "def f2C(v, p) { rep (v) { (x) => max(maxHood+(mux(nbrlt(p), nbr{x}, 0)), v) } }";
const HOPCOUNT: &str = "def hopcount(v) { rep (v) { (x) => min(minHood(nbr{x}) + 1, v) } }";
const F1: &str = "def f1(v) { rep (v) { (x) => v-x } }";
const F2: &str = "def f2(v) { rep (v) { (x) => max(maxHood+(nbr{x}), v) } }";
const F3: &str = "def f3(v) { rep (v) { (x) => min(minHood(nbr{x}) - 1, v) } }";

fn selfstab_battery() -> Outcome {
    let scenarios = battery();
    let mut subjects: Vec<(String, Program)> = blocks::catalog()
        .iter()
        .map(|e| (e.name.clone(), e.default_program().unwrap()))
        .collect();
    for (name, text) in [
        ("filter", format!("{FILTER}\nfilter(snsNum())")),
        ("f2C", format!("{F2C}\nf2C(snsNum(), snsNum())")),
        ("hopcount", format!("{HOPCOUNT}\nhopcount(mux(sns_source(), 0, infinity))")),
    ] {
        subjects.push((name.to_string(), parse(&text).unwrap()));
    }
    let opts = SelfStabOptions::new(5, 5, 2000);
    let mut slowest = (String::new(), 0usize);
    for (name, p) in &subjects {
        for (k, s) in scenarios.iter().enumerate() {
            let v = empirical_selfstab_with(p, s, &opts).map_err(|e| format!("{name} scenario {k}: {e}"))?;
            ensure!(v.runs == 25, "{name}: {} runs", v.runs);
            ensure!(v.self_stabilising(), "{name} scenario {k}: stabilised {} agreement {}", v.stabilised, v.agreement_across_runs);
            if v.rounds_to_stable > slowest.1 {
                slowest = (name.clone(), v.rounds_to_stable);
            }
        }
    }

    for (name, defs, reason) in [("f1", F1, "oscillation"), ("f2", F2, "state preservation"), ("f3", F3, "divergence")] {
        let p = parse(&format!("{defs}\n{name}(snsNum())")).unwrap();
        let report = check_fragment(&p, &Registry::default()).map_err(|e| e.to_string())?;
        ensure!(!report.accepted(), "{name} accepted");
        match &report.sites[0].verdict {
            RepVerdict::Unclassified(why) => ensure!(why.contains(reason), "{name}: {why}"),
            v => return Err(format!("{name}: {v}")),
        }
    }

    let f2 = parse(&format!("{F2}\nf2(snsNum())")).unwrap();
    let mut spurious = SelfStabOptions::new(2, 1, 200);
    spurious.spurious = Some((2, 1000.0));
    for (k, s) in scenarios.iter().enumerate() {
        let v = empirical_selfstab_with(&f2, s, &spurious).map_err(|e| e.to_string())?;
        ensure!(v.stabilised && !v.agreement_across_runs, "f2 scenario {k}: {v:?}");
    }
    Ok(format!(
        "{} programs × 5 scenarios × 25 runs agree (slowest {} in {} rounds); f1/f2/f3 unclassified; f2 keeps a spurious maximum",
        subjects.len(),
        slowest.0,
        slowest.1
    ))
}

// ---------------------------------------------------------------- 6

fn substitutability() -> Outcome {
    let scenarios = battery();
    let src = "mux(sns_source(), 0, infinity)";
    let hop = |init: &str| format!("rep({init}){{(x) => min(minHood(nbr{{x}}) + 1, {src})}}");
    let pairs: Vec<(&str, Program, Program)> = vec![
        ("init ∞ vs 0", parse(&hop("infinity")).unwrap(), parse(&hop("0")).unwrap()),
        ("init ∞ vs snsNum()", parse(&hop("infinity")).unwrap(), parse(&hop("snsNum()")).unwrap()),
        (
            "CRF raise vs identity",
            blocks::program(&format!("1st(CRF({src}, 1.0)(nbrRange))")).unwrap(),
            blocks::program(&format!("G_distanceTo({src})")).unwrap(),
        ),
        (
            "filter vs its input",
            parse(&format!("{FILTER}\nfilter(snsNum() * 3)")).unwrap(),
            parse("snsNum() * 3").unwrap(),
        ),
        (
            "T_track vs its input",
            blocks::program("T_track(snsNum() + 7)").unwrap(),
            parse("snsNum() + 7").unwrap(),
        ),
    ];
    for (label, a, b) in &pairs {
        for (k, s) in scenarios.iter().enumerate() {
            let v = eventual_equivalence(a, b, s).map_err(|e| format!("{label}: {e}"))?;
            ensure!(
                v.equivalent,
                "{label} scenario {k}: left {}/{} right {}/{}",
                v.left.stabilised,
                v.left.agreement_across_runs,
                v.right.stabilised,
                v.right.agreement_across_runs
            );
        }
    }
    Ok(format!("{} substitutions equal on 5 scenarios", pairs.len()))
}

// ---------------------------------------------------------------- 7

fn comparison_trends() -> Outcome {
    let seeds: Vec<u64> = (1..=10).collect();
    let count = |f: &dyn Fn(u64) -> bool| seeds.iter().filter(|s| f(**s)).count();

    let g = run_block_comparison(
        &ComparisonSetup::new(Family::G, PerturbationMode::LargeSpatial, &seeds)
            .with_variants(&["G", "CRF"])
            .unwrap(),
    )
    .map_err(|e| e.to_string())?;
    let settle = |s: u64, v: &str| g.settle_after_switch(s, v).unwrap_or(f64::INFINITY);
    let a = count(&|s| settle(s, "G") > settle(s, "CRF"));

    let c = run_block_comparison(
        &ComparisonSetup::new(Family::C, PerturbationMode::SmallSpatial, &seeds)
            .with_variants(&["C", "C'"])
            .unwrap(),
    )
    .map_err(|e| e.to_string())?;
    let mean = |s: u64, v: &str| c.mean_error(s, v).unwrap_or(f64::INFINITY);
    let b = count(&|s| mean(s, "C'") < mean(s, "C"));

    let t = run_block_comparison(
        &ComparisonSetup::new(Family::T, PerturbationMode::SmallTemporal, &seeds)
            .with_variants(&["T", "T'(0.02)"])
            .unwrap(),
    )
    .map_err(|e| e.to_string())?;
    let rmse = |s: u64, v: &str| t.pooled_rmse(s, v).unwrap_or(f64::INFINITY);
    let c_count = count(&|s| rmse(s, "T'(0.02)") < rmse(s, "T"));

    let detail = format!("G settles slower than CRF {a}/10; C' below C {b}/10; T'(0.02) below T {c_count}/10");
    ensure!(a >= 8 && b >= 8 && c_count >= 8, "{detail}");
    Ok(detail)
}

// ---------------------------------------------------------------- 8

fn case_studies() -> Outcome {
    let seeds = [1, 2, 3];
    let evac = evacuation_scenario(&EvacuationSetup::new(&seeds)).map_err(|e| e.to_string())?;
    ensure!(evac.runs.len() == 24, "evacuation ran {} of 24", evac.runs.len());
    for (lo, hi) in &evac.device_error_bounds {
        ensure!(*lo >= 0.0 && *hi <= 1.0, "per-device error outside [0, 1]: {lo} {hi}");
    }
    let crowd = crowd_size_scenario(&CrowdSetup::new(&seeds)).map_err(|e| e.to_string())?;
    ensure!(crowd.runs.len() == 24, "crowd ran {} of 24", crowd.runs.len());
    ensure!(
        crowd.runs.iter().all(|r| !r.error.samples.is_empty()),
        "a crowd run produced no samples"
    );

    let degenerate = crowd_size_scenario(&CrowdSetup::degenerate(&[1], 20)).map_err(|e| e.to_string())?;
    let mut worst_prime = 0.0f64;
    for r in &degenerate.runs {
        let last = r.error.samples.last().map(|(_, v)| *v).ok_or("no samples")?;
        if r.variant.contains("C'") {
            ensure!(last.abs() <= 1e-9, "degenerate {}: {last}", r.variant);
            worst_prime = worst_prime.max(last.abs());
        } else {
            ensure!(last == 0.0, "degenerate {}: {last}", r.variant);
        }
    }
    Ok(format!(
        "evacuation errors in [0, 1]; 8 crowd variants × 3 seeds done; degenerate cluster error 0 (C' rounding {worst_prime:.1e})"
    ))
}

// ---------------------------------------------------------------- 9

fn numbers(k: usize) -> impl FnMut(&mut ChaCha8Rng) -> Option<Sample> {
    move |rng| Some(Sample::local((0..k).map(|_| n(uniform(rng, -10.0, 10.0))).collect()))
}

fn property_examples() -> Outcome {
    let builtins = BuiltinRegistry::standard();
    let empty = parse("0").unwrap();
    let ev = Evaluator::new(&empty, &builtins);
    let mut lines = Vec::new();

    let converging = PropertyAnnotation::new("f", Property::Converging, &[0, 1], OrderSpec::Numeric);
    let mut hood = |rng: &mut ChaCha8Rng| {
        let pair = |rng: &mut ChaCha8Rng| vec![n(uniform(rng, -10.0, 10.0)), n(uniform(rng, -10.0, 10.0))];
        let args = pair(rng);
        let k = rng.gen_range(0..4);
        Some(Sample {
            args,
            neighbours: neighbourhood(rng, k, 10.0, pair),
        })
    };
    for (name, body, holds) in [
        ("f1", "pickHood(nbr{psi} - nbr{phi})", false),
        ("f2", "pickHood((nbr{psi} + nbr{phi}) / 2)", true),
        ("f3", "pickHood(nbr{psi}) + meanHood(nbr{phi} - nbr{psi}) / 2", true),
    ] {
        let template = fieldcalc::lang::parse_expr(body).unwrap();
        let subject = neighbourhood_subject(ev, template, vec!["phi".into(), "psi".into()]);
        let out = validate_property(&*subject, &converging, &mut hood, 2000, 7).map_err(|e| e.to_string())?;
        ensure!(out.passed() == holds, "C {name}: {:?}", out.violations);
        lines.push(format!("C {name} {}", if holds { "holds" } else { "fails" }));
    }
    // The stated witness: constant fields 2 and 3 give 1, farther from 3 than any input pair.
    let f1 = neighbourhood_subject(
        ev,
        fieldcalc::lang::parse_expr("pickHood(nbr{psi} - nbr{phi})").unwrap(),
        vec!["phi".into(), "psi".into()],
    );
    let mut constant = |rng: &mut ChaCha8Rng| {
        Some(Sample {
            args: vec![n(2.0), n(3.0)],
            neighbours: neighbourhood(rng, 2, 5.0, |_| vec![n(2.0), n(3.0)]),
        })
    };
    let out = validate_property(&*f1, &converging, &mut constant, 1, 1).map_err(|e| e.to_string())?;
    let w = out.witness(Clause::Converging).ok_or("no witness for constant fields 2, 3")?;
    ensure!(w.outputs == vec![n(1.0)], "witness {w}");

    let monotonic = PropertyAnnotation::new("f", Property::Monotonic, &[0], OrderSpec::Numeric);
    let dec = local_subject(|a| n(a[0].as_num().unwrap() - 1.0));
    let sq = local_subject(|a| n(a[0].as_num().unwrap().powi(2)));
    ensure!(validate_property(&*dec, &monotonic, &mut numbers(1), 2000, 8).unwrap().passed(), "M f1 fails");
    let out = validate_property(&*sq, &monotonic, &mut numbers(1), 2000, 8).unwrap();
    let w = out.witness(Clause::Monotonic).ok_or("M f2 holds")?;
    let (lo, hi) = (num_of(&w.inputs[0]), num_of(&w.inputs[1]));
    ensure!(lo <= hi && lo * lo > hi * hi, "M f2 witness {w}");
    lines.push("M f1 holds, f2 fails".into());

    let progressive = PropertyAnnotation::new("f", Property::Progressive, &[0], OrderSpec::Numeric);
    let inc = local_subject(|a| n(a[0].as_num().unwrap() + 1.0));
    ensure!(validate_property(&*inc, &progressive, &mut numbers(1), 2000, 9).unwrap().passed(), "P f1 fails");
    let out = validate_property(&*dec, &progressive, &mut numbers(1), 2000, 9).unwrap();
    let w = out.witness(Clause::Progressive).ok_or("P f2 holds")?;
    ensure!(num_of(&w.outputs[0]) < num_of(&w.inputs[0]), "P f2 witness {w}");
    let out = validate_property(&*sq, &progressive, &mut numbers(1), 2000, 9).unwrap();
    let w = out.witness(Clause::Progressive).ok_or("P f3 holds")?;
    let l = num_of(&w.inputs[0]);
    ensure!((0.0..=1.0).contains(&l), "P f3 witness {w}");
    lines.push("P f1 holds, f2 f3 fail".into());

    let raising = PropertyAnnotation::new("f", Property::Raising, &[0, 1], OrderSpec::Numeric);
    let first = local_subject(|a| a[0].clone());
    let diff = local_subject(|a| n(a[0].as_num().unwrap() - a[1].as_num().unwrap()));
    let mean = local_subject(|a| n((a[0].as_num().unwrap() + a[1].as_num().unwrap()) / 2.0));
    ensure!(validate_property(&*first, &raising, &mut numbers(2), 2000, 10).unwrap().passed(), "R f1 fails");
    let out = validate_property(&*diff, &raising, &mut numbers(2), 2000, 10).unwrap();
    ensure!(
        out.violates(Clause::RaisingFixpoint) && out.violates(Clause::RaisingLowerBound),
        "R f2: {:?}",
        out.violations
    );
    let out = validate_property(&*mean, &raising, &mut numbers(2), 2000, 10).unwrap();
    ensure!(
        !out.violates(Clause::RaisingFixpoint) && !out.violates(Clause::RaisingLowerBound),
        "R f3 breaks the first clauses: {:?}",
        out.violations
    );
    let w = out.witness(Clause::RaisingProgress).ok_or("R f3 holds")?;
    ensure!(num_of(&w.inputs[1]) > num_of(&w.inputs[0]), "R f3 witness {w}");
    lines.push("R f1 holds, f2 fails two clauses, f3 fails the last".into());
    Ok(lines.join("; "))
}

// ---------------------------------------------------------------- 10

fn determinism() -> Outcome {
    let mut s = Scenario::from_toml(
        r#"
        seed = 11
        duration = 40.0
        [arena]
        width = 80.0
        height = 40.0
        comm_radius = 25.0
        [devices]
        count = 25
        mobility = { kind = "random_walk", speed = 1.0 }
        sensors = { sns_source = false }
        overrides = [{ device = 0, sensor = "sns_source", value = true }]
        [schedule]
        jitter = { kind = "uniform", lo = 0.9, hi = 1.1 }
        "#,
    )
    .map_err(|e| e.to_string())?;
    let p = blocks::program("G_distanceTo(mux(sns_source(), 0, infinity))").unwrap();
    let a = run(&s, &p).map_err(|e| e.to_string())?.to_csv_string();
    let b = run(&s, &p).map_err(|e| e.to_string())?.to_csv_string();
    ensure!(a == b, "simulate traces differ");
    s.seed = 12;
    let other = run(&s, &p).map_err(|e| e.to_string())?.to_csv_string();
    ensure!(other != a, "a different seed gave the same trace");

    let mut setup = ComparisonSetup::new(Family::G, PerturbationMode::SmallSpatial, &[5, 6]);
    setup.duration = 20.0;
    let x = run_block_comparison(&setup).map_err(|e| e.to_string())?.to_csv();
    let y = run_block_comparison(&setup).map_err(|e| e.to_string())?.to_csv();
    ensure!(x == y, "compare outputs differ");
    let mut crowd = CrowdSetup::new(&[2]);
    crowd.duration = 30.0;
    crowd.variants = vec![BlockChoice::all()[0], BlockChoice::all()[7]];
    let x = crowd_size_scenario(&crowd).map_err(|e| e.to_string())?.to_csv();
    let y = crowd_size_scenario(&crowd).map_err(|e| e.to_string())?.to_csv();
    ensure!(x == y, "case-study outputs differ");
    Ok(format!("trace of {} bytes and comparison CSV repeat byte for byte", a.len()))
}
