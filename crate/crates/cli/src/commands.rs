use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use fieldcalc::blocks;
use fieldcalc::eval::{to_indented, to_notation, BuiltinRegistry, EvalError, Evaluator, SensorSnapshot};
use fieldcalc::experiments::{
    crowd_size_scenario, evacuation_scenario, run_block_comparison, BlockChoice, ComparisonSetup, CrowdSetup,
    EvacuationSetup, ExperimentError, Family, Manifest, PerturbationMode,
};
use fieldcalc::lang::{self, expand_functional_params, kind_check, pretty_program, LangError, Program};
use fieldcalc::net::{Action, NetError, Scenario, Simulator, Step, Trace, TraceRecord};
use fieldcalc::stability::{
    check_fragment, empirical_selfstab_with, path_weight_oracle, Registry, SelfStabOptions, StabilityError,
};
use fieldcalc::value::{DeviceNaming, LocalValue, Value};

use crate::envfile::{parse_device, parse_env};
use crate::{
    CaseStudyArgs, CheckArgs, CliError, Command, CompareArgs, EvalArgs, OracleArgs, SimulateArgs, Source,
};

type Result<T> = std::result::Result<T, CliError>;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Parse(s) => emit(&pretty_program(&load(&s)?), None),
        Command::Expand(s) => {
            let p = expand_functional_params(&load(&s)?).map_err(lang_err)?;
            emit(&pretty_program(&p), None)
        }
        Command::Kindcheck(s) => kindcheck(&s),
        Command::Check(a) => check(&a),
        Command::Eval(a) => eval(&a),
        Command::Simulate(a) => simulate(&a),
        Command::Compare(a) => compare(&a),
        Command::Casestudy(a) => casestudy(&a),
        Command::Oracle(a) => oracle(&a),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::User(format!("{}: {e}", path.display())))
}

fn load(s: &Source) -> Result<Program> {
    let text = read(&s.file)?;
    let text = if s.library {
        format!("{}\n{text}", blocks::library_source())
    } else {
        text
    };
    lang::parse(&text).map_err(|e| CliError::User(format!("{}: {e}", s.file.display())))
}

fn load_scenario(path: &Path, seed: Option<u64>) -> Result<Scenario> {
    let mut s = Scenario::from_toml(&read(path)?).map_err(|e| CliError::User(format!("{}: {e}", path.display())))?;
    if let Some(seed) = seed {
        s.seed = seed;
    }
    Ok(s)
}

/// Writes `text` to the file, or to standard output without one.
fn emit(text: &str, out: Option<&PathBuf>) -> Result<()> {
    let mut text = text.to_string();
    if !text.ends_with('\n') {
        text.push('\n');
    }
    match out {
        Some(path) => fs::write(path, text).map_err(|e| CliError::User(format!("{}: {e}", path.display()))),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Internal(e.to_string())),
    }
}

fn lang_err(e: LangError) -> CliError {
    CliError::User(e.to_string())
}

fn net_err(e: NetError) -> CliError {
    match e {
        NetError::Io(m) => CliError::Internal(m),
        NetError::NeverFired(_) => CliError::Internal(e.to_string()),
        other => CliError::User(other.to_string()),
    }
}

fn stability_err(e: StabilityError) -> CliError {
    match e {
        StabilityError::Net(n) => net_err(n),
        StabilityError::NonTermination(_) => CliError::Internal(e.to_string()),
        other => CliError::User(other.to_string()),
    }
}

fn experiment_err(e: ExperimentError) -> CliError {
    match e {
        ExperimentError::Net(n) => net_err(n),
        ExperimentError::Invalid(m) => CliError::User(m),
        other => CliError::Internal(other.to_string()),
    }
}

fn kindcheck(s: &Source) -> Result<()> {
    let p = expand_functional_params(&load(s)?).map_err(lang_err)?;
    let report = kind_check(&p).map_err(|e| CliError::User(e.to_string()))?;
    let mut text = format!("main: {}\n", report.main_kind());
    for (name, kinds) in &report.functions {
        if let Some(k) = kinds.get(&Vec::new()) {
            text.push_str(&format!("{name}: {k}\n"));
        }
    }
    emit(&text, None)
}

fn check(a: &CheckArgs) -> Result<()> {
    let p = load(&a.source)?;
    let mut registry = if a.source.library {
        blocks::registry()
    } else {
        Registry::new()
    };
    if let Some(path) = &a.registry {
        let extra = Registry::parse(&read(path)?).map_err(|e| CliError::User(format!("{}: {e}", path.display())))?;
        registry.extend(&extra);
    }
    let report = check_fragment(&p, &registry).map_err(lang_err)?;
    if a.csv {
        emit(&report.to_csv(), None)?;
    } else {
        emit(&report.to_string(), None)?;
    }
    let mut ok = report.accepted();
    if let Some(path) = &a.scenario {
        let scenario = load_scenario(path, a.seed)?;
        let mut opts = SelfStabOptions::new(a.inits, a.schedules, a.rounds_max);
        opts.tolerance = a.tolerance;
        let v = empirical_selfstab_with(&p, &scenario, &opts).map_err(stability_err)?;
        emit(
            &format!(
                "empirical: runs {} stabilised {} agreement {} rounds {}",
                v.runs, v.stabilised, v.agreement_across_runs, v.rounds_to_stable
            ),
            None,
        )?;
        ok &= v.self_stabilising();
    }
    if ok {
        Ok(())
    } else {
        Err(CliError::Rejected)
    }
}

fn parse_local(text: &str) -> Result<LocalValue> {
    let t = fieldcalc::eval::parse_tree(text.trim()).map_err(|e| CliError::User(format!("`{text}`: {e}")))?;
    match t.root {
        Value::Local(v) if t.children.is_empty() => Ok(v),
        _ => Err(CliError::User(format!("`{text}` is not a local value"))),
    }
}

fn eval(a: &EvalArgs) -> Result<()> {
    let p = expand_functional_params(&load(&a.source)?).map_err(lang_err)?;
    let (env, naming) = match &a.env {
        Some(path) => parse_env(&read(path)?).map_err(|m| CliError::User(format!("{}: {m}", path.display())))?,
        None => Default::default(),
    };
    let mut snapshot = SensorSnapshot::default().with_num(a.num.unwrap_or(f64::from(a.device)));
    snapshot.interval = a.interval;
    for s in &a.sensors {
        let (name, value) = s
            .split_once('=')
            .ok_or_else(|| CliError::User(format!("--sensor `{s}`: expected NAME=VALUE")))?;
        snapshot.extras.insert(name.trim().to_string(), parse_local(value)?);
    }
    for r in &a.ranges {
        let (label, metres) = r
            .split_once('=')
            .ok_or_else(|| CliError::User(format!("--range `{r}`: expected LABEL=METRES")))?;
        let (d, _) = parse_device(label).ok_or_else(|| CliError::User(format!("--range: bad device `{label}`")))?;
        let m: f64 = metres
            .trim()
            .parse()
            .map_err(|_| CliError::User(format!("--range: bad distance `{metres}`")))?;
        snapshot.nbr_range.insert(d, m);
        snapshot.nbr_lag.insert(d, 0.0);
    }
    let builtins = BuiltinRegistry::standard();
    let tree = Evaluator::new(&p, &builtins)
        .eval_main(a.device, &env, &snapshot)
        .map_err(|e: EvalError| CliError::User(e.to_string()))?;
    let naming = naming.unwrap_or(DeviceNaming::Numeric);
    let text = if a.indented {
        to_indented(&tree, naming)
    } else {
        to_notation(&tree, naming)
    };
    emit(&text, None)
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let p = expand_functional_params(&load(&a.source)?).map_err(lang_err)?;
    let mut scenario = load_scenario(&a.scenario, Some(a.seed))?;
    if let Some(h) = a.horizon {
        scenario.schedule.horizon = Some(h);
    }
    if let Some(r) = a.rounds_max {
        scenario.duration = scenario.duration.min(r as f64 * scenario.max_period());
    }
    scenario.validate().map_err(net_err)?;
    let builtins = BuiltinRegistry::standard();
    let mut sim = Simulator::new(&scenario, &p, &builtins).map_err(net_err)?;
    let mut trace = Trace::default();
    while let Some(step) = sim.step().map_err(net_err)? {
        trace.push(match step {
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
    eprintln!("schedule {}", sim.schedule_hash());
    emit(&trace.to_csv_string(), a.out.as_ref())
}

fn seeds(first: u64, runs: u64) -> Result<Vec<u64>> {
    if runs == 0 {
        return Err(CliError::User("--runs must be at least 1".into()));
    }
    Ok((first..first.saturating_add(runs)).collect())
}

fn write_manifest(m: &Manifest, manifest: Option<&PathBuf>, out: Option<&PathBuf>) -> Result<()> {
    let path = match (manifest, out) {
        (Some(p), _) => p.clone(),
        (None, Some(o)) => o.with_extension("manifest.toml"),
        (None, None) => return Ok(()),
    };
    emit(&m.to_string(), Some(&path))
}

fn compare(a: &CompareArgs) -> Result<()> {
    let family = Family::parse(&a.family).ok_or_else(|| CliError::User(format!("unknown family `{}`", a.family)))?;
    let mode = PerturbationMode::parse(&a.mode).ok_or_else(|| CliError::User(format!("unknown mode `{}`", a.mode)))?;
    let mut setup = ComparisonSetup::new(family, mode, &seeds(a.seed, a.runs)?);
    if !a.variants.is_empty() {
        let names: Vec<&str> = a.variants.iter().map(String::as_str).collect();
        setup = setup.with_variants(&names).map_err(experiment_err)?;
    }
    if let Some(d) = a.duration {
        if !(d > 0.0) {
            return Err(CliError::User("--duration must be positive".into()));
        }
        setup.duration = d;
    }
    let output = run_block_comparison(&setup).map_err(experiment_err)?;
    for r in &output.runs {
        eprintln!(
            "seed {} {}: mean {} {}",
            r.seed,
            r.variant,
            family.error_metric(),
            r.error.mean().map_or("none".to_string(), |m| m.to_string())
        );
    }
    emit(&output.to_csv(), a.out.as_ref())?;
    write_manifest(&output.manifest, a.manifest.as_ref(), a.out.as_ref())
}

fn choices(names: &[String]) -> Result<Vec<BlockChoice>> {
    let all = BlockChoice::all();
    names
        .iter()
        .map(|n| {
            all.iter()
                .copied()
                .find(|c| c.name() == n.trim())
                .ok_or_else(|| CliError::User(format!("unknown block choice `{n}`")))
        })
        .collect()
}

fn casestudy(a: &CaseStudyArgs) -> Result<()> {
    let seeds = seeds(a.seed, a.runs)?;
    if let Some(d) = a.duration {
        if !(d > 0.0) {
            return Err(CliError::User("--duration must be positive".into()));
        }
    }
    let (csv, manifest, runs) = match a.study.as_str() {
        "crowd" => {
            let mut setup = CrowdSetup::new(&seeds);
            if !a.variants.is_empty() {
                setup.variants = choices(&a.variants)?;
            }
            if let Some(d) = a.duration {
                setup.duration = d;
            }
            let out = crowd_size_scenario(&setup).map_err(experiment_err)?;
            (out.to_csv(), out.manifest, out.runs)
        }
        "evacuation" => {
            let mut setup = EvacuationSetup::new(&seeds);
            if !a.variants.is_empty() {
                setup.variants = choices(&a.variants)?;
            }
            if let Some(d) = a.duration {
                setup.duration = d;
            }
            let out = evacuation_scenario(&setup).map_err(experiment_err)?;
            (out.to_csv(), out.manifest, out.runs)
        }
        other => return Err(CliError::User(format!("unknown case study `{other}`"))),
    };
    for r in &runs {
        eprintln!("seed {} {}: mean error {}", r.seed, r.variant, r.error.mean().map_or("none".to_string(), |m| m.to_string()));
    }
    emit(&csv, a.out.as_ref())?;
    write_manifest(&manifest, a.manifest.as_ref(), a.out.as_ref())
}

fn oracle(a: &OracleArgs) -> Result<()> {
    let scenario = load_scenario(&a.scenario, a.seed)?;
    let hops = match a.metric.as_str() {
        "hops" => true,
        "range" => false,
        other => return Err(CliError::User(format!("unknown metric `{other}`"))),
    };
    let idle = lang::parse("0").map_err(|e| CliError::Internal(e.to_string()))?;
    let builtins = BuiltinRegistry::standard();
    let sim = Simulator::new(&scenario, &idle, &builtins).map_err(net_err)?;
    let env = &sim.config().env;
    let sources: BTreeSet<_> = env
        .sensors
        .iter()
        .filter(|(_, s)| s.extras.get(&a.source) == Some(&LocalValue::Bool(true)))
        .map(|(d, _)| *d)
        .collect();
    if sources.is_empty() {
        eprintln!("warning: no device has `{}` set", a.source);
    }
    let local = env
        .devices()
        .map(|d| (d, LocalValue::num(if sources.contains(&d) { 0.0 } else { f64::INFINITY })))
        .collect();
    let step = |w: &LocalValue, r: f64| {
        let w = w.as_num().unwrap_or(f64::INFINITY);
        LocalValue::num(if hops { w + 1.0 } else { w + r })
    };
    let best = path_weight_oracle(env, &step, &local).map_err(stability_err)?;
    let mut text = String::from("device,value\n");
    for (d, v) in best {
        text.push_str(&format!("{d},{v}\n"));
    }
    emit(&text, a.out.as_ref())
}
