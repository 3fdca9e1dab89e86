//! The building-block library, shipped as field-calculus source with a manifest.
//!
//! Each [`BlockCatalogEntry`] names the source files it needs, a `main`
//! expression exercising the block, the eventual contract it meets, the
//! property obligations its `rep`s rely on and its tunable parameters.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::eval::{BuiltinRegistry, Evaluator};
use crate::lang::{expand_functional_params, parse, parse_expr, LangError, Program};
use crate::stability::properties::{neighbourhood, neighbourhood_subject, program_subject, uniform, Sample, Subject};
use crate::stability::{validate_property, PropertyAnnotation, PropertyOutcome, Registry, StabilityError};
use crate::value::LocalValue;

/// Block sources by file name.
pub const SOURCES: [(&str, &str); 7] = [
    ("g.fc", include_str!("../blocks/g.fc")),
    ("c.fc", include_str!("../blocks/c.fc")),
    ("t.fc", include_str!("../blocks/t.fc")),
    ("crf.fc", include_str!("../blocks/crf.fc")),
    ("flex.fc", include_str!("../blocks/flex.fc")),
    ("cprime.fc", include_str!("../blocks/cprime.fc")),
    ("tprime.fc", include_str!("../blocks/tprime.fc")),
];

const MANIFEST: &str = include_str!("../blocks/manifest.toml");

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BlockError {
    #[error("no block named `{0}`")]
    UnknownBlock(String),
    #[error("block `{block}` has no parameter `{name}`")]
    UnknownParameter { block: String, name: String },
    #[error("no sampler named `{0}`")]
    UnknownSampler(String),
    #[error(transparent)]
    Lang(#[from] LangError),
    #[error(transparent)]
    Stability(#[from] StabilityError),
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Parameter {
    pub name: String,
    pub unit: String,
    pub default: f64,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObligation {
    line: String,
    sampler: String,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEntry {
    name: String,
    family: String,
    files: Vec<String>,
    main: String,
    contract: String,
    oracle: String,
    obligations: Vec<RawObligation>,
    #[serde(default)]
    parameters: Vec<Parameter>,
}

#[derive(Deserialize)]
struct RawManifest {
    entry: Vec<RawEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockCatalogEntry {
    pub name: String,
    /// `G`, `C` or `T`.
    pub family: String,
    pub files: Vec<String>,
    /// Concatenated text of `files`.
    pub source: String,
    /// Main expression with `{parameter}` placeholders.
    pub main: String,
    pub contract: String,
    pub oracle: String,
    /// Each obligation with the name of the sampler that validates it.
    pub obligations: Vec<(PropertyAnnotation, String)>,
    pub parameters: Vec<Parameter>,
}

impl BlockCatalogEntry {
    /// The main expression with every placeholder filled, from `overrides` or the defaults.
    pub fn main_with(&self, overrides: &BTreeMap<String, f64>) -> Result<String, BlockError> {
        for k in overrides.keys() {
            if !self.parameters.iter().any(|p| &p.name == k) {
                return Err(BlockError::UnknownParameter {
                    block: self.name.clone(),
                    name: k.clone(),
                });
            }
        }
        let mut main = self.main.clone();
        for p in &self.parameters {
            let v = overrides.get(&p.name).copied().unwrap_or(p.default);
            main = main.replace(&format!("{{{}}}", p.name), &format!("{v:?}"));
        }
        Ok(main)
    }

    /// Source plus filled main, expanded.
    pub fn program(&self, overrides: &BTreeMap<String, f64>) -> Result<Program, BlockError> {
        let p = parse(&format!("{}\n{}", self.source, self.main_with(overrides)?))?;
        Ok(expand_functional_params(&p)?)
    }

    pub fn default_program(&self) -> Result<Program, BlockError> {
        self.program(&BTreeMap::new())
    }

    pub fn registry(&self) -> Registry {
        let mut r = Registry::default();
        for (a, _) in &self.obligations {
            r.insert(a.clone());
        }
        r
    }

    /// Checks every obligation with its sampler.
    pub fn validate_obligations(&self, trials: usize, seed: u64) -> Result<Vec<(PropertyAnnotation, PropertyOutcome)>, BlockError> {
        let p = self.default_program()?;
        let builtins = BuiltinRegistry::standard();
        let ev = Evaluator::new(&p, &builtins);
        let mut out = Vec::new();
        for (ann, sampler) in &self.obligations {
            let subject = subject_for(ev, ann, sampler)?;
            let mut draw = sampler_named(sampler)?;
            let outcome = validate_property(&*subject, ann, &mut *draw, trials, seed)?;
            out.push((ann.clone(), outcome));
        }
        Ok(out)
    }
}

/// Every `.fc` file concatenated.
pub fn library_source() -> String {
    SOURCES.iter().map(|(_, s)| *s).collect::<Vec<_>>().join("\n")
}

/// The whole library with `main` as the main expression, expanded.
pub fn program(main: &str) -> Result<Program, LangError> {
    parse_expr(main)?;
    expand_functional_params(&parse(&format!("{}\n{}", library_source(), main))?)
}

pub fn catalog() -> &'static [BlockCatalogEntry] {
    static CATALOG: OnceLock<Vec<BlockCatalogEntry>> = OnceLock::new();
    CATALOG.get_or_init(|| {
        let raw: RawManifest = toml::from_str(MANIFEST).expect("the shipped manifest parses");
        raw.entry.into_iter().map(build_entry).collect()
    })
}

fn build_entry(e: RawEntry) -> BlockCatalogEntry {
    let source = e
        .files
        .iter()
        .map(|f| {
            SOURCES
                .iter()
                .find(|(n, _)| n == f)
                .map(|(_, s)| *s)
                .unwrap_or_else(|| panic!("manifest names unknown file {f}"))
        })
        .collect::<Vec<_>>()
        .join("\n");
    let obligations = e
        .obligations
        .into_iter()
        .map(|o| {
            let ann = PropertyAnnotation::parse_line(&o.line).expect("the shipped manifest's obligations parse");
            (ann, o.sampler)
        })
        .collect();
    BlockCatalogEntry {
        name: e.name,
        family: e.family,
        files: e.files,
        source,
        main: e.main,
        contract: e.contract,
        oracle: e.oracle,
        obligations,
        parameters: e.parameters,
    }
}

pub fn entry(name: &str) -> Result<&'static BlockCatalogEntry, BlockError> {
    catalog()
        .iter()
        .find(|e| e.name == name)
        .ok_or_else(|| BlockError::UnknownBlock(name.to_string()))
}

/// Union of every entry's obligations.
pub fn registry() -> Registry {
    let mut r = Registry::default();
    for e in catalog() {
        for (a, _) in &e.obligations {
            r.insert(a.clone());
        }
    }
    r
}

fn n(x: f64) -> LocalValue {
    LocalValue::num(x)
}

fn int(rng: &mut ChaCha8Rng, lo: i32, hi: i32) -> f64 {
    f64::from(rng.gen_range(lo..=hi))
}

/// A distance estimate: usually a small integer, sometimes unreachable.
fn estimate(rng: &mut ChaCha8Rng) -> f64 {
    if rng.gen_bool(0.1) {
        f64::INFINITY
    } else {
        int(rng, 0, 60)
    }
}

type BoxedSampler = Box<dyn FnMut(&mut ChaCha8Rng) -> Option<Sample>>;

/// Local pairs for raising, `(pair, edge)` for monotonic-progressive, neighbourhoods otherwise.
pub fn sampler_named(name: &str) -> Result<BoxedSampler, BlockError> {
    let s: BoxedSampler = match name {
        "pairs" => Box::new(|rng| {
            let mut pair = || LocalValue::pair(n(estimate(rng)), n(int(rng, -20, 20)));
            let (a, b) = (pair(), pair());
            Some(Sample::local(vec![a, b]))
        }),
        "pair_and_edge" => Box::new(|rng| {
            let p = LocalValue::pair(n(int(rng, 0, 60)), n(int(rng, -20, 20)));
            Some(Sample::local(vec![p, n(uniform(rng, 0.1, 40.0))]))
        }),
        "crf_context" => Box::new(|rng| {
            let speed = uniform(rng, 0.05, 5.0);
            raising_context(rng, vec![n(speed)], None)
        }),
        "flex_context" => Box::new(|rng| {
            let eps = uniform(rng, 0.05, 0.95);
            let freq = int(rng, 1, 20);
            let rad = uniform(rng, 5.0, 50.0);
            raising_context(rng, vec![n(eps), n(freq), n(rad)], Some(0.2 * rad))
        }),
        "countdown" => Box::new(|rng| {
            let lim = int(rng, -100, 100);
            let initial = lim + int(rng, 0, 100);
            converging_context(rng, |rng| vec![n(int(rng, -200, 200)), n(lim)], vec![n(initial)])
        }),
        "tracking" => Box::new(|rng| {
            let lim = int(rng, -100, 100);
            converging_context(rng, |rng| vec![n(int(rng, -200, 200)), n(lim)], vec![n(lim)])
        }),
        "memory" => Box::new(|rng| {
            let time = int(rng, 1, 10);
            let v = int(rng, -50, 50);
            let null = int(rng, -50, 50);
            let floor = LocalValue::pair(n(0.0), n(null));
            let initial = LocalValue::pair(n(time), n(v));
            converging_context(
                rng,
                |rng| vec![LocalValue::pair(n(int(rng, -5, 15)), n(v)), floor.clone()],
                vec![initial],
            )
        }),
        "following" => Box::new(|rng| {
            let mut s = converging_context(rng, |rng| vec![n(int(rng, -200, 200)), n(int(rng, -100, 100))], vec![])?;
            let k = rng.gen_range(0..=5);
            s.neighbours = neighbourhood(rng, k, 30.0, |rng| vec![n(int(rng, -200, 200)), n(int(rng, -100, 100))]);
            Some(s)
        }),
        other => return Err(BlockError::UnknownSampler(other.to_string())),
    };
    Ok(s)
}

fn converging_context(
    rng: &mut ChaCha8Rng,
    mut state: impl FnMut(&mut ChaCha8Rng) -> Vec<LocalValue>,
    extra: Vec<LocalValue>,
) -> Option<Sample> {
    let mut args = state(rng);
    args.extend(extra);
    Some(Sample::local(args))
}

/// A device with 1 to 5 neighbours holding `(estimate, counter)` states, and the
/// candidate `new` those states induce through `minHoodLoc`.
fn raising_context(rng: &mut ChaCha8Rng, params: Vec<LocalValue>, min_edge: Option<f64>) -> Option<Sample> {
    let source = rng.gen_bool(0.1);
    let k = rng.gen_range(1..=5);
    let state = |rng: &mut ChaCha8Rng| LocalValue::pair(n(estimate(rng)), n(int(rng, 0, 20)));
    let placeholder = |s: LocalValue| {
        let mut a = vec![s.clone(), s];
        a.extend(params.iter().cloned());
        a
    };
    let mut nbrs = neighbourhood(rng, k, 30.0, |rng| placeholder(state(rng)));
    let mut best = LocalValue::pair(n(if source { 0.0 } else { f64::INFINITY }), n(0.0));
    for nb in &mut nbrs {
        let d = min_edge.map_or(nb.range, |m| nb.range.max(m));
        let old0 = nb.args[1].project(0)?.as_num()?;
        let cand = LocalValue::pair(n(old0 + d), n(0.0));
        if cand.try_cmp(&best).ok()? == std::cmp::Ordering::Less {
            best = cand;
        }
    }
    let mut args = vec![best, state(rng)];
    args.extend(params);
    Some(Sample {
        args,
        neighbours: nbrs,
    })
}

/// Templates binding `a0, a1, ...` to the sampled arguments.
fn subject_for<'a>(ev: Evaluator<'a>, ann: &PropertyAnnotation, sampler: &str) -> Result<Box<Subject<'a>>, BlockError> {
    let f = &ann.function;
    let template = match sampler {
        "pairs" | "pair_and_edge" => return Ok(program_subject(ev, f)),
        "crf_context" => format!("{f}(a0, a1, a2, nbrRange())"),
        "flex_context" => format!("{f}(a0, a1, max(nbrRange(), 0.2 * a4), a2, a3, a4)"),
        "countdown" | "tracking" | "memory" => format!("{f}(nbr{{a0}}, nbr{{a1}}, a2)"),
        "following" => format!("{f}(nbr{{a0}}, nbr{{a1}})"),
        other => return Err(BlockError::UnknownSampler(other.to_string())),
    };
    let arity = match sampler {
        "crf_context" => 3,
        "flex_context" => 5,
        "following" => 2,
        _ => 3,
    };
    let e = parse_expr(&template)?;
    let params = (0..arity).map(|i| format!("a{i}")).collect();
    Ok(neighbourhood_subject(ev, e, params))
}
