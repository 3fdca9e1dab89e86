//! Static classification of `rep` sites into the three self-stabilising patterns.
//!
//! Every `rep` reachable from `main` is matched, after light normalisation and
//! on-demand inlining, against
//!
//! * converging: `rep(e){(x) => f(nbr{x}, nbr{s}, ē)}` with `f` converging,
//! * acyclic: `rep(e){(x) => f(mux(nbrlt(s), nbr{x}, s), s̄)}`,
//! * minimising: `rep(e){(x) => r(minHoodLoc(g(nbr{x}, s̄), s), x, ē)}` with `g`
//!   monotonic and progressive and `r` raising,
//!
//! where no `s` mentions `x`. The function properties a match relies on become
//! obligations, discharged by the registry, by recognising `r` as the identity on
//! its first argument, or by sampling when all other arguments are literals.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use rand_chacha::ChaCha8Rng;

use super::properties::{program_subject, uniform, validate_property, Sample};
use super::registry::{OrderSpec, Property, PropertyAnnotation, Registry};
use crate::eval::{BuiltinRegistry, Evaluator, SensorSnapshot, ValueTreeEnv};
use crate::lang::{expand_functional_params, pretty_expr, Expr, LangError, Program};
use crate::value::LocalValue;

/// Trials used when an obligation is discharged by sampling.
pub const AUTO_TRIALS: usize = 1000;
const MAX_INLINING: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub enum RepVerdict {
    ConvergingRep,
    AcyclicRep,
    MinimisingRep,
    Unclassified(String),
}

impl RepVerdict {
    pub fn is_classified(&self) -> bool {
        !matches!(self, RepVerdict::Unclassified(_))
    }

    pub fn name(&self) -> &'static str {
        match self {
            RepVerdict::ConvergingRep => "converging",
            RepVerdict::AcyclicRep => "acyclic",
            RepVerdict::MinimisingRep => "minimising",
            RepVerdict::Unclassified(_) => "unclassified",
        }
    }
}

impl fmt::Display for RepVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RepVerdict::Unclassified(reason) => write!(f, "unclassified ({reason})"),
            other => f.write_str(other.name()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Resolution {
    Registry(PropertyAnnotation),
    /// The raising function returns its first argument.
    Identity,
    Validated { trials: usize },
    Refuted(String),
    Unresolved,
}

impl Resolution {
    pub fn is_resolved(&self) -> bool {
        matches!(
            self,
            Resolution::Registry(_) | Resolution::Identity | Resolution::Validated { .. }
        )
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Resolution::Registry(a) => write!(f, "registry `{a}`"),
            Resolution::Identity => f.write_str("identity on the first argument"),
            Resolution::Validated { trials } => write!(f, "validated on {trials} samples"),
            Resolution::Refuted(w) => write!(f, "refuted: {w}"),
            Resolution::Unresolved => f.write_str("not annotated"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Obligation {
    pub function: String,
    pub property: Property,
    pub resolution: Resolution,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RepSite {
    /// `function#k`, counting the function's `rep`s from 1 in reading order; `main#k` for the main expression.
    pub id: String,
    pub verdict: RepVerdict,
    pub obligations: Vec<Obligation>,
}

impl RepSite {
    pub fn accepted(&self) -> bool {
        self.verdict.is_classified() && self.obligations.iter().all(|o| o.resolution.is_resolved())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FragmentReport {
    pub sites: Vec<RepSite>,
}

impl FragmentReport {
    pub fn accepted(&self) -> bool {
        self.sites.iter().all(RepSite::accepted)
    }

    pub fn site(&self, id: &str) -> Option<&RepSite> {
        self.sites.iter().find(|s| s.id == id)
    }

    /// Columns `repSiteId, verdict, obligations, resolved`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["repSiteId", "verdict", "obligations", "resolved"])
            .expect("writing to memory");
        for s in &self.sites {
            let obligations: Vec<String> = s
                .obligations
                .iter()
                .map(|o| format!("{}:{}", o.function, o.property.letter()))
                .collect();
            w.write_record([
                s.id.as_str(),
                s.verdict.name(),
                obligations.join(";").as_str(),
                if s.accepted() { "true" } else { "false" },
            ])
            .expect("writing to memory");
        }
        String::from_utf8(w.into_inner().expect("flushing to memory")).expect("csv is utf-8")
    }
}

impl fmt::Display for FragmentReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.sites.is_empty() {
            writeln!(f, "no rep sites")?;
        }
        for s in &self.sites {
            writeln!(f, "{}: {}", s.id, s.verdict)?;
            for o in &s.obligations {
                writeln!(f, "  {} {}: {}", o.function, o.property, o.resolution)?;
            }
        }
        write!(f, "{}", if self.accepted() { "accepted" } else { "not accepted" })
    }
}

/// Classifies every `rep` reachable from `main`. Extended functions are expanded first.
pub fn check_fragment(p: &Program, registry: &Registry) -> Result<FragmentReport, LangError> {
    let p = expand_functional_params(p)?;
    let builtins = BuiltinRegistry::standard();
    let checker = Checker {
        program: &p,
        registry,
        ev: Evaluator::new(&p, &builtins),
    };
    let mut sites = Vec::new();
    for owner in reachable(&p) {
        let body = match &owner {
            Some(name) => &p.function(name).expect("reachable functions exist").body,
            None => p.main(),
        };
        let label = owner.as_deref().unwrap_or("main");
        let mut k = 0;
        let mut reps = Vec::new();
        body.walk(&mut |e| {
            if let Expr::Rep { var, update, .. } = e {
                reps.push((var.clone(), (**update).clone()));
            }
        });
        for (var, update) in reps {
            k += 1;
            let (verdict, obligations) = checker.classify(&var, &update);
            sites.push(RepSite {
                id: format!("{label}#{k}"),
                verdict,
                obligations,
            });
        }
    }
    Ok(FragmentReport { sites })
}

/// Functions reachable from `main`, in declaration order, followed by `None` for `main` itself.
fn reachable(p: &Program) -> Vec<Option<String>> {
    let mut seen: HashSet<String> = HashSet::new();
    let mut stack: Vec<&Expr> = vec![p.main()];
    while let Some(e) = stack.pop() {
        e.walk(&mut |sub| {
            if let Expr::Call { name, .. } = sub {
                if let Some(f) = p.function(name) {
                    if seen.insert(name.clone()) {
                        stack.push(&f.body);
                    }
                }
            }
        });
    }
    let mut out: Vec<Option<String>> = p
        .functions()
        .iter()
        .filter(|f| seen.contains(&f.name))
        .map(|f| Some(f.name.clone()))
        .collect();
    out.push(None);
    out
}

struct Checker<'a> {
    program: &'a Program,
    registry: &'a Registry,
    ev: Evaluator<'a>,
}

enum Shape {
    Minimising {
        raise: Option<String>,
        mp: String,
        mp_extra: Vec<Expr>,
    },
    Acyclic,
    ConvergingNamed(String),
    ConvergingLifted {
        target: Expr,
    },
}

impl Checker<'_> {
    fn classify(&self, x: &str, update: &Expr) -> (RepVerdict, Vec<Obligation>) {
        let mut current = normalise(update, x);
        let mut fallback: Option<(RepVerdict, Vec<Obligation>)> = None;
        let mut first_reason: Option<String> = None;
        for _ in 0..=MAX_INLINING {
            match self.match_shape(x, &current) {
                Ok(shape) => {
                    let (verdict, obligations) = self.discharge(x, &current, shape);
                    let settled = verdict.is_classified() && obligations.iter().all(|o| o.resolution.is_resolved());
                    if settled {
                        return (verdict, obligations);
                    }
                    let better = match &fallback {
                        None => true,
                        Some((v, _)) => !v.is_classified() && verdict.is_classified(),
                    };
                    if better {
                        fallback = Some((verdict, obligations));
                    }
                }
                Err(reason) => {
                    first_reason.get_or_insert(reason);
                }
            }
            match self.inline_once(x, &current) {
                Some(next) => current = normalise(&next, x),
                None => break,
            }
        }
        fallback.unwrap_or_else(|| {
            let reason = first_reason.unwrap_or_else(|| "no pattern matches".to_string());
            (RepVerdict::Unclassified(reason), Vec::new())
        })
    }

    fn match_shape(&self, x: &str, u: &Expr) -> Result<Shape, String> {
        if !u.mentions_free(x) {
            return Err("update ignores the state".to_string());
        }
        if let Some(shape) = match_minimising(x, u) {
            return Ok(shape);
        }
        match match_acyclic(x, u, self.program) {
            Ok(true) => return Ok(Shape::Acyclic),
            Ok(false) => {}
            Err(reason) => return Err(reason),
        }
        if let Expr::Call { name, args, .. } = u {
            let nbr_state = args.first().is_some_and(|a| is_nbr_of(a, x));
            let nbr_target = matches!(args.get(1), Some(Expr::Nbr(s)) if !s.mentions_free(x));
            if nbr_state && nbr_target && args[2..].iter().all(|a| !a.mentions_free(x)) {
                return Ok(Shape::ConvergingNamed(name.clone()));
            }
        }
        if mentions_nbr_of(u, x) {
            return Err("neighbours' states are combined without acyclic filtering (state preservation)".to_string());
        }
        match lifted_target(x, u) {
            Some(target) => Ok(Shape::ConvergingLifted { target }),
            None => Err("the state is updated from itself alone, with no target to converge to".to_string()),
        }
    }

    fn discharge(&self, x: &str, u: &Expr, shape: Shape) -> (RepVerdict, Vec<Obligation>) {
        match shape {
            Shape::Acyclic => (RepVerdict::AcyclicRep, Vec::new()),
            Shape::Minimising { raise, mp, mp_extra } => {
                let mut obligations = Vec::new();
                for property in [Property::Monotonic, Property::Progressive] {
                    obligations.push(Obligation {
                        resolution: self.resolve_first_arg(&mp, property, &mp_extra),
                        function: mp.clone(),
                        property,
                    });
                }
                let (name, resolution) = match &raise {
                    None => ("identity".to_string(), Resolution::Identity),
                    Some(r) => (r.clone(), self.resolve_raising(r)),
                };
                obligations.push(Obligation {
                    function: name,
                    property: Property::Raising,
                    resolution,
                });
                (verdict_for(RepVerdict::MinimisingRep, &obligations, "divergence"), obligations)
            }
            Shape::ConvergingNamed(f) => {
                let resolution = match self.registry.lookup(&f, Property::Converging) {
                    Some(a) => Resolution::Registry(a.clone()),
                    None => Resolution::Unresolved,
                };
                let obligations = vec![Obligation {
                    function: f,
                    property: Property::Converging,
                    resolution,
                }];
                (RepVerdict::ConvergingRep, obligations)
            }
            Shape::ConvergingLifted { target } => {
                let resolution = self.validate_lifted(x, u, &target);
                let obligations = vec![Obligation {
                    function: format!("({x}) => {}", pretty_expr(u)),
                    property: Property::Converging,
                    resolution,
                }];
                let verdict = match &obligations[0].resolution {
                    Resolution::Refuted(w) => RepVerdict::Unclassified(format!(
                        "update does not converge toward `{}` (oscillation): {w}",
                        pretty_expr(&target)
                    )),
                    _ => RepVerdict::ConvergingRep,
                };
                (verdict, obligations)
            }
        }
    }

    fn resolve_first_arg(&self, f: &str, property: Property, extra: &[Expr]) -> Resolution {
        if let Some(a) = self.registry.lookup(f, property) {
            return Resolution::Registry(a.clone());
        }
        let mut lits = Vec::new();
        for e in extra {
            match e {
                Expr::Lit(v) => lits.push(v.clone()),
                _ => return Resolution::Unresolved,
            }
        }
        let subject = program_subject(self.ev, f);
        let ann = PropertyAnnotation::new(f, property, &[0], OrderSpec::Numeric);
        let mut sampler = move |rng: &mut ChaCha8Rng| {
            let mut args = vec![LocalValue::num(uniform(rng, -1000.0, 1000.0))];
            args.extend(lits.iter().cloned());
            Some(Sample::local(args))
        };
        match validate_property(&*subject, &ann, &mut sampler, AUTO_TRIALS, 0) {
            Ok(out) if out.passed() => Resolution::Validated { trials: AUTO_TRIALS },
            Ok(out) => Resolution::Refuted(out.violations[0].to_string()),
            Err(_) => Resolution::Unresolved,
        }
    }

    fn resolve_raising(&self, r: &str) -> Resolution {
        if let Some(a) = self.registry.lookup(r, Property::Raising) {
            return Resolution::Registry(a.clone());
        }
        match self.program.function(r) {
            Some(f) if f.params.len() >= 2 && f.body == Expr::Var(f.params[0].clone()) => Resolution::Identity,
            _ => Resolution::Unresolved,
        }
    }

    /// Samples the update as a function of the state and the target, all other free variables drawn at random.
    fn validate_lifted(&self, x: &str, u: &Expr, target: &Expr) -> Resolution {
        let lim = "#target";
        let body = replace_subterm(u, target, &Expr::var(lim));
        let others: Vec<String> = body
            .free_vars()
            .into_iter()
            .filter(|v| v != x && v != lim)
            .collect();
        let params: Vec<String> = [x.to_string(), lim.to_string()].into_iter().chain(others).collect();
        let ev = self.ev;
        let subject = move |s: &Sample| -> Result<LocalValue, String> {
            let mut e = body.clone();
            for (p, v) in params.iter().zip(&s.args) {
                e = e.substitute(p, &Expr::Lit(v.clone()));
            }
            let t = ev
                .eval_expr(0, &ValueTreeEnv::new(), &SensorSnapshot::default(), &e)
                .map_err(|e| e.to_string())?;
            t.root.as_local().cloned().ok_or_else(|| "field result".to_string())
        };
        let arity = 2 + u.free_vars().len().saturating_sub(1);
        let mut sampler = move |rng: &mut ChaCha8Rng| {
            Some(Sample::local(
                (0..arity).map(|_| LocalValue::num(uniform(rng, -100.0, 100.0).round())).collect(),
            ))
        };
        let ann = PropertyAnnotation::new("update", Property::Converging, &[0, 1], OrderSpec::Numeric);
        match validate_property(&subject, &ann, &mut sampler, AUTO_TRIALS, 0) {
            Ok(out) if out.passed() => Resolution::Validated { trials: AUTO_TRIALS },
            Ok(out) => Resolution::Refuted(out.violations[0].to_string()),
            Err(_) => Resolution::Unresolved,
        }
    }

    /// Replaces the outermost user-function call that mentions `x` by its body.
    ///
    /// Functions whose parameters occur inside an `if` branch are left alone,
    /// since inlining them would move argument evaluation under the branch.
    fn inline_once(&self, x: &str, e: &Expr) -> Option<Expr> {
        if let Expr::Call { name, args, fn_args } = e {
            if let Some(f) = self.program.function(name) {
                let inlinable = fn_args.is_empty()
                    && f.params.len() == args.len()
                    && f.params.iter().all(|p| !occurs_in_branch(&f.body, p));
                if inlinable && e.mentions_free(x) {
                    let mut body = f.body.clone();
                    for (i, p) in f.params.iter().enumerate() {
                        body = body.substitute(p, &Expr::var(&format!("#{i}")));
                    }
                    for (i, a) in args.iter().enumerate() {
                        body = body.substitute(&format!("#{i}"), a);
                    }
                    return Some(body);
                }
            }
        }
        let mut done = false;
        let out = map_children(e, &mut |c| {
            if done {
                return c.clone();
            }
            match self.inline_once(x, c) {
                Some(n) => {
                    done = true;
                    n
                }
                None => c.clone(),
            }
        });
        done.then_some(out)
    }
}

fn verdict_for(classified: RepVerdict, obligations: &[Obligation], cause: &str) -> RepVerdict {
    match obligations.iter().find(|o| matches!(o.resolution, Resolution::Refuted(_))) {
        Some(o) => RepVerdict::Unclassified(format!(
            "`{}` is not {} ({cause}): {}",
            o.function, o.property, o.resolution
        )),
        None => classified,
    }
}

fn is_nbr_of(e: &Expr, x: &str) -> bool {
    matches!(e, Expr::Nbr(b) if matches!(&**b, Expr::Var(v) if v == x))
}

fn mentions_nbr_of(e: &Expr, x: &str) -> bool {
    let mut found = false;
    e.walk(&mut |s| {
        if let Expr::Nbr(b) = s {
            if b.mentions_free(x) {
                found = true;
            }
        }
    });
    found
}

fn call_parts<'e>(e: &'e Expr, name: &str) -> Option<&'e [Expr]> {
    match e {
        Expr::Call { name: n, args, .. } if n == name => Some(args),
        _ => None,
    }
}

fn match_minimising(x: &str, u: &Expr) -> Option<Shape> {
    let (raise, mhl) = if call_parts(u, "minHoodLoc").is_some() {
        (None, u)
    } else {
        match u {
            Expr::Call { name, args, .. }
                if args.len() >= 2
                    && call_parts(&args[0], "minHoodLoc").is_some()
                    && matches!(&args[1], Expr::Var(v) if v == x) =>
            {
                (Some(name.clone()), &args[0])
            }
            _ => return None,
        }
    };
    let margs = call_parts(mhl, "minHoodLoc")?;
    if margs.len() != 2 || margs[1].mentions_free(x) {
        return None;
    }
    match &margs[0] {
        Expr::Call { name, args, .. }
            if args.first().is_some_and(|a| is_nbr_of(a, x)) && args[1..].iter().all(|a| !a.mentions_free(x)) =>
        {
            Some(Shape::Minimising {
                raise,
                mp: name.clone(),
                mp_extra: args[1..].to_vec(),
            })
        }
        _ => None,
    }
}

/// Whether every occurrence of `x` sits in one repeated `mux(nbrlt(s), nbr{x}, s)` outside `if` branches.
///
/// `Ok(false)` means the pattern is absent; `Err` means it is present but misused.
fn match_acyclic(x: &str, u: &Expr, p: &Program) -> Result<bool, String> {
    let mut filters: Vec<&Expr> = Vec::new();
    let mut stray = false;
    let mut in_branch = false;
    scan_acyclic(x, u, p, false, &mut filters, &mut stray, &mut in_branch);
    if filters.is_empty() {
        return Ok(false);
    }
    if in_branch {
        return Err("acyclic filter occurs inside an if branch".to_string());
    }
    if stray {
        return Err("the state is also used outside its acyclic filter".to_string());
    }
    if filters.iter().any(|f| *f != filters[0]) {
        return Err("differing acyclic filters over the same state".to_string());
    }
    Ok(true)
}

fn scan_acyclic<'e>(
    x: &str,
    e: &'e Expr,
    p: &Program,
    under_branch: bool,
    filters: &mut Vec<&'e Expr>,
    stray: &mut bool,
    in_branch: &mut bool,
) {
    if is_filter(x, e, p) {
        filters.push(e);
        *in_branch |= under_branch;
        return;
    }
    match e {
        Expr::Var(v) if v == x => *stray = true,
        Expr::Let { name, bound, body } => {
            scan_acyclic(x, bound, p, under_branch, filters, stray, in_branch);
            if name != x {
                scan_acyclic(x, body, p, under_branch, filters, stray, in_branch);
            }
        }
        Expr::Rep { init, var, update } => {
            scan_acyclic(x, init, p, under_branch, filters, stray, in_branch);
            if var != x {
                scan_acyclic(x, update, p, under_branch, filters, stray, in_branch);
            }
        }
        Expr::If {
            guard,
            then_branch,
            else_branch,
        } => {
            scan_acyclic(x, guard, p, under_branch, filters, stray, in_branch);
            scan_acyclic(x, then_branch, p, true, filters, stray, in_branch);
            scan_acyclic(x, else_branch, p, true, filters, stray, in_branch);
        }
        _ => {
            for c in e.children() {
                scan_acyclic(x, c, p, under_branch, filters, stray, in_branch);
            }
        }
    }
}

fn is_filter(x: &str, e: &Expr, p: &Program) -> bool {
    let Some(args) = call_parts(e, "mux") else {
        return false;
    };
    args.len() == 3 && is_nbrlt(&args[0], x, p) && is_nbr_of(&args[1], x) && !args[2].mentions_free(x)
}

/// `nbrlt(s)`, its definition `nbr{s} < s`, or a user function whose body is that definition.
fn is_nbrlt(g: &Expr, x: &str, p: &Program) -> bool {
    if g.mentions_free(x) {
        return false;
    }
    if call_parts(g, "nbrlt").is_some_and(|a| a.len() == 1) {
        return true;
    }
    if let Some([Expr::Nbr(a), b]) = call_parts(g, "<") {
        return **a == *b;
    }
    if let Expr::Call { name, args, .. } = g {
        if let Some(f) = p.function(name) {
            if let (1, [arg]) = (f.params.len(), args.as_slice()) {
                let body = f.body.substitute(&f.params[0], arg);
                return matches!(call_parts(&body, "<"), Some([Expr::Nbr(a), b]) if **a == *b);
            }
        }
    }
    false
}

/// The largest non-literal subterm free of `x`, read as the value the update converges to.
fn lifted_target(x: &str, u: &Expr) -> Option<Expr> {
    let mut candidates: Vec<Expr> = Vec::new();
    collect_maximal_free(x, u, &mut candidates);
    candidates.sort_by_key(|c| std::cmp::Reverse(c.size()));
    candidates.into_iter().next()
}

fn collect_maximal_free(x: &str, e: &Expr, out: &mut Vec<Expr>) {
    if !e.mentions_free(x) {
        if !matches!(e, Expr::Lit(_)) && !out.contains(e) {
            out.push(e.clone());
        }
        return;
    }
    for c in e.children() {
        collect_maximal_free(x, c, out);
    }
}

fn occurs_in_branch(body: &Expr, name: &str) -> bool {
    let mut found = false;
    body.walk(&mut |e| {
        if let Expr::If {
            then_branch,
            else_branch,
            ..
        } = e
        {
            if then_branch.mentions_free(name) || else_branch.mentions_free(name) {
                found = true;
            }
        }
    });
    found
}

fn map_children(e: &Expr, f: &mut impl FnMut(&Expr) -> Expr) -> Expr {
    match e {
        Expr::Var(_) | Expr::Lit(_) | Expr::FieldLit(_) => e.clone(),
        Expr::Let { name, bound, body } => Expr::Let {
            name: name.clone(),
            bound: Box::new(f(bound)),
            body: Box::new(f(body)),
        },
        Expr::Call { name, args, fn_args } => Expr::Call {
            name: name.clone(),
            args: args.iter().map(|a| f(a)).collect(),
            fn_args: fn_args.clone(),
        },
        Expr::If {
            guard,
            then_branch,
            else_branch,
        } => Expr::If {
            guard: Box::new(f(guard)),
            then_branch: Box::new(f(then_branch)),
            else_branch: Box::new(f(else_branch)),
        },
        Expr::Nbr(b) => Expr::Nbr(Box::new(f(b))),
        Expr::Rep { init, var, update } => Expr::Rep {
            init: Box::new(f(init)),
            var: var.clone(),
            update: Box::new(f(update)),
        },
    }
}

fn replace_subterm(e: &Expr, target: &Expr, with: &Expr) -> Expr {
    if e == target {
        return with.clone();
    }
    map_children(e, &mut |c| replace_subterm(c, target, with))
}

/// Semantics-preserving rewrites that expose the patterns.
///
/// * `let y = b in body` becomes `body[y := b]` unless `y` occurs in an `if` branch;
/// * `pickHood(nbr{e})` becomes `e`;
/// * `minHood(a) ± c` and `c + minHood(a)` with a literal `c` become `minHood(a ± c)`;
/// * `min(minHood(a), l)` and `min(l, minHood(a))` become `minHoodLoc(a, l)`.
fn normalise(e: &Expr, x: &str) -> Expr {
    let e = map_children(e, &mut |c| normalise(c, x));
    match &e {
        Expr::Let { name, bound, body } if !occurs_in_branch(body, name) => normalise(&body.substitute(name, bound), x),
        Expr::Call { name, args, .. } if name == "pickHood" && args.len() == 1 => match &args[0] {
            Expr::Nbr(inner) => (**inner).clone(),
            _ => e,
        },
        Expr::Call { name, args, .. } if (name == "+" || name == "-") && args.len() == 2 => {
            match (&args[0], &args[1]) {
                (m, c @ Expr::Lit(_)) if call_parts(m, "minHood").is_some_and(|a| a.len() == 1) => {
                    let a = &call_parts(m, "minHood").expect("checked")[0];
                    Expr::call("minHood", vec![Expr::call(name, vec![a.clone(), c.clone()])])
                }
                (c @ Expr::Lit(_), m) if name == "+" && call_parts(m, "minHood").is_some_and(|a| a.len() == 1) => {
                    let a = &call_parts(m, "minHood").expect("checked")[0];
                    Expr::call("minHood", vec![Expr::call("+", vec![a.clone(), c.clone()])])
                }
                _ => e,
            }
        }
        Expr::Call { name, args, .. } if name == "min" && args.len() == 2 => {
            let hood = |m: &Expr| call_parts(m, "minHood").filter(|a| a.len() == 1).map(|a| a[0].clone());
            match (hood(&args[0]), hood(&args[1])) {
                (Some(a), _) => Expr::call("minHoodLoc", vec![a, args[1].clone()]),
                (None, Some(a)) => Expr::call("minHoodLoc", vec![a, args[0].clone()]),
                _ => e,
            }
        }
        _ => e,
    }
}

/// Names of functions in the report's obligations, for listing what a registry must cover.
pub fn obligation_names(report: &FragmentReport) -> BTreeSet<(String, Property)> {
    report
        .sites
        .iter()
        .flat_map(|s| s.obligations.iter().map(|o| (o.function.clone(), o.property)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse;

    fn check(defs: &str, main: &str) -> FragmentReport {
        let p = parse(&format!("{defs}\n{main}")).unwrap();
        check_fragment(&p, &Registry::default()).unwrap()
    }

    fn only_site(r: &FragmentReport) -> &RepSite {
        assert_eq!(r.sites.len(), 1, "{r}");
        &r.sites[0]
    }

    #[test]
    fn oscillating_update_is_rejected() {
        let r = check("def f1(v) { rep (v) { (x) => v-x } }", "f1(snsNum())");
        let s = only_site(&r);
        assert_eq!(s.id, "f1#1");
        match &s.verdict {
            RepVerdict::Unclassified(reason) => assert!(reason.contains("oscillation"), "{reason}"),
            v => panic!("{v}"),
        }
        assert!(!r.accepted());
    }

    #[test]
    fn unfiltered_gossip_is_rejected() {
        let r = check("def f2(v) { rep (v) { (x) => max(maxHood+(nbr{x}), v) } }", "f2(snsNum())");
        match &only_site(&r).verdict {
            RepVerdict::Unclassified(reason) => assert!(reason.contains("state preservation"), "{reason}"),
            v => panic!("{v}"),
        }
    }

    #[test]
    fn descending_gradient_is_rejected() {
        let r = check("def f3(v) { rep (v) { (x) => min(minHood(nbr{x}) - 1, v) } }", "f3(snsNum())");
        match &only_site(&r).verdict {
            RepVerdict::Unclassified(reason) => assert!(reason.contains("divergence"), "{reason}"),
            v => panic!("{v}"),
        }
    }

    #[test]
    fn hopcount_is_minimising() {
        let r = check("def hopcount(v) { rep (v) { (x) => min(minHood(nbr{x}) + 1, v) } }", "hopcount(snsNum())");
        let s = only_site(&r);
        assert_eq!(s.verdict, RepVerdict::MinimisingRep);
        let props: Vec<(&str, Property)> = s.obligations.iter().map(|o| (o.function.as_str(), o.property)).collect();
        assert_eq!(
            props,
            vec![("+", Property::Monotonic), ("+", Property::Progressive), ("identity", Property::Raising)]
        );
        assert!(r.accepted(), "{r}");
    }

    #[test]
    fn filter_is_converging() {
        let r = check("def filter(v) { rep (v) { (x) => (v+x)/2 } }", "filter(snsNum())");
        assert_eq!(only_site(&r).verdict, RepVerdict::ConvergingRep);
        assert!(r.accepted(), "{r}");
    }

    #[test]
    fn filtered_gossip_is_acyclic() {
        let r = check(
            "def f2C(v, p) { rep (v) { (x) => max(maxHood+(mux(nbrlt(p), nbr{x}, 0)), v) } }",
            "f2C(snsNum(), snsNum())",
        );
        assert_eq!(only_site(&r).verdict, RepVerdict::AcyclicRep);
        assert!(r.accepted());
    }

    #[test]
    fn nbrlt_by_definition_is_recognised() {
        let r = check(
            "def lt(p) { nbr{p} < p }\ndef g(v, p) { rep (v) { (x) => maxHood+(mux(lt(p), nbr{x}, v)) } }",
            "g(snsNum(), snsNum())",
        );
        assert_eq!(only_site(&r).verdict, RepVerdict::AcyclicRep);
    }

    #[test]
    fn rep_variable_inside_the_filter_potential_is_rejected() {
        let r = check("def g(v) { rep (v) { (x) => maxHood+(mux(nbrlt(x), nbr{x}, v)) } }", "g(snsNum())");
        assert!(!only_site(&r).verdict.is_classified());
    }

    #[test]
    fn named_converging_function_needs_an_annotation() {
        let defs = "def avg(a, b) { pickHood((a+b)/2) }\ndef t(v) { rep (v) { (x) => avg(nbr{x}, nbr{v}) } }";
        let p = parse(&format!("{defs}\nt(snsNum())")).unwrap();
        let bare = check_fragment(&p, &Registry::default()).unwrap();
        assert_eq!(bare.sites[0].verdict, RepVerdict::ConvergingRep);
        assert!(!bare.accepted());
        let reg = Registry::parse("property avg C args=0,1 order=numeric").unwrap();
        assert!(check_fragment(&p, &reg).unwrap().accepted());
    }

    #[test]
    fn let_bindings_are_seen_through() {
        let r = check(
            "def h(v) { rep (v) { (x) => let m = minHood(nbr{x}) + 1 in min(m, v) } }",
            "h(snsNum())",
        );
        assert_eq!(only_site(&r).verdict, RepVerdict::MinimisingRep);
    }

    #[test]
    fn sites_in_main_are_numbered() {
        let r = check("", "rep(0){(x) => x} + rep(snsNum()){(y) => (snsNum()+y)/2}");
        let ids: Vec<&str> = r.sites.iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, vec!["main#1", "main#2"]);
        assert!(r.to_csv().starts_with("repSiteId,verdict,obligations,resolved\n"));
    }
}
