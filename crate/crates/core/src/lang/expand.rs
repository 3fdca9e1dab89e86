//! Elimination of functional parameters by macro instantiation.
//!
//! A call `d(ē)(f̄)` of an extended function becomes a call of the plain
//! instance `d__f1__f2…`, whose body is `d`'s body with `f̄` substituted for its
//! functional parameters. Instances are created on demand from `main` and the
//! plain declarations, so unused extended functions disappear.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use super::ast::{Expr, FunctionDecl, Program};
use super::LangError;

/// Spelling of a functional argument inside an instance name.
pub fn mangle_component(f: &str) -> String {
    let op = match f {
        "+" => Some("plus"),
        "-" => Some("minus"),
        "*" => Some("times"),
        "/" => Some("div"),
        "%" => Some("mod"),
        "<" => Some("lt"),
        "<=" => Some("le"),
        "=" => Some("eq"),
        ">=" => Some("ge"),
        ">" => Some("gt"),
        "!=" => Some("ne"),
        "&&" => Some("and"),
        "||" => Some("or"),
        _ => None,
    };
    match op {
        Some(word) => word.to_string(),
        None => f.replace('+', "_plus"),
    }
}

/// Deterministic instance name for `base` applied to `fn_args`.
pub fn instance_name(base: &str, fn_args: &[String]) -> String {
    let mut name = base.to_string();
    for f in fn_args {
        name.push_str("__");
        name.push_str(&mangle_component(f));
    }
    name
}

struct Expander<'p> {
    plain: HashMap<&'p str, &'p FunctionDecl>,
    extended: HashMap<&'p str, &'p FunctionDecl>,
    declared: BTreeSet<&'p str>,
    instances: BTreeMap<(String, Vec<String>), String>,
    queue: VecDeque<(String, Vec<String>)>,
}

impl<'p> Expander<'p> {
    fn rewrite(&mut self, e: &Expr, subst: &HashMap<String, String>, context: &str) -> Result<Expr, LangError> {
        Ok(match e {
            Expr::Var(_) | Expr::Lit(_) | Expr::FieldLit(_) => e.clone(),
            Expr::Let { name, bound, body } => Expr::Let {
                name: name.clone(),
                bound: Box::new(self.rewrite(bound, subst, context)?),
                body: Box::new(self.rewrite(body, subst, context)?),
            },
            Expr::If {
                guard,
                then_branch,
                else_branch,
            } => Expr::If {
                guard: Box::new(self.rewrite(guard, subst, context)?),
                then_branch: Box::new(self.rewrite(then_branch, subst, context)?),
                else_branch: Box::new(self.rewrite(else_branch, subst, context)?),
            },
            Expr::Nbr(body) => Expr::Nbr(Box::new(self.rewrite(body, subst, context)?)),
            Expr::Rep { init, var, update } => Expr::Rep {
                init: Box::new(self.rewrite(init, subst, context)?),
                var: var.clone(),
                update: Box::new(self.rewrite(update, subst, context)?),
            },
            Expr::Call { name, args, fn_args } => {
                let target = subst.get(name).cloned().unwrap_or_else(|| name.clone());
                let mut actual = Vec::with_capacity(fn_args.len());
                for f in fn_args {
                    let f = subst.get(f).cloned().unwrap_or_else(|| f.clone());
                    if self.extended.contains_key(f.as_str()) {
                        return Err(LangError::IllegalFunctionalArgument {
                            name: f,
                            context: context.to_string(),
                        });
                    }
                    actual.push(f);
                }
                let args = args
                    .iter()
                    .map(|a| self.rewrite(a, subst, context))
                    .collect::<Result<Vec<_>, _>>()?;
                if let Some(decl) = self.extended.get(target.as_str()) {
                    if decl.fn_params.len() != actual.len() {
                        return Err(LangError::FunctionalArity {
                            function: target,
                            expected: decl.fn_params.len(),
                            found: actual.len(),
                        });
                    }
                    let key = (target.clone(), actual);
                    let inst = match self.instances.get(&key) {
                        Some(n) => n.clone(),
                        None => {
                            let n = instance_name(&key.0, &key.1);
                            if self.declared.contains(n.as_str()) {
                                return Err(LangError::NameCollision(n));
                            }
                            self.instances.insert(key.clone(), n.clone());
                            self.queue.push_back(key);
                            n
                        }
                    };
                    Expr::Call {
                        name: inst,
                        args,
                        fn_args: Vec::new(),
                    }
                } else {
                    if self.plain.contains_key(target.as_str()) && !actual.is_empty() {
                        return Err(LangError::FunctionalArity {
                            function: target,
                            expected: 0,
                            found: actual.len(),
                        });
                    }
                    Expr::Call {
                        name: target,
                        args,
                        fn_args: actual,
                    }
                }
            }
        })
    }
}

/// Replaces every extended function by its plain instances.
pub fn expand_functional_params(p: &Program) -> Result<Program, LangError> {
    let mut ex = Expander {
        plain: HashMap::new(),
        extended: HashMap::new(),
        declared: BTreeSet::new(),
        instances: BTreeMap::new(),
        queue: VecDeque::new(),
    };
    for f in p.functions() {
        ex.declared.insert(f.name.as_str());
        if f.is_extended() {
            ex.extended.insert(f.name.as_str(), f);
        } else {
            ex.plain.insert(f.name.as_str(), f);
        }
    }
    let empty = HashMap::new();
    let mut out = Vec::new();
    for f in p.functions().iter().filter(|f| !f.is_extended()) {
        out.push(FunctionDecl {
            name: f.name.clone(),
            params: f.params.clone(),
            fn_params: Vec::new(),
            body: ex.rewrite(&f.body, &empty, &f.name)?,
        });
    }
    let main = ex.rewrite(p.main(), &empty, "main")?;
    while let Some((base, actual)) = ex.queue.pop_front() {
        let decl = ex.extended[base.as_str()];
        let subst: HashMap<String, String> = decl
            .fn_params
            .iter()
            .cloned()
            .zip(actual.iter().cloned())
            .collect();
        let name = ex.instances[&(base.clone(), actual.clone())].clone();
        let body = ex.rewrite(&decl.body, &subst, &name)?;
        out.push(FunctionDecl {
            name,
            params: decl.params.clone(),
            fn_params: Vec::new(),
            body,
        });
    }
    check_instance_bound(&ex)?;
    Program::new(out, main)
}

fn check_instance_bound(ex: &Expander<'_>) -> Result<(), LangError> {
    let passed: BTreeSet<&str> = ex
        .instances
        .keys()
        .flat_map(|(_, args)| args.iter().map(|s| s.as_str()))
        .collect();
    let n = passed.len();
    let mut per_base: BTreeMap<&str, usize> = BTreeMap::new();
    for (base, _) in ex.instances.keys() {
        *per_base.entry(base.as_str()).or_default() += 1;
    }
    for (base, count) in per_base {
        let k = ex.extended[base].fn_params.len() as u32;
        let bound = n.saturating_pow(k);
        if count > bound {
            return Err(LangError::InstanceBound {
                function: base.to_string(),
                bound,
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parser::parse;

    const GOSSIP: &str = "
        def foldwithlocal(field, local, initial)(aggregate) {
          aggregate(foldHood(field, initial)(aggregate), local)
        }
        def gossip(initial)(aggregate, sensor) {
          rep (initial) { (x) => foldwithlocal(nbr{x}, sensor(), initial)(aggregate) }
        }
        gossip(infinity)(min, sns_temp) < gossip(-infinity)(max, sns_threshold)
    ";

    #[test]
    fn gossip_instances_match_the_hand_expansion() {
        let p = expand_functional_params(&parse(GOSSIP).unwrap()).unwrap();
        let names: Vec<&str> = p.functions().iter().map(|f| f.name.as_str()).collect();
        assert_eq!(
            names,
            vec![
                "gossip__min__sns_temp",
                "gossip__max__sns_threshold",
                "foldwithlocal__min",
                "foldwithlocal__max"
            ]
        );
        let hand = parse(
            "
            def foldwithlocal__min(field, local, initial) {
              min(foldHood(field, initial)(min), local)
            }
            def gossip__min__sns_temp(initial) {
              rep (initial) { (x) => foldwithlocal__min(nbr{x}, sns_temp(), initial) }
            }
            gossip__min__sns_temp(infinity) < 0
        ",
        )
        .unwrap();
        for f in hand.functions() {
            assert_eq!(p.function(&f.name).unwrap(), f);
        }
    }

    #[test]
    fn plain_programs_are_untouched() {
        let p = parse("def f(x) { x + 1 }\nf(nbr{2})").unwrap();
        assert_eq!(expand_functional_params(&p).unwrap(), p);
    }

    #[test]
    fn expansion_is_idempotent() {
        let once = expand_functional_params(&parse(GOSSIP).unwrap()).unwrap();
        assert_eq!(expand_functional_params(&once).unwrap(), once);
    }

    #[test]
    fn extended_function_as_argument_is_rejected() {
        let p = parse("def ap(x)(f) { f(x) }\ndef tw(x)(f) { f(f(x)) }\nap(1)(tw)").unwrap();
        assert!(matches!(
            expand_functional_params(&p),
            Err(LangError::IllegalFunctionalArgument { .. })
        ));
    }

    #[test]
    fn operator_arguments_are_mangled() {
        let p = parse("def ap(a, b)(f) { f(a, b) }\nap(1, 2)(+) + ap(1, 2)(minHood+)").unwrap();
        let e = expand_functional_params(&p).unwrap();
        assert!(e.function("ap__plus").is_some());
        assert!(e.function("ap__minHood_plus").is_some());
    }

    #[test]
    fn collisions_with_user_names_are_rejected() {
        let p = parse("def ap(a)(f) { f(a) }\ndef ap__g(a) { a }\ndef g(a) { a }\nap(1)(g)").unwrap();
        assert_eq!(
            expand_functional_params(&p).unwrap_err(),
            LangError::NameCollision("ap__g".into())
        );
    }
}
