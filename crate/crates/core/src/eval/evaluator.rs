//! The big-step evaluator.

use std::cell::Cell;

use super::builtins::{Applier, BuiltinCtx, BuiltinRegistry};
use super::{project, EvalError, SensorSnapshot, Selector, ValueTree, ValueTreeEnv};
use crate::lang::{Expr, Program};
use crate::value::{DeviceId, LocalValue, NeighbouringField, Value};

type Aligned<'t> = Vec<(DeviceId, &'t ValueTree)>;

/// Evaluates expressions against a fixed program and builtin set.
#[derive(Clone, Copy, Debug)]
pub struct Evaluator<'p> {
    program: &'p Program,
    builtins: &'p BuiltinRegistry,
    max_depth: usize,
}

struct Run<'r, 'p> {
    ev: &'r Evaluator<'p>,
    self_id: DeviceId,
    sensors: &'r SensorSnapshot,
    depth: Cell<usize>,
}

impl<'p> Evaluator<'p> {
    pub fn new(program: &'p Program, builtins: &'p BuiltinRegistry) -> Self {
        Evaluator {
            program,
            builtins,
            max_depth: 200,
        }
    }

    /// Bounds nested user-function calls, so runaway recursion fails instead of overflowing.
    pub fn with_max_depth(mut self, max_depth: usize) -> Self {
        self.max_depth = max_depth;
        self
    }

    pub fn program(&self) -> &'p Program {
        self.program
    }

    pub fn builtins(&self) -> &'p BuiltinRegistry {
        self.builtins
    }

    /// One firing of the program's main expression.
    pub fn eval_main(
        &self,
        self_id: DeviceId,
        env: &ValueTreeEnv,
        sensors: &SensorSnapshot,
    ) -> Result<ValueTree, EvalError> {
        self.eval_expr(self_id, env, sensors, self.program.main())
    }

    /// One firing of an arbitrary closed expression over the program's functions.
    pub fn eval_expr(
        &self,
        self_id: DeviceId,
        env: &ValueTreeEnv,
        sensors: &SensorSnapshot,
        e: &Expr,
    ) -> Result<ValueTree, EvalError> {
        let aligned: Aligned<'_> = env.iter().map(|(d, t)| (*d, t.as_ref())).collect();
        let run = self.run(self_id, sensors);
        run.eval(e, &aligned, &mut Vec::new())
    }

    /// Applies a function or builtin by name to values, with no neighbours.
    pub fn apply(
        &self,
        self_id: DeviceId,
        sensors: &SensorSnapshot,
        name: &str,
        args: &[Value],
    ) -> Result<Value, EvalError> {
        let run = self.run(self_id, sensors);
        let ctx = BuiltinCtx {
            self_id,
            env: &[],
            sensors,
            fn_args: &[],
            applier: &run,
        };
        run.apply(name, args, &ctx)
    }

    fn run<'r>(&'r self, self_id: DeviceId, sensors: &'r SensorSnapshot) -> Run<'r, 'p> {
        Run {
            ev: self,
            self_id,
            sensors,
            depth: Cell::new(0),
        }
    }
}

fn align<'t>(env: &[(DeviceId, &'t ValueTree)], selector: &Selector) -> Aligned<'t> {
    env.iter()
        .filter_map(|(d, t)| project(t, selector).map(|s| (*d, s)))
        .collect()
}

fn child<'t>(env: &[(DeviceId, &'t ValueTree)], i: usize) -> Aligned<'t> {
    align(env, &Selector::Child(i))
}

impl Run<'_, '_> {
    fn restrict(&self, f: &NeighbouringField, env: &[(DeviceId, &ValueTree)]) -> NeighbouringField {
        f.restrict(|d| d == self.self_id || env.iter().any(|(e, _)| *e == d))
    }

    fn enter(&self) -> Result<(), EvalError> {
        let d = self.depth.get() + 1;
        if d > self.ev.max_depth {
            return Err(EvalError::DepthExceeded(self.ev.max_depth));
        }
        self.depth.set(d);
        Ok(())
    }

    fn leave(&self) {
        self.depth.set(self.depth.get() - 1);
    }

    fn eval<'e, 't>(
        &self,
        e: &'e Expr,
        env: &[(DeviceId, &'t ValueTree)],
        scope: &mut Vec<(&'e str, Value)>,
    ) -> Result<ValueTree, EvalError> {
        match e {
            Expr::Lit(v) => Ok(ValueTree::leaf(v.clone())),
            Expr::FieldLit(f) => Ok(ValueTree::leaf(self.restrict(f, env))),
            Expr::Var(x) => {
                let v = scope
                    .iter()
                    .rev()
                    .find(|(n, _)| n == x)
                    .map(|(_, v)| v)
                    .ok_or_else(|| EvalError::Unbound(x.clone()))?;
                Ok(match v {
                    Value::Field(f) => ValueTree::leaf(self.restrict(f, env)),
                    Value::Local(l) => ValueTree::leaf(l.clone()),
                })
            }
            Expr::Let { name, bound, body } => {
                let t1 = self.eval(bound, &child(env, 0), scope)?;
                scope.push((name.as_str(), t1.root.clone()));
                let t2 = self.eval(body, &child(env, 1), scope);
                scope.pop();
                let t2 = t2?;
                Ok(ValueTree::node(t2.root.clone(), vec![t1, t2]))
            }
            Expr::Call { name, args, fn_args } => {
                let mut trees = Vec::with_capacity(args.len() + 1);
                for (i, a) in args.iter().enumerate() {
                    trees.push(self.eval(a, &child(env, i), scope)?);
                }
                let values: Vec<Value> = trees.iter().map(|t| t.root.clone()).collect();
                if let Some(decl) = self.ev.program.function(name) {
                    if decl.params.len() != args.len() {
                        return Err(EvalError::Arity {
                            name: name.clone(),
                            expected: decl.params.len().to_string(),
                            found: args.len(),
                        });
                    }
                    let mut inner: Vec<(&str, Value)> =
                        decl.params.iter().map(String::as_str).zip(values).collect();
                    self.enter()?;
                    let body = self.eval(&decl.body, &child(env, args.len()), &mut inner);
                    self.leave();
                    let body = body?;
                    let root = body.root.clone();
                    trees.push(body);
                    Ok(ValueTree::node(root, trees))
                } else {
                    let ctx = BuiltinCtx {
                        self_id: self.self_id,
                        env,
                        sensors: self.sensors,
                        fn_args,
                        applier: self,
                    };
                    let v = self.ev.builtins.call(name, &values, &ctx)?;
                    Ok(ValueTree::node(v, trees))
                }
            }
            Expr::Nbr(body) => {
                let inner_env = child(env, 0);
                let t = self.eval(body, &inner_env, scope)?;
                let mut entries = Vec::with_capacity(inner_env.len() + 1);
                for (d, nt) in &inner_env {
                    if *d == self.self_id {
                        continue;
                    }
                    match &nt.root {
                        Value::Local(v) => entries.push((*d, v.clone())),
                        Value::Field(_) => {
                            return Err(EvalError::Stuck("neighbour shared a field value".into()))
                        }
                    }
                }
                let mine = t
                    .root
                    .as_local()
                    .ok_or_else(|| EvalError::Stuck("`nbr` of a field-valued expression".into()))?;
                entries.push((self.self_id, mine.clone()));
                let phi = NeighbouringField::from_entries(entries);
                Ok(ValueTree::node(phi, vec![t]))
            }
            Expr::Rep { init, var, update } => {
                let t1 = self.eval(init, &child(env, 0), scope)?;
                let update_env = child(env, 1);
                let seed = update_env
                    .iter()
                    .find(|(d, _)| *d == self.self_id)
                    .map(|(_, t)| t.root.clone())
                    .unwrap_or_else(|| t1.root.clone());
                scope.push((var.as_str(), seed));
                let t2 = self.eval(update, &update_env, scope);
                scope.pop();
                let t2 = t2?;
                Ok(ValueTree::node(t2.root.clone(), vec![t1, t2]))
            }
            Expr::If {
                guard,
                then_branch,
                else_branch,
            } => {
                let t1 = self.eval(guard, &child(env, 0), scope)?;
                let g = match &t1.root {
                    Value::Local(LocalValue::Bool(b)) => *b,
                    other => {
                        return Err(EvalError::Stuck(format!("`if` guard evaluated to {other}")))
                    }
                };
                let branch_env = align(env, &Selector::Branch(LocalValue::Bool(g)));
                let branch = if g { then_branch } else { else_branch };
                let t = self.eval(branch, &branch_env, scope)?;
                Ok(ValueTree::node(t.root.clone(), vec![t1, t]))
            }
        }
    }
}

impl Applier for Run<'_, '_> {
    fn apply(&self, f: &str, args: &[Value], ctx: &BuiltinCtx<'_>) -> Result<Value, EvalError> {
        match self.ev.program.function(f) {
            Some(decl) => {
                if decl.params.len() != args.len() {
                    return Err(EvalError::Arity {
                        name: f.to_string(),
                        expected: decl.params.len().to_string(),
                        found: args.len(),
                    });
                }
                let mut scope: Vec<(&str, Value)> =
                    decl.params.iter().map(String::as_str).zip(args.iter().cloned()).collect();
                self.enter()?;
                let r = self.eval(&decl.body, &[], &mut scope);
                self.leave();
                Ok(r?.root)
            }
            None => self.ev.builtins.call(f, args, ctx),
        }
    }
}
