//! Abstract syntax of field-calculus programs.

use std::collections::{BTreeSet, HashMap};
use std::sync::OnceLock;

use crate::value::{LocalValue, NeighbouringField};

use super::LangError;

/// An expression of the calculus.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Var(String),
    Lit(LocalValue),
    /// Neighbouring field value; only produced during evaluation, never parsed.
    FieldLit(NeighbouringField),
    Let {
        name: String,
        bound: Box<Expr>,
        body: Box<Expr>,
    },
    Call {
        name: String,
        args: Vec<Expr>,
        fn_args: Vec<String>,
    },
    If {
        guard: Box<Expr>,
        then_branch: Box<Expr>,
        else_branch: Box<Expr>,
    },
    Nbr(Box<Expr>),
    Rep {
        init: Box<Expr>,
        var: String,
        update: Box<Expr>,
    },
}

impl Expr {
    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    pub fn num(x: f64) -> Expr {
        Expr::Lit(LocalValue::Num(x))
    }

    pub fn call(name: &str, args: Vec<Expr>) -> Expr {
        Expr::Call {
            name: name.to_string(),
            args,
            fn_args: Vec::new(),
        }
    }

    pub fn call_with(name: &str, args: Vec<Expr>, fn_args: &[&str]) -> Expr {
        Expr::Call {
            name: name.to_string(),
            args,
            fn_args: fn_args.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn nbr(body: Expr) -> Expr {
        Expr::Nbr(Box::new(body))
    }

    pub fn rep(init: Expr, var: &str, update: Expr) -> Expr {
        Expr::Rep {
            init: Box::new(init),
            var: var.to_string(),
            update: Box::new(update),
        }
    }

    pub fn let_in(name: &str, bound: Expr, body: Expr) -> Expr {
        Expr::Let {
            name: name.to_string(),
            bound: Box::new(bound),
            body: Box::new(body),
        }
    }

    pub fn if_then_else(guard: Expr, then_branch: Expr, else_branch: Expr) -> Expr {
        Expr::If {
            guard: Box::new(guard),
            then_branch: Box::new(then_branch),
            else_branch: Box::new(else_branch),
        }
    }

    /// Direct subexpressions in evaluation order.
    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Var(_) | Expr::Lit(_) | Expr::FieldLit(_) => vec![],
            Expr::Let { bound, body, .. } => vec![bound, body],
            Expr::Call { args, .. } => args.iter().collect(),
            Expr::If {
                guard,
                then_branch,
                else_branch,
            } => vec![guard, then_branch, else_branch],
            Expr::Nbr(body) => vec![body],
            Expr::Rep { init, update, .. } => vec![init, update],
        }
    }

    /// Pre-order visit of every subexpression.
    pub fn walk<'a>(&'a self, visit: &mut impl FnMut(&'a Expr)) {
        visit(self);
        for child in self.children() {
            child.walk(visit);
        }
    }

    /// Free variables, in sorted order.
    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut Vec::new(), &mut out);
        out
    }

    fn collect_free(&self, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
        match self {
            Expr::Var(name) => {
                if !bound.iter().any(|b| b == name) {
                    out.insert(name.clone());
                }
            }
            Expr::Lit(_) | Expr::FieldLit(_) => {}
            Expr::Let { name, bound: e, body } => {
                e.collect_free(bound, out);
                bound.push(name.clone());
                body.collect_free(bound, out);
                bound.pop();
            }
            Expr::Call { args, .. } => {
                for a in args {
                    a.collect_free(bound, out);
                }
            }
            Expr::If {
                guard,
                then_branch,
                else_branch,
            } => {
                guard.collect_free(bound, out);
                then_branch.collect_free(bound, out);
                else_branch.collect_free(bound, out);
            }
            Expr::Nbr(body) => body.collect_free(bound, out),
            Expr::Rep { init, var, update } => {
                init.collect_free(bound, out);
                bound.push(var.clone());
                update.collect_free(bound, out);
                bound.pop();
            }
        }
    }

    pub fn mentions_free(&self, name: &str) -> bool {
        self.free_vars().contains(name)
    }

    /// Capture-avoiding substitution of `replacement` for free occurrences of `name`.
    ///
    /// Binders that would capture a free variable of `replacement` are renamed.
    pub fn substitute(&self, name: &str, replacement: &Expr) -> Expr {
        let fv = replacement.free_vars();
        self.subst_inner(name, replacement, &fv)
    }

    fn subst_inner(&self, name: &str, rep: &Expr, fv: &BTreeSet<String>) -> Expr {
        match self {
            Expr::Var(v) if v == name => rep.clone(),
            Expr::Var(_) | Expr::Lit(_) | Expr::FieldLit(_) => self.clone(),
            Expr::Let {
                name: bind,
                bound,
                body,
            } => {
                let bound = bound.subst_inner(name, rep, fv);
                if bind == name {
                    return Expr::Let {
                        name: bind.clone(),
                        bound: Box::new(bound),
                        body: body.clone(),
                    };
                }
                let (bind, body) = freshen(bind, body, fv);
                Expr::Let {
                    name: bind,
                    bound: Box::new(bound),
                    body: Box::new(body.subst_inner(name, rep, fv)),
                }
            }
            Expr::Call {
                name: f,
                args,
                fn_args,
            } => Expr::Call {
                name: f.clone(),
                args: args.iter().map(|a| a.subst_inner(name, rep, fv)).collect(),
                fn_args: fn_args.clone(),
            },
            Expr::If {
                guard,
                then_branch,
                else_branch,
            } => Expr::If {
                guard: Box::new(guard.subst_inner(name, rep, fv)),
                then_branch: Box::new(then_branch.subst_inner(name, rep, fv)),
                else_branch: Box::new(else_branch.subst_inner(name, rep, fv)),
            },
            Expr::Nbr(body) => Expr::Nbr(Box::new(body.subst_inner(name, rep, fv))),
            Expr::Rep { init, var, update } => {
                let init = init.subst_inner(name, rep, fv);
                if var == name {
                    return Expr::Rep {
                        init: Box::new(init),
                        var: var.clone(),
                        update: update.clone(),
                    };
                }
                let (var, update) = freshen(var, update, fv);
                Expr::Rep {
                    init: Box::new(init),
                    var,
                    update: Box::new(update.subst_inner(name, rep, fv)),
                }
            }
        }
    }

    /// Counts nodes; used to bound rewriting.
    pub fn size(&self) -> usize {
        let mut n = 0;
        self.walk(&mut |_| n += 1);
        n
    }
}

fn freshen(binder: &str, body: &Expr, avoid: &BTreeSet<String>) -> (String, Expr) {
    if !avoid.contains(binder) {
        return (binder.to_string(), body.clone());
    }
    let taken = body.free_vars();
    let mut i = 1;
    loop {
        let candidate = format!("{binder}_{i}");
        if !avoid.contains(&candidate) && !taken.contains(&candidate) {
            let renamed = body.substitute(binder, &Expr::Var(candidate.clone()));
            return (candidate, renamed);
        }
        i += 1;
    }
}

/// `def name(params)(fn_params) { body }`.
#[derive(Clone, Debug, PartialEq)]
pub struct FunctionDecl {
    pub name: String,
    pub params: Vec<String>,
    pub fn_params: Vec<String>,
    pub body: Expr,
}

impl FunctionDecl {
    pub fn new(name: &str, params: &[&str], body: Expr) -> Self {
        FunctionDecl {
            name: name.to_string(),
            params: params.iter().map(|s| s.to_string()).collect(),
            fn_params: Vec::new(),
            body,
        }
    }

    pub fn is_extended(&self) -> bool {
        !self.fn_params.is_empty()
    }

    pub(crate) fn validate(&self) -> Result<(), LangError> {
        let mut seen = BTreeSet::new();
        for p in self.params.iter().chain(self.fn_params.iter()) {
            if !seen.insert(p.as_str()) {
                return Err(LangError::DuplicateParameter {
                    function: self.name.clone(),
                    param: p.clone(),
                });
            }
        }
        for v in self.body.free_vars() {
            if !self.params.contains(&v) {
                return Err(LangError::UnboundVariable {
                    name: v,
                    context: self.name.clone(),
                });
            }
        }
        Ok(())
    }
}

/// Function declarations followed by a main expression.
#[derive(Clone, Debug)]
pub struct Program {
    functions: Vec<FunctionDecl>,
    main: Expr,
    index: OnceLock<HashMap<String, usize>>,
}

impl PartialEq for Program {
    fn eq(&self, other: &Self) -> bool {
        self.functions == other.functions && self.main == other.main
    }
}

impl Program {
    /// Checks name uniqueness, parameter hygiene and closedness of `main`.
    pub fn new(functions: Vec<FunctionDecl>, main: Expr) -> Result<Program, LangError> {
        let mut names = BTreeSet::new();
        for f in &functions {
            if !names.insert(f.name.as_str()) {
                return Err(LangError::DuplicateFunction(f.name.clone()));
            }
            f.validate()?;
        }
        if let Some(v) = main.free_vars().into_iter().next() {
            return Err(LangError::UnboundVariable {
                name: v,
                context: "main".to_string(),
            });
        }
        Ok(Program {
            functions,
            main,
            index: OnceLock::new(),
        })
    }

    pub fn functions(&self) -> &[FunctionDecl] {
        &self.functions
    }

    pub fn main(&self) -> &Expr {
        &self.main
    }

    pub fn into_parts(self) -> (Vec<FunctionDecl>, Expr) {
        (self.functions, self.main)
    }

    pub fn function(&self, name: &str) -> Option<&FunctionDecl> {
        let index = self.index.get_or_init(|| {
            self.functions
                .iter()
                .enumerate()
                .map(|(i, f)| (f.name.clone(), i))
                .collect()
        });
        index.get(name).map(|&i| &self.functions[i])
    }

    /// Same declarations with a different main expression.
    pub fn with_main(&self, main: Expr) -> Result<Program, LangError> {
        Program::new(self.functions.clone(), main)
    }
}
