//! Local-versus-field kind checking with a light element-type discipline.
//!
//! User functions are checked once per distinct tuple of argument kinds, so a
//! function written for local values can also be applied to fields, matching
//! the pointwise reading of builtins.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use thiserror::Error;

use super::ast::{Expr, Program};
use super::pretty::pretty_expr;
use crate::value::LocalValue;

/// Element type of a local value; `Any` stands for values the checker cannot see into.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LocalType {
    Num,
    Bool,
    Tuple(Vec<LocalType>),
    Any,
}

/// Kind of an expression: a local value or a field of local values.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Kind {
    Local(LocalType),
    Field(LocalType),
}

impl Kind {
    pub fn is_field(&self) -> bool {
        matches!(self, Kind::Field(_))
    }

    pub fn element(&self) -> &LocalType {
        match self {
            Kind::Local(t) | Kind::Field(t) => t,
        }
    }
}

impl fmt::Display for LocalType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LocalType::Num => f.write_str("num"),
            LocalType::Bool => f.write_str("bool"),
            LocalType::Any => f.write_str("any"),
            LocalType::Tuple(items) => {
                f.write_str("(")?;
                for (i, t) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{t}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kind::Local(t) => write!(f, "Local {t}"),
            Kind::Field(t) => write!(f, "Field {t}"),
        }
    }
}

/// Ill-kinded programs.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum KindError {
    #[error("nested field: nbr applied to a field in `{at}`")]
    NestedField { at: String },
    #[error("branch mismatch in `{at}`: {then_kind} versus {else_kind}")]
    BranchMismatch {
        at: String,
        then_kind: Kind,
        else_kind: Kind,
    },
    #[error("guard of `{at}` must be a local boolean, found {found}")]
    GuardNotBoolean { at: String, found: Kind },
    #[error("rep in `{at}` must carry a local value of one kind: {detail}")]
    RepKind { at: String, detail: String },
    #[error("`{at}`: {detail}")]
    Mismatch { at: String, detail: String },
    #[error("`{name}` expects {expected} arguments, got {found}")]
    Arity {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("functional parameters remain at `{0}`; expand the program first")]
    Unexpanded(String),
}

/// Kinds of every subexpression, keyed by child-index path.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KindReport {
    pub main: BTreeMap<Vec<usize>, Kind>,
    /// Per function instantiation, keyed as `name(kind, ...)`.
    pub functions: BTreeMap<String, BTreeMap<Vec<usize>, Kind>>,
}

impl KindReport {
    pub fn main_kind(&self) -> &Kind {
        &self.main[&Vec::new()]
    }
}

fn join(a: &LocalType, b: &LocalType) -> Option<LocalType> {
    use LocalType::*;
    match (a, b) {
        (Any, t) | (t, Any) => Some(t.clone()),
        (Num, Num) => Some(Num),
        (Bool, Bool) => Some(Bool),
        (Tuple(x), Tuple(y)) if x.len() == y.len() => x
            .iter()
            .zip(y.iter())
            .map(|(p, q)| join(p, q))
            .collect::<Option<Vec<_>>>()
            .map(Tuple),
        _ => None,
    }
}

fn type_of(v: &LocalValue) -> LocalType {
    match v {
        LocalValue::Num(_) => LocalType::Num,
        LocalValue::Bool(_) => LocalType::Bool,
        LocalValue::Tuple(items) => LocalType::Tuple(items.iter().map(type_of).collect()),
        LocalValue::Cons(..) => LocalType::Any,
    }
}

fn snippet(e: &Expr) -> String {
    let s = pretty_expr(e);
    if s.chars().count() > 60 {
        let cut: String = s.chars().take(57).collect();
        format!("{cut}...")
    } else {
        s
    }
}

struct Checker<'p> {
    program: &'p Program,
    memo: HashMap<(String, Vec<Kind>), Kind>,
    active: Vec<(String, Vec<Kind>)>,
    functions: BTreeMap<String, BTreeMap<Vec<usize>, Kind>>,
}

type Scope = Vec<(String, Kind)>;

impl<'p> Checker<'p> {
    fn check(
        &mut self,
        e: &Expr,
        scope: &mut Scope,
        path: &mut Vec<usize>,
        out: &mut BTreeMap<Vec<usize>, Kind>,
    ) -> Result<Kind, KindError> {
        let k = self.check_inner(e, scope, path, out)?;
        out.insert(path.clone(), k.clone());
        Ok(k)
    }

    fn child(
        &mut self,
        i: usize,
        e: &Expr,
        scope: &mut Scope,
        path: &mut Vec<usize>,
        out: &mut BTreeMap<Vec<usize>, Kind>,
    ) -> Result<Kind, KindError> {
        path.push(i);
        let r = self.check(e, scope, path, out);
        path.pop();
        r
    }

    fn check_inner(
        &mut self,
        e: &Expr,
        scope: &mut Scope,
        path: &mut Vec<usize>,
        out: &mut BTreeMap<Vec<usize>, Kind>,
    ) -> Result<Kind, KindError> {
        match e {
            Expr::Var(v) => scope
                .iter()
                .rev()
                .find(|(n, _)| n == v)
                .map(|(_, k)| k.clone())
                .ok_or_else(|| KindError::Unbound(v.clone())),
            Expr::Lit(v) => Ok(Kind::Local(type_of(v))),
            Expr::FieldLit(f) => {
                let mut t = LocalType::Any;
                for (_, v) in f.iter() {
                    t = join(&t, &type_of(v)).unwrap_or(LocalType::Any);
                }
                Ok(Kind::Field(t))
            }
            Expr::Let { name, bound, body } => {
                let kb = self.child(0, bound, scope, path, out)?;
                scope.push((name.clone(), kb));
                let r = self.child(1, body, scope, path, out);
                scope.pop();
                r
            }
            Expr::Nbr(body) => match self.child(0, body, scope, path, out)? {
                Kind::Local(t) => Ok(Kind::Field(t)),
                Kind::Field(_) => Err(KindError::NestedField { at: snippet(e) }),
            },
            Expr::Rep { init, var, update } => {
                let ki = self.child(0, init, scope, path, out)?;
                let ti = match ki {
                    Kind::Local(t) => t,
                    Kind::Field(_) => {
                        return Err(KindError::RepKind {
                            at: snippet(e),
                            detail: "initial value is a field".into(),
                        })
                    }
                };
                scope.push((var.clone(), Kind::Local(ti.clone())));
                let ku = self.child(1, update, scope, path, out);
                scope.pop();
                match ku? {
                    Kind::Local(tu) => join(&ti, &tu).map(Kind::Local).ok_or_else(|| KindError::RepKind {
                        at: snippet(e),
                        detail: format!("initial {ti} but update {tu}"),
                    }),
                    Kind::Field(_) => Err(KindError::RepKind {
                        at: snippet(e),
                        detail: "update yields a field".into(),
                    }),
                }
            }
            Expr::If {
                guard,
                then_branch,
                else_branch,
            } => {
                let kg = self.child(0, guard, scope, path, out)?;
                match &kg {
                    Kind::Local(LocalType::Bool) | Kind::Local(LocalType::Any) => {}
                    other => {
                        return Err(KindError::GuardNotBoolean {
                            at: snippet(e),
                            found: other.clone(),
                        })
                    }
                }
                let kt = self.child(1, then_branch, scope, path, out)?;
                let ke = self.child(2, else_branch, scope, path, out)?;
                let joined = match (&kt, &ke) {
                    (Kind::Local(a), Kind::Local(b)) => join(a, b).map(Kind::Local),
                    (Kind::Field(a), Kind::Field(b)) => join(a, b).map(Kind::Field),
                    _ => None,
                };
                joined.ok_or(KindError::BranchMismatch {
                    at: snippet(e),
                    then_kind: kt,
                    else_kind: ke,
                })
            }
            Expr::Call { name, args, fn_args } => {
                let mut kinds = Vec::with_capacity(args.len());
                for (i, a) in args.iter().enumerate() {
                    kinds.push(self.child(i, a, scope, path, out)?);
                }
                if let Some(decl) = self.program.function(name) {
                    if decl.is_extended() || !fn_args.is_empty() {
                        return Err(KindError::Unexpanded(name.clone()));
                    }
                    if decl.params.len() != args.len() {
                        return Err(KindError::Arity {
                            name: name.clone(),
                            expected: decl.params.len(),
                            found: args.len(),
                        });
                    }
                    return self.user_call(name, kinds);
                }
                builtin_kind(name, &kinds, fn_args).map_err(|detail| match detail {
                    BuiltinKindError::Arity(expected) => KindError::Arity {
                        name: name.clone(),
                        expected,
                        found: args.len(),
                    },
                    BuiltinKindError::Other(detail) => KindError::Mismatch { at: snippet(e), detail },
                })
            }
        }
    }

    fn user_call(&mut self, name: &str, kinds: Vec<Kind>) -> Result<Kind, KindError> {
        let key = (name.to_string(), kinds);
        if let Some(k) = self.memo.get(&key) {
            return Ok(k.clone());
        }
        if self.active.contains(&key) {
            // Recursive instantiation: assume an opaque local result.
            return Ok(Kind::Local(LocalType::Any));
        }
        let decl = self.program.function(name).expect("checked by caller");
        self.active.push(key.clone());
        let mut scope: Scope = decl.params.iter().cloned().zip(key.1.iter().cloned()).collect();
        let mut body_map = BTreeMap::new();
        let r = self.check(&decl.body, &mut scope, &mut Vec::new(), &mut body_map);
        self.active.pop();
        let k = r?;
        let label = format!(
            "{}({})",
            name,
            key.1.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(", ")
        );
        self.functions.insert(label, body_map);
        self.memo.insert(key, k.clone());
        Ok(k)
    }
}

enum BuiltinKindError {
    Arity(usize),
    Other(String),
}

fn need(kinds: &[Kind], n: usize) -> Result<(), BuiltinKindError> {
    if kinds.len() == n {
        Ok(())
    } else {
        Err(BuiltinKindError::Arity(n))
    }
}

fn expect_type(t: &LocalType, want: &LocalType, what: &str) -> Result<LocalType, BuiltinKindError> {
    join(t, want).ok_or_else(|| BuiltinKindError::Other(format!("{what} expects {want}, found {t}")))
}

fn field_arg<'a>(k: &'a Kind, name: &str) -> Result<&'a LocalType, BuiltinKindError> {
    match k {
        Kind::Field(t) => Ok(t),
        Kind::Local(t) => Err(BuiltinKindError::Other(format!(
            "{name} expects a field, found Local {t}"
        ))),
    }
}

fn local_arg<'a>(k: &'a Kind, name: &str) -> Result<&'a LocalType, BuiltinKindError> {
    match k {
        Kind::Local(t) => Ok(t),
        Kind::Field(t) => Err(BuiltinKindError::Other(format!(
            "{name} expects a local value, found Field {t}"
        ))),
    }
}

/// Kind of a builtin (or sensor) call; unknown names are opaque local values.
fn builtin_kind(name: &str, kinds: &[Kind], fn_args: &[String]) -> Result<Kind, BuiltinKindError> {
    use LocalType::*;
    let any_field = kinds.iter().any(Kind::is_field);
    let lift = |t: LocalType| if any_field { Kind::Field(t) } else { Kind::Local(t) };
    let el = |i: usize| kinds[i].element().clone();
    match name {
        "+" | "*" | "/" | "%" | "pow" | "atan2" => {
            need(kinds, 2)?;
            expect_type(&el(0), &Num, name)?;
            expect_type(&el(1), &Num, name)?;
            Ok(lift(Num))
        }
        "-" => {
            if kinds.len() != 1 && kinds.len() != 2 {
                return Err(BuiltinKindError::Arity(2));
            }
            for k in kinds {
                expect_type(k.element(), &Num, name)?;
            }
            Ok(lift(Num))
        }
        "abs" | "sqrt" | "floor" | "sin" | "cos" | "exp" | "log" => {
            need(kinds, 1)?;
            expect_type(&el(0), &Num, name)?;
            Ok(lift(Num))
        }
        "<" | "<=" | ">" | ">=" | "=" | "!=" => {
            need(kinds, 2)?;
            join(&el(0), &el(1)).ok_or_else(|| {
                BuiltinKindError::Other(format!("cannot compare {} with {}", el(0), el(1)))
            })?;
            Ok(lift(Bool))
        }
        "&&" | "||" => {
            need(kinds, 2)?;
            expect_type(&el(0), &Bool, name)?;
            expect_type(&el(1), &Bool, name)?;
            Ok(lift(Bool))
        }
        "not" => {
            need(kinds, 1)?;
            expect_type(&el(0), &Bool, name)?;
            Ok(lift(Bool))
        }
        "min" | "max" => {
            need(kinds, 2)?;
            let t = join(&el(0), &el(1))
                .ok_or_else(|| BuiltinKindError::Other(format!("{name} of {} and {}", el(0), el(1))))?;
            Ok(lift(t))
        }
        "mux" => {
            need(kinds, 3)?;
            expect_type(&el(0), &Bool, "mux guard")?;
            let t = join(&el(1), &el(2)).ok_or_else(|| {
                BuiltinKindError::Other(format!("mux branches {} and {} differ", el(1), el(2)))
            })?;
            Ok(lift(t))
        }
        "pair" | "triple" | "tuple" => {
            let n = match name {
                "pair" => Some(2),
                "triple" => Some(3),
                _ => None,
            };
            if let Some(n) = n {
                need(kinds, n)?;
            }
            Ok(lift(Tuple(kinds.iter().map(|k| k.element().clone()).collect())))
        }
        "1st" | "2nd" | "3rd" => {
            need(kinds, 1)?;
            let idx = match name {
                "1st" => 0,
                "2nd" => 1,
                _ => 2,
            };
            let t = match el(0) {
                Tuple(items) => items.get(idx).cloned().ok_or_else(|| {
                    BuiltinKindError::Other(format!("{name} of a {}-tuple", items.len()))
                })?,
                Any => Any,
                other => return Err(BuiltinKindError::Other(format!("{name} of {other}"))),
            };
            Ok(lift(t))
        }
        "minHood" | "maxHood" | "minHood+" | "maxHood+" | "pickHood" => {
            need(kinds, 1)?;
            Ok(Kind::Local(field_arg(&kinds[0], name)?.clone()))
        }
        "meanHood" | "sumHood" | "sumhood" => {
            need(kinds, 1)?;
            expect_type(field_arg(&kinds[0], name)?, &Num, name)?;
            Ok(Kind::Local(Num))
        }
        "anyHood" | "anyhood" | "allHood" | "allhood" => {
            need(kinds, 1)?;
            expect_type(field_arg(&kinds[0], name)?, &Bool, name)?;
            Ok(Kind::Local(Bool))
        }
        "countHood" | "counthood" => {
            need(kinds, 1)?;
            expect_type(field_arg(&kinds[0], name)?, &Bool, name)?;
            Ok(Kind::Local(Num))
        }
        "minHoodLoc" => {
            need(kinds, 2)?;
            let f = field_arg(&kinds[0], name)?;
            let l = local_arg(&kinds[1], name)?;
            join(f, l)
                .map(Kind::Local)
                .ok_or_else(|| BuiltinKindError::Other(format!("minHoodLoc over {f} with local {l}")))
        }
        "foldHood" => {
            need(kinds, 2)?;
            if fn_args.len() != 1 {
                return Err(BuiltinKindError::Other("foldHood takes one functional argument".into()));
            }
            let f = field_arg(&kinds[0], name)?;
            let l = local_arg(&kinds[1], name)?;
            join(f, l)
                .map(Kind::Local)
                .ok_or_else(|| BuiltinKindError::Other(format!("foldHood over {f} from {l}")))
        }
        "nbrlt" => {
            need(kinds, 1)?;
            local_arg(&kinds[0], name)?;
            Ok(Kind::Field(Bool))
        }
        "uid" | "snsNum" | "sns_interval" => {
            need(kinds, 0)?;
            Ok(Kind::Local(Num))
        }
        "nbrRange" | "nbrLag" => {
            need(kinds, 0)?;
            Ok(Kind::Field(Num))
        }
        _ => Ok(lift(Any)),
    }
}

/// Assigns a kind to every subexpression of `main` and of every function instantiation it reaches.
pub fn kind_check(p: &Program) -> Result<KindReport, KindError> {
    for f in p.functions() {
        if f.is_extended() {
            return Err(KindError::Unexpanded(f.name.clone()));
        }
    }
    let mut checker = Checker {
        program: p,
        memo: HashMap::new(),
        active: Vec::new(),
        functions: BTreeMap::new(),
    };
    let mut main = BTreeMap::new();
    checker.check(p.main(), &mut Vec::new(), &mut Vec::new(), &mut main)?;
    Ok(KindReport {
        main,
        functions: checker.functions,
    })
}
