//! Builtin functions and the registry used to extend them.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::sync::Arc;

use super::{EvalError, SensorSnapshot, ValueTree};
use crate::value::{DeviceId, LocalValue, NeighbouringField, Value, ValueError};

/// Applies a named function (builtin or user-defined) to plain values.
pub trait Applier {
    fn apply(&self, f: &str, args: &[Value], ctx: &BuiltinCtx<'_>) -> Result<Value, EvalError>;
}

/// Everything a builtin can see at its call site.
pub struct BuiltinCtx<'a> {
    pub self_id: DeviceId,
    /// Neighbour trees aligned to the call node, possibly including this device's previous tree.
    pub env: &'a [(DeviceId, &'a ValueTree)],
    pub sensors: &'a SensorSnapshot,
    pub fn_args: &'a [String],
    pub(crate) applier: &'a dyn Applier,
}

impl BuiltinCtx<'_> {
    /// Calls `f` with `args` in this context, as `foldHood` does with its functional argument.
    pub fn apply(&self, f: &str, args: &[Value]) -> Result<Value, EvalError> {
        self.applier.apply(f, args, self)
    }

    /// Devices in the aligned environment plus this device.
    pub fn domain(&self) -> Vec<DeviceId> {
        let mut d: Vec<DeviceId> = self.env.iter().map(|(d, _)| *d).collect();
        if !d.contains(&self.self_id) {
            d.push(self.self_id);
        }
        d.sort_unstable();
        d
    }
}

pub type BuiltinFn = Arc<dyn Fn(&[Value], &BuiltinCtx<'_>) -> Result<Value, EvalError> + Send + Sync>;

/// Standard builtins plus any registered extensions, which take precedence.
#[derive(Clone, Default)]
pub struct BuiltinRegistry {
    custom: HashMap<String, BuiltinFn>,
}

impl std::fmt::Debug for BuiltinRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut names: Vec<&String> = self.custom.keys().collect();
        names.sort();
        f.debug_struct("BuiltinRegistry").field("custom", &names).finish()
    }
}

impl BuiltinRegistry {
    pub fn standard() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: &str, f: BuiltinFn) {
        self.custom.insert(name.to_string(), f);
    }

    /// Registers a function of local values, lifted pointwise over fields.
    pub fn register_pointwise(
        &mut self,
        name: &str,
        f: impl Fn(&[LocalValue]) -> Result<LocalValue, EvalError> + Send + Sync + 'static,
    ) {
        let owned = name.to_string();
        self.register(
            name,
            Arc::new(move |args: &[Value], _ctx: &BuiltinCtx<'_>| pointwise(&owned, args, &f)),
        );
    }

    pub fn is_builtin(&self, name: &str) -> bool {
        self.custom.contains_key(name) || STANDARD.contains(&name)
    }

    pub fn call(&self, name: &str, args: &[Value], ctx: &BuiltinCtx<'_>) -> Result<Value, EvalError> {
        if let Some(f) = self.custom.get(name) {
            return f(args, ctx);
        }
        if let Some(r) = standard(name, args, ctx) {
            return r;
        }
        if args.is_empty() {
            if let Some(v) = ctx.sensors.extras.get(name) {
                return Ok(Value::Local(v.clone()));
            }
        }
        Err(EvalError::MissingBuiltin(name.to_string()))
    }
}

/// Names handled by [`BuiltinRegistry::standard`].
pub const STANDARD: &[&str] = &[
    "+", "-", "*", "/", "%", "pow", "atan2", "abs", "sqrt", "floor", "sin", "cos", "exp", "log", "<", "<=", ">",
    ">=", "=", "!=", "&&", "||", "not", "min", "max", "mux", "pair", "triple", "tuple", "1st", "2nd", "3rd",
    "uid", "snsNum", "sns_interval", "nbrRange", "nbrLag", "pickHood", "foldHood", "meanHood", "minHood",
    "maxHood", "minHood+", "maxHood+", "minHoodLoc", "sumHood", "sumhood", "anyHood", "anyhood", "allHood",
    "allhood", "countHood", "counthood", "nbrlt",
];

fn stuck(msg: impl Into<String>) -> EvalError {
    EvalError::Stuck(msg.into())
}

fn value_err(e: ValueError) -> EvalError {
    stuck(e.to_string())
}

fn arity(name: &str, expected: &str, found: usize) -> EvalError {
    EvalError::Arity {
        name: name.to_string(),
        expected: expected.to_string(),
        found,
    }
}

fn need(name: &str, args: &[Value], n: usize) -> Result<(), EvalError> {
    if args.len() != n {
        return Err(arity(name, &n.to_string(), args.len()));
    }
    Ok(())
}

fn num(name: &str, v: &LocalValue) -> Result<f64, EvalError> {
    v.as_num()
        .ok_or_else(|| stuck(format!("`{name}` expects a number, got {} {v}", v.kind_name())))
}

fn boolean(name: &str, v: &LocalValue) -> Result<bool, EvalError> {
    v.as_bool()
        .ok_or_else(|| stuck(format!("`{name}` expects a boolean, got {} {v}", v.kind_name())))
}

fn field_arg<'v>(name: &str, v: &'v Value) -> Result<&'v NeighbouringField, EvalError> {
    v.as_field()
        .ok_or_else(|| stuck(format!("`{name}` expects a field, got local {v}")))
}

fn local_arg<'v>(name: &str, v: &'v Value) -> Result<&'v LocalValue, EvalError> {
    v.as_local()
        .ok_or_else(|| stuck(format!("`{name}` expects a local value, got field {v}")))
}

/// Applies `f` to local arguments, or pointwise over the intersection of the field arguments' domains.
pub fn pointwise(
    name: &str,
    args: &[Value],
    f: &dyn Fn(&[LocalValue]) -> Result<LocalValue, EvalError>,
) -> Result<Value, EvalError> {
    let fields: Vec<&NeighbouringField> = args.iter().filter_map(Value::as_field).collect();
    if fields.is_empty() {
        let locals: Vec<LocalValue> = args.iter().filter_map(|a| a.as_local().cloned()).collect();
        return f(&locals).map(Value::Local);
    }
    let domain: Vec<DeviceId> = fields[0]
        .domain()
        .filter(|d| fields[1..].iter().all(|g| g.contains(*d)))
        .collect();
    if domain.is_empty() && fields.len() > 1 && fields.iter().all(|g| !g.is_empty()) {
        return Err(EvalError::DomainMismatch(name.to_string()));
    }
    let mut out = Vec::with_capacity(domain.len());
    let mut locals = Vec::with_capacity(args.len());
    for d in domain {
        locals.clear();
        for a in args {
            locals.push(match a {
                Value::Local(v) => v.clone(),
                Value::Field(g) => g.get(d).cloned().expect("domain is an intersection"),
            });
        }
        out.push((d, f(&locals)?));
    }
    Ok(Value::Field(NeighbouringField::from_sorted(out)))
}

fn arith(name: &str, a: f64, b: f64) -> f64 {
    match name {
        "+" => a + b,
        "-" => a - b,
        "*" => a * b,
        "/" => a / b,
        "%" => a % b,
        "pow" => a.powf(b),
        "atan2" => a.atan2(b),
        _ => unreachable!(),
    }
}

fn unary(name: &str, a: f64) -> f64 {
    match name {
        "-" => -a,
        "abs" => a.abs(),
        "sqrt" => a.sqrt(),
        "floor" => a.floor(),
        "sin" => a.sin(),
        "cos" => a.cos(),
        "exp" => a.exp(),
        "log" => a.ln(),
        _ => unreachable!(),
    }
}

fn compare(name: &str, a: &LocalValue, b: &LocalValue) -> Result<bool, EvalError> {
    match name {
        "=" => a.try_eq(b).map_err(value_err),
        "!=" => a.try_eq(b).map(|e| !e).map_err(value_err),
        _ => {
            let o = a.try_cmp(b).map_err(value_err)?;
            Ok(match name {
                "<" => o == Ordering::Less,
                "<=" => o != Ordering::Greater,
                ">" => o == Ordering::Greater,
                ">=" => o != Ordering::Less,
                _ => unreachable!(),
            })
        }
    }
}

fn extreme<'v>(
    items: impl Iterator<Item = &'v LocalValue>,
    want: Ordering,
) -> Result<Option<&'v LocalValue>, EvalError> {
    let mut best: Option<&LocalValue> = None;
    for v in items {
        best = match best {
            None => Some(v),
            Some(b) => {
                if v.try_cmp(b).map_err(value_err)? == want {
                    Some(v)
                } else {
                    Some(b)
                }
            }
        };
    }
    Ok(best)
}

fn nth_name(name: &str) -> usize {
    match name {
        "1st" => 0,
        "2nd" => 1,
        _ => 2,
    }
}

fn standard(name: &str, args: &[Value], ctx: &BuiltinCtx<'_>) -> Option<Result<Value, EvalError>> {
    let me = ctx.self_id;
    let r = match name {
        "+" | "*" | "/" | "%" | "pow" | "atan2" => need(name, args, 2).and_then(|_| {
            pointwise(name, args, &|v| Ok(LocalValue::Num(arith(name, num(name, &v[0])?, num(name, &v[1])?))))
        }),
        "-" => match args.len() {
            1 => pointwise(name, args, &|v| Ok(LocalValue::Num(-num(name, &v[0])?))),
            2 => pointwise(name, args, &|v| Ok(LocalValue::Num(num(name, &v[0])? - num(name, &v[1])?))),
            n => Err(arity(name, "1 or 2", n)),
        },
        "abs" | "sqrt" | "floor" | "sin" | "cos" | "exp" | "log" => need(name, args, 1)
            .and_then(|_| pointwise(name, args, &|v| Ok(LocalValue::Num(unary(name, num(name, &v[0])?))))),
        "<" | "<=" | ">" | ">=" | "=" | "!=" => need(name, args, 2)
            .and_then(|_| pointwise(name, args, &|v| compare(name, &v[0], &v[1]).map(LocalValue::Bool))),
        "&&" | "||" => need(name, args, 2).and_then(|_| {
            pointwise(name, args, &|v| {
                let (a, b) = (boolean(name, &v[0])?, boolean(name, &v[1])?);
                Ok(LocalValue::Bool(if name == "&&" { a && b } else { a || b }))
            })
        }),
        "not" => need(name, args, 1)
            .and_then(|_| pointwise(name, args, &|v| Ok(LocalValue::Bool(!boolean(name, &v[0])?)))),
        "min" | "max" => need(name, args, 2).and_then(|_| {
            pointwise(name, args, &|v| {
                let o = v[0].try_cmp(&v[1]).map_err(value_err)?;
                let first = if name == "min" { o != Ordering::Greater } else { o != Ordering::Less };
                Ok(if first { v[0].clone() } else { v[1].clone() })
            })
        }),
        "mux" => need(name, args, 3).and_then(|_| {
            pointwise(name, args, &|v| {
                Ok(if boolean(name, &v[0])? { v[1].clone() } else { v[2].clone() })
            })
        }),
        "pair" | "triple" | "tuple" => {
            let n = match name {
                "pair" => Some(2),
                "triple" => Some(3),
                _ => None,
            };
            match n {
                Some(n) if args.len() != n => Err(arity(name, &n.to_string(), args.len())),
                _ => pointwise(name, args, &|v| Ok(LocalValue::tuple(v.to_vec()))),
            }
        }
        "1st" | "2nd" | "3rd" => need(name, args, 1).and_then(|_| {
            pointwise(name, args, &|v| {
                v[0].project(nth_name(name))
                    .ok_or_else(|| stuck(format!("`{name}` of {} {}", v[0].kind_name(), v[0])))
            })
        }),
        "uid" => need(name, args, 0).map(|_| Value::Local(LocalValue::num(f64::from(me)))),
        "snsNum" => need(name, args, 0).map(|_| Value::Local(LocalValue::num(ctx.sensors.sns_num))),
        "sns_interval" => need(name, args, 0).map(|_| Value::Local(LocalValue::num(ctx.sensors.interval))),
        "nbrRange" | "nbrLag" => need(name, args, 0).map(|_| {
            let table = if name == "nbrRange" {
                &ctx.sensors.nbr_range
            } else {
                &ctx.sensors.nbr_lag
            };
            let entries = ctx
                .domain()
                .into_iter()
                .filter_map(|d| {
                    if d == me {
                        Some((d, LocalValue::num(0.0)))
                    } else {
                        table.get(&d).map(|x| (d, LocalValue::num(*x)))
                    }
                })
                .collect();
            Value::Field(NeighbouringField::from_sorted(entries))
        }),
        "pickHood" => need(name, args, 1).and_then(|_| {
            let f = field_arg(name, &args[0])?;
            f.get(me)
                .cloned()
                .map(Value::Local)
                .ok_or_else(|| stuck("`pickHood` of a field without an entry for this device"))
        }),
        "minHood" | "maxHood" | "minHood+" | "maxHood+" => need(name, args, 1).and_then(|_| {
            let f = field_arg(name, &args[0])?;
            let include_self = name.ends_with('+');
            let want = if name.starts_with("min") { Ordering::Less } else { Ordering::Greater };
            let items = f.iter().filter(|(d, _)| include_self || *d != me).map(|(_, v)| v);
            let best = extreme(items, want)?;
            Ok(Value::Local(best.cloned().unwrap_or_else(|| {
                LocalValue::num(if want == Ordering::Less { f64::INFINITY } else { f64::NEG_INFINITY })
            })))
        }),
        "minHoodLoc" => need(name, args, 2).and_then(|_| {
            let f = field_arg(name, &args[0])?;
            let l = local_arg(name, &args[1])?;
            let items = f.without(me).map(|(_, v)| v).chain(std::iter::once(l));
            Ok(Value::Local(extreme(items, Ordering::Less)?.expect("non-empty").clone()))
        }),
        "meanHood" => need(name, args, 1).and_then(|_| {
            let f = field_arg(name, &args[0])?;
            if f.is_empty() {
                return Err(EvalError::EmptyField(name.to_string()));
            }
            let mut total = 0.0;
            for (_, v) in f.iter() {
                total += num(name, v)?;
            }
            Ok(Value::Local(LocalValue::num(total / f.len() as f64)))
        }),
        "sumHood" | "sumhood" => need(name, args, 1).and_then(|_| {
            let f = field_arg(name, &args[0])?;
            let mut total = 0.0;
            for (_, v) in f.without(me) {
                total += num(name, v)?;
            }
            Ok(Value::Local(LocalValue::num(total)))
        }),
        "anyHood" | "anyhood" | "allHood" | "allhood" => need(name, args, 1).and_then(|_| {
            let f = field_arg(name, &args[0])?;
            let any = name.starts_with("any");
            let mut acc = !any;
            for (_, v) in f.without(me) {
                let b = boolean(name, v)?;
                acc = if any { acc || b } else { acc && b };
            }
            Ok(Value::Local(LocalValue::Bool(acc)))
        }),
        "countHood" | "counthood" => need(name, args, 1).and_then(|_| {
            let f = field_arg(name, &args[0])?;
            let mut n = 0usize;
            for (_, v) in f.without(me) {
                if boolean(name, v)? {
                    n += 1;
                }
            }
            Ok(Value::Local(LocalValue::num(n as f64)))
        }),
        "foldHood" => need(name, args, 2).and_then(|_| {
            if ctx.fn_args.len() != 1 {
                return Err(arity("foldHood functional arguments", "1", ctx.fn_args.len()));
            }
            let f = field_arg(name, &args[0])?;
            let mut acc = Value::Local(local_arg(name, &args[1])?.clone());
            let inner = BuiltinCtx {
                self_id: me,
                env: ctx.env,
                sensors: ctx.sensors,
                fn_args: &[],
                applier: ctx.applier,
            };
            for (_, v) in f.without(me) {
                acc = inner.apply(&ctx.fn_args[0], &[acc, Value::Local(v.clone())])?;
                if acc.is_field() {
                    return Err(stuck("`foldHood` accumulator became a field"));
                }
            }
            Ok(acc)
        }),
        "nbrlt" => need(name, args, 1).and_then(|_| {
            let mine = local_arg(name, &args[0])?;
            let mut entries = Vec::with_capacity(ctx.env.len() + 1);
            for d in ctx.domain() {
                if d == me {
                    entries.push((d, LocalValue::Bool(false)));
                    continue;
                }
                let tree = ctx.env.iter().find(|(e, _)| *e == d).map(|(_, t)| *t);
                let theirs = tree.and_then(|t| t.children.first()).map(|c| &c.root);
                if let Some(Value::Local(v)) = theirs {
                    let lt = v.try_cmp(mine).map_err(value_err)? == Ordering::Less;
                    entries.push((d, LocalValue::Bool(lt)));
                }
            }
            Ok(Value::Field(NeighbouringField::from_sorted(entries)))
        }),
        _ => return None,
    };
    Some(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct NoUser;

    impl Applier for NoUser {
        fn apply(&self, f: &str, args: &[Value], ctx: &BuiltinCtx<'_>) -> Result<Value, EvalError> {
            BuiltinRegistry::standard().call(f, args, ctx)
        }
    }

    fn with_ctx<R>(self_id: DeviceId, fn_args: &[String], body: impl FnOnce(&BuiltinCtx<'_>) -> R) -> R {
        let sensors = SensorSnapshot::default();
        let ctx = BuiltinCtx {
            self_id,
            env: &[],
            sensors: &sensors,
            fn_args,
            applier: &NoUser,
        };
        body(&ctx)
    }

    fn field(items: &[(DeviceId, LocalValue)]) -> Value {
        Value::Field(NeighbouringField::from_entries(items.iter().cloned()))
    }

    fn n(x: f64) -> LocalValue {
        LocalValue::num(x)
    }

    fn call(name: &str, args: &[Value], self_id: DeviceId, fn_args: &[String]) -> Result<Value, EvalError> {
        with_ctx(self_id, fn_args, |ctx| BuiltinRegistry::standard().call(name, args, ctx))
    }

    #[test]
    fn min_hood_loc_takes_the_lexicographic_minimum() {
        let phi = field(&[(2, LocalValue::pair(n(3.0), n(9.0)))]);
        let l = Value::Local(LocalValue::pair(n(1.0), n(7.0)));
        let r = call("minHoodLoc", &[phi, l], 1, &[]).unwrap();
        assert_eq!(r, Value::Local(LocalValue::pair(n(1.0), n(7.0))));
    }

    #[test]
    fn fold_hood_sums_neighbours() {
        // Oracle: plain sum over the entries, self excluded.
        let entries = [(1, n(1.0)), (2, n(2.0))];
        let expected: f64 = entries.iter().map(|(_, v)| v.as_num().unwrap()).sum();
        let r = call("foldHood", &[field(&entries), Value::Local(n(0.0))], 3, &["+".to_string()]).unwrap();
        assert_eq!(r, Value::Local(n(expected)));
    }

    #[test]
    fn min_hood_of_empty_field_is_infinite() {
        assert_eq!(call("minHood", &[field(&[])], 1, &[]).unwrap(), Value::Local(n(f64::INFINITY)));
        assert_eq!(call("maxHood", &[field(&[])], 1, &[]).unwrap(), Value::Local(n(f64::NEG_INFINITY)));
    }

    #[test]
    fn hood_self_handling() {
        let phi = field(&[(1, n(5.0)), (2, n(3.0)), (3, n(1.0))]);
        assert_eq!(call("minHood", &[phi.clone()], 3, &[]).unwrap(), Value::Local(n(3.0)));
        assert_eq!(call("minHood+", &[phi.clone()], 3, &[]).unwrap(), Value::Local(n(1.0)));
        assert_eq!(call("maxHood", &[phi.clone()], 1, &[]).unwrap(), Value::Local(n(3.0)));
        assert_eq!(call("pickHood", &[phi.clone()], 2, &[]).unwrap(), Value::Local(n(3.0)));
        assert_eq!(call("meanHood", &[phi.clone()], 2, &[]).unwrap(), Value::Local(n(3.0)));
        assert_eq!(call("sumhood", &[phi], 2, &[]).unwrap(), Value::Local(n(6.0)));
    }

    #[test]
    fn mean_hood_of_empty_field_fails() {
        assert_eq!(
            call("meanHood", &[field(&[])], 1, &[]).unwrap_err(),
            EvalError::EmptyField("meanHood".into())
        );
    }

    #[test]
    fn pointwise_promotion_intersects_domains() {
        let a = field(&[(1, n(1.0)), (2, n(2.0)), (3, n(3.0))]);
        let b = field(&[(2, n(20.0)), (3, n(30.0)), (4, n(40.0))]);
        let r = call("+", &[a.clone(), b], 1, &[]).unwrap();
        assert_eq!(r, field(&[(2, n(22.0)), (3, n(33.0))]));
        let r = call("+", &[Value::Local(n(1.0)), a], 1, &[]).unwrap();
        assert_eq!(r, field(&[(1, n(2.0)), (2, n(3.0)), (3, n(4.0))]));
        let disjoint = call("+", &[field(&[(1, n(1.0))]), field(&[(2, n(1.0))])], 1, &[]);
        assert_eq!(disjoint.unwrap_err(), EvalError::DomainMismatch("+".into()));
    }

    #[test]
    fn nan_comparison_is_stuck() {
        let r = call("<", &[Value::Local(n(f64::NAN)), Value::Local(n(1.0))], 1, &[]);
        assert!(matches!(r, Err(EvalError::Stuck(_))));
    }

    #[test]
    fn division_by_zero_is_ieee() {
        let r = call("/", &[Value::Local(n(1.0)), Value::Local(n(0.0))], 1, &[]).unwrap();
        assert_eq!(r, Value::Local(n(f64::INFINITY)));
    }

    #[test]
    fn arity_is_checked() {
        assert!(matches!(
            call("mux", &[Value::Local(LocalValue::Bool(true))], 1, &[]),
            Err(EvalError::Arity { .. })
        ));
    }

    #[test]
    fn unknown_names_fall_back_to_sensor_extras() {
        let sensors = SensorSnapshot::default().with_extra("sns_temp", 21.5);
        let ctx = BuiltinCtx {
            self_id: 1,
            env: &[],
            sensors: &sensors,
            fn_args: &[],
            applier: &NoUser,
        };
        let reg = BuiltinRegistry::standard();
        assert_eq!(reg.call("sns_temp", &[], &ctx).unwrap(), Value::Local(n(21.5)));
        assert_eq!(
            reg.call("sns_other", &[], &ctx).unwrap_err(),
            EvalError::MissingBuiltin("sns_other".into())
        );
    }

    #[test]
    fn registered_builtins_are_lifted() {
        let mut reg = BuiltinRegistry::standard();
        reg.register_pointwise("double", |v| Ok(LocalValue::num(v[0].as_num().unwrap() * 2.0)));
        let phi = field(&[(1, n(1.0)), (2, n(4.0))]);
        let r = with_ctx(1, &[], |ctx| reg.call("double", &[phi], ctx)).unwrap();
        assert_eq!(r, field(&[(1, n(2.0)), (2, n(8.0))]));
    }
}
