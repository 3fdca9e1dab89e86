//! Pretty-printer emitting the surface syntax accepted by the parser.

use super::ast::{Expr, FunctionDecl, Program};
use crate::value::{format_number, LocalValue};

fn infix_prec(name: &str) -> Option<u8> {
    Some(match name {
        "||" => 1,
        "&&" => 2,
        "<" | "<=" | "=" | ">=" | ">" | "!=" => 3,
        "+" | "-" => 4,
        "*" | "/" | "%" => 5,
        _ => return None,
    })
}

/// Renders an expression on one line.
pub fn pretty_expr(e: &Expr) -> String {
    let mut out = String::new();
    write_expr(e, 0, &mut out);
    out
}

fn write_literal(v: &LocalValue, out: &mut String) {
    match v {
        LocalValue::Num(x) => out.push_str(&format_number(*x)),
        LocalValue::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        LocalValue::Tuple(items) => {
            out.push_str(match items.len() {
                2 => "pair(",
                3 => "triple(",
                _ => "tuple(",
            });
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_literal(item, out);
            }
            out.push(')');
        }
        LocalValue::Cons(name, items) => {
            out.push_str(name);
            out.push('(');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_literal(item, out);
            }
            out.push(')');
        }
    }
}

fn write_args(args: &[Expr], fn_args: &[String], out: &mut String) {
    out.push('(');
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write_expr(a, 0, out);
    }
    out.push(')');
    if !fn_args.is_empty() {
        out.push('(');
        out.push_str(&fn_args.join(", "));
        out.push(')');
    }
}

/// Whether the printed form of `e` is a self-delimiting primary.
fn is_atomic(e: &Expr) -> bool {
    match e {
        Expr::Var(_) | Expr::If { .. } | Expr::Nbr(_) | Expr::Rep { .. } | Expr::FieldLit(_) => true,
        Expr::Lit(LocalValue::Num(x)) => !(x.is_sign_negative() && !x.is_nan()),
        Expr::Lit(_) => true,
        Expr::Let { .. } => false,
        Expr::Call { name, args, fn_args } => {
            let infix = infix_prec(name).is_some() && args.len() == 2 && fn_args.is_empty();
            let unary = name == "-" && args.len() == 1 && fn_args.is_empty();
            !infix && !unary
        }
    }
}

fn write_expr(e: &Expr, ctx: u8, out: &mut String) {
    match e {
        Expr::Var(v) => out.push_str(v),
        Expr::Lit(v) => write_literal(v, out),
        Expr::FieldLit(f) => out.push_str(&f.to_string()),
        Expr::Let { name, bound, body } => {
            let wrap = ctx > 0;
            if wrap {
                out.push('(');
            }
            out.push_str("let ");
            out.push_str(name);
            out.push_str(" = ");
            write_expr(bound, 0, out);
            out.push_str(" in ");
            write_expr(body, 0, out);
            if wrap {
                out.push(')');
            }
        }
        Expr::Call { name, args, fn_args } => {
            if let (Some(p), 2, true) = (infix_prec(name), args.len(), fn_args.is_empty()) {
                let wrap = p < ctx;
                if wrap {
                    out.push('(');
                }
                // Comparisons do not chain, so both sides need a tighter context.
                let left_ctx = if p == 3 { p + 1 } else { p };
                write_expr(&args[0], left_ctx, out);
                out.push(' ');
                out.push_str(name);
                out.push(' ');
                write_expr(&args[1], p + 1, out);
                if wrap {
                    out.push(')');
                }
            } else if name == "-" && args.len() == 1 && fn_args.is_empty() {
                let operand = &args[0];
                let plain = is_atomic(operand) && !matches!(operand, Expr::Lit(LocalValue::Num(_)));
                out.push('-');
                if plain {
                    write_expr(operand, 6, out);
                } else {
                    out.push('(');
                    write_expr(operand, 0, out);
                    out.push(')');
                }
            } else {
                out.push_str(name);
                write_args(args, fn_args, out);
            }
        }
        Expr::If {
            guard,
            then_branch,
            else_branch,
        } => {
            out.push_str("if (");
            write_expr(guard, 0, out);
            out.push_str(") { ");
            write_expr(then_branch, 0, out);
            out.push_str(" } { ");
            write_expr(else_branch, 0, out);
            out.push_str(" }");
        }
        Expr::Nbr(body) => {
            out.push_str("nbr{");
            write_expr(body, 0, out);
            out.push('}');
        }
        Expr::Rep { init, var, update } => {
            out.push_str("rep(");
            write_expr(init, 0, out);
            out.push_str("){(");
            out.push_str(var);
            out.push_str(") => ");
            write_expr(update, 0, out);
            out.push('}');
        }
    }
}

fn write_function(f: &FunctionDecl, out: &mut String) {
    out.push_str("def ");
    out.push_str(&f.name);
    out.push('(');
    out.push_str(&f.params.join(", "));
    out.push(')');
    if !f.fn_params.is_empty() {
        out.push('(');
        out.push_str(&f.fn_params.join(", "));
        out.push(')');
    }
    out.push_str(" {\n  ");
    write_expr(&f.body, 0, out);
    out.push_str("\n}\n\n");
}

/// Renders declarations and main, one declaration per block.
pub fn pretty_program(p: &Program) -> String {
    let mut out = String::new();
    for f in p.functions() {
        write_function(f, &mut out);
    }
    write_expr(p.main(), 0, &mut out);
    out.push('\n');
    out
}

/// Renders a list of declarations without a main expression.
pub fn pretty_functions(functions: &[FunctionDecl]) -> String {
    let mut out = String::new();
    for f in functions {
        write_function(f, &mut out);
    }
    out
}
