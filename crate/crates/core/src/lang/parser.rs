//! Lexer and recursive-descent parser for the surface syntax.
//!
//! Precedence, loosest first: `||`, `&&`, comparisons, `+ -`, `* /`, unary minus.
//! Binary operators are sugar for calls of the builtin with the same name, and
//! any operator may also be written in prefix form, as in `+(x, 1)`.

use super::ast::{Expr, FunctionDecl, Program};
use super::LangError;
use crate::value::LocalValue;

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Op(&'static str),
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Arrow,
    Eof,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
    /// Whether the token starts immediately after the previous one.
    glued: bool,
}

const OPS: [&str; 15] = [
    "&&", "||", "<=", ">=", "==", "!=", "=", "<", ">", "+", "-", "*", "/", "!", "%",
];

fn lex(src: &str) -> Result<Vec<Token>, LangError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let mut glued = false;
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            glued = false;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            glued = false;
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            glued = false;
            continue;
        }
        let start = (line, col);
        let rest: String = chars[i..chars.len().min(i + 3)].iter().collect();
        let (tok, width) = if let Some(word) = ["1st", "2nd", "3rd"]
            .iter()
            .find(|w| rest.starts_with(**w) && !chars.get(i + 3).is_some_and(|c| is_ident_char(*c)))
        {
            (Tok::Ident(word.to_string()), 3)
        } else if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let mut j = i;
            while j < chars.len() && (chars[j].is_ascii_digit() || chars[j] == '.') {
                j += 1;
            }
            if j < chars.len() && (chars[j] == 'e' || chars[j] == 'E') {
                let mut k = j + 1;
                if k < chars.len() && (chars[k] == '+' || chars[k] == '-') {
                    k += 1;
                }
                if k < chars.len() && chars[k].is_ascii_digit() {
                    while k < chars.len() && chars[k].is_ascii_digit() {
                        k += 1;
                    }
                    j = k;
                }
            }
            let text: String = chars[i..j].iter().collect();
            let value: f64 = text.parse().map_err(|_| LangError::Syntax {
                line,
                column: col,
                message: format!("malformed number `{text}`"),
            })?;
            (Tok::Num(value), j - i)
        } else if c.is_alphabetic() || c == '_' {
            let mut j = i;
            while j < chars.len() && is_ident_char(chars[j]) {
                j += 1;
            }
            let mut word: String = chars[i..j].iter().collect();
            // `minHood+(` and friends: the self-inclusive hood variants.
            if chars.get(j) == Some(&'+')
                && matches!(chars.get(j + 1), Some('(') | Some(')') | Some(','))
                && (word.ends_with("Hood") || word.ends_with("hood"))
            {
                word.push('+');
                j += 1;
            }
            (Tok::Ident(word), j - i)
        } else {
            match c {
                '(' => (Tok::LParen, 1),
                ')' => (Tok::RParen, 1),
                '{' => (Tok::LBrace, 1),
                '}' => (Tok::RBrace, 1),
                ',' => (Tok::Comma, 1),
                '=' if chars.get(i + 1) == Some(&'>') => (Tok::Arrow, 2),
                _ => {
                    let op = OPS.iter().find(|op| {
                        op.chars()
                            .enumerate()
                            .all(|(k, oc)| chars.get(i + k) == Some(&oc))
                    });
                    match op {
                        Some(op) => (Tok::Op(op), op.chars().count()),
                        None => {
                            return Err(LangError::Syntax {
                                line,
                                column: col,
                                message: format!("unexpected character `{c}`"),
                            })
                        }
                    }
                }
            }
        };
        out.push(Token {
            tok,
            line: start.0,
            column: start.1,
            glued,
        });
        i += width;
        col += width;
        glued = true;
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        column: col,
        glued: false,
    });
    Ok(out)
}

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '\''
}

const KEYWORDS: [&str; 10] = [
    "def", "let", "in", "if", "else", "nbr", "rep", "true", "false", "infinity",
];

fn binary_prec(op: &str) -> Option<u8> {
    Some(match op {
        "||" => 1,
        "&&" => 2,
        "<" | "<=" | "=" | "==" | ">=" | ">" | "!=" => 3,
        "+" | "-" => 4,
        "*" | "/" | "%" => 5,
        _ => return None,
    })
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn here(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, LangError> {
        let t = self.here();
        Err(LangError::Syntax {
            line: t.line,
            column: t.column,
            message: message.into(),
        })
    }

    fn misplaced<T>(&self, word: &str) -> Result<T, LangError> {
        let t = self.here();
        Err(LangError::UnknownConstruct {
            line: t.line,
            column: t.column,
            word: word.to_string(),
        })
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), LangError> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            self.error(format!("expected {what}, found {}", describe(self.peek())))
        }
    }

    fn is_word(&self, w: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == w)
    }

    fn name(&mut self, what: &str) -> Result<String, LangError> {
        match self.peek().clone() {
            Tok::Ident(s) if KEYWORDS.contains(&s.as_str()) => self.misplaced(&s),
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            other => self.error(format!("expected {what}, found {}", describe(&other))),
        }
    }

    fn program(&mut self) -> Result<(Vec<FunctionDecl>, Option<Expr>), LangError> {
        let mut functions = Vec::new();
        while self.is_word("def") {
            functions.push(self.def()?);
        }
        if *self.peek() == Tok::Eof {
            return Ok((functions, None));
        }
        let main = self.expr()?;
        if *self.peek() != Tok::Eof {
            if self.is_word("def") {
                return self.misplaced("def");
            }
            return self.error(format!("unexpected {} after main expression", describe(self.peek())));
        }
        Ok((functions, Some(main)))
    }

    fn def(&mut self) -> Result<FunctionDecl, LangError> {
        self.bump();
        let name = self.fn_name()?;
        self.expect(Tok::LParen, "`(`")?;
        let params = self.name_list()?;
        let fn_params = if *self.peek() == Tok::LParen {
            self.bump();
            self.name_list()?
        } else {
            Vec::new()
        };
        self.expect(Tok::LBrace, "`{`")?;
        let body = self.expr()?;
        self.expect(Tok::RBrace, "`}`")?;
        Ok(FunctionDecl {
            name,
            params,
            fn_params,
            body,
        })
    }

    fn fn_name(&mut self) -> Result<String, LangError> {
        self.name("function name")
    }

    /// Comma-separated identifiers up to and including `)`.
    fn name_list(&mut self) -> Result<Vec<String>, LangError> {
        let mut names = Vec::new();
        if *self.peek() == Tok::RParen {
            self.bump();
            return Ok(names);
        }
        loop {
            names.push(self.name("parameter name")?);
            match self.bump() {
                Tok::Comma => continue,
                Tok::RParen => return Ok(names),
                other => {
                    self.pos -= 1;
                    return self.error(format!("expected `,` or `)`, found {}", describe(&other)));
                }
            }
        }
    }

    /// Functional arguments: plain names or operator symbols, up to `)`.
    fn fn_arg_list(&mut self) -> Result<Vec<String>, LangError> {
        let mut names = Vec::new();
        if *self.peek() == Tok::RParen {
            self.bump();
            return Ok(names);
        }
        loop {
            match self.peek().clone() {
                Tok::Ident(s) if KEYWORDS.contains(&s.as_str()) => return self.misplaced(&s),
                Tok::Ident(s) => {
                    self.bump();
                    names.push(s);
                }
                Tok::Op(op) => {
                    self.bump();
                    names.push(canonical_op(op).to_string());
                }
                other => return self.error(format!("expected function name, found {}", describe(&other))),
            }
            match self.bump() {
                Tok::Comma => continue,
                Tok::RParen => return Ok(names),
                other => {
                    self.pos -= 1;
                    return self.error(format!("expected `,` or `)`, found {}", describe(&other)));
                }
            }
        }
    }

    fn expr(&mut self) -> Result<Expr, LangError> {
        self.binary(1)
    }

    fn binary(&mut self, min_prec: u8) -> Result<Expr, LangError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Op(op) => *op,
                _ => break,
            };
            let prec = match binary_prec(op) {
                Some(p) if p >= min_prec => p,
                _ => break,
            };
            self.bump();
            let rhs = self.binary(prec + 1)?;
            lhs = Expr::call(canonical_op(op), vec![lhs, rhs]);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, LangError> {
        match self.peek() {
            Tok::Op("-") => {
                let next_glued = self.toks[self.pos + 1].glued;
                match self.peek_at(1).clone() {
                    Tok::Num(x) if next_glued => {
                        self.bump();
                        self.bump();
                        Ok(Expr::num(-x))
                    }
                    Tok::Ident(w) if w == "infinity" && next_glued => {
                        self.bump();
                        self.bump();
                        Ok(Expr::num(f64::NEG_INFINITY))
                    }
                    Tok::LParen => {
                        self.bump();
                        self.bump();
                        let args = self.arg_list()?;
                        let fn_args = self.maybe_fn_args()?;
                        Ok(Expr::Call {
                            name: "-".to_string(),
                            args,
                            fn_args,
                        })
                    }
                    _ => {
                        self.bump();
                        let operand = self.unary()?;
                        Ok(Expr::call("-", vec![operand]))
                    }
                }
            }
            Tok::Op("!") => {
                self.bump();
                let operand = self.unary()?;
                Ok(Expr::call("not", vec![operand]))
            }
            _ => self.primary(),
        }
    }

    /// Arguments after an already consumed `(`, through the closing `)`.
    fn arg_list(&mut self) -> Result<Vec<Expr>, LangError> {
        let mut args = Vec::new();
        if *self.peek() == Tok::RParen {
            self.bump();
            return Ok(args);
        }
        loop {
            args.push(self.expr()?);
            match self.bump() {
                Tok::Comma => continue,
                Tok::RParen => return Ok(args),
                other => {
                    self.pos -= 1;
                    return self.error(format!("expected `,` or `)`, found {}", describe(&other)));
                }
            }
        }
    }

    fn maybe_fn_args(&mut self) -> Result<Vec<String>, LangError> {
        if *self.peek() == Tok::LParen {
            self.bump();
            self.fn_arg_list()
        } else {
            Ok(Vec::new())
        }
    }

    fn primary(&mut self) -> Result<Expr, LangError> {
        match self.peek().clone() {
            Tok::Num(x) => {
                self.bump();
                Ok(Expr::num(x))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Op(op) if *self.peek_at(1) == Tok::LParen => {
                self.bump();
                self.bump();
                let args = self.arg_list()?;
                let fn_args = self.maybe_fn_args()?;
                Ok(Expr::Call {
                    name: canonical_op(op).to_string(),
                    args,
                    fn_args,
                })
            }
            Tok::Ident(word) => match word.as_str() {
                "true" => {
                    self.bump();
                    Ok(Expr::Lit(LocalValue::Bool(true)))
                }
                "false" => {
                    self.bump();
                    Ok(Expr::Lit(LocalValue::Bool(false)))
                }
                "infinity" => {
                    self.bump();
                    Ok(Expr::num(f64::INFINITY))
                }
                "let" => self.let_expr(),
                "if" => self.if_expr(),
                "nbr" => {
                    self.bump();
                    self.expect(Tok::LBrace, "`{` after nbr")?;
                    let body = self.expr()?;
                    self.expect(Tok::RBrace, "`}`")?;
                    Ok(Expr::nbr(body))
                }
                "rep" => self.rep_expr(),
                "def" | "in" | "else" => self.misplaced(&word),
                _ => {
                    self.bump();
                    if *self.peek() == Tok::LParen {
                        self.bump();
                        let args = self.arg_list()?;
                        let fn_args = self.maybe_fn_args()?;
                        Ok(Expr::Call {
                            name: word,
                            args,
                            fn_args,
                        })
                    } else {
                        Ok(Expr::Var(word))
                    }
                }
            },
            other => self.error(format!("expected expression, found {}", describe(&other))),
        }
    }

    fn let_expr(&mut self) -> Result<Expr, LangError> {
        self.bump();
        let name = self.name("variable name")?;
        match self.peek() {
            Tok::Op("=") => {
                self.bump();
            }
            other => return self.error(format!("expected `=` in let, found {}", describe(other))),
        }
        let bound = self.expr()?;
        if !self.is_word("in") {
            return self.error(format!("expected `in`, found {}", describe(self.peek())));
        }
        self.bump();
        let body = self.expr()?;
        Ok(Expr::let_in(&name, bound, body))
    }

    fn if_expr(&mut self) -> Result<Expr, LangError> {
        self.bump();
        self.expect(Tok::LParen, "`(` after if")?;
        let guard = self.expr()?;
        self.expect(Tok::RParen, "`)`")?;
        self.expect(Tok::LBrace, "`{`")?;
        let then_branch = self.expr()?;
        self.expect(Tok::RBrace, "`}`")?;
        if self.is_word("else") {
            self.bump();
        }
        self.expect(Tok::LBrace, "`{` for the else branch")?;
        let else_branch = self.expr()?;
        self.expect(Tok::RBrace, "`}`")?;
        Ok(Expr::if_then_else(guard, then_branch, else_branch))
    }

    fn rep_expr(&mut self) -> Result<Expr, LangError> {
        self.bump();
        self.expect(Tok::LParen, "`(` after rep")?;
        let init = self.expr()?;
        self.expect(Tok::RParen, "`)`")?;
        self.expect(Tok::LBrace, "`{`")?;
        if *self.peek() != Tok::LParen {
            return self.error("rep requires a lambda of the form `(x) => e`");
        }
        self.bump();
        let var = self.name("rep variable")?;
        self.expect(Tok::RParen, "`)`")?;
        if *self.peek() != Tok::Arrow {
            return self.error("rep requires a lambda of the form `(x) => e`");
        }
        self.bump();
        let update = self.expr()?;
        self.expect(Tok::RBrace, "`}`")?;
        Ok(Expr::rep(init, &var, update))
    }
}

fn canonical_op(op: &str) -> &str {
    if op == "==" {
        "="
    } else {
        op
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Num(x) => format!("number {x}"),
        Tok::Op(op) => format!("`{op}`"),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
        Tok::LBrace => "`{`".into(),
        Tok::RBrace => "`}`".into(),
        Tok::Comma => "`,`".into(),
        Tok::Arrow => "`=>`".into(),
        Tok::Eof => "end of input".into(),
    }
}

/// Parses a whole program: declarations followed by the main expression.
pub fn parse(src: &str) -> Result<Program, LangError> {
    let mut p = Parser { toks: lex(src)?, pos: 0 };
    let (functions, main) = p.program()?;
    let main = main.ok_or(LangError::MissingMain)?;
    Program::new(functions, main)
}

/// Parses declarations only; a trailing main expression is rejected.
pub fn parse_library(src: &str) -> Result<Vec<FunctionDecl>, LangError> {
    let mut p = Parser { toks: lex(src)?, pos: 0 };
    let (functions, main) = p.program()?;
    if main.is_some() {
        return Err(LangError::Syntax {
            line: 0,
            column: 0,
            message: "library sources may not contain a main expression".into(),
        });
    }
    for f in &functions {
        f.validate()?;
    }
    Ok(functions)
}

/// Parses a single expression.
pub fn parse_expr(src: &str) -> Result<Expr, LangError> {
    let mut p = Parser { toks: lex(src)?, pos: 0 };
    let e = p.expr()?;
    if *p.peek() != Tok::Eof {
        return p.error(format!("unexpected {} after expression", describe(p.peek())));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counter_rep_parses() {
        let e = parse_expr("rep(0){(x) => +(x, 1)}").unwrap();
        assert_eq!(
            e,
            Expr::rep(
                Expr::num(0.0),
                "x",
                Expr::call("+", vec![Expr::var("x"), Expr::num(1.0)])
            )
        );
    }

    #[test]
    fn literal_passthrough() {
        assert_eq!(parse("42").unwrap().main(), &Expr::num(42.0));
    }

    #[test]
    fn precedence_follows_the_table() {
        let e = parse_expr("a || b && c < d + e * -f").unwrap();
        let expected = Expr::call(
            "||",
            vec![
                Expr::var("a"),
                Expr::call(
                    "&&",
                    vec![
                        Expr::var("b"),
                        Expr::call(
                            "<",
                            vec![
                                Expr::var("c"),
                                Expr::call(
                                    "+",
                                    vec![
                                        Expr::var("d"),
                                        Expr::call(
                                            "*",
                                            vec![Expr::var("e"), Expr::call("-", vec![Expr::var("f")])],
                                        ),
                                    ],
                                ),
                            ],
                        ),
                    ],
                ),
            ],
        );
        assert_eq!(e, expected);
    }

    #[test]
    fn subtraction_is_left_associative() {
        let e = parse_expr("a - b - c").unwrap();
        assert_eq!(
            e,
            Expr::call(
                "-",
                vec![Expr::call("-", vec![Expr::var("a"), Expr::var("b")]), Expr::var("c")]
            )
        );
    }

    #[test]
    fn hood_plus_and_ordinals_lex_as_names() {
        let e = parse_expr("maxHood+(nbr{1st(x)})").unwrap();
        match e {
            Expr::Call { name, args, .. } => {
                assert_eq!(name, "maxHood+");
                assert_eq!(args[0], Expr::nbr(Expr::call("1st", vec![Expr::var("x")])));
            }
            _ => panic!(),
        }
        // `+` followed by space is addition.
        assert_eq!(
            parse_expr("minHood + (y)").unwrap(),
            Expr::call("+", vec![Expr::var("minHood"), Expr::var("y")])
        );
    }

    #[test]
    fn functional_arguments_accept_operators() {
        let e = parse_expr("C'(p, v, 0)(+, /)").unwrap();
        assert_eq!(
            e,
            Expr::call_with("C'", vec![Expr::var("p"), Expr::var("v"), Expr::num(0.0)], &["+", "/"])
        );
    }

    #[test]
    fn distance_to_listing_has_no_main() {
        let src = "def distanceToWithObs(source, obstacle) {\n  if(obstacle) { infinity } { distanceTo(source) }\n}\n\ndef distanceTo(source) {\n   mux( source, 0,\n      rep (infinity) { (x) => minHood(nbr{x} + nbrRange())}\n   )\n}\n";
        assert_eq!(parse(src).unwrap_err(), LangError::MissingMain);
        assert_eq!(parse_library(src).unwrap().len(), 2);
    }

    #[test]
    fn rep_without_lambda_is_rejected() {
        assert!(matches!(parse_expr("rep(0){ x + 1 }"), Err(LangError::Syntax { .. })));
        assert!(matches!(parse_expr("rep(0){ x => x }"), Err(LangError::Syntax { .. })));
    }

    #[test]
    fn reserved_words_are_reported() {
        assert!(matches!(parse("let in = 1 in 2"), Err(LangError::UnknownConstruct { .. })));
        assert!(matches!(parse("1 + def"), Err(LangError::UnknownConstruct { .. })));
    }

    #[test]
    fn syntax_errors_carry_positions() {
        match parse("def f(x) {\n  x +\n}\nf(1)") {
            Err(LangError::Syntax { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn negative_literals_fold() {
        assert_eq!(parse_expr("-3").unwrap(), Expr::num(-3.0));
        assert_eq!(parse_expr("-infinity").unwrap(), Expr::num(f64::NEG_INFINITY));
        assert_eq!(parse_expr("-(3)").unwrap(), Expr::call("-", vec![Expr::num(3.0)]));
        assert_eq!(
            parse_expr("1 - 3").unwrap(),
            Expr::call("-", vec![Expr::num(1.0), Expr::num(3.0)])
        );
    }

    #[test]
    fn if_accepts_optional_else() {
        let a = parse_expr("if (c) {1} {2}").unwrap();
        let b = parse_expr("if (c) {1} else {2}").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn comments_are_skipped() {
        let p = parse("// leading\ndef f(x) { x } // trailing\nf(2) // done").unwrap();
        assert_eq!(p.functions().len(), 1);
    }
}
