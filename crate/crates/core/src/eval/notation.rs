//! Text form of value trees: `5⟨2, 3⟨7, 1, 4⟩⟩`, leaves written bare.

use thiserror::Error;

use super::ValueTree;
use crate::value::{DeviceNaming, LocalValue, NeighbouringField, Value};

/// One-line rendering.
pub fn to_notation(t: &ValueTree, naming: DeviceNaming) -> String {
    let mut out = String::new();
    write_tree(t, naming, &mut out);
    out
}

fn write_tree(t: &ValueTree, naming: DeviceNaming, out: &mut String) {
    out.push_str(&t.root.display_with(naming));
    if t.children.is_empty() {
        return;
    }
    out.push('⟨');
    for (i, c) in t.children.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write_tree(c, naming, out);
    }
    out.push('⟩');
}

/// Multi-line rendering with one node per line, children indented by two spaces.
pub fn to_indented(t: &ValueTree, naming: DeviceNaming) -> String {
    let mut out = String::new();
    write_indented(t, naming, 0, &mut out);
    out
}

fn write_indented(t: &ValueTree, naming: DeviceNaming, depth: usize, out: &mut String) {
    for _ in 0..depth {
        out.push_str("  ");
    }
    out.push_str(&t.root.display_with(naming));
    out.push('\n');
    for c in &t.children {
        write_indented(c, naming, depth + 1, out);
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
#[error("bad value tree at offset {offset}: {message}")]
pub struct ParseTreeError {
    pub offset: usize,
    pub message: String,
}

struct Reader<'s> {
    chars: Vec<char>,
    pos: usize,
    _src: &'s str,
}

impl Reader<'_> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T, ParseTreeError> {
        Err(ParseTreeError {
            offset: self.pos,
            message: message.into(),
        })
    }

    fn skip_ws(&mut self) {
        while self.chars.get(self.pos).is_some_and(|c| c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).copied()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ParseTreeError> {
        if self.eat(c) {
            Ok(())
        } else {
            self.err(format!("expected `{c}`"))
        }
    }

    fn word(&mut self) -> String {
        let start = self.pos;
        while self
            .chars
            .get(self.pos)
            .is_some_and(|c| c.is_alphanumeric() || *c == '_' || *c == '.' || *c == '\'')
        {
            self.pos += 1;
        }
        self.chars[start..self.pos].iter().collect()
    }

    fn tree(&mut self) -> Result<ValueTree, ParseTreeError> {
        let root = self.value()?;
        let mut children = Vec::new();
        if self.eat('⟨') {
            if !self.eat('⟩') {
                loop {
                    children.push(self.tree()?);
                    if self.eat('⟩') {
                        break;
                    }
                    self.expect(',')?;
                }
            }
        }
        Ok(ValueTree { root, children })
    }

    fn value(&mut self) -> Result<Value, ParseTreeError> {
        match self.peek() {
            Some('∅') => {
                self.pos += 1;
                Ok(Value::Field(NeighbouringField::new()))
            }
            Some('(') => {
                let save = self.pos;
                self.pos += 1;
                if self.peek() == Some('δ') {
                    self.field()
                } else {
                    self.pos = save;
                    self.local().map(Value::Local)
                }
            }
            _ => self.local().map(Value::Local),
        }
    }

    fn field(&mut self) -> Result<Value, ParseTreeError> {
        let mut entries = Vec::new();
        loop {
            self.expect('δ')?;
            let label = self.word();
            let Some((id, _)) = DeviceNaming::parse_label(&label) else {
                return self.err(format!("bad device label `{label}`"));
            };
            self.expect('↦')?;
            entries.push((id, self.local()?));
            if self.eat(')') {
                break;
            }
            self.expect(',')?;
        }
        Ok(Value::Field(NeighbouringField::from_entries(entries)))
    }

    fn items(&mut self) -> Result<(Vec<LocalValue>, bool), ParseTreeError> {
        let mut items = Vec::new();
        let mut trailing = false;
        if self.eat(')') {
            return Ok((items, trailing));
        }
        loop {
            items.push(self.local()?);
            if self.eat(')') {
                break;
            }
            self.expect(',')?;
            if self.eat(')') {
                trailing = true;
                break;
            }
        }
        Ok((items, trailing))
    }

    fn local(&mut self) -> Result<LocalValue, ParseTreeError> {
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                let (items, trailing) = self.items()?;
                if items.len() == 1 && !trailing {
                    return Ok(items.into_iter().next().expect("one item"));
                }
                Ok(LocalValue::tuple(items))
            }
            Some('-') => {
                self.pos += 1;
                match self.local()? {
                    LocalValue::Num(x) => Ok(LocalValue::Num(-x)),
                    other => self.err(format!("cannot negate {other}")),
                }
            }
            Some(c) if c.is_ascii_digit() => {
                let start = self.pos;
                while self.chars.get(self.pos).is_some_and(|c| c.is_ascii_digit() || *c == '.') {
                    self.pos += 1;
                }
                if self.chars.get(self.pos).is_some_and(|c| *c == 'e' || *c == 'E') {
                    self.pos += 1;
                    if self.chars.get(self.pos).is_some_and(|c| *c == '-' || *c == '+') {
                        self.pos += 1;
                    }
                    while self.chars.get(self.pos).is_some_and(|c| c.is_ascii_digit()) {
                        self.pos += 1;
                    }
                }
                let text: String = self.chars[start..self.pos].iter().collect();
                match text.parse::<f64>() {
                    Ok(x) => Ok(LocalValue::Num(x)),
                    Err(_) => self.err(format!("bad number `{text}`")),
                }
            }
            Some(c) if c.is_alphabetic() => {
                let w = self.word();
                match w.as_str() {
                    "true" => Ok(LocalValue::Bool(true)),
                    "false" => Ok(LocalValue::Bool(false)),
                    "infinity" => Ok(LocalValue::Num(f64::INFINITY)),
                    "nan" => Ok(LocalValue::Num(f64::NAN)),
                    _ => {
                        self.expect('(')?;
                        let (items, _) = self.items()?;
                        Ok(LocalValue::Cons(w.into(), items.into()))
                    }
                }
            }
            _ => self.err("expected a value"),
        }
    }
}

/// Reads the one-line notation; device labels may be numeric (`δ3`) or alphabetic (`δC`).
pub fn parse_tree(src: &str) -> Result<ValueTree, ParseTreeError> {
    let mut r = Reader {
        chars: src.chars().collect(),
        pos: 0,
        _src: src,
    };
    let t = r.tree()?;
    if r.peek().is_some() {
        return r.err("trailing input");
    }
    Ok(t)
}
