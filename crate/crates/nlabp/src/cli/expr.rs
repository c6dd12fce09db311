//! Arithmetic expressions for analytic fields in run configurations.
//!
//! Grammar, lowest precedence first:
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' unary)?
//! atom    := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')' | '|' expr '|'
//! ```
//!
//! `^` is right associative and binds tighter than unary minus, so
//! `-x^2 = -(x^2)`. Coordinates are `x`, `y`, `z` (also `x1`, `x2`, `x3`) and
//! `r` is the Euclidean norm of the point. `|e|` is the absolute value.

use std::collections::BTreeMap;
use std::fmt;

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Coord(usize),
    Radius,
    Neg(Box<Expr>),
    Bin(Op, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Abs,
    Min,
    Max,
    Exp,
    Log,
    Sqrt,
    Sin,
    Cos,
    /// Euclidean norm of the arguments.
    Norm,
    /// Max norm of the arguments.
    NormInf,
    /// `max(a, 0)`.
    Pos,
    /// `1` if the argument is positive, else `0`.
    Step,
}

impl Func {
    fn lookup(name: &str) -> Option<(Func, usize, usize)> {
        let f = match name {
            "abs" => (Func::Abs, 1, 1),
            "min" => (Func::Min, 2, usize::MAX),
            "max" => (Func::Max, 2, usize::MAX),
            "exp" => (Func::Exp, 1, 1),
            "log" => (Func::Log, 1, 1),
            "sqrt" => (Func::Sqrt, 1, 1),
            "sin" => (Func::Sin, 1, 1),
            "cos" => (Func::Cos, 1, 1),
            "norm" => (Func::Norm, 1, usize::MAX),
            "norminf" => (Func::NormInf, 1, usize::MAX),
            "pos" => (Func::Pos, 1, 1),
            "step" => (Func::Step, 1, 1),
            _ => return None,
        };
        Some(f)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParseError {
    pub position: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "at offset {}: {}", self.position, self.message)
    }
}

impl std::error::Error for ParseError {}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
}

fn tokenize(src: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == '.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == 'e' || bytes[i] == 'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == '+' || bytes[j] == '-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = bytes[start..i].iter().collect();
            let v = text.parse::<f64>().map_err(|_| ParseError { position: start, message: format!("bad number '{text}'") })?;
            out.push((start, Tok::Num(v)));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_alphanumeric() || bytes[i] == '_') {
                i += 1;
            }
            out.push((start, Tok::Ident(bytes[start..i].iter().collect())));
        } else if "+-*/^(),|".contains(c) {
            out.push((i, Tok::Sym(c)));
            i += 1;
        } else {
            return Err(ParseError { position: i, message: format!("unexpected character '{c}'") });
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
    constants: &'a BTreeMap<String, f64>,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.1)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|t| t.0).unwrap_or(self.end)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError { position: self.offset(), message: message.into() })
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            self.err(format!("expected '{c}'"))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat('+') {
                Op::Add
            } else if self.eat('-') {
                Op::Sub
            } else {
                return Ok(lhs);
            };
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(self.term()?));
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat('*') {
                Op::Mul
            } else if self.eat('/') {
                Op::Div
            } else {
                return Ok(lhs);
            };
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(self.unary()?));
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.eat('^') {
            let exp = self.unary()?;
            return Ok(Expr::Bin(Op::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let Some(tok) = self.peek().cloned() else {
            return self.err("unexpected end of expression");
        };
        match tok {
            Tok::Num(v) => {
                self.pos += 1;
                Ok(Expr::Num(v))
            }
            Tok::Sym('(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Sym('|') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect('|')?;
                Ok(Expr::Call(Func::Abs, vec![e]))
            }
            Tok::Ident(name) => {
                self.pos += 1;
                if self.peek() == Some(&Tok::Sym('(')) {
                    let Some((func, lo, hi)) = Func::lookup(&name) else {
                        return self.err(format!("unknown function '{name}'"));
                    };
                    self.pos += 1;
                    let mut args = vec![self.expr()?];
                    while self.eat(',') {
                        args.push(self.expr()?);
                    }
                    self.expect(')')?;
                    if args.len() < lo || args.len() > hi {
                        return self.err(format!("'{name}' takes {lo}..{} arguments, got {}", if hi == usize::MAX { "".into() } else { hi.to_string() }, args.len()));
                    }
                    return Ok(Expr::Call(func, args));
                }
                match name.as_str() {
                    "x" | "x1" => Ok(Expr::Coord(0)),
                    "y" | "x2" => Ok(Expr::Coord(1)),
                    "z" | "x3" => Ok(Expr::Coord(2)),
                    "r" => Ok(Expr::Radius),
                    "pi" => Ok(Expr::Num(std::f64::consts::PI)),
                    _ => match self.constants.get(&name) {
                        Some(v) => Ok(Expr::Num(*v)),
                        None => {
                            self.pos -= 1;
                            self.err(format!("unknown identifier '{name}'"))
                        }
                    },
                }
            }
            Tok::Sym(c) => self.err(format!("unexpected '{c}'")),
        }
    }
}

impl Expr {
    /// Parses `src`; identifiers other than the coordinates resolve through
    /// `constants` at parse time.
    pub fn parse(src: &str, constants: &BTreeMap<String, f64>) -> Result<Expr, ParseError> {
        let toks = tokenize(src)?;
        let mut p = Parser { toks, pos: 0, end: src.len(), constants };
        let e = p.expr()?;
        if p.pos != p.toks.len() {
            return p.err("trailing input");
        }
        Ok(e)
    }

    pub fn eval(&self, x: &[f64; 3]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Coord(i) => x[*i],
            Expr::Radius => (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt(),
            Expr::Neg(e) => -e.eval(x),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(x), b.eval(x));
                match op {
                    Op::Add => a + b,
                    Op::Sub => a - b,
                    Op::Mul => a * b,
                    Op::Div => a / b,
                    Op::Pow => a.powf(b),
                }
            }
            Expr::Call(f, args) => {
                let v: Vec<f64> = args.iter().map(|a| a.eval(x)).collect();
                match f {
                    Func::Abs => v[0].abs(),
                    Func::Min => v.iter().copied().fold(f64::INFINITY, f64::min),
                    Func::Max => v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    Func::Exp => v[0].exp(),
                    Func::Log => v[0].ln(),
                    Func::Sqrt => v[0].sqrt(),
                    Func::Sin => v[0].sin(),
                    Func::Cos => v[0].cos(),
                    Func::Norm => v.iter().map(|a| a * a).sum::<f64>().sqrt(),
                    Func::NormInf => v.iter().fold(0.0, |m, a| m.max(a.abs())),
                    Func::Pos => v[0].max(0.0),
                    Func::Step => f64::from(u8::from(v[0] > 0.0)),
                }
            }
        }
    }
}
