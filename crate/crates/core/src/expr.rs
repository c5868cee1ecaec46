//! Scalar infix expressions over named symbols.
//!
//! Grammar (lowest to highest precedence):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | ident | '(' expr ')'
//! ident  := [a-zA-Z_][a-zA-Z0-9_]*
//! ```
//!
//! `+ - * /` are left-associative, `^` is right-associative and binds tighter
//! than unary minus, so `-x^2` is `-(x^2)`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unbalanced parenthesis at byte {offset}")]
    UnbalancedParen { offset: usize },
    #[error("empty operand at byte {offset}")]
    EmptyOperand { offset: usize },
    #[error("unbound symbol `{0}`")]
    Unbound(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("zero raised to a negative power")]
    ZeroToNegativePower,
    #[error("non-finite result")]
    NonFinite,
    #[error("finite-difference step must be positive, got {0}")]
    BadStep(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => PREC_ADD,
            BinOp::Mul | BinOp::Div => PREC_MUL,
            BinOp::Pow => PREC_POW,
        }
    }
}

const PREC_ADD: u8 = 1;
const PREC_MUL: u8 = 2;
const PREC_NEG: u8 = 3;
const PREC_POW: u8 = 4;
const PREC_ATOM: u8 = 5;

/// Expression tree. Grouping parentheses are not kept as nodes; the printer
/// re-inserts the minimal set needed to reproduce the tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Sym(String),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn num(v: f64) -> Self {
        Expr::Num(v)
    }

    pub fn sym(name: impl Into<String>) -> Self {
        Expr::Sym(name.into())
    }

    #[allow(clippy::should_implement_trait)]
    pub fn neg(e: Expr) -> Self {
        Expr::Neg(Box::new(e))
    }

    pub fn bin(op: BinOp, l: Expr, r: Expr) -> Self {
        Expr::Bin(op, Box::new(l), Box::new(r))
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Num(_) | Expr::Sym(_) => PREC_ATOM,
            Expr::Neg(_) => PREC_NEG,
            Expr::Bin(op, _, _) => op.precedence(),
        }
    }

    /// Every distinct symbol name in the tree.
    pub fn symbols(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_symbols(&mut out);
        out
    }

    fn collect_symbols(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Num(_) => {}
            Expr::Sym(s) => {
                out.insert(s.clone());
            }
            Expr::Neg(e) => e.collect_symbols(out),
            Expr::Bin(_, l, r) => {
                l.collect_symbols(out);
                r.collect_symbols(out);
            }
        }
    }

    pub fn eval(&self, env: &Bindings) -> Result<f64, ExprError> {
        let v = self.eval_raw(env)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ExprError::NonFinite)
        }
    }

    fn eval_raw(&self, env: &Bindings) -> Result<f64, ExprError> {
        match self {
            Expr::Num(v) => Ok(*v),
            Expr::Sym(s) => env.get(s).ok_or_else(|| ExprError::Unbound(s.clone())),
            Expr::Neg(e) => Ok(-e.eval_raw(env)?),
            Expr::Bin(op, l, r) => {
                let a = l.eval_raw(env)?;
                let b = r.eval_raw(env)?;
                match op {
                    BinOp::Add => Ok(a + b),
                    BinOp::Sub => Ok(a - b),
                    BinOp::Mul => Ok(a * b),
                    BinOp::Div => {
                        if b == 0.0 {
                            Err(ExprError::DivisionByZero)
                        } else {
                            Ok(a / b)
                        }
                    }
                    BinOp::Pow => {
                        if a == 0.0 && b < 0.0 {
                            Err(ExprError::ZeroToNegativePower)
                        } else {
                            Ok(a.powf(b))
                        }
                    }
                }
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => {
                if v.is_sign_negative() {
                    write!(f, "({v})")
                } else {
                    write!(f, "{v}")
                }
            }
            Expr::Sym(s) => f.write_str(s),
            Expr::Neg(e) => {
                f.write_str("-")?;
                write_child(f, e, e.precedence() < PREC_NEG)
            }
            Expr::Bin(op, l, r) => {
                let p = op.precedence();
                let (left_parens, right_parens) = match op {
                    // right-associative; the exponent is parsed as a unary
                    BinOp::Pow => (l.precedence() <= PREC_POW, r.precedence() < PREC_NEG),
                    _ => (l.precedence() < p, r.precedence() <= p),
                };
                write_child(f, l, left_parens)?;
                match op {
                    BinOp::Add | BinOp::Sub => write!(f, " {} ", op.symbol())?,
                    _ => f.write_str(op.symbol())?,
                }
                write_child(f, r, right_parens)
            }
        }
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, e: &Expr, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

/// Symbol values for evaluation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Bindings(BTreeMap<String, f64>);

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, name: impl Into<String>, value: f64) -> &mut Self {
        self.0.insert(name.into(), value);
        self
    }

    pub fn with(mut self, name: impl Into<String>, value: f64) -> Self {
        self.set(name, value);
        self
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.get(name).copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn extend(&mut self, other: &Bindings) {
        for (k, v) in other.iter() {
            self.set(k, v);
        }
    }
}

impl<S: Into<String>> FromIterator<(S, f64)> for Bindings {
    fn from_iter<I: IntoIterator<Item = (S, f64)>>(iter: I) -> Self {
        Bindings(iter.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }
}

pub fn parse(text: &str) -> Result<Expr, ExprError> {
    let tokens = tokenize(text)?;
    if tokens.len() == 1 {
        return Err(ExprError::EmptyOperand { offset: 0 });
    }
    let mut p = Parser { tokens, pos: 0 };
    let e = p.expr()?;
    let tok = p.peek();
    match tok.kind {
        TokKind::Eof => Ok(e),
        TokKind::RParen => Err(ExprError::UnbalancedParen { offset: tok.offset }),
        _ => Err(ExprError::Syntax { offset: tok.offset, message: format!("unexpected {}", tok.kind.describe()) }),
    }
}

pub fn eval(e: &Expr, env: &Bindings) -> Result<f64, ExprError> {
    e.eval(env)
}

/// Default central-difference step for a point `x`.
pub fn default_step(x: f64) -> f64 {
    1e-5 * x.abs().max(1.0)
}

/// Central difference of `e` with respect to `sym` at the point given by `env`.
pub fn partial_fd(e: &Expr, env: &Bindings, sym: &str, h: f64) -> Result<f64, ExprError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(ExprError::BadStep(h));
    }
    let x = env.get(sym).ok_or_else(|| ExprError::Unbound(sym.to_string()))?;
    let mut shifted = env.clone();
    shifted.set(sym, x + h);
    let hi = e.eval(&shifted)?;
    shifted.set(sym, x - h);
    let lo = e.eval(&shifted)?;
    Ok((hi - lo) / (2.0 * h))
}

#[derive(Debug, Clone, PartialEq)]
enum TokKind {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Eof,
}

impl TokKind {
    fn describe(&self) -> String {
        match self {
            TokKind::Num(v) => format!("number {v}"),
            TokKind::Ident(s) => format!("identifier `{s}`"),
            TokKind::Op(c) => format!("operator `{c}`"),
            TokKind::LParen => "`(`".into(),
            TokKind::RParen => "`)`".into(),
            TokKind::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokKind,
    offset: usize,
}

fn tokenize(text: &str) -> Result<Vec<Token>, ExprError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => i += 1,
            b'+' | b'-' | b'*' | b'/' | b'^' => {
                out.push(Token { kind: TokKind::Op(c as char), offset: i });
                i += 1;
            }
            b'(' => {
                out.push(Token { kind: TokKind::LParen, offset: i });
                i += 1;
            }
            b')' => {
                out.push(Token { kind: TokKind::RParen, offset: i });
                i += 1;
            }
            b'0'..=b'9' | b'.' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let lit = &text[start..i];
                let v: f64 = lit
                    .parse()
                    .map_err(|_| ExprError::Syntax { offset: start, message: format!("malformed number `{lit}`") })?;
                out.push(Token { kind: TokKind::Num(v), offset: start });
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push(Token { kind: TokKind::Ident(text[start..i].to_string()), offset: start });
            }
            _ => {
                let ch = text[i..].chars().next().unwrap_or('?');
                return Err(ExprError::Syntax { offset: i, message: format!("unexpected character `{ch}`") });
            }
        }
    }
    out.push(Token { kind: TokKind::Eof, offset: text.len() });
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn eat_op(&mut self, ops: &[char]) -> Option<char> {
        match self.peek().kind {
            TokKind::Op(c) if ops.contains(&c) => {
                self.bump();
                Some(c)
            }
            _ => None,
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        while let Some(c) = self.eat_op(&['+', '-']) {
            let rhs = self.term()?;
            let op = if c == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(c) = self.eat_op(&['*', '/']) {
            let rhs = self.unary()?;
            let op = if c == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.eat_op(&['-']).is_some() {
            return Ok(Expr::neg(self.unary()?));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if self.eat_op(&['^']).is_some() {
            let exp = self.unary()?;
            return Ok(Expr::bin(BinOp::Pow, base, exp));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let tok = self.bump();
        match tok.kind {
            TokKind::Num(v) => Ok(Expr::Num(v)),
            TokKind::Ident(s) => Ok(Expr::Sym(s)),
            TokKind::LParen => {
                if self.peek().kind == TokKind::RParen {
                    return Err(ExprError::EmptyOperand { offset: self.peek().offset });
                }
                let inner = self.expr()?;
                if self.peek().kind == TokKind::RParen {
                    self.bump();
                    Ok(inner)
                } else {
                    Err(ExprError::UnbalancedParen { offset: tok.offset })
                }
            }
            TokKind::RParen => Err(ExprError::EmptyOperand { offset: tok.offset }),
            TokKind::Eof => Err(ExprError::EmptyOperand { offset: tok.offset }),
            TokKind::Op(c) => Err(ExprError::Syntax {
                offset: tok.offset,
                message: format!("operator `{c}` is missing its left operand"),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(op: BinOp, l: Expr, r: Expr) -> Expr {
        Expr::bin(op, l, r)
    }

    fn s(name: &str) -> Expr {
        Expr::sym(name)
    }

    #[test]
    fn parses_extended_rhs() {
        let e = parse("b*y + d + s*z*(l*r - y)").unwrap();
        let expected = b(
            BinOp::Add,
            b(BinOp::Add, b(BinOp::Mul, s("b"), s("y")), s("d")),
            b(BinOp::Mul, b(BinOp::Mul, s("s"), s("z")), b(BinOp::Sub, b(BinOp::Mul, s("l"), s("r")), s("y"))),
        );
        assert_eq!(e, expected);
    }

    #[test]
    fn atom_and_precedence() {
        assert_eq!(parse("x1").unwrap(), s("x1"));
        assert_eq!(parse("1+2*3").unwrap().eval(&Bindings::new()).unwrap(), 7.0);
        assert_eq!(parse("2^3^2").unwrap().eval(&Bindings::new()).unwrap(), 512.0);
        assert_eq!(parse("-2^2").unwrap().eval(&Bindings::new()).unwrap(), -4.0);
        assert_eq!(parse("8/4/2").unwrap().eval(&Bindings::new()).unwrap(), 1.0);
        assert_eq!(parse("10-4-3").unwrap().eval(&Bindings::new()).unwrap(), 3.0);
        assert_eq!(parse("2^-1").unwrap().eval(&Bindings::new()).unwrap(), 0.5);
        assert_eq!(parse("1.5e-3*2").unwrap().eval(&Bindings::new()).unwrap(), 3e-3);
    }

    #[test]
    fn extended_rhs_vanishes_at_operating_point() {
        let e = parse("b*y + d + s*z*(l*r - y)").unwrap();
        let env: Bindings = [("b", 0.3), ("y", 11.0), ("d", 0.01), ("s", 0.25), ("z", 4.012), ("l", 0.7), ("r", 11.0)]
            .into_iter()
            .collect();
        assert!(e.eval(&env).unwrap().abs() < 1e-3);
        assert_eq!(parse("x1").unwrap().eval(&Bindings::new().with("x1", 5.0)).unwrap(), 5.0);
    }

    #[test]
    fn syntax_errors_carry_offsets() {
        assert_eq!(parse("(a+b"), Err(ExprError::UnbalancedParen { offset: 0 }));
        assert_eq!(parse("a+b)"), Err(ExprError::UnbalancedParen { offset: 3 }));
        assert_eq!(parse("a+"), Err(ExprError::EmptyOperand { offset: 2 }));
        assert_eq!(parse("()"), Err(ExprError::EmptyOperand { offset: 1 }));
        assert_eq!(parse(""), Err(ExprError::EmptyOperand { offset: 0 }));
        assert!(matches!(parse("a $ b"), Err(ExprError::Syntax { offset: 2, .. })));
        assert!(matches!(parse("a b"), Err(ExprError::Syntax { offset: 2, .. })));
        assert!(matches!(parse("*a"), Err(ExprError::Syntax { offset: 0, .. })));
    }

    #[test]
    fn evaluation_errors() {
        let env = Bindings::new().with("x", 0.0);
        assert_eq!(parse("1/x").unwrap().eval(&env), Err(ExprError::DivisionByZero));
        assert_eq!(parse("x^-2").unwrap().eval(&env), Err(ExprError::ZeroToNegativePower));
        assert_eq!(parse("q+1").unwrap().eval(&env), Err(ExprError::Unbound("q".into())));
        assert_eq!(parse("(-8)^0.5").unwrap().eval(&env), Err(ExprError::NonFinite));
        assert_eq!(parse("10^400").unwrap().eval(&env), Err(ExprError::NonFinite));
    }

    #[test]
    fn printer_inserts_minimal_parens() {
        for text in ["a - (b - c)", "(a + b)*c", "-(a + b)", "(-a)^2", "a^b^c", "(a^b)^c", "a/(b*c)", "a*-b"] {
            assert_eq!(parse(text).unwrap().to_string(), text);
        }
    }

    #[test]
    fn central_difference_examples() {
        let e = parse("x1/s").unwrap();
        let env = Bindings::new().with("x1", 2.0).with("s", 0.25);
        assert!((partial_fd(&e, &env, "x1", 1e-5).unwrap() - 4.0).abs() < 1e-8);
        let e = parse("x1*x2").unwrap();
        let env = Bindings::new().with("x1", 3.0).with("x2", 7.0);
        assert!((partial_fd(&e, &env, "x2", 1e-5).unwrap() - 3.0).abs() < 1e-8);
        assert_eq!(partial_fd(&e, &env, "x2", 0.0), Err(ExprError::BadStep(0.0)));
        assert_eq!(partial_fd(&e, &env, "x3", 1e-5), Err(ExprError::Unbound("x3".into())));
    }

    #[test]
    fn candidate_b_partials_match_closed_forms() {
        // d/dx1 = 1, d/dx2 = (1-b) s l r / (s (l r - x2))^2
        let e = parse("(x2 + s*x1*(l*r - x2) - b*x2)/(s*(l*r - x2))").unwrap();
        let (b_, s_, l_, r_) = (0.3, 0.25, 0.7, 11.0);
        for &(x1, x2) in &[(1.0, 2.0), (4.0, 3.5), (10.0, 12.0), (0.5, 15.0)] {
            let env: Bindings =
                [("x1", x1), ("x2", x2), ("b", b_), ("s", s_), ("l", l_), ("r", r_)].into_iter().collect();
            let d1 = partial_fd(&e, &env, "x1", default_step(x1)).unwrap();
            let d2 = partial_fd(&e, &env, "x2", default_step(x2)).unwrap();
            let denom = s_ * (l_ * r_ - x2);
            let exact2 = (1.0 - b_) * s_ * l_ * r_ / (denom * denom);
            assert!((d1 - 1.0).abs() < 1e-8, "d1 = {d1}");
            assert!((d2 - exact2).abs() < 1e-7 * exact2.abs().max(1.0), "d2 = {d2} vs {exact2}");
        }
    }
}
