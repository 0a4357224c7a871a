//! Scalar expressions in `t` and `eps`.
//!
//! Coefficients of the equation, right-hand sides, boundary coefficients and
//! integral kernels all enter as small infix expressions. They are parsed into
//! an [`Expr`] tree which can be differentiated exactly, so every derivative
//! layer of a coefficient jet is evaluated in closed form.
//!
//! Grammar (whitespace is insignificant):
//!
//! ```text
//! expr     = term { ("+" | "-") term } ;
//! term     = unary { ("*" | "/") unary } ;
//! unary    = "-" unary | power ;
//! power    = primary [ "^" exponent ] ;
//! exponent = "-" exponent | power ;          (* must fold to an integer in [-9, 9] *)
//! primary  = number | "t" | "eps" | func "(" expr ")" | "(" expr ")" ;
//! func     = "sin" | "cos" | "exp" | "log" | "sqrt" ;
//! number   = digits [ "." digits ] [ ("e" | "E") [ "+" | "-" ] digits ] ;
//! ```
//!
//! `^` binds tighter than unary minus (`-t^2` is `-(t^2)`) and is right
//! associative; `*`, `/`, `+`, `-` are left associative.

use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Var {
    T,
    Eps,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }
}

/// Largest magnitude accepted for a literal `^` exponent.
pub const MAX_EXPONENT: i32 = 9;

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    /// Integer power. The parser restricts literals to `[-9, 9]`; derivatives
    /// may step one outside that range.
    Pow(Box<Expr>, i32),
    Call(Func, Box<Expr>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ParseErrorKind {
    Empty,
    UnexpectedChar(char),
    UnexpectedEnd,
    UnexpectedToken(String),
    UnknownIdentifier(String),
    BadNumber(String),
    BadExponent(String),
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("parse error at byte {offset}: {kind}")]
pub struct ParseError {
    pub offset: usize,
    pub kind: ParseErrorKind,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::Empty => write!(f, "empty expression"),
            ParseErrorKind::UnexpectedChar(c) => write!(f, "unexpected character `{c}`"),
            ParseErrorKind::UnexpectedEnd => write!(f, "unexpected end of input"),
            ParseErrorKind::UnexpectedToken(s) => write!(f, "unexpected `{s}`"),
            ParseErrorKind::UnknownIdentifier(s) => write!(f, "unknown identifier `{s}`"),
            ParseErrorKind::BadNumber(s) => write!(f, "malformed number `{s}`"),
            ParseErrorKind::BadExponent(s) => write!(f, "exponent {s}"),
        }
    }
}

// ---------------------------------------------------------------------------
// Lexer

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

impl Tok {
    fn text(&self) -> String {
        match self {
            Tok::Num(x) => format!("{x}"),
            Tok::Ident(s) => s.clone(),
            Tok::Plus => "+".into(),
            Tok::Minus => "-".into(),
            Tok::Star => "*".into(),
            Tok::Slash => "/".into(),
            Tok::Caret => "^".into(),
            Tok::LParen => "(".into(),
            Tok::RParen => ")".into(),
        }
    }
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => out.push((start, Tok::Plus)),
            b'-' => out.push((start, Tok::Minus)),
            b'*' => out.push((start, Tok::Star)),
            b'/' => out.push((start, Tok::Slash)),
            b'^' => out.push((start, Tok::Caret)),
            b'(' => out.push((start, Tok::LParen)),
            b')' => out.push((start, Tok::RParen)),
            b'0'..=b'9' | b'.' => {
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
                let text = &src[start..i];
                let value: f64 = text.parse().map_err(|_| ParseError {
                    offset: start,
                    kind: ParseErrorKind::BadNumber(text.to_string()),
                })?;
                out.push((start, Tok::Num(value)));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((start, Tok::Ident(src[start..i].to_string())));
                continue;
            }
            _ => {
                let ch = src[start..].chars().next().unwrap_or('?');
                return Err(ParseError {
                    offset: start,
                    kind: ParseErrorKind::UnexpectedChar(ch),
                });
            }
        }
        i += 1;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Parser

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(o, _)| *o)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(_, t)| t.clone());
        self.pos += 1;
        t
    }

    fn err(&self, kind: ParseErrorKind) -> ParseError {
        ParseError {
            offset: self.offset(),
            kind,
        }
    }

    fn unexpected(&self) -> ParseError {
        match self.peek() {
            Some(t) => self.err(ParseErrorKind::UnexpectedToken(t.text())),
            None => self.err(ParseErrorKind::UnexpectedEnd),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.bump();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(Tok::Minus) => {
                    self.bump();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.bump();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some(Tok::Slash) => {
                    self.bump();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if let Some(Tok::Minus) = self.peek() {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if let Some(Tok::Caret) = self.peek() {
            self.bump();
            let at = self.offset();
            let exponent = self.exponent()?;
            let k = fold_exponent(&exponent).map_err(|msg| ParseError {
                offset: at,
                kind: ParseErrorKind::BadExponent(msg),
            })?;
            return Ok(Expr::Pow(Box::new(base), k));
        }
        Ok(base)
    }

    fn exponent(&mut self) -> Result<Expr, ParseError> {
        if let Some(Tok::Minus) = self.peek() {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.exponent()?)));
        }
        self.power()
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let at = self.offset();
        match self.bump() {
            Some(Tok::Num(x)) => Ok(Expr::Num(x)),
            Some(Tok::LParen) => {
                let inner = self.expr()?;
                match self.peek() {
                    Some(Tok::RParen) => {
                        self.bump();
                        Ok(inner)
                    }
                    _ => Err(self.unexpected()),
                }
            }
            Some(Tok::Ident(name)) => match name.as_str() {
                "t" => Ok(Expr::Var(Var::T)),
                "eps" => Ok(Expr::Var(Var::Eps)),
                _ => match Func::from_name(&name) {
                    Some(func) => {
                        match self.peek() {
                            Some(Tok::LParen) => {
                                self.bump();
                            }
                            _ => return Err(self.unexpected()),
                        }
                        let arg = self.expr()?;
                        match self.peek() {
                            Some(Tok::RParen) => {
                                self.bump();
                            }
                            _ => return Err(self.unexpected()),
                        }
                        Ok(Expr::Call(func, Box::new(arg)))
                    }
                    None => Err(ParseError {
                        offset: at,
                        kind: ParseErrorKind::UnknownIdentifier(name),
                    }),
                },
            },
            Some(tok) => Err(ParseError {
                offset: at,
                kind: ParseErrorKind::UnexpectedToken(tok.text()),
            }),
            None => Err(ParseError {
                offset: at,
                kind: ParseErrorKind::UnexpectedEnd,
            }),
        }
    }
}

fn fold_exponent(e: &Expr) -> std::result::Result<i32, String> {
    if e.depends_on(Var::T) || e.depends_on(Var::Eps) {
        return Err("must be a constant integer".into());
    }
    let value = e
        .eval(0.0, 0.0)
        .map_err(|_| "is not a finite constant".to_string())?;
    if value.fract() != 0.0 || value.abs() > MAX_EXPONENT as f64 {
        return Err(format!(
            "{value} is not an integer in [-{MAX_EXPONENT}, {MAX_EXPONENT}]"
        ));
    }
    Ok(value as i32)
}

/// Parse an expression in `t` and `eps`.
pub fn parse(src: &str) -> Result<Expr, ParseError> {
    let toks = lex(src)?;
    if toks.is_empty() {
        return Err(ParseError {
            offset: 0,
            kind: ParseErrorKind::Empty,
        });
    }
    let mut p = Parser {
        toks,
        pos: 0,
        end: src.len(),
    };
    let e = p.expr()?;
    if p.pos < p.toks.len() {
        return Err(p.unexpected());
    }
    Ok(e)
}

impl std::str::FromStr for Expr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, ParseError> {
        parse(s)
    }
}

// ---------------------------------------------------------------------------
// Simplifying constructors: constant folding and 0/1 identities only.

fn num(x: f64) -> Expr {
    Expr::Num(x)
}

fn as_num(e: &Expr) -> Option<f64> {
    match e {
        Expr::Num(x) => Some(*x),
        _ => None,
    }
}

fn folded(x: f64, fallback: impl FnOnce() -> Expr) -> Expr {
    if x.is_finite() {
        num(x)
    } else {
        fallback()
    }
}

fn neg(u: Expr) -> Expr {
    match u {
        Expr::Num(x) => num(-x),
        Expr::Neg(inner) => *inner,
        u => Expr::Neg(Box::new(u)),
    }
}

fn add(u: Expr, v: Expr) -> Expr {
    match (as_num(&u), as_num(&v)) {
        (Some(a), Some(b)) => folded(a + b, || Expr::Add(Box::new(u), Box::new(v))),
        (Some(a), _) if a == 0.0 => v,
        (_, Some(b)) if b == 0.0 => u,
        _ => Expr::Add(Box::new(u), Box::new(v)),
    }
}

fn sub(u: Expr, v: Expr) -> Expr {
    match (as_num(&u), as_num(&v)) {
        (Some(a), Some(b)) => folded(a - b, || Expr::Sub(Box::new(u), Box::new(v))),
        (Some(a), _) if a == 0.0 => neg(v),
        (_, Some(b)) if b == 0.0 => u,
        _ => Expr::Sub(Box::new(u), Box::new(v)),
    }
}

fn mul(u: Expr, v: Expr) -> Expr {
    match (as_num(&u), as_num(&v)) {
        (Some(a), Some(b)) => folded(a * b, || Expr::Mul(Box::new(u), Box::new(v))),
        (Some(a), _) if a == 0.0 => num(0.0),
        (_, Some(b)) if b == 0.0 => num(0.0),
        (Some(a), _) if a == 1.0 => v,
        (_, Some(b)) if b == 1.0 => u,
        (Some(a), _) if a == -1.0 => neg(v),
        (_, Some(b)) if b == -1.0 => neg(u),
        _ => Expr::Mul(Box::new(u), Box::new(v)),
    }
}

fn div(u: Expr, v: Expr) -> Expr {
    match (as_num(&u), as_num(&v)) {
        (Some(a), Some(b)) if b != 0.0 => folded(a / b, || Expr::Div(Box::new(u), Box::new(v))),
        (Some(a), _) if a == 0.0 => num(0.0),
        (_, Some(b)) if b == 1.0 => u,
        _ => Expr::Div(Box::new(u), Box::new(v)),
    }
}

fn pow(u: Expr, k: i32) -> Expr {
    match (k, as_num(&u)) {
        (0, _) => num(1.0),
        (1, _) => u,
        (_, Some(a)) if a != 0.0 || k > 0 => folded(a.powi(k), || Expr::Pow(Box::new(u), k)),
        _ => Expr::Pow(Box::new(u), k),
    }
}

fn call(f: Func, u: Expr) -> Expr {
    Expr::Call(f, Box::new(u))
}

// ---------------------------------------------------------------------------

fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

impl Expr {
    pub fn num(x: f64) -> Self {
        Expr::Num(x)
    }

    pub fn var(v: Var) -> Self {
        Expr::Var(v)
    }

    pub fn depends_on(&self, var: Var) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(v) => *v == var,
            Expr::Neg(u) | Expr::Pow(u, _) | Expr::Call(_, u) => u.depends_on(var),
            Expr::Add(u, v) | Expr::Sub(u, v) | Expr::Mul(u, v) | Expr::Div(u, v) => {
                u.depends_on(var) || v.depends_on(var)
            }
        }
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::Var(_) => 1,
            Expr::Neg(u) | Expr::Pow(u, _) | Expr::Call(_, u) => 1 + u.size(),
            Expr::Add(u, v) | Expr::Sub(u, v) | Expr::Mul(u, v) | Expr::Div(u, v) => {
                1 + u.size() + v.size()
            }
        }
    }

    pub fn eval(&self, t: f64, eps: f64) -> Result<f64> {
        let value = match self {
            Expr::Num(x) => *x,
            Expr::Var(Var::T) => t,
            Expr::Var(Var::Eps) => eps,
            Expr::Neg(u) => -u.eval(t, eps)?,
            Expr::Add(u, v) => u.eval(t, eps)? + v.eval(t, eps)?,
            Expr::Sub(u, v) => u.eval(t, eps)? - v.eval(t, eps)?,
            Expr::Mul(u, v) => u.eval(t, eps)? * v.eval(t, eps)?,
            Expr::Div(u, v) => {
                let den = v.eval(t, eps)?;
                if den == 0.0 {
                    return Err(domain(format!("division by zero at t={t}, eps={eps}")));
                }
                u.eval(t, eps)? / den
            }
            Expr::Pow(u, k) => {
                let base = u.eval(t, eps)?;
                if base == 0.0 && *k < 0 {
                    return Err(domain(format!("negative power of zero at t={t}, eps={eps}")));
                }
                base.powi(*k)
            }
            Expr::Call(f, u) => {
                let x = u.eval(t, eps)?;
                match f {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Exp => x.exp(),
                    Func::Log => {
                        if x <= 0.0 {
                            return Err(domain(format!("log of non-positive {x} at t={t}, eps={eps}")));
                        }
                        x.ln()
                    }
                    Func::Sqrt => {
                        if x < 0.0 {
                            return Err(domain(format!("sqrt of negative {x} at t={t}, eps={eps}")));
                        }
                        x.sqrt()
                    }
                }
            }
        };
        if !value.is_finite() {
            return Err(domain(format!("non-finite value at t={t}, eps={eps}")));
        }
        Ok(value)
    }

    /// Exact symbolic derivative with respect to `var`.
    pub fn differentiate(&self, var: Var) -> Expr {
        match self {
            Expr::Num(_) => num(0.0),
            Expr::Var(v) => num(if *v == var { 1.0 } else { 0.0 }),
            Expr::Neg(u) => neg(u.differentiate(var)),
            Expr::Add(u, v) => add(u.differentiate(var), v.differentiate(var)),
            Expr::Sub(u, v) => sub(u.differentiate(var), v.differentiate(var)),
            Expr::Mul(u, v) => add(
                mul(u.differentiate(var), (**v).clone()),
                mul((**u).clone(), v.differentiate(var)),
            ),
            Expr::Div(u, v) => {
                let du = u.differentiate(var);
                let dv = v.differentiate(var);
                if as_num(&dv) == Some(0.0) {
                    return div(du, (**v).clone());
                }
                div(
                    sub(mul(du, (**v).clone()), mul((**u).clone(), dv)),
                    pow((**v).clone(), 2),
                )
            }
            Expr::Pow(u, k) => mul(
                mul(num(*k as f64), pow((**u).clone(), k - 1)),
                u.differentiate(var),
            ),
            Expr::Call(f, u) => {
                let du = u.differentiate(var);
                if as_num(&du) == Some(0.0) {
                    return num(0.0);
                }
                let inner = (**u).clone();
                let outer = match f {
                    Func::Sin => call(Func::Cos, inner),
                    Func::Cos => neg(call(Func::Sin, inner)),
                    Func::Exp => call(Func::Exp, inner),
                    Func::Log => return div(du, inner),
                    Func::Sqrt => {
                        return div(du, mul(num(2.0), call(Func::Sqrt, inner)));
                    }
                };
                mul(outer, du)
            }
        }
    }

    /// `[e, d/dt e, ..., d^order/dt^order e]` at `(t, eps)`.
    pub fn jet_eval(&self, t: f64, eps: f64, order: usize) -> Result<Vec<f64>> {
        ExprJet::new(self, order).eval(t, eps)
    }
}

/// Precomputed tower of t-derivatives `e, e', ..., e^(order)` of one expression.
#[derive(Clone, Debug)]
pub struct ExprJet {
    derivs: Vec<Expr>,
}

impl ExprJet {
    pub fn new(e: &Expr, order: usize) -> Self {
        let mut derivs = Vec::with_capacity(order + 1);
        derivs.push(e.clone());
        for k in 0..order {
            let next = derivs[k].differentiate(Var::T);
            derivs.push(next);
        }
        Self { derivs }
    }

    pub fn order(&self) -> usize {
        self.derivs.len() - 1
    }

    pub fn derivative(&self, k: usize) -> &Expr {
        &self.derivs[k]
    }

    pub fn eval(&self, t: f64, eps: f64) -> Result<Vec<f64>> {
        self.derivs.iter().map(|d| d.eval(t, eps)).collect()
    }
}

// ---------------------------------------------------------------------------
// Printing

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Add(..) | Expr::Sub(..) => 1,
        Expr::Mul(..) | Expr::Div(..) => 2,
        Expr::Neg(_) => 3,
        Expr::Pow(..) => 4,
        Expr::Num(x) if *x < 0.0 || (*x == 0.0 && x.is_sign_negative()) => 3,
        Expr::Num(_) | Expr::Var(_) | Expr::Call(..) => 5,
    }
}

fn write_num(f: &mut fmt::Formatter<'_>, x: f64) -> fmt::Result {
    if x < 0.0 || (x == 0.0 && x.is_sign_negative()) {
        write!(f, "-{:?}", -x)
    } else {
        write!(f, "{x:?}")
    }
}

fn write_operand(f: &mut fmt::Formatter<'_>, e: &Expr, min_prec: u8) -> fmt::Result {
    if prec(e) < min_prec {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(x) => write_num(f, *x),
            Expr::Var(Var::T) => write!(f, "t"),
            Expr::Var(Var::Eps) => write!(f, "eps"),
            Expr::Neg(u) => {
                write!(f, "-")?;
                write_operand(f, u, 4)
            }
            Expr::Add(u, v) => {
                write_operand(f, u, 1)?;
                write!(f, " + ")?;
                write_operand(f, v, 2)
            }
            Expr::Sub(u, v) => {
                write_operand(f, u, 1)?;
                write!(f, " - ")?;
                write_operand(f, v, 2)
            }
            Expr::Mul(u, v) => {
                write_operand(f, u, 2)?;
                write!(f, "*")?;
                write_operand(f, v, 4)
            }
            Expr::Div(u, v) => {
                write_operand(f, u, 2)?;
                write!(f, "/")?;
                write_operand(f, v, 4)
            }
            Expr::Pow(u, k) => {
                write_operand(f, u, 5)?;
                if *k < 0 {
                    write!(f, "^({k})")
                } else {
                    write!(f, "^{k}")
                }
            }
            Expr::Call(func, u) => write!(f, "{}({u})", func.name()),
        }
    }
}

// ---------------------------------------------------------------------------

/// Complex-valued coefficient carried as a pair of real expressions.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexExpr {
    pub re: Expr,
    pub im: Option<Expr>,
}

impl ComplexExpr {
    pub fn real(re: Expr) -> Self {
        Self { re, im: None }
    }

    pub fn new(re: Expr, im: Expr) -> Self {
        Self { re, im: Some(im) }
    }

    pub fn constant(x: f64) -> Self {
        Self::real(Expr::Num(x))
    }

    /// Parse a purely real entry.
    pub fn parse_real(src: &str) -> Result<Self, ParseError> {
        Ok(Self::real(parse(src)?))
    }

    pub fn depends_on(&self, var: Var) -> bool {
        self.re.depends_on(var) || self.im.as_ref().is_some_and(|e| e.depends_on(var))
    }

    pub fn eval(&self, t: f64, eps: f64) -> Result<Complex64> {
        let re = self.re.eval(t, eps)?;
        let im = match &self.im {
            Some(e) => e.eval(t, eps)?,
            None => 0.0,
        };
        Ok(Complex64::new(re, im))
    }

    pub fn jet(&self, order: usize) -> ComplexExprJet {
        ComplexExprJet {
            re: ExprJet::new(&self.re, order),
            im: self.im.as_ref().map(|e| ExprJet::new(e, order)),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ComplexExprJet {
    re: ExprJet,
    im: Option<ExprJet>,
}

impl ComplexExprJet {
    pub fn eval(&self, t: f64, eps: f64) -> Result<Vec<Complex64>> {
        let re = self.re.eval(t, eps)?;
        match &self.im {
            Some(im) => {
                let im = im.eval(t, eps)?;
                Ok(re
                    .into_iter()
                    .zip(im)
                    .map(|(r, i)| Complex64::new(r, i))
                    .collect())
            }
            None => Ok(re.into_iter().map(|r| Complex64::new(r, 0.0)).collect()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(s: &str) -> Expr {
        parse(s).unwrap()
    }

    #[test]
    fn parses_variable() {
        assert_eq!(p("t"), Expr::Var(Var::T));
        assert_eq!(p("eps"), Expr::Var(Var::Eps));
    }

    #[test]
    fn parses_structure() {
        assert!(matches!(p("exp(-t)*sin(t)"), Expr::Mul(..)));
        match p("1 + eps*t^2") {
            Expr::Add(_, rhs) => match *rhs {
                Expr::Mul(_, pw) => assert_eq!(*pw, Expr::Pow(Box::new(Expr::Var(Var::T)), 2)),
                other => panic!("expected product, got {other:?}"),
            },
            other => panic!("expected sum, got {other:?}"),
        }
    }

    #[test]
    fn precedence_and_associativity() {
        // -t^2 is -(t^2)
        assert_eq!(p("-t^2").eval(3.0, 0.0).unwrap(), -9.0);
        // right-assoc power: 2^3^2 = 2^9
        assert_eq!(p("2^3^2").eval(0.0, 0.0).unwrap(), 512.0);
        // left-assoc subtraction and division
        assert_eq!(p("10 - 3 - 2").eval(0.0, 0.0).unwrap(), 5.0);
        assert_eq!(p("12 / 3 / 2").eval(0.0, 0.0).unwrap(), 2.0);
        assert_eq!(p("t^-2").eval(2.0, 0.0).unwrap(), 0.25);
        assert_eq!(p("2*-t").eval(2.0, 0.0).unwrap(), -4.0);
        assert_eq!(p("1e-3*t").eval(2.0, 0.0).unwrap(), 2e-3);
    }

    #[test]
    fn rejects_bad_input() {
        let e = parse("t +").unwrap_err();
        assert_eq!(e.offset, 3);
        assert_eq!(e.kind, ParseErrorKind::UnexpectedEnd);

        let e = parse("1 + x").unwrap_err();
        assert_eq!(e.offset, 4);
        assert_eq!(e.kind, ParseErrorKind::UnknownIdentifier("x".into()));

        assert_eq!(parse("").unwrap_err().kind, ParseErrorKind::Empty);
        assert!(matches!(parse("t^10").unwrap_err().kind, ParseErrorKind::BadExponent(_)));
        assert!(matches!(parse("t^t").unwrap_err().kind, ParseErrorKind::BadExponent(_)));
        assert!(matches!(parse("t^0.5").unwrap_err().kind, ParseErrorKind::BadExponent(_)));
        assert!(matches!(parse("sin t").unwrap_err().kind, ParseErrorKind::UnexpectedToken(_)));
        assert!(matches!(parse("(t").unwrap_err().kind, ParseErrorKind::UnexpectedEnd));
        assert!(matches!(parse("t)").unwrap_err().kind, ParseErrorKind::UnexpectedToken(_)));
        assert!(matches!(parse("t # 1").unwrap_err().kind, ParseErrorKind::UnexpectedChar('#')));
        assert!(matches!(parse("1..2").unwrap_err().kind, ParseErrorKind::BadNumber(_)));
        assert!(matches!(parse("+t").unwrap_err().kind, ParseErrorKind::UnexpectedToken(_)));
    }

    #[test]
    fn derivative_examples() {
        let d = p("t^2").differentiate(Var::T);
        assert_eq!(d.eval(3.0, 0.0).unwrap(), 6.0);

        let d = p("sin(t)").differentiate(Var::Eps);
        assert_eq!(d, Expr::Num(0.0));

        // central difference oracle, h = 1e-6
        let e = p("exp(eps*t)");
        let h = 1e-6;
        let fd = (e.eval(1.0 + h, 0.5).unwrap() - e.eval(1.0 - h, 0.5).unwrap()) / (2.0 * h);
        let exact = e.differentiate(Var::T).eval(1.0, 0.5).unwrap();
        assert!((exact - fd).abs() <= 1e-8 * fd.abs());
        assert!((exact - 0.5 * 0.5f64.exp()).abs() < 1e-15);
    }

    #[test]
    fn jet_examples() {
        assert_eq!(p("t^3").jet_eval(2.0, 0.0, 2).unwrap(), vec![8.0, 12.0, 12.0]);
        assert_eq!(p("1").jet_eval(0.3, 7.0, 3).unwrap(), vec![1.0, 0.0, 0.0, 0.0]);

        let jet = p("exp(-t)").jet_eval(1.0, 0.0, 2).unwrap();
        let e1 = (-1.0f64).exp();
        // finite-difference oracle for the first two layers
        let h = 1e-5;
        let f = |t: f64| (-t).exp();
        let d1 = (f(1.0 + h) - f(1.0 - h)) / (2.0 * h);
        let d2 = (f(1.0 + h) - 2.0 * f(1.0) + f(1.0 - h)) / (h * h);
        assert!((jet[0] - e1).abs() < 1e-15);
        assert!((jet[1] - d1).abs() < 1e-9);
        assert!((jet[2] - d2).abs() < 1e-5);
        assert!((jet[1] + e1).abs() < 1e-15 && (jet[2] - e1).abs() < 1e-15);
    }

    #[test]
    fn domain_errors_surface_at_evaluation() {
        assert!(matches!(p("log(t)").eval(0.0, 0.0), Err(Error::Domain(_))));
        assert!(matches!(p("sqrt(t)").eval(-1.0, 0.0), Err(Error::Domain(_))));
        assert!(matches!(p("1/t").eval(0.0, 0.0), Err(Error::Domain(_))));
        assert!(matches!(p("t^-1").eval(0.0, 0.0), Err(Error::Domain(_))));
        assert!(matches!(p("sqrt(t)").jet_eval(0.0, 0.0, 1), Err(Error::Domain(_))));
    }

    #[test]
    fn simplification_is_light() {
        assert_eq!(p("3*t").differentiate(Var::T), Expr::Num(3.0));
        assert_eq!(p("t + eps").differentiate(Var::T), Expr::Num(1.0));
        assert_eq!(p("5").differentiate(Var::T), Expr::Num(0.0));
    }

    #[test]
    fn complex_entries() {
        let z = ComplexExpr::new(p("t"), p("-eps"));
        assert_eq!(z.eval(2.0, 3.0).unwrap(), Complex64::new(2.0, -3.0));
        let jet = z.jet(1).eval(2.0, 3.0).unwrap();
        assert_eq!(jet[1], Complex64::new(1.0, 0.0));
    }

    const CORPUS: &[&str] = &[
        "t",
        "t^3 - 2*t + 1",
        "exp(-t)*sin(t)",
        "1 + eps*t^2",
        "cos(eps*t)/(2 + t)",
        "sqrt(1 + t^2)",
        "log(2 + sin(t))",
        "exp(eps*t)",
        "t^-2 + eps",
        "-(t - eps)^3/(1 + t^2)",
    ];

    fn corpus_strategy() -> impl Strategy<Value = &'static str> {
        prop::sample::select(CORPUS)
    }

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    proptest! {
        #[test]
        fn jet_layers_match_finite_differences(
            src in corpus_strategy(),
            t in 0.5f64..2.0,
            eps in 0.0f64..1.0,
        ) {
            let e = p(src);
            let jet = ExprJet::new(&e, 4);
            let h = 1e-5;
            for k in 1..=4 {
                let lower = jet.derivative(k - 1);
                let fd = (lower.eval(t + h, eps).unwrap() - lower.eval(t - h, eps).unwrap()) / (2.0 * h);
                let exact = jet.derivative(k).eval(t, eps).unwrap();
                prop_assert!(rel_close(exact, fd, 1e-6), "{src} k={k}: {exact} vs {fd}");
            }
        }

        #[test]
        fn differentiation_is_linear(
            i in 0..CORPUS.len(),
            j in 0..CORPUS.len(),
            alpha in -3.0f64..3.0,
            beta in -3.0f64..3.0,
            t in 0.5f64..2.0,
            eps in 0.0f64..1.0,
        ) {
            let u = p(CORPUS[i]);
            let v = p(CORPUS[j]);
            let combo = Expr::Add(
                Box::new(Expr::Mul(Box::new(Expr::Num(alpha)), Box::new(u.clone()))),
                Box::new(Expr::Mul(Box::new(Expr::Num(beta)), Box::new(v.clone()))),
            );
            let jc = combo.jet_eval(t, eps, 3).unwrap();
            let ju = u.jet_eval(t, eps, 3).unwrap();
            let jv = v.jet_eval(t, eps, 3).unwrap();
            for k in 0..=3 {
                prop_assert!(rel_close(jc[k], alpha * ju[k] + beta * jv[k], 1e-12));
            }
        }

        #[test]
        fn print_parse_round_trip(
            src in corpus_strategy(),
            order in 0usize..3,
            t in 0.5f64..2.0,
            eps in 0.0f64..1.0,
        ) {
            let e = ExprJet::new(&p(src), order).derivative(order).clone();
            let printed = e.to_string();
            let back = parse(&printed).unwrap();
            let a = e.eval(t, eps).unwrap();
            let b = back.eval(t, eps).unwrap();
            prop_assert!(a == b || rel_close(a, b, 1e-15), "{printed}: {a} vs {b}");
        }
    }
}
