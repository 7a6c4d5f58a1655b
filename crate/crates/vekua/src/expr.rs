//! A small complex expression language over `z`, closed under the Wirtinger
//! derivatives `dbar = (d/dx + i d/dy)/2` and `dz = (d/dx - i d/dy)/2`.
//!
//! Grammar (lowest precedence first):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' uint)?
//! primary := number | number 'i' | ident | func '(' expr ')' | '(' expr ')'
//! ident   := z | zbar | absz | w | absw | phi | i | pi
//! func    := conj | exp | log | re | im
//! ```
//!
//! `w = z - a`, `absw = |z - a|` and `phi = arg(z - a)` in `(-pi, pi]` depend on the
//! singular point `a`, which is bound at evaluation time.

use num_complex::Complex64;
use std::f64::consts::PI;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    Z,
    Zbar,
    AbsZ,
    W,
    AbsW,
    Phi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Conj,
    Exp,
    Log,
    Re,
    Im,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(Complex64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("parse error at {pos}: {msg}")]
pub struct ParseError {
    /// Byte offset into the source text.
    pub pos: usize,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero at z = {0}")]
    DivisionByZero(Complex64),
    #[error("log of zero at z = {0}")]
    LogOfZero(Complex64),
    #[error("phi is undefined at the singular point z = {0}")]
    PhiAtSingularPoint(Complex64),
    #[error("non-finite value at z = {0}")]
    NonFinite(Complex64),
}

impl Var {
    fn name(self) -> &'static str {
        match self {
            Var::Z => "z",
            Var::Zbar => "zbar",
            Var::AbsZ => "absz",
            Var::W => "w",
            Var::AbsW => "absw",
            Var::Phi => "phi",
        }
    }
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Conj => "conj",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Re => "re",
            Func::Im => "im",
        }
    }

    fn from_name(s: &str) -> Option<Func> {
        Some(match s {
            "conj" => Func::Conj,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "re" => Func::Re,
            "im" => Func::Im,
            _ => return None,
        })
    }

    fn apply(self, x: Complex64) -> Complex64 {
        match self {
            Func::Conj => x.conj(),
            Func::Exp => x.exp(),
            Func::Log => x.ln(),
            Func::Re => Complex64::new(x.re, 0.0),
            Func::Im => Complex64::new(x.im, 0.0),
        }
    }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

// ---------------------------------------------------------------------------
// constructors

impl Expr {
    pub fn num(re: f64, im: f64) -> Expr {
        Expr::Num(c(re, im))
    }

    pub fn zero() -> Expr {
        Expr::num(0.0, 0.0)
    }

    pub fn one() -> Expr {
        Expr::num(1.0, 0.0)
    }

    pub fn var(v: Var) -> Expr {
        Expr::Var(v)
    }

    fn as_num(&self) -> Option<Complex64> {
        match self {
            Expr::Num(v) => Some(*v),
            _ => None,
        }
    }

    fn is_zero(&self) -> bool {
        self.as_num() == Some(c(0.0, 0.0))
    }

    fn is_one(&self) -> bool {
        self.as_num() == Some(c(1.0, 0.0))
    }

    /// True when the expression has no free variables.
    pub fn is_constant(&self) -> bool {
        match self {
            Expr::Num(_) => true,
            Expr::Var(_) => false,
            Expr::Neg(x) | Expr::Pow(x, _) | Expr::Call(_, x) => x.is_constant(),
            Expr::Add(x, y) | Expr::Sub(x, y) | Expr::Mul(x, y) | Expr::Div(x, y) => {
                x.is_constant() && y.is_constant()
            }
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::Var(_) => 1,
            Expr::Neg(x) | Expr::Pow(x, _) | Expr::Call(_, x) => 1 + x.node_count(),
            Expr::Add(x, y) | Expr::Sub(x, y) | Expr::Mul(x, y) | Expr::Div(x, y) => {
                1 + x.node_count() + y.node_count()
            }
        }
    }
}

/// Constructors that fold numeric operands and drop additive zeros and
/// multiplicative ones. The parser only uses the numeric folding.
pub mod build {
    use super::*;

    pub fn neg(x: Expr) -> Expr {
        match x {
            Expr::Num(v) => Expr::Num(-v),
            Expr::Neg(y) => *y,
            x => Expr::Neg(Box::new(x)),
        }
    }

    pub fn add(x: Expr, y: Expr) -> Expr {
        if x.is_zero() {
            return y;
        }
        if y.is_zero() {
            return x;
        }
        match (x.as_num(), y.as_num()) {
            (Some(p), Some(q)) => Expr::Num(p + q),
            _ => Expr::Add(Box::new(x), Box::new(y)),
        }
    }

    pub fn sub(x: Expr, y: Expr) -> Expr {
        if y.is_zero() {
            return x;
        }
        if x.is_zero() {
            return neg(y);
        }
        match (x.as_num(), y.as_num()) {
            (Some(p), Some(q)) => Expr::Num(p - q),
            _ => Expr::Sub(Box::new(x), Box::new(y)),
        }
    }

    pub fn mul(x: Expr, y: Expr) -> Expr {
        if x.is_zero() || y.is_zero() {
            return Expr::zero();
        }
        if x.is_one() {
            return y;
        }
        if y.is_one() {
            return x;
        }
        match (x.as_num(), y.as_num()) {
            (Some(p), Some(q)) => Expr::Num(p * q),
            _ => Expr::Mul(Box::new(x), Box::new(y)),
        }
    }

    pub fn div(x: Expr, y: Expr) -> Expr {
        if y.is_one() {
            return x;
        }
        if x.is_zero() && !y.is_zero() {
            return Expr::zero();
        }
        match (x.as_num(), y.as_num()) {
            (Some(p), Some(q)) if q != c(0.0, 0.0) => Expr::Num(p / q),
            _ => Expr::Div(Box::new(x), Box::new(y)),
        }
    }

    pub fn pow(x: Expr, n: u32) -> Expr {
        match n {
            0 => Expr::one(),
            1 => x,
            _ => match x.as_num() {
                Some(p) => Expr::Num(p.powu(n)),
                None => Expr::Pow(Box::new(x), n),
            },
        }
    }

    pub fn call(f: Func, x: Expr) -> Expr {
        match (f, x.as_num()) {
            (Func::Conj | Func::Re | Func::Im, Some(p)) => Expr::Num(f.apply(p)),
            (Func::Conj, None) => match x {
                Expr::Call(Func::Conj, y) => *y,
                x => Expr::Call(f, Box::new(x)),
            },
            _ => Expr::Call(f, Box::new(x)),
        }
    }

    pub fn conj(x: Expr) -> Expr {
        call(Func::Conj, x)
    }

    pub fn scale(k: Complex64, x: Expr) -> Expr {
        mul(Expr::Num(k), x)
    }
}

// ---------------------------------------------------------------------------
// parsing

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num { value: f64, imag: bool, integer: bool },
    Ident(String),
    Op(char),
    LParen,
    RParen,
    End,
}

struct Lexer<'s> {
    src: &'s str,
    bytes: &'s [u8],
    pos: usize,
}

impl<'s> Lexer<'s> {
    fn tokens(src: &'s str) -> Result<Vec<(usize, Tok)>, ParseError> {
        let mut lx = Lexer { src, bytes: src.as_bytes(), pos: 0 };
        let mut out = Vec::new();
        loop {
            let (p, t) = lx.next()?;
            let end = t == Tok::End;
            out.push((p, t));
            if end {
                return Ok(out);
            }
        }
    }

    fn peek(&self, k: usize) -> Option<u8> {
        self.bytes.get(self.pos + k).copied()
    }

    fn next(&mut self) -> Result<(usize, Tok), ParseError> {
        while matches!(self.peek(0), Some(b) if b.is_ascii_whitespace()) {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(b) = self.peek(0) else {
            return Ok((start, Tok::End));
        };
        if b.is_ascii_digit() || (b == b'.' && self.peek(1).is_some_and(|d| d.is_ascii_digit())) {
            return self.number(start);
        }
        if b.is_ascii_alphabetic() || b == b'_' {
            while matches!(self.peek(0), Some(b) if b.is_ascii_alphanumeric() || b == b'_') {
                self.pos += 1;
            }
            return Ok((start, Tok::Ident(self.src[start..self.pos].to_string())));
        }
        self.pos += 1;
        let t = match b {
            b'+' | b'-' | b'*' | b'/' | b'^' => Tok::Op(b as char),
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            _ => {
                let ch = self.src[start..].chars().next().unwrap_or('?');
                return Err(ParseError { pos: start, msg: format!("unexpected character '{ch}'") });
            }
        };
        Ok((start, t))
    }

    fn number(&mut self, start: usize) -> Result<(usize, Tok), ParseError> {
        let mut integer = true;
        while matches!(self.peek(0), Some(b) if b.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.peek(0) == Some(b'.') {
            integer = false;
            self.pos += 1;
            while matches!(self.peek(0), Some(b) if b.is_ascii_digit()) {
                self.pos += 1;
            }
        }
        if matches!(self.peek(0), Some(b'e' | b'E')) {
            let sign = matches!(self.peek(1), Some(b'+' | b'-')) as usize;
            if self.peek(1 + sign).is_some_and(|d| d.is_ascii_digit()) {
                integer = false;
                self.pos += 1 + sign;
                while matches!(self.peek(0), Some(b) if b.is_ascii_digit()) {
                    self.pos += 1;
                }
            }
        }
        let text = &self.src[start..self.pos];
        let value: f64 = text
            .parse()
            .map_err(|_| ParseError { pos: start, msg: format!("bad number '{text}'") })?;
        if !value.is_finite() {
            return Err(ParseError { pos: start, msg: format!("number '{text}' overflows") });
        }
        let mut imag = false;
        if self.peek(0) == Some(b'i')
            && !matches!(self.peek(1), Some(b) if b.is_ascii_alphanumeric() || b == b'_')
        {
            imag = true;
            self.pos += 1;
        }
        if matches!(self.peek(0), Some(b) if b.is_ascii_alphabetic() || b == b'_') {
            return Err(ParseError {
                pos: self.pos,
                msg: "identifier directly after a number; use '*'".into(),
            });
        }
        Ok((start, Tok::Num { value, imag, integer }))
    }
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].1
    }

    fn pos(&self) -> usize {
        self.toks[self.at].0
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].1.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError { pos: self.pos(), msg: msg.into() })
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Tok::Op('+') => {
                    self.bump();
                    lhs = fold(Expr::Add(Box::new(lhs), Box::new(self.term()?)));
                }
                Tok::Op('-') => {
                    self.bump();
                    lhs = fold(Expr::Sub(Box::new(lhs), Box::new(self.term()?)));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Tok::Op('*') => {
                    self.bump();
                    lhs = fold(Expr::Mul(Box::new(lhs), Box::new(self.unary()?)));
                }
                Tok::Op('/') => {
                    self.bump();
                    lhs = fold(Expr::Div(Box::new(lhs), Box::new(self.unary()?)));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Op('-') {
            self.bump();
            return Ok(fold(Expr::Neg(Box::new(self.unary()?))));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if *self.peek() != Tok::Op('^') {
            return Ok(base);
        }
        self.bump();
        match self.peek().clone() {
            Tok::Num { value, imag: false, integer: true } if value <= u32::MAX as f64 => {
                self.bump();
                Ok(fold(Expr::Pow(Box::new(base), value as u32)))
            }
            Tok::Op('-') => self.err("negative exponents are not allowed; divide instead"),
            _ => self.err("exponent must be a non-negative integer literal"),
        }
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let pos = self.pos();
        match self.bump() {
            Tok::Num { value, imag, .. } => {
                Ok(if imag { Expr::num(0.0, value) } else { Expr::num(value, 0.0) })
            }
            Tok::Ident(name) => {
                if let Some(f) = Func::from_name(&name) {
                    if *self.peek() != Tok::LParen {
                        return self.err(format!("expected '(' after function '{name}'"));
                    }
                    self.bump();
                    let arg = self.expr()?;
                    if *self.peek() != Tok::RParen {
                        return self.err("expected ')'");
                    }
                    self.bump();
                    return Ok(fold(Expr::Call(f, Box::new(arg))));
                }
                Ok(match name.as_str() {
                    "z" => Expr::Var(Var::Z),
                    "zbar" => Expr::Var(Var::Zbar),
                    "absz" => Expr::Var(Var::AbsZ),
                    "w" => Expr::Var(Var::W),
                    "absw" => Expr::Var(Var::AbsW),
                    "phi" => Expr::Var(Var::Phi),
                    "i" => Expr::num(0.0, 1.0),
                    "pi" => Expr::num(PI, 0.0),
                    _ => {
                        return Err(ParseError {
                            pos,
                            msg: format!("unknown identifier '{name}'"),
                        })
                    }
                })
            }
            Tok::LParen => {
                let e = self.expr()?;
                if *self.peek() != Tok::RParen {
                    return self.err("expected ')'");
                }
                self.bump();
                Ok(e)
            }
            Tok::End => Err(ParseError { pos, msg: "unexpected end of input".into() }),
            t => Err(ParseError { pos, msg: format!("unexpected token {t:?}") }),
        }
    }
}

/// Fold a node whose operands are all numeric literals.
fn fold(e: Expr) -> Expr {
    match &e {
        Expr::Neg(x) => {
            if let Some(p) = x.as_num() {
                return Expr::Num(-p);
            }
        }
        Expr::Add(x, y) | Expr::Sub(x, y) | Expr::Mul(x, y) | Expr::Div(x, y) => {
            if let (Some(p), Some(q)) = (x.as_num(), y.as_num()) {
                let v = match &e {
                    Expr::Add(..) => p + q,
                    Expr::Sub(..) => p - q,
                    Expr::Mul(..) => p * q,
                    _ if q == c(0.0, 0.0) => return e,
                    _ => p / q,
                };
                if v.re.is_finite() && v.im.is_finite() {
                    return Expr::Num(v);
                }
            }
        }
        Expr::Pow(x, n) => {
            if let Some(p) = x.as_num() {
                let v = p.powu(*n);
                if v.re.is_finite() && v.im.is_finite() {
                    return Expr::Num(v);
                }
            }
        }
        _ => {}
    }
    e
}

/// Parse an expression.
pub fn parse(text: &str) -> Result<Expr, ParseError> {
    let toks = Lexer::tokens(text)?;
    let mut p = Parser { toks, at: 0 };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return p.err(format!("unexpected trailing input {:?}", p.peek()));
    }
    Ok(e)
}

impl std::str::FromStr for Expr {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

// ---------------------------------------------------------------------------
// printing

const LVL_SUM: u8 = 1;
const LVL_PROD: u8 = 2;
const LVL_NEG: u8 = 3;
const LVL_POW: u8 = 4;
const LVL_ATOM: u8 = 5;

fn num_level(v: Complex64) -> u8 {
    if v.re != 0.0 && v.im != 0.0 {
        LVL_SUM
    } else if v.re < 0.0 || v.im < 0.0 {
        LVL_NEG
    } else {
        LVL_ATOM
    }
}

impl Expr {
    fn level(&self) -> u8 {
        match self {
            Expr::Num(v) => num_level(*v),
            Expr::Var(_) | Expr::Call(..) => LVL_ATOM,
            Expr::Neg(_) => LVL_NEG,
            Expr::Add(..) | Expr::Sub(..) => LVL_SUM,
            Expr::Mul(..) | Expr::Div(..) => LVL_PROD,
            Expr::Pow(..) => LVL_POW,
        }
    }

    fn write_at(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        if self.level() < min {
            write!(f, "(")?;
            self.write_at(f, 0)?;
            return write!(f, ")");
        }
        match self {
            Expr::Num(v) => write_num(f, *v),
            Expr::Var(v) => write!(f, "{}", v.name()),
            Expr::Call(func, x) => {
                write!(f, "{}(", func.name())?;
                x.write_at(f, 0)?;
                write!(f, ")")
            }
            Expr::Neg(x) => {
                write!(f, "-")?;
                x.write_at(f, LVL_NEG)
            }
            Expr::Add(x, y) | Expr::Sub(x, y) => {
                x.write_at(f, LVL_SUM)?;
                write!(f, "{}", if matches!(self, Expr::Add(..)) { " + " } else { " - " })?;
                y.write_at(f, LVL_SUM + 1)
            }
            Expr::Mul(x, y) | Expr::Div(x, y) => {
                x.write_at(f, LVL_PROD)?;
                write!(f, "{}", if matches!(self, Expr::Mul(..)) { "*" } else { "/" })?;
                y.write_at(f, LVL_PROD + 1)
            }
            Expr::Pow(x, n) => {
                x.write_at(f, LVL_ATOM)?;
                write!(f, "^{n}")
            }
        }
    }
}

fn write_num(f: &mut fmt::Formatter<'_>, v: Complex64) -> fmt::Result {
    match (v.re != 0.0, v.im != 0.0) {
        (_, false) => write!(f, "{}", v.re),
        (false, true) => write!(f, "{}i", v.im),
        (true, true) => {
            let sign = if v.im < 0.0 { '-' } else { '+' };
            write!(f, "{}{}{}i", v.re, sign, v.im.abs())
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_at(f, 0)
    }
}

// ---------------------------------------------------------------------------
// evaluation

fn finite(v: Complex64) -> bool {
    v.re.is_finite() && v.im.is_finite()
}

/// Principal argument in `(-pi, pi]`.
pub fn arg_half_open(w: Complex64) -> f64 {
    let t = w.im.atan2(w.re);
    if t == -PI {
        PI
    } else {
        t
    }
}

impl Expr {
    /// Evaluate at `z` with the singular point bound to `a`.
    pub fn eval(&self, z: Complex64, a: Complex64) -> Result<Complex64, EvalError> {
        let v = self.eval_raw(z, a)?;
        if finite(v) {
            Ok(v)
        } else {
            Err(EvalError::NonFinite(z))
        }
    }

    fn eval_raw(&self, z: Complex64, a: Complex64) -> Result<Complex64, EvalError> {
        Ok(match self {
            Expr::Num(v) => *v,
            Expr::Var(v) => match v {
                Var::Z => z,
                Var::Zbar => z.conj(),
                Var::AbsZ => c(z.norm(), 0.0),
                Var::W => z - a,
                Var::AbsW => c((z - a).norm(), 0.0),
                Var::Phi => {
                    if z == a {
                        return Err(EvalError::PhiAtSingularPoint(z));
                    }
                    c(arg_half_open(z - a), 0.0)
                }
            },
            Expr::Neg(x) => -x.eval_raw(z, a)?,
            Expr::Add(x, y) => x.eval_raw(z, a)? + y.eval_raw(z, a)?,
            Expr::Sub(x, y) => x.eval_raw(z, a)? - y.eval_raw(z, a)?,
            Expr::Mul(x, y) => x.eval_raw(z, a)? * y.eval_raw(z, a)?,
            Expr::Div(x, y) => {
                let p = x.eval_raw(z, a)?;
                let q = y.eval_raw(z, a)?;
                if q == c(0.0, 0.0) {
                    return Err(EvalError::DivisionByZero(z));
                }
                p / q
            }
            Expr::Pow(x, n) => x.eval_raw(z, a)?.powu(*n),
            Expr::Call(func, x) => {
                let p = x.eval_raw(z, a)?;
                if *func == Func::Log && p == c(0.0, 0.0) {
                    return Err(EvalError::LogOfZero(z));
                }
                func.apply(p)
            }
        })
    }

    /// Evaluate at every point.
    pub fn eval_many(&self, pts: &[Complex64], a: Complex64) -> Result<Vec<Complex64>, EvalError> {
        pts.iter().map(|&z| self.eval(z, a)).collect()
    }
}

// ---------------------------------------------------------------------------
// Wirtinger derivatives

impl Expr {
    /// Symbolic `d/dzbar`.
    pub fn dbar(&self) -> Expr {
        self.wirtinger().1
    }

    /// Symbolic `d/dz`.
    pub fn dz(&self) -> Expr {
        self.wirtinger().0
    }

    /// Both derivatives `(dz, dbar)`; each rule for `dbar` needs `dz` of the operands
    /// through conjugation.
    pub fn wirtinger(&self) -> (Expr, Expr) {
        use build::*;
        let half = |e: Expr| scale(c(0.5, 0.0), e);
        match self {
            Expr::Num(_) => (Expr::zero(), Expr::zero()),
            Expr::Var(v) => match v {
                Var::Z | Var::W => (Expr::one(), Expr::zero()),
                Var::Zbar => (Expr::zero(), Expr::one()),
                Var::AbsZ => (
                    div(Expr::Var(Var::Zbar), scale(c(2.0, 0.0), Expr::Var(Var::AbsZ))),
                    div(Expr::Var(Var::Z), scale(c(2.0, 0.0), Expr::Var(Var::AbsZ))),
                ),
                Var::AbsW => (
                    div(conj(Expr::Var(Var::W)), scale(c(2.0, 0.0), Expr::Var(Var::AbsW))),
                    div(Expr::Var(Var::W), scale(c(2.0, 0.0), Expr::Var(Var::AbsW))),
                ),
                Var::Phi => (
                    div(Expr::num(0.0, -0.5), Expr::Var(Var::W)),
                    div(Expr::num(0.0, 0.5), conj(Expr::Var(Var::W))),
                ),
            },
            Expr::Neg(x) => {
                let (dz, db) = x.wirtinger();
                (neg(dz), neg(db))
            }
            Expr::Add(x, y) | Expr::Sub(x, y) => {
                let (xz, xb) = x.wirtinger();
                let (yz, yb) = y.wirtinger();
                if matches!(self, Expr::Add(..)) {
                    (add(xz, yz), add(xb, yb))
                } else {
                    (sub(xz, yz), sub(xb, yb))
                }
            }
            Expr::Mul(x, y) => {
                let (xz, xb) = x.wirtinger();
                let (yz, yb) = y.wirtinger();
                let x = (**x).clone();
                let y = (**y).clone();
                (
                    add(mul(xz, y.clone()), mul(x.clone(), yz)),
                    add(mul(xb, y), mul(x, yb)),
                )
            }
            Expr::Div(x, y) => {
                let (xz, xb) = x.wirtinger();
                let (yz, yb) = y.wirtinger();
                let x = (**x).clone();
                let y = (**y).clone();
                let quot = |dx: Expr, dy: Expr| {
                    div(
                        sub(mul(dx, y.clone()), mul(x.clone(), dy)),
                        pow(y.clone(), 2),
                    )
                };
                (quot(xz, yz), quot(xb, yb))
            }
            Expr::Pow(_, 0) => (Expr::zero(), Expr::zero()),
            Expr::Pow(x, n) => {
                let (xz, xb) = x.wirtinger();
                let base = |d: Expr| mul(scale(c(*n as f64, 0.0), pow((**x).clone(), n - 1)), d);
                (base(xz), base(xb))
            }
            Expr::Call(func, x) => {
                let (xz, xb) = x.wirtinger();
                let inner = (**x).clone();
                match func {
                    Func::Conj => (conj(xb), conj(xz)),
                    Func::Exp => {
                        let e = self.clone();
                        (mul(e.clone(), xz), mul(e, xb))
                    }
                    Func::Log => (div(xz, inner.clone()), div(xb, inner)),
                    Func::Re => (
                        half(add(xz.clone(), conj(xb.clone()))),
                        half(add(xb, conj(xz))),
                    ),
                    Func::Im => {
                        let k = c(0.0, -0.5);
                        (
                            scale(k, sub(xz.clone(), conj(xb.clone()))),
                            scale(k, sub(xb, conj(xz))),
                        )
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Expr {
        parse(s).unwrap()
    }

    fn z0() -> Complex64 {
        c(0.0, 0.0)
    }

    #[test]
    fn parses_examples() {
        assert_eq!(
            p("z*conj(z)"),
            Expr::Mul(
                Box::new(Expr::Var(Var::Z)),
                Box::new(Expr::Call(Func::Conj, Box::new(Expr::Var(Var::Z))))
            )
        );
        assert_eq!(p("1+2i"), Expr::num(1.0, 2.0));
        assert!(parse("z^-1").is_err());
    }

    #[test]
    fn reports_positions() {
        let e = parse("z + foo").unwrap_err();
        assert_eq!(e.pos, 4);
        assert!(e.msg.contains("foo"));
        let e = parse("z + (1").unwrap_err();
        assert_eq!(e.pos, 6);
        assert!(parse("z^2.5").is_err());
        assert!(parse("2z").is_err());
        assert!(parse("").is_err());
        assert!(parse("z $").is_err());
        assert!(parse("exp z").is_err());
    }

    #[test]
    fn precedence() {
        let e = p("1 + 2*z^2");
        assert_eq!(e.eval(c(1.0, 0.0), z0()).unwrap(), c(3.0, 0.0));
        let e = p("-z^2");
        assert_eq!(e.eval(c(2.0, 0.0), z0()).unwrap(), c(-4.0, 0.0));
        let e = p("2/4/2");
        assert_eq!(e, Expr::num(0.25, 0.0));
        let e = p("z - z - z");
        assert_eq!(e.eval(c(1.0, 0.0), z0()).unwrap(), c(-1.0, 0.0));
    }

    #[test]
    fn eval_examples() {
        let e = p("z*conj(z)");
        assert_eq!(e.eval(c(1.0, 1.0), z0()).unwrap(), c(2.0, 0.0));
        assert_eq!(p("absz").eval(c(3.0, 4.0), z0()).unwrap(), c(5.0, 0.0));
        let v = p("exp(-2i*phi)").eval(c(0.0, 1.0), z0()).unwrap();
        assert!((v - c(-1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn eval_uses_singular_point() {
        let a = c(0.5, 0.0);
        assert_eq!(p("w").eval(c(1.0, 1.0), a).unwrap(), c(0.5, 1.0));
        assert_eq!(p("absw").eval(c(0.5, 2.0), a).unwrap(), c(2.0, 0.0));
        assert_eq!(p("phi").eval(c(-1.0, 0.0), a).unwrap(), c(PI, 0.0));
        assert_eq!(p("phi").eval(c(-1.0, -0.0), a).unwrap(), c(PI, 0.0));
    }

    #[test]
    fn eval_errors() {
        assert_eq!(p("1/z").eval(z0(), z0()), Err(EvalError::DivisionByZero(z0())));
        assert_eq!(p("log(absz)").eval(z0(), z0()), Err(EvalError::LogOfZero(z0())));
        assert!(p("phi").eval(z0(), z0()).is_err());
        assert!(p("exp(1000)").eval(z0(), z0()).is_err());
        assert_eq!(p("1/0"), Expr::Div(Box::new(Expr::one()), Box::new(Expr::zero())));
    }

    #[test]
    fn dbar_examples() {
        assert_eq!(p("conj(z)").dbar(), Expr::one());
        assert_eq!(p("z").dbar(), Expr::zero());
        assert_eq!(p("z*conj(z)").dbar(), Expr::Var(Var::Z));
        assert_eq!(p("zbar").dz(), Expr::zero());
    }

    #[test]
    fn print_examples() {
        assert_eq!(p("z*conj(z)").to_string(), "z*conj(z)");
        assert_eq!(p("1+2i").to_string(), "1+2i");
        assert_eq!(p("(z+1)*(z-1)").to_string(), "(z + 1)*(z - 1)");
        assert_eq!(p("z-(z-z)").to_string(), "z - (z - z)");
        assert_eq!(p("(-z)^2").to_string(), "(-z)^2");
        assert_eq!(p("-2*z").to_string(), "-2*z");
        assert_eq!(p("z*(-1+2i)").to_string(), "z*(-1+2i)");
    }

    #[test]
    fn print_parse_fixpoint_on_corpus() {
        for s in [
            "z*conj(z)",
            "conj(z)*absz",
            "exp(-2i*phi)*(0.3 - 0.1i)",
            "re(z)/absz + im(w^3)",
            "log(absw) - -z",
            "((z))^3",
            "1e-3*z/(1+zbar)",
            "-(z - 1)/(z*z) - pi",
        ] {
            let e = parse(s).unwrap();
            let printed = e.to_string();
            assert_eq!(parse(&printed).unwrap(), e, "{s} -> {printed}");
        }
    }
}
