//! Expression mini-language for configuration fields.
//!
//! Grammar (whitespace insensitive):
//!
//! ```text
//! expr  := term (("+" | "-") term)*
//! term  := unary (("*" | "/") unary)*
//! unary := ("+" | "-") unary | power
//! power := atom ("^" unary)?
//! atom  := number | name | name "(" expr ")" | "(" expr ")"
//! ```
//!
//! Names: `pi`; macro variables `x` (= `x1`), `x2`, `t`; cell variables `y` (= `y1`), `y2`,
//! `s` (= `s1`), `s2`, ... `s9`. Functions: `sin cos tan exp ln sqrt abs tanh`.
//!
//! Flux coefficients must additionally reduce to a [`TrigSum`]: constants plus terms
//! `c * sin(2*pi*(n.y + l.s) + phase)` / `c * cos(...)` with integer `n`, `l`. Products and small
//! integer powers of such sums are expanded, so e.g. `2 + sin(2*pi*y)*cos(2*pi*s)` is accepted.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("expression {expr:?} uses variable {var} which is not allowed here")]
    Variable { expr: String, var: String },
    #[error("expression {expr:?} is not a periodic trigonometric sum: {msg}")]
    NotPeriodic { expr: String, msg: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    /// Zero-based macro coordinate.
    X(usize),
    T,
    /// Zero-based cell coordinate.
    Y(usize),
    /// Zero-based temporal cell coordinate.
    S(usize),
}

impl Var {
    pub fn is_cell(&self) -> bool {
        matches!(self, Var::Y(_) | Var::S(_))
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::X(i) => write!(f, "x{}", i + 1),
            Var::T => f.write_str("t"),
            Var::Y(i) => write!(f, "y{}", i + 1),
            Var::S(j) => write!(f, "s{}", j + 1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
    Abs,
    Tanh,
}

impl Func {
    fn lookup(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "ln" | "log" => Func::Ln,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "tanh" => Func::Tanh,
            _ => return None,
        })
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Tan => v.tan(),
            Func::Exp => v.exp(),
            Func::Ln => v.ln(),
            Func::Sqrt => v.sqrt(),
            Func::Abs => v.abs(),
            Func::Tanh => v.tanh(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Num(f64),
    Var(Var),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

/// Variable values for evaluation. Missing coordinates read as zero.
#[derive(Clone, Copy, Debug, Default)]
pub struct Point<'a> {
    pub x: &'a [f64],
    pub t: f64,
    pub y: &'a [f64],
    pub s: &'a [f64],
}

impl Node {
    fn eval(&self, p: &Point<'_>) -> f64 {
        match self {
            Node::Num(v) => *v,
            Node::Var(var) => match *var {
                Var::X(i) => p.x.get(i).copied().unwrap_or(0.0),
                Var::T => p.t,
                Var::Y(i) => p.y.get(i).copied().unwrap_or(0.0),
                Var::S(j) => p.s.get(j).copied().unwrap_or(0.0),
            },
            Node::Neg(a) => -a.eval(p),
            Node::Bin(op, a, b) => {
                let (a, b) = (a.eval(p), b.eval(p));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => a.powf(b),
                }
            }
            Node::Call(f, a) => f.apply(a.eval(p)),
        }
    }

    fn collect_vars(&self, out: &mut Vec<Var>) {
        match self {
            Node::Num(_) => {}
            Node::Var(v) => {
                if !out.contains(v) {
                    out.push(*v);
                }
            }
            Node::Neg(a) | Node::Call(_, a) => a.collect_vars(out),
            Node::Bin(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    fn constant(&self) -> Option<f64> {
        let mut vars = Vec::new();
        self.collect_vars(&mut vars);
        vars.is_empty().then(|| self.eval(&Point::default()))
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ExprError> {
        Err(ExprError::Parse { pos: self.pos, msg: msg.into() })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Node::Bin(BinOp::Add, Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(b'-') {
                lhs = Node::Bin(BinOp::Sub, Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = Node::Bin(BinOp::Mul, Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat(b'/') {
                lhs = Node::Bin(BinOp::Div, Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        if self.eat(b'-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if self.eat(b'+') {
            return self.unary();
        }
        let base = self.atom()?;
        if self.eat(b'^') {
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ExprError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if !self.eat(b')') {
                    return self.err("expected ')'");
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.name(),
            Some(c) => self.err(format!("unexpected character {:?}", c as char)),
            None => self.err("unexpected end of expression"),
        }
    }

    fn number(&mut self) -> Result<Node, ExprError> {
        let start = self.pos;
        while self.pos < self.src.len() && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < self.src.len() && matches!(self.src[self.pos], b'e' | b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < self.src.len() && matches!(self.src[self.pos], b'+' | b'-') {
                self.pos += 1;
            }
            let digits_start = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if self.pos == digits_start {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        match text.parse::<f64>() {
            Ok(v) => Ok(Node::Num(v)),
            Err(_) => {
                self.pos = start;
                self.err(format!("bad number {text:?}"))
            }
        }
    }

    fn name(&mut self) -> Result<Node, ExprError> {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        if let Some(func) = Func::lookup(name) {
            if !self.eat(b'(') {
                return self.err(format!("expected '(' after {name}"));
            }
            let arg = self.expr()?;
            if !self.eat(b')') {
                return self.err("expected ')'");
            }
            return Ok(Node::Call(func, Box::new(arg)));
        }
        let var = match name {
            "pi" => return Ok(Node::Num(PI)),
            "x" | "x1" => Var::X(0),
            "x2" => Var::X(1),
            "t" => Var::T,
            "y" | "y1" => Var::Y(0),
            "y2" => Var::Y(1),
            "s" => Var::S(0),
            _ => match name.strip_prefix('s').and_then(|d| d.parse::<usize>().ok()) {
                Some(j) if (1..=9).contains(&j) => Var::S(j - 1),
                _ => {
                    self.pos = start;
                    return self.err(format!("unknown name {name:?}"));
                }
            },
        };
        Ok(Node::Var(var))
    }
}

/// A parsed expression together with its source text.
#[derive(Clone, Debug, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
}

impl Expr {
    pub fn parse(source: &str) -> Result<Expr, ExprError> {
        let mut parser = Parser { src: source.as_bytes(), pos: 0 };
        let root = parser.expr()?;
        if parser.peek().is_some() {
            return parser.err("trailing input");
        }
        Ok(Expr { source: source.to_string(), root })
    }

    pub fn constant(value: f64) -> Expr {
        Expr { source: format!("{value:?}"), root: Node::Num(value) }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, p: &Point<'_>) -> f64 {
        self.root.eval(p)
    }

    /// Evaluates an expression of the macro variables only.
    pub fn eval_macro(&self, x: &[f64], t: f64) -> f64 {
        self.root.eval(&Point { x, t, y: &[], s: &[] })
    }

    pub fn variables(&self) -> Vec<Var> {
        let mut out = Vec::new();
        self.root.collect_vars(&mut out);
        out.sort();
        out
    }

    pub fn uses_cell_variables(&self) -> bool {
        self.variables().iter().any(Var::is_cell)
    }

    pub fn uses_macro_variables(&self) -> bool {
        self.variables().iter().any(|v| !v.is_cell())
    }

    /// Checks that every variable is admissible for the given dimensions.
    pub fn check_variables(&self, dim: usize, temporal: usize, allow_cell: bool) -> Result<(), ExprError> {
        for v in self.variables() {
            let ok = match v {
                Var::X(i) | Var::Y(i) if i >= dim => false,
                Var::S(j) if j >= temporal => false,
                Var::Y(_) | Var::S(_) => allow_cell,
                _ => true,
            };
            if !ok {
                return Err(ExprError::Variable { expr: self.source.clone(), var: v.to_string() });
            }
        }
        Ok(())
    }
}

impl FromStr for Expr {
    type Err = ExprError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Expr::parse(s)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl Serialize for Expr {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.source)
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ExprRepr {
    Text(String),
    Number(f64),
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        match ExprRepr::deserialize(deserializer)? {
            ExprRepr::Text(s) => Expr::parse(&s).map_err(serde::de::Error::custom),
            ExprRepr::Number(v) => Ok(Expr::constant(v)),
        }
    }
}

/// Slot layout of a frequency vector: `[y1, y2, s1, s2, ...]`.
const Y_SLOTS: usize = 2;

fn slot_of(var: Var) -> Option<usize> {
    match var {
        Var::Y(i) if i < Y_SLOTS => Some(i),
        Var::S(j) => Some(Y_SLOTS + j),
        _ => None,
    }
}

/// `cos_amp * cos(2 pi freq.z) + sin_amp * sin(2 pi freq.z)` with `z = (y1, y2, s1, ...)`.
#[derive(Clone, Debug, PartialEq)]
struct Wave {
    freq: Vec<i64>,
    cos_amp: f64,
    sin_amp: f64,
}

/// A finite trigonometric polynomial in the cell variables; 1-periodic in each of them.
#[derive(Clone, Debug, PartialEq)]
pub struct TrigSum {
    constant: f64,
    waves: Vec<Wave>,
}

fn trimmed(mut freq: Vec<i64>) -> Vec<i64> {
    while freq.last() == Some(&0) {
        freq.pop();
    }
    freq
}

fn combine(a: &[i64], b: &[i64], sign: i64) -> Vec<i64> {
    let n = a.len().max(b.len());
    let get = |v: &[i64], i: usize| v.get(i).copied().unwrap_or(0);
    trimmed((0..n).map(|i| get(a, i) + sign * get(b, i)).collect())
}

impl TrigSum {
    pub fn constant(value: f64) -> TrigSum {
        TrigSum { constant: value, waves: Vec::new() }
    }

    /// Adds `c cos(2 pi f.z) + d sin(2 pi f.z)`, canonicalising the sign of `f`.
    fn push_wave(&mut self, freq: Vec<i64>, cos_amp: f64, sin_amp: f64) {
        let mut freq = trimmed(freq);
        let mut sin_amp = sin_amp;
        match freq.iter().find(|&&f| f != 0) {
            None => {
                self.constant += cos_amp;
                return;
            }
            Some(&lead) if lead < 0 => {
                freq.iter_mut().for_each(|f| *f = -*f);
                sin_amp = -sin_amp;
            }
            _ => {}
        }
        if let Some(w) = self.waves.iter_mut().find(|w| w.freq == freq) {
            w.cos_amp += cos_amp;
            w.sin_amp += sin_amp;
        } else {
            self.waves.push(Wave { freq, cos_amp, sin_amp });
        }
    }

    fn pruned(mut self) -> TrigSum {
        self.waves.retain(|w| w.cos_amp != 0.0 || w.sin_amp != 0.0);
        self
    }

    fn add(mut self, other: &TrigSum, sign: f64) -> TrigSum {
        self.constant += sign * other.constant;
        for w in &other.waves {
            self.push_wave(w.freq.clone(), sign * w.cos_amp, sign * w.sin_amp);
        }
        self.pruned()
    }

    fn scale(mut self, c: f64) -> TrigSum {
        self.constant *= c;
        for w in &mut self.waves {
            w.cos_amp *= c;
            w.sin_amp *= c;
        }
        self.pruned()
    }

    fn mul(&self, other: &TrigSum) -> TrigSum {
        let mut out = TrigSum::constant(self.constant * other.constant);
        for w in &other.waves {
            out.push_wave(w.freq.clone(), self.constant * w.cos_amp, self.constant * w.sin_amp);
        }
        for w in &self.waves {
            out.push_wave(w.freq.clone(), other.constant * w.cos_amp, other.constant * w.sin_amp);
        }
        for u in &self.waves {
            for v in &other.waves {
                let plus = combine(&u.freq, &v.freq, 1);
                let minus = combine(&u.freq, &v.freq, -1);
                let (a1, b1, a2, b2) = (u.cos_amp, u.sin_amp, v.cos_amp, v.sin_amp);
                // cos cos, sin sin, cos sin, sin cos product-to-sum
                out.push_wave(minus.clone(), 0.5 * (a1 * a2 + b1 * b2), 0.5 * (b1 * a2 - a1 * b2));
                out.push_wave(plus, 0.5 * (a1 * a2 - b1 * b2), 0.5 * (a1 * b2 + b1 * a2));
            }
        }
        out.pruned()
    }

    pub fn constant_part(&self) -> f64 {
        self.constant
    }

    /// Upper bound on `|self - constant_part|`.
    pub fn oscillation_bound(&self) -> f64 {
        self.waves.iter().map(|w| w.cos_amp.hypot(w.sin_amp)).sum()
    }

    pub fn lower_bound(&self) -> f64 {
        self.constant - self.oscillation_bound()
    }

    pub fn upper_bound(&self) -> f64 {
        self.constant + self.oscillation_bound()
    }

    /// Whether the sum depends on temporal cell coordinate `j` (zero-based).
    pub fn depends_on_s(&self, j: usize) -> bool {
        self.waves.iter().any(|w| w.freq.get(Y_SLOTS + j).is_some_and(|&f| f != 0))
    }

    /// Highest cell dimension and temporal coordinate count referenced.
    pub fn extent(&self) -> (usize, usize) {
        let mut dim = 0;
        let mut temporal = 0;
        for w in &self.waves {
            for (slot, &f) in w.freq.iter().enumerate() {
                if f != 0 {
                    if slot < Y_SLOTS {
                        dim = dim.max(slot + 1);
                    } else {
                        temporal = temporal.max(slot - Y_SLOTS + 1);
                    }
                }
            }
        }
        (dim, temporal)
    }

    pub fn eval(&self, y: &[f64], s: &[f64]) -> f64 {
        let mut total = self.constant;
        for w in &self.waves {
            let mut phase = 0.0;
            for (slot, &f) in w.freq.iter().enumerate() {
                if f == 0 {
                    continue;
                }
                let z = if slot < Y_SLOTS { y.get(slot) } else { s.get(slot - Y_SLOTS) };
                phase += f as f64 * z.copied().unwrap_or(0.0);
            }
            let arg = 2.0 * PI * (phase - phase.floor());
            let (sn, cs) = arg.sin_cos();
            total += w.cos_amp * cs + w.sin_amp * sn;
        }
        total
    }

    pub fn from_expr(expr: &Expr) -> Result<TrigSum, ExprError> {
        let fail = |msg: String| ExprError::NotPeriodic { expr: expr.source.clone(), msg };
        to_trig(&expr.root).map_err(fail)
    }
}

type Affine = (f64, BTreeMap<Var, f64>);

fn affine(node: &Node) -> Option<Affine> {
    match node {
        Node::Num(v) => Some((*v, BTreeMap::new())),
        Node::Var(v) => Some((0.0, BTreeMap::from([(*v, 1.0)]))),
        Node::Neg(a) => affine(a).map(|(c, m)| (-c, m.into_iter().map(|(k, v)| (k, -v)).collect())),
        Node::Bin(op @ (BinOp::Add | BinOp::Sub), a, b) => {
            let (ca, mut ma) = affine(a)?;
            let (cb, mb) = affine(b)?;
            let sign = if *op == BinOp::Add { 1.0 } else { -1.0 };
            for (k, v) in mb {
                *ma.entry(k).or_insert(0.0) += sign * v;
            }
            Some((ca + sign * cb, ma))
        }
        Node::Bin(BinOp::Mul, a, b) => {
            let (ca, ma) = affine(a)?;
            let (cb, mb) = affine(b)?;
            let scale = |c: f64, m: BTreeMap<Var, f64>| (c, m);
            if ma.is_empty() {
                Some(scale(ca * cb, mb.into_iter().map(|(k, v)| (k, v * ca)).collect()))
            } else if mb.is_empty() {
                Some(scale(ca * cb, ma.into_iter().map(|(k, v)| (k, v * cb)).collect()))
            } else {
                None
            }
        }
        Node::Bin(BinOp::Div, a, b) => {
            let (ca, ma) = affine(a)?;
            let d = b.constant()?;
            Some((ca / d, ma.into_iter().map(|(k, v)| (k, v / d)).collect()))
        }
        _ => node.constant().map(|c| (c, BTreeMap::new())),
    }
}

fn to_trig(node: &Node) -> Result<TrigSum, String> {
    match node {
        Node::Num(v) => Ok(TrigSum::constant(*v)),
        Node::Var(v) => Err(format!("bare variable {v} outside a sin/cos argument")),
        Node::Neg(a) => Ok(to_trig(a)?.scale(-1.0)),
        Node::Bin(BinOp::Add, a, b) => Ok(to_trig(a)?.add(&to_trig(b)?, 1.0)),
        Node::Bin(BinOp::Sub, a, b) => Ok(to_trig(a)?.add(&to_trig(b)?, -1.0)),
        Node::Bin(BinOp::Mul, a, b) => Ok(to_trig(a)?.mul(&to_trig(b)?)),
        Node::Bin(BinOp::Div, a, b) => {
            let d = b.constant().ok_or("division by a non-constant")?;
            Ok(to_trig(a)?.scale(1.0 / d))
        }
        Node::Bin(BinOp::Pow, a, b) => {
            let e = b.constant().ok_or("non-constant exponent")?;
            if let Some(c) = a.constant() {
                return Ok(TrigSum::constant(c.powf(e)));
            }
            if e.fract() != 0.0 || !(0.0..=8.0).contains(&e) {
                return Err("only integer powers 0..=8 of periodic terms are supported".into());
            }
            let base = to_trig(a)?;
            let mut acc = TrigSum::constant(1.0);
            for _ in 0..e as usize {
                acc = acc.mul(&base);
            }
            Ok(acc)
        }
        Node::Call(func @ (Func::Sin | Func::Cos), arg) => {
            let (phase, coeffs) = affine(arg).ok_or("sin/cos argument must be affine")?;
            let mut freq = Vec::new();
            for (var, c) in coeffs {
                let slot = slot_of(var).ok_or_else(|| format!("variable {var} is not a cell variable"))?;
                let cycles = c / (2.0 * PI);
                let n = cycles.round();
                if (cycles - n).abs() > 1e-9 {
                    return Err(format!("coefficient of {var} is not an integer multiple of 2*pi"));
                }
                if freq.len() <= slot {
                    freq.resize(slot + 1, 0);
                }
                freq[slot] += n as i64;
            }
            let (sp, cp) = phase.sin_cos();
            let mut out = TrigSum::constant(0.0);
            // sin(th + ph) = cos ph sin th + sin ph cos th; cos(th + ph) = cos ph cos th - sin ph sin th
            match func {
                Func::Sin => out.push_wave(freq, sp, cp),
                _ => out.push_wave(freq, cp, -sp),
            }
            Ok(out.pruned())
        }
        Node::Call(..) => node
            .constant()
            .map(TrigSum::constant)
            .ok_or_else(|| "only sin and cos of cell variables are allowed".into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(src: &str, x: &[f64], t: f64) -> f64 {
        Expr::parse(src).unwrap().eval_macro(x, t)
    }

    #[test]
    fn arithmetic() {
        assert_eq!(ev("1 + 2*3", &[], 0.0), 7.0);
        assert_eq!(ev("-2^2", &[], 0.0), -4.0);
        assert_eq!(ev("2^3^2", &[], 0.0), 512.0);
        assert_eq!(ev("(1+2)*3 - 4/2", &[], 0.0), 7.0);
        assert!((ev("sin(pi*x)", &[0.5], 0.0) - 1.0).abs() < 1e-15);
        assert!((ev("x*(1+t)", &[0.5], 2.0) - 1.5).abs() < 1e-15);
        assert_eq!(ev("1e-3", &[], 0.0), 1e-3);
        assert_eq!(ev("exp(0) + abs(-2)", &[], 0.0), 3.0);
    }

    #[test]
    fn parse_errors() {
        assert!(Expr::parse("1 +").is_err());
        assert!(Expr::parse("foo(1)").is_err());
        assert!(Expr::parse("(1").is_err());
        assert!(Expr::parse("1 2").is_err());
        assert!(Expr::parse("z").is_err());
    }

    #[test]
    fn variable_checks() {
        let e = Expr::parse("sin(2*pi*y2) + s3").unwrap();
        assert!(e.check_variables(2, 3, true).is_ok());
        assert!(e.check_variables(1, 3, true).is_err());
        assert!(e.check_variables(2, 2, true).is_err());
        assert!(e.check_variables(2, 3, false).is_err());
        assert!(e.uses_cell_variables());
        assert!(!e.uses_macro_variables());
    }

    #[test]
    fn trig_sum_matches_direct_evaluation() {
        let cases = [
            "2 + sin(2*pi*y)",
            "2 + sin(2*pi*y)*cos(2*pi*s)",
            "1 + cos(2*pi*s1)/2",
            "2 + sin(2*pi*y)*(1 + cos(2*pi*s2))/2",
            "(1 + 0.5*sin(2*pi*(y1 - 2*y2) + 0.3))^2",
            "3 - 0.25*cos(4*pi*y + 2*pi*s1)",
            "2*pi*1 + cos(0.5)",
        ];
        let ys = [[0.13, 0.71], [0.5, 0.25], [0.99, 0.01]];
        let ss = [[0.3, 0.8], [0.05, 0.55]];
        for src in cases {
            let e = Expr::parse(src).unwrap();
            let ts = TrigSum::from_expr(&e).unwrap();
            for y in &ys {
                for s in &ss {
                    let direct = e.eval(&Point { x: &[], t: 0.0, y, s });
                    let reduced = ts.eval(y, s);
                    assert!((direct - reduced).abs() < 1e-12, "{src}: {direct} vs {reduced}");
                }
            }
        }
    }

    #[test]
    fn trig_bounds_and_dependence() {
        let ts = TrigSum::from_expr(&Expr::parse("2 + sin(2*pi*y)*cos(2*pi*s)").unwrap()).unwrap();
        assert_eq!(ts.constant_part(), 2.0);
        assert!((ts.lower_bound() - 1.0).abs() < 1e-15);
        assert!((ts.upper_bound() - 3.0).abs() < 1e-15);
        assert!(ts.depends_on_s(0));
        assert!(!ts.depends_on_s(1));
        assert_eq!(ts.extent(), (1, 1));
    }

    #[test]
    fn non_periodic_rejected() {
        for src in ["y", "sin(y)", "sin(2*pi*x)", "exp(sin(2*pi*y))", "sin(2*pi*y)/y", "sin(2*pi*y*s)"] {
            let e = Expr::parse(src).unwrap();
            assert!(TrigSum::from_expr(&e).is_err(), "{src} should be rejected");
        }
    }

    #[test]
    fn unit_shift_is_exact_at_dyadic_points() {
        let ts = TrigSum::from_expr(&Expr::parse("2 + sin(2*pi*y)*cos(2*pi*s)").unwrap()).unwrap();
        for j in 0..64 {
            let y = j as f64 / 64.0;
            let s = (63 - j) as f64 / 128.0;
            assert_eq!(ts.eval(&[y], &[s]), ts.eval(&[y + 1.0], &[s - 1.0]));
        }
    }
}
