//! Logical neural networks: weighted real-valued AND/OR/NOT/IMPLIES gates.
//!
//! A gate computes `sigmoid(beta * (w . x - theta))`. Its AND- or OR-like
//! character comes from linear constraints on `(w, theta)` relative to the
//! truth threshold `alpha`; see [`constraint_residual`]. Weights live in
//! `[0, 1]`; a child whose weight is exactly zero is pruned and contributes
//! no constraint rows.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Real, Tape};
use crate::optim::Adam;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LnnError {
    #[error("predicate `{0}` is not bound")]
    Unbound(String),
    #[error("parse error at position {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("gate {gate} has weight {weight} which is not within {tol} of 0 or 1")]
    Ambiguous { gate: String, weight: f64, tol: f64 },
    #[error("fit did not converge: constraint residual {residual:e} after {epochs} epochs")]
    NotConverged { residual: f64, epochs: usize },
    #[error("invalid: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, LnnError>;

/// Real truth value in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct TruthValue(f64);

impl TruthValue {
    pub fn new(v: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&v) {
            Ok(TruthValue(v))
        } else {
            Err(LnnError::Invalid(format!("truth value {v} outside [0, 1]")))
        }
    }

    pub const TRUE: TruthValue = TruthValue(1.0);
    pub const FALSE: TruthValue = TruthValue(0.0);

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Truth threshold with `0.5 < alpha < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Alpha(f64);

impl Alpha {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha > 0.5 && alpha < 1.0 {
            Ok(Alpha(alpha))
        } else {
            Err(LnnError::Invalid(format!("alpha {alpha} outside (0.5, 1)")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }

    /// `logit(alpha)`, the pre-activation at which a unit-sharpness sigmoid
    /// reaches `alpha`.
    pub fn logit(self) -> f64 {
        (self.0 / (1.0 - self.0)).ln()
    }
}

impl Default for Alpha {
    fn default() -> Self {
        Alpha(0.95)
    }
}

impl TryFrom<f64> for Alpha {
    type Error = LnnError;
    fn try_from(v: f64) -> Result<Self> {
        Alpha::new(v)
    }
}

impl From<Alpha> for f64 {
    fn from(a: Alpha) -> f64 {
        a.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    True,
    False,
    Unknown,
}

pub fn classify(v: f64, alpha: Alpha) -> Classification {
    if v >= alpha.0 {
        Classification::True
    } else if v <= 1.0 - alpha.0 {
        Classification::False
    } else {
        Classification::Unknown
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateKind {
    And,
    Or,
    /// `Implies(a, b)` is evaluated as `Or(Not(a), b)` with the gate's own weights.
    Implies,
}

impl GateKind {
    fn name(self) -> &'static str {
        match self {
            GateKind::And => "And",
            GateKind::Or => "Or",
            GateKind::Implies => "Implies",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gate<T = f64> {
    pub kind: GateKind,
    pub weights: Vec<T>,
    pub theta: T,
    /// Activation steepness `beta`; not learned, annealed by callers.
    pub sharpness: f64,
    pub children: Vec<Expr<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr<T = f64> {
    Pred(String),
    Const(bool),
    Not(Box<Expr<T>>),
    Gate(Gate<T>),
}

/// A rule over named predicates with a shared truth threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct Formula<T = f64> {
    pub root: Expr<T>,
    pub alpha: Alpha,
}

/// Classical threshold placing equal slack on both sides of the gate's
/// constraints when all `n` active weights are 1.
pub fn crisp_theta(kind: GateKind, n: usize, alpha: Alpha) -> f64 {
    let a = alpha.0;
    let n = n as f64;
    match kind {
        GateKind::And => (n - a + n * a) / 2.0,
        GateKind::Or | GateKind::Implies => a / 2.0,
    }
}

/// Smallest sharpness for which unit weights and [`crisp_theta`] satisfy the
/// gate's constraints, or `None` when no sharpness does.
pub fn min_crisp_sharpness(kind: GateKind, n: usize, alpha: Alpha) -> Option<f64> {
    let a = alpha.0;
    let nf = n as f64;
    let gap = match kind {
        GateKind::And => nf * a - nf + a,
        GateKind::Or | GateKind::Implies => a,
    };
    (gap > 0.0).then(|| 2.0 * alpha.logit() / gap)
}

impl<T: Real> Expr<T> {
    fn eval(&self, bindings: &BTreeMap<String, T>, anchor: Option<T>) -> Result<T> {
        match self {
            Expr::Pred(name) => bindings
                .get(name)
                .copied()
                .ok_or_else(|| LnnError::Unbound(name.clone())),
            Expr::Const(b) => {
                let a = anchor.ok_or_else(|| {
                    LnnError::Invalid("constant formula with nothing to evaluate against".into())
                })?;
                Ok(a.constant(if *b { 1.0 } else { 0.0 }))
            }
            Expr::Not(e) => match e.as_ref() {
                // exact involution
                Expr::Not(inner) => inner.eval(bindings, anchor),
                _ => Ok(e.eval(bindings, anchor)?.rsub(1.0)),
            },
            Expr::Gate(g) => {
                let inputs = g.inputs(bindings, anchor)?;
                let mut z = g.theta.constant(0.0) - g.theta;
                for (w, x) in g.weights.iter().zip(inputs) {
                    z = z + *w * x;
                }
                Ok((z * g.sharpness).sigmoid())
            }
        }
    }

    /// Evaluates this sub-expression on its own.
    pub fn evaluate(&self, bindings: &BTreeMap<String, T>) -> Result<T> {
        let anchor = self.first_param().or_else(|| bindings.values().next().copied());
        self.eval(bindings, anchor)
    }

    fn first_param(&self) -> Option<T> {
        match self {
            Expr::Pred(_) | Expr::Const(_) => None,
            Expr::Not(e) => e.first_param(),
            Expr::Gate(g) => Some(g.theta),
        }
    }

    fn collect_params(&self, out: &mut Vec<T>) {
        match self {
            Expr::Pred(_) | Expr::Const(_) => {}
            Expr::Not(e) => e.collect_params(out),
            Expr::Gate(g) => {
                out.extend(g.weights.iter().copied());
                out.push(g.theta);
                for c in &g.children {
                    c.collect_params(out);
                }
            }
        }
    }

    fn rebuild<U: Real>(&self, it: &mut impl Iterator<Item = U>) -> Expr<U> {
        match self {
            Expr::Pred(n) => Expr::Pred(n.clone()),
            Expr::Const(b) => Expr::Const(*b),
            Expr::Not(e) => Expr::Not(Box::new(e.rebuild(it))),
            Expr::Gate(g) => {
                let weights = g.weights.iter().map(|_| it.next().unwrap()).collect();
                let theta = it.next().unwrap();
                let children = g.children.iter().map(|c| c.rebuild(it)).collect();
                Expr::Gate(Gate {
                    kind: g.kind,
                    weights,
                    theta,
                    sharpness: g.sharpness,
                    children,
                })
            }
        }
    }

    fn residual(&self, alpha: Alpha, acc: &mut Option<T>) {
        match self {
            Expr::Pred(_) | Expr::Const(_) => {}
            Expr::Not(e) => e.residual(alpha, acc),
            Expr::Gate(g) => {
                if let Some(r) = g.residual(alpha) {
                    *acc = Some(match *acc {
                        Some(a) => a + r,
                        None => r,
                    });
                }
                for c in &g.children {
                    c.residual(alpha, acc);
                }
            }
        }
    }

    fn predicates(&self, out: &mut Vec<String>) {
        match self {
            Expr::Pred(n) => {
                if !out.contains(n) {
                    out.push(n.clone())
                }
            }
            Expr::Const(_) => {}
            Expr::Not(e) => e.predicates(out),
            Expr::Gate(g) => g.children.iter().for_each(|c| c.predicates(out)),
        }
    }
}

impl<T: Real> Gate<T> {
    /// Values fed to the weights: children in order, with the antecedent of
    /// an implication negated.
    fn inputs(&self, bindings: &BTreeMap<String, T>, anchor: Option<T>) -> Result<Vec<T>> {
        let anchor = anchor.or(Some(self.theta));
        self.children
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let v = c.eval(bindings, anchor)?;
                Ok(if self.kind == GateKind::Implies && i == 0 {
                    v.rsub(1.0)
                } else {
                    v
                })
            })
            .collect()
    }

    /// Penalty for this gate's constraint rows over its active (non-zero
    /// weight) children; `None` when nothing is active.
    fn residual(&self, alpha: Alpha) -> Option<T> {
        let a = alpha.0;
        let beta = self.sharpness;
        let f_inv_true = alpha.logit() / beta;
        let f_inv_false = -f_inv_true;
        let active: Vec<T> = self
            .weights
            .iter()
            .copied()
            .filter(|w| w.value() > 0.0)
            .collect();
        if active.is_empty() {
            return None;
        }
        let sq = |v: T| {
            let m = v.max0();
            m * m
        };
        let total_w = crate::autodiff::sum(&active, self.theta.constant(0.0));
        let mut acc = None::<T>;
        let mut push = |v: T| {
            acc = Some(match acc {
                Some(x) => x + v,
                None => v,
            })
        };
        match self.kind {
            GateKind::And => {
                for &wi in &active {
                    // Σw − w_i α − θ ≤ f⁻¹(1 − α)
                    let row = total_w - wi * a - self.theta - f_inv_false;
                    push(wi * sq(row));
                }
                // Σw α − θ ≥ f⁻¹(α)
                push(sq((total_w * a - self.theta).rsub(f_inv_true)));
            }
            GateKind::Or | GateKind::Implies => {
                for &wj in &active {
                    // w_j α − θ ≥ f⁻¹(α)
                    push(wj * sq((wj * a - self.theta).rsub(f_inv_true)));
                }
                // Σ (1 − w_j) α − θ ≤ f⁻¹(1 − α)
                let mut lhs = self.theta.constant(0.0) - self.theta;
                for &wj in &active {
                    lhs = lhs + wj.rsub(1.0) * a;
                }
                push(sq(lhs - f_inv_false));
            }
        }
        acc
    }
}

impl<T: Real> Formula<T> {
    /// Bottom-up evaluation with the given predicate truth values.
    pub fn evaluate(&self, bindings: &BTreeMap<String, T>) -> Result<T> {
        let anchor = self
            .root
            .first_param()
            .or_else(|| bindings.values().next().copied());
        self.root.eval(bindings, anchor)
    }

    /// Learnable parameters in depth-first order: per gate its weights, then theta.
    pub fn params(&self) -> Vec<T> {
        let mut out = Vec::new();
        self.root.collect_params(&mut out);
        out
    }

    pub fn with_params<U: Real>(&self, params: &[U]) -> Formula<U> {
        let mut it = params.iter().copied();
        let root = self.root.rebuild(&mut it);
        assert!(it.next().is_none(), "too many parameters");
        Formula {
            root,
            alpha: self.alpha,
        }
    }

    pub fn map<U: Real>(&self, f: impl FnMut(T) -> U) -> Formula<U> {
        let p: Vec<U> = self.params().into_iter().map(f).collect();
        self.with_params(&p)
    }

    pub fn to_f64(&self) -> Formula<f64> {
        self.map(|v| v.value())
    }

    /// Predicate names in first-occurrence order.
    pub fn predicates(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.root.predicates(&mut out);
        out
    }
}

/// Sum over every gate of its squared constraint violations; zero exactly
/// when every row over active children holds.
pub fn constraint_residual<T: Real>(f: &Formula<T>) -> Option<T> {
    let mut acc = None;
    f.root.residual(f.alpha, &mut acc);
    acc
}

/// [`constraint_residual`] as a plain number (0 when the formula has no gates).
pub fn residual_value(f: &Formula) -> f64 {
    constraint_residual(f).unwrap_or(0.0)
}

/// Positions of weights (as opposed to thresholds) in [`Formula::params`].
pub fn weight_mask<T: Real>(f: &Formula<T>) -> Vec<bool> {
    fn walk<T>(e: &Expr<T>, out: &mut Vec<bool>) {
        match e {
            Expr::Pred(_) | Expr::Const(_) => {}
            Expr::Not(e) => walk(e, out),
            Expr::Gate(g) => {
                out.extend(std::iter::repeat_n(true, g.weights.len()));
                out.push(false);
                g.children.iter().for_each(|c| walk(c, out));
            }
        }
    }
    let mut out = Vec::new();
    walk(&f.root, &mut out);
    out
}

impl Formula<f64> {
    pub fn new(root: Expr, alpha: Alpha) -> Self {
        Formula { root, alpha }
    }

    /// Scales every gate's sharpness.
    pub fn scale_sharpness(&mut self, factor: f64) {
        fn walk(e: &mut Expr, factor: f64) {
            match e {
                Expr::Pred(_) | Expr::Const(_) => {}
                Expr::Not(e) => walk(e, factor),
                Expr::Gate(g) => {
                    g.sharpness *= factor;
                    g.children.iter_mut().for_each(|c| walk(c, factor));
                }
            }
        }
        walk(&mut self.root, factor);
    }

    pub fn set_sharpness(&mut self, beta: f64) {
        fn walk(e: &mut Expr, beta: f64) {
            match e {
                Expr::Pred(_) | Expr::Const(_) => {}
                Expr::Not(e) => walk(e, beta),
                Expr::Gate(g) => {
                    g.sharpness = beta;
                    g.children.iter_mut().for_each(|c| walk(c, beta));
                }
            }
        }
        walk(&mut self.root, beta);
    }

    /// Classical evaluation of a formula whose weights are all 0 or 1.
    pub fn evaluate_crisp(&self, bindings: &BTreeMap<String, bool>) -> Result<bool> {
        fn walk(e: &Expr, b: &BTreeMap<String, bool>) -> Result<bool> {
            match e {
                Expr::Pred(n) => b.get(n).copied().ok_or_else(|| LnnError::Unbound(n.clone())),
                Expr::Const(v) => Ok(*v),
                Expr::Not(e) => Ok(!walk(e, b)?),
                Expr::Gate(g) => {
                    let mut vals = Vec::new();
                    for (i, (c, &w)) in g.children.iter().zip(&g.weights).enumerate() {
                        if w == 0.0 {
                            continue;
                        }
                        if w != 1.0 {
                            return Err(LnnError::Invalid(format!(
                                "weight {w} in {} gate is not crisp",
                                g.kind.name()
                            )));
                        }
                        let v = walk(c, b)?;
                        vals.push(if g.kind == GateKind::Implies && i == 0 { !v } else { v });
                    }
                    Ok(match g.kind {
                        GateKind::And => vals.iter().all(|&v| v),
                        GateKind::Or | GateKind::Implies => vals.iter().any(|&v| v),
                    })
                }
            }
        }
        walk(&self.root, bindings)
    }

    /// Largest distance of any gate weight from its nearest integer.
    pub fn max_distance_to_integer(&self) -> f64 {
        let mask = weight_mask(self);
        self.params()
            .iter()
            .zip(mask)
            .filter(|(_, is_w)| *is_w)
            .map(|(w, _)| (w - w.round()).abs())
            .fold(0.0, f64::max)
    }

    /// Annotated text form that [`parse_template`] reads back exactly.
    pub fn to_annotated(&self) -> String {
        fn walk(e: &Expr, out: &mut String) {
            match e {
                Expr::Pred(n) => {
                    out.push_str(n);
                    out.push_str("(x)");
                }
                Expr::Const(b) => out.push_str(if *b { "True" } else { "False" }),
                Expr::Not(e) => {
                    out.push_str("Not(");
                    walk(e, out);
                    out.push(')');
                }
                Expr::Gate(g) => {
                    let ws: Vec<String> = g.weights.iter().map(|w| format!("{w:?}")).collect();
                    out.push_str(&format!(
                        "{}[w=({}),theta={:?},beta={:?}](",
                        g.kind.name(),
                        ws.join(","),
                        g.theta,
                        g.sharpness
                    ));
                    for (i, c) in g.children.iter().enumerate() {
                        if i > 0 {
                            out.push_str(", ");
                        }
                        walk(c, out);
                    }
                    out.push(')');
                }
            }
        }
        let mut out = String::new();
        walk(&self.root, &mut out);
        out
    }
}

/// Rule text without weights, e.g. `Implies(And(Hot(x), PowerCheap(x)),TurnACOn(x))`.
impl fmt::Display for Formula<f64> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn walk(e: &Expr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            match e {
                Expr::Pred(n) => write!(f, "{n}(x)"),
                Expr::Const(b) => f.write_str(if *b { "True" } else { "False" }),
                Expr::Not(e) => {
                    f.write_str("Not(")?;
                    walk(e, f)?;
                    f.write_str(")")
                }
                Expr::Gate(g) => {
                    write!(f, "{}(", g.kind.name())?;
                    let sep = if g.kind == GateKind::Implies { "," } else { ", " };
                    for (i, c) in g.children.iter().enumerate() {
                        if i > 0 {
                            f.write_str(sep)?;
                        }
                        walk(c, f)?;
                    }
                    f.write_str(")")
                }
            }
        }
        walk(&self.root, f)
    }
}

// ---------------------------------------------------------------------------
// Parsing

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    alpha: Alpha,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(LnnError::Parse {
            pos: self.pos,
            msg: msg.into(),
        })
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.src[self.pos..].chars().next() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.src[self.pos..].chars().next()
    }

    fn expect(&mut self, ch: char) -> Result<()> {
        match self.peek() {
            Some(c) if c == ch => {
                self.pos += 1;
                Ok(())
            }
            Some(c) => self.err(format!("expected `{ch}`, found `{c}`")),
            None => self.err(format!("expected `{ch}`, found end of input")),
        }
    }

    fn ident(&mut self) -> Result<String> {
        self.skip_ws();
        let start = self.pos;
        for (i, c) in self.src[start..].char_indices() {
            if !(c.is_alphanumeric() || c == '_') {
                self.pos = start + i;
                break;
            }
            self.pos = start + i + c.len_utf8();
        }
        if self.pos == start {
            return self.err("expected identifier");
        }
        Ok(self.src[start..self.pos].to_string())
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        for (i, c) in self.src[start..].char_indices() {
            if !(c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E')) {
                self.pos = start + i;
                break;
            }
            self.pos = start + i + 1;
        }
        let text = &self.src[start..self.pos];
        text.parse().or_else(|_| {
            self.pos = start;
            self.err(format!("invalid number `{text}`"))
        })
    }

    fn annotation(&mut self) -> Result<(Option<Vec<f64>>, Option<f64>, Option<f64>)> {
        let (mut w, mut theta, mut beta) = (None, None, None);
        if self.peek() != Some('[') {
            return Ok((w, theta, beta));
        }
        self.expect('[')?;
        loop {
            let key = self.ident()?;
            self.expect('=')?;
            match key.as_str() {
                "w" => {
                    self.expect('(')?;
                    let mut ws = Vec::new();
                    if self.peek() != Some(')') {
                        loop {
                            ws.push(self.number()?);
                            if self.peek() == Some(',') {
                                self.pos += 1;
                            } else {
                                break;
                            }
                        }
                    }
                    self.expect(')')?;
                    w = Some(ws);
                }
                "theta" => theta = Some(self.number()?),
                "beta" => beta = Some(self.number()?),
                other => return self.err(format!("unknown annotation `{other}`")),
            }
            match self.peek() {
                Some(',') => self.pos += 1,
                Some(']') => {
                    self.pos += 1;
                    break;
                }
                _ => return self.err("expected `,` or `]` in annotation"),
            }
        }
        Ok((w, theta, beta))
    }

    fn expr(&mut self) -> Result<Expr> {
        let start = {
            self.skip_ws();
            self.pos
        };
        let name = self.ident()?;
        let kind = match name.as_str() {
            "And" => Some(GateKind::And),
            "Or" => Some(GateKind::Or),
            "Implies" => Some(GateKind::Implies),
            _ => None,
        };
        if name == "True" || name == "False" {
            return Ok(Expr::Const(name == "True"));
        }
        if name == "Not" {
            self.expect('(')?;
            let inner = self.expr()?;
            self.expect(')')?;
            return Ok(Expr::Not(Box::new(inner)));
        }
        let Some(kind) = kind else {
            // predicate, optionally applied to a single variable
            if self.peek() == Some('(') {
                self.pos += 1;
                self.ident()?;
                if self.peek() == Some(',') {
                    return self.err("predicates take a single variable");
                }
                self.expect(')')?;
            }
            return Ok(Expr::Pred(name));
        };
        let (w, theta, beta) = self.annotation()?;
        self.expect('(')?;
        let mut children = vec![self.expr()?];
        while self.peek() == Some(',') {
            self.pos += 1;
            children.push(self.expr()?);
        }
        self.expect(')')?;
        if kind == GateKind::Implies && children.len() != 2 {
            self.pos = start;
            return self.err(format!("Implies takes 2 arguments, found {}", children.len()));
        }
        let n = children.len();
        let weights = match w {
            Some(ws) if ws.len() != n => {
                self.pos = start;
                return self.err(format!("{} weights for {} children", ws.len(), n));
            }
            Some(ws) => ws,
            None => vec![1.0; n],
        };
        Ok(Expr::Gate(Gate {
            kind,
            weights,
            theta: theta.unwrap_or_else(|| crisp_theta(kind, n, self.alpha)),
            sharpness: beta.unwrap_or(1.0),
            children,
        }))
    }
}

/// Parses `Name | Name(x) | Not(e) | And(e, ..) | Or(e, ..) | Implies(e, e)`,
/// with optional `[w=(..),theta=..,beta=..]` annotations after gate names.
/// Unannotated gates start with unit weights.
pub fn parse_template(text: &str) -> Result<Formula> {
    parse_template_with(text, Alpha::default())
}

pub fn parse_template_with(text: &str, alpha: Alpha) -> Result<Formula> {
    let mut p = Parser {
        src: text,
        pos: 0,
        alpha,
    };
    let root = p.expr()?;
    if p.peek().is_some() {
        return p.err("trailing input");
    }
    Ok(Formula { root, alpha })
}

// ---------------------------------------------------------------------------
// Crispening

/// Snaps weights to {0, 1}, removes zero-weight children, collapses unary
/// gates into their child and re-solves thresholds to the classical value.
pub fn crispen_formula(f: &Formula, tol: f64) -> Result<Formula> {
    fn walk(e: &Expr, alpha: Alpha, tol: f64, path: &str) -> Result<Expr> {
        match e {
            Expr::Pred(_) | Expr::Const(_) => Ok(e.clone()),
            Expr::Not(inner) => Ok(match walk(inner, alpha, tol, &format!("{path}/Not"))? {
                Expr::Const(b) => Expr::Const(!b),
                Expr::Not(x) => *x,
                other => Expr::Not(Box::new(other)),
            }),
            Expr::Gate(g) => {
                let here = format!("{path}/{}", g.kind.name());
                let mut kept = Vec::new();
                for (i, (c, &w)) in g.children.iter().zip(&g.weights).enumerate() {
                    if w.abs() <= tol {
                        continue;
                    }
                    if (w - 1.0).abs() > tol {
                        return Err(LnnError::Ambiguous {
                            gate: here,
                            weight: w,
                            tol,
                        });
                    }
                    let child = walk(c, alpha, tol, &format!("{here}[{i}]"))?;
                    kept.push((i, child));
                }
                let kind = g.kind;
                match kind {
                    GateKind::Implies if kept.len() == 2 => {
                        let children: Vec<Expr> = kept.into_iter().map(|(_, c)| c).collect();
                        Ok(classical_gate(kind, children, g.sharpness, alpha))
                    }
                    GateKind::Implies => Ok(match kept.pop() {
                        None => Expr::Const(false),
                        Some((0, a)) => Expr::Not(Box::new(a)),
                        Some((_, b)) => b,
                    }),
                    _ => {
                        let mut children: Vec<Expr> = kept.into_iter().map(|(_, c)| c).collect();
                        match children.len() {
                            0 => Ok(Expr::Const(kind == GateKind::And)),
                            1 => Ok(children.pop().unwrap()),
                            _ => Ok(classical_gate(kind, children, g.sharpness, alpha)),
                        }
                    }
                }
            }
        }
    }
    Ok(Formula {
        root: walk(&f.root, f.alpha, tol, "")?,
        alpha: f.alpha,
    })
}

/// Unit-weight gate with the classical threshold and a sharpness of at least
/// twice the minimum its constraints need.
pub fn classical_gate(kind: GateKind, children: Vec<Expr>, sharpness: f64, alpha: Alpha) -> Expr {
    let n = children.len();
    let beta = match min_crisp_sharpness(kind, n, alpha) {
        Some(min) => sharpness.max(2.0 * min),
        None => sharpness,
    };
    Expr::Gate(Gate {
        kind,
        weights: vec![1.0; n],
        theta: crisp_theta(kind, n, alpha),
        sharpness: beta,
        children,
    })
}

// ---------------------------------------------------------------------------
// Fitting

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub lr: f64,
    pub epochs: usize,
    /// Gate sharpness used while fitting.
    pub sharpness: f64,
    pub penalty_init: f64,
    pub penalty_growth: f64,
    pub penalty_max: f64,
    pub residual_tol: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            lr: 0.05,
            epochs: 600,
            sharpness: 10.0,
            penalty_init: 1.0,
            penalty_growth: 1.02,
            penalty_max: 1e4,
            residual_tol: 1e-6,
        }
    }
}

const BCE_EPS: f64 = 1e-12;

/// One supervised example: predicate truth values and the target truth value
/// of the formula's root.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub bindings: BTreeMap<String, f64>,
    pub target: TruthValue,
}

/// Mean binary cross-entropy of the formula output plus `penalty` times the
/// constraint residual. Cross-entropy keeps a gradient on saturated gates
/// where squared error would vanish.
pub fn fit_loss<T: Real>(f: &Formula<T>, data: &[Example], penalty: f64) -> Result<T> {
    let mut loss = None::<T>;
    for ex in data {
        let b: BTreeMap<String, T> = ex
            .bindings
            .iter()
            .map(|(k, &v)| (k.clone(), f.root.first_param().expect("gate").constant(v)))
            .collect();
        let y = f.evaluate(&b)?;
        let t = ex.target.0;
        let term = -((y + BCE_EPS).ln() * t + (y.rsub(1.0) + BCE_EPS).ln() * (1.0 - t));
        loss = Some(match loss {
            Some(l) => l + term,
            None => term,
        });
    }
    let loss = loss.ok_or_else(|| LnnError::Invalid("empty dataset".into()))? / data.len() as f64;
    Ok(match constraint_residual(f) {
        Some(r) => loss + r * penalty,
        None => loss,
    })
}

/// Fits weights and thresholds by gradient descent on cross-entropy plus an
/// increasing constraint penalty. Weights are projected onto `[0, 1]` after
/// every step.
pub fn fit(f: &Formula, data: &[Example], cfg: &FitConfig) -> Result<Formula> {
    if data.is_empty() {
        return Err(LnnError::Invalid("empty dataset".into()));
    }
    if f.root.first_param().is_none() {
        return Err(LnnError::Invalid("formula has no gates to fit".into()));
    }
    let mut current = f.clone();
    current.set_sharpness(cfg.sharpness);
    let mask = weight_mask(&current);
    let mut params = current.params();
    let mut opt = Adam::new(params.len(), cfg.lr);
    let mut penalty = cfg.penalty_init;
    for _ in 0..cfg.epochs {
        let tape = Tape::new();
        let vars = tape.vars(&params);
        let lifted = current.with_params(&vars);
        let loss = fit_loss(&lifted, data, penalty)?;
        let grads = tape.backward(loss).wrt_all(&vars);
        opt.step(&mut params, &grads);
        project_weights(&mut params, &mask);
        penalty = (penalty * cfg.penalty_growth).min(cfg.penalty_max);
    }
    let fitted = current.with_params(&params);
    let residual = residual_value(&fitted);
    if residual > cfg.residual_tol {
        return Err(LnnError::NotConverged {
            residual,
            epochs: cfg.epochs,
        });
    }
    Ok(fitted)
}

/// Clamps weight entries of a parameter vector to `[0, 1]`.
pub fn project_weights(params: &mut [f64], mask: &[bool]) {
    for (p, &is_w) in params.iter_mut().zip(mask) {
        if is_w {
            *p = p.clamp(0.0, 1.0);
        }
    }
}
