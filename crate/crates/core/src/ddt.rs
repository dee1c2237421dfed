//! Differentiable decision trees.
//!
//! Each internal node routes probability mass with
//! `sigmoid(gamma * (w . x - c))` toward its TRUE child and the complement
//! toward its FALSE child. Leaves hold action logits over a fixed set of
//! quantized action levels. The tree is stored in heap order: node `k` has
//! its TRUE child at `2k + 1` and its FALSE child at `2k + 2`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{dot, softmax, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DdtError {
    #[error("observation has {got} attributes, tree expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid tree: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, DdtError>;

/// Logit given to the selected level of a one-hot leaf; every other level
/// gets 0, so the off-level mass is below 1e-17.
pub const ONE_HOT_LOGIT: f64 = 40.0;

/// Sharpness assigned to every decision node by [`crispen`].
pub const DEFAULT_CRISP_SHARPNESS: f64 = 1e3;

/// Attribute order of the four-input observation used by the warm start.
pub const PRECOOL_ATTRIBUTES: [&str; 4] = ["T_in", "T_out", "P_cur", "P_fut"];

/// Position of a node: the sequence of branch bits from the root.
/// Bit 0 is the TRUE branch, bit 1 the FALSE branch.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeIndex(Vec<u8>);

impl NodeIndex {
    pub fn root() -> Self {
        NodeIndex(Vec::new())
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }

    pub fn child(&self, bit: u8) -> Self {
        assert!(bit <= 1);
        let mut bits = self.0.clone();
        bits.push(bit);
        NodeIndex(bits)
    }

    /// Heap position of this index in a complete binary tree.
    pub fn heap_position(&self) -> usize {
        self.0
            .iter()
            .fold(0usize, |k, &b| 2 * k + 1 + b as usize)
    }

    pub fn from_heap_position(mut k: usize) -> Self {
        let mut bits = Vec::new();
        while k > 0 {
            bits.push(((k - 1) % 2) as u8);
            k = (k - 1) / 2;
        }
        bits.reverse();
        NodeIndex(bits)
    }
}

impl std::fmt::Display for NodeIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.0.is_empty() {
            return f.write_str("∅");
        }
        for b in &self.0 {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionNode<T = f64> {
    #[serde(rename = "w")]
    pub weights: Vec<T>,
    #[serde(rename = "c")]
    pub comparator: T,
    #[serde(rename = "gamma")]
    pub sharpness: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaf<T = f64> {
    pub logits: Vec<T>,
}

impl Leaf<f64> {
    pub fn one_hot(level: usize, n_levels: usize) -> Self {
        let mut logits = vec![0.0; n_levels];
        logits[level] = ONE_HOT_LOGIT;
        Leaf { logits }
    }
}

impl<T: Real> Leaf<T> {
    pub fn probabilities(&self) -> Vec<T> {
        softmax(&self.logits)
    }
}

/// Strictly increasing action values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ActionLevels(Vec<f64>);

impl ActionLevels {
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(DdtError::Invalid("no action levels".into()));
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) || levels.iter().any(|l| !l.is_finite()) {
            return Err(DdtError::Invalid(format!(
                "action levels must be finite and strictly increasing: {levels:?}"
            )));
        }
        Ok(ActionLevels(levels))
    }

    /// The default setpoint levels {15, 20, 30} °C.
    pub fn setpoints() -> Self {
        ActionLevels(vec![15.0, 20.0, 30.0])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn position(&self, value: f64) -> Option<usize> {
        self.0.iter().position(|&l| l == value)
    }
}

impl TryFrom<Vec<f64>> for ActionLevels {
    type Error = DdtError;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        ActionLevels::new(v)
    }
}

impl From<ActionLevels> for Vec<f64> {
    fn from(l: ActionLevels) -> Self {
        l.0
    }
}

/// A complete binary differentiable decision tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ddt<T = f64> {
    pub depth: usize,
    pub attributes: Vec<String>,
    pub nodes: Vec<DecisionNode<T>>,
    pub leaves: Vec<Leaf<T>>,
    pub levels: ActionLevels,
}

impl<T: Real> Ddt<T> {
    pub fn input_dim(&self) -> usize {
        self.attributes.len()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(DdtError::Dimension {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Probability of reaching each leaf, leaves in heap (bit-string) order.
    pub fn path_probabilities(&self, x: &[f64]) -> Result<Vec<T>> {
        self.check_input(x)?;
        let one = self.nodes[0].comparator.constant(1.0);
        let mut reach = vec![one];
        for level in 0..self.depth {
            let first = (1usize << level) - 1;
            let mut next = Vec::with_capacity(reach.len() * 2);
            for (offset, &p) in reach.iter().enumerate() {
                let node = &self.nodes[first + offset];
                let s = ((dot(&node.weights, x) - node.comparator) * node.sharpness).sigmoid();
                next.push(s * p);
                next.push(s.rsub(1.0) * p);
            }
            reach = next;
        }
        Ok(reach)
    }

    /// Overall probability of each action level.
    pub fn action_distribution(&self, x: &[f64]) -> Result<Vec<T>> {
        let paths = self.path_probabilities(x)?;
        let n = self.levels.len();
        let mut r: Vec<Option<T>> = vec![None; n];
        for (leaf, &p) in self.leaves.iter().zip(&paths) {
            for (k, q) in leaf.probabilities().into_iter().enumerate() {
                let term = q * p;
                r[k] = Some(match r[k] {
                    Some(acc) => acc + term,
                    None => term,
                });
            }
        }
        Ok(r.into_iter().map(|v| v.expect("at least one leaf")).collect())
    }

    /// Expected action level under [`Ddt::action_distribution`].
    pub fn soft_action(&self, x: &[f64]) -> Result<T> {
        let r = self.action_distribution(x)?;
        let mut acc = r[0] * self.levels.values()[0];
        for (rk, &a) in r.iter().zip(self.levels.values()).skip(1) {
            acc = acc + *rk * a;
        }
        Ok(acc)
    }

    /// Flat parameter vector: per node `w.., c, gamma`, then per leaf logits.
    pub fn params(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.num_params());
        for n in &self.nodes {
            out.extend(n.weights.iter().copied());
            out.push(n.comparator);
            out.push(n.sharpness);
        }
        for l in &self.leaves {
            out.extend(l.logits.iter().copied());
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.nodes.len() * (self.input_dim() + 2) + self.leaves.len() * self.levels.len()
    }

    /// Positions in [`Ddt::params`] of every sharpness entry.
    pub fn sharpness_positions(&self) -> Vec<usize> {
        let stride = self.input_dim() + 2;
        (0..self.nodes.len()).map(|k| k * stride + stride - 1).collect()
    }

    /// Positions in [`Ddt::params`] of every attribute weight.
    pub fn weight_positions(&self) -> Vec<usize> {
        let stride = self.input_dim() + 2;
        (0..self.nodes.len())
            .flat_map(|k| (0..self.input_dim()).map(move |j| k * stride + j))
            .collect()
    }

    /// Same structure with parameters taken from `params` in [`Ddt::params`] order.
    pub fn with_params<U: Real>(&self, params: &[U]) -> Ddt<U> {
        assert_eq!(params.len(), self.num_params(), "parameter count");
        let mut it = params.iter().copied();
        let dim = self.input_dim();
        let nodes = self
            .nodes
            .iter()
            .map(|_| {
                let weights: Vec<U> = it.by_ref().take(dim).collect();
                let comparator = it.next().unwrap();
                let sharpness = it.next().unwrap();
                DecisionNode {
                    weights,
                    comparator,
                    sharpness,
                }
            })
            .collect();
        let n = self.levels.len();
        let leaves = self
            .leaves
            .iter()
            .map(|_| Leaf {
                logits: it.by_ref().take(n).collect(),
            })
            .collect();
        Ddt {
            depth: self.depth,
            attributes: self.attributes.clone(),
            nodes,
            leaves,
            levels: self.levels.clone(),
        }
    }

    pub fn map<U: Real>(&self, f: impl FnMut(T) -> U) -> Ddt<U> {
        let params: Vec<U> = self.params().into_iter().map(f).collect();
        self.with_params(&params)
    }

    pub fn to_f64(&self) -> Ddt<f64> {
        self.map(|v| v.value())
    }
}

impl Ddt<f64> {
    pub fn new(
        depth: usize,
        attributes: Vec<String>,
        nodes: Vec<DecisionNode>,
        leaves: Vec<Leaf>,
        levels: ActionLevels,
    ) -> Result<Self> {
        let t = Ddt {
            depth,
            attributes,
            nodes,
            leaves,
            levels,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(DdtError::Invalid("depth must be at least 1".into()));
        }
        if self.attributes.is_empty() {
            return Err(DdtError::Invalid("no input attributes".into()));
        }
        let internal = (1usize << self.depth) - 1;
        if self.nodes.len() != internal || self.leaves.len() != internal + 1 {
            return Err(DdtError::Invalid(format!(
                "depth {} needs {} nodes and {} leaves, found {} and {}",
                self.depth,
                internal,
                internal + 1,
                self.nodes.len(),
                self.leaves.len()
            )));
        }
        for (k, n) in self.nodes.iter().enumerate() {
            if n.weights.len() != self.input_dim() {
                return Err(DdtError::Invalid(format!(
                    "node {} has {} weights, expected {}",
                    NodeIndex::from_heap_position(k),
                    n.weights.len(),
                    self.input_dim()
                )));
            }
            if !(n.sharpness > 0.0) || !n.sharpness.is_finite() {
                return Err(DdtError::Invalid(format!(
                    "node {} has non-positive sharpness {}",
                    NodeIndex::from_heap_position(k),
                    n.sharpness
                )));
            }
        }
        for l in &self.leaves {
            if l.logits.len() != self.levels.len() {
                return Err(DdtError::Invalid(format!(
                    "leaf has {} logits, expected {}",
                    l.logits.len(),
                    self.levels.len()
                )));
            }
        }
        Ok(())
    }

    /// Tree with random parameters: weights and logits standard normal,
    /// comparators uniform in `comparator_range`, all sharpness equal.
    pub fn random<R: rand::Rng>(
        depth: usize,
        attributes: Vec<String>,
        levels: ActionLevels,
        comparator_range: (f64, f64),
        sharpness: f64,
        rng: &mut R,
    ) -> Self {
        use rand_distr::{Distribution, StandardNormal, Uniform};
        let dim = attributes.len();
        let internal = (1usize << depth) - 1;
        let cmp = Uniform::new_inclusive(comparator_range.0, comparator_range.1);
        let nodes = (0..internal)
            .map(|_| DecisionNode {
                weights: (0..dim).map(|_| StandardNormal.sample(rng)).collect(),
                comparator: cmp.sample(rng),
                sharpness,
            })
            .collect();
        let leaves = (0..=internal)
            .map(|_| Leaf {
                logits: (0..levels.len()).map(|_| StandardNormal.sample(rng)).collect(),
            })
            .collect();
        Ddt {
            depth,
            attributes,
            nodes,
            leaves,
            levels,
        }
    }

    /// Hard evaluation: follow `w . x - c > 0` to a leaf and return the index
    /// of its most probable level.
    pub fn crisp_level(&self, x: &[f64]) -> Result<usize> {
        self.check_input(x)?;
        let mut k = 0usize;
        for _ in 0..self.depth {
            let n = &self.nodes[k];
            let truth = dot(&n.weights, x) - n.comparator > 0.0;
            k = 2 * k + if truth { 1 } else { 2 };
        }
        let leaf = &self.leaves[k - self.nodes.len()];
        Ok(argmax(&leaf.logits))
    }

    pub fn crisp_action(&self, x: &[f64]) -> Result<f64> {
        Ok(self.levels.values()[self.crisp_level(x)?])
    }

    /// Indented rule view, one line per test and per leaf.
    pub fn render(&self) -> String {
        let mut out = String::new();
        self.render_node(0, 0, &mut out);
        out
    }

    fn render_node(&self, k: usize, indent: usize, out: &mut String) {
        let pad = "  ".repeat(indent);
        if k >= self.nodes.len() {
            let leaf = &self.leaves[k - self.nodes.len()];
            let q = leaf.probabilities();
            let parts: Vec<String> = self
                .levels
                .values()
                .iter()
                .zip(&q)
                .filter(|(_, &p)| p >= 0.005)
                .map(|(a, p)| format!("{a}:{p:.2}"))
                .collect();
            let _ = writeln!(out, "{pad}→ {}", parts.join(" "));
            return;
        }
        let n = &self.nodes[k];
        let mut terms = Vec::new();
        for (w, name) in n.weights.iter().zip(&self.attributes) {
            if w.abs() >= 5e-3 {
                terms.push(format!("{w:.2}·{name}"));
            }
        }
        if terms.is_empty() {
            terms.push("0".into());
        }
        let _ = writeln!(
            out,
            "{pad}if {} − {} > 0 (γ={}):",
            terms.join(" + "),
            n.comparator,
            n.sharpness
        );
        self.render_node(2 * k + 1, indent + 1, out);
        let _ = writeln!(out, "{pad}else:");
        self.render_node(2 * k + 2, indent + 1, out);
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tree serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let t: Ddt = serde_json::from_str(text).map_err(|e| DdtError::Invalid(e.to_string()))?;
        t.validate()?;
        Ok(t)
    }
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

/// Depth-2 tree over `(T_in, T_out, P_cur, P_fut)` encoding the precooling
/// rules: high current price → 30 °C, else high future price → 15 °C,
/// else 20 °C. The TRUE subtree of the root repeats the root test with both
/// leaves on 30 °C.
pub fn warm_start_precool(levels: &ActionLevels, sharpness: f64) -> Result<Ddt> {
    let find = |v: f64| {
        levels
            .position(v)
            .ok_or_else(|| DdtError::Invalid(format!("action levels lack {v} °C")))
    };
    let (high, precool, normal) = (find(30.0)?, find(15.0)?, find(20.0)?);
    let n = levels.len();
    let test = |attr: usize| {
        let mut weights = vec![0.0; 4];
        weights[attr] = 1.0;
        DecisionNode {
            weights,
            comparator: 1.5,
            sharpness,
        }
    };
    Ddt::new(
        2,
        PRECOOL_ATTRIBUTES.iter().map(|s| s.to_string()).collect(),
        vec![test(2), test(2), test(3)],
        vec![
            Leaf::one_hot(high, n),
            Leaf::one_hot(high, n),
            Leaf::one_hot(precool, n),
            Leaf::one_hot(normal, n),
        ],
        levels.clone(),
    )
}

/// Snaps every node to a single signed unit weight on its largest-magnitude
/// attribute and every leaf to its most probable level.
pub fn crispen(t: &Ddt) -> Ddt {
    crispen_with(t, DEFAULT_CRISP_SHARPNESS)
}

pub fn crispen_with(t: &Ddt, sharpness: f64) -> Ddt {
    let mut out = t.clone();
    for node in &mut out.nodes {
        let j = argmax(&node.weights.iter().map(|w| w.abs()).collect::<Vec<_>>());
        let sign = if node.weights[j] < 0.0 { -1.0 } else { 1.0 };
        node.weights.iter_mut().for_each(|w| *w = 0.0);
        node.weights[j] = sign;
        node.sharpness = sharpness;
    }
    let n = t.levels.len();
    for leaf in &mut out.leaves {
        *leaf = Leaf::one_hot(argmax(&leaf.logits), n);
    }
    out
}

/// Integer-weight regularizer. Per node it adds
/// `norm_weight * ||w||_p + mass_weight * | ||w||_1 - 1 |`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegerRegularizer {
    pub p: u32,
    pub lambda: f64,
    #[serde(default = "one")]
    pub norm_weight: f64,
    #[serde(default = "one")]
    pub mass_weight: f64,
}

fn one() -> f64 {
    1.0
}

impl IntegerRegularizer {
    pub fn new(p: u32, lambda: f64) -> Self {
        IntegerRegularizer {
            p,
            lambda,
            norm_weight: 1.0,
            mass_weight: 1.0,
        }
    }

    pub fn evaluate<T: Real>(&self, t: &Ddt<T>) -> T {
        let zero = t.nodes[0].comparator.constant(0.0);
        if self.lambda == 0.0 {
            return zero;
        }
        let mut total = zero;
        for node in &t.nodes {
            let abs: Vec<T> = node.weights.iter().map(|w| w.abs()).collect();
            let l1 = crate::autodiff::sum(&abs, zero);
            let powered: Vec<T> = abs.iter().map(|a| a.powi(self.p as i32)).collect();
            let lp = crate::autodiff::sum(&powered, zero).powf(1.0 / self.p as f64);
            total = total + lp * self.norm_weight + (l1 - 1.0).abs() * self.mass_weight;
        }
        total * self.lambda
    }
}

/// `lambda * Σ_nodes (||w||_p + | ||w||_1 - 1 |)`.
pub fn integer_regularizer<T: Real>(t: &Ddt<T>, p: u32, lambda: f64) -> T {
    assert!(p >= 2, "regularizer norm order must be at least 2");
    IntegerRegularizer::new(p, lambda).evaluate(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    fn stump(w: f64, c: f64, gamma: f64, left: Vec<f64>, right: Vec<f64>) -> Ddt {
        Ddt::new(
            1,
            vec!["x".into()],
            vec![DecisionNode {
                weights: vec![w],
                comparator: c,
                sharpness: gamma,
            }],
            vec![Leaf { logits: left }, Leaf { logits: right }],
            ActionLevels::setpoints(),
        )
        .unwrap()
    }

    fn obs(t_in: f64, t_out: f64, p_cur: f64, p_fut: f64) -> [f64; 4] {
        [t_in, t_out, p_cur, p_fut]
    }

    #[test]
    fn node_index_heap_round_trip() {
        for k in 0..31 {
            let idx = NodeIndex::from_heap_position(k);
            assert_eq!(idx.heap_position(), k);
        }
        assert_eq!(NodeIndex::root().child(0).heap_position(), 1);
        assert_eq!(NodeIndex::root().child(1).child(0).heap_position(), 5);
        assert_eq!(NodeIndex::root().depth(), 0);
    }

    #[test]
    fn stump_at_boundary_splits_evenly() {
        let t = stump(1.0, 0.0, 1.0, vec![0.0; 3], vec![0.0; 3]);
        assert_eq!(t.path_probabilities(&[0.0]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn sharp_stump_takes_true_branch() {
        let t = stump(1.0, 0.0, 100.0, vec![0.0; 3], vec![0.0; 3]);
        let p = t.path_probabilities(&[1.0]).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let t = stump(1.0, 0.0, 1.0, vec![0.0; 3], vec![0.0; 3]);
        assert_eq!(
            t.path_probabilities(&[1.0, 2.0]),
            Err(DdtError::Dimension {
                expected: 1,
                got: 2
            })
        );
    }

    #[test]
    fn one_hot_leaves_give_one_hot_distribution() {
        let leaf = Leaf::one_hot(1, 3).logits;
        let t = stump(0.3, -0.2, 2.0, leaf.clone(), leaf);
        let r = t.action_distribution(&[0.7]).unwrap();
        assert!((r[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn convex_mix_of_endpoints() {
        let t = stump(
            1.0,
            0.0,
            1.0,
            Leaf::one_hot(0, 3).logits,
            Leaf::one_hot(2, 3).logits,
        );
        let r = t.action_distribution(&[0.0]).unwrap();
        assert_relative_eq!(r[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(r[1], 0.0, epsilon = 1e-12);
        assert_relative_eq!(r[2], 0.5, epsilon = 1e-12);
        assert_relative_eq!(t.soft_action(&[0.0]).unwrap(), 22.5, epsilon = 1e-9);
    }

    #[test]
    fn warm_start_matches_rules() {
        let t = warm_start_precool(&ActionLevels::setpoints(), 50.0).unwrap();
        let r = t.action_distribution(&obs(25.0, 30.0, 2.0, 2.0)).unwrap();
        assert!(r[2] > 1.0 - 1e-9);
        assert!((t.soft_action(&obs(25.0, 30.0, 2.0, 2.0)).unwrap() - 30.0).abs() < 1e-6);
        assert!((t.soft_action(&obs(25.0, 30.0, 0.2, 2.0)).unwrap() - 15.0).abs() < 1e-6);
        assert!((t.soft_action(&obs(25.0, 30.0, 0.2, 0.2)).unwrap() - 20.0).abs() < 1e-6);
    }

    #[test]
    fn warm_start_requires_rule_levels() {
        let levels = ActionLevels::new(vec![16.0, 20.0, 30.0]).unwrap();
        assert!(warm_start_precool(&levels, 10.0).is_err());
    }

    #[test]
    fn crispen_snaps_weights_and_leaves() {
        let mut t = Ddt::random(
            1,
            vec!["a".into(), "b".into()],
            ActionLevels::setpoints(),
            (0.0, 1.0),
            2.0,
            &mut rand_chacha::ChaCha8Rng::seed_from_u64(1),
        );
        t.nodes[0].weights = vec![0.9, 0.1];
        t.leaves[0].logits = vec![0.6f64.ln(), 0.3f64.ln(), 0.1f64.ln()];
        let c = crispen(&t);
        assert_eq!(c.nodes[0].weights, vec![1.0, 0.0]);
        assert_eq!(c.nodes[0].sharpness, DEFAULT_CRISP_SHARPNESS);
        assert_eq!(c.nodes[0].comparator, t.nodes[0].comparator);
        assert_eq!(c.leaves[0], Leaf::one_hot(0, 3));

        t.nodes[0].weights = vec![0.2, -0.7];
        assert_eq!(crispen(&t).nodes[0].weights, vec![0.0, -1.0]);
    }

    #[test]
    fn crispen_fixes_integral_warm_start() {
        let w = warm_start_precool(&ActionLevels::setpoints(), DEFAULT_CRISP_SHARPNESS).unwrap();
        assert_eq!(crispen(&w), w);
    }

    #[test]
    fn regularizer_values() {
        let one_hot = stump(1.0, 0.0, 1.0, vec![0.0; 3], vec![0.0; 3]);
        assert_relative_eq!(integer_regularizer(&one_hot, 4, 1.0), 1.0, epsilon = 1e-12);

        let mut t = Ddt::random(
            1,
            vec!["a".into(), "b".into()],
            ActionLevels::setpoints(),
            (0.0, 1.0),
            1.0,
            &mut rand_chacha::ChaCha8Rng::seed_from_u64(3),
        );
        t.nodes[0].weights = vec![0.5, 0.5];
        // ||(0.5, 0.5)||_8 = 0.5 * 2^(1/8)
        assert_relative_eq!(integer_regularizer(&t, 8, 1.0), 0.545_253_866, epsilon = 1e-8);
        assert_eq!(integer_regularizer(&t, 8, 0.0), 0.0);

        let four = Ddt::new(
            1,
            vec!["a".into(), "b".into(), "c".into(), "d".into()],
            vec![DecisionNode {
                weights: vec![1.0, 0.0, 0.0, 0.0],
                comparator: 0.0,
                sharpness: 1.0,
            }],
            vec![Leaf::one_hot(0, 3), Leaf::one_hot(1, 3)],
            ActionLevels::setpoints(),
        )
        .unwrap();
        for p in [2, 3, 8, 16] {
            assert_relative_eq!(integer_regularizer(&four, p, 1.0), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn regularizer_is_differentiable() {
        let t = stump(0.4, 0.0, 1.0, vec![0.0; 3], vec![0.0; 3]);
        let tape = Tape::new();
        let lifted = t.map(|v| tape.var(v));
        let r = integer_regularizer(&lifted, 4, 2.0);
        let g = tape.backward(r);
        // d/dw [ |w| + | |w| - 1 | ] at w = 0.4 is 1 - 1 = 0, times lambda.
        assert_relative_eq!(g.wrt(lifted.nodes[0].weights[0]), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn json_round_trip_and_validation() {
        let w = warm_start_precool(&ActionLevels::setpoints(), 50.0).unwrap();
        let back = Ddt::from_json(&w.to_json()).unwrap();
        assert_eq!(back, w);
        let bad = w.to_json().replace("\"gamma\": 50.0", "\"gamma\": -1.0");
        assert!(Ddt::from_json(&bad).is_err());
        let bad_levels = w.to_json().replace("15.0", "35.0");
        assert!(Ddt::from_json(&bad_levels).is_err());
    }

    #[test]
    fn render_shows_rules() {
        let w = warm_start_precool(&ActionLevels::setpoints(), 50.0).unwrap();
        let text = w.render();
        assert!(text.starts_with("if 1.00·P_cur − 1.5 > 0"), "{text}");
        assert!(text.contains("1.00·P_fut"));
        assert!(text.contains("→ 15:1.00"));
    }
}
