//! Vocabulary mapping raw simulator state to predicates and logical actions
//! to raw control writes.
//!
//! The vocabulary file mirrors the shapes used in the original Python
//! prototype: predicates are 4-element arrays
//! `[attribute, mode, comparator, threshold]` and actions are 5-element
//! arrays `[control, mode, value, on_a, on_b]`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GroundingError {
    #[error("state has no attribute `{0}`")]
    MissingAttribute(String),
    #[error("controls have no key `{0}`")]
    MissingKey(String),
    #[error("attribute `{key}` has the wrong type for predicate `{predicate}`")]
    TypeMismatch { predicate: String, key: String },
    #[error("delta predicate `{0}` needs the previous state")]
    NoHistory(String),
    #[error("soft grounding is not supported for `{0}` (comparator ==)")]
    UnsupportedSoft(String),
    #[error("sharpness must be positive, got {0}")]
    BadKappa(f64),
    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),
    #[error("unknown action `{0}`")]
    UnknownAction(String),
    #[error("assignment is infeasible: {0}")]
    Infeasible(String),
    #[error("vocabulary: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, GroundingError>;

/// Raw simulator value: numeric sensors or categorical tags such as colour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RawValue {
    Num(f64),
    Text(String),
}

impl fmt::Display for RawValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RawValue::Num(v) => write!(f, "{v}"),
            RawValue::Text(s) => f.write_str(s),
        }
    }
}

pub type RawState = BTreeMap<String, RawValue>;
pub type Controls = BTreeMap<String, f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Abs,
    Delta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = "==")]
    Eq,
}

/// Threshold as written in the vocabulary: a number, or a string that is
/// either a named constant or a literal category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Threshold {
    Value(f64),
    Symbol(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabEntry {
    pub name: String,
    pub attribute: String,
    pub mode: Mode,
    pub comparator: Comparator,
    pub threshold: Threshold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionDef {
    pub name: String,
    pub attribute: String,
    pub mode: Mode,
    pub value: f64,
    /// Trailing numbers of the 5-field form; stored, never interpreted.
    pub on_params: [f64; 2],
}

fn compare(cmp: Comparator, value: &RawValue, threshold: &RawValue) -> Option<bool> {
    match (value, threshold) {
        (RawValue::Num(v), RawValue::Num(t)) => Some(match cmp {
            Comparator::Lt => v < t,
            Comparator::Gt => v > t,
            Comparator::Eq => v == t,
        }),
        (RawValue::Text(v), RawValue::Text(t)) if cmp == Comparator::Eq => Some(v == t),
        _ => None,
    }
}

/// Evaluates a predicate whose threshold is already resolved.
///
/// Delta mode compares `state[attr] - previous[attr]` against the threshold.
pub fn eval_predicate(
    e: &VocabEntry,
    threshold: &RawValue,
    state: &RawState,
    previous: Option<&RawState>,
) -> Result<bool> {
    let current = state
        .get(&e.attribute)
        .ok_or_else(|| GroundingError::MissingAttribute(e.attribute.clone()))?;
    let mismatch = || GroundingError::TypeMismatch {
        predicate: e.name.clone(),
        key: e.attribute.clone(),
    };
    let value = match e.mode {
        Mode::Abs => current.clone(),
        Mode::Delta => {
            let prev = previous
                .ok_or_else(|| GroundingError::NoHistory(e.name.clone()))?
                .get(&e.attribute)
                .ok_or_else(|| GroundingError::MissingAttribute(e.attribute.clone()))?;
            match (current, prev) {
                (RawValue::Num(a), RawValue::Num(b)) => RawValue::Num(a - b),
                _ => return Err(mismatch()),
            }
        }
    };
    compare(e.comparator, &value, threshold).ok_or_else(mismatch)
}

/// Applies a logical action to the control vector.
pub fn apply_action(a: &ActionDef, controls: &Controls) -> Result<Controls> {
    let mut out = controls.clone();
    let slot = out
        .get_mut(&a.attribute)
        .ok_or_else(|| GroundingError::MissingKey(a.attribute.clone()))?;
    match a.mode {
        Mode::Abs => *slot = a.value,
        Mode::Delta => *slot += a.value,
    }
    Ok(out)
}

/// Sigmoid relaxation of a numeric predicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftPredicate {
    pub name: String,
    pub comparator: Comparator,
    pub threshold: f64,
    pub kappa: f64,
}

impl SoftPredicate {
    pub fn new(name: &str, comparator: Comparator, threshold: f64, kappa: f64) -> Result<Self> {
        if comparator == Comparator::Eq {
            return Err(GroundingError::UnsupportedSoft(name.to_string()));
        }
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(GroundingError::BadKappa(kappa));
        }
        Ok(SoftPredicate {
            name: name.to_string(),
            comparator,
            threshold,
            kappa,
        })
    }

    /// `σ(κ(v − t))` for `>`, `σ(κ(t − v))` for `<`.
    pub fn eval<T: Real>(&self, value: T) -> T {
        let d = match self.comparator {
            Comparator::Gt => value - self.threshold,
            _ => value.rsub(self.threshold),
        };
        (d * self.kappa).sigmoid()
    }

    /// The indicator the relaxation converges to.
    pub fn eval_crisp(&self, value: f64) -> bool {
        match self.comparator {
            Comparator::Gt => value > self.threshold,
            _ => value < self.threshold,
        }
    }
}

// On-disk shapes: fixed-length arrays in the prototype's field order.
#[derive(Serialize, Deserialize)]
struct EntryRepr(String, Mode, Comparator, Threshold);

#[derive(Serialize, Deserialize)]
struct ActionRepr(String, Mode, f64, f64, f64);

fn default_margin() -> f64 {
    2.0
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    #[serde(default)]
    constants: BTreeMap<String, f64>,
    #[serde(default = "default_margin")]
    margin: f64,
    #[serde(default)]
    defaults: RawState,
    #[serde(default)]
    canonical: BTreeMap<String, Canonical>,
    vocab: BTreeMap<String, EntryRepr>,
    #[serde(default)]
    actions: BTreeMap<String, ActionRepr>,
}

/// Raw values that make a predicate true and false when realizing an
/// assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Canonical {
    pub satisfying: RawValue,
    pub violating: RawValue,
}

/// Loaded vocabulary: predicates, actions and the configuration needed to
/// realize assignments.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    pub entries: Vec<VocabEntry>,
    pub actions: Vec<ActionDef>,
    /// Named thresholds such as a desired temperature.
    pub constants: BTreeMap<String, f64>,
    /// Offset from a numeric threshold used for canonical values.
    pub margin: f64,
    /// Simulator state the realized assignment starts from.
    pub defaults: RawState,
    /// Per-predicate overrides of canonical values.
    pub canonical: BTreeMap<String, Canonical>,
}

impl Vocabulary {
    pub fn new(entries: Vec<VocabEntry>, actions: Vec<ActionDef>) -> Self {
        Vocabulary {
            entries,
            actions,
            constants: BTreeMap::new(),
            margin: default_margin(),
            defaults: RawState::new(),
            canonical: BTreeMap::new(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: VocabFile =
            serde_json::from_str(text).map_err(|e| GroundingError::Config(e.to_string()))?;
        let entries = file
            .vocab
            .into_iter()
            .map(|(name, EntryRepr(attribute, mode, comparator, threshold))| VocabEntry {
                name,
                attribute,
                mode,
                comparator,
                threshold,
            })
            .collect();
        let actions = file
            .actions
            .into_iter()
            .map(|(name, ActionRepr(attribute, mode, value, a, b))| ActionDef {
                name,
                attribute,
                mode,
                value,
                on_params: [a, b],
            })
            .collect();
        let v = Vocabulary {
            entries,
            actions,
            constants: file.constants,
            margin: file.margin,
            defaults: file.defaults,
            canonical: file.canonical,
        };
        v.validate()?;
        Ok(v)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GroundingError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let file = VocabFile {
            constants: self.constants.clone(),
            margin: self.margin,
            defaults: self.defaults.clone(),
            canonical: self.canonical.clone(),
            vocab: self
                .entries
                .iter()
                .map(|e| {
                    (
                        e.name.clone(),
                        EntryRepr(e.attribute.clone(), e.mode, e.comparator, e.threshold.clone()),
                    )
                })
                .collect(),
            actions: self
                .actions
                .iter()
                .map(|a| {
                    (
                        a.name.clone(),
                        ActionRepr(a.attribute.clone(), a.mode, a.value, a.on_params[0], a.on_params[1]),
                    )
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("vocabulary serializes")
    }

    fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0) {
            return Err(GroundingError::Config(format!("margin must be positive, got {}", self.margin)));
        }
        for e in &self.entries {
            let t = self.threshold(e);
            let ok = match (e.comparator, &t) {
                (Comparator::Eq, _) => true,
                (_, RawValue::Num(_)) => true,
                (_, RawValue::Text(_)) => false,
            };
            if !ok {
                return Err(GroundingError::Config(format!(
                    "predicate `{}` orders against non-numeric threshold `{t}`",
                    e.name
                )));
            }
            if !self.defaults.is_empty() && !self.defaults.contains_key(&e.attribute) {
                return Err(GroundingError::Config(format!(
                    "predicate `{}` reads unknown attribute `{}`",
                    e.name, e.attribute
                )));
            }
        }
        Ok(())
    }

    pub fn entry(&self, name: &str) -> Result<&VocabEntry> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| GroundingError::UnknownPredicate(name.to_string()))
    }

    pub fn action(&self, name: &str) -> Result<&ActionDef> {
        self.actions
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| GroundingError::UnknownAction(name.to_string()))
    }

    pub fn predicate_names(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.name.clone()).collect()
    }

    /// Resolves a symbolic threshold through the constant table; unknown
    /// symbols are literal categories.
    pub fn threshold(&self, e: &VocabEntry) -> RawValue {
        match &e.threshold {
            Threshold::Value(v) => RawValue::Num(*v),
            Threshold::Symbol(s) => match self.constants.get(s) {
                Some(v) => RawValue::Num(*v),
                None => RawValue::Text(s.clone()),
            },
        }
    }

    pub fn eval(&self, name: &str, state: &RawState, previous: Option<&RawState>) -> Result<bool> {
        let e = self.entry(name)?;
        eval_predicate(e, &self.threshold(e), state, previous)
    }

    /// Truth value of every predicate, keyed by name.
    pub fn eval_all(&self, state: &RawState, previous: Option<&RawState>) -> Result<BTreeMap<String, bool>> {
        self.entries
            .iter()
            .map(|e| Ok((e.name.clone(), eval_predicate(e, &self.threshold(e), state, previous)?)))
            .collect()
    }

    pub fn soft(&self, name: &str, kappa: f64) -> Result<SoftPredicate> {
        let e = self.entry(name)?;
        if e.comparator == Comparator::Eq {
            return Err(GroundingError::UnsupportedSoft(name.to_string()));
        }
        match self.threshold(e) {
            RawValue::Num(t) => SoftPredicate::new(name, e.comparator, t, kappa),
            RawValue::Text(_) => Err(GroundingError::UnsupportedSoft(name.to_string())),
        }
    }

    pub fn canonical_values(&self, e: &VocabEntry) -> Result<Canonical> {
        if let Some(c) = self.canonical.get(&e.name) {
            return Ok(c.clone());
        }
        if e.mode == Mode::Delta {
            return Err(GroundingError::Infeasible(format!(
                "delta predicate `{}` has no canonical initial value",
                e.name
            )));
        }
        let m = self.margin;
        Ok(match (e.comparator, self.threshold(e)) {
            (Comparator::Lt, RawValue::Num(t)) => Canonical {
                satisfying: RawValue::Num(t - m),
                violating: RawValue::Num(t + m),
            },
            (Comparator::Gt, RawValue::Num(t)) => Canonical {
                satisfying: RawValue::Num(t + m),
                violating: RawValue::Num(t - m),
            },
            (Comparator::Eq, RawValue::Num(t)) => Canonical {
                satisfying: RawValue::Num(t),
                violating: RawValue::Num(t + m),
            },
            (Comparator::Eq, RawValue::Text(s)) => Canonical {
                violating: RawValue::Text(format!("not-{s}")),
                satisfying: RawValue::Text(s),
            },
            (_, RawValue::Text(s)) => {
                return Err(GroundingError::Config(format!("non-numeric threshold `{s}`")))
            }
        })
    }
}

/// Builds a simulator state in which each predicate takes its assigned
/// truth value. Predicates sharing an attribute must agree on one raw value.
pub fn realize_assignment(vocab: &Vocabulary, assignment: &BTreeMap<String, bool>) -> Result<RawState> {
    let mut state = vocab.defaults.clone();
    let mut by_attr: BTreeMap<&str, Vec<&VocabEntry>> = BTreeMap::new();
    for e in &vocab.entries {
        by_attr.entry(e.attribute.as_str()).or_default().push(e);
    }
    for (attr, entries) in by_attr {
        let mut candidates = Vec::new();
        for e in &entries {
            let want = *assignment
                .get(&e.name)
                .ok_or_else(|| GroundingError::Infeasible(format!("`{}` is unassigned", e.name)))?;
            let c = vocab.canonical_values(e)?;
            candidates.push(if want { c.satisfying } else { c.violating });
        }
        let chosen = candidates.iter().find(|cand| {
            entries.iter().all(|e| {
                let mut probe = RawState::new();
                probe.insert(attr.to_string(), (*cand).clone());
                eval_predicate(e, &vocab.threshold(e), &probe, None).ok() == Some(assignment[&e.name])
            })
        });
        match chosen {
            Some(v) => {
                state.insert(attr.to_string(), v.clone());
            }
            None => {
                let names: Vec<&str> = entries.iter().map(|e| e.name.as_str()).collect();
                return Err(GroundingError::Infeasible(format!(
                    "no value of `{attr}` satisfies {names:?} as assigned"
                )));
            }
        }
    }
    Ok(state)
}

/// Every assignment over `names`, in binary counting order with the first
/// name as the least significant bit.
pub fn all_assignments(names: &[String]) -> Vec<BTreeMap<String, bool>> {
    (0..1usize << names.len())
        .map(|m| {
            names
                .iter()
                .enumerate()
                .map(|(i, n)| (n.clone(), m >> i & 1 == 1))
                .collect()
        })
        .collect()
}

/// The cold/red vocabulary with heater actions, using a desired temperature
/// of 20 °C.
pub fn default_vocabulary_json() -> &'static str {
    include_str!("../data/vocabulary.json")
}
