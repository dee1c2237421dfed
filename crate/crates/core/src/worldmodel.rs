//! Action models learned from probing a simulator over every predicate
//! assignment, extracted as STRIPS actions.

use std::collections::BTreeMap;
use std::io::Write;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grounding::{
    all_assignments, apply_action, realize_assignment, Controls, GroundingError, RawState, RawValue, Vocabulary,
};
use crate::lnn::{
    crispen_formula, fit, Alpha, Example, Expr, FitConfig, Formula, GateKind, LnnError, TruthValue,
};
use crate::planner::{Atoms, PlanError, PlanningProblem, StripsAction};

#[derive(Debug, Error)]
pub enum WorldModelError {
    #[error("grounding: {0}")]
    Grounding(#[from] GroundingError),
    #[error("lnn: {0}")]
    Lnn(#[from] LnnError),
    #[error("planner: {0}")]
    Plan(#[from] PlanError),
    #[error("no probe records for action `{0}`")]
    NoRecords(String),
    #[error("records for `{action}` cover {got} of {expected} assignments")]
    Incomplete { action: String, got: usize, expected: usize },
    #[error("crisp precondition for `{action}` is not a conjunction of literals: {formula}")]
    NotConjunction { action: String, formula: String },
    #[error("learned rule for `{action}` disagrees with probe record {index}")]
    Unsound { action: String, index: usize },
    #[error("effect on `{predicate}` of `{action}` depends on the state")]
    ConditionalEffect { action: String, predicate: String },
    #[error("action `{0}` is never applicable")]
    NeverApplicable(String),
    #[error("simulator: {0}")]
    Simulator(String),
    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, WorldModelError>;

/// Simulator that can be started from an arbitrary raw state.
pub trait ProbeSimulator: Sync {
    fn default_controls(&self) -> Controls;
    fn step(&self, state: &RawState, controls: &Controls) -> Result<RawState>;
}

/// A room with a heater switch. With `Load Fraction` at 1 the indoor
/// temperature rises by `gain`; otherwise it moves by `off_drift`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeatSwitch {
    pub gain: f64,
    pub off_drift: f64,
    pub temperature_key: String,
    pub load_key: String,
}

impl Default for HeatSwitch {
    fn default() -> Self {
        HeatSwitch {
            gain: 4.0,
            off_drift: 0.0,
            temperature_key: "Temperature - Indoor (C)".into(),
            load_key: "Load Fraction".into(),
        }
    }
}

impl ProbeSimulator for HeatSwitch {
    fn default_controls(&self) -> Controls {
        let mut c = Controls::new();
        c.insert(self.load_key.clone(), 0.0);
        c.insert("Setpoint".into(), 20.0);
        c
    }

    fn step(&self, state: &RawState, controls: &Controls) -> Result<RawState> {
        let t = match state.get(&self.temperature_key) {
            Some(RawValue::Num(t)) => *t,
            _ => {
                return Err(WorldModelError::Simulator(format!(
                    "state lacks numeric `{}`",
                    self.temperature_key
                )))
            }
        };
        let lf = *controls
            .get(&self.load_key)
            .ok_or_else(|| WorldModelError::Simulator(format!("controls lack `{}`", self.load_key)))?;
        let mut next = state.clone();
        let t_next = t + lf * self.gain + (1.0 - lf) * self.off_drift;
        next.insert(self.temperature_key.clone(), RawValue::Num(t_next));
        Ok(next)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub action: String,
    pub before: BTreeMap<String, bool>,
    pub after: BTreeMap<String, bool>,
    pub changed: bool,
}

impl ProbeRecord {
    pub fn new(action: &str, before: BTreeMap<String, bool>, after: BTreeMap<String, bool>) -> Self {
        let changed = before != after;
        ProbeRecord {
            action: action.to_string(),
            before,
            after,
            changed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub records: Vec<ProbeRecord>,
    /// Assignments that could not be realized, per action.
    pub skipped: usize,
}

/// Runs every action from every assignment of the vocabulary's predicates,
/// one simulator step each. Records are ordered by action, then by
/// assignment in binary counting order.
pub fn probe(sim: &dyn ProbeSimulator, vocab: &Vocabulary, actions: &[String]) -> Result<ProbeReport> {
    let names = vocab.predicate_names();
    let assignments = all_assignments(&names);
    let mut records = Vec::new();
    let mut skipped = 0;
    for name in actions {
        let def = vocab.action(name)?;
        let results: Vec<Result<Option<ProbeRecord>>> = assignments
            .par_iter()
            .map(|a| {
                let start = match realize_assignment(vocab, a) {
                    Ok(s) => s,
                    Err(GroundingError::Infeasible(msg)) => {
                        warn!("skipping assignment {a:?} for `{name}`: {msg}");
                        return Ok(None);
                    }
                    Err(e) => return Err(e.into()),
                };
                let controls = apply_action(def, &sim.default_controls())?;
                let end = sim.step(&start, &controls)?;
                let after = vocab.eval_all(&end, Some(&start))?;
                Ok(Some(ProbeRecord::new(name, a.clone(), after)))
            })
            .collect();
        for r in results {
            match r? {
                Some(rec) => records.push(rec),
                None => skipped += 1,
            }
        }
    }
    if skipped > 0 {
        warn!("{skipped} assignments could not be realized");
    }
    Ok(ProbeReport { records, skipped })
}

pub fn write_probe_csv<W: Write>(records: &[ProbeRecord], w: W) -> Result<()> {
    let io = |e: csv::Error| WorldModelError::Io(e.to_string());
    let mut out = csv::Writer::from_writer(w);
    let preds: Vec<String> = records
        .first()
        .map(|r| r.before.keys().cloned().collect())
        .unwrap_or_default();
    let mut header = vec!["action".to_string()];
    header.extend(preds.iter().map(|p| format!("{p}_before")));
    header.extend(preds.iter().map(|p| format!("{p}_after")));
    header.push("changed".into());
    out.write_record(&header).map_err(io)?;
    let bit = |b: bool| if b { "1".to_string() } else { "0".to_string() };
    for r in records {
        let mut row = vec![r.action.clone()];
        row.extend(preds.iter().map(|p| bit(r.before[p])));
        row.extend(preds.iter().map(|p| bit(r.after[p])));
        row.push(bit(r.changed));
        out.write_record(&row).map_err(io)?;
    }
    out.flush().map_err(|e| WorldModelError::Io(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnConfig {
    pub fit: FitConfig,
    /// Weights within this distance of 0 or 1 crispen; others are ambiguous.
    pub crisp_tol: f64,
    pub alpha: f64,
}

impl Default for LearnConfig {
    fn default() -> Self {
        LearnConfig {
            fit: FitConfig::default(),
            crisp_tol: 0.05,
            alpha: 0.95,
        }
    }
}

/// `And(p, Not(p), q, Not(q), ...)` over the given predicates.
pub fn default_template(predicates: &[String], alpha: Alpha) -> Formula {
    let mut children = Vec::new();
    for p in predicates {
        children.push(Expr::Pred(p.clone()));
        children.push(Expr::Not(Box::new(Expr::Pred(p.clone()))));
    }
    Formula::new(crate::lnn::classical_gate(GateKind::And, children, 1.0, alpha), alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Applicability {
    Never,
    Always,
    Conditional,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnedRule {
    /// Fitted relaxed formula; `None` when the targets were constant.
    pub fitted: Option<Formula>,
    pub crisp: Formula,
    pub applicability: Applicability,
}

/// Fits `template` to a boolean truth table and crispens it. Constant
/// tables bypass fitting. The crisp rule must reproduce every target.
fn learn_rule(
    action: &str,
    inputs: &[&BTreeMap<String, bool>],
    targets: &[bool],
    template: &Formula,
    cfg: &LearnConfig,
) -> Result<LearnedRule> {
    if inputs.is_empty() {
        return Err(WorldModelError::NoRecords(action.to_string()));
    }
    let alpha = template.alpha;
    if targets.iter().all(|&t| !t) {
        return Ok(LearnedRule {
            fitted: None,
            crisp: Formula::new(Expr::Const(false), alpha),
            applicability: Applicability::Never,
        });
    }
    if targets.iter().all(|&t| t) {
        return Ok(LearnedRule {
            fitted: None,
            crisp: Formula::new(Expr::Const(true), alpha),
            applicability: Applicability::Always,
        });
    }
    let data: Vec<Example> = inputs
        .iter()
        .zip(targets)
        .map(|(b, &t)| Example {
            bindings: b.iter().map(|(k, &v)| (k.clone(), if v { 1.0 } else { 0.0 })).collect(),
            target: TruthValue::new(if t { 1.0 } else { 0.0 }).expect("0 and 1 are truth values"),
        })
        .collect();
    let fitted = fit(template, &data, &cfg.fit)?;
    let crisp = crispen_formula(&fitted, cfg.crisp_tol)?;
    for (i, (b, &t)) in inputs.iter().zip(targets).enumerate() {
        if crisp.evaluate_crisp(b)? != t {
            return Err(WorldModelError::Unsound {
                action: action.to_string(),
                index: i,
            });
        }
    }
    Ok(LearnedRule {
        fitted: Some(fitted),
        crisp,
        applicability: Applicability::Conditional,
    })
}

fn action_records<'a>(records: &'a [ProbeRecord], action: &str) -> Result<Vec<&'a ProbeRecord>> {
    let rs: Vec<&ProbeRecord> = records.iter().filter(|r| r.action == action).collect();
    let first = rs.first().ok_or_else(|| WorldModelError::NoRecords(action.to_string()))?;
    let expected = 1usize << first.before.len();
    let distinct: std::collections::BTreeSet<_> = rs.iter().map(|r| &r.before).collect();
    if distinct.len() != expected {
        return Err(WorldModelError::Incomplete {
            action: action.to_string(),
            got: distinct.len(),
            expected,
        });
    }
    Ok(rs)
}

/// Learns when `action` changes the state, using `template` or the default
/// literal conjunction over all predicates.
pub fn learn_preconditions(
    records: &[ProbeRecord],
    action: &str,
    template: Option<&Formula>,
    cfg: &LearnConfig,
) -> Result<LearnedRule> {
    let rs = action_records(records, action)?;
    let alpha = Alpha::new(cfg.alpha)?;
    let preds: Vec<String> = rs[0].before.keys().cloned().collect();
    let default = default_template(&preds, alpha);
    let template = template.unwrap_or(&default);
    let inputs: Vec<&BTreeMap<String, bool>> = rs.iter().map(|r| &r.before).collect();
    let targets: Vec<bool> = rs.iter().map(|r| r.changed).collect();
    learn_rule(action, &inputs, &targets, template, cfg)
}

/// Add and delete sets of `action`. For each predicate `q`, a rule is fitted
/// for "`q` becomes false" over applicable records where `q` held, and for
/// "`q` becomes true" over those where it did not; a rule that crispens to
/// always-true makes `q` a delete or add effect.
pub fn learn_effects(records: &[ProbeRecord], action: &str, cfg: &LearnConfig) -> Result<(Atoms, Atoms)> {
    let rs = action_records(records, action)?;
    let alpha = Alpha::new(cfg.alpha)?;
    let preds: Vec<String> = rs[0].before.keys().cloned().collect();
    let template = default_template(&preds, alpha);
    let applicable: Vec<&ProbeRecord> = rs.into_iter().filter(|r| r.changed).collect();
    let mut add = Atoms::new();
    let mut del = Atoms::new();
    for q in &preds {
        for (was, set) in [(true, &mut del), (false, &mut add)] {
            let subset: Vec<&&ProbeRecord> = applicable.iter().filter(|r| r.before[q] == was).collect();
            if subset.is_empty() {
                continue;
            }
            let inputs: Vec<&BTreeMap<String, bool>> = subset.iter().map(|r| &r.before).collect();
            let targets: Vec<bool> = subset.iter().map(|r| r.after[q] != was).collect();
            match learn_rule(action, &inputs, &targets, &template, cfg)?.applicability {
                Applicability::Always => {
                    set.insert(q.clone());
                }
                Applicability::Never => {}
                Applicability::Conditional => {
                    return Err(WorldModelError::ConditionalEffect {
                        action: action.to_string(),
                        predicate: q.clone(),
                    })
                }
            }
        }
    }
    Ok((add, del))
}

/// Maps a crisp conjunction of literals and effect sets to a STRIPS action.
pub fn to_strips(name: &str, precondition: &Formula, add: Atoms, del: Atoms) -> Result<StripsAction> {
    let not_conj = || WorldModelError::NotConjunction {
        action: name.to_string(),
        formula: precondition.to_string(),
    };
    let mut pos = Atoms::new();
    let mut neg = Atoms::new();
    let literal = |e: &Expr, pos: &mut Atoms, neg: &mut Atoms| -> Result<()> {
        match e {
            Expr::Pred(p) => {
                pos.insert(p.clone());
            }
            Expr::Not(inner) => match inner.as_ref() {
                Expr::Pred(p) => {
                    neg.insert(p.clone());
                }
                _ => return Err(not_conj()),
            },
            _ => return Err(not_conj()),
        }
        Ok(())
    };
    match &precondition.root {
        Expr::Const(true) => {}
        Expr::Const(false) => return Err(WorldModelError::NeverApplicable(name.to_string())),
        Expr::Gate(g) if g.kind == GateKind::And => {
            for (c, &w) in g.children.iter().zip(&g.weights) {
                if w != 1.0 {
                    return Err(LnnError::Ambiguous {
                        gate: format!("{name}/And"),
                        weight: w,
                        tol: 0.0,
                    }
                    .into());
                }
                literal(c, &mut pos, &mut neg)?;
            }
        }
        e => literal(e, &mut pos, &mut neg)?,
    }
    Ok(StripsAction::new(name, pos, neg, add, del)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnedAction {
    pub precondition: LearnedRule,
    /// `None` for actions that never change the state.
    pub strips: Option<StripsAction>,
}

/// Learns every action present in `records`, in order of first appearance.
pub fn learn_model(records: &[ProbeRecord], cfg: &LearnConfig) -> Result<Vec<LearnedAction>> {
    let mut names: Vec<&str> = Vec::new();
    for r in records {
        if !names.contains(&r.action.as_str()) {
            names.push(&r.action);
        }
    }
    let mut out = Vec::new();
    for name in names {
        let pre = learn_preconditions(records, name, None, cfg)?;
        let strips = if pre.applicability == Applicability::Never {
            None
        } else {
            let (add, del) = learn_effects(records, name, cfg)?;
            let a = to_strips(name, &pre.crisp, add, del)?;
            check_soundness(&a, records)?;
            Some(a)
        };
        out.push(LearnedAction {
            precondition: pre,
            strips,
        });
    }
    Ok(out)
}

/// Every record of the action: preconditions hold iff the state changed,
/// and applying the effects to `before` yields `after`.
pub fn check_soundness(action: &StripsAction, records: &[ProbeRecord]) -> Result<()> {
    let truth = |m: &BTreeMap<String, bool>| -> Atoms { m.iter().filter(|(_, &v)| v).map(|(k, _)| k.clone()).collect() };
    for (i, r) in records.iter().enumerate().filter(|(_, r)| r.action == action.name) {
        let before = truth(&r.before);
        let ok = if action.applicable(&before) {
            r.changed && action.apply(&before) == truth(&r.after)
        } else {
            !r.changed
        };
        if !ok {
            return Err(WorldModelError::Unsound {
                action: action.name.clone(),
                index: i,
            });
        }
    }
    Ok(())
}

/// Planning problem over the learned actions with `init` as the true atoms.
pub fn planning_problem(
    domain: &str,
    predicates: &[String],
    actions: &[LearnedAction],
    init: &BTreeMap<String, bool>,
    goal_pos: Atoms,
    goal_neg: Atoms,
) -> Result<PlanningProblem> {
    let p = PlanningProblem {
        domain: domain.to_string(),
        atoms: predicates.iter().cloned().collect(),
        actions: actions.iter().filter_map(|a| a.strips.clone()).collect(),
        init: init.iter().filter(|(_, &v)| v).map(|(k, _)| k.clone()).collect(),
        goal_pos,
        goal_neg,
    };
    p.validate()?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grounding::default_vocabulary_json;

    fn vocab() -> Vocabulary {
        Vocabulary::from_json(default_vocabulary_json()).unwrap()
    }

    fn set(xs: &[&str]) -> Atoms {
        xs.iter().map(|s| s.to_string()).collect()
    }

    fn assignment(cold: bool, red: bool) -> BTreeMap<String, bool> {
        [("cold".to_string(), cold), ("red".to_string(), red)].into_iter().collect()
    }

    #[test]
    fn pull_switch_probe_records() {
        let rep = probe(&HeatSwitch::default(), &vocab(), &["pull_switch".into()]).unwrap();
        assert_eq!(rep.records.len(), 4);
        assert_eq!(rep.skipped, 0);
        let find = |c, r| rep.records.iter().find(|x| x.before == assignment(c, r)).unwrap();
        let cold = find(true, false);
        assert_eq!(cold.after, assignment(false, false));
        assert!(cold.changed);
        assert!(!find(false, true).changed);
    }

    #[test]
    fn pull_switch_model() {
        let rep = probe(&HeatSwitch::default(), &vocab(), &["pull_switch".into()]).unwrap();
        let cfg = LearnConfig::default();
        let pre = learn_preconditions(&rep.records, "pull_switch", None, &cfg).unwrap();
        assert_eq!(pre.crisp.root, Expr::Pred("cold".into()));
        let (add, del) = learn_effects(&rep.records, "pull_switch", &cfg).unwrap();
        assert_eq!((add.clone(), del.clone()), (set(&[]), set(&["cold"])));
        let a = to_strips("pull_switch", &pre.crisp, add, del).unwrap();
        assert_eq!(a, StripsAction::new("pull_switch", set(&["cold"]), set(&[]), set(&[]), set(&["cold"])).unwrap());
        check_soundness(&a, &rep.records).unwrap();
    }

    #[test]
    fn no_op_action_is_never_applicable() {
        let records: Vec<ProbeRecord> = all_assignments(&["cold".into(), "red".into()])
            .into_iter()
            .map(|a| ProbeRecord::new("wait", a.clone(), a))
            .collect();
        let cfg = LearnConfig::default();
        let pre = learn_preconditions(&records, "wait", None, &cfg).unwrap();
        assert_eq!(pre.applicability, Applicability::Never);
        assert_eq!(learn_effects(&records, "wait", &cfg).unwrap(), (set(&[]), set(&[])));
        let model = learn_model(&records, &cfg).unwrap();
        assert!(model[0].strips.is_none());
    }

    #[test]
    fn always_changing_action_has_empty_precondition() {
        let records: Vec<ProbeRecord> = all_assignments(&["lit".into()])
            .into_iter()
            .map(|a| {
                let mut b = a.clone();
                *b.get_mut("lit").unwrap() ^= true;
                ProbeRecord::new("toggle", a, b)
            })
            .collect();
        let cfg = LearnConfig::default();
        let pre = learn_preconditions(&records, "toggle", None, &cfg).unwrap();
        assert_eq!(pre.applicability, Applicability::Always);
        let (add, del) = learn_effects(&records, "toggle", &cfg).unwrap();
        assert_eq!((add.clone(), del.clone()), (set(&["lit"]), set(&["lit"])));
        // a toggle has no STRIPS encoding without conditional effects
        assert!(matches!(
            to_strips("toggle", &pre.crisp, add, del),
            Err(WorldModelError::Plan(PlanError::Inconsistent { .. }))
        ));
    }

    #[test]
    fn heater_off_in_hot_start_adds_cold() {
        let sim = HeatSwitch {
            off_drift: -4.0,
            ..HeatSwitch::default()
        };
        let rep = probe(&sim, &vocab(), &["turn_heat_off".into()]).unwrap();
        let cfg = LearnConfig::default();
        let pre = learn_preconditions(&rep.records, "turn_heat_off", None, &cfg).unwrap();
        assert_eq!(pre.crisp.root, Expr::Not(Box::new(Expr::Pred("cold".into()))));
        let (add, del) = learn_effects(&rep.records, "turn_heat_off", &cfg).unwrap();
        assert_eq!((add, del), (set(&["cold"]), set(&[])));
    }

    #[test]
    fn to_strips_literal_mapping() {
        let f = crate::lnn::parse_template("Not(red(x))").unwrap();
        let a = to_strips("a", &f, set(&[]), set(&[])).unwrap();
        assert_eq!(a.neg_pre, set(&["red"]));
        let t = Formula::new(Expr::Const(true), Alpha::default());
        assert_eq!(to_strips("b", &t, set(&[]), set(&[])).unwrap(), StripsAction { name: "b".into(), ..Default::default() });
        let or = crate::lnn::parse_template("Or(a, b)").unwrap();
        assert!(matches!(to_strips("c", &or, set(&[]), set(&[])), Err(WorldModelError::NotConjunction { .. })));
        assert!(matches!(to_strips("d", &t, set(&["p"]), set(&["p"])), Err(WorldModelError::Plan(_))));
    }

    #[test]
    fn incomplete_records_rejected() {
        let rep = probe(&HeatSwitch::default(), &vocab(), &["pull_switch".into()]).unwrap();
        let partial = &rep.records[..3];
        assert!(matches!(
            learn_preconditions(partial, "pull_switch", None, &LearnConfig::default()),
            Err(WorldModelError::Incomplete { got: 3, expected: 4, .. })
        ));
    }

    #[test]
    fn probe_csv_columns() {
        let rep = probe(&HeatSwitch::default(), &vocab(), &["pull_switch".into()]).unwrap();
        let mut buf = Vec::new();
        write_probe_csv(&rep.records, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "action,cold_before,red_before,cold_after,red_after,changed");
        assert_eq!(lines.count(), 4);
    }
}
