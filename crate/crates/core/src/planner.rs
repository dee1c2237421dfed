//! STRIPS planning over a single object `x`: PDDL emission and parsing for
//! the STRIPS subset, and breadth-first search for shortest plans.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("syntax error at line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("unsupported PDDL feature `{feature}` at line {line}, column {col}")]
    Unsupported { feature: String, line: usize, col: usize },
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error("model inconsistency in `{action}`: {msg}")]
    Inconsistent { action: String, msg: String },
}

pub type Result<T> = std::result::Result<T, PlanError>;

pub type Atoms = BTreeSet<String>;

/// The single object every predicate is applied to.
pub const OBJECT: &str = "x";

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StripsAction {
    pub name: String,
    pub pos_pre: Atoms,
    pub neg_pre: Atoms,
    pub add: Atoms,
    pub del: Atoms,
}

impl StripsAction {
    pub fn new(name: &str, pos_pre: Atoms, neg_pre: Atoms, add: Atoms, del: Atoms) -> Result<Self> {
        let a = StripsAction {
            name: name.to_string(),
            pos_pre,
            neg_pre,
            add,
            del,
        };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| PlanError::Inconsistent {
            action: self.name.clone(),
            msg,
        };
        if let Some(p) = self.add.intersection(&self.del).next() {
            return Err(bad(format!("`{p}` is both added and deleted")));
        }
        if let Some(p) = self.pos_pre.intersection(&self.neg_pre).next() {
            return Err(bad(format!("`{p}` is both a positive and a negative precondition")));
        }
        Ok(())
    }

    pub fn applicable(&self, state: &Atoms) -> bool {
        self.pos_pre.is_subset(state) && self.neg_pre.is_disjoint(state)
    }

    /// `(state \ del) ∪ add`, without checking preconditions.
    pub fn apply(&self, state: &Atoms) -> Atoms {
        state.difference(&self.del).chain(&self.add).cloned().collect()
    }

    fn literals(&self) -> impl Iterator<Item = &String> {
        self.pos_pre.iter().chain(&self.neg_pre).chain(&self.add).chain(&self.del)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanningProblem {
    pub domain: String,
    pub atoms: Atoms,
    pub actions: Vec<StripsAction>,
    pub init: Atoms,
    pub goal_pos: Atoms,
    pub goal_neg: Atoms,
}

pub type Plan = Vec<String>;

impl PlanningProblem {
    pub fn validate(&self) -> Result<()> {
        let check = |a: &String, what: &str| {
            if self.atoms.contains(a) {
                Ok(())
            } else {
                Err(PlanError::Invalid(format!("{what} uses undeclared atom `{a}`")))
            }
        };
        for a in &self.init {
            check(a, "init")?;
        }
        for a in self.goal_pos.iter().chain(&self.goal_neg) {
            check(a, "goal")?;
        }
        let mut names = BTreeSet::new();
        for act in &self.actions {
            act.validate()?;
            if !names.insert(&act.name) {
                return Err(PlanError::Invalid(format!("duplicate action `{}`", act.name)));
            }
            for a in act.literals() {
                check(a, &format!("action `{}`", act.name))?;
            }
        }
        if self.atoms.len() > 64 {
            return Err(PlanError::Invalid(format!("{} atoms exceed the 64-atom limit", self.atoms.len())));
        }
        Ok(())
    }

    pub fn goal_satisfied(&self, state: &Atoms) -> bool {
        self.goal_pos.is_subset(state) && self.goal_neg.is_disjoint(state)
    }

    pub fn action(&self, name: &str) -> Option<&StripsAction> {
        self.actions.iter().find(|a| a.name == name)
    }

    /// Executes a plan from the initial state, failing on the first
    /// inapplicable or unknown step. Returns the final state.
    pub fn replay(&self, plan: &[String]) -> Result<Atoms> {
        let mut s = self.init.clone();
        for (i, name) in plan.iter().enumerate() {
            let a = self
                .action(name)
                .ok_or_else(|| PlanError::Invalid(format!("step {i}: unknown action `{name}`")))?;
            if !a.applicable(&s) {
                return Err(PlanError::Invalid(format!("step {i}: `{name}` is not applicable")));
            }
            s = a.apply(&s);
        }
        Ok(s)
    }

    /// True when the plan executes and reaches the goal.
    pub fn is_valid_plan(&self, plan: &[String]) -> bool {
        self.replay(plan).map(|s| self.goal_satisfied(&s)).unwrap_or(false)
    }
}

// ---------------------------------------------------------------------------
// Search

struct Compiled {
    pos: u64,
    neg: u64,
    add: u64,
    del: u64,
}

/// Shortest plan by breadth-first search over reachable states, or `None`
/// when the goal is unreachable. Actions are tried in declaration order, so
/// ties resolve deterministically.
pub fn solve(problem: &PlanningProblem) -> Result<Option<Plan>> {
    problem.validate()?;
    let index: HashMap<&str, u32> = problem
        .atoms
        .iter()
        .enumerate()
        .map(|(i, a)| (a.as_str(), i as u32))
        .collect();
    let mask = |set: &Atoms| set.iter().fold(0u64, |m, a| m | 1 << index[a.as_str()]);
    let acts: Vec<Compiled> = problem
        .actions
        .iter()
        .map(|a| Compiled {
            pos: mask(&a.pos_pre),
            neg: mask(&a.neg_pre),
            add: mask(&a.add),
            del: mask(&a.del),
        })
        .collect();
    let (gp, gn) = (mask(&problem.goal_pos), mask(&problem.goal_neg));
    let at_goal = |s: u64| s & gp == gp && s & gn == 0;

    let start = mask(&problem.init);
    // state -> (parent state, action index)
    let mut parent: HashMap<u64, Option<(u64, usize)>> = HashMap::new();
    parent.insert(start, None);
    let mut queue = VecDeque::from([start]);
    while let Some(s) = queue.pop_front() {
        if at_goal(s) {
            let mut plan = Vec::new();
            let mut cur = s;
            while let Some((p, ai)) = parent[&cur] {
                plan.push(problem.actions[ai].name.clone());
                cur = p;
            }
            plan.reverse();
            return Ok(Some(plan));
        }
        for (ai, a) in acts.iter().enumerate() {
            if s & a.pos != a.pos || s & a.neg != 0 {
                continue;
            }
            let next = (s & !a.del) | a.add;
            if let std::collections::hash_map::Entry::Vacant(e) = parent.entry(next) {
                e.insert(Some((s, ai)));
                queue.push_back(next);
            }
        }
    }
    Ok(None)
}

// ---------------------------------------------------------------------------
// Emission

fn atom(p: &str) -> String {
    format!("({p} {OBJECT})")
}

fn conjunction(pos: &Atoms, neg: &Atoms) -> String {
    let mut parts: Vec<String> = pos.iter().map(|p| atom(p)).collect();
    parts.extend(neg.iter().map(|p| format!("(not {})", atom(p))));
    if parts.is_empty() {
        "(and)".to_string()
    } else {
        format!("(and {})", parts.join(" "))
    }
}

/// Domain and problem text. Atoms and actions appear in sorted order so
/// the output depends only on the problem's content.
pub fn emit_pddl(problem: &PlanningProblem) -> (String, String) {
    let mut d = String::new();
    writeln!(d, "(define (domain {})", problem.domain).unwrap();
    writeln!(d, "  (:requirements :strips :negative-preconditions)").unwrap();
    writeln!(d, "  (:constants {OBJECT})").unwrap();
    let preds: Vec<String> = problem.atoms.iter().map(|p| format!("({p} ?o)")).collect();
    writeln!(d, "  (:predicates {})", preds.join(" ")).unwrap();
    let mut actions: Vec<&StripsAction> = problem.actions.iter().collect();
    actions.sort_by(|a, b| a.name.cmp(&b.name));
    for a in actions {
        writeln!(d, "  (:action {}", a.name).unwrap();
        writeln!(d, "    :parameters ()").unwrap();
        writeln!(d, "    :precondition {}", conjunction(&a.pos_pre, &a.neg_pre)).unwrap();
        writeln!(d, "    :effect {})", conjunction(&a.add, &a.del)).unwrap();
    }
    d.push_str(")\n");

    let mut p = String::new();
    writeln!(p, "(define (problem {}-problem)", problem.domain).unwrap();
    writeln!(p, "  (:domain {})", problem.domain).unwrap();
    let init: Vec<String> = problem.init.iter().map(|a| atom(a)).collect();
    writeln!(p, "  (:init {})", init.join(" ")).unwrap();
    writeln!(p, "  (:goal {}))", conjunction(&problem.goal_pos, &problem.goal_neg)).unwrap();
    (d, p)
}

// ---------------------------------------------------------------------------
// Parsing

#[derive(Debug, Clone)]
enum Sexp {
    Atom { text: String, line: usize, col: usize },
    List { items: Vec<Sexp>, line: usize, col: usize },
}

impl Sexp {
    fn pos(&self) -> (usize, usize) {
        match self {
            Sexp::Atom { line, col, .. } | Sexp::List { line, col, .. } => (*line, *col),
        }
    }

    fn syntax(&self, msg: impl Into<String>) -> PlanError {
        let (line, col) = self.pos();
        PlanError::Syntax {
            line,
            col,
            msg: msg.into(),
        }
    }

    fn unsupported(&self, feature: &str) -> PlanError {
        let (line, col) = self.pos();
        PlanError::Unsupported {
            feature: feature.to_string(),
            line,
            col,
        }
    }

    fn word(&self) -> Option<&str> {
        match self {
            Sexp::Atom { text, .. } => Some(text),
            Sexp::List { .. } => None,
        }
    }

    fn list(&self) -> Result<&[Sexp]> {
        match self {
            Sexp::List { items, .. } => Ok(items),
            Sexp::Atom { text, .. } => Err(self.syntax(format!("expected a list, found `{text}`"))),
        }
    }

    fn head(&self) -> Option<&str> {
        match self {
            Sexp::List { items, .. } => items.first().and_then(Sexp::word),
            Sexp::Atom { .. } => None,
        }
    }
}

fn read_sexp(text: &str) -> Result<Sexp> {
    let mut stack: Vec<(Vec<Sexp>, usize, usize)> = Vec::new();
    let mut done: Option<Sexp> = None;
    let mut chars = text.chars().peekable();
    let (mut line, mut col) = (1usize, 1usize);
    let err = |line, col, msg: &str| PlanError::Syntax {
        line,
        col,
        msg: msg.to_string(),
    };
    while let Some(&c) = chars.peek() {
        let (l, cl) = (line, col);
        let mut advance = |c: char| {
            if c == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
        };
        match c {
            ';' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    advance(c);
                    chars.next();
                }
            }
            c if c.is_whitespace() => {
                advance(c);
                chars.next();
            }
            '(' => {
                if done.is_some() {
                    return Err(err(l, cl, "text after the closing parenthesis"));
                }
                advance(c);
                chars.next();
                stack.push((Vec::new(), l, cl));
            }
            ')' => {
                advance(c);
                chars.next();
                let (items, ol, oc) = stack.pop().ok_or_else(|| err(l, cl, "unbalanced `)`"))?;
                let node = Sexp::List {
                    items,
                    line: ol,
                    col: oc,
                };
                match stack.last_mut() {
                    Some((parent, _, _)) => parent.push(node),
                    None => done = Some(node),
                }
            }
            _ => {
                let mut word = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == ';' {
                        break;
                    }
                    word.push(c.to_ascii_lowercase());
                    advance(c);
                    chars.next();
                }
                match stack.last_mut() {
                    Some((parent, _, _)) => parent.push(Sexp::Atom {
                        text: word,
                        line: l,
                        col: cl,
                    }),
                    None => return Err(err(l, cl, &format!("`{word}` outside any list"))),
                }
            }
        }
    }
    if let Some((_, l, c)) = stack.pop() {
        return Err(err(l, c, "unclosed `(`"));
    }
    done.ok_or_else(|| err(line, col, "empty input"))
}

const KNOWN_REQUIREMENTS: &[&str] = &[":strips", ":negative-preconditions", ":typing"];

fn define_body<'a>(root: &'a Sexp, kind: &str) -> Result<(String, &'a [Sexp])> {
    let items = root.list()?;
    if root.head() != Some("define") {
        return Err(root.syntax("expected `(define ...)`"));
    }
    let header = items.get(1).ok_or_else(|| root.syntax("missing header"))?;
    let h = header.list()?;
    if header.head() != Some(kind) || h.len() != 2 {
        return Err(header.syntax(format!("expected `({kind} NAME)`")));
    }
    let name = h[1].word().ok_or_else(|| h[1].syntax("expected a name"))?;
    Ok((name.to_string(), &items[2..]))
}

/// Predicate name from `(p)`, `(p x)` or `(p ?var)` where `?var` is allowed.
fn parse_atom(s: &Sexp, var: Option<&str>) -> Result<String> {
    let items = s.list()?;
    let name = items
        .first()
        .and_then(Sexp::word)
        .ok_or_else(|| s.syntax("expected an atom"))?;
    if matches!(name, "and" | "not") {
        return Err(s.syntax(format!("`{name}` is not an atom")));
    }
    match &items[1..] {
        [] => Ok(name.to_string()),
        [arg] => match arg.word() {
            Some(a) if a == OBJECT || Some(a) == var => Ok(name.to_string()),
            Some(a) => Err(arg.unsupported(&format!("object `{a}`"))),
            None => Err(arg.syntax("expected an argument")),
        },
        _ => Err(items[2].unsupported("predicates with more than one argument")),
    }
}

const UNSUPPORTED_CONNECTIVES: &[&str] = &[
    "or", "imply", "forall", "exists", "when", "=", "increase", "decrease", "assign", "either",
];

/// `(and lit*)`, a single literal, or `()`.
fn parse_conjunction(s: &Sexp, var: Option<&str>) -> Result<(Atoms, Atoms)> {
    let mut pos = Atoms::new();
    let mut neg = Atoms::new();
    let items = s.list()?;
    let lits: &[Sexp] = match s.head() {
        Some("and") => &items[1..],
        _ if items.is_empty() => &[],
        _ => std::slice::from_ref(s),
    };
    for lit in lits {
        match lit.head() {
            Some("not") => {
                let inner = lit.list()?;
                if inner.len() != 2 {
                    return Err(lit.syntax("`not` takes one atom"));
                }
                if let Some(h) = inner[1].head().filter(|h| UNSUPPORTED_CONNECTIVES.contains(h)) {
                    return Err(inner[1].unsupported(h));
                }
                neg.insert(parse_atom(&inner[1], var)?);
            }
            Some(h) if UNSUPPORTED_CONNECTIVES.contains(&h) || h == "and" => {
                return Err(lit.unsupported(h));
            }
            _ => {
                pos.insert(parse_atom(lit, var)?);
            }
        }
    }
    Ok((pos, neg))
}

/// Names from a PDDL list that may carry `- type` annotations.
fn typed_names(items: &[Sexp]) -> Result<Vec<String>> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < items.len() {
        let w = items[i].word().ok_or_else(|| items[i].syntax("expected a name"))?;
        if w == "-" {
            let ty = items.get(i + 1).ok_or_else(|| items[i].syntax("missing type after `-`"))?;
            if ty.word().is_none() {
                return Err(ty.unsupported("either"));
            }
            i += 2;
            continue;
        }
        out.push(w.to_string());
        i += 1;
    }
    Ok(out)
}

fn parse_action(items: &[Sexp], whole: &Sexp) -> Result<StripsAction> {
    let name = items
        .get(1)
        .and_then(Sexp::word)
        .ok_or_else(|| whole.syntax("action needs a name"))?
        .to_string();
    let mut var: Option<String> = None;
    let mut action = StripsAction {
        name,
        ..Default::default()
    };
    let mut i = 2;
    while i < items.len() {
        let key = items[i].word().ok_or_else(|| items[i].syntax("expected a keyword"))?;
        let value = items.get(i + 1).ok_or_else(|| items[i].syntax(format!("`{key}` needs a value")))?;
        match key {
            ":parameters" => {
                let params = typed_names(value.list()?)?;
                match params.as_slice() {
                    [] => {}
                    [p] if p.starts_with('?') => var = Some(p.clone()),
                    _ => return Err(value.unsupported("more than one parameter")),
                }
            }
            ":precondition" => {
                let (p, n) = parse_conjunction(value, var.as_deref())?;
                action.pos_pre = p;
                action.neg_pre = n;
            }
            ":effect" => {
                let (a, d) = parse_conjunction(value, var.as_deref())?;
                action.add = a;
                action.del = d;
            }
            other => return Err(items[i].unsupported(other)),
        }
        i += 2;
    }
    action.validate()?;
    Ok(action)
}

/// Parses a domain and problem in the STRIPS subset emitted by
/// [`emit_pddl`], plus typed single-parameter actions.
pub fn parse_pddl(domain: &str, problem: &str) -> Result<PlanningProblem> {
    let droot = read_sexp(domain)?;
    let (dname, sections) = define_body(&droot, "domain")?;
    let mut atoms = Atoms::new();
    let mut actions = Vec::new();
    for sec in sections {
        let items = sec.list()?;
        match sec.head() {
            Some(":requirements") => {
                for r in &items[1..] {
                    let w = r.word().ok_or_else(|| r.syntax("expected a requirement flag"))?;
                    if !KNOWN_REQUIREMENTS.contains(&w) {
                        return Err(r.unsupported(w));
                    }
                }
            }
            Some(":types") => {
                for t in typed_names(&items[1..])? {
                    if t != "object" {
                        return Err(sec.unsupported(&format!("type `{t}`")));
                    }
                }
            }
            Some(":constants") => {
                for c in typed_names(&items[1..])? {
                    if c != OBJECT {
                        return Err(sec.unsupported(&format!("constant `{c}`")));
                    }
                }
            }
            Some(":predicates") => {
                for p in &items[1..] {
                    let pi = p.list()?;
                    let name = pi
                        .first()
                        .and_then(Sexp::word)
                        .ok_or_else(|| p.syntax("expected a predicate name"))?;
                    if typed_names(&pi[1..])?.len() > 1 {
                        return Err(p.unsupported("predicates with more than one argument"));
                    }
                    atoms.insert(name.to_string());
                }
            }
            Some(":action") => actions.push(parse_action(items, sec)?),
            Some(other) => return Err(sec.unsupported(other)),
            None => return Err(sec.syntax("expected a section keyword")),
        }
    }

    let proot = read_sexp(problem)?;
    let (_, sections) = define_body(&proot, "problem")?;
    let mut init = Atoms::new();
    let mut goal = (Atoms::new(), Atoms::new());
    let mut saw_domain = false;
    for sec in sections {
        let items = sec.list()?;
        match sec.head() {
            Some(":domain") => {
                let n = items.get(1).and_then(Sexp::word).ok_or_else(|| sec.syntax("expected a domain name"))?;
                if n != dname {
                    return Err(sec.syntax(format!("problem is for domain `{n}`, not `{dname}`")));
                }
                saw_domain = true;
            }
            Some(":objects") => {
                for o in typed_names(&items[1..])? {
                    if o != OBJECT {
                        return Err(sec.unsupported(&format!("object `{o}`")));
                    }
                }
            }
            Some(":init") => {
                for a in &items[1..] {
                    if a.head() == Some("not") {
                        return Err(a.unsupported("negative initial literal"));
                    }
                    init.insert(parse_atom(a, None)?);
                }
            }
            Some(":goal") => {
                let g = items.get(1).ok_or_else(|| sec.syntax("empty goal"))?;
                goal = parse_conjunction(g, None)?;
            }
            Some(other) => return Err(sec.unsupported(other)),
            None => return Err(sec.syntax("expected a section keyword")),
        }
    }
    if !saw_domain {
        return Err(proot.syntax("problem has no `(:domain ...)`"));
    }
    let p = PlanningProblem {
        domain: dname,
        atoms,
        actions,
        init,
        goal_pos: goal.0,
        goal_neg: goal.1,
    };
    p.validate()?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(xs: &[&str]) -> Atoms {
        xs.iter().map(|s| s.to_string()).collect()
    }

    fn pull_switch_problem() -> PlanningProblem {
        PlanningProblem {
            domain: "heat".into(),
            atoms: set(&["cold", "red"]),
            actions: vec![StripsAction::new("pull_switch", set(&["cold"]), set(&[]), set(&[]), set(&["cold"])).unwrap()],
            init: set(&["cold"]),
            goal_pos: set(&[]),
            goal_neg: set(&["cold"]),
        }
    }

    #[test]
    fn pull_switch_emits_expected_block() {
        let (d, p) = emit_pddl(&pull_switch_problem());
        assert!(d.contains(":precondition (and (cold x))"), "{d}");
        assert!(d.contains(":effect (and (not (cold x)))"), "{d}");
        assert!(p.contains("(:goal (and (not (cold x))))"), "{p}");
    }

    #[test]
    fn round_trip() {
        let prob = pull_switch_problem();
        let (d, p) = emit_pddl(&prob);
        assert_eq!(parse_pddl(&d, &p).unwrap(), prob);
    }

    #[test]
    fn empty_goal_emits_empty_and() {
        let mut prob = pull_switch_problem();
        prob.goal_neg.clear();
        let (d, p) = emit_pddl(&prob);
        assert!(p.contains("(:goal (and))"));
        assert_eq!(parse_pddl(&d, &p).unwrap(), prob);
        assert_eq!(solve(&prob).unwrap(), Some(vec![]));
    }

    #[test]
    fn solves_pull_switch() {
        assert_eq!(solve(&pull_switch_problem()).unwrap(), Some(vec!["pull_switch".to_string()]));
    }

    #[test]
    fn unreachable_goal_is_no_plan() {
        let mut prob = pull_switch_problem();
        prob.goal_pos = set(&["red"]);
        assert_eq!(solve(&prob).unwrap(), None);
    }

    #[test]
    fn formatting_variations_parse_identically() {
        let prob = pull_switch_problem();
        let (d, p) = emit_pddl(&prob);
        let d2 = "; learned domain\n(DEFINE (domain heat)\n(:requirements :strips :typing)\n(:types object)\n\
                  (:predicates (cold ?o - object)   (red ?o))\n\
                  (:action pull_switch ; the switch\n :parameters (?r - object)\n\
                  :precondition (cold ?r)\n :effect (and (not (cold ?r)))))";
        let p2 = "(define (problem other)\n (:domain heat)\n (:objects x - object)\n (:init (cold x))\n (:goal (not (cold x))))";
        assert_eq!(parse_pddl(d2, p2).unwrap(), parse_pddl(&d, &p).unwrap());
    }

    #[test]
    fn unsupported_features_are_named() {
        let (d, p) = emit_pddl(&pull_switch_problem());
        let bad = d.replace(":negative-preconditions", ":quantified-preconditions");
        match parse_pddl(&bad, &p).unwrap_err() {
            PlanError::Unsupported { feature, .. } => assert_eq!(feature, ":quantified-preconditions"),
            e => panic!("{e}"),
        }
        let bad = d.replace("(and (cold x))", "(forall (?y) (cold ?y))");
        assert!(matches!(
            parse_pddl(&bad, &p).unwrap_err(),
            PlanError::Unsupported { feature, .. } if feature == "forall"
        ));
    }

    #[test]
    fn syntax_errors_carry_location() {
        let (d, p) = emit_pddl(&pull_switch_problem());
        let truncated = &d[..d.len() - 3];
        match parse_pddl(truncated, &p).unwrap_err() {
            PlanError::Syntax { line, col, .. } => assert_eq!((line, col), (1, 1)),
            e => panic!("{e}"),
        }
        match parse_pddl(&d, "(define (problem q)\n  (:domain heat)\n  (:init (cold x)))\n  )").unwrap_err() {
            PlanError::Syntax { line, col, .. } => assert_eq!((line, col), (4, 3)),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn inconsistent_action_rejected() {
        assert!(matches!(
            StripsAction::new("a", set(&["p"]), set(&["p"]), set(&[]), set(&[])),
            Err(PlanError::Inconsistent { .. })
        ));
        assert!(StripsAction::new("a", set(&[]), set(&[]), set(&["q"]), set(&["q"])).is_err());
    }

    #[test]
    fn replay_detects_inapplicable_step() {
        let prob = pull_switch_problem();
        let plan = vec!["pull_switch".to_string(), "pull_switch".to_string()];
        assert!(prob.replay(&plan).is_err());
        assert!(prob.is_valid_plan(&plan[..1]));
    }
}
