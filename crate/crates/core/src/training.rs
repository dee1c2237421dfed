//! Controllers and learners: the precooling rule, DDT and MLP policies
//! searched with CEM or REINFORCE, and differentiable predictive control of
//! LNN policies through the toy process.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{dense_layer, Activation, Real, Tape};
use crate::ddt::{warm_start_precool, ActionLevels, Ddt, DdtError, IntegerRegularizer, PRECOOL_ATTRIBUTES};
use crate::grounding::{Comparator, GroundingError, SoftPredicate};
use crate::lnn::{crispen_formula, weight_mask, Alpha, Expr, Formula, GateKind, LnnError};
use crate::optim::Adam;
use crate::sim::{
    building_step, episode_cost, observe, toy_step, BuildingState, Controller, EnvConfig, PriceScenario, Profile,
    SimError, ToyConfig, ToyHvacState, ToyTrace,
};

#[derive(Debug, Error)]
pub enum TrainingError {
    #[error("simulator: {0}")]
    Sim(#[from] SimError),
    #[error("decision tree: {0}")]
    Ddt(#[from] DdtError),
    #[error("lnn: {0}")]
    Lnn(#[from] LnnError),
    #[error("grounding: {0}")]
    Grounding(#[from] GroundingError),
    #[error("training diverged at episode {episode}: {msg}")]
    Diverged { episode: usize, msg: String },
    #[error("policy is not crisp after {episodes} episodes: {source}")]
    NotCrisp {
        episodes: usize,
        source: LnnError,
        /// Relaxed policy of the first failed run, annotated.
        relaxed: String,
        log: Vec<TrainLogRow>,
    },
    #[error("configuration: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, TrainingError>;

// ---------------------------------------------------------------------------
// Controllers

/// Precooling rule: expensive now → 30 °C, expensive soon → 15 °C,
/// otherwise 20 °C.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbcController {
    pub threshold: f64,
    pub high: f64,
    pub precool: f64,
    pub normal: f64,
}

impl Default for RbcController {
    fn default() -> Self {
        RbcController {
            threshold: 1.5,
            high: 30.0,
            precool: 15.0,
            normal: 20.0,
        }
    }
}

impl RbcController {
    pub fn act_prices(&self, p_cur: f64, p_fut: f64) -> f64 {
        if p_cur > self.threshold {
            self.high
        } else if p_fut > self.threshold {
            self.precool
        } else {
            self.normal
        }
    }
}

pub fn rbc_act(p_cur: f64, p_fut: f64) -> f64 {
    RbcController::default().act_prices(p_cur, p_fut)
}

impl Controller for RbcController {
    fn name(&self) -> &str {
        "RBC"
    }
    fn profile(&self) -> Profile {
        Profile::Rbc
    }
    fn act(&self, obs: &[f64]) -> f64 {
        self.act_prices(obs[0], obs[1])
    }
}

/// A decision tree acting on the `(T_in, T_out, P_cur, P_fut)` profile,
/// either with its soft action or by hard routing.
#[derive(Debug, Clone, PartialEq)]
pub struct DdtController {
    pub name: String,
    pub tree: Ddt,
    pub crisp: bool,
}

impl DdtController {
    pub fn new(name: &str, tree: Ddt, crisp: bool) -> Result<Self> {
        if tree.input_dim() != PRECOOL_ATTRIBUTES.len() {
            return Err(TrainingError::Config(format!(
                "tree reads {} inputs, the DDT profile has {}",
                tree.input_dim(),
                PRECOOL_ATTRIBUTES.len()
            )));
        }
        Ok(DdtController {
            name: name.to_string(),
            tree,
            crisp,
        })
    }
}

impl Controller for DdtController {
    fn name(&self) -> &str {
        &self.name
    }
    fn profile(&self) -> Profile {
        Profile::Ddt
    }
    fn act(&self, obs: &[f64]) -> f64 {
        let out = if self.crisp {
            self.tree.crisp_action(obs)
        } else {
            self.tree.soft_action(obs)
        };
        out.expect("observation width checked at construction")
    }
}

/// One-hidden-layer tanh network on the full observation. Inputs are scaled
/// by fixed constants; the output maps to `22.5 ± 7.5` °C.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpController {
    pub input_dim: usize,
    pub hidden: usize,
    pub params: Vec<f64>,
}

const MLP_CENTER: f64 = 22.5;
const MLP_HALF_RANGE: f64 = 7.5;

impl MlpController {
    pub fn num_params(input_dim: usize, hidden: usize) -> usize {
        hidden * input_dim + hidden + hidden + 1
    }

    pub fn random<R: Rng>(input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let n = Self::num_params(input_dim, hidden);
        let scale = 1.0 / (input_dim as f64).sqrt();
        let params = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                z * scale
            })
            .collect();
        MlpController {
            input_dim,
            hidden,
            params,
        }
    }

    /// Full-profile observation mapped to roughly unit scale.
    pub fn scale(obs: &[f64]) -> Vec<f64> {
        obs.iter()
            .enumerate()
            .map(|(i, &v)| match i {
                0 | 1 => (v - 22.0) / 10.0,
                2 => v / 24.0,
                3 => v / 30.0,
                4 => v / 1000.0,
                5 => v / 3.0,
                _ => v / 2.0,
            })
            .collect()
    }

    pub fn forward(&self, obs: &[f64]) -> f64 {
        let x = Self::scale(obs);
        let (d, h) = (self.input_dim, self.hidden);
        let w1: Vec<Vec<f64>> = (0..h).map(|r| self.params[r * d..(r + 1) * d].to_vec()).collect();
        let b1 = &self.params[h * d..h * d + h];
        let hidden = dense_layer(&w1, b1, &x, Activation::Tanh).expect("layer shapes fixed at construction");
        let w2 = vec![self.params[h * d + h..h * d + 2 * h].to_vec()];
        let b2 = &self.params[h * d + 2 * h..];
        let z = dense_layer(&w2, b2, &hidden, Activation::Tanh).expect("layer shapes fixed at construction")[0];
        MLP_CENTER + MLP_HALF_RANGE * z
    }
}

impl Controller for MlpController {
    fn name(&self) -> &str {
        "MLP"
    }
    fn profile(&self) -> Profile {
        Profile::Full
    }
    fn act(&self, obs: &[f64]) -> f64 {
        self.forward(obs)
    }
}

// ---------------------------------------------------------------------------
// Configuration and logs

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Cem,
    Pg,
    Dpc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub lr: f64,
    pub episodes: usize,
    /// CEM samples per iteration.
    pub population: usize,
    pub elite_frac: f64,
    /// Initial CEM sampling standard deviation.
    pub init_std: f64,
    /// Lower bound on the CEM standard deviation after refitting.
    pub std_floor: f64,
    /// Gaussian action noise for policy gradient, °C.
    pub exploration_std: f64,
    pub baseline_decay: f64,
    pub regularizer: IntegerRegularizer,
    /// Per-episode sharpness growth for DPC.
    pub eta: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            algorithm: Algorithm::Cem,
            lr: 0.01,
            episodes: 25,
            population: 24,
            elite_frac: 0.25,
            init_std: 0.5,
            std_floor: 0.02,
            exploration_std: 1.0,
            baseline_decay: 0.9,
            regularizer: IntegerRegularizer::new(2, 0.01),
            eta: 1.15,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(TrainingError::Config(m));
        if self.episodes == 0 {
            return bad("episodes must be positive".into());
        }
        if self.population < 2 {
            return bad(format!("population must be at least 2, got {}", self.population));
        }
        if !(self.elite_frac > 0.0 && self.elite_frac <= 1.0) {
            return bad(format!("elite_frac must be in (0, 1], got {}", self.elite_frac));
        }
        for (name, v) in [
            ("lr", self.lr),
            ("init_std", self.init_std),
            ("std_floor", self.std_floor),
            ("exploration_std", self.exploration_std),
            ("regularizer.lambda", self.regularizer.lambda),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        if !(0.0..1.0).contains(&self.baseline_decay) {
            return bad(format!("baseline_decay must be in [0, 1), got {}", self.baseline_decay));
        }
        if self.regularizer.p < 2 {
            return bad(format!("regularizer p must be at least 2, got {}", self.regularizer.p));
        }
        if !(self.eta >= 1.0) {
            return bad(format!("eta must be at least 1, got {}", self.eta));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub episode: usize,
    pub cost: f64,
    pub regularizer: f64,
    pub residual: f64,
    pub max_distance: f64,
}

pub fn write_train_log<W: Write>(rows: &[TrainLogRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r).map_err(|e| TrainingError::Io(e.to_string()))?;
    }
    out.flush().map_err(|e| TrainingError::Io(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrispnessReport {
    pub distances: Vec<f64>,
    pub max: f64,
    pub mean: f64,
}

/// `|w − round(w)|` per weight with summary statistics.
pub fn crispness_report(weights: &[f64]) -> CrispnessReport {
    let distances: Vec<f64> = weights.iter().map(|w| (w - w.round()).abs()).collect();
    let max = distances.iter().cloned().fold(0.0, f64::max);
    let mean = if distances.is_empty() {
        0.0
    } else {
        distances.iter().sum::<f64>() / distances.len() as f64
    };
    CrispnessReport { distances, max, mean }
}

pub fn ddt_crispness(t: &Ddt) -> CrispnessReport {
    let w: Vec<f64> = t.nodes.iter().flat_map(|n| n.weights.iter().copied()).collect();
    crispness_report(&w)
}

pub fn lnn_crispness(f: &Formula) -> CrispnessReport {
    let w: Vec<f64> = f
        .params()
        .into_iter()
        .zip(weight_mask(f))
        .filter(|(_, is_w)| *is_w)
        .map(|(v, _)| v)
        .collect();
    crispness_report(&w)
}

// ---------------------------------------------------------------------------
// Cross-entropy method

struct CemResult {
    best: Vec<f64>,
    best_objective: f64,
    initial_objective: f64,
    log: Vec<TrainLogRow>,
}

/// Diagonal-Gaussian CEM minimizing `objective`, which returns
/// `(episode cost, regularizer)`. Samples are drawn serially from the seeded
/// generator and scored in parallel, so results do not depend on thread
/// count. The best parameters ever scored are returned.
fn cem(
    init: &[f64],
    cfg: &TrainConfig,
    project: impl Fn(&mut [f64]),
    objective: impl Fn(&[f64]) -> Result<(f64, f64)> + Sync,
    distance: impl Fn(&[f64]) -> f64,
) -> Result<CemResult> {
    cfg.validate()?;
    let n = init.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut mean = init.to_vec();
    let mut std = vec![cfg.init_std; n];
    let (c0, r0) = objective(init)?;
    let initial_objective = c0 + r0;
    let mut best = (init.to_vec(), initial_objective, c0, r0);
    let mut log = vec![TrainLogRow {
        episode: 0,
        cost: c0,
        regularizer: r0,
        residual: 0.0,
        max_distance: distance(init),
    }];
    let n_elite = ((cfg.population as f64 * cfg.elite_frac).ceil() as usize).clamp(1, cfg.population);
    for it in 1..=cfg.episodes {
        let samples: Vec<Vec<f64>> = (0..cfg.population)
            .map(|_| {
                let mut p: Vec<f64> = (0..n)
                    .map(|j| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        mean[j] + std[j] * z
                    })
                    .collect();
                project(&mut p);
                p
            })
            .collect();
        let scores: Vec<(f64, f64)> = samples.par_iter().map(|p| objective(p)).collect::<Result<_>>()?;
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.sort_by(|&a, &b| {
            let (sa, sb) = (scores[a].0 + scores[a].1, scores[b].0 + scores[b].1);
            sa.total_cmp(&sb).then(a.cmp(&b))
        });
        if order.iter().any(|&i| !(scores[i].0 + scores[i].1).is_finite()) {
            return Err(TrainingError::Diverged {
                episode: it,
                msg: "non-finite episode cost".into(),
            });
        }
        let elites = &order[..n_elite];
        let top = elites[0];
        let top_obj = scores[top].0 + scores[top].1;
        if top_obj < best.1 {
            best = (samples[top].clone(), top_obj, scores[top].0, scores[top].1);
        }
        for j in 0..n {
            let m = elites.iter().map(|&i| samples[i][j]).sum::<f64>() / n_elite as f64;
            let v = elites.iter().map(|&i| (samples[i][j] - m).powi(2)).sum::<f64>() / n_elite as f64;
            mean[j] = m;
            std[j] = v.sqrt().max(cfg.std_floor);
        }
        log::debug!("cem iteration {it}: best objective {:.4}", best.1);
        log.push(TrainLogRow {
            episode: it,
            cost: best.2,
            regularizer: best.3,
            residual: 0.0,
            max_distance: distance(&best.0),
        });
    }
    Ok(CemResult {
        best: best.0,
        best_objective: best.1,
        initial_objective,
        log,
    })
}

fn clamp_sharpness(tree: &Ddt, p: &mut [f64]) {
    for i in tree.sharpness_positions() {
        p[i] = p[i].max(1e-3);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedDdt {
    pub policy: Ddt,
    /// Episode cost plus regularizer of the input policy.
    pub initial_objective: f64,
    pub best_objective: f64,
    pub log: Vec<TrainLogRow>,
}

fn check_tree(env: &EnvConfig, policy: &Ddt) -> Result<()> {
    let dim = Profile::Ddt.dim(env);
    if policy.input_dim() != dim {
        return Err(TrainingError::Config(format!(
            "tree reads {} inputs, the DDT profile has {dim}",
            policy.input_dim()
        )));
    }
    Ok(())
}

fn ddt_objective(env: &EnvConfig, month: u32, tree: &Ddt, reg: &IntegerRegularizer) -> Result<(f64, f64)> {
    let c = DdtController::new("ddt", tree.clone(), false)?;
    Ok((episode_cost(env, &c, month)?, reg.evaluate(tree)))
}

/// CEM over every DDT parameter, scored by soft-action episode cost on
/// `month` plus the integer regularizer.
pub fn train_cem(env: &EnvConfig, month: u32, policy: &Ddt, cfg: &TrainConfig) -> Result<TrainedDdt> {
    check_tree(env, policy)?;
    env.validate()?;
    let out = cem(
        &policy.params(),
        cfg,
        |p| clamp_sharpness(policy, p),
        |p| ddt_objective(env, month, &policy.with_params(p), &cfg.regularizer),
        |p| ddt_crispness(&policy.with_params(p)).max,
    )?;
    Ok(TrainedDdt {
        policy: policy.with_params(&out.best),
        initial_objective: out.initial_objective,
        best_objective: out.best_objective,
        log: out.log,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedMlp {
    pub policy: MlpController,
    pub initial_objective: f64,
    pub best_objective: f64,
    pub log: Vec<TrainLogRow>,
}

pub fn train_mlp_cem(env: &EnvConfig, month: u32, policy: &MlpController, cfg: &TrainConfig) -> Result<TrainedMlp> {
    let dim = Profile::Full.dim(env);
    if policy.input_dim != dim {
        return Err(TrainingError::Config(format!(
            "network reads {} inputs, the full profile has {dim}",
            policy.input_dim
        )));
    }
    let with = |p: &[f64]| MlpController {
        params: p.to_vec(),
        ..policy.clone()
    };
    let out = cem(
        &policy.params,
        cfg,
        |_| {},
        |p| Ok((episode_cost(env, &with(p), month)?, 0.0)),
        |_| 0.0,
    )?;
    Ok(TrainedMlp {
        policy: with(&out.best),
        initial_objective: out.initial_objective,
        best_objective: out.best_objective,
        log: out.log,
    })
}

// ---------------------------------------------------------------------------
// Policy gradient

/// Return-weighted Gaussian log-likelihood of recorded actions:
/// `advantage * Σ_t −(a_t − μ(x_t))² / (2σ²)`.
pub fn pg_surrogate<T: Real>(
    tree: &Ddt<T>,
    observations: &[Vec<f64>],
    actions: &[f64],
    sigma: f64,
    advantage: f64,
) -> Result<T> {
    let mut total: Option<T> = None;
    for (x, &a) in observations.iter().zip(actions) {
        let mu = tree.soft_action(x)?;
        let d = mu.rsub(a);
        let term = d * d * (-0.5 / (sigma * sigma));
        total = Some(match total {
            Some(t) => t + term,
            None => term,
        });
    }
    let total = total.ok_or_else(|| TrainingError::Config("empty episode".into()))?;
    Ok(total * advantage)
}

/// Episodic REINFORCE with a moving-average baseline. Each episode acts with
/// the soft action plus Gaussian noise, then descends the surrogate plus the
/// regularizer with Adam. The best noise-free policy seen is returned.
pub fn train_pg(env: &EnvConfig, month: u32, policy: &Ddt, cfg: &TrainConfig) -> Result<TrainedDdt> {
    cfg.validate()?;
    env.validate()?;
    check_tree(env, policy)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = policy.params();
    let mut opt = Adam::new(params.len(), cfg.lr);
    let (c0, r0) = ddt_objective(env, month, policy, &cfg.regularizer)?;
    let mut best = (params.clone(), c0 + r0);
    let mut log = vec![TrainLogRow {
        episode: 0,
        cost: c0,
        regularizer: r0,
        residual: 0.0,
        max_distance: ddt_crispness(policy).max,
    }];
    let mut baseline: Option<f64> = None;
    let sigma = cfg.exploration_std;
    for ep in 1..=cfg.episodes {
        let tree = policy.with_params(&params);
        let mut s = BuildingState::initial(env, month)?;
        let mut observations = Vec::with_capacity(env.episode_steps());
        let mut actions = Vec::with_capacity(env.episode_steps());
        for _ in 0..env.episode_steps() {
            let x = observe(env, &s, Profile::Ddt);
            let z: f64 = StandardNormal.sample(&mut rng);
            let a = tree.soft_action(&x)? + sigma * z;
            let (next, _) = building_step(env, month, &s, a.clamp(env.setpoint_min, env.setpoint_max))?;
            observations.push(x);
            actions.push(a);
            s = next;
        }
        let cost = s.cumulative_cost;
        if !cost.is_finite() {
            return Err(TrainingError::Diverged {
                episode: ep,
                msg: format!("episode cost {cost}"),
            });
        }
        let b = *baseline.get_or_insert(cost);
        let advantage = cost - b;
        baseline = Some(cfg.baseline_decay * b + (1.0 - cfg.baseline_decay) * cost);

        let tape = Tape::new();
        let vars = tape.vars(&params);
        let lifted = policy.with_params(&vars);
        let mut loss = cfg.regularizer.evaluate(&lifted);
        if sigma > 0.0 {
            loss = loss + pg_surrogate(&lifted, &observations, &actions, sigma, advantage)?;
        }
        let grads = tape.backward(loss).wrt_all(&vars);
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(TrainingError::Diverged {
                episode: ep,
                msg: "non-finite gradient".into(),
            });
        }
        opt.step(&mut params, &grads);
        clamp_sharpness(policy, &mut params);

        let current = policy.with_params(&params);
        let (c, r) = ddt_objective(env, month, &current, &cfg.regularizer)?;
        if !(c + r).is_finite() {
            return Err(TrainingError::Diverged {
                episode: ep,
                msg: format!("policy cost {c}"),
            });
        }
        if c + r < best.1 {
            best = (params.clone(), c + r);
        }
        log.push(TrainLogRow {
            episode: ep,
            cost: c,
            regularizer: r,
            residual: 0.0,
            max_distance: ddt_crispness(&current).max,
        });
    }
    Ok(TrainedDdt {
        policy: policy.with_params(&best.0),
        initial_objective: c0 + r0,
        best_objective: best.1,
        log,
    })
}

// ---------------------------------------------------------------------------
// Evaluation

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostTable {
    pub months: Vec<u32>,
    /// Controller name and one total cost per month.
    pub rows: Vec<(String, Vec<f64>)>,
}

const MONTH_NAMES: [&str; 12] = [
    "Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec",
];

impl CostTable {
    pub fn get(&self, controller: &str, month: u32) -> Option<f64> {
        let col = self.months.iter().position(|&m| m == month)?;
        self.rows.iter().find(|(n, _)| n == controller).map(|(_, v)| v[col])
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("controller");
        for &m in &self.months {
            s.push(',');
            s.push_str(MONTH_NAMES[m as usize - 1]);
        }
        s.push('\n');
        for (name, costs) in &self.rows {
            s.push_str(name);
            for c in costs {
                s.push_str(&format!(",{c:.4}"));
            }
            s.push('\n');
        }
        s
    }
}

/// Total episode cost of every controller in every month.
pub fn evaluate_controllers(env: &EnvConfig, controllers: &[&dyn Controller], months: &[u32]) -> Result<CostTable> {
    env.validate()?;
    let cells: Vec<(usize, u32)> = (0..controllers.len())
        .flat_map(|c| months.iter().map(move |&m| (c, m)))
        .collect();
    let costs: Vec<f64> = cells
        .par_iter()
        .map(|&(c, m)| Ok(episode_cost(env, controllers[c], m)?))
        .collect::<Result<_>>()?;
    let rows = controllers
        .iter()
        .enumerate()
        .map(|(c, ctl)| {
            (
                ctl.name().to_string(),
                costs[c * months.len()..(c + 1) * months.len()].to_vec(),
            )
        })
        .collect();
    Ok(CostTable {
        months: months.to_vec(),
        rows,
    })
}

// ---------------------------------------------------------------------------
// Model-free experiment

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MfrlConfig {
    pub train: TrainConfig,
    pub train_month: u32,
    pub months: Vec<u32>,
    pub warm_sharpness: f64,
    /// CEM sampling std for the warm-started tree.
    pub warm_std: f64,
    pub depth: usize,
    pub cold_sharpness: f64,
    pub cold_comparator_range: (f64, f64),
    pub mlp_hidden: usize,
}

impl Default for MfrlConfig {
    fn default() -> Self {
        MfrlConfig {
            train: TrainConfig::default(),
            train_month: 6,
            months: (3..=12).collect(),
            warm_sharpness: 100.0,
            warm_std: 0.05,
            depth: 2,
            cold_sharpness: 1.0,
            cold_comparator_range: (-10.0, 10.0),
            mlp_hidden: 16,
        }
    }
}

impl MfrlConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        for &m in self.months.iter().chain([&self.train_month]) {
            if !(1..=12).contains(&m) {
                return Err(TrainingError::Config(format!("month {m} is not in 1..=12")));
            }
        }
        if self.months.is_empty() {
            return Err(TrainingError::Config("no evaluation months".into()));
        }
        if self.depth == 0 || self.mlp_hidden == 0 {
            return Err(TrainingError::Config("depth and mlp_hidden must be positive".into()));
        }
        if !(self.warm_sharpness > 0.0 && self.cold_sharpness > 0.0) {
            return Err(TrainingError::Config("sharpness must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MfrlOutcome {
    pub table: CostTable,
    pub warm_start: Ddt,
    pub warm: TrainedDdt,
    pub cold_start: Ddt,
    pub cold: TrainedDdt,
    pub mlp: TrainedMlp,
}

pub const RBC_ROW: &str = "RBC";
pub const DDT_WARM_ROW: &str = "DDT-warm";
pub const DDT_COLD_ROW: &str = "DDT-cold";
pub const MLP_ROW: &str = "MLP";

/// Trains warm- and cold-started trees and the MLP on the training month,
/// then evaluates them with the rule across the configured months. Each
/// learner draws from its own seed derived from `cfg.train.seed`.
pub fn run_mfrl(env: &EnvConfig, cfg: &MfrlConfig) -> Result<MfrlOutcome> {
    cfg.validate()?;
    env.validate()?;
    let levels = ActionLevels::setpoints();
    let seed = cfg.train.seed;
    let attrs: Vec<String> = PRECOOL_ATTRIBUTES.iter().map(|s| s.to_string()).collect();

    let warm_start = warm_start_precool(&levels, cfg.warm_sharpness)?;
    let warm_cfg = TrainConfig {
        init_std: cfg.warm_std,
        std_floor: cfg.train.std_floor.min(cfg.warm_std),
        seed: seed.wrapping_add(1),
        ..cfg.train.clone()
    };
    let warm = train_cem(env, cfg.train_month, &warm_start, &warm_cfg)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2));
    let cold_start = Ddt::random(
        cfg.depth,
        attrs,
        levels,
        cfg.cold_comparator_range,
        cfg.cold_sharpness,
        &mut rng,
    );
    let cold_cfg = TrainConfig {
        seed: seed.wrapping_add(3),
        ..cfg.train.clone()
    };
    let cold = train_cem(env, cfg.train_month, &cold_start, &cold_cfg)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(4));
    let mlp0 = MlpController::random(Profile::Full.dim(env), cfg.mlp_hidden, &mut rng);
    let mlp_cfg = TrainConfig {
        seed: seed.wrapping_add(5),
        std_floor: cfg.train.std_floor,
        ..cfg.train.clone()
    };
    let mlp = train_mlp_cem(env, cfg.train_month, &mlp0, &mlp_cfg)?;

    let rbc = RbcController::default();
    let warm_ctl = DdtController::new(DDT_WARM_ROW, warm.policy.clone(), false)?;
    let cold_ctl = DdtController::new(DDT_COLD_ROW, cold.policy.clone(), false)?;
    let table = evaluate_controllers(env, &[&rbc, &warm_ctl, &cold_ctl, &mlp.policy], &cfg.months)?;
    Ok(MfrlOutcome {
        table,
        warm_start,
        warm,
        cold_start,
        cold,
        mlp,
    })
}

// ---------------------------------------------------------------------------
// Differentiable predictive control

/// How an antecedent predicate is grounded in the toy state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyInput {
    /// Sigmoid of a comparison on a raw toy attribute (`T` or `price`).
    Soft { attribute: String, predicate: SoftPredicate },
    /// Uninformative random truth value, redrawn every step.
    Fake,
}

/// `Implies(antecedent, consequent)`; the control is the antecedent's
/// truth value, which modus ponens transfers to the consequent.
#[derive(Debug, Clone, PartialEq)]
pub struct LnnPolicy {
    pub formula: Formula,
    pub inputs: BTreeMap<String, PolicyInput>,
}

pub const TEMPLATE_UNIFORM: &str = "Implies(And(Hot(x), Fake(x)), TurnACOn(x))";
pub const TEMPLATE_SPIKE: &str = "Implies(Or(And(Hot(x), PowerCheap(x)), And(Fake1(x), Fake2(x))), TurnACOn(x))";

impl LnnPolicy {
    pub fn new(formula: Formula, inputs: BTreeMap<String, PolicyInput>) -> Result<Self> {
        let p = LnnPolicy { formula, inputs };
        p.consequent()?;
        let mut preds = Vec::new();
        collect_preds(p.antecedent()?, &mut preds);
        for name in preds {
            if !p.inputs.contains_key(&name) {
                return Err(TrainingError::Config(format!("predicate `{name}` has no grounding")));
            }
        }
        Ok(p)
    }

    pub fn antecedent(&self) -> Result<&Expr> {
        antecedent(&self.formula)
    }

    pub fn consequent(&self) -> Result<&str> {
        match &self.formula.root {
            Expr::Gate(g) if g.kind == GateKind::Implies && g.children.len() == 2 => match &g.children[1] {
                Expr::Pred(name) => Ok(name),
                _ => Err(TrainingError::Config("consequent must be a predicate".into())),
            },
            _ => Err(TrainingError::Config("policy formula must be a binary Implies".into())),
        }
    }

    fn softs_mut(&mut self) -> impl Iterator<Item = &mut SoftPredicate> {
        self.inputs.values_mut().filter_map(|i| match i {
            PolicyInput::Soft { predicate, .. } => Some(predicate),
            PolicyInput::Fake => None,
        })
    }

    pub fn fake_names(&self) -> Vec<String> {
        self.inputs
            .iter()
            .filter(|(_, i)| matches!(i, PolicyInput::Fake))
            .map(|(n, _)| n.clone())
            .collect()
    }

    /// Relaxed control for the given raw attributes and fake draws.
    pub fn act<T: Real>(
        &self,
        antecedent: &Expr<T>,
        raw: &BTreeMap<&str, T>,
        fakes: &BTreeMap<String, f64>,
    ) -> Result<T> {
        let anchor = *raw.values().next().ok_or_else(|| TrainingError::Config("no raw attributes".into()))?;
        let mut b = BTreeMap::new();
        for (name, input) in &self.inputs {
            let v = match input {
                PolicyInput::Soft { attribute, predicate } => {
                    let x = *raw
                        .get(attribute.as_str())
                        .ok_or_else(|| GroundingError::MissingAttribute(attribute.clone()))?;
                    predicate.eval(x)
                }
                PolicyInput::Fake => anchor.constant(fakes[name]),
            };
            b.insert(name.clone(), v);
        }
        Ok(antecedent.evaluate(&b)?)
    }
}

fn antecedent<T>(f: &Formula<T>) -> Result<&Expr<T>> {
    match &f.root {
        Expr::Gate(g) if g.kind == GateKind::Implies && g.children.len() == 2 => Ok(&g.children[0]),
        _ => Err(TrainingError::Config("policy formula must be a binary Implies".into())),
    }
}

fn collect_preds<T>(e: &Expr<T>, out: &mut Vec<String>) {
    match e {
        Expr::Pred(p) => out.push(p.clone()),
        Expr::Const(_) => {}
        Expr::Not(e) => collect_preds(e, out),
        Expr::Gate(g) => g.children.iter().for_each(|c| collect_preds(c, out)),
    }
}

/// Distribution of the random truth values bound to fake predicates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FakeValues {
    /// Fair coin over {0, 1}, the same draws the crisp rollout uses.
    Binary,
    /// Uniform on [0, 1].
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DpcConfig {
    pub lr: f64,
    pub episodes: usize,
    pub eta: f64,
    pub initial_kappa: f64,
    pub initial_gate_sharpness: f64,
    /// Weight of the LNN constraint residual in the loss.
    pub penalty: f64,
    /// Independent runs from derived seeds; the best crisp rule is kept.
    pub restarts: usize,
    pub fake_values: FakeValues,
    pub crisp_tol: f64,
    pub hot_threshold: f64,
    pub cheap_threshold: f64,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for DpcConfig {
    fn default() -> Self {
        DpcConfig {
            lr: 0.1,
            episodes: 200,
            eta: 1.02,
            initial_kappa: 10.0,
            initial_gate_sharpness: 8.0,
            penalty: 10.0,
            restarts: 8,
            fake_values: FakeValues::Binary,
            crisp_tol: 0.05,
            hot_threshold: 1.75,
            cheap_threshold: 5.0,
            alpha: 0.95,
            seed: 0,
        }
    }
}

impl DpcConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lr", self.lr),
            ("initial_kappa", self.initial_kappa),
            ("initial_gate_sharpness", self.initial_gate_sharpness),
            ("crisp_tol", self.crisp_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(TrainingError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.episodes == 0 || self.restarts == 0 {
            return Err(TrainingError::Config("episodes and restarts must be positive".into()));
        }
        if !(self.eta >= 1.0) {
            return Err(TrainingError::Config(format!("eta must be at least 1, got {}", self.eta)));
        }
        if !(self.penalty >= 0.0) {
            return Err(TrainingError::Config("penalty must be non-negative".into()));
        }
        Alpha::new(self.alpha)?;
        Ok(())
    }
}

/// Rule template for the scenario with its groundings: `Hot` is
/// `T > hot_threshold`, `PowerCheap` is `price < cheap_threshold`, and
/// `Fake*` are random.
pub fn toy_policy(scenario: PriceScenario, cfg: &DpcConfig) -> Result<LnnPolicy> {
    let text = match scenario {
        PriceScenario::Uniform => TEMPLATE_UNIFORM,
        PriceScenario::Spike => TEMPLATE_SPIKE,
    };
    let mut formula = crate::lnn::parse_template_with(text, Alpha::new(cfg.alpha)?)?;
    formula.set_sharpness(cfg.initial_gate_sharpness);
    let mut inputs = BTreeMap::new();
    for name in formula.predicates() {
        let input = match name.as_str() {
            "Hot" => PolicyInput::Soft {
                attribute: "T".into(),
                predicate: SoftPredicate::new("Hot", Comparator::Gt, cfg.hot_threshold, cfg.initial_kappa)?,
            },
            "PowerCheap" => PolicyInput::Soft {
                attribute: "price".into(),
                predicate: SoftPredicate::new("PowerCheap", Comparator::Lt, cfg.cheap_threshold, cfg.initial_kappa)?,
            },
            "TurnACOn" => continue,
            n if n.starts_with("Fake") => PolicyInput::Fake,
            n => return Err(TrainingError::Config(format!("no grounding for `{n}`"))),
        };
        inputs.insert(name, input);
    }
    LnnPolicy::new(formula, inputs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpcOutcome {
    /// Relaxed policy after the last episode of the selected restart.
    pub policy: LnnPolicy,
    pub crisp: Formula,
    /// Rollout of the crisp rule with crisp predicates.
    pub trajectory: ToyTrace,
    pub log: Vec<TrainLogRow>,
    /// Index of the selected restart.
    pub restart: usize,
}

/// A single training run before crispening.
#[derive(Debug, Clone, PartialEq)]
pub struct DpcRun {
    pub policy: LnnPolicy,
    pub log: Vec<TrainLogRow>,
}

fn fake_draws(names: &[String], kind: FakeValues, rng: &mut ChaCha8Rng) -> BTreeMap<String, f64> {
    names
        .iter()
        .map(|n| {
            let v = match kind {
                FakeValues::Binary => f64::from(u8::from(rng.gen::<bool>())),
                FakeValues::Continuous => rng.gen::<f64>(),
            };
            (n.clone(), v)
        })
        .collect()
}

fn check_prices(toy: &ToyConfig, prices: &[f64]) -> Result<()> {
    if prices.len() != toy.horizon {
        return Err(TrainingError::Config(format!(
            "price path has {} steps, horizon is {}",
            prices.len(),
            toy.horizon
        )));
    }
    Ok(())
}

/// One DPC run from `seed`. Each episode unrolls the full horizon on one
/// tape, descends total cost plus the constraint penalty with Adam (weights
/// projected onto `[0, 1]`), then multiplies predicate and gate sharpness by
/// `eta`.
pub fn train_dpc_run(
    toy: &ToyConfig,
    prices: &[f64],
    policy: &LnnPolicy,
    cfg: &DpcConfig,
    seed: u64,
) -> Result<DpcRun> {
    toy.validate()?;
    cfg.validate()?;
    check_prices(toy, prices)?;
    let mut policy = policy.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fakes = policy.fake_names();
    let mask = weight_mask(&policy.formula);
    let mut params = policy.formula.params();
    let mut opt = Adam::new(params.len(), cfg.lr);
    let mut log = Vec::with_capacity(cfg.episodes);
    for ep in 0..cfg.episodes {
        let tape = Tape::new();
        let vars = tape.vars(&params);
        let lifted = policy.formula.with_params(&vars);
        let ante = antecedent(&lifted)?;
        let mut s = ToyHvacState::initial(toy, prices.to_vec()).lift(vars[0].constant(toy.t0));
        let mut total = vars[0].constant(0.0);
        for &price in prices {
            let draws = fake_draws(&fakes, cfg.fake_values, &mut rng);
            let raw: BTreeMap<&str, _> = [("T", s.temp), ("price", s.temp.constant(price))].into_iter().collect();
            let u = policy.act(ante, &raw, &draws)?;
            let (next, c) = toy_step(toy, &s, u)?;
            total = total + c;
            s = next;
        }
        let residual = crate::lnn::constraint_residual(&lifted);
        let loss = match residual {
            Some(r) => total + r * cfg.penalty,
            None => total,
        };
        let grads = tape.backward(loss).wrt_all(&vars);
        if !total.value().is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(TrainingError::Diverged {
                episode: ep,
                msg: format!("episode cost {}", total.value()),
            });
        }
        opt.step(&mut params, &grads);
        crate::lnn::project_weights(&mut params, &mask);
        policy.formula = policy.formula.with_params(&params);
        log.push(TrainLogRow {
            episode: ep,
            cost: total.value(),
            regularizer: 0.0,
            residual: residual.map(|r| r.value()).unwrap_or(0.0),
            max_distance: policy.formula.max_distance_to_integer(),
        });
        policy.formula.scale_sharpness(cfg.eta);
        for sp in policy.softs_mut() {
            sp.kappa *= cfg.eta;
        }
    }
    Ok(DpcRun { policy, log })
}

/// Seed of restart `r`; restart 0 uses `cfg.seed` itself.
pub fn restart_seed(seed: u64, r: usize) -> u64 {
    seed.wrapping_add((r as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Runs `cfg.restarts` seeded DPC runs and keeps the one whose crispened
/// rule has the lowest crisp-rollout cost, preferring fewer predicates and
/// then the earlier restart. Fails with `NotCrisp` when no run crispens.
pub fn train_dpc(toy: &ToyConfig, prices: &[f64], policy: &LnnPolicy, cfg: &DpcConfig) -> Result<DpcOutcome> {
    let mut best: Option<(f64, usize, DpcOutcome)> = None;
    let mut first_failure = None;
    for r in 0..cfg.restarts.max(1) {
        let seed = restart_seed(cfg.seed, r);
        let run = train_dpc_run(toy, prices, policy, cfg, seed)?;
        let crisp = match crispen_formula(&run.policy.formula, cfg.crisp_tol) {
            Ok(c) if antecedent(&c).is_ok() => c,
            Ok(c) => {
                first_failure.get_or_insert((
                    LnnError::Invalid(format!("crisp rule {c} is no longer an implication")),
                    run,
                ));
                continue;
            }
            Err(e) => {
                log::info!("dpc restart {r} did not crispen: {e}");
                first_failure.get_or_insert((e, run));
                continue;
            }
        };
        let trajectory = crisp_rollout(toy, prices, &run.policy, &crisp, seed)?;
        let size = crisp.predicates().len();
        log::info!("dpc restart {r}: {crisp}, crisp cost {}", trajectory.total);
        let better = match &best {
            None => true,
            Some((cost, n, _)) => (trajectory.total, size) < (*cost, *n),
        };
        if better {
            best = Some((
                trajectory.total,
                size,
                DpcOutcome {
                    policy: run.policy,
                    crisp,
                    trajectory,
                    log: run.log,
                    restart: r,
                },
            ));
        }
    }
    match (best, first_failure) {
        (Some((_, _, out)), _) => Ok(out),
        (None, Some((source, run))) => Err(TrainingError::NotCrisp {
            episodes: cfg.episodes,
            source,
            relaxed: run.policy.formula.to_annotated(),
            log: run.log,
        }),
        (None, None) => unreachable!("at least one restart runs"),
    }
}

/// Rolls out a crisp rule with crisp predicates (`u ∈ {0, 1}`). Fake
/// predicates still present are drawn as seeded random booleans.
pub fn crisp_rollout(toy: &ToyConfig, prices: &[f64], policy: &LnnPolicy, crisp: &Formula, seed: u64) -> Result<ToyTrace> {
    check_prices(toy, prices)?;
    let ante = antecedent(crisp)?;
    let rule = Formula::new(ante.clone(), crisp.alpha);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut s = ToyHvacState::initial(toy, prices.to_vec());
    let mut controls = Vec::with_capacity(toy.horizon);
    for &price in prices {
        let mut b = BTreeMap::new();
        for (name, input) in &policy.inputs {
            let v = match input {
                PolicyInput::Soft { attribute, predicate } => {
                    let x = if attribute == "T" { s.temp } else { price };
                    predicate.eval_crisp(x)
                }
                PolicyInput::Fake => rng.gen::<bool>(),
            };
            b.insert(name.clone(), v);
        }
        let on = match &rule.root {
            Expr::Const(v) => *v,
            _ => rule.evaluate_crisp(&b)?,
        };
        let u = if on { 1.0 } else { 0.0 };
        s = toy_step(toy, &s, u)?.0;
        controls.push(u);
    }
    Ok(crate::sim::toy_rollout(toy, prices, &controls)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lnn::parse_template;
    use crate::ddt::integer_regularizer;
    use approx::assert_relative_eq;

    #[test]
    fn rbc_rules() {
        assert_eq!(rbc_act(2.0, 2.0), 30.0);
        assert_eq!(rbc_act(0.2, 2.0), 15.0);
        assert_eq!(rbc_act(0.2, 0.2), 20.0);
        assert_eq!(rbc_act(1.5, 1.5), 20.0);
    }

    #[test]
    fn rbc_june_peak_steps_use_high_setpoint() {
        let env = EnvConfig::default();
        let tr = crate::sim::episode(&env, &RbcController::default(), 6).unwrap();
        for s in &tr.steps {
            if (12.0..18.0).contains(&s.hour) {
                assert_eq!(s.setpoint, 30.0);
            }
        }
    }

    #[test]
    fn warm_start_is_crisp() {
        let t = warm_start_precool(&ActionLevels::setpoints(), 100.0).unwrap();
        assert_eq!(ddt_crispness(&t).max, 0.0);
        assert_eq!(crispness_report(&[0.5]).max, 0.5);
    }

    fn short_env() -> EnvConfig {
        EnvConfig {
            days: 2,
            ..EnvConfig::default()
        }
    }

    #[test]
    fn cem_zero_std_returns_initial_policy() {
        let env = short_env();
        let t = warm_start_precool(&ActionLevels::setpoints(), 100.0).unwrap();
        let cfg = TrainConfig {
            init_std: 0.0,
            std_floor: 0.0,
            episodes: 3,
            population: 4,
            ..TrainConfig::default()
        };
        let out = train_cem(&env, 6, &t, &cfg).unwrap();
        assert_eq!(out.policy, t);
    }

    #[test]
    fn cem_never_returns_worse_and_is_deterministic() {
        let env = short_env();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let attrs = PRECOOL_ATTRIBUTES.iter().map(|s| s.to_string()).collect();
        let t = Ddt::random(2, attrs, ActionLevels::setpoints(), (-10.0, 10.0), 1.0, &mut rng);
        let cfg = TrainConfig {
            episodes: 4,
            population: 8,
            ..TrainConfig::default()
        };
        let a = train_cem(&env, 6, &t, &cfg).unwrap();
        let b = train_cem(&env, 6, &t, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.best_objective <= a.initial_objective);
        let (c, r) = ddt_objective(&env, 6, &a.policy, &cfg.regularizer).unwrap();
        assert_relative_eq!(c + r, a.best_objective);
    }

    #[test]
    fn pg_without_noise_or_step_is_identity() {
        let env = short_env();
        let t = warm_start_precool(&ActionLevels::setpoints(), 10.0).unwrap();
        let cfg = TrainConfig {
            lr: 0.0,
            exploration_std: 0.0,
            episodes: 2,
            ..TrainConfig::default()
        };
        let out = train_pg(&env, 6, &t, &cfg).unwrap();
        assert_eq!(out.policy, t);
    }

    #[test]
    fn pg_never_returns_worse() {
        let env = short_env();
        let t = warm_start_precool(&ActionLevels::setpoints(), 10.0).unwrap();
        let cfg = TrainConfig {
            lr: 0.05,
            episodes: 3,
            ..TrainConfig::default()
        };
        let out = train_pg(&env, 6, &t, &cfg).unwrap();
        assert!(out.best_objective <= out.initial_objective);
    }

    #[test]
    fn pg_surrogate_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let attrs = PRECOOL_ATTRIBUTES.iter().map(|s| s.to_string()).collect();
        let t = Ddt::random(2, attrs, ActionLevels::setpoints(), (-1.0, 1.0), 0.5, &mut rng);
        let obs = vec![vec![0.3, -0.2, 0.2, 1.4], vec![-0.5, 0.7, 2.0, 0.8]];
        let actions = vec![19.0, 23.5];
        let p = t.params();
        let tape = Tape::new();
        let vars = tape.vars(&p);
        let y = pg_surrogate(&t.with_params(&vars), &obs, &actions, 1.3, -2.0).unwrap();
        let g = tape.backward(y).wrt_all(&vars);
        let h = 1e-5;
        for i in 0..p.len() {
            let mut hi = p.clone();
            hi[i] += h;
            let mut lo = p.clone();
            lo[i] -= h;
            let f = |q: &[f64]| pg_surrogate(&t.with_params(q), &obs, &actions, 1.3, -2.0).unwrap();
            let fd = (f(&hi) - f(&lo)) / (2.0 * h);
            assert!((g[i] - fd).abs() <= 1e-6 * fd.abs().max(1.0), "param {i}: {} vs {fd}", g[i]);
        }
    }

    #[test]
    fn regularizer_shared_with_ddt_module() {
        let t = warm_start_precool(&ActionLevels::setpoints(), 10.0).unwrap();
        let reg = IntegerRegularizer::new(2, 0.5);
        assert_eq!(reg.evaluate(&t), integer_regularizer(&t, 2, 0.5));
    }

    #[test]
    fn cost_table_csv_shape() {
        let env = short_env();
        let rbc = RbcController::default();
        let c20 = crate::sim::ConstantSetpoint::new(20.0);
        let table = evaluate_controllers(&env, &[&rbc, &c20], &[1, 6]).unwrap();
        let csv = table.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "controller,Jan,Jun");
        assert!(lines[1].starts_with("RBC,"));
        assert_eq!(lines.len(), 3);
        assert_eq!(table, evaluate_controllers(&env, &[&rbc, &c20], &[1, 6]).unwrap());
    }

    #[test]
    fn mlp_output_range() {
        let env = EnvConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = MlpController::random(Profile::Full.dim(&env), 8, &mut rng);
        let s = BuildingState::initial(&env, 6).unwrap();
        let y = m.act(&observe(&env, &s, Profile::Full));
        assert!((15.0..=30.0).contains(&y));
    }

    #[test]
    fn toy_policy_structure() {
        let cfg = DpcConfig::default();
        let p = toy_policy(PriceScenario::Spike, &cfg).unwrap();
        assert_eq!(p.consequent().unwrap(), "TurnACOn");
        assert_eq!(p.fake_names(), vec!["Fake1".to_string(), "Fake2".to_string()]);
        let bad = parse_template("And(a, b)").unwrap();
        assert!(LnnPolicy::new(bad, BTreeMap::new()).is_err());
    }

    #[test]
    fn eta_one_keeps_sharpness() {
        let toy = ToyConfig::default();
        let cfg = DpcConfig {
            eta: 1.0,
            episodes: 3,
            ..DpcConfig::default()
        };
        let p = toy_policy(PriceScenario::Uniform, &cfg).unwrap();
        let prices = crate::sim::toy_price_path(&toy, PriceScenario::Uniform);
        let run = train_dpc_run(&toy, &prices, &p, &cfg, 0).unwrap();
        let sharp = |f: &Formula| match &f.root {
            Expr::Gate(g) => g.sharpness,
            _ => unreachable!(),
        };
        assert_eq!(sharp(&run.policy.formula), cfg.initial_gate_sharpness);
        for i in run.policy.inputs.values() {
            if let PolicyInput::Soft { predicate, .. } = i {
                assert_eq!(predicate.kappa, cfg.initial_kappa);
            }
        }
    }

    #[test]
    fn dpc_is_reproducible_and_logs_every_episode() {
        let toy = ToyConfig::default();
        let cfg = DpcConfig {
            episodes: 40,
            restarts: 1,
            ..DpcConfig::default()
        };
        let p = toy_policy(PriceScenario::Uniform, &cfg).unwrap();
        let prices = crate::sim::toy_price_path(&toy, PriceScenario::Uniform);
        let a = train_dpc_run(&toy, &prices, &p, &cfg, 5).unwrap();
        let b = train_dpc_run(&toy, &prices, &p, &cfg, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.log.len(), 40);
        assert_eq!(restart_seed(9, 0), 9);
    }

    #[test]
    fn crisp_rollout_of_always_on_rule() {
        let toy = ToyConfig::default();
        let cfg = DpcConfig::default();
        let p = toy_policy(PriceScenario::Uniform, &cfg).unwrap();
        let prices = crate::sim::toy_price_path(&toy, PriceScenario::Uniform);
        let rule = parse_template("Implies(Hot(x), TurnACOn(x))").unwrap();
        let tr = crisp_rollout(&toy, &prices, &p, &rule, 0).unwrap();
        assert_eq!(tr.controls, vec![1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!((tr.total - 19.0).abs() < 1e-9);
    }
}
