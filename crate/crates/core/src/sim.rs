//! Simulators: a toy differentiable cooling process and a single-zone RC
//! building with time-of-use pricing.

use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, SimError>;

// ---------------------------------------------------------------------------
// Toy cooling process

/// Parameters of the toy process. Temperature falls by `cool_rate` per
/// step with the unit on and rises by `drift` with it off; each step costs
/// `u * price + discomfort_weight * max(0, T' - setpoint)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyConfig {
    pub horizon: usize,
    pub t0: f64,
    pub setpoint: f64,
    pub cool_rate: f64,
    pub drift: f64,
    pub discomfort_weight: f64,
    pub base_price: f64,
    pub spike_high: f64,
    pub spike_step: usize,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            horizon: 10,
            t0: 5.0,
            setpoint: 2.0,
            cool_rate: 1.0,
            drift: 0.1,
            discomfort_weight: 5.0,
            base_price: 1.0,
            spike_high: 20.0,
            spike_step: 1,
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(SimError::Config("toy horizon must be positive".into()));
        }
        if self.spike_step >= self.horizon {
            return Err(SimError::Config(format!(
                "spike step {} is outside the horizon {}",
                self.spike_step, self.horizon
            )));
        }
        for (name, v) in [
            ("cool_rate", self.cool_rate),
            ("discomfort_weight", self.discomfort_weight),
            ("base_price", self.base_price),
            ("spike_high", self.spike_high),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SimError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.drift >= 0.0) {
            return Err(SimError::Config(format!("drift must be non-negative, got {}", self.drift)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriceScenario {
    Uniform,
    Spike,
}

impl FromStr for PriceScenario {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(PriceScenario::Uniform),
            "spike" => Ok(PriceScenario::Spike),
            other => Err(SimError::Usage(format!("unknown scenario `{other}` (uniform, spike)"))),
        }
    }
}

pub fn toy_price_path(cfg: &ToyConfig, scenario: PriceScenario) -> Vec<f64> {
    let mut p = vec![cfg.base_price; cfg.horizon];
    if scenario == PriceScenario::Spike && cfg.spike_step < cfg.horizon {
        p[cfg.spike_step] = cfg.spike_high;
    }
    p
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyHvacState<T> {
    pub temp: T,
    pub t: usize,
    pub prices: Vec<f64>,
}

impl ToyHvacState<f64> {
    pub fn initial(cfg: &ToyConfig, prices: Vec<f64>) -> Self {
        ToyHvacState {
            temp: cfg.t0,
            t: 0,
            prices,
        }
    }
}

impl<T: Real> ToyHvacState<T> {
    pub fn lift<U: Real>(&self, temp: U) -> ToyHvacState<U> {
        ToyHvacState {
            temp,
            t: self.t,
            prices: self.prices.clone(),
        }
    }
}

/// One step of the relaxed on/off process, differentiable in `u` and the
/// temperature.
pub fn toy_step<T: Real>(cfg: &ToyConfig, s: &ToyHvacState<T>, u: T) -> Result<(ToyHvacState<T>, T)> {
    let uv = u.value();
    if !(0.0..=1.0).contains(&uv) {
        return Err(SimError::Usage(format!("control {uv} is outside [0, 1]")));
    }
    let price = *s
        .prices
        .get(s.t)
        .ok_or_else(|| SimError::Usage(format!("step {} is past the price path", s.t)))?;
    let next = s.temp - u * cfg.cool_rate + u.rsub(1.0) * cfg.drift;
    let cost = u * price + (next - cfg.setpoint).max0() * cfg.discomfort_weight;
    Ok((
        ToyHvacState {
            temp: next,
            t: s.t + 1,
            prices: s.prices.clone(),
        },
        cost,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToyTrace {
    /// Temperature before each step, plus the final temperature.
    pub temps: Vec<f64>,
    pub controls: Vec<f64>,
    pub prices: Vec<f64>,
    pub costs: Vec<f64>,
    pub total: f64,
}

impl ToyTrace {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| SimError::Io(e.to_string());
        out.write_record(["step", "T", "u", "price", "step_cost"]).map_err(io)?;
        for i in 0..self.controls.len() {
            out.write_record([
                i.to_string(),
                self.temps[i].to_string(),
                self.controls[i].to_string(),
                self.prices[i].to_string(),
                self.costs[i].to_string(),
            ])
            .map_err(io)?;
        }
        out.flush().map_err(|e| SimError::Io(e.to_string()))
    }
}

/// Runs a fixed control sequence of length `horizon`.
pub fn toy_rollout(cfg: &ToyConfig, prices: &[f64], controls: &[f64]) -> Result<ToyTrace> {
    if controls.len() != cfg.horizon || prices.len() != cfg.horizon {
        return Err(SimError::Usage(format!(
            "expected {} controls and prices, got {} and {}",
            cfg.horizon,
            controls.len(),
            prices.len()
        )));
    }
    let mut s = ToyHvacState::initial(cfg, prices.to_vec());
    let mut trace = ToyTrace {
        temps: vec![s.temp],
        controls: controls.to_vec(),
        prices: prices.to_vec(),
        costs: Vec::with_capacity(cfg.horizon),
        total: 0.0,
    };
    for &u in controls {
        let (next, c) = toy_step(cfg, &s, u)?;
        s = next;
        trace.temps.push(s.temp);
        trace.costs.push(c);
        trace.total += c;
    }
    Ok(trace)
}

/// Minimum total cost over every on/off schedule and all schedules that
/// attain it within `tol`.
pub fn toy_exhaustive_minimum(cfg: &ToyConfig, prices: &[f64], tol: f64) -> Result<(f64, Vec<Vec<bool>>)> {
    if cfg.horizon > 20 {
        return Err(SimError::Usage(format!("horizon {} is too long to enumerate", cfg.horizon)));
    }
    let mut totals = Vec::with_capacity(1 << cfg.horizon);
    for m in 0..1u32 << cfg.horizon {
        let u: Vec<f64> = (0..cfg.horizon).map(|i| (m >> i & 1) as f64).collect();
        totals.push(toy_rollout(cfg, prices, &u)?.total);
    }
    let best = totals.iter().cloned().fold(f64::INFINITY, f64::min);
    let argmins = totals
        .iter()
        .enumerate()
        .filter(|(_, &c)| c <= best + tol)
        .map(|(m, _)| (0..cfg.horizon).map(|i| m >> i & 1 == 1).collect())
        .collect();
    Ok((best, argmins))
}

// ---------------------------------------------------------------------------
// Building environment

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalParams {
    /// Envelope resistance, °C/kW.
    pub r: f64,
    /// Thermal capacitance, kWh/°C.
    pub c: f64,
    pub cop: f64,
    /// Electric power cap of the cooling unit, kW.
    pub max_power_kw: f64,
    pub dt_hours: f64,
}

impl Default for ThermalParams {
    fn default() -> Self {
        ThermalParams {
            r: 2.0,
            c: 2.0,
            cop: 3.0,
            max_power_kw: 3.0,
            dt_hours: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TouTariff {
    pub base: f64,
    pub peak_multiplier: f64,
    pub peak_start: f64,
    pub peak_end: f64,
}

impl Default for TouTariff {
    fn default() -> Self {
        TouTariff {
            base: 0.2,
            peak_multiplier: 10.0,
            peak_start: 12.0,
            peak_end: 18.0,
        }
    }
}

impl TouTariff {
    /// Price per kWh at an hour of day; the peak window is `[start, end)`.
    pub fn price(&self, hour: f64) -> f64 {
        let h = hour.rem_euclid(24.0);
        if h >= self.peak_start && h < self.peak_end {
            self.base * self.peak_multiplier
        } else {
            self.base
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weather {
    /// Mean outdoor temperature per month, January first.
    pub monthly_mean: [f64; 12],
    pub amplitude: f64,
}

impl Default for Weather {
    fn default() -> Self {
        Weather {
            monthly_mean: [12.0, 14.0, 17.5, 21.0, 24.5, 27.0, 28.5, 28.5, 26.5, 22.0, 17.0, 13.5],
            amplitude: 6.0,
        }
    }
}

impl Weather {
    /// `mean(month) + amplitude * sin(2π(hour − 15)/24)`.
    pub fn temperature(&self, month: u32, hour: f64) -> Result<f64> {
        if !(1..=12).contains(&month) {
            return Err(SimError::Usage(format!("month {month} is not in 1..=12")));
        }
        if !hour.is_finite() {
            return Err(SimError::Usage(format!("hour {hour} is not finite")));
        }
        let phase = 2.0 * std::f64::consts::PI * (hour - 15.0) / 24.0;
        Ok(self.monthly_mean[month as usize - 1] + self.amplitude * phase.sin())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comfort {
    pub center: f64,
    pub deadband: f64,
    pub lambda: f64,
}

impl Default for Comfort {
    fn default() -> Self {
        Comfort {
            center: 22.0,
            deadband: 1.0,
            lambda: 0.1,
        }
    }
}

impl Comfort {
    pub fn penalty(&self, t_in: f64) -> f64 {
        let excess = ((t_in - self.center).abs() - self.deadband).max(0.0);
        self.lambda * excess * excess
    }
}

pub const ENV_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub schema_version: u32,
    pub thermal: ThermalParams,
    pub tariff: TouTariff,
    pub weather: Weather,
    pub comfort: Comfort,
    pub days: usize,
    pub initial_t_in: f64,
    /// Hours averaged into the future price.
    pub future_hours: usize,
    /// Hours of exact price lookahead in the full observation.
    pub lookahead_hours: usize,
    pub setpoint_min: f64,
    pub setpoint_max: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            schema_version: ENV_SCHEMA_VERSION,
            thermal: ThermalParams::default(),
            tariff: TouTariff::default(),
            weather: Weather::default(),
            comfort: Comfort::default(),
            days: 30,
            initial_t_in: 22.0,
            future_hours: 3,
            lookahead_hours: 20,
            setpoint_min: 10.0,
            setpoint_max: 35.0,
        }
    }
}

impl EnvConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: EnvConfig = serde_json::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != ENV_SCHEMA_VERSION {
            return Err(SimError::Config(format!(
                "schema_version {} is not supported (expected {ENV_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let th = &self.thermal;
        for (name, v) in [
            ("r", th.r),
            ("c", th.c),
            ("cop", th.cop),
            ("max_power_kw", th.max_power_kw),
            ("dt_hours", th.dt_hours),
            ("tariff.base", self.tariff.base),
            ("tariff.peak_multiplier", self.tariff.peak_multiplier),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SimError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if th.dt_hours / (th.r * th.c) >= 1.0 {
            return Err(SimError::Config(format!(
                "dt/(R*C) = {} must be below 1",
                th.dt_hours / (th.r * th.c)
            )));
        }
        let per_day = 24.0 / th.dt_hours;
        if (per_day - per_day.round()).abs() > 1e-9 {
            return Err(SimError::Config(format!("dt_hours {} does not divide a day", th.dt_hours)));
        }
        if self.days == 0 {
            return Err(SimError::Config("days must be positive".into()));
        }
        if self.future_hours == 0 {
            return Err(SimError::Config("future_hours must be positive".into()));
        }
        if !(self.setpoint_min < self.setpoint_max) {
            return Err(SimError::Config("setpoint_min must be below setpoint_max".into()));
        }
        if self.comfort.lambda < 0.0 || self.comfort.deadband < 0.0 {
            return Err(SimError::Config("comfort weights must be non-negative".into()));
        }
        Ok(())
    }

    pub fn steps_per_day(&self) -> usize {
        (24.0 / self.thermal.dt_hours).round() as usize
    }

    pub fn episode_steps(&self) -> usize {
        self.days * self.steps_per_day()
    }

    /// Mean tariff price over the next `future_hours` whole hours.
    pub fn future_price(&self, hour: f64) -> f64 {
        let n = self.future_hours;
        (1..=n).map(|k| self.tariff.price(hour + k as f64)).sum::<f64>() / n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingState {
    pub t_in: f64,
    pub t_out: f64,
    /// Hour of day at the start of the next step.
    pub hour: f64,
    /// Zero-based day of the episode.
    pub day: usize,
    pub cumulative_cost: f64,
    pub last_power_kw: f64,
}

impl BuildingState {
    pub fn initial(cfg: &EnvConfig, month: u32) -> Result<Self> {
        Ok(BuildingState {
            t_in: cfg.initial_t_in,
            t_out: cfg.weather.temperature(month, 0.0)?,
            hour: 0.0,
            day: 0,
            cumulative_cost: 0.0,
            last_power_kw: 0.0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepOutcome {
    pub reward: f64,
    pub price: f64,
    /// Electric energy drawn by the cooling unit, kWh.
    pub energy_kwh: f64,
    pub energy_cost: f64,
    pub discomfort: f64,
}

/// Advances the building by one step under a cooling setpoint.
///
/// The zone first drifts toward the outdoor temperature; if it ends above
/// the setpoint the unit removes heat to reach the setpoint, limited by its
/// power cap.
pub fn building_step(
    cfg: &EnvConfig,
    month: u32,
    s: &BuildingState,
    setpoint: f64,
) -> Result<(BuildingState, StepOutcome)> {
    if !(cfg.setpoint_min..=cfg.setpoint_max).contains(&setpoint) {
        return Err(SimError::Usage(format!(
            "setpoint {setpoint} is outside [{}, {}]",
            cfg.setpoint_min, cfg.setpoint_max
        )));
    }
    let th = &cfg.thermal;
    let dt = th.dt_hours;
    let free = s.t_in + dt * (s.t_out - s.t_in) / (th.r * th.c);
    let (t_in, thermal) = if free > setpoint {
        let needed = th.c * (free - setpoint);
        let q = needed.min(th.max_power_kw * dt * th.cop);
        (free - q / th.c, q)
    } else {
        (free, 0.0)
    };
    let energy = thermal / th.cop;
    let price = cfg.tariff.price(s.hour);
    let energy_cost = price * energy;
    let discomfort = cfg.comfort.penalty(t_in);
    let reward = -energy_cost - discomfort;

    let mut hour = s.hour + dt;
    let mut day = s.day;
    if hour >= 24.0 - 1e-9 {
        hour -= 24.0;
        day += 1;
    }
    let next = BuildingState {
        t_in,
        t_out: cfg.weather.temperature(month, hour)?,
        hour,
        day,
        cumulative_cost: s.cumulative_cost - reward,
        last_power_kw: energy / dt,
    };
    Ok((
        next,
        StepOutcome {
            reward,
            price,
            energy_kwh: energy,
            energy_cost,
            discomfort,
        },
    ))
}

/// Which state features a controller sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// `(P_cur, P_fut)`
    Rbc,
    /// `(T_in, T_out, P_cur, P_fut)`
    Ddt,
    /// `(T_in, T_out, hour, day, cumulative cost, last power)` followed by
    /// the exact price for each of the next `lookahead_hours` hours.
    Full,
}

impl Profile {
    pub fn fields(&self, cfg: &EnvConfig) -> Vec<String> {
        let base: &[&str] = match self {
            Profile::Rbc => &["P_cur", "P_fut"],
            Profile::Ddt => &["T_in", "T_out", "P_cur", "P_fut"],
            Profile::Full => &["T_in", "T_out", "hour", "day", "cumulative_cost", "last_power_kw"],
        };
        let mut f: Vec<String> = base.iter().map(|s| s.to_string()).collect();
        if *self == Profile::Full {
            f.extend((1..=cfg.lookahead_hours).map(|k| format!("price_h{k}")));
        }
        f
    }

    pub fn dim(&self, cfg: &EnvConfig) -> usize {
        self.fields(cfg).len()
    }
}

pub fn observe(cfg: &EnvConfig, s: &BuildingState, profile: Profile) -> Vec<f64> {
    let p_cur = cfg.tariff.price(s.hour);
    let p_fut = cfg.future_price(s.hour);
    match profile {
        Profile::Rbc => vec![p_cur, p_fut],
        Profile::Ddt => vec![s.t_in, s.t_out, p_cur, p_fut],
        Profile::Full => {
            let mut v = vec![s.t_in, s.t_out, s.hour, s.day as f64, s.cumulative_cost, s.last_power_kw];
            v.extend((1..=cfg.lookahead_hours).map(|k| cfg.tariff.price(s.hour + k as f64)));
            v
        }
    }
}

/// Maps an observation of its declared profile to a setpoint in °C.
pub trait Controller: Send + Sync {
    fn name(&self) -> &str;
    fn profile(&self) -> Profile;
    fn act(&self, obs: &[f64]) -> f64;
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceStep {
    pub step: usize,
    pub day: usize,
    pub hour: f64,
    pub t_out: f64,
    pub t_in: f64,
    pub setpoint: f64,
    /// The controller's output was outside the setpoint bounds.
    pub clamped: bool,
    pub price: f64,
    pub energy_kwh: f64,
    pub step_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trace {
    pub month: u32,
    pub observations: Vec<Vec<f64>>,
    pub steps: Vec<TraceStep>,
    pub total_cost: f64,
}

impl Trace {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| SimError::Io(e.to_string());
        out.write_record(["step", "hour", "T_out", "T_in", "setpoint", "price", "energy", "step_cost"])
            .map_err(io)?;
        for s in &self.steps {
            out.write_record([
                s.step.to_string(),
                s.hour.to_string(),
                s.t_out.to_string(),
                s.t_in.to_string(),
                s.setpoint.to_string(),
                s.price.to_string(),
                s.energy_kwh.to_string(),
                s.step_cost.to_string(),
            ])
            .map_err(io)?;
        }
        out.flush().map_err(|e| SimError::Io(e.to_string()))
    }
}

/// Runs one month-long episode. Out-of-range or non-finite setpoints are
/// clamped (non-finite to the upper bound) and flagged.
pub fn episode(cfg: &EnvConfig, controller: &dyn Controller, month: u32) -> Result<Trace> {
    cfg.validate()?;
    let mut s = BuildingState::initial(cfg, month)?;
    let n = cfg.episode_steps();
    let mut trace = Trace {
        month,
        observations: Vec::with_capacity(n),
        steps: Vec::with_capacity(n),
        total_cost: 0.0,
    };
    for step in 0..n {
        let obs = observe(cfg, &s, controller.profile());
        let raw = controller.act(&obs);
        let setpoint = if raw.is_finite() {
            raw.clamp(cfg.setpoint_min, cfg.setpoint_max)
        } else {
            cfg.setpoint_max
        };
        let (next, out) = building_step(cfg, month, &s, setpoint)?;
        trace.steps.push(TraceStep {
            step,
            day: s.day,
            hour: s.hour,
            t_out: s.t_out,
            t_in: s.t_in,
            setpoint,
            clamped: setpoint != raw,
            price: out.price,
            energy_kwh: out.energy_kwh,
            step_cost: -out.reward,
        });
        trace.observations.push(obs);
        s = next;
    }
    trace.total_cost = s.cumulative_cost;
    Ok(trace)
}

/// Total episode cost only.
pub fn episode_cost(cfg: &EnvConfig, controller: &dyn Controller, month: u32) -> Result<f64> {
    Ok(episode(cfg, controller, month)?.total_cost)
}

/// Controller that ignores its observation.
#[derive(Debug, Clone)]
pub struct ConstantSetpoint {
    pub name: String,
    pub setpoint: f64,
}

impl ConstantSetpoint {
    pub fn new(setpoint: f64) -> Self {
        ConstantSetpoint {
            name: format!("const-{setpoint}"),
            setpoint,
        }
    }
}

impl Controller for ConstantSetpoint {
    fn name(&self) -> &str {
        &self.name
    }
    fn profile(&self) -> Profile {
        Profile::Rbc
    }
    fn act(&self, _obs: &[f64]) -> f64 {
        self.setpoint
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;
    use approx::assert_relative_eq;

    #[test]
    fn toy_step_examples() {
        let cfg = ToyConfig::default();
        let s = ToyHvacState::initial(&cfg, vec![1.0; 10]);
        let (n, c) = toy_step(&cfg, &s, 1.0).unwrap();
        assert_eq!(n.temp, 4.0);
        assert_eq!(c, 1.0 + 5.0 * 2.0);
        let s1 = ToyHvacState { temp: 1.0, t: 0, prices: vec![1.0; 10] };
        let (n, c) = toy_step(&cfg, &s1, 0.0).unwrap();
        assert_relative_eq!(n.temp, 1.1);
        assert_eq!(c, 0.0);
        let s3 = ToyHvacState { temp: 3.0, t: 0, prices: vec![1.0; 10] };
        let (n, c) = toy_step(&cfg, &s3, 1.0).unwrap();
        assert_eq!(n.temp, 2.0);
        assert_eq!(c, 1.0);
        assert!(toy_step(&cfg, &s, 1.5).is_err());
        assert!(toy_step(&cfg, &s, -0.1).is_err());
    }

    #[test]
    fn toy_step_is_linear_in_u() {
        let cfg = ToyConfig::default();
        for u in [0.0, 0.25, 0.5, 0.9, 1.0] {
            let tape = Tape::new();
            let uv = tape.var(u);
            let s = ToyHvacState { temp: tape.var(3.3), t: 0, prices: vec![1.0; 10] };
            let (n, _) = toy_step(&cfg, &s, uv).unwrap();
            assert_relative_eq!(n.temp.value() - 3.3, -1.1 * u + 0.1, epsilon = 1e-12);
            assert_relative_eq!(tape.backward(n.temp).wrt(uv), -1.1);
        }
    }

    #[test]
    fn price_paths() {
        let cfg = ToyConfig::default();
        assert_eq!(toy_price_path(&cfg, PriceScenario::Uniform), vec![1.0; 10]);
        let spike = toy_price_path(&cfg, PriceScenario::Spike);
        assert_eq!(spike.len(), 10);
        assert_eq!(spike[1], 20.0);
        assert!(spike.iter().enumerate().all(|(i, &p)| i == 1 || p == 1.0));
        let ten = ToyConfig { spike_high: 10.0, ..cfg };
        assert_eq!(toy_price_path(&ten, PriceScenario::Spike)[1], 10.0);
    }

    #[test]
    fn tariff_window_is_half_open() {
        let t = TouTariff::default();
        assert_eq!(t.price(11.99), 0.2);
        assert_eq!(t.price(12.0), 2.0);
        assert_eq!(t.price(17.99), 2.0);
        assert_eq!(t.price(18.0), 0.2);
        assert_eq!(t.price(36.0), 2.0);
        for h in 0..48 {
            let r = t.price(h as f64) / t.base;
            assert!(r == 1.0 || r == 10.0);
        }
    }

    #[test]
    fn weather_formula_and_order() {
        let w = Weather::default();
        assert_eq!(w.temperature(6, 15.0).unwrap(), 27.0);
        assert_relative_eq!(w.temperature(6, 21.0).unwrap(), 33.0);
        assert_eq!(w.temperature(3, 7.5).unwrap(), w.temperature(3, 7.5).unwrap());
        assert!(w.monthly_mean[5] > w.monthly_mean[0]);
        assert!(w.temperature(13, 0.0).is_err());
    }

    fn state(t_in: f64, t_out: f64, hour: f64) -> BuildingState {
        BuildingState {
            t_in,
            t_out,
            hour,
            day: 0,
            cumulative_cost: 0.0,
            last_power_kw: 0.0,
        }
    }

    #[test]
    fn equilibrium_and_free_drift() {
        let cfg = EnvConfig::default();
        let (n, o) = building_step(&cfg, 6, &state(25.0, 25.0, 0.0), 30.0).unwrap();
        assert_eq!(n.t_in, 25.0);
        assert_eq!(o.energy_kwh, 0.0);
        let (n, o) = building_step(&cfg, 6, &state(22.0, 30.0, 0.0), 30.0).unwrap();
        assert_eq!(n.t_in, 22.0 + 0.25 * 8.0);
        assert_eq!(o.energy_kwh, 0.0);
    }

    #[test]
    fn cooling_cost_by_hand() {
        let cfg = EnvConfig::default();
        // drift 24 -> 25, cool to 20: 5 °C * 2 kWh/°C = 10 kWh thermal,
        // capped at 3 kW * 1 h * 3 = 9 kWh; electric 3 kWh at peak price 2.0.
        let (n, o) = building_step(&cfg, 6, &state(24.0, 28.0, 13.0), 20.0).unwrap();
        assert_relative_eq!(n.t_in, 25.0 - 4.5);
        assert_relative_eq!(o.energy_kwh, 3.0);
        assert_relative_eq!(o.energy_cost, 6.0);
        // uncapped: drift 21 -> 22, cool to 21: 2 kWh thermal, 2/3 kWh electric
        let (n, o) = building_step(&cfg, 6, &state(21.0, 25.0, 3.0), 21.0).unwrap();
        assert_relative_eq!(n.t_in, 21.0);
        assert_relative_eq!(o.energy_cost, 0.2 * 2.0 / 3.0);
        assert_eq!(o.discomfort, 0.0);
    }

    #[test]
    fn bad_params_rejected() {
        let mut cfg = EnvConfig::default();
        cfg.thermal.r = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = EnvConfig::default();
        cfg.thermal.r = 0.4;
        assert!(cfg.validate().is_err());
        assert!(building_step(&EnvConfig::default(), 6, &state(20.0, 20.0, 0.0), 40.0).is_err());
    }

    #[test]
    fn episode_shape_and_constant_controller() {
        let cfg = EnvConfig::default();
        let hot = ConstantSetpoint::new(35.0);
        let tr = episode(&cfg, &hot, 6).unwrap();
        assert_eq!(tr.steps.len(), 720);
        assert!(tr.steps.iter().all(|s| s.energy_kwh == 0.0));
        assert!(tr.total_cost > 0.0);
        let mut last = 0.0;
        let mut cum = 0.0;
        for s in &tr.steps {
            cum += s.step_cost;
            assert!(cum >= last);
            last = cum;
        }
        assert_relative_eq!(cum, tr.total_cost, max_relative = 1e-12);
    }

    #[test]
    fn out_of_range_setpoints_are_clamped_and_flagged() {
        let cfg = EnvConfig::default();
        let tr = episode(&cfg, &ConstantSetpoint::new(50.0), 6).unwrap();
        assert!(tr.steps.iter().all(|s| s.clamped && s.setpoint == 35.0));
    }

    #[test]
    fn observations_follow_profiles() {
        let cfg = EnvConfig::default();
        let s = state(23.0, 30.0, 11.0);
        assert_eq!(observe(&cfg, &s, Profile::Rbc), vec![0.2, 2.0]);
        assert_eq!(observe(&cfg, &s, Profile::Ddt), vec![23.0, 30.0, 0.2, 2.0]);
        let full = observe(&cfg, &s, Profile::Full);
        assert_eq!(full.len(), Profile::Full.dim(&cfg));
        assert_eq!(full.len(), 26);
        assert_eq!(full[6], 2.0);
        assert_relative_eq!(cfg.future_price(10.0), (0.2 + 2.0 + 2.0) / 3.0);
    }

    #[test]
    fn env_config_json_round_trip() {
        let cfg = EnvConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(EnvConfig::from_json(&text).unwrap(), cfg);
        assert!(EnvConfig::from_json(r#"{"schema_version": 9}"#).is_err());
    }
}
