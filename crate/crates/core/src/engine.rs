//! Experiment configs, replica execution and reports.
//!
//! Replica `i` of an experiment with seed `s` reads only the stream
//! `rng_for_replica(s, i)`: its first draw seeds the replica's own environment
//! and the rest drive the walk. Replicas run in parallel; their outcomes are
//! collected in replica order and reduced sequentially, so report bytes do not
//! depend on the worker count.

use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::{analytic_ell, DistanceLaw, Environment};
use crate::error::{Error, Result};
use crate::gas::{build_gas, GasTrajectory};
use crate::rng::{rng_for_replica, StreamRng};
use crate::stats::{
    cesaro_sum, covariance_with_jackknife, ks_statistic, variance_with_stderr, CheckResult,
    MomentAccumulator,
};
use crate::walks::{
    exact_pmf, jump_moments, martingale_coeffs, martingale_path_with, reinforced_exact_dist,
    sample_markov, sample_reinforced, symmetric_walk_pmf, JumpLaw, JumpSampler, MartingaleCoeffs,
    PathOrigin, Pmf, Regime, ReinforcedState, WalkPath, CRITICAL_MEMORY, MAX_EXACT_STEPS,
    MAX_REINFORCED_EXACT_STEPS,
};

pub const REPORT_SCHEMA: &str = "llgas-report/1";
pub const BUNDLE_SCHEMA: &str = "llgas-bundle/1";
pub const DEFAULT_WINDOW: f64 = 4.0;
pub const DEFAULT_FAILURE_BUDGET: f64 = 0.001;
/// Seed of the standard configuration.
pub const STANDARD_SEED: u64 = 1;
/// Environment variable capping the number of worker threads (0 = auto).
pub const THREADS_VAR: &str = "LLGAS_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ReinforcedTag {
    Reinforced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReinforcedSpec {
    kind: ReinforcedTag,
    p: f64,
}

/// `{"support": [...], "probs": [...]}` or `{"kind": "reinforced", "p": ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawWalk", into = "RawWalk")]
pub enum WalkSpec {
    Jump(JumpLaw),
    Reinforced { p: f64 },
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawWalk {
    Reinforced(ReinforcedSpec),
    Jump(JumpLaw),
}

impl From<RawWalk> for WalkSpec {
    fn from(raw: RawWalk) -> Self {
        match raw {
            RawWalk::Reinforced(r) => WalkSpec::Reinforced { p: r.p },
            RawWalk::Jump(j) => WalkSpec::Jump(j),
        }
    }
}

impl From<WalkSpec> for RawWalk {
    fn from(w: WalkSpec) -> Self {
        match w {
            WalkSpec::Reinforced { p } => {
                RawWalk::Reinforced(ReinforcedSpec { kind: ReinforcedTag::Reinforced, p })
            }
            WalkSpec::Jump(j) => RawWalk::Jump(j),
        }
    }
}

impl WalkSpec {
    fn max_abs_jump(&self) -> i64 {
        match self {
            WalkSpec::Jump(j) => j.max_abs_jump(),
            WalkSpec::Reinforced { .. } => 1,
        }
    }

    /// `E[S_1]`; zero for the reinforced walk, whose first step is symmetric.
    fn drift(&self) -> f64 {
        match self {
            WalkSpec::Jump(j) => jump_moments(j).mean,
            WalkSpec::Reinforced { .. } => 0.0,
        }
    }

    fn abs_mean(&self) -> f64 {
        match self {
            WalkSpec::Jump(j) => jump_moments(j).abs_mean,
            WalkSpec::Reinforced { .. } => 1.0,
        }
    }

    fn zero_jump_prob(&self) -> f64 {
        match self {
            WalkSpec::Jump(j) => j
                .support()
                .iter()
                .zip(j.probs())
                .filter(|(&v, _)| v == 0)
                .map(|(_, &p)| p)
                .sum(),
            WalkSpec::Reinforced { .. } => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Discrete,
    Continuous,
}

/// The registered checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    /// Sample variance of the rescaled gas endpoint, relative tolerance.
    Variance,
    /// KS distance of the rescaled gas endpoint to its Gaussian limit.
    Ks,
    /// Sample variance of the rescaled walk endpoint, relative tolerance.
    WalkVariance,
    /// KS distance of the rescaled walk endpoint to its Gaussian limit.
    WalkKs,
    /// KS distance of `M_n/√ν_n` to the standard normal.
    MartingaleKs,
    /// Number of replicas whose path ever has `⟨M⟩_k > ν_k`.
    QvBound,
    /// Mean of `T_n/n`, absolute tolerance.
    CollisionLln,
    /// Mean of `t/N_t`, absolute tolerance.
    CountLln,
    /// Covariance of the rescaled gas path at `(s, t)` pairs, relative tolerance.
    Covariance,
    /// Exact Cesàro sums against the realized environment, absolute tolerance.
    Cesaro,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSpec {
    pub name: CheckKind,
    pub tolerance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
    /// `(s, t)` pairs for `covariance`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub points: Vec<[f64; 2]>,
    /// Shifts for `cesaro`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub betas: Vec<i64>,
    /// Time for `count-lln`; defaults to the horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<f64>,
}

impl CheckSpec {
    pub fn new(name: CheckKind, tolerance: f64) -> Self {
        CheckSpec { name, tolerance, target: None, points: Vec::new(), betas: Vec::new(), time: None }
    }

    pub fn with_points(mut self, points: &[[f64; 2]]) -> Self {
        self.points = points.to_vec();
        self
    }

    pub fn with_betas(mut self, betas: &[i64]) -> Self {
        self.betas = betas.to_vec();
        self
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.time = Some(t);
        self
    }

    pub fn with_target(mut self, target: f64) -> Self {
        self.target = Some(target);
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
}

fn default_window() -> f64 {
    DEFAULT_WINDOW
}

fn default_budget() -> f64 {
    DEFAULT_FAILURE_BUDGET
}

fn default_name() -> String {
    "experiment".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub environment: DistanceLaw,
    pub walk: WalkSpec,
    #[serde(default)]
    pub mode: Mode,
    /// Number of steps `n` (discrete) or time scale `t` (continuous).
    pub horizon: f64,
    pub replicas: usize,
    pub seed: u64,
    #[serde(default)]
    pub fixed_environment: bool,
    /// Half-width `M` of the window on which rescaled paths live.
    #[serde(default = "default_window")]
    pub window: f64,
    /// Allows reinforced walks with `p ≥ 3/4`.
    #[serde(default)]
    pub exploratory: bool,
    /// Largest tolerated fraction of replicas that exhaust their horizon.
    #[serde(default = "default_budget")]
    pub failure_budget: f64,
    #[serde(default)]
    pub checks: Vec<CheckSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<Outputs>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    fn has(&self, kind: CheckKind) -> bool {
        self.checks.iter().any(|c| c.name == kind)
    }

    fn discrete_steps(&self) -> usize {
        self.horizon as usize
    }

    fn regime(&self) -> Regime {
        if self.exploratory {
            Regime::Exploratory
        } else {
            Regime::Diffusive
        }
    }

    /// Limit variance of the walk endpoint, if known in closed form.
    fn walk_limit_variance(&self) -> Option<f64> {
        match &self.walk {
            WalkSpec::Jump(j) => Some(jump_moments(j).variance()),
            WalkSpec::Reinforced { p } if *p < CRITICAL_MEMORY => Some(1.0 / (3.0 - 4.0 * p)),
            WalkSpec::Reinforced { .. } => None,
        }
    }

    /// Limit variance of the rescaled gas endpoint for centered walks:
    /// `ℓ²σ²` (discrete) or `ℓσ²/E|V|` (continuous).
    fn gas_limit_variance(&self, ell: f64) -> Option<f64> {
        if self.walk.drift() != 0.0 {
            return None;
        }
        let sigma2 = self.walk_limit_variance()?;
        Some(match self.mode {
            Mode::Discrete => ell * ell * sigma2,
            Mode::Continuous => ell * sigma2 / self.walk.abs_mean(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.environment.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.replicas == 0 {
            return bad("replicas must be at least 1".into());
        }
        if !(self.horizon >= 1.0 && self.horizon.is_finite()) {
            return bad(format!("horizon must be at least 1, got {}", self.horizon));
        }
        if self.mode == Mode::Discrete && self.horizon.fract() != 0.0 {
            return bad(format!("discrete horizon must be an integer, got {}", self.horizon));
        }
        if !(self.window > 0.0 && self.window.is_finite()) {
            return bad(format!("window must be positive, got {}", self.window));
        }
        if !(0.0..=1.0).contains(&self.failure_budget) {
            return bad(format!("failure budget {} outside [0, 1]", self.failure_budget));
        }
        if let WalkSpec::Reinforced { p } = self.walk {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("memory parameter {p} outside [0, 1]"));
            }
            if p >= CRITICAL_MEMORY && !self.exploratory {
                return bad(format!("p = {p} ≥ 3/4 needs \"exploratory\": true"));
            }
        }
        let ell = analytic_ell(&self.environment)?;
        for c in &self.checks {
            if !(c.tolerance >= 0.0 && c.tolerance.is_finite()) {
                return bad(format!("{:?}: tolerance must be a finite nonnegative number", c.name));
            }
            let discrete_only = matches!(
                c.name,
                CheckKind::WalkVariance
                    | CheckKind::WalkKs
                    | CheckKind::MartingaleKs
                    | CheckKind::QvBound
                    | CheckKind::CollisionLln
            );
            if discrete_only && self.mode != Mode::Discrete {
                return bad(format!("{:?} is only defined in discrete mode", c.name));
            }
            match c.name {
                CheckKind::MartingaleKs | CheckKind::QvBound => match self.walk {
                    WalkSpec::Reinforced { p } if p > 0.0 && p < CRITICAL_MEMORY => {}
                    _ => return bad(format!("{:?} needs a reinforced walk with 0 < p < 3/4", c.name)),
                },
                CheckKind::Variance | CheckKind::Ks => {
                    if c.target.is_none() && self.gas_limit_variance(ell).is_none() {
                        return bad(format!("{:?}: no default target for this walk; set \"target\"", c.name));
                    }
                }
                CheckKind::WalkVariance | CheckKind::WalkKs => {
                    if c.target.is_none() && self.walk_limit_variance().is_none() {
                        return bad(format!("{:?}: no default target for this walk; set \"target\"", c.name));
                    }
                }
                CheckKind::Covariance => {
                    if c.points.is_empty() {
                        return bad("covariance needs at least one (s, t) point".into());
                    }
                    if c.points.iter().flatten().any(|&u| !(0.0..=self.window).contains(&u)) {
                        return bad(format!("covariance points must lie in [0, {}]", self.window));
                    }
                    if c.target.is_none() && self.gas_limit_variance(ell).is_none() {
                        return bad("covariance: no default target for this walk; set \"target\"".into());
                    }
                    if self.replicas < 100 {
                        return bad("covariance needs at least 100 replicas".into());
                    }
                }
                CheckKind::Cesaro => {
                    if c.betas.is_empty() {
                        return bad("cesaro needs at least one beta".into());
                    }
                    if self.mode != Mode::Discrete {
                        return bad("cesaro is only defined in discrete mode".into());
                    }
                    self.exact_pmf()?;
                }
                CheckKind::CountLln => {
                    if let Some(t) = c.time {
                        if !(t > 0.0 && t.is_finite()) {
                            return bad(format!("count-lln time must be positive, got {t}"));
                        }
                    }
                }
                CheckKind::CollisionLln => {}
            }
            if matches!(c.name, CheckKind::Ks | CheckKind::WalkKs | CheckKind::MartingaleKs)
                && c.target.is_some_and(|t| t <= 0.0)
            {
                return bad(format!("{:?}: target variance must be positive", c.name));
            }
        }
        Ok(())
    }

    fn exact_pmf(&self) -> Result<Pmf> {
        let n = self.discrete_steps();
        match &self.walk {
            WalkSpec::Jump(j) if j.is_nearest_neighbour_symmetric() => Ok(symmetric_walk_pmf(n)),
            WalkSpec::Jump(j) if n <= MAX_EXACT_STEPS => exact_pmf(j, n),
            WalkSpec::Reinforced { p } if n <= MAX_REINFORCED_EXACT_STEPS => reinforced_exact_dist(*p, n),
            _ => Err(Error::Config(format!(
                "no exact law of S_n available at n = {n} for this walk"
            ))),
        }
    }

    /// Largest time (in path units) any path query reaches.
    fn path_reach(&self) -> f64 {
        let mut reach: f64 = 1.0;
        if self.has(CheckKind::Covariance) {
            reach = reach.max(self.window);
        }
        for c in self.checks.iter().filter(|c| c.name == CheckKind::CountLln) {
            reach = reach.max(c.time.unwrap_or(self.horizon) / self.horizon);
        }
        reach
    }

    /// Steps sampled per replica in discrete mode.
    fn steps_needed(&self) -> usize {
        let n = self.discrete_steps();
        if self.has(CheckKind::Covariance) {
            (self.horizon * self.window).ceil() as usize
        } else {
            n
        }
    }

    /// Half-width of an environment window that every replica's walk stays in.
    fn environment_bound(&self) -> Result<i64> {
        let jump = self.walk.max_abs_jump();
        let walk_bound = match self.mode {
            Mode::Discrete => self.steps_needed() as i64 * jump,
            Mode::Continuous => {
                // every nonzero jump travels at least the smallest spacing
                let spacing = self.environment.min_spacing();
                let reach = self.horizon * self.path_reach();
                ((reach / spacing).ceil() as i64 + 1) * jump
            }
        };
        let mut bound = walk_bound.max(1);
        for c in self.checks.iter().filter(|c| c.name == CheckKind::Cesaro) {
            let beta = c.betas.iter().map(|b| b.abs()).max().unwrap_or(0);
            bound = bound.max(self.discrete_steps() as i64 * jump + beta + 1);
        }
        if bound > 1 << 40 {
            return Err(Error::TooLarge(format!("environment window ±{bound}")));
        }
        Ok(bound)
    }
}

/// Per-replica values feeding the checks.
#[derive(Debug, Clone, Default)]
struct Outcome {
    failed: bool,
    endpoint: f64,
    walk_endpoint: f64,
    martingale: Option<(f64, bool)>,
    collision_ratio: f64,
    count_ratios: Vec<f64>,
    covariance: Vec<(f64, f64)>,
}

struct Context<'a> {
    config: &'a ExperimentConfig,
    ell: f64,
    drift: f64,
    shared_env: Option<Arc<Environment>>,
    env_bound: i64,
    jump_sampler: Option<JumpSampler>,
    coeffs: Option<MartingaleCoeffs>,
    count_times: Vec<f64>,
    cov_points: Vec<[f64; 2]>,
}

enum Stepper {
    Jump(JumpSampler),
    Reinforced(ReinforcedState),
}

impl Stepper {
    fn step(&mut self, rng: &mut StreamRng) -> i64 {
        match self {
            Stepper::Jump(s) => s.draw(rng),
            Stepper::Reinforced(s) => s.step(rng),
        }
    }
}

impl Context<'_> {
    fn environment(&self, seed: u64) -> Result<Arc<Environment>> {
        match &self.shared_env {
            Some(env) => Ok(Arc::clone(env)),
            None => {
                let b = match self.config.mode {
                    Mode::Discrete => 1,
                    Mode::Continuous => self.env_bound,
                };
                Ok(Arc::new(Environment::generate(&self.config.environment, -b, b, seed)?))
            }
        }
    }

    fn sample_discrete(&self, rng: &mut StreamRng) -> Result<WalkPath> {
        let n = self.config.steps_needed();
        match &self.config.walk {
            WalkSpec::Jump(law) => Ok(sample_markov(law, n, rng)),
            WalkSpec::Reinforced { p } => sample_reinforced(*p, n, self.config.regime(), rng),
        }
    }

    /// Steps until the gas time passes `reach`, or `None` past the step cap.
    fn sample_continuous(&self, env: &Environment, rng: &mut StreamRng) -> Option<WalkPath> {
        let reach = self.config.horizon * self.config.path_reach();
        let nonzero = (reach / self.config.environment.min_spacing()).ceil() + 1.0;
        let cap = (10.0 * nonzero / (1.0 - self.config.walk.zero_jump_prob())) as usize + 100;
        let (mut stepper, origin) = match &self.config.walk {
            WalkSpec::Jump(_) => (
                Stepper::Jump(self.jump_sampler.clone().expect("jump sampler")),
                PathOrigin::Iid,
            ),
            WalkSpec::Reinforced { p } => {
                (Stepper::Reinforced(ReinforcedState::new(*p)), PathOrigin::Reinforced { p: *p })
            }
        };
        let mut steps = Vec::new();
        let (mut s, mut x, mut t) = (0i64, 0.0, 0.0);
        while t <= reach {
            if steps.len() >= cap {
                return None;
            }
            let v = stepper.step(rng);
            s += v;
            let next = env.omega(s)?;
            t += (next - x).abs();
            x = next;
            steps.push(v);
        }
        Some(WalkPath::with_origin(steps, origin))
    }

    fn run_replica(&self, id: u64) -> Result<Outcome> {
        let cfg = self.config;
        let mut rng = rng_for_replica(cfg.seed, id);
        let env_seed = rng.next_u64();
        let env = self.environment(env_seed)?;
        let walk = match cfg.mode {
            Mode::Discrete => self.sample_discrete(&mut rng)?,
            Mode::Continuous => match self.sample_continuous(&env, &mut rng) {
                Some(w) => w,
                None => return Ok(Outcome { failed: true, ..Outcome::default() }),
            },
        };
        let gas = build_gas(env, walk);
        let mut out = Outcome::default();
        let (ell, d, h) = (self.ell, self.drift, cfg.horizon);

        match cfg.mode {
            Mode::Discrete => {
                let n = cfg.discrete_steps();
                let root = h.sqrt();
                out.endpoint = (gas.positions()[n] - ell * d * h) / root;
                out.walk_endpoint = (gas.walk().positions()[n] as f64 - d * h) / root;
                out.collision_ratio = gas.collision_times()[n] / h;
                if let (Some(coeffs), WalkSpec::Reinforced { p }) = (&self.coeffs, &cfg.walk) {
                    let prefix = if gas.len() == n {
                        gas.walk().clone()
                    } else {
                        WalkPath::with_origin(gas.walk().steps()[..n].to_vec(), gas.walk().origin())
                    };
                    let diag = martingale_path_with(&prefix, *p, coeffs)?;
                    out.martingale = Some((diag.normalized_endpoint(), !diag.bound_violations().is_empty()));
                }
            }
            Mode::Continuous => {
                let value = gas.interpolate(h)?;
                out.endpoint = (value - ell * d * h) / h.sqrt();
            }
        }

        for &t in &self.count_times {
            match gas.n_of_t(t) {
                Ok(n) if n > 0 => out.count_ratios.push(t / n as f64),
                _ => return Ok(Outcome { failed: true, ..Outcome::default() }),
            }
        }

        if !self.cov_points.is_empty() {
            let path = match cfg.mode {
                Mode::Discrete => gas.rescale_discrete(cfg.discrete_steps(), ell, d, cfg.window),
                Mode::Continuous => gas.rescale_continuous(h, ell, d, cfg.window),
            };
            let path = match path {
                Ok(p) => p,
                Err(Error::HorizonExceeded(_)) => return Ok(Outcome { failed: true, ..Outcome::default() }),
                Err(e) => return Err(e),
            };
            for &[s, t] in &self.cov_points {
                out.covariance.push((path.evaluate(s)?, path.evaluate(t)?));
            }
        }
        Ok(out)
    }
}

/// Worker count from `LLGAS_THREADS`; 0 or unset means one per core.
pub fn threads_from_env() -> usize {
    std::env::var(THREADS_VAR)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub replicas_run: usize,
    pub horizon_failures: usize,
    pub checks: Vec<CheckResult>,
    pub pass: bool,
}

/// Runs `config` with the worker count taken from `LLGAS_THREADS`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Report> {
    run_experiment_with_threads(config, threads_from_env())
}

pub fn run_experiment_with_threads(config: &ExperimentConfig, threads: usize) -> Result<Report> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| execute(config))
}

fn execute(config: &ExperimentConfig) -> Result<Report> {
    let ell = analytic_ell(&config.environment)?;
    let env_bound = config.environment_bound()?;
    let shared_env = if config.fixed_environment {
        Some(Arc::new(Environment::generate(&config.environment, -env_bound, env_bound, config.seed)?))
    } else {
        None
    };
    let needs_martingale = config.has(CheckKind::MartingaleKs) || config.has(CheckKind::QvBound);
    let coeffs = match (&config.walk, needs_martingale) {
        (WalkSpec::Reinforced { p }, true) => Some(martingale_coeffs(*p, config.discrete_steps())?),
        _ => None,
    };
    let ctx = Context {
        config,
        ell,
        drift: config.walk.drift(),
        shared_env,
        env_bound,
        jump_sampler: match &config.walk {
            WalkSpec::Jump(j) => Some(j.sampler()),
            WalkSpec::Reinforced { .. } => None,
        },
        coeffs,
        count_times: config
            .checks
            .iter()
            .filter(|c| c.name == CheckKind::CountLln)
            .map(|c| c.time.unwrap_or(config.horizon))
            .collect(),
        cov_points: config
            .checks
            .iter()
            .filter(|c| c.name == CheckKind::Covariance)
            .flat_map(|c| c.points.iter().copied())
            .collect(),
    };

    let needs_replicas = config.checks.iter().any(|c| c.name != CheckKind::Cesaro) || config.checks.is_empty();
    let outcomes: Vec<Outcome> = if needs_replicas {
        (0..config.replicas as u64)
            .into_par_iter()
            .map(|id| ctx.run_replica(id))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let failures = outcomes.iter().filter(|o| o.failed).count();
    if failures as f64 > config.failure_budget * config.replicas as f64 {
        return Err(Error::HorizonExceeded(format!(
            "{failures} of {} replicas exhausted their horizon (budget {})",
            config.replicas, config.failure_budget
        )));
    }
    let good: Vec<&Outcome> = outcomes.iter().filter(|o| !o.failed).collect();

    let mut results = Vec::new();
    let mut cov_offset = 0;
    let mut count_offset = 0;
    for c in &config.checks {
        match c.name {
            CheckKind::Variance | CheckKind::WalkVariance => {
                let gas = c.name == CheckKind::Variance;
                let xs: Vec<f64> = good.iter().map(|o| if gas { o.endpoint } else { o.walk_endpoint }).collect();
                let target = c.target.unwrap_or_else(|| {
                    if gas {
                        config.gas_limit_variance(ell).expect("validated")
                    } else {
                        config.walk_limit_variance().expect("validated")
                    }
                });
                let (v, se) = variance_with_stderr(&xs)?;
                let stat = if gas { "variance" } else { "walk-variance" };
                results.push(CheckResult::relative(stat, v, se, target, c.tolerance));
            }
            CheckKind::Ks | CheckKind::WalkKs | CheckKind::MartingaleKs => {
                let (xs, sigma2, stat): (Vec<f64>, f64, &str) = match c.name {
                    CheckKind::Ks => (
                        good.iter().map(|o| o.endpoint).collect(),
                        c.target.unwrap_or_else(|| config.gas_limit_variance(ell).expect("validated")),
                        "ks",
                    ),
                    CheckKind::WalkKs => (
                        good.iter().map(|o| o.walk_endpoint).collect(),
                        c.target.unwrap_or_else(|| config.walk_limit_variance().expect("validated")),
                        "walk-ks",
                    ),
                    _ => (
                        good.iter().map(|o| o.martingale.expect("martingale computed").0).collect(),
                        c.target.unwrap_or(1.0),
                        "martingale-ks",
                    ),
                };
                let d = ks_statistic(&xs, sigma2)?;
                results.push(CheckResult::at_most(stat, d, 0.0, 0.0, c.tolerance));
            }
            CheckKind::QvBound => {
                let bad = good.iter().filter(|o| o.martingale.expect("martingale computed").1).count();
                results.push(CheckResult::at_most("qv-bound", bad as f64, 0.0, 0.0, c.tolerance));
            }
            CheckKind::CollisionLln | CheckKind::CountLln => {
                let xs: Vec<f64> = if c.name == CheckKind::CollisionLln {
                    good.iter().map(|o| o.collision_ratio).collect()
                } else {
                    let i = count_offset;
                    count_offset += 1;
                    good.iter().map(|o| o.count_ratios[i]).collect()
                };
                let s = xs.iter().copied().collect::<MomentAccumulator>().finalize()?;
                let target = c.target.unwrap_or(ell * config.walk.abs_mean());
                let stat = if c.name == CheckKind::CollisionLln { "collision-lln" } else { "count-lln" };
                results.push(CheckResult::absolute(stat, s.mean, s.stderr, target, c.tolerance));
            }
            CheckKind::Covariance => {
                let unit = config.gas_limit_variance(ell);
                for (j, &[s, t]) in c.points.iter().enumerate() {
                    let pairs: Vec<(f64, f64)> = good.iter().map(|o| o.covariance[cov_offset + j]).collect();
                    let (cov, se) = covariance_with_jackknife(&pairs)?;
                    let target = c.target.unwrap_or_else(|| unit.expect("validated") * s.min(t));
                    results.push(CheckResult::relative(format!("covariance({s},{t})"), cov, se, target, c.tolerance));
                }
                cov_offset += c.points.len();
            }
            CheckKind::Cesaro => {
                let pmf = config.exact_pmf()?;
                let env = match &ctx.shared_env {
                    Some(env) => Arc::clone(env),
                    None => Arc::new(Environment::generate(&config.environment, -env_bound, env_bound, config.seed)?),
                };
                let target = c.target.unwrap_or(ell);
                for &beta in &c.betas {
                    let v = cesaro_sum(&env, &pmf, beta)?;
                    results.push(CheckResult::absolute(format!("cesaro(beta={beta})"), v, 0.0, target, c.tolerance));
                }
            }
        }
    }

    let pass = results.iter().all(|r| r.pass);
    Ok(Report {
        schema: REPORT_SCHEMA.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: config.clone(),
        replicas_run: good.len(),
        horizon_failures: failures,
        checks: results,
        pass,
    })
}

/// Pretty JSON with keys sorted at every level.
pub fn canonical_json<T: Serialize>(value: &T) -> Result<String> {
    // serde_json's Value map is ordered by key
    let v = serde_json::to_value(value).map_err(|e| Error::Io(e.to_string()))?;
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| Error::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn write_check_rows<W: Write>(w: &mut W, experiment: &str, checks: &[CheckResult]) -> Result<()> {
    for c in checks {
        writeln!(
            w,
            "{experiment},{},{},{},{},{},{}",
            c.stat, c.estimate, c.stderr, c.target, c.tolerance, c.pass
        )?;
    }
    Ok(())
}

const CSV_HEADER: &str = "experiment,stat,estimate,stderr,target,tolerance,pass";

impl Report {
    pub fn to_json(&self) -> Result<String> {
        canonical_json(self)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        write_check_rows(&mut w, &self.config.name, &self.checks)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleReport {
    pub schema: String,
    pub bundle: String,
    pub experiments: Vec<Report>,
    pub pass: bool,
}

impl BundleReport {
    pub fn new(bundle: impl Into<String>, experiments: Vec<Report>) -> Self {
        let pass = experiments.iter().all(|r| r.pass);
        BundleReport { schema: BUNDLE_SCHEMA.into(), bundle: bundle.into(), experiments, pass }
    }

    pub fn to_json(&self) -> Result<String> {
        canonical_json(self)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for r in &self.experiments {
            write_check_rows(&mut w, &r.config.name, &r.checks)?;
        }
        Ok(())
    }
}

/// Writes whatever `config.outputs` asks for.
pub fn write_outputs(report: &Report) -> Result<()> {
    if let Some(out) = &report.config.outputs {
        if let Some(path) = &out.report {
            std::fs::write(path, report.to_json()?)?;
        }
        if let Some(path) = &out.csv {
            report.write_csv(std::fs::File::create(path)?)?;
        }
    }
    Ok(())
}

/// Overrides applied to the standard configuration when building bundles.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub environment: Option<DistanceLaw>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub walk: Option<JumpLaw>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicas: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_environment: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_budget: Option<f64>,
}

impl Settings {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Applies the run-level overrides (seed, replicas, horizon, window,
    /// budget, fixed flag) to an experiment.
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(r) = self.replicas {
            cfg.replicas = r;
        }
        if let Some(h) = self.horizon {
            cfg.horizon = h;
        }
        if let Some(f) = self.fixed_environment {
            cfg.fixed_environment = f;
        }
        if let Some(w) = self.window {
            cfg.window = w;
        }
        if let Some(b) = self.failure_budget {
            cfg.failure_budget = b;
        }
    }
}

pub const BUNDLES: [&str; 6] = ["clt-discrete", "clt-continuous", "clt-reinforced", "fclt", "lln", "cesaro"];

/// i.i.d. interdistances in `{1, 2}`, each with probability 1/2.
pub fn standard_environment() -> DistanceLaw {
    DistanceLaw::iid(vec![1.0, 2.0], vec![0.5, 0.5]).expect("valid law")
}

/// Two-state chain on `{1, 2}` that stays put with probability 0.9.
pub fn correlated_environment() -> DistanceLaw {
    DistanceLaw::markov(vec![1.0, 2.0], vec![vec![0.9, 0.1], vec![0.1, 0.9]]).expect("valid law")
}

fn experiment(name: &str, environment: DistanceLaw, walk: WalkSpec, horizon: f64, replicas: usize) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        environment,
        walk,
        mode: Mode::Discrete,
        horizon,
        replicas,
        seed: STANDARD_SEED,
        fixed_environment: true,
        window: DEFAULT_WINDOW,
        exploratory: false,
        failure_budget: DEFAULT_FAILURE_BUDGET,
        checks: Vec::new(),
        outputs: None,
    }
}

/// The experiments behind a named check bundle, built from the standard
/// configuration with `settings` applied. Experiments that pin their own
/// environment or walk keep it.
pub fn bundle(name: &str, settings: &Settings) -> Result<Vec<ExperimentConfig>> {
    let env = settings.environment.clone().unwrap_or_else(standard_environment);
    let walk = WalkSpec::Jump(settings.walk.clone().unwrap_or_else(JumpLaw::symmetric));
    let reinforced = WalkSpec::Reinforced { p: 0.6 };
    let mut out = match name {
        "clt-discrete" => {
            let mut a = experiment("clt-discrete", env, walk, 1e4, 20_000);
            a.checks = vec![CheckSpec::new(CheckKind::Variance, 0.05), CheckSpec::new(CheckKind::Ks, 0.015)];
            let mut b = a.clone();
            b.name = "clt-discrete-correlated".into();
            b.environment = correlated_environment();
            vec![a, b]
        }
        "clt-continuous" => {
            let mut a = experiment("clt-continuous", env, walk, 1e4, 20_000);
            a.mode = Mode::Continuous;
            a.checks = vec![CheckSpec::new(CheckKind::Variance, 0.05), CheckSpec::new(CheckKind::Ks, 0.015)];
            vec![a]
        }
        "clt-reinforced" => {
            let mut a = experiment("clt-reinforced", env, reinforced, 1e4, 20_000);
            a.checks = vec![
                CheckSpec::new(CheckKind::WalkVariance, 0.05),
                CheckSpec::new(CheckKind::Variance, 0.07),
                CheckSpec::new(CheckKind::MartingaleKs, 0.02),
                CheckSpec::new(CheckKind::QvBound, 0.0),
            ];
            vec![a]
        }
        "fclt" => {
            let points = [[0.5, 1.0], [1.0, 2.0]];
            let mut a = experiment("fclt", env.clone(), walk, 1e4, 20_000);
            a.checks = vec![CheckSpec::new(CheckKind::Covariance, 0.10).with_points(&points)];
            let mut b = experiment("fclt-reinforced", env, reinforced, 1e4, 20_000);
            b.checks = a.checks.clone();
            vec![a, b]
        }
        "lln" => {
            let mut a = experiment("lln", env, walk, 1e5, 1);
            a.checks = vec![
                CheckSpec::new(CheckKind::CollisionLln, 0.03),
                CheckSpec::new(CheckKind::CountLln, 0.03).with_time(1e5),
            ];
            vec![a]
        }
        "cesaro" => {
            let mut a = experiment("cesaro", correlated_environment(), walk, 1e4, 1);
            a.checks = vec![CheckSpec::new(CheckKind::Cesaro, 0.02).with_betas(&[-50, 0, 50])];
            vec![a]
        }
        other => {
            return Err(Error::Config(format!(
                "unknown bundle {other:?}; expected one of {}",
                BUNDLES.join(", ")
            )))
        }
    };
    for cfg in &mut out {
        settings.apply(cfg);
    }
    Ok(out)
}

/// Runs every experiment of a bundle in order.
pub fn run_bundle(name: &str, experiments: &[ExperimentConfig], threads: usize) -> Result<BundleReport> {
    let reports = experiments
        .iter()
        .map(|cfg| run_experiment_with_threads(cfg, threads))
        .collect::<Result<Vec<_>>>()?;
    Ok(BundleReport::new(name, reports))
}

/// One trajectory of the experiment's walk over its environment, for export.
pub fn simulate_trajectory(config: &ExperimentConfig, replica: u64) -> Result<GasTrajectory> {
    let mut cfg = config.clone();
    cfg.checks.clear();
    cfg.validate()?;
    let ell = analytic_ell(&cfg.environment)?;
    let env_bound = cfg.environment_bound()?;
    let shared_env = if cfg.fixed_environment {
        Some(Arc::new(Environment::generate(&cfg.environment, -env_bound, env_bound, cfg.seed)?))
    } else {
        None
    };
    let ctx = Context {
        config: &cfg,
        ell,
        drift: cfg.walk.drift(),
        shared_env,
        env_bound,
        jump_sampler: match &cfg.walk {
            WalkSpec::Jump(j) => Some(j.sampler()),
            WalkSpec::Reinforced { .. } => None,
        },
        coeffs: None,
        count_times: Vec::new(),
        cov_points: Vec::new(),
    };
    let mut rng = rng_for_replica(cfg.seed, replica);
    let env = ctx.environment(rng.next_u64())?;
    let walk = match cfg.mode {
        Mode::Discrete => ctx.sample_discrete(&mut rng)?,
        Mode::Continuous => ctx
            .sample_continuous(&env, &mut rng)
            .ok_or_else(|| Error::HorizonExceeded("step cap reached before the time horizon".into()))?,
    };
    Ok(build_gas(env, walk))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(checks: Vec<CheckSpec>) -> ExperimentConfig {
        let mut cfg = experiment("small", standard_environment(), WalkSpec::Jump(JumpLaw::symmetric()), 400.0, 400);
        cfg.checks = checks;
        cfg
    }

    #[test]
    fn config_json_shapes() {
        let text = r#"{
            "environment": {"kind": "iid", "alphabet": [1, 2], "probs": [0.5, 0.5]},
            "walk": {"kind": "reinforced", "p": 0.6},
            "horizon": 100, "replicas": 10, "seed": 3,
            "checks": [{"name": "walk-variance", "tolerance": 0.1}]
        }"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(cfg.walk, WalkSpec::Reinforced { p: 0.6 });
        assert_eq!(cfg.window, DEFAULT_WINDOW);
        assert!(!cfg.fixed_environment);
        let back = ExperimentConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);

        let jump = r#"{"environment": {"kind": "iid", "alphabet": [1], "probs": [1]},
            "walk": {"support": [-1, 1], "probs": [0.5, 0.5]},
            "horizon": 10, "replicas": 1, "seed": 0}"#;
        assert!(matches!(ExperimentConfig::from_json(jump).unwrap().walk, WalkSpec::Jump(_)));
        let typo = jump.replace("\"seed\"", "\"sed\"");
        assert!(matches!(ExperimentConfig::from_json(&typo), Err(Error::Config(_))));
        let unknown = text.replace("walk-variance", "no-such-check");
        assert!(ExperimentConfig::from_json(&unknown).is_err());
    }

    #[test]
    fn validation_errors() {
        let mut cfg = small(vec![]);
        cfg.replicas = 0;
        assert!(matches!(run_experiment(&cfg), Err(Error::Config(_))));
        let mut cfg = small(vec![CheckSpec::new(CheckKind::MartingaleKs, 0.1)]);
        assert!(cfg.validate().is_err());
        cfg.walk = WalkSpec::Reinforced { p: 0.8 };
        assert!(cfg.validate().is_err());
        cfg.exploratory = true;
        assert!(cfg.validate().is_err(), "martingale checks need p < 3/4");
        let mut cfg = small(vec![CheckSpec::new(CheckKind::Variance, 0.1)]);
        cfg.walk = WalkSpec::Jump(JumpLaw::new(vec![-1, 2], vec![0.5, 0.5]).unwrap());
        assert!(cfg.validate().is_err(), "drifted law has no default target");
        cfg.checks[0].target = Some(5.0);
        assert!(cfg.validate().is_ok());
        let mut cfg = small(vec![CheckSpec::new(CheckKind::WalkKs, 0.1)]);
        cfg.mode = Mode::Continuous;
        assert!(cfg.validate().is_err());
        let cfg = small(vec![CheckSpec::new(CheckKind::Covariance, 0.1).with_points(&[[0.5, 5.0]])]);
        assert!(cfg.validate().is_err());
        let mut cfg = small(vec![]);
        cfg.horizon = 10.5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let cfg = small(vec![
            CheckSpec::new(CheckKind::Variance, 0.5),
            CheckSpec::new(CheckKind::Ks, 0.2),
            CheckSpec::new(CheckKind::CollisionLln, 0.2),
            CheckSpec::new(CheckKind::CountLln, 0.2),
            CheckSpec::new(CheckKind::Covariance, 0.5).with_points(&[[0.5, 1.0]]),
        ]);
        let one = run_experiment_with_threads(&cfg, 1).unwrap().to_json().unwrap();
        let four = run_experiment_with_threads(&cfg, 4).unwrap().to_json().unwrap();
        assert_eq!(one, four);
        let again = run_experiment_with_threads(&cfg, 3).unwrap().to_json().unwrap();
        assert_eq!(one, again);
    }

    #[test]
    fn replica_values_do_not_depend_on_replica_count() {
        let mut cfg = small(vec![]);
        cfg.fixed_environment = false;
        let ctx_values = |replicas: usize| {
            let mut c = cfg.clone();
            c.replicas = replicas;
            c.checks = vec![CheckSpec::new(CheckKind::Variance, 1.0)];
            let ell = analytic_ell(&c.environment).unwrap();
            let ctx = Context {
                config: &c,
                ell,
                drift: 0.0,
                shared_env: None,
                env_bound: c.environment_bound().unwrap(),
                jump_sampler: Some(JumpLaw::symmetric().sampler()),
                coeffs: None,
                count_times: vec![],
                cov_points: vec![],
            };
            (0..5).map(|i| ctx.run_replica(i).unwrap().endpoint).collect::<Vec<_>>()
        };
        assert_eq!(ctx_values(10), ctx_values(20));
    }

    #[test]
    fn small_clt_run_passes_loose_checks() {
        let mut cfg = small(vec![
            CheckSpec::new(CheckKind::Variance, 0.2),
            CheckSpec::new(CheckKind::WalkVariance, 0.2),
            CheckSpec::new(CheckKind::WalkKs, 0.08),
        ]);
        cfg.fixed_environment = false;
        cfg.replicas = 2000;
        let report = run_experiment(&cfg).unwrap();
        assert!(report.pass, "{:#?}", report.checks);
        assert_eq!(report.replicas_run, 2000);
    }

    #[test]
    fn reinforced_and_continuous_runs() {
        let mut cfg = small(vec![
            CheckSpec::new(CheckKind::WalkVariance, 0.25),
            CheckSpec::new(CheckKind::QvBound, 0.0),
            CheckSpec::new(CheckKind::MartingaleKs, 0.1),
        ]);
        cfg.walk = WalkSpec::Reinforced { p: 0.6 };
        cfg.replicas = 1000;
        let report = run_experiment(&cfg).unwrap();
        assert!(report.pass, "{:#?}", report.checks);

        let mut cfg = small(vec![
            CheckSpec::new(CheckKind::Variance, 0.3),
            CheckSpec::new(CheckKind::CountLln, 0.3),
            CheckSpec::new(CheckKind::Covariance, 0.5).with_points(&[[1.0, 2.0]]),
        ]);
        cfg.mode = Mode::Continuous;
        cfg.fixed_environment = false;
        cfg.replicas = 1000;
        let report = run_experiment(&cfg).unwrap();
        assert_eq!(report.horizon_failures, 0);
        assert!(report.pass, "{:#?}", report.checks);
    }

    #[test]
    fn cesaro_check_uses_exact_law() {
        let mut cfg = small(vec![CheckSpec::new(CheckKind::Cesaro, 0.5).with_betas(&[-3, 0, 3])]);
        cfg.environment = DistanceLaw::constant(2.0).unwrap();
        let report = run_experiment(&cfg).unwrap();
        assert_eq!(report.checks.len(), 3);
        for c in &report.checks {
            assert!((c.estimate - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bundles_build_and_validate() {
        for name in BUNDLES {
            for cfg in bundle(name, &Settings::default()).unwrap() {
                cfg.validate().unwrap();
                assert_eq!(cfg.seed, STANDARD_SEED);
            }
        }
        assert!(bundle("nope", &Settings::default()).is_err());
        let s = Settings { seed: Some(9), replicas: Some(10), ..Settings::default() };
        let cfgs = bundle("clt-discrete", &s).unwrap();
        assert!(cfgs.iter().all(|c| c.seed == 9 && c.replicas == 10));
    }

    #[test]
    fn report_json_is_sorted_and_csv_has_rows() {
        let cfg = small(vec![CheckSpec::new(CheckKind::CollisionLln, 0.5)]);
        let report = run_experiment(&cfg).unwrap();
        let json = report.to_json().unwrap();
        let keys: Vec<&str> = json
            .lines()
            .filter(|l| l.starts_with("  \""))
            .map(|l| l.trim().split('"').nth(1).unwrap())
            .collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        let back: Report = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(CSV_HEADER));
        assert!(text.contains("small,collision-lln,"));
    }

    #[test]
    fn horizon_budget_is_enforced() {
        let mut cfg = small(vec![CheckSpec::new(CheckKind::CountLln, 0.5).with_time(1e9)]);
        cfg.replicas = 20;
        assert!(matches!(run_experiment(&cfg), Err(Error::HorizonExceeded(_))));
        cfg.failure_budget = 1.0;
        let report = run_experiment(&cfg);
        // every replica fails, so the statistic has no samples left
        assert!(report.is_err());
    }

    #[test]
    fn simulate_is_reproducible() {
        let cfg = small(vec![]);
        let a = simulate_trajectory(&cfg, 3).unwrap();
        let b = simulate_trajectory(&cfg, 3).unwrap();
        assert_eq!(a.positions(), b.positions());
        assert_eq!(a.len(), 400);
    }
}
