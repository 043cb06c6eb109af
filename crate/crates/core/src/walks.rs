//! Underlying walks: i.i.d.-jump walks on ℤ and the step-reinforced
//! (elephant) walk, with exact small-instance distributions and the
//! martingale diagnostics of the reinforced walk.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

const WEIGHT_TOL: f64 = 1e-12;
/// Upper end of the diffusive regime of the reinforced walk.
pub const CRITICAL_MEMORY: f64 = 0.75;
pub const MAX_EXACT_STEPS: usize = 64;
pub const MAX_REINFORCED_EXACT_STEPS: usize = 20;

/// Exact law of a walk position, keyed by site.
pub type Pmf = BTreeMap<i64, f64>;

/// Jump distribution `(p_k)` on a finite subset of ℤ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawJumpLaw", into = "RawJumpLaw")]
pub struct JumpLaw {
    support: Vec<i64>,
    probs: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawJumpLaw {
    support: Vec<i64>,
    probs: Vec<f64>,
}

impl TryFrom<RawJumpLaw> for JumpLaw {
    type Error = Error;
    fn try_from(raw: RawJumpLaw) -> Result<Self> {
        JumpLaw::new(raw.support, raw.probs)
    }
}

impl From<JumpLaw> for RawJumpLaw {
    fn from(law: JumpLaw) -> Self {
        RawJumpLaw {
            support: law.support,
            probs: law.probs,
        }
    }
}

impl JumpLaw {
    pub fn new(support: Vec<i64>, probs: Vec<f64>) -> Result<Self> {
        if support.is_empty() || support.len() != probs.len() {
            return Err(Error::InvalidJumpLaw(format!(
                "{} support points with {} weights",
                support.len(),
                probs.len()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::InvalidJumpLaw(format!("negative weight {p}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::InvalidJumpLaw(format!("weights sum to {total}")));
        }
        let p0: f64 = support
            .iter()
            .zip(&probs)
            .filter(|(k, _)| **k == 0)
            .map(|(_, p)| p)
            .sum();
        if p0 >= 1.0 - WEIGHT_TOL {
            return Err(Error::InvalidJumpLaw("walk never moves (p_0 = 1)".into()));
        }
        Ok(JumpLaw { support, probs })
    }

    /// Nearest-neighbour symmetric walk.
    pub fn symmetric() -> Self {
        JumpLaw::new(vec![-1, 1], vec![0.5, 0.5]).expect("valid")
    }

    pub fn support(&self) -> &[i64] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn max_abs_jump(&self) -> i64 {
        self.support.iter().map(|k| k.abs()).max().unwrap_or(0)
    }

    pub fn is_nearest_neighbour_symmetric(&self) -> bool {
        let m = jump_moments(self);
        self.support
            .iter()
            .zip(&self.probs)
            .all(|(k, p)| *p == 0.0 || k.abs() == 1)
            && m.mean == 0.0
    }

    pub fn sampler(&self) -> JumpSampler {
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = self
            .probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        *cumulative.last_mut().expect("nonempty") = f64::INFINITY;
        JumpSampler {
            support: self.support.clone(),
            cumulative,
        }
    }
}

/// Draws jumps from a [`JumpLaw`] by inversion.
#[derive(Debug, Clone)]
pub struct JumpSampler {
    support: Vec<i64>,
    cumulative: Vec<f64>,
}

impl JumpSampler {
    #[inline]
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        let u: f64 = rng.random();
        let i = self
            .cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.support.len() - 1);
        self.support[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpMoments {
    pub mean: f64,
    pub second_moment: f64,
    pub abs_mean: f64,
}

impl JumpMoments {
    pub fn variance(&self) -> f64 {
        self.second_moment - self.mean * self.mean
    }
}

pub fn jump_moments(law: &JumpLaw) -> JumpMoments {
    let mut m = JumpMoments {
        mean: 0.0,
        second_moment: 0.0,
        abs_mean: 0.0,
    };
    for (&k, &p) in law.support.iter().zip(&law.probs) {
        let k = k as f64;
        m.mean += k * p;
        m.second_moment += k * k * p;
        m.abs_mean += k.abs() * p;
    }
    m
}

/// How a path was produced; lets diagnostics refuse mismatched inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PathOrigin {
    Iid,
    Reinforced { p: f64 },
    Manual,
}

/// A realized walk `S_0 = 0, S_k = V_1 + ... + V_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkPath {
    steps: Vec<i64>,
    partial_sums: Vec<i64>,
    origin: PathOrigin,
}

impl WalkPath {
    pub fn from_steps(steps: Vec<i64>) -> Self {
        Self::with_origin(steps, PathOrigin::Manual)
    }

    pub(crate) fn with_origin(steps: Vec<i64>, origin: PathOrigin) -> Self {
        let mut partial_sums = Vec::with_capacity(steps.len() + 1);
        let mut s = 0i64;
        partial_sums.push(0);
        for v in &steps {
            s += v;
            partial_sums.push(s);
        }
        WalkPath {
            steps,
            partial_sums,
            origin,
        }
    }

    /// Number of steps `n`.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// `V_1..V_n`.
    pub fn steps(&self) -> &[i64] {
        &self.steps
    }

    /// `S_0..S_n`.
    pub fn positions(&self) -> &[i64] {
        &self.partial_sums
    }

    pub fn endpoint(&self) -> i64 {
        *self.partial_sums.last().expect("S_0 present")
    }

    pub fn origin(&self) -> PathOrigin {
        self.origin
    }

    pub fn range(&self) -> (i64, i64) {
        let lo = *self.partial_sums.iter().min().expect("nonempty");
        let hi = *self.partial_sums.iter().max().expect("nonempty");
        (lo, hi)
    }
}

pub fn sample_markov<R: Rng + ?Sized>(law: &JumpLaw, n: usize, rng: &mut R) -> WalkPath {
    let sampler = law.sampler();
    let steps = (0..n).map(|_| sampler.draw(rng)).collect();
    WalkPath::with_origin(steps, PathOrigin::Iid)
}

/// Exact law of `S_n` by `n`-fold convolution, for `n ≤ 64`.
pub fn exact_pmf(law: &JumpLaw, n: usize) -> Result<Pmf> {
    if n > MAX_EXACT_STEPS {
        return Err(Error::TooLarge(format!(
            "exact pmf limited to n <= {MAX_EXACT_STEPS}, got {n}"
        )));
    }
    let mut pmf = Pmf::new();
    pmf.insert(0, 1.0);
    for _ in 0..n {
        let mut next = Pmf::new();
        for (&x, &px) in &pmf {
            for (&k, &pk) in law.support.iter().zip(&law.probs) {
                if pk > 0.0 {
                    *next.entry(x + k).or_insert(0.0) += px * pk;
                }
            }
        }
        pmf = next;
    }
    Ok(pmf)
}

/// Exact law of the nearest-neighbour symmetric walk after `n` steps,
/// `P(S_n = 2j − n) = C(n, j) 2^{−n}`, evaluated through log-gamma so that
/// large `n` stays tractable.
pub fn symmetric_walk_pmf(n: usize) -> Pmf {
    let nf = n as f64;
    let log_total = ln_gamma(nf + 1.0) - nf * std::f64::consts::LN_2;
    (0..=n)
        .map(|j| {
            let jf = j as f64;
            let logp = log_total - ln_gamma(jf + 1.0) - ln_gamma(nf - jf + 1.0);
            (2 * j as i64 - n as i64, logp.exp())
        })
        .collect()
}

/// Whether reinforced samplers accept memory parameters at or above 3/4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Regime {
    /// `0 ≤ p < 3/4` only.
    #[default]
    Diffusive,
    /// Any `p` in `[0, 1]`; for exploration outside the supported theory.
    Exploratory,
}

fn check_memory(p: f64, regime: Regime) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "memory parameter {p} outside [0, 1]"
        )));
    }
    if regime == Regime::Diffusive && p >= CRITICAL_MEMORY {
        return Err(Error::Unsupported(format!(
            "p = {p} is outside the diffusive regime p < 3/4; use the exploratory regime"
        )));
    }
    Ok(())
}

/// Collapsed state of the reinforced walk: only the counts enter the
/// conditional law of the next step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReinforcedState {
    pub n: u64,
    pub n_plus: u64,
    pub p: f64,
}

impl ReinforcedState {
    pub fn new(p: f64) -> Self {
        ReinforcedState { n: 0, n_plus: 0, p }
    }

    /// `P(V_{n+1} = +1 | past)`.
    #[inline]
    pub fn prob_up(&self) -> f64 {
        if self.n == 0 {
            return 0.5;
        }
        let n = self.n as f64;
        let plus = self.n_plus as f64;
        (self.p * plus + (1.0 - self.p) * (n - plus)) / n
    }

    #[inline]
    pub fn position(&self) -> i64 {
        2 * self.n_plus as i64 - self.n as i64
    }

    #[inline]
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> i64 {
        let up = rng.random::<f64>() < self.prob_up();
        self.n += 1;
        if up {
            self.n_plus += 1;
            1
        } else {
            -1
        }
    }
}

/// Samples `n` steps of the step-reinforced walk with memory parameter `p`.
pub fn sample_reinforced<R: Rng + ?Sized>(
    p: f64,
    n: usize,
    regime: Regime,
    rng: &mut R,
) -> Result<WalkPath> {
    check_memory(p, regime)?;
    if n == 0 {
        return Err(Error::InvalidArgument("reinforced walk needs n >= 1".into()));
    }
    let mut state = ReinforcedState::new(p);
    let steps = (0..n).map(|_| state.step(rng)).collect();
    Ok(WalkPath::with_origin(steps, PathOrigin::Reinforced { p }))
}

/// Exact law of `S^(p)_n` by dynamic programming over the count of up-steps.
pub fn reinforced_exact_dist(p: f64, n: usize) -> Result<Pmf> {
    check_memory(p, Regime::Exploratory)?;
    if n > MAX_REINFORCED_EXACT_STEPS {
        return Err(Error::TooLarge(format!(
            "exact reinforced law limited to n <= {MAX_REINFORCED_EXACT_STEPS}, got {n}"
        )));
    }
    if n == 0 {
        return Ok(Pmf::from([(0, 1.0)]));
    }
    // weights[j] = P(n_plus = j) after `step` steps
    let mut weights = vec![0.5, 0.5];
    for step in 1..n {
        let m = step as f64;
        let mut next = vec![0.0; step + 2];
        for (j, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let plus = j as f64;
            let up = (p * plus + (1.0 - p) * (m - plus)) / m;
            next[j + 1] += w * up;
            next[j] += w * (1.0 - up);
        }
        weights = next;
    }
    Ok(weights
        .into_iter()
        .enumerate()
        .map(|(j, w)| (2 * j as i64 - n as i64, w))
        .collect())
}

/// `E[(S^(p)_k)^2]` for `k = 1..=n` from `u_{k+1} = (1 + 2a/k) u_k + 1`, `u_1 = 1`.
pub fn variance_recursion(p: f64, n: usize) -> Vec<f64> {
    let a = 2.0 * p - 1.0;
    let mut out = Vec::with_capacity(n);
    let mut u = 1.0;
    for k in 1..=n {
        out.push(u);
        u = (1.0 + 2.0 * a / k as f64) * u + 1.0;
    }
    out
}

/// Normalizing coefficients of the reinforced-walk martingale.
#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleCoeffs {
    /// Memory drift `a = 2p − 1`.
    pub a: f64,
    /// `a_0..a_n`.
    pub a_seq: Vec<f64>,
    /// `ν_0..ν_n` with `ν_0 = 0`, `ν_k = a_1² + ... + a_k²`.
    pub nu_seq: Vec<f64>,
}

fn check_martingale_memory(p: f64) -> Result<()> {
    check_memory(p, Regime::Diffusive)?;
    // γ_1 = 1 + a vanishes at p = 0 and every a_n with n ≥ 2 blows up.
    if p == 0.0 {
        return Err(Error::Unsupported(
            "p = 0 makes the martingale normalization a_n infinite".into(),
        ));
    }
    Ok(())
}

/// `a_n = Γ(a+1)Γ(n)/Γ(n+a)` from log-gamma differences, and the running `ν_n`.
pub fn martingale_coeffs(p: f64, n: usize) -> Result<MartingaleCoeffs> {
    check_martingale_memory(p)?;
    let a = 2.0 * p - 1.0;
    let lg_a1 = ln_gamma(a + 1.0);
    let mut a_seq = Vec::with_capacity(n + 1);
    a_seq.push(1.0);
    for k in 1..=n {
        let kf = k as f64;
        a_seq.push(if k == 1 {
            1.0
        } else {
            (lg_a1 + ln_gamma(kf) - ln_gamma(kf + a)).exp()
        });
    }
    Ok(MartingaleCoeffs {
        a,
        nu_seq: running_squares(&a_seq),
        a_seq,
    })
}

/// The same coefficients as the cumulative product `a_n = Π_{k<n} γ_k^{−1}`.
pub fn martingale_coeffs_product(p: f64, n: usize) -> Result<MartingaleCoeffs> {
    check_martingale_memory(p)?;
    let a = 2.0 * p - 1.0;
    let mut a_seq = Vec::with_capacity(n + 1);
    a_seq.push(1.0);
    let mut current = 1.0;
    for k in 1..=n {
        if k >= 2 {
            current /= 1.0 + a / (k - 1) as f64;
        }
        a_seq.push(current);
    }
    Ok(MartingaleCoeffs {
        a,
        nu_seq: running_squares(&a_seq),
        a_seq,
    })
}

fn running_squares(a_seq: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(a_seq.len());
    out.push(0.0);
    for a in &a_seq[1..] {
        acc += a * a;
        out.push(acc);
    }
    out
}

/// Conditional second and fourth moments of the martingale innovation
/// `ε_{k+1}` given the past, as functions of `S_k`.
pub fn innovation_moments(a: f64, k: u64, s_k: i64) -> (f64, f64) {
    let x = (a / k as f64).powi(2) * (s_k as f64).powi(2);
    (1.0 - x, 1.0 - 3.0 * x * x + 2.0 * x)
}

/// Martingale diagnostics along one reinforced path.
#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleDiag {
    pub a: f64,
    pub a_seq: Vec<f64>,
    pub nu_seq: Vec<f64>,
    /// `M_0..M_n`, `M_k = a_k S_k`.
    pub m_seq: Vec<f64>,
    /// `⟨M⟩_0..⟨M⟩_n` in closed form.
    pub qv_seq: Vec<f64>,
    /// `⟨M⟩_0..⟨M⟩_n` summed termwise from the conditional innovation variances.
    pub qv_direct: Vec<f64>,
}

impl MartingaleDiag {
    /// Indices `k` at which `⟨M⟩_k > ν_k`.
    pub fn bound_violations(&self) -> Vec<usize> {
        self.qv_seq
            .iter()
            .zip(&self.nu_seq)
            .enumerate()
            .filter(|(_, (qv, nu))| qv > nu)
            .map(|(k, _)| k)
            .collect()
    }

    /// `M_n / √ν_n`.
    pub fn normalized_endpoint(&self) -> f64 {
        let n = self.m_seq.len() - 1;
        self.m_seq[n] / self.nu_seq[n].sqrt()
    }
}

pub fn martingale_path(path: &WalkPath, p: f64) -> Result<MartingaleDiag> {
    match path.origin() {
        PathOrigin::Reinforced { p: q } if q == p => {}
        PathOrigin::Reinforced { p: q } => {
            return Err(Error::InvalidArgument(format!(
                "path generated with p = {q}, diagnostics requested for p = {p}"
            )))
        }
        other => {
            return Err(Error::InvalidArgument(format!(
                "martingale diagnostics need a reinforced path, got {other:?}"
            )))
        }
    }
    let coeffs = martingale_coeffs(p, path.len())?;
    martingale_path_with(path, p, &coeffs)
}

/// [`martingale_path`] reusing coefficients computed once for many paths;
/// `coeffs` must belong to `p` and reach at least the path length.
pub fn martingale_path_with(path: &WalkPath, p: f64, coeffs: &MartingaleCoeffs) -> Result<MartingaleDiag> {
    let n = path.len();
    if !matches!(path.origin(), PathOrigin::Reinforced { p: q } if q == p) {
        return Err(Error::InvalidArgument(format!(
            "martingale diagnostics for p = {p} need a path reinforced with the same p"
        )));
    }
    if coeffs.a != 2.0 * p - 1.0 || coeffs.a_seq.len() < n + 1 {
        return Err(Error::InvalidArgument(format!(
            "coefficients cover a = {} up to {}, need a = {} up to {n}",
            coeffs.a,
            coeffs.a_seq.len() - 1,
            2.0 * p - 1.0
        )));
    }
    let a = coeffs.a;
    let s = path.positions();
    let m_seq: Vec<f64> = (0..=n).map(|k| coeffs.a_seq[k] * s[k] as f64).collect();

    // ⟨M⟩_n = ν_n − a² Σ_{k<n} (a_{k+1}/k)² S_k²
    let mut qv_seq = vec![0.0; n + 1];
    let mut correction = 0.0;
    for k in 1..=n {
        if k >= 2 {
            let j = k - 1;
            correction += (coeffs.a_seq[k] / j as f64).powi(2) * (s[j] as f64).powi(2);
        }
        qv_seq[k] = coeffs.nu_seq[k] - a * a * correction;
    }

    // a_1² E[ε_1²] + Σ_{k=1}^{n−1} a_{k+1}² E[ε_{k+1}² | F_k]
    let mut qv_direct = vec![0.0; n + 1];
    let mut acc = 0.0;
    for k in 1..=n {
        let second = if k == 1 {
            1.0
        } else {
            innovation_moments(a, (k - 1) as u64, s[k - 1]).0
        };
        acc += coeffs.a_seq[k].powi(2) * second;
        qv_direct[k] = acc;
    }

    Ok(MartingaleDiag {
        a,
        a_seq: coeffs.a_seq[..=n].to_vec(),
        nu_seq: coeffs.nu_seq[..=n].to_vec(),
        m_seq,
        qv_seq,
        qv_direct,
    })
}
