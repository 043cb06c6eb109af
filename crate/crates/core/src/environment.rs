//! Scatterer environments on the integer lattice.
//!
//! An [`Environment`] holds the positions `ω_r` of a two-sided array of
//! scatterers with `ω_0 = 0` and interdistances `ζ_r = ω_r − ω_{r−1} > 0`.
//! Interdistances are drawn either i.i.d. from a finite alphabet or from a
//! strictly positive finite-state Markov chain started in stationarity. The
//! window can be widened lazily in both directions; entries are never
//! resampled once drawn.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{keyed_stream, Domain, StreamRng};

const STOCHASTIC_TOL: f64 = 1e-12;
const STATIONARY_TOL: f64 = 1e-13;
const STATIONARY_MAX_ITERS: usize = 1_000_000;

/// Generative law of the interdistance array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLaw", into = "RawLaw")]
pub enum DistanceLaw {
    Iid { alphabet: Vec<f64>, probs: Vec<f64> },
    Markov { alphabet: Vec<f64>, transition: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum RawLaw {
    Iid {
        alphabet: Vec<f64>,
        probs: Vec<f64>,
    },
    Markov {
        alphabet: Vec<f64>,
        transition: Vec<Vec<f64>>,
    },
}

impl TryFrom<RawLaw> for DistanceLaw {
    type Error = Error;

    fn try_from(raw: RawLaw) -> Result<Self> {
        match raw {
            RawLaw::Iid { alphabet, probs } => DistanceLaw::iid(alphabet, probs),
            RawLaw::Markov {
                alphabet,
                transition,
            } => DistanceLaw::markov(alphabet, transition),
        }
    }
}

impl From<DistanceLaw> for RawLaw {
    fn from(law: DistanceLaw) -> Self {
        match law {
            DistanceLaw::Iid { alphabet, probs } => RawLaw::Iid { alphabet, probs },
            DistanceLaw::Markov {
                alphabet,
                transition,
            } => RawLaw::Markov {
                alphabet,
                transition,
            },
        }
    }
}

fn check_alphabet(alphabet: &[f64]) -> Result<()> {
    if alphabet.is_empty() {
        return Err(Error::InvalidLaw("empty alphabet".into()));
    }
    if let Some(v) = alphabet.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::InvalidLaw(format!(
            "interdistance {v} is not strictly positive"
        )));
    }
    Ok(())
}

fn check_probability_vector(probs: &[f64], what: &str) -> Result<()> {
    if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
        return Err(Error::InvalidLaw(format!("{what}: negative weight {p}")));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::InvalidLaw(format!("{what}: weights sum to {total}")));
    }
    Ok(())
}

/// Checks that `transition` is square, row-stochastic and strictly positive.
fn check_transition(transition: &[Vec<f64>]) -> Result<()> {
    let k = transition.len();
    if k == 0 {
        return Err(Error::InvalidLaw("empty transition matrix".into()));
    }
    for (i, row) in transition.iter().enumerate() {
        if row.len() != k {
            return Err(Error::InvalidLaw(format!(
                "transition row {i} has {} entries, expected {k}",
                row.len()
            )));
        }
        check_probability_vector(row, &format!("transition row {i}"))?;
        if row.iter().any(|&p| p <= 0.0) {
            return Err(Error::InvalidLaw(format!(
                "transition row {i} has a zero entry"
            )));
        }
    }
    Ok(())
}

impl DistanceLaw {
    pub fn iid(alphabet: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        check_alphabet(&alphabet)?;
        if probs.len() != alphabet.len() {
            return Err(Error::InvalidLaw(format!(
                "{} probabilities for {} alphabet values",
                probs.len(),
                alphabet.len()
            )));
        }
        check_probability_vector(&probs, "probs")?;
        Ok(DistanceLaw::Iid { alphabet, probs })
    }

    pub fn markov(alphabet: Vec<f64>, transition: Vec<Vec<f64>>) -> Result<Self> {
        check_alphabet(&alphabet)?;
        check_transition(&transition)?;
        if transition.len() != alphabet.len() {
            return Err(Error::InvalidLaw(format!(
                "{}x{} transition for {} alphabet values",
                transition.len(),
                transition.len(),
                alphabet.len()
            )));
        }
        Ok(DistanceLaw::Markov {
            alphabet,
            transition,
        })
    }

    /// Deterministic spacing `ζ ≡ c`.
    pub fn constant(c: f64) -> Result<Self> {
        Self::iid(vec![c], vec![1.0])
    }

    pub fn alphabet(&self) -> &[f64] {
        match self {
            DistanceLaw::Iid { alphabet, .. } | DistanceLaw::Markov { alphabet, .. } => alphabet,
        }
    }

    /// Re-runs the constructor checks; used on values built by hand.
    pub fn validate(&self) -> Result<()> {
        match self.clone() {
            DistanceLaw::Iid { alphabet, probs } => Self::iid(alphabet, probs).map(|_| ()),
            DistanceLaw::Markov {
                alphabet,
                transition,
            } => Self::markov(alphabet, transition).map(|_| ()),
        }
    }

    /// Marginal law of a single interdistance under stationarity.
    pub fn marginal(&self) -> Result<Vec<f64>> {
        match self {
            DistanceLaw::Iid { probs, .. } => Ok(probs.clone()),
            DistanceLaw::Markov { transition, .. } => stationary_distribution(transition),
        }
    }

    pub fn min_spacing(&self) -> f64 {
        self.alphabet().iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn variance(&self) -> Result<f64> {
        autocovariance(self, 0)
    }
}

/// Stationary distribution of a strictly positive stochastic matrix, by
/// iterated left multiplication from the uniform vector.
pub fn stationary_distribution(transition: &[Vec<f64>]) -> Result<Vec<f64>> {
    check_transition(transition)?;
    let k = transition.len();
    let mut pi = vec![1.0 / k as f64; k];
    let mut next = vec![0.0; k];
    for _ in 0..STATIONARY_MAX_ITERS {
        next.iter_mut().for_each(|x| *x = 0.0);
        for (i, row) in transition.iter().enumerate() {
            for (j, p) in row.iter().enumerate() {
                next[j] += pi[i] * p;
            }
        }
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= total);
        let diff = pi
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut pi, &mut next);
        if diff < STATIONARY_TOL {
            return Ok(pi);
        }
    }
    Err(Error::NoConvergence(STATIONARY_MAX_ITERS))
}

/// The almost-sure limit of `ω_n / n`: the stationary mean interdistance.
pub fn analytic_ell(law: &DistanceLaw) -> Result<f64> {
    law.validate()?;
    let weights = law.marginal()?;
    Ok(weights.iter().zip(law.alphabet()).map(|(w, a)| w * a).sum())
}

/// Stationary covariance `Cov(ζ_0, ζ_r)`.
pub fn autocovariance(law: &DistanceLaw, r: u64) -> Result<f64> {
    law.validate()?;
    let alphabet = law.alphabet();
    let pi = law.marginal()?;
    let mean: f64 = pi.iter().zip(alphabet).map(|(w, a)| w * a).sum();
    let second: f64 = pi.iter().zip(alphabet).map(|(w, a)| w * a * a).sum();
    match law {
        DistanceLaw::Iid { .. } => Ok(if r == 0 { second - mean * mean } else { 0.0 }),
        DistanceLaw::Markov { transition, .. } => {
            // g = P^r a, then Cov = Σ π_i a_i g_i − μ².
            let mut g = alphabet.to_vec();
            for _ in 0..r {
                g = transition
                    .iter()
                    .map(|row| row.iter().zip(&g).map(|(p, x)| p * x).sum())
                    .collect();
            }
            let cross: f64 = pi
                .iter()
                .zip(alphabet)
                .zip(&g)
                .map(|((w, a), x)| w * a * x)
                .sum();
            Ok(cross - mean * mean)
        }
    }
}

fn cumulative(weights: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out: Vec<f64> = weights
        .iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect();
    if let Some(last) = out.last_mut() {
        *last = f64::INFINITY;
    }
    out
}

#[inline]
fn pick(cum: &[f64], u: f64) -> usize {
    cum.iter().position(|&c| u < c).unwrap_or(cum.len() - 1)
}

/// Precomputed cumulative tables for drawing interdistance states.
#[derive(Debug, Clone)]
struct StateSampler {
    marginal: Vec<f64>,
    forward: Vec<Vec<f64>>,
    backward: Vec<Vec<f64>>,
    markov: bool,
}

impl StateSampler {
    fn new(law: &DistanceLaw) -> Result<Self> {
        let marginal = law.marginal()?;
        match law {
            DistanceLaw::Iid { .. } => Ok(StateSampler {
                marginal: cumulative(&marginal),
                forward: Vec::new(),
                backward: Vec::new(),
                markov: false,
            }),
            DistanceLaw::Markov { transition, .. } => {
                let forward = transition.iter().map(|row| cumulative(row)).collect();
                let backward = reversed_chain(transition, &marginal)
                    .iter()
                    .map(|row| cumulative(row))
                    .collect();
                Ok(StateSampler {
                    marginal: cumulative(&marginal),
                    forward,
                    backward,
                    markov: true,
                })
            }
        }
    }

    fn first(&self, rng: &mut StreamRng) -> usize {
        pick(&self.marginal, rng.random())
    }

    fn next_right(&self, prev: usize, rng: &mut StreamRng) -> usize {
        if self.markov {
            pick(&self.forward[prev], rng.random())
        } else {
            pick(&self.marginal, rng.random())
        }
    }

    fn next_left(&self, prev: usize, rng: &mut StreamRng) -> usize {
        if self.markov {
            pick(&self.backward[prev], rng.random())
        } else {
            pick(&self.marginal, rng.random())
        }
    }
}

/// Time reversal `P̃_ij = π_j P_ji / π_i` of a stationary chain.
pub fn reversed_chain(transition: &[Vec<f64>], pi: &[f64]) -> Vec<Vec<f64>> {
    let k = transition.len();
    (0..k)
        .map(|i| {
            let mut row: Vec<f64> = (0..k).map(|j| pi[j] * transition[j][i] / pi[i]).collect();
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= total);
            row
        })
        .collect()
}

/// A realized scatterer array over the window `[lo, hi]`.
///
/// Internally the right half always stores at least `ζ_1`, which anchors the
/// leftward (time-reversed) extension of a Markov environment.
#[derive(Debug, Clone)]
pub struct Environment {
    law: DistanceLaw,
    sampler: StateSampler,
    lo: i64,
    hi: i64,
    /// ζ_1, ζ_2, ...
    right_zeta: Vec<f64>,
    /// ω_1, ω_2, ...
    right_omega: Vec<f64>,
    right_state: usize,
    /// ζ_0, ζ_{−1}, ...
    left_zeta: Vec<f64>,
    /// ω_{−1}, ω_{−2}, ...
    left_omega: Vec<f64>,
    left_state: usize,
    right_rng: StreamRng,
    left_rng: StreamRng,
}

impl Environment {
    pub fn generate(law: &DistanceLaw, lo: i64, hi: i64, seed: u64) -> Result<Self> {
        law.validate()?;
        if lo > 0 || hi < 0 {
            return Err(Error::InvalidWindow(format!(
                "window [{lo}, {hi}] must contain 0"
            )));
        }
        let sampler = StateSampler::new(law)?;
        let mut right_rng = keyed_stream(Domain::Environment, seed, 0);
        let left_rng = keyed_stream(Domain::Environment, seed, 1);
        let anchor = sampler.first(&mut right_rng);
        let z1 = law.alphabet()[anchor];
        let mut env = Environment {
            law: law.clone(),
            sampler,
            lo: 0,
            hi: 0,
            right_zeta: vec![z1],
            right_omega: vec![z1],
            right_state: anchor,
            left_zeta: Vec::new(),
            left_omega: Vec::new(),
            left_state: anchor,
            right_rng,
            left_rng,
        };
        env.ensure(lo, hi);
        Ok(env)
    }

    /// Widens the window in place to cover `[lo, hi]`; never shrinks it.
    pub fn ensure(&mut self, lo: i64, hi: i64) {
        let alphabet = self.law.alphabet();
        let want_right = hi.max(1) as usize;
        while self.right_zeta.len() < want_right {
            let s = self.sampler.next_right(self.right_state, &mut self.right_rng);
            let z = alphabet[s];
            let last = *self.right_omega.last().expect("anchor present");
            self.right_zeta.push(z);
            self.right_omega.push(last + z);
            self.right_state = s;
        }
        let want_left = (-lo).max(0) as usize;
        while self.left_zeta.len() < want_left {
            let s = self.sampler.next_left(self.left_state, &mut self.left_rng);
            let z = alphabet[s];
            let last = self.left_omega.last().copied().unwrap_or(0.0);
            self.left_zeta.push(z);
            self.left_omega.push(last - z);
            self.left_state = s;
        }
        self.lo = self.lo.min(lo);
        self.hi = self.hi.max(hi);
    }

    /// A copy of this environment over the wider window `[new_lo, new_hi]`.
    pub fn extend(&self, new_lo: i64, new_hi: i64) -> Result<Self> {
        if new_lo > self.lo || new_hi < self.hi {
            return Err(Error::InvalidWindow(format!(
                "cannot shrink [{}, {}] to [{new_lo}, {new_hi}]",
                self.lo, self.hi
            )));
        }
        let mut out = self.clone();
        out.ensure(new_lo, new_hi);
        Ok(out)
    }

    pub fn law(&self) -> &DistanceLaw {
        &self.law
    }

    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn hi(&self) -> i64 {
        self.hi
    }

    pub fn covers(&self, lo: i64, hi: i64) -> bool {
        self.lo <= lo && hi <= self.hi
    }

    /// Scatterer position `ω_r`, if `r` lies in the window.
    #[inline]
    pub fn omega(&self, r: i64) -> Option<f64> {
        if r < self.lo || r > self.hi {
            return None;
        }
        Some(match r {
            0 => 0.0,
            r if r > 0 => self.right_omega[(r - 1) as usize],
            r => self.left_omega[(-r - 1) as usize],
        })
    }

    /// Position at a real index, read as `ω_{⌊x⌋}`.
    pub fn omega_at(&self, x: f64) -> Option<f64> {
        self.omega(x.floor() as i64)
    }

    /// Interdistance `ζ_r = ω_r − ω_{r−1}` for `r` in `(lo, hi]`.
    #[inline]
    pub fn zeta(&self, r: i64) -> Option<f64> {
        if r <= self.lo || r > self.hi {
            return None;
        }
        Some(if r > 0 {
            self.right_zeta[(r - 1) as usize]
        } else {
            self.left_zeta[(-r) as usize]
        })
    }

    /// `ζ_r` for `r = lo+1 ..= hi`.
    pub fn zetas(&self) -> Vec<f64> {
        (self.lo + 1..=self.hi).filter_map(|r| self.zeta(r)).collect()
    }

    /// `ω_r` for `r = lo ..= hi`.
    pub fn omegas(&self) -> Vec<f64> {
        (self.lo..=self.hi).filter_map(|r| self.omega(r)).collect()
    }
}

/// Point estimate of `ℓ` from `ω_hi / hi` and a jackknife half-width
/// (1.96 standard errors) over 10 contiguous blocks of `ζ_1..ζ_hi`.
pub fn empirical_ell(env: &Environment) -> Result<(f64, f64)> {
    let n = env.hi();
    if n < 100 {
        return Err(Error::InvalidWindow(format!(
            "need hi >= 100 for an estimate, got {n}"
        )));
    }
    const BLOCKS: i64 = 10;
    let total = env.omega(n).expect("in window");
    let estimate = total / n as f64;
    let size = n / BLOCKS;
    let leave_one_out: Vec<f64> = (0..BLOCKS)
        .map(|b| {
            let start = b * size;
            let end = if b == BLOCKS - 1 { n } else { start + size };
            let block = env.omega(end).unwrap() - env.omega(start).unwrap();
            (total - block) / (n - (end - start)) as f64
        })
        .collect();
    let g = BLOCKS as f64;
    let mean = leave_one_out.iter().sum::<f64>() / g;
    let var = (g - 1.0) / g * leave_one_out.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
    Ok((estimate, 1.96 * var.sqrt()))
}

/// Result of the exact boundary-influence enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingReport {
    /// Fitted prefactor `C` of the bound `C·exp(−g·s)`.
    pub c_fit: f64,
    /// Fitted decay rate `g`.
    pub g_fit: f64,
    pub ok: bool,
    /// Maximum |log ratio| of conditional block laws, for separations `1..=separation`.
    pub log_ratios: Vec<f64>,
}

/// Enumerates exactly how much a single distant boundary site can tilt the
/// conditional law of a block of interdistances.
///
/// For a block `Δ = {1..window}` with left neighbour site `0` and a site `A`
/// at distance `s` to the right of the block, the chain's conditional law of
/// `ζ_Δ` given everything outside `Δ ∪ (gap)` depends only on `ζ_0` and `ζ_A`.
/// For each `s = 1..=separation` this computes
/// `max |log P(z | x, y) − log P(z | x, y′)|` over all block configurations
/// `z` and boundary values `x, y, y′`, then fits `C·exp(−g·s)` to the maxima
/// and raises `C` until the bound dominates every observation.
pub fn mixing_ratio_check(law: &DistanceLaw, window: usize, separation: usize) -> Result<MixingReport> {
    law.validate()?;
    if separation == 0 {
        return Err(Error::InvalidArgument("separation must be at least 1".into()));
    }
    if window == 0 || window > 8 {
        return Err(Error::TooLarge(format!(
            "window {window} outside 1..=8 for exact enumeration"
        )));
    }
    let transition = match law {
        DistanceLaw::Iid { .. } => {
            return Ok(MixingReport {
                c_fit: 0.0,
                g_fit: 0.0,
                ok: true,
                log_ratios: vec![0.0; separation],
            })
        }
        DistanceLaw::Markov { transition, .. } => transition,
    };
    let k = transition.len();
    if k > 3 {
        return Err(Error::TooLarge(format!(
            "alphabet of size {k} exceeds 3 for exact enumeration"
        )));
    }

    let configs = k.pow(window as u32);
    let decode = |mut code: usize| -> Vec<usize> {
        let mut z = vec![0; window];
        for slot in z.iter_mut() {
            *slot = code % k;
            code /= k;
        }
        z
    };

    let mut power = transition.to_vec();
    let mut log_ratios = Vec::with_capacity(separation);
    for s in 1..=separation {
        if s > 1 {
            power = mat_mul(&power, transition);
        }
        let mut worst: f64 = 0.0;
        for x in 0..k {
            // conditional[y][z] for each right boundary value y
            let conditional: Vec<Vec<f64>> = (0..k)
                .map(|y| {
                    let weights: Vec<f64> = (0..configs)
                        .map(|code| {
                            let z = decode(code);
                            let mut w = transition[x][z[0]];
                            for pair in z.windows(2) {
                                w *= transition[pair[0]][pair[1]];
                            }
                            w * power[z[window - 1]][y]
                        })
                        .collect();
                    let total: f64 = weights.iter().sum();
                    weights.into_iter().map(|w| w / total).collect()
                })
                .collect();
            for y in 0..k {
                for y2 in 0..k {
                    for code in 0..configs {
                        let r = (conditional[y][code] / conditional[y2][code]).ln().abs();
                        worst = worst.max(r);
                    }
                }
            }
        }
        log_ratios.push(worst);
    }

    let (c_fit, g_fit) = fit_exponential(&log_ratios);
    let ok = g_fit > 0.0
        && c_fit.is_finite()
        && log_ratios
            .iter()
            .enumerate()
            .all(|(i, &r)| r <= c_fit * (-g_fit * (i + 1) as f64).exp() * (1.0 + 1e-12));
    Ok(MixingReport {
        c_fit,
        g_fit,
        ok,
        log_ratios,
    })
}

/// Least-squares slope of `log r_s` against `s`, then the smallest prefactor
/// dominating every point.
fn fit_exponential(ratios: &[f64]) -> (f64, f64) {
    let points: Vec<(f64, f64)> = ratios
        .iter()
        .enumerate()
        .filter(|(_, r)| **r > 0.0)
        .map(|(i, r)| ((i + 1) as f64, r.ln()))
        .collect();
    if points.is_empty() {
        return (0.0, 0.0);
    }
    let g = if points.len() < 2 {
        0.0
    } else {
        let m = points.len() as f64;
        let sx = points.iter().map(|p| p.0).sum::<f64>() / m;
        let sy = points.iter().map(|p| p.1).sum::<f64>() / m;
        let cov: f64 = points.iter().map(|p| (p.0 - sx) * (p.1 - sy)).sum();
        let var: f64 = points.iter().map(|p| (p.0 - sx).powi(2)).sum();
        -cov / var
    };
    let c = ratios
        .iter()
        .enumerate()
        .map(|(i, r)| r * (g * (i + 1) as f64).exp())
        .fold(0.0, f64::max);
    (c, g)
}

fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = b.len();
    a.iter()
        .map(|row| {
            (0..b[0].len())
                .map(|j| (0..k).map(|m| row[m] * b[m][j]).sum())
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sym_markov() -> DistanceLaw {
        DistanceLaw::markov(vec![1.0, 2.0], vec![vec![0.9, 0.1], vec![0.1, 0.9]]).unwrap()
    }

    fn coin() -> DistanceLaw {
        DistanceLaw::iid(vec![1.0, 2.0], vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn unit_spacing_is_the_lattice() {
        let env = Environment::generate(&DistanceLaw::constant(1.0).unwrap(), -5, 5, 3).unwrap();
        for r in -5..=5 {
            assert_eq!(env.omega(r), Some(r as f64));
        }
        assert_eq!(env.omega(6), None);
        assert_eq!(env.zeta(-5), None);
        assert_eq!(env.zeta(-4), Some(1.0));
    }

    #[test]
    fn support_and_monotonicity() {
        let env = Environment::generate(&coin(), -200, 200, 11).unwrap();
        for r in -199..=200 {
            let z = env.zeta(r).unwrap();
            assert!(z == 1.0 || z == 2.0);
            assert_eq!(env.omega(r).unwrap() - env.omega(r - 1).unwrap(), z);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        for law in [coin(), sym_markov()] {
            let a = Environment::generate(&law, -50, 80, 99).unwrap();
            let b = Environment::generate(&law, -50, 80, 99).unwrap();
            assert_eq!(a.zetas(), b.zetas());
        }
    }

    #[test]
    fn extension_preserves_prefix_and_matches_direct_generation() {
        for law in [coin(), sym_markov()] {
            let small = Environment::generate(&law, -5, 5, 4).unwrap();
            let same = small.extend(-5, 5).unwrap();
            assert_eq!(same.zetas(), small.zetas());
            let big = small.extend(-10, 10).unwrap();
            for r in -5..=5 {
                assert_eq!(big.omega(r), small.omega(r));
            }
            let direct = Environment::generate(&law, -10, 10, 4).unwrap();
            assert_eq!(direct.zetas(), big.zetas());
        }
    }

    #[test]
    fn shrinking_is_an_error() {
        let env = Environment::generate(&coin(), -5, 5, 1).unwrap();
        assert!(matches!(env.extend(-4, 5), Err(Error::InvalidWindow(_))));
        assert!(matches!(env.extend(-5, 4), Err(Error::InvalidWindow(_))));
    }

    #[test]
    fn bad_laws_and_windows_are_rejected() {
        assert!(DistanceLaw::iid(vec![1.0, -1.0], vec![0.5, 0.5]).is_err());
        assert!(DistanceLaw::iid(vec![], vec![]).is_err());
        assert!(DistanceLaw::iid(vec![1.0], vec![0.9]).is_err());
        assert!(DistanceLaw::markov(vec![1.0, 2.0], vec![vec![1.0, 0.0], vec![0.5, 0.5]]).is_err());
        assert!(DistanceLaw::markov(vec![1.0, 2.0], vec![vec![0.7, 0.2], vec![0.5, 0.5]]).is_err());
        assert!(Environment::generate(&coin(), 1, 5, 0).is_err());
        assert!(Environment::generate(&coin(), -5, -1, 0).is_err());
    }

    #[test]
    fn stationary_examples() {
        let pi = stationary_distribution(&[vec![0.9, 0.1], vec![0.1, 0.9]]).unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-12 && (pi[1] - 0.5).abs() < 1e-12);
        let pi = stationary_distribution(&[vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        assert!((pi[0] - 2.0 / 3.0).abs() < 1e-12 && (pi[1] - 1.0 / 3.0).abs() < 1e-12);
        assert!(stationary_distribution(&[vec![1.0, 0.0], vec![0.2, 0.8]]).is_err());
    }

    #[test]
    fn ell_examples() {
        assert_eq!(analytic_ell(&coin()).unwrap(), 1.5);
        assert!((analytic_ell(&sym_markov()).unwrap() - 1.5).abs() < 1e-12);
        assert_eq!(analytic_ell(&DistanceLaw::constant(2.5).unwrap()).unwrap(), 2.5);
    }

    #[test]
    fn autocovariance_examples() {
        assert_eq!(autocovariance(&coin(), 3).unwrap(), 0.0);
        assert!((autocovariance(&coin(), 0).unwrap() - 0.25).abs() < 1e-15);
        for r in 0..12 {
            let expected = 0.25 * 0.8f64.powi(r as i32);
            assert!((autocovariance(&sym_markov(), r).unwrap() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn empirical_ell_examples() {
        let env = Environment::generate(&DistanceLaw::constant(1.0).unwrap(), 0, 1000, 0).unwrap();
        assert_eq!(empirical_ell(&env).unwrap(), (1.0, 0.0));
        let short = Environment::generate(&coin(), 0, 99, 0).unwrap();
        assert!(empirical_ell(&short).is_err());
        let env = Environment::generate(&coin(), 0, 1_000_000, 5).unwrap();
        let (est, hw) = empirical_ell(&env).unwrap();
        assert!((est - 1.5).abs() < 0.01, "{est}");
        assert!(hw > 0.0 && hw < 0.01);
        let env = Environment::generate(&sym_markov(), 0, 1_000_000, 5).unwrap();
        let (est, _) = empirical_ell(&env).unwrap();
        assert!((est - 1.5).abs() < 0.02, "{est}");
    }

    #[test]
    fn reversed_chain_of_reversible_chain_is_itself() {
        let p = vec![vec![0.7, 0.3], vec![0.3, 0.7]];
        let pi = stationary_distribution(&p).unwrap();
        let rev = reversed_chain(&p, &pi);
        for i in 0..2 {
            for j in 0..2 {
                assert!((rev[i][j] - p[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mixing_iid_and_preconditions() {
        let rep = mixing_ratio_check(&coin(), 4, 6).unwrap();
        assert!(rep.ok);
        assert_eq!(rep.c_fit, 0.0);
        assert!(rep.log_ratios.iter().all(|&r| r == 0.0));
        assert!(mixing_ratio_check(&sym_markov(), 4, 0).is_err());
        assert!(mixing_ratio_check(&sym_markov(), 9, 2).is_err());
        let big = DistanceLaw::markov(vec![1.0, 2.0, 3.0, 4.0], vec![vec![0.25; 4]; 4]).unwrap();
        assert!(matches!(mixing_ratio_check(&big, 2, 2), Err(Error::TooLarge(_))));
    }

    #[test]
    fn mixing_markov_decays_geometrically() {
        let rep = mixing_ratio_check(&sym_markov(), 4, 6).unwrap();
        assert!(rep.ok);
        assert!(rep.log_ratios.windows(2).all(|w| w[1] < w[0]));
        // second eigenvalue 0.8 drives the decay
        assert!((rep.g_fit - (-0.8f64.ln())).abs() < 0.05, "{}", rep.g_fit);
    }

    #[test]
    fn law_json_shapes() {
        let law: DistanceLaw =
            serde_json::from_str(r#"{"kind":"iid","alphabet":[1,2],"probs":[0.5,0.5]}"#).unwrap();
        assert_eq!(law, coin());
        let law: DistanceLaw = serde_json::from_str(
            r#"{"kind":"markov","alphabet":[1,2],"transition":[[0.9,0.1],[0.1,0.9]]}"#,
        )
        .unwrap();
        assert_eq!(law, sym_markov());
        let text = serde_json::to_string(&law).unwrap();
        assert!(text.contains(r#""kind":"markov""#));
        assert!(serde_json::from_str::<DistanceLaw>(
            r#"{"kind":"markov","alphabet":[1,2],"transition":[[1,0],[0.1,0.9]]}"#
        )
        .is_err());
    }
}
