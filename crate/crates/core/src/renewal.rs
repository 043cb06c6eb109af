//! The three-valued auxiliary field `ε`, its regeneration times `τ^(L)` and
//! the auxiliary field `η` built from an environment.

use std::io::Write;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::rng::{keyed_stream, Domain};
use crate::stats::MomentAccumulator;

/// Largest run length accepted by [`tau_moment_report`].
pub const MAX_RUN_LENGTH: u32 = 7;
pub const MIN_TAU_REPLICAS: usize = 1000;
/// Fraction of replicas allowed to miss the first regeneration time.
pub const MAX_MISS_FRACTION: f64 = 0.01;

/// I.i.d. entries in `{−1, 0, +1}` with law `(1/4, 1/2, 1/4)`, indexed from 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpsilonField {
    values: Vec<i8>,
}

/// Two uniform bits per entry: `00 → −1`, `01, 10 → 0`, `11 → +1`.
pub struct EpsilonStream<'a, R: RngCore + ?Sized> {
    rng: &'a mut R,
    word: u64,
    left: u32,
}

impl<'a, R: RngCore + ?Sized> EpsilonStream<'a, R> {
    pub fn new(rng: &'a mut R) -> Self {
        EpsilonStream { rng, word: 0, left: 0 }
    }
}

impl<R: RngCore + ?Sized> Iterator for EpsilonStream<'_, R> {
    type Item = i8;

    #[inline]
    fn next(&mut self) -> Option<i8> {
        if self.left == 0 {
            self.word = self.rng.next_u64();
            self.left = 32;
        }
        let bits = self.word & 3;
        self.word >>= 2;
        self.left -= 1;
        Some(match bits {
            0 => -1,
            3 => 1,
            _ => 0,
        })
    }
}

pub fn sample_epsilon<R: RngCore + ?Sized>(horizon: usize, rng: &mut R) -> Result<EpsilonField> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    Ok(EpsilonField { values: EpsilonStream::new(rng).take(horizon).collect() })
}

impl EpsilonField {
    pub fn from_values(values: Vec<i8>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("field must have at least one entry".into()));
        }
        if let Some(v) = values.iter().find(|v| !(-1..=1).contains(*v)) {
            return Err(Error::InvalidArgument(format!("entry {v} not in {{-1, 0, 1}}")));
        }
        Ok(EpsilonField { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `ε_i` for `1 ≤ i ≤ horizon`.
    pub fn get(&self, i: usize) -> Option<i8> {
        i.checked_sub(1).and_then(|j| self.values.get(j).copied())
    }

    pub fn values(&self) -> &[i8] {
        &self.values
    }

    /// Empirical frequencies of `(−1, 0, +1)`.
    pub fn frequencies(&self) -> [f64; 3] {
        let mut counts = [0usize; 3];
        for &v in &self.values {
            counts[(v + 1) as usize] += 1;
        }
        let n = self.values.len() as f64;
        counts.map(|c| c as f64 / n)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TauTimes {
    pub run_length: u32,
    pub times: Vec<usize>,
}

impl TauTimes {
    /// `τ_1, τ_2 − τ_1, ...`
    pub fn inter_arrivals(&self) -> Vec<usize> {
        let mut prev = 0;
        self.times
            .iter()
            .map(|&t| {
                let d = t - prev;
                prev = t;
                d
            })
            .collect()
    }
}

/// Feeds entries one at a time and reports the indices `j` at which the `L`
/// preceding entries are all `+1` and `ε_j ∈ {−1, 0}`.
#[derive(Debug, Clone, Copy)]
struct RunScanner {
    run_length: u32,
    run: u32,
    index: usize,
}

impl RunScanner {
    fn new(run_length: u32) -> Self {
        RunScanner { run_length, run: 0, index: 0 }
    }

    #[inline]
    fn push(&mut self, e: i8) -> Option<usize> {
        self.index += 1;
        let hit = self.run >= self.run_length && e != 1;
        self.run = if e == 1 { self.run + 1 } else { 0 };
        hit.then_some(self.index)
    }
}

/// All regeneration times of run length `L` within the field's horizon.
pub fn tau_times(eps: &EpsilonField, run_length: u32) -> Result<TauTimes> {
    if run_length == 0 {
        return Err(Error::InvalidArgument("run length must be at least 1".into()));
    }
    let mut scan = RunScanner::new(run_length);
    let times = eps.values.iter().filter_map(|&e| scan.push(e)).collect();
    Ok(TauTimes { run_length, times })
}

/// First regeneration time read from a fresh stream, or `None` past `horizon`.
pub fn first_tau<R: RngCore + ?Sized>(rng: &mut R, run_length: u32, horizon: usize) -> Option<usize> {
    let mut scan = RunScanner::new(run_length);
    EpsilonStream::new(rng).take(horizon).find_map(|e| scan.push(e))
}

/// Default search horizon `50·4^L`.
pub fn tau_horizon(run_length: u32) -> usize {
    50 * 4usize.pow(run_length)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauMomentRow {
    #[serde(rename = "L")]
    pub run_length: u32,
    pub p: f64,
    /// `E[(4^{−L} τ_1)^p]^{1/p}`
    pub estimate: f64,
    pub stderr: f64,
    pub replicas: usize,
    pub misses: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandCheck {
    pub p: f64,
    pub min: f64,
    pub max: f64,
    pub ratio: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauMomentReport {
    pub rows: Vec<TauMomentRow>,
    pub bands: Vec<BandCheck>,
}

/// Largest `max/min` ratio across run lengths accepted as a common band.
pub const BAND_RATIO: f64 = 4.0;

/// Monte Carlo estimates of the scaled moments of `τ_1` for every `(L, p)`.
/// Replica `i` at run length `L` reads its own keyed stream, so the table is
/// a pure function of `seed`.
pub fn tau_moment_report(
    run_lengths: &[u32],
    moments: &[f64],
    replicas: usize,
    seed: u64,
) -> Result<TauMomentReport> {
    if replicas < MIN_TAU_REPLICAS {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_TAU_REPLICAS} replicas, got {replicas}"
        )));
    }
    if run_lengths.is_empty() || moments.is_empty() {
        return Err(Error::InvalidArgument("empty run length or moment list".into()));
    }
    if let Some(l) = run_lengths.iter().find(|&&l| l == 0 || l > MAX_RUN_LENGTH) {
        return Err(Error::InvalidArgument(format!("run length {l} outside 1..={MAX_RUN_LENGTH}")));
    }
    if let Some(p) = moments.iter().find(|&&p| !(p >= 1.0 && p.is_finite())) {
        return Err(Error::InvalidArgument(format!("moment order {p} must be ≥ 1")));
    }

    let mut rows = Vec::new();
    for &l in run_lengths {
        let horizon = tau_horizon(l);
        let scale = 0.25f64.powi(l as i32);
        let mut taus = Vec::with_capacity(replicas);
        let mut misses = 0;
        for i in 0..replicas {
            let mut rng = keyed_stream(Domain::Auxiliary, seed, (u64::from(l) << 40) | i as u64);
            match first_tau(&mut rng, l, horizon) {
                Some(t) => taus.push(t as f64 * scale),
                None => misses += 1,
            }
        }
        if misses as f64 > MAX_MISS_FRACTION * replicas as f64 {
            return Err(Error::HorizonExceeded(format!(
                "L = {l}: {misses} of {replicas} replicas found no regeneration within {horizon}"
            )));
        }
        for &p in moments {
            let summary = taus.iter().map(|&t| t.powf(p)).collect::<MomentAccumulator>().finalize()?;
            let estimate = summary.mean.powf(1.0 / p);
            // delta method for m ↦ m^{1/p}
            let stderr = summary.mean.powf(1.0 / p - 1.0) / p * summary.stderr;
            rows.push(TauMomentRow {
                run_length: l,
                p,
                estimate,
                stderr,
                replicas: taus.len(),
                misses,
            });
        }
    }

    let bands = moments
        .iter()
        .map(|&p| {
            let (min, max) = rows
                .iter()
                .filter(|r| r.p == p)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                    (lo.min(r.estimate), hi.max(r.estimate))
                });
            let ratio = max / min;
            BandCheck { p, min, max, ratio, ok: ratio <= BAND_RATIO }
        })
        .collect();
    Ok(TauMomentReport { rows, bands })
}

impl TauMomentReport {
    pub fn all_bands_ok(&self) -> bool {
        self.bands.iter().all(|b| b.ok)
    }

    /// CSV rows `L,p,estimate,stderr,replicas`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "L,p,estimate,stderr,replicas")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{},{}", r.run_length, r.p, r.estimate, r.stderr, r.replicas)?;
        }
        Ok(())
    }
}

/// `η = 2𝔼ζ·1{ε = ±1} + 2(ζ − 𝔼ζ)·1{ε = 0}`.
#[inline]
pub fn eta_value(zeta: f64, eps: i8, mean_zeta: f64) -> f64 {
    if eps == 0 {
        2.0 * (zeta - mean_zeta)
    } else {
        2.0 * mean_zeta
    }
}

/// Average of `η` over the law of a single `ε`; equals `ζ`.
#[inline]
pub fn epsilon_average(zeta: f64, mean_zeta: f64) -> f64 {
    0.25 * eta_value(zeta, 1, mean_zeta)
        + 0.25 * eta_value(zeta, -1, mean_zeta)
        + 0.5 * eta_value(zeta, 0, mean_zeta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuxField {
    pub eta: Vec<f64>,
    pub zeta: Vec<f64>,
    pub mean_zeta: f64,
}

/// `η_r` for `r = 1..=horizon` of `eps`; the environment must cover `[0, horizon]`.
pub fn eta_field(env: &Environment, eps: &EpsilonField, mean_zeta: f64) -> Result<AuxField> {
    let h = eps.len();
    if !env.covers(0, h as i64) {
        return Err(Error::InvalidWindow(format!(
            "field horizon {h} exceeds environment window [{}, {}]",
            env.lo(),
            env.hi()
        )));
    }
    let zeta: Vec<f64> = (1..=h as i64).map(|r| env.zeta(r).expect("covered")).collect();
    let eta = zeta
        .iter()
        .zip(&eps.values)
        .map(|(&z, &e)| eta_value(z, e, mean_zeta))
        .collect();
    Ok(AuxField { eta, zeta, mean_zeta })
}

impl AuxField {
    /// `Σ_{r ≤ N}` of the ε-averaged field for `N = 1..=horizon`; matches `ω_N`.
    pub fn averaged_partial_sums(&self) -> Vec<f64> {
        self.zeta
            .iter()
            .scan(0.0, |acc, &z| {
                *acc += epsilon_average(z, self.mean_zeta);
                Some(*acc)
            })
            .collect()
    }

    /// `n^{−1} Σ_{r ≤ n} η_r`.
    pub fn running_mean(&self) -> f64 {
        self.eta.iter().sum::<f64>() / self.eta.len() as f64
    }
}
