//! Piecewise-linear càdlàg paths on a finite window of ℝ, increasing time
//! changes, and an explicit J1-Skorokhod distance.
//!
//! A [`CadlagPath`] is a list of segments `(start, value, slope)`; on
//! `[start_i, start_{i+1})` the path equals `value + slope·(t − start)`.
//! Discontinuities can only sit at segment starts, and the path is
//! right-continuous there by construction.
//!
//! The distance is
//! `d(x, y) = Σ_N 2^{−N} (δ_N(x, y) ∧ 1)` with
//! `δ_N(x, y) = inf_λ ‖(k_N x)∘λ − k_N y‖_∞ + ‖λ‖`, where `k_N` is the
//! trapezoidal taper and `‖λ‖ = sup |log((λ_t − λ_s)/(t − s))|`. The infimum
//! is approximated from above over piecewise-linear `λ` whose knots sit at the
//! paths' breakpoints.

use std::io::{BufRead, Write};

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{keyed_stream, Domain};

const CONTINUITY_TOL: f64 = 1e-9;
const JUMP_TOL: f64 = 1e-12;
/// Maximum chord error allowed when re-linearizing tapered segments.
pub const TAPER_MAX_ERROR: f64 = 1e-6;
/// Minimum number of chords per sloped segment piece on a taper ramp.
pub const TAPER_GRID: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub value: f64,
    pub slope: f64,
}

impl Segment {
    #[inline]
    pub fn at(&self, t: f64) -> f64 {
        self.value + self.slope * (t - self.start)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CadlagPath {
    segments: Vec<Segment>,
    end: f64,
}

impl CadlagPath {
    /// Builds a path from segments; the window is `[segments[0].start, end]`.
    pub fn new(segments: Vec<Segment>, end: f64) -> Result<Self> {
        let first = segments
            .first()
            .ok_or_else(|| Error::InvalidArgument("path needs at least one segment".into()))?;
        if !(first.start.is_finite() && end.is_finite() && first.start < end) {
            return Err(Error::InvalidWindow(format!(
                "window [{}, {end}] is empty or not finite",
                first.start
            )));
        }
        for s in &segments {
            if !(s.start.is_finite() && s.value.is_finite() && s.slope.is_finite()) {
                return Err(Error::InvalidArgument(format!("non-finite segment {s:?}")));
            }
        }
        if segments.windows(2).any(|w| w[1].start <= w[0].start) {
            return Err(Error::InvalidArgument(
                "segment starts must be strictly increasing".into(),
            ));
        }
        if segments.last().expect("nonempty").start >= end {
            return Err(Error::InvalidArgument("last segment starts at or after the window end".into()));
        }
        Ok(CadlagPath { segments, end })
    }

    pub fn constant(c: f64, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![Segment { start: lo, value: c, slope: 0.0 }], hi)
    }

    /// `t ↦ slope·t`.
    pub fn linear(slope: f64, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![Segment { start: lo, value: slope * lo, slope }], hi)
    }

    /// Piecewise-constant path starting at `initial` and switching to
    /// `value` at each `(time, value)`; times must be increasing and inside
    /// `(lo, hi)`.
    pub fn step(lo: f64, hi: f64, initial: f64, jumps: &[(f64, f64)]) -> Result<Self> {
        let mut segments = vec![Segment { start: lo, value: initial, slope: 0.0 }];
        for &(t, v) in jumps {
            segments.push(Segment { start: t, value: v, slope: 0.0 });
        }
        Self::new(segments, hi)
    }

    pub fn lo(&self) -> f64 {
        self.segments[0].start
    }

    pub fn hi(&self) -> f64 {
        self.end
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn covers(&self, lo: f64, hi: f64) -> bool {
        self.lo() <= lo && hi <= self.hi()
    }

    /// Segment starts after the window start.
    pub fn breakpoints(&self) -> impl Iterator<Item = f64> + '_ {
        self.segments[1..].iter().map(|s| s.start)
    }

    #[inline]
    fn index_at(&self, t: f64) -> usize {
        self.segments.partition_point(|s| s.start <= t).saturating_sub(1)
    }

    fn check_in_window(&self, t: f64) -> Result<()> {
        if t < self.lo() || t > self.hi() || t.is_nan() {
            return Err(Error::InvalidWindow(format!(
                "t = {t} outside [{}, {}]",
                self.lo(),
                self.hi()
            )));
        }
        Ok(())
    }

    /// Right-continuous value at `t`.
    pub fn evaluate(&self, t: f64) -> Result<f64> {
        self.check_in_window(t)?;
        Ok(self.value_unchecked(t))
    }

    #[inline]
    fn value_unchecked(&self, t: f64) -> f64 {
        self.segments[self.index_at(t)].at(t)
    }

    /// Left limit at `t`; at the window start this is the value itself.
    pub fn left_limit(&self, t: f64) -> Result<f64> {
        self.check_in_window(t)?;
        let i = self.index_at(t);
        if i > 0 && self.segments[i].start == t {
            Ok(self.segments[i - 1].at(t))
        } else {
            Ok(self.segments[i].at(t))
        }
    }

    /// Jump `x(t) − x(t−)` at each segment start.
    pub fn jumps(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.segments
            .windows(2)
            .map(|w| (w[1].start, w[1].value - w[0].at(w[1].start)))
    }

    pub fn is_continuous(&self) -> bool {
        self.jumps()
            .all(|(_, j)| j.abs() <= CONTINUITY_TOL * (1.0 + j.abs()))
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.segments.iter().all(|s| s.slope >= 0.0) && self.jumps().all(|(_, j)| j >= -CONTINUITY_TOL)
    }

    /// Smallest and largest value attained or approached on the window.
    pub fn range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (i, s) in self.segments.iter().enumerate() {
            let end = self.segments.get(i + 1).map_or(self.end, |n| n.start);
            for v in [s.value, s.at(end)] {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        (lo, hi)
    }

    /// Pointwise scaling `c·x`.
    pub fn scaled(&self, c: f64) -> CadlagPath {
        CadlagPath {
            segments: self
                .segments
                .iter()
                .map(|s| Segment { start: s.start, value: c * s.value, slope: c * s.slope })
                .collect(),
            end: self.end,
        }
    }

    /// CSV rows `t,value_right,value_left_if_jump`: one row per segment start
    /// and a final row at the window end.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,value_right,value_left_if_jump")?;
        for (i, s) in self.segments.iter().enumerate() {
            let left = if i == 0 { s.value } else { self.segments[i - 1].at(s.start) };
            if i > 0 && (left - s.value).abs() > JUMP_TOL {
                writeln!(w, "{},{},{}", s.start, s.value, left)?;
            } else {
                writeln!(w, "{},{},", s.start, s.value)?;
            }
        }
        let last = self.segments.last().expect("nonempty");
        writeln!(w, "{},{},", self.end, last.at(self.end))?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut rows: Vec<(f64, f64, Option<f64>)> = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with('t')) {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() < 2 {
                return Err(Error::InvalidArgument(format!("line {}: expected t,value", lineno + 1)));
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::InvalidArgument(format!("line {}: {e}", lineno + 1)))
            };
            let left = match fields.get(2) {
                Some(s) if !s.is_empty() => Some(parse(s)?),
                _ => None,
            };
            rows.push((parse(fields[0])?, parse(fields[1])?, left));
        }
        if rows.len() < 2 {
            return Err(Error::InvalidArgument("path CSV needs at least two rows".into()));
        }
        let end = rows.last().expect("len >= 2").0;
        let segments = rows
            .windows(2)
            .map(|w| {
                let (t0, v0, _) = w[0];
                let (t1, v1, left1) = w[1];
                let arrive = left1.unwrap_or(v1);
                Segment { start: t0, value: v0, slope: (arrive - v0) / (t1 - t0) }
            })
            .collect();
        CadlagPath::new(segments, end)
    }
}

/// `x∘y` for a continuous nondecreasing `x`; exact on piecewise-linear input.
pub fn compose(x: &CadlagPath, y: &CadlagPath) -> Result<CadlagPath> {
    if !x.is_continuous() {
        return Err(Error::InvalidArgument("outer path must be continuous".into()));
    }
    if !x.is_nondecreasing() {
        return Err(Error::InvalidArgument("outer path must be nondecreasing".into()));
    }
    let (ymin, ymax) = y.range();
    let slack = CONTINUITY_TOL * (1.0 + ymin.abs().max(ymax.abs()));
    if ymin < x.lo() - slack || ymax > x.hi() + slack {
        return Err(Error::InvalidWindow(format!(
            "range [{ymin}, {ymax}] of inner path escapes [{}, {}]",
            x.lo(),
            x.hi()
        )));
    }
    let x_breaks: Vec<f64> = x.breakpoints().collect();
    let mut out = Vec::with_capacity(y.segments.len());
    for (i, seg) in y.segments.iter().enumerate() {
        let a = seg.start;
        let b = y.segments.get(i + 1).map_or(y.end, |n| n.start);
        let mut cuts = vec![a];
        if seg.slope != 0.0 {
            let (va, vb) = (seg.at(a), seg.at(b));
            let (lo, hi) = if va < vb { (va, vb) } else { (vb, va) };
            let from = x_breaks.partition_point(|&c| c <= lo);
            let to = x_breaks.partition_point(|&c| c < hi);
            let mut inner: Vec<f64> = x_breaks[from..to]
                .iter()
                .map(|&c| a + (c - seg.value) / seg.slope)
                .filter(|&t| t > a && t < b)
                .collect();
            inner.sort_by(f64::total_cmp);
            cuts.extend(inner);
        }
        cuts.dedup();
        for (j, &t) in cuts.iter().enumerate() {
            let next = cuts.get(j + 1).copied().unwrap_or(b);
            let mid = seg.at(0.5 * (t + next)).clamp(x.lo(), x.hi());
            let xs = x.segments[x.index_at(mid)];
            out.push(Segment {
                start: t,
                value: xs.at(seg.at(t)),
                slope: xs.slope * seg.slope,
            });
        }
    }
    CadlagPath::new(out, y.end)
}

/// The trapezoid `k_N`: 1 on `|t| ≤ N`, linear down to 0 on `N < |t| ≤ N+1`.
pub fn taper_weight(n: u32, t: f64) -> f64 {
    let n = n as f64;
    let a = t.abs();
    if a <= n {
        1.0
    } else if a <= n + 1.0 {
        n + 1.0 - a
    } else {
        0.0
    }
}

/// `k_N·x`, with quadratic ramp pieces replaced by chords of error at most
/// [`TAPER_MAX_ERROR`].
pub fn taper(path: &CadlagPath, n: u32) -> Result<CadlagPath> {
    if n == 0 {
        return Err(Error::InvalidArgument("taper index must be at least 1".into()));
    }
    let nf = n as f64;
    if !path.covers(-(nf + 1.0), nf + 1.0) {
        return Err(Error::InvalidWindow(format!(
            "window [{}, {}] does not cover [-{}, {}]",
            path.lo(),
            path.hi(),
            nf + 1.0,
            nf + 1.0
        )));
    }
    let knots = [-(nf + 1.0), -nf, nf, nf + 1.0];
    let mut out: Vec<Segment> = Vec::new();
    let mut push = |s: Segment| {
        if let Some(last) = out.last() {
            if s.start <= last.start {
                return;
            }
        }
        out.push(s);
    };
    for (i, seg) in path.segments.iter().enumerate() {
        let a = seg.start;
        let b = path.segments.get(i + 1).map_or(path.end, |s| s.start);
        let mut cuts = vec![a];
        cuts.extend(knots.iter().copied().filter(|&k| k > a && k < b));
        for (j, &p) in cuts.iter().enumerate() {
            let q = cuts.get(j + 1).copied().unwrap_or(b);
            let mid = 0.5 * (p + q);
            let am = mid.abs();
            if am <= nf || am > nf + 1.0 {
                let k = if am <= nf { 1.0 } else { 0.0 };
                push(Segment { start: p, value: k * seg.at(p), slope: k * seg.slope });
                continue;
            }
            // ramp: k(t) = N + 1 − |t|, slope ∓1
            let ks = if mid > 0.0 { -1.0 } else { 1.0 };
            let k_at = |t: f64| nf + 1.0 - t.abs();
            if seg.slope == 0.0 {
                push(Segment { start: p, value: k_at(p) * seg.value, slope: ks * seg.value });
                continue;
            }
            let curvature = (ks * seg.slope).abs();
            // chord error of c·t² over a width h is |c|·h²/4
            let h_max = (4.0 * TAPER_MAX_ERROR / curvature).sqrt();
            let pieces = TAPER_GRID.max(((q - p) / h_max).ceil() as usize);
            let h = (q - p) / pieces as f64;
            for m in 0..pieces {
                let t0 = p + m as f64 * h;
                let t1 = if m + 1 == pieces { q } else { t0 + h };
                let v0 = k_at(t0) * seg.at(t0);
                let v1 = k_at(t1) * seg.at(t1);
                push(Segment { start: t0, value: v0, slope: (v1 - v0) / (t1 - t0) });
            }
        }
    }
    CadlagPath::new(out, path.end)
}

/// A strictly increasing continuous piecewise-linear map fixing its endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeChange {
    times: Vec<f64>,
    images: Vec<f64>,
}

impl TimeChange {
    /// Knots `(t_i, λ(t_i))`; both coordinates strictly increasing, with
    /// `λ(t_0) = t_0` and `λ(t_K) = t_K`.
    pub fn new(knots: &[(f64, f64)]) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::InvalidArgument("time change needs two knots".into()));
        }
        let times: Vec<f64> = knots.iter().map(|k| k.0).collect();
        let images: Vec<f64> = knots.iter().map(|k| k.1).collect();
        if times.windows(2).any(|w| w[1] <= w[0]) || images.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("time change must be strictly increasing".into()));
        }
        let last = knots.len() - 1;
        if times[0] != images[0] || times[last] != images[last] {
            return Err(Error::InvalidArgument("time change must fix the window endpoints".into()));
        }
        Ok(TimeChange { times, images })
    }

    pub fn identity(lo: f64, hi: f64) -> Result<Self> {
        Self::new(&[(lo, lo), (hi, hi)])
    }

    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.iter().copied().zip(self.images.iter().copied())
    }

    pub fn lo(&self) -> f64 {
        self.times[0]
    }

    pub fn hi(&self) -> f64 {
        *self.times.last().expect("nonempty")
    }

    /// `λ(t)`; the identity outside the knot window.
    pub fn apply(&self, t: f64) -> f64 {
        interpolate(&self.times, &self.images, t)
    }

    pub fn inverse(&self) -> TimeChange {
        TimeChange { times: self.images.clone(), images: self.times.clone() }
    }
}

#[inline]
fn interpolate(xs: &[f64], ys: &[f64], t: f64) -> f64 {
    if t <= xs[0] || t >= xs[xs.len() - 1] {
        return t;
    }
    let i = xs.partition_point(|&x| x <= t) - 1;
    ys[i] + (ys[i + 1] - ys[i]) * (t - xs[i]) / (xs[i + 1] - xs[i])
}

/// `sup_{t>s} |log((λ_t − λ_s)/(t − s))|`, which for a piecewise-linear map is
/// the largest `|log slope|` over its segments.
pub fn timechange_norm(lam: &TimeChange) -> Result<f64> {
    knot_norm(&lam.times, &lam.images)
}

fn knot_norm(times: &[f64], images: &[f64]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for i in 0..times.len() - 1 {
        let dt = times[i + 1] - times[i];
        let dl = images[i + 1] - images[i];
        if !(dt > 0.0 && dl > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "non-increasing time change segment at knot {i}"
            )));
        }
        worst = worst.max((dl / dt).ln().abs());
    }
    Ok(worst)
}

/// Tuning for the time-change search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub random_restarts: usize,
    pub max_sweeps: usize,
    pub golden_iterations: usize,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { random_restarts: 3, max_sweeps: 20, golden_iterations: 40, seed: 0x5eed }
    }
}

/// `‖f∘λ − g‖_∞ + ‖λ‖` on `[a, b]` for tapered `f`, `g` and knots `(ts, ys)`.
struct Objective<'a> {
    f: &'a CadlagPath,
    g: &'a CadlagPath,
    f_starts: Vec<f64>,
    g_starts: Vec<f64>,
    a: f64,
    b: f64,
    scratch: std::cell::RefCell<Vec<f64>>,
}

impl<'a> Objective<'a> {
    fn new(f: &'a CadlagPath, g: &'a CadlagPath, a: f64, b: f64) -> Self {
        let inside = |p: &CadlagPath| p.breakpoints().filter(|&t| t > a && t < b).collect();
        Objective {
            f,
            g,
            f_starts: inside(f),
            g_starts: inside(g),
            a,
            b,
            scratch: std::cell::RefCell::new(Vec::new()),
        }
    }

    fn sup_distance(&self, ts: &[f64], ys: &[f64]) -> f64 {
        let mut breaks = self.scratch.borrow_mut();
        breaks.clear();
        breaks.push(self.a);
        breaks.push(self.b);
        breaks.extend_from_slice(&self.g_starts);
        breaks.extend(ts.iter().copied().filter(|&t| t > self.a && t < self.b));
        breaks.extend(self.f_starts.iter().map(|&s| interpolate(ys, ts, s)));
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let mut worst: f64 = 0.0;
        for w in breaks.windows(2) {
            let (p, q) = (w[0], w[1]);
            if q <= p {
                continue;
            }
            let mid = 0.5 * (p + q);
            let k = ts.partition_point(|&t| t <= mid).clamp(1, ts.len() - 1) - 1;
            let lam = |t: f64| ys[k] + (ys[k + 1] - ys[k]) * (t - ts[k]) / (ts[k + 1] - ts[k]);
            let fs = self.f.segments[self.f.index_at(lam(mid))];
            let gs = self.g.segments[self.g.index_at(mid)];
            let hp = fs.at(lam(p)) - gs.at(p);
            let hq = fs.at(lam(q)) - gs.at(q);
            worst = worst.max(hp.abs()).max(hq.abs());
        }
        let at_end = self.f.value_unchecked(self.b) - self.g.value_unchecked(self.b);
        worst.max(at_end.abs())
    }

    fn value(&self, ts: &[f64], ys: &[f64]) -> f64 {
        match knot_norm(ts, ys) {
            Ok(norm) => self.sup_distance(ts, ys) + norm,
            Err(_) => f64::INFINITY,
        }
    }
}

fn jump_times(p: &CadlagPath, a: f64, b: f64) -> Vec<f64> {
    p.jumps()
        .filter(|&(t, j)| t > a && t < b && j.abs() > JUMP_TOL)
        .map(|(t, _)| t)
        .collect()
}

/// Coordinate descent over knot images, from one starting point.
fn descend(obj: &Objective, ts: &[f64], start: Vec<f64>, snaps: &[f64], g_jumps: &[f64], opts: &SolverOptions) -> f64 {
    let k = ts.len();
    let mut ys = start;
    let mut best = obj.value(ts, &ys);
    let mut pinned = vec![false; k];
    pinned[0] = true;
    pinned[k - 1] = true;
    let is_g_jump: Vec<bool> = ts.iter().map(|t| g_jumps.binary_search_by(|x| x.total_cmp(t)).is_ok()).collect();
    let invphi = (5f64.sqrt() - 1.0) / 2.0;

    for _ in 0..opts.max_sweeps {
        let before = best;

        // Warp moves: send a jump knot of g onto a jump of f, stretching the
        // knots between the nearest pinned neighbours.
        for i in 1..k - 1 {
            if !is_g_jump[i] {
                continue;
            }
            let l = (0..i).rev().find(|&j| pinned[j]).expect("endpoint pinned");
            let r = (i + 1..k).find(|&j| pinned[j]).expect("endpoint pinned");
            for &s in snaps {
                if !(s > ys[l] && s < ys[r]) || s == ys[i] {
                    continue;
                }
                let mut trial = ys.clone();
                for j in l + 1..r {
                    trial[j] = if j == i {
                        s
                    } else if ys[j] < ys[i] {
                        ys[l] + (ys[j] - ys[l]) * (s - ys[l]) / (ys[i] - ys[l])
                    } else {
                        s + (ys[j] - ys[i]) * (ys[r] - s) / (ys[r] - ys[i])
                    };
                }
                let v = obj.value(ts, &trial);
                if v < best {
                    best = v;
                    ys = trial;
                    pinned[i] = true;
                }
            }
        }

        // Coordinate moves with golden-section search plus snap candidates.
        for i in 1..k - 1 {
            let lo = ys[i - 1];
            let hi = ys[i + 1];
            let margin = 1e-9 * (hi - lo);
            let (mut a, mut b) = (lo + margin, hi - margin);
            if !(b > a) {
                continue;
            }
            let mut trial = ys.clone();
            let eval = |v: f64, trial: &mut Vec<f64>| {
                trial[i] = v;
                obj.value(ts, trial)
            };
            let mut c = b - invphi * (b - a);
            let mut d = a + invphi * (b - a);
            let mut fc = eval(c, &mut trial);
            let mut fd = eval(d, &mut trial);
            for _ in 0..opts.golden_iterations {
                if fc < fd {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - invphi * (b - a);
                    fc = eval(c, &mut trial);
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + invphi * (b - a);
                    fd = eval(d, &mut trial);
                }
            }
            let mut candidates = vec![(fc, c), (fd, d)];
            let t_i = ts[i];
            if t_i > lo && t_i < hi {
                candidates.push((eval(t_i, &mut trial), t_i));
            }
            for &s in snaps.iter().filter(|&&s| s > lo && s < hi) {
                candidates.push((eval(s, &mut trial), s));
            }
            for (v, y) in candidates {
                if v < best {
                    best = v;
                    ys[i] = y;
                    pinned[i] = snaps.contains(&y);
                }
            }
        }

        if before - best <= 1e-12 {
            break;
        }
    }
    best
}

/// One direction of `δ_N`: infimum over `λ` of `‖(k_N x)∘λ − k_N y‖ + ‖λ‖`,
/// approximated from above.
fn delta_direction(
    x: &CadlagPath,
    y: &CadlagPath,
    fx: &CadlagPath,
    gy: &CadlagPath,
    n: u32,
    opts: &SolverOptions,
    hints: &[TimeChange],
) -> f64 {
    let b = n as f64 + 1.0;
    let a = -b;
    let obj = Objective::new(fx, gy, a, b);

    let mut ts: Vec<f64> = vec![a, b, -(n as f64), n as f64];
    ts.extend(x.breakpoints().chain(y.breakpoints()).filter(|&t| t > a && t < b));
    ts.sort_by(f64::total_cmp);
    ts.dedup();

    let snaps = jump_times(fx, a, b);
    let g_jumps = jump_times(gy, a, b);

    let mut starts: Vec<Vec<f64>> = vec![ts.clone()];
    let mut rng = keyed_stream(Domain::Auxiliary, opts.seed, u64::from(n));
    for _ in 0..opts.random_restarts {
        let mut ys = ts.clone();
        for i in 1..ts.len() - 1 {
            let room = (ts[i] - ts[i - 1]).min(ts[i + 1] - ts[i]);
            ys[i] = ts[i] + 0.4 * room * (2.0 * rng.random::<f64>() - 1.0);
        }
        starts.push(ys);
    }

    let mut best = f64::INFINITY;
    for start in starts {
        best = best.min(descend(&obj, &ts, start, &snaps, &g_jumps, opts));
    }
    for hint in hints {
        best = best.min(obj.value(&hint.times, &hint.images));
        // Refine the hint on its own knots merged with the path breakpoints.
        let mut hts = ts.clone();
        hts.extend(hint.times.iter().copied().filter(|&t| t > a && t < b));
        hts.sort_by(f64::total_cmp);
        hts.dedup();
        let hys: Vec<f64> = hts.iter().map(|&t| hint.apply(t)).collect();
        best = best.min(descend(&obj, &hts, hys, &snaps, &g_jumps, opts));
    }
    best
}

fn check_cover(x: &CadlagPath, y: &CadlagPath, n: u32) -> Result<()> {
    let b = n as f64 + 1.0;
    if n == 0 {
        return Err(Error::InvalidArgument("N must be at least 1".into()));
    }
    if !x.covers(-b, b) || !y.covers(-b, b) {
        return Err(Error::InvalidWindow(format!("paths must cover [-{b}, {b}]")));
    }
    Ok(())
}

/// Value of the `δ_N` objective in the direction `x → y` at a given `λ`,
/// which must live on `[−(N+1), N+1]`.
pub fn delta_objective(x: &CadlagPath, y: &CadlagPath, n: u32, lam: &TimeChange) -> Result<f64> {
    check_cover(x, y, n)?;
    let b = n as f64 + 1.0;
    if lam.lo() != -b || lam.hi() != b {
        return Err(Error::InvalidArgument(format!("time change must live on [-{b}, {b}]")));
    }
    let fx = taper(x, n)?;
    let gy = taper(y, n)?;
    Ok(Objective::new(&fx, &gy, -b, b).value(&lam.times, &lam.images))
}

/// `δ_N(x, y)`, approximated from above and symmetrized.
pub fn skorokhod_delta(x: &CadlagPath, y: &CadlagPath, n: u32) -> Result<f64> {
    skorokhod_delta_with(x, y, n, &SolverOptions::default(), &[])
}

/// [`skorokhod_delta`] with explicit solver options and extra starting
/// time changes (given in the `x → y` direction). The result never exceeds
/// the objective at any hint.
pub fn skorokhod_delta_with(
    x: &CadlagPath,
    y: &CadlagPath,
    n: u32,
    opts: &SolverOptions,
    hints: &[TimeChange],
) -> Result<f64> {
    check_cover(x, y, n)?;
    let b = n as f64 + 1.0;
    if hints.iter().any(|h| h.lo() != -b || h.hi() != b) {
        return Err(Error::InvalidArgument(format!("hints must live on [-{b}, {b}]")));
    }
    let fx = taper(x, n)?;
    let gy = taper(y, n)?;
    let inverse: Vec<TimeChange> = hints.iter().map(TimeChange::inverse).collect();
    let forward = delta_direction(x, y, &fx, &gy, n, opts, hints);
    let backward = delta_direction(y, x, &gy, &fx, n, opts, &inverse);
    Ok(forward.min(backward))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkorokhodDistance {
    pub value: f64,
    /// Mass of the omitted tail `Σ_{N > N_max} 2^{−N}`.
    pub truncation_error: f64,
}

/// Truncated series `Σ_{N=1}^{N_max} 2^{−N} (δ_N ∧ 1)`.
pub fn skorokhod_distance(x: &CadlagPath, y: &CadlagPath, n_max: u32) -> Result<SkorokhodDistance> {
    if n_max == 0 {
        return Err(Error::InvalidArgument("N_max must be at least 1".into()));
    }
    check_cover(x, y, n_max)?;
    let mut value = 0.0;
    for n in 1..=n_max {
        value += 0.5f64.powi(n as i32) * skorokhod_delta(x, y, n)?.min(1.0);
    }
    Ok(SkorokhodDistance { value, truncation_error: 0.5f64.powi(n_max as i32) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_step(at: f64) -> CadlagPath {
        CadlagPath::step(-5.0, 5.0, 0.0, &[(at, 1.0)]).unwrap()
    }

    #[test]
    fn evaluation_examples() {
        let p = unit_step(0.0);
        assert_eq!(p.evaluate(0.0).unwrap(), 1.0);
        assert_eq!(p.left_limit(0.0).unwrap(), 0.0);
        assert_eq!(p.evaluate(-0.1).unwrap(), 0.0);
        let lin = CadlagPath::linear(1.5, -4.0, 4.0).unwrap();
        assert_eq!(lin.evaluate(2.0).unwrap(), 3.0);
        assert!(p.evaluate(5.5).is_err());
        assert!(p.left_limit(-6.0).is_err());
        assert_eq!(p.evaluate(5.0).unwrap(), 1.0);
    }

    #[test]
    fn construction_errors() {
        assert!(CadlagPath::new(vec![], 1.0).is_err());
        let s = |start| Segment { start, value: 0.0, slope: 0.0 };
        assert!(CadlagPath::new(vec![s(0.0), s(0.0)], 1.0).is_err());
        assert!(CadlagPath::new(vec![s(0.0), s(2.0)], 1.0).is_err());
        assert!(CadlagPath::new(vec![s(1.0)], 1.0).is_err());
    }

    #[test]
    fn compose_examples() {
        let y = CadlagPath::step(-3.0, 3.0, -1.0, &[(-1.0, 0.5), (1.0, 2.0)]).unwrap();
        let id = CadlagPath::linear(1.0, -10.0, 10.0).unwrap();
        let c = compose(&id, &y).unwrap();
        for t in [-3.0, -1.5, -1.0, 0.0, 1.0, 2.9] {
            assert_eq!(c.evaluate(t).unwrap(), y.evaluate(t).unwrap());
        }
        let lx = CadlagPath::linear(1.5, -10.0, 10.0).unwrap();
        let sloped = CadlagPath::new(
            vec![
                Segment { start: -3.0, value: 1.0, slope: 2.0 },
                Segment { start: 0.0, value: -2.0, slope: -0.5 },
            ],
            3.0,
        )
        .unwrap();
        let c = compose(&lx, &sloped).unwrap();
        for i in 0..=60 {
            let t = -3.0 + 0.1 * i as f64;
            let want = 1.5 * sloped.evaluate(t).unwrap();
            assert!((c.evaluate(t).unwrap() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn compose_through_kinked_outer() {
        // x has slope 1 on [-10, 0) and 3 on [0, 10]; y sweeps through the kink.
        let x = CadlagPath::new(
            vec![
                Segment { start: -10.0, value: -10.0, slope: 1.0 },
                Segment { start: 0.0, value: 0.0, slope: 3.0 },
            ],
            10.0,
        )
        .unwrap();
        let y = CadlagPath::linear(2.0, -2.0, 2.0).unwrap();
        let c = compose(&x, &y).unwrap();
        assert_eq!(c.segments().len(), 2);
        for i in 0..=40 {
            let t = -2.0 + 0.1 * i as f64;
            let u = 2.0 * t;
            let want = if u < 0.0 { u } else { 3.0 * u };
            assert!((c.evaluate(t).unwrap() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn compose_preconditions() {
        let y = unit_step(0.0);
        assert!(compose(&unit_step(0.5), &y).is_err());
        assert!(compose(&CadlagPath::linear(-1.0, -10.0, 10.0).unwrap(), &y).is_err());
        let narrow = CadlagPath::linear(1.0, 0.5, 0.9).unwrap();
        assert!(compose(&narrow, &y).is_err());
    }

    #[test]
    fn taper_examples() {
        let one = CadlagPath::constant(1.0, -5.0, 5.0).unwrap();
        let t = taper(&one, 2).unwrap();
        assert_eq!(t.evaluate(1.7).unwrap(), 1.0);
        assert_eq!(t.evaluate(-2.0).unwrap(), 1.0);
        assert!((t.evaluate(2.5).unwrap() - 0.5).abs() < 1e-15);
        assert!((t.evaluate(-2.5).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(t.evaluate(3.5).unwrap(), 0.0);
        assert_eq!(t.evaluate(-4.0).unwrap(), 0.0);
        let lin = CadlagPath::linear(3.0, -5.0, 5.0).unwrap();
        let t = taper(&lin, 1).unwrap();
        for i in 0..=1000 {
            let s = -5.0 + 0.01 * i as f64;
            let exact = taper_weight(1, s) * 3.0 * s;
            assert!((t.evaluate(s).unwrap() - exact).abs() <= TAPER_MAX_ERROR, "t={s}");
        }
        for i in 0..=200 {
            let s = -1.0 + 0.01 * i as f64;
            assert!((t.evaluate(s).unwrap() - lin.evaluate(s).unwrap()).abs() < 1e-12);
        }
        assert!(taper(&CadlagPath::constant(1.0, -2.0, 2.0).unwrap(), 2).is_err());
    }

    #[test]
    fn norm_examples() {
        assert_eq!(timechange_norm(&TimeChange::identity(-3.0, 3.0).unwrap()).unwrap(), 0.0);
        let lam = TimeChange::new(&[(-3.0, -3.0), (1.0, -1.0), (3.0, 3.0)]).unwrap();
        assert!((timechange_norm(&lam).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!((timechange_norm(&lam.inverse()).unwrap() - timechange_norm(&lam).unwrap()).abs() < 1e-15);
        assert!(TimeChange::new(&[(-3.0, -3.0), (0.0, 1.0), (1.0, 0.5), (3.0, 3.0)]).is_err());
        assert!(TimeChange::new(&[(-3.0, -2.0), (3.0, 3.0)]).is_err());
    }

    #[test]
    fn delta_identical_and_constant() {
        let p = CadlagPath::step(-4.0, 4.0, 0.3, &[(-1.0, 1.0), (0.5, -2.0)]).unwrap();
        assert!(skorokhod_delta(&p, &p, 2).unwrap() <= 1e-9);
        let zero = CadlagPath::constant(0.0, -4.0, 4.0).unwrap();
        let half = CadlagPath::constant(0.5, -4.0, 4.0).unwrap();
        let d = skorokhod_delta(&zero, &half, 2).unwrap();
        assert!((d - 0.5).abs() <= 1e-6, "{d}");
        assert!(skorokhod_delta(&zero, &CadlagPath::constant(0.0, -2.0, 2.0).unwrap(), 2).is_err());
    }

    #[test]
    fn delta_shifted_jump_is_bounded_by_explicit_time_change() {
        let x = CadlagPath::step(-4.0, 4.0, 0.0, &[(1.0, 1.0)]).unwrap();
        let y = CadlagPath::step(-4.0, 4.0, 0.0, &[(1.1, 1.0)]).unwrap();
        // λ maps y's jump at 1.1 onto x's jump at 1 and is linear elsewhere
        let lam = TimeChange::new(&[(-3.0, -3.0), (1.1, 1.0), (3.0, 3.0)]).unwrap();
        let feasible = delta_objective(&x, &y, 2, &lam).unwrap();
        let solver = skorokhod_delta(&x, &y, 2).unwrap();
        assert!(solver <= feasible + 1e-12, "{solver} > {feasible}");
        let hinted = skorokhod_delta_with(&x, &y, 2, &SolverOptions::default(), &[lam]).unwrap();
        assert!(hinted <= feasible);
        // a misaligned jump costs the full jump height, so matching must win
        assert!(solver < 0.2, "{solver}");
    }

    #[test]
    fn distance_examples() {
        let zero = CadlagPath::constant(0.0, -6.0, 6.0).unwrap();
        let half = CadlagPath::constant(0.5, -6.0, 6.0).unwrap();
        let three = CadlagPath::constant(3.0, -6.0, 6.0).unwrap();
        let d = skorokhod_distance(&zero, &half, 5).unwrap();
        assert!((d.value - 0.5 * (1.0 - 0.5f64.powi(5))).abs() <= 1e-6);
        assert_eq!(d.truncation_error, 0.5f64.powi(5));
        let d = skorokhod_distance(&zero, &three, 5).unwrap();
        assert!((d.value - (1.0 - 0.5f64.powi(5))).abs() <= 1e-12);
        assert_eq!(skorokhod_distance(&half, &half, 5).unwrap().value, 0.0);
        assert!(skorokhod_distance(&zero, &half, 6).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let p = CadlagPath::new(
            vec![
                Segment { start: -2.0, value: 0.0, slope: 0.5 },
                Segment { start: 0.0, value: 3.0, slope: 0.0 },
                Segment { start: 1.0, value: 3.0, slope: -1.0 },
            ],
            2.0,
        )
        .unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,value_right,value_left_if_jump\n-2,0,\n0,3,1\n1,3,\n2,2,\n"), "{text}");
        let q = CadlagPath::read_csv(&buf[..]).unwrap();
        assert_eq!(p, q);
    }
}
