//! The gas built on top of a walk: collision positions `X_k = ω_{S_k}`,
//! collision times `T_k`, the unit-speed interpolation and rescaled paths.

use std::io::Write;
use std::sync::Arc;

use crate::cadlag::{CadlagPath, Segment};
use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::walks::WalkPath;

/// Coupled `(S_k, X_k, T_k)` for `k = 0..=n`.
#[derive(Debug, Clone)]
pub struct GasTrajectory {
    walk: WalkPath,
    positions: Vec<f64>,
    times: Vec<f64>,
    env: Arc<Environment>,
}

/// Reads positions off the environment, widening it first if the walk leaves
/// the realized window. A shared environment is copied on write, so other
/// holders never see the extension.
pub fn build_gas(mut env: Arc<Environment>, walk: WalkPath) -> GasTrajectory {
    let (lo, hi) = walk.range();
    if !env.covers(lo, hi) {
        Arc::make_mut(&mut env).ensure(lo, hi);
    }
    let mut positions = Vec::with_capacity(walk.len() + 1);
    let mut times = Vec::with_capacity(walk.len() + 1);
    let mut elapsed = 0.0;
    let mut prev = 0.0;
    for &s in walk.positions() {
        let x = env.omega(s).expect("window covers walk range");
        elapsed += (x - prev).abs();
        prev = x;
        positions.push(x);
        times.push(elapsed);
    }
    GasTrajectory { walk, positions, times, env }
}

impl GasTrajectory {
    pub fn walk(&self) -> &WalkPath {
        &self.walk
    }

    pub fn len(&self) -> usize {
        self.walk.len()
    }

    pub fn is_empty(&self) -> bool {
        self.walk.is_empty()
    }

    /// `X_0, ..., X_n`.
    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    /// `T_0 = 0, ..., T_n`.
    pub fn collision_times(&self) -> &[f64] {
        &self.times
    }

    pub fn environment(&self) -> &Arc<Environment> {
        &self.env
    }

    /// Final collision time `T_n`, the end of the realized horizon.
    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("T_0 present")
    }

    pub fn endpoint(&self) -> f64 {
        *self.positions.last().expect("X_0 present")
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(t >= 0.0) {
            return Err(Error::InvalidArgument(format!("time must be nonnegative, got {t}")));
        }
        if t >= self.horizon() {
            return Err(Error::HorizonExceeded(format!(
                "t = {t} is not below the final collision time {}",
                self.horizon()
            )));
        }
        Ok(())
    }

    /// Index of the last collision at or before `t`, skipping zero jumps.
    #[inline]
    fn last_collision(&self, t: f64) -> usize {
        self.times.partition_point(|&tk| tk <= t) - 1
    }

    /// `X̃_t`: position at time `t` moving at unit speed between collisions.
    pub fn interpolate(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        let k = self.last_collision(t);
        let dir = (self.positions[k + 1] - self.positions[k]).signum();
        Ok(self.positions[k] + dir * (t - self.times[k]))
    }

    /// `N_t`: the number of collisions up to time `t`.
    pub fn n_of_t(&self, t: f64) -> Result<usize> {
        self.check_time(t)?;
        Ok(self.last_collision(t))
    }

    /// `t ↦ n^{−1/2}(X_{⌊nt⌋} − ℓ·drift·n·t)` on `[−window, window]`, zero for
    /// `t < 0`.
    pub fn rescale_discrete(&self, n: usize, ell: f64, drift: f64, window: f64) -> Result<CadlagPath> {
        check_scale(n as f64, window)?;
        let nf = n as f64;
        let last = (nf * window).ceil() as usize - 1;
        if self.len() < last + 1 {
            return Err(Error::HorizonExceeded(format!(
                "window {window} at scale {n} needs {} steps, trajectory has {}",
                last + 1,
                self.len()
            )));
        }
        let root = nf.sqrt();
        let slope = -ell * drift * root;
        let mut segments = Vec::with_capacity(last + 2);
        segments.push(Segment { start: -window, value: 0.0, slope: 0.0 });
        for k in 0..=last {
            let t = k as f64 / nf;
            segments.push(Segment {
                start: t,
                value: (self.positions[k] - ell * drift * k as f64) / root,
                slope,
            });
        }
        CadlagPath::new(segments, window)
    }

    /// `s ↦ t^{−1/2}(X̃_{ts} − ℓ·drift·t·s)` on `[−window, window]` for
    /// `t = t_scale`, zero for `s < 0`; continuous by construction.
    pub fn rescale_continuous(&self, t_scale: f64, ell: f64, drift: f64, window: f64) -> Result<CadlagPath> {
        check_scale(t_scale, window)?;
        let reach = t_scale * window;
        if self.horizon() < reach {
            return Err(Error::HorizonExceeded(format!(
                "window {window} at time scale {t_scale} needs horizon {reach}, trajectory reaches {}",
                self.horizon()
            )));
        }
        let root = t_scale.sqrt();
        let mut segments = vec![Segment { start: -window, value: 0.0, slope: 0.0 }];
        for k in 1..self.positions.len() {
            let (t0, t1) = (self.times[k - 1], self.times[k]);
            if t0 >= reach {
                break;
            }
            if t1 == t0 {
                continue;
            }
            let dir = (self.positions[k] - self.positions[k - 1]).signum();
            segments.push(Segment {
                start: t0 / t_scale,
                value: (self.positions[k - 1] - ell * drift * t0) / root,
                slope: root * (dir - ell * drift),
            });
        }
        CadlagPath::new(segments, window)
    }

    /// CSV rows `k,S_k,X_k,T_k`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "k,S_k,X_k,T_k")?;
        for (k, ((s, x), t)) in self
            .walk
            .positions()
            .iter()
            .zip(&self.positions)
            .zip(&self.times)
            .enumerate()
        {
            writeln!(w, "{k},{s},{x},{t}")?;
        }
        Ok(())
    }

    /// CSV rows `t,X̃_t` on the grid `0, dt, 2dt, ...` below the horizon.
    pub fn write_track_csv<W: Write>(&self, mut w: W, dt: f64) -> Result<()> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("grid step must be positive, got {dt}")));
        }
        writeln!(w, "t,x")?;
        let mut i = 0u64;
        loop {
            let t = i as f64 * dt;
            if t >= self.horizon() {
                break;
            }
            writeln!(w, "{t},{}", self.interpolate(t)?)?;
            i += 1;
        }
        Ok(())
    }
}

fn check_scale(scale: f64, window: f64) -> Result<()> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidArgument(format!("scale must be positive, got {scale}")));
    }
    if !(window > 0.0 && window.is_finite()) {
        return Err(Error::InvalidWindow(format!("window must be positive, got {window}")));
    }
    Ok(())
}

/// The rescaled walk `t ↦ n^{−1/2} S_{⌊nt⌋}` on `[−window, window]`.
pub fn walk_path(walk: &WalkPath, n: usize, window: f64) -> Result<CadlagPath> {
    check_scale(n as f64, window)?;
    let nf = n as f64;
    let last = (nf * window).ceil() as usize - 1;
    if walk.len() < last + 1 {
        return Err(Error::HorizonExceeded(format!(
            "window {window} at scale {n} needs {} steps, walk has {}",
            last + 1,
            walk.len()
        )));
    }
    let root = nf.sqrt();
    let mut segments = Vec::with_capacity(last + 2);
    segments.push(Segment { start: -window, value: 0.0, slope: 0.0 });
    for (k, &s) in walk.positions()[..=last].iter().enumerate() {
        segments.push(Segment { start: k as f64 / nf, value: s as f64 / root, slope: 0.0 });
    }
    CadlagPath::new(segments, window)
}

/// The rescaled environment `u ↦ n^{−1/2} ω_{n^{1/2} u}`, interpolated
/// linearly between the knots `u = r/√n`, for `r` in `[r_lo, r_hi]`.
pub fn environment_path(env: &Environment, n: usize, r_lo: i64, r_hi: i64) -> Result<CadlagPath> {
    if n == 0 {
        return Err(Error::InvalidArgument("scale must be positive".into()));
    }
    if r_lo >= r_hi || !env.covers(r_lo, r_hi) {
        return Err(Error::InvalidWindow(format!(
            "index range [{r_lo}, {r_hi}] is empty or outside [{}, {}]",
            env.lo(),
            env.hi()
        )));
    }
    let root = (n as f64).sqrt();
    let segments = (r_lo..r_hi)
        .map(|r| {
            let w0 = env.omega(r).expect("covered");
            let w1 = env.omega(r + 1).expect("covered");
            Segment { start: r as f64 / root, value: w0 / root, slope: w1 - w0 }
        })
        .collect();
    CadlagPath::new(segments, r_hi as f64 / root)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cadlag::compose;
    use crate::environment::DistanceLaw;
    use crate::rng::rng_for_replica;
    use crate::walks::{sample_markov, JumpLaw};

    fn unit_env() -> Arc<Environment> {
        Arc::new(Environment::generate(&DistanceLaw::constant(1.0).unwrap(), -10, 10, 1).unwrap())
    }

    #[test]
    fn identity_environment_copies_walk() {
        let walk = WalkPath::from_steps(vec![1, -2, 0, 3, 1]);
        let g = build_gas(unit_env(), walk.clone());
        let s: Vec<f64> = walk.positions().iter().map(|&s| s as f64).collect();
        assert_eq!(g.positions(), &s[..]);
        assert_eq!(g.collision_times(), &[0.0, 1.0, 3.0, 3.0, 6.0, 7.0]);
    }

    #[test]
    fn hand_computed_jump() {
        let law = DistanceLaw::iid(vec![1.0, 2.0], vec![0.5, 0.5]).unwrap();
        let env = (0..)
            .map(|seed| Environment::generate(&law, 0, 2, seed).unwrap())
            .find(|e| e.zeta(1) == Some(1.0) && e.zeta(2) == Some(2.0))
            .unwrap();
        let g = build_gas(Arc::new(env), WalkPath::from_steps(vec![2]));
        assert_eq!(g.positions(), &[0.0, 3.0]);
        assert_eq!(g.collision_times(), &[0.0, 3.0]);
    }

    #[test]
    fn empty_walk() {
        let g = build_gas(unit_env(), WalkPath::from_steps(vec![]));
        assert_eq!(g.positions(), &[0.0]);
        assert_eq!(g.collision_times(), &[0.0]);
        assert!(g.interpolate(0.0).is_err());
    }

    #[test]
    fn auto_extension_leaves_shared_copy_alone() {
        let env = unit_env();
        let g = build_gas(Arc::clone(&env), WalkPath::from_steps(vec![25; 2]));
        assert_eq!(env.hi(), 10);
        assert!(g.environment().hi() >= 50);
        assert_eq!(g.endpoint(), 50.0);
    }

    #[test]
    fn interpolation_examples() {
        let g = build_gas(unit_env(), WalkPath::from_steps(vec![1; 5]));
        assert_eq!(g.interpolate(1.5).unwrap(), 1.5);
        assert_eq!(g.n_of_t(3.7).unwrap(), 3);
        assert_eq!(g.n_of_t(0.2).unwrap(), 0);
        assert!(g.interpolate(5.0).is_err());
        assert!(g.n_of_t(-0.1).is_err());
        let g = build_gas(unit_env(), WalkPath::from_steps(vec![-2, 1]));
        assert_eq!(g.interpolate(1.0).unwrap(), -1.0);
        assert_eq!(g.interpolate(2.0).unwrap(), -2.0);
    }

    #[test]
    fn zero_jumps_are_instantaneous() {
        let g = build_gas(unit_env(), WalkPath::from_steps(vec![1, 0, 0, -1, 2]));
        assert_eq!(g.n_of_t(1.0).unwrap(), 3);
        assert_eq!(g.interpolate(1.0).unwrap(), 1.0);
        assert_eq!(g.interpolate(1.5).unwrap(), 0.5);
        assert_eq!(g.interpolate(2.5).unwrap(), 0.5);
    }

    #[test]
    fn unit_speed_on_random_environment() {
        let law = DistanceLaw::iid(vec![1.0, 2.0], vec![0.5, 0.5]).unwrap();
        let env = Arc::new(Environment::generate(&law, -100, 100, 3).unwrap());
        let mut rng = rng_for_replica(5, 0);
        let walk = sample_markov(&JumpLaw::new(vec![-2, -1, 0, 1, 2], vec![0.2; 5]).unwrap(), 300, &mut rng);
        let g = build_gas(env, walk);
        for k in 0..g.len() {
            let t = g.collision_times()[k];
            if t < g.horizon() {
                assert!((g.interpolate(t).unwrap() - g.positions()[k]).abs() < 1e-12);
            }
        }
        let grid: Vec<f64> = (0..2000).map(|i| i as f64 * g.horizon() / 2000.0).collect();
        for w in grid.windows(2) {
            let d = (g.interpolate(w[1]).unwrap() - g.interpolate(w[0]).unwrap()).abs();
            assert!(d <= w[1] - w[0] + 1e-9);
        }
    }

    #[test]
    fn rescaled_paths() {
        let g = build_gas(unit_env(), WalkPath::from_steps(vec![1, -1, 1, 1, -1, 1, 1, 1]));
        let p = g.rescale_discrete(2, 1.0, 0.0, 4.0).unwrap();
        assert_eq!(p.evaluate(-0.5).unwrap(), 0.0);
        assert_eq!(p.evaluate(1.0).unwrap(), g.positions()[2] / 2f64.sqrt());
        assert_eq!(p.evaluate(1.4).unwrap(), g.positions()[2] / 2f64.sqrt());
        assert!(g.rescale_discrete(3, 1.0, 0.0, 4.0).is_err());
        let drifted = g.rescale_discrete(2, 1.5, 0.25, 4.0).unwrap();
        let want = (g.positions()[2] - 1.5 * 0.25 * 2.0) / 2f64.sqrt();
        assert!((drifted.evaluate(1.0).unwrap() - want).abs() < 1e-15);

        let ballistic = build_gas(unit_env(), WalkPath::from_steps(vec![1; 10]));
        let c = ballistic.rescale_continuous(2.0, 1.0, 1.0, 4.0).unwrap();
        assert!(c.is_continuous());
        for seg in c.segments() {
            assert_eq!((seg.value, seg.slope), (0.0, 0.0));
        }
        let c = g.rescale_continuous(2.0, 1.0, 0.0, 4.0).unwrap();
        assert!(c.is_continuous());
        assert!((c.evaluate(1.0).unwrap() - g.interpolate(2.0).unwrap() / 2f64.sqrt()).abs() < 1e-15);
        assert!(g.rescale_continuous(3.0, 1.0, 0.0, 4.0).is_err());
    }

    #[test]
    fn composition_factorizes_rescaled_gas() {
        let law = DistanceLaw::markov(vec![1.0, 2.0], vec![vec![0.8, 0.2], vec![0.2, 0.8]]).unwrap();
        let n = 400;
        let env = Arc::new(Environment::generate(&law, -200, 200, 11).unwrap());
        let mut rng = rng_for_replica(9, 0);
        let walk = sample_markov(&JumpLaw::symmetric(), 4 * n, &mut rng);
        let g = build_gas(env, walk.clone());
        let (lo, hi) = walk.range();
        let x = environment_path(g.environment(), n, lo.min(-1), hi.max(1)).unwrap();
        let y = walk_path(&walk, n, 4.0).unwrap();
        let composed = compose(&x, &y).unwrap();
        let direct = g.rescale_discrete(n, 1.0, 0.0, 4.0).unwrap();
        for t in direct.breakpoints() {
            let a = composed.evaluate(t).unwrap();
            let b = direct.evaluate(t).unwrap();
            assert!((a - b).abs() <= 1e-9, "t={t}: {a} vs {b}");
        }
    }

    #[test]
    fn csv_exports() {
        let g = build_gas(unit_env(), WalkPath::from_steps(vec![1, -2]));
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "k,S_k,X_k,T_k\n0,0,0,0\n1,1,1,1\n2,-1,-1,3\n");
        let mut buf = Vec::new();
        g.write_track_csv(&mut buf, 1.0).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,x\n0,0\n1,1\n2,0\n");
    }
}
