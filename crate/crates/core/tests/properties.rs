use std::sync::Arc;

use llgas_core::cadlag::{compose, skorokhod_distance, taper, taper_weight, timechange_norm, CadlagPath, TimeChange};
use llgas_core::environment::DistanceLaw;
use llgas_core::gas::build_gas;
use llgas_core::renewal::{eta_value, tau_times, EpsilonField};
use llgas_core::stats::{cesaro_sum, ks_statistic, MomentAccumulator, PairAccumulator};
use llgas_core::walks::{exact_pmf, reinforced_exact_dist, JumpLaw, WalkPath};
use llgas_core::Environment;
use proptest::prelude::*;

fn markov_law() -> DistanceLaw {
    DistanceLaw::markov(vec![1.0, 2.0, 5.0], vec![vec![0.7, 0.2, 0.1], vec![0.3, 0.6, 0.1], vec![0.2, 0.2, 0.6]]).unwrap()
}

fn iid_law() -> DistanceLaw {
    DistanceLaw::iid(vec![1.0, 3.0], vec![0.25, 0.75]).unwrap()
}

fn step_path(half: f64) -> impl Strategy<Value = CadlagPath> {
    (
        -1.0f64..1.0,
        prop::collection::vec((-(half - 0.5)..(half - 0.5), -1.0f64..1.0), 0..4),
    )
        .prop_map(move |(v0, mut jumps)| {
            jumps.sort_by(|a, b| a.0.total_cmp(&b.0));
            jumps.dedup_by(|a, b| a.0 == b.0);
            CadlagPath::step(-half, half, v0, &jumps).unwrap()
        })
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn moment_merge_matches_sequential(xs in prop::collection::vec(-1e3f64..1e3, 2..200), cut in 0usize..200) {
        let cut = cut.min(xs.len());
        let mut all = MomentAccumulator::new();
        xs.iter().for_each(|&x| all.update(x));
        let (mut left, mut right) = (MomentAccumulator::new(), MomentAccumulator::new());
        xs[..cut].iter().for_each(|&x| left.update(x));
        xs[cut..].iter().for_each(|&x| right.update(x));
        left.merge(&right);
        let (a, b) = (all.finalize().unwrap(), left.finalize().unwrap());
        prop_assert_eq!(a.count, b.count);
        prop_assert!(close(a.mean, b.mean, 1e-10));
        prop_assert!(close(a.variance, b.variance, 1e-9));
        prop_assert_eq!(a.min, b.min);
        prop_assert_eq!(a.max, b.max);
    }

    #[test]
    fn pair_merge_matches_sequential(xs in prop::collection::vec((-10f64..10.0, -10f64..10.0), 3..100), cut in 0usize..100) {
        let cut = cut.min(xs.len());
        let mut all = PairAccumulator::new();
        xs.iter().for_each(|&(u, v)| all.update(u, v));
        let (mut left, mut right) = (PairAccumulator::new(), PairAccumulator::new());
        xs[..cut].iter().for_each(|&(u, v)| left.update(u, v));
        xs[cut..].iter().for_each(|&(u, v)| right.update(u, v));
        left.merge(&right);
        prop_assert!(close(all.covariance().unwrap(), left.covariance().unwrap(), 1e-9));
    }

    #[test]
    fn ks_is_permutation_invariant_and_bounded(mut xs in prop::collection::vec(-5f64..5.0, 1..100), sigma2 in 0.1f64..4.0) {
        let d = ks_statistic(&xs, sigma2).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        xs.reverse();
        prop_assert_eq!(d, ks_statistic(&xs, sigma2).unwrap());
    }

    #[test]
    fn cesaro_sum_is_linear_in_the_pmf(seed in any::<u64>(), n in 1usize..12, beta in -20i64..20, c in 0.1f64..3.0) {
        let env = Environment::generate(&markov_law(), -40, 40, seed).unwrap();
        let pmf = exact_pmf(&JumpLaw::symmetric(), n).unwrap();
        let scaled = pmf.iter().map(|(&k, &w)| (k, c * w)).collect();
        let base = cesaro_sum(&env, &pmf, beta).unwrap();
        prop_assert!(close(cesaro_sum(&env, &scaled, beta).unwrap(), c * base, 1e-12));
        let point = [(3i64, 1.0)].into_iter().collect();
        prop_assert_eq!(cesaro_sum(&env, &point, beta).unwrap(), env.zeta(3 + beta).unwrap());
    }

    #[test]
    fn extension_agrees_with_direct_generation(seed in any::<u64>(), lo in -30i64..=0, hi in 0i64..30, grow in 0i64..30) {
        for law in [iid_law(), markov_law()] {
            let small = Environment::generate(&law, lo, hi, seed).unwrap();
            let wide = small.extend(lo - grow, hi + grow).unwrap();
            let direct = Environment::generate(&law, lo - grow, hi + grow, seed).unwrap();
            for r in (lo - grow)..=(hi + grow) {
                prop_assert_eq!(wide.omega(r), direct.omega(r));
                if r >= lo && r <= hi {
                    prop_assert_eq!(small.omega(r), wide.omega(r));
                }
            }
            prop_assert!(small.extend(lo + 1, hi).is_err() || lo == 0);
        }
    }

    #[test]
    fn gas_moves_at_unit_speed(seed in any::<u64>(), steps in prop::collection::vec(prop::sample::select(vec![-2i64, -1, 1, 2]), 1..80)) {
        let env = Arc::new(Environment::generate(&markov_law(), 0, 0, seed).unwrap());
        let walk = WalkPath::from_steps(steps);
        let gas = build_gas(env, walk.clone());
        let (x, t) = (gas.positions(), gas.collision_times());
        for k in 0..=walk.len() {
            prop_assert_eq!(x[k], gas.environment().omega(walk.positions()[k]).unwrap());
        }
        for k in 1..=walk.len() {
            prop_assert!(close(t[k] - t[k - 1], (x[k] - x[k - 1]).abs(), 1e-12));
        }
        let horizon = gas.horizon();
        let grid: Vec<f64> = (0..50).map(|i| horizon * i as f64 / 50.0).collect();
        for w in grid.windows(2) {
            let (a, b) = (gas.interpolate(w[0]).unwrap(), gas.interpolate(w[1]).unwrap());
            prop_assert!((b - a).abs() <= (w[1] - w[0]) * (1.0 + 1e-9));
        }
    }

    #[test]
    fn tau_scanner_matches_brute_force(values in prop::collection::vec(-1i8..=1, 1..200), l in 1u32..5) {
        let field = EpsilonField::from_values(values.clone()).unwrap();
        let got = tau_times(&field, l).unwrap().times;
        let l = l as usize;
        let expected: Vec<usize> = (1..=values.len())
            .filter(|&j| j > l && values[j - 1] != 1 && values[j - 1 - l..j - 1].iter().all(|&e| e == 1))
            .collect();
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn eta_averages_to_zeta(zeta in 0.5f64..10.0, mean in 0.5f64..10.0) {
        let avg = 0.25 * eta_value(zeta, 1, mean) + 0.25 * eta_value(zeta, -1, mean) + 0.5 * eta_value(zeta, 0, mean);
        prop_assert!(close(avg, zeta, 1e-12));
    }

    #[test]
    fn reinforced_exact_law_is_a_symmetric_distribution(p in 0.05f64..0.95, n in 1usize..12) {
        let pmf = reinforced_exact_dist(p, n).unwrap();
        prop_assert!(close(pmf.values().sum::<f64>(), 1.0, 1e-12));
        for (&k, &w) in &pmf {
            prop_assert!(w >= 0.0);
            prop_assert!(close(w, pmf.get(&-k).copied().unwrap_or(0.0), 1e-12));
            prop_assert_eq!((k - n as i64).rem_euclid(2), 0);
        }
    }

    #[test]
    fn taper_agrees_with_weight(path in step_path(4.0), n in 1u32..3) {
        let tapered = taper(&path, n).unwrap();
        for i in 0..=160 {
            let t = -4.0 + 8.0 * i as f64 / 160.0;
            let want = taper_weight(n, t) * path.evaluate(t).unwrap();
            prop_assert!((tapered.evaluate(t).unwrap() - want).abs() <= 1e-6);
        }
    }

    #[test]
    fn time_change_inverse_round_trips(knots in prop::collection::vec((0.05f64..1.0, 0.05f64..1.0), 1..5)) {
        let (mut t, mut l) = (-3.0, -3.0);
        let mut pts = vec![(t, l)];
        let (st, sl): (f64, f64) = knots.iter().fold((0.0, 0.0), |acc, k| (acc.0 + k.0, acc.1 + k.1));
        for &(dt, dl) in &knots {
            t += 6.0 * dt / (st + 1.0);
            l += 6.0 * dl / (sl + 1.0);
            pts.push((t, l));
        }
        pts.push((3.0, 3.0));
        let lam = TimeChange::new(&pts).unwrap();
        let inv = lam.inverse();
        prop_assert!(close(timechange_norm(&lam).unwrap(), timechange_norm(&inv).unwrap(), 1e-12));
        for i in 0..=30 {
            let s = -3.0 + 6.0 * i as f64 / 30.0;
            prop_assert!((inv.apply(lam.apply(s)) - s).abs() <= 1e-9);
        }
    }

    #[test]
    fn composition_with_identity_is_exact(path in step_path(4.0)) {
        let id = CadlagPath::linear(1.0, -5.0, 5.0).unwrap();
        let out = compose(&id, &path).unwrap();
        for i in 0..=80 {
            let t = -4.0 + 8.0 * i as f64 / 80.0;
            prop_assert!((out.evaluate(t).unwrap() - path.evaluate(t).unwrap()).abs() <= 1e-12);
        }
    }

    #[test]
    fn csv_round_trip(path in step_path(3.0)) {
        let mut buf = Vec::new();
        path.write_csv(&mut buf).unwrap();
        let back = CadlagPath::read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back, path);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn skorokhod_is_a_semimetric(x in step_path(4.0), y in step_path(4.0)) {
        let dxx = skorokhod_distance(&x, &x, 3).unwrap().value;
        let dxy = skorokhod_distance(&x, &y, 3).unwrap().value;
        let dyx = skorokhod_distance(&y, &x, 3).unwrap().value;
        prop_assert!(dxx <= 1e-9);
        prop_assert!(dxy >= 0.0);
        prop_assert!((dxy - dyx).abs() <= 1e-9);
        // the tapered sup distance bounds it from above
        let sup = x
            .breakpoints()
            .chain(y.breakpoints())
            .chain([-4.0])
            .filter(|&t| t < 4.0)
            .map(|t| (x.evaluate(t).unwrap() - y.evaluate(t).unwrap()).abs())
            .fold(0.0, f64::max);
        prop_assert!(dxy <= sup + 1e-9);
    }
}
