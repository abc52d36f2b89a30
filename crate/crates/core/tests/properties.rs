use num_complex::Complex64;
use proptest::prelude::*;

use superset::fourier::{measure, Measurement, MeasurementModel, NoiseSpec, SparseSignal};
use superset::hankel::{build_hankel, select_superset, SelectionConfig};
use superset::linalg::CVector;
use superset::pencil::{pencil_recover, PencilConfig};
use superset::pruning::{least_squares, prune, superset_method, PruneConfig, SupersetConfig};

fn complex() -> impl Strategy<Value = Complex64> {
    (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(re, im)| Complex64::new(re, im))
}

/// (n, m, L, support, amplitudes) satisfying the exact-recovery hypotheses.
fn exact_instance() -> impl Strategy<Value = (usize, usize, usize, Vec<i64>, Vec<Complex64>)> {
    (prop_oneof![Just(64usize), Just(256), Just(1000)], 1usize..=5)
        .prop_flat_map(|(n, k)| (Just(n), Just(k), 2 * k + 2..=(2 * k + 30)))
        .prop_flat_map(|(n, k, m)| {
            let half = (n / 2) as i64;
            (
                Just(n),
                Just(m),
                k + 1..=m - k - 1,
                proptest::sample::subsequence((-half..half).collect::<Vec<_>>(), k),
                proptest::collection::vec((0.5..1.5f64, 0.0..std::f64::consts::TAU), k),
            )
        })
        .prop_map(|(n, m, l, support, polar)| {
            let amps = polar.into_iter().map(|(r, t)| Complex64::from_polar(r, t)).collect();
            (n, m, l, support, amps)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn measurement_is_linear(
        a in complex(), b in complex(),
        ka in -32i64..32, kb in -32i64..32,
        xa in complex(), xb in complex(),
    ) {
        prop_assume!(ka != kb && xa.norm() > 1e-3 && xb.norm() > 1e-3 && a.norm() > 1e-3 && b.norm() > 1e-3);
        let model = MeasurementModel::new(64, 16, 5).unwrap();
        let noiseless = NoiseSpec::noiseless();
        let s1 = SparseSignal::new(64, vec![ka], vec![xa]).unwrap();
        let s2 = SparseSignal::new(64, vec![kb], vec![xb]).unwrap();
        let (lo, hi, alo, ahi) = if ka < kb { (ka, kb, a * xa, b * xb) } else { (kb, ka, b * xb, a * xa) };
        let combo = SparseSignal::new(64, vec![lo, hi], vec![alo, ahi]).unwrap();
        let y1 = measure(&s1, &model, &noiseless).unwrap();
        let y2 = measure(&s2, &model, &noiseless).unwrap();
        let y = measure(&combo, &model, &noiseless).unwrap();
        let diff = y.values() - (y1.values() * a + y2.values() * b);
        prop_assert!(diff.norm() < 1e-12);
    }

    #[test]
    fn hankel_is_constant_on_antidiagonals(values in proptest::collection::vec(complex(), 6..40), frac in 0.1..0.9f64) {
        let m = values.len();
        let l = ((m as f64 * frac) as usize).clamp(2, m - 1);
        let model = MeasurementModel::new(64, m, l).unwrap();
        let y = Measurement::new(CVector::from_vec(values.clone()), model).unwrap();
        let h = build_hankel(&y, l).unwrap();
        prop_assert_eq!(h.shape(), (l, m - l + 1));
        for i in 1..h.nrows() {
            for j in 0..h.ncols() - 1 {
                prop_assert_eq!(h[(i, j)], h[(i - 1, j + 1)]);
            }
        }
        prop_assert_eq!(h[(0, 0)], values[0]);
        prop_assert_eq!(h[(l - 1, m - l)], values[m - 1]);
    }

    #[test]
    fn larger_threshold_never_shrinks_superset(
        (n, m, l, support, amps) in exact_instance(),
        sigma in 1e-4..1e-2f64, seed in 0u64..1000, e1 in 1e-3..0.3f64, factor in 1.0..3.0f64,
    ) {
        let model = MeasurementModel::new(n, m, l).unwrap();
        let x = SparseSignal::new(n, support, amps).unwrap();
        let y = measure(&x, &model, &NoiseSpec::new(sigma, seed).unwrap()).unwrap();
        let pick = |eps: f64| {
            let cfg = SelectionConfig { epsilon1_override: Some(eps), ..SelectionConfig::default() };
            select_superset(&y, sigma, &cfg).unwrap()
        };
        let small = pick(e1);
        let large = pick(e1 * factor);
        // The cap at L entries keeps the smallest angles, so containment
        // holds for the capped sets as well.
        prop_assert!(small.omega.iter().all(|k| large.omega.contains(k)) || large.capped);
        prop_assert!(small.omega.len() <= large.omega.len());
    }

    #[test]
    fn pruning_residual_is_monotone_and_terminates(
        (n, m, l, support, amps) in exact_instance(),
        sigma in 1e-4..1e-1f64, seed in 0u64..1000, extra in 1usize..6,
    ) {
        let model = MeasurementModel::new(n, m, l).unwrap();
        let x = SparseSignal::new(n, support.clone(), amps).unwrap();
        let y = measure(&x, &model, &NoiseSpec::new(sigma, seed).unwrap()).unwrap();
        let half = (n / 2) as i64;
        let mut omega = support.clone();
        let mut k = -half;
        while omega.len() < (support.len() + extra).min(m) && k < half {
            if !omega.contains(&k) {
                omega.push(k);
            }
            k += 7;
        }
        omega.sort_unstable();
        let r = prune(&y, &omega, 10.0 * sigma, &PruneConfig::default()).unwrap();
        prop_assert!(r.iterations <= omega.len());
        prop_assert!(!r.support.is_empty());
        prop_assert!(r.prune_trace.iter().all(|s| s.delta < 10.0 * sigma));

        // Replay the removals: the fitted residual never decreases.
        let mut active = omega.clone();
        let residual = |set: &[i64]| {
            let coef = least_squares(&y, set).unwrap();
            let a = superset::fourier::atom_matrix(&model, set).unwrap();
            (y.values() - a * CVector::from_vec(coef)).norm()
        };
        let mut prev = residual(&active);
        for step in &r.prune_trace {
            active.retain(|&j| j != step.index);
            let cur = residual(&active);
            prop_assert!(cur >= prev - 1e-10);
            prev = cur;
        }
        prop_assert_eq!(&active, &r.support);
        prop_assert!((prev - r.residual).abs() < 1e-10);
    }

    #[test]
    fn noiseless_pipelines_are_exact((n, m, l, support, amps) in exact_instance()) {
        let model = MeasurementModel::new(n, m, l).unwrap();
        let x = SparseSignal::new(n, support, amps).unwrap();
        let y = measure(&x, &model, &NoiseSpec::noiseless()).unwrap();
        let r = superset_method(&y, 0.0, &SupersetConfig::default()).unwrap();
        prop_assert!(r.relative_error(&x).unwrap() < 1e-8);
        prop_assert_eq!(r.support.as_slice(), x.support());
        let p = pencil_recover(&y, 0.0, &PencilConfig::default()).unwrap();
        prop_assert!(p.relative_error(&x).unwrap() < 1e-8);
    }
}
