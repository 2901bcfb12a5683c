//! Property-based invariants over randomized inputs.

use proptest::prelude::*;

use dmavae::baselines::{lsem_effects, LsemFit};
use dmavae::bench::estimation_bias;
use dmavae::io;
use dmavae::nn::{bernoulli_nll, kl_std_normal, log_sum_exp, logistic, softmax, Matrix};
use dmavae::scm::{Dataset, VarKind};

fn finite(range: std::ops::Range<f64>) -> impl Strategy<Value = f64> {
    prop::num::f64::NORMAL.prop_map(move |x| {
        let span = range.end - range.start;
        range.start + (x.abs() % span)
    })
}

proptest! {
    #[test]
    fn kl_is_nonnegative(
        (mu, sigma) in (1usize..6).prop_flat_map(|dim| (
            prop::collection::vec(-5.0..5.0f64, dim),
            prop::collection::vec(0.05..4.0f64, dim),
        )),
    ) {
        let kl = kl_std_normal(&mu, &sigma).unwrap();
        prop_assert!(kl >= 0.0, "kl = {kl}");
    }

    #[test]
    fn kl_is_zero_only_at_standard_normal(dim in 1usize..5) {
        let kl = kl_std_normal(&vec![0.0; dim], &vec![1.0; dim]).unwrap();
        prop_assert!(kl.abs() < 1e-12);
    }

    #[test]
    fn lsem_te_identity(
        a in -3.0..3.0f64,
        b in -3.0..3.0f64,
        c in -3.0..3.0f64,
    ) {
        let fit = LsemFit {
            m_intercept: 0.0,
            a,
            se_a: 0.1,
            sigma2_m: 1.0,
            y_intercept: 0.0,
            c_prime: c,
            se_c_prime: 0.1,
            b,
            se_b: 0.1,
            sigma2_y: 1.0,
            n: 100,
        };
        let est = lsem_effects(&fit);
        prop_assert_eq!(est.te, est.nde - est.nie_r);
        prop_assert_eq!(est.nie, -est.nie_r);
    }

    #[test]
    fn bias_metric_properties(truth in finite(0.01..10.0), err in -5.0..5.0f64) {
        // zero at the truth, symmetric around it, scales with the error
        prop_assert_eq!(estimation_bias(truth, truth).unwrap(), 0.0);
        let up = estimation_bias(truth + err, truth).unwrap();
        let dn = estimation_bias(truth - err, truth).unwrap();
        prop_assert!((up - dn).abs() < 1e-9);
        prop_assert!(up >= 0.0);
    }

    #[test]
    fn logistic_and_bernoulli_consistency(x in -30.0..30.0f64) {
        let p = logistic(x);
        prop_assert!((0.0..=1.0).contains(&p));
        // nll(1) = -log p, nll(0) = -log (1-p), both finite and nonnegative
        prop_assert!(bernoulli_nll(x, 1.0) >= 0.0);
        prop_assert!(bernoulli_nll(x, 0.0) >= 0.0);
        prop_assert!((bernoulli_nll(x, 1.0) - (-p.ln())).abs() < 1e-9 || p < 1e-12);
    }

    #[test]
    fn softmax_normalizes(xs in prop::collection::vec(-20.0..20.0f64, 1..8)) {
        let p = softmax(&xs);
        let sum: f64 = p.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|v| *v >= 0.0));
        // log_sum_exp is the normalizer
        let lse = log_sum_exp(&xs);
        prop_assert!((p[0].ln() - (xs[0] - lse)).abs() < 1e-9);
    }

    #[test]
    fn dataset_csv_roundtrips(
        rows in prop::collection::vec(
            (0u8..2, -4.0..4.0f64, -4.0..4.0f64, prop::collection::vec(-2.0..2.0f64, 3)),
            2..20,
        )
    ) {
        let n = rows.len();
        let mut x = Matrix::zeros(n, 3);
        let mut data = Dataset {
            t: Vec::new(),
            m: Vec::new(),
            y: Vec::new(),
            x: Matrix::zeros(0, 0),
            m_kind: VarKind::Continuous,
            y_kind: VarKind::Continuous,
            truth: None,
            seed: 0,
        };
        for (i, (t, m, y, xs)) in rows.iter().enumerate() {
            data.t.push(*t as f64);
            data.m.push(*m);
            data.y.push(*y);
            for (j, v) in xs.iter().enumerate() {
                x.set(i, j, *v);
            }
        }
        data.x = x;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        io::write_dataset_csv(&path, &data).unwrap();
        let back = io::read_dataset_csv(&path).unwrap();
        prop_assert_eq!(back.t, data.t);
        prop_assert_eq!(back.m, data.m);
        prop_assert_eq!(back.y, data.y);
        prop_assert_eq!(back.x, data.x);
    }
}
