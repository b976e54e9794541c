mod common;

use std::path::Path;

use proptest::prelude::*;
use spg_core::numkernel::{digamma, kl_dirichlet, kl_gamma, log_gamma, log_sum_exp};

use common::{kl_dirichlet_quadrature, kl_gamma_quadrature};

#[test]
fn special_functions_match_references() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/special_refs.csv");
    let mut reader = csv::Reader::from_path(path).unwrap();
    let mut n = 0;
    for rec in reader.records() {
        let rec = rec.unwrap();
        let x: f64 = rec[0].parse().unwrap();
        let psi: f64 = rec[1].parse().unwrap();
        let lg: f64 = rec[2].parse().unwrap();
        let got_psi = digamma(x).unwrap();
        let got_lg = log_gamma(x).unwrap();
        assert!((got_psi - psi).abs() <= 1e-12 * psi.abs().max(1.0), "digamma({x}) = {got_psi}, want {psi}");
        assert!((got_lg - lg).abs() <= 1e-12 * lg.abs().max(1.0), "log_gamma({x}) = {got_lg}, want {lg}");
        n += 1;
    }
    assert_eq!(n, 10_000);
}

#[test]
fn digamma_half() {
    // Ψ(1/2) = −γ − 2 ln 2
    assert!((digamma(0.5).unwrap() - (-1.9635100260214235)).abs() < 1e-14);
    assert!((log_gamma(0.5).unwrap() - 0.5 * std::f64::consts::PI.ln()).abs() < 1e-14);
}

#[test]
fn kl_examples_against_quadrature() {
    let closed = kl_dirichlet(&[2.0, 2.0], &[1.0, 1.0]).unwrap();
    assert!((closed - kl_dirichlet_quadrature(&[2.0, 2.0], &[1.0, 1.0])).abs() < 1e-6);
    assert!((closed - 0.125).abs() < 1e-3);
    let g = kl_gamma(2.0, 2.0, 1.0, 1.0).unwrap();
    assert!((g - kl_gamma_quadrature(2.0, 2.0, 1.0, 1.0)).abs() < 1e-6);
}

#[test]
fn kl_small_parameters_against_quadrature() {
    let cases = [
        (vec![0.5, 0.7], vec![1.0, 3.0]),
        (vec![0.6, 2.0, 0.8], vec![1.0, 1.0, 1.0]),
        (vec![4.0, 5.5, 1.2], vec![0.7, 2.0, 3.0]),
    ];
    for (q, p) in cases {
        let diff = (kl_dirichlet(&q, &p).unwrap() - kl_dirichlet_quadrature(&q, &p)).abs();
        assert!(diff < 1e-6, "{q:?} vs {p:?}: {diff}");
    }
    let diff = (kl_gamma(0.5, 0.2, 3.0, 4.0).unwrap() - kl_gamma_quadrature(0.5, 0.2, 3.0, 4.0)).abs();
    assert!(diff < 1e-6);
}

#[test]
fn log_sum_exp_range() {
    assert!((log_sum_exp(&[700.0, 700.0]).unwrap() - (700.0 + 2f64.ln())).abs() < 1e-12);
    assert!((log_sum_exp(&[-1e8, -1e8]).unwrap() - (-1e8 + 2f64.ln())).abs() < 1e-6);
    assert_eq!(log_sum_exp(&[-1e8, 0.0]).unwrap(), 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn digamma_recurrence(x in 1e-3f64..100.0) {
        let d = digamma(x + 1.0).unwrap() - digamma(x).unwrap();
        prop_assert!((d - 1.0 / x).abs() <= 1e-10 * (1.0 / x).max(1.0));
    }

    #[test]
    fn log_gamma_recurrence(x in 1e-3f64..100.0) {
        let d = log_gamma(x + 1.0).unwrap() - log_gamma(x).unwrap();
        prop_assert!((d - x.ln()).abs() <= 1e-11 * x.ln().abs().max(1.0));
    }

    #[test]
    fn log_sum_exp_shift(v in prop::collection::vec(-100.0f64..100.0, 1..12), c in -500.0f64..500.0) {
        let base = log_sum_exp(&v).unwrap();
        let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
        let got = log_sum_exp(&shifted).unwrap();
        prop_assert!((got - base - c).abs() <= 1e-12 * (base + c).abs().max(1.0));
    }

    #[test]
    fn kl_dirichlet_zero_iff_equal(
        q in prop::collection::vec(0.1f64..20.0, 2..6),
        bump in 0.01f64..2.0,
        idx in 0usize..6,
    ) {
        prop_assert!(kl_dirichlet(&q, &q).unwrap().abs() <= 1e-12);
        let mut p = q.clone();
        let i = idx % p.len();
        p[i] += bump;
        prop_assert!(kl_dirichlet(&q, &p).unwrap() > 0.0);
        prop_assert!(kl_dirichlet(&p, &q).unwrap() > 0.0);
    }

    #[test]
    fn kl_gamma_zero_iff_equal(a in 0.1f64..50.0, b in 0.1f64..50.0, da in 0.0f64..2.0, db in 0.0f64..2.0) {
        prop_assert!(kl_gamma(a, b, a, b).unwrap().abs() <= 1e-12);
        prop_assume!(da > 1e-3 || db > 1e-3);
        prop_assert!(kl_gamma(a, b, a + da, b + db).unwrap() > 0.0);
    }
}
