//! Independent oracles shared by the integration tests. Nothing here calls
//! into the forward-backward, Viterbi or KL code paths it is used to check.
#![allow(dead_code)]

use ndarray::{Array1, Array2, Array3};
use rand::Rng;
use spg_core::model::{ExpectedParams, Hyperparameters};

/// Straight-line linear-space emission b*ₜⱼ = Πₗ Σₘ b*ₜⱼₗₘ with the dry
/// atom taken only for y = 0 and the exponential terms only for y > 0.
pub fn linear_emission(params: &ExpectedParams, y: &[f64], j: usize) -> f64 {
    let (_, l, m) = params.lambda_hat.dim();
    let mut prod = 1.0;
    for loc in 0..l {
        let v = if y[loc] == 0.0 {
            params.log_c_star[[j, loc, 0]].exp()
        } else {
            let mut s = 0.0;
            for c in 0..m {
                s += params.log_c_star[[j, loc, c + 1]].exp()
                    * params.log_lambda_star[[j, loc, c]].exp()
                    * (-y[loc] * params.lambda_hat[[j, loc, c]]).exp();
            }
            s
        };
        prod *= v;
    }
    prod
}

pub struct Enumeration {
    /// Σ over paths of Π a*·b*.
    pub total: f64,
    pub q_t: Array2<f64>,
    pub q_trans: Array2<f64>,
    /// Highest-weight path (first in lexicographic order among ties).
    pub best_path: Vec<usize>,
    pub best_weight: f64,
}

/// Exhaustive sum over all K^T state paths.
pub fn enumerate_paths(params: &ExpectedParams, data: &Array2<f64>) -> Enumeration {
    let k = params.log_a1_star.len();
    let t_len = data.nrows();
    let b: Vec<Vec<f64>> = (0..t_len)
        .map(|t| {
            let row = data.row(t).to_vec();
            (0..k).map(|j| linear_emission(params, &row, j)).collect()
        })
        .collect();
    let a1: Vec<f64> = params.log_a1_star.iter().map(|v| v.exp()).collect();
    let a = params.log_a_star.mapv(f64::exp);
    let mut q_t = Array2::zeros((t_len, k));
    let mut q_trans = Array2::zeros((k, k));
    let mut total = 0.0;
    let mut best_path = vec![0; t_len];
    let mut best_weight = -1.0;
    let mut path = vec![0usize; t_len];
    loop {
        let mut w = a1[path[0]] * b[0][path[0]];
        for t in 1..t_len {
            w *= a[[path[t - 1], path[t]]] * b[t][path[t]];
        }
        total += w;
        for t in 0..t_len {
            q_t[[t, path[t]]] += w;
            if t + 1 < t_len {
                q_trans[[path[t], path[t + 1]]] += w;
            }
        }
        if w > best_weight {
            best_weight = w;
            best_path = path.clone();
        }
        // Odometer increment, last position fastest -> lexicographic order.
        let mut pos = t_len;
        loop {
            if pos == 0 {
                q_t /= total;
                q_trans /= total;
                return Enumeration {
                    total,
                    q_t,
                    q_trans,
                    best_path,
                    best_weight,
                };
            }
            pos -= 1;
            path[pos] += 1;
            if path[pos] < k {
                break;
            }
            path[pos] = 0;
        }
    }
}

/// Random hyperparameters with entries in moderate ranges.
pub fn random_hyper<R: Rng>(rng: &mut R, k: usize, l: usize, m: usize) -> Hyperparameters {
    Hyperparameters {
        xi: Array1::from_shape_fn(k, |_| rng.random_range(0.3..5.0)),
        alpha: Array2::from_shape_fn((k, k), |_| rng.random_range(0.3..8.0)),
        zeta: Array3::from_shape_fn((k, l, m + 1), |_| rng.random_range(0.5..6.0)),
        gamma_shape: Array3::from_shape_fn((k, l, m), |_| rng.random_range(0.5..8.0)),
        delta_rate: Array3::from_shape_fn((k, l, m), |_| rng.random_range(0.5..6.0)),
    }
}

/// Random precipitation with roughly 40% dry cells.
pub fn random_data<R: Rng>(rng: &mut R, t: usize, l: usize) -> Array2<f64> {
    Array2::from_shape_fn((t, l), |_| {
        if rng.random_bool(0.4) {
            0.0
        } else {
            rng.random_range(0.01..10.0)
        }
    })
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

// ---------------------------------------------------------------------------
// Quadrature oracles for the KL closed forms. Normalizing constants are
// integrated numerically too, so no log-gamma or digamma is involved.
// ---------------------------------------------------------------------------

/// Tanh-sinh nodes on (0, 1) as (ln x, ln(1 − x), weight).
fn tanh_sinh_nodes(h: f64) -> Vec<(f64, f64, f64)> {
    let mut nodes = Vec::new();
    let n = (4.5 / h).ceil() as i64;
    for i in -n..=n {
        let u = i as f64 * h;
        let s = std::f64::consts::FRAC_PI_2 * 2.0 * u.sinh();
        // x = 1 / (1 + e^{-s}), 1 − x = 1 / (1 + e^{s})
        let ln_x = -(-s).exp().ln_1p();
        let ln_1mx = -s.exp().ln_1p();
        let w = h * std::f64::consts::PI * u.cosh() * (ln_x + ln_1mx).exp();
        if w > 0.0 && ln_x.is_finite() && ln_1mx.is_finite() {
            nodes.push((ln_x, ln_1mx, w));
        }
    }
    nodes
}

/// KL(Beta/Dirichlet(q) ‖ Dirichlet(p)) for 2 or 3 components by quadrature.
pub fn kl_dirichlet_quadrature(q: &[f64], p: &[f64]) -> f64 {
    let nodes = tanh_sinh_nodes(1.0 / 48.0);
    let log_f = |alpha: &[f64], ln_x: &[f64]| -> f64 {
        alpha.iter().zip(ln_x).map(|(a, lx)| (a - 1.0) * lx).sum()
    };
    let (mut iq, mut ip, mut imain) = (0.0, 0.0, 0.0);
    let mut accumulate = |ln_x: &[f64], w: f64| {
        let lq = log_f(q, ln_x);
        let lp = log_f(p, ln_x);
        let fq = lq.exp();
        iq += w * fq;
        ip += w * lp.exp();
        imain += w * fq * (lq - lp);
    };
    match q.len() {
        2 => {
            for &(lx, l1x, w) in &nodes {
                accumulate(&[lx, l1x], w);
            }
        }
        3 => {
            // x1 = u, x2 = (1 − u) v, x3 = (1 − u)(1 − v), Jacobian (1 − u).
            for &(lu, l1u, wu) in &nodes {
                for &(lv, l1v, wv) in &nodes {
                    let ln_x = [lu, l1u + lv, l1u + l1v];
                    accumulate(&ln_x, wu * wv * l1u.exp());
                }
            }
        }
        n => panic!("quadrature oracle supports 2 or 3 components, got {n}"),
    }
    imain / iq - iq.ln() + ip.ln()
}

/// KL(Gamma(aq, bq) ‖ Gamma(ap, bp)), shape–rate, by trapezoidal quadrature
/// in u = ln x.
pub fn kl_gamma_quadrature(aq: f64, bq: f64, ap: f64, bp: f64) -> f64 {
    let a_min = aq.min(ap);
    let lo = -45.0 / a_min - 5.0;
    let hi = ((aq.max(ap) + 60.0) / bq.min(bp)).ln() + 3.0;
    let h = 0.002;
    let n = ((hi - lo) / h).ceil() as usize;
    let (mut iq, mut ip, mut imain) = (0.0, 0.0, 0.0);
    for i in 0..=n {
        let u = lo + i as f64 * h;
        let x = u.exp();
        let lq = (aq - 1.0) * u - bq * x;
        let lp = (ap - 1.0) * u - bp * x;
        let fq = (lq + u).exp();
        iq += h * fq;
        ip += h * (lp + u).exp();
        imain += h * fq * (lq - lp);
    }
    imain / iq - iq.ln() + ip.ln()
}
