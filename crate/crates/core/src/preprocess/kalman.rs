//! Local linear trend plus period-7 dummy seasonal, filtered and smoothed.
//!
//! State layout: `[level, slope, s_t, s_{t-1}, ..., s_{t-5}]`. The observation is
//! `level + s_t + noise`. All variances are expressed as ratios to the
//! observation variance, which is concentrated out of the likelihood.

use nalgebra::{SMatrix, SVector};

use super::nelder_mead;

const DIM: usize = 8;
/// Observations whose prediction is dominated by the diffuse prior.
const DIFFUSE_STEPS: usize = DIM;
/// Prior state variance relative to the observation variance.
const DIFFUSE_SCALE: f64 = 1e7;

type State = SVector<f64, DIM>;
type Cov = SMatrix<f64, DIM, DIM>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct VarianceRatios {
    pub level: f64,
    pub slope: f64,
    pub seasonal: f64,
}

fn transition() -> Cov {
    let mut t = Cov::zeros();
    t[(0, 0)] = 1.0;
    t[(0, 1)] = 1.0;
    t[(1, 1)] = 1.0;
    for j in 2..DIM {
        t[(2, j)] = -1.0;
    }
    for i in 3..DIM {
        t[(i, i - 1)] = 1.0;
    }
    t
}

fn observe(a: &State) -> f64 {
    a[0] + a[2]
}

fn observe_cov(p: &Cov) -> SVector<f64, DIM> {
    // P Z' with Z = e0 + e2
    p.column(0) + p.column(2)
}

struct Filtered {
    predicted: Vec<State>,
    predicted_cov: Vec<Cov>,
    innovation: Vec<f64>,
    innovation_var: Vec<f64>,
    gain: Vec<State>,
}

fn filter(y: &[f64], q: VarianceRatios, keep: bool) -> (f64, f64, usize, Option<Filtered>) {
    let t_mat = transition();
    let t_mat_t = t_mat.transpose();
    let mut a = State::zeros();
    a[0] = y[0];
    let mut p = Cov::identity() * DIFFUSE_SCALE;

    let mut sum_log_f = 0.0;
    let mut sum_scaled_sq = 0.0;
    let mut n_used = 0usize;
    let mut store = keep.then(|| Filtered {
        predicted: Vec::with_capacity(y.len()),
        predicted_cov: Vec::with_capacity(y.len()),
        innovation: Vec::with_capacity(y.len()),
        innovation_var: Vec::with_capacity(y.len()),
        gain: Vec::with_capacity(y.len()),
    });

    for (t, &obs) in y.iter().enumerate() {
        let pz = observe_cov(&p);
        let f = pz[0] + pz[2] + 1.0;
        let v = obs - observe(&a);
        // K = T P Z' / F
        let k = t_mat * pz / f;
        if t >= DIFFUSE_STEPS {
            sum_log_f += f.ln();
            sum_scaled_sq += v * v / f;
            n_used += 1;
        }
        if let Some(s) = store.as_mut() {
            s.predicted.push(a);
            s.predicted_cov.push(p);
            s.innovation.push(v);
            s.innovation_var.push(f);
            s.gain.push(k);
        }
        a = t_mat * a + k * v;
        // P' = T P T' - K F K' + Q
        let mut next = t_mat * p * t_mat_t - k * k.transpose() * f;
        next[(0, 0)] += q.level;
        next[(1, 1)] += q.slope;
        next[(2, 2)] += q.seasonal;
        p = (next + next.transpose()) * 0.5;
    }
    (sum_log_f, sum_scaled_sq, n_used, store)
}

/// Concentrated negative log-likelihood (up to a constant).
fn neg_log_likelihood(y: &[f64], q: VarianceRatios, floor: f64) -> f64 {
    let (sum_log_f, sum_sq, n, _) = filter(y, q, false);
    if n == 0 {
        return 0.0;
    }
    let sigma2 = (sum_sq / n as f64).max(floor);
    0.5 * (n as f64 * sigma2.ln() + sum_log_f)
}

pub(crate) fn fit(y: &[f64], max_iters: usize, floor: f64) -> VarianceRatios {
    let ratios = |x: &[f64]| VarianceRatios {
        level: x[0].clamp(-40.0, 20.0).exp().max(floor),
        slope: x[1].clamp(-40.0, 20.0).exp().max(floor),
        seasonal: x[2].clamp(-40.0, 20.0).exp().max(floor),
    };
    let start = [0.1f64.ln(), 1e-3f64.ln(), 1e-2f64.ln()];
    let best = nelder_mead::minimize(
        |x| neg_log_likelihood(y, ratios(x), floor),
        &start,
        2.0,
        max_iters,
        1e-10,
    );
    let q = ratios(&best.x);
    log::debug!("variance ratios {q:?}, profile nll {:.6}", best.value);
    q
}

/// Smoothed state means (fixed-interval smoother in the inversion-free form).
pub(crate) fn smooth(y: &[f64], q: VarianceRatios) -> Vec<State> {
    let (_, _, _, store) = filter(y, q, true);
    let s = store.expect("filter keeps its history when asked");
    let t_mat = transition();
    let mut z = State::zeros();
    z[0] = 1.0;
    z[2] = 1.0;

    let mut r = State::zeros();
    let mut out = vec![State::zeros(); y.len()];
    for t in (0..y.len()).rev() {
        // L = T - K Z
        let l = t_mat - s.gain[t] * z.transpose();
        r = z * (s.innovation[t] / s.innovation_var[t]) + l.transpose() * r;
        out[t] = s.predicted[t] + s.predicted_cov[t] * r;
    }
    out
}
