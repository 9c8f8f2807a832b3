//! Bounded-iteration Nelder-Mead minimizer.

pub(crate) struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
}

/// Minimizes `f` from `start` with an axis-aligned initial simplex of edge `step`.
///
/// Stops after `max_iters` iterations or when the spread of simplex values falls
/// below `tol`. Fully deterministic.
pub(crate) fn minimize<F>(f: F, start: &[f64], step: f64, max_iters: usize, tol: f64) -> Minimum
where
    F: Fn(&[f64]) -> f64,
{
    let n = start.len();
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((start.to_vec(), eval(start)));
    for i in 0..n {
        let mut x = start.to_vec();
        x[i] += step;
        let v = eval(&x);
        simplex.push((x, v));
    }

    let point = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> {
        a.iter().zip(b).map(|(ai, bi)| ai + t * (bi - ai)).collect()
    };

    for _ in 0..max_iters {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (simplex[0].1, simplex[n].1);
        if (worst - best).abs() <= tol * (1.0 + best.abs()) {
            break;
        }

        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / n as f64;
            }
        }

        let worst_x = simplex[n].0.clone();
        let reflected = point(&centroid, &worst_x, -1.0);
        let fr = eval(&reflected);

        if fr < simplex[0].1 {
            let expanded = point(&centroid, &worst_x, -2.0);
            let fe = eval(&expanded);
            simplex[n] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (reflected, fr);
        } else {
            let (target, ft) = if fr < simplex[n].1 {
                (reflected, fr)
            } else {
                (worst_x, simplex[n].1)
            };
            let contracted = point(&centroid, &target, 0.5);
            let fc = eval(&contracted);
            if fc < ft {
                simplex[n] = (contracted, fc);
            } else {
                let best_x = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    let x = point(&best_x, &entry.0, 0.5);
                    let v = eval(&x);
                    *entry = (x, v);
                }
            }
        }
    }

    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    Minimum { x, value }
}
