//! Derivative-free simplex minimization.
//!
//! Uses the dimension-adaptive coefficients of Gao and Han, which behave
//! better than the textbook ones once the problem has more than a handful of
//! coordinates (joint refinement with three NLOS paths is eight-dimensional).
//! Coordinates are expected to be pre-scaled so that a unit step means the
//! same thing along every axis.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct NmOptions {
    /// Stop once every vertex is within this distance (max-norm) of the best.
    pub diameter_tol: f64,
    pub max_iterations: usize,
    /// Keep the best cost after every iteration in [`NmResult::history`].
    pub record_history: bool,
}

impl Default for NmOptions {
    fn default() -> Self {
        Self { diameter_tol: 1e-8, max_iterations: 2000, record_history: false }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NmResult {
    pub x: Vec<f64>,
    pub cost: f64,
    pub initial_cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Number of evaluations that returned a non-finite value.
    pub non_finite: usize,
    pub history: Vec<f64>,
}

/// Minimizes `f` starting from `x0`, with the initial simplex spanned by
/// `x0 + step[i] e_i`. Non-finite evaluations are treated as `+inf`, which
/// makes the simplex contract away from them. Returns `None` if `f(x0)` is
/// not finite.
pub fn minimize<F>(mut f: F, x0: &[f64], step: &[f64], opts: &NmOptions) -> Option<NmResult>
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    assert_eq!(step.len(), n, "step and x0 differ in length");
    let mut non_finite = 0usize;
    let mut eval = |x: &[f64]| {
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            non_finite += 1;
            f64::INFINITY
        }
    };
    let f0 = eval(x0);
    if !f0.is_finite() {
        return None;
    }
    if n == 0 {
        return Some(NmResult {
            x: vec![],
            cost: f0,
            initial_cost: f0,
            iterations: 0,
            converged: true,
            non_finite: 0,
            history: vec![],
        });
    }
    let nf = n as f64;
    let (alpha, gamma, rho, sigma) = (1.0, 1.0 + 2.0 / nf, 0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf);
    // Guard against 1-D degeneracy of the adaptive coefficients.
    let sigma = if n == 1 { 0.5 } else { sigma };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    let mut costs: Vec<f64> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    costs.push(f0);
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += step[i];
        costs.push(eval(&v));
        simplex.push(v);
    }

    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut order: Vec<usize> = (0..=n).collect();
    loop {
        order.sort_by(|&a, &b| costs[a].total_cmp(&costs[b]));
        let best = order[0];
        let worst = order[n];
        let second_worst = order[n - 1];
        if opts.record_history {
            history.push(costs[best]);
        }
        let diameter = simplex
            .iter()
            .map(|v| v.iter().zip(&simplex[best]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if diameter < opts.diameter_tol {
            converged = true;
            break;
        }
        if iterations >= opts.max_iterations {
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for &i in &order[..n] {
            for (c, x) in centroid.iter_mut().zip(&simplex[i]) {
                *c += x / nf;
            }
        }
        let towards = |coef: f64| -> Vec<f64> {
            centroid.iter().zip(&simplex[worst]).map(|(c, w)| c + coef * (c - w)).collect()
        };

        let xr = towards(alpha);
        let fr = eval(&xr);
        if fr < costs[best] {
            let xe = towards(alpha * gamma);
            let fe = eval(&xe);
            if fe < fr {
                simplex[worst] = xe;
                costs[worst] = fe;
            } else {
                simplex[worst] = xr;
                costs[worst] = fr;
            }
            continue;
        }
        if fr < costs[second_worst] {
            simplex[worst] = xr;
            costs[worst] = fr;
            continue;
        }
        let (xc, fc, accept) = if fr < costs[worst] {
            let xc = towards(alpha * rho);
            let fc = eval(&xc);
            let ok = fc <= fr;
            (xc, fc, ok)
        } else {
            let xc = towards(-rho);
            let fc = eval(&xc);
            let ok = fc < costs[worst];
            (xc, fc, ok)
        };
        if accept {
            simplex[worst] = xc;
            costs[worst] = fc;
            continue;
        }
        let xb = simplex[best].clone();
        for &i in &order[1..] {
            let shrunk: Vec<f64> = xb.iter().zip(&simplex[i]).map(|(b, x)| b + sigma * (x - b)).collect();
            costs[i] = eval(&shrunk);
            simplex[i] = shrunk;
        }
    }
    let best = (0..=n).min_by(|&a, &b| costs[a].total_cmp(&costs[b])).unwrap_or(0);
    Some(NmResult {
        x: simplex[best].clone(),
        cost: costs[best],
        initial_cost: f0,
        iterations,
        converged,
        non_finite,
        history,
    })
}
