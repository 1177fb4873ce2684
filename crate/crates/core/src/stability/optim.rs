//! Nelder-Mead simplex minimization.

use serde::{Deserialize, Serialize};

/// Reflection, expansion, contraction and shrink coefficients.
const RHO: f64 = 1.0;
const CHI: f64 = 2.0;
const GAMMA: f64 = 0.5;
const SIGMA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NelderMeadOptions {
    /// Edge length of the initial right-angled simplex.
    pub initial_edge: f64,
    /// Stop once the simplex diameter falls below this.
    pub diameter_tol: f64,
    /// Maximum number of objective evaluations.
    pub budget: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            initial_edge: 0.25,
            diameter_tol: 1e-3,
            budget: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
    /// Set when the evaluation budget ran out before convergence.
    pub budget_exhausted: bool,
}

/// Minimizes `f` from `x0`. Non-finite objective values are treated as `+inf`.
pub fn nelder_mead(mut f: impl FnMut(&[f64]) -> f64, x0: &[f64], opts: &NelderMeadOptions) -> NelderMeadResult {
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let f0 = eval(x0, &mut evals);
    if n == 0 || opts.budget <= 1 {
        return NelderMeadResult {
            x: x0.to_vec(),
            value: f0,
            evaluations: evals,
            converged: n == 0,
            budget_exhausted: n > 0,
        };
    }

    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(x0.to_vec(), f0)];
    for i in 0..n {
        if evals >= opts.budget {
            break;
        }
        let mut x = x0.to_vec();
        x[i] += opts.initial_edge;
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }
    if simplex.len() < n + 1 {
        return best_of(simplex, evals, false);
    }

    let diameter = |s: &[(Vec<f64>, f64)]| {
        let mut d: f64 = 0.0;
        for a in s {
            for b in s {
                let dist = a.0.iter().zip(&b.0).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
                d = d.max(dist);
            }
        }
        d
    };

    loop {
        // Stable sort keeps the ordering deterministic under ties.
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        if diameter(&simplex) < opts.diameter_tol {
            return best_of(simplex, evals, true);
        }
        if evals >= opts.budget {
            return best_of(simplex, evals, false);
        }
        let centroid: Vec<f64> = (0..n)
            .map(|k| simplex[..n].iter().map(|p| p.0[k]).sum::<f64>() / n as f64)
            .collect();
        let worst = simplex[n].clone();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&worst.0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };
        let xr = along(RHO);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            if evals >= opts.budget {
                simplex[n] = (xr, fr);
                continue;
            }
            let xe = along(RHO * CHI);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        if evals >= opts.budget {
            continue;
        }
        let (xc, fc) = if fr < worst.1 {
            let x = along(RHO * GAMMA);
            let v = eval(&x, &mut evals);
            (x, v)
        } else {
            let x = along(-GAMMA);
            let v = eval(&x, &mut evals);
            (x, v)
        };
        if fc < worst.1.min(fr) {
            simplex[n] = (xc, fc);
            continue;
        }
        // Shrink toward the best vertex.
        let best = simplex[0].0.clone();
        for p in simplex.iter_mut().skip(1) {
            if evals >= opts.budget {
                break;
            }
            let x: Vec<f64> = best.iter().zip(&p.0).map(|(b, v)| b + SIGMA * (v - b)).collect();
            let v = eval(&x, &mut evals);
            *p = (x, v);
        }
    }
}

fn best_of(mut simplex: Vec<(Vec<f64>, f64)>, evals: usize, converged: bool) -> NelderMeadResult {
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    let (x, value) = simplex.swap_remove(0);
    NelderMeadResult {
        x,
        value,
        evaluations: evals,
        converged,
        budget_exhausted: !converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_quadratic_minimum() {
        let r = nelder_mead(
            |x| (x[0] - 1.0).powi(2) + 3.0 * (x[1] + 2.0).powi(2),
            &[0.0, 0.0],
            &NelderMeadOptions {
                diameter_tol: 1e-8,
                budget: 1000,
                ..Default::default()
            },
        );
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] + 2.0).abs() < 1e-6);
    }

    #[test]
    fn rosenbrock() {
        let r = nelder_mead(
            |x| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2),
            &[-1.2, 1.0],
            &NelderMeadOptions {
                diameter_tol: 1e-9,
                budget: 5000,
                ..Default::default()
            },
        );
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{:?}", r.x);
    }

    #[test]
    fn unit_budget_returns_seed() {
        let r = nelder_mead(|x| x[0] * x[0], &[3.0], &NelderMeadOptions { budget: 1, ..Default::default() });
        assert_eq!(r.x, vec![3.0]);
        assert_eq!(r.evaluations, 1);
        assert!(r.budget_exhausted && !r.converged);
    }

    #[test]
    fn respects_budget() {
        let mut count = 0;
        let r = nelder_mead(
            |x| {
                count += 1;
                x.iter().map(|v| v.sin()).sum()
            },
            &[0.3, 0.1, -0.2],
            &NelderMeadOptions {
                budget: 17,
                diameter_tol: 0.0,
                ..Default::default()
            },
        );
        assert!(r.evaluations <= 17 && count == r.evaluations);
        assert!(r.budget_exhausted);
    }

    #[test]
    fn deterministic() {
        let f = |x: &[f64]| (x[0] - 0.3).abs() + (x[1] * x[0]).cos();
        let a = nelder_mead(f, &[1.0, 2.0], &NelderMeadOptions::default());
        let b = nelder_mead(f, &[1.0, 2.0], &NelderMeadOptions::default());
        assert_eq!(a, b);
    }
}
