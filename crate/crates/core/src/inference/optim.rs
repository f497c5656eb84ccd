//! Deterministic quasi-Newton maximizer (BFGS with backtracking line search).

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BfgsOptions {
    /// Stop when the relative objective change falls below this.
    pub rel_tol: f64,
    /// Stop when the largest gradient component falls below this.
    pub grad_tol: f64,
    pub max_iter: usize,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            grad_tol: 1e-8,
            max_iter: 2000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    /// Objective after each accepted iteration.
    pub trace: Vec<f64>,
    pub converged: bool,
    pub evaluations: usize,
    /// Final inverse-Hessian approximation of the negated objective.
    pub inv_hessian: Vec<Vec<f64>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// Maximizes `f`, which returns `(value, gradient)`. Non-finite values are
/// treated as `-inf` and rejected by the line search.
pub fn maximize<F>(mut f: F, x0: &[f64], opts: &BfgsOptions) -> BfgsResult
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let (mut fx, mut g) = f(&x);
    let mut evaluations = 1;
    let mut h = identity(n);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut first_step = true;
    let gmax = |g: &[f64]| g.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    if n == 0 || gmax(&g) < opts.grad_tol {
        return BfgsResult {
            x,
            value: fx,
            gradient: g,
            trace,
            converged: fx.is_finite(),
            evaluations,
            inv_hessian: h,
        };
    }

    for _ in 0..opts.max_iter {
        // Ascent direction d = H g (H approximates the inverse of -Hessian).
        let mut d: Vec<f64> = h.iter().map(|row| dot(row, &g)).collect();
        let mut slope = dot(&d, &g);
        if !(slope > 0.0) {
            h = identity(n);
            d = g.clone();
            slope = dot(&d, &g);
        }
        let mut step = 1.0;
        if first_step {
            let norm = dot(&d, &d).sqrt();
            if norm > 1.0 {
                step = 1.0 / norm;
            }
        }
        let mut accepted = None;
        for _ in 0..60 {
            let xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            let (fn_, gn) = f(&xn);
            evaluations += 1;
            if fn_.is_finite() && fn_ >= fx + 1e-4 * step * slope {
                accepted = Some((xn, fn_, gn));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else {
            // No ascent possible along the direction: at numerical optimum.
            converged = gmax(&g) < 1e-4 * fx.abs().max(1.0);
            break;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        // y is the change of the gradient of -f.
        let y: Vec<f64> = g.iter().zip(&gn).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if first_step {
                let scale = sy / dot(&y, &y);
                for (i, row) in h.iter_mut().enumerate() {
                    row[i] = scale;
                }
            }
            let hy: Vec<f64> = h.iter().map(|row| dot(row, &y)).collect();
            let yhy = dot(&y, &hy);
            let rho = 1.0 / sy;
            for i in 0..n {
                for j in 0..n {
                    h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j])
                        + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
            first_step = false;
        }
        let change = (fn_ - fx).abs() / fx.abs().max(1.0);
        x = xn;
        fx = fn_;
        g = gn;
        trace.push(fx);
        if change < opts.rel_tol || gmax(&g) < opts.grad_tol {
            converged = true;
            break;
        }
    }
    BfgsResult {
        x,
        value: fx,
        gradient: g,
        trace,
        converged,
        evaluations,
        inv_hessian: h,
    }
}
