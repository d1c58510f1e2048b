//! Quasi-Newton local search with finite-difference gradients.

use crate::error::Result;

#[derive(Debug, Clone, Copy)]
pub struct LocalOptions {
    pub max_iters: usize,
    pub grad_step: f64,
    /// relative objective change treated as stalled
    pub ftol: f64,
    /// infinity-norm gradient treated as stationary
    pub gtol: f64,
}

#[derive(Debug, Clone)]
pub struct LocalResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Central-difference gradient with step `h`.
pub fn central_gradient<F>(f: &mut F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut g = vec![0.0; x.len()];
    let mut y = x.to_vec();
    for i in 0..x.len() {
        y[i] = x[i] + h;
        let fp = f(&y)?;
        y[i] = x[i] - h;
        let fm = f(&y)?;
        y[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    Ok(g)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// BFGS on the inverse Hessian with Armijo backtracking.
///
/// Non-finite objective values inside a line search shorten the step; a
/// non-finite value at an accepted point is returned as an error.
pub fn bfgs<F>(mut f: F, x0: Vec<f64>, opts: &LocalOptions) -> Result<LocalResult>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let n = x0.len();
    let mut evals = 0usize;
    let mut x = x0;
    let mut fx = f(&x)?;
    evals += 1;
    if !fx.is_finite() {
        return Err(crate::Error::NonFiniteObjective);
    }
    let mut g = central_gradient(&mut f, &x, opts.grad_step)?;
    evals += 2 * n;
    let mut h = identity(n);
    let mut fresh = true;
    let mut stalled = 0;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iters {
        if inf_norm(&g) < opts.gtol {
            converged = true;
            break;
        }
        iterations += 1;
        let mut d: Vec<f64> = (0..n).map(|i| -dot(&h[i * n..(i + 1) * n], &g)).collect();
        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            h = identity(n);
            fresh = true;
            d = g.iter().map(|v| -v).collect();
            slope = dot(&g, &d);
        }
        if fresh {
            // keep the first step inside a unit ball
            let len = dot(&d, &d).sqrt();
            if len > 1.0 {
                d.iter_mut().for_each(|v| *v /= len);
                slope /= len;
            }
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        while alpha > 1e-14 {
            let xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
            let fnew = match f(&xn) {
                Ok(v) if v.is_finite() => v,
                Ok(_) | Err(crate::Error::NonFiniteObjective) => f64::INFINITY,
                Err(e) => return Err(e),
            };
            evals += 1;
            if fnew <= fx + 1e-4 * alpha * slope {
                accepted = Some((xn, fnew));
                break;
            }
            alpha *= 0.5;
        }
        let Some((xn, fnew)) = accepted else {
            if fresh {
                // steepest descent cannot improve: flat to working precision
                converged = inf_norm(&g) < opts.gtol.sqrt();
                break;
            }
            h = identity(n);
            fresh = true;
            continue;
        };

        let gn = central_gradient(&mut f, &xn, opts.grad_step)?;
        evals += 2 * n;
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        let yy = dot(&y, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * yy.sqrt() && sy > 0.0 {
            if fresh {
                let scale = sy / yy;
                h.iter_mut().for_each(|v| *v *= scale);
                fresh = false;
            }
            update_inverse(&mut h, &s, &y, sy);
        }

        let df = (fx - fnew).abs();
        x = xn;
        g = gn;
        let prev = fx;
        fx = fnew;
        if df <= opts.ftol * (1.0 + prev.abs()) {
            stalled += 1;
            if stalled >= 3 {
                converged = true;
                break;
            }
        } else {
            stalled = 0;
        }
    }
    if !converged && inf_norm(&g) < opts.gtol {
        converged = true;
    }
    Ok(LocalResult { x, f: fx, iterations, evaluations: evals, converged })
}

fn identity(n: usize) -> Vec<f64> {
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    h
}

// H <- (I - r s y^T) H (I - r y s^T) + r s s^T
fn update_inverse(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let r = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], y)).collect();
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += -r * (hy[i] * s[j] + s[i] * hy[j]) + (r * r * yhy + r) * s[i] * s[j];
        }
    }
}
