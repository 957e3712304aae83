//! Numerically stable log-space helpers and small scalar optimizers.

use crate::error::{Error, Result};

/// log(exp(a) + exp(b)) without overflow; tolerates `-inf` inputs.
pub fn log_sum_exp2(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// log Σ exp(x_i) over a slice; `-inf` for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = xs.iter().map(|&x| (x - hi).exp()).sum();
    hi + sum.ln()
}

/// Maximizes a one-dimensional function on [lo, hi] with Brent's method
/// (parabolic interpolation falling back to golden-section steps).
///
/// Returns the located maximizer and its value; the bracket around the
/// returned point is no wider than `tol`.
pub fn brent_maximize<F>(mut f: F, lo: f64, hi: f64, tol: f64, max_iter: usize) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    const GOLDEN: f64 = 0.381_966_011_250_105;
    let mut a = lo.min(hi);
    let mut b = lo.max(hi);
    let tol = tol.abs().max(1e-12);

    let mut x = a + GOLDEN * (b - a);
    let mut w = x;
    let mut v = x;
    let mut fx = -f(x);
    let mut fw = fx;
    let mut fv = fx;

    let mut d = 0.0_f64;
    let mut e = 0.0_f64;

    for _ in 0..max_iter {
        let m = 0.5 * (a + b);
        let tol1 = tol * x.abs() + 1e-15;
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }

        let mut use_golden = true;
        if e.abs() > tol1 {
            // Parabola through (v, fv), (w, fw), (x, fx).
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            } else {
                q = -q;
            }
            let e_prev = e;
            e = d;
            if p.abs() < (0.5 * q * e_prev).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if x < m { tol1 } else { -tol1 };
                }
                use_golden = false;
            }
        }
        if use_golden {
            e = if x < m { b - x } else { a - x };
            d = GOLDEN * e;
        }

        let u = if d.abs() >= tol1 {
            x + d
        } else if d > 0.0 {
            x + tol1
        } else {
            x - tol1
        };
        let fu = -f(u);

        if fu <= fx {
            if u < x {
                b = x;
            } else {
                a = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, -fx)
}

/// Options for [`gradient_ascent`].
#[derive(Debug, Clone, Copy)]
pub struct AscentOptions {
    pub max_steps: usize,
    pub init_step: f64,
    /// Stop once the relative objective improvement drops below this.
    pub rel_tol: f64,
    pub min_step: f64,
}

impl Default for AscentOptions {
    fn default() -> Self {
        Self {
            max_steps: 200,
            init_step: 0.1,
            rel_tol: 1e-8,
            min_step: 1e-14,
        }
    }
}

/// Backtracking gradient ascent.
///
/// `eval` returns the objective value and its gradient at a point. Steps
/// that do not improve the objective are halved until they do (or the step
/// floor is hit), so the accepted objective sequence is non-decreasing.
pub fn gradient_ascent<F>(
    mut eval: F,
    theta0: Vec<f64>,
    opts: AscentOptions,
) -> Result<(Vec<f64>, f64)>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut theta = theta0;
    let (mut value, mut grad) = eval(&theta)?;
    if !value.is_finite() {
        return Err(Error::NonFiniteLikelihood);
    }
    let mut step = opts.init_step;

    for _ in 0..opts.max_steps {
        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if grad_norm == 0.0 {
            break;
        }
        let mut accepted = false;
        while step >= opts.min_step {
            let candidate: Vec<f64> = theta
                .iter()
                .zip(&grad)
                .map(|(t, g)| t + step * g)
                .collect();
            match eval(&candidate) {
                Ok((cand_value, cand_grad)) if cand_value.is_finite() && cand_value > value => {
                    let improvement = (cand_value - value) / value.abs().max(1.0);
                    theta = candidate;
                    value = cand_value;
                    grad = cand_grad;
                    step = (step * 1.5).min(1e3);
                    accepted = true;
                    if improvement < opts.rel_tol {
                        return Ok((theta, value));
                    }
                    break;
                }
                _ => step *= 0.5,
            }
        }
        if !accepted {
            break;
        }
    }
    Ok((theta, value))
}
