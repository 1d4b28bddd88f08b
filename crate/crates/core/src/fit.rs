//! Levenberg-Marquardt least squares and the Gaussian/parabola fits built on
//! it. The solver is deliberately small: dense normal equations with a
//! diagonal damping term, suitable for the handful-of-parameter models used
//! throughout the crate.

use crate::error::{Error, Result};

/// A scalar model `y = f(x; p)` with analytic gradient.
pub trait Model {
    fn n_params(&self) -> usize;
    fn eval(&self, x: f64, p: &[f64]) -> f64;
    /// Write df/dp_i into `out`.
    fn gradient(&self, x: f64, p: &[f64], out: &mut [f64]);
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Convergence on the relative decrease of the summed squared residual.
    pub tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { max_iterations: 500, tolerance: 1e-12 }
    }
}

#[derive(Debug, Clone)]
pub struct Fit {
    pub params: Vec<f64>,
    /// Parameter covariance, row-major `n x n`.
    pub covariance: Vec<f64>,
    pub residual_ss: f64,
    pub iterations: usize,
}

/// Solve `a x = b` in place by Gaussian elimination with partial pivoting.
/// `a` is row-major `n x n`. Returns false if the matrix is singular.
fn solve_inplace(a: &mut [f64], b: &mut [f64], n: usize) -> bool {
    for col in 0..n {
        let mut pivot = col;
        let mut best = a[col * n + col].abs();
        for row in col + 1..n {
            let v = a[row * n + col].abs();
            if v > best {
                best = v;
                pivot = row;
            }
        }
        if best < 1e-300 {
            return false;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let diag = a[col * n + col];
        for row in col + 1..n {
            let factor = a[row * n + col] / diag;
            if factor != 0.0 {
                for k in col..n {
                    a[row * n + k] -= factor * a[col * n + k];
                }
                b[row] -= factor * b[col];
            }
        }
    }
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in col + 1..n {
            acc -= a[col * n + k] * b[k];
        }
        b[col] = acc / a[col * n + col];
    }
    true
}

fn residual_ss(model: &impl Model, xs: &[f64], ys: &[f64], p: &[f64]) -> f64 {
    xs.iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let r = y - model.eval(x, p);
            r * r
        })
        .sum()
}

/// Fit `model` to `(xs, ys)` starting from `p0`.
pub fn levenberg_marquardt(
    model: &impl Model,
    xs: &[f64],
    ys: &[f64],
    p0: &[f64],
    opts: &FitOptions,
) -> Result<Fit> {
    let n = model.n_params();
    let m = xs.len();
    if m < n {
        return Err(Error::FitFailure(format!("{m} samples cannot constrain {n} parameters")));
    }
    if xs.len() != ys.len() {
        return Err(Error::FitFailure("x/y length mismatch".into()));
    }

    let mut p = p0.to_vec();
    let mut ss = residual_ss(model, xs, ys, &p);
    let mut lambda = 1e-3;
    let mut grad = vec![0.0; n];
    let mut iterations = 0;
    let mut converged = false;
    let mut slow_steps = 0;

    for _ in 0..opts.max_iterations {
        iterations += 1;
        // Normal matrix J^T J and right-hand side J^T r.
        let mut jtj = vec![0.0; n * n];
        let mut jtr = vec![0.0; n];
        for (&x, &y) in xs.iter().zip(ys) {
            model.gradient(x, &p, &mut grad);
            let r = y - model.eval(x, &p);
            for i in 0..n {
                jtr[i] += grad[i] * r;
                for j in 0..n {
                    jtj[i * n + j] += grad[i] * grad[j];
                }
            }
        }

        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for i in 0..n {
                a[i * n + i] += lambda * jtj[i * n + i].max(1e-12);
            }
            let mut step = jtr.clone();
            if !solve_inplace(&mut a, &mut step, n) {
                lambda *= 10.0;
                continue;
            }
            let trial: Vec<f64> = p.iter().zip(&step).map(|(pi, s)| pi + s).collect();
            let trial_ss = residual_ss(model, xs, ys, &trial);
            if trial_ss.is_finite() && trial_ss <= ss {
                let rel = (ss - trial_ss) / ss.max(1e-300);
                p = trial;
                ss = trial_ss;
                lambda = (lambda * 0.3).max(1e-12);
                improved = true;
                if rel < opts.tolerance {
                    converged = true;
                }
                // A run of barely-improving steps is a stagnated minimum.
                slow_steps = if rel < 1e-6 { slow_steps + 1 } else { 0 };
                if slow_steps >= 5 {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // Damping saturated: the current point is a (local) minimum.
            converged = true;
        }
        if converged {
            break;
        }
    }

    if !converged {
        return Err(Error::FitFailure(format!(
            "no convergence after {iterations} iterations (ss = {ss:.6e})"
        )));
    }

    // Covariance = ss/(m-n) * (J^T J)^-1, column-by-column solve.
    let mut jtj = vec![0.0; n * n];
    for &x in xs {
        model.gradient(x, &p, &mut grad);
        for i in 0..n {
            for j in 0..n {
                jtj[i * n + j] += grad[i] * grad[j];
            }
        }
    }
    let dof = (m - n).max(1) as f64;
    let variance = ss / dof;
    let mut covariance = vec![0.0; n * n];
    for col in 0..n {
        let mut a = jtj.clone();
        let mut e = vec![0.0; n];
        e[col] = 1.0;
        if solve_inplace(&mut a, &mut e, n) {
            for row in 0..n {
                covariance[row * n + col] = e[row] * variance;
            }
        }
    }

    Ok(Fit { params: p, covariance, residual_ss: ss, iterations })
}

/// `A exp(-(x - mu)^2 / (2 sigma^2))`.
struct GaussianModel;

impl Model for GaussianModel {
    fn n_params(&self) -> usize {
        3
    }

    fn eval(&self, x: f64, p: &[f64]) -> f64 {
        let d = x - p[1];
        p[0] * (-d * d / (2.0 * p[2] * p[2])).exp()
    }

    fn gradient(&self, x: f64, p: &[f64], out: &mut [f64]) {
        let d = x - p[1];
        let s2 = p[2] * p[2];
        let e = (-d * d / (2.0 * s2)).exp();
        out[0] = e;
        out[1] = p[0] * e * d / s2;
        out[2] = p[0] * e * d * d / (s2 * p[2]);
    }
}

#[derive(Debug, Clone)]
pub struct GaussianFit {
    pub amplitude: f64,
    pub center: f64,
    /// 1/sqrt(e) half-width (always positive).
    pub sigma: f64,
    /// Covariance of (amplitude, center, sigma), row-major 3x3.
    pub covariance: [f64; 9],
    pub residual_ss: f64,
}

impl GaussianFit {
    pub fn sigma_uncertainty(&self) -> f64 {
        self.covariance[8].max(0.0).sqrt()
    }

    pub fn center_uncertainty(&self) -> f64 {
        self.covariance[4].max(0.0).sqrt()
    }

    pub fn amplitude_uncertainty(&self) -> f64 {
        self.covariance[0].max(0.0).sqrt()
    }
}

/// Moments-based initial guess for a single Gaussian peak.
fn gaussian_initial_guess(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let mut amp = f64::NEG_INFINITY;
    let mut center = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        if y > amp {
            amp = y;
            center = x;
        }
    }
    // Second moment of the positive part around the peak.
    let mut w = 0.0;
    let mut m2 = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        let v = y.max(0.0);
        w += v;
        m2 += v * (x - center) * (x - center);
    }
    let span = xs.last().copied().unwrap_or(1.0) - xs.first().copied().unwrap_or(0.0);
    let sigma = if w > 0.0 && m2 > 0.0 { (m2 / w).sqrt() } else { span.abs() / 4.0 };
    (amp, center, sigma.max(span.abs() * 1e-6))
}

/// Least-squares Gaussian fit with a deterministic moments-based start.
pub fn fit_gaussian(xs: &[f64], ys: &[f64]) -> Result<GaussianFit> {
    if xs.len() < 5 {
        return Err(Error::FitFailure("need at least 5 samples spanning the peak".into()));
    }
    let (a0, mu0, s0) = gaussian_initial_guess(xs, ys);
    if !(a0.is_finite() && a0 != 0.0) {
        return Err(Error::FitFailure("flat or invalid samples".into()));
    }
    let fit = levenberg_marquardt(&GaussianModel, xs, ys, &[a0, mu0, s0], &FitOptions::default())?;
    let mut covariance = [0.0; 9];
    covariance.copy_from_slice(&fit.covariance);
    Ok(GaussianFit {
        amplitude: fit.params[0],
        center: fit.params[1],
        sigma: fit.params[2].abs(),
        covariance,
        residual_ss: fit.residual_ss,
    })
}

/// Exact least-squares parabola `y = a x^2 + b x + c`.
/// Returns coefficients and their covariance (row-major 3x3, order a, b, c).
pub fn fit_parabola(xs: &[f64], ys: &[f64]) -> Result<([f64; 3], [f64; 9])> {
    let m = xs.len();
    if m < 4 {
        return Err(Error::FitFailure("need at least 4 points for a quadratic fit".into()));
    }
    let mut ata = [0.0; 9];
    let mut atb = [0.0; 3];
    for (&x, &y) in xs.iter().zip(ys) {
        let row = [x * x, x, 1.0];
        for i in 0..3 {
            atb[i] += row[i] * y;
            for j in 0..3 {
                ata[i * 3 + j] += row[i] * row[j];
            }
        }
    }
    let mut a = ata;
    let mut coef = atb;
    if !solve_inplace(&mut a, &mut coef, 3) {
        return Err(Error::FitFailure("degenerate abscissae for quadratic fit".into()));
    }
    let ss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let r = y - (coef[0] * x * x + coef[1] * x + coef[2]);
            r * r
        })
        .sum();
    let variance = ss / (m as f64 - 3.0).max(1.0);
    let mut covariance = [0.0; 9];
    for col in 0..3 {
        let mut lhs = ata;
        let mut e = [0.0; 3];
        e[col] = 1.0;
        if solve_inplace(&mut lhs, &mut e, 3) {
            for row in 0..3 {
                covariance[row * 3 + col] = e[row] * variance;
            }
        }
    }
    Ok((coef, covariance))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_gaussian_recovered() {
        let xs: Vec<f64> = (0..101).map(|i| -5.0 + 0.1 * i as f64).collect();
        let ys: Vec<f64> =
            xs.iter().map(|&x| 0.7 * (-(x - 0.3) * (x - 0.3) / (2.0 * 1.2 * 1.2)).exp()).collect();
        let fit = fit_gaussian(&xs, &ys).unwrap();
        assert!((fit.amplitude - 0.7).abs() < 1e-8);
        assert!((fit.center - 0.3).abs() < 1e-8);
        assert!((fit.sigma - 1.2).abs() < 1e-8);
    }

    #[test]
    fn too_few_samples_rejected() {
        assert!(fit_gaussian(&[0.0, 1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn parabola_exact() {
        let xs = [-2.0, -1.0, 0.0, 1.0, 2.0];
        let ys: Vec<f64> = xs.iter().map(|&x| 2.0 * x * x - 3.0 * x + 0.5).collect();
        let (coef, _) = fit_parabola(&xs, &ys).unwrap();
        assert!((coef[0] - 2.0).abs() < 1e-12);
        assert!((coef[1] + 3.0).abs() < 1e-12);
        assert!((coef[2] - 0.5).abs() < 1e-12);
    }
}
