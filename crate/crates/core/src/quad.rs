//! Gauss-Legendre quadrature, including the adaptive tensor-product rule used
//! for thermal ensemble averages.

use crate::error::{Error, Result};

/// Nodes and weights of the `n`-point Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-like initial guess, refined by Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        let (_, d) = legendre(n, 0.0);
        nodes[n / 2] = 0.0;
        weights[n / 2] = 2.0 / (d * d);
    }
    (nodes, weights)
}

/// Value and derivative of the Legendre polynomial P_n at x.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Fixed-order integral of `f` over `[a, b]`.
pub fn integrate_1d<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let (xs, ws) = gauss_legendre(n);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    xs.iter().zip(&ws).map(|(&x, &w)| w * f(mid + half * x)).sum::<f64>() * half
}

fn product_3d<F: Fn(f64, f64, f64) -> f64>(f: &F, half: [f64; 3], n: usize) -> f64 {
    let (xs, ws) = gauss_legendre(n);
    let mut acc = 0.0;
    for (i, &xi) in xs.iter().enumerate() {
        let x = xi * half[0];
        let wx = ws[i] * half[0];
        for (j, &xj) in xs.iter().enumerate() {
            let y = xj * half[1];
            let wxy = wx * ws[j] * half[1];
            for (k, &xk) in xs.iter().enumerate() {
                let z = xk * half[2];
                acc += wxy * ws[k] * half[2] * f(x, y, z);
            }
        }
    }
    acc
}

/// Adaptive tensor-product integral of `f` over the centered box with
/// half-widths `half`. The order per axis doubles until two successive rules
/// agree within `abs_tol`.
pub fn adaptive_product_3d<F: Fn(f64, f64, f64) -> f64>(
    f: F,
    half: [f64; 3],
    abs_tol: f64,
) -> Result<f64> {
    let mut prev = product_3d(&f, half, 12);
    for n in [24, 48, 96] {
        let next = product_3d(&f, half, n);
        if (next - prev).abs() <= abs_tol {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::QuadratureFailure(format!(
        "tensor rule did not reach abs tol {abs_tol:.1e} by n = 96 per axis"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nodes_integrate_polynomials_exactly() {
        // 8-point rule is exact through degree 15.
        let v = integrate_1d(|x| x.powi(14), -1.0, 1.0, 8);
        assert!((v - 2.0 / 15.0).abs() < 1e-14);
    }

    #[test]
    fn gaussian_integral_1d() {
        let v = integrate_1d(|x| (-x * x / 2.0).exp(), -8.0, 8.0, 64);
        assert!((v - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn product_rule_gaussian_3d() {
        let f = |x: f64, y: f64, z: f64| (-(x * x + y * y + z * z) / 2.0).exp();
        let v = adaptive_product_3d(f, [6.0, 6.0, 6.0], 1e-8).unwrap();
        let exact = (2.0 * std::f64::consts::PI).powf(1.5) * {
            // correction for the +-6 sigma truncation is below the tolerance
            1.0
        };
        assert!((v - exact).abs() < 1e-6, "v = {v}, exact = {exact}");
    }
}
