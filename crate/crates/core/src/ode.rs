//! Adaptive Dormand-Prince RK45 integrator for small fixed-size systems.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    /// Relative tolerance of the embedded error estimate.
    pub rtol: f64,
    /// Absolute tolerance floor.
    pub atol: f64,
    /// Hard cap on accepted + rejected steps.
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-8, atol: 1e-10, max_steps: 1_000_000 }
    }
}

// Dormand-Prince 5(4) tableau.
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrate `dy/dt = f(t, y)` from `t0` to `t1` with an observer called at
/// every accepted step.
pub fn integrate_observed<const N: usize, F, O>(
    mut f: F,
    t0: f64,
    t1: f64,
    y0: [f64; N],
    opts: &OdeOptions,
    mut observe: O,
) -> Result<[f64; N]>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
    O: FnMut(f64, &[f64; N]),
{
    assert!(t1 >= t0, "integration runs forward in time");
    let span = t1 - t0;
    if span == 0.0 {
        return Ok(y0);
    }
    let mut t = t0;
    let mut y = y0;
    let mut h = span / 100.0;
    let h_min = span * 1e-14;
    let mut k = [[0.0; N]; 7];
    k[0] = f(t, &y);
    let mut steps = 0usize;

    while t < t1 {
        if steps >= opts.max_steps {
            return Err(Error::IntegrationFailure(format!(
                "step budget of {} exhausted at t = {t:.6e}",
                opts.max_steps
            )));
        }
        steps += 1;
        if t + h > t1 {
            h = t1 - t;
        }

        for stage in 0..6 {
            let mut ys = y;
            for (j, kj) in k.iter().enumerate().take(stage + 1) {
                let a = A[stage][j];
                if a != 0.0 {
                    for n in 0..N {
                        ys[n] += h * a * kj[n];
                    }
                }
            }
            k[stage + 1] = f(t + C[stage] * h, &ys);
        }

        let mut y5 = y;
        let mut y4 = y;
        for (j, kj) in k.iter().enumerate() {
            for n in 0..N {
                y5[n] += h * B5[j] * kj[n];
                y4[n] += h * B4[j] * kj[n];
            }
        }

        // Weighted RMS error estimate.
        let mut err = 0.0;
        for n in 0..N {
            let scale = opts.atol + opts.rtol * y[n].abs().max(y5[n].abs());
            let e = (y5[n] - y4[n]) / scale;
            err += e * e;
        }
        let err = (err / N as f64).sqrt();

        if err <= 1.0 {
            t += h;
            y = y5;
            // FSAL: stage 7 of the accepted step seeds the next one.
            k[0] = k[6];
            observe(t, &y);
        }

        let factor = if err > 0.0 {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        } else {
            5.0
        };
        h *= factor;
        if h < h_min && t < t1 {
            return Err(Error::IntegrationFailure(format!(
                "step size underflow at t = {t:.6e} (h = {h:.3e})"
            )));
        }
    }
    Ok(y)
}

/// Integrate without an observer.
pub fn integrate<const N: usize, F>(
    f: F,
    t0: f64,
    t1: f64,
    y0: [f64; N],
    opts: &OdeOptions,
) -> Result<[f64; N]>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    integrate_observed(f, t0, t1, y0, opts, |_, _| {})
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let y = integrate(|_, y: &[f64; 1]| [-y[0]], 0.0, 1.0, [1.0], &OdeOptions::default())
            .unwrap();
        assert!((y[0] - (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn harmonic_oscillator_energy_conserved() {
        let opts = OdeOptions { rtol: 1e-10, atol: 1e-12, ..Default::default() };
        let y = integrate(
            |_, y: &[f64; 2]| [y[1], -y[0]],
            0.0,
            20.0 * std::f64::consts::PI,
            [1.0, 0.0],
            &opts,
        )
        .unwrap();
        let energy = y[0] * y[0] + y[1] * y[1];
        assert!((energy - 1.0).abs() < 1e-8, "energy drift {}", (energy - 1.0).abs());
        assert!((y[0] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn step_budget_reported() {
        let opts = OdeOptions { max_steps: 3, ..Default::default() };
        let r = integrate(|_, y: &[f64; 1]| [y[0]], 0.0, 10.0, [1.0], &opts);
        assert!(matches!(r, Err(Error::IntegrationFailure(_))));
    }
}
