//! Adaptive Dormand–Prince 5(4) integration for small complex systems.

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    pub h_init: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-12,
            atol: 1e-14,
            max_steps: 2_000_000,
            h_init: 1e-3,
        }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

type State<const N: usize> = [Complex64; N];

fn axpy<const N: usize>(y: &State<N>, h: f64, terms: &[(f64, &State<N>)]) -> State<N> {
    let mut out = *y;
    for (c, k) in terms {
        let s = h * c;
        for i in 0..N {
            out[i] += k[i] * s;
        }
    }
    out
}

/// Integrates `y' = f(x, y)` from `(x0, y0)` and returns the state at every
/// point of `outputs`, which must be ordered in the direction of integration.
/// Steps are clipped so the integrator lands exactly on each output point.
pub fn solve<const N: usize, F>(
    mut f: F,
    x0: f64,
    y0: State<N>,
    outputs: &[f64],
    opts: OdeOptions,
) -> Result<Vec<State<N>>>
where
    F: FnMut(f64, &State<N>) -> State<N>,
{
    let mut result = Vec::with_capacity(outputs.len());
    if outputs.is_empty() {
        return Ok(result);
    }
    let dir = if outputs[outputs.len() - 1] >= x0 { 1.0 } else { -1.0 };
    let mut x = x0;
    let mut y = y0;
    let mut k1 = f(x, &y);
    let mut h = opts.h_init.abs();
    let mut steps = 0usize;
    for &target in outputs {
        if (target - x) * dir < -1e-14 * (1.0 + x.abs()) {
            return Err(Error::Ode(format!("output {target} is behind the integrator at {x}")));
        }
        while (target - x) * dir > 0.0 {
            steps += 1;
            if steps > opts.max_steps {
                return Err(Error::Ode(format!("step budget exhausted at x = {x}")));
            }
            let remaining = (target - x).abs();
            let clipped = h >= remaining;
            let hs = if clipped { remaining } else { h } * dir;

            let k2 = f(x + C2 * hs, &axpy(&y, hs, &[(A21, &k1)]));
            let k3 = f(x + C3 * hs, &axpy(&y, hs, &[(A31, &k1), (A32, &k2)]));
            let k4 = f(x + C4 * hs, &axpy(&y, hs, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
            let k5 = f(
                x + C5 * hs,
                &axpy(&y, hs, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
            );
            let k6 = f(
                x + hs,
                &axpy(&y, hs, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
            );
            let y_new = axpy(&y, hs, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
            let k7 = f(x + hs, &y_new);

            let mut err_sq = 0.0;
            for i in 0..N {
                let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * hs;
                let scale = opts.atol + opts.rtol * y[i].norm().max(y_new[i].norm());
                err_sq += (e.norm() / scale).powi(2);
            }
            let err = (err_sq / N as f64).sqrt();
            if !err.is_finite() {
                return Err(Error::Ode(format!("non-finite state at x = {x}")));
            }
            if err <= 1.0 {
                x = if clipped { target } else { x + hs };
                y = y_new;
                k1 = k7;
                let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                // a clipped step says nothing about the natural step size
                if !clipped || grow < 1.0 {
                    h = hs.abs() * grow;
                }
            } else {
                h = hs.abs() * (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
                if h < 1e-14 * (1.0 + x.abs()) {
                    return Err(Error::Ode(format!("step size collapsed at x = {x}")));
                }
            }
        }
        result.push(y);
    }
    Ok(result)
}

/// Convenience wrapper returning only the final state.
pub fn solve_to<const N: usize, F>(f: F, x0: f64, y0: State<N>, x1: f64, opts: OdeOptions) -> Result<State<N>>
where
    F: FnMut(f64, &State<N>) -> State<N>,
{
    Ok(solve(f, x0, y0, &[x1], opts)?[0])
}

/// Real-valued variant of [`solve`] for systems whose size is only known at
/// run time. Returns the state and its derivative at every output point.
pub fn solve_real<F>(
    mut f: F,
    x0: f64,
    y0: &[f64],
    outputs: &[f64],
    opts: OdeOptions,
) -> Result<Vec<(Vec<f64>, Vec<f64>)>>
where
    F: FnMut(f64, &[f64]) -> Vec<f64>,
{
    let n = y0.len();
    let mut result = Vec::with_capacity(outputs.len());
    if outputs.is_empty() {
        return Ok(result);
    }
    let comb = |y: &[f64], h: f64, terms: &[(f64, &Vec<f64>)]| -> Vec<f64> {
        let mut out = y.to_vec();
        for (c, k) in terms {
            for i in 0..n {
                out[i] += h * c * k[i];
            }
        }
        out
    };
    let dir = if outputs[outputs.len() - 1] >= x0 { 1.0 } else { -1.0 };
    let mut x = x0;
    let mut y = y0.to_vec();
    let mut k1 = f(x, &y);
    let mut h = opts.h_init.abs();
    let mut steps = 0usize;
    for &target in outputs {
        if (target - x) * dir < -1e-14 * (1.0 + x.abs()) {
            return Err(Error::Ode(format!("output {target} is behind the integrator at {x}")));
        }
        while (target - x) * dir > 0.0 {
            steps += 1;
            if steps > opts.max_steps {
                return Err(Error::Ode(format!("step budget exhausted at x = {x}")));
            }
            let remaining = (target - x).abs();
            let clipped = h >= remaining;
            let hs = if clipped { remaining } else { h } * dir;
            let k2 = f(x + C2 * hs, &comb(&y, hs, &[(A21, &k1)]));
            let k3 = f(x + C3 * hs, &comb(&y, hs, &[(A31, &k1), (A32, &k2)]));
            let k4 = f(x + C4 * hs, &comb(&y, hs, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
            let k5 = f(x + C5 * hs, &comb(&y, hs, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
            let k6 = f(
                x + hs,
                &comb(&y, hs, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
            );
            let y_new = comb(&y, hs, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
            let k7 = f(x + hs, &y_new);
            let mut err_sq = 0.0;
            for i in 0..n {
                let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * hs;
                let scale = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
                err_sq += (e / scale).powi(2);
            }
            let err = (err_sq / n.max(1) as f64).sqrt();
            if !err.is_finite() {
                return Err(Error::Ode(format!("non-finite state at x = {x}")));
            }
            if err <= 1.0 {
                x = if clipped { target } else { x + hs };
                y = y_new;
                k1 = k7;
                let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if !clipped || grow < 1.0 {
                    h = hs.abs() * grow;
                }
            } else {
                h = hs.abs() * (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
                if h < 1e-14 * (1.0 + x.abs()) {
                    return Err(Error::Ode(format!("step size collapsed at x = {x}")));
                }
            }
        }
        result.push((y.clone(), k1.clone()));
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_phase() {
        // y'' = -y, complex exponential solution
        let y0 = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)];
        let out = solve(
            |_, y| [y[1], -y[0]],
            0.0,
            y0,
            &[1.0, 10.0, 30.0],
            OdeOptions::default(),
        )
        .unwrap();
        for (x, y) in [1.0f64, 10.0, 30.0].iter().zip(&out) {
            let exact = Complex64::new(0.0, *x).exp();
            assert!((y[0] - exact).norm() < 1e-9, "x={x}: {}", (y[0] - exact).norm());
        }
    }

    #[test]
    fn backward_integration_of_growing_mode() {
        // y' = -2 y integrated from 5 back to 0 grows like e^{10}
        let out = solve_to(|_, y| [y[0] * -2.0], 5.0, [Complex64::new(1.0, 0.0)], 0.0, OdeOptions::default()).unwrap();
        assert!((out[0].re / 10f64.exp() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn real_system_matches_rotation() {
        let xs: Vec<f64> = (1..=4).map(|i| i as f64).collect();
        let out = solve_real(|_, y| vec![-y[1], y[0]], 0.0, &[1.0, 0.0], &xs, OdeOptions::default()).unwrap();
        for (x, (y, dy)) in xs.iter().zip(&out) {
            assert!((y[0] - x.cos()).abs() < 1e-10 && (y[1] - x.sin()).abs() < 1e-10);
            assert!((dy[0] + x.sin()).abs() < 1e-10);
        }
    }
}
