//! Conserved quantities `τ_k` of the KdV hierarchy, defined by
//! `log T(z) ~ i sqrt(z) Σ τ_k z^{-k}`, computed along three routes:
//!
//! * the `χ_n` recursion, `τ_k = ∫ (χ_{2k-1} - χ_{q,2k-1}) / ((-1)^k 2^{2k-1}) dx`;
//! * a least-squares fit of `log T(iy)` for large `y`;
//! * the trace formula `τ_k = 2i Σ_j ∫_{E(ρ_j)}^{ρ_j} ω_{p∞,2k-2} - π^{-1} ∫_Σ log|T|^2 ω_{p∞,2k-2}`.
//!
//! Also a split-step pseudo-spectral integrator for `v_t = -v_xxx + 6 v v_x`
//! on a periodic box, used to check that the `τ_k` are conserved.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::reconstruction::Reconstruction;
use crate::riemann_surface::{normalize_differential, DifferentialKind};
use crate::scattering::ScatteringProblem;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Largest recursion depth supported by the derivative operators.
pub const MAX_CHI: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Derivative {
    /// Fourier differentiation on the periodic extension of the grid.
    Spectral,
    /// Central finite differences of the given even order (2, 4, 6 or 8).
    Stencil(usize),
}

/// Spectral first derivative on a periodic grid.
struct SpectralOp {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    wavenumbers: Vec<f64>,
}

impl SpectralOp {
    fn new(n: usize, length: f64) -> Self {
        let mut planner = FftPlanner::new();
        let wavenumbers = (0..n)
            .map(|j| {
                let m = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
                // the Nyquist mode of an odd derivative is dropped
                if n % 2 == 0 && j == n / 2 {
                    0.0
                } else {
                    2.0 * PI * m / length
                }
            })
            .collect();
        SpectralOp {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            wavenumbers,
        }
    }

    fn to_fourier(&self, f: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = f.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.forward.process(&mut buf);
        buf
    }

    fn to_physical(&self, mut buf: Vec<Complex64>) -> Vec<f64> {
        self.inverse.process(&mut buf);
        let n = buf.len() as f64;
        buf.iter().map(|c| c.re / n).collect()
    }

    fn derivative(&self, f: &[f64]) -> Vec<f64> {
        let mut buf = self.to_fourier(f);
        for (c, k) in buf.iter_mut().zip(&self.wavenumbers) {
            *c *= I * k;
        }
        self.to_physical(buf)
    }
}

fn stencil(order: usize) -> Result<&'static [f64]> {
    Ok(match order {
        2 => &[0.5],
        4 => &[2.0 / 3.0, -1.0 / 12.0],
        6 => &[3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0],
        8 => &[4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0],
        _ => return Err(Error::StencilOrder(format!("unsupported stencil order {order}"))),
    })
}

/// Central difference; the outermost `order/2` points are left at 0 and
/// excluded later through the valid range.
fn stencil_derivative(f: &[f64], h: f64, coeffs: &[f64]) -> Vec<f64> {
    let r = coeffs.len();
    let n = f.len();
    let mut out = vec![0.0; n];
    for i in r..n.saturating_sub(r) {
        let mut acc = 0.0;
        for (j, c) in coeffs.iter().enumerate() {
            acc += c * (f[i + j + 1] - f[i - j - 1]);
        }
        out[i] = acc / h;
    }
    out
}

/// `χ_1..χ_N` for `V` and `V_q` on a common uniform grid.
#[derive(Debug, Clone, Serialize)]
pub struct ChiSequence {
    pub xs: Vec<f64>,
    pub h: f64,
    pub chi: Vec<Vec<f64>>,
    pub chi_q: Vec<Vec<f64>>,
    pub derivative: Derivative,
    /// Index range `[lo, hi)` on which all `χ_n` are valid.
    pub valid: (usize, usize),
}

fn recursion(v: &[f64], n: usize, d: &dyn Fn(&[f64]) -> Vec<f64>) -> Vec<Vec<f64>> {
    let mut chi: Vec<Vec<f64>> = vec![v.to_vec()];
    for k in 1..n {
        let dk = d(&chi[k - 1]);
        let mut next: Vec<f64> = dk.iter().map(|x| -x).collect();
        for m in 1..k {
            for (i, val) in next.iter_mut().enumerate() {
                *val -= chi[k - m - 1][i] * chi[m - 1][i];
            }
        }
        chi.push(next);
    }
    chi
}

/// `χ_{n+1} = -χ_n' - Σ_{m=1}^{n-1} χ_{n-m} χ_m`, `χ_1 = V`, for `V` and `V_q`
/// sampled on the uniform grid `xs`.
pub fn chi_recursion(xs: &[f64], v: &[f64], vq: &[f64], n: usize, derivative: Derivative) -> Result<ChiSequence> {
    if n == 0 || n > MAX_CHI {
        return Err(Error::StencilOrder(format!(
            "χ_{n} needs {} derivatives; at most {} are supported",
            n.saturating_sub(1),
            MAX_CHI - 1
        )));
    }
    if xs.len() != v.len() || xs.len() != vq.len() || xs.len() < 16 {
        return Err(Error::Domain("grid and samples must have equal length >= 16".into()));
    }
    let h = xs[1] - xs[0];
    let len = xs.len();
    let (chi, chi_q, valid) = match derivative {
        Derivative::Spectral => {
            let op = SpectralOp::new(len, h * len as f64);
            let d = |f: &[f64]| op.derivative(f);
            (recursion(v, n, &d), recursion(vq, n, &d), (0, len))
        }
        Derivative::Stencil(order) => {
            let coeffs = stencil(order)?;
            let d = |f: &[f64]| stencil_derivative(f, h, coeffs);
            let lost = coeffs.len() * (n - 1);
            if 2 * lost >= len {
                return Err(Error::StencilOrder("grid too short for the requested recursion depth".into()));
            }
            (recursion(v, n, &d), recursion(vq, n, &d), (lost, len - lost))
        }
    };
    Ok(ChiSequence {
        xs: xs.to_vec(),
        h,
        chi,
        chi_q,
        derivative,
        valid,
    })
}

impl ChiSequence {
    /// `∫ (χ_n - χ_{q,n}) dx` (trapezoid rule over the valid range).
    pub fn difference_integral(&self, n: usize) -> Result<f64> {
        if n == 0 || n > self.chi.len() {
            return Err(Error::Domain(format!("χ_{n} not computed")));
        }
        let (lo, hi) = self.valid;
        let f: Vec<f64> = (lo..hi).map(|i| self.chi[n - 1][i] - self.chi_q[n - 1][i]).collect();
        let inner: f64 = f.iter().sum();
        let ends = if self.derivative == Derivative::Spectral {
            0.0
        } else {
            0.5 * (f[0] + f[f.len() - 1])
        };
        Ok(self.h * (inner - ends))
    }
}

/// Uniform grid covering the perturbation window with margins, plus `V`
/// and `V_q` on it. A constant background uses spectral differentiation,
/// otherwise the eighth order stencil.
pub fn chi_from_problem(problem: &ScatteringProblem, n: usize) -> Result<ChiSequence> {
    let (lo, hi) = problem.window();
    let bands = problem.background().bands();
    let constant = bands.genus() == 0;
    let margin = 10.0;
    let h = 0.01_f64.min(0.05 * problem.perturbation().decay_length.max(0.05));
    let (a, b) = (lo - margin, hi + margin);
    let derivative = if constant { Derivative::Spectral } else { Derivative::Stencil(8) };
    let pad = if constant { 0 } else { 4 * n };
    let mut len = ((b - a) / h).ceil() as usize + 2 * pad;
    if constant {
        len = len.next_power_of_two();
    }
    let x0 = a - pad as f64 * h;
    let xm = problem.background().x_max();
    let xs: Vec<f64> = (0..len).map(|i| x0 + h * i as f64).collect();
    if xs.iter().any(|x| x.abs() > xm) {
        return Err(Error::Window(format!("χ grid [{x0}, {}] leaves [-{xm}, {xm}]", xs[len - 1])));
    }
    let vq: Vec<f64> = xs.iter().map(|&x| problem.background().potential(x)).collect::<Result<_>>()?;
    let v: Vec<f64> = xs.iter().zip(&vq).map(|(&x, q)| q + problem.perturbation().vhat(x)).collect();
    chi_recursion(&xs, &v, &vq, n, derivative)
}

/// `i sqrt(z) + Σ_{n<=N} χ_n(x_i) / (2i sqrt(z))^n`, the large-`z` expansion
/// of the Weyl function `m_+(z, x_i)`.
pub fn weyl_expansion(chi: &ChiSequence, i: usize, z: Complex64) -> Complex64 {
    let root = I * z.sqrt();
    let k = 2.0 * root;
    let mut sum = root;
    let mut pow = Complex64::new(1.0, 0.0);
    for c in &chi.chi {
        pow /= k;
        sum += c[i] * pow;
    }
    sum
}

/// `τ_k` from the `χ` recursion.
pub fn tau_integral(chi: &ChiSequence, k: usize) -> Result<f64> {
    if k == 0 || 2 * k - 1 > chi.chi.len() {
        return Err(Error::Domain(format!("τ_{k} needs χ_{}", 2 * k - 1)));
    }
    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
    Ok(chi.difference_integral(2 * k - 1)? / (sign * 2f64.powi(2 * k as i32 - 1)))
}

/// Coefficients of `log T(iy)` fitted on `y ∈ [y_min, y_max]`.
#[derive(Debug, Clone, Serialize)]
pub struct TauFit {
    pub tau: Vec<f64>,
    /// Coefficients of the even powers `z^{-m}` (`m = 1, 2, ...`), which vanish in theory.
    pub even: Vec<f64>,
    pub condition: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub y_min: f64,
    pub y_max: f64,
    pub points: usize,
    /// Number of odd terms in the model (at least the number of reported `τ_k`).
    pub terms: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            y_min: 1e2,
            y_max: 1e6,
            points: 40,
            terms: 5,
        }
    }
}

/// Least squares in real unknowns for complex data.
fn complex_lstsq(rows: &[Vec<Complex64>], rhs: &[Complex64]) -> Result<(Vec<f64>, f64, f64)> {
    let m = rows.len();
    let n = rows[0].len();
    let mut a = DMatrix::<f64>::zeros(2 * m, n);
    let mut b = DVector::<f64>::zeros(2 * m);
    for i in 0..m {
        for j in 0..n {
            a[(2 * i, j)] = rows[i][j].re;
            a[(2 * i + 1, j)] = rows[i][j].im;
        }
        b[2 * i] = rhs[i].re;
        b[2 * i + 1] = rhs[i].im;
    }
    // column scaling before the SVD
    let scales: Vec<f64> = (0..n).map(|j| a.column(j).norm().max(1e-300)).collect();
    for j in 0..n {
        let s = scales[j];
        a.column_mut(j).unscale_mut(s);
    }
    let svd = a.clone().svd(true, true);
    let sv = &svd.singular_values;
    let cond = sv.max() / sv.min();
    if !cond.is_finite() || cond > 1e12 {
        return Err(Error::IllConditionedFit(cond));
    }
    let x = svd.solve(&b, 1e-15).map_err(|e| Error::Domain(e.to_string()))?;
    let resid = (&a * &x - &b).norm();
    Ok(((0..n).map(|j| x[j] / scales[j]).collect(), cond, resid))
}

/// `τ_1..τ_k` from a fit of `log T(iy) = i sqrt(z) Σ τ_m z^{-m}`; a second
/// fit with all powers of `z^{-1/2}` reports the even coefficients.
pub fn tau_from_log_t(problem: &ScatteringProblem, k: usize, opts: FitOptions) -> Result<TauFit> {
    if k > opts.terms {
        return Err(Error::IllConditionedFit(f64::INFINITY));
    }
    let n = opts.points;
    let zs: Vec<Complex64> = (0..n)
        .map(|i| {
            let t = i as f64 / (n - 1) as f64;
            Complex64::new(0.0, opts.y_min * (opts.y_max / opts.y_min).powf(t))
        })
        .collect();
    let logs: Vec<Result<Complex64>> = zs.par_iter().map(|&z| Ok(problem.t(z)?.ln())).collect();
    let logs: Vec<Complex64> = logs.into_iter().collect::<Result<_>>()?;
    let odd_rows: Vec<Vec<Complex64>> = zs
        .iter()
        .map(|z| (1..=opts.terms).map(|m| I * z.sqrt() * z.powi(-(m as i32))).collect())
        .collect();
    let (tau, cond, resid) = complex_lstsq(&odd_rows, &logs)?;
    // i sqrt(z) z^{-j/2}: even j carry τ_{j/2}, odd j = 2m+1 the vanishing z^{-m} terms
    let all_rows: Vec<Vec<Complex64>> = zs
        .iter()
        .map(|z| (1..=2 * opts.terms).map(|j| I * z.sqrt().powi(1 - j as i32)).collect())
        .collect();
    let even = match complex_lstsq(&all_rows, &logs) {
        Ok((c, _, _)) => (1..=k).map(|m| c[2 * m]).collect(),
        Err(_) => Vec::new(),
    };
    Ok(TauFit {
        tau: tau[..k].to_vec(),
        even,
        condition: cond,
        residual: resid,
    })
}

/// Fitted `c` in `T(iy) - 1 ≈ c / sqrt(iy)` on `y ∈ [y_min, y_max]`, with
/// correction terms in `(iy)^{-1}` and `(iy)^{-3/2}`.
pub fn large_z_coefficient(problem: &ScatteringProblem, y_min: f64, y_max: f64, points: usize) -> Result<Complex64> {
    let zs: Vec<Complex64> = (0..points)
        .map(|i| {
            let t = i as f64 / (points - 1) as f64;
            Complex64::new(0.0, y_min * (y_max / y_min).powf(t))
        })
        .collect();
    let vals: Vec<Result<Complex64>> = zs.par_iter().map(|&z| Ok(problem.t(z)? - 1.0)).collect();
    let vals: Vec<Complex64> = vals.into_iter().collect::<Result<_>>()?;
    // complex unknowns: split each into real and imaginary parts
    let rows: Vec<Vec<Complex64>> = zs
        .iter()
        .map(|z| {
            let a = 1.0 / z.sqrt();
            let b = 1.0 / z;
            let c = a * b;
            vec![a, I * a, b, I * b, c, I * c]
        })
        .collect();
    let (c, _, _) = complex_lstsq(&rows, &vals)?;
    Ok(Complex64::new(c[0], c[1]))
}

/// `τ_k` by the trace formula with eigenvalues and `|T|^2 = 1 - |R|^2` data.
pub fn tau_trace_formula(rec: &Reconstruction, k: usize) -> Result<Complex64> {
    let omega = normalize_differential(rec.bands(), DifferentialKind::SecondKind { k })?;
    let eig = rec.eigenvalue_integrals(&omega)?;
    let sig = rec.sigma_integral(&omega)?;
    Ok(2.0 * I * eig - sig / PI)
}

/// `τ_1..τ_K` along the three routes with their pairwise discrepancies.
#[derive(Debug, Clone, Serialize)]
pub struct InvariantsReport {
    pub tau_integral: Vec<f64>,
    pub tau_log_t: Vec<f64>,
    pub tau_trace: Vec<f64>,
    /// Imaginary parts of the trace-formula values (zero in theory).
    pub tau_trace_imag: Vec<f64>,
    pub even_integrals: Vec<f64>,
    pub even_fit: Vec<f64>,
    pub fit_condition: f64,
    /// `max_k |a_k - b_k| / max(1, |a_k|)` for (integral, log T) and (integral, trace).
    pub discrepancy_log_t: f64,
    pub discrepancy_trace: f64,
}

pub fn invariants_report(problem: &ScatteringProblem, rec: &Reconstruction, k: usize) -> Result<InvariantsReport> {
    let chi = chi_from_problem(problem, 2 * k)?;
    let tau_integral: Vec<f64> = (1..=k).map(|j| tau_integral(&chi, j)).collect::<Result<_>>()?;
    let even_integrals: Vec<f64> = (1..=k).map(|j| chi.difference_integral(2 * j)).collect::<Result<_>>()?;
    let fit = tau_from_log_t(problem, k, FitOptions::default())?;
    let trace: Vec<Complex64> = (1..=k).map(|j| tau_trace_formula(rec, j)).collect::<Result<_>>()?;
    let disc = |other: &[f64]| {
        tau_integral
            .iter()
            .zip(other)
            .map(|(a, b)| (a - b).abs() / a.abs().max(1.0))
            .fold(0.0, f64::max)
    };
    let tau_trace: Vec<f64> = trace.iter().map(|c| c.re).collect();
    Ok(InvariantsReport {
        discrepancy_log_t: disc(&fit.tau),
        discrepancy_trace: disc(&tau_trace),
        tau_trace_imag: trace.iter().map(|c| c.im).collect(),
        tau_integral,
        tau_log_t: fit.tau,
        tau_trace,
        even_integrals,
        even_fit: fit.even,
        fit_condition: fit.condition,
    })
}

/// Settings of the periodic KdV integrator.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct KdvOptions {
    pub n: usize,
    pub length: f64,
    pub dt: f64,
    /// Relative spectral energy allowed in the dealiased band before giving up.
    pub alias_tol: f64,
}

impl Default for KdvOptions {
    fn default() -> Self {
        KdvOptions {
            n: 1024,
            length: 100.0,
            dt: 1e-3,
            alias_tol: 1e-10,
        }
    }
}

impl KdvOptions {
    pub fn grid(&self) -> Vec<f64> {
        let h = self.length / self.n as f64;
        (0..self.n).map(|i| -0.5 * self.length + h * i as f64).collect()
    }
}

/// Result of a KdV run: final profile and `τ_1..τ_3` at the recorded times.
#[derive(Debug, Clone, Serialize)]
pub struct KdvRun {
    pub xs: Vec<f64>,
    pub v: Vec<f64>,
    pub times: Vec<f64>,
    pub taus: Vec<[f64; 3]>,
}

impl KdvRun {
    /// Largest relative change of each `τ_k` over the run.
    pub fn drift(&self) -> [f64; 3] {
        let mut out = [0.0; 3];
        let t0 = self.taus[0];
        for t in &self.taus {
            for k in 0..3 {
                out[k] = f64::max(out[k], (t[k] - t0[k]).abs() / t0[k].abs().max(1e-300));
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,tau1,tau2,tau3\n");
        for (t, tau) in self.times.iter().zip(&self.taus) {
            s.push_str(&format!("{t:.10e},{:.16e},{:.16e},{:.16e}\n", tau[0], tau[1], tau[2]));
        }
        s
    }
}

/// `τ_1..τ_3` of a periodic profile against the constant background `e0`.
pub fn periodic_taus(xs: &[f64], v: &[f64], e0: f64) -> Result<[f64; 3]> {
    let vq = vec![e0; v.len()];
    let chi = chi_recursion(xs, v, &vq, 5, Derivative::Spectral)?;
    Ok([tau_integral(&chi, 1)?, tau_integral(&chi, 2)?, tau_integral(&chi, 3)?])
}

struct KdvStepper {
    op: SpectralOp,
    n: usize,
    /// Modes kept by the 2/3 rule.
    keep: Vec<bool>,
}

impl KdvStepper {
    fn new(n: usize, length: f64) -> Self {
        let op = SpectralOp::new(n, length);
        let kmax = (n / 2) as f64;
        let keep = (0..n)
            .map(|j| {
                let m = if j <= n / 2 { j as f64 } else { n as f64 - j as f64 };
                m < 2.0 * kmax / 3.0
            })
            .collect();
        KdvStepper { op, n, keep }
    }

    /// Exact flow of `v_t = -v_xxx` in Fourier space.
    fn linear(&self, vh: &mut [Complex64], tau: f64) {
        for (c, k) in vh.iter_mut().zip(&self.op.wavenumbers) {
            *c *= (I * k * k * k * tau).exp();
        }
    }

    /// Fourier transform of `3 (v^2)_x`, dealiased.
    fn nonlinear_rhs(&self, vh: &[Complex64]) -> Vec<Complex64> {
        let v = self.op.to_physical(vh.to_vec());
        let sq: Vec<f64> = v.iter().map(|x| x * x).collect();
        let mut out = self.op.to_fourier(&sq);
        for ((c, k), keep) in out.iter_mut().zip(&self.op.wavenumbers).zip(&self.keep) {
            *c = if *keep { 3.0 * I * k * *c } else { Complex64::new(0.0, 0.0) };
        }
        out
    }

    /// One RK4 step of `v_t = 6 v v_x`.
    fn nonlinear(&self, vh: &mut Vec<Complex64>, tau: f64) {
        let add = |a: &[Complex64], b: &[Complex64], s: f64| -> Vec<Complex64> {
            a.iter().zip(b).map(|(x, y)| x + y * s).collect()
        };
        let k1 = self.nonlinear_rhs(vh);
        let k2 = self.nonlinear_rhs(&add(vh, &k1, 0.5 * tau));
        let k3 = self.nonlinear_rhs(&add(vh, &k2, 0.5 * tau));
        let k4 = self.nonlinear_rhs(&add(vh, &k3, tau));
        for i in 0..self.n {
            vh[i] += (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) * (tau / 6.0);
        }
    }

    fn strang(&self, vh: &mut Vec<Complex64>, tau: f64) {
        self.linear(vh, 0.5 * tau);
        self.nonlinear(vh, tau);
        self.linear(vh, 0.5 * tau);
    }

    /// Fourth order Yoshida composition of Strang steps.
    fn step(&self, vh: &mut Vec<Complex64>, dt: f64) {
        let c = 2f64.powf(1.0 / 3.0);
        let w1 = 1.0 / (2.0 - c);
        let w0 = -c / (2.0 - c);
        self.strang(vh, w1 * dt);
        self.strang(vh, w0 * dt);
        self.strang(vh, w1 * dt);
    }
}

/// Evolves `v_t = -v_xxx + 6 v v_x` from `v0` (sampled on `opts.grid()`)
/// to `t_end`, recording `τ_1..τ_3` against the constant background `e0`
/// every `record_every` steps.
pub fn kdv_evolve_g0(v0: &[f64], e0: f64, t_end: f64, record_every: usize, opts: KdvOptions) -> Result<KdvRun> {
    if v0.len() != opts.n {
        return Err(Error::Domain("initial data must be sampled on the KdV grid".into()));
    }
    let xs = opts.grid();
    let stepper = KdvStepper::new(opts.n, opts.length);
    let mut vh = stepper.op.to_fourier(v0);
    let steps = (t_end / opts.dt).round().max(0.0) as usize;
    let dt = if steps > 0 { t_end / steps as f64 } else { 0.0 };
    let amp0 = v0.iter().map(|x| (x - e0).abs()).fold(0.0, f64::max).max(1.0);
    let mut times = vec![0.0];
    let mut taus = vec![periodic_taus(&xs, v0, e0)?];
    let check = |vh: &[Complex64], t: f64| -> Result<Vec<f64>> {
        let total: f64 = vh.iter().skip(1).map(|c| c.norm_sqr()).sum();
        let tail: f64 = vh
            .iter()
            .zip(&stepper.keep)
            .filter(|(_, k)| !**k)
            .map(|(c, _)| c.norm_sqr())
            .sum();
        let v = stepper.op.to_physical(vh.to_vec());
        let amp = v.iter().map(|x| (x - e0).abs()).fold(0.0, f64::max);
        if !amp.is_finite() || amp > 1e3 * amp0 {
            return Err(Error::Blowup(t));
        }
        if total > 0.0 && tail > opts.alias_tol * total {
            return Err(Error::Alias(tail / total));
        }
        Ok(v)
    };
    check(&vh, 0.0)?;
    for s in 1..=steps {
        stepper.step(&mut vh, dt);
        if s % record_every.max(1) == 0 || s == steps {
            let t = s as f64 * dt;
            let v = check(&vh, t)?;
            times.push(t);
            taus.push(periodic_taus(&xs, &v, e0)?);
        }
    }
    let v = stepper.op.to_physical(vh);
    Ok(KdvRun { xs, v, times, taus })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::FiniteGapPotential;
    use crate::perturbation::Perturbation;
    use crate::reconstruction::ReconstructionInput;

    fn sech2(x: f64) -> f64 {
        1.0 / x.cosh().powi(2)
    }

    #[test]
    fn chi_matches_explicit_formulas() {
        let n = 1024;
        let l = 40.0;
        let xs: Vec<f64> = (0..n).map(|i| -20.0 + l * i as f64 / n as f64).collect();
        let v: Vec<f64> = xs.iter().map(|&x| -2.0 * sech2(x)).collect();
        let vq = vec![0.0; n];
        // derivatives of -2 sech^2
        let t = |x: f64| x.tanh();
        let v1 = |x: f64| 4.0 * sech2(x) * t(x);
        let v2 = |x: f64| 4.0 * sech2(x) * (1.0 - 3.0 * t(x) * t(x));
        let v3 = |x: f64| -8.0 * sech2(x) * t(x) * (1.0 - 3.0 * t(x) * t(x)) - 24.0 * sech2(x) * sech2(x) * t(x);
        for d in [Derivative::Spectral, Derivative::Stencil(8)] {
            let chi = chi_recursion(&xs, &v, &vq, 5, d).unwrap();
            let (lo, hi) = chi.valid;
            for i in (lo..hi).step_by(37) {
                let x = xs[i];
                if x.abs() > 15.0 {
                    continue;
                }
                let vv = -2.0 * sech2(x);
                assert!((chi.chi[1][i] + v1(x)).abs() < 1e-6, "{d:?} χ2 at {x}");
                assert!((chi.chi[2][i] - (v2(x) - vv * vv)).abs() < 1e-6, "{d:?} χ3 at {x}");
                assert!((chi.chi[3][i] - (-v3(x) + 4.0 * vv * v1(x))).abs() < 1e-5, "{d:?} χ4 at {x}");
            }
        }
        // constant potential
        let c = 0.7;
        let chi = chi_recursion(&xs, &vec![c; n], &vq, 5, Derivative::Spectral).unwrap();
        let i = n / 3;
        assert!((chi.chi[0][i] - c).abs() < 1e-14);
        assert!(chi.chi[1][i].abs() < 1e-13);
        assert!((chi.chi[2][i] + c * c).abs() < 1e-13);
        assert!((chi.chi[4][i] - 2.0 * c * c * c).abs() < 1e-12);
        assert!(matches!(chi_recursion(&xs, &v, &vq, 10, Derivative::Spectral), Err(Error::StencilOrder(_))));
    }

    fn soliton() -> ScatteringProblem {
        ScatteringProblem::new(FiniteGapPotential::free(0.0), Perturbation::from_expression("-2*sech(x)^2").unwrap()).unwrap()
    }

    #[test]
    fn soliton_taus_by_integral() {
        let chi = chi_from_problem(&soliton(), 6).unwrap();
        assert!((tau_integral(&chi, 1).unwrap() - 2.0).abs() < 1e-10);
        assert!((tau_integral(&chi, 2).unwrap() + 2.0 / 3.0).abs() < 1e-10);
        assert!((tau_integral(&chi, 3).unwrap() - 0.4).abs() < 1e-8);
        for m in 1..=3 {
            assert!(chi.difference_integral(2 * m).unwrap().abs() < 1e-10);
        }
    }

    #[test]
    fn weyl_function_matches_recursion() {
        let p = ScatteringProblem::new(FiniteGapPotential::free(0.0), Perturbation::from_expression("0.7*exp(-x^2)").unwrap()).unwrap();
        let chi = chi_from_problem(&p, 5).unwrap();
        let i = chi.xs.iter().position(|&x| x >= 0.3).unwrap();
        for z in [Complex64::new(0.0, 1e4), Complex64::new(-1e4, 0.0)] {
            let (m, _) = p.weyl_m(z, chi.xs[i]).unwrap();
            let e = weyl_expansion(&chi, i, z);
            assert!((m - e).norm() < 1e-4, "{z}: {m} vs {e}");
        }
    }

    #[test]
    fn soliton_taus_by_fit_and_trace() {
        let p = soliton();
        let fit = tau_from_log_t(&p, 3, FitOptions::default()).unwrap();
        let want = [2.0, -2.0 / 3.0, 0.4];
        for k in 0..3 {
            assert!((fit.tau[k] - want[k]).abs() < 1e-4, "{k}: {:?}", fit.tau);
            assert!(fit.even[k].abs() < 1e-3, "{:?}", fit.even);
        }
        let d = p.scattering_data().unwrap();
        let rec = Reconstruction::new(&ReconstructionInput::from_scattering(&d)).unwrap();
        for k in 1..=3 {
            let t = tau_trace_formula(&rec, k).unwrap();
            assert!((t - want[k - 1]).norm() < 1e-6, "{k}: {t}");
        }
    }

    #[test]
    fn flat_profile_is_stationary_and_soliton_translates() {
        let opts = KdvOptions {
            n: 512,
            length: 60.0,
            dt: 2e-3,
            ..Default::default()
        };
        let xs = opts.grid();
        let flat = vec![0.3; opts.n];
        let run = kdv_evolve_g0(&flat, 0.3, 0.1, 10, opts).unwrap();
        assert!(run.v.iter().all(|v| (v - 0.3).abs() < 1e-12));
        let v0: Vec<f64> = xs.iter().map(|&x| -2.0 * sech2(x)).collect();
        let run = kdv_evolve_g0(&v0, 0.0, 0.5, 50, opts).unwrap();
        let defect = xs
            .iter()
            .zip(&run.v)
            .map(|(&x, v)| (v + 2.0 * sech2(x - 2.0)).abs())
            .fold(0.0, f64::max);
        assert!(defect < 1e-4, "{defect}");
        let drift = run.drift();
        assert!(drift.iter().all(|d| *d < 1e-6), "{drift:?}");
    }
}
