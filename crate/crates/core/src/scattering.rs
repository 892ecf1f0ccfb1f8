//! Scattering data of `H = H_q + vhat`.
//!
//! Two independent routes compute `α(z) = W(ψ_-, ψ_+) / W(ψ_{q,-}, ψ_{q,+}) = 1/T(z)`:
//!
//! * the linear route integrates `-ψ'' + (V - z)ψ = 0` together with the
//!   background equation from the ends of the support of `vhat` to `x = 0`,
//!   starting from the pole-free Baker–Akhiezer data
//!   `(H(z,x), H_x(z,x)/2 ± i R^{1/2}(z))`;
//! * the Riccati route integrates `w_± = m_± - m_{q,±}`, for which
//!   `log α = -∫_0^{L} w_+ - ∫_{-L}^0 w_- + log((m_+ + m_-)/(m_{q,+} + m_{q,-}))(0)`.
//!
//! Points of the spectrum are handled as boundary values: a real `λ` on the
//! upper sheet means `λ + i0`, on the lower sheet `λ - i0`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::background::FiniteGapPotential;
use crate::error::{Error, Result};
use crate::ode::{self, OdeOptions};
use crate::perturbation::Perturbation;
use crate::quad::GaussRule;
use crate::riemann_surface::{Sheet, SurfacePoint};

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Side {
    Plus,
    Minus,
}

impl Side {
    fn sign(self) -> f64 {
        match self {
            Side::Plus => 1.0,
            Side::Minus => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ScatteringOptions {
    /// Tail budget `∫_{outside}|vhat|` that decides where Jost solutions start.
    pub tail_tol: f64,
    pub ode: OdeOptions,
    /// Relative exclusion zone around band edges.
    pub edge_exclusion: f64,
    /// Above this `|z - E_0|` (relative to the band scale) the Riccati route is used.
    pub riccati_threshold: f64,
}

impl Default for ScatteringOptions {
    fn default() -> Self {
        ScatteringOptions {
            tail_tol: 1e-13,
            ode: OdeOptions {
                rtol: 1e-12,
                atol: 1e-15,
                max_steps: 5_000_000,
                h_init: 1e-2,
            },
            edge_exclusion: 1e-6,
            riccati_threshold: 400.0,
        }
    }
}

/// Jost solution sampled on a grid.
#[derive(Debug, Clone, Serialize)]
pub struct JostSolution {
    pub z: Complex64,
    pub sheet: Sheet,
    pub side: Side,
    pub xs: Vec<f64>,
    pub values: Vec<Complex64>,
    pub derivatives: Vec<Complex64>,
    /// Bound on the neglected perturbation mass outside the integration window.
    pub tail_error: f64,
}

/// Where an eigenvalue sits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Region {
    BelowSpectrum,
    /// Open gap `(E_{2j-1}, E_{2j})`, 1-based.
    Gap(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Eigenvalue {
    pub value: f64,
    pub region: Region,
}

/// Transmission and reflection coefficients at a band point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandScattering {
    pub lambda: f64,
    pub t: Complex64,
    pub r_plus: Complex64,
    pub r_minus: Complex64,
}

impl BandScattering {
    pub fn unitarity_defect(&self) -> f64 {
        let t2 = self.t.norm_sqr();
        (t2 + self.r_plus.norm_sqr() - 1.0)
            .abs()
            .max((t2 + self.r_minus.norm_sqr() - 1.0).abs())
    }
}

#[derive(Debug, Clone)]
pub struct ScatteringProblem {
    background: FiniteGapPotential,
    perturbation: Perturbation,
    options: ScatteringOptions,
    /// Integration window `[lo, hi]`, always containing 0.
    window: (f64, f64),
}

type Pair = [Complex64; 4];

impl ScatteringProblem {
    pub fn new(background: FiniteGapPotential, perturbation: Perturbation) -> Result<Self> {
        Self::with_options(background, perturbation, ScatteringOptions::default())
    }

    pub fn with_options(background: FiniteGapPotential, perturbation: Perturbation, options: ScatteringOptions) -> Result<Self> {
        let (lo, hi) = perturbation.support(options.tail_tol)?;
        let window = (lo.min(0.0), hi.max(0.0));
        let xm = background.x_max();
        if window.0 < -xm || window.1 > xm {
            return Err(Error::Window(format!(
                "perturbation support [{lo}, {hi}] exceeds the background interval [-{xm}, {xm}]"
            )));
        }
        Ok(ScatteringProblem {
            background,
            perturbation,
            options,
            window,
        })
    }

    pub fn background(&self) -> &FiniteGapPotential {
        &self.background
    }

    pub fn perturbation(&self) -> &Perturbation {
        &self.perturbation
    }

    pub fn options(&self) -> &ScatteringOptions {
        &self.options
    }

    pub fn window(&self) -> (f64, f64) {
        self.window
    }

    fn scale(&self) -> f64 {
        self.background.bands().scale()
    }

    /// Full potential `V = V_q + vhat`.
    pub fn potential(&self, x: f64) -> Result<f64> {
        Ok(self.background.potential(x)? + self.perturbation.vhat(x))
    }

    fn vq(&self, x: f64) -> f64 {
        let xm = self.background.x_max();
        self.background.potential(x.clamp(-xm, xm)).unwrap_or(f64::NAN)
    }

    /// Validates `p` and returns `i R^{1/2}` on its sheet.
    fn check_point(&self, p: &SurfacePoint) -> Result<Complex64> {
        let bands = self.background.bands();
        let tol = self.options.edge_exclusion * self.scale();
        for e in bands.edges() {
            if (p.z - e).norm() < tol {
                return Err(Error::BandEdge(*e));
            }
        }
        if p.sheet == Sheet::Lower && !(p.z.im == 0.0 && bands.in_spectrum(p.z.re)) {
            return Err(Error::Domain(
                "Jost solutions on the lower sheet exist only as boundary values on the spectrum".into(),
            ));
        }
        Ok(I * bands.sqrt_r_at(p)?)
    }

    /// Starting point and Baker–Akhiezer data for one side.
    fn start_data(&self, z: Complex64, ir: Complex64, side: Side) -> Result<(f64, [Complex64; 2])> {
        let xm = self.background.x_max();
        let mut x = match side {
            Side::Plus => self.window.1,
            Side::Minus => self.window.0,
        };
        for _ in 0..8 {
            let (h, hx) = self.background.h_poly(z, x)?;
            let d = 0.5 * hx + ir * side.sign();
            let size = h.norm() + (0.5 * hx).norm() + ir.norm();
            if h.norm() + d.norm() > 1e-6 * size {
                return Ok((x, [h, d]));
            }
            // the data vector vanishes where z is a Dirichlet eigenvalue on this sheet
            x += 0.5 * side.sign();
            if x.abs() > xm {
                break;
            }
        }
        Err(Error::Window(format!("no admissible starting point for the Jost solution at z = {z}")))
    }

    /// Integrates perturbed and background solutions from the window edge
    /// to each output (ordered towards 0). Returns `[ψ, ψ', ψ_q, ψ_q']` at the
    /// outputs with a common, arbitrary scale plus its logarithm.
    fn shoot(&self, z: Complex64, ir: Complex64, side: Side, outputs: &[f64]) -> Result<Vec<(Pair, f64)>> {
        let (x0, [h, d]) = self.start_data(z, ir, side)?;
        let rhs = |x: f64, u: &Pair| -> Pair {
            let vq = self.vq(x);
            let v = vq + self.perturbation.vhat(x);
            [u[1], (v - z) * u[0], u[3], (vq - z) * u[2]]
        };
        let mut state: Pair = [h, d, h, d];
        let mut log_scale = 0.0;
        let mut x = x0;
        let mut out = Vec::with_capacity(outputs.len());
        let chunk = 2.0;
        for &target in outputs {
            while (target - x).abs() > 0.0 {
                let step_to = if (target - x).abs() > chunk {
                    x + chunk * (target - x).signum()
                } else {
                    target
                };
                state = ode::solve_to(rhs, x, state, step_to, self.options.ode)?;
                x = step_to;
                let n = state.iter().map(|c| c.norm()).fold(0.0, f64::max);
                if n > 0.0 && n.is_finite() {
                    for c in state.iter_mut() {
                        *c /= n;
                    }
                    log_scale += n.ln();
                }
            }
            out.push((state, log_scale));
        }
        Ok(out)
    }

    fn check_same_z(&self, p: &SurfacePoint) -> Result<Complex64> {
        self.check_point(p)
    }

    /// `α(p)` by the linear route.
    pub fn alpha_linear(&self, p: &SurfacePoint) -> Result<Complex64> {
        let ir = self.check_same_z(p)?;
        if self.perturbation.is_zero() {
            return Ok(Complex64::new(1.0, 0.0));
        }
        let (plus, _) = self.shoot(p.z, ir, Side::Plus, &[0.0])?[0];
        let (minus, _) = self.shoot(p.z, ir, Side::Minus, &[0.0])?[0];
        let w = minus[0] * plus[1] - minus[1] * plus[0];
        let wq = minus[2] * plus[3] - minus[3] * plus[2];
        Ok(w / wq)
    }

    /// Riccati integration of `w = m - m_q` from the window edge through
    /// the outputs. Returns `(w, ∫_{x_start}^{x} w)` at each output.
    fn riccati(&self, p: &SurfacePoint, side: Side, outputs: &[f64]) -> Result<Vec<(Complex64, Complex64)>> {
        let ir = self.check_point(p)?;
        let x0 = match side {
            Side::Plus => self.window.1,
            Side::Minus => self.window.0,
        };
        let s = side.sign();
        let xm = self.background.x_max();
        let rhs = |x: f64, u: &[Complex64; 2]| -> [Complex64; 2] {
            let xc = x.clamp(-xm, xm);
            let (h, hx) = self.background.h_poly(p.z, xc).unwrap_or((Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)));
            let mq = (ir + 0.5 * s * hx) / h;
            let v = self.perturbation.vhat(x);
            let w = u[0];
            // w_+' = vhat - w (2 m_q + w),   w_-' = -vhat + w (2 m_q + w)
            [s * (v - w * (2.0 * mq + w)), w]
        };
        let y0 = [Complex64::new(0.0, 0.0); 2];
        let sol = ode::solve(rhs, x0, y0, outputs, self.options.ode)?;
        Ok(sol.into_iter().map(|u| (u[0], u[1])).collect())
    }

    /// `α(p)` by the Riccati route; not available for real `z` off the spectrum.
    pub fn alpha_riccati(&self, p: &SurfacePoint) -> Result<Complex64> {
        let ir = self.check_point(p)?;
        let bands = self.background.bands();
        if p.z.im == 0.0 && !bands.in_spectrum(p.z.re) {
            return Err(Error::Domain("Riccati route needs z off the real gaps".into()));
        }
        if self.perturbation.is_zero() {
            return Ok(Complex64::new(1.0, 0.0));
        }
        let (wp, ip) = self.riccati(p, Side::Plus, &[0.0])?[0];
        let (wm, im) = self.riccati(p, Side::Minus, &[0.0])?[0];
        let (h, hx) = self.background.h_poly(p.z, 0.0)?;
        let mqp = (ir + 0.5 * hx) / h;
        let mqm = (ir - 0.5 * hx) / h;
        // ip = ∫_{L+}^0 w_+ = -∫_0^{L+} w_+ ;  im = ∫_{L-}^0 w_-
        let log_alpha = ip - im + ((mqp + wp + mqm + wm) / (mqp + mqm)).ln();
        Ok(log_alpha.exp())
    }

    fn prefer_riccati(&self, p: &SurfacePoint) -> bool {
        let bands = self.background.bands();
        let off_gap_axis = !(p.z.im == 0.0 && !bands.in_spectrum(p.z.re));
        off_gap_axis && (p.z - bands.e0()).norm() > self.options.riccati_threshold * self.scale()
    }

    /// `α(p) = 1/T(p)`.
    pub fn alpha(&self, p: &SurfacePoint) -> Result<Complex64> {
        if self.prefer_riccati(p) {
            self.alpha_riccati(p)
        } else {
            self.alpha_linear(p)
        }
    }

    /// Transmission coefficient `T(p)`.
    pub fn transmission(&self, p: &SurfacePoint) -> Result<Complex64> {
        let a = self.alpha(p)?;
        if a.norm() < 1e-12 {
            return Err(Error::EigenvalueProximity(format!("{}", p.z)));
        }
        Ok(1.0 / a)
    }

    /// `T(z)` on the physical sheet.
    pub fn t(&self, z: Complex64) -> Result<Complex64> {
        self.transmission(&SurfacePoint::upper(z))
    }

    /// Canonically normalized Jost data `(ψ(0), ψ'(0))` for both sides.
    fn jost_at_zero(&self, p: &SurfacePoint) -> Result<([Complex64; 2], [Complex64; 2], [Complex64; 2], [Complex64; 2])> {
        let ir = self.check_point(p)?;
        let (plus, _) = self.shoot(p.z, ir, Side::Plus, &[0.0])?[0];
        let (minus, _) = self.shoot(p.z, ir, Side::Minus, &[0.0])?[0];
        let np = plus[2];
        let nm = minus[2];
        if np.norm() == 0.0 || nm.norm() == 0.0 {
            return Err(Error::Pole(format!("background Jost solution vanishes at x = 0 for z = {}", p.z)));
        }
        Ok((
            [plus[0] / np, plus[1] / np],
            [minus[0] / nm, minus[1] / nm],
            [Complex64::new(1.0, 0.0), plus[3] / np],
            [Complex64::new(1.0, 0.0), minus[3] / nm],
        ))
    }

    /// `T`, `R_+`, `R_-` at a point of a band interior (boundary value from above).
    pub fn band_scattering(&self, lambda: f64) -> Result<BandScattering> {
        let bands = self.background.bands();
        if !bands.in_spectrum(lambda) {
            return Err(Error::Domain(format!("{lambda} is not in the spectrum of H_q")));
        }
        let p = SurfacePoint::upper(lambda);
        let (pp, pm, qp, qm) = self.jost_at_zero(&p)?;
        let wr = |a: [Complex64; 2], b: [Complex64; 2]| a[0] * b[1] - a[1] * b[0];
        let conj = |a: [Complex64; 2]| [a[0].conj(), a[1].conj()];
        let w = wr(pm, pp);
        let wq = wr(qm, qp);
        Ok(BandScattering {
            lambda,
            t: wq / w,
            r_plus: -wr(pm, conj(pp)) / w,
            r_minus: -wr(conj(pm), pp) / w,
        })
    }

    /// Reflection coefficient `R_±(λ)`.
    pub fn reflection(&self, lambda: f64, side: Side) -> Result<Complex64> {
        let b = self.band_scattering(lambda)?;
        Ok(match side {
            Side::Plus => b.r_plus,
            Side::Minus => b.r_minus,
        })
    }

    /// Jost solution `ψ_±(p,x)` on `grid`. It coincides with the canonically
    /// normalized `ψ_{q,±}` beyond the window edge on its own side.
    pub fn jost(&self, p: &SurfacePoint, side: Side, grid: &[f64]) -> Result<JostSolution> {
        let ir = self.check_point(p)?;
        let xm = self.background.x_max();
        if grid.iter().any(|x| x.abs() > xm) {
            return Err(Error::Domain(format!("grid leaves the working interval [-{xm}, {xm}]")));
        }
        let edge = match side {
            Side::Plus => self.window.1,
            Side::Minus => self.window.0,
        };
        // integrate from the window edge towards the far end, passing 0 first
        let mut pts: Vec<f64> = grid.to_vec();
        pts.push(0.0);
        let s = side.sign();
        let (inner, outer): (Vec<f64>, Vec<f64>) = pts.iter().partition(|&&x| (x - edge) * s <= 0.0);
        let mut inner = inner;
        inner.sort_by(|a, b| (b * s).partial_cmp(&(a * s)).unwrap());
        inner.dedup();
        let shot = self.shoot(p.z, ir, side, &inner)?;
        let at_zero = inner.iter().position(|&x| x == 0.0).unwrap();
        let (ref0, log0) = shot[at_zero];
        let norm = ref0[2];
        if norm.norm() == 0.0 {
            return Err(Error::Pole(format!("background Jost solution vanishes at x = 0 for z = {}", p.z)));
        }
        let lookup = |x: f64| -> Result<(Complex64, Complex64)> {
            if let Some(i) = inner.iter().position(|&y| y == x) {
                let (u, ls) = shot[i];
                let f = (ls - log0).exp() / norm;
                return Ok((u[0] * f, u[1] * f));
            }
            // outside the window the solution is the background one
            let (a, b) = self.background.baker_akhiezer(p, x)?;
            let (mp, mm) = self.background.weyl_m(p, x)?;
            Ok(match side {
                Side::Plus => (a, a * mp),
                Side::Minus => (b, -b * mm),
            })
        };
        let _ = outer;
        let mut values = Vec::with_capacity(grid.len());
        let mut derivatives = Vec::with_capacity(grid.len());
        for &x in grid {
            let (v, d) = lookup(x)?;
            values.push(v);
            derivatives.push(d);
        }
        Ok(JostSolution {
            z: p.z,
            sheet: p.sheet,
            side,
            xs: grid.to_vec(),
            values,
            derivatives,
            tail_error: self.options.tail_tol,
        })
    }

    /// Eigenvalues below `E_0` and in the gaps, from sign changes of the
    /// real function `α` followed by bisection.
    pub fn eigenvalues(&self) -> Result<Vec<Eigenvalue>> {
        if self.perturbation.is_zero() {
            return Ok(Vec::new());
        }
        let bands = self.background.bands();
        let scale = self.scale();
        let e0 = bands.e0();
        let delta = 10.0 * self.options.edge_exclusion * scale;
        // certified lower bound: V >= min V_q + min vhat
        let gap_sum: f64 = (1..=bands.genus()).map(|j| bands.gap(j).1 - bands.gap(j).0).sum();
        let (lo, hi) = self.window;
        let n_probe = 4000;
        let vmin = (0..=n_probe)
            .map(|i| self.perturbation.vhat(lo + (hi - lo) * i as f64 / n_probe as f64))
            .fold(0.0, f64::min);
        let floor = (e0 - gap_sum + 1.05 * vmin - 1e-3 * scale).min(e0 - 10.0 * self.perturbation.l1);
        let depth = e0 - floor;
        let mut regions: Vec<(Region, Vec<f64>)> = Vec::new();
        let mut below: Vec<f64> = (0..=200).map(|i| floor + depth * i as f64 / 200.0).collect();
        below.extend((0..200).map(|i| e0 - depth * (delta / depth).powf(i as f64 / 199.0)));
        below.retain(|&x| x < e0 - 0.5 * delta);
        below.sort_by(|a, b| a.partial_cmp(b).unwrap());
        below.dedup();
        regions.push((Region::BelowSpectrum, below));
        for j in 1..=bands.genus() {
            let (a, b) = bands.gap(j);
            let pts: Vec<f64> = (0..400)
                .map(|i| {
                    let t = std::f64::consts::PI * (i as f64 + 0.5) / 400.0;
                    0.5 * (a + b) - 0.5 * (b - a - 2.0 * delta) * t.cos()
                })
                .collect();
            regions.push((Region::Gap(j), pts));
        }
        let mut found = Vec::new();
        for (region, pts) in regions {
            let vals: Vec<Result<f64>> = pts
                .par_iter()
                .map(|&x| self.alpha_linear(&SurfacePoint::upper(x)).map(|a| a.re))
                .collect();
            let vals: Vec<f64> = vals.into_iter().collect::<Result<_>>()?;
            let brackets: Vec<(f64, f64, f64)> = pts
                .windows(2)
                .zip(vals.windows(2))
                .filter(|(_, v)| v[0] == 0.0 || v[0].signum() != v[1].signum())
                .map(|(x, v)| (x[0], x[1], v[0]))
                .collect();
            let roots: Vec<Result<f64>> = brackets
                .par_iter()
                .map(|&(a, b, fa)| self.bisect(a, b, fa))
                .collect();
            for r in roots {
                found.push(Eigenvalue { value: r?, region });
            }
        }
        found.sort_by(|a, b| a.value.partial_cmp(&b.value).unwrap());
        found.dedup_by(|a, b| (a.value - b.value).abs() < 1e-10 * scale);
        Ok(found)
    }

    fn bisect(&self, mut a: f64, mut b: f64, mut fa: f64) -> Result<f64> {
        if fa == 0.0 {
            return Ok(a);
        }
        let tol = 1e-13 * self.scale().max(a.abs());
        while b - a > tol {
            let m = 0.5 * (a + b);
            let fm = self.alpha_linear(&SurfacePoint::upper(m))?.re;
            if fm == 0.0 {
                return Ok(m);
            }
            if fm.signum() == fa.signum() {
                a = m;
                fa = fm;
            } else {
                b = m;
            }
        }
        Ok(0.5 * (a + b))
    }

    /// `∫ (G(z,x,x) - G_q(z,x,x)) dx`, which equals `T'(z)/T(z)`.
    pub fn resolvent_trace(&self, z: Complex64) -> Result<Complex64> {
        let bands = self.background.bands();
        if z.im == 0.0 && (bands.in_spectrum(z.re) || bands.gap_index(z.re).is_some()) {
            return Err(Error::Domain("resolvent trace needs z off the real axis or below the spectrum".into()));
        }
        if self.perturbation.is_zero() {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let p = SurfacePoint::upper(z);
        let ir = self.check_point(&p)?;
        // G - G_q decays like exp(-2 Im k |x|) outside the window
        let rate = if bands.genus() == 0 {
            2.0 * crate::riemann_surface::sqrt_upper(z - bands.e0()).im
        } else {
            2.0 * crate::riemann_surface::quasimomentum(bands, z)?.im.abs()
        };
        let xm = self.background.x_max();
        let tail = (40.0 / rate).min(if xm.is_finite() { xm } else { 1e3 });
        let (lo, hi) = self.window;
        let (a, b) = ((lo - tail).max(-xm), (hi + tail).min(xm));
        // a background known only on [-x_max, x_max] may cut the tail short
        let reach = (lo - a).min(b - hi);
        let dropped = (-rate * reach).exp();
        if dropped > 1e-9 {
            return Err(Error::Truncation(dropped));
        }
        let rule = GaussRule::new(12);
        let n_panels = ((b - a) / 0.25).ceil() as usize;
        let width = (b - a) / n_panels as f64;
        let mut nodes = Vec::with_capacity(n_panels * 12);
        for k in 0..n_panels {
            let c = a + (k as f64 + 0.5) * width;
            for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                nodes.push((c + 0.5 * width * x, 0.5 * width * w));
            }
        }
        let xs: Vec<f64> = nodes.iter().map(|n| n.0).collect();
        let mut desc = xs.clone();
        desc.reverse();
        let plus = self.riccati_from(&p, Side::Plus, b, &desc)?;
        let minus = self.riccati_from(&p, Side::Minus, a, &xs)?;
        let mut total = Complex64::new(0.0, 0.0);
        for (i, &(x, w)) in nodes.iter().enumerate() {
            let wp = plus[nodes.len() - 1 - i].0;
            let wm = minus[i].0;
            let (h, hx) = self.background.h_poly(z, x)?;
            let mqp = (ir + 0.5 * hx) / h;
            let mqm = (ir - 0.5 * hx) / h;
            let g = -1.0 / (mqp + wp + mqm + wm);
            let gq = -1.0 / (mqp + mqm);
            total += w * (g - gq);
        }
        Ok(total)
    }

    /// Riccati integration started at `x0` (beyond the window, where `w = 0`).
    fn riccati_from(&self, p: &SurfacePoint, side: Side, x0: f64, outputs: &[f64]) -> Result<Vec<(Complex64, Complex64)>> {
        let mut shifted = self.clone();
        match side {
            Side::Plus => shifted.window.1 = x0.max(self.window.1),
            Side::Minus => shifted.window.0 = x0.min(self.window.0),
        }
        shifted.riccati(p, side, outputs)
    }

    /// Weyl function `m_±(z,x)` of the perturbed operator at `x` inside the window.
    pub fn weyl_m(&self, z: Complex64, x: f64) -> Result<(Complex64, Complex64)> {
        let p = SurfacePoint::upper(z);
        let (mqp, mqm) = self.background.weyl_m(&p, x)?;
        if self.perturbation.is_zero() {
            return Ok((mqp, mqm));
        }
        let wp = self.riccati_from(&p, Side::Plus, x.max(self.window.1), &[x])?[0].0;
        let wm = self.riccati_from(&p, Side::Minus, x.min(self.window.0), &[x])?[0].0;
        Ok((mqp + wp, mqm + wm))
    }

    /// Scattering data bundle with the eigenvalues computed once.
    pub fn scattering_data(&self) -> Result<ScatteringData> {
        Ok(ScatteringData {
            eigenvalues: self.eigenvalues()?,
            problem: self.clone(),
        })
    }
}

/// `W(a, b) = a b' - a' b` of two Jost solutions on a common grid, with the
/// maximal relative deviation from its mean.
pub fn wronskian(a: &JostSolution, b: &JostSolution) -> Result<(Complex64, f64)> {
    if a.z != b.z || a.sheet != b.sheet || a.xs != b.xs {
        return Err(Error::Mismatch);
    }
    let ws: Vec<Complex64> = (0..a.xs.len())
        .map(|i| a.values[i] * b.derivatives[i] - a.derivatives[i] * b.values[i])
        .collect();
    if ws.is_empty() {
        return Err(Error::Mismatch);
    }
    let mean = ws.iter().sum::<Complex64>() / ws.len() as f64;
    let spread = ws.iter().map(|w| (w - mean).norm()).fold(0.0, f64::max) / mean.norm().max(1e-300);
    Ok((mean, spread))
}

/// Scattering data: `T`, `R_±` evaluators plus the eigenvalues.
#[derive(Debug, Clone)]
pub struct ScatteringData {
    pub problem: ScatteringProblem,
    pub eigenvalues: Vec<Eigenvalue>,
}

impl ScatteringData {
    pub fn t(&self, z: Complex64) -> Result<Complex64> {
        self.problem.t(z)
    }

    pub fn transmission(&self, p: &SurfacePoint) -> Result<Complex64> {
        self.problem.transmission(p)
    }

    pub fn band(&self, lambda: f64) -> Result<BandScattering> {
        self.problem.band_scattering(lambda)
    }

    pub fn eigenvalue_values(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|e| e.value).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::{DirichletDivisor, DivisorEntry};
    use crate::riemann_surface::BandStructure;

    fn soliton(depth: f64) -> ScatteringProblem {
        let pert = Perturbation::from_fn(move |x| -depth / x.cosh().powi(2)).unwrap();
        ScatteringProblem::new(FiniteGapPotential::free(0.0), pert).unwrap()
    }

    #[test]
    fn zero_perturbation_is_transparent() {
        let sp = ScatteringProblem::new(FiniteGapPotential::free(0.0), Perturbation::zero()).unwrap();
        assert_eq!(sp.t(Complex64::new(-1.0, 0.3)).unwrap(), Complex64::new(1.0, 0.0));
        assert!(sp.eigenvalues().unwrap().is_empty());
        let b = sp.band_scattering(2.0).unwrap();
        assert!(b.r_plus.norm() < 1e-12 && (b.t - 1.0).norm() < 1e-12);
    }

    #[test]
    fn soliton_transmission_both_routes() {
        let sp = soliton(2.0);
        let exact = |z: Complex64| {
            let k = crate::riemann_surface::sqrt_upper(z);
            (k + I) / (k - I)
        };
        let t4 = sp.t(Complex64::new(4.0, 0.0)).unwrap();
        assert!((t4 - Complex64::new(0.6, 0.8)).norm() < 1e-9, "{t4}");
        for z in [Complex64::new(0.5, 0.5), Complex64::new(-3.0, 0.1), Complex64::new(10.0, -2.0)] {
            let a = sp.alpha_linear(&SurfacePoint::upper(z)).unwrap();
            let b = sp.alpha_riccati(&SurfacePoint::upper(z)).unwrap();
            assert!((1.0 / a - exact(z)).norm() < 1e-9 * exact(z).norm(), "{z}");
            assert!((a - b).norm() < 1e-9 * a.norm(), "{z}: {a} vs {b}");
        }
    }

    #[test]
    fn soliton_is_reflectionless_and_unitary() {
        let sp = soliton(2.0);
        for lam in [0.1, 1.0, 7.5, 25.0] {
            let b = sp.band_scattering(lam).unwrap();
            assert!(b.r_plus.norm() < 1e-8 && b.r_minus.norm() < 1e-8);
            assert!(b.unitarity_defect() < 1e-10);
        }
    }

    #[test]
    fn soliton_eigenvalues() {
        let ev = soliton(2.0).eigenvalues().unwrap();
        assert_eq!(ev.len(), 1);
        assert!((ev[0].value + 1.0).abs() < 1e-10);
        assert_eq!(ev[0].region, Region::BelowSpectrum);
        let ev = soliton(6.0).eigenvalues().unwrap();
        let vals: Vec<f64> = ev.iter().map(|e| e.value).collect();
        assert_eq!(vals.len(), 2);
        assert!((vals[0] + 4.0).abs() < 1e-9 && (vals[1] + 1.0).abs() < 1e-9, "{vals:?}");
    }

    #[test]
    fn gaussian_reflection_symmetry_and_unitarity() {
        let pert = Perturbation::from_fn(|x| 0.7 * (-x * x).exp()).unwrap();
        let sp = ScatteringProblem::new(FiniteGapPotential::free(0.0), pert).unwrap();
        for lam in [0.05, 0.3, 2.0, 9.0] {
            let b = sp.band_scattering(lam).unwrap();
            assert!(b.unitarity_defect() < 1e-9);
            assert!((b.r_plus.norm() - b.r_minus.norm()).abs() < 1e-9);
            assert!(b.r_plus.norm() > 1e-4);
        }
        // Born approximation for a weak barrier: R_+(λ) ≈ (2ik)^{-1} ∫ vhat e^{-2ikx} dx
        let weak = Perturbation::from_fn(|x| 0.01 * (-x * x).exp()).unwrap();
        let sp = ScatteringProblem::new(FiniteGapPotential::free(0.0), weak).unwrap();
        let k: f64 = 1.0;
        let born = 0.01 * std::f64::consts::PI.sqrt() * (-k * k).exp() / (2.0 * k);
        let r = sp.reflection(k * k, Side::Plus).unwrap();
        assert!((r.norm() - born).abs() < 2e-2 * born, "{} vs {born}", r.norm());
    }

    #[test]
    fn jost_solution_matches_closed_form() {
        // ψ_+ = e^{ikx} (k + i tanh x)/(k + i) for V = -2 sech^2
        let sp = soliton(2.0);
        let k: f64 = 1.3;
        let grid: Vec<f64> = (0..=20).map(|i| -10.0 + i as f64).collect();
        let j = sp.jost(&SurfacePoint::upper(k * k), Side::Plus, &grid).unwrap();
        for (x, v) in grid.iter().zip(&j.values) {
            let exact = (I * k * x).exp() * (k + I * x.tanh()) / (k + I);
            assert!((v - exact).norm() < 1e-8, "x={x}: {v} vs {exact}");
        }
        let jm = sp.jost(&SurfacePoint::upper(k * k), Side::Minus, &grid).unwrap();
        let (w, spread) = wronskian(&jm, &j).unwrap();
        assert!(spread < 1e-8);
        let t = sp.t(Complex64::new(k * k, 0.0)).unwrap();
        assert!((w - 2.0 * I * k / t).norm() < 1e-8);
        let other = sp.jost(&SurfacePoint::upper(2.0), Side::Plus, &grid).unwrap();
        assert_eq!(wronskian(&j, &other), Err(Error::Mismatch));
        // decay off the spectrum
        let d = sp.jost(&SurfacePoint::upper(-0.5), Side::Plus, &[10.0, 12.0]).unwrap();
        let rate = (d.values[1] / d.values[0]).norm().ln() / 2.0;
        assert!((rate + 0.5f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn window_choice_does_not_change_t() {
        let pert = Perturbation::from_fn(|x| 0.7 * (-x * x).exp()).unwrap();
        let a = ScatteringProblem::new(FiniteGapPotential::free(0.0), pert.clone()).unwrap();
        let opts = ScatteringOptions {
            tail_tol: 1e-20,
            ..Default::default()
        };
        let b = ScatteringProblem::with_options(FiniteGapPotential::free(0.0), pert, opts).unwrap();
        assert!(b.window().1 > a.window().1);
        for z in [Complex64::new(1.0, 0.0), Complex64::new(-0.5, 1.0)] {
            let ta = a.t(z).unwrap();
            let tb = b.t(z).unwrap();
            assert!((ta - tb).norm() < 1e-10);
        }
    }

    #[test]
    fn resolvent_trace_matches_closed_form() {
        let sp = soliton(2.0);
        // d/dz log((k+i)/(k-i)) = -i / (k (k^2 + 1)), k = 2i at z = -4
        let v = sp.resolvent_trace(Complex64::new(-4.0, 0.0)).unwrap();
        assert!((v - 1.0 / 6.0).norm() < 1e-8, "{v}");
        let z = Complex64::new(1.0, 0.5);
        let k = crate::riemann_surface::sqrt_upper(z);
        let exact = -I / (k * (k * k + 1.0));
        assert!((sp.resolvent_trace(z).unwrap() - exact).norm() < 1e-8);
    }

    #[test]
    fn genus_one_background_scattering() {
        let bands = BandStructure::new(vec![0.0, 1.0, 3.0]).unwrap();
        let bg = FiniteGapPotential::new(bands, DirichletDivisor::new(vec![DivisorEntry { mu: 2.0, sigma: 1.0 }]), 30.0).unwrap();
        let zero = ScatteringProblem::new(bg.clone(), Perturbation::zero()).unwrap();
        assert_eq!(zero.t(Complex64::new(0.5, 0.1)).unwrap(), Complex64::new(1.0, 0.0));
        let pert = Perturbation::from_fn(|x| -1.5 * (-x * x).exp()).unwrap();
        let sp = ScatteringProblem::new(bg, pert).unwrap();
        for lam in [0.3, 0.8, 4.0, 12.0] {
            let b = sp.band_scattering(lam).unwrap();
            assert!(b.unitarity_defect() < 1e-9, "{lam}: {}", b.unitarity_defect());
        }
        let z = Complex64::new(2.0, 0.4);
        let a = sp.alpha_linear(&SurfacePoint::upper(z)).unwrap();
        let b = sp.alpha_riccati(&SurfacePoint::upper(z)).unwrap();
        assert!((a - b).norm() < 1e-8 * a.norm());
        let ev = sp.eigenvalues().unwrap();
        assert!(!ev.is_empty());
        for e in &ev {
            let t = sp.alpha_linear(&SurfacePoint::upper(e.value)).unwrap();
            assert!(t.norm() < 1e-8);
        }
    }
}
