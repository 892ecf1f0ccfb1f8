//! The unperturbed finite-gap operator `H_q = -d²/dx² + V_q`.
//!
//! `V_q` is generated from its Dirichlet divisor at `x = 0` by the Dubrovin
//! flow. Each Dirichlet eigenvalue is written as
//! `μ_j = (a_j + b_j)/2 - (b_j - a_j)/2 · cos φ_j` over its gap `(a_j, b_j)`,
//! which turns the square-root vector field into the smooth system
//! `φ_j' = -2 sqrt(Q_j(μ_j)) / prod_{k≠j} (μ_j - μ_k)`, `Q_j = -R / ((μ-a_j)(b_j-μ))`.
//! Passing through a gap edge is then an ordinary zero of `sin φ_j` and the
//! sheet label is `σ_j = sign(sin φ_j)`.
//!
//! With `H(z,x) = prod (z - μ_j(x))` the Weyl functions are
//! `m_{q,±}(z,x) = (i R^{1/2}(z) ± H_x/2) / H`, normalized so that
//! `ψ_{q,±}(z,x) = exp(±∫_0^x m_{q,±})` and `ψ_{q,±}(z,0) = 1`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{self, OdeOptions};
use crate::quad::{self, QuadOptions};
use crate::riemann_surface::{BandStructure, SurfacePoint};

/// Largest genus handled by the flow; keeps the hot evaluators allocation free.
pub const MAX_GENUS: usize = 16;

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivisorEntry {
    pub mu: f64,
    /// Sheet of the divisor point, `+1` or `-1`.
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DirichletDivisor {
    pub entries: Vec<DivisorEntry>,
}

impl DirichletDivisor {
    pub fn new(entries: Vec<DivisorEntry>) -> Self {
        DirichletDivisor { entries }
    }

    pub fn empty() -> Self {
        DirichletDivisor { entries: Vec::new() }
    }

    pub fn mus(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.mu).collect()
    }
}

/// Serializable description `{edges, divisor, x_max}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackgroundSpec {
    pub edges: Vec<f64>,
    #[serde(default = "DirichletDivisor::empty")]
    pub divisor: DirichletDivisor,
    #[serde(default)]
    pub x_max: Option<f64>,
}

impl BackgroundSpec {
    pub fn build(&self, default_x_max: f64) -> Result<FiniteGapPotential> {
        let bands = BandStructure::new(self.edges.clone())?;
        FiniteGapPotential::new(bands, self.divisor.clone(), self.x_max.unwrap_or(default_x_max))
    }
}

#[derive(Debug, Clone)]
pub struct FiniteGapPotential {
    bands: BandStructure,
    divisor0: DirichletDivisor,
    x_max: f64,
    step: f64,
    /// Angles `φ_j` at grid point `i` stored at `i * g + j`.
    phi: Vec<f64>,
    dphi: Vec<f64>,
}

/// Dirichlet data at one `x`: eigenvalues and their derivatives.
#[derive(Debug, Clone, Copy)]
pub struct DivisorState {
    pub g: usize,
    pub mu: [f64; MAX_GENUS],
    pub dmu: [f64; MAX_GENUS],
}

impl DivisorState {
    /// `H(z,x)` and `H_x(z,x)`.
    pub fn h_poly(&self, z: Complex64) -> (Complex64, Complex64) {
        let mut h = Complex64::new(1.0, 0.0);
        let mut hx = Complex64::new(0.0, 0.0);
        for j in 0..self.g {
            let f = z - self.mu[j];
            hx = hx * f - h * self.dmu[j];
            h *= f;
        }
        (h, hx)
    }
}

fn gap_geometry(bands: &BandStructure, j: usize) -> (f64, f64) {
    let (a, b) = bands.gap(j + 1);
    (0.5 * (a + b), 0.5 * (b - a))
}

fn angle_rhs(bands: &BandStructure, phi: &[f64]) -> Vec<f64> {
    let g = phi.len();
    let edges = bands.edges();
    let mut mu = [0.0; MAX_GENUS];
    for j in 0..g {
        let (c, r) = gap_geometry(bands, j);
        mu[j] = c - r * phi[j].cos();
    }
    (0..g)
        .map(|j| {
            let q: f64 = edges
                .iter()
                .enumerate()
                .filter(|(m, _)| *m != 2 * j + 1 && *m != 2 * j + 2)
                .map(|(_, e)| mu[j] - e)
                .product();
            let denom: f64 = (0..g).filter(|&k| k != j).map(|k| mu[j] - mu[k]).product();
            -2.0 * q.max(0.0).sqrt() / denom
        })
        .collect()
}

impl FiniteGapPotential {
    /// Integrates the Dubrovin flow over `[-x_max, x_max]` and stores it.
    pub fn new(bands: BandStructure, divisor0: DirichletDivisor, x_max: f64) -> Result<Self> {
        let g = bands.genus();
        if g > MAX_GENUS {
            return Err(Error::InvalidBands(format!("genus {g} exceeds {MAX_GENUS}")));
        }
        if divisor0.entries.len() != g {
            return Err(Error::Domain(format!(
                "divisor has {} entries, genus is {g}",
                divisor0.entries.len()
            )));
        }
        if !(x_max > 0.0 && x_max.is_finite()) {
            return Err(Error::Domain(format!("working interval half-width {x_max} must be positive")));
        }
        let tol = bands.branch_tolerance();
        let mut phi0 = Vec::with_capacity(g);
        for (j, e) in divisor0.entries.iter().enumerate() {
            let (a, b) = bands.gap(j + 1);
            if e.mu < a - tol || e.mu > b + tol || !e.mu.is_finite() {
                return Err(Error::Domain(format!("mu_{} = {} outside its gap [{a}, {b}]", j + 1, e.mu)));
            }
            if e.sigma.abs() != 1.0 {
                return Err(Error::Domain(format!("sigma_{} must be +1 or -1", j + 1)));
            }
            let (c, r) = gap_geometry(&bands, j);
            let theta = ((c - e.mu) / r).clamp(-1.0, 1.0).acos();
            phi0.push(if e.sigma < 0.0 { -theta } else { theta });
        }
        let mut pot = FiniteGapPotential {
            bands,
            divisor0,
            x_max,
            step: 0.0,
            phi: Vec::new(),
            dphi: Vec::new(),
        };
        if g == 0 {
            return Ok(pot);
        }
        let n_half = (x_max / 0.005).ceil() as usize;
        let step = x_max / n_half as f64;
        let opts = OdeOptions {
            rtol: 1e-13,
            atol: 1e-14,
            max_steps: 10_000_000,
            h_init: step,
        };
        let fwd: Vec<f64> = (1..=n_half).map(|i| i as f64 * step).collect();
        let bwd: Vec<f64> = (1..=n_half).map(|i| -(i as f64) * step).collect();
        let b = pot.bands.clone();
        let right = ode::solve_real(|_, y| angle_rhs(&b, y), 0.0, &phi0, &fwd, opts)?;
        let left = ode::solve_real(|_, y| angle_rhs(&b, y), 0.0, &phi0, &bwd, opts)?;
        let d0 = angle_rhs(&pot.bands, &phi0);
        let n = 2 * n_half + 1;
        let mut phi = Vec::with_capacity(n * g);
        let mut dphi = Vec::with_capacity(n * g);
        for (y, dy) in left.iter().rev() {
            phi.extend_from_slice(y);
            dphi.extend_from_slice(dy);
        }
        phi.extend_from_slice(&phi0);
        dphi.extend_from_slice(&d0);
        for (y, dy) in &right {
            phi.extend_from_slice(y);
            dphi.extend_from_slice(dy);
        }
        pot.step = step;
        pot.phi = phi;
        pot.dphi = dphi;
        Ok(pot)
    }

    /// Constant background `V_q = e0`.
    pub fn free(e0: f64) -> Self {
        FiniteGapPotential {
            bands: BandStructure::free(e0),
            divisor0: DirichletDivisor::empty(),
            x_max: f64::INFINITY,
            step: 0.0,
            phi: Vec::new(),
            dphi: Vec::new(),
        }
    }

    pub fn bands(&self) -> &BandStructure {
        &self.bands
    }

    pub fn genus(&self) -> usize {
        self.bands.genus()
    }

    pub fn divisor0(&self) -> &DirichletDivisor {
        &self.divisor0
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    fn check_x(&self, x: f64) -> Result<()> {
        if x.is_nan() || x.abs() > self.x_max * (1.0 + 1e-12) {
            return Err(Error::Domain(format!(
                "x = {x} outside the working interval [-{0}, {0}]",
                self.x_max
            )));
        }
        Ok(())
    }

    /// Angles and their derivatives at `x` by cubic Hermite interpolation.
    fn angles(&self, x: f64) -> ([f64; MAX_GENUS], [f64; MAX_GENUS]) {
        let g = self.genus();
        let n = self.phi.len() / g;
        let u = (x + self.x_max) / self.step;
        let i = (u.floor() as isize).clamp(0, n as isize - 2) as usize;
        let t = u - i as f64;
        let h = self.step;
        let (h00, h10, h01, h11) = (
            (1.0 + 2.0 * t) * (1.0 - t) * (1.0 - t),
            t * (1.0 - t) * (1.0 - t),
            t * t * (3.0 - 2.0 * t),
            t * t * (t - 1.0),
        );
        let (d00, d10, d01, d11) = (
            6.0 * t * (t - 1.0) / h,
            (1.0 - t) * (1.0 - 3.0 * t),
            -6.0 * t * (t - 1.0) / h,
            t * (3.0 * t - 2.0),
        );
        let mut phi = [0.0; MAX_GENUS];
        let mut dphi = [0.0; MAX_GENUS];
        for j in 0..g {
            let (p0, p1) = (self.phi[i * g + j], self.phi[(i + 1) * g + j]);
            let (m0, m1) = (self.dphi[i * g + j], self.dphi[(i + 1) * g + j]);
            phi[j] = h00 * p0 + h10 * h * m0 + h01 * p1 + h11 * h * m1;
            dphi[j] = d00 * p0 + d10 * m0 + d01 * p1 + d11 * m1;
        }
        (phi, dphi)
    }

    /// Dirichlet eigenvalues and their `x`-derivatives at `x`.
    pub fn state(&self, x: f64) -> Result<DivisorState> {
        self.check_x(x)?;
        let g = self.genus();
        let mut st = DivisorState {
            g,
            mu: [0.0; MAX_GENUS],
            dmu: [0.0; MAX_GENUS],
        };
        if g == 0 {
            return Ok(st);
        }
        let (phi, dphi) = self.angles(x);
        for j in 0..g {
            let (c, r) = gap_geometry(&self.bands, j);
            let (s, co) = phi[j].sin_cos();
            st.mu[j] = c - r * co;
            st.dmu[j] = r * s * dphi[j];
        }
        Ok(st)
    }

    /// Divisor at `x` (the Dubrovin flow).
    pub fn dubrovin_flow(&self, x: f64) -> Result<DirichletDivisor> {
        self.check_x(x)?;
        let g = self.genus();
        if g == 0 {
            return Ok(DirichletDivisor::empty());
        }
        let (phi, dphi) = self.angles(x);
        let entries = (0..g)
            .map(|j| {
                let (c, r) = gap_geometry(&self.bands, j);
                let s = phi[j].sin();
                let sigma = if s.abs() > 1e-12 {
                    s.signum()
                } else {
                    // at an edge the sheet is the one the flow is heading to
                    (phi[j].cos() * dphi[j]).signum()
                };
                DivisorEntry {
                    mu: c - r * phi[j].cos(),
                    sigma: if sigma == 0.0 { 1.0 } else { sigma },
                }
            })
            .collect();
        Ok(DirichletDivisor { entries })
    }

    /// `V_q(x) = E_0 + sum_j (E_{2j-1} + E_{2j} - 2 μ_j(x))`.
    pub fn potential(&self, x: f64) -> Result<f64> {
        let st = self.state(x)?;
        let e = self.bands.edges();
        let mut v = e[0];
        for j in 0..st.g {
            v += e[2 * j + 1] + e[2 * j + 2] - 2.0 * st.mu[j];
        }
        Ok(v)
    }

    /// `(H(z,x), H_x(z,x))`.
    pub fn h_poly(&self, z: Complex64, x: f64) -> Result<(Complex64, Complex64)> {
        Ok(self.state(x)?.h_poly(z))
    }

    /// `(m_{q,+}, m_{q,-})` at `p`; on the lower sheet `R^{1/2}` changes sign.
    pub fn weyl_m(&self, p: &SurfacePoint, x: f64) -> Result<(Complex64, Complex64)> {
        let r = self.bands.sqrt_r_at(p)?;
        let (h, hx) = self.h_poly(p.z, x)?;
        if h.norm() <= 1e-14 * self.bands.scale().powi(self.genus() as i32) {
            return Err(Error::Pole(format!("z = {} is a Dirichlet eigenvalue at x = {x}", p.z)));
        }
        Ok(((I * r + 0.5 * hx) / h, (I * r - 0.5 * hx) / h))
    }

    /// `W(ψ_{q,-}, ψ_{q,+}) = 2i R^{1/2}(p) / H(z,0)`.
    pub fn wronskian(&self, p: &SurfacePoint) -> Result<Complex64> {
        let r = self.bands.sqrt_r_at(p)?;
        let (h, _) = self.h_poly(p.z, 0.0)?;
        if h.norm() == 0.0 {
            return Err(Error::Pole(format!("z = {} is a Dirichlet eigenvalue at x = 0", p.z)));
        }
        Ok(2.0 * I * r / h)
    }

    /// `(ψ_{q,+}(p,x), ψ_{q,-}(p,x))` normalized to 1 at `x = 0`.
    pub fn baker_akhiezer(&self, p: &SurfacePoint, x: f64) -> Result<(Complex64, Complex64)> {
        self.check_x(x)?;
        let z = p.z;
        let real_in_gap = z.im == 0.0 && !self.bands.in_spectrum(z.re) && self.genus() > 0;
        if !real_in_gap {
            let opts = QuadOptions {
                abs_tol: 1e-12,
                rel_tol: 1e-13,
                max_panels: 200_000,
            };
            let mut err = None;
            let ip = quad::adaptive(
                |y| match self.weyl_m(p, y) {
                    Ok((mp, _)) => mp,
                    Err(e) => {
                        err.get_or_insert(e);
                        Complex64::new(0.0, 0.0)
                    }
                },
                0.0,
                x,
                opts,
            )?;
            if let Some(e) = err {
                return Err(e);
            }
            // ψ_+ψ_- = H(z,x)/H(z,0)
            let (h0, _) = self.h_poly(z, 0.0)?;
            let (hx, _) = self.h_poly(z, x)?;
            let plus = ip.exp();
            return Ok((plus, hx / h0 / plus));
        }
        // real z in a gap: m has real poles in x, integrate the equation itself
        let (mp, mm) = self.weyl_m(p, 0.0)?;
        let rhs = |y: f64, u: &[Complex64; 2]| -> [Complex64; 2] {
            let v = self.potential(y.clamp(-self.x_max, self.x_max)).unwrap_or(0.0);
            [u[1], (v - z) * u[0]]
        };
        let opts = OdeOptions::default();
        let plus = ode::solve_to(rhs, 0.0, [Complex64::new(1.0, 0.0), mp], x, opts)?;
        let minus = ode::solve_to(rhs, 0.0, [Complex64::new(1.0, 0.0), -mm], x, opts)?;
        Ok((plus[0], minus[0]))
    }

    /// Green function `G_q(z,x,y) = ψ_{q,+}(z,max) ψ_{q,-}(z,min) / W(ψ_{q,+}, ψ_{q,-})`
    /// for `z` off the spectrum (physical sheet).
    pub fn green(&self, z: Complex64, x: f64, y: f64) -> Result<Complex64> {
        if z.im == 0.0 && self.bands.in_spectrum(z.re) {
            return Err(Error::Domain(format!("z = {z} lies in the spectrum")));
        }
        let p = SurfacePoint::upper(z);
        let r = self.bands.sqrt_r_at(&p)?;
        let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
        let (h_lo, _) = self.h_poly(z, lo)?;
        let diag = I * h_lo / (2.0 * r);
        if lo == hi {
            return Ok(diag);
        }
        let opts = QuadOptions {
            abs_tol: 1e-12,
            rel_tol: 1e-13,
            max_panels: 200_000,
        };
        let mut err = None;
        let ip = quad::adaptive(
            |t| match self.weyl_m(&p, t) {
                Ok((mp, _)) => mp,
                Err(e) => {
                    err.get_or_insert(e);
                    Complex64::new(0.0, 0.0)
                }
            },
            lo,
            hi,
            opts,
        )?;
        if let Some(e) = err {
            return Err(e);
        }
        Ok(diag * ip.exp())
    }

    /// Table `x, V_q(x), μ_1(x), …` with the given spacing.
    pub fn trajectory_csv(&self, spacing: f64) -> Result<String> {
        let x_max = if self.x_max.is_finite() { self.x_max } else { 10.0 };
        let n = (2.0 * x_max / spacing).floor() as usize;
        let mut out = String::from("x,V_q");
        for j in 1..=self.genus() {
            out.push_str(&format!(",mu_{j}"));
        }
        out.push('\n');
        for i in 0..=n {
            let x = -x_max + i as f64 * spacing;
            let st = self.state(x)?;
            out.push_str(&format!("{x:.6},{:.15e}", self.potential(x)?));
            for j in 0..st.g {
                out.push_str(&format!(",{:.15e}", st.mu[j]));
            }
            out.push('\n');
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn genus_one(mu: f64, sigma: f64, x_max: f64) -> FiniteGapPotential {
        let bands = BandStructure::new(vec![0.0, 1.0, 3.0]).unwrap();
        FiniteGapPotential::new(bands, DirichletDivisor::new(vec![DivisorEntry { mu, sigma }]), x_max).unwrap()
    }

    /// Shooting oracle: integrate the equation from `start` towards 0 and
    /// return the log-derivative of the solution there.
    fn shoot(pot: &FiniteGapPotential, z: Complex64, start: f64) -> Complex64 {
        let rhs = |y: f64, u: &[Complex64; 2]| [u[1], (pot.potential(y).unwrap() - z) * u[0]];
        let u = ode::solve_to(rhs, start, [Complex64::new(1.0, 0.0), Complex64::new(0.3, 0.1)], 0.0, OdeOptions::default()).unwrap();
        u[1] / u[0]
    }

    #[test]
    fn free_background_closed_forms() {
        let pot = FiniteGapPotential::free(0.0);
        assert_eq!(pot.potential(123.0).unwrap(), 0.0);
        assert!(pot.dubrovin_flow(5.0).unwrap().entries.is_empty());
        let (mp, mm) = pot.weyl_m(&SurfacePoint::upper(4.0), 1.0).unwrap();
        assert!((mp - 2.0 * I).norm() < 1e-15 && (mm - 2.0 * I).norm() < 1e-15);
        assert!((pot.green(Complex64::new(-1.0, 0.0), 0.3, 0.3).unwrap() - 0.5).norm() < 1e-15);
        assert!((pot.green(Complex64::new(-4.0, 0.0), 0.0, 0.0).unwrap() - 0.25).norm() < 1e-15);
        let w = pot.wronskian(&SurfacePoint::upper(Complex64::new(2.0, 1.0))).unwrap();
        let k = crate::riemann_surface::sqrt_upper(Complex64::new(2.0, 1.0));
        assert!((w - 2.0 * I * k).norm() < 1e-14);
        let (pp, pm) = pot.baker_akhiezer(&SurfacePoint::upper(4.0), 1.5).unwrap();
        assert!((pp - (I * 3.0).exp()).norm() < 1e-10);
        assert!((pm - (-I * 3.0).exp()).norm() < 1e-10);
        let g = pot.green(Complex64::new(-1.0, 0.0), 0.0, 2.0).unwrap();
        assert!((g - 0.5 * (-2f64).exp()).norm() < 1e-10);
    }

    #[test]
    fn genus_one_trace_formula_at_origin() {
        let pot = genus_one(2.0, 1.0, 10.0);
        assert!(pot.potential(0.0).unwrap().abs() < 1e-14);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..2000 {
            let v = pot.potential(-10.0 + i as f64 * 0.01).unwrap();
            lo = lo.min(v);
            hi = hi.max(v);
        }
        assert!(hi - lo <= 4.0 + 1e-12);
        assert!(hi - lo > 3.9, "μ should sweep the whole gap");
        assert!(pot.potential(10.5).is_err());
    }

    #[test]
    fn flow_leaves_an_edge_quadratically() {
        // near the edge: μ'^2 = -4 R(μ) ≈ 4 K (μ - 1) with K = -R'(1) = 2, so μ ≈ 1 + 2 x²
        let pot = genus_one(1.0, 1.0, 1.0);
        for x in [1e-3, -2e-3, 4e-3] {
            let mu = pot.dubrovin_flow(x).unwrap().entries[0].mu;
            assert!((mu - 1.0 - 2.0 * x * x).abs() < 1e-3 * x * x, "x={x}: {mu}");
        }
        let right = pot.dubrovin_flow(0.01).unwrap().entries[0].sigma;
        let left = pot.dubrovin_flow(-0.01).unwrap().entries[0].sigma;
        assert_eq!(right, -left);
    }

    #[test]
    fn flow_satisfies_dubrovin_equation() {
        let bands = BandStructure::new(vec![-1.0, 0.0, 1.0, 2.0, 4.0]).unwrap();
        let div = DirichletDivisor::new(vec![
            DivisorEntry { mu: 0.4, sigma: 1.0 },
            DivisorEntry { mu: 3.0, sigma: -1.0 },
        ]);
        let pot = FiniteGapPotential::new(bands.clone(), div, 8.0).unwrap();
        for x in [-7.3, -1.0, 0.0, 2.2, 7.9] {
            let st = pot.state(x).unwrap();
            for j in 0..2 {
                let r = bands.r_poly(Complex64::new(st.mu[j], 0.0)).re;
                let denom: f64 = (0..2).filter(|&k| k != j).map(|k| st.mu[j] - st.mu[k]).product();
                let lhs = (st.dmu[j] * denom).powi(2);
                assert!((lhs + 4.0 * r).abs() < 1e-8, "x={x} j={j}: {lhs} vs {}", -4.0 * r);
                let (a, b) = bands.gap(j + 1);
                assert!(st.mu[j] >= a - 1e-12 && st.mu[j] <= b + 1e-12);
            }
        }
    }

    #[test]
    fn genus_one_flow_is_periodic() {
        // φ' = -2 sqrt(μ): one period is ∫_0^{2π} dφ / (2 sqrt(2 - cos φ))
        let n = 4000;
        let period: f64 = (0..n)
            .map(|i| {
                let phi = 2.0 * std::f64::consts::PI * (i as f64 + 0.5) / n as f64;
                2.0 * std::f64::consts::PI / n as f64 / (2.0 * (2.0 - phi.cos()).sqrt())
            })
            .sum();
        let pot = genus_one(2.0, 1.0, 12.0);
        for x in [-5.0, 0.0, 3.3] {
            let a = pot.potential(x).unwrap();
            let b = pot.potential(x + period).unwrap();
            assert!((a - b).abs() < 1e-6, "x={x}: {a} vs {b}");
        }
    }

    #[test]
    fn weyl_functions_match_shooting() {
        let pot = genus_one(2.0, 1.0, 25.0);
        let z = Complex64::new(-1.0, 0.0);
        let (mp, mm) = pot.weyl_m(&SurfacePoint::upper(z), 0.0).unwrap();
        let oracle_p = shoot(&pot, z, 20.0);
        let oracle_m = -shoot(&pot, z, -20.0);
        assert!((mp - oracle_p).norm() < 1e-8, "{mp} vs {oracle_p}");
        assert!((mm - oracle_m).norm() < 1e-8, "{mm} vs {oracle_m}");
        // decaying branches: ψ_{q,±} = exp(±∫m_{q,±}) shrink towards ±∞
        assert!(mp.re < 0.0 && mm.re < 0.0);
        // G_q(-1,0,0) = i (-1-2) / (2 R^{1/2}(-1)), R^{1/2}(-1) = -2 sqrt 2 i
        let g = pot.green(z, 0.0, 0.0).unwrap();
        let expect = I * -3.0 / (2.0 * Complex64::new(0.0, -8f64.sqrt()));
        assert!((g - expect).norm() < 1e-12);
        assert!((g + 1.0 / (mp + mm)).norm() < 1e-12);
    }

    #[test]
    fn baker_akhiezer_solves_the_equation_and_is_bounded_on_bands() {
        let pot = genus_one(2.0, 1.0, 25.0);
        let p = SurfacePoint::upper(Complex64::new(0.5, 0.2));
        let (mp, _) = pot.weyl_m(&p, 0.0).unwrap();
        let rhs = |y: f64, u: &[Complex64; 2]| [u[1], (pot.potential(y).unwrap() - p.z) * u[0]];
        let u = ode::solve_to(rhs, 0.0, [Complex64::new(1.0, 0.0), mp], 3.0, OdeOptions::default()).unwrap();
        let (psi, _) = pot.baker_akhiezer(&p, 3.0).unwrap();
        assert!((psi - u[0]).norm() < 1e-8 * u[0].norm());
        // real z in a gap uses the direct integration path
        let q = SurfacePoint::upper(1.5);
        let (a, b) = pot.baker_akhiezer(&q, 1.0).unwrap();
        let w = pot.wronskian(&q).unwrap();
        assert!(a.im.abs() < 1e-12 && b.im.abs() < 1e-12 && w.im.abs() < 1e-12);
        // |θ| bounded on a band
        let band = SurfacePoint::upper(5.0);
        let omega = crate::riemann_surface::normalize_differential(
            pot.bands(),
            crate::riemann_surface::DifferentialKind::SecondKind { k: 1 },
        )
        .unwrap();
        let k = crate::riemann_surface::quasimomentum_with(&omega, band.z).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..=40 {
            let x = -20.0 + i as f64;
            let (pp, _) = pot.baker_akhiezer(&band, x).unwrap();
            worst = worst.max((pp * (-I * k * x).exp()).norm());
        }
        assert!(worst < 5.0, "{worst}");
    }

    #[test]
    fn rejects_inconsistent_divisors() {
        let bands = BandStructure::new(vec![0.0, 1.0, 3.0]).unwrap();
        let bad = DirichletDivisor::new(vec![DivisorEntry { mu: 0.5, sigma: 1.0 }]);
        assert!(FiniteGapPotential::new(bands.clone(), bad, 5.0).is_err());
        assert!(FiniteGapPotential::new(bands, DirichletDivisor::empty(), 5.0).is_err());
        let spec: BackgroundSpec =
            serde_json::from_str(r#"{"edges":[0,1,3],"divisor":[{"mu":2.0,"sigma":-1}],"x_max":4}"#).unwrap();
        let pot = spec.build(10.0).unwrap();
        assert_eq!(pot.x_max(), 4.0);
        assert!(pot.trajectory_csv(0.5).unwrap().starts_with("x,V_q,mu_1\n"));
    }
}
