//! Reconstruction of `T` from the eigenvalues and `|R|^2` on the spectrum:
//!
//! ```text
//! T(p) = Π_j exp(-∫_{E(ρ_j)}^{ρ_j} ω_{p p*}) · exp((2πi)^{-1} ∫_Σ log(1 - |R|^2) ω_{p p*})
//! ```
//!
//! with the `Σ`-integral taken over the bands on the upper sheet.
//!
//! On each half band the integrand is written in `s = sqrt(|λ - E|)` as
//! `F = 2v log s + G(s)` where `v = 1` if `T` vanishes at the edge `E` and
//! `G` is smooth. The logarithm is integrated with product weights on the
//! panel touching the edge, so the modulus data is never sampled inside the
//! edge exclusion zone.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::panels::{half_band, Panel};
use crate::quad::{adaptive, gauss16, QuadOptions};
use crate::riemann_surface::{
    blaschke_edge, holomorphic_basis, integrate, normalize_differential, AbelianDifferential, BandStructure,
    DifferentialKind, PathHint, SurfacePoint,
};
use crate::scattering::ScatteringData;

const I: Complex64 = Complex64::new(0.0, 1.0);

type Modulus = Arc<dyn Fn(f64) -> Result<f64> + Send + Sync>;

/// Scattering data that determines `T`: eigenvalues and `1 - |R_±|^2` on the bands.
#[derive(Clone)]
pub struct ReconstructionInput {
    pub bands: BandStructure,
    pub eigenvalues: Vec<f64>,
    /// `λ ↦ 1 - |R(λ)|^2` on band interiors.
    modulus: Modulus,
    /// Smallest admissible `|λ - E|` at which the modulus may be sampled.
    pub edge_clearance: f64,
}

impl std::fmt::Debug for ReconstructionInput {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ReconstructionInput")
            .field("bands", &self.bands)
            .field("eigenvalues", &self.eigenvalues)
            .field("edge_clearance", &self.edge_clearance)
            .finish()
    }
}

impl ReconstructionInput {
    pub fn new<F: Fn(f64) -> Result<f64> + Send + Sync + 'static>(
        bands: BandStructure,
        eigenvalues: Vec<f64>,
        modulus: F,
        edge_clearance: f64,
    ) -> Self {
        ReconstructionInput {
            bands,
            eigenvalues,
            modulus: Arc::new(modulus),
            edge_clearance,
        }
    }

    /// Eigenvalues and `1 - |R_+|^2` taken from computed scattering data.
    pub fn from_scattering(data: &ScatteringData) -> Self {
        let bands = data.problem.background().bands().clone();
        let clearance = 2.0 * data.problem.options().edge_exclusion * bands.scale();
        let problem = data.problem.clone();
        Self::new(
            bands,
            data.eigenvalue_values(),
            move |l| Ok(1.0 - problem.band_scattering(l)?.r_plus.norm_sqr()),
            clearance,
        )
    }

    /// Eigenvalues plus a table of `(λ, |R(λ)|^2)`, interpolated linearly
    /// within each band.
    pub fn from_table(bands: BandStructure, eigenvalues: Vec<f64>, mut table: Vec<(f64, f64)>) -> Result<Self> {
        table.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        if table.iter().any(|(l, r)| !bands.in_spectrum(*l) || !(0.0..=1.0).contains(r)) {
            return Err(Error::Domain("table points must lie on bands with 0 <= |R|^2 <= 1".into()));
        }
        let clearance = table
            .iter()
            .map(|(l, _)| bands.edges().iter().map(|e| (l - e).abs()).fold(f64::INFINITY, f64::min))
            .fold(f64::INFINITY, f64::min);
        let b2 = bands.clone();
        let f = move |l: f64| -> Result<f64> {
            let band = |x: f64| b2.spectrum().iter().position(|b| x >= b.lo && b.hi.map_or(true, |h| x <= h));
            let k = band(l);
            let pts: Vec<&(f64, f64)> = table.iter().filter(|p| band(p.0) == k).collect();
            if pts.len() < 2 {
                return Err(Error::Domain(format!("no table data around {l}")));
            }
            let i = pts.partition_point(|p| p.0 < l).clamp(1, pts.len() - 1);
            let (a, b) = (pts[i - 1], pts[i]);
            let t = (l - a.0) / (b.0 - a.0);
            Ok(1.0 - (a.1 + t * (b.1 - a.1)).clamp(0.0, 1.0))
        };
        Ok(Self::new(bands, eigenvalues, f, clearance))
    }

    pub fn modulus(&self, lambda: f64) -> Result<f64> {
        (self.modulus)(lambda)
    }
}

/// One half of a band, `λ = edge + dir s^2`, `s ∈ [0, s_max]`.
#[derive(Debug, Clone, Serialize)]
struct Half {
    edge: f64,
    dir: f64,
    /// Sign of the real boundary value `R^{1/2}(λ + i0)` on this band.
    sign: f64,
    /// Band edges other than `edge`.
    others: Vec<f64>,
    /// Samples of `G = F - 2v log s`.
    panels: Vec<Panel>,
    /// Order `v` of the zero of `T` in `s` at the edge.
    order: f64,
    exponent: f64,
    /// `∫_0^b log(s) ℓ_j(s) ds` for the Lagrange basis of the edge panel.
    log_weights: Vec<f64>,
}

impl Half {
    fn v(&self) -> f64 {
        self.order
    }

    /// `R^{1/2}(λ + i0) / s`, free of cancellation near the edge and
    /// continued analytically off the band.
    fn root_over_s(&self, lambda: Complex64) -> Complex64 {
        let prod: Complex64 = self.others.iter().map(|e| lambda - e).product();
        self.sign * (self.dir * prod).sqrt()
    }

    /// `2 s f(λ(s))` for `ω = f dλ` on the upper sheet.
    fn kernel(&self, diff: &AbelianDifferential, s: f64) -> Complex64 {
        let l = Complex64::new(self.edge + self.dir * s * s, 0.0);
        let q = self.root_over_s(l);
        let num = diff.numerator(l, q * s);
        2.0 * num / q
    }
}

/// Edge exponent of `1 - |R|^2` and whether `T` vanishes there.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EdgeBehaviour {
    pub edge: f64,
    /// Fitted `β` in `1 - |R|^2 ~ s^β`, `s = sqrt(|λ - E|)`.
    pub exponent: f64,
    pub vanishing: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct ReconstructionOptions {
    pub s_max: f64,
    pub top_panels: usize,
    pub band_panels: usize,
}

impl Default for ReconstructionOptions {
    fn default() -> Self {
        ReconstructionOptions {
            s_max: 40.0,
            top_panels: 40,
            band_panels: 4,
        }
    }
}

/// Constraint residual `r_ℓ` with its distance to the nearest integer.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConstraintResidual {
    pub value: Complex64,
    pub distance: f64,
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    bands: BandStructure,
    eigenvalues: Vec<f64>,
    halves: Vec<Half>,
}

impl Reconstruction {
    pub fn new(input: &ReconstructionInput) -> Result<Self> {
        Self::with_options(input, ReconstructionOptions::default())
    }

    pub fn with_options(input: &ReconstructionInput, opts: ReconstructionOptions) -> Result<Self> {
        let bands = input.bands.clone();
        let edges = bands.edges().to_vec();
        let g = bands.genus();
        let first_min = 250.0 * input.edge_clearance.sqrt();
        let mut specs: Vec<(f64, f64, f64)> = Vec::new();
        for b in 0..=g {
            let lo = edges[2 * b];
            if b == g {
                specs.push((lo, 1.0, opts.s_max));
            } else {
                let hi = edges[2 * b + 1];
                let sm = (0.5 * (hi - lo)).sqrt();
                specs.push((lo, 1.0, sm));
                specs.push((hi, -1.0, sm));
            }
        }
        let halves: Vec<Result<Half>> = specs
            .par_iter()
            .map(|&(edge, dir, sm)| {
                let n = if dir > 0.0 && edge == bands.top() {
                    opts.top_panels
                } else {
                    opts.band_panels
                };
                build_half(input, &bands, edge, dir, sm, n, first_min)
            })
            .collect();
        let halves = halves.into_iter().collect::<Result<Vec<_>>>()?;
        let mut eigenvalues = input.eigenvalues.clone();
        eigenvalues.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(Reconstruction {
            bands,
            eigenvalues,
            halves,
        })
    }

    pub fn bands(&self) -> &BandStructure {
        &self.bands
    }

    pub fn edge_behaviour(&self) -> Vec<EdgeBehaviour> {
        self.halves
            .iter()
            .map(|h| EdgeBehaviour {
                edge: h.edge,
                exponent: h.exponent,
                vanishing: h.order > 0.0,
            })
            .collect()
    }

    /// `∫_Σ log(1 - |R|^2) ω` on the upper sheet. Panels close to the
    /// finite pole of `ω` are integrated adaptively after subtracting the
    /// pole in the variable `s`.
    pub fn sigma_integral(&self, diff: &AbelianDifferential) -> Result<Complex64> {
        let opts = QuadOptions {
            abs_tol: 1e-12,
            rel_tol: 1e-12,
            max_panels: 50_000,
        };
        let pole = match &diff.kind {
            DifferentialKind::ThirdKindConjugate { p } => Some((p.z, self.bands.sqrt_r(p.z) * p.sheet.sign())),
            _ => None,
        };
        let mut total = Complex64::new(0.0, 0.0);
        for h in &self.halves {
            let v = h.v();
            for (k, p) in h.panels.iter().enumerate() {
                let close = pole.filter(|(z, _)| p.relative_distance(*z) < 2.0);
                if let Some((z, rp)) = close {
                    // λ - z = dir (s - s_p)(s + s_p)
                    let mut sp = (h.dir * (z - h.edge)).sqrt();
                    if sp.re < 0.0 {
                        sp = -sp;
                    }
                    let lp = z;
                    let amp = 2.0 * v * sp.ln() + p.interp_complex(sp);
                    let res = amp * rp / (h.root_over_s(lp) * h.dir * sp);
                    let smooth = adaptive(
                        |s| (2.0 * v * s.ln() + p.interp(s)) * h.kernel(diff, s) - res / (s - sp),
                        p.a,
                        p.b,
                        opts,
                    )?;
                    total += smooth + res * ((p.b - sp).ln() - (p.a - sp).ln());
                } else if k == 0 {
                    for (((s, w), gv), lw) in p.s_nodes().zip(&p.values).zip(&h.log_weights) {
                        total += h.kernel(diff, s) * (2.0 * v * lw + w * gv);
                    }
                } else {
                    for ((s, w), gv) in p.s_nodes().zip(&p.values) {
                        total += h.kernel(diff, s) * (w * (gv + 2.0 * v * s.ln()));
                    }
                }
            }
        }
        Ok(total)
    }

    fn check_point(&self, p: &SurfacePoint) -> Result<()> {
        if p.infinity {
            return Ok(());
        }
        if p.z.im == 0.0 && self.bands.in_spectrum(p.z.re) {
            return Err(Error::Domain("p lies on the boundary of the upper sheet".into()));
        }
        for &r in &self.eigenvalues {
            if (p.z - r).norm() < self.bands.branch_tolerance() {
                return Err(Error::Pole(format!("p = {} is an eigenvalue or its reflection", p.z)));
            }
        }
        Ok(())
    }

    /// `Σ_j ∫_{E(ρ_j)}^{ρ_j} ω` along the canonical real paths.
    pub fn eigenvalue_integrals(&self, diff: &AbelianDifferential) -> Result<Complex64> {
        let mut total = Complex64::new(0.0, 0.0);
        for &r in &self.eigenvalues {
            let e = blaschke_edge(&self.bands, r)?;
            if self.bands.is_branch_point(Complex64::new(r, 0.0)).is_some() {
                continue;
            }
            total += integrate(diff, &SurfacePoint::upper(e), &SurfacePoint::upper(r), &PathHint::default())?;
        }
        Ok(total)
    }

    /// Reconstructed `T(p)`; on the lower sheet this is `1/T(z)`.
    pub fn reconstruct_t(&self, p: &SurfacePoint) -> Result<Complex64> {
        if p.infinity {
            return Ok(Complex64::new(1.0, 0.0));
        }
        self.check_point(p)?;
        let omega = normalize_differential(&self.bands, DifferentialKind::ThirdKindConjugate { p: *p })?;
        let blaschke = self.eigenvalue_integrals(&omega)?;
        let sigma = self.sigma_integral(&omega)?;
        Ok((-blaschke + sigma / (2.0 * PI * I)).exp())
    }

    /// Residuals of the single-valuedness constraint, one per gap.
    pub fn constraint_residuals(&self) -> Result<Vec<ConstraintResidual>> {
        let basis = holomorphic_basis(&self.bands)?;
        basis
            .zeta
            .iter()
            .map(|z| {
                let eig = 2.0 * self.eigenvalue_integrals(z)?;
                let sig = 2.0 * self.sigma_integral(z)? / (2.0 * PI * I);
                let value = eig - sig;
                let distance = (value - value.re.round()).norm();
                Ok(ConstraintResidual { value, distance })
            })
            .collect()
    }

    /// Boundary values `T_±(λ)` from `Π_±`, extrapolated from `λ ± iδ`. The
    /// lower lip of the upper sheet is glued to `Π_-`, so `T_-(λ) = 1/T(λ - i0)`.
    pub fn boundary_values(&self, lambda: f64) -> Result<(Complex64, Complex64)> {
        if !self.bands.in_spectrum(lambda) {
            return Err(Error::Domain(format!("{lambda} is not in a band")));
        }
        let d = 1e-4 * self.bands.scale();
        let up = |h: f64| self.reconstruct_t(&SurfacePoint::upper(Complex64::new(lambda, h)));
        let dn = |h: f64| self.reconstruct_t(&SurfacePoint::lower(Complex64::new(lambda, -h)));
        // quadratic extrapolation to δ = 0
        let tp = 3.0 * up(d)? - 3.0 * up(2.0 * d)? + up(3.0 * d)?;
        let tm = 3.0 * dn(d)? - 3.0 * dn(2.0 * d)? + dn(3.0 * d)?;
        Ok((tp, tm))
    }

    /// `max |T_+(λ) - T_-(λ)(1 - |R(λ)|^2)|` over the samples.
    pub fn rh_jump_defect(&self, input: &ReconstructionInput, lambdas: &[f64]) -> Result<f64> {
        let defects: Vec<Result<f64>> = lambdas
            .par_iter()
            .map(|&l| {
                let (tp, tm) = self.boundary_values(l)?;
                Ok((tp - tm * input.modulus(l)?).norm())
            })
            .collect();
        defects.into_iter().try_fold(0.0, |m, d| Ok(f64::max(m, d?)))
    }
}

fn build_half(
    input: &ReconstructionInput,
    bands: &BandStructure,
    edge: f64,
    dir: f64,
    s_max: f64,
    n: usize,
    first_min: f64,
) -> Result<Half> {
    let others: Vec<f64> = bands.edges().iter().copied().filter(|e| *e != edge).collect();
    let mid = edge + dir * 0.5 * s_max * s_max;
    let sign = bands.sqrt_r(Complex64::new(mid, 0.0)).re.signum();
    let fval = |s: f64| -> Result<f64> {
        let m = input.modulus(edge + dir * s * s)?;
        if !(m > 0.0) {
            return Err(Error::IntegrableSingularity(edge));
        }
        Ok(m.ln())
    };
    // local exponent from two samples just outside the clearance zone
    let s0 = (2.0 * input.edge_clearance).sqrt().max(1e-300);
    let exponent = (fval(2.0 * s0)? - fval(s0)?) / 2f64.ln();
    // 1 - |R|^2 ~ s^{2v} with integer v >= 0 (v = 1: T vanishes at the edge)
    let v = (0.5 * exponent).round();
    if !(v >= 0.0) || (exponent - 2.0 * v).abs() > 0.5 {
        return Err(Error::IntegrableSingularity(edge));
    }
    let mut panels: Vec<Panel> = half_band(s_max, n, first_min)
        .into_iter()
        .map(|(a, b)| Panel {
            edge,
            dir,
            a,
            b,
            values: Vec::new(),
        })
        .collect();
    for p in panels.iter_mut() {
        let ss: Vec<f64> = p.s_nodes().map(|(s, _)| s).collect();
        p.values = ss
            .iter()
            .map(|&s| Ok(fval(s)? - 2.0 * v * s.ln()))
            .collect::<Result<Vec<f64>>>()?;
    }
    let log_weights = product_log_weights(&panels[0])?;
    Ok(Half {
        edge,
        dir,
        sign,
        others,
        panels,
        order: v,
        exponent,
        log_weights,
    })
}

/// `∫_a^b log(s) ℓ_j(s) ds` for the Lagrange basis through the panel's Gauss
/// nodes, with `a = 0`. Uses `s = b u^6` to smooth the logarithm.
fn product_log_weights(panel: &Panel) -> Result<Vec<f64>> {
    let n = gauss16().nodes.len();
    let b = panel.b;
    let opts = QuadOptions {
        abs_tol: 1e-15,
        rel_tol: 1e-14,
        max_panels: 10_000,
    };
    (0..n)
        .map(|j| {
            let mut basis = panel.clone();
            basis.values = (0..n).map(|k| if k == j { 1.0 } else { 0.0 }).collect();
            let v = adaptive(
                |u| {
                    let s = b * u.powi(6);
                    Complex64::new(s.ln() * basis.interp(s) * 6.0 * b * u.powi(5), 0.0)
                },
                0.0,
                1.0,
                opts,
            )?;
            Ok(v.re)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::{DirichletDivisor, DivisorEntry, FiniteGapPotential};
    use crate::perturbation::Perturbation;
    use crate::scattering::ScatteringProblem;

    fn free(expr: &str) -> ScatteringData {
        ScatteringProblem::new(FiniteGapPotential::free(0.0), Perturbation::from_expression(expr).unwrap())
            .unwrap()
            .scattering_data()
            .unwrap()
    }

    fn genus_one(f: fn(f64) -> f64) -> ScatteringData {
        let bands = BandStructure::new(vec![0.0, 1.0, 3.0]).unwrap();
        let bg = FiniteGapPotential::new(bands, DirichletDivisor::new(vec![DivisorEntry { mu: 2.0, sigma: 1.0 }]), 30.0).unwrap();
        ScatteringProblem::new(bg, Perturbation::from_fn(f).unwrap())
            .unwrap()
            .scattering_data()
            .unwrap()
    }

    fn points() -> Vec<Complex64> {
        vec![
            Complex64::new(-2.0, 0.5),
            Complex64::new(0.5, 0.5),
            Complex64::new(2.0, 0.3),
            Complex64::new(6.0, 2.0),
            Complex64::new(-0.5, 0.0),
        ]
    }

    #[test]
    fn log_weights_are_exact_for_polynomials() {
        let p = Panel {
            edge: 0.0,
            dir: 1.0,
            a: 0.0,
            b: 0.7,
            values: Vec::new(),
        };
        let w = product_log_weights(&p).unwrap();
        let nodes: Vec<f64> = p.s_nodes().map(|x| x.0).collect();
        // ∫_0^b s^3 log s ds = b^4 (log b / 4 - 1/16)
        let got: f64 = nodes.iter().zip(&w).map(|(s, w)| s.powi(3) * w).sum();
        let b: f64 = 0.7;
        let want = b.powi(4) * (b.ln() / 4.0 - 1.0 / 16.0);
        assert!((got - want).abs() < 1e-13, "{got} vs {want}");
    }

    #[test]
    fn reflectionless_soliton_is_pure_blaschke() {
        let d = free("-2*sech(x)^2");
        let input = ReconstructionInput::from_scattering(&d);
        let rec = Reconstruction::new(&input).unwrap();
        for z in points().into_iter().filter(|z| z.im != 0.0) {
            let want = (z.sqrt() + I) / (z.sqrt() - I);
            let got = rec.reconstruct_t(&SurfacePoint::upper(z)).unwrap();
            assert!((got - want).norm() < 1e-5 * want.norm(), "{z}: {got} vs {want}");
        }
    }

    #[test]
    fn gaussian_round_trip_and_jump() {
        let d = free("0.7*exp(-x^2)");
        let input = ReconstructionInput::from_scattering(&d);
        let rec = Reconstruction::new(&input).unwrap();
        assert!(rec.edge_behaviour()[0].vanishing);
        for z in points() {
            let want = d.t(z).unwrap();
            let got = rec.reconstruct_t(&SurfacePoint::upper(z)).unwrap();
            assert!((got - want).norm() < 1e-6 * want.norm(), "{z}: {got} vs {want}");
            let inv = rec.reconstruct_t(&SurfacePoint::lower(z)).unwrap();
            assert!((got * inv - 1.0).norm() < 1e-10);
        }
        let defect = rec.rh_jump_defect(&input, &[0.3, 2.0, 10.0]).unwrap();
        assert!(defect < 1e-6, "{defect}");
        let far = rec.reconstruct_t(&SurfacePoint::upper(Complex64::new(0.0, 1e6))).unwrap();
        assert!((far - 1.0).norm() < 1e-3);
        assert!(rec.constraint_residuals().unwrap().is_empty());
    }

    #[test]
    fn genus_one_round_trip_and_constraint() {
        let d = genus_one(|x| -1.5 * (-x * x).exp());
        let input = ReconstructionInput::from_scattering(&d);
        let rec = Reconstruction::new(&input).unwrap();
        for z in points().into_iter().filter(|z| z.im != 0.0) {
            let want = d.t(z).unwrap();
            let got = rec.reconstruct_t(&SurfacePoint::upper(z)).unwrap();
            assert!((got - want).norm() < 1e-5 * want.norm(), "{z}: {got} vs {want}");
        }
        let res = rec.constraint_residuals().unwrap();
        assert_eq!(res.len(), 1);
        assert!(res[0].distance < 1e-3, "{:?}", res[0]);

        // squaring |T|^2 (doubling log(1 - |R|^2)) breaks the constraint
        let doubled = ReconstructionInput::new(
            input.bands.clone(),
            input.eigenvalues.clone(),
            {
                let inp = input.clone();
                move |l| Ok(inp.modulus(l)?.powi(2))
            },
            input.edge_clearance,
        );
        let bad = Reconstruction::new(&doubled).unwrap().constraint_residuals().unwrap();
        assert!(bad[0].distance > 1e-2, "{:?}", bad[0]);
    }
}
