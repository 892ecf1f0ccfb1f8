//! The two-sheeted hyperelliptic surface of `R^{1/2}(z)`, `R(z) = prod (z - E_j)`,
//! and the normalized Abelian differentials living on it.
//!
//! Branch convention: on the upper sheet `R^{1/2}(z) ~ z^{g} sqrt(z)` with
//! `Im sqrt(z) > 0` off `[0, inf)`, and the cuts run exactly along the
//! spectrum `[E_0,E_1] ∪ … ∪ [E_2g, inf)`. Real arguments lying on a band
//! are read as boundary values from the upper half plane.
//!
//! a-cycles encircle the gaps `(E_{2j-1}, E_{2j})`; they are evaluated as
//! `int_gap (f(λ,+) - f(λ,-)) dλ`, which for odd differentials is twice the
//! upper-sheet gap integral.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{self, EndpointSingularity, QuadOptions};

const I: Complex64 = Complex64::new(0.0, 1.0);

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Principal square root with a signed-zero-free convention: a vanishing
/// imaginary part is always read as `+0`.
pub(crate) fn psqrt(w: Complex64) -> Complex64 {
    if w.im == 0.0 {
        if w.re >= 0.0 {
            c(w.re.sqrt())
        } else {
            Complex64::new(0.0, (-w.re).sqrt())
        }
    } else {
        w.sqrt()
    }
}

/// `sqrt(z)` with the cut along `[0, inf)` and `Im sqrt(z) >= 0`;
/// positive reals give the boundary value from above (`+sqrt(x)`).
pub fn sqrt_upper(z: Complex64) -> Complex64 {
    if z.im == 0.0 && z.re > 0.0 {
        c(z.re.sqrt())
    } else {
        I * psqrt(-z)
    }
}

pub(crate) fn horner(coeffs: &[Complex64], x: Complex64) -> Complex64 {
    coeffs.iter().rev().fold(c(0.0), |acc, a| acc * x + a)
}

/// Band edges `E_0 < E_1 < … < E_2g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct BandStructure {
    edges: Vec<f64>,
}

impl TryFrom<Vec<f64>> for BandStructure {
    type Error = Error;
    fn try_from(edges: Vec<f64>) -> Result<Self> {
        BandStructure::new(edges)
    }
}

impl From<BandStructure> for Vec<f64> {
    fn from(b: BandStructure) -> Vec<f64> {
        b.edges
    }
}

/// One connected component of the spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub lo: f64,
    /// `None` for the half line `[E_2g, inf)`.
    pub hi: Option<f64>,
}

impl BandStructure {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.is_empty() || edges.len() % 2 == 0 {
            return Err(Error::InvalidBands(format!(
                "need an odd number of edges, got {}",
                edges.len()
            )));
        }
        if edges.iter().any(|e| !e.is_finite()) {
            return Err(Error::InvalidBands("edges must be finite".into()));
        }
        if edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidBands("edges must be strictly increasing".into()));
        }
        Ok(BandStructure { edges })
    }

    /// Free background `H_q = -d²/dx² + e0`.
    pub fn free(e0: f64) -> Self {
        BandStructure { edges: vec![e0] }
    }

    pub fn genus(&self) -> usize {
        (self.edges.len() - 1) / 2
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn e0(&self) -> f64 {
        self.edges[0]
    }

    pub fn top(&self) -> f64 {
        *self.edges.last().unwrap()
    }

    /// Energy scale used for tolerances: `E_2g - E_0`, or 1 at genus zero.
    pub fn scale(&self) -> f64 {
        if self.genus() == 0 {
            1.0
        } else {
            self.top() - self.e0()
        }
    }

    pub fn branch_tolerance(&self) -> f64 {
        1e-12 * self.scale()
    }

    pub fn spectrum(&self) -> Vec<Band> {
        let g = self.genus();
        let mut out: Vec<Band> = (0..g)
            .map(|j| Band {
                lo: self.edges[2 * j],
                hi: Some(self.edges[2 * j + 1]),
            })
            .collect();
        out.push(Band {
            lo: self.top(),
            hi: None,
        });
        out
    }

    /// Open gap `(E_{2j-1}, E_{2j})`, `1 <= j <= g`.
    pub fn gap(&self, j: usize) -> (f64, f64) {
        assert!(j >= 1 && j <= self.genus(), "gap index {j} out of range");
        (self.edges[2 * j - 1], self.edges[2 * j])
    }

    pub fn in_spectrum(&self, x: f64) -> bool {
        self.spectrum()
            .iter()
            .any(|b| x >= b.lo && b.hi.map_or(true, |h| x <= h))
    }

    /// Index `j` of the open gap containing `x`, if any.
    pub fn gap_index(&self, x: f64) -> Option<usize> {
        (1..=self.genus()).find(|&j| {
            let (a, b) = self.gap(j);
            x > a && x < b
        })
    }

    pub fn is_branch_point(&self, z: Complex64) -> Option<usize> {
        let tol = self.branch_tolerance();
        self.edges
            .iter()
            .position(|e| (z - e).norm() <= tol.max(1e-300))
    }

    /// `R(z) = prod (z - E_j)`.
    pub fn r_poly(&self, z: Complex64) -> Complex64 {
        self.edges.iter().map(|e| z - e).product()
    }

    /// Upper-sheet value of `R^{1/2}(z)`. Real `z` on a band gives the
    /// boundary value from above.
    pub fn sqrt_r(&self, z: Complex64) -> Complex64 {
        let z = if z.im == 0.0 { c(z.re) } else { z };
        let g = self.genus();
        let mut acc = c(1.0);
        for j in 0..g {
            acc *= psqrt(z - self.edges[2 * j]) * psqrt(z - self.edges[2 * j + 1]);
        }
        acc * sqrt_upper(z - self.top())
    }

    /// `R^{1/2}(x) / sqrt((x - a)(b - x))` for `x` in the closed gap `j`
    /// (1-based) with edges `a < b`; smooth and nonzero up to the edges.
    pub fn sqrt_r_gap_reduced(&self, j: usize, x: f64) -> Complex64 {
        let z = c(x);
        let mut acc = Complex64::new(0.0, 1.0);
        for (k, e) in self.edges.iter().enumerate() {
            if k != 2 * j - 1 && k != 2 * j {
                acc *= if k == self.edges.len() - 1 { sqrt_upper(z - e) } else { psqrt(z - e) };
            }
        }
        acc
    }

    /// `R^{1/2}` at a point of the surface.
    pub fn sqrt_r_at(&self, p: &SurfacePoint) -> Result<Complex64> {
        if p.infinity {
            return Err(Error::Domain("R^{1/2} is singular at p_inf".into()));
        }
        if let Some(j) = self.is_branch_point(p.z) {
            return Err(Error::BranchPoint(self.edges[j]));
        }
        Ok(self.sqrt_r(p.z) * p.sheet.sign())
    }

    /// Coefficients `c_m` of `sqrt(prod (1 - E_j w)) = sum c_m w^m`, which
    /// fix the high-order part of the second-kind differentials.
    pub fn sqrt_series(&self, n_terms: usize) -> Vec<f64> {
        let mut q = vec![0.0; n_terms.max(1)];
        q[0] = 1.0;
        for e in &self.edges {
            for m in (1..q.len()).rev() {
                q[m] -= e * q[m - 1];
            }
        }
        let mut s = vec![0.0; n_terms.max(1)];
        s[0] = 1.0;
        for m in 1..s.len() {
            let cross: f64 = (1..m).map(|i| s[i] * s[m - i]).sum();
            s[m] = 0.5 * (q[m] - cross);
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sheet {
    #[serde(rename = "+")]
    Upper,
    #[serde(rename = "-")]
    Lower,
}

impl Sheet {
    pub fn sign(self) -> f64 {
        match self {
            Sheet::Upper => 1.0,
            Sheet::Lower => -1.0,
        }
    }

    pub fn flip(self) -> Sheet {
        match self {
            Sheet::Upper => Sheet::Lower,
            Sheet::Lower => Sheet::Upper,
        }
    }

    pub fn from_sign(s: f64) -> Sheet {
        if s >= 0.0 {
            Sheet::Upper
        } else {
            Sheet::Lower
        }
    }
}

/// A point `p = (z, ±)` of the surface, or `p_inf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub z: Complex64,
    pub sheet: Sheet,
    #[serde(default)]
    pub infinity: bool,
}

impl SurfacePoint {
    pub fn upper(z: impl Into<Complex64>) -> Self {
        SurfacePoint {
            z: z.into(),
            sheet: Sheet::Upper,
            infinity: false,
        }
    }

    pub fn lower(z: impl Into<Complex64>) -> Self {
        SurfacePoint {
            z: z.into(),
            sheet: Sheet::Lower,
            infinity: false,
        }
    }

    pub fn infinity() -> Self {
        SurfacePoint {
            z: c(f64::INFINITY),
            sheet: Sheet::Upper,
            infinity: true,
        }
    }

    /// Sheet exchange `p -> p*`.
    pub fn star(&self) -> Self {
        SurfacePoint {
            sheet: self.sheet.flip(),
            ..*self
        }
    }

    pub fn projection(&self) -> Complex64 {
        self.z
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DifferentialKind {
    /// `ω_{pq}`: residue `+1` at `p`, `-1` at `q`.
    ThirdKind { p: SurfacePoint, q: SurfacePoint },
    /// `ω_{p p*}`.
    ThirdKindConjugate { p: SurfacePoint },
    /// `ω_{p∞, 2k-2}`, principal part `ζ^{-2k} dζ` with `ζ = z^{-1/2}`.
    SecondKind { k: usize },
    /// Holomorphic differential `P(π) dπ / R^{1/2}` with `deg P <= g-1`.
    Holomorphic { index: usize },
}

/// A normalized differential `f(π) dπ`.
///
/// For the third kind `coefficients` holds the normalization polynomial
/// `P`; for the second kind and holomorphic differentials it holds the whole
/// numerator over `R^{1/2}`. Coefficients are in ascending powers.
#[derive(Debug, Clone, PartialEq)]
pub struct AbelianDifferential {
    pub bands: BandStructure,
    pub kind: DifferentialKind,
    pub coefficients: Vec<Complex64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DifferentialRecord {
    pub kind: DifferentialKind,
    pub poles: Vec<SurfacePoint>,
    pub coefficients: Vec<[f64; 2]>,
}

impl AbelianDifferential {
    /// Finite poles of the differential.
    pub fn poles(&self) -> Vec<SurfacePoint> {
        match &self.kind {
            DifferentialKind::ThirdKind { p, q } => vec![*p, *q],
            DifferentialKind::ThirdKindConjugate { p } => vec![*p, p.star()],
            _ => Vec::new(),
        }
    }

    pub fn to_record(&self) -> DifferentialRecord {
        DifferentialRecord {
            kind: self.kind.clone(),
            poles: self.poles(),
            coefficients: self.coefficients.iter().map(|a| [a.re, a.im]).collect(),
        }
    }

    /// Density `f(x)` of `ω = f(x) dx` on the given sheet.
    pub fn density(&self, x: Complex64, sheet: Sheet) -> Complex64 {
        let r = self.bands.sqrt_r(x) * sheet.sign();
        self.numerator(x, r) / r
    }

    /// `f(x) R^{1/2}(x)` given the sheet value `r` of `R^{1/2}(x)`.
    pub(crate) fn numerator(&self, x: Complex64, r: Complex64) -> Complex64 {
        let poly = horner(&self.coefficients, x);
        match &self.kind {
            DifferentialKind::ThirdKindConjugate { p } => {
                let rp = self.bands.sqrt_r(p.z) * p.sheet.sign();
                rp / (x - p.z) + poly
            }
            DifferentialKind::ThirdKind { p, q } => {
                let rp = self.bands.sqrt_r(p.z) * p.sheet.sign();
                let rq = self.bands.sqrt_r(q.z) * q.sheet.sign();
                (r + rp) / (2.0 * (x - p.z)) - (r + rq) / (2.0 * (x - q.z)) + poly
            }
            DifferentialKind::SecondKind { .. } | DifferentialKind::Holomorphic { .. } => poly,
        }
    }

    /// Real poles of `f(λ,+) - f(λ,-)` with their residues; used for
    /// principal values when a pole sits inside a gap.
    fn odd_real_poles(&self) -> Vec<(f64, Complex64)> {
        let mut out = Vec::new();
        let mut push = |pt: &SurfacePoint, sign: f64| {
            if pt.z.im == 0.0 {
                let rp = self.bands.sqrt_r(pt.z) * pt.sheet.sign();
                let r_up = self.bands.sqrt_r(pt.z);
                if r_up.norm() > 0.0 {
                    out.push((pt.z.re, rp / r_up * sign));
                }
            }
        };
        match &self.kind {
            DifferentialKind::ThirdKindConjugate { p } => push(p, 2.0),
            DifferentialKind::ThirdKind { p, q } => {
                push(p, 1.0);
                push(q, -1.0);
            }
            _ => {}
        }
        out
    }

    /// `∮_{a_j} ω`, principal value when a pole lies on the cycle.
    pub fn a_period(&self, j: usize, opts: QuadOptions) -> Result<Complex64> {
        let (a, b) = self.bands.gap(j);
        let poles: Vec<(f64, Complex64)> = self
            .odd_real_poles()
            .into_iter()
            .filter(|(x, _)| *x > a && *x < b)
            .collect();
        // odd part times sqrt((x-a)(b-x)); the numerator sum is free of r
        let odd = |x: f64| {
            let xc = c(x);
            let r = self.bands.sqrt_r(xc);
            (self.numerator(xc, r) + self.numerator(xc, -r)) / self.bands.sqrt_r_gap_reduced(j, x)
        };
        let mut pv = c(0.0);
        for (x0, res) in &poles {
            pv += res * ((b - x0) / (x0 - a)).ln();
        }
        let val = quad::chebyshev_interval(
            |x| {
                let mut v = odd(x);
                let w = ((x - a) * (b - x)).max(0.0).sqrt();
                for (x0, res) in &poles {
                    v -= res * w / (x - x0);
                }
                v
            },
            a,
            b,
            opts,
        )?;
        Ok(val + pv)
    }
}

/// Path options for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct PathHint {
    /// Height of the detour above (or below) the real axis; `None` picks
    /// `0.25 * scale`.
    pub detour_height: Option<f64>,
    pub quad: QuadOptions,
}

impl Default for PathHint {
    fn default() -> Self {
        PathHint {
            detour_height: None,
            quad: QuadOptions {
                abs_tol: 1e-12,
                rel_tol: 1e-13,
                max_panels: 50_000,
            },
        }
    }
}

fn monomial_a_periods(bands: &BandStructure, n: usize, opts: QuadOptions) -> Result<DMatrix<Complex64>> {
    let g = bands.genus();
    let mut a = DMatrix::<Complex64>::zeros(g, n);
    for j in 1..=g {
        let (lo, hi) = bands.gap(j);
        for m in 0..n {
            let v = quad::chebyshev_interval(|x| 2.0 * c(x.powi(m as i32)) / bands.sqrt_r_gap_reduced(j, x), lo, hi, opts)?;
            a[(j - 1, m)] = v;
        }
    }
    Ok(a)
}

fn solve_square(a: DMatrix<Complex64>, rhs: Vec<Complex64>) -> Result<Vec<Complex64>> {
    let n = rhs.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let scale = a.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let lu = a.lu();
    let det = lu.determinant();
    if !(det.norm() > 1e-13 * scale.powi(n as i32)) {
        return Err(Error::SingularSystem);
    }
    let b = nalgebra::DVector::from_vec(rhs);
    let x = lu.solve(&b).ok_or(Error::SingularSystem)?;
    Ok(x.iter().copied().collect())
}

/// Builds the differential of the requested kind with vanishing a-periods.
pub fn normalize_differential(bands: &BandStructure, kind: DifferentialKind) -> Result<AbelianDifferential> {
    normalize_with(bands, kind, QuadOptions { abs_tol: 1e-13, rel_tol: 1e-13, max_panels: 20_000 })
}

pub fn normalize_with(bands: &BandStructure, kind: DifferentialKind, opts: QuadOptions) -> Result<AbelianDifferential> {
    let g = bands.genus();
    for p in match &kind {
        DifferentialKind::ThirdKind { p, q } => vec![*p, *q],
        DifferentialKind::ThirdKindConjugate { p } => vec![*p],
        _ => vec![],
    } {
        if p.infinity {
            return Err(Error::Domain("third-kind poles must be finite".into()));
        }
        if let Some(j) = bands.is_branch_point(p.z) {
            return Err(Error::BranchPoint(bands.edges()[j]));
        }
    }
    let fixed: Vec<Complex64> = match &kind {
        DifferentialKind::SecondKind { k } => {
            if *k == 0 {
                return Err(Error::Domain("second-kind index k starts at 1".into()));
            }
            let deg = g + k - 1;
            let series = bands.sqrt_series(deg + 1);
            let mut num = vec![c(0.0); deg + 1];
            for (m, cm) in series.iter().enumerate().take(*k) {
                num[deg - m] = c(-0.5 * cm);
            }
            num
        }
        DifferentialKind::Holomorphic { index } => {
            if *index >= g {
                return Err(Error::Domain(format!("holomorphic index {index} >= genus {g}")));
            }
            let basis = holomorphic_basis_with(bands, opts)?;
            return Ok(basis.zeta[*index].clone());
        }
        _ => vec![c(0.0); g],
    };
    let mut diff = AbelianDifferential {
        bands: bands.clone(),
        kind,
        coefficients: fixed,
    };
    if g == 0 {
        return Ok(diff);
    }
    let amat = monomial_a_periods(bands, g, opts)?;
    let rhs: Vec<Complex64> = (1..=g)
        .map(|j| diff.a_period(j, opts).map(|v| -v))
        .collect::<Result<_>>()?;
    let corr = solve_square(amat, rhs)?;
    for (m, v) in corr.into_iter().enumerate() {
        diff.coefficients[m] += v;
    }
    Ok(diff)
}

/// `g` holomorphic differentials normalized by `∮_{a_j} ζ_ℓ = δ_{jℓ}`.
#[derive(Debug, Clone)]
pub struct HolomorphicBasis {
    pub zeta: Vec<AbelianDifferential>,
}

pub fn holomorphic_basis(bands: &BandStructure) -> Result<HolomorphicBasis> {
    holomorphic_basis_with(bands, QuadOptions { abs_tol: 1e-13, rel_tol: 1e-13, max_panels: 20_000 })
}

fn holomorphic_basis_with(bands: &BandStructure, opts: QuadOptions) -> Result<HolomorphicBasis> {
    let g = bands.genus();
    if g == 0 {
        return Ok(HolomorphicBasis { zeta: Vec::new() });
    }
    let amat = monomial_a_periods(bands, g, opts)?;
    let mut zeta = Vec::with_capacity(g);
    for l in 0..g {
        // sum_m C_{lm} A_{jm} = δ_{jl}
        let mut rhs = vec![c(0.0); g];
        rhs[l] = c(1.0);
        let coeffs = solve_square(amat.clone(), rhs)?;
        zeta.push(AbelianDifferential {
            bands: bands.clone(),
            kind: DifferentialKind::Holomorphic { index: l },
            coefficients: coeffs,
        });
    }
    Ok(HolomorphicBasis { zeta })
}

fn is_real(z: Complex64) -> bool {
    z.im == 0.0
}

/// Whether the closed real segment `[a, b]` avoids band interiors.
fn segment_off_spectrum(bands: &BandStructure, a: f64, b: f64) -> bool {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    let tol = bands.branch_tolerance();
    if hi <= bands.e0() + tol {
        return true;
    }
    (1..=bands.genus()).any(|j| {
        let (ga, gb) = bands.gap(j);
        lo >= ga - tol && hi <= gb + tol
    })
}

/// Legs of the canonical path between two projections.
pub fn canonical_path(bands: &BandStructure, from: Complex64, to: Complex64, hint: &PathHint) -> Result<Vec<(Complex64, Complex64)>> {
    if from == to {
        return Ok(Vec::new());
    }
    if is_real(from) && is_real(to) && segment_off_spectrum(bands, from.re, to.re) {
        return Ok(vec![(from, to)]);
    }
    if from.im * to.im < 0.0 {
        return Err(Error::Domain(
            "endpoints on opposite sides of the real axis; split the path".into(),
        ));
    }
    let side = if from.im < 0.0 || to.im < 0.0 { -1.0 } else { 1.0 };
    let h0 = hint.detour_height.unwrap_or(0.25 * bands.scale());
    let h = h0.max(from.im.abs()).max(to.im.abs());
    let a = Complex64::new(from.re, side * h);
    let b = Complex64::new(to.re, side * h);
    let mut legs = Vec::new();
    for (s, e) in [(from, a), (a, b), (b, to)] {
        if s != e {
            legs.push((s, e));
        }
    }
    Ok(legs)
}

/// `∫_from^to ω` along the canonical path. Both endpoints are taken on the
/// sheet of `to` (a branch-point endpoint belongs to both sheets).
pub fn integrate(diff: &AbelianDifferential, from: &SurfacePoint, to: &SurfacePoint, hint: &PathHint) -> Result<Complex64> {
    if from.infinity || to.infinity {
        return Err(Error::Domain("path endpoints must be finite".into()));
    }
    let bands = &diff.bands;
    let from_branch = bands.is_branch_point(from.z).is_some();
    let to_branch = bands.is_branch_point(to.z).is_some();
    let sheet = if to_branch { from.sheet } else { to.sheet };
    if !from_branch && !to_branch && from.sheet != to.sheet {
        return Err(Error::Domain(
            "endpoints on different sheets must be joined through a branch point".into(),
        ));
    }
    let from_z = from_branch.then(|| c(bands.edges()[bands.is_branch_point(from.z).unwrap()])).unwrap_or(from.z);
    let to_z = to_branch.then(|| c(bands.edges()[bands.is_branch_point(to.z).unwrap()])).unwrap_or(to.z);
    let legs = canonical_path(bands, from_z, to_z, hint)?;
    let poles = diff.poles();
    let tol = 1e-12 * bands.scale();
    let mut total = c(0.0);
    let n_legs = legs.len();
    for (i, (s, e)) in legs.into_iter().enumerate() {
        for p in &poles {
            if p.sheet != sheet && !is_real(p.z) {
                continue;
            }
            let d = e - s;
            let t = ((p.z - s) * d.conj()).re / d.norm_sqr();
            let closest = s + d * t.clamp(0.0, 1.0);
            // a real pole on the upper sheet blocks the leg only on its own sheet
            if (closest - p.z).norm() < tol && p.sheet == sheet {
                return Err(Error::PathThroughPole(format!("{}", p.z)));
            }
        }
        let sing = EndpointSingularity {
            start: i == 0 && from_branch || bands.is_branch_point(s).is_some(),
            end: i + 1 == n_legs && to_branch || bands.is_branch_point(e).is_some(),
        };
        total += quad::segment(|x| diff.density(x, sheet), s, e, sing, hint.quad)?;
    }
    Ok(total)
}

/// Quasimomentum `k(z) = -∫_{E_0}^{(z,+)} ω_{p∞,0}`.
pub fn quasimomentum(bands: &BandStructure, z: Complex64) -> Result<Complex64> {
    let omega = normalize_differential(bands, DifferentialKind::SecondKind { k: 1 })?;
    quasimomentum_with(&omega, z)
}

pub fn quasimomentum_with(omega0: &AbelianDifferential, z: Complex64) -> Result<Complex64> {
    let bands = &omega0.bands;
    if let Some(j) = bands.is_branch_point(z) {
        if j != 0 {
            return Err(Error::BranchPoint(bands.edges()[j]));
        }
        return Ok(c(0.0));
    }
    let v = integrate(omega0, &SurfacePoint::upper(bands.e0()), &SurfacePoint::upper(z), &PathHint::default())?;
    Ok(-v)
}

/// Diagnostic fit of the constant in `k(z) = sqrt(z) + c + O(z^{-1/2})`.
pub fn quasimomentum_offset(bands: &BandStructure) -> Result<Complex64> {
    let omega = normalize_differential(bands, DifferentialKind::SecondKind { k: 1 })?;
    let y = 1e4 * bands.scale();
    let d = |yy: f64| -> Result<Complex64> {
        let z = Complex64::new(0.0, yy);
        Ok(quasimomentum_with(&omega, z)? - sqrt_upper(z))
    };
    Ok(2.0 * d(4.0 * y)? - d(y)?)
}

/// Zeros `λ_j ∈ (E_{2j-1}, E_{2j})` of the numerator of `ω_{p∞,0}`.
pub fn second_kind_gap_zeros(omega0: &AbelianDifferential) -> Vec<f64> {
    let bands = &omega0.bands;
    (1..=bands.genus())
        .map(|j| {
            let (mut a, mut b) = bands.gap(j);
            let f = |x: f64| horner(&omega0.coefficients, c(x)).re;
            let fa = f(a);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if (f(m) > 0.0) == (fa > 0.0) {
                    a = m;
                } else {
                    b = m;
                }
            }
            0.5 * (a + b)
        })
        .collect()
}

/// Edge `E(ρ)` from which Blaschke-type integrals over a gap start: `E_0`
/// below the spectrum, otherwise the lower edge of the host gap.
pub fn blaschke_edge(bands: &BandStructure, rho: f64) -> Result<f64> {
    let tol = bands.branch_tolerance();
    if rho <= bands.e0() + tol {
        return Ok(bands.e0());
    }
    for j in 1..=bands.genus() {
        let (a, b) = bands.gap(j);
        if rho >= a - tol && rho <= b + tol {
            return Ok(a);
        }
    }
    Err(Error::Domain(format!("{rho} lies inside a band")))
}

/// Blaschke factor `B(p,ρ) = exp ∫_{E_0}^p ω_{ρρ*}`.
pub fn blaschke(bands: &BandStructure, p: &SurfacePoint, rho: &SurfacePoint) -> Result<Complex64> {
    let omega = blaschke_differential(bands, rho)?;
    blaschke_with(&omega, p)
}

pub fn blaschke_differential(bands: &BandStructure, rho: &SurfacePoint) -> Result<AbelianDifferential> {
    if rho.z.im != 0.0 {
        return Err(Error::Domain("Blaschke zero must be real".into()));
    }
    blaschke_edge(bands, rho.z.re)?;
    if bands.is_branch_point(rho.z).is_some() {
        // ω_{ρρ*} degenerates at a branch point and B ≡ 1
        return Ok(AbelianDifferential {
            bands: bands.clone(),
            kind: DifferentialKind::SecondKind { k: 1 },
            coefficients: vec![c(0.0); bands.genus() + 1],
        });
    }
    normalize_differential(bands, DifferentialKind::ThirdKindConjugate { p: *rho })
}

pub fn blaschke_with(omega: &AbelianDifferential, p: &SurfacePoint) -> Result<Complex64> {
    let bands = &omega.bands;
    if let DifferentialKind::ThirdKindConjugate { p: rho } = &omega.kind {
        let same = (p.z - rho.z).norm() < bands.branch_tolerance();
        if same && p.sheet == rho.sheet {
            return Ok(c(0.0));
        }
        if same {
            return Err(Error::Pole(format!("B has a pole at ρ* = {}", rho.z)));
        }
    }
    if bands.is_branch_point(p.z) == Some(0) {
        return Ok(c(1.0));
    }
    let start = SurfacePoint {
        z: c(bands.e0()),
        sheet: p.sheet,
        infinity: false,
    };
    Ok(integrate(omega, &start, p, &PathHint::default())?.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn bands(e: &[f64]) -> BandStructure {
        BandStructure::new(e.to_vec()).unwrap()
    }

    #[test]
    fn rejects_bad_edges() {
        assert!(BandStructure::new(vec![]).is_err());
        assert!(BandStructure::new(vec![0.0, 1.0]).is_err());
        assert!(BandStructure::new(vec![0.0, 2.0, 1.0]).is_err());
        assert!(BandStructure::new(vec![0.0, f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn spectrum_and_gaps() {
        let b = bands(&[0.0, 1.0, 3.0]);
        assert_eq!(b.genus(), 1);
        assert_eq!(b.gap(1), (1.0, 3.0));
        assert!(b.in_spectrum(0.5));
        assert!(!b.in_spectrum(2.0));
        assert!(b.in_spectrum(10.0));
        assert_eq!(b.gap_index(2.0), Some(1));
        assert_eq!(b.spectrum().len(), 2);
    }

    #[test]
    fn sqrt_r_examples() {
        let b0 = bands(&[0.0]);
        let r = b0.sqrt_r_at(&SurfacePoint::upper(-1.0)).unwrap();
        assert!((r - I).norm() < 1e-15);
        let r = b0.sqrt_r_at(&SurfacePoint::lower(-1.0)).unwrap();
        assert!((r + I).norm() < 1e-15);
        let b1 = bands(&[0.0, 1.0, 3.0]);
        let r = b1.sqrt_r_at(&SurfacePoint::upper(4.0)).unwrap();
        assert!((r - c(12f64.sqrt())).norm() < 1e-14);
        assert_eq!(b1.sqrt_r_at(&SurfacePoint::upper(1.0)), Err(Error::BranchPoint(1.0)));
    }

    #[test]
    fn sqrt_r_asymptotic_sign_and_boundary_values() {
        let b = bands(&[-1.0, 0.5, 1.5, 2.0, 4.0]);
        for z in [Complex64::new(300.0, 200.0), Complex64::new(-500.0, 10.0), Complex64::new(3.0, -800.0)] {
            let lead = z.powu(2) * sqrt_upper(z);
            assert!((b.sqrt_r(z) / lead - 1.0).norm() < 0.05);
        }
        for lam in [0.0, 1.8, 7.0] {
            let up = b.sqrt_r(Complex64::new(lam, 1e-12));
            let dn = b.sqrt_r(Complex64::new(lam, -1e-12));
            assert!((up + dn.conj()).norm() < 1e-9 * up.norm());
            assert!((b.sqrt_r(c(lam)) - up).norm() < 1e-9 * up.norm());
        }
        // continuity across a gap
        let up = b.sqrt_r(Complex64::new(1.0, 1e-12));
        let dn = b.sqrt_r(Complex64::new(1.0, -1e-12));
        assert!((up - dn).norm() < 1e-9);
    }

    #[test]
    fn sqrt_series_matches_direct_expansion() {
        let b = bands(&[0.3, 1.0, 2.5]);
        let s = b.sqrt_series(6);
        let w = 1e-3;
        let direct = b.edges().iter().map(|e| 1.0 - e * w).product::<f64>().sqrt();
        let series: f64 = s.iter().enumerate().map(|(m, cm)| cm * w.powi(m as i32)).sum();
        assert!((direct - series).abs() < 1e-12);
    }

    #[test]
    fn genus_zero_differentials_need_no_normalization() {
        let b = bands(&[0.0]);
        let w = normalize_differential(&b, DifferentialKind::SecondKind { k: 1 }).unwrap();
        assert_eq!(w.coefficients, vec![c(-0.5)]);
        let z = Complex64::new(-2.0, 0.3);
        assert!((w.density(z, Sheet::Upper) + 0.5 / sqrt_upper(z)).norm() < 1e-14);
    }

    #[test]
    fn genus_zero_integrals_match_antiderivatives() {
        let b = bands(&[0.0]);
        let w = normalize_differential(&b, DifferentialKind::SecondKind { k: 1 }).unwrap();
        let v = integrate(&w, &SurfacePoint::upper(0.0), &SurfacePoint::upper(2.5), &PathHint::default()).unwrap();
        assert!((v + c(2.5f64.sqrt())).norm() < 1e-10);
        let rho = SurfacePoint::upper(-1.0);
        let t = normalize_differential(&b, DifferentialKind::ThirdKindConjugate { p: rho }).unwrap();
        let v = integrate(&t, &SurfacePoint::upper(0.0), &SurfacePoint::upper(1.0), &PathHint::default()).unwrap();
        assert!((v - I * (PI / 2.0)).norm() < 1e-10);
        let p = SurfacePoint::upper(Complex64::new(0.7, 0.2));
        assert_eq!(integrate(&t, &p, &p, &PathHint::default()).unwrap(), c(0.0));
    }

    #[test]
    fn quasimomentum_genus_zero() {
        let b = bands(&[0.0]);
        assert!((quasimomentum(&b, c(4.0)).unwrap() - c(2.0)).norm() < 1e-10);
        assert!((quasimomentum(&b, c(-1.0)).unwrap() - I).norm() < 1e-10);
        let z = Complex64::new(-3.0, 2.0);
        assert!((quasimomentum(&b, z).unwrap() - sqrt_upper(z)).norm() < 1e-10);
    }

    #[test]
    fn quasimomentum_in_gap_has_constant_real_part() {
        let b = bands(&[0.0, 1.0, 3.0]);
        let w = normalize_differential(&b, DifferentialKind::SecondKind { k: 1 }).unwrap();
        let k1 = quasimomentum_with(&w, c(1.5)).unwrap();
        let k2 = quasimomentum_with(&w, c(2.0)).unwrap();
        let k3 = quasimomentum_with(&w, c(2.8)).unwrap();
        assert!((k1.re - k2.re).abs() < 1e-9 && (k2.re - k3.re).abs() < 1e-9);
        assert!(k2.im > 0.0);
        // e^{ik} unimodular on the band
        let kb = quasimomentum_with(&w, c(0.5)).unwrap();
        assert!(kb.im.abs() < 1e-9);
    }

    #[test]
    fn gap_zero_of_second_kind_differential() {
        // λ_1 = ∫ λ dλ/|R^{1/2}| / ∫ dλ/|R^{1/2}| over the gap (1,3)
        let b = bands(&[0.0, 1.0, 3.0]);
        let w = normalize_differential(&b, DifferentialKind::SecondKind { k: 1 }).unwrap();
        let lam = second_kind_gap_zeros(&w)[0];
        let oracle = {
            let f = |x: f64| 1.0 / (x * (x - 1.0) * (3.0 - x)).sqrt();
            // plain midpoint sums in the cosine variable
            let n = 20000;
            let (mut num, mut den) = (0.0, 0.0);
            for i in 0..n {
                let th = PI * (i as f64 + 0.5) / n as f64;
                let x = 2.0 - th.cos();
                let jac = th.sin();
                num += x * f(x) * jac;
                den += f(x) * jac;
            }
            num / den
        };
        assert!(lam > 1.0 && lam < 3.0);
        assert!((lam - oracle).abs() < 1e-9, "{lam} vs {oracle}");
    }

    #[test]
    fn holomorphic_basis_normalization() {
        let b = bands(&[0.0, 1.0, 3.0]);
        let basis = holomorphic_basis(&b).unwrap();
        assert_eq!(basis.zeta.len(), 1);
        let p = basis.zeta[0].a_period(1, QuadOptions::default()).unwrap();
        assert!((p - 1.0).norm() < 1e-11);
        assert!(holomorphic_basis(&bands(&[0.0])).unwrap().zeta.is_empty());
    }

    #[test]
    fn blaschke_examples() {
        let b = bands(&[0.0]);
        let rho = SurfacePoint::upper(-1.0);
        let v = blaschke(&b, &SurfacePoint::upper(1.0), &rho).unwrap();
        assert!((v - I).norm() < 1e-10);
        assert!((blaschke(&b, &SurfacePoint::upper(0.0), &rho).unwrap() - 1.0).norm() < 1e-14);
        assert!(blaschke(&b, &rho.star(), &rho).is_err());
        let near = blaschke(&b, &SurfacePoint::lower(Complex64::new(-1.0, 1e-6)), &rho).unwrap();
        assert!(near.norm() > 1e5);
        assert!(blaschke(&b, &SurfacePoint::upper(0.0), &SurfacePoint::upper(2.0)).is_err());
    }

    #[test]
    fn differential_record_serializes() {
        let b = bands(&[0.0, 1.0, 3.0]);
        let w = normalize_differential(&b, DifferentialKind::ThirdKindConjugate { p: SurfacePoint::upper(-1.0) }).unwrap();
        let json = serde_json::to_string(&w.to_record()).unwrap();
        let back: DifferentialRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back.coefficients.len(), 1);
        assert_eq!(back.poles.len(), 2);
        let bj = serde_json::to_string(&b).unwrap();
        assert_eq!(bj, "[0.0,1.0,3.0]");
        assert!(serde_json::from_str::<BandStructure>("[1.0,0.0,2.0]").is_err());
    }
}
