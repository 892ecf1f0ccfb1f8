//! Krein spectral shift function `ξ` of the pair `(H, H_q)` and the
//! representation `T(z) = exp(∫ ξ(λ) dλ / (λ - z))`.
//!
//! On band interiors `ξ = arg T(λ + i0) / π`, tracked continuously in `λ`.
//! On gaps and below the spectrum `ξ` is an integer, anchored to 0 below
//! `inf σ(H)` and jumping by `+1` at every eigenvalue. At a band edge where
//! `T` vanishes like `sqrt(λ - E)` the boundary phase jumps by `π/2`, so
//! `ξ` decreases by `1/2` when the edge is crossed from left to right.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::panels::{half_band, Panel};
use crate::quad::{adaptive, gauss16, GaussRule, NodeSet, QuadOptions};
use crate::riemann_surface::BandStructure;
use crate::scattering::{ScatteringData, ScatteringProblem};

/// Largest admissible phase step (in units of `π`) between neighbouring samples.
const MAX_STEP: f64 = 0.25;
/// Distance to the nearest integer or half-integer accepted when classifying edges.
const CLASSIFY_TOL: f64 = 0.1;

#[derive(Debug, Clone, Copy)]
pub struct ShiftOptions {
    /// The semi-infinite band is sampled up to `λ = E_2g + s_max^2`.
    pub s_max: f64,
    /// Gauss panels in `s = sqrt(λ - E_2g)` on the semi-infinite band.
    pub top_panels: usize,
    /// Gauss panels per half of a finite band.
    pub band_panels: usize,
}

impl Default for ShiftOptions {
    fn default() -> Self {
        ShiftOptions {
            s_max: 40.0,
            top_panels: 40,
            band_panels: 4,
        }
    }
}

/// Samples of `ξ` on one band, ascending in `λ`, with quadrature weights.
#[derive(Debug, Clone, Serialize)]
pub struct BandShift {
    pub lo: f64,
    pub hi: Option<f64>,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub xi: Vec<f64>,
    pub panels: Vec<Panel>,
}

/// Constant value of `ξ` on `(lo, hi)` outside the spectrum of `H_q`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Plateau {
    pub lo: f64,
    pub hi: f64,
    pub value: i64,
}

/// A discontinuity of `ξ` (value right of the point minus value left of it).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Jump {
    pub at: f64,
    pub size: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralShift {
    #[serde(skip)]
    bands: BandStructure,
    pub support_floor: f64,
    pub eigenvalues: Vec<f64>,
    pub band_data: Vec<BandShift>,
    pub plateaus: Vec<Plateau>,
    /// For every band edge, whether `T` vanishes there.
    pub edge_zero: Vec<bool>,
    /// `ξ ≈ Σ c_m (ℓ/Λ)^{-(m+1/2)}` with `ℓ = λ - E_2g` beyond `Λ = s_max^2`.
    pub tail: [f64; 3],
    pub tail_start: f64,
}

/// Representative of `a + 2n` nearest to `target`.
fn nearest_branch(a: f64, target: f64) -> f64 {
    a + 2.0 * ((target - a) / 2.0).round()
}

fn phase(t: Complex64) -> f64 {
    t.arg() / std::f64::consts::PI
}

fn dist_int(x: f64) -> f64 {
    (x - x.round()).abs()
}

impl SpectralShift {
    pub fn compute(data: &ScatteringData) -> Result<Self> {
        Self::with_options(data, ShiftOptions::default())
    }

    pub fn with_options(data: &ScatteringData, opts: ShiftOptions) -> Result<Self> {
        let problem = &data.problem;
        let bands = problem.background().bands().clone();
        let mut eigenvalues = data.eigenvalue_values();
        eigenvalues.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let scale = bands.scale();
        let excl = problem.options().edge_exclusion * scale;
        let first_min = 250.0 * excl.sqrt();
        let s_probe_min = (2.0 * excl).sqrt();
        let edges = bands.edges().to_vec();
        let g = bands.genus();
        let mut edge_zero = vec![false; edges.len()];
        let mut band_data: Vec<BandShift> = Vec::with_capacity(g + 1);
        let mut plateaus = Vec::new();

        // Evaluation sequence for a band, descending in λ: probes at the upper
        // edge, quadrature nodes, probes at the lower edge.
        let probes = |edge: f64, dir: f64, s_first: f64| -> Vec<f64> {
            let mut out = Vec::new();
            let mut s = 0.5 * s_first;
            while s >= s_probe_min {
                out.push(edge + dir * s * s);
                s *= 0.5;
            }
            out
        };

        let mut current: Option<f64> = None;
        for b in (0..=g).rev() {
            let lo = edges[2 * b];
            let hi = if b == g { None } else { Some(edges[2 * b + 1]) };
            // panels ascending in λ
            let mut panels: Vec<Panel> = Vec::new();
            let mk = |edge: f64, dir: f64, (a, b): (f64, f64)| Panel {
                edge,
                dir,
                a,
                b,
                values: Vec::new(),
            };
            match hi {
                None => {
                    for ab in half_band(opts.s_max, opts.top_panels, first_min) {
                        panels.push(mk(lo, 1.0, ab));
                    }
                }
                Some(hi) => {
                    let smax = (0.5 * (hi - lo)).sqrt();
                    let halves = half_band(smax, opts.band_panels, first_min);
                    for &ab in &halves {
                        panels.push(mk(lo, 1.0, ab));
                    }
                    for &ab in halves.iter().rev() {
                        panels.push(mk(hi, -1.0, ab));
                    }
                }
            }
            let mut set = NodeSet::default();
            for p in &panels {
                let mut pts: Vec<(f64, f64)> = p.s_nodes().map(|(s, w)| (p.lambda(s), 2.0 * s * w)).collect();
                if p.dir < 0.0 {
                    pts.reverse();
                }
                for (l, w) in pts {
                    set.nodes.push(l);
                    set.weights.push(w);
                }
            }
            let first_s = panels[0].s_nodes().next().unwrap().0;
            let (s_lo_first, s_hi_first) = (first_s, first_s);
            let mut seq: Vec<f64> = Vec::new();
            let n_hi_probes;
            if let Some(hi) = hi {
                let mut p = probes(hi, -1.0, s_hi_first);
                p.reverse();
                n_hi_probes = p.len();
                seq.extend(p);
            } else {
                n_hi_probes = 0;
            }
            seq.extend(set.nodes.iter().rev());
            seq.extend(probes(lo, 1.0, s_lo_first));
            let ts: Vec<Result<Complex64>> = seq
                .par_iter()
                .map(|&l| problem.t(Complex64::new(l, 0.0)))
                .collect();
            let ts: Vec<Complex64> = ts.into_iter().collect::<Result<_>>()?;

            let classify = |t: Complex64, edge: f64| -> Result<bool> {
                let a = phase(t);
                if dist_int(a) < CLASSIFY_TOL {
                    Ok(false)
                } else if dist_int(a - 0.5) < CLASSIFY_TOL {
                    Ok(true)
                } else {
                    Err(Error::BranchTrack(edge))
                }
            };

            let mut xi_seq = Vec::with_capacity(seq.len());
            let start = match (hi, current) {
                (None, _) => phase(*ts.first().unwrap()),
                (Some(hi), Some(plateau)) => {
                    // the sample closest to the upper edge
                    let first = ts[0];
                    let v = classify(first, hi)?;
                    edge_zero[2 * b + 1] = v;
                    nearest_branch(phase(first), plateau + if v { 0.5 } else { 0.0 })
                }
                (Some(_), None) => unreachable!(),
            };
            xi_seq.push(start);
            for i in 1..seq.len() {
                let prev = xi_seq[i - 1];
                let x = unwind(problem, prev, seq[i - 1], ts[i - 1], seq[i], ts[i], 0)?;
                xi_seq.push(x);
            }
            let last = *ts.last().unwrap();
            let v_lo = classify(last, lo)?;
            edge_zero[2 * b] = v_lo;
            let below = xi_seq.last().unwrap() + if v_lo { 0.5 } else { 0.0 };
            if dist_int(below) > CLASSIFY_TOL {
                return Err(Error::BranchTrack(lo));
            }
            let n_nodes = set.nodes.len();
            let mut xi: Vec<f64> = xi_seq[n_hi_probes..n_hi_probes + n_nodes].to_vec();
            xi.reverse();
            let n_rule = gauss16().nodes.len();
            for (k, p) in panels.iter_mut().enumerate() {
                let mut chunk = xi[k * n_rule..(k + 1) * n_rule].to_vec();
                if p.dir < 0.0 {
                    chunk.reverse();
                }
                p.values = chunk;
            }
            band_data.push(BandShift {
                lo,
                hi,
                nodes: set.nodes,
                weights: set.weights,
                xi,
                panels,
            });

            // walk down the gap (or the half line below E_0), crossing eigenvalues
            let mut value = below.round() as i64;
            let floor = if b == 0 {
                f64::NEG_INFINITY
            } else {
                edges[2 * b - 1]
            };
            let mut top = lo;
            for &e in eigenvalues.iter().rev().filter(|&&e| e < lo && e > floor) {
                plateaus.push(Plateau { lo: e, hi: top, value });
                value -= 1;
                top = e;
            }
            if b == 0 {
                if value != 0 {
                    return Err(Error::BranchTrack(top));
                }
            } else {
                plateaus.push(Plateau {
                    lo: floor,
                    hi: top,
                    value,
                });
            }
            current = Some(value as f64);
        }
        band_data.reverse();
        plateaus.retain(|p| p.value != 0);
        plateaus.sort_by(|a, b| a.lo.partial_cmp(&b.lo).unwrap());

        let top_edge = bands.top();
        let tail_start = opts.s_max * opts.s_max;
        let tail = fit_tail(band_data.last().unwrap(), top_edge, tail_start)?;
        let support_floor = eigenvalues.first().copied().unwrap_or(f64::INFINITY).min(bands.e0());
        Ok(SpectralShift {
            bands,
            support_floor,
            eigenvalues,
            band_data,
            plateaus,
            edge_zero,
            tail,
            tail_start,
        })
    }

    /// Tail model of `ξ` beyond the sampled part of the top band.
    fn tail_value(&self, lambda: f64) -> f64 {
        let u = (lambda - self.bands.top()) / self.tail_start;
        (0..3).map(|m| self.tail[m] * u.powf(-(m as f64 + 0.5))).sum()
    }

    /// `ξ(λ)`. Band points need one evaluation of `T`, unwound from the
    /// nearest stored sample.
    pub fn xi(&self, problem: &ScatteringProblem, lambda: f64) -> Result<f64> {
        let tol = problem.options().edge_exclusion * self.bands.scale();
        for &e in self.bands.edges() {
            if (lambda - e).abs() < tol {
                return Err(Error::BandEdge(e));
            }
        }
        for &r in &self.eigenvalues {
            if (lambda - r).abs() < tol {
                return Err(Error::EigenvalueProximity(format!("{lambda}")));
            }
        }
        if !self.bands.in_spectrum(lambda) {
            return Ok(self.plateau_value(lambda) as f64);
        }
        let band = self
            .band_data
            .iter()
            .find(|b| lambda >= b.lo && b.hi.map_or(true, |h| lambda <= h))
            .ok_or_else(|| Error::Domain(format!("{lambda} not in a band")))?;
        let t = problem.t(Complex64::new(lambda, 0.0))?;
        let top = band.nodes.last().copied().unwrap_or(band.lo);
        if band.hi.is_none() && lambda > top {
            return Ok(nearest_branch(phase(t), self.tail_value(lambda)));
        }
        let i = band
            .nodes
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - lambda).abs().partial_cmp(&(b.1 - lambda).abs()).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        let l0 = band.nodes[i];
        let t0 = problem.t(Complex64::new(l0, 0.0))?;
        unwind(problem, band.xi[i], l0, t0, lambda, t, 0)
    }

    fn plateau_value(&self, lambda: f64) -> i64 {
        self.plateaus
            .iter()
            .find(|p| lambda > p.lo && lambda < p.hi)
            .map_or(0, |p| p.value)
    }

    /// Discontinuities of `ξ`: `+1` at eigenvalues, `-1/2` at edges where `T` vanishes.
    pub fn jumps(&self) -> Vec<Jump> {
        let mut out: Vec<Jump> = self.eigenvalues.iter().map(|&e| Jump { at: e, size: 1.0 }).collect();
        for (e, &z) in self.bands.edges().iter().zip(&self.edge_zero) {
            if z {
                out.push(Jump { at: *e, size: -0.5 });
            }
        }
        out.sort_by(|a, b| a.at.partial_cmp(&b.at).unwrap());
        out
    }

    /// `∫ ξ(λ) f(λ) dλ` for a kernel given pointwise on bands, in closed form
    /// on plateaus (`plateau(a, b)`) and on the tail (`tail(m)`: integral
    /// against `(ℓ/Λ)^{-(m+1/2)}`). Panels close to `z` are integrated
    /// adaptively against the interpolated `ξ`.
    fn integrate<B, P, T>(&self, z: Complex64, band: B, plateau: P, tail: T) -> Result<Complex64>
    where
        B: Fn(f64) -> Complex64,
        P: Fn(f64, f64) -> Complex64,
        T: Fn(usize) -> Complex64,
    {
        let mut total = Complex64::new(0.0, 0.0);
        let opts = QuadOptions {
            abs_tol: 1e-11,
            rel_tol: 1e-11,
            max_panels: 20_000,
        };
        for b in &self.band_data {
            for p in &b.panels {
                if p.relative_distance(z) < 2.0 {
                    total += adaptive(|s| band(p.lambda(s)) * (2.0 * s * p.interp(s)), p.a, p.b, opts)?;
                } else {
                    for ((s, w), x) in p.s_nodes().zip(&p.values) {
                        total += band(p.lambda(s)) * (2.0 * s * w * x);
                    }
                }
            }
        }
        for p in &self.plateaus {
            total += plateau(p.lo, p.hi) * p.value as f64;
        }
        for m in 0..3 {
            total += tail(m) * self.tail[m];
        }
        Ok(total)
    }

    fn check_z(&self, z: Complex64) -> Result<Complex64> {
        if z.im == 0.0 {
            let x = z.re;
            let on_plateau = self.plateaus.iter().any(|p| x >= p.lo && x <= p.hi);
            if self.bands.in_spectrum(x) || on_plateau || self.eigenvalues.contains(&x) {
                return Err(Error::Domain("the Krein representation needs z off the support of ξ".into()));
            }
        }
        let zp = z - self.bands.top();
        if zp.norm() > 0.25 * self.tail_start {
            return Err(Error::Truncation(zp.norm()));
        }
        Ok(zp)
    }

    /// `log T(z) = ∫ ξ(λ) dλ / (λ - z)`.
    pub fn log_t(&self, z: Complex64) -> Result<Complex64> {
        let zp = self.check_z(z)?;
        let lam = self.tail_start;
        let rule = GaussRule::new(24);
        self.integrate(
            z,
            |l| 1.0 / (l - z),
            |a, b| (b - z).ln() - (a - z).ln(),
            |m| {
                rule.apply(0.0, 1.0, |s| {
                    2.0 * lam * s.powi(2 * m as i32) / (lam - zp * s * s)
                })
            },
        )
    }

    /// `d/dz log T(z) = ∫ ξ(λ) dλ / (λ - z)^2`.
    pub fn log_t_derivative(&self, z: Complex64) -> Result<Complex64> {
        let zp = self.check_z(z)?;
        let lam = self.tail_start;
        let rule = GaussRule::new(24);
        self.integrate(
            z,
            |l| 1.0 / ((l - z) * (l - z)),
            |a, b| 1.0 / (a - z) - 1.0 / (b - z),
            |m| {
                rule.apply(0.0, 1.0, |s| {
                    let d = lam - zp * s * s;
                    2.0 * lam * s.powi(2 * m as i32 + 2) / (d * d)
                })
            },
        )
    }

    /// `T(z) = exp(∫ ξ(λ) dλ / (λ - z))`.
    pub fn krein_reconstruct_t(&self, z: Complex64) -> Result<Complex64> {
        Ok(self.log_t(z)?.exp())
    }

    /// `(λ, ξ)` samples: band nodes plus both ends of every plateau.
    pub fn samples(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for b in &self.band_data {
            out.extend(b.nodes.iter().copied().zip(b.xi.iter().copied()));
        }
        for p in &self.plateaus {
            let v = p.value as f64;
            let lo = if p.lo.is_finite() { p.lo } else { p.hi - 1.0 };
            out.push((lo, v));
            out.push((p.hi, v));
        }
        out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        out
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("lambda,xi\n");
        for (l, x) in self.samples() {
            s.push_str(&format!("{l:.16e},{x:.16e}\n"));
        }
        s
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "support_floor": self.support_floor,
            "jumps": self.jumps(),
            "plateaus": self.plateaus,
            "tail": self.tail,
        })
    }
}

/// Continues `ξ` from `(l0, x0)` to `l1`, bisecting the step until the phase
/// increment stays below `MAX_STEP`.
fn unwind(problem: &ScatteringProblem, x0: f64, l0: f64, t0: Complex64, l1: f64, t1: Complex64, depth: usize) -> Result<f64> {
    let cand = nearest_branch(phase(t1), x0);
    if (cand - x0).abs() <= MAX_STEP {
        return Ok(cand);
    }
    if depth > 40 {
        return Err(Error::BranchTrack(l1));
    }
    let lm = 0.5 * (l0 + l1);
    let tm = problem.t(Complex64::new(lm, 0.0))?;
    let xm = unwind(problem, x0, l0, t0, lm, tm, depth + 1)?;
    unwind(problem, xm, lm, tm, l1, t1, depth + 1)
}

/// Least-squares fit of `ξ` on the upper half of the sampled top band.
fn fit_tail(top: &BandShift, edge: f64, lam: f64) -> Result<[f64; 3]> {
    let pts: Vec<(f64, f64)> = top
        .nodes
        .iter()
        .zip(&top.xi)
        .filter(|(l, _)| **l - edge >= 0.25 * lam)
        .map(|(l, x)| ((l - edge) / lam, *x))
        .collect();
    if pts.len() < 6 {
        return Err(Error::IllConditionedFit(pts.len() as f64));
    }
    let a = DMatrix::from_fn(pts.len(), 3, |i, m| pts[i].0.powf(-(m as f64 + 0.5)));
    let y = DVector::from_iterator(pts.len(), pts.iter().map(|p| p.1));
    let svd = a.svd(true, true);
    let s = &svd.singular_values;
    let cond = s.max() / s.min();
    if !cond.is_finite() || cond > 1e12 {
        return Err(Error::IllConditionedFit(cond));
    }
    let c = svd.solve(&y, 1e-14).map_err(|e| Error::Domain(e.to_string()))?;
    Ok([c[0], c[1], c[2]])
}

/// `∫ (G(z,x,x) - G_q(z,x,x)) dx`, equal to `T'(z)/T(z)`.
pub fn resolvent_trace(problem: &ScatteringProblem, z: Complex64) -> Result<Complex64> {
    problem.resolvent_trace(z)
}

/// `T'(z)/T(z)` by a fourth-order central difference of `log T` with step `h`.
pub fn log_derivative_fd(problem: &ScatteringProblem, z: Complex64, h: f64) -> Result<Complex64> {
    let lt = |d: f64| -> Result<Complex64> { Ok(problem.t(z + d)?.ln()) };
    let (a, b, c, d) = (lt(-2.0 * h)?, lt(-h)?, lt(h)?, lt(2.0 * h)?);
    // log differences stay on one branch for small h
    let unwrap = |x: Complex64, r: Complex64| {
        let k = ((x.im - r.im) / (2.0 * std::f64::consts::PI)).round();
        x - Complex64::new(0.0, 2.0 * std::f64::consts::PI * k)
    };
    let r = problem.t(z)?.ln();
    let (a, b, c, d) = (unwrap(a, r), unwrap(b, r), unwrap(c, r), unwrap(d, r));
    Ok((a - 8.0 * b + 8.0 * c - d) / (12.0 * h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::FiniteGapPotential;
    use crate::perturbation::Perturbation;

    fn problem(expr: &str) -> ScatteringProblem {
        ScatteringProblem::new(FiniteGapPotential::free(0.0), Perturbation::from_expression(expr).unwrap()).unwrap()
    }

    fn shift(expr: &str) -> (ScatteringProblem, SpectralShift) {
        let p = problem(expr);
        let d = p.scattering_data().unwrap();
        let s = SpectralShift::compute(&d).unwrap();
        (p, s)
    }

    #[test]
    fn zero_perturbation_gives_zero_shift() {
        let (_, s) = shift("0");
        assert!(s.plateaus.is_empty());
        for b in &s.band_data {
            assert!(b.xi.iter().all(|x| x.abs() < 1e-14));
        }
        let t = s.krein_reconstruct_t(Complex64::new(0.3, 1.0)).unwrap();
        assert!((t - 1.0).norm() < 1e-14);
    }

    #[test]
    fn soliton_shift_matches_closed_form() {
        let (p, s) = shift("-2*sech(x)^2");
        assert_eq!(s.plateaus.len(), 1);
        assert_eq!(s.plateaus[0].value, 1);
        assert!((s.plateaus[0].lo + 1.0).abs() < 1e-10);
        assert_eq!(s.xi(&p, -0.5).unwrap(), 1.0);
        assert_eq!(s.xi(&p, -1.5).unwrap(), 0.0);
        assert!(!s.edge_zero[0]);
        for lam in [1e-4f64, 0.3, 2.0, 50.0, 900.0, 5000.0] {
            let want = 2.0 / std::f64::consts::PI * (1.0 / lam.sqrt()).atan();
            let got = s.xi(&p, lam).unwrap();
            assert!((got - want).abs() < 1e-8, "{lam}: {got} vs {want}");
        }
        for b in &s.band_data {
            for (l, x) in b.nodes.iter().zip(&b.xi) {
                let want = 2.0 / std::f64::consts::PI * (1.0 / l.sqrt()).atan();
                assert!((x - want).abs() < 1e-8);
            }
        }
        let jumps = s.jumps();
        assert_eq!(jumps.len(), 1);
        assert_eq!(jumps[0].size, 1.0);
    }

    #[test]
    fn krein_reconstructs_soliton_t() {
        let (p, s) = shift("-2*sech(x)^2");
        for z in [Complex64::new(-0.5, 0.5), Complex64::new(3.0, 0.2), Complex64::new(-3.0, 1.0), Complex64::new(20.0, 5.0)] {
            let want = p.t(z).unwrap();
            let got = s.krein_reconstruct_t(z).unwrap();
            assert!((got - want).norm() < 1e-6 * want.norm(), "{z}: {got} vs {want}");
        }
    }

    #[test]
    fn krein_reconstructs_repulsive_gaussian() {
        let (p, s) = shift("0.7*exp(-x^2)");
        assert!(s.plateaus.is_empty());
        assert!(s.edge_zero[0]);
        let z = Complex64::new(0.0, 1.0);
        let want = p.t(z).unwrap();
        let got = s.krein_reconstruct_t(z).unwrap();
        assert!((got - want).norm() < 1e-6, "{got} vs {want}");
        // ξ starts at -1/2 just above the edge
        let x = s.xi(&p, 1e-5).unwrap();
        assert!((x + 0.5).abs() < 0.01, "{x}");
    }

    #[test]
    fn trace_identity_three_ways() {
        let (p, s) = shift("0.7*exp(-x^2)");
        for z in [Complex64::new(-1.0, 0.0), Complex64::new(1.0, 0.5)] {
            let tr = resolvent_trace(&p, z).unwrap();
            let fd = log_derivative_fd(&p, z, 1e-3).unwrap();
            let kr = s.log_t_derivative(z).unwrap();
            assert!((tr - fd).norm() < 1e-4 * tr.norm(), "{z}: {tr} vs {fd}");
            assert!((tr - kr).norm() < 1e-4 * tr.norm(), "{z}: {tr} vs {kr}");
        }
    }

    #[test]
    fn genus_one_krein_and_plateaus() {
        use crate::background::{DirichletDivisor, DivisorEntry};
        use crate::riemann_surface::BandStructure;
        let bands = BandStructure::new(vec![0.0, 1.0, 3.0]).unwrap();
        let bg = FiniteGapPotential::new(bands, DirichletDivisor::new(vec![DivisorEntry { mu: 2.0, sigma: 1.0 }]), 30.0).unwrap();
        let p = ScatteringProblem::new(bg, Perturbation::from_fn(|x| -1.5 * (-x * x).exp()).unwrap()).unwrap();
        let d = p.scattering_data().unwrap();
        let s = SpectralShift::compute(&d).unwrap();
        let below = d.eigenvalues.iter().filter(|e| e.value < 0.0).count() as f64;
        assert_eq!(s.xi(&p, s.support_floor - 0.1).unwrap(), 0.0);
        assert_eq!(s.xi(&p, -1e-3).unwrap(), below);
        for z in [Complex64::new(0.5, 0.3), Complex64::new(2.0, 0.1), Complex64::new(-1.0, 1.0), Complex64::new(8.0, 2.0)] {
            let want = p.t(z).unwrap();
            let got = s.krein_reconstruct_t(z).unwrap();
            assert!((got - want).norm() < 1e-6 * want.norm(), "{z}: {got} vs {want}");
        }
    }
}
