//! Quadrature kernels shared by the curve, scattering and reconstruction code.
//!
//! Everything here integrates complex-valued integrands. The adaptive rule
//! is a bisecting Gauss–Legendre scheme: a panel is accepted once the
//! 10-point rule on the panel and the sum of the 10-point rules on its two
//! halves agree to the requested tolerance.

use std::sync::OnceLock;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Nodes and weights of an `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d.is_finite() {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussRule { nodes, weights }
    }

    /// Applies the rule on `[a, b]`.
    pub fn apply<F: FnMut(f64) -> Complex64>(&self, a: f64, b: f64, mut f: F) -> Complex64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = Complex64::new(0.0, 0.0);
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += f(mid + half * x) * *w;
        }
        acc * half
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

pub fn gauss10() -> &'static GaussRule {
    static RULE: OnceLock<GaussRule> = OnceLock::new();
    RULE.get_or_init(|| GaussRule::new(10))
}

pub fn gauss16() -> &'static GaussRule {
    static RULE: OnceLock<GaussRule> = OnceLock::new();
    RULE.get_or_init(|| GaussRule::new(16))
}

/// Settings for [`adaptive`].
#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_panels: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            abs_tol: 1e-10,
            rel_tol: 1e-12,
            max_panels: 20_000,
        }
    }
}

impl QuadOptions {
    pub fn with_tol(abs_tol: f64) -> Self {
        QuadOptions {
            abs_tol,
            ..Default::default()
        }
    }
}

/// Adaptive bisecting Gauss–Legendre quadrature of `f` over `[a, b]`.
pub fn adaptive<F: FnMut(f64) -> Complex64>(
    mut f: F,
    a: f64,
    b: f64,
    opts: QuadOptions,
) -> Result<Complex64> {
    if a == b {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let rule = gauss10();
    let whole = rule.apply(a, b, &mut f);
    let mut stack = vec![(a, b, whole, 0u32, f64::INFINITY)];
    let mut total = Complex64::new(0.0, 0.0);
    let mut panels = 0usize;
    let span = (b - a).abs();
    while let Some((lo, hi, coarse, depth, parent_err)) = stack.pop() {
        panels += 1;
        if panels > opts.max_panels {
            return Err(Error::Quadrature(format!(
                "panel budget exhausted on [{a}, {b}]"
            )));
        }
        let mid = 0.5 * (lo + hi);
        let left = rule.apply(lo, mid, &mut f);
        let right = rule.apply(mid, hi, &mut f);
        let fine = left + right;
        let err = (fine - coarse).norm();
        if !fine.re.is_finite() || !fine.im.is_finite() {
            return Err(Error::Quadrature(format!("non-finite integrand near {mid}")));
        }
        let share = (hi - lo).abs() / span;
        let budget = (opts.abs_tol * share).max(opts.rel_tol * fine.norm());
        // an error estimate that stops shrinking under bisection while tiny
        // against the panel contributions is rounding noise
        let noise = 1e-9 * (left.norm() + right.norm());
        let stalled = depth >= 8 && err >= 0.98 * parent_err && err <= noise;
        let rounding = err <= 64.0 * f64::EPSILON * (left.norm() + right.norm());
        if err <= budget || stalled || rounding || depth > 60 || (hi - lo).abs() < 1e-15 * span.max(1.0) {
            total += fine;
        } else {
            stack.push((lo, mid, left, depth + 1, err));
            stack.push((mid, hi, right, depth + 1, err));
        }
    }
    Ok(total)
}

/// Which endpoints of a segment carry an inverse square-root singularity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EndpointSingularity {
    pub start: bool,
    pub end: bool,
}

/// Integrates `f(z) dz` along the straight segment `z0 -> z1`.
///
/// Endpoints flagged in `sing` are treated with the substitution
/// `z = z_end + (direction) s^2`, which turns `1/sqrt` singularities into
/// smooth integrands.
pub fn segment<F: FnMut(Complex64) -> Complex64>(
    mut f: F,
    z0: Complex64,
    z1: Complex64,
    sing: EndpointSingularity,
    opts: QuadOptions,
) -> Result<Complex64> {
    let d = z1 - z0;
    if d.norm() == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    match (sing.start, sing.end) {
        (false, false) => adaptive(|t| f(z0 + d * t) * d, 0.0, 1.0, opts),
        (true, false) => adaptive(|s| f(z0 + d * (s * s)) * d * (2.0 * s), 0.0, 1.0, opts),
        (false, true) => adaptive(|s| f(z1 - d * (s * s)) * d * (2.0 * s), 0.0, 1.0, opts),
        (true, true) => {
            let h = std::f64::consts::FRAC_1_SQRT_2;
            let left = adaptive(|s| f(z0 + d * (s * s)) * d * (2.0 * s), 0.0, h, opts)?;
            let right = adaptive(|s| f(z1 - d * (s * s)) * d * (2.0 * s), 0.0, h, opts)?;
            Ok(left + right)
        }
    }
}

/// `∫_a^b f(x) / sqrt((x-a)(b-x)) dx` through `x = (a+b)/2 - (b-a)/2 cos(theta)`,
/// which absorbs the endpoint weight exactly. `f` must be smooth on `[a, b]`.
pub fn chebyshev_interval<F: FnMut(f64) -> Complex64>(
    mut f: F,
    a: f64,
    b: f64,
    opts: QuadOptions,
) -> Result<Complex64> {
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    adaptive(|th| f(c - r * th.cos()), 0.0, std::f64::consts::PI, opts)
}

/// A fixed composite rule: nodes `x_i` and weights `w_i` such that
/// `sum w_i f(x_i)` approximates an integral over some interval.
#[derive(Debug, Clone, Default)]
pub struct NodeSet {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl NodeSet {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn sum<F: FnMut(f64) -> Complex64>(&self, mut f: F) -> Complex64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| f(*x) * *w)
            .sum()
    }

    pub fn extend(&mut self, other: NodeSet) {
        self.nodes.extend(other.nodes);
        self.weights.extend(other.weights);
    }
}

/// Composite Gauss rule on `[0, s_max]` with panels graded geometrically
/// toward `s = 0`, then `n_uniform` uniform panels. Resolves logarithmic
/// behaviour at the origin.
pub fn graded_panels(s_max: f64, levels: usize, ratio: f64, n_uniform: usize, rule: &GaussRule) -> Vec<(f64, f64)> {
    let mut breaks = Vec::new();
    let s_grade = s_max / (n_uniform as f64 + 1.0);
    let mut edge = s_grade;
    breaks.push(edge);
    // keep edge ** 2 resolvable next to the band edge in double precision
    let floor = 1e-5 * s_max;
    for _ in 0..levels {
        if edge * ratio < floor {
            break;
        }
        edge *= ratio;
        breaks.push(edge);
    }
    breaks.push(0.0);
    breaks.reverse();
    for k in 1..=n_uniform {
        breaks.push(s_grade + (s_max - s_grade) * k as f64 / n_uniform as f64);
    }
    let mut out = Vec::new();
    for w in breaks.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        for (x, wt) in rule.nodes.iter().zip(&rule.weights) {
            out.push((0.5 * (lo + hi) + 0.5 * (hi - lo) * x, 0.5 * (hi - lo) * wt));
        }
    }
    out
}

/// Fixed node set for integrals over a band `[lo, hi]` (or `[lo, lo + s_max^2]`
/// when `hi` is infinite), graded toward every finite edge in the variable
/// `s = sqrt(lambda - edge)`. Weights include the Jacobian, so
/// `sum w_i f(x_i)` approximates `int f(lambda) d lambda`.
pub fn band_nodes(lo: f64, hi: Option<f64>, s_max: f64, panels: usize, levels: usize) -> NodeSet {
    let rule = gauss16();
    let mut set = NodeSet::default();
    match hi {
        Some(hi) => {
            let mid = 0.5 * (lo + hi);
            let smax = (mid - lo).sqrt();
            for (s, w) in graded_panels(smax, levels, 0.25, panels, rule) {
                set.nodes.push(lo + s * s);
                set.weights.push(2.0 * s * w);
            }
            for (s, w) in graded_panels(smax, levels, 0.25, panels, rule).into_iter().rev() {
                set.nodes.push(hi - s * s);
                set.weights.push(2.0 * s * w);
            }
        }
        None => {
            for (s, w) in graded_panels(s_max, levels, 0.25, panels, rule) {
                set.nodes.push(lo + s * s);
                set.weights.push(2.0 * s * w);
            }
        }
    }
    set
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn gauss_rule_integrates_polynomials_exactly() {
        let rule = GaussRule::new(10);
        let sum: f64 = rule.weights.iter().sum();
        assert!((sum - 2.0).abs() < 1e-14);
        let v = rule.apply(0.0, 1.0, |x| c(x.powi(19)));
        assert!((v.re - 1.0 / 20.0).abs() < 1e-15);
    }

    #[test]
    fn adaptive_handles_peaked_integrand() {
        let v = adaptive(|x| c(1.0 / (1e-4 + x * x)), -1.0, 1.0, QuadOptions::with_tol(1e-11)).unwrap();
        let exact = 2.0 * (1.0f64 / 1e-2).atan() / 1e-2;
        assert!((v.re - exact).abs() < 1e-8 * exact);
    }

    #[test]
    fn sqrt_endpoint_substitution() {
        // int_0^1 x^{-1/2} dx = 2
        let v = segment(
            |z| 1.0 / z.sqrt(),
            c(0.0),
            c(1.0),
            EndpointSingularity { start: true, end: false },
            QuadOptions::default(),
        )
        .unwrap();
        assert!((v.re - 2.0).abs() < 1e-12);
        // int_0^1 dx / sqrt(x(1-x)) = pi
        let w = chebyshev_interval(|_| c(1.0), 0.0, 1.0, QuadOptions::default()).unwrap();
        assert!((w.re - std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn band_nodes_resolve_edge_logarithm() {
        // int_0^2 log(lambda (2 - lambda)) d lambda = 2 * (2 log 2 - 2)
        let set = band_nodes(0.0, Some(2.0), 0.0, 8, 20);
        let v = set.sum(|x| c((x * (2.0 - x)).ln()));
        let exact = 2.0 * (2.0 * 2f64.ln() - 2.0);
        assert!((v.re - exact).abs() < 1e-10, "{} vs {}", v.re, exact);
        // semi-infinite band truncated at s_max = 6: int_0^36 exp(-lambda) / sqrt(lambda)
        let set = band_nodes(0.0, None, 6.0, 24, 10);
        let v = set.sum(|x| c((-x).exp() / x.sqrt()));
        assert!((v.re - std::f64::consts::PI.sqrt()).abs() < 1e-10);
    }
}
