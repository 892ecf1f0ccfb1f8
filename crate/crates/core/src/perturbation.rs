//! The short-range perturbation `vhat = V - V_q`.
//!
//! A perturbation is given by an expression in `x`, a sampled table, or a
//! Rust closure. On construction it is scanned on a fine grid to obtain the
//! norms `∫|vhat|`, `∫(1+|x|)|vhat|` and the tail integrals that decide how
//! far out the Jost solutions have to be started.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::quad::{self, QuadOptions};

const SCAN_HALF_WIDTH: f64 = 200.0;
const SCAN_STEP: f64 = 0.005;

/// Natural cubic spline through `(x_i, y_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        let n = xs.len();
        if n < 2 || ys.len() != n {
            return Err(Error::Config("a table needs at least two (x, V) rows".into()));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) || xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(Error::Config("table abscissae must be finite and strictly increasing".into()));
        }
        // tridiagonal solve for the natural spline
        let mut m = vec![0.0; n];
        if n > 2 {
            let mut diag = vec![0.0; n];
            let mut rhs = vec![0.0; n];
            let mut upper = vec![0.0; n];
            for i in 1..n - 1 {
                let h0 = xs[i] - xs[i - 1];
                let h1 = xs[i + 1] - xs[i];
                diag[i] = 2.0 * (h0 + h1);
                upper[i] = h1;
                rhs[i] = 6.0 * ((ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0);
            }
            for i in 2..n - 1 {
                let w = (xs[i] - xs[i - 1]) / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            for i in (1..n - 1).rev() {
                m[i] = (rhs[i] - upper[i] * m[i + 1]) / diag[i];
            }
        }
        Ok(CubicSpline { xs, ys, m })
    }

    pub fn range(&self) -> (f64, f64) {
        (self.xs[0], *self.xs.last().unwrap())
    }

    /// Spline value; zero outside the sampled range.
    pub fn eval(&self, x: f64) -> f64 {
        let (lo, hi) = self.range();
        if !(x >= lo && x <= hi) {
            return 0.0;
        }
        let i = match self.xs.partition_point(|&v| v <= x) {
            0 => 0,
            k => (k - 1).min(self.xs.len() - 2),
        };
        let h = self.xs[i + 1] - self.xs[i];
        let a = (self.xs[i + 1] - x) / h;
        let b = (x - self.xs[i]) / h;
        a * self.ys[i]
            + b * self.ys[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }

    /// Reads a two-column CSV `x,V`; a non-numeric first row is a header and
    /// lines starting with `#` are comments.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            let parsed: Option<(f64, f64)> = match cols.as_slice() {
                [a, b, ..] => a.parse().ok().zip(b.parse().ok()),
                _ => None,
            };
            match parsed {
                Some((x, v)) => {
                    xs.push(x);
                    ys.push(v);
                }
                None if xs.is_empty() && lineno == 0 => continue,
                None => return Err(Error::Config(format!("table line {}: cannot parse '{line}'", lineno + 1))),
            }
        }
        CubicSpline::new(xs, ys)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read table {}: {e}", path.display())))?;
        CubicSpline::from_csv(&text)
    }
}

#[derive(Clone)]
pub enum Source {
    Zero,
    Expression { expr: Expr, text: String },
    Table(CubicSpline),
    Function(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Zero => write!(f, "Zero"),
            Source::Expression { text, .. } => write!(f, "Expression({text:?})"),
            Source::Table(s) => write!(f, "Table({:?})", s.range()),
            Source::Function(_) => write!(f, "Function"),
        }
    }
}

/// `vhat` together with its scanned norms and tails.
#[derive(Debug, Clone)]
pub struct Perturbation {
    source: Source,
    /// Scan abscissae and cumulative tails `∫_{-inf}^{x_i} |vhat|`, `∫_{x_i}^{inf} |vhat|`.
    grid: Vec<f64>,
    left_tail: Vec<f64>,
    right_tail: Vec<f64>,
    /// `∫|vhat|`.
    pub l1: f64,
    /// `∫(1+|x|)|vhat|`.
    pub moment: f64,
    /// Scale `ℓ` of an `exp(-|x|/ℓ)` fit to the tails (infinite if no decay is seen).
    pub decay_length: f64,
    /// Whether `(1+|x|)|vhat|` is negligible at the ends of the scan.
    pub short_range: bool,
}

impl Perturbation {
    pub fn new(source: Source) -> Result<Self> {
        let (lo, hi) = match &source {
            Source::Table(s) => s.range(),
            _ => (-SCAN_HALF_WIDTH, SCAN_HALF_WIDTH),
        };
        let n = ((hi - lo) / SCAN_STEP).ceil().max(2.0) as usize;
        let h = (hi - lo) / n as f64;
        let mut pert = Perturbation {
            source,
            grid: Vec::new(),
            left_tail: Vec::new(),
            right_tail: Vec::new(),
            l1: 0.0,
            moment: 0.0,
            decay_length: f64::INFINITY,
            short_range: true,
        };
        if matches!(pert.source, Source::Zero) {
            pert.decay_length = 0.0;
            return Ok(pert);
        }
        let grid: Vec<f64> = (0..=n).map(|i| lo + i as f64 * h).collect();
        let vals: Vec<f64> = grid.iter().map(|&x| pert.vhat(x)).collect();
        if let Some(i) = vals.iter().position(|v| !v.is_finite()) {
            return Err(Error::Expression(format!("perturbation is not finite at x = {}", grid[i])));
        }
        let mut left = vec![0.0; n + 1];
        for i in 1..=n {
            left[i] = left[i - 1] + 0.5 * h * (vals[i - 1].abs() + vals[i].abs());
        }
        let total = left[n];
        let right: Vec<f64> = left.iter().map(|l| total - l).collect();
        let moment: f64 = (1..=n)
            .map(|i| {
                let f = |k: usize| (1.0 + grid[k].abs()) * vals[k].abs();
                0.5 * h * (f(i - 1) + f(i))
            })
            .sum();
        let edge = |k: usize| (1.0 + grid[k].abs()) * vals[k].abs();
        pert.short_range = edge(0).max(edge(n)) < 1e-10 * total.max(1e-300) || total == 0.0;
        pert.l1 = total;
        pert.moment = moment;
        pert.grid = grid;
        pert.left_tail = left;
        pert.right_tail = right;
        pert.decay_length = pert.fit_decay_length();
        Ok(pert)
    }

    pub fn zero() -> Self {
        Perturbation::new(Source::Zero).expect("zero perturbation")
    }

    pub fn from_expression(text: &str) -> Result<Self> {
        let expr = Expr::parse(text)?;
        Perturbation::new(Source::Expression {
            expr,
            text: text.to_string(),
        })
    }

    pub fn from_table(spline: CubicSpline) -> Result<Self> {
        let (lo, hi) = spline.range();
        let edge = spline.eval(lo).abs().max(spline.eval(hi).abs());
        if edge > 1e-8 {
            log::warn!("table ends at |vhat| = {edge:e}; extended by zero beyond [{lo}, {hi}]");
        }
        Perturbation::new(Source::Table(spline))
    }

    pub fn from_fn<F: Fn(f64) -> f64 + Send + Sync + 'static>(f: F) -> Result<Self> {
        Perturbation::new(Source::Function(Arc::new(f)))
    }

    pub fn source(&self) -> &Source {
        &self.source
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.source, Source::Zero) || self.l1 == 0.0
    }

    pub fn vhat(&self, x: f64) -> f64 {
        match &self.source {
            Source::Zero => 0.0,
            Source::Expression { expr, .. } => expr.eval(x),
            Source::Table(s) => s.eval(x),
            Source::Function(f) => f(x),
        }
    }

    /// Interval `[lo, hi]` outside of which `∫|vhat| < tol` (half on each side).
    pub fn support(&self, tol: f64) -> Result<(f64, f64)> {
        if self.is_zero() {
            return Ok((0.0, 0.0));
        }
        let n = self.grid.len() - 1;
        let half = 0.5 * tol;
        let scan_edge = |k: usize| self.vhat(self.grid[k]).abs() * (self.grid[n] - self.grid[0]) * 1e-3;
        if !matches!(self.source, Source::Table(_)) && (scan_edge(0) > half || scan_edge(n) > half) {
            return Err(Error::Window(format!(
                "perturbation has not decayed to the tail tolerance {tol:e} within |x| <= {SCAN_HALF_WIDTH}"
            )));
        }
        let lo_idx = self.left_tail.partition_point(|&t| t < half).saturating_sub(1);
        let hi_idx = self.right_tail.partition_point(|&t| t >= half).min(n);
        Ok((self.grid[lo_idx], self.grid[hi_idx].max(self.grid[lo_idx])))
    }

    /// `∫ vhat dx` by adaptive quadrature over the support.
    pub fn integral(&self) -> Result<f64> {
        self.moment_integral(|v, _| v)
    }

    /// `∫ f(vhat(x), x) dx` over the support at tail tolerance `1e-15 l1`.
    pub fn moment_integral<F: Fn(f64, f64) -> f64>(&self, f: F) -> Result<f64> {
        if self.is_zero() {
            return Ok(0.0);
        }
        let (lo, hi) = self.support(1e-15 * self.l1)?;
        let opts = QuadOptions {
            abs_tol: 1e-14 * self.l1.max(1.0),
            rel_tol: 1e-14,
            max_panels: 200_000,
        };
        let pieces = ((hi - lo) / 2.0).ceil().max(1.0) as usize;
        let mut total = 0.0;
        for k in 0..pieces {
            let a = lo + (hi - lo) * k as f64 / pieces as f64;
            let b = lo + (hi - lo) * (k + 1) as f64 / pieces as f64;
            total += quad::adaptive(|x| Complex64::new(f(self.vhat(x), x), 0.0), a, b, opts)?.re;
        }
        Ok(total)
    }

    fn fit_decay_length(&self) -> f64 {
        let total = self.l1;
        if total == 0.0 {
            return 0.0;
        }
        let pos = |tails: &[f64], level: f64, from_left: bool| -> Option<f64> {
            let idx = if from_left {
                tails.partition_point(|&t| t < level)
            } else {
                tails.partition_point(|&t| t >= level)
            };
            (idx > 0 && idx < tails.len()).then(|| self.grid[idx])
        };
        let (l1, l2) = (1e-3 * total, 1e-9 * total);
        match (pos(&self.right_tail, l1, false), pos(&self.right_tail, l2, false)) {
            (Some(a), Some(b)) if b > a => (b - a) / (l1 / l2).ln(),
            _ => match (pos(&self.left_tail, l1, true), pos(&self.left_tail, l2, true)) {
                (Some(a), Some(b)) if a > b => (a - b) / (l1 / l2).ln(),
                _ => f64::INFINITY,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spline_reproduces_cubics_in_the_interior_and_zero_outside() {
        let xs: Vec<f64> = (0..=40).map(|i| -2.0 + 0.1 * i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (x * 1.3).sin()).collect();
        let s = CubicSpline::new(xs, ys).unwrap();
        for x in [-1.55, 0.0, 0.33, 1.01] {
            assert!((s.eval(x) - (x * 1.3).sin()).abs() < 1e-5);
        }
        assert_eq!(s.eval(2.5), 0.0);
        assert_eq!(s.eval(-2.01), 0.0);
    }

    #[test]
    fn csv_tables() {
        let s = CubicSpline::from_csv("x,V\n# comment\n0,1\n1,2\n2,5\n").unwrap();
        assert_eq!(s.range(), (0.0, 2.0));
        assert!((s.eval(1.0) - 2.0).abs() < 1e-15);
        assert!(CubicSpline::from_csv("0,1\n0,2\n").is_err());
        assert!(CubicSpline::from_csv("0,1\nfoo,bar\n").is_err());
    }

    #[test]
    fn soliton_norms_and_window() {
        let p = Perturbation::from_expression("-2*sech(x)^2").unwrap();
        assert!((p.l1 - 4.0).abs() < 1e-4);
        assert!((p.integral().unwrap() + 4.0).abs() < 1e-12);
        assert!(p.short_range);
        let (lo, hi) = p.support(1e-12).unwrap();
        // tail of 2 sech^2 beyond L is about 4 e^{-2L}
        assert!(hi > 14.0 && hi < 15.5 && (lo + hi).abs() < 0.02, "{lo} {hi}");
        assert!((p.decay_length - 0.5).abs() < 0.05);
    }

    #[test]
    fn slow_decay_is_reported() {
        let p = Perturbation::from_expression("1/(1+x^2)").unwrap();
        assert!(!p.short_range);
        assert!(matches!(p.support(1e-12), Err(Error::Window(_))));
    }

    #[test]
    fn zero_and_closure_sources() {
        let z = Perturbation::zero();
        assert!(z.is_zero());
        assert_eq!(z.integral().unwrap(), 0.0);
        let g = Perturbation::from_fn(|x| 0.7 * (-x * x).exp()).unwrap();
        assert!((g.integral().unwrap() - 0.7 * std::f64::consts::PI.sqrt()).abs() < 1e-13);
    }
}
