//! Gauss panels in the edge variable `s = sqrt(±(λ - E))` on spectral bands.

use num_complex::Complex64;
use serde::Serialize;

use crate::quad::gauss16;

/// Panels `[a, b]` in `s` covering `[0, s_max]`; the first one is wide enough
/// that no Gauss node falls into the edge exclusion zone.
pub(crate) fn half_band(s_max: f64, n: usize, first_min: f64) -> Vec<(f64, f64)> {
    let first = (s_max / n as f64).max(first_min).min(s_max);
    let mut breaks = vec![0.0, first];
    if first < s_max {
        let m = n.saturating_sub(1).max(1);
        for k in 1..=m {
            breaks.push(first + (s_max - first) * k as f64 / m as f64);
        }
    }
    breaks.windows(2).map(|w| (w[0], w[1])).collect()
}

/// Gauss panel in `s = sqrt(dir (λ - edge))` carrying samples of a function at the
/// Gauss nodes, ascending in `s`.
#[derive(Debug, Clone, Serialize)]
pub struct Panel {
    pub edge: f64,
    pub dir: f64,
    pub a: f64,
    pub b: f64,
    pub values: Vec<f64>,
}

impl Panel {
    pub fn s_nodes(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let rule = gauss16();
        let (c, h) = (0.5 * (self.a + self.b), 0.5 * (self.b - self.a));
        rule.nodes.iter().zip(&rule.weights).map(move |(x, w)| (c + h * x, h * w))
    }

    pub fn lambda(&self, s: f64) -> f64 {
        self.edge + self.dir * s * s
    }

    /// Barycentric interpolation through the Gauss nodes.
    pub fn interp(&self, s: f64) -> f64 {
        let rule = gauss16();
        let x = (2.0 * s - self.a - self.b) / (self.b - self.a);
        let (mut num, mut den) = (0.0, 0.0);
        for (j, ((xj, wj), fj)) in rule.nodes.iter().zip(&rule.weights).zip(&self.values).enumerate() {
            let d = x - xj;
            if d == 0.0 {
                return *fj;
            }
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            let bw = sign * ((1.0 - xj * xj) * wj).sqrt() / d;
            num += bw * fj;
            den += bw;
        }
        num / den
    }

    /// The same interpolant continued to complex `s`.
    pub fn interp_complex(&self, s: Complex64) -> Complex64 {
        let rule = gauss16();
        let x = (2.0 * s - self.a - self.b) / (self.b - self.a);
        let (mut num, mut den) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
        for (j, ((xj, wj), fj)) in rule.nodes.iter().zip(&rule.weights).zip(&self.values).enumerate() {
            let d = x - xj;
            if d.norm() == 0.0 {
                return Complex64::new(*fj, 0.0);
            }
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            let bw = sign * ((1.0 - xj * xj) * wj).sqrt() / d;
            num += bw * fj;
            den += bw;
        }
        num / den
    }

    /// Distance of `z` from the `λ`-range of the panel, relative to its length.
    pub fn relative_distance(&self, z: Complex64) -> f64 {
        let (l1, l2) = (self.lambda(self.a), self.lambda(self.b));
        let (lo, hi) = (l1.min(l2), l1.max(l2));
        let dx = if z.re < lo { lo - z.re } else if z.re > hi { z.re - hi } else { 0.0 };
        dx.hypot(z.im) / (hi - lo)
    }
}
