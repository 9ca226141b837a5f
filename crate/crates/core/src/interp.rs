//! Shape-preserving piecewise cubic Hermite interpolation (Fritsch–Carlson
//! slopes with the Fritsch–Butland harmonic mean).

use crate::error::{domain, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    /// `x` must be strictly increasing with at least two points.
    pub fn new(x: &[f64], y: &[f64]) -> Result<Self> {
        if x.len() != y.len() || x.len() < 2 {
            return Err(domain("interpolation needs at least two (x, y) pairs"));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) || x.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(domain("interpolation abscissae must be finite and strictly increasing"));
        }
        let n = x.len();
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d.fill(delta[0]);
        } else {
            for i in 1..n - 1 {
                if delta[i - 1] * delta[i] > 0.0 {
                    let w1 = 2.0 * h[i] + h[i - 1];
                    let w2 = h[i] + 2.0 * h[i - 1];
                    d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
                }
            }
            d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
            d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }
        Ok(Self {
            x: x.to_vec(),
            y: y.to_vec(),
            d,
        })
    }

    pub fn x_range(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        (&self.x, &self.y)
    }

    /// Value at `t`, clamped to the knot range.
    pub fn eval(&self, t: f64) -> f64 {
        let (lo, hi) = self.x_range();
        let t = t.clamp(lo, hi);
        let i = self.x.partition_point(|&v| v <= t).clamp(1, self.x.len() - 1) - 1;
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.y[i] + h10 * h * self.d[i] + h01 * self.y[i + 1] + h11 * h * self.d[i + 1]
    }

    /// Smallest `t` with `eval(t) = level`, found by bisection inside the
    /// first knot interval that brackets `level`.
    pub fn first_crossing(&self, level: f64) -> Option<f64> {
        for i in 0..self.x.len() - 1 {
            let (a, b) = (self.y[i] - level, self.y[i + 1] - level);
            if a == 0.0 {
                return Some(self.x[i]);
            }
            if a * b < 0.0 {
                return Some(self.bisect(self.x[i], self.x[i + 1], level));
            }
        }
        let last = self.x.len() - 1;
        (self.y[last] == level).then_some(self.x[last])
    }

    fn bisect(&self, mut lo: f64, mut hi: f64, level: f64) -> f64 {
        let below = self.eval(lo) < level;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (self.eval(mid) < level) == below {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-14 * (1.0 + mid.abs()) {
                break;
            }
        }
        0.5 * (lo + hi)
    }
}

fn end_slope(h0: f64, h1: f64, del0: f64, del1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d.signum() != del0.signum() {
        0.0
    } else if del0.signum() != del1.signum() && d.abs() > 3.0 * del0.abs() {
        3.0 * del0
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn passes_through_knots_and_reproduces_lines() {
        let x = [0.0, 1.0, 2.5, 4.0];
        let y = [1.0, 3.0, 6.0, 9.0];
        let p = Pchip::new(&x, &y).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert!((p.eval(*a) - b).abs() < 1e-12);
        }
        let line = Pchip::new(&[0.0, 1.0, 2.0, 3.0], &[0.0, 2.0, 4.0, 6.0]).unwrap();
        assert!((line.eval(1.7) - 3.4).abs() < 1e-12);
        assert!((line.first_crossing(5.0).unwrap() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_abscissae() {
        assert!(Pchip::new(&[0.0], &[1.0]).is_err());
        assert!(Pchip::new(&[0.0, 0.0], &[1.0, 2.0]).is_err());
        assert!(Pchip::new(&[0.0, 1.0], &[1.0]).is_err());
    }

    #[test]
    fn crossing_absent_outside_range() {
        let p = Pchip::new(&[0.0, 1.0, 2.0], &[0.1, 0.2, 0.3]).unwrap();
        assert!(p.first_crossing(0.5).is_none());
        assert_eq!(p.first_crossing(0.3), Some(2.0));
    }

    proptest! {
        #[test]
        fn monotone_data_gives_monotone_interpolant(
            steps in prop::collection::vec((0.01f64..2.0, 0.0f64..1.0), 2..12),
        ) {
            let mut x = vec![0.0];
            let mut y = vec![0.0];
            for (dx, dy) in &steps {
                x.push(x.last().unwrap() + dx);
                y.push(y.last().unwrap() + dy);
            }
            let p = Pchip::new(&x, &y).unwrap();
            let (lo, hi) = p.x_range();
            let mut prev = p.eval(lo);
            for i in 1..=400 {
                let v = p.eval(lo + (hi - lo) * i as f64 / 400.0);
                prop_assert!(v >= prev - 1e-12);
                prev = v;
            }
        }
    }
}
