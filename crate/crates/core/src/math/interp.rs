//! Monotone piecewise-cubic Hermite interpolation (Steffen's limiter).
//!
//! Node derivatives are the parabolic three-point estimates, clipped so that
//! each cubic piece stays monotone between its nodes. On smooth data the
//! limiter is inactive and the interpolant is third-order accurate.

use alloc::vec::Vec;


use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(x: &[f64], y: &[f64]) -> Result<Self> {
        if x.len() != y.len() || x.len() < 2 {
            return Err(Error::Domain(
                "interpolation needs at least two (x, y) pairs of equal length".into(),
            ));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("interpolation nodes must be strictly increasing".into()));
        }
        let n = x.len();
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let s: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        let mut d = alloc::vec![0.0; n];
        if n == 2 {
            d[0] = s[0];
            d[1] = s[0];
        } else {
            for i in 1..n - 1 {
                let p = (s[i - 1] * h[i] + s[i] * h[i - 1]) / (h[i - 1] + h[i]);
                d[i] = (sign(s[i - 1]) + sign(s[i]))
                    * s[i - 1].abs().min(s[i].abs()).min(0.5 * p.abs());
            }
            let p0 = s[0] * (1.0 + h[0] / (h[0] + h[1])) - s[1] * h[0] / (h[0] + h[1]);
            d[0] = end_slope(p0, s[0]);
            let (hl, hm) = (h[n - 2], h[n - 3]);
            let pn = s[n - 2] * (1.0 + hl / (hl + hm)) - s[n - 3] * hl / (hl + hm);
            d[n - 1] = end_slope(pn, s[n - 2]);
        }
        Ok(Self {
            x: x.to_vec(),
            y: y.to_vec(),
            d,
        })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }

    /// Value at `t`, or `None` outside the node range.
    pub fn eval(&self, t: f64) -> Option<f64> {
        let (lo, hi) = self.domain();
        if !(t >= lo && t <= hi) {
            return None;
        }
        let i = self.segment(t);
        let h = self.x[i + 1] - self.x[i];
        let u = (t - self.x[i]) / h;
        let u2 = u * u;
        let u3 = u2 * u;
        let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
        let h10 = u3 - 2.0 * u2 + u;
        let h01 = -2.0 * u3 + 3.0 * u2;
        let h11 = u3 - u2;
        Some(h00 * self.y[i] + h10 * h * self.d[i] + h01 * self.y[i + 1] + h11 * h * self.d[i + 1])
    }

    /// First derivative at `t`, or `None` outside the node range.
    pub fn derivative(&self, t: f64) -> Option<f64> {
        let (lo, hi) = self.domain();
        if !(t >= lo && t <= hi) {
            return None;
        }
        let i = self.segment(t);
        let h = self.x[i + 1] - self.x[i];
        let u = (t - self.x[i]) / h;
        let u2 = u * u;
        let dy = (self.y[i + 1] - self.y[i]) / h;
        Some(
            (6.0 * u - 6.0 * u2) * dy
                + (3.0 * u2 - 4.0 * u + 1.0) * self.d[i]
                + (3.0 * u2 - 2.0 * u) * self.d[i + 1],
        )
    }

    fn segment(&self, t: f64) -> usize {
        let n = self.x.len();
        let j = self.x.partition_point(|&v| v <= t);
        j.saturating_sub(1).min(n - 2)
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn end_slope(p: f64, s: f64) -> f64 {
    if p * s <= 0.0 {
        0.0
    } else if p.abs() > 2.0 * s.abs() {
        2.0 * s
    } else {
        p
    }
}
