use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::quadrature::{integrate_into, LobattoConfig};

/// Heston stochastic-variance parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HestonParams {
    pub v0: f64,
    pub vbar: f64,
    pub rho: f64,
    pub kappa: f64,
    pub sigma_v: f64,
}

impl HestonParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.v0 > 0.0
            && self.vbar > 0.0
            && self.kappa > 0.0
            && self.sigma_v > 0.0
            && self.rho > -1.0
            && self.rho < 1.0
            && [self.v0, self.vbar, self.kappa, self.sigma_v, self.rho].iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid Heston parameters {self:?}")))
        }
    }
}

/// Accuracy controls for the Fourier integral.
#[derive(Debug, Clone, Copy)]
pub struct HestonQuadrature {
    /// Absolute price tolerance as a fraction of spot.
    pub rel_tol: f64,
    /// First truncation point of the frequency integral.
    pub initial_cutoff: f64,
    /// Hard limit on the truncation point.
    pub max_cutoff: f64,
}

impl Default for HestonQuadrature {
    fn default() -> Self {
        Self {
            rel_tol: 1e-12,
            initial_cutoff: 200.0,
            max_cutoff: 1e6,
        }
    }
}

/// `ln(1 + z)` without cancellation for small `z`.
fn ln1p(z: Complex64) -> Complex64 {
    let re = 0.5 * libm::log1p(2.0 * z.re + z.norm_sqr());
    let im = libm::atan2(z.im, 1.0 + z.re);
    Complex64::new(re, im)
}

/// Characteristic function `E[exp(iu ln(P_T/F))]` of the log-forward return.
///
/// Uses the rotation-count-free form with `g = (ξ−d)/(ξ+d)`; `ξ−d` is taken
/// from `ξ²−d² = −σ²(u²+iu)` so the small-`σ` limit stays accurate.
pub(crate) fn char_fn(u: Complex64, t: f64, p: &HestonParams) -> Complex64 {
    let i = Complex64::i();
    let s2 = p.sigma_v * p.sigma_v;
    let a = u * u + i * u;
    let xi = p.kappa - p.sigma_v * p.rho * i * u;
    let d = (xi * xi + s2 * a).sqrt();
    let sum = xi + d;
    let diff = if sum.norm() > 1e-12 * (1.0 + xi.norm()) { -s2 * a / sum } else { xi - d };
    let g = diff / sum;
    let e = (-d * t).exp();
    let big_d = -a / sum * (1.0 - e) / (1.0 - g * e);
    let logs = ln1p(-g * e) - ln1p(-g);
    let big_c = p.kappa * p.vbar * (-a * t / sum - 2.0 * logs / s2);
    (big_c + big_d * p.v0).exp()
}

/// Discounted Heston call prices for one maturity and many strikes.
///
/// Single-integral representation
/// `E(P_T−K)^+ = F − √(FK)/π ∫₀^∞ Re[e^{−iwk} φ(w−i/2)] / (w²+¼) dw`, `k = ln(K/F)`,
/// evaluated for all strikes on shared quadrature nodes. The truncation point
/// doubles until `|φ(U−i/2)|/U` bounds the remaining tail below tolerance.
pub fn heston_calls(
    spot: f64,
    strikes: &[f64],
    maturity: f64,
    rate: f64,
    dividend: f64,
    params: &HestonParams,
) -> Result<Vec<f64>> {
    heston_calls_with(spot, strikes, maturity, rate, dividend, params, &HestonQuadrature::default())
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn heston_calls_with(
    spot: f64,
    strikes: &[f64],
    maturity: f64,
    rate: f64,
    dividend: f64,
    params: &HestonParams,
    quad: &HestonQuadrature,
) -> Result<Vec<f64>> {
    params.validate()?;
    if !(spot > 0.0 && spot.is_finite() && maturity > 0.0 && maturity.is_finite() && rate.is_finite() && dividend.is_finite()) {
        return Err(Error::Domain(format!("Heston inputs out of domain: spot {spot}, T {maturity}")));
    }
    if let Some(k) = strikes.iter().find(|k| !(**k >= 0.0 && k.is_finite())) {
        return Err(Error::Domain(format!("invalid strike {k}")));
    }
    let df_r = (-rate * maturity).exp();
    let fwd = spot * ((rate - dividend) * maturity).exp();

    // zero strikes are priced exactly and skipped in the integral
    let active: Vec<usize> = (0..strikes.len()).filter(|&j| strikes[j] > 0.0).collect();
    let logk: Vec<f64> = active.iter().map(|&j| (strikes[j] / fwd).ln()).collect();
    let scale: Vec<f64> = active.iter().map(|&j| df_r * (fwd * strikes[j]).sqrt() / core::f64::consts::PI).collect();
    let max_scale = scale.iter().cloned().fold(0.0, f64::max);
    let tol = quad.rel_tol * spot;

    let shift = Complex64::new(0.0, -0.5);
    let mut integrand = |w: f64, out: &mut [f64]| {
        let phi = char_fn(Complex64::new(w, 0.0) + shift, maturity, params);
        let denom = w * w + 0.25;
        for (j, o) in out.iter_mut().enumerate() {
            let (s, c) = (w * logk[j]).sin_cos();
            *o = scale[j] * (c * phi.re + s * phi.im) / denom;
        }
    };

    let mut acc = vec![0.0; active.len()];
    if !active.is_empty() {
        let cfg = LobattoConfig { abs_tol: 0.5 * tol, initial_panels: 16, ..LobattoConfig::default() };
        integrate_into(&mut integrand, 0.0, quad.initial_cutoff, &mut acc, &cfg)
            .map_err(|e| Error::Numeric(format!("Heston integral: {e}")))?;
        let mut lo = quad.initial_cutoff;
        loop {
            let tail = char_fn(Complex64::new(lo, 0.0) + shift, maturity, params).norm() / lo * max_scale;
            if !tail.is_finite() {
                return Err(Error::Numeric("Heston characteristic function is not finite".into()));
            }
            if tail < 0.1 * tol {
                break;
            }
            if lo >= quad.max_cutoff {
                return Err(Error::Numeric(format!("Heston integral tail not below tolerance at cutoff {lo}")));
            }
            let hi = 2.0 * lo;
            let cfg = LobattoConfig { abs_tol: 0.25 * tol, initial_panels: 8, ..LobattoConfig::default() };
            integrate_into(&mut integrand, lo, hi, &mut acc, &cfg)
                .map_err(|e| Error::Numeric(format!("Heston integral: {e}")))?;
            lo = hi;
        }
    }

    let mut out = vec![spot * (-dividend * maturity).exp(); strikes.len()];
    for (n, &j) in active.iter().enumerate() {
        let raw = df_r * fwd - acc[n];
        if !raw.is_finite() {
            return Err(Error::Numeric(format!("non-finite Heston price at strike {}", strikes[j])));
        }
        // quadrature noise can dip below the no-arbitrage floor far from the money
        let floor = df_r * (fwd - strikes[j]).max(0.0);
        out[j] = raw.max(floor).min(df_r * fwd);
    }
    Ok(out)
}

pub fn heston_call(spot: f64, strike: f64, maturity: f64, rate: f64, dividend: f64, params: &HestonParams) -> Result<f64> {
    Ok(heston_calls(spot, &[strike], maturity, rate, dividend, params)?[0])
}

/// Put by parity from the same integral.
pub fn heston_put(spot: f64, strike: f64, maturity: f64, rate: f64, dividend: f64, params: &HestonParams) -> Result<f64> {
    let c = heston_call(spot, strike, maturity, rate, dividend, params)?;
    Ok(c - spot * (-dividend * maturity).exp() + strike * (-rate * maturity).exp())
}
