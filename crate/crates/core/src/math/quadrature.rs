//! Adaptive Gauss–Lobatto quadrature for vector-valued integrands.
//!
//! Each panel is integrated with the 4-point Gauss–Lobatto rule and its
//! 7-point Kronrod extension (Gander & Gautschi); the difference of the two
//! serves as the error estimate. Panels that fail the test are split into six
//! sub-panels at the Kronrod nodes, reusing endpoint values. All components of
//! the integrand share the same panel tree, so an expensive common factor
//! (a characteristic function, say) is evaluated once per node.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;


use crate::error::{Error, Result};

const ALPHA: f64 = 0.816_496_580_927_726; // sqrt(2/3)
const BETA: f64 = 0.447_213_595_499_958; // 1/sqrt(5)

#[derive(Debug, Clone, Copy)]
pub struct LobattoConfig {
    /// Absolute error budget for the whole interval, per component.
    pub abs_tol: f64,
    pub max_depth: usize,
    /// Number of equal panels the interval is split into before adapting.
    pub initial_panels: usize,
    /// Integrand evaluation budget.
    pub max_evaluations: usize,
}

impl Default for LobattoConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            max_depth: 40,
            initial_panels: 8,
            max_evaluations: 2_000_000,
        }
    }
}

/// Counters returned alongside an integral.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QuadStats {
    pub evaluations: usize,
    pub panels: usize,
}

/// Integrates `f` over `[a, b]`, adding the result into `acc` (length `dim`).
///
/// `f(x, out)` must write the `dim` integrand components at `x` into `out`.
pub fn integrate_into<F>(
    f: &mut F,
    a: f64,
    b: f64,
    acc: &mut [f64],
    cfg: &LobattoConfig,
) -> Result<QuadStats>
where
    F: FnMut(f64, &mut [f64]),
{
    let dim = acc.len();
    let mut stats = QuadStats::default();
    if !(b > a) {
        return Ok(stats);
    }
    let panels = cfg.initial_panels.max(1);
    let width = (b - a) / panels as f64;
    let mut fa = vec![0.0; dim];
    let mut fb = vec![0.0; dim];
    f(a, &mut fa);
    stats.evaluations += 1;
    for p in 0..panels {
        let lo = a + p as f64 * width;
        let hi = if p + 1 == panels { b } else { lo + width };
        f(hi, &mut fb);
        stats.evaluations += 1;
        let tol = cfg.abs_tol * (hi - lo) / (b - a);
        panel(f, lo, hi, &fa, &fb, tol, 0, cfg, acc, &mut stats)?;
        core::mem::swap(&mut fa, &mut fb);
    }
    Ok(stats)
}

/// Convenience wrapper returning a fresh result vector.
pub fn integrate<F>(
    mut f: F,
    a: f64,
    b: f64,
    dim: usize,
    cfg: &LobattoConfig,
) -> Result<(Vec<f64>, QuadStats)>
where
    F: FnMut(f64, &mut [f64]),
{
    let mut acc = vec![0.0; dim];
    let stats = integrate_into(&mut f, a, b, &mut acc, cfg)?;
    Ok((acc, stats))
}

#[allow(clippy::too_many_arguments)]
fn panel<F>(
    f: &mut F,
    a: f64,
    b: f64,
    fa: &[f64],
    fb: &[f64],
    tol: f64,
    depth: usize,
    cfg: &LobattoConfig,
    acc: &mut [f64],
    stats: &mut QuadStats,
) -> Result<()>
where
    F: FnMut(f64, &mut [f64]),
{
    let dim = acc.len();
    let h = 0.5 * (b - a);
    let m = 0.5 * (a + b);
    let nodes = [m - ALPHA * h, m - BETA * h, m, m + BETA * h, m + ALPHA * h];
    let mut vals = vec![0.0; 5 * dim];
    for (k, &x) in nodes.iter().enumerate() {
        f(x, &mut vals[k * dim..(k + 1) * dim]);
    }
    stats.evaluations += 5;

    let (fmll, rest) = vals.split_at(dim);
    let (fml, rest) = rest.split_at(dim);
    let (fm, rest) = rest.split_at(dim);
    let (fmr, fmrr) = rest.split_at(dim);

    let mut err = 0.0f64;
    let mut kronrod = vec![0.0; dim];
    for j in 0..dim {
        let i2 = h / 6.0 * (fa[j] + fb[j] + 5.0 * (fml[j] + fmr[j]));
        let i1 = h / 1470.0
            * (77.0 * (fa[j] + fb[j])
                + 432.0 * (fmll[j] + fmrr[j])
                + 625.0 * (fml[j] + fmr[j])
                + 672.0 * fm[j]);
        err = err.max((i1 - i2).abs());
        kronrod[j] = i1;
    }
    if !err.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite integrand on [{a:e}, {b:e}]"
        )));
    }

    // below this the two rules differ only by rounding
    let scale = kronrod.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let roundoff = 64.0 * f64::EPSILON * scale;
    let unresolvable = nodes[0] <= a || b <= nodes[4];
    if err <= tol || err <= roundoff || unresolvable {
        for (s, k) in acc.iter_mut().zip(&kronrod) {
            *s += k;
        }
        stats.panels += 1;
        return Ok(());
    }
    if depth >= cfg.max_depth || stats.evaluations > cfg.max_evaluations {
        return Err(Error::Numeric(format!(
            "quadrature did not converge on [{a:e}, {b:e}]: error estimate {err:e} > {tol:e}"
        )));
    }

    let cuts = [a, nodes[0], nodes[1], nodes[2], nodes[3], nodes[4], b];
    let zeroth: &[f64] = fa;
    let inner: [&[f64]; 5] = [fmll, fml, fm, fmr, fmrr];
    for s in 0..6 {
        let lo = cuts[s];
        let hi = cuts[s + 1];
        let flo = if s == 0 { zeroth } else { inner[s - 1] };
        let fhi = if s == 5 { fb } else { inner[s] };
        let sub_tol = tol * (hi - lo) / (b - a);
        panel(f, lo, hi, flo, fhi, sub_tol, depth + 1, cfg, acc, stats)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let (v, _) = integrate(
            |x, out| out[0] = 3.0 * x * x + 2.0 * x,
            0.0,
            2.0,
            1,
            &LobattoConfig::default(),
        )
        .unwrap();
        assert!((v[0] - 12.0).abs() < 1e-13);
    }

    #[test]
    fn oscillatory_and_peaked_components() {
        let cfg = LobattoConfig {
            abs_tol: 1e-12,
            ..Default::default()
        };
        let (v, stats) = integrate(
            |x: f64, out: &mut [f64]| {
                out[0] = (20.0 * x).cos();
                out[1] = 1.0 / (1e-4 + (x - 0.3) * (x - 0.3));
            },
            0.0,
            1.0,
            2,
            &cfg,
        )
        .unwrap();
        assert!((v[0] - (20.0f64).sin() / 20.0).abs() < 1e-11);
        let exact = 100.0 * ((70.0f64).atan() + (30.0f64).atan());
        assert!((v[1] - exact).abs() < 1e-9, "{} vs {}", v[1], exact);
        assert!(stats.panels > 8);
    }

    #[test]
    fn reports_non_convergence() {
        let cfg = LobattoConfig {
            abs_tol: 1e-14,
            max_depth: 1,
            initial_panels: 1,
            ..Default::default()
        };
        let r = integrate(|x: f64, out: &mut [f64]| out[0] = (x * 400.0).sin(), 0.0, 10.0, 1, &cfg);
        assert!(matches!(r, Err(Error::Numeric(_))));
    }
}
