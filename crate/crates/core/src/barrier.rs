//! Root and Rost obstacle problems on a uniform log-price grid, single- and
//! multi-marginal, and barrier extraction from their contact sets.
//!
//! The operator is `L = ½∂ξξ − ½∂ξ` (geometric Brownian motion in `ξ = ln x`
//! on the quadratic-variation clock). Each explicit Euler step diffuses and
//! then projects onto the obstacle; both grid ends are pinned to it.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potentials::{check_convex_order, PotentialCurve};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BarrierKind {
    Root,
    Rost,
}

impl BarrierKind {
    pub fn name(self) -> &'static str {
        match self {
            BarrierKind::Root => "root",
            BarrierKind::Rost => "rost",
        }
    }
}

/// Spatial difference scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stencil {
    /// Plain central differences for both derivatives.
    Central,
    /// Exponentially fitted weights, exact on `1` and `e^ξ`. Linear-in-price
    /// tails of the potentials are then stationary, as in the continuum.
    #[default]
    Fitted,
}

impl Stencil {
    /// Weights `(a₊, a₋)` of `u_{i+1} − u_i` and `u_{i−1} − u_i`.
    pub fn weights(self, dx: f64) -> (f64, f64) {
        let h2 = dx * dx;
        match self {
            Stencil::Central => ((1.0 - 0.5 * dx) / (2.0 * h2), (1.0 + 0.5 * dx) / (2.0 * h2)),
            Stencil::Fitted => {
                let ap = 1.0 / (h2 * (1.0 + dx.exp()));
                (ap, ap * dx.exp())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub nx: usize,
    /// Half-width `L` of the log-price window around `ln P₀`.
    pub half_width: f64,
    /// Solver-clock horizon.
    pub t_max: f64,
    pub stability_factor: f64,
}

impl GridConfig {
    /// Defaults for a surface with reference volatility `sigma_ref` and last
    /// maturity `t_last`: `L = 4σ√T`, horizon `8σ²T`.
    pub fn for_surface(sigma_ref: f64, t_last: f64, nx: usize) -> Self {
        Self {
            nx,
            half_width: 4.0 * sigma_ref * t_last.sqrt(),
            t_max: 8.0 * sigma_ref * sigma_ref * t_last,
            stability_factor: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub p0: f64,
    /// Nodes in `ξ = ln x`.
    pub xi: Vec<f64>,
    /// Nodes in price units; the centre node is exactly `P₀` for odd `nx`.
    pub x: Vec<f64>,
    pub nx: usize,
    pub dx: f64,
    pub dt: f64,
    pub nt: usize,
    pub t_max: f64,
}

pub fn build_grid(p0: f64, cfg: &GridConfig) -> Result<Grid> {
    if cfg.nx < 200 {
        return Err(Error::Config(format!("nx must be at least 200, got {}", cfg.nx)));
    }
    if !(cfg.t_max > 0.0) || !cfg.t_max.is_finite() {
        return Err(Error::Config(format!("t_max must be positive, got {}", cfg.t_max)));
    }
    if !(cfg.half_width > 0.0) || !cfg.half_width.is_finite() || !(p0 > 0.0) {
        return Err(Error::Config(format!("invalid grid window {} around {p0}", cfg.half_width)));
    }
    if !(cfg.stability_factor > 0.0 && cfg.stability_factor <= 1.0) {
        return Err(Error::Config(format!("stability factor must lie in (0, 1], got {}", cfg.stability_factor)));
    }
    let nx = cfg.nx;
    let dx = 2.0 * cfg.half_width / (nx - 1) as f64;
    let mid = (nx - 1) as f64 / 2.0;
    let l0 = p0.ln();
    let xi: Vec<f64> = (0..nx).map(|i| l0 + (i as f64 - mid) * dx).collect();
    let mut x: Vec<f64> = xi.iter().map(|v| v.exp()).collect();
    if nx % 2 == 1 {
        x[nx / 2] = p0;
    }
    let dt_cap = cfg.stability_factor * dx * dx / (1.0 + 0.5 * dx);
    let nt = (cfg.t_max / dt_cap).ceil() as usize;
    let dt = cfg.t_max / nt as f64;
    Ok(Grid { p0, xi, x, nx, dx, dt, nt, t_max: cfg.t_max })
}

impl Grid {
    pub fn time(&self, step: usize) -> f64 {
        if step == self.nt {
            self.t_max
        } else {
            step as f64 * self.dt
        }
    }

    /// Grid with `nx` replaced by `2(nx − 1) + 1`, keeping every old node.
    pub fn refined_config(cfg: &GridConfig) -> GridConfig {
        GridConfig { nx: 2 * (cfg.nx - 1) + 1, ..*cfg }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub stencil: Stencil,
    /// Root contact tolerance relative to `P₀`.
    pub contact_tol: f64,
    /// Rost contact tolerance relative to `P₀`. Far in the tails the final
    /// gap `U_λ − U_μ` is smaller than the Root tolerance, so contact there
    /// could never be lost.
    pub rost_contact_tol: f64,
    /// Obstacle excess over start data tolerated silently, relative to `P₀`.
    pub clip_tol: f64,
    /// Approximate number of stored snapshots per level.
    pub snapshots: usize,
    /// Rost levels run to this multiple of the grid horizon; the tails of a
    /// Rost barrier sit far above the Root barrier times.
    pub rost_horizon_factor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { stencil: Stencil::Fitted, contact_tol: 1e-7, rost_contact_tol: 1e-10, clip_tol: 1e-9, snapshots: 64, rost_horizon_factor: 16.0 }
    }
}

/// Solution of one level of the obstacle problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueFunction {
    pub kind: BarrierKind,
    /// Zero-based marginal index.
    pub index: usize,
    pub grid: Grid,
    pub snapshot_steps: Vec<usize>,
    pub snapshots: Vec<Vec<f64>>,
    pub obstacle_snapshots: Vec<Vec<f64>>,
    /// Contact times tracked at every step: first contact for Root (`+∞`
    /// when none), last contact for Rost.
    pub contact_times: Vec<f64>,
    /// Absolute contact tolerance used.
    pub contact_tol: f64,
    pub warnings: Vec<String>,
    /// Mean stopping time of the lattice mass that settles at each node;
    /// the contact time where less than `SETTLED_MASS` settles.
    pub settling_times: Vec<f64>,
    /// Lattice mass stopped at each node by the end of the run.
    pub settled_mass: Vec<f64>,
}

impl ValueFunction {
    pub fn final_values(&self) -> &[f64] {
        self.snapshots.last().map(|v| v.as_slice()).unwrap_or(&[])
    }

    /// Checks obstacle dominance and time monotonicity across snapshots.
    pub fn check_invariants(&self) -> Result<()> {
        let tol = 1e-12 * self.grid.p0;
        for (s, (u, g)) in self.snapshots.iter().zip(&self.obstacle_snapshots).enumerate() {
            if let Some(i) = (0..u.len()).find(|&i| u[i] < g[i] - tol) {
                return Err(Error::NumericAtStep { step: self.snapshot_steps[s], message: format!("value below obstacle at node {i}") });
            }
        }
        for s in 1..self.snapshots.len() {
            let (a, b) = (&self.snapshots[s - 1], &self.snapshots[s]);
            let bad = match self.kind {
                BarrierKind::Root => (0..a.len()).find(|&i| b[i] > a[i] + tol),
                BarrierKind::Rost => (0..a.len()).find(|&i| b[i] < a[i] - tol),
            };
            if let Some(i) = bad {
                return Err(Error::NumericAtStep { step: self.snapshot_steps[s], message: format!("time monotonicity fails at node {i}") });
            }
        }
        Ok(())
    }
}

/// Single-marginal Root problem: `u(0) = U_λ`, obstacle `U_μ`.
pub fn solve_root(grid: &Grid, u_lambda: &[f64], u_mu: &[f64], cfg: &SolverConfig) -> Result<ValueFunction> {
    Ok(solve_levels(BarrierKind::Root, grid, u_lambda, &[u_mu], cfg)?.remove(0))
}

/// Single-marginal Rost problem: `v(0) = U_μ − U_λ`, which is also the obstacle.
pub fn solve_rost(grid: &Grid, u_lambda: &[f64], u_mu: &[f64], cfg: &SolverConfig) -> Result<ValueFunction> {
    Ok(solve_levels(BarrierKind::Rost, grid, u_lambda, &[u_mu], cfg)?.remove(0))
}

/// Multi-marginal problem for a convex-ordered sequence of potentials.
///
/// Level `k` uses the obstacle `w_{k−1}(t) − (U_{μ_{k−1}} − U_{μ_k})` with
/// `w_0 ≡ U_λ` (Root) or `w_0 ≡ 0` (Rost), so all levels advance together in
/// time. With one potential this is exactly the single-marginal solve.
pub fn solve_sequence(
    kind: BarrierKind,
    grid: &Grid,
    initial: &PotentialCurve,
    potentials: &[PotentialCurve],
    cfg: &SolverConfig,
) -> Result<Vec<ValueFunction>> {
    let report = check_convex_order(grid.p0, Some(initial), potentials)?;
    if !report.ordered {
        let worst = report.pairs.iter().find(|p| !p.ordered).unwrap();
        return Err(Error::ConvexOrder(format!(
            "potentials at T={} and T={} are not in convex order (excess {} at x={})",
            worst.earlier, worst.later, worst.max_excess, worst.argmax_x
        )));
    }
    let mus: Vec<&[f64]> = potentials.iter().map(|p| p.values.as_slice()).collect();
    solve_levels(kind, grid, &initial.values, &mus, cfg)
}

fn check_len(grid: &Grid, v: &[f64], what: &str) -> Result<()> {
    if v.len() != grid.nx {
        return Err(Error::Usage(format!("{what} has {} values for {} grid nodes", v.len(), grid.nx)));
    }
    Ok(())
}

/// Nodes settling less mass than this keep their contact time.
pub const SETTLED_MASS: f64 = 1e-12;

/// Point masses of the lattice law whose potential is `pot`: half the slope
/// drop at each node, with slopes `±1` assumed beyond the two ends.
/// `inv_h[i]` is `1/(x[i+1] − x[i])`.
fn lattice_law(inv_h: &[f64], pot: impl Fn(usize) -> f64, out: &mut [f64]) {
    let n = out.len();
    let mut left = 1.0;
    for i in 0..n {
        let right = if i + 1 < n { (pot(i + 1) - pot(i)) * inv_h[i] } else { -1.0 };
        out[i] = 0.5 * (left - right);
        left = right;
    }
}

/// Updates the settled mass of level `k` at time `t` from its current values.
#[allow(clippy::too_many_arguments)]
fn settle(
    kind: BarrierKind,
    k: usize,
    t: f64,
    dt: f64,
    values: &[f64],
    target: &[f64],
    contact: &[f64],
    inv_h: &[f64],
    law: &mut [Vec<f64>],
    stopped: &mut [Vec<f64>],
    weighted: &mut [f64],
) {
    let (prev_law, rest_law) = law.split_at_mut(k);
    let lk = &mut rest_law[0];
    match kind {
        BarrierKind::Root => lattice_law(inv_h, |i| values[i], lk),
        BarrierKind::Rost => lattice_law(inv_h, |i| target[i] - values[i], lk),
    }
    let (prev_stopped, rest_stopped) = stopped.split_at_mut(k);
    let sk = &mut rest_stopped[0];
    for i in 0..lk.len() {
        // Root regions only grow; a Rost node stops mass while in contact
        let active = match kind {
            BarrierKind::Root => contact[i] <= t,
            BarrierKind::Rost => contact[i] == t,
        };
        if active {
            let moving = if k == 0 { 0.0 } else { prev_law[k - 1][i] - prev_stopped[k - 1][i] };
            let m = lk[i] - moving;
            // mass caught by a node's first contact stops at the interpolated contact time
            let stamp = if contact[i] > t - dt { contact[i] } else { t };
            weighted[i] += stamp * (m - sk[i]);
            sk[i] = m;
        }
    }
}

fn solve_levels(kind: BarrierKind, grid: &Grid, u_lambda: &[f64], mus: &[&[f64]], cfg: &SolverConfig) -> Result<Vec<ValueFunction>> {
    let extended;
    let grid = match kind {
        BarrierKind::Root => grid,
        BarrierKind::Rost => {
            if !(cfg.rost_horizon_factor >= 1.0) || !cfg.rost_horizon_factor.is_finite() {
                return Err(Error::Config(format!("Rost horizon factor must be at least 1, got {}", cfg.rost_horizon_factor)));
            }
            let nt = (grid.nt as f64 * cfg.rost_horizon_factor).round() as usize;
            extended = Grid { nt, t_max: nt as f64 * grid.dt, ..grid.clone() };
            &extended
        }
    };
    let nx = grid.nx;
    let p0 = grid.p0;
    check_len(grid, u_lambda, "initial potential")?;
    for m in mus {
        check_len(grid, m, "target potential")?;
    }
    if mus.is_empty() {
        return Err(Error::Usage("no target potentials".into()));
    }
    let (ap, am) = cfg.stencil.weights(grid.dx);
    if !(grid.dt * (ap + am) <= 1.0) || ap < 0.0 {
        return Err(Error::Config(format!("time step {} violates the stability bound for dx {}", grid.dt, grid.dx)));
    }
    let (cp, cm) = (grid.dt * ap, grid.dt * am);
    let snap = 1e-30 * p0;
    let tol = match kind {
        BarrierKind::Root => cfg.contact_tol,
        BarrierKind::Rost => cfg.rost_contact_tol,
    } * p0;
    let levels = mus.len();

    // Clip each target below its predecessor so every obstacle stays under its start data.
    let mut warnings: Vec<Vec<String>> = vec![Vec::new(); levels];
    let mut clipped: Vec<Vec<f64>> = Vec::with_capacity(levels);
    for (k, m) in mus.iter().enumerate() {
        let prev = if k == 0 { u_lambda } else { clipped[k - 1].as_slice() };
        let mut worst = 0.0f64;
        let mut worst_i = 0;
        let c: Vec<f64> = (0..nx)
            .map(|i| {
                if m[i] - prev[i] > worst {
                    worst = m[i] - prev[i];
                    worst_i = i;
                }
                m[i].min(prev[i])
            })
            .collect();
        if worst > cfg.clip_tol * p0 {
            warnings[k].push(format!("obstacle exceeded start data by {worst} at x={}; clipped", grid.x[worst_i]));
        }
        clipped.push(c);
    }
    let delta: Vec<Vec<f64>> = (0..levels)
        .map(|k| {
            let prev = if k == 0 { u_lambda } else { clipped[k - 1].as_slice() };
            (0..nx).map(|i| prev[i] - clipped[k][i]).collect()
        })
        .collect();

    // Start data and time-0 obstacles.
    let mut cur: Vec<Vec<f64>> = (0..levels)
        .map(|k| match kind {
            BarrierKind::Root => u_lambda.to_vec(),
            BarrierKind::Rost => (0..nx).map(|i| clipped[k][i] - u_lambda[i]).collect(),
        })
        .collect();
    // Level 0 has a fixed obstacle; deeper levels follow the level above.
    let g0: Vec<f64> = match kind {
        BarrierKind::Root => clipped[0].clone(),
        BarrierKind::Rost => cur[0].clone(),
    };
    let mut obs: Vec<Vec<f64>> = Vec::with_capacity(levels);
    for k in 0..levels {
        if k == 0 {
            obs.push(g0.clone());
        } else {
            obs.push((0..nx).map(|i| cur[k - 1][i] - delta[k][i]).collect());
        }
    }

    let mut contact = vec![vec![f64::INFINITY; nx]; levels];
    for k in 0..levels {
        for i in 0..nx {
            // Rost start data sit on the obstacle everywhere
            if kind == BarrierKind::Rost || cur[k][i] - obs[k][i] <= tol {
                contact[k][i] = 0.0;
            }
        }
    }

    // Settling-time accounting: mass of the stopped lattice law per node and
    // its time-weighted sum. Level k stops, at a node in its stopping
    // region, all mass there except what level k−1 still holds in motion.
    let inv_h: Vec<f64> = grid.x.windows(2).map(|w| 1.0 / (w[1] - w[0])).collect();
    let mut stopped = vec![vec![0.0; nx]; levels];
    let mut weighted = vec![vec![0.0; nx]; levels];
    let mut law = vec![vec![0.0; nx]; levels];
    if kind == BarrierKind::Root {
        for k in 0..levels {
            settle(kind, k, 0.0, grid.dt, &cur[k], &clipped[k], &contact[k], &inv_h, &mut law, &mut stopped, &mut weighted[k]);
        }
    }
    let stride = (grid.nt / cfg.snapshots.max(1)).max(1);
    let mut snap_steps = vec![0usize];
    let mut snaps: Vec<Vec<Vec<f64>>> = cur.iter().map(|c| vec![c.clone()]).collect();
    let mut obs_snaps: Vec<Vec<Vec<f64>>> = obs.iter().map(|o| vec![o.clone()]).collect();

    let mut next = vec![vec![0.0; nx]; levels];
    let mut gprev = vec![0.0; nx];
    let mut raw = vec![0.0; nx];
    for n in 1..=grid.nt {
        let t = grid.time(n);
        for k in 0..levels {
            let (done, rest) = next.split_at_mut(k);
            let nk = &mut rest[0];
            let u = &cur[k];
            let ok = &mut obs[k];
            if kind == BarrierKind::Root {
                for i in 0..nx {
                    gprev[i] = u[i] - ok[i];
                }
            }
            if k > 0 {
                for i in 0..nx {
                    ok[i] = done[k - 1][i] - delta[k][i];
                }
            }
            nk[0] = ok[0];
            nk[nx - 1] = ok[nx - 1];
            raw[0] = ok[0];
            raw[nx - 1] = ok[nx - 1];
            let mut sum = 0.0;
            for i in 1..nx - 1 {
                let d = u[i] + cp * (u[i + 1] - u[i]) + cm * (u[i - 1] - u[i]);
                sum += d;
                raw[i] = d;
                // gaps this small only decay toward subnormals
                nk[i] = if d - ok[i] > snap { d } else { ok[i] };
            }
            if !sum.is_finite() {
                let i = (1..nx - 1).find(|&i| !(u[i] + cp * (u[i + 1] - u[i]) + cm * (u[i - 1] - u[i])).is_finite()).unwrap_or(1);
                return Err(Error::NumericAtStep { step: n, message: format!("non-finite value at node {i}, level {k}") });
            }
            let ck = &mut contact[k];
            match kind {
                BarrierKind::Root => {
                    for i in 0..nx {
                        if ck[i] == f64::INFINITY && nk[i] - ok[i] <= tol {
                            // linear in time between the last open gap and the overshoot
                            let (g0, g1) = (gprev[i] - tol, raw[i] - ok[i] - tol);
                            let f = if g0 > 0.0 && g0 > g1 { (g0 / (g0 - g1)).min(1.0) } else { 1.0 };
                            ck[i] = t - grid.dt * (1.0 - f);
                        }
                    }
                }
                BarrierKind::Rost => {
                    for i in 0..nx {
                        if nk[i] - ok[i] <= tol {
                            ck[i] = t;
                        }
                    }
                }
            }
            settle(kind, k, t, grid.dt, nk, &clipped[k], ck, &inv_h, &mut law, &mut stopped, &mut weighted[k]);
        }
        core::mem::swap(&mut cur, &mut next);
        if n % stride == 0 || n == grid.nt {
            snap_steps.push(n);
            for k in 0..levels {
                snaps[k].push(cur[k].clone());
                obs_snaps[k].push(obs[k].clone());
            }
        }
    }

    let out = snaps
        .into_iter()
        .zip(obs_snaps)
        .zip(contact)
        .zip(warnings)
        .zip(stopped.iter().zip(&weighted))
        .enumerate()
        .map(|(k, ((((s, o), c), w), (st, wt)))| ValueFunction {
            settling_times: (0..nx).map(|i| if st[i] > SETTLED_MASS { wt[i] / st[i] } else { c[i] }).collect(),
            settled_mass: st.clone(),
            kind,
            index: k,
            grid: grid.clone(),
            snapshot_steps: snap_steps.clone(),
            snapshots: s,
            obstacle_snapshots: o,
            contact_times: c,
            contact_tol: tol,
            warnings: w,
        })
        .collect();
    Ok(out)
}

/// Barrier function sampled on the grid.
///
/// Root times are first-contact times (`+∞` where contact never happens
/// before the horizon); Rost times are last-contact times (`0` when contact
/// is lost immediately).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Barrier {
    pub kind: BarrierKind,
    pub maturity_index: usize,
    pub maturity: f64,
    pub x_grid: Vec<f64>,
    pub times: Vec<f64>,
    pub mask: Vec<bool>,
}

impl Barrier {
    /// Linear interpolation in price; `+∞` next to a sentinel node, and
    /// the end values outside the grid.
    pub fn time_at(&self, x: f64) -> f64 {
        let xs = &self.x_grid;
        let n = xs.len();
        if x <= xs[0] {
            return self.times[0];
        }
        if x >= xs[n - 1] {
            return self.times[n - 1];
        }
        let j = xs.partition_point(|&v| v <= x) - 1;
        let (a, b) = (self.times[j], self.times[j + 1]);
        if a.is_infinite() || b.is_infinite() {
            return f64::INFINITY;
        }
        let w = (x - xs[j]) / (xs[j + 1] - xs[j]);
        a + w * (b - a)
    }
}

/// How barrier times are read off a solved level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeEstimate {
    /// Mean stopping time of the lattice mass settling at each node.
    #[default]
    Settling,
    /// First (Root) or last (Rost) step in contact with the obstacle.
    Contact,
}

/// Barrier from settling times; see [`extract_barrier_with`].
pub fn extract_barrier(vf: &ValueFunction, maturity: f64, mask: Vec<bool>) -> Result<Barrier> {
    extract_barrier_with(vf, maturity, mask, TimeEstimate::Settling)
}

/// Packages barrier times of a solved level with a confidence mask.
///
/// Contact times lag the barrier by a fraction of a cell wherever lattice
/// paths enter the stopping region sideways, which biases integrals of the
/// barrier by `O(dx)`. Settling times average the actual stopping times of
/// the lattice walk and so keep `Σ m_i·times_i` equal to its mean stopping
/// time.
pub fn extract_barrier_with(vf: &ValueFunction, maturity: f64, mask: Vec<bool>, estimate: TimeEstimate) -> Result<Barrier> {
    if mask.len() != vf.grid.nx {
        return Err(Error::Usage("mask length differs from grid".into()));
    }
    let times = match estimate {
        TimeEstimate::Settling => vf.settling_times.clone(),
        TimeEstimate::Contact => vf.contact_times.clone(),
    };
    Ok(Barrier { kind: vf.kind, maturity_index: vf.index, maturity, x_grid: vf.grid.x.clone(), times, mask })
}

/// Nodes where the target potential is at least `epsilon·P₀` away from the
/// initial tent and inside the tail-correction knees. The node at `P₀`
/// itself is never confident.
pub fn confident_mask(target: &PotentialCurve, initial: &PotentialCurve, p0: f64, epsilon: f64) -> Vec<bool> {
    target
        .x_grid
        .iter()
        .zip(target.values.iter().zip(&initial.values))
        .map(|(&x, (&u, &l))| x != p0 && (u - l).abs() / p0 >= epsilon && target.inside_knees(x))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::initial_potential;

    fn grid(nx: usize, t_max: f64) -> Grid {
        build_grid(100.0, &GridConfig { nx, half_width: 1.0, t_max, stability_factor: 0.9 }).unwrap()
    }

    #[test]
    fn grid_arithmetic() {
        let g = grid(401, 0.25);
        assert!((g.dx - 0.005).abs() < 1e-15);
        assert!(g.dt <= 0.9 * 0.005 * 0.005 / (1.0 + 0.0025));
        assert_eq!(g.time(g.nt), 0.25);
        assert!((g.nt as f64 * g.dt - 0.25).abs() < 1e-12);
        assert_eq!(g.x[200], 100.0);
        assert!(build_grid(100.0, &GridConfig { nx: 199, half_width: 1.0, t_max: 1.0, stability_factor: 0.9 }).is_err());
        assert!(build_grid(100.0, &GridConfig { nx: 401, half_width: 1.0, t_max: 0.0, stability_factor: 0.9 }).is_err());
    }

    #[test]
    fn fitted_stencil_annihilates_linear_prices() {
        for st in [Stencil::Fitted, Stencil::Central] {
            let dx = 0.01;
            let (ap, am) = st.weights(dx);
            assert!((ap + am - 1.0 / (dx * dx)).abs() < 1e-6);
            let r = ap * (dx.exp() - 1.0) + am * ((-dx).exp() - 1.0);
            if st == Stencil::Fitted {
                assert!(r.abs() < 1e-9);
            } else {
                // central differences leave an O(dx²) residual
                assert!(r.abs() > 1e-3 * dx * dx);
            }
        }
    }

    #[test]
    fn target_equal_to_start_stops_immediately() {
        let g = grid(201, 0.05);
        let lam = initial_potential(100.0, &g.x);
        let cfg = SolverConfig::default();
        let root = solve_root(&g, &lam.values, &lam.values, &cfg).unwrap();
        assert!(root.contact_times.iter().all(|&t| t == 0.0));
        for s in &root.snapshots {
            for (a, b) in s.iter().zip(&lam.values) {
                assert!((a - b).abs() < 1e-12 * 100.0);
            }
        }
        root.check_invariants().unwrap();
        let rost = solve_rost(&g, &lam.values, &lam.values, &cfg).unwrap();
        assert!(rost.final_values().iter().all(|&v| v == 0.0));
        assert_eq!(rost.grid.nt, 16 * g.nt);
        assert!(rost.contact_times.iter().all(|&t| t == rost.grid.t_max));
    }

    #[test]
    fn settling_times_fall_back_to_contact_without_mass() {
        let g = grid(201, 0.05);
        let lam = initial_potential(100.0, &g.x);
        let mut vf = solve_root(&g, &lam.values, &lam.values, &SolverConfig::default()).unwrap();
        // everything settles at the start node at time zero
        assert!((vf.settled_mass[100] - 1.0).abs() < 1e-12);
        assert!(vf.settled_mass.iter().enumerate().all(|(i, &m)| i == 100 || m.abs() < SETTLED_MASS));
        for (s, c) in vf.settling_times.iter().zip(&vf.contact_times) {
            assert!((s - c).abs() < 1e-12, "{s} vs {c}");
        }
        vf.contact_times[7] = 3.0;
        let b = extract_barrier_with(&vf, 1.0, vec![true; g.nx], TimeEstimate::Contact).unwrap();
        assert_eq!(b.times[7], 3.0);
        assert_eq!(extract_barrier(&vf, 1.0, vec![true; g.nx]).unwrap().times[7], 0.0);
    }

    #[test]
    fn mismatched_lengths_and_bad_steps_are_refused() {
        let g = grid(201, 0.05);
        let lam = initial_potential(100.0, &g.x);
        assert!(solve_root(&g, &lam.values, &lam.values[1..], &SolverConfig::default()).is_err());
        let mut bad = g.clone();
        bad.dt *= 2.0;
        assert!(solve_root(&bad, &lam.values, &lam.values, &SolverConfig::default()).is_err());
    }

    #[test]
    fn nan_is_reported_with_step() {
        let g = grid(201, 0.05);
        let lam = initial_potential(100.0, &g.x);
        let mut mu = lam.values.clone();
        mu[0] = -1e300;
        let mut start = lam.values.clone();
        start[100] = f64::NAN;
        match solve_root(&g, &start, &mu, &SolverConfig::default()) {
            Err(Error::NumericAtStep { step, .. }) => assert_eq!(step, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn time_interpolation_and_sentinels() {
        let b = Barrier {
            kind: BarrierKind::Root,
            maturity_index: 0,
            maturity: 1.0,
            x_grid: vec![1.0, 2.0, 3.0],
            times: vec![0.0, 1.0, f64::INFINITY],
            mask: vec![true; 3],
        };
        assert_eq!(b.time_at(1.5), 0.5);
        assert_eq!(b.time_at(2.5), f64::INFINITY);
        assert_eq!(b.time_at(0.5), 0.0);
    }
}
