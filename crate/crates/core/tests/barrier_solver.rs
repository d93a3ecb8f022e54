//! Root and Rost solves on Black-Scholes marginals, where the Root barrier is
//! the constant `σ²T` and both embeddings have mean stopping time
//! `−2E log(P_T/P₀) = σ²T`.

use varbound_core::barrier::*;
use varbound_core::models::{tail_correct, BsParams, ModelParams};
use varbound_core::potentials::*;
use varbound_core::pricing::{expected_payoff, measure_from_potential, Payoff};

const P0: f64 = 2833.0;
const SIGMA: f64 = 0.153;
const R: f64 = 0.0265;
const Q: f64 = 0.0185;

fn setup(t_last: f64, nx: usize) -> (Grid, PotentialCurve) {
    let g = build_grid(P0, &GridConfig::for_surface(SIGMA, t_last, nx)).unwrap();
    let init = initial_potential(P0, &g.x);
    (g, init)
}

fn potential(g: &Grid, t: f64) -> PotentialCurve {
    let model = ModelParams::Bs(BsParams { vol: SIGMA });
    let c = model.call_curve(P0, covering_strikes(&g.x, t, R, Q), t, R, Q).unwrap();
    potential_from_calls(&forward_call_curve(&tail_correct(&c).unwrap(), R, Q).unwrap(), &g.x).unwrap()
}

fn masked_times(b: &Barrier) -> Vec<f64> {
    (0..b.times.len()).filter(|&i| b.mask[i] && b.times[i].is_finite()).map(|i| b.times[i]).collect()
}

#[test]
fn root_barrier_is_constant_at_total_variance() {
    let t = 2.75;
    let (g, init) = setup(t, 401);
    let pot = potential(&g, t);
    let vf = solve_root(&g, &init.values, &pot.values, &SolverConfig::default()).unwrap();
    vf.check_invariants().unwrap();
    let b = extract_barrier(&vf, t, confident_mask(&pot, &init, P0, 0.01)).unwrap();
    let times = masked_times(&b);
    assert!(times.len() > 100, "{} confident nodes", times.len());
    let tol = (2.0 * g.dt).max(2.0 * g.dx);
    for &r in &times {
        assert!((r - SIGMA * SIGMA * t).abs() <= tol, "R = {r}, σ²T = {}", SIGMA * SIGMA * t);
    }
    let m = measure_from_potential(&pot, P0).unwrap();
    let lc = m.log_contract(P0);
    assert!((lc / (SIGMA * SIGMA * t) - 1.0).abs() < 1e-3, "lattice log contract {lc}");
    let e = expected_payoff(&b, &m, &Payoff::Swap, 0.0).unwrap().0;
    assert!((e / lc - 1.0).abs() <= 0.01, "∫R dμ = {e}, log contract {lc}");
}

#[test]
fn rost_embedding_completes_and_has_the_same_mean() {
    let t = 1.0;
    let (g, init) = setup(t, 401);
    assert!(g.t_max >= 8.0 * SIGMA * SIGMA * t);
    let pot = potential(&g, t);
    let vf = solve_rost(&g, &init.values, &pot.values, &SolverConfig::default()).unwrap();
    vf.check_invariants().unwrap();
    let interior = g.nx / 4..3 * g.nx / 4;
    let worst = vf.final_values()[interior].iter().map(|v| v.abs()).fold(0.0, f64::max);
    assert!(worst <= 1e-3 * P0, "v(t_max) up to {worst}");
    let b = extract_barrier(&vf, t, confident_mask(&pot, &init, P0, 0.01)).unwrap();
    let m = measure_from_potential(&pot, P0).unwrap();
    let e = expected_payoff(&b, &m, &Payoff::Swap, 0.0).unwrap().0;
    assert!((e / m.log_contract(P0) - 1.0).abs() <= 0.01, "∫R̄ dμ = {e}");
    // inverse barrier: stopping far from P₀ happens late
    let centre = g.nx / 2;
    assert!(b.times[centre + 60] > b.times[centre + 10] && b.times[centre - 60] > b.times[centre - 10]);
}

#[test]
fn one_level_sequence_is_the_single_solver_bit_for_bit() {
    let t = 0.25;
    let (g, init) = setup(t, 201);
    let pot = potential(&g, t);
    let cfg = SolverConfig::default();
    let root = solve_root(&g, &init.values, &pot.values, &cfg).unwrap();
    let rost = solve_rost(&g, &init.values, &pot.values, &cfg).unwrap();
    let seq_root = solve_sequence(BarrierKind::Root, &g, &init, std::slice::from_ref(&pot), &cfg).unwrap();
    let seq_rost = solve_sequence(BarrierKind::Rost, &g, &init, std::slice::from_ref(&pot), &cfg).unwrap();
    assert_eq!(seq_root, vec![root]);
    assert_eq!(seq_rost, vec![rost]);
}

#[test]
fn multi_marginal_root_barriers_step_up_with_maturity() {
    let ts = [0.5, 1.0, 2.75];
    let (g, init) = setup(2.75, 401);
    let pots: Vec<PotentialCurve> = ts.iter().map(|&t| potential(&g, t)).collect();
    let cfg = SolverConfig::default();
    let multi = solve_sequence(BarrierKind::Root, &g, &init, &pots, &cfg).unwrap();
    let tol = (2.0 * g.dt).max(2.0 * g.dx);
    let mut prev = 0.0;
    for (k, vf) in multi.iter().enumerate() {
        let mask = confident_mask(&pots[k], &init, P0, 0.01);
        let b = extract_barrier(vf, ts[k], mask.clone()).unwrap();
        let times = masked_times(&b);
        let mean = times.iter().sum::<f64>() / times.len() as f64;
        assert!((mean - SIGMA * SIGMA * ts[k]).abs() <= tol);
        assert!(mean > prev);
        prev = mean;
        let single = solve_root(&g, &init.values, &pots[k].values, &cfg).unwrap();
        let bs = extract_barrier(&single, ts[k], mask).unwrap();
        assert!(varbound_core::mc_verify::compare_barrier_sets(&b, &bs).unwrap() <= 2.0 * g.dx);
    }
}

#[test]
fn contact_beyond_the_horizon_leaves_root_sentinels() {
    let t = 1.0;
    let mut gc = GridConfig::for_surface(SIGMA, t, 201);
    // stop the clock well before σ²T
    gc.t_max = 0.5 * SIGMA * SIGMA * t;
    let g = build_grid(P0, &gc).unwrap();
    let init = initial_potential(P0, &g.x);
    let pot = potential(&g, t);
    let vf = solve_root(&g, &init.values, &pot.values, &SolverConfig::default()).unwrap();
    let b = extract_barrier_with(&vf, t, confident_mask(&pot, &init, P0, 0.01), TimeEstimate::Contact).unwrap();
    let centre = g.nx / 2;
    assert!(b.times[centre + 20].is_infinite() && b.times[centre - 20].is_infinite());
}

#[test]
fn swapped_maturities_are_refused_before_solving() {
    let (g, init) = setup(1.0, 201);
    let pots = vec![potential(&g, 1.0), potential(&g, 0.5)];
    let err = solve_sequence(BarrierKind::Root, &g, &init, &pots, &SolverConfig::default()).unwrap_err();
    assert!(matches!(err, varbound_core::Error::ConvexOrder(_)), "{err}");
}
