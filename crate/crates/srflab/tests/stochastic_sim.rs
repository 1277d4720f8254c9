//! Sampling oracles: transition frequencies against closed forms, marginal
//! laws against the dual flow, coupling composition identities, and the
//! contraction / moment statistics.

use srflab::flows::{static_flat_grid, static_weighted_grid, homothetic};
use srflab::heat::dual_propagate;
use srflab::space::Measure;
use srflab::stochastic::*;
use srflab::transport::TransportPlan;

#[test]
fn two_point_transition_frequency_matches_matrix_exponential() {
    // one transition of duration 1 started at vertex 0: the exact
    // probability of ending at vertex 1 is (1 - e^{-2})/2
    let space = static_flat_grid::<f64>(0.5, 2)
        .unwrap()
        .with_horizon((0.0, 2.0))
        .unwrap();
    let terminal = Measure::dirac(2, 0);
    let n_paths = 100_000;
    let ens = sample_backward_bm(&space, &terminal, &[1.5, 0.5], n_paths, 4096, 2718).unwrap();
    let mut hits = 0usize;
    for p in 0..n_paths {
        if ens.vertex(p, 1) == 1 {
            hits += 1;
        }
    }
    let freq = hits as f64 / n_paths as f64;
    let exact = (1.0 - (-2.0f64).exp()) / 2.0;
    let sigma = (exact * (1.0 - exact) / n_paths as f64).sqrt();
    assert!(
        (freq - exact).abs() < 3.0 * sigma + 1e-3,
        "freq {freq} vs exact {exact} (sigma {sigma})"
    );
}

#[test]
fn marginal_law_matches_dual_flow_on_small_space() {
    let space = static_weighted_grid::<f64>(2.0, 20, |x| 0.5 * x * x).unwrap();
    let m = space.measure_at(0.5).unwrap();
    let terminal = Measure::probability(m.masses).unwrap();
    let times = [0.5, 0.4375, 0.375, 0.3125, 0.25];
    let n_paths = 10_000;
    let ens = sample_backward_bm(&space, &terminal, &times, n_paths, 8, 314).unwrap();
    let law = ens.empirical_law(times.len() - 1, 0, 20);
    let exact = dual_propagate(&space, &terminal, 0.5, 0.25, 32).unwrap();
    let tv = total_variation(&law, &exact.masses);
    let bound = 3.0 * (20.0f64 / n_paths as f64).sqrt();
    assert!(tv < bound, "TV {tv} vs bound {bound}");
}

#[test]
fn coupled_component_marginal_matches_single_sampler() {
    let space = static_flat_grid::<f64>(2.0, 21).unwrap();
    let times = [0.5, 0.4375, 0.375, 0.3125];
    let n_paths = 10_000;
    let (x, y) = (6usize, 14usize);
    let coupled =
        sample_coupled_bm(&space, x, y, &times, n_paths, CouplingMode::WinfOptimal, 8, 55)
            .unwrap();
    let single =
        sample_backward_bm(&space, &Measure::dirac(21, x), &times, n_paths, 8, 56).unwrap();
    let law_coupled = coupled.empirical_law(times.len() - 1, 0, 21);
    let law_single = single.empirical_law(times.len() - 1, 0, 21);
    let bound = 3.0 * (21.0f64 / n_paths as f64).sqrt();
    let tv = total_variation(&law_coupled, &law_single);
    assert!(tv < bound, "component TV {tv} vs bound {bound}");

    // and against the exact dual flow
    let exact = dual_propagate(&space, &Measure::dirac(21, x), 0.5, 0.3125, 32).unwrap();
    let tv = total_variation(&law_coupled, &exact.masses);
    assert!(tv < bound, "component-vs-exact TV {tv}");
}

/// Composes two pair-distribution plans through the coupling kernels of the
/// second leg; the independent route for the composition identity.
fn compose_via_pairs(
    space: &srflab::space::DynamicSpace<f64>,
    first: &TransportPlan<f64>,
    level: u32,
    mid: f64,
    lo: f64,
    steps: usize,
) -> Vec<f64> {
    let n = space.len();
    let mut out = vec![0.0f64; n * n];
    for &(a, b, mass) in &first.entries {
        let second = dyadic_coupling_step(
            space,
            level,
            mid,
            lo,
            a,
            b,
            CouplingMode::WinfOptimal,
            steps,
        )
        .unwrap();
        for &(i, j, m) in &second.entries {
            out[i * n + j] += mass * m;
        }
    }
    out
}

#[test]
fn dyadic_composition_identity_on_five_point_space() {
    // q_{r,s'} ∘ q_{s,r} = q_{s,s'} on a level-4 grid over four intervals
    let space = static_flat_grid::<f64>(1.0, 5).unwrap();
    let level = 4u32;
    let (s_hi, mid, s_lo) = (0.5, 0.375, 0.25);
    let (x, y) = (1usize, 3usize);
    let direct = dyadic_coupling_step(
        &space,
        level,
        s_hi,
        s_lo,
        x,
        y,
        CouplingMode::WinfOptimal,
        4,
    )
    .unwrap();
    let first = dyadic_coupling_step(
        &space,
        level,
        s_hi,
        mid,
        x,
        y,
        CouplingMode::WinfOptimal,
        4,
    )
    .unwrap();
    let composed = compose_via_pairs(&space, &first, level, mid, s_lo, 4);
    let direct_dense = direct.to_dense();
    let worst = composed
        .iter()
        .zip(&direct_dense)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    assert!(worst < 1e-10, "composition mismatch {worst}");
}

#[test]
fn dyadic_marginals_telescope_to_heat_kernel() {
    let space = static_weighted_grid::<f64>(1.0, 9, |x| 0.3 * x).unwrap();
    let level = 4u32;
    let (s_hi, s_lo) = (0.5, 0.25); // four level-4 intervals
    let (x, y) = (2usize, 6usize);
    let plan = dyadic_coupling_step(
        &space,
        level,
        s_hi,
        s_lo,
        x,
        y,
        CouplingMode::WinfOptimal,
        8,
    )
    .unwrap();
    // row/col marginals of the plan are set to the full-interval propagator
    // rows, so the audit measures the telescoping deviation directly
    let n = space.len();
    let mut rows = vec![0.0f64; n];
    let mut cols = vec![0.0f64; n];
    for &(i, j, m) in &plan.entries {
        rows[i] += m;
        cols[j] += m;
    }
    let row_dev = rows
        .iter()
        .zip(&plan.row_marginal)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    let col_dev = cols
        .iter()
        .zip(&plan.col_marginal)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    assert!(row_dev < 1e-8, "row marginal telescoping {row_dev}");
    assert!(col_dev < 1e-8, "col marginal telescoping {col_dev}");
}

#[test]
fn independent_coupling_violates_where_winf_does_not() {
    // flat static grid: the control experiment separating coupled from
    // independent transitions
    let space = static_flat_grid::<f64>(2.0, 41).unwrap();
    let times: Vec<f64> = (0..=8).map(|k| 0.5 - k as f64 / 64.0).collect();
    let (x, y) = (15usize, 25usize);
    let winf =
        sample_coupled_bm(&space, x, y, &times, 4000, CouplingMode::WinfOptimal, 8, 77).unwrap();
    let indep =
        sample_coupled_bm(&space, x, y, &times, 4000, CouplingMode::Independent, 8, 77).unwrap();
    // flat space holds the pathwise bound with equality in the continuum,
    // so the discrete comparison needs the 2Δx re-binning allowance
    let allowance = 2.0 * space.grid_spacing().unwrap();
    let s_w = contraction_stats(&winf, &space, allowance).unwrap();
    let s_i = contraction_stats(&indep, &space, allowance).unwrap();
    assert!(
        s_i.any_violation_fraction > 0.2,
        "independent control should wander: {}",
        s_i.any_violation_fraction
    );
    assert!(
        s_w.any_violation_fraction <= 0.01,
        "winf coupling should contract: {}",
        s_w.any_violation_fraction
    );
    assert!(s_i.any_violation_fraction > 10.0 * s_w.any_violation_fraction.max(1e-4));
}

#[test]
fn winf_coupled_paths_contract_on_homothetic_flow() {
    let base = static_weighted_grid::<f64>(4.0, 100, |x| x * x).unwrap();
    let space = homothetic(&base, 1.5).unwrap();
    let t: f64 = 17.0 / 64.0;
    let kmax = ((t - 1.0 / 64.0) * 64.0).round() as usize;
    let times: Vec<f64> = (0..=kmax).map(|k| t - k as f64 / 64.0).collect();
    let pos = space.positions().unwrap();
    let x = (0..100)
        .min_by(|&a, &b| (pos[a] + 1.0).abs().total_cmp(&(pos[b] + 1.0).abs()))
        .unwrap();
    let y = (0..100)
        .min_by(|&a, &b| (pos[a] - 1.0).abs().total_cmp(&(pos[b] - 1.0).abs()))
        .unwrap();
    let dx = space.grid_spacing().unwrap();
    let ens =
        sample_coupled_bm(&space, x, y, &times, 4000, CouplingMode::WinfOptimal, 8, 1234)
            .unwrap();
    let stats = contraction_stats(&ens, &space, 2.0 * dx).unwrap();
    assert!(
        stats.any_violation_fraction <= 0.01,
        "violation fraction {}",
        stats.any_violation_fraction
    );
}

#[test]
fn kolmogorov_scaling_flat_grid_p2() {
    let space = static_flat_grid::<f64>(4.0, 201).unwrap();
    let t = 0.5;
    let mut times = vec![t];
    for g in [1.0 / 128.0, 1.0 / 64.0, 1.0 / 32.0, 1.0 / 16.0, 1.0 / 8.0] {
        times.push(times.last().unwrap() - g);
    }
    let ens =
        sample_backward_bm(&space, &Measure::dirac(201, 100), &times, 10_000, 8, 4242).unwrap();
    let rep = kolmogorov_scaling(&ens, &space, 2.0).unwrap();
    let slope = rep.slope.unwrap();
    assert!((slope - 1.0).abs() < 0.15, "p=2 slope {slope}");
}

#[test]
fn kolmogorov_scaling_degenerate_for_frozen_paths() {
    // zero-temperature control: paths frozen at one vertex have no
    // increments, so the fit is reported as degenerate
    let space = static_flat_grid::<f64>(1.0, 9).unwrap();
    let times: Vec<f64> = vec![
        0.5,
        0.5 - 1.0 / 128.0,
        0.5 - 1.0 / 128.0 - 1.0 / 64.0,
        0.5 - 1.0 / 128.0 - 1.0 / 64.0 - 1.0 / 32.0,
        0.5 - 1.0 / 128.0 - 1.0 / 64.0 - 1.0 / 32.0 - 1.0 / 16.0,
    ];
    let frozen = PathEnsemble::<f64> {
        times: times.clone(),
        paths: vec![4u32; 50 * times.len()],
        n_paths: 50,
        coupled: false,
        seed: 0,
        kernel_steps: 0,
    };
    let rep = kolmogorov_scaling(&frozen, &space, 2.0).unwrap();
    assert!(rep.degenerate);
    assert!(rep.slope.is_none());
}

#[test]
fn too_few_gaps_rejected() {
    let space = static_flat_grid::<f64>(1.0, 9).unwrap();
    let times = [0.5, 0.4375, 0.375]; // two equal gaps
    let ens = sample_backward_bm(&space, &Measure::dirac(9, 4), &times, 10, 4, 1).unwrap();
    assert!(kolmogorov_scaling(&ens, &space, 2.0).is_err());
}

#[test]
fn coupling_kernel_excess_reported_against_terminal_distance() {
    let space = static_flat_grid::<f64>(1.0, 17).unwrap();
    let ck = coupling_kernel(&space, 0.5, 0.4375, 4, 12, CouplingMode::WinfOptimal, 8).unwrap();
    let d = space.distance_at(0.5).unwrap();
    let expect_ref = d[4 * 17 + 12];
    assert!((ck.excess - (ck.plan.support_max_distance - expect_ref)).abs() < 1e-14);
    // one short step of heat flow cannot stretch the monotone coupling far
    assert!(ck.excess <= 2.0 * space.grid_spacing().unwrap() + 1e-12);
}

#[test]
fn two_point_winf_coupling_matches_brute_force_family() {
    // couplings of two 2-atom measures form a one-parameter family:
    // gamma = [[q, a-q], [b-q, 1-a-b+q]] for q in the feasible interval;
    // minimize the support max-distance by scanning q densely
    let space = static_flat_grid::<f64>(0.5, 2)
        .unwrap()
        .with_horizon((0.0, 2.0))
        .unwrap();
    let (s_hi, s_lo) = (1.0, 0.5);
    let ck = coupling_kernel(&space, s_hi, s_lo, 0, 1, CouplingMode::WinfOptimal, 256).unwrap();
    let a = ck.plan.row_marginal[0]; // row kernel mass of vertex 0
    let b = ck.plan.col_marginal[0];
    let d = space.distance_at(s_lo).unwrap();
    let mut best = f64::INFINITY;
    let steps = 200_000;
    let q_lo = (a + b - 1.0f64).max(0.0);
    let q_hi = a.min(b);
    for k in 0..=steps {
        let q = q_lo + (q_hi - q_lo) * k as f64 / steps as f64;
        let gamma = [q, a - q, b - q, 1.0 - a - b + q];
        let mut sup = 0.0f64;
        for (idx, &m) in gamma.iter().enumerate() {
            if m > 1e-12 {
                sup = sup.max(d[(idx / 2) * 2 + idx % 2]);
            }
        }
        best = best.min(sup);
    }
    assert!(
        (ck.plan.support_max_distance - best).abs() < 1e-9,
        "winf coupling {} vs brute force {best}",
        ck.plan.support_max_distance
    );
}
