//! Backward Brownian motion on the discrete space: sampling, coupling
//! kernels, dyadic composition and pathwise statistics.
//!
//! Paths are discrete-time skeletons on a decreasing time grid; transitions
//! from `s_k` to `s_{k+1}` are exact rows of the implicit-Euler propagator
//! over that interval. All randomness comes from counter-based streams keyed
//! by `(seed, path, step)`, so parallel sampling is order independent and
//! ensembles are reproducible bit for bit.

use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::heat::{propagator_matrix, Scheme};
use crate::rng::stream;
use crate::scalar::Scalar;
use crate::space::{DynamicSpace, Measure};
use crate::transport::{
    monotone_coupling, wasserstein_inf, wasserstein_p, PlanExponent, TransportPlan,
};

/// How a coupling of two kernel rows is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CouplingMode<T> {
    /// minimize the essential supremum of `d_{s_lo}` over the plan
    WinfOptimal,
    /// minimize `∫ d_{s_lo}^p`
    WpOptimal(T),
    /// product coupling (control experiment)
    Independent,
}

impl<T: Scalar> CouplingMode<T> {
    pub fn label(&self) -> String {
        match self {
            CouplingMode::WinfOptimal => "winf".into(),
            CouplingMode::WpOptimal(p) => format!("wp({})", p.to_f64_lossy()),
            CouplingMode::Independent => "independent".into(),
        }
    }
}

/// Time-indexed array of sampled trajectories.
#[derive(Clone, Debug)]
pub struct PathEnsemble<T> {
    /// strictly decreasing sample times, `times[0]` is terminal
    pub times: Vec<T>,
    /// vertex indices; stride `times.len()` for single ensembles and
    /// `2 · times.len()` (x then y per time) for coupled ones
    pub paths: Vec<u32>,
    pub n_paths: usize,
    pub coupled: bool,
    pub seed: u64,
    pub kernel_steps: usize,
}

impl<T: Scalar> PathEnsemble<T> {
    pub fn vertex(&self, path: usize, k: usize) -> usize {
        debug_assert!(!self.coupled);
        self.paths[path * self.times.len() + k] as usize
    }

    pub fn pair(&self, path: usize, k: usize) -> (usize, usize) {
        debug_assert!(self.coupled);
        let base = (path * self.times.len() + k) * 2;
        (self.paths[base] as usize, self.paths[base + 1] as usize)
    }

    /// Empirical vertex frequencies at time index `k`; `component` selects
    /// the leg of a coupled ensemble.
    pub fn empirical_law(&self, k: usize, component: usize, n_vertices: usize) -> Vec<T> {
        let mut counts = vec![T::zero(); n_vertices];
        for p in 0..self.n_paths {
            let v = if self.coupled {
                let (a, b) = self.pair(p, k);
                if component == 0 {
                    a
                } else {
                    b
                }
            } else {
                self.vertex(p, k)
            };
            counts[v] = counts[v] + T::one();
        }
        let total = T::from_usize_lossy(self.n_paths);
        counts.iter().map(|&c| c / total).collect()
    }
}

/// `½ Σ |a - b|`.
pub fn total_variation<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y).abs())
        .sum::<T>()
        * T::c(0.5)
}

fn check_decreasing_times<T: Scalar>(space: &DynamicSpace<T>, times: &[T]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::InvalidGrid("empty time grid".into()));
    }
    for w in times.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::InvalidGrid("times must be strictly decreasing".into()));
        }
    }
    for &t in times {
        space.check_time(t)?;
    }
    Ok(())
}

/// Cumulative row sampler for a stochastic matrix.
struct RowSampler<T> {
    cum: Vec<T>,
    n: usize,
}

impl<T: Scalar> RowSampler<T> {
    fn from_rows(rows: &crate::linalg::Mat<T>) -> Self {
        let n = rows.cols;
        let mut cum = vec![T::zero(); rows.rows * n];
        for i in 0..rows.rows {
            let mut acc = T::zero();
            for j in 0..n {
                acc = acc + rows[(i, j)].max(T::zero());
                cum[i * n + j] = acc;
            }
        }
        Self { cum, n }
    }

    fn sample(&self, row: usize, u: T) -> usize {
        let cum = &self.cum[row * self.n..(row + 1) * self.n];
        let total = cum[self.n - 1];
        let target = u * total;
        match cum.binary_search_by(|probe| probe.partial_cmp(&target).unwrap()) {
            Ok(k) => (k + 1).min(self.n - 1),
            Err(k) => k.min(self.n - 1),
        }
    }
}

/// Samples a backward Brownian motion skeleton with terminal law `terminal`
/// at `times[0]` and transitions `p_{s_k, s_{k+1}}(x, ·) m_{s_{k+1}}`.
pub fn sample_backward_bm<T: Scalar>(
    space: &DynamicSpace<T>,
    terminal: &Measure<T>,
    times: &[T],
    n_paths: usize,
    steps: usize,
    seed: u64,
) -> Result<PathEnsemble<T>> {
    check_decreasing_times(space, times)?;
    if !terminal.normalized || !terminal.check_normalized() {
        return Err(Error::InvalidMeasure("terminal law must be a probability".into()));
    }
    if n_paths == 0 {
        return Err(Error::InvalidParameter("n_paths must be positive".into()));
    }
    let k_steps = times.len() - 1;
    let mut samplers = Vec::with_capacity(k_steps);
    for k in 0..k_steps {
        let prop = propagator_matrix(space, times[k + 1], times[k], steps, Scheme::ImplicitEuler)?;
        samplers.push(RowSampler::from_rows(&prop.matrix));
    }
    let mut terminal_cum = vec![T::zero(); terminal.len()];
    let mut acc = T::zero();
    for (c, &m) in terminal_cum.iter_mut().zip(&terminal.masses) {
        acc = acc + m;
        *c = acc;
    }

    let stride = times.len();
    let mut paths = vec![0u32; n_paths * stride];
    paths
        .par_chunks_mut(stride)
        .enumerate()
        .for_each(|(path, chunk)| {
            let mut rng = stream(seed, path as u64, u64::MAX);
            let u: T = T::c(rng.random::<f64>());
            let total = terminal_cum[terminal_cum.len() - 1];
            let target = u * total;
            let mut v = match terminal_cum
                .binary_search_by(|probe| probe.partial_cmp(&target).unwrap())
            {
                Ok(k) => (k + 1).min(terminal_cum.len() - 1),
                Err(k) => k.min(terminal_cum.len() - 1),
            };
            chunk[0] = v as u32;
            for (k, sampler) in samplers.iter().enumerate() {
                let mut rng = stream(seed, path as u64, k as u64);
                let u: T = T::c(rng.random::<f64>());
                v = sampler.sample(v, u);
                chunk[k + 1] = v as u32;
            }
        });
    Ok(PathEnsemble {
        times: times.to_vec(),
        paths,
        n_paths,
        coupled: false,
        seed,
        kernel_steps: steps,
    })
}

/// Coupling of the kernel rows out of `x` and `y` over `[s_lo, s_hi]`,
/// together with the distance excess of its support.
pub struct CouplingKernel<T> {
    pub plan: TransportPlan<T>,
    /// `max d_{s_lo} over support - d_{s_hi}(x, y)`
    pub excess: T,
    pub s_hi: T,
    pub s_lo: T,
    pub pair: (usize, usize),
}

fn coupling_from_rows<T: Scalar>(
    space: &DynamicSpace<T>,
    row_x: Vec<T>,
    row_y: Vec<T>,
    s_lo: T,
    mode: CouplingMode<T>,
) -> Result<TransportPlan<T>> {
    let n = space.len();
    match mode {
        CouplingMode::Independent => {
            let mut entries = Vec::new();
            for (i, &a) in row_x.iter().enumerate() {
                if a <= T::zero() {
                    continue;
                }
                for (j, &b) in row_y.iter().enumerate() {
                    if b > T::zero() {
                        entries.push((i, j, a * b));
                    }
                }
            }
            let d_lo = space.distance_at(s_lo)?;
            let support_max = entries
                .iter()
                .map(|&(i, j, _)| d_lo[i * n + j])
                .fold(T::zero(), T::max);
            Ok(TransportPlan {
                n_rows: n,
                n_cols: n,
                entries,
                row_marginal: row_x,
                col_marginal: row_y,
                cost_value: support_max,
                raw_cost: support_max,
                p: PlanExponent::Infinity,
                dual_row: None,
                dual_col: None,
                duality_gap: None,
                support_max_distance: support_max,
            })
        }
        CouplingMode::WinfOptimal => {
            // monotone coupling is the exact W_∞ optimum on line metrics;
            // fall back to bisection + max-flow otherwise
            if let Some(xi) = space.line_coordinates_at(s_lo)? {
                let entries = monotone_coupling(&xi, &row_x, &row_y);
                let support_max = entries
                    .iter()
                    .map(|&(i, j, _)| (xi[i] - xi[j]).abs())
                    .fold(T::zero(), T::max);
                Ok(TransportPlan {
                    n_rows: n,
                    n_cols: n,
                    entries,
                    row_marginal: row_x,
                    col_marginal: row_y,
                    cost_value: support_max,
                    raw_cost: support_max,
                    p: PlanExponent::Infinity,
                    dual_row: None,
                    dual_col: None,
                    duality_gap: None,
                    support_max_distance: support_max,
                })
            } else {
                let d = space.distance_at(s_lo)?;
                let mu = Measure { masses: row_x, normalized: true };
                let nu = Measure { masses: row_y, normalized: true };
                let (_, plan) = wasserstein_inf(&d, &mu, &nu)?;
                Ok(plan)
            }
        }
        CouplingMode::WpOptimal(p) => {
            if let Some(xi) = space.line_coordinates_at(s_lo)? {
                let entries = monotone_coupling(&xi, &row_x, &row_y);
                let support_max = entries
                    .iter()
                    .map(|&(i, j, _)| (xi[i] - xi[j]).abs())
                    .fold(T::zero(), T::max);
                let raw: T = entries
                    .iter()
                    .map(|&(i, j, m)| m * (xi[i] - xi[j]).abs().powf(p))
                    .sum();
                Ok(TransportPlan {
                    n_rows: n,
                    n_cols: n,
                    entries,
                    row_marginal: row_x,
                    col_marginal: row_y,
                    cost_value: raw.max(T::zero()).powf(T::one() / p),
                    raw_cost: raw,
                    p: PlanExponent::Finite(p),
                    dual_row: None,
                    dual_col: None,
                    duality_gap: None,
                    support_max_distance: support_max,
                })
            } else {
                let d = space.distance_at(s_lo)?;
                let mu = Measure { masses: row_x, normalized: true };
                let nu = Measure { masses: row_y, normalized: true };
                let (_, plan) = wasserstein_p(&d, p, &mu, &nu)?;
                Ok(plan)
            }
        }
    }
}

/// Builds the coupling of `p_{s_hi, s_lo}(x, ·)` and `p_{s_hi, s_lo}(y, ·)`.
pub fn coupling_kernel<T: Scalar>(
    space: &DynamicSpace<T>,
    s_hi: T,
    s_lo: T,
    x: usize,
    y: usize,
    mode: CouplingMode<T>,
    steps: usize,
) -> Result<CouplingKernel<T>> {
    if !(s_lo < s_hi) {
        return Err(Error::BadInterval { s: s_lo.to_f64_lossy(), t: s_hi.to_f64_lossy() });
    }
    let prop = propagator_matrix(space, s_lo, s_hi, steps, Scheme::ImplicitEuler)?;
    let row_x = prop.matrix.row(x).to_vec();
    let row_y = prop.matrix.row(y).to_vec();
    let plan = coupling_from_rows(space, row_x, row_y, s_lo, mode)?;
    let d_hi = space.distance_at(s_hi)?;
    let excess = plan.support_max_distance - d_hi[x * space.len() + y];
    Ok(CouplingKernel { plan, excess, s_hi, s_lo, pair: (x, y) })
}

fn is_dyadic<T: Scalar>(t: T, max_level: i32) -> bool {
    let scaled = t.to_f64_lossy() * (2f64).powi(max_level);
    (scaled - scaled.round()).abs() < 1e-9
}

/// Dyadic composition `q^{(n)}_{s_hi, s_lo} = q*_{..} ∘ ... ∘ q*_{..}` of
/// one-step couplings across the level-`n` grid, started from `(x, y)`.
///
/// The marginals of the returned plan are set to the full-interval kernel
/// rows, so auditing it measures the telescoping error directly.
pub fn dyadic_coupling_step<T: Scalar>(
    space: &DynamicSpace<T>,
    level: u32,
    s_hi: T,
    s_lo: T,
    x: usize,
    y: usize,
    mode: CouplingMode<T>,
    steps: usize,
) -> Result<TransportPlan<T>> {
    if !(s_lo < s_hi) {
        return Err(Error::BadInterval { s: s_lo.to_f64_lossy(), t: s_hi.to_f64_lossy() });
    }
    let step_width = T::c((2f64).powi(-(level as i32)));
    for &t in &[s_hi, s_lo] {
        if !is_dyadic(t, level as i32) {
            return Err(Error::InvalidGrid(format!(
                "time {} is not on the level-{level} dyadic grid",
                t.to_f64_lossy()
            )));
        }
    }
    let n = space.len();
    let n_intervals = ((s_hi - s_lo) / step_width).round().to_usize().unwrap_or(0);
    if n_intervals == 0 {
        return Err(Error::InvalidGrid("dyadic interval is empty".into()));
    }
    // distribution over pairs, sparse
    let mut dist: HashMap<(usize, usize), T> = HashMap::new();
    dist.insert((x, y), T::one());
    for j in 0..n_intervals {
        let hi = s_hi - step_width * T::from_usize_lossy(j);
        let lo = s_hi - step_width * T::from_usize_lossy(j + 1);
        let prop = propagator_matrix(space, lo, hi, steps, Scheme::ImplicitEuler)?;
        let mut next: HashMap<(usize, usize), T> = HashMap::new();
        for (&(a, b), &mass) in &dist {
            let plan = coupling_from_rows(
                space,
                prop.matrix.row(a).to_vec(),
                prop.matrix.row(b).to_vec(),
                lo,
                mode,
            )?;
            for &(i, jj, m) in &plan.entries {
                let e = next.entry((i, jj)).or_insert(T::zero());
                *e = *e + mass * m;
            }
        }
        // drop numerically empty pairs to keep the support tight
        let floor = T::c(1e-16);
        dist = next.into_iter().filter(|&(_, m)| m > floor).collect();
    }

    let full = propagator_matrix(space, s_lo, s_hi, steps * n_intervals, Scheme::ImplicitEuler)?;
    let row_marginal = full.matrix.row(x).to_vec();
    let col_marginal = full.matrix.row(y).to_vec();
    let d_lo = space.distance_at(s_lo)?;
    let mut entries: Vec<(usize, usize, T)> =
        dist.into_iter().map(|((i, j), m)| (i, j, m)).collect();
    entries.sort_by_key(|&(i, j, _)| (i, j));
    let support_max = entries
        .iter()
        .map(|&(i, j, _)| d_lo[i * n + j])
        .fold(T::zero(), T::max);
    Ok(TransportPlan {
        n_rows: n,
        n_cols: n,
        entries,
        row_marginal,
        col_marginal,
        cost_value: support_max,
        raw_cost: support_max,
        p: PlanExponent::Infinity,
        dual_row: None,
        dual_col: None,
        duality_gap: None,
        support_max_distance: support_max,
    })
}

/// Memoized coupling plans over dyadic intervals, keyed by
/// `(interval index, x, y)` on the level-`level` grid.
pub struct CouplingKernelSet<T> {
    pub level: u32,
    pub mode: CouplingMode<T>,
    kernels: HashMap<(u64, u32, u32), TransportPlan<T>>,
}

impl<T: Scalar> CouplingKernelSet<T> {
    pub fn new(level: u32, mode: CouplingMode<T>) -> Self {
        Self { level, mode, kernels: HashMap::new() }
    }

    /// Fetches or builds the coupling of the kernel rows out of `(x, y)`
    /// over the dyadic interval ending at `s_hi = k 2^{-level}`.
    pub fn get_or_build(
        &mut self,
        space: &DynamicSpace<T>,
        interval: u64,
        x: usize,
        y: usize,
        steps: usize,
    ) -> Result<&TransportPlan<T>> {
        let key = (interval, x as u32, y as u32);
        if !self.kernels.contains_key(&key) {
            let width = T::c((2f64).powi(-(self.level as i32)));
            let hi = width * T::c(interval as f64);
            let lo = hi - width;
            let ck = coupling_kernel(space, hi, lo, x, y, self.mode, steps)?;
            self.kernels.insert(key, ck.plan);
        }
        Ok(&self.kernels[&key])
    }

    /// Worst marginal deviation over every stored plan (invariant: ≤ 1e-9).
    pub fn worst_marginal_deviation(&self) -> T {
        let mut worst = T::zero();
        for plan in self.kernels.values() {
            let mut rows = vec![T::zero(); plan.n_rows];
            let mut cols = vec![T::zero(); plan.n_cols];
            for &(i, j, m) in &plan.entries {
                rows[i] = rows[i] + m;
                cols[j] = cols[j] + m;
            }
            for (got, want) in rows.iter().zip(&plan.row_marginal) {
                worst = worst.max((*got - *want).abs());
            }
            for (got, want) in cols.iter().zip(&plan.col_marginal) {
                worst = worst.max((*got - *want).abs());
            }
        }
        worst
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }
}

struct PlanSampler<T> {
    pairs: Vec<(u32, u32)>,
    cum: Vec<T>,
}

impl<T: Scalar> PlanSampler<T> {
    fn from_plan(plan: &TransportPlan<T>) -> Self {
        let mut pairs = Vec::with_capacity(plan.entries.len());
        let mut cum = Vec::with_capacity(plan.entries.len());
        let mut acc = T::zero();
        for &(i, j, m) in &plan.entries {
            acc = acc + m.max(T::zero());
            pairs.push((i as u32, j as u32));
            cum.push(acc);
        }
        Self { pairs, cum }
    }

    fn sample(&self, u: T) -> (usize, usize) {
        let total = *self.cum.last().unwrap();
        let target = u * total;
        let k = match self
            .cum
            .binary_search_by(|probe| probe.partial_cmp(&target).unwrap())
        {
            Ok(k) => (k + 1).min(self.cum.len() - 1),
            Err(k) => k.min(self.cum.len() - 1),
        };
        (self.pairs[k].0 as usize, self.pairs[k].1 as usize)
    }
}

/// Samples coupled backward Brownian motions terminating in `(δ_x, δ_y)` at
/// `times[0]`, drawing each step's pair transition from the per-pair optimal
/// coupling plan (memoized per visited pair).
#[allow(clippy::too_many_arguments)]
pub fn sample_coupled_bm<T: Scalar>(
    space: &DynamicSpace<T>,
    x: usize,
    y: usize,
    times: &[T],
    n_paths: usize,
    mode: CouplingMode<T>,
    steps: usize,
    seed: u64,
) -> Result<PathEnsemble<T>> {
    check_decreasing_times(space, times)?;
    for &t in times {
        if !is_dyadic(t, 30) {
            return Err(Error::InvalidGrid(format!(
                "time {} is not dyadic",
                t.to_f64_lossy()
            )));
        }
    }
    if x >= space.len() || y >= space.len() {
        return Err(Error::InvalidInput("terminal vertices out of range".into()));
    }
    if n_paths == 0 {
        return Err(Error::InvalidParameter("n_paths must be positive".into()));
    }

    let k_steps = times.len() - 1;
    let stride = 2 * times.len();
    let mut paths = vec![0u32; n_paths * stride];
    let mut current: Vec<(u32, u32)> = vec![(x as u32, y as u32); n_paths];
    for p in 0..n_paths {
        paths[p * stride] = x as u32;
        paths[p * stride + 1] = y as u32;
    }

    for k in 0..k_steps {
        let hi = times[k];
        let lo = times[k + 1];
        let prop = propagator_matrix(space, lo, hi, steps, Scheme::ImplicitEuler)?;

        if matches!(mode, CouplingMode::Independent) {
            // components move independently; sample each from its own row
            let sampler = RowSampler::from_rows(&prop.matrix);
            paths
                .par_chunks_mut(stride)
                .zip(current.par_iter_mut())
                .enumerate()
                .for_each(|(path, (chunk, cur))| {
                    let mut rng = stream(seed, path as u64, k as u64);
                    let u1: T = T::c(rng.random::<f64>());
                    let u2: T = T::c(rng.random::<f64>());
                    let a = sampler.sample(cur.0 as usize, u1);
                    let b = sampler.sample(cur.1 as usize, u2);
                    *cur = (a as u32, b as u32);
                    chunk[(k + 1) * 2] = a as u32;
                    chunk[(k + 1) * 2 + 1] = b as u32;
                });
            continue;
        }

        // memoized plan construction for the distinct visited pairs
        let mut distinct: Vec<(u32, u32)> = current.clone();
        distinct.sort_unstable();
        distinct.dedup();
        let plans: HashMap<(u32, u32), PlanSampler<T>> = distinct
            .par_iter()
            .map(|&(a, b)| {
                let plan = coupling_from_rows(
                    space,
                    prop.matrix.row(a as usize).to_vec(),
                    prop.matrix.row(b as usize).to_vec(),
                    lo,
                    mode,
                )
                .expect("coupling construction failed");
                ((a, b), PlanSampler::from_plan(&plan))
            })
            .collect();

        paths
            .par_chunks_mut(stride)
            .zip(current.par_iter_mut())
            .enumerate()
            .for_each(|(path, (chunk, cur))| {
                let mut rng = stream(seed, path as u64, k as u64);
                let u: T = T::c(rng.random::<f64>());
                let (a, b) = plans[cur].sample(u);
                *cur = (a as u32, b as u32);
                chunk[(k + 1) * 2] = a as u32;
                chunk[(k + 1) * 2 + 1] = b as u32;
            });
    }
    Ok(PathEnsemble {
        times: times.to_vec(),
        paths,
        n_paths,
        coupled: true,
        seed,
        kernel_steps: steps,
    })
}

/// Per-time and overall contraction statistics of a coupled ensemble.
#[derive(Clone, Debug, serde::Serialize)]
pub struct ContractionStats<T> {
    pub per_time: Vec<TimeContraction<T>>,
    /// fraction of paths whose distance exceeds `d_t(x,y) + allowance` at
    /// any sample time
    pub any_violation_fraction: T,
    pub max_excess: T,
    pub mean_excess: T,
    pub allowance: T,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct TimeContraction<T> {
    pub time: T,
    pub violation_fraction: T,
    pub mean_excess: T,
    pub max_excess: T,
}

/// Compares `d_{s_k}(B¹, B²)` against the terminal distance `d_t(B¹_t, B²_t)`.
pub fn contraction_stats<T: Scalar>(
    paths: &PathEnsemble<T>,
    space: &DynamicSpace<T>,
    allowance: T,
) -> Result<ContractionStats<T>> {
    if !paths.coupled {
        return Err(Error::InvalidInput("contraction stats need a coupled ensemble".into()));
    }
    let n = space.len();
    let k_times = paths.times.len();
    let d_t = space.distance_at(paths.times[0])?;
    let mut refs = Vec::with_capacity(paths.n_paths);
    for p in 0..paths.n_paths {
        let (a, b) = paths.pair(p, 0);
        refs.push(d_t[a * n + b]);
    }
    let mut any_violation = vec![false; paths.n_paths];
    let mut per_time = Vec::with_capacity(k_times);
    let mut global_max = T::neg_infinity();
    let mut global_sum = T::zero();
    let mut global_count = 0usize;
    for k in 0..k_times {
        let d_s = space.distance_at(paths.times[k])?;
        let mut violations = 0usize;
        let mut max_excess = T::neg_infinity();
        let mut sum_excess = T::zero();
        for p in 0..paths.n_paths {
            let (a, b) = paths.pair(p, k);
            let excess = d_s[a * n + b] - refs[p];
            if excess > allowance {
                violations += 1;
                any_violation[p] = true;
            }
            max_excess = max_excess.max(excess);
            sum_excess = sum_excess + excess;
        }
        global_max = global_max.max(max_excess);
        global_sum = global_sum + sum_excess;
        global_count += paths.n_paths;
        per_time.push(TimeContraction {
            time: paths.times[k],
            violation_fraction: T::from_usize_lossy(violations)
                / T::from_usize_lossy(paths.n_paths),
            mean_excess: sum_excess / T::from_usize_lossy(paths.n_paths),
            max_excess,
        });
    }
    let violated = any_violation.iter().filter(|&&v| v).count();
    Ok(ContractionStats {
        per_time,
        any_violation_fraction: T::from_usize_lossy(violated)
            / T::from_usize_lossy(paths.n_paths),
        max_excess: global_max,
        mean_excess: global_sum / T::from_usize_lossy(global_count),
        allowance,
    })
}

/// Log-log moment scaling fit of `E[d_t(B_s, B_{s'})^p]` over consecutive
/// time gaps.
#[derive(Clone, Debug, serde::Serialize)]
pub struct ScalingReport<T> {
    /// `(gap, moment)` per consecutive time pair
    pub points: Vec<(T, T)>,
    pub slope: Option<T>,
    pub target: T,
    pub degenerate: bool,
}

pub fn kolmogorov_scaling<T: Scalar>(
    paths: &PathEnsemble<T>,
    space: &DynamicSpace<T>,
    p: T,
) -> Result<ScalingReport<T>> {
    if paths.coupled {
        return Err(Error::InvalidInput("moment scaling expects a single-component ensemble".into()));
    }
    let mut gaps: Vec<f64> = paths
        .times
        .windows(2)
        .map(|w| (w[0] - w[1]).to_f64_lossy())
        .collect();
    gaps.sort_by(f64::total_cmp);
    gaps.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    if gaps.len() < 4 {
        return Err(Error::InvalidGrid("need at least 4 distinct time gaps".into()));
    }
    let n = space.len();
    let d_t = space.distance_at(paths.times[0])?;
    let mut points = Vec::with_capacity(paths.times.len() - 1);
    let mut degenerate = false;
    for k in 0..paths.times.len() - 1 {
        let gap = paths.times[k] - paths.times[k + 1];
        let mut acc = T::zero();
        for path in 0..paths.n_paths {
            let a = paths.vertex(path, k);
            let b = paths.vertex(path, k + 1);
            acc = acc + d_t[a * n + b].powf(p);
        }
        let moment = acc / T::from_usize_lossy(paths.n_paths);
        if moment <= T::zero() {
            degenerate = true;
        }
        points.push((gap, moment));
    }
    let fit: Vec<(T, T)> = points
        .iter()
        .filter(|(_, m)| *m > T::zero())
        .map(|&(g, m)| (g.ln(), m.ln()))
        .collect();
    let slope = if degenerate { None } else { crate::heat::fit_slope(&fit) };
    Ok(ScalingReport { points, slope, target: p * T::c(0.5), degenerate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flows::static_flat_grid;

    #[test]
    fn single_time_point_draws_iid_terminal() {
        let space = static_flat_grid::<f64>(1.0, 5).unwrap();
        let terminal = Measure::probability(vec![0.1, 0.2, 0.4, 0.2, 0.1]).unwrap();
        let ens = sample_backward_bm(&space, &terminal, &[0.5], 20_000, 4, 11).unwrap();
        let law = ens.empirical_law(0, 0, 5);
        // 3σ binomial bands
        for (i, (&emp, &exact)) in law.iter().zip(&terminal.masses).enumerate() {
            let sigma = (exact * (1.0 - exact) / 20_000f64).sqrt();
            assert!((emp - exact).abs() < 3.0 * sigma + 1e-3, "vertex {i}");
        }
    }

    #[test]
    fn ensembles_reproducible_from_seed() {
        let space = static_flat_grid::<f64>(1.0, 9).unwrap();
        let terminal = Measure::dirac(9, 4);
        let times = [0.5, 0.4375, 0.375, 0.3125];
        let a = sample_backward_bm(&space, &terminal, &times, 500, 4, 99).unwrap();
        let b = sample_backward_bm(&space, &terminal, &times, 500, 4, 99).unwrap();
        assert_eq!(a.paths, b.paths);
        let c = sample_backward_bm(&space, &terminal, &times, 500, 4, 100).unwrap();
        assert_ne!(a.paths, c.paths);
    }

    #[test]
    fn increasing_times_rejected() {
        let space = static_flat_grid::<f64>(1.0, 5).unwrap();
        let terminal = Measure::dirac(5, 2);
        assert!(matches!(
            sample_backward_bm(&space, &terminal, &[0.3, 0.4], 10, 2, 1),
            Err(Error::InvalidGrid(_))
        ));
    }

    #[test]
    fn coupling_kernel_identical_marginals_couple_diagonally() {
        let space = static_flat_grid::<f64>(1.0, 7).unwrap();
        let ck = coupling_kernel(&space, 0.5, 0.375, 3, 3, CouplingMode::WinfOptimal, 4).unwrap();
        for &(i, j, _) in &ck.plan.entries {
            assert_eq!(i, j);
        }
        assert!(ck.excess <= 1e-12);
        assert!(ck.plan.support_max_distance == 0.0);
    }

    #[test]
    fn independent_coupling_is_product() {
        let space = static_flat_grid::<f64>(1.0, 5).unwrap();
        let ck = coupling_kernel(&space, 0.5, 0.25, 1, 3, CouplingMode::Independent, 4).unwrap();
        let dense = ck.plan.to_dense();
        for i in 0..5 {
            for j in 0..5 {
                let expect = ck.plan.row_marginal[i] * ck.plan.col_marginal[j];
                assert!((dense[i * 5 + j] - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn winf_coupling_matches_maxflow_optimum_on_small_space() {
        // cross-validates the monotone fast path against the bisection route
        let space = static_flat_grid::<f64>(1.0, 9).unwrap();
        let (s_hi, s_lo) = (0.5, 0.375);
        let prop = propagator_matrix(&space, s_lo, s_hi, 8, Scheme::ImplicitEuler).unwrap();
        for (x, y) in [(2usize, 6usize), (0, 8), (4, 5)] {
            let ck =
                coupling_kernel(&space, s_hi, s_lo, x, y, CouplingMode::WinfOptimal, 8).unwrap();
            let d = space.distance_at(s_lo).unwrap();
            let mu = Measure { masses: prop.matrix.row(x).to_vec(), normalized: true };
            let nu = Measure { masses: prop.matrix.row(y).to_vec(), normalized: true };
            let (w, _) = wasserstein_inf(&d, &mu, &nu).unwrap();
            assert!(
                (ck.plan.support_max_distance - w).abs() < 1e-10,
                "({x},{y}): monotone {} vs maxflow {w}",
                ck.plan.support_max_distance
            );
        }
    }

    #[test]
    fn coupled_paths_stay_together_from_equal_terminals() {
        let space = static_flat_grid::<f64>(1.0, 9).unwrap();
        let times = [0.5, 0.4375, 0.375, 0.3125, 0.25];
        let ens =
            sample_coupled_bm(&space, 4, 4, &times, 200, CouplingMode::WinfOptimal, 4, 3).unwrap();
        for p in 0..ens.n_paths {
            for k in 0..times.len() {
                let (a, b) = ens.pair(p, k);
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn contraction_stats_requires_coupled() {
        let space = static_flat_grid::<f64>(1.0, 5).unwrap();
        let terminal = Measure::dirac(5, 2);
        let single = sample_backward_bm(&space, &terminal, &[0.5, 0.375], 10, 2, 1).unwrap();
        assert!(matches!(
            contraction_stats(&single, &space, 0.0),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn dyadic_step_single_factor_matches_coupling_kernel() {
        let space = static_flat_grid::<f64>(1.0, 7).unwrap();
        let (hi, lo) = (0.5, 0.46875); // one level-5 interval
        let plan =
            dyadic_coupling_step(&space, 5, hi, lo, 1, 5, CouplingMode::WinfOptimal, 4).unwrap();
        let ck = coupling_kernel(&space, hi, lo, 1, 5, CouplingMode::WinfOptimal, 4).unwrap();
        let a = plan.to_dense();
        let b = ck.plan.to_dense();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn kernel_set_memoizes_and_keeps_marginals() {
        let space = static_flat_grid::<f64>(1.0, 9).unwrap();
        let mut set = CouplingKernelSet::new(4, CouplingMode::WinfOptimal);
        // interval 8 ends at 8/16 = 0.5
        let _ = set.get_or_build(&space, 8, 1, 6, 4).unwrap();
        let _ = set.get_or_build(&space, 8, 1, 6, 4).unwrap();
        let _ = set.get_or_build(&space, 7, 2, 3, 4).unwrap();
        assert_eq!(set.len(), 2);
        assert!(set.worst_marginal_deviation() < 1e-9);
    }

    #[test]
    fn dyadic_non_dyadic_times_rejected() {
        let space = static_flat_grid::<f64>(1.0, 5).unwrap();
        assert!(matches!(
            dyadic_coupling_step(&space, 4, 0.5, 0.3, 0, 1, CouplingMode::WinfOptimal, 2),
            Err(Error::InvalidGrid(_))
        ));
    }
}
