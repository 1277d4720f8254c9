//! Exact Kantorovich distances, optimal plans, relative entropy and 1D
//! displacement interpolation.
//!
//! Finite-p distances are exact linear-program optima certified by dual
//! potentials; `W_∞` is the exact discrete optimum found by bisection over
//! the distinct cost values with max-flow feasibility checks. Entropic
//! regularization is deliberately absent: the inequalities tested downstream
//! need certificates at tolerances a regularized solver cannot provide.
//!
//! When the distance matrix embeds isometrically in the line (every grid
//! space under a global metric scaling does), the solver first builds the
//! monotone coupling and certifies it with explicitly constructed duals; it
//! falls back to successive shortest paths whenever the certificate is not
//! watertight.

pub mod maxflow;
pub mod mincost;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::space::{DynamicSpace, Measure};

/// Cost exponent of a plan.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub enum PlanExponent<T> {
    Finite(T),
    Infinity,
}

/// Joint mass matrix with prescribed marginals.
#[derive(Clone, Debug)]
pub struct TransportPlan<T> {
    pub n_rows: usize,
    pub n_cols: usize,
    /// sparse entries `(i, j, mass)`
    pub entries: Vec<(usize, usize, T)>,
    pub row_marginal: Vec<T>,
    pub col_marginal: Vec<T>,
    /// the distance value `W_p` (p-th root of the optimal cost)
    pub cost_value: T,
    /// optimal `Σ γ_ij c_ij`
    pub raw_cost: T,
    pub p: PlanExponent<T>,
    pub dual_row: Option<Vec<T>>,
    pub dual_col: Option<Vec<T>>,
    /// `raw_cost - dual objective` when duals are available
    pub duality_gap: Option<T>,
    /// `max d(i,j)` over the support
    pub support_max_distance: T,
}

/// Measured deviations of a plan from its invariants.
#[derive(Clone, Copy, Debug)]
pub struct PlanAudit<T> {
    pub row_dev: T,
    pub col_dev: T,
    pub cost_dev: T,
}

impl<T: Scalar> TransportPlan<T> {
    /// Recomputes marginal sums and the cost against `d` (entry-wise `d^p`).
    pub fn audit(&self, d: &[T]) -> PlanAudit<T> {
        let mut rows = vec![T::zero(); self.n_rows];
        let mut cols = vec![T::zero(); self.n_cols];
        let mut cost = T::zero();
        for &(i, j, m) in &self.entries {
            rows[i] = rows[i] + m;
            cols[j] = cols[j] + m;
            let c = match self.p {
                PlanExponent::Finite(p) => pow_cost(d[i * self.n_cols + j], p),
                PlanExponent::Infinity => T::zero(),
            };
            cost = cost + m * c;
        }
        let row_dev = rows
            .iter()
            .zip(&self.row_marginal)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max);
        let col_dev = cols
            .iter()
            .zip(&self.col_marginal)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max);
        let cost_dev = match self.p {
            PlanExponent::Finite(_) => (cost - self.raw_cost).abs(),
            PlanExponent::Infinity => T::zero(),
        };
        PlanAudit { row_dev, col_dev, cost_dev }
    }

    pub fn to_dense(&self) -> Vec<T> {
        let mut m = vec![T::zero(); self.n_rows * self.n_cols];
        for &(i, j, v) in &self.entries {
            m[i * self.n_cols + j] = m[i * self.n_cols + j] + v;
        }
        m
    }
}

fn pow_cost<T: Scalar>(d: T, p: T) -> T {
    if p == T::one() {
        d
    } else if p == T::c(2.0) {
        d * d
    } else if p.fract() == T::zero() && p <= T::c(128.0) {
        d.powi(p.to_i32().unwrap_or(1))
    } else {
        d.powf(p)
    }
}

fn check_pair_of_measures<T: Scalar>(mu: &Measure<T>, nu: &Measure<T>) -> Result<T> {
    let (a, b) = (mu.total(), nu.total());
    let dev = (a - b).abs();
    if dev > T::tol(1e-9) * T::one().max(a.abs()) {
        return Err(Error::UnbalancedInput(dev.to_f64_lossy()));
    }
    Ok(a)
}

/// Tries to read off 1D coordinates from a distance matrix: picks an extreme
/// vertex and checks `|ξ_i - ξ_j| = d(i,j)` for every pair.
pub fn line_embedding<T: Scalar>(d: &[T], n: usize) -> Option<Vec<T>> {
    if n == 0 {
        return None;
    }
    let mut anchor = 0usize;
    let mut best = T::zero();
    for j in 0..n {
        if d[j] > best {
            best = d[j];
            anchor = j;
        }
    }
    let xi: Vec<T> = (0..n).map(|i| d[anchor * n + i]).collect();
    let scale = best.max(T::one());
    let tol = T::tol(1e-12) * scale;
    for i in 0..n {
        for j in i + 1..n {
            if ((xi[i] - xi[j]).abs() - d[i * n + j]).abs() > tol {
                return None;
            }
        }
    }
    Some(xi)
}

/// Monotone (quantile) coupling of two mass vectors along coordinates `xi`.
///
/// Optimal for every convex cost of `|ξ_i - ξ_j|` and for the sup-cost; the
/// caller certifies optimality separately.
pub fn monotone_coupling<T: Scalar>(xi: &[T], mu: &[T], nu: &[T]) -> Vec<(usize, usize, T)> {
    let mut left: Vec<usize> = (0..mu.len()).filter(|&i| mu[i] > T::zero()).collect();
    let mut right: Vec<usize> = (0..nu.len()).filter(|&j| nu[j] > T::zero()).collect();
    left.sort_by(|&a, &b| xi[a].partial_cmp(&xi[b]).unwrap());
    right.sort_by(|&a, &b| xi[a].partial_cmp(&xi[b]).unwrap());
    let total_mu: T = mu.iter().copied().sum();
    let total_nu: T = nu.iter().copied().sum();
    let rescale = total_mu / total_nu;
    let mut entries = Vec::new();
    let (mut a, mut b) = (0usize, 0usize);
    let mut rem_mu = if left.is_empty() { T::zero() } else { mu[left[0]] };
    let mut rem_nu = if right.is_empty() { T::zero() } else { nu[right[0]] * rescale };
    let eps = T::epsilon() * T::c(8.0) * total_mu;
    while a < left.len() && b < right.len() {
        let m = rem_mu.min(rem_nu);
        if m > T::zero() {
            entries.push((left[a], right[b], m));
        }
        rem_mu = rem_mu - m;
        rem_nu = rem_nu - m;
        if rem_mu <= eps {
            a += 1;
            if a < left.len() {
                rem_mu = mu[left[a]];
            }
        }
        if rem_nu <= eps {
            b += 1;
            if b < right.len() {
                rem_nu = nu[right[b]] * rescale;
            }
        }
    }
    entries
}

/// Builds complementary-slackness duals along the monotone staircase and
/// verifies feasibility; `None` when the certificate does not close.
fn monotone_duals<T: Scalar>(
    cost: &[T],
    n: usize,
    entries: &[(usize, usize, T)],
    mu: &[T],
    nu: &[T],
) -> Option<(Vec<T>, Vec<T>)> {
    let mut alpha = vec![T::nan(); n];
    let mut beta = vec![T::nan(); n];
    let mut ordered = entries.to_vec();
    // two-pointer order: consecutive support cells share a row or a column
    ordered.sort_by(|x, y| (x.0, x.1).partial_cmp(&(y.0, y.1)).unwrap());
    for (k, &(i, j, _)) in ordered.iter().enumerate() {
        let c = cost[i * n + j];
        if k == 0 {
            alpha[i] = T::zero();
            beta[j] = c;
            continue;
        }
        if !alpha[i].is_nan() {
            beta[j] = c - alpha[i];
        } else if !beta[j].is_nan() {
            alpha[i] = c - beta[j];
        } else {
            return None; // staircase broken; give up
        }
    }
    // vertices without mass take the tightest feasible value
    for j in 0..n {
        if beta[j].is_nan() {
            let mut best = T::infinity();
            for i in 0..n {
                if !alpha[i].is_nan() {
                    best = best.min(cost[i * n + j] - alpha[i]);
                }
            }
            beta[j] = if best.is_finite() { best } else { T::zero() };
        }
    }
    for i in 0..n {
        if alpha[i].is_nan() {
            let mut best = T::infinity();
            for j in 0..n {
                best = best.min(cost[i * n + j] - beta[j]);
            }
            alpha[i] = if best.is_finite() { best } else { T::zero() };
        }
    }
    // feasibility within rounding
    let scale = cost.iter().fold(T::one(), |acc, &c| acc.max(c.abs()));
    let tol = T::tol(1e-11) * scale;
    for i in 0..n {
        for j in 0..n {
            if alpha[i] + beta[j] > cost[i * n + j] + tol {
                return None;
            }
        }
    }
    let _ = (mu, nu);
    Some((alpha, beta))
}

/// Exact `W_p` for `1 ≤ p < ∞` with an optimal plan and a dual certificate.
pub fn wasserstein_p<T: Scalar>(
    d: &[T],
    p: T,
    mu: &Measure<T>,
    nu: &Measure<T>,
) -> Result<(T, TransportPlan<T>)> {
    if !(p >= T::one()) || !p.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "wasserstein_p needs 1 <= p < inf, got {}",
            p.to_f64_lossy()
        )));
    }
    let n = mu.len();
    if nu.len() != n || d.len() != n * n {
        return Err(Error::InvalidInput("dimension mismatch in wasserstein_p".into()));
    }
    check_pair_of_measures(mu, nu)?;
    let cost: Vec<T> = d.iter().map(|&x| pow_cost(x, p)).collect();
    let scale = cost.iter().fold(T::one(), |acc, &c| acc.max(c.abs()));
    let gap_tol = T::tol(1e-9) * scale;

    // monotone fast path on line metrics, certified before acceptance
    if let Some(xi) = line_embedding(d, n) {
        let entries = monotone_coupling(&xi, &mu.masses, &nu.masses);
        if let Some((alpha, beta)) = monotone_duals(&cost, n, &entries, &mu.masses, &nu.masses) {
            let raw: T = entries.iter().map(|&(i, j, m)| m * cost[i * n + j]).sum();
            let dual_obj: T = mu
                .masses
                .iter()
                .zip(&alpha)
                .map(|(&m, &a)| m * a)
                .sum::<T>()
                + nu.masses.iter().zip(&beta).map(|(&m, &b)| m * b).sum::<T>();
            let gap = (raw - dual_obj).abs();
            if gap <= gap_tol {
                let plan = finish_plan(d, n, entries, mu, nu, raw, p, Some(alpha), Some(beta), gap);
                return Ok((plan.cost_value, plan));
            }
        }
    }

    let sol = mincost::solve_transportation(&cost, n, n, &mu.masses, &nu.masses)?;
    let dual_obj: T = mu
        .masses
        .iter()
        .zip(&sol.dual_row)
        .map(|(&m, &a)| m * a)
        .sum::<T>()
        + nu.masses.iter().zip(&sol.dual_col).map(|(&m, &b)| m * b).sum::<T>();
    let gap = (sol.cost - dual_obj).abs();
    if gap > gap_tol {
        return Err(Error::NumericalFailure(format!(
            "duality gap {} above certificate tolerance",
            gap.to_f64_lossy()
        )));
    }
    let raw = sol.cost;
    let plan = finish_plan(
        d,
        n,
        sol.entries,
        mu,
        nu,
        raw,
        p,
        Some(sol.dual_row),
        Some(sol.dual_col),
        gap,
    );
    Ok((plan.cost_value, plan))
}

#[allow(clippy::too_many_arguments)]
fn finish_plan<T: Scalar>(
    d: &[T],
    n: usize,
    entries: Vec<(usize, usize, T)>,
    mu: &Measure<T>,
    nu: &Measure<T>,
    raw: T,
    p: T,
    dual_row: Option<Vec<T>>,
    dual_col: Option<Vec<T>>,
    gap: T,
) -> TransportPlan<T> {
    let support_max = entries
        .iter()
        .map(|&(i, j, _)| d[i * n + j])
        .fold(T::zero(), T::max);
    let value = raw.max(T::zero()).powf(T::one() / p);
    TransportPlan {
        n_rows: n,
        n_cols: n,
        entries,
        row_marginal: mu.masses.clone(),
        col_marginal: nu.masses.clone(),
        cost_value: value,
        raw_cost: raw,
        p: PlanExponent::Finite(p),
        dual_row,
        dual_col,
        duality_gap: Some(gap),
        support_max_distance: support_max,
    }
}

/// Exact `W_∞`: the least threshold `θ` among the distance values such that a
/// coupling supported on `{d ≤ θ}` exists, decided by max-flow saturation.
pub fn wasserstein_inf<T: Scalar>(
    d: &[T],
    mu: &Measure<T>,
    nu: &Measure<T>,
) -> Result<(T, TransportPlan<T>)> {
    let n = mu.len();
    if nu.len() != n || d.len() != n * n {
        return Err(Error::InvalidInput("dimension mismatch in wasserstein_inf".into()));
    }
    let total = check_pair_of_measures(mu, nu)?;
    let rescale = total / nu.total();

    let mut thetas: Vec<T> = Vec::new();
    for i in 0..n {
        if mu.masses[i] <= T::zero() {
            continue;
        }
        for j in 0..n {
            if nu.masses[j] > T::zero() {
                thetas.push(d[i * n + j]);
            }
        }
    }
    thetas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    thetas.dedup();
    if thetas.is_empty() {
        return Err(Error::InvalidMeasure("empty support".into()));
    }

    let feas_tol = T::tol(1e-12) * T::one().max(total);
    let feasible = |theta: T| -> (bool, Vec<(usize, usize, T)>) {
        let mut dinic = maxflow::Dinic::new(2 + 2 * n, T::epsilon() * T::c(8.0) * total);
        let s = 0usize;
        let t = 1usize;
        for i in 0..n {
            if mu.masses[i] > T::zero() {
                dinic.add_edge(s, 2 + i, mu.masses[i]);
            }
        }
        for j in 0..n {
            if nu.masses[j] > T::zero() {
                dinic.add_edge(2 + n + j, t, nu.masses[j] * rescale);
            }
        }
        let mut handles = Vec::new();
        for i in 0..n {
            if mu.masses[i] <= T::zero() {
                continue;
            }
            for j in 0..n {
                if nu.masses[j] > T::zero() && d[i * n + j] <= theta {
                    let cap = mu.masses[i].min(nu.masses[j] * rescale);
                    let h = dinic.add_edge(2 + i, 2 + n + j, cap);
                    handles.push((i, j, h, cap));
                }
            }
        }
        let flow = dinic.max_flow(s, t);
        let ok = flow >= total - feas_tol;
        let entries: Vec<(usize, usize, T)> = handles
            .into_iter()
            .filter_map(|(i, j, h, cap)| {
                let f = dinic.edge_flow(h, cap);
                (f > T::zero()).then_some((i, j, f))
            })
            .collect();
        (ok, entries)
    };

    let (mut lo, mut hi) = (0usize, thetas.len() - 1);
    if !feasible(thetas[hi]).0 {
        return Err(Error::NumericalFailure(
            "no feasible coupling at the maximal distance".into(),
        ));
    }
    while lo < hi {
        let mid = (lo + hi) / 2;
        if feasible(thetas[mid]).0 {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let theta = thetas[lo];
    let (_, entries) = feasible(theta);
    let support_max = entries
        .iter()
        .map(|&(i, j, _)| d[i * n + j])
        .fold(T::zero(), T::max);
    let plan = TransportPlan {
        n_rows: n,
        n_cols: n,
        entries,
        row_marginal: mu.masses.clone(),
        col_marginal: nu.masses.clone(),
        cost_value: theta,
        raw_cost: theta,
        p: PlanExponent::Infinity,
        dual_row: None,
        dual_col: None,
        duality_gap: None,
        support_max_distance: support_max,
    };
    Ok((theta, plan))
}

/// Relative entropy `S(μ | ref) = Σ ρ log ρ ref = Σ μ_i log(μ_i / ref_i)`.
///
/// Returns `+∞` when `μ` puts mass where the reference has none, matching
/// the convention `S_t(μ) = ∞` off the absolutely continuous cone.
pub fn entropy<T: Scalar>(mu: &Measure<T>, reference: &Measure<T>) -> Result<T> {
    if mu.len() != reference.len() {
        return Err(Error::InvalidInput("entropy: dimension mismatch".into()));
    }
    let mut acc = T::zero();
    for (&m, &r) in mu.masses.iter().zip(&reference.masses) {
        if m <= T::zero() {
            continue;
        }
        if r <= T::zero() {
            return Ok(T::infinity());
        }
        acc = acc + m * (m / r).ln();
    }
    Ok(acc)
}

/// Quantile (inverse-CDF) interpolation between two grid measures, re-binned
/// to the grid with two-nearest-vertex linear weights.
pub fn quantile_geodesic_1d<T: Scalar>(
    space: &DynamicSpace<T>,
    mu0: &Measure<T>,
    mu1: &Measure<T>,
    a: T,
) -> Result<Measure<T>> {
    let Some(pos) = space.positions() else {
        return Err(Error::UnsupportedSpace(
            "quantile geodesic needs a 1D grid space".into(),
        ));
    };
    if !(a >= T::zero() && a <= T::one()) {
        return Err(Error::InvalidParameter(format!(
            "interpolation parameter must be in [0,1], got {}",
            a.to_f64_lossy()
        )));
    }
    if !mu0.check_normalized() || !mu1.check_normalized() || !mu0.normalized || !mu1.normalized {
        return Err(Error::InvalidMeasure("quantile geodesic expects probabilities".into()));
    }
    if a == T::zero() {
        return Ok(mu0.clone());
    }
    if a == T::one() {
        return Ok(mu1.clone());
    }
    let n = space.len();
    let dx = space.grid_spacing().unwrap();
    let lo = pos[0];
    let mut out = vec![T::zero(); n];
    let coupling = monotone_coupling(&pos.to_vec(), &mu0.masses, &mu1.masses);
    for (i, j, m) in coupling {
        let xi = (T::one() - a) * pos[i] + a * pos[j];
        let rel = ((xi - lo) / dx).max(T::zero());
        let k = rel.floor().to_usize().unwrap_or(0).min(n - 1);
        if k + 1 >= n {
            out[n - 1] = out[n - 1] + m;
            continue;
        }
        let lambda = (rel - T::from_usize_lossy(k)).max(T::zero()).min(T::one());
        out[k] = out[k] + m * (T::one() - lambda);
        out[k + 1] = out[k + 1] + m * lambda;
    }
    Ok(Measure { masses: out, normalized: true })
}

/// Outcome of the dynamic-convexity test along a quantile geodesic.
#[derive(Clone, Debug, serde::Serialize)]
pub struct ConvexityReport<T> {
    /// one-sided slope of `a ↦ S_t(μ^a)` at `a = 1`
    pub d_entropy_at_1: T,
    /// one-sided slope at `a = 0`
    pub d_entropy_at_0: T,
    /// backward difference `(W_t² - W_{t-δ}²)/δ`
    pub dt_w2_backward: T,
    pub w_t: T,
    pub w_t_minus: T,
    /// `∂_a S|_1 - ∂_a S|_0 + ½ ∂_t^- W²`
    pub slack: T,
    pub entropies: Vec<(T, T)>,
    /// set when an entropy along the interpolation is infinite
    pub inconclusive: bool,
    pub da: T,
    pub dt_step: T,
}

/// Checks `∂_a S_t(μ^a)|_1 - ∂_a S_t(μ^a)|_0 ≥ -½ ∂_t^- W_t²(μ⁰, μ¹)` with
/// one-sided difference quotients in `a` and a backward difference in `t`.
pub fn dynamic_convexity_check<T: Scalar>(
    space: &DynamicSpace<T>,
    mu0: &Measure<T>,
    mu1: &Measure<T>,
    t: T,
    da: T,
    dt_step: T,
) -> Result<ConvexityReport<T>> {
    if !(da > T::zero() && da < T::c(0.5)) {
        return Err(Error::InvalidParameter("da must lie in (0, 1/2)".into()));
    }
    space.check_time(t)?;
    space.check_time(t - dt_step)?;
    let reference = space.measure_at(t)?;
    let levels = [T::zero(), da, T::one() - da, T::one()];
    let mut entropies = Vec::with_capacity(4);
    let mut inconclusive = false;
    for &a in &levels {
        let mu_a = quantile_geodesic_1d(space, mu0, mu1, a)?;
        let s = entropy(&mu_a, &reference)?;
        if !s.is_finite() {
            inconclusive = true;
        }
        entropies.push((a, s));
    }
    let d1 = (entropies[3].1 - entropies[2].1) / da;
    let d0 = (entropies[1].1 - entropies[0].1) / da;

    let d_t = space.distance_at(t)?;
    let d_s = space.distance_at(t - dt_step)?;
    let (w_t, _) = wasserstein_p(&d_t, T::c(2.0), mu0, mu1)?;
    let (w_s, _) = wasserstein_p(&d_s, T::c(2.0), mu0, mu1)?;
    let dt_w2 = (w_t * w_t - w_s * w_s) / dt_step;
    let slack = d1 - d0 + T::c(0.5) * dt_w2;
    Ok(ConvexityReport {
        d_entropy_at_1: d1,
        d_entropy_at_0: d0,
        dt_w2_backward: dt_w2,
        w_t,
        w_t_minus: w_s,
        slack,
        entropies,
        inconclusive,
        da,
        dt_step,
    })
}
