//! Successive shortest paths for the dense transportation problem.
//!
//! Solves `min Σ c_ij γ_ij` over couplings of two mass vectors, returning the
//! optimal plan together with dual potentials `(α, β)` satisfying
//! `α_i + β_j ≤ c_ij` with equality on the support, so optimality can be
//! certified by an explicit duality gap.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub struct MinCostSolution<T> {
    /// sparse plan entries `(i, j, mass)`
    pub entries: Vec<(usize, usize, T)>,
    pub cost: T,
    pub dual_row: Vec<T>,
    pub dual_col: Vec<T>,
}

/// `cost` is row-major `nr × nc`; `supply` and `demand` must balance within
/// `1e-9 · max(1, total)`. Demands are rescaled to balance exactly.
pub fn solve_transportation<T: Scalar>(
    cost: &[T],
    nr: usize,
    nc: usize,
    supply: &[T],
    demand: &[T],
) -> Result<MinCostSolution<T>> {
    assert_eq!(cost.len(), nr * nc);
    assert_eq!(supply.len(), nr);
    assert_eq!(demand.len(), nc);
    let total_s: T = supply.iter().copied().sum();
    let total_d: T = demand.iter().copied().sum();
    let tol_balance = T::tol(1e-9) * T::one().max(total_s.abs());
    if (total_s - total_d).abs() > tol_balance {
        return Err(Error::UnbalancedInput((total_s - total_d).abs().to_f64_lossy()));
    }
    if total_s <= T::zero() {
        return Err(Error::InvalidMeasure("total mass must be positive".into()));
    }
    let rescale = total_s / total_d;
    let mut sup: Vec<T> = supply.to_vec();
    let mut dem: Vec<T> = demand.iter().map(|&d| d * rescale).collect();

    let eps = (T::c(1e-14).max(T::epsilon() * T::c(8.0))) * total_s;
    let n_nodes = nr + nc;
    let mut phi = vec![T::zero(); n_nodes];
    let mut flow = vec![T::zero(); nr * nc];

    let inf = T::infinity();
    let mut dist = vec![inf; n_nodes];
    let mut parent = vec![usize::MAX; n_nodes];
    let mut done = vec![false; n_nodes];

    let mut remaining = total_s;
    // most augmentations zero a supply or a demand, but near-tie metrics can
    // trigger degenerate reroutes through backward arcs, so the cap is loose
    let max_rounds = 40 * (nr + nc) + 200;
    let mut rounds = 0usize;
    while remaining > eps {
        rounds += 1;
        if rounds > max_rounds {
            return Err(Error::NumericalFailure(
                "min-cost flow failed to converge".into(),
            ));
        }
        // multi-source Dijkstra over reduced costs (dense, array-based)
        for v in 0..n_nodes {
            dist[v] = inf;
            parent[v] = usize::MAX;
            done[v] = false;
        }
        for i in 0..nr {
            if sup[i] > eps {
                dist[i] = T::zero();
            }
        }
        let mut target = usize::MAX;
        loop {
            let mut u = usize::MAX;
            let mut best = inf;
            for v in 0..n_nodes {
                if !done[v] && dist[v] < best {
                    best = dist[v];
                    u = v;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            if u >= nr && dem[u - nr] > eps {
                target = u;
                break;
            }
            if u < nr {
                // forward arcs i -> j, uncapacitated
                let i = u;
                let base = dist[u] + phi[i];
                for j in 0..nc {
                    let v = nr + j;
                    if done[v] {
                        continue;
                    }
                    let nd = base + cost[i * nc + j] - phi[v];
                    if nd < dist[v] {
                        dist[v] = nd;
                        parent[v] = u;
                    }
                }
            } else {
                // backward arcs j -> i for flow-carrying pairs
                let j = u - nr;
                let base = dist[u] + phi[u];
                for i in 0..nr {
                    if done[i] || flow[i * nc + j] <= T::zero() {
                        continue;
                    }
                    let nd = base - cost[i * nc + j] - phi[i];
                    if nd < dist[i] {
                        dist[i] = nd;
                        parent[i] = u;
                    }
                }
            }
        }
        if target == usize::MAX {
            return Err(Error::NumericalFailure(
                "no augmenting path in transportation solve".into(),
            ));
        }
        // potential update keeps reduced costs nonnegative
        let dt = dist[target];
        for v in 0..n_nodes {
            phi[v] = phi[v] + if dist[v] < dt { dist[v] } else { dt };
        }
        // trace path, find bottleneck
        let mut bottleneck = dem[target - nr];
        let mut v = target;
        loop {
            let p = parent[v];
            if p == usize::MAX {
                bottleneck = bottleneck.min(sup[v]);
                break;
            }
            if p < nr {
                // forward arc p -> v: no capacity bound
            } else {
                // backward arc p(-nr) <- v: bounded by existing flow
                let j = p - nr;
                let i = v;
                bottleneck = bottleneck.min(flow[i * nc + j]);
            }
            v = p;
        }
        // apply; residual dust on backward arcs is floored to keep the
        // augmentation count finite under degenerate reroutes
        let dust = eps * T::c(0.1);
        let mut v = target;
        loop {
            let p = parent[v];
            if p == usize::MAX {
                sup[v] = (sup[v] - bottleneck).max(T::zero());
                break;
            }
            if p < nr {
                let i = p;
                let j = v - nr;
                flow[i * nc + j] = flow[i * nc + j] + bottleneck;
            } else {
                let j = p - nr;
                let i = v;
                let f = flow[i * nc + j] - bottleneck;
                flow[i * nc + j] = if f < dust { T::zero() } else { f };
            }
            v = p;
        }
        dem[target - nr] = (dem[target - nr] - bottleneck).max(T::zero());
        remaining = remaining - bottleneck;
    }

    let mut entries = Vec::new();
    let mut total_cost = T::zero();
    for i in 0..nr {
        for j in 0..nc {
            let f = flow[i * nc + j];
            if f > T::zero() {
                entries.push((i, j, f));
                total_cost = total_cost + f * cost[i * nc + j];
            }
        }
    }
    let dual_row: Vec<T> = (0..nr).map(|i| -phi[i]).collect();
    let dual_col: Vec<T> = (0..nc).map(|j| phi[nr + j]).collect();
    Ok(MinCostSolution { entries, cost: total_cost, dual_row, dual_col })
}
