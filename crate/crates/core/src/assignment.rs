//! Exact solvers for the optimal-transport problems behind the
//! 1-Wasserstein distance.
//!
//! Two paths:
//! - [`solve_assignment`]: linear sum assignment (uniform weights, equal
//!   point counts) by shortest augmenting paths with dual potentials,
//!   O(n^3).
//! - [`solve_transport`]: the transportation problem (general
//!   non-negative marginals) by successive shortest paths on the
//!   bipartite residual graph with node potentials.
//!
//! Both return exact optima up to floating-point arithmetic; the
//! transportation solver also returns the dual variables so optimality
//! can be certified (`sum a_i u_i + sum b_j v_j = cost`).

// Index-based loops mirror the augmenting-path bookkeeping (swap-removal
// from `remaining`, parallel dual arrays).
#![allow(clippy::needless_range_loop)]

use crate::error::{Error, Result};

/// Compensated (Neumaier) summation; used for cost totals.
pub(crate) fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Solves the square linear sum assignment problem for the row-major
/// `n x n` matrix `cost`, returning `col_of_row`.
pub(crate) fn solve_assignment(n: usize, cost: &[f64]) -> Result<Vec<usize>> {
    assert_eq!(cost.len(), n * n);
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::domain("assignment costs must be finite"));
    }
    const FREE: usize = usize::MAX;

    let mut u = vec![0.0f64; n];
    let mut v = vec![0.0f64; n];
    let mut col_of_row = vec![FREE; n];
    let mut row_of_col = vec![FREE; n];

    let mut shortest = vec![0.0f64; n];
    let mut path = vec![FREE; n];
    let mut visited_rows = vec![false; n];
    let mut visited_cols = vec![false; n];
    let mut remaining = vec![0usize; n];

    for start_row in 0..n {
        // Dijkstra over columns for the shortest augmenting path from
        // start_row to an unassigned column, in reduced costs.
        shortest.iter_mut().for_each(|d| *d = f64::INFINITY);
        visited_rows.iter_mut().for_each(|b| *b = false);
        visited_cols.iter_mut().for_each(|b| *b = false);
        // Reverse fill keeps the identity matching on constant costs.
        for (k, slot) in remaining.iter_mut().enumerate() {
            *slot = n - 1 - k;
        }
        let mut n_remaining = n;
        let mut min_val = 0.0f64;
        let mut i = start_row;
        let mut sink = FREE;

        while sink == FREE {
            visited_rows[i] = true;
            let mut lowest = f64::INFINITY;
            let mut index = FREE;
            for it in 0..n_remaining {
                let j = remaining[it];
                let reduced = min_val + cost[i * n + j] - u[i] - v[j];
                if reduced < shortest[j] {
                    shortest[j] = reduced;
                    path[j] = i;
                }
                // Prefer a fresh sink on ties so degenerate matrices

                // still augment.
                if shortest[j] < lowest || (shortest[j] == lowest && row_of_col[j] == FREE) {
                    lowest = shortest[j];
                    index = it;
                }
            }
            if lowest.is_infinite() {
                return Err(Error::domain("assignment problem is infeasible"));
            }
            min_val = lowest;
            let j = remaining[index];
            if row_of_col[j] == FREE {
                sink = j;
            } else {
                i = row_of_col[j];
            }
            visited_cols[j] = true;
            n_remaining -= 1;
            remaining[index] = remaining[n_remaining];
        }

        u[start_row] += min_val;
        for r in 0..n {
            if visited_rows[r] && r != start_row {
                u[r] += min_val - shortest[col_of_row[r]];
            }
        }
        for c in 0..n {
            if visited_cols[c] {
                v[c] -= min_val - shortest[c];
            }
        }

        let mut j = sink;
        loop {
            let r = path[j];
            row_of_col[j] = r;
            std::mem::swap(&mut col_of_row[r], &mut j);
            if r == start_row {
                break;
            }
        }
    }
    Ok(col_of_row)
}

/// Optimal flow for a transportation problem together with the dual
/// variables certifying optimality (the certificate is exercised by the
/// tests; production callers read only the cost).
#[derive(Debug, Clone)]
#[cfg_attr(not(test), allow(dead_code))]
pub(crate) struct TransportSolution {
    pub cost: f64,
    /// Positive flow entries `(source, sink, amount)`.
    pub flows: Vec<(usize, usize, f64)>,
    pub source_duals: Vec<f64>,
    pub sink_duals: Vec<f64>,
}

/// Solves `min sum_ij c_ij f_ij` subject to row sums `supply` and column
/// sums `demand` (non-negative, equal totals) by successive shortest
/// paths with potentials. Costs must be non-negative.
pub(crate) fn solve_transport(
    supply: &[f64],
    demand: &[f64],
    cost: &dyn Fn(usize, usize) -> f64,
) -> Result<TransportSolution> {
    let n = supply.len();
    let m = demand.len();
    if n == 0 || m == 0 {
        return Err(Error::domain("transportation marginals must be nonempty"));
    }
    if supply
        .iter()
        .chain(demand.iter())
        .any(|&w| w < 0.0 || !w.is_finite())
    {
        return Err(Error::domain("marginal weights must be non-negative"));
    }

    let mut a = supply.to_vec();
    let mut b = demand.to_vec();
    let mut flow = vec![0.0f64; n * m];
    // Node potentials: sources 0..n, sinks n..n+m.
    let mut pi = vec![0.0f64; n + m];
    let mut dist = vec![0.0f64; n + m];
    let mut parent = vec![usize::MAX; n + m];
    let mut done = vec![false; n + m];

    // The marginal totals agree only up to rounding; mass below this
    // residual is left unshipped rather than declared infeasible.
    let total: f64 = neumaier_sum(supply.iter().copied());
    let mass_tol = 1e-11 * (1.0 + total);

    let cap = 4 * (n + m) * (n + m) + n * m;
    let mut rounds = 0;
    while neumaier_sum(a.iter().copied()) > mass_tol && b.iter().any(|&r| r > 0.0) {
        rounds += 1;
        if rounds > cap {
            return Err(Error::domain(
                "internal: transportation solve exceeded its iteration cap",
            ));
        }

        // Dense multi-source Dijkstra in reduced costs.
        for x in 0..n + m {
            dist[x] = f64::INFINITY;
            parent[x] = usize::MAX;
            done[x] = false;
        }
        for (i, &rem) in a.iter().enumerate() {
            if rem > 0.0 {
                dist[i] = 0.0;
            }
        }
        for _ in 0..n + m {
            let mut best = f64::INFINITY;
            let mut x = usize::MAX;
            for (node, &d) in dist.iter().enumerate() {
                if !done[node] && d < best {
                    best = d;
                    x = node;
                }
            }
            if x == usize::MAX {
                break;
            }
            done[x] = true;
            if x < n {
                let i = x;
                for j in 0..m {
                    let rc = cost(i, j) + pi[i] - pi[n + j];
                    let cand = dist[i] + rc.max(0.0);
                    if cand < dist[n + j] {
                        dist[n + j] = cand;
                        parent[n + j] = i;
                    }
                }
            } else {
                let j = x - n;
                for i in 0..n {
                    if flow[i * m + j] > 0.0 {
                        let rc = -cost(i, j) - pi[i] + pi[n + j];
                        let cand = dist[n + j] + rc.max(0.0);
                        if cand < dist[i] {
                            dist[i] = cand;
                            parent[i] = n + j;
                        }
                    }
                }
            }
        }

        let mut target = usize::MAX;
        let mut dmin = f64::INFINITY;
        for (j, &rem) in b.iter().enumerate() {
            if rem > 0.0 && dist[n + j] < dmin {
                dmin = dist[n + j];
                target = j;
            }
        }
        if target == usize::MAX {
            return Err(Error::domain("transportation problem is infeasible"));
        }
        for x in 0..n + m {
            pi[x] += dist[x].min(dmin);
        }

        // Bottleneck along the augmenting path.
        let mut delta = b[target];
        let mut x = n + target;
        loop {
            let p = parent[x];
            if p == usize::MAX {
                delta = delta.min(a[x]);
                break;
            }
            if x >= n {
                // forward arc p -> x carries no capacity bound
            } else {
                delta = delta.min(flow[x * m + (p - n)]);
            }
            x = p;
        }

        // Apply the augmentation.
        let mut x = n + target;
        loop {
            let p = parent[x];
            if p == usize::MAX {
                a[x] -= delta;
                if a[x] < 0.0 {
                    a[x] = 0.0;
                }
                break;
            }
            if x >= n {
                flow[p * m + (x - n)] += delta;
            } else {
                flow[x * m + (p - n)] -= delta;
                if flow[x * m + (p - n)] < 0.0 {
                    flow[x * m + (p - n)] = 0.0;
                }
            }
            x = p;
        }
        b[target] -= delta;
        if b[target] < 0.0 {
            b[target] = 0.0;
        }
    }

    let mut flows = Vec::new();
    for i in 0..n {
        for j in 0..m {
            if flow[i * m + j] > 0.0 {
                flows.push((i, j, flow[i * m + j]));
            }
        }
    }
    let total = neumaier_sum(flows.iter().map(|&(i, j, f)| f * cost(i, j)));
    // Duals of the LP max sum a u + sum b v s.t. u_i + v_j <= c_ij.
    let source_duals: Vec<f64> = (0..n).map(|i| -pi[i]).collect();
    let sink_duals: Vec<f64> = (0..m).map(|j| pi[n + j]).collect();
    Ok(TransportSolution {
        cost: total,
        flows,
        source_duals,
        sink_duals,
    })
}
