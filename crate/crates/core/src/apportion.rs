//! Integer apportionment of a total across weighted categories.
//!
//! Three rounding rules are used by the pipeline:
//!
//! * [`largest_remainder`]: floors first, leftover units go to the largest
//!   fractional parts, ties to the earlier category. Deterministic.
//! * [`stochastic_round`]: floors first, leftover units are placed by
//!   seeded systematic sampling so that category `i` receives its extra unit
//!   with probability equal to its fractional part. The expected allocation
//!   is exactly `total * weight`, which keeps repeated small draws unbiased.
//! * [`controlled_round`]: rounds a table of row totals times column
//!   fractions so that every cell, every row total and every column total is
//!   the floor or ceiling of its exact target.

use rand::Rng;

const EPS: f64 = 1e-9;

fn quotas(total: usize, weights: &[f64]) -> Vec<f64> {
    let sum: f64 = weights.iter().sum();
    debug_assert!(weights.iter().all(|w| *w >= 0.0), "weights must be nonnegative");
    if total == 0 || sum <= 0.0 {
        return vec![0.0; weights.len()];
    }
    weights.iter().map(|w| total as f64 * w / sum).collect()
}

fn floors(quotas: &[f64]) -> Vec<usize> {
    quotas.iter().map(|q| (q + EPS).floor() as usize).collect()
}

/// Largest-remainder (Hamilton) apportionment of `total` by `weights`.
///
/// Weights need not be normalized. An all-zero weight vector yields all
/// zeros.
pub fn largest_remainder(total: usize, weights: &[f64]) -> Vec<usize> {
    let quotas = quotas(total, weights);
    let mut alloc = floors(&quotas);
    let assigned: usize = alloc.iter().sum();
    if quotas.iter().all(|q| *q == 0.0) {
        return alloc;
    }
    let leftover = total.saturating_sub(assigned);
    let mut order: Vec<usize> = (0..weights.len()).collect();
    // stable sort keeps index order on ties
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - alloc[a] as f64;
        let rb = quotas[b] - alloc[b] as f64;
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal)
    });
    for &i in order.iter().take(leftover) {
        alloc[i] += 1;
    }
    alloc
}

/// Unbiased randomized rounding of `total` by `weights`.
///
/// Each category gets the floor or the ceiling of its quota and the
/// allocations always sum to `total`.
pub fn stochastic_round<R: Rng + ?Sized>(total: usize, weights: &[f64], rng: &mut R) -> Vec<usize> {
    let quotas = quotas(total, weights);
    let mut alloc = floors(&quotas);
    if quotas.iter().all(|q| *q == 0.0) {
        return alloc;
    }
    let leftover = total.saturating_sub(alloc.iter().sum());
    if leftover == 0 {
        return alloc;
    }
    let remainders: Vec<f64> = quotas
        .iter()
        .zip(&alloc)
        .map(|(q, a)| (q - *a as f64).max(0.0))
        .collect();
    // Systematic sampling: points u, u+1, ..., u+leftover-1 on the cumulative
    // remainder line. Each remainder is < 1, so a category is hit at most once.
    let offset: f64 = rng.random();
    let mut next_point = offset;
    let mut cumulative = 0.0;
    let mut placed = 0;
    for (i, r) in remainders.iter().enumerate() {
        let end = cumulative + r;
        if placed < leftover && *r > 0.0 && next_point < end {
            alloc[i] += 1;
            placed += 1;
            next_point += 1.0;
        }
        cumulative = end;
    }
    // Float drift can leave the last point just past the end of the line.
    let mut i = remainders.len();
    while placed < leftover && i > 0 {
        i -= 1;
        if remainders[i] > 0.0 && (alloc[i] as f64) < quotas[i] {
            alloc[i] += 1;
            placed += 1;
        }
    }
    alloc
}

/// Round `row_totals[r] * fractions[c]` to integers.
///
/// Guarantees, for fractions summing to one:
/// * each row sums exactly to its total,
/// * each cell is the floor or ceiling of its exact target,
/// * each column sums to the floor or ceiling of its exact column target,
///   and where feasible to [`largest_remainder`] of the grand total.
///
/// Leftover units prefer the cells with the largest fractional parts and,
/// among equal parts, the earlier column. A single row therefore reproduces
/// [`largest_remainder`].
pub fn controlled_round(row_totals: &[usize], fractions: &[f64]) -> Vec<Vec<usize>> {
    let cols = fractions.len();
    let targets: Vec<Vec<f64>> = row_totals.iter().map(|&t| quotas(t, fractions)).collect();
    let mut cells: Vec<Vec<usize>> = targets.iter().map(|q| floors(q)).collect();
    if row_totals.len() == 1 {
        return vec![largest_remainder(row_totals[0], fractions)];
    }

    let remainders: Vec<Vec<f64>> = targets
        .iter()
        .zip(&cells)
        .map(|(q, f)| q.iter().zip(f).map(|(q, f)| q - *f as f64).collect())
        .collect();
    let leftovers: Vec<usize> = row_totals
        .iter()
        .zip(&cells)
        .map(|(t, f)| t.saturating_sub(f.iter().sum()))
        .collect();
    let col_rem: Vec<f64> = (0..cols).map(|c| remainders.iter().map(|r| r[c]).sum()).collect();
    let col_lo: Vec<usize> = col_rem.iter().map(|r| (r + 1e-6).floor() as usize).collect();
    let col_hi: Vec<usize> = col_rem.iter().map(|r| (r - 1e-6).ceil().max(0.0) as usize).collect();
    let overall = largest_remainder(row_totals.iter().sum(), fractions);
    let col_want: Vec<usize> = (0..cols)
        .map(|c| {
            let floor_sum: usize = cells.iter().map(|row| row[c]).sum();
            overall[c].saturating_sub(floor_sum).clamp(col_lo[c], col_hi[c].max(col_lo[c]))
        })
        .collect();

    // Node layout: 0 = source, 1 = sink, rows, then columns.
    let rows = row_totals.len();
    let mut net = FlowNetwork::new(2 + rows + cols);
    let col_node = |c: usize| 2 + rows + c;
    let mut cell_edges = Vec::new();
    for r in 0..rows {
        net.add_edge(0, 2 + r, leftovers[r]);
        let mut order: Vec<usize> = (0..cols).filter(|&c| remainders[r][c] > EPS).collect();
        order.sort_by(|&a, &b| {
            remainders[r][b]
                .partial_cmp(&remainders[r][a])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        for c in order {
            let e = net.add_edge(2 + r, col_node(c), 1);
            cell_edges.push((r, c, e));
        }
    }
    let sink_edges: Vec<usize> = (0..cols).map(|c| net.add_edge(col_node(c), 1, col_lo[c])).collect();
    // Flow on a sink edge never shrinks, so each phase keeps the last one's bounds.
    net.max_flow(0, 1);
    for bound in [&col_want, &col_hi] {
        for (c, &e) in sink_edges.iter().enumerate() {
            net.raise_capacity(e, bound[c]);
        }
        net.max_flow(0, 1);
    }
    let needed: usize = leftovers.iter().sum();
    let flow: usize = sink_edges.iter().map(|&e| net.flow_on(e)).sum();
    if flow < needed {
        // Numerical edge case: drop the column bounds rather than lose units.
        for &e in &sink_edges {
            net.raise_capacity(e, needed);
        }
        net.max_flow(0, 1);
    }
    for (r, c, e) in cell_edges {
        cells[r][c] += net.flow_on(e);
    }
    cells
}

struct Edge {
    to: usize,
    cap: i64,
    flow: i64,
    rev: usize,
}

struct FlowNetwork {
    adj: Vec<Vec<Edge>>,
    handles: Vec<(usize, usize)>,
}

impl FlowNetwork {
    fn new(nodes: usize) -> Self {
        Self { adj: (0..nodes).map(|_| Vec::new()).collect(), handles: Vec::new() }
    }

    fn add_edge(&mut self, from: usize, to: usize, cap: usize) -> usize {
        let fwd = self.adj[from].len();
        let back = self.adj[to].len();
        self.adj[from].push(Edge { to, cap: cap as i64, flow: 0, rev: back });
        self.adj[to].push(Edge { to: from, cap: 0, flow: 0, rev: fwd });
        self.handles.push((from, fwd));
        self.handles.len() - 1
    }

    fn raise_capacity(&mut self, handle: usize, cap: usize) {
        let (node, idx) = self.handles[handle];
        let edge = &mut self.adj[node][idx];
        edge.cap = edge.cap.max(cap as i64);
    }

    fn flow_on(&self, handle: usize) -> usize {
        let (node, idx) = self.handles[handle];
        self.adj[node][idx].flow.max(0) as usize
    }

    /// Edmonds-Karp from the current flow.
    fn max_flow(&mut self, source: usize, sink: usize) {
        loop {
            let mut parent: Vec<Option<(usize, usize)>> = vec![None; self.adj.len()];
            let mut seen = vec![false; self.adj.len()];
            let mut queue = std::collections::VecDeque::from([source]);
            seen[source] = true;
            while let Some(u) = queue.pop_front() {
                if u == sink {
                    break;
                }
                for (i, e) in self.adj[u].iter().enumerate() {
                    if !seen[e.to] && e.cap - e.flow > 0 {
                        seen[e.to] = true;
                        parent[e.to] = Some((u, i));
                        queue.push_back(e.to);
                    }
                }
            }
            if !seen[sink] {
                return;
            }
            let mut bottleneck = i64::MAX;
            let mut v = sink;
            while let Some((u, i)) = parent[v] {
                let e = &self.adj[u][i];
                bottleneck = bottleneck.min(e.cap - e.flow);
                v = u;
            }
            let mut v = sink;
            while let Some((u, i)) = parent[v] {
                let rev = self.adj[u][i].rev;
                self.adj[u][i].flow += bottleneck;
                self.adj[v][rev].flow -= bottleneck;
                v = u;
            }
        }
    }
}
