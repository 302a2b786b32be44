//! Exact balanced transportation problem by the transportation simplex
//! (the network simplex specialised to bipartite graphs).

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TransportError {
    #[error("supplies sum to {supply}, demands to {demand}")]
    Unbalanced { supply: f64, demand: f64 },
    #[error("masses must be finite and non-negative")]
    BadMass,
    #[error("no optimum after {0} pivots")]
    NoConvergence(usize),
}

const BALANCE_TOL: f64 = 1e-9;
const ZERO: f64 = 1e-15;

struct Basis {
    /// `(source, sink, flow)`; always `m + n - 1` entries forming a spanning tree.
    cells: Vec<(usize, usize, f64)>,
    m: usize,
    n: usize,
}

impl Basis {
    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.m + self.n];
        for (e, &(i, j, _)) in self.cells.iter().enumerate() {
            adj[i].push(e);
            adj[self.m + j].push(e);
        }
        adj
    }

    fn other(&self, e: usize, node: usize) -> usize {
        let (i, j, _) = self.cells[e];
        if node == i {
            self.m + j
        } else {
            i
        }
    }

    fn potentials(&self, adj: &[Vec<usize>], cost: &impl Fn(usize, usize) -> f64) -> (Vec<f64>, Vec<f64>) {
        let (m, n) = (self.m, self.n);
        let mut pot = vec![f64::NAN; m + n];
        pot[0] = 0.0;
        let mut stack = vec![0];
        while let Some(node) = stack.pop() {
            for &e in &adj[node] {
                let next = self.other(e, node);
                if pot[next].is_nan() {
                    let (i, j, _) = self.cells[e];
                    // c_ij = u_i + v_j
                    pot[next] = cost(i, j) - pot[node];
                    stack.push(next);
                }
            }
        }
        (pot[..m].to_vec(), pot[m..].to_vec())
    }

    /// Basis edges on the tree path from `from` to `to`, in walking order.
    fn path(&self, adj: &[Vec<usize>], from: usize, to: usize) -> Vec<usize> {
        let mut via = vec![usize::MAX; self.m + self.n];
        let mut seen = vec![false; self.m + self.n];
        seen[from] = true;
        let mut stack = vec![from];
        while let Some(node) = stack.pop() {
            if node == to {
                break;
            }
            for &e in &adj[node] {
                let next = self.other(e, node);
                if !seen[next] {
                    seen[next] = true;
                    via[next] = e;
                    stack.push(next);
                }
            }
        }
        let mut edges = Vec::new();
        let mut node = to;
        while node != from {
            let e = via[node];
            edges.push(e);
            node = self.other(e, node);
        }
        edges.reverse();
        edges
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Greedy cheapest-cell allocation, then zero-flow cells to complete a
/// spanning tree. Each allocation exhausts a source or a sink, so the
/// positive cells are already acyclic.
fn initial_basis(supply: &[f64], demand: &[f64], cost: &impl Fn(usize, usize) -> f64) -> Basis {
    let (m, n) = (supply.len(), demand.len());
    let mut order: Vec<(f64, usize, usize)> = (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| (cost(i, j), i, j)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let (mut a, mut b) = (supply.to_vec(), demand.to_vec());
    let mut parent: Vec<usize> = (0..m + n).collect();
    let mut cells = Vec::with_capacity(m + n - 1);
    for &(_, i, j) in &order {
        if a[i] <= ZERO || b[j] <= ZERO {
            continue;
        }
        let x = a[i].min(b[j]);
        if a[i] <= b[j] {
            b[j] -= x;
            a[i] = 0.0;
        } else {
            a[i] -= x;
            b[j] = 0.0;
        }
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, m + j));
        parent[ri] = rj;
        cells.push((i, j, x));
    }
    for &(_, i, j) in &order {
        if cells.len() == m + n - 1 {
            break;
        }
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, m + j));
        if ri != rj {
            parent[ri] = rj;
            cells.push((i, j, 0.0));
        }
    }
    Basis { cells, m, n }
}

/// Minimum total `flow * cost` moving `supply` onto `demand`. Both sides
/// must carry the same total mass within 1e-9; the demand side is rescaled
/// to match exactly.
pub fn transport_cost(supply: &[f64], demand: &[f64], cost: impl Fn(usize, usize) -> f64) -> Result<f64, TransportError> {
    if supply.iter().chain(demand).any(|v| !v.is_finite() || *v < 0.0) {
        return Err(TransportError::BadMass);
    }
    let (sa, sb): (f64, f64) = (supply.iter().sum(), demand.iter().sum());
    if (sa - sb).abs() > BALANCE_TOL * sa.max(sb).max(1.0) {
        return Err(TransportError::Unbalanced { supply: sa, demand: sb });
    }
    if supply.is_empty() || demand.is_empty() || sa == 0.0 {
        return Ok(0.0);
    }
    let demand: Vec<f64> = demand.iter().map(|v| v * sa / sb).collect();
    let (m, n) = (supply.len(), demand.len());
    let mut basis = initial_basis(supply, &demand, &cost);
    let scale = (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).fold(0.0f64, |acc, (i, j)| acc.max(cost(i, j).abs()));
    let tol = 1e-12 * scale.max(1.0);
    let block = (m / 8).max(1);
    let mut start_row = 0;
    let limit = 50 * (m + n) * (m + n) + 1000;
    for _ in 0..limit {
        let adj = basis.adjacency();
        let (u, v) = basis.potentials(&adj, &cost);
        // block pricing: stop at the first block of rows holding an improving cell
        let mut best: Option<(f64, usize, usize)> = None;
        for step in 0..m {
            let i = (start_row + step) % m;
            for j in 0..n {
                let r = cost(i, j) - u[i] - v[j];
                if r < -tol && best.map_or(true, |(b, _, _)| r < b) {
                    best = Some((r, i, j));
                }
            }
            if best.is_some() && (step + 1) % block == 0 {
                start_row = (i + 1) % m;
                break;
            }
        }
        let Some((_, i, j)) = best else {
            return Ok(basis.cells.iter().map(|&(i, j, x)| x * cost(i, j)).sum());
        };
        // cycle: entering cell (+), then alternating along the tree path from sink j back to source i
        let path = basis.path(&adj, m + j, i);
        let mut leave = path[0];
        for &e in path.iter().step_by(2) {
            if basis.cells[e].2 < basis.cells[leave].2 {
                leave = e;
            }
        }
        let theta = basis.cells[leave].2;
        for (k, &e) in path.iter().enumerate() {
            let x = &mut basis.cells[e].2;
            *x = if k % 2 == 0 { (*x - theta).max(0.0) } else { *x + theta };
        }
        basis.cells[leave] = (i, j, theta);
    }
    Err(TransportError::NoConvergence(limit))
}
