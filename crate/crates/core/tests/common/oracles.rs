//! Independent reference solutions for the metric tests.

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use raybot::eval::Heatmap;

/// Transport cost between two heatmaps solved as a plain dense LP over
/// every cell pair.
pub fn lp_emd_2d(p: &Heatmap, q: &Heatmap) -> f64 {
    let n = p.cells.len();
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let pos = |k: usize| ((k % p.width) as f64, (k / p.width) as f64);
    let mut vars = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let (a, b) = (pos(i), pos(j));
            vars.push(lp.add_var((a.0 - b.0).hypot(a.1 - b.1), (0.0, f64::INFINITY)));
        }
    }
    for i in 0..n {
        let row: Vec<_> = (0..n).map(|j| (vars[i * n + j], 1.0)).collect();
        lp.add_constraint(row.as_slice(), ComparisonOp::Eq, p.cells[i]);
    }
    for j in 0..n {
        let col: Vec<_> = (0..n).map(|i| (vars[i * n + j], 1.0)).collect();
        lp.add_constraint(col.as_slice(), ComparisonOp::Eq, q.cells[j]);
    }
    lp.solve().expect("balanced transport LP is feasible").objective()
}

/// 1D transport between two histograms on unit-spaced buckets, as an LP.
pub fn lp_emd_1d(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let mut vars = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            vars.push(lp.add_var((i as f64 - j as f64).abs(), (0.0, f64::INFINITY)));
        }
    }
    for i in 0..n {
        let row: Vec<_> = (0..n).map(|j| (vars[i * n + j], 1.0)).collect();
        lp.add_constraint(row.as_slice(), ComparisonOp::Eq, a[i]);
        let col: Vec<_> = (0..n).map(|k| (vars[k * n + i], 1.0)).collect();
        lp.add_constraint(col.as_slice(), ComparisonOp::Eq, b[i]);
    }
    lp.solve().expect("feasible").objective()
}

/// JS divergence as entropy of the mixture minus mean entropy.
pub fn js_by_entropy(p: &[f64], q: &[f64]) -> f64 {
    let h = |v: &mut dyn Iterator<Item = f64>| -> f64 { v.filter(|&x| x > 0.0).map(|x| -x * x.ln()).sum() };
    let hm = h(&mut p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)));
    hm - 0.5 * (h(&mut p.iter().copied()) + h(&mut q.iter().copied()))
}
