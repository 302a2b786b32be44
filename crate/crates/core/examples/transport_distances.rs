//! Distances between small hand-made heatmaps: the four-cell shift, a
//! split mass, and the location-free variant that ignores where cells are.

use raybot::eval::{asd, emd_1d_no_location, emd_2d, transport_cost, Heatmap};

fn grid(w: usize, h: usize, mass: &[(usize, usize, f64)]) -> Heatmap {
    let mut c = vec![0.0; w * h];
    for &(x, y, m) in mass {
        c[y * w + x] += m;
    }
    Heatmap::from_counts(w, h, 1.0, [0.0, 0.0], &c).unwrap()
}

fn main() {
    let a = grid(5, 5, &[(0, 0, 1.0)]);
    let b = grid(5, 5, &[(4, 0, 1.0)]);
    println!("all mass (0,0) -> (4,0): EMD-2D {}", emd_2d(&a, &b).unwrap());
    println!("same pair: ASD {} and EMD-1D {} (both maps hold one full cell)", asd(&a, &b).unwrap(), emd_1d_no_location(&a, &b, 10).unwrap());

    let split = grid(5, 5, &[(0, 4, 0.5), (4, 4, 0.5)]);
    println!("(0,0) -> half at (0,4), half at (4,4): EMD-2D {:.4}", emd_2d(&a, &split).unwrap());
    println!("  expected 0.5 * 4 + 0.5 * sqrt(32) = {:.4}", 2.0 + 0.5 * 32f64.sqrt());

    // the solver underneath works on any cost function
    let cost = transport_cost(&[0.7, 0.3], &[0.2, 0.2, 0.6], |i, j| (i as f64 - j as f64).abs()).unwrap();
    println!("1D transport of [0.7, 0.3] onto [0.2, 0.2, 0.6]: {cost:.2}");
}
