mod common;

use common::oracles::{js_by_entropy, lp_emd_1d, lp_emd_2d};
use num_rational::Ratio;
use proptest::prelude::*;
use raybot::eval::{
    asd, emd_1d_no_location, emd_2d, histogram, histogram_pair, js, kl, ramp, transport_cost, BucketSpec, Heatmap,
    Histogram,
};
use std::f64::consts::LN_2;

fn hist(edges: usize, mass: Vec<f64>) -> Histogram {
    let total: f64 = mass.iter().sum();
    Histogram {
        bucket_edges: (0..=edges).map(|k| k as f64).collect(),
        probabilities: mass.iter().map(|m| m / total).collect(),
        sample_count: 1,
    }
}

fn heatmap_strategy() -> impl Strategy<Value = (usize, usize, Vec<f64>, Vec<f64>)> {
    (1usize..=6, 1usize..=6).prop_flat_map(|(w, h)| {
        let cell = prop_oneof![1 => Just(0.0), 3 => 0.0f64..10.0];
        (Just(w), Just(h), prop::collection::vec(cell.clone(), w * h), prop::collection::vec(cell, w * h))
    })
}

fn normalized(w: usize, h: usize, mut c: Vec<f64>) -> Heatmap {
    if c.iter().sum::<f64>() == 0.0 {
        c[0] = 1.0;
    }
    Heatmap::from_counts(w, h, 1.0, [0.0, 0.0], &c).unwrap()
}

fn mass_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..12).prop_flat_map(|n| {
        let m = prop_oneof![1 => Just(0.0), 4 => 0.0f64..1.0];
        (prop::collection::vec(m.clone(), n), prop::collection::vec(m, n))
    })
    .prop_filter("both sides carry mass", |(a, b)| a.iter().sum::<f64>() > 0.0 && b.iter().sum::<f64>() > 0.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn js_is_zero_on_itself_symmetric_and_bounded((a, b) in mass_pair()) {
        let n = a.len();
        let (p, q) = (hist(n, a), hist(n, b));
        prop_assert_eq!(js(&p, &p).unwrap(), 0.0);
        let (pq, qp) = (js(&p, &q).unwrap(), js(&q, &p).unwrap());
        prop_assert!((pq - qp).abs() <= 1e-12);
        prop_assert!((0.0..=LN_2).contains(&pq));
        prop_assert!((pq - js_by_entropy(&p.probabilities, &q.probabilities).clamp(0.0, LN_2)).abs() < 1e-12);
    }

    #[test]
    fn js_of_disjoint_supports_is_ln2((a, b) in mass_pair()) {
        let n = a.len();
        let pad = |v: &[f64], front: bool| {
            let z = vec![0.0; n];
            if front { [v, &z[..]].concat() } else { [&z[..], v].concat() }
        };
        let p = hist(2 * n, pad(&a, true));
        let q = hist(2 * n, pad(&b, false));
        prop_assert!((js(&p, &q).unwrap() - LN_2).abs() < 1e-15);
    }

    #[test]
    fn kl_is_nonnegative_and_infinite_off_support((a, b) in mass_pair()) {
        let n = a.len();
        let (p, q) = (hist(n, a.clone()), hist(n, b.clone()));
        let d = kl(&p, &q).unwrap();
        let escapes = a.iter().zip(&b).any(|(x, y)| *x > 0.0 && *y == 0.0);
        prop_assert_eq!(d.is_infinite(), escapes);
        prop_assert!(d >= -1e-12);
    }

    #[test]
    fn histogram_matches_exact_rationals(values in prop::collection::vec(-20i64..40, 1..60)) {
        let xs: Vec<f64> = values.iter().map(|&v| v as f64).collect();
        let h = histogram(&xs, BucketSpec::INTEGER).unwrap();
        let lo = *values.iter().min().unwrap();
        let hi = *values.iter().max().unwrap();
        prop_assert_eq!(h.probabilities.len() as i64, hi - lo + 1);
        for (k, p) in h.probabilities.iter().enumerate() {
            let count = values.iter().filter(|&&v| v == lo + k as i64).count() as i64;
            let exact = Ratio::new(count, values.len() as i64);
            prop_assert_eq!(*p, *exact.numer() as f64 / *exact.denom() as f64);
        }
        let total: Ratio<i64> = h.probabilities.iter().map(|p| Ratio::approximate_float(*p).unwrap()).sum();
        prop_assert!((total - Ratio::from_integer(1)).to_integer() == 0);
    }

    #[test]
    fn emd_2d_matches_lp((w, h, a, b) in heatmap_strategy()) {
        let (p, q) = (normalized(w, h, a), normalized(w, h, b));
        let got = emd_2d(&p, &q).unwrap();
        let want = lp_emd_2d(&p, &q);
        prop_assert!((got - want).abs() <= 1e-6, "{} vs {}", got, want);
    }

    #[test]
    fn emd_2d_is_a_metric((w, h, a, b) in heatmap_strategy(), c in prop::collection::vec(0.0f64..10.0, 36)) {
        let (p, q) = (normalized(w, h, a), normalized(w, h, b));
        let r = normalized(w, h, c[..w * h].to_vec());
        prop_assert!(emd_2d(&p, &p).unwrap().abs() < 1e-12);
        let (pq, qp) = (emd_2d(&p, &q).unwrap(), emd_2d(&q, &p).unwrap());
        prop_assert!((pq - qp).abs() < 1e-9);
        prop_assert!(pq <= emd_2d(&p, &r).unwrap() + emd_2d(&r, &q).unwrap() + 1e-9);
        prop_assert!(asd(&p, &q).unwrap() <= 2.0 + 1e-12);
    }

    #[test]
    fn emd_1d_matches_lp_on_bucketed_values((w, h, a, b) in heatmap_strategy(), n in 1usize..12) {
        let (p, q) = (normalized(w, h, a), normalized(w, h, b));
        let got = emd_1d_no_location(&p, &q, n).unwrap();
        // oracle bucketing: joint range split into n equal buckets, top edge inclusive
        let lo = p.cells.iter().chain(&q.cells).copied().fold(f64::INFINITY, f64::min);
        let hi = p.cells.iter().chain(&q.cells).copied().fold(f64::NEG_INFINITY, f64::max);
        let bucket_hist = |cells: &[f64]| {
            let mut hgt = vec![0.0; n];
            for &v in cells {
                let k = if hi > lo { (((v - lo) / (hi - lo) * n as f64) as usize).min(n - 1) } else { 0 };
                hgt[k] += 1.0 / cells.len() as f64;
            }
            hgt
        };
        let want = lp_emd_1d(&bucket_hist(&p.cells), &bucket_hist(&q.cells));
        prop_assert!((got - want).abs() <= 1e-6, "{} vs {}", got, want);
    }

    #[test]
    fn transport_matches_lp_on_rectangular_problems(
        a in prop::collection::vec(0.0f64..5.0, 1..7),
        b in prop::collection::vec(0.0f64..5.0, 1..7),
        seed in any::<u64>(),
    ) {
        prop_assume!(a.iter().sum::<f64>() > 0.0 && b.iter().sum::<f64>() > 0.0);
        let sa: f64 = a.iter().sum();
        let sb: f64 = b.iter().sum();
        let b: Vec<f64> = b.iter().map(|v| v * sa / sb).collect();
        let cost = |i: usize, j: usize| ((seed >> ((i * 7 + j) % 60)) & 0xff) as f64 / 16.0;
        let got = transport_cost(&a, &b, cost).unwrap();
        let mut lp = minilp::Problem::new(minilp::OptimizationDirection::Minimize);
        let vars: Vec<Vec<_>> = (0..a.len()).map(|i| (0..b.len()).map(|j| lp.add_var(cost(i, j), (0.0, f64::INFINITY))).collect()).collect();
        for (i, row) in vars.iter().enumerate() {
            let r: Vec<_> = row.iter().map(|&v| (v, 1.0)).collect();
            lp.add_constraint(r.as_slice(), minilp::ComparisonOp::Eq, a[i]);
        }
        for j in 0..b.len() {
            let c: Vec<_> = vars.iter().map(|row| (row[j], 1.0)).collect();
            lp.add_constraint(c.as_slice(), minilp::ComparisonOp::Eq, b[j]);
        }
        let want = lp.solve().unwrap().objective();
        prop_assert!((got - want).abs() <= 1e-6 * want.abs().max(1.0), "{} vs {}", got, want);
    }
}

fn point(w: usize, h: usize, x: usize, y: usize) -> Heatmap {
    let mut c = vec![0.0; w * h];
    c[y * w + x] = 1.0;
    Heatmap::from_counts(w, h, 1.0, [0.0, 0.0], &c).unwrap()
}

#[test]
fn moving_all_mass_four_cells_costs_four() {
    assert_eq!(emd_2d(&point(5, 5, 0, 0), &point(5, 5, 4, 0)).unwrap(), 4.0);
}

#[test]
fn diagonal_shift_costs_euclidean_distance() {
    let d = emd_2d(&point(4, 4, 0, 0), &point(4, 4, 3, 3)).unwrap();
    assert!((d - 18f64.sqrt()).abs() < 1e-12);
}

#[test]
fn emd_rejects_unnormalized_input() {
    let p = point(2, 2, 0, 0);
    let mut q = point(2, 2, 1, 1);
    q.cells[3] = 0.5;
    assert!(emd_2d(&p, &q).is_err());
}

#[test]
fn histogram_pair_shares_edges_over_union_support() {
    let (p, q) = histogram_pair(&[0.0, 1.0], &[3.0], BucketSpec::INTEGER).unwrap();
    assert_eq!(p.bucket_edges, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
    assert_eq!(p.bucket_edges, q.bucket_edges);
    assert_eq!(p.probabilities, vec![0.5, 0.5, 0.0, 0.0]);
    assert_eq!(q.probabilities, vec![0.0, 0.0, 0.0, 1.0]);
    assert!((js(&p, &q).unwrap() - LN_2).abs() < 1e-15);
}

#[test]
fn speed_buckets_are_quarter_metres_per_second() {
    let h = histogram(&[0.0, 0.24, 0.25, 1.1], BucketSpec::SPEED).unwrap();
    assert_eq!(h.probabilities, vec![0.5, 0.25, 0.0, 0.0, 0.25]);
}

#[test]
fn ramp_table() {
    let table: [(f64, [u8; 3]); 7] = [
        (0.0, [0, 0, 255]),
        (1.0 / 6.0, [0, 128, 128]),
        (1.0 / 3.0, [0, 255, 0]),
        (0.5, [128, 255, 0]),
        (2.0 / 3.0, [255, 255, 0]),
        (5.0 / 6.0, [255, 128, 0]),
        (1.0, [255, 0, 0]),
    ];
    for (t, rgb) in table {
        assert_eq!(ramp(t), rgb, "t = {t}");
    }
    assert_eq!(ramp(-1.0), ramp(0.0));
    assert_eq!(ramp(7.0), ramp(1.0));
}
