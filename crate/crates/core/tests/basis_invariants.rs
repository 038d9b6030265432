use chebynet::basis::{deriv_all, eval_all, roots};
use proptest::prelude::*;
use std::f64::consts::PI;

fn grid(n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| -1.0 + 2.0 * i as f64 / (n - 1) as f64)
}

#[test]
fn recurrence_matches_trig_form() {
    for x in grid(200) {
        let t = eval_all(10, x);
        for j in 0..=10 {
            let trig = (j as f64 * x.acos()).cos();
            assert!(
                (t[j] - trig).abs() <= 1e-10,
                "T_{j}({x}) = {} vs {trig}",
                t[j]
            );
        }
    }
}

#[test]
fn roots_are_zeros() {
    for j in 1..=12 {
        let r = roots(j);
        assert_eq!(r.len(), j);
        for x in r {
            assert!(eval_all(j, x)[j].abs() <= 1e-10);
        }
    }
}

#[test]
fn discrete_orthogonality_on_nodes() {
    let n = 16;
    let nodes: Vec<f64> = (0..n)
        .map(|k| ((2 * k + 1) as f64 * PI / (2 * n) as f64).cos())
        .collect();
    let vals: Vec<_> = nodes.iter().map(|&x| eval_all(n - 1, x)).collect();
    for i in 0..n {
        for j in 0..n {
            let s: f64 = vals.iter().map(|t| t[i] * t[j]).sum();
            let expected = match (i, j) {
                (0, 0) => n as f64,
                _ if i == j => n as f64 / 2.0,
                _ => 0.0,
            };
            assert!((s - expected).abs() <= 1e-8, "<T_{i}, T_{j}> = {s}");
        }
    }
}

#[test]
fn derivatives_match_centered_differences() {
    let h = 1e-6;
    for x in grid(200).map(|x| x * 0.999) {
        let d = deriv_all(10, x);
        let up = eval_all(10, x + h);
        let down = eval_all(10, x - h);
        for j in 0..=10 {
            let fd = (up[j] - down[j]) / (2.0 * h);
            assert!((d[j] - fd).abs() <= 1e-4, "T_{j}'({x}) = {} vs {fd}", d[j]);
        }
    }
}

#[test]
fn endpoint_derivatives() {
    // T_j'(1) = j^2 and T_j'(-1) = (-1)^(j+1) j^2
    let d_hi = deriv_all(8, 1.0);
    let d_lo = deriv_all(8, -1.0);
    for j in 0..=8 {
        let sq = (j * j) as f64;
        assert!((d_hi[j] - sq).abs() <= 1e-9);
        let sign = if j % 2 == 0 { -1.0 } else { 1.0 };
        assert!((d_lo[j] - sign * sq).abs() <= 1e-9);
    }
}

proptest! {
    #[test]
    fn bounded_on_unit_interval(x in -1.0f64..=1.0) {
        for v in eval_all(20, x).values() {
            prop_assert!(v.abs() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn grows_outside(x in 1.001f64..3.0) {
        let t = eval_all(12, x);
        for j in 1..=12 {
            prop_assert!(t[j] > t[j - 1]);
        }
    }

    #[test]
    fn parity(x in -1.0f64..=1.0) {
        let a = eval_all(9, x);
        let b = eval_all(9, -x);
        for j in 0..=9 {
            let s = if j % 2 == 0 { 1.0 } else { -1.0 };
            prop_assert!((a[j] - s * b[j]).abs() <= 1e-12);
        }
    }

    // x T_j lies in span{T_{j-1}, T_{j+1}}, so the weight form stays within
    // the basis one order up.
    #[test]
    fn multiplication_by_x(x in -1.0f64..=1.0) {
        let t = eval_all(11, x);
        prop_assert!((x * t[0] - t[1]).abs() <= 1e-12);
        for j in 1..=10 {
            prop_assert!((x * t[j] - 0.5 * (t[j + 1] + t[j - 1])).abs() <= 1e-12);
        }
    }
}
