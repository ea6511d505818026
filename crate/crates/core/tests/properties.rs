use gaplab::linalg::{cholesky, gevp_values, lowest_values, BandedPencil, HermitianMatrix};
use num_complex::Complex64;
use proptest::prelude::*;

fn symmetric(n: usize, x: &[f64]) -> HermitianMatrix {
    HermitianMatrix::from_real_fn(n, |i, j| x[i * n + j] + x[j * n + i])
}

fn positive(n: usize, y: &[f64]) -> HermitianMatrix {
    HermitianMatrix::from_real_fn(n, |i, j| {
        (0..n).map(|k| y[i * n + k] * y[j * n + k]).sum::<f64>() + if i == j { 0.5 } else { 0.0 }
    })
}

fn entries(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, n * n)
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    let scale = a.iter().chain(b).fold(1.0f64, |m, v| m.max(v.abs()));
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * scale)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, rng_seed: proptest::test_runner::RngSeed::Fixed(11), ..ProptestConfig::default() })]

    #[test]
    fn scaling_the_pencil_scales_the_values(x in entries(8), y in entries(8), c in 0.1..10.0f64) {
        let (a, b) = (symmetric(8, &x), positive(8, &y));
        let base = gevp_values(&a, &b).unwrap();
        let stiff = gevp_values(&a.scaled(c), &b).unwrap();
        let heavy = gevp_values(&a, &b.scaled(c)).unwrap();
        let expect_stiff: Vec<f64> = base.iter().map(|v| v * c).collect();
        let expect_heavy: Vec<f64> = base.iter().map(|v| v / c).collect();
        prop_assert!(close(&stiff, &expect_stiff, 1e-10));
        prop_assert!(close(&heavy, &expect_heavy, 1e-10));
    }

    #[test]
    fn unitary_phases_leave_values_unchanged(x in entries(8), y in entries(8), phases in prop::collection::vec(0.0..6.2f64, 8)) {
        let (a, b) = (symmetric(8, &x), positive(8, &y));
        let d: Vec<Complex64> = phases.iter().map(|&t| Complex64::from_polar(1.0, t)).collect();
        let twist = |m: &HermitianMatrix| HermitianMatrix::from_fn(8, |i, j| d[i] * m.get(i, j) * d[j].conj());
        let real = gevp_values(&a, &b).unwrap();
        let complex = gevp_values(&twist(&a), &twist(&b)).unwrap();
        prop_assert!(close(&real, &complex, 1e-10));
    }

    #[test]
    fn cholesky_reconstructs(y in entries(20), z in entries(20)) {
        let n = 20;
        let b = HermitianMatrix::from_fn(n, |i, j| {
            let mut s = Complex64::new(if i == j { 0.5 } else { 0.0 }, 0.0);
            for k in 0..n {
                s += Complex64::new(y[i * n + k], z[i * n + k]) * Complex64::new(y[j * n + k], -z[j * n + k]);
            }
            s
        });
        let l = cholesky(&b).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let s: Complex64 = (0..n).map(|k| l.get(i, k) * l.get(j, k).conj()).sum();
                worst = worst.max((s - b.get(i, j)).norm());
            }
        }
        prop_assert!(worst <= 1e-12 * b.norm_inf(), "residual {worst}");
    }

    #[test]
    fn band_bisection_agrees_with_dense(diag in prop::collection::vec(-2.0..2.0f64, 40), off in prop::collection::vec(-1.0..1.0f64, 80)) {
        let n = 40;
        let a = HermitianMatrix::from_real_fn(n, |i, j| match i.abs_diff(j) {
            0 => diag[i],
            1 => off[i.min(j)],
            2 => off[40 + i.min(j)],
            _ => 0.0,
        });
        let b = HermitianMatrix::from_real_fn(n, |i, j| match i.abs_diff(j) {
            0 => 4.0,
            1 => 1.0,
            _ => 0.0,
        });
        let pencil = BandedPencil::new(&a, &b).unwrap().unwrap();
        prop_assert_eq!(pencil.half_bandwidth(), 2);
        let banded = pencil.lowest_values(12).unwrap();
        let dense = gevp_values(&a, &b).unwrap();
        prop_assert!(close(&banded, &dense[..12], 1e-12));
        prop_assert!(close(&lowest_values(&a, &b, 12).unwrap(), &banded, 0.0));
    }
}
