use std::f64::consts::{PI, TAU};

use gaplab::fem::assemble_strip;
use gaplab::spectra::strip_spectrum;
use gaplab::{CurvatureProfile, EndCondition};

/// Periodic P1 eigenvalues of `-d²/ds²` on `N` cells of `[0, 2π]`.
fn p1_periodic(cells: usize, n: usize) -> f64 {
    let h = TAU / cells as f64;
    let c = (n as f64 * h).cos();
    6.0 / (h * h) * (1.0 - c) / (2.0 + c)
}

#[test]
fn straight_strip_separates() {
    let eps = 0.2;
    let cells = 48;
    let values = strip_spectrum(
        &CurvatureProfile::zero(),
        eps,
        cells,
        10,
        EndCondition::periodic(),
        5,
    )
    .unwrap();
    let mut expected: Vec<f64> = (0..4)
        .flat_map(|n| {
            let v = PI * PI / (eps * eps) + p1_periodic(cells, n);
            if n == 0 {
                vec![v]
            } else {
                vec![v, v]
            }
        })
        .collect();
    expected.truncate(5);
    for (v, e) in values.iter().zip(&expected) {
        assert!((v - e).abs() <= 1e-9 * e, "{v} vs {e}");
    }
}

#[test]
fn complex_phase_matches_shifted_spectrum() {
    // straight strip at θ = exp(2πi/4): s-modes e^{i(n + 1/4)s}
    let eps = 0.25;
    let cells = 64;
    let values = strip_spectrum(
        &CurvatureProfile::zero(),
        eps,
        cells,
        10,
        EndCondition::floquet(1, 4),
        2,
    )
    .unwrap();
    let h = TAU / cells as f64;
    let p1 = |k: f64| {
        let c = (k * h).cos();
        6.0 / (h * h) * (1.0 - c) / (2.0 + c)
    };
    let mut expected = [p1(0.25), p1(0.75)].map(|v| v + PI * PI / (eps * eps));
    expected.sort_by(f64::total_cmp);
    for (v, e) in values.iter().zip(&expected) {
        assert!((v - e).abs() <= 1e-9 * e, "{v} vs {e}");
    }
}

#[test]
fn periodic_fold_stays_banded() {
    let strip = assemble_strip(
        &CurvatureProfile::new(vec![0.0, 1.0], vec![]),
        0.1,
        40,
        6,
        EndCondition::periodic(),
    )
    .unwrap();
    assert!(!strip.doubled);
    assert_eq!(strip.pencil.order(), 240);
    assert!(strip.pencil.half_bandwidth() < 3 * 6);
}

#[test]
fn curvature_lowers_the_ground_state() {
    // the -κ²/4 effective potential pulls the ground state below π²/ε²
    let eps = 0.1;
    let v = strip_spectrum(
        &CurvatureProfile::new(vec![0.0, 1.0], vec![]),
        eps,
        128,
        10,
        EndCondition::periodic(),
        1,
    )
    .unwrap();
    assert!(v[0] < PI * PI / (eps * eps));
}
