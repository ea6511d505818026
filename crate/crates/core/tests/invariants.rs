use gaplab::gapcount::{select_gap, sweep_family, FamilyProblem};
use gaplab::geometry::{make_family, ConformalRegion, FamilyShape};
use gaplab::spectra::{gap_condition, CellOperator};
use gaplab::{
    CellProblem, CurvatureProfile, EndCondition, PerturbationKind, Resolution, Schedule,
    SweepOptions,
};

fn blow_up_problem() -> FamilyProblem {
    let kappa = CurvatureProfile::new(vec![0.0, 4.0], vec![]);
    let cell = CellProblem::waveguide(
        &kappa,
        0.1,
        Resolution {
            cells_s: 64,
            cells_u: 4,
        },
    )
    .unwrap();
    let CellOperator::Metric(metric) = &cell.operator else {
        unreachable!()
    };
    let family = make_family(
        PerturbationKind::ConformalConstantRegion,
        metric,
        1,
        Schedule::BlowUp,
        FamilyShape::Conformal(ConformalRegion::Interior),
    )
    .unwrap();
    FamilyProblem::new(cell, family).unwrap()
}

#[test]
fn halving_the_step_shrinks_branch_jumps() {
    let problem = blow_up_problem();
    let grid = |steps: usize| -> Vec<f64> {
        (0..=steps)
            .map(|i| 0.02 * i as f64 / steps as f64)
            .collect()
    };
    let opts = SweepOptions::new(12, None);
    let coarse = sweep_family(&problem, 3, EndCondition::Dirichlet, &grid(4), &opts).unwrap();
    let fine = sweep_family(&problem, 3, EndCondition::Dirichlet, &grid(8), &opts).unwrap();
    assert!(
        coarse.max_step() >= 1.5 * fine.max_step(),
        "{} vs {}",
        coarse.max_step(),
        fine.max_step()
    );
}

#[test]
fn gap_eigenvalues_settle_with_supercell_size() {
    let problem = blow_up_problem();
    let gaps = gap_condition(&problem.cell, 4).unwrap();
    let gap = select_gap(&gaps, 4).unwrap();
    let in_gap = |tau: f64, n: usize| -> Vec<f64> {
        let count = 4 * n + 6;
        let values = problem
            .supercell_lowest(tau, n, EndCondition::Dirichlet, count)
            .unwrap();
        values.into_iter().filter(|v| gap.contains(*v)).collect()
    };
    // branches cross the narrow gap quickly; take τ from a refined crossing
    let taus: Vec<f64> = (0..=10).map(|i| 0.005 * i as f64).collect();
    let trace = sweep_family(
        &problem,
        4,
        EndCondition::Dirichlet,
        &taus,
        &SweepOptions::new(24, Some(gap.midpoint())),
    )
    .unwrap();
    let event = trace.events.first().expect("a branch crosses the gap");
    let branch = |t: f64| {
        problem
            .supercell_lowest(t, 4, EndCondition::Dirichlet, event.branch)
            .unwrap()[event.branch - 1]
    };
    let (mut lo, mut hi) = (event.tau_lo, event.tau_hi);
    let below_at_lo = branch(lo) < gap.midpoint();
    while hi - lo > 1e-9 {
        let mid = 0.5 * (lo + hi);
        if (branch(mid) < gap.midpoint()) == below_at_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tau = hi;
    assert!(!in_gap(tau, 4).is_empty());
    let (small, large) = (in_gap(tau, 4), in_gap(tau, 6));
    for v in &small {
        let nearest = large
            .iter()
            .map(|w| (w - v).abs())
            .fold(f64::INFINITY, f64::min);
        assert!(
            nearest <= 1e-4 * v,
            "in-gap value {v} moved by {nearest} at τ = {tau}"
        );
    }
}
