//! Parameter sweeps over perturbation families, branch tracking, crossing
//! counts and the lower bounds they are compared against.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error as ThisError;

use crate::fem::{EdgeCondition, EndCondition};
use crate::geometry::{
    waveguide_metric, CurvatureProfile, GapInterval, PerturbationFamily, PerturbationKind,
};
use crate::spectra::{
    cluster_tol, count_forms_below, lowest_form_values, solve_lowest, strip_spectrum, CellProblem,
    SpectraError,
};
use crate::Error;

#[derive(Debug, Clone, PartialEq, ThisError)]
pub enum CountingError {
    #[error("level {level} is not inside the gap ({lower}, {upper})")]
    LevelNotInGap { level: f64, lower: f64, upper: f64 },
    #[error("branches in [{tau_lo}, {tau_hi}] stay ambiguous after maximal refinement")]
    GridTooCoarse { tau_lo: f64, tau_hi: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Down,
    Up,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrossingEvent {
    pub tau_lo: f64,
    pub tau_hi: f64,
    /// Sorted branch index, starting at 1.
    pub branch: usize,
    pub direction: Direction,
}

/// Lowest `J` eigenvalues sampled along a τ-grid.
#[derive(Debug, Clone, Serialize)]
pub struct BranchTrace {
    pub taus: Vec<f64>,
    /// `values[i][j]` is the `j`-th smallest eigenvalue at `taus[i]`.
    pub values: Vec<Vec<f64>>,
    /// Crossings of the level the sweep was refined for.
    pub events: Vec<CrossingEvent>,
}

impl BranchTrace {
    pub fn branches(&self) -> usize {
        self.values.iter().map(Vec::len).min().unwrap_or(0)
    }

    pub fn tau_max(&self) -> f64 {
        self.taus.last().copied().unwrap_or(0.0)
    }

    /// Largest change of any branch between consecutive samples.
    pub fn max_step(&self) -> f64 {
        let j = self.branches();
        self.values
            .windows(2)
            .flat_map(|w| (0..j).map(move |b| (w[1][b] - w[0][b]).abs()))
            .fold(0.0, f64::max)
    }

    /// CSV with header `tau,j,lambda`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tau,j,lambda\n");
        for (tau, row) in self.taus.iter().zip(&self.values) {
            for (j, v) in row.iter().enumerate() {
                let _ = writeln!(out, "{tau:.16e},{},{v:.16e}", j + 1);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    /// Number of branches tracked.
    pub branches: usize,
    /// Level whose crossings drive the adaptive refinement.
    pub level: Option<f64>,
    pub max_depth: usize,
    /// Smallest bracket, relative to `τ_max`.
    pub tau_tol: f64,
}

impl SweepOptions {
    pub fn new(branches: usize, level: Option<f64>) -> Self {
        Self {
            branches,
            level,
            max_depth: 20,
            tau_tol: 1e-6,
        }
    }
}

enum Bracket {
    Resolved,
    Refine,
}

fn classify(a: &[f64], b: &[f64], level: f64) -> Bracket {
    let mut crossings = 0;
    for (&x, &y) in a.iter().zip(b) {
        let (sx, sy) = (x - level, y - level);
        if (sx <= 0.0) != (sy <= 0.0) {
            crossings += 1;
        } else if (y - x).abs() >= sx.abs().min(sy.abs()) {
            // may have crossed twice inside the bracket
            return Bracket::Refine;
        }
    }
    if crossings > 1 {
        Bracket::Refine
    } else {
        Bracket::Resolved
    }
}

/// Samples `solve` on `taus` and bisects brackets near crossings of the level.
pub fn sweep<F>(solve: F, taus: &[f64], opts: &SweepOptions) -> Result<BranchTrace, Error>
where
    F: Fn(f64) -> Result<Vec<f64>, Error> + Sync,
{
    if taus.is_empty() || taus[0] != 0.0 {
        return Err(CountingError::InvalidParameter("tau grid must start at 0".into()).into());
    }
    if taus.windows(2).any(|w| w[1] <= w[0]) {
        return Err(
            CountingError::InvalidParameter("tau grid must be strictly increasing".into()).into(),
        );
    }
    if opts.branches == 0 {
        return Err(CountingError::InvalidParameter("need at least one branch".into()).into());
    }
    let trim = |mut v: Vec<f64>| -> Result<Vec<f64>, Error> {
        if v.len() < opts.branches {
            return Err(CountingError::InvalidParameter(format!(
                "problem has {} eigenvalues, {} branches requested",
                v.len(),
                opts.branches
            ))
            .into());
        }
        v.truncate(opts.branches);
        Ok(v)
    };
    let initial: Vec<Vec<f64>> = taus
        .par_iter()
        .map(|&t| solve(t).and_then(trim))
        .collect::<Result<_, _>>()?;

    let tau_max = *taus.last().unwrap();
    let min_width = opts.tau_tol * tau_max;
    let mut out_taus = vec![taus[0]];
    let mut out_values = vec![initial[0].clone()];
    for i in 0..taus.len() - 1 {
        let Some(level) = opts.level else {
            out_taus.push(taus[i + 1]);
            out_values.push(initial[i + 1].clone());
            continue;
        };
        // depth-first bisection, emitting samples in increasing τ
        let mut stack = vec![(taus[i + 1], initial[i + 1].clone(), 0usize)];
        while let Some((hi, hi_vals, depth)) = stack.pop() {
            let lo = *out_taus.last().unwrap();
            let lo_vals = out_values.last().unwrap();
            let refine = matches!(classify(lo_vals, &hi_vals, level), Bracket::Refine);
            if refine && depth < opts.max_depth && hi - lo > min_width {
                let mid = 0.5 * (lo + hi);
                let mid_vals = trim(solve(mid)?)?;
                stack.push((hi, hi_vals, depth + 1));
                stack.push((mid, mid_vals, depth + 1));
                continue;
            }
            if refine {
                let jump = lo_vals
                    .iter()
                    .zip(&hi_vals)
                    .filter(|(x, y)| ((*x - level) <= 0.0) == ((*y - level) <= 0.0))
                    .map(|(x, y)| (y - x).abs())
                    .fold(0.0, f64::max);
                if jump > cluster_tol(level) {
                    return Err(CountingError::GridTooCoarse {
                        tau_lo: lo,
                        tau_hi: hi,
                    }
                    .into());
                }
            }
            out_taus.push(hi);
            out_values.push(hi_vals);
        }
    }
    let mut trace = BranchTrace {
        taus: out_taus,
        values: out_values,
        events: Vec::new(),
    };
    if let Some(level) = opts.level {
        trace.events = crossing_events(&trace, level);
    }
    Ok(trace)
}

fn crossing_events(trace: &BranchTrace, level: f64) -> Vec<CrossingEvent> {
    let j = trace.branches();
    let mut events = Vec::new();
    for (i, w) in trace.values.windows(2).enumerate() {
        for b in 0..j {
            let (below_a, below_b) = (w[0][b] <= level, w[1][b] <= level);
            if below_a != below_b {
                events.push(CrossingEvent {
                    tau_lo: trace.taus[i],
                    tau_hi: trace.taus[i + 1],
                    branch: b + 1,
                    direction: if below_b {
                        Direction::Down
                    } else {
                        Direction::Up
                    },
                });
            }
        }
    }
    events
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CrossingCount {
    /// Crossings in either direction, with multiplicity.
    pub total: usize,
    pub down: usize,
    pub up: usize,
    /// `down - up`
    pub flow: i64,
}

/// Counts sign changes of `λ_j(τ) - λ` over all branches.
pub fn count_crossings(trace: &BranchTrace, level: f64) -> Result<CrossingCount, Error> {
    let tol = cluster_tol(level);
    for row in [trace.values.first(), trace.values.last()]
        .into_iter()
        .flatten()
    {
        if let Some(&eigenvalue) = row.iter().find(|v| (*v - level).abs() <= tol) {
            return Err(SpectraError::AmbiguousLevel {
                level,
                eigenvalue,
                tol,
            }
            .into());
        }
    }
    let events = crossing_events(trace, level);
    let down = events
        .iter()
        .filter(|e| e.direction == Direction::Down)
        .count();
    let up = events.len() - down;
    Ok(CrossingCount {
        total: events.len(),
        down,
        up,
        flow: down as i64 - up as i64,
    })
}

/// A periodic cell together with a family perturbing `m` of its cells.
#[derive(Debug, Clone)]
pub struct FamilyProblem {
    pub cell: CellProblem,
    pub family: PerturbationFamily,
}

impl FamilyProblem {
    pub fn new(cell: CellProblem, family: PerturbationFamily) -> Result<Self, Error> {
        if cell.is_hill() {
            return Err(CountingError::InvalidParameter(
                "perturbation families need a metric cell".into(),
            )
            .into());
        }
        Ok(Self { cell, family })
    }

    pub fn block_cells(&self) -> usize {
        self.family.block_cells()
    }

    /// Assembled forms of the `n`-cell supercell at `τ`.
    pub fn supercell_forms(
        &self,
        tau: f64,
        n: usize,
        ends: EndCondition,
    ) -> Result<crate::AssembledForms, Error> {
        let metric = self.family.metric(tau, n)?;
        self.cell
            .forms_with(&metric, n, ends, self.family.hole(tau, n))
    }

    /// Lowest `count` eigenvalues of the `n`-cell supercell at `τ`.
    pub fn supercell_lowest(
        &self,
        tau: f64,
        n: usize,
        ends: EndCondition,
        count: usize,
    ) -> Result<Vec<f64>, Error> {
        lowest_form_values(&self.supercell_forms(tau, n, ends)?, count)
    }

    /// Eigenvalues `<= λ` of the perturbed block alone.
    pub fn block_count(&self, tau: f64, ends: EndCondition, lambda: f64) -> Result<usize, Error> {
        count_forms_below(
            &self.supercell_forms(tau, self.block_cells(), ends)?,
            lambda,
        )
    }
}

/// Sweep of the `n`-cell supercell with the given end condition.
pub fn sweep_family(
    problem: &FamilyProblem,
    n: usize,
    ends: EndCondition,
    taus: &[f64],
    opts: &SweepOptions,
) -> Result<BranchTrace, Error> {
    let m = problem.block_cells();
    if n <= m {
        return Err(CountingError::InvalidParameter(format!(
            "supercell size n = {n} must exceed block size m = {m}"
        ))
        .into());
    }
    sweep(
        |tau| problem.supercell_lowest(tau, n, ends, opts.branches),
        taus,
        opts,
    )
}

/// Default number of tracked branches: `k n + 2 expected + 5`.
pub fn default_branches(k: usize, n: usize, expected: usize) -> usize {
    k * n + 2 * expected + 5
}

#[derive(Debug, Clone, Serialize)]
pub struct CountingReport {
    pub lambda: f64,
    pub tau_max: f64,
    pub k: usize,
    pub block_cells: usize,
    pub dirichlet_block: usize,
    pub dirichlet_block_perturbed: usize,
    pub neumann_block: usize,
    pub neumann_block_perturbed: usize,
    /// `dirichlet_block_perturbed - dirichlet_block`, clamped at 0.
    pub rhs_above: usize,
    /// `neumann_block - neumann_block_perturbed`, clamped at 0.
    pub rhs_below: usize,
    /// `k m`, the expected unperturbed block count.
    pub expected_block_count: usize,
    pub block_count_matches: bool,
}

/// The four block counts at the level `λ` inside `gap`.
pub fn thm1_bounds(
    problem: &FamilyProblem,
    gap: &GapInterval,
    lambda: f64,
    tau: f64,
) -> Result<CountingReport, Error> {
    if !gap.contains(lambda) {
        return Err(CountingError::LevelNotInGap {
            level: lambda,
            lower: gap.lower,
            upper: gap.upper,
        }
        .into());
    }
    let count = |t: f64, ends: EndCondition| problem.block_count(t, ends, lambda);
    let dirichlet_block = count(0.0, EndCondition::Dirichlet)?;
    let dirichlet_block_perturbed = count(tau, EndCondition::Dirichlet)?;
    let neumann_block = count(0.0, EndCondition::Neumann)?;
    let neumann_block_perturbed = count(tau, EndCondition::Neumann)?;
    let m = problem.block_cells();
    let expected = gap.k * m;
    Ok(CountingReport {
        lambda,
        tau_max: tau,
        k: gap.k,
        block_cells: m,
        dirichlet_block,
        dirichlet_block_perturbed,
        neumann_block,
        neumann_block_perturbed,
        rhs_above: dirichlet_block_perturbed.saturating_sub(dirichlet_block),
        rhs_below: neumann_block.saturating_sub(neumann_block_perturbed),
        expected_block_count: expected,
        block_count_matches: dirichlet_block == expected && neumann_block == expected,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Verification {
    pub crossings: CrossingCount,
    pub report: CountingReport,
    pub margin_above: i64,
    pub margin_below: i64,
    pub pass_above: bool,
    pub pass_below: bool,
    pub pass: bool,
}

/// `N̂(τ_max, λ) >= rhs_above` and `N̂(τ_max, λ) >= rhs_below`.
pub fn verify_thm1(trace: &BranchTrace, report: &CountingReport) -> Result<Verification, Error> {
    if (trace.tau_max() - report.tau_max).abs() > 1e-12 * (1.0 + report.tau_max.abs()) {
        return Err(CountingError::InvalidParameter(format!(
            "trace ends at tau = {}, report is for tau = {}",
            trace.tau_max(),
            report.tau_max
        ))
        .into());
    }
    let crossings = count_crossings(trace, report.lambda)?;
    let n = crossings.total as i64;
    let margin_above = n - report.rhs_above as i64;
    let margin_below = n - report.rhs_below as i64;
    Ok(Verification {
        crossings,
        report: report.clone(),
        margin_above,
        margin_below,
        pass_above: margin_above >= 0,
        pass_below: margin_below >= 0,
        pass: margin_above >= 0 && margin_below >= 0,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GapCount {
    pub count: usize,
    pub expected: usize,
}

/// Eigenvalues of the unperturbed `n`-cell supercell below `λ ∈ I_k`.
pub fn common_gap_count(
    cell: &CellProblem,
    n: usize,
    gap: &GapInterval,
    lambda: f64,
    ends: EndCondition,
) -> Result<GapCount, Error> {
    if !gap.contains(lambda) {
        return Err(CountingError::LevelNotInGap {
            level: lambda,
            lower: gap.lower,
            upper: gap.upper,
        }
        .into());
    }
    Ok(GapCount {
        count: count_forms_below(&cell.forms(n, ends)?, lambda)?,
        expected: gap.k * n,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct HoleSweep {
    pub taus: Vec<f64>,
    pub radii: Vec<f64>,
    pub lowest: Vec<f64>,
    /// Indices `i` with `lowest[i + 1] <= lowest[i]`.
    pub violations: Vec<usize>,
    /// Last value over the first value with a nonzero radius.
    pub ratio: f64,
}

impl HoleSweep {
    pub fn strictly_increasing(&self) -> bool {
        self.violations.is_empty()
    }

    /// CSV with header `tau,radius,lambda`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tau,radius,lambda\n");
        for ((t, r), l) in self.taus.iter().zip(&self.radii).zip(&self.lowest) {
            let _ = writeln!(out, "{t:.16e},{r:.16e},{l:.16e}");
        }
        out
    }
}

/// Lowest eigenvalue of the block with a growing Dirichlet hole and Neumann
/// conditions on its outer boundary.
pub fn shrink_hole_sweep(
    cell: &CellProblem,
    family: &PerturbationFamily,
    taus: &[f64],
) -> Result<HoleSweep, Error> {
    if family.kind() != PerturbationKind::HoleShrink {
        return Err(
            CountingError::InvalidParameter("shrink sweep needs a hole family".into()).into(),
        );
    }
    if cell.sides != EdgeCondition::Neumann {
        return Err(
            CountingError::InvalidParameter("shrink sweep needs Neumann sides".into()).into(),
        );
    }
    if taus.windows(2).any(|w| w[1] <= w[0]) {
        return Err(
            CountingError::InvalidParameter("tau grid must be strictly increasing".into()).into(),
        );
    }
    let m = family.block_cells();
    let lowest: Vec<f64> = taus
        .par_iter()
        .map(|&tau| {
            let metric = family.metric(tau, m)?;
            let hole = family.hole(tau, m).filter(|d| d.radius > 0.0);
            let forms = cell.forms_with(&metric, m, EndCondition::Neumann, hole)?;
            Ok(solve_lowest(&forms, 1)?.values[0])
        })
        .collect::<Result<_, Error>>()?;
    let radii: Vec<f64> = taus.iter().map(|&t| family.parameter(t)).collect();
    let violations = lowest
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[1] <= w[0])
        .map(|(i, _)| i)
        .collect();
    let first = radii
        .iter()
        .position(|&r| r > 0.0)
        .map(|i| lowest[i])
        .unwrap_or(f64::NAN);
    Ok(HoleSweep {
        taus: taus.to_vec(),
        radii,
        ratio: lowest.last().copied().unwrap_or(f64::NAN) / first,
        lowest,
        violations,
    })
}

/// Refinement ladder for extrapolated strip and Hill eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticsOptions {
    /// Coarsest element count along the strip; refined by doubling.
    pub cells_s: usize,
    /// Polynomial modes across the strip.
    pub modes: usize,
    /// Number of meshes in the ladder (at least 2).
    pub levels: usize,
    /// Coarsest element count of the one-dimensional cell problem.
    pub hill_cells: usize,
}

impl Default for AsymptoticsOptions {
    fn default() -> Self {
        Self {
            cells_s: 200,
            modes: 12,
            levels: 3,
            hill_cells: 200,
        }
    }
}

/// Richardson extrapolation of a second-order sequence on a doubling ladder.
/// Returns the extrapolated value and the change between the last two
/// extrapolants as its error estimate.
pub fn richardson(values: &[f64]) -> (f64, f64) {
    let ext: Vec<f64> = values
        .windows(2)
        .map(|w| w[1] + (w[1] - w[0]) / 3.0)
        .collect();
    match ext.len() {
        0 => (values.first().copied().unwrap_or(f64::NAN), f64::INFINITY),
        1 => (ext[0], (ext[0] - values[1]).abs()),
        n => (ext[n - 1], (ext[n - 1] - ext[n - 2]).abs()),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AsymptoticsRow {
    pub epsilon: f64,
    pub k: usize,
    pub waveguide: f64,
    pub hill: f64,
    /// `λ_k(M_ε) - π²/ε² - λ_k(K)`
    pub defect: f64,
    /// Error estimate of the defect from the mesh ladder.
    pub discretization_error: f64,
    pub certified: bool,
    /// `log2(δ(ε) / δ(ε/2))` when `ε/2` is also in the list.
    pub order: Option<f64>,
}

/// Defects of the thin-strip expansion `λ_k(M_ε) = π²/ε² + λ_k(K) + O(ε)`.
pub fn waveguide_asymptotics(
    kappa: &CurvatureProfile,
    epsilons: &[f64],
    ends: EndCondition,
    ks: &[usize],
    opts: &AsymptoticsOptions,
) -> Result<Vec<AsymptoticsRow>, Error> {
    if opts.levels < 2 {
        return Err(CountingError::InvalidParameter(
            "mesh ladder needs at least two levels".into(),
        )
        .into());
    }
    let k_max = ks.iter().copied().max().unwrap_or(0);
    if k_max == 0 || ks.contains(&0) {
        return Err(CountingError::InvalidParameter("band indices start at 1".into()).into());
    }
    for &eps in epsilons {
        waveguide_metric(kappa, eps)?;
    }
    let ladder = |level: usize| 1usize << level;
    let hill: Vec<Vec<f64>> = (0..opts.levels)
        .into_par_iter()
        .map(|l| {
            let cell = CellProblem::hill(kappa.clone(), opts.hill_cells * ladder(l));
            Ok(cell.spectrum(1, ends, k_max)?.values)
        })
        .collect::<Result<_, Error>>()?;
    let mut rows = Vec::new();
    for &eps in epsilons {
        // the extra run with more modes bounds the truncation across the strip
        let runs: Vec<Vec<f64>> = (0..=opts.levels)
            .into_par_iter()
            .map(|l| {
                let (level, modes) = if l < opts.levels {
                    (l, opts.modes)
                } else {
                    (opts.levels - 1, opts.modes + 4)
                };
                strip_spectrum(kappa, eps, opts.cells_s * ladder(level), modes, ends, k_max)
            })
            .collect::<Result<_, Error>>()?;
        let (ladder_values, richer) = runs.split_at(opts.levels);
        for &k in ks {
            let (wave, wave_err) =
                richardson(&ladder_values.iter().map(|v| v[k - 1]).collect::<Vec<_>>());
            let modal_err = (richer[0][k - 1] - ladder_values[opts.levels - 1][k - 1]).abs();
            let (h, h_err) = richardson(&hill.iter().map(|v| v[k - 1]).collect::<Vec<_>>());
            let defect = wave - std::f64::consts::PI.powi(2) / (eps * eps) - h;
            let err = wave_err + modal_err + h_err;
            rows.push(AsymptoticsRow {
                epsilon: eps,
                k,
                waveguide: wave,
                hill: h,
                defect,
                discretization_error: err,
                certified: err < defect.abs() / 10.0,
                order: None,
            });
        }
    }
    let snapshot = rows.clone();
    for row in &mut rows {
        let half = snapshot
            .iter()
            .find(|r| r.k == row.k && (r.epsilon - row.epsilon / 2.0).abs() <= 1e-12 * row.epsilon);
        if let Some(half) = half {
            row.order = Some((row.defect / half.defect).abs().log2());
        }
    }
    Ok(rows)
}

/// `max_θ |δ_k(ε)|` over the Floquet samples `l / theta_count`, each defect
/// taken on the finest mesh of the ladder.
pub fn max_defect_over_theta(
    kappa: &CurvatureProfile,
    epsilon: f64,
    theta_count: usize,
    k: usize,
    opts: &AsymptoticsOptions,
) -> Result<f64, Error> {
    if theta_count == 0 || k == 0 {
        return Err(
            CountingError::InvalidParameter("need theta_count >= 1 and k >= 1".into()).into(),
        );
    }
    let finest = 1usize << (opts.levels.max(1) - 1);
    // samples l and theta_count - l are conjugate and share their spectra
    let defects: Vec<f64> = (0..=theta_count / 2)
        .into_par_iter()
        .map(|l| {
            let ends = EndCondition::floquet(l, theta_count);
            let wave = strip_spectrum(kappa, epsilon, opts.cells_s * finest, opts.modes, ends, k)?;
            let hill =
                CellProblem::hill(kappa.clone(), opts.hill_cells * finest).spectrum(1, ends, k)?;
            Ok((wave[k - 1]
                - std::f64::consts::PI.powi(2) / (epsilon * epsilon)
                - hill.values[k - 1])
                .abs())
        })
        .collect::<Result<_, Error>>()?;
    Ok(defects.into_iter().fold(0.0, f64::max))
}

/// Gap `I_k` from a gap list, for picking the level at its midpoint.
pub fn select_gap(gaps: &[GapInterval], k: usize) -> Result<GapInterval, Error> {
    gaps.iter().find(|g| g.k == k).copied().ok_or_else(|| {
        CountingError::InvalidParameter(format!("cell has no gap with k = {k}")).into()
    })
}
