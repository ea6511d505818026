//! Floquet band structures, gap detection, Hill operators, eigenvalue counting
//! and the Dirichlet–Neumann enclosure check.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error as ThisError;

use crate::fem::{
    assemble_strip, assemble_with_potential, build_mesh, AssembledForms, BoundarySpec,
    EdgeCondition, EndCondition,
};
use crate::geometry::{
    supercell, waveguide_metric, CurvatureProfile, Disk, GapInterval, MetricField, TWO_PI,
};
use crate::linalg::{count_eigenvalues_below, gevp_values, lowest_values, solve_gevp, Spectrum};
use crate::Error;

#[derive(Debug, Clone, PartialEq, ThisError)]
pub enum SpectraError {
    #[error("level {level} is within {tol:e} of eigenvalue {eigenvalue}; perturb the level")]
    AmbiguousLevel {
        level: f64,
        eigenvalue: f64,
        tol: f64,
    },
    #[error("level {requested} exceeds the largest computed eigenvalue {largest}")]
    SpectrumTruncated { requested: f64, largest: f64 },
    #[error("curvature profile is not even")]
    NotEven,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// `K = -d²/ds² - κ²/4` on one period.
#[derive(Debug, Clone, PartialEq)]
pub struct HillProblem {
    kappa: CurvatureProfile,
}

impl HillProblem {
    pub fn new(kappa: CurvatureProfile) -> Self {
        Self { kappa }
    }

    pub fn curvature(&self) -> &CurvatureProfile {
        &self.kappa
    }

    pub fn potential(&self, s: f64) -> f64 {
        let k = self.kappa.eval(s);
        -0.25 * k * k
    }
}

/// Elements per period cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct Resolution {
    pub cells_s: usize,
    /// Elements across the strip; unused for one-dimensional problems.
    pub cells_u: usize,
}

impl Resolution {
    pub fn one_dimensional(cells_s: usize) -> Self {
        Self {
            cells_s,
            cells_u: 0,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let scale = |n: usize| ((n as f64 * factor).round() as usize).max(1);
        Self {
            cells_s: scale(self.cells_s).max(3),
            cells_u: if self.cells_u == 0 {
                0
            } else {
                scale(self.cells_u)
            },
        }
    }
}

#[derive(Debug, Clone)]
pub enum CellOperator {
    /// Laplace–Beltrami operator of a metric on the period cell.
    Metric(MetricField),
    Hill(HillProblem),
}

/// A discretized period cell.
#[derive(Debug, Clone)]
pub struct CellProblem {
    pub operator: CellOperator,
    pub resolution: Resolution,
    /// Condition on the long sides `u = 0`, `u = ε`.
    pub sides: EdgeCondition,
}

impl CellProblem {
    pub fn hill(kappa: CurvatureProfile, cells_s: usize) -> Self {
        Self {
            operator: CellOperator::Hill(HillProblem::new(kappa)),
            resolution: Resolution::one_dimensional(cells_s),
            sides: EdgeCondition::Dirichlet,
        }
    }

    /// Curved strip of width `ε` with Dirichlet sides.
    pub fn waveguide(
        kappa: &CurvatureProfile,
        width: f64,
        resolution: Resolution,
    ) -> Result<Self, Error> {
        Ok(Self {
            operator: CellOperator::Metric(waveguide_metric(kappa, width)?),
            resolution,
            sides: EdgeCondition::Dirichlet,
        })
    }

    pub fn metric(metric: MetricField, resolution: Resolution, sides: EdgeCondition) -> Self {
        Self {
            operator: CellOperator::Metric(metric),
            resolution,
            sides,
        }
    }

    pub fn is_hill(&self) -> bool {
        matches!(self.operator, CellOperator::Hill(_))
    }

    pub fn period(&self) -> f64 {
        match &self.operator {
            CellOperator::Metric(g) => g.length(),
            CellOperator::Hill(_) => TWO_PI,
        }
    }

    pub fn with_resolution(&self, resolution: Resolution) -> Self {
        Self {
            resolution,
            ..self.clone()
        }
    }

    /// Metric of the unperturbed `cells`-cell supercell.
    pub fn base_metric(&self, cells: usize) -> Result<MetricField, Error> {
        match &self.operator {
            CellOperator::Metric(g) => Ok(supercell(g, cells)?),
            CellOperator::Hill(_) => Ok(MetricField::euclidean(TWO_PI * cells as f64, 0.0)),
        }
    }

    /// Forms of the `cells`-cell supercell under the given end condition.
    pub fn forms(&self, cells: usize, ends: EndCondition) -> Result<AssembledForms, Error> {
        let metric = self.base_metric(cells)?;
        self.forms_with(&metric, cells, ends, None)
    }

    /// Forms for an arbitrary metric on the `cells`-cell parameter domain.
    pub fn forms_with(
        &self,
        metric: &MetricField,
        cells: usize,
        ends: EndCondition,
        hole: Option<Disk>,
    ) -> Result<AssembledForms, Error> {
        if cells == 0 {
            return Err(SpectraError::InvalidParameter("need at least one cell".into()).into());
        }
        let nodes_s = cells * self.resolution.cells_s + 1;
        let bc = BoundarySpec::new(self.sides, ends)?;
        match &self.operator {
            CellOperator::Hill(h) => {
                let mesh = build_mesh(metric.length(), 0.0, nodes_s, None, hole)?;
                let v = |s: f64| h.potential(s);
                Ok(assemble_with_potential(&mesh, metric, &bc, Some(&v))?)
            }
            CellOperator::Metric(_) => {
                let mesh = build_mesh(
                    metric.length(),
                    metric.width(),
                    nodes_s,
                    Some(self.resolution.cells_u + 1),
                    hole,
                )?;
                Ok(assemble_with_potential(&mesh, metric, &bc, None)?)
            }
        }
    }

    /// Lowest `count` eigenvalues of the `cells`-cell supercell.
    pub fn spectrum(
        &self,
        cells: usize,
        ends: EndCondition,
        count: usize,
    ) -> Result<Spectrum, Error> {
        let forms = self.forms(cells, ends)?;
        solve_lowest(&forms, count)
    }
}

/// Lowest `count` eigenpairs of assembled forms (all of them if fewer exist).
pub fn solve_lowest(forms: &AssembledForms, count: usize) -> Result<Spectrum, Error> {
    let count = count.min(forms.order());
    Ok(solve_gevp(&forms.stiffness, &forms.mass, count)?)
}

/// All eigenvalues of assembled forms.
pub fn all_values(forms: &AssembledForms) -> Result<Vec<f64>, Error> {
    Ok(gevp_values(&forms.stiffness, &forms.mass)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct BandGap {
    /// Gap between band `k` and band `k + 1`.
    pub k: usize,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BandStructure {
    #[serde(skip)]
    pub thetas: Vec<Complex64>,
    /// `table[l][k-1] = λ_k(θ_l)`
    pub table: Vec<Vec<f64>>,
    /// `[min_θ λ_k, max_θ λ_k]`
    pub bands: Vec<(f64, f64)>,
    pub gaps: Vec<BandGap>,
    /// Spacing of the θ-grid in angle; band edges between grid points are
    /// not resolved below this.
    pub theta_spacing: f64,
}

impl BandStructure {
    pub fn band(&self, k: usize) -> (f64, f64) {
        self.bands[k - 1]
    }

    /// CSV with header `l,re_theta,im_theta,k,lambda`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("l,re_theta,im_theta,k,lambda\n");
        for (l, (theta, row)) in self.thetas.iter().zip(&self.table).enumerate() {
            for (k, v) in row.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{l},{:.16e},{:.16e},{},{:.16e}",
                    theta.re,
                    theta.im,
                    k + 1,
                    v
                );
            }
        }
        out
    }
}

pub fn band_structure(
    cell: &CellProblem,
    theta_count: usize,
    k_max: usize,
) -> Result<BandStructure, Error> {
    if theta_count < 8 {
        return Err(SpectraError::InvalidParameter(format!(
            "theta_count must be >= 8, got {theta_count}"
        ))
        .into());
    }
    if k_max == 0 {
        return Err(SpectraError::InvalidParameter("k_max must be >= 1".into()).into());
    }
    let thetas: Vec<EndCondition> = (0..theta_count)
        .map(|l| EndCondition::floquet(l, theta_count))
        .collect();
    let table: Vec<Vec<f64>> = thetas
        .par_iter()
        .map(|&ends| cell.spectrum(1, ends, k_max).map(|s| s.values))
        .collect::<Result<_, _>>()?;
    let k_max = table.iter().map(Vec::len).min().unwrap_or(0);
    let bands: Vec<(f64, f64)> = (0..k_max)
        .map(|k| {
            table
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), row| {
                    (lo.min(row[k]), hi.max(row[k]))
                })
        })
        .collect();
    let gaps = bands
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0].1 < w[1].0)
        .map(|(i, w)| BandGap {
            k: i + 1,
            lower: w[0].1,
            upper: w[1].0,
        })
        .collect();
    Ok(BandStructure {
        thetas: thetas
            .iter()
            .map(|e| match e {
                EndCondition::QuasiPeriodic(t) => *t,
                _ => unreachable!(),
            })
            .collect(),
        table,
        bands,
        gaps,
        theta_spacing: TWO_PI / theta_count as f64,
    })
}

/// Every `k <= k_max` with `λ_k^D < λ_{k+1}^N` on one cell. Separations
/// below the eigenvalue cluster tolerance count as touching.
pub fn gap_condition(cell: &CellProblem, k_max: usize) -> Result<Vec<GapInterval>, Error> {
    let dir = cell.spectrum(1, EndCondition::Dirichlet, k_max)?;
    let neu = cell.spectrum(1, EndCondition::Neumann, k_max + 1)?;
    Ok((0..k_max.min(dir.len()).min(neu.len().saturating_sub(1)))
        .filter(|&i| neu.values[i + 1] - dir.values[i] > cluster_tol(neu.values[i + 1]))
        .filter_map(|i| GapInterval::new(i + 1, dir.values[i], neu.values[i + 1]))
        .collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct GapRecord {
    pub k: usize,
    pub lower: f64,
    pub upper: f64,
    pub source: &'static str,
}

pub fn gaps_json(gaps: &[GapInterval]) -> String {
    let records: Vec<GapRecord> = gaps
        .iter()
        .map(|g| GapRecord {
            k: g.k,
            lower: g.lower,
            upper: g.upper,
            source: "dirichlet-neumann",
        })
        .collect();
    serde_json::to_string_pretty(&records).expect("plain records serialize")
}

#[derive(Debug, Clone, Serialize)]
pub struct EdgeReport {
    pub k: usize,
    pub dirichlet: f64,
    pub neumann: f64,
    pub band_min: f64,
    pub band_max: f64,
    /// Matching distance between `{band_min, band_max}` and
    /// `{dirichlet, neumann}`.
    pub distance: f64,
    /// Which cell eigenvalue the lower band edge matched.
    pub lower_edge: &'static str,
}

/// Band edges of an even Hill operator against its Dirichlet and Neumann
/// eigenvalues on one period.
pub fn hill_band_edges_even(
    kappa: &CurvatureProfile,
    k: usize,
    cells_s: usize,
    theta_count: usize,
) -> Result<EdgeReport, Error> {
    if !kappa.is_even() {
        return Err(SpectraError::NotEven.into());
    }
    if k == 0 {
        return Err(SpectraError::InvalidParameter("band index starts at 1".into()).into());
    }
    let cell = CellProblem::hill(kappa.clone(), cells_s);
    let dirichlet = cell.spectrum(1, EndCondition::Dirichlet, k)?.values[k - 1];
    let neumann = cell.spectrum(1, EndCondition::Neumann, k)?.values[k - 1];
    let bs = band_structure(&cell, theta_count, k)?;
    let (band_min, band_max) = bs.band(k);
    let straight = (band_min - dirichlet).abs().max((band_max - neumann).abs());
    let crossed = (band_min - neumann).abs().max((band_max - dirichlet).abs());
    Ok(EdgeReport {
        k,
        dirichlet,
        neumann,
        band_min,
        band_max,
        distance: straight.min(crossed),
        lower_edge: if straight <= crossed {
            "dirichlet"
        } else {
            "neumann"
        },
    })
}

/// Lowest `count` eigenvalues of assembled forms, without vectors.
pub fn lowest_form_values(forms: &AssembledForms, count: usize) -> Result<Vec<f64>, Error> {
    Ok(lowest_values(&forms.stiffness, &forms.mass, count)?)
}

/// Number of eigenvalues of assembled forms `<= λ`, by inertia counts on both
/// sides of the cluster tolerance.
pub fn count_forms_below(forms: &AssembledForms, lambda: f64) -> Result<usize, Error> {
    let tol = cluster_tol(lambda);
    let below = count_eigenvalues_below(&forms.stiffness, &forms.mass, lambda - tol)?;
    let above = count_eigenvalues_below(&forms.stiffness, &forms.mass, lambda + tol)?;
    if below != above {
        let values = lowest_values(&forms.stiffness, &forms.mass, above)?;
        return Err(SpectraError::AmbiguousLevel {
            level: lambda,
            eigenvalue: values[below],
            tol,
        }
        .into());
    }
    Ok(below)
}

pub fn cluster_tol(lambda: f64) -> f64 {
    1e-6 * (1.0 + lambda.abs())
}

/// Number of eigenvalues `<= λ`, counting multiplicity.
pub fn count_below(spectrum: &Spectrum, lambda: f64) -> Result<usize, SpectraError> {
    count_values_below(&spectrum.values, lambda)
}

pub fn count_values_below(values: &[f64], lambda: f64) -> Result<usize, SpectraError> {
    let tol = cluster_tol(lambda);
    if let Some(&eigenvalue) = values.iter().find(|v| (*v - lambda).abs() <= tol) {
        return Err(SpectraError::AmbiguousLevel {
            level: lambda,
            eigenvalue,
            tol,
        });
    }
    Ok(values.iter().filter(|&&v| v <= lambda).count())
}

/// Discrete spectrum of a separable product domain: all sums `a_i + b_j` not
/// exceeding `max_value`.
pub fn tensor_sum_spectrum(first: &[f64], second: &[f64], max_value: f64) -> Spectrum {
    let mut values = Vec::new();
    for &a in first {
        for &b in second {
            if a + b <= max_value {
                values.push(a + b);
            }
        }
    }
    Spectrum::from_values(values)
}

/// Dirichlet spectrum of a rectangle from tensor-product bilinear elements
/// with the given number of elements per side. Values above `max_value` are
/// dropped; `max_value` must stay well below the resolution limit.
pub fn rectangle_dirichlet_spectrum(
    sides: (f64, f64),
    elements: (usize, usize),
    max_value: f64,
) -> Result<Spectrum, Error> {
    let interval = |len: f64, n: usize| -> Result<Vec<f64>, Error> {
        let mesh = build_mesh(len, 0.0, n + 1, None, None)?;
        let bc = BoundarySpec::new(EdgeCondition::Dirichlet, EndCondition::Dirichlet)?;
        let forms = assemble_with_potential(&mesh, &MetricField::euclidean(len, 0.0), &bc, None)?;
        // discrete values lie above the exact (j π / len)²
        let count =
            ((len * max_value.max(0.0).sqrt() / PI).floor() as usize + 1).min(forms.order());
        lowest_form_values(&forms, count)
    };
    let a = interval(sides.0, elements.0)?;
    let b = interval(sides.1, elements.1)?;
    let first = a.first().copied().unwrap_or(0.0);
    let second = b.first().copied().unwrap_or(0.0);
    if a.last().is_some_and(|&x| x + second <= max_value)
        || b.last().is_some_and(|&y| y + first <= max_value)
    {
        return Err(SpectraError::InvalidParameter(format!(
            "mesh too coarse to resolve eigenvalues up to {max_value}"
        ))
        .into());
    }
    Ok(tensor_sum_spectrum(&a, &b, max_value))
}

/// Lowest `count` eigenvalues of the curved strip of width `ε` from the
/// semi-discrete strip forms (P1 along the curve, `modes` polynomial modes
/// across it).
pub fn strip_spectrum(
    kappa: &CurvatureProfile,
    width: f64,
    cells_s: usize,
    modes: usize,
    ends: EndCondition,
    count: usize,
) -> Result<Vec<f64>, Error> {
    waveguide_metric(kappa, width)?;
    let strip = assemble_strip(kappa, width, cells_s, modes, ends)?;
    let step = if strip.doubled { 2 } else { 1 };
    let values = strip.pencil.lowest_values(count * step)?;
    Ok(values.into_iter().step_by(step).collect())
}

/// Exact Dirichlet count `#{(i, j) >= 1 : π²(i²/a² + j²/b²) <= λ}` of an
/// `a x b` rectangle.
pub fn rectangle_exact_count(sides: (f64, f64), lambda: f64) -> usize {
    let (a, b) = sides;
    let mut count = 0;
    let mut i = 1usize;
    loop {
        let x = (PI * i as f64 / a).powi(2);
        if x > lambda {
            break;
        }
        let rest = lambda - x;
        let mut j = (b * rest.sqrt() / PI).floor() as usize;
        while j > 0 && (PI * j as f64 / b).powi(2) > rest {
            j -= 1;
        }
        while (PI * (j + 1) as f64 / b).powi(2) <= rest {
            j += 1;
        }
        count += j;
        i += 1;
    }
    count
}

#[derive(Debug, Clone, Serialize)]
pub struct WeylRow {
    pub lambda: f64,
    pub count: usize,
    pub weyl_term: f64,
    pub deviation: f64,
    /// `deviation / √λ`
    pub normalized: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct WeylReport {
    pub volume: f64,
    pub rows: Vec<WeylRow>,
    /// `max |N(λ) - λ vol / 4π| / √λ` over the grid.
    pub constant: f64,
    /// Least-squares change of `|deviation| / √λ` across the grid.
    pub drift: f64,
}

/// Two-dimensional Weyl comparison `N(λ) ≈ ω_2 (2π)^{-2} λ vol = λ vol / 4π`.
pub fn weyl_check(
    volume: f64,
    spectrum: &Spectrum,
    lambda_grid: &[f64],
) -> Result<WeylReport, Error> {
    let largest = spectrum.largest().unwrap_or(f64::NEG_INFINITY);
    let mut rows = Vec::with_capacity(lambda_grid.len());
    for &lambda in lambda_grid {
        if lambda > largest {
            return Err(SpectraError::SpectrumTruncated {
                requested: lambda,
                largest,
            }
            .into());
        }
        let count = count_below(spectrum, lambda)?;
        let weyl_term = PI * lambda * volume / (2.0 * PI).powi(2);
        let deviation = count as f64 - weyl_term;
        let normalized = if lambda > 0.0 {
            deviation / lambda.sqrt()
        } else {
            0.0
        };
        rows.push(WeylRow {
            lambda,
            count,
            weyl_term,
            deviation,
            normalized,
        });
    }
    let constant = rows.iter().map(|r| r.normalized.abs()).fold(0.0, f64::max);
    let drift = if rows.len() >= 2 {
        let n = rows.len() as f64;
        let mx = rows.iter().map(|r| r.lambda).sum::<f64>() / n;
        let my = rows.iter().map(|r| r.normalized.abs()).sum::<f64>() / n;
        let sxy: f64 = rows
            .iter()
            .map(|r| (r.lambda - mx) * (r.normalized.abs() - my))
            .sum();
        let sxx: f64 = rows.iter().map(|r| (r.lambda - mx).powi(2)).sum();
        let span = rows.last().unwrap().lambda - rows[0].lambda;
        if sxx > 0.0 {
            sxy / sxx * span
        } else {
            0.0
        }
    } else {
        0.0
    };
    Ok(WeylReport {
        volume,
        rows,
        constant,
        drift,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct EnclosureEntry {
    pub k: usize,
    pub l: usize,
    pub neumann: f64,
    pub quasi_periodic: f64,
    pub dirichlet: f64,
    /// `min(λ^θ - λ^N, λ^D - λ^θ)`
    pub margin: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnclosureReport {
    pub entries: Vec<EnclosureEntry>,
    pub worst_margin: f64,
    pub passed: bool,
}

pub const ENCLOSURE_TOL: f64 = 1e-9;

/// Checks `λ_k^N <= λ_k^θ <= λ_k^D` on the θ-grid.
pub fn enclosure_check(
    cell: &CellProblem,
    theta_count: usize,
    k_max: usize,
) -> Result<EnclosureReport, Error> {
    let bs = band_structure(cell, theta_count, k_max)?;
    let dir = cell.spectrum(1, EndCondition::Dirichlet, k_max)?;
    let neu = cell.spectrum(1, EndCondition::Neumann, k_max)?;
    let k_max = k_max.min(dir.len()).min(neu.len()).min(bs.bands.len());
    let mut entries = Vec::with_capacity(k_max * theta_count);
    for (l, row) in bs.table.iter().enumerate() {
        for k in 0..k_max {
            let (n, t, d) = (neu.values[k], row[k], dir.values[k]);
            entries.push(EnclosureEntry {
                k: k + 1,
                l,
                neumann: n,
                quasi_periodic: t,
                dirichlet: d,
                margin: (t - n).min(d - t),
            });
        }
    }
    let worst_margin = entries
        .iter()
        .map(|e| e.margin)
        .fold(f64::INFINITY, f64::min);
    Ok(EnclosureReport {
        passed: worst_margin >= -ENCLOSURE_TOL,
        entries,
        worst_margin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn count_below_basics() {
        let s = Spectrum::from_values(vec![1.0, 2.0, 3.0]);
        assert_eq!(count_below(&s, 2.5).unwrap(), 2);
        assert_eq!(count_below(&s, 0.5).unwrap(), 0);
        assert!(matches!(
            count_below(&s, 2.0 + 1e-7),
            Err(SpectraError::AmbiguousLevel { .. })
        ));
    }

    #[test]
    fn hill_potential_sign_and_parity() {
        let h = HillProblem::new(CurvatureProfile::even(vec![0.0, 2.0]));
        for i in 0..20 {
            let s = 0.3 * i as f64;
            assert!(h.potential(s) <= 0.0);
            assert!((h.potential(s) - h.potential(-s)).abs() < 1e-14);
        }
        let odd = HillProblem::new(CurvatureProfile::new(vec![0.0, 1.0], vec![1.0]));
        assert!((odd.potential(0.7) - odd.potential(-0.7)).abs() > 1e-3);
    }

    #[test]
    fn band_structure_preconditions() {
        let cell = CellProblem::hill(CurvatureProfile::zero(), 20);
        assert!(band_structure(&cell, 4, 2).is_err());
        assert!(band_structure(&cell, 8, 0).is_err());
    }

    #[test]
    fn free_hill_has_no_gap_condition() {
        let cell = CellProblem::hill(CurvatureProfile::zero(), 200);
        assert!(gap_condition(&cell, 6).unwrap().is_empty());
    }

    #[test]
    fn odd_curvature_rejected_for_edges() {
        let k = CurvatureProfile::new(vec![0.0], vec![1.0]);
        assert!(matches!(
            hill_band_edges_even(&k, 1, 50, 8),
            Err(Error::Spectra(SpectraError::NotEven))
        ));
    }

    #[test]
    fn weyl_truncation_detected() {
        let s = Spectrum::from_values(vec![1.0, 2.0]);
        assert!(matches!(
            weyl_check(1.0, &s, &[3.0]),
            Err(Error::Spectra(SpectraError::SpectrumTruncated { .. }))
        ));
        let r = weyl_check(1.0, &s, &[1e-9]).unwrap();
        assert_eq!(r.rows[0].count, 0);
        assert!(r.rows[0].weyl_term < 1e-9);
    }

    #[test]
    fn rectangle_spectrum_matches_exact_low_modes() {
        let s = rectangle_dirichlet_spectrum((2.0, 1.0), (200, 100), 200.0).unwrap();
        let exact = PI * PI * (1.0 / 4.0 + 1.0);
        assert!((s.values[0] - exact).abs() < 1e-3);
    }
}
