//! Experiment configs, the bundled catalog, and the runner behind the CLI.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::fem::{EdgeCondition, EndCondition};
use crate::gapcount::{
    common_gap_count, count_crossings, default_branches, max_defect_over_theta, select_gap,
    shrink_hole_sweep, sweep_family, thm1_bounds, verify_thm1, waveguide_asymptotics,
    AsymptoticsOptions, BranchTrace, FamilyProblem, SweepOptions,
};
use crate::geometry::{
    make_family, ConformalRegion, CurvatureProfile, FamilyShape, GapInterval, MetricField,
    PerturbationFamily, PerturbationKind, Schedule,
};
use crate::spectra::{
    band_structure, cluster_tol, enclosure_check, gap_condition, gaps_json,
    rectangle_dirichlet_spectrum, rectangle_exact_count, weyl_check, CellOperator, CellProblem,
    Resolution,
};
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    HillBands,
    WaveguideBands,
    GapCheck,
    Sweep,
    Thm1,
    Weyl,
    ShrinkHole,
    Asymptotics,
}

impl ExperimentKind {
    /// CLI subcommand that runs this kind.
    pub fn subcommand(self) -> &'static str {
        match self {
            Self::HillBands | Self::WaveguideBands => "bands",
            Self::GapCheck => "gaps",
            Self::Sweep => "sweep",
            Self::Thm1 => "thm1",
            Self::Weyl => "weyl",
            Self::ShrinkHole => "shrink",
            Self::Asymptotics => "asymptotics",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurvatureConfig {
    #[serde(default)]
    pub cos: Vec<f64>,
    #[serde(default)]
    pub sin: Vec<f64>,
}

impl CurvatureConfig {
    pub fn profile(&self) -> CurvatureProfile {
        CurvatureProfile::new(self.cos.clone(), self.sin.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellShape {
    Hill,
    Waveguide,
    /// Euclidean rectangle `[0, length] x [0, width]`.
    Flat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct CellConfig {
    #[serde(rename = "type")]
    pub shape: CellShape,
    pub width: Option<f64>,
    pub length: Option<f64>,
    pub cells_s: usize,
    #[serde(default)]
    pub cells_u: usize,
    #[serde(default = "default_sides")]
    pub sides: EdgeCondition,
}

fn default_sides() -> EdgeCondition {
    EdgeCondition::Dirichlet
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct BandsConfig {
    #[serde(default = "default_theta_count")]
    pub theta_count: usize,
    pub k_max: usize,
    /// Supercell sizes for the unperturbed gap count.
    #[serde(default)]
    pub supercells: Vec<usize>,
    pub level: Option<LevelSpec>,
}

fn default_theta_count() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LevelSpec {
    Value(f64),
    /// `"gap-midpoint:k"`
    Named(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConformalDirection {
    BlowUp,
    Shrink,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FamilyConfig {
    pub kind: PerturbationKind,
    pub m: usize,
    pub direction: Option<ConformalDirection>,
    pub region: Option<ConformalRegion>,
    pub center: Option<f64>,
    pub collar: Option<f64>,
    pub hole_center: Option<[f64; 2]>,
    pub r_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct SweepConfig {
    pub n: Option<usize>,
    pub tau_max: Option<f64>,
    pub steps: Option<usize>,
    /// Explicit τ-grid, used instead of `tau_max` / `steps`.
    pub taus: Option<Vec<f64>>,
    pub level: Option<LevelSpec>,
    pub branches: Option<usize>,
    /// Expected right-hand side, used for the default branch window.
    pub expected_rhs: Option<usize>,
    /// Required crossing count, when the experiment promises one.
    pub min_crossings: Option<usize>,
    /// Required growth of the lowest eigenvalue in hole sweeps.
    pub min_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct WeylConfig {
    pub sides: [f64; 2],
    pub elements: [usize; 2],
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub lambda_step: f64,
    /// Largest admissible drift of `|deviation| / √λ`, relative to the fitted
    /// constant.
    #[serde(default = "default_trend_ratio")]
    pub max_trend_ratio: f64,
}

fn default_trend_ratio() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct AsymptoticsConfig {
    pub epsilons: Vec<f64>,
    /// Floquet sample `l` of `theta_count`; `0` is periodic.
    #[serde(default)]
    pub theta_index: usize,
    #[serde(default = "default_theta_count")]
    pub theta_count: usize,
    pub ks: Vec<usize>,
    pub cells_s: usize,
    #[serde(default = "default_modes")]
    pub modes: usize,
    #[serde(default = "default_levels")]
    pub levels: usize,
    #[serde(default = "default_hill_cells")]
    pub hill_cells: usize,
    #[serde(default = "default_order_range")]
    pub order_range: [f64; 2],
    /// Floquet samples for the check that `max_θ |δ|` shrinks with `ε`.
    pub uniformity_thetas: Option<usize>,
}

fn default_modes() -> usize {
    12
}

fn default_levels() -> usize {
    3
}

fn default_hill_cells() -> usize {
    200
}

fn default_order_range() -> [f64; 2] {
    [0.3, 3.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub stem: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub description: String,
    pub curvature: Option<CurvatureConfig>,
    pub cell: Option<CellConfig>,
    pub bands: Option<BandsConfig>,
    pub family: Option<FamilyConfig>,
    pub sweep: Option<SweepConfig>,
    pub weyl: Option<WeylConfig>,
    pub asymptotics: Option<AsymptoticsConfig>,
    pub output: Option<OutputConfig>,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn require<'a, T>(section: &'a Option<T>, name: &str) -> Result<&'a T, Error> {
    section
        .as_ref()
        .ok_or_else(|| config_err(format!("missing [{name}] section")))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, Error> {
        let config: Self = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn stem(&self) -> String {
        self.output
            .as_ref()
            .map(|o| o.stem.clone())
            .unwrap_or_else(|| self.kind.subcommand().to_string())
    }

    /// Checks the preconditions of the operations the config feeds.
    pub fn validate(&self) -> Result<(), Error> {
        if let Some(o) = &self.output {
            if o.stem.is_empty() || o.stem.contains(['/', '\\']) {
                return Err(config_err("output stem must be a plain file name"));
            }
        }
        match self.kind {
            ExperimentKind::HillBands
            | ExperimentKind::WaveguideBands
            | ExperimentKind::GapCheck => {
                let cell = self.cell_config()?;
                let bands = require(&self.bands, "bands")?;
                if bands.theta_count < 8 {
                    return Err(config_err(format!(
                        "theta_count must be >= 8, got {}",
                        bands.theta_count
                    )));
                }
                if bands.k_max == 0 {
                    return Err(config_err("k_max must be >= 1"));
                }
                match (self.kind, cell.shape) {
                    (ExperimentKind::HillBands, CellShape::Hill)
                    | (ExperimentKind::WaveguideBands, CellShape::Waveguide) => {}
                    (ExperimentKind::GapCheck, _) => {}
                    (kind, shape) => {
                        return Err(config_err(format!("{kind:?} cannot use a {shape:?} cell")))
                    }
                }
                if !bands.supercells.is_empty() && bands.level.is_none() {
                    return Err(config_err("supercell counts need a level"));
                }
                if bands.supercells.contains(&0) {
                    return Err(config_err("supercell sizes must be >= 1"));
                }
            }
            ExperimentKind::Sweep | ExperimentKind::Thm1 => {
                let cell = self.cell_config()?;
                if cell.shape == CellShape::Hill {
                    return Err(config_err(
                        "perturbation families need a waveguide or flat cell",
                    ));
                }
                let family = require(&self.family, "family")?;
                let sweep = require(&self.sweep, "sweep")?;
                let n = sweep.n.ok_or_else(|| config_err("sweep.n is required"))?;
                if family.m == 0 {
                    return Err(config_err("block size m must be >= 1"));
                }
                if n <= family.m {
                    return Err(config_err(format!(
                        "precondition n > m violated: n = {n}, m = {}",
                        family.m
                    )));
                }
                if sweep.level.is_none() {
                    return Err(config_err("sweep.level is required"));
                }
                self.tau_grid()?;
            }
            ExperimentKind::ShrinkHole => {
                let cell = self.cell_config()?;
                if cell.sides != EdgeCondition::Neumann {
                    return Err(config_err("hole sweeps need Neumann sides"));
                }
                let family = require(&self.family, "family")?;
                if family.kind != PerturbationKind::HoleShrink {
                    return Err(config_err(
                        "shrink-hole experiments need a hole-shrink family",
                    ));
                }
                require(&self.sweep, "sweep")?;
                self.tau_grid()?;
            }
            ExperimentKind::Weyl => {
                let w = require(&self.weyl, "weyl")?;
                if !(w.sides[0] > 0.0 && w.sides[1] > 0.0) {
                    return Err(config_err("rectangle sides must be positive"));
                }
                if !(w.lambda_step > 0.0) || w.lambda_max < w.lambda_min {
                    return Err(config_err("lambda grid must be increasing"));
                }
            }
            ExperimentKind::Asymptotics => {
                let a = require(&self.asymptotics, "asymptotics")?;
                require(&self.curvature, "curvature")?;
                if a.epsilons.is_empty() || a.ks.is_empty() {
                    return Err(config_err("asymptotics need epsilons and ks"));
                }
                if a.theta_index >= a.theta_count {
                    return Err(config_err("theta_index must be below theta_count"));
                }
                if a.levels < 2 {
                    return Err(config_err("mesh ladder needs at least two levels"));
                }
            }
        }
        Ok(())
    }

    fn cell_config(&self) -> Result<&CellConfig, Error> {
        let cell = require(&self.cell, "cell")?;
        match cell.shape {
            CellShape::Hill => {}
            CellShape::Waveguide | CellShape::Flat => {
                if !cell.width.is_some_and(|w| w > 0.0) {
                    return Err(config_err("cell.width must be positive"));
                }
                if cell.cells_u == 0 {
                    return Err(config_err("cell.cells_u must be >= 1 for strips"));
                }
            }
        }
        if cell.shape == CellShape::Waveguide {
            require(&self.curvature, "curvature")?;
        }
        Ok(cell)
    }

    fn tau_grid(&self) -> Result<Vec<f64>, Error> {
        let sweep = require(&self.sweep, "sweep")?;
        let taus = match (&sweep.taus, sweep.tau_max, sweep.steps) {
            (Some(t), _, _) => t.clone(),
            (None, Some(tau_max), Some(steps)) if tau_max > 0.0 && steps > 0 => (0..=steps)
                .map(|i| tau_max * i as f64 / steps as f64)
                .collect(),
            _ => return Err(config_err("sweep needs taus, or tau_max > 0 and steps > 0")),
        };
        if taus.first() != Some(&0.0) {
            return Err(config_err("tau grid must start at 0"));
        }
        if taus.windows(2).any(|w| w[1] <= w[0]) {
            return Err(config_err("tau grid must be strictly increasing"));
        }
        Ok(taus)
    }

    fn cell_problem(&self, scale: f64) -> Result<CellProblem, Error> {
        let c = self.cell_config()?;
        let resolution = Resolution {
            cells_s: c.cells_s,
            cells_u: c.cells_u,
        }
        .scaled(scale);
        Ok(match c.shape {
            CellShape::Hill => CellProblem::hill(
                self.curvature.clone().unwrap_or_default().profile(),
                resolution.cells_s,
            ),
            CellShape::Waveguide => {
                let mut cell = CellProblem::waveguide(
                    &require(&self.curvature, "curvature")?.profile(),
                    c.width.unwrap_or_default(),
                    resolution,
                )?;
                cell.sides = c.sides;
                cell
            }
            CellShape::Flat => CellProblem::metric(
                MetricField::euclidean(c.length.unwrap_or(2.0 * PI), c.width.unwrap_or_default()),
                resolution,
                c.sides,
            ),
        })
    }

    fn family(&self, cell: &CellProblem) -> Result<PerturbationFamily, Error> {
        let f = require(&self.family, "family")?;
        let CellOperator::Metric(metric) = &cell.operator else {
            return Err(config_err("families need a metric cell"));
        };
        let (schedule, shape) = match f.kind {
            PerturbationKind::ConformalConstantRegion => {
                let schedule = match f.direction {
                    Some(ConformalDirection::BlowUp) => Schedule::BlowUp,
                    Some(ConformalDirection::Shrink) => Schedule::Shrink,
                    None => return Err(config_err("conformal families need a direction")),
                };
                let region = f
                    .region
                    .ok_or_else(|| config_err("conformal families need a region"))?;
                (schedule, FamilyShape::Conformal(region))
            }
            PerturbationKind::BubbleInsert => {
                let center = f
                    .center
                    .ok_or_else(|| config_err("bubble families need a center"))?;
                let collar = f
                    .collar
                    .ok_or_else(|| config_err("bubble families need a collar"))?;
                (Schedule::Linear, FamilyShape::Bubble { center, collar })
            }
            PerturbationKind::HoleShrink => {
                let r_max = f
                    .r_max
                    .ok_or_else(|| config_err("hole families need r_max"))?;
                let [s, u] = f
                    .hole_center
                    .ok_or_else(|| config_err("hole families need hole_center"))?;
                (
                    Schedule::Saturating { r_max },
                    FamilyShape::Hole { center: (s, u) },
                )
            }
        };
        Ok(make_family(f.kind, metric, f.m, schedule, shape)?)
    }
}

/// Resolves a level spec against the gaps of a cell.
fn resolve_level(spec: &LevelSpec, gaps: &[GapInterval]) -> Result<(GapInterval, f64), Error> {
    match spec {
        LevelSpec::Named(name) => {
            let k: usize = name
                .strip_prefix("gap-midpoint:")
                .and_then(|k| k.parse().ok())
                .ok_or_else(|| {
                    config_err(format!(
                        "level must be a number or \"gap-midpoint:k\", got {name:?}"
                    ))
                })?;
            let gap = select_gap(gaps, k)?;
            Ok((gap, gap.midpoint()))
        }
        LevelSpec::Value(v) => {
            if let Some(gap) = gaps.iter().find(|g| g.contains(*v)) {
                return Ok((*gap, *v));
            }
            // report the nearest gap so the message says where the level could go
            let distance = |g: &GapInterval| (g.midpoint() - v).abs();
            let nearest = gaps
                .iter()
                .min_by(|a, b| distance(a).total_cmp(&distance(b)));
            Err(crate::gapcount::CountingError::LevelNotInGap {
                level: *v,
                lower: nearest.map_or(f64::NAN, |g| g.lower),
                upper: nearest.map_or(f64::NAN, |g| g.upper),
            }
            .into())
        }
    }
}

fn level_gap_index(spec: &LevelSpec) -> usize {
    match spec {
        LevelSpec::Named(name) => name
            .rsplit(':')
            .next()
            .and_then(|k| k.parse().ok())
            .unwrap_or(8),
        LevelSpec::Value(_) => 8,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub kind: ExperimentKind,
    pub checks: Vec<Check>,
    pub results: Value,
    pub artifacts: Vec<Artifact>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// JSON report with the checks and the results.
    pub fn report(&self, description: &str) -> String {
        serde_json::to_string_pretty(&json!({
            "experiment": self.kind,
            "description": description,
            "pass": self.passed(),
            "checks": self.checks,
            "results": self.results,
        }))
        .expect("report serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub resolution_scale: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            resolution_scale: 1.0,
        }
    }
}

/// Runs an experiment; the JSON report is the last artifact.
pub fn run(config: &ExperimentConfig, opts: &RunOptions) -> Result<Outcome, Error> {
    config.validate()?;
    if !(opts.resolution_scale > 0.0) {
        return Err(config_err("resolution scale must be positive"));
    }
    let stem = config.stem();
    let mut outcome = match config.kind {
        ExperimentKind::HillBands | ExperimentKind::WaveguideBands => {
            run_bands(config, opts, &stem)?
        }
        ExperimentKind::GapCheck => run_gaps(config, opts, &stem)?,
        ExperimentKind::Sweep | ExperimentKind::Thm1 => run_sweep(config, opts, &stem)?,
        ExperimentKind::Weyl => run_weyl(config, opts, &stem)?,
        ExperimentKind::ShrinkHole => run_shrink(config, opts, &stem)?,
        ExperimentKind::Asymptotics => run_asymptotics(config, opts, &stem)?,
    };
    let report = outcome.report(&config.description);
    outcome.artifacts.push(Artifact {
        name: format!("{stem}.json"),
        contents: report,
    });
    Ok(outcome)
}

fn run_bands(config: &ExperimentConfig, opts: &RunOptions, stem: &str) -> Result<Outcome, Error> {
    let bands = require(&config.bands, "bands")?;
    let cell = config.cell_problem(opts.resolution_scale)?;
    let bs = band_structure(&cell, bands.theta_count, bands.k_max)?;
    let enclosure = enclosure_check(&cell, bands.theta_count, bands.k_max)?;
    let gaps = gap_condition(&cell, bands.k_max.saturating_sub(1).max(1))?;
    let mut checks = vec![Check::new(
        "dirichlet-neumann enclosure",
        enclosure.passed,
        format!("worst margin {:e}", enclosure.worst_margin),
    )];
    let sorted = bs
        .table
        .iter()
        .all(|row| row.windows(2).all(|w| w[0] <= w[1]));
    checks.push(Check::new("eigenvalues sorted per theta", sorted, ""));
    // λ_k(θ) = λ_k(θ̄): sample l pairs with L - l
    let count = bs.thetas.len();
    let mut asym: f64 = 0.0;
    for l in 1..count {
        for (a, b) in bs.table[l].iter().zip(&bs.table[count - l]) {
            asym = asym.max((a - b).abs());
        }
    }
    checks.push(Check::new(
        "conjugate theta symmetry",
        asym <= 1e-9,
        format!("max difference {asym:e}"),
    ));
    let disjoint = gaps.iter().all(|g| {
        bs.bands.iter().all(|&(lo, hi)| {
            hi <= g.lower + cluster_tol(g.lower) || lo >= g.upper - cluster_tol(g.upper)
        })
    });
    checks.push(Check::new(
        "gap intervals avoid the bands",
        disjoint,
        format!("{} gaps", gaps.len()),
    ));
    Ok(Outcome {
        kind: config.kind,
        checks,
        results: json!({
            "bands": bs.bands,
            "band_gaps": bs.gaps,
            "theta_spacing": bs.theta_spacing,
            "gap_condition": gaps,
            "worst_enclosure_margin": enclosure.worst_margin,
        }),
        artifacts: vec![
            Artifact {
                name: format!("{stem}_bands.csv"),
                contents: bs.to_csv(),
            },
            Artifact {
                name: format!("{stem}_gaps.json"),
                contents: gaps_json(&gaps),
            },
        ],
    })
}

fn run_gaps(config: &ExperimentConfig, opts: &RunOptions, stem: &str) -> Result<Outcome, Error> {
    let bands = require(&config.bands, "bands")?;
    let cell = config.cell_problem(opts.resolution_scale)?;
    let gaps = gap_condition(&cell, bands.k_max)?;
    let bs = band_structure(&cell, bands.theta_count, bands.k_max + 1)?;
    let mut checks = Vec::new();
    for g in &gaps {
        let (lo_tol, hi_tol) = (cluster_tol(g.lower), cluster_tol(g.upper));
        let clear = bs
            .bands
            .iter()
            .all(|&(lo, hi)| hi <= g.lower + lo_tol || lo >= g.upper - hi_tol);
        checks.push(Check::new(
            &format!("gap {} avoids the bands", g.k),
            clear,
            format!("({}, {})", g.lower, g.upper),
        ));
    }
    let mut counts = Vec::new();
    if let Some(level) = &bands.level {
        let (gap, lambda) = resolve_level(level, &gaps)?;
        for &n in &bands.supercells {
            for (name, ends) in [
                ("dirichlet", EndCondition::Dirichlet),
                ("neumann", EndCondition::Neumann),
            ] {
                let c = common_gap_count(&cell, n, &gap, lambda, ends)?;
                checks.push(Check::new(
                    &format!("count below level, n = {n}, {name} ends"),
                    c.count == c.expected,
                    format!("{} (expected {})", c.count, c.expected),
                ));
                counts
                    .push(json!({"n": n, "ends": name, "count": c.count, "expected": c.expected}));
            }
        }
    }
    Ok(Outcome {
        kind: config.kind,
        checks,
        results: json!({"gaps": gaps, "bands": bs.bands, "counts": counts}),
        artifacts: vec![Artifact {
            name: format!("{stem}_gaps.json"),
            contents: gaps_json(&gaps),
        }],
    })
}

fn monotone_violation(trace: &BranchTrace, nonincreasing: bool) -> f64 {
    let j = trace.branches();
    let mut worst: f64 = 0.0;
    for w in trace.values.windows(2) {
        for b in 0..j {
            let step = w[1][b] - w[0][b];
            let bad = if nonincreasing { step } else { -step };
            worst = worst.max(bad);
        }
    }
    worst
}

fn run_sweep(config: &ExperimentConfig, opts: &RunOptions, stem: &str) -> Result<Outcome, Error> {
    let sweep_cfg = require(&config.sweep, "sweep")?;
    let level = sweep_cfg.level.as_ref().expect("validated");
    let n = sweep_cfg.n.expect("validated");
    let cell = config.cell_problem(opts.resolution_scale)?;
    let family = config.family(&cell)?;
    let gaps = gap_condition(&cell, level_gap_index(level))?;
    let (gap, lambda) = resolve_level(level, &gaps)?;
    let taus = config.tau_grid()?;
    let branches = sweep_cfg
        .branches
        .unwrap_or_else(|| default_branches(gap.k, n, sweep_cfg.expected_rhs.unwrap_or(3)));
    let problem = FamilyProblem::new(cell.clone(), family.clone())?;
    let trace = sweep_family(
        &problem,
        n,
        EndCondition::Dirichlet,
        &taus,
        &SweepOptions::new(branches, Some(lambda)),
    )?;
    let crossings = count_crossings(&trace, lambda)?;
    let top_below = trace
        .values
        .iter()
        .filter(|row| row[branches - 1] <= lambda)
        .count();
    let mut checks = vec![Check::new(
        "branch window reaches above the level",
        top_below == 0,
        format!("{branches} branches; top branch below the level at {top_below} samples"),
    )];
    let unperturbed = common_gap_count(&cell, n, &gap, lambda, EndCondition::Dirichlet)?;
    checks.push(Check::new(
        "unperturbed supercell count equals k n",
        unperturbed.count == unperturbed.expected,
        format!("{} (expected {})", unperturbed.count, unperturbed.expected),
    ));
    if family.kind() == PerturbationKind::ConformalConstantRegion {
        let nonincreasing = family.schedule() == Schedule::BlowUp;
        let worst = monotone_violation(&trace, nonincreasing);
        checks.push(Check::new(
            if nonincreasing {
                "branches nonincreasing"
            } else {
                "branches nondecreasing"
            },
            worst <= 1e-9 * (1.0 + lambda.abs()),
            format!("worst step against the trend {worst:e}"),
        ));
    }
    let mut results = json!({
        "lambda": lambda,
        "gap": gap,
        "branches": branches,
        "samples": trace.taus.len(),
        "crossings": crossings,
        "max_step": trace.max_step(),
    });
    if config.kind == ExperimentKind::Thm1 {
        let report = thm1_bounds(&problem, &gap, lambda, trace.tau_max())?;
        let verification = verify_thm1(&trace, &report)?;
        checks.push(Check::new(
            "crossings >= rhs_above",
            verification.pass_above,
            format!("{} >= {}", crossings.total, report.rhs_above),
        ));
        checks.push(Check::new(
            "crossings >= rhs_below",
            verification.pass_below,
            format!("{} >= {}", crossings.total, report.rhs_below),
        ));
        checks.push(Check::new(
            "unperturbed block counts equal k m",
            report.block_count_matches,
            format!(
                "dirichlet {}, neumann {}, expected {}",
                report.dirichlet_block, report.neumann_block, report.expected_block_count
            ),
        ));
        results["report"] = serde_json::to_value(&report).expect("report serializes");
        results["verification"] = json!({
            "pass": verification.pass,
            "margin_above": verification.margin_above,
            "margin_below": verification.margin_below,
        });
    }
    if let Some(min) = sweep_cfg.min_crossings {
        checks.push(Check::new(
            "required crossing count",
            crossings.total >= min,
            format!("{} >= {min}", crossings.total),
        ));
    }
    Ok(Outcome {
        kind: config.kind,
        checks,
        results,
        artifacts: vec![Artifact {
            name: format!("{stem}_trace.csv"),
            contents: trace.to_csv(),
        }],
    })
}

fn run_weyl(config: &ExperimentConfig, opts: &RunOptions, stem: &str) -> Result<Outcome, Error> {
    let w = require(&config.weyl, "weyl")?;
    let scale = |n: usize| ((n as f64 * opts.resolution_scale).round() as usize).max(4);
    let sides = (w.sides[0], w.sides[1]);
    let steps = ((w.lambda_max - w.lambda_min) / w.lambda_step + 1e-9).floor() as usize;
    let grid: Vec<f64> = (0..=steps)
        .map(|i| w.lambda_min + w.lambda_step * i as f64)
        .collect();
    let top = grid.last().copied().unwrap_or(w.lambda_min);
    // one extra unit of headroom so the top grid value is not truncated
    let spectrum = rectangle_dirichlet_spectrum(
        sides,
        (scale(w.elements[0]), scale(w.elements[1])),
        top + 1.0,
    )?;
    let report = weyl_check(sides.0 * sides.1, &spectrum, &grid)?;
    let mismatches: Vec<f64> = report
        .rows
        .iter()
        .filter(|r| r.count != rectangle_exact_count(sides, r.lambda))
        .map(|r| r.lambda)
        .collect();
    let mut csv = String::from("lambda,count,weyl_term,deviation,normalized\n");
    for r in &report.rows {
        csv += &format!(
            "{:.16e},{},{:.16e},{:.16e},{:.16e}\n",
            r.lambda, r.count, r.weyl_term, r.deviation, r.normalized
        );
    }
    let checks = vec![
        Check::new(
            "counts equal the exact lattice count",
            mismatches.is_empty(),
            format!("{} mismatches", mismatches.len()),
        ),
        Check::new(
            "normalized deviation bounded",
            report.constant.is_finite(),
            format!("C = {}", report.constant),
        ),
        Check::new(
            "no increasing trend",
            report.drift <= w.max_trend_ratio * report.constant,
            format!("drift {} vs {} C", report.drift, w.max_trend_ratio),
        ),
    ];
    Ok(Outcome {
        kind: config.kind,
        checks,
        results: json!({"constant": report.constant, "drift": report.drift, "mismatches": mismatches}),
        artifacts: vec![Artifact {
            name: format!("{stem}_weyl.csv"),
            contents: csv,
        }],
    })
}

fn run_shrink(config: &ExperimentConfig, opts: &RunOptions, stem: &str) -> Result<Outcome, Error> {
    let sweep_cfg = require(&config.sweep, "sweep")?;
    let cell = config.cell_problem(opts.resolution_scale)?;
    let family = config.family(&cell)?;
    let taus = config.tau_grid()?;
    let result = shrink_hole_sweep(&cell, &family, &taus)?;
    let min_ratio = sweep_cfg.min_ratio.unwrap_or(10.0);
    let checks = vec![
        Check::new(
            "lowest eigenvalue strictly increasing",
            result.strictly_increasing(),
            format!("violations at {:?}", result.violations),
        ),
        Check::new(
            "growth ratio",
            result.ratio >= min_ratio,
            format!("{} >= {min_ratio}", result.ratio),
        ),
    ];
    Ok(Outcome {
        kind: config.kind,
        checks,
        results: serde_json::to_value(&result).expect("sweep serializes"),
        artifacts: vec![Artifact {
            name: format!("{stem}_hole.csv"),
            contents: result.to_csv(),
        }],
    })
}

fn run_asymptotics(
    config: &ExperimentConfig,
    opts: &RunOptions,
    stem: &str,
) -> Result<Outcome, Error> {
    let a = require(&config.asymptotics, "asymptotics")?;
    let kappa = require(&config.curvature, "curvature")?.profile();
    let options = AsymptoticsOptions {
        cells_s: ((a.cells_s as f64 * opts.resolution_scale).round() as usize).max(4),
        modes: a.modes,
        levels: a.levels,
        hill_cells: ((a.hill_cells as f64 * opts.resolution_scale).round() as usize).max(8),
    };
    let ends = EndCondition::floquet(a.theta_index, a.theta_count);
    let rows = waveguide_asymptotics(&kappa, &a.epsilons, ends, &a.ks, &options)?;
    let mut checks = Vec::new();
    let mut csv = String::from("epsilon,k,waveguide,hill,defect,discretization_error,order\n");
    for r in &rows {
        checks.push(Check::new(
            &format!("discretization certified, eps = {}, k = {}", r.epsilon, r.k),
            r.certified,
            format!(
                "error {:e} vs defect {:e}",
                r.discretization_error, r.defect
            ),
        ));
        if let Some(order) = r.order {
            checks.push(Check::new(
                &format!("empirical order, eps = {}, k = {}", r.epsilon, r.k),
                order >= a.order_range[0] && order <= a.order_range[1],
                format!("{order} in [{}, {}]", a.order_range[0], a.order_range[1]),
            ));
        }
        csv += &format!(
            "{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e},{}\n",
            r.epsilon,
            r.k,
            r.waveguide,
            r.hill,
            r.defect,
            r.discretization_error,
            r.order.map(|o| format!("{o:.16e}")).unwrap_or_default()
        );
    }
    let mut uniformity = Vec::new();
    if let Some(count) = a.uniformity_thetas {
        let mut eps = a.epsilons.clone();
        eps.sort_by(|x, y| y.total_cmp(x));
        for &e in &eps {
            let worst = max_defect_over_theta(&kappa, e, count, 1, &options)?;
            uniformity.push(json!({"epsilon": e, "max_defect": worst}));
        }
        let values: Vec<f64> = uniformity
            .iter()
            .map(|u| u["max_defect"].as_f64().unwrap_or(f64::NAN))
            .collect();
        checks.push(Check::new(
            "max over theta of |defect| decreases with eps",
            values.windows(2).all(|w| w[1] < w[0]),
            format!("{values:?}"),
        ));
    }
    Ok(Outcome {
        kind: config.kind,
        checks,
        results: json!({"rows": rows, "uniformity": uniformity}),
        artifacts: vec![Artifact {
            name: format!("{stem}_asymptotics.csv"),
            contents: csv,
        }],
    })
}

/// A bundled experiment config.
#[derive(Debug, Clone, Copy)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub summary: &'static str,
    pub source: &'static str,
}

impl CatalogEntry {
    pub fn config(&self) -> Result<ExperimentConfig, Error> {
        ExperimentConfig::from_toml(self.source)
    }
}

pub fn catalog() -> &'static [CatalogEntry] {
    &[
        CatalogEntry {
            name: "free-hill-bands",
            summary: "bands of the free one-dimensional operator",
            source: include_str!("../configs/free-hill-bands.toml"),
        },
        CatalogEntry {
            name: "waveguide-bands",
            summary: "bands and enclosure of the thin curved strip",
            source: include_str!("../configs/waveguide-bands.toml"),
        },
        CatalogEntry {
            name: "hill-gap-count",
            summary: "gap condition and supercell counts of a strongly curved profile",
            source: include_str!("../configs/hill-gap-count.toml"),
        },
        CatalogEntry {
            name: "conformal-blow-up",
            summary: "conformal blow-up of a block, crossings against the Dirichlet bound",
            source: include_str!("../configs/conformal-blow-up.toml"),
        },
        CatalogEntry {
            name: "conformal-shrink",
            summary: "conformal shrink of a block, crossings against the Neumann bound",
            source: include_str!("../configs/conformal-shrink.toml"),
        },
        CatalogEntry {
            name: "bubble-insert",
            summary: "flat rectangle spliced into the strip, crossings against the Dirichlet bound",
            source: include_str!("../configs/bubble-insert.toml"),
        },
        CatalogEntry {
            name: "hole-shrink",
            summary: "growing Dirichlet hole in a Neumann block",
            source: include_str!("../configs/hole-shrink.toml"),
        },
        CatalogEntry {
            name: "weyl-square",
            summary: "eigenvalue counts of the square against the Weyl term",
            source: include_str!("../configs/weyl-square.toml"),
        },
        CatalogEntry {
            name: "thin-strip-asymptotics",
            summary: "thin-strip expansion defect under halving of the width",
            source: include_str!("../configs/thin-strip-asymptotics.toml"),
        },
    ]
}

pub fn find_entry(name: &str) -> Option<&'static CatalogEntry> {
    catalog().iter().find(|e| e.name == name)
}
