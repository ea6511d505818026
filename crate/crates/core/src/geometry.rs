//! Curvature profiles, planar curves, and metric fields on parameter
//! rectangles `[0, S] x [0, ε]` in arclength/normal coordinates `(s, u)`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TWO_PI: f64 = 2.0 * PI;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("curve quadrature under-resolved: doubling samples moved the endpoint by {0:e}")]
    QuadratureUnderResolved(f64),
    #[error("at least 16 samples are required, got {0}")]
    TooFewSamples(usize),
    #[error("tube self-intersects: 1 - u*kappa(s) = {value} at s = {s}, u = {u}")]
    TubeSelfIntersection { s: f64, u: f64, value: f64 },
    #[error("conformal factor must be positive, got {value} at ({s}, {u})")]
    NonPositiveFactor { s: f64, u: f64, value: f64 },
    #[error("perturbation support touches the block boundary: {0}")]
    SupportTooLarge(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// 2π-periodic curvature `κ(s) = a_0 + Σ a_j cos(js) + b_j sin(js)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureProfile {
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl CurvatureProfile {
    /// `cos` holds `a_0..a_F`, `sin` holds `b_1..b_F`.
    pub fn new(cos: Vec<f64>, sin: Vec<f64>) -> Self {
        let mut cos = cos;
        if cos.is_empty() {
            cos.push(0.0);
        }
        Self { cos, sin }
    }

    pub fn zero() -> Self {
        Self::new(vec![0.0], Vec::new())
    }

    pub fn constant(value: f64) -> Self {
        Self::new(vec![value], Vec::new())
    }

    /// Even profile from cosine coefficients `a_0..a_F`.
    pub fn even(cos: Vec<f64>) -> Self {
        Self::new(cos, Vec::new())
    }

    pub fn cos_coefficients(&self) -> &[f64] {
        &self.cos
    }

    pub fn sin_coefficients(&self) -> &[f64] {
        &self.sin
    }

    pub fn is_even(&self) -> bool {
        self.sin.iter().all(|&b| b == 0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.is_even() && self.cos.iter().all(|&a| a == 0.0)
    }

    pub fn eval(&self, s: f64) -> f64 {
        let mut k = self.cos[0];
        for (j, a) in self.cos.iter().enumerate().skip(1) {
            k += a * (j as f64 * s).cos();
        }
        for (j, b) in self.sin.iter().enumerate() {
            k += b * ((j + 1) as f64 * s).sin();
        }
        k
    }

    /// `∫_0^{2π} κ = 2π a_0`.
    pub fn integral(&self) -> f64 {
        TWO_PI * self.cos[0]
    }

    /// Bound on `max |κ|` from sampling plus the coefficient tail.
    pub fn max_abs(&self) -> f64 {
        let n = 4096;
        (0..n)
            .map(|i| self.eval(TWO_PI * i as f64 / n as f64).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_value(&self) -> f64 {
        let n = 4096;
        (0..n)
            .map(|i| self.eval(TWO_PI * i as f64 / n as f64))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Curve sampled on a uniform arclength grid over one period.
#[derive(Debug, Clone)]
pub struct SampledCurve {
    pub s: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub tangent: Vec<(f64, f64)>,
    pub normal: Vec<(f64, f64)>,
}

impl SampledCurve {
    pub fn end_point(&self) -> (f64, f64) {
        (*self.x.last().unwrap(), *self.y.last().unwrap())
    }

    /// Signed curvature by central differences, positive when the curve turns
    /// away from its normal `ω̇⊥`, so it reproduces the generating `κ`.
    pub fn finite_difference_curvature(&self) -> Vec<(f64, f64)> {
        let h = self.s[1] - self.s[0];
        (1..self.s.len() - 1)
            .map(|i| {
                let dx = (self.x[i + 1] - self.x[i - 1]) / (2.0 * h);
                let dy = (self.y[i + 1] - self.y[i - 1]) / (2.0 * h);
                let ddx = (self.x[i + 1] - 2.0 * self.x[i] + self.x[i - 1]) / (h * h);
                let ddy = (self.y[i + 1] - 2.0 * self.y[i] + self.y[i - 1]) / (h * h);
                let k = -(dx * ddy - dy * ddx) / (dx * dx + dy * dy).powf(1.5);
                (self.s[i], k)
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,x,y,tx,ty\n");
        for i in 0..self.s.len() {
            out.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                self.s[i], self.x[i], self.y[i], self.tangent[i].0, self.tangent[i].1
            ));
        }
        out
    }
}

/// Cumulative composite Simpson integral of uniformly sampled `f` with step `h`.
fn cumulative_simpson(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0; n];
    for i in 1..n {
        out[i] = if i % 2 == 0 {
            out[i - 2] + h / 3.0 * (f[i - 2] + 4.0 * f[i - 1] + f[i])
        } else if i + 1 < n {
            // quadratic through i-1, i, i+1 integrated over [i-1, i]
            out[i - 1] + h / 12.0 * (5.0 * f[i - 1] + 8.0 * f[i] - f[i + 1])
        } else {
            out[i - 1] + h / 12.0 * (-f[i - 2] + 8.0 * f[i - 1] + 5.0 * f[i])
        };
    }
    out
}

fn integrate_curve(kappa: &CurvatureProfile, samples: usize) -> SampledCurve {
    let h = TWO_PI / samples as f64;
    let s: Vec<f64> = (0..=samples).map(|i| i as f64 * h).collect();
    let k: Vec<f64> = s.iter().map(|&t| kappa.eval(t)).collect();
    let turning: Vec<f64> = cumulative_simpson(&k, h).into_iter().map(|v| -v).collect();
    let c: Vec<f64> = turning.iter().map(|t| t.cos()).collect();
    let sn: Vec<f64> = turning.iter().map(|t| t.sin()).collect();
    let x = cumulative_simpson(&c, h);
    let y = cumulative_simpson(&sn, h);
    let tangent: Vec<(f64, f64)> = c.iter().zip(&sn).map(|(&a, &b)| (a, b)).collect();
    let normal = tangent.iter().map(|&(tx, ty)| (-ty, tx)).collect();
    SampledCurve {
        s,
        x,
        y,
        tangent,
        normal,
    }
}

/// Planar curve with curvature `κ`:
/// `ω(s) = (∫_0^s cos φ, ∫_0^s sin φ)` with turning angle `φ(s) = -∫_0^s κ`.
pub fn curve_from_curvature(
    kappa: &CurvatureProfile,
    samples: usize,
) -> Result<SampledCurve, GeometryError> {
    if samples < 16 {
        return Err(GeometryError::TooFewSamples(samples));
    }
    let coarse = integrate_curve(kappa, samples);
    let fine = integrate_curve(kappa, 2 * samples);
    let (x0, y0) = coarse.end_point();
    let (x1, y1) = fine.end_point();
    let moved = (x1 - x0).hypot(y1 - y0);
    if moved > 1e-6 {
        return Err(GeometryError::QuadratureUnderResolved(moved));
    }
    Ok(coarse)
}

/// Metric tensor and density at one point.
///
/// The tensor is stored as a base tensor times a conformal weight `ρ²`, so the
/// conformally invariant two-dimensional stiffness density can be formed from
/// the base tensor alone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSample {
    pub base: [f64; 3],
    pub conformal: f64,
}

impl MetricSample {
    pub fn euclidean() -> Self {
        Self {
            base: [1.0, 0.0, 1.0],
            conformal: 1.0,
        }
    }

    pub fn g11(&self) -> f64 {
        self.conformal * self.base[0]
    }

    pub fn g12(&self) -> f64 {
        self.conformal * self.base[1]
    }

    pub fn g22(&self) -> f64 {
        self.conformal * self.base[2]
    }

    pub fn base_det(&self) -> f64 {
        self.base[0] * self.base[2] - self.base[1] * self.base[1]
    }

    /// `√det g` in two dimensions.
    pub fn sqrt_det(&self) -> f64 {
        self.conformal * self.base_det().sqrt()
    }

    /// Line density `√g_11` of the one-dimensional metric along `s`.
    pub fn line_density(&self) -> f64 {
        (self.conformal * self.base[0]).sqrt()
    }

    pub fn is_positive_definite(&self) -> bool {
        self.conformal > 0.0 && self.base[0] > 0.0 && self.base_det() > 0.0
    }
}

type Evaluator = dyn Fn(f64, f64) -> MetricSample + Send + Sync;

/// Metric on the rectangle `[0, length] x [0, width]`.
#[derive(Clone)]
pub struct MetricField {
    length: f64,
    width: f64,
    eval: Arc<Evaluator>,
}

impl fmt::Debug for MetricField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MetricField")
            .field("length", &self.length)
            .field("width", &self.width)
            .finish_non_exhaustive()
    }
}

impl MetricField {
    pub fn new(
        length: f64,
        width: f64,
        eval: impl Fn(f64, f64) -> MetricSample + Send + Sync + 'static,
    ) -> Self {
        Self {
            length,
            width,
            eval: Arc::new(eval),
        }
    }

    pub fn euclidean(length: f64, width: f64) -> Self {
        Self::new(length, width, |_, _| MetricSample::euclidean())
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    #[inline]
    pub fn eval(&self, s: f64, u: f64) -> MetricSample {
        (self.eval)(s, u)
    }

    /// `∫∫ √det g` by tensor Gauss-Legendre quadrature on a uniform grid.
    pub fn volume(&self, cells_s: usize, cells_u: usize) -> f64 {
        let gl = [
            (-0.774_596_669_241_483_4, 5.0 / 9.0),
            (0.0, 8.0 / 9.0),
            (0.774_596_669_241_483_4, 5.0 / 9.0),
        ];
        let hs = self.length / cells_s as f64;
        let hu = self.width / cells_u as f64;
        let mut total = 0.0;
        for i in 0..cells_s {
            for j in 0..cells_u {
                for &(xs, ws) in &gl {
                    for &(xu, wu) in &gl {
                        let s = (i as f64 + 0.5 + 0.5 * xs) * hs;
                        let u = (j as f64 + 0.5 + 0.5 * xu) * hu;
                        total += ws * wu * 0.25 * hs * hu * self.eval(s, u).sqrt_det();
                    }
                }
            }
        }
        total
    }

    /// Same metric viewed on the sub-rectangle starting at `s0` with length `len`.
    pub fn window(&self, s0: f64, len: f64) -> MetricField {
        let inner = self.clone();
        MetricField::new(len, self.width, move |s, u| inner.eval(s0 + s, u))
    }
}

/// Fermi-coordinate metric `(1 - uκ(s))² ds² + du²` of the strip of width `ε`
/// swept by the normal segment along the curve with curvature `κ`.
pub fn waveguide_metric(
    kappa: &CurvatureProfile,
    width: f64,
) -> Result<MetricField, GeometryError> {
    if !(width > 0.0) {
        return Err(GeometryError::InvalidParameter(format!(
            "width must be positive, got {width}"
        )));
    }
    let n = 4096;
    for i in 0..n {
        let s = TWO_PI * i as f64 / n as f64;
        let value = 1.0 - width * kappa.eval(s);
        if value <= 0.0 {
            return Err(GeometryError::TubeSelfIntersection { s, u: width, value });
        }
    }
    let kappa = kappa.clone();
    Ok(MetricField::new(TWO_PI, width, move |s, u| {
        let f = 1.0 - u * kappa.eval(s);
        MetricSample {
            base: [f * f, 0.0, 1.0],
            conformal: 1.0,
        }
    }))
}

/// `ρ² g` for a positive scalar field `ρ`.
pub fn conformal_metric(
    g: &MetricField,
    rho: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
) -> Result<MetricField, GeometryError> {
    let (ns, nu) = (64, 8);
    for i in 0..=ns {
        for j in 0..=nu {
            let s = g.length * i as f64 / ns as f64;
            let u = g.width * j as f64 / nu as f64;
            let value = rho(s, u);
            if !(value > 0.0) {
                return Err(GeometryError::NonPositiveFactor { s, u, value });
            }
        }
    }
    let inner = g.clone();
    Ok(MetricField::new(g.length, g.width, move |s, u| {
        let mut m = inner.eval(s, u);
        let r = rho(s, u);
        m.conformal *= r * r;
        m
    }))
}

/// Reduces `s` into `[0, period)`, mapping the right end of the last cell onto
/// the right end of the cell.
#[inline]
fn wrap(s: f64, period: f64, cells: usize) -> f64 {
    let j = (s / period).floor();
    let j = j.clamp(0.0, cells as f64 - 1.0);
    s - j * period
}

/// Periodic extension of a cell metric over `n` cells.
pub fn supercell(cell: &MetricField, n: usize) -> Result<MetricField, GeometryError> {
    if n == 0 {
        return Err(GeometryError::InvalidParameter(
            "supercell needs n >= 1".into(),
        ));
    }
    if n == 1 {
        return Ok(cell.clone());
    }
    let inner = cell.clone();
    let period = cell.length;
    Ok(MetricField::new(
        period * n as f64,
        cell.width,
        move |s, u| inner.eval(wrap(s, period, n), u),
    ))
}

/// Spectral gap `(λ_k^D, λ_{k+1}^N)` of a period cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapInterval {
    pub k: usize,
    pub lower: f64,
    pub upper: f64,
}

impl GapInterval {
    pub fn new(k: usize, lower: f64, upper: f64) -> Option<Self> {
        (lower < upper).then_some(Self { k, lower, upper })
    }

    pub fn contains(&self, lambda: f64) -> bool {
        self.lower < lambda && lambda < self.upper
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Disk in parameter coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disk {
    pub center: (f64, f64),
    pub radius: f64,
}

impl Disk {
    pub fn contains(&self, s: f64, u: f64) -> bool {
        (s - self.center.0).hypot(u - self.center.1) < self.radius
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationKind {
    /// `ρ_τ² g` with `ρ_τ = c_τ` on a region inside the block.
    ConformalConstantRegion,
    /// A flat `τ x ε` rectangle spliced into the strip.
    BubbleInsert,
    /// A Dirichlet disk of growing radius.
    HoleShrink,
}

/// Monotone parameter map, neutral at `τ = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "schedule", rename_all = "kebab-case")]
pub enum Schedule {
    /// `c_τ = 1 + τ`
    BlowUp,
    /// `c_τ = 1 / (1 + τ)`
    Shrink,
    /// bubble length `τ`
    Linear,
    /// `r_τ = r_max τ / (1 + τ)`
    Saturating { r_max: f64 },
}

impl Schedule {
    pub fn value(&self, tau: f64) -> f64 {
        match *self {
            Schedule::BlowUp => 1.0 + tau,
            Schedule::Shrink => 1.0 / (1.0 + tau),
            Schedule::Linear => tau,
            Schedule::Saturating { r_max } => r_max * tau / (1.0 + tau),
        }
    }

    fn neutral_value(&self) -> f64 {
        match self {
            Schedule::BlowUp | Schedule::Shrink => 1.0,
            Schedule::Linear | Schedule::Saturating { .. } => 0.0,
        }
    }
}

/// Where the conformal factor is held at `c_τ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConformalRegion {
    /// Middle third of the block in `s`, full width in `u`, with a quintic
    /// ramp of width `2π/10` on either side.
    MiddleThird,
    /// `ρ_τ = c_τ` on the block minus ramps of width `2π/10` at its ends.
    Interior,
    /// `ρ_τ ≡ c_τ` on the entire block.
    WholeBlock,
}

#[derive(Debug, Clone, PartialEq)]
enum Detail {
    Conformal(ConformalRegion),
    Bubble { center: f64, collar: f64 },
    Hole { center: (f64, f64) },
}

/// Family of metrics (or masks) that differs from the periodic metric only
/// inside a block of `m` consecutive cells.
#[derive(Debug, Clone)]
pub struct PerturbationFamily {
    kind: PerturbationKind,
    cell: MetricField,
    m: usize,
    schedule: Schedule,
    detail: Detail,
}

pub const RAMP_WIDTH: f64 = TWO_PI / 10.0;

/// C¹ (in fact C²) quintic step from 0 at `t <= 0` to 1 at `t >= 1`.
fn smoothstep5(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
}

/// Family options for [`make_family`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FamilyShape {
    Conformal(ConformalRegion),
    /// Bubble spliced at block-relative `center`, stretching a collar of the
    /// given parameter width.
    Bubble {
        center: f64,
        collar: f64,
    },
    /// Hole centered at block-relative `center`.
    Hole {
        center: (f64, f64),
    },
}

pub fn make_family(
    kind: PerturbationKind,
    cell: &MetricField,
    m: usize,
    schedule: Schedule,
    shape: FamilyShape,
) -> Result<PerturbationFamily, GeometryError> {
    if m == 0 {
        return Err(GeometryError::InvalidParameter(
            "block size m must be >= 1".into(),
        ));
    }
    if schedule.value(0.0) != schedule.neutral_value() || schedule.value(1.0) == schedule.value(0.0)
    {
        return Err(GeometryError::InvalidParameter(format!(
            "schedule {schedule:?} is not neutral-and-monotone"
        )));
    }
    let block = cell.length * m as f64;
    let detail = match (kind, shape) {
        (PerturbationKind::ConformalConstantRegion, FamilyShape::Conformal(region)) => {
            if !matches!(schedule, Schedule::BlowUp | Schedule::Shrink) {
                return Err(GeometryError::InvalidParameter(
                    "conformal families use blow-up or shrink".into(),
                ));
            }
            if region == ConformalRegion::MiddleThird && block / 3.0 < RAMP_WIDTH {
                return Err(GeometryError::SupportTooLarge(
                    "ramp does not fit beside the middle third".into(),
                ));
            }
            if region == ConformalRegion::Interior && block <= 2.0 * RAMP_WIDTH {
                return Err(GeometryError::SupportTooLarge(
                    "ramps do not fit inside the block".into(),
                ));
            }
            Detail::Conformal(region)
        }
        (PerturbationKind::BubbleInsert, FamilyShape::Bubble { center, collar }) => {
            if schedule != Schedule::Linear {
                return Err(GeometryError::InvalidParameter(
                    "bubble families use the linear schedule".into(),
                ));
            }
            if !(collar > 0.0) || center - collar / 2.0 <= 0.0 || center + collar / 2.0 >= block {
                return Err(GeometryError::SupportTooLarge(format!(
                    "collar of width {collar} at {center} leaves the block [0, {block}]"
                )));
            }
            Detail::Bubble { center, collar }
        }
        (PerturbationKind::HoleShrink, FamilyShape::Hole { center }) => {
            let Schedule::Saturating { r_max } = schedule else {
                return Err(GeometryError::InvalidParameter(
                    "hole families use the saturating schedule".into(),
                ));
            };
            let clearance = center
                .0
                .min(block - center.0)
                .min(center.1)
                .min(cell.width - center.1);
            if r_max >= clearance {
                return Err(GeometryError::SupportTooLarge(format!(
                    "hole radius {r_max} reaches the block boundary (clearance {clearance})"
                )));
            }
            Detail::Hole { center }
        }
        (kind, shape) => {
            return Err(GeometryError::InvalidParameter(format!(
                "{shape:?} does not fit {kind:?}"
            )));
        }
    };
    Ok(PerturbationFamily {
        kind,
        cell: cell.clone(),
        m,
        schedule,
        detail,
    })
}

impl PerturbationFamily {
    pub fn kind(&self) -> PerturbationKind {
        self.kind
    }

    pub fn block_cells(&self) -> usize {
        self.m
    }

    pub fn cell(&self) -> &MetricField {
        &self.cell
    }

    pub fn schedule(&self) -> Schedule {
        self.schedule
    }

    /// First perturbed cell inside an `n`-cell supercell.
    pub fn block_offset(&self, n: usize) -> usize {
        (n - self.m) / 2
    }

    /// Parameter value of the schedule (`c_τ`, bubble length, or hole radius).
    pub fn parameter(&self, tau: f64) -> f64 {
        self.schedule.value(tau)
    }

    /// Metric of the `n`-cell supercell at parameter `τ`, perturbed in the
    /// middle `m` cells.
    pub fn metric(&self, tau: f64, n: usize) -> Result<MetricField, GeometryError> {
        if n < self.m {
            return Err(GeometryError::InvalidParameter(format!(
                "supercell of {n} cells cannot hold a block of {}",
                self.m
            )));
        }
        let base = supercell(&self.cell, n)?;
        if tau == 0.0 {
            return Ok(base);
        }
        let period = self.cell.length;
        let start = self.block_offset(n) as f64 * period;
        let end = start + self.m as f64 * period;
        let block = end - start;
        let width = self.cell.width;
        let value = self.schedule.value(tau);
        match self.detail.clone() {
            Detail::Conformal(region) => {
                let c = value;
                let rho = move |s: f64, _u: f64| -> f64 {
                    if s < start || s > end {
                        return 1.0;
                    }
                    match region {
                        ConformalRegion::WholeBlock => c,
                        ConformalRegion::Interior => {
                            let w = smoothstep5((s - start) / RAMP_WIDTH)
                                .min(smoothstep5((end - s) / RAMP_WIDTH));
                            1.0 + (c - 1.0) * w
                        }
                        ConformalRegion::MiddleThird => {
                            let (k0, k1) = (start + block / 3.0, start + 2.0 * block / 3.0);
                            let w = if s < k0 {
                                smoothstep5((s - (k0 - RAMP_WIDTH)) / RAMP_WIDTH)
                            } else if s > k1 {
                                smoothstep5(((k1 + RAMP_WIDTH) - s) / RAMP_WIDTH)
                            } else {
                                1.0
                            };
                            1.0 + (c - 1.0) * w
                        }
                    }
                };
                let inner = base.clone();
                Ok(MetricField::new(base.length, width, move |s, u| {
                    let mut g = inner.eval(s, u);
                    if s >= start && s <= end {
                        let r = rho(s, u);
                        g.conformal *= r * r;
                    }
                    g
                }))
            }
            Detail::Bubble { center, collar } => {
                let len = value;
                let a = start + center - collar / 2.0;
                let b = a + collar;
                let splice = start + center;
                let stretch = (collar + len) / collar;
                let inner = base.clone();
                Ok(MetricField::new(base.length, width, move |s, u| {
                    if s <= a || s >= b {
                        return inner.eval(s, u);
                    }
                    // physical arclength of the stretched collar point
                    let sigma = a + stretch * (s - a);
                    let mut g = if sigma <= splice {
                        inner.eval(sigma, u)
                    } else if sigma < splice + len {
                        MetricSample::euclidean()
                    } else {
                        inner.eval(sigma - len, u)
                    };
                    g.base[0] *= stretch * stretch;
                    g.base[1] *= stretch;
                    g
                }))
            }
            Detail::Hole { .. } => Ok(base),
        }
    }

    /// Dirichlet disk of the hole family at `τ` inside an `n`-cell supercell.
    pub fn hole(&self, tau: f64, n: usize) -> Option<Disk> {
        match self.detail {
            Detail::Hole { center } => {
                let start = self.block_offset(n) as f64 * self.cell.length;
                Some(Disk {
                    center: (start + center.0, center.1),
                    radius: self.schedule.value(tau),
                })
            }
            _ => None,
        }
    }

    /// Parameter interval (block-relative) on which a bubble family's metric
    /// is the flat `τ x ε` rectangle.
    pub fn bubble_window(&self, tau: f64) -> Option<(f64, f64)> {
        match self.detail {
            Detail::Bubble { center, collar } => {
                let len = self.schedule.value(tau);
                let stretch = (collar + len) / collar;
                let a = center - collar / 2.0;
                let lo = a + (center - a) / stretch;
                Some((lo, lo + len / stretch))
            }
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_curvature_gives_straight_line() {
        let c = curve_from_curvature(&CurvatureProfile::zero(), 64).unwrap();
        for i in 0..c.s.len() {
            assert!((c.x[i] - c.s[i]).abs() < 1e-12);
            assert!(c.y[i].abs() < 1e-12);
        }
    }

    #[test]
    fn unit_curvature_traces_unit_circle() {
        let c = curve_from_curvature(&CurvatureProfile::constant(1.0), 512).unwrap();
        let worst = (0..c.s.len())
            .map(|i| (c.x[i] - c.s[i].sin()).hypot(c.y[i] - (c.s[i].cos() - 1.0)))
            .fold(0.0, f64::max);
        assert!(worst <= 1e-8, "worst deviation {worst}");
    }

    #[test]
    fn mean_zero_curvature_has_periodic_tangent() {
        let k = CurvatureProfile::even(vec![0.0, 1.0]);
        assert_eq!(k.integral(), 0.0);
        let c = curve_from_curvature(&k, 256).unwrap();
        let (t0, t1) = (c.tangent[0], *c.tangent.last().unwrap());
        assert!((t0.0 - t1.0).abs() < 1e-8 && (t0.1 - t1.1).abs() < 1e-8);
        for t in &c.tangent {
            assert!((t.0.hypot(t.1) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn too_few_samples_rejected() {
        assert_eq!(
            curve_from_curvature(&CurvatureProfile::zero(), 8).unwrap_err(),
            GeometryError::TooFewSamples(8)
        );
    }

    #[test]
    fn under_resolved_quadrature_detected() {
        let k = CurvatureProfile::even(vec![
            0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 3.0,
        ]);
        assert!(matches!(
            curve_from_curvature(&k, 16),
            Err(GeometryError::QuadratureUnderResolved(_))
        ));
    }

    #[test]
    fn waveguide_metric_values() {
        let flat = waveguide_metric(&CurvatureProfile::zero(), 0.1).unwrap();
        assert_eq!(flat.eval(1.3, 0.07).sqrt_det(), 1.0);
        let circ = waveguide_metric(&CurvatureProfile::constant(1.0), 0.5).unwrap();
        assert!((circ.eval(0.0, 0.5).g11() - 0.25).abs() < 1e-15);
        let cos = waveguide_metric(&CurvatureProfile::even(vec![0.0, 1.0]), 0.3).unwrap();
        assert!((cos.eval(0.0, 0.3).g11() - 0.49).abs() < 1e-15);
        assert_eq!(cos.eval(0.0, 0.3).g12(), 0.0);
        assert_eq!(cos.eval(0.0, 0.3).g22(), 1.0);
    }

    #[test]
    fn waveguide_rejects_self_intersection() {
        let err = waveguide_metric(&CurvatureProfile::constant(2.0), 0.5).unwrap_err();
        assert!(matches!(err, GeometryError::TubeSelfIntersection { .. }));
    }

    #[test]
    fn waveguide_cell_volume() {
        let k = CurvatureProfile::new(vec![0.3, 1.0], vec![0.5]);
        let eps = 0.2;
        let g = waveguide_metric(&k, eps).unwrap();
        let want = TWO_PI * eps - eps * eps / 2.0 * k.integral();
        assert!((g.volume(64, 2) - want).abs() < 1e-10);
        let k0 = CurvatureProfile::even(vec![0.0, 1.0, 0.5]);
        let g0 = waveguide_metric(&k0, eps).unwrap();
        assert!((g0.volume(64, 2) - TWO_PI * eps).abs() < 1e-10);
    }

    #[test]
    fn conformal_scaling() {
        let g = waveguide_metric(&CurvatureProfile::even(vec![0.0, 1.0]), 0.2).unwrap();
        let same = conformal_metric(&g, |_, _| 1.0).unwrap();
        assert_eq!(same.eval(0.4, 0.1), g.eval(0.4, 0.1));
        let scaled = conformal_metric(&g, |_, _| 3.0).unwrap();
        let (a, b) = (g.eval(0.4, 0.1), scaled.eval(0.4, 0.1));
        assert!((b.g11() - 9.0 * a.g11()).abs() < 1e-14);
        assert!((b.sqrt_det() - 9.0 * a.sqrt_det()).abs() < 1e-14);
        assert!(matches!(
            conformal_metric(&g, |s, _| s - 1.0),
            Err(GeometryError::NonPositiveFactor { .. })
        ));
    }

    #[test]
    fn supercell_is_periodic() {
        let g = waveguide_metric(&CurvatureProfile::even(vec![0.0, 1.0]), 0.2).unwrap();
        let one = supercell(&g, 1).unwrap();
        assert_eq!(one.length(), g.length());
        let three = supercell(&g, 3).unwrap();
        assert_eq!(three.eval(TWO_PI + 1.0, 0.1), g.eval(1.0, 0.1));
        assert!((supercell(&g, 4).unwrap().length() - 8.0 * PI).abs() < 1e-14);
        assert_eq!(three.eval(3.0 * TWO_PI, 0.1), g.eval(TWO_PI, 0.1));
    }

    #[test]
    fn conformal_constant_commutes_with_supercell() {
        let g = waveguide_metric(&CurvatureProfile::even(vec![0.0, 1.0]), 0.2).unwrap();
        let a = supercell(&conformal_metric(&g, |_, _| 1.7).unwrap(), 3).unwrap();
        let b = conformal_metric(&supercell(&g, 3).unwrap(), |_, _| 1.7).unwrap();
        for i in 0..50 {
            let s = 3.0 * TWO_PI * i as f64 / 49.0;
            assert_eq!(a.eval(s, 0.13), b.eval(s, 0.13));
        }
    }

    fn cos_cell() -> MetricField {
        waveguide_metric(&CurvatureProfile::even(vec![0.0, 1.0]), 0.1).unwrap()
    }

    #[test]
    fn families_are_neutral_at_zero() {
        let cell = cos_cell();
        let fams = [
            make_family(
                PerturbationKind::ConformalConstantRegion,
                &cell,
                2,
                Schedule::BlowUp,
                FamilyShape::Conformal(ConformalRegion::MiddleThird),
            )
            .unwrap(),
            make_family(
                PerturbationKind::BubbleInsert,
                &cell,
                2,
                Schedule::Linear,
                FamilyShape::Bubble {
                    center: 1.5 * PI,
                    collar: PI,
                },
            )
            .unwrap(),
        ];
        let base = supercell(&cell, 6).unwrap();
        for fam in &fams {
            let g = fam.metric(0.0, 6).unwrap();
            for i in 0..200 {
                let s = 6.0 * TWO_PI * i as f64 / 199.0;
                assert_eq!(g.eval(s, 0.05), base.eval(s, 0.05));
            }
        }
    }

    #[test]
    fn unsupported_family_shapes_rejected() {
        let cell = cos_cell();
        let err = make_family(
            PerturbationKind::BubbleInsert,
            &cell,
            1,
            Schedule::Linear,
            FamilyShape::Bubble {
                center: 0.1,
                collar: 1.0,
            },
        )
        .unwrap_err();
        assert!(matches!(err, GeometryError::SupportTooLarge(_)));
        let err = make_family(
            PerturbationKind::HoleShrink,
            &MetricField::euclidean(TWO_PI, 1.0),
            1,
            Schedule::Saturating { r_max: 0.6 },
            FamilyShape::Hole { center: (PI, 0.5) },
        )
        .unwrap_err();
        assert!(matches!(err, GeometryError::SupportTooLarge(_)));
    }

    #[test]
    fn hole_schedule_limit() {
        let fam = make_family(
            PerturbationKind::HoleShrink,
            &MetricField::euclidean(TWO_PI, TWO_PI),
            1,
            Schedule::Saturating { r_max: 2.0 },
            FamilyShape::Hole { center: (PI, PI) },
        )
        .unwrap();
        assert_eq!(fam.hole(0.0, 1).unwrap().radius, 0.0);
        let r = fam.hole(1e9, 1).unwrap().radius;
        assert!((PI * r * r - PI * 4.0).abs() < 1e-7);
    }

    #[test]
    fn bubble_window_is_flat() {
        let cell = cos_cell();
        let fam = make_family(
            PerturbationKind::BubbleInsert,
            &cell,
            2,
            Schedule::Linear,
            FamilyShape::Bubble {
                center: 1.5 * PI,
                collar: PI,
            },
        )
        .unwrap();
        let g = fam.metric(2.0, 2).unwrap();
        let (lo, hi) = fam.bubble_window(2.0).unwrap();
        let stretch = (PI + 2.0) / PI;
        assert!(((hi - lo) * stretch - 2.0).abs() < 1e-14);
        for i in 1..20 {
            let s = lo + (hi - lo) * i as f64 / 20.0;
            let m = g.eval(s, 0.03);
            assert!((m.g11() - stretch * stretch).abs() < 1e-12);
            assert_eq!(m.g22(), 1.0);
        }
    }
}
