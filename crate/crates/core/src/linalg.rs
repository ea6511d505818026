//! Dense Hermitian generalized eigensolver.
//!
//! `A v = λ B v` is reduced to a standard problem with the Cholesky factor of
//! `B`, tridiagonalized with Householder reflectors, and the eigenvalues are
//! found with implicit-shift QL sweeps. Eigenvectors for the requested lowest
//! eigenvalues come from inverse iteration on the tridiagonal matrix and are
//! mapped back through the reflectors and the Cholesky factor.
//!
//! Real inputs are detected and run through a real-arithmetic copy of the same
//! kernels, which is roughly four times cheaper.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is not positive definite (pivot {pivot:e} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Field of matrix entries: `f64` or `Complex64`.
pub trait Scalar:
    Copy
    + Send
    + Sync
    + Debug
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + 'static
{
    fn zero() -> Self;
    fn from_real(x: f64) -> Self;
    fn re(self) -> f64;
    fn conj(self) -> Self;
    fn abs2(self) -> f64;
    fn scale(self, x: f64) -> Self;
    fn to_complex(self) -> Complex64;

    fn abs(self) -> f64 {
        self.abs2().sqrt()
    }
}

impl Scalar for f64 {
    #[inline]
    fn zero() -> Self {
        0.0
    }
    #[inline]
    fn from_real(x: f64) -> Self {
        x
    }
    #[inline]
    fn re(self) -> f64 {
        self
    }
    #[inline]
    fn conj(self) -> Self {
        self
    }
    #[inline]
    fn abs2(self) -> f64 {
        self * self
    }
    #[inline]
    fn scale(self, x: f64) -> Self {
        self * x
    }
    #[inline]
    fn to_complex(self) -> Complex64 {
        Complex64::new(self, 0.0)
    }
    #[inline]
    fn abs(self) -> f64 {
        f64::abs(self)
    }
}

impl Scalar for Complex64 {
    #[inline]
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    #[inline]
    fn from_real(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    #[inline]
    fn re(self) -> f64 {
        self.re
    }
    #[inline]
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    #[inline]
    fn abs2(self) -> f64 {
        self.norm_sqr()
    }
    #[inline]
    fn scale(self, x: f64) -> Self {
        self * x
    }
    #[inline]
    fn to_complex(self) -> Complex64 {
        self
    }
}

/// Dense Hermitian matrix, column-major.
///
/// Construction symmetrizes `H <- (H + H*)/2`, so the stored entries are
/// exactly Hermitian and the diagonal is real.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix {
    order: usize,
    entries: Vec<Complex64>,
}

impl HermitianMatrix {
    pub fn from_column_major(
        order: usize,
        mut entries: Vec<Complex64>,
    ) -> Result<Self, LinalgError> {
        if order == 0 || entries.len() != order * order {
            return Err(LinalgError::DimensionMismatch(format!(
                "order {order} with {} entries",
                entries.len()
            )));
        }
        for j in 0..order {
            let d = &mut entries[j * order + j];
            *d = Complex64::new(d.re, 0.0);
            for i in (j + 1)..order {
                let lower = entries[j * order + i];
                let upper = entries[i * order + j];
                let avg = (lower + upper.conj()) * 0.5;
                entries[j * order + i] = avg;
                entries[i * order + j] = avg.conj();
            }
        }
        Ok(Self { order, entries })
    }

    pub fn from_fn(order: usize, f: impl Fn(usize, usize) -> Complex64) -> Self {
        let mut entries = Vec::with_capacity(order * order);
        for j in 0..order {
            for i in 0..order {
                entries.push(f(i, j));
            }
        }
        Self::from_column_major(order, entries).expect("order checked by caller")
    }

    pub fn from_real_fn(order: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        Self::from_fn(order, |i, j| Complex64::new(f(i, j), 0.0))
    }

    pub fn identity(order: usize) -> Self {
        Self::diagonal(&vec![1.0; order])
    }

    pub fn diagonal(values: &[f64]) -> Self {
        Self::from_real_fn(values.len(), |i, j| if i == j { values[i] } else { 0.0 })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.entries[j * self.order + i]
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn is_real(&self) -> bool {
        self.entries.iter().all(|z| z.im == 0.0)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            order: self.order,
            entries: self.entries.iter().map(|z| z * c).collect(),
        }
    }

    /// Infinity norm (max absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        (0..self.order)
            .map(|i| (0..self.order).map(|j| self.get(i, j).norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Principal submatrix with the listed indices deleted.
    pub fn without_indices(&self, removed: &[usize]) -> Self {
        let mut keep = vec![true; self.order];
        for &r in removed {
            keep[r] = false;
        }
        let kept: Vec<usize> = (0..self.order).filter(|&i| keep[i]).collect();
        let m = kept.len();
        let mut entries = Vec::with_capacity(m * m);
        for &j in &kept {
            for &i in &kept {
                entries.push(self.get(i, j));
            }
        }
        Self { order: m, entries }
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        let n = self.order;
        let mut y = vec![Complex64::new(0.0, 0.0); n];
        for j in 0..n {
            let xj = x[j];
            if xj == Complex64::new(0.0, 0.0) {
                continue;
            }
            let col = &self.entries[j * n..(j + 1) * n];
            for (yi, a) in y.iter_mut().zip(col) {
                *yi += a * xj;
            }
        }
        y
    }

    fn real_entries(&self) -> Vec<f64> {
        self.entries.iter().map(|z| z.re).collect()
    }
}

/// Lower-triangular Cholesky factor `L` with `L L* = B`.
#[derive(Debug, Clone)]
pub struct LowerTriangular {
    order: usize,
    // row-major: rows are contiguous
    rows: Vec<Complex64>,
}

impl LowerTriangular {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        if j > i {
            Complex64::new(0.0, 0.0)
        } else {
            self.rows[i * self.order + j]
        }
    }
}

pub fn cholesky(b: &HermitianMatrix) -> Result<LowerTriangular, LinalgError> {
    let n = b.order();
    let factor = if b.is_real() {
        let f = Factor::<f64>::new(n, &b.real_entries())?;
        f.rows.iter().map(|&x| Complex64::new(x, 0.0)).collect()
    } else {
        Factor::<Complex64>::new(n, b.entries())?.rows
    };
    Ok(LowerTriangular {
        order: n,
        rows: factor,
    })
}

/// Solver settings.
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Residual bound relative to `‖A‖ + ‖B‖`.
    pub residual_tol: f64,
    /// QL sweeps allowed per eigenvalue.
    pub max_sweeps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            residual_tol: 1e-10,
            max_sweeps: 50,
        }
    }
}

/// Lowest eigenpairs of a generalized problem.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Eigenvectors as columns, B-orthonormal.
    pub vectors: Option<Vec<Vec<Complex64>>>,
}

impl Spectrum {
    /// Spectrum from known exact values (no vectors, zero residuals).
    pub fn from_values(mut values: Vec<f64>) -> Self {
        values.sort_by(f64::total_cmp);
        let residuals = vec![0.0; values.len()];
        Self {
            values,
            residuals,
            vectors: None,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn largest(&self) -> Option<f64> {
        self.values.last().copied()
    }
}

pub fn solve_gevp(
    a: &HermitianMatrix,
    b: &HermitianMatrix,
    count: usize,
) -> Result<Spectrum, LinalgError> {
    solve_gevp_with(a, b, count, &SolverOptions::default())
}

pub fn solve_gevp_with(
    a: &HermitianMatrix,
    b: &HermitianMatrix,
    count: usize,
    opts: &SolverOptions,
) -> Result<Spectrum, LinalgError> {
    let n = a.order();
    if b.order() != n {
        return Err(LinalgError::DimensionMismatch(format!(
            "A has order {n}, B has order {}",
            b.order()
        )));
    }
    if count > n {
        return Err(LinalgError::DimensionMismatch(format!(
            "requested {count} eigenvalues of an order-{n} problem"
        )));
    }
    let scale = a.norm_inf() + b.norm_inf();
    let (values, vectors) = if a.is_real() && b.is_real() {
        let (vals, vecs) =
            lowest_pairs::<f64>(n, &a.real_entries(), &b.real_entries(), count, opts)?;
        let vecs = vecs
            .into_iter()
            .map(|v| v.into_iter().map(|x| Complex64::new(x, 0.0)).collect())
            .collect();
        (vals, vecs)
    } else {
        lowest_pairs::<Complex64>(n, a.entries(), b.entries(), count, opts)?
    };

    let mut residuals = Vec::with_capacity(count);
    for (lambda, v) in values.iter().zip(&vectors) {
        let av = a.matvec(v);
        let bv = b.matvec(v);
        let mut num = 0.0;
        let mut den = 0.0;
        for (x, y) in av.iter().zip(&bv) {
            num += (x - y * lambda).norm_sqr();
            den += y.norm_sqr();
        }
        let r = (num / den).sqrt();
        if !(r <= opts.residual_tol * scale) {
            return Err(LinalgError::NoConvergence(format!(
                "residual {r:e} at eigenvalue {lambda} exceeds tolerance {:e}",
                opts.residual_tol * scale
            )));
        }
        residuals.push(r);
    }
    Ok(Spectrum {
        values,
        residuals,
        vectors: Some(vectors),
    })
}

/// All eigenvalues of `(A, B)` in nondecreasing order, without vectors.
pub fn gevp_values(a: &HermitianMatrix, b: &HermitianMatrix) -> Result<Vec<f64>, LinalgError> {
    let n = a.order();
    if b.order() != n {
        return Err(LinalgError::DimensionMismatch(format!(
            "A has order {n}, B has order {}",
            b.order()
        )));
    }
    let opts = SolverOptions::default();
    if a.is_real() && b.is_real() {
        reduced_tridiagonal::<f64>(n, &a.real_entries(), &b.real_entries())
            .and_then(|r| ql_eigenvalues(r.diag.clone(), r.offdiag.clone(), opts.max_sweeps))
    } else {
        reduced_tridiagonal::<Complex64>(n, a.entries(), b.entries())
            .and_then(|r| ql_eigenvalues(r.diag.clone(), r.offdiag.clone(), opts.max_sweeps))
    }
}

struct Factor<T> {
    n: usize,
    rows: Vec<T>,
    first: Vec<usize>,
}

impl<T: Scalar> Factor<T> {
    /// Cholesky factorization exploiting the row profile of `B`.
    fn new(n: usize, b: &[T]) -> Result<Self, LinalgError> {
        let first: Vec<usize> = (0..n)
            .map(|i| (0..i).find(|&j| b[j * n + i] != T::zero()).unwrap_or(i))
            .collect();
        let mut rows = vec![T::zero(); n * n];
        for i in 0..n {
            for j in first[i]..=i {
                let lo = first[i].max(first[j]);
                let mut sum = b[j * n + i];
                let (ri, rj) = (i * n, j * n);
                for k in lo..j {
                    sum -= rows[ri + k] * rows[rj + k].conj();
                }
                if i == j {
                    let pivot = sum.re();
                    if !(pivot > 0.0) {
                        return Err(LinalgError::NotPositiveDefinite { index: i, pivot });
                    }
                    rows[ri + i] = T::from_real(pivot.sqrt());
                } else {
                    rows[ri + j] = sum.scale(1.0 / rows[rj + j].re());
                }
            }
        }
        Ok(Self { n, rows, first })
    }

    /// In-place `x <- L^{-1} x`.
    fn forward(&self, x: &mut [T]) {
        let n = self.n;
        let start = x.iter().position(|&v| v != T::zero()).unwrap_or(n);
        for i in start..n {
            let row = &self.rows[i * n..i * n + i];
            let lo = self.first[i].max(start);
            let mut sum = x[i];
            for k in lo..i {
                sum -= row[k] * x[k];
            }
            x[i] = sum.scale(1.0 / self.rows[i * n + i].re());
        }
    }

    /// In-place `x <- L^{-*} x`.
    fn backward(&self, x: &mut [T]) {
        let n = self.n;
        for i in (0..n).rev() {
            let xi = x[i].scale(1.0 / self.rows[i * n + i].re());
            x[i] = xi;
            let row = &self.rows[i * n..i * n + i];
            for k in self.first[i]..i {
                x[k] -= row[k].conj() * xi;
            }
        }
    }
}

struct Reduced<T> {
    factor: Factor<T>,
    diag: Vec<f64>,
    offdiag: Vec<f64>,
    // unit-modulus phases mapping the real tridiagonal basis to the Hermitian one
    phases: Vec<T>,
    reflectors: Vec<(Vec<T>, f64)>,
}

/// Cholesky reduction `C = L^{-1} A L^{-*}` followed by Householder
/// tridiagonalization of `C`.
fn reduced_tridiagonal<T: Scalar>(n: usize, a: &[T], b: &[T]) -> Result<Reduced<T>, LinalgError> {
    let factor = Factor::new(n, b)?;

    // W = L^{-1} A, column by column.
    let mut w = a.to_vec();
    for col in w.chunks_mut(n) {
        factor.forward(col);
    }
    // C = L^{-1} W^*
    let mut c = vec![T::zero(); n * n];
    for j in 0..n {
        for i in 0..n {
            c[j * n + i] = w[i * n + j].conj();
        }
    }
    drop(w);
    for col in c.chunks_mut(n) {
        factor.forward(col);
    }
    // symmetrize against round-off
    for j in 0..n {
        c[j * n + j] = T::from_real(c[j * n + j].re());
        for i in (j + 1)..n {
            let avg = (c[j * n + i] + c[i * n + j].conj()).scale(0.5);
            c[j * n + i] = avg;
            c[i * n + j] = avg.conj();
        }
    }

    let mut diag = vec![0.0; n];
    let mut sub = vec![T::zero(); n.saturating_sub(1)];
    let mut reflectors = Vec::with_capacity(n.saturating_sub(1));
    let mut p = vec![T::zero(); n];
    for k in 0..n.saturating_sub(1) {
        let m = n - k - 1;
        let x: Vec<T> = c[k * n + k + 1..(k + 1) * n].to_vec();
        let tail2: f64 = x[1..].iter().map(|v| v.abs2()).sum();
        let x0 = x[0];
        if tail2 == 0.0 {
            sub[k] = x0;
            reflectors.push((Vec::new(), 0.0));
            continue;
        }
        let xnorm = (x0.abs2() + tail2).sqrt();
        let x0abs = x0.abs();
        let phase = if x0abs == 0.0 {
            T::from_real(1.0)
        } else {
            x0.scale(1.0 / x0abs)
        };
        let alpha = -phase.scale(xnorm);
        let mut v = x;
        v[0] = x0 - alpha;
        let beta = 1.0 / (xnorm * (xnorm + x0abs));
        sub[k] = alpha;

        // p = beta * S v over the trailing block S = C[k+1.., k+1..]
        let off = k + 1;
        let p = &mut p[..m];
        p.iter_mut().for_each(|e| *e = T::zero());
        for jj in 0..m {
            let vj = v[jj];
            let col = &c[(off + jj) * n + off..(off + jj) * n + n];
            for (pi, s) in p.iter_mut().zip(col) {
                *pi += *s * vj;
            }
        }
        p.iter_mut().for_each(|e| *e = e.scale(beta));
        // w = p - (beta/2)(v* p) v
        let mut vp = T::zero();
        for (vi, pi) in v.iter().zip(p.iter()) {
            vp += vi.conj() * *pi;
        }
        let kfac = vp.scale(0.5 * beta);
        let wv: Vec<T> = p.iter().zip(&v).map(|(&pi, &vi)| pi - kfac * vi).collect();
        // S <- S - v w* - w v*
        for jj in 0..m {
            let wj = wv[jj].conj();
            let vj = v[jj].conj();
            let col = &mut c[(off + jj) * n + off..(off + jj) * n + n];
            for ii in 0..m {
                col[ii] -= v[ii] * wj + wv[ii] * vj;
            }
        }
        reflectors.push((v, beta));
    }
    for (k, d) in diag.iter_mut().enumerate() {
        *d = c[k * n + k].re();
    }

    let mut phases = vec![T::from_real(1.0); n];
    let mut offdiag = vec![0.0; n.saturating_sub(1)];
    for k in 0..n.saturating_sub(1) {
        let mag = sub[k].abs();
        offdiag[k] = mag;
        phases[k + 1] = if mag == 0.0 {
            phases[k]
        } else {
            phases[k] * sub[k].scale(1.0 / mag)
        };
    }
    Ok(Reduced {
        factor,
        diag,
        offdiag,
        phases,
        reflectors,
    })
}

/// Implicit-shift QL on a real symmetric tridiagonal matrix; eigenvalues only,
/// returned sorted.
fn ql_eigenvalues(
    mut d: Vec<f64>,
    offdiag: Vec<f64>,
    max_sweeps: usize,
) -> Result<Vec<f64>, LinalgError> {
    let n = d.len();
    let mut e = offdiag;
    e.push(0.0);
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > max_sweeps {
                return Err(LinalgError::NoConvergence(format!(
                    "QL iteration exceeded {max_sweeps} sweeps at index {l}"
                )));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut underflow = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    d.sort_by(f64::total_cmp);
    Ok(d)
}

/// Eigenvectors of a real symmetric tridiagonal matrix for sorted eigenvalues
/// by inverse iteration, reorthogonalized within clusters.
fn tridiagonal_vectors(d: &[f64], e: &[f64], values: &[f64]) -> Vec<Vec<f64>> {
    let n = d.len();
    let tnorm = (0..n)
        .map(|i| {
            d[i].abs()
                + if i > 0 { e[i - 1].abs() } else { 0.0 }
                + if i + 1 < n { e[i].abs() } else { 0.0 }
        })
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let ortol = 1e-3 * tnorm;
    let pertol = 10.0 * f64::EPSILON * tnorm;
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(values.len());
    let mut cluster_start = 0;
    let mut last_shift = f64::NEG_INFINITY;
    // deterministic start vector
    let mut seed: u64 = 0x9E37_79B9_7F4A_7C15;
    for (idx, &lambda) in values.iter().enumerate() {
        if idx > 0 && lambda - values[idx - 1] > ortol {
            cluster_start = idx;
        }
        let mut shift = lambda;
        if idx > cluster_start && shift - last_shift < pertol {
            shift = last_shift + pertol;
        }
        last_shift = shift;

        let mut x: Vec<f64> = (0..n)
            .map(|_| {
                seed ^= seed << 13;
                seed ^= seed >> 7;
                seed ^= seed << 17;
                (seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect();
        let lu = TridiagonalLu::new(d, e, shift, pertol.max(f64::EPSILON * tnorm));
        for _ in 0..4 {
            normalize(&mut x);
            lu.solve(&mut x);
            for prev in &out[cluster_start..idx] {
                let dot: f64 = prev.iter().zip(&x).map(|(a, b)| a * b).sum();
                for (xi, pi) in x.iter_mut().zip(prev) {
                    *xi -= dot * pi;
                }
            }
        }
        normalize(&mut x);
        out.push(x);
    }
    out
}

fn normalize(x: &mut [f64]) {
    let nrm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nrm > 0.0 {
        x.iter_mut().for_each(|v| *v /= nrm);
    }
}

/// LU with partial pivoting of `T - σI` for tridiagonal `T`.
struct TridiagonalLu {
    // row i of U: u0[i] on the diagonal, u1[i], u2[i] to its right
    u0: Vec<f64>,
    u1: Vec<f64>,
    u2: Vec<f64>,
    mult: Vec<f64>,
    swapped: Vec<bool>,
}

impl TridiagonalLu {
    fn new(d: &[f64], e: &[f64], shift: f64, tiny: f64) -> Self {
        let n = d.len();
        let mut u0: Vec<f64> = d.iter().map(|v| v - shift).collect();
        let mut u1: Vec<f64> = (0..n).map(|i| if i + 1 < n { e[i] } else { 0.0 }).collect();
        let mut u2 = vec![0.0; n];
        let mut mult = vec![0.0; n];
        let mut swapped = vec![false; n];
        for i in 0..n.saturating_sub(1) {
            let below = e[i];
            let (mut a0, mut a1, mut a2) = (u0[i], u1[i], 0.0);
            let (mut b0, mut b1, mut b2) = (below, u0[i + 1], u1[i + 1]);
            if below.abs() > a0.abs() {
                std::mem::swap(&mut a0, &mut b0);
                std::mem::swap(&mut a1, &mut b1);
                std::mem::swap(&mut a2, &mut b2);
                swapped[i] = true;
            }
            if a0 == 0.0 {
                a0 = tiny;
            }
            let l = b0 / a0;
            mult[i] = l;
            u0[i] = a0;
            u1[i] = a1;
            u2[i] = a2;
            u0[i + 1] = b1 - l * a1;
            u1[i + 1] = b2 - l * a2;
        }
        if n > 0 && u0[n - 1] == 0.0 {
            u0[n - 1] = tiny;
        }
        Self {
            u0,
            u1,
            u2,
            mult,
            swapped,
        }
    }

    fn solve(&self, x: &mut [f64]) {
        let n = x.len();
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                x.swap(i, i + 1);
            }
            x[i + 1] -= self.mult[i] * x[i];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            if i + 1 < n {
                s -= self.u1[i] * x[i + 1];
            }
            if i + 2 < n {
                s -= self.u2[i] * x[i + 2];
            }
            x[i] = s / self.u0[i];
        }
    }
}

fn lowest_pairs<T: Scalar>(
    n: usize,
    a: &[T],
    b: &[T],
    count: usize,
    opts: &SolverOptions,
) -> Result<(Vec<f64>, Vec<Vec<T>>), LinalgError> {
    let red = reduced_tridiagonal(n, a, b)?;
    let mut values = ql_eigenvalues(red.diag.clone(), red.offdiag.clone(), opts.max_sweeps)?;
    values.truncate(count);
    let tri_vecs = tridiagonal_vectors(&red.diag, &red.offdiag, &values);
    let vectors = tri_vecs
        .into_iter()
        .map(|z| {
            let mut y: Vec<T> = z
                .iter()
                .zip(&red.phases)
                .map(|(&zi, &ph)| ph.scale(zi))
                .collect();
            for (k, (v, beta)) in red.reflectors.iter().enumerate().rev() {
                if *beta == 0.0 {
                    continue;
                }
                let seg = &mut y[k + 1..];
                let mut dot = T::zero();
                for (vi, yi) in v.iter().zip(seg.iter()) {
                    dot += vi.conj() * *yi;
                }
                let f = dot.scale(*beta);
                for (yi, vi) in seg.iter_mut().zip(v) {
                    *yi -= *vi * f;
                }
            }
            red.factor.backward(&mut y);
            y
        })
        .collect();
    Ok((values, vectors))
}

impl HermitianMatrix {
    /// Largest `|i - j|` over the nonzero entries.
    pub fn half_bandwidth(&self) -> usize {
        let n = self.order;
        let mut w = 0;
        for j in 0..n {
            for i in (j + w + 1)..n {
                let z = self.entries[j * n + i];
                if z.re != 0.0 || z.im != 0.0 {
                    w = i - j;
                }
            }
        }
        w
    }
}

/// Real symmetric pencil `(A, B)` in lower band storage.
#[derive(Debug, Clone)]
pub struct BandedPencil {
    order: usize,
    width: usize,
    /// `a[i * (width + 1) + d] = A[i][i - d]`
    a: Vec<f64>,
    b: Vec<f64>,
    pivmin: f64,
}

impl BandedPencil {
    /// Band form of a real pencil, or `None` if either matrix is complex.
    pub fn new(a: &HermitianMatrix, b: &HermitianMatrix) -> Result<Option<Self>, LinalgError> {
        let n = a.order();
        if b.order() != n {
            return Err(LinalgError::DimensionMismatch(format!(
                "A has order {n}, B has order {}",
                b.order()
            )));
        }
        if !a.is_real() || !b.is_real() {
            return Ok(None);
        }
        let width = a.half_bandwidth().max(b.half_bandwidth());
        let stride = width + 1;
        let mut band_a = vec![0.0; n * stride];
        let mut band_b = vec![0.0; n * stride];
        for i in 0..n {
            for d in 0..=width.min(i) {
                band_a[i * stride + d] = a.get(i, i - d).re;
                band_b[i * stride + d] = b.get(i, i - d).re;
            }
        }
        let scale = a.norm_inf().max(b.norm_inf()).max(f64::MIN_POSITIVE);
        Ok(Some(Self {
            order: n,
            width,
            a: band_a,
            b: band_b,
            pivmin: f64::EPSILON * f64::EPSILON * scale,
        }))
    }

    /// Pencil from lower band storage, `a[i * (width + 1) + d] = A[i][i - d]`.
    pub fn from_bands(
        order: usize,
        width: usize,
        a: Vec<f64>,
        b: Vec<f64>,
    ) -> Result<Self, LinalgError> {
        let len = order * (width + 1);
        if a.len() != len || b.len() != len {
            return Err(LinalgError::DimensionMismatch(format!(
                "band storage of order {order} and width {width} needs {len} entries, got {} and {}",
                a.len(),
                b.len()
            )));
        }
        let scale = [&a, &b]
            .iter()
            .flat_map(|m| m.iter())
            .fold(0.0_f64, |acc, x| acc.max(x.abs()))
            .max(f64::MIN_POSITIVE);
        Ok(Self {
            order,
            width,
            a,
            b,
            pivmin: f64::EPSILON * f64::EPSILON * scale,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn half_bandwidth(&self) -> usize {
        self.width
    }

    /// Number of eigenvalues below `sigma`: the count of negative pivots of
    /// `A - σB = L D Lᵀ` (Sylvester inertia, `B` positive definite).
    pub fn count_below(&self, sigma: f64) -> usize {
        let (n, w) = (self.order, self.width);
        let stride = w + 1;
        let mut m: Vec<f64> = self
            .a
            .iter()
            .zip(&self.b)
            .map(|(a, b)| a - sigma * b)
            .collect();
        let mut negative = 0;
        for k in 0..n {
            let mut d = m[k * stride];
            if d.abs() < self.pivmin {
                d = -self.pivmin;
            }
            m[k * stride] = d;
            if d < 0.0 {
                negative += 1;
            }
            let last = (k + w).min(n - 1);
            for i in k + 1..=last {
                let lik = m[i * stride + (i - k)] / d;
                if lik == 0.0 {
                    continue;
                }
                for j in k + 1..=i {
                    let ljk = m[j * stride + (j - k)];
                    m[i * stride + (i - j)] -= lik * ljk;
                }
            }
        }
        negative
    }

    /// Lowest `count` eigenvalues by bisection on the inertia count.
    pub fn lowest_values(&self, count: usize) -> Result<Vec<f64>, LinalgError> {
        if count > self.order {
            return Err(LinalgError::DimensionMismatch(format!(
                "requested {count} eigenvalues of an order-{} problem",
                self.order
            )));
        }
        if count == 0 {
            return Ok(Vec::new());
        }
        let mut lo = -1.0;
        let mut guard = 0;
        while self.count_below(lo) > 0 {
            lo = 2.0 * lo - 1.0;
            guard += 1;
            if guard > 2000 {
                return Err(LinalgError::NoConvergence(
                    "no lower bound for the spectrum".into(),
                ));
            }
        }
        let mut hi = 1.0;
        guard = 0;
        while self.count_below(hi) < count {
            hi = 2.0 * hi + 1.0;
            guard += 1;
            if guard > 2000 {
                return Err(LinalgError::NoConvergence(
                    "no upper bound for the spectrum".into(),
                ));
            }
        }
        // samples (σ, count below σ), kept sorted in σ
        let mut samples = vec![(lo, 0usize), (hi, self.count_below(hi))];
        let mut values = Vec::with_capacity(count);
        for j in 0..count {
            let pos = samples.partition_point(|&(_, c)| c <= j);
            let (mut a, mut b) = (samples[pos - 1].0, samples[pos].0);
            for _ in 0..200 {
                let tol = 2.0 * f64::EPSILON * a.abs().max(b.abs()) + self.pivmin;
                if b - a <= tol {
                    break;
                }
                let mid = 0.5 * (a + b);
                let c = self.count_below(mid);
                let at = samples.partition_point(|&(s, _)| s < mid);
                samples.insert(at, (mid, c));
                if c <= j {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            values.push(0.5 * (a + b));
        }
        Ok(values)
    }
}

/// Lowest `count` eigenvalues: band bisection for narrow real pencils, the
/// dense reduction otherwise.
pub fn lowest_values(
    a: &HermitianMatrix,
    b: &HermitianMatrix,
    count: usize,
) -> Result<Vec<f64>, LinalgError> {
    match BandedPencil::new(a, b)? {
        Some(p) if 4 * p.half_bandwidth() < p.order() => p.lowest_values(count),
        _ => {
            let mut v = gevp_values(a, b)?;
            if count > v.len() {
                return Err(LinalgError::DimensionMismatch(format!(
                    "requested {count} eigenvalues of an order-{} problem",
                    v.len()
                )));
            }
            v.truncate(count);
            Ok(v)
        }
    }
}

/// Number of eigenvalues below `sigma`.
pub fn count_eigenvalues_below(
    a: &HermitianMatrix,
    b: &HermitianMatrix,
    sigma: f64,
) -> Result<usize, LinalgError> {
    match BandedPencil::new(a, b)? {
        Some(p) if 4 * p.half_bandwidth() < p.order() => Ok(p.count_below(sigma)),
        _ => Ok(gevp_values(a, b)?.iter().filter(|&&v| v < sigma).count()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_identity_and_diagonal() {
        let l = cholesky(&HermitianMatrix::identity(3)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_eq!(l.get(i, j), Complex64::new(want, 0.0));
            }
        }
        let l = cholesky(&HermitianMatrix::diagonal(&[4.0, 9.0])).unwrap();
        assert_eq!(l.get(0, 0).re, 2.0);
        assert_eq!(l.get(1, 1).re, 3.0);
        assert_eq!(l.get(1, 0).re, 0.0);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let b = HermitianMatrix::diagonal(&[1.0, -1.0]);
        assert!(matches!(
            cholesky(&b),
            Err(LinalgError::NotPositiveDefinite { index: 1, .. })
        ));
    }

    #[test]
    fn diagonal_problems() {
        let s = solve_gevp(
            &HermitianMatrix::diagonal(&[3.0, 1.0, 2.0]),
            &HermitianMatrix::identity(3),
            3,
        )
        .unwrap();
        assert_eq!(s.values.len(), 3);
        for (v, want) in s.values.iter().zip([1.0, 2.0, 3.0]) {
            assert!((v - want).abs() < 1e-14);
        }
        let s = solve_gevp(
            &HermitianMatrix::identity(2),
            &HermitianMatrix::diagonal(&[1.0, 4.0]),
            2,
        )
        .unwrap();
        assert!((s.values[0] - 0.25).abs() < 1e-14);
        assert!((s.values[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn order_one() {
        let s = solve_gevp(
            &HermitianMatrix::diagonal(&[6.0]),
            &HermitianMatrix::diagonal(&[2.0]),
            1,
        )
        .unwrap();
        assert!((s.values[0] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn count_larger_than_order_is_rejected() {
        let a = HermitianMatrix::identity(2);
        assert!(matches!(
            solve_gevp(&a, &a, 3),
            Err(LinalgError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn construction_symmetrizes() {
        let h = HermitianMatrix::from_fn(2, |i, j| {
            Complex64::new((i + 2 * j) as f64, (i as f64) - (j as f64) + 0.5)
        });
        assert_eq!(h.get(0, 0).im, 0.0);
        assert_eq!(h.get(0, 1), h.get(1, 0).conj());
    }

    #[test]
    fn degenerate_eigenvalues_get_orthonormal_vectors() {
        let a = HermitianMatrix::diagonal(&[2.0, 1.0, 2.0, 2.0, 5.0]);
        let b = HermitianMatrix::identity(5);
        let s = solve_gevp(&a, &b, 4).unwrap();
        let vecs = s.vectors.unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let dot: Complex64 = vecs[i]
                    .iter()
                    .zip(&vecs[j])
                    .map(|(x, y)| x.conj() * y)
                    .sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot.re - want).abs() < 1e-10 && dot.im.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn band_bisection_matches_dense() {
        let n = 60;
        let a = HermitianMatrix::from_real_fn(n, |i, j| match i.abs_diff(j) {
            0 => 2.0 + (i as f64 * 0.37).sin(),
            1 => -1.0,
            3 => 0.1 * ((i + j) as f64).cos(),
            _ => 0.0,
        });
        let b = HermitianMatrix::from_real_fn(n, |i, j| match i.abs_diff(j) {
            0 => 4.0,
            1 => 1.0,
            _ => 0.0,
        });
        let p = BandedPencil::new(&a, &b).unwrap().unwrap();
        assert_eq!(p.half_bandwidth(), 3);
        let dense = gevp_values(&a, &b).unwrap();
        let band = p.lowest_values(20).unwrap();
        for (x, y) in band.iter().zip(&dense) {
            assert!((x - y).abs() < 1e-12 * (1.0 + y.abs()), "{x} vs {y}");
        }
        assert_eq!(p.count_below(0.5 * (dense[4] + dense[5])), 5);
        assert_eq!(count_eigenvalues_below(&a, &b, -1e3).unwrap(), 0);
    }

    #[test]
    fn complex_pencils_have_no_band_form() {
        let a = HermitianMatrix::from_fn(3, |i, j| {
            if i == j {
                Complex64::new(2.0, 0.0)
            } else if i + 1 == j {
                Complex64::new(0.0, 0.5)
            } else if j + 1 == i {
                Complex64::new(0.0, -0.5)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        assert!(BandedPencil::new(&a, &HermitianMatrix::identity(3))
            .unwrap()
            .is_none());
        let v = lowest_values(&a, &HermitianMatrix::identity(3), 3).unwrap();
        assert!((v[1] - 2.0).abs() < 1e-12);
    }
}
