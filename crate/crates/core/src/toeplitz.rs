//! Symmetric Toeplitz linear algebra.
//!
//! A [`SymmetricToeplitz`] is stored as its first row. Products use either the
//! dense `O(k²)` loop or, above [`FFT_MATVEC_CROSSOVER`], a circulant embedding
//! diagonalized by the FFT. Solves use the Levinson recursion, exposed in a
//! streaming form ([`NestedLevinson`]) so that the nested systems
//! `T_m x_m = r_{1..m}` for every order `m` come out of a single `O(k²)` pass.

use std::fmt;
use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::fgn_model::{autocovariance, HurstParam};

/// Dimension above which [`SymmetricToeplitz::matvec`] switches to the FFT path.
pub const FFT_MATVEC_CROSSOVER: usize = 512;

/// Prediction-error variances (relative to the diagonal) below this signal
/// loss of positive definiteness in double precision.
pub const ILL_CONDITIONED_THRESHOLD: f64 = 1e-13;

struct CirculantEmbedding {
    size: usize,
    eigenvalues: Vec<Complex64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl CirculantEmbedding {
    fn new(first_row: &[f64]) -> Self {
        let k = first_row.len();
        let size = (2 * k).next_power_of_two();
        let mut planner = FftPlanner::<f64>::new();
        let forward = planner.plan_fft_forward(size);
        let inverse = planner.plan_fft_inverse(size);
        let mut eigenvalues = vec![Complex64::new(0.0, 0.0); size];
        for (j, &r) in first_row.iter().enumerate() {
            eigenvalues[j].re = r;
            if j > 0 {
                eigenvalues[size - j].re = r;
            }
        }
        forward.process(&mut eigenvalues);
        CirculantEmbedding { size, eigenvalues, forward, inverse }
    }
}

/// `k × k` symmetric Toeplitz matrix `T[i][j] = first_row[|i - j|]`.
pub struct SymmetricToeplitz {
    first_row: Vec<f64>,
    embedding: OnceLock<CirculantEmbedding>,
}

impl Clone for SymmetricToeplitz {
    fn clone(&self) -> Self {
        SymmetricToeplitz { first_row: self.first_row.clone(), embedding: OnceLock::new() }
    }
}

impl fmt::Debug for SymmetricToeplitz {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SymmetricToeplitz").field("dim", &self.dim()).finish()
    }
}

impl SymmetricToeplitz {
    pub fn new(first_row: Vec<f64>) -> Result<Self> {
        match first_row.first() {
            None => Err(Error::InvalidParameter("Toeplitz first row is empty".into())),
            Some(&d) if !(d > 0.0) => {
                Err(Error::InvalidParameter(format!("Toeplitz diagonal must be positive, got {d}")))
            }
            Some(_) => Ok(SymmetricToeplitz { first_row, embedding: OnceLock::new() }),
        }
    }

    /// Covariance matrix `[b(|i-j|)]` of `k` consecutive fGn increments.
    pub fn fgn(h: HurstParam, k: usize) -> Self {
        let row = (0..k as u64).map(|t| autocovariance(h, t)).collect();
        SymmetricToeplitz::new(row).expect("fGn covariance has unit diagonal")
    }

    pub fn identity(k: usize) -> Self {
        let mut row = vec![0.0; k];
        row[0] = 1.0;
        SymmetricToeplitz::new(row).expect("identity has unit diagonal")
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.first_row.len()
    }

    pub fn first_row(&self) -> &[f64] {
        &self.first_row
    }

    /// Leading principal `k × k` block.
    pub fn leading(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), actual: k });
        }
        SymmetricToeplitz::new(self.first_row[..k].to_vec())
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), actual: v.len() });
        }
        Ok(())
    }

    /// `T v`, dense below the crossover and FFT-based above it.
    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_len(v)?;
        if self.dim() > FFT_MATVEC_CROSSOVER {
            Ok(self.fft_matvec_unchecked(v))
        } else {
            Ok(self.dense_matvec_unchecked(v))
        }
    }

    /// Plain `O(k²)` product.
    pub fn dense_matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_len(v)?;
        Ok(self.dense_matvec_unchecked(v))
    }

    /// Circulant-embedding product, `O(k log k)` after a one-off setup.
    pub fn fft_matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_len(v)?;
        Ok(self.fft_matvec_unchecked(v))
    }

    fn dense_matvec_unchecked(&self, v: &[f64]) -> Vec<f64> {
        let k = self.dim();
        let r = &self.first_row;
        (0..k)
            .map(|i| {
                let mut acc = 0.0;
                for (j, &vj) in v.iter().enumerate() {
                    acc += r[i.abs_diff(j)] * vj;
                }
                acc
            })
            .collect()
    }

    fn fft_matvec_unchecked(&self, v: &[f64]) -> Vec<f64> {
        let emb = self.embedding.get_or_init(|| CirculantEmbedding::new(&self.first_row));
        let mut buf = vec![Complex64::new(0.0, 0.0); emb.size];
        for (slot, &x) in buf.iter_mut().zip(v) {
            slot.re = x;
        }
        emb.forward.process(&mut buf);
        for (z, lam) in buf.iter_mut().zip(&emb.eigenvalues) {
            *z *= lam;
        }
        emb.inverse.process(&mut buf);
        let scale = 1.0 / emb.size as f64;
        buf[..self.dim()].iter().map(|z| z.re * scale).collect()
    }

    /// Row-major dense copy. Only sensible for small `k`.
    pub fn to_dense(&self) -> Vec<f64> {
        let k = self.dim();
        let mut m = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                m[i * k + j] = self.first_row[i.abs_diff(j)];
            }
        }
        m
    }

    /// Dense Cholesky solve, `O(k³)`. The reference route for small systems.
    pub fn dense_solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        self.check_len(rhs)?;
        let k = self.dim();
        let mut l = self.to_dense();
        for j in 0..k {
            let mut d = l[j * k + j];
            for p in 0..j {
                d -= l[j * k + p] * l[j * k + p];
            }
            if !(d > 0.0) {
                return Err(Error::CholeskyFailure { row: j, pivot: d });
            }
            let d = d.sqrt();
            l[j * k + j] = d;
            for i in j + 1..k {
                let mut s = l[i * k + j];
                for p in 0..j {
                    s -= l[i * k + p] * l[j * k + p];
                }
                l[i * k + j] = s / d;
            }
        }
        let mut y = rhs.to_vec();
        for i in 0..k {
            for p in 0..i {
                y[i] -= l[i * k + p] * y[p];
            }
            y[i] /= l[i * k + i];
        }
        for i in (0..k).rev() {
            for p in i + 1..k {
                y[i] -= l[p * k + i] * y[p];
            }
            y[i] /= l[i * k + i];
        }
        Ok(y)
    }
}

/// Levinson recursion over nested leading blocks.
///
/// After `order()` = m steps the state holds the solution of
/// `T_m x = rhs[..m]`, the forward predictor `f` with `T_m f = ε_m e_1`
/// and the running quadratic form `rhs[..m]ᵀ x`.
#[derive(Debug, Clone)]
pub struct NestedLevinson<'a> {
    row: &'a [f64],
    rhs: &'a [f64],
    predictor: Vec<f64>,
    solution: Vec<f64>,
    error_variance: f64,
    quadratic_form: f64,
}

impl<'a> NestedLevinson<'a> {
    /// Start at order 1. `row` must be at least as long as the largest order requested.
    pub fn new(row: &'a [f64], rhs: &'a [f64]) -> Result<Self> {
        if row.is_empty() || rhs.is_empty() {
            return Err(Error::InvalidParameter("Levinson recursion needs a nonempty system".into()));
        }
        if !(row[0] > 0.0) {
            return Err(Error::IllConditioned { order: 1, variance: row[0] });
        }
        let x0 = rhs[0] / row[0];
        let max = row.len().min(rhs.len());
        let mut predictor = Vec::with_capacity(max);
        predictor.push(1.0);
        let mut solution = Vec::with_capacity(max);
        solution.push(x0);
        Ok(NestedLevinson { row, rhs, predictor, solution, error_variance: row[0], quadratic_form: rhs[0] * x0 })
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.solution.len()
    }

    /// Largest order reachable with the supplied row and right-hand side.
    pub fn max_order(&self) -> usize {
        self.row.len().min(self.rhs.len())
    }

    pub fn solution(&self) -> &[f64] {
        &self.solution
    }

    pub fn into_solution(self) -> Vec<f64> {
        self.solution
    }

    /// `rhs[..m]ᵀ T_m⁻¹ rhs[..m]`, accumulated from Schur-complement increments.
    pub fn quadratic_form(&self) -> f64 {
        self.quadratic_form
    }

    /// Prediction-error variance `ε_m`.
    pub fn error_variance(&self) -> f64 {
        self.error_variance
    }

    /// Extend to order `m + 1`.
    pub fn step(&mut self) -> Result<()> {
        let m = self.order();
        if m >= self.max_order() {
            return Err(Error::DimensionMismatch { expected: self.max_order(), actual: m + 1 });
        }
        let r = self.row;
        let f = &mut self.predictor;

        let delta = reversed_dot(&r[1..=m], f);
        let gamma = -delta / self.error_variance;
        // f_new = [f; 0] + γ [0; J f], updated pairwise in place.
        f.push(0.0);
        let (mut lo, mut hi) = (0, m);
        while lo < hi {
            let (a, b) = (f[lo], f[hi]);
            f[lo] = a + gamma * b;
            f[hi] = b + gamma * a;
            lo += 1;
            hi -= 1;
        }
        if lo == hi {
            f[lo] += gamma * f[lo];
        }
        let eps = self.error_variance * (1.0 - gamma * gamma);
        if !(eps > ILL_CONDITIONED_THRESHOLD * r[0]) {
            return Err(Error::IllConditioned { order: m + 1, variance: eps / r[0] });
        }
        self.error_variance = eps;

        let x = &mut self.solution;
        let eta = reversed_dot(&r[1..=m], x);
        let theta = self.rhs[m] - eta;
        let scale = theta / eps;
        x.push(0.0);
        for (xj, fj) in x.iter_mut().zip(f.iter().rev()) {
            *xj += scale * fj;
        }
        self.quadratic_form += theta * scale;
        Ok(())
    }

    /// Step until `order() == target`.
    pub fn advance_to(&mut self, target: usize) -> Result<()> {
        while self.order() < target {
            self.step()?;
        }
        Ok(())
    }
}

/// Solve `T x = rhs` by the Levinson recursion in `O(k²)` time, `O(k)` extra space.
pub fn levinson_solve(t: &SymmetricToeplitz, rhs: &[f64]) -> Result<Vec<f64>> {
    t.check_len(rhs)?;
    let mut lev = NestedLevinson::new(t.first_row(), rhs)?;
    lev.advance_to(t.dim())?;
    Ok(lev.into_solution())
}

/// How the Neumann scaling constant `c(k)` is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ContractionScale {
    /// `c = 1 / λ_max(T)`.
    InverseLambdaMax,
    /// `c(k) = 1 / (m k^{2H-1})` with a user-supplied `m`.
    HurstPower { m: f64, h: HurstParam },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeumannConfig {
    pub scale: ContractionScale,
    pub max_terms: usize,
    pub rel_tol: f64,
}

impl Default for NeumannConfig {
    fn default() -> Self {
        NeumannConfig { scale: ContractionScale::InverseLambdaMax, max_terms: 1_000_000, rel_tol: 1e-13 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeumannResult {
    pub value: f64,
    pub c: f64,
    /// `max |1 - c λ|` over the extreme eigenvalues.
    pub spectral_radius: f64,
    pub terms_used: usize,
    /// Geometric-mean ratio of successive term magnitudes.
    pub term_decay_rate: f64,
}

/// `bᵀ T⁻¹ b = c Σ_l bᵀ (I - cT)^l b`, truncated once a term drops below
/// `rel_tol` times the running sum.
pub fn neumann_quadratic_form(t: &SymmetricToeplitz, b: &[f64], cfg: &NeumannConfig) -> Result<NeumannResult> {
    t.check_len(b)?;
    let extremes = eigen_extremes(t, 1e-9)?;
    let c = match cfg.scale {
        ContractionScale::InverseLambdaMax => 1.0 / extremes.lambda_max,
        ContractionScale::HurstPower { m, h } => {
            if !(m > 0.0) {
                return Err(Error::InvalidParameter(format!("Neumann scale m must be positive, got {m}")));
            }
            1.0 / (m * (t.dim() as f64).powf(h.two_h() - 1.0))
        }
    };
    let radius = (1.0 - c * extremes.lambda_min).abs().max((1.0 - c * extremes.lambda_max).abs());
    if !(radius < 1.0) {
        return Err(Error::NotContractive { radius });
    }

    let mut v = b.to_vec();
    let first = c * dot(b, &v);
    let mut sum = first;
    let mut last = first;
    let mut terms = 1;
    loop {
        if terms >= cfg.max_terms {
            return Err(Error::MaxTermsExceeded { terms });
        }
        let tv = t.matvec(&v)?;
        for (vi, tvi) in v.iter_mut().zip(&tv) {
            *vi -= c * tvi;
        }
        let term = c * dot(b, &v);
        if term.abs() <= cfg.rel_tol * sum.abs() {
            break;
        }
        sum += term;
        last = term;
        terms += 1;
    }
    let term_decay_rate =
        if terms > 1 && first != 0.0 { (last.abs() / first.abs()).powf(1.0 / (terms - 1) as f64) } else { 0.0 };
    Ok(NeumannResult { value: sum, c, spectral_radius: radius, terms_used: terms, term_decay_rate })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenExtremes {
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Relative Rayleigh residuals `‖Tv - ρv‖ / ρ` of the returned pairs.
    pub residual_min: f64,
    pub residual_max: f64,
    pub iterations_min: usize,
    pub iterations_max: usize,
}

/// Krylov dimension per Lanczos cycle.
const LANCZOS_STEPS: usize = 160;
/// The Ritz pair is checked every this many Lanczos steps.
const LANCZOS_CHECK_EVERY: usize = 16;
const LANCZOS_CYCLES: usize = 100;
const SHIFTED_ITERATION_CAP: usize = 200;

/// Extreme eigenvalues, each returned as the Rayleigh quotient of a vector
/// whose relative residual `‖Tv - ρv‖ / ρ` is at most `tol`.
///
/// `λ_max` comes from restarted Lanczos on `T`. `λ_min` starts with one
/// Lanczos cycle on `T⁻¹` (Levinson solves) and is then refined by inverse
/// iteration on `T - σI` with `σ = ρ(1 - 2r)`, which stays below `λ_min`,
/// keeps the shifted matrix positive definite and separates the tightly
/// clustered bottom of the spectrum. The iteration counts are operator
/// applications.
pub fn eigen_extremes(t: &SymmetricToeplitz, tol: f64) -> Result<EigenExtremes> {
    let k = t.dim();
    let top = lanczos(t, vec![1.0; k], tol, LANCZOS_CYCLES, |v| t.matvec(v))?;
    if top.residual > tol {
        return Err(Error::NoConvergence { iterations: top.applications, residual: top.residual });
    }

    // The lowest eigenvector of an fGn covariance oscillates at the Nyquist
    // frequency; starting there saves most of the iterations.
    let nyquist: Vec<f64> = (0..k)
        .map(|j| {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            sign * (std::f64::consts::PI * (j + 1) as f64 / (k + 1) as f64).sin()
        })
        .collect();
    let mut low = lanczos(t, nyquist, tol, 1, |v| levinson_solve(t, v))?;
    let mut iterations = 0;
    let mut margin = 2.0;
    while low.residual > tol {
        if iterations >= SHIFTED_ITERATION_CAP {
            return Err(Error::NoConvergence { iterations: low.applications, residual: low.residual });
        }
        let sigma = low.rho * (1.0 - margin * low.residual);
        let mut row = t.first_row().to_vec();
        row[0] -= sigma;
        match levinson_solve(&SymmetricToeplitz::new(row)?, &low.vector) {
            Ok(w) => {
                low.applications += 1;
                iterations += 1;
                low.update(t, w)?;
            }
            // The shift overshot λ_min; back off.
            Err(Error::IllConditioned { .. }) => margin *= 10.0,
            Err(e) => return Err(e),
        }
    }

    Ok(EigenExtremes {
        lambda_min: low.rho,
        lambda_max: top.rho,
        residual_min: low.residual,
        residual_max: top.residual,
        iterations_min: low.applications,
        iterations_max: top.applications,
    })
}

struct RitzPair {
    rho: f64,
    residual: f64,
    vector: Vec<f64>,
    applications: usize,
}

impl RitzPair {
    /// Replace the vector by `v` (normalized) and refresh its Rayleigh quotient.
    fn update(&mut self, t: &SymmetricToeplitz, mut v: Vec<f64>) -> Result<()> {
        normalize(&mut v);
        let tv = t.matvec(&v)?;
        self.rho = dot(&v, &tv);
        self.residual = tv.iter().zip(&v).map(|(a, b)| (a - self.rho * b).powi(2)).sum::<f64>().sqrt() / self.rho.abs();
        self.vector = v;
        Ok(())
    }
}

/// Restarted Lanczos with full reorthogonalization for the dominant
/// eigenvector of `apply` (an operator commuting with `t`). Stops at
/// `residual <= tol` or after `cycles` restarts, returning the best pair.
fn lanczos<F>(t: &SymmetricToeplitz, start: Vec<f64>, tol: f64, cycles: usize, apply: F) -> Result<RitzPair>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let k = t.dim();
    let steps = LANCZOS_STEPS.min(k);
    let mut pair = RitzPair { rho: 0.0, residual: f64::INFINITY, vector: Vec::new(), applications: 0 };
    pair.update(t, start)?;
    for _ in 0..cycles {
        let mut basis: Vec<Vec<f64>> = vec![pair.vector.clone()];
        let mut alpha = Vec::with_capacity(steps);
        let mut beta: Vec<f64> = Vec::with_capacity(steps);
        loop {
            let j = basis.len() - 1;
            let mut w = apply(&basis[j])?;
            pair.applications += 1;
            let a = dot(&w, &basis[j]);
            alpha.push(a);
            // Two passes of Gram-Schmidt against the whole basis.
            for _ in 0..2 {
                for q in &basis {
                    let p = dot(&w, q);
                    w.iter_mut().zip(q).for_each(|(wi, qi)| *wi -= p * qi);
                }
            }
            let b = dot(&w, &w).sqrt();
            let exhausted = basis.len() == steps || b <= 1e-13 * a.abs();
            if exhausted || alpha.len() % LANCZOS_CHECK_EVERY == 0 {
                let applications = pair.applications;
                pair.update(t, ritz_vector(&alpha, &beta, &basis))?;
                pair.applications = applications;
                if pair.residual <= tol {
                    return Ok(pair);
                }
            }
            if exhausted {
                break;
            }
            beta.push(b);
            w.iter_mut().for_each(|x| *x /= b);
            basis.push(w);
        }
    }
    Ok(pair)
}

/// Ritz vector of the largest eigenvalue of the Lanczos tridiagonal.
fn ritz_vector(alpha: &[f64], beta: &[f64], basis: &[Vec<f64>]) -> Vec<f64> {
    let m = alpha.len();
    let tri = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            alpha[i]
        } else if i.abs_diff(j) == 1 {
            beta[i.min(j)]
        } else {
            0.0
        }
    });
    let eig = tri.symmetric_eigen();
    let y = eig.eigenvectors.column(eig.eigenvalues.imax());
    let mut ritz = vec![0.0; basis[0].len()];
    for (q, &c) in basis.iter().zip(y.iter()) {
        ritz.iter_mut().zip(q).for_each(|(r, qi)| *r += c * qi);
    }
    ritz
}

/// Inner product with four independent accumulators, in a fixed order.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    for (x, y) in a.chunks_exact(4).zip(b.chunks_exact(4)) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    let tail = n - n % 4;
    let rest: f64 = a[tail..].iter().zip(&b[tail..]).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + rest
}

/// `Σ_j r[n-1-j] x[j]` for equal-length slices.
fn reversed_dot(r: &[f64], x: &[f64]) -> f64 {
    debug_assert_eq!(r.len(), x.len());
    let mut acc = [0.0; 4];
    for (rc, xc) in r.rchunks_exact(4).zip(x.chunks_exact(4)) {
        for l in 0..4 {
            acc[l] += rc[3 - l] * xc[l];
        }
    }
    let head = r.len() % 4;
    let x_rest = &x[x.len() - head..];
    let rest: f64 = r[..head].iter().rev().zip(x_rest).map(|(a, b)| a * b).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + rest
}

fn normalize(v: &mut [f64]) {
    let norm = dot(v, v).sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}
