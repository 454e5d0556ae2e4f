//! The conditional law of `S_n` given a finite block of future increments.
//!
//! With `X_[2] = (X_{n+1}, …, X_{n+k})`, `B = Cov(X_[2], S_n)` and
//! `Σ₂₂ = Cov(X_[2])`,
//!
//! ```text
//! (S_n | X_[2]) ~ N( Bᵀ Σ₂₂⁻¹ X_[2],  n^{2H} - Bᵀ Σ₂₂⁻¹ B ).
//! ```
//!
//! Every operation truncates the future at a finite `k` and reports it.
//! `Σ₂₂⁻¹ B` comes from the streaming Levinson recursion, so a whole grid of
//! `k` values costs one `O(k_max²)` pass.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fgn_model::{autocovariance, b_vector, partial_sum_variance, HurstParam};
use crate::sampler::{CirculantSampler, RngSeed};
use crate::stats::{log_log_fit, normal_interval_probability, normal_pdf, LinearFit, Moments};
use crate::toeplitz::{dot, NestedLevinson};

/// Law of `S_n` given `k` future increments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalGaussian {
    pub mu: f64,
    pub sigma2: f64,
    pub n: u64,
    pub k: usize,
}

impl ConditionalGaussian {
    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }
}

fn fgn_row(h: HurstParam, k: usize) -> Vec<f64> {
    (0..k as u64).map(|t| autocovariance(h, t)).collect()
}

/// Precomputed `w = Σ₂₂⁻¹ B` for fixed `(h, n, k)`, so that each realized
/// future costs one dot product.
#[derive(Debug, Clone)]
pub struct ConditionalLaw {
    pub h: HurstParam,
    pub n: u64,
    weights: Vec<f64>,
    qform: f64,
    sigma2: f64,
}

impl ConditionalLaw {
    pub fn new(h: HurstParam, n: u64, k: usize) -> Result<Self> {
        if n == 0 || k == 0 {
            return Err(Error::InvalidParameter(format!("conditional law needs n >= 1 and k >= 1, got n={n}, k={k}")));
        }
        let row = fgn_row(h, k);
        let b = b_vector(h, n, k);
        let mut lev = NestedLevinson::new(&row, &b)?;
        lev.advance_to(k)?;
        let weights = lev.into_solution();
        let qform = dot(&b, &weights);
        let sigma2 = partial_sum_variance(h, n) - qform;
        Ok(ConditionalLaw { h, n, weights, qform, sigma2 })
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    /// `Bᵀ Σ₂₂⁻¹ B`, the variance of the conditional mean.
    pub fn quadratic_form(&self) -> f64 {
        self.qform
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// `Σ₂₂⁻¹ B`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean(&self, future: &[f64]) -> Result<f64> {
        if future.len() != self.k() {
            return Err(Error::DimensionMismatch { expected: self.k(), actual: future.len() });
        }
        Ok(dot(&self.weights, future))
    }

    pub fn params(&self, future: &[f64]) -> Result<ConditionalGaussian> {
        Ok(ConditionalGaussian { mu: self.mean(future)?, sigma2: self.sigma2, n: self.n, k: self.k() })
    }
}

/// `(μ(n,k), σ²(n,k))` for one realized future of length `k`.
pub fn conditional_params(h: HurstParam, n: u64, future: &[f64]) -> Result<ConditionalGaussian> {
    ConditionalLaw::new(h, n, future.len())?.params(future)
}

fn validate_grid(grid: &[usize]) -> Result<()> {
    if grid.is_empty() || grid[0] == 0 || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("k grid must be nonempty, positive and strictly increasing".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QformRow {
    pub k: usize,
    pub qform: f64,
    pub sigma2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QformDecay {
    pub h: HurstParam,
    pub n: u64,
    pub rows: Vec<QformRow>,
    /// Log-log slope of `qform` against `k`; absent when `qform` vanishes.
    pub fit: Option<LinearFit>,
    pub in_regime: bool,
}

/// `Bᵀ Σ₂₂⁻¹ B` and `σ²(n,k)` over a strictly increasing `k` grid.
pub fn quadratic_form_decay(h: HurstParam, n: u64, k_grid: &[usize]) -> Result<QformDecay> {
    validate_grid(k_grid)?;
    if n == 0 {
        return Err(Error::InvalidParameter("n must be positive".into()));
    }
    let k_max = *k_grid.last().unwrap();
    let row = fgn_row(h, k_max);
    let b = b_vector(h, n, k_max);
    let var = partial_sum_variance(h, n);
    let mut lev = NestedLevinson::new(&row, &b)?;
    let mut rows = Vec::with_capacity(k_grid.len());
    for &k in k_grid {
        lev.advance_to(k)?;
        let qform = lev.quadratic_form();
        rows.push(QformRow { k, qform, sigma2: var - qform });
    }
    let ks: Vec<f64> = rows.iter().map(|r| r.k as f64).collect();
    let qs: Vec<f64> = rows.iter().map(|r| r.qform).collect();
    let fit = log_log_fit(&ks, &qs);
    Ok(QformDecay { h, n, rows, fit, in_regime: h.cllt_regime() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DnOptions {
    pub rel_tol: f64,
    pub k_start: usize,
    pub k_cap: usize,
}

impl Default for DnOptions {
    fn default() -> Self {
        DnOptions { rel_tol: 1e-3, k_start: 32, k_cap: 1 << 14 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DnEntry {
    /// Stabilized `σ²(n, ·)`.
    pub dn2: f64,
    /// Smallest `k` on the doubling grid with `|σ²(2k) - σ²(k)| <= tol σ²(k)`.
    pub k_used: usize,
    /// `dn2 / n^{2H}`.
    pub l_n: f64,
}

/// Double `k` until `σ²(n, k)` stabilizes; the refined value `σ²(n, 2k)` is returned.
pub fn estimate_dn(h: HurstParam, n: u64, opts: &DnOptions) -> Result<DnEntry> {
    if n == 0 || opts.k_start == 0 || !(opts.rel_tol > 0.0) {
        return Err(Error::InvalidParameter("estimate_dn needs n >= 1, k_start >= 1, rel_tol > 0".into()));
    }
    let var = partial_sum_variance(h, n);
    let row = fgn_row(h, opts.k_cap);
    let b = b_vector(h, n, opts.k_cap);
    if opts.k_start * 2 > opts.k_cap {
        return Err(Error::NoStabilization { k_cap: opts.k_cap });
    }
    let mut lev = NestedLevinson::new(&row, &b)?;
    lev.advance_to(opts.k_start)?;
    let mut k = opts.k_start;
    let mut sigma2 = var - lev.quadratic_form();
    while 2 * k <= opts.k_cap {
        lev.advance_to(2 * k)?;
        let refined = var - lev.quadratic_form();
        if (refined - sigma2).abs() <= opts.rel_tol * sigma2 {
            return Ok(DnEntry { dn2: refined, k_used: k, l_n: refined / var });
        }
        sigma2 = refined;
        k *= 2;
    }
    Err(Error::NoStabilization { k_cap: opts.k_cap })
}

/// Measured `d_n²` on a set of `n`, with geometric interpolation in between
/// and the plateau proxy `d_n = n^H sqrt(L̄)` beyond the largest entry.
#[derive(Debug, Clone, PartialEq)]
pub struct DnTable {
    pub h: HurstParam,
    pub entries: BTreeMap<u64, DnEntry>,
}

impl DnTable {
    /// Run [`estimate_dn`] for every `n` in `n_grid` (in parallel).
    pub fn measure(h: HurstParam, n_grid: &[u64], opts: &DnOptions) -> Result<Self> {
        let measured: Vec<Result<(u64, DnEntry)>> =
            n_grid.par_iter().map(|&n| estimate_dn(h, n, opts).map(|e| (n, e))).collect();
        let mut entries = BTreeMap::new();
        for m in measured {
            let (n, e) = m?;
            entries.insert(n, e);
        }
        Ok(DnTable { h, entries })
    }

    /// `d_n = n^H` exactly (`L ≡ 1`).
    pub fn exact_power(h: HurstParam) -> Self {
        let mut entries = BTreeMap::new();
        entries.insert(1, DnEntry { dn2: 1.0, k_used: 0, l_n: 1.0 });
        DnTable { h, entries }
    }

    /// `L̄`: the ratio `d_n² / n^{2H}` at the largest measured `n`.
    pub fn plateau(&self) -> Result<f64> {
        self.entries.values().next_back().map(|e| e.l_n).ok_or(Error::MissingDn { n: 0 })
    }

    /// `L(n) = d_n² / n^{2H}`, interpolated linearly in `log n`.
    pub fn l_at(&self, n: u64) -> Result<f64> {
        let (&first_n, first) = self.entries.iter().next().ok_or(Error::MissingDn { n })?;
        if n <= first_n {
            return Ok(first.l_n);
        }
        let below = self.entries.range(..=n).next_back().unwrap();
        match self.entries.range(n..).next() {
            None => Ok(below.1.l_n),
            Some(above) if above.0 == below.0 => Ok(below.1.l_n),
            Some(above) => {
                let (n0, n1) = (*below.0 as f64, *above.0 as f64);
                let w = ((n as f64).ln() - n0.ln()) / (n1.ln() - n0.ln());
                Ok(below.1.l_n + w * (above.1.l_n - below.1.l_n))
            }
        }
    }

    pub fn dn(&self, n: u64) -> Result<f64> {
        Ok((self.l_at(n)? * partial_sum_variance(self.h, n)).sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanVanishingRow {
    pub k: usize,
    pub qform: f64,
    pub sigma2: f64,
    /// Monte Carlo mean of `|μ(n,k)| / σ(n,k)`.
    pub mean_abs_ratio: f64,
    pub mean_abs_ratio_se: f64,
    pub max_abs_ratio: f64,
    pub mu_mean: f64,
    pub mu_mean_se: f64,
    pub mu_sample_var: f64,
    /// Standard error of the sample variance under normality: `qform sqrt(2/(reps-1))`.
    pub mu_var_se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanVanishing {
    pub h: HurstParam,
    pub n: u64,
    pub reps: usize,
    pub rows: Vec<MeanVanishingRow>,
    pub in_regime: bool,
}

/// Monte Carlo summary of `μ(n,k)/σ(n,k)` over independent exact futures.
///
/// Each replication draws one future of length `max(k_grid)`; smaller `k`
/// use its prefix, so the columns are comparable path by path.
pub fn conditional_mean_vanishing(
    h: HurstParam,
    n: u64,
    k_grid: &[usize],
    reps: usize,
    seed: RngSeed,
) -> Result<MeanVanishing> {
    validate_grid(k_grid)?;
    if reps < 100 {
        return Err(Error::InvalidParameter(format!("conditional_mean_vanishing needs reps >= 100, got {reps}")));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("n must be positive".into()));
    }
    let k_max = *k_grid.last().unwrap();
    let row = fgn_row(h, k_max);
    let b = b_vector(h, n, k_max);
    let var = partial_sum_variance(h, n);
    let mut lev = NestedLevinson::new(&row, &b)?;
    let mut laws = Vec::with_capacity(k_grid.len());
    for &k in k_grid {
        lev.advance_to(k)?;
        let w = lev.solution().to_vec();
        let qform = dot(&b[..k], &w);
        laws.push((w, qform, var - qform));
    }
    let sampler = CirculantSampler::new(h, k_max)?;
    let mus: Vec<Vec<f64>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let future = sampler.sample_increments(seed.child(r as u64));
            laws.iter().map(|(w, _, _)| dot(w, &future[..w.len()])).collect()
        })
        .collect();

    let rows = k_grid
        .iter()
        .enumerate()
        .map(|(j, &k)| {
            let (_, qform, sigma2) = laws[j];
            let sigma = sigma2.sqrt();
            let mu: Moments = mus.iter().map(|m| m[j]).collect();
            let ratio: Moments = mus.iter().map(|m| m[j].abs() / sigma).collect();
            let max_abs_ratio = mus.iter().map(|m| m[j].abs() / sigma).fold(0.0, f64::max);
            MeanVanishingRow {
                k,
                qform,
                sigma2,
                mean_abs_ratio: ratio.mean(),
                mean_abs_ratio_se: ratio.std_error(),
                max_abs_ratio,
                mu_mean: mu.mean(),
                mu_mean_se: (qform / reps as f64).sqrt(),
                mu_sample_var: mu.variance(),
                mu_var_se: qform * (2.0 / (reps - 1) as f64).sqrt(),
            }
        })
        .collect();
    Ok(MeanVanishing { h, n, reps, rows, in_regime: h.cllt_regime() })
}

/// `d_n P(S_n ∈ (q+a, q+b) | future)` for a conditional law `N(mu, sigma²)`.
pub fn scaled_interval_probability(dn: f64, q: f64, a: f64, b: f64, mu: f64, sigma: f64) -> f64 {
    dn * normal_interval_probability((q + a - mu) / sigma, (q + b - mu) / sigma)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClltRow {
    pub n: u64,
    pub k: usize,
    pub dn: f64,
    pub sigma: f64,
    pub q: f64,
    pub mean_dnp: f64,
    pub sd_dnp: f64,
    pub se_dnp: f64,
    pub target: f64,
    pub abs_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClltCheck {
    pub h: HurstParam,
    pub a: f64,
    pub b: f64,
    pub kappa: f64,
    pub reps: usize,
    pub rows: Vec<ClltRow>,
    pub in_regime: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClltSpec {
    pub a: f64,
    pub b: f64,
    /// `q_n = κ d_n`; `κ = 0` is the centered case.
    pub kappa: f64,
    pub k: usize,
    pub reps: usize,
    pub seed: RngSeed,
}

/// Monte Carlo average of `d_n P(S_n ∈ (q_n+a, q_n+b) | X_{n+1..n+k})` over
/// exact futures, against `(b-a) g(κ)`.
///
/// The probability is exact per future; `d_n` comes from `dn_table`.
/// All `n` share the same replication streams.
pub fn cllt_check(h: HurstParam, n_grid: &[u64], spec: &ClltSpec, dn_table: &DnTable) -> Result<ClltCheck> {
    if !(spec.a < spec.b) || spec.k == 0 || spec.reps < 2 || n_grid.is_empty() {
        return Err(Error::InvalidParameter("cllt_check needs a < b, k >= 1, reps >= 2 and a nonempty n grid".into()));
    }
    let sampler = CirculantSampler::new(h, spec.k)?;
    let futures: Vec<Vec<f64>> =
        (0..spec.reps).into_par_iter().map(|r| sampler.sample_increments(spec.seed.child(r as u64))).collect();
    let target = (spec.b - spec.a) * normal_pdf(spec.kappa);
    let mut rows = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let law = ConditionalLaw::new(h, n, spec.k)?;
        let dn = dn_table.dn(n)?;
        let sigma = law.sigma2().sqrt();
        let q = spec.kappa * dn;
        let values: Moments = futures
            .iter()
            .map(|f| {
                let mu = dot(law.weights(), f);
                scaled_interval_probability(dn, q, spec.a, spec.b, mu, sigma)
            })
            .collect();
        rows.push(ClltRow {
            n,
            k: spec.k,
            dn,
            sigma,
            q,
            mean_dnp: values.mean(),
            sd_dnp: values.std_dev(),
            se_dnp: values.std_error(),
            target,
            abs_error: (values.mean() - target).abs(),
        });
    }
    Ok(ClltCheck { h, a: spec.a, b: spec.b, kappa: spec.kappa, reps: spec.reps, rows, in_regime: h.cllt_regime() })
}

/// Largest `|mean d_n P - (b-a) g(0)|` over a family of intervals, for one `n`.
pub fn worst_interval_error(
    h: HurstParam,
    n: u64,
    intervals: &[(f64, f64)],
    spec: &ClltSpec,
    dn_table: &DnTable,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for &(a, b) in intervals {
        let s = ClltSpec { a, b, kappa: 0.0, ..*spec };
        let check = cllt_check(h, &[n], &s, dn_table)?;
        worst = worst.max(check.rows[0].abs_error);
    }
    Ok(worst)
}
