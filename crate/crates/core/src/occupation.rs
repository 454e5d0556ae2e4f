//! Occupation times of the partial-sum path and their Mittag-Leffler limit.
//!
//! `ℓ_n(a, b) = #{i ≤ n : S_i ∈ (a, b)}` is normalized by the return sequence
//! `a_n = Σ_{m=1}^n g(0)/d_m` and averaged over a random translation
//! `x ~ U(-ε, ε)` of the interval.

use std::fmt;
use std::io::{self, Write};

use rand::Rng;
use rayon::prelude::*;

use crate::conditional::DnTable;
use crate::error::{Error, Result};
use crate::fgn_model::{partial_sum_variance, HurstParam};
use crate::mittag_leffler::{ks_distance, KsReference, MlfSample};
use crate::sampler::{partial_sums, CirculantSampler, RngSeed};
use crate::stats::{linear_fit, normal_interval_probability, normal_pdf, LinearFit, Moments};

/// Bounded continuous test functions `v` on `[0, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestFn {
    Const1,
    ExpNeg,
    CapM(f64),
    Bump,
}

impl TestFn {
    pub const IDS: [&'static str; 4] = ["const1", "expneg", "capM", "bump"];

    /// Parse a registry identifier; `cap` is the `M` used by `"capM"`.
    pub fn parse(id: &str, cap: f64) -> Result<Self> {
        match id {
            "const1" => Ok(TestFn::Const1),
            "expneg" => Ok(TestFn::ExpNeg),
            "capM" if cap > 0.0 && cap.is_finite() => Ok(TestFn::CapM(cap)),
            "capM" => Err(Error::InvalidParameter(format!("capM needs a finite M > 0, got {cap}"))),
            "bump" => Ok(TestFn::Bump),
            other => Err(Error::InvalidParameter(format!("unknown test function {other:?}"))),
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            TestFn::Const1 => "const1",
            TestFn::ExpNeg => "expneg",
            TestFn::CapM(_) => "capM",
            TestFn::Bump => "bump",
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            TestFn::Const1 => 1.0,
            TestFn::ExpNeg => (-t).exp(),
            TestFn::CapM(m) => t.min(m),
            TestFn::Bump => 1.0 / (1.0 + t * t),
        }
    }

    /// `sup |v|` on `[0, ∞)`.
    pub fn bound(&self) -> f64 {
        match *self {
            TestFn::CapM(m) => m,
            _ => 1.0,
        }
    }
}

impl fmt::Display for TestFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OccupationConfig {
    pub h: HurstParam,
    pub n: usize,
    pub a: f64,
    pub b: f64,
    pub epsilon: f64,
    pub reps: usize,
    pub test_fn: TestFn,
    pub seed: RngSeed,
    /// Reweight each path by `Φ = exp(θ X_1 - θ²/2)`; `None` means `Φ ≡ 1`.
    pub phi_theta: Option<f64>,
}

impl OccupationConfig {
    /// Defaults to `ε = (b-a)/2` and `Φ ≡ 1`.
    pub fn new(h: HurstParam, n: usize, a: f64, b: f64, reps: usize, test_fn: TestFn, seed: RngSeed) -> Self {
        OccupationConfig { h, n, a, b, epsilon: 0.5 * (b - a), reps, test_fn, seed, phi_theta: None }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a < self.b) || !self.a.is_finite() || !self.b.is_finite() {
            return Err(Error::InvalidParameter(format!("interval needs a < b, got ({}, {})", self.a, self.b)));
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidParameter(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.reps < 100 {
            return Err(Error::InvalidParameter(format!("reps must be at least 100, got {}", self.reps)));
        }
        if self.n == 0 {
            return Err(Error::InvalidParameter("path length must be positive".into()));
        }
        if let Some(t) = self.phi_theta {
            if !t.is_finite() {
                return Err(Error::InvalidParameter("phi tilt must be finite".into()));
            }
        }
        Ok(())
    }
}

/// `#{i : a < S_i + x < b}`.
pub fn occupation_time(partial_sums: &[f64], a: f64, b: f64, x: f64) -> usize {
    partial_sums
        .iter()
        .filter(|&&s| {
            let y = s + x;
            a < y && y < b
        })
        .count()
}

/// `E[ℓ_n(a, b)]` with the path shifted by `x`, from the marginal law
/// `S_i ~ N(0, i^{2H})`.
pub fn expected_occupation(h: HurstParam, n: u64, a: f64, b: f64, x: f64) -> f64 {
    (1..=n)
        .map(|i| {
            let s = partial_sum_variance(h, i).sqrt();
            normal_interval_probability((a - x) / s, (b - x) / s)
        })
        .sum()
}

/// `a_N = Σ_{n=1}^N g(0)/d_n` for `N = 1..`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSequence {
    pub h: HurstParam,
    values: Vec<f64>,
    /// `L̄` from the table used to build the sequence.
    pub plateau: f64,
}

pub fn return_sequence(h: HurstParam, n_max: usize, dn_table: &DnTable) -> Result<ReturnSequence> {
    if n_max == 0 {
        return Err(Error::InvalidParameter("return sequence needs N >= 1".into()));
    }
    let g0 = normal_pdf(0.0);
    let mut values = Vec::with_capacity(n_max);
    let mut acc = 0.0;
    for n in 1..=n_max as u64 {
        acc += g0 / dn_table.dn(n)?;
        values.push(acc);
    }
    Ok(ReturnSequence { h, values, plateau: dn_table.plateau()? })
}

impl ReturnSequence {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `a_n`, 1-based.
    pub fn at(&self, n: usize) -> Result<f64> {
        n.checked_sub(1).and_then(|i| self.values.get(i)).copied().ok_or(Error::MissingDn { n: n as u64 })
    }

    /// `g(0) N^{1-H} / ((1-H) sqrt(L̄))`.
    pub fn proxy(&self, n: usize) -> f64 {
        let alpha = self.h.occupation_index();
        normal_pdf(0.0) * (n as f64).powf(alpha) / (alpha * self.plateau.sqrt())
    }

    /// Least-squares slope of `ln a_N` against `ln N` over `N ∈ grid`.
    pub fn log_log_slope(&self, grid: &[usize]) -> Result<Option<LinearFit>> {
        let ys = grid.iter().map(|&n| self.at(n).map(f64::ln)).collect::<Result<Vec<_>>>()?;
        let xs: Vec<f64> = grid.iter().map(|&n| (n as f64).ln()).collect();
        Ok(linear_fit(&xs, &ys))
    }

    /// Growth exponent of `a_N` from octave increments `a_{2N} - a_N`, which
    /// cancel the additive constant that biases the raw log-log slope.
    pub fn octave_exponent(&self, grid: &[usize]) -> Result<Option<LinearFit>> {
        let mut xs = Vec::with_capacity(grid.len());
        let mut ys = Vec::with_capacity(grid.len());
        for &n in grid {
            xs.push((n as f64).ln());
            ys.push((self.at(2 * n)? - self.at(n)?).ln());
        }
        Ok(linear_fit(&xs, &ys))
    }
}

/// Occupation counts for one `(config, n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupationSample {
    pub n: usize,
    pub a_n: f64,
    /// `ℓ_n(a - x, b - x)` with `x ~ U(-ε, ε)`, per replication.
    pub smoothed_counts: Vec<usize>,
    /// `ℓ_n(a, b)` on the same paths.
    pub raw_counts: Vec<usize>,
    /// `Φ(ω)` per replication (all ones when untilted).
    pub weights: Vec<f64>,
    pub tilted: bool,
}

impl OccupationSample {
    pub fn smoothed_scaled(&self) -> Vec<f64> {
        self.smoothed_counts.iter().map(|&c| c as f64 / self.a_n).collect()
    }

    pub fn raw_scaled(&self) -> Vec<f64> {
        self.raw_counts.iter().map(|&c| c as f64 / self.a_n).collect()
    }

    /// Estimate of `E[Φ v(ℓ_n/a_n)]` and its standard error.
    ///
    /// With a tilt the estimate is self-normalized by `Σ Φ`, which keeps it
    /// inside the range of `v`.
    pub fn functional(&self, v: TestFn) -> (f64, f64) {
        let values = self.smoothed_counts.iter().map(|&c| v.eval(c as f64 / self.a_n));
        if !self.tilted {
            let m: Moments = values.collect();
            return (m.mean(), m.std_error());
        }
        let values: Vec<f64> = values.collect();
        let wsum: f64 = self.weights.iter().sum();
        let est = values.iter().zip(&self.weights).map(|(v, w)| v * w).sum::<f64>() / wsum;
        let var = values.iter().zip(&self.weights).map(|(v, w)| (w * (v - est)).powi(2)).sum::<f64>();
        (est, var.sqrt() / wsum)
    }
}

/// Simulate `cfg.reps` paths of length `cfg.n` and record occupation counts.
///
/// Replication `r` draws its path from `seed.child(r).child(0)` and its
/// offset and tilt from `seed.child(r).child(1)`.
pub fn simulate_occupation(cfg: &OccupationConfig, return_seq: &ReturnSequence) -> Result<OccupationSample> {
    cfg.validate()?;
    let a_n = return_seq.at(cfg.n)?;
    let sampler = CirculantSampler::new(cfg.h, cfg.n)?;
    let per_rep: Vec<(usize, usize, f64)> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| {
            let rs = cfg.seed.child(r as u64);
            let increments = sampler.sample_increments(rs.child(0));
            let sums = partial_sums(&increments);
            let mut rng = rs.child(1).rng();
            let x = rng.random_range(-cfg.epsilon..cfg.epsilon);
            let weight = match cfg.phi_theta {
                None => 1.0,
                Some(theta) => (theta * increments[0] - 0.5 * theta * theta).exp(),
            };
            let smoothed = occupation_time(&sums, cfg.a, cfg.b, x);
            let raw = occupation_time(&sums, cfg.a, cfg.b, 0.0);
            (smoothed, raw, weight)
        })
        .collect();
    let mut sample = OccupationSample {
        n: cfg.n,
        a_n,
        smoothed_counts: Vec::with_capacity(cfg.reps),
        raw_counts: Vec::with_capacity(cfg.reps),
        weights: Vec::with_capacity(cfg.reps),
        tilted: cfg.phi_theta.is_some(),
    };
    for (s, r, w) in per_rep {
        sample.smoothed_counts.push(s);
        sample.raw_counts.push(r);
        sample.weights.push(w);
    }
    Ok(sample)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothedEstimate {
    pub lhs: f64,
    pub se: f64,
}

/// Monte Carlo estimate of `(1/2ε) ∫ E[Φ v(ℓ_n(a-x, b-x)/a_n)] dx`.
pub fn smoothed_functional(cfg: &OccupationConfig, return_seq: &ReturnSequence) -> Result<SmoothedEstimate> {
    let sample = simulate_occupation(cfg, return_seq)?;
    let (lhs, se) = sample.functional(cfg.test_fn);
    Ok(SmoothedEstimate { lhs, se })
}

/// `E[ℓ_n(a, b)] / ((b-a) a_n)` estimated from unshifted paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstMomentRatio {
    pub ratio: f64,
    pub se: f64,
    /// The same ratio with `E[ℓ_n]` from the exact marginal sum.
    pub exact_ratio: f64,
}

pub fn first_moment_ratio(cfg: &OccupationConfig, return_seq: &ReturnSequence) -> Result<FirstMomentRatio> {
    let sample = simulate_occupation(cfg, return_seq)?;
    let scale = (cfg.b - cfg.a) * sample.a_n;
    let m: Moments = sample.raw_counts.iter().map(|&c| c as f64 / scale).collect();
    let exact = expected_occupation(cfg.h, cfg.n as u64, cfg.a, cfg.b, 0.0) / scale;
    Ok(FirstMomentRatio { ratio: m.mean(), se: m.std_error(), exact_ratio: exact })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonRow {
    pub n: usize,
    pub a_n: f64,
    pub v: TestFn,
    pub lhs: f64,
    pub lhs_se: f64,
    pub rhs: f64,
    pub rhs_se: f64,
    /// `lhs - rhs`.
    pub diff: f64,
    pub combined_se: f64,
    /// KS distance between the smoothed `ℓ_n/a_n` sample and `(b-a) Y_α`.
    pub ks: f64,
    /// Same distance for the unshifted counts (exploratory only).
    pub ks_unsmoothed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlfComparison {
    pub config: OccupationConfig,
    pub rows: Vec<ComparisonRow>,
    pub mlf_count: usize,
}

impl MlfComparison {
    pub fn rows_for(&self, v: &str) -> Vec<&ComparisonRow> {
        self.rows.iter().filter(|r| r.v.id() == v).collect()
    }

    /// Whether `|diff|` never grows by more than two combined standard errors
    /// between consecutive `n`, for test function `v`.
    pub fn trend_holds(&self, v: &str) -> bool {
        self.rows_for(v).windows(2).all(|w| {
            let tol = 2.0 * w[0].combined_se.hypot(w[1].combined_se);
            w[1].diff.abs() <= w[0].diff.abs() + tol
        })
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let c = &self.config;
        writeln!(out, "h,n,a,b,epsilon,reps,v_id,lhs,lhs_se,rhs,rhs_se,ks,seed")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{:.16e},{:.16e},{:.16e},{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}:{}",
                c.h,
                r.n,
                c.a,
                c.b,
                c.epsilon,
                c.reps,
                r.v.id(),
                r.lhs,
                r.lhs_se,
                r.rhs,
                r.rhs_se,
                r.ks,
                c.seed.seed,
                c.seed.stream
            )?;
        }
        Ok(())
    }
}

/// Tabulate `lhs` against `E[v((b-a) Y_α)]` for every `n` and test function.
///
/// `cfg.n` and `cfg.test_fn` are ignored; paths for each `n` use
/// `cfg.seed.child(n)`. The right side comes from `mlf`, whose index must be
/// `1 - H`.
pub fn compare_to_mlf(
    cfg: &OccupationConfig,
    n_grid: &[usize],
    test_fns: &[TestFn],
    return_seq: &ReturnSequence,
    mlf: &MlfSample,
) -> Result<MlfComparison> {
    if cfg.reps < 1000 {
        return Err(Error::InvalidParameter(format!("compare_to_mlf needs reps >= 1000, got {}", cfg.reps)));
    }
    if (mlf.alpha.value() - cfg.h.occupation_index()).abs() > 1e-12 {
        return Err(Error::InvalidParameter("Mittag-Leffler index must equal 1 - H".into()));
    }
    if n_grid.is_empty() || mlf.values.is_empty() {
        return Err(Error::InvalidParameter("compare_to_mlf needs a nonempty n grid and reference sample".into()));
    }
    let width = cfg.b - cfg.a;
    let target: Vec<f64> = mlf.values.iter().map(|y| width * y).collect();
    let rhs: Vec<(f64, f64)> = test_fns
        .iter()
        .map(|v| {
            let m: Moments = target.iter().map(|&t| v.eval(t)).collect();
            (m.mean(), m.std_error())
        })
        .collect();
    let mut rows = Vec::with_capacity(n_grid.len() * test_fns.len());
    for &n in n_grid {
        let run = OccupationConfig { n, seed: cfg.seed.child(n as u64), ..*cfg };
        let sample = simulate_occupation(&run, return_seq)?;
        let ks = ks_distance(&sample.smoothed_scaled(), KsReference::Sample(&target));
        let ks_unsmoothed = ks_distance(&sample.raw_scaled(), KsReference::Sample(&target));
        for (v, &(rhs, rhs_se)) in test_fns.iter().zip(&rhs) {
            let (lhs, lhs_se) = sample.functional(*v);
            rows.push(ComparisonRow {
                n,
                a_n: sample.a_n,
                v: *v,
                lhs,
                lhs_se,
                rhs,
                rhs_se,
                diff: lhs - rhs,
                combined_se: lhs_se.hypot(rhs_se),
                ks,
                ks_unsmoothed,
            });
        }
    }
    Ok(MlfComparison { config: *cfg, rows, mlf_count: mlf.values.len() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(v: f64) -> HurstParam {
        HurstParam::new(v).unwrap()
    }

    #[test]
    fn occupation_examples() {
        assert_eq!(occupation_time(&[0.0; 7], -1.0, 1.0, 0.0), 7);
        assert_eq!(occupation_time(&[0.0; 7], 1.0, 2.0, 0.0), 0);
        assert_eq!(occupation_time(&[0.5, 1.5, 2.5], 0.0, 2.0, 0.0), 2);
        // Open interval: endpoints are not counted.
        assert_eq!(occupation_time(&[0.0, 1.0], 0.0, 1.0, 0.0), 0);
        assert_eq!(occupation_time(&[0.5, 1.5, 2.5], 0.0, 2.0, -1.0), 2);
    }

    #[test]
    fn registry_round_trip() {
        for id in TestFn::IDS {
            assert_eq!(TestFn::parse(id, 10.0).unwrap().id(), id);
        }
        assert!(TestFn::parse("sin", 1.0).is_err());
        assert!(TestFn::parse("capM", 0.0).is_err());
        assert_eq!(TestFn::CapM(10.0).eval(3.0), 3.0);
        assert_eq!(TestFn::CapM(10.0).eval(30.0), 10.0);
        assert_eq!(TestFn::Bump.eval(1.0), 0.5);
    }

    #[test]
    fn exact_power_return_sequence() {
        let hh = h(0.8);
        let seq = return_sequence(hh, 100, &DnTable::exact_power(hh)).unwrap();
        let brute: f64 = (1..=100).map(|n| (n as f64).powf(-0.8)).sum();
        assert!((brute - 8.134_444).abs() < 1e-5);
        assert!((seq.at(100).unwrap() - normal_pdf(0.0) * brute).abs() < 1e-12);
        assert!((seq.at(100).unwrap() - 3.245_17).abs() < 1e-4);
        assert!(seq.values().windows(2).all(|w| w[1] > w[0]));
        assert!(seq.at(0).is_err() && seq.at(101).is_err());
    }

    #[test]
    fn config_validation() {
        let hh = h(0.8);
        let ok = OccupationConfig::new(hh, 64, 0.0, 1.0, 100, TestFn::ExpNeg, RngSeed::new(1));
        assert!(ok.validate().is_ok());
        assert_eq!(ok.epsilon, 0.5);
        assert!(OccupationConfig { a: 1.0, ..ok }.validate().is_err());
        assert!(OccupationConfig { epsilon: 0.0, ..ok }.validate().is_err());
        assert!(OccupationConfig { reps: 99, ..ok }.validate().is_err());
    }

    #[test]
    fn constant_test_function_is_exact() {
        let hh = h(0.8);
        let seq = return_sequence(hh, 256, &DnTable::exact_power(hh)).unwrap();
        let cfg = OccupationConfig::new(hh, 256, 0.0, 1.0, 200, TestFn::Const1, RngSeed::new(3));
        let est = smoothed_functional(&cfg, &seq).unwrap();
        assert_eq!(est.lhs, 1.0);
        assert_eq!(est.se, 0.0);
    }

    #[test]
    fn expected_occupation_brownian() {
        // H = 1/2, interval (-inf-ish, inf-ish): every visit counts.
        let e = expected_occupation(h(0.5), 10, -1e6, 1e6, 0.0);
        assert!((e - 10.0).abs() < 1e-9);
    }
}
