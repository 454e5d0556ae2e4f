//! Mean-one Mittag-Leffler law of index `α ∈ (0, 1]`.
//!
//! `Y_α = Γ(1+α) S^{-α}` where `S` is positive α-stable with Laplace transform
//! `exp(-s^α)`. Moments are `E[Y^p] = p! Γ(1+α)^p / Γ(1+pα)`; `α = 1` is the
//! point mass at 1.

use std::io::{self, Write};

use libm::{lgamma as ln_gamma, tgamma as gamma};
use rand::Rng;
use rand_distr::Open01;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fgn_model::HurstParam;
use crate::sampler::RngSeed;

/// Draws per independently seeded block in [`sample`].
const SAMPLE_BLOCK: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct MlfIndex(f64);

impl MlfIndex {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!("Mittag-Leffler index must lie in (0, 1], got {alpha}")));
        }
        Ok(MlfIndex(alpha))
    }

    /// `α = 1 - H`.
    pub fn from_hurst(h: HurstParam) -> Self {
        MlfIndex(h.occupation_index())
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// `E[Y^p] = p! Γ(1+α)^p / Γ(1+pα)`.
pub fn moment(alpha: MlfIndex, p: u32) -> f64 {
    let a = alpha.value();
    let p = p as f64;
    (ln_gamma(p + 1.0) + p * ln_gamma(1.0 + a) - ln_gamma(1.0 + p * a)).exp()
}

/// One draw of `Y_α` from a uniform `u ∈ (0,1)` and exponential `e`, by
/// Kanter's representation of the positive stable law.
fn kanter_draw(alpha: f64, gamma_1a: f64, u: f64, e: f64) -> f64 {
    let theta = std::f64::consts::PI * u;
    // -α ln S, expanded to stay finite for small α
    let log_y = -alpha * (alpha * theta).sin().ln() + theta.sin().ln()
        - (1.0 - alpha) * (((1.0 - alpha) * theta).sin().ln() - e.ln());
    gamma_1a * log_y.exp()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlfSample {
    pub alpha: MlfIndex,
    pub values: Vec<f64>,
    pub seed: RngSeed,
}

/// `count` independent draws of `Y_α`, generated in fixed-size blocks on
/// per-block sub-streams.
pub fn sample(alpha: MlfIndex, count: usize, seed: RngSeed) -> MlfSample {
    let a = alpha.value();
    if a == 1.0 {
        return MlfSample { alpha, values: vec![1.0; count], seed };
    }
    let gamma_1a = gamma(1.0 + a);
    let blocks = count.div_ceil(SAMPLE_BLOCK);
    let values = (0..blocks)
        .into_par_iter()
        .flat_map_iter(|b| {
            let mut rng = seed.child(b as u64).rng();
            let len = SAMPLE_BLOCK.min(count - b * SAMPLE_BLOCK);
            (0..len)
                .map(|_| {
                    let u: f64 = rng.sample(Open01);
                    let v: f64 = rng.sample(Open01);
                    kanter_draw(a, gamma_1a, u, -v.ln())
                })
                .collect::<Vec<_>>()
        })
        .collect();
    MlfSample { alpha, values, seed }
}

/// Right-continuous empirical CDF of a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(mut values: Vec<f64>) -> Self {
        values.sort_by(f64::total_cmp);
        EmpiricalCdf { sorted: values }
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    /// `F(y) = #{x <= y} / n`.
    pub fn eval(&self, y: f64) -> f64 {
        self.sorted.partition_point(|&x| x <= y) as f64 / self.sorted.len() as f64
    }

    /// Dvoretzky–Kiefer–Wolfowitz band half-width at confidence `1 - delta`.
    pub fn dkw_epsilon(&self, delta: f64) -> f64 {
        ((2.0 / delta).ln() / (2.0 * self.sorted.len() as f64)).sqrt()
    }

    /// `(y, F(y))` at `rows` evenly spaced order statistics, ending at the maximum.
    pub fn table(&self, rows: usize) -> Vec<(f64, f64)> {
        let n = self.sorted.len();
        let rows = rows.clamp(1, n.max(1));
        (1..=rows)
            .map(|r| {
                let idx = (r * n).div_ceil(rows) - 1;
                let y = self.sorted[idx];
                (y, self.eval(y))
            })
            .collect()
    }

    /// CSV `y,F(y)` preceded by `#` header lines recording provenance.
    pub fn write_csv<W: Write>(&self, mut out: W, alpha: MlfIndex, seed: RngSeed, rows: usize) -> io::Result<()> {
        writeln!(out, "# alpha={}", alpha.value())?;
        writeln!(out, "# count={}", self.len())?;
        writeln!(out, "# seed={} stream={}", seed.seed, seed.stream)?;
        writeln!(out, "# dkw_epsilon_95={:.16e}", self.dkw_epsilon(0.05))?;
        writeln!(out, "y,F(y)")?;
        for (y, f) in self.table(rows) {
            writeln!(out, "{y:.16e},{f:.16e}")?;
        }
        Ok(())
    }
}

/// Right side of a Kolmogorov–Smirnov comparison.
#[derive(Debug, Clone, Copy)]
pub enum KsReference<'a> {
    /// Second raw sample (two-sample statistic).
    Sample(&'a [f64]),
    /// Tabulated CDF `(y, F(y))`, sorted by `y`, read as a right-continuous step function.
    Table(&'a [(f64, f64)]),
}

/// Sup-norm distance between the empirical CDF of `sample` and `reference`.
pub fn ks_distance(sample: &[f64], reference: KsReference<'_>) -> f64 {
    let mut a = sample.to_vec();
    a.sort_by(f64::total_cmp);
    match reference {
        KsReference::Sample(other) => {
            let mut b = other.to_vec();
            b.sort_by(f64::total_cmp);
            let nb = b.len() as f64;
            sup_step_gap(&a, b.len(), |j| b[j], |j| j as f64 / nb)
        }
        KsReference::Table(table) => {
            sup_step_gap(&a, table.len(), |j| table[j].0, |j| if j == 0 { 0.0 } else { table[j - 1].1 })
        }
    }
}

/// Walk the union of jump points of a sorted sample and a second step
/// function with `len` jumps at `jump(j)`, whose value after `j` jumps is
/// `level(j)`.
fn sup_step_gap<J, L>(sorted: &[f64], len: usize, jump: J, level: L) -> f64
where
    J: Fn(usize) -> f64,
    L: Fn(usize) -> f64,
{
    let na = sorted.len();
    if na == 0 || len == 0 {
        return if na == 0 && len == 0 { 0.0 } else { 1.0 };
    }
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < na || j < len {
        let x = match (i < na, j < len) {
            (true, true) => sorted[i].min(jump(j)),
            (true, false) => sorted[i],
            _ => jump(j),
        };
        while i < na && sorted[i] <= x {
            i += 1;
        }
        while j < len && jump(j) <= x {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - level(j)).abs());
    }
    d
}

/// Asymptotic p-value of a two-sample KS statistic.
pub fn ks_two_sample_pvalue(d: f64, n1: usize, n2: usize) -> f64 {
    let ne = (n1 * n2) as f64 / (n1 + n2) as f64;
    let sq = ne.sqrt();
    kolmogorov_survival((sq + 0.12 + 0.11 / sq) * d)
}

/// `P(K > x)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(x: f64) -> f64 {
    if x < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let jf = j as f64;
        let term = (-2.0 * jf * jf * x * x).exp();
        sum += if j % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample KS critical value `c(δ) sqrt((n1+n2)/(n1 n2))`.
pub fn ks_critical_value(significance: f64, n1: usize, n2: usize) -> f64 {
    let c = (-(significance / 2.0).ln() / 2.0).sqrt();
    c * ((n1 + n2) as f64 / (n1 * n2) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_range() {
        assert!(MlfIndex::new(0.0).is_err());
        assert!(MlfIndex::new(1.2).is_err());
        assert!(MlfIndex::new(1.0).is_ok());
        let h = HurstParam::new(0.8).unwrap();
        assert!((MlfIndex::from_hurst(h).value() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn moment_examples() {
        let one = MlfIndex::new(1.0).unwrap();
        for p in 1..6 {
            assert!((moment(one, p) - 1.0).abs() < 1e-12);
        }
        for a in [0.1, 0.2, 0.5, 0.9] {
            assert!((moment(MlfIndex::new(a).unwrap(), 1) - 1.0).abs() < 1e-12);
        }
        // 2 Γ(3/2)² / Γ(2) = π/2
        assert!((moment(MlfIndex::new(0.5).unwrap(), 2) - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn variance_is_positive_below_one() {
        for a in [0.05, 0.15, 0.2, 0.25, 0.5, 0.99] {
            let idx = MlfIndex::new(a).unwrap();
            assert!(moment(idx, 2) > 1.0);
            assert!(moment(idx, 3) > 0.0);
        }
    }

    #[test]
    fn degenerate_index_returns_ones() {
        let s = sample(MlfIndex::new(1.0).unwrap(), 10, RngSeed::new(1));
        assert_eq!(s.values, vec![1.0; 10]);
    }

    #[test]
    fn near_degenerate_index_concentrates() {
        let s = sample(MlfIndex::new(0.999).unwrap(), 100_000, RngSeed::new(3));
        let mean = s.values.iter().sum::<f64>() / s.values.len() as f64;
        let var = s.values.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (s.values.len() - 1) as f64;
        assert!(var.sqrt() < 0.1);
        assert!(s.values.iter().all(|&y| y > 0.0));
    }

    #[test]
    fn ks_identical_and_shuffled() {
        let xs = [3.0, 1.0, 2.0, 2.0, 5.0];
        let ys = [2.0, 5.0, 1.0, 3.0, 2.0];
        assert_eq!(ks_distance(&xs, KsReference::Sample(&xs)), 0.0);
        assert_eq!(ks_distance(&xs, KsReference::Sample(&ys)), 0.0);
    }

    #[test]
    fn ks_disjoint_samples() {
        assert_eq!(ks_distance(&[1.0, 2.0], KsReference::Sample(&[3.0, 4.0, 5.0])), 1.0);
        assert_eq!(ks_distance(&[1.0, 2.0, 3.0, 4.0], KsReference::Sample(&[2.5])), 0.5);
    }

    #[test]
    fn ks_against_own_table_is_zero() {
        let cdf = EmpiricalCdf::new(vec![0.3, 0.1, 0.2, 0.2, 0.9]);
        let table = cdf.table(cdf.len());
        assert_eq!(ks_distance(cdf.sorted(), KsReference::Table(&table)), 0.0);
        let coarse = [(0.15, 0.25), (1.0, 1.0)];
        // largest gap at 0.9: sample F = 1.0 against the table's 0.25
        assert!((ks_distance(cdf.sorted(), KsReference::Table(&coarse)) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn kolmogorov_reference_points() {
        // P(K > 1.3581) ≈ 0.05, P(K > 1.9495) ≈ 0.001
        assert!((kolmogorov_survival(1.358_1) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_survival(1.949_5) - 0.001).abs() < 1e-5);
        let c = ks_critical_value(1e-3, 100_000, 100_000);
        assert!((c - 1.949_5 * (2.0f64 / 100_000.0).sqrt()).abs() < 1e-5);
    }

    #[test]
    fn empirical_cdf_eval_and_dkw() {
        let cdf = EmpiricalCdf::new(vec![2.0, 1.0, 3.0, 4.0]);
        assert_eq!(cdf.eval(0.5), 0.0);
        assert_eq!(cdf.eval(2.0), 0.5);
        assert_eq!(cdf.eval(10.0), 1.0);
        assert!((cdf.dkw_epsilon(0.05) - ((40.0f64).ln() / 8.0).sqrt()).abs() < 1e-15);
        let t = cdf.table(2);
        assert_eq!(t, vec![(2.0, 0.5), (4.0, 1.0)]);
    }
}
