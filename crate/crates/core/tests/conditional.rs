use dfbm_core::conditional::{
    cllt_check, conditional_mean_vanishing, conditional_params, estimate_dn, quadratic_form_decay,
    scaled_interval_probability, ClltSpec, ConditionalLaw, DnOptions, DnTable,
};
use dfbm_core::fgn_model::{autocovariance, HurstParam};
use dfbm_core::sampler::{sample_circulant, RngSeed};
use dfbm_core::stats::{normal_cdf, normal_pdf};
use dfbm_core::toeplitz::{eigen_extremes, levinson_solve, SymmetricToeplitz};
use dfbm_core::Error;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn h(v: f64) -> HurstParam {
    HurstParam::new(v).unwrap()
}

/// `Cov(S_n, X_{n+j})` and `Var(S_n)` by brute summation of `b`.
fn brute_cross(hh: HurstParam, n: u64, k: usize) -> (Vec<f64>, f64) {
    let b: Vec<f64> = (0..n + k as u64).map(|t| autocovariance(hh, t)).collect();
    let cross = (1..=k as u64).map(|j| (1..=n).map(|i| b[(n + j - i) as usize]).sum()).collect();
    let mut var = 0.0;
    for i in 0..n {
        for j in 0..n {
            var += b[i.abs_diff(j) as usize];
        }
    }
    (cross, var)
}

/// Schur complement of the joint covariance of `(S_n, X_{n+1..n+k})`.
fn dense_conditional(hh: HurstParam, n: u64, future: &[f64]) -> (f64, f64) {
    let k = future.len();
    let (cross, var) = brute_cross(hh, n, k);
    let sigma22 = DMatrix::from_fn(k, k, |i, j| autocovariance(hh, i.abs_diff(j) as u64));
    let chol = sigma22.cholesky().unwrap();
    let w = chol.solve(&DVector::from_column_slice(&cross));
    let mu = w.dot(&DVector::from_column_slice(future));
    (mu, var - w.dot(&DVector::from_column_slice(&cross)))
}

fn pow2(range: std::ops::RangeInclusive<u32>) -> Vec<usize> {
    range.map(|j| 1usize << j).collect()
}

#[test]
fn matches_dense_conditioning() {
    let hh = h(0.8);
    let future = sample_circulant(hh, 64, RngSeed::new(11)).unwrap().increments;
    let g = conditional_params(hh, 8, &future).unwrap();
    let (mu, sigma2) = dense_conditional(hh, 8, &future);
    assert!((g.mu - mu).abs() <= 1e-8 * mu.abs().max(1.0), "{} vs {mu}", g.mu);
    assert!((g.sigma2 - sigma2).abs() <= 1e-8 * sigma2);
    assert_eq!((g.n, g.k), (8, 64));
}

#[test]
fn brownian_increments_carry_no_information() {
    let hh = h(0.5);
    let future = sample_circulant(hh, 40, RngSeed::new(2)).unwrap().increments;
    for n in [1, 7, 30] {
        let g = conditional_params(hh, n, &future).unwrap();
        assert_eq!(g.mu, 0.0);
        assert!((g.sigma2 - n as f64).abs() < 1e-12);
    }
    let decay = quadratic_form_decay(hh, 5, &[1, 8, 64]).unwrap();
    assert!(decay.rows.iter().all(|r| r.qform == 0.0));
    assert!(decay.fit.is_none());
}

#[test]
fn variance_identity_on_grid() {
    for hv in [0.8, 0.85] {
        let hh = h(hv);
        for n in [1u64, 4, 16] {
            let decay = quadratic_form_decay(hh, n, &pow2(5..=12)).unwrap();
            let target = (n as f64).powf(2.0 * hv);
            for row in &decay.rows {
                // Independent route: fresh Levinson solve on brute-force B.
                let (cross, _) = brute_cross(hh, n, row.k);
                let t = SymmetricToeplitz::fgn(hh, row.k);
                let x = levinson_solve(&t, &cross).unwrap();
                let q: f64 = cross.iter().zip(&x).map(|(a, b)| a * b).sum();
                assert!((row.qform - q).abs() <= 1e-8 * q, "h={hv} n={n} k={}", row.k);
                assert!((row.sigma2 + q - target).abs() <= 1e-8 * target);
                if row.k <= 512 {
                    let (_, sigma2) = dense_conditional(hh, n, &vec![0.0; row.k]);
                    assert!((row.sigma2 - sigma2).abs() <= 1e-8 * target);
                }
            }
        }
    }
}

#[test]
fn conditioning_on_more_future_never_adds_variance() {
    for hv in [0.6, 0.8, 0.85, 0.95] {
        for n in [1u64, 4, 16] {
            let decay = quadratic_form_decay(h(hv), n, &pow2(4..=12)).unwrap();
            let var = (n as f64).powf(2.0 * hv);
            for w in decay.rows.windows(2) {
                assert!(w[1].sigma2 <= w[0].sigma2 * (1.0 + 1e-12), "h={hv} n={n} k={}", w[1].k);
                assert!(w[1].qform >= w[0].qform * (1.0 - 1e-12));
            }
            assert!(decay.rows.iter().all(|r| r.sigma2 > 0.0 && r.sigma2 <= var));
        }
    }
}

#[test]
fn quadratic_form_below_eigen_bound() {
    let hh = h(0.85);
    let decay = quadratic_form_decay(hh, 4, &pow2(3..=10)).unwrap();
    for row in &decay.rows {
        let (cross, _) = brute_cross(hh, 4, row.k);
        let norm2: f64 = cross.iter().map(|x| x * x).sum();
        let e = eigen_extremes(&SymmetricToeplitz::fgn(hh, row.k), 1e-9).unwrap();
        assert!(row.qform <= norm2 / e.lambda_min * (1.0 + 1e-8), "k={}", row.k);
    }
}

#[test]
fn qform_keeps_most_of_its_size_below_three_quarters() {
    let decay = quadratic_form_decay(h(0.6), 4, &pow2(5..=14)).unwrap();
    let (first, last) = (decay.rows[0].qform, decay.rows.last().unwrap().qform);
    assert!(last / first > 0.5);
    assert!(!decay.in_regime);
}

#[test]
fn dn_matches_direct_sweep() {
    let hh = h(0.85);
    let opts = DnOptions::default();
    let entry = estimate_dn(hh, 1, &opts).unwrap();
    let sigma2 = |k: usize| {
        let (cross, var) = brute_cross(hh, 1, k);
        let x = levinson_solve(&SymmetricToeplitz::fgn(hh, k), &cross).unwrap();
        var - cross.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>()
    };
    let mut k = opts.k_start;
    while (sigma2(2 * k) - sigma2(k)).abs() > opts.rel_tol * sigma2(k) {
        k *= 2;
    }
    assert_eq!(entry.k_used, k);
    assert!((entry.dn2 - sigma2(2 * k)).abs() <= 1e-10);
    assert!(entry.dn2 > 0.0 && entry.dn2 < 1.0);
    assert_eq!(entry.l_n, entry.dn2);
}

#[test]
fn dn_for_brownian_motion() {
    let e = estimate_dn(h(0.5), 10, &DnOptions::default()).unwrap();
    assert!((e.dn2 - 10.0).abs() < 1e-10);
    assert_eq!(e.k_used, DnOptions::default().k_start);
}

#[test]
fn dn_stabilizes_in_regime() {
    let hh = h(0.85);
    let table = DnTable::measure(hh, &[1, 4, 16], &DnOptions::default()).unwrap();
    for (&n, e) in &table.entries {
        assert!(e.k_used * 2 <= 1 << 14);
        assert!(e.dn2 <= (n as f64).powf(1.7));
        assert!(e.l_n > 0.0 && e.l_n < 1.0);
    }
}

#[test]
fn dn_ratio_varies_slowly() {
    let hh = h(0.85);
    let grid: Vec<u64> = (4..=7).map(|j| 1u64 << j).collect();
    let table = DnTable::measure(hh, &grid, &DnOptions::default()).unwrap();
    let (lo, hi) = (table.entries[&64].l_n, table.entries[&128].l_n);
    assert!((hi - lo).abs() / lo < 0.05, "{lo} {hi}");
    assert_eq!(table.plateau().unwrap(), hi);
    assert_eq!(table.l_at(1 << 12).unwrap(), hi);
}

#[test]
fn conditional_mean_statistics() {
    let hh = h(0.85);
    let mv = conditional_mean_vanishing(hh, 4, &[64, 1024, 4096], 1000, RngSeed::new(99)).unwrap();
    for row in &mv.rows {
        assert!(row.mu_mean.abs() <= 4.0 * row.mu_mean_se, "k={} mean {}", row.k, row.mu_mean);
        assert!((row.mu_sample_var - row.qform).abs() <= 3.0 * row.mu_var_se, "k={}", row.k);
        // μ is centered Gaussian with variance qform, so E|μ|/σ is known.
        let exact = (2.0 * row.qform / (std::f64::consts::PI * row.sigma2)).sqrt();
        assert!((row.mean_abs_ratio - exact).abs() <= 4.0 * row.mean_abs_ratio_se, "k={}", row.k);
        assert!(row.max_abs_ratio >= row.mean_abs_ratio);
    }
    assert!(mv.in_regime);
    assert!(conditional_mean_vanishing(hh, 4, &[64], 99, RngSeed::new(1)).is_err());
}

#[test]
fn brownian_conditional_mean_is_zero() {
    let mv = conditional_mean_vanishing(h(0.5), 3, &[8, 32], 100, RngSeed::new(4)).unwrap();
    for row in &mv.rows {
        assert_eq!(row.mean_abs_ratio, 0.0);
        assert_eq!(row.max_abs_ratio, 0.0);
    }
}

#[test]
fn cllt_targets() {
    assert!((normal_pdf(0.0) - 0.398_942_280_401_432_7).abs() < 1e-15);
    assert!((normal_pdf(1.0) - 0.241_970_724_519_143_37).abs() < 1e-15);
}

#[test]
fn cllt_average_recovers_unconditional_probability() {
    // Averaging the conditional probability over futures gives back
    // P(S_n ∈ (a, b)) under N(0, n^{2H}).
    let hh = h(0.85);
    let table = DnTable::exact_power(hh);
    let spec = ClltSpec { a: 0.0, b: 1.0, kappa: 0.0, k: 256, reps: 2000, seed: RngSeed::new(8) };
    let check = cllt_check(hh, &[4, 16, 64], &spec, &table).unwrap();
    for row in &check.rows {
        let s = (row.n as f64).powf(0.85);
        let exact = s * (normal_cdf(1.0 / s) - normal_cdf(0.0));
        assert!((row.dn - s).abs() < 1e-12 * s);
        assert!((row.mean_dnp - exact).abs() <= 4.0 * row.se_dnp, "n={}", row.n);
        assert!((row.target - normal_pdf(0.0)).abs() < 1e-15);
    }
    let k1 = cllt_check(hh, &[16], &ClltSpec { kappa: 1.0, ..spec }, &table).unwrap();
    let s = 16f64.powf(0.85);
    let exact = s * (normal_cdf(1.0 + 1.0 / s) - normal_cdf(1.0));
    assert!((k1.rows[0].mean_dnp - exact).abs() <= 4.0 * k1.rows[0].se_dnp);
}

#[test]
fn missing_dn_is_reported() {
    let empty = DnTable { h: h(0.8), entries: Default::default() };
    assert!(matches!(empty.dn(4), Err(Error::MissingDn { .. })));
    let bad = ConditionalLaw::new(h(0.8), 4, 16).unwrap();
    assert!(matches!(bad.mean(&[0.0; 15]), Err(Error::DimensionMismatch { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn interval_probability_is_translation_invariant(
        mu in -5.0f64..5.0,
        sigma in 0.1f64..3.0,
        q in -3.0f64..3.0,
        a in -2.0f64..1.0,
        width in 0.1f64..2.0,
        shift in -2.0f64..2.0,
    ) {
        let b = a + width;
        let p = scaled_interval_probability(2.0, q, a, b, mu, sigma);
        let moved = scaled_interval_probability(2.0, q - shift, a + shift, b + shift, mu, sigma);
        prop_assert!((p - moved).abs() <= 1e-12);
    }

    #[test]
    fn conditional_variance_bounded(hv in 0.5f64..0.97, n in 1u64..40, k in 1usize..120) {
        let hh = h(hv);
        let law = ConditionalLaw::new(hh, n, k).unwrap();
        let var = (n as f64).powf(2.0 * hv);
        prop_assert!(law.sigma2() > 0.0);
        prop_assert!(law.sigma2() <= var * (1.0 + 1e-12));
        prop_assert!(law.quadratic_form() >= -1e-12 * var);
    }
}
