use dfbm_core::fgn_model::{
    autocovariance, b_vector, partial_sum_variance, CovarianceSeq, HurstParam, SpectralDensity, DEFAULT_SPECTRAL_MODES,
};
use proptest::prelude::*;

fn h(v: f64) -> HurstParam {
    HurstParam::new(v).unwrap()
}

#[test]
fn hurst_bounds() {
    assert!(HurstParam::new(0.49).is_err());
    assert!(HurstParam::new(1.0).is_err());
    assert!(HurstParam::new(f64::NAN).is_err());
    assert!(h(0.76).cllt_regime());
    assert!(!h(0.75).cllt_regime());
}

#[test]
fn reference_values() {
    assert_eq!(autocovariance(h(0.8), 0), 1.0);
    assert_eq!(autocovariance(h(0.5), 3), 0.0);
    assert!((autocovariance(h(0.8), 1) - (2f64.powf(0.6) - 1.0)).abs() < 1e-15);
    let b2 = 0.5 * (3f64.powf(1.6) - 2.0 * 2f64.powf(1.6) + 1.0);
    assert!((autocovariance(h(0.8), 2) - b2).abs() < 1e-15);
    assert_eq!(b_vector(h(0.5), 5, 3), vec![0.0; 3]);
    assert_eq!(partial_sum_variance(h(0.7), 1), 1.0);
    assert!((partial_sum_variance(h(0.5), 100) - 100.0).abs() < 1e-12);
}

#[test]
fn b_vector_matches_brute_sums() {
    for hv in [0.55, 0.8, 0.85, 0.95] {
        let hh = h(hv);
        let b: Vec<f64> = (0..1100).map(|t| autocovariance(hh, t)).collect();
        for n in [1u64, 2, 3, 7, 16, 33, 64] {
            let closed = b_vector(hh, n, 1024);
            for s in 1..=1024usize {
                let brute: f64 = b[s..s + n as usize].iter().sum();
                let rel = (closed[s - 1] - brute).abs() / brute;
                assert!(rel < 1e-12, "h={hv} n={n} s={s}: {} vs {brute}", closed[s - 1]);
            }
        }
    }
}

#[test]
fn variance_equals_double_sum() {
    for hv in [0.6, 0.8, 0.9] {
        let hh = h(hv);
        let b: Vec<f64> = (0..256).map(|t| autocovariance(hh, t)).collect();
        for n in [1usize, 4, 17, 100, 256] {
            let mut total = 0.0;
            for i in 0..n {
                for j in 0..n {
                    total += b[i.abs_diff(j)];
                }
            }
            let exact = partial_sum_variance(hh, n as u64);
            assert!((exact - total).abs() / exact < 1e-10, "h={hv} n={n}");
        }
    }
    assert!((partial_sum_variance(h(0.8), 4) - 9.189_586_839_976_28).abs() < 1e-10);
}

#[test]
fn lemma_asymptotics() {
    let hh = h(0.85);
    let n = 16u64;
    let b = b_vector(hh, n, 200);
    let asym = 0.5 * 1.7 * 0.7 * n as f64 * (200.0 + n as f64).powf(1.7 - 2.0);
    assert!((b[199] - asym).abs() / asym < 5.0 / 200.0);

    for hv in [0.6, 0.8, 0.9] {
        let hh = h(hv);
        let t = 10_000u64;
        let scaled = autocovariance(hh, t) * (t as f64).powf(2.0 - 2.0 * hv);
        let limit = hv * (2.0 * hv - 1.0);
        assert!((scaled - limit).abs() / limit < 0.01);
    }
}

#[test]
fn covariance_sequence_shape() {
    for hv in [0.55, 0.8, 0.99] {
        let seq = CovarianceSeq::new(h(hv), 5000);
        assert_eq!(seq.values[0], 1.0);
        assert!(seq.values[1..].iter().all(|&b| b > 0.0));
        assert!(seq.values[1..].windows(2).all(|w| w[1] <= w[0]));
    }
}

#[test]
fn spectral_inverse_transform() {
    for hv in [0.6, 0.8, 0.9] {
        let hh = h(hv);
        let f = SpectralDensity::new(hh, DEFAULT_SPECTRAL_MODES).unwrap();
        for k in 0..=10u64 {
            let err = (f.inverse_transform(k) - autocovariance(hh, k)).abs();
            assert!(err < 1e-6, "h={hv} k={k}: err {err}");
        }
    }
}

#[test]
fn spectral_shape() {
    let f = SpectralDensity::new(h(0.8), DEFAULT_SPECTRAL_MODES).unwrap();
    for i in 1..50 {
        let l = i as f64 / 101.0;
        let (p, m) = (f.eval(l).unwrap(), f.eval(-l).unwrap());
        assert!(p > 0.0);
        assert_eq!(p, m);
    }
    let (argmin, min) = f.grid_minimum(10_000);
    assert!(min > 0.0);
    assert!(argmin > 0.49);
    assert!((min - f.at_nyquist()).abs() / min < 1e-6);
    assert!(f.eval(0.0).is_err());
    assert!(f.eval(0.5).is_err());
    assert!(f.eval(-0.7).is_err());
}

#[test]
fn more_modes_change_little() {
    let hh = h(0.8);
    let coarse = SpectralDensity::new(hh, 50).unwrap();
    let fine = SpectralDensity::new(hh, 800).unwrap();
    for l in [0.01, 0.1, 0.3, 0.49] {
        let (a, b) = (coarse.eval(l).unwrap(), fine.eval(l).unwrap());
        assert!((a - b).abs() / b < 1e-4);
    }
}

proptest! {
    #[test]
    fn telescoping(hv in 0.55f64..0.99, n in 1u64..=64, s in 1usize..=1024) {
        let hh = h(hv);
        let brute: f64 = (s as u64..s as u64 + n).map(|i| autocovariance(hh, i)).sum();
        let closed = b_vector(hh, n, s)[s - 1];
        let scale = brute.abs().max(1e-300);
        prop_assert!((closed - brute).abs() <= 1e-12 * scale + 1e-300, "{closed} vs {brute}");
    }

    #[test]
    fn spectral_density_positive(hv in 0.5f64..0.99, l in 1e-9f64..0.4999) {
        let f = SpectralDensity::new(h(hv), 64).unwrap();
        prop_assert!(f.eval(l).unwrap() > 0.0);
    }
}
