//! Covariance structure of discrete-time fractional Gaussian noise.
//!
//! The increments `X_i = B^H(i) - B^H(i-1)` of fractional Brownian motion
//! form a stationary Gaussian sequence with autocovariance
//!
//! ```text
//! b(t) = ½ [ (t+1)^{2H} - 2 t^{2H} + (t-1)^{2H} ],   b(0) = 1.
//! ```
//!
//! Everything here is a closed form or a deterministic quadrature; no state.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::quadrature::tanh_sinh;

/// Above this lag the second difference in `b(t)` is evaluated by its binomial
/// series in `1/t`; the direct formula loses roughly `2 log10(t)` digits.
const SERIES_CROSSOVER: u64 = 16;

/// Hurst exponent of the underlying fractional Brownian motion.
///
/// Accepted range is `[1/2, 1)`. The boundary `H = 1/2` (independent
/// increments) is admitted as a control case; everything below it is
/// rejected.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct HurstParam(f64);

impl HurstParam {
    pub fn new(h: f64) -> Result<Self> {
        if !(0.5..1.0).contains(&h) || h.is_nan() {
            return Err(Error::InvalidParameter(format!("Hurst parameter must lie in [0.5, 1), got {h}")));
        }
        Ok(HurstParam(h))
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    /// `2H`, the exponent that appears in every covariance formula.
    #[inline]
    pub fn two_h(self) -> f64 {
        2.0 * self.0
    }

    /// Strictly long-range dependent (`H > 1/2`).
    pub fn is_long_range(self) -> bool {
        self.0 > 0.5
    }

    /// `H > 3/4`: the regime in which the conditional local limit theorem is stated.
    pub fn cllt_regime(self) -> bool {
        self.0 > 0.75
    }

    /// Mittag-Leffler index `1 - H` of the occupation-time limit.
    pub fn occupation_index(self) -> f64 {
        1.0 - self.0
    }
}

impl std::fmt::Display for HurstParam {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Autocovariance `b(t)` of unit-variance fGn.
pub fn autocovariance(h: HurstParam, t: u64) -> f64 {
    if t == 0 {
        return 1.0;
    }
    let two_h = h.two_h();
    if t < SERIES_CROSSOVER {
        let tf = t as f64;
        return 0.5 * ((tf + 1.0).powf(two_h) - 2.0 * tf.powf(two_h) + (tf - 1.0).powf(two_h));
    }
    // ½ t^{2H} [(1+x)^{2H} - 2 + (1-x)^{2H}] = t^{2H} Σ_{j≥1} C(2H, 2j) x^{2j},  x = 1/t
    let tf = t as f64;
    let x2 = 1.0 / (tf * tf);
    let mut coeff = 1.0; // C(2H, i)
    let mut power = 1.0; // x^{2j}
    let mut sum = 0.0;
    let mut i = 0.0;
    for _ in 0..64 {
        coeff *= (two_h - i) / (i + 1.0);
        coeff *= (two_h - i - 1.0) / (i + 2.0);
        i += 2.0;
        power *= x2;
        let term = coeff * power;
        sum += term;
        if term.abs() <= 1e-18 * sum.abs() {
            break;
        }
    }
    tf.powf(two_h) * sum
}

/// `(u + d)^p - u^p` without cancellation when `d << u`.
fn power_increment(p: f64, u: f64, d: f64) -> f64 {
    if u == 0.0 {
        return d.powf(p);
    }
    u.powf(p) * (p * (d / u).ln_1p()).exp_m1()
}

/// Below this `s - 1` the four-term form is used directly.
const B_SERIES_START: f64 = 4.0;

/// Cross-covariance vector `B(s) = Σ_{i=s}^{n+s-1} b(i)`, `s = 1..=k`.
///
/// Entry `s` is `Cov(S_n, X_{n+s})`, the telescoped form
/// `½[(n+s)^{2H} - (n+s-1)^{2H} - s^{2H} + (s-1)^{2H}]`. For larger `s` the
/// two first differences nearly cancel, so with `u = s - 1` the bracket is
/// expanded as `Σ_{j≥1} C(2H, j) [(u+n)^{2H-j} - u^{2H-j}]`, whose leading
/// term dominates.
pub fn b_vector(h: HurstParam, n: u64, k: usize) -> Vec<f64> {
    assert!(n >= 1, "n must be positive");
    let two_h = h.two_h();
    if two_h == 1.0 {
        // Independent increments; any evaluation would leave round-off.
        return vec![0.0; k];
    }
    let nf = n as f64;
    (1..=k)
        .map(|s| {
            let u = s as f64 - 1.0;
            if u < B_SERIES_START {
                return 0.5 * (power_increment(two_h, u + nf, 1.0) - power_increment(two_h, u, 1.0));
            }
            let log_ratio = (nf / u).ln_1p();
            let mut coeff = 1.0; // C(2H, j)
            let mut power = u.powf(two_h); // u^{2H-j}
            let mut sum = 0.0;
            for j in 1..=96 {
                let jf = j as f64;
                coeff *= (two_h - jf + 1.0) / jf;
                power /= u;
                let p = two_h - jf;
                let term = coeff * power * (p * log_ratio).exp_m1();
                sum += term;
                if term.abs() <= 1e-18 * sum.abs() {
                    break;
                }
            }
            0.5 * sum
        })
        .collect()
}

/// `Var(S_n) = e Σ₁₁ eᵀ = n^{2H}`.
pub fn partial_sum_variance(h: HurstParam, n: u64) -> f64 {
    (n as f64).powf(h.two_h())
}

/// Tabulated autocovariances `b(0..=t_max)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSeq {
    pub h: HurstParam,
    pub values: Vec<f64>,
}

impl CovarianceSeq {
    pub fn new(h: HurstParam, t_max: u64) -> Self {
        let values = (0..=t_max).map(|t| autocovariance(h, t)).collect();
        CovarianceSeq { h, values }
    }
}

/// Spectral density of fGn on `(-1/2, 1/2)`:
///
/// ```text
/// f(λ) = C (1 - cos 2πλ) Σ_m |λ + m|^{-(1+2H)}
/// ```
///
/// The aliasing sum keeps `|m| <= modes` exactly and replaces the rest by its
/// midpoint-rule integral. `C` is fixed numerically so that `∫ f = b(0) = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDensity {
    pub h: HurstParam,
    pub modes: usize,
    pub normalization: f64,
}

pub const DEFAULT_SPECTRAL_MODES: usize = 200;
const SPECTRAL_QUAD_TOL: f64 = 1e-13;

impl SpectralDensity {
    pub fn new(h: HurstParam, modes: usize) -> Result<Self> {
        if modes == 0 {
            return Err(Error::InvalidParameter("spectral mode truncation must be positive".into()));
        }
        let mut density = SpectralDensity { h, modes, normalization: 1.0 };
        let regular = tanh_sinh(|l| density.regular_part(l), 0.0, 0.5, SPECTRAL_QUAD_TOL);
        density.normalization = 1.0 / (2.0 * (density.singular_mass() + regular));
        Ok(density)
    }

    /// `2π² λ^{1-2H}`, the non-integrable-looking part of the `m = 0` term.
    fn singular_part(&self, lambda: f64) -> f64 {
        2.0 * PI * PI * lambda.powf(1.0 - self.h.two_h())
    }

    /// `∫_0^{1/2} 2π² λ^{1-2H} dλ`.
    fn singular_mass(&self) -> f64 {
        let e = 2.0 - self.h.two_h();
        2.0 * PI * PI * 0.5f64.powf(e) / e
    }

    /// `shape(λ) - singular_part(λ)`, bounded near `λ = 0`.
    fn regular_part(&self, lambda: f64) -> f64 {
        let lambda = lambda.abs();
        let x = PI * lambda;
        // sinc²(x) - 1, by series where the direct form cancels.
        let sinc2_m1 = if x < 1e-3 {
            let x2 = x * x;
            -x2 / 3.0 + 2.0 * x2 * x2 / 45.0
        } else {
            let s = x.sin() / x;
            s * s - 1.0
        };
        self.singular_part(lambda) * sinc2_m1 + self.alias_part(lambda)
    }

    /// `2 sin²(πλ) Σ_{m≠0} |λ+m|^{-(1+2H)}`, with the far tail integrated.
    fn alias_part(&self, lambda: f64) -> f64 {
        let p = 1.0 + self.h.two_h();
        let sin_pl = (PI * lambda).sin();
        let mut aliases = 0.0;
        for m in (1..=self.modes).rev() {
            let m = m as f64;
            aliases += (m + lambda).powf(-p) + (m - lambda).powf(-p);
        }
        let edge = self.modes as f64 + 0.5;
        let tail = ((edge + lambda).powf(1.0 - p) + (edge - lambda).powf(1.0 - p)) / (p - 1.0);
        2.0 * sin_pl * sin_pl * (aliases + tail)
    }

    /// Unnormalized density for `0 < λ <= 1/2`.
    fn shape(&self, lambda: f64) -> f64 {
        let lambda = lambda.abs();
        // The m = 0 term carries the pole; write 2 sin²(πλ) λ^{-(1+2H)} as
        // 2π² λ^{1-2H} sinc²(πλ) so tiny λ neither underflows nor overflows.
        let x = PI * lambda;
        let sinc = if x < 1e-8 { 1.0 - x * x / 6.0 } else { x.sin() / x };
        self.singular_part(lambda) * sinc * sinc + self.alias_part(lambda)
    }

    /// `f(λ)` for `λ ∈ (-1/2, 1/2) \ {0}`.
    pub fn eval(&self, lambda: f64) -> Result<f64> {
        if lambda == 0.0 || lambda.is_nan() {
            return Err(Error::InvalidParameter("spectral density has a pole at lambda = 0".into()));
        }
        if lambda.abs() >= 0.5 {
            return Err(Error::InvalidParameter(format!("spectral density is defined on (-1/2, 1/2), got {lambda}")));
        }
        Ok(self.normalization * self.shape(lambda))
    }

    /// Value at the Nyquist edge `λ = 1/2` (limit from inside the domain).
    pub fn at_nyquist(&self) -> f64 {
        self.normalization * self.shape(0.5)
    }

    /// `∫ f(λ) e^{2πikλ} dλ`, which should reproduce `b(k)`.
    pub fn inverse_transform(&self, k: u64) -> f64 {
        let kf = k as f64;
        // shape·cos = singular + (shape·cos - singular); the second piece is bounded.
        let bounded = |l: f64| {
            let c = (2.0 * PI * kf * l).cos();
            self.regular_part(l) * c + self.singular_part(l) * (c - 1.0)
        };
        2.0 * self.normalization * (self.singular_mass() + tanh_sinh(bounded, 0.0, 0.5, SPECTRAL_QUAD_TOL))
    }

    /// Minimum of `f` over a uniform grid of `points` values in `(0, 1/2]`.
    ///
    /// `f` is even, so the half-interval suffices.
    pub fn grid_minimum(&self, points: usize) -> (f64, f64) {
        (1..=points)
            .map(|i| {
                let l = 0.5 * i as f64 / points as f64;
                (l, self.normalization * self.shape(l))
            })
            .fold((f64::NAN, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
    }
}
