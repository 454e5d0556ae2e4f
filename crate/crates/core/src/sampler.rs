//! Exact samplers for fractional Gaussian noise paths.
//!
//! Two routes target the same law `N(0, [b(|i-j|)])`:
//!
//! * [`CholeskySampler`] factors the covariance once (packed lower triangle)
//!   and multiplies i.i.d. normals by the factor. `O(n²)` per path, `n <= 4096`.
//! * [`CirculantSampler`] embeds the covariance in a `2n` circulant whose
//!   spectrum is computed by FFT, and draws paths in `O(n log n)`.
//!
//! Every draw is a pure function of an [`RngSeed`]; replications use
//! [`RngSeed::child`] so results do not depend on thread scheduling.

use std::io::{self, Read, Write};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::fgn_model::{autocovariance, HurstParam};

/// Largest path length accepted by the Cholesky route.
pub const CHOLESKY_MAX_N: usize = 4096;

/// Prefix sums switch to compensated summation above this length.
pub const COMPENSATED_SUM_THRESHOLD: usize = 1 << 12;

/// Circulant eigenvalues above this (negative) value are round-off and get clipped.
pub const EMBEDDING_NEGATIVE_TOL: f64 = -1e-9;

/// Counter-based seed: `(seed, stream)` fixes every random draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngSeed {
    pub seed: u64,
    pub stream: u64,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngSeed {
    pub const fn new(seed: u64) -> Self {
        RngSeed { seed, stream: 0 }
    }

    pub const fn with_stream(seed: u64, stream: u64) -> Self {
        RngSeed { seed, stream }
    }

    /// Independent sub-stream for replication `index`.
    pub fn child(self, index: u64) -> Self {
        RngSeed { seed: self.seed, stream: splitmix(self.stream ^ splitmix(index.wrapping_add(1))) }
    }

    pub fn rng(self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// One sample of `(X_1, …, X_n)` together with `S_j = X_1 + … + X_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct FgnPath {
    pub h: HurstParam,
    pub increments: Vec<f64>,
    pub partial_sums: Vec<f64>,
}

impl FgnPath {
    pub fn from_increments(h: HurstParam, increments: Vec<f64>) -> Self {
        let partial_sums = partial_sums(&increments);
        FgnPath { h, increments, partial_sums }
    }

    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    /// CSV with columns `index, X, S` (1-based index).
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "index,X,S")?;
        for (i, (x, s)) in self.increments.iter().zip(&self.partial_sums).enumerate() {
            writeln!(out, "{},{:.16e},{:.16e}", i + 1, x, s)?;
        }
        Ok(())
    }

    /// Binary cache: `b"FGN1"`, `h: f64`, `n: u64`, then `X[n]` and `S[n]`,
    /// all little-endian.
    pub fn write_binary<W: Write>(&self, mut out: W) -> io::Result<()> {
        out.write_all(b"FGN1")?;
        out.write_all(&self.h.value().to_le_bytes())?;
        out.write_all(&(self.len() as u64).to_le_bytes())?;
        for x in self.increments.iter().chain(&self.partial_sums) {
            out.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> io::Result<Self> {
        let bad = |msg: &str| io::Error::new(io::ErrorKind::InvalidData, msg.to_string());
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != b"FGN1" {
            return Err(bad("missing FGN1 magic"));
        }
        let mut word = [0u8; 8];
        input.read_exact(&mut word)?;
        let h = HurstParam::new(f64::from_le_bytes(word)).map_err(|e| bad(&e.to_string()))?;
        input.read_exact(&mut word)?;
        let n = u64::from_le_bytes(word) as usize;
        let mut column = |len: usize| -> io::Result<Vec<f64>> {
            let mut v = Vec::with_capacity(len);
            for _ in 0..len {
                input.read_exact(&mut word)?;
                v.push(f64::from_le_bytes(word));
            }
            Ok(v)
        };
        let increments = column(n)?;
        let partial_sums = column(n)?;
        Ok(FgnPath { h, increments, partial_sums })
    }
}

/// Prefix sums `S_1..S_n`; compensated (Neumaier) above 2^12 terms.
pub fn partial_sums(increments: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(increments.len());
    if increments.len() <= COMPENSATED_SUM_THRESHOLD {
        let mut s = 0.0;
        for &x in increments {
            s += x;
            out.push(s);
        }
    } else {
        let (mut s, mut c) = (0.0f64, 0.0f64);
        for &x in increments {
            let t = s + x;
            if s.abs() >= x.abs() {
                c += (s - t) + x;
            } else {
                c += (x - t) + s;
            }
            s = t;
            out.push(s + c);
        }
    }
    out
}

fn standard_normals(rng: &mut ChaCha8Rng, n: usize) -> impl Iterator<Item = f64> + '_ {
    (0..n).map(move |_| StandardNormal.sample(rng))
}

/// Exact sampler through the Cholesky factor of `Σ₁₁(n, n)`.
#[derive(Debug, Clone)]
pub struct CholeskySampler {
    h: HurstParam,
    n: usize,
    /// Row-major packed lower triangle: `L[i][j]` at `i(i+1)/2 + j`.
    factor: Vec<f64>,
}

impl CholeskySampler {
    pub fn new(h: HurstParam, n: usize) -> Result<Self> {
        if n == 0 || n > CHOLESKY_MAX_N {
            return Err(Error::InvalidParameter(format!("Cholesky sampler needs 1 <= n <= {CHOLESKY_MAX_N}, got {n}")));
        }
        let cov: Vec<f64> = (0..n as u64).map(|t| autocovariance(h, t)).collect();
        let idx = |i: usize, j: usize| i * (i + 1) / 2 + j;
        let mut factor = vec![0.0; n * (n + 1) / 2];
        for i in 0..n {
            let row_i = idx(i, 0);
            for j in 0..=i {
                let row_j = idx(j, 0);
                let mut s = cov[i - j];
                for p in 0..j {
                    s -= factor[row_i + p] * factor[row_j + p];
                }
                if i == j {
                    if !(s > 0.0) {
                        return Err(Error::CholeskyFailure { row: i, pivot: s });
                    }
                    factor[row_i + i] = s.sqrt();
                } else {
                    factor[row_i + j] = s / factor[row_j + j];
                }
            }
        }
        Ok(CholeskySampler { h, n, factor })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sample(&self, seed: RngSeed) -> FgnPath {
        let mut rng = seed.rng();
        let z: Vec<f64> = standard_normals(&mut rng, self.n).collect();
        let mut x = vec![0.0; self.n];
        for (i, xi) in x.iter_mut().enumerate() {
            let row = &self.factor[i * (i + 1) / 2..i * (i + 1) / 2 + i + 1];
            *xi = row.iter().zip(&z).map(|(l, z)| l * z).sum();
        }
        FgnPath::from_increments(self.h, x)
    }
}

/// Draw one path of length `n` by the Cholesky route.
pub fn sample_cholesky(h: HurstParam, n: usize, seed: RngSeed) -> Result<FgnPath> {
    Ok(CholeskySampler::new(h, n)?.sample(seed))
}

/// Exact sampler through circulant embedding (Davies–Harte).
#[derive(Clone)]
pub struct CirculantSampler {
    h: HurstParam,
    n: usize,
    /// `sqrt(λ_j / 2n)` for the embedding eigenvalues `λ_j`.
    amplitudes: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for CirculantSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CirculantSampler").field("h", &self.h).field("n", &self.n).finish()
    }
}

impl CirculantSampler {
    pub fn new(h: HurstParam, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("path length must be positive".into()));
        }
        let size = 2 * n;
        // First row (b0, b1, …, b_{n-1}, b_n, b_{n-1}, …, b1).
        let mut buf: Vec<Complex64> = (0..size)
            .map(|j| {
                let lag = if j <= n { j } else { size - j };
                Complex64::new(autocovariance(h, lag as u64), 0.0)
            })
            .collect();
        let fft = FftPlanner::<f64>::new().plan_fft_forward(size);
        fft.process(&mut buf);
        let mut amplitudes = Vec::with_capacity(size);
        for (index, z) in buf.iter().enumerate() {
            let eigenvalue = z.re;
            if eigenvalue < EMBEDDING_NEGATIVE_TOL {
                return Err(Error::EmbeddingNotPsd { index, eigenvalue });
            }
            amplitudes.push((eigenvalue.max(0.0) / size as f64).sqrt());
        }
        Ok(CirculantSampler { h, n, amplitudes, fft })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> HurstParam {
        self.h
    }

    /// Increments only, without building the partial sums.
    pub fn sample_increments(&self, seed: RngSeed) -> Vec<f64> {
        let mut rng = seed.rng();
        let mut buf: Vec<Complex64> = self
            .amplitudes
            .iter()
            .map(|&a| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(a * re, a * im)
            })
            .collect();
        self.fft.process(&mut buf);
        buf[..self.n].iter().map(|z| z.re).collect()
    }

    pub fn sample(&self, seed: RngSeed) -> FgnPath {
        FgnPath::from_increments(self.h, self.sample_increments(seed))
    }
}

/// Draw one path of length `n` by circulant embedding.
pub fn sample_circulant(h: HurstParam, n: usize, seed: RngSeed) -> Result<FgnPath> {
    Ok(CirculantSampler::new(h, n)?.sample(seed))
}
