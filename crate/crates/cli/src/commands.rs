//! One function per subcommand. Each reads its parameters from [`Params`]
//! and returns the tables to write; nothing here touches the filesystem.

use std::time::Instant;

use rayon::prelude::*;

use dfbm_core::conditional::{
    cllt_check, conditional_mean_vanishing, estimate_dn, quadratic_form_decay, ClltSpec, DnOptions, DnTable,
};
use dfbm_core::fgn_model::{autocovariance, b_vector, SpectralDensity, DEFAULT_SPECTRAL_MODES};
use dfbm_core::mittag_leffler::{self, ks_distance, ks_two_sample_pvalue, EmpiricalCdf, KsReference, MlfIndex};
use dfbm_core::occupation::{compare_to_mlf, return_sequence, OccupationConfig, TestFn};
use dfbm_core::sampler::{CholeskySampler, CirculantSampler, CHOLESKY_MAX_N};
use dfbm_core::stats::{log_log_fit, Moments};
use dfbm_core::toeplitz::{
    eigen_extremes, levinson_solve, neumann_quadratic_form, ContractionScale, NeumannConfig, SymmetricToeplitz,
};
use dfbm_core::{Error, HurstParam};

use crate::error::CliError;
use crate::params::Params;
use crate::report::Table;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::Subcommand)]
pub enum Command {
    /// Autocovariance b(t) for t = 0..t-max.
    Cov,
    /// Spectral density on a frequency grid and its inverse transform.
    Spectral,
    /// Levinson, dense and Neumann quadratic forms plus extreme eigenvalues.
    ToeplitzBench,
    /// Conditional variance and quadratic form against k; stabilized d_n².
    Claim1,
    /// Monte Carlo summary of the conditional mean over exact futures.
    Claim2,
    /// Conditional local limit check: mean of d_n P(S_n ∈ q_n + (a, b) | future).
    Cllt,
    /// Sampler validation: lag autocovariances and Cholesky vs circulant KS.
    SampleCheck,
    /// Mittag-Leffler reference sample: moments and CDF table.
    Mlf,
    /// Smoothed occupation-time functionals against the Mittag-Leffler target.
    Occupation,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Cov => "cov",
            Command::Spectral => "spectral",
            Command::ToeplitzBench => "toeplitz-bench",
            Command::Claim1 => "claim1",
            Command::Claim2 => "claim2",
            Command::Cllt => "cllt",
            Command::SampleCheck => "sample-check",
            Command::Mlf => "mlf",
            Command::Occupation => "occupation",
        }
    }
}

/// What a command produced: tables, manifest warnings and a few lines for stdout.
#[derive(Debug, Default)]
pub struct Run {
    pub tables: Vec<Table>,
    pub warnings: Vec<String>,
    pub summary: Vec<String>,
}

pub fn dispatch(cmd: Command, p: &Params) -> Result<Run, CliError> {
    match cmd {
        Command::Cov => cov(p),
        Command::Spectral => spectral(p),
        Command::ToeplitzBench => toeplitz_bench(p),
        Command::Claim1 => claim1(p),
        Command::Claim2 => claim2(p),
        Command::Cllt => cllt(p),
        Command::SampleCheck => sample_check(p),
        Command::Mlf => mlf(p),
        Command::Occupation => occupation(p),
    }
}

fn regime_warning(h: HurstParam, run: &mut Run) {
    if !h.cllt_regime() {
        run.warnings.push(format!("outside theorem regime H <= 3/4 (H = {h})"));
    }
}

fn usize_grid(grid: Vec<u64>) -> Vec<usize> {
    grid.into_iter().map(|x| x as usize).collect()
}

fn require(cond: bool, msg: &str) -> Result<(), CliError> {
    if cond {
        Ok(())
    } else {
        Err(CliError::Validation(msg.to_string()))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn cov(p: &Params) -> Result<Run, CliError> {
    let h = p.hurst(0.8)?;
    let t_max: u64 = p.get("t-max", 10)?;
    let mut table = Table::new("cov", &["t", "b"]);
    for t in 0..=t_max {
        table.push(vec![t.into(), autocovariance(h, t).into()]);
    }
    Ok(Run { tables: vec![table], ..Run::default() })
}

fn spectral(p: &Params) -> Result<Run, CliError> {
    let h = p.hurst(0.8)?;
    let modes: usize = p.get("modes", DEFAULT_SPECTRAL_MODES)?;
    let points: usize = p.get("points", 200)?;
    let t_max: u64 = p.get("t-max", 10)?;
    require(points >= 2, "--points must be at least 2")?;
    let f = SpectralDensity::new(h, modes)?;

    let mut density = Table::new("spectral", &["lambda", "f"]);
    for i in 1..points {
        let lambda = 0.5 * i as f64 / points as f64;
        density.push(vec![lambda.into(), f.eval(lambda)?.into()]);
    }
    density.push(vec![0.5.into(), f.at_nyquist().into()]);

    let mut inverse = Table::new("spectral-inverse", &["t", "b_from_f", "b", "abs_error"]);
    for t in 0..=t_max {
        let (from_f, b) = (f.inverse_transform(t), autocovariance(h, t));
        inverse.push(vec![t.into(), from_f.into(), b.into(), (from_f - b).abs().into()]);
    }
    let (argmin, min) = f.grid_minimum(10_000);
    let summary = vec![format!("grid minimum f({argmin:.6}) = {min:.6e}; f(1/2) = {:.6e}", f.at_nyquist())];
    Ok(Run { tables: vec![density, inverse], summary, ..Run::default() })
}

fn toeplitz_bench(p: &Params) -> Result<Run, CliError> {
    let h = p.hurst(0.8)?;
    let n: u64 = p.get("n", 8)?;
    let ks = usize_grid(p.grid("k-grid", "2^5..2^9")?);
    let m: f64 = p.get("m", 1.25)?;
    let tol: f64 = p.get("eig-tol", 1e-9)?;
    require(n >= 1, "--n must be positive")?;
    let mut run = Run::default();
    let mut table = Table::new(
        "toeplitz-bench",
        &[
            "k",
            "qform_levinson",
            "qform_dense",
            "qform_neumann_opt",
            "qform_neumann_hurst",
            "neumann_terms_opt",
            "neumann_terms_hurst",
            "max_rel_diff",
            "lambda_min",
            "lambda_max",
        ],
    );
    let mut maxima = Vec::new();
    for &k in &ks {
        let t = SymmetricToeplitz::fgn(h, k);
        let b = b_vector(h, n, k);

        let clock = Instant::now();
        let lev = dot(&b, &levinson_solve(&t, &b)?);
        let t_lev = clock.elapsed();

        let clock = Instant::now();
        let dense = if k <= 2048 { dot(&b, &t.dense_solve(&b)?) } else { f64::NAN };
        let t_dense = clock.elapsed();

        let clock = Instant::now();
        let opt = neumann_quadratic_form(&t, &b, &NeumannConfig::default())?;
        let t_neu = clock.elapsed();

        let hurst_cfg = NeumannConfig { scale: ContractionScale::HurstPower { m, h }, ..NeumannConfig::default() };
        let (hurst, hurst_terms) = match neumann_quadratic_form(&t, &b, &hurst_cfg) {
            Ok(r) => (r.value, r.terms_used as f64),
            Err(e @ (Error::NotContractive { .. } | Error::MaxTermsExceeded { .. })) => {
                run.warnings.push(format!("k = {k}: c(k) = k^(1-2H)/{m}: {e}"));
                (f64::NAN, f64::NAN)
            }
            Err(e) => return Err(e.into()),
        };

        let eig = eigen_extremes(&t, tol)?;
        maxima.push(eig.lambda_max);
        let diff = [dense, opt.value, hurst]
            .iter()
            .filter(|v| v.is_finite())
            .map(|v| (v - lev).abs() / lev.abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max);
        table.push(vec![
            k.into(),
            lev.into(),
            dense.into(),
            opt.value.into(),
            hurst.into(),
            opt.terms_used.into(),
            hurst_terms.into(),
            diff.into(),
            eig.lambda_min.into(),
            eig.lambda_max.into(),
        ]);
        run.summary.push(format!(
            "k={k}: levinson {:.3} ms, dense {:.3} ms, neumann {:.3} ms ({} terms)",
            t_lev.as_secs_f64() * 1e3,
            t_dense.as_secs_f64() * 1e3,
            t_neu.as_secs_f64() * 1e3,
            opt.terms_used
        ));
    }
    let xs: Vec<f64> = ks.iter().map(|&k| k as f64).collect();
    if let Some(fit) = log_log_fit(&xs, &maxima) {
        table.meta.push(format!("lambda_max_loglog_slope={:.16e}", fit.slope));
        table.meta.push(format!("lambda_max_loglog_slope_se={:.16e}", fit.slope_std_error));
        run.summary.push(format!("lambda_max log-log slope {:.4} (2H-1 = {:.4})", fit.slope, h.two_h() - 1.0));
    }
    run.tables.push(table);
    Ok(run)
}

fn dn_options(p: &Params) -> Result<DnOptions, CliError> {
    let d = DnOptions::default();
    Ok(DnOptions {
        rel_tol: p.get("rel-tol", d.rel_tol)?,
        k_start: p.get("k-start", d.k_start)?,
        k_cap: p.get("k-cap", d.k_cap)?,
    })
}

fn dn_table_rows(name: &str, table: &DnTable) -> Table {
    let mut out = Table::new(name, &["n", "dn2", "k_used", "l_n"]);
    for (&n, e) in &table.entries {
        out.push(vec![n.into(), e.dn2.into(), e.k_used.into(), e.l_n.into()]);
    }
    out
}

fn claim1(p: &Params) -> Result<Run, CliError> {
    let h = p.hurst(0.85)?;
    let ns = p.grid("n-grid", "1,4,16")?;
    let ks = usize_grid(p.grid("k-grid", "2^5..2^12")?);
    let opts = dn_options(p)?;
    let mut run = Run::default();
    regime_warning(h, &mut run);

    let mut rows = Table::new("claim1", &["n", "k", "qform", "sigma2", "sigma2_over_var"]);
    let mut fits =
        Table::new("claim1-fit", &["n", "qform_slope", "qform_slope_se", "final_over_initial", "sigma2_nonincreasing"]);
    for &n in &ns {
        let decay = quadratic_form_decay(h, n, &ks)?;
        let var = (n as f64).powf(h.two_h());
        for r in &decay.rows {
            rows.push(vec![n.into(), r.k.into(), r.qform.into(), r.sigma2.into(), (r.sigma2 / var).into()]);
        }
        let first = decay.rows[0].qform;
        let last = decay.rows.last().unwrap().qform;
        let ratio = if first > 0.0 { last / first } else { f64::NAN };
        let monotone = decay.rows.windows(2).all(|w| w[1].sigma2 <= w[0].sigma2);
        let (slope, se) = decay.fit.map_or((f64::NAN, f64::NAN), |f| (f.slope, f.slope_std_error));
        fits.push(vec![n.into(), slope.into(), se.into(), ratio.into(), monotone.to_string().into()]);
    }

    let mut dn = Table::new("claim1-dn", &["n", "dn2", "k_used", "l_n"]);
    for &n in &ns {
        let e = estimate_dn(h, n, &opts)?;
        dn.push(vec![n.into(), e.dn2.into(), e.k_used.into(), e.l_n.into()]);
    }
    run.tables = vec![rows, fits, dn];
    Ok(run)
}

fn claim2(p: &Params) -> Result<Run, CliError> {
    let h = p.hurst(0.85)?;
    let n: u64 = p.get("n", 4)?;
    let ks = usize_grid(p.grid("k-grid", "2^6,2^8,2^10,2^12")?);
    let reps: usize = p.get("reps", 1000)?;
    let seed = p.seed(1)?;
    let mut run = Run::default();
    regime_warning(h, &mut run);
    let mv = conditional_mean_vanishing(h, n, &ks, reps, seed)?;
    let mut table = Table::new(
        "claim2",
        &[
            "k",
            "qform",
            "sigma2",
            "mean_abs_ratio",
            "mean_abs_ratio_se",
            "max_abs_ratio",
            "mu_mean",
            "mu_mean_se",
            "mu_sample_var",
            "mu_var_se",
        ],
    );
    for r in &mv.rows {
        table.push(vec![
            r.k.into(),
            r.qform.into(),
            r.sigma2.into(),
            r.mean_abs_ratio.into(),
            r.mean_abs_ratio_se.into(),
            r.max_abs_ratio.into(),
            r.mu_mean.into(),
            r.mu_mean_se.into(),
            r.mu_sample_var.into(),
            r.mu_var_se.into(),
        ]);
    }
    run.tables.push(table);
    Ok(run)
}

/// `d_n` source: measured by [`DnTable::measure`] or the exact power `n^H`.
fn dn_source(p: &Params, h: HurstParam) -> Result<(DnTable, bool), CliError> {
    match p.string("dn-mode", "measured").as_str() {
        "measured" => {
            let grid = p.grid("dn-grid", "2^0..2^7")?;
            Ok((DnTable::measure(h, &grid, &dn_options(p)?)?, true))
        }
        "power" => Ok((DnTable::exact_power(h), false)),
        other => Err(CliError::Validation(format!("--dn-mode {other:?}: expected measured or power"))),
    }
}

fn cllt(p: &Params) -> Result<Run, CliError> {
    let h = p.hurst(0.85)?;
    let ns = p.grid("n-grid", "2^6,2^8,2^10")?;
    let spec = ClltSpec {
        a: p.get("a", 0.0)?,
        b: p.get("b", 1.0)?,
        kappa: p.get("kappa", 0.0)?,
        k: p.get("k", 4096)?,
        reps: p.get("reps", 1000)?,
        seed: p.seed(1)?,
    };
    let mut run = Run::default();
    regime_warning(h, &mut run);
    let (table, measured) = dn_source(p, h)?;
    let check = cllt_check(h, &ns, &spec, &table)?;
    let mut out =
        Table::new("cllt", &["n", "k", "dn", "sigma", "q", "mean_dnp", "sd_dnp", "se_dnp", "target", "abs_error"]);
    for r in &check.rows {
        out.push(vec![
            r.n.into(),
            r.k.into(),
            r.dn.into(),
            r.sigma.into(),
            r.q.into(),
            r.mean_dnp.into(),
            r.sd_dnp.into(),
            r.se_dnp.into(),
            r.target.into(),
            r.abs_error.into(),
        ]);
        run.summary
            .push(format!("n={}: mean d_n P = {:.5} ± {:.5} (target {:.5})", r.n, r.mean_dnp, r.se_dnp, r.target));
    }
    run.tables.push(out);
    if measured {
        run.tables.push(dn_table_rows("cllt-dn", &table));
    }
    Ok(run)
}

fn sample_check(p: &Params) -> Result<Run, CliError> {
    let h = p.hurst(0.8)?;
    let n: usize = p.get("n", 64)?;
    let reps: usize = p.get("reps", 10_000)?;
    let lags: usize = p.get("lags", 8)?;
    let seed = p.seed(1)?;
    require(reps >= 2, "--reps must be at least 2")?;
    require(lags < n, "--lags must be below --n")?;
    require(n <= CHOLESKY_MAX_N, "--n above the Cholesky cap cannot be cross-checked")?;

    let circ = CirculantSampler::new(h, n)?;
    let chol = CholeskySampler::new(h, n)?;
    let paths: Vec<Vec<f64>> =
        (0..reps as u64).into_par_iter().map(|r| circ.sample(seed.child(0).child(r)).increments).collect();

    let mut lag_table = Table::new("sample-check-lags", &["lag", "b", "sample", "se", "z"]);
    for t in 0..=lags {
        let m: Moments =
            paths.iter().map(|x| (0..n - t).map(|i| x[i] * x[i + t]).sum::<f64>() / (n - t) as f64).collect();
        let b = autocovariance(h, t as u64);
        lag_table.push(vec![
            t.into(),
            b.into(),
            m.mean().into(),
            m.std_error().into(),
            ((m.mean() - b) / m.std_error()).into(),
        ]);
    }

    let mut ks_table = Table::new("sample-check-ks", &["m", "ks", "pvalue"]);
    let chol_sums: Vec<Vec<f64>> =
        (0..reps as u64).into_par_iter().map(|r| chol.sample(seed.child(1).child(r)).partial_sums).collect();
    let mut ms = vec![n / 4, n / 2, n];
    ms.retain(|&m| m >= 1);
    ms.dedup();
    for m in ms {
        let a: Vec<f64> = paths.iter().map(|x| x[..m].iter().sum()).collect();
        let b: Vec<f64> = chol_sums.iter().map(|s| s[m - 1]).collect();
        let d = ks_distance(&a, KsReference::Sample(&b));
        ks_table.push(vec![m.into(), d.into(), ks_two_sample_pvalue(d, a.len(), b.len()).into()]);
    }
    Ok(Run { tables: vec![lag_table, ks_table], ..Run::default() })
}

fn mlf(p: &Params) -> Result<Run, CliError> {
    let alpha = match p.optional::<f64>("alpha")? {
        Some(a) => MlfIndex::new(a)?,
        None => MlfIndex::from_hurst(p.hurst(0.8)?),
    };
    let count: usize = p.get("count", 1_000_000)?;
    let rows: usize = p.get("rows", 1000)?;
    let seed = p.seed(1)?;
    require(count >= 2, "--count must be at least 2")?;
    let sample = mittag_leffler::sample(alpha, count, seed);

    let mut moments = Table::new("mlf-moments", &["p", "exact", "sample", "se", "z"]);
    for power in 1..=3u32 {
        let m: Moments = sample.values.iter().map(|y| y.powi(power as i32)).collect();
        let exact = mittag_leffler::moment(alpha, power);
        let z = if m.std_error() > 0.0 { (m.mean() - exact) / m.std_error() } else { 0.0 };
        moments.push(vec![power.into(), exact.into(), m.mean().into(), m.std_error().into(), z.into()]);
    }

    let cdf = EmpiricalCdf::new(sample.values);
    let mut table = Table::new("mlf-cdf", &["y", "F(y)"]);
    table.meta = vec![
        format!("alpha={}", alpha.value()),
        format!("count={}", cdf.len()),
        format!("seed={} stream={}", seed.seed, seed.stream),
        format!("dkw_epsilon_95={:.16e}", cdf.dkw_epsilon(0.05)),
    ];
    for (y, f) in cdf.table(rows) {
        table.push(vec![y.into(), f.into()]);
    }
    Ok(Run { tables: vec![moments, table], ..Run::default() })
}

fn occupation(p: &Params) -> Result<Run, CliError> {
    let h = p.hurst(0.8)?;
    let ns = usize_grid(p.grid("n-grid", "2^10..2^14")?);
    let a: f64 = p.get("a", 0.0)?;
    let b: f64 = p.get("b", 1.0)?;
    let epsilon: f64 = p.get("epsilon", 0.5 * (b - a))?;
    let reps: usize = p.get("reps", 10_000)?;
    let cap: f64 = p.get("cap", 10.0)?;
    let fns = p.list("v", "expneg,capM").iter().map(|id| TestFn::parse(id, cap)).collect::<Result<Vec<_>, _>>()?;
    let seed = p.seed(1)?;
    let phi_theta = p.optional::<f64>("phi-theta")?;
    let count: usize = p.get("count", 1_000_000)?;
    require(!fns.is_empty(), "--v needs at least one test function")?;
    require(count >= 2, "--count must be at least 2")?;

    let cfg = OccupationConfig { h, n: ns[0], a, b, epsilon, reps, test_fn: fns[0], seed, phi_theta };
    cfg.validate()?;
    let mut run = Run::default();
    regime_warning(h, &mut run);
    let (dn, measured) = dn_source(p, h)?;
    let seq = return_sequence(h, *ns.last().unwrap(), &dn)?;
    // Path streams are seed.child(n) with n >= 1; child(0) is free for the reference law.
    let reference = mittag_leffler::sample(MlfIndex::from_hurst(h), count, seed.child(0));
    let cmp = compare_to_mlf(&cfg, &ns, &fns, &seq, &reference)?;

    let mut main = Table::new(
        "occupation",
        &["h", "n", "a", "b", "epsilon", "reps", "v_id", "lhs", "lhs_se", "rhs", "rhs_se", "ks", "seed"],
    );
    let mut detail = Table::new("occupation-detail", &["n", "v_id", "a_n", "diff", "combined_se", "ks_unsmoothed"]);
    let seed_text = format!("{}:{}", seed.seed, seed.stream);
    for r in &cmp.rows {
        main.push(vec![
            h.value().into(),
            r.n.into(),
            a.into(),
            b.into(),
            epsilon.into(),
            reps.into(),
            r.v.id().into(),
            r.lhs.into(),
            r.lhs_se.into(),
            r.rhs.into(),
            r.rhs_se.into(),
            r.ks.into(),
            seed_text.clone().into(),
        ]);
        detail.push(vec![
            r.n.into(),
            r.v.id().into(),
            r.a_n.into(),
            r.diff.into(),
            r.combined_se.into(),
            r.ks_unsmoothed.into(),
        ]);
    }
    let mut returns = Table::new("occupation-return", &["n", "a_n", "proxy"]);
    for &n in &ns {
        returns.push(vec![n.into(), seq.at(n)?.into(), seq.proxy(n).into()]);
    }
    for v in &fns {
        let verdict = if cmp.trend_holds(v.id()) { "holds" } else { "fails" };
        run.summary.push(format!("{v}: |lhs - rhs| trend over n {verdict}"));
    }
    run.tables = vec![main, detail, returns];
    if measured {
        run.tables.push(dn_table_rows("occupation-dn", &dn));
    }
    Ok(run)
}
