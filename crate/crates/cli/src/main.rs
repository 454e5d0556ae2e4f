//! `dfbm`: experiment driver for fractional Gaussian noise conditioning,
//! local limit and occupation-time studies.
//!
//! Parameters come from `--config` (INI-style `key = value`, or the
//! `manifest.json` of an earlier run) overlaid by flags. Outputs go to
//! `--out`, else `$DFBM_OUT_DIR`, else `./dfbm-out`.

mod commands;
mod error;
mod params;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser};

use commands::Command;
use error::CliError;
use params::Params;
use report::{Format, Manifest};

const OUT_DIR_ENV: &str = "DFBM_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "dfbm", version, about = "Numerical experiments on discrete fractional Brownian motion")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    flags: Flags,
}

/// Every flag is optional so that config values show through.
#[derive(Debug, Args)]
struct Flags {
    /// Hurst parameter in [0.5, 1).
    #[arg(long, global = true, allow_hyphen_values = true)]
    h: Option<String>,
    /// Partial-sum length (or path length for samplers).
    #[arg(long, global = true)]
    n: Option<String>,
    /// Future length conditioned on.
    #[arg(long, global = true)]
    k: Option<String>,
    /// k grid: `a,b,c` or doubling range `2^i..2^j`.
    #[arg(long, global = true)]
    k_grid: Option<String>,
    /// n grid: `a,b,c` or doubling range `2^i..2^j`.
    #[arg(long, global = true)]
    n_grid: Option<String>,
    /// Left end of the interval.
    #[arg(long, global = true, allow_hyphen_values = true)]
    a: Option<String>,
    /// Right end of the interval.
    #[arg(long, global = true, allow_hyphen_values = true)]
    b: Option<String>,
    /// Half-width of the interval translation.
    #[arg(long, global = true)]
    epsilon: Option<String>,
    /// Monte Carlo replications.
    #[arg(long, global = true)]
    reps: Option<String>,
    /// `SEED` or `SEED:STREAM`.
    #[arg(long, global = true)]
    seed: Option<String>,
    /// Test functions, comma separated: const1, expneg, capM, bump.
    #[arg(long, global = true)]
    v: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// csv or json.
    #[arg(long, global = true)]
    format: Option<String>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Config file (key = value) or a previous manifest.json.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Largest lag for cov/spectral.
    #[arg(long, global = true)]
    t_max: Option<String>,
    /// Shift q_n = kappa d_n for cllt.
    #[arg(long, global = true, allow_hyphen_values = true)]
    kappa: Option<String>,
    /// M in v(t) = min(t, M).
    #[arg(long, global = true)]
    cap: Option<String>,
    /// Mittag-Leffler sample size.
    #[arg(long, global = true)]
    count: Option<String>,
    /// Mittag-Leffler index (defaults to 1 - H).
    #[arg(long, global = true)]
    alpha: Option<String>,
    /// Reweight paths by exp(theta X_1 - theta^2/2).
    #[arg(long, global = true, allow_hyphen_values = true)]
    phi_theta: Option<String>,
    /// measured or power.
    #[arg(long, global = true)]
    dn_mode: Option<String>,
    /// n grid on which d_n is measured.
    #[arg(long, global = true)]
    dn_grid: Option<String>,
    /// Doubling tolerance for d_n.
    #[arg(long, global = true)]
    rel_tol: Option<String>,
    /// Largest k tried for d_n.
    #[arg(long, global = true)]
    k_cap: Option<String>,
    /// Neumann scale divisor m in c(k) = k^(1-2H)/m.
    #[arg(long, global = true)]
    m: Option<String>,
    /// Largest lag checked by sample-check.
    #[arg(long, global = true)]
    lags: Option<String>,
    /// Rows in the Mittag-Leffler CDF table.
    #[arg(long, global = true)]
    rows: Option<String>,
    /// Frequency grid size for spectral.
    #[arg(long, global = true)]
    points: Option<String>,
}

impl Flags {
    fn apply(&self, p: &mut Params) {
        let pairs = [
            ("h", &self.h),
            ("n", &self.n),
            ("k", &self.k),
            ("k-grid", &self.k_grid),
            ("n-grid", &self.n_grid),
            ("a", &self.a),
            ("b", &self.b),
            ("epsilon", &self.epsilon),
            ("reps", &self.reps),
            ("seed", &self.seed),
            ("v", &self.v),
            ("format", &self.format),
            ("t-max", &self.t_max),
            ("kappa", &self.kappa),
            ("cap", &self.cap),
            ("count", &self.count),
            ("alpha", &self.alpha),
            ("phi-theta", &self.phi_theta),
            ("dn-mode", &self.dn_mode),
            ("dn-grid", &self.dn_grid),
            ("rel-tol", &self.rel_tol),
            ("k-cap", &self.k_cap),
            ("m", &self.m),
            ("lags", &self.lags),
            ("rows", &self.rows),
            ("points", &self.points),
        ];
        for (key, value) in pairs {
            p.set(key, value.clone());
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut params = match &cli.flags.config {
        Some(path) => Params::from_file(path)?,
        None => Params::default(),
    };
    if let Some(cmd) = params.take("command") {
        if cmd != cli.command.name() {
            return Err(CliError::Validation(format!("config was written by `{cmd}`, not `{}`", cli.command.name())));
        }
    }
    cli.flags.apply(&mut params);

    let workers = match cli.flags.workers {
        Some(w) => Some(w),
        None => params
            .take("workers")
            .map(|w| w.parse::<usize>())
            .transpose()
            .map_err(|e| CliError::Validation(format!("workers: {e}")))?,
    };
    if let Some(w) = workers {
        if w == 0 {
            return Err(CliError::Validation("--workers must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| CliError::Validation(format!("worker pool: {e}")))?;
    }
    let out_dir = cli
        .flags
        .out
        .clone()
        .or_else(|| params.take("out").map(PathBuf::from))
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("dfbm-out"));
    let format: Format = params.get("format", Format::Csv)?;

    let result = commands::dispatch(cli.command, &params)?;

    std::fs::create_dir_all(&out_dir)?;
    let mut outputs = Vec::new();
    for table in &result.tables {
        let path = table.write(&out_dir, format)?;
        println!("wrote {}", path.display());
        outputs.push(table.file_name(format));
    }
    let manifest = Manifest {
        command: cli.command.name().to_string(),
        params: params.resolved(),
        warnings: result.warnings,
        outputs,
    };
    let path = manifest.write(&out_dir)?;
    println!("wrote {}", path.display());
    for w in &manifest.warnings {
        eprintln!("warning: {w}");
    }
    for line in &result.summary {
        println!("{line}");
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dfbm: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use std::path::Path;

    use super::*;

    fn invoke(args: &[&str]) -> Result<(), CliError> {
        run(Cli::try_parse_from(std::iter::once("dfbm").chain(args.iter().copied())).unwrap())
    }

    fn invoke_in(out: &Path, args: &[&str]) -> Result<(), CliError> {
        let mut all = args.to_vec();
        all.extend(["--out", out.to_str().unwrap()]);
        invoke(&all)
    }

    fn manifest(dir: &Path) -> serde_json::Value {
        serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
    }

    fn csv_rows(path: &Path) -> Vec<Vec<String>> {
        std::fs::read_to_string(path)
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with('#'))
            .skip(1)
            .map(|l| l.split(',').map(str::to_string).collect())
            .collect()
    }

    #[test]
    fn cov_writes_unit_variance_first() {
        let dir = tempfile::tempdir().unwrap();
        invoke_in(dir.path(), &["cov", "--h", "0.8", "--t-max", "4"]).unwrap();
        let rows = csv_rows(&dir.path().join("cov.csv"));
        assert_eq!(rows.len(), 5);
        assert_eq!(rows[0][1].parse::<f64>().unwrap(), 1.0);
        let m = manifest(dir.path());
        assert_eq!(m["command"], "cov");
        assert_eq!(m["params"]["h"], "0.8");
        assert_eq!(m["outputs"], serde_json::json!(["cov.csv"]));
    }

    #[test]
    fn exit_codes() {
        let dir = tempfile::tempdir().unwrap();
        let bad_h = invoke_in(dir.path(), &["cov", "--h", "1.2"]).unwrap_err();
        assert_eq!(bad_h.exit_code(), 2);
        let bad_format = invoke_in(dir.path(), &["cov", "--format", "xml"]).unwrap_err();
        assert_eq!(bad_format.exit_code(), 2);
        let few_reps = invoke_in(dir.path(), &["occupation", "--reps", "50"]).unwrap_err();
        assert_eq!(few_reps.exit_code(), 2);
        let unstable = invoke_in(dir.path(), &["claim1", "--n-grid", "1024", "--k-grid", "32", "--k-cap", "1024"]);
        assert_eq!(unstable.unwrap_err().exit_code(), 3);
        assert!(Cli::try_parse_from(["dfbm", "nonsense"]).is_err());
    }

    #[test]
    fn regime_warning_is_recorded() {
        let dir = tempfile::tempdir().unwrap();
        let args = ["cllt", "--n-grid", "4,8", "--k", "64", "--reps", "50", "--dn-grid", "1..8"];
        invoke_in(dir.path(), &args).unwrap();
        assert_eq!(manifest(dir.path())["warnings"], serde_json::json!([]));

        let outside = tempfile::tempdir().unwrap();
        invoke_in(outside.path(), &[&args[..], &["--h", "0.7"]].concat()).unwrap();
        let warnings = manifest(outside.path())["warnings"].clone();
        assert!(warnings[0].as_str().unwrap().contains("outside theorem regime"), "{warnings}");
    }

    #[test]
    fn claim1_sigma2_column_is_nonincreasing() {
        let dir = tempfile::tempdir().unwrap();
        invoke_in(dir.path(), &["claim1", "--n-grid", "4", "--k-grid", "2^5..2^9"]).unwrap();
        let sigma2: Vec<f64> = csv_rows(&dir.path().join("claim1.csv")).iter().map(|r| r[3].parse().unwrap()).collect();
        assert_eq!(sigma2.len(), 5);
        assert!(sigma2.windows(2).all(|w| w[1] <= w[0]), "{sigma2:?}");
        assert!(dir.path().join("claim1-dn.csv").exists());
    }

    #[test]
    fn config_file_then_flags() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.ini");
        std::fs::write(&cfg, "# cov run\n[cov]\nh = 0.7\nt_max = 3\n").unwrap();
        let out = dir.path().join("out");
        invoke_in(&out, &["cov", "--config", cfg.to_str().unwrap(), "--t-max", "5"]).unwrap();
        assert_eq!(csv_rows(&out.join("cov.csv")).len(), 6);
        let m = manifest(&out);
        assert_eq!(m["params"]["h"], "0.7");
        assert_eq!(m["params"]["t-max"], "5");

        std::fs::write(&cfg, "h 0.7\n").unwrap();
        assert_eq!(invoke_in(&out, &["cov", "--config", cfg.to_str().unwrap()]).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn manifest_reruns_same_command_only() {
        let dir = tempfile::tempdir().unwrap();
        let (first, second) = (dir.path().join("a"), dir.path().join("b"));
        invoke_in(&first, &["mlf", "--count", "2000", "--rows", "20", "--seed", "9:2"]).unwrap();
        let m = first.join("manifest.json");
        invoke_in(&second, &["mlf", "--config", m.to_str().unwrap()]).unwrap();
        for name in ["mlf-moments.csv", "mlf-cdf.csv", "manifest.json"] {
            assert_eq!(std::fs::read(first.join(name)).unwrap(), std::fs::read(second.join(name)).unwrap(), "{name}");
        }
        assert_eq!(manifest(&second)["seed"], "9:2");
        let wrong = invoke_in(&second, &["cov", "--config", m.to_str().unwrap()]).unwrap_err();
        assert_eq!(wrong.exit_code(), 2);
    }

    #[test]
    fn json_output_and_env_directory() {
        let dir = tempfile::tempdir().unwrap();
        std::env::set_var(OUT_DIR_ENV, dir.path());
        let result = invoke(&["cov", "--t-max", "2", "--format", "json"]);
        std::env::remove_var(OUT_DIR_ENV);
        result.unwrap();
        let doc: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("cov.json")).unwrap()).unwrap();
        assert_eq!(doc["columns"], serde_json::json!(["t", "b"]));
        assert_eq!(doc["rows"][0]["b"], serde_json::json!(1.0));
        assert_eq!(doc["rows"].as_array().unwrap().len(), 3);
        assert_eq!(manifest(dir.path())["params"]["format"], "json");
    }
}
