//! The `gyrobs` command line.
//!
//! Exit status: 0 on success, 1 when a run violates an invariant or a
//! check fails, 2 for an invalid configuration, 3 when a run diverges.

pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::harness::{compare_observers, integrate_run, mahony_counterpart, monte_carlo_global, HarnessError, RunSummary};
use crate::selfcheck::{run_selfcheck, SelfCheckOptions};
use config::{load_config, ConfigError, LoadedConfig};
use output::{monte_carlo_csv, plot_script, run_csv, to_json, write_file};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_INVALID_CONFIG: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

const DEFAULT_OUT_DIR: &str = "gyrobs_out";

#[derive(Debug, Parser)]
#[command(name = "gyrobs", version, about = "Matrix-space attitude and gyro-bias observers: simulate, certify, compare")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Config file, or the name of a bundled config.
    #[arg(long)]
    config: String,
    /// Output directory.
    #[arg(long, env = "GYROBS_OUT_DIR")]
    out: Option<PathBuf>,
    /// Overrides the noise seeds (run, compare) or the master seed (montecarlo).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate one run; write its CSV series and summary.
    Run(Common),
    /// Run the observer and the Mahony baseline on the same truth.
    Compare(Common),
    /// Random initial estimates in parallel; write per-trial rows.
    Montecarlo {
        #[command(flatten)]
        common: Common,
        /// Number of trials (overrides `montecarlo.trials`).
        #[arg(long)]
        trials: Option<usize>,
        /// Half-width of the uniform box for initial matrix estimates.
        #[arg(long)]
        init_box: Option<f64>,
    },
    /// Randomized identity battery and variant-reduction checks.
    Selfcheck {
        /// Seed for the random samples.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, hide = true)]
        perturb_hat: bool,
    },
    /// Print the convergence certificate for a config.
    Certificate {
        #[arg(long)]
        config: String,
    },
}

enum Failure {
    Config(ConfigError),
    Harness(HarnessError),
    Io(std::io::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Self::Config(e)
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        Self::Harness(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e)
    }
}

impl Failure {
    fn report(&self) -> i32 {
        match self {
            Self::Config(e) => {
                eprintln!("error: {e}");
                EXIT_INVALID_CONFIG
            }
            Self::Harness(e) => {
                eprintln!("error: {e}");
                match e {
                    HarnessError::InvalidConfig(_) | HarnessError::Mismatch(_) | HarnessError::Certificate(_) => {
                        EXIT_INVALID_CONFIG
                    }
                    _ => EXIT_DIVERGED,
                }
            }
            Self::Io(e) => {
                eprintln!("error: {e}");
                EXIT_VIOLATION
            }
        }
    }
}

pub fn main() -> i32 {
    run_cli(std::env::args_os())
}

/// Parses `args` (including the program name) and dispatches.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Run(common) => cmd_run(&common),
        Command::Compare(common) => cmd_compare(&common),
        Command::Montecarlo { common, trials, init_box } => cmd_montecarlo(&common, trials, init_box),
        Command::Selfcheck { seed, perturb_hat } => Ok(cmd_selfcheck(seed, perturb_hat)),
        Command::Certificate { config } => cmd_certificate(&config),
    };
    result.unwrap_or_else(|f| f.report())
}

fn out_dir(common: &Common, loaded: &LoadedConfig) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| loaded.document.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

fn load_run(common: &Common) -> Result<(LoadedConfig, crate::harness::RunConfig), Failure> {
    let loaded = load_config(&common.config)?;
    let mut cfg = loaded.document.run_config()?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
        cfg.gyro.seed = seed;
    }
    Ok((loaded, cfg))
}

fn wrote(path: &Path) {
    println!("wrote {}", path.display());
}

fn print_summary(label: &str, s: &RunSummary) {
    println!("{label}: variant {}, {} samples over {} s", s.variant, s.samples, s.duration);
    println!(
        "  final |E_A| = {:.3e}, |e_b| = {:.3e}, polar attitude error = {:.3e}",
        s.final_e_a, s.final_e_b, s.final_e_r_polar
    );
    if let Some(c) = &s.certificate {
        println!(
            "  certificate: epsilon = {:.4e}, alpha = {:.4}, beta = {:.4e}, a = {:.4e}, C = {:.4}",
            c.epsilon, c.alpha, c.beta, c.a, c.c
        );
    }
    if let Some(d) = &s.decay {
        let verdict = if d.passed { "PASS" } else { "FAIL" };
        println!(
            "  decay bounds: {verdict} (max V ratio {:.4}, max norm ratio {:.4})",
            d.max_v_ratio, d.max_norm_ratio
        );
    }
    match (&s.tail_fit, &s.tail_fit_error) {
        (Some(f), _) => println!("  tail rate fit: a_fit = {:.4} 1/s, residual rms {:.3e}", f.a_fit, f.residual_rms),
        (None, Some(e)) => println!("  tail rate fit: {e}"),
        _ => {}
    }
    println!("  invariants: {}", if s.passed { "PASS" } else { "FAIL" });
}

fn cmd_run(common: &Common) -> Result<i32, Failure> {
    let (loaded, cfg) = load_run(common)?;
    let record = integrate_run(&cfg)?;
    let summary = record.summary();
    let dir = out_dir(common, &loaded);
    let name = &loaded.name;
    print_summary(name, &summary);
    wrote(&write_file(&dir, &format!("{name}.csv"), &run_csv(&record))?);
    wrote(&write_file(&dir, &format!("{name}_summary.json"), &to_json(&summary))?);
    if loaded.document.output.plot_script {
        let script = plot_script(&[&format!("{name}.csv")]);
        wrote(&write_file(&dir, &format!("plot_{name}.py"), &script)?);
    }
    Ok(if summary.passed { EXIT_OK } else { EXIT_VIOLATION })
}

#[derive(Serialize)]
struct ComparisonDocument<'a> {
    report: &'a crate::harness::ComparisonReport,
    proposed: RunSummary,
    mahony: RunSummary,
}

fn cmd_compare(common: &Common) -> Result<i32, Failure> {
    let (loaded, proposed) = load_run(common)?;
    let thresholds = loaded.document.thresholds()?;
    let mahony = mahony_counterpart(&proposed)?;
    let cmp = compare_observers(&proposed, &mahony, &thresholds)?;
    let name = &loaded.name;
    let dir = out_dir(common, &loaded);
    let doc = ComparisonDocument {
        report: &cmp.report,
        proposed: cmp.proposed.summary(),
        mahony: cmp.mahony.summary(),
    };
    println!("compare {name}: {} vs mahony_baseline", proposed.variant);
    let time = |t: Option<f64>| t.map_or("never".to_string(), |t| format!("{t:.2} s"));
    for o in &cmp.report.thresholds {
        println!(
            "  attitude error < {:e}: proposed {}, mahony {} -> {:?}",
            o.threshold,
            time(o.proposed),
            time(o.mahony),
            o.winner
        );
    }
    println!(
        "  bias overshoot: proposed {:.4}, mahony {:.4} -> smaller: {:?}",
        cmp.report.proposed_bias_overshoot, cmp.report.mahony_bias_overshoot, cmp.report.smaller_overshoot
    );
    wrote(&write_file(&dir, &format!("{name}_proposed.csv"), &run_csv(&cmp.proposed))?);
    wrote(&write_file(&dir, &format!("{name}_mahony.csv"), &run_csv(&cmp.mahony))?);
    wrote(&write_file(&dir, &format!("{name}_comparison.json"), &to_json(&doc))?);
    if loaded.document.output.plot_script {
        let script = plot_script(&[&format!("{name}_proposed.csv"), &format!("{name}_mahony.csv")]);
        wrote(&write_file(&dir, &format!("plot_{name}_comparison.py"), &script)?);
    }
    Ok(if doc.proposed.passed && doc.mahony.passed { EXIT_OK } else { EXIT_VIOLATION })
}

fn cmd_montecarlo(common: &Common, trials: Option<usize>, init_box: Option<f64>) -> Result<i32, Failure> {
    let loaded = load_config(&common.config)?;
    let base = loaded.document.run_config()?;
    let options = loaded.document.monte_carlo(trials, init_box, common.seed)?;
    let summary = monte_carlo_global(&base, &options)?;
    let name = &loaded.name;
    let dir = out_dir(common, &loaded);
    let fmt = |x: Option<f64>| x.map_or("n/a".to_string(), |x| format!("{x:.4}"));
    println!(
        "montecarlo {name}: {} trials, init box {}, master seed {}",
        options.trials, options.init_box, options.master_seed
    );
    println!(
        "  converged (< {:e}): {:.1}%",
        summary.convergence_threshold,
        100.0 * summary.converged_fraction
    );
    println!(
        "  a_fit min/median/max: {} / {} / {} (certificate a = {})",
        fmt(summary.a_fit_min),
        fmt(summary.a_fit_median),
        fmt(summary.a_fit_max),
        fmt(summary.certificate_a)
    );
    println!(
        "  certificate violations: {}, rates below certificate: {}",
        summary.certificate_violations, summary.rates_below_certificate
    );
    wrote(&write_file(&dir, &format!("{name}_montecarlo.csv"), &monte_carlo_csv(&summary))?);
    wrote(&write_file(&dir, &format!("{name}_montecarlo.json"), &to_json(&summary))?);
    let passed = summary.all_passed();
    println!("  result: {}", if passed { "PASS" } else { "FAIL" });
    Ok(if passed { EXIT_OK } else { EXIT_VIOLATION })
}

fn cmd_selfcheck(seed: Option<u64>, perturb_hat: bool) -> i32 {
    let mut options = SelfCheckOptions {
        perturb_hat,
        ..SelfCheckOptions::default()
    };
    if let Some(seed) = seed {
        options.seed = seed;
    }
    let results = run_selfcheck(&options);
    for r in &results {
        println!(
            "{} {:?} {} ({} samples, max error {:.3e}, tolerance {:.0e})",
            if r.passed { "PASS" } else { "FAIL" },
            r.kind,
            r.name,
            r.samples,
            r.max_error,
            r.tolerance
        );
    }
    if results.iter().all(|r| r.passed) {
        EXIT_OK
    } else {
        EXIT_VIOLATION
    }
}

fn cmd_certificate(source: &str) -> Result<i32, Failure> {
    let loaded = load_config(source)?;
    let cfg = loaded.document.run_config()?;
    match cfg.certificate()? {
        Some(cert) => {
            print!("{}", to_json(&cert));
            Ok(EXIT_OK)
        }
        None => Err(ConfigError {
            key: "observer.variant".into(),
            message: format!("no certificate covers variant `{}` with this signal", cfg.variant),
        }
        .into()),
    }
}
