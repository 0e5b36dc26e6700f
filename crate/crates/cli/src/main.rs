//! Command-line entry point: run scenarios, sweep parameter grids, validate
//! kernels and oracles, summarize run reports.
//!
//! Exit codes are a stable contract: 0 success, 1 error, 3 blow-up halt.

mod sweep;
mod validate;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use nonlocal_shear::runner::{self, EXIT_ERROR};
use nonlocal_shear::scenario::{apply_override, Scenario};

#[derive(Parser)]
#[command(name = "nonlocal-shear", version)]
#[command(about = "Pseudospectral solver for 2D nonlocal nonlinear shear waves")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its output directory.
    Run {
        scenario: PathBuf,
        /// Override scenario fields, e.g. `--set control.dt=0.1`.
        #[arg(long = "set", value_name = "PATH=VALUE")]
        set: Vec<String>,
        /// Output directory (default: `<scenario stem>_out`).
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Escalate truncation and floor warnings to errors.
        #[arg(long)]
        strict: bool,
    },
    /// Run the Cartesian product of parameter overrides.
    Sweep {
        scenario: PathBuf,
        /// Swept parameter, e.g. `--sweep energy.q=0.5,1,2` (repeatable).
        #[arg(long = "sweep", value_name = "PATH=V1,V2,..", required = true)]
        sweep: Vec<String>,
        /// Fixed overrides applied to every run.
        #[arg(long = "set", value_name = "PATH=VALUE")]
        set: Vec<String>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Worker pool size (capped by NONLOCAL_SHEAR_THREADS).
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        strict: bool,
    },
    /// Run a fixed validation suite.
    Validate {
        what: ValidateWhat,
        /// Directory for the CSV result table (default: current dir).
        #[arg(long, default_value = ".")]
        output_dir: PathBuf,
    },
    /// Summarize a finished run directory.
    Report { run_dir: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ValidateWhat {
    Kernels,
    Oracles,
    Convergence,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run {
            scenario,
            set,
            output_dir,
            strict,
        } => cmd_run(&scenario, &set, output_dir.as_deref(), strict),
        Command::Sweep {
            scenario,
            sweep,
            set,
            output_dir,
            jobs,
            strict,
        } => sweep::cmd_sweep(&scenario, &sweep, &set, output_dir.as_deref(), jobs, strict),
        Command::Validate { what, output_dir } => validate::cmd_validate(what, &output_dir),
        Command::Report { run_dir } => cmd_report(&run_dir),
    };
    match code {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}

/// Load a scenario document, apply `--set` overrides and the strict flag.
fn load_with_overrides(path: &Path, set: &[String], strict: bool) -> anyhow::Result<Scenario> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
    let mut doc: serde_json::Value = serde_json::from_str(&text)?;
    for entry in set {
        let (key, value) = entry
            .split_once('=')
            .ok_or_else(|| anyhow::anyhow!("--set expects PATH=VALUE, got `{entry}`"))?;
        apply_override(&mut doc, key, value)?;
    }
    if strict {
        apply_override(&mut doc, "strict", "true")?;
    }
    Ok(Scenario::from_value(doc)?)
}

fn default_output_dir(scenario_path: &Path) -> PathBuf {
    let stem = scenario_path
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "run".into());
    PathBuf::from(format!("{stem}_out"))
}

fn cmd_run(
    path: &Path,
    set: &[String],
    output_dir: Option<&Path>,
    strict: bool,
) -> anyhow::Result<i32> {
    let scenario = load_with_overrides(path, set, strict)?;
    let out_dir = output_dir
        .map(Path::to_path_buf)
        .or_else(|| scenario.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| default_output_dir(path));
    let artifacts = runner::run_scenario(&scenario, Some(&out_dir))?;
    println!(
        "outcome: {} (t_final = {:.6})",
        artifacts.report.outcome, artifacts.report.t_final
    );
    if let Some(t_star) = artifacts.report.t_star {
        println!("detector time t* = {t_star:.6}");
    }
    if let Some(levine) = &artifacts.report.levine {
        println!("blow-up bound t1 = {:.6}", levine.t1);
    }
    println!("energy drift = {:.3e}", artifacts.report.energy.drift);
    for warning in &artifacts.report.truncation_warnings {
        eprintln!("warning: {warning}");
    }
    println!("artifacts in {}", out_dir.display());
    Ok(artifacts.exit_class)
}

fn cmd_report(run_dir: &Path) -> anyhow::Result<i32> {
    let report_path = run_dir.join("report.json");
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(&report_path)
            .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", report_path.display()))?,
    )?;
    let manifest: Option<serde_json::Value> =
        std::fs::read_to_string(run_dir.join("manifest.json"))
            .ok()
            .and_then(|text| serde_json::from_str(&text).ok());

    println!("run report: {}", run_dir.display());
    if let Some(manifest) = &manifest {
        let eff = &manifest["effective"];
        println!(
            "  kernel = {}, energy = {}",
            eff["kernel"].as_str().unwrap_or("?"),
            eff["energy"].as_str().unwrap_or("?")
        );
        println!(
            "  dt = {}, omega_max = {}, E(0) = {}",
            eff["dt"], eff["omega_max"], eff["e0"]
        );
    }
    println!(
        "  outcome = {} (exit class {})",
        report["outcome"].as_str().unwrap_or("?"),
        report["exit_class"]
    );
    println!("  t_final = {}", report["t_final"]);
    if !report["t_star"].is_null() {
        println!("  detector time t* = {}", report["t_star"]);
    }
    if !report["levine"].is_null() {
        println!(
            "  concavity setup: nu = {}, b = {}, t0 = {}, t1 = {}",
            report["levine"]["nu"],
            report["levine"]["b"],
            report["levine"]["t0"],
            report["levine"]["t1"]
        );
    }
    if !report["detector_vs_bound"].is_null() {
        println!(
            "  t* <= t1: {}",
            report["detector_vs_bound"]["within_bound"]
        );
    }
    println!("  energy drift = {}", report["energy"]["drift"]);
    if let Some(checks) = report["condition_checks"].as_array() {
        for check in checks {
            println!(
                "  check [{}] parameter {} -> {}",
                check["condition"].as_str().unwrap_or("?"),
                check["parameter"],
                if check["pass"].as_bool().unwrap_or(false) {
                    "pass"
                } else {
                    "fail"
                }
            );
        }
    }
    if let Some(warnings) = report["truncation_warnings"].as_array() {
        for warning in warnings {
            println!("  warning: {}", warning.as_str().unwrap_or("?"));
        }
    }
    Ok(0)
}

/// Worker-pool size: `--jobs` capped by the NONLOCAL_SHEAR_THREADS variable.
pub fn effective_jobs(requested: usize) -> usize {
    let cap = std::env::var("NONLOCAL_SHEAR_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|v| *v > 0)
        .unwrap_or(usize::MAX);
    requested.clamp(1, cap.max(1))
}
