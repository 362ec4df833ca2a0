//! Command-line front end. Every failure maps to a documented exit code
//! with a machine-readable JSON object on standard error.

use crate::config::{parse_config, ExperimentConfig};
use crate::entropy::{minimize_w, EntropyOpts};
use crate::error::{Error, Result};
use crate::experiments::{
    continuity_path_records, run_flow, stability_probe, PathEntry, PathReport, RunSummary,
};
use crate::flow::spectrum_oracle;
use crate::geometry::{field_to_csv, profile_from_csv, Grid};
use crate::runio::{run_dir_name, write_run};
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "krlab", about = "Curvature-flow laboratory for S1-invariant metrics on the sphere", version)]
struct Cli {
    /// Worker threads for sweeps (default: logical cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Path to a key = value config file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the flow described by a config file and write a run directory.
    Flow(ConfigArg),
    /// Minimize the W-functional on a profile CSV and print the result.
    Entropy {
        /// Profile CSV (`mu,psi`).
        #[arg(long)]
        profile: PathBuf,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        /// Extra random initializations (uniqueness probe).
        #[arg(long, default_value_t = 0)]
        multistart: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the minimizer f as CSV (`mu,f`) here.
        #[arg(long)]
        out_f: Option<PathBuf>,
    },
    /// Continuity-method sweep from round to a target profile.
    Path {
        #[command(flatten)]
        config: ConfigArg,
        /// Target kind: `perturbed` or `file`.
        #[arg(long)]
        target: String,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        mode: Option<u32>,
        /// Target profile CSV when target = file.
        #[arg(long)]
        file: Option<PathBuf>,
        #[arg(long, default_value_t = 11)]
        points: usize,
        /// Persist each embedded run under the config output_dir.
        #[arg(long, default_value_t = false)]
        write_runs: bool,
    },
    /// Bisect for the largest stable perturbation amplitude.
    Stability {
        #[command(flatten)]
        config: ConfigArg,
        /// Tolerance on the sup C3 distance to round.
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value_t = 1)]
        mode: u32,
        #[arg(long, default_value_t = 0.6)]
        amp_cap: f64,
    },
    /// Linearization eigenvalues at the round profile.
    Spectrum {
        #[arg(long, default_value_t = 401)]
        n_grid: usize,
        /// Print at most this many leading eigenvalues.
        #[arg(long, default_value_t = 12)]
        top: usize,
    },
    /// Aggregate run directories into a summary table.
    Report {
        /// Directory containing run-* subdirectories.
        #[arg(long)]
        dir: PathBuf,
        /// Also print the aggregate as JSON.
        #[arg(long, default_value_t = false)]
        json: bool,
    },
}

fn load_config(arg: &ConfigArg) -> Result<ExperimentConfig> {
    match &arg.config {
        Some(path) => parse_config(&std::fs::read_to_string(path)?),
        None => Ok(ExperimentConfig::default()),
    }
}

fn cmd_flow(arg: &ConfigArg) -> Result<()> {
    let config = load_config(arg)?;
    let record = run_flow(&config)?;
    let dir = Path::new(&config.output_dir).join(run_dir_name(&config));
    write_run(&record, &dir)?;
    let mut out = serde_json::to_value(record.summary())?;
    out["run_dir"] = serde_json::Value::String(dir.display().to_string());
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn cmd_entropy(
    profile: &Path,
    tol: f64,
    multistart: usize,
    seed: u64,
    out_f: Option<&Path>,
) -> Result<()> {
    let p = profile_from_csv(&std::fs::read_to_string(profile)?)?;
    let opts = EntropyOpts { tol, multistart, seed, ..EntropyOpts::default() };
    let result = minimize_w(&p, &opts)?;
    if let Some(path) = out_f {
        std::fs::write(path, field_to_csv(result.f(), "f"))?;
    }
    println!("{}", serde_json::to_string_pretty(&result.summary())?);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_path(
    arg: &ConfigArg,
    target: &str,
    epsilon: Option<f64>,
    mode: Option<u32>,
    file: Option<&Path>,
    points: usize,
    write_runs: bool,
) -> Result<()> {
    let config = load_config(arg)?;
    let grid = config.grid()?;
    let target = match target {
        "perturbed" => crate::geometry::perturbed_profile(
            &grid,
            epsilon.ok_or_else(|| Error::Validation {
                key: "epsilon".into(),
                msg: "required for target = perturbed".into(),
            })?,
            mode.ok_or_else(|| Error::Validation {
                key: "mode".into(),
                msg: "required for target = perturbed".into(),
            })?,
        )?,
        "file" => {
            let path = file.ok_or_else(|| Error::Validation {
                key: "file".into(),
                msg: "required for target = file".into(),
            })?;
            profile_from_csv(&std::fs::read_to_string(path)?)?
        }
        other => {
            return Err(Error::Validation {
                key: "target".into(),
                msg: format!("unknown target kind {other:?}"),
            })
        }
    };
    let records = continuity_path_records(&target, points, &config)?;
    let mut entries = Vec::new();
    for (i, (s, run)) in records.iter().enumerate() {
        match run {
            Ok(record) => {
                if write_runs {
                    let dir = Path::new(&config.output_dir)
                        .join(format!("{}-s{:02}", run_dir_name(&config), i));
                    write_run(record, &dir)?;
                }
                entries.push(PathEntry {
                    s: *s,
                    sup_dist: Some(
                        record.rows.iter().fold(0.0f64, |m, r| m.max(r.dist_c3_round)),
                    ),
                    summary: Some(record.summary()),
                    error: None,
                });
            }
            Err(e) => entries.push(PathEntry {
                s: *s,
                summary: None,
                sup_dist: None,
                error: Some(e.clone()),
            }),
        }
    }
    let all_converged = entries
        .iter()
        .all(|e| e.summary.as_ref().map_or(false, |s| s.converged));
    let report = PathReport { entries, all_converged };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn cmd_stability(arg: &ConfigArg, epsilon: f64, mode: u32, amp_cap: f64) -> Result<()> {
    let config = load_config(arg)?;
    let report = stability_probe(epsilon, mode, amp_cap, &config)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn cmd_spectrum(n_grid: usize, top: usize) -> Result<()> {
    if n_grid < 33 || n_grid % 2 == 0 {
        return Err(Error::Validation {
            key: "n_grid".into(),
            msg: "need an odd node count >= 33".into(),
        });
    }
    let grid = Grid::new(n_grid - 1)?;
    let report = spectrum_oracle(&grid);
    println!("leading_rate = {}", report.leading_rate());
    println!("near_null_dim = {}", report.near_null_dim);
    println!("{:>4}  {:>18}  {:>18}", "k", "re", "im");
    for (k, (re, im)) in report.eigenvalues.iter().take(top).enumerate() {
        println!("{k:>4}  {re:>18.12}  {im:>18.12}");
    }
    Ok(())
}

fn cmd_report(dir: &Path, json: bool) -> Result<()> {
    let mut names: Vec<String> = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        if entry.path().join("summary.json").is_file() {
            names.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    names.sort();
    let mut table: Vec<(String, RunSummary)> = Vec::new();
    for name in names {
        let record = crate::runio::read_run(&dir.join(&name))?;
        table.push((name, record.summary()));
    }
    println!(
        "{:<20} {:>9} {:>8} {:>12} {:>12} {:>10}",
        "run", "converged", "t_final", "lambda_hat", "k_energy", "decay"
    );
    for (name, s) in &table {
        println!(
            "{:<20} {:>9} {:>8.3} {:>12.8} {:>12.3e} {:>10}",
            name,
            s.converged,
            s.t_final,
            s.lambda_hat_final,
            s.k_energy_final,
            s.decay_delta.map_or("-".into(), |d| format!("{d:.4}")),
        );
    }
    if json {
        let obj: Vec<serde_json::Value> = table
            .iter()
            .map(|(name, s)| {
                let mut v = serde_json::to_value(s).unwrap();
                v["run"] = serde_json::Value::String(name.clone());
                v
            })
            .collect();
        println!("{}", serde_json::to_string_pretty(&obj)?);
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    if let Some(workers) = cli.workers {
        // ignore failure when a global pool already exists (repeated calls)
        let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
    }
    match &cli.command {
        Command::Flow(arg) => cmd_flow(arg),
        Command::Entropy { profile, tol, multistart, seed, out_f } => {
            cmd_entropy(profile, *tol, *multistart, *seed, out_f.as_deref())
        }
        Command::Path { config, target, epsilon, mode, file, points, write_runs } => cmd_path(
            config,
            target,
            *epsilon,
            *mode,
            file.as_deref(),
            *points,
            *write_runs,
        ),
        Command::Stability { config, epsilon, mode, amp_cap } => {
            cmd_stability(config, *epsilon, *mode, *amp_cap)
        }
        Command::Spectrum { n_grid, top } => cmd_spectrum(*n_grid, *top),
        Command::Report { dir, json } => cmd_report(dir, *json),
    }
}

/// Entry point: returns the process exit code.
pub fn run(argv: impl IntoIterator<Item = String>) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap handles --help/--version as "errors" with exit code 0
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            let obj = serde_json::json!({
                "error": e.to_string(),
                "exit_code": e.exit_code(),
            });
            eprintln!("{obj}");
            e.exit_code()
        }
    }
}
