use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use levy_filter::model::{validate_hypotheses, FAMILIES};
use levy_filter_cli::{replay, run_scenario, CliError, ScenarioConfig};
use serde_json::json;

/// Hypothesis sample pairs drawn by `validate`.
const HYPOTHESIS_BUDGET: usize = 512;

#[derive(Debug, Parser)]
#[command(name = "levy-filter", version, about = "Particle filtering for jump-diffusion systems with correlated noise")]
struct Cli {
    /// Output directory (overrides the config's `out`).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true, value_name = "K")]
    threads: Option<usize>,
    /// Master seed (overrides the config's `seed`).
    #[arg(long, global = true, value_name = "S")]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario and write its result files.
    Run { config: PathBuf },
    /// Re-run a finished scenario and compare its outputs byte for byte.
    Replay { manifest: PathBuf },
    /// Check the model hypotheses of a scenario without running it.
    Validate { config: PathBuf },
    /// Print the parametric families and their defaults.
    ListFamilies,
}

fn load(path: &Path, seed: Option<u64>) -> Result<ScenarioConfig, CliError> {
    let mut cfg = ScenarioConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn default_out(config: &Path) -> PathBuf {
    let stem = config.file_stem().map_or("scenario".into(), |s| s.to_string_lossy().into_owned());
    PathBuf::from("out").join(stem)
}

fn print_json(v: &serde_json::Value) {
    // A closed pipe on stdout is not worth a panic.
    let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(v).expect("json value serializes"));
}

fn execute(cli: &Cli) -> Result<i32, CliError> {
    if let Some(k) = cli.threads {
        if k == 0 {
            return Err(CliError::Config("--threads: must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    match &cli.command {
        Command::Run { config } => {
            let cfg = load(config, cli.seed)?;
            let out = cli.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| default_out(config));
            let res = run_scenario(&cfg, &out)?;
            let per = res.elapsed.as_secs_f64() / cfg.replicas as f64;
            eprintln!("{} replica(s) in {:.2} s ({per:.2} s per replica)", cfg.replicas, res.elapsed.as_secs_f64());
            for c in &res.report.checks {
                eprintln!("{:<18} {}  {}", c.name, if c.pass { "pass" } else { "FAIL" }, c.detail);
            }
            let status = if res.report.pass { "ok" } else { "acceptance-failure" };
            print_json(&json!({ "status": status, "out": res.out, "checks": res.report.checks }));
            Ok(if res.report.pass { 0 } else { 5 })
        }
        Command::Replay { manifest } => {
            let rep = replay(manifest, cli.out.as_deref())?;
            for m in &rep.mismatches {
                eprintln!("mismatch {} at line {:?}", m.file, m.line);
            }
            let status = if rep.identical { "ok" } else { "mismatch" };
            print_json(&json!({ "status": status, "compared": rep.compared, "mismatches": rep.mismatches, "replay_dir": rep.replay_dir }));
            Ok(if rep.identical { 0 } else { 5 })
        }
        Command::Validate { config } => {
            let cfg = load(config, cli.seed)?;
            let res = cfg.resolve()?;
            let report = validate_hypotheses(&res.scenario.spec, HYPOTHESIS_BUDGET, cfg.seed)
                .map_err(CliError::engine("hypothesis checks"))?;
            if let Some(dir) = &cli.out {
                std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
                let path = dir.join("hypotheses.json");
                let text = serde_json::to_string_pretty(&report).expect("report serializes");
                std::fs::write(&path, text + "\n").map_err(CliError::io(&path))?;
            }
            print_json(&serde_json::to_value(&report).expect("report serializes"));
            Ok(if report.all_pass() { 0 } else { 3 })
        }
        Command::ListFamilies => {
            let mut stdout = std::io::stdout().lock();
            for f in FAMILIES {
                let defaults: Vec<String> = f.defaults.iter().map(|(k, v)| format!("{k}={v}")).collect();
                let _ = writeln!(stdout, "{}\n  {}\n  defaults: {}", f.name, f.summary, defaults.join(" "));
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            let report = e.report();
            eprintln!("error: {e}");
            print_json(&serde_json::to_value(&report).expect("failure report serializes"));
            if let Some(dir) = &cli.out {
                if std::fs::create_dir_all(dir).is_ok() {
                    let text = serde_json::to_string_pretty(&report).expect("failure report serializes");
                    let _ = std::fs::write(dir.join("failure.json"), text + "\n");
                }
            }
            ExitCode::from(report.exit_code as u8)
        }
    }
}
