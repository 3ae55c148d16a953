use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use cbwk::bench::{
    aggregate, emit_plot_data, persist_run, run_experiment, sweep, ExperimentConfig, Instance,
};
use cbwk::{check_kkt, solve_lp, KktReport, LpProblem, LpSolution, Result};

#[derive(Parser)]
#[command(name = "cbwk", version, about = "Contextual bandits with knapsacks and conversions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the instance described by a config and write it as JSON.
    GenData {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the configured policy over several seeds.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated seeds; overrides the config.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare the conversion policy with the dual-descent baseline.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve an LP document and report its KKT check.
    LpSolve {
        /// Input document; stdin when absent.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Output document; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
}

#[derive(Serialize)]
struct LpSolveOutput {
    solution: LpSolution,
    kkt: KktReport,
}

#[derive(Serialize)]
struct InstanceSummary<'a> {
    opt: f64,
    instance: &'a Instance,
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => Ok(serde_json::from_reader(BufReader::new(File::open(p)?))?),
        None => Ok(ExperimentConfig::default()),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { config, out } => {
            let cfg = load_config(config.as_deref())?;
            let instance = cfg.instance.build()?;
            let opt = instance.opt()?.value;
            std::fs::create_dir_all(&out)?;
            write_json(&out.join("instance.json"), &InstanceSummary { opt, instance: &instance })?;
            write_json(&out.join("problem.json"), &instance.spec)?;
            eprintln!("wrote {} (OPT = {opt})", out.join("instance.json").display());
        }
        Command::Simulate { config, seeds, out } => {
            let cfg = load_config(config.as_deref())?;
            let seeds = seeds.unwrap_or(cfg.seeds.clone());
            let instance = cfg.instance.build()?;
            let opt = instance.opt()?.value;
            let mut runs = Vec::new();
            for (seed, result) in seeds.iter().zip(run_experiment(&instance, &cfg.policy, &seeds, cfg.diagnostics)) {
                match result {
                    Ok(r) => {
                        persist_run(&r, &out)?;
                        runs.push(r);
                    }
                    Err(e) => eprintln!("seed {seed} failed: {e}"),
                }
            }
            let summary = aggregate(&runs, opt, instance.spec.budget)?;
            emit_plot_data(&summary, &out)?;
            eprintln!(
                "{} runs, OPT = {opt:.4}, final regret = {:.4}",
                runs.len(),
                summary.final_regret_mean
            );
        }
        Command::Bench { config, out } => {
            let cfg = load_config(config.as_deref())?;
            let instance = cfg.instance.build()?;
            let result = sweep(&instance, &cfg.sweep, &cfg.seeds, Some(&out))?;
            write_json(&out.join("sweep.json"), &result)?;
            for e in &result.entries {
                eprintln!(
                    "{:?} C={} eta={:?}: final regret {:.4}",
                    e.policy, e.explore_scale, e.eta, e.report.final_regret_mean
                );
            }
        }
        Command::LpSolve { input, out, tol } => {
            let mut text = String::new();
            match input {
                Some(p) => {
                    File::open(p)?.read_to_string(&mut text)?;
                }
                None => {
                    std::io::stdin().read_to_string(&mut text)?;
                }
            }
            let lp: LpProblem = serde_json::from_str(&text)?;
            let solution = solve_lp(&lp)?;
            let kkt = check_kkt(&lp, &solution, tol);
            let doc = LpSolveOutput { solution, kkt };
            match out {
                Some(p) => write_json(&p, &doc)?,
                None => {
                    let stdout = std::io::stdout();
                    let mut w = stdout.lock();
                    serde_json::to_writer_pretty(&mut w, &doc)?;
                    w.write_all(b"\n")?;
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
