use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use beloss::harness::LossMode;
use beloss::phantoms::{generate, PhantomSpec};
use beloss::pipeline::{
    evaluate_saved, export_dataset, filter_demo, filter_demo_file, gradient_suite, rederive_report, run_experiment,
    write_outcome, CaseRow, ExperimentConfig, ModeSummary,
};

#[derive(Parser)]
#[command(name = "beloss", version, about = "Boundary-enhancement loss toolkit for volumetric segmentation")]
struct Cli {
    /// Experiment config (JSON); defaults apply when omitted
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dataset seed for `phantom`, the single training seed for `train`/`eval`,
    /// the phantom seed for `filter` and the sampling seed for `gradcheck`
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default `out`)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Restrict `train`/`eval` to one loss mode
    #[arg(long, global = true)]
    mode: Option<LossMode>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the phantom dataset as .vol3 files
    Phantom,
    /// Train every (mode, seed), evaluate, and write report.json / metrics.csv
    Train,
    /// Re-run validation inference with saved models
    Eval,
    /// Export filter slices and the 1D cross-section of a volume
    Filter {
        /// Input .vol3; a phantom mask is generated when omitted
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Check analytical gradients against central differences
    Gradcheck {
        #[arg(long, default_value_t = 50)]
        samples: usize,
    },
    /// Recompute metrics.csv and summary.json from saved predictions
    Report,
}

fn load_config(cli: &Cli) -> beloss::Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(mode) = cli.mode {
        config.modes = vec![mode];
    }
    config.validate()?;
    Ok(config)
}

fn print_summaries(modes: &[ModeSummary]) {
    println!("{:<14} {:>6} {:>16} {:>16} {:>16}", "mode", "cases", "dice", "asd_mm", "hd95_mm");
    for m in modes {
        println!(
            "{:<14} {:>6} {:>8.4} ± {:<6.4} {:>8.4} ± {:<6.4} {:>8.4} ± {:<6.4}",
            m.mode.to_string(),
            m.cases,
            m.dice.mean,
            m.dice.std,
            m.asd_mm.mean,
            m.asd_mm.std,
            m.hd95_mm.mean,
            m.hd95_mm.std
        );
    }
}

fn summaries_of(rows: &[CaseRow]) -> Vec<ModeSummary> {
    beloss::pipeline::experiment::summarize(rows, &Default::default())
}

fn run(cli: &Cli) -> beloss::Result<bool> {
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    match &cli.command {
        Command::Phantom => {
            let mut config = load_config(cli)?;
            if let Some(seed) = cli.seed {
                config.dataset_seed = seed;
            }
            let written = export_dataset(&config, &out)?;
            println!("wrote {} files to {}", written.len(), out.display());
        }
        Command::Train => {
            let mut config = load_config(cli)?;
            if let Some(seed) = cli.seed {
                config.seeds = vec![seed];
            }
            let outcome = run_experiment(&config)?;
            write_outcome(&outcome, &out)?;
            print_summaries(&outcome.report.modes);
            println!("wrote {}", out.join("report.json").display());
        }
        Command::Eval => {
            let mut config = load_config(cli)?;
            if let Some(seed) = cli.seed {
                config.seeds = vec![seed];
            }
            let rows = evaluate_saved(&config, &out)?;
            print_summaries(&summaries_of(&rows));
        }
        Command::Filter { input } => {
            let prefix = out.join("filter");
            let demo = match input {
                Some(path) => filter_demo_file(path, &prefix)?,
                None => {
                    let spec = PhantomSpec {
                        seed: cli.seed.unwrap_or(0),
                        ..PhantomSpec::default()
                    };
                    filter_demo(&generate(&spec)?.mask, &prefix)?
                }
            };
            for p in &demo.written {
                println!("wrote {}", p.display());
            }
        }
        Command::Gradcheck { samples } => {
            let suite = gradient_suite(cli.seed.unwrap_or(0), *samples)?;
            let mut ok = true;
            for e in &suite {
                println!(
                    "{:<4} {:<28} max_rel {:.3e} (tol {:.0e}) max_abs {:.3e} over {} samples",
                    if e.passed() { "ok" } else { "FAIL" },
                    e.name,
                    e.report.max_rel_error,
                    e.tolerance,
                    e.report.max_abs_error,
                    e.report.samples
                );
                ok &= e.passed();
            }
            return Ok(ok);
        }
        Command::Report => {
            let derived = rederive_report(Path::new(&out))?;
            print_summaries(&derived.modes);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
