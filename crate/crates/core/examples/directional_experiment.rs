//! Runs an experiment config end to end and prints the per-mode summary.
//!
//! cargo run --release --example directional_experiment -- configs/quick.json [out_dir]

use beloss::harness::LossMode;
use beloss::pipeline::{run_experiment, write_outcome, ExperimentConfig};

fn main() -> beloss::Result<()> {
    let mut args = std::env::args().skip(1);
    let config = ExperimentConfig::load(args.next().unwrap_or_else(|| "configs/quick.json".into()))?;
    let out = args.next().unwrap_or_else(|| "out/examples/experiment".into());
    let outcome = run_experiment(&config)?;
    write_outcome(&outcome, std::path::Path::new(&out))?;
    for m in &outcome.report.modes {
        println!(
            "{:<14} {:>14}  dice {:.4} ± {:.4}  asd {:.3} ± {:.3} mm  hd95 {:.3} ± {:.3} mm",
            m.mode.to_string(),
            if m.mode == LossMode::DiceBe { format!("lambda2 {}", m.lambda2) } else { String::new() },
            m.dice.mean,
            m.dice.std,
            m.asd_mm.mean,
            m.asd_mm.std,
            m.hd95_mm.mean,
            m.hd95_mm.std
        );
    }
    println!("wrote {out}/metrics.csv");
    Ok(())
}
