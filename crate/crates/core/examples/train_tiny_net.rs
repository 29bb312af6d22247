//! Trains the small two-layer network on a handful of phantoms with Dice
//! alone and with Dice + BE, then compares validation metrics.

use beloss::harness::{train, LossMode, TrainConfig};
use beloss::phantoms::{generate_dataset, PhantomSpec};

fn main() -> beloss::Result<()> {
    let template = PhantomSpec { dims: [24; 3], center: [11.5; 3], radii: [6.0; 3], ..PhantomSpec::default() };
    let mut data = generate_dataset(6, &template, 3)?;
    let val = data.split_off(4);

    for mode in [LossMode::Dice, LossMode::DiceBe] {
        let config = TrainConfig {
            mode,
            epochs: 15,
            patch_size: [20; 3],
            window_size: [24; 3],
            validate_every: 5,
            seed: 1,
            ..TrainConfig::default()
        };
        let outcome = train(&data, &val, &config)?;
        println!("{mode}");
        for e in &outcome.history.epochs {
            if e.validation.is_empty() {
                continue;
            }
            let n = e.validation.len() as f64;
            let dice = e.validation.iter().map(|m| m.dice).sum::<f64>() / n;
            let asd = e.validation.iter().map(|m| m.avg_surface_dist_mm).sum::<f64>() / n;
            println!("  epoch {:>2}: loss {:.4}  val dice {dice:.4}  val asd {asd:.3} mm", e.epoch, e.mean_loss);
        }
    }
    Ok(())
}
