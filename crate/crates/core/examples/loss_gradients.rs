//! Evaluates every loss on a blurred prediction and checks each analytical
//! gradient against central differences.

use beloss::filtering::BeFilter;
use beloss::geometry::signed_distance_map;
use beloss::losses::{
    boundary_enhancement, check_gradient, combined_loss, distance_boundary_loss, focal_loss, soft_dice, LossWeights,
};
use beloss::phantoms::{generate, PhantomSpec};

fn main() -> beloss::Result<()> {
    let sample = generate(&PhantomSpec { dims: [20; 3], center: [9.5; 3], radii: [4.0; 3], ..PhantomSpec::default() })?;
    let truth = &sample.mask;
    // a soft, slightly wrong prediction
    let pred = sample.image.map(|x| (0.1 + 0.8 * x).clamp(0.05, 0.95))?;
    let filter = BeFilter::new();
    let weights = LossWeights::default();
    let phi = signed_distance_map(truth)?;

    let losses: Vec<(&str, f64, Box<dyn Fn(&beloss::volume::Volume) -> beloss::Result<beloss::losses::LossResult>>)> = vec![
        ("soft dice", 1e-6, Box::new(|p| soft_dice(p, truth))),
        ("boundary enhancement", 1e-6, Box::new(|p| boundary_enhancement(p, truth, &filter))),
        ("dice + 1000 BE", 1e-6, Box::new(|p| combined_loss(p, truth, &weights, &filter))),
        ("focal", 1e-6, Box::new(|p| focal_loss(p, truth, 2.0, 0.5))),
        ("distance", 1e-3, Box::new(|p| distance_boundary_loss(p, truth, &phi))),
    ];
    for (name, step, loss) in &losses {
        let value = loss(&pred)?.value;
        let report = check_gradient(|p| loss(p), &pred, *step, 50, 7)?;
        println!("{name:<22} value {value:>12.6}  max rel err {:.2e}", report.max_rel_error);
    }
    Ok(())
}
