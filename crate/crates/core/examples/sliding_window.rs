//! Sliding-window inference: window placement, coverage and agreement with a
//! whole-volume forward pass.

use beloss::harness::{coverage_counts, sliding_window_infer, window_starts, TinyConvNet};
use beloss::phantoms::{generate, PhantomSpec};

fn main() -> beloss::Result<()> {
    println!("starts for dim 40, window 16, overlap 0.25: {:?}", window_starts(40, 16, 0.25)?);
    let counts = coverage_counts((40, 1, 1), [16, 1, 1], 0.25)?;
    println!("coverage along x: {counts:?}");

    let sample = generate(&PhantomSpec::default())?;
    let net = TinyConvNet::init(8, 5)?;
    let (full, _) = net.forward(&sample.image);
    for overlap in [0.0, 0.25, 0.5] {
        let tiled = sliding_window_infer(&net, &sample.image, [16; 3], overlap)?;
        // tiles zero-pad at their own borders, so voxels near a tile edge differ
        let agree = full.data().iter().zip(tiled.data()).filter(|(a, b)| (*a - *b).abs() <= 1e-12).count();
        println!("overlap {overlap}: {:.1}% of voxels match the whole-volume pass", 100.0 * agree as f64 / full.len() as f64);
    }
    Ok(())
}
