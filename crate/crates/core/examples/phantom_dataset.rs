//! Generates a jittered phantom dataset and writes it as .vol3 files.
//!
//! cargo run --example phantom_dataset -- [out_dir]

use beloss::phantoms::{generate_dataset_with, Jitter, PhantomSpec, Shape};
use beloss::pipeline::io::write_volume;

fn main() -> beloss::Result<()> {
    let out = std::path::PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "out/examples/phantoms".into()));
    std::fs::create_dir_all(&out).map_err(|e| beloss::Error::io(&out, e))?;
    let template = PhantomSpec {
        shape: Shape::Blob { amplitude: 0.2, lobe_seed: 0 },
        ..PhantomSpec::default()
    };
    let samples = generate_dataset_with(6, &template, 42, &Jitter::default())?;
    for (i, s) in samples.iter().enumerate() {
        let [cx, cy, cz] = s.spec.center;
        println!(
            "phantom{i:03}: radius {:.2}  center ({cx:.1}, {cy:.1}, {cz:.1})  {} foreground voxels",
            s.spec.radii[0],
            s.mask.count()
        );
        write_volume(out.join(format!("phantom{i:03}_image.vol3")), &s.image)?;
        write_volume(out.join(format!("phantom{i:03}_mask.vol3")), s.mask.volume())?;
    }
    println!("wrote {} volumes to {}", 2 * samples.len(), out.display());
    Ok(())
}
