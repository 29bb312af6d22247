//! Runs the boundary-enhancement filter over a phantom mask and writes the
//! before/after slices plus the central x-profile.
//!
//! cargo run --example filter_visualization -- [out_dir]

use beloss::phantoms::{generate, PhantomSpec};
use beloss::pipeline::filter_demo;

fn main() -> beloss::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "out/examples".into());
    std::fs::create_dir_all(&out).map_err(|e| beloss::Error::io(&out, e))?;
    let sample = generate(&PhantomSpec::default())?;
    let demo = filter_demo(&sample.mask, std::path::Path::new(&out).join("sphere"))?;

    println!("  x   mask   filtered");
    for (x, m, f) in demo.profile.iter().step_by(2) {
        println!("{x:3}   {m:.0}   {f:+.5}");
    }
    for p in &demo.written {
        println!("wrote {}", p.display());
    }
    Ok(())
}
