//! Isotropic resampling and intensity normalization of an anisotropic scan.

use beloss::phantoms::{generate, PhantomSpec};
use beloss::pipeline::preprocess::{percentile_normalize, resample_isotropic, zscore_normalize};

fn main() -> beloss::Result<()> {
    let spec = PhantomSpec {
        dims: [32, 32, 24],
        spacing: [1.0, 1.0, 2.0],
        center: [15.5, 15.5, 11.5],
        radii: [8.0, 8.0, 4.0],
        shape: beloss::phantoms::Shape::Ellipsoid,
        contrast: [200.0, 900.0],
        noise_sigma: 40.0,
        ..PhantomSpec::default()
    };
    let s = generate(&spec)?;
    let iso = resample_isotropic(&s.image, 1.0)?;
    println!("resampled {:?} @ {:?} -> {:?} @ {:?}", s.image.dims(), s.image.spacing(), iso.dims(), iso.spacing());

    let p = percentile_normalize(&s.image, &s.mask, 5.0, 95.0)?;
    let z = zscore_normalize(&s.image)?;
    println!("raw        min {:8.2} max {:8.2}", s.image.min(), s.image.max());
    println!("percentile min {:8.2} max {:8.2}", p.min(), p.max());
    println!("z-score    min {:8.2} max {:8.2} mean {:.1e}", z.min(), z.max(), z.mean());
    Ok(())
}
