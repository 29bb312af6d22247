//! Random cropping, axis flips and intensity shifts.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phantoms::Sample;
use crate::volume::{BinaryMask, Volume};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentFlags {
    /// Flip each axis independently with probability 0.5.
    pub flip: bool,
    /// Add a uniform value from `[−shift_range, shift_range]` to the image.
    pub intensity_shift: bool,
    pub shift_range: f64,
}

impl Default for AugmentFlags {
    fn default() -> Self {
        AugmentFlags {
            flip: true,
            intensity_shift: true,
            shift_range: 0.1,
        }
    }
}

/// Aligned image/mask crop of `patch` voxels at a uniformly random corner.
pub fn random_crop<R: Rng>(sample: &Sample, patch: [usize; 3], rng: &mut R) -> Result<Sample> {
    let (nx, ny, nz) = sample.image.dims();
    let dims = [nx, ny, nz];
    if patch.iter().zip(&dims).any(|(&p, &d)| p == 0 || p > d) {
        return Err(Error::InvalidParameter(format!(
            "patch {patch:?} does not fit volume {dims:?}"
        )));
    }
    let corner: Vec<usize> = patch
        .iter()
        .zip(&dims)
        .map(|(&p, &d)| rng.gen_range(0..=d - p))
        .collect();
    let origin = (corner[0], corner[1], corner[2]);
    let size = (patch[0], patch[1], patch[2]);
    Ok(Sample {
        image: sample.image.crop(origin, size)?,
        mask: sample.mask.crop(origin, size)?,
        spec: sample.spec.clone(),
    })
}

/// Mirrors `v` along `axis` (0 = x, 1 = y, 2 = z).
pub fn flip_axis(v: &Volume, axis: usize) -> Volume {
    let (nx, ny, nz) = v.dims();
    let mut data = Vec::with_capacity(v.len());
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let (sx, sy, sz) = match axis {
                    0 => (nx - 1 - x, y, z),
                    1 => (x, ny - 1 - y, z),
                    _ => (x, y, nz - 1 - z),
                };
                data.push(v.get(sx, sy, sz));
            }
        }
    }
    Volume::from_parts_unchecked(v.dims(), v.spacing(), data)
}

pub fn augment<R: Rng>(sample: &Sample, flags: &AugmentFlags, rng: &mut R) -> Result<Sample> {
    let mut image = sample.image.clone();
    let mut mask = sample.mask.volume().clone();
    if flags.flip {
        for axis in 0..3 {
            if rng.gen_bool(0.5) {
                image = flip_axis(&image, axis);
                mask = flip_axis(&mask, axis);
            }
        }
    }
    if flags.intensity_shift && flags.shift_range > 0.0 {
        let s = rng.gen_range(-flags.shift_range..=flags.shift_range);
        image = image.map(|v| v + s)?;
    }
    Ok(Sample {
        image,
        mask: BinaryMask::from_volume_unchecked(mask),
        spec: sample.spec.clone(),
    })
}
