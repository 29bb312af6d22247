//! Synthetic (image, mask) pairs with controllably fuzzy boundaries.
//!
//! All randomness comes from ChaCha8 streams seeded explicitly, so a given
//! spec always produces the same bytes. The mask depends only on geometry;
//! blur and noise touch the image alone.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filtering::{box_kernel, convolve3, PaddingMode};
use crate::volume::{BinaryMask, Volume};

/// Minimum distance in voxels between any foreground voxel and the volume border.
pub const BORDER_MARGIN: f64 = 5.0;
/// Attempts `generate_dataset` makes per sample before giving up.
pub const MAX_JITTER_ATTEMPTS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    /// Ball of radius `radii[0]`.
    Sphere,
    Ellipsoid,
    /// Sphere of radius `radii[0]` whose radius is modulated by
    /// `1 + amplitude · g(direction)`, with `g` a seeded sum of three
    /// low-order angular sinusoids bounded by 1 in magnitude.
    Blob { amplitude: f64, lobe_seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomSpec {
    pub shape: Shape,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    /// Center in voxel coordinates (voxel centers sit at integers).
    pub center: [f64; 3],
    /// Radii in voxels.
    pub radii: [f64; 3],
    /// Edge blur width in voxels.
    pub fuzz_sigma: f64,
    /// Standard deviation of the additive Gaussian noise.
    pub noise_sigma: f64,
    /// `[background, foreground]` intensities.
    pub contrast: [f64; 2],
    pub seed: u64,
}

fn unit_spacing() -> [f64; 3] {
    [1.0; 3]
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            shape: Shape::Sphere,
            dims: [32; 3],
            spacing: unit_spacing(),
            center: [15.5; 3],
            radii: [8.0; 3],
            fuzz_sigma: 2.0,
            noise_sigma: 0.05,
            contrast: [0.0, 1.0],
            seed: 0,
        }
    }
}

impl PhantomSpec {
    /// Largest distance from the center reached by the shape along each axis.
    fn extents(&self) -> [f64; 3] {
        match self.shape {
            Shape::Sphere => [self.radii[0]; 3],
            Shape::Ellipsoid => self.radii,
            Shape::Blob { amplitude, .. } => [self.radii[0] * (1.0 + amplitude); 3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidPhantom(msg));
        if self.dims.iter().any(|&d| d == 0) {
            return bad(format!("dims {:?} must be positive", self.dims));
        }
        if self.spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return bad(format!("spacing {:?} must be positive", self.spacing));
        }
        let radii_used = match self.shape {
            Shape::Ellipsoid => &self.radii[..],
            _ => &self.radii[..1],
        };
        if radii_used.iter().any(|&r| !(r.is_finite() && r > 0.0)) {
            return bad(format!("radii {:?} must be positive", self.radii));
        }
        if let Shape::Blob { amplitude, .. } = self.shape {
            if !(0.0..1.0).contains(&amplitude) {
                return bad(format!("blob amplitude {amplitude} must be in [0, 1)"));
            }
        }
        if !(self.fuzz_sigma.is_finite() && self.fuzz_sigma >= 0.0) {
            return bad(format!("fuzz_sigma {} must be >= 0", self.fuzz_sigma));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad(format!("noise_sigma {} must be >= 0", self.noise_sigma));
        }
        if self.contrast.iter().chain(&self.center).any(|v| !v.is_finite()) {
            return bad("center and contrast must be finite".into());
        }
        for (axis, ext) in self.extents().iter().enumerate() {
            let lo = self.center[axis] - ext;
            let hi = self.center[axis] + ext;
            let max = (self.dims[axis] as f64 - 1.0) - BORDER_MARGIN;
            if lo < BORDER_MARGIN || hi > max {
                return bad(format!(
                    "object spans [{lo:.2}, {hi:.2}] on axis {axis}, allowed [{BORDER_MARGIN}, {max}]"
                ));
            }
        }
        Ok(())
    }

    fn dims_tuple(&self) -> (usize, usize, usize) {
        (self.dims[0], self.dims[1], self.dims[2])
    }

    fn spacing_tuple(&self) -> (f64, f64, f64) {
        (self.spacing[0], self.spacing[1], self.spacing[2])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub image: Volume,
    pub mask: BinaryMask,
    pub spec: PhantomSpec,
}

struct Lobe {
    azimuth_order: f64,
    polar_order: f64,
    azimuth_phase: f64,
    polar_phase: f64,
}

fn blob_lobes(seed: u64) -> Vec<Lobe> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..3)
        .map(|_| Lobe {
            azimuth_order: rng.gen_range(1..=3) as f64,
            polar_order: rng.gen_range(1..=2) as f64,
            azimuth_phase: rng.gen_range(0.0..TAU),
            polar_phase: rng.gen_range(0.0..TAU),
        })
        .collect()
}

fn shape_mask(spec: &PhantomSpec) -> Result<BinaryMask> {
    let c = spec.center;
    let r = spec.radii;
    let lobes = match spec.shape {
        Shape::Blob { lobe_seed, .. } => blob_lobes(lobe_seed),
        _ => Vec::new(),
    };
    BinaryMask::from_fn(spec.dims_tuple(), spec.spacing_tuple(), |x, y, z| {
        let (dx, dy, dz) = (x as f64 - c[0], y as f64 - c[1], z as f64 - c[2]);
        match spec.shape {
            Shape::Sphere => dx * dx + dy * dy + dz * dz <= r[0] * r[0],
            Shape::Ellipsoid => {
                (dx / r[0]).powi(2) + (dy / r[1]).powi(2) + (dz / r[2]).powi(2) <= 1.0
            }
            Shape::Blob { amplitude, .. } => {
                let dist = (dx * dx + dy * dy + dz * dz).sqrt();
                if dist == 0.0 {
                    return true;
                }
                let azimuth = dy.atan2(dx);
                let polar = (dz / dist).clamp(-1.0, 1.0).acos();
                let g = lobes
                    .iter()
                    .map(|l| {
                        (l.azimuth_order * azimuth + l.azimuth_phase).sin()
                            * (l.polar_order * polar + l.polar_phase).cos()
                    })
                    .sum::<f64>()
                    / lobes.len() as f64;
                dist <= r[0] * (1.0 + amplitude * g)
            }
        }
    })
}

/// Number of 3×3×3 box passes whose combined variance best matches `sigma²`
/// (each pass adds 2/3 voxel² per axis).
pub fn blur_passes(sigma: f64) -> usize {
    (1.5 * sigma * sigma).round() as usize
}

/// Standard normal pairs by the Box–Muller transform.
pub(crate) fn gaussian_pair(rng: &mut ChaCha8Rng) -> (f64, f64) {
    // gen::<f64>() is in [0, 1); shift to (0, 1] so the logarithm is finite
    let u1 = 1.0 - rng.gen::<f64>();
    let u2 = rng.gen::<f64>();
    let r = (-2.0 * u1.ln()).sqrt();
    (r * (TAU * u2).cos(), r * (TAU * u2).sin())
}

pub fn generate(spec: &PhantomSpec) -> Result<Sample> {
    spec.validate()?;
    let mask = shape_mask(spec)?;
    let [bg, fg] = spec.contrast;

    let mut soft = mask.volume().clone();
    let k = box_kernel();
    for _ in 0..blur_passes(spec.fuzz_sigma) {
        soft = convolve3(&soft, &k, PaddingMode::ZeroPad);
    }
    let mut data: Vec<f64> = soft.data().iter().map(|&m| bg + (fg - bg) * m).collect();
    if spec.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        for pair in data.chunks_mut(2) {
            let (a, b) = gaussian_pair(&mut rng);
            pair[0] += spec.noise_sigma * a;
            if let Some(second) = pair.get_mut(1) {
                *second += spec.noise_sigma * b;
            }
        }
    }
    let image = Volume::from_vec(spec.dims_tuple(), spec.spacing_tuple(), data)?;
    Ok(Sample {
        image,
        mask,
        spec: spec.clone(),
    })
}

/// Per-sample random variation applied by [`generate_dataset_with`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Jitter {
    /// Relative radius change, drawn from `[−radius, radius]`.
    pub radius: f64,
    /// Center offset in voxels per axis, drawn from `[−center, center]`.
    pub center: f64,
}

impl Default for Jitter {
    fn default() -> Self {
        Jitter {
            radius: 0.25,
            center: 2.0,
        }
    }
}

fn symmetric(rng: &mut ChaCha8Rng, half_width: f64) -> f64 {
    if half_width > 0.0 {
        rng.gen_range(-half_width..=half_width)
    } else {
        0.0
    }
}

fn jittered(template: &PhantomSpec, jitter: &Jitter, rng: &mut ChaCha8Rng) -> PhantomSpec {
    let mut spec = template.clone();
    match template.shape {
        Shape::Ellipsoid => {
            for r in spec.radii.iter_mut() {
                *r *= 1.0 + symmetric(rng, jitter.radius);
            }
        }
        _ => {
            let s = 1.0 + symmetric(rng, jitter.radius);
            spec.radii[0] *= s;
        }
    }
    for c in spec.center.iter_mut() {
        *c += symmetric(rng, jitter.center);
    }
    if let Shape::Blob { amplitude, .. } = template.shape {
        spec.shape = Shape::Blob {
            amplitude,
            lobe_seed: rng.gen(),
        };
    }
    spec.seed = rng.gen();
    spec
}

/// `n` samples with [`Jitter::default`].
pub fn generate_dataset(n: usize, template: &PhantomSpec, seed: u64) -> Result<Vec<Sample>> {
    generate_dataset_with(n, template, seed, &Jitter::default())
}

/// Sample `i` draws its geometry and noise seed from ChaCha8 stream `i` of
/// `seed`; specs that break the border margin are redrawn from the same stream.
pub fn generate_dataset_with(
    n: usize,
    template: &PhantomSpec,
    seed: u64,
    jitter: &Jitter,
) -> Result<Vec<Sample>> {
    if n == 0 {
        return Err(Error::InvalidParameter("dataset size must be >= 1".into()));
    }
    (0..n)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            for _ in 0..MAX_JITTER_ATTEMPTS {
                let spec = jittered(template, jitter, &mut rng);
                if spec.validate().is_ok() {
                    return generate(&spec);
                }
            }
            Err(Error::JitterExhausted(MAX_JITTER_ATTEMPTS))
        })
        .collect()
}
