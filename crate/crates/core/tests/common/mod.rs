//! Brute-force oracles shared by the integration tests. None of them call
//! into the engine code they are used to check.

#![allow(dead_code)]

use beloss::volume::{BinaryMask, Kernel3, Volume, UNIT_SPACING};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Zero-padded correlation by a direct loop over voxels and offsets, visiting
/// offsets with x fastest.
pub fn conv_oracle(v: &Volume, k: &Kernel3) -> Volume {
    let (nx, ny, nz) = v.dims();
    Volume::from_fn(v.dims(), v.spacing(), |x, y, z| {
        let mut acc = 0.0;
        for dz in -1i64..=1 {
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (sx, sy, sz) = (x as i64 + dx, y as i64 + dy, z as i64 + dz);
                    if sx < 0 || sy < 0 || sz < 0 || sx >= nx as i64 || sy >= ny as i64 || sz >= nz as i64 {
                        continue;
                    }
                    acc += k.weight(dx as i32, dy as i32, dz as i32) * v.get(sx as usize, sy as usize, sz as usize);
                }
            }
        }
        acc
    })
    .unwrap()
}

/// The 7-point Laplacian stencil written out by hand.
pub fn laplacian_oracle() -> Kernel3 {
    Kernel3::from_fn(|dx, dy, dz| match dx.abs() + dy.abs() + dz.abs() {
        0 => -6.0,
        1 => 1.0,
        _ => 0.0,
    })
    .unwrap()
}

pub fn box_oracle() -> Kernel3 {
    Kernel3::from_fn(|_, _, _| 1.0 / 27.0).unwrap()
}

/// Three box passes then the Laplacian, each by [`conv_oracle`].
pub fn be_filter_oracle(v: &Volume) -> Volume {
    let mut out = v.clone();
    for _ in 0..3 {
        out = conv_oracle(&out, &box_oracle());
    }
    conv_oracle(&out, &laplacian_oracle())
}

/// Squared distance to the nearest foreground voxel by all-pairs search.
pub fn squared_edt_oracle(mask: &BinaryMask) -> Vec<f64> {
    let (sx, sy, sz) = mask.spacing();
    let fg: Vec<(usize, usize, usize)> = (0..mask.len()).filter(|&i| mask.data()[i] != 0.0).map(|i| mask.coords(i)).collect();
    (0..mask.len())
        .map(|i| {
            let (x, y, z) = mask.coords(i);
            fg.iter()
                .map(|&(a, b, c)| {
                    let dx = (x as f64 - a as f64) * sx;
                    let dy = (y as f64 - b as f64) * sy;
                    let dz = (z as f64 - c as f64) * sz;
                    dx * dx + dy * dy + dz * dz
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Central differences of `f` at the coordinates `indices` of `x`.
pub fn central_differences<F>(mut f: F, x: &[f64], indices: &[usize], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    indices
        .iter()
        .map(|&i| {
            probe[i] = x[i] + h;
            let plus = f(&probe);
            probe[i] = x[i] - h;
            let minus = f(&probe);
            probe[i] = x[i];
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

pub fn random_volume(rng: &mut ChaCha8Rng, dims: (usize, usize, usize), lo: f64, hi: f64) -> Volume {
    Volume::from_fn(dims, UNIT_SPACING, |_, _, _| rng.gen_range(lo..hi)).unwrap()
}

pub fn random_kernel(rng: &mut ChaCha8Rng) -> Kernel3 {
    Kernel3::from_fn(|_, _, _| rng.gen_range(-1.0..1.0)).unwrap()
}

pub fn random_dims(rng: &mut ChaCha8Rng, max: usize) -> (usize, usize, usize) {
    (rng.gen_range(1..=max), rng.gen_range(1..=max), rng.gen_range(1..=max))
}

/// Random mask with at least one foreground voxel.
pub fn random_mask(rng: &mut ChaCha8Rng, dims: (usize, usize, usize), density: f64) -> BinaryMask {
    let n = dims.0 * dims.1 * dims.2;
    let forced = rng.gen_range(0..n);
    let mut i = 0;
    BinaryMask::from_fn(dims, UNIT_SPACING, |_, _, _| {
        let on = i == forced || rng.gen_bool(density);
        i += 1;
        on
    })
    .unwrap()
}

pub fn ball(dims: (usize, usize, usize), center: f64, radius: f64) -> BinaryMask {
    BinaryMask::from_fn(dims, UNIT_SPACING, |x, y, z| {
        (x as f64 - center).powi(2) + (y as f64 - center).powi(2) + (z as f64 - center).powi(2) <= radius * radius
    })
    .unwrap()
}
