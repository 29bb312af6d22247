//! Resampling and intensity normalization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::percentile_sorted;
use crate::volume::{BinaryMask, Volume};

fn resampled_len(n: usize, spacing: f64, target: f64) -> usize {
    ((n as f64 * spacing / target).round() as usize).max(1)
}

/// Trilinear resampling onto a grid of spacing `target_mm` on every axis.
/// Output voxel `i` sits at `i · target_mm` from the first input voxel
/// center; samples beyond the last input voxel clamp to it.
pub fn resample_isotropic(v: &Volume, target_mm: f64) -> Result<Volume> {
    if !(target_mm > 0.0 && target_mm.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "target spacing {target_mm} must be positive"
        )));
    }
    let (nx, ny, nz) = v.dims();
    let (sx, sy, sz) = v.spacing();
    let out_dims = (
        resampled_len(nx, sx, target_mm),
        resampled_len(ny, sy, target_mm),
        resampled_len(nz, sz, target_mm),
    );
    // per axis: (lower index, upper index, fraction) for each output coordinate
    let axis = |n: usize, s: f64, m: usize| -> Vec<(usize, usize, f64)> {
        let ratio = target_mm / s;
        (0..m)
            .map(|i| {
                let c = (i as f64 * ratio).min((n - 1) as f64);
                let lo = c.floor() as usize;
                (lo, (lo + 1).min(n - 1), c - lo as f64)
            })
            .collect()
    };
    let ax = axis(nx, sx, out_dims.0);
    let ay = axis(ny, sy, out_dims.1);
    let az = axis(nz, sz, out_dims.2);
    let lerp = |a: f64, b: f64, t: f64| if t == 0.0 { a } else { a + t * (b - a) };
    Volume::from_fn(out_dims, (target_mm, target_mm, target_mm), |x, y, z| {
        let (x0, x1, tx) = ax[x];
        let (y0, y1, ty) = ay[y];
        let (z0, z1, tz) = az[z];
        let row = |yy: usize, zz: usize| lerp(v.get(x0, yy, zz), v.get(x1, yy, zz), tx);
        let plane = |zz: usize| lerp(row(y0, zz), row(y1, zz), ty);
        lerp(plane(z0), plane(z1), tz)
    })
}

/// Intensity window `[lo, hi]` mapped linearly onto `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntensityWindow {
    pub lo: f64,
    pub hi: f64,
}

impl IntensityWindow {
    /// Percentiles of the pooled foreground intensities of several volumes.
    pub fn from_foreground<'a, I>(pairs: I, lo_pct: f64, hi_pct: f64) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a Volume, &'a BinaryMask)>,
    {
        if !(0.0..=100.0).contains(&lo_pct) || !(lo_pct..=100.0).contains(&hi_pct) {
            return Err(Error::InvalidParameter(format!(
                "percentiles {lo_pct}, {hi_pct} must satisfy 0 <= lo <= hi <= 100"
            )));
        }
        let mut values = Vec::new();
        for (v, fg) in pairs {
            v.same_dims(fg)?;
            values.extend(
                v.data()
                    .iter()
                    .zip(fg.data())
                    .filter(|(_, &m)| m != 0.0)
                    .map(|(&x, _)| x),
            );
        }
        if values.is_empty() {
            return Err(Error::EmptyMask);
        }
        values.sort_by(f64::total_cmp);
        Ok(IntensityWindow {
            lo: percentile_sorted(&values, lo_pct),
            hi: percentile_sorted(&values, hi_pct),
        })
    }

    /// `clamp((x − lo)/(hi − lo), 0, 1)`; when `lo = hi`, values equal to it
    /// map to 0.5.
    pub fn apply(&self, v: &Volume) -> Volume {
        let IntensityWindow { lo, hi } = *self;
        v.map(|x| {
            if hi > lo {
                ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
            } else if x < lo {
                0.0
            } else if x > lo {
                1.0
            } else {
                0.5
            }
        })
        .expect("window output is bounded")
    }
}

pub fn percentile_normalize(v: &Volume, fg: &BinaryMask, lo_pct: f64, hi_pct: f64) -> Result<Volume> {
    Ok(IntensityWindow::from_foreground([(v, fg)], lo_pct, hi_pct)?.apply(v))
}

/// Zero mean, unit population standard deviation.
pub fn zscore_normalize(v: &Volume) -> Result<Volume> {
    if v.len() < 2 {
        return Err(Error::ZeroVariance);
    }
    let mean = v.mean();
    let var = v.data().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
    if !(var > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let sd = var.sqrt();
    v.map(|x| (x - mean) / sd)
}
