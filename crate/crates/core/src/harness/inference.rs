//! Sliding-window (scanning-window) inference with uniform blending.

use crate::error::{Error, Result};
use crate::harness::net::TinyConvNet;
use crate::volume::Volume;

/// Window origins along one axis: stride `ceil(window · (1 − overlap))`,
/// with the last window clamped to end at the border.
pub fn window_starts(dim: usize, window: usize, overlap: f64) -> Result<Vec<usize>> {
    if window == 0 || window > dim {
        return Err(Error::InvalidParameter(format!(
            "window {window} does not fit dimension {dim}"
        )));
    }
    if !(0.0..=0.9).contains(&overlap) {
        return Err(Error::InvalidParameter(format!(
            "overlap {overlap} must be in [0, 0.9]"
        )));
    }
    let stride = ((window as f64 * (1.0 - overlap)).ceil() as usize).max(1);
    let mut starts = Vec::new();
    let mut s = 0;
    while s + window < dim {
        starts.push(s);
        s += stride;
    }
    starts.push(dim - window);
    Ok(starts)
}

fn all_windows(dims: (usize, usize, usize), window: [usize; 3], overlap: f64) -> Result<Vec<(usize, usize, usize)>> {
    let xs = window_starts(dims.0, window[0], overlap)?;
    let ys = window_starts(dims.1, window[1], overlap)?;
    let zs = window_starts(dims.2, window[2], overlap)?;
    let mut out = Vec::with_capacity(xs.len() * ys.len() * zs.len());
    for &z in &zs {
        for &y in &ys {
            for &x in &xs {
                out.push((x, y, z));
            }
        }
    }
    Ok(out)
}

/// Number of windows covering each voxel.
pub fn coverage_counts(dims: (usize, usize, usize), window: [usize; 3], overlap: f64) -> Result<Vec<u32>> {
    let mut counts = vec![0u32; dims.0 * dims.1 * dims.2];
    for (ox, oy, oz) in all_windows(dims, window, overlap)? {
        for z in oz..oz + window[2] {
            for y in oy..oy + window[1] {
                let row = dims.0 * (y + dims.1 * z);
                counts[row + ox..row + ox + window[0]]
                    .iter_mut()
                    .for_each(|c| *c += 1);
            }
        }
    }
    Ok(counts)
}

/// Runs `predict` on every window and averages overlapping outputs.
/// Windows are visited in a fixed z, y, x order.
pub fn sliding_window_with<F>(image: &Volume, window: [usize; 3], overlap: f64, mut predict: F) -> Result<Volume>
where
    F: FnMut(&Volume) -> Result<Volume>,
{
    let dims = image.dims();
    let windows = all_windows(dims, window, overlap)?;
    let size = (window[0], window[1], window[2]);
    let mut sum = image.zeros_like();
    let mut count = vec![0u32; image.len()];
    for (ox, oy, oz) in windows {
        let patch = image.crop((ox, oy, oz), size)?;
        let out = predict(&patch)?;
        patch.same_dims(&out)?;
        let acc = sum.data_mut();
        for z in 0..size.2 {
            for y in 0..size.1 {
                let dst = dims.0 * ((oy + y) + dims.1 * (oz + z)) + ox;
                let src = size.0 * (y + size.1 * z);
                for x in 0..size.0 {
                    acc[dst + x] += out.data()[src + x];
                    count[dst + x] += 1;
                }
            }
        }
    }
    for (v, &c) in sum.data_mut().iter_mut().zip(&count) {
        debug_assert!(c > 0);
        *v /= c as f64;
    }
    Ok(sum)
}

pub fn sliding_window_infer(net: &TinyConvNet, image: &Volume, window: [usize; 3], overlap: f64) -> Result<Volume> {
    sliding_window_with(image, window, overlap, |patch| Ok(net.predict(patch)))
}
