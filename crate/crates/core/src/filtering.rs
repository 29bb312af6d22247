//! 3×3×3 convolution engine and the boundary-enhancement filter.
//!
//! [`convolve3`] computes `out(p) = Σ_o k(o) · v(p + o)` over the 27 offsets
//! with same-size output; reads outside the volume contribute zero. Every
//! output voxel is accumulated in the fixed slot order of [`Kernel3`], so the
//! result is reproducible bit for bit.
//!
//! [`BeFilter`] composes three box smoothings with a discrete Laplacian. Its
//! adjoint is built from the reflected kernels applied in reverse order. With
//! zero padding the truncated box and Laplacian operators are both polynomials
//! in the per-axis neighbor-sum operators, so they commute and the adjoint
//! agrees with the forward filter up to rounding.

use serde::{Deserialize, Serialize};

use crate::volume::{Kernel3, Volume};

/// Border handling for [`convolve3`]. Only zero padding exists.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum PaddingMode {
    #[default]
    ZeroPad,
}

/// The 3×3×3 averaging kernel, every weight `1/27`.
pub fn box_kernel() -> Kernel3 {
    Kernel3::new([1.0 / 27.0; 27]).expect("finite weights")
}

/// 7-point Laplacian stencil: −6 at the center, +1 on the six faces.
pub fn laplacian_kernel() -> Kernel3 {
    Kernel3::from_fn(|dx, dy, dz| match dx.abs() + dy.abs() + dz.abs() {
        0 => -6.0,
        1 => 1.0,
        _ => 0.0,
    })
    .expect("finite weights")
}

/// Index range of `p` along one axis such that `p + d` stays in `0..n`.
#[inline]
fn valid_range(n: usize, d: i32) -> (usize, usize) {
    match d {
        -1 => (1.min(n), n),
        0 => (0, n),
        _ => (0, n.saturating_sub(1)),
    }
}

/// Adds `Σ_o k(o) · v(p + o)` into `out`, offset by offset in slot order.
pub(crate) fn accumulate_conv(out: &mut [f64], v: &Volume, k: &Kernel3) {
    let (nx, ny, nz) = v.dims();
    debug_assert_eq!(out.len(), v.len());
    let src = v.data();
    for (slot, &w) in k.weights().iter().enumerate() {
        // a zero weight adds ±0.0, which never changes a sum that starts at +0.0
        if w == 0.0 {
            continue;
        }
        let (dx, dy, dz) = Kernel3::offset(slot);
        let (x0, x1) = valid_range(nx, dx);
        let (y0, y1) = valid_range(ny, dy);
        let (z0, z1) = valid_range(nz, dz);
        if x0 >= x1 {
            continue;
        }
        for z in z0..z1 {
            let sz = (z as i64 + dz as i64) as usize;
            for y in y0..y1 {
                let sy = (y as i64 + dy as i64) as usize;
                let orow = nx * (y + ny * z);
                let srow = (nx * (sy + ny * sz)) as i64 + dx as i64;
                let dst = &mut out[orow + x0..orow + x1];
                let from = (srow + x0 as i64) as usize;
                let s = &src[from..from + (x1 - x0)];
                for (o, &sv) in dst.iter_mut().zip(s) {
                    *o += w * sv;
                }
            }
        }
    }
}

/// Same-size 3D correlation of `v` with `k`.
pub fn convolve3(v: &Volume, k: &Kernel3, pad: PaddingMode) -> Volume {
    match pad {
        PaddingMode::ZeroPad => {
            let mut out = v.zeros_like();
            accumulate_conv(out.data_mut(), v, k);
            out
        }
    }
}

/// Convolution with a zero-sum kernel written as `Σ_{o≠0} k(o) · (v(p+o) − v(p))`.
///
/// Equal to [`convolve3`] in exact arithmetic (with zero padding) but maps
/// any locally constant neighborhood to exactly `0.0`.
pub fn convolve3_zero_sum(v: &Volume, k: &Kernel3) -> Volume {
    let (nx, ny, nz) = v.dims();
    let src = v.data();
    let mut out = v.zeros_like();
    let dst = out.data_mut();
    let in_range = |p: usize, d: i32, n: usize| {
        let q = p as i64 + d as i64;
        q >= 0 && (q as usize) < n
    };
    for (slot, &w) in k.weights().iter().enumerate() {
        let (dx, dy, dz) = Kernel3::offset(slot);
        if w == 0.0 || (dx, dy, dz) == (0, 0, 0) {
            continue;
        }
        for z in 0..nz {
            let z_ok = in_range(z, dz, nz);
            for y in 0..ny {
                let row_ok = z_ok && in_range(y, dy, ny);
                let orow = nx * (y + ny * z);
                let srow = if row_ok {
                    let sy = (y as i64 + dy as i64) as usize;
                    let sz = (z as i64 + dz as i64) as usize;
                    Some(nx * (sy + ny * sz))
                } else {
                    None
                };
                for x in 0..nx {
                    let neighbor = match srow {
                        Some(r) if in_range(x, dx, nx) => src[(r as i64 + x as i64 + dx as i64) as usize],
                        _ => 0.0,
                    };
                    dst[orow + x] += w * (neighbor - src[orow + x]);
                }
            }
        }
    }
    out
}

/// Gradient of `Σ_p g(p) · convolve3(v, k)(p)` with respect to the kernel:
/// `G(o) = Σ_p g(p) · v(p + o)` over in-range reads.
pub fn kernel_gradient(v: &Volume, g: &Volume) -> Kernel3 {
    debug_assert_eq!(v.dims(), g.dims());
    let (nx, ny, nz) = v.dims();
    let src = v.data();
    let gd = g.data();
    let mut weights = [0.0; 27];
    for (slot, acc) in weights.iter_mut().enumerate() {
        let (dx, dy, dz) = Kernel3::offset(slot);
        let (x0, x1) = valid_range(nx, dx);
        let (y0, y1) = valid_range(ny, dy);
        let (z0, z1) = valid_range(nz, dz);
        if x0 >= x1 {
            continue;
        }
        let mut sum = 0.0;
        for z in z0..z1 {
            let sz = (z as i64 + dz as i64) as usize;
            for y in y0..y1 {
                let sy = (y as i64 + dy as i64) as usize;
                let orow = nx * (y + ny * z);
                let from = ((nx * (sy + ny * sz)) as i64 + dx as i64 + x0 as i64) as usize;
                let s = &src[from..from + (x1 - x0)];
                sum += gd[orow + x0..orow + x1]
                    .iter()
                    .zip(s)
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
            }
        }
        *acc = sum;
    }
    Kernel3::new(weights).expect("finite inputs give finite sums")
}

/// The fixed boundary-enhancement filter `L = Laplacian ∘ box^n`.
///
/// Kernels are set at construction and never change.
#[derive(Clone, Debug, PartialEq)]
pub struct BeFilter {
    smooth_kernel: Kernel3,
    laplacian_kernel: Kernel3,
    num_smooth_passes: usize,
}

impl Default for BeFilter {
    fn default() -> Self {
        BeFilter {
            smooth_kernel: box_kernel(),
            laplacian_kernel: laplacian_kernel(),
            num_smooth_passes: 3,
        }
    }
}

impl BeFilter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Same kernels with a different number of box passes (for ablations).
    pub fn with_smooth_passes(num_smooth_passes: usize) -> Self {
        BeFilter {
            num_smooth_passes,
            ..Self::default()
        }
    }

    pub fn smooth_kernel(&self) -> &Kernel3 {
        &self.smooth_kernel
    }

    pub fn laplacian_kernel(&self) -> &Kernel3 {
        &self.laplacian_kernel
    }

    pub fn num_smooth_passes(&self) -> usize {
        self.num_smooth_passes
    }

    /// Radius of the filter's support in voxels.
    pub fn support_radius(&self) -> usize {
        self.num_smooth_passes + 1
    }

    /// `L(v)`: box smoothing passes followed by the Laplacian.
    pub fn apply(&self, v: &Volume) -> Volume {
        let mut cur = v.clone();
        for _ in 0..self.num_smooth_passes {
            cur = convolve3(&cur, &self.smooth_kernel, PaddingMode::ZeroPad);
        }
        convolve3_zero_sum(&cur, &self.laplacian_kernel)
    }

    /// `Lᵀ(g)`: reflected Laplacian first, then the reflected box passes.
    pub fn adjoint(&self, g: &Volume) -> Volume {
        let mut cur = convolve3_zero_sum(g, &self.laplacian_kernel.reflected());
        let smooth = self.smooth_kernel.reflected();
        for _ in 0..self.num_smooth_passes {
            cur = convolve3(&cur, &smooth, PaddingMode::ZeroPad);
        }
        cur
    }
}

/// `L(v)` for the given filter.
pub fn be_filter_apply(f: &BeFilter, v: &Volume) -> Volume {
    f.apply(v)
}

/// `Lᵀ(g)` for the given filter.
pub fn be_filter_adjoint(f: &BeFilter, g: &Volume) -> Volume {
    f.adjoint(g)
}
