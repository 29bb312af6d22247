//! Dense 3D scalar volumes, binary masks and 3×3×3 stencils.
//!
//! Voxels are stored x-fastest: `index = x + nx * (y + ny * z)`. Every
//! constructor and arithmetic operation rejects non-finite values, so a
//! `Volume` never carries NaN or infinity.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Voxel counts along x, y and z.
pub type Dims = (usize, usize, usize);
/// Physical voxel size in millimeters along x, y and z.
pub type Spacing = (f64, f64, f64);

pub const UNIT_SPACING: Spacing = (1.0, 1.0, 1.0);

#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    dims: Dims,
    spacing: Spacing,
    data: Vec<f64>,
}

fn check_dims(dims: Dims) -> Result<()> {
    if dims.0 == 0 || dims.1 == 0 || dims.2 == 0 {
        return Err(Error::InvalidDims(dims));
    }
    Ok(())
}

fn check_spacing(spacing: Spacing) -> Result<()> {
    let ok = |s: f64| s.is_finite() && s > 0.0;
    if !(ok(spacing.0) && ok(spacing.1) && ok(spacing.2)) {
        return Err(Error::InvalidSpacing(spacing));
    }
    Ok(())
}

fn check_finite(data: &[f64]) -> Result<()> {
    match data.iter().find(|v| !v.is_finite()) {
        Some(&v) => Err(Error::NonFinite(v)),
        None => Ok(()),
    }
}

impl Volume {
    /// Creates a volume with every voxel set to `fill`.
    pub fn new(dims: Dims, spacing: Spacing, fill: f64) -> Result<Self> {
        check_dims(dims)?;
        check_spacing(spacing)?;
        if !fill.is_finite() {
            return Err(Error::NonFinite(fill));
        }
        Ok(Volume {
            dims,
            spacing,
            data: vec![fill; dims.0 * dims.1 * dims.2],
        })
    }

    pub fn zeros(dims: Dims) -> Result<Self> {
        Self::new(dims, UNIT_SPACING, 0.0)
    }

    pub fn from_vec(dims: Dims, spacing: Spacing, data: Vec<f64>) -> Result<Self> {
        check_dims(dims)?;
        check_spacing(spacing)?;
        if data.len() != dims.0 * dims.1 * dims.2 {
            return Err(Error::DataLength {
                len: data.len(),
                dims,
            });
        }
        check_finite(&data)?;
        Ok(Volume {
            dims,
            spacing,
            data,
        })
    }

    /// Builds a volume by evaluating `f(x, y, z)` at every voxel.
    pub fn from_fn(
        dims: Dims,
        spacing: Spacing,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        check_dims(dims)?;
        let mut data = Vec::with_capacity(dims.0 * dims.1 * dims.2);
        for z in 0..dims.2 {
            for y in 0..dims.1 {
                for x in 0..dims.0 {
                    data.push(f(x, y, z));
                }
            }
        }
        Self::from_vec(dims, spacing, data)
    }

    /// A zero volume with the same geometry as `self`.
    pub fn zeros_like(&self) -> Volume {
        Volume {
            dims: self.dims,
            spacing: self.spacing,
            data: vec![0.0; self.data.len()],
        }
    }

    /// Internal constructor for data produced by finite arithmetic on finite inputs.
    pub(crate) fn from_parts_unchecked(dims: Dims, spacing: Spacing, data: Vec<f64>) -> Volume {
        debug_assert_eq!(data.len(), dims.0 * dims.1 * dims.2);
        Volume {
            dims,
            spacing,
            data,
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims.0 * (y + self.dims.1 * z)
    }

    /// Inverse of [`Volume::index`].
    #[inline]
    pub fn coords(&self, index: usize) -> (usize, usize, usize) {
        let x = index % self.dims.0;
        let rest = index / self.dims.0;
        (x, rest % self.dims.1, rest / self.dims.1)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[self.index(x, y, z)]
    }

    /// Sets one voxel.
    ///
    /// # Panics
    ///
    /// If the coordinates are out of range or `value` is not finite.
    pub fn set(&mut self, x: usize, y: usize, z: usize, value: f64) {
        assert!(value.is_finite(), "non-finite voxel value {value}");
        let i = self.index(x, y, z);
        self.data[i] = value;
    }

    pub fn with_spacing(mut self, spacing: Spacing) -> Result<Self> {
        check_spacing(spacing)?;
        self.spacing = spacing;
        Ok(self)
    }

    pub fn same_dims(&self, other: &Volume) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::DimMismatch {
                left: self.dims,
                right: other.dims,
            });
        }
        Ok(())
    }

    /// Applies `f` voxelwise; fails if `f` produces a non-finite value.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Volume> {
        let data: Vec<f64> = self.data.iter().map(|&v| f(v)).collect();
        check_finite(&data)?;
        Ok(Volume::from_parts_unchecked(self.dims, self.spacing, data))
    }

    /// Combines two equally sized volumes voxelwise.
    pub fn zip_map(&self, other: &Volume, f: impl Fn(f64, f64) -> f64) -> Result<Volume> {
        self.same_dims(other)?;
        let data: Vec<f64> = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        check_finite(&data)?;
        Ok(Volume::from_parts_unchecked(self.dims, self.spacing, data))
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Extracts the sub-volume starting at `origin` with extent `size`.
    pub fn crop(&self, origin: Dims, size: Dims) -> Result<Volume> {
        check_dims(size)?;
        if origin.0 + size.0 > self.dims.0
            || origin.1 + size.1 > self.dims.1
            || origin.2 + size.2 > self.dims.2
        {
            return Err(Error::InvalidParameter(format!(
                "crop {origin:?}+{size:?} exceeds volume {:?}",
                self.dims
            )));
        }
        let mut data = Vec::with_capacity(size.0 * size.1 * size.2);
        for z in 0..size.2 {
            for y in 0..size.1 {
                let start = self.index(origin.0, origin.1 + y, origin.2 + z);
                data.extend_from_slice(&self.data[start..start + size.0]);
            }
        }
        Ok(Volume::from_parts_unchecked(size, self.spacing, data))
    }
}

/// Returns `a * x + y` voxelwise, keeping the geometry of `x`.
pub fn axpy(a: f64, x: &Volume, y: &Volume) -> Result<Volume> {
    if !a.is_finite() {
        return Err(Error::NonFinite(a));
    }
    x.zip_map(y, |xv, yv| a * xv + yv)
}

/// Euclidean norm of all voxel values.
pub fn l2_norm(v: &Volume) -> f64 {
    v.data.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &Volume, b: &Volume) -> Result<f64> {
    a.same_dims(b)?;
    Ok(a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum())
}

/// Foreground where `v >= t`. Ties count as foreground.
pub fn threshold(v: &Volume, t: f64) -> Result<BinaryMask> {
    if !t.is_finite() {
        return Err(Error::NonFinite(t));
    }
    let data = v
        .data
        .iter()
        .map(|&x| if x >= t { 1.0 } else { 0.0 })
        .collect();
    Ok(BinaryMask(Volume::from_parts_unchecked(
        v.dims, v.spacing, data,
    )))
}

/// A volume whose voxels are exactly 0.0 or 1.0.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryMask(Volume);

impl BinaryMask {
    pub fn from_volume(v: Volume) -> Result<Self> {
        if let Some((index, &value)) = v
            .data
            .iter()
            .enumerate()
            .find(|(_, &x)| x != 0.0 && x != 1.0)
        {
            return Err(Error::NotBinary { index, value });
        }
        Ok(BinaryMask(v))
    }

    /// Builds a mask from a voxel predicate.
    pub fn from_fn(
        dims: Dims,
        spacing: Spacing,
        mut f: impl FnMut(usize, usize, usize) -> bool,
    ) -> Result<Self> {
        Volume::from_fn(dims, spacing, |x, y, z| if f(x, y, z) { 1.0 } else { 0.0 })
            .map(BinaryMask)
    }

    pub fn volume(&self) -> &Volume {
        &self.0
    }

    pub fn into_volume(self) -> Volume {
        self.0
    }

    #[inline]
    pub fn is_set(&self, x: usize, y: usize, z: usize) -> bool {
        self.0.get(x, y, z) != 0.0
    }

    /// Number of foreground voxels.
    pub fn count(&self) -> usize {
        self.0.data.iter().filter(|&&v| v != 0.0).count()
    }

    pub fn complement(&self) -> BinaryMask {
        let data = self.0.data.iter().map(|&v| 1.0 - v).collect();
        BinaryMask(Volume::from_parts_unchecked(
            self.0.dims,
            self.0.spacing,
            data,
        ))
    }

    pub fn crop(&self, origin: Dims, size: Dims) -> Result<BinaryMask> {
        self.0.crop(origin, size).map(BinaryMask)
    }

    pub(crate) fn from_volume_unchecked(v: Volume) -> BinaryMask {
        BinaryMask(v)
    }
}

impl Deref for BinaryMask {
    type Target = Volume;

    fn deref(&self) -> &Volume {
        &self.0
    }
}

/// A 3×3×3 stencil. Weight `(dx, dy, dz)` with offsets in `{-1, 0, 1}` lives at
/// `(dx + 1) + 3 * (dy + 1) + 9 * (dz + 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kernel3 {
    weights: [f64; 27],
}

impl Kernel3 {
    pub fn new(weights: [f64; 27]) -> Result<Self> {
        check_finite(&weights)?;
        Ok(Kernel3 { weights })
    }

    pub fn from_fn(mut f: impl FnMut(i32, i32, i32) -> f64) -> Result<Self> {
        let mut weights = [0.0; 27];
        for (i, w) in weights.iter_mut().enumerate() {
            let (dx, dy, dz) = Self::offset(i);
            *w = f(dx, dy, dz);
        }
        Self::new(weights)
    }

    pub fn zeros() -> Self {
        Kernel3 { weights: [0.0; 27] }
    }

    /// Offset of the `i`-th weight.
    #[inline]
    pub fn offset(i: usize) -> (i32, i32, i32) {
        let i = i as i32;
        (i % 3 - 1, (i / 3) % 3 - 1, i / 9 - 1)
    }

    #[inline]
    pub fn slot(dx: i32, dy: i32, dz: i32) -> usize {
        ((dx + 1) + 3 * (dy + 1) + 9 * (dz + 1)) as usize
    }

    pub fn weight(&self, dx: i32, dy: i32, dz: i32) -> f64 {
        self.weights[Self::slot(dx, dy, dz)]
    }

    pub fn weights(&self) -> &[f64; 27] {
        &self.weights
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Point reflection `k'(o) = k(-o)`.
    pub fn reflected(&self) -> Kernel3 {
        let mut weights = self.weights;
        weights.reverse();
        Kernel3 { weights }
    }

    pub fn is_point_symmetric(&self) -> bool {
        self.reflected() == *self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ones(n: usize) -> Volume {
        Volume::new((n, n, n), UNIT_SPACING, 1.0).unwrap()
    }

    #[test]
    fn create_fills() {
        let v = Volume::new((2, 2, 2), UNIT_SPACING, 0.0).unwrap();
        assert_eq!(v.data(), &[0.0; 8]);
        let v = Volume::new((3, 1, 1), UNIT_SPACING, 2.5).unwrap();
        assert_eq!(v.data(), &[2.5, 2.5, 2.5]);
    }

    #[test]
    fn create_rejects_bad_input() {
        assert!(matches!(
            Volume::new((0, 2, 2), UNIT_SPACING, 0.0),
            Err(Error::InvalidDims(_))
        ));
        assert!(matches!(
            Volume::new((2, 2, 2), (1.0, -1.0, 1.0), 0.0),
            Err(Error::InvalidSpacing(_))
        ));
        assert!(matches!(
            Volume::new((2, 2, 2), (1.0, 0.0, 1.0), 0.0),
            Err(Error::InvalidSpacing(_))
        ));
        assert!(matches!(
            Volume::new((2, 2, 2), UNIT_SPACING, f64::NAN),
            Err(Error::NonFinite(_))
        ));
        assert!(Volume::from_vec((2, 1, 1), UNIT_SPACING, vec![1.0]).is_err());
        assert!(Volume::from_vec((1, 1, 1), UNIT_SPACING, vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn storage_is_x_fastest() {
        let v = Volume::from_fn((3, 4, 5), UNIT_SPACING, |x, y, z| {
            (x + 10 * y + 100 * z) as f64
        })
        .unwrap();
        assert_eq!(v.data()[1], 1.0);
        assert_eq!(v.data()[3], 10.0);
        assert_eq!(v.data()[12], 100.0);
        assert_eq!(v.coords(v.index(2, 3, 4)), (2, 3, 4));
    }

    #[test]
    fn axpy_cases() {
        let v = Volume::from_fn((2, 3, 4), UNIT_SPACING, |x, y, z| (x * y + z) as f64).unwrap();
        let zeros = v.zeros_like();
        assert_eq!(axpy(1.0, &zeros, &v).unwrap(), v);
        assert!(axpy(-1.0, &v, &v).unwrap().data().iter().all(|&x| x == 0.0));
        let three = axpy(2.0, &ones(2), &ones(2)).unwrap();
        assert!(three.data().iter().all(|&x| x == 3.0));
        assert!(matches!(
            axpy(1.0, &ones(2), &ones(3)),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn axpy_overflow_is_rejected() {
        let big = Volume::new((1, 1, 1), UNIT_SPACING, f64::MAX).unwrap();
        assert!(matches!(axpy(2.0, &big, &big), Err(Error::NonFinite(_))));
    }

    #[test]
    fn norm_cases() {
        assert_eq!(l2_norm(&ones(3).zeros_like()), 0.0);
        let mut v = Volume::zeros((3, 3, 3)).unwrap();
        v.set(1, 2, 0, -3.0);
        assert_eq!(l2_norm(&v), 3.0);
        let half = Volume::new((4, 4, 4), UNIT_SPACING, 0.5).unwrap();
        assert_eq!(l2_norm(&half), 4.0);
    }

    #[test]
    fn dot_cases() {
        assert_eq!(dot(&ones(2), &ones(2).zeros_like()).unwrap(), 0.0);
        assert_eq!(dot(&ones(2), &ones(2)).unwrap(), 8.0);
        assert!(dot(&ones(2), &ones(3)).is_err());
    }

    #[test]
    fn threshold_cases() {
        let v = Volume::new((2, 2, 2), UNIT_SPACING, 0.7).unwrap();
        assert_eq!(threshold(&v, 0.5).unwrap().count(), 8);
        assert_eq!(threshold(&v, 0.9).unwrap().count(), 0);
        assert_eq!(threshold(&v, 0.7).unwrap().count(), 8, "ties are foreground");
    }

    #[test]
    fn binary_mask_validation() {
        let v = Volume::from_vec((2, 1, 1), UNIT_SPACING, vec![0.0, 0.5]).unwrap();
        assert!(matches!(
            BinaryMask::from_volume(v),
            Err(Error::NotBinary { index: 1, .. })
        ));
        let m = BinaryMask::from_fn((3, 3, 3), UNIT_SPACING, |x, _, _| x == 1).unwrap();
        assert_eq!(m.count(), 9);
        assert_eq!(m.complement().count(), 18);
    }

    #[test]
    fn kernel_offsets_round_trip() {
        for i in 0..27 {
            let (dx, dy, dz) = Kernel3::offset(i);
            assert_eq!(Kernel3::slot(dx, dy, dz), i);
        }
        let k = Kernel3::from_fn(|dx, dy, dz| (dx + 2 * dy + 4 * dz) as f64).unwrap();
        assert_eq!(k.reflected().weight(1, 0, -1), k.weight(-1, 0, 1));
        assert!(Kernel3::new([f64::NAN; 27]).is_err());
    }

    #[test]
    fn crop_extracts_block() {
        let v = Volume::from_fn((4, 5, 6), UNIT_SPACING, |x, y, z| (x + 4 * y + 20 * z) as f64)
            .unwrap();
        let c = v.crop((1, 2, 3), (2, 2, 2)).unwrap();
        assert_eq!(c.get(0, 0, 0), v.get(1, 2, 3));
        assert_eq!(c.get(1, 1, 1), v.get(2, 3, 4));
        assert!(v.crop((3, 0, 0), (2, 1, 1)).is_err());
    }

    fn volume_strategy() -> impl Strategy<Value = Volume> {
        (1usize..=16, 1usize..=16, 1usize..=16).prop_flat_map(|(nx, ny, nz)| {
            proptest::collection::vec(-10.0f64..10.0, nx * ny * nz).prop_map(move |data| {
                Volume::from_vec((nx, ny, nz), UNIT_SPACING, data).unwrap()
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn norm_squared_equals_self_dot(v in volume_strategy()) {
            let n = l2_norm(&v);
            let d = dot(&v, &v).unwrap();
            prop_assert!((n * n - d).abs() <= 1e-12 * d.max(f64::MIN_POSITIVE));
        }

        #[test]
        fn threshold_is_binary_and_idempotent(v in volume_strategy(), t in -5.0f64..5.0) {
            let m = threshold(&v, t).unwrap();
            prop_assert!(BinaryMask::from_volume(m.volume().clone()).is_ok());
            let again = threshold(m.volume(), 0.5).unwrap();
            prop_assert_eq!(again, m);
        }

        #[test]
        fn operations_leave_inputs_untouched(v in volume_strategy()) {
            let before = v.clone();
            let _ = axpy(3.0, &v, &v).unwrap();
            let _ = threshold(&v, 0.0).unwrap();
            let _ = l2_norm(&v);
            prop_assert_eq!(v, before);
        }

        #[test]
        fn axpy_exact_on_masks(bits in proptest::collection::vec(any::<bool>(), 27), a in -4i32..4) {
            let m = BinaryMask::from_fn((3, 3, 3), UNIT_SPACING, |x, y, z| bits[x + 3 * (y + 3 * z)]).unwrap();
            let out = axpy(a as f64, &m, &m).unwrap();
            for (o, &b) in out.data().iter().zip(&bits) {
                prop_assert_eq!(*o, if b { (a + 1) as f64 } else { 0.0 });
            }
        }
    }
}
