//! Slice export of the boundary-enhancement filter response.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::filtering::BeFilter;
use crate::pipeline::io::{read_volume, slice_image, GrayImage};
use crate::volume::Volume;

#[derive(Clone, Debug)]
pub struct FilterDemo {
    pub filtered: Volume,
    pub before: GrayImage,
    pub after: GrayImage,
    /// `(x, input, filtered)` along the central x-line.
    pub profile: Vec<(usize, f64, f64)>,
    pub written: Vec<PathBuf>,
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

/// Filters `input` and writes `<prefix>_before.pgm`, `<prefix>_after.pgm`
/// (central axial slice; the response is scaled symmetrically so zero is
/// mid-gray) and `<prefix>_profile.txt`, the central x-line before and after.
pub fn filter_demo(input: &Volume, prefix: impl AsRef<Path>) -> Result<FilterDemo> {
    let prefix = prefix.as_ref();
    let filtered = BeFilter::new().apply(input);
    let (nx, ny, nz) = input.dims();
    let (yc, zc) = (ny / 2, nz / 2);
    let before = slice_image(input, zc, false)?;
    let after = slice_image(&filtered, zc, true)?;
    let profile: Vec<(usize, f64, f64)> = (0..nx)
        .map(|x| (x, input.get(x, yc, zc), filtered.get(x, yc, zc)))
        .collect();

    if let Some(dir) = prefix.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let before_path = with_suffix(prefix, "_before.pgm");
    let after_path = with_suffix(prefix, "_after.pgm");
    let profile_path = with_suffix(prefix, "_profile.txt");
    before.write_pgm(&before_path)?;
    after.write_pgm(&after_path)?;
    let mut text = format!("# x input filtered (y={yc}, z={zc})\n");
    for (x, a, b) in &profile {
        writeln!(text, "{x}\t{a:.6}\t{b:.6e}").unwrap();
    }
    fs::write(&profile_path, text).map_err(|e| Error::io(&profile_path, e))?;

    Ok(FilterDemo {
        filtered,
        before,
        after,
        profile,
        written: vec![before_path, after_path, profile_path],
    })
}

pub fn filter_demo_file(path: impl AsRef<Path>, prefix: impl AsRef<Path>) -> Result<FilterDemo> {
    filter_demo(&read_volume(path)?, prefix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::UNIT_SPACING;

    #[test]
    fn step_edge_profile_changes_sign_at_the_edge() {
        let v = Volume::from_fn((24, 12, 12), UNIT_SPACING, |x, _, _| if x < 12 { 1.0 } else { 0.0 }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let demo = filter_demo(&v, dir.path().join("edge")).unwrap();
        for p in &demo.written {
            assert!(p.exists());
        }
        let f: Vec<f64> = demo.profile.iter().map(|p| p.2).collect();
        // far from the edge the response vanishes
        assert!(f[4..=7].iter().all(|&r| r.abs() < 1e-15));
        assert!(f[16..=19].iter().all(|&r| r.abs() < 1e-15));
        // the foreground side dips, the background side peaks, antisymmetrically
        assert!(f[10] < 0.0 && f[11] < 0.0);
        assert!(f[12] > 0.0 && f[13] > 0.0);
        for k in 0..4 {
            assert!((f[11 - k] + f[12 + k]).abs() < 1e-15);
        }
        let text = fs::read_to_string(dir.path().join("edge_profile.txt")).unwrap();
        assert_eq!(text.lines().count(), 25);
    }

    #[test]
    fn zero_volume_gives_uniform_mid_gray() {
        let dir = tempfile::tempdir().unwrap();
        let demo = filter_demo(&Volume::zeros((9, 9, 9)).unwrap(), dir.path().join("z")).unwrap();
        assert!(demo.after.pixels.iter().all(|&p| p == 128));
        let pgm = fs::read(dir.path().join("z_after.pgm")).unwrap();
        assert!(pgm.starts_with(b"P5\n9 9\n255\n"));
    }

    #[test]
    fn sphere_gives_a_ring() {
        // radius 8: the filter's 9³ support around the center voxel stays inside
        let c = 13.5;
        let v = Volume::from_fn((28, 28, 28), UNIT_SPACING, |x, y, z| {
            let d = ((x as f64 - c).powi(2) + (y as f64 - c).powi(2) + (z as f64 - c).powi(2)).sqrt();
            if d <= 8.0 { 1.0 } else { 0.0 }
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let demo = filter_demo(&v, dir.path().join("s")).unwrap();
        let px = |x: usize, y: usize| demo.after.pixels[y * 28 + x];
        assert_eq!(px(14, 14), 128);
        assert_eq!(px(0, 0), 128);
        // just outside the boundary the response is positive, just inside negative
        assert!(px(23, 14) > 128);
        assert!(px(20, 14) < 128);
    }
}
