//! Distance transforms, surfaces and segmentation quality metrics.
//!
//! The Euclidean distance transform is exact: one lower-envelope-of-parabolas
//! pass per axis over squared distances, weighted by the voxel spacing.
//! Surfaces use 6-connectivity and treat everything outside the volume as
//! background.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{BinaryMask, Volume};

/// Squared distances along one line, `out[p] = min_q (w·(p−q))² + f[q]`.
///
/// `f` may contain `f64::INFINITY` for "no source". Scratch buffers are
/// passed in to avoid reallocating per line.
fn squared_edt_1d(f: &[f64], w: f64, out: &mut [f64], v: &mut Vec<usize>, z: &mut Vec<f64>) {
    let n = f.len();
    v.clear();
    z.clear();
    let w2 = w * w;
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        let fq = f[q] + w2 * (q * q) as f64;
        loop {
            match v.last() {
                None => {
                    v.push(q);
                    z.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&last) => {
                    let fl = f[last] + w2 * (last * last) as f64;
                    let s = (fq - fl) / (2.0 * w2 * (q - last) as f64);
                    if s <= *z.last().unwrap() {
                        v.pop();
                        z.pop();
                    } else {
                        v.push(q);
                        z.push(s);
                        break;
                    }
                }
            }
        }
    }
    if v.is_empty() {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (p, o) in out.iter_mut().enumerate() {
        while k + 1 < v.len() && z[k + 1] < p as f64 {
            k += 1;
        }
        let d = (p as f64 - v[k] as f64) * w;
        *o = d * d + f[v[k]];
    }
}

/// Squared Euclidean distance (mm²) from every voxel to the nearest foreground voxel.
pub fn squared_distance_transform(mask: &BinaryMask) -> Result<Volume> {
    if mask.count() == 0 {
        return Err(Error::EmptyMask);
    }
    let (nx, ny, nz) = mask.dims();
    let (sx, sy, sz) = mask.spacing();
    let mut d: Vec<f64> = mask
        .data()
        .iter()
        .map(|&m| if m != 0.0 { 0.0 } else { f64::INFINITY })
        .collect();
    let (mut v, mut z) = (Vec::new(), Vec::new());
    let longest = nx.max(ny).max(nz);
    let mut line = vec![0.0; longest];
    let mut out = vec![0.0; longest];
    // one pass per axis: (length, stride, weight)
    for (len, stride, w) in [(nx, 1, sx), (ny, nx, sy), (nz, nx * ny, sz)] {
        let total = nx * ny * nz;
        for start in 0..total {
            // visit each line once, from its first element
            if (start / stride) % len != 0 {
                continue;
            }
            for i in 0..len {
                line[i] = d[start + i * stride];
            }
            squared_edt_1d(&line[..len], w, &mut out[..len], &mut v, &mut z);
            for i in 0..len {
                d[start + i * stride] = out[i];
            }
        }
    }
    Volume::from_vec(mask.dims(), mask.spacing(), d)
}

/// Exact Euclidean distance (mm) to the nearest foreground voxel center.
pub fn euclidean_distance_transform(mask: &BinaryMask) -> Result<Volume> {
    squared_distance_transform(mask)?.map(f64::sqrt)
}

/// `EDT(mask) − EDT(complement)`: negative inside, positive outside.
pub fn signed_distance_map(mask: &BinaryMask) -> Result<Volume> {
    let fg = mask.count();
    if fg == 0 || fg == mask.len() {
        return Err(Error::SingleClassMask);
    }
    let outside = euclidean_distance_transform(mask)?;
    let inside = euclidean_distance_transform(&mask.complement())?;
    outside.zip_map(&inside, |o, i| o - i)
}

/// Foreground voxels with a 6-neighbor that is background or outside the volume.
pub fn surface_mask(mask: &BinaryMask) -> BinaryMask {
    let (nx, ny, nz) = mask.dims();
    let is_fg = |x: i64, y: i64, z: i64| {
        x >= 0
            && y >= 0
            && z >= 0
            && (x as usize) < nx
            && (y as usize) < ny
            && (z as usize) < nz
            && mask.is_set(x as usize, y as usize, z as usize)
    };
    let surface = Volume::from_fn(mask.dims(), mask.spacing(), |x, y, z| {
        if !mask.is_set(x, y, z) {
            return 0.0;
        }
        let (x, y, z) = (x as i64, y as i64, z as i64);
        let neighbors = [
            (x - 1, y, z),
            (x + 1, y, z),
            (x, y - 1, z),
            (x, y + 1, z),
            (x, y, z - 1),
            (x, y, z + 1),
        ];
        if neighbors.iter().any(|&(a, b, c)| !is_fg(a, b, c)) {
            1.0
        } else {
            0.0
        }
    })
    .expect("mask geometry is valid");
    BinaryMask::from_volume_unchecked(surface)
}

/// Surface voxel coordinates in storage order.
pub fn extract_surface(mask: &BinaryMask) -> Vec<(usize, usize, usize)> {
    let s = surface_mask(mask);
    s.data()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != 0.0)
        .map(|(i, _)| s.coords(i))
        .collect()
}

/// `2|A∩B| / (|A| + |B|)`, 1.0 when both are empty.
pub fn dice_score(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    a.same_dims(b)?;
    let (mut inter, mut total) = (0usize, 0usize);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let (x, y) = (x != 0.0, y != 0.0);
        inter += (x && y) as usize;
        total += x as usize + y as usize;
    }
    if total == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / total as f64)
}

/// Linear interpolation between order statistics at rank `pct/100 · (n−1)`.
///
/// `sorted` must be ascending and nonempty.
pub fn percentile_sorted(sorted: &[f64], pct: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty set");
    let rank = (pct / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = rank - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceDistances {
    pub hausdorff95_mm: f64,
    pub avg_surface_dist_mm: f64,
}

/// Symmetric surface distances between two nonempty masks.
///
/// Distances from each surface voxel of one mask to the nearest surface voxel
/// of the other are pooled over both directions. ASD is their mean, HD95 their
/// 95th percentile.
pub fn surface_metrics(pred: &BinaryMask, truth: &BinaryMask) -> Result<SurfaceDistances> {
    pred.same_dims(truth)?;
    if pred.count() == 0 || truth.count() == 0 {
        return Err(Error::EmptyMask);
    }
    let sp = surface_mask(pred);
    let st = surface_mask(truth);
    let to_truth = euclidean_distance_transform(&st)?;
    let to_pred = euclidean_distance_transform(&sp)?;
    let mut pooled = Vec::new();
    for (i, &s) in sp.data().iter().enumerate() {
        if s != 0.0 {
            pooled.push(to_truth.data()[i]);
        }
    }
    for (i, &s) in st.data().iter().enumerate() {
        if s != 0.0 {
            pooled.push(to_pred.data()[i]);
        }
    }
    pooled.sort_by(f64::total_cmp);
    let asd = pooled.iter().sum::<f64>() / pooled.len() as f64;
    Ok(SurfaceDistances {
        hausdorff95_mm: percentile_sorted(&pooled, 95.0),
        avg_surface_dist_mm: asd,
    })
}

/// Per-case evaluation result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub case_id: String,
    pub dice: f64,
    pub hausdorff95_mm: f64,
    pub avg_surface_dist_mm: f64,
}

/// Dice and surface distances for one case.
///
/// Surface distances are undefined when exactly one mask is empty; both are
/// then reported as the volume's diagonal length in mm, the largest distance
/// the grid can express. Two empty masks score 0.
pub fn evaluate_case(case_id: impl Into<String>, pred: &BinaryMask, truth: &BinaryMask) -> Result<MetricsRecord> {
    let dice = dice_score(pred, truth)?;
    let (pc, tc) = (pred.count(), truth.count());
    let dist = if pc > 0 && tc > 0 {
        surface_metrics(pred, truth)?
    } else {
        let fill = if pc == 0 && tc == 0 { 0.0 } else { diagonal_mm(truth) };
        SurfaceDistances {
            hausdorff95_mm: fill,
            avg_surface_dist_mm: fill,
        }
    };
    Ok(MetricsRecord {
        case_id: case_id.into(),
        dice,
        hausdorff95_mm: dist.hausdorff95_mm,
        avg_surface_dist_mm: dist.avg_surface_dist_mm,
    })
}

fn diagonal_mm(v: &Volume) -> f64 {
    let (nx, ny, nz) = v.dims();
    let (sx, sy, sz) = v.spacing();
    let ext = |n: usize, s: f64| (n as f64 - 1.0) * s;
    (ext(nx, sx).powi(2) + ext(ny, sy).powi(2) + ext(nz, sz).powi(2)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::soft_dice;
    use crate::volume::UNIT_SPACING;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// All-pairs minimum over foreground voxels.
    fn brute_force_edt(mask: &BinaryMask) -> Volume {
        let (sx, sy, sz) = mask.spacing();
        let fg: Vec<(f64, f64, f64)> = (0..mask.len())
            .filter(|&i| mask.data()[i] != 0.0)
            .map(|i| {
                let (x, y, z) = mask.coords(i);
                (x as f64, y as f64, z as f64)
            })
            .collect();
        Volume::from_fn(mask.dims(), mask.spacing(), |x, y, z| {
            fg.iter()
                .map(|&(a, b, c)| {
                    let dx = (x as f64 - a) * sx;
                    let dy = (y as f64 - b) * sy;
                    let dz = (z as f64 - c) * sz;
                    dx * dx + dy * dy + dz * dz
                })
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .unwrap()
    }

    fn random_mask(rng: &mut ChaCha8Rng, dims: (usize, usize, usize), p: f64) -> BinaryMask {
        loop {
            let m = BinaryMask::from_fn(dims, UNIT_SPACING, |_, _, _| rng.gen_bool(p)).unwrap();
            if m.count() > 0 {
                return m;
            }
        }
    }

    fn block(n: usize, lo: usize, hi: usize) -> BinaryMask {
        BinaryMask::from_fn((n, n, n), UNIT_SPACING, |x, y, z| {
            [x, y, z].iter().all(|c| (lo..hi).contains(c))
        })
        .unwrap()
    }

    #[test]
    fn edt_pythagoras() {
        let m = BinaryMask::from_fn((6, 6, 2), UNIT_SPACING, |x, y, z| (x, y, z) == (0, 0, 0)).unwrap();
        let d = euclidean_distance_transform(&m).unwrap();
        assert_eq!(d.get(3, 4, 0), 5.0);
        assert_eq!(d.get(0, 0, 1), 1.0);
    }

    #[test]
    fn edt_all_foreground_and_empty() {
        let m = BinaryMask::from_fn((3, 4, 5), UNIT_SPACING, |_, _, _| true).unwrap();
        assert!(euclidean_distance_transform(&m).unwrap().data().iter().all(|&d| d == 0.0));
        let e = BinaryMask::from_fn((3, 4, 5), UNIT_SPACING, |_, _, _| false).unwrap();
        assert!(matches!(euclidean_distance_transform(&e), Err(Error::EmptyMask)));
    }

    #[test]
    fn edt_matches_brute_force_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let dims = (rng.gen_range(1..=8), rng.gen_range(1..=8), rng.gen_range(1..=8));
            let m = random_mask(&mut rng, dims, 0.1);
            assert_eq!(euclidean_distance_transform(&m).unwrap(), brute_force_edt(&m));
        }
    }

    #[test]
    fn edt_respects_spacing() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..5 {
            let m = random_mask(&mut rng, (7, 6, 5), 0.05);
            let m = BinaryMask::from_volume(m.into_volume().with_spacing((0.7, 1.3, 2.5)).unwrap()).unwrap();
            let fast = euclidean_distance_transform(&m).unwrap();
            let slow = brute_force_edt(&m);
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() <= 1e-12 * b.max(1.0));
            }
        }
    }

    #[test]
    fn edt_is_one_lipschitz() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let m = random_mask(&mut rng, (10, 9, 8), 0.03);
        let d = euclidean_distance_transform(&m).unwrap();
        for z in 0..8 {
            for y in 0..9 {
                for x in 0..9 {
                    assert!((d.get(x, y, z) - d.get(x + 1, y, z)).abs() <= 1.0 + 1e-12);
                }
            }
        }
        for i in 0..m.len() {
            if m.data()[i] != 0.0 {
                assert_eq!(d.data()[i], 0.0);
            }
        }
    }

    #[test]
    fn sdm_signs_and_antisymmetry() {
        let c = 15.5;
        let sphere = BinaryMask::from_fn((32, 32, 32), UNIT_SPACING, |x, y, z| {
            (x as f64 - c).powi(2) + (y as f64 - c).powi(2) + (z as f64 - c).powi(2) <= 64.0
        })
        .unwrap();
        let phi = signed_distance_map(&sphere).unwrap();
        assert!(phi.get(16, 16, 16) < -5.0);
        assert!(phi.get(1, 1, 1) > 0.0);
        let neg = signed_distance_map(&sphere.complement()).unwrap();
        for (a, b) in phi.data().iter().zip(neg.data()) {
            assert_eq!(*a, -*b);
        }
        for (x, y, z) in extract_surface(&sphere) {
            assert!(phi.get(x, y, z).abs() <= 1.0);
        }
    }

    #[test]
    fn sdm_half_space() {
        let m = BinaryMask::from_fn((10, 10, 20), UNIT_SPACING, |_, _, z| z < 8).unwrap();
        let phi = signed_distance_map(&m).unwrap();
        // last foreground layer is z = 7; three layers outside is z = 10
        assert_eq!(phi.get(4, 4, 10), 3.0);
        assert_eq!(phi.get(4, 4, 7), -1.0);
        assert_eq!(phi.get(4, 4, 3), -5.0);
    }

    #[test]
    fn sdm_rejects_single_class() {
        let m = BinaryMask::from_fn((3, 3, 3), UNIT_SPACING, |_, _, _| true).unwrap();
        assert!(matches!(signed_distance_map(&m), Err(Error::SingleClassMask)));
        assert!(matches!(signed_distance_map(&m.complement()), Err(Error::SingleClassMask)));
    }

    #[test]
    fn surface_cases() {
        let single = BinaryMask::from_fn((1, 1, 1), UNIT_SPACING, |_, _, _| true).unwrap();
        assert_eq!(extract_surface(&single), vec![(0, 0, 0)]);
        assert_eq!(extract_surface(&block(9, 2, 7)).len(), 98);
        let empty = BinaryMask::from_fn((4, 4, 4), UNIT_SPACING, |_, _, _| false).unwrap();
        assert!(extract_surface(&empty).is_empty());
        // the volume border counts as background
        let full = BinaryMask::from_fn((3, 3, 3), UNIT_SPACING, |_, _, _| true).unwrap();
        assert_eq!(extract_surface(&full).len(), 26);
    }

    #[test]
    fn dice_cases() {
        let a = block(10, 2, 6);
        assert_eq!(dice_score(&a, &a).unwrap(), 1.0);
        let b = block(10, 6, 9);
        assert_eq!(dice_score(&a, &b).unwrap(), 0.0);
        let c = BinaryMask::from_fn((10, 10, 10), UNIT_SPACING, |x, y, z| z == 0 && y < 10 && x < 10).unwrap();
        let d = BinaryMask::from_fn((10, 10, 10), UNIT_SPACING, |x, y, z| (z == 0 && x < 5) || (z == 1 && x >= 5 && y < 10)).unwrap();
        assert_eq!((c.count(), d.count()), (100, 100));
        assert_eq!(dice_score(&c, &d).unwrap(), 0.5);
        let e = BinaryMask::from_fn((2, 2, 2), UNIT_SPACING, |_, _, _| false).unwrap();
        assert_eq!(dice_score(&e, &e).unwrap(), 1.0);
        assert!(dice_score(&a, &e).is_err());
    }

    #[test]
    fn dice_agrees_with_soft_dice_on_binary_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..5 {
            let a = random_mask(&mut rng, (6, 6, 6), 0.4);
            let b = random_mask(&mut rng, (6, 6, 6), 0.4);
            let hard = dice_score(&a, &b).unwrap();
            assert_eq!(hard, dice_score(&b, &a).unwrap());
            let soft = soft_dice(a.volume(), &b).unwrap().value;
            assert!((hard - (1.0 - soft)).abs() <= 1e-6);
        }
    }

    #[test]
    fn surface_metrics_identity_and_parallel_planes() {
        let a = block(12, 3, 9);
        let r = surface_metrics(&a, &a).unwrap();
        assert_eq!((r.hausdorff95_mm, r.avg_surface_dist_mm), (0.0, 0.0));

        // two single-layer planes three voxels apart: every surface voxel sees the other plane at 3
        let p = BinaryMask::from_fn((8, 8, 16), UNIT_SPACING, |_, _, z| z == 5).unwrap();
        let q = BinaryMask::from_fn((8, 8, 16), UNIT_SPACING, |_, _, z| z == 8).unwrap();
        let r = surface_metrics(&p, &q).unwrap();
        assert_eq!(r.avg_surface_dist_mm, 3.0);
        assert_eq!(r.hausdorff95_mm, 3.0);
    }

    #[test]
    fn surface_metrics_symmetric_and_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let a = random_mask(&mut rng, (7, 8, 6), 0.3);
        let b = random_mask(&mut rng, (7, 8, 6), 0.3);
        let ab = surface_metrics(&a, &b).unwrap();
        let ba = surface_metrics(&b, &a).unwrap();
        assert!((ab.avg_surface_dist_mm - ba.avg_surface_dist_mm).abs() < 1e-12);
        assert_eq!(ab.hausdorff95_mm, ba.hausdorff95_mm);

        // brute-force point-set distances
        let sa = extract_surface(&a);
        let sb = extract_surface(&b);
        let nearest = |p: &(usize, usize, usize), set: &[(usize, usize, usize)]| {
            set.iter()
                .map(|q| {
                    let d = |u: usize, v: usize| (u as f64 - v as f64).powi(2);
                    (d(p.0, q.0) + d(p.1, q.1) + d(p.2, q.2)).sqrt()
                })
                .fold(f64::INFINITY, f64::min)
        };
        let mut pooled: Vec<f64> = sa.iter().map(|p| nearest(p, &sb)).collect();
        pooled.extend(sb.iter().map(|p| nearest(p, &sa)));
        pooled.sort_by(f64::total_cmp);
        let asd = pooled.iter().sum::<f64>() / pooled.len() as f64;
        assert!((asd - ab.avg_surface_dist_mm).abs() < 1e-12);
        assert_eq!(percentile_sorted(&pooled, 95.0), ab.hausdorff95_mm);
    }

    #[test]
    fn surface_metrics_reject_empty() {
        let a = block(6, 1, 4);
        let e = BinaryMask::from_fn((6, 6, 6), UNIT_SPACING, |_, _, _| false).unwrap();
        assert!(matches!(surface_metrics(&a, &e), Err(Error::EmptyMask)));
        let rec = evaluate_case("c0", &e, &a).unwrap();
        assert_eq!(rec.dice, 0.0);
        assert!((rec.avg_surface_dist_mm - (75f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn percentile_interpolates() {
        let v: Vec<f64> = (0..=100).map(|i| i as f64).collect();
        assert_eq!(percentile_sorted(&v, 5.0), 5.0);
        assert_eq!(percentile_sorted(&v, 95.0), 95.0);
        assert_eq!(percentile_sorted(&[1.0, 3.0], 50.0), 2.0);
        assert_eq!(percentile_sorted(&[7.0], 95.0), 7.0);
    }
}
