//! Finite-difference checks of every analytical gradient in the crate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::filtering::BeFilter;
use crate::geometry::signed_distance_map;
use crate::harness::TinyConvNet;
use crate::losses::{
    boundary_enhancement, check_gradient, check_gradient_flat, combined_loss, distance_boundary_loss, focal_loss,
    soft_dice, GradCheckReport, LossWeights, DEFAULT_FOCAL_ALPHA, DEFAULT_FOCAL_GAMMA,
};
use crate::volume::{BinaryMask, Volume, UNIT_SPACING};

pub const GRAD_TOLERANCE: f64 = 1e-4;
/// The distance loss is linear, so central differences are exact up to rounding.
pub const LINEAR_GRAD_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Debug, Serialize)]
pub struct SuiteEntry {
    pub name: String,
    pub tolerance: f64,
    pub report: GradCheckReport,
}

impl SuiteEntry {
    pub fn passed(&self) -> bool {
        self.report.max_rel_error <= self.tolerance
    }
}

/// Checks soft Dice, boundary enhancement, the combined loss, focal loss,
/// the distance loss and the net's parameter gradients under the combined
/// loss (λ2 = 0 and 1000), each at `samples` coordinates.
pub fn gradient_suite(seed: u64, samples: usize) -> Result<Vec<SuiteEntry>> {
    let n = 10;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pred = Volume::from_fn((n, n, n), UNIT_SPACING, |_, _, _| rng.gen_range(0.05..0.95))?;
    let c = (n as f64 - 1.0) / 2.0 + rng.gen_range(-0.5..0.5);
    let target = BinaryMask::from_fn((n, n, n), UNIT_SPACING, |x, y, z| {
        (x as f64 - c).powi(2) + (y as f64 - c).powi(2) + (z as f64 - c).powi(2) <= 9.0
    })?;
    let filter = BeFilter::new();
    let default_weights = LossWeights::default();
    let phi = signed_distance_map(&target)?;
    let h = 1e-6;

    let mut out = Vec::new();
    let mut push = |name: &str, tolerance: f64, report: GradCheckReport| {
        out.push(SuiteEntry {
            name: name.to_string(),
            tolerance,
            report,
        })
    };
    push("soft_dice", GRAD_TOLERANCE, check_gradient(|p| soft_dice(p, &target), &pred, h, samples, seed)?);
    push(
        "boundary_enhancement",
        GRAD_TOLERANCE,
        check_gradient(|p| boundary_enhancement(p, &target, &filter), &pred, h, samples, seed)?,
    );
    push(
        "combined_loss(1, 1000)",
        GRAD_TOLERANCE,
        check_gradient(|p| combined_loss(p, &target, &default_weights, &filter), &pred, h, samples, seed)?,
    );
    push(
        "focal_loss",
        GRAD_TOLERANCE,
        check_gradient(
            |p| focal_loss(p, &target, DEFAULT_FOCAL_GAMMA, DEFAULT_FOCAL_ALPHA),
            &pred,
            h,
            samples,
            seed,
        )?,
    );
    push(
        "distance_boundary_loss",
        LINEAR_GRAD_TOLERANCE,
        check_gradient(|p| distance_boundary_loss(p, &target, &phi), &pred, 1e-3, samples, seed)?,
    );

    let m = 8;
    let image = Volume::from_fn((m, m, m), UNIT_SPACING, |_, _, _| rng.gen_range(-1.0..1.0))?;
    let net_target = BinaryMask::from_fn((m, m, m), UNIT_SPACING, |x, y, z| {
        (x as f64 - 3.5).powi(2) + (y as f64 - 3.5).powi(2) + (z as f64 - 3.5).powi(2) < 7.0
    })?;
    let net = TinyConvNet::init(crate::harness::DEFAULT_HIDDEN, seed)?;
    for lambda2 in [0.0, 1000.0] {
        let w = LossWeights::new(1.0, lambda2)?;
        let (prob, cache) = net.forward(&image);
        let grads = net.backward(&cache, &combined_loss(&prob, &net_target, &w, &filter)?.grad)?;
        let hidden = net.hidden();
        let report = check_gradient_flat(
            |params| {
                let probe = TinyConvNet::from_params(hidden, params.to_vec())?;
                Ok(combined_loss(&probe.predict(&image), &net_target, &w, &filter)?.value)
            },
            net.params(),
            &grads,
            h,
            samples,
            seed,
        )?;
        push(&format!("net∘combined_loss(1, {lambda2})"), GRAD_TOLERANCE, report);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_with_fifty_samples() {
        let suite = gradient_suite(7, 50).unwrap();
        assert_eq!(suite.len(), 7);
        for e in &suite {
            assert_eq!(e.report.samples, 50);
            assert!(e.passed(), "{}: {:?}", e.name, e.report);
        }
    }
}
