//! Segmentation losses with analytical gradients w.r.t. the probability volume.
//!
//! * [`soft_dice`]: `1 − (2Σpg + ε) / (Σp² + Σg² + ε)` with `ε = 1e-7`.
//! * [`boundary_enhancement`]: `‖L(p − y)‖₂` for the fixed filter `L`; the
//!   gradient is `Lᵀ(r) / ‖r‖₂` with `r = L(p − y)` and zero when `r = 0`.
//! * [`combined_loss`]: `λ1 · dice + λ2 · be`.
//! * [`focal_loss`] and [`distance_boundary_loss`]: baselines.
//!
//! The boundary term cannot separate interior from exterior on its own: any
//! prediction whose filtered response matches the target's scores zero. It
//! is therefore only accepted together with a positive Dice weight.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filtering::BeFilter;
use crate::volume::{l2_norm, BinaryMask, Volume};

/// Smoothing term added to the Dice numerator and denominator.
pub const DICE_SMOOTH: f64 = 1e-7;
/// Probabilities entering a logarithm are clamped to `[PROB_CLAMP, 1 − PROB_CLAMP]`.
pub const PROB_CLAMP: f64 = 1e-7;
pub const DEFAULT_FOCAL_GAMMA: f64 = 2.0;
pub const DEFAULT_FOCAL_ALPHA: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct LossResult {
    pub value: f64,
    pub grad: Volume,
}

impl LossResult {
    fn checked(value: f64, grad: Volume) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::NonFinite(value));
        }
        Ok(LossResult { value, grad })
    }
}

/// Weights of the Dice and boundary-enhancement terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda1: 1.0,
            lambda2: 1000.0,
        }
    }
}

impl LossWeights {
    pub fn new(lambda1: f64, lambda2: f64) -> Result<Self> {
        let w = LossWeights { lambda1, lambda2 };
        w.validate()?;
        Ok(w)
    }

    /// Both weights finite and nonnegative; `lambda2 > 0` requires `lambda1 > 0`.
    pub fn validate(&self) -> Result<()> {
        let ok = |l: f64| l.is_finite() && l >= 0.0;
        if !ok(self.lambda1) || !ok(self.lambda2) || (self.lambda2 > 0.0 && self.lambda1 == 0.0) {
            return Err(Error::InvalidWeights {
                lambda1: self.lambda1,
                lambda2: self.lambda2,
            });
        }
        Ok(())
    }
}

fn check_unit_range(pred: &Volume) -> Result<()> {
    match pred
        .data()
        .iter()
        .enumerate()
        .find(|(_, &p)| !(0.0..=1.0).contains(&p))
    {
        Some((index, &value)) => Err(Error::OutOfUnitRange { index, value }),
        None => Ok(()),
    }
}

pub fn soft_dice(pred: &Volume, target: &BinaryMask) -> Result<LossResult> {
    pred.same_dims(target)?;
    check_unit_range(pred)?;
    let (mut pg, mut pp, mut gg) = (0.0, 0.0, 0.0);
    for (&p, &g) in pred.data().iter().zip(target.data()) {
        pg += p * g;
        pp += p * p;
        gg += g * g;
    }
    let num = 2.0 * pg + DICE_SMOOTH;
    let den = pp + gg + DICE_SMOOTH;
    let value = 1.0 - num / den;
    // d/dp_i [1 − N/D] = −(2 g_i D − 2 p_i N) / D²
    let den2 = den * den;
    let grad = pred.zip_map(target, |p, g| -(2.0 * g * den - 2.0 * p * num) / den2)?;
    LossResult::checked(value, grad)
}

pub fn boundary_enhancement(
    pred: &Volume,
    target: &BinaryMask,
    filter: &BeFilter,
) -> Result<LossResult> {
    let diff = pred.zip_map(target, |p, g| p - g)?;
    let residual = filter.apply(&diff);
    let value = l2_norm(&residual);
    let grad = if value > 0.0 {
        filter.adjoint(&residual).map(|x| x / value)?
    } else {
        pred.zeros_like()
    };
    LossResult::checked(value, grad)
}

/// `λ1 · soft_dice + λ2 · boundary_enhancement`. The boundary term is skipped
/// entirely when `λ2 = 0`.
pub fn combined_loss(
    pred: &Volume,
    target: &BinaryMask,
    weights: &LossWeights,
    filter: &BeFilter,
) -> Result<LossResult> {
    weights.validate()?;
    let dice = soft_dice(pred, target)?;
    if weights.lambda2 == 0.0 {
        let grad = dice.grad.map(|g| weights.lambda1 * g)?;
        return LossResult::checked(weights.lambda1 * dice.value, grad);
    }
    let be = boundary_enhancement(pred, target, filter)?;
    let grad = dice
        .grad
        .zip_map(&be.grad, |a, b| weights.lambda1 * a + weights.lambda2 * b)?;
    LossResult::checked(weights.lambda1 * dice.value + weights.lambda2 * be.value, grad)
}

/// Mean of `−α g (1−p)^γ ln p − (1−α)(1−g) p^γ ln(1−p)` with clamped `p`.
pub fn focal_loss(pred: &Volume, target: &BinaryMask, gamma: f64, alpha: f64) -> Result<LossResult> {
    pred.same_dims(target)?;
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::InvalidParameter(format!("focal gamma {gamma} must be >= 0")));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!("focal alpha {alpha} must be in [0, 1]")));
    }
    let n = pred.len() as f64;
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &g) in pred.data().iter().zip(target.data()) {
        let clamped = !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p);
        let c = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        let q = 1.0 - c;
        let (ln_c, ln_q) = (c.ln(), q.ln());
        let pos = alpha * g;
        let neg = (1.0 - alpha) * (1.0 - g);
        total += -pos * q.powf(gamma) * ln_c - neg * c.powf(gamma) * ln_q;
        if clamped {
            grad.push(0.0);
            continue;
        }
        // d/dc of the two terms; the γ·x^(γ−1) factors vanish for γ = 0
        let dq_pow = if gamma > 0.0 { gamma * q.powf(gamma - 1.0) } else { 0.0 };
        let dc_pow = if gamma > 0.0 { gamma * c.powf(gamma - 1.0) } else { 0.0 };
        let d_pos = -pos * (-dq_pow * ln_c + q.powf(gamma) / c);
        let d_neg = -neg * (dc_pow * ln_q - c.powf(gamma) / q);
        grad.push((d_pos + d_neg) / n);
    }
    let grad = Volume::from_vec(pred.dims(), pred.spacing(), grad)?;
    LossResult::checked(total / n, grad)
}

/// Mean of `φ · p` where `φ` is the signed distance map of the target
/// (negative inside). Linear in the prediction.
pub fn distance_boundary_loss(pred: &Volume, target: &BinaryMask, phi: &Volume) -> Result<LossResult> {
    pred.same_dims(target)?;
    pred.same_dims(phi)?;
    let n = pred.len() as f64;
    let value = pred
        .data()
        .iter()
        .zip(phi.data())
        .map(|(p, f)| p * f)
        .sum::<f64>()
        / n;
    let grad = phi.map(|f| f / n)?;
    LossResult::checked(value, grad)
}

/// Outcome of comparing an analytical gradient with central differences.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheckReport {
    /// Largest `|analytic − numeric| / max(|analytic|, |numeric|, REL_FLOOR)`.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Voxel index where the relative error peaked.
    pub worst_index: usize,
    pub samples: usize,
}

/// Denominator floor of the relative error, so exact zeros compare absolutely.
pub const REL_FLOOR: f64 = 1e-8;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares `loss(pred).grad` against `(f(p + h e_i) − f(p − h e_i)) / 2h` at
/// `samples` distinct voxels drawn with `seed`.
pub fn check_gradient<F>(loss: F, pred: &Volume, step: f64, samples: usize, seed: u64) -> Result<GradCheckReport>
where
    F: Fn(&Volume) -> Result<LossResult>,
{
    let analytic = loss(pred)?.grad;
    let mut probe = pred.clone();
    check_gradient_flat(
        |x| {
            probe.data_mut().copy_from_slice(x);
            Ok(loss(&probe)?.value)
        },
        pred.data(),
        analytic.data(),
        step,
        samples,
        seed,
    )
}

/// [`check_gradient`] for any scalar function of a flat coordinate vector,
/// such as a loss as a function of network parameters.
pub fn check_gradient_flat<F>(
    mut f: F,
    x: &[f64],
    analytic: &[f64],
    step: f64,
    samples: usize,
    seed: u64,
) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(step > 0.0 && step <= 1e-2) {
        return Err(Error::InvalidParameter(format!("step {step} must be in (0, 1e-2]")));
    }
    if samples == 0 {
        return Err(Error::InvalidParameter("samples must be >= 1".into()));
    }
    if analytic.len() != x.len() {
        return Err(Error::ShapeMismatch {
            expected: x.len(),
            found: analytic.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = samples.min(x.len());
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst_index: 0,
        samples: count,
    };
    let mut probe = x.to_vec();
    for i in sample(&mut rng, x.len(), count) {
        let orig = x[i];
        probe[i] = orig + step;
        let plus = f(&probe)?;
        probe[i] = orig - step;
        let minus = f(&probe)?;
        probe[i] = orig;
        let numeric = (plus - minus) / (2.0 * step);
        let a = analytic[i];
        let rel = relative_error(a, numeric);
        report.max_abs_error = report.max_abs_error.max((a - numeric).abs());
        if rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst_index = i;
        }
    }
    Ok(report)
}
