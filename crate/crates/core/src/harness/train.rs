//! The training loop: one random patch per step, Adam, periodic
//! sliding-window validation.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filtering::BeFilter;
use crate::geometry::{evaluate_case, signed_distance_map, MetricsRecord};
use crate::harness::adam::{AdamConfig, AdamState};
use crate::harness::augment::{augment, random_crop, AugmentFlags};
use crate::harness::inference::sliding_window_infer;
use crate::harness::net::{TinyConvNet, DEFAULT_HIDDEN};
use crate::losses::{
    boundary_enhancement, distance_boundary_loss, focal_loss, soft_dice, LossResult, LossWeights,
    DEFAULT_FOCAL_ALPHA, DEFAULT_FOCAL_GAMMA,
};
use crate::phantoms::Sample;
use crate::volume::{axpy, threshold, BinaryMask, Volume};

pub const EVAL_THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LossMode {
    #[serde(rename = "dice")]
    Dice,
    #[serde(rename = "dice+be")]
    DiceBe,
    #[serde(rename = "dice+focal")]
    DiceFocal,
    #[serde(rename = "focal")]
    Focal,
    #[serde(rename = "dice+distance")]
    DiceDistance,
}

impl LossMode {
    pub const ALL: [LossMode; 5] = [
        LossMode::Dice,
        LossMode::DiceBe,
        LossMode::DiceFocal,
        LossMode::Focal,
        LossMode::DiceDistance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossMode::Dice => "dice",
            LossMode::DiceBe => "dice+be",
            LossMode::DiceFocal => "dice+focal",
            LossMode::Focal => "focal",
            LossMode::DiceDistance => "dice+distance",
        }
    }
}

impl fmt::Display for LossMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown loss mode {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub mode: LossMode,
    pub weights: LossWeights,
    /// Weight of the focal term in `dice+focal`.
    pub focal_weight: f64,
    pub focal_gamma: f64,
    pub focal_alpha: f64,
    /// Weight of the distance term in `dice+distance`.
    pub distance_weight: f64,
    pub epochs: usize,
    pub patch_size: [usize; 3],
    pub window_size: [usize; 3],
    pub window_overlap: f64,
    pub augment: AugmentFlags,
    pub seed: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub hidden: usize,
    /// Validate every this many epochs (the last epoch is always validated);
    /// 0 validates only at the end.
    pub validate_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        TrainConfig {
            mode: LossMode::DiceBe,
            weights: LossWeights::default(),
            focal_weight: 1.0,
            focal_gamma: DEFAULT_FOCAL_GAMMA,
            focal_alpha: DEFAULT_FOCAL_ALPHA,
            distance_weight: 0.01,
            epochs: 30,
            patch_size: [24; 3],
            window_size: [24; 3],
            window_overlap: 0.25,
            augment: AugmentFlags::default(),
            seed: 0,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            hidden: DEFAULT_HIDDEN,
            validate_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        self.weights.validate()?;
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if self.hidden == 0 {
            return bad("hidden must be >= 1".into());
        }
        if self.patch_size.contains(&0) || self.window_size.contains(&0) {
            return bad("patch_size and window_size must be positive".into());
        }
        if !(0.0..=0.9).contains(&self.window_overlap) {
            return bad(format!("window_overlap {} outside [0, 0.9]", self.window_overlap));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr {} must be positive", self.lr));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.eps <= 0.0 {
            return bad("beta1, beta2 must be in [0, 1) and eps > 0".into());
        }
        for (name, w) in [("focal_weight", self.focal_weight), ("distance_weight", self.distance_weight)] {
            if !(w >= 0.0 && w.is_finite()) {
                return bad(format!("{name} must be finite and >= 0"));
            }
        }
        if !(self.augment.shift_range >= 0.0 && self.augment.shift_range.is_finite()) {
            return bad("augment.shift_range must be finite and >= 0".into());
        }
        Ok(())
    }

    fn check_fits(&self, sample: &Sample) -> Result<()> {
        let (nx, ny, nz) = sample.image.dims();
        for (name, size) in [("patch_size", self.patch_size), ("window_size", self.window_size)] {
            if size[0] > nx || size[1] > ny || size[2] > nz {
                return Err(Error::Config(format!(
                    "{name} {size:?} exceeds volume {:?}",
                    (nx, ny, nz)
                )));
            }
        }
        Ok(())
    }
}

/// Every loss term evaluated on one training patch. Terms that the mode
/// does not use are `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dice: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boundary: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub focal: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distance: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Empty on epochs without validation.
    pub validation: Vec<MetricsRecord>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub net: TinyConvNet,
    pub history: History,
}

/// Value and gradient of the configured objective on one patch.
pub fn step_loss(pred: &Volume, target: &BinaryMask, config: &TrainConfig, filter: &BeFilter) -> Result<(LossResult, StepRecord)> {
    let mut record = StepRecord {
        epoch: 0,
        step: 0,
        loss: 0.0,
        dice: None,
        boundary: None,
        focal: None,
        distance: None,
    };
    let mut value = 0.0;
    let mut grad = pred.zeros_like();
    let mut add = |w: f64, term: &LossResult, value: &mut f64| -> Result<()> {
        *value += w * term.value;
        grad = axpy(w, &term.grad, &grad)?;
        Ok(())
    };
    let lambda1 = config.weights.lambda1;
    if config.mode != LossMode::Focal {
        let d = soft_dice(pred, target)?;
        record.dice = Some(d.value);
        add(lambda1, &d, &mut value)?;
    }
    match config.mode {
        LossMode::Dice => {}
        LossMode::DiceBe => {
            let b = boundary_enhancement(pred, target, filter)?;
            record.boundary = Some(b.value);
            add(config.weights.lambda2, &b, &mut value)?;
        }
        LossMode::DiceFocal | LossMode::Focal => {
            let f = focal_loss(pred, target, config.focal_gamma, config.focal_alpha)?;
            record.focal = Some(f.value);
            let w = if config.mode == LossMode::Focal { 1.0 } else { config.focal_weight };
            add(w, &f, &mut value)?;
        }
        LossMode::DiceDistance => {
            // a patch holding a single class has no boundary to pull toward
            let phi = match signed_distance_map(target) {
                Ok(phi) => phi,
                Err(Error::SingleClassMask) => pred.zeros_like(),
                Err(e) => return Err(e),
            };
            let d = distance_boundary_loss(pred, target, &phi)?;
            record.distance = Some(d.value);
            add(config.distance_weight, &d, &mut value)?;
        }
    }
    record.loss = value;
    Ok((LossResult { value, grad }, record))
}

/// Sliding-window probabilities thresholded at 0.5.
pub fn segment(net: &TinyConvNet, image: &Volume, window: [usize; 3], overlap: f64) -> Result<BinaryMask> {
    threshold(&sliding_window_infer(net, image, window, overlap)?, EVAL_THRESHOLD)
}

/// Validation metrics for every sample, with case ids `case000`, `case001`, ...
pub fn validate(net: &TinyConvNet, samples: &[Sample], window: [usize; 3], overlap: f64) -> Result<Vec<MetricsRecord>> {
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let pred = segment(net, &s.image, window, overlap)?;
            evaluate_case(format!("case{i:03}"), &pred, &s.mask)
        })
        .collect()
}

/// Trains a fresh net. Each epoch visits every training sample once in a
/// seeded shuffled order, taking one cropped and augmented patch per sample.
pub fn train(train_set: &[Sample], val_set: &[Sample], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::InvalidParameter("training set is empty".into()));
    }
    for s in train_set.iter().chain(val_set) {
        config.check_fits(s)?;
    }
    let mut net = TinyConvNet::init(config.hidden, config.seed)?;
    let mut adam = AdamState::new(config.adam(), net.num_params());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let filter = BeFilter::new();
    let mut history = History::default();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut step = 0;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let patch = random_crop(&train_set[i], config.patch_size, &mut rng)?;
            let patch = augment(&patch, &config.augment, &mut rng)?;
            let (prob, cache) = net.forward(&patch.image);
            let (loss, mut record) = step_loss(&prob, &patch.mask, config, &filter)?;
            if !loss.value.is_finite() {
                return Err(Error::NonFiniteLoss {
                    step,
                    mode: config.mode.to_string(),
                    value: loss.value,
                });
            }
            let grads = net.backward(&cache, &loss.grad)?;
            adam.step(net.params_mut(), &grads)?;
            record.epoch = epoch;
            record.step = step;
            total += loss.value;
            history.steps.push(record);
            step += 1;
        }
        let last = epoch + 1 == config.epochs;
        let periodic = config.validate_every > 0 && (epoch + 1) % config.validate_every == 0;
        let validation = if !val_set.is_empty() && (last || periodic) {
            validate(&net, val_set, config.window_size, config.window_overlap)?
        } else {
            Vec::new()
        };
        history.epochs.push(EpochRecord {
            epoch,
            mean_loss: total / order.len() as f64,
            validation,
        });
    }
    if net.params().iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFiniteLoss {
            step,
            mode: config.mode.to_string(),
            value: f64::NAN,
        });
    }
    Ok(TrainOutcome { net, history })
}
