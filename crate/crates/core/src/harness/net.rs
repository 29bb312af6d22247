//! A two-layer 3D convolutional predictor with hand-written backpropagation.
//!
//! `image → conv3×3×3 (1→C) + bias → ReLU → conv3×3×3 (C→1) + bias → logistic`.
//! Both convolutions use zero padding and stride 1, so the output has the
//! input's dimensions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filtering::{accumulate_conv, convolve3, kernel_gradient, PaddingMode};
use crate::volume::{Kernel3, Volume};

pub const DEFAULT_HIDDEN: usize = 8;
const KERNEL_LEN: usize = 27;

/// Parameters live in one flat vector laid out as
/// `[w1 (C×27) | b1 (C) | w2 (C×27) | b2 (1)]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TinyConvNet {
    hidden: usize,
    params: Vec<f64>,
}

/// Activations kept from [`TinyConvNet::forward`] for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    input: Volume,
    pre_activation: Vec<Volume>,
    activation: Vec<Volume>,
    prob: Volume,
    params: Vec<f64>,
}

impl ForwardCache {
    pub fn prob(&self) -> &Volume {
        &self.prob
    }

    pub fn pre_activation(&self, channel: usize) -> &Volume {
        &self.pre_activation[channel]
    }
}

pub(crate) fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl TinyConvNet {
    pub fn num_params_for(hidden: usize) -> usize {
        2 * hidden * KERNEL_LEN + hidden + 1
    }

    pub fn zeros(hidden: usize) -> Result<Self> {
        if hidden == 0 {
            return Err(Error::InvalidParameter("hidden width must be >= 1".into()));
        }
        Ok(TinyConvNet {
            hidden,
            params: vec![0.0; Self::num_params_for(hidden)],
        })
    }

    /// He-uniform weights, hidden biases 0.01, output bias 0.
    pub fn init(hidden: usize, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(hidden)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b1 = (6.0 / KERNEL_LEN as f64).sqrt();
        let b2 = (6.0 / (KERNEL_LEN * hidden) as f64).sqrt();
        let (w1, rest) = net.params.split_at_mut(hidden * KERNEL_LEN);
        w1.iter_mut().for_each(|w| *w = rng.gen_range(-b1..b1));
        let (bias1, rest) = rest.split_at_mut(hidden);
        bias1.iter_mut().for_each(|b| *b = 0.01);
        let (w2, _) = rest.split_at_mut(hidden * KERNEL_LEN);
        w2.iter_mut().for_each(|w| *w = rng.gen_range(-b2..b2));
        Ok(net)
    }

    pub fn from_params(hidden: usize, params: Vec<f64>) -> Result<Self> {
        let expected = Self::num_params_for(hidden);
        if hidden == 0 || params.len() != expected {
            return Err(Error::ShapeMismatch {
                expected,
                found: params.len(),
            });
        }
        if let Some(&bad) = params.iter().find(|p| !p.is_finite()) {
            return Err(Error::NonFinite(bad));
        }
        Ok(TinyConvNet { hidden, params })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn w1_offset(&self, c: usize) -> usize {
        c * KERNEL_LEN
    }

    fn b1_offset(&self, c: usize) -> usize {
        self.hidden * KERNEL_LEN + c
    }

    fn w2_offset(&self, c: usize) -> usize {
        self.hidden * KERNEL_LEN + self.hidden + c * KERNEL_LEN
    }

    fn b2_offset(&self) -> usize {
        self.params.len() - 1
    }

    fn kernel_at(&self, offset: usize) -> Kernel3 {
        let mut w = [0.0; KERNEL_LEN];
        w.copy_from_slice(&self.params[offset..offset + KERNEL_LEN]);
        Kernel3::new(w).expect("parameters are finite")
    }

    pub fn conv1_kernel(&self, c: usize) -> Kernel3 {
        self.kernel_at(self.w1_offset(c))
    }

    pub fn conv1_bias(&self, c: usize) -> f64 {
        self.params[self.b1_offset(c)]
    }

    pub fn conv2_kernel(&self, c: usize) -> Kernel3 {
        self.kernel_at(self.w2_offset(c))
    }

    pub fn conv2_bias(&self) -> f64 {
        self.params[self.b2_offset()]
    }

    /// Pre-logistic output.
    fn logits(&self, image: &Volume) -> (Vec<Volume>, Vec<Volume>, Volume) {
        let mut pre = Vec::with_capacity(self.hidden);
        let mut act = Vec::with_capacity(self.hidden);
        let mut logits = image.zeros_like();
        for c in 0..self.hidden {
            let bias = self.conv1_bias(c);
            let z = convolve3(image, &self.conv1_kernel(c), PaddingMode::ZeroPad)
                .map(|v| v + bias)
                .expect("finite");
            let h = z.map(|v| v.max(0.0)).expect("finite");
            accumulate_conv(logits.data_mut(), &h, &self.conv2_kernel(c));
            pre.push(z);
            act.push(h);
        }
        let b2 = self.conv2_bias();
        logits.data_mut().iter_mut().for_each(|v| *v += b2);
        (pre, act, logits)
    }

    /// Probabilities and the activations needed by [`TinyConvNet::backward`].
    pub fn forward(&self, image: &Volume) -> (Volume, ForwardCache) {
        let (pre, act, logits) = self.logits(image);
        let prob = logits.map(logistic).expect("logistic is bounded");
        let cache = ForwardCache {
            input: image.clone(),
            pre_activation: pre,
            activation: act,
            prob: prob.clone(),
            params: self.params.clone(),
        };
        (prob, cache)
    }

    /// Probabilities without keeping a cache.
    pub fn predict(&self, image: &Volume) -> Volume {
        let (_, _, logits) = self.logits(image);
        logits.map(logistic).expect("logistic is bounded")
    }

    /// Parameter gradients (same layout as [`TinyConvNet::params`]) of a loss
    /// whose gradient w.r.t. the probabilities is `grad_prob`.
    pub fn backward(&self, cache: &ForwardCache, grad_prob: &Volume) -> Result<Vec<f64>> {
        if cache.params != self.params {
            return Err(Error::StaleCache(
                "parameters changed since the forward pass".into(),
            ));
        }
        if cache.activation.len() != self.hidden {
            return Err(Error::StaleCache(format!(
                "cache has {} channels, net has {}",
                cache.activation.len(),
                self.hidden
            )));
        }
        cache.prob.same_dims(grad_prob)?;

        let mut grads = vec![0.0; self.params.len()];
        let dlogit = cache
            .prob
            .zip_map(grad_prob, |p, g| g * p * (1.0 - p))?;
        grads[self.b2_offset()] = dlogit.sum();
        for c in 0..self.hidden {
            let dw2 = kernel_gradient(&cache.activation[c], &dlogit);
            let o = self.w2_offset(c);
            grads[o..o + KERNEL_LEN].copy_from_slice(dw2.weights());

            let dh = convolve3(&dlogit, &self.conv2_kernel(c).reflected(), PaddingMode::ZeroPad);
            let dz = dh.zip_map(&cache.pre_activation[c], |g, z| if z > 0.0 { g } else { 0.0 })?;
            grads[self.b1_offset(c)] = dz.sum();
            let dw1 = kernel_gradient(&cache.input, &dz);
            let o = self.w1_offset(c);
            grads[o..o + KERNEL_LEN].copy_from_slice(dw1.weights());
        }
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::{combined_loss, relative_error, soft_dice, LossWeights};
    use crate::filtering::BeFilter;
    use crate::volume::{BinaryMask, UNIT_SPACING};

    fn random_image(seed: u64, n: usize) -> Volume {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Volume::from_fn((n, n, n), UNIT_SPACING, |_, _, _| rng.gen_range(-1.0..1.0)).unwrap()
    }

    /// Layer-by-layer forward written with explicit index arithmetic.
    fn naive_forward(net: &TinyConvNet, image: &Volume) -> Volume {
        let (nx, ny, nz) = image.dims();
        let read = |v: &Volume, x: i64, y: i64, z: i64| {
            if x < 0 || y < 0 || z < 0 || x >= nx as i64 || y >= ny as i64 || z >= nz as i64 {
                0.0
            } else {
                v.get(x as usize, y as usize, z as usize)
            }
        };
        let conv = |v: &Volume, k: &Kernel3| {
            Volume::from_fn(v.dims(), UNIT_SPACING, |x, y, z| {
                let mut acc = 0.0;
                for dz in -1..=1 {
                    for dy in -1..=1 {
                        for dx in -1..=1 {
                            acc += k.weight(dx, dy, dz)
                                * read(v, x as i64 + dx as i64, y as i64 + dy as i64, z as i64 + dz as i64);
                        }
                    }
                }
                acc
            })
            .unwrap()
        };
        let mut logits = vec![net.conv2_bias(); image.len()];
        for c in 0..net.hidden() {
            let h = conv(image, &net.conv1_kernel(c))
                .map(|v| (v + net.conv1_bias(c)).max(0.0))
                .unwrap();
            let o = conv(&h, &net.conv2_kernel(c));
            for (l, v) in logits.iter_mut().zip(o.data()) {
                *l += v;
            }
        }
        Volume::from_vec(image.dims(), UNIT_SPACING, logits.into_iter().map(|z| 1.0 / (1.0 + (-z).exp())).collect()).unwrap()
    }

    #[test]
    fn zero_net_outputs_half() {
        let net = TinyConvNet::zeros(4).unwrap();
        let (p, _) = net.forward(&random_image(1, 5));
        assert!(p.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn doubling_last_layer_doubles_logits() {
        let mut net = TinyConvNet::init(4, 2).unwrap();
        let b2 = net.b2_offset();
        net.params_mut()[b2] = 0.0;
        let img = random_image(3, 6);
        let logit = |n: &TinyConvNet| n.predict(&img).map(|p| (p / (1.0 - p)).ln()).unwrap();
        let before = logit(&net);
        let start = net.w2_offset(0);
        let end = net.w2_offset(3) + KERNEL_LEN;
        net.params_mut()[start..end].iter_mut().for_each(|w| *w *= 2.0);
        let after = logit(&net);
        for (a, b) in before.data().iter().zip(after.data()) {
            assert!((2.0 * a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn forward_matches_naive_oracle() {
        let net = TinyConvNet::init(DEFAULT_HIDDEN, 4).unwrap();
        let img = random_image(5, 8);
        let (p, _) = net.forward(&img);
        let q = naive_forward(&net, &img);
        for (a, b) in p.data().iter().zip(q.data()) {
            assert!((a - b).abs() <= 1e-12);
        }
        assert!(p.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn zero_upstream_gradient() {
        let net = TinyConvNet::init(3, 6).unwrap();
        let img = random_image(7, 5);
        let (p, cache) = net.forward(&img);
        let g = net.backward(&cache, &p.zeros_like()).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dead_channel_has_zero_conv1_gradient() {
        let mut net = TinyConvNet::init(3, 8).unwrap();
        let b = net.b1_offset(1);
        net.params_mut()[b] = -100.0;
        let img = random_image(9, 6);
        let (p, cache) = net.forward(&img);
        assert!(cache.pre_activation(1).data().iter().all(|&z| z < 0.0));
        let target = BinaryMask::from_fn(img.dims(), UNIT_SPACING, |x, _, _| x > 2).unwrap();
        let g = net.backward(&cache, &soft_dice(&p, &target).unwrap().grad).unwrap();
        let o = net.w1_offset(1);
        assert!(g[o..o + KERNEL_LEN].iter().all(|&v| v == 0.0));
        assert_eq!(g[b], 0.0);
        assert!(g[net.w1_offset(0)..net.w1_offset(0) + KERNEL_LEN].iter().any(|&v| v != 0.0));
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut net = TinyConvNet::init(2, 10).unwrap();
        let img = random_image(11, 4);
        let (p, cache) = net.forward(&img);
        net.params_mut()[0] += 1.0;
        assert!(matches!(net.backward(&cache, &p), Err(Error::StaleCache(_))));
        let other = TinyConvNet::init(3, 10).unwrap();
        assert!(other.backward(&cache, &p).is_err());
        let wrong = Volume::zeros((3, 3, 3)).unwrap();
        net.params_mut()[0] -= 1.0;
        assert!(net.backward(&cache, &wrong).is_err());
    }

    #[test]
    fn parameter_gradients_match_finite_differences() {
        let img = random_image(12, 8);
        let target = BinaryMask::from_fn(img.dims(), UNIT_SPACING, |x, y, z| {
            (x as f64 - 3.5).powi(2) + (y as f64 - 3.5).powi(2) + (z as f64 - 3.5).powi(2) < 7.0
        })
        .unwrap();
        let f = BeFilter::new();
        for lambda2 in [0.0, 1000.0] {
            let w = LossWeights::new(1.0, lambda2).unwrap();
            let net = TinyConvNet::init(4, 13).unwrap();
            let loss = |n: &TinyConvNet| combined_loss(&n.predict(&img), &target, &w, &f).unwrap();
            let (p, cache) = net.forward(&img);
            let grads = net.backward(&cache, &loss(&net).grad).unwrap();
            let _ = p;
            let mut rng = ChaCha8Rng::seed_from_u64(14);
            let h = 1e-6;
            for _ in 0..20 {
                let i = rng.gen_range(0..net.num_params());
                let mut plus = net.clone();
                plus.params_mut()[i] += h;
                let mut minus = net.clone();
                minus.params_mut()[i] -= h;
                let numeric = (loss(&plus).value - loss(&minus).value) / (2.0 * h);
                let rel = relative_error(grads[i], numeric);
                assert!(rel <= 1e-4, "lambda2 {lambda2} param {i}: {} vs {numeric}", grads[i]);
            }
        }
    }

    #[test]
    fn from_params_validates() {
        assert!(TinyConvNet::from_params(2, vec![0.0; 3]).is_err());
        let n = TinyConvNet::num_params_for(2);
        assert!(TinyConvNet::from_params(2, vec![0.0; n]).is_ok());
        let mut bad = vec![0.0; n];
        bad[0] = f64::NAN;
        assert!(TinyConvNet::from_params(2, bad).is_err());
    }
}
