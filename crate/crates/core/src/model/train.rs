//! One-shot training with Adam.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::network::{group_cloud, loss_and_grad};
use super::params::{ModelConfig, ModelParams};
use super::tensor::Real;
use crate::cloud::{normalize_cloud, FeatureCloud, ObjectPair, Point3};
use crate::data::{load_pair, DatasetManifest};
use crate::error::{Error, Result};

/// Adam moment estimates.
#[derive(Debug, Clone)]
pub struct Adam<F> {
    m: ModelParams<F>,
    v: ModelParams<F>,
    step: i32,
}

impl<F: Real> Adam<F> {
    pub fn new(params: &ModelParams<F>) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }

    pub fn update(&mut self, params: &mut ModelParams<F>, grad: &ModelParams<F>, config: &ModelConfig) {
        self.step += 1;
        let b1 = config.beta1;
        let b2 = config.beta2;
        let c1 = F::c(1.0 - b1.powi(self.step));
        let c2 = F::c(1.0 - b2.powi(self.step));
        let (b1, b2) = (F::c(b1), F::c(b2));
        let lr = F::c(config.learning_rate);
        let eps = F::c(config.adam_epsilon);
        let one = F::one();
        let grads = grad.tensors();
        for (((p, m), v), (_, _, g)) in params
            .tensors_mut()
            .into_iter()
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
            .zip(grads)
        {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (one - b1) * g[i];
                v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}

/// Trained parameters and the loss of every step (`epochs × samples`).
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams<f32>,
    pub losses: Vec<f64>,
}

fn labels(cloud: &FeatureCloud, channel: usize, which: &str) -> Result<Vec<f64>> {
    cloud.affordance_channel(channel).ok_or_else(|| {
        Error::Dataset(format!("{which} cloud has no affordance channel {channel}"))
    })
}

fn augment(cloud: &FeatureCloud, angle: f64, jitter: &Normal<f64>, rng: &mut ChaCha8Rng) -> Result<FeatureCloud> {
    let (c, s) = (angle.cos(), angle.sin());
    let pts: Vec<Point3> = cloud
        .points()
        .iter()
        .map(|p| {
            [
                c * p[0] - s * p[1] + jitter.sample(rng),
                s * p[0] + c * p[1] + jitter.sample(rng),
                p[2] + jitter.sample(rng),
            ]
        })
        .collect();
    Ok(normalize_cloud(&cloud.with_points(pts)?)?.0)
}

/// Trains on one pair per category, visiting pairs in the given order every
/// epoch. Each pair supervises only its own category channel.
pub fn train_pairs(
    pairs: &[ObjectPair],
    config: &ModelConfig,
    mut on_step: impl FnMut(usize, usize, f64),
) -> Result<TrainOutcome> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(Error::Dataset("no training pairs".into()));
    }
    let mut data = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let ch = pair.category.id;
        if ch >= config.channels {
            return Err(Error::Dimension(format!(
                "category {ch} outside the model's {} channels",
                config.channels
            )));
        }
        let (src, _) = normalize_cloud(&pair.source)?;
        let (tgt, _) = normalize_cloud(&pair.target)?;
        let ys = labels(&src, ch, "source")?;
        let yt = labels(&tgt, ch, "target")?;
        data.push((src, tgt, ys, yt, ch));
    }
    let mut params = ModelParams::<f32>::init(config)?;
    let mut adam = Adam::new(&params);
    let mut grad = params.zeros_like();
    let mut aug_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_a11d);
    let mut drop_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xd209_0f00);
    let jitter = Normal::new(0.0, config.jitter_std).map_err(|e| Error::invalid(e.to_string()))?;
    let mut losses = Vec::with_capacity(config.epochs * data.len());
    for epoch in 0..config.epochs {
        for (si, (src, tgt, ys, yt, ch)) in data.iter().enumerate() {
            let (s, t) = if config.augment {
                let angle = aug_rng.random_range(0.0..std::f64::consts::TAU);
                (
                    augment(src, angle, &jitter, &mut aug_rng)?,
                    augment(tgt, angle, &jitter, &mut aug_rng)?,
                )
            } else {
                (src.clone(), tgt.clone())
            };
            let gs = group_cloud::<f32>(&s, config)?;
            let gt = group_cloud::<f32>(&t, config)?;
            for t in grad.tensors_mut() {
                t.fill(0.0);
            }
            let loss = loss_and_grad(&gs, &gt, ys, yt, *ch, &params, config, Some(&mut drop_rng), Some(&mut grad));
            if !loss.is_finite() || !grad.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            adam.update(&mut params, &grad, config);
            losses.push(loss);
            on_step(epoch, si, loss);
        }
    }
    Ok(TrainOutcome { params, losses })
}

/// Loads the training pair of every category and trains.
pub fn train_one_shot(
    manifest: &DatasetManifest,
    config: &ModelConfig,
    on_step: impl FnMut(usize, usize, f64),
) -> Result<TrainOutcome> {
    let pairs = manifest
        .categories
        .iter()
        .map(|c| load_pair(&c.train))
        .collect::<Result<Vec<_>>>()?;
    train_pairs(&pairs, config, on_step)
}
