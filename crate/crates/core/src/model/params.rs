//! Hyperparameters and learnable tensors.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{LayerNorm, Linear, Mlp};
use super::tensor::Real;
use crate::error::{Error, Result};

/// What each decoder attention pass attends to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AttentionMode {
    /// Source tokens attend to target tokens and vice versa.
    #[default]
    Joint,
    /// Each object attends only to its own tokens (ablation).
    SelfOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub token_dim: usize,
    pub num_groups: usize,
    pub group_size: usize,
    pub group_radius: f64,
    pub patch_hidden: Vec<usize>,
    pub pos_dim: usize,
    pub heads: usize,
    pub dropout: f64,
    pub decoder_blocks: usize,
    pub ff_hidden: usize,
    pub head_hidden: Vec<usize>,
    pub channels: usize,
    pub feature_dim: usize,
    pub norm_epsilon: f64,
    pub seed: u64,
    pub attention: AttentionMode,
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub augment: bool,
    pub jitter_std: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            token_dim: 512,
            num_groups: 256,
            group_size: 64,
            group_radius: 0.15,
            patch_hidden: vec![784, 512],
            pos_dim: 512,
            heads: 8,
            dropout: 0.1,
            decoder_blocks: 2,
            ff_hidden: 1024,
            head_hidden: vec![512, 256],
            channels: 5,
            feature_dim: 1024,
            norm_epsilon: 1e-5,
            seed: 0,
            attention: AttentionMode::Joint,
            epochs: 300,
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            augment: true,
            jitter_std: 0.005,
        }
    }
}

impl ModelConfig {
    /// Reduced network for 512-point clouds with short feature vectors.
    pub fn compact() -> Self {
        Self {
            token_dim: 128,
            num_groups: 64,
            group_size: 16,
            patch_hidden: vec![196, 128],
            pos_dim: 128,
            ff_hidden: 256,
            head_hidden: vec![128, 64],
            feature_dim: 32,
            epochs: 200,
            learning_rate: 1e-3,
            ..Self::default()
        }
    }

    /// Configuration used by the gradient check.
    pub fn small() -> Self {
        Self {
            token_dim: 32,
            num_groups: 8,
            group_size: 8,
            group_radius: 0.5,
            patch_hidden: vec![24, 16],
            pos_dim: 16,
            heads: 4,
            dropout: 0.0,
            decoder_blocks: 2,
            ff_hidden: 48,
            head_hidden: vec![24, 12],
            channels: 2,
            feature_dim: 8,
            ..Self::default()
        }
    }

    pub fn head_dim(&self) -> usize {
        self.token_dim / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("token_dim", self.token_dim),
            ("num_groups", self.num_groups),
            ("group_size", self.group_size),
            ("pos_dim", self.pos_dim),
            ("heads", self.heads),
            ("ff_hidden", self.ff_hidden),
            ("channels", self.channels),
            ("epochs", self.epochs),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be ≥ 1")));
            }
        }
        if self.patch_hidden.is_empty() || self.patch_hidden.contains(&0) {
            return Err(Error::invalid("patch_hidden must be non-empty with dims ≥ 1"));
        }
        if self.head_hidden.contains(&0) {
            return Err(Error::invalid("head_hidden dims must be ≥ 1"));
        }
        if self.token_dim % self.heads != 0 {
            return Err(Error::invalid(format!(
                "token_dim {} not divisible by heads {}",
                self.token_dim, self.heads
            )));
        }
        if !(self.group_radius > 0.0 && self.group_radius.is_finite()) {
            return Err(Error::invalid("group_radius must be > 0"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid("dropout must be in [0, 1)"));
        }
        if !(self.norm_epsilon > 0.0) {
            return Err(Error::invalid("norm_epsilon must be > 0"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be > 0"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid("Adam betas must be in [0, 1)"));
        }
        if !(self.adam_epsilon > 0.0) || !(self.jitter_std >= 0.0) {
            return Err(Error::invalid("adam_epsilon must be > 0 and jitter_std ≥ 0"));
        }
        Ok(())
    }

    fn patch_dims(&self) -> Vec<usize> {
        let mut d = vec![3 + self.feature_dim];
        d.extend(&self.patch_hidden);
        d
    }

    fn head_dims(&self) -> Vec<usize> {
        let mut d = vec![self.token_dim];
        d.extend(&self.head_hidden);
        d.push(self.channels);
        d
    }

    pub fn patch_out(&self) -> usize {
        *self.patch_hidden.last().expect("validated")
    }
}

/// One decoder block; the same weights serve both attention directions.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderBlock<F> {
    pub ln1: LayerNorm<F>,
    pub q: Linear<F>,
    pub k: Linear<F>,
    pub v: Linear<F>,
    pub o: Linear<F>,
    pub ln2: LayerNorm<F>,
    pub ff: Mlp<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<F> {
    pub patch: Mlp<F>,
    pub role_proj: Linear<F>,
    pub pos: Mlp<F>,
    pub blocks: Vec<DecoderBlock<F>>,
    pub head: Mlp<F>,
}

impl<F: Real> ModelParams<F> {
    /// Seeded He-uniform initialization.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let d = config.token_dim;
        let patch = Mlp::he_uniform(&config.patch_dims(), &mut rng);
        let role_proj = Linear::he_uniform(config.patch_out() + 2, d, &mut rng);
        let pos = Mlp::he_uniform(&[3, config.pos_dim, d], &mut rng);
        let blocks = (0..config.decoder_blocks)
            .map(|_| DecoderBlock {
                ln1: LayerNorm::new(d),
                q: Linear::he_uniform(d, d, &mut rng),
                k: Linear::he_uniform(d, d, &mut rng),
                v: Linear::he_uniform(d, d, &mut rng),
                o: Linear::he_uniform(d, d, &mut rng),
                ln2: LayerNorm::new(d),
                ff: Mlp::he_uniform(&[d, config.ff_hidden, d], &mut rng),
            })
            .collect();
        let head = Mlp::he_uniform(&config.head_dims(), &mut rng);
        Ok(Self {
            patch,
            role_proj,
            pos,
            blocks,
            head,
        })
    }

    /// All-zero tensors with the shapes implied by `config`.
    pub fn zeros(config: &ModelConfig) -> Self {
        let d = config.token_dim;
        Self {
            patch: Mlp::zeros(&config.patch_dims()),
            role_proj: Linear::zeros(config.patch_out() + 2, d),
            pos: Mlp::zeros(&[3, config.pos_dim, d]),
            blocks: (0..config.decoder_blocks)
                .map(|_| DecoderBlock {
                    ln1: LayerNorm::zeros(d),
                    q: Linear::zeros(d, d),
                    k: Linear::zeros(d, d),
                    v: Linear::zeros(d, d),
                    o: Linear::zeros(d, d),
                    ln2: LayerNorm::zeros(d),
                    ff: Mlp::zeros(&[d, config.ff_hidden, d]),
                })
                .collect(),
            head: Mlp::zeros(&config.head_dims()),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(F::zero());
        }
        z
    }

    /// Named tensors with their shapes, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[F])> {
        let mut out = Vec::new();
        fn lin<'a, F: Real>(out: &mut Vec<(String, Vec<usize>, &'a [F])>, name: &str, l: &'a Linear<F>) {
            out.push((format!("{name}.weight"), vec![l.w.rows, l.w.cols], &l.w.data));
            out.push((format!("{name}.bias"), vec![l.b.len()], &l.b));
        }
        fn mlp<'a, F: Real>(out: &mut Vec<(String, Vec<usize>, &'a [F])>, name: &str, m: &'a Mlp<F>) {
            for (i, l) in m.layers.iter().enumerate() {
                lin(out, &format!("{name}.{i}"), l);
            }
        }
        fn ln<'a, F: Real>(out: &mut Vec<(String, Vec<usize>, &'a [F])>, name: &str, n: &'a LayerNorm<F>) {
            out.push((format!("{name}.gain"), vec![n.gain.len()], &n.gain));
            out.push((format!("{name}.bias"), vec![n.bias.len()], &n.bias));
        }
        mlp(&mut out, "patch", &self.patch);
        lin(&mut out, "role_proj", &self.role_proj);
        mlp(&mut out, "pos", &self.pos);
        for (i, b) in self.blocks.iter().enumerate() {
            let p = format!("blocks.{i}");
            ln(&mut out, &format!("{p}.ln1"), &b.ln1);
            lin(&mut out, &format!("{p}.attn.q"), &b.q);
            lin(&mut out, &format!("{p}.attn.k"), &b.k);
            lin(&mut out, &format!("{p}.attn.v"), &b.v);
            lin(&mut out, &format!("{p}.attn.o"), &b.o);
            ln(&mut out, &format!("{p}.ln2"), &b.ln2);
            mlp(&mut out, &format!("{p}.ff"), &b.ff);
        }
        mlp(&mut out, "head", &self.head);
        out
    }

    /// Mutable tensors in the same order as [`ModelParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [F]> {
        let mut out: Vec<&mut [F]> = Vec::new();
        fn lin<'a, F>(out: &mut Vec<&'a mut [F]>, l: &'a mut Linear<F>) {
            out.push(&mut l.w.data);
            out.push(&mut l.b);
        }
        fn mlp<'a, F>(out: &mut Vec<&'a mut [F]>, m: &'a mut Mlp<F>) {
            for l in m.layers.iter_mut() {
                lin(out, l);
            }
        }
        mlp(&mut out, &mut self.patch);
        lin(&mut out, &mut self.role_proj);
        mlp(&mut out, &mut self.pos);
        for b in self.blocks.iter_mut() {
            out.push(&mut b.ln1.gain);
            out.push(&mut b.ln1.bias);
            lin(&mut out, &mut b.q);
            lin(&mut out, &mut b.k);
            lin(&mut out, &mut b.v);
            lin(&mut out, &mut b.o);
            out.push(&mut b.ln2.gain);
            out.push(&mut b.ln2.bias);
            mlp(&mut out, &mut b.ff);
        }
        mlp(&mut out, &mut self.head);
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, _, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, _, t)| t.iter().all(|v| v.is_finite()))
    }

    pub fn cast<G: Real>(&self, config: &ModelConfig) -> ModelParams<G> {
        let mut out = ModelParams::<G>::zeros(config);
        let src = self.tensors();
        for (dst, (_, _, s)) in out.tensors_mut().into_iter().zip(src) {
            for (d, v) in dst.iter_mut().zip(s) {
                *d = G::c(v.to_f64().unwrap_or(f64::NAN));
            }
        }
        out
    }
}
