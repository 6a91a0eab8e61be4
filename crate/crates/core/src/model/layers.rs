//! Dense layers with explicit forward caches and backward passes.

use rand::Rng;

use super::tensor::{Mat, Real};

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_C: f64 = 0.044_715;

/// Affine map `y = x W + b` with `W` stored `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<F> {
    pub w: Mat<F>,
    pub b: Vec<F>,
}

impl<F: Real> Linear<F> {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            w: Mat::zeros(input, output),
            b: vec![F::zero(); output],
        }
    }

    /// He-uniform weights (bound `sqrt(6 / fan_in)`), zero bias.
    pub fn he_uniform<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        let bound = (6.0 / input as f64).sqrt();
        let data = (0..input * output)
            .map(|_| F::c(rng.random_range(-bound..bound)))
            .collect();
        Self {
            w: Mat::from_vec(input, output, data),
            b: vec![F::zero(); output],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.rows
    }

    pub fn output_dim(&self) -> usize {
        self.w.cols
    }

    pub fn forward(&self, x: &Mat<F>) -> Mat<F> {
        let mut y = x.matmul(&self.w);
        for r in 0..y.rows {
            for (v, b) in y.row_mut(r).iter_mut().zip(&self.b) {
                *v += *b;
            }
        }
        y
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: &Mat<F>, dy: &Mat<F>, grad: &mut Linear<F>) -> Mat<F> {
        x.t_matmul_acc(dy, &mut grad.w);
        for r in 0..dy.rows {
            for (g, d) in grad.b.iter_mut().zip(dy.row(r)) {
                *g += *d;
            }
        }
        dy.matmul_t(&self.w)
    }

    /// Parameter gradients only (input gradient not needed).
    pub fn backward_params(&self, x: &Mat<F>, dy: &Mat<F>, grad: &mut Linear<F>) {
        x.t_matmul_acc(dy, &mut grad.w);
        for r in 0..dy.rows {
            for (g, d) in grad.b.iter_mut().zip(dy.row(r)) {
                *g += *d;
            }
        }
    }
}

/// Row-wise layer normalization with learned gain and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm<F> {
    pub gain: Vec<F>,
    pub bias: Vec<F>,
}

#[derive(Debug, Clone)]
pub struct LnCache<F> {
    xhat: Mat<F>,
    inv_std: Vec<F>,
}

impl<F: Real> LayerNorm<F> {
    pub fn new(dim: usize) -> Self {
        Self {
            gain: vec![F::one(); dim],
            bias: vec![F::zero(); dim],
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            gain: vec![F::zero(); dim],
            bias: vec![F::zero(); dim],
        }
    }

    pub fn forward(&self, x: &Mat<F>, eps: F) -> (Mat<F>, LnCache<F>) {
        let d = F::c(x.cols as f64);
        let mut xhat = Mat::zeros(x.rows, x.cols);
        let mut y = Mat::zeros(x.rows, x.cols);
        let mut inv_std = Vec::with_capacity(x.rows);
        for r in 0..x.rows {
            let row = x.row(r);
            let mean = row.iter().copied().sum::<F>() / d;
            let var = row.iter().map(|v| (*v - mean) * (*v - mean)).sum::<F>() / d;
            let is = F::one() / (var + eps).sqrt();
            inv_std.push(is);
            let xh = xhat.row_mut(r);
            for (h, v) in xh.iter_mut().zip(row) {
                *h = (*v - mean) * is;
            }
            let xh = xhat.row(r).to_vec();
            for (j, o) in y.row_mut(r).iter_mut().enumerate() {
                *o = xh[j] * self.gain[j] + self.bias[j];
            }
        }
        (y, LnCache { xhat, inv_std })
    }

    pub fn backward(&self, cache: &LnCache<F>, dy: &Mat<F>, grad: &mut LayerNorm<F>) -> Mat<F> {
        let cols = dy.cols;
        let d = F::c(cols as f64);
        let mut dx = Mat::zeros(dy.rows, cols);
        let mut dxhat = vec![F::zero(); cols];
        for r in 0..dy.rows {
            let g = dy.row(r);
            let xh = cache.xhat.row(r);
            let mut s1 = F::zero();
            let mut s2 = F::zero();
            for j in 0..cols {
                grad.gain[j] += g[j] * xh[j];
                grad.bias[j] += g[j];
                dxhat[j] = g[j] * self.gain[j];
                s1 += dxhat[j];
                s2 += dxhat[j] * xh[j];
            }
            let scale = cache.inv_std[r] / d;
            for (j, o) in dx.row_mut(r).iter_mut().enumerate() {
                *o = scale * (d * dxhat[j] - s1 - xh[j] * s2);
            }
        }
        dx
    }
}

/// Tanh-approximated GELU.
#[inline]
pub fn gelu<F: Real>(x: F) -> F {
    let half = F::c(0.5);
    let inner = F::c(SQRT_2_OVER_PI) * (x + F::c(GELU_C) * x * x * x);
    half * x * (F::one() + inner.tanh())
}

#[inline]
pub fn gelu_grad<F: Real>(x: F) -> F {
    let half = F::c(0.5);
    let k = F::c(SQRT_2_OVER_PI);
    let c = F::c(GELU_C);
    let t = (k * (x + c * x * x * x)).tanh();
    half * (F::one() + t) + half * x * (F::one() - t * t) * k * (F::one() + F::c(3.0) * c * x * x)
}

pub fn gelu_mat<F: Real>(x: &Mat<F>) -> Mat<F> {
    Mat::from_vec(x.rows, x.cols, x.data.iter().map(|v| gelu(*v)).collect())
}

/// `dy ⊙ gelu'(x)`
pub fn gelu_backward<F: Real>(x: &Mat<F>, dy: &Mat<F>) -> Mat<F> {
    Mat::from_vec(
        x.rows,
        x.cols,
        x.data.iter().zip(&dy.data).map(|(a, g)| *g * gelu_grad(*a)).collect(),
    )
}

#[inline]
pub fn sigmoid<F: Real>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

/// In-place numerically stable softmax of a row.
pub fn softmax_in_place<F: Real>(row: &mut [F]) {
    let m = row.iter().copied().fold(F::neg_infinity(), F::max);
    let mut s = F::zero();
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in row.iter_mut() {
        *v /= s;
    }
}

/// Stack of linear layers with GELU between consecutive layers (none after
/// the last).
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<F> {
    pub layers: Vec<Linear<F>>,
}

#[derive(Debug, Clone)]
pub struct MlpCache<F> {
    /// Input of every layer.
    inputs: Vec<Mat<F>>,
    /// Pre-activation of every layer except the last.
    pre: Vec<Mat<F>>,
}

impl<F: Real> Mlp<F> {
    pub fn he_uniform<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Self {
        Self {
            layers: dims
                .windows(2)
                .map(|w| Linear::he_uniform(w[0], w[1], rng))
                .collect(),
        }
    }

    pub fn zeros(dims: &[usize]) -> Self {
        Self {
            layers: dims.windows(2).map(|w| Linear::zeros(w[0], w[1])).collect(),
        }
    }

    pub fn forward(&self, x: &Mat<F>) -> Mat<F> {
        self.forward_cached(x).0
    }

    pub fn forward_cached(&self, x: &Mat<F>) -> (Mat<F>, MlpCache<F>) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len().saturating_sub(1));
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(&h);
            inputs.push(h);
            if i < last {
                h = gelu_mat(&z);
                pre.push(z);
            } else {
                h = z;
            }
        }
        (h, MlpCache { inputs, pre })
    }

    /// Backward pass; returns `dL/dx` if `need_input` is set.
    pub fn backward(
        &self,
        cache: &MlpCache<F>,
        dy: &Mat<F>,
        grad: &mut Mlp<F>,
        need_input: bool,
    ) -> Option<Mat<F>> {
        let mut g = dy.clone();
        for i in (0..self.layers.len()).rev() {
            if i < self.layers.len() - 1 {
                g = gelu_backward(&cache.pre[i], &g);
            }
            if i == 0 && !need_input {
                self.layers[0].backward_params(&cache.inputs[0], &g, &mut grad.layers[0]);
                return None;
            }
            g = self.layers[i].backward(&cache.inputs[i], &g, &mut grad.layers[i]);
        }
        Some(g)
    }
}
