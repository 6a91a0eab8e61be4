//! Finite-difference verification of the analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::layers::Linear;
use super::network::{group_cloud, loss_and_grad, pooling_pattern, Grouping};
use super::params::{ModelConfig, ModelParams};
use super::tensor::Mat;
use crate::cloud::{normalize_cloud, FeatureCloud, Point3};
use crate::error::Result;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-3;

#[derive(Debug, Clone, Serialize)]
pub struct TensorCheck {
    pub name: String,
    pub len: usize,
    pub analytic_norm: f64,
    pub rel_error: f64,
    /// Elements left out because a ±h step crossed a max-pool switch.
    pub kinks_skipped: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub loss: f64,
    pub step: f64,
    pub points: usize,
    pub max_rel_error: f64,
    pub worst_tensor: String,
    /// Loss re-evaluated after a zero perturbation equals the original bitwise.
    pub zero_perturbation_identical: bool,
    pub kinks_skipped: usize,
    pub tensors: Vec<TensorCheck>,
}

/// Norms below this are treated as round-off. The key bias of an attention
/// layer has an identically zero gradient (softmax is shift invariant), so its
/// comparison would otherwise divide noise by noise.
pub const GRAD_NORM_FLOOR: f64 = 1e-6;

/// `‖a − n‖ / max(‖a‖, ‖n‖, GRAD_NORM_FLOOR)`
pub fn relative_error(a: &[f64], n: &[f64]) -> f64 {
    let diff = a.iter().zip(n).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    diff / l2(a).max(l2(n)).max(GRAD_NORM_FLOOR)
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn blob(n: usize, dim: usize, rng: &mut ChaCha8Rng) -> Result<FeatureCloud> {
    let pts: Vec<Point3> = (0..n)
        .map(|_| {
            [
                rng.random_range(-1.0..1.0),
                rng.random_range(-0.6..0.6),
                rng.random_range(-0.8..0.8),
            ]
        })
        .collect();
    let f = (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    Ok(normalize_cloud(&FeatureCloud::new(pts, dim, f)?)?.0)
}

/// Checks every parameter tensor of a freshly initialized network on a
/// random `points`-point pair in 64-bit precision, dropout off.
///
/// The loss is piecewise smooth: max-pooling switches rows at ties. Elements
/// whose ±h perturbation changes the pooling pattern straddle such a switch,
/// where central differences do not estimate the derivative; they are left
/// out of the comparison and counted.
pub fn grad_check(config: &ModelConfig, points: usize, seed: u64) -> Result<GradCheckReport> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let src = blob(points, config.feature_dim, &mut rng)?;
    let tgt = blob(points, config.feature_dim, &mut rng)?;
    let ys: Vec<f64> = (0..points).map(|_| rng.random_range(0.0..1.0)).collect();
    let yt: Vec<f64> = (0..points).map(|_| rng.random_range(0.0..1.0)).collect();
    let gs = group_cloud::<f64>(&src, config)?;
    let gt = group_cloud::<f64>(&tgt, config)?;
    let params = ModelParams::<f64>::init(config)?;
    let channel = 0;
    let eval = |p: &ModelParams<f64>, gs: &Grouping<f64>, gt: &Grouping<f64>| {
        loss_and_grad(gs, gt, &ys, &yt, channel, p, config, None, None)
    };
    let mut grad = params.zeros_like();
    let loss = loss_and_grad(&gs, &gt, &ys, &yt, channel, &params, config, None, Some(&mut grad));

    let mut same = params.clone();
    for t in same.tensors_mut() {
        for v in t.iter_mut() {
            *v += 0.0;
        }
    }
    let zero_perturbation_identical = eval(&same, &gs, &gt).to_bits() == loss.to_bits();

    let names: Vec<(String, usize)> = params
        .tensors()
        .into_iter()
        .map(|(n, _, t)| (n, t.len()))
        .collect();
    let analytic: Vec<Vec<f64>> = grad.tensors().into_iter().map(|(_, _, t)| t.to_vec()).collect();
    let base_pattern = pooling_pattern(&gs, &gt, &params, config);
    let patch_tensors = 2 * params.patch.layers.len();
    let mut work = params.clone();
    let mut tensors = Vec::with_capacity(names.len());
    for (ti, (name, len)) in names.into_iter().enumerate() {
        let mut a = Vec::with_capacity(len);
        let mut numeric = Vec::with_capacity(len);
        let mut kinks = 0;
        for i in 0..len {
            let orig = work.tensors_mut()[ti][i];
            work.tensors_mut()[ti][i] = orig + FD_STEP;
            let lp = eval(&work, &gs, &gt);
            let kp = ti < patch_tensors && pooling_pattern(&gs, &gt, &work, config) != base_pattern;
            work.tensors_mut()[ti][i] = orig - FD_STEP;
            let lm = eval(&work, &gs, &gt);
            let km = ti < patch_tensors && pooling_pattern(&gs, &gt, &work, config) != base_pattern;
            work.tensors_mut()[ti][i] = orig;
            if kp || km {
                kinks += 1;
                continue;
            }
            a.push(analytic[ti][i]);
            numeric.push((lp - lm) / (2.0 * FD_STEP));
        }
        tensors.push(TensorCheck {
            name,
            len,
            analytic_norm: l2(&analytic[ti]),
            rel_error: relative_error(&a, &numeric),
            kinks_skipped: kinks,
        });
    }
    let worst = tensors
        .iter()
        .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
        .expect("at least one tensor");
    Ok(GradCheckReport {
        loss,
        step: FD_STEP,
        points,
        max_rel_error: worst.rel_error,
        worst_tensor: worst.name.clone(),
        zero_perturbation_identical,
        kinks_skipped: tensors.iter().map(|t| t.kinks_skipped).sum(),
        tensors,
    })
}

/// Gradient check of a lone linear layer under `L = Σ tanh(xW + b)²`;
/// returns the maximum relative error over its weight, bias and input.
pub fn linear_grad_check(input: usize, output: usize, rows: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layer = Linear::<f64>::he_uniform(input, output, &mut rng);
    let x = Mat::from_vec(rows, input, (0..rows * input).map(|_| rng.random_range(-1.0..1.0)).collect());
    let loss = |l: &Linear<f64>, x: &Mat<f64>| -> f64 {
        l.forward(x).data.iter().map(|v| v.tanh().powi(2)).sum()
    };
    let y = layer.forward(&x);
    let dy = Mat::from_vec(
        y.rows,
        y.cols,
        y.data
            .iter()
            .map(|v| {
                let t = v.tanh();
                2.0 * t * (1.0 - t * t)
            })
            .collect(),
    );
    let mut g = Linear::zeros(input, output);
    let dx = layer.backward(&x, &dy, &mut g);
    let fd = |f: &dyn Fn(f64) -> f64| (f(FD_STEP) - f(-FD_STEP)) / (2.0 * FD_STEP);
    let nw: Vec<f64> = (0..layer.w.data.len())
        .map(|i| {
            fd(&|h| {
                let mut l = layer.clone();
                l.w.data[i] += h;
                loss(&l, &x)
            })
        })
        .collect();
    let nb: Vec<f64> = (0..output)
        .map(|i| {
            fd(&|h| {
                let mut l = layer.clone();
                l.b[i] += h;
                loss(&l, &x)
            })
        })
        .collect();
    let nx: Vec<f64> = (0..x.data.len())
        .map(|i| {
            fd(&|h| {
                let mut xx = x.clone();
                xx.data[i] += h;
                loss(&layer, &xx)
            })
        })
        .collect();
    relative_error(&g.w.data, &nw)
        .max(relative_error(&g.b, &nb))
        .max(relative_error(&dx.data, &nx))
}
