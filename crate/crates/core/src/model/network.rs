//! Forward and backward passes of the affordance network.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::geometry::{fps, knn_indices, nearest_center};
use super::layers::{sigmoid, softmax_in_place, LnCache, MlpCache};
use super::params::{AttentionMode, DecoderBlock, ModelConfig, ModelParams};
use super::tensor::{Mat, Real};
use crate::cloud::{normalize_pair, FeatureCloud, ObjectPair, Point3};
use crate::error::{Error, Result};

/// Predictions are clamped into `[PRED_CLAMP, 1 - PRED_CLAMP]` inside the loss.
pub const PRED_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Source,
    Target,
}

impl Role {
    pub fn index(self) -> usize {
        match self {
            Role::Source => 0,
            Role::Target => 1,
        }
    }
}

/// Patch tokens of one object.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenBatch<F> {
    pub tokens: Mat<F>,
    pub centers: Vec<Point3>,
    pub role: Role,
}

/// Sampling and grouping of one normalized object.
#[derive(Debug, Clone)]
pub struct Grouping<F> {
    pub center_idx: Vec<usize>,
    pub centers: Vec<Point3>,
    /// `(T·k) × (3 + n)` patch rows, patch-major.
    pub patch_rows: Mat<F>,
    /// Nearest center of every point.
    pub assign: Vec<usize>,
}

/// Samples centers, groups neighbors and assigns points for a cloud that is
/// already normalized.
pub fn group_cloud<F: Real>(cloud: &FeatureCloud, config: &ModelConfig) -> Result<Grouping<F>> {
    if cloud.feature_dim() != config.feature_dim {
        return Err(Error::Dimension(format!(
            "cloud feature dim {} != model feature dim {}",
            cloud.feature_dim(),
            config.feature_dim
        )));
    }
    let pts = cloud.points();
    let center_idx = fps(pts, config.num_groups)?;
    let centers: Vec<Point3> = center_idx.iter().map(|&i| pts[i]).collect();
    let groups = knn_indices(pts, &centers, config.group_size, config.group_radius)?;
    let n = config.feature_dim;
    let k = config.group_size;
    let mut patch_rows = Mat::zeros(centers.len() * k, 3 + n);
    for (t, (g, c)) in groups.iter().zip(&centers).enumerate() {
        for (r, &i) in g.iter().enumerate() {
            let row = patch_rows.row_mut(t * k + r);
            let p = pts[i];
            for a in 0..3 {
                row[a] = F::c(p[a] - c[a]);
            }
            for (dst, src) in row[3..].iter_mut().zip(cloud.feature(i)) {
                *dst = F::c(*src);
            }
        }
    }
    let assign = nearest_center(pts, &centers);
    Ok(Grouping {
        center_idx,
        centers,
        patch_rows,
        assign,
    })
}

fn max_pool<F: Real>(e: &Mat<F>, k: usize) -> (Mat<F>, Vec<usize>) {
    let t = e.rows / k;
    let mut out = Mat::zeros(t, e.cols);
    let mut arg = vec![0usize; t * e.cols];
    for p in 0..t {
        for c in 0..e.cols {
            let mut best = (p * k, e.at(p * k, c));
            for r in 1..k {
                let v = e.at(p * k + r, c);
                if v > best.1 {
                    best = (p * k + r, v);
                }
            }
            out.data[p * e.cols + c] = best.1;
            arg[p * e.cols + c] = best.0;
        }
    }
    (out, arg)
}

/// Encodes one `k × (3 + n)` patch into a single vector by a shared
/// per-row MLP followed by a coordinate-wise max.
pub fn patch_encode<F: Real>(patch: &Mat<F>, params: &ModelParams<F>) -> Vec<F> {
    let e = params.patch.forward(patch);
    max_pool(&e, patch.rows).0.data
}

struct TokCache<F> {
    patch: MlpCache<F>,
    pool_arg: Vec<usize>,
    pool_rows: usize,
    role_in: Mat<F>,
    pos: MlpCache<F>,
}

fn centers_mat<F: Real>(centers: &[Point3]) -> Mat<F> {
    Mat::from_vec(
        centers.len(),
        3,
        centers.iter().flat_map(|c| c.iter().map(|v| F::c(*v))).collect(),
    )
}

fn tokenize_cached<F: Real>(
    g: &Grouping<F>,
    role: Role,
    params: &ModelParams<F>,
    config: &ModelConfig,
) -> (Mat<F>, TokCache<F>) {
    let (e, patch) = params.patch.forward_cached(&g.patch_rows);
    let (m, pool_arg) = max_pool(&e, config.group_size);
    let h = m.cols;
    let mut role_in = Mat::zeros(m.rows, h + 2);
    role_in.set_cols(0, &m);
    for t in 0..m.rows {
        role_in.row_mut(t)[h + role.index()] = F::one();
    }
    let mut z = params.role_proj.forward(&role_in);
    let (p, pos) = params.pos.forward_cached(&centers_mat(&g.centers));
    z.add_assign(&p);
    (
        z,
        TokCache {
            patch,
            pool_arg,
            pool_rows: e.rows,
            role_in,
            pos,
        },
    )
}

fn tokenize_backward<F: Real>(
    cache: &TokCache<F>,
    dz: &Mat<F>,
    params: &ModelParams<F>,
    grad: &mut ModelParams<F>,
) {
    let dx = params.role_proj.backward(&cache.role_in, dz, &mut grad.role_proj);
    let h = dx.cols - 2;
    let mut de = Mat::zeros(cache.pool_rows, h);
    for t in 0..dx.rows {
        for c in 0..h {
            let r = cache.pool_arg[t * h + c];
            de.data[r * h + c] += dx.at(t, c);
        }
    }
    params.patch.backward(&cache.patch, &de, &mut grad.patch, false);
    params.pos.backward(&cache.pos, dz, &mut grad.pos, false);
}

/// Row chosen by the max-pool for every (patch, channel) of both objects.
pub(crate) fn pooling_pattern<F: Real>(
    gs: &Grouping<F>,
    gt: &Grouping<F>,
    params: &ModelParams<F>,
    config: &ModelConfig,
) -> Vec<usize> {
    let mut out = max_pool(&params.patch.forward(&gs.patch_rows), config.group_size).1;
    out.extend(max_pool(&params.patch.forward(&gt.patch_rows), config.group_size).1);
    out
}

/// Tokens of a normalized cloud.
pub fn tokenize<F: Real>(
    cloud: &FeatureCloud,
    role: Role,
    params: &ModelParams<F>,
    config: &ModelConfig,
) -> Result<TokenBatch<F>> {
    let g = group_cloud::<F>(cloud, config)?;
    let (tokens, _) = tokenize_cached(&g, role, params, config);
    Ok(TokenBatch {
        tokens,
        centers: g.centers,
        role,
    })
}

struct AttnCache<F> {
    xq: Mat<F>,
    xkv: Mat<F>,
    q: Mat<F>,
    k: Mat<F>,
    v: Mat<F>,
    probs: Vec<Mat<F>>,
    masks: Option<Vec<Mat<F>>>,
    o: Mat<F>,
}

fn attention_cached<F: Real>(
    b: &DecoderBlock<F>,
    xq: &Mat<F>,
    xkv: &Mat<F>,
    heads: usize,
    dropout: f64,
    mut rng: Option<&mut ChaCha8Rng>,
) -> (Mat<F>, AttnCache<F>) {
    let d = b.q.output_dim();
    let dh = d / heads;
    let scale = F::c(1.0 / (dh as f64).sqrt());
    let q = b.q.forward(xq);
    let k = b.k.forward(xkv);
    let v = b.v.forward(xkv);
    let mut o = Mat::zeros(xq.rows, d);
    let mut probs = Vec::with_capacity(heads);
    let use_drop = rng.is_some() && dropout > 0.0;
    let mut masks = if use_drop { Some(Vec::with_capacity(heads)) } else { None };
    let keep = F::c(1.0 / (1.0 - dropout));
    for h in 0..heads {
        let qh = q.cols_slice(h * dh, dh);
        let kh = k.cols_slice(h * dh, dh);
        let vh = v.cols_slice(h * dh, dh);
        let mut s = qh.matmul_t(&kh);
        for x in s.data.iter_mut() {
            *x *= scale;
        }
        for r in 0..s.rows {
            softmax_in_place(s.row_mut(r));
        }
        let oh = if let (Some(ms), Some(rng)) = (masks.as_mut(), rng.as_deref_mut()) {
            let mask = Mat::from_vec(
                s.rows,
                s.cols,
                (0..s.data.len())
                    .map(|_| if rng.random::<f64>() < dropout { F::zero() } else { keep })
                    .collect(),
            );
            let pd = Mat::from_vec(
                s.rows,
                s.cols,
                s.data.iter().zip(&mask.data).map(|(p, m)| *p * *m).collect(),
            );
            ms.push(mask);
            pd.matmul(&vh)
        } else {
            s.matmul(&vh)
        };
        o.set_cols(h * dh, &oh);
        probs.push(s);
    }
    let y = b.o.forward(&o);
    (
        y,
        AttnCache {
            xq: xq.clone(),
            xkv: xkv.clone(),
            q,
            k,
            v,
            probs,
            masks,
            o,
        },
    )
}

/// Returns `(dL/dxq, dL/dxkv)`.
fn attention_backward<F: Real>(
    b: &DecoderBlock<F>,
    c: &AttnCache<F>,
    dy: &Mat<F>,
    g: &mut DecoderBlock<F>,
) -> (Mat<F>, Mat<F>) {
    let heads = c.probs.len();
    let d = c.q.cols;
    let dh = d / heads;
    let scale = F::c(1.0 / (dh as f64).sqrt());
    let d_o = b.o.backward(&c.o, dy, &mut g.o);
    let mut dq = Mat::zeros(c.q.rows, d);
    let mut dk = Mat::zeros(c.k.rows, d);
    let mut dv = Mat::zeros(c.v.rows, d);
    for h in 0..heads {
        let p = &c.probs[h];
        let qh = c.q.cols_slice(h * dh, dh);
        let kh = c.k.cols_slice(h * dh, dh);
        let vh = c.v.cols_slice(h * dh, dh);
        let doh = d_o.cols_slice(h * dh, dh);
        let mut dp = doh.matmul_t(&vh);
        let dvh = match &c.masks {
            Some(ms) => {
                let m = &ms[h];
                let pd = Mat::from_vec(
                    p.rows,
                    p.cols,
                    p.data.iter().zip(&m.data).map(|(a, b)| *a * *b).collect(),
                );
                for (x, mm) in dp.data.iter_mut().zip(&m.data) {
                    *x *= *mm;
                }
                pd.t_matmul(&doh)
            }
            None => p.t_matmul(&doh),
        };
        let mut ds = Mat::zeros(p.rows, p.cols);
        for r in 0..p.rows {
            let pr = p.row(r);
            let dpr = dp.row(r);
            let dot: F = pr.iter().zip(dpr).map(|(a, b)| *a * *b).sum();
            for (o, (a, b)) in ds.row_mut(r).iter_mut().zip(pr.iter().zip(dpr)) {
                *o = *a * (*b - dot) * scale;
            }
        }
        dq.set_cols(h * dh, &ds.matmul(&kh));
        dk.set_cols(h * dh, &ds.t_matmul(&qh));
        dv.set_cols(h * dh, &dvh);
    }
    let dxq = b.q.backward(&c.xq, &dq, &mut g.q);
    let mut dxkv = b.k.backward(&c.xkv, &dk, &mut g.k);
    dxkv.add_assign(&b.v.backward(&c.xkv, &dv, &mut g.v));
    (dxq, dxkv)
}

/// Multi-head scaled dot-product attention of `q_tokens` over `kv_tokens`
/// with the block's projections. Dropout on the attention probabilities is
/// applied only when an RNG is supplied.
pub fn cross_attention<F: Real>(
    q_tokens: &Mat<F>,
    kv_tokens: &Mat<F>,
    block: &DecoderBlock<F>,
    config: &ModelConfig,
    rng: Option<&mut ChaCha8Rng>,
) -> Mat<F> {
    attention_cached(block, q_tokens, kv_tokens, config.heads, config.dropout, rng).0
}

struct StreamCache<F> {
    ln1: LnCache<F>,
    attn: AttnCache<F>,
    ln2: LnCache<F>,
    ff: MlpCache<F>,
}

struct BlockCache<F> {
    s: StreamCache<F>,
    t: StreamCache<F>,
}

fn block_forward<F: Real>(
    b: &DecoderBlock<F>,
    s: &Mat<F>,
    t: &Mat<F>,
    config: &ModelConfig,
    mut rng: Option<&mut ChaCha8Rng>,
) -> (Mat<F>, Mat<F>, BlockCache<F>) {
    let eps = F::c(config.norm_epsilon);
    let (sn, ln1_s) = b.ln1.forward(s, eps);
    let (tn, ln1_t) = b.ln1.forward(t, eps);
    let (kv_s, kv_t) = match config.attention {
        AttentionMode::Joint => (&tn, &sn),
        AttentionMode::SelfOnly => (&sn, &tn),
    };
    let (a_s, attn_s) = attention_cached(b, &sn, kv_s, config.heads, config.dropout, rng.as_deref_mut());
    let (a_t, attn_t) = attention_cached(b, &tn, kv_t, config.heads, config.dropout, rng.as_deref_mut());
    let stream = |x: &Mat<F>, a: Mat<F>, ln1: LnCache<F>, attn: AttnCache<F>| {
        let mut x1 = x.clone();
        x1.add_assign(&a);
        let (x1n, ln2) = b.ln2.forward(&x1, eps);
        let (f, ff) = b.ff.forward_cached(&x1n);
        x1.add_assign(&f);
        (x1, StreamCache { ln1, attn, ln2, ff })
    };
    let (s2, sc) = stream(s, a_s, ln1_s, attn_s);
    let (t2, tc) = stream(t, a_t, ln1_t, attn_t);
    (s2, t2, BlockCache { s: sc, t: tc })
}

fn block_backward<F: Real>(
    b: &DecoderBlock<F>,
    c: &BlockCache<F>,
    ds2: &Mat<F>,
    dt2: &Mat<F>,
    config: &ModelConfig,
    g: &mut DecoderBlock<F>,
) -> (Mat<F>, Mat<F>) {
    let through_ff = |sc: &StreamCache<F>, dy: &Mat<F>, g: &mut DecoderBlock<F>| {
        let dxn = b.ff.backward(&sc.ff, dy, &mut g.ff, true).expect("input grad");
        let mut dx1 = b.ln2.backward(&sc.ln2, &dxn, &mut g.ln2);
        dx1.add_assign(dy);
        dx1
    };
    let ds1 = through_ff(&c.s, ds2, g);
    let dt1 = through_ff(&c.t, dt2, g);
    let (mut dsn, dkv_s) = attention_backward(b, &c.s.attn, &ds1, g);
    let (mut dtn, dkv_t) = attention_backward(b, &c.t.attn, &dt1, g);
    match config.attention {
        AttentionMode::Joint => {
            dtn.add_assign(&dkv_s);
            dsn.add_assign(&dkv_t);
        }
        AttentionMode::SelfOnly => {
            dsn.add_assign(&dkv_s);
            dtn.add_assign(&dkv_t);
        }
    }
    let mut ds = b.ln1.backward(&c.s.ln1, &dsn, &mut g.ln1);
    ds.add_assign(&ds1);
    let mut dt = b.ln1.backward(&c.t.ln1, &dtn, &mut g.ln1);
    dt.add_assign(&dt1);
    (ds, dt)
}

/// Runs every decoder block; both streams of a block read that block's input.
pub fn joint_decode<F: Real>(
    z_src: &Mat<F>,
    z_tgt: &Mat<F>,
    params: &ModelParams<F>,
    config: &ModelConfig,
    rng: Option<&mut ChaCha8Rng>,
) -> (Mat<F>, Mat<F>) {
    let (s, t, _) = decode_cached(z_src, z_tgt, params, config, rng);
    (s, t)
}

fn decode_cached<F: Real>(
    z_src: &Mat<F>,
    z_tgt: &Mat<F>,
    params: &ModelParams<F>,
    config: &ModelConfig,
    mut rng: Option<&mut ChaCha8Rng>,
) -> (Mat<F>, Mat<F>, Vec<BlockCache<F>>) {
    let mut s = z_src.clone();
    let mut t = z_tgt.clone();
    let mut caches = Vec::with_capacity(params.blocks.len());
    for b in &params.blocks {
        let (s2, t2, c) = block_forward(b, &s, &t, config, rng.as_deref_mut());
        s = s2;
        t = t2;
        caches.push(c);
    }
    (s, t, caches)
}

/// Gives every point its nearest center's embedding and applies the head;
/// returns `N × K` probabilities.
pub fn interpolate_and_head<F: Real>(
    h: &Mat<F>,
    centers: &[Point3],
    points: &[Point3],
    params: &ModelParams<F>,
) -> Mat<F> {
    let logits = params.head.forward(h);
    let assign = nearest_center(points, centers);
    gather_probs(&logits, &assign)
}

fn gather_probs<F: Real>(logits: &Mat<F>, assign: &[usize]) -> Mat<F> {
    let k = logits.cols;
    let mut out = Mat::zeros(assign.len(), k);
    for (j, &a) in assign.iter().enumerate() {
        for (o, z) in out.row_mut(j).iter_mut().zip(logits.row(a)) {
            *o = sigmoid(*z);
        }
    }
    out
}

/// Affordance maps `(A_src, A_tgt)` of a pair, each `N × K`.
pub fn forward<F: Real>(
    pair: &ObjectPair,
    params: &ModelParams<F>,
    config: &ModelConfig,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<(Mat<F>, Mat<F>)> {
    let (norm, _) = normalize_pair(pair)?;
    let gs = group_cloud::<F>(&norm.source, config)?;
    let gt = group_cloud::<F>(&norm.target, config)?;
    Ok(forward_grouped(&gs, &gt, params, config, rng))
}

pub(crate) fn forward_grouped<F: Real>(
    gs: &Grouping<F>,
    gt: &Grouping<F>,
    params: &ModelParams<F>,
    config: &ModelConfig,
    rng: Option<&mut ChaCha8Rng>,
) -> (Mat<F>, Mat<F>) {
    let (zs, _) = tokenize_cached(gs, Role::Source, params, config);
    let (zt, _) = tokenize_cached(gt, Role::Target, params, config);
    let (hs, ht, _) = decode_cached(&zs, &zt, params, config, rng);
    let ls = params.head.forward(&hs);
    let lt = params.head.forward(&ht);
    (gather_probs(&ls, &gs.assign), gather_probs(&lt, &gt.assign))
}

/// Mean binary cross-entropy with predictions clamped to `[1e-7, 1 - 1e-7]`.
pub fn bce_loss(pred: &[f64], gt: &[f64]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::Dimension(format!(
            "prediction length {} != label length {}",
            pred.len(),
            gt.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::invalid("empty prediction"));
    }
    let s: f64 = pred
        .iter()
        .zip(gt)
        .map(|(p, y)| {
            let p = p.clamp(PRED_CLAMP, 1.0 - PRED_CLAMP);
            y * p.ln() + (1.0 - y) * (1.0 - p).ln()
        })
        .sum();
    Ok(-s / pred.len() as f64)
}

/// BCE of one object's channel from center logits, and its gradient w.r.t.
/// those logits scaled by `weight`.
fn head_loss<F: Real>(logits: &Mat<F>, assign: &[usize], labels: &[f64], channel: usize, weight: f64) -> (f64, Mat<F>) {
    let n = assign.len() as f64;
    let mut dl = Mat::zeros(logits.rows, logits.cols);
    let mut loss = 0.0;
    for (j, &a) in assign.iter().enumerate() {
        let z = logits.at(a, channel);
        let p = sigmoid(z).to_f64().unwrap_or(f64::NAN);
        let y = labels[j];
        let pc = p.clamp(PRED_CLAMP, 1.0 - PRED_CLAMP);
        loss -= y * pc.ln() + (1.0 - y) * (1.0 - pc).ln();
        if p == pc {
            dl.data[a * logits.cols + channel] += F::c(weight * (p - y) / n);
        }
    }
    (loss / n, dl)
}

/// Per-step loss `(BCE_src + BCE_tgt) / 2` on `channel`; accumulates the
/// gradient into `grad` when given.
#[allow(clippy::too_many_arguments)]
pub(crate) fn loss_and_grad<F: Real>(
    gs: &Grouping<F>,
    gt: &Grouping<F>,
    ys: &[f64],
    yt: &[f64],
    channel: usize,
    params: &ModelParams<F>,
    config: &ModelConfig,
    rng: Option<&mut ChaCha8Rng>,
    grad: Option<&mut ModelParams<F>>,
) -> f64 {
    let (zs, tcs) = tokenize_cached(gs, Role::Source, params, config);
    let (zt, tct) = tokenize_cached(gt, Role::Target, params, config);
    let (hs, ht, bcs) = decode_cached(&zs, &zt, params, config, rng);
    let (ls, hcs) = params.head.forward_cached(&hs);
    let (lt, hct) = params.head.forward_cached(&ht);
    let (loss_s, dls) = head_loss(&ls, &gs.assign, ys, channel, 0.5);
    let (loss_t, dlt) = head_loss(&lt, &gt.assign, yt, channel, 0.5);
    let loss = 0.5 * (loss_s + loss_t);
    let Some(g) = grad else {
        return loss;
    };
    let mut ds = params.head.backward(&hcs, &dls, &mut g.head, true).expect("input grad");
    let mut dt = params.head.backward(&hct, &dlt, &mut g.head, true).expect("input grad");
    for (i, b) in params.blocks.iter().enumerate().rev() {
        let (a, c) = block_backward(b, &bcs[i], &ds, &dt, config, &mut g.blocks[i]);
        ds = a;
        dt = c;
    }
    tokenize_backward(&tcs, &ds, params, g);
    tokenize_backward(&tct, &dt, params, g);
    loss
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn random_cloud(n: usize, dim: usize, seed: u64) -> FeatureCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<Point3> = (0..n)
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let f: Vec<f64> = (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        FeatureCloud::new(pts, dim, f).unwrap()
    }

    #[test]
    fn bce_half_is_ln2() {
        let l = bce_loss(&[0.5; 4], &[0.5; 4]).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(bce_loss(&[1.0, 0.0], &[1.0, 0.0]).unwrap() < 1e-6);
        assert!(bce_loss(&[0.5], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn patch_identical_rows() {
        let cfg = ModelConfig::small();
        let p = ModelParams::<f64>::init(&cfg).unwrap();
        let row: Vec<f64> = (0..11).map(|i| (i as f64 * 0.37).sin()).collect();
        let one = patch_encode(&Mat::from_vec(1, 11, row.clone()), &p);
        let many = patch_encode(&Mat::from_vec(5, 11, row.repeat(5)), &p);
        assert_eq!(one, many);
    }

    #[test]
    fn forward_shapes_and_range() {
        let cfg = ModelConfig::small();
        let p = ModelParams::<f64>::init(&cfg).unwrap();
        let pair = ObjectPair::new(
            random_cloud(40, 8, 1),
            random_cloud(50, 8, 2),
            crate::cloud::AffordanceCategory::new(0, "a"),
        )
        .unwrap();
        let (a, b) = forward(&pair, &p, &cfg, None).unwrap();
        assert_eq!((a.rows, a.cols, b.rows, b.cols), (40, 2, 50, 2));
        assert!(a.data.iter().chain(&b.data).all(|v| *v > 0.0 && *v < 1.0));
        let wrong = ModelConfig {
            feature_dim: 4,
            ..cfg.clone()
        };
        assert!(forward(&pair, &ModelParams::<f64>::init(&wrong).unwrap(), &wrong, None).is_err());
    }

    #[test]
    fn attention_rows_collapse_on_equal_values() {
        let cfg = ModelConfig::small();
        let p = ModelParams::<f64>::init(&cfg).unwrap();
        let b = &p.blocks[0];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = Mat::from_vec(5, 32, (0..160).map(|_| rng.random_range(-1.0..1.0)).collect());
        // identical kv rows give identical value rows
        let row: Vec<f64> = (0..32).map(|_| rng.random_range(-1.0..1.0)).collect();
        let kv = Mat::from_vec(7, 32, row.repeat(7));
        let y = cross_attention(&q, &kv, b, &cfg, None);
        let v = b.v.forward(&Mat::from_vec(1, 32, row));
        let want = b.o.forward(&v);
        for r in 0..5 {
            for (a, w) in y.row(r).iter().zip(&want.data) {
                assert!((a - w).abs() < 1e-12);
            }
        }
    }
}
