//! Affordance map metrics and evaluation reports.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::ObjectPair;
use crate::data::{load_pair, DatasetManifest};
use crate::error::{Error, Result};
use crate::model::{predict_channel, ModelConfig, ModelParams};

/// Ground truth at or above this value counts as positive.
pub const GT_THRESHOLD: f64 = 0.5;

fn check_len(pred: &[f64], gt: &[f64]) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::Dimension(format!(
            "prediction length {} != label length {}",
            pred.len(),
            gt.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Metric("empty map".into()));
    }
    Ok(())
}

/// Mean IoU over thresholds 0.01..=0.99 of `pred > t` against `gt ≥ 0.5`,
/// in percent. An empty union counts as IoU 1.
pub fn aiou(pred: &[f64], gt: &[f64]) -> Result<f64> {
    check_len(pred, gt)?;
    let mut total = 0.0;
    for i in 1..=99 {
        let t = i as f64 / 100.0;
        let (mut inter, mut union) = (0usize, 0usize);
        for (p, g) in pred.iter().zip(gt) {
            let a = *p > t;
            let b = *g >= GT_THRESHOLD;
            inter += (a && b) as usize;
            union += (a || b) as usize;
        }
        total += if union == 0 { 1.0 } else { inter as f64 / union as f64 };
    }
    Ok(total / 99.0 * 100.0)
}

/// Histogram intersection of the two maps after normalizing each to sum 1.
pub fn sim(pred: &[f64], gt: &[f64]) -> Result<f64> {
    check_len(pred, gt)?;
    if pred.iter().chain(gt).any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(Error::Metric("similarity needs non-negative finite maps".into()));
    }
    let sp: f64 = pred.iter().sum();
    let sg: f64 = gt.iter().sum();
    if sp <= 0.0 || sg <= 0.0 {
        return Err(Error::Metric("undefined similarity: all-zero map".into()));
    }
    Ok(pred.iter().zip(gt).map(|(p, g)| (p / sp).min(g / sg)).sum())
}

pub fn mae(pred: &[f64], gt: &[f64]) -> Result<f64> {
    check_len(pred, gt)?;
    Ok(pred.iter().zip(gt).map(|(p, g)| (p - g).abs()).sum::<f64>() / pred.len() as f64)
}

/// Rank-based (Mann–Whitney) ROC AUC in percent, average ranks on ties.
pub fn auc(pred: &[f64], gt: &[f64]) -> Result<f64> {
    check_len(pred, gt)?;
    let mut order: Vec<usize> = (0..pred.len()).collect();
    order.sort_by(|&a, &b| pred[a].total_cmp(&pred[b]));
    let mut ranks = vec![0.0; pred.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && pred[order[j + 1]] == pred[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    let pos: Vec<usize> = (0..gt.len()).filter(|&k| gt[k] >= GT_THRESHOLD).collect();
    let n_pos = pos.len() as f64;
    let n_neg = (gt.len() - pos.len()) as f64;
    if n_pos == 0.0 || n_neg == 0.0 {
        return Err(Error::Metric("AUC undefined: ground truth has a single class".into()));
    }
    let rank_sum: f64 = pos.iter().map(|&k| ranks[k]).sum();
    Ok((rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg) * 100.0)
}

/// Metrics of one affordance map. `sim`/`auc` are absent where undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectMetrics {
    pub aiou: f64,
    pub sim: Option<f64>,
    pub mae: f64,
    pub auc: Option<f64>,
}

impl ObjectMetrics {
    pub fn compute(pred: &[f64], gt: &[f64]) -> Result<Self> {
        if let Some(v) = pred.iter().chain(gt).find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Metric(format!("map value {v} outside [0,1]")));
        }
        Ok(Self {
            aiou: aiou(pred, gt)?,
            sim: sim(pred, gt).ok(),
            mae: mae(pred, gt)?,
            auc: auc(pred, gt).ok(),
        })
    }
}

/// Averages of the four metrics; a metric defined nowhere is `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub aiou: f64,
    pub sim: Option<f64>,
    pub mae: f64,
    pub auc: Option<f64>,
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

impl MetricSummary {
    fn of<'a, I>(items: I) -> Self
    where
        I: Iterator<Item = &'a MetricSummary> + Clone,
    {
        Self {
            aiou: mean(items.clone().map(|m| m.aiou)).unwrap_or(f64::NAN),
            sim: mean(items.clone().filter_map(|m| m.sim)),
            mae: mean(items.clone().map(|m| m.mae)).unwrap_or(f64::NAN),
            auc: mean(items.filter_map(|m| m.auc)),
        }
    }

    fn from_object(m: &ObjectMetrics) -> Self {
        Self {
            aiou: m.aiou,
            sim: m.sim,
            mae: m.mae,
            auc: m.auc,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleReport {
    pub id: String,
    pub category: String,
    pub category_id: usize,
    pub source: ObjectMetrics,
    pub target: ObjectMetrics,
    /// Mean of the source and target metrics.
    pub mean: MetricSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryReport {
    pub category: String,
    pub category_id: usize,
    pub samples: usize,
    pub mean: MetricSummary,
}

/// Macro-averaged report: objects → sample, samples → category, categories →
/// overall.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub overall: MetricSummary,
    pub categories: Vec<CategoryReport>,
    pub samples: Vec<SampleReport>,
}

impl MetricReport {
    pub fn from_samples(mut samples: Vec<SampleReport>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Dataset("empty evaluation set".into()));
        }
        samples.sort_by(|a, b| a.category_id.cmp(&b.category_id).then_with(|| a.id.cmp(&b.id)));
        let mut categories = Vec::new();
        let mut start = 0;
        while start < samples.len() {
            let id = samples[start].category_id;
            let end = start + samples[start..].iter().take_while(|s| s.category_id == id).count();
            let group = &samples[start..end];
            categories.push(CategoryReport {
                category: group[0].category.clone(),
                category_id: id,
                samples: group.len(),
                mean: MetricSummary::of(group.iter().map(|s| &s.mean)),
            });
            start = end;
        }
        let overall = MetricSummary::of(categories.iter().map(|c| &c.mean));
        Ok(Self {
            overall,
            categories,
            samples,
        })
    }

    /// Aligned text table with columns IOU, SIM, MAE, AUC.
    pub fn table(&self) -> String {
        let opt = |v: Option<f64>, p: usize| v.map_or("n/a".to_string(), |x| format!("{x:.p$}"));
        let mut out = String::new();
        let _ = writeln!(out, "{:<12} {:>7} {:>8} {:>8} {:>8} {:>8}", "category", "samples", "IOU", "SIM", "MAE", "AUC");
        let mut row = |name: &str, n: usize, m: &MetricSummary| {
            let _ = writeln!(
                out,
                "{:<12} {:>7} {:>8.2} {:>8} {:>8.3} {:>8}",
                name,
                n,
                m.aiou,
                opt(m.sim, 3),
                m.mae,
                opt(m.auc, 2)
            );
        };
        for c in &self.categories {
            row(&c.category, c.samples, &c.mean);
        }
        row("overall", self.samples.len(), &self.overall);
        out
    }
}

/// Metrics of one pair given channel predictions for both objects.
pub fn sample_report(id: &str, pair: &ObjectPair, pred_src: &[f64], pred_tgt: &[f64]) -> Result<SampleReport> {
    let ch = pair.category.id;
    let gt = |c: &crate::cloud::FeatureCloud, which: &str| {
        c.affordance_channel(ch)
            .ok_or_else(|| Error::Dataset(format!("{id}: {which} has no affordance channel {ch}")))
    };
    let source = ObjectMetrics::compute(pred_src, &gt(&pair.source, "source")?)?;
    let target = ObjectMetrics::compute(pred_tgt, &gt(&pair.target, "target")?)?;
    let objs = [MetricSummary::from_object(&source), MetricSummary::from_object(&target)];
    Ok(SampleReport {
        id: id.to_string(),
        category: pair.category.name.clone(),
        category_id: ch,
        mean: MetricSummary::of(objs.iter()),
        source,
        target,
    })
}

/// Evaluates labelled pairs `(id, pair)` on each pair's own category channel.
pub fn evaluate_pairs(
    pairs: &[(String, ObjectPair)],
    params: &ModelParams<f32>,
    config: &ModelConfig,
    parallel: bool,
) -> Result<MetricReport> {
    let one = |(id, pair): &(String, ObjectPair)| -> Result<SampleReport> {
        let (ps, pt) = predict_channel(pair, params, config, pair.category.id)?;
        sample_report(id, pair, &ps, &pt)
    };
    let samples = if parallel {
        pairs.par_iter().map(one).collect::<Result<Vec<_>>>()?
    } else {
        pairs.iter().map(one).collect::<Result<Vec<_>>>()?
    };
    MetricReport::from_samples(samples)
}

/// Evaluates every held-out pair listed in the manifest.
pub fn evaluate(
    manifest: &DatasetManifest,
    params: &ModelParams<f32>,
    config: &ModelConfig,
    parallel: bool,
) -> Result<MetricReport> {
    if manifest.num_eval() == 0 {
        return Err(Error::Dataset("empty evaluation set".into()));
    }
    let pairs = manifest
        .eval_samples()
        .map(|p| Ok((p.dir.display().to_string(), load_pair(p)?)))
        .collect::<Result<Vec<_>>>()?;
    evaluate_pairs(&pairs, params, config, parallel)
}
