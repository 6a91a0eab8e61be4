//! Multi-start Nelder–Mead over the 6-parameter pose chart.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::spec::ConstraintSpec;
use super::terms::PlannerScene;
use crate::cloud::FeatureCloud;
use crate::error::{Error, Result};
use crate::se3::{se3_from_params, se3_to_params, RigidTransform};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    pub restarts: usize,
    pub max_iterations: usize,
    pub seed: u64,
    /// Std of the Gaussian offset added to each initial translation.
    pub init_translation_std: f64,
    pub translation_step: f64,
    pub rotation_step: f64,
    /// Stop once `max f − min f` over the simplex falls below this.
    pub tolerance: f64,
    pub parallel: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            restarts: 32,
            max_iterations: 500,
            seed: 0,
            init_translation_std: 0.05,
            translation_step: 0.02,
            rotation_step: 0.1,
            tolerance: 1e-8,
            parallel: false,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::invalid("restarts must be >= 1"));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be >= 1"));
        }
        let positive = [
            ("translation_step", self.translation_step),
            ("rotation_step", self.rotation_step),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be finite and > 0")));
            }
        }
        if !(self.init_translation_std.is_finite() && self.init_translation_std >= 0.0) {
            return Err(Error::invalid("init_translation_std must be finite and >= 0"));
        }
        if !(self.tolerance.is_finite() && self.tolerance >= 0.0) {
            return Err(Error::invalid("tolerance must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TermScore {
    #[serde(rename = "type")]
    pub kind: String,
    pub weight: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub transform: RigidTransform,
    pub total_score: f64,
    pub terms: Vec<TermScore>,
    /// Restarts that finished with a finite score.
    pub restarts_run: usize,
    pub best_restart_index: usize,
    pub iterations: usize,
}

#[derive(Serialize)]
struct ResultJson<'a> {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
    axis_angle: [f64; 3],
    total_score: f64,
    terms: &'a [TermScore],
    restarts_run: usize,
    best_restart_index: usize,
    iterations: usize,
}

impl OptimizationResult {
    pub fn to_json(&self) -> String {
        let r = &self.transform.rotation;
        let p = se3_to_params(&self.transform);
        let doc = ResultJson {
            rotation: [0, 1, 2].map(|i| [r[(i, 0)], r[(i, 1)], r[(i, 2)]]),
            translation: self.transform.translation_array(),
            axis_angle: [p[0], p[1], p[2]],
            total_score: self.total_score,
            terms: &self.terms,
            restarts_run: self.restarts_run,
            best_restart_index: self.best_restart_index,
            iterations: self.iterations,
        };
        serde_json::to_string_pretty(&doc).expect("result serializes")
    }
}

struct LocalResult {
    pose: RigidTransform,
    score: f64,
    iterations: usize,
}

/// Initial pose of restart `r`: restart 0 starts at the identity, every
/// other restart at a seeded uniform rotation whose translation carries the
/// source region centroid onto the target region centroid plus noise.
pub fn initial_pose(scene: &PlannerScene, restart: usize, options: &SolveOptions) -> RigidTransform {
    if restart == 0 {
        return RigidTransform::identity();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    rng.set_stream(restart as u64);
    let mut t = RigidTransform::random_rotation(&mut rng);
    let moved = t.apply_point(&scene.src_region_centroid());
    let goal = scene.tgt_region_centroid();
    let noise = Normal::new(0.0, options.init_translation_std).expect("validated std");
    for d in 0..3 {
        t.translation[d] = goal[d] - moved[d] + noise.sample(&mut rng);
    }
    t
}

/// Local chart around a base pose: `x = (ω, v)` rotates the moved source by
/// `exp(ω)` about `pivot` (the moved region centroid), then shifts it by `v`.
/// Pivoting at the region keeps rotation and translation decoupled.
#[derive(Clone, Copy)]
struct Chart {
    base: RigidTransform,
    pivot: [f64; 3],
}

impl Chart {
    fn new(base: RigidTransform, scene: &PlannerScene) -> Self {
        Self {
            pivot: base.apply_point(&scene.src_region_centroid()),
            base,
        }
    }

    fn pose(&self, x: &[f64; 6]) -> RigidTransform {
        let mut delta = se3_from_params(&[x[0], x[1], x[2], 0.0, 0.0, 0.0]);
        let turned = delta.apply_vector(&self.pivot);
        for d in 0..3 {
            delta.translation[d] = self.pivot[d] - turned[d] + x[3 + d];
        }
        delta.compose(&self.base)
    }
}

fn score(scene: &PlannerScene, spec: &ConstraintSpec, chart: &Chart, x: &[f64; 6]) -> Result<f64> {
    let (total, _) = scene.objective(spec, &chart.pose(x))?;
    Ok(total)
}

/// Standard Nelder–Mead (reflection 1, expansion 2, contraction ½, shrink ½).
/// Returns `Ok(None)` when a non-finite score is met.
fn nelder_mead(
    scene: &PlannerScene,
    spec: &ConstraintSpec,
    chart: &Chart,
    options: &SolveOptions,
) -> Result<Option<LocalResult>> {
    let x0 = [0.0; 6];
    let f = |x: &[f64; 6]| -> Result<Option<f64>> {
        let v = score(scene, spec, chart, x)?;
        Ok(v.is_finite().then_some(v))
    };
    let steps = [
        options.rotation_step,
        options.rotation_step,
        options.rotation_step,
        options.translation_step,
        options.translation_step,
        options.translation_step,
    ];
    let mut simplex: Vec<([f64; 6], f64)> = Vec::with_capacity(7);
    for i in 0..7 {
        let mut x = x0;
        if i > 0 {
            x[i - 1] += steps[i - 1];
        }
        let Some(v) = f(&x)? else { return Ok(None) };
        simplex.push((x, v));
    }
    let mut iterations = 0;
    loop {
        // Stable sort keeps the earlier vertex first among equal scores.
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[6].1 - simplex[0].1;
        if spread < options.tolerance || iterations >= options.max_iterations {
            break;
        }
        iterations += 1;
        let mut c = [0.0; 6];
        for (x, _) in &simplex[..6] {
            for d in 0..6 {
                c[d] += x[d] / 6.0;
            }
        }
        let worst = simplex[6].0;
        let along = |k: f64| -> [f64; 6] { std::array::from_fn(|d| c[d] + k * (worst[d] - c[d])) };
        let xr = along(-1.0);
        let Some(fr) = f(&xr)? else { return Ok(None) };
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let Some(fe) = f(&xe)? else { return Ok(None) };
            simplex[6] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[5].1 {
            simplex[6] = (xr, fr);
            continue;
        }
        let (xc, outside) = if fr < simplex[6].1 { (along(-0.5), true) } else { (along(0.5), false) };
        let Some(fc) = f(&xc)? else { return Ok(None) };
        if (outside && fc <= fr) || (!outside && fc < simplex[6].1) {
            simplex[6] = (xc, fc);
            continue;
        }
        let best = simplex[0].0;
        for v in simplex.iter_mut().skip(1) {
            let x: [f64; 6] = std::array::from_fn(|d| best[d] + 0.5 * (v.0[d] - best[d]));
            let Some(fx) = f(&x)? else { return Ok(None) };
            *v = (x, fx);
        }
    }
    Ok(Some(LocalResult {
        pose: chart.pose(&simplex[0].0),
        score: simplex[0].1,
        iterations,
    }))
}

/// Minimizes the weighted constraint objective over rigid motions of the
/// source. The reduction keeps the lowest score, ties by restart index, so
/// the parallel and sequential modes agree.
pub fn solve_scene(scene: &PlannerScene, spec: &ConstraintSpec, options: &SolveOptions) -> Result<OptimizationResult> {
    options.validate()?;
    scene.check(spec)?;
    let run = |r: usize| -> Result<Option<LocalResult>> {
        let chart = Chart::new(initial_pose(scene, r, options), scene);
        nelder_mead(scene, spec, &chart, options)
    };
    let results: Vec<Result<Option<LocalResult>>> = if options.parallel {
        (0..options.restarts).into_par_iter().map(run).collect()
    } else {
        (0..options.restarts).map(run).collect()
    };
    let mut best: Option<(usize, LocalResult)> = None;
    let mut finished = 0;
    for (r, res) in results.into_iter().enumerate() {
        let Some(local) = res? else { continue };
        finished += 1;
        if best.as_ref().is_none_or(|(_, b)| local.score < b.score) {
            best = Some((r, local));
        }
    }
    let (index, local) = best.ok_or_else(|| Error::Metric("every restart produced a non-finite score".into()))?;
    let transform = local.pose;
    let (total, scores) = scene.objective(spec, &transform)?;
    Ok(OptimizationResult {
        transform,
        total_score: total,
        terms: spec
            .terms
            .iter()
            .zip(scores)
            .map(|(t, s)| TermScore {
                kind: t.kind.name().to_string(),
                weight: t.weight,
                score: s,
            })
            .collect(),
        restarts_run: finished,
        best_restart_index: index,
        iterations: local.iterations,
    })
}

pub fn solve(
    spec: &ConstraintSpec,
    src: &FeatureCloud,
    tgt: &FeatureCloud,
    channel: usize,
    options: &SolveOptions,
) -> Result<OptimizationResult> {
    let scene = PlannerScene::new(src, tgt, channel)?;
    solve_scene(&scene, spec, options)
}
