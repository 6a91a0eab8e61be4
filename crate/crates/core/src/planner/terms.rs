//! Constraint term evaluation.

use kiddo::{ImmutableKdTree, SquaredEuclidean};
use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use super::spec::{ConstraintSpec, ConstraintTerm, TermKind, TermParams};
use crate::cloud::{FeatureCloud, Point3};
use crate::error::{Error, Result};
use crate::se3::{RigidTransform, GRAVITY};

/// Affordance threshold for region membership.
pub const REGION_THRESHOLD: f64 = 0.5;
/// Below this many qualifying points the region falls back to the top scorers.
pub const REGION_MIN_POINTS: usize = 10;
pub const REGION_FALLBACK: usize = 50;

/// Relative eigenvalue cutoff for rank decisions.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub indices: Vec<usize>,
    pub points: Vec<Point3>,
    pub weights: Vec<f64>,
}

impl Region {
    /// `Σ wᵢxᵢ / Σ wᵢ`
    pub fn weighted_centroid(&self) -> Point3 {
        weighted_centroid(&self.points, &self.weights)
    }
}

/// Points whose affordance reaches [`REGION_THRESHOLD`], weighted by it.
/// When fewer than [`REGION_MIN_POINTS`] qualify, the [`REGION_FALLBACK`]
/// highest-scoring points are taken instead (ties by lowest index).
pub fn high_affordance_region(cloud: &FeatureCloud, channel: usize) -> Result<Region> {
    let a = cloud
        .affordance_channel(channel)
        .ok_or_else(|| Error::invalid(format!("cloud has no affordance channel {channel}")))?;
    if a.iter().all(|&v| v <= 0.0) {
        return Err(Error::invalid("no functional region"));
    }
    let mut indices: Vec<usize> = (0..a.len()).filter(|&i| a[i] >= REGION_THRESHOLD).collect();
    if indices.len() < REGION_MIN_POINTS {
        let mut order: Vec<usize> = (0..a.len()).collect();
        order.sort_by(|&i, &j| a[j].total_cmp(&a[i]).then(i.cmp(&j)));
        order.truncate(REGION_FALLBACK);
        order.sort_unstable();
        indices = order;
    }
    Ok(Region {
        points: indices.iter().map(|&i| cloud.points()[i]).collect(),
        weights: indices.iter().map(|&i| a[i]).collect(),
        indices,
    })
}

fn weighted_centroid(points: &[Point3], w: &[f64]) -> Point3 {
    let mut c = [0.0; 3];
    let mut total = 0.0;
    for (p, &wi) in points.iter().zip(w) {
        for d in 0..3 {
            c[d] += wi * p[d];
        }
        total += wi;
    }
    c.map(|v| v / total)
}

/// Eigenvectors of the weighted covariance, sorted by descending eigenvalue,
/// plus the numerical rank.
fn weighted_pca(points: &[Point3], w: &[f64]) -> ([Vector3<f64>; 3], usize) {
    let mu = Vector3::from(weighted_centroid(points, w));
    let total: f64 = w.iter().sum();
    let mut cov = Matrix3::zeros();
    for (p, &wi) in points.iter().zip(w) {
        let d = Vector3::from(*p) - mu;
        cov += d * d.transpose() * wi;
    }
    cov /= total;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let rank = if top <= f64::MIN_POSITIVE {
        0
    } else {
        order.iter().filter(|&&i| eig.eigenvalues[i] > RANK_TOL * top).count()
    };
    (order.map(|i| eig.eigenvectors.column(i).into_owned()), rank)
}

type Tree = ImmutableKdTree<f64, 3>;

fn tree(points: &[Point3]) -> Tree {
    Tree::new_from_slice(points).expect("non-empty finite point set")
}

fn nn_dist(tree: &Tree, p: &Point3) -> f64 {
    tree.query(p).nearest_one::<SquaredEuclidean<f64>>().execute().distance.sqrt()
}

/// Source and target with everything a candidate transform does not change
/// computed once. All source quantities are in the source's own frame.
pub struct PlannerScene {
    channel: usize,
    src_points: Vec<Point3>,
    src_region: Region,
    src_region_centroid: Point3,
    src_com: Point3,
    /// Affordance-weighted principal axis, or the reason it is undefined.
    src_axis: std::result::Result<Vector3<f64>, String>,
    tgt_tree: Tree,
    tgt_region: Region,
    tgt_region_tree: Tree,
    tgt_region_centroid: Point3,
    tgt_box: (Point3, Point3),
    tgt_normal: std::result::Result<Vector3<f64>, String>,
}

impl PlannerScene {
    pub fn new(src: &FeatureCloud, tgt: &FeatureCloud, channel: usize) -> Result<Self> {
        if src.is_empty() || tgt.is_empty() {
            return Err(Error::invalid("empty cloud"));
        }
        let src_region = high_affordance_region(src, channel)?;
        let tgt_region = high_affordance_region(tgt, channel)?;
        let a = src.affordance_channel(channel).expect("checked by region");
        let (axes, rank) = weighted_pca(src.points(), &a);
        let src_axis = if rank >= 1 {
            Ok(axes[0])
        } else {
            Err("source affordance has no principal axis (rank 0)".to_string())
        };
        let (taxes, trank) = weighted_pca(&tgt_region.points, &tgt_region.weights);
        let tgt_normal = if trank >= 2 {
            Ok(taxes[2])
        } else {
            Err(format!("target region has rank {trank}, a normal needs 2"))
        };
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &tgt_region.points {
            for d in 0..3 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        Ok(Self {
            channel,
            src_points: src.points().to_vec(),
            src_region_centroid: src_region.weighted_centroid(),
            src_com: src.centroid(),
            src_region,
            src_axis,
            tgt_tree: tree(tgt.points()),
            tgt_region_tree: tree(&tgt_region.points),
            tgt_region_centroid: tgt_region.weighted_centroid(),
            tgt_region,
            tgt_box: (lo, hi),
            tgt_normal,
        })
    }

    pub fn channel(&self) -> usize {
        self.channel
    }

    pub fn src_region(&self) -> &Region {
        &self.src_region
    }

    pub fn tgt_region(&self) -> &Region {
        &self.tgt_region
    }

    pub fn src_region_centroid(&self) -> Point3 {
        self.src_region_centroid
    }

    pub fn tgt_region_centroid(&self) -> Point3 {
        self.tgt_region_centroid
    }

    /// Score of one term under `t` applied to the source; lower is better.
    pub fn eval_term(&self, term: &ConstraintTerm, t: &RigidTransform) -> Result<f64> {
        let fail = |msg: String| Error::Constraint {
            term: term.kind.name().to_string(),
            msg,
        };
        let score = match term.params {
            TermParams::AffordanceAlignment => {
                let c = t.apply_point(&self.src_region_centroid);
                crate::cloud::dist(&c, &self.tgt_region_centroid)
            }
            TermParams::PositionAbove { delta } => {
                let s = t.apply_point(&self.src_region_centroid);
                let g = self.tgt_region_centroid;
                let lift = (g[2] + delta - s[2]).max(0.0);
                lift + (s[0] - g[0]).hypot(s[1] - g[1])
            }
            TermParams::OrientationTilt { min_deg, max_deg } => {
                let axis = self.src_axis.as_ref().map_err(|m| fail(m.clone()))?;
                let angle = tilt_degrees(&t.rotation * axis);
                let out = if angle < min_deg {
                    min_deg - angle
                } else if angle > max_deg {
                    angle - max_deg
                } else {
                    0.0
                };
                out / 90.0
            }
            TermParams::Clearance { d_min } => {
                let min = self
                    .src_points
                    .iter()
                    .map(|p| nn_dist(&self.tgt_tree, &t.apply_point(p)))
                    .fold(f64::INFINITY, f64::min);
                (d_min - min).max(0.0) / d_min
            }
            TermParams::ContactQuality => {
                let sum: f64 = self
                    .src_region
                    .points
                    .iter()
                    .map(|p| nn_dist(&self.tgt_region_tree, &t.apply_point(p)))
                    .sum();
                sum / self.src_region.points.len() as f64
            }
            TermParams::Stability => {
                let z_contact = self
                    .tgt_region
                    .points
                    .iter()
                    .map(|p| p[2])
                    .fold(f64::NEG_INFINITY, f64::max);
                (t.apply_point(&self.src_com)[2] - z_contact).max(0.0)
            }
            TermParams::Perpendicular => {
                let axis = self.src_axis.as_ref().map_err(|m| fail(m.clone()))?;
                let normal = self.tgt_normal.as_ref().map_err(|m| fail(m.clone()))?;
                let a = t.rotation * axis;
                1.0 - (a.dot(normal) / (a.norm() * normal.norm())).abs().min(1.0)
            }
            TermParams::Containment { margin } => {
                let (lo, hi) = self.tgt_box;
                let outside = self
                    .src_region
                    .points
                    .iter()
                    .filter(|p| {
                        let q = t.apply_point(p);
                        (0..3).any(|d| q[d] < lo[d] - margin || q[d] > hi[d] + margin)
                    })
                    .count();
                outside as f64 / self.src_region.points.len() as f64
            }
            TermParams::Collision { r_pen } => {
                let sum: f64 = self
                    .src_points
                    .iter()
                    .map(|p| {
                        let pen = (r_pen - nn_dist(&self.tgt_tree, &t.apply_point(p))).max(0.0);
                        pen * pen
                    })
                    .sum();
                sum / (self.src_points.len() as f64 * r_pen * r_pen)
            }
        };
        Ok(score)
    }

    /// `(Σ λᵢ·scoreᵢ, [scoreᵢ])` in spec order.
    pub fn objective(&self, spec: &ConstraintSpec, t: &RigidTransform) -> Result<(f64, Vec<f64>)> {
        let scores = spec
            .terms
            .iter()
            .map(|term| self.eval_term(term, t))
            .collect::<Result<Vec<_>>>()?;
        let total = spec.terms.iter().zip(&scores).map(|(term, s)| term.weight * s).sum();
        Ok((total, scores))
    }

    /// Checks that every term of `spec` can be evaluated on this scene.
    pub fn check(&self, spec: &ConstraintSpec) -> Result<()> {
        for term in &spec.terms {
            let needs_axis = matches!(term.kind, TermKind::OrientationTilt | TermKind::Perpendicular);
            if needs_axis {
                self.eval_term(term, &RigidTransform::identity())?;
            }
        }
        Ok(())
    }
}

/// Angle in degrees in [0, 90] between an undirected axis and gravity.
pub fn tilt_degrees(axis: Vector3<f64>) -> f64 {
    let g = Vector3::from(GRAVITY);
    (axis.dot(&g).abs() / axis.norm()).min(1.0).acos().to_degrees()
}

/// Single-term convenience wrapper around [`PlannerScene::eval_term`].
pub fn eval_term(
    term: &ConstraintTerm,
    src: &FeatureCloud,
    tgt: &FeatureCloud,
    channel: usize,
    t: &RigidTransform,
) -> Result<f64> {
    PlannerScene::new(src, tgt, channel)?.eval_term(term, t)
}

pub fn objective(
    spec: &ConstraintSpec,
    src: &FeatureCloud,
    tgt: &FeatureCloud,
    channel: usize,
    t: &RigidTransform,
) -> Result<(f64, Vec<f64>)> {
    PlannerScene::new(src, tgt, channel)?.objective(spec, t)
}
