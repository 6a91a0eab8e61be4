//! Annotation, synthetic object pairs, occlusion and dataset layout.

mod manifest;
pub mod shapes;
pub mod synth;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cloud::{dist, dist2, AffordanceCategory, FeatureCloud, ObjectPair, Point3};
use crate::error::{Error, Result};

pub use manifest::{
    build_manifest, load_pair, write_pair, CategoryEntry, DatasetManifest, PairMeta, PairPaths,
};
pub use synth::{generate_pair, part_vectors, synth_features, FeatureMode, GenOptions, Verb};

/// Label values below this are clamped to zero.
pub const LABEL_FLOOR: f64 = 1e-4;

/// User-assigned contact points with a Gaussian bandwidth.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactAnnotation {
    pub contacts: Vec<Point3>,
    pub sigma: f64,
}

impl ContactAnnotation {
    pub fn new(contacts: Vec<Point3>, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(format!("sigma must be > 0, got {sigma}")));
        }
        Ok(Self { contacts, sigma })
    }

    /// Checks that every contact lies within `tol` of some cloud point.
    pub fn validate_on(&self, cloud: &FeatureCloud, tol: f64) -> Result<()> {
        for (i, c) in self.contacts.iter().enumerate() {
            let d = cloud
                .points()
                .iter()
                .map(|p| dist(p, c))
                .fold(f64::INFINITY, f64::min);
            if d > tol {
                return Err(Error::invalid(format!(
                    "contact {i} lies {d:.3e} from the nearest cloud point"
                )));
            }
        }
        Ok(())
    }
}

/// Value of the decayed label at squared distance `d2`.
#[inline]
pub fn label_value(d2: f64, sigma: f64) -> f64 {
    let v = (-d2 / (2.0 * sigma * sigma)).exp();
    if v < LABEL_FLOOR {
        0.0
    } else {
        v
    }
}

/// Fills `channel` with `max_c exp(-‖x - c‖² / 2σ²)` over the contacts.
pub fn propagate_labels(
    cloud: &FeatureCloud,
    ann: &ContactAnnotation,
    channel: &AffordanceCategory,
) -> Result<FeatureCloud> {
    if ann.contacts.is_empty() {
        return Err(Error::invalid("annotation has no contact points"));
    }
    if cloud.channels() <= channel.id {
        return Err(Error::invalid(format!(
            "cloud has {} affordance channels, channel {} requested",
            cloud.channels(),
            channel.id
        )));
    }
    let values: Vec<f64> = cloud
        .points()
        .iter()
        .map(|x| {
            let d2 = ann
                .contacts
                .iter()
                .map(|c| dist2(x, c))
                .fold(f64::INFINITY, f64::min);
            label_value(d2, ann.sigma)
        })
        .collect();
    let mut out = cloud.clone();
    out.set_affordance_channel(cloud.channels(), channel.id, &values)?;
    Ok(out)
}

/// Outcome of [`apply_occlusion`].
#[derive(Debug, Clone, PartialEq)]
pub struct Occlusion {
    pub cloud: FeatureCloud,
    /// Indices of surviving points in the input cloud, ascending.
    pub kept: Vec<usize>,
    pub center: Point3,
    pub radius: f64,
    pub removed_fraction: f64,
}

/// Band half-width around the requested occlusion level.
pub const OCCLUSION_TOLERANCE: f64 = 0.02;

/// Removes the points inside a spherical occluder centered on a seeded random
/// cloud point, with the radius bisected so the removed fraction lands within
/// ±0.02 of `level`.
pub fn apply_occlusion(cloud: &FeatureCloud, level: f64, seed: u64) -> Result<Occlusion> {
    if !(0.05..=0.6).contains(&level) {
        return Err(Error::invalid(format!(
            "occlusion level must be in [0.05, 0.6], got {level}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center = cloud.points()[rng.random_range(0..cloud.len())];
    let d: Vec<f64> = cloud.points().iter().map(|p| dist(p, &center)).collect();
    let n = cloud.len() as f64;
    let removed = |r: f64| d.iter().filter(|x| **x <= r).count();
    let (lo_band, hi_band) = (level - OCCLUSION_TOLERANCE, level + OCCLUSION_TOLERANCE);
    let (mut lo, mut hi) = (0.0, d.iter().copied().fold(0.0, f64::max));
    let mut found = None;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let frac = removed(mid) as f64 / n;
        if frac < lo_band {
            lo = mid;
        } else if frac > hi_band {
            hi = mid;
        } else {
            found = Some(mid);
            break;
        }
    }
    let radius = found.ok_or_else(|| {
        Error::OcclusionInfeasible(format!("no radius removes {level:.2}±0.02 of the points"))
    })?;
    let kept: Vec<usize> = (0..cloud.len()).filter(|&i| d[i] > radius).collect();
    let removed_fraction = 1.0 - kept.len() as f64 / n;
    Ok(Occlusion {
        cloud: cloud.subset(&kept)?,
        kept,
        center,
        radius,
        removed_fraction,
    })
}

/// Occludes both objects of a pair. The source uses `seed`, the target
/// `seed + 1`; labels follow the surviving points.
pub fn occlude_pair(pair: &ObjectPair, level: f64, seed: u64) -> Result<ObjectPair> {
    let source = apply_occlusion(&pair.source, level, seed)?.cloud;
    let target = apply_occlusion(&pair.target, level, seed.wrapping_add(1))?.cloud;
    ObjectPair::new(source, target, pair.category.clone())
}
