//! Point clouds carrying per-point semantic features and affordance channels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point3 = [f64; 3];

/// N points with an n-dimensional feature vector each and, optionally,
/// K affordance channels and integer part labels.
///
/// Features and affordance are stored row-major (`features[i * n + j]`).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCloud {
    points: Vec<Point3>,
    feature_dim: usize,
    features: Vec<f64>,
    channels: usize,
    affordance: Option<Vec<f64>>,
    part_labels: Option<Vec<u32>>,
}

impl FeatureCloud {
    pub fn new(points: Vec<Point3>, feature_dim: usize, features: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("N must be ≥ 1"));
        }
        if features.len() != points.len() * feature_dim {
            return Err(Error::Dimension(format!(
                "expected {} feature values for {} points of dim {}, got {}",
                points.len() * feature_dim,
                points.len(),
                feature_dim,
                features.len()
            )));
        }
        if let Some(i) = points.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::invalid(format!("point {i} has a non-finite coordinate")));
        }
        if features.iter().any(|f| !f.is_finite()) {
            return Err(Error::invalid("non-finite feature value"));
        }
        Ok(Self {
            points,
            feature_dim,
            features,
            channels: 0,
            affordance: None,
            part_labels: None,
        })
    }

    /// Cloud with all-zero features of dimension `feature_dim`.
    pub fn from_points(points: Vec<Point3>, feature_dim: usize) -> Result<Self> {
        let n = points.len() * feature_dim;
        Self::new(points, feature_dim, vec![0.0; n])
    }

    pub fn with_affordance(mut self, channels: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.len() * channels {
            return Err(Error::Dimension(format!(
                "expected {} affordance values, got {}",
                self.len() * channels,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("affordance value {v} outside [0,1]")));
        }
        self.channels = channels;
        self.affordance = if channels == 0 { None } else { Some(values) };
        Ok(self)
    }

    pub fn with_part_labels(mut self, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::Dimension(format!(
                "expected {} part labels, got {}",
                self.len(),
                labels.len()
            )));
        }
        self.part_labels = Some(labels);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        &self.features[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    /// Number of affordance channels (0 when absent).
    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn affordance(&self) -> Option<&[f64]> {
        self.affordance.as_deref()
    }

    /// Values of one affordance channel, one per point.
    pub fn affordance_channel(&self, channel: usize) -> Option<Vec<f64>> {
        let a = self.affordance.as_ref()?;
        if channel >= self.channels {
            return None;
        }
        Some(
            (0..self.len())
                .map(|i| a[i * self.channels + channel])
                .collect(),
        )
    }

    pub fn part_labels(&self) -> Option<&[u32]> {
        self.part_labels.as_deref()
    }

    /// Replaces coordinates, keeping every other column.
    pub fn with_points(&self, points: Vec<Point3>) -> Result<Self> {
        if points.len() != self.len() {
            return Err(Error::Dimension("point count changed".into()));
        }
        if points.iter().any(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::invalid("non-finite coordinate"));
        }
        Ok(Self {
            points,
            ..self.clone()
        })
    }

    pub fn with_features(&self, feature_dim: usize, features: Vec<f64>) -> Result<Self> {
        let mut out = Self::new(self.points.clone(), feature_dim, features)?;
        out.channels = self.channels;
        out.affordance = self.affordance.clone();
        out.part_labels = self.part_labels.clone();
        Ok(out)
    }

    /// Writes one affordance channel, allocating `channels` zeroed channels
    /// first if the cloud carries none.
    pub fn set_affordance_channel(
        &mut self,
        channels: usize,
        channel: usize,
        values: &[f64],
    ) -> Result<()> {
        if values.len() != self.len() {
            return Err(Error::Dimension("affordance channel length".into()));
        }
        if channel >= channels {
            return Err(Error::invalid(format!(
                "channel {channel} out of range for K = {channels}"
            )));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("affordance value outside [0,1]"));
        }
        if self.channels != channels || self.affordance.is_none() {
            if self.channels != 0 && self.channels != channels {
                return Err(Error::Dimension(format!(
                    "cloud has {} channels, asked for {}",
                    self.channels, channels
                )));
            }
            self.channels = channels;
            self.affordance = Some(vec![0.0; self.len() * channels]);
        }
        let a = self.affordance.as_mut().expect("allocated above");
        for (i, v) in values.iter().enumerate() {
            a[i * channels + channel] = *v;
        }
        Ok(())
    }

    /// Keeps the points at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::invalid("N must be ≥ 1"));
        }
        let n = self.feature_dim;
        let k = self.channels;
        let points = indices.iter().map(|&i| self.points[i]).collect();
        let features = indices
            .iter()
            .flat_map(|&i| self.features[i * n..(i + 1) * n].iter().copied())
            .collect();
        let affordance = self.affordance.as_ref().map(|a| {
            indices
                .iter()
                .flat_map(|&i| a[i * k..(i + 1) * k].iter().copied())
                .collect()
        });
        let part_labels = self
            .part_labels
            .as_ref()
            .map(|p| indices.iter().map(|&i| p[i]).collect());
        Ok(Self {
            points,
            feature_dim: n,
            features,
            channels: k,
            affordance,
            part_labels,
        })
    }

    pub fn centroid(&self) -> Point3 {
        let mut c = [0.0; 3];
        for p in &self.points {
            for d in 0..3 {
                c[d] += p[d];
            }
        }
        let n = self.len() as f64;
        c.map(|v| v / n)
    }
}

/// Affordance category, identified by an interaction verb.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AffordanceCategory {
    pub id: usize,
    pub name: String,
}

impl AffordanceCategory {
    pub fn new(id: usize, name: impl Into<String>) -> Self {
        Self {
            id,
            name: name.into(),
        }
    }
}

/// Source (manipulated) and target (acted-upon) clouds for one interaction.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectPair {
    pub source: FeatureCloud,
    pub target: FeatureCloud,
    pub category: AffordanceCategory,
}

impl ObjectPair {
    pub fn new(source: FeatureCloud, target: FeatureCloud, category: AffordanceCategory) -> Result<Self> {
        if source.feature_dim() != target.feature_dim() {
            return Err(Error::Dimension(format!(
                "source feature dim {} != target feature dim {}",
                source.feature_dim(),
                target.feature_dim()
            )));
        }
        Ok(Self {
            source,
            target,
            category,
        })
    }
}

/// Undo record for [`normalize_cloud`]: `original = normalized * scale + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizeRecord {
    pub offset: Point3,
    pub scale: f64,
}

impl NormalizeRecord {
    pub fn apply(&self, p: &Point3) -> Point3 {
        [
            (p[0] - self.offset[0]) / self.scale,
            (p[1] - self.offset[1]) / self.scale,
            (p[2] - self.offset[2]) / self.scale,
        ]
    }

    pub fn invert(&self, p: &Point3) -> Point3 {
        [
            p[0] * self.scale + self.offset[0],
            p[1] * self.scale + self.offset[1],
            p[2] * self.scale + self.offset[2],
        ]
    }
}

/// Centers a cloud at its centroid and scales it into the unit ball.
pub fn normalize_cloud(cloud: &FeatureCloud) -> Result<(FeatureCloud, NormalizeRecord)> {
    let offset = cloud.centroid();
    let radius = cloud
        .points()
        .iter()
        .map(|p| dist(p, &offset))
        .fold(0.0, f64::max);
    if radius <= f64::EPSILON * (1.0 + norm(&offset)) {
        return Err(Error::ZeroExtent);
    }
    let record = NormalizeRecord {
        offset,
        scale: radius,
    };
    let points = cloud.points().iter().map(|p| record.apply(p)).collect();
    Ok((cloud.with_points(points)?, record))
}

pub fn denormalize_cloud(cloud: &FeatureCloud, record: &NormalizeRecord) -> Result<FeatureCloud> {
    let points = cloud.points().iter().map(|p| record.invert(p)).collect();
    cloud.with_points(points)
}

/// Normalizes each object of a pair independently.
pub fn normalize_pair(pair: &ObjectPair) -> Result<(ObjectPair, [NormalizeRecord; 2])> {
    let (source, rs) = normalize_cloud(&pair.source)?;
    let (target, rt) = normalize_cloud(&pair.target)?;
    Ok((
        ObjectPair {
            source,
            target,
            category: pair.category.clone(),
        },
        [rs, rt],
    ))
}

pub fn denormalize_pair(pair: &ObjectPair, records: &[NormalizeRecord; 2]) -> Result<ObjectPair> {
    Ok(ObjectPair {
        source: denormalize_cloud(&pair.source, &records[0])?,
        target: denormalize_cloud(&pair.target, &records[1])?,
        category: pair.category.clone(),
    })
}

#[inline]
pub fn dist2(a: &Point3, b: &Point3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

#[inline]
pub fn dist(a: &Point3, b: &Point3) -> f64 {
    dist2(a, b).sqrt()
}

#[inline]
pub fn norm(a: &Point3) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere_cloud(center: Point3, radius: f64, n: usize) -> FeatureCloud {
        // Fibonacci sphere
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        let pts = (0..n)
            .map(|i| {
                let y = 1.0 - 2.0 * (i as f64) / ((n - 1) as f64);
                let r = (1.0 - y * y).sqrt();
                let th = golden * i as f64;
                [
                    center[0] + radius * r * th.cos(),
                    center[1] + radius * y,
                    center[2] + radius * r * th.sin(),
                ]
            })
            .collect();
        FeatureCloud::from_points(pts, 2).unwrap()
    }

    #[test]
    fn symmetric_unit_cloud_is_unchanged() {
        let pts = vec![
            [1.0, 0.0, 0.0],
            [-1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, -1.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.0, 0.0, -1.0],
        ];
        let c = FeatureCloud::from_points(pts.clone(), 1).unwrap();
        let (n, rec) = normalize_cloud(&c).unwrap();
        assert_eq!(rec.scale, 1.0);
        for (a, b) in n.points().iter().zip(&pts) {
            assert!(dist(a, b) < 1e-15);
        }
    }

    #[test]
    fn offset_sphere_record() {
        // symmetric 6-point shell so the centroid is exactly the center
        let pts: Vec<Point3> = [
            [2.0, 0.0, 0.0],
            [-2.0, 0.0, 0.0],
            [0.0, 2.0, 0.0],
            [0.0, -2.0, 0.0],
            [0.0, 0.0, 2.0],
            [0.0, 0.0, -2.0],
        ]
        .iter()
        .map(|p| [p[0] + 5.0, p[1] + 5.0, p[2] + 5.0])
        .collect();
        let c = FeatureCloud::from_points(pts, 1).unwrap();
        let (n, rec) = normalize_cloud(&c).unwrap();
        assert!((rec.scale - 2.0).abs() < 1e-12);
        assert!(dist(&rec.offset, &[5.0, 5.0, 5.0]) < 1e-12);
        assert!(norm(&n.centroid()) < 1e-12);
        assert!((n.points()[0][0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_cloud_errors() {
        let c = FeatureCloud::from_points(vec![[1.0, 2.0, 3.0]; 5], 1).unwrap();
        assert!(matches!(normalize_cloud(&c), Err(Error::ZeroExtent)));
    }

    #[test]
    fn normalized_cloud_fills_unit_ball() {
        let c = sphere_cloud([0.3, -2.0, 7.0], 3.5, 200);
        let (n, _) = normalize_cloud(&c).unwrap();
        assert!(norm(&n.centroid()) < 1e-9);
        let r = n.points().iter().map(norm).fold(0.0, f64::max);
        assert!((r - 1.0).abs() < 1e-9);
    }

    #[test]
    fn affordance_out_of_range_rejected() {
        let c = FeatureCloud::from_points(vec![[0.0; 3], [1.0; 3]], 1).unwrap();
        assert!(c.with_affordance(1, vec![0.2, 1.5]).is_err());
    }

    #[test]
    fn subset_keeps_columns() {
        let c = FeatureCloud::new(vec![[0.0; 3], [1.0; 3], [2.0; 3]], 1, vec![10.0, 11.0, 12.0])
            .unwrap()
            .with_affordance(1, vec![0.0, 0.5, 1.0])
            .unwrap()
            .with_part_labels(vec![4, 5, 6])
            .unwrap();
        let s = c.subset(&[2, 0]).unwrap();
        assert_eq!(s.features(), &[12.0, 10.0]);
        assert_eq!(s.affordance().unwrap(), &[1.0, 0.0]);
        assert_eq!(s.part_labels().unwrap(), &[6, 4]);
    }
}
