//! Point sampling and grouping used by the tokenizer.

use crate::cloud::{dist2, Point3};
use crate::error::{Error, Result};

/// Farthest point sampling. Starts at the point farthest from the centroid
/// and repeatedly picks the point farthest from the selected set; ties go to
/// the lowest index.
pub fn fps(points: &[Point3], t: usize) -> Result<Vec<usize>> {
    let n = points.len();
    if t > n {
        return Err(Error::invalid(format!("cannot sample {t} centers from {n} points")));
    }
    if t == 0 {
        return Ok(Vec::new());
    }
    let mut c = [0.0; 3];
    for p in points {
        for k in 0..3 {
            c[k] += p[k];
        }
    }
    for v in c.iter_mut() {
        *v /= n as f64;
    }
    let first = argmax_first(points.iter().map(|p| dist2(p, &c)));
    let mut selected = Vec::with_capacity(t);
    selected.push(first);
    let mut mind: Vec<f64> = points.iter().map(|p| dist2(p, &points[first])).collect();
    while selected.len() < t {
        let next = argmax_first(mind.iter().copied());
        selected.push(next);
        let q = points[next];
        for (m, p) in mind.iter_mut().zip(points) {
            let d = dist2(p, &q);
            if d < *m {
                *m = d;
            }
        }
    }
    Ok(selected)
}

fn argmax_first(it: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in it.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Indices of the `k` nearest points within `radius` of each center (ties by
/// lowest index), padded by repeating the nearest one.
pub fn knn_indices(points: &[Point3], centers: &[Point3], k: usize, radius: f64) -> Result<Vec<Vec<usize>>> {
    if k == 0 {
        return Err(Error::invalid("group size k must be ≥ 1"));
    }
    let r2 = radius * radius;
    centers
        .iter()
        .map(|c| {
            let mut cand: Vec<(f64, usize)> = points
                .iter()
                .enumerate()
                .map(|(i, p)| (dist2(p, c), i))
                .filter(|(d, _)| *d <= r2)
                .collect();
            if cand.is_empty() {
                return Err(Error::invalid("patch center has no point within the group radius"));
            }
            cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut idx: Vec<usize> = cand.iter().take(k).map(|(_, i)| *i).collect();
            let nearest = idx[0];
            idx.resize(k, nearest);
            Ok(idx)
        })
        .collect()
}

/// Patches of `k` rows `[x - center, features]`, one per center.
pub fn knn_group(
    points: &[Point3],
    features: &[f64],
    feature_dim: usize,
    centers: &[Point3],
    k: usize,
    radius: f64,
) -> Result<Vec<Vec<Vec<f64>>>> {
    if features.len() != points.len() * feature_dim {
        return Err(Error::Dimension("feature matrix does not match the point count".into()));
    }
    let groups = knn_indices(points, centers, k, radius)?;
    Ok(groups
        .iter()
        .zip(centers)
        .map(|(g, c)| {
            g.iter()
                .map(|&i| {
                    let p = points[i];
                    let mut row = vec![p[0] - c[0], p[1] - c[1], p[2] - c[2]];
                    row.extend_from_slice(&features[i * feature_dim..(i + 1) * feature_dim]);
                    row
                })
                .collect()
        })
        .collect())
}

/// Index of the nearest center for each point (ties by lowest index).
pub fn nearest_center(points: &[Point3], centers: &[Point3]) -> Vec<usize> {
    points
        .iter()
        .map(|p| {
            let mut best = (0, f64::INFINITY);
            for (j, c) in centers.iter().enumerate() {
                let d = dist2(p, c);
                if d < best.1 {
                    best = (j, d);
                }
            }
            best.0
        })
        .collect()
}
