//! Multi-view fusion of 2D feature maps onto 3D points.
//!
//! Each point is projected into every view, the view's depth and feature
//! images are sampled bilinearly, and views are weighted by how close the
//! point lies to the observed surface (truncated depth difference).

mod camera;
pub mod scene;

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::cloud::{FeatureCloud, Point3};
use crate::error::{Error, Result};

pub use camera::{
    load_camera, load_feature_image, load_pgm16, save_camera, save_feature_image, save_pgm16,
    CameraFile, CameraView, Image,
};

/// Default truncation distance in meters.
pub const DEFAULT_MU: f64 = 0.02;

/// Projection of a world point into one view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub u: [f64; 2],
    /// z-depth of the point in the camera frame.
    pub r_point: f64,
    pub in_frustum: bool,
}

/// Per-view fusion weight record for one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionWeights {
    pub u: [f64; 2],
    pub r_sensor: f64,
    pub r_point: f64,
    /// `r_sensor - r_point`; positive when the point lies in front of the surface.
    pub d: f64,
    pub d_trunc: f64,
    pub visible: bool,
    pub w: f64,
}

pub fn project_to_view(x: &Point3, view: &CameraView) -> Projection {
    let e = &view.extrinsic;
    let xc = [
        e[0][0] * x[0] + e[0][1] * x[1] + e[0][2] * x[2] + e[0][3],
        e[1][0] * x[0] + e[1][1] * x[1] + e[1][2] * x[2] + e[1][3],
        e[2][0] * x[0] + e[2][1] * x[1] + e[2][2] * x[2] + e[2][3],
    ];
    let k = &view.intrinsics;
    let r_point = xc[2];
    let hx = k[0][0] * xc[0] + k[0][1] * xc[1] + k[0][2] * xc[2];
    let hy = k[1][0] * xc[0] + k[1][1] * xc[1] + k[1][2] * xc[2];
    let hz = k[2][0] * xc[0] + k[2][1] * xc[1] + k[2][2] * xc[2];
    let u = [hx / hz, hy / hz];
    let in_frustum = r_point > 0.0
        && u[0] >= 0.0
        && u[1] >= 0.0
        && u[0] <= (view.width - 1) as f64
        && u[1] <= (view.height - 1) as f64;
    Projection {
        u,
        r_point,
        in_frustum,
    }
}

/// Bilinear interpolation at continuous pixel coordinates `u = (col, row)`,
/// where integer coordinates are pixel centers.
///
/// Returns `None` if `u` falls outside the image.
pub fn bilinear_sample(image: &Image, u: [f64; 2]) -> Option<Vec<f64>> {
    let (c0, r0, fx, fy) = corners(image, u)?;
    let c1 = (c0 + 1).min(image.width - 1);
    let r1 = (r0 + 1).min(image.height - 1);
    let ch = image.channels;
    let mut out = vec![0.0; ch];
    let taps = [
        (r0, c0, (1.0 - fx) * (1.0 - fy)),
        (r0, c1, fx * (1.0 - fy)),
        (r1, c0, (1.0 - fx) * fy),
        (r1, c1, fx * fy),
    ];
    for (r, c, wt) in taps {
        let px = image.pixel(r, c);
        for (o, v) in out.iter_mut().zip(px) {
            *o += wt * v;
        }
    }
    Some(out)
}

/// Bilinear depth sample; invalid (`None`) when any contributing corner has depth 0.
pub fn bilinear_depth(depth: &Image, u: [f64; 2]) -> Option<f64> {
    let (c0, r0, _, _) = corners(depth, u)?;
    let c1 = (c0 + 1).min(depth.width - 1);
    let r1 = (r0 + 1).min(depth.height - 1);
    for (r, c) in [(r0, c0), (r0, c1), (r1, c0), (r1, c1)] {
        if depth.pixel(r, c)[0] <= 0.0 {
            return None;
        }
    }
    bilinear_sample(depth, u).map(|v| v[0])
}

fn corners(image: &Image, u: [f64; 2]) -> Option<(usize, usize, f64, f64)> {
    let (x, y) = (u[0], u[1]);
    if !(x >= 0.0 && y >= 0.0 && x <= (image.width - 1) as f64 && y <= (image.height - 1) as f64) {
        return None;
    }
    let c0 = (x.floor() as usize).min(image.width - 1);
    let r0 = (y.floor() as usize).min(image.height - 1);
    Some((c0, r0, x - c0 as f64, y - r0 as f64))
}

/// Visibility and weight of `x` in one view for truncation distance `mu`.
pub fn view_weight(x: &Point3, view: &CameraView, mu: f64) -> FusionWeights {
    let proj = project_to_view(x, view);
    let invisible = |r_sensor: f64| {
        let d = r_sensor - proj.r_point;
        FusionWeights {
            u: proj.u,
            r_sensor,
            r_point: proj.r_point,
            d,
            d_trunc: if d.is_finite() { d.clamp(-mu, mu) } else { -mu },
            visible: false,
            w: 0.0,
        }
    };
    if !proj.in_frustum {
        return invisible(f64::NAN);
    }
    let Some(r_sensor) = bilinear_depth(&view.depth, proj.u) else {
        return invisible(f64::NAN);
    };
    let d = r_sensor - proj.r_point;
    let d_trunc = d.clamp(-mu, mu);
    let visible = d >= -mu;
    if !visible {
        return FusionWeights {
            u: proj.u,
            r_sensor,
            r_point: proj.r_point,
            d,
            d_trunc,
            visible,
            w: 0.0,
        };
    }
    let sigma = mu / 2.0;
    let w = (-(d_trunc * d_trunc) / (2.0 * sigma * sigma)).exp();
    FusionWeights {
        u: proj.u,
        r_sensor,
        r_point: proj.r_point,
        d,
        d_trunc,
        visible,
        w,
    }
}

/// Result of fusing a set of views onto points.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedCloud {
    pub cloud: FeatureCloud,
    /// Fused instance probabilities, N×M row-major, when every view carries a mask.
    pub mask: Option<Vec<f64>>,
    pub mask_dim: usize,
    /// Number of views with nonzero weight per point.
    pub coverage: Vec<u32>,
}

struct Contribution {
    w: f64,
    feature: Vec<f64>,
    mask: Option<Vec<f64>>,
}

fn cmp_contrib(a: &Contribution, b: &Contribution) -> Ordering {
    a.w.total_cmp(&b.w).then_with(|| {
        a.feature
            .iter()
            .zip(&b.feature)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    })
}

/// Fuses per-view features onto `points`: `f(x) = Σ wᵢ fᵢ(uᵢ) / Σ wᵢ`.
///
/// Contributions are summed in a canonical order so the result does not
/// depend on the order of `views`. Points seen by no view get zero features.
pub fn fuse_cloud(points: &[Point3], views: &[CameraView], mu: f64) -> Result<FusedCloud> {
    if views.is_empty() {
        return Err(Error::invalid("fusion needs at least one view"));
    }
    if !(mu > 0.0) {
        return Err(Error::invalid(format!("truncation mu must be > 0, got {mu}")));
    }
    let n = views[0].features.channels;
    if let Some(v) = views.iter().find(|v| v.features.channels != n) {
        return Err(Error::Dimension(format!(
            "feature dim {} != {}",
            v.features.channels, n
        )));
    }
    let mask_dim = match views[0].mask.as_ref() {
        Some(m) if views.iter().all(|v| v.mask.as_ref().map(|x| x.channels) == Some(m.channels)) => {
            m.channels
        }
        _ => 0,
    };

    let per_point: Vec<(Vec<f64>, Option<Vec<f64>>, u32)> = points
        .par_iter()
        .map(|x| {
            let mut contribs: Vec<Contribution> = views
                .iter()
                .filter_map(|view| {
                    let fw = view_weight(x, view, mu);
                    if fw.w <= 0.0 {
                        return None;
                    }
                    let feature = bilinear_sample(&view.features, fw.u)?;
                    let mask = if mask_dim > 0 {
                        view.mask.as_ref().and_then(|m| bilinear_sample(m, fw.u))
                    } else {
                        None
                    };
                    Some(Contribution {
                        w: fw.w,
                        feature,
                        mask,
                    })
                })
                .collect();
            contribs.sort_by(cmp_contrib);
            let total: f64 = contribs.iter().map(|c| c.w).sum();
            let mut f = vec![0.0; n];
            let mut m = (mask_dim > 0).then(|| vec![0.0; mask_dim]);
            if total > 0.0 {
                for c in &contribs {
                    for (o, v) in f.iter_mut().zip(&c.feature) {
                        *o += c.w * v;
                    }
                    if let (Some(m), Some(cm)) = (m.as_mut(), c.mask.as_ref()) {
                        for (o, v) in m.iter_mut().zip(cm) {
                            *o += c.w * v;
                        }
                    }
                }
                f.iter_mut().for_each(|v| *v /= total);
                if let Some(m) = m.as_mut() {
                    m.iter_mut().for_each(|v| *v /= total);
                }
            }
            (f, m, contribs.len() as u32)
        })
        .collect();

    let mut features = Vec::with_capacity(points.len() * n);
    let mut mask = (mask_dim > 0).then(|| Vec::with_capacity(points.len() * mask_dim));
    let mut coverage = Vec::with_capacity(points.len());
    for (f, m, c) in per_point {
        features.extend(f);
        if let (Some(dst), Some(m)) = (mask.as_mut(), m) {
            dst.extend(m);
        }
        coverage.push(c);
    }
    Ok(FusedCloud {
        cloud: FeatureCloud::new(points.to_vec(), n, features)?,
        mask,
        mask_dim,
        coverage,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn flat_view(w: usize, h: usize, depth: f64, n: usize) -> CameraView {
        let feats: Vec<f64> = (0..w * h * n).map(|i| i as f64 * 0.01).collect();
        CameraView::new(
            [[500.0, 0.0, (w / 2) as f64], [0.0, 500.0, (h / 2) as f64], [0.0, 0.0, 1.0]],
            identity4(),
            Image::new(w, h, 1, vec![depth; w * h]).unwrap(),
            Image::new(w, h, n, feats).unwrap(),
            None,
        )
        .unwrap()
    }

    fn identity4() -> [[f64; 4]; 4] {
        let mut m = [[0.0; 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        m
    }

    #[test]
    fn optical_axis_projects_to_principal_point() {
        let view = flat_view(640, 480, 2.0, 1);
        let p = project_to_view(&[0.0, 0.0, 2.0], &view);
        assert_eq!(p.u, [320.0, 240.0]);
        assert_eq!(p.r_point, 2.0);
        assert!(p.in_frustum);
    }

    #[test]
    fn behind_camera_is_out_of_frustum() {
        let view = flat_view(64, 48, 2.0, 1);
        assert!(!project_to_view(&[0.0, 0.0, -1.0], &view).in_frustum);
        assert!(!project_to_view(&[0.0, 0.0, 0.0], &view).in_frustum);
    }

    #[test]
    fn projection_matches_matrix_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let k = [[410.0, 0.5, 33.0], [0.0, 395.0, 25.0], [0.0, 0.0, 1.0]];
        let t = crate::se3::se3_from_params(&[0.2, -0.1, 0.3, 0.1, -0.2, 0.5]);
        let mut e = identity4();
        for r in 0..3 {
            for c in 0..3 {
                e[r][c] = t.rotation[(r, c)];
            }
            e[r][3] = t.translation[r];
        }
        let view = CameraView::new(
            k,
            e,
            Image::new(64, 48, 1, vec![1.0; 64 * 48]).unwrap(),
            Image::new(64, 48, 1, vec![0.0; 64 * 48]).unwrap(),
            None,
        )
        .unwrap();
        for _ in 0..200 {
            let x = [
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(0.5..3.0),
            ];
            // oracle: homogeneous 3x4 * 4 product
            let xh = [x[0], x[1], x[2], 1.0];
            let mut cam = [0.0; 3];
            for r in 0..3 {
                for c in 0..4 {
                    cam[r] += e[r][c] * xh[c];
                }
            }
            let mut pix = [0.0; 3];
            for r in 0..3 {
                for c in 0..3 {
                    pix[r] += k[r][c] * cam[c];
                }
            }
            let p = project_to_view(&x, &view);
            assert!((p.u[0] - pix[0] / pix[2]).abs() < 1e-9);
            assert!((p.u[1] - pix[1] / pix[2]).abs() < 1e-9);
            assert!((p.r_point - cam[2]).abs() < 1e-12);
        }
    }

    #[test]
    fn bilinear_lattice_and_midpoint() {
        let img = Image::new(2, 1, 1, vec![0.0, 1.0]).unwrap();
        assert_eq!(bilinear_sample(&img, [0.0, 0.0]).unwrap(), vec![0.0]);
        assert_eq!(bilinear_sample(&img, [1.0, 0.0]).unwrap(), vec![1.0]);
        assert_eq!(bilinear_sample(&img, [0.5, 0.0]).unwrap(), vec![0.5]);
        assert!(bilinear_sample(&img, [1.5, 0.0]).is_none());
    }

    #[test]
    fn bilinear_matches_four_corner_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (w, h, c) = (7, 5, 3);
        let data: Vec<f64> = (0..w * h * c).map(|_| rng.random_range(-1.0..1.0)).collect();
        let img = Image::new(w, h, c, data.clone()).unwrap();
        for _ in 0..500 {
            let u = [rng.random_range(0.0..(w - 1) as f64), rng.random_range(0.0..(h - 1) as f64)];
            let (x0, y0) = (u[0].floor(), u[1].floor());
            let (ax, ay) = (u[0] - x0, u[1] - y0);
            let at = |r: usize, col: usize, ch: usize| data[(r * w + col) * c + ch];
            let got = bilinear_sample(&img, u).unwrap();
            for ch in 0..c {
                let (r0, c0) = (y0 as usize, x0 as usize);
                let want = (1.0 - ax) * (1.0 - ay) * at(r0, c0, ch)
                    + ax * (1.0 - ay) * at(r0, c0 + 1, ch)
                    + (1.0 - ax) * ay * at(r0 + 1, c0, ch)
                    + ax * ay * at(r0 + 1, c0 + 1, ch);
                assert!((got[ch] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_depth_corner_invalidates() {
        let img = Image::new(2, 2, 1, vec![1.0, 1.0, 0.0, 1.0]).unwrap();
        assert!(bilinear_depth(&img, [0.5, 0.5]).is_none());
        assert_eq!(bilinear_depth(&img, [1.0, 0.0]), Some(1.0));
    }

    #[test]
    fn weight_cases() {
        let mu = 0.02;
        let view = flat_view(64, 48, 2.0, 1);
        let on = view_weight(&[0.0, 0.0, 2.0], &view, mu);
        assert!(on.visible);
        assert_eq!(on.w, 1.0);
        let occluded = view_weight(&[0.0, 0.0, 2.0 + 5.0 * mu], &view, mu);
        assert!(!occluded.visible);
        assert_eq!(occluded.w, 0.0);
        let front = view_weight(&[0.0, 0.0, 2.0 - mu / 2.0], &view, mu);
        assert!(front.visible);
        assert!((front.d - mu / 2.0).abs() < 1e-12);
        assert!((front.w - (-0.5f64).exp()).abs() < 1e-12);
        assert!((front.w - 0.6065).abs() < 1e-4);
        let far_front = view_weight(&[0.0, 0.0, 1.0], &view, mu);
        assert_eq!(far_front.d_trunc, mu);
    }

    #[test]
    fn single_view_exact_and_two_views_average() {
        let view = flat_view(64, 48, 2.0, 2);
        // pixel (10, 20) center
        let x = [(10.0 - 32.0) * 2.0 / 500.0, (20.0 - 24.0) * 2.0 / 500.0, 2.0];
        let fused = fuse_cloud(&[x], std::slice::from_ref(&view), DEFAULT_MU).unwrap();
        let want = view.features.pixel(20, 10).to_vec();
        for (a, b) in fused.cloud.feature(0).iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(fused.coverage, vec![1]);

        let mut other = view.clone();
        other.features = Image::new(64, 48, 2, vec![3.0; 64 * 48 * 2]).unwrap();
        let fused = fuse_cloud(&[x], &[view.clone(), other], DEFAULT_MU).unwrap();
        for (a, b) in fused.cloud.feature(0).iter().zip(&want) {
            assert!((a - (b + 3.0) / 2.0).abs() < 1e-12);
        }
        assert_eq!(fused.coverage, vec![2]);
    }

    #[test]
    fn unseen_point_gets_zero_feature() {
        let view = flat_view(64, 48, 2.0, 2);
        let fused = fuse_cloud(&[[0.0, 0.0, -3.0]], &[view], DEFAULT_MU).unwrap();
        assert_eq!(fused.cloud.feature(0), &[0.0, 0.0]);
        assert_eq!(fused.coverage, vec![0]);
    }

    #[test]
    fn mismatched_feature_dims_error() {
        let a = flat_view(8, 8, 2.0, 2);
        let b = flat_view(8, 8, 2.0, 3);
        assert!(matches!(
            fuse_cloud(&[[0.0, 0.0, 2.0]], &[a, b], DEFAULT_MU),
            Err(Error::Dimension(_))
        ));
    }
}
