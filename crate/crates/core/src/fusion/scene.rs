//! Analytic test scenes: a sphere observed by ring-mounted pinhole cameras.

use nalgebra::{Matrix3, Vector3};

use super::camera::{CameraView, Image};
use crate::cloud::Point3;
use crate::error::Result;

/// Camera-from-world matrix for a camera at `eye` looking at `target`
/// (x right, y down, z forward).
pub fn look_at(eye: Point3, target: Point3, up: Point3) -> [[f64; 4]; 4] {
    let eye = Vector3::from(eye);
    let fwd = (Vector3::from(target) - eye).normalize();
    let right = fwd.cross(&Vector3::from(up)).normalize();
    let down = fwd.cross(&right);
    let r = Matrix3::from_rows(&[right.transpose(), down.transpose(), fwd.transpose()]);
    let t = -(r * eye);
    let mut m = [[0.0; 4]; 4];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = r[(i, j)];
        }
        m[i][3] = t[i];
    }
    m[3][3] = 1.0;
    m
}

/// Smooth deterministic feature field used to paint synthetic views.
pub fn feature_field(p: &Point3, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|j| {
            let a = 1.0 + j as f64 * 0.37;
            (a * p[0] + 0.5 * j as f64).sin() * (0.8 * a * p[1]).cos() + 0.3 * (a * p[2]).sin()
        })
        .collect()
}

/// A sphere of `radius` at `center`, seen by `n_views` cameras on a ring.
#[derive(Debug, Clone)]
pub struct SphereScene {
    pub center: Point3,
    pub radius: f64,
    pub views: Vec<CameraView>,
}

impl SphereScene {
    pub fn new(
        center: Point3,
        radius: f64,
        n_views: usize,
        size: (usize, usize),
        feature_dim: usize,
    ) -> Result<Self> {
        let (w, h) = size;
        let f = 0.9 * w as f64;
        let k = [
            [f, 0.0, (w as f64 - 1.0) / 2.0],
            [0.0, f, (h as f64 - 1.0) / 2.0],
            [0.0, 0.0, 1.0],
        ];
        let dist = 4.0 * radius;
        let views = (0..n_views)
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / n_views as f64;
                let eye = [
                    center[0] + dist * a.cos(),
                    center[1] + dist * a.sin(),
                    center[2] + 0.6 * radius * if i % 2 == 0 { 1.0 } else { -1.0 },
                ];
                let e = look_at(eye, center, [0.0, 0.0, 1.0]);
                render_sphere(center, radius, k, e, w, h, feature_dim)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            center,
            radius,
            views,
        })
    }

    /// Fibonacci-lattice points on the sphere surface.
    pub fn surface_points(&self, n: usize) -> Vec<Point3> {
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        (0..n)
            .map(|i| {
                let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                let r = (1.0 - z * z).sqrt();
                let th = golden * i as f64;
                [
                    self.center[0] + self.radius * r * th.cos(),
                    self.center[1] + self.radius * r * th.sin(),
                    self.center[2] + self.radius * z,
                ]
            })
            .collect()
    }
}

fn render_sphere(
    center: Point3,
    radius: f64,
    k: [[f64; 3]; 3],
    e: [[f64; 4]; 4],
    w: usize,
    h: usize,
    feature_dim: usize,
) -> Result<CameraView> {
    let rot = Matrix3::from_fn(|i, j| e[i][j]);
    let trans = Vector3::new(e[0][3], e[1][3], e[2][3]);
    let eye = -(rot.transpose() * trans);
    let c = Vector3::from(center);
    let mut depth = vec![0.0; w * h];
    let mut feats = vec![0.0; w * h * feature_dim];
    let mut mask = vec![0.0; w * h];
    for row in 0..h {
        for col in 0..w {
            // ray through the pixel center, camera z component = 1
            let dc = Vector3::new(
                (col as f64 - k[0][2]) / k[0][0],
                (row as f64 - k[1][2]) / k[1][1],
                1.0,
            );
            let dw = rot.transpose() * dc;
            let oc = eye - c;
            let a = dw.dot(&dw);
            let b = 2.0 * oc.dot(&dw);
            let cc = oc.dot(&oc) - radius * radius;
            let disc = b * b - 4.0 * a * cc;
            if disc < 0.0 {
                continue;
            }
            let t = (-b - disc.sqrt()) / (2.0 * a);
            if t <= 0.0 {
                continue;
            }
            let hit = eye + dw * t;
            let idx = row * w + col;
            depth[idx] = t; // z-depth since dc.z == 1
            mask[idx] = 1.0;
            let f = feature_field(&[hit[0], hit[1], hit[2]], feature_dim);
            feats[idx * feature_dim..(idx + 1) * feature_dim].copy_from_slice(&f);
        }
    }
    CameraView::new(
        k,
        e,
        Image::new(w, h, 1, depth)?,
        Image::new(w, h, feature_dim, feats)?,
        Some(Image::new(w, h, 1, mask)?),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::project_to_view;

    #[test]
    fn sphere_center_projects_near_image_center() {
        let s = SphereScene::new([0.0, 0.0, 1.0], 0.2, 4, (64, 48), 4).unwrap();
        for v in &s.views {
            let p = project_to_view(&s.center, v);
            assert!(p.in_frustum);
            assert!((p.u[0] - 31.5).abs() < 1e-9);
            assert!((p.r_point - 0.8).abs() < 0.1);
        }
    }
}
