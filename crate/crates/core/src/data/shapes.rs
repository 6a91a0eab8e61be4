//! Surface primitives with uniform area sampling.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;

use crate::cloud::Point3;

use std::f64::consts::{PI, TAU};

/// A surface patch in a local frame `origin + frame * local`.
#[derive(Debug, Clone)]
pub enum Surface {
    /// Spherical zone: local z between `z_lo` and `z_hi` (in units of radius,
    /// within [-1, 1]), azimuth in `[phi_lo, phi_hi]`.
    SphereZone {
        radius: f64,
        z_lo: f64,
        z_hi: f64,
        phi_lo: f64,
        phi_hi: f64,
    },
    /// Open cylinder along local z from 0 to `height`.
    Cylinder { radius: f64, height: f64 },
    /// Annulus in the local xy-plane.
    Annulus { r_in: f64, r_out: f64 },
    /// Rectangle spanning `[-a, a] x [-b, b]` in the local xy-plane.
    Rect { a: f64, b: f64 },
    /// Torus segment around local z, tube angle full, ring angle in `[0, sweep]`.
    Torus { ring: f64, tube: f64, sweep: f64 },
}

impl Surface {
    pub fn area(&self) -> f64 {
        match *self {
            Surface::SphereZone {
                radius,
                z_lo,
                z_hi,
                phi_lo,
                phi_hi,
            } => radius * radius * (z_hi - z_lo) * (phi_hi - phi_lo),
            Surface::Cylinder { radius, height } => TAU * radius * height,
            Surface::Annulus { r_in, r_out } => PI * (r_out * r_out - r_in * r_in),
            Surface::Rect { a, b } => 4.0 * a * b,
            Surface::Torus { ring, tube, sweep } => TAU * tube * ring * sweep,
        }
    }

    fn sample_local<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector3<f64> {
        match *self {
            Surface::SphereZone {
                radius,
                z_lo,
                z_hi,
                phi_lo,
                phi_hi,
            } => {
                let z = rng.random_range(z_lo..=z_hi);
                let phi = rng.random_range(phi_lo..=phi_hi);
                let r = (1.0 - z * z).max(0.0).sqrt();
                Vector3::new(r * phi.cos(), r * phi.sin(), z) * radius
            }
            Surface::Cylinder { radius, height } => {
                let phi = rng.random_range(0.0..TAU);
                Vector3::new(radius * phi.cos(), radius * phi.sin(), rng.random_range(0.0..=height))
            }
            Surface::Annulus { r_in, r_out } => {
                let r = rng.random_range(r_in * r_in..=r_out * r_out).sqrt();
                let phi = rng.random_range(0.0..TAU);
                Vector3::new(r * phi.cos(), r * phi.sin(), 0.0)
            }
            Surface::Rect { a, b } => {
                Vector3::new(rng.random_range(-a..=a), rng.random_range(-b..=b), 0.0)
            }
            Surface::Torus { ring, tube, sweep } => loop {
                // rejection on the area element (ring + tube cos v)
                let u = rng.random_range(0.0..=sweep);
                let v = rng.random_range(0.0..TAU);
                let accept = rng.random_range(0.0..=(ring + tube));
                if accept <= ring + tube * v.cos() {
                    let rr = ring + tube * v.cos();
                    break Vector3::new(rr * u.cos(), rr * u.sin(), tube * v.sin());
                }
            },
        }
    }
}

/// A placed surface tagged with a part id.
#[derive(Debug, Clone)]
pub struct Piece {
    pub surface: Surface,
    pub origin: Vector3<f64>,
    pub frame: Matrix3<f64>,
    pub part: u32,
}

impl Piece {
    pub fn new(surface: Surface, origin: [f64; 3], part: u32) -> Self {
        Self {
            surface,
            origin: Vector3::from(origin),
            frame: Matrix3::identity(),
            part,
        }
    }

    /// Orients the local z axis along `dir`.
    pub fn along(mut self, dir: [f64; 3]) -> Self {
        self.frame = frame_with_z(Vector3::from(dir));
        self
    }

    pub fn with_frame(mut self, frame: Matrix3<f64>) -> Self {
        self.frame = frame;
        self
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point3 {
        let p = self.origin + self.frame * self.surface.sample_local(rng);
        [p[0], p[1], p[2]]
    }
}

/// Orthonormal frame whose third column is `z` (normalized).
pub fn frame_with_z(z: Vector3<f64>) -> Matrix3<f64> {
    let z = z.normalize();
    let helper = if z[0].abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let x = helper.cross(&z).normalize();
    let y = z.cross(&x);
    Matrix3::from_columns(&[x, y, z])
}

/// Axis-aligned box surface as six rectangles.
pub fn box_pieces(center: [f64; 3], half: [f64; 3], part: u32) -> Vec<Piece> {
    let c = Vector3::from(center);
    let [hx, hy, hz] = half;
    let mut out = Vec::with_capacity(6);
    for s in [-1.0, 1.0] {
        // ±z faces
        out.push(Piece {
            surface: Surface::Rect { a: hx, b: hy },
            origin: c + Vector3::new(0.0, 0.0, s * hz),
            frame: Matrix3::identity(),
            part,
        });
        // ±x faces: local x -> world y, local y -> world z
        out.push(Piece {
            surface: Surface::Rect { a: hy, b: hz },
            origin: c + Vector3::new(s * hx, 0.0, 0.0),
            frame: Matrix3::from_columns(&[Vector3::y(), Vector3::z(), Vector3::x()]),
            part,
        });
        // ±y faces: local x -> world x, local y -> world z
        out.push(Piece {
            surface: Surface::Rect { a: hx, b: hz },
            origin: c + Vector3::new(0.0, s * hy, 0.0),
            frame: Matrix3::from_columns(&[Vector3::x(), Vector3::z(), Vector3::y()]),
            part,
        });
    }
    out
}

/// Samples `n` points across pieces with counts proportional to area
/// (largest-remainder rounding, ties by piece order).
pub fn sample_pieces<R: Rng + ?Sized>(pieces: &[Piece], n: usize, rng: &mut R) -> (Vec<Point3>, Vec<u32>) {
    let areas: Vec<f64> = pieces.iter().map(|p| p.surface.area()).collect();
    let total: f64 = areas.iter().sum();
    let quotas: Vec<f64> = areas.iter().map(|a| a / total * n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut rem = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..pieces.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if rem == 0 {
            break;
        }
        counts[i] += 1;
        rem -= 1;
    }
    let mut pts = Vec::with_capacity(n);
    let mut parts = Vec::with_capacity(n);
    for (piece, &c) in pieces.iter().zip(&counts) {
        for _ in 0..c {
            pts.push(piece.sample(rng));
            parts.push(piece.part);
        }
    }
    (pts, parts)
}
