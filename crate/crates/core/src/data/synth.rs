//! Procedural object pairs for the five interaction verbs, with ground-truth
//! affordance and part labels, plus part-consistent stand-in features.

use std::f64::consts::{FRAC_PI_6, PI, TAU};

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::shapes::{box_pieces, sample_pieces, Piece, Surface};
use super::{propagate_labels, ContactAnnotation};
use crate::cloud::{normalize_cloud, AffordanceCategory, FeatureCloud, ObjectPair, Point3};
use crate::error::{Error, Result};

/// Part ids shared by every generated object family.
pub mod part {
    pub const BODY: u32 = 0;
    pub const SPOUT: u32 = 1;
    pub const HANDLE: u32 = 2;
    pub const BOWL_INNER: u32 = 3;
    pub const BOWL_OUTER: u32 = 4;
    pub const PEG: u32 = 5;
    pub const TRUNK: u32 = 6;
    pub const HEAD_FACE: u32 = 7;
    pub const HEAD: u32 = 8;
    pub const BUTTON: u32 = 9;
    pub const BUTTON_BASE: u32 = 10;
    pub const TOAST: u32 = 11;
    pub const CRUST: u32 = 12;
    pub const SLOT: u32 = 13;
    pub const TOASTER: u32 = 14;
    pub const EDGE: u32 = 15;
    pub const BLADE: u32 = 16;
    pub const FRUIT: u32 = 17;
    pub const STEM: u32 = 18;
    pub const LID: u32 = 19;
    pub const COUNT: usize = 20;
}

/// The five interaction verbs, in canonical channel order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verb {
    Pour,
    Hang,
    Press,
    Insert,
    Cut,
}

impl Verb {
    pub const ALL: [Verb; 5] = [Verb::Pour, Verb::Hang, Verb::Press, Verb::Insert, Verb::Cut];

    pub fn name(self) -> &'static str {
        match self {
            Verb::Pour => "pour",
            Verb::Hang => "hang",
            Verb::Press => "press",
            Verb::Insert => "insert",
            Verb::Cut => "cut",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Verb::ALL
            .into_iter()
            .find(|v| v.name() == name)
            .ok_or_else(|| Error::UnknownCategory(name.to_string()))
    }

    pub fn category(self) -> AffordanceCategory {
        AffordanceCategory::new(self.index(), self.name())
    }

    /// Functional part ids on (source, target).
    pub fn functional_parts(self) -> (u32, u32) {
        match self {
            Verb::Pour => (part::SPOUT, part::BOWL_INNER),
            Verb::Hang => (part::HANDLE, part::PEG),
            Verb::Press => (part::HEAD_FACE, part::BUTTON),
            Verb::Insert => (part::TOAST, part::SLOT),
            Verb::Cut => (part::EDGE, part::FRUIT),
        }
    }
}

impl std::fmt::Display for Verb {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Generator settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenOptions {
    pub n_points: usize,
    /// Label bandwidth in normalized (unit-ball) units.
    pub sigma: f64,
    /// Number of affordance channels allocated on each cloud.
    pub channels: usize,
}

impl Default for GenOptions {
    fn default() -> Self {
        Self {
            n_points: 2048,
            sigma: 0.06,
            channels: Verb::ALL.len(),
        }
    }
}

/// Per-part dimension multipliers drawn from the instance seed.
struct Jitter {
    rng: ChaCha8Rng,
    amount: f64,
}

impl Jitter {
    fn new(seed: u64, amount: f64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x6a09_e667_f3bc_c908),
            amount,
        }
    }

    fn f(&mut self) -> f64 {
        let u: f64 = self.rng.random_range(-1.0..=1.0);
        1.0 + self.amount * u
    }
}

struct Object {
    pieces: Vec<Piece>,
    /// Selects functional points among samples of the functional part.
    functional: Box<dyn Fn(&Point3) -> bool>,
}

fn any_point() -> Box<dyn Fn(&Point3) -> bool> {
    Box::new(|_| true)
}

fn sphere_full(radius: f64) -> Surface {
    Surface::SphereZone {
        radius,
        z_lo: -1.0,
        z_hi: 1.0,
        phi_lo: 0.0,
        phi_hi: TAU,
    }
}

fn frame(x: [f64; 3], y: [f64; 3], z: [f64; 3]) -> Matrix3<f64> {
    Matrix3::from_columns(&[Vector3::from(x), Vector3::from(y), Vector3::from(z)])
}

fn teapot(j: &mut Jitter) -> Object {
    let rb = 0.08 * j.f();
    let rs = 0.012 * j.f();
    let ls = 0.08 * j.f();
    let rh = 0.045 * j.f();
    let rk = 0.015 * j.f();
    let c = Vector3::new(0.0, 0.0, rb);
    let base = c + Vector3::new(1.0, 0.0, -0.2).normalize() * (0.85 * rb);
    let dir = Vector3::new(1.0, 0.0, 1.0).normalize();
    let pieces = vec![
        Piece::new(sphere_full(rb), [0.0, 0.0, rb], part::BODY),
        Piece::new(sphere_full(rk), [0.0, 0.0, 2.0 * rb + 0.6 * rk], part::LID),
        Piece::new(Surface::Cylinder { radius: rs, height: ls }, base.into(), part::SPOUT)
            .along(dir.into()),
        Piece::new(
            Surface::Torus {
                ring: rh,
                tube: 0.008,
                sweep: PI,
            },
            [-0.85 * rb, 0.0, rb],
            part::HANDLE,
        )
        .with_frame(frame([0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0])),
    ];
    Object {
        pieces,
        functional: any_point(),
    }
}

fn bowl(j: &mut Jitter) -> Object {
    let ri = 0.09 * j.f();
    let ro = ri + 0.003;
    let half = |r| Surface::SphereZone {
        radius: r,
        z_lo: -1.0,
        z_hi: 0.0,
        phi_lo: 0.0,
        phi_hi: TAU,
    };
    let pieces = vec![
        Piece::new(half(ri), [0.0, 0.0, ro], part::BOWL_INNER),
        Piece::new(half(ro), [0.0, 0.0, ro], part::BOWL_OUTER),
        Piece::new(Surface::Annulus { r_in: ri, r_out: ro }, [0.0, 0.0, ro], part::BOWL_OUTER),
    ];
    // inner bottom, where poured liquid lands
    let functional = Box::new(move |p: &Point3| p[2] - ro < -0.5 * ri);
    Object { pieces, functional }
}

fn mug(j: &mut Jitter) -> Object {
    let r = 0.04 * j.f();
    let h = 0.1 * j.f();
    let rh = 0.03 * j.f();
    let pieces = vec![
        Piece::new(Surface::Cylinder { radius: r, height: h }, [0.0; 3], part::BODY),
        Piece::new(Surface::Annulus { r_in: 0.0, r_out: r }, [0.0; 3], part::BODY),
        Piece::new(
            Surface::Torus {
                ring: rh,
                tube: 0.007,
                sweep: PI,
            },
            [r, 0.0, h / 2.0],
            part::HANDLE,
        )
        .with_frame(frame([0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0])),
    ];
    Object {
        pieces,
        functional: any_point(),
    }
}

fn mug_tree(j: &mut Jitter) -> Object {
    let rt = 0.01 * j.f();
    let ht = 0.32 * j.f();
    let rbase = 0.08 * j.f();
    let rp = 0.006 * j.f();
    let lp = 0.08 * j.f();
    let z_hi = 0.75 * ht;
    let z_lo = 0.55 * ht;
    let tilt = FRAC_PI_6;
    let peg = |az: f64, z: f64| {
        Piece::new(Surface::Cylinder { radius: rp, height: lp }, [0.0, 0.0, z], part::PEG).along([
            az.cos() * tilt.cos(),
            az.sin() * tilt.cos(),
            tilt.sin(),
        ])
    };
    let pieces = vec![
        Piece::new(Surface::Cylinder { radius: rt, height: ht }, [0.0; 3], part::TRUNK),
        Piece::new(Surface::Annulus { r_in: 0.0, r_out: rbase }, [0.0; 3], part::TRUNK),
        peg(0.0, z_hi),
        peg(PI, z_lo),
    ];
    // only the upper (+x) peg receives the mug
    let functional = Box::new(|p: &Point3| p[0] > 0.0);
    Object { pieces, functional }
}

fn hammer(j: &mut Jitter) -> Object {
    let rs = 0.011 * j.f();
    let ls = 0.26 * j.f();
    let hx = 0.018 * j.f();
    let hz = 0.055 * j.f();
    let mut pieces = vec![Piece::new(
        Surface::Cylinder { radius: rs, height: ls },
        [0.0; 3],
        part::HANDLE,
    )
    .along([1.0, 0.0, 0.0])];
    let mut head = box_pieces([ls, 0.0, 0.0], [hx, hx, hz], part::HEAD);
    head[0].part = part::HEAD_FACE; // -z face strikes
    pieces.extend(head);
    Object {
        pieces,
        functional: any_point(),
    }
}

fn button_box(j: &mut Jitter) -> Object {
    let half = [0.06 * j.f(), 0.06 * j.f(), 0.025 * j.f()];
    let rb = 0.022 * j.f();
    let hb = 0.015 * j.f();
    let top = 2.0 * half[2];
    let mut pieces = box_pieces([0.0, 0.0, half[2]], half, part::BUTTON_BASE);
    pieces.push(Piece::new(
        Surface::Cylinder {
            radius: rb,
            height: hb,
        },
        [0.0, 0.0, top],
        part::BUTTON,
    ));
    pieces.push(Piece::new(
        Surface::Annulus {
            r_in: 0.0,
            r_out: rb,
        },
        [0.0, 0.0, top + hb],
        part::BUTTON,
    ));
    Object {
        pieces,
        functional: any_point(),
    }
}

fn toast(j: &mut Jitter) -> Object {
    let half = [0.05 * j.f(), 0.008 * j.f(), 0.05 * j.f()];
    let mut pieces = box_pieces([0.0, 0.0, half[2]], half, part::TOAST);
    pieces[3].part = part::CRUST; // +z face
    let cut = 0.6 * half[2];
    let functional = Box::new(move |p: &Point3| p[2] < cut);
    Object { pieces, functional }
}

fn toaster(j: &mut Jitter) -> Object {
    let half = [0.12 * j.f(), 0.07 * j.f(), 0.08 * j.f()];
    let slot_half_len = 0.055 * j.f();
    let slot_depth = 0.06 * j.f();
    let top = 2.0 * half[2];
    let mut pieces = box_pieces([0.0, 0.0, half[2]], half, part::TOASTER);
    let zc = top - slot_depth / 2.0;
    for s in [-1.0, 1.0] {
        pieces.push(
            Piece::new(
                Surface::Rect {
                    a: slot_half_len,
                    b: slot_depth / 2.0,
                },
                [0.0, s * 0.012, zc],
                part::SLOT,
            )
            .with_frame(frame([1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, -1.0, 0.0])),
        );
    }
    pieces.push(Piece::new(
        Surface::Rect {
            a: slot_half_len,
            b: 0.012,
        },
        [0.0, 0.0, top - slot_depth],
        part::SLOT,
    ));
    Object {
        pieces,
        functional: any_point(),
    }
}

fn knife(j: &mut Jitter) -> Object {
    let hl = 0.05 * j.f();
    let bl = 0.14 * j.f();
    let bh = 0.03 * j.f();
    let mut pieces = box_pieces([-hl, 0.0, 0.0], [hl, 0.01, 0.012], part::HANDLE);
    for s in [-1.0, 1.0] {
        pieces.push(
            Piece::new(
                Surface::Rect {
                    a: bl / 2.0,
                    b: bh / 2.0,
                },
                [bl / 2.0, s * 0.0015, -bh / 2.0],
                part::BLADE,
            )
            .with_frame(frame([1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, -1.0, 0.0])),
        );
    }
    pieces.push(
        Piece::new(
            Surface::Cylinder {
                radius: 0.002,
                height: bl,
            },
            [0.0, 0.0, -bh],
            part::EDGE,
        )
        .along([1.0, 0.0, 0.0]),
    );
    Object {
        pieces,
        functional: any_point(),
    }
}

fn fruit(j: &mut Jitter) -> Object {
    let r = 0.045 * j.f();
    let hs = 0.015 * j.f();
    let pieces = vec![
        Piece::new(sphere_full(r), [0.0, 0.0, r], part::FRUIT),
        Piece::new(
            Surface::Cylinder {
                radius: 0.003,
                height: hs,
            },
            [0.0, 0.0, 2.0 * r - 0.002],
            part::STEM,
        ),
    ];
    let functional = Box::new(move |p: &Point3| p[2] - r > 0.6 * r);
    Object { pieces, functional }
}

fn objects(verb: Verb, j: &mut Jitter) -> (Object, Object) {
    match verb {
        Verb::Pour => (teapot(j), bowl(j)),
        Verb::Hang => (mug(j), mug_tree(j)),
        Verb::Press => (hammer(j), button_box(j)),
        Verb::Insert => (toast(j), toaster(j)),
        Verb::Cut => (knife(j), fruit(j)),
    }
}

fn sample_seed(verb: Verb, role: u64) -> u64 {
    0x9e37_79b9_7f4a_7c15u64
        .wrapping_mul(verb.index() as u64 + 1)
        .wrapping_add(role)
}

fn build_cloud(
    obj: &Object,
    functional_part: u32,
    n: usize,
    seed: u64,
    opts: &GenOptions,
    category: &AffordanceCategory,
) -> Result<FeatureCloud> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (pts, parts) = sample_pieces(&obj.pieces, n, &mut rng);
    let functional: Vec<usize> = (0..pts.len())
        .filter(|&i| parts[i] == functional_part && (obj.functional)(&pts[i]))
        .collect();
    if functional.is_empty() {
        return Err(Error::invalid(format!(
            "{}: no functional points sampled; increase n_points",
            category.name
        )));
    }
    let cloud = FeatureCloud::from_points(pts, 0)?.with_part_labels(parts)?;
    let (_, rec) = normalize_cloud(&cloud)?;
    let sigma = opts.sigma * rec.scale;
    let contacts: Vec<Point3> = functional.iter().map(|&i| cloud.points()[i]).collect();
    let mut cloud = cloud;
    cloud.set_affordance_channel(opts.channels, category.id, &vec![0.0; n])?;
    propagate_labels(&cloud, &ContactAnnotation::new(contacts, sigma)?, category)
}

/// Deterministic object pair for `verb`.
///
/// Point sampling depends only on the verb; `instance_seed` drives per-part
/// dimension changes of relative size up to `perturbation`.
pub fn generate_pair(
    verb: Verb,
    instance_seed: u64,
    perturbation: f64,
    opts: &GenOptions,
) -> Result<ObjectPair> {
    if !(0.0..=0.5).contains(&perturbation) {
        return Err(Error::invalid(format!(
            "perturbation must be in [0, 0.5], got {perturbation}"
        )));
    }
    if opts.channels <= verb.index() {
        return Err(Error::invalid(format!(
            "{} channels cannot hold category {}",
            opts.channels, verb
        )));
    }
    let mut j = Jitter::new(instance_seed, perturbation);
    let (src, tgt) = objects(verb, &mut j);
    let (fs, ft) = verb.functional_parts();
    let category = verb.category();
    let source = build_cloud(&src, fs, opts.n_points, sample_seed(verb, 1), opts, &category)?;
    let target = build_cloud(&tgt, ft, opts.n_points, sample_seed(verb, 2), opts, &category)?;
    ObjectPair::new(source, target, category)
}

/// How stand-in features are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    /// Fixed unit vector per part id plus Gaussian noise.
    Parts,
    /// All-zero features.
    None,
}

/// One unit vector per part id, shared by every instance and category.
///
/// For `dim ≥ 256` every pair of vectors has |cos| < 0.3; violators are redrawn.
pub fn part_vectors(dim: usize, feature_seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(feature_seed);
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(part::COUNT);
    while out.len() < part::COUNT {
        let mut tries = 0;
        let v = loop {
            let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= n);
            tries += 1;
            let ok = dim < 256 && tries > 100 || out.iter().all(|u| cosine(u, &v).abs() < 0.3);
            if ok {
                break v;
            }
        };
        out.push(v);
    }
    out
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn cloud_hash(cloud: &FeatureCloud, role: u64) -> u64 {
    // FNV-1a over the coordinate bits
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ role;
    for p in cloud.points() {
        for c in p {
            for b in c.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100_0000_01b3);
            }
        }
    }
    h
}

fn features_for(
    cloud: &FeatureCloud,
    dim: usize,
    vectors: &[Vec<f64>],
    feature_seed: u64,
    noise: f64,
    mode: FeatureMode,
    role: u64,
) -> Result<FeatureCloud> {
    let parts = cloud
        .part_labels()
        .ok_or_else(|| Error::invalid("synthetic features need part labels"))?;
    if mode == FeatureMode::None {
        return cloud.with_features(dim, vec![0.0; cloud.len() * dim]);
    }
    let normal = Normal::new(0.0, noise.max(0.0)).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(feature_seed ^ cloud_hash(cloud, role));
    let mut feats = Vec::with_capacity(cloud.len() * dim);
    for &p in parts {
        let v = vectors
            .get(p as usize)
            .ok_or_else(|| Error::invalid(format!("part id {p} out of range")))?;
        for x in v {
            let e = if noise > 0.0 { normal.sample(&mut rng) } else { 0.0 };
            feats.push(x + e);
        }
    }
    cloud.with_features(dim, feats)
}

/// Fills both clouds of a pair with part-consistent stand-in features.
pub fn synth_features(
    pair: &ObjectPair,
    dim: usize,
    feature_seed: u64,
    noise: f64,
    mode: FeatureMode,
) -> Result<ObjectPair> {
    if dim == 0 {
        return Err(Error::invalid("feature dimension must be ≥ 1"));
    }
    let vectors = part_vectors(dim, feature_seed);
    Ok(ObjectPair {
        source: features_for(&pair.source, dim, &vectors, feature_seed, noise, mode, 1)?,
        target: features_for(&pair.target, dim, &vectors, feature_seed, noise, mode, 2)?,
        category: pair.category.clone(),
    })
}
