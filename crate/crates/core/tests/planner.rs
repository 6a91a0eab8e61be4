use nalgebra::{Rotation3, Vector3};
use ooaf::data::{generate_pair, GenOptions, Verb};
use ooaf::planner::*;
use ooaf::{FeatureCloud, Point3, RigidTransform};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cloud(points: Vec<Point3>, a: Vec<f64>) -> FeatureCloud {
    FeatureCloud::from_points(points, 0)
        .unwrap()
        .with_affordance(1, a)
        .unwrap()
}

fn blob(n: usize, rng: &mut ChaCha8Rng) -> Vec<Point3> {
    (0..n)
        .map(|_| {
            [
                rng.random_range(-0.6..0.6),
                rng.random_range(-0.3..0.3),
                rng.random_range(-0.15..0.15),
            ]
        })
        .collect()
}

/// Asymmetric object with a graded functional patch on one side.
fn asym_object(n: usize, seed: u64) -> FeatureCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = blob(n, &mut rng);
    let a = pts
        .iter()
        .map(|p| if p[0] > 0.2 && p[1] > -0.1 { 0.4 + p[0] } else { 0.0 })
        .collect();
    cloud(pts, a)
}

fn term(kind: TermKind, weight: f64, params: &[(&str, f64)]) -> ConstraintTerm {
    let raw = params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    ConstraintTerm::new(kind, weight, &raw).unwrap()
}

fn brute_min_dist(a: &[Point3], b: &[Point3]) -> f64 {
    a.iter()
        .flat_map(|p| b.iter().map(move |q| ooaf::cloud::dist(p, q)))
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn builtin_weights_match_task_table() {
    let expect: [(&str, &[f64]); 5] = [
        ("pour", &[0.3, 0.2, 0.3, 0.1]),
        ("hang", &[0.3, 0.3, 0.3, 0.1]),
        ("cut", &[0.4, 0.4, 0.2]),
        ("press", &[0.4, 0.3, 0.2, 0.1]),
        ("insert", &[0.3, 0.4, 0.2, 0.1]),
    ];
    for (name, w) in expect {
        let spec = builtin_spec(name).unwrap();
        assert_eq!(spec.weights(), w, "{name}");
        assert_eq!(spec.terms[0].kind, TermKind::AffordanceAlignment);
    }
}

#[test]
fn spec_files_on_disk_match_builtins() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("specs");
    for name in builtin_names() {
        assert_eq!(load_spec(dir.join(format!("{name}.json"))).unwrap(), builtin_spec(name).unwrap());
    }
}

#[test]
fn negative_weight_is_a_validation_error() {
    let text = r#"{"task":"x","terms":[{"type":"collision","weight":-1,"params":{}}]}"#;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, text).unwrap();
    assert!(load_spec(&path).unwrap_err().is_validation());
}

#[test]
fn region_centroid_matches_direct_sum() {
    let obj = asym_object(500, 3);
    let r = high_affordance_region(&obj, 0).unwrap();
    let a = obj.affordance_channel(0).unwrap();
    let (mut num, mut den) = ([0.0; 3], 0.0);
    for i in 0..obj.len() {
        if a[i] >= 0.5 {
            for d in 0..3 {
                num[d] += a[i] * obj.points()[i][d];
            }
            den += a[i];
        }
    }
    let c = r.weighted_centroid();
    for d in 0..3 {
        assert!((c[d] - num[d] / den).abs() < 1e-12);
    }
}

#[test]
fn alignment_of_coincident_regions_is_zero() {
    let obj = asym_object(300, 1);
    let t = term(TermKind::AffordanceAlignment, 1.0, &[]);
    assert_eq!(eval_term(&t, &obj, &obj, 0, &RigidTransform::identity()).unwrap(), 0.0);
}

#[test]
fn clearance_boundary_cases() {
    let d_min = 0.1;
    let t = term(TermKind::Clearance, 1.0, &[("d_min", d_min)]);
    let square = |x0: f64| -> FeatureCloud {
        let pts = (0..25).map(|i| [x0, (i / 5) as f64 * 0.05, (i % 5) as f64 * 0.05]).collect();
        cloud(pts, vec![1.0; 25])
    };
    let (src, tgt) = (square(0.0), square(2.0 * d_min));
    assert_eq!(eval_term(&t, &src, &tgt, 0, &RigidTransform::identity()).unwrap(), 0.0);
    let touch = RigidTransform::from_translation([2.0 * d_min, 0.0, 0.0]);
    assert_eq!(eval_term(&t, &src, &tgt, 0, &touch).unwrap(), 1.0);
    let half = RigidTransform::from_translation([1.5 * d_min, 0.0, 0.0]);
    let oracle = (d_min - brute_min_dist(&[[1.5 * d_min, 0.0, 0.0]], tgt.points())) / d_min;
    assert!((eval_term(&t, &src, &tgt, 0, &half).unwrap() - oracle).abs() < 1e-12);
}

/// Rod along `dir` with unit affordance.
fn rod(dir: [f64; 3]) -> FeatureCloud {
    let pts = (0..41).map(|i| {
        let s = i as f64 / 20.0 - 1.0;
        [s * dir[0], s * dir[1], s * dir[2]]
    });
    cloud(pts.collect(), vec![1.0; 41])
}

fn plate() -> FeatureCloud {
    let pts = (0..100).map(|i| [(i / 10) as f64 * 0.1, (i % 10) as f64 * 0.1, 0.0]).collect();
    cloud(pts, vec![1.0; 100])
}

#[test]
fn tilt_term_against_dot_product_oracle() {
    let t = term(TermKind::OrientationTilt, 1.0, &[("min_deg", 30.0), ("max_deg", 60.0)]);
    for (deg, expect) in [(45.0f64, 0.0), (75.0, 15.0 / 90.0), (10.0, 20.0 / 90.0), (60.0, 0.0)] {
        let r = deg.to_radians();
        let dir = [r.sin() * 0.6, r.sin() * 0.8, r.cos()];
        let angle = (dir[2].abs() / (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt())
            .acos()
            .to_degrees();
        assert!((angle - deg).abs() < 1e-9);
        let got = eval_term(&t, &rod(dir), &plate(), 0, &RigidTransform::identity()).unwrap();
        assert!((got - expect).abs() < 1e-9, "{deg}: {got}");
    }
}

#[test]
fn perpendicular_term() {
    let t = term(TermKind::Perpendicular, 1.0, &[]);
    let id = RigidTransform::identity();
    assert!(eval_term(&t, &rod([0.0, 0.0, 1.0]), &plate(), 0, &id).unwrap() < 1e-12);
    assert!((eval_term(&t, &rod([1.0, 0.0, 0.0]), &plate(), 0, &id).unwrap() - 1.0).abs() < 1e-12);
    // a rod as target region has no normal
    let err = eval_term(&t, &rod([0.0, 0.0, 1.0]), &rod([1.0, 0.0, 0.0]), 0, &id).unwrap_err();
    assert!(err.to_string().contains("perpendicular"));
}

#[test]
fn collision_and_containment_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let src = cloud(blob(80, &mut rng), vec![1.0; 80]);
    let tgt = cloud(blob(90, &mut rng), vec![1.0; 90]);
    let r_pen = 0.05;
    let id = RigidTransform::identity();
    let col = eval_term(&term(TermKind::Collision, 1.0, &[("r_pen", r_pen)]), &src, &tgt, 0, &id).unwrap();
    let oracle: f64 = src
        .points()
        .iter()
        .map(|p| (r_pen - brute_min_dist(&[*p], tgt.points())).max(0.0).powi(2) / (r_pen * r_pen))
        .sum::<f64>()
        / 80.0;
    assert!((col - oracle).abs() < 1e-12);

    let shift = RigidTransform::from_translation([0.65, 0.0, 0.0]);
    let cont = eval_term(&term(TermKind::Containment, 1.0, &[]), &src, &tgt, 0, &shift).unwrap();
    let hi_x = tgt.points().iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
    let outside = src.points().iter().filter(|p| p[0] + 0.65 > hi_x + 0.02).count();
    assert!((cont - outside as f64 / 80.0).abs() < 1e-12);
}

#[test]
fn stability_and_position_above() {
    let src = rod([0.0, 0.0, 1.0]);
    let tgt = plate();
    let z_up = RigidTransform::from_translation([0.45, 0.45, 0.3]);
    let stab = eval_term(&term(TermKind::Stability, 1.0, &[]), &src, &tgt, 0, &z_up).unwrap();
    assert!((stab - 0.3).abs() < 1e-12);
    let above = term(TermKind::PositionAbove, 1.0, &[("delta", 0.05)]);
    assert!(eval_term(&above, &src, &tgt, 0, &z_up).unwrap() < 1e-12);
    let low = RigidTransform::from_translation([0.45, 0.45, -0.2]);
    assert!((eval_term(&above, &src, &tgt, 0, &low).unwrap() - 0.25).abs() < 1e-12);
}

#[test]
fn objective_is_weighted_sum_and_argmin_scale_free() {
    let src = asym_object(300, 4);
    let tgt = asym_object(300, 5);
    let spec = builtin_spec("hang").unwrap();
    let scene = PlannerScene::new(&src, &tgt, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cands: Vec<RigidTransform> = (0..20)
        .map(|_| {
            let mut t = RigidTransform::random_rotation(&mut rng);
            t.translation = Vector3::new(rng.random(), rng.random(), rng.random()) * 0.3;
            t
        })
        .collect();
    let doubled = spec.scaled(2.0).unwrap();
    let argmin = |s: &ConstraintSpec| {
        let totals: Vec<f64> = cands.iter().map(|t| scene.objective(s, t).unwrap().0).collect();
        (0..totals.len()).min_by(|&i, &j| totals[i].total_cmp(&totals[j])).unwrap()
    };
    for t in &cands {
        let (total, per) = scene.objective(&spec, t).unwrap();
        let sum: f64 = spec.terms.iter().zip(&per).map(|(k, s)| k.weight * s).sum();
        assert!((total - sum).abs() < 1e-9);
        assert!((scene.objective(&doubled, t).unwrap().0 - 2.0 * total).abs() < 1e-9);
        assert!(per.iter().all(|s| s.is_finite() && *s >= 0.0));
    }
    assert_eq!(argmin(&spec), argmin(&doubled));
    let single = ConstraintSpec::new("one", vec![spec.terms[1].clone()]).unwrap();
    let single = single.scaled(1.0 / spec.terms[1].weight).unwrap();
    let (total, per) = scene.objective(&single, &cands[0]).unwrap();
    assert_eq!(total, per[0]);
}

#[test]
fn solver_recovers_pure_translation() {
    let src = asym_object(400, 6);
    let offset = RigidTransform::from_translation([0.3, -0.2, 0.1]);
    let tgt = ooaf::se3_apply(&offset, &src);
    let spec = ConstraintSpec::new("align", vec![term(TermKind::AffordanceAlignment, 1.0, &[])]).unwrap();
    let opts = SolveOptions {
        restarts: 4,
        tolerance: 1e-14,
        ..SolveOptions::default()
    };
    let res = solve(&spec, &src, &tgt, 0, &opts).unwrap();
    let c = high_affordance_region(&src, 0).unwrap().weighted_centroid();
    let moved = res.transform.apply_point(&c);
    let goal = offset.apply_point(&c);
    assert!(ooaf::cloud::dist(&moved, &goal) < 1e-3);
    assert!(res.total_score <= scene_identity_score(&spec, &src, &tgt));
}

fn scene_identity_score(spec: &ConstraintSpec, src: &FeatureCloud, tgt: &FeatureCloud) -> f64 {
    objective(spec, src, tgt, 0, &RigidTransform::identity()).unwrap().0
}

#[test]
fn solver_is_deterministic_and_mode_independent() {
    let src = asym_object(200, 7);
    let tgt = asym_object(200, 8);
    let spec = builtin_spec("hang").unwrap();
    let opts = SolveOptions {
        restarts: 6,
        max_iterations: 150,
        seed: 11,
        ..SolveOptions::default()
    };
    let a = solve(&spec, &src, &tgt, 0, &opts).unwrap();
    let b = solve(&spec, &src, &tgt, 0, &opts).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    let par = solve(&spec, &src, &tgt, 0, &SolveOptions { parallel: true, ..opts.clone() }).unwrap();
    assert_eq!(a.to_json(), par.to_json());
    assert!(a.total_score <= scene_identity_score(&spec, &src, &tgt));
    let sum: f64 = a.terms.iter().map(|t| t.weight * t.score).sum();
    assert!((a.total_score - sum).abs() < 1e-9);
    assert_eq!(a.restarts_run, 6);
}

fn pour_scene() -> (FeatureCloud, FeatureCloud, usize) {
    let pair = generate_pair(Verb::Pour, 0, 0.0, &GenOptions::default()).unwrap();
    let ch = pair.category.id;
    (pair.source, pair.target, ch)
}

#[test]
fn pour_spout_above_beats_spout_below() {
    let (src, tgt, ch) = pour_scene();
    let spec = builtin_spec("pour").unwrap();
    let scene = PlannerScene::new(&src, &tgt, ch).unwrap();
    // Rotate so the spout axis sits 45 degrees from gravity.
    let a = src.affordance_channel(ch).unwrap();
    let axis = principal_axis_oracle(src.points(), &a);
    let want = Vector3::new(45f64.to_radians().sin(), 0.0, -45f64.to_radians().cos());
    let rot = Rotation3::rotation_between(&axis, &want).unwrap();
    let place = |dz: f64| {
        let mut t = RigidTransform::new(*rot.matrix(), Vector3::zeros()).unwrap();
        let s = t.apply_point(&scene.src_region_centroid());
        let g = scene.tgt_region_centroid();
        t.translation = Vector3::new(g[0] - s[0], g[1] - s[1], g[2] + dz - s[2]);
        t
    };
    let above = place(0.15);
    let below = place(-0.15);
    let tilt = spec.terms.iter().position(|t| t.kind == TermKind::OrientationTilt).unwrap();
    let (sa, pa) = scene.objective(&spec, &above).unwrap();
    let (sb, _) = scene.objective(&spec, &below).unwrap();
    assert!(pa[tilt] < 1e-9, "tilt score {}", pa[tilt]);
    assert!(sa < sb, "above {sa} below {sb}");
}

/// Power iteration on the weighted covariance.
fn principal_axis_oracle(points: &[Point3], w: &[f64]) -> Vector3<f64> {
    let total: f64 = w.iter().sum();
    let mut mu = Vector3::zeros();
    for (p, &wi) in points.iter().zip(w) {
        mu += Vector3::from(*p) * wi;
    }
    mu /= total;
    let mut cov = nalgebra::Matrix3::zeros();
    for (p, &wi) in points.iter().zip(w) {
        let d = Vector3::from(*p) - mu;
        cov += d * d.transpose() * wi;
    }
    let mut v = Vector3::new(1.0, 0.7, 0.3);
    for _ in 0..500 {
        v = (cov * v).normalize();
    }
    v
}

fn random_rigid(rng: &mut ChaCha8Rng) -> RigidTransform {
    let mut t = RigidTransform::random_rotation(rng);
    t.translation = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    t
}

fn conjugated_scores(kinds: &[ConstraintTerm], g: &RigidTransform, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let src = asym_object(150, seed);
    let tgt = asym_object(150, seed + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = random_rigid(&mut rng);
    let spec = ConstraintSpec::new("inv", kinds.to_vec()).unwrap();
    let base = objective(&spec, &src, &tgt, 0, &t).unwrap().1;
    let gs = ooaf::se3_apply(g, &src);
    let gt = ooaf::se3_apply(g, &tgt);
    let conj = g.compose(&t).compose(&g.inverse());
    let moved = objective(&spec, &gs, &gt, 0, &conj).unwrap().1;
    (base, moved)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn rigid_invariance_of_frame_free_terms(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let g = random_rigid(&mut rng);
        let kinds = [
            term(TermKind::AffordanceAlignment, 1.0, &[]),
            term(TermKind::Clearance, 1.0, &[("d_min", 0.3)]),
            term(TermKind::ContactQuality, 1.0, &[]),
            term(TermKind::Collision, 1.0, &[("r_pen", 0.2)]),
        ];
        let (a, b) = conjugated_scores(&kinds, &g, seed);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }

    #[test]
    fn z_rotation_invariance_of_gravity_terms(seed in 0u64..1000, angle in -3.1f64..3.1, dz in -1.0f64..1.0) {
        let mut g = RigidTransform::rotation_z(angle);
        g.translation = Vector3::new(0.3, -0.2, dz);
        let kinds = [
            term(TermKind::PositionAbove, 1.0, &[]),
            term(TermKind::OrientationTilt, 1.0, &[("min_deg", 20.0), ("max_deg", 40.0)]),
            term(TermKind::Stability, 1.0, &[]),
        ];
        let (a, b) = conjugated_scores(&kinds, &g, seed);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }

    #[test]
    fn containment_invariant_under_axis_aligned_motions(seed in 0u64..1000, quarter in 0u32..4) {
        let mut g = RigidTransform::rotation_z(quarter as f64 * std::f64::consts::FRAC_PI_2);
        // snap round-off so box faces stay exactly axis aligned
        g.rotation = g.rotation.map(|v| v.round());
        g.translation = Vector3::new(0.25, 0.5, -0.75);
        let kinds = [term(TermKind::Containment, 1.0, &[("margin", 0.05)])];
        let (a, b) = conjugated_scores(&kinds, &g, seed);
        prop_assert!((a[0] - b[0]).abs() < 1e-9);
    }
}
