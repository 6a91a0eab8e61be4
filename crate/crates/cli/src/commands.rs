use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ooaf::data::{
    build_manifest, generate_pair, load_pair, occlude_pair, propagate_labels, synth_features, write_pair,
    ContactAnnotation, DatasetManifest, FeatureMode, GenOptions, Verb,
};
use ooaf::fusion::{fuse_cloud, load_camera};
use ooaf::io::format_cloud;
use ooaf::metrics::{evaluate_pairs, MetricReport};
use ooaf::model::{
    forward, format_patch_embeddings, grad_check, load_checkpoint, save_checkpoint, train_pairs, AttentionMode,
    ModelConfig, ModelParams,
};
use ooaf::planner::{builtin_spec, load_spec, solve, ConstraintSpec};
use ooaf::{load_cloud, normalize_cloud, AffordanceCategory, FeatureCloud, ObjectPair, Point3};
use serde::Deserialize;

use crate::render::{colorize, render_ppm};
use crate::{Attention, CliError, Command, Ctx, Features, Preset};

type Res<T = ()> = Result<T, CliError>;

/// Largest gradient-check error accepted as a pass.
const GRAD_CHECK_LIMIT: f64 = 1e-4;

pub fn run(cmd: &Command, ctx: &Ctx) -> Res {
    match cmd {
        Command::GenSynth {
            points,
            eval_per_category,
            perturbation,
            feature_dim,
            feature_noise,
            features,
            sigma,
            verbs,
        } => gen_synth(
            ctx,
            &SynthArgs {
                points: *points,
                eval: *eval_per_category,
                perturbation: *perturbation,
                feature_dim: *feature_dim,
                noise: *feature_noise,
                mode: match features {
                    Features::Parts => FeatureMode::Parts,
                    Features::None => FeatureMode::None,
                },
                sigma: *sigma,
                verbs,
            },
        ),
        Command::Fuse { points, cameras, mu } => fuse(ctx, points, cameras, *mu),
        Command::Annotate {
            cloud,
            contacts,
            category,
            sigma,
            channels,
            tolerance,
        } => annotate(ctx, cloud, contacts, category, *sigma, *channels, *tolerance),
        Command::Train {
            data,
            preset,
            epochs,
            lr,
            attention,
            feature_dim,
            no_augment,
        } => {
            let mut config = model_config(ctx, *preset)?;
            if let Some(e) = epochs {
                config.epochs = *e;
            }
            if let Some(lr) = lr {
                config.learning_rate = *lr;
            }
            if let Some(a) = attention {
                config.attention = match a {
                    Attention::Joint => AttentionMode::Joint,
                    Attention::SelfOnly => AttentionMode::SelfOnly,
                };
            }
            if *no_augment {
                config.augment = false;
            }
            train(ctx, data, config, *feature_dim)
        }
        Command::Predict { checkpoint, src, tgt } => predict(ctx, checkpoint, src, tgt),
        Command::Eval { checkpoint, data } => eval(ctx, checkpoint, data),
        Command::OccludeEval {
            checkpoint,
            data,
            levels,
        } => occlude_eval(ctx, checkpoint, data, levels),
        Command::OptimizePose {
            spec,
            src,
            tgt,
            category,
            restarts,
            max_iterations,
        } => optimize_pose(ctx, spec, src, tgt, category.as_deref(), *restarts, *max_iterations),
        Command::Render {
            cloud,
            channel,
            view,
            size,
        } => {
            let c = load_cloud(input(cloud)?)?;
            let colored = colorize(&c, *channel)?;
            let img = render_ppm(&c, *channel, *view, *size)?;
            let stem = stem(cloud);
            write_out(ctx, &format!("{stem}_heat.pc"), format_cloud(&colored))?;
            write_out(ctx, &format!("{stem}_heat.ppm"), img)?;
            ctx.info(format!("rendered channel {channel} of {} points", c.len()));
            Ok(())
        }
        Command::DumpEmbeddings { checkpoint, data } => {
            let (params, config) = load_checkpoint(input(checkpoint)?)?;
            let manifest = build_manifest(input(data)?)?;
            let pairs = all_pairs(&manifest)?;
            let text = format_patch_embeddings(&pairs, &params, &config)?;
            write_out(ctx, "embeddings.txt", &text)?;
            ctx.info(format!("{} patch embeddings of dimension {}", text.lines().count() - 1, config.token_dim));
            Ok(())
        }
        Command::GradCheck { points } => {
            let config = model_config(ctx, Preset::Small)?;
            let report = grad_check(&config, *points, ctx.seed)?;
            write_out(ctx, "gradcheck.json", to_json(&report)?)?;
            println!("max relative error: {:.3e} ({})", report.max_rel_error, report.worst_tensor);
            if report.max_rel_error < GRAD_CHECK_LIMIT && report.zero_perturbation_identical {
                Ok(())
            } else {
                Err(CliError::Runtime(format!(
                    "gradient check failed: {:.3e} ≥ {GRAD_CHECK_LIMIT:e}",
                    report.max_rel_error
                )))
            }
        }
    }
}

fn input(path: &Path) -> Res<&Path> {
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::Usage(format!("{} does not exist", path.display())))
    }
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or("cloud".into(), |s| s.to_string_lossy().into_owned())
}

fn write_out(ctx: &Ctx, rel: &str, contents: impl AsRef<[u8]>) -> Res<PathBuf> {
    let path = ctx.out.join(rel);
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(&path, contents).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    ctx.debug(format!("wrote {}", path.display()));
    Ok(path)
}

fn to_json<T: serde::Serialize>(v: &T) -> Res<String> {
    serde_json::to_string_pretty(v)
        .map(|s| s + "\n")
        .map_err(|e| CliError::Runtime(e.to_string()))
}

fn category(s: &str) -> Res<AffordanceCategory> {
    if let Ok(id) = s.parse::<usize>() {
        return Ok(Verb::ALL
            .get(id)
            .map(|v| v.category())
            .unwrap_or_else(|| AffordanceCategory::new(id, format!("category{id}"))));
    }
    Ok(Verb::from_name(s)?.category())
}

fn model_config(ctx: &Ctx, preset: Preset) -> Res<ModelConfig> {
    let base = match preset {
        Preset::Full => ModelConfig::default(),
        Preset::Compact => ModelConfig::compact(),
        Preset::Small => ModelConfig::small(),
    };
    let mut config = ctx.config.model_over(base)?;
    if ctx.seed_given {
        config.seed = ctx.seed;
    }
    Ok(config)
}

/// The training pair and every held-out pair, in manifest order.
fn all_pairs(manifest: &DatasetManifest) -> Res<Vec<ObjectPair>> {
    let mut out = Vec::new();
    for c in &manifest.categories {
        out.push(load_pair(&c.train)?);
        for e in &c.eval {
            out.push(load_pair(e)?);
        }
    }
    Ok(out)
}

/// Held-out pairs keyed by their directory relative to the dataset root.
fn eval_pairs(manifest: &DatasetManifest, root: &Path) -> Res<Vec<(String, ObjectPair)>> {
    if manifest.num_eval() == 0 {
        return Err(ooaf::Error::Dataset(format!("{} has no evaluation pairs", root.display())).into());
    }
    manifest
        .eval_samples()
        .map(|p| {
            let id = p.dir.strip_prefix(root).unwrap_or(&p.dir).to_string_lossy().replace('\\', "/");
            Ok((id, load_pair(p)?))
        })
        .collect()
}

struct SynthArgs<'a> {
    points: usize,
    eval: usize,
    perturbation: f64,
    feature_dim: usize,
    noise: f64,
    mode: FeatureMode,
    sigma: f64,
    verbs: &'a [String],
}

/// Instance seed of pair `index` (0 = training pair) under the global seed.
fn instance_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(index as u64)
}

fn gen_synth(ctx: &Ctx, a: &SynthArgs) -> Res {
    let verbs = if a.verbs.is_empty() {
        Verb::ALL.to_vec()
    } else {
        a.verbs.iter().map(|v| Verb::from_name(v)).collect::<Result<Vec<_>, _>>()?
    };
    let opts = GenOptions {
        n_points: a.points,
        sigma: a.sigma,
        channels: Verb::ALL.len(),
    };
    for verb in &verbs {
        for i in 0..=a.eval {
            let seed = instance_seed(ctx.seed, i);
            let perturbation = if i == 0 { 0.0 } else { a.perturbation };
            let pair = generate_pair(*verb, seed, perturbation, &opts)?;
            let pair = synth_features(&pair, a.feature_dim, ctx.seed, a.noise, a.mode)?;
            let dir = if i == 0 {
                ctx.out.join(verb.name()).join("train")
            } else {
                ctx.out.join(verb.name()).join("eval").join(format!("{:03}", i - 1))
            };
            write_pair(&dir, &pair, seed)?;
            ctx.debug(format!("wrote {}", dir.display()));
        }
    }
    ctx.info(format!(
        "{} categories, 1 training pair and {} held-out pairs each, in {}",
        verbs.len(),
        a.eval,
        ctx.out.display()
    ));
    Ok(())
}

fn fuse(ctx: &Ctx, points: &Path, cameras: &[PathBuf], mu: f64) -> Res {
    let cloud = load_cloud(input(points)?)?;
    let views = cameras
        .iter()
        .map(|c| Ok(load_camera(input(c)?)?))
        .collect::<Res<Vec<_>>>()?;
    let fused = fuse_cloud(cloud.points(), &views, mu)?;
    write_out(ctx, "fused.pc", format_cloud(&fused.cloud))?;
    if let Some(mask) = &fused.mask {
        let mut text = String::new();
        for row in mask.chunks(fused.mask_dim.max(1)) {
            let vals: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            let _ = writeln!(text, "{}", vals.join(" "));
        }
        write_out(ctx, "fused_mask.txt", text)?;
    }
    let unseen = fused.coverage.iter().filter(|&&c| c == 0).count();
    ctx.info(format!(
        "fused {} views onto {} points ({unseen} seen by no view)",
        views.len(),
        cloud.len()
    ));
    Ok(())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ContactsFile {
    List(Vec<Point3>),
    Object { contacts: Vec<Point3> },
}

fn annotate(
    ctx: &Ctx,
    cloud_path: &Path,
    contacts: &Path,
    cat: &str,
    sigma: f64,
    channels: usize,
    tolerance: f64,
) -> Res {
    let cloud = load_cloud(input(cloud_path)?)?;
    let text = std::fs::read_to_string(input(contacts)?)
        .map_err(|e| CliError::Usage(format!("{}: {e}", contacts.display())))?;
    let parsed: ContactsFile = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{}: expected a list of [x, y, z]: {e}", contacts.display())))?;
    let contacts = match parsed {
        ContactsFile::List(c) | ContactsFile::Object { contacts: c } => c,
    };
    let category = category(cat)?;
    // the bandwidth is given in normalized units
    let (_, record) = normalize_cloud(&cloud)?;
    let ann = ContactAnnotation::new(contacts, sigma * record.scale)?;
    ann.validate_on(&cloud, tolerance)?;
    let mut base = cloud.clone();
    if base.channels() == 0 {
        base.set_affordance_channel(channels, category.id, &vec![0.0; base.len()])?;
    }
    let labelled = propagate_labels(&base, &ann, &category)?;
    let name = format!("{}_labels.pc", stem(cloud_path));
    write_out(ctx, &name, format_cloud(&labelled))?;
    ctx.info(format!("labelled channel {} ({}) from {} contacts", category.id, category.name, ann.contacts.len()));
    Ok(())
}

fn train(ctx: &Ctx, data: &Path, mut config: ModelConfig, feature_dim: Option<usize>) -> Res {
    let manifest = build_manifest(input(data)?)?;
    let pairs = manifest
        .categories
        .iter()
        .map(|c| load_pair(&c.train))
        .collect::<Result<Vec<_>, _>>()?;
    let found = pairs
        .first()
        .map(|p| p.source.feature_dim())
        .ok_or_else(|| ooaf::Error::Dataset("no training pairs".into()))?;
    match feature_dim {
        Some(d) => config.feature_dim = d,
        None if !ctx.config.sets_model_field("feature_dim") => config.feature_dim = found,
        None => {}
    }
    if config.feature_dim != found {
        return Err(ooaf::Error::Dimension(format!(
            "model expects {}-dimensional features, data has {found}",
            config.feature_dim
        ))
        .into());
    }
    let steps_per_epoch = pairs.len();
    let mut csv = String::from("step,epoch,category,loss\n");
    let outcome = train_pairs(&pairs, &config, |epoch, sample, loss| {
        let step = epoch * steps_per_epoch + sample;
        let _ = writeln!(csv, "{step},{epoch},{},{loss}", pairs[sample].category.name);
        if sample + 1 == steps_per_epoch {
            ctx.debug(format!("epoch {epoch}: loss {loss:.5}"));
        }
    })?;
    std::fs::create_dir_all(&ctx.out).map_err(|e| CliError::Runtime(format!("{}: {e}", ctx.out.display())))?;
    save_checkpoint(ctx.out.join("model.ckpt"), &outcome.params, &config)?;
    write_out(ctx, "losses.csv", &csv)?;
    let last = &outcome.losses[outcome.losses.len().saturating_sub(steps_per_epoch)..];
    let summary = serde_json::json!({
        "steps": outcome.losses.len(),
        "parameters": outcome.params.num_parameters(),
        "final_epoch_mean_loss": last.iter().sum::<f64>() / last.len().max(1) as f64,
        "config": config,
    });
    write_out(ctx, "train.json", to_json(&summary)?)?;
    ctx.info(format!(
        "trained {} steps on {} pairs, final epoch loss {:.5}",
        outcome.losses.len(),
        pairs.len(),
        summary["final_epoch_mean_loss"].as_f64().unwrap_or(f64::NAN)
    ));
    Ok(())
}

fn with_predictions(cloud: &FeatureCloud, probs: &ooaf::model::Mat<f32>) -> Res<FeatureCloud> {
    let values = probs.data.iter().map(|&v| v as f64).collect();
    Ok(cloud.clone().with_affordance(probs.cols, values)?)
}

fn predict(ctx: &Ctx, checkpoint: &Path, src: &Path, tgt: &Path) -> Res {
    let (params, config) = load_checkpoint(input(checkpoint)?)?;
    let source = load_cloud(input(src)?)?;
    let target = load_cloud(input(tgt)?)?;
    let pair = ObjectPair::new(source, target, AffordanceCategory::new(0, "unknown"))?;
    let (ps, pt) = forward(&pair, &params, &config, None)?;
    write_out(ctx, "src_pred.pc", format_cloud(&with_predictions(&pair.source, &ps)?))?;
    write_out(ctx, "tgt_pred.pc", format_cloud(&with_predictions(&pair.target, &pt)?))?;
    ctx.info(format!("predicted {} channels for {} + {} points", ps.cols, ps.rows, pt.rows));
    Ok(())
}

fn load_model(checkpoint: &Path) -> Res<(ModelParams<f32>, ModelConfig)> {
    Ok(load_checkpoint(input(checkpoint)?)?)
}

fn samples_csv(report: &MetricReport) -> String {
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    let mut out = String::from("id,category,src_aiou,src_sim,src_mae,src_auc,tgt_aiou,tgt_sim,tgt_mae,tgt_auc\n");
    for s in &report.samples {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            s.id,
            s.category,
            s.source.aiou,
            opt(s.source.sim),
            s.source.mae,
            opt(s.source.auc),
            s.target.aiou,
            opt(s.target.sim),
            s.target.mae,
            opt(s.target.auc)
        );
    }
    out
}

fn eval(ctx: &Ctx, checkpoint: &Path, data: &Path) -> Res {
    let (params, config) = load_model(checkpoint)?;
    let manifest = build_manifest(input(data)?)?;
    let pairs = eval_pairs(&manifest, data)?;
    let report = evaluate_pairs(&pairs, &params, &config, ctx.parallel)?;
    write_out(ctx, "report.json", to_json(&report)?)?;
    write_out(ctx, "report.txt", report.table())?;
    write_out(ctx, "samples.csv", samples_csv(&report))?;
    ctx.info(report.table().trim_end());
    Ok(())
}

/// Occlusion seed for sample `index` at `level` percent.
fn occlusion_seed(seed: u64, level: u32, index: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add((level as u64) << 32)
        .wrapping_add(2 * index as u64)
}

fn occlude_eval(ctx: &Ctx, checkpoint: &Path, data: &Path, levels: &[u32]) -> Res {
    if levels.is_empty() {
        return Err(CliError::Usage("--levels needs at least one value".into()));
    }
    if let Some(l) = levels.iter().find(|&&l| !(5..=60).contains(&l)) {
        return Err(CliError::Usage(format!("occlusion level {l}% outside 5..=60")));
    }
    let (params, config) = load_model(checkpoint)?;
    let manifest = build_manifest(input(data)?)?;
    let pairs = eval_pairs(&manifest, data)?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    let mut csv = String::from("level,aiou,sim,mae,auc\n");
    for &level in levels {
        let occluded = pairs
            .iter()
            .enumerate()
            .map(|(i, (id, p))| Ok((id.clone(), occlude_pair(p, level as f64 / 100.0, occlusion_seed(ctx.seed, level, i))?)))
            .collect::<Res<Vec<_>>>()?;
        let r = evaluate_pairs(&occluded, &params, &config, ctx.parallel)?;
        let m = r.overall;
        let _ = writeln!(csv, "{level},{},{},{},{}", m.aiou, opt(m.sim), m.mae, opt(m.auc));
        ctx.info(format!("{level:>3}% occluded: aIOU {:.2}, SIM {}", m.aiou, opt(m.sim.map(|s| (s * 1000.0).round() / 1000.0))));
    }
    write_out(ctx, "occlusion.csv", csv)?;
    Ok(())
}

fn optimize_pose(
    ctx: &Ctx,
    spec_arg: &str,
    src: &Path,
    tgt: &Path,
    cat: Option<&str>,
    restarts: Option<usize>,
    max_iterations: Option<usize>,
) -> Res {
    let path = Path::new(spec_arg);
    let spec: ConstraintSpec = if path.is_file() {
        load_spec(path)?
    } else {
        builtin_spec(spec_arg)?
    };
    let channel = match cat {
        Some(c) => category(c)?.id,
        None => Verb::from_name(&spec.task)
            .map_err(|_| {
                CliError::Usage(format!("spec task `{}` is not a known category; pass --category", spec.task))
            })?
            .index(),
    };
    let source = load_cloud(input(src)?)?;
    let target = load_cloud(input(tgt)?)?;
    let mut opts = ctx.config.solve.clone().unwrap_or_default();
    if ctx.seed_given || ctx.config.solve.is_none() {
        opts.seed = ctx.seed;
    }
    if let Some(r) = restarts {
        opts.restarts = r;
    }
    if let Some(m) = max_iterations {
        opts.max_iterations = m;
    }
    opts.parallel = ctx.parallel;
    let result = solve(&spec, &source, &target, channel, &opts)?;
    write_out(ctx, "pose.json", result.to_json() + "\n")?;
    let moved: Vec<Point3> = source.points().iter().map(|p| result.transform.apply_point(p)).collect();
    write_out(ctx, "src_posed.pc", format_cloud(&source.with_points(moved)?))?;
    ctx.info(format!(
        "{}: score {:.6} (restart {} of {})",
        spec.task, result.total_score, result.best_restart_index, result.restarts_run
    ));
    Ok(())
}
