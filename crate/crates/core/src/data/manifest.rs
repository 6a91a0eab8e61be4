//! On-disk dataset layout:
//!
//! ```text
//! <root>/<category>/train/{src.pc,tgt.pc,meta.json}
//! <root>/<category>/eval/<id>/{src.pc,tgt.pc,meta.json}
//! ```
//!
//! A `<root>/manifest.json` listing pair directories explicitly takes
//! precedence over the directory scan.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cloud::{AffordanceCategory, ObjectPair};
use crate::error::{Error, Result};
use crate::io::{load_cloud, save_cloud};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairMeta {
    pub category_id: usize,
    pub category_name: String,
    pub instance_seed: u64,
}

/// Files of one stored object pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairPaths {
    pub dir: PathBuf,
    pub meta: PairMeta,
}

impl PairPaths {
    pub fn src(&self) -> PathBuf {
        self.dir.join("src.pc")
    }

    pub fn tgt(&self) -> PathBuf {
        self.dir.join("tgt.pc")
    }

    fn read(dir: &Path) -> Result<Self> {
        let meta_path = dir.join("meta.json");
        let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: PairMeta = serde_json::from_str(&text)
            .map_err(|e| Error::Dataset(format!("{}: {e}", meta_path.display())))?;
        for f in ["src.pc", "tgt.pc"] {
            if !dir.join(f).is_file() {
                return Err(Error::Dataset(format!("{} is missing {f}", dir.display())));
            }
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            meta,
        })
    }

    pub fn category(&self) -> AffordanceCategory {
        AffordanceCategory::new(self.meta.category_id, self.meta.category_name.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryEntry {
    pub category: AffordanceCategory,
    pub train: PairPaths,
    pub eval: Vec<PairPaths>,
}

/// One training pair per category plus held-out evaluation pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    /// Sorted by category id; ids are exactly `0..K`.
    pub categories: Vec<CategoryEntry>,
}

impl DatasetManifest {
    pub fn num_categories(&self) -> usize {
        self.categories.len()
    }

    pub fn eval_samples(&self) -> impl Iterator<Item = &PairPaths> {
        self.categories.iter().flat_map(|c| c.eval.iter())
    }

    pub fn num_eval(&self) -> usize {
        self.categories.iter().map(|c| c.eval.len()).sum()
    }
}

#[derive(Debug, Deserialize)]
struct ManifestFile {
    categories: Vec<ManifestCategory>,
}

#[derive(Debug, Deserialize)]
struct ManifestCategory {
    name: String,
    train: String,
    #[serde(default)]
    eval: Vec<String>,
}

fn sorted_subdirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        if entry.path().is_dir() {
            out.push(entry.path());
        }
    }
    out.sort();
    Ok(out)
}

/// Scans (or reads `manifest.json` under) `root` and validates the
/// one-training-pair-per-category and train/eval disjointness invariants.
pub fn build_manifest(root: impl AsRef<Path>) -> Result<DatasetManifest> {
    let root = root.as_ref();
    if !root.is_dir() {
        return Err(Error::Dataset(format!("{} is not a directory", root.display())));
    }
    // (name, train dirs, eval dirs)
    let mut raw: Vec<(String, Vec<PathBuf>, Vec<PathBuf>)> = Vec::new();
    let listing = root.join("manifest.json");
    if listing.is_file() {
        let text = fs::read_to_string(&listing).map_err(|e| Error::io(&listing, e))?;
        let mf: ManifestFile = serde_json::from_str(&text)
            .map_err(|e| Error::Dataset(format!("{}: {e}", listing.display())))?;
        for c in mf.categories {
            raw.push((
                c.name,
                vec![root.join(c.train)],
                c.eval.iter().map(|e| root.join(e)).collect(),
            ));
        }
    } else {
        for cat_dir in sorted_subdirs(root)? {
            let train_dir = cat_dir.join("train");
            if !train_dir.is_dir() {
                continue;
            }
            let mut trains = vec![];
            if train_dir.join("meta.json").is_file() {
                trains.push(train_dir.clone());
            }
            for sub in sorted_subdirs(&train_dir)? {
                if sub.join("meta.json").is_file() {
                    trains.push(sub);
                }
            }
            let eval_dir = cat_dir.join("eval");
            let evals = if eval_dir.is_dir() {
                sorted_subdirs(&eval_dir)?
                    .into_iter()
                    .filter(|d| d.join("meta.json").is_file())
                    .collect()
            } else {
                vec![]
            };
            let name = cat_dir
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            raw.push((name, trains, evals));
        }
    }
    if raw.is_empty() {
        return Err(Error::Dataset(format!(
            "no categories found under {}",
            root.display()
        )));
    }

    let mut by_name: BTreeMap<String, CategoryEntry> = BTreeMap::new();
    for (dir_name, trains, evals) in raw {
        let mut train_pairs = trains
            .iter()
            .map(|d| PairPaths::read(d))
            .collect::<Result<Vec<_>>>()?;
        let name = train_pairs
            .first()
            .map(|p| p.meta.category_name.clone())
            .unwrap_or(dir_name);
        if train_pairs.len() != 1 || by_name.contains_key(&name) {
            let count = train_pairs.len() + usize::from(by_name.contains_key(&name));
            return Err(Error::Dataset(format!(
                "category `{name}` has {count} training pairs; exactly one is required"
            )));
        }
        let train = train_pairs.remove(0);
        let eval = evals
            .iter()
            .map(|d| PairPaths::read(d))
            .collect::<Result<Vec<_>>>()?;
        for e in &eval {
            if e.meta.category_name != name || e.meta.category_id != train.meta.category_id {
                return Err(Error::Dataset(format!(
                    "{} declares category `{}` ({}), expected `{}` ({})",
                    e.dir.display(),
                    e.meta.category_name,
                    e.meta.category_id,
                    name,
                    train.meta.category_id
                )));
            }
        }
        by_name.insert(
            name,
            CategoryEntry {
                category: train.category(),
                train,
                eval,
            },
        );
    }

    let mut categories: Vec<CategoryEntry> = by_name.into_values().collect();
    categories.sort_by_key(|c| c.category.id);
    for (i, c) in categories.iter().enumerate() {
        if c.category.id != i {
            return Err(Error::Dataset(format!(
                "category ids must be contiguous from 0; `{}` has id {} at position {i}",
                c.category.name, c.category.id
            )));
        }
    }

    // train/eval disjointness over canonical file paths
    let canon = |p: PathBuf| fs::canonicalize(&p).unwrap_or(p);
    let mut train_files: HashMap<PathBuf, String> = HashMap::new();
    for c in &categories {
        for f in [c.train.src(), c.train.tgt()] {
            train_files.insert(canon(f), c.category.name.clone());
        }
    }
    for c in &categories {
        for e in &c.eval {
            for f in [e.src(), e.tgt()] {
                if let Some(owner) = train_files.get(&canon(f.clone())) {
                    return Err(Error::Dataset(format!(
                        "evaluation file {} is also the training sample of `{owner}`; train and eval must be disjoint",
                        f.display()
                    )));
                }
            }
        }
    }
    Ok(DatasetManifest {
        root: root.to_path_buf(),
        categories,
    })
}

pub fn load_pair(paths: &PairPaths) -> Result<ObjectPair> {
    let source = load_cloud(paths.src())?;
    let target = load_cloud(paths.tgt())?;
    ObjectPair::new(source, target, paths.category())
}

/// Writes `src.pc`, `tgt.pc` and `meta.json` into `dir`.
pub fn write_pair(dir: impl AsRef<Path>, pair: &ObjectPair, instance_seed: u64) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_cloud(&pair.source, dir.join("src.pc"))?;
    save_cloud(&pair.target, dir.join("tgt.pc"))?;
    let meta = PairMeta {
        category_id: pair.category.id,
        category_name: pair.category.name.clone(),
        instance_seed,
    };
    let path = dir.join("meta.json");
    fs::write(&path, serde_json::to_string_pretty(&meta)? + "\n").map_err(|e| Error::io(&path, e))
}
