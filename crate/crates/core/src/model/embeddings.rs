//! Export of patch tokens for external projection.

use std::fmt::Write as _;
use std::path::Path;

use super::network::{group_cloud, tokenize, Role};
use super::params::{ModelConfig, ModelParams};
use crate::cloud::{normalize_cloud, ObjectPair};
use crate::error::{Error, Result};

/// Text dump: header `ooaf-emb 1 <rows> <dim>`, then one row per token:
/// the embedding values, the part label of its center (`-1` if unknown) and
/// the category id.
pub fn format_patch_embeddings(pairs: &[ObjectPair], params: &ModelParams<f32>, config: &ModelConfig) -> Result<String> {
    let mut rows = Vec::new();
    for pair in pairs {
        for (cloud, role) in [(&pair.source, Role::Source), (&pair.target, Role::Target)] {
            let (norm, _) = normalize_cloud(cloud)?;
            let g = group_cloud::<f32>(&norm, config)?;
            let tb = tokenize(&norm, role, params, config)?;
            for (t, &ci) in g.center_idx.iter().enumerate() {
                let part = norm
                    .part_labels()
                    .map(|p| p[ci] as i64)
                    .unwrap_or(-1);
                rows.push((tb.tokens.row(t).to_vec(), part, pair.category.id));
            }
        }
    }
    let mut out = String::new();
    let _ = writeln!(out, "ooaf-emb 1 {} {}", rows.len(), config.token_dim);
    for (e, part, cat) in rows {
        if e.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite embedding"));
        }
        let vals: Vec<String> = e.iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(out, "{} {part} {cat}", vals.join(" "));
    }
    Ok(out)
}

pub fn dump_patch_embeddings(
    pairs: &[ObjectPair],
    params: &ModelParams<f32>,
    config: &ModelConfig,
    path: impl AsRef<Path>,
) -> Result<usize> {
    let text = format_patch_embeddings(pairs, params, config)?;
    let path = path.as_ref();
    std::fs::write(path, &text).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().count() - 1)
}
