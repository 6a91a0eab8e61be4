//! Binary checkpoints: a magic line, the config as one JSON line, then
//! every tensor as `name rank dims…\n` followed by little-endian f32 data.

use std::path::Path;

use super::params::{ModelConfig, ModelParams};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &str = "OOAF-CKPT 1";

pub fn encode_checkpoint(params: &ModelParams<f32>, config: &ModelConfig) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC.as_bytes());
    out.push(b'\n');
    out.extend_from_slice(serde_json::to_string(config)?.as_bytes());
    out.push(b'\n');
    for (name, shape, data) in params.tensors() {
        let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
        out.extend_from_slice(format!("{name} {} {}\n", shape.len(), dims.join(" ")).as_bytes());
        for v in data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn take_line<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a str> {
    let rest = &bytes[*pos..];
    let end = rest.iter().position(|b| *b == b'\n')?;
    *pos += end + 1;
    std::str::from_utf8(&rest[..end]).ok()
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(ModelParams<f32>, ModelConfig)> {
    let bad = |m: String| Error::Dataset(format!("checkpoint: {m}"));
    let mut pos = 0;
    if take_line(bytes, &mut pos) != Some(CHECKPOINT_MAGIC) {
        return Err(bad("missing magic line".into()));
    }
    let json = take_line(bytes, &mut pos).ok_or_else(|| bad("missing config".into()))?;
    let config: ModelConfig = serde_json::from_str(json)?;
    config.validate()?;
    let mut params = ModelParams::<f32>::zeros(&config);
    let expected: Vec<(String, Vec<usize>)> = params
        .tensors()
        .into_iter()
        .map(|(n, s, _)| (n, s))
        .collect();
    for ((name, shape), dst) in expected.iter().zip(params.tensors_mut()) {
        let header = take_line(bytes, &mut pos).ok_or_else(|| bad(format!("missing tensor {name}")))?;
        let mut it = header.split(' ');
        let got_name = it.next().unwrap_or("");
        let rank: usize = it
            .next()
            .and_then(|r| r.parse().ok())
            .ok_or_else(|| bad(format!("bad header `{header}`")))?;
        let dims: Vec<usize> = it.filter_map(|d| d.parse().ok()).collect();
        if got_name != name || rank != dims.len() || &dims != shape {
            return Err(bad(format!("expected {name} {shape:?}, found `{header}`")));
        }
        let n = dst.len() * 4;
        if pos + n > bytes.len() {
            return Err(bad(format!("truncated data for {name}")));
        }
        for (v, chunk) in dst.iter_mut().zip(bytes[pos..pos + n].chunks_exact(4)) {
            *v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        }
        pos += n;
    }
    if pos != bytes.len() {
        return Err(bad("trailing bytes".into()));
    }
    if !params.is_finite() {
        return Err(bad("non-finite parameter".into()));
    }
    Ok((params, config))
}

pub fn save_checkpoint(path: impl AsRef<Path>, params: &ModelParams<f32>, config: &ModelConfig) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_checkpoint(params, config)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(ModelParams<f32>, ModelConfig)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let cfg = ModelConfig::small();
        let p = ModelParams::<f32>::init(&cfg).unwrap();
        let bytes = encode_checkpoint(&p, &cfg).unwrap();
        assert!(bytes.starts_with(b"OOAF-CKPT 1\n"));
        let (q, c) = decode_checkpoint(&bytes).unwrap();
        assert_eq!(p, q);
        assert_eq!(cfg, c);
    }

    #[test]
    fn truncated_is_rejected() {
        let cfg = ModelConfig::small();
        let p = ModelParams::<f32>::init(&cfg).unwrap();
        let bytes = encode_checkpoint(&p, &cfg).unwrap();
        assert!(decode_checkpoint(&bytes[..bytes.len() - 3]).is_err());
        assert!(decode_checkpoint(b"nope\n").is_err());
    }
}
