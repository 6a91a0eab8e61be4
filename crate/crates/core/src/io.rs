//! OOAF-PC v1 text point-cloud format.
//!
//! ```text
//! ooaf-pc 1 <N> <n> <K>
//! parts 1                      (only when a part-label column is present)
//! x y z f_1 … f_n [a_1 … a_K] [part]
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::cloud::FeatureCloud;
use crate::error::{Error, Result};

const MAGIC: &str = "ooaf-pc";

pub fn load_cloud(path: impl AsRef<Path>) -> Result<FeatureCloud> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_cloud(&text, path)
}

pub fn save_cloud(cloud: &FeatureCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_cloud(cloud)).map_err(|e| Error::io(path, e))
}

/// Shortest representation that parses back to the same `f64`.
pub(crate) fn fmt_f64(out: &mut String, v: f64) {
    if v == 0.0 {
        out.push('0');
    } else {
        write!(out, "{v:?}").expect("writing to String");
    }
}

pub fn format_cloud(cloud: &FeatureCloud) -> String {
    let n = cloud.feature_dim();
    let k = cloud.channels();
    let mut out = String::with_capacity(cloud.len() * (n + 4) * 12);
    writeln!(out, "{MAGIC} 1 {} {} {}", cloud.len(), n, k).unwrap();
    let parts = cloud.part_labels();
    if parts.is_some() {
        out.push_str("parts 1\n");
    }
    let aff = cloud.affordance();
    for i in 0..cloud.len() {
        let p = cloud.points()[i];
        for (j, v) in p.iter().enumerate() {
            if j > 0 {
                out.push(' ');
            }
            fmt_f64(&mut out, *v);
        }
        for v in cloud.feature(i) {
            out.push(' ');
            fmt_f64(&mut out, *v);
        }
        if let Some(a) = aff {
            for v in &a[i * k..(i + 1) * k] {
                out.push(' ');
                fmt_f64(&mut out, *v);
            }
        }
        if let Some(p) = parts {
            write!(out, " {}", p[i]).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn parse_cloud(text: &str, path: &Path) -> Result<FeatureCloud> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (hl, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 || fields[0] != MAGIC || fields[1] != "1" {
        return Err(err(hl + 1, format!("malformed header `{header}`")));
    }
    let parse_usize = |s: &str, what: &str| {
        s.parse::<usize>()
            .map_err(|_| err(hl + 1, format!("bad {what} `{s}` in header")))
    };
    let n_points = parse_usize(fields[2], "N")?;
    let n = parse_usize(fields[3], "n")?;
    let k = parse_usize(fields[4], "K")?;
    if n_points == 0 {
        return Err(err(hl + 1, "N must be ≥ 1".into()));
    }

    let mut rows: Vec<(usize, &str)> = Vec::with_capacity(n_points);
    let mut has_parts = false;
    for (i, (ln, line)) in lines.enumerate() {
        if i == 0 && line.trim() == "parts 1" {
            has_parts = true;
            continue;
        }
        rows.push((ln, line));
    }
    if rows.len() != n_points {
        let ln = rows.last().map(|r| r.0 + 1).unwrap_or(hl + 1);
        return Err(err(
            ln,
            format!("header declares {n_points} rows, found {}", rows.len()),
        ));
    }

    let width = 3 + n + k + usize::from(has_parts);
    let mut points = Vec::with_capacity(n_points);
    let mut features = Vec::with_capacity(n_points * n);
    let mut aff = Vec::with_capacity(n_points * k);
    let mut parts = Vec::new();
    for (ln, line) in rows {
        let line_no = ln + 1;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != width {
            return Err(err(
                line_no,
                format!("expected {width} columns, found {}", toks.len()),
            ));
        }
        let mut vals = [0.0f64; 3];
        for (j, t) in toks[..3].iter().enumerate() {
            vals[j] = parse_finite(t).map_err(|m| err(line_no, m))?;
        }
        points.push(vals);
        for t in &toks[3..3 + n] {
            features.push(parse_finite(t).map_err(|m| err(line_no, m))?);
        }
        for t in &toks[3 + n..3 + n + k] {
            let v = parse_finite(t).map_err(|m| err(line_no, m))?;
            if !(0.0..=1.0).contains(&v) {
                return Err(err(line_no, format!("affordance value {v} outside [0,1]")));
            }
            aff.push(v);
        }
        if has_parts {
            let t = toks[width - 1];
            parts.push(
                t.parse::<u32>()
                    .map_err(|_| err(line_no, format!("bad part label `{t}`")))?,
            );
        }
    }
    let mut cloud = FeatureCloud::new(points, n, features)?;
    if k > 0 {
        cloud = cloud.with_affordance(k, aff)?;
    }
    if has_parts {
        cloud = cloud.with_part_labels(parts)?;
    }
    Ok(cloud)
}

fn parse_finite(tok: &str) -> std::result::Result<f64, String> {
    let v: f64 = tok.parse().map_err(|_| format!("bad number `{tok}`"))?;
    if !v.is_finite() {
        return Err(format!("non-finite value `{tok}`"));
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<FeatureCloud> {
        parse_cloud(s, Path::new("mem.pc"))
    }

    #[test]
    fn empty_cloud_rejected() {
        let e = parse("ooaf-pc 1 0 2 0\n").unwrap_err();
        assert!(e.to_string().contains("N must be ≥ 1"), "{e}");
    }

    #[test]
    fn affordance_range_checked() {
        let e = parse("ooaf-pc 1 1 1 1\n0 0 0 0.5 1.5\n").unwrap_err();
        match e {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn row_count_mismatch_names_line() {
        let e = parse("ooaf-pc 1 3 0 0\n0 0 0\n1 1 1\n").unwrap_err();
        assert!(matches!(e, Error::Parse { .. }));
    }

    #[test]
    fn nan_rejected() {
        assert!(parse("ooaf-pc 1 1 0 0\n0 NaN 0\n").is_err());
        assert!(parse("ooaf-pc 1 1 0 0\n0 inf 0\n").is_err());
    }

    #[test]
    fn malformed_header() {
        assert!(parse("ooaf 1 1 0 0\n0 0 0\n").is_err());
        assert!(parse("ooaf-pc 2 1 0 0\n0 0 0\n").is_err());
        assert!(parse("ooaf-pc 1 x 0 0\n0 0 0\n").is_err());
    }

    #[test]
    fn parts_line_round_trip() {
        let c = parse("ooaf-pc 1 2 1 1\nparts 1\n0 0 0 0.25 1 3\n1 2 3 -4 0 7\n").unwrap();
        assert_eq!(c.part_labels().unwrap(), &[3, 7]);
        assert_eq!(parse(&format_cloud(&c)).unwrap(), c);
    }
}
