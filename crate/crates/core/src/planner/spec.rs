//! Declarative constraint specifications.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermKind {
    AffordanceAlignment,
    PositionAbove,
    OrientationTilt,
    Clearance,
    ContactQuality,
    Stability,
    Perpendicular,
    Containment,
    Collision,
}

impl TermKind {
    pub const ALL: [TermKind; 9] = [
        TermKind::AffordanceAlignment,
        TermKind::PositionAbove,
        TermKind::OrientationTilt,
        TermKind::Clearance,
        TermKind::ContactQuality,
        TermKind::Stability,
        TermKind::Perpendicular,
        TermKind::Containment,
        TermKind::Collision,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TermKind::AffordanceAlignment => "affordance_alignment",
            TermKind::PositionAbove => "position_above",
            TermKind::OrientationTilt => "orientation_tilt",
            TermKind::Clearance => "clearance",
            TermKind::ContactQuality => "contact_quality",
            TermKind::Stability => "stability",
            TermKind::Perpendicular => "perpendicular",
            TermKind::Containment => "containment",
            TermKind::Collision => "collision",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown constraint type `{s}`")))
    }

    /// `(name, default)`; `None` marks a required parameter.
    fn param_schema(self) -> &'static [(&'static str, Option<f64>)] {
        match self {
            TermKind::PositionAbove => &[("delta", Some(0.05))],
            TermKind::OrientationTilt => &[("min_deg", None), ("max_deg", None)],
            TermKind::Clearance => &[("d_min", None)],
            TermKind::Containment => &[("margin", Some(0.02))],
            TermKind::Collision => &[("r_pen", Some(0.005))],
            _ => &[],
        }
    }
}

impl std::fmt::Display for TermKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A term with its parameters resolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TermParams {
    AffordanceAlignment,
    PositionAbove { delta: f64 },
    OrientationTilt { min_deg: f64, max_deg: f64 },
    Clearance { d_min: f64 },
    ContactQuality,
    Stability,
    Perpendicular,
    Containment { margin: f64 },
    Collision { r_pen: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintTerm {
    pub kind: TermKind,
    pub weight: f64,
    pub params: TermParams,
}

impl ConstraintTerm {
    /// Builds a term from raw parameters, filling defaults and checking ranges.
    pub fn new(kind: TermKind, weight: f64, raw: &BTreeMap<String, f64>) -> Result<Self> {
        let bad = |msg: String| Error::invalid(format!("term `{kind}`: {msg}"));
        if !weight.is_finite() || weight < 0.0 {
            return Err(bad(format!("weight must be finite and >= 0, got {weight}")));
        }
        let schema = kind.param_schema();
        if let Some(k) = raw.keys().find(|k| !schema.iter().any(|(n, _)| n == k)) {
            return Err(bad(format!("unknown parameter `{k}`")));
        }
        let mut vals = Vec::with_capacity(schema.len());
        for &(name, default) in schema {
            let v = match (raw.get(name), default) {
                (Some(&v), _) => v,
                (None, Some(d)) => d,
                (None, None) => return Err(bad(format!("missing parameter `{name}`"))),
            };
            if !v.is_finite() {
                return Err(bad(format!("parameter `{name}` is not finite")));
            }
            vals.push(v);
        }
        let params = match kind {
            TermKind::AffordanceAlignment => TermParams::AffordanceAlignment,
            TermKind::PositionAbove => TermParams::PositionAbove { delta: vals[0] },
            TermKind::OrientationTilt => {
                let (lo, hi) = (vals[0], vals[1]);
                if !(0.0..=90.0).contains(&lo) || !(0.0..=90.0).contains(&hi) || lo > hi {
                    return Err(bad(format!("tilt range [{lo}, {hi}] must satisfy 0 <= min <= max <= 90")));
                }
                TermParams::OrientationTilt { min_deg: lo, max_deg: hi }
            }
            TermKind::Clearance => {
                if vals[0] <= 0.0 {
                    return Err(bad("d_min must be > 0".into()));
                }
                TermParams::Clearance { d_min: vals[0] }
            }
            TermKind::ContactQuality => TermParams::ContactQuality,
            TermKind::Stability => TermParams::Stability,
            TermKind::Perpendicular => TermParams::Perpendicular,
            TermKind::Containment => {
                if vals[0] < 0.0 {
                    return Err(bad("margin must be >= 0".into()));
                }
                TermParams::Containment { margin: vals[0] }
            }
            TermKind::Collision => {
                if vals[0] <= 0.0 {
                    return Err(bad("r_pen must be > 0".into()));
                }
                TermParams::Collision { r_pen: vals[0] }
            }
        };
        Ok(Self { kind, weight, params })
    }

    /// Term with every parameter at its default (required ones must be given).
    pub fn with_defaults(kind: TermKind, weight: f64) -> Result<Self> {
        Self::new(kind, weight, &BTreeMap::new())
    }

    pub fn raw_params(&self) -> BTreeMap<String, f64> {
        let pairs: Vec<(&str, f64)> = match self.params {
            TermParams::PositionAbove { delta } => vec![("delta", delta)],
            TermParams::OrientationTilt { min_deg, max_deg } => vec![("min_deg", min_deg), ("max_deg", max_deg)],
            TermParams::Clearance { d_min } => vec![("d_min", d_min)],
            TermParams::Containment { margin } => vec![("margin", margin)],
            TermParams::Collision { r_pen } => vec![("r_pen", r_pen)],
            _ => vec![],
        };
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSpec {
    pub task: String,
    pub terms: Vec<ConstraintTerm>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTerm {
    #[serde(rename = "type")]
    kind: String,
    weight: f64,
    #[serde(default)]
    params: BTreeMap<String, f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    task: String,
    terms: Vec<RawTerm>,
}

const BUILTIN: [(&str, &str); 5] = [
    ("pour", include_str!("../../specs/pour.json")),
    ("hang", include_str!("../../specs/hang.json")),
    ("cut", include_str!("../../specs/cut.json")),
    ("press", include_str!("../../specs/press.json")),
    ("insert", include_str!("../../specs/insert.json")),
];

impl ConstraintSpec {
    pub fn new(task: impl Into<String>, terms: Vec<ConstraintTerm>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::invalid("constraint spec has no terms"));
        }
        Ok(Self {
            task: task.into(),
            terms,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawSpec = serde_json::from_str(text)?;
        let terms = raw
            .terms
            .iter()
            .map(|t| ConstraintTerm::new(TermKind::parse(&t.kind)?, t.weight, &t.params))
            .collect::<Result<Vec<_>>>()?;
        Self::new(raw.task, terms)
    }

    pub fn to_json(&self) -> String {
        let raw = RawSpec {
            task: self.task.clone(),
            terms: self
                .terms
                .iter()
                .map(|t| RawTerm {
                    kind: t.kind.name().to_string(),
                    weight: t.weight,
                    params: t.raw_params(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&raw).expect("spec serializes")
    }

    pub fn weights(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.weight).collect()
    }

    /// Same terms with every weight multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let terms = self
            .terms
            .iter()
            .map(|t| ConstraintTerm::new(t.kind, t.weight * factor, &t.raw_params()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.task.clone(), terms)
    }
}

pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    BUILTIN.iter().map(|(n, _)| *n)
}

/// One of the shipped specs: `pour`, `hang`, `cut`, `press` or `insert`.
pub fn builtin_spec(name: &str) -> Result<ConstraintSpec> {
    let (_, text) = BUILTIN
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::UnknownCategory(name.to_string()))?;
    ConstraintSpec::from_json(text)
}

pub fn load_spec(path: impl AsRef<Path>) -> Result<ConstraintSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ConstraintSpec::from_json(&text)
}
