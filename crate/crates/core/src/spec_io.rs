//! JSON model files.
//!
//! A file holds either a full model or a catalog reference
//! `{"catalog": "<name>", "params": {"r": "1/2", ...}}`. The field layout is
//! documented in `docs/model_spec_schema.md`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::config::Tolerances;
use crate::diffusion_model::{
    BoundaryKind, DiffusionSpec, Endpoint, ScaleInput, SpeedInput, StateInterval, ZeroSetComponent,
};
use crate::error::{Error, Result};
use crate::measure_kit::{DecomposedMeasure, Expr, LocalBehavior, Mass, ScPart};
use crate::model_catalog::{build_model, expr_handle, Param, Params};

/// A real number that may be written as `"inf"` or `"-inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtReal(pub f64);

impl<'de> Deserialize<'de> for ExtReal {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(ExtReal(x)),
            Raw::Text(t) => match t.as_str() {
                "inf" | "+inf" => Ok(ExtReal(f64::INFINITY)),
                "-inf" => Ok(ExtReal(f64::NEG_INFINITY)),
                other => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got \"{other}\""))),
            },
        }
    }
}

impl Serialize for ExtReal {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.0 {
            x if x == f64::INFINITY => s.serialize_str("inf"),
            x if x == f64::NEG_INFINITY => s.serialize_str("-inf"),
            x => s.serialize_f64(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntervalFile {
    pub alpha: ExtReal,
    pub beta: ExtReal,
    #[serde(default)]
    pub alpha_closed: bool,
    #[serde(default)]
    pub beta_closed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScFile {
    pub base_id: String,
    pub base_cdf: Expr,
    pub multiplier: Expr,
    pub support: [ExtReal; 2],
}

impl ScFile {
    fn build(&self) -> ScPart {
        ScPart {
            base_id: self.base_id.clone(),
            base_cdf: expr_handle(self.base_cdf.clone()),
            multiplier: expr_handle(self.multiplier.clone()),
            support: (self.support[0].0, self.support[1].0),
        }
    }
}

/// `{"ac": <expr> | null, "atoms": [[x, mass | "inf"], ...], "sc": {...} | null}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureFile {
    pub ac: Option<Expr>,
    #[serde(default)]
    pub atoms: Vec<(f64, ExtReal)>,
    #[serde(default)]
    pub sc: Option<ScFile>,
}

impl MeasureFile {
    fn build(&self, support: (f64, f64), field: &str) -> Result<DecomposedMeasure> {
        let wrap = |e: Error| Error::Validation { field: field.into(), msg: e.to_string() };
        let mut m = match &self.ac {
            None => DecomposedMeasure::zero(support),
            Some(e) => {
                e.validate_structure().map_err(wrap)?;
                let breaks = e.critical_points(support.0, support.1);
                DecomposedMeasure::new(support, expr_handle(e.clone()), breaks)
            }
        };
        for &(x, mass) in &self.atoms {
            let mass = match mass.0 {
                v if v == f64::INFINITY => Mass::Infinite,
                v => Mass::Finite(v),
            };
            m = m.with_atom(x, mass).map_err(wrap)?;
        }
        if let Some(sc) = &self.sc {
            m = m.with_sc(sc.build());
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryDecl {
    #[serde(default)]
    pub left: Option<BoundaryKind>,
    #[serde(default)]
    pub right: Option<BoundaryKind>,
}

/// A full model description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub model_id: String,
    pub interval: IntervalFile,
    /// `s` on the state interval; exclusive with `inverse_scale`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<Expr>,
    /// `q = s^{-1}` on the natural interval.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inverse_scale: Option<Expr>,
    /// Speed measure in state coordinates; exclusive with `speed_natural`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed: Option<MeasureFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed_natural: Option<MeasureFile>,
    pub x0: f64,
    #[serde(default)]
    pub r: f64,
    #[serde(default = "one")]
    pub horizon: f64,
    #[serde(default)]
    pub kinks: Vec<(f64, f64)>,
    #[serde(default)]
    pub qprime_zero_set: Vec<ZeroSetComponent>,
    #[serde(default)]
    pub phi_behaviors: Vec<LocalBehavior>,
    #[serde(default)]
    pub boundaries: BoundaryDecl,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qpp_sc: Option<ScFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<Tolerances>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogRef {
    catalog: String,
    #[serde(default)]
    params: BTreeMap<String, Value>,
}

impl ModelFile {
    pub fn build(&self) -> Result<DiffusionSpec> {
        let interval = StateInterval::new(
            self.interval.alpha.0,
            self.interval.beta.0,
            self.interval.alpha_closed,
            self.interval.beta_closed,
        )?;
        let scale = match (&self.scale, &self.inverse_scale) {
            (Some(s), None) => ScaleInput::Scale(s.clone()),
            (None, Some(q)) => ScaleInput::InverseScale(q.clone()),
            _ => return Err(Error::validation("scale", "give exactly one of `scale` and `inverse_scale`")),
        };
        let speed = match (&self.speed, &self.speed_natural) {
            (Some(m), None) => SpeedInput::State(m.build((interval.alpha, interval.beta), "speed")?),
            (None, Some(m)) => {
                SpeedInput::Natural(m.build((f64::NEG_INFINITY, f64::INFINITY), "speed_natural")?)
            }
            _ => return Err(Error::validation("speed", "give exactly one of `speed` and `speed_natural`")),
        };
        let mut spec = DiffusionSpec::new(self.model_id.clone(), interval, scale, speed, self.x0, self.r, self.horizon)?
            .with_kinks(self.kinks.clone())
            .with_zero_set(self.qprime_zero_set.clone())
            .with_phi_behaviors(self.phi_behaviors.clone());
        if let Some(k) = self.boundaries.left {
            spec = spec.with_boundary(Endpoint::Left, k);
        }
        if let Some(k) = self.boundaries.right {
            spec = spec.with_boundary(Endpoint::Right, k);
        }
        if let Some(sc) = &self.qpp_sc {
            spec = spec.with_qpp_sc(sc.build());
        }
        if let Some(t) = self.tolerances {
            spec = spec.with_tolerances(t);
        }
        Ok(spec)
    }
}

fn param_from_json(key: &str, v: &Value) -> Result<Param> {
    match v {
        Value::Number(n) => Param::from_f64(n.as_f64().unwrap_or(f64::NAN)),
        Value::String(s) => Param::parse(s),
        _ => Err(Error::Parse(format!("parameter `{key}` must be a number or a string"))),
    }
    .map_err(|e| Error::Parse(format!("parameter `{key}`: {e}")))
}

/// Parse a model document from JSON text.
pub fn parse_model(text: &str) -> Result<DiffusionSpec> {
    let value: Value = serde_json::from_str(text)?;
    if value.get("catalog").is_some() {
        let c: CatalogRef = serde_json::from_value(value)?;
        let mut params = Params::new();
        for (k, v) in &c.params {
            params.0.insert(k.clone(), param_from_json(k, v)?);
        }
        return build_model(&c.catalog, &params);
    }
    let file: ModelFile = serde_json::from_value(value)?;
    file.build()
}

pub fn load_model(path: &Path) -> Result<DiffusionSpec> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
    parse_model(&text)
}
