//! Run configuration: defaults, then family spec inputs, then the `--config`
//! file, then command-line flags. Each layer is a flat JSON object keyed by
//! [`RunConfig`] field names.

use std::fs;
use std::path::{Path, PathBuf};

use fundform::asymptotics::Generator;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{CliError, CliResult};

pub type Layer = Map<String, Value>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub subcommand: String,
    pub inputs: Vec<PathBuf>,
    pub output_dir: PathBuf,
    /// Lebesgue exponent; `"inf"` in JSON for p = ∞.
    #[serde(with = "exponent")]
    pub p: Option<f64>,
    pub tol: Option<f64>,
    pub dict_size: Option<usize>,
    pub weak_dict_size: Option<usize>,
    pub force: bool,
    pub seed: u64,
    pub eps: Option<Vec<f64>>,
    pub t: Option<Vec<f64>>,
    pub s: Option<Vec<f64>>,
    pub r: Option<f64>,
    pub resolution: Option<Vec<usize>>,
    pub family: Option<String>,
    pub fixture: Option<String>,
    pub generator: Option<Generator>,
    pub rotation: Option<Vec<Vec<f64>>>,
    pub direction: Option<Vec<f64>>,
    pub random_rotations: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            subcommand: String::new(),
            inputs: Vec::new(),
            output_dir: PathBuf::from("."),
            p: None,
            tol: None,
            dict_size: None,
            weak_dict_size: None,
            force: false,
            seed: 0,
            eps: None,
            t: None,
            s: None,
            r: None,
            resolution: None,
            family: None,
            fixture: None,
            generator: None,
            rotation: None,
            direction: None,
            random_rotations: 20,
        }
    }
}

impl RunConfig {
    /// The parameters that determine numeric output: everything except the
    /// output directory.
    pub fn parameters(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Value::Object(m) = &mut v {
            m.remove("output_dir");
        }
        v
    }

    /// Single resolution n for square-chart commands.
    pub fn square_resolution(&self, default: usize) -> CliResult<usize> {
        match self.resolution.as_deref() {
            None => Ok(default),
            Some([n]) => Ok(*n),
            Some([a, b]) if a == b => Ok(*a),
            Some(r) => Err(CliError::validation(format!("expected one resolution, got {r:?}"))),
        }
    }
}

mod exponent {
    use serde::{Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(p: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match p {
            None => s.serialize_none(),
            Some(v) if v.is_infinite() => s.serialize_str("inf"),
            Some(v) => s.serialize_f64(*v),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        match Option::<Repr>::deserialize(d)? {
            None => Ok(None),
            Some(Repr::Num(v)) => Ok(Some(v)),
            Some(Repr::Text(t)) => t
                .parse::<f64>()
                .map(Some)
                .map_err(|_| serde::de::Error::custom(format!("bad exponent {t:?}"))),
        }
    }
}

/// Parses a configuration file: `key = <JSON>` lines (`#` comments), or a
/// JSON object, or a run manifest (its `parameters` are replayed).
pub fn parse_config_text(text: &str) -> CliResult<Layer> {
    let trimmed = text.trim_start();
    if trimmed.starts_with('{') {
        let v: Value = serde_json::from_str(trimmed)?;
        return match v {
            Value::Object(mut m) => match m.remove("parameters") {
                Some(Value::Object(params)) => Ok(params),
                Some(_) => Err(CliError::validation("manifest parameters must be an object")),
                None => Ok(m),
            },
            _ => Err(CliError::validation("configuration must be a JSON object")),
        };
    }
    let mut layer = Layer::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::validation(format!("config line {}: expected key = value", no + 1)))?;
        let value: Value = serde_json::from_str(value.trim())
            .map_err(|e| CliError::validation(format!("config line {}: {e}", no + 1)))?;
        layer.insert(key.trim().to_string(), value);
    }
    Ok(layer)
}

fn merge(base: &mut Layer, top: &Layer) {
    for (k, v) in top {
        base.insert(k.clone(), v.clone());
    }
}

fn decode(layer: Layer) -> CliResult<RunConfig> {
    serde_json::from_value(Value::Object(layer)).map_err(|e| CliError::validation(format!("configuration: {e}")))
}

/// True for JSON inputs that are not field headers (family specs, initial data).
pub fn is_spec_file(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "json")
        && fs::read(path)
            .ok()
            .and_then(|b| serde_json::from_slice::<Value>(&b).ok())
            .is_some_and(|v| v.is_object() && v.get("tensor_shape").is_none())
}

/// Commands whose JSON inputs are family specs merged under the config.
const SPEC_COMMANDS: [&str; 3] = ["rigidity", "converge", "depend"];

/// Builds the final configuration for `subcommand`.
pub fn resolve(subcommand: &str, config_file: Option<&Path>, flags: Layer) -> CliResult<RunConfig> {
    let mut upper = Layer::new();
    if let Some(path) = config_file {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::validation(format!("config {}: {e}", path.display())))?;
        merge(&mut upper, &parse_config_text(&text)?);
    }
    merge(&mut upper, &flags);
    let first = decode(upper.clone())?;
    for input in &first.inputs {
        if !input.exists() {
            return Err(CliError::validation(format!("input {} does not exist", input.display())));
        }
    }
    let mut layers = Layer::new();
    if SPEC_COMMANDS.contains(&subcommand) {
        for input in first.inputs.iter().filter(|p| is_spec_file(p)) {
            let spec: Value = serde_json::from_slice(&fs::read(input)?)?;
            if let Value::Object(m) = spec {
                merge(&mut layers, &m);
            }
        }
        // a spec cannot redirect the inputs that named it
        layers.remove("inputs");
    }
    merge(&mut layers, &upper);
    layers.insert("subcommand".into(), Value::String(subcommand.into()));
    let cfg = decode(layers)?;
    if let Some(p) = cfg.p {
        if !(p >= 1.0) {
            return Err(CliError::validation(format!("p = {p} must be at least 1")));
        }
    }
    Ok(cfg)
}
