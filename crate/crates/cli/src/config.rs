//! Experiment configuration: schema, defaults, `--set` overrides and
//! resolution into library objects.

use std::path::{Path, PathBuf};

use kkl_core::design::CoeffVariant;
use kkl_core::observer::Inversion;
use kkl_core::system::SystemSpec;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Raised for anything wrong with the configuration itself. Maps to exit
/// status 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

fn bad(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

pub const DEFAULT_DT: f64 = 0.01;
pub const DEFAULT_LAMBDAS: [f64; 3] = [-10.0, -20.0, -30.0];
pub const DEFAULT_GRID_PITCH: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_system")]
    pub system: SystemSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<FilterSpec>,
    #[serde(default = "default_transform")]
    pub transform: TransformSpec,
    /// Defaults to `linear_stack` for the example transform and to a grid
    /// search otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inversion: Option<Inversion>,
    #[serde(default)]
    pub run: RunSpec,
    #[serde(default)]
    pub analysis: AnalysisSpec,
    #[serde(default)]
    pub compare: CompareSpec,
    #[serde(default)]
    pub verify: VerifySpec,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Design file written by `kkl design`; replaces system, filter and
    /// transform when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design_file: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            system: default_system(),
            filter: None,
            transform: default_transform(),
            inversion: None,
            run: RunSpec::default(),
            analysis: AnalysisSpec::default(),
            compare: CompareSpec::default(),
            verify: VerifySpec::default(),
            output: OutputSpec::default(),
            seed: None,
            design_file: None,
        }
    }
}

fn default_system() -> SystemSpec {
    SystemSpec {
        dt: None,
        ..SystemSpec::oscillator(DEFAULT_DT)
    }
}

fn default_transform() -> TransformSpec {
    TransformSpec::Example {
        variant: CoeffVariant::Discrete,
        lambdas: DEFAULT_LAMBDAS.to_vec(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    /// Explicit eigenvalues as `[re, im]` pairs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eigenvalues: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<SampleSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_gain: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSpec {
    pub count: usize,
    /// Defaults to the admissible radius estimated from the plant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Redraw on a singular Sylvester system or a weak injectivity margin.
    #[serde(default)]
    pub resample: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TransformSpec {
    Series {
        #[serde(rename = "N")]
        n: usize,
    },
    Sylvester,
    Example {
        variant: CoeffVariant,
        lambdas: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    /// Defaults to the system's `dt`, or 0.01.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(rename = "K", default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_x0")]
    pub x0: Vec<f64>,
    /// Complex initial filter state as `[re, im]` pairs; zero by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi0: Option<Vec<[f64; 2]>>,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            dt: Some(DEFAULT_DT),
            steps: default_steps(),
            x0: default_x0(),
            xi0: None,
        }
    }
}

fn default_steps() -> usize {
    500
}

fn default_x0() -> Vec<f64> {
    vec![1.0, 0.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSpec {
    #[serde(default = "default_window")]
    pub window: [f64; 2],
    #[serde(default = "default_band_start")]
    pub band_start: f64,
}

impl Default for AnalysisSpec {
    fn default() -> Self {
        Self {
            window: default_window(),
            band_start: default_band_start(),
        }
    }
}

fn default_window() -> [f64; 2] {
    kkl_core::analysis::DEFAULT_WINDOW
}

fn default_band_start() -> f64 {
    1.0
}

/// Which coefficient set goes into which figure file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSpec {
    #[serde(default = "continuous")]
    pub fig1: CoeffVariant,
    #[serde(default = "discrete")]
    pub fig2: CoeffVariant,
}

impl Default for CompareSpec {
    fn default() -> Self {
        Self {
            fig1: CoeffVariant::Continuous,
            fig2: CoeffVariant::Discrete,
        }
    }
}

fn continuous() -> CoeffVariant {
    CoeffVariant::Continuous
}

fn discrete() -> CoeffVariant {
    CoeffVariant::Discrete
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Truncation used for the unicity check unless the transform itself is
    /// a series.
    #[serde(rename = "series_N", default = "default_series_n")]
    pub series_n: usize,
    #[serde(default = "default_unicity_samples")]
    pub unicity_samples: usize,
    /// Added to every coefficient of `M` before checking.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturb_m: Option<f64>,
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self {
            samples: default_samples(),
            series_n: default_series_n(),
            unicity_samples: default_unicity_samples(),
            perturb_m: None,
        }
    }
}

fn default_samples() -> usize {
    100
}

fn default_series_n() -> usize {
    kkl_core::design::DEFAULT_TRUNCATION
}

fn default_unicity_samples() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_out")]
    pub dir: PathBuf,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: default_out() }
    }
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// Parses a `dotted.path=value` override. The value is read as JSON when it
/// parses, and as a plain string otherwise.
pub fn parse_override(raw: &str) -> anyhow::Result<(Vec<String>, Value)> {
    let (path, value) = raw
        .split_once('=')
        .ok_or_else(|| bad(format!("--set `{raw}`: expected dotted.path=value")))?;
    let keys: Vec<String> = path.split('.').map(str::to_owned).collect();
    if keys.iter().any(String::is_empty) {
        return Err(bad(format!("--set `{raw}`: empty path segment")));
    }
    let value = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_owned()));
    Ok((keys, value))
}

pub fn apply_override(root: &mut Value, keys: &[String], value: Value) -> anyhow::Result<()> {
    let mut node = root;
    for (i, key) in keys.iter().enumerate() {
        let last = i + 1 == keys.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(key.clone(), value);
                    return Ok(());
                }
                map.entry(key.clone()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = key
                    .parse()
                    .map_err(|_| bad(format!("--set {}: `{key}` indexes an array", keys.join("."))))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| bad(format!("--set {}: index {idx} out of range (len {len})", keys.join("."))))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => {
                return Err(bad(format!(
                    "--set {}: `{}` is not an object",
                    keys.join("."),
                    keys[..i].join(".")
                )))
            }
        };
    }
    unreachable!("keys is non-empty")
}

fn typed_error(e: serde_path_to_error::Error<serde_json::Error>, source: &str) -> anyhow::Error {
    let path = e.path().to_string();
    bad(format!("{source}: field `{path}`: {}", e.into_inner()))
}

/// Reads the config (or the defaults), applies overrides and validates.
pub fn load(path: Option<&Path>, overrides: &[String]) -> anyhow::Result<ExperimentConfig> {
    let (text, source) = match path {
        Some(p) => (
            std::fs::read_to_string(p).map_err(|e| bad(format!("cannot read {}: {e}", p.display())))?,
            p.display().to_string(),
        ),
        None => (String::new(), "default config".to_owned()),
    };
    let config: ExperimentConfig = if path.is_some() && overrides.is_empty() {
        let mut de = serde_json::Deserializer::from_str(&text);
        let cfg = serde_path_to_error::deserialize(&mut de).map_err(|e| typed_error(e, &source))?;
        de.end().map_err(|e| bad(format!("{source}: {e}")))?;
        cfg
    } else {
        let mut value = match path {
            Some(_) => serde_json::from_str(&text).map_err(|e| bad(format!("{source}: {e}")))?,
            None => serde_json::to_value(ExperimentConfig::default())?,
        };
        for raw in overrides {
            let (keys, v) = parse_override(raw)?;
            apply_override(&mut value, &keys, v)?;
        }
        serde_path_to_error::deserialize(value).map_err(|e| typed_error(e, &source))?
    };
    config.validate()?;
    Ok(config)
}

impl ExperimentConfig {
    pub fn validate(&self) -> anyhow::Result<()> {
        if self.run.steps == 0 {
            return Err(bad("run.K must be at least 1"));
        }
        if let Some(f) = &self.filter {
            if f.eigenvalues.is_some() == f.sample.is_some() {
                return Err(bad("filter needs exactly one of `eigenvalues` or `sample`"));
            }
        }
        if let (Some(a), Some(b)) = (self.system.dt, self.run.dt) {
            if a != b {
                return Err(bad(format!("system.dt = {a} disagrees with run.dt = {b}")));
            }
        }
        let [t0, t1] = self.analysis.window;
        if t1.partial_cmp(&t0) != Some(std::cmp::Ordering::Greater) {
            return Err(bad(format!("analysis.window [{t0}, {t1}] is empty")));
        }
        if self.compare.fig1 == self.compare.fig2 {
            return Err(bad("compare.fig1 and compare.fig2 must use different coefficient sets"));
        }
        Ok(())
    }

    /// Time step: `run.dt`, else `system.dt`, else the default.
    pub fn dt(&self) -> f64 {
        self.run.dt.or(self.system.dt).unwrap_or(DEFAULT_DT)
    }

    /// System spec with the builtin oscillator's step filled in.
    pub fn system_spec(&self) -> SystemSpec {
        let mut spec = self.system.clone();
        if spec.is_oscillator() && spec.dt.is_none() {
            spec.dt = Some(self.dt());
        }
        spec
    }

    /// `--seed`, then the config, then `KKL_SEED`, then 0.
    pub fn resolve_seed(&self, flag: Option<u64>) -> anyhow::Result<u64> {
        if let Some(s) = flag.or(self.seed) {
            return Ok(s);
        }
        match std::env::var("KKL_SEED") {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| bad(format!("KKL_SEED=`{v}` is not an unsigned integer"))),
            Err(_) => Ok(0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let v = serde_json::to_value(ExperimentConfig::default()).unwrap();
        let back: ExperimentConfig = serde_json::from_value(v).unwrap();
        assert_eq!(back, ExperimentConfig::default());
        assert_eq!(back.dt(), 0.01);
        assert_eq!(back.system_spec(), SystemSpec::oscillator(0.01));
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let cfg = load(None, &["run.K=20".into(), "run.x0.1=0.5".into(), "transform=sylvester".into()]).unwrap();
        assert_eq!(cfg.run.steps, 20);
        assert_eq!(cfg.run.x0, vec![1.0, 0.5]);
        assert_eq!(cfg.transform, TransformSpec::Sylvester);
    }

    #[test]
    fn bad_overrides() {
        assert!(load(None, &["run.K".into()]).is_err());
        assert!(load(None, &["run..K=1".into()]).is_err());
        assert!(load(None, &["run.x0.7=1".into()]).is_err());
        assert!(load(None, &["run.K.x=1".into()]).is_err());
        assert!(load(None, &["run.K=0".into()]).is_err());
        let e = load(None, &["run.K=\"many\"".into()]).unwrap_err().to_string();
        assert!(e.contains("run.K"), "{e}");
    }

    #[test]
    fn filter_needs_one_source() {
        let e = load(None, &["filter={}".into()]).unwrap_err();
        assert!(e.downcast_ref::<ConfigError>().is_some());
    }

    #[test]
    fn dt_conflict_is_rejected() {
        assert!(load(None, &["system.dt=0.02".into()]).is_err());
        let cfg = load(None, &["system.dt=0.02".into(), "run.dt=0.02".into()]).unwrap();
        assert_eq!(cfg.dt(), 0.02);
    }
}
