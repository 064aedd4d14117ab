use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::CliError;
use crate::analysis::Reference;
use crate::model::{make_builtin, Builtin, CubicParams, FhnParams, SdeProblem};
use crate::noise::SeedPolicy;
use crate::schemes::SchemeKind;

const MAX_LEVEL: u32 = 24;

/// `"exact"` or a reference level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReferenceConfig {
    Level(u32),
    Keyword(ReferenceKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKeyword {
    Exact,
}

impl From<ReferenceConfig> for Reference {
    fn from(r: ReferenceConfig) -> Self {
        match r {
            ReferenceConfig::Level(l) => Reference::Level(l),
            ReferenceConfig::Keyword(ReferenceKeyword::Exact) => Reference::Exact,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateOptions {
    /// Defaults to the finest entry of `levels`.
    pub level: Option<u32>,
    pub paths: usize,
}

impl Default for SimulateOptions {
    fn default() -> Self {
        Self { level: None, paths: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditOptions {
    pub n_values: Vec<u64>,
    pub samples: usize,
    pub radius: f64,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self { n_values: vec![16, 64, 256, 1024, 4096], samples: 2000, radius: 10.0 }
    }
}

/// Everything a command needs. Every key can be overridden on the command
/// line with `--key value`; nested keys use dots (`--problem.params.beta 0.25`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: Builtin,
    pub scheme: SchemeKind,
    pub levels: Vec<u32>,
    pub reference: ReferenceConfig,
    pub p: f64,
    pub q: f64,
    pub paths: usize,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    pub simulate: SimulateOptions,
    pub audit: AuditOptions,
    pub blowup: CubicParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problem: Builtin::FitzHughNagumo(FhnParams::default()),
            scheme: SchemeKind::RandomizedTamedMilstein,
            levels: (4..=9).collect(),
            reference: ReferenceConfig::Level(14),
            p: 2.0,
            q: 4.0,
            paths: 2000,
            master_seed: 2024,
            output_dir: PathBuf::from("out"),
            simulate: SimulateOptions::default(),
            audit: AuditOptions::default(),
            blowup: CubicParams::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config always serializes")
    }

    pub fn policy(&self) -> SeedPolicy {
        SeedPolicy::new(self.master_seed)
    }

    pub fn reference(&self) -> Reference {
        self.reference.into()
    }

    /// Applies `--key value` overrides in order.
    pub fn with_overrides(self, overrides: &[(String, String)]) -> Result<Self, CliError> {
        let mut doc = serde_json::to_value(&self).expect("config always serializes");
        for (key, raw) in overrides {
            if key == "problem" {
                let b = Builtin::from_id(raw).ok_or_else(|| CliError::Config(format!("unknown problem id '{raw}'")))?;
                doc["problem"] = serde_json::to_value(b).expect("builtin serializes");
                continue;
            }
            let value = parse_override(key, raw)?;
            set_path(&mut doc, key, value)?;
        }
        serde_json::from_value(doc).map_err(|e| CliError::Config(format!("invalid override: {e}")))
    }

    /// Checks everything that can be checked before any path is simulated
    /// and returns the built problem.
    pub fn validate(&self) -> Result<SdeProblem, CliError> {
        if self.levels.is_empty() {
            return Err(CliError::Config("levels must not be empty".into()));
        }
        if self.levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CliError::Config("levels must be strictly increasing".into()));
        }
        let max_level = *self.levels.last().unwrap();
        if max_level > MAX_LEVEL {
            return Err(CliError::Config(format!("levels above {MAX_LEVEL} are not supported")));
        }
        if let ReferenceConfig::Level(r) = self.reference {
            if r <= max_level {
                return Err(CliError::Config(format!("reference level {r} must exceed every level (max {max_level})")));
            }
            if r > MAX_LEVEL {
                return Err(CliError::Config(format!("reference level above {MAX_LEVEL} is not supported")));
            }
        }
        if !(self.p >= 1.0 && self.p.is_finite()) {
            return Err(CliError::Config(format!("p must be >= 1, got {}", self.p)));
        }
        if !(self.q >= 2.0 && self.q.is_finite()) {
            return Err(CliError::Config(format!("q must be >= 2, got {}", self.q)));
        }
        if self.paths == 0 || self.simulate.paths == 0 {
            return Err(CliError::Config("paths must be positive".into()));
        }
        if let Some(l) = self.simulate.level {
            if l > MAX_LEVEL {
                return Err(CliError::Config(format!("simulate level above {MAX_LEVEL} is not supported")));
            }
        }
        if self.audit.samples == 0 || self.audit.radius.is_nan() || self.audit.radius <= 0.0 || self.audit.n_values.contains(&0) {
            return Err(CliError::Config("audit needs samples >= 1, radius > 0 and n >= 1".into()));
        }
        make_builtin(&Builtin::Cubic(self.blowup.clone())).map_err(|e| CliError::Config(format!("blowup: {e}")))?;
        let problem = make_builtin(&self.problem).map_err(|e| CliError::Config(e.to_string()))?;
        self.scheme.check_support(problem.noise_structure()).map_err(|e| CliError::UnsupportedNoise(e.to_string()))?;
        if self.reference() == Reference::Exact && !problem.has_exact_solution() {
            return Err(CliError::Config(format!("problem '{}' has no exact solution", problem.name())));
        }
        Ok(problem)
    }
}

/// Values are read as JSON when possible, otherwise as plain strings.
/// `levels` also accepts `a..b` (inclusive) and comma lists.
fn parse_override(key: &str, raw: &str) -> Result<Value, CliError> {
    let leaf = key.rsplit('.').next().unwrap_or(key);
    if matches!(leaf, "levels" | "n_values" | "initial_state") && !raw.trim_start().starts_with('[') {
        if let Some((a, b)) = raw.split_once("..") {
            let a: u64 = a.trim().parse().map_err(|_| CliError::Config(format!("bad range '{raw}'")))?;
            let b: u64 = b.trim().parse().map_err(|_| CliError::Config(format!("bad range '{raw}'")))?;
            return Ok(Value::from((a..=b).collect::<Vec<_>>()));
        }
        let items: Result<Vec<Value>, _> =
            raw.split(',').map(|s| serde_json::from_str::<Value>(s.trim())).collect();
        return items.map(Value::from).map_err(|_| CliError::Config(format!("bad list '{raw}'")));
    }
    Ok(serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string())))
}

fn set_path(doc: &mut Value, key: &str, value: Value) -> Result<(), CliError> {
    let mut cur = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| CliError::Config(format!("'{key}' does not name a config key")))?;
        if i + 1 == parts.len() {
            // Unknown keys are rejected when the document is deserialized back.
            obj.insert((*part).to_string(), value);
            return Ok(());
        }
        cur = obj.entry((*part).to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("split always yields at least one part")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ForcingShape, NoiseStructure, ZeroParams};

    fn ov(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    #[test]
    fn defaults_validate() {
        let c = ExperimentConfig::default();
        let p = c.validate().unwrap();
        assert_eq!(p.name(), "fitz_hugh_nagumo");
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let c = ExperimentConfig::default()
            .with_overrides(&ov(&[
                ("problem", "rough_drift"),
                ("problem.params.beta", "0.5"),
                ("problem.params.shape", "power"),
                ("levels", "3..6"),
                ("reference", "exact"),
                ("paths", "12"),
                ("output_dir", "/tmp/x"),
                ("scheme", "tamed_milstein"),
            ]))
            .unwrap();
        match &c.problem {
            Builtin::RoughDrift(p) => assert_eq!((p.beta, p.shape), (0.5, ForcingShape::Power)),
            other => panic!("{other:?}"),
        }
        assert_eq!(c.levels, vec![3, 4, 5, 6]);
        assert_eq!(c.reference(), Reference::Exact);
        assert_eq!(c.paths, 12);
        assert_eq!(c.output_dir, PathBuf::from("/tmp/x"));
        assert_eq!(c.scheme, SchemeKind::TamedMilstein);
        // rough drift has no closed form
        assert!(matches!(c.validate(), Err(CliError::Config(_))));
    }

    #[test]
    fn bad_overrides_are_config_errors() {
        for pairs in [
            vec![("pathz", "3")],
            vec![("problem", "lorenz")],
            vec![("scheme", "rk4")],
            vec![("levels", "a..b")],
        ] {
            assert!(matches!(ExperimentConfig::default().with_overrides(&ov(&pairs)), Err(CliError::Config(_))), "{pairs:?}");
        }
    }

    #[test]
    fn validation_catches_bad_values() {
        let cases: Vec<Vec<(&str, &str)>> = vec![
            vec![("levels", "[5,4]")],
            vec![("levels", "[]")],
            vec![("reference", "9")],
            vec![("p", "0.5")],
            vec![("q", "1")],
            vec![("paths", "0")],
            vec![("problem.params.sigma", "-1")],
        ];
        for pairs in cases {
            let c = ExperimentConfig::default().with_overrides(&ov(&pairs)).unwrap();
            assert!(matches!(c.validate(), Err(CliError::Config(_))), "{pairs:?}");
        }
    }

    #[test]
    fn general_noise_is_reported_separately() {
        let c = ExperimentConfig {
            problem: Builtin::Zero(ZeroParams {
                initial_state: vec![1.0, 2.0],
                noise_dim: 2,
                horizon: 1.0,
                structure: Some(NoiseStructure::General),
            }),
            ..Default::default()
        };
        assert!(matches!(c.validate(), Err(CliError::UnsupportedNoise(_))));
    }

    #[test]
    fn json_round_trip() {
        let c = ExperimentConfig::default().with_overrides(&ov(&[("problem", "gbm"), ("reference", "exact")])).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }
}
