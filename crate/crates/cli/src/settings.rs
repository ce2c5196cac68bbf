//! Per-command hyperparameters, `key=value` overrides, and the run record
//! embedded in every artifact.

use std::collections::BTreeMap;
use std::path::Path;

use callintent_core::convnet::CnnConfig;
use callintent_core::corpus::{LabelSet, TokenizerConfig};
use callintent_core::embeddings::{GloveConfig, SgnsConfig};
use callintent_core::{Error, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSettings {
    pub per_class: usize,
    pub seed: u64,
}

impl SynthSettings {
    pub fn validate(&self) -> Result<()> {
        if self.per_class < 1 {
            return Err(Error::Config("per_class must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepareSettings {
    pub labels: LabelSet,
    pub ratios: [f64; 3],
    pub seed: u64,
}

impl Default for PrepareSettings {
    fn default() -> Self {
        PrepareSettings {
            labels: LabelSet::default(),
            ratios: [0.8, 0.1, 0.1],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GloveSettings {
    pub labels: LabelSet,
    pub tokenizer: TokenizerConfig,
    pub min_count: u64,
    pub window: usize,
    pub distance_weighting: bool,
    #[serde(flatten)]
    pub glove: GloveConfig,
}

impl Default for GloveSettings {
    fn default() -> Self {
        GloveSettings {
            labels: LabelSet::default(),
            tokenizer: TokenizerConfig::default(),
            min_count: 1,
            window: 10,
            distance_weighting: true,
            glove: GloveConfig::default(),
        }
    }
}

impl GloveSettings {
    pub fn validate(&self) -> Result<()> {
        if self.window < 1 {
            return Err(Error::Config("window must be >= 1".into()));
        }
        self.glove.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgnsSettings {
    pub labels: LabelSet,
    pub tokenizer: TokenizerConfig,
    pub min_count: u64,
    #[serde(flatten)]
    pub sgns: SgnsConfig,
}

impl Default for SgnsSettings {
    fn default() -> Self {
        SgnsSettings {
            labels: LabelSet::default(),
            tokenizer: TokenizerConfig::default(),
            min_count: 1,
            sgns: SgnsConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub labels: LabelSet,
    pub tokenizer: TokenizerConfig,
    pub min_count: u64,
    #[serde(flatten)]
    pub cnn: CnnConfig,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            labels: LabelSet::default(),
            tokenizer: TokenizerConfig::default(),
            min_count: 1,
            cnn: CnnConfig::default(),
        }
    }
}

impl TrainSettings {
    pub fn validate(&self) -> Result<()> {
        if self.cnn.num_classes != self.labels.len() {
            return Err(Error::Config(format!(
                "num_classes is {} but {} labels are configured",
                self.cnn.num_classes,
                self.labels.len()
            )));
        }
        if self.min_count < 1 {
            return Err(Error::Config("min_count must be >= 1".into()));
        }
        self.cnn.validate()
    }
}

/// Splits `key=value`. The value is read as JSON when it parses, else as a string.
pub fn parse_override(s: &str) -> Result<(String, Value)> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{s}` is not of the form key=value")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(Error::Config(format!("override `{s}` has an empty key")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}

/// Applies overrides to the serialized form of `base`. Unknown keys are errors.
pub fn apply_overrides<T>(base: &T, overrides: &[String]) -> Result<T>
where
    T: Serialize + DeserializeOwned,
{
    let mut value = serde_json::to_value(base).expect("settings serialize");
    let obj = value.as_object_mut().expect("settings are a JSON object");
    for o in overrides {
        let (key, v) = parse_override(o)?;
        if !obj.contains_key(&key) {
            let known: Vec<&str> = obj.keys().map(String::as_str).collect();
            return Err(Error::Config(format!(
                "unknown setting `{key}`; known settings: {}",
                known.join(", ")
            )));
        }
        obj.insert(key, v);
    }
    serde_json::from_value(value).map_err(|e| Error::Config(format!("bad override: {e}")))
}

/// What produced an artifact: the command, its input files, and its settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub command: String,
    pub inputs: BTreeMap<String, String>,
    pub settings: Value,
}

impl RunRecord {
    pub fn new<S: Serialize>(command: &str, inputs: &[(&str, &Path)], settings: &S) -> Self {
        RunRecord {
            command: command.to_string(),
            inputs: inputs
                .iter()
                .map(|(k, p)| (k.to_string(), p.display().to_string()))
                .collect(),
            settings: serde_json::to_value(settings).expect("settings serialize"),
        }
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("run record serializes")
    }
}

/// `<artifact>.run.json` next to artifacts whose own format has no metadata slot.
pub fn sidecar_path(artifact: &Path) -> std::path::PathBuf {
    let mut name = artifact.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".run.json");
    artifact.with_file_name(name)
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("json serializes");
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_parse_json_or_fall_back_to_string() {
        assert_eq!(parse_override("epochs=20").unwrap(), ("epochs".into(), Value::from(20)));
        assert_eq!(
            parse_override("filter_widths=[2,3]").unwrap().1,
            serde_json::json!([2, 3])
        );
        assert_eq!(parse_override("name=abc").unwrap().1, Value::from("abc"));
        assert!(parse_override("epochs").is_err());
        assert!(parse_override("=3").is_err());
    }

    #[test]
    fn overrides_reach_flattened_fields() {
        let s = apply_overrides(
            &TrainSettings::default(),
            &["epochs=3".into(), "dropout=0.25".into(), "min_count=2".into()],
        )
        .unwrap();
        assert_eq!(s.cnn.epochs, 3);
        assert_eq!(s.cnn.dropout, 0.25);
        assert_eq!(s.min_count, 2);
        assert_eq!(s.cnn.filters_per_width, 128);
    }

    #[test]
    fn unknown_keys_and_bad_types_are_config_errors() {
        let e = apply_overrides(&TrainSettings::default(), &["epoch=3".into()]).unwrap_err();
        assert!(matches!(e, Error::Config(_)));
        assert!(e.to_string().contains("epochs"));
        let e = apply_overrides(&TrainSettings::default(), &["epochs=many".into()]).unwrap_err();
        assert!(matches!(e, Error::Config(_)));
    }

    #[test]
    fn label_count_must_match_classes() {
        let s = apply_overrides(&TrainSettings::default(), &[r#"labels=["a","b"]"#.into()]).unwrap();
        assert!(s.validate().is_err());
        let s = apply_overrides(&TrainSettings::default(), &[r#"labels=["a","b"]"#.into(), "num_classes=2".into()])
            .unwrap();
        s.validate().unwrap();
    }

    #[test]
    fn glove_window_is_validated() {
        let s = apply_overrides(&GloveSettings::default(), &["window=0".into()]).unwrap();
        assert!(matches!(s.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn sidecar_sits_next_to_artifact() {
        assert_eq!(sidecar_path(Path::new("/a/b/vec.txt")), Path::new("/a/b/vec.txt.run.json"));
    }
}
