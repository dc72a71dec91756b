//! Pipeline configuration read from TOML.
//!
//! Relative paths resolve against the directory holding the config file.
//! Every input path named in the file must exist when the config loads;
//! output locations (`work_dir`, `normalized`) are created on demand.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset_ops::{SplitConfig, SplitRatios};
use crate::eval::FusionStrategy;
use crate::filters::{FilterConfig, GreyParams};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("config: {0}")]
    Syntax(String),
    #[error("config field `{field}`: file not found: {path}")]
    MissingFile { field: &'static str, path: PathBuf },
    #[error("config field `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("override `{0}` is not of the form key=value")]
    BadOverride(String),
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub city_table: Option<PathBuf>,
    pub keywords: Option<PathBuf>,
    pub boundaries: Option<PathBuf>,
    pub taxonomy: Option<PathBuf>,
    pub blacklist: Option<PathBuf>,
    pub grouping: Option<PathBuf>,
    /// `code <TAB> count <TAB> lat <TAB> lon` rows for computing a grouping.
    pub country_stats: Option<PathBuf>,
    /// Raw manifest fed to `assign-country`.
    pub manifest: Option<PathBuf>,
    pub images: Option<PathBuf>,
    pub scene_evidence: Option<PathBuf>,
    pub face_evidence: Option<PathBuf>,
    pub grey_evidence: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub gps_predictions: Option<PathBuf>,
    /// Output directory for normalized images.
    pub normalized: Option<PathBuf>,
    /// Output directory for stage manifests and reports.
    pub work_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub min_population: u64,
    pub half_width_km: f64,
    pub urban: f64,
    pub blacklist: f64,
    pub face: f64,
    pub cutoff_year: i32,
    pub grey_max_channel_diff: u8,
    pub grey_min_fraction: f64,
    pub grey_min_samples: usize,
    pub fallback_km: f64,
    pub resize_limit: u32,
}

impl Default for Thresholds {
    fn default() -> Self {
        let f = FilterConfig::default();
        Thresholds {
            min_population: 1000,
            half_width_km: 10.0,
            urban: f.urban_threshold,
            blacklist: f.blacklist_threshold,
            face: f.face_threshold,
            cutoff_year: f.cutoff_year,
            grey_max_channel_diff: f.grey.max_channel_diff,
            grey_min_fraction: f.grey.min_grey_fraction,
            grey_min_samples: f.grey.min_samples,
            fallback_km: crate::geo::DEFAULT_FALLBACK_KM,
            resize_limit: crate::normalize::DEFAULT_LIMIT,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightsFrom {
    #[default]
    Train,
    All,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub ratios: String,
    pub seed: u64,
    pub weights_from: WeightsFrom,
    pub rescale_weights: bool,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            ratios: "0.96,0.02,0.02".into(),
            seed: 0,
            weights_from: WeightsFrom::Train,
            rescale_weights: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Strategy used for the headline row; listed first in reports.
    pub strategy: String,
    /// Strategies to report; empty means every strategy the prediction file supports.
    pub strategies: Vec<String>,
    /// Report one set per split label present in the manifest as well as `all`.
    pub sets_by_split: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            strategy: "average".into(),
            strategies: Vec::new(),
            sets_by_split: true,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupingMode {
    /// Read `paths.grouping`.
    #[default]
    File,
    /// Compute from kept-record counts and boundary centroids.
    Compute,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroupingSection {
    pub mode: GroupingMode,
    pub k: usize,
    pub min_images: u64,
}

impl Default for GroupingSection {
    fn default() -> Self {
        GroupingSection {
            mode: GroupingMode::File,
            k: 61,
            min_images: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub thresholds: Thresholds,
    pub split: SplitSection,
    pub eval: EvalSection,
    pub grouping: GroupingSection,
}

fn set_override(root: &mut toml::Table, key: &str, raw: &str) -> Result<(), ConfigError> {
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| ConfigError::BadOverride(key.into()))?;
    let mut table = root;
    for p in parts {
        table = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| invalid(key, format!("`{p}` is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

impl PipelineConfig {
    /// Parses TOML text, applies `key=value` overrides, resolves relative
    /// paths against `base_dir` and validates.
    pub fn from_toml_str(text: &str, base_dir: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        for o in overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| ConfigError::BadOverride(o.clone()))?;
            set_override(&mut table, k.trim(), v.trim())?;
        }
        let mut cfg: PipelineConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
        cfg.resolve(base_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base, overrides)
    }

    fn path_fields(&mut self) -> [(&'static str, &mut Option<PathBuf>); 16] {
        let p = &mut self.paths;
        [
            ("paths.city_table", &mut p.city_table),
            ("paths.keywords", &mut p.keywords),
            ("paths.boundaries", &mut p.boundaries),
            ("paths.taxonomy", &mut p.taxonomy),
            ("paths.blacklist", &mut p.blacklist),
            ("paths.grouping", &mut p.grouping),
            ("paths.country_stats", &mut p.country_stats),
            ("paths.manifest", &mut p.manifest),
            ("paths.images", &mut p.images),
            ("paths.scene_evidence", &mut p.scene_evidence),
            ("paths.face_evidence", &mut p.face_evidence),
            ("paths.grey_evidence", &mut p.grey_evidence),
            ("paths.predictions", &mut p.predictions),
            ("paths.gps_predictions", &mut p.gps_predictions),
            ("paths.normalized", &mut p.normalized),
            ("paths.work_dir", &mut p.work_dir),
        ]
    }

    fn resolve(&mut self, base: &Path) {
        for (_, p) in self.path_fields() {
            if let Some(path) = p.as_mut() {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
    }

    pub fn validate(&mut self) -> Result<(), ConfigError> {
        for (field, p) in self.path_fields() {
            if matches!(field, "paths.normalized" | "paths.work_dir") {
                continue;
            }
            if let Some(path) = p.as_ref() {
                if !path.exists() {
                    return Err(ConfigError::MissingFile {
                        field,
                        path: path.clone(),
                    });
                }
            }
        }
        let t = &self.thresholds;
        let unit = [
            ("thresholds.urban", t.urban),
            ("thresholds.blacklist", t.blacklist),
            ("thresholds.face", t.face),
            ("thresholds.grey_min_fraction", t.grey_min_fraction),
        ];
        for (field, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid(field, format!("{v} is outside [0, 1]")));
            }
        }
        if t.half_width_km.is_nan() || t.half_width_km <= 0.0 {
            return Err(invalid("thresholds.half_width_km", "must be positive"));
        }
        if t.fallback_km.is_nan() || t.fallback_km < 0.0 {
            return Err(invalid("thresholds.fallback_km", "must be non-negative"));
        }
        if t.resize_limit == 0 {
            return Err(invalid("thresholds.resize_limit", "must be positive"));
        }
        if t.grey_min_samples == 0 {
            return Err(invalid("thresholds.grey_min_samples", "must be positive"));
        }
        SplitRatios::parse(&self.split.ratios).map_err(|e| invalid("split.ratios", e.to_string()))?;
        self.eval
            .strategy
            .parse::<FusionStrategy>()
            .map_err(|e| invalid("eval.strategy", e.to_string()))?;
        for s in &self.eval.strategies {
            s.parse::<FusionStrategy>()
                .map_err(|e| invalid("eval.strategies", e.to_string()))?;
        }
        if self.grouping.k == 0 {
            return Err(invalid("grouping.k", "must be at least 1"));
        }
        Ok(())
    }

    pub fn work_dir(&self) -> PathBuf {
        self.paths.work_dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn filter_config(&self) -> FilterConfig {
        let t = &self.thresholds;
        FilterConfig {
            urban_threshold: t.urban,
            blacklist_threshold: t.blacklist,
            face_threshold: t.face,
            cutoff_year: t.cutoff_year,
            grey: self.grey_params(),
            ..FilterConfig::default()
        }
    }

    pub fn grey_params(&self) -> GreyParams {
        let t = &self.thresholds;
        GreyParams {
            max_channel_diff: t.grey_max_channel_diff,
            min_grey_fraction: t.grey_min_fraction,
            min_samples: t.grey_min_samples,
        }
    }

    pub fn split_config(&self) -> SplitConfig {
        SplitConfig {
            ratios: SplitRatios::parse(&self.split.ratios).expect("validated at load"),
            seed: self.split.seed,
        }
    }

    /// Headline strategy first, then the remaining configured strategies.
    pub fn strategies(&self) -> Vec<FusionStrategy> {
        let head: FusionStrategy = self.eval.strategy.parse().expect("validated at load");
        let mut out = vec![head];
        let rest: Vec<FusionStrategy> = if self.eval.strategies.is_empty() {
            FusionStrategy::ALL.to_vec()
        } else {
            self.eval.strategies.iter().map(|s| s.parse().expect("validated at load")).collect()
        };
        out.extend(rest.into_iter().filter(|s| *s != head));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = PipelineConfig::from_toml_str(
            "[thresholds]\nurban = 0.6\n",
            dir.path(),
            &["split.seed=42".into(), "eval.strategy=max".into()],
        )
        .unwrap();
        assert_eq!(cfg.thresholds.urban, 0.6);
        assert_eq!(cfg.thresholds.face, 0.10);
        assert_eq!(cfg.split.seed, 42);
        assert_eq!(cfg.strategies()[0], FusionStrategy::Max);
        assert_eq!(cfg.strategies().len(), 8);
    }

    #[test]
    fn missing_file_names_field() {
        let dir = tempfile::tempdir().unwrap();
        let err = PipelineConfig::from_toml_str("[paths]\nscene_evidence = \"nope.jsonl\"\n", dir.path(), &[])
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("paths.scene_evidence"), "{msg}");
        assert!(msg.contains("nope.jsonl"), "{msg}");
    }

    #[test]
    fn range_checks() {
        let dir = tempfile::tempdir().unwrap();
        let err = PipelineConfig::from_toml_str("[thresholds]\nface = 1.5\n", dir.path(), &[]).unwrap_err();
        assert!(err.to_string().contains("thresholds.face"));
        let err = PipelineConfig::from_toml_str("[split]\nratios = \"0.5,0.5,0.5\"\n", dir.path(), &[]).unwrap_err();
        assert!(err.to_string().contains("split.ratios"));
        assert!(PipelineConfig::from_toml_str("[paths]\nbogus = 1\n", dir.path(), &[]).is_err());
    }
}
