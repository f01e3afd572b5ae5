//! Declarative pipeline config. Every field is optional; command-line flags
//! take precedence over values read from the file.

use std::path::{Path, PathBuf};

use lanechange_core::eval::ReportFormat;
use lanechange_core::predict::PredictorConfig;
use lanechange_core::sampling::StratificationPlan;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Full-size training plan.
    Train,
    /// Full-size test plan.
    Test,
    /// Training plan divided by 1000.
    TrainSmall,
    /// Test plan divided by 1000.
    TestSmall,
}

impl Preset {
    pub fn plan(self) -> StratificationPlan {
        match self {
            Preset::Train => StratificationPlan::highd_train(),
            Preset::Test => StratificationPlan::highd_test(),
            Preset::TrainSmall => StratificationPlan::highd_train().scaled_down(1000),
            Preset::TestSmall => StratificationPlan::highd_test().scaled_down(1000),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// highD data directory.
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    /// Lane-keeping sampling cadence (s).
    pub lk_spacing_s: Option<f64>,
    /// Restrict to these recording ids.
    pub recordings: Option<Vec<u32>>,
    pub preset: Option<Preset>,
    pub plan_file: Option<PathBuf>,
    pub plan: Option<StratificationPlan>,
    pub predictor: Option<PredictorConfig>,
    pub report_formats: Option<Vec<ReportFormat>>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
        let mut cfg: Self =
            toml::from_str(&text).map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
        // Relative paths in the file are relative to the file.
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.input, &mut cfg.out, &mut cfg.plan_file].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

/// Flag value if given, else the config value, else a usage error naming
/// the field.
pub fn require<T>(flag: Option<T>, config: Option<T>, field: &str) -> Result<T, CliError> {
    flag.or(config)
        .ok_or_else(|| CliError::usage(format!("missing required setting `{field}` (flag or config)")))
}
