//! Run configuration, read from a single TOML document.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use dynspatial::answers::RuleConstants;
use dynspatial::geometry::GimbalPolicy;
use dynspatial::qa::{QaConfig, TypeWeights};
use dynspatial::sampling::DEFAULT_MIN_FRAMES;
use dynspatial::scene::SamplingMode;
use dynspatial::templates::PromptTemplate;
use serde::{Deserialize, Serialize};

pub const DEFAULT_CURATION_PROMPT: &str = include_str!("../prompts/curation.txt");
pub const DEFAULT_CLASSIFICATION_PROMPT: &str = include_str!("../prompts/classification.txt");
pub const DEFAULT_NONTEMPLATE_PROMPT: &str = include_str!("../prompts/nontemplate.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GimbalSetting {
    Fail,
    CameraForward,
}

impl From<GimbalSetting> for GimbalPolicy {
    fn from(g: GimbalSetting) -> Self {
        match g {
            GimbalSetting::Fail => GimbalPolicy::Fail,
            GimbalSetting::CameraForward => GimbalPolicy::CameraForwardFallback,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub master_seed: u64,
    pub items_per_video: usize,
    /// Free-form items per video; needs `[llm]`.
    pub nontemplate_per_video: usize,
    pub min_frames: usize,
    pub retry_limit: usize,
    /// When set, annotations sampled differently are skipped, and random
    /// synthetic scenes use this mode.
    pub sampling_mode: Option<SamplingMode>,
    /// 0 uses every available core.
    pub worker_count: usize,
    pub enforce_curation: bool,
    pub gimbal: GimbalSetting,
    pub type_weights: TypeWeights,
    pub rules: RuleConstants,
    pub llm: Option<LlmConfig>,
    pub prompts: PromptPaths,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            master_seed: 0,
            items_per_video: 20,
            nontemplate_per_video: 0,
            min_frames: DEFAULT_MIN_FRAMES,
            retry_limit: 16,
            sampling_mode: None,
            worker_count: 0,
            enforce_curation: true,
            gimbal: GimbalSetting::CameraForward,
            type_weights: TypeWeights::default(),
            rules: RuleConstants::default(),
            llm: None,
            prompts: PromptPaths::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub endpoint: String,
    /// Environment variable holding the bearer token.
    pub auth_env: Option<String>,
    pub max_tokens: u32,
    pub max_in_flight: usize,
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub timeout_secs: u64,
    pub cache_dir: Option<PathBuf>,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            endpoint: String::new(),
            auth_env: Some("DYNSPATIAL_LLM_TOKEN".into()),
            max_tokens: 512,
            max_in_flight: 4,
            max_retries: 5,
            initial_backoff_ms: 500,
            timeout_secs: 120,
            cache_dir: Some(PathBuf::from(".llm_cache")),
        }
    }
}

/// Prompt template files; the built-in defaults are used when unset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptPaths {
    pub curation: Option<PathBuf>,
    pub classification: Option<PathBuf>,
    pub nontemplate: Option<PathBuf>,
}

fn load_prompt(path: &Option<PathBuf>, fallback: &str) -> anyhow::Result<PromptTemplate> {
    match path {
        None => Ok(PromptTemplate::new(fallback)),
        Some(p) => Ok(PromptTemplate::from_file(p)?),
    }
}

impl PromptPaths {
    pub fn curation(&self) -> anyhow::Result<PromptTemplate> {
        load_prompt(&self.curation, DEFAULT_CURATION_PROMPT)
    }

    pub fn classification(&self) -> anyhow::Result<PromptTemplate> {
        load_prompt(&self.classification, DEFAULT_CLASSIFICATION_PROMPT)
    }

    pub fn nontemplate(&self) -> anyhow::Result<PromptTemplate> {
        load_prompt(&self.nontemplate, DEFAULT_NONTEMPLATE_PROMPT)
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<RunConfig> {
        let c: RunConfig = toml::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> anyhow::Result<RunConfig> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        RunConfig::from_toml(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if let Err(e) = self.type_weights.validate() {
            bail!("{e}");
        }
        if self.items_per_video == 0 {
            bail!("items_per_video must be at least 1");
        }
        if self.min_frames < 2 {
            bail!("min_frames must be at least 2");
        }
        if self.retry_limit == 0 {
            bail!("retry_limit must be at least 1");
        }
        let r = &self.rules;
        if !(r.trend_low < 1.0 && 1.0 < r.trend_high && r.speed_comp_low < 1.0 && 1.0 < r.speed_comp_high) {
            bail!("rule bands must straddle 1");
        }
        if !(0.0 < r.positive_cone_deg && r.positive_cone_deg <= 90.0 && 90.0 <= r.negative_cone_deg && r.negative_cone_deg < 180.0) {
            bail!("cone angles must satisfy 0 < positive <= 90 <= negative < 180");
        }
        if let Some(l) = &self.llm {
            if l.endpoint.is_empty() {
                bail!("llm.endpoint must be set when [llm] is present");
            }
            if l.max_in_flight == 0 || l.max_retries == 0 {
                bail!("llm.max_in_flight and llm.max_retries must be at least 1");
            }
        }
        if self.nontemplate_per_video > 0 && self.llm.is_none() {
            bail!("nontemplate_per_video needs an [llm] section");
        }
        Ok(())
    }

    pub fn qa_config(&self) -> QaConfig {
        QaConfig {
            type_weights: self.type_weights.clone(),
            min_frames: self.min_frames,
            retry_limit: self.retry_limit,
            rules: self.rules,
            gimbal: self.gimbal.into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c = RunConfig::from_toml("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.qa_config(), QaConfig::default());
    }

    #[test]
    fn full_document() {
        let c = RunConfig::from_toml(
            r#"
            master_seed = 7
            items_per_video = 3
            sampling_mode = "train32"
            gimbal = "fail"
            [type_weights]
            distance = 2.0
            orientation = 0.0
            [rules]
            trend_high = 1.25
            [llm]
            endpoint = "http://localhost:9/v1"
            max_in_flight = 2
            "#,
        )
        .unwrap();
        assert_eq!(c.master_seed, 7);
        assert_eq!(c.sampling_mode, Some(SamplingMode::Train32));
        assert_eq!(c.type_weights.distance, 2.0);
        assert_eq!(c.type_weights.speed, 1.0);
        assert_eq!(c.rules.trend_high, 1.25);
        assert_eq!(c.rules.trend_low, 0.8);
        assert_eq!(c.qa_config().gimbal, GimbalPolicy::Fail);
        assert_eq!(c.llm.unwrap().max_retries, 5);
    }

    #[test]
    fn invalid_documents() {
        assert!(RunConfig::from_toml("items_per_video = 0").is_err());
        assert!(RunConfig::from_toml("unknown_key = 1").is_err());
        assert!(RunConfig::from_toml(
            "[type_weights]\ndistance=0\ndirection=0\norientation=0\nspeed=0\nspeed_comparison=0\ndirection_prediction=0"
        )
        .is_err());
        assert!(RunConfig::from_toml("nontemplate_per_video = 2").is_err());
        assert!(RunConfig::from_toml("[rules]\ntrend_low = 1.1").is_err());
    }

    #[test]
    fn default_prompts_have_placeholders() {
        let p = PromptPaths::default();
        for ph in dynspatial::templates::PROMPT_PLACEHOLDERS {
            assert!(p.nontemplate().unwrap().text().contains(ph), "{ph}");
        }
        assert!(p.curation().unwrap().text().contains("{caption}"));
        assert!(p.classification().unwrap().text().contains("{caption}"));
        let missing = PromptPaths {
            curation: Some("/nonexistent/prompt.txt".into()),
            ..PromptPaths::default()
        };
        assert!(missing.curation().is_err());
    }
}
