//! Run configuration: one TOML file, every field optional, command-line
//! flags applied on top.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::characterize::{CharacterizeConfig, GraphCaps, PruneRules};
use crate::llm::{Gateway, HttpTransport, LlmMode, ProviderConfig, TranscriptStore};
use crate::orchestration::{SessionConfig, DEFAULT_MAX_STEPS, DEFAULT_POOL_CAP};
use crate::planning::{PlanningConfig, ScoreWeights, DEFAULT_NUM_PLANS, DEFAULT_THRESHOLD};
use crate::profile::DbProfile;
use crate::synthesis::{DEFAULT_DECAY, DEFAULT_FLOOR, DEFAULT_SAMPLES};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSettings {
    pub mode: LlmMode,
    /// JSONL transcript read in replay mode and appended to in record mode.
    pub transcript: Option<PathBuf>,
    pub base_url: Option<String>,
    pub model: Option<String>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_secs: u64,
    pub retries: u32,
}

impl Default for LlmSettings {
    fn default() -> Self {
        let p = ProviderConfig::default();
        LlmSettings {
            mode: LlmMode::Replay,
            transcript: None,
            base_url: None,
            model: None,
            temperature: p.temperature,
            max_tokens: p.max_tokens,
            timeout_secs: p.timeout_secs,
            retries: p.retries,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Profile name, resolved as `<profiles_dir>/<profile>.toml`.
    pub profile: String,
    pub profiles_dir: PathBuf,
    pub repo_root: PathBuf,
    pub out_dir: PathBuf,
    pub memory_pool: PathBuf,
    pub pool_cap: usize,
    pub seed: u64,
    pub max_steps: usize,
    pub max_units: usize,
    pub max_hops: usize,
    pub top_k: usize,
    pub samples: usize,
    pub num_plans: usize,
    pub weights: ScoreWeights,
    pub threshold: f64,
    pub decay: f64,
    pub floor: f64,
    pub keep_failed: bool,
    /// Concurrent functions during evaluation.
    pub jobs: usize,
    pub llm: LlmSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        let caps = GraphCaps::default();
        RunConfig {
            profile: "toydb".into(),
            profiles_dir: "profiles".into(),
            repo_root: ".".into(),
            out_dir: "out".into(),
            memory_pool: "out/memory_pool.json".into(),
            pool_cap: DEFAULT_POOL_CAP,
            seed: 0,
            max_steps: DEFAULT_MAX_STEPS,
            max_units: caps.max_units,
            max_hops: caps.max_hops,
            top_k: 3,
            samples: DEFAULT_SAMPLES,
            num_plans: DEFAULT_NUM_PLANS,
            weights: ScoreWeights::default(),
            threshold: DEFAULT_THRESHOLD,
            decay: DEFAULT_DECAY,
            floor: DEFAULT_FLOOR,
            keep_failed: false,
            jobs: 1,
            llm: LlmSettings::default(),
        }
    }
}

fn check(ok: bool, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(what.to_string()))
    }
}

impl RunConfig {
    pub fn from_toml_str(src: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(src).map_err(|e| Error::Config(format!("run config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file; relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = crate::util::read_to_string(path)?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.profiles_dir,
            &mut cfg.repo_root,
            &mut cfg.out_dir,
            &mut cfg.memory_pool,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(t) = cfg.llm.transcript.as_mut().filter(|t| t.is_relative()) {
            *t = base.join(&*t);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("run config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        check(!self.profile.trim().is_empty(), "profile must be named")?;
        check(self.max_steps >= 1, "max_steps must be at least 1")?;
        check(self.max_units >= 1, "max_units must be at least 1")?;
        check(self.top_k >= 1, "top_k must be at least 1")?;
        check(
            (1..=16).contains(&self.samples),
            "samples must be in 1..=16",
        )?;
        check(
            (1..=10).contains(&self.num_plans),
            "num_plans must be in 1..=10",
        )?;
        check(self.pool_cap >= 3, "pool_cap must be at least 3")?;
        check(self.jobs >= 1, "jobs must be at least 1")?;
        let w = self.weights;
        check(
            [w.references, w.locations, w.size]
                .iter()
                .all(|x| x.is_finite() && *x >= 0.0)
                && w.references + w.locations + w.size > 0.0,
            "weights must be non-negative with a positive sum",
        )?;
        check(
            (0.0..=1.0).contains(&self.threshold),
            "threshold must be in [0, 1]",
        )?;
        check(
            self.decay > 0.0 && self.decay < 1.0,
            "decay must be in (0, 1)",
        )?;
        check(
            self.floor > 0.0 && self.floor < 1.0,
            "floor must be in (0, 1)",
        )?;
        check(
            self.llm.temperature.is_finite() && self.llm.temperature >= 0.0,
            "temperature must be >= 0",
        )?;
        check(
            self.llm.timeout_secs >= 1,
            "llm timeout must be at least 1 s",
        )?;
        Ok(())
    }

    pub fn load_profile(&self) -> Result<DbProfile> {
        DbProfile::load_named(&self.profiles_dir, &self.profile)
    }

    pub fn characterize_config(&self) -> CharacterizeConfig {
        CharacterizeConfig {
            caps: GraphCaps {
                max_units: self.max_units,
                max_hops: self.max_hops,
            },
            top_k: self.top_k,
            seed: self.seed,
            rules: PruneRules::default(),
        }
    }

    pub fn planning_config(&self) -> PlanningConfig {
        PlanningConfig {
            num_plans: self.num_plans,
            weights: self.weights,
            threshold: self.threshold,
        }
    }

    pub fn session_config(&self) -> SessionConfig {
        SessionConfig {
            max_steps: self.max_steps,
            samples: self.samples,
            top_k: self.top_k,
            planning: self.planning_config(),
            decay: self.decay,
            floor: self.floor,
            seed: self.seed,
            keep_failed: self.keep_failed,
            characterize: self.characterize_config(),
        }
    }

    /// Provider settings with `LLM_BASE_URL`, `LLM_MODEL` and `LLM_API_KEY`
    /// taken from `env` when the config leaves them unset.
    pub fn provider_config(&self, env: impl Fn(&str) -> Option<String>) -> ProviderConfig {
        let d = ProviderConfig::default();
        ProviderConfig {
            base_url: self
                .llm
                .base_url
                .clone()
                .or_else(|| env("LLM_BASE_URL"))
                .unwrap_or(d.base_url),
            api_key: env("LLM_API_KEY"),
            model: self
                .llm
                .model
                .clone()
                .or_else(|| env("LLM_MODEL"))
                .unwrap_or(d.model),
            temperature: self.llm.temperature,
            max_tokens: self.llm.max_tokens,
            timeout_secs: self.llm.timeout_secs,
            retries: self.llm.retries,
            backoff_ms: d.backoff_ms,
        }
    }

    pub fn transcript_path(&self) -> PathBuf {
        self.llm
            .transcript
            .clone()
            .unwrap_or_else(|| self.out_dir.join("transcripts").join("transcript.jsonl"))
    }

    /// Gateway for the configured mode, reading credentials from the
    /// process environment.
    pub fn gateway(&self) -> Result<Gateway> {
        let provider = self.provider_config(|k| std::env::var(k).ok().filter(|v| !v.is_empty()));
        let path = self.transcript_path();
        let store = match self.llm.mode {
            LlmMode::Live => TranscriptStore::live(),
            LlmMode::Record => TranscriptStore::record(&path)?,
            LlmMode::Replay => {
                if !path.exists() {
                    return Err(Error::Config(format!(
                        "replay transcript {} does not exist",
                        path.display()
                    )));
                }
                TranscriptStore::replay(&path)?
            }
        };
        let transport = Arc::new(HttpTransport::new(Duration::from_secs(
            self.llm.timeout_secs,
        )));
        Ok(Gateway::new(store, transport, provider)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_all_defaults() {
        let cfg = RunConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.weights, ScoreWeights::default());
        assert_eq!(cfg.llm.temperature, 0.1);
    }

    #[test]
    fn toml_round_trip_is_stable() {
        let cfg = RunConfig {
            seed: 7,
            llm: LlmSettings {
                transcript: Some("t.jsonl".into()),
                ..LlmSettings::default()
            },
            ..RunConfig::default()
        };
        let text = cfg.to_toml().unwrap();
        let back = RunConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_toml().unwrap(), text);
    }

    #[test]
    fn rejects_out_of_range_values() {
        assert!(RunConfig::from_toml_str("decay = 1.0").is_err());
        assert!(RunConfig::from_toml_str("max_steps = 0").is_err());
        assert!(RunConfig::from_toml_str("threshold = 1.5").is_err());
        assert!(RunConfig::from_toml_str("bogus = 1").is_err());
    }

    #[test]
    fn env_fills_unset_provider_fields() {
        let cfg = RunConfig::default();
        let p = cfg.provider_config(|k| match k {
            "LLM_MODEL" => Some("m1".into()),
            "LLM_API_KEY" => Some("k".into()),
            _ => None,
        });
        assert_eq!((p.model.as_str(), p.api_key.as_deref()), ("m1", Some("k")));
    }
}
