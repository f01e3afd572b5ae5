//! Uniform prediction interface over the rule-based baseline and remote
//! chat-completions models.

mod remote;
mod rule_based;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use remote::{ChatMessage, ChatRequest, RemoteClient, TransportFailure};
pub use rule_based::{heuristic_intention, kinematic_trajectory, rule_based_predict};

use crate::codec::{parse_prediction, PredictionRecord, PromptBundle};
use crate::scene::SceneSnapshot;

/// Environment variable holding the bearer token for remote endpoints.
pub const API_KEY_ENV: &str = "LANECHANGE_API_KEY";

#[derive(Debug, Error, PartialEq, Eq)]
#[error("predictor config: `{field}` {reason}")]
pub struct ConfigError {
    pub field: &'static str,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    RuleBased,
    Remote,
}

fn default_timeout() -> f64 {
    60.0
}

fn default_parallel() -> usize {
    4
}

fn default_retries() -> u32 {
    3
}

fn default_backoff_ms() -> u64 {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictorConfig {
    pub backend: Backend,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model_name: Option<String>,
    /// Per-request timeout (s).
    #[serde(default = "default_timeout")]
    pub request_timeout: f64,
    #[serde(default = "default_parallel")]
    pub max_parallel_requests: usize,
    #[serde(default = "default_retries")]
    pub retries: u32,
    /// First retry delay (ms); doubles on each further retry.
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default)]
    pub temperature: f64,
    /// Bearer token; normally taken from [`API_KEY_ENV`].
    #[serde(default, skip_serializing)]
    pub api_key: Option<String>,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self::rule_based()
    }
}

impl PredictorConfig {
    pub fn rule_based() -> Self {
        Self {
            backend: Backend::RuleBased,
            endpoint: None,
            model_name: None,
            request_timeout: default_timeout(),
            max_parallel_requests: default_parallel(),
            retries: default_retries(),
            backoff_ms: default_backoff_ms(),
            temperature: 0.0,
            api_key: None,
        }
    }

    pub fn remote(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            backend: Backend::Remote,
            endpoint: Some(endpoint.into()),
            model_name: Some(model.into()),
            ..Self::rule_based()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |field, reason: &str| {
            Err(ConfigError {
                field,
                reason: reason.to_string(),
            })
        };
        if self.max_parallel_requests == 0 {
            return err("max_parallel_requests", "must be at least 1");
        }
        if !(self.request_timeout.is_finite() && self.request_timeout > 0.0) {
            return err("request_timeout", "must be a positive number of seconds");
        }
        if self.backend == Backend::Remote {
            if self.endpoint.as_deref().is_none_or(str::is_empty) {
                return err("endpoint", "is required for the remote backend");
            }
            if self.model_name.as_deref().is_none_or(str::is_empty) {
                return err("model_name", "is required for the remote backend");
            }
        }
        Ok(())
    }
}

pub enum Predictor {
    RuleBased,
    Remote { client: RemoteClient, max_parallel: usize },
}

impl Predictor {
    pub fn from_config(config: &PredictorConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        Ok(match config.backend {
            Backend::RuleBased => Predictor::RuleBased,
            Backend::Remote => Predictor::Remote {
                client: RemoteClient::new(
                    config.endpoint.clone().unwrap_or_default(),
                    config.model_name.clone().unwrap_or_default(),
                    Duration::from_secs_f64(config.request_timeout),
                    config.retries,
                    Duration::from_millis(config.backoff_ms),
                    config.temperature,
                    config.api_key.clone(),
                ),
                max_parallel: config.max_parallel_requests,
            },
        })
    }

    pub fn predict(&self, snapshot: &SceneSnapshot) -> PredictionRecord {
        match self {
            Predictor::RuleBased => rule_based_predict(snapshot),
            Predictor::Remote { client, .. } => {
                let bundle = PromptBundle::inference(snapshot);
                let record = match client.complete(&bundle) {
                    Ok(text) => parse_prediction(&text),
                    Err(f) => PredictionRecord::failed(f.reason(), f.detail()),
                };
                record.with_sample_id(snapshot.sample_id.clone())
            }
        }
    }

    /// One record per snapshot, in input order. Remote calls run on at most
    /// `max_parallel_requests` worker threads.
    pub fn predict_batch(&self, snapshots: &[SceneSnapshot]) -> Vec<PredictionRecord> {
        let workers = match self {
            Predictor::RuleBased => return snapshots.iter().map(rule_based_predict).collect(),
            Predictor::Remote { max_parallel, .. } => (*max_parallel).min(snapshots.len()).max(1),
        };
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<PredictionRecord>>> = Mutex::new(vec![None; snapshots.len()]);
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(snapshot) = snapshots.get(i) else {
                        break;
                    };
                    let record = self.predict(snapshot);
                    slots.lock().expect("result lock")[i] = Some(record);
                });
            }
        });
        slots
            .into_inner()
            .expect("result lock")
            .into_iter()
            .map(|r| r.expect("every index visited"))
            .collect()
    }
}

/// Convenience wrapper: builds a predictor from `config` and runs one sample.
pub fn predict(snapshot: &SceneSnapshot, config: &PredictorConfig) -> Result<PredictionRecord, ConfigError> {
    Ok(Predictor::from_config(config)?.predict(snapshot))
}
