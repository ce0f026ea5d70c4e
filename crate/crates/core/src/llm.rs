//! Text-completion adapters.
//!
//! The miner and the order decision both talk to a language model through
//! [`TextCompletion`]. Tests use [`ScriptedCompletion`]; the HTTP adapter is
//! behind the `http` feature.

use std::collections::VecDeque;
use std::sync::Mutex;

use crate::error::{Error, Result};

pub trait TextCompletion: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String>;
}

/// Replays canned replies in order and records every prompt it was given.
#[derive(Default)]
pub struct ScriptedCompletion {
    replies: Mutex<VecDeque<String>>,
    prompts: Mutex<Vec<String>>,
}

impl ScriptedCompletion {
    pub fn new<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            replies: Mutex::new(replies.into_iter().map(Into::into).collect()),
            prompts: Mutex::new(Vec::new()),
        }
    }

    pub fn prompts(&self) -> Vec<String> {
        self.prompts.lock().expect("poisoned").clone()
    }
}

impl TextCompletion for ScriptedCompletion {
    fn complete(&self, prompt: &str) -> Result<String> {
        self.prompts.lock().expect("poisoned").push(prompt.to_string());
        self.replies
            .lock()
            .expect("poisoned")
            .pop_front()
            .ok_or_else(|| Error::GeneratorUnavailable("scripted replies exhausted".into()))
    }
}

#[cfg(feature = "http")]
pub use http::HttpCompletion;

#[cfg(feature = "http")]
mod http {
    use serde_json::json;

    use super::TextCompletion;
    use crate::error::{Error, Result};

    /// Chat-completion endpoint speaking the common `messages` JSON shape.
    pub struct HttpCompletion {
        pub endpoint: String,
        pub model: String,
        api_key: String,
        client: reqwest::blocking::Client,
    }

    impl HttpCompletion {
        /// Reads the key from `key_var`.
        pub fn from_env(endpoint: &str, model: &str, key_var: &str) -> Result<Self> {
            let api_key = std::env::var(key_var)
                .map_err(|_| Error::GeneratorUnavailable(format!("environment variable {key_var} is not set")))?;
            Ok(Self {
                endpoint: endpoint.to_string(),
                model: model.to_string(),
                api_key,
                client: reqwest::blocking::Client::new(),
            })
        }
    }

    impl TextCompletion for HttpCompletion {
        fn complete(&self, prompt: &str) -> Result<String> {
            let body = json!({
                "model": self.model,
                "messages": [{"role": "user", "content": prompt}],
            });
            let resp = self
                .client
                .post(&self.endpoint)
                .bearer_auth(&self.api_key)
                .json(&body)
                .send()
                .and_then(|r| r.error_for_status())
                .map_err(|e| Error::GeneratorUnavailable(e.to_string()))?;
            let value: serde_json::Value = resp.json().map_err(|e| Error::GeneratorUnavailable(e.to_string()))?;
            value["choices"][0]["message"]["content"]
                .as_str()
                .map(str::to_string)
                .ok_or_else(|| Error::GeneratorUnavailable("reply has no message content".into()))
        }
    }
}
