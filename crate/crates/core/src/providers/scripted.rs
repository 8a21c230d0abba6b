//! Deterministic canned-response backend.
//!
//! Replies are keyed on `(role, subject)` where the subject is the trimmed
//! [`ModelRequest::key`]. A rule may also name a task; it then only matches
//! requests with that task, and takes precedence over a rule without one.
//! Unmatched requests fall through to a per-role
//! default: verification answers `True`, generation and refinement echo the
//! subject back unless a default text is configured. With fall-through
//! disabled an unmatched request is a [`ProviderError::ScriptMiss`].
//!
//! Script files are JSON:
//!
//! ```json
//! {
//!   "rules": [
//!     {"role": "verify", "match": "B.", "text": "False"},
//!     {"role": "refine", "match": "B.", "text": "B2.", "latency_ms": 40},
//!     {"role": "generate", "task": "falsify", "match": "B.", "text": "B3."}
//!   ],
//!   "defaults": {"generate": "I do not know."},
//!   "fall_through": true
//! }
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Backend, Completion, ModelRequest, ProviderError, ProviderRole};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedReply {
    pub text: String,
    /// Overrides the artifact tokenizer's count of `text`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion_tokens: Option<u64>,
    #[serde(default)]
    pub latency_ms: u64,
}

impl From<&str> for ScriptedReply {
    fn from(text: &str) -> Self {
        Self {
            text: text.to_string(),
            completion_tokens: None,
            latency_ms: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptRule {
    pub role: ProviderRole,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<String>,
    #[serde(rename = "match")]
    pub key: String,
    #[serde(flatten)]
    pub reply: ScriptedReply,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedBehavior {
    #[serde(default)]
    pub rules: Vec<ScriptRule>,
    #[serde(default)]
    pub defaults: BTreeMap<ProviderRole, String>,
    #[serde(default = "default_true")]
    pub fall_through: bool,
}

impl Default for ScriptedBehavior {
    fn default() -> Self {
        Self {
            rules: Vec::new(),
            defaults: BTreeMap::new(),
            fall_through: true,
        }
    }
}

impl ScriptedBehavior {
    pub fn rule(mut self, role: ProviderRole, key: &str, text: &str) -> Self {
        self.rules.push(ScriptRule {
            role,
            task: None,
            key: key.to_string(),
            reply: text.into(),
        });
        self
    }

    pub fn task_rule(mut self, role: ProviderRole, task: &str, key: &str, text: &str) -> Self {
        self.rules.push(ScriptRule {
            role,
            task: Some(task.to_string()),
            key: key.to_string(),
            reply: text.into(),
        });
        self
    }

    pub fn reply(mut self, role: ProviderRole, key: &str, reply: ScriptedReply) -> Self {
        self.rules.push(ScriptRule {
            role,
            task: None,
            key: key.to_string(),
            reply,
        });
        self
    }

    pub fn default_text(mut self, role: ProviderRole, text: &str) -> Self {
        self.defaults.insert(role, text.to_string());
        self
    }

    pub fn strict(mut self) -> Self {
        self.fall_through = false;
        self
    }

    pub fn from_json(json: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(json)
    }

    pub fn load(path: &Path) -> Result<Self, ProviderError> {
        let text = fs::read_to_string(path).map_err(|e| {
            ProviderError::InvalidRequest(format!("cannot read script {}: {e}", path.display()))
        })?;
        Self::from_json(&text).map_err(|e| {
            ProviderError::InvalidRequest(format!("invalid script {}: {e}", path.display()))
        })
    }
}

/// Immutable after construction, so it is trivially safe to share across
/// threads and identical requests always get identical replies.
#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    name: String,
    table: BTreeMap<(ProviderRole, Option<String>, String), ScriptedReply>,
    defaults: BTreeMap<ProviderRole, String>,
    fall_through: bool,
}

impl ScriptedBackend {
    /// Later rules with the same key replace earlier ones.
    pub fn new(name: impl Into<String>, behavior: ScriptedBehavior) -> Self {
        let table = behavior
            .rules
            .into_iter()
            .map(|r| ((r.role, r.task, r.key.trim().to_string()), r.reply))
            .collect();
        Self {
            name: name.into(),
            table,
            defaults: behavior.defaults,
            fall_through: behavior.fall_through,
        }
    }

    /// Named after the file name only, so outputs do not depend on where the
    /// script lives.
    pub fn from_file(path: &Path) -> Result<Self, ProviderError> {
        let file = path.file_name().map_or_else(|| path.display().to_string(), |f| f.to_string_lossy().into_owned());
        let name = format!("script:{file}");
        Ok(Self::new(name, ScriptedBehavior::load(path)?))
    }

    pub fn lookup(&self, role: ProviderRole, task: Option<&str>, key: &str) -> Option<&ScriptedReply> {
        let key = key.trim().to_string();
        task.and_then(|t| self.table.get(&(role, Some(t.to_string()), key.clone())))
            .or_else(|| self.table.get(&(role, None, key)))
    }
}

impl Backend for ScriptedBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, request: &ModelRequest) -> Result<Completion, ProviderError> {
        let key = request.key();
        let reply = match self.lookup(request.role, request.task.as_deref(), key) {
            Some(reply) => reply.clone(),
            None if !self.fall_through => {
                return Err(ProviderError::ScriptMiss {
                    role: request.role,
                    key: key.to_string(),
                })
            }
            None => match (request.role, self.defaults.get(&request.role)) {
                (_, Some(text)) => text.as_str().into(),
                (ProviderRole::Verify, None) => "True".into(),
                (_, None) => key.trim().into(),
            },
        };
        Ok(Completion {
            text: reply.text,
            prompt_tokens: None,
            completion_tokens: reply.completion_tokens,
            latency_ms: Some(reply.latency_ms),
        })
    }
}
