use std::path::Path;

use anyhow::{bail, Context, Result};
use streamvr::providers::{Backend, HttpBackend, HttpConfig, ScriptedBackend};

/// A backend given as `script:PATH` or as an `http(s)://` endpoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    Script(String),
    Http(String),
}

impl BackendSpec {
    pub fn parse(text: &str) -> Result<Self> {
        if let Some(path) = text.strip_prefix("script:") {
            if path.is_empty() {
                bail!("backend {text:?} names no script file");
            }
            Ok(Self::Script(path.to_string()))
        } else if text.starts_with("http://") || text.starts_with("https://") {
            Ok(Self::Http(text.to_string()))
        } else {
            bail!("backend {text:?} is neither script:PATH nor an http(s) URL")
        }
    }

    /// Resolves a relative script path against `base`.
    pub fn relative_to(self, base: &Path) -> Self {
        match self {
            Self::Script(p) if Path::new(&p).is_relative() => Self::Script(base.join(p).to_string_lossy().into_owned()),
            other => other,
        }
    }

    /// Checks that a script file exists.
    pub fn validate(&self) -> Result<()> {
        if let Self::Script(path) = self {
            if !Path::new(path).is_file() {
                bail!("script file {path} does not exist");
            }
        }
        Ok(())
    }

    pub fn build(&self, model: &str, seed: Option<u64>) -> Result<Box<dyn Backend>> {
        match self {
            Self::Script(path) => {
                let backend = ScriptedBackend::from_file(Path::new(path)).with_context(|| format!("loading script {path}"))?;
                Ok(Box::new(backend))
            }
            Self::Http(url) => {
                let mut config = HttpConfig::new(url.as_str(), model).with_env_key();
                config.seed = seed;
                Ok(Box::new(HttpBackend::new(config)))
            }
        }
    }
}
