use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, TimeZone, Utc};
use mind_core::backend::ReqwestTransport;
use mind_core::{AgentConfig, AgentSuite, Backend, BackendConfig, OpenAiBackend, ScriptedBackend, TemplateSet};
use serde::Deserialize;

use crate::error::{CliError, CliResult};

pub const DEFAULT_DATA_DIR: &str = "mind-data";

/// Creation time stamped on scripted sessions so reruns write identical bytes.
pub fn scripted_epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).single().expect("valid timestamp")
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub data_dir: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub scripted: Option<PathBuf>,
    pub backend: BackendConfig,
    pub agent: AgentSection,
    pub service: ServiceSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentSection {
    pub summarize_with_backend: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSection {
    pub bind: Option<String>,
    pub max_in_flight: Option<usize>,
    pub static_dir: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }
}

/// Settings resolved from flags, then the config file, then defaults.
pub struct Settings {
    pub data_dir: PathBuf,
    pub scripted: Option<PathBuf>,
    pub templates: Arc<TemplateSet>,
    pub backend: BackendConfig,
    pub agent: AgentConfig,
    pub service: ServiceSection,
}

impl Settings {
    pub fn resolve(
        config: Option<&Path>,
        data_dir: Option<PathBuf>,
        scripted: Option<PathBuf>,
        templates: Option<PathBuf>,
    ) -> CliResult<Self> {
        let file = match config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let templates = match templates.or(file.templates) {
            Some(dir) => TemplateSet::load_dir(&dir).map_err(|e| CliError::config(format!("templates: {e}")))?,
            None => TemplateSet::builtin(),
        };
        let scripted = scripted.or(file.scripted);
        if let Some(dir) = &scripted {
            if !dir.is_dir() {
                return Err(CliError::config(format!("scripted directory {} does not exist", dir.display())));
            }
        }
        Ok(Settings {
            data_dir: data_dir.or(file.data_dir).unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_DIR)),
            scripted,
            templates: Arc::new(templates),
            backend: file.backend,
            agent: AgentConfig { summarize_with_backend: file.agent.summarize_with_backend },
            service: file.service,
        })
    }

    pub fn is_scripted(&self) -> bool {
        self.scripted.is_some()
    }

    /// A backend for one session. Scripted directories are re-read so every session
    /// starts from the first answer of each role.
    pub fn backend(&self) -> CliResult<Arc<dyn Backend>> {
        match &self.scripted {
            Some(dir) => Ok(Arc::new(ScriptedBackend::from_dir(dir)?)),
            None => Ok(Arc::new(OpenAiBackend::from_env(self.backend.clone(), Arc::new(ReqwestTransport::new()))?)),
        }
    }

    pub fn suite(&self, backend: Arc<dyn Backend>) -> Arc<AgentSuite> {
        Arc::new(AgentSuite::new(backend, self.templates.clone()).with_config(self.agent))
    }

    pub fn transcripts_dir(&self) -> PathBuf {
        self.data_dir.join("transcripts")
    }

    /// Creation time for new sessions: fixed under scripted backends.
    pub fn clock(&self) -> Option<DateTime<Utc>> {
        self.is_scripted().then(scripted_epoch)
    }
}
