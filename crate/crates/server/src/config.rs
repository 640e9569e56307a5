use std::path::{Path, PathBuf};
use std::sync::Arc;

use longdial::backend::{BackendError, ChatBackend, ChatModel};
use longdial::embedding::EmbeddingError;
use longdial::memory::MemoryError;
use longdial::persona::ExtractionStyle;
use longdial::prompts::PromptError;
use longdial::{AgentRuntime, BackendConfig, EmbeddingProviderSpec, ModuleSet, PromptTemplates, RetrievalConfig, Timestamp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Parse { path: String, source: Box<toml::de::Error> },
    #[error("data directory {path} is not writable: {source}")]
    DataDir { path: String, source: std::io::Error },
    #[error(transparent)]
    Retrieval(#[from] MemoryError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

/// Service settings, read from a TOML file. Every field has a default, so an
/// empty file yields an offline service with the mock backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: String,
    pub data_dir: PathBuf,
    /// Give new conversations a simulated clock that only moves when told to.
    pub simulated_clock: bool,
    /// Starting value of simulated clocks, in Unix seconds. Defaults to the
    /// wall-clock time at creation.
    pub clock_start: Option<i64>,
    /// Directory with template overrides; missing files fall back to the
    /// built-in templates.
    pub prompt_dir: Option<PathBuf>,
    pub extraction: ExtractionStyle,
    /// Names used when a message arrives for a conversation that does not
    /// exist yet.
    pub default_user_name: String,
    pub default_agent_name: String,
    pub modules: ModuleSet,
    pub retrieval: RetrievalConfig,
    pub embedding: EmbeddingProviderSpec,
    pub backend: BackendConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:8080".into(),
            data_dir: PathBuf::from("longdial-data"),
            simulated_clock: true,
            clock_start: None,
            prompt_dir: None,
            extraction: ExtractionStyle::default(),
            default_user_name: "User".into(),
            default_agent_name: "Assistant".into(),
            modules: ModuleSet::FULL,
            retrieval: RetrievalConfig::default(),
            embedding: EmbeddingProviderSpec::default(),
            backend: BackendConfig::default(),
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(src: &str, origin: &str) -> Result<Self, ConfigError> {
        toml::from_str(src).map_err(|e| ConfigError::Parse { path: origin.into(), source: Box::new(e) })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let src = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Read { path: path.display().to_string(), source })?;
        Self::from_toml(&src, &path.display().to_string())
    }

    /// Reads `path` if given, otherwise returns the defaults.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self, ConfigError> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    /// Checks the nested retrieval, embedding and backend configs.
    pub fn validate_settings(&self) -> Result<(), ConfigError> {
        self.retrieval.validate()?;
        self.embedding.validate()?;
        self.backend.validate()?;
        Ok(())
    }

    /// [`Self::validate_settings`] plus creating the data directory and
    /// checking that it is writable.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.validate_settings()?;
        let dir_err = |source| ConfigError::DataDir { path: self.data_dir.display().to_string(), source };
        std::fs::create_dir_all(&self.data_dir).map_err(dir_err)?;
        let probe = self.data_dir.join(".write-probe");
        std::fs::write(&probe, b"").map_err(dir_err)?;
        std::fs::remove_file(&probe).map_err(dir_err)?;
        Ok(())
    }

    pub fn build_runtime(&self) -> Result<AgentRuntime, ConfigError> {
        let model: Arc<dyn ChatModel> = Arc::new(ChatBackend::new(self.backend.clone())?);
        self.build_runtime_with(model)
    }

    /// Like [`Self::build_runtime`] with a caller-supplied model.
    pub fn build_runtime_with(&self, model: Arc<dyn ChatModel>) -> Result<AgentRuntime, ConfigError> {
        let mut runtime = AgentRuntime::new(model, self.embedding.build()?).with_modules(self.modules);
        runtime.retrieval = self.retrieval;
        runtime.extraction = self.extraction;
        if let Some(dir) = &self.prompt_dir {
            runtime.templates = PromptTemplates::load_dir(dir)?;
        }
        Ok(runtime)
    }

    /// Clock value for a conversation created now.
    pub fn initial_clock(&self) -> Option<Timestamp> {
        self.simulated_clock.then(|| self.clock_start.map_or_else(Timestamp::now, Timestamp))
    }
}
