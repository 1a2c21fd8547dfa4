//! CLI configuration: provider choices, retrieval parameters, and the
//! fixture paths everything loads from. Paths resolve relative to the
//! config file and must exist at load time.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use daoforge_core::pipeline::StateModel;
use daoforge_core::retrieval::{EmbeddingProvider, HashedEmbedding, Lexicon, LiveEmbedding, SampleDb};
use daoforge_core::Registry;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum EmbeddingChoice {
    Test,
    Live,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum GeneratorChoice {
    Template,
    Scripted,
    Live,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Config {
    pub registry_path: PathBuf,
    pub sample_db_path: PathBuf,
    pub lexicon_path: PathBuf,
    pub state_model_path: PathBuf,
    pub fixture_dir: PathBuf,
    pub embedding_provider: EmbeddingChoice,
    pub generator: GeneratorChoice,
    pub k: usize,
    pub max_retries: u32,
    pub token_budget: usize,
    #[serde(default)]
    pub generator_url: Option<String>,
    #[serde(default)]
    pub generator_model: Option<String>,
    #[serde(default)]
    pub embedding_url: Option<String>,
    #[serde(default)]
    pub embedding_model: Option<String>,
    #[serde(default)]
    pub embedding_dimension: Option<usize>,
    #[serde(default)]
    pub etherscan_url: Option<String>,
    #[serde(default)]
    pub similarity_threshold: Option<f64>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|err| CliError::config(format!("cannot read config {}: {err}", path.display())))?;
        let mut config: Config = serde_json::from_str(&text)
            .map_err(|err| CliError::config(format!("bad config {}: {err}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for path in [
            &mut config.registry_path,
            &mut config.sample_db_path,
            &mut config.lexicon_path,
            &mut config.state_model_path,
            &mut config.fixture_dir,
        ] {
            if path.is_relative() {
                *path = base.join(&path);
            }
            if !path.exists() {
                return Err(CliError::config(format!("configured path {} does not exist", path.display())));
            }
        }
        Ok(config)
    }
}

/// Everything a command needs, loaded once. Sample embeddings are computed
/// with the same provider queries will use.
pub struct Env {
    pub config: Config,
    pub registry: Registry,
    pub lexicon: Lexicon,
    pub db: SampleDb,
    pub model: StateModel,
    pub embedding: Box<dyn EmbeddingProvider>,
}

impl Env {
    pub fn load(config: Config, live: bool) -> Result<Env, CliError> {
        let registry = Registry::load(&config.registry_path)
            .map_err(|err| CliError::config(err.to_string()))?;
        let lexicon = Lexicon::load(&config.lexicon_path)
            .map_err(|err| CliError::config(err.to_string()))?;
        let embedding = build_embedding(&config, live)?;
        let db = SampleDb::load(&config.sample_db_path, lexicon.clone(), embedding.as_ref())
            .map_err(|err| CliError::config(err.to_string()))?;
        let model = StateModel::load(&config.state_model_path, &registry)
            .map_err(|err| CliError::config(err.to_string()))?;
        Ok(Env { config, registry, lexicon, db, model, embedding })
    }
}

fn build_embedding(config: &Config, live: bool) -> Result<Box<dyn EmbeddingProvider>, CliError> {
    if live && config.embedding_provider == EmbeddingChoice::Live {
        let api_key = std::env::var("GENERATOR_API_KEY")
            .map_err(|_| CliError::config("live embedding needs the GENERATOR_API_KEY env var"))?;
        let dimension = config
            .embedding_dimension
            .ok_or_else(|| CliError::config("live embedding needs embeddingDimension in the config"))?;
        return Ok(Box::new(LiveEmbedding {
            base_url: config
                .embedding_url
                .clone()
                .unwrap_or_else(|| "https://api.openai.com/v1".into()),
            api_key,
            model: config
                .embedding_model
                .clone()
                .unwrap_or_else(|| "text-embedding-3-small".into()),
            dimension,
        }));
    }
    Ok(Box::new(HashedEmbedding::default()))
}
