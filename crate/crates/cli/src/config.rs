//! Optional TOML run configuration. Command-line flags take precedence over
//! values read from the file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub dataset: Option<PathBuf>,
    pub vectors: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub history: Option<PathBuf>,
    pub levels: Option<usize>,
    pub heights: Option<Vec<usize>>,
    pub per_height: Option<usize>,
    pub nonlinearity: Option<String>,
    pub dropout: Option<f64>,
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
    pub early_stopping: Option<bool>,
    pub batch_size: Option<usize>,
    pub seed: Option<u64>,
    pub validation_fraction: Option<f64>,
    pub rho: Option<f64>,
    pub epsilon: Option<f64>,
    pub finetune_embeddings: Option<bool>,
    pub dim: Option<usize>,
    pub oov_seed: Option<u64>,
    pub eval_fraction: Option<f64>,
    pub split_seed: Option<u64>,
    pub jobs: Option<usize>,
    #[serde(default)]
    pub grid: GridFile,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridFile {
    #[serde(default)]
    pub heights: Vec<Vec<usize>>,
    #[serde(default)]
    pub vectors: Vec<VectorFile>,
    pub csv: Option<PathBuf>,
    pub text: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VectorFile {
    pub label: String,
    pub path: PathBuf,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, String> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

/// `2,3,5` or `2+3+5` as a height set.
pub fn parse_heights(s: &str) -> Result<Vec<usize>, String> {
    s.split([',', '+'])
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| format!("bad filter height `{p}` in `{s}`"))
        })
        .collect()
}

/// `label=path`, or a bare path labelled by its file stem.
pub fn parse_vector_spec(s: &str) -> Result<VectorFile, String> {
    match s.split_once('=') {
        Some((label, path)) if !label.is_empty() && !path.is_empty() => Ok(VectorFile {
            label: label.to_owned(),
            path: PathBuf::from(path),
        }),
        Some(_) => Err(format!("expected `label=path`, got `{s}`")),
        None => {
            let path = PathBuf::from(s);
            let label = path
                .file_stem()
                .map(|stem| stem.to_string_lossy().into_owned())
                .ok_or_else(|| format!("no file name in `{s}`"))?;
            Ok(VectorFile { label, path })
        }
    }
}
