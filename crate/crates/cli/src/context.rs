//! Shared state for one invocation and the on-disk layout of a run.

use std::path::{Path, PathBuf};

use anyhow::Result;
use instyle_core::manifest::load_dataset;
use instyle_core::SceneManifest;
use instyle_pairgen::{ModelLibrary, SyntheticEnvironment};
use log::warn;

use crate::config::PipelineConfig;
use crate::error::{ConfigError, MissingArtifact};

pub struct Context {
    pub config: PipelineConfig,
    pub hash: String,
    pub root: PathBuf,
    pub workers: usize,
}

impl Context {
    pub fn new(config: PipelineConfig, root: PathBuf, workers: usize) -> Self {
        Self {
            hash: config.hash(),
            config,
            root,
            workers: workers.max(1),
        }
    }

    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    pub fn synth_dir(&self, kind: &str) -> PathBuf {
        self.root.join("synth").join(kind)
    }

    pub fn real_dir(&self, split: &str) -> PathBuf {
        self.root.join("real").join(split)
    }

    pub fn pairs_dir(&self) -> PathBuf {
        self.root.join("pairs")
    }

    pub fn weights_dir(&self) -> PathBuf {
        self.root.join("weights")
    }

    pub fn weights_file(&self, class_name: &str) -> PathBuf {
        self.weights_dir().join(format!("{class_name}.istw"))
    }

    pub fn adapted_dir(&self) -> PathBuf {
        self.root.join("adapted")
    }

    pub fn eval_dir(&self) -> PathBuf {
        self.root.join("eval")
    }

    pub fn library(&self) -> Result<ModelLibrary> {
        let full = match &self.config.paths.models {
            Some(path) => ModelLibrary::load(path).map_err(|e| ConfigError(format!("models: {e}")))?,
            None => ModelLibrary::builtin(),
        };
        let subset = full
            .subset(&self.config.objects.classes)
            .map_err(|e| ConfigError(format!("objects.classes: {e}")))?;
        if !self.config.objects.first_upright_only {
            return Ok(subset);
        }
        let mut lib = ModelLibrary::new();
        for class in subset.classes() {
            let entry = subset.get(&class)?;
            lib.insert((*entry.mesh).clone(), vec![entry.uprights[0]])?;
        }
        Ok(lib)
    }

    /// The known environment: the table under a dark background.
    pub fn environment(&self) -> SyntheticEnvironment {
        SyntheticEnvironment {
            environment: vec![self.config.table.piece()],
            background: [0.2, 0.2, 0.2],
            light: Default::default(),
        }
    }

    /// Loads a manifest or dataset index written by `stage`, warning when it
    /// was produced under a different configuration.
    pub fn load_scenes(&self, path: &Path, stage: &'static str) -> Result<Vec<(PathBuf, SceneManifest)>> {
        require(path, stage)?;
        let (index, scenes) = load_dataset(path)?;
        let mut hashes: Vec<Option<&String>> = scenes.iter().map(|(_, m)| m.config_hash.as_ref()).collect();
        if let Some(index) = &index {
            hashes.push(index.config_hash.as_ref());
        }
        self.check_hash(path, hashes);
        Ok(scenes)
    }

    pub fn check_hash<'a>(&self, path: &Path, hashes: impl IntoIterator<Item = Option<&'a String>>) {
        for h in hashes.into_iter().flatten() {
            if *h != self.hash {
                warn!(
                    "{} was produced with config {h}, current config is {}",
                    path.display(),
                    self.hash
                );
                return;
            }
        }
    }
}

pub fn require(path: &Path, stage: &'static str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(MissingArtifact {
            path: path.to_path_buf(),
            stage,
        }
        .into())
    }
}

/// Directory of a manifest path, for resolving the relative paths inside it.
pub fn dir_of(path: &Path) -> &Path {
    instyle_core::manifest::base_dir(path)
}
