use std::path::{Path, PathBuf};

use conngan::gan::GanConfig;
use conngan::gnneval::{Method, Mode};
use conngan::oversample::OversampleConfig;
use conngan::rng::derive_seed;
use conngan::synthcorpus::CorpusConfig;
use conngan::{distdist, Error};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{AtStage, CliError, Stage};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    pub repeats: usize,
    /// Generator iterations for the per-fold GANs; `gan.steps` when absent.
    pub gan_steps: Option<usize>,
    pub modes: Vec<Mode>,
    pub methods: Vec<Method>,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            repeats: 5,
            gan_steps: None,
            modes: Mode::ALL.to_vec(),
            methods: Method::ALL.to_vec(),
        }
    }
}

/// Complete description of an experiment. Every seed inside the
/// sub-configurations is derived from `seed` during [`ExperimentConfig::resolve`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Synthetic corpus; used when `input` is absent.
    pub corpus: Option<CorpusConfig>,
    /// Manifest of real matrices.
    pub input: Option<PathBuf>,
    pub gan: GanConfig,
    pub oversample: OversampleConfig,
    pub cv: CvConfig,
    pub bins: usize,
    /// Output directory; not part of the config hash.
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            corpus: None,
            input: None,
            gan: GanConfig::default(),
            oversample: OversampleConfig::default(),
            cv: CvConfig::default(),
            bins: distdist::DEFAULT_BINS,
            out: None,
        }
    }
}

/// Stream identifiers under the master seed.
pub mod streams {
    pub const CORPUS: u64 = 1;
    pub const GAN: u64 = 2;
    pub const OVERSAMPLE: u64 = 3;
    pub const CV: u64 = 4;
    pub const SAMPLING: u64 = 5;
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self, CliError> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn stream_seed(&self, stream: u64) -> u64 {
        derive_seed(self.seed, &[stream])
    }

    /// Fills in the default corpus when no input is given, derives every
    /// sub-seed from the master seed, and validates the result.
    pub fn resolve(mut self) -> Result<Self, CliError> {
        match (&self.corpus, &self.input) {
            (Some(_), Some(_)) => {
                return Err(CliError::config("set either `corpus` or `input`, not both"))
            }
            (None, None) => self.corpus = Some(CorpusConfig::default()),
            _ => {}
        }
        if let Some(c) = &mut self.corpus {
            c.seed = derive_seed(self.seed, &[streams::CORPUS]);
            self.gan.n = c.n;
        }
        self.gan.seed = self.stream_seed(streams::GAN);
        self.oversample.seed = self.stream_seed(streams::OVERSAMPLE);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if let Some(c) = &self.corpus {
            c.validate().at(Stage::Config)?;
        }
        self.gan.validate().at(Stage::Config)?;
        self.oversample.validate().at(Stage::Config)?;
        if self.cv.repeats == 0 {
            return Err(CliError::config("cv.repeats must be at least 1"));
        }
        if self.cv.modes.is_empty() || self.cv.methods.is_empty() {
            return Err(CliError::config(
                "cv.modes and cv.methods must not be empty",
            ));
        }
        if self.bins == 0 {
            return Err(CliError::config("bins must be positive"));
        }
        Ok(())
    }

    /// GAN configuration used inside cross-validation.
    pub fn cv_gan(&self) -> GanConfig {
        GanConfig {
            steps: self.cv.gan_steps.unwrap_or(self.gan.steps),
            ..self.gan.clone()
        }
    }

    /// Copy with the output directory cleared, as recorded in provenance.
    pub fn without_out(&self) -> Self {
        ExperimentConfig {
            out: None,
            ..self.clone()
        }
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form,
    /// with the output directory left out.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(&self.without_out()).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_json(&self) -> Result<String, CliError> {
        serde_json::to_string_pretty(self).map_err(|e| CliError::new(Stage::Output, Error::Json(e)))
    }
}
