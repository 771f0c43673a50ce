use std::fs;
use std::path::{Path, PathBuf};

use conngan::nn::ModelParams;
use conngan::Error;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{AtStage, CliError, Stage};

pub const PROVENANCE_FILE: &str = "provenance.json";

/// Master seed and config hash carried by every report.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Stamp {
    pub seed: u64,
    pub config_hash: String,
}

impl Stamp {
    /// Appends `seed` and `config_hash` columns to a headed CSV.
    pub fn csv(&self, csv: &str) -> String {
        let mut out = String::with_capacity(csv.len() + 64);
        for (i, line) in csv.lines().filter(|l| !l.is_empty()).enumerate() {
            out.push_str(line);
            if i == 0 {
                out.push_str(",seed,config_hash\n");
            } else {
                out.push_str(&format!(",{},{}\n", self.seed, self.config_hash));
            }
        }
        out
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct OutputRecord {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
struct Provenance<'a, C: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
    config_hash: &'a str,
    status: &'a str,
    stream_seeds: &'a [(String, u64)],
    config: &'a C,
    outputs: &'a [OutputRecord],
}

/// Output directory that records the SHA-256 of everything written to it
/// and finishes with a provenance file.
pub struct OutputDir {
    root: PathBuf,
    pub stamp: Stamp,
    records: Vec<OutputRecord>,
    provenance_name: String,
}

impl OutputDir {
    pub fn create(root: &Path, stamp: Stamp) -> Result<Self, CliError> {
        fs::create_dir_all(root).at(Stage::Output)?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            stamp,
            records: Vec::new(),
            provenance_name: PROVENANCE_FILE.to_string(),
        })
    }

    /// Name of the provenance file written by [`Self::finish`].
    pub fn with_provenance_name(mut self, name: impl Into<String>) -> Self {
        self.provenance_name = name.into();
        self
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn record(&mut self, name: &str, bytes: &[u8]) {
        self.records.push(OutputRecord {
            file: name.to_string(),
            sha256: sha256_hex(bytes),
        });
    }

    /// Writes a headed CSV with the seed/hash columns appended.
    pub fn write_csv(&mut self, name: &str, csv: &str) -> Result<PathBuf, CliError> {
        let text = self.stamp.csv(csv);
        let path = self.path(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).at(Stage::Output)?;
        }
        fs::write(&path, &text).at(Stage::Output)?;
        self.record(name, text.as_bytes());
        Ok(path)
    }

    pub fn write_checkpoint(
        &mut self,
        name: &str,
        params: &ModelParams,
    ) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        params.save(&path).at(Stage::Output)?;
        let bytes = params.to_bytes().at(Stage::Output)?;
        self.record(name, &bytes);
        Ok(path)
    }

    /// Registers a file written by other means.
    pub fn register(&mut self, name: &str) -> Result<(), CliError> {
        let bytes = fs::read(self.path(name)).at(Stage::Output)?;
        self.record(name, &bytes);
        Ok(())
    }

    pub fn records(&self) -> &[OutputRecord] {
        &self.records
    }

    /// Writes the provenance file (`provenance.json` unless renamed).
    pub fn finish<C: Serialize>(
        &self,
        command: &str,
        status: &str,
        stream_seeds: &[(String, u64)],
        config: &C,
    ) -> Result<PathBuf, CliError> {
        let p = Provenance {
            tool: "conngan",
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed: self.stamp.seed,
            config_hash: &self.stamp.config_hash,
            status,
            stream_seeds,
            config,
            outputs: &self.records,
        };
        let text = serde_json::to_string_pretty(&p)
            .map_err(|e| CliError::new(Stage::Output, Error::Json(e)))?;
        let path = self.path(&self.provenance_name);
        fs::write(&path, text + "\n").at(Stage::Output)?;
        Ok(path)
    }
}
