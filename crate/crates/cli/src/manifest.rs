//! Run manifests and path-file IO.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use skewlevy::path::{CadlagPath, FORMAT_VERSION};

use crate::config::{OutputFormat, SCHEMA_VERSION};
use crate::error::{io_err, CliError};

pub const MANIFEST: &str = "manifest.toml";
pub const CONFIG_ECHO: &str = "config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEntry {
    pub index: usize,
    /// Stream `(master, index)` the path drew from.
    pub seed_master: u64,
    pub seed_index: u64,
    pub file: String,
    pub sha256: String,
    /// Exit index when the path left `X°` (decomposed runs only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exit_index: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exit_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub path_format_version: u32,
    /// `simulate`, `decompose-radial`, or `decompose-angular`.
    pub kind: String,
    pub scenario: String,
    pub size: usize,
    pub seed: u64,
    pub format: OutputFormat,
    pub paths: Vec<PathEntry>,
}

impl Manifest {
    pub fn new(kind: &str, scenario: &str, size: usize, seed: u64, format: OutputFormat) -> Self {
        Manifest {
            schema_version: SCHEMA_VERSION,
            path_format_version: FORMAT_VERSION,
            kind: kind.into(),
            scenario: scenario.into(),
            size,
            seed,
            format,
            paths: Vec::new(),
        }
    }

    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let p = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&p).map_err(|e| io_err("cannot read", &p, e))?;
        let m: Manifest =
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
        if m.schema_version != SCHEMA_VERSION || m.path_format_version != FORMAT_VERSION {
            return Err(CliError::Usage(format!(
                "{}: unsupported schema {} / path format {}",
                p.display(),
                m.schema_version,
                m.path_format_version
            )));
        }
        Ok(m)
    }

    pub fn save(&self, dir: &Path) -> Result<(), CliError> {
        write_text(
            &dir.join(MANIFEST),
            &toml::to_string(self).expect("manifest serialises"),
        )
    }

    pub fn read_path(&self, dir: &Path, e: &PathEntry) -> Result<CadlagPath, CliError> {
        let p = dir.join(&e.file);
        let f = BufReader::new(File::open(&p).map_err(|err| io_err("cannot open", &p, err))?);
        Ok(match self.format {
            OutputFormat::Csv => CadlagPath::read_csv(f)?,
            OutputFormat::Binary => CadlagPath::read_binary(f)?,
        })
    }
}

pub fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err("cannot create output directory", dir, e))?;
    // Probe writability before any work starts.
    let probe = dir.join(".write-probe");
    File::create(&probe).map_err(|e| io_err("output directory not writable:", dir, e))?;
    std::fs::remove_file(&probe).map_err(|e| io_err("cannot clean", &probe, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| io_err("cannot write", path, e))
}

/// Serialises `path` to `dir/rel` and returns the SHA-256 of the bytes.
pub fn write_path(
    dir: &Path,
    rel: &str,
    path: &CadlagPath,
    format: OutputFormat,
) -> Result<String, CliError> {
    let mut bytes = Vec::new();
    match format {
        OutputFormat::Csv => path.write_csv(&mut bytes)?,
        OutputFormat::Binary => path.write_binary(&mut bytes)?,
    }
    let target: PathBuf = dir.join(rel);
    if let Some(parent) = target.parent() {
        std::fs::create_dir_all(parent).map_err(|e| io_err("cannot create", parent, e))?;
    }
    let mut w =
        BufWriter::new(File::create(&target).map_err(|e| io_err("cannot create", &target, e))?);
    w.write_all(&bytes)
        .and_then(|_| w.flush())
        .map_err(|e| io_err("cannot write", &target, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// File name of path `i`, relative to the manifest's directory.
pub fn path_file(i: usize, format: OutputFormat) -> String {
    format!("path_{i:06}.{}", format.extension())
}
