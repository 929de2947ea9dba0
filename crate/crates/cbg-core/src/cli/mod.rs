//! Command-line harness: simulations, sweeps, optimizations, and oracle
//! self-checks, with manifest-tracked output directories.

mod check;
mod optimize;
mod simulate;
mod sweep;

pub use check::{cmd_check, CheckArgs};
pub use optimize::{cmd_optimize, OptimizeArgs, OptimizeConfigFile};
pub use simulate::{cmd_simulate, SimulateArgs};
pub use sweep::{cmd_sweep, SweepArgs};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use thiserror::Error;

use crate::geometry::{load_design, presets, CbgDesign};
use crate::runner::{Band, MeshProfile};

/// Manifest schema version written by every command.
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, unreadable config, invalid design: exit code 2.
    #[error("{0}")]
    Usage(String),
    /// The run itself failed: exit code 3.
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        CliError::Numerical(msg.into())
    }
}

/// Loads a design from `--design FILE` or `--preset NAME`.
pub fn resolve_design(design: &Option<PathBuf>, preset: &Option<String>) -> Result<CbgDesign, CliError> {
    match (design, preset) {
        (Some(path), None) => {
            if !path.exists() {
                return Err(CliError::usage(format!("design file not found: {}", path.display())));
            }
            load_design(path).map_err(|e| CliError::usage(format!("cannot load design: {e}")))
        }
        (None, Some(name)) => presets::by_name(name).ok_or_else(|| {
            CliError::usage(format!(
                "unknown preset '{name}' (available: {})",
                presets::NAMES.join(", ")
            ))
        }),
        (Some(_), Some(_)) => Err(CliError::usage("--design and --preset are mutually exclusive")),
        (None, None) => Err(CliError::usage("one of --design or --preset is required")),
    }
}

pub fn parse_mesh(name: &str) -> Result<MeshProfile, CliError> {
    MeshProfile::parse(name)
        .ok_or_else(|| CliError::usage(format!("unknown mesh profile '{name}' (desk | paper-fidelity)")))
}

pub fn parse_na_list(text: &str) -> Result<Vec<f64>, CliError> {
    let values: Result<Vec<f64>, _> = text.split(',').map(|s| s.trim().parse::<f64>()).collect();
    let values = values.map_err(|e| CliError::usage(format!("bad NA list: {e}")))?;
    if values.is_empty() || values.iter().any(|&na| !(na > 0.0 && na <= 1.0)) {
        return Err(CliError::usage("NA values must lie in (0, 1]"));
    }
    Ok(values)
}

/// Parses `center,span,samples`.
pub fn parse_band(text: &str) -> Result<Band, CliError> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 3 {
        return Err(CliError::usage("band must be center_nm,span_nm,samples"));
    }
    let center_nm: f64 = parts[0].trim().parse().map_err(|e| CliError::usage(format!("bad band center: {e}")))?;
    let span_nm: f64 = parts[1].trim().parse().map_err(|e| CliError::usage(format!("bad band span: {e}")))?;
    let samples: usize = parts[2].trim().parse().map_err(|e| CliError::usage(format!("bad band samples: {e}")))?;
    if samples < 3 {
        return Err(CliError::usage("band needs at least 3 samples"));
    }
    Ok(Band { center_nm, span_nm, samples })
}

/// Reads the allocation cap from CBG_MAX_GRID_BYTES, when set.
pub fn grid_bytes_cap() -> Option<u64> {
    std::env::var("CBG_MAX_GRID_BYTES").ok().and_then(|v| v.parse().ok())
}

/// An output directory with overwrite protection and a manifest of every
/// file written (with checksums).
pub struct OutputDir {
    root: PathBuf,
    files: Vec<ManifestFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestFile {
    pub path: String,
    pub sha256: String,
}

impl OutputDir {
    /// Creates the directory. Without `force`, refuses to reuse a directory
    /// that already contains files (unless `allow_existing`, used by
    /// resumable commands).
    pub fn prepare(root: &Path, force: bool, allow_existing: bool) -> Result<Self, CliError> {
        if root.exists() {
            let non_empty = std::fs::read_dir(root)
                .map(|mut d| d.next().is_some())
                .unwrap_or(false);
            if non_empty && !force && !allow_existing {
                return Err(CliError::usage(format!(
                    "output directory {} is not empty; pass --force to overwrite",
                    root.display()
                )));
            }
        }
        std::fs::create_dir_all(root)
            .map_err(|e| CliError::numerical(format!("cannot create {}: {e}", root.display())))?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Registers a file that was just written, hashing its content.
    pub fn track(&mut self, name: &str) -> Result<(), CliError> {
        let bytes = std::fs::read(self.path(name))
            .map_err(|e| CliError::numerical(format!("cannot hash {name}: {e}")))?;
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        let digest = hasher.finalize();
        self.files.push(ManifestFile {
            path: name.to_string(),
            sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
        });
        Ok(())
    }

    /// Writes the manifest itself (not self-listed).
    pub fn write_manifest(&self, body: serde_json::Value) -> Result<(), CliError> {
        let mut body = body;
        body["schema_version"] = serde_json::json!(MANIFEST_SCHEMA_VERSION);
        body["files"] = serde_json::to_value(&self.files).expect("manifest files");
        let text = serde_json::to_string_pretty(&body).expect("manifest body");
        std::fs::write(self.path("manifest.json"), text)
            .map_err(|e| CliError::numerical(format!("cannot write manifest: {e}")))?;
        Ok(())
    }
}
