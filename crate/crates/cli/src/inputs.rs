//! Parameter directory resolution: `--params`, then `FUELSHOCK_PARAMS`, then
//! the tables compiled into the binary.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use fuelshock_core::params::{ParameterSet, PARAMETER_FILE};
use fuelshock_core::scenario::{EMISSION_ELASTICITY_FILE, PUBLISHED_RESULTS_FILE, SCENARIO_FILE};
use fuelshock_core::Error;

pub const PARAMS_ENV: &str = "FUELSHOCK_PARAMS";

const BUILTIN_FILES: [(&str, &str); 4] = [
    (PARAMETER_FILE, include_str!("../../../data/published/parameters.toml")),
    (SCENARIO_FILE, include_str!("../../../data/published/scenarios.toml")),
    (
        EMISSION_ELASTICITY_FILE,
        include_str!("../../../data/published/emission_price_elasticities.csv"),
    ),
    (
        PUBLISHED_RESULTS_FILE,
        include_str!("../../../data/published/published_results.csv"),
    ),
];

pub struct ParamDir {
    dir: PathBuf,
    parameter_file: PathBuf,
    pub origin: String,
    builtin: Option<tempfile::TempDir>,
}

impl ParamDir {
    /// `path` may name a directory holding the parameter files or the
    /// parameter file itself, whose siblings are then used.
    pub fn resolve(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            let tmp = tempfile::tempdir().context("creating a directory for the builtin parameters")?;
            for (name, text) in BUILTIN_FILES {
                std::fs::write(tmp.path().join(name), text)
                    .with_context(|| format!("unpacking builtin {name}"))?;
            }
            log::info!("using builtin parameter tables");
            return Ok(Self {
                dir: tmp.path().to_path_buf(),
                parameter_file: tmp.path().join(PARAMETER_FILE),
                origin: "builtin".into(),
                builtin: Some(tmp),
            });
        };
        let (dir, parameter_file) = if path.is_dir() {
            (path.to_path_buf(), path.join(PARAMETER_FILE))
        } else if path.is_file() {
            let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
            (dir, path.to_path_buf())
        } else {
            return Err(Error::MissingInput(format!("parameter path {} not found", path.display())).into());
        };
        log::info!("parameters from {}", path.display());
        Ok(Self {
            dir,
            parameter_file,
            origin: path.display().to_string(),
            builtin: None,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// `path` for messages; builtin files are shown as `builtin/<name>`.
    pub fn show(&self, path: &Path) -> String {
        match (&self.builtin, path.strip_prefix(&self.dir)) {
            (Some(_), Ok(rel)) => format!("builtin/{}", rel.display()),
            _ => path.display().to_string(),
        }
    }

    pub fn parameters(&self) -> Result<ParameterSet> {
        let file = self.file_at(&self.parameter_file)?;
        let params = ParameterSet::load(&file)?;
        for field in params.unsourced_fields() {
            log::warn!("{}: `{field}` has no source annotation", file.display());
        }
        Ok(params)
    }

    /// A named file in the parameter directory, which must exist.
    pub fn file(&self, name: &str) -> Result<PathBuf> {
        self.file_at(&self.dir.join(name))
    }

    fn file_at(&self, path: &Path) -> Result<PathBuf> {
        if path.is_file() {
            Ok(path.to_path_buf())
        } else {
            Err(Error::MissingInput(format!("parameter file {} not found", path.display())).into())
        }
    }
}

/// Fails with a missing-input error naming `path` unless it is a file.
pub fn existing(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::MissingInput(format!("{what} {} not found", path.display())).into())
    }
}
