use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use hybrid_fivebar::Error;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_INFEASIBLE: u8 = 3;
pub const EXIT_UNSTABLE: u8 = 4;

/// A failed command, classified by exit code.
#[derive(Debug)]
pub enum Failure {
    Input(String),
    Infeasible(String),
    Unstable(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Input(_) => EXIT_INPUT,
            Failure::Infeasible(_) => EXIT_INFEASIBLE,
            Failure::Unstable(_) => EXIT_UNSTABLE,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Input(m) => write!(f, "input error: {m}"),
            Failure::Infeasible(m) => write!(f, "infeasible: {m}"),
            Failure::Unstable(m) => write!(f, "unstable: {m}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        let text = err.to_string();
        match err {
            Error::InfeasiblePopulation
            | Error::DegenerateTarget { .. }
            | Error::DegenerateDyad => Failure::Infeasible(text),
            Error::UnstableSimulation { .. } | Error::LinkageJammed { .. } => {
                Failure::Unstable(text)
            }
            _ => Failure::Input(text),
        }
    }
}

pub type CliResult<T> = Result<T, Failure>;

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path)
        .map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text)
        .map_err(|e| Failure::Input(format!("cannot parse {}: {e}", path.display())))
}

/// Output directory that files are written into.
pub struct OutDir(PathBuf);

impl OutDir {
    pub fn create(path: &Path) -> CliResult<Self> {
        fs::create_dir_all(path).map_err(|e| {
            Failure::Input(format!(
                "cannot create output directory {}: {e}",
                path.display()
            ))
        })?;
        Ok(Self(path.to_path_buf()))
    }

    pub fn write(&self, name: &str, contents: &str) -> CliResult<()> {
        let path = self.0.join(name);
        fs::write(&path, contents)
            .map_err(|e| Failure::Input(format!("cannot write {}: {e}", path.display())))
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value).expect("output types serialise");
        text.push('\n');
        self.write(name, &text)
    }

    pub fn remove_stale(&self, name: &str) {
        let _ = fs::remove_file(self.0.join(name));
    }
}

/// Record of how an output set was produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub inputs: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub overrides: BTreeMap<String, String>,
    pub out_dir: String,
    pub version: String,
}

impl RunManifest {
    pub fn new(command: &str, out_dir: &Path) -> Self {
        Self {
            command: command.to_string(),
            inputs: BTreeMap::new(),
            seed: None,
            overrides: BTreeMap::new(),
            out_dir: out_dir.display().to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn input(mut self, role: &str, path: &Path) -> Self {
        self.inputs
            .insert(role.to_string(), path.display().to_string());
        self
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.overrides.insert(key.to_string(), value.to_string());
    }
}
