//! Bundled figure-reproduction configs.

use std::fs;
use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;
use crate::error::CliError;

pub struct Bundled {
    pub name: &'static str,
    pub description: &'static str,
    pub text: &'static str,
}

macro_rules! bundled {
    ($($name:literal => $desc:literal),* $(,)?) => {
        &[$(Bundled {
            name: $name,
            description: $desc,
            text: include_str!(concat!("../configs/", $name, ".toml")),
        }),*]
    };
}

pub const CATALOG: &[Bundled] = bundled! {
    "fig4a" => "total STM capacity vs feedback strength, weak (g=0.3) and projective (g=10) readout",
    "fig4b" => "memory accuracy C(tau) vs delay for projective, weak with feedback and weak without feedback",
    "fig5a" => "NARMA5 NMSE vs feedback strength, weak and projective readout",
    "fig5b" => "NARMA10 NMSE vs feedback strength, weak and projective readout",
    "fig5c" => "NARMA15 NMSE vs feedback strength, weak and projective readout",
    "fig5d" => "NARMA20 NMSE vs feedback strength, weak and projective readout",
    "fig6a" => "total capacity vs number of measurements for the three readout models",
    "fig6b" => "total capacity vs measurement strength at 1e8 measurements",
    "fig7" => "total capacity vs depolarizing rate for the three readout models",
    "fig8" => "time-averaged coherence vs feedback strength",
    "fig9" => "readout distributions and their 2-D projection for four models",
    "fig10" => "total capacity vs feedback strength for six fed-back observables",
    "feedback_verify" => "Pauli-coefficient identities of the feedback rotation on 1-3 qubits",
};

pub fn find(name: &str) -> Option<&'static Bundled> {
    CATALOG.iter().find(|b| b.name == name)
}

/// Where a bundled config lives in the source tree.
pub fn source_path(b: &Bundled) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(format!("{}.toml", b.name))
}

/// Loads a config file, or a bundled config when `target` names one and no
/// such file exists.
pub fn load(target: &str) -> Result<ExperimentConfig, CliError> {
    let path = Path::new(target);
    let text = if path.exists() {
        fs::read_to_string(path).map_err(|source| CliError::ReadConfig { path: path.to_path_buf(), source })?
    } else if let Some(b) = find(target) {
        b.text.to_string()
    } else if path.extension().is_some() || target.contains(std::path::MAIN_SEPARATOR) {
        return Err(CliError::ReadConfig {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
        });
    } else {
        return Err(CliError::UnknownExperiment(target.to_string()));
    };
    let mut cfg = ExperimentConfig::parse(&text)?;
    if cfg.name.is_empty() {
        cfg.name = path.file_stem().map_or_else(|| target.to_string(), |s| s.to_string_lossy().into_owned());
    }
    Ok(cfg)
}
