//! Bundled experiment configurations.

use super::config::ExperimentConfig;
use crate::error::{Error, Result};

const PRESETS: &[(&str, &str)] = &[
    ("synthetic-logreg", include_str!("../../presets/synthetic-logreg.toml")),
    ("synthetic-logreg-proxsgd", include_str!("../../presets/synthetic-logreg-proxsgd.toml")),
    ("synthetic-convnet", include_str!("../../presets/synthetic-convnet.toml")),
    ("mnist-logreg", include_str!("../../presets/mnist-logreg.toml")),
    ("mnist-logreg-proxsgd", include_str!("../../presets/mnist-logreg-proxsgd.toml")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

/// TOML source of a preset.
pub fn source(name: &str) -> Result<&'static str> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, s)| *s)
        .ok_or_else(|| Error::Config(format!("unknown preset `{name}`; known: {}", names().collect::<Vec<_>>().join(", "))))
}

pub fn load(name: &str) -> Result<ExperimentConfig> {
    ExperimentConfig::from_toml_str(source(name)?)
}
