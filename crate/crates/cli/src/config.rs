//! Smooth-specification file.
//!
//! ```toml
//! default_k = 10
//!
//! [smooth.age]
//! k = 6
//! knots = "uniform"
//!
//! [smooth.dose]
//! kind = "linear"
//! ```
//!
//! Predictors without an entry get a cubic smooth with `default_k` bases.

use std::collections::BTreeMap;
use std::path::Path;

use bham::{KnotRule, SmoothSpec};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermKind {
    #[default]
    Cubic,
    Linear,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermConfig {
    #[serde(default)]
    pub kind: TermKind,
    pub k: Option<usize>,
    pub knots: Option<KnotRule>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothConfig {
    pub default_k: Option<usize>,
    #[serde(default)]
    pub smooth: BTreeMap<String, TermConfig>,
}

impl SmoothConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    /// One spec per predictor, in predictor order. A `default_k` in the file
    /// wins over the command-line fallback.
    pub fn specs(
        &self,
        predictors: &[String],
        fallback_k: usize,
    ) -> Result<Vec<SmoothSpec>, CliError> {
        if let Some(unknown) = self.smooth.keys().find(|k| !predictors.contains(k)) {
            return Err(CliError::Usage(format!(
                "smooth config names unknown predictor `{unknown}`"
            )));
        }
        let default_k = self.default_k.unwrap_or(fallback_k);
        let specs: Vec<SmoothSpec> = predictors
            .iter()
            .map(|name| match self.smooth.get(name) {
                Some(t) if t.kind == TermKind::Linear => SmoothSpec::linear(name.clone()),
                Some(t) => SmoothSpec::cubic(name.clone(), t.k.unwrap_or(default_k))
                    .with_knot_rule(t.knots.unwrap_or_default()),
                None => SmoothSpec::cubic(name.clone(), default_k),
            })
            .collect();
        for s in &specs {
            s.validate()?;
        }
        Ok(specs)
    }
}
