use std::path::Path;
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel_expansion::{EigenSystem, InputMeasure, KernelSpec, Sampling};

/// Generating eigensystem of a synthetic study.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum EigenSpec {
    /// First-order spline kernel under the uniform measure on `[0, 1]`.
    #[default]
    Spline,
    /// `lambda_e = exp(-rate e)` on the spline sinusoids.
    Exponential { rate: f64 },
    /// Numerical eigensystem of `kernel` under `measure` from `q` draws.
    Numerical {
        kernel: KernelSpec,
        measure: InputMeasure,
        q: usize,
        #[serde(default)]
        sampling: Sampling,
    },
}

impl EigenSpec {
    /// Eigensystem holding `e` pairs (at most `q` for numerical systems)
    /// together with its input measure.
    pub fn build(&self, e: usize, seed: u64) -> Result<(Arc<EigenSystem>, InputMeasure)> {
        Ok(match self {
            EigenSpec::Spline => (
                Arc::new(EigenSystem::spline(e)?),
                InputMeasure::unit_interval(),
            ),
            EigenSpec::Exponential { rate } => (
                Arc::new(EigenSystem::exponential(e, *rate)?),
                InputMeasure::unit_interval(),
            ),
            EigenSpec::Numerical {
                kernel,
                measure,
                q,
                sampling,
            } => (
                Arc::new(EigenSystem::numerical(
                    kernel,
                    measure,
                    *q,
                    e.min(*q).max(1),
                    seed,
                    *sampling,
                )?),
                measure.clone(),
            ),
        })
    }

    /// Largest truth truncation this family supports.
    pub fn max_truth(&self, wanted: usize) -> usize {
        match self {
            EigenSpec::Numerical { q, .. } => wanted.min(*q),
            _ => wanted,
        }
    }
}

/// Read a JSON or TOML config; `.toml` files are parsed as TOML, anything
/// else as JSON.
pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, path.extension().is_some_and(|e| e == "toml"))
}

pub fn parse_config<T: DeserializeOwned>(text: &str, toml_syntax: bool) -> Result<T> {
    if toml_syntax {
        toml::from_str(text).map_err(|e| {
            let row = e.span().map_or(0, |s| {
                text[..s.start.min(text.len())].matches('\n').count() + 1
            });
            Error::Parse {
                row,
                message: e.message().to_string(),
            }
        })
    } else {
        Ok(serde_json::from_str(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Deserialize, PartialEq)]
    struct Demo {
        #[serde(default)]
        eigen: EigenSpec,
        m: usize,
    }

    #[test]
    fn json_and_toml() {
        let j: Demo = parse_config(
            r#"{"eigen":{"family":"exponential","rate":0.5},"m":3}"#,
            false,
        )
        .unwrap();
        assert_eq!(j.eigen, EigenSpec::Exponential { rate: 0.5 });
        let t: Demo = parse_config("m = 4\n", true).unwrap();
        assert_eq!(
            t,
            Demo {
                eigen: EigenSpec::Spline,
                m: 4
            }
        );
        assert!(matches!(
            parse_config::<Demo>("m = 4\nm = \"x\"\n", true),
            Err(Error::Parse { row: 2, .. })
        ));
    }
}
