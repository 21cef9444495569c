use std::path::Path;

use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{module}::{op}: {source}")]
    Core {
        module: &'static str,
        op: &'static str,
        #[source]
        source: lagrg::Error,
    },
    #[error("oracle check failed: {0}")]
    OracleMismatch(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Wraps a library error with the module and operation that raised it.
    pub fn core(module: &'static str, op: &'static str) -> impl FnOnce(lagrg::Error) -> Self {
        move |source| CliError::Core { module, op, source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ConfigInvalid(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Core { .. } => 4,
            CliError::OracleMismatch(_) => 5,
        }
    }

    pub fn to_json(&self) -> Value {
        let (kind, module, op) = match self {
            CliError::ConfigInvalid(_) => ("ConfigInvalid".to_string(), "config", "load"),
            CliError::Io { .. } => ("Io".to_string(), "io", "write"),
            CliError::Core { module, op, source } => (variant_name(source), *module, *op),
            CliError::OracleMismatch(_) => ("OracleMismatch".to_string(), "cli", "oracle_check"),
        };
        json!({
            "error": {
                "kind": kind,
                "module": module,
                "op": op,
                "message": self.to_string(),
            }
        })
    }
}

fn variant_name(e: &lagrg::Error) -> String {
    let dbg = format!("{e:?}");
    dbg.split(|c: char| !c.is_alphanumeric())
        .next()
        .unwrap_or("Error")
        .to_string()
}
