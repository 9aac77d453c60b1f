//! Command implementations behind the `phaselab` binary. Every command
//! returns a [`Report`] that serializes to a JSON document and carries the
//! process exit code.

pub mod commands;
pub mod config;
pub mod selfcheck;

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use config::RunConfig;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_GATE: i32 = 2;
pub const EXIT_INPUT: i32 = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CliError {
    /// Malformed or invalid input; exit code 3.
    #[error("{0}")]
    Input(String),
    /// A numerical gate failed; exit code 2.
    #[error("{0}")]
    Gate(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Gate(_) => EXIT_GATE,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Input(_) => "input",
            CliError::Gate(_) => "gate",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub config: RunConfig,
    pub outcome: Result<Value, CliError>,
    /// Whether every gate of a successful run passed.
    pub pass: bool,
}

impl Report {
    pub fn finished(config: RunConfig, result: impl Serialize, pass: bool) -> Self {
        Self {
            config,
            outcome: Ok(serde_json::to_value(result).expect("report body serializes")),
            pass,
        }
    }

    pub fn failed(config: RunConfig, err: CliError) -> Self {
        Self {
            config,
            outcome: Err(err),
            pass: false,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match &self.outcome {
            Ok(_) if self.pass => EXIT_PASS,
            Ok(_) => EXIT_GATE,
            Err(e) => e.exit_code(),
        }
    }

    pub fn result(&self) -> Option<&Value> {
        self.outcome.as_ref().ok()
    }

    /// JSON document; `timestamp` is seconds since the Unix epoch.
    pub fn to_json(&self, timestamp: Option<u64>) -> String {
        let mut doc = json!({
            "command": self.config.command,
            "config": self.config,
            "pass": self.pass,
            "exit_code": self.exit_code(),
        });
        match &self.outcome {
            Ok(v) => doc["result"] = v.clone(),
            Err(e) => doc["error"] = json!({ "kind": e.kind(), "message": e.to_string() }),
        }
        if let Some(t) = timestamp {
            doc["timestamp_unix"] = json!(t);
        }
        serde_json::to_string_pretty(&doc).expect("report serializes") + "\n"
    }
}
