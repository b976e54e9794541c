use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde::Serialize;
use spg_core::dataio::MODEL_VERSION;

use crate::error::CliResult;

/// Record of one command run, written next to its outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub started_at: String,
    pub finished_at: String,
    pub version: String,
    pub model_version: u32,
    pub threads: usize,
    pub exit_code: i32,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn start(command: &str) -> Self {
        RunManifest {
            command: command.to_string(),
            args: std::env::args().skip(1).collect(),
            config: None,
            seed: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started_at: now(),
            finished_at: String::new(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            model_version: MODEL_VERSION,
            threads: rayon::current_num_threads(),
            exit_code: 0,
        }
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    pub fn finish(mut self, path: &Path, exit_code: i32) -> CliResult<()> {
        self.finished_at = now();
        self.exit_code = exit_code;
        let text = serde_json::to_string_pretty(&self)?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }
}
