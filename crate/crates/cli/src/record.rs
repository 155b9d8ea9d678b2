//! Machine-readable run records: one JSON document per invocation capturing
//! the command, arguments, seeds, format versions, and results.

use std::path::Path;
use std::time::Instant;

use anyhow::Result;
use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Serialize)]
pub struct RunRecord {
    pub command: String,
    pub argv: Vec<String>,
    pub tool_version: String,
    pub container_format: &'static str,
    pub checkpoint_format: u32,
    pub runtime_seconds: f64,
    pub results: Value,
}

pub struct RunTimer {
    command: String,
    started: Instant,
}

impl RunTimer {
    pub fn start(command: &str) -> Self {
        RunTimer {
            command: command.to_string(),
            started: Instant::now(),
        }
    }

    pub fn record(&self, results: Value) -> RunRecord {
        RunRecord {
            command: self.command.clone(),
            argv: std::env::args().collect(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            container_format: "STNS",
            checkpoint_format: vsci_net::checkpoint::VERSION,
            runtime_seconds: self.started.elapsed().as_secs_f64(),
            results,
        }
    }
}

pub fn write_run_record(path: &Path, record: &RunRecord) -> Result<()> {
    let json = serde_json::to_vec_pretty(record)?;
    vsci_tensor::stns::atomic_write(path, &json)?;
    Ok(())
}

/// Default sidecar location for a subcommand's primary output.
pub fn default_record_path(out: &Path) -> std::path::PathBuf {
    let mut os = out.as_os_str().to_owned();
    os.push(".run.json");
    os.into()
}
