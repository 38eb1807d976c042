//! Output artifacts: CSV or JSON, each carrying a run manifest.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::Context;
use clap::ValueEnum;
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub params: Value,
    pub tool_version: String,
    pub seed: u64,
    pub wall_time_s: f64,
}

/// A table plus its structured form. CSV gets the table, JSON gets `data`.
///
/// `schema` names the column layout and is bumped whenever columns change.
pub struct Artifact {
    pub schema: &'static str,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    pub data: Value,
}

impl Artifact {
    pub fn render(&self, format: Format, manifest: &RunManifest) -> anyhow::Result<String> {
        match format {
            Format::Json => {
                let doc = json!({
                    "schema": self.schema,
                    "manifest": manifest,
                    "data": self.data,
                });
                Ok(serde_json::to_string_pretty(&doc)? + "\n")
            }
            Format::Csv => {
                let mut out = String::new();
                out.push_str(&format!("# schema: {}\n", self.schema));
                out.push_str(&format!("# manifest: {}\n", serde_json::to_string(manifest)?));
                out.push_str(&self.columns.join(","));
                out.push('\n');
                for row in &self.rows {
                    out.push_str(&row.join(","));
                    out.push('\n');
                }
                Ok(out)
            }
        }
    }
}

pub fn emit(text: &str, out: Option<&Path>) -> anyhow::Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

/// Shortest round-trip decimal form; locale independent.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn nats_to_bits(x: f64) -> f64 {
    x / std::f64::consts::LN_2
}
