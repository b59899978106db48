//! Result records and file writers.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{Command, Model};
use crate::CliError;

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// One output record: the input it answers, its payload, and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord<I, P> {
    pub toolkit_version: String,
    pub config_hash: String,
    pub command: Command,
    pub model: Model,
    pub input: I,
    pub payload: P,
}

impl<I, P> ResultRecord<I, P> {
    pub fn new(ctx: &Ctx, input: I, payload: P) -> Self {
        Self {
            toolkit_version: TOOLKIT_VERSION.to_string(),
            config_hash: ctx.hash.clone(),
            command: ctx.command,
            model: ctx.model,
            input,
            payload,
        }
    }
}

/// Shared state for one command invocation.
#[derive(Debug, Clone)]
pub struct Ctx {
    pub hash: String,
    pub command: Command,
    pub model: Model,
    pub out_dir: PathBuf,
}

impl Ctx {
    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_text(name, &text)
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<PathBuf, CliError> {
        let p = self.path(name);
        fs::write(&p, text)?;
        log::info!("wrote {}", p.display());
        Ok(p)
    }

    /// Writes `rows` under `header`, prefixing every row with the config hash.
    pub fn write_csv(
        &self,
        name: &str,
        header: &[&str],
        rows: &[Vec<String>],
    ) -> Result<PathBuf, CliError> {
        let p = self.path(name);
        let mut w = csv::Writer::from_path(&p)?;
        let mut h = vec!["config_hash"];
        h.extend_from_slice(header);
        w.write_record(&h)?;
        for row in rows {
            let mut r = vec![self.hash.as_str()];
            r.extend(row.iter().map(String::as_str));
            w.write_record(&r)?;
        }
        w.flush()?;
        log::info!("wrote {}", p.display());
        Ok(p)
    }
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    Ok(())
}

/// Shortest round-trip scientific notation.
pub fn num(x: f64) -> String {
    format!("{x:e}")
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}
