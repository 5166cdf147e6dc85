use std::io::Write;

use serde::Serialize;
use serde_json::{json, Map, Value};

use super::config::{OutputFormat, RunConfig, HEADER_MARKER};
use crate::error::{Error, Result};

/// A table plus the configuration that produced it.
pub struct Report<'a, R> {
    pub command: &'a str,
    pub config: &'a RunConfig,
    pub rows: &'a [R],
    /// Scalars that summarize the whole table (fitted slopes, fold means).
    pub summary: Map<String, Value>,
}

fn csv_error(e: csv::Error) -> Error {
    Error::config(format!("csv output: {e}"))
}

impl<R: Serialize> Report<'_, R> {
    pub fn render(&self) -> Result<Vec<u8>> {
        match self.config.format {
            OutputFormat::Csv => self.render_csv(),
            OutputFormat::Json => self.render_json(),
        }
    }

    fn render_csv(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        write_header(&mut out, self.command, self.config)?;
        {
            let mut w = csv::Writer::from_writer(&mut out);
            for row in self.rows {
                w.serialize(row).map_err(csv_error)?;
            }
            w.flush().map_err(|e| Error::config(e.to_string()))?;
        }
        for (k, v) in &self.summary {
            writeln!(out, "# {k} = {v}").expect("writing to a Vec cannot fail");
        }
        Ok(out)
    }

    fn render_json(&self) -> Result<Vec<u8>> {
        let doc = json!({
            "metadata": {
                "command": self.command,
                "config": self.config,
                "summary": self.summary,
            },
            "rows": self.rows,
        });
        let mut out = serde_json::to_vec_pretty(&doc).map_err(|e| Error::config(e.to_string()))?;
        out.push(b'\n');
        Ok(out)
    }
}

/// The commented block that opens every CSV: a marker line naming the
/// command, then the effective configuration one `# key = value` per line.
pub fn write_header(out: &mut Vec<u8>, command: &str, cfg: &RunConfig) -> Result<()> {
    writeln!(out, "{HEADER_MARKER} {command}").expect("writing to a Vec cannot fail");
    for line in cfg.to_toml()?.lines().filter(|l| !l.trim().is_empty()) {
        writeln!(out, "# {line}").expect("writing to a Vec cannot fail");
    }
    Ok(())
}

/// Writes to `cfg.out`, or to stdout when no path is configured.
pub fn emit(cfg: &RunConfig, bytes: &[u8]) -> Result<()> {
    match &cfg.out {
        Some(path) => std::fs::write(path, bytes).map_err(|e| Error::io(path, e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes).and_then(|_| stdout.flush()).map_err(|e| Error::io("<stdout>", e))
        }
    }
}
