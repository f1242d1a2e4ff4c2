use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::config::{Manifest, RunConfig, MANIFEST_VERSION};
use crate::error::CliError;

/// Output directory of one run. Every file it writes starts with the config
/// hash and the units of its quantities.
pub struct Output {
    dir: PathBuf,
    hash: String,
    written: Vec<String>,
}

fn units_map(units: &[(&str, &str)]) -> Map<String, Value> {
    units
        .iter()
        .map(|(k, v)| (k.to_string(), Value::from(*v)))
        .collect()
}

impl Output {
    pub fn create(dir: &Path, hash: String) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(Output {
            dir: dir.to_path_buf(),
            hash,
            written: Vec::new(),
        })
    }

    pub fn json<T: Serialize>(
        &mut self,
        name: &str,
        units: &[(&str, &str)],
        body: &T,
    ) -> Result<(), CliError> {
        let doc = json!({
            "header": { "config_hash": self.hash, "units": units_map(units) },
            "result": body,
        });
        let mut f = BufWriter::new(File::create(self.dir.join(name))?);
        serde_json::to_writer_pretty(&mut f, &doc)?;
        writeln!(f)?;
        f.flush()?;
        self.written.push(name.to_string());
        Ok(())
    }

    /// CSV preceded by `#` comment lines with the hash and per-column units.
    pub fn csv<I>(
        &mut self,
        name: &str,
        columns: &[(String, String)],
        rows: I,
    ) -> Result<(), CliError>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let mut f = BufWriter::new(File::create(self.dir.join(name))?);
        writeln!(f, "# config_hash: {}", self.hash)?;
        let units: Vec<String> = columns.iter().map(|(c, u)| format!("{c} [{u}]")).collect();
        writeln!(f, "# units: {}", units.join(", "))?;
        let mut w = csv::Writer::from_writer(f);
        w.write_record(columns.iter().map(|(c, _)| c))?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush()?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn finish(self, command: &str, config: &RunConfig) -> Result<PathBuf, CliError> {
        let manifest = Manifest {
            manifest_version: MANIFEST_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_hash: self.hash.clone(),
            config: config.clone(),
            outputs: self.written,
        };
        let path = self.dir.join("manifest.json");
        let mut f = BufWriter::new(File::create(&path)?);
        serde_json::to_writer_pretty(&mut f, &manifest)?;
        writeln!(f)?;
        f.flush()?;
        Ok(path)
    }
}

pub fn cols(items: &[(&str, &str)]) -> Vec<(String, String)> {
    items
        .iter()
        .map(|(c, u)| (c.to_string(), u.to_string()))
        .collect()
}

pub fn num(v: f64) -> String {
    format!("{v:?}")
}
