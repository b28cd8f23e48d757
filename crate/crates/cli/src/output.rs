//! Output directory bookkeeping and the run manifest.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{runtime, CliResult};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct Entry {
    /// Relative to the output directory.
    pub path: String,
    pub description: String,
}

#[derive(Debug, Clone, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config: &'a serde_json::Value,
    summary: &'a serde_json::Value,
    files: &'a [Entry],
}

/// Every file written through this type is listed in the manifest.
pub struct OutputDir {
    root: PathBuf,
    files: Vec<Entry>,
}

impl OutputDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(root)
            .map_err(|e| runtime(format!("cannot create output directory {}: {e}", root.display())))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    /// Registers `rel` and returns its absolute path; parent directories are created.
    pub fn path(&mut self, rel: &str, description: &str) -> CliResult<PathBuf> {
        let p = self.root.join(rel);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent)?;
        }
        self.files.push(Entry {
            path: rel.to_string(),
            description: description.to_string(),
        });
        Ok(p)
    }

    pub fn writer(&mut self, rel: &str, description: &str) -> CliResult<BufWriter<File>> {
        let p = self.path(rel, description)?;
        let f = File::create(&p).map_err(|e| runtime(format!("{}: {e}", p.display())))?;
        Ok(BufWriter::new(f))
    }

    pub fn write_with(
        &mut self,
        rel: &str,
        description: &str,
        body: impl FnOnce(&mut BufWriter<File>) -> tangent_core::Result<()>,
    ) -> CliResult<()> {
        let mut w = self.writer(rel, description)?;
        body(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, description: &str, value: &T) -> CliResult<()> {
        let mut w = self.writer(rel, description)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_text(&mut self, rel: &str, description: &str, text: &str) -> CliResult<()> {
        let p = self.path(rel, description)?;
        std::fs::write(&p, text).map_err(|e| runtime(format!("{}: {e}", p.display())))?;
        Ok(())
    }

    /// Writes `manifest.json` listing the configuration and every file.
    pub fn finish(self, command: &str, config: &serde_json::Value, summary: &serde_json::Value) -> CliResult<PathBuf> {
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            config,
            summary,
            files: &self.files,
        };
        let p = self.root.join(MANIFEST);
        let mut w = BufWriter::new(File::create(&p)?);
        serde_json::to_writer_pretty(&mut w, &manifest)?;
        writeln!(w)?;
        w.flush()?;
        Ok(p)
    }
}
