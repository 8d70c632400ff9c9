//! Output directory bookkeeping and the per-run manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::{CliError, ExperimentConfig};

/// Bumped whenever a CSV column set or JSON field set changes.
pub const SCHEMA_VERSION: u32 = 1;

pub struct OutputDir {
    dir: PathBuf,
    files: Vec<String>,
    started: Instant,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new(), started: Instant::now() })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    pub fn csv(&mut self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
        let path = self.path(name);
        let to_io = |e: csv::Error| CliError::Io { path: path.clone(), source: e.into() };
        let mut w = csv::Writer::from_path(&path).map_err(to_io)?;
        w.write_record(header).map_err(to_io)?;
        for r in rows {
            w.write_record(r).map_err(to_io)?;
        }
        w.flush().map_err(|e| CliError::Io { path: path.clone(), source: e })
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let path = self.path(name);
        let mut text = serde_json::to_string_pretty(value).expect("serializable output");
        text.push('\n');
        std::fs::write(&path, text).map_err(io_err(&path))
    }

    pub fn bytes(&mut self, name: &str, data: &[u8]) -> Result<(), CliError> {
        let path = self.path(name);
        std::fs::write(&path, data).map_err(io_err(&path))
    }

    /// Writes `manifest.json` listing every output written so far. The
    /// elapsed time is the last field, the only one that varies between
    /// identical runs.
    pub fn finish(mut self, subcommand: &str, cfg: &ExperimentConfig, config_text: &str) -> Result<(), CliError> {
        #[derive(Serialize)]
        struct Manifest<'a> {
            schema_version: u32,
            tool: &'static str,
            version: &'static str,
            subcommand: &'a str,
            seed: &'a str,
            master_seed: u64,
            config_text: &'a str,
            config: &'a ExperimentConfig,
            outputs: &'a [String],
            wall_time_s: f64,
        }
        let files = std::mem::take(&mut self.files);
        let m = Manifest {
            schema_version: SCHEMA_VERSION,
            tool: "critperc",
            version: env!("CARGO_PKG_VERSION"),
            subcommand,
            seed: &cfg.seed,
            master_seed: cfg.master_seed,
            config_text,
            config: cfg,
            outputs: &files,
            wall_time_s: self.started.elapsed().as_secs_f64(),
        };
        self.json("manifest.json", &m)
    }
}

pub fn cells<I: IntoIterator<Item = T>, T: ToString>(xs: I) -> Vec<String> {
    xs.into_iter().map(|x| x.to_string()).collect()
}

/// First `n` entries, zero-padded.
pub fn top_n<T: Copy + Default>(xs: &[T], n: usize) -> Vec<T> {
    (0..n).map(|i| xs.get(i).copied().unwrap_or_default()).collect()
}
