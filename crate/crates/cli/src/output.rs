//! Run directories and CSV artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::error::CliError;

pub struct RunDir {
    path: PathBuf,
}

impl RunDir {
    /// Creates `<root>/<command>-<timestamp>-<seed>`, adding a numeric suffix
    /// if that name is taken.
    pub fn create(root: &Path, command: &str, seed: u64) -> Result<Self, CliError> {
        let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
        let base = format!("{command}-{stamp}-{seed}");
        fs::create_dir_all(root).map_err(|e| CliError::User(format!("cannot create {}: {e}", root.display())))?;
        for k in 0.. {
            let name = if k == 0 { base.clone() } else { format!("{base}-{k}") };
            let path = root.join(name);
            match fs::create_dir(&path) {
                Ok(()) => return Ok(Self { path }),
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
                Err(e) => return Err(CliError::User(format!("cannot create {}: {e}", path.display()))),
            }
        }
        unreachable!()
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn write_config(&self, cfg: &RunConfig) -> Result<(), CliError> {
        fs::write(self.file("run.cfg"), cfg.to_text())?;
        Ok(())
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<(), CliError> {
        fs::write(self.file(name), text)?;
        Ok(())
    }

    pub fn csv(&self, name: &str, header: &[&str]) -> Result<CsvOut, CliError> {
        let mut w = csv::Writer::from_path(self.file(name))?;
        w.write_record(header)?;
        Ok(CsvOut { w })
    }
}

/// CSV writer that formats floats with Rust's shortest round-trip form.
pub struct CsvOut {
    w: csv::Writer<fs::File>,
}

pub enum Cell<'a> {
    Num(f64),
    Int(usize),
    Text(&'a str),
}

impl From<f64> for Cell<'_> {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell<'_> {
    fn from(v: usize) -> Self {
        Cell::Int(v)
    }
}

impl<'a> From<&'a str> for Cell<'a> {
    fn from(v: &'a str) -> Self {
        Cell::Text(v)
    }
}

impl CsvOut {
    pub fn row(&mut self, cells: &[Cell]) -> Result<(), CliError> {
        let fields: Vec<String> = cells
            .iter()
            .map(|c| match c {
                Cell::Num(v) => v.to_string(),
                Cell::Int(v) => v.to_string(),
                Cell::Text(s) => s.to_string(),
            })
            .collect();
        self.w.write_record(&fields)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.w.flush()?;
        Ok(())
    }
}

/// Convenience: `row!(out, a, b, c)`.
#[macro_export]
macro_rules! row {
    ($out:expr, $($cell:expr),+ $(,)?) => {
        $out.row(&[$($crate::output::Cell::from($cell)),+])
    };
}
