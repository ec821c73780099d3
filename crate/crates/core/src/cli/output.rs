//! File writers shared by the subcommands.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Round-trippable float text (17 significant digits).
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

pub fn matrix_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::with_capacity(m.len() * 24);
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Collects the files of one run so the manifest can list their digests.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    files: Vec<OutputFile>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.root.join(name);
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        self.files.push(OutputFile {
            path: name.to_string(),
            sha256: hex::encode(Sha256::digest(contents.as_bytes())),
            bytes: contents.len() as u64,
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, &text)
    }

    pub fn files(&self) -> &[OutputFile] {
        &self.files
    }

    /// Writes via a temporary file and a rename so a manifest is either
    /// absent or complete.
    pub fn write_atomic(&self, name: &str, contents: &str) -> Result<()> {
        let tmp = self.root.join(format!(".{name}.tmp"));
        let path = self.root.join(name);
        fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Appends one CSV record.
pub fn push_record(out: &mut String, fields: &[String]) {
    let _ = writeln!(out, "{}", fields.join(","));
}
