//! Deterministic CSV text, checksums and atomic bundle writes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::PipelineError;

/// `v` rounded to 12 significant digits, printed in the shortest form that
/// reads back to the rounded value. Non-finite values print empty.
pub fn fmt_num(v: f64) -> String {
    if !v.is_finite() {
        return String::new();
    }
    let rounded: f64 = format!("{v:.11e}").parse().expect("formatted float parses");
    if rounded == 0.0 {
        return "0".to_string();
    }
    format!("{rounded}")
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// A CSV file under construction; the first line is a `#` comment naming the run.
#[derive(Clone, Debug)]
pub struct CsvText {
    buf: Vec<u8>,
}

impl CsvText {
    pub fn new(run_id: &str, header: &[&str]) -> Self {
        let mut t = CsvText { buf: format!("# creditline run={run_id}\n").into_bytes() };
        t.row(header.iter().map(|s| s.to_string()));
        t
    }

    pub fn row<S: AsRef<str>>(&mut self, fields: impl IntoIterator<Item = S>) {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let fields: Vec<String> = fields.into_iter().map(|s| s.as_ref().to_string()).collect();
        w.write_record(&fields).expect("writing to memory");
        self.buf.extend(w.into_inner().expect("in-memory writer"));
    }

    /// An extra `#` line, e.g. explaining an empty table.
    pub fn comment(&mut self, text: &str) {
        self.buf.extend(format!("# {text}\n").into_bytes());
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }
}

/// Named files of one output bundle, written together.
#[derive(Clone, Debug, Default)]
pub struct Bundle {
    pub files: BTreeMap<String, Vec<u8>>,
}

impl Bundle {
    pub fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.insert(name.into(), bytes);
    }

    pub fn checksums(&self) -> BTreeMap<String, String> {
        self.files.iter().map(|(n, b)| (n.clone(), sha256_hex(b))).collect()
    }

    /// Writes every file into `dir` through a staging directory, so a failed
    /// write leaves no partial bundle behind.
    pub fn write(&self, dir: &Path) -> Result<(), PipelineError> {
        fs::create_dir_all(dir).map_err(PipelineError::io(dir))?;
        let staging = dir.join(".staging");
        if staging.exists() {
            fs::remove_dir_all(&staging).map_err(PipelineError::io(&staging))?;
        }
        let res = self.stage_and_move(dir, &staging);
        if staging.exists() {
            let _ = fs::remove_dir_all(&staging);
        }
        res
    }

    fn stage_and_move(&self, dir: &Path, staging: &Path) -> Result<(), PipelineError> {
        fs::create_dir_all(staging).map_err(PipelineError::io(staging))?;
        for (name, bytes) in &self.files {
            let p = staging.join(name);
            fs::write(&p, bytes).map_err(PipelineError::io(&p))?;
        }
        let mut moved: Vec<PathBuf> = Vec::new();
        for name in self.files.keys() {
            let target = dir.join(name);
            if let Err(e) = fs::rename(staging.join(name), &target) {
                for m in moved {
                    let _ = fs::remove_file(m);
                }
                return Err(PipelineError::io(&target)(e));
            }
            moved.push(target);
        }
        Ok(())
    }
}

/// SHA-256 of every regular file in `dir`, by file name.
pub fn directory_checksums(dir: &Path) -> Result<BTreeMap<String, String>, PipelineError> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(PipelineError::io(dir))? {
        let entry = entry.map_err(PipelineError::io(dir))?;
        let path = entry.path();
        if path.is_file() {
            let bytes = fs::read(&path).map_err(PipelineError::io(&path))?;
            out.insert(entry.file_name().to_string_lossy().into_owned(), sha256_hex(&bytes));
        }
    }
    Ok(out)
}
