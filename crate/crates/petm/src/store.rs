//! PE-TM files: one JSON record per line.

use std::collections::HashSet;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use petm_core::record::{validate_record, TripleRecord, Violation};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {source}")]
    Parse { path: PathBuf, line: usize, source: serde_json::Error },
    #[error("{path}:{line}: duplicate id `{id}`")]
    DuplicateId { path: PathBuf, line: usize, id: String },
    #[error("record `{id}` is invalid: {violations:?}")]
    Invalid { id: String, violations: Vec<Violation> },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

/// Violations that make a record unusable for marking-aware code.
pub fn structural_violations(record: &TripleRecord) -> Vec<Violation> {
    validate_record(record).into_iter().filter(Violation::is_structural).collect()
}

pub fn to_line(record: &TripleRecord) -> String {
    serde_json::to_string(record).expect("records always serialize")
}

/// Reads a store; blank lines are ignored and ids must be unique.
pub fn read_records(path: &Path) -> Result<Vec<TripleRecord>, StoreError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TripleRecord =
            serde_json::from_str(&line).map_err(|source| StoreError::Parse { path: path.to_path_buf(), line: i + 1, source })?;
        if !seen.insert(record.id.clone()) {
            return Err(StoreError::DuplicateId { path: path.to_path_buf(), line: i + 1, id: record.id });
        }
        records.push(record);
    }
    Ok(records)
}

fn check_all(records: &[TripleRecord]) -> Result<(), StoreError> {
    for r in records {
        let violations = structural_violations(r);
        if !violations.is_empty() {
            return Err(StoreError::Invalid { id: r.id.clone(), violations });
        }
    }
    Ok(())
}

/// Writes the whole store through a temporary file and a rename.
pub fn write_records(path: &Path, records: &[TripleRecord]) -> Result<(), StoreError> {
    check_all(records)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let tmp = path.with_extension("jsonl.tmp");
    {
        let mut out = BufWriter::new(File::create(&tmp).map_err(io_err(&tmp))?);
        for r in records {
            writeln!(out, "{}", to_line(r)).map_err(io_err(&tmp))?;
        }
        out.flush().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// Appends one record. Callers serialize appends to the same file.
pub fn append_record(path: &Path, record: &TripleRecord) -> Result<(), StoreError> {
    check_all(std::slice::from_ref(record))?;
    let mut file = OpenOptions::new().create(true).append(true).open(path).map_err(io_err(path))?;
    writeln!(file, "{}", to_line(record)).map_err(io_err(path))
}
