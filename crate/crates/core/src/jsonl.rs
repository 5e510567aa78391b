//! JSON Lines files: one value per line, UTF-8.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum JsonlError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Serializes `items`, one per line, each line terminated by `\n`.
pub fn to_jsonl_string<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("plain data serializes"));
        out.push('\n');
    }
    out
}

/// Parses JSON Lines text. Whitespace-only lines are skipped; line numbers in
/// errors are 1-based.
pub fn from_jsonl_str<T: DeserializeOwned>(text: &str) -> Result<Vec<T>, JsonlError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(line).map_err(|e| JsonlError::Parse { line: i + 1, message: e.to_string() })?;
        out.push(value);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(items: &[T], path: impl AsRef<Path>) -> Result<(), JsonlError> {
    let path = path.as_ref();
    let io = |source| JsonlError::Io { path: path.display().to_string(), source };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| io(e.into()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>, JsonlError> {
    let path = path.as_ref();
    let io = |source| JsonlError::Io { path: path.display().to_string(), source };
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| JsonlError::Parse { line: i + 1, message: e.to_string() })?;
        out.push(value);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_the_bad_line() {
        let err = from_jsonl_str::<serde_json::Value>("{\"a\":1}\n{\"a\":2}\nnot json\n").unwrap_err();
        assert!(matches!(err, JsonlError::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn empty_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        write_jsonl::<u32>(&[], &path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"");
        assert!(read_jsonl::<u32>(&path).unwrap().is_empty());
    }

    #[test]
    fn string_and_file_forms_agree() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.jsonl");
        let items = vec![vec![1, 2], vec![], vec![3]];
        write_jsonl(&items, &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), to_jsonl_string(&items));
        assert_eq!(read_jsonl::<Vec<i32>>(&path).unwrap(), items);
    }
}
