//! JSON-lines files whose first line is a header object carrying `schema`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub fn parse<H: DeserializeOwned, R: DeserializeOwned>(path: &Path, text: &str, schema: &str) -> Result<(H, Vec<R>)> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((_, first)) = lines.next() else {
        return Err(Error::format(path, "empty file, expected a header line"));
    };
    let head: serde_json::Value =
        serde_json::from_str(first).map_err(|e| Error::Parse { path: path.into(), line: 1, message: e.to_string() })?;
    match head.get("schema").and_then(|s| s.as_str()) {
        Some(s) if s == schema => {}
        Some(s) => return Err(Error::format(path, format!("schema {s:?}, expected {schema:?}"))),
        None => return Err(Error::format(path, format!("first line lacks a \"schema\" field (expected {schema:?})"))),
    }
    let header = serde_json::from_value(head).map_err(|e| Error::Parse { path: path.into(), line: 1, message: e.to_string() })?;
    let records = lines
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Parse { path: path.into(), line: i + 1, message: e.to_string() }))
        .collect::<Result<Vec<R>>>()?;
    Ok((header, records))
}

pub fn read<H: DeserializeOwned, R: DeserializeOwned>(path: &Path, schema: &str) -> Result<(H, Vec<R>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(path, &text, schema)
}

pub fn to_string<H: Serialize, R: Serialize>(header: &H, records: &[R]) -> String {
    let mut out = serde_json::to_string(header).expect("header serializes");
    out.push('\n');
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn write<H: Serialize, R: Serialize>(path: &Path, header: &H, records: &[R]) -> Result<()> {
    write_bytes(path, to_string(header, records).as_bytes())
}

/// Writes through a buffered handle, creating parent directories.
pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(bytes).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    write_bytes(path, s.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse { path: path.into(), line: e.line(), message: e.to_string() })
}
