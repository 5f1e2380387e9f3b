//! Snapshot files: a JSON header sidecar plus a raw little-endian f64
//! array, variables outermost and x fastest.
//!
//! Headers hold no timings, so two runs of the same config produce
//! byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use haloforge::GlobalField;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const FORMAT: &str = "haloforge-snapshot";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub format: String,
    pub version: u32,
    pub model: String,
    pub n: [usize; 3],
    pub step: u64,
    pub time: f64,
    pub variables: Vec<String>,
    pub byte_order: String,
    pub dtype: String,
    pub layout: String,
    pub data_file: String,
    pub config: String,
}

/// Stem shared by the header and data file of step `step`.
pub fn stem(step: u64) -> String {
    format!("snapshot_{step:06}")
}

/// Writes `<stem>.json` and `<stem>.bin` into `dir`; returns the header path.
pub fn write(dir: &Path, field: &GlobalField, step: u64, time: f64, config: &str) -> Result<PathBuf, CliError> {
    let stem = stem(step);
    let data_file = format!("{stem}.bin");
    let header = SnapshotHeader {
        format: FORMAT.into(),
        version: VERSION,
        model: field.model.name().into(),
        n: field.n,
        step,
        time,
        variables: field.model.var_names().iter().map(|s| s.to_string()).collect(),
        byte_order: "little".into(),
        dtype: "f64".into(),
        layout: "var,z,y,x".into(),
        data_file: data_file.clone(),
        config: config.into(),
    };
    let bin = dir.join(&data_file);
    fs::write(&bin, field.to_le_bytes()).map_err(CliError::io(&bin))?;
    let json = dir.join(format!("{stem}.json"));
    let mut text = serde_json::to_string_pretty(&header)?;
    text.push('\n');
    fs::write(&json, text).map_err(CliError::io(&json))?;
    Ok(json)
}

/// Reads a header and its data array back.
pub fn read(header_path: &Path) -> Result<(SnapshotHeader, Vec<f64>), CliError> {
    let text = fs::read_to_string(header_path).map_err(CliError::io(header_path))?;
    let header: SnapshotHeader = serde_json::from_str(&text)?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(CliError::Runtime(format!(
            "{}: unsupported snapshot format {} v{}",
            header_path.display(),
            header.format,
            header.version
        )));
    }
    let bin = header_path.with_file_name(&header.data_file);
    let bytes = fs::read(&bin).map_err(CliError::io(&bin))?;
    let expected = header.variables.len() * header.n.iter().product::<usize>() * 8;
    if bytes.len() != expected {
        return Err(CliError::Runtime(format!(
            "{}: {} bytes, header implies {expected}",
            bin.display(),
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunks of eight")))
        .collect();
    Ok((header, data))
}
