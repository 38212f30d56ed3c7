//! On-disk formats: JSON documents for geometry and grids, and lead fields as
//! a flat little-endian `f64` binary with a JSON sidecar header.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, Vector3};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::forward::{GridSampling, HeadGeometry};
use crate::model::{ColumnLayout, LeadField};

pub const GEOMETRY_FILE: &str = "geometry.json";
pub const INVERSE_GRID_FILE: &str = "inverse_grid.json";
pub const TRUE_GRID_FILE: &str = "true_grid.json";
pub const LEAD_FIELD_FILE: &str = "lead_field.bin";
pub const LEAD_FIELD_HEADER_FILE: &str = "lead_field.json";

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Sidecar describing `lead_field.bin`. `provenance` carries whatever the
/// writer wants to record (config, seeds).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeadFieldHeader {
    pub rows: usize,
    pub cols: usize,
    pub layout: ColumnLayout,
    /// Always `"f64_le_row_major"`.
    pub encoding: String,
    #[serde(default)]
    pub provenance: serde_json::Value,
}

pub const LEAD_FIELD_ENCODING: &str = "f64_le_row_major";

pub fn lead_field_bytes(lf: &LeadField) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 * lf.rows() * lf.cols());
    for i in 0..lf.rows() {
        for j in 0..lf.cols() {
            out.extend_from_slice(&lf.matrix[(i, j)].to_le_bytes());
        }
    }
    out
}

pub fn lead_field_from_bytes(header: &LeadFieldHeader, bytes: &[u8]) -> Result<LeadField> {
    if header.encoding != LEAD_FIELD_ENCODING {
        return invalid(format!("unsupported lead field encoding {:?}", header.encoding));
    }
    let expected = 8 * header.rows * header.cols;
    if bytes.len() != expected {
        return invalid(format!("lead field binary has {} bytes, header implies {expected}", bytes.len()));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    LeadField::new(DMatrix::from_row_slice(header.rows, header.cols, &values), header.layout)
}

/// Writes `lf` as `<dir>/lead_field.bin` plus its header.
pub fn write_lead_field(dir: impl AsRef<Path>, lf: &LeadField, provenance: serde_json::Value) -> Result<LeadFieldHeader> {
    let dir = dir.as_ref();
    let header = LeadFieldHeader {
        rows: lf.rows(),
        cols: lf.cols(),
        layout: lf.layout,
        encoding: LEAD_FIELD_ENCODING.to_string(),
        provenance,
    };
    fs::write(dir.join(LEAD_FIELD_FILE), lead_field_bytes(lf))?;
    write_json(dir.join(LEAD_FIELD_HEADER_FILE), &header)?;
    Ok(header)
}

pub fn read_lead_field(dir: impl AsRef<Path>) -> Result<(LeadField, LeadFieldHeader)> {
    let dir = dir.as_ref();
    let header: LeadFieldHeader = read_json(dir.join(LEAD_FIELD_HEADER_FILE))?;
    let bytes = fs::read(dir.join(LEAD_FIELD_FILE))?;
    Ok((lead_field_from_bytes(&header, &bytes)?, header))
}

/// Montage and head parameters; `source_positions` is left empty here and
/// filled from a grid file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryFile {
    pub head: HeadGeometry,
    pub provenance: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFile {
    /// Positions in mm.
    pub positions: Vec<Vector3<f64>>,
    pub sampling: GridSampling,
    pub provenance: serde_json::Value,
}
