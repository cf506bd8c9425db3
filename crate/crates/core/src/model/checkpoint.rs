//! Checkpoint files: one JSON header line followed by the raw little-endian
//! `f64` entity matrix and then the relation matrix.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EmbeddingTable, Matrix, ModelKind};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "fedkg-checkpoint-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub model_kind: ModelKind,
    pub d_e: usize,
    pub d_r: usize,
    pub num_entities: usize,
    pub num_relations: usize,
    pub seed: u64,
}

pub fn write_checkpoint(path: &Path, table: &EmbeddingTable, seed: u64) -> Result<()> {
    let header = CheckpointHeader {
        format: CHECKPOINT_FORMAT.into(),
        model_kind: table.kind,
        d_e: table.entity_width(),
        d_r: table.relation_width(),
        num_entities: table.num_entities(),
        num_relations: table.num_relations(),
        seed,
    };
    let mut bytes = serde_json::to_vec(&header)?;
    bytes.push(b'\n');
    bytes.reserve(8 * (table.entities.as_slice().len() + table.relations.as_slice().len()));
    for v in table.entities.as_slice().iter().chain(table.relations.as_slice()) {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<(CheckpointHeader, EmbeddingTable)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |message: String| Error::Checkpoint {
        path: path.to_owned(),
        message,
    };
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| bad("missing header line".into()))?;
    let header: CheckpointHeader =
        serde_json::from_slice(&bytes[..nl]).map_err(|e| bad(format!("header: {e}")))?;
    if header.format != CHECKPOINT_FORMAT {
        return Err(bad(format!("unsupported format `{}`", header.format)));
    }
    let n_ent = header.num_entities * header.d_e;
    let n_rel = header.num_relations * header.d_r;
    let body = &bytes[nl + 1..];
    if body.len() != 8 * (n_ent + n_rel) {
        return Err(bad(format!(
            "expected {} payload bytes, found {}",
            8 * (n_ent + n_rel),
            body.len()
        )));
    }
    let mut values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let ent: Vec<f64> = values.by_ref().take(n_ent).collect();
    let rel: Vec<f64> = values.collect();
    let table = EmbeddingTable::new(
        header.model_kind,
        Matrix::from_vec(header.num_entities, header.d_e, ent)?,
        Matrix::from_vec(header.num_relations, header.d_r, rel)?,
    )?;
    Ok((header, table))
}
