//! Partition manifest: CSV rows `client_id,sample_index,label`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub client_id: usize,
    pub sample_index: usize,
    pub label: usize,
}

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Per-client sample indices, in file order. Client ids must be `0..M` with
/// no gaps.
pub fn read_manifest(path: &Path) -> Result<Vec<Vec<ManifestRow>>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut clients: Vec<Vec<ManifestRow>> = Vec::new();
    for row in r.deserialize() {
        let row: ManifestRow = row.map_err(|e| Error::csv(path, e))?;
        if row.client_id >= clients.len() {
            clients.resize_with(row.client_id + 1, Vec::new);
        }
        clients[row.client_id].push(row);
    }
    if let Some(c) = clients.iter().position(Vec::is_empty) {
        return Err(Error::format(path, format!("client {c} has no samples")));
    }
    Ok(clients)
}
