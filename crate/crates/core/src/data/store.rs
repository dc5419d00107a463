//! Processed-dataset container and label-map reports.
//!
//! Dataset file layout, little-endian:
//!
//! ```text
//! magic      8 bytes  "FFAREA\0\x01"
//! labels     u64      L
//! dim        u64      feature width F
//! n          u64      sample count
//! centroids  L x (f64 latitude, f64 longitude)
//! labels     n x u64
//! features   n x F x f64, row-major
//! ```

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::nn::LabeledBatch;

use super::area::{AreaDataset, RoomClustering};

const MAGIC: &[u8; 8] = b"FFAREA\0\x01";

pub fn write_dataset(path: &Path, data: &AreaDataset) -> Result<()> {
    let b = &data.batch;
    let mut out = Vec::with_capacity(32 + 16 * data.labels() + 8 * b.len() * (b.dim() + 1));
    out.extend_from_slice(MAGIC);
    for v in [data.labels(), b.dim(), b.len()] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    for &(lat, lon) in &data.centroids {
        out.extend_from_slice(&lat.to_bits().to_le_bytes());
        out.extend_from_slice(&lon.to_bits().to_le_bytes());
    }
    for &l in b.labels() {
        out.extend_from_slice(&(l as u64).to_le_bytes());
    }
    for v in b.features() {
        out.extend_from_slice(&v.to_bits().to_le_bytes());
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: &Path) -> Result<AreaDataset> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |m: &str| Error::format(path, m.to_string());
    if bytes.len() < 32 || &bytes[..8] != MAGIC {
        return Err(bad("not a processed dataset (bad magic)"));
    }
    let mut words = bytes[8..]
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")));
    let mut next = || words.next().ok_or_else(|| bad("truncated"));
    let labels = next()? as usize;
    let dim = next()? as usize;
    let n = next()? as usize;
    let expected = 8 * (3 + 2 * labels as u128 + n as u128 * (1 + dim as u128));
    if (bytes.len() - 8) as u128 != expected {
        return Err(bad("size does not match header"));
    }
    let centroids = (0..labels)
        .map(|_| Ok((f64::from_bits(next()?), f64::from_bits(next()?))))
        .collect::<Result<Vec<_>>>()?;
    let ys = (0..n).map(|_| Ok(next()? as usize)).collect::<Result<Vec<_>>>()?;
    let xs = (0..n * dim)
        .map(|_| Ok(f64::from_bits(next()?)))
        .collect::<Result<Vec<_>>>()?;
    let batch = LabeledBatch::new(xs, ys, dim, labels).map_err(|e| bad(&e.to_string()))?;
    AreaDataset::new(batch, centroids).map_err(|e| bad(&e.to_string()))
}

#[derive(Serialize)]
struct LabelMapRow {
    space_id: i64,
    label: usize,
    room_latitude: f64,
    room_longitude: f64,
    samples: usize,
}

#[derive(Serialize)]
struct CentroidRow {
    label: usize,
    latitude: f64,
    longitude: f64,
    rooms: usize,
}

/// `space_id,label,room_latitude,room_longitude,samples`, one row per room.
pub fn write_label_map(path: &Path, clustering: &RoomClustering) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for r in &clustering.rooms {
        w.serialize(LabelMapRow {
            space_id: r.space_id,
            label: r.label,
            room_latitude: r.latitude,
            room_longitude: r.longitude,
            samples: r.samples,
        })
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `label,latitude,longitude,rooms`, one row per area.
pub fn write_centroids(path: &Path, clustering: &RoomClustering) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for (label, &(latitude, longitude)) in clustering.centroids.iter().enumerate() {
        let rooms = clustering.rooms.iter().filter(|r| r.label == label).count();
        w.serialize(CentroidRow {
            label,
            latitude,
            longitude,
            rooms,
        })
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
