//! Per-round diagnostics.

use std::path::Path;

use crate::error::{Error, Result};

/// One client's view of one round. For FedAMP `prox_distance` is
/// `||w_i^k - u_i^k||` and `xi` is the client's similarity row; for FedAvg it
/// is the distance to the global model the round started from and `xi` is
/// empty.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundLogRow {
    pub round: usize,
    pub client_id: usize,
    pub local_loss: f64,
    pub prox_distance: f64,
    pub xi: Vec<f64>,
}

/// CSV with header `round,client_id,local_loss,prox_distance,xi_0,...`.
pub fn write_round_log(path: &Path, rows: &[RoundLogRow]) -> Result<()> {
    let width = rows.iter().map(|r| r.xi.len()).max().unwrap_or(0);
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut header = vec![
        "round".to_string(),
        "client_id".into(),
        "local_loss".into(),
        "prox_distance".into(),
    ];
    header.extend((0..width).map(|j| format!("xi_{j}")));
    w.write_record(&header).map_err(|e| Error::csv(path, e))?;
    for r in rows {
        let mut rec = vec![
            r.round.to_string(),
            r.client_id.to_string(),
            r.local_loss.to_string(),
            r.prox_distance.to_string(),
        ];
        rec.extend((0..width).map(|j| r.xi.get(j).map(f64::to_string).unwrap_or_default()));
        w.write_record(&rec).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
