//! Fingerprint ingestion and area labelling.
//!
//! Raw UJIIndoorLoc rows are filtered to one building and floor, rooms
//! (space ids) are grouped into `L` areas by k-means over their mean
//! coordinates, and RSS readings are scaled to `[0, 1]`.

mod area;
mod kmeans;
mod store;
mod synthetic;
mod uji;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use area::{
    cluster_rooms, normalize_features, normalize_rss, split_train_test, AreaDataset, Room, RoomClustering, Split,
    FLOOR_DBM, KMEANS_RESTARTS,
};
pub use kmeans::{kmeans, Clustering};
pub use store::{read_dataset, write_centroids, write_dataset, write_label_map};
pub use synthetic::SyntheticFloor;
pub use uji::{
    expected_columns, filter_building_floor, load_ujiindoorloc, read_ujiindoorloc, wap_column, write_ujiindoorloc,
    RssSample, NOT_DETECTED, RSS_MAX, RSS_MIN, WAP_COUNT,
};

/// Where fingerprints come from and how they become an [`AreaDataset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// UJIIndoorLoc CSV. Ignored when `synthetic` is set.
    pub path: Option<PathBuf>,
    pub synthetic: Option<SyntheticFloor>,
    pub building: i64,
    pub floor: i64,
    pub cluster_seed: u64,
    pub test_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            path: None,
            synthetic: None,
            building: 1,
            floor: 1,
            cluster_seed: 0,
            test_fraction: 0.2,
        }
    }
}

impl DataConfig {
    pub fn validate(&self) -> Result<()> {
        if self.path.is_none() && self.synthetic.is_none() {
            return Err(Error::Config("data needs either `path` or `synthetic`".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!(
                "test_fraction must lie strictly between 0 and 1, got {}",
                self.test_fraction
            )));
        }
        Ok(())
    }

    /// Raw rows for the configured building and floor.
    pub fn load_floor(&self) -> Result<Vec<RssSample>> {
        let all = match (&self.synthetic, &self.path) {
            (Some(synth), _) => synth.generate(),
            (None, Some(path)) => load_ujiindoorloc(path)?,
            (None, None) => return Err(Error::Config("no data source configured".into())),
        };
        filter_building_floor(&all, self.building, self.floor)
    }
}

/// Floor samples grouped into `labels` areas.
pub fn prepare(samples: &[RssSample], labels: usize, cluster_seed: u64) -> Result<(AreaDataset, RoomClustering)> {
    let clustering = cluster_rooms(samples, labels, cluster_seed)?;
    let data = AreaDataset::build(samples, &clustering)?;
    Ok((data, clustering))
}
