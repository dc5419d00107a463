use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::nn::LabeledBatch;
use crate::seed;

use super::kmeans::kmeans;
use super::uji::{RssSample, NOT_DETECTED, RSS_MAX, RSS_MIN};

/// RSS assigned to "not detected" before scaling; just below the weakest reading.
pub const FLOOR_DBM: f64 = -105.0;
pub const KMEANS_RESTARTS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct Room {
    pub space_id: i64,
    pub longitude: f64,
    pub latitude: f64,
    pub samples: usize,
    pub label: usize,
}

/// Rooms grouped into `L` areas. Labels are ordered by area centroid
/// longitude, then latitude.
#[derive(Debug, Clone, PartialEq)]
pub struct RoomClustering {
    /// Sorted by space id.
    pub rooms: Vec<Room>,
    /// `(latitude, longitude)` per label.
    pub centroids: Vec<(f64, f64)>,
}

impl RoomClustering {
    pub fn labels(&self) -> usize {
        self.centroids.len()
    }

    pub fn label_of(&self, space_id: i64) -> Option<usize> {
        self.rooms
            .binary_search_by_key(&space_id, |r| r.space_id)
            .ok()
            .map(|i| self.rooms[i].label)
    }
}

/// k-means (k = `labels`) over per-room mean coordinates.
pub fn cluster_rooms(samples: &[RssSample], labels: usize, seed_value: u64) -> Result<RoomClustering> {
    let mut sums: BTreeMap<i64, (f64, f64, usize)> = BTreeMap::new();
    for s in samples {
        let e = sums.entry(s.space_id).or_insert((0.0, 0.0, 0));
        e.0 += s.longitude;
        e.1 += s.latitude;
        e.2 += 1;
    }
    if labels == 0 || labels > sums.len() {
        return Err(Error::Parameter(format!(
            "cannot form {labels} areas from {} rooms",
            sums.len()
        )));
    }
    let mut rooms: Vec<Room> = sums
        .into_iter()
        .map(|(space_id, (lon, lat, n))| Room {
            space_id,
            longitude: lon / n as f64,
            latitude: lat / n as f64,
            samples: n,
            label: 0,
        })
        .collect();
    let points: Vec<[f64; 2]> = rooms.iter().map(|r| [r.longitude, r.latitude]).collect();
    let clustering = kmeans(&points, labels, KMEANS_RESTARTS, seed_value);

    // Area centroid = mean of its room centroids; relabel by (longitude, latitude).
    let mut order: Vec<usize> = (0..labels).collect();
    let c = &clustering.centroids;
    order.sort_by(|&a, &b| c[a][0].total_cmp(&c[b][0]).then(c[a][1].total_cmp(&c[b][1])));
    let mut relabel = vec![0; labels];
    for (new, &old) in order.iter().enumerate() {
        relabel[old] = new;
    }
    for (room, &a) in rooms.iter_mut().zip(&clustering.assignment) {
        room.label = relabel[a];
    }
    let centroids = order.iter().map(|&old| (c[old][1], c[old][0])).collect();
    Ok(RoomClustering { rooms, centroids })
}

/// Maps one RSS reading to `[0, 1]`. Returns the value and whether it was
/// outside the valid detected range (and therefore clipped).
pub fn normalize_rss(v: f64) -> (f64, bool) {
    if v == NOT_DETECTED {
        return (0.0, false);
    }
    let out_of_range = !(RSS_MIN..=RSS_MAX).contains(&v);
    let scaled = (v - FLOOR_DBM) / (RSS_MAX - FLOOR_DBM);
    (scaled.clamp(0.0, 1.0), out_of_range)
}

/// Normalized feature rows and the number of clipped readings.
pub fn normalize_features(samples: &[RssSample]) -> (Vec<Vec<f64>>, usize) {
    let mut clipped = 0;
    let rows = samples
        .iter()
        .map(|s| {
            s.rss
                .iter()
                .map(|&v| {
                    let (x, out) = normalize_rss(v);
                    clipped += usize::from(out);
                    x
                })
                .collect()
        })
        .collect();
    if clipped > 0 {
        log::warn!("clipped {clipped} RSS readings outside [{RSS_MIN}, {RSS_MAX}] dBm");
    }
    (rows, clipped)
}

/// Area-labelled, normalized fingerprints.
#[derive(Debug, Clone, PartialEq)]
pub struct AreaDataset {
    pub batch: LabeledBatch,
    /// `(latitude, longitude)` per label.
    pub centroids: Vec<(f64, f64)>,
}

impl AreaDataset {
    pub fn new(batch: LabeledBatch, centroids: Vec<(f64, f64)>) -> Result<Self> {
        if centroids.len() != batch.num_labels() {
            return Err(Error::Contract(format!(
                "{} centroids for {} labels",
                centroids.len(),
                batch.num_labels()
            )));
        }
        if let Some(j) = batch.label_counts().iter().position(|&c| c == 0) {
            return Err(Error::InvalidState(format!("area {j} has no samples")));
        }
        if batch.features().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidState("features must lie in [0, 1]".into()));
        }
        Ok(Self { batch, centroids })
    }

    /// Labels samples by their room's area and normalizes their RSS.
    pub fn build(samples: &[RssSample], clustering: &RoomClustering) -> Result<Self> {
        let labels = samples
            .iter()
            .map(|s| {
                clustering
                    .label_of(s.space_id)
                    .ok_or_else(|| Error::InvalidInput(format!("space id {} not in the clustering", s.space_id)))
            })
            .collect::<Result<Vec<_>>>()?;
        let (rows, _) = normalize_features(samples);
        let batch = LabeledBatch::from_rows(&rows, labels, clustering.labels())?;
        Self::new(batch, clustering.centroids.clone())
    }

    pub fn len(&self) -> usize {
        self.batch.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batch.is_empty()
    }

    pub fn labels(&self) -> usize {
        self.batch.num_labels()
    }

    pub fn feature_dim(&self) -> usize {
        self.batch.dim()
    }
}

/// Sample indices of a train/test split, each ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified split: each label contributes `round(fraction * count)` test samples.
pub fn split_train_test(labels: &[usize], num_labels: usize, test_fraction: f64, seed_value: u64) -> Result<Split> {
    if !(0.0..=1.0).contains(&test_fraction) {
        return Err(Error::Parameter(format!(
            "test fraction must lie in [0, 1], got {test_fraction}"
        )));
    }
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); num_labels];
    for (i, &l) in labels.iter().enumerate() {
        pools
            .get_mut(l)
            .ok_or_else(|| Error::InvalidInput(format!("label {l} out of range")))?
            .push(i);
    }
    let mut rng = seed::rng(seed_value);
    let mut split = Split {
        train: Vec::new(),
        test: Vec::new(),
    };
    for pool in &mut pools {
        pool.shuffle(&mut rng);
        let n_test = (test_fraction * pool.len() as f64).round() as usize;
        split.test.extend_from_slice(&pool[..n_test]);
        split.train.extend_from_slice(&pool[n_test..]);
    }
    split.train.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}
