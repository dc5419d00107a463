//! Synthetic fingerprints in the UJIIndoorLoc schema.
//!
//! Rooms sit on a jittered grid over a 140 m x 80 m floor of building 1,
//! floor 1. Access points follow a log-distance path-loss model with a fixed
//! per-(room, AP) shadowing term and per-reading noise; weak or randomly
//! missed readings are recorded as not detected. A handful of rows from
//! another building and floor exercise the floor filter.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::partition::standard_normal;
use crate::seed;

use super::uji::{RssSample, NOT_DETECTED, WAP_COUNT};

const LON0: f64 = -7560.0;
const LAT0: f64 = 4_864_880.0;
const WIDTH: f64 = 140.0;
const HEIGHT: f64 = 80.0;
const TX_DBM: f64 = -35.0;
const DETECTION_DBM: f64 = -100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticFloor {
    pub seed: u64,
    pub rooms: usize,
    pub access_points: usize,
    /// Mean readings per room; each room draws between half and 1.5x this.
    pub samples_per_room: usize,
    pub path_loss_exponent: f64,
    pub shadowing_db: f64,
    pub noise_db: f64,
    pub miss_probability: f64,
    /// Rows placed on building 0, floor 0.
    pub other_floor_samples: usize,
}

impl Default for SyntheticFloor {
    fn default() -> Self {
        Self {
            seed: 2021,
            rooms: 30,
            access_points: 48,
            samples_per_room: 50,
            path_loss_exponent: 3.0,
            shadowing_db: 6.0,
            noise_db: 5.0,
            miss_probability: 0.1,
            other_floor_samples: 40,
        }
    }
}

impl SyntheticFloor {
    pub fn generate(&self) -> Vec<RssSample> {
        let mut rng = seed::rng(self.seed);
        let cols = ((self.rooms as f64 * WIDTH / HEIGHT).sqrt().ceil() as usize).max(1);
        let rows = self.rooms.div_ceil(cols).max(1);
        let rooms: Vec<(f64, f64)> = (0..self.rooms)
            .map(|i| {
                let (c, r) = (i % cols, i / cols);
                let x = (c as f64 + 0.5) * WIDTH / cols as f64 + rng.random_range(-2.0..2.0);
                let y = (r as f64 + 0.5) * HEIGHT / rows as f64 + rng.random_range(-2.0..2.0);
                (x, y)
            })
            .collect();

        let mut columns: Vec<usize> = (0..WAP_COUNT).collect();
        columns.shuffle(&mut rng);
        columns.truncate(self.access_points.min(WAP_COUNT));
        let aps: Vec<(usize, f64, f64)> = columns
            .iter()
            .map(|&col| {
                (
                    col,
                    rng.random_range(-10.0..WIDTH + 10.0),
                    rng.random_range(-10.0..HEIGHT + 10.0),
                )
            })
            .collect();
        let shadowing: Vec<Vec<f64>> = rooms
            .iter()
            .map(|_| {
                aps.iter()
                    .map(|_| self.shadowing_db * standard_normal(&mut rng))
                    .collect()
            })
            .collect();

        let mut samples = Vec::new();
        let mut timestamp = 1_370_000_000;
        for (room, &(rx, ry)) in rooms.iter().enumerate() {
            let count = ((self.samples_per_room as f64) * rng.random_range(0.5..1.5)).round() as usize;
            for _ in 0..count.max(1) {
                let x = rx + rng.random_range(-4.0..4.0);
                let y = ry + rng.random_range(-4.0..4.0);
                let mut rss = vec![NOT_DETECTED; WAP_COUNT];
                for (a, &(col, ax, ay)) in aps.iter().enumerate() {
                    let d = ((x - ax).powi(2) + (y - ay).powi(2)).sqrt().max(1.0);
                    let v = TX_DBM - 10.0 * self.path_loss_exponent * d.log10()
                        + shadowing[room][a]
                        + self.noise_db * standard_normal(&mut rng);
                    let missed = rng.random::<f64>() < self.miss_probability;
                    if v >= DETECTION_DBM && !missed {
                        rss[col] = v.round().min(0.0);
                    }
                }
                timestamp += rng.random_range(1..30);
                samples.push(RssSample {
                    rss,
                    longitude: LON0 + x,
                    latitude: LAT0 + y,
                    floor: 1,
                    building: 1,
                    space_id: 100 + room as i64,
                    relative_position: rng.random_range(1..=2),
                    user_id: rng.random_range(1..=18),
                    phone_id: rng.random_range(1..=24),
                    timestamp,
                });
            }
        }
        for i in 0..self.other_floor_samples {
            let mut rss = vec![NOT_DETECTED; WAP_COUNT];
            for v in rss.iter_mut().take(8) {
                *v = -(rng.random_range(40..100) as f64);
            }
            samples.push(RssSample {
                rss,
                longitude: LON0 - 200.0 + rng.random_range(0.0..50.0),
                latitude: LAT0 + 100.0 + rng.random_range(0.0..50.0),
                floor: 0,
                building: 0,
                space_id: 10 + (i % 5) as i64,
                relative_position: 2,
                user_id: 1,
                phone_id: 1,
                timestamp: timestamp + i as i64,
            });
        }
        samples
    }
}
