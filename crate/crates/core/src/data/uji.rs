//! UJIIndoorLoc CSV ingestion.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Number of access-point columns (`WAP001` .. `WAP520`).
pub const WAP_COUNT: usize = 520;
/// RSS value recorded for an access point that was not heard.
pub const NOT_DETECTED: f64 = 100.0;
pub const RSS_MIN: f64 = -104.0;
pub const RSS_MAX: f64 = 0.0;

const META_COLUMNS: [&str; 9] = [
    "LONGITUDE",
    "LATITUDE",
    "FLOOR",
    "BUILDINGID",
    "SPACEID",
    "RELATIVEPOSITION",
    "USERID",
    "PHONEID",
    "TIMESTAMP",
];

pub fn wap_column(i: usize) -> String {
    format!("WAP{:03}", i + 1)
}

/// Every expected column name, in canonical file order.
pub fn expected_columns() -> Vec<String> {
    (0..WAP_COUNT)
        .map(wap_column)
        .chain(META_COLUMNS.iter().map(|s| s.to_string()))
        .collect()
}

/// One fingerprint row.
#[derive(Debug, Clone, PartialEq)]
pub struct RssSample {
    /// dBm per access point; [`NOT_DETECTED`] when not heard.
    pub rss: Vec<f64>,
    pub longitude: f64,
    pub latitude: f64,
    pub floor: i64,
    pub building: i64,
    pub space_id: i64,
    pub relative_position: i64,
    pub user_id: i64,
    pub phone_id: i64,
    pub timestamp: i64,
}

/// Reads every data row. Columns are located by header name, so order does
/// not matter and extra columns are ignored.
pub fn load_ujiindoorloc(path: &Path) -> Result<Vec<RssSample>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_ujiindoorloc(file, path)
}

pub fn read_ujiindoorloc<R: std::io::Read>(reader: R, path: &Path) -> Result<Vec<RssSample>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
    let positions: HashMap<&str, usize> = header.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let expected = expected_columns();
    let missing: Vec<String> = expected
        .iter()
        .filter(|c| !positions.contains_key(c.as_str()))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(Error::Schema { missing });
    }
    let index: Vec<usize> = expected.iter().map(|c| positions[c.as_str()]).collect();

    let mut samples = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Row {
            row,
            message: e.to_string(),
        })?;
        let field = |k: usize| -> Result<&str> {
            record.get(index[k]).ok_or_else(|| Error::Row {
                row,
                message: format!("missing field {}", expected[k]),
            })
        };
        let real = |k: usize| -> Result<f64> {
            let raw = field(k)?;
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Row {
                    row,
                    message: format!("{} = {raw:?} is not a finite number", expected[k]),
                })
        };
        let int = |k: usize| -> Result<i64> {
            let raw = field(k)?;
            raw.parse::<i64>().map_err(|_| Error::Row {
                row,
                message: format!("{} = {raw:?} is not an integer", expected[k]),
            })
        };
        let rss = (0..WAP_COUNT).map(real).collect::<Result<Vec<_>>>()?;
        let m = WAP_COUNT;
        samples.push(RssSample {
            rss,
            longitude: real(m)?,
            latitude: real(m + 1)?,
            floor: int(m + 2)?,
            building: int(m + 3)?,
            space_id: int(m + 4)?,
            relative_position: int(m + 5)?,
            user_id: int(m + 6)?,
            phone_id: int(m + 7)?,
            timestamp: int(m + 8)?,
        });
    }
    Ok(samples)
}

/// Writes samples in the canonical column order. Floats use the shortest
/// representation that parses back to the same value.
pub fn write_ujiindoorloc(path: &Path, samples: &[RssSample]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(expected_columns()).map_err(|e| Error::csv(path, e))?;
    let mut fields = Vec::with_capacity(WAP_COUNT + META_COLUMNS.len());
    for s in samples {
        if s.rss.len() != WAP_COUNT {
            return Err(Error::Contract(format!(
                "sample has {} RSS values, expected {WAP_COUNT}",
                s.rss.len()
            )));
        }
        fields.clear();
        fields.extend(s.rss.iter().map(|v| v.to_string()));
        fields.push(s.longitude.to_string());
        fields.push(s.latitude.to_string());
        for v in [
            s.floor,
            s.building,
            s.space_id,
            s.relative_position,
            s.user_id,
            s.phone_id,
            s.timestamp,
        ] {
            fields.push(v.to_string());
        }
        w.write_record(&fields).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Samples recorded on `floor` of `building`, order preserved.
pub fn filter_building_floor(samples: &[RssSample], building: i64, floor: i64) -> Result<Vec<RssSample>> {
    let kept: Vec<RssSample> = samples
        .iter()
        .filter(|s| s.building == building && s.floor == floor)
        .cloned()
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptySelection(format!(
            "no samples on building {building}, floor {floor}"
        )));
    }
    Ok(kept)
}
