//! CSV tables written by the harness, and readers for the ones that feed
//! later pipeline stages.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Split;
use crate::error::{Error, Result};
use crate::partition::ClientLabelDistribution;

use super::histogram::PosteriorHistogram;
use super::monte_carlo::SweepTable;

fn sweep_cell(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn write_rows<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(header).map_err(|e| Error::csv(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `strategy,sweep_value,run,accuracy`, successful runs only.
pub fn write_results(path: &Path, table: &SweepTable) -> Result<()> {
    let rows = table.records.iter().flat_map(|r| {
        r.runs.iter().zip(&r.accuracies).map(move |(run, acc)| {
            vec![
                r.strategy.to_string(),
                sweep_cell(r.sweep_value),
                run.to_string(),
                acc.to_string(),
            ]
        })
    });
    write_rows(path, &["strategy", "sweep_value", "run", "accuracy"], rows)
}

/// `strategy,sweep_value,run,error`.
pub fn write_failures(path: &Path, table: &SweepTable) -> Result<()> {
    let rows = table.records.iter().flat_map(|r| {
        r.failures.iter().map(move |(run, e)| {
            vec![
                r.strategy.to_string(),
                sweep_cell(r.sweep_value),
                run.to_string(),
                e.clone(),
            ]
        })
    });
    write_rows(path, &["strategy", "sweep_value", "run", "error"], rows)
}

/// `strategy,sweep_value,runs,mean,std,failures`.
pub fn write_summary(path: &Path, table: &SweepTable) -> Result<()> {
    let rows = table.records.iter().map(|r| {
        vec![
            r.strategy.to_string(),
            sweep_cell(r.sweep_value),
            r.runs.len().to_string(),
            r.mean.to_string(),
            r.std.to_string(),
            r.failures.len().to_string(),
        ]
    });
    write_rows(
        path,
        &["strategy", "sweep_value", "runs", "mean", "std", "failures"],
        rows,
    )
}

/// `sweep_value,numerator,denominator,rate`.
pub fn write_rates(path: &Path, table: &SweepTable) -> Result<()> {
    let rows = table.rates.iter().map(|r| {
        vec![
            r.sweep_value.to_string(),
            r.numerator.to_string(),
            r.denominator.to_string(),
            r.rate.to_string(),
        ]
    });
    write_rows(path, &["sweep_value", "numerator", "denominator", "rate"], rows)
}

/// `sample,source,probability` with source `model_<i>` or `fused`.
pub fn write_posteriors(path: &Path, h: &PosteriorHistogram) -> Result<()> {
    let mut rows = Vec::new();
    for (k, &sample) in h.samples.iter().enumerate() {
        for (i, values) in h.per_model.iter().enumerate() {
            rows.push(vec![sample.to_string(), format!("model_{i}"), values[k].to_string()]);
        }
        rows.push(vec![sample.to_string(), "fused".into(), h.fused[k].to_string()]);
    }
    write_rows(path, &["sample", "source", "probability"], rows)
}

/// `bin_low,bin_high,before,after` over equal-width bins on `[0, 1]`.
pub fn write_histogram_bins(path: &Path, h: &PosteriorHistogram, bins: usize) -> Result<()> {
    if bins == 0 {
        return Err(Error::Parameter("need at least one bin".into()));
    }
    let (before, after) = h.bin_counts(bins);
    let rows = (0..bins).map(|b| {
        vec![
            (b as f64 / bins as f64).to_string(),
            ((b + 1) as f64 / bins as f64).to_string(),
            before[b].to_string(),
            after[b].to_string(),
        ]
    });
    write_rows(path, &["bin_low", "bin_high", "before", "after"], rows)
}

#[derive(Serialize, Deserialize)]
struct DistributionRow {
    client_id: usize,
    label: usize,
    probability: f64,
}

/// `client_id,label,probability`.
pub fn write_distributions(path: &Path, dists: &[ClientLabelDistribution]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for (client_id, d) in dists.iter().enumerate() {
        for (label, &probability) in d.probs().iter().enumerate() {
            w.serialize(DistributionRow {
                client_id,
                label,
                probability,
            })
            .map_err(|e| Error::csv(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_distributions(path: &Path) -> Result<Vec<ClientLabelDistribution>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut probs: Vec<Vec<f64>> = Vec::new();
    for row in r.deserialize() {
        let row: DistributionRow = row.map_err(|e| Error::csv(path, e))?;
        if row.client_id > probs.len() || (row.client_id < probs.len() && row.client_id + 1 != probs.len()) {
            return Err(Error::format(path, format!("client {} out of order", row.client_id)));
        }
        if row.client_id == probs.len() {
            probs.push(Vec::new());
        }
        let p = probs.last_mut().expect("pushed");
        if row.label != p.len() {
            return Err(Error::format(path, format!("label {} out of order", row.label)));
        }
        p.push(row.probability);
    }
    probs
        .into_iter()
        .map(|p| ClientLabelDistribution::new(p).map_err(|e| Error::format(path, e.to_string())))
        .collect()
}

#[derive(Serialize, Deserialize)]
struct SplitRow {
    sample_index: usize,
    set: String,
}

/// `sample_index,set` with set `train` or `test`, ascending by index.
pub fn write_split(path: &Path, split: &Split) -> Result<()> {
    let mut rows: Vec<(usize, &str)> = split
        .train
        .iter()
        .map(|&i| (i, "train"))
        .chain(split.test.iter().map(|&i| (i, "test")))
        .collect();
    rows.sort_unstable();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for (sample_index, set) in rows {
        w.serialize(SplitRow {
            sample_index,
            set: set.into(),
        })
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_split(path: &Path) -> Result<Split> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut split = Split {
        train: Vec::new(),
        test: Vec::new(),
    };
    for row in r.deserialize() {
        let row: SplitRow = row.map_err(|e| Error::csv(path, e))?;
        match row.set.as_str() {
            "train" => split.train.push(row.sample_index),
            "test" => split.test.push(row.sample_index),
            other => return Err(Error::format(path, format!("unknown set {other:?}"))),
        }
    }
    Ok(split)
}
