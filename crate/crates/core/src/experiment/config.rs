//! Experiment configuration, read from TOML.

use std::fmt;
use std::num::NonZeroUsize;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::DataConfig;
use crate::error::{Error, Result};
use crate::federation::FederationConfig;
use crate::nn::{Architecture, TrainingConfig};
use crate::partition::{ClientGroup, GroupSpec, SamplesPerClient};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "GM")]
    Gm,
    #[serde(rename = "LM")]
    Lm,
    #[serde(rename = "LM-F")]
    LmFused,
    #[serde(rename = "FEDAVG")]
    FedAvg,
    #[serde(rename = "FEDAMP")]
    FedAmp,
    #[serde(rename = "FEDAMP-F")]
    FedAmpFused,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::Gm,
        Strategy::Lm,
        Strategy::LmFused,
        Strategy::FedAvg,
        Strategy::FedAmp,
        Strategy::FedAmpFused,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Gm => "GM",
            Strategy::Lm => "LM",
            Strategy::LmFused => "LM-F",
            Strategy::FedAvg => "FEDAVG",
            Strategy::FedAmp => "FEDAMP",
            Strategy::FedAmpFused => "FEDAMP-F",
        }
    }

    /// The strategy whose trained models this one evaluates.
    pub fn base(self) -> Strategy {
        match self {
            Strategy::LmFused => Strategy::Lm,
            Strategy::FedAmpFused => Strategy::FedAmp,
            s => s,
        }
    }

    pub fn is_fused(self) -> bool {
        matches!(self, Strategy::LmFused | Strategy::FedAmpFused)
    }

    /// One model per client, each scored on its own client's test set.
    pub fn is_personalized(self) -> bool {
        matches!(self, Strategy::Lm | Strategy::FedAmp)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown strategy {s:?}")))
    }
}

/// How clients are grouped; resolved against `L` and `M` at run time so
/// sweeps over either keep working.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PartitionConfig {
    pub groups: usize,
    pub dominant_labels_per_group: usize,
    pub beta_high: f64,
    pub beta_low: f64,
    pub samples_per_client: SamplesPerClient,
    /// Explicit groups; overrides `groups` and `dominant_labels_per_group`.
    pub layout: Option<Vec<ClientGroup>>,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            groups: 3,
            dominant_labels_per_group: 3,
            beta_high: 80.0,
            beta_low: 20.0,
            samples_per_client: SamplesPerClient::Proportional,
            layout: None,
        }
    }
}

impl PartitionConfig {
    pub fn group_spec(&self, clients: usize, labels: usize) -> Result<GroupSpec> {
        let spec = match &self.layout {
            Some(groups) => {
                let spec = GroupSpec {
                    groups: groups.clone(),
                    beta_high: self.beta_high,
                    beta_low: self.beta_low,
                    samples_per_client: self.samples_per_client,
                };
                if spec.client_count() != clients {
                    return Err(Error::Config(format!(
                        "partition layout holds {} clients, experiment has {clients}",
                        spec.client_count()
                    )));
                }
                spec
            }
            None => GroupSpec {
                samples_per_client: self.samples_per_client,
                ..GroupSpec::even(
                    clients,
                    labels,
                    self.groups,
                    self.dominant_labels_per_group,
                    self.beta_high,
                    self.beta_low,
                )?
            },
        };
        spec.validate(labels)?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Labels,
    Clients,
    Sigma,
    LambdaTilde,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Labels => "labels",
            SweepAxis::Clients => "clients",
            SweepAxis::Sigma => "sigma",
            SweepAxis::LambdaTilde => "lambda_tilde",
        }
    }

    fn is_count(self) -> bool {
        matches!(self, SweepAxis::Labels | SweepAxis::Clients)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HistogramConfig {
    pub target_label: usize,
    /// Models whose posteriors are compared before and after fusion.
    pub strategy: Strategy,
}

impl Default for HistogramConfig {
    fn default() -> Self {
        Self {
            target_label: 0,
            strategy: Strategy::FedAmp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    /// Monte-Carlo runs `R`.
    pub runs: NonZeroUsize,
    /// Worker threads; 0 means one per available core.
    pub workers: usize,
    /// Area labels `L`.
    pub labels: usize,
    /// Clients `M`.
    pub clients: usize,
    pub hidden: Vec<usize>,
    pub strategies: Vec<Strategy>,
    pub data: DataConfig,
    pub partition: PartitionConfig,
    pub federation: FederationConfig,
    pub training: TrainingConfig,
    pub sweep: Option<SweepConfig>,
    pub histograms: HistogramConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            master_seed: 2021,
            runs: NonZeroUsize::new(10).expect("non-zero"),
            workers: 0,
            labels: 10,
            clients: 6,
            hidden: vec![256, 16],
            strategies: Strategy::ALL.to_vec(),
            data: DataConfig::default(),
            partition: PartitionConfig::default(),
            federation: FederationConfig::default(),
            training: TrainingConfig::default(),
            sweep: None,
            histograms: HistogramConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.labels == 0 || self.clients == 0 {
            return Err(Error::Config("labels and clients must be positive".into()));
        }
        if self.strategies.is_empty() {
            return Err(Error::Config("no strategies selected".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        self.data.validate()?;
        self.federation.validate()?;
        self.training.validate()?;
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(Error::Config("sweep has no values".into()));
            }
            for &v in &sweep.values {
                let ok = if sweep.axis.is_count() {
                    v >= 1.0 && v.fract() == 0.0 && v.is_finite()
                } else if sweep.axis == SweepAxis::Sigma {
                    v > 0.0 && v.is_finite()
                } else {
                    v >= 0.0 && v.is_finite()
                };
                if !ok {
                    return Err(Error::Config(format!("invalid {} sweep value {v}", sweep.axis.name())));
                }
            }
        }
        self.partition.group_spec(self.clients, self.labels)?;
        Ok(())
    }

    pub fn architecture(&self, input_dim: usize) -> Result<Architecture> {
        Architecture::with_hidden(input_dim, &self.hidden, self.labels)
    }

    /// Copy with one sweep coordinate applied.
    pub fn at(&self, axis: SweepAxis, value: f64) -> Self {
        let mut cfg = self.clone();
        match axis {
            SweepAxis::Labels => cfg.labels = value as usize,
            SweepAxis::Clients => cfg.clients = value as usize,
            SweepAxis::Sigma => cfg.federation.sigma = value,
            SweepAxis::LambdaTilde => cfg.federation.lambda_tilde = value,
        }
        cfg
    }

    /// Selected strategies in canonical order, without duplicates.
    pub fn strategy_set(&self) -> Vec<Strategy> {
        let mut s = self.strategies.clone();
        s.sort();
        s.dedup();
        s
    }

    pub fn worker_count(&self) -> usize {
        if self.workers > 0 {
            self.workers
        } else {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        }
    }
}
