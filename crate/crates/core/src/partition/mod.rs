//! Group-structured non-IID client datasets.
//!
//! Clients are organized in groups that share a set of dominant labels.
//! Each client draws its label mix from a Dirichlet whose concentration is
//! high on its group's dominant labels and low elsewhere, then receives
//! samples without replacement from label pools shared by all clients.

mod dirichlet;
mod manifest;

use std::num::NonZeroUsize;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub use dirichlet::{dirichlet, gamma, standard_normal};
pub use manifest::{read_manifest, write_manifest, ManifestRow};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientGroup {
    pub clients: usize,
    pub dominant_labels: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplesPerClient {
    /// `floor(N_train / M)` for every client.
    Proportional,
    Fixed(NonZeroUsize),
}

impl Serialize for SamplesPerClient {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            SamplesPerClient::Proportional => s.serialize_str("proportional"),
            SamplesPerClient::Fixed(n) => s.serialize_u64(n.get() as u64),
        }
    }
}

impl<'de> Deserialize<'de> for SamplesPerClient {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(u64),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Count(n) => usize::try_from(n)
                .ok()
                .and_then(NonZeroUsize::new)
                .map(SamplesPerClient::Fixed)
                .ok_or_else(|| serde::de::Error::custom("samples per client must be positive")),
            Raw::Word(w) if w.eq_ignore_ascii_case("proportional") => Ok(SamplesPerClient::Proportional),
            Raw::Word(w) => Err(serde::de::Error::custom(format!(
                "samples per client must be a positive integer or \"proportional\", got {w:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSpec {
    pub groups: Vec<ClientGroup>,
    pub beta_high: f64,
    pub beta_low: f64,
    pub samples_per_client: SamplesPerClient,
}

impl GroupSpec {
    /// Splits `clients` into `groups` consecutive blocks (the last block takes
    /// the remainder) and gives block `g` the dominant labels
    /// `g*d .. (g+1)*d`, with `d = min(dominant_per_group, max(1, labels / groups))`
    /// so dominant sets never overlap.
    pub fn even(
        clients: usize,
        labels: usize,
        groups: usize,
        dominant_per_group: usize,
        beta_high: f64,
        beta_low: f64,
    ) -> Result<Self> {
        if clients == 0 || labels == 0 || groups == 0 {
            return Err(Error::Parameter(
                "clients, labels and groups must all be positive".into(),
            ));
        }
        let groups = groups.min(clients);
        let per = clients / groups;
        let d = dominant_per_group.min((labels / groups).max(1));
        let spec = Self {
            groups: (0..groups)
                .map(|g| ClientGroup {
                    clients: if g + 1 == groups {
                        clients - per * (groups - 1)
                    } else {
                        per
                    },
                    dominant_labels: (g * d..(g + 1) * d).map(|l| l % labels).collect(),
                })
                .collect(),
            beta_high,
            beta_low,
            samples_per_client: SamplesPerClient::Proportional,
        };
        spec.validate(labels)?;
        Ok(spec)
    }

    pub fn validate(&self, labels: usize) -> Result<()> {
        if self.groups.is_empty() {
            return Err(Error::Parameter("group spec has no groups".into()));
        }
        for (g, group) in self.groups.iter().enumerate() {
            if group.clients == 0 {
                return Err(Error::Parameter(format!("group {g} has no clients")));
            }
            if let Some(l) = group.dominant_labels.iter().find(|&&l| l >= labels) {
                return Err(Error::Parameter(format!(
                    "group {g} names dominant label {l}, but there are only {labels} labels"
                )));
            }
        }
        if !(self.beta_low > 0.0 && self.beta_high > self.beta_low && self.beta_high.is_finite()) {
            return Err(Error::Parameter(format!(
                "need beta_high > beta_low > 0, got high {} and low {}",
                self.beta_high, self.beta_low
            )));
        }
        Ok(())
    }

    pub fn client_count(&self) -> usize {
        self.groups.iter().map(|g| g.clients).sum()
    }

    /// Group index of every client, in client order.
    pub fn client_groups(&self) -> Vec<usize> {
        self.groups
            .iter()
            .enumerate()
            .flat_map(|(g, group)| std::iter::repeat_n(g, group.clients))
            .collect()
    }
}

/// `beta_high` at the group's dominant labels, `beta_low` elsewhere.
pub fn concentration_vector(spec: &GroupSpec, group: usize, labels: usize) -> Result<Vec<f64>> {
    let g = spec
        .groups
        .get(group)
        .ok_or_else(|| Error::Parameter(format!("no group {group}")))?;
    let mut beta = vec![spec.beta_low; labels];
    for &l in &g.dominant_labels {
        *beta
            .get_mut(l)
            .ok_or_else(|| Error::Parameter(format!("dominant label {l} out of range")))? = spec.beta_high;
    }
    Ok(beta)
}

/// A client's target label proportions.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientLabelDistribution {
    probs: Vec<f64>,
}

impl ClientLabelDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
            return Err(Error::InvalidInput(format!("bad label distribution {probs:?}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("label distribution sums to {sum}")));
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

pub fn sample_distribution<R: Rng + ?Sized>(beta: &[f64], rng: &mut R) -> Result<ClientLabelDistribution> {
    Ok(ClientLabelDistribution {
        probs: dirichlet(rng, beta)?,
    })
}

/// One Dirichlet draw per client, in client order.
pub fn sample_client_distributions<R: Rng + ?Sized>(
    spec: &GroupSpec,
    labels: usize,
    rng: &mut R,
) -> Result<Vec<ClientLabelDistribution>> {
    spec.validate(labels)?;
    spec.client_groups()
        .into_iter()
        .map(|g| sample_distribution(&concentration_vector(spec, g, labels)?, rng))
        .collect()
}

/// Splits `total` into integer parts proportional to `weights`
/// (largest-remainder method, ties to the lowest index).
pub fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() || !(sum > 0.0) {
        return vec![0; weights.len()];
    }
    let quotas: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut parts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = parts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    if assigned <= total {
        order.sort_by(|&a, &b| {
            let fa = quotas[a] - quotas[a].floor();
            let fb = quotas[b] - quotas[b].floor();
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        for &j in order.iter().cycle().take(total - assigned) {
            parts[j] += 1;
        }
    } else {
        // Rounding pushed a floor over; take back from the smallest remainders.
        order.sort_by(|&a, &b| {
            let fa = quotas[a] - quotas[a].floor();
            let fb = quotas[b] - quotas[b].floor();
            fa.total_cmp(&fb).then(a.cmp(&b))
        });
        let mut excess = assigned - total;
        for &j in order.iter().cycle() {
            if excess == 0 {
                break;
            }
            if parts[j] > 0 {
                parts[j] -= 1;
                excess -= 1;
            }
        }
    }
    parts
}

/// Per-client sample positions plus the counts the partition aimed for.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    /// Positions into the partitioned label list, ascending, one list per client.
    pub clients: Vec<Vec<usize>>,
    /// Target per-label counts before any pool-exhaustion fallback.
    pub targets: Vec<Vec<usize>>,
    /// Samples each client received on labels outside its rounded targets.
    pub redistributed: Vec<usize>,
}

/// Assigns samples (given by their labels) to clients without replacement.
///
/// Targets are `n_i * p_i` rounded by largest remainder. A label pool that
/// cannot meet the combined demand is shared in proportion to the demands,
/// and each client's resulting deficit is refilled from labels that still
/// have supply, in proportion to its own label distribution.
pub fn partition<R: Rng + ?Sized>(
    labels: &[usize],
    num_labels: usize,
    distributions: &[ClientLabelDistribution],
    samples_per_client: SamplesPerClient,
    rng: &mut R,
) -> Result<Partition> {
    let m = distributions.len();
    if m == 0 {
        return Err(Error::Parameter("need at least one client".into()));
    }
    if let Some(d) = distributions.iter().find(|d| d.probs.len() != num_labels) {
        return Err(Error::Contract(format!(
            "client distribution over {} labels, dataset has {num_labels}",
            d.probs.len()
        )));
    }
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); num_labels];
    for (pos, &l) in labels.iter().enumerate() {
        pools
            .get_mut(l)
            .ok_or_else(|| Error::InvalidInput(format!("label {l} out of range")))?
            .push(pos);
    }
    let supply = labels.len();
    let per_client = match samples_per_client {
        SamplesPerClient::Proportional => supply / m,
        SamplesPerClient::Fixed(n) => n.get(),
    };
    let demand = per_client * m;
    if demand > supply {
        return Err(Error::Capacity { demand, supply });
    }
    if per_client == 0 {
        return Err(Error::Capacity { demand: m, supply });
    }

    let targets: Vec<Vec<usize>> = distributions.iter().map(|d| apportion(per_client, &d.probs)).collect();

    // Share over-demanded pools in proportion to demand.
    let mut alloc = targets.clone();
    let mut left: Vec<usize> = pools.iter().map(Vec::len).collect();
    for j in 0..num_labels {
        let wanted: usize = targets.iter().map(|t| t[j]).sum();
        if wanted > left[j] {
            let weights: Vec<f64> = targets.iter().map(|t| t[j] as f64).collect();
            let shares = apportion(left[j], &weights);
            for (a, s) in alloc.iter_mut().zip(shares) {
                a[j] = s;
            }
        }
        let taken: usize = alloc.iter().map(|a| a[j]).sum();
        left[j] -= taken;
    }

    let mut redistributed = vec![0; m];
    for (i, a) in alloc.iter_mut().enumerate() {
        let mut deficit = per_client - a.iter().sum::<usize>();
        while deficit > 0 {
            let open: Vec<usize> = (0..num_labels).filter(|&j| left[j] > 0).collect();
            if open.is_empty() {
                return Err(Error::Capacity { demand, supply });
            }
            let mut weights: Vec<f64> = open.iter().map(|&j| distributions[i].probs[j]).collect();
            if !(weights.iter().sum::<f64>() > 0.0) {
                weights = open.iter().map(|&j| left[j] as f64).collect();
            }
            let extra = apportion(deficit, &weights);
            for (&j, e) in open.iter().zip(extra) {
                let e = e.min(left[j]);
                a[j] += e;
                left[j] -= e;
                deficit -= e;
                redistributed[i] += e;
            }
        }
    }
    if redistributed.iter().any(|&r| r > 0) {
        log::info!(
            "label pools exhausted; redistributed {} samples across clients {:?}",
            redistributed.iter().sum::<usize>(),
            redistributed
        );
    }

    for pool in &mut pools {
        pool.shuffle(rng);
    }
    let mut cursor = vec![0; num_labels];
    let mut clients = Vec::with_capacity(m);
    for a in &alloc {
        let mut mine = Vec::with_capacity(per_client);
        for (j, &count) in a.iter().enumerate() {
            mine.extend_from_slice(&pools[j][cursor[j]..cursor[j] + count]);
            cursor[j] += count;
        }
        mine.sort_unstable();
        clients.push(mine);
    }
    Ok(Partition {
        clients,
        targets,
        redistributed,
    })
}
