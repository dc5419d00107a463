use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use fedfuse::data::{prepare, write_centroids, write_dataset, write_label_map, AreaDataset, RoomClustering};
use fedfuse::experiment::{
    client_test_sets, emit_posterior_histograms, evaluate_strategy, plan_run, read_distributions, read_split, run_seed,
    sweep as run_sweep, train_run, write_distributions, write_failures, write_histogram_bins, write_posteriors,
    write_rates, write_results, write_split, write_summary, RunPlan, Strategy, SweepTable,
};
use fedfuse::federation::write_round_log;
use fedfuse::nn::Checkpoint;
use fedfuse::partition::{write_manifest, ManifestRow};
use fedfuse::{ClassPrior, ExperimentConfig, MlpParams};
use sha2::{Digest, Sha256};
use toml::Table;

/// `println!` that stops quietly when stdout is closed, e.g. piped into `head`.
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

use crate::overrides;
use crate::Common;

const HISTOGRAM_BINS: usize = 20;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] fedfuse::Error),
}

impl CliError {
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Core(e) => e.category(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Core(fedfuse::Error::Config(_)) => 2,
            CliError::Core(_) => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn io_error(path: &Path, source: std::io::Error) -> CliError {
    CliError::Core(fedfuse::Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Defaults, then the config file, then each `--set` in order.
pub fn resolve_config(config: Option<&Path>, sets: &[String]) -> Result<ExperimentConfig> {
    let mut table = match config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
            toml::from_str::<Table>(&text).map_err(|e| fedfuse::Error::Config(format!("{}: {e}", path.display())))?
        }
        None => Table::new(),
    };
    for s in sets {
        overrides::apply(&mut table, s).map_err(CliError::Usage)?;
    }
    let cfg: ExperimentConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| fedfuse::Error::Config(e.to_string()))?;
    cfg.validate()?;
    if cfg.data.synthetic.is_none() {
        if let Some(path) = &cfg.data.path {
            if !path.is_file() {
                return Err(CliError::Usage(format!("dataset not found: {}", path.display())));
            }
        }
    }
    Ok(cfg)
}

struct Session {
    cfg: ExperimentConfig,
    out: PathBuf,
}

impl Session {
    fn open(common: &Common) -> Result<Self> {
        let cfg = resolve_config(common.config.as_deref(), &common.overrides)?;
        fs::create_dir_all(&common.out).map_err(|e| io_error(&common.out, e))?;
        let snapshot = common.out.join("resolved_config.toml");
        fs::write(&snapshot, cfg.to_toml()).map_err(|e| io_error(&snapshot, e))?;
        Ok(Self {
            cfg,
            out: common.out.clone(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn dataset(&self) -> Result<(AreaDataset, RoomClustering)> {
        let samples = self.cfg.data.load_floor()?;
        Ok(prepare(&samples, self.cfg.labels, self.cfg.data.cluster_seed)?)
    }

    fn plan(&self, run: usize) -> Result<(AreaDataset, RunPlan)> {
        if run >= self.cfg.runs.get() {
            log::warn!("run {run} is beyond the configured {} runs", self.cfg.runs);
        }
        let (data, _) = self.dataset()?;
        let plan = plan_run(&self.cfg, &data, run)?;
        Ok((data, plan))
    }

    fn write_plan(&self, data: &AreaDataset, plan: &RunPlan) -> Result<()> {
        write_split(&self.path("split.csv"), &plan.split)?;
        write_distributions(&self.path("distributions.csv"), &plan.distributions)?;
        let labels = data.batch.labels();
        let rows: Vec<ManifestRow> = plan
            .client_sample_indices()
            .iter()
            .enumerate()
            .flat_map(|(client_id, idx)| {
                idx.iter().map(move |&sample_index| ManifestRow {
                    client_id,
                    sample_index,
                    label: labels[sample_index],
                })
            })
            .collect();
        write_manifest(&self.path("manifest.csv"), &rows)?;
        Ok(())
    }
}

pub fn prepare_data(common: &Common) -> Result<()> {
    let s = Session::open(common)?;
    let (data, clustering) = s.dataset()?;
    write_dataset(&s.path("dataset.bin"), &data)?;
    write_label_map(&s.path("label_map.csv"), &clustering)?;
    write_centroids(&s.path("centroids.csv"), &clustering)?;
    say!(
        "{} samples, {} rooms, {} areas, {} features",
        data.len(),
        clustering.rooms.len(),
        data.labels(),
        data.feature_dim()
    );
    for (label, count) in data.batch.label_counts().iter().enumerate() {
        say!("area {label}: {count} samples");
    }
    Ok(())
}

pub fn partition(common: &Common, run: usize) -> Result<()> {
    let s = Session::open(common)?;
    let (data, plan) = s.plan(run)?;
    s.write_plan(&data, &plan)?;
    say!("train {} / test {}", plan.split.train.len(), plan.split.test.len());
    for (i, c) in plan.clients.iter().enumerate() {
        let counts: Vec<String> = c.label_counts().iter().map(|n| n.to_string()).collect();
        say!("client {i}: {} samples, per label [{}]", c.len(), counts.join(" "));
    }
    Ok(())
}

fn checkpoint_path(out: &Path, strategy: Strategy, index: usize) -> PathBuf {
    out.join("checkpoints")
        .join(format!("{}_{index}.ckpt", strategy.name().to_lowercase()))
}

pub fn train(common: &Common, run: usize) -> Result<()> {
    let s = Session::open(common)?;
    let (data, plan) = s.plan(run)?;
    s.write_plan(&data, &plan)?;
    let trained = train_run(&s.cfg, &plan);
    let dir = s.path("checkpoints");
    fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
    let mut digests = Vec::new();
    for (&strategy, models) in trained.models.iter().filter(|(s, _)| !s.is_fused()) {
        for (i, params) in models.iter().enumerate() {
            let path = checkpoint_path(&s.out, strategy, i);
            let bytes = Checkpoint {
                params: params.clone(),
                seed: plan.seed,
            }
            .to_bytes();
            fs::write(&path, &bytes).map_err(|e| io_error(&path, e))?;
            let name = path.strip_prefix(&s.out).unwrap_or(&path).display().to_string();
            digests.push((name, hex::encode(Sha256::digest(&bytes))));
        }
    }
    for (strategy, log) in &trained.round_logs {
        write_round_log(&s.path(&format!("rounds_{}.csv", strategy.name().to_lowercase())), log)?;
    }
    let digest_path = s.path("digests.csv");
    let mut text = String::from("file,sha256\n");
    for (name, hash) in &digests {
        text.push_str(&format!("{name},{hash}\n"));
        say!("{hash}  {name}");
    }
    fs::write(&digest_path, text).map_err(|e| io_error(&digest_path, e))?;
    if !trained.failures.is_empty() {
        let names: Vec<String> = trained.failures.iter().map(|(s, e)| format!("{s}: {e}")).collect();
        return Err(fedfuse::Error::InvalidState(format!("training failed for {}", names.join("; "))).into());
    }
    Ok(())
}

fn load_models(out: &Path, strategy: Strategy) -> Result<Vec<MlpParams>> {
    let mut models = Vec::new();
    while checkpoint_path(out, strategy, models.len()).is_file() {
        models.push(Checkpoint::load(&checkpoint_path(out, strategy, models.len()))?.params);
    }
    if models.is_empty() {
        return Err(CliError::Usage(format!(
            "no checkpoints for {strategy} under {}; run `train` first",
            out.join("checkpoints").display()
        )));
    }
    Ok(models)
}

pub fn evaluate(common: &Common, run: usize) -> Result<()> {
    let s = Session::open(common)?;
    let (data, _) = s.dataset()?;
    let split_path = s.path("split.csv");
    if !split_path.is_file() {
        return Err(CliError::Usage(format!(
            "{} not found; run `train` first",
            split_path.display()
        )));
    }
    let split = read_split(&split_path)?;
    let distributions = read_distributions(&s.path("distributions.csv"))?;
    let test = data.batch.select(&split.test)?;
    let client_tests = client_test_sets(run_seed(&s.cfg, run), &test, &distributions)?;
    let prior = ClassPrior::uniform(s.cfg.labels);
    let mut text = String::from("strategy,accuracy\n");
    for strategy in s.cfg.strategy_set() {
        let models = load_models(&s.out, strategy.base())?;
        let acc = evaluate_strategy(strategy, &models, &test, &client_tests, &prior)?;
        say!("{strategy:<9} {acc:.4}");
        text.push_str(&format!("{strategy},{acc}\n"));
    }
    let path = s.path("evaluation.csv");
    fs::write(&path, text).map_err(|e| io_error(&path, e))?;
    Ok(())
}

fn print_table(table: &SweepTable) {
    let axis = table.axis.map(|a| a.name()).unwrap_or("-");
    say!(
        "{:<9} {:>12} {:>8} {:>8} {:>5} {:>8}",
        "strategy",
        axis,
        "mean",
        "std",
        "runs",
        "failures"
    );
    for r in &table.records {
        let v = r.sweep_value.map(|v| v.to_string()).unwrap_or_else(|| "-".into());
        say!(
            "{:<9} {:>12} {:>8.4} {:>8.4} {:>5} {:>8}",
            r.strategy.name(),
            v,
            r.mean,
            r.std,
            r.runs.len(),
            r.failures.len()
        );
    }
    for r in &table.rates {
        say!(
            "rate {}/{} at {}: {:.4}",
            r.numerator,
            r.denominator,
            r.sweep_value,
            r.rate
        );
    }
}

pub fn sweep(common: &Common) -> Result<()> {
    let s = Session::open(common)?;
    let samples = s.cfg.data.load_floor()?;
    let table = run_sweep(&s.cfg, &samples)?;
    write_results(&s.path("results.csv"), &table)?;
    write_summary(&s.path("summary.csv"), &table)?;
    write_failures(&s.path("failures.csv"), &table)?;
    write_rates(&s.path("rates.csv"), &table)?;
    print_table(&table);
    if table.records.iter().all(|r| r.runs.is_empty()) {
        return Err(fedfuse::Error::InvalidState("every run failed; see failures.csv".into()).into());
    }
    Ok(())
}

pub fn histograms(common: &Common, run: usize) -> Result<()> {
    let mut s = Session::open(common)?;
    let strategy = s.cfg.histograms.strategy.base();
    s.cfg.strategies = vec![strategy];
    let (_, plan) = s.plan(run)?;
    let mut trained = train_run(&s.cfg, &plan);
    if let Some(e) = trained.failures.remove(&strategy) {
        return Err(fedfuse::Error::InvalidState(format!("{strategy} training failed: {e}")).into());
    }
    let models = &trained.models[&strategy];
    let target = s.cfg.histograms.target_label;
    let h = emit_posterior_histograms(models, &plan.test, target, &ClassPrior::uniform(s.cfg.labels))?;
    write_posteriors(&s.path("posteriors.csv"), &h)?;
    write_histogram_bins(&s.path("histogram.csv"), &h, HISTOGRAM_BINS)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let before: Vec<f64> = h.per_model.iter().flatten().copied().collect();
    say!(
        "label {target}: {} test samples, {} models, mean p before fusion {:.4}, after {:.4}",
        h.samples.len(),
        models.len(),
        mean(&before),
        mean(&h.fused)
    );
    Ok(())
}
