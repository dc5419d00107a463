//! Monte-Carlo comparison of training strategies.
//!
//! A run re-splits the area dataset, draws fresh client label mixes and
//! partitions, initializes one network shared by every strategy, trains
//! the selected strategies and scores them. Runs are independent and are
//! spread over a worker pool; all randomness derives from the master seed
//! and the run index, so tables are byte-identical across invocations.

mod config;
mod histogram;
mod monte_carlo;
mod output;
mod run;

pub use config::{ExperimentConfig, HistogramConfig, PartitionConfig, Strategy, SweepAxis, SweepConfig};
pub use histogram::{emit_posterior_histograms, PosteriorHistogram};
pub use monte_carlo::{mean_std, rates, run_monte_carlo, sweep, MetricsRecord, RateRecord, SweepTable};
pub use output::{
    read_distributions, read_split, write_distributions, write_failures, write_histogram_bins, write_posteriors,
    write_rates, write_results, write_split, write_summary,
};
pub use run::{
    accuracy, client_test_set, client_test_sets, evaluate_run, evaluate_strategy, fused_accuracy, plan_run, run_seed,
    run_training_config, train_run, RunPlan, TrainedRun,
};
