mod common;

use std::num::NonZeroUsize;

use fedfuse::experiment::{
    client_test_set, emit_posterior_histograms, evaluate_run, evaluate_strategy, mean_std, plan_run, run_monte_carlo,
    sweep, train_run, write_results, write_summary, SweepAxis, SweepConfig,
};
use fedfuse::seed;
use fedfuse::{ClassPrior, ClientLabelDistribution, ExperimentConfig, Strategy};

use common::{tiny_config, tiny_dataset};

#[test]
fn monte_carlo_is_reproducible_and_schedule_free() {
    let cfg = tiny_config();
    let data = tiny_dataset(&cfg);
    let a = run_monte_carlo(&cfg, &data, None).unwrap();
    let serial = ExperimentConfig {
        workers: 1,
        ..cfg.clone()
    };
    let b = run_monte_carlo(&serial, &data, None).unwrap();
    assert_eq!(a, b);
}

#[test]
fn record_means_are_hand_averages() {
    let cfg = tiny_config();
    let data = tiny_dataset(&cfg);
    let records = run_monte_carlo(&cfg, &data, None).unwrap();
    assert_eq!(records.len(), 6);
    for r in &records {
        assert!(r.failures.is_empty(), "{:?}", r.failures);
        assert_eq!(r.runs, vec![0, 1, 2]);
        let mean = (r.accuracies[0] + r.accuracies[1] + r.accuracies[2]) / 3.0;
        let var = r.accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / 2.0;
        assert!((r.mean - mean).abs() < 1e-15);
        assert!((r.std - var.sqrt()).abs() < 1e-15);
        assert!(r.accuracies.iter().all(|a| (0.0..=1.0).contains(a)));
    }
    assert_eq!(mean_std(&[2.0, 4.0]), (3.0, 2f64.sqrt()));
}

#[test]
fn single_point_sweep_equals_one_monte_carlo_batch() {
    let mut cfg = tiny_config();
    cfg.runs = NonZeroUsize::new(2).unwrap();
    cfg.sweep = Some(SweepConfig {
        axis: SweepAxis::Sigma,
        values: vec![20.0],
    });
    let samples = cfg.data.load_floor().unwrap();
    let table = sweep(&cfg, &samples).unwrap();
    let direct = run_monte_carlo(&cfg, &tiny_dataset(&cfg), Some(20.0)).unwrap();
    assert_eq!(table.records, direct);
    assert_eq!(table.rates.len(), 2);
}

#[test]
fn lambda_sweep_yields_one_record_per_value_and_strategy() {
    let mut cfg = tiny_config();
    cfg.runs = NonZeroUsize::new(1).unwrap();
    cfg.strategies = vec![Strategy::Gm, Strategy::FedAvg, Strategy::FedAmpFused];
    let values = vec![0.001, 0.01, 0.1, 1.0, 10.0];
    cfg.sweep = Some(SweepConfig {
        axis: SweepAxis::LambdaTilde,
        values: values.clone(),
    });
    let table = sweep(&cfg, &cfg.data.load_floor().unwrap()).unwrap();
    for s in &cfg.strategies {
        let got: Vec<f64> = table
            .records
            .iter()
            .filter(|r| r.strategy == *s)
            .map(|r| r.sweep_value.unwrap())
            .collect();
        assert_eq!(got, values);
    }
    assert_eq!(table.rates.len(), 10);
    for rate in &table.rates {
        let mean = |s: Strategy| {
            table
                .records
                .iter()
                .find(|r| r.strategy == s && r.sweep_value == Some(rate.sweep_value))
                .unwrap()
                .mean
        };
        assert_eq!(rate.rate, mean(rate.numerator) / mean(rate.denominator));
    }
}

#[test]
fn label_sweep_reclusters_per_value() {
    let mut cfg = tiny_config();
    cfg.runs = NonZeroUsize::new(1).unwrap();
    cfg.strategies = vec![Strategy::Lm];
    cfg.sweep = Some(SweepConfig {
        axis: SweepAxis::Labels,
        values: vec![3.0, 5.0],
    });
    let table = sweep(&cfg, &cfg.data.load_floor().unwrap()).unwrap();
    assert_eq!(table.records.len(), 2);
    assert!(table.rates.is_empty());
}

#[test]
fn fused_strategies_reuse_their_base_models() {
    let cfg = tiny_config();
    let data = tiny_dataset(&cfg);
    let plan = plan_run(&cfg, &data, 0).unwrap();
    let trained = train_run(&cfg, &plan);
    assert!(trained.failures.is_empty());
    assert_eq!(trained.models[&Strategy::LmFused], trained.models[&Strategy::Lm]);
    assert_eq!(
        trained.models[&Strategy::FedAmpFused],
        trained.models[&Strategy::FedAmp]
    );
    assert_eq!(trained.models[&Strategy::Gm].len(), 1);
    assert_eq!(trained.models[&Strategy::Lm].len(), cfg.clients);
    let scores = evaluate_run(&cfg, &plan, &trained);
    let prior = ClassPrior::uniform(cfg.labels);
    for s in Strategy::ALL {
        let direct = evaluate_strategy(s, &trained.models[&s.base()], &plan.test, &plan.client_tests, &prior).unwrap();
        assert_eq!(scores[&s].as_ref().unwrap(), &direct);
    }
}

#[test]
fn run_plans_are_consistent() {
    let cfg = tiny_config();
    let data = tiny_dataset(&cfg);
    let plan = plan_run(&cfg, &data, 1).unwrap();
    assert_eq!(
        plan_run(&cfg, &data, 1).unwrap().client_sample_indices(),
        plan.client_sample_indices()
    );
    let mut seen = std::collections::BTreeSet::new();
    for (idx, batch) in plan.client_sample_indices().iter().zip(&plan.clients) {
        assert_eq!(idx.len(), batch.len());
        for i in idx {
            assert!(plan.split.train.binary_search(i).is_ok());
            assert!(seen.insert(*i));
        }
    }
    assert_eq!(plan.client_tests.len(), cfg.clients);
    assert!(plan.client_tests.iter().all(|t| t.len() == plan.test.len()));
    assert_ne!(plan_run(&cfg, &data, 2).unwrap().split, plan.split);
}

#[test]
fn client_test_sets_follow_the_client_mix() {
    let cfg = tiny_config();
    let plan = plan_run(&cfg, &tiny_dataset(&cfg), 0).unwrap();
    let only_one = ClientLabelDistribution::new(vec![0.0, 1.0, 0.0, 0.0]).unwrap();
    let t = client_test_set(&plan.test, only_one.probs(), 50, &mut seed::rng(1)).unwrap();
    assert_eq!(t.len(), 50);
    assert!(t.labels().iter().all(|&l| l == 1));
}

#[test]
fn gm_beats_average_lm_on_iid_clients() {
    let mut cfg = tiny_config();
    cfg.strategies = vec![Strategy::Gm, Strategy::Lm];
    cfg.partition.beta_high = 1e6 + 1.0;
    cfg.partition.beta_low = 1e6;
    cfg.federation.rounds = NonZeroUsize::new(20).unwrap();
    let records = run_monte_carlo(&cfg, &tiny_dataset(&cfg), None).unwrap();
    let mean = |s: Strategy| records.iter().find(|r| r.strategy == s).unwrap().mean;
    assert!(
        mean(Strategy::Gm) >= mean(Strategy::Lm),
        "GM {} vs LM {}",
        mean(Strategy::Gm),
        mean(Strategy::Lm)
    );
}

#[test]
fn posterior_histograms_cover_the_target_rows() {
    let mut cfg = tiny_config();
    cfg.strategies = vec![Strategy::FedAmp];
    let data = tiny_dataset(&cfg);
    let plan = plan_run(&cfg, &data, 0).unwrap();
    let trained = train_run(&cfg, &plan);
    let models = &trained.models[&Strategy::FedAmp];
    let h = emit_posterior_histograms(models, &plan.test, 2, &ClassPrior::uniform(4)).unwrap();
    let rows = plan.test.labels().iter().filter(|&&l| l == 2).count();
    assert_eq!(h.samples.len(), rows);
    assert_eq!(h.per_model.len(), cfg.clients);
    let (before, after) = h.bin_counts(10);
    assert_eq!(before.iter().sum::<usize>(), rows * cfg.clients);
    assert_eq!(after.iter().sum::<usize>(), rows);
    assert!(emit_posterior_histograms(models, &plan.test, 9, &ClassPrior::uniform(4)).is_err());
}

#[test]
fn result_tables_are_byte_identical_across_invocations() {
    let mut cfg = tiny_config();
    cfg.runs = NonZeroUsize::new(2).unwrap();
    let samples = cfg.data.load_floor().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for k in 0..2 {
        let table = sweep(&cfg, &samples).unwrap();
        let results = dir.path().join(format!("results{k}.csv"));
        let summary = dir.path().join(format!("summary{k}.csv"));
        write_results(&results, &table).unwrap();
        write_summary(&summary, &table).unwrap();
        bytes.push((std::fs::read(results).unwrap(), std::fs::read(summary).unwrap()));
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn config_round_trips_through_toml() {
    let mut cfg = tiny_config();
    cfg.sweep = Some(SweepConfig {
        axis: SweepAxis::Clients,
        values: vec![4.0, 6.0, 8.0],
    });
    assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    let err = ExperimentConfig::from_toml("labels = 10\nbogus = 1\n[data]\npath = \"x.csv\"\n").unwrap_err();
    assert_eq!(err.category(), "config");
    assert!(ExperimentConfig::from_toml("labels = 10\n").is_err());
}

#[test]
fn strategy_names_round_trip() {
    for s in Strategy::ALL {
        assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
    }
    assert_eq!(Strategy::FedAmpFused.name(), "FEDAMP-F");
    assert!("FEDPROX".parse::<Strategy>().is_err());
}

#[test]
fn example_config_spells_out_the_defaults() {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/example.toml")).unwrap();
    let cfg = ExperimentConfig::from_toml(&text).unwrap();
    let mut want = ExperimentConfig::default();
    want.data.path = Some("data/trainingData.csv".into());
    assert_eq!(cfg, want);
}

mod config {
    use fedfuse::experiment::*;
    use fedfuse::partition::ClientGroup;
    use fedfuse::Error;

    #[test]
    fn defaults_round_trip_through_toml() {
        let mut cfg = ExperimentConfig::default();
        cfg.data.synthetic = Some(Default::default());
        let text = cfg.to_toml();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::from_toml("[data]\nsynthetic = {}\n[federation]\nsigmaa = 3\n").unwrap_err();
        assert!(matches!(err, Error::Config(m) if m.contains("sigmaa")));
    }

    #[test]
    fn strategy_names_parse() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert!("FEDPROX".parse::<Strategy>().is_err());
        let cfg = ExperimentConfig::from_toml("strategies = [\"LM-F\", \"GM\"]\n[data]\nsynthetic = {}\n").unwrap();
        assert_eq!(cfg.strategy_set(), vec![Strategy::Gm, Strategy::LmFused]);
    }

    #[test]
    fn sweep_values_are_checked() {
        let base = "[data]\nsynthetic = {}\n[sweep]\naxis = \"labels\"\n";
        assert!(ExperimentConfig::from_toml(&format!("{base}values = [5, 10]\n")).is_ok());
        assert!(ExperimentConfig::from_toml(&format!("{base}values = [2.5]\n")).is_err());
        assert!(ExperimentConfig::from_toml(&format!("{base}values = []\n")).is_err());
    }

    #[test]
    fn layout_must_cover_every_client() {
        let p = PartitionConfig {
            layout: Some(vec![ClientGroup {
                clients: 2,
                dominant_labels: vec![0],
            }]),
            ..Default::default()
        };
        assert!(p.group_spec(2, 4).is_ok());
        assert!(p.group_spec(3, 4).is_err());
    }

    #[test]
    fn even_layout_matches_reference_setting() {
        let spec = PartitionConfig::default().group_spec(6, 10).unwrap();
        let dominant: Vec<Vec<usize>> = spec.groups.iter().map(|g| g.dominant_labels.clone()).collect();
        assert_eq!(dominant, vec![vec![0, 1, 2], vec![3, 4, 5], vec![6, 7, 8]]);
        assert!(spec.groups.iter().all(|g| g.clients == 2));
    }
}

mod histogram {
    use fedfuse::experiment::*;
    use fedfuse::nn::Architecture;
    use fedfuse::{ClassPrior, Error, LabeledBatch, MlpParams};

    fn batch() -> LabeledBatch {
        LabeledBatch::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]], vec![0, 1, 0], 2).unwrap()
    }

    #[test]
    fn single_model_is_unchanged_by_fusion() {
        let arch = Architecture::new(vec![2, 3, 2]).unwrap();
        let m = MlpParams::init(&arch, 4);
        let h = emit_posterior_histograms(&[m], &batch(), 0, &ClassPrior::uniform(2)).unwrap();
        assert_eq!(h.samples, vec![0, 2]);
        assert_eq!(h.per_model[0], h.fused);
    }

    #[test]
    fn agreeing_models_sharpen() {
        // Both models put 0.8 on label 0 for every input.
        let arch = Architecture::new(vec![2, 2]).unwrap();
        let m = MlpParams::unflatten(&[0.0, 0.0, 0.0, 0.0, 4f64.ln(), 0.0], &arch).unwrap();
        let h = emit_posterior_histograms(&[m.clone(), m], &batch(), 0, &ClassPrior::uniform(2)).unwrap();
        for (&before, &after) in h.per_model[0].iter().zip(&h.fused) {
            assert!((before - 0.8).abs() < 1e-12);
            // 0.64 / (0.64 + 0.04)
            assert!((after - 16.0 / 17.0).abs() < 1e-12);
        }
        let (b, a) = h.bin_counts(6);
        assert_eq!(b[4], 4);
        assert_eq!(a[5], 2);
    }

    #[test]
    fn empty_selection_is_an_error() {
        let arch = Architecture::new(vec![2, 3]).unwrap();
        let m = MlpParams::zeros(&arch);
        let err = emit_posterior_histograms(std::slice::from_ref(&m), &batch(), 2, &ClassPrior::uniform(3));
        assert!(err.is_err());
        let b = LabeledBatch::from_rows(&[vec![1.0, 0.0]], vec![0], 3).unwrap();
        assert!(matches!(
            emit_posterior_histograms(&[m], &b, 1, &ClassPrior::uniform(3)),
            Err(Error::EmptySelection(_))
        ));
    }
}

mod monte_carlo {
    use fedfuse::experiment::*;

    #[test]
    fn mean_std_by_hand() {
        let (m, s) = mean_std(&[0.5, 0.75, 1.0]);
        assert!((m - 0.75).abs() < 1e-15);
        assert!((s - 0.25).abs() < 1e-15);
        assert_eq!(mean_std(&[0.3]), (0.3, 0.0));
        assert!(mean_std(&[]).0.is_nan());
    }

    #[test]
    fn record_separates_failures() {
        let r = MetricsRecord::new(
            Strategy::Lm,
            None,
            vec![(0, Ok(0.5)), (1, Err("diverged".into())), (2, Ok(1.0))],
        );
        assert_eq!(r.runs, vec![0, 2]);
        assert_eq!(r.mean, 0.75);
        assert_eq!(r.failures, vec![(1, "diverged".to_string())]);
    }

    #[test]
    fn rate_of_equal_means_is_one() {
        let rec = |s, mean| MetricsRecord {
            strategy: s,
            sweep_value: Some(0.1),
            runs: vec![0],
            accuracies: vec![mean],
            mean,
            std: 0.0,
            failures: vec![],
        };
        let r = rates(&[rec(Strategy::Gm, 0.8), rec(Strategy::FedAmpFused, 0.8)], &[0.1]);
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].rate, 1.0);
        assert_eq!(r[0].denominator, Strategy::Gm);
    }
}

mod output {
    use fedfuse::data::Split;

    use fedfuse::experiment::*;
    use fedfuse::ClientLabelDistribution;

    #[test]
    fn distributions_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        let d = vec![
            ClientLabelDistribution::new(vec![0.1, 0.2, 0.7]).unwrap(),
            ClientLabelDistribution::new(vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]).unwrap(),
        ];
        write_distributions(&p, &d).unwrap();
        assert_eq!(read_distributions(&p).unwrap(), d);
    }

    #[test]
    fn split_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let s = Split {
            train: vec![0, 2, 3],
            test: vec![1, 4],
        };
        write_split(&p, &s).unwrap();
        assert_eq!(read_split(&p).unwrap(), s);
    }
}

mod run {
    use fedfuse::experiment::*;
    use fedfuse::nn::Architecture;
    use fedfuse::{seed, ClassPrior, Error, LabeledBatch, MlpParams};

    fn expert_fixture() -> (Vec<MlpParams>, LabeledBatch) {
        // Two inputs, two labels. Model 0 is confident on label 0 and leans
        // weakly towards label 0 everywhere else; model 1 mirrors it.
        let arch = Architecture::new(vec![2, 2]).unwrap();
        let m0 = MlpParams::unflatten(&[4.0, 0.0, 0.0, 0.0, 0.1, 0.0], &arch).unwrap();
        let m1 = MlpParams::unflatten(&[0.0, 0.0, 0.0, 4.0, 0.0, 0.1], &arch).unwrap();
        let batch = LabeledBatch::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]], vec![0, 1], 2).unwrap();
        (vec![m0, m1], batch)
    }

    #[test]
    fn fused_experts_beat_each_expert() {
        let (models, batch) = expert_fixture();
        let prior = ClassPrior::uniform(2);
        assert_eq!(fused_accuracy(&models, &batch, &prior).unwrap(), 1.0);
        let tests = vec![batch.clone(), batch.clone()];
        let local = evaluate_strategy(Strategy::Lm, &models, &batch, &tests, &prior).unwrap();
        assert_eq!(local, 0.5);
        assert_eq!(
            evaluate_strategy(Strategy::LmFused, &models, &batch, &tests, &prior).unwrap(),
            1.0
        );
    }

    #[test]
    fn zero_network_hits_label_zero_share() {
        let arch = Architecture::new(vec![3, 4, 10]).unwrap();
        let zero = MlpParams::zeros(&arch);
        let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64 / 50.0, 0.5, 0.0]).collect();
        let labels: Vec<usize> = (0..50).map(|i| i % 10).collect();
        let share = labels.iter().filter(|&&l| l == 0).count() as f64 / 50.0;
        let batch = LabeledBatch::from_rows(&rows, labels, 10).unwrap();
        let prior = ClassPrior::uniform(10);
        assert_eq!(
            evaluate_strategy(Strategy::Gm, std::slice::from_ref(&zero), &batch, &[], &prior).unwrap(),
            share
        );
        assert_eq!(fused_accuracy(&[zero.clone(), zero], &batch, &prior).unwrap(), share);
    }

    #[test]
    fn perfect_classifier_scores_one() {
        let (models, batch) = expert_fixture();
        let only_label_zero = batch.select(&[0]).unwrap();
        assert_eq!(accuracy(&models[0], &only_label_zero).unwrap(), 1.0);
    }

    #[test]
    fn client_test_set_follows_distribution() {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64]).collect();
        let labels: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let test = LabeledBatch::from_rows(&rows, labels, 3).unwrap();
        let mut rng = seed::rng(3);
        let t = client_test_set(&test, &[0.0, 1.0, 0.0], 40, &mut rng).unwrap();
        assert_eq!(t.len(), 40);
        assert!(t.labels().iter().all(|&l| l == 1));
        let t = client_test_set(&test, &[0.5, 0.0, 0.5], 4000, &mut rng).unwrap();
        let zeros = t.labels().iter().filter(|&&l| l == 0).count() as f64 / 4000.0;
        assert!((zeros - 0.5).abs() < 0.05);
        assert!(matches!(
            client_test_set(&test.select(&[0]).unwrap(), &[0.0, 1.0, 0.0], 5, &mut rng),
            Err(Error::Evaluation(_))
        ));
    }

    #[test]
    fn missing_or_mismatched_models_are_errors() {
        let (models, batch) = expert_fixture();
        let prior = ClassPrior::uniform(2);
        assert!(evaluate_strategy(Strategy::Lm, &models, &batch, &[], &prior).is_err());
        assert!(evaluate_strategy(Strategy::Gm, &models, &batch, &[], &prior).is_err());
        assert!(matches!(
            evaluate_strategy(Strategy::Gm, &[], &batch, &[], &prior),
            Err(Error::Evaluation(_))
        ));
    }
}

mod seed_module {
    use fedfuse::seed::*;

    #[test]
    fn derive_depends_on_every_component() {
        let a = derive(7, &[1, 2]);
        assert_ne!(a, derive(7, &[2, 1]));
        assert_ne!(a, derive(8, &[1, 2]));
        assert_ne!(a, derive(7, &[1, 2, 0]));
        assert_eq!(a, derive(7, &[1, 2]));
    }
}
