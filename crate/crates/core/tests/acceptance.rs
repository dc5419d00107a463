//! Acceptance checks, one line per criterion.
//!
//! Criteria that need the UJIIndoorLoc training CSV look for it in
//! `FEDFUSE_UJI_CSV`, then `data/trainingData.csv` at the workspace root,
//! and report NOT RUN when neither exists.

mod common;

use std::num::NonZeroUsize;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use fedfuse::data::load_ujiindoorloc;
use fedfuse::experiment::{sweep, write_failures, write_rates, write_results, write_summary, SweepAxis, SweepConfig};
use fedfuse::federation::{amp_prox_centers, amp_similarity, fedavg_aggregate, run_fedamp, train_lm, Kernel};
use fedfuse::fusion::fuse;
use fedfuse::nn::{loss_and_gradient, objective, Architecture, TrainingConfig};
use fedfuse::partition::dirichlet;
use fedfuse::{
    CategoricalPosterior, ClassPrior, ClientState, ExperimentConfig, FederationConfig, LabeledBatch, MlpParams,
    Strategy,
};
use rand::seq::SliceRandom;
use rand::Rng;

use common::{random_arch, random_batch, random_params, rng, tiny_config};

enum Outcome {
    Pass(String),
    Fail(String),
    NotRun(String),
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn dataset_path() -> Option<PathBuf> {
    let candidates = [
        std::env::var_os("FEDFUSE_UJI_CSV").map(PathBuf::from),
        Some(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/trainingData.csv")),
    ];
    candidates.into_iter().flatten().find(|p| p.is_file())
}

fn gradient_correctness() -> Outcome {
    let mut worst: f64 = 0.0;
    for net in 0..100u64 {
        let mut r = rng(0xACC1 + net);
        let arch = random_arch(&mut r);
        let params = random_params(&arch, &mut r);
        let center = random_params(&arch, &mut r);
        let batch = random_batch(&arch, 6, &mut r);
        let weight = r.random_range(0.1..2.0);
        for prox in [None, Some(&center)] {
            let (_, grad) = loss_and_gradient(&params, &batch, prox, weight).unwrap();
            let flat = params.flatten();
            let g = grad.flatten();
            for k in 0..flat.len() {
                let h = 1e-5;
                let mut plus = flat.clone();
                let mut minus = flat.clone();
                plus[k] += h;
                minus[k] -= h;
                let f = |v: &[f64]| objective(&MlpParams::unflatten(v, &arch).unwrap(), &batch, prox, weight).unwrap();
                let numeric = (f(&plus) - f(&minus)) / (2.0 * h);
                let scale = g[k].abs().max(numeric.abs()).max(1e-6);
                worst = worst.max((g[k] - numeric).abs() / scale);
            }
        }
    }
    check(
        worst < 1e-4,
        format!("100 nets with and without prox, max relative error {worst:.2e}"),
    )
}

fn direct_product(ps: &[Vec<f64>], prior: &[f64]) -> Vec<f64> {
    let mut out = prior.to_vec();
    for p in ps {
        for j in 0..out.len() {
            out[j] *= p[j] / prior[j];
        }
    }
    let s: f64 = out.iter().sum();
    out.iter().map(|v| v / s).collect()
}

fn random_simplex<R: Rng>(r: &mut R, n: usize, low: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| r.random_range(low..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

fn fusion_oracle() -> Outcome {
    let mut r = rng(0xACC2);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let labels = r.random_range(2..=15);
        let m = r.random_range(1..=8);
        let ps: Vec<Vec<f64>> = (0..m).map(|_| random_simplex(&mut r, labels, 1e-3)).collect();
        let prior = random_simplex(&mut r, labels, 0.05);
        let want = direct_product(&ps, &prior);
        let posts: Vec<_> = ps
            .iter()
            .map(|p| CategoricalPosterior::new(p.clone()).unwrap())
            .collect();
        let got = fuse(&posts, &ClassPrior::new(prior).unwrap()).unwrap();
        for (g, w) in got.probs().iter().zip(&want) {
            worst = worst.max((g - w).abs() / w);
        }
    }
    let two = fuse(
        &[
            CategoricalPosterior::new(vec![0.8, 0.2]).unwrap(),
            CategoricalPosterior::new(vec![0.6, 0.4]).unwrap(),
        ],
        &ClassPrior::uniform(2),
    )
    .unwrap();
    let example_err = (two.probs()[0] - 6.0 / 7.0)
        .abs()
        .max((two.probs()[1] - 1.0 / 7.0).abs());
    check(
        worst < 1e-10 && example_err <= f64::EPSILON,
        format!("10^4 cases max relative error {worst:.2e}; (0.8,0.2)x(0.6,0.4) off (6/7,1/7) by {example_err:.1e}"),
    )
}

fn clients_with_random_params(seed: u64, m: usize) -> Vec<ClientState> {
    let mut r = rng(seed);
    let arch = Architecture::new(vec![5, 4, 3]).unwrap();
    (0..m)
        .map(|id| ClientState {
            id,
            params: random_params(&arch, &mut r),
            data: random_batch(&arch, r.random_range(1..20), &mut r),
        })
        .collect()
}

fn aggregation_algebra() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut order_ok = true;
    for case in 0..100u64 {
        let clients = clients_with_random_params(0xACC3 + case, 1 + case as usize % 7);
        let total: usize = clients.iter().map(|c| c.sample_count()).sum();
        let mut want = vec![0.0; clients[0].params.param_count()];
        for c in &clients {
            for (a, v) in want.iter_mut().zip(c.params.flatten()) {
                *a += c.sample_count() as f64 / total as f64 * v;
            }
        }
        let got = fedavg_aggregate(&clients).unwrap();
        for (g, w) in got.flatten().iter().zip(&want) {
            worst = worst.max((g - w).abs());
        }
        let mut shuffled = clients.clone();
        shuffled.shuffle(&mut rng(case));
        order_ok &= fedavg_aggregate(&shuffled).unwrap() == got;
    }
    let arch = Architecture::new(vec![1, 1]).unwrap();
    let scalar = |id: usize, n: usize, v: f64| ClientState {
        id,
        params: MlpParams::unflatten(&[v, 0.0], &arch).unwrap(),
        data: LabeledBatch::new(vec![0.0; n], vec![0; n], 1, 1).unwrap(),
    };
    let five = fedavg_aggregate(&[scalar(0, 1, 2.0), scalar(1, 2, 5.0), scalar(2, 3, 6.0)])
        .unwrap()
        .flatten()[0];
    check(
        worst < 1e-12 && order_ok && (five - 5.0).abs() < 1e-12,
        format!("max deviation {worst:.1e}, 100 shuffles invariant: {order_ok}, N=(1,2,3) scalar case {five}"),
    )
}

fn fedamp_invariants() -> Outcome {
    let mut row_err: f64 = 0.0;
    let mut negative = false;
    let mut asymmetric = false;
    let mut outside = false;
    for case in 0..200u64 {
        let mut r = rng(0xACC4 + case);
        let m = r.random_range(1..=8);
        let params: Vec<_> = clients_with_random_params(case, m)
            .into_iter()
            .map(|c| c.params)
            .collect();
        let sigma = r.random_range(0.1..40.0);
        let alpha = r.random_range(0.1..4.0);
        let xi = amp_similarity(&params, sigma, alpha, Kernel::GaussianSaturating).unwrap();
        for i in 0..m {
            row_err = row_err.max((xi.row(i).iter().sum::<f64>() - 1.0).abs());
            negative |= xi.row(i).iter().any(|v| *v < 0.0);
            for j in 0..m {
                asymmetric |= i != j && xi.get(i, j) != xi.get(j, i);
            }
        }
        let flats: Vec<Vec<f64>> = params.iter().map(|p| p.flatten()).collect();
        for u in amp_prox_centers(&params, &xi).unwrap() {
            for (k, v) in u.flatten().iter().enumerate() {
                let lo = flats.iter().map(|f| f[k]).fold(f64::INFINITY, f64::min);
                let hi = flats.iter().map(|f| f[k]).fold(f64::NEG_INFINITY, f64::max);
                outside |= *v < lo || *v > hi;
            }
        }
    }
    let clients = clients_with_random_params(0xACC5, 5);
    let fed = FederationConfig {
        rounds: NonZeroUsize::new(4).unwrap(),
        lambda_tilde: 0.0,
        ..FederationConfig::default()
    };
    let training = TrainingConfig::default().with_seed(17);
    let amp = run_fedamp(&clients, &fed, &training).unwrap().models;
    let lm = train_lm(&clients, &fed, &training).unwrap();
    let bitwise = amp.iter().zip(&lm).all(|(a, b)| {
        a.flatten()
            .iter()
            .map(|v| v.to_bits())
            .eq(b.flatten().iter().map(|v| v.to_bits()))
    });
    check(
        row_err <= 1e-12 && !negative && !asymmetric && !outside && bitwise,
        format!(
            "200 cases: row-sum error {row_err:.1e}, negative {negative}, asymmetric {asymmetric}, \
             outside hull {outside}; lambda 0 equals local training bitwise: {bitwise}"
        ),
    )
}

fn partitioner_statistics() -> Outcome {
    let mut beta = vec![20.0; 10];
    beta[..3].fill(80.0);
    let mut r = rng(0xACC6);
    let draws = 100_000;
    let mut sums = [0.0; 10];
    for _ in 0..draws {
        for (s, v) in sums.iter_mut().zip(dirichlet(&mut r, &beta).unwrap()) {
            *s += v;
        }
    }
    let means: Vec<f64> = sums.iter().map(|s| s / draws as f64).collect();
    let worst = means
        .iter()
        .zip(&beta)
        .map(|(m, b)| (m - b / 380.0).abs())
        .fold(0.0, f64::max);
    check(
        worst < 0.01,
        format!(
            "dominant mean {:.4} (target 0.2105), other {:.4} (target 0.0526), max deviation {worst:.4}",
            means[0], means[9]
        ),
    )
}

fn real_config(path: &std::path::Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.data.path = Some(path.to_path_buf());
    cfg
}

fn mean_of(records: &[fedfuse::MetricsRecord], s: Strategy, v: Option<f64>) -> f64 {
    records
        .iter()
        .find(|r| r.strategy == s && r.sweep_value == v)
        .map_or(f64::NAN, |r| r.mean)
}

fn trend_reproduction(path: Option<&std::path::Path>) -> Outcome {
    let Some(path) = path else {
        return Outcome::NotRun("UJIIndoorLoc training CSV not found".into());
    };
    let cfg = real_config(path);
    let table = match cfg.data.load_floor().and_then(|s| sweep(&cfg, &s)) {
        Ok(t) => t,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let m = |s| mean_of(&table.records, s, None);
    let (amp_f, amp, lm_f, lm, avg) = (
        m(Strategy::FedAmpFused),
        m(Strategy::FedAmp),
        m(Strategy::LmFused),
        m(Strategy::Lm),
        m(Strategy::FedAvg),
    );
    check(
        amp_f > amp && lm_f > lm && amp_f >= avg && lm_f - lm > 0.10,
        format!(
            "FEDAMP-F {amp_f:.4} FEDAMP {amp:.4} FEDAVG {avg:.4} LM-F {lm_f:.4} LM {lm:.4} GM {:.4}",
            m(Strategy::Gm)
        ),
    )
}

/// Non-increasing with at most one rise, of at most one percentage point.
fn non_increasing(values: &[f64]) -> bool {
    let rises: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).filter(|d| *d > 0.0).collect();
    rises.is_empty() || (rises.len() == 1 && rises[0] <= 0.01)
}

fn sweep_trends(path: Option<&std::path::Path>) -> Outcome {
    let Some(path) = path else {
        return Outcome::NotRun("UJIIndoorLoc training CSV not found".into());
    };
    let mut cfg = real_config(path);
    cfg.runs = NonZeroUsize::new(5).unwrap();
    let samples = match cfg.data.load_floor() {
        Ok(s) => s,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let mut detail = Vec::new();
    let mut ok = true;
    let labels = [5.0, 10.0, 15.0];
    cfg.sweep = Some(SweepConfig {
        axis: SweepAxis::Labels,
        values: labels.to_vec(),
    });
    match sweep(&cfg, &samples) {
        Ok(t) => {
            for s in Strategy::ALL {
                let means: Vec<f64> = labels.iter().map(|&l| mean_of(&t.records, s, Some(l))).collect();
                ok &= non_increasing(&means);
                detail.push(format!("{s} over L {means:.3?}"));
            }
        }
        Err(e) => return Outcome::Fail(e.to_string()),
    }
    let clients = [4.0, 6.0, 8.0];
    cfg.strategies = vec![Strategy::Lm];
    cfg.sweep = Some(SweepConfig {
        axis: SweepAxis::Clients,
        values: clients.to_vec(),
    });
    match sweep(&cfg, &samples) {
        Ok(t) => {
            let means: Vec<f64> = clients
                .iter()
                .map(|&c| mean_of(&t.records, Strategy::Lm, Some(c)))
                .collect();
            ok &= non_increasing(&means);
            detail.push(format!("LM over M {means:.3?}"));
        }
        Err(e) => return Outcome::Fail(e.to_string()),
    }
    check(ok, detail.join("; "))
}

fn determinism() -> Outcome {
    let mut cfg = tiny_config();
    cfg.runs = NonZeroUsize::new(2).unwrap();
    cfg.sweep = Some(SweepConfig {
        axis: SweepAxis::LambdaTilde,
        values: vec![0.1, 1.0],
    });
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(k.to_string());
        std::fs::create_dir(&out).unwrap();
        let table = sweep(&cfg, &cfg.data.load_floor().unwrap()).unwrap();
        write_results(&out.join("results.csv"), &table).unwrap();
        write_summary(&out.join("summary.csv"), &table).unwrap();
        write_failures(&out.join("failures.csv"), &table).unwrap();
        write_rates(&out.join("rates.csv"), &table).unwrap();
        let files: Vec<Vec<u8>> = ["results.csv", "summary.csv", "failures.csv", "rates.csv"]
            .iter()
            .map(|f| std::fs::read(out.join(f)).unwrap())
            .collect();
        outputs.push(files);
    }
    let same = outputs[0] == outputs[1];
    let rows = String::from_utf8_lossy(&outputs[0][0]).lines().count() - 1;
    check(
        same,
        format!("two lambda sweeps, {rows} result rows, 4 CSVs byte-identical: {same}"),
    )
}

fn ingestion(path: Option<&std::path::Path>) -> Outcome {
    let Some(path) = path else {
        return Outcome::NotRun(
            "UJIIndoorLoc training CSV not found; the rest of the suite runs on synthetic fixtures".into(),
        );
    };
    match load_ujiindoorloc(path) {
        Ok(rows) => check(
            rows.len() == 19937,
            format!("{} rows in {}", rows.len(), path.display()),
        ),
        Err(e) => Outcome::Fail(e.to_string()),
    }
}

type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;

fn main() -> ExitCode {
    let data = dataset_path();
    let data = data.as_deref();
    let criteria: Vec<(&str, Check)> = vec![
        ("1 gradient correctness", Box::new(gradient_correctness)),
        ("2 fusion oracle equivalence", Box::new(fusion_oracle)),
        ("3 aggregation algebra", Box::new(aggregation_algebra)),
        ("4 FedAMP invariants", Box::new(fedamp_invariants)),
        ("5 partitioner statistics", Box::new(partitioner_statistics)),
        ("6 trend reproduction", Box::new(move || trend_reproduction(data))),
        ("7 sweep trends", Box::new(move || sweep_trends(data))),
        ("8 determinism", Box::new(determinism)),
        ("9 dataset ingestion", Box::new(move || ingestion(data))),
    ];
    let mut failed = 0;
    for (name, run) in &criteria {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Outcome::Pass(d) => println!("PASS     criterion {name} ({secs:.1}s): {d}"),
            Outcome::Fail(d) => {
                failed += 1;
                println!("FAIL     criterion {name} ({secs:.1}s): {d}");
            }
            Outcome::NotRun(d) => println!("NOT RUN  criterion {name}: {d}"),
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
