//! Runs a configured experiment end to end.

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::domain::{ClientDataset, ParamVector};
use crate::error::Result;
use crate::harness::config::ExperimentConfig;
use crate::harness::metrics::{MetricsSchema, MetricsWriter, RoundReport};
use crate::harness::plot::emit_plots;
use crate::models::{ModelKind, ModelSpec};
use crate::seed::{self, SAMPLING_STREAM};
use crate::server::{Algorithm, Federation, ServerState};
use crate::tasks::{self, TaskKind};

/// Per-domain loss and accuracy of a model on a whole population.
#[derive(Clone, Debug, PartialEq)]
pub struct PopulationEval {
    pub counts: Vec<u64>,
    pub loss: Vec<f64>,
    /// Fraction of correct predictions; empty for regression models.
    pub accuracy: Vec<f64>,
}

impl PopulationEval {
    /// Max loss over populated domains.
    pub fn worst_loss(&self) -> f64 {
        crate::server::worst_domain_loss(&self.loss, &self.counts)
    }

    /// Max minus min loss over populated domains.
    pub fn loss_gap(&self) -> f64 {
        let present: Vec<f64> = self
            .loss
            .iter()
            .zip(&self.counts)
            .filter(|(_, &n)| n > 0)
            .map(|(&l, _)| l)
            .collect();
        let hi = present.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = present.iter().copied().fold(f64::INFINITY, f64::min);
        if present.is_empty() { 0.0 } else { hi - lo }
    }
}

pub fn evaluate_population(
    spec: &ModelSpec,
    w: &ParamVector,
    population: &[ClientDataset],
    p: usize,
) -> Result<PopulationEval> {
    let mut counts = vec![0u64; p];
    let mut sums = vec![0.0; p];
    let mut correct = vec![0u64; p];
    for client in population {
        for s in &client.samples {
            counts[s.domain] += 1;
            sums[s.domain] += spec.loss(w, s)?;
            if spec.kind == ModelKind::Logistic && spec.predict(w, &s.features)? == s.label {
                correct[s.domain] += 1;
            }
        }
    }
    let ratio = |a: f64, n: u64| if n == 0 { 0.0 } else { a / n as f64 };
    let loss = sums.iter().zip(&counts).map(|(&s, &n)| ratio(s, n)).collect();
    let accuracy = if spec.kind == ModelKind::Logistic {
        correct.iter().zip(&counts).map(|(&c, &n)| ratio(c as f64, n)).collect()
    } else {
        Vec::new()
    };
    Ok(PopulationEval { counts, loss, accuracy })
}

/// Names of the model-summary columns for a task.
pub fn summary_names(cfg: &ExperimentConfig) -> Vec<String> {
    match cfg.task.kind {
        TaskKind::ToyRegression => vec!["w".into()],
        TaskKind::SyntheticClassification => (0..cfg.task.p).map(|i| format!("acc_{i}")).collect(),
    }
}

pub fn metrics_schema(cfg: &ExperimentConfig) -> MetricsSchema {
    MetricsSchema {
        num_domains: cfg.task.p,
        summary_names: summary_names(cfg),
    }
}

/// Everything a finished run produced.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub reports: Vec<RoundReport>,
    pub final_state: ServerState,
    pub final_eval: PopulationEval,
    /// Analytic optimum for the toy task.
    pub oracle: Option<f64>,
}

/// Generates the task population (the toy task also returns its oracle).
pub fn build_population(cfg: &ExperimentConfig) -> Result<(Vec<ClientDataset>, Option<f64>)> {
    let mut task = cfg.task.clone();
    task.seed = Some(task.seed_or(cfg.seed));
    match task.kind {
        TaskKind::ToyRegression => {
            let (data, oracle) = tasks::gen_toy_regression(&task)?;
            Ok((data, Some(oracle)))
        }
        TaskKind::SyntheticClassification => Ok((tasks::generate(&task)?, None)),
    }
}

/// Runs `cfg` on a prebuilt population, calling `sink` after every round.
pub fn run_on_population<F>(
    cfg: &ExperimentConfig,
    population: &[ClientDataset],
    mut sink: F,
) -> Result<(Vec<RoundReport>, ServerState)>
where
    F: FnMut(&RoundReport) -> Result<()>,
{
    cfg.validate()?;
    let spec = cfg.task.model_spec();
    let p = cfg.task.p;
    let fed = Federation::new(
        spec,
        population,
        p,
        cfg.algorithm.clone(),
        cfg.secure_aggregation,
        cfg.seed,
    )?;
    let mut state = fed.initial_state()?;
    let mut rng = seed::rng_for(cfg.seed, 0, SAMPLING_STREAM);
    let mut reports = Vec::with_capacity(cfg.algorithm.rounds as usize);
    for _ in 0..cfg.algorithm.rounds {
        let (next, record) = fed.run_round(&state, &mut rng)?;
        let model_summary = match cfg.task.kind {
            TaskKind::ToyRegression => next.params().as_slice().to_vec(),
            TaskKind::SyntheticClassification => evaluate_population(&spec, next.params(), population, p)?.accuracy,
        };
        let report = RoundReport {
            round: record.round,
            per_domain_loss: record.per_domain_loss,
            lambda: record.lambda,
            worst_domain_loss: record.worst_domain_loss,
            model_summary,
            comm_params_cumulative: record.comm_params_cumulative,
            degenerate: record.degenerate,
        };
        sink(&report)?;
        reports.push(report);
        state = next;
    }
    Ok((reports, state))
}

/// Validates, generates data and runs all rounds; `rounds = 0` yields no
/// reports and leaves the initial state untouched.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RoundReport>> {
    cfg.validate()?;
    let (population, _) = build_population(cfg)?;
    Ok(run_on_population(cfg, &population, |_| Ok(()))?.0)
}

/// Like [`run_experiment`], also returning the final state and a full
/// population evaluation of the final model.
pub fn run_detailed(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let (population, oracle) = build_population(cfg)?;
    let (reports, final_state) = run_on_population(cfg, &population, |_| Ok(()))?;
    let final_eval = evaluate_population(&cfg.task.model_spec(), final_state.params(), &population, cfg.task.p)?;
    Ok(RunOutcome {
        reports,
        final_state,
        final_eval,
        oracle,
    })
}

/// Files written by [`run_to_disk`].
#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub metrics: PathBuf,
    pub plots: Option<[PathBuf; 2]>,
    pub outcome: RunOutcome,
}

/// Runs `cfg`, streaming metrics to `output.out_dir` and writing plots.
pub fn run_to_disk(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    cfg.validate()?;
    let dir = &cfg.output.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| crate::Error::io(dir, e))?;
    let (population, oracle) = build_population(cfg)?;
    let metrics = cfg.output.metrics_path();
    let mut writer = MetricsWriter::create(&metrics, metrics_schema(cfg))?;
    let (reports, final_state) = run_on_population(cfg, &population, |r| writer.write(r))?;
    writer.finish()?;
    let plots = if cfg.output.plots && !reports.is_empty() {
        let stem = metrics.file_stem().map(|s| s.to_os_string()).unwrap_or_else(|| "run".into());
        Some(emit_plots(&reports, &summary_names(cfg), &dir.join(stem))?)
    } else {
        None
    };
    let final_eval = evaluate_population(&cfg.task.model_spec(), final_state.params(), &population, cfg.task.p)?;
    Ok(RunArtifacts {
        metrics,
        plots,
        outcome: RunOutcome {
            reports,
            final_state,
            final_eval,
            oracle,
        },
    })
}

/// Final metrics of one algorithm in a comparison.
#[derive(Clone, Debug)]
pub struct CompareRow {
    pub algorithm: Algorithm,
    pub eval: PopulationEval,
}

/// Runs each algorithm on the same population and seed.
pub fn compare(cfg: &ExperimentConfig, algorithms: &[Algorithm]) -> Result<Vec<CompareRow>> {
    cfg.validate()?;
    let (population, _) = build_population(cfg)?;
    algorithms
        .iter()
        .map(|&algorithm| {
            let mut c = cfg.clone();
            c.algorithm.algorithm = algorithm;
            let (_, state) = run_on_population(&c, &population, |_| Ok(()))?;
            let eval = evaluate_population(&c.task.model_spec(), state.params(), &population, c.task.p)?;
            Ok(CompareRow { algorithm, eval })
        })
        .collect()
}

/// Side-by-side table: one row per algorithm with per-domain loss (and
/// accuracy, when available), worst loss, and the between-domain difference.
pub fn format_compare_table(rows: &[CompareRow]) -> String {
    let Some(first) = rows.first() else {
        return String::new();
    };
    let p = first.eval.loss.len();
    let with_acc = !first.eval.accuracy.is_empty();
    let mut header = vec!["algorithm".to_string()];
    header.extend((0..p).map(|i| format!("loss_{i}")));
    if with_acc {
        header.extend((0..p).map(|i| format!("acc_{i}")));
    }
    header.push("worst".into());
    header.push("difference".into());

    let mut table = vec![header];
    for r in rows {
        let mut row = vec![match r.algorithm {
            Algorithm::Fedavg => "fedavg".to_string(),
            Algorithm::Afa => "afa".to_string(),
        }];
        row.extend(r.eval.loss.iter().map(|v| format!("{v:.6}")));
        row.extend(r.eval.accuracy.iter().map(|v| format!("{v:.4}")));
        row.push(format!("{:.6}", r.eval.worst_loss()));
        row.push(format!("{:.6}", r.eval.loss_gap()));
        table.push(row);
    }
    let widths: Vec<usize> = (0..table[0].len())
        .map(|c| table.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &table {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (s, w))| if c == 0 { format!("{s:<w$}") } else { format!("{s:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
    }
    out
}
