use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{global_lr, ExperimentConfig, HarnessError};
use crate::optim::OptimError;
use crate::problems::{AnomalyInjector, Problem, SpikeInjector};
use crate::rng::{streams, RngStream};
use crate::spike_lab::{write_layout_csv, write_trace_csv, GradientTrace};

pub const METRICS_HEADER: [&str; 11] = [
    "step",
    "loss",
    "grad_norm",
    "update_norm",
    "warmup_scale",
    "clipped_count",
    "nullified_count",
    "injected_count",
    "moment_l1_m",
    "moment_l1_v",
    "wall_time_per_step",
];

/// One logged row. Counts cover every step since the previous row; the
/// remaining fields describe the logged step itself, with `loss` the full
/// objective after its update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: u64,
    pub loss: f64,
    pub grad_norm: f64,
    pub update_norm: f64,
    pub warmup_scale: f64,
    pub clipped_count: usize,
    pub nullified_count: usize,
    pub injected_count: usize,
    pub moment_l1_m: f64,
    pub moment_l1_v: f64,
    pub wall_time_per_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub steps: u64,
    /// Full objective at the final iterate.
    pub final_loss: f64,
    /// Cumulative mini-batch regret, when the optimum is known.
    pub regret: Option<f64>,
    pub injected: usize,
    pub clipped: usize,
    pub nullified: usize,
    pub metrics: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub optimizer: String,
    pub problem: String,
    pub problem_seed: u64,
    pub optimum: Option<f64>,
    pub outcomes: Vec<SeedOutcome>,
}

impl RunSummary {
    pub fn final_losses(&self) -> Vec<f64> {
        self.outcomes.iter().map(|o| o.final_loss).collect()
    }
}

/// Runs every seed of `config` and writes `<name>_seed<k>.csv` plus a
/// `<name>_summary.json` into the output directory.
pub fn run(config: &ExperimentConfig) -> Result<RunSummary, HarnessError> {
    config.check()?;
    let problem = config.problem.build()?;
    run_with_problem(config, problem.as_ref())
}

/// Like [`run`] but over an already built problem, so sweeps can share one
/// dataset (and its optimum) between runs.
pub fn run_with_problem(
    config: &ExperimentConfig,
    problem: &dyn Problem,
) -> Result<RunSummary, HarnessError> {
    config.check()?;
    fs::create_dir_all(&config.out_dir)?;
    let optimum = problem.optimum();
    let store = problem.store()?;
    if config.trace.is_some() {
        write_layout_csv(File::create(config.layout_path())?, &store)?;
    }
    let outcomes: Vec<Result<SeedOutcome, HarnessError>> = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let path = config.metrics_path(seed);
            let file = BufWriter::new(File::create(&path)?);
            let mut trace = config.trace.map(|t| match t.per_segment {
                None => GradientTrace::full(problem.dim()),
                Some(k) => {
                    GradientTrace::subsampled(&store, k, &mut RngStream::new(seed, streams::TRACE))
                }
            });
            let mut outcome = run_seed_traced(config, problem, seed, file, trace.as_mut())?;
            outcome.metrics = path;
            if let Some(trace) = &trace {
                let out = BufWriter::new(File::create(config.trace_path(seed))?);
                write_trace_csv(out, trace, &store)?;
            }
            Ok(outcome)
        })
        .collect();
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>, _>>()?;
    let summary = RunSummary {
        name: config.name.clone(),
        optimizer: config.optimizer.kind().to_string(),
        problem: problem.name().to_string(),
        problem_seed: config.problem.seed(),
        optimum,
        outcomes,
    };
    let path = config.out_dir.join(format!("{}_summary.json", config.name));
    fs::write(
        path,
        serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )?;
    Ok(summary)
}

/// The per-seed loop: batch, gradient, corruption and spike injection,
/// optimizer step under the global schedule, periodic logging.
///
/// The noise realization depends only on `seed` and the step index, never
/// on the optimizer.
pub fn run_seed<W: Write>(
    config: &ExperimentConfig,
    problem: &dyn Problem,
    seed: u64,
    out: W,
) -> Result<SeedOutcome, HarnessError> {
    run_seed_traced(config, problem, seed, out, None)
}

/// [`run_seed`], additionally recording every optimizer-facing gradient.
pub fn run_seed_traced<W: Write>(
    config: &ExperimentConfig,
    problem: &dyn Problem,
    seed: u64,
    out: W,
    mut trace: Option<&mut GradientTrace>,
) -> Result<SeedOutcome, HarnessError> {
    let mut csv = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    csv.write_record(METRICS_HEADER)?;

    let mut store = problem.store()?;
    let mut opt = config.optimizer.build(problem.dim(), seed)?;
    let data = RngStream::new(seed, streams::DATA);
    let spikes = config
        .spikes
        .map(|s| SpikeInjector::new(s.probability, s.factor, seed));
    let anomalies = config
        .anomalies
        .map(|a| AnomalyInjector::new(a.probability, a.severity, seed));
    let optimum = problem.optimum();
    let total = config.steps;

    let mut regret = 0.0;
    let (mut injected, mut clipped, mut nullified) = (0, 0, 0);
    let mut window = MetricsRecord {
        step: 0,
        loss: 0.0,
        grad_norm: 0.0,
        update_norm: 0.0,
        warmup_scale: 0.0,
        clipped_count: 0,
        nullified_count: 0,
        injected_count: 0,
        moment_l1_m: 0.0,
        moment_l1_v: 0.0,
        wall_time_per_step: 0.0,
    };
    let mut window_steps = 0u64;
    let mut window_time = 0.0;

    let abort = |csv: &mut csv::Writer<W>, step: u64, what: String| -> HarnessError {
        let _ = csv.flush();
        HarnessError::NonFinite { seed, step, what }
    };

    for t in 0..total {
        let step = t + 1;
        let started = Instant::now();

        let mut batch = problem.sample_batch(&mut data.fork(t));
        if let Some(a) = &anomalies {
            batch.inputs = a.corrupt(&batch.inputs, t);
        }
        let (batch_loss, grad) = problem.batch_loss_grad(store.values(), &batch);
        if !batch_loss.is_finite() {
            return Err(abort(&mut csv, step, format!("batch loss {batch_loss}")));
        }
        let (grad, hits) = match &spikes {
            Some(s) => s.inject(&grad, t),
            None => (grad, Vec::new()),
        };
        if let Some(trace) = trace.as_deref_mut() {
            trace.push(&grad)?;
        }
        let scale = global_lr(
            t,
            1.0,
            config.schedule.warmup_steps,
            total,
            config.schedule.floor,
        );
        let report = match opt.step(&mut store, &grad, scale) {
            Ok(r) => r,
            Err(OptimError::NonFiniteGradient { index }) => {
                return Err(abort(
                    &mut csv,
                    step,
                    format!("gradient coordinate {index}"),
                ))
            }
            Err(e) => return Err(e.into()),
        };
        if !report.update_norm.is_finite() {
            return Err(abort(&mut csv, step, "update".into()));
        }
        let elapsed = started.elapsed().as_secs_f64();

        if let Some(f) = optimum {
            regret += batch_loss - f;
        }
        injected += hits.len();
        clipped += report.clipped_count;
        nullified += report.nullified_count;
        window.injected_count += hits.len();
        window.clipped_count += report.clipped_count;
        window.nullified_count += report.nullified_count;
        window_steps += 1;
        window_time += elapsed;

        if step % config.log_every == 0 || step == total {
            let loss = problem.loss(store.values());
            if !loss.is_finite() {
                return Err(abort(&mut csv, step, format!("loss {loss}")));
            }
            let (m, v) = opt.moment_l1();
            window.step = step;
            window.loss = loss;
            window.grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            window.update_norm = report.update_norm;
            window.warmup_scale = report.warmup_scale;
            window.moment_l1_m = m;
            window.moment_l1_v = v;
            window.wall_time_per_step = if config.timing {
                window_time / window_steps as f64
            } else {
                0.0
            };
            csv.serialize(window)?;
            window.clipped_count = 0;
            window.nullified_count = 0;
            window.injected_count = 0;
            window_steps = 0;
            window_time = 0.0;
        }
    }
    csv.flush()?;

    Ok(SeedOutcome {
        seed,
        steps: total,
        final_loss: problem.loss(store.values()),
        regret: optimum.map(|_| regret),
        injected,
        clipped,
        nullified,
        metrics: PathBuf::new(),
    })
}

/// Reads a metrics CSV back into records.
pub fn read_metrics<R: std::io::Read>(r: R) -> Result<Vec<MetricsRecord>, HarnessError> {
    let mut rd = csv::Reader::from_reader(r);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header != METRICS_HEADER {
        return Err(HarnessError::Format(format!(
            "unexpected metrics header {header:?}"
        )));
    }
    rd.deserialize()
        .collect::<Result<Vec<_>, _>>()
        .map_err(HarnessError::from)
}
