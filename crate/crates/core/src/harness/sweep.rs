use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{run_with_problem, ExperimentConfig, HarnessError, RunSummary};
use crate::problems::{Problem, ProblemSpec};

/// Type-7 (linear interpolation) quantile of an ascending slice.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(xs: &[f64]) -> f64 {
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    quantile(&s, 0.5)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SweepRow {
    pub value: String,
    pub seeds: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
}

impl SweepRow {
    pub fn from_losses(value: String, losses: &[f64]) -> Self {
        let mut s = losses.to_vec();
        s.sort_by(f64::total_cmp);
        let (q1, q3) = (quantile(&s, 0.25), quantile(&s, 0.75));
        Self {
            value,
            seeds: s.len(),
            median: quantile(&s, 0.5),
            q1,
            q3,
            iqr: q3 - q1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub param: String,
    pub rows: Vec<SweepRow>,
    pub runs: Vec<RunSummary>,
    pub summary: PathBuf,
}

const OPTIMIZER_KNOBS: [&str; 13] = [
    "reset_interval",
    "warmup_steps",
    "gss_threshold",
    "density",
    "spike_mode",
    "mask_strategy",
    "unmasked_policy",
    "bias_correction_clock",
    "weight_decay",
    "threshold",
    "max_norm",
    "decay",
    "theta",
];

/// Maps a knob name to its JSON path in the config. Short names cover the
/// optimizer and injector knobs; anything else is taken as a dotted path.
fn knob_path(param: &str) -> Vec<String> {
    let path: &[&str] = match param {
        "lr" | "beta1" | "beta2" | "eps" => &["optimizer", "adam", param],
        "spike_probability" => &["spikes", "probability"],
        "spike_factor" => &["spikes", "factor"],
        "severity" => &["anomalies", "severity"],
        "anomaly_probability" => &["anomalies", "probability"],
        "floor" => &["schedule", "floor"],
        p if OPTIMIZER_KNOBS.contains(&p) => &["optimizer", p],
        p => return p.split('.').map(str::to_string).collect(),
    };
    path.iter().map(|s| s.to_string()).collect()
}

fn lookup<'a>(root: &'a mut Value, path: &[String]) -> Option<&'a mut Value> {
    path.iter()
        .try_fold(root, |v, k| v.as_object_mut()?.get_mut(k))
}

/// `config` with `param` set to `value`. Unknown knobs, including knobs
/// that the configured optimizer does not have, are rejected.
pub fn with_param(
    config: &ExperimentConfig,
    param: &str,
    value: &Value,
) -> Result<ExperimentConfig, HarnessError> {
    let path = knob_path(param);
    let mut tree = serde_json::to_value(config).expect("config serializes");
    // "theta" means the spike threshold of whichever optimizer has one
    let path = if param == "theta" && lookup(&mut tree, &path).is_none() {
        vec!["optimizer".to_string(), "gss_threshold".to_string()]
    } else {
        path
    };
    if path
        .iter()
        .any(|k| k == "version" || k == "name" || k == "kind")
    {
        return Err(HarnessError::UnknownParameter(param.to_string()));
    }
    let slot = lookup(&mut tree, &path)
        .ok_or_else(|| HarnessError::UnknownParameter(param.to_string()))?;
    if slot.is_object() || slot.is_array() {
        return Err(HarnessError::UnknownParameter(param.to_string()));
    }
    *slot = value.clone();

    // keep the post-reset warmup shorter than the reset interval
    if path == ["optimizer", "reset_interval"] {
        if let Some(dt) = value.as_u64() {
            let n = lookup(&mut tree, &["optimizer".into(), "warmup_steps".into()]);
            if let Some(n) = n {
                if n.as_u64().is_some_and(|w| dt >= 1 && w >= dt) {
                    *n = Value::from(dt - 1);
                }
            }
        }
    }

    let mut out: ExperimentConfig =
        serde_json::from_value(tree).map_err(|e| HarnessError::Parse(e.to_string()))?;
    out.name = format!(
        "{}_{}{}",
        config.name,
        param.replace('.', "-"),
        label(value)
    );
    out.check()?;
    Ok(out)
}

fn label(value: &Value) -> String {
    match value {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Parses a comma-separated list; entries that are not JSON become strings.
pub fn parse_values(list: &str) -> Vec<Value> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| serde_json::from_str(s).unwrap_or_else(|_| Value::String(s.to_string())))
        .collect()
}

/// Builds each distinct problem once; runs sharing a problem share its
/// dataset and cached optimum.
struct ProblemCache(Vec<(ProblemSpec, Box<dyn Problem>)>);

impl ProblemCache {
    fn new(configs: &[ExperimentConfig]) -> Result<Self, HarnessError> {
        let mut cache: Vec<(ProblemSpec, Box<dyn Problem>)> = Vec::new();
        for c in configs {
            if !cache.iter().any(|(s, _)| *s == c.problem) {
                cache.push((c.problem.clone(), c.problem.build()?));
            }
        }
        // warm the optimum oracle before fanning out
        cache.par_iter().for_each(|(_, p)| {
            p.optimum();
        });
        Ok(Self(cache))
    }

    fn get(&self, spec: &ProblemSpec) -> &dyn Problem {
        self.0
            .iter()
            .find(|(s, _)| s == spec)
            .map(|(_, p)| p.as_ref())
            .expect("problem cached")
    }
}

fn run_all(configs: &[ExperimentConfig]) -> Result<Vec<RunSummary>, HarnessError> {
    let cache = ProblemCache::new(configs)?;
    let results: Vec<Result<RunSummary, HarnessError>> = configs
        .par_iter()
        .map(|c| run_with_problem(c, cache.get(&c.problem)))
        .collect();
    results.into_iter().collect()
}

/// Runs `values x seeds` and writes `<name>_sweep_<param>.csv` with the
/// median and interquartile range of the final loss per value.
pub fn sweep(
    config: &ExperimentConfig,
    param: &str,
    values: &[Value],
) -> Result<SweepResult, HarnessError> {
    config.check()?;
    if values.is_empty() {
        return Err(HarnessError::InvalidConfig(vec![format!(
            "sweep over {param} needs at least one value"
        )]));
    }
    let variants = values
        .iter()
        .map(|v| with_param(config, param, v))
        .collect::<Result<Vec<_>, _>>()?;
    let runs = run_all(&variants)?;
    let rows: Vec<SweepRow> = values
        .iter()
        .zip(&runs)
        .map(|(v, r)| SweepRow::from_losses(label(v), &r.final_losses()))
        .collect();

    std::fs::create_dir_all(&config.out_dir)?;
    let summary = config.out_dir.join(format!(
        "{}_sweep_{}.csv",
        config.name,
        param.replace('.', "-")
    ));
    let mut w = csv::Writer::from_path(&summary)?;
    for row in &rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(SweepResult {
        param: param.to_string(),
        rows,
        runs,
        summary,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CompareRow {
    pub rank: usize,
    pub name: String,
    pub optimizer: String,
    pub median_final_loss: f64,
    pub median_regret: Option<f64>,
    pub median_injected: f64,
    pub median_clipped: f64,
    pub median_nullified: f64,
}

#[derive(Debug, Clone)]
pub struct CompareResult {
    pub rows: Vec<CompareRow>,
    pub runs: Vec<RunSummary>,
}

fn comparable(a: &ExperimentConfig, b: &ExperimentConfig) -> Result<(), HarnessError> {
    let differs = |what: &str| {
        Err(HarnessError::IncomparableConfigs(format!(
            "{} and {} use different {what}",
            a.name, b.name
        )))
    };
    if a.problem != b.problem {
        return differs("problems");
    }
    if a.seeds != b.seeds {
        return differs("seeds");
    }
    if a.spikes != b.spikes || a.anomalies != b.anomalies {
        return differs("injectors");
    }
    if a.steps != b.steps {
        return differs("step counts");
    }
    if a.name == b.name && a.out_dir == b.out_dir {
        return Err(HarnessError::IncomparableConfigs(format!(
            "two configs are named {} and would overwrite each other",
            a.name
        )));
    }
    Ok(())
}

/// Runs every config on the shared problem and seeds and ranks them by
/// median final loss (ties keep input order).
pub fn compare(configs: &[ExperimentConfig]) -> Result<CompareResult, HarnessError> {
    for c in configs {
        c.check()?;
    }
    for (i, a) in configs.iter().enumerate() {
        for b in &configs[i + 1..] {
            comparable(a, b)?;
        }
    }
    let runs = run_all(configs)?;
    let mut rows: Vec<CompareRow> = runs
        .iter()
        .map(|r| {
            let of = |f: fn(&super::SeedOutcome) -> f64| {
                median(&r.outcomes.iter().map(f).collect::<Vec<_>>())
            };
            let regrets: Option<Vec<f64>> = r.outcomes.iter().map(|o| o.regret).collect();
            CompareRow {
                rank: 0,
                name: r.name.clone(),
                optimizer: r.optimizer.clone(),
                median_final_loss: median(&r.final_losses()),
                median_regret: regrets.map(|x| median(&x)),
                median_injected: of(|o| o.injected as f64),
                median_clipped: of(|o| o.clipped as f64),
                median_nullified: of(|o| o.nullified as f64),
            }
        })
        .collect();
    rows.sort_by(|a, b| a.median_final_loss.total_cmp(&b.median_final_loss));
    for (i, r) in rows.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    Ok(CompareResult { rows, runs })
}

pub fn write_compare_csv<W: std::io::Write>(w: W, rows: &[CompareRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(w);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
