#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use spam::harness::{self, ExperimentConfig, HarnessError};
use spam::rng::{streams, RngStream};
use spam::spike_lab::{self, MomentSimConfig};

#[derive(Parser)]
#[command(name = "spam", version, about = "Spike-aware optimizer experiments")]
struct Cli {
    #[command(flatten)]
    global: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    /// Run a single seed instead of the configured list
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for every output file
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Log a metrics row every K steps
    #[arg(long, global = true)]
    log_every: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config
    Run { config: PathBuf },
    /// Run a config once per value of one knob and summarize final losses
    Sweep {
        config: PathBuf,
        /// Knob name (lr, theta, reset_interval, warmup_steps, density, ...)
        /// or a dotted config path
        #[arg(long)]
        param: String,
        /// Comma-separated values
        #[arg(long)]
        values: String,
    },
    /// Run several configs on the same problem and seeds and rank them
    Compare {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
    },
    /// Paired clean/spiked Adam moment trajectories
    SimulateMoments {
        #[arg(long, default_value_t = 0.1)]
        mu: f64,
        #[arg(long, default_value_t = 0.1)]
        var: f64,
        #[arg(long, default_value_t = 200)]
        steps: usize,
        #[arg(long, default_value_t = 30)]
        spike_step: usize,
        #[arg(long, default_value_t = 10.0)]
        spike_mag: f64,
    },
    /// Detect spikes in a recorded gradient trace
    AnalyzeTrace {
        trace: PathBuf,
        #[arg(long)]
        theta: f64,
        /// Layout CSV (segment,start,len); inferred from the trace if absent
        #[arg(long)]
        layout: Option<PathBuf>,
    },
}

/// Errors that map to exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct UsageError(String);

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if let Some(h) = e.downcast_ref::<HarnessError>() {
        return match h {
            HarnessError::NonFinite { .. } => 3,
            h if h.is_config_error() => 2,
            _ => 1,
        };
    }
    if e.downcast_ref::<UsageError>().is_some() {
        2
    } else {
        1
    }
}

fn load(path: &Path, o: &Overrides) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = o.seed {
        cfg.seeds = vec![s];
    }
    if let Some(d) = &o.out_dir {
        cfg.out_dir = d.clone();
    }
    if let Some(k) = o.log_every {
        cfg.log_every = k;
    }
    cfg.check()?;
    Ok(cfg)
}

fn dispatch(cli: Cli) -> Result<()> {
    let o = &cli.global;
    match cli.command {
        Command::Run { config } => {
            let cfg = load(&config, o)?;
            let summary = harness::run(&cfg)?;
            println!("seed,final_loss,regret,injected,clipped,nullified,metrics");
            for s in &summary.outcomes {
                println!(
                    "{},{},{},{},{},{},{}",
                    s.seed,
                    s.final_loss,
                    s.regret.map(|r| r.to_string()).unwrap_or_default(),
                    s.injected,
                    s.clipped,
                    s.nullified,
                    s.metrics.display()
                );
            }
        }
        Command::Sweep {
            config,
            param,
            values,
        } => {
            let cfg = load(&config, o)?;
            let values = harness::parse_values(&values);
            let result = harness::sweep(&cfg, &param, &values)?;
            println!("{param},seeds,median,q1,q3,iqr");
            for r in &result.rows {
                println!(
                    "{},{},{},{},{},{}",
                    r.value, r.seeds, r.median, r.q1, r.q3, r.iqr
                );
            }
            eprintln!("summary written to {}", result.summary.display());
        }
        Command::Compare { configs } => {
            let cfgs = configs
                .iter()
                .map(|p| load(p, o))
                .collect::<Result<Vec<_>>>()?;
            let result = harness::compare(&cfgs)?;
            let out_dir = &cfgs[0].out_dir;
            fs::create_dir_all(out_dir)?;
            let path = out_dir.join("compare.csv");
            harness::write_compare_csv(File::create(&path)?, &result.rows)?;
            let width = result.rows.iter().map(|r| r.name.len()).max().unwrap_or(4);
            println!(
                "{:>4}  {:<width$}  {:<18} {:>14} {:>14} {:>9} {:>9} {:>9}",
                "rank",
                "name",
                "optimizer",
                "final_loss",
                "regret",
                "injected",
                "clipped",
                "nullified"
            );
            for r in &result.rows {
                println!(
                    "{:>4}  {:<width$}  {:<18} {:>14.6e} {:>14} {:>9} {:>9} {:>9}",
                    r.rank,
                    r.name,
                    r.optimizer,
                    r.median_final_loss,
                    r.median_regret
                        .map(|x| format!("{x:.6e}"))
                        .unwrap_or("-".into()),
                    r.median_injected,
                    r.median_clipped,
                    r.median_nullified
                );
            }
            eprintln!("table written to {}", path.display());
        }
        Command::SimulateMoments {
            mu,
            var,
            steps,
            spike_step,
            spike_mag,
        } => {
            let cfg = MomentSimConfig {
                mean: mu,
                variance: var,
                steps,
                spike_step,
                spike_magnitude: spike_mag,
                ..MomentSimConfig::default()
            };
            let mut rng = RngStream::new(o.seed.unwrap_or(0), streams::SIMULATION);
            let r = spike_lab::simulate_moments(&cfg, &mut rng)
                .map_err(|e| UsageError(e.to_string()))?;
            let show = |x: Option<usize>| match x {
                Some(k) => format!("after {k} steps"),
                None => format!("not within {} steps", steps - spike_step),
            };
            println!("first moment recovers {}", show(r.m_recovery));
            println!("second moment recovers {}", show(r.v_recovery));
            println!(
                "final second-moment ratio spiked/clean: {:.4}",
                r.final_v_ratio()
            );
            if let Some(dir) = &o.out_dir {
                fs::create_dir_all(dir)?;
                let path = dir.join("moments.csv");
                let mut w = csv::Writer::from_path(&path)?;
                w.write_record([
                    "step", "gradient", "clean_m", "clean_v", "spiked_m", "spiked_v",
                ])?;
                for t in 0..r.gradients.len() {
                    w.write_record([
                        t.to_string(),
                        r.gradients[t].to_string(),
                        r.clean_m[t].to_string(),
                        r.clean_v[t].to_string(),
                        r.spiked_m[t].to_string(),
                        r.spiked_v[t].to_string(),
                    ])?;
                }
                w.flush()?;
                eprintln!("trajectories written to {}", path.display());
            }
        }
        Command::AnalyzeTrace {
            trace,
            theta,
            layout,
        } => {
            if !(theta > 0.0) {
                return Err(UsageError(format!("--theta must be positive, got {theta}")).into());
            }
            let layout = match layout {
                Some(p) => Some(
                    spike_lab::read_layout_csv(
                        File::open(&p).with_context(|| p.display().to_string())?,
                    )
                    .map_err(|e| UsageError(e.to_string()))?,
                ),
                None => None,
            };
            let file = File::open(&trace).with_context(|| trace.display().to_string())?;
            let (trace, store) =
                spike_lab::read_trace_csv(file, layout).map_err(|e| UsageError(e.to_string()))?;
            let events = spike_lab::detect_spikes(&trace, theta, &store)?;
            let stats = spike_lab::segment_stats(&events, &store)?;
            println!("{} spikes over {} steps", events.len(), trace.steps());
            println!("segment,total_spikes,total_params,ratio");
            for s in &stats {
                println!(
                    "{},{},{},{}",
                    s.segment, s.total_spikes, s.total_params, s.ratio
                );
            }
            if let Some(dir) = &o.out_dir {
                fs::create_dir_all(dir)?;
                spike_lab::write_events_csv(
                    BufWriter::new(File::create(dir.join("spike_events.csv"))?),
                    &events,
                )?;
                spike_lab::write_stats_csv(
                    BufWriter::new(File::create(dir.join("spike_stats.csv"))?),
                    &stats,
                )?;
            }
        }
    }
    Ok(())
}
