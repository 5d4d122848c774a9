use std::fs;
use std::path::Path;

use spam::harness::{
    compare, median, read_metrics, run, sweep, ExperimentConfig, HarnessError, SweepRow,
};
use spam::optim::{FilteredAdam, GradientFilter};
use spam::problems::{regret, ProblemSpec};
use spam::rng::{streams, RngStream};
use spam::{AdamConfig, Optimizer};

fn config(name: &str, out: &Path, optimizer: &str, extra: &str) -> ExperimentConfig {
    ExperimentConfig::from_json(&format!(
        r#"{{
            "version": 1,
            "name": "{name}",
            "problem": {{ "kind": "logistic", "features": 8, "samples": 256, "batch_size": 16, "seed": 3 }},
            "optimizer": {optimizer},
            "steps": 400,
            "schedule": {{ "warmup_steps": 20, "floor": 0.1 }},
            "seeds": [0, 1, 2],
            "spikes": {{ "probability": 0.01, "factor": 1000 }},
            "log_every": 10,
            "out_dir": "{}"
            {extra}
        }}"#,
        out.display()
    ))
    .unwrap()
}

const ADAM: &str = r#"{ "kind": "adam", "adam": { "lr": 0.01 } }"#;
const SPAM: &str = r#"{ "kind": "spam", "adam": { "lr": 0.01 }, "reset_interval": 100, "warmup_steps": 20, "gss_threshold": 100 }"#;

fn strip_timing(csv: &str) -> String {
    csv.lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn reruns_are_byte_identical_without_timing_column() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for opt in [ADAM, SPAM] {
        let ra = run(&config("det", a.path(), opt, "")).unwrap();
        let rb = run(&config("det", b.path(), opt, "")).unwrap();
        for (x, y) in ra.outcomes.iter().zip(&rb.outcomes) {
            let x = fs::read_to_string(&x.metrics).unwrap();
            let y = fs::read_to_string(&y.metrics).unwrap();
            assert_eq!(strip_timing(&x), strip_timing(&y));
        }
    }
}

#[test]
fn injected_spikes_do_not_depend_on_optimizer() {
    let dir = tempfile::tempdir().unwrap();
    let adam = run(&config("a", dir.path(), ADAM, "")).unwrap();
    let spam = run(&config("s", dir.path(), SPAM, "")).unwrap();
    for (x, y) in adam.outcomes.iter().zip(&spam.outcomes) {
        let col = |p: &Path| -> Vec<usize> {
            read_metrics(fs::File::open(p).unwrap())
                .unwrap()
                .iter()
                .map(|r| r.injected_count)
                .collect()
        };
        let (cx, cy) = (col(&x.metrics), col(&y.metrics));
        assert_eq!(cx, cy);
        assert!(cx.iter().sum::<usize>() > 0);
    }
}

#[test]
fn summaries_recompute_from_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("sum", dir.path(), SPAM, "");
    let result = sweep(
        &cfg,
        "theta",
        &[serde_json::json!(100.0), serde_json::json!(1e4)],
    )
    .unwrap();
    let table = fs::read_to_string(&result.summary).unwrap();
    let mut rdr = csv::Reader::from_reader(table.as_bytes());
    let emitted: Vec<SweepRow> = rdr.deserialize().collect::<Result<_, _>>().unwrap();
    assert_eq!(emitted, result.rows);
    for (row, summary) in emitted.iter().zip(&result.runs) {
        let finals: Vec<f64> = summary
            .outcomes
            .iter()
            .map(|o| {
                let recs = read_metrics(fs::File::open(&o.metrics).unwrap()).unwrap();
                let last = recs.last().unwrap();
                assert_eq!(last.step, 400);
                assert_eq!(last.loss, o.final_loss);
                last.loss
            })
            .collect();
        assert_eq!(*row, SweepRow::from_losses(row.value.clone(), &finals));
        assert_eq!(row.median, median(&finals));
        let json: serde_json::Value = serde_json::from_str(
            &fs::read_to_string(dir.path().join(format!("{}_summary.json", summary.name))).unwrap(),
        )
        .unwrap();
        for (o, j) in summary
            .outcomes
            .iter()
            .zip(json["outcomes"].as_array().unwrap())
        {
            assert_eq!(j["final_loss"].as_f64().unwrap(), o.final_loss);
        }
    }
}

#[test]
fn single_value_sweep_equals_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("one", dir.path(), SPAM, "");
    let direct = run(&cfg).unwrap();
    let sw = sweep(&cfg, "lr", &[serde_json::json!(0.01)]).unwrap();
    assert_eq!(
        sw.rows[0],
        SweepRow::from_losses("0.01".into(), &direct.final_losses())
    );
}

#[test]
fn degenerate_spam_ties_adam_in_compare() {
    let dir = tempfile::tempdir().unwrap();
    let quad = |name: &str, opt: &str| {
        ExperimentConfig::from_json(&format!(
            r#"{{ "version": 1, "name": "{name}",
                 "problem": {{ "kind": "quadratic", "dim": 20, "condition": 50, "noise_std": 0.05 }},
                 "optimizer": {opt}, "steps": 1000, "seeds": [0, 1], "log_every": 100,
                 "out_dir": "{}" }}"#,
            dir.path().display()
        ))
        .unwrap()
    };
    let adam = quad("adam", r#"{ "kind": "adam", "adam": { "lr": 0.01 } }"#);
    let spam = quad(
        "spam",
        r#"{ "kind": "spam", "adam": { "lr": 0.01 }, "reset_interval": 1001, "warmup_steps": 0, "gss_threshold": "inf" }"#,
    );
    let res = compare(&[adam, spam]).unwrap();
    let (a, b) = (&res.rows[0], &res.rows[1]);
    assert!((a.median_final_loss - b.median_final_loss).abs() < 1e-12);
    assert!((a.median_regret.unwrap() - b.median_regret.unwrap()).abs() < 1e-9);
}

#[test]
fn nullify_filter_beats_plain_adam_under_spikes() {
    let dir = tempfile::tempdir().unwrap();
    let adam = config("plain", dir.path(), ADAM, "");
    let null = config(
        "null",
        dir.path(),
        r#"{ "kind": "adam_nullify", "adam": { "lr": 0.01 }, "theta": 50 }"#,
        "",
    );
    let res = compare(&[adam, null]).unwrap();
    assert_eq!(res.rows[0].name, "null");
    assert!(res.rows[0].median_nullified > 0.0);
}

#[test]
fn compare_rejects_mismatched_problems() {
    let dir = tempfile::tempdir().unwrap();
    let a = config("a", dir.path(), ADAM, "");
    let mut b = config("b", dir.path(), SPAM, "");
    b.problem = ProblemSpec::Logistic {
        features: 8,
        samples: 256,
        batch_size: 16,
        label_noise: 0.1,
        seed: 4,
    };
    assert!(matches!(
        compare(&[a, b]),
        Err(HarnessError::IncomparableConfigs(_))
    ));
}

#[test]
fn unknown_sweep_knob_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("k", dir.path(), SPAM, "");
    let err = sweep(&cfg, "thetta", &[serde_json::json!(1)]).unwrap_err();
    assert!(matches!(err, HarnessError::UnknownParameter(_)));
    assert!(err.is_config_error());
}

#[test]
fn config_errors_enumerate_every_field() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config("e", dir.path(), SPAM, "");
    cfg.seeds = vec![1, 1];
    cfg.log_every = 0;
    cfg.schedule.floor = 2.0;
    match cfg.check() {
        Err(HarnessError::InvalidConfig(errs)) => assert_eq!(errs.len(), 3, "{errs:?}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn average_regret_falls_for_adam_on_quadratic() {
    let problem = ProblemSpec::Quadratic {
        dim: 20,
        condition: 10.0,
        noise_std: 0.0,
        seed: 0,
    }
    .build()
    .unwrap();
    let mut store = problem.store().unwrap();
    let mut opt = FilteredAdam::new(
        problem.dim(),
        AdamConfig::with_lr(0.01),
        GradientFilter::None,
    );
    let data = RngStream::new(0, streams::DATA);
    let mut losses = Vec::with_capacity(5000);
    for t in 0..5000u64 {
        losses.push(problem.loss(store.values()));
        let g = problem.gradient(store.values(), &mut data.fork(t));
        opt.step(&mut store, &g, 1.0).unwrap();
    }
    let r = regret(&losses, problem.optimum().unwrap());
    let avg: Vec<f64> = r
        .iter()
        .enumerate()
        .map(|(t, x)| x / (t + 1) as f64)
        .collect();
    assert!(avg.windows(2).all(|w| w[1] <= w[0]), "R(T)/T rose");
    assert!(avg[4999] < 0.05 * avg[0]);
}
