mod common;

use std::fs;

use shieldrec::experiment::*;
use shieldrec::ppo::{trace_csv, EpochMetrics, TraceRow, TRACE_HEADER};
use shieldrec::reward::CoherenceMode;
use shieldrec::Error;

#[test]
fn config_round_trips_through_text() {
    let mut cfg = common::small_config();
    cfg.reward.coherence_mode = CoherenceMode::Product;
    cfg.data_dir = Some("some/dir".into());
    cfg.ppo.kl_coeff = 0.125;
    cfg.run_name = "round trip".into();
    let back = ExperimentConfig::parse(&cfg.to_text()).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(ExperimentConfig::parse("").unwrap(), ExperimentConfig::default());
}

#[test]
fn unknown_key_is_named_in_the_error() {
    let err = ExperimentConfig::parse("ppo.kl_coeff = 0.1\nfoo = 3\n").unwrap_err();
    assert!(matches!(err, Error::Config(_)));
    assert!(err.to_string().contains("foo"), "{err}");
    assert!(ExperimentConfig::parse("ppo.batch_size = many").is_err());
    assert!(ExperimentConfig::parse("dataset.train_fraction = 1.5").is_err());
}

#[test]
fn defaults_follow_the_published_tables() {
    let cfg = ExperimentConfig::default();
    assert_eq!(cfg.ppo.learning_rate, 3e-5);
    assert_eq!(cfg.ppo.batch_size, 16);
    assert_eq!(cfg.ppo.mini_batch_size, 4);
    assert_eq!(cfg.ppo.ppo_epochs_per_update, 4);
    assert_eq!(cfg.ppo.clip_ratio, 0.2);
    assert_eq!(cfg.ppo.kl_coeff, 0.05);
    assert_eq!(cfg.ppo.gae_lambda, 0.95);
    assert_eq!(cfg.ppo.gamma, 1.0);
    assert_eq!((cfg.ppo.update_steps_per_epoch, cfg.ppo.train_epochs), (20, 8));
    assert_eq!((cfg.policy.lora_rank, cfg.policy.lora_alpha), (8, 16.0));
    assert_eq!(cfg.bpr.embedding_dim, 128);
    assert_eq!((cfg.reward.w_length, cfg.reward.w_content, cfg.reward.w_coherence), (0.5, 0.3, 0.2));
}

#[test]
fn ablation_variants_change_one_knob_each() {
    let base = ExperimentConfig::default().ppo;
    let v = |c| apply_variant(&base, c).unwrap();
    assert_eq!(v('A'), base);
    assert_eq!(v('B').kl_coeff, 0.0);
    assert_eq!(v('C').learning_rate, 1e-5);
    assert_eq!(v('D').update_steps_per_epoch, 50);
    assert_eq!(v('E').kl_coeff, 0.1);
    assert_eq!(v('F').train_epochs, 15);
    assert!(apply_variant(&base, 'G').is_err());
    assert_eq!(parse_variants("a, B,d").unwrap(), vec!['A', 'B', 'D']);
    assert!(parse_variants("A,Q").is_err());
    assert!(parse_variants("").is_err());
}

fn fake_trace(epochs: usize) -> String {
    let rows: Vec<TraceRow> = (0..=epochs)
        .map(|e| TraceRow {
            epoch: e,
            step: e * 20,
            metrics: EpochMetrics {
                drift_signed: -(e as f64) * 1.5,
                ..EpochMetrics::default()
            },
            rel_ctr: 1.0 + e as f64 * 0.01,
            ndcg10: 0.2,
            recall20: 0.3,
            spearman: 1.0,
            shield_ok: true,
        })
        .collect();
    trace_csv(&rows)
}

#[test]
fn plot_data_projects_the_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = fake_trace(8);
    assert!(trace.starts_with(TRACE_HEADER));
    fs::write(dir.path().join("trace.csv"), &trace).unwrap();
    let (rel, drift) = emit_plot_data(dir.path()).unwrap();
    let rel = fs::read_to_string(rel).unwrap();
    let drift = fs::read_to_string(drift).unwrap();
    let rel_rows: Vec<&str> = rel.lines().skip(1).collect();
    assert_eq!(rel.lines().next(), Some("epoch,value"));
    assert_eq!(rel_rows.len(), 9);
    assert_eq!(drift.lines().count(), 10);
    for (line, row) in rel_rows.iter().zip(trace.lines().skip(1)) {
        let cells: Vec<&str> = row.split(',').collect();
        assert_eq!(*line, format!("{},{}", cells[0], cells[9]));
    }
    for (line, row) in drift.lines().skip(1).zip(trace.lines().skip(1)) {
        let cells: Vec<&str> = row.split(',').collect();
        assert_eq!(line, format!("{},{}", cells[0], cells[4]));
    }
}

#[test]
fn plot_data_needs_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    assert!(emit_plot_data(dir.path()).is_err());
    fs::write(dir.path().join("trace.csv"), format!("{TRACE_HEADER}\n")).unwrap();
    assert!(emit_plot_data(dir.path()).is_err());
}

#[test]
fn single_variant_ablation_gives_one_row() {
    let cfg = common::small_config();
    let prepared = prepare(&cfg).unwrap();
    let mut seen = Vec::new();
    let rows = run_ablation(&prepared, &cfg, &['A'], &[5], |v, s, run| seen.push((v, s, run.trace.len()))).unwrap();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].error.is_none());
    assert_eq!(seen, vec![('A', 5, cfg.ppo.train_epochs + 1)]);
    let csv = ablation_csv(&rows);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], ABLATION_HEADER);
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("A,0.05,0.00003,2,"), "{}", lines[1]);
    assert!(run_ablation(&prepared, &cfg, &['A'], &[], |_, _, _| {}).is_err());
}

#[test]
fn full_pipeline_writes_artifacts_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = common::small_config();
    cfg.output_dir = dir.path().to_path_buf();
    cfg.run_name = "one".into();
    let first = run_experiment(&cfg).unwrap();
    let run_dir = cfg.run_dir();
    for f in [
        "config.txt",
        "dataset_summary.txt",
        "vocab.tsv",
        "policy_init.srlk",
        "policy_epoch0.srlk",
        "policy_epoch1.srlk",
        "trace.csv",
        "report.txt",
        "rel_ctr.csv",
        "drift.csv",
        "data/items.csv",
        "data/interactions.csv",
    ] {
        assert!(run_dir.join(f).is_file(), "missing {f}");
    }
    assert!(first.run.trace.iter().all(|r| r.shield_ok));
    let report = fs::read_to_string(run_dir.join("report.txt")).unwrap();
    assert!(report.contains("best_epoch = 1"));
    assert_eq!(ExperimentConfig::load(run_dir.join("config.txt")).unwrap(), cfg);

    cfg.run_name = "two".into();
    run_experiment(&cfg).unwrap();
    let a = fs::read(dir.path().join("one/trace.csv")).unwrap();
    let b = fs::read(dir.path().join("two/trace.csv")).unwrap();
    assert_eq!(a, b);
}
