use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "\
synthetic.n_users = 30
synthetic.n_items = 60
synthetic.n_interactions = 600
synthetic.n_genres = 4
synthetic.seed = 3
bpr.embedding_dim = 16
bpr.epochs = 10
policy.d_model = 16
policy.n_layers = 1
policy.n_heads = 2
policy.d_ff = 32
policy.max_seq = 128
sampling.max_new_tokens = 20
pretrain.epochs = 1
ppo.batch_size = 4
ppo.mini_batch_size = 2
ppo.ppo_epochs_per_update = 2
ppo.update_steps_per_epoch = 2
ppo.train_epochs = 1
ppo.eval_users = 6
run_name = small
";

fn shieldrec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shieldrec"))
        .args(args)
        .env("SHIELDREC_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("config.txt");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn unknown_config_key_fails_with_its_name() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "foo = 1\n");
    let out = shieldrec(&["ingest", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("foo"));
}

#[test]
fn stages_write_their_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let d = dir.path();
    let data = d.join("data");
    let out = shieldrec(&["ingest", "--config", &cfg, "--out", data.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(data.join("items.csv").is_file() && data.join("interactions.csv").is_file());

    let tower = d.join("tower");
    let out = shieldrec(&["train-recommender", "--config", &cfg, "--out", tower.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(tower.join("tower_checksum.txt").is_file());

    let pol = d.join("policy");
    let out = shieldrec(&["pretrain-policy", "--config", &cfg, "--out", pol.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(pol.join("policy_init.srlk").is_file() && pol.join("vocab.tsv").is_file());
}

#[test]
fn train_then_eval_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let runs = dir.path().join("runs");
    let out = shieldrec(&["train", "--config", &cfg, "--out", runs.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = runs.join("small");
    assert!(String::from_utf8_lossy(&out.stdout).contains("best_epoch = 1"));

    fs::remove_file(run.join("rel_ctr.csv")).unwrap();
    let out = shieldrec(&["plot-data", "--run", run.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(fs::read_to_string(run.join("rel_ctr.csv")).unwrap().lines().count(), 3);

    let out = shieldrec(&["eval", "--run", run.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("policy_epoch1.srlk"));
    assert!(text.contains("none,1.000000"));

    // A tower that no longer matches its recorded checksum is a shield
    // violation, reported with its own exit code.
    fs::write(run.join("tower/tower_checksum.txt"), "0000000000000001\n").unwrap();
    let out = shieldrec(&["eval", "--run", run.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn ablate_writes_one_row_per_variant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out_dir = dir.path().join("abl");
    let out = shieldrec(&[
        "ablate",
        "--config",
        &cfg,
        "--variants",
        "A,B",
        "--seeds",
        "1,2",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("ablation.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "config,beta,lr,steps,avg_reward,kl_proper,drift_signed,rel_ctr,spearman");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("A,0.05,"));
    assert!(lines[2].starts_with("B,0,"));

    let out = shieldrec(&["ablate", "--config", &cfg, "--variants", "Z", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}
