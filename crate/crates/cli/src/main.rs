//! `shieldrec`: runs the experiment pipeline or any one stage of it.
//!
//! Every verb reads the flat `key = value` configuration given by `--config`
//! (defaults when omitted). A shield violation exits with code 3, any other
//! failure with code 1.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use shieldrec::evalsim::{self, template_explain};
use shieldrec::experiment::{self, ExperimentConfig};
use shieldrec::policy::{PolicyConfig, PolicyModel, Tokenizer};
use shieldrec::ppo;
use shieldrec::rectower::RecTower;

const SHIELD_EXIT: u8 = 3;

#[derive(Parser)]
#[command(name = "shieldrec", version, about = "Explanations for a frozen recommender, tuned with PPO")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Configuration file; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the PPO and sampling seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Load or synthesize the dataset and write it as CSV.
    Ingest {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the BPR tower, freeze it and save it with its checksum.
    TrainRecommender {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pretrain the reference policy and save it with its vocabulary.
    PretrainPolicy {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full pipeline: data, tower, reference policy, PPO, report.
    Train {
        #[command(flatten)]
        common: Common,
        /// Output root; the run goes to `<out>/<run_name>`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run ablation variants on a shared dataset, tower and reference policy.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Comma-separated subset of A..F.
        #[arg(long, default_value = "A,B,C,D,E,F")]
        variants: String,
        /// Comma-separated seeds to average over; the config seed when omitted.
        #[arg(long)]
        seeds: Option<String>,
        /// Directory for `ablation.csv`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a saved policy checkpoint from a finished run.
    Eval {
        /// Run directory written by `train`.
        #[arg(long)]
        run: PathBuf,
        /// Checkpoint to evaluate; the last epoch's when omitted.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Write `rel_ctr.csv` and `drift.csv` from a run's trace.
    PlotData {
        #[arg(long)]
        run: PathBuf,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    Ok(match common.seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    })
}

fn parse_seeds(list: &str) -> Result<Vec<u64>> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().with_context(|| format!("bad seed {s:?}")))
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { common, out } => {
            let cfg = load_config(&common)?;
            cfg.validate()?;
            let ds = experiment::load_dataset(&cfg)?;
            ds.export_csv(&out)?;
            fs::write(out.join("dataset_summary.txt"), ds.summary() + "\n")?;
            println!("{}", ds.summary());
        }
        Command::TrainRecommender { common, out } => {
            let cfg = load_config(&common)?;
            cfg.validate()?;
            let ds = experiment::load_dataset(&cfg)?;
            let tower = experiment::train_tower(&cfg, &ds)?;
            tower.save(&out)?;
            let m = tower.rank_metrics(&ds, 10, 20)?;
            println!("checksum {:016x}", tower.checksum());
            println!("ndcg10 {:.6} recall20 {:.6}", m.ndcg_at_10, m.recall_at_20);
        }
        Command::PretrainPolicy { common, out } => {
            let cfg = load_config(&common)?;
            cfg.validate()?;
            let ds = experiment::load_dataset(&cfg)?;
            let (tok, model, report) = experiment::pretrain_policy(&cfg, &ds)?;
            fs::create_dir_all(&out)?;
            fs::write(out.join("vocab.tsv"), tok.to_tsv())?;
            model.save(out.join("policy_init.srlk"))?;
            println!("held-out loss {:.4} -> {:.4}", report.holdout_before, report.holdout_after);
            println!("base checksum {:016x}", model.base_checksum());
        }
        Command::Train { common, out } => {
            let mut cfg = load_config(&common)?;
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            let outcome = experiment::run_experiment(&cfg)?;
            let dir = cfg.run_dir();
            print!("{}", fs::read_to_string(dir.join("report.txt"))?);
            if !outcome.run.trace.iter().all(|r| r.shield_ok) {
                bail!("ranking metrics changed during training");
            }
            println!("artifacts in {}", dir.display());
        }
        Command::Ablate {
            common,
            variants,
            seeds,
            out,
        } => {
            let cfg = load_config(&common)?;
            let variants = experiment::parse_variants(&variants)?;
            let seeds = match seeds {
                Some(s) => parse_seeds(&s)?,
                None => vec![cfg.ppo.seed],
            };
            let prepared = experiment::prepare(&cfg)?;
            let rows = experiment::run_ablation(&prepared, &cfg, &variants, &seeds, |v, s, run| {
                let last = run.trace.last().expect("trace has the epoch-0 row");
                log::info!("variant {v} seed {s}: reward {:.4} drift {:.4}", last.metrics.mean_reward, last.metrics.drift_signed);
            })?;
            let csv = experiment::ablation_csv(&rows);
            fs::create_dir_all(&out)?;
            fs::write(out.join("ablation.csv"), &csv)?;
            print!("{csv}");
        }
        Command::Eval { run, checkpoint } => evaluate(&run, checkpoint.as_deref())?,
        Command::PlotData { run } => {
            let (a, b) = experiment::emit_plot_data(&run)?;
            println!("{}\n{}", a.display(), b.display());
        }
    }
    Ok(())
}

fn last_checkpoint(run: &Path) -> Result<PathBuf> {
    let mut best: Option<(usize, PathBuf)> = None;
    for entry in fs::read_dir(run)? {
        let path = entry?.path();
        let epoch = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_prefix("policy_epoch"))
            .and_then(|n| n.strip_suffix(".srlk"))
            .and_then(|n| n.parse::<usize>().ok());
        if let Some(e) = epoch {
            if best.as_ref().is_none_or(|(b, _)| e > *b) {
                best = Some((e, path));
            }
        }
    }
    best.map(|(_, p)| p)
        .with_context(|| format!("no policy checkpoints in {}", run.display()))
}

fn evaluate(run: &Path, checkpoint: Option<&Path>) -> Result<()> {
    let cfg = ExperimentConfig::load(run.join("config.txt")).context("reading the run's config.txt")?;
    let ds = experiment::load_dataset(&cfg)?;
    let tower = RecTower::load(run.join("tower"), &ds)?;
    let recorded = fs::read_to_string(run.join("tower").join("tower_checksum.txt"))?;
    let recorded = u64::from_str_radix(recorded.trim(), 16).context("bad tower checksum file")?;
    if tower.checksum() != recorded {
        return Err(shieldrec::Error::ShieldViolation {
            component: "recommendation tower",
            expected: recorded,
            actual: tower.checksum(),
        }
        .into());
    }
    let tokenizer = Tokenizer::from_tsv(&fs::read_to_string(run.join("vocab.tsv"))?)?;
    let pcfg = PolicyConfig {
        vocab_size: tokenizer.len(),
        ..cfg.policy.clone()
    };
    let init = PolicyModel::load(pcfg.clone(), run.join("policy_init.srlk"))?;
    let path = match checkpoint {
        Some(p) => p.to_path_buf(),
        None => last_checkpoint(run)?,
    };
    let policy = PolicyModel::load(pcfg, &path)?;
    if policy.base_checksum() != init.base_checksum() {
        return Err(shieldrec::Error::ShieldViolation {
            component: "policy base weights",
            expected: init.base_checksum(),
            actual: policy.base_checksum(),
        }
        .into());
    }

    let env = ppo::Environment {
        dataset: &ds,
        tower: &tower,
        tokenizer: &tokenizer,
        init: &init,
        sampling: &cfg.sampling,
        reward: &cfg.reward,
    };
    let users = ppo::sample_eval_users(&ds, cfg.ppo.eval_users, cfg.ppo.eval_seed);
    let none = evalsim::simulate_ctr(&tower, &ds, &users, |_, _| Ok(None))?;
    let template = evalsim::simulate_ctr(&tower, &ds, &users, |u, it| {
        Ok(Some(template_explain(&shieldrec::datamodel::build_context(u, it, &ds.items))))
    })?;
    let zero_shot = ppo::evaluate_policy(&init, &env, &users, none, cfg.ppo.eval_seed)?;
    let trained = ppo::evaluate_policy(&policy, &env, &users, none, cfg.ppo.eval_seed)?;
    println!("checkpoint {}", path.display());
    println!("method,rel_ctr,mean_reward,dwell_time,satisfaction,diversity");
    println!("none,1.000000,,,,");
    println!("template,{:.6},,,,", evalsim::relative_ctr(template, none)?);
    for (name, r) in [("zero_shot", &zero_shot), ("trained", &trained)] {
        println!(
            "{name},{:.6},{:.6},{:.4},{:.4},{:.4}",
            r.rel_ctr, r.mean_reward, r.dwell_time, r.satisfaction, r.diversity
        );
    }
    let m = tower.rank_metrics(&ds, 10, 20)?;
    println!("ndcg10 {:.6} recall20 {:.6}", m.ndcg_at_10, m.recall_at_20);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SHIELDREC_LOG", "info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let shield = e
                .chain()
                .any(|c| c.downcast_ref::<shieldrec::Error>().is_some_and(shieldrec::Error::is_shield_violation));
            ExitCode::from(if shield { SHIELD_EXIT } else { 1 })
        }
    }
}
