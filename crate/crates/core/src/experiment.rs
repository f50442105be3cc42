//! Experiment plumbing: the flat `key = value` configuration, the end-to-end
//! pipeline, the ablation grid, and plot-ready CSV projections of a run
//! trace.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::datamodel::build_context;
use crate::evalsim::{self, template_explain};
use crate::ingest::{load_csv, synthesize, DatasetConfig, InteractionDataset, SyntheticConfig};
use crate::policy::{
    build_corpus, build_vocabulary, pretrain, PolicyConfig, PolicyModel, PretrainConfig,
    PretrainReport, SamplingConfig, Tokenizer,
};
use crate::ppo::{self, Environment, PpoConfig, TrainRun};
use crate::rectower::{train_bpr, BprConfig, RecTower};
use crate::reward::{total_reward, CoherenceMode, RewardConfig};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    /// Directory holding `interactions.csv` and `items.csv`; the synthetic
    /// generator is used when unset.
    pub data_dir: Option<PathBuf>,
    pub bpr: BprConfig,
    pub policy: PolicyConfig,
    pub pretrain: PretrainConfig,
    pub adapter_seed: u64,
    pub sampling: SamplingConfig,
    pub reward: RewardConfig,
    pub ppo: PpoConfig,
    pub output_dir: PathBuf,
    pub run_name: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetConfig::default(),
            data_dir: None,
            bpr: BprConfig::default(),
            policy: PolicyConfig::default(),
            pretrain: PretrainConfig::default(),
            adapter_seed: 7,
            sampling: SamplingConfig::default(),
            reward: RewardConfig::default(),
            ppo: PpoConfig::default(),
            output_dir: PathBuf::from("runs"),
            run_name: "default".into(),
        }
    }
}

enum Field<'a> {
    Usize(&'a mut usize),
    U64(&'a mut u64),
    F32(&'a mut f32),
    F64(&'a mut f64),
    Bool(&'a mut bool),
    Text(&'a mut String),
    Path(&'a mut PathBuf),
    OptPath(&'a mut Option<PathBuf>),
    Mode(&'a mut CoherenceMode),
}

impl Field<'_> {
    fn render(&self) -> String {
        match self {
            Field::Usize(v) => v.to_string(),
            Field::U64(v) => v.to_string(),
            Field::F32(v) => v.to_string(),
            Field::F64(v) => v.to_string(),
            Field::Bool(v) => v.to_string(),
            Field::Text(v) => v.to_string(),
            Field::Path(v) => v.display().to_string(),
            Field::OptPath(v) => v.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            Field::Mode(v) => v.to_string(),
        }
    }

    fn set(&mut self, raw: &str) -> std::result::Result<(), String> {
        fn num<T: std::str::FromStr>(raw: &str) -> std::result::Result<T, String> {
            raw.parse().map_err(|_| format!("cannot parse {raw:?}"))
        }
        match self {
            Field::Usize(v) => **v = num(raw)?,
            Field::U64(v) => **v = num(raw)?,
            Field::F32(v) => **v = num(raw)?,
            Field::F64(v) => **v = num(raw)?,
            Field::Bool(v) => **v = num(raw)?,
            Field::Text(v) => **v = raw.to_string(),
            Field::Path(v) => **v = PathBuf::from(raw),
            Field::OptPath(v) => **v = (!raw.is_empty()).then(|| PathBuf::from(raw)),
            Field::Mode(v) => **v = raw.parse().map_err(|e: Error| e.to_string())?,
        }
        Ok(())
    }
}

impl ExperimentConfig {
    fn fields(&mut self) -> Vec<(&'static str, Field<'_>)> {
        let synth = self.dataset.synthetic.get_or_insert_with(SyntheticConfig::default);
        vec![
            ("run_name", Field::Text(&mut self.run_name)),
            ("output_dir", Field::Path(&mut self.output_dir)),
            ("data_dir", Field::OptPath(&mut self.data_dir)),
            ("dataset.min_user_interactions", Field::Usize(&mut self.dataset.min_user_interactions)),
            ("dataset.min_item_ratings", Field::Usize(&mut self.dataset.min_item_ratings)),
            ("dataset.train_fraction", Field::F64(&mut self.dataset.train_fraction)),
            ("synthetic.n_users", Field::Usize(&mut synth.n_users)),
            ("synthetic.n_items", Field::Usize(&mut synth.n_items)),
            ("synthetic.n_interactions", Field::Usize(&mut synth.n_interactions)),
            ("synthetic.n_genres", Field::Usize(&mut synth.n_genres)),
            ("synthetic.seed", Field::U64(&mut synth.seed)),
            ("bpr.embedding_dim", Field::Usize(&mut self.bpr.embedding_dim)),
            ("bpr.regularization", Field::F64(&mut self.bpr.regularization)),
            ("bpr.learning_rate", Field::F64(&mut self.bpr.learning_rate)),
            ("bpr.epochs", Field::Usize(&mut self.bpr.epochs)),
            ("bpr.seed", Field::U64(&mut self.bpr.seed)),
            ("policy.d_model", Field::Usize(&mut self.policy.d_model)),
            ("policy.n_layers", Field::Usize(&mut self.policy.n_layers)),
            ("policy.n_heads", Field::Usize(&mut self.policy.n_heads)),
            ("policy.d_ff", Field::Usize(&mut self.policy.d_ff)),
            ("policy.max_seq", Field::Usize(&mut self.policy.max_seq)),
            ("policy.lora_rank", Field::Usize(&mut self.policy.lora_rank)),
            ("policy.lora_alpha", Field::F32(&mut self.policy.lora_alpha)),
            ("policy.lora_dropout", Field::F32(&mut self.policy.lora_dropout)),
            ("policy.adapter_seed", Field::U64(&mut self.adapter_seed)),
            ("pretrain.epochs", Field::Usize(&mut self.pretrain.epochs)),
            ("pretrain.learning_rate", Field::F32(&mut self.pretrain.learning_rate)),
            ("pretrain.batch_size", Field::Usize(&mut self.pretrain.batch_size)),
            ("pretrain.holdout_fraction", Field::F64(&mut self.pretrain.holdout_fraction)),
            ("pretrain.max_grad_norm", Field::F32(&mut self.pretrain.max_grad_norm)),
            ("pretrain.seed", Field::U64(&mut self.pretrain.seed)),
            ("sampling.temperature", Field::F32(&mut self.sampling.temperature)),
            ("sampling.top_p", Field::F32(&mut self.sampling.top_p)),
            ("sampling.top_k", Field::Usize(&mut self.sampling.top_k)),
            ("sampling.repetition_penalty", Field::F32(&mut self.sampling.repetition_penalty)),
            ("sampling.max_new_tokens", Field::Usize(&mut self.sampling.max_new_tokens)),
            ("sampling.greedy", Field::Bool(&mut self.sampling.greedy)),
            ("sampling.seed", Field::U64(&mut self.sampling.seed)),
            ("reward.target_length", Field::F64(&mut self.reward.target_length)),
            ("reward.w_length", Field::F64(&mut self.reward.w_length)),
            ("reward.w_content", Field::F64(&mut self.reward.w_content)),
            ("reward.w_coherence", Field::F64(&mut self.reward.w_coherence)),
            ("reward.coherence_mode", Field::Mode(&mut self.reward.coherence_mode)),
            ("ppo.learning_rate", Field::F32(&mut self.ppo.learning_rate)),
            ("ppo.batch_size", Field::Usize(&mut self.ppo.batch_size)),
            ("ppo.mini_batch_size", Field::Usize(&mut self.ppo.mini_batch_size)),
            ("ppo.ppo_epochs_per_update", Field::Usize(&mut self.ppo.ppo_epochs_per_update)),
            ("ppo.clip_ratio", Field::F32(&mut self.ppo.clip_ratio)),
            ("ppo.value_coeff", Field::F32(&mut self.ppo.value_coeff)),
            ("ppo.entropy_coeff", Field::F32(&mut self.ppo.entropy_coeff)),
            ("ppo.kl_coeff", Field::F32(&mut self.ppo.kl_coeff)),
            ("ppo.gae_lambda", Field::F64(&mut self.ppo.gae_lambda)),
            ("ppo.gamma", Field::F64(&mut self.ppo.gamma)),
            ("ppo.max_grad_norm", Field::F32(&mut self.ppo.max_grad_norm)),
            ("ppo.update_steps_per_epoch", Field::Usize(&mut self.ppo.update_steps_per_epoch)),
            ("ppo.train_epochs", Field::Usize(&mut self.ppo.train_epochs)),
            ("ppo.eval_users", Field::Usize(&mut self.ppo.eval_users)),
            ("ppo.eval_seed", Field::U64(&mut self.ppo.eval_seed)),
            ("ppo.seed", Field::U64(&mut self.ppo.seed)),
        ]
    }

    /// Parses `key = value` lines over the defaults. Blank lines and lines
    /// starting with `#` are skipped; unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let mut fields = cfg.fields();
            let (_, field) = fields
                .iter_mut()
                .find(|(k, _)| *k == key)
                .ok_or_else(|| Error::Config(format!("line {}: unknown key {key:?}", n + 1)))?;
            field
                .set(value)
                .map_err(|e| Error::Config(format!("line {}: {key}: {e}", n + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// Every key with its current value, in a fixed order.
    pub fn to_text(&self) -> String {
        let mut copy = self.clone();
        let mut s = String::new();
        for (k, f) in copy.fields() {
            let _ = writeln!(s, "{k} = {}", f.render());
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.bpr.validate()?;
        self.sampling.validate()?;
        self.reward.validate()?;
        self.ppo.validate()?;
        let mut p = self.policy.clone();
        p.vocab_size = p.vocab_size.max(1);
        p.validate()?;
        if self.sampling.max_new_tokens >= self.policy.max_seq {
            return Err(Error::Config("max_new_tokens must leave room for a prompt".into()));
        }
        Ok(())
    }

    /// Sets the seed of everything downstream of the reference policy.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.ppo.seed = seed;
        self.sampling.seed = seed;
        self
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(&self.run_name)
    }

    pub fn prompt_budget(&self) -> usize {
        self.policy.max_seq - self.sampling.max_new_tokens
    }
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<InteractionDataset> {
    match &cfg.data_dir {
        Some(dir) => load_csv(dir.join("interactions.csv"), dir.join("items.csv"), &cfg.dataset),
        None => synthesize(&cfg.dataset),
    }
}

/// Everything a PPO run needs that does not depend on the PPO seed.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub dataset: InteractionDataset,
    pub tower: RecTower,
    pub tokenizer: Tokenizer,
    /// Pretrained policy with zero-initialized adapters attached.
    pub init: PolicyModel,
    pub pretrain_report: PretrainReport,
}

impl Prepared {
    pub fn environment<'a>(&'a self, cfg: &'a ExperimentConfig) -> Environment<'a> {
        Environment {
            dataset: &self.dataset,
            tower: &self.tower,
            tokenizer: &self.tokenizer,
            init: &self.init,
            sampling: &cfg.sampling,
            reward: &cfg.reward,
        }
    }
}

pub fn train_tower(cfg: &ExperimentConfig, dataset: &InteractionDataset) -> Result<RecTower> {
    Ok(train_bpr(dataset, &cfg.bpr)?.freeze())
}

/// Builds the vocabulary and corpus, pretrains the base weights and
/// attaches zero-initialized adapters.
pub fn pretrain_policy(
    cfg: &ExperimentConfig,
    dataset: &InteractionDataset,
) -> Result<(Tokenizer, PolicyModel, PretrainReport)> {
    let tokenizer = build_vocabulary(dataset);
    let pcfg = PolicyConfig {
        vocab_size: tokenizer.len(),
        ..cfg.policy.clone()
    };
    let mut model = PolicyModel::new(pcfg, cfg.pretrain.seed)?;
    let corpus = build_corpus(dataset, &tokenizer, cfg.prompt_budget(), cfg.pretrain.seed)?;
    let report = pretrain(&mut model, &corpus, &cfg.pretrain)?;
    log::info!(
        "pretrained on {} examples: held-out loss {:.4} -> {:.4}",
        corpus.len(),
        report.holdout_before,
        report.holdout_after
    );
    model.attach_adapters(cfg.adapter_seed)?;
    Ok((tokenizer, model, report))
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    let dataset = load_dataset(cfg)?;
    log::info!("dataset: {}", dataset.summary());
    let tower = train_tower(cfg, &dataset)?;
    let (tokenizer, init, pretrain_report) = pretrain_policy(cfg, &dataset)?;
    log::info!("trainable fraction {:.4}", init.trainable_fraction());
    Ok(Prepared {
        dataset,
        tower,
        tokenizer,
        init,
        pretrain_report,
    })
}

/// Relative CTR of the template baseline on the standard user sample.
pub fn template_rel_ctr(prepared: &Prepared, cfg: &ExperimentConfig) -> Result<f64> {
    let ds = &prepared.dataset;
    let users = ppo::sample_eval_users(ds, cfg.ppo.eval_users, cfg.ppo.eval_seed);
    let none = evalsim::simulate_ctr(&prepared.tower, ds, &users, |_, _| Ok(None))?;
    let with = evalsim::simulate_ctr(&prepared.tower, ds, &users, |u, it| {
        Ok(Some(template_explain(&build_context(u, it, &ds.items))))
    })?;
    evalsim::relative_ctr(with, none)
}

/// Outcome of one PPO run, with the comparison baselines filled in.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub run: TrainRun,
    pub policy: PolicyModel,
}

pub fn run_ppo(prepared: &Prepared, cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<RunOutcome> {
    let env = prepared.environment(cfg);
    let mut policy = prepared.init.clone();
    let mut run = ppo::train(&mut policy, &env, &cfg.ppo, out_dir)?;
    let zero_shot = run.trace.first().map_or(1.0, |r| r.rel_ctr);
    let template = template_rel_ctr(prepared, cfg)?;
    for report in [&mut run.best_report, &mut run.final_report] {
        report.baselines.insert("none".into(), 1.0);
        report.baselines.insert("template".into(), template);
        report.baselines.insert("zero_shot".into(), zero_shot);
    }
    Ok(RunOutcome { run, policy })
}

/// Writes every artifact of a full run into `cfg.run_dir()`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let dir = cfg.run_dir();
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.txt"), cfg.to_text())?;
    let prepared = prepare(cfg)?;
    prepared.dataset.export_csv(dir.join("data"))?;
    fs::write(dir.join("dataset_summary.txt"), prepared.dataset.summary() + "\n")?;
    prepared.tower.save(dir.join("tower"))?;
    fs::write(dir.join("vocab.tsv"), prepared.tokenizer.to_tsv())?;
    prepared.init.save(dir.join("policy_init.srlk"))?;
    let outcome = run_ppo(&prepared, cfg, Some(&dir))?;
    fs::write(dir.join("trace.csv"), ppo::trace_csv(&outcome.run.trace))?;
    fs::write(dir.join("report.txt"), final_report(&prepared, &outcome)?)?;
    emit_plot_data(&dir)?;
    Ok(outcome)
}

/// Human-readable summary of a run.
pub fn final_report(prepared: &Prepared, outcome: &RunOutcome) -> Result<String> {
    let run = &outcome.run;
    let best = &run.best_report;
    let ranks = prepared.tower.rank_metrics(&prepared.dataset, 10, 20)?;
    let last = run.trace.last();
    let mut s = String::new();
    let _ = writeln!(s, "best_epoch = {}", run.best_epoch);
    let _ = writeln!(s, "tower_checksum = {:016x}", run.tower_checksum);
    let _ = writeln!(s, "policy_base_checksum = {:016x}", run.base_checksum);
    let _ = writeln!(s, "trainable_fraction = {:.6}", prepared.init.trainable_fraction());
    let _ = writeln!(s, "pretrain_holdout_loss = {:.6}", prepared.pretrain_report.holdout_after);
    let _ = writeln!(s, "ndcg10 = {:.6}", ranks.ndcg_at_10);
    let _ = writeln!(s, "recall20 = {:.6}", ranks.recall_at_20);
    let _ = writeln!(s, "spearman = {:.6}", last.map_or(1.0, |r| r.spearman));
    let _ = writeln!(s, "drift_signed = {:.6}", last.map_or(0.0, |r| r.metrics.drift_signed));
    let _ = writeln!(s, "method,rel_ctr");
    for name in ["none", "template", "zero_shot"] {
        let _ = writeln!(s, "{name},{:.6}", best.baselines.get(name).copied().unwrap_or(f64::NAN));
    }
    let _ = writeln!(s, "trained,{:.6}", best.rel_ctr);
    let _ = writeln!(s, "dwell_time = {:.4}", best.dwell_time);
    let _ = writeln!(s, "satisfaction = {:.4}", best.satisfaction);
    let _ = writeln!(s, "diversity = {:.4}", best.diversity);
    let _ = writeln!(s, "mean_reward = {:.4}", best.mean_reward);
    Ok(s)
}

/// Named variants of the ablation grid.
pub const VARIANTS: [char; 6] = ['A', 'B', 'C', 'D', 'E', 'F'];

/// Applies one ablation variant to a base PPO configuration. `A` keeps the
/// defaults; each other variant changes a single knob.
pub fn apply_variant(base: &PpoConfig, variant: char) -> Result<PpoConfig> {
    let mut c = base.clone();
    match variant {
        'A' => {}
        'B' => c.kl_coeff = 0.0,
        'C' => c.learning_rate = 1e-5,
        'D' => c.update_steps_per_epoch = 50,
        'E' => c.kl_coeff = 0.1,
        'F' => c.train_epochs = 15,
        other => return Err(Error::Config(format!("unknown ablation variant {other:?}"))),
    }
    Ok(c)
}

pub fn parse_variants(list: &str) -> Result<Vec<char>> {
    let mut out = Vec::new();
    for part in list.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let mut chars = part.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) if VARIANTS.contains(&c.to_ascii_uppercase()) => out.push(c.to_ascii_uppercase()),
            _ => return Err(Error::Config(format!("unknown ablation variant {part:?}"))),
        }
    }
    if out.is_empty() {
        return Err(Error::Config("no ablation variants given".into()));
    }
    Ok(out)
}

/// Seed-averaged final-epoch numbers of one ablation variant.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub config: char,
    pub beta: f32,
    pub lr: f32,
    pub steps: usize,
    pub avg_reward: f64,
    pub kl_proper: f64,
    pub drift_signed: f64,
    pub rel_ctr: f64,
    pub spearman: f64,
    /// Set when any seed failed; the numbers then cover the others.
    pub error: Option<String>,
}

pub const ABLATION_HEADER: &str = "config,beta,lr,steps,avg_reward,kl_proper,drift_signed,rel_ctr,spearman";

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut s = String::from(ABLATION_HEADER);
    s.push('\n');
    for r in rows {
        let _ = write!(
            s,
            "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
            r.config, r.beta, r.lr, r.steps, r.avg_reward, r.kl_proper, r.drift_signed, r.rel_ctr, r.spearman
        );
        if let Some(e) = &r.error {
            let _ = write!(s, ",error: {}", e.replace(',', ";"));
        }
        s.push('\n');
    }
    s
}

/// Runs each variant for each seed on one shared dataset, tower and
/// reference policy. A failing run is recorded on its row and the grid
/// continues. `on_run` sees every finished run.
pub fn run_ablation(
    prepared: &Prepared,
    base: &ExperimentConfig,
    variants: &[char],
    seeds: &[u64],
    mut on_run: impl FnMut(char, u64, &TrainRun),
) -> Result<Vec<AblationRow>> {
    if seeds.is_empty() {
        return Err(Error::Config("ablation needs at least one seed".into()));
    }
    let mut rows = Vec::new();
    for &v in variants {
        let ppo_cfg = apply_variant(&base.ppo, v)?;
        let mut row = AblationRow {
            config: v,
            beta: ppo_cfg.kl_coeff,
            lr: ppo_cfg.learning_rate,
            steps: ppo_cfg.update_steps_per_epoch,
            avg_reward: 0.0,
            kl_proper: 0.0,
            drift_signed: 0.0,
            rel_ctr: 0.0,
            spearman: 0.0,
            error: None,
        };
        let mut ok = 0usize;
        for &seed in seeds {
            let mut cfg = base.clone().with_seed(seed);
            cfg.ppo = PpoConfig { seed, ..ppo_cfg.clone() };
            let env = prepared.environment(&cfg);
            let mut policy = prepared.init.clone();
            match ppo::train(&mut policy, &env, &cfg.ppo, None) {
                Ok(run) => {
                    let last = run.trace.last().expect("trace has the epoch-0 row");
                    row.avg_reward += last.metrics.mean_reward;
                    row.kl_proper += last.metrics.kl_proper;
                    row.drift_signed += last.metrics.drift_signed;
                    row.rel_ctr += last.rel_ctr;
                    row.spearman += last.spearman;
                    ok += 1;
                    on_run(v, seed, &run);
                }
                Err(e) => {
                    log::error!("variant {v} seed {seed}: {e}");
                    row.error = Some(e.to_string());
                }
            }
        }
        if ok > 0 {
            let k = ok as f64;
            row.avg_reward /= k;
            row.kl_proper /= k;
            row.drift_signed /= k;
            row.rel_ctr /= k;
            row.spearman /= k;
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Reads `trace.csv` in `run_dir` and writes `rel_ctr.csv` and `drift.csv`
/// with columns `epoch,value`.
pub fn emit_plot_data(run_dir: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
    let dir = run_dir.as_ref();
    let trace = dir.join("trace.csv");
    let text = fs::read_to_string(&trace)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", trace.display())))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| Error::Data(format!("trace lacks column {name}")))
    };
    let (epoch, rel, drift) = (col("epoch")?, col("rel_ctr")?, col("drift_signed")?);
    let mut rel_csv = String::from("epoch,value\n");
    let mut drift_csv = String::from("epoch,value\n");
    let mut rows = 0;
    for line in lines.filter(|l| !l.is_empty()) {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != header.len() {
            return Err(Error::Data(format!("malformed trace line {line:?}")));
        }
        let _ = writeln!(rel_csv, "{},{}", cells[epoch], cells[rel]);
        let _ = writeln!(drift_csv, "{},{}", cells[epoch], cells[drift]);
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Empty("run trace"));
    }
    let (a, b) = (dir.join("rel_ctr.csv"), dir.join("drift.csv"));
    fs::write(&a, rel_csv)?;
    fs::write(&b, drift_csv)?;
    Ok((a, b))
}

/// Scores the template baseline's explanations with the reward, for
/// reporting alongside trained runs.
pub fn template_mean_reward(prepared: &Prepared, cfg: &ExperimentConfig) -> Result<f64> {
    let ds = &prepared.dataset;
    let users = ppo::sample_eval_users(ds, cfg.ppo.eval_users, cfg.ppo.eval_seed);
    let (mut total, mut n) = (0.0, 0usize);
    for u in users {
        for (item, _) in prepared.tower.recommend(u, evalsim::CTR_TOP_K)? {
            let ctx = build_context(&ds.users[u], &ds.items[&item], &ds.items);
            total += total_reward(&ctx, &template_explain(&ctx), &cfg.reward).r_total;
            n += 1;
        }
    }
    Ok(total / n.max(1) as f64)
}
