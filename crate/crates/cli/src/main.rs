//! `trajex`: train, collect, rank, explain and serve.
//!
//! Exit codes: 0 success, 1 unexpected failure, 2 configuration or flag
//! error, 3 missing, malformed or mismatched data, 4 an artifact violates
//! an invariant, 5 an invalid counterfactual request.

mod run;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use trajex_core::agent::train;
use trajex_core::config::RunConfig;
use trajex_core::counterfactual::{self, compare, generate, CounterfactualSet};
use trajex_core::envsim::Env;
use trajex_core::importance::{Analyzer, RadicalKind};
use trajex_core::ranking::{rank, OutcomeRule, RankingReport};
use trajex_core::report::{artifact_name, counterfactual_figure_data, ranking_table, RankingTable};
use trajex_core::trajstore::{collect, RolloutMode};
use trajex_core::{Error, ErrorCategory};

use run::{Loaded, Manifest, RunDir, MANIFEST_FORMAT};

#[derive(Parser)]
#[command(name = "trajex", version, about = "Trajectory importance and counterfactual explanations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a Q-learning agent and save the final and checkpoint Q-tables.
    Train(TrainArgs),
    /// Roll out every checkpoint and save the mixed-quality dataset.
    Collect(CollectArgs),
    /// Rank the dataset under one importance metric.
    Rank(RankArgs),
    /// Forbid-one-action counterfactuals for one trajectory.
    Cf(CfArgs),
    /// Ranking table for every standard metric plus counterfactual figure data.
    Report(ReportArgs),
    /// Re-check a run's artifacts and recompute derived fields.
    Validate(ValidateArgs),
    /// Serve the run over HTTP for the explorer UI.
    Serve(ServeArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Preset environment: grid1x2, grid3, grid5 or lander.
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    env: Option<String>,
    /// TOML run config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Override train.episodes.
    #[arg(long)]
    episodes: Option<usize>,
    /// Run directory to create.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Run directory created by `trajex train`.
    #[arg(long)]
    run: PathBuf,
    /// Dataset file, default DIR/dataset.traj.jsonl.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Override the run's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct CollectArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    episodes_per_checkpoint: Option<usize>,
    /// Exploration rate during rollouts; 0 gives greedy rollouts.
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Args)]
struct MetricArgs {
    /// classic, naive, bellman, entropy, vnorm, vgoal or kl.
    #[arg(long, default_value = "vgoal")]
    metric: String,
    /// KL reference: uniform, point:A or custom:W1,W2,...
    #[arg(long)]
    kl_reference: Option<String>,
    /// Required for the kl metric.
    #[arg(long)]
    experimental: bool,
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Args)]
struct RankArgs {
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    metric: MetricArgs,
}

#[derive(Args)]
struct CfArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Explain this trajectory instead of the metric's selected target.
    #[arg(long)]
    trajectory: Option<String>,
    #[command(flatten)]
    metric: MetricArgs,
    /// Maximum number of rollouts.
    #[arg(long)]
    budget: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    budget: Option<usize>,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long)]
    k: Option<usize>,
}

/// `println!` that exits quietly when the reader has gone away, as with
/// `trajex report | head`.
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        if let Err(e) = write!(std::io::stdout().lock(), $($arg)*) {
            if e.kind() == std::io::ErrorKind::BrokenPipe {
                std::process::exit(0);
            }
            return Err(e.into());
        }
    }};
}

macro_rules! outln {
    ($($arg:tt)*) => {{ out!("{}\n", format_args!($($arg)*)) }};
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Collect(a) => cmd_collect(a),
        Command::Rank(a) => cmd_rank(a),
        Command::Cf(a) => cmd_cf(a),
        Command::Report(a) => cmd_report(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Serve(a) => cmd_serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>().map(Error::category) {
        Some(ErrorCategory::Config) => 2,
        Some(ErrorCategory::Data) => 3,
        Some(ErrorCategory::Property) => 4,
        Some(ErrorCategory::Usage) => 5,
        None => 1,
    }
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let mut cfg = match (&a.env, &a.config) {
        (Some(name), None) => RunConfig::for_preset(name)?,
        (None, Some(path)) => RunConfig::load(path)?,
        _ => unreachable!("clap enforces exactly one of --env and --config"),
    };
    if let Some(n) = a.episodes {
        cfg.train.episodes = n;
    }
    cfg.validate()?;
    let env = Env::from_config(&cfg.env)?;
    let hash = cfg.env.hash();
    let out = train(&env, &cfg.train, &hash, a.seed)?;

    let dir = RunDir::new(&a.out);
    dir.create()?;
    dir.write(&dir.config_path(), &cfg.to_toml_string())?;
    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        version: 1,
        env: cfg.env.name(),
        config_hash: hash.clone(),
        seed: a.seed,
    };
    dir.write(&dir.manifest_path(), &(serde_json::to_string_pretty(&manifest)? + "\n"))?;
    out.qtable.save(&dir.qtable_path())?;
    for (i, ck) in out.checkpoints.iter().enumerate() {
        ck.qtable.save(&dir.checkpoint_path(i))?;
    }
    outln!(
        "trained {} for {} episodes (seed {}, config {hash}); {} checkpoints in {}",
        cfg.env.name(),
        cfg.train.episodes,
        a.seed,
        out.checkpoints.len(),
        a.out.display()
    );
    Ok(())
}

fn cmd_collect(a: CollectArgs) -> Result<()> {
    let dir = RunDir::new(&a.run.run);
    let mut cfg = dir.config()?;
    let manifest = dir.manifest()?;
    if let Some(n) = a.episodes_per_checkpoint {
        cfg.collect.episodes_per_checkpoint = n;
    }
    if let Some(e) = a.epsilon {
        cfg.collect.epsilon = e;
    }
    cfg.validate()?;
    let env = Env::from_config(&cfg.env)?;
    let hash = cfg.env.hash();
    let q = dir.qtable()?;
    q.check_env(env.spec(), &hash)?;
    let checkpoints = dir.checkpoints(&cfg)?;
    for ck in &checkpoints {
        ck.qtable.check_env(env.spec(), &hash)?;
    }
    let seed = a.run.seed.unwrap_or(manifest.seed);
    let ds = collect(
        &env,
        &checkpoints,
        &q,
        cfg.collect.episodes_per_checkpoint,
        RolloutMode::from_epsilon(cfg.collect.epsilon),
        seed,
    )?;
    let path = a.run.dataset.clone().unwrap_or_else(|| dir.dataset_path());
    ds.save(&path)?;
    let (min, max) = ds
        .trajectories
        .iter()
        .fold((usize::MAX, 0), |(lo, hi), t| (lo.min(t.length), hi.max(t.length)));
    outln!(
        "collected {} trajectories (lengths {min}..={max}) into {}",
        ds.trajectories.len(),
        path.display()
    );
    Ok(())
}

fn parse_metric(m: &MetricArgs) -> Result<RadicalKind> {
    Ok(RadicalKind::parse(&m.metric, m.kl_reference.as_deref(), m.experimental)?)
}

fn ranking_files(dir: &RunDir, l: &Loaded, report: &RankingReport, seed: u64) -> Result<()> {
    let name = |ext| artifact_name("ranking", report.kind.name(), report.k, seed, &l.config_hash, ext);
    dir.write(&dir.reports_dir().join(name("json")), &(report.to_json() + "\n"))?;
    dir.write(&dir.reports_dir().join(name("csv")), &report.to_csv())?;
    Ok(())
}

fn cmd_rank(a: RankArgs) -> Result<()> {
    let dir = RunDir::new(&a.run.run);
    let l = Loaded::open(&dir, a.run.dataset.as_deref())?;
    let kind = parse_metric(&a.metric)?;
    let k = a.metric.k.unwrap_or(l.cfg.analysis.k);
    let seed = a.run.seed.unwrap_or(l.manifest.seed);
    let analyzer = Analyzer::new(&l.env, &l.qtable, l.cfg.analysis.temperature);
    let report = rank(&analyzer, &l.dataset, &kind, k, OutcomeRule::for_env(&l.env))?;
    ranking_files(&dir, &l, &report, seed)?;
    outln!("{} top-{k}:", kind);
    for e in report.entries.iter().take(k) {
        outln!(
            "  {:<14} score {:>12.6}  length {:>4}  reward {:>9.2}",
            e.id, e.score, e.length, e.total_reward
        );
    }
    outln!(
        "avg length {:.2}, avg reward {:.2}, selected {}",
        report.avg_length, report.avg_reward, report.selected_id
    );
    Ok(())
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

fn write_counterfactuals(dir: &RunDir, l: &Loaded, set: &CounterfactualSet, label: &str, k: usize, seed: u64) -> Result<()> {
    let summary = compare(set)?;
    let name = |stem, ext| artifact_name(stem, label, k, seed, &l.config_hash, ext);
    dir.write(&dir.reports_dir().join(name("cf", "json")), &(set.to_json() + "\n"))?;
    dir.write(
        &dir.reports_dir().join(name("cf-summary", "json")),
        &(serde_json::to_string_pretty(&summary)? + "\n"),
    )?;
    let figure = counterfactual_figure_data(set)?;
    let stem = name("figure", "csv");
    figure.write(&dir.reports_dir(), stem.trim_end_matches(".csv"))?;
    outln!(
        "{label}: {} rollouts from {} (length {}, reward {:.2}); length dominance {:.4}, reward dominance {:.4}, strictly better {}",
        set.rollouts.len(),
        set.original_id,
        set.original.length,
        set.original.total_reward,
        summary.length_dominance,
        summary.reward_dominance,
        summary.strictly_better
    );
    Ok(())
}

fn cmd_cf(a: CfArgs) -> Result<()> {
    let dir = RunDir::new(&a.run.run);
    let l = Loaded::open(&dir, a.run.dataset.as_deref())?;
    let seed = a.run.seed.unwrap_or(l.manifest.seed);
    let k = a.metric.k.unwrap_or(l.cfg.analysis.k);
    let budget = a.budget.unwrap_or(l.cfg.analysis.budget);
    let (target_id, label) = match &a.trajectory {
        Some(id) => (id.clone(), sanitize(id)),
        None => {
            let kind = parse_metric(&a.metric)?;
            let analyzer = Analyzer::new(&l.env, &l.qtable, l.cfg.analysis.temperature);
            let report = rank(&analyzer, &l.dataset, &kind, k, OutcomeRule::for_env(&l.env))?;
            (report.selected_id, kind.name().to_string())
        }
    };
    let target = l.dataset.get(&target_id)?;
    let set = generate(
        &l.env,
        &l.qtable,
        &l.config_hash,
        target,
        Some(budget),
        counterfactual::rollout_seed(seed),
    )?;
    write_counterfactuals(&dir, &l, &set, &label, k, seed)
}

fn table_name(l: &Loaded, k: usize, seed: u64, ext: &str) -> String {
    artifact_name("table", "all", k, seed, &l.config_hash, ext)
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    let dir = RunDir::new(&a.run.run);
    let l = Loaded::open(&dir, a.run.dataset.as_deref())?;
    let seed = a.run.seed.unwrap_or(l.manifest.seed);
    let k = a.k.unwrap_or(l.cfg.analysis.k);
    let budget = a.budget.unwrap_or(l.cfg.analysis.budget);
    let rule = OutcomeRule::for_env(&l.env);
    let analyzer = Analyzer::new(&l.env, &l.qtable, l.cfg.analysis.temperature);
    let table = ranking_table(&analyzer, &l.dataset, &RadicalKind::STANDARD, k, rule)?;
    let reports = dir.reports_dir();
    dir.write(&reports.join(table_name(&l, k, seed, "csv")), &table.to_csv())?;
    dir.write(&reports.join(table_name(&l, k, seed, "txt")), &table.to_text())?;
    dir.write(
        &reports.join(table_name(&l, k, seed, "json")),
        &(serde_json::to_string_pretty(&table)? + "\n"),
    )?;
    out!("{}", table.to_text());
    for kind in RadicalKind::STANDARD.iter() {
        let report = rank(&analyzer, &l.dataset, kind, k, rule)?;
        ranking_files(&dir, &l, &report, seed)?;
        let target = l.dataset.get(&report.selected_id)?;
        let set = generate(
            &l.env,
            &l.qtable,
            &l.config_hash,
            target,
            Some(budget),
            counterfactual::rollout_seed(seed),
        )?;
        if set.rollouts.is_empty() {
            outln!("{}: no counterfactuals for {}", kind, report.selected_id);
            continue;
        }
        write_counterfactuals(&dir, &l, &set, kind.name(), k, seed)?;
    }
    Ok(())
}

fn cmd_validate(a: ValidateArgs) -> Result<()> {
    let dir = RunDir::new(&a.run.run);
    let l = Loaded::open(&dir, a.run.dataset.as_deref())?;
    l.dataset.validate()?;
    for t in &l.dataset.trajectories {
        t.replay_check(&l.env)
            .with_context(|| format!("trajectory {} does not replay", t.id))?;
    }
    let checkpoints = dir.checkpoints(&l.cfg)?;
    for ck in &checkpoints {
        ck.qtable.check_env(l.env.spec(), &l.config_hash)?;
    }
    let seed = a.run.seed.unwrap_or(l.manifest.seed);
    let k = l.cfg.analysis.k;
    let rule = OutcomeRule::for_env(&l.env);
    let analyzer = Analyzer::new(&l.env, &l.qtable, l.cfg.analysis.temperature);
    let table_path = dir.reports_dir().join(table_name(&l, k, seed, "json"));
    let mut verified = "no ranking table to verify".to_string();
    if table_path.exists() {
        let text = std::fs::read_to_string(&table_path)
            .map_err(|e| Error::Io { path: table_path.clone(), source: e })?;
        let table: RankingTable = serde_json::from_str(&text).map_err(Error::Json)?;
        let diffs = table.verify(&analyzer, &l.dataset, rule)?;
        if !diffs.is_empty() {
            return Err(Error::Invariant(format!(
                "{} does not match a recomputation: {}",
                table_path.display(),
                diffs.join("; ")
            ))
            .into());
        }
        verified = format!("{} recomputed bit-exactly", table_path.display());
    }
    outln!(
        "ok: {} trajectories replay and satisfy their invariants; {} checkpoints match config {}; {verified}",
        l.dataset.trajectories.len(),
        checkpoints.len(),
        l.config_hash
    );
    Ok(())
}

fn cmd_serve(a: ServeArgs) -> Result<()> {
    let dir = RunDir::new(&a.run.run);
    let l = Loaded::open(&dir, a.run.dataset.as_deref())?;
    let seed = a.run.seed.unwrap_or(l.manifest.seed);
    let k = a.k.unwrap_or(l.cfg.analysis.k);
    let bundle = trajex_service::Bundle::new(
        l.env,
        &l.config_hash,
        l.qtable,
        l.dataset,
        l.cfg.analysis.temperature,
        k,
        seed,
    )?;
    let addr: SocketAddr = format!("{}:{}", a.host, a.port)
        .parse()
        .map_err(|e| Error::Config(format!("bad listen address: {e}")))?;
    outln!("serving bundle {} on http://{addr}", bundle.hash());
    let rt = tokio::runtime::Runtime::new().context("starting the async runtime")?;
    rt.block_on(trajex_service::serve(bundle, addr))
        .with_context(|| format!("serving on {addr}"))?;
    Ok(())
}
