//! `dsm` command-line front end. [`run`] parses arguments, dispatches a
//! subcommand and maps failures onto exit codes: 0 success, 1 runtime
//! failure, 2 invalid usage.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::agents::{BaselineAgent, RbcSchedule};
use crate::data::{generate_synthetic_with, load_dataset, save_dataset, Dataset, SyntheticOptions};
use crate::env::{simulate, EnvConfig, EpisodeTrace};
use crate::metrics::{score, CostReport, MetricSet};
use crate::plot::{Chart, Series};
use crate::reward::RewardConfig;
use crate::sac::{
    baseline_trace, load_checkpoint, save_checkpoint, CheckpointMeta, RunSettings, SacAgent, SacConfig, Trainer,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

pub const LOG_FILE: &str = "log.csv";
pub const LOG_HEADER: &str = "episode,reward_sum,ramping_ratio,lf_ratio,adp_ratio,peak_ratio,net_ratio,avg_score";
pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const SCORES_FILE: &str = "scores.csv";
pub const REPORT_FILE: &str = "report.csv";
pub const TRACE_FILE: &str = "trace.csv";

#[derive(Debug, Parser)]
#[command(name = "dsm", version, about = "District demand-side management with soft actor-critic")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Random seed; required here or in the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic district dataset.
    Generate(GenerateArgs),
    /// Simulate the no-op, rule-based and random controllers and score them against the RBC.
    Baseline(BaselineArgs),
    /// Train a SAC agent, writing a per-episode log, checkpoints and plots.
    Train(TrainArgs),
    /// Deploy a checkpoint on one or more datasets and write a score table.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=1000))]
    pub buildings: u32,
    #[arg(long, value_parser = clap::value_parser!(u32).range(2..=3650))]
    pub days: u32,
    /// Shift applied to every outdoor temperature, in degrees C.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub t_offset: f64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=12))]
    pub start_month: u8,
    #[arg(long)]
    pub label: Option<String>,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    /// Dataset directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Also simulate a uniform random controller.
    #[arg(long)]
    pub random: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub episodes: Option<u32>,
    /// Continue from the checkpoint and log in the output directory.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Checkpoint directory written by `train`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Dataset directories; repeat the flag for several.
    #[arg(long = "data")]
    pub data: Vec<PathBuf>,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub episodes: u32,
    /// Score the rule-based controller instead of the agent.
    #[arg(long)]
    pub rbc: bool,
}

/// Run configuration file. Command-line flags take precedence.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub episodes: Option<u32>,
    pub data: Vec<PathBuf>,
    pub out: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub env: EnvConfig,
    pub reward: RewardConfig,
    pub rbc: RbcSchedule,
    /// Training hyperparameters.
    pub sac: SacConfig,
    /// Hyperparameters for online adaptation in `evaluate`; omitted keys
    /// keep the evaluation presets.
    #[serde(deserialize_with = "overlay_evaluation")]
    pub sac_eval: SacConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            episodes: None,
            data: Vec::new(),
            out: None,
            checkpoint: None,
            env: EnvConfig::default(),
            reward: RewardConfig::default(),
            rbc: RbcSchedule::default(),
            sac: SacConfig::training(),
            sac_eval: SacConfig::evaluation(),
        }
    }
}

fn overlay_evaluation<'de, D: serde::Deserializer<'de>>(d: D) -> Result<SacConfig, D::Error> {
    use serde::de::Error;
    let overrides = toml::Table::deserialize(d)?;
    let mut base = toml::Table::try_from(SacConfig::evaluation()).map_err(D::Error::custom)?;
    base.extend(overrides);
    base.try_into().map_err(D::Error::custom)
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("--config {}: {e}", path.display())))?;
        let config: Self = toml::from_str(&text).map_err(|e| CliError::Usage(format!("--config {}: {e}", path.display())))?;
        // relative paths are relative to the config file
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &PathBuf| if p.is_relative() { base.join(p) } else { p.clone() };
        Ok(Self {
            data: config.data.iter().map(rebase).collect(),
            out: config.out.as_ref().map(rebase),
            checkpoint: config.checkpoint.as_ref().map(rebase),
            ..config
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let usage = CliError::Usage;
        self.env.validate().map_err(|e| usage(e.to_string()))?;
        self.reward.validate().map_err(|e| usage(format!("[reward] {e}")))?;
        self.rbc.validate().map_err(|e| usage(format!("[rbc] {e}")))?;
        self.sac.validate().map_err(|e| usage(format!("[sac] {e}")))?;
        self.sac_eval.validate().map_err(|e| usage(format!("[sac_eval] {e}")))?;
        for p in &self.data {
            if !p.is_dir() {
                return Err(usage(format!("dataset directory {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    fn settings(&self, sac: &SacConfig) -> RunSettings {
        RunSettings {
            env: self.env,
            reward: self.reward.clone(),
            rbc: self.rbc.clone(),
            sac: sac.clone(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
    #[error(transparent)]
    Env(#[from] crate::env::EnvError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error(transparent)]
    Sac(#[from] crate::sac::SacError),
    #[error("{0}")]
    Failed(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            _ => EXIT_FAILURE,
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let seed = cli
        .seed
        .or(config.seed)
        .ok_or_else(|| CliError::Usage("--seed is required (or `seed` in the config file)".into()))?;
    let out = cli
        .out
        .clone()
        .or_else(|| config.out.clone())
        .ok_or_else(|| CliError::Usage("--out is required (or `out` in the config file)".into()))?;
    match &cli.command {
        Command::Generate(args) => cmd_generate(args, seed, &out),
        Command::Baseline(args) => {
            let config = with_data(config, args.data.iter().cloned().collect())?;
            cmd_baseline(args, &config, seed, &out)
        }
        Command::Train(args) => {
            let config = with_data(config, args.data.iter().cloned().collect())?;
            cmd_train(args, &config, seed, &out)
        }
        Command::Evaluate(args) => {
            let config = with_data(config, args.data.clone())?;
            cmd_evaluate(args, &config, seed, &out)
        }
    }
}

/// Replaces the config's dataset list with `flags` when any were given, then validates.
fn with_data(mut config: RunConfig, flags: Vec<PathBuf>) -> Result<RunConfig, CliError> {
    if !flags.is_empty() {
        config.data = flags;
    }
    if config.data.is_empty() {
        return Err(CliError::Usage("--data is required (or `data` in the config file)".into()));
    }
    config.validate()?;
    Ok(config)
}

fn single_dataset(config: &RunConfig) -> Result<Dataset, CliError> {
    match config.data.as_slice() {
        [one] => Ok(load_dataset(one)?),
        many => Err(CliError::Usage(format!("expected one dataset directory, got {}", many.len()))),
    }
}

pub fn cmd_generate(args: &GenerateArgs, seed: u64, out: &Path) -> Result<(), CliError> {
    let opts = SyntheticOptions {
        t_out_offset: args.t_offset,
        start_month: args.start_month,
        climate_zone_label: args.label.clone(),
        ..SyntheticOptions::new(args.buildings as usize, args.days as usize, seed)
    };
    let dataset = generate_synthetic_with(&opts);
    save_dataset(&dataset, out)?;
    println!(
        "wrote {} buildings x {} hours to {}",
        dataset.n_buildings(),
        dataset.horizon(),
        out.display()
    );
    Ok(())
}

fn write_report_table(path: &Path, rows: &[(String, CostReport)]) -> Result<(), CliError> {
    let mut text = format!("agent,{}\n", CostReport::csv_header());
    for (name, report) in rows {
        text.push_str(&format!("{name},{}\n", report.csv_row()));
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn cmd_baseline(args: &BaselineArgs, config: &RunConfig, seed: u64, out: &Path) -> Result<(), CliError> {
    let dataset = single_dataset(config)?;
    let schedule = dataset.rbc_schedule.clone().unwrap_or_else(|| config.rbc.clone());
    let mut agents = vec![BaselineAgent::Noop, BaselineAgent::Rbc(schedule)];
    if args.random {
        agents.push(BaselineAgent::Random { seed });
    }
    let traces = agents
        .iter()
        .map(|agent| simulate(&dataset, config.env, |t, hour, _, layout| agent.act(t, hour, layout)))
        .collect::<Result<Vec<_>, _>>()?;
    let rbc = &traces[1].e_total;
    let blocks = dataset.month_blocks();
    let mut rows = Vec::new();
    for (agent, trace) in agents.iter().zip(&traces) {
        let dir = out.join(agent.name());
        fs::create_dir_all(&dir)?;
        trace.write_csv(&dataset, &dir.join(TRACE_FILE))?;
        let report = score(&trace.e_total, rbc, &blocks)?;
        println!("{:>6}: {report}", agent.name());
        rows.push((agent.name().to_string(), report));
    }
    write_report_table(&out.join(REPORT_FILE), &rows)
}

fn log_row(episode: usize, reward_sum: f64, report: &CostReport) -> String {
    let r = report.ratios;
    format!(
        "{episode},{reward_sum:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
        r.ramping, r.one_minus_load_factor, r.avg_daily_peak, r.peak_demand, r.net_consumption, report.avg_score
    )
}

/// Rows of an existing training log as (episode, reward_sum, avg_score).
pub fn read_log(path: &Path) -> Result<Vec<(usize, f64, f64)>, CliError> {
    let bad = |line: usize| CliError::Failed(format!("{}: malformed row {line}", path.display()));
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some(LOG_HEADER) {
        return Err(CliError::Failed(format!("{}: unexpected header", path.display())));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 8 {
                return Err(bad(i + 2));
            }
            let episode = cells[0].parse().map_err(|_| bad(i + 2))?;
            let reward = cells[1].parse().map_err(|_| bad(i + 2))?;
            let avg = cells[7].parse().map_err(|_| bad(i + 2))?;
            Ok((episode, reward, avg))
        })
        .collect()
}

/// Start of the 168-hour window containing the maximum of `trace`.
pub fn peak_week(trace: &[f64]) -> std::ops::Range<usize> {
    let peak = trace
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (t, &v)| if v > best.1 { (t, v) } else { best })
        .0;
    let start = (peak / 168) * 168;
    start..(start + 168).min(trace.len())
}

fn write_plots(out: &Path, log: &[(usize, f64, f64)], profiles: &[(&str, &EpisodeTrace)]) -> Result<(), CliError> {
    let reward = Chart {
        title: "Episode reward".into(),
        x_label: "episode".into(),
        y_label: "sum of rewards".into(),
        series: vec![Series::new("SAC", log.iter().map(|r| (r.0 as f64, r.1)).collect())],
        reference: None,
    };
    fs::write(out.join("reward.svg"), reward.to_svg())?;
    let cost = Chart {
        title: "Episode cost relative to RBC".into(),
        x_label: "episode".into(),
        y_label: "average score".into(),
        series: vec![Series::new("SAC", log.iter().map(|r| (r.0 as f64, r.2)).collect())],
        reference: Some(1.0),
    };
    fs::write(out.join("cost.svg"), cost.to_svg())?;
    let week = peak_week(&profiles[0].1.e_total);
    let profile = Chart {
        title: format!("District consumption, hours {}-{}", week.start, week.end - 1),
        x_label: "hour".into(),
        y_label: "kWh".into(),
        series: profiles
            .iter()
            .map(|(name, trace)| Series::indexed(*name, week.start as f64, &trace.e_total[week.clone()]))
            .collect(),
        reference: None,
    };
    fs::write(out.join("profile.svg"), profile.to_svg())?;
    Ok(())
}

pub fn cmd_train(args: &TrainArgs, config: &RunConfig, seed: u64, out: &Path) -> Result<(), CliError> {
    let episodes = args
        .episodes
        .or(config.episodes)
        .ok_or_else(|| CliError::Usage("--episodes is required (or `episodes` in the config file)".into()))?
        as usize;
    let dataset = single_dataset(config)?;
    let settings = config.settings(&config.sac);
    let checkpoint = out.join(CHECKPOINT_DIR);
    let log_path = out.join(LOG_FILE);
    fs::create_dir_all(out)?;

    let (mut trainer, mut log) = if args.resume {
        let (agent, meta) = load_checkpoint(&checkpoint).map_err(|e| CliError::Usage(format!("--resume: {e}")))?;
        let mut log = read_log(&log_path)?;
        // a crash between the checkpoint and the log write leaves extra rows
        log.truncate(meta.episodes_completed);
        if log.len() != meta.episodes_completed {
            return Err(CliError::Failed(format!(
                "log has {} rows but checkpoint has {} episodes",
                log.len(),
                meta.episodes_completed
            )));
        }
        let trainer = Trainer::resume(&dataset, settings.clone(), agent, meta.episodes_completed, seed)?;
        (trainer, log)
    } else {
        fs::write(&log_path, format!("{LOG_HEADER}\n"))?;
        (Trainer::new(&dataset, settings.clone(), seed)?, Vec::new())
    };
    if args.resume {
        // rewrite the log so it matches the checkpoint exactly
        let full = fs::read_to_string(&log_path)?;
        let keep: Vec<&str> = full.lines().take(1 + log.len()).collect();
        fs::write(&log_path, keep.join("\n") + "\n")?;
    }

    while trainer.episodes_done() < episodes {
        let result = trainer.run_episode()?;
        println!("episode {:>3}: reward {:>10.3} | {}", result.episode, result.reward_sum, result.report);
        let meta = CheckpointMeta {
            format_version: 1,
            obs_dim: trainer.agent().obs_dim,
            act_dim: trainer.agent().act_dim,
            district: trainer.agent().district.clone(),
            episodes_completed: result.episode,
            seed,
        };
        save_checkpoint(trainer.agent(), &meta, &checkpoint)?;
        let mut text = fs::read_to_string(&log_path)?;
        text.push_str(&log_row(result.episode, result.reward_sum, &result.report));
        fs::write(&log_path, text)?;
        log.push((result.episode, result.reward_sum, result.report.avg_score));
    }

    let (_, greedy) = trainer.evaluate_greedy()?;
    let noop = simulate(&dataset, config.env, |_, _, _, layout| crate::agents::noop_action(layout))?;
    let rbc = baseline_trace(&dataset, config.env, &config.rbc)?;
    write_plots(out, &log, &[("no-op", &noop), ("RBC", &rbc), ("SAC", &greedy)])?;
    Ok(())
}

/// Outcome for one dataset in `evaluate`.
fn evaluate_one(
    path: &Path,
    agent: Option<&SacAgent>,
    config: &RunConfig,
    episodes: usize,
    seed: u64,
) -> Result<CostReport, CliError> {
    let dataset = load_dataset(path)?;
    match agent {
        None => {
            let rbc = baseline_trace(&dataset, config.env, &config.rbc)?;
            Ok(score(&rbc.e_total, &rbc.e_total, &dataset.month_blocks())?)
        }
        Some(agent) => {
            let settings = config.settings(&config.sac_eval);
            let mut trainer = Trainer::deploy(&dataset, settings, agent.clone(), seed)?;
            let mut last = None;
            for _ in 0..episodes {
                last = Some(trainer.run_episode()?.report);
            }
            Ok(last.expect("at least one episode"))
        }
    }
}

fn dataset_label(path: &Path) -> String {
    let label = load_dataset(path)
        .map(|d| d.climate_zone_label)
        .unwrap_or_else(|_| path.display().to_string());
    // keep the CSV well formed
    label.replace([',', '\n', '"'], "_")
}

pub fn cmd_evaluate(args: &EvaluateArgs, config: &RunConfig, seed: u64, out: &Path) -> Result<(), CliError> {
    let agent = if args.rbc {
        None
    } else {
        let dir = args
            .checkpoint
            .clone()
            .or_else(|| config.checkpoint.clone())
            .ok_or_else(|| CliError::Usage("--checkpoint is required unless --rbc is given".into()))?;
        let (agent, _) = load_checkpoint(&dir).map_err(|e| CliError::Usage(format!("--checkpoint: {e}")))?;
        Some(agent)
    };
    let episodes = args.episodes as usize;
    let results: Vec<Result<CostReport, CliError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = config
            .data
            .iter()
            .map(|path| scope.spawn(|| evaluate_one(path, agent.as_ref(), config, episodes, seed)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(CliError::Failed("worker panicked".into()))))
            .collect()
    });

    let mut rows = Vec::new();
    for (path, result) in config.data.iter().zip(results) {
        match result {
            Ok(report) => {
                let label = dataset_label(path);
                println!("{label}: {report}");
                rows.push((label, report));
            }
            Err(e) => eprintln!("error: {}: {e}", path.display()),
        }
    }
    if rows.is_empty() {
        return Err(CliError::Failed("every dataset failed to evaluate".into()));
    }
    let mean = MetricSet::from_array(std::array::from_fn(|k| {
        rows.iter().map(|(_, r)| r.ratios.to_array()[k]).sum::<f64>() / rows.len() as f64
    }));
    let mut average = CostReport::from_ratios(mean);
    average.avg_score = rows.iter().map(|(_, r)| r.avg_score).sum::<f64>() / rows.len() as f64;
    fs::create_dir_all(out)?;
    let mut text = format!("dataset,{}\n", CostReport::csv_header());
    for (label, report) in &rows {
        text.push_str(&format!("{label},{}\n", report.csv_row()));
    }
    text.push_str(&format!("Avg. Score,{}\n", average.csv_row()));
    fs::write(out.join(SCORES_FILE), text)?;
    if rows.len() < config.data.len() {
        return Err(CliError::Failed(format!(
            "{} of {} datasets failed",
            config.data.len() - rows.len(),
            config.data.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn peak_week_contains_peak() {
        let mut trace = vec![1.0; 500];
        trace[200] = 9.0;
        assert_eq!(peak_week(&trace), 168..336);
        trace[499] = 10.0;
        assert_eq!(peak_week(&trace), 336..500);
    }

    #[test]
    fn config_defaults_and_unknown_keys() {
        let c: RunConfig = toml::from_str("seed = 3\n[sac]\nminibatch = 64\n").unwrap();
        assert_eq!(c.seed, Some(3));
        assert_eq!(c.sac.minibatch, 64);
        assert_eq!(c.sac.learning_rate, SacConfig::training().learning_rate);
        assert_eq!(c.sac_eval, SacConfig::evaluation());
        let c: RunConfig = toml::from_str("[sac_eval]\ngamma = 0.5\n").unwrap();
        assert_eq!(c.sac_eval.gamma, 0.5);
        assert_eq!(c.sac_eval.minibatch, SacConfig::evaluation().minibatch);
        assert!(toml::from_str::<RunConfig>("sed = 3\n").is_err());
    }

    #[test]
    fn missing_seed_is_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("d");
        let code = run(["dsm", "generate", "--buildings", "1", "--days", "2", "--out", out.to_str().unwrap()]);
        assert_eq!(code, EXIT_USAGE);
        assert!(!out.exists());
    }
}
