//! Command-line entry point.
//!
//! Every subcommand reads its settings from flags and, optionally, from a
//! TOML run file given with `--config` (flags win). The run file holds one
//! table per subcommand (`[gen_data]`, `[train]`, ...); unknown keys are
//! rejected. Each run writes the settings it actually used to
//! `resolved_config.toml` in its output directory. That echo omits `out`,
//! since it sits inside the output directory already.
//!
//! Exit codes: 0 success, 2 usage error, 1 runtime error.

use crate::eval::{
    bench_inference, build_heatmap, compare_features, default_cell_size, extract_features, heatmap_distances,
    render_heatmap, BenchReport, EvalError, FeatureTable, HeatmapDistances,
};
use crate::formats::{
    load_dataset, load_match_log, save_dataset, save_match_log, FormatError, TickRecord,
};
use crate::net::{load_checkpoint, CheckpointError, ConfigError, NetworkConfig};
use crate::policy::{
    default_roster, expert_rollout, generate_dataset, model_rollout, random_rollout, tracker_rollout, Demonstrator,
    ExpertProfile, GenerateOptions, PolicyError, RoundResult,
};
use crate::train::{bc_train, TrainConfig, TrainError, TrainOptions};
use crate::world::{load_map, MapError, MapGeometry, RoundOutcome, Team, ASCENT_MINI};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use thiserror::Error;

pub const RESOLVED_CONFIG: &str = "resolved_config.toml";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("i/o on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] CheckpointError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Parser)]
#[command(name = "raybot", version, about = "Ray-sensor 2v2 shooter simulator and behavior-cloning pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the built-in map source as a starting point for new maps.
    GenMapTemplate(GenMapTemplateArgs),
    /// Play scripted matches and record a dataset.
    GenData(GenDataArgs),
    /// Behavior-clone a network on a dataset.
    Train(TrainArgs),
    /// Play rounds with a trained model or a baseline policy and log them.
    Rollout(RolloutArgs),
    /// Compare behavior features and position heatmaps of two sets of logs.
    Eval(EvalArgs),
    /// Time single-thread inference of network presets.
    Bench(BenchArgs),
    /// Render a time-in-cell heatmap of logged positions as PNG.
    RenderHeatmap(RenderHeatmapArgs),
}

/// Settings file: one optional table per subcommand.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gen_map_template: Option<GenMapTemplateSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gen_data: Option<GenDataSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rollout: Option<RolloutSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bench: Option<BenchSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub render_heatmap: Option<RenderHeatmapSettings>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| usage(format!("config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))
    }
}

fn load_section<T: Default>(config: &Option<PathBuf>, pick: impl FnOnce(RunConfig) -> Option<T>) -> Result<T, CliError> {
    match config {
        Some(p) => Ok(pick(RunConfig::load(p)?).unwrap_or_default()),
        None => Ok(T::default()),
    }
}

fn require_out(out: &Option<PathBuf>) -> Result<PathBuf, CliError> {
    out.clone().ok_or_else(|| usage("an output directory is required (--out)"))
}

fn write_echo(out: &Path, echo: &RunConfig) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let path = out.join(RESOLVED_CONFIG);
    let text = toml::to_string(echo).expect("settings serialize");
    fs::write(&path, text).map_err(io_err(&path))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(io_err(path))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    write_text(path, &(serde_json::to_string_pretty(value).expect("report serializes") + "\n"))
}

/// `ascent_mini` names the built-in map; anything else is a map file path.
pub fn resolve_map(name: &str) -> Result<MapGeometry, CliError> {
    if name == "ascent_mini" {
        return Ok(load_map(ASCENT_MINI)?);
    }
    let path = Path::new(name);
    if !path.is_file() {
        return Err(usage(format!("map {name:?} is neither ascent_mini nor a readable file")));
    }
    Ok(load_map(&fs::read_to_string(path).map_err(io_err(path))?)?)
}

// ---------------------------------------------------------------- gen-map-template

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenMapTemplateSettings {
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenMapTemplateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory; receives `ascent_mini.map`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn cmd_gen_map_template(a: &GenMapTemplateArgs) -> Result<(), CliError> {
    let mut s = load_section(&a.config, |c| c.gen_map_template)?;
    s.out = a.out.clone().or(s.out);
    let out = require_out(&s.out)?;
    write_echo(&out, &RunConfig { gen_map_template: Some(s), ..Default::default() })?;
    let path = out.join("ascent_mini.map");
    write_text(&path, ASCENT_MINI)?;
    println!("{}", path.display());
    Ok(())
}

// ---------------------------------------------------------------- gen-data

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenDataSettings {
    pub map: String,
    pub matches: u32,
    pub rounds_per_match: u32,
    pub seed: u64,
    pub demonstrator: Demonstrator,
    /// Four expert profiles; the built-in roster when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub roster: Option<Vec<ExpertProfile>>,
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
}

impl Default for GenDataSettings {
    fn default() -> Self {
        GenDataSettings {
            map: "ascent_mini".into(),
            matches: 0,
            rounds_per_match: 4,
            seed: 0,
            demonstrator: Demonstrator::Roster,
            roster: None,
            out: None,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `ascent_mini` or a map file.
    #[arg(long)]
    pub map: Option<String>,
    #[arg(long)]
    pub matches: Option<u32>,
    #[arg(long)]
    pub rounds_per_match: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub demonstrator: Option<DemonstratorArg>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum DemonstratorArg {
    Roster,
    Tracker,
}

fn cmd_gen_data(a: &GenDataArgs) -> Result<(), CliError> {
    let mut s = load_section(&a.config, |c| c.gen_data)?;
    if let Some(v) = &a.map {
        s.map = v.clone();
    }
    s.matches = a.matches.unwrap_or(s.matches);
    s.rounds_per_match = a.rounds_per_match.unwrap_or(s.rounds_per_match);
    s.seed = a.seed.unwrap_or(s.seed);
    if let Some(d) = a.demonstrator {
        s.demonstrator = match d {
            DemonstratorArg::Roster => Demonstrator::Roster,
            DemonstratorArg::Tracker => Demonstrator::Tracker,
        };
    }
    s.out = a.out.clone().or(s.out);
    let out = require_out(&s.out)?;
    if s.matches == 0 {
        return Err(usage("--matches must be at least 1"));
    }
    if s.rounds_per_match == 0 {
        return Err(usage("--rounds-per-match must be at least 1"));
    }
    let roster: [ExpertProfile; 4] = match &s.roster {
        None => default_roster(),
        Some(r) => r.clone().try_into().map_err(|r: Vec<_>| usage(format!("roster needs 4 profiles, got {}", r.len())))?,
    };
    let map = resolve_map(&s.map)?;
    let opts = GenerateOptions {
        matches: s.matches,
        rounds_per_match: s.rounds_per_match,
        seed: s.seed,
        map_name: map.name.clone(),
        demonstrator: s.demonstrator,
    };
    let ds = generate_dataset(Arc::new(map), &roster, &opts)?;
    save_dataset(&out, &ds)?;
    write_echo(&out, &RunConfig { gen_data: Some(s), ..Default::default() })?;
    println!(
        "{} trajectories, {} frames ({:.1} simulated minutes) in {}",
        ds.trajectories.len(),
        ds.total_timesteps(),
        ds.simulated_seconds() / 60.0,
        out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------- train

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSettings {
    pub data: Option<PathBuf>,
    /// Preset name (A-F or A-small); ignored when `network` is given.
    pub preset: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub network: Option<NetworkConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resume: Option<PathBuf>,
    pub train: TrainConfig,
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            data: None,
            preset: "A-small".into(),
            network: None,
            resume: None,
            train: TrainConfig::default(),
            out: None,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset directory written by gen-data.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// A-F or A-small.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub epochs: Option<u32>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Continue from this checkpoint; epochs are numbered after its epoch.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Receives best.ckpt, last.ckpt and train_report.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub quiet: bool,
}

fn cmd_train(a: &TrainArgs) -> Result<(), CliError> {
    let mut s = load_section(&a.config, |c| c.train)?;
    s.data = a.data.clone().or(s.data);
    if let Some(p) = &a.preset {
        s.preset = p.clone();
        s.network = None;
    }
    s.train.epochs = a.epochs.unwrap_or(s.train.epochs);
    s.train.learning_rate = a.learning_rate.unwrap_or(s.train.learning_rate);
    s.train.batch_size = a.batch_size.unwrap_or(s.train.batch_size);
    s.train.seed = a.seed.unwrap_or(s.train.seed);
    s.resume = a.resume.clone().or(s.resume);
    s.out = a.out.clone().or(s.out);
    let out = require_out(&s.out)?;
    let data = s.data.clone().ok_or_else(|| usage("a dataset directory is required (--data)"))?;
    if !data.is_dir() {
        return Err(usage(format!("dataset directory {} does not exist", data.display())));
    }
    s.train.validate().map_err(|e| usage(e.to_string()))?;
    let resume = s.resume.as_deref().map(load_checkpoint).transpose()?;
    let network = match (&resume, &s.network) {
        (Some(ck), _) => ck.params.config.clone(),
        (None, Some(n)) => n.clone(),
        (None, None) => NetworkConfig::preset(&s.preset).map_err(|e: ConfigError| usage(e.to_string()))?,
    };
    let ds = load_dataset(&data)?;
    write_echo(&out, &RunConfig { train: Some(s.clone()), ..Default::default() })?;
    let opts = TrainOptions { resume, checkpoint_dir: Some(out.clone()), verbose: !a.quiet };
    let (_, report) = bc_train(&ds.trajectories, &network, &s.train, &opts)?;
    write_json(&out.join("train_report.json"), &report)?;
    let last = report.epochs.last();
    println!(
        "epochs {}..={} best epoch {} held-out loss {:.4} (initial {:.4}) aim top-1 {:.4} (majority {:.4})",
        report.epochs.first().map_or(0, |e| e.epoch),
        last.map_or(0, |e| e.epoch),
        report.best_epoch,
        report.best_heldout_loss,
        report.initial.loss,
        last.map_or(report.initial.aim_top1, |e| e.heldout.aim_top1),
        report.majority_aim_baseline
    );
    Ok(())
}

// ---------------------------------------------------------------- rollout

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum RolloutAgent {
    #[default]
    Model,
    Random,
    Expert,
    Tracker,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RolloutSettings {
    pub agent: RolloutAgent,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    pub map: String,
    pub rounds: u32,
    pub seed: u64,
    /// Softmax temperature for model agents; 0 takes the mode.
    pub temperature: f64,
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
}

impl Default for RolloutSettings {
    fn default() -> Self {
        RolloutSettings {
            agent: RolloutAgent::Model,
            checkpoint: None,
            map: "ascent_mini".into(),
            rounds: 50,
            seed: 0,
            temperature: 1.0,
            out: None,
        }
    }
}

#[derive(Debug, Args)]
pub struct RolloutArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub agent: Option<RolloutAgent>,
    /// Required for the model agent.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub map: Option<String>,
    #[arg(long)]
    pub rounds: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Receives logs/rollout.jsonl and rounds.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundSummary {
    pub round: u32,
    pub attacking_squad: u8,
    pub outcome: RoundOutcome,
    pub ticks: u32,
}

fn cmd_rollout(a: &RolloutArgs) -> Result<(), CliError> {
    let mut s = load_section(&a.config, |c| c.rollout)?;
    s.agent = a.agent.unwrap_or(s.agent);
    s.checkpoint = a.checkpoint.clone().or(s.checkpoint);
    if let Some(m) = &a.map {
        s.map = m.clone();
    }
    s.rounds = a.rounds.unwrap_or(s.rounds);
    s.seed = a.seed.unwrap_or(s.seed);
    s.temperature = a.temperature.unwrap_or(s.temperature);
    s.out = a.out.clone().or(s.out);
    let out = require_out(&s.out)?;
    if s.rounds == 0 {
        return Err(usage("--rounds must be at least 1"));
    }
    if !(s.temperature >= 0.0 && s.temperature.is_finite()) {
        return Err(usage("--temperature must be finite and >= 0"));
    }
    let map = Arc::new(resolve_map(&s.map)?);
    let results: Vec<RoundResult> = match s.agent {
        RolloutAgent::Model => {
            let path = s.checkpoint.as_deref().ok_or_else(|| usage("the model agent needs --checkpoint"))?;
            let ck = load_checkpoint(path)?;
            model_rollout(&ck.params, map, s.rounds, s.temperature, s.seed, false)?
        }
        RolloutAgent::Random => random_rollout(map, s.rounds, s.seed)?,
        RolloutAgent::Expert => expert_rollout(map, &default_roster(), s.rounds, s.seed)?,
        RolloutAgent::Tracker => tracker_rollout(map, s.rounds, s.seed)?,
    };
    write_echo(&out, &RunConfig { rollout: Some(s), ..Default::default() })?;
    let logs = out.join("logs");
    fs::create_dir_all(&logs).map_err(io_err(&logs))?;
    let ticks: Vec<TickRecord> = results.iter().flat_map(|r| r.log.iter().cloned()).collect();
    save_match_log(&logs.join("rollout.jsonl"), &ticks)?;
    let summary: Vec<RoundSummary> = results
        .iter()
        .map(|r| RoundSummary { round: r.round_id, attacking_squad: r.attacking_squad as u8, outcome: r.outcome, ticks: r.ticks })
        .collect();
    write_json(&out.join("rounds.json"), &summary)?;
    let mean = summary.iter().map(|r| r.ticks as f64).sum::<f64>() / summary.len() as f64;
    println!("{} rounds, mean {:.1} ticks, logs in {}", summary.len(), mean, logs.display());
    Ok(())
}

// ---------------------------------------------------------------- eval

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSettings {
    /// Directory whose `logs/*.jsonl` hold the reference rounds.
    pub reference: Option<PathBuf>,
    /// Compared against the reference; when absent the reference is split
    /// into even and odd rounds and compared with itself.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub candidate: Option<PathBuf>,
    /// Map supplying the heatmap bounds.
    pub map: String,
    /// Heatmap cell side in metres; 1/32 of the longer map side when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cell_size: Option<f64>,
    pub heatmaps: bool,
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings { reference: None, candidate: None, map: "ascent_mini".into(), cell_size: None, heatmaps: true, out: None }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub candidate: Option<PathBuf>,
    #[arg(long)]
    pub map: Option<String>,
    #[arg(long)]
    pub cell_size: Option<f64>,
    /// Skip heatmap distances and images.
    #[arg(long)]
    pub no_heatmaps: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Every `logs/*.jsonl` under `dir`, in file-name order.
pub fn load_logs(dir: &Path) -> Result<Vec<TickRecord>, CliError> {
    let logs = dir.join("logs");
    if !logs.is_dir() {
        return Err(usage(format!("{} has no logs/ directory", dir.display())));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(&logs)
        .map_err(io_err(&logs))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    let mut ticks = Vec::new();
    for f in files {
        ticks.extend(load_match_log(&f)?);
    }
    if ticks.is_empty() {
        return Err(usage(format!("no logged ticks under {}", logs.display())));
    }
    Ok(ticks)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub reference_rounds: usize,
    pub candidate_rounds: usize,
    pub features: FeatureTable,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub heatmaps: Option<SideDistances>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SideDistances {
    pub attack: HeatmapDistances,
    pub defence: HeatmapDistances,
}

fn distinct_rounds(ticks: &[TickRecord]) -> usize {
    let mut r: Vec<u32> = ticks.iter().map(|t| t.round).collect();
    r.dedup();
    r.sort_unstable();
    r.dedup();
    r.len()
}

fn cmd_eval(a: &EvalArgs) -> Result<(), CliError> {
    let mut s = load_section(&a.config, |c| c.eval)?;
    s.reference = a.reference.clone().or(s.reference);
    s.candidate = a.candidate.clone().or(s.candidate);
    if let Some(m) = &a.map {
        s.map = m.clone();
    }
    s.cell_size = a.cell_size.or(s.cell_size);
    s.heatmaps &= !a.no_heatmaps;
    s.out = a.out.clone().or(s.out);
    let out = require_out(&s.out)?;
    let reference = s.reference.clone().ok_or_else(|| usage("a reference directory is required (--reference)"))?;
    for dir in std::iter::once(&reference).chain(&s.candidate) {
        if !dir.is_dir() {
            return Err(usage(format!("{} does not exist", dir.display())));
        }
    }
    let map = resolve_map(&s.map)?;
    let (ref_ticks, cand_ticks) = match &s.candidate {
        Some(c) => (load_logs(&reference)?, load_logs(c)?),
        None => load_logs(&reference)?.into_iter().partition(|t| t.round % 2 == 0),
    };
    let features = compare_features(&extract_features(&ref_ticks)?, &extract_features(&cand_ticks)?)?;
    write_echo(&out, &RunConfig { eval: Some(s.clone()), ..Default::default() })?;
    let heatmaps = if s.heatmaps {
        let cell = s.cell_size.unwrap_or_else(|| default_cell_size(&map.bounds));
        let side = |team: Team, tag: &str| -> Result<HeatmapDistances, CliError> {
            let p = build_heatmap(&ref_ticks, team, &map.bounds, cell)?;
            let q = build_heatmap(&cand_ticks, team, &map.bounds, cell)?;
            render_heatmap(&p, &out.join(format!("heatmap_reference_{tag}.png")), 8)?;
            render_heatmap(&q, &out.join(format!("heatmap_candidate_{tag}.png")), 8)?;
            Ok(heatmap_distances(&p, &q)?)
        };
        Some(SideDistances { attack: side(Team::Attacker, "attack")?, defence: side(Team::Defender, "defence")? })
    } else {
        None
    };
    let report = EvalReport {
        reference_rounds: distinct_rounds(&ref_ticks),
        candidate_rounds: distinct_rounds(&cand_ticks),
        features,
        heatmaps,
    };
    let mut text = report.features.to_text("JS");
    if let Some(h) = &report.heatmaps {
        let _ = writeln!(text, "\n{:<10}{:>10}{:>10}{:>10}", "Heatmap", "EMD-1D", "EMD-2D", "ASD");
        for (name, d) in [("Attack", &h.attack), ("Defence", &h.defence)] {
            let _ = writeln!(text, "{name:<10}{:>10.3}{:>10.3}{:>10.3}", d.emd_1d, d.emd_2d, d.asd);
        }
    }
    write_text(&out.join("features.csv"), &report.features.to_csv())?;
    write_text(&out.join("eval.txt"), &text)?;
    write_json(&out.join("eval.json"), &report)?;
    print!("{text}");
    Ok(())
}

// ---------------------------------------------------------------- bench

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchSettings {
    pub presets: Vec<String>,
    pub warmup: usize,
    pub iterations: usize,
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
}

impl Default for BenchSettings {
    fn default() -> Self {
        BenchSettings { presets: ["A", "B", "C", "D"].map(String::from).to_vec(), warmup: 10, iterations: 100, out: None }
    }
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated preset names.
    #[arg(long, value_delimiter = ',')]
    pub presets: Option<Vec<String>>,
    #[arg(long)]
    pub warmup: Option<usize>,
    /// Timed steps per preset (at least 100).
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Model, parameter count and mean ± std latency, one row per preset.
pub fn bench_table(reports: &[BenchReport]) -> String {
    let mut s = format!("{:<8}{:>14}{:>22}\n", "Model", "Parameters", "Inference time (ms)");
    for r in reports {
        let _ = writeln!(s, "{:<8}{:>14}{:>22}", r.model, r.parameters, format!("{:.3} ± {:.3}", r.mean_ms, r.std_ms));
    }
    if let Some(r) = reports.first() {
        let _ = writeln!(s, "machine: {}", r.machine);
    }
    s
}

fn cmd_bench(a: &BenchArgs) -> Result<(), CliError> {
    let mut s = load_section(&a.config, |c| c.bench)?;
    if let Some(p) = &a.presets {
        s.presets = p.clone();
    }
    s.warmup = a.warmup.unwrap_or(s.warmup);
    s.iterations = a.iterations.unwrap_or(s.iterations);
    s.out = a.out.clone().or(s.out);
    let out = require_out(&s.out)?;
    let configs = s
        .presets
        .iter()
        .map(|p| NetworkConfig::preset(p).map_err(|e| usage(e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    if configs.is_empty() {
        return Err(usage("no presets selected"));
    }
    write_echo(&out, &RunConfig { bench: Some(s.clone()), ..Default::default() })?;
    let reports: Vec<BenchReport> = configs.iter().map(|c| bench_inference(c, s.warmup, s.iterations)).collect();
    let table = bench_table(&reports);
    write_text(&out.join("bench.txt"), &table)?;
    write_json(&out.join("bench.json"), &reports)?;
    print!("{table}");
    Ok(())
}

// ---------------------------------------------------------------- render-heatmap

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SideArg {
    #[default]
    Attack,
    Defence,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderHeatmapSettings {
    /// Directory whose `logs/*.jsonl` are rendered.
    pub logs: Option<PathBuf>,
    pub side: SideArg,
    pub map: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cell_size: Option<f64>,
    /// Pixels per cell.
    pub scale: u32,
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
}

impl Default for RenderHeatmapSettings {
    fn default() -> Self {
        RenderHeatmapSettings { logs: None, side: SideArg::Attack, map: "ascent_mini".into(), cell_size: None, scale: 8, out: None }
    }
}

#[derive(Debug, Args)]
pub struct RenderHeatmapArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub logs: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub side: Option<SideArg>,
    #[arg(long)]
    pub map: Option<String>,
    #[arg(long)]
    pub cell_size: Option<f64>,
    #[arg(long)]
    pub scale: Option<u32>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn cmd_render_heatmap(a: &RenderHeatmapArgs) -> Result<(), CliError> {
    let mut s = load_section(&a.config, |c| c.render_heatmap)?;
    s.logs = a.logs.clone().or(s.logs);
    s.side = a.side.unwrap_or(s.side);
    if let Some(m) = &a.map {
        s.map = m.clone();
    }
    s.cell_size = a.cell_size.or(s.cell_size);
    s.scale = a.scale.unwrap_or(s.scale);
    s.out = a.out.clone().or(s.out);
    let out = require_out(&s.out)?;
    let dir = s.logs.clone().ok_or_else(|| usage("a log directory is required (--logs)"))?;
    if !dir.is_dir() {
        return Err(usage(format!("{} does not exist", dir.display())));
    }
    let map = resolve_map(&s.map)?;
    let ticks = load_logs(&dir)?;
    let (team, tag) = match s.side {
        SideArg::Attack => (Team::Attacker, "attack"),
        SideArg::Defence => (Team::Defender, "defence"),
    };
    let cell = s.cell_size.unwrap_or_else(|| default_cell_size(&map.bounds));
    let h = build_heatmap(&ticks, team, &map.bounds, cell)?;
    write_echo(&out, &RunConfig { render_heatmap: Some(s.clone()), ..Default::default() })?;
    let path = out.join(format!("heatmap_{tag}.png"));
    render_heatmap(&h, &path, s.scale)?;
    write_json(&out.join(format!("heatmap_{tag}.json")), &h)?;
    println!("{}x{} cells ({} clamped samples) -> {}", h.width, h.height, h.clamped, path.display());
    Ok(())
}

// ----------------------------------------------------------------

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::GenMapTemplate(a) => cmd_gen_map_template(a),
        Command::GenData(a) => cmd_gen_data(a),
        Command::Train(a) => cmd_train(a),
        Command::Rollout(a) => cmd_rollout(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Bench(a) => cmd_bench(a),
        Command::RenderHeatmap(a) => cmd_render_heatmap(a),
    }
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code. Messages go to stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
