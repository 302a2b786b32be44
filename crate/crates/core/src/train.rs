//! Behavior-cloning trainer: truncated-BPTT chunks, Adam, trajectory-disjoint
//! held-out split and best-checkpoint selection.

use crate::actions::{Key, AIM_CHOICES, KEY_COUNT};
use crate::formats::Trajectory;
use crate::net::backward::window_grad_weighted;
use crate::net::{
    forward_step, init_params, save_checkpoint, Activations, Checkpoint, CheckpointError, Frame, HiddenState,
    LossWeights, NetworkConfig, NetworkParams,
};
use crate::policy::derive_seed;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::PathBuf;
use std::time::Instant;
use thiserror::Error;

/// Fixed number of gradient partial sums per batch, so the reduction order
/// does not depend on the thread count.
const REDUCTION_GROUPS: usize = 8;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("dataset has no trajectories")]
    EmptyDataset,
    #[error("held-out split is empty; lower eval_fraction or add rounds")]
    EmptySplit,
    #[error("invalid train config: {0}")]
    Config(String),
    #[error("loss became non-finite at epoch {epoch}, batch {batch}")]
    Diverged { epoch: u32, batch: usize, last_good: Box<NetworkParams<f64>> },
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] CheckpointError),
}

/// How the `weight_decay` value is applied.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayMode {
    /// `weight_decay * θ` added to every gradient.
    L2,
    /// Step size `lr / (1 + weight_decay * step)`.
    LearningRate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub decay_mode: DecayMode,
    pub batch_size: usize,
    pub epochs: u32,
    pub bptt_window: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// Share of rounds held out for evaluation.
    pub eval_fraction: f64,
    /// Weight positive key labels by inverse frequency.
    pub reweight_keys: bool,
    /// Before the first update of a fresh run, set the aim and key head
    /// biases to the training-set log-frequencies.
    pub prior_bias_init: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 3e-4,
            weight_decay: 1e-3,
            decay_mode: DecayMode::L2,
            batch_size: 96,
            epochs: 50,
            bptt_window: 64,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            eval_fraction: 0.2,
            reweight_keys: false,
            prior_bias_init: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.into()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay must be >= 0");
        }
        if self.batch_size == 0 || self.bptt_window == 0 {
            return bad("batch_size and bptt_window must be >= 1");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return bad("adam betas must lie in [0, 1) and epsilon be positive");
        }
        if !(0.0..1.0).contains(&self.eval_fraction) {
            return bad("eval_fraction must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Held-out (or training) metrics of one parameter set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub loss: f64,
    pub aim_top1: f64,
    pub key_accuracy: [f64; KEY_COUNT],
    pub frames: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u32,
    pub train_loss: f64,
    pub heldout: EvalMetrics,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub network: NetworkConfig,
    /// Held-out metrics before any update.
    pub initial: EvalMetrics,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: u32,
    pub best_heldout_loss: f64,
    /// Frequency of the most common aim index in the held-out split.
    pub majority_aim_baseline: f64,
    pub train_frames: usize,
    pub heldout_frames: usize,
    pub heldout_rounds: Vec<u32>,
    pub wall_clock_seconds: f64,
    pub checkpoint: Option<String>,
}

/// Trajectory indices of the training and held-out sets. Whole rounds are
/// held out, so no trajectory (or its teammates' view of the same round)
/// appears on both sides.
pub fn split_by_round(trajectories: &[Trajectory], eval_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rounds: Vec<u32> = trajectories.iter().map(|t| t.round_id).collect::<BTreeSet<_>>().into_iter().collect();
    rounds.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, 1)));
    let n_eval = ((rounds.len() as f64) * eval_fraction).ceil() as usize;
    let held: BTreeSet<u32> = rounds.into_iter().take(n_eval).collect();
    let (mut train, mut eval) = (Vec::new(), Vec::new());
    for (i, t) in trajectories.iter().enumerate() {
        if held.contains(&t.round_id) {
            eval.push(i);
        } else {
            train.push(i);
        }
    }
    (train, eval)
}

/// A window of consecutive frames from one trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Chunk {
    pub trajectory: usize,
    pub start: usize,
    pub len: usize,
}

/// Splits each trajectory into `window`-long chunks; the shorter remainder
/// is kept as its own chunk.
pub fn chunk_trajectories(trajectories: &[Trajectory], indices: &[usize], window: usize) -> Vec<Chunk> {
    let mut out = Vec::new();
    for &i in indices {
        let n = trajectories[i].len();
        let mut start = 0;
        while start < n {
            let len = window.min(n - start);
            out.push(Chunk { trajectory: i, start, len });
            start += len;
        }
    }
    out
}

fn chunk_frames<'a>(trajectories: &'a [Trajectory], c: &Chunk) -> Vec<Frame<'a>> {
    let t = &trajectories[c.trajectory];
    (c.start..c.start + c.len).map(|i| Frame { observation: t.observation(i), target: t.actions[i] }).collect()
}

/// Loss and accuracies in inference mode, hidden state reset at every
/// `window`-frame chunk boundary as in training.
pub fn evaluate(params: &NetworkParams<f64>, trajectories: &[Trajectory], indices: &[usize], window: usize) -> EvalMetrics {
    let chunks = chunk_trajectories(trajectories, indices, window);
    let per_chunk: Vec<(f64, usize, [usize; KEY_COUNT], usize)> = chunks
        .par_iter()
        .map(|c| {
            let mut hidden = HiddenState::zeros(&params.config);
            let mut acts = Activations::new(&params.config);
            let (mut loss, mut aim_hits, mut key_hits) = (0.0, 0usize, [0usize; KEY_COUNT]);
            for fr in chunk_frames(trajectories, c) {
                forward_step::<f64, ChaCha8Rng>(params, fr.observation, &mut hidden, &mut acts, None);
                let dist = acts.distribution();
                loss += crate::net::bc_loss(&dist, &fr.target);
                if dist.aim_argmax() == fr.target.aim.index() {
                    aim_hits += 1;
                }
                for (k, key) in Key::ALL.iter().enumerate() {
                    if (dist.key_logits[k] > 0.0) == fr.target.keys.is_down(*key) {
                        key_hits[k] += 1;
                    }
                }
            }
            (loss, aim_hits, key_hits, c.len)
        })
        .collect();
    let mut loss = 0.0;
    let (mut aim, mut keys, mut n) = (0usize, [0usize; KEY_COUNT], 0usize);
    for (l, a, k, len) in per_chunk {
        loss += l;
        aim += a;
        n += len;
        for j in 0..KEY_COUNT {
            keys[j] += k[j];
        }
    }
    let d = n.max(1) as f64;
    EvalMetrics {
        loss: loss / d,
        aim_top1: aim as f64 / d,
        key_accuracy: keys.map(|k| k as f64 / d),
        frames: n,
    }
}

/// Frequency of the most common aim index among the given trajectories.
pub fn majority_aim_frequency(trajectories: &[Trajectory], indices: &[usize]) -> f64 {
    let mut counts = [0usize; AIM_CHOICES];
    let mut n = 0;
    for &i in indices {
        for a in &trajectories[i].actions {
            counts[a.aim.index()] += 1;
            n += 1;
        }
    }
    *counts.iter().max().unwrap_or(&0) as f64 / n.max(1) as f64
}

/// Aim-head biases become centered log-frequencies and key-head biases the
/// log-odds of each key, both with add-one smoothing. Adam moves a bias by
/// roughly one learning rate per step, so without this the marginals are
/// first fitted through large coherent weight changes that saturate the LSTM.
pub fn set_prior_biases(params: &mut NetworkParams<f64>, trajectories: &[Trajectory], indices: &[usize]) {
    let mut aim = [1.0f64; AIM_CHOICES];
    let mut keys = [1.0f64; KEY_COUNT];
    let mut n = 2.0;
    for &i in indices {
        for a in &trajectories[i].actions {
            aim[a.aim.index()] += 1.0;
            n += 1.0;
            for (k, key) in Key::ALL.iter().enumerate() {
                if a.keys.is_down(*key) {
                    keys[k] += 1.0;
                }
            }
        }
    }
    let logs: Vec<f64> = aim.iter().map(|c| c.ln()).collect();
    let mean = logs.iter().sum::<f64>() / AIM_CHOICES as f64;
    let lay = params.layout.clone();
    for (b, l) in params.values[lay.aim.bias..lay.aim.end()].iter_mut().zip(&logs) {
        *b = l - mean;
    }
    for (b, c) in params.values[lay.keys.bias..lay.keys.end()].iter_mut().zip(&keys) {
        *b = (c / (n - c)).ln();
    }
}

fn key_weights(trajectories: &[Trajectory], indices: &[usize]) -> LossWeights {
    let mut pos = [0usize; KEY_COUNT];
    let mut n = 0usize;
    for &i in indices {
        for a in &trajectories[i].actions {
            n += 1;
            for (k, key) in Key::ALL.iter().enumerate() {
                if a.keys.is_down(*key) {
                    pos[k] += 1;
                }
            }
        }
    }
    let mut w = LossWeights::default();
    for k in 0..KEY_COUNT {
        if pos[k] > 0 {
            w.key_positive[k] = ((n - pos[k]) as f64 / pos[k] as f64).clamp(1.0, 100.0);
        }
    }
    w
}

/// Adam state over the flat parameter vector.
#[derive(Clone, Debug)]
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam { m: vec![0.0; n], v: vec![0.0; n], step: 0 }
    }

    fn update(&mut self, theta: &mut [f64], grad: &[f64], cfg: &TrainConfig) {
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        let lr = match cfg.decay_mode {
            DecayMode::L2 => cfg.learning_rate,
            DecayMode::LearningRate => cfg.learning_rate / (1.0 + cfg.weight_decay * self.step as f64),
        };
        let l2 = if cfg.decay_mode == DecayMode::L2 { cfg.weight_decay } else { 0.0 };
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        for i in 0..theta.len() {
            let g = grad[i] + l2 * theta[i];
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
            theta[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + cfg.epsilon);
        }
    }
}

/// Where and how [`bc_train`] starts.
#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    /// Continue from these weights; epoch numbering resumes after its epoch.
    pub resume: Option<Checkpoint>,
    /// Writes `best.ckpt` and `last.ckpt` here when set.
    pub checkpoint_dir: Option<PathBuf>,
    /// Print one line per epoch to stderr.
    pub verbose: bool,
}

/// Mean batch loss and gradient over `batch` chunks.
fn batch_gradient(
    params: &NetworkParams<f64>,
    trajectories: &[Trajectory],
    batch: &[Chunk],
    weights: &LossWeights,
    dropout_seed: u64,
) -> (f64, Vec<f64>) {
    let frames: usize = batch.iter().map(|c| c.len).sum();
    let scale = 1.0 / frames as f64;
    let group = batch.len().div_ceil(REDUCTION_GROUPS).max(1);
    let partials: Vec<(f64, Vec<f64>)> = batch
        .par_chunks(group)
        .enumerate()
        .map(|(g, chunks)| {
            let mut grad = vec![0.0; params.values.len()];
            let mut loss = 0.0;
            for (j, c) in chunks.iter().enumerate() {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(dropout_seed, (g * group + j) as u64));
                let mut hidden = HiddenState::zeros(&params.config);
                let fr = chunk_frames(trajectories, c);
                loss += window_grad_weighted(params, &fr, &mut hidden, &mut grad, scale, Some(&mut rng), weights);
            }
            (loss, grad)
        })
        .collect();
    let mut grad = vec![0.0; params.values.len()];
    let mut loss = 0.0;
    for (l, g) in partials {
        loss += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    (loss * scale, grad)
}

/// Trains a policy by behavior cloning on `trajectories`. Returns the
/// parameters with the best held-out loss and the per-epoch report.
pub fn bc_train(
    trajectories: &[Trajectory],
    net_config: &NetworkConfig,
    cfg: &TrainConfig,
    opts: &TrainOptions,
) -> Result<(NetworkParams<f64>, TrainReport), TrainError> {
    cfg.validate()?;
    net_config.validate().map_err(|e| TrainError::Config(e.to_string()))?;
    if trajectories.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let start = Instant::now();
    let (train_idx, eval_idx) = split_by_round(trajectories, cfg.eval_fraction, cfg.seed);
    if train_idx.is_empty() || (cfg.eval_fraction > 0.0 && eval_idx.is_empty()) {
        return Err(TrainError::EmptySplit);
    }
    // with no held-out rounds, select on the training set
    let select_idx = if eval_idx.is_empty() { &train_idx } else { &eval_idx };
    let weights = if cfg.reweight_keys { key_weights(trajectories, &train_idx) } else { LossWeights::default() };

    let (mut params, first_epoch) = match &opts.resume {
        Some(ck) => {
            if ck.params.config != *net_config {
                return Err(TrainError::Config("resume checkpoint has a different network config".into()));
            }
            (ck.params.clone(), ck.epoch + 1)
        }
        None => (init_params(net_config, derive_seed(cfg.seed, 2)), 1),
    };
    let initial = evaluate(&params, trajectories, select_idx, cfg.bptt_window);
    let mut best = (params.clone(), first_epoch - 1, initial.loss);
    if opts.resume.is_none() && cfg.prior_bias_init {
        set_prior_biases(&mut params, trajectories, &train_idx);
    }
    let mut adam = Adam::new(params.values.len());
    let mut chunks = chunk_trajectories(trajectories, &train_idx, cfg.bptt_window);
    let train_frames = chunks.iter().map(|c| c.len).sum();
    let mut epochs = Vec::new();
    let save = |name: &str, p: &NetworkParams<f64>, epoch: u32| -> Result<Option<String>, TrainError> {
        match &opts.checkpoint_dir {
            Some(dir) => {
                std::fs::create_dir_all(dir).map_err(CheckpointError::from)?;
                let path = dir.join(name);
                let tmp = dir.join(format!("{name}.tmp"));
                save_checkpoint(&tmp, &Checkpoint { params: p.clone(), epoch })?;
                std::fs::rename(&tmp, &path).map_err(CheckpointError::from)?;
                Ok(Some(path.display().to_string()))
            }
            None => Ok(None),
        }
    };

    for epoch in first_epoch..first_epoch + cfg.epochs {
        let t0 = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 1000 + epoch as u64));
        chunks.shuffle(&mut rng);
        let (mut loss_sum, mut frame_sum) = (0.0, 0usize);
        for (b, batch) in chunks.chunks(cfg.batch_size).enumerate() {
            let dropout_seed = derive_seed(cfg.seed, ((epoch as u64) << 32) | b as u64);
            let (loss, grad) = batch_gradient(&params, trajectories, batch, &weights, dropout_seed);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                save("last.ckpt", &best.0, best.1)?;
                return Err(TrainError::Diverged { epoch, batch: b, last_good: Box::new(best.0) });
            }
            let n: usize = batch.iter().map(|c| c.len).sum();
            loss_sum += loss * n as f64;
            frame_sum += n;
            adam.update(&mut params.values, &grad, cfg);
        }
        let heldout = evaluate(&params, trajectories, select_idx, cfg.bptt_window);
        let rec = EpochRecord {
            epoch,
            train_loss: loss_sum / frame_sum.max(1) as f64,
            heldout,
            seconds: t0.elapsed().as_secs_f64(),
        };
        if opts.verbose {
            eprintln!(
                "epoch {:>3}  train {:.4}  heldout {:.4}  aim@1 {:.3}  ({:.1}s)",
                rec.epoch, rec.train_loss, rec.heldout.loss, rec.heldout.aim_top1, rec.seconds
            );
        }
        if rec.heldout.loss < best.2 {
            best = (params.clone(), epoch, rec.heldout.loss);
            save("best.ckpt", &params, epoch)?;
        }
        save("last.ckpt", &params, epoch)?;
        epochs.push(rec);
    }

    let checkpoint = match &opts.checkpoint_dir {
        Some(dir) if dir.join("best.ckpt").exists() => Some(dir.join("best.ckpt").display().to_string()),
        _ => None,
    };
    let report = TrainReport {
        config: cfg.clone(),
        network: net_config.clone(),
        initial,
        epochs,
        best_epoch: best.1,
        best_heldout_loss: best.2,
        majority_aim_baseline: majority_aim_frequency(trajectories, select_idx),
        train_frames,
        heldout_frames: select_idx.iter().map(|&i| trajectories[i].len()).sum(),
        heldout_rounds: eval_idx.iter().map(|&i| trajectories[i].round_id).collect::<BTreeSet<_>>().into_iter().collect(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        checkpoint,
    };
    Ok((best.0, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actions::{Action, AimAction, KeyAction};
    use crate::formats::Trajectory;
    use crate::sensors::OBSERVATION_DIM;
    use crate::world::Team;
    use rand::Rng;

    fn synthetic(rounds: u32, len: usize, seed: u64, label: impl Fn(&[f32]) -> Action) -> Vec<Trajectory> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for r in 0..rounds {
            for p in 0..2u8 {
                let mut t = Trajectory::new(p, Team::Attacker, r);
                for _ in 0..len {
                    let obs: Vec<f32> = (0..OBSERVATION_DIM).map(|_| rng.gen::<f32>()).collect();
                    let a = label(&obs);
                    t.push(&obs, a);
                }
                out.push(t);
            }
        }
        out
    }

    #[test]
    fn chunks_keep_remainders() {
        let trajs = synthetic(1, 10, 0, |_| Action::IDLE);
        let c = chunk_trajectories(&trajs, &[0, 1], 4);
        assert_eq!(c.iter().map(|c| c.len).collect::<Vec<_>>(), vec![4, 4, 2, 4, 4, 2]);
    }

    #[test]
    fn split_is_round_disjoint() {
        let trajs = synthetic(10, 2, 0, |_| Action::IDLE);
        let (tr, ev) = split_by_round(&trajs, 0.3, 4);
        let tr_rounds: BTreeSet<u32> = tr.iter().map(|&i| trajs[i].round_id).collect();
        let ev_rounds: BTreeSet<u32> = ev.iter().map(|&i| trajs[i].round_id).collect();
        assert!(tr_rounds.is_disjoint(&ev_rounds));
        assert_eq!(ev_rounds.len(), 3);
        assert_eq!(tr.len() + ev.len(), trajs.len());
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let cfg = TrainConfig { weight_decay: 0.0, ..TrainConfig::default() };
        let mut adam = Adam::new(2);
        let mut theta = vec![1.0, -1.0];
        adam.update(&mut theta, &[0.5, -2.0], &cfg);
        // bias-corrected first step is lr * g / (|g| + eps')
        assert!((theta[0] - (1.0 - 3e-4)).abs() < 1e-10);
        assert!((theta[1] - (-1.0 + 3e-4)).abs() < 1e-10);
    }

    #[test]
    fn constant_target_is_learned_quickly() {
        let target = Action::new(AimAction::new(30).unwrap(), KeyAction::from_keys(&[Key::W]));
        let trajs = synthetic(6, 40, 1, |_| target);
        let cfg = TrainConfig { learning_rate: 1e-2, epochs: 5, batch_size: 8, bptt_window: 16, eval_fraction: 0.34, ..TrainConfig::default() };
        let (_, report) = bc_train(&trajs, &NetworkConfig::new("tiny", 2, &[8], &[4], &[4]), &cfg, &TrainOptions::default()).unwrap();
        let last = report.epochs.last().unwrap();
        assert_eq!(last.heldout.aim_top1, 1.0);
        assert!(last.heldout.loss < report.initial.loss);
        assert_eq!(report.epochs.iter().map(|e| e.epoch).collect::<Vec<_>>(), vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn evaluate_is_deterministic() {
        let trajs = synthetic(2, 5, 2, |o| Action::new(AimAction::new((o[0] * 10.0) as usize).unwrap(), KeyAction::NONE));
        let p = init_params(&NetworkConfig::a_small(), 1);
        let idx: Vec<usize> = (0..trajs.len()).collect();
        assert_eq!(evaluate(&p, &trajs, &idx, 64), evaluate(&p, &trajs, &idx, 64));
    }
}
