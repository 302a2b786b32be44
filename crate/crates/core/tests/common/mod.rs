#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use raybot::actions::{Action, AimAction, KeyAction, Key, AIM_CHOICES, KEY_COUNT};
use raybot::net::forward::{sigmoid, softmax};
use raybot::net::{backward, forward_step, init_params, Activations, Frame, HiddenState, NetworkConfig, NetworkParams};
use raybot::sensors::OBSERVATION_DIM;

pub fn random_sequence(len: usize, seed: u64) -> (Vec<Vec<f32>>, Vec<Action>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let obs = (0..len).map(|_| (0..OBSERVATION_DIM).map(|_| rng.gen::<f32>()).collect()).collect();
    let acts = (0..len)
        .map(|_| Action::new(AimAction::new(rng.gen_range(0..AIM_CHOICES)).unwrap(), KeyAction::from_bits(rng.gen::<u16>())))
        .collect();
    (obs, acts)
}

pub fn frames<'a>(obs: &'a [Vec<f32>], acts: &[Action]) -> Vec<Frame<'a>> {
    obs.iter().zip(acts).map(|(o, a)| Frame { observation: o, target: *a }).collect()
}

fn logits(p: &NetworkParams<f64>, seq: &[Frame<'_>]) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut hidden = HiddenState::zeros(&p.config);
    let mut acts = Activations::new(&p.config);
    seq.iter()
        .map(|fr| {
            forward_step::<f64, ChaCha8Rng>(p, fr.observation, &mut hidden, &mut acts, None);
            (acts.aim.clone(), acts.keys.clone())
        })
        .collect()
}

/// Mean-loss difference of two runs from their logit differences, so the
/// shared loss value never cancels.
fn loss_difference(a: &[(Vec<f64>, Vec<f64>)], b: &[(Vec<f64>, Vec<f64>)], seq: &[Frame<'_>]) -> f64 {
    let mut total = 0.0;
    for (((aa, ak), (ba, bk)), fr) in a.iter().zip(b).zip(seq) {
        // lse(a) - lse(b) = ln(1 + sum softmax(b)_i (e^(a_i - b_i) - 1))
        let pb = softmax(ba);
        let s: f64 = pb.iter().zip(aa.iter().zip(ba)).map(|(p, (x, y))| p * (x - y).exp_m1()).sum();
        let t = fr.target.aim.index();
        total += s.ln_1p() - (aa[t] - ba[t]);
        for k in 0..KEY_COUNT {
            let d = ak[k] - bk[k];
            let y = if fr.target.keys.is_down(Key::ALL[k]) { 1.0 } else { 0.0 };
            total += (sigmoid(bk[k]) * d.exp_m1()).ln_1p() - y * d;
        }
    }
    total / seq.len() as f64
}

/// Largest relative gap between the analytic gradient and central
/// differences (step `eps`) over every parameter, on a random sequence.
pub fn max_fd_relative_error(cfg: &NetworkConfig, steps: usize, eps: f64, seed: u64) -> f64 {
    let mut cfg = cfg.clone();
    cfg.dropout = 0.0;
    let mut p = init_params(&cfg, seed);
    // nudge every value so no ReLU sits on its kink
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for v in p.values.iter_mut() {
        *v += rng.gen_range(-0.05..0.05);
    }
    let (obs, acts) = random_sequence(steps, seed + 1);
    let seq = frames(&obs, &acts);
    let (_, g) = backward(&p, &seq, 64);
    let mut worst: f64 = 0.0;
    for i in 0..p.values.len() {
        let orig = p.values[i];
        p.values[i] = orig + eps;
        let up = logits(&p, &seq);
        p.values[i] = orig - eps;
        let down = logits(&p, &seq);
        p.values[i] = orig;
        let fd = loss_difference(&up, &down, &seq) / (2.0 * eps);
        if fd != g[i] {
            worst = worst.max((fd - g[i]).abs() / fd.abs().max(g[i].abs()));
        }
    }
    worst
}

/// Scaled-down shapes of presets A-F: the same layer counts with small widths.
pub fn tiny_presets() -> Vec<NetworkConfig> {
    vec![
        NetworkConfig::new("A-tiny", 2, &[8], &[4], &[4]),
        NetworkConfig::new("B-tiny", 2, &[10], &[5], &[3]),
        NetworkConfig::new("C-tiny", 2, &[10], &[6], &[4]),
        NetworkConfig::new("D-tiny", 3, &[12], &[6], &[5, 4]),
        NetworkConfig::new("E-tiny", 3, &[8, 8], &[5, 4], &[6, 5, 4]),
        NetworkConfig::new("F-tiny", 3, &[9, 8, 7], &[5, 4], &[6, 5, 4]),
    ]
}

pub mod oracles;
