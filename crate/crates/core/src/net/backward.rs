use super::config::KERNEL;
use super::forward::{forward_step, gather_patch, Activations, ActionDistribution, HiddenState};
use super::params::{DenseSlot, NetworkParams};
use crate::actions::{Action, Key, AIM_CHOICES, KEY_COUNT};
use crate::sensors::{AUDIO_DIM, GRID, LAYERS, SCALAR_DIM, VISUAL_DIM};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// One supervised timestep.
#[derive(Clone, Copy, Debug)]
pub struct Frame<'a> {
    pub observation: &'a [f32],
    pub target: Action,
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn key_target(target: &Action, k: usize) -> f64 {
    if target.keys.is_down(Key::ALL[k]) {
        1.0
    } else {
        0.0
    }
}

/// Per-key multipliers on the positive-label BCE term; all ones is plain
/// behavior cloning.
#[derive(Clone, Debug, PartialEq)]
pub struct LossWeights {
    pub key_positive: [f64; KEY_COUNT],
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { key_positive: [1.0; KEY_COUNT] }
    }
}

fn loss_from_logits(aim: &[f64], keys: &[f64], target: &Action) -> f64 {
    weighted_loss(aim, keys, target, &LossWeights::default())
}

fn weighted_loss(aim: &[f64], keys: &[f64], target: &Action, w: &LossWeights) -> f64 {
    let ce = log_sum_exp(aim) - aim[target.aim.index()];
    let bce: f64 = keys
        .iter()
        .enumerate()
        .map(|(k, &z)| if key_target(target, k) > 0.0 { w.key_positive[k] * softplus(-z) } else { softplus(z) })
        .sum();
    ce + bce
}

/// Cross-entropy over the aim head plus summed binary cross-entropy over the
/// eleven keys.
pub fn bc_loss(dist: &ActionDistribution, target: &Action) -> f64 {
    loss_from_logits(&dist.aim_logits, &dist.key_logits, target)
}

/// Writes `scale * dL/dlogits` for both heads and returns the unscaled loss.
fn head_grads(
    acts: &Activations<f64>,
    target: &Action,
    weights: &LossWeights,
    scale: f64,
    daim: &mut [f64],
    dkeys: &mut [f64],
) -> f64 {
    let loss = weighted_loss(&acts.aim, &acts.keys, target, weights);
    let lse = log_sum_exp(&acts.aim);
    for (i, d) in daim.iter_mut().enumerate() {
        let onehot = if i == target.aim.index() { 1.0 } else { 0.0 };
        *d = scale * ((acts.aim[i] - lse).exp() - onehot);
    }
    for (k, d) in dkeys.iter_mut().enumerate() {
        let p = super::forward::sigmoid(acts.keys[k]);
        *d = if key_target(target, k) > 0.0 { scale * weights.key_positive[k] * (p - 1.0) } else { scale * p };
    }
    loss
}

/// Accumulates `dW += dy xᵀ`, `db += dy` and, when `dx` is given, writes
/// `dx = Wᵀ dy`.
fn dense_back(p: &[f64], g: &mut [f64], s: &DenseSlot, x: &[f64], dy: &[f64], dx: Option<&mut [f64]>) {
    for (r, &d) in dy.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        g[s.bias + r] += d;
        let row = &mut g[s.weight + r * s.cols..s.weight + (r + 1) * s.cols];
        for (w, &xv) in row.iter_mut().zip(x) {
            *w += d * xv;
        }
    }
    if let Some(dx) = dx {
        dx.iter_mut().for_each(|v| *v = 0.0);
        for (r, &d) in dy.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let row = &p[s.weight + r * s.cols..s.weight + (r + 1) * s.cols];
            for (o, &w) in dx.iter_mut().zip(row) {
                *o += d * w;
            }
        }
    }
}

fn relu_mask(d: &mut [f64], out: &[f64]) {
    for (dv, &o) in d.iter_mut().zip(out) {
        if o <= 0.0 {
            *dv = 0.0;
        }
    }
}

/// Backpropagates one timestep. `dh_next`/`dc_next` carry the recurrent
/// gradient from the following step and are replaced by the gradient with
/// respect to this step's incoming state.
fn step_back(
    params: &NetworkParams<f64>,
    acts: &Activations<f64>,
    daim: &[f64],
    dkeys: &[f64],
    dh_next: &mut [Vec<f64>],
    dc_next: &mut [Vec<f64>],
    grad: &mut [f64],
) {
    let cfg = &params.config;
    let lay = &params.layout;
    let p = &params.values[..];

    // heads
    let trunk = acts.trunk();
    let mut d = vec![0.0; trunk.len()];
    let mut tmp = vec![0.0; trunk.len()];
    dense_back(p, grad, &lay.aim, trunk, daim, Some(&mut d));
    dense_back(p, grad, &lay.keys, trunk, dkeys, Some(&mut tmp));
    d.iter_mut().zip(&tmp).for_each(|(a, b)| *a += b);

    // post-LSTM dense
    for i in (0..lay.post.len()).rev() {
        relu_mask(&mut d, &acts.post[i]);
        let x: &[f64] = if i == 0 { &acts.lstm.last().expect("lstm").out } else { &acts.post[i - 1] };
        let mut dx = vec![0.0; x.len()];
        dense_back(p, grad, &lay.post[i], x, &d, Some(&mut dx));
        d = dx;
    }

    // LSTM stack, top to bottom
    for l in (0..lay.lstm.len()).rev() {
        let tr = &acts.lstm[l];
        let slot = &lay.lstm[l];
        let h = slot.rows / 4;
        let mut dz = vec![0.0; 4 * h];
        let mut dc_prev = vec![0.0; h];
        for j in 0..h {
            let dh = d[j] * tr.mask[j] + dh_next[l][j];
            let dout = dh * tr.tanh_c[j];
            let dc = dh * tr.o[j] * (1.0 - tr.tanh_c[j] * tr.tanh_c[j]) + dc_next[l][j];
            let (i, f, g, o) = (tr.i[j], tr.f[j], tr.g[j], tr.o[j]);
            dz[j] = dc * g * i * (1.0 - i);
            dz[h + j] = dc * tr.c_prev[j] * f * (1.0 - f);
            dz[2 * h + j] = dc * i * (1.0 - g * g);
            dz[3 * h + j] = dout * o * (1.0 - o);
            dc_prev[j] = dc * f;
        }
        let mut xh = Vec::with_capacity(slot.cols);
        xh.extend_from_slice(&tr.x);
        xh.extend_from_slice(&tr.h_prev);
        let mut dxh = vec![0.0; slot.cols];
        dense_back(p, grad, slot, &xh, &dz, Some(&mut dxh));
        let n_in = tr.x.len();
        dh_next[l].copy_from_slice(&dxh[n_in..]);
        dc_next[l] = dc_prev;
        dxh.truncate(n_in);
        d = dxh;
    }

    // pre-LSTM dense
    for i in (0..lay.pre.len()).rev() {
        relu_mask(&mut d, &acts.pre[i]);
        let x: &[f64] = if i == 0 { &acts.concat } else { &acts.pre[i - 1] };
        let mut dx = vec![0.0; x.len()];
        dense_back(p, grad, &lay.pre[i], x, &d, Some(&mut dx));
        d = dx;
    }

    // encoders
    let vw = cfg.visual_width();
    let (d_vis, rest) = d.split_at(vw);
    let (d_scalar, rest) = rest.split_at(cfg.encoders.scalar_dense);
    let (d_audio, d_spatial) = rest.split_at(cfg.encoders.audio_dense);
    let scalar_start = VISUAL_DIM + AUDIO_DIM;
    dense_back(p, grad, &lay.audio, &acts.input[VISUAL_DIM..scalar_start], d_audio, None);
    dense_back(p, grad, &lay.scalar, &acts.input[scalar_start..scalar_start + SCALAR_DIM], d_scalar, None);
    dense_back(p, grad, &lay.spatial, &acts.input[scalar_start + SCALAR_DIM..], d_spatial, None);
    let mut d_conv = match &lay.visual {
        Some(slot) => {
            let mut dx = vec![0.0; acts.conv.len()];
            dense_back(p, grad, slot, &acts.conv, d_vis, Some(&mut dx));
            dx
        }
        None => d_vis.to_vec(),
    };

    // convolution
    relu_mask(&mut d_conv, &acts.conv);
    let k = cfg.conv_filters;
    let cols = KERNEL * KERNEL * LAYERS;
    let mut patch = vec![0.0; cols];
    let visual = &acts.input[..VISUAL_DIM];
    for pos in 0..GRID * GRID {
        let dpos = &d_conv[pos * k..(pos + 1) * k];
        if dpos.iter().all(|&v| v == 0.0) {
            continue;
        }
        gather_patch(visual, pos / GRID, pos % GRID, &mut patch);
        for (f, &dv) in dpos.iter().enumerate() {
            if dv == 0.0 {
                continue;
            }
            grad[lay.conv.bias + f] += dv;
            let row = &mut grad[lay.conv.weight + f * cols..lay.conv.weight + (f + 1) * cols];
            for (w, &x) in row.iter_mut().zip(&patch) {
                *w += dv * x;
            }
        }
    }
}

/// Forward and backward over one truncation window. Starts from `hidden`
/// (treated as a constant), leaves the final state in it, adds
/// `scale * dL/dθ` into `grad` and returns the summed unscaled loss.
pub fn window_grad(
    params: &NetworkParams<f64>,
    frames: &[Frame<'_>],
    hidden: &mut HiddenState<f64>,
    grad: &mut [f64],
    scale: f64,
    dropout: Option<&mut ChaCha8Rng>,
) -> f64 {
    window_grad_weighted(params, frames, hidden, grad, scale, dropout, &LossWeights::default())
}

/// [`window_grad`] with per-key positive weights.
pub fn window_grad_weighted(
    params: &NetworkParams<f64>,
    frames: &[Frame<'_>],
    hidden: &mut HiddenState<f64>,
    grad: &mut [f64],
    scale: f64,
    mut dropout: Option<&mut ChaCha8Rng>,
    weights: &LossWeights,
) -> f64 {
    let cfg = &params.config;
    let mut tape: Vec<Activations<f64>> = Vec::with_capacity(frames.len());
    for fr in frames {
        let mut acts = Activations::new(cfg);
        forward_step(params, fr.observation, hidden, &mut acts, dropout.as_deref_mut());
        tape.push(acts);
    }
    let mut dh: Vec<Vec<f64>> = cfg.lstm_widths.iter().map(|&w| vec![0.0; w]).collect();
    let mut dc = dh.clone();
    let mut daim = vec![0.0; AIM_CHOICES];
    let mut dkeys = vec![0.0; KEY_COUNT];
    let mut loss = 0.0;
    for (acts, fr) in tape.iter().zip(frames).rev() {
        loss += head_grads(acts, &fr.target, weights, scale, &mut daim, &mut dkeys);
        step_back(params, acts, &daim, &dkeys, &mut dh, &mut dc, grad);
    }
    loss
}

/// Mean per-step loss over a whole sequence and its gradient, using
/// truncated BPTT with windows of `window` steps. Hidden state starts at
/// zero and flows across window boundaries; gradients do not.
pub fn backward(params: &NetworkParams<f64>, sequence: &[Frame<'_>], window: usize) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; params.values.len()];
    if sequence.is_empty() {
        return (0.0, grad);
    }
    let scale = 1.0 / sequence.len() as f64;
    let mut hidden = HiddenState::zeros(&params.config);
    let mut loss = 0.0;
    for chunk in sequence.chunks(window.max(1)) {
        loss += window_grad(params, chunk, &mut hidden, &mut grad, scale, None);
    }
    (loss * scale, grad)
}

/// Mean per-step loss of a sequence in inference mode.
pub fn sequence_loss(params: &NetworkParams<f64>, sequence: &[Frame<'_>]) -> f64 {
    sequence_loss_with(params, sequence, None::<&mut ChaCha8Rng>)
}

pub(crate) fn sequence_loss_with<R: Rng>(
    params: &NetworkParams<f64>,
    sequence: &[Frame<'_>],
    mut dropout: Option<&mut R>,
) -> f64 {
    if sequence.is_empty() {
        return 0.0;
    }
    let mut hidden = HiddenState::zeros(&params.config);
    let mut acts = Activations::new(&params.config);
    let mut total = 0.0;
    for fr in sequence {
        forward_step(params, fr.observation, &mut hidden, &mut acts, dropout.as_deref_mut());
        total += loss_from_logits(&acts.aim, &acts.keys, &fr.target);
    }
    total / sequence.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actions::{AimAction, KeyAction};
    use crate::net::config::NetworkConfig;
    use crate::net::params::init_params;
    use crate::sensors::OBSERVATION_DIM;
    use rand::SeedableRng;

    fn random_sequence(len: usize, seed: u64) -> (Vec<Vec<f32>>, Vec<Action>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let obs = (0..len).map(|_| (0..OBSERVATION_DIM).map(|_| rng.gen::<f32>()).collect()).collect();
        let acts = (0..len)
            .map(|_| {
                Action::new(
                    AimAction::new(rng.gen_range(0..AIM_CHOICES)).unwrap(),
                    KeyAction::from_bits(rng.gen::<u16>()),
                )
            })
            .collect();
        (obs, acts)
    }

    fn frames<'a>(obs: &'a [Vec<f32>], acts: &[Action]) -> Vec<Frame<'a>> {
        obs.iter().zip(acts).map(|(o, a)| Frame { observation: o, target: *a }).collect()
    }

    #[test]
    fn loss_matches_hand_values() {
        let mut aim = vec![0.0; AIM_CHOICES];
        aim[3] = 2.0;
        let keys = vec![0.0; KEY_COUNT];
        let target = Action::new(AimAction::new(3).unwrap(), KeyAction::from_keys(&[Key::W]));
        // CE: ln(e^2 + 164) - 2; each BCE at zero logit is ln 2
        let expected = (2f64.exp() + 164.0).ln() - 2.0 + 11.0 * 2f64.ln();
        let d = ActionDistribution { aim_logits: aim, key_logits: keys };
        assert!((bc_loss(&d, &target) - expected).abs() < 1e-12);
    }

    #[test]
    fn unit_weights_match_plain_loss_and_weights_scale_positives() {
        let aim: Vec<f64> = (0..AIM_CHOICES).map(|i| (i as f64 * 0.37).sin()).collect();
        let keys: Vec<f64> = (0..KEY_COUNT).map(|k| k as f64 * 0.3 - 1.5).collect();
        let target = Action::new(AimAction::new(7).unwrap(), KeyAction::from_keys(&[Key::W, Key::E]));
        let plain = log_sum_exp(&aim) - aim[7]
            + keys.iter().enumerate().map(|(k, &z)| softplus(z) - key_target(&target, k) * z).sum::<f64>();
        assert!((weighted_loss(&aim, &keys, &target, &LossWeights::default()) - plain).abs() < 1e-12);
        let mut w = LossWeights::default();
        w.key_positive[0] = 3.0;
        let extra = 2.0 * softplus(-keys[0]);
        assert!((weighted_loss(&aim, &keys, &target, &w) - plain - extra).abs() < 1e-12);
    }

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0 && softplus(-1000.0) < 1e-300);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn single_layer_lstm_matches_hand_step() {
        // one hidden unit: recompute the cell update by hand from the stored gates
        let cfg = NetworkConfig::new("h", 1, &[2], &[1], &[]);
        let p = init_params(&cfg, 11);
        let (obs, _) = random_sequence(2, 1);
        let mut hidden = HiddenState::zeros(&cfg);
        let mut acts = Activations::new(&cfg);
        forward_step::<f64, ChaCha8Rng>(&p, &obs[0], &mut hidden, &mut acts, None);
        let (h1, c1) = (hidden.h[0][0], hidden.c[0][0]);
        forward_step::<f64, ChaCha8Rng>(&p, &obs[1], &mut hidden, &mut acts, None);
        let s = p.layout.lstm[0];
        let x = &acts.pre[0];
        let row = |r: usize| &p.values[s.weight + r * s.cols..s.weight + (r + 1) * s.cols];
        let z = |r: usize| p.values[s.bias + r] + row(r)[0] * x[0] + row(r)[1] * x[1] + row(r)[2] * h1;
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let c2 = sig(z(1)) * c1 + sig(z(0)) * z(2).tanh();
        let h2 = sig(z(3)) * c2.tanh();
        assert!((hidden.c[0][0] - c2).abs() < 1e-14);
        assert!((hidden.h[0][0] - h2).abs() < 1e-14);
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

    /// Mean-loss difference between two runs, computed from logit
    /// differences so the large shared loss value never cancels.
    fn loss_difference(a: &[(Vec<f64>, Vec<f64>)], b: &[(Vec<f64>, Vec<f64>)], seq: &[Frame<'_>]) -> f64 {
        let mut total = 0.0;
        for (((aa, ak), (ba, bk)), fr) in a.iter().zip(b).zip(seq) {
            // lse(a) - lse(b) = ln(1 + sum softmax(b)_i (e^(a_i - b_i) - 1))
            let pb = crate::net::forward::softmax(ba);
            let s: f64 = pb.iter().zip(aa.iter().zip(ba)).map(|(p, (x, y))| p * (x - y).exp_m1()).sum();
            let t = fr.target.aim.index();
            total += s.ln_1p() - (aa[t] - ba[t]);
            for k in 0..KEY_COUNT {
                // softplus(x) - softplus(y) = ln(1 + sigmoid(y) (e^(x - y) - 1))
                let d = ak[k] - bk[k];
                let sp = (crate::net::forward::sigmoid(bk[k]) * d.exp_m1()).ln_1p();
                total += sp - key_target(&fr.target, k) * d;
            }
        }
        total / seq.len() as f64
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut cfg = NetworkConfig::new("tiny", 2, &[8], &[4], &[4]);
        cfg.dropout = 0.0;
        let mut p = init_params(&cfg, 5);
        // move biases off zero so every ReLU is exercised away from its kink
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for v in p.values.iter_mut() {
            *v += rng.gen_range(-0.05..0.05);
        }
        let (obs, acts) = random_sequence(3, 9);
        let seq = frames(&obs, &acts);
        let (_, g) = backward(&p, &seq, 64);
        let eps = 1e-5;
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
        assert!(worst <= 1e-4, "max relative error {worst}");
    }

    #[test]
    fn truncation_cuts_gradient_between_windows() {
        let cfg = NetworkConfig::new("t", 1, &[4], &[3], &[]);
        let p = init_params(&cfg, 3);
        let (obs, acts) = random_sequence(6, 4);
        let seq = frames(&obs, &acts);
        let (l_full, g_full) = backward(&p, &seq, 6);
        let (l_cut, g_cut) = backward(&p, &seq, 2);
        assert!((l_full - l_cut).abs() < 1e-12, "forward values do not depend on truncation");
        assert!(g_full.iter().zip(&g_cut).any(|(a, b)| (a - b).abs() > 1e-9));

        // truncated gradient equals the sum of independent windows fed the carried state
        let mut manual = vec![0.0; p.values.len()];
        let mut hidden = HiddenState::zeros(&cfg);
        for chunk in seq.chunks(2) {
            window_grad(&p, chunk, &mut hidden, &mut manual, 1.0 / 6.0, None);
        }
        for (a, b) in manual.iter().zip(&g_cut) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
