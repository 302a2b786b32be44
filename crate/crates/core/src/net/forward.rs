use super::config::{NetworkConfig, KERNEL};
use super::params::{DenseSlot, NetworkParams};
use super::Real;
use crate::actions::{Action, AimAction, Key, KeyAction, AIM_CHOICES, KEY_COUNT};
use crate::sensors::{AUDIO_DIM, GRID, LAYERS, OBSERVATION_DIM, SCALAR_DIM, VISUAL_DIM};
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NetError {
    #[error("observation has {got} values, expected {expected}")]
    ObservationShape { got: usize, expected: usize },
    #[error("hidden state does not match lstm widths {0:?}")]
    HiddenShape(Vec<usize>),
    #[error("parameter vector has {got} values, config needs {expected}")]
    ParamShape { got: usize, expected: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active on LSTM outputs.
    Train,
    Infer,
}

/// Per-layer LSTM `(h, c)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HiddenState<T = f64> {
    pub h: Vec<Vec<T>>,
    pub c: Vec<Vec<T>>,
}

impl<T: Real> HiddenState<T> {
    pub fn zeros(cfg: &NetworkConfig) -> Self {
        HiddenState {
            h: cfg.lstm_widths.iter().map(|&w| vec![T::zero(); w]).collect(),
            c: cfg.lstm_widths.iter().map(|&w| vec![T::zero(); w]).collect(),
        }
    }

    pub fn reset(&mut self) {
        for v in self.h.iter_mut().chain(self.c.iter_mut()) {
            v.iter_mut().for_each(|x| *x = T::zero());
        }
    }

    pub fn matches(&self, cfg: &NetworkConfig) -> bool {
        self.h.len() == cfg.lstm_widths.len()
            && self.c.len() == cfg.lstm_widths.len()
            && cfg.lstm_widths.iter().zip(&self.h).zip(&self.c).all(|((&w, h), c)| h.len() == w && c.len() == w)
    }
}

/// Output heads: 165 aim logits and 11 independent key logits.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionDistribution {
    pub aim_logits: Vec<f64>,
    pub key_logits: Vec<f64>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

impl ActionDistribution {
    pub fn aim_probs(&self) -> Vec<f64> {
        softmax(&self.aim_logits)
    }

    pub fn key_probs(&self) -> Vec<f64> {
        self.key_logits.iter().map(|&z| sigmoid(z)).collect()
    }

    pub fn aim_argmax(&self) -> usize {
        argmax(&self.aim_logits)
    }

    /// Most likely action: argmax aim, keys with probability above one half.
    pub fn mode(&self) -> Action {
        let mut keys = KeyAction::NONE;
        for (k, &z) in Key::ALL.iter().zip(&self.key_logits) {
            keys.set(*k, z > 0.0);
        }
        Action::new(AimAction::new(self.aim_argmax()).expect("165 logits"), keys)
    }

    /// Samples aim from the tempered categorical and each key from its
    /// tempered Bernoulli. A temperature of zero returns [`Self::mode`].
    pub fn sample<R: Rng>(&self, temperature: f64, rng: &mut R) -> Action {
        if temperature <= 0.0 {
            return self.mode();
        }
        let scaled: Vec<f64> = self.aim_logits.iter().map(|z| z / temperature).collect();
        let probs = softmax(&scaled);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut aim = AIM_CHOICES - 1;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                aim = i;
                break;
            }
        }
        let mut keys = KeyAction::NONE;
        for (k, &z) in Key::ALL.iter().zip(&self.key_logits) {
            keys.set(*k, rng.gen::<f64>() < sigmoid(z / temperature));
        }
        Action::new(AimAction::new(aim).expect("index < 165"), keys)
    }
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Dot product with four partial sums so the compiler can vectorize.
#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); 4];
    let chunks = n / 4;
    for i in 0..chunks {
        let j = 4 * i;
        acc[0] = acc[0] + a[j] * b[j];
        acc[1] = acc[1] + a[j + 1] * b[j + 1];
        acc[2] = acc[2] + a[j + 2] * b[j + 2];
        acc[3] = acc[3] + a[j + 3] * b[j + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for j in 4 * chunks..n {
        s = s + a[j] * b[j];
    }
    s
}

/// `out = W x + b` for one dense slot.
#[inline]
pub(crate) fn affine<T: Real>(p: &[T], s: &DenseSlot, x: &[T], out: &mut [T]) {
    debug_assert_eq!(x.len(), s.cols);
    for (r, o) in out.iter_mut().enumerate().take(s.rows) {
        let row = &p[s.weight + r * s.cols..s.weight + (r + 1) * s.cols];
        *o = p[s.bias + r] + dot(row, x);
    }
}

/// Fills `patch` with the zero-padded 3×3×10 neighbourhood of `(r, c)`,
/// ordered (ky, kx, channel).
#[inline]
pub(crate) fn gather_patch<T: Real>(visual: &[T], r: usize, c: usize, patch: &mut [T]) {
    for ky in 0..KERNEL {
        for kx in 0..KERNEL {
            let dst = &mut patch[(ky * KERNEL + kx) * LAYERS..(ky * KERNEL + kx + 1) * LAYERS];
            let (rr, cc) = (r as isize + ky as isize - 1, c as isize + kx as isize - 1);
            if rr < 0 || cc < 0 || rr >= GRID as isize || cc >= GRID as isize {
                dst.iter_mut().for_each(|v| *v = T::zero());
            } else {
                let src = (rr as usize * GRID + cc as usize) * LAYERS;
                dst.copy_from_slice(&visual[src..src + LAYERS]);
            }
        }
    }
}

/// Everything one LSTM layer computed in one step.
#[derive(Clone, Debug)]
pub struct LstmTrace<T> {
    pub x: Vec<T>,
    pub h_prev: Vec<T>,
    pub c_prev: Vec<T>,
    pub i: Vec<T>,
    pub f: Vec<T>,
    pub g: Vec<T>,
    pub o: Vec<T>,
    pub c: Vec<T>,
    pub tanh_c: Vec<T>,
    pub h: Vec<T>,
    /// Inverted-dropout multipliers; all ones in inference mode.
    pub mask: Vec<T>,
    pub out: Vec<T>,
}

/// Intermediate values of one forward step, kept for backpropagation and
/// reused as scratch space during inference.
#[derive(Clone, Debug)]
pub struct Activations<T> {
    pub input: Vec<T>,
    /// Post-ReLU conv output, index `(row * 15 + col) * filters + k`.
    pub conv: Vec<T>,
    pub concat: Vec<T>,
    pub pre: Vec<Vec<T>>,
    pub lstm: Vec<LstmTrace<T>>,
    pub post: Vec<Vec<T>>,
    pub aim: Vec<T>,
    pub keys: Vec<T>,
    patch: Vec<T>,
    gates: Vec<T>,
}

impl<T: Real> Activations<T> {
    pub fn new(cfg: &NetworkConfig) -> Self {
        let z = |n: usize| vec![T::zero(); n];
        let mut width = cfg.lstm_input_width();
        let lstm = cfg
            .lstm_widths
            .iter()
            .map(|&h| {
                let t = LstmTrace {
                    x: z(width),
                    h_prev: z(h),
                    c_prev: z(h),
                    i: z(h),
                    f: z(h),
                    g: z(h),
                    o: z(h),
                    c: z(h),
                    tanh_c: z(h),
                    h: z(h),
                    mask: vec![T::one(); h],
                    out: z(h),
                };
                width = h;
                t
            })
            .collect();
        let max_gates = cfg.lstm_widths.iter().map(|h| 4 * h).max().unwrap_or(0);
        Activations {
            input: z(OBSERVATION_DIM),
            conv: z(cfg.conv_output_len()),
            concat: z(cfg.concat_width()),
            pre: cfg.pre_lstm_dense.iter().map(|&w| z(w)).collect(),
            lstm,
            post: cfg.post_lstm_dense.iter().map(|&w| z(w)).collect(),
            aim: z(AIM_CHOICES),
            keys: z(KEY_COUNT),
            patch: z(KERNEL * KERNEL * LAYERS),
            gates: z(max_gates),
        }
    }

    /// Input to the output heads.
    pub fn trunk(&self) -> &[T] {
        match self.post.last() {
            Some(v) => v,
            None => &self.lstm.last().expect("at least one lstm layer").out,
        }
    }

    pub fn distribution(&self) -> ActionDistribution {
        ActionDistribution {
            aim_logits: self.aim.iter().map(|v| v.to_f64().unwrap()).collect(),
            key_logits: self.keys.iter().map(|v| v.to_f64().unwrap()).collect(),
        }
    }
}

/// One network step. Reads `hidden`, writes the new state back into it and
/// leaves every intermediate in `acts`. `dropout` supplies randomness for
/// train-mode dropout; `None` runs in inference mode.
pub fn forward_step<T: Real, R: Rng>(
    params: &NetworkParams<T>,
    observation: &[f32],
    hidden: &mut HiddenState<T>,
    acts: &mut Activations<T>,
    dropout: Option<&mut R>,
) {
    let cfg = &params.config;
    let lay = &params.layout;
    let p = &params.values[..];
    debug_assert_eq!(observation.len(), OBSERVATION_DIM);
    for (d, &s) in acts.input.iter_mut().zip(observation) {
        *d = T::from_f32(s);
    }

    // convolution, 3x3 stride 1, zero padding, ReLU
    let k = cfg.conv_filters;
    let visual = &acts.input[..VISUAL_DIM];
    let conv_w = &p[lay.conv.weight..lay.conv.bias];
    let conv_b = &p[lay.conv.bias..lay.conv.end()];
    let cols = lay.conv.cols;
    for r in 0..GRID {
        for c in 0..GRID {
            gather_patch(visual, r, c, &mut acts.patch);
            let out = &mut acts.conv[(r * GRID + c) * k..(r * GRID + c + 1) * k];
            for (f, o) in out.iter_mut().enumerate() {
                let v = conv_b[f] + dot(&conv_w[f * cols..(f + 1) * cols], &acts.patch);
                *o = v.max(T::zero());
            }
        }
    }

    // stream encoders, concatenated
    let vw = cfg.visual_width();
    let (vis_part, rest) = acts.concat.split_at_mut(vw);
    match &lay.visual {
        Some(slot) => affine(p, slot, &acts.conv, vis_part),
        None => vis_part.copy_from_slice(&acts.conv),
    }
    let (s_part, rest) = rest.split_at_mut(cfg.encoders.scalar_dense);
    let (a_part, sp_part) = rest.split_at_mut(cfg.encoders.audio_dense);
    let scalar_start = VISUAL_DIM + AUDIO_DIM;
    affine(p, &lay.audio, &acts.input[VISUAL_DIM..scalar_start], a_part);
    affine(p, &lay.scalar, &acts.input[scalar_start..scalar_start + SCALAR_DIM], s_part);
    affine(p, &lay.spatial, &acts.input[scalar_start + SCALAR_DIM..], sp_part);

    // pre-LSTM dense, ReLU
    for i in 0..lay.pre.len() {
        let (before, after) = acts.pre.split_at_mut(i);
        let x = if i == 0 { &acts.concat[..] } else { &before[i - 1][..] };
        let out = &mut after[0];
        affine(p, &lay.pre[i], x, out);
        out.iter_mut().for_each(|v| *v = v.max(T::zero()));
    }

    // LSTM stack
    let mut rng = dropout;
    let keep = 1.0 - cfg.dropout;
    for l in 0..lay.lstm.len() {
        let slot = &lay.lstm[l];
        let h = slot.rows / 4;
        let (below, here) = acts.lstm.split_at_mut(l);
        let tr = &mut here[0];
        let x_src: &[T] = if l > 0 {
            &below[l - 1].out
        } else if let Some(last) = acts.pre.last() {
            last
        } else {
            &acts.concat
        };
        tr.x.copy_from_slice(x_src);
        tr.h_prev.copy_from_slice(&hidden.h[l]);
        tr.c_prev.copy_from_slice(&hidden.c[l]);
        let n_in = tr.x.len();
        let gates = &mut acts.gates[..4 * h];
        for (r, g) in gates.iter_mut().enumerate() {
            let row = &p[slot.weight + r * slot.cols..slot.weight + (r + 1) * slot.cols];
            *g = p[slot.bias + r] + dot(&row[..n_in], &tr.x) + dot(&row[n_in..], &tr.h_prev);
        }
        for j in 0..h {
            let i = T::sigmoid(gates[j]);
            let f = T::sigmoid(gates[h + j]);
            let g = gates[2 * h + j].tanh();
            let o = T::sigmoid(gates[3 * h + j]);
            let c = f * tr.c_prev[j] + i * g;
            let tc = c.tanh();
            tr.i[j] = i;
            tr.f[j] = f;
            tr.g[j] = g;
            tr.o[j] = o;
            tr.c[j] = c;
            tr.tanh_c[j] = tc;
            tr.h[j] = o * tc;
        }
        match rng.as_deref_mut() {
            Some(r) if cfg.dropout > 0.0 => {
                let scale = T::from_f64(1.0 / keep);
                for m in tr.mask.iter_mut() {
                    *m = if r.gen::<f64>() < keep { scale } else { T::zero() };
                }
            }
            _ => tr.mask.iter_mut().for_each(|m| *m = T::one()),
        }
        for j in 0..h {
            tr.out[j] = tr.h[j] * tr.mask[j];
        }
        hidden.h[l].copy_from_slice(&tr.h);
        hidden.c[l].copy_from_slice(&tr.c);
    }

    // post-LSTM dense, ReLU
    for i in 0..lay.post.len() {
        let (before, after) = acts.post.split_at_mut(i);
        let x: &[T] = if i == 0 { &acts.lstm.last().expect("lstm").out } else { &before[i - 1] };
        let out = &mut after[0];
        affine(p, &lay.post[i], x, out);
        out.iter_mut().for_each(|v| *v = v.max(T::zero()));
    }

    let trunk: &[T] = match acts.post.last() {
        Some(v) => v,
        None => &acts.lstm.last().expect("lstm").out,
    };
    affine(p, &lay.aim, trunk, &mut acts.aim);
    affine(p, &lay.keys, trunk, &mut acts.keys);
}

pub(crate) fn check_inputs<T: Real>(
    params: &NetworkParams<T>,
    observation: &[f32],
    hidden: &HiddenState<T>,
) -> Result<(), NetError> {
    if params.values.len() != params.layout.total {
        return Err(NetError::ParamShape { got: params.values.len(), expected: params.layout.total });
    }
    if observation.len() != OBSERVATION_DIM {
        return Err(NetError::ObservationShape { got: observation.len(), expected: OBSERVATION_DIM });
    }
    if !hidden.matches(&params.config) {
        return Err(NetError::HiddenShape(params.config.lstm_widths.clone()));
    }
    Ok(())
}

/// Functional forward pass: returns the action distribution and the next
/// hidden state, leaving the inputs untouched.
pub fn forward<T: Real, R: Rng>(
    params: &NetworkParams<T>,
    observation: &[f32],
    hidden: &HiddenState<T>,
    mode: Mode,
    dropout_rng: &mut R,
) -> Result<(ActionDistribution, HiddenState<T>), NetError> {
    check_inputs(params, observation, hidden)?;
    let mut next = hidden.clone();
    let mut acts = Activations::new(&params.config);
    let rng = match mode {
        Mode::Train => Some(dropout_rng),
        Mode::Infer => None,
    };
    forward_step(params, observation, &mut next, &mut acts, rng);
    Ok((acts.distribution(), next))
}

/// Allocation-free stateful runner for rollouts and latency measurement.
#[derive(Clone, Debug)]
pub struct InferenceNet<T: Real = f32> {
    params: NetworkParams<T>,
    hidden: HiddenState<T>,
    acts: Activations<T>,
}

impl<T: Real> InferenceNet<T> {
    pub fn new(params: NetworkParams<T>) -> Self {
        let hidden = HiddenState::zeros(&params.config);
        let acts = Activations::new(&params.config);
        InferenceNet { params, hidden, acts }
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.params.config
    }

    pub fn reset(&mut self) {
        self.hidden.reset();
    }

    pub fn hidden(&self) -> &HiddenState<T> {
        &self.hidden
    }

    pub fn step(&mut self, observation: &[f32]) -> Result<ActionDistribution, NetError> {
        check_inputs(&self.params, observation, &self.hidden)?;
        forward_step::<T, rand_chacha::ChaCha8Rng>(
            &self.params,
            observation,
            &mut self.hidden,
            &mut self.acts,
            None,
        );
        Ok(self.acts.distribution())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::params::init_params;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_input_gives_finite_normalized_output() {
        let p = init_params(&NetworkConfig::a_small(), 3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let obs = vec![0.0f32; OBSERVATION_DIM];
        let (d, next) = forward(&p, &obs, &HiddenState::zeros(&p.config), Mode::Infer, &mut rng).unwrap();
        assert!(d.aim_logits.iter().chain(&d.key_logits).all(|v| v.is_finite()));
        let s: f64 = d.aim_probs().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!(d.key_probs().iter().all(|&q| q > 0.0 && q < 1.0));
        assert!(next.matches(&p.config));
    }

    #[test]
    fn inference_is_pure_and_train_mode_drops() {
        let p = init_params(&NetworkConfig::a_small(), 3);
        let obs: Vec<f32> = (0..OBSERVATION_DIM).map(|i| (i % 7) as f32 / 7.0).collect();
        let h = HiddenState::zeros(&p.config);
        let mut r1 = ChaCha8Rng::seed_from_u64(1);
        let mut r2 = ChaCha8Rng::seed_from_u64(2);
        let a = forward(&p, &obs, &h, Mode::Infer, &mut r1).unwrap();
        let b = forward(&p, &obs, &h, Mode::Infer, &mut r2).unwrap();
        assert_eq!(a, b);
        let t1 = forward(&p, &obs, &h, Mode::Train, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let t2 = forward(&p, &obs, &h, Mode::Train, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(t1, t2);
        assert_ne!(t1.0, a.0);
    }

    #[test]
    fn shape_errors() {
        let p = init_params(&NetworkConfig::a_small(), 3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let h = HiddenState::zeros(&p.config);
        let err = forward(&p, &[0.0; 10], &h, Mode::Infer, &mut rng).unwrap_err();
        assert_eq!(err, NetError::ObservationShape { got: 10, expected: OBSERVATION_DIM });
        let bad = HiddenState::<f64> { h: vec![vec![0.0; 3]], c: vec![vec![0.0; 3]] };
        let obs = vec![0.0; OBSERVATION_DIM];
        assert!(matches!(forward(&p, &obs, &bad, Mode::Infer, &mut rng), Err(NetError::HiddenShape(_))));
    }

    #[test]
    fn step_by_step_matches_functional_forward() {
        let p = init_params(&NetworkConfig::new("t", 2, &[8], &[4, 3], &[4]), 9);
        let mut runner = InferenceNet::new(p.clone());
        let mut h = HiddenState::zeros(&p.config);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for t in 0..5 {
            let obs: Vec<f32> = (0..OBSERVATION_DIM).map(|i| ((i * (t + 1)) % 11) as f32 / 11.0).collect();
            let (d, next) = forward(&p, &obs, &h, Mode::Infer, &mut rng).unwrap();
            h = next;
            assert_eq!(runner.step(&obs).unwrap(), d);
        }
        assert_eq!(runner.hidden(), &h);
    }

    #[test]
    fn single_precision_tracks_double() {
        let p = init_params(&NetworkConfig::a_small(), 4);
        let obs: Vec<f32> = (0..OBSERVATION_DIM).map(|i| (i % 5) as f32 / 5.0).collect();
        let mut r64 = InferenceNet::new(p.clone());
        let mut r32 = InferenceNet::new(p.cast::<f32>());
        let a = r64.step(&obs).unwrap();
        let b = r32.step(&obs).unwrap();
        for (x, y) in a.aim_logits.iter().zip(&b.aim_logits) {
            assert!((x - y).abs() < 1e-4);
        }
    }

    #[test]
    fn sampling_respects_temperature_zero() {
        let d = ActionDistribution {
            aim_logits: (0..165).map(|i| if i == 40 { 3.0 } else { 0.0 }).collect(),
            key_logits: vec![-2.0, 2.0, -1.0, -1.0, -1.0, -1.0, -1.0, -1.0, -1.0, -1.0, 5.0],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = d.sample(0.0, &mut rng);
        assert_eq!(a.aim.index(), 40);
        assert_eq!(a.keys, KeyAction::from_keys(&[Key::A, Key::LeftClick]));
        let mut counts = [0usize; 165];
        for _ in 0..2000 {
            counts[d.sample(1.0, &mut rng).aim.index()] += 1;
        }
        // p(40) = e^3 / (e^3 + 164)
        let expected = 3f64.exp() / (3f64.exp() + 164.0);
        let got = counts[40] as f64 / 2000.0;
        assert!((got - expected).abs() < 0.04, "{got} vs {expected}");
    }
}
