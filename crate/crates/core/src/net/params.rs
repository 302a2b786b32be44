use super::config::{count_params, NetworkConfig, KERNEL};
use super::Real;
use crate::actions::{AIM_CHOICES, KEY_COUNT};
use crate::sensors::{AUDIO_DIM, GRID, LAYERS, SCALAR_DIM, SPATIAL_DIM};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Position of one weight matrix (`rows × cols`, row-major) and its bias
/// (`rows`) inside the flat parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DenseSlot {
    pub rows: usize,
    pub cols: usize,
    pub weight: usize,
    pub bias: usize,
}

impl DenseSlot {
    pub fn weight_len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn end(&self) -> usize {
        self.bias + self.rows
    }
}

/// Offsets of every tensor in the flat parameter vector, in storage order:
/// conv, optional visual dense, scalar/audio/spatial encoders, pre-LSTM
/// dense layers, LSTM layers (gate rows ordered input, forget, cell, output;
/// weight columns are layer input followed by recurrent state), post-LSTM
/// dense layers, aim head, key head.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    /// `filters × (3·3·10)` with columns ordered (ky, kx, channel).
    pub conv: DenseSlot,
    pub visual: Option<DenseSlot>,
    pub scalar: DenseSlot,
    pub audio: DenseSlot,
    pub spatial: DenseSlot,
    pub pre: Vec<DenseSlot>,
    /// `4h × (input + h)`.
    pub lstm: Vec<DenseSlot>,
    pub post: Vec<DenseSlot>,
    pub aim: DenseSlot,
    pub keys: DenseSlot,
    pub total: usize,
}

impl Layout {
    pub fn new(cfg: &NetworkConfig) -> Self {
        let mut next = 0;
        let mut slot = |rows: usize, cols: usize| {
            let s = DenseSlot { rows, cols, weight: next, bias: next + rows * cols };
            next = s.end();
            s
        };
        let conv = slot(cfg.conv_filters, KERNEL * KERNEL * LAYERS);
        let visual = cfg.encoders.visual_dense.map(|v| slot(v, GRID * GRID * cfg.conv_filters));
        let scalar = slot(cfg.encoders.scalar_dense, SCALAR_DIM);
        let audio = slot(cfg.encoders.audio_dense, AUDIO_DIM);
        let spatial = slot(cfg.encoders.spatial_dense, SPATIAL_DIM);
        let mut width = cfg.concat_width();
        let pre = cfg
            .pre_lstm_dense
            .iter()
            .map(|&w| {
                let s = slot(w, width);
                width = w;
                s
            })
            .collect();
        let lstm = cfg
            .lstm_widths
            .iter()
            .map(|&h| {
                let s = slot(4 * h, width + h);
                width = h;
                s
            })
            .collect();
        let post = cfg
            .post_lstm_dense
            .iter()
            .map(|&w| {
                let s = slot(w, width);
                width = w;
                s
            })
            .collect();
        let aim = slot(AIM_CHOICES, width);
        let keys = slot(KEY_COUNT, width);
        Layout { conv, visual, scalar, audio, spatial, pre, lstm, post, aim, keys, total: next }
    }

    /// Every slot with a stable name, in storage order.
    pub fn named_slots(&self) -> Vec<(String, DenseSlot)> {
        let mut out = vec![("conv".to_string(), self.conv)];
        if let Some(v) = self.visual {
            out.push(("visual".into(), v));
        }
        out.push(("scalar".into(), self.scalar));
        out.push(("audio".into(), self.audio));
        out.push(("spatial".into(), self.spatial));
        out.extend(self.pre.iter().enumerate().map(|(i, s)| (format!("pre{i}"), *s)));
        out.extend(self.lstm.iter().enumerate().map(|(i, s)| (format!("lstm{i}"), *s)));
        out.extend(self.post.iter().enumerate().map(|(i, s)| (format!("post{i}"), *s)));
        out.push(("aim".into(), self.aim));
        out.push(("keys".into(), self.keys));
        out
    }
}

/// Learnable weights of one network, stored flat (see [`Layout`]).
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams<T = f64> {
    pub config: NetworkConfig,
    pub seed: u64,
    pub layout: Layout,
    pub values: Vec<T>,
}

/// Glorot-uniform weights, zero biases, forget-gate biases at +1.
pub fn init_params(cfg: &NetworkConfig, seed: u64) -> NetworkParams<f64> {
    let layout = Layout::new(cfg);
    debug_assert_eq!(layout.total, count_params(cfg));
    let mut values = vec![0.0; layout.total];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (name, s) in layout.named_slots() {
        let (fan_in, fan_out) = if name == "conv" {
            (s.cols, KERNEL * KERNEL * s.rows)
        } else {
            (s.cols, s.rows)
        };
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for v in &mut values[s.weight..s.bias] {
            *v = rng.gen_range(-limit..limit);
        }
    }
    for s in &layout.lstm {
        let h = s.rows / 4;
        for v in &mut values[s.bias + h..s.bias + 2 * h] {
            *v = 1.0;
        }
    }
    NetworkParams { config: cfg.clone(), seed, layout, values }
}

impl<T: Real> NetworkParams<T> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn cast<U: Real>(&self) -> NetworkParams<U> {
        NetworkParams {
            config: self.config.clone(),
            seed: self.seed,
            layout: self.layout.clone(),
            values: self.values.iter().map(|v| U::from_f64(v.to_f64().unwrap())).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_and_sized() {
        let cfg = NetworkConfig::a_small();
        let a = init_params(&cfg, 7);
        let b = init_params(&cfg, 7);
        let c = init_params(&cfg, 8);
        assert_eq!(a, b);
        assert_ne!(a.values, c.values);
        assert_eq!(a.len(), count_params(&cfg));
        let a_full = init_params(&NetworkConfig::preset("A").unwrap(), 0);
        assert_eq!(a_full.len(), count_params(&a_full.config));
    }

    #[test]
    fn biases_start_at_zero_except_forget_gate() {
        let cfg = NetworkConfig::new("t", 2, &[8], &[4, 3], &[4]);
        let p = init_params(&cfg, 1);
        for (name, s) in p.layout.named_slots() {
            let bias = &p.values[s.bias..s.end()];
            if name.starts_with("lstm") {
                let h = s.rows / 4;
                assert!(bias[..h].iter().all(|&v| v == 0.0));
                assert!(bias[h..2 * h].iter().all(|&v| v == 1.0));
                assert!(bias[2 * h..].iter().all(|&v| v == 0.0));
            } else {
                assert!(bias.iter().all(|&v| v == 0.0), "{name}");
            }
            let limit = (6.0 / (s.cols + if name == "conv" { 9 * s.rows } else { s.rows }) as f64).sqrt();
            assert!(p.values[s.weight..s.bias].iter().all(|v| v.abs() <= limit));
        }
    }
}
