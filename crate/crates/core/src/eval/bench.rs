use crate::net::{count_params, init_params, InferenceNet, NetworkConfig};
use crate::sensors::OBSERVATION_DIM;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub model: String,
    pub parameters: usize,
    pub iterations: usize,
    pub mean_ms: f64,
    pub std_ms: f64,
    pub machine: String,
}

/// CPU model name when the OS exposes one, plus architecture and core count.
pub fn machine_descriptor() -> String {
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| s.lines().find(|l| l.starts_with("model name")).and_then(|l| l.split(':').nth(1)).map(|m| m.trim().to_string()))
        .unwrap_or_else(|| "unknown cpu".into());
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    format!("{cpu} ({}, {cores} logical cores, single-thread run)", std::env::consts::ARCH)
}

/// Times single-precision inference steps on the calling thread. Each
/// iteration feeds a fresh synthetic observation with values in [0, 1] and
/// carries the hidden state, as a running bot would. At least 100 timed
/// iterations are run.
pub fn bench_inference(config: &NetworkConfig, n_warmup: usize, n_iters: usize) -> BenchReport {
    let n_iters = n_iters.max(100);
    let params = init_params(config, 0).cast::<f32>();
    let mut net = InferenceNet::new(params);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let inputs: Vec<Vec<f32>> = (0..8).map(|_| (0..OBSERVATION_DIM).map(|_| rng.gen::<f32>()).collect()).collect();
    for k in 0..n_warmup {
        std::hint::black_box(net.step(&inputs[k % inputs.len()]).expect("observation sized by construction"));
    }
    let mut times = Vec::with_capacity(n_iters);
    for k in 0..n_iters {
        let obs = &inputs[k % inputs.len()];
        let t0 = Instant::now();
        std::hint::black_box(net.step(obs).expect("observation sized by construction"));
        times.push(t0.elapsed().as_secs_f64() * 1e3);
    }
    let mean = times.iter().sum::<f64>() / n_iters as f64;
    let var = times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n_iters - 1) as f64;
    BenchReport {
        model: config.name.clone(),
        parameters: count_params(config),
        iterations: n_iters,
        mean_ms: mean,
        std_ms: var.sqrt(),
        machine: machine_descriptor(),
    }
}
