//! Compares the hand-written backward pass with central finite differences
//! on a tiny network and a short random sequence.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use raybot::actions::{Action, AimAction, KeyAction, AIM_CHOICES};
use raybot::net::{backward, init_params, sequence_loss, Frame, NetworkConfig};
use raybot::sensors::OBSERVATION_DIM;

fn main() {
    let mut cfg = NetworkConfig::new("tiny", 2, &[8], &[4], &[4]);
    cfg.dropout = 0.0;
    let mut params = init_params(&cfg, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let obs: Vec<Vec<f32>> = (0..3).map(|_| (0..OBSERVATION_DIM).map(|_| rng.gen()).collect()).collect();
    let frames: Vec<Frame> = obs
        .iter()
        .map(|o| Frame {
            observation: o,
            target: Action::new(AimAction::new(rng.gen_range(0..AIM_CHOICES)).unwrap(), KeyAction::from_bits(rng.gen())),
        })
        .collect();

    let (loss, grad) = backward(&params, &frames, 64);
    println!("{} parameters, loss {loss:.6}", grad.len());
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    // every 7th parameter keeps the run short
    for i in (0..grad.len()).step_by(7) {
        let orig = params.values[i];
        params.values[i] = orig + eps;
        let up = sequence_loss(&params, &frames);
        params.values[i] = orig - eps;
        let down = sequence_loss(&params, &frames);
        params.values[i] = orig;
        let fd = (up - down) / (2.0 * eps);
        let scale = fd.abs().max(grad[i].abs());
        if scale > 1e-7 {
            worst = worst.max((fd - grad[i]).abs() / scale);
        }
    }
    println!("largest relative gap to finite differences: {worst:.2e}");
}
