//! Clones the nearest-enemy tracker expert with the desk-scale network and
//! reports held-out accuracy per epoch. Pass the epoch count as the first
//! argument (default 5).

use raybot::net::NetworkConfig;
use raybot::policy::{default_roster, generate_dataset, Demonstrator, GenerateOptions};
use raybot::train::{bc_train, TrainConfig, TrainOptions};
use raybot::world::ascent_mini;
use std::sync::Arc;

fn main() {
    let epochs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let mut opts = GenerateOptions::new(8, 7);
    opts.demonstrator = Demonstrator::Tracker;
    let ds = generate_dataset(Arc::new(ascent_mini()), &default_roster(), &opts).expect("roster is valid");
    println!("{} frames of tracker play", ds.total_timesteps());

    let cfg = TrainConfig { epochs, ..TrainConfig::default() };
    let train_opts = TrainOptions { verbose: true, ..TrainOptions::default() };
    let (_, report) = bc_train(&ds.trajectories, &NetworkConfig::a_small(), &cfg, &train_opts).expect("training runs");
    println!(
        "held-out loss {:.3} -> {:.3} (best epoch {}); majority-class aim baseline {:.3}",
        report.initial.loss, report.best_heldout_loss, report.best_epoch, report.majority_aim_baseline
    );
}
