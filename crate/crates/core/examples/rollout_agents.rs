//! Runs each agent kind for a few rounds and summarises round length and
//! outcome. Pass a checkpoint path to include a cloned model.

use raybot::net::load_checkpoint;
use raybot::policy::{default_roster, expert_rollout, model_rollout, random_rollout, tracker_rollout, RoundResult};
use raybot::world::{ascent_mini, RoundOutcome};
use std::path::PathBuf;
use std::sync::Arc;

fn summary(name: &str, rounds: &[RoundResult]) {
    let mean = rounds.iter().map(|r| r.ticks as f64).sum::<f64>() / rounds.len() as f64 / 16.0;
    let wins = rounds.iter().filter(|r| r.outcome == RoundOutcome::AttackersWin).count();
    println!("{name:<8} {} rounds, mean {mean:.1} s, attackers won {wins}", rounds.len());
}

fn main() {
    let map = Arc::new(ascent_mini());
    let n = 6;
    summary("expert", &expert_rollout(map.clone(), &default_roster(), n, 1).unwrap());
    summary("tracker", &tracker_rollout(map.clone(), n, 1).unwrap());
    summary("random", &random_rollout(map.clone(), n, 1).unwrap());
    if let Some(path) = std::env::args().nth(1).map(PathBuf::from) {
        let ck = load_checkpoint(&path).expect("readable checkpoint");
        summary("model", &model_rollout(&ck.params, map, n, 1.0, 1, false).unwrap());
    }
}
