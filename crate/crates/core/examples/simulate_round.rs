//! Plays one scripted-expert round on the built-in map and prints the
//! outcome with each player's tallies.

use raybot::policy::{akdr, default_roster, expert_rollout, kdr};
use raybot::world::ascent_mini;
use std::sync::Arc;

fn main() {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let rounds = expert_rollout(Arc::new(ascent_mini()), &default_roster(), 1, seed).expect("roster is valid");
    let r = &rounds[0];
    println!("round {} ended {:?} after {} ticks ({:.1} s)", r.round_id, r.outcome, r.ticks, r.ticks as f64 / 16.0);

    let last = r.log.last().expect("rounds log every tick");
    for p in &last.players {
        let s = &p.stats;
        println!(
            "player {} {:?} alive={} kills={} deaths={} shots={} hits={} kdr={:.2} akdr={:.2}",
            p.id, p.team, p.alive, s.kills, s.deaths, s.shots, s.hits,
            kdr(s.kills, s.deaths), akdr(s.kills, s.assists, s.deaths)
        );
    }
}
