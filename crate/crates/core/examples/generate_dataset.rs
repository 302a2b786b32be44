//! Generates a small scripted-expert dataset, writes it to disk and reads
//! it back.

use raybot::formats::{load_dataset, save_dataset};
use raybot::policy::{default_roster, generate_dataset, GenerateOptions};
use raybot::world::ascent_mini;
use std::sync::Arc;

fn main() {
    let out = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| std::env::temp_dir().join("raybot_example_data"));
    let opts = GenerateOptions::new(2, 7);
    let ds = generate_dataset(Arc::new(ascent_mini()), &default_roster(), &opts).expect("roster is valid");
    save_dataset(&out, &ds).expect("dataset writes");
    println!(
        "{} trajectories, {} frames, {:.1} simulated minutes -> {}",
        ds.trajectories.len(),
        ds.total_timesteps(),
        ds.simulated_seconds() / 60.0,
        out.display()
    );
    for t in ds.trajectories.iter().take(4) {
        println!("  round {} player {} {:?}: {} frames, {:?}", t.round_id, t.player_id, t.team, t.len(), t.outcome);
    }
    let back = load_dataset(&out).expect("dataset reads");
    assert_eq!(back.trajectories, ds.trajectories);
    println!("reloaded identically");
}
