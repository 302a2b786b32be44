//! Compares scripted-expert rounds with uniform-random rounds: the feature
//! divergence table, position-heatmap distances and two rendered heatmaps.

use raybot::eval::{build_heatmap, compare_features, default_cell_size, extract_features, heatmap_distances, render_heatmap};
use raybot::policy::{default_roster, expert_rollout, random_rollout, RoundResult};
use raybot::world::{ascent_mini, Team};
use std::sync::Arc;

fn ticks(rounds: &[RoundResult]) -> Vec<raybot::formats::TickRecord> {
    rounds.iter().flat_map(|r| r.log.iter().cloned()).collect()
}

fn main() {
    let map = Arc::new(ascent_mini());
    let expert = ticks(&expert_rollout(map.clone(), &default_roster(), 20, 1).unwrap());
    let random = ticks(&random_rollout(map.clone(), 20, 2).unwrap());

    let table = compare_features(&extract_features(&expert).unwrap(), &extract_features(&random).unwrap()).unwrap();
    println!("{}", table.to_text("expert vs random"));

    let cell = default_cell_size(&map.bounds);
    let out = std::env::temp_dir();
    for (side, tag) in [(Team::Attacker, "attack"), (Team::Defender, "defence")] {
        let p = build_heatmap(&expert, side, &map.bounds, cell).unwrap();
        let q = build_heatmap(&random, side, &map.bounds, cell).unwrap();
        let d = heatmap_distances(&p, &q).unwrap();
        println!("{tag:<8} EMD-1D {:.3}  EMD-2D {:.3}  ASD {:.3}", d.emd_1d, d.emd_2d, d.asd);
        for (h, who) in [(&p, "expert"), (&q, "random")] {
            let path = out.join(format!("raybot_{who}_{tag}.png"));
            render_heatmap(h, &path, 8).unwrap();
        }
    }
    println!("heatmaps written to {}", out.display());
}
