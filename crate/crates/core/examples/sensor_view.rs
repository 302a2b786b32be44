//! Renders what player 0 sees at the start of a round: the nearest geometry
//! or bombsite hit in each cell of the 15 x 15 range-finder grid, in 2 m
//! bands (0 = under 2 m, 9 = 18 m or more, `.` = nothing within range),
//! followed by the other sensor blocks.

use raybot::sensors::{observe, sense_visual_counted, Layer, GRID, SENSOR_RANGE};
use raybot::world::{ascent_mini, WorldState};
use std::sync::Arc;

fn main() {
    let world = WorldState::new(Arc::new(ascent_mini()), 0, 1);
    let me = &world.players[0];
    println!("player 0 at ({:.1}, {:.1}) facing {:.0}°", me.position.x, me.position.y, me.yaw);

    let (tensor, rays) = sense_visual_counted(&world, 0);
    println!("{rays} rays cast");
    for row in 0..GRID {
        let line: String = (0..GRID)
            .map(|col| {
                let v = tensor.get(row, col, Layer::Geometry as usize).min(tensor.get(row, col, Layer::Bombsite as usize));
                if v >= 1.0 { '.' } else { char::from_digit(((v * SENSOR_RANGE / 2.0) as u32).min(9), 10).unwrap() }
            })
            .collect();
        println!("  {line}");
    }

    let obs = observe(&world, 0);
    println!("scalar state: {:?}", obs.scalar.iter().map(|v| format!("{v:.2}")).collect::<Vec<_>>());
    println!("spatial:      {:?}", obs.spatial.iter().map(|v| format!("{v:.2}")).collect::<Vec<_>>());
    println!("flat observation has {} values", obs.to_flat().len());
}
