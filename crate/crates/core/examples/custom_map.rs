//! Loads a map from text, shows what validation rejects and plans a route
//! around a wall.

use raybot::world::{load_map, Vec2};

const ROOM: &str = r#"
name = "two_rooms"
bounds = [0.0, 0.0, 40.0, 20.0]
attacker_spawn = [5.0, 10.0, 0.0]
defender_spawn = [35.0, 10.0, 0.0]
bombsite = [30.0, 2.0, 38.0, 8.0]
walls = [[20.0, 0.0, 20.0, 14.0]]
waypoints = [[5.0, 10.0], [20.0, 17.0], [35.0, 10.0], [33.0, 7.0]]
links = [[0, 1], [1, 2], [2, 3]]
"#;

fn main() {
    let map = load_map(ROOM).expect("valid map");
    println!("{}: {} walls, {} waypoints", map.name, map.walls.len(), map.nav.points.len());
    let route = map.route(map.attacker_spawn.planar(), map.bombsite.center());
    println!("attacker route to the bombsite: {:?}", route.iter().map(|p| (p.x, p.y)).collect::<Vec<_>>());
    assert!(!map.clear_line(Vec2::new(5.0, 10.0), Vec2::new(35.0, 10.0)));

    let broken = ROOM.replace("attacker_spawn = [5.0, 10.0, 0.0]", "attacker_spawn = [20.0, 5.0, 0.0]");
    match load_map(&broken) {
        Ok(_) => println!("unexpectedly accepted"),
        Err(e) => println!("spawn inside the wall is rejected: {e}"),
    }
}
