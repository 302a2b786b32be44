use super::geometry::{Rect, Segment, Vec2, Vec3};
use serde::Deserialize;
use std::collections::{BinaryHeap, VecDeque};
use thiserror::Error;

/// Source of the built-in map, shipped with the crate.
pub const ASCENT_MINI: &str = include_str!("../../maps/ascent_mini.map");

pub const WALL_HEIGHT: f64 = 3.0;
/// Minimum clearance between an entity anchor (spawn, waypoint) and a wall.
pub const CLEARANCE: f64 = 0.4;

#[derive(Debug, Error)]
pub enum MapError {
    #[error("map parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid map: {entity} {reason}")]
    Invariant { entity: String, reason: String },
}

impl MapError {
    fn invariant(entity: impl Into<String>, reason: impl Into<String>) -> Self {
        MapError::Invariant { entity: entity.into(), reason: reason.into() }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapDocument {
    name: String,
    bounds: [f64; 4],
    attacker_spawn: [f64; 3],
    defender_spawn: [f64; 3],
    bombsite: [f64; 4],
    #[serde(default)]
    walls: Vec<[f64; 4]>,
    #[serde(default)]
    waypoints: Vec<[f64; 2]>,
    #[serde(default)]
    links: Vec<[usize; 2]>,
}

/// Walkable-point graph used by the scripted experts.
#[derive(Clone, Debug, PartialEq)]
pub struct NavGraph {
    pub points: Vec<Vec2>,
    pub adjacency: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MapGeometry {
    pub name: String,
    pub bounds: Rect,
    /// Interior walls; the bounds rectangle is an implicit enclosing wall.
    pub walls: Vec<Segment>,
    pub attacker_spawn: Vec3,
    pub defender_spawn: Vec3,
    pub bombsite: Rect,
    pub nav: NavGraph,
}

/// Parses and validates a map document.
pub fn load_map(text: &str) -> Result<MapGeometry, MapError> {
    let doc: MapDocument = toml::from_str(text)?;
    let [x0, y0, x1, y1] = doc.bounds;
    if !(x1 > x0 && y1 > y0) {
        return Err(MapError::invariant("bounds", "must have positive extent"));
    }
    let bounds = Rect::new(Vec2::new(x0, y0), Vec2::new(x1, y1));
    let [bx0, by0, bx1, by1] = doc.bombsite;
    if !(bx1 > bx0 && by1 > by0) {
        return Err(MapError::invariant("bombsite", "must have positive extent"));
    }
    let walls = doc
        .walls
        .iter()
        .map(|w| Segment::new(Vec2::new(w[0], w[1]), Vec2::new(w[2], w[3])))
        .collect();
    let [ax, ay, az] = doc.attacker_spawn;
    let [dx, dy, dz] = doc.defender_spawn;
    let nav = NavGraph {
        points: doc.waypoints.iter().map(|p| Vec2::new(p[0], p[1])).collect(),
        adjacency: vec![Vec::new(); doc.waypoints.len()],
    };
    let mut map = MapGeometry {
        name: doc.name,
        bounds,
        walls,
        attacker_spawn: Vec3::new(ax, ay, az),
        defender_spawn: Vec3::new(dx, dy, dz),
        bombsite: Rect::new(Vec2::new(bx0, by0), Vec2::new(bx1, by1)),
        nav,
    };
    for (k, &[i, j]) in doc.links.iter().enumerate() {
        let n = map.nav.points.len();
        if i >= n || j >= n || i == j {
            return Err(MapError::invariant(format!("link {k}"), "references an invalid waypoint"));
        }
        map.nav.adjacency[i].push(j);
        map.nav.adjacency[j].push(i);
    }
    map.validate()?;
    Ok(map)
}

/// The built-in `ascent_mini` map.
pub fn ascent_mini() -> MapGeometry {
    load_map(ASCENT_MINI).expect("shipped map is valid")
}

impl MapGeometry {
    fn validate(&self) -> Result<(), MapError> {
        let all = [
            self.bounds.min.x,
            self.bounds.min.y,
            self.bounds.max.x,
            self.bounds.max.y,
            self.bombsite.min.x,
            self.bombsite.min.y,
            self.bombsite.max.x,
            self.bombsite.max.y,
        ];
        if all.iter().any(|v| !v.is_finite())
            || !self.attacker_spawn.is_finite()
            || !self.defender_spawn.is_finite()
        {
            return Err(MapError::invariant("map", "contains non-finite coordinates"));
        }
        for (k, w) in self.walls.iter().enumerate() {
            if ![w.a.x, w.a.y, w.b.x, w.b.y].iter().all(|v| v.is_finite()) {
                return Err(MapError::invariant(format!("wall {k}"), "has non-finite coordinates"));
            }
        }
        self.check_anchor("attacker_spawn", self.attacker_spawn.planar())?;
        self.check_anchor("defender_spawn", self.defender_spawn.planar())?;
        self.check_anchor("bombsite center", self.bombsite.center())?;
        if !(self.bounds.contains(self.bombsite.min) && self.bounds.contains(self.bombsite.max)) {
            return Err(MapError::invariant("bombsite", "extends outside bounds"));
        }
        for (k, &p) in self.nav.points.iter().enumerate() {
            self.check_anchor(&format!("waypoint {k}"), p)?;
        }
        for (i, nbrs) in self.nav.adjacency.iter().enumerate() {
            for &j in nbrs {
                if i < j && !self.clear_line(self.nav.points[i], self.nav.points[j]) {
                    return Err(MapError::invariant(format!("link [{i}, {j}]"), "crosses a wall"));
                }
            }
        }
        let starts = [
            ("attacker_spawn", self.attacker_spawn.planar()),
            ("defender_spawn", self.defender_spawn.planar()),
            ("bombsite", self.bombsite.center()),
        ];
        let mut anchors = Vec::new();
        for (name, p) in starts {
            match self.nearest_visible_waypoint(p) {
                Some(w) => anchors.push(w),
                None => {
                    return Err(MapError::invariant(name, "has no visible waypoint in the nav graph"))
                }
            }
        }
        let reach = self.nav.reachable_from(anchors[0]);
        for (k, name) in [(1, "defender_spawn"), (2, "bombsite")] {
            if !reach[anchors[k]] {
                return Err(MapError::invariant(name, "is not connected to attacker_spawn"));
            }
        }
        Ok(())
    }

    fn check_anchor(&self, entity: &str, p: Vec2) -> Result<(), MapError> {
        if !self.bounds.contains(p) {
            return Err(MapError::invariant(entity, format!("({}, {}) lies outside bounds", p.x, p.y)));
        }
        if let Some(k) = self.walls.iter().position(|w| w.distance_to(p) < CLEARANCE) {
            return Err(MapError::invariant(
                entity,
                format!("({}, {}) lies inside wall {k}", p.x, p.y),
            ));
        }
        Ok(())
    }

    /// Whether the straight path between two ground points crosses no wall.
    pub fn clear_line(&self, a: Vec2, b: Vec2) -> bool {
        let s = Segment::new(a, b);
        self.walls.iter().all(|w| !w.intersects(&s))
    }

    /// Whether a disc of `radius` swept from `a` to `b` stays clear of all walls.
    pub fn clear_sweep(&self, a: Vec2, b: Vec2, radius: f64) -> bool {
        let s = Segment::new(a, b);
        self.walls.iter().all(|w| w.segment_distance(&s) >= radius)
    }

    pub fn nearest_visible_waypoint(&self, p: Vec2) -> Option<usize> {
        self.nav
            .points
            .iter()
            .enumerate()
            .filter(|(_, &q)| self.clear_line(p, q))
            .min_by(|(_, a), (_, b)| a.distance(p).total_cmp(&b.distance(p)))
            .map(|(i, _)| i)
    }

    /// Shortest walkable route from `from` to `to`: the sequence of ground
    /// points to visit, ending with `to`. Falls back to a straight line when
    /// no graph route exists.
    pub fn route(&self, from: Vec2, to: Vec2) -> Vec<Vec2> {
        if self.clear_sweep(from, to, CLEARANCE) {
            return vec![to];
        }
        let (Some(s), Some(g)) = (self.nearest_visible_waypoint(from), self.nearest_visible_waypoint(to))
        else {
            return vec![to];
        };
        match self.nav.shortest_path(s, g) {
            Some(path) => {
                let mut pts: Vec<Vec2> = path.iter().map(|&i| self.nav.points[i]).collect();
                pts.push(to);
                pts
            }
            None => vec![to],
        }
    }
}

impl NavGraph {
    pub fn reachable_from(&self, start: usize) -> Vec<bool> {
        let mut seen = vec![false; self.points.len()];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(i) = queue.pop_front() {
            for &j in &self.adjacency[i] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen
    }

    /// Dijkstra over Euclidean link lengths.
    pub fn shortest_path(&self, start: usize, goal: usize) -> Option<Vec<usize>> {
        #[derive(PartialEq)]
        struct Entry(f64, usize);
        impl Eq for Entry {}
        impl PartialOrd for Entry {
            fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
                Some(self.cmp(o))
            }
        }
        impl Ord for Entry {
            fn cmp(&self, o: &Self) -> std::cmp::Ordering {
                o.0.total_cmp(&self.0).then_with(|| o.1.cmp(&self.1))
            }
        }

        let n = self.points.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut prev = vec![usize::MAX; n];
        let mut heap = BinaryHeap::new();
        dist[start] = 0.0;
        heap.push(Entry(0.0, start));
        while let Some(Entry(d, i)) = heap.pop() {
            if i == goal {
                break;
            }
            if d > dist[i] {
                continue;
            }
            for &j in &self.adjacency[i] {
                let nd = d + self.points[i].distance(self.points[j]);
                if nd < dist[j] {
                    dist[j] = nd;
                    prev[j] = i;
                    heap.push(Entry(nd, j));
                }
            }
        }
        if !dist[goal].is_finite() {
            return None;
        }
        let mut path = vec![goal];
        let mut cur = goal;
        while cur != start {
            cur = prev[cur];
            path.push(cur);
        }
        path.reverse();
        Some(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ROOM: &str = r#"
        name = "room"
        bounds = [0.0, 0.0, 40.0, 40.0]
        attacker_spawn = [5.0, 20.0, 0.0]
        defender_spawn = [35.0, 20.0, 0.0]
        bombsite = [15.0, 15.0, 25.0, 25.0]
        waypoints = [[10.0, 20.0], [30.0, 20.0]]
        links = [[0, 1]]
    "#;

    #[test]
    fn empty_room_loads() {
        let map = load_map(ROOM).unwrap();
        assert_eq!(map.walls.len(), 0);
        assert_eq!(map.bounds.width(), 40.0);
        assert_eq!(map.nav.points.len(), 2);
    }

    #[test]
    fn spawn_inside_wall_is_rejected() {
        let text = format!("{ROOM}\nwalls = [[5.0, 10.0, 5.0, 30.0]]\n");
        match load_map(&text) {
            Err(MapError::Invariant { entity, reason }) => {
                assert_eq!(entity, "attacker_spawn");
                assert!(reason.contains("wall 0"), "{reason}");
            }
            other => panic!("expected invariant error, got {other:?}"),
        }
    }

    #[test]
    fn parse_errors_surface() {
        assert!(matches!(load_map("name = "), Err(MapError::Parse(_))));
        assert!(matches!(load_map("name = \"x\""), Err(MapError::Parse(_))));
        let extra = format!("{ROOM}\nbogus = 1\n");
        assert!(matches!(load_map(&extra), Err(MapError::Parse(_))));
    }

    #[test]
    fn disconnected_graph_is_rejected() {
        let text = ROOM.replace("links = [[0, 1]]", "links = []");
        let err = load_map(&text).unwrap_err();
        assert!(err.to_string().contains("not connected"), "{err}");
    }

    #[test]
    fn routes_follow_graph_around_walls() {
        let map = ascent_mini();
        let from = map.attacker_spawn.planar();
        let to = map.bombsite.center();
        let route = map.route(from, to);
        assert!(route.len() > 2);
        assert_eq!(*route.last().unwrap(), to);
        let mut cur = from;
        for &p in &route {
            assert!(map.clear_line(cur, p), "leg {cur:?} -> {p:?} crosses a wall");
            cur = p;
        }
    }
}
