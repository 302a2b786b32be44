use super::geometry::{Vec2, Vec3};
use super::map::{MapGeometry, WALL_HEIGHT};

/// Range-finder reach in meters; rays report a miss beyond it.
pub const MAX_RAY_DISTANCE: f64 = 100.0;

/// What a ray struck.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HitObject {
    Wall,
    Floor,
    Ceiling,
    /// Floor inside the bombsite rectangle.
    Bombsite,
    Player(usize),
    Bomb,
    /// Index into `WorldState::effects`.
    Smoke(usize),
    Fire(usize),
    Grenade(usize),
}

impl HitObject {
    pub fn is_static_geometry(self) -> bool {
        matches!(self, HitObject::Wall | HitObject::Floor | HitObject::Ceiling)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    /// `None` for a miss.
    pub object: Option<HitObject>,
    /// Distance to the hit, or `max_dist` on a miss.
    pub distance: f64,
}

impl Hit {
    pub fn miss(max_dist: f64) -> Self {
        Hit { object: None, distance: max_dist }
    }
}

/// Upright finite cylinder used for every dynamic object.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cylinder {
    pub center: Vec2,
    pub base_z: f64,
    pub height: f64,
    pub radius: f64,
}

impl Cylinder {
    /// Smallest `t >= 0` at which `origin + t * dir` is inside the cylinder.
    pub fn intersect(&self, origin: Vec3, dir: Vec3) -> Option<f64> {
        let ox = origin.x - self.center.x;
        let oy = origin.y - self.center.y;
        let a = dir.x * dir.x + dir.y * dir.y;
        let c = ox * ox + oy * oy - self.radius * self.radius;
        // interval of t inside the infinite cylinder
        let (mut lo, mut hi) = if a == 0.0 {
            if c > 0.0 {
                return None;
            }
            (f64::NEG_INFINITY, f64::INFINITY)
        } else {
            let b = ox * dir.x + oy * dir.y;
            let disc = b * b - a * c;
            if disc < 0.0 {
                return None;
            }
            let s = disc.sqrt();
            // numerically stable roots
            let q = if b >= 0.0 { -(b + s) } else { -(b - s) };
            let (r1, r2) = if q == 0.0 { (0.0, 0.0) } else { (q / a, c / q) };
            (r1.min(r2), r1.max(r2))
        };
        let top = self.base_z + self.height;
        if dir.z == 0.0 {
            if origin.z < self.base_z || origin.z > top {
                return None;
            }
        } else {
            let t1 = (self.base_z - origin.z) / dir.z;
            let t2 = (top - origin.z) / dir.z;
            lo = lo.max(t1.min(t2));
            hi = hi.min(t1.max(t2));
        }
        if lo > hi || hi < 0.0 {
            return None;
        }
        Some(lo.max(0.0))
    }
}

/// A dynamic object that can stop a ray.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Occluder {
    pub object: HitObject,
    pub shape: Cylinder,
}

/// Which object classes a ray interacts with.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RayFilter {
    pub volumes: bool,
    pub bombsite: bool,
}

impl RayFilter {
    /// Vision: everything, smoke blocks.
    pub const VISION: RayFilter = RayFilter { volumes: true, bombsite: true };
    /// Bullets: walls, floor, ceiling and bodies only.
    pub const BULLET: RayFilter = RayFilter { volumes: false, bombsite: false };
}

fn is_volume(o: HitObject) -> bool {
    matches!(o, HitObject::Smoke(_) | HitObject::Fire(_) | HitObject::Grenade(_) | HitObject::Bomb)
}

/// Nearest intersection of a ray with the static map and the given occluders.
///
/// `dir` must be a unit vector. Walls span `z` in `[0, 3]`; the map bounds act
/// as an enclosing wall.
pub fn raycast(
    map: &MapGeometry,
    occluders: &[Occluder],
    origin: Vec3,
    dir: Vec3,
    max_dist: f64,
    filter: RayFilter,
) -> Hit {
    let mut best = Hit::miss(max_dist);
    let mut consider = |t: f64, object: HitObject| {
        if t <= max_dist && (best.object.is_none() || t < best.distance) {
            best = Hit { object: Some(object), distance: t };
        }
    };

    let o2 = origin.planar();
    let d2 = dir.planar();
    if d2.x != 0.0 || d2.y != 0.0 {
        for wall in map.walls.iter().chain(map.bounds.edges().iter()) {
            if let Some(t) = wall.ray_intersection(o2, d2) {
                let z = origin.z + t * dir.z;
                if (0.0..=WALL_HEIGHT).contains(&z) {
                    consider(t, HitObject::Wall);
                }
            }
        }
    }
    if dir.z < 0.0 {
        let t = -origin.z / dir.z;
        let p = o2 + d2 * t;
        let object = if filter.bombsite && map.bombsite.contains(p) {
            HitObject::Bombsite
        } else {
            HitObject::Floor
        };
        consider(t, object);
    } else if dir.z > 0.0 {
        consider((WALL_HEIGHT - origin.z) / dir.z, HitObject::Ceiling);
    }
    for occ in occluders {
        if !filter.volumes && is_volume(occ.object) {
            continue;
        }
        if let Some(t) = occ.shape.intersect(origin, dir) {
            consider(t, occ.object);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::map::load_map;

    fn open_field() -> MapGeometry {
        load_map(
            r#"
            name = "field"
            bounds = [-500.0, -500.0, 500.0, 500.0]
            attacker_spawn = [0.0, 0.0, 0.0]
            defender_spawn = [10.0, 0.0, 0.0]
            bombsite = [200.0, 200.0, 210.0, 210.0]
            waypoints = [[5.0, 0.0], [205.0, 205.0]]
            links = [[0, 1]]
            "#,
        )
        .unwrap()
    }

    #[test]
    fn perpendicular_wall() {
        let mut map = open_field();
        map.walls.push(crate::world::geometry::Segment::new(
            Vec2::new(-10.0, 50.0),
            Vec2::new(10.0, 50.0),
        ));
        let hit = raycast(
            &map,
            &[],
            Vec3::new(0.0, 0.0, 1.6),
            Vec3::from_angles(0.0, 0.0),
            MAX_RAY_DISTANCE,
            RayFilter::VISION,
        );
        assert_eq!(hit.object, Some(HitObject::Wall));
        assert!((hit.distance - 50.0).abs() < 1e-12);
    }

    #[test]
    fn open_field_level_ray_misses() {
        let map = open_field();
        let hit = raycast(
            &map,
            &[],
            Vec3::new(0.0, 0.0, 1.6),
            Vec3::from_angles(0.0, 0.0),
            MAX_RAY_DISTANCE,
            RayFilter::VISION,
        );
        assert_eq!(hit, Hit::miss(100.0));
    }

    #[test]
    fn downward_ray_hits_floor_analytically() {
        let map = open_field();
        let hit = raycast(
            &map,
            &[],
            Vec3::new(0.0, 0.0, 1.6),
            Vec3::from_angles(0.0, -45.0),
            MAX_RAY_DISTANCE,
            RayFilter::VISION,
        );
        assert_eq!(hit.object, Some(HitObject::Floor));
        let expected = 1.6 * 2f64.sqrt();
        assert!((hit.distance - expected).abs() / expected < 1e-12);
    }

    #[test]
    fn cylinder_side_top_and_inside() {
        let cyl = Cylinder { center: Vec2::new(0.0, 10.0), base_z: 0.0, height: 1.8, radius: 0.4 };
        let side = cyl.intersect(Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.0, 1.0, 0.0)).unwrap();
        assert!((side - 9.6).abs() < 1e-12);
        let down = cyl.intersect(Vec3::new(0.0, 10.0, 5.0), Vec3::new(0.0, 0.0, -1.0)).unwrap();
        assert!((down - 3.2).abs() < 1e-12);
        let over = cyl.intersect(Vec3::new(0.0, 0.0, 2.0), Vec3::new(0.0, 1.0, 0.0));
        assert!(over.is_none());
        let inside = cyl.intersect(Vec3::new(0.0, 10.0, 1.0), Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(inside, Some(0.0));
        let behind = cyl.intersect(Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.0, -1.0, 0.0));
        assert!(behind.is_none());
    }

    #[test]
    fn bullets_ignore_volumes() {
        let map = open_field();
        let smoke = Occluder {
            object: HitObject::Smoke(0),
            shape: Cylinder { center: Vec2::new(0.0, 20.0), base_z: 0.0, height: 3.0, radius: 4.0 },
        };
        let origin = Vec3::new(0.0, 0.0, 1.6);
        let dir = Vec3::from_angles(0.0, 0.0);
        let seen = raycast(&map, &[smoke], origin, dir, 100.0, RayFilter::VISION);
        assert_eq!(seen.object, Some(HitObject::Smoke(0)));
        assert!((seen.distance - 16.0).abs() < 1e-12);
        let shot = raycast(&map, &[smoke], origin, dir, 100.0, RayFilter::BULLET);
        assert!(shot.object.is_none());
    }
}
