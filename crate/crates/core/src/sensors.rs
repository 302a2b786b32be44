//! Observation construction: range-finder grid, directional audio, scalar
//! game state and spatial relations for one player.
//!
//! Every value is normalized. Visual distances map `[0, 100] m` to `[0, 1]`
//! with 1.0 meaning "nothing seen"; audio is inverted so that loud, nearby
//! sounds read high and silence reads 0.

use crate::actions::{nearest_angle_index, PITCH_SENSOR_ANGLES, YAW_ANGLES};
use crate::world::geometry::{wrap_degrees, wrap_signed_degrees, Vec2, Vec3};
use crate::world::raycast::{raycast, HitObject, RayFilter, MAX_RAY_DISTANCE};
use crate::world::sim::{
    BombPhase, EffectKind, PlayerState, Role, Team, WorldState, ABILITY_COOLDOWN,
    FIRE_HEIGHT, FUSE_SECONDS, MAGAZINE_SIZE, MAX_HEALTH, PROP_HEIGHT, RESERVE_MAX, ROUND_SECONDS,
};

pub const GRID: usize = 15;
pub const LAYERS: usize = 10;
pub const VISUAL_DIM: usize = GRID * GRID * LAYERS;
pub const AUDIO_SECTORS: usize = 8;
pub const AUDIO_TYPES: usize = 6;
pub const AUDIO_DIM: usize = AUDIO_SECTORS * AUDIO_TYPES;
pub const SCALAR_DIM: usize = 27;
pub const SPATIAL_DIM: usize = 11;
pub const OBSERVATION_DIM: usize = VISUAL_DIM + AUDIO_DIM + SCALAR_DIM + SPATIAL_DIM;
/// Sensor range in meters, used to normalize every distance.
pub const SENSOR_RANGE: f64 = 100.0;
/// Horizontal field of view for target-ray augmentation, degrees.
pub const FIELD_OF_VIEW: f64 = 90.0;

/// Visual feature layers, in tensor order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layer {
    Enemy = 0,
    Teammate = 1,
    EnemyGrenade = 2,
    TeamGrenade = 3,
    Smoke = 4,
    Fire = 5,
    DroppedBomb = 6,
    PlantedBomb = 7,
    Bombsite = 8,
    Geometry = 9,
}

fn normalized_distance(d: f64) -> f64 {
    (d / SENSOR_RANGE).clamp(0.0, 1.0)
}

/// `15 × 15 × 10` range-finder tensor, indexed `(pitch row, yaw col, layer)`.
#[derive(Clone, Debug, PartialEq)]
pub struct VisualTensor {
    values: Vec<f64>,
}

impl Default for VisualTensor {
    fn default() -> Self {
        VisualTensor { values: vec![1.0; VISUAL_DIM] }
    }
}

impl VisualTensor {
    pub fn get(&self, row: usize, col: usize, layer: usize) -> f64 {
        self.values[(row * GRID + col) * LAYERS + layer]
    }

    fn lower(&mut self, row: usize, col: usize, layer: Layer, value: f64) {
        let v = &mut self.values[(row * GRID + col) * LAYERS + layer as usize];
        *v = v.min(value);
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Visual layer of a hit object from `viewer`'s perspective.
pub fn layer_of(world: &WorldState, viewer: &PlayerState, object: HitObject) -> Layer {
    match object {
        HitObject::Player(q) if world.players[q].team == viewer.team => Layer::Teammate,
        HitObject::Player(_) => Layer::Enemy,
        HitObject::Bomb if world.bomb.phase == BombPhase::Planted => Layer::PlantedBomb,
        HitObject::Bomb => Layer::DroppedBomb,
        HitObject::Smoke(_) => Layer::Smoke,
        HitObject::Fire(_) => Layer::Fire,
        HitObject::Grenade(i) if world.effects[i].owner_team == viewer.team => Layer::TeamGrenade,
        HitObject::Grenade(_) => Layer::EnemyGrenade,
        HitObject::Bombsite => Layer::Bombsite,
        HitObject::Wall | HitObject::Floor | HitObject::Ceiling => Layer::Geometry,
    }
}

/// Objects that receive a direct augmentation ray when in view, with the
/// point the ray aims at.
pub fn augmentation_targets(world: &WorldState, viewer: &PlayerState) -> Vec<(HitObject, Vec3)> {
    let mut out = Vec::new();
    for p in &world.players {
        if p.alive && p.id != viewer.id {
            out.push((HitObject::Player(p.id), p.eye()));
        }
    }
    for (i, e) in world.effects.iter().enumerate() {
        match e.kind {
            EffectKind::Fire => out.push((HitObject::Fire(i), e.center.planar().with_z(0.5 * FIRE_HEIGHT))),
            EffectKind::Flash | EffectKind::AbilityBlock => {
                out.push((HitObject::Grenade(i), e.center.planar().with_z(0.5 * PROP_HEIGHT)))
            }
            EffectKind::Smoke => {}
        }
    }
    if matches!(world.bomb.phase, BombPhase::Dropped | BombPhase::Planted) {
        out.push((HitObject::Bomb, world.bomb.position.planar().with_z(0.5 * PROP_HEIGHT)));
    }
    out.push((HitObject::Bombsite, world.map.bombsite.center().with_z(0.0)));
    out
}

/// Yaw and pitch offsets of `target` relative to `viewer`'s facing.
pub fn relative_bearing(viewer: &PlayerState, target: Vec3) -> (f64, f64) {
    let (yaw, pitch) = (target - viewer.eye()).to_angles();
    (wrap_signed_degrees(yaw - viewer.yaw), pitch - viewer.pitch)
}

/// Grid cell whose ray angles are nearest to the given offsets.
pub fn nearest_cell(yaw_offset: f64, pitch_offset: f64) -> (usize, usize) {
    (
        nearest_angle_index(&PITCH_SENSOR_ANGLES, pitch_offset),
        nearest_angle_index(&YAW_ANGLES, yaw_offset),
    )
}

/// Range-finder tensor plus the number of rays cast.
pub fn sense_visual_counted(world: &WorldState, player_id: usize) -> (VisualTensor, usize) {
    let viewer = &world.players[player_id];
    let mut tensor = VisualTensor::default();
    if viewer.is_flashed() {
        return (tensor, 0);
    }
    let occluders = world.occluders(Some(player_id));
    let eye = viewer.eye();
    let mut rays = 0;
    for (row, &dp) in PITCH_SENSOR_ANGLES.iter().enumerate() {
        for (col, &dy) in YAW_ANGLES.iter().enumerate() {
            let dir = Vec3::from_angles(viewer.yaw + dy, viewer.pitch + dp);
            let hit = raycast(&world.map, &occluders, eye, dir, MAX_RAY_DISTANCE, RayFilter::VISION);
            rays += 1;
            if let Some(object) = hit.object {
                tensor.lower(row, col, layer_of(world, viewer, object), normalized_distance(hit.distance));
            }
        }
    }
    for (object, point) in augmentation_targets(world, viewer) {
        let (yaw_off, pitch_off) = relative_bearing(viewer, point);
        if yaw_off.abs() > 0.5 * FIELD_OF_VIEW {
            continue;
        }
        let dir = (point - eye).normalized();
        if dir == Vec3::ZERO {
            continue;
        }
        let hit = raycast(&world.map, &occluders, eye, dir, MAX_RAY_DISTANCE, RayFilter::VISION);
        rays += 1;
        if hit.object == Some(object) {
            let (row, col) = nearest_cell(yaw_off, pitch_off);
            tensor.lower(row, col, layer_of(world, viewer, object), normalized_distance(hit.distance));
        }
    }
    (tensor, rays)
}

pub fn sense_visual(world: &WorldState, player_id: usize) -> VisualTensor {
    sense_visual_counted(world, player_id).0
}

/// `8 sectors × 6 sound types`, sector 0 straight ahead, increasing clockwise.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AudioMatrix {
    pub values: [[f64; AUDIO_TYPES]; AUDIO_SECTORS],
}

/// Egocentric 45° sector of a planar bearing offset, centered on the facing.
pub fn audio_sector(relative_yaw: f64) -> usize {
    ((wrap_degrees(relative_yaw + 22.5) / 45.0) as usize) % AUDIO_SECTORS
}

pub fn sense_audio(world: &WorldState, player_id: usize) -> AudioMatrix {
    let listener = &world.players[player_id];
    let ear = listener.eye();
    let mut m = AudioMatrix::default();
    for e in &world.events_this_tick {
        if e.emitter_id == Some(player_id) {
            continue;
        }
        let d = ear.distance(e.source_position);
        if d > SENSOR_RANGE {
            continue;
        }
        let planar = e.source_position.planar() - ear.planar();
        let sector = if planar == Vec2::ZERO {
            0
        } else {
            audio_sector(planar.heading() - listener.yaw)
        };
        let cell = &mut m.values[sector][e.kind.index()];
        *cell = cell.max(1.0 - d / SENSOR_RANGE);
    }
    m
}

pub fn sense_scalar(world: &WorldState, player_id: usize) -> [f64; SCALAR_DIM] {
    let p = &world.players[player_id];
    let mate = &world.players[world.teammate_of(player_id)];
    let b = |v: bool| if v { 1.0 } else { 0.0 };
    let controller = p.role == Role::Controller;
    [
        b(p.team == Team::Attacker),
        b(p.flags.is_jumping),
        b(p.flags.is_falling),
        b(p.flags.is_shooting),
        b(p.flags.is_being_shot),
        b(p.flags.is_crouching),
        b(!controller), // main ability Zero
        b(controller),  // main ability SkySmoke
        b(controller),  // secondary Incendiary
        b(!controller), // secondary Flash
        p.main_cooldown / ABILITY_COOLDOWN,
        p.secondary_cooldown / ABILITY_COOLDOWN,
        p.health / MAX_HEALTH,
        (p.pitch + 180.0) / 360.0,
        p.yaw / 360.0,
        p.reserve as f64 / RESERVE_MAX as f64,
        p.magazine as f64 / MAGAZINE_SIZE as f64,
        b(p.flags.has_bomb),
        b(mate.alive && mate.flags.has_bomb),
        b(p.flags.is_dropping),
        b(p.flags.is_planting),
        b(p.flags.is_defusing),
        b(world.bomb.phase == BombPhase::Planted),
        p.plant_progress() / 4.0,
        p.defuse_progress() / 7.0,
        world.bomb.fuse_remaining() / FUSE_SECONDS,
        world.round_time_left() / ROUND_SECONDS,
    ]
}

fn relation(from: Vec2, to: Vec2) -> (f64, Vec2) {
    let d = to - from;
    (normalized_distance(d.norm()), d.normalized())
}

/// `[d_teammate, d_bombsite, d_bomb, dir_teammate (2), dir_bombsite (2),
/// dir_bomb (2), d_min_enemy, d_min_enemy_grenade]`.
pub fn sense_spatial(world: &WorldState, player_id: usize) -> [f64; SPATIAL_DIM] {
    let p = &world.players[player_id];
    let here = p.position.planar();
    let mate = &world.players[world.teammate_of(player_id)];
    let (d_mate, dir_mate) = if mate.alive { relation(here, mate.position.planar()) } else { (1.0, Vec2::ZERO) };
    let (d_site, dir_site) = relation(here, world.map.bombsite.center());
    let (d_bomb, dir_bomb) = if world.bomb.carrier == Some(player_id) {
        (0.0, Vec2::ZERO)
    } else {
        relation(here, world.bomb.position.planar())
    };
    let min_enemy = world
        .enemies_of(player_id)
        .iter()
        .map(|&q| &world.players[q])
        .filter(|q| q.alive)
        .map(|q| normalized_distance(q.position.planar().distance(here)))
        .fold(1.0, f64::min);
    let min_grenade = world
        .effects
        .iter()
        .filter(|e| e.owner_team != p.team)
        .map(|e| normalized_distance(e.center.planar().distance(here)))
        .fold(1.0, f64::min);
    [
        d_mate,
        d_site,
        d_bomb,
        dir_mate.x,
        dir_mate.y,
        dir_site.x,
        dir_site.y,
        dir_bomb.x,
        dir_bomb.y,
        min_enemy,
        min_grenade,
    ]
}

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub visual: VisualTensor,
    pub audio: AudioMatrix,
    pub scalar: [f64; SCALAR_DIM],
    pub spatial: [f64; SPATIAL_DIM],
}

impl Observation {
    /// Fixed-order flat layout: visual (row, col, layer), audio (sector,
    /// type), scalar, spatial.
    pub fn to_flat(&self) -> Vec<f32> {
        let mut out = Vec::with_capacity(OBSERVATION_DIM);
        out.extend(self.visual.as_slice().iter().map(|&v| v as f32));
        out.extend(self.audio.values.iter().flatten().map(|&v| v as f32));
        out.extend(self.scalar.iter().map(|&v| v as f32));
        out.extend(self.spatial.iter().map(|&v| v as f32));
        out
    }
}

pub fn observe(world: &WorldState, player_id: usize) -> Observation {
    Observation {
        visual: sense_visual(world, player_id),
        audio: sense_audio(world, player_id),
        scalar: sense_scalar(world, player_id),
        spatial: sense_spatial(world, player_id),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::map::load_map;
    use crate::world::sim::{GameEvent, SoundKind, EYE_HEIGHT};
    use std::sync::Arc;

    fn field() -> Arc<crate::world::MapGeometry> {
        Arc::new(
            load_map(
                r#"
                name = "field"
                bounds = [-500.0, -500.0, 500.0, 500.0]
                attacker_spawn = [0.0, 0.0, 0.0]
                defender_spawn = [10.0, 0.0, 0.0]
                bombsite = [-5.0, -310.0, 5.0, -300.0]
                waypoints = [[5.0, 0.0], [0.0, -305.0]]
                links = [[0, 1]]
                "#,
            )
            .unwrap(),
        )
    }

    /// Lone player 0 at the origin facing north; everyone else far away and dead.
    fn lone() -> WorldState {
        let mut w = WorldState::new(field(), 0, 0);
        for q in 1..4 {
            w.players[q].alive = false;
            w.players[q].position = Vec3::new(400.0, -400.0 + q as f64, 0.0);
        }
        w.players[0].position = Vec3::ZERO;
        w.players[0].yaw = 0.0;
        w.players[0].pitch = 0.0;
        w.bomb.position = Vec3::ZERO;
        w
    }

    #[test]
    fn open_field_sees_only_floor() {
        let w = lone();
        let (t, rays) = sense_visual_counted(&w, 0);
        assert_eq!(rays, GRID * GRID);
        for row in 0..GRID {
            for col in 0..GRID {
                for layer in 0..9 {
                    assert_eq!(t.get(row, col, layer), 1.0);
                }
            }
        }
        // rows pitched at -45°, -30°, -20°, -10° and -6° reach the floor within 100 m
        let expected = EYE_HEIGHT / 45f64.to_radians().sin() / SENSOR_RANGE;
        assert!((t.get(14, 7, Layer::Geometry as usize) - expected).abs() < 1e-12);
        assert!(t.get(10, 7, Layer::Geometry as usize) < 1.0);
        assert_eq!(t.get(7, 7, Layer::Geometry as usize), 1.0);
        // upward rows hit the ceiling
        assert!(t.get(0, 7, Layer::Geometry as usize) < 1.0);
    }

    #[test]
    fn enemy_dead_ahead_at_fifty_meters() {
        let mut w = lone();
        w.players[2].alive = true;
        // body surface at exactly 50 m
        w.players[2].position = Vec3::new(0.0, 50.0 + crate::world::sim::BODY_RADIUS, 0.0);
        let t = sense_visual(&w, 0);
        assert!((t.get(7, 7, Layer::Enemy as usize) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn target_ray_fills_gap_between_grid_rays() {
        let mut w = lone();
        w.players[2].alive = true;
        let yaw = 5f64.to_radians();
        let r = 30.0 + crate::world::sim::BODY_RADIUS;
        w.players[2].position = Vec3::new(r * yaw.sin(), r * yaw.cos(), 0.0);
        let (t, rays) = sense_visual_counted(&w, 0);
        assert_eq!(rays, GRID * GRID + 1);
        let (row, col) = nearest_cell(5.0, 0.0);
        assert_eq!((row, col), (7, 4));
        assert!((t.get(row, col, Layer::Enemy as usize) - 0.3).abs() < 1e-9);
    }

    #[test]
    fn flash_blinds() {
        let mut w = lone();
        w.players[0].flash_ticks = 5;
        let (t, rays) = sense_visual_counted(&w, 0);
        assert_eq!(rays, 0);
        assert!(t.as_slice().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn audio_examples() {
        let mut w = lone();
        assert_eq!(sense_audio(&w, 0), AudioMatrix::default());
        w.events_this_tick.push(GameEvent {
            kind: SoundKind::Shot,
            source_position: Vec3::new(0.0, 25.0, EYE_HEIGHT),
            emitter_id: Some(2),
            tick: 0,
        });
        w.events_this_tick.push(GameEvent {
            kind: SoundKind::Footstep,
            source_position: Vec3::ZERO,
            emitter_id: Some(0),
            tick: 0,
        });
        let m = sense_audio(&w, 0);
        assert!((m.values[0][SoundKind::Shot.index()] - 0.75).abs() < 1e-12);
        assert_eq!(m.values[0][SoundKind::Footstep.index()], 0.0);
        let total: f64 = m.values.iter().flatten().sum();
        assert!((total - 0.75).abs() < 1e-12);
    }

    #[test]
    fn audio_sectors_are_egocentric() {
        assert_eq!(audio_sector(0.0), 0);
        assert_eq!(audio_sector(22.4), 0);
        assert_eq!(audio_sector(22.5), 1);
        assert_eq!(audio_sector(90.0), 2);
        assert_eq!(audio_sector(180.0), 4);
        assert_eq!(audio_sector(-30.0), 7);
    }

    #[test]
    fn scalar_examples() {
        let mut w = WorldState::new(field(), 0, 0);
        let s = sense_scalar(&w, 0);
        assert_eq!(s[26], 1.0);
        assert_eq!(s[12], 1.0);
        assert_eq!((s[10], s[11]), (0.0, 0.0));
        assert!(s.iter().all(|v| (0.0..=1.0).contains(v)));
        w.players[0].magazine = 6;
        w.players[0].pitch = -90.0;
        let s = sense_scalar(&w, 0);
        assert_eq!(s[16], 0.5);
        assert_eq!(s[13], 0.25);
    }

    #[test]
    fn spatial_examples() {
        let mut w = lone();
        w.players[1].alive = true;
        w.players[1].position = Vec3::new(0.0, 50.0, 0.0);
        w.bomb.carrier = Some(0);
        let s = sense_spatial(&w, 0);
        assert_eq!(s[0], 0.5);
        assert_eq!((s[3], s[4]), (0.0, 1.0));
        assert_eq!(s[2], 0.0);
        assert_eq!((s[7], s[8]), (0.0, 0.0));
        assert_eq!(s[9], 1.0);
        assert_eq!(s[10], 1.0);
        w.players[1].alive = false;
        let s = sense_spatial(&w, 0);
        assert_eq!((s[0], s[3], s[4]), (1.0, 0.0, 0.0));
    }

    #[test]
    fn observation_is_finite_and_sized() {
        let w = WorldState::new(Arc::new(crate::world::ascent_mini()), 1, 9);
        for id in 0..4 {
            let o = observe(&w, id).to_flat();
            assert_eq!(o.len(), OBSERVATION_DIM);
            assert_eq!(OBSERVATION_DIM, 2336);
            assert!(o.iter().all(|v| v.is_finite()));
            assert!(o[..VISUAL_DIM + AUDIO_DIM].iter().all(|v| (0.0..=1.0).contains(v)));
            assert_eq!(observe(&w, id), observe(&w, id));
        }
    }
}
