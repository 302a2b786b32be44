use super::geometry::{wrap_degrees, Vec2, Vec3};
use super::map::MapGeometry;
use super::raycast::{raycast, Cylinder, HitObject, Occluder, RayFilter, MAX_RAY_DISTANCE};
use crate::actions::{Action, Key};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

pub const TICK_RATE: u32 = 16;
pub const DT: f64 = 1.0 / TICK_RATE as f64;
pub const ROUND_SECONDS: f64 = 120.0;
pub const ROUND_TICKS: u32 = 1920;
pub const FUSE_SECONDS: f64 = 45.0;
pub const FUSE_TICKS: u32 = 720;
/// Hard cap on round length: full clock plus a last-tick plant.
pub const MAX_ROUND_TICKS: u32 = ROUND_TICKS + FUSE_TICKS;
pub const PLANT_TICKS: u32 = 64;
pub const DEFUSE_TICKS: u32 = 112;
pub const BEEP_INTERVAL_TICKS: u32 = 16;

pub const RUN_SPEED: f64 = 6.0;
pub const CROUCH_SPEED: f64 = 2.5;
pub const JUMP_APEX: f64 = 0.9;
pub const JUMP_AIRTIME: f64 = 0.6;
pub const GRAVITY: f64 = 8.0 * JUMP_APEX / (JUMP_AIRTIME * JUMP_AIRTIME);
pub const JUMP_SPEED: f64 = 4.0 * JUMP_APEX / JUMP_AIRTIME;
pub const EYE_HEIGHT: f64 = 1.6;
pub const EYE_HEIGHT_CROUCHED: f64 = 1.0;
pub const BODY_RADIUS: f64 = 0.4;
pub const BODY_HEIGHT: f64 = 1.8;
pub const BODY_HEIGHT_CROUCHED: f64 = 1.2;

pub const MAX_HEALTH: f64 = 100.0;
pub const MAGAZINE_SIZE: u32 = 12;
pub const RESERVE_MAX: u32 = 48;
pub const SHOT_DAMAGE: f64 = 30.0;
/// Minimum ticks between shots: 16 Hz / 3 = 5.33 shots per second.
pub const FIRE_INTERVAL_TICKS: u64 = 3;

pub const ABILITY_COOLDOWN: f64 = 60.0;
pub const ABILITY_RANGE: f64 = 15.0;
pub const DEFUSE_RADIUS: f64 = 1.5;
pub const PICKUP_RADIUS: f64 = 1.0;
pub const PICKUP_BLOCK_TICKS: u32 = 32;

pub const SMOKE_RADIUS: f64 = 4.0;
pub const SMOKE_TICKS: u32 = 160;
pub const BLOCK_RADIUS: f64 = 4.0;
pub const BLOCK_TICKS: u32 = 96;
pub const FIRE_RADIUS: f64 = 3.0;
pub const FIRE_TICKS: u32 = 96;
pub const FIRE_HEIGHT: f64 = 0.5;
pub const FIRE_DPS: f64 = 10.0;
pub const FLASH_RADIUS: f64 = 5.0;
pub const FLASH_TICKS: u32 = 32;
/// Radius and height of small props: dropped/planted bomb, grenade bodies.
pub const PROP_RADIUS: f64 = 0.3;
pub const PROP_HEIGHT: f64 = 0.3;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("cannot step a finished round")]
    Terminal,
    #[error("player {0} does not exist")]
    NoSuchPlayer(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Team {
    Attacker,
    Defender,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// SkySmoke (Q) and Incendiary (E).
    Controller,
    /// Zero (Q) and Flash (E).
    Initiator,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlayerFlags {
    pub is_jumping: bool,
    pub is_falling: bool,
    pub is_crouching: bool,
    pub is_shooting: bool,
    pub is_being_shot: bool,
    pub has_bomb: bool,
    pub is_planting: bool,
    pub is_defusing: bool,
    pub is_dropping: bool,
}

/// Per-round tallies kept by the simulator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RoundStats {
    pub kills: u32,
    pub deaths: u32,
    pub assists: u32,
    pub shots: u32,
    pub hits: u32,
    pub damage_dealt: f64,
    pub ability_uses: u32,
    pub plant_attempts: u32,
    pub plant_successes: u32,
    pub defuse_attempts: u32,
    pub defuse_successes: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlayerState {
    pub id: usize,
    pub team: Team,
    pub role: Role,
    pub position: Vec3,
    /// Degrees in `[0, 360)`, clockwise from north.
    pub yaw: f64,
    /// Degrees in `[-90, 90]`, positive up.
    pub pitch: f64,
    pub health: f64,
    pub magazine: u32,
    pub reserve: u32,
    pub main_cooldown: f64,
    pub secondary_cooldown: f64,
    pub flags: PlayerFlags,
    pub plant_ticks: u32,
    pub defuse_ticks: u32,
    pub alive: bool,
    pub vertical_speed: f64,
    pub flash_ticks: u32,
    pub next_fire_tick: u64,
    pub pickup_block_ticks: u32,
    pub stats: RoundStats,
}

impl PlayerState {
    pub fn plant_progress(&self) -> f64 {
        self.plant_ticks as f64 * DT
    }

    pub fn defuse_progress(&self) -> f64 {
        self.defuse_ticks as f64 * DT
    }

    pub fn grounded(&self) -> bool {
        self.position.z <= 0.0 && self.vertical_speed == 0.0
    }

    pub fn eye_height(&self) -> f64 {
        if self.flags.is_crouching {
            EYE_HEIGHT_CROUCHED
        } else {
            EYE_HEIGHT
        }
    }

    pub fn eye(&self) -> Vec3 {
        self.position + Vec3::new(0.0, 0.0, self.eye_height())
    }

    pub fn facing(&self) -> Vec3 {
        Vec3::from_angles(self.yaw, self.pitch)
    }

    pub fn body(&self) -> Cylinder {
        Cylinder {
            center: self.position.planar(),
            base_z: self.position.z,
            height: if self.flags.is_crouching { BODY_HEIGHT_CROUCHED } else { BODY_HEIGHT },
            radius: BODY_RADIUS,
        }
    }

    pub fn is_flashed(&self) -> bool {
        self.flash_ticks > 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BombPhase {
    Carried,
    Dropped,
    Planted,
    Defused,
    Exploded,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BombState {
    pub phase: BombPhase,
    pub position: Vec3,
    pub carrier: Option<usize>,
    pub fuse_ticks: u32,
}

impl BombState {
    pub fn fuse_remaining(&self) -> f64 {
        self.fuse_ticks as f64 * DT
    }

    pub fn shape(&self) -> Cylinder {
        Cylinder {
            center: self.position.planar(),
            base_z: 0.0,
            height: PROP_HEIGHT,
            radius: PROP_RADIUS,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SoundKind {
    Footstep,
    Jump,
    Shot,
    BombBeep,
    GrenadeExplosion,
    BombDrop,
}

impl SoundKind {
    pub const ALL: [SoundKind; 6] = [
        SoundKind::Footstep,
        SoundKind::Jump,
        SoundKind::Shot,
        SoundKind::BombBeep,
        SoundKind::GrenadeExplosion,
        SoundKind::BombDrop,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameEvent {
    pub kind: SoundKind,
    pub source_position: Vec3,
    pub emitter_id: Option<usize>,
    pub tick: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectKind {
    Smoke,
    Fire,
    Flash,
    AbilityBlock,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AreaEffect {
    pub kind: EffectKind,
    pub center: Vec3,
    pub radius: f64,
    pub remaining_ticks: u32,
    pub owner: usize,
    pub owner_team: Team,
}

impl AreaEffect {
    pub fn remaining(&self) -> f64 {
        self.remaining_ticks as f64 * DT
    }

    /// The ray-visible body of the effect.
    pub fn shape(&self) -> Cylinder {
        let (height, radius) = match self.kind {
            EffectKind::Smoke => (super::map::WALL_HEIGHT, self.radius),
            EffectKind::Fire => (FIRE_HEIGHT, self.radius),
            EffectKind::Flash | EffectKind::AbilityBlock => (PROP_HEIGHT, PROP_RADIUS),
        };
        Cylinder { center: self.center.planar(), base_z: 0.0, height, radius }
    }

    pub fn covers(&self, p: Vec3) -> bool {
        self.center.planar().distance(p.planar()) <= self.radius
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundOutcome {
    AttackersWin,
    DefendersWin,
    Ongoing,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct PendingShot {
    shooter: usize,
    origin: Vec3,
    dir: Vec3,
}

/// Full simulator state for one round.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldState {
    pub map: Arc<MapGeometry>,
    pub players: [PlayerState; 4],
    pub bomb: BombState,
    pub effects: Vec<AreaEffect>,
    pub tick: u64,
    pub round_ticks_left: u32,
    pub events_this_tick: Vec<GameEvent>,
    pub rng_seed: u64,
    /// `damage_taken[victim][attacker]` this round.
    pub damage_taken: [[f64; 4]; 4],
    pending_shots: Vec<PendingShot>,
}

/// Players 0 and 1 form squad 0, players 2 and 3 squad 1. Within a squad the
/// lower id is the controller.
pub fn squad_of(player_id: usize) -> usize {
    player_id / 2
}

pub fn role_of(player_id: usize) -> Role {
    if player_id % 2 == 0 {
        Role::Controller
    } else {
        Role::Initiator
    }
}

impl WorldState {
    /// Starts a round. `attacking_squad` (0 or 1) takes the attacker side;
    /// its controller starts with the bomb. The seed jitters spawn spots.
    pub fn new(map: Arc<MapGeometry>, attacking_squad: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let site = map.bombsite.center();
        let players = std::array::from_fn(|id| {
            let team = if squad_of(id) == attacking_squad { Team::Attacker } else { Team::Defender };
            let spawn = match team {
                Team::Attacker => map.attacker_spawn,
                Team::Defender => map.defender_spawn,
            };
            let side = if id % 2 == 0 { -1.0 } else { 1.0 };
            let mut pos = spawn.planar()
                + Vec2::new(rng.gen_range(-0.5..0.5), side * 1.5 + rng.gen_range(-0.5..0.5));
            if !map.clear_sweep(spawn.planar(), pos, BODY_RADIUS) || !map.bounds.contains(pos) {
                pos = spawn.planar();
            }
            let yaw = (site - pos).heading();
            PlayerState {
                id,
                team,
                role: role_of(id),
                position: pos.with_z(0.0),
                yaw,
                pitch: 0.0,
                health: MAX_HEALTH,
                magazine: MAGAZINE_SIZE,
                reserve: RESERVE_MAX,
                main_cooldown: 0.0,
                secondary_cooldown: 0.0,
                flags: PlayerFlags::default(),
                plant_ticks: 0,
                defuse_ticks: 0,
                alive: true,
                vertical_speed: 0.0,
                flash_ticks: 0,
                next_fire_tick: 0,
                pickup_block_ticks: 0,
                stats: RoundStats::default(),
            }
        });
        let carrier = attacking_squad * 2;
        let mut world = WorldState {
            map,
            players,
            bomb: BombState {
                phase: BombPhase::Carried,
                position: Vec3::ZERO,
                carrier: Some(carrier),
                fuse_ticks: FUSE_TICKS,
            },
            effects: Vec::new(),
            tick: 0,
            round_ticks_left: ROUND_TICKS,
            events_this_tick: Vec::new(),
            rng_seed: seed,
            damage_taken: [[0.0; 4]; 4],
            pending_shots: Vec::new(),
        };
        world.players[carrier].flags.has_bomb = true;
        world.bomb.position = world.players[carrier].position;
        world
    }

    pub fn round_time_left(&self) -> f64 {
        self.round_ticks_left as f64 * DT
    }

    pub fn is_terminal(&self) -> bool {
        self.outcome() != RoundOutcome::Ongoing
    }

    pub fn outcome(&self) -> RoundOutcome {
        check_round_end(self)
    }

    pub fn attacking_squad(&self) -> usize {
        if self.players[0].team == Team::Attacker {
            0
        } else {
            1
        }
    }

    pub fn teammate_of(&self, id: usize) -> usize {
        id ^ 1
    }

    pub fn enemies_of(&self, id: usize) -> [usize; 2] {
        let s = 2 * (1 - squad_of(id));
        [s, s + 1]
    }

    /// Every ray-stopping dynamic object, skipping `exclude` (the viewer).
    pub fn occluders(&self, exclude: Option<usize>) -> Vec<Occluder> {
        let mut out = Vec::with_capacity(8);
        for p in &self.players {
            if p.alive && Some(p.id) != exclude {
                out.push(Occluder { object: HitObject::Player(p.id), shape: p.body() });
            }
        }
        if matches!(self.bomb.phase, BombPhase::Dropped | BombPhase::Planted) {
            out.push(Occluder { object: HitObject::Bomb, shape: self.bomb.shape() });
        }
        for (i, e) in self.effects.iter().enumerate() {
            let object = match e.kind {
                EffectKind::Smoke => HitObject::Smoke(i),
                EffectKind::Fire => HitObject::Fire(i),
                EffectKind::Flash | EffectKind::AbilityBlock => HitObject::Grenade(i),
            };
            out.push(Occluder { object, shape: e.shape() });
        }
        out
    }

    fn emit(&mut self, kind: SoundKind, source_position: Vec3, emitter_id: Option<usize>) {
        self.events_this_tick.push(GameEvent { kind, source_position, emitter_id, tick: self.tick });
    }

    fn ability_blocked(&self, id: usize) -> bool {
        let p = &self.players[id];
        self.effects.iter().any(|e| {
            e.kind == EffectKind::AbilityBlock && e.owner_team != p.team && e.covers(p.position)
        })
    }

    /// Ground point where a thrown ability lands: straight ahead, capped by
    /// range and the first wall.
    fn ability_target(&self, id: usize) -> Vec3 {
        let p = &self.players[id];
        let dir = Vec3::from_angles(p.yaw, 0.0);
        let hit = raycast(&self.map, &[], p.eye(), dir, ABILITY_RANGE, RayFilter::BULLET);
        let reach = if hit.object.is_some() { (hit.distance - 0.5).max(0.0) } else { ABILITY_RANGE };
        (p.position.planar() + dir.planar() * reach).with_z(0.0)
    }

    fn use_ability(&mut self, id: usize, main: bool) {
        let (role, team) = (self.players[id].role, self.players[id].team);
        let target = self.ability_target(id);
        let (kind, radius, ticks) = match (role, main) {
            (Role::Controller, true) => (EffectKind::Smoke, SMOKE_RADIUS, SMOKE_TICKS),
            (Role::Initiator, true) => (EffectKind::AbilityBlock, BLOCK_RADIUS, BLOCK_TICKS),
            (Role::Controller, false) => (EffectKind::Fire, FIRE_RADIUS, FIRE_TICKS),
            (Role::Initiator, false) => (EffectKind::Flash, FLASH_RADIUS, FLASH_TICKS),
        };
        self.effects.push(AreaEffect {
            kind,
            center: target,
            radius,
            remaining_ticks: ticks,
            owner: id,
            owner_team: team,
        });
        if matches!(kind, EffectKind::Fire | EffectKind::Flash) {
            self.emit(SoundKind::GrenadeExplosion, target, Some(id));
        }
        if kind == EffectKind::Flash {
            let center = target.planar();
            for q in 0..4 {
                let victim = &self.players[q];
                if victim.alive
                    && victim.position.planar().distance(center) <= FLASH_RADIUS
                    && self.map.clear_line(center, victim.position.planar())
                {
                    self.players[q].flash_ticks = FLASH_TICKS;
                }
            }
        }
        let p = &mut self.players[id];
        if main {
            p.main_cooldown = ABILITY_COOLDOWN;
        } else {
            p.secondary_cooldown = ABILITY_COOLDOWN;
        }
        p.stats.ability_uses += 1;
    }

    fn drop_bomb(&mut self, id: usize, emitter: Option<usize>) {
        let pos = self.players[id].position.planar().with_z(0.0);
        let p = &mut self.players[id];
        p.flags.has_bomb = false;
        p.pickup_block_ticks = PICKUP_BLOCK_TICKS;
        self.bomb.phase = BombPhase::Dropped;
        self.bomb.carrier = None;
        self.bomb.position = pos;
        self.emit(SoundKind::BombDrop, pos, emitter);
    }

    /// Applies one player's action for this tick: rotation, abilities,
    /// reload, bomb keys, movement, jump and trigger. Shots are resolved by
    /// [`WorldState::step`]. Dead players ignore actions.
    pub fn apply_action(&mut self, id: usize, action: &Action) {
        if !self.players[id].alive {
            return;
        }
        let keys = action.keys;
        let (pitch_delta, yaw_delta) = action.aim.angles();
        {
            let p = &mut self.players[id];
            p.yaw = wrap_degrees(p.yaw + yaw_delta);
            p.pitch = (p.pitch + pitch_delta).clamp(-90.0, 90.0);
        }

        let blocked = self.ability_blocked(id);
        if keys.is_down(Key::Q) && self.players[id].main_cooldown == 0.0 && !blocked {
            self.use_ability(id, true);
        }
        if keys.is_down(Key::E) && self.players[id].secondary_cooldown == 0.0 && !blocked {
            self.use_ability(id, false);
        }

        if keys.is_down(Key::R) {
            let p = &mut self.players[id];
            let moved = (MAGAZINE_SIZE - p.magazine).min(p.reserve);
            p.magazine += moved;
            p.reserve -= moved;
        }

        if keys.is_down(Key::G) && self.players[id].flags.has_bomb {
            self.players[id].flags.is_dropping = true;
            self.drop_bomb(id, Some(id));
        }

        let anchored = self.advance_bomb_interaction(id, keys.is_down(Key::Key4));

        if !anchored {
            let p = &self.players[id];
            let fwd = Vec2::new(p.yaw.to_radians().sin(), p.yaw.to_radians().cos());
            let right = Vec2::new(fwd.y, -fwd.x);
            let mut dir = Vec2::ZERO;
            if keys.is_down(Key::W) {
                dir = dir + fwd;
            }
            if keys.is_down(Key::S) {
                dir = dir - fwd;
            }
            if keys.is_down(Key::D) {
                dir = dir + right;
            }
            if keys.is_down(Key::A) {
                dir = dir - right;
            }
            let crouched = p.flags.is_crouching;
            let speed = if crouched { CROUCH_SPEED } else { RUN_SPEED };
            let dir = dir.normalized();
            if dir != Vec2::ZERO {
                let from = p.position.planar();
                let to = self.slide(from, dir * (speed * DT));
                if to != from {
                    let grounded = p.grounded();
                    let z = p.position.z;
                    self.players[id].position = to.with_z(z);
                    if grounded && !crouched {
                        self.emit(SoundKind::Footstep, to.with_z(z), Some(id));
                    }
                }
            }
            if keys.is_down(Key::Space) && self.players[id].grounded() {
                let p = &mut self.players[id];
                p.vertical_speed = JUMP_SPEED;
                p.flags.is_jumping = true;
                let pos = p.position;
                self.emit(SoundKind::Jump, pos, Some(id));
            }
        }

        if keys.is_down(Key::LeftClick) {
            let tick = self.tick;
            let p = &mut self.players[id];
            if p.magazine > 0 && tick >= p.next_fire_tick {
                p.magazine -= 1;
                p.next_fire_tick = tick + FIRE_INTERVAL_TICKS;
                p.flags.is_shooting = true;
                p.stats.shots += 1;
                let (origin, dir) = (p.eye(), p.facing());
                self.pending_shots.push(PendingShot { shooter: id, origin, dir });
                self.emit(SoundKind::Shot, origin, Some(id));
            }
        }
    }

    /// Plant/defuse progress for a held (or released) 4 key. Returns whether
    /// the player is rooted in place by the interaction.
    fn advance_bomb_interaction(&mut self, id: usize, held: bool) -> bool {
        let map_site = self.map.bombsite;
        let p = &self.players[id];
        let planting_ok = held
            && p.team == Team::Attacker
            && p.flags.has_bomb
            && p.grounded()
            && map_site.contains(p.position.planar());
        let defusing_ok = held
            && p.team == Team::Defender
            && self.bomb.phase == BombPhase::Planted
            && p.grounded()
            && p.position.planar().distance(self.bomb.position.planar()) <= DEFUSE_RADIUS;
        let was_planting = p.flags.is_planting;
        let was_defusing = p.flags.is_defusing;

        let p = &mut self.players[id];
        p.flags.is_planting = planting_ok;
        p.flags.is_defusing = defusing_ok;
        p.flags.is_crouching = planting_ok || defusing_ok;
        if planting_ok {
            if !was_planting {
                p.stats.plant_attempts += 1;
            }
            p.plant_ticks += 1;
        } else {
            p.plant_ticks = 0;
        }
        if defusing_ok {
            if !was_defusing {
                p.stats.defuse_attempts += 1;
            }
            p.defuse_ticks += 1;
        } else {
            p.defuse_ticks = 0;
        }

        if p.plant_ticks >= PLANT_TICKS {
            p.plant_ticks = 0;
            p.flags.has_bomb = false;
            p.flags.is_planting = false;
            p.flags.is_crouching = false;
            p.stats.plant_successes += 1;
            let pos = p.position.planar().with_z(0.0);
            self.bomb = BombState {
                phase: BombPhase::Planted,
                position: pos,
                carrier: None,
                fuse_ticks: FUSE_TICKS,
            };
        } else if p.defuse_ticks >= DEFUSE_TICKS {
            p.defuse_ticks = 0;
            p.flags.is_defusing = false;
            p.flags.is_crouching = false;
            p.stats.defuse_successes += 1;
            self.bomb.phase = BombPhase::Defused;
        }
        planting_ok || defusing_ok
    }

    /// Moves a body by `delta`, sliding along walls axis by axis.
    fn slide(&self, from: Vec2, delta: Vec2) -> Vec2 {
        let bounds = self.map.bounds;
        let candidates = [delta, Vec2::new(delta.x, 0.0), Vec2::new(0.0, delta.y)];
        for d in candidates {
            if d == Vec2::ZERO {
                continue;
            }
            let to = bounds.clamp(from + d, BODY_RADIUS);
            if self.map.clear_sweep(from, to, BODY_RADIUS) {
                return to;
            }
        }
        from
    }

    fn kill(&mut self, victim: usize, killer: Option<usize>) {
        let p = &mut self.players[victim];
        p.alive = false;
        p.health = 0.0;
        p.stats.deaths += 1;
        p.plant_ticks = 0;
        p.defuse_ticks = 0;
        let had_bomb = p.flags.has_bomb;
        p.flags = PlayerFlags { is_being_shot: p.flags.is_being_shot, ..PlayerFlags::default() };
        if had_bomb {
            self.drop_bomb(victim, None);
        }
        if let Some(k) = killer {
            self.players[k].stats.kills += 1;
        }
        let team = self.players[victim].team;
        for a in 0..4 {
            if Some(a) != killer && self.players[a].team != team && self.damage_taken[victim][a] > 0.0 {
                self.players[a].stats.assists += 1;
            }
        }
    }

    fn resolve_shots(&mut self) {
        let shots = std::mem::take(&mut self.pending_shots);
        let bodies = self.occluders(None);
        let mut hits: Vec<(usize, usize)> = Vec::new();
        for shot in &shots {
            let targets: Vec<Occluder> = bodies
                .iter()
                .copied()
                .filter(|o| matches!(o.object, HitObject::Player(q) if q != shot.shooter))
                .collect();
            let hit = raycast(&self.map, &targets, shot.origin, shot.dir, MAX_RAY_DISTANCE, RayFilter::BULLET);
            if let Some(HitObject::Player(victim)) = hit.object {
                if self.players[victim].team != self.players[shot.shooter].team {
                    hits.push((shot.shooter, victim));
                }
            }
        }
        // all hits land before anyone dies, so mutual kills are possible
        let mut lethal: [Option<usize>; 4] = [None; 4];
        for &(shooter, victim) in &hits {
            let v = &mut self.players[victim];
            let dealt = SHOT_DAMAGE.min(v.health);
            v.health -= dealt;
            v.flags.is_being_shot = true;
            self.damage_taken[victim][shooter] += dealt;
            let s = &mut self.players[shooter].stats;
            s.hits += 1;
            s.damage_dealt += dealt;
            if self.players[victim].health <= 0.0 && lethal[victim].is_none() {
                lethal[victim] = Some(shooter);
            }
        }
        for victim in 0..4 {
            if let Some(killer) = lethal[victim] {
                if self.players[victim].alive {
                    self.kill(victim, Some(killer));
                }
            }
        }
    }

    fn apply_fire(&mut self) {
        let fires: Vec<AreaEffect> =
            self.effects.iter().copied().filter(|e| e.kind == EffectKind::Fire).collect();
        for fire in fires {
            for q in 0..4 {
                let p = &self.players[q];
                if !p.alive || !fire.covers(p.position) || p.position.z > FIRE_HEIGHT {
                    continue;
                }
                let dealt = (FIRE_DPS * DT).min(p.health);
                self.players[q].health -= dealt;
                let owner = fire.owner;
                let enemy = self.players[owner].team != self.players[q].team;
                if enemy {
                    self.damage_taken[q][owner] += dealt;
                    self.players[owner].stats.damage_dealt += dealt;
                }
                if self.players[q].health <= 0.0 {
                    self.kill(q, enemy.then_some(owner));
                }
            }
        }
    }

    fn integrate_vertical(&mut self) {
        for p in self.players.iter_mut().filter(|p| p.alive) {
            if p.position.z <= 0.0 && p.vertical_speed == 0.0 {
                p.flags.is_jumping = false;
                p.flags.is_falling = false;
                continue;
            }
            p.position.z += p.vertical_speed * DT - 0.5 * GRAVITY * DT * DT;
            p.vertical_speed -= GRAVITY * DT;
            if p.position.z <= 0.0 {
                p.position.z = 0.0;
                p.vertical_speed = 0.0;
                p.flags.is_jumping = false;
                p.flags.is_falling = false;
            } else {
                p.flags.is_jumping = p.vertical_speed > 0.0;
                p.flags.is_falling = p.vertical_speed <= 0.0;
            }
        }
    }

    fn advance_bomb(&mut self) {
        match self.bomb.phase {
            BombPhase::Carried => {
                if let Some(c) = self.bomb.carrier {
                    self.bomb.position = self.players[c].position;
                }
            }
            BombPhase::Dropped => {
                let at = self.bomb.position.planar();
                let picker = (0..4).find(|&q| {
                    let p = &self.players[q];
                    p.alive
                        && p.team == Team::Attacker
                        && p.pickup_block_ticks == 0
                        && p.position.planar().distance(at) <= PICKUP_RADIUS
                });
                if let Some(q) = picker {
                    self.players[q].flags.has_bomb = true;
                    self.bomb.phase = BombPhase::Carried;
                    self.bomb.carrier = Some(q);
                    self.bomb.position = self.players[q].position;
                }
            }
            BombPhase::Planted => {
                if (FUSE_TICKS - self.bomb.fuse_ticks) % BEEP_INTERVAL_TICKS == 0 {
                    let pos = self.bomb.position;
                    self.emit(SoundKind::BombBeep, pos, None);
                }
                self.bomb.fuse_ticks -= 1;
                if self.bomb.fuse_ticks == 0 {
                    self.bomb.phase = BombPhase::Exploded;
                }
            }
            BombPhase::Defused | BombPhase::Exploded => {}
        }
    }

    fn tick_timers(&mut self) {
        for p in self.players.iter_mut() {
            p.main_cooldown = (p.main_cooldown - DT).max(0.0);
            p.secondary_cooldown = (p.secondary_cooldown - DT).max(0.0);
            p.flash_ticks = p.flash_ticks.saturating_sub(1);
            p.pickup_block_ticks = p.pickup_block_ticks.saturating_sub(1);
        }
        for e in self.effects.iter_mut() {
            e.remaining_ticks -= 1;
        }
        self.effects.retain(|e| e.remaining_ticks > 0);
    }

    /// Advances the round by one 1/16 s tick. Returns the events emitted
    /// during the tick (also kept in `events_this_tick`).
    pub fn step(&mut self, actions: &[Action; 4]) -> Result<&[GameEvent], SimError> {
        if self.is_terminal() {
            return Err(SimError::Terminal);
        }
        self.events_this_tick.clear();
        for p in self.players.iter_mut() {
            p.flags.is_shooting = false;
            p.flags.is_being_shot = false;
            p.flags.is_dropping = false;
        }
        for (id, action) in actions.iter().enumerate() {
            self.apply_action(id, action);
        }
        self.integrate_vertical();
        self.resolve_shots();
        self.apply_fire();
        self.advance_bomb();
        self.tick_timers();
        self.round_ticks_left = self.round_ticks_left.saturating_sub(1);
        self.tick += 1;
        Ok(&self.events_this_tick)
    }
}

/// Round result under the bomb rules. Elimination of the defenders wins for
/// the attackers even after a plant; eliminating the attackers only wins for
/// the defenders while the bomb is not planted.
pub fn check_round_end(world: &WorldState) -> RoundOutcome {
    match world.bomb.phase {
        BombPhase::Exploded => return RoundOutcome::AttackersWin,
        BombPhase::Defused => return RoundOutcome::DefendersWin,
        _ => {}
    }
    let alive = |team| world.players.iter().any(|p| p.team == team && p.alive);
    if !alive(Team::Defender) {
        return RoundOutcome::AttackersWin;
    }
    let planted = world.bomb.phase == BombPhase::Planted;
    if !planted && (!alive(Team::Attacker) || world.round_ticks_left == 0) {
        return RoundOutcome::DefendersWin;
    }
    RoundOutcome::Ongoing
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actions::{angles_to_aim_index, KeyAction};
    use crate::world::map::{ascent_mini, load_map};

    fn room() -> Arc<MapGeometry> {
        Arc::new(
            load_map(
                r#"
                name = "room"
                bounds = [0.0, 0.0, 40.0, 40.0]
                attacker_spawn = [5.0, 20.0, 0.0]
                defender_spawn = [35.0, 20.0, 0.0]
                bombsite = [15.0, 15.0, 25.0, 25.0]
                waypoints = [[10.0, 20.0], [30.0, 20.0]]
                links = [[0, 1]]
                "#,
            )
            .unwrap(),
        )
    }

    const IDLE: [Action; 4] = [Action::IDLE; 4];

    #[test]
    fn idle_tick_only_moves_clock() {
        let mut w = WorldState::new(room(), 0, 1);
        let before = w.players.clone();
        w.step(&IDLE).unwrap();
        assert_eq!(w.players, before);
        assert_eq!(w.round_time_left(), ROUND_SECONDS - DT);
        assert!(w.events_this_tick.is_empty());
    }

    #[test]
    fn plant_takes_64_ticks() {
        let mut w = WorldState::new(room(), 0, 1);
        w.players[0].position = Vec3::new(20.0, 20.0, 0.0);
        let mut acts = IDLE;
        acts[0] = Action::keys(&[Key::Key4]);
        for t in 0..64 {
            assert_eq!(w.bomb.phase, BombPhase::Carried, "tick {t}");
            w.step(&acts).unwrap();
        }
        assert_eq!(w.bomb.phase, BombPhase::Planted);
        assert_eq!(w.bomb.fuse_ticks, FUSE_TICKS - 1);
        assert!(!w.players[0].flags.has_bomb);
        assert_eq!(w.players[0].stats.plant_successes, 1);
        assert_eq!(w.players[0].stats.plant_attempts, 1);
        // first beep on the planting tick
        assert!(w.events_this_tick.iter().any(|e| e.kind == SoundKind::BombBeep));
    }

    #[test]
    fn released_plant_resets_progress() {
        let mut w = WorldState::new(room(), 0, 1);
        w.players[0].position = Vec3::new(20.0, 20.0, 0.0);
        let mut acts = IDLE;
        acts[0] = Action::keys(&[Key::Key4]);
        for _ in 0..63 {
            w.step(&acts).unwrap();
        }
        assert_eq!(w.players[0].plant_progress(), 63.0 / 16.0);
        w.step(&IDLE).unwrap();
        assert_eq!(w.players[0].plant_ticks, 0);
        assert_eq!(w.bomb.phase, BombPhase::Carried);
    }

    #[test]
    fn plant_outside_site_does_nothing() {
        let mut w = WorldState::new(room(), 0, 1);
        let mut acts = IDLE;
        acts[0] = Action::keys(&[Key::Key4]);
        for _ in 0..80 {
            w.step(&acts).unwrap();
        }
        assert_eq!(w.bomb.phase, BombPhase::Carried);
        assert_eq!(w.players[0].stats.plant_attempts, 0);
    }

    #[test]
    fn defuse_takes_112_ticks() {
        let mut w = WorldState::new(room(), 0, 1);
        w.players[0].flags.has_bomb = false;
        w.bomb = BombState {
            phase: BombPhase::Planted,
            position: Vec3::new(20.0, 20.0, 0.0),
            carrier: None,
            fuse_ticks: FUSE_TICKS,
        };
        w.players[2].position = Vec3::new(21.0, 20.0, 0.0);
        let mut acts = IDLE;
        acts[2] = Action::keys(&[Key::Key4]);
        for _ in 0..111 {
            w.step(&acts).unwrap();
        }
        assert_eq!(w.bomb.phase, BombPhase::Planted);
        w.step(&acts).unwrap();
        assert_eq!(w.bomb.phase, BombPhase::Defused);
        assert_eq!(check_round_end(&w), RoundOutcome::DefendersWin);
        assert_eq!(w.step(&acts), Err(SimError::Terminal));
    }

    #[test]
    fn empty_magazine_does_not_fire() {
        let mut w = WorldState::new(room(), 0, 1);
        w.players[0].magazine = 0;
        let mut acts = IDLE;
        acts[0] = Action::keys(&[Key::LeftClick]);
        w.step(&acts).unwrap();
        assert!(w.events_this_tick.is_empty());
        assert_eq!(w.players[0].stats.shots, 0);
    }

    fn face(w: &mut WorldState, from: usize, to: usize) {
        let d = w.players[to].position - w.players[from].position;
        w.players[from].yaw = d.planar().heading();
        w.players[from].pitch = 0.0;
    }

    #[test]
    fn shots_damage_and_mutual_kills() {
        let mut w = WorldState::new(room(), 0, 1);
        w.players[0].position = Vec3::new(10.0, 20.0, 0.0);
        w.players[2].position = Vec3::new(20.0, 20.0, 0.0);
        w.players[1].position = Vec3::new(5.0, 35.0, 0.0);
        w.players[3].position = Vec3::new(35.0, 35.0, 0.0);
        face(&mut w, 0, 2);
        face(&mut w, 2, 0);
        w.players[0].health = 30.0;
        w.players[2].health = 30.0;
        let mut acts = IDLE;
        acts[0] = Action::keys(&[Key::LeftClick]);
        acts[2] = Action::keys(&[Key::LeftClick]);
        w.step(&acts).unwrap();
        assert!(!w.players[0].alive && !w.players[2].alive);
        assert_eq!(w.players[0].stats.kills, 1);
        assert_eq!(w.players[2].stats.kills, 1);
        // the carrier died: bomb on the floor
        assert_eq!(w.bomb.phase, BombPhase::Dropped);
        let shots = w.events_this_tick.iter().filter(|e| e.kind == SoundKind::Shot).count();
        assert_eq!(shots, 2);
    }

    #[test]
    fn fire_rate_is_capped() {
        let mut w = WorldState::new(room(), 0, 1);
        w.players[0].yaw = 270.0;
        let mut acts = IDLE;
        acts[0] = Action::keys(&[Key::LeftClick]);
        for _ in 0..16 {
            w.step(&acts).unwrap();
        }
        let shots = w.players[0].stats.shots;
        assert!(shots <= 6 && shots >= 5, "{shots}");
        assert_eq!(w.players[0].magazine, MAGAZINE_SIZE - shots);
        acts[0] = Action::keys(&[Key::R]);
        w.step(&acts).unwrap();
        assert_eq!(w.players[0].magazine, MAGAZINE_SIZE);
        assert_eq!(w.players[0].reserve, RESERVE_MAX - shots);
    }

    #[test]
    fn rotation_wraps_and_clamps() {
        let mut w = WorldState::new(room(), 0, 1);
        w.players[0].yaw = 350.0;
        let mut acts = IDLE;
        acts[0] = Action::new(angles_to_aim_index(0.0, 20.0), KeyAction::NONE);
        w.step(&acts).unwrap();
        assert!((w.players[0].yaw - 10.0).abs() < 1e-9);
        acts[0] = Action::new(angles_to_aim_index(20.0, 0.0), KeyAction::NONE);
        for _ in 0..10 {
            w.step(&acts).unwrap();
        }
        assert_eq!(w.players[0].pitch, 90.0);
    }

    #[test]
    fn movement_and_jump() {
        let mut w = WorldState::new(room(), 0, 1);
        let start = w.players[0].position;
        w.players[0].yaw = 90.0;
        let mut acts = IDLE;
        acts[0] = Action::keys(&[Key::W]);
        w.step(&acts).unwrap();
        let moved = w.players[0].position - start;
        assert!((moved.x - RUN_SPEED * DT).abs() < 1e-12 && moved.y.abs() < 1e-12);
        assert_eq!(w.events_this_tick[0].kind, SoundKind::Footstep);
        acts[0] = Action::keys(&[Key::Space]);
        w.step(&acts).unwrap();
        assert!(w.players[0].flags.is_jumping);
        let mut peak: f64 = 0.0;
        let mut air = 0;
        for _ in 0..20 {
            w.step(&IDLE).unwrap();
            peak = peak.max(w.players[0].position.z);
            if w.players[0].position.z > 0.0 {
                air += 1;
            }
        }
        assert!(peak > 0.8 && peak <= JUMP_APEX + 1e-9, "{peak}");
        assert!((8..=10).contains(&air), "{air}");
        assert!(w.players[0].grounded());
    }

    #[test]
    fn walls_block_movement() {
        let map = Arc::new(ascent_mini());
        let mut w = WorldState::new(map, 0, 3);
        w.players[0].position = Vec3::new(20.0, 25.0, 0.0);
        w.players[0].yaw = 0.0;
        let mut acts = IDLE;
        acts[0] = Action::keys(&[Key::W]);
        for _ in 0..40 {
            w.step(&acts).unwrap();
        }
        assert!(w.players[0].position.y < 26.0 - BODY_RADIUS + 1e-9);
    }

    #[test]
    fn round_end_rules() {
        let mut w = WorldState::new(room(), 0, 1);
        assert_eq!(check_round_end(&w), RoundOutcome::Ongoing);
        w.round_ticks_left = 0;
        assert_eq!(check_round_end(&w), RoundOutcome::DefendersWin);
        w.bomb.phase = BombPhase::Planted;
        assert_eq!(check_round_end(&w), RoundOutcome::Ongoing);
        w.bomb.phase = BombPhase::Exploded;
        assert_eq!(check_round_end(&w), RoundOutcome::AttackersWin);
    }

    #[test]
    fn abilities_spawn_effects_and_cool_down() {
        let mut w = WorldState::new(room(), 0, 1);
        w.players[0].yaw = 90.0;
        let mut acts = IDLE;
        acts[0] = Action::keys(&[Key::Q, Key::E]);
        w.step(&acts).unwrap();
        assert_eq!(w.effects.len(), 2);
        assert_eq!(w.players[0].main_cooldown, ABILITY_COOLDOWN - DT);
        assert_eq!(w.players[0].stats.ability_uses, 2);
        w.step(&acts).unwrap();
        assert_eq!(w.players[0].stats.ability_uses, 2);
        for _ in 0..SMOKE_TICKS {
            w.step(&IDLE).unwrap();
        }
        assert!(w.effects.is_empty());
    }
}
