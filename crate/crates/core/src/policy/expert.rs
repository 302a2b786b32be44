use super::{AbilityPolicy, ExpertProfile};
use crate::actions::{angles_to_aim_index, Action, Key, KeyAction};
use crate::sensors::relative_bearing;
use crate::world::geometry::wrap_signed_degrees;
use crate::world::{
    raycast, BombPhase, HitObject, RayFilter, Team, Vec2, Vec3, WorldState, ABILITY_RANGE, BODY_RADIUS,
    DEFUSE_RADIUS, MAX_RAY_DISTANCE,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Lane waypoints an attacker may route through (north, mid, south).
const LANES: [usize; 3] = [7, 2, 10];
const ARRIVE_RADIUS: f64 = 0.7;
const REPATH_TICKS: u32 = 48;

/// Per-round memory of one expert.
#[derive(Clone, Debug)]
pub struct ExpertState {
    rng: ChaCha8Rng,
    /// Intermediate point attackers visit before heading to the site.
    via: Option<Vec2>,
    spot: Vec2,
    goal: Option<Vec2>,
    path: Vec<Vec2>,
    repath_in: u32,
    contact: Option<(usize, u32)>,
    last_seen: Option<(Vec3, u32)>,
    strafe_left: bool,
    strafe_ticks: u32,
    push: bool,
    last_pos: Vec2,
    stuck_ticks: u32,
    hold_ticks: u32,
    used_opening: bool,
}

impl ExpertState {
    /// Fresh state for player `id` at the start of a round.
    pub fn new(world: &WorldState, id: usize, profile: &ExpertProfile, round_seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(profile.seed ^ round_seed.rotate_left(17) ^ id as u64);
        let map = &world.map;
        let me = &world.players[id];
        let site = map.bombsite;
        let jitter = |rng: &mut ChaCha8Rng| Vec2::new(rng.gen_range(-2.5..2.5), rng.gen_range(-2.5..2.5));
        let (via, spot) = match me.team {
            Team::Attacker => {
                let lane = LANES[rng.gen_range(0..LANES.len())];
                let via = map.nav.points.get(lane).copied();
                let spot = site.clamp(site.center() + jitter(&mut rng), 1.0);
                (via, spot)
            }
            Team::Defender => (None, pick_hold(world, &mut rng)),
        };
        let spot = if map.clear_sweep(spot, spot, BODY_RADIUS + 0.1) { spot } else { site.center() };
        ExpertState {
            rng,
            via,
            spot,
            goal: None,
            path: Vec::new(),
            repath_in: 0,
            contact: None,
            last_seen: None,
            strafe_left: false,
            strafe_ticks: 0,
            push: true,
            last_pos: me.position.planar(),
            stuck_ticks: 0,
            hold_ticks: 0,
            used_opening: false,
        }
    }
}

/// Defender hold spots: a point in or around the site.
fn pick_hold(world: &WorldState, rng: &mut ChaCha8Rng) -> Vec2 {
    let site = world.map.bombsite;
    let candidates = [
        site.center(),
        Vec2::new(site.min.x + 2.0, site.min.y + 2.0),
        Vec2::new(site.max.x - 2.0, site.max.y - 2.0),
        Vec2::new(site.max.x - 1.5, site.min.y + 1.5),
        Vec2::new(site.min.x + 1.5, site.max.y - 2.0),
    ];
    candidates[rng.gen_range(0..candidates.len())]
}

fn aim_point(world: &WorldState, enemy: usize) -> Vec3 {
    let e = &world.players[enemy];
    e.position + Vec3::new(0.0, 0.0, e.eye_height() - 0.4)
}

/// Nearest enemy whose chest is the first thing a vision ray meets.
fn visible_enemy(world: &WorldState, id: usize) -> Option<usize> {
    let me = &world.players[id];
    if me.is_flashed() {
        return None;
    }
    let occ = world.occluders(Some(id));
    let eye = me.eye();
    let mut best: Option<(usize, f64)> = None;
    for e in world.enemies_of(id) {
        if !world.players[e].alive {
            continue;
        }
        let to = aim_point(world, e) - eye;
        let dist = to.norm();
        if dist > MAX_RAY_DISTANCE {
            continue;
        }
        let hit = raycast(&world.map, &occ, eye, to.normalized(), MAX_RAY_DISTANCE, RayFilter::VISION);
        if hit.object == Some(HitObject::Player(e)) && best.map_or(true, |(_, d)| dist < d) {
            best = Some((e, dist));
        }
    }
    best.map(|(e, _)| e)
}

fn gaussian(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        0.0
    } else {
        Normal::new(0.0, sigma).expect("finite sigma").sample(rng)
    }
}

/// Turns toward `(yaw_err, pitch_err)` through the discrete aim grid with
/// Gaussian error. Returns the action index and the residual error after
/// the turn.
fn snap_turn(rng: &mut ChaCha8Rng, sigma: f64, yaw_err: f64, pitch_err: f64) -> (crate::actions::AimAction, f64) {
    let aim = angles_to_aim_index(pitch_err + gaussian(rng, sigma), yaw_err + gaussian(rng, sigma));
    let (dp, dy) = aim.angles();
    (aim, (yaw_err - dy).hypot(pitch_err - dp))
}

fn planar_dist(a: Vec3, b: Vec2) -> f64 {
    a.planar().distance(b)
}

/// One decision of the scripted demonstrator for player `id`.
pub fn expert_act(world: &WorldState, id: usize, profile: &ExpertProfile, st: &mut ExpertState) -> Action {
    let me = &world.players[id];
    if !me.alive {
        return Action::IDLE;
    }
    let pos = me.position.planar();
    let mut keys = KeyAction::NONE;
    let sigma = profile.aim_noise_sigma;

    let seen = visible_enemy(world, id);
    st.contact = match (seen, st.contact) {
        (Some(e), Some((c, n))) if c == e => Some((e, n + 1)),
        (Some(e), _) => Some((e, 1)),
        (None, _) => None,
    };
    if let Some(e) = seen {
        st.last_seen = Some((aim_point(world, e), 48));
    } else if let Some((p, n)) = st.last_seen {
        st.last_seen = if n > 1 { Some((p, n - 1)) } else { None };
    }

    // plant or defuse in progress: keep holding unless shot at by a visible enemy
    let busy = me.flags.is_planting || me.flags.is_defusing;
    if busy && (seen.is_none() || me.flags.is_defusing) {
        let (aim, _) = snap_turn(&mut st.rng, sigma * 0.25, 0.0, -me.pitch);
        return Action::new(aim, keys.with(Key::Key4));
    }

    if let Some((enemy, ticks)) = st.contact {
        if ticks > profile.reaction_delay {
            return engage(world, id, profile, st, enemy);
        }
    }

    if me.magazine < 4 && me.reserve > 0 {
        keys.set(Key::R, true);
    }

    // objective
    let bomb = &world.bomb;
    let site = world.map.bombsite;
    let mut interact = false;
    let goal = match me.team {
        Team::Attacker => match bomb.phase {
            BombPhase::Carried if bomb.carrier == Some(id) => {
                if site.contains(pos) && site.contains(st.spot) && pos.distance(st.spot) < 1.5 {
                    interact = true;
                }
                st.spot
            }
            BombPhase::Dropped => {
                let mate = &world.players[world.teammate_of(id)];
                let mine = planar_dist(bomb.position, pos);
                if !mate.alive || mine <= planar_dist(bomb.position, mate.position.planar()) {
                    bomb.position.planar()
                } else {
                    st.spot
                }
            }
            BombPhase::Planted => {
                let b = bomb.position.planar();
                if pos.distance(b) < 5.0 {
                    pos
                } else {
                    b
                }
            }
            _ => st.spot,
        },
        Team::Defender => match bomb.phase {
            BombPhase::Planted => {
                let b = bomb.position.planar();
                if pos.distance(b) <= DEFUSE_RADIUS - 0.4 {
                    interact = true;
                }
                b
            }
            _ => {
                if pos.distance(st.spot) < ARRIVE_RADIUS {
                    st.hold_ticks += 1;
                    if st.hold_ticks > 80 && st.rng.gen::<f64>() > profile.camp_bias {
                        st.spot = pick_hold(world, &mut st.rng);
                    }
                    if st.hold_ticks > 80 {
                        st.hold_ticks = 0;
                    }
                }
                st.spot
            }
        },
    };

    // opening utility
    if profile.ability_policy == AbilityPolicy::Full && !st.used_opening {
        let near_site = planar_dist(site.center().with_z(0.0), pos) < 16.0 && !site.contains(pos);
        if me.team == Team::Attacker && near_site && me.main_cooldown == 0.0 {
            keys.set(Key::Q, true);
            st.used_opening = true;
        }
    }

    if interact {
        let (aim, _) = snap_turn(&mut st.rng, sigma * 0.25, 0.0, -me.pitch);
        return Action::new(aim, keys.with(Key::Key4));
    }

    // lane choice for attackers
    let mut target_goal = goal;
    if let Some(v) = st.via {
        if pos.distance(v) < 2.0 || me.team != Team::Attacker || bomb.phase != BombPhase::Carried {
            st.via = None;
        } else {
            target_goal = v;
        }
    }

    let goal_moved = st.goal.map_or(true, |g| g.distance(target_goal) > 1.0);
    if goal_moved || st.repath_in == 0 || st.path.is_empty() {
        st.path = world.map.route(pos, target_goal);
        st.goal = Some(target_goal);
        st.repath_in = REPATH_TICKS;
    }
    st.repath_in -= 1;
    while st.path.len() > 1 && pos.distance(st.path[0]) < ARRIVE_RADIUS {
        st.path.remove(0);
    }
    let next = st.path[0];
    let arrived = pos.distance(target_goal) < ARRIVE_RADIUS;

    let desired_yaw = if arrived {
        // hold: face where enemies come from, or their last sighting
        match st.last_seen {
            Some((p, _)) => (p.planar() - pos).heading(),
            None => {
                let threat = match me.team {
                    Team::Attacker => world.map.defender_spawn.planar(),
                    Team::Defender => world.map.attacker_spawn.planar(),
                };
                let route = world.map.route(pos, threat);
                (route[0] - pos).heading()
            }
        }
    } else {
        (next - pos).heading()
    };
    let yaw_err = wrap_signed_degrees(desired_yaw - me.yaw);
    let (aim, _) = snap_turn(&mut st.rng, sigma * 0.5, yaw_err, -me.pitch);
    if !arrived && yaw_err.abs() < 35.0 {
        keys.set(Key::W, true);
    }

    // unstick: strafe and hop when pushing forward without progress
    if keys.is_down(Key::W) && pos.distance(st.last_pos) < 0.05 {
        st.stuck_ticks += 1;
    } else {
        st.stuck_ticks = 0;
    }
    st.last_pos = pos;
    if st.stuck_ticks > 8 {
        keys.set(if st.rng.gen() { Key::A } else { Key::D }, true);
        keys.set(Key::Space, st.stuck_ticks % 16 == 9);
        st.repath_in = 0;
    } else if st.rng.gen::<f64>() < 0.003 {
        keys.set(Key::Space, true);
    }
    Action::new(aim, keys)
}

/// Minimal demonstrator: always faces the nearest living enemy exactly,
/// walls or not, and walks the nav route toward it with whichever of
/// W/A/S/D point along the route. Fires when that enemy is in sight and the
/// turn lands within 2 degrees, standing still while it does.
pub fn tracker_act(world: &WorldState, id: usize) -> Action {
    let me = &world.players[id];
    if !me.alive {
        return Action::IDLE;
    }
    let here = me.position.planar();
    let nearest = world
        .enemies_of(id)
        .into_iter()
        .filter(|&e| world.players[e].alive)
        .min_by(|&a, &b| {
            let da = world.players[a].position.planar().distance(here);
            let db = world.players[b].position.planar().distance(here);
            da.total_cmp(&db).then(a.cmp(&b))
        });
    let Some(enemy) = nearest else {
        return Action::IDLE;
    };
    let (yaw_err, pitch_err) = relative_bearing(me, aim_point(world, enemy));
    let aim = angles_to_aim_index(pitch_err, yaw_err);
    let (dp, dy) = aim.angles();
    let mut keys = KeyAction::NONE;
    if me.magazine == 0 {
        keys.set(Key::R, true);
    } else if (yaw_err - dy).hypot(pitch_err - dp) < 2.0 && visible_enemy(world, id) == Some(enemy) {
        return Action::new(aim, keys.with(Key::LeftClick));
    }
    let route = world.map.route(here, world.players[enemy].position.planar());
    // farthest route point reachable in a straight line
    let next = route
        .iter()
        .rev()
        .copied()
        .find(|&p| world.map.clear_sweep(here, p, BODY_RADIUS))
        .unwrap_or(route[0]);
    // relative heading of the route, positive to the right
    let rel = wrap_signed_degrees((next - here).heading() - me.yaw);
    // of the eight W/A/S/D directions, the one nearest the route with a clear step
    let mut dirs: Vec<f64> = (0..8).map(|k| k as f64 * 45.0 - 135.0).collect();
    dirs.sort_by(|a, b| wrap_signed_degrees(a - rel).abs().total_cmp(&wrap_signed_degrees(b - rel).abs()));
    let step_clear = |d: f64| {
        let h = (me.yaw + d).to_radians();
        world.map.clear_sweep(here, here + Vec2::new(h.sin(), h.cos()) * 0.6, BODY_RADIUS)
    };
    let d = dirs.iter().copied().find(|&d| step_clear(d)).unwrap_or(dirs[0]);
    keys.set(Key::W, d.abs() < 67.5);
    keys.set(Key::S, d.abs() > 112.5);
    keys.set(Key::D, d > 22.5 && d < 157.5);
    keys.set(Key::A, d < -22.5 && d > -157.5);
    Action::new(aim, keys)
}

fn engage(world: &WorldState, id: usize, profile: &ExpertProfile, st: &mut ExpertState, enemy: usize) -> Action {
    let me = &world.players[id];
    let mut keys = KeyAction::NONE;
    let target = aim_point(world, enemy);
    let (yaw_err, pitch_err) = relative_bearing(me, target);
    let (aim, residual) = snap_turn(&mut st.rng, profile.aim_noise_sigma, yaw_err, pitch_err);
    if me.magazine == 0 {
        keys.set(Key::R, true);
    } else if residual < 2.0 {
        keys.set(Key::LeftClick, true);
    }

    let dist = target.distance(me.eye());
    if profile.ability_policy != AbilityPolicy::Never && yaw_err.abs() < 10.0 {
        // fire/flash land at most ABILITY_RANGE ahead, so only throw at enemies beyond the blast
        if me.secondary_cooldown == 0.0 && dist < ABILITY_RANGE + 2.0 && dist > 7.0 {
            keys.set(Key::E, true);
        } else if me.main_cooldown == 0.0 && dist > 10.0 && st.rng.gen::<f64>() < 0.05 {
            keys.set(Key::Q, true);
        }
    }

    if st.strafe_ticks == 0 {
        st.push = st.rng.gen::<f64>() < profile.aggression;
        st.strafe_left = st.rng.gen();
        st.strafe_ticks = st.rng.gen_range(6..16);
    }
    st.strafe_ticks -= 1;
    if st.push && dist > 6.0 && yaw_err.abs() < 30.0 {
        keys.set(Key::W, true);
    } else if !st.push {
        keys.set(if st.strafe_left { Key::A } else { Key::D }, true);
    }
    Action::new(aim, keys)
}
