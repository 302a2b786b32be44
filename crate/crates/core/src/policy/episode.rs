use super::expert::{expert_act, tracker_act, ExpertState};
use super::{ExpertProfile, PolicyError};
use crate::actions::{Action, AimAction, KeyAction, AIM_CHOICES};
use crate::formats::{
    log_file_name, trajectory_file_name, Dataset, EventRecord, Manifest, PlayerRecord, TickRecord, Trajectory,
    TrajectoryOutcome, MANIFEST_VERSION,
};
use crate::net::{InferenceNet, NetworkParams};
use crate::sensors::observe;
use crate::world::{MapGeometry, RoundOutcome, WorldState, MAX_ROUND_TICKS, TICK_RATE};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Independent 64-bit seed for sub-stream `stream` of `seed`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

/// Who drives one player slot.
#[derive(Clone, Debug)]
pub enum Agent {
    Expert { profile: ExpertProfile, state: Option<ExpertState> },
    /// Cloned policy sampling at `temperature`.
    Model { net: Box<InferenceNet<f32>>, rng: ChaCha8Rng, temperature: f64 },
    /// Uniform aim index and fair-coin keys.
    Random { rng: ChaCha8Rng },
    /// Deterministic nearest-enemy tracker.
    Tracker,
}

impl Agent {
    pub fn expert(profile: ExpertProfile) -> Self {
        Agent::Expert { profile, state: None }
    }

    pub fn model(params: &NetworkParams<f64>, temperature: f64, seed: u64) -> Self {
        Agent::Model {
            net: Box::new(InferenceNet::new(params.cast::<f32>())),
            rng: ChaCha8Rng::seed_from_u64(seed),
            temperature,
        }
    }

    pub fn random(seed: u64) -> Self {
        Agent::Random { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    fn needs_observation(&self) -> bool {
        matches!(self, Agent::Model { .. })
    }

    fn reset(&mut self, world: &WorldState, id: usize, round_seed: u64) {
        match self {
            Agent::Expert { profile, state } => *state = Some(ExpertState::new(world, id, profile, round_seed)),
            Agent::Model { net, .. } => net.reset(),
            Agent::Random { .. } | Agent::Tracker => {}
        }
    }

    fn act(&mut self, world: &WorldState, id: usize, observation: Option<&[f32]>) -> Result<Action, PolicyError> {
        Ok(match self {
            Agent::Expert { profile, state } => {
                let st = state.get_or_insert_with(|| ExpertState::new(world, id, profile, 0));
                expert_act(world, id, profile, st)
            }
            Agent::Model { net, rng, temperature } => {
                let obs = observation.ok_or(PolicyError::MissingObservation)?;
                let dist = net.step(obs).map_err(|e| PolicyError::ParamMismatch(e.to_string()))?;
                dist.sample(*temperature, rng)
            }
            Agent::Random { rng } => {
                let aim = AimAction::new(rng.gen_range(0..AIM_CHOICES)).expect("in range");
                Action::new(aim, KeyAction::from_bits(rng.gen::<u16>()))
            }
            Agent::Tracker => tracker_act(world, id),
        })
    }
}

/// Everything recorded from one round.
#[derive(Clone, Debug)]
pub struct RoundResult {
    pub round_id: u32,
    pub attacking_squad: usize,
    pub outcome: RoundOutcome,
    pub ticks: u32,
    pub log: Vec<TickRecord>,
    /// One per player when recording was requested.
    pub trajectories: Vec<Trajectory>,
}

fn v3(v: crate::world::Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn record_tick(world: &WorldState, round: u32, tick: u64, actions: &[Action; 4]) -> TickRecord {
    TickRecord {
        round,
        tick,
        attacking_squad: world.attacking_squad() as u8,
        players: world
            .players
            .iter()
            .zip(actions)
            .map(|(p, a)| PlayerRecord {
                id: p.id as u8,
                team: p.team,
                position: v3(p.position),
                yaw: p.yaw,
                pitch: p.pitch,
                health: p.health,
                alive: p.alive,
                aim: a.aim.index() as u8,
                keys: a.keys.bits(),
                stats: p.stats,
            })
            .collect(),
        events: world
            .events_this_tick
            .iter()
            .map(|e| EventRecord { kind: e.kind, position: v3(e.source_position), emitter: e.emitter_id.map(|i| i as u8) })
            .collect(),
        bomb_phase: world.bomb.phase,
        bomb_position: v3(world.bomb.position),
        outcome: None,
    }
}

/// Plays one round to completion. With `record` set, every player's
/// observation-action pair is stored for every tick of the round; dead
/// players contribute their (frozen) view and the idle action.
pub fn play_round(
    map: Arc<MapGeometry>,
    attacking_squad: usize,
    round_id: u32,
    seed: u64,
    agents: &mut [Agent; 4],
    record: bool,
) -> Result<RoundResult, PolicyError> {
    let mut world = WorldState::new(map, attacking_squad, seed);
    for (id, a) in agents.iter_mut().enumerate() {
        a.reset(&world, id, seed);
    }
    let mut trajectories: Vec<Trajectory> = if record {
        world.players.iter().map(|p| Trajectory::new(p.id as u8, p.team, round_id)).collect()
    } else {
        Vec::new()
    };
    let mut log = Vec::new();
    while !world.is_terminal() {
        assert!(world.tick < MAX_ROUND_TICKS as u64, "round exceeded the hard tick cap");
        let mut actions = [Action::IDLE; 4];
        for id in 0..4 {
            let need = record || (world.players[id].alive && agents[id].needs_observation());
            let obs = need.then(|| observe(&world, id).to_flat());
            if world.players[id].alive {
                actions[id] = agents[id].act(&world, id, obs.as_deref())?;
            }
            if let (true, Some(o)) = (record, obs) {
                trajectories[id].push(&o, actions[id]);
            }
        }
        let tick = world.tick;
        world.step(&actions).expect("round not terminal");
        log.push(record_tick(&world, round_id, tick, &actions));
    }
    let outcome = world.outcome();
    if let Some(last) = log.last_mut() {
        last.outcome = Some(outcome);
    }
    for t in trajectories.iter_mut() {
        let s = world.players[t.player_id as usize].stats;
        t.outcome = TrajectoryOutcome { kills: s.kills, deaths: s.deaths, assists: s.assists, result: outcome };
    }
    Ok(RoundResult { round_id, attacking_squad, outcome, ticks: world.tick as u32, log, trajectories })
}

/// Knobs for [`generate_dataset`].
/// Which scripted policy plays the recorded matches.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Demonstrator {
    /// The four expert profiles, one per slot.
    #[default]
    Roster,
    /// [`tracker_act`] on every slot.
    Tracker,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerateOptions {
    pub matches: u32,
    /// Rounds per match; squads swap sides every round.
    pub rounds_per_match: u32,
    pub seed: u64,
    pub map_name: String,
    pub demonstrator: Demonstrator,
}

impl GenerateOptions {
    pub fn new(matches: u32, seed: u64) -> Self {
        GenerateOptions { matches, rounds_per_match: 4, seed, map_name: "ascent_mini".into(), demonstrator: Demonstrator::Roster }
    }
}

/// Plays `matches` expert matches with `roster[i]` driving player `i` and
/// returns the recorded trajectories, logs and manifest. Matches run in
/// parallel; output order and content depend only on the inputs.
pub fn generate_dataset(
    map: Arc<MapGeometry>,
    roster: &[ExpertProfile; 4],
    opts: &GenerateOptions,
) -> Result<Dataset, PolicyError> {
    if opts.matches == 0 {
        return Err(PolicyError::NoMatches);
    }
    for p in roster {
        p.validate()?;
    }
    let per = opts.rounds_per_match.max(1);
    let matches: Vec<Vec<RoundResult>> = (0..opts.matches)
        .into_par_iter()
        .map(|m| {
            let mut agents = match opts.demonstrator {
                Demonstrator::Roster => roster.clone().map(Agent::expert),
                Demonstrator::Tracker => std::array::from_fn(|_| Agent::Tracker),
            };
            (0..per)
                .map(|k| {
                    let round = m * per + k;
                    let seed = derive_seed(opts.seed, round as u64);
                    play_round(map.clone(), (k % 2) as usize, round, seed, &mut agents, true)
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<_, _>>()?;

    let mut trajectories = Vec::new();
    let mut files = Vec::new();
    let mut logs = Vec::new();
    for (m, rounds) in matches.into_iter().enumerate() {
        let mut log = Vec::new();
        for r in rounds {
            log.extend(r.log);
            for t in r.trajectories {
                files.push((trajectory_file_name(t.round_id, t.player_id), t.len() as u64));
                trajectories.push(t);
            }
        }
        logs.push((log_file_name(m as u32), log));
    }
    let total = trajectories.iter().map(|t| t.len() as u64).sum();
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        map: opts.map_name.clone(),
        seed: opts.seed,
        matches: opts.matches,
        rounds_per_match: per,
        rounds: opts.matches * per,
        tick_rate: TICK_RATE,
        total_timesteps: total,
        demonstrator: opts.demonstrator,
        roster: roster.to_vec(),
        trajectories: files,
        match_logs: logs.iter().map(|(n, _)| n.clone()).collect(),
    };
    Ok(Dataset { manifest, trajectories, logs: logs.into_iter().map(|(_, l)| l).collect() })
}

fn rollout(
    map: Arc<MapGeometry>,
    rounds: u32,
    seed: u64,
    record: bool,
    make: impl Fn(usize, u64) -> Agent + Sync,
) -> Result<Vec<RoundResult>, PolicyError> {
    (0..rounds)
        .into_par_iter()
        .map(|r| {
            let round_seed = derive_seed(seed, r as u64);
            let mut agents: [Agent; 4] = std::array::from_fn(|id| make(id, derive_seed(round_seed, 100 + id as u64)));
            play_round(map.clone(), (r % 2) as usize, r, round_seed, &mut agents, record)
        })
        .collect()
}

/// The cloned policy drives all four players. Hidden state starts at zero
/// in every round; squads alternate sides.
pub fn model_rollout(
    params: &NetworkParams<f64>,
    map: Arc<MapGeometry>,
    rounds: u32,
    temperature: f64,
    seed: u64,
    record: bool,
) -> Result<Vec<RoundResult>, PolicyError> {
    if params.values.len() != params.layout.total {
        return Err(PolicyError::ParamMismatch(format!(
            "{} values, config needs {}",
            params.values.len(),
            params.layout.total
        )));
    }
    rollout(map, rounds, seed, record, |_, s| Agent::model(params, temperature, s))
}

/// Uniform-random baseline on all four slots.
pub fn random_rollout(map: Arc<MapGeometry>, rounds: u32, seed: u64) -> Result<Vec<RoundResult>, PolicyError> {
    rollout(map, rounds, seed, false, |_, s| Agent::random(s))
}

/// [`tracker_act`] on all four slots.
pub fn tracker_rollout(map: Arc<MapGeometry>, rounds: u32, seed: u64) -> Result<Vec<RoundResult>, PolicyError> {
    rollout(map, rounds, seed, false, |_, _| Agent::Tracker)
}

/// Expert-only rounds without observation recording (fast).
pub fn expert_rollout(
    map: Arc<MapGeometry>,
    roster: &[ExpertProfile; 4],
    rounds: u32,
    seed: u64,
) -> Result<Vec<RoundResult>, PolicyError> {
    rollout(map, rounds, seed, false, |id, _| Agent::expert(roster[id].clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::default_roster;
    use crate::world::ascent_mini;

    fn squad_team_matches(r: &RoundResult) -> bool {
        r.log.iter().all(|t| t.players.iter().all(|p| (crate::world::squad_of(p.id as usize) == r.attacking_squad) == (p.team == crate::world::Team::Attacker)))
    }

    #[test]
    fn derived_seeds_differ_per_stream() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_eq!(derive_seed(9, 4), derive_seed(9, 4));
    }

    #[test]
    fn recorded_round_is_consistent() {
        let map = Arc::new(ascent_mini());
        let mut agents = default_roster().map(Agent::expert);
        let r = play_round(map, 1, 0, 77, &mut agents, true).unwrap();
        assert_eq!(r.log.len() as u32, r.ticks);
        assert!(r.ticks <= MAX_ROUND_TICKS);
        assert_ne!(r.outcome, RoundOutcome::Ongoing);
        assert_eq!(r.log.last().unwrap().outcome, Some(r.outcome));
        for t in &r.trajectories {
            assert_eq!(t.len() as u32, r.ticks);
        }
        assert!(squad_team_matches(&r));
    }
}
