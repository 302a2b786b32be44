//! On-disk formats: binary trajectories, line-delimited JSON match logs and
//! the dataset directory with its manifest.
//!
//! Trajectory file (little endian):
//!
//! ```text
//! magic "RBTJ" | version u32 | tick_rate u32
//! dims u16 x 7: grid rows, grid cols, layers, audio sectors, audio types, scalar, spatial
//! player u8 | team u8 | role u8 | result u8 | round u32
//! kills u32 | deaths u32 | assists u32 | frame_count u32
//! frame_count x (observation f32 x 2336 | aim u16 | keys u16)
//! ```

use crate::actions::{Action, AimAction, KeyAction};
use crate::net::Frame;
use crate::policy::{Demonstrator, ExpertProfile};
use crate::sensors::{
    AUDIO_SECTORS, AUDIO_TYPES, GRID, LAYERS, OBSERVATION_DIM, SCALAR_DIM, SPATIAL_DIM,
};
use crate::world::{BombPhase, RoundOutcome, RoundStats, SoundKind, Team, TICK_RATE};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{self, BufRead, Read, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const TRAJECTORY_MAGIC: &[u8; 4] = b"RBTJ";
pub const TRAJECTORY_VERSION: u32 = 1;
pub const SENSOR_DIMS: [u16; 7] = [
    GRID as u16,
    GRID as u16,
    LAYERS as u16,
    AUDIO_SECTORS as u16,
    AUDIO_TYPES as u16,
    SCALAR_DIM as u16,
    SPATIAL_DIM as u16,
];
pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("i/o on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("bad trajectory header: {0}")]
    Header(String),
    #[error("bad action in frame {frame}: {reason}")]
    Action { frame: usize, reason: String },
    #[error("match log line {line}: {source}")]
    Log { line: usize, source: serde_json::Error },
    #[error("manifest: {0}")]
    Manifest(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> FormatError + '_ {
    move |source| FormatError::Io { path: path.to_path_buf(), source }
}

/// Per-trajectory round summary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryOutcome {
    pub kills: u32,
    pub deaths: u32,
    pub assists: u32,
    pub result: RoundOutcome,
}

/// One player's view of one round: a 16 Hz sequence of flat observations
/// and the actions taken.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub player_id: u8,
    pub team: Team,
    pub round_id: u32,
    pub outcome: TrajectoryOutcome,
    /// `len() * OBSERVATION_DIM` values, frame-major.
    pub observations: Vec<f32>,
    pub actions: Vec<Action>,
}

impl Trajectory {
    pub fn new(player_id: u8, team: Team, round_id: u32) -> Self {
        Trajectory {
            player_id,
            team,
            round_id,
            outcome: TrajectoryOutcome { kills: 0, deaths: 0, assists: 0, result: RoundOutcome::Ongoing },
            observations: Vec::new(),
            actions: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn push(&mut self, observation: &[f32], action: Action) {
        assert_eq!(observation.len(), OBSERVATION_DIM);
        self.observations.extend_from_slice(observation);
        self.actions.push(action);
    }

    pub fn observation(&self, t: usize) -> &[f32] {
        &self.observations[t * OBSERVATION_DIM..(t + 1) * OBSERVATION_DIM]
    }

    pub fn frames(&self) -> Vec<Frame<'_>> {
        (0..self.len()).map(|t| Frame { observation: self.observation(t), target: self.actions[t] }).collect()
    }

    pub fn role(&self) -> crate::world::Role {
        crate::world::role_of(self.player_id as usize)
    }
}

fn team_code(t: Team) -> u8 {
    match t {
        Team::Attacker => 0,
        Team::Defender => 1,
    }
}

fn result_code(r: RoundOutcome) -> u8 {
    match r {
        RoundOutcome::Ongoing => 0,
        RoundOutcome::AttackersWin => 1,
        RoundOutcome::DefendersWin => 2,
    }
}

pub fn write_trajectory(w: &mut impl Write, t: &Trajectory) -> io::Result<()> {
    w.write_all(TRAJECTORY_MAGIC)?;
    w.write_all(&TRAJECTORY_VERSION.to_le_bytes())?;
    w.write_all(&TICK_RATE.to_le_bytes())?;
    for d in SENSOR_DIMS {
        w.write_all(&d.to_le_bytes())?;
    }
    let role = match t.role() {
        crate::world::Role::Controller => 0u8,
        crate::world::Role::Initiator => 1,
    };
    w.write_all(&[t.player_id, team_code(t.team), role, result_code(t.outcome.result)])?;
    w.write_all(&t.round_id.to_le_bytes())?;
    for v in [t.outcome.kills, t.outcome.deaths, t.outcome.assists, t.len() as u32] {
        w.write_all(&v.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(OBSERVATION_DIM * 4 + 4);
    for i in 0..t.len() {
        buf.clear();
        for v in t.observation(i) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let a = t.actions[i];
        buf.extend_from_slice(&(a.aim.index() as u16).to_le_bytes());
        buf.extend_from_slice(&a.keys.bits().to_le_bytes());
        w.write_all(&buf)?;
    }
    Ok(())
}

fn read_array<const N: usize>(r: &mut impl Read) -> io::Result<[u8; N]> {
    let mut b = [0; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

/// Reads one trajectory. I/O errors are reported against `path`.
pub fn read_trajectory(r: &mut impl Read, path: &Path) -> Result<Trajectory, FormatError> {
    let io = io_err(path);
    let magic: [u8; 4] = read_array(r).map_err(io_err(path))?;
    if &magic != TRAJECTORY_MAGIC {
        return Err(FormatError::Header("bad magic".into()));
    }
    let version = u32::from_le_bytes(read_array(r).map_err(io_err(path))?);
    if version != TRAJECTORY_VERSION {
        return Err(FormatError::Header(format!("unsupported version {version}")));
    }
    let rate = u32::from_le_bytes(read_array(r).map_err(io_err(path))?);
    if rate != TICK_RATE {
        return Err(FormatError::Header(format!("tick rate {rate}, expected {TICK_RATE}")));
    }
    let mut dims = [0u16; 7];
    for d in dims.iter_mut() {
        *d = u16::from_le_bytes(read_array(r).map_err(io_err(path))?);
    }
    if dims != SENSOR_DIMS {
        return Err(FormatError::Header(format!("sensor dims {dims:?}, expected {SENSOR_DIMS:?}")));
    }
    let [player_id, team, _role, result] = read_array(r).map_err(io_err(path))?;
    let team = match team {
        0 => Team::Attacker,
        1 => Team::Defender,
        t => return Err(FormatError::Header(format!("team code {t}"))),
    };
    let result = match result {
        0 => RoundOutcome::Ongoing,
        1 => RoundOutcome::AttackersWin,
        2 => RoundOutcome::DefendersWin,
        c => return Err(FormatError::Header(format!("result code {c}"))),
    };
    let mut u32s = [0u32; 5];
    for v in u32s.iter_mut() {
        *v = u32::from_le_bytes(read_array(r).map_err(io_err(path))?);
    }
    let [round_id, kills, deaths, assists, count] = u32s;
    let count = count as usize;
    let mut bytes = vec![0u8; count * (OBSERVATION_DIM * 4 + 4)];
    r.read_exact(&mut bytes).map_err(io)?;
    let mut observations = Vec::with_capacity(count * OBSERVATION_DIM);
    let mut actions = Vec::with_capacity(count);
    for (f, rec) in bytes.chunks_exact(OBSERVATION_DIM * 4 + 4).enumerate() {
        let (obs, act) = rec.split_at(OBSERVATION_DIM * 4);
        observations.extend(obs.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])));
        let aim = u16::from_le_bytes([act[0], act[1]]);
        let keys = u16::from_le_bytes([act[2], act[3]]);
        if keys >> 11 != 0 {
            return Err(FormatError::Action { frame: f, reason: format!("key bits {keys:#x} above bit 10") });
        }
        let aim = AimAction::new(aim as usize)
            .map_err(|e| FormatError::Action { frame: f, reason: e.to_string() })?;
        actions.push(Action::new(aim, KeyAction::from_bits(keys)));
    }
    Ok(Trajectory {
        player_id,
        team,
        round_id,
        outcome: TrajectoryOutcome { kills, deaths, assists, result },
        observations,
        actions,
    })
}

pub fn save_trajectory(path: &Path, t: &Trajectory) -> Result<(), FormatError> {
    let f = fs::File::create(path).map_err(io_err(path))?;
    let mut w = io::BufWriter::new(f);
    write_trajectory(&mut w, t).and_then(|_| w.flush()).map_err(io_err(path))
}

pub fn load_trajectory(path: &Path) -> Result<Trajectory, FormatError> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    read_trajectory(&mut io::BufReader::new(f), path)
}

/// One player in one match-log tick.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlayerRecord {
    pub id: u8,
    pub team: Team,
    pub position: [f64; 3],
    pub yaw: f64,
    pub pitch: f64,
    pub health: f64,
    pub alive: bool,
    pub aim: u8,
    pub keys: u16,
    /// Cumulative for the round, as of the end of this tick.
    pub stats: RoundStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventRecord {
    pub kind: SoundKind,
    pub position: [f64; 3],
    pub emitter: Option<u8>,
}

/// Snapshot after one simulation tick: the actions taken during it, the
/// resulting state and the events it produced. `outcome` is set on the last
/// tick of a round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TickRecord {
    pub round: u32,
    pub tick: u64,
    pub attacking_squad: u8,
    pub players: Vec<PlayerRecord>,
    pub events: Vec<EventRecord>,
    pub bomb_phase: BombPhase,
    pub bomb_position: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<RoundOutcome>,
}

pub fn write_match_log(w: &mut impl Write, ticks: &[TickRecord]) -> io::Result<()> {
    for t in ticks {
        serde_json::to_writer(&mut *w, t)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_match_log(r: impl BufRead) -> Result<Vec<TickRecord>, FormatError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|source| FormatError::Io { path: PathBuf::from("<log>"), source })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| FormatError::Log { line: i + 1, source })?);
    }
    Ok(out)
}

pub fn load_match_log(path: &Path) -> Result<Vec<TickRecord>, FormatError> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    read_match_log(io::BufReader::new(f))
}

pub fn save_match_log(path: &Path, ticks: &[TickRecord]) -> Result<(), FormatError> {
    let f = fs::File::create(path).map_err(io_err(path))?;
    let mut w = io::BufWriter::new(f);
    write_match_log(&mut w, ticks).and_then(|_| w.flush()).map_err(io_err(path))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub map: String,
    pub seed: u64,
    pub matches: u32,
    pub rounds_per_match: u32,
    pub rounds: u32,
    pub tick_rate: u32,
    pub total_timesteps: u64,
    #[serde(default)]
    pub demonstrator: Demonstrator,
    pub roster: Vec<ExpertProfile>,
    /// Trajectory files relative to the dataset directory, with frame counts.
    pub trajectories: Vec<(String, u64)>,
    pub match_logs: Vec<String>,
}

/// A set of trajectories plus the per-tick logs of the rounds they came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    pub trajectories: Vec<Trajectory>,
    pub logs: Vec<Vec<TickRecord>>,
}

impl Dataset {
    pub fn total_timesteps(&self) -> u64 {
        self.trajectories.iter().map(|t| t.len() as u64).sum()
    }

    /// Simulated player-time covered by the trajectories, in seconds.
    pub fn simulated_seconds(&self) -> f64 {
        self.total_timesteps() as f64 / TICK_RATE as f64
    }

    /// Every logged tick across all matches.
    pub fn all_ticks(&self) -> impl Iterator<Item = &TickRecord> {
        self.logs.iter().flatten()
    }
}

pub fn trajectory_file_name(round: u32, player: u8) -> String {
    format!("trajectories/round{round:05}_p{player}.traj")
}

pub fn log_file_name(m: u32) -> String {
    format!("logs/match{m:04}.jsonl")
}

/// Writes manifest, trajectories and logs under `dir`, creating it.
pub fn save_dataset(dir: &Path, ds: &Dataset) -> Result<(), FormatError> {
    for sub in ["trajectories", "logs"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(io_err(&p))?;
    }
    if ds.manifest.trajectories.len() != ds.trajectories.len() || ds.manifest.match_logs.len() != ds.logs.len() {
        return Err(FormatError::Manifest("manifest file lists do not match contents".into()));
    }
    for ((name, _), t) in ds.manifest.trajectories.iter().zip(&ds.trajectories) {
        save_trajectory(&dir.join(name), t)?;
    }
    for (name, log) in ds.manifest.match_logs.iter().zip(&ds.logs) {
        save_match_log(&dir.join(name), log)?;
    }
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&ds.manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(io_err(&path))
}

pub fn load_manifest(dir: &Path) -> Result<Manifest, FormatError> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| FormatError::Manifest(e.to_string()))?;
    if m.version != MANIFEST_VERSION {
        return Err(FormatError::Manifest(format!("unsupported version {}", m.version)));
    }
    Ok(m)
}

pub fn load_dataset(dir: &Path) -> Result<Dataset, FormatError> {
    let manifest = load_manifest(dir)?;
    let mut trajectories = Vec::with_capacity(manifest.trajectories.len());
    for (name, frames) in &manifest.trajectories {
        let t = load_trajectory(&dir.join(name))?;
        if t.len() as u64 != *frames {
            return Err(FormatError::Manifest(format!("{name}: {} frames, manifest says {frames}", t.len())));
        }
        trajectories.push(t);
    }
    let logs = manifest.match_logs.iter().map(|n| load_match_log(&dir.join(n))).collect::<Result<_, _>>()?;
    let ds = Dataset { manifest, trajectories, logs };
    if ds.total_timesteps() != ds.manifest.total_timesteps {
        return Err(FormatError::Manifest(format!(
            "total_timesteps {} but trajectories hold {}",
            ds.manifest.total_timesteps,
            ds.total_timesteps()
        )));
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actions::Key;

    fn sample() -> Trajectory {
        let mut t = Trajectory::new(3, Team::Defender, 12);
        t.outcome = TrajectoryOutcome { kills: 1, deaths: 0, assists: 2, result: RoundOutcome::DefendersWin };
        for i in 0..3 {
            let obs: Vec<f32> = (0..OBSERVATION_DIM).map(|j| (i * j) as f32 * 0.001 - 0.5).collect();
            t.push(&obs, Action::new(AimAction::new(i * 50).unwrap(), KeyAction::from_keys(&[Key::W, Key::LeftClick])));
        }
        t
    }

    #[test]
    fn trajectory_round_trip() {
        let t = sample();
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &t).unwrap();
        assert_eq!(buf.len(), 4 + 4 + 4 + 14 + 4 + 4 + 16 + 3 * (OBSERVATION_DIM * 4 + 4));
        let back = read_trajectory(&mut buf.as_slice(), Path::new("mem")).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn header_and_action_validation() {
        let t = sample();
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &t).unwrap();
        let mut bad = buf.clone();
        bad[12] = 16;
        assert!(matches!(read_trajectory(&mut bad.as_slice(), Path::new("m")), Err(FormatError::Header(_))));
        let mut bad = buf.clone();
        let aim_at = 50 + OBSERVATION_DIM * 4;
        bad[aim_at] = 200;
        assert!(matches!(
            read_trajectory(&mut bad.as_slice(), Path::new("m")),
            Err(FormatError::Action { frame: 0, .. })
        ));
        let mut bad = buf;
        bad[aim_at + 3] = 0x80;
        assert!(matches!(read_trajectory(&mut bad.as_slice(), Path::new("m")), Err(FormatError::Action { .. })));
    }

    #[test]
    fn match_log_lines_round_trip() {
        let rec = TickRecord {
            round: 0,
            tick: 5,
            attacking_squad: 1,
            players: vec![PlayerRecord {
                id: 0,
                team: Team::Defender,
                position: [1.0, 2.0, 0.0],
                yaw: 90.0,
                pitch: 0.0,
                health: 100.0,
                alive: true,
                aim: 82,
                keys: 1,
                stats: RoundStats::default(),
            }],
            events: vec![EventRecord { kind: SoundKind::Footstep, position: [1.0, 2.0, 0.0], emitter: Some(0) }],
            bomb_phase: BombPhase::Carried,
            bomb_position: [0.0; 3],
            outcome: Some(RoundOutcome::DefendersWin),
        };
        let mut buf = Vec::new();
        write_match_log(&mut buf, &[rec.clone(), rec.clone()]).unwrap();
        assert_eq!(buf.iter().filter(|&&b| b == b'\n').count(), 2);
        assert_eq!(read_match_log(buf.as_slice()).unwrap(), vec![rec.clone(), rec]);
        let err = read_match_log("{\"round\": 1}\n".as_bytes()).unwrap_err();
        assert!(matches!(err, FormatError::Log { line: 1, .. }));
    }
}
