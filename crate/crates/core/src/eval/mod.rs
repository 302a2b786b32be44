//! Behavioral features from match logs, histogram divergences, position
//! heatmaps with their distance measures, and the inference benchmark.

mod bench;
mod heatmap;
mod transport;

pub use bench::{bench_inference, machine_descriptor, BenchReport};
pub use heatmap::{
    asd, build_heatmap, default_cell_size, emd_1d_no_location, emd_2d, heatmap_distances, ramp, render_heatmap,
    Heatmap, HeatmapDistances, DEFAULT_GRID, RAMP_STOPS,
};
pub use transport::{transport_cost, TransportError};

use crate::formats::TickRecord;
use crate::world::{Team, DT, TICK_RATE};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{0}: no samples")]
    Empty(&'static str),
    #[error("histograms have different bucket edges")]
    EdgeMismatch,
    #[error("heatmap shapes differ: {0}x{1} vs {2}x{3}")]
    ShapeMismatch(usize, usize, usize, usize),
    #[error("heatmap mass is {0}, expected 1")]
    Unnormalized(f64),
    #[error("malformed match log: {0}")]
    MalformedLog(String),
    #[error("bucket width must be positive and finite")]
    BucketWidth,
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("image: {0}")]
    Image(#[from] image::ImageError),
}

/// Per player-round tallies. Duration counts alive ticks; speed is planar
/// metres per second averaged over ticks where the player was alive both
/// before and after moving.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BehaviorFeatures {
    pub round: u32,
    pub player: u8,
    pub side: Team,
    pub duration: u32,
    pub mean_speed: f64,
    pub shots: u32,
    pub shots_per_kill: f64,
    pub kills: u32,
    pub plant_attempts: u32,
    pub plant_successes: u32,
    pub defuse_attempts: u32,
    pub defuse_successes: u32,
    pub ability_uses: u32,
}

#[derive(Default)]
struct Tally {
    side: Option<Team>,
    alive_ticks: u32,
    distance: f64,
    moves: u32,
    last: Option<([f64; 3], bool)>,
    stats: crate::world::RoundStats,
}

/// One record per (round, player), ordered by round then player. Counts come
/// from the cumulative per-round stats the simulator logs each tick.
pub fn extract_features(ticks: &[TickRecord]) -> Result<Vec<BehaviorFeatures>, EvalError> {
    let mut tallies: BTreeMap<(u32, u8), Tally> = BTreeMap::new();
    let mut last_tick: BTreeMap<u32, u64> = BTreeMap::new();
    for t in ticks {
        if let Some(&prev) = last_tick.get(&t.round) {
            if t.tick <= prev {
                return Err(EvalError::MalformedLog(format!("round {} tick {} after {}", t.round, t.tick, prev)));
            }
        }
        last_tick.insert(t.round, t.tick);
        for p in &t.players {
            let e = tallies.entry((t.round, p.id)).or_default();
            match e.side {
                None => e.side = Some(p.team),
                Some(side) if side != p.team => {
                    return Err(EvalError::MalformedLog(format!("player {} changed side in round {}", p.id, t.round)));
                }
                _ => {}
            }
            if p.alive {
                e.alive_ticks += 1;
                if let Some((prev, true)) = e.last {
                    e.distance += (p.position[0] - prev[0]).hypot(p.position[1] - prev[1]);
                    e.moves += 1;
                }
            }
            e.last = Some((p.position, p.alive));
            e.stats = p.stats;
        }
    }
    tallies
        .into_iter()
        .map(|((round, player), t)| {
            let s = t.stats;
            if s.plant_successes > s.plant_attempts || s.defuse_successes > s.defuse_attempts {
                return Err(EvalError::MalformedLog(format!("round {round} player {player}: more successes than attempts")));
            }
            Ok(BehaviorFeatures {
                round,
                player,
                side: t.side.expect("entry created from a record"),
                duration: t.alive_ticks,
                mean_speed: if t.moves == 0 { 0.0 } else { t.distance / (t.moves as f64 * DT) },
                shots: s.shots,
                shots_per_kill: s.shots as f64 / s.kills.max(1) as f64,
                kills: s.kills,
                plant_attempts: s.plant_attempts,
                plant_successes: s.plant_successes,
                defuse_attempts: s.defuse_attempts,
                defuse_successes: s.defuse_successes,
                ability_uses: s.ability_uses,
            })
        })
        .collect()
}

/// Equal-width buckets aligned to multiples of `width`: a value `x` falls in
/// `[k*width, (k+1)*width)` with `k = floor(x / width)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BucketSpec {
    pub width: f64,
}

impl BucketSpec {
    pub const INTEGER: BucketSpec = BucketSpec { width: 1.0 };
    /// For durations already converted to seconds.
    pub const SECONDS: BucketSpec = BucketSpec { width: 1.0 };
    pub const SPEED: BucketSpec = BucketSpec { width: 0.25 };

    fn index(&self, x: f64) -> i64 {
        (x / self.width).floor() as i64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub bucket_edges: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub sample_count: usize,
}

fn bucketize(values: &[f64], spec: BucketSpec, lo: i64, hi: i64) -> Histogram {
    let mut counts = vec![0u64; (hi - lo + 1) as usize];
    for &v in values {
        counts[(spec.index(v) - lo) as usize] += 1;
    }
    let n = values.len() as f64;
    Histogram {
        bucket_edges: (lo..=hi + 1).map(|k| k as f64 * spec.width).collect(),
        probabilities: counts.iter().map(|&c| c as f64 / n).collect(),
        sample_count: values.len(),
    }
}

fn support(values: &[f64], spec: BucketSpec) -> Result<(i64, i64), EvalError> {
    if !(spec.width > 0.0 && spec.width.is_finite()) {
        return Err(EvalError::BucketWidth);
    }
    let mut it = values.iter().map(|&v| spec.index(v));
    let first = it.next().ok_or(EvalError::Empty("histogram"))?;
    Ok(it.fold((first, first), |(lo, hi), k| (lo.min(k), hi.max(k))))
}

pub fn histogram(values: &[f64], spec: BucketSpec) -> Result<Histogram, EvalError> {
    let (lo, hi) = support(values, spec)?;
    Ok(bucketize(values, spec, lo, hi))
}

/// Two histograms over the union of both samples' support, ready for
/// `kl`/`js`.
pub fn histogram_pair(p: &[f64], q: &[f64], spec: BucketSpec) -> Result<(Histogram, Histogram), EvalError> {
    let (plo, phi) = support(p, spec)?;
    let (qlo, qhi) = support(q, spec)?;
    let (lo, hi) = (plo.min(qlo), phi.max(qhi));
    Ok((bucketize(p, spec, lo, hi), bucketize(q, spec, lo, hi)))
}

/// Natural-log KL divergence. Returns `f64::INFINITY` when `P` puts mass
/// where `Q` has none.
pub fn kl(p: &Histogram, q: &Histogram) -> Result<f64, EvalError> {
    if p.bucket_edges != q.bucket_edges {
        return Err(EvalError::EdgeMismatch);
    }
    let mut total = 0.0;
    for (&a, &b) in p.probabilities.iter().zip(&q.probabilities) {
        if a == 0.0 {
            continue;
        }
        if b == 0.0 {
            return Ok(f64::INFINITY);
        }
        total += a * (a / b).ln();
    }
    Ok(total)
}

fn js_term(a: f64, b: f64) -> f64 {
    let m = 0.5 * (a + b);
    let part = |x: f64| if x == 0.0 { 0.0 } else { x * (x / m).ln() };
    part(a) + part(b)
}

/// Jensen-Shannon divergence in nats, within `[0, ln 2]`. Each bucket's
/// contribution is symmetric in its arguments, so `js(p, q) == js(q, p)`
/// bit for bit.
pub fn js(p: &Histogram, q: &Histogram) -> Result<f64, EvalError> {
    if p.bucket_edges != q.bucket_edges {
        return Err(EvalError::EdgeMismatch);
    }
    let sum: f64 = p.probabilities.iter().zip(&q.probabilities).map(|(&a, &b)| js_term(a, b)).sum();
    Ok((0.5 * sum).clamp(0.0, std::f64::consts::LN_2))
}

/// Rows of the feature comparison table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    Duration,
    Speed,
    Shots,
    ShotsPerKill,
    Kills,
    PlantAttempts,
    DefuseAttempts,
    Abilities,
}

impl Feature {
    pub const ALL: [Feature; 8] = [
        Feature::Duration,
        Feature::Speed,
        Feature::Shots,
        Feature::ShotsPerKill,
        Feature::Kills,
        Feature::PlantAttempts,
        Feature::DefuseAttempts,
        Feature::Abilities,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Feature::Duration => "Duration",
            Feature::Speed => "Speed",
            Feature::Shots => "Shots",
            Feature::ShotsPerKill => "Shots/Kills",
            Feature::Kills => "Kills",
            Feature::PlantAttempts => "Plt. Attempts",
            Feature::DefuseAttempts => "Def. Attempts",
            Feature::Abilities => "Abilities",
        }
    }

    /// Plant attempts only mean something on attack, defuse attempts on defence.
    pub fn applies_to(self, side: Team) -> bool {
        match self {
            Feature::PlantAttempts => side == Team::Attacker,
            Feature::DefuseAttempts => side == Team::Defender,
            _ => true,
        }
    }

    pub fn buckets(self) -> BucketSpec {
        match self {
            Feature::Duration => BucketSpec::SECONDS,
            Feature::Speed => BucketSpec::SPEED,
            _ => BucketSpec::INTEGER,
        }
    }

    /// Value in histogram units (durations in seconds).
    pub fn value(self, f: &BehaviorFeatures) -> f64 {
        match self {
            Feature::Duration => f.duration as f64 / TICK_RATE as f64,
            Feature::Speed => f.mean_speed,
            Feature::Shots => f.shots as f64,
            Feature::ShotsPerKill => f.shots_per_kill,
            Feature::Kills => f.kills as f64,
            Feature::PlantAttempts => f.plant_attempts as f64,
            Feature::DefuseAttempts => f.defuse_attempts as f64,
            Feature::Abilities => f.ability_uses as f64,
        }
    }
}

/// JS divergence of one feature between two samples, restricted to `side`.
pub fn feature_js(a: &[BehaviorFeatures], b: &[BehaviorFeatures], feature: Feature, side: Team) -> Result<f64, EvalError> {
    let pick = |fs: &[BehaviorFeatures]| -> Vec<f64> {
        fs.iter().filter(|f| f.side == side).map(|f| feature.value(f)).collect()
    };
    let (p, q) = histogram_pair(&pick(a), &pick(b), feature.buckets())?;
    js(&p, &q)
}

/// JS divergence of one feature with attackers and defenders pooled.
pub fn feature_js_pooled(a: &[BehaviorFeatures], b: &[BehaviorFeatures], feature: Feature) -> Result<f64, EvalError> {
    let pick = |fs: &[BehaviorFeatures]| -> Vec<f64> { fs.iter().map(|f| feature.value(f)).collect() };
    let (p, q) = histogram_pair(&pick(a), &pick(b), feature.buckets())?;
    js(&p, &q)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub feature: Feature,
    pub js: f64,
}

/// Attack and defence sections, one row per applicable feature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub attack: Vec<FeatureRow>,
    pub defence: Vec<FeatureRow>,
}

pub fn compare_features(a: &[BehaviorFeatures], b: &[BehaviorFeatures]) -> Result<FeatureTable, EvalError> {
    let section = |side| {
        Feature::ALL
            .iter()
            .filter(|f| f.applies_to(side))
            .map(|&feature| Ok(FeatureRow { feature, js: feature_js(a, b, feature, side)? }))
            .collect::<Result<Vec<_>, EvalError>>()
    };
    Ok(FeatureTable { attack: section(Team::Attacker)?, defence: section(Team::Defender)? })
}

impl FeatureTable {
    /// Plain-text table with ATTACK and DEFENCE sections.
    pub fn to_text(&self, column: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<16}{:>10}", "Feature", column);
        for (title, rows) in [("ATTACK", &self.attack), ("DEFENCE", &self.defence)] {
            let _ = writeln!(s, "{title}");
            for r in rows {
                let _ = writeln!(s, "{:<16}{:>10.3}", r.feature.label(), r.js);
            }
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("side,feature,js\n");
        for (side, rows) in [("attack", &self.attack), ("defence", &self.defence)] {
            for r in rows {
                let _ = writeln!(s, "{side},{},{}", r.feature.label(), r.js);
            }
        }
        s
    }
}
