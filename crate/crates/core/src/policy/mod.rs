//! Scripted demonstrators, the round runner that records their play, model
//! and random-policy rollouts, and per-player skill ratios.

mod episode;
mod expert;

pub use episode::{
    derive_seed, expert_rollout, generate_dataset, model_rollout, play_round, random_rollout, tracker_rollout, Agent, Demonstrator,
    GenerateOptions, RoundResult,
};
pub use expert::{expert_act, tracker_act, ExpertState};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("profile {name}: {field} = {value} outside {range}")]
    Profile { name: String, field: &'static str, value: f64, range: &'static str },
    #[error("n_matches must be at least 1")]
    NoMatches,
    #[error("model agent needs observations")]
    MissingObservation,
    #[error("parameters do not match config: {0}")]
    ParamMismatch(String),
}

/// How an expert spends its two ability charges.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbilityPolicy {
    Never,
    /// Only when an enemy is in sight.
    OnContact,
    /// On contact, plus site executes (attack) and opening utility (defence).
    Full,
}

/// Tunable personality of a scripted demonstrator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpertProfile {
    pub name: String,
    /// Standard deviation of the Gaussian aim error, degrees, in [0, 45].
    pub aim_noise_sigma: f64,
    /// Ticks an enemy must stay in sight before the expert reacts, [0, 32].
    pub reaction_delay: u32,
    /// Chance per decision to push an enemy instead of strafing, [0, 1].
    pub aggression: f64,
    /// Chance per decision to keep holding a spot instead of rotating, [0, 1].
    pub camp_bias: f64,
    pub ability_policy: AbilityPolicy,
    pub seed: u64,
}

impl ExpertProfile {
    pub fn validate(&self) -> Result<(), PolicyError> {
        let err = |field, value: f64, range| PolicyError::Profile { name: self.name.clone(), field, value, range };
        if !(0.0..=45.0).contains(&self.aim_noise_sigma) {
            return Err(err("aim_noise_sigma", self.aim_noise_sigma, "[0, 45]"));
        }
        if self.reaction_delay > 32 {
            return Err(err("reaction_delay", self.reaction_delay as f64, "[0, 32]"));
        }
        if !(0.0..=1.0).contains(&self.aggression) {
            return Err(err("aggression", self.aggression, "[0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.camp_bias) {
            return Err(err("camp_bias", self.camp_bias, "[0, 1]"));
        }
        Ok(())
    }

    pub fn sharp(name: &str, seed: u64) -> Self {
        ExpertProfile {
            name: name.into(),
            aim_noise_sigma: 1.0,
            reaction_delay: 3,
            aggression: 0.6,
            camp_bias: 0.5,
            ability_policy: AbilityPolicy::Full,
            seed,
        }
    }
}

/// Four distinct profiles: two careful, one aggressive, one sloppy.
pub fn default_roster() -> [ExpertProfile; 4] {
    [
        ExpertProfile::sharp("anchor", 11),
        ExpertProfile {
            name: "entry".into(),
            aim_noise_sigma: 2.0,
            reaction_delay: 2,
            aggression: 0.9,
            camp_bias: 0.2,
            ability_policy: AbilityPolicy::OnContact,
            seed: 12,
        },
        ExpertProfile {
            name: "lurker".into(),
            aim_noise_sigma: 1.5,
            reaction_delay: 5,
            aggression: 0.3,
            camp_bias: 0.8,
            ability_policy: AbilityPolicy::Full,
            seed: 13,
        },
        ExpertProfile {
            name: "rookie".into(),
            aim_noise_sigma: 4.0,
            reaction_delay: 8,
            aggression: 0.5,
            camp_bias: 0.5,
            ability_policy: AbilityPolicy::Never,
            seed: 14,
        },
    ]
}

/// Kills per death, with zero deaths counted as one.
pub fn kdr(kills: u32, deaths: u32) -> f64 {
    kills as f64 / deaths.max(1) as f64
}

/// `(kills + assists) / (kills + assists + deaths)`, zero when all three are
/// zero. A player who was never killed but contributed scores 1.
pub fn akdr(kills: u32, assists: u32, deaths: u32) -> f64 {
    let ka = (kills + assists) as f64;
    let total = ka + deaths as f64;
    if total == 0.0 {
        0.0
    } else {
        ka / total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_formulas() {
        assert_eq!(kdr(3, 2), 1.5);
        assert_eq!(kdr(4, 0), 4.0);
        assert_eq!(akdr(2, 1, 1), 0.75);
        assert_eq!(akdr(3, 0, 0), 1.0);
        assert_eq!(akdr(0, 0, 0), 0.0);
    }

    #[test]
    fn profile_ranges() {
        for p in default_roster() {
            p.validate().unwrap();
        }
        let mut p = ExpertProfile::sharp("x", 0);
        p.aggression = 1.5;
        assert!(matches!(p.validate(), Err(PolicyError::Profile { field: "aggression", .. })));
    }
}
