//! The coupled discrete action space: a 165-way aim choice (11 pitch deltas
//! times 15 yaw deltas, the yaw set shared with the visual sensor grid) and
//! 11 independent key flags.
//!
//! Aim indices are pitch-major: `index = pitch_slot * 15 + yaw_slot`.
//! Applying an action to the simulator is [`WorldState::apply_action`].
//!
//! [`WorldState::apply_action`]: crate::world::WorldState::apply_action

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Yaw offsets in degrees, positive to the right. Shared by sensors and aim.
pub const YAW_ANGLES: [f64; 15] =
    [70.0, 45.0, 20.0, 10.0, 6.0, 3.0, 1.0, 0.0, -1.0, -3.0, -6.0, -10.0, -20.0, -45.0, -70.0];
/// Pitch offsets of the visual sensor rows, positive upward.
pub const PITCH_SENSOR_ANGLES: [f64; 15] =
    [45.0, 30.0, 20.0, 10.0, 6.0, 3.0, 1.0, 0.0, -1.0, -3.0, -6.0, -10.0, -20.0, -30.0, -45.0];
/// Pitch deltas available to the aim action.
pub const PITCH_ACTION_ANGLES: [f64; 11] =
    [20.0, 10.0, 6.0, 3.0, 1.0, 0.0, -1.0, -3.0, -6.0, -10.0, -20.0];

pub const AIM_CHOICES: usize = PITCH_ACTION_ANGLES.len() * YAW_ANGLES.len();
pub const KEY_COUNT: usize = 11;
/// Aim index of the (0°, 0°) no-turn action.
pub const AIM_CENTER: AimAction = AimAction(82);

#[derive(Debug, Error, PartialEq, Eq)]
#[error("aim index {0} out of range 0..165")]
pub struct AimIndexError(pub usize);

/// Index into the 165-way aim space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AimAction(u8);

impl AimAction {
    pub fn new(index: usize) -> Result<Self, AimIndexError> {
        if index < AIM_CHOICES {
            Ok(AimAction(index as u8))
        } else {
            Err(AimIndexError(index))
        }
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// `(pitch_delta, yaw_delta)` in degrees.
    pub fn angles(self) -> (f64, f64) {
        let i = self.index();
        (PITCH_ACTION_ANGLES[i / YAW_ANGLES.len()], YAW_ANGLES[i % YAW_ANGLES.len()])
    }
}

impl Default for AimAction {
    fn default() -> Self {
        AIM_CENTER
    }
}

pub fn aim_index_to_angles(index: usize) -> Result<(f64, f64), AimIndexError> {
    AimAction::new(index).map(AimAction::angles)
}

/// Index of the entry of `angles` nearest to `value`; ties go to the entry of
/// smaller magnitude.
pub fn nearest_angle_index(angles: &[f64], value: f64) -> usize {
    let mut best = 0;
    for (i, &a) in angles.iter().enumerate().skip(1) {
        let (d, bd) = ((value - a).abs(), (value - angles[best]).abs());
        if d < bd || (d == bd && a.abs() < angles[best].abs()) {
            best = i;
        }
    }
    best
}

/// Snaps continuous deltas onto the aim grid, each axis independently.
pub fn angles_to_aim_index(pitch_delta: f64, yaw_delta: f64) -> AimAction {
    let p = nearest_angle_index(&PITCH_ACTION_ANGLES, pitch_delta);
    let y = nearest_angle_index(&YAW_ANGLES, yaw_delta);
    AimAction((p * YAW_ANGLES.len() + y) as u8)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Key {
    W = 0,
    A = 1,
    S = 2,
    D = 3,
    Space = 4,
    Key4 = 5,
    G = 6,
    R = 7,
    Q = 8,
    E = 9,
    LeftClick = 10,
}

impl Key {
    pub const ALL: [Key; KEY_COUNT] = [
        Key::W,
        Key::A,
        Key::S,
        Key::D,
        Key::Space,
        Key::Key4,
        Key::G,
        Key::R,
        Key::Q,
        Key::E,
        Key::LeftClick,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Key::W => "W",
            Key::A => "A",
            Key::S => "S",
            Key::D => "D",
            Key::Space => "Space",
            Key::Key4 => "4",
            Key::G => "G",
            Key::R => "R",
            Key::Q => "Q",
            Key::E => "E",
            Key::LeftClick => "LeftClick",
        }
    }
}

/// Held keys as a bit field, bit `k` set for `Key::ALL[k]`.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KeyAction(u16);

impl KeyAction {
    pub const NONE: KeyAction = KeyAction(0);
    const MASK: u16 = (1 << KEY_COUNT) - 1;

    /// Builds from raw bits; bits above 10 are dropped.
    pub fn from_bits(bits: u16) -> Self {
        KeyAction(bits & Self::MASK)
    }

    pub fn bits(self) -> u16 {
        self.0
    }

    pub fn is_down(self, key: Key) -> bool {
        self.0 & (1 << key as u8) != 0
    }

    pub fn set(&mut self, key: Key, down: bool) {
        if down {
            self.0 |= 1 << key as u8;
        } else {
            self.0 &= !(1 << key as u8);
        }
    }

    pub fn with(mut self, key: Key) -> Self {
        self.set(key, true);
        self
    }

    pub fn from_keys(keys: &[Key]) -> Self {
        keys.iter().fold(KeyAction::NONE, |k, &key| k.with(key))
    }
}

impl fmt::Debug for KeyAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let held: Vec<_> = Key::ALL.iter().filter(|&&k| self.is_down(k)).map(|k| k.name()).collect();
        write!(f, "KeyAction[{}]", held.join("+"))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    pub aim: AimAction,
    pub keys: KeyAction,
}

impl Action {
    pub const IDLE: Action = Action { aim: AIM_CENTER, keys: KeyAction::NONE };

    pub fn new(aim: AimAction, keys: KeyAction) -> Self {
        Action { aim, keys }
    }

    pub fn keys(keys: &[Key]) -> Self {
        Action { aim: AIM_CENTER, keys: KeyAction::from_keys(keys) }
    }
}
