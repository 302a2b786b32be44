//! Deterministic 16 Hz simulator for a 2v2 bomb plant/defuse round on a
//! 2.5D map (2D walls extruded between a flat floor and ceiling).

pub mod geometry;
pub mod map;
pub mod raycast;
pub mod sim;

pub use geometry::{Rect, Segment, Vec2, Vec3};
pub use map::{ascent_mini, load_map, MapError, MapGeometry, NavGraph, ASCENT_MINI};
pub use raycast::{raycast, Hit, HitObject, Occluder, RayFilter, MAX_RAY_DISTANCE};
pub use sim::*;
