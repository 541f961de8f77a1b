//! Slotted user mobility with random acceleration and turning.

use std::f64::consts::PI;
use std::ops::RangeInclusive;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::scenario::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MobilityPattern {
    Pedestrian,
    Bike,
    Vehicle,
}

impl MobilityPattern {
    pub fn params(self) -> MobilityParams {
        let (speed, accel, turn) = match self {
            MobilityPattern::Pedestrian => ((0.5, 1.8), (-0.3, 0.3), (-PI / 4.0, PI / 4.0)),
            MobilityPattern::Bike => ((2.0, 8.0), (-1.0, 1.0), (-PI / 3.0, PI / 3.0)),
            MobilityPattern::Vehicle => ((5.5, 20.0), (-3.0, 3.0), (-PI / 2.0, PI / 2.0)),
        };
        MobilityParams {
            speed_range: speed,
            accel_range: accel,
            turn_rate_range: turn,
            slot_s: 5.0,
            area_side_m: 1000.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobilityParams {
    /// m/s
    pub speed_range: (f64, f64),
    /// m/s^2
    pub accel_range: (f64, f64),
    /// rad/s
    pub turn_rate_range: (f64, f64),
    pub slot_s: f64,
    pub area_side_m: f64,
}

fn range((lo, hi): (f64, f64)) -> RangeInclusive<f64> {
    lo..=hi
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserMotion {
    pub position: Point,
    /// m/s
    pub speed: f64,
    /// rad
    pub heading: f64,
}

/// Initial motion: speed uniform in the pattern range, heading in [0, pi].
pub fn init_motion(positions: &[Point], params: &MobilityParams, rng: &mut impl Rng) -> Vec<UserMotion> {
    positions
        .iter()
        .map(|&position| UserMotion {
            position,
            speed: rng.random_range(range(params.speed_range)),
            heading: rng.random_range(0.0..=PI),
        })
        .collect()
}

/// Reflects `v` into `[0, side]`; returns whether the axis direction flipped.
fn reflect(v: &mut f64, side: f64) -> bool {
    let mut flipped = false;
    while *v < 0.0 || *v > side {
        *v = if *v < 0.0 { -*v } else { 2.0 * side - *v };
        flipped = !flipped;
    }
    flipped
}

/// Advances one slot: new acceleration and turn rate at the slot start,
/// speed clamped to the pattern range, reflection at the area edges.
pub fn mobility_step(state: &mut [UserMotion], params: &MobilityParams, rng: &mut impl Rng) {
    let dt = params.slot_s;
    for u in state.iter_mut() {
        let accel = rng.random_range(range(params.accel_range));
        let turn = rng.random_range(range(params.turn_rate_range));
        u.speed = (u.speed + accel * dt).clamp(params.speed_range.0, params.speed_range.1);
        u.heading += turn * dt;
        let mut x = u.position.x + u.speed * dt * u.heading.cos();
        let mut y = u.position.y + u.speed * dt * u.heading.sin();
        if reflect(&mut x, params.area_side_m) {
            u.heading = PI - u.heading;
        }
        if reflect(&mut y, params.area_side_m) {
            u.heading = -u.heading;
        }
        u.heading = u.heading.rem_euclid(2.0 * PI);
        u.position = Point::new(x, y);
    }
}
