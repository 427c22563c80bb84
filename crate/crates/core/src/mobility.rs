//! Piecewise-linear trajectories for stations and moving blockers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Aabb, Axis, Position};
use crate::kernel::{RngStream, SimTime};

#[derive(Debug, Error, PartialEq)]
pub enum MobilityError {
    #[error("tick interval must be positive")]
    ZeroTickInterval,
    #[error("invalid mobility model: {0}")]
    Invalid(String),
}

fn default_true() -> bool {
    true
}

fn default_direction() -> f64 {
    1.0
}

/// How an entity moves. Positions never leave the area the model is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum MobilityModel {
    Static,
    /// Straight legs to uniformly drawn waypoints in the horizontal area,
    /// at constant height, with an optional pause at each waypoint.
    RandomWaypoint {
        speed_mps: f64,
        #[serde(default)]
        pause_s: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        area: Option<Aabb>,
        /// Start from a uniform point of the area instead of the given start.
        #[serde(default)]
        random_start: bool,
    },
    /// Walk along one axis on a fixed lane, turning around at the ends of
    /// `range` when `bounce` is set and stopping there otherwise.
    StreetWalk {
        axis: Axis,
        speed_mps: f64,
        #[serde(default = "default_true")]
        bounce: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        range: Option<[f64; 2]>,
        /// +1 walks towards increasing coordinate, -1 the other way.
        #[serde(default = "default_direction")]
        direction: f64,
        /// Start from a uniform point of `range` with a random heading.
        #[serde(default)]
        random_start: bool,
    },
}

impl MobilityModel {
    pub fn speed_mps(&self) -> f64 {
        match self {
            MobilityModel::Static => 0.0,
            MobilityModel::RandomWaypoint { speed_mps, .. }
            | MobilityModel::StreetWalk { speed_mps, .. } => *speed_mps,
        }
    }

    pub fn is_static(&self) -> bool {
        self.speed_mps() == 0.0
    }

    pub fn validate(&self) -> Result<(), MobilityError> {
        let speed = self.speed_mps();
        if !(speed >= 0.0 && speed.is_finite()) {
            return Err(MobilityError::Invalid(format!("speed_mps {speed} must be >= 0")));
        }
        match self {
            MobilityModel::RandomWaypoint { pause_s, .. } if !(*pause_s >= 0.0) => Err(
                MobilityError::Invalid(format!("pause_s {pause_s} must be >= 0")),
            ),
            MobilityModel::StreetWalk {
                range: Some([lo, hi]),
                ..
            } if !(lo < hi) => Err(MobilityError::Invalid("range must satisfy lo < hi".into())),
            MobilityModel::StreetWalk { direction, .. } if direction.abs() != 1.0 => Err(
                MobilityError::Invalid("direction must be +1 or -1".into()),
            ),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Leg {
    t0: SimTime,
    t1: SimTime,
    from: Position,
    to: Position,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobilityTick {
    pub at: SimTime,
    pub position: Position,
}

/// Realised path of one entity. Random waypoints are drawn lazily from the
/// entity's own stream, so the path does not depend on query order.
#[derive(Debug, Clone)]
pub struct Trajectory {
    model: MobilityModel,
    start: Position,
    area: Aabb,
    rng: RngStream,
    legs: Vec<Leg>,
    obstacles: Vec<Obstacle>,
    /// Street-walk start coordinate and heading once drawn.
    lane: Option<(f64, f64)>,
}

/// Vertical cylinder footprint a random walk must not enter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obstacle {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
}

impl Obstacle {
    /// Does the horizontal segment `a -> b` pass within `radius` of the centre?
    pub fn blocks(&self, a: Position, b: Position) -> bool {
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        let len2 = dx * dx + dy * dy;
        let t = if len2 > 0.0 {
            (((self.x - a.x) * dx + (self.y - a.y) * dy) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let (px, py) = (a.x + t * dx - self.x, a.y + t * dy - self.y);
        px * px + py * py <= self.radius * self.radius
    }
}

/// Waypoint draws per leg before giving up on avoiding obstacles.
const MAX_WAYPOINT_TRIES: usize = 1000;

impl Trajectory {
    pub fn new(model: MobilityModel, start: Position, area: Aabb, rng: RngStream) -> Self {
        let area = match &model {
            MobilityModel::RandomWaypoint { area: Some(a), .. } => *a,
            _ => area,
        };
        Trajectory {
            model,
            start,
            area,
            rng,
            legs: Vec::new(),
            obstacles: Vec::new(),
            lane: None,
        }
    }

    /// Random-waypoint legs are redrawn until they clear every obstacle.
    pub fn with_obstacles(mut self, obstacles: Vec<Obstacle>) -> Self {
        self.obstacles = obstacles;
        self
    }

    pub fn fixed(pos: Position) -> Self {
        let area = Aabb { min: pos, max: pos };
        let rng = RngStream::new(0, crate::kernel::StreamId::Mobility);
        Trajectory::new(MobilityModel::Static, pos, area, rng)
    }

    pub fn model(&self) -> &MobilityModel {
        &self.model
    }

    pub fn start(&self) -> Position {
        self.start
    }

    pub fn is_static(&self) -> bool {
        self.model.is_static()
    }

    pub fn position_at(&mut self, t: SimTime) -> Position {
        match self.model.clone() {
            MobilityModel::Static => self.start,
            MobilityModel::RandomWaypoint {
                speed_mps,
                pause_s,
                random_start,
                ..
            } => {
                if speed_mps <= 0.0 {
                    return self.start;
                }
                if random_start && self.legs.is_empty() {
                    self.start = self.draw_point(self.start);
                }
                self.extend_to(t, speed_mps, pause_s);
                let i = self.legs.partition_point(|l| l.t1 < t);
                let leg = self.legs[i];
                if leg.t1 == leg.t0 || t <= leg.t0 {
                    return leg.from;
                }
                let f = (t - leg.t0).as_nanos() as f64 / (leg.t1 - leg.t0).as_nanos() as f64;
                leg.from + (leg.to - leg.from) * f
            }
            MobilityModel::StreetWalk {
                axis,
                speed_mps,
                bounce,
                range,
                direction,
                random_start,
            } => {
                let [lo, hi] = range.unwrap_or([self.area.min.coord(axis), self.area.max.coord(axis)]);
                let (s0, direction) = match self.lane {
                    Some(lane) => lane,
                    None => {
                        let lane = if random_start {
                            let s0 = self.rng.uniform(lo, hi).unwrap_or(lo);
                            let heading = if self.rng.uniform(0.0, 1.0).unwrap_or(0.0) < 0.5 { -1.0 } else { 1.0 };
                            (s0, heading)
                        } else {
                            (self.start.coord(axis).clamp(lo, hi), direction)
                        };
                        self.lane = Some(lane);
                        lane
                    }
                };
                let travelled = speed_mps * t.as_secs_f64();
                let coord = if bounce {
                    let len = hi - lo;
                    let m = (s0 - lo + direction * travelled).rem_euclid(2.0 * len);
                    lo + if m <= len { m } else { 2.0 * len - m }
                } else {
                    (s0 + direction * travelled).clamp(lo, hi)
                };
                self.start.with_coord(axis, coord)
            }
        }
    }

    /// Uniform point of the area outside every obstacle, at `near`'s height.
    fn draw_point(&mut self, near: Position) -> Position {
        let mut p = near;
        for _ in 0..MAX_WAYPOINT_TRIES {
            p = self.uniform_point(near.z);
            if !self.obstacles.iter().any(|o| o.blocks(p, p)) {
                break;
            }
        }
        p
    }

    /// Next waypoint: uniform, with a straight leg from `from` that clears
    /// every obstacle.
    fn draw_waypoint(&mut self, from: Position) -> Position {
        let mut to = from;
        for _ in 0..MAX_WAYPOINT_TRIES {
            to = self.uniform_point(from.z);
            if !self.obstacles.iter().any(|o| o.blocks(from, to)) {
                break;
            }
        }
        to
    }

    fn uniform_point(&mut self, z: f64) -> Position {
        let x = self.rng.uniform(self.area.min.x, self.area.max.x).unwrap_or(self.area.min.x);
        let y = self.rng.uniform(self.area.min.y, self.area.max.y).unwrap_or(self.area.min.y);
        Position::new(x, y, z)
    }

    fn extend_to(&mut self, t: SimTime, speed_mps: f64, pause_s: f64) {
        while self.legs.last().map_or(true, |l| l.t1 < t) {
            let (t0, from) = self
                .legs
                .last()
                .map_or((SimTime::ZERO, self.start), |l| (l.t1, l.to));
            let to = self.draw_waypoint(from);
            // Round the leg duration up so the realised speed never exceeds the nominal one.
            let ns = (from.distance(to) / speed_mps * 1e9).ceil() as u64;
            let t1 = t0 + SimTime::from_nanos(ns);
            self.legs.push(Leg { t0, t1, from, to });
            if pause_s > 0.0 {
                let t2 = t1 + SimTime::from_secs_f64(pause_s);
                self.legs.push(Leg {
                    t0: t1,
                    t1: t2,
                    from: to,
                    to,
                });
            }
        }
    }

    /// Positions at `interval, 2*interval, ...` up to `horizon`.
    pub fn advance_ticks(
        &mut self,
        interval: SimTime,
        horizon: SimTime,
    ) -> Result<Vec<MobilityTick>, MobilityError> {
        if interval == SimTime::ZERO {
            return Err(MobilityError::ZeroTickInterval);
        }
        let n = horizon.as_nanos() / interval.as_nanos();
        Ok((1..=n)
            .map(|k| {
                let at = interval.mul(k);
                MobilityTick {
                    at,
                    position: self.position_at(at),
                }
            })
            .collect())
    }
}
