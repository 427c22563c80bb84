//! Scenario geometry and first-order ray enumeration.
//!
//! Rays are the line-of-sight segment plus one image-method reflection per
//! axis-aligned surface. Surfaces are opaque to segments that cross them;
//! vertical cylinders model furniture, trees and people, each with a
//! penetration loss that may be infinite.

use std::ops::{Add, Mul, Sub};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mobility::MobilityModel;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

const EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("transmitter and receiver coincide")]
    DegenerateGeometry,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse scenario {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

/// A point in metres.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Position {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Position { x, y, z }
    }

    pub fn dot(self, o: Position) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(self, o: Position) -> f64 {
        (self - o).norm()
    }

    pub fn horizontal_distance(self, o: Position) -> f64 {
        (self.x - o.x).hypot(self.y - o.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn coord(self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.x,
            Axis::Y => self.y,
            Axis::Z => self.z,
        }
    }

    pub fn with_coord(mut self, axis: Axis, v: f64) -> Self {
        match axis {
            Axis::X => self.x = v,
            Axis::Y => self.y = v,
            Axis::Z => self.z = v,
        }
        self
    }

    /// Azimuth of this vector in degrees, normalised to `[0, 360)`.
    pub fn azimuth_deg(self) -> f64 {
        normalize_deg(self.y.atan2(self.x).to_degrees())
    }
}

impl From<[f64; 3]> for Position {
    fn from(a: [f64; 3]) -> Self {
        Position::new(a[0], a[1], a[2])
    }
}

impl From<Position> for [f64; 3] {
    fn from(p: Position) -> Self {
        [p.x, p.y, p.z]
    }
}

impl Add for Position {
    type Output = Position;
    fn add(self, o: Position) -> Position {
        Position::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Position {
    type Output = Position;
    fn sub(self, o: Position) -> Position {
        Position::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Position {
    type Output = Position;
    fn mul(self, k: f64) -> Position {
        Position::new(self.x * k, self.y * k, self.z * k)
    }
}

/// Maps any angle to `[0, 360)`.
pub fn normalize_deg(a: f64) -> f64 {
    // Same result as rem_euclid for one turn either side, without the fmod.
    let r = if (0.0..360.0).contains(&a) {
        a
    } else if (-360.0..0.0).contains(&a) {
        a + 360.0
    } else {
        a.rem_euclid(360.0)
    };
    // rem_euclid can round up to exactly 360 for tiny negative inputs.
    if r >= 360.0 {
        0.0
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    /// The two in-plane axes of a surface whose normal is `self`.
    pub fn plane_axes(self) -> (Axis, Axis) {
        match self {
            Axis::X => (Axis::Y, Axis::Z),
            Axis::Y => (Axis::X, Axis::Z),
            Axis::Z => (Axis::X, Axis::Y),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Position,
    pub max: Position,
}

impl Aabb {
    pub fn contains(&self, p: Position) -> bool {
        let tol = 1e-9;
        p.x >= self.min.x - tol
            && p.x <= self.max.x + tol
            && p.y >= self.min.y - tol
            && p.y <= self.max.y + tol
            && p.z >= self.min.z - tol
            && p.z <= self.max.z + tol
    }

    pub fn is_valid(&self) -> bool {
        self.min.is_finite()
            && self.max.is_finite()
            && self.min.x < self.max.x
            && self.min.y < self.max.y
            && self.min.z <= self.max.z
    }
}

/// Axis-aligned reflecting rectangle. `origin` is the corner with the
/// smallest in-plane coordinates; `extents` run along [`Axis::plane_axes`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Surface {
    #[serde(default)]
    pub name: String,
    pub axis: Axis,
    pub origin: Position,
    pub extents: [f64; 2],
    pub reflection_loss_db: f64,
}

impl Surface {
    pub fn plane_offset(&self) -> f64 {
        self.origin.coord(self.axis)
    }

    fn contains_in_plane(&self, p: Position) -> bool {
        let (u, v) = self.axis.plane_axes();
        let (pu, pv) = (p.coord(u), p.coord(v));
        let (ou, ov) = (self.origin.coord(u), self.origin.coord(v));
        let tol = 1e-9;
        pu >= ou - tol
            && pu <= ou + self.extents[0] + tol
            && pv >= ov - tol
            && pv <= ov + self.extents[1] + tol
    }

    /// Does the open segment `a -> b` pass through this rectangle?
    fn crosses(&self, a: Position, b: Position) -> bool {
        let c = self.plane_offset();
        let (da, db) = (a.coord(self.axis) - c, b.coord(self.axis) - c);
        if da * db >= 0.0 {
            // Same side, or an endpoint on the plane.
            return false;
        }
        let t = da / (da - db);
        if t <= EPS || t >= 1.0 - EPS {
            return false;
        }
        self.contains_in_plane(a + (b - a) * t)
    }

    pub fn mirror(&self, p: Position) -> Position {
        let c = self.plane_offset();
        p.with_coord(self.axis, 2.0 * c - p.coord(self.axis))
    }
}

/// Vertical cylinder standing on `center.z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Blocker {
    #[serde(default)]
    pub name: String,
    pub center: Position,
    pub radius: f64,
    pub height: f64,
    /// `inf` for opaque objects.
    pub penetration_loss_db: f64,
    /// Present for blockers that move; the position above is the start.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mobility: Option<MobilityModel>,
}

impl Blocker {
    pub fn is_opaque(&self) -> bool {
        self.penetration_loss_db.is_infinite()
    }

    /// Does the closed segment `a -> b` touch the cylinder volume?
    pub fn intersects(&self, a: Position, b: Position) -> bool {
        let r = self.radius;
        if a.x.min(b.x) > self.center.x + r
            || a.x.max(b.x) < self.center.x - r
            || a.y.min(b.y) > self.center.y + r
            || a.y.max(b.y) < self.center.y - r
        {
            return false;
        }
        let d = b - a;
        let (ax, ay) = (a.x - self.center.x, a.y - self.center.y);
        let qa = d.x * d.x + d.y * d.y;
        let qb = 2.0 * (ax * d.x + ay * d.y);
        let qc = ax * ax + ay * ay - self.radius * self.radius;
        let (t0, t1) = if qa < 1e-18 {
            if qc > 0.0 {
                return false;
            }
            (0.0, 1.0)
        } else {
            let disc = qb * qb - 4.0 * qa * qc;
            if disc < 0.0 {
                return false;
            }
            let s = disc.sqrt();
            ((-qb - s) / (2.0 * qa), (-qb + s) / (2.0 * qa))
        };
        let (t0, t1) = (t0.max(0.0), t1.min(1.0));
        if t0 > t1 {
            return false;
        }
        let (z0, z1) = (a.z + d.z * t0, a.z + d.z * t1);
        let (lo, hi) = (z0.min(z1), z0.max(z1));
        let (base, top) = (self.center.z, self.center.z + self.height);
        hi >= base && lo <= top
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    LivingRoom,
    StreetCanyon,
}

impl ScenarioKind {
    pub fn label(self) -> &'static str {
        match self {
            ScenarioKind::LivingRoom => "living_room",
            ScenarioKind::StreetCanyon => "street_canyon",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub bounds: Aabb,
    /// Region the station may roam; defaults to `bounds`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sta_area: Option<Aabb>,
    #[serde(default)]
    pub surfaces: Vec<Surface>,
    #[serde(default)]
    pub blockers: Vec<Blocker>,
    pub ap_position: Position,
    pub sta_position: Position,
    pub carrier_freq_hz: f64,
    pub noise_dbm: f64,
    pub tx_power_dbm: f64,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let scenario: Scenario = toml::from_str(&text).map_err(|e| ScenarioError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        if !self.bounds.is_valid() {
            return bad("bounds must have min < max on x and y".into());
        }
        if !self.bounds.contains(self.ap_position) {
            return bad("ap_position lies outside bounds".into());
        }
        if !self.bounds.contains(self.sta_position) {
            return bad("sta_position lies outside bounds".into());
        }
        if let Some(area) = &self.sta_area {
            if !area.is_valid() || !self.bounds.contains(area.min) || !self.bounds.contains(area.max)
            {
                return bad("sta_area must be a valid box inside bounds".into());
            }
        }
        if !(self.carrier_freq_hz > 45e9) {
            return bad(format!(
                "carrier_freq_hz {} is not above 45 GHz",
                self.carrier_freq_hz
            ));
        }
        if !self.noise_dbm.is_finite() || !self.tx_power_dbm.is_finite() {
            return bad("noise_dbm and tx_power_dbm must be finite".into());
        }
        for s in &self.surfaces {
            if !(s.extents[0] > 0.0 && s.extents[1] > 0.0) {
                return bad(format!("surface '{}' needs positive extents", s.name));
            }
            if !(s.reflection_loss_db >= 0.0) {
                return bad(format!("surface '{}' has negative reflection loss", s.name));
            }
        }
        for b in &self.blockers {
            if !(b.radius > 0.0) {
                return bad(format!("blocker '{}' needs a positive radius", b.name));
            }
            if !(b.height > 0.0) || !(b.penetration_loss_db >= 0.0) {
                return bad(format!(
                    "blocker '{}' needs positive height and non-negative loss",
                    b.name
                ));
            }
        }
        Ok(())
    }

    pub fn sta_area(&self) -> Aabb {
        self.sta_area.unwrap_or(self.bounds)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathKind {
    LineOfSight,
    SingleReflection { surface: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RayPath {
    pub kind: PathKind,
    pub vertices: Vec<Position>,
    pub length_m: f64,
    pub extra_loss_db: f64,
    pub departure_azimuth_deg: f64,
    /// Direction, seen from the receiver, the energy arrives from.
    pub arrival_azimuth_deg: f64,
}

/// Free-space loss over the path length plus reflection/penetration losses.
pub fn path_loss_db(path: &RayPath, freq_hz: f64) -> f64 {
    free_space_loss_db(path.length_m, freq_hz) + path.extra_loss_db
}

pub fn free_space_loss_db(distance_m: f64, freq_hz: f64) -> f64 {
    20.0 * (4.0 * std::f64::consts::PI * distance_m * freq_hz / SPEED_OF_LIGHT).log10()
}

/// Compact ray description used on the hot path (no allocation).
#[derive(Debug, Clone, Copy)]
pub(crate) struct RaySummary {
    pub kind: PathKind,
    pub bounce: Option<Position>,
    pub length_m: f64,
    pub extra_loss_db: f64,
    pub departure_azimuth_deg: f64,
    pub arrival_azimuth_deg: f64,
}

enum Occlusion {
    Clear(f64),
    Opaque,
}

fn occlusion(scenario: &Scenario, a: Position, b: Position, skip: Option<usize>) -> Occlusion {
    for (i, s) in scenario.surfaces.iter().enumerate() {
        if Some(i) != skip && s.crosses(a, b) {
            return Occlusion::Opaque;
        }
    }
    let mut loss = 0.0;
    for blk in &scenario.blockers {
        if blk.intersects(a, b) {
            if blk.is_opaque() {
                return Occlusion::Opaque;
            }
            loss += blk.penetration_loss_db;
        }
    }
    Occlusion::Clear(loss)
}

/// Visits every unoccluded first-order ray between `tx` and `rx`, in
/// generation order (line of sight, then surfaces by index).
pub(crate) fn for_each_ray<F: FnMut(RaySummary)>(
    scenario: &Scenario,
    tx: Position,
    rx: Position,
    mut visit: F,
) {
    if let Occlusion::Clear(loss) = occlusion(scenario, tx, rx, None) {
        visit(RaySummary {
            kind: PathKind::LineOfSight,
            bounce: None,
            length_m: tx.distance(rx),
            extra_loss_db: loss,
            departure_azimuth_deg: (rx - tx).azimuth_deg(),
            arrival_azimuth_deg: (tx - rx).azimuth_deg(),
        });
    }
    for (i, s) in scenario.surfaces.iter().enumerate() {
        let c = s.plane_offset();
        let (dt, dr) = (tx.coord(s.axis) - c, rx.coord(s.axis) - c);
        if dt * dr <= 0.0 {
            continue;
        }
        let image = s.mirror(tx);
        let di = image.coord(s.axis) - c;
        let t = di / (di - dr);
        let p = image + (rx - image) * t;
        if !s.contains_in_plane(p) {
            continue;
        }
        let leg1 = occlusion(scenario, tx, p, Some(i));
        let Occlusion::Clear(l1) = leg1 else { continue };
        let leg2 = occlusion(scenario, p, rx, Some(i));
        let Occlusion::Clear(l2) = leg2 else { continue };
        visit(RaySummary {
            kind: PathKind::SingleReflection { surface: i },
            bounce: Some(p),
            length_m: image.distance(rx),
            extra_loss_db: s.reflection_loss_db + l1 + l2,
            departure_azimuth_deg: (p - tx).azimuth_deg(),
            arrival_azimuth_deg: (p - rx).azimuth_deg(),
        });
    }
}

/// All first-order rays from `tx` to `rx`, sorted by total loss ascending.
pub fn enumerate_paths(
    scenario: &Scenario,
    tx: Position,
    rx: Position,
) -> Result<Vec<RayPath>, GeometryError> {
    if tx.distance(rx) < 1e-12 {
        return Err(GeometryError::DegenerateGeometry);
    }
    let mut paths = Vec::new();
    for_each_ray(scenario, tx, rx, |r| {
        let vertices = match r.bounce {
            Some(p) => vec![tx, p, rx],
            None => vec![tx, rx],
        };
        paths.push(RayPath {
            kind: r.kind,
            vertices,
            length_m: r.length_m,
            extra_loss_db: r.extra_loss_db,
            departure_azimuth_deg: r.departure_azimuth_deg,
            arrival_azimuth_deg: r.arrival_azimuth_deg,
        });
    });
    let f = scenario.carrier_freq_hz;
    paths.sort_by(|a, b| path_loss_db(a, f).total_cmp(&path_loss_db(b, f)));
    Ok(paths)
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    /// A 10 x 8 x 3 m empty room with six 10 dB surfaces.
    pub fn empty_room() -> Scenario {
        let wall = |name: &str, axis, origin: [f64; 3], extents| Surface {
            name: name.into(),
            axis,
            origin: origin.into(),
            extents,
            reflection_loss_db: 10.0,
        };
        Scenario {
            kind: ScenarioKind::LivingRoom,
            bounds: Aabb {
                min: Position::new(0.0, 0.0, 0.0),
                max: Position::new(10.0, 8.0, 3.0),
            },
            sta_area: None,
            surfaces: vec![
                wall("floor", Axis::Z, [0.0, 0.0, 0.0], [10.0, 8.0]),
                wall("ceiling", Axis::Z, [0.0, 0.0, 3.0], [10.0, 8.0]),
                wall("west", Axis::X, [0.0, 0.0, 0.0], [8.0, 3.0]),
                wall("east", Axis::X, [10.0, 0.0, 0.0], [8.0, 3.0]),
                wall("south", Axis::Y, [0.0, 0.0, 0.0], [10.0, 3.0]),
                wall("north", Axis::Y, [0.0, 8.0, 0.0], [10.0, 3.0]),
            ],
            blockers: vec![],
            ap_position: Position::new(2.0, 4.0, 1.5),
            sta_position: Position::new(5.0, 4.0, 1.5),
            carrier_freq_hz: 60e9,
            noise_dbm: -70.0,
            tx_power_dbm: 10.0,
        }
    }

    pub fn open_space() -> Scenario {
        Scenario {
            surfaces: vec![],
            ..empty_room()
        }
    }

    pub fn opaque(center: [f64; 3], radius: f64) -> Blocker {
        Blocker {
            name: "pillar".into(),
            center: center.into(),
            radius,
            height: 3.0,
            penetration_loss_db: f64::INFINITY,
            mobility: None,
        }
    }
}
