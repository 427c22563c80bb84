//! True state of the world over time: trajectories of every entity and the
//! channel between AP and STA at any instant.

use crate::antenna::{AntennaModel, BeamPair};
use crate::channel::{ChannelError, LinkPaths};
use crate::geometry::{Position, Scenario};
use crate::kernel::{RngStream, SimTime, StreamId};
use crate::mobility::{MobilityError, MobilityModel, Obstacle, Trajectory};

/// Mobility sub-stream of the STA; the AP uses 1 and blocker `i` uses 2 + i.
const STA_SUB: u32 = 0;

/// Walkers keep this much space from static furniture, roughly a body radius.
pub const WALK_CLEARANCE_M: f64 = 0.3;
const AP_SUB: u32 = 1;
const BLOCKER_SUB0: u32 = 2;

#[derive(Debug, Clone)]
pub struct World {
    scenario: Scenario,
    ap: Trajectory,
    sta: Trajectory,
    blockers: Vec<Option<Trajectory>>,
    pub ap_antenna: AntennaModel,
    pub sta_antenna: AntennaModel,
    cache: Option<(SimTime, LinkPaths)>,
    blockers_at: Option<SimTime>,
}

impl World {
    pub fn new(
        scenario: Scenario,
        sta_model: MobilityModel,
        ap_model: MobilityModel,
        ap_antenna: AntennaModel,
        sta_antenna: AntennaModel,
        seed: u64,
    ) -> Result<World, MobilityError> {
        sta_model.validate()?;
        ap_model.validate()?;
        let rng = |sub| RngStream::with_sub(seed, StreamId::Mobility, sub);
        // Walking nodes go around fixed furniture, never through it.
        let fixed: Vec<Obstacle> = scenario
            .blockers
            .iter()
            .filter(|b| b.mobility.as_ref().map_or(true, |m| m.is_static()))
            .map(|b| Obstacle {
                x: b.center.x,
                y: b.center.y,
                radius: b.radius + WALK_CLEARANCE_M,
            })
            .collect();
        let sta = Trajectory::new(sta_model, scenario.sta_position, scenario.sta_area(), rng(STA_SUB))
            .with_obstacles(fixed.clone());
        let ap = Trajectory::new(ap_model, scenario.ap_position, scenario.bounds, rng(AP_SUB))
            .with_obstacles(fixed);
        let mut blockers = Vec::with_capacity(scenario.blockers.len());
        for (i, b) in scenario.blockers.iter().enumerate() {
            blockers.push(match &b.mobility {
                Some(m) if !m.is_static() => {
                    m.validate()?;
                    Some(Trajectory::new(
                        m.clone(),
                        b.center,
                        scenario.bounds,
                        rng(BLOCKER_SUB0 + i as u32),
                    ))
                }
                _ => None,
            });
        }
        Ok(World {
            scenario,
            ap,
            sta,
            blockers,
            ap_antenna,
            sta_antenna,
            cache: None,
            blockers_at: None,
        })
    }

    /// Static map: the scenario with blockers at their start positions.
    pub fn map(&self) -> &Scenario {
        &self.scenario
    }

    pub fn ap_is_mobile(&self) -> bool {
        !self.ap.is_static()
    }

    pub fn sta_is_mobile(&self) -> bool {
        !self.sta.is_static()
    }

    pub fn blocker_is_mobile(&self, i: usize) -> bool {
        self.blockers[i].is_some()
    }

    pub fn ap_at(&mut self, t: SimTime) -> Position {
        self.ap.position_at(t)
    }

    pub fn sta_at(&mut self, t: SimTime) -> Position {
        self.sta.position_at(t)
    }

    /// True blocker centres at `t`, in scenario order.
    pub fn blockers_at(&mut self, t: SimTime) -> Vec<Position> {
        self.move_blockers(t);
        self.scenario.blockers.iter().map(|b| b.center).collect()
    }

    fn move_blockers(&mut self, t: SimTime) {
        if self.blockers_at == Some(t) {
            return;
        }
        for (b, traj) in self.scenario.blockers.iter_mut().zip(self.blockers.iter_mut()) {
            if let Some(traj) = traj {
                b.center = traj.position_at(t);
            }
        }
        self.blockers_at = Some(t);
    }

    /// The scenario with every blocker at its true position at `t`.
    pub fn scenario_at(&mut self, t: SimTime) -> &Scenario {
        self.move_blockers(t);
        &self.scenario
    }

    /// Rays between AP and STA at `t`, downlink orientation.
    pub fn link_at(&mut self, t: SimTime) -> &LinkPaths {
        if !matches!(&self.cache, Some((ct, _)) if *ct == t) {
            let ap = self.ap.position_at(t);
            let sta = self.sta.position_at(t);
            self.move_blockers(t);
            let lp = LinkPaths::compute(&self.scenario, ap, sta, &self.ap_antenna, &self.sta_antenna);
            self.cache = Some((t, lp));
        }
        &self.cache.as_ref().expect("just filled").1
    }

    pub fn snr_at(&mut self, t: SimTime, pair: BeamPair) -> f64 {
        self.link_at(t).snr_db(pair)
    }

    pub fn best_pair_at(&mut self, t: SimTime) -> Result<BeamPair, ChannelError> {
        self.link_at(t).best_pair()
    }
}
