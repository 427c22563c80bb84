//! Beam-management policies and the location-sensing error model.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::antenna::{AntennaModel, BeamPair};
use crate::channel::{ChannelError, LinkPaths};
use crate::geometry::{Position, Scenario};
use crate::kernel::{RngStream, SimTime};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SchemeError {
    #[error("no sensing report is available yet")]
    NoReport,
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsacParams {
    pub error_radius_m: f64,
    pub sensing_period: SimTime,
    pub sensing_latency: SimTime,
    pub intra_ppdu_switch: bool,
    /// Resume a failed link as soon as a fresh report is available instead
    /// of waiting for the beacon-time sweep.
    pub sensing_recovery: bool,
    /// Dedicated airtime of one sensing burst when the medium is idle. A
    /// burst that falls during a transmission rides on it at no cost.
    #[serde(default)]
    pub sensing_airtime: SimTime,
}

impl Default for IsacParams {
    fn default() -> Self {
        IsacParams {
            error_radius_m: 0.0,
            sensing_period: SimTime::from_millis(10),
            sensing_latency: SimTime::ZERO,
            intra_ppdu_switch: false,
            sensing_recovery: false,
            sensing_airtime: SimTime::ZERO,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SchemeKind {
    BaselineBeamtracking,
    Isac(IsacParams),
    Oracle,
}

impl SchemeKind {
    /// Short label used in result tables, e.g. `isac-0.4`.
    pub fn label(&self) -> String {
        match self {
            SchemeKind::BaselineBeamtracking => "baseline".into(),
            SchemeKind::Isac(p) => format!("isac-{}", p.error_radius_m),
            SchemeKind::Oracle => "oracle".into(),
        }
    }
}

/// Where the PPDU beam pair comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairSource {
    /// The link's trained pair, refined by beamtracking.
    Tracked,
    /// The latest sensing report; optionally refreshed per MPDU.
    Sensed { intra_ppdu: bool },
    /// True positions, re-evaluated at launch and at every MPDU.
    Genie,
}

/// MAC behaviour implied by a scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SchemeHooks {
    pub trn_tail: bool,
    pub beamtracking: bool,
    pub beacon_retrain: bool,
    pub pair_source: PairSource,
}

pub fn scheme_hooks(scheme: &SchemeKind) -> SchemeHooks {
    match scheme {
        SchemeKind::BaselineBeamtracking => SchemeHooks {
            trn_tail: true,
            beamtracking: true,
            beacon_retrain: true,
            pair_source: PairSource::Tracked,
        },
        SchemeKind::Isac(p) => SchemeHooks {
            trn_tail: false,
            beamtracking: false,
            beacon_retrain: true,
            pair_source: PairSource::Sensed {
                intra_ppdu: p.intra_ppdu_switch,
            },
        },
        SchemeKind::Oracle => SchemeHooks {
            trn_tail: false,
            beamtracking: false,
            beacon_retrain: false,
            pair_source: PairSource::Genie,
        },
    }
}

/// Estimated positions of every entity at one sensing instant. Entities
/// that never move are part of the known map and are reported exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingReport {
    pub generated_at: SimTime,
    pub available_at: SimTime,
    pub ap: Position,
    pub sta: Position,
    /// One entry per scenario blocker, in scenario order.
    pub blockers: Vec<Position>,
}

/// Perturbs `true_pos` by an offset uniform on the horizontal disk of
/// radius `error_radius_m`. Always consumes two draws, so runs that differ
/// only in the radius see proportional offsets.
pub fn sense_location(true_pos: Position, error_radius_m: f64, rng: &mut RngStream) -> Position {
    let (u, v) = (rng.unit(), rng.unit());
    let rho = error_radius_m * u.sqrt();
    let phi = std::f64::consts::TAU * v;
    Position::new(
        true_pos.x + rho * phi.cos(),
        true_pos.y + rho * phi.sin(),
        true_pos.z,
    )
}

/// Latest report visible at `now`, if any. Reports must be in generation
/// order.
pub fn latest_report(reports: &[SensingReport], now: SimTime) -> Option<&SensingReport> {
    reports.iter().rev().find(|r| r.available_at <= now)
}

/// The scenario as a report describes it: blockers moved to their sensed
/// positions.
pub fn sensed_scenario(scenario: &Scenario, report: &SensingReport) -> Scenario {
    let mut s = scenario.clone();
    for (b, &p) in s.blockers.iter_mut().zip(&report.blockers) {
        b.center = p;
    }
    s
}

/// Best pair for the positions in a report (downlink orientation).
pub fn select_from_report(
    scenario: &Scenario,
    report: &SensingReport,
    ap_antenna: &AntennaModel,
    sta_antenna: &AntennaModel,
) -> Result<BeamPair, ChannelError> {
    let s = sensed_scenario(scenario, report);
    LinkPaths::compute(&s, report.ap, report.sta, ap_antenna, sta_antenna).best_pair()
}

/// Pair chosen from the newest report available at `now`.
pub fn isac_select_beam(
    reports: &[SensingReport],
    now: SimTime,
    scenario: &Scenario,
    ap_antenna: &AntennaModel,
    sta_antenna: &AntennaModel,
) -> Result<BeamPair, SchemeError> {
    let report = latest_report(reports, now).ok_or(SchemeError::NoReport)?;
    Ok(select_from_report(scenario, report, ap_antenna, sta_antenna)?)
}

/// Pair chosen with perfect knowledge. `scenario` must hold the true
/// blocker positions at the instant of interest.
pub fn oracle_select_beam(
    ap: Position,
    sta: Position,
    scenario: &Scenario,
    ap_antenna: &AntennaModel,
    sta_antenna: &AntennaModel,
) -> Result<BeamPair, ChannelError> {
    LinkPaths::compute(scenario, ap, sta, ap_antenna, sta_antenna).best_pair()
}
