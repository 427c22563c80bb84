//! Helpers shared by the integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use sacsim::antenna::AntennaModel;
use sacsim::config::{load_config_with_env, RunConfig};
use sacsim::experiment::ResultRow;
use sacsim::geometry::{Aabb, Position, Scenario, ScenarioKind};
use sacsim::kpi::KpiRecord;

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn config_path(name: &str) -> PathBuf {
    repo_root().join("configs").join(name)
}

/// Loads a shipped config, ignoring the process environment.
pub fn shipped(name: &str) -> RunConfig {
    load_config_with_env(&config_path(name), Vec::new()).expect("shipped config loads")
}

pub fn env(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

/// Distinct axis values in row order.
pub fn axis_values(rows: &[ResultRow]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for r in rows {
        if !out.contains(&r.axis_value) {
            out.push(r.axis_value.clone());
        }
    }
    out
}

/// Mean and standard error of `f` over the seeds of one cell. Seeds where
/// `f` is undefined are skipped.
pub fn cell(rows: &[ResultRow], scheme: &str, value: &str, f: impl Fn(&KpiRecord) -> Option<f64>) -> (f64, f64) {
    let xs: Vec<f64> = rows
        .iter()
        .filter(|r| r.scheme == scheme && r.axis_value == value)
        .filter_map(|r| f(&r.record))
        .collect();
    assert!(!xs.is_empty(), "no rows for {scheme} at {value}");
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let se = if xs.len() > 1 {
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    (mean, se)
}

pub fn series(rows: &[ResultRow], scheme: &str, f: impl Fn(&KpiRecord) -> Option<f64> + Copy) -> Vec<(f64, f64)> {
    axis_values(rows).iter().map(|v| cell(rows, scheme, v, f)).collect()
}

pub fn throughput(r: &KpiRecord) -> Option<f64> {
    Some(r.throughput_mbps)
}

pub fn delay(r: &KpiRecord) -> Option<f64> {
    r.mean_delay_ms
}

pub fn drop_rate(r: &KpiRecord) -> Option<f64> {
    Some(r.drop_rate)
}

/// Least-squares slope of `ys` over `xs`.
pub fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let num: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    num / den
}

/// A walled-off empty box with the AP at `ap`, no surfaces and no blockers.
pub fn open_box(ap: Position, sta: Position, tx_power_dbm: f64) -> Scenario {
    Scenario {
        kind: ScenarioKind::LivingRoom,
        bounds: Aabb {
            min: Position::new(0.0, 0.0, 0.0),
            max: Position::new(10.0, 10.0, 3.0),
        },
        sta_area: Some(Aabb {
            min: Position::new(0.0, 0.0, sta.z),
            max: Position::new(10.0, 10.0, sta.z),
        }),
        surfaces: Vec::new(),
        blockers: Vec::new(),
        ap_position: ap,
        sta_position: sta,
        carrier_freq_hz: 60.48e9,
        noise_dbm: -73.7,
        tx_power_dbm,
    }
}

pub fn antenna(n: usize, main: f64, side: f64) -> AntennaModel {
    AntennaModel::new(n, main, side)
}
