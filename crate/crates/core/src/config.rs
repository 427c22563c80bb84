//! Run configuration: TOML file, environment overrides, validation.
//!
//! Any key can be overridden from the environment as
//! `SACSIM_<SECTION>__<KEY>=<toml literal>`, e.g.
//! `SACSIM_TRAFFIC__RATE_MBPS=50` or `SACSIM_SCHEME=oracle`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::antenna::AntennaModel;
use crate::geometry::{Scenario, ScenarioError};
use crate::kernel::SimTime;
use crate::mac::MacConfig;
use crate::mobility::MobilityModel;
use crate::phy::{McsTable, PhyConfig};
use crate::schemes::{IsacParams, SchemeKind};
use crate::traffic::TrafficConfig;

pub const ENV_PREFIX: &str = "SACSIM_";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationIssue {
    pub key: String,
    pub message: String,
}

impl std::fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("cannot parse {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid configuration:\n{}", format_issues(.0))]
    Validation(Vec<ValidationIssue>),
}

fn format_issues(v: &[ValidationIssue]) -> String {
    v.iter()
        .map(|i| format!("  {i}"))
        .collect::<Vec<_>>()
        .join("\n")
}

impl ConfigError {
    pub fn issues(&self) -> &[ValidationIssue] {
        match self {
            ConfigError::Validation(v) => v,
            _ => &[],
        }
    }
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawIsac {
    error_radius_m: Option<f64>,
    sensing_period_ms: Option<f64>,
    sensing_latency_ms: Option<f64>,
    intra_ppdu_switch: Option<bool>,
    sensing_recovery: Option<bool>,
    sensing_airtime_us: Option<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawMac {
    aggregation_size: Option<i64>,
    max_retries: Option<i64>,
    max_queue_delay_ms: Option<f64>,
    sifs_us: Option<f64>,
    difs_us: Option<f64>,
    ack_duration_us: Option<f64>,
    preamble_us: Option<f64>,
    beacon_interval_ms: Option<f64>,
    sls_airtime_ms: Option<f64>,
    trn_unit_us: Option<f64>,
    failure_threshold: Option<i64>,
    mcs: Option<i64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawPhy {
    sync_threshold_db: Option<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawAntenna {
    num_sectors: Option<i64>,
    mainlobe_gain_db: Option<f64>,
    sidelobe_gain_db: Option<f64>,
    ap_orientation_deg: Option<f64>,
    /// Defaults to half a sector, so the two ends' sector edges do not line up.
    sta_orientation_deg: Option<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawChannel {
    tx_power_dbm: Option<f64>,
    noise_dbm: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTraffic {
    rate_mbps: Option<f64>,
    msdu_size_bits: Option<i64>,
    arrival: Option<crate::traffic::ArrivalKind>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scenario: String,
    scheme: String,
    mcs_table: Option<String>,
    duration_s: Option<f64>,
    warmup_s: Option<f64>,
    master_seed: Option<u64>,
    #[serde(default)]
    isac: RawIsac,
    #[serde(default)]
    mac: RawMac,
    #[serde(default)]
    phy: RawPhy,
    #[serde(default)]
    antenna: RawAntenna,
    #[serde(default)]
    channel: RawChannel,
    traffic: Option<RawTraffic>,
    mobility: Option<toml::Value>,
    ap_mobility: Option<toml::Value>,
}

/// Fully resolved, validated configuration of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    #[serde(skip)]
    pub scenario_path: PathBuf,
    pub scenario: Scenario,
    pub scheme: SchemeKind,
    pub mac: MacConfig,
    pub phy: PhyConfig,
    pub mcs_table: McsTable,
    pub ap_antenna: AntennaModel,
    pub sta_antenna: AntennaModel,
    pub traffic: TrafficConfig,
    pub sta_mobility: MobilityModel,
    pub ap_mobility: MobilityModel,
    pub mobility_tick: Option<SimTime>,
    pub duration: SimTime,
    pub warmup: SimTime,
    pub master_seed: u64,
}

pub const DEFAULT_SYNC_THRESHOLD_DB: f64 = 0.0;

/// Reads a config file, applies `SACSIM_*` overrides from the process
/// environment and validates it.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    load_config_with_env(path, std::env::vars())
}

pub fn load_config_with_env<I>(path: &Path, env: I) -> Result<RunConfig, ConfigError>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut value = read_toml(path)?;
    apply_env_overrides(&mut value, env)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    resolve(value, dir, &path.display().to_string())
}

pub fn read_toml(path: &Path) -> Result<toml::Value, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let table: toml::Table = toml::from_str(&text).map_err(|e| ConfigError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    Ok(toml::Value::Table(table))
}

/// Parses `raw` as a TOML literal; bare words become strings.
pub fn parse_literal(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t.remove("v").unwrap_or(toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

/// Sets a dotted key, creating intermediate tables.
pub fn set_path(root: &mut toml::Value, key: &str, v: toml::Value) -> Result<(), ConfigError> {
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = root;
    for (i, part) in parts.iter().enumerate() {
        let table = cur.as_table_mut().ok_or_else(|| {
            ConfigError::Validation(vec![ValidationIssue {
                key: key.into(),
                message: format!("'{}' is not a table", parts[..i].join(".")),
            }])
        })?;
        if i + 1 == parts.len() {
            table.insert((*part).into(), v);
            return Ok(());
        }
        cur = table
            .entry(*part)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    Ok(())
}

/// Applies `SACSIM_a__b=v` style overrides; `__` separates key levels.
pub fn apply_env_overrides<I>(value: &mut toml::Value, env: I) -> Result<(), ConfigError>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut pairs: Vec<(String, String)> = env
        .into_iter()
        .filter(|(k, _)| k.starts_with(ENV_PREFIX))
        .collect();
    pairs.sort();
    for (k, v) in pairs {
        let key = k[ENV_PREFIX.len()..].to_lowercase().replace("__", ".");
        set_path(value, &key, parse_literal(&v))?;
    }
    Ok(())
}

struct Issues(Vec<ValidationIssue>);

impl Issues {
    fn push(&mut self, key: &str, message: impl Into<String>) {
        self.0.push(ValidationIssue {
            key: key.into(),
            message: message.into(),
        });
    }

    fn positive(&mut self, key: &str, v: f64) {
        if !(v > 0.0 && v.is_finite()) {
            self.push(key, format!("must be positive, got {v}"));
        }
    }

    fn non_negative(&mut self, key: &str, v: f64) {
        if !(v >= 0.0 && v.is_finite()) {
            self.push(key, format!("must be >= 0, got {v}"));
        }
    }

    fn count(&mut self, key: &str, v: i64, min: i64) -> u64 {
        if v < min {
            self.push(key, format!("must be >= {min}, got {v}"));
            min.max(0) as u64
        } else {
            v as u64
        }
    }
}

fn mobility_from(v: Option<toml::Value>, key: &str, issues: &mut Issues) -> (MobilityModel, Option<SimTime>) {
    let Some(toml::Value::Table(mut t)) = v else {
        return (MobilityModel::Static, None);
    };
    let tick = match t.remove("tick_ms") {
        None => None,
        Some(x) => match x.as_float().or_else(|| x.as_integer().map(|i| i as f64)) {
            Some(ms) if ms > 0.0 => Some(SimTime::from_millis_f64(ms)),
            Some(ms) if ms == 0.0 => None,
            _ => {
                issues.push(&format!("{key}.tick_ms"), "must be a non-negative number");
                None
            }
        },
    };
    if !t.contains_key("model") {
        t.insert("model".into(), toml::Value::String("static".into()));
    }
    let model = match MobilityModel::deserialize(toml::Value::Table(t)) {
        Ok(m) => m,
        Err(e) => {
            issues.push(key, e.to_string());
            MobilityModel::Static
        }
    };
    if let Err(e) = model.validate() {
        issues.push(&format!("{key}.speed_mps"), e.to_string());
    }
    (model, tick)
}

/// Builds a validated config from an already-parsed TOML tree. Relative
/// paths resolve against `base_dir`.
pub fn resolve(value: toml::Value, base_dir: &Path, origin: &str) -> Result<RunConfig, ConfigError> {
    let raw = RawConfig::deserialize(value).map_err(|e| ConfigError::Parse {
        path: origin.into(),
        message: e.to_string(),
    })?;
    let mut is = Issues(Vec::new());

    let scenario_path = base_dir.join(&raw.scenario);
    let scenario = match Scenario::load(&scenario_path) {
        Ok(mut s) => {
            if let Some(p) = raw.channel.tx_power_dbm {
                s.tx_power_dbm = p;
            }
            if let Some(n) = raw.channel.noise_dbm {
                s.noise_dbm = n;
            }
            if !s.tx_power_dbm.is_finite() {
                is.push("channel.tx_power_dbm", "must be finite");
            }
            if !s.noise_dbm.is_finite() {
                is.push("channel.noise_dbm", "must be finite");
            }
            Some(s)
        }
        Err(ScenarioError::Io { path, .. }) => {
            is.push("scenario", format!("file not found: {path}"));
            None
        }
        Err(e) => {
            is.push("scenario", e.to_string());
            None
        }
    };

    let mcs_table = match &raw.mcs_table {
        None => Some(McsTable::builtin()),
        Some(p) => match McsTable::load(&base_dir.join(p)) {
            Ok(t) => Some(t),
            Err(e) => {
                is.push("mcs_table", e.to_string());
                None
            }
        },
    };

    // Isac.
    let i = &raw.isac;
    let error_radius_m = i.error_radius_m.unwrap_or(0.0);
    is.non_negative("isac.error_radius_m", error_radius_m);
    let period_ms = i.sensing_period_ms.unwrap_or(10.0);
    is.positive("isac.sensing_period_ms", period_ms);
    let latency_ms = i.sensing_latency_ms.unwrap_or(0.0);
    is.non_negative("isac.sensing_latency_ms", latency_ms);
    let airtime_us = i.sensing_airtime_us.unwrap_or(0.0);
    is.non_negative("isac.sensing_airtime_us", airtime_us);
    let isac = IsacParams {
        error_radius_m,
        sensing_period: SimTime::from_millis_f64(period_ms),
        sensing_latency: SimTime::from_millis_f64(latency_ms),
        intra_ppdu_switch: i.intra_ppdu_switch.unwrap_or(false),
        sensing_recovery: i.sensing_recovery.unwrap_or(false),
        sensing_airtime: SimTime::from_micros_f64(airtime_us),
    };
    let scheme = match raw.scheme.as_str() {
        "baseline" => SchemeKind::BaselineBeamtracking,
        "isac" => SchemeKind::Isac(isac),
        "oracle" => SchemeKind::Oracle,
        other => {
            is.push("scheme", format!("unknown scheme '{other}' (baseline | isac | oracle)"));
            SchemeKind::Oracle
        }
    };

    // MAC.
    let d = MacConfig::default();
    let m = &raw.mac;
    let us = |key: &str, v: Option<f64>, dflt: SimTime, is: &mut Issues| {
        v.map_or(dflt, |x| {
            is.positive(key, x);
            SimTime::from_micros_f64(x)
        })
    };
    let ms = |key: &str, v: Option<f64>, dflt: SimTime, is: &mut Issues| {
        v.map_or(dflt, |x| {
            is.positive(key, x);
            SimTime::from_millis_f64(x)
        })
    };
    let mac = MacConfig {
        aggregation_size: is.count("mac.aggregation_size", m.aggregation_size.unwrap_or(1), 1) as usize,
        max_retries: is.count("mac.max_retries", m.max_retries.unwrap_or(d.max_retries as i64), 0) as u32,
        max_queue_delay: ms("mac.max_queue_delay_ms", m.max_queue_delay_ms, d.max_queue_delay, &mut is),
        sifs: us("mac.sifs_us", m.sifs_us, d.sifs, &mut is),
        difs: us("mac.difs_us", m.difs_us, d.difs, &mut is),
        ack_duration: us("mac.ack_duration_us", m.ack_duration_us, d.ack_duration, &mut is),
        preamble_duration: us("mac.preamble_us", m.preamble_us, d.preamble_duration, &mut is),
        beacon_interval: ms("mac.beacon_interval_ms", m.beacon_interval_ms, d.beacon_interval, &mut is),
        sls_airtime: ms("mac.sls_airtime_ms", m.sls_airtime_ms, d.sls_airtime, &mut is),
        trn_unit_duration: us("mac.trn_unit_us", m.trn_unit_us, d.trn_unit_duration, &mut is),
        failure_threshold: is.count(
            "mac.failure_threshold",
            m.failure_threshold.unwrap_or(d.failure_threshold as i64),
            1,
        ) as u32,
        mcs: {
            let v = m.mcs.unwrap_or(d.mcs as i64);
            if !(0..=255).contains(&v) {
                is.push("mac.mcs", format!("{v} is not an MCS index"));
                d.mcs
            } else {
                v as u8
            }
        },
        msdu_size_bits: 0,
    };
    if let Some(t) = &mcs_table {
        if t.get(mac.mcs).is_err() {
            is.push("mac.mcs", format!("MCS {} is not in the table", mac.mcs));
        }
    }

    let phy = PhyConfig {
        sync_threshold_db: raw.phy.sync_threshold_db.unwrap_or(DEFAULT_SYNC_THRESHOLD_DB),
    };
    if !phy.sync_threshold_db.is_finite() {
        is.push("phy.sync_threshold_db", "must be finite");
    }

    // Antennas.
    let a = &raw.antenna;
    let n = is.count("antenna.num_sectors", a.num_sectors.unwrap_or(18), 1).max(1) as usize;
    let main = a.mainlobe_gain_db.unwrap_or(15.0);
    let side = a.sidelobe_gain_db.unwrap_or(-5.0);
    if !(side < main) {
        is.push("antenna.sidelobe_gain_db", format!("must be below mainlobe_gain_db ({main})"));
    }
    let mut ap_antenna = AntennaModel::new(n, main, side);
    ap_antenna.orientation_deg = a.ap_orientation_deg.unwrap_or(0.0);
    let mut sta_antenna = AntennaModel::new(n, main, side);
    sta_antenna.orientation_deg = a.sta_orientation_deg.unwrap_or(180.0 / n as f64);

    // Traffic.
    let t = raw.traffic.unwrap_or(RawTraffic {
        rate_mbps: None,
        msdu_size_bits: None,
        arrival: None,
    });
    let rate = t.rate_mbps.unwrap_or(10.0);
    is.non_negative("traffic.rate_mbps", rate);
    let bits = is.count("traffic.msdu_size_bits", t.msdu_size_bits.unwrap_or(12_000), 1);
    let traffic = TrafficConfig {
        rate_mbps: rate,
        msdu_size_bits: bits,
        arrival: t.arrival.unwrap_or(crate::traffic::ArrivalKind::Cbr),
    };
    let mac = MacConfig {
        msdu_size_bits: bits,
        ..mac
    };

    let (sta_mobility, mobility_tick) = mobility_from(raw.mobility, "mobility", &mut is);
    let (ap_mobility, _) = mobility_from(raw.ap_mobility, "ap_mobility", &mut is);

    let duration_s = raw.duration_s.unwrap_or(30.0);
    let warmup_s = raw.warmup_s.unwrap_or(1.0);
    is.positive("duration_s", duration_s);
    is.non_negative("warmup_s", warmup_s);
    if !(duration_s > warmup_s) {
        is.push("duration_s", format!("must exceed warmup_s ({warmup_s})"));
    }

    if !is.0.is_empty() {
        return Err(ConfigError::Validation(is.0));
    }
    Ok(RunConfig {
        scenario_path,
        scenario: scenario.expect("validated"),
        scheme,
        mac,
        phy,
        mcs_table: mcs_table.expect("validated"),
        ap_antenna,
        sta_antenna,
        traffic,
        sta_mobility,
        ap_mobility,
        mobility_tick,
        duration: SimTime::from_secs_f64(duration_s),
        warmup: SimTime::from_secs_f64(warmup_s),
        master_seed: raw.master_seed.unwrap_or(1),
    })
}

impl RunConfig {
    /// Canonical JSON of every semantic field (paths excluded).
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serialises")
    }
}
