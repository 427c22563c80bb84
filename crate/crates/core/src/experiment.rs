//! Batch front end: single runs, parameter sweeps and result files.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{apply_env_overrides, read_toml, resolve, set_path, ConfigError, RunConfig};
use crate::kpi::KpiRecord;
use crate::mobility::MobilityError;
use crate::sim::{RunOutput, SimError, SimParams, Simulation};
use crate::world::World;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Mobility(#[from] MobilityError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("sweep spec {path}: {message}")]
    Spec { path: String, message: String },
    #[error("nothing to write: the result table is empty")]
    EmptyTable,
    #[error("{} of {total} sweep points failed:\n{}", failures.len(), failures.iter().map(|f| format!("  {f}")).collect::<Vec<_>>().join("\n"))]
    Partial {
        total: usize,
        failures: Vec<PointFailure>,
    },
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

pub fn build_world(cfg: &RunConfig, seed: u64) -> Result<World, MobilityError> {
    World::new(
        cfg.scenario.clone(),
        cfg.sta_mobility.clone(),
        cfg.ap_mobility.clone(),
        cfg.ap_antenna.clone(),
        cfg.sta_antenna.clone(),
        seed,
    )
}

pub fn sim_params(cfg: &RunConfig, seed: u64, check_invariants: bool) -> SimParams {
    SimParams {
        mac: cfg.mac.clone(),
        phy: cfg.phy.clone(),
        mcs_table: cfg.mcs_table.clone(),
        scheme: cfg.scheme,
        traffic: cfg.traffic,
        duration: cfg.duration,
        warmup: cfg.warmup,
        seed,
        mobility_tick: cfg.mobility_tick,
        check_invariants,
    }
}

/// Runs one configuration to completion with the given master seed.
pub fn run(cfg: &RunConfig, seed: u64, check_invariants: bool) -> Result<RunOutput, ExperimentError> {
    let world = build_world(cfg, seed)?;
    let sim = Simulation::new(world, sim_params(cfg, seed, check_invariants))?;
    Ok(sim.run()?)
}

/// One row of the result table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub scenario: String,
    pub scheme: String,
    pub axis: String,
    pub axis_value: String,
    pub seed: u64,
    #[serde(flatten)]
    pub record: KpiRecord,
}

pub const CSV_HEADER: [&str; 14] = [
    "scenario",
    "scheme",
    "axis",
    "axis_value",
    "seed",
    "throughput_mbps",
    "mean_delay_ms",
    "drop_rate",
    "arrived",
    "delivered",
    "dropped",
    "retx",
    "preamble_fails",
    "retrains",
];

impl ResultRow {
    fn csv_fields(&self) -> [String; 14] {
        let r = &self.record;
        [
            self.scenario.clone(),
            self.scheme.clone(),
            self.axis.clone(),
            self.axis_value.clone(),
            self.seed.to_string(),
            r.throughput_mbps.to_string(),
            r.mean_delay_ms.map_or(String::new(), |d| d.to_string()),
            r.drop_rate.to_string(),
            r.arrived.to_string(),
            r.delivered.to_string(),
            r.dropped.to_string(),
            r.retransmissions.to_string(),
            r.preamble_failures.to_string(),
            r.retrains.to_string(),
        ]
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    base: String,
    axis: String,
    values: Vec<toml::Value>,
    seeds: Vec<u64>,
    schemes: Vec<toml::Table>,
    #[serde(default)]
    set: toml::Table,
}

/// A parameter sweep: `values × schemes × seeds` over one config key.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    /// Base config tree, before per-point overrides.
    pub base: toml::Value,
    /// Directory relative paths in the base config resolve against.
    pub base_dir: PathBuf,
    pub origin: String,
    pub axis: String,
    pub values: Vec<toml::Value>,
    pub seeds: Vec<u64>,
    /// Each entry holds `scheme` plus optional sensing keys.
    pub schemes: Vec<toml::Table>,
    /// Dotted-key overrides applied to every point before the axis value.
    pub set: toml::Table,
}

/// One (value, scheme) cell of a sweep; seeds run inside it.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub axis_value: String,
    pub config: RunConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointFailure {
    pub axis_value: String,
    pub scheme: String,
    pub seed: u64,
    pub message: String,
}

impl std::fmt::Display for PointFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "value {} scheme {} seed {}: {}",
            self.axis_value, self.scheme, self.seed, self.message
        )
    }
}

/// Axis aliases that name a key in a different section.
fn canonical_axis(axis: &str) -> &str {
    match axis {
        "scheme.error_radius_m" => "isac.error_radius_m",
        other => other,
    }
}

fn display_value(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        toml::Value::Float(f) => f.to_string(),
        other => other.to_string(),
    }
}

impl SweepSpec {
    /// Reads a spec file. The base config path is relative to the spec, and
    /// `SACSIM_*` variables in `env` override base keys.
    pub fn load<I>(path: &Path, env: I) -> Result<SweepSpec, ExperimentError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let spec_err = |message: String| ExperimentError::Spec {
            path: path.display().to_string(),
            message,
        };
        let text = fs::read_to_string(path).map_err(|e| spec_err(e.to_string()))?;
        let raw: RawSpec = toml::from_str(&text).map_err(|e| spec_err(e.to_string()))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let base_path = dir.join(&raw.base);
        let mut base = read_toml(&base_path)?;
        apply_env_overrides(&mut base, env)?;
        let base_dir = base_path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let spec = SweepSpec {
            base,
            base_dir,
            origin: base_path.display().to_string(),
            axis: raw.axis,
            values: raw.values,
            seeds: raw.seeds,
            schemes: raw.schemes,
            set: raw.set,
        };
        spec.check().map_err(spec_err)?;
        Ok(spec)
    }

    fn check(&self) -> Result<(), String> {
        if self.values.is_empty() {
            return Err("values must not be empty".into());
        }
        if self.seeds.is_empty() {
            return Err("seeds must not be empty".into());
        }
        if self.schemes.is_empty() {
            return Err("schemes must not be empty".into());
        }
        for (i, s) in self.schemes.iter().enumerate() {
            if !matches!(s.get("scheme"), Some(toml::Value::String(_))) {
                return Err(format!("schemes[{i}] needs a 'scheme' string"));
            }
        }
        Ok(())
    }

    /// Resolves every (value, scheme) cell in row order. Any invalid cell
    /// fails the whole spec before anything runs.
    pub fn points(&self) -> Result<Vec<SweepPoint>, ExperimentError> {
        let axis = canonical_axis(&self.axis);
        let mut out = Vec::with_capacity(self.values.len() * self.schemes.len());
        let mut issues = Vec::new();
        for value in &self.values {
            for scheme in &self.schemes {
                let mut tree = self.base.clone();
                for (k, v) in &self.set {
                    set_path(&mut tree, canonical_axis(k), v.clone())?;
                }
                for (k, v) in scheme {
                    let key = if k == "scheme" {
                        "scheme".to_string()
                    } else {
                        format!("isac.{k}")
                    };
                    set_path(&mut tree, &key, v.clone())?;
                }
                set_path(&mut tree, axis, value.clone())?;
                match resolve(tree, &self.base_dir, &self.origin) {
                    Ok(config) => out.push(SweepPoint {
                        axis_value: display_value(value),
                        config,
                    }),
                    Err(ConfigError::Validation(v)) => issues.extend(v),
                    Err(e) => return Err(e.into()),
                }
            }
        }
        if !issues.is_empty() {
            issues.dedup();
            return Err(ConfigError::Validation(issues).into());
        }
        Ok(out)
    }

    /// Number of rows the sweep produces.
    pub fn row_count(&self) -> usize {
        self.values.len() * self.schemes.len() * self.seeds.len()
    }
}

/// Rows of a finished sweep plus the points that failed.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub rows: Vec<ResultRow>,
    pub failures: Vec<PointFailure>,
}

/// Runs every point of the sweep on `workers` threads. Rows come back in
/// value, scheme, seed order whatever the thread count.
pub fn sweep(spec: &SweepSpec, workers: usize) -> Result<SweepOutcome, ExperimentError> {
    let points = spec.points()?;
    let jobs: Vec<(usize, u64)> = (0..points.len())
        .flat_map(|p| spec.seeds.iter().map(move |&s| (p, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| ExperimentError::Spec {
            path: spec.origin.clone(),
            message: format!("thread pool: {e}"),
        })?;
    let results: Vec<Result<RunOutput, ExperimentError>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(p, seed)| run(&points[p].config, seed, false))
            .collect()
    });
    let mut rows = Vec::with_capacity(jobs.len());
    let mut failures = Vec::new();
    for (&(p, seed), res) in jobs.iter().zip(results) {
        let point = &points[p];
        let scheme = point.config.scheme.label();
        match res {
            Ok(out) => rows.push(ResultRow {
                scenario: point.config.scenario.kind.label().into(),
                scheme,
                axis: spec.axis.clone(),
                axis_value: point.axis_value.clone(),
                seed,
                record: out.record,
            }),
            Err(e) => failures.push(PointFailure {
                axis_value: point.axis_value.clone(),
                scheme,
                seed,
                message: e.to_string(),
            }),
        }
    }
    Ok(SweepOutcome { rows, failures })
}

/// Provenance written next to the results.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub tool_version: String,
    /// SHA-256 over the canonical JSON of every resolved point config.
    pub config_hash: String,
    pub axis: String,
    pub seeds: Vec<u64>,
    pub points: Vec<ManifestPoint>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifestPoint {
    pub axis_value: String,
    pub scheme: String,
    pub config_hash: String,
}

pub fn config_hash(cfg: &RunConfig) -> String {
    hex::encode(Sha256::digest(cfg.canonical_json().as_bytes()))
}

pub fn manifest(axis: &str, seeds: &[u64], configs: &[(String, &RunConfig)]) -> Manifest {
    let mut all = Sha256::new();
    all.update(axis.as_bytes());
    let points = configs
        .iter()
        .map(|(v, c)| {
            all.update(c.canonical_json().as_bytes());
            ManifestPoint {
                axis_value: v.clone(),
                scheme: c.scheme.label(),
                config_hash: config_hash(c),
            }
        })
        .collect();
    Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        config_hash: hex::encode(all.finalize()),
        axis: axis.into(),
        seeds: seeds.to_vec(),
        points,
    }
}

pub fn csv_string(rows: &[ResultRow]) -> Result<String, ExperimentError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_err = |e: csv::Error| ExperimentError::Io {
        path: "results.csv".into(),
        message: e.to_string(),
    };
    w.write_record(CSV_HEADER).map_err(to_err)?;
    for r in rows {
        w.write_record(r.csv_fields()).map_err(to_err)?;
    }
    let bytes = w.into_inner().map_err(|e| ExperimentError::Io {
        path: "results.csv".into(),
        message: e.to_string(),
    })?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Writes `results.csv`, `results.json` and `manifest.json` into `out_dir`.
pub fn write_results(rows: &[ResultRow], manifest: &Manifest, out_dir: &Path) -> Result<(), ExperimentError> {
    if rows.is_empty() {
        return Err(ExperimentError::EmptyTable);
    }
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let write = |name: &str, body: String| {
        let p = out_dir.join(name);
        fs::write(&p, body).map_err(|e| io_err(&p, e))
    };
    write("results.csv", csv_string(rows)?)?;
    let json = serde_json::to_string_pretty(rows).expect("rows serialise");
    write("results.json", json + "\n")?;
    let m = serde_json::to_string_pretty(manifest).expect("manifest serialises");
    write("manifest.json", m + "\n")?;
    Ok(())
}
