//! Cost of dedicated sensing bursts on the shared medium.

mod common;

use common::{config_path, env};
use sacsim::config::{load_config_with_env, ConfigError};
use sacsim::experiment::run;
use sacsim::kernel::SimTime;

fn isac(airtime_us: &str) -> sacsim::config::RunConfig {
    let e = env(&[
        ("SACSIM_DURATION_S", "3.0"),
        ("SACSIM_ISAC__SENSING_AIRTIME_US", airtime_us),
        ("SACSIM_ISAC__SENSING_PERIOD_MS", "1.0"),
        // CBR arrivals can stay phase-locked clear of the bursts.
        ("SACSIM_TRAFFIC__ARRIVAL", "poisson"),
    ]);
    load_config_with_env(&config_path("living_room.toml"), e).unwrap()
}

#[test]
fn zero_airtime_is_the_default() {
    let e = env(&[
        ("SACSIM_DURATION_S", "3.0"),
        ("SACSIM_ISAC__SENSING_PERIOD_MS", "1.0"),
        ("SACSIM_TRAFFIC__ARRIVAL", "poisson"),
    ]);
    let plain = load_config_with_env(&config_path("living_room.toml"), e).unwrap();
    let zero = isac("0.0");
    assert_eq!(plain, zero);
    let out = run(&zero, 2, true).unwrap();
    assert_eq!(out.stats.sensing_airtime, SimTime::ZERO);
}

#[test]
fn bursts_take_airtime_and_add_delay() {
    let free = run(&isac("0.0"), 2, true).unwrap();
    let paid = run(&isac("50.0"), 2, true).unwrap();
    let ticks = 3_000;
    assert!(paid.stats.sensing_airtime > SimTime::ZERO);
    assert!(paid.stats.sensing_airtime <= SimTime::from_micros(50).mul(ticks));
    // At 10 Mbps the medium is idle most of the time, so most bursts pay.
    assert!(paid.stats.sensing_airtime >= SimTime::from_micros(50).mul(ticks / 2));
    assert!(paid.record.mean_delay_ms.unwrap() > free.record.mean_delay_ms.unwrap());
    assert_eq!(paid.record.arrived, free.record.arrived);
}

#[test]
fn negative_airtime_is_rejected_by_key() {
    let e = env(&[("SACSIM_ISAC__SENSING_AIRTIME_US", "-1.0")]);
    match load_config_with_env(&config_path("living_room.toml"), e) {
        Err(ConfigError::Validation(v)) => assert!(v.iter().any(|i| i.key == "isac.sensing_airtime_us")),
        other => panic!("expected a validation error, got {other:?}"),
    }
}
