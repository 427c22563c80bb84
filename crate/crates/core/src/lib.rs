//! Discrete-event simulator of a single-BSS mmWave WLAN comparing
//! beamtracking, sensing-assisted and genie beam management.

pub mod antenna;
pub mod channel;
pub mod config;
pub mod experiment;
pub mod geometry;
pub mod kernel;
pub mod mac;
pub mod mobility;
pub mod phy;
pub mod kpi;
pub mod schemes;
pub mod sim;
pub mod traffic;
pub mod world;
