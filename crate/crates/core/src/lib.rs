//! Energy minimisation for wirelessly powered federated learning over a
//! STAR-RIS with NOMA uplink and downlink.

pub mod alloc;
pub mod beamphase;
pub mod checks;
pub mod channel;
pub mod config;
pub mod error;
pub mod kernel;
pub mod sim;

pub use config::{Scenario, SurfaceMode, SystemConfig};
pub use error::{Error, Result};
