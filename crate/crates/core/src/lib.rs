//! Single-snapshot downlink localization and mapping for a mmWave MISO link.
//!
//! A base station with a uniform linear array broadcasts OFDM pilots through a
//! fixed set of beams; a single-antenna mobile receives the line-of-sight path
//! plus single-bounce reflections off point scatterers. From one snapshot of
//! the frequency-domain observations the crate
//!
//! * synthesizes observations ([`scenario`], [`signal`]),
//! * computes Fisher information and Cramér-Rao bounds in the channel and the
//!   position domain ([`fim`]),
//! * estimates angles of departure and delays with a compressed joint
//!   maximum-likelihood estimator initialized by successive single-path
//!   extraction ([`estimator`]),
//! * turns the estimates into a mobile position and a scatterer map
//!   ([`locmap`]),
//! * and runs Monte Carlo sweeps comparing estimator RMSE with the bounds
//!   ([`harness`]).
//!
//! All core math works in a frame with the base station at the origin. The
//! scenario layer translates world coordinates in and out.
//!
//! ```
//! use miso_locmap::{scenario::ScenarioConfig, fim};
//!
//! let cfg = ScenarioConfig::default();
//! let bounds = fim::bounds_for_config(&cfg).unwrap();
//! assert!(bounds.peb > 0.0);
//! ```

pub mod error;
pub mod estimator;
pub mod fim;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod locmap;
pub mod nelder_mead;
pub mod scenario;
pub mod signal;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Speed of light in vacuum, m/s (exact SI value).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// 2-D point or displacement in meters.
pub type Vec2 = nalgebra::Vector2<f64>;
