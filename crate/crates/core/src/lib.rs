//! Landmark EKF-SLAM for a ground robot carrying UWB radar sensors and a UWB
//! angle-of-arrival anchor ring, together with a seeded simulator and
//! evaluation tooling.
//!
//! Data flows from [`radar`] (per-frame ranging and trilateration) through
//! [`window`] (moving-window feature extraction) and from [`aoa`] (gated tag
//! readings) into [`ekf`]. [`driver`] sequences all of it; [`sim`],
//! [`harness`] and [`eval`] close the loop for experiments.

pub mod aoa;
pub mod config;
pub mod dbscan;
pub mod driver;
pub mod ekf;
pub mod eval;
pub mod geometry;
pub mod harness;
pub mod log;
pub mod radar;
pub mod scenario;
pub mod sim;
pub mod window;

pub use config::DriverConfig;
pub use driver::{Driver, Mode};
pub use geometry::Pose2D;
pub use scenario::Scenario;
