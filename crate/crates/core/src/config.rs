//! Pipeline configuration.
//!
//! Keys follow the parameter names of the original system (`min_disp`,
//! `dep_dist`, `alpha_r`, ...) so existing tuning notes carry over.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aoa::{AnchorRingConfig, GateConfig};
use crate::ekf::{MotionNoise, ObservationNoise};
use crate::geometry::Pose2D;
use crate::radar::{RadarProcessing, RadarSensorConfig};
use crate::window::WindowConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinDisp {
    pub trans: f64,
    pub rot: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinVel {
    pub trans: f64,
    pub rot: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DbscanParams {
    pub eps: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TagInitConfig {
    /// Readings gathered while halted before initializing.
    pub samples: usize,
    /// Minimum readings left after the spread filter.
    pub min_survivors: usize,
    /// Give up on a tag after this many seconds without enough samples.
    pub timeout: f64,
    /// Variance floor for the initial range/bearing spread.
    pub min_variance: f64,
}

impl Default for TagInitConfig {
    fn default() -> Self {
        Self {
            samples: 30,
            min_survivors: 5,
            timeout: 10.0,
            min_variance: 1e-6,
        }
    }
}

/// Radar sensor mounts and which pairs are trilaterated together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RigConfig {
    pub sensors: Vec<RadarSensorConfig>,
    pub pairs: Vec<[u32; 2]>,
}

impl Default for RigConfig {
    fn default() -> Self {
        let fov_halfangle = PI / 4.0;
        let sensor = |id, x, y, theta| RadarSensorConfig {
            id,
            mount: Pose2D::new(x, y, theta),
            fov_halfangle,
            min_range: 0.3,
            max_range: 3.0,
        };
        Self {
            sensors: vec![
                sensor(0, 0.1, 0.15, PI / 2.0),
                sensor(1, -0.1, 0.15, PI / 2.0),
                sensor(2, 0.1, -0.15, -PI / 2.0),
                sensor(3, -0.1, -0.15, -PI / 2.0),
            ],
            pairs: vec![[0, 1], [2, 3]],
        }
    }
}

impl RigConfig {
    pub fn sensor(&self, id: u32) -> Option<&RadarSensorConfig> {
        self.sensors.iter().find(|s| s.id == id)
    }

    pub fn validate(&self) -> Result<(), String> {
        for (i, s) in self.sensors.iter().enumerate() {
            s.validate()?;
            if self.sensors[..i].iter().any(|o| o.id == s.id) {
                return Err(format!("rig: duplicate sensor id {}", s.id));
            }
        }
        for [a, b] in &self.pairs {
            let (Some(sa), Some(sb)) = (self.sensor(*a), self.sensor(*b)) else {
                return Err(format!("rig: pair ({a}, {b}) names an unknown sensor"));
            };
            if sa.mount.distance_to(&sb.mount) < 1e-9 {
                return Err(format!("rig: sensors {a} and {b} are coincident"));
            }
        }
        Ok(())
    }
}

/// Every tunable of the pipeline in one record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriverConfig {
    pub n: usize,
    pub m1: usize,
    pub m2: usize,
    pub w: usize,
    pub min_disp: MinDisp,
    #[serde(rename = "N_A")]
    pub n_a: usize,
    /// Anchor ring radius.
    pub r: f64,
    /// Anchor field of view, radians.
    pub phi_fov: f64,
    pub det_range: Range,
    pub min_vel: MinVel,
    pub dep_dist: f64,
    pub dbscan_t: DbscanParams,
    pub dbscan_r: DbscanParams,
    pub r1: f64,
    pub r2: f64,
    #[serde(rename = "R")]
    pub motion_noise: MotionNoise,
    #[serde(rename = "Q_t")]
    pub q_t: ObservationNoise,
    #[serde(rename = "Q_r")]
    pub q_r: ObservationNoise,
    pub alpha_t: f64,
    pub alpha_r: f64,
    pub rssi_threshold: f64,
    pub tag_init: TagInitConfig,
    /// Accumulation instants a tag sample stays buffered.
    pub tag_horizon: usize,
    pub radar: RadarProcessing,
    pub rig: RigConfig,
    /// Emit a state snapshot every this many SLAM steps (0: final only).
    pub snapshot_every: usize,
}

impl Default for DriverConfig {
    fn default() -> Self {
        Self {
            n: 50,
            m1: 150,
            m2: 50,
            w: 2,
            min_disp: MinDisp {
                trans: 0.005,
                rot: 2.5e-3,
            },
            n_a: 4,
            r: 0.10,
            phi_fov: 150f64.to_radians(),
            det_range: Range { min: 1.5, max: 10.0 },
            min_vel: MinVel { trans: 0.03, rot: 0.01 },
            dep_dist: 1.0,
            dbscan_t: DbscanParams { eps: 0.05, n: 10 },
            dbscan_r: DbscanParams { eps: 0.20, n: 10 },
            r1: 0.30,
            r2: 0.15,
            motion_noise: MotionNoise::default(),
            q_t: ObservationNoise::tag_default(),
            q_r: ObservationNoise::radar_default(),
            alpha_t: 4.0,
            alpha_r: 1.0,
            rssi_threshold: 6.0,
            tag_init: TagInitConfig::default(),
            tag_horizon: 250,
            radar: RadarProcessing::default(),
            rig: RigConfig::default(),
            snapshot_every: 100,
        }
    }
}

impl DriverConfig {
    pub fn window(&self) -> WindowConfig {
        WindowConfig {
            n: self.n,
            m1: self.m1,
            m2: self.m2,
            w: self.w,
            min_disp_trans: self.min_disp.trans,
            min_disp_rot: self.min_disp.rot,
            r1: self.r1,
            r2: self.r2,
            dbscan_eps: self.dbscan_r.eps,
            dbscan_min_samples: self.dbscan_r.n,
        }
    }

    pub fn ring(&self) -> AnchorRingConfig {
        let mut ring = AnchorRingConfig::equispaced(self.n_a, self.r, self.phi_fov);
        ring.det_range_min = self.det_range.min;
        ring.det_range_max = self.det_range.max;
        ring
    }

    pub fn gates(&self) -> GateConfig {
        GateConfig {
            min_vel_trans: self.min_vel.trans,
            min_vel_rot: self.min_vel.rot,
            rssi_threshold: self.rssi_threshold,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        self.window().validate()?;
        if self.n_a == 0 {
            return Err("N_A must be at least 1".into());
        }
        self.ring().validate()?;
        self.radar.validate()?;
        self.rig.validate()?;
        let nonneg = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(format!("{name} must be finite and non-negative"))
            }
        };
        nonneg("dep_dist", self.dep_dist)?;
        nonneg("min_vel.trans", self.min_vel.trans)?;
        nonneg("min_vel.rot", self.min_vel.rot)?;
        nonneg("R.sigma_x", self.motion_noise.sigma_x)?;
        nonneg("R.sigma_y", self.motion_noise.sigma_y)?;
        nonneg("R.sigma_theta", self.motion_noise.sigma_theta)?;
        for (name, q) in [("Q_t", self.q_t), ("Q_r", self.q_r)] {
            if !(q.sigma_r > 0.0 && q.sigma_phi2 > 0.0) {
                return Err(format!("{name} entries must be positive"));
            }
        }
        if !(self.alpha_t > 0.0 && self.alpha_r > 0.0) {
            return Err("alpha_t and alpha_r must be positive".into());
        }
        if !(self.dbscan_t.eps > 0.0) || self.dbscan_t.n == 0 {
            return Err("dbscan_t needs eps > 0 and n >= 1".into());
        }
        if self.tag_init.samples == 0 || self.tag_init.min_survivors == 0 {
            return Err("tag_init sample counts must be at least 1".into());
        }
        if self.tag_horizon == 0 {
            return Err("tag_horizon must be at least 1".into());
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}
