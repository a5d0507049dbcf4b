use serde::{Deserialize, Serialize};

/// Odometry corruption applied to every commanded increment.
///
/// Translation becomes `trans·(1 + trans_bias) + N(0, trans_sigma_per_m²·trans)`,
/// so `trans_sigma_per_m` is the standard deviation after one metre. Rotations
/// are scaled by `1 + rot_bias` with variance `rot_sigma_per_rad²·|rot|`, and the
/// heading picks up `heading_bias_per_m` radians per metre driven plus a random
/// walk with standard deviation `heading_sigma_per_m` after one metre.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct OdomNoise {
    pub trans_sigma_per_m: f64,
    pub rot_sigma_per_rad: f64,
    pub heading_sigma_per_m: f64,
    pub trans_bias: f64,
    pub rot_bias: f64,
    pub heading_bias_per_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadarNoise {
    /// Additive per-bin amplitude noise.
    pub amplitude_sigma: f64,
    /// Per-return range jitter, metres.
    pub range_jitter_sigma: f64,
    /// ADC quantization step; 0 disables.
    pub quantization: f64,
    /// Return width in bins (standard deviation).
    pub bump_sigma_bins: f64,
}

impl Default for RadarNoise {
    fn default() -> Self {
        Self {
            amplitude_sigma: 0.0,
            range_jitter_sigma: 0.0,
            quantization: 1e-4,
            bump_sigma_bins: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct AoaNoise {
    pub range_sigma: f64,
    pub bearing_sigma: f64,
}

/// Spurious AOA readings produced near reflective structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GhostModel {
    /// Probability per candidate reading while the robot is near a wall.
    pub p_ghost: f64,
    /// Robot-to-wall distance under which ghosts can occur.
    pub near_wall: f64,
    /// Standard deviation of the ghost's bearing offset.
    pub bearing_sigma: f64,
    /// Range offset magnitude is drawn uniformly from this interval.
    pub range_offset: [f64; 2],
}

impl Default for GhostModel {
    fn default() -> Self {
        Self {
            p_ghost: 0.0,
            near_wall: 1.5,
            bearing_sigma: 0.35,
            range_offset: [0.5, 1.0],
        }
    }
}

/// RSSI levels. LOS readings get `rx − fp` in `[0, los_delta_max]`, NLOS
/// readings at least `nlos_delta_min`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RssiModel {
    pub rx_base: f64,
    pub los_delta_max: f64,
    pub nlos_delta_min: f64,
    pub nlos_delta_spread: f64,
}

impl Default for RssiModel {
    fn default() -> Self {
        Self {
            rx_base: -78.0,
            los_delta_max: 5.5,
            nlos_delta_min: 6.5,
            nlos_delta_spread: 6.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub odom: OdomNoise,
    pub radar: RadarNoise,
    pub aoa: AoaNoise,
    pub ghost: GhostModel,
    pub rssi: RssiModel,
}

impl NoiseConfig {
    /// Every noise source and the ghost model off.
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<(), String> {
        let sigmas = [
            self.odom.trans_sigma_per_m,
            self.odom.rot_sigma_per_rad,
            self.odom.heading_sigma_per_m,
            self.radar.amplitude_sigma,
            self.radar.range_jitter_sigma,
            self.radar.quantization,
            self.aoa.range_sigma,
            self.aoa.bearing_sigma,
            self.ghost.bearing_sigma,
            self.ghost.near_wall,
        ];
        if sigmas.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err("noise: standard deviations must be finite and non-negative".into());
        }
        if !(self.radar.bump_sigma_bins > 0.0) {
            return Err("noise.radar.bump_sigma_bins must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.ghost.p_ghost) {
            return Err("noise.ghost.p_ghost must lie in [0, 1]".into());
        }
        let [lo, hi] = self.ghost.range_offset;
        if !(lo >= 0.0 && lo <= hi) {
            return Err("noise.ghost.range_offset must satisfy 0 <= lo <= hi".into());
        }
        if !(self.rssi.los_delta_max >= 0.0 && self.rssi.nlos_delta_min > self.rssi.los_delta_max) {
            return Err("noise.rssi needs 0 <= los_delta_max < nlos_delta_min".into());
        }
        Ok(())
    }
}
