//! Angle-of-arrival anchor ring: geometry, reading gates, ghost filtering,
//! tag initialisation and the feature-deficiency deployment policy.

use std::collections::{BTreeMap, VecDeque};
use std::f64::consts::PI;

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dbscan::{centroid, dbscan};
use crate::geometry::{circular_mean_std, compose, make_transform, wrap, GeometryError, Pose2D};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AoaError {
    #[error("unknown anchor id {0}")]
    UnknownAnchor(u32),
    #[error("anchor fields of view leave the ring uncovered (deadzone denominator {0})")]
    UncoveredGeometry(f64),
    #[error("tag initialisation needs {need} samples, got {have}")]
    TooFewSamples { have: usize, need: usize },
    #[error("only {have} samples survived the mean±std filter, need {need}")]
    TooFewSurvivors { have: usize, need: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorRingConfig {
    /// Mounting angle of each anchor; anchor ids index this list.
    pub psi: Vec<f64>,
    pub radius: f64,
    pub fov: f64,
    pub det_range_min: f64,
    pub det_range_max: f64,
}

impl Default for AnchorRingConfig {
    fn default() -> Self {
        Self {
            psi: vec![0.0, PI / 2.0, PI, -PI / 2.0],
            radius: 0.10,
            fov: 150f64.to_radians(),
            det_range_min: 1.5,
            det_range_max: 10.0,
        }
    }
}

impl AnchorRingConfig {
    /// Ring of `count` anchors equi-spaced from angle 0.
    pub fn equispaced(count: usize, radius: f64, fov: f64) -> Self {
        let lambda = 2.0 * PI / count as f64;
        Self {
            psi: (0..count).map(|k| wrap(k as f64 * lambda)).collect(),
            radius,
            fov,
            ..Self::default()
        }
    }

    pub fn count(&self) -> usize {
        self.psi.len()
    }

    /// Angular spacing between neighbouring anchors.
    pub fn lambda(&self) -> f64 {
        2.0 * PI / self.psi.len() as f64
    }

    pub fn psi_of(&self, anchor_id: u32) -> Result<f64, AoaError> {
        self.psi
            .get(anchor_id as usize)
            .copied()
            .ok_or(AoaError::UnknownAnchor(anchor_id))
    }

    /// Anchor pose in the robot frame (x axis along the anchor boresight).
    pub fn anchor_pose(&self, anchor_id: u32) -> Result<Pose2D, AoaError> {
        let psi = self.psi_of(anchor_id)?;
        Ok(Pose2D::new(self.radius * psi.cos(), self.radius * psi.sin(), psi))
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.psi.is_empty() {
            return Err("anchor ring needs at least one anchor".into());
        }
        let lambda = self.lambda();
        let mut sorted: Vec<f64> = self.psi.iter().map(|p| p.rem_euclid(2.0 * PI)).collect();
        sorted.sort_by(f64::total_cmp);
        for k in 0..sorted.len() {
            let next = if k + 1 < sorted.len() {
                sorted[k + 1]
            } else {
                sorted[0] + 2.0 * PI
            };
            if ((next - sorted[k]) - lambda).abs() > 1e-6 {
                return Err("anchor mounting angles must be equi-spaced".into());
            }
        }
        if !(self.radius >= 0.0) || !(self.fov > 0.0 && self.fov <= 2.0 * PI) {
            return Err("anchor ring radius must be >= 0 and fov in (0, 2pi]".into());
        }
        if !(self.det_range_min >= 0.0 && self.det_range_min < self.det_range_max) {
            return Err("det_range must satisfy 0 <= min < max".into());
        }
        Ok(())
    }
}

/// Where a reading came from, attached by the simulator for bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Provenance {
    pub seq: u64,
    pub ghost: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AoaReading {
    pub t: f64,
    pub anchor_id: u32,
    pub tag_id: u32,
    /// Anchor-to-tag range.
    #[serde(rename = "D")]
    pub range: f64,
    /// Bearing in the anchor frame.
    pub phi: f64,
    pub fp_rssi: f64,
    pub rx_rssi: f64,
    pub v_trans: f64,
    pub v_rot: f64,
    #[serde(default, skip_serializing_if = "Option::is_none", flatten)]
    pub provenance: Option<Provenance>,
}

impl AoaReading {
    pub fn delta_rssi(&self) -> f64 {
        self.rx_rssi - self.fp_rssi
    }

    pub fn is_ghost(&self) -> bool {
        self.provenance.is_some_and(|p| p.ghost)
    }
}

/// Robot-frame position of the tag seen in `reading`: `T(ψ, r) · T(φ, D) · o`.
pub fn anchor_to_robot_frame(reading: &AoaReading, ring: &AnchorRingConfig) -> Result<[f64; 2], AoaError> {
    let psi = ring.psi_of(reading.anchor_id)?;
    let t = compose(&make_transform(psi, ring.radius), &make_transform(reading.phi, reading.range));
    Ok(t.apply([0.0, 0.0]))
}

/// Radius inside which adjacent anchor fields of view leave gaps.
pub fn deadzone_radius(ring: &AnchorRingConfig) -> Result<f64, AoaError> {
    deadzone_radius_for(ring.radius, ring.fov, ring.lambda())
}

pub fn deadzone_radius_for(radius: f64, fov: f64, lambda: f64) -> Result<f64, AoaError> {
    let tan_half = (fov / 2.0).tan();
    let denom = tan_half * (lambda / 2.0).cos() - (lambda / 2.0).sin();
    if !(denom > 0.0) {
        return Err(AoaError::UncoveredGeometry(denom));
    }
    Ok(radius * tan_half / denom)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LineOfSight {
    Los,
    Nlos,
}

/// First-path versus total RSSI gap; LOS when strictly below the threshold.
pub fn los_check(reading: &AoaReading, threshold_db: f64) -> LineOfSight {
    if reading.delta_rssi() < threshold_db {
        LineOfSight::Los
    } else {
        LineOfSight::Nlos
    }
}

pub fn motion_gate_speeds(v_trans: f64, v_rot: f64, min_vel_trans: f64, min_vel_rot: f64) -> bool {
    v_trans > min_vel_trans || v_rot.abs() > min_vel_rot
}

/// Accepts a reading only if the robot was moving when it was captured.
pub fn motion_gate(reading: &AoaReading, min_vel_trans: f64, min_vel_rot: f64) -> bool {
    motion_gate_speeds(reading.v_trans, reading.v_rot, min_vel_trans, min_vel_rot)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateConfig {
    pub min_vel_trans: f64,
    pub min_vel_rot: f64,
    pub rssi_threshold: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            min_vel_trans: 0.03,
            min_vel_rot: 0.01,
            rssi_threshold: 6.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rejection {
    UnknownAnchor,
    Stationary,
    OutsideFov,
    OutOfRange,
    Nlos,
}

/// Geometric and signal gates that don't depend on robot motion.
pub fn static_gates(reading: &AoaReading, ring: &AnchorRingConfig, rssi_threshold: f64) -> Result<(), Rejection> {
    if ring.psi_of(reading.anchor_id).is_err() {
        return Err(Rejection::UnknownAnchor);
    }
    if reading.phi.abs() > ring.fov / 2.0 {
        return Err(Rejection::OutsideFov);
    }
    if reading.range < ring.det_range_min || reading.range > ring.det_range_max {
        return Err(Rejection::OutOfRange);
    }
    if los_check(reading, rssi_threshold) == LineOfSight::Nlos {
        return Err(Rejection::Nlos);
    }
    Ok(())
}

/// All gates, with the robot speeds supplied by the caller.
pub fn gate_reading(
    reading: &AoaReading,
    ring: &AnchorRingConfig,
    gates: &GateConfig,
    v_trans: f64,
    v_rot: f64,
) -> Result<(), Rejection> {
    if !motion_gate_speeds(v_trans, v_rot, gates.min_vel_trans, gates.min_vel_rot) {
        return Err(Rejection::Stationary);
    }
    static_gates(reading, ring, gates.rssi_threshold)
}

/// A gated reading mapped into the odometry frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagSample {
    /// Accumulation index current when the reading arrived.
    pub instant: usize,
    pub point: [f64; 2],
    pub pose: Pose2D,
    pub reading: AoaReading,
    /// Speeds the motion gate saw.
    pub speeds: (f64, f64),
}

/// Per-tag odometry-frame samples spanning the last `horizon` accumulation instants.
#[derive(Debug, Clone, Default)]
pub struct TagBuffer {
    horizon: usize,
    samples: BTreeMap<u32, VecDeque<TagSample>>,
}

impl TagBuffer {
    pub fn new(horizon: usize) -> Self {
        Self {
            horizon,
            samples: BTreeMap::new(),
        }
    }

    pub fn push(&mut self, tag_id: u32, sample: TagSample) {
        self.samples.entry(tag_id).or_default().push_back(sample);
    }

    /// Drops samples older than `horizon` instants before `current`.
    pub fn evict(&mut self, current: usize) {
        let oldest = current.saturating_sub(self.horizon);
        for q in self.samples.values_mut() {
            while q.front().is_some_and(|s| s.instant <= oldest) {
                q.pop_front();
            }
        }
    }

    pub fn samples(&self, tag_id: u32) -> impl Iterator<Item = &TagSample> {
        self.samples.get(&tag_id).into_iter().flatten()
    }

    pub fn tags(&self) -> impl Iterator<Item = u32> + '_ {
        self.samples.keys().copied()
    }

    pub fn iter_all(&self) -> impl Iterator<Item = (u32, &TagSample)> {
        self.samples.iter().flat_map(|(id, q)| q.iter().map(move |s| (*id, s)))
    }

    pub fn len(&self) -> usize {
        self.samples.values().map(VecDeque::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Predicted tag position and its covariance, in the buffer's frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TagPrior {
    pub mean: [f64; 2],
    pub cov: Matrix2<f64>,
}

impl TagPrior {
    pub fn mahalanobis2(&self, p: [f64; 2]) -> Option<f64> {
        let inv = self.cov.try_inverse()?;
        let d = nalgebra::Vector2::new(p[0] - self.mean[0], p[1] - self.mean[1]);
        Some((d.transpose() * inv * d)[0])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TagFilterOutcome {
    Accepted { centroid: [f64; 2], members: Vec<usize> },
    NoCluster,
    MultipleClusters(usize),
    Gated { centroid: [f64; 2], mahalanobis2: f64 },
}

impl TagFilterOutcome {
    pub fn observation(&self) -> Option<[f64; 2]> {
        match self {
            TagFilterOutcome::Accepted { centroid, .. } => Some(*centroid),
            _ => None,
        }
    }
}

/// Clusters one tag's buffered points and keeps the centroid only when exactly
/// one cluster forms and it is consistent with the current estimate.
pub fn filter_tag_observations(
    points: &[[f64; 2]],
    eps: f64,
    min_samples: usize,
    prior: Option<&TagPrior>,
    alpha_t: f64,
) -> TagFilterOutcome {
    let clustering = dbscan(points, eps, min_samples);
    match clustering.num_clusters() {
        0 => TagFilterOutcome::NoCluster,
        1 => {
            let members = clustering.clusters.into_iter().next().unwrap_or_default();
            let c = centroid(points, &members);
            if let Some(prior) = prior {
                let m2 = prior.mahalanobis2(c).unwrap_or(f64::INFINITY);
                if m2 > alpha_t {
                    return TagFilterOutcome::Gated {
                        centroid: c,
                        mahalanobis2: m2,
                    };
                }
            }
            TagFilterOutcome::Accepted { centroid: c, members }
        }
        k => TagFilterOutcome::MultipleClusters(k),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TagInit {
    /// Tag position in the frame of the pose passed to [`initialize_tag`].
    pub position: [f64; 2],
    /// Mean range/bearing of the surviving samples, robot frame.
    pub range: f64,
    pub bearing: f64,
    pub range_mean: f64,
    pub range_std: f64,
    pub bearing_mean: f64,
    pub bearing_std: f64,
    pub survivors: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitFilter {
    pub range_mean: f64,
    pub range_std: f64,
    pub bearing_mean: f64,
    pub bearing_std: f64,
    pub kept: Vec<usize>,
}

/// Keeps samples within one standard deviation of the mean on both axes.
/// Ranges use arithmetic statistics, bearings circular ones.
pub fn filter_init_samples(samples: &[(f64, f64)]) -> Result<InitFilter, AoaError> {
    if samples.is_empty() {
        return Err(AoaError::TooFewSamples { have: 0, need: 1 });
    }
    let n = samples.len() as f64;
    let range_mean = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let range_std = (samples.iter().map(|s| (s.0 - range_mean).powi(2)).sum::<f64>() / n).sqrt();
    let bearings: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let stats = circular_mean_std(&bearings)?;
    const SLACK: f64 = 1e-12;
    let kept = samples
        .iter()
        .enumerate()
        .filter(|(_, (r, b))| {
            (r - range_mean).abs() <= range_std + SLACK
                && wrap(b - stats.mean_theta).abs() <= stats.std_theta + SLACK
        })
        .map(|(i, _)| i)
        .collect();
    Ok(InitFilter {
        range_mean,
        range_std,
        bearing_mean: stats.mean_theta,
        bearing_std: stats.std_theta,
        kept,
    })
}

/// Initial tag estimate from (range, bearing) samples taken while halted.
pub fn initialize_tag(
    samples: &[(f64, f64)],
    robot_pose: &Pose2D,
    min_samples: usize,
    min_survivors: usize,
) -> Result<TagInit, AoaError> {
    if samples.len() < min_samples {
        return Err(AoaError::TooFewSamples {
            have: samples.len(),
            need: min_samples,
        });
    }
    let filt = filter_init_samples(samples)?;
    if filt.kept.len() < min_survivors.max(1) {
        return Err(AoaError::TooFewSurvivors {
            have: filt.kept.len(),
            need: min_survivors,
        });
    }
    let k = filt.kept.len() as f64;
    let range = filt.kept.iter().map(|&i| samples[i].0).sum::<f64>() / k;
    let kept_bearings: Vec<f64> = filt.kept.iter().map(|&i| samples[i].1).collect();
    let bearing = circular_mean_std(&kept_bearings)?.mean_theta;
    let position = robot_pose.transform_point([range * bearing.cos(), range * bearing.sin()]);
    Ok(TagInit {
        position,
        range,
        bearing,
        range_mean: filt.range_mean,
        range_std: filt.range_std,
        bearing_mean: filt.bearing_mean,
        bearing_std: filt.bearing_std,
        survivors: filt.kept.len(),
    })
}

/// Tracks distance travelled since the last radar feature sighting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentMonitor {
    pub distance_since_last_feature: f64,
    pub dep_dist: f64,
}

impl DeploymentMonitor {
    pub fn new(dep_dist: f64) -> Self {
        Self {
            distance_since_last_feature: 0.0,
            dep_dist,
        }
    }

    /// Returns true when a tag should be deployed.
    pub fn update(&mut self, displacement: f64, feature_seen: bool) -> bool {
        if feature_seen {
            self.distance_since_last_feature = 0.0;
            return false;
        }
        self.distance_since_last_feature += displacement.max(0.0);
        if self.distance_since_last_feature > self.dep_dist {
            self.distance_since_last_feature = 0.0;
            true
        } else {
            false
        }
    }

    pub fn reset(&mut self) {
        self.distance_since_last_feature = 0.0;
    }
}
