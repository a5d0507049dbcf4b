//! Trajectory alignment, absolute trajectory error and map error.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::driver::{Mode, TrajectoryEntry};
use crate::ekf::{LandmarkKind, SlamState};
use crate::geometry::{dist, wrap};
use crate::log::{LandmarkEntry, Snapshot};
use crate::sim::WorldModel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("trajectories need equal length of at least 2 (got {0} and {1})")]
    InvalidPair(usize, usize),
    #[error("all positions coincide; rotation is undetermined")]
    Degenerate,
}

/// Rigid 2D transform applied to estimated positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub theta: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Alignment {
    pub fn identity() -> Self {
        Self {
            theta: 0.0,
            tx: 0.0,
            ty: 0.0,
        }
    }

    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.theta.sin_cos();
        [c * p[0] - s * p[1] + self.tx, s * p[0] + c * p[1] + self.ty]
    }
}

fn check_pair(est: &[[f64; 2]], gt: &[[f64; 2]]) -> Result<(), EvalError> {
    if est.len() != gt.len() || est.len() < 2 {
        return Err(EvalError::InvalidPair(est.len(), gt.len()));
    }
    Ok(())
}

fn mean(points: &[[f64; 2]]) -> [f64; 2] {
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(sx, sy), p| (sx + p[0], sy + p[1]));
    [sx / n, sy / n]
}

/// Least-squares rigid transform taking `est` onto `gt`.
pub fn align_trajectories(est: &[[f64; 2]], gt: &[[f64; 2]]) -> Result<Alignment, EvalError> {
    check_pair(est, gt)?;
    let ce = mean(est);
    let cg = mean(gt);
    // Cross-covariance terms of the centred sets.
    let (mut sxx, mut sxy, mut syx, mut syy) = (0.0, 0.0, 0.0, 0.0);
    let mut spread = 0.0;
    for (e, g) in est.iter().zip(gt) {
        let (ex, ey) = (e[0] - ce[0], e[1] - ce[1]);
        let (gx, gy) = (g[0] - cg[0], g[1] - cg[1]);
        sxx += ex * gx;
        sxy += ex * gy;
        syx += ey * gx;
        syy += ey * gy;
        spread += ex * ex + ey * ey + gx * gx + gy * gy;
    }
    if spread <= 1e-24 {
        return Err(EvalError::Degenerate);
    }
    let theta = (sxy - syx).atan2(sxx + syy);
    let (s, c) = theta.sin_cos();
    Ok(Alignment {
        theta,
        tx: cg[0] - (c * ce[0] - s * ce[1]),
        ty: cg[1] - (s * ce[0] + c * ce[1]),
    })
}

pub fn rms_ate(est: &[[f64; 2]], gt: &[[f64; 2]], transform: &Alignment) -> Result<f64, EvalError> {
    check_pair(est, gt)?;
    let sum: f64 = est.iter().zip(gt).map(|(e, g)| dist(transform.apply(*e), *g).powi(2)).sum();
    Ok((sum / est.len() as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkError {
    pub id: u32,
    pub kind: LandmarkKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag_id: Option<u32>,
    /// Distance to the matched true landmark after alignment.
    pub error: f64,
    /// Unmatched, or matched more than [`SPURIOUS_DISTANCE`] away.
    pub spurious: bool,
}

pub const SPURIOUS_DISTANCE: f64 = 1.0;

/// Matches tags by id and point landmarks to the nearest true feature.
pub fn landmark_errors(landmarks: &[LandmarkEntry], world: &WorldModel, transform: &Alignment) -> Vec<LandmarkError> {
    landmarks
        .iter()
        .map(|l| {
            let p = transform.apply([l.x, l.y]);
            let error = match (l.kind, l.tag_id) {
                (LandmarkKind::Tag, Some(tag)) => world.tag(tag).map(|t| dist(p, t.position())),
                _ => world.nearest_feature(p).map(|(_, d)| d),
            }
            .unwrap_or(f64::INFINITY);
            LandmarkError {
                id: l.id,
                kind: l.kind,
                tag_id: l.tag_id,
                error,
                spurious: error > SPURIOUS_DISTANCE,
            }
        })
        .collect()
}

pub fn landmark_error(state: &SlamState, world: &WorldModel, transform: &Alignment) -> Vec<LandmarkError> {
    landmark_errors(&Snapshot::from_state(0.0, 0, state).landmarks, world, transform)
}

/// Estimated and true positions of a trajectory, skipping entries without truth.
pub fn trajectory_pair(trajectory: &[TrajectoryEntry]) -> (Vec<[f64; 2]>, Vec<[f64; 2]>) {
    trajectory
        .iter()
        .filter_map(|e| Some((e.estimate.position(), e.truth?.position())))
        .unzip()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mode: Mode,
    pub seed: u64,
    pub config_hash: String,
    pub rms_ate: f64,
    /// Unaligned distance between the last estimated and true position.
    pub final_pose_error: f64,
    pub final_heading_error: f64,
    pub alignment: Alignment,
    pub landmark_errors: Vec<LandmarkError>,
    pub slam_steps: usize,
    pub deployments: usize,
    pub ghosts_injected: u64,
    pub ghosts_accepted: u64,
}

impl MetricsReport {
    pub fn tag_error(&self, tag_id: u32) -> Option<f64> {
        self.landmark_errors
            .iter()
            .find(|e| e.tag_id == Some(tag_id))
            .map(|e| e.error)
    }

    pub fn ghost_rejection_rate(&self) -> Option<f64> {
        (self.ghosts_injected > 0).then(|| 1.0 - self.ghosts_accepted as f64 / self.ghosts_injected as f64)
    }
}

/// Builds a report from a finished trajectory and map.
#[allow(clippy::too_many_arguments)]
pub fn build_report(
    mode: Mode,
    seed: u64,
    config_hash: String,
    trajectory: &[TrajectoryEntry],
    landmarks: &[LandmarkEntry],
    world: &WorldModel,
    deployments: usize,
    ghosts: (u64, u64),
) -> Result<MetricsReport, EvalError> {
    let (est, gt) = trajectory_pair(trajectory);
    let alignment = align_trajectories(&est, &gt)?;
    let rms = rms_ate(&est, &gt, &alignment)?;
    let last = trajectory.iter().rev().find(|e| e.truth.is_some()).expect("pair has entries");
    let truth = last.truth.expect("filtered");
    Ok(MetricsReport {
        mode,
        seed,
        config_hash,
        rms_ate: rms,
        final_pose_error: dist(last.estimate.position(), truth.position()),
        final_heading_error: wrap(last.estimate.theta - truth.theta).abs(),
        alignment,
        landmark_errors: landmark_errors(landmarks, world, &alignment),
        slam_steps: trajectory.len(),
        deployments,
        ghosts_injected: ghosts.0,
        ghosts_accepted: ghosts.1,
    })
}

/// Per-pose residuals after alignment: `t,gt_x,gt_y,est_x,est_y,err`.
pub fn residual_csv(trajectory: &[TrajectoryEntry], transform: &Alignment) -> String {
    let mut out = String::from("t,gt_x,gt_y,est_x,est_y,err\n");
    for e in trajectory {
        let Some(truth) = e.truth else { continue };
        let p = transform.apply(e.estimate.position());
        let g = truth.position();
        writeln!(out, "{},{},{},{},{},{}", e.t, g[0], g[1], p[0], p[1], dist(p, g)).expect("writing to String");
    }
    out
}
