//! Landmark EKF-SLAM with range/bearing observations.
//!
//! State layout: `[x, y, θ, l1x, l1y, l2x, l2y, …]`. Tags are updated with
//! known correspondence; radar point features are associated by nearest
//! squared Mahalanobis distance and augmented when nothing is close enough.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix2x3, Matrix3, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{wrap, MotionIncrement, Pose2D};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EkfError {
    #[error("no landmark registered for tag {0}")]
    UnknownTag(u32),
    #[error("landmark coincides with the robot position; observation model is singular")]
    Singular,
    #[error("innovation covariance is not invertible")]
    SingularInnovation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LandmarkKind {
    Tag,
    Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub id: u32,
    pub kind: LandmarkKind,
    /// Index of the landmark's x coordinate in the state vector.
    pub index: usize,
    /// External correspondence id (tags only).
    pub tag_id: Option<u32>,
}

/// Additive motion noise `diag(σx², σy², σθ²)` per prediction step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionNoise {
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub sigma_theta: f64,
}

impl Default for MotionNoise {
    fn default() -> Self {
        Self {
            sigma_x: 0.001,
            sigma_y: 0.001,
            sigma_theta: 5e-3,
        }
    }
}

impl MotionNoise {
    pub fn zero() -> Self {
        Self {
            sigma_x: 0.0,
            sigma_y: 0.0,
            sigma_theta: 0.0,
        }
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&nalgebra::Vector3::new(
            self.sigma_x * self.sigma_x,
            self.sigma_y * self.sigma_y,
            self.sigma_theta * self.sigma_theta,
        ))
    }
}

/// Range/bearing noise: `sigma_r` in metres, `sigma_phi2` as a variance in rad².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationNoise {
    pub sigma_r: f64,
    pub sigma_phi2: f64,
}

impl ObservationNoise {
    pub fn tag_default() -> Self {
        Self {
            sigma_r: 0.30,
            sigma_phi2: 1.0,
        }
    }

    pub fn radar_default() -> Self {
        Self {
            sigma_r: 0.20,
            sigma_phi2: 0.5,
        }
    }

    pub fn matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.sigma_r * self.sigma_r, 0.0, 0.0, self.sigma_phi2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Tag,
    Radar,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeBearingObs {
    pub range: f64,
    pub bearing: f64,
    pub source: SourceKind,
    pub tag_id: Option<u32>,
}

impl RangeBearingObs {
    pub fn radar(range: f64, bearing: f64) -> Self {
        Self {
            range,
            bearing: wrap(bearing),
            source: SourceKind::Radar,
            tag_id: None,
        }
    }

    pub fn tag(tag_id: u32, range: f64, bearing: f64) -> Self {
        Self {
            range,
            bearing: wrap(bearing),
            source: SourceKind::Tag,
            tag_id: Some(tag_id),
        }
    }
}

/// Predicted measurement and its Jacobians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationPrediction {
    pub range: f64,
    pub bearing: f64,
    /// ∂h/∂(x, y, θ)
    pub h_robot: Matrix2x3<f64>,
    /// ∂h/∂(lx, ly)
    pub h_landmark: Matrix2<f64>,
}

pub fn observation_model(robot: &Pose2D, landmark: [f64; 2]) -> Result<ObservationPrediction, EkfError> {
    let dx = landmark[0] - robot.x;
    let dy = landmark[1] - robot.y;
    let q = dx * dx + dy * dy;
    if q < 1e-18 {
        return Err(EkfError::Singular);
    }
    let r = q.sqrt();
    Ok(ObservationPrediction {
        range: r,
        bearing: wrap(dy.atan2(dx) - robot.theta),
        h_robot: Matrix2x3::new(-dx / r, -dy / r, 0.0, dy / q, -dx / q, -1.0),
        h_landmark: Matrix2::new(dx / r, dy / r, -dy / q, dx / q),
    })
}

/// Motion model Jacobian with respect to the robot pose.
pub fn motion_jacobian(robot: &Pose2D, u: &MotionIncrement) -> Matrix3<f64> {
    let heading = robot.theta + u.rot1;
    Matrix3::new(
        1.0,
        0.0,
        -u.trans * heading.sin(),
        0.0,
        1.0,
        u.trans * heading.cos(),
        0.0,
        0.0,
        1.0,
    )
}

/// Landmark position from a range/bearing observation, with Jacobians
/// with respect to the robot pose and the observation.
pub fn inverse_observation(robot: &Pose2D, range: f64, bearing: f64) -> ([f64; 2], Matrix2x3<f64>, Matrix2<f64>) {
    let a = robot.theta + bearing;
    let (s, c) = a.sin_cos();
    let lm = [robot.x + range * c, robot.y + range * s];
    let g_robot = Matrix2x3::new(1.0, 0.0, -range * s, 0.0, 1.0, range * c);
    let g_obs = Matrix2::new(c, -range * s, s, range * c);
    (lm, g_robot, g_obs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Association {
    Associated { landmark_id: u32, mahalanobis2: f64 },
    NewLandmark { landmark_id: u32, min_mahalanobis2: Option<f64> },
}

impl Association {
    pub fn landmark_id(&self) -> u32 {
        match self {
            Association::Associated { landmark_id, .. } | Association::NewLandmark { landmark_id, .. } => *landmark_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlamState {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub landmarks: Vec<Landmark>,
    next_id: u32,
}

impl SlamState {
    /// Robot at `pose` with zero covariance and no landmarks.
    pub fn new(pose: Pose2D) -> Self {
        Self {
            mu: DVector::from_vec(vec![pose.x, pose.y, pose.theta]),
            sigma: DMatrix::zeros(3, 3),
            landmarks: Vec::new(),
            next_id: 0,
        }
    }

    pub fn with_covariance(pose: Pose2D, cov: Matrix3<f64>) -> Self {
        let mut s = Self::new(pose);
        s.sigma.view_mut((0, 0), (3, 3)).copy_from(&cov);
        s
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn robot(&self) -> Pose2D {
        Pose2D::new(self.mu[0], self.mu[1], self.mu[2])
    }

    pub fn robot_covariance(&self) -> Matrix3<f64> {
        self.sigma.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn landmark_position(&self, lm: &Landmark) -> [f64; 2] {
        [self.mu[lm.index], self.mu[lm.index + 1]]
    }

    pub fn landmark_covariance(&self, lm: &Landmark) -> Matrix2<f64> {
        self.sigma.fixed_view::<2, 2>(lm.index, lm.index).into_owned()
    }

    pub fn landmark(&self, id: u32) -> Option<&Landmark> {
        self.landmarks.iter().find(|l| l.id == id)
    }

    pub fn tag_landmark(&self, tag_id: u32) -> Option<&Landmark> {
        self.landmarks.iter().find(|l| l.tag_id == Some(tag_id))
    }

    pub fn point_landmarks(&self) -> impl Iterator<Item = &Landmark> {
        self.landmarks.iter().filter(|l| l.kind == LandmarkKind::Point)
    }

    /// Largest absolute asymmetry of Σ.
    pub fn asymmetry(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                worst = worst.max((self.sigma[(i, j)] - self.sigma[(j, i)]).abs());
            }
        }
        worst
    }

    /// Whether Σ + tol·I admits a Cholesky factorization, i.e. every
    /// eigenvalue of the symmetric part exceeds −tol.
    pub fn is_psd(&self, tol: f64) -> bool {
        let n = self.dim();
        let sym = (&self.sigma + self.sigma.transpose()) * 0.5 + DMatrix::identity(n, n) * tol;
        sym.cholesky().is_some()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let sym = (&self.sigma + self.sigma.transpose()) * 0.5;
        sym.symmetric_eigenvalues().min()
    }

    fn symmetrize(&mut self) {
        let n = self.dim();
        for i in 0..n {
            for j in i + 1..n {
                let v = 0.5 * (self.sigma[(i, j)] + self.sigma[(j, i)]);
                self.sigma[(i, j)] = v;
                self.sigma[(j, i)] = v;
            }
        }
    }

    /// Advances the robot by `u` and adds `noise` to the robot block.
    pub fn predict(&mut self, u: &MotionIncrement, noise: &MotionNoise) {
        let robot = self.robot();
        let g = motion_jacobian(&robot, u);
        let moved = u.apply(&robot);
        self.mu[0] = moved.x;
        self.mu[1] = moved.y;
        self.mu[2] = moved.theta;

        let n = self.dim();
        let rr = self.robot_covariance();
        let new_rr = g * rr * g.transpose() + noise.matrix();
        self.sigma.fixed_view_mut::<3, 3>(0, 0).copy_from(&new_rr);
        if n > 3 {
            let rl = self.sigma.view((0, 3), (3, n - 3)).into_owned();
            let new_rl = g * rl;
            self.sigma.view_mut((0, 3), (3, n - 3)).copy_from(&new_rl);
            self.sigma.view_mut((3, 0), (n - 3, 3)).copy_from(&new_rl.transpose());
        }
        self.symmetrize();
    }

    /// Σ·Hᵀ for a range/bearing Jacobian touching the robot and one landmark.
    fn sigma_ht(&self, pred: &ObservationPrediction, lm_index: usize) -> DMatrix<f64> {
        let n = self.dim();
        let mut pht = DMatrix::zeros(n, 2);
        for i in 0..n {
            for k in 0..2 {
                let mut acc = 0.0;
                for j in 0..3 {
                    acc += self.sigma[(i, j)] * pred.h_robot[(k, j)];
                }
                for j in 0..2 {
                    acc += self.sigma[(i, lm_index + j)] * pred.h_landmark[(k, j)];
                }
                pht[(i, k)] = acc;
            }
        }
        pht
    }

    fn innovation_covariance(&self, pred: &ObservationPrediction, lm_index: usize, pht: &DMatrix<f64>, q: &Matrix2<f64>) -> Matrix2<f64> {
        // H Σ Hᵀ = H (Σ Hᵀ), using the sparse rows of H.
        let mut s = *q;
        for k in 0..2 {
            for l in 0..2 {
                let mut acc = 0.0;
                for j in 0..3 {
                    acc += pred.h_robot[(k, j)] * pht[(j, l)];
                }
                for j in 0..2 {
                    acc += pred.h_landmark[(k, j)] * pht[(lm_index + j, l)];
                }
                s[(k, l)] += acc;
            }
        }
        s
    }

    /// Innovation, its covariance and the prediction for one landmark.
    pub fn innovation(&self, lm: &Landmark, obs: &RangeBearingObs, q: &Matrix2<f64>) -> Result<(Vector2<f64>, Matrix2<f64>), EkfError> {
        let pred = observation_model(&self.robot(), self.landmark_position(lm))?;
        let pht = self.sigma_ht(&pred, lm.index);
        let s = self.innovation_covariance(&pred, lm.index, &pht, q);
        let nu = Vector2::new(obs.range - pred.range, wrap(obs.bearing - pred.bearing));
        Ok((nu, s))
    }

    pub fn mahalanobis2(&self, lm: &Landmark, obs: &RangeBearingObs, q: &Matrix2<f64>) -> Result<f64, EkfError> {
        let (nu, s) = self.innovation(lm, obs, q)?;
        let s_inv = s.try_inverse().ok_or(EkfError::SingularInnovation)?;
        Ok((nu.transpose() * s_inv * nu)[0])
    }

    /// EKF update against landmark `lm` using the Joseph form
    /// `(I − KH) Σ (I − KH)ᵀ + K Q Kᵀ`, evaluated through the sparse structure of H.
    fn update_landmark(&mut self, lm_index: usize, obs: &RangeBearingObs, q: &Matrix2<f64>) -> Result<(), EkfError> {
        let robot = self.robot();
        let pred = observation_model(&robot, [self.mu[lm_index], self.mu[lm_index + 1]])?;
        let pht = self.sigma_ht(&pred, lm_index);
        let s = self.innovation_covariance(&pred, lm_index, &pht, q);
        let s_inv = s.try_inverse().ok_or(EkfError::SingularInnovation)?;
        let k = &pht * s_inv;
        let nu = Vector2::new(obs.range - pred.range, wrap(obs.bearing - pred.bearing));
        let nu_d = DVector::from_column_slice(nu.as_slice());
        self.mu += &k * nu_d;
        self.mu[2] = wrap(self.mu[2]);

        // H Σ Hᵀ without Q.
        let mut hph = s - q;
        hph = (hph + hph.transpose()) * 0.5;
        let hph_d = DMatrix::from_column_slice(2, 2, hph.as_slice());
        let q_d = DMatrix::from_column_slice(2, 2, q.as_slice());
        let kt = k.transpose();
        // Σ − K(ΣHᵀ)ᵀ − (ΣHᵀ)Kᵀ + K(HΣHᵀ + Q)Kᵀ
        let cross = &k * pht.transpose();
        let quad = &k * (hph_d + q_d) * &kt;
        self.sigma -= &cross;
        self.sigma -= cross.transpose();
        self.sigma += quad;
        self.symmetrize();
        Ok(())
    }

    /// Known-correspondence update for a tag landmark.
    pub fn update_known(&mut self, obs: &RangeBearingObs, q: &ObservationNoise) -> Result<(), EkfError> {
        let tag_id = obs.tag_id.ok_or(EkfError::UnknownTag(u32::MAX))?;
        let lm = self.tag_landmark(tag_id).ok_or(EkfError::UnknownTag(tag_id))?;
        let index = lm.index;
        self.update_landmark(index, obs, &q.matrix())
    }

    /// Update against an arbitrary registered landmark.
    pub fn update_landmark_id(&mut self, landmark_id: u32, obs: &RangeBearingObs, q: &ObservationNoise) -> Result<(), EkfError> {
        let index = self
            .landmark(landmark_id)
            .map(|l| l.index)
            .ok_or(EkfError::UnknownTag(landmark_id))?;
        self.update_landmark(index, obs, &q.matrix())
    }

    /// Appends a landmark initialised from `obs` at the current robot pose.
    /// Returns the new landmark id.
    pub fn augment_landmark(&mut self, obs: &RangeBearingObs, kind: LandmarkKind, q: &Matrix2<f64>) -> u32 {
        self.augment_landmark_from(&Pose2D::origin(), obs, kind, q)
    }

    /// Like [`Self::augment_landmark`], but `obs` was taken from the pose
    /// `offset` expressed in the robot frame. The offset is treated as exact.
    pub fn augment_landmark_from(&mut self, offset: &Pose2D, obs: &RangeBearingObs, kind: LandmarkKind, q: &Matrix2<f64>) -> u32 {
        let robot = self.robot();
        let (s0, c0) = robot.theta.sin_cos();
        let (sb, cb) = obs.bearing.sin_cos();
        let local = offset.transform_point([obs.range * cb, obs.range * sb]);
        // Robot-frame offset rotated into the map frame.
        let rot = [c0 * local[0] - s0 * local[1], s0 * local[0] + c0 * local[1]];
        let lm = [robot.x + rot[0], robot.y + rot[1]];
        let g_robot = Matrix2x3::new(1.0, 0.0, -rot[1], 0.0, 1.0, rot[0]);
        let (s, c) = (robot.theta + offset.theta).sin_cos();
        let polar = Matrix2::new(cb, -obs.range * sb, sb, obs.range * cb);
        let g_obs = Matrix2::new(c, -s, s, c) * polar;
        let n = self.dim();

        let mut mu = DVector::zeros(n + 2);
        mu.rows_mut(0, n).copy_from(&self.mu);
        mu[n] = lm[0];
        mu[n + 1] = lm[1];

        let mut sigma = DMatrix::zeros(n + 2, n + 2);
        sigma.view_mut((0, 0), (n, n)).copy_from(&self.sigma);
        let robot_rows = self.sigma.rows(0, 3).into_owned();
        let g_r = DMatrix::from_fn(2, 3, |i, j| g_robot[(i, j)]);
        let cross = &g_r * robot_rows;
        sigma.view_mut((n, 0), (2, n)).copy_from(&cross);
        sigma.view_mut((0, n), (n, 2)).copy_from(&cross.transpose());
        let ll = g_robot * self.robot_covariance() * g_robot.transpose() + g_obs * q * g_obs.transpose();
        sigma.fixed_view_mut::<2, 2>(n, n).copy_from(&ll);

        self.mu = mu;
        self.sigma = sigma;
        let id = self.next_id;
        self.next_id += 1;
        self.landmarks.push(Landmark {
            id,
            kind,
            index: n,
            tag_id: if kind == LandmarkKind::Tag { obs.tag_id } else { None },
        });
        self.symmetrize();
        id
    }

    /// Nearest-neighbour association of radar features by squared
    /// Mahalanobis distance, gated by `alpha`.
    ///
    /// Observations are processed in order, each against the state left by
    /// the previous one. Ties go to the lowest landmark id.
    pub fn associate_and_update_unknown(
        &mut self,
        observations: &[RangeBearingObs],
        q: &ObservationNoise,
        alpha: f64,
    ) -> Result<Vec<Association>, EkfError> {
        let qm = q.matrix();
        let mut report = Vec::with_capacity(observations.len());
        for obs in observations {
            let mut best: Option<(f64, u32, usize)> = None;
            for lm in self.point_landmarks() {
                let m2 = match self.mahalanobis2(lm, obs, &qm) {
                    Ok(m2) => m2,
                    Err(EkfError::Singular) => continue,
                    Err(e) => return Err(e),
                };
                let better = match best {
                    None => true,
                    Some((bm, bid, _)) => m2 < bm || (m2 == bm && lm.id < bid),
                };
                if better {
                    best = Some((m2, lm.id, lm.index));
                }
            }
            match best {
                Some((m2, id, index)) if m2 <= alpha => {
                    self.update_landmark(index, obs, &qm)?;
                    report.push(Association::Associated {
                        landmark_id: id,
                        mahalanobis2: m2,
                    });
                }
                other => {
                    let id = self.augment_landmark(obs, LandmarkKind::Point, &qm);
                    report.push(Association::NewLandmark {
                        landmark_id: id,
                        min_mahalanobis2: other.map(|b| b.0),
                    });
                }
            }
        }
        Ok(report)
    }

    pub fn trace(&self) -> f64 {
        self.sigma.trace()
    }
}
