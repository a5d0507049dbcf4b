//! SE(2) poses, homogeneous transforms, angle arithmetic and circular
//! statistics shared by the rest of the crate.
//!
//! Every angle leaving this module lies in the half-open interval (−π, π].

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Translations shorter than this are treated as pure rotations by the
/// odometry motion model.
pub const MIN_TRANSLATION: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("angle is not finite: {0}")]
    NonFiniteAngle(f64),
    #[error("cannot take circular statistics of an empty set")]
    EmptyAngles,
    #[error("angles are perfectly dispersed (resultant length 0); mean is undefined")]
    UndefinedMean,
}

/// Wraps `theta` into (−π, π], rejecting non-finite input.
pub fn wrap_angle(theta: f64) -> Result<f64, GeometryError> {
    if !theta.is_finite() {
        return Err(GeometryError::NonFiniteAngle(theta));
    }
    Ok(wrap(theta))
}

/// Unchecked variant of [`wrap_angle`]; NaN in, NaN out.
///
/// Values already inside the interval are returned untouched, so the
/// function is exactly idempotent.
#[inline]
pub fn wrap(theta: f64) -> f64 {
    if theta > -PI && theta <= PI {
        return theta;
    }
    let a = theta.rem_euclid(TAU);
    if a > PI {
        a - TAU
    } else {
        a
    }
}

/// Planar robot pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap(theta),
        }
    }

    pub fn origin() -> Self {
        Self::default()
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    /// `self ⊕ other`: `other` expressed in `self`'s frame, lifted to the parent frame.
    pub fn compose(&self, other: &Pose2D) -> Pose2D {
        let (s, c) = self.theta.sin_cos();
        Pose2D::new(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.theta + other.theta,
        )
    }

    pub fn inverse(&self) -> Pose2D {
        let (s, c) = self.theta.sin_cos();
        Pose2D::new(
            -c * self.x - s * self.y,
            s * self.x - c * self.y,
            -self.theta,
        )
    }

    /// `self ⊖ reference`: this pose expressed in `reference`'s frame.
    pub fn relative_to(&self, reference: &Pose2D) -> Pose2D {
        reference.inverse().compose(self)
    }

    /// Maps a point from this pose's local frame into the parent frame.
    pub fn transform_point(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.theta.sin_cos();
        [self.x + c * p[0] - s * p[1], self.y + s * p[0] + c * p[1]]
    }

    /// Maps a parent-frame point into this pose's local frame.
    pub fn inverse_transform_point(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.theta.sin_cos();
        let dx = p[0] - self.x;
        let dy = p[1] - self.y;
        [c * dx + s * dy, -s * dx + c * dy]
    }

    pub fn to_transform(&self) -> Transform2D {
        let (s, c) = self.theta.sin_cos();
        Transform2D(Matrix3::new(c, -s, self.x, s, c, self.y, 0.0, 0.0, 1.0))
    }

    pub fn distance_to(&self, other: &Pose2D) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// 3×3 homogeneous rigid transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform2D(pub Matrix3<f64>);

impl Transform2D {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let v = self.0 * Vector3::new(p[0], p[1], 1.0);
        [v[0], v[1]]
    }

    pub fn translation(&self) -> [f64; 2] {
        [self.0[(0, 2)], self.0[(1, 2)]]
    }

    pub fn rotation_angle(&self) -> f64 {
        self.0[(1, 0)].atan2(self.0[(0, 0)])
    }

    pub fn rotation_determinant(&self) -> f64 {
        self.0[(0, 0)] * self.0[(1, 1)] - self.0[(0, 1)] * self.0[(1, 0)]
    }

    pub fn to_pose(&self) -> Pose2D {
        let [x, y] = self.translation();
        Pose2D::new(x, y, self.rotation_angle())
    }
}

/// Rotation by `theta_z` followed by a step of `d` along the rotated x axis.
pub fn make_transform(theta_z: f64, d: f64) -> Transform2D {
    let (s, c) = theta_z.sin_cos();
    Transform2D(Matrix3::new(c, -s, d * c, s, c, d * s, 0.0, 0.0, 1.0))
}

pub fn compose(a: &Transform2D, b: &Transform2D) -> Transform2D {
    Transform2D(a.0 * b.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircularStats {
    pub mean_theta: f64,
    pub std_theta: f64,
    pub resultant_r: f64,
    pub mean_cos: f64,
    pub mean_sin: f64,
}

/// Circular mean, resultant length and the `sqrt(-2 ln R)` angular deviation.
pub fn circular_mean_std(angles: &[f64]) -> Result<CircularStats, GeometryError> {
    if angles.is_empty() {
        return Err(GeometryError::EmptyAngles);
    }
    let n = angles.len() as f64;
    let (sum_c, sum_s) = angles
        .iter()
        .fold((0.0, 0.0), |(c, s), a| (c + a.cos(), s + a.sin()));
    let mean_cos = sum_c / n;
    let mean_sin = sum_s / n;
    // Rounding can push R a hair above 1 for identical inputs.
    let r = mean_cos.hypot(mean_sin).min(1.0);
    if r <= 1e-12 {
        return Err(GeometryError::UndefinedMean);
    }
    Ok(CircularStats {
        mean_theta: wrap(mean_sin.atan2(mean_cos)),
        std_theta: (-2.0 * r.ln()).max(0.0).sqrt(),
        resultant_r: r,
        mean_cos,
        mean_sin,
    })
}

/// Rotation / translation / rotation decomposition of a relative motion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionIncrement {
    pub rot1: f64,
    pub trans: f64,
    pub rot2: f64,
}

impl MotionIncrement {
    pub fn zero() -> Self {
        Self {
            rot1: 0.0,
            trans: 0.0,
            rot2: 0.0,
        }
    }

    /// Applies the increment to `pose`.
    pub fn apply(&self, pose: &Pose2D) -> Pose2D {
        let heading = pose.theta + self.rot1;
        Pose2D::new(
            pose.x + self.trans * heading.cos(),
            pose.y + self.trans * heading.sin(),
            heading + self.rot2,
        )
    }
}

pub fn odometry_motion_model(a: &Pose2D, b: &Pose2D) -> MotionIncrement {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let trans = dx.hypot(dy);
    if trans < MIN_TRANSLATION {
        return MotionIncrement {
            rot1: 0.0,
            trans,
            rot2: wrap(b.theta - a.theta),
        };
    }
    let rot1 = wrap(dy.atan2(dx) - a.theta);
    MotionIncrement {
        rot1,
        trans,
        rot2: wrap(b.theta - a.theta - rot1),
    }
}

/// Squared Euclidean distance between two points.
#[inline]
pub fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

#[inline]
pub fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    dist2(a, b).sqrt()
}

/// Distance from `p` to the segment `a`–`b`, and the closest point on it.
pub fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> (f64, [f64; 2]) {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let q = [a[0] + t * ab[0], a[1] + t * ab[1]];
    (dist(p, q), q)
}

/// Proper intersection test between segments `p1`–`p2` and `q1`–`q2`.
pub fn segments_intersect(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> bool {
    fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    }
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, SQRT_2};

    #[test]
    fn wrap_examples() {
        assert_eq!(wrap_angle(0.0).unwrap(), 0.0);
        assert!((wrap_angle(3.0 * PI / 2.0).unwrap() + FRAC_PI_2).abs() < 1e-12);
        assert_eq!(wrap_angle(PI).unwrap(), PI);
        assert_eq!(wrap_angle(-PI).unwrap(), PI);
        assert!(wrap_angle(f64::NAN).is_err());
        assert!(wrap_angle(f64::INFINITY).is_err());
    }

    #[test]
    fn make_transform_examples() {
        assert_eq!(make_transform(0.0, 0.0), Transform2D::identity());
        let t = make_transform(0.0, 1.0);
        assert_eq!(t.translation(), [1.0, 0.0]);
        assert_eq!(t.rotation_angle(), 0.0);
        let t = make_transform(FRAC_PI_2, 1.0);
        let [x, y] = t.translation();
        assert!(x.abs() < 1e-12 && (y - 1.0).abs() < 1e-12);
        assert!((t.rotation_angle() - FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn compose_examples() {
        let t = make_transform(0.3, 1.7);
        assert_eq!(compose(&Transform2D::identity(), &t), t);
        assert_eq!(compose(&t, &Transform2D::identity()), t);
        let p = compose(&make_transform(FRAC_PI_2, 0.0), &make_transform(0.0, 1.0)).apply([0.0, 0.0]);
        assert!(p[0].abs() < 1e-12 && (p[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn circular_examples() {
        let s = circular_mean_std(&[0.7; 5]).unwrap();
        assert!((s.mean_theta - 0.7).abs() < 1e-12);
        assert!(s.std_theta.abs() < 1e-6);
        assert!((s.resultant_r - 1.0).abs() < 1e-12);

        let s = circular_mean_std(&[0.0, FRAC_PI_2]).unwrap();
        assert!((s.mean_theta - FRAC_PI_4).abs() < 1e-12);
        assert!((s.resultant_r - 0.707_106_781_186_547_5).abs() < 1e-12);
        assert!((s.std_theta - 0.832_554_611_157_697_8).abs() < 1e-12);

        let s = circular_mean_std(&[-3.1, 3.1]).unwrap();
        assert!((s.mean_theta.abs() - PI).abs() < 1e-9);

        assert_eq!(circular_mean_std(&[]), Err(GeometryError::EmptyAngles));
        assert_eq!(
            circular_mean_std(&[0.0, PI]),
            Err(GeometryError::UndefinedMean)
        );
    }

    #[test]
    fn motion_model_examples() {
        let p = Pose2D::new(1.0, -2.0, 0.4);
        assert_eq!(odometry_motion_model(&p, &p), MotionIncrement::zero());

        let u = odometry_motion_model(&Pose2D::origin(), &Pose2D::new(1.0, 0.0, 0.0));
        assert_eq!(u, MotionIncrement { rot1: 0.0, trans: 1.0, rot2: 0.0 });

        let u = odometry_motion_model(&Pose2D::origin(), &Pose2D::new(1.0, 1.0, FRAC_PI_2));
        assert!((u.rot1 - FRAC_PI_4).abs() < 1e-12);
        assert!((u.trans - SQRT_2).abs() < 1e-12);
        assert!((u.rot2 - FRAC_PI_4).abs() < 1e-12);

        // zero translation carries all rotation in rot2
        let u = odometry_motion_model(&Pose2D::origin(), &Pose2D::new(0.0, 0.0, 1.0));
        assert_eq!(u.rot1, 0.0);
        assert_eq!(u.rot2, 1.0);
    }

    #[test]
    fn transform_rotation_determinant() {
        let t = compose(&make_transform(1.2, 0.5), &make_transform(-2.9, 3.0));
        assert!((t.rotation_determinant() - 1.0).abs() < 1e-9);
    }

    fn angle() -> impl Strategy<Value = f64> {
        -50.0..50.0f64
    }

    fn transform() -> impl Strategy<Value = Transform2D> {
        (angle(), -10.0..10.0f64).prop_map(|(a, d)| make_transform(a, d))
    }

    fn pose() -> impl Strategy<Value = Pose2D> {
        (-20.0..20.0f64, -20.0..20.0f64, angle()).prop_map(|(x, y, t)| Pose2D::new(x, y, t))
    }

    proptest! {
        #[test]
        fn wrap_idempotent_and_periodic(t in angle(), k in -5i32..5) {
            let w = wrap(t);
            prop_assert!(w > -PI && w <= PI);
            prop_assert_eq!(wrap(w), w);
            let shifted = wrap(t + k as f64 * TAU);
            let d = wrap(shifted - w).abs();
            prop_assert!(d < 1e-9);
        }

        #[test]
        fn compose_associative(a in transform(), b in transform(), c in transform()) {
            let l = compose(&compose(&a, &b), &c);
            let r = compose(&a, &compose(&b, &c));
            prop_assert!((l.0 - r.0).abs().max() < 1e-9);
            prop_assert!((l.rotation_determinant() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn circular_rotation_equivariant(
            angles in proptest::collection::vec(-0.8..0.8f64, 1..30),
            centre in angle(),
            delta in angle(),
        ) {
            let base: Vec<f64> = angles.iter().map(|a| a + centre).collect();
            let shifted: Vec<f64> = base.iter().map(|a| a + delta).collect();
            let s0 = circular_mean_std(&base).unwrap();
            let s1 = circular_mean_std(&shifted).unwrap();
            prop_assert!(wrap(s1.mean_theta - wrap(s0.mean_theta + delta)).abs() < 1e-9);
            prop_assert!((s1.std_theta - s0.std_theta).abs() < 1e-9);
        }

        #[test]
        fn motion_model_round_trip(a in pose(), b in pose()) {
            prop_assume!(a.distance_to(&b) > 1e-3);
            let u = odometry_motion_model(&a, &b);
            let c = u.apply(&a);
            prop_assert!((c.x - b.x).abs() < 1e-9);
            prop_assert!((c.y - b.y).abs() < 1e-9);
            prop_assert!(wrap(c.theta - b.theta).abs() < 1e-9);
            prop_assert!(u.trans >= 0.0);
        }

        #[test]
        fn pose_relative_inverts_compose(a in pose(), b in pose()) {
            let rel = b.relative_to(&a);
            let back = a.compose(&rel);
            prop_assert!((back.x - b.x).abs() < 1e-9);
            prop_assert!((back.y - b.y).abs() < 1e-9);
            prop_assert!(wrap(back.theta - b.theta).abs() < 1e-9);
        }
    }
}
