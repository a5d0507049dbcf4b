use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{dist, point_segment_distance, segments_intersect};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("tag id {0} is already deployed")]
    DuplicateTag(u32),
    #[error("world geometry must be finite")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointFeature {
    pub x: f64,
    pub y: f64,
    #[serde(default = "default_rcs")]
    pub rcs: f64,
}

fn default_rcs() -> f64 {
    1.0
}

impl PointFeature {
    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

/// Region of diffuse scatterers, such as a pile of debris.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClutterDisc {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
    /// Number of scatterers drawn inside the disc.
    pub count: usize,
    pub rcs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Wall {
    pub a: [f64; 2],
    pub b: [f64; 2],
    #[serde(default = "default_wall_rcs")]
    pub rcs: f64,
}

fn default_wall_rcs() -> f64 {
    0.6
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeployedTag {
    pub id: u32,
    pub x: f64,
    pub y: f64,
}

impl DeployedTag {
    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldModel {
    pub features: Vec<PointFeature>,
    pub clutter: Vec<ClutterDisc>,
    pub walls: Vec<Wall>,
    pub tags: Vec<DeployedTag>,
    /// `[xmin, ymin, xmax, ymax]`
    pub bounds: [f64; 4],
    /// Seed for scatterer placement inside clutter discs.
    pub seed: u64,
}

impl Default for WorldModel {
    fn default() -> Self {
        Self {
            features: Vec::new(),
            clutter: Vec::new(),
            walls: Vec::new(),
            tags: Vec::new(),
            bounds: [-50.0, -50.0, 50.0, 50.0],
            seed: 0,
        }
    }
}

impl WorldModel {
    pub fn validate(&self) -> Result<(), WorldError> {
        let finite = self.features.iter().all(|f| f.x.is_finite() && f.y.is_finite() && f.rcs.is_finite())
            && self.clutter.iter().all(|c| c.x.is_finite() && c.y.is_finite() && c.radius.is_finite())
            && self.walls.iter().all(|w| w.a.iter().chain(&w.b).all(|v| v.is_finite()))
            && self.tags.iter().all(|t| t.x.is_finite() && t.y.is_finite())
            && self.bounds.iter().all(|v| v.is_finite());
        if !finite {
            return Err(WorldError::NonFinite);
        }
        for (i, t) in self.tags.iter().enumerate() {
            if self.tags[..i].iter().any(|o| o.id == t.id) {
                return Err(WorldError::DuplicateTag(t.id));
            }
        }
        Ok(())
    }

    pub fn deploy_tag(&mut self, position: [f64; 2], id: u32) -> Result<(), WorldError> {
        if self.tags.iter().any(|t| t.id == id) {
            return Err(WorldError::DuplicateTag(id));
        }
        self.tags.push(DeployedTag {
            id,
            x: position[0],
            y: position[1],
        });
        Ok(())
    }

    pub fn tag(&self, id: u32) -> Option<&DeployedTag> {
        self.tags.iter().find(|t| t.id == id)
    }

    /// True when the straight segment between `a` and `b` crosses a wall.
    pub fn occluded(&self, a: [f64; 2], b: [f64; 2]) -> bool {
        self.walls.iter().any(|w| segments_intersect(a, b, w.a, w.b))
    }

    /// Distance from `p` to the closest wall, with that wall.
    pub fn nearest_wall(&self, p: [f64; 2]) -> Option<(f64, &Wall)> {
        self.walls
            .iter()
            .map(|w| (point_segment_distance(p, w.a, w.b).0, w))
            .min_by(|a, b| a.0.total_cmp(&b.0))
    }

    /// Scatterer positions inside all clutter discs, fixed by `seed`.
    pub fn scatterers(&self) -> Vec<PointFeature> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut out = Vec::new();
        for c in &self.clutter {
            for _ in 0..c.count {
                let r = c.radius * rng.random::<f64>().sqrt();
                let a = rng.random_range(0.0..std::f64::consts::TAU);
                out.push(PointFeature {
                    x: c.x + r * a.cos(),
                    y: c.y + r * a.sin(),
                    rcs: c.rcs,
                });
            }
        }
        out
    }

    /// Nearest point feature to `p`.
    pub fn nearest_feature(&self, p: [f64; 2]) -> Option<(usize, f64)> {
        self.features
            .iter()
            .enumerate()
            .map(|(i, f)| (i, dist(p, f.position())))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }
}

/// Mirror image of `p` across the infinite line through `w`.
pub fn reflect_across(p: [f64; 2], w: &Wall) -> [f64; 2] {
    let d = [w.b[0] - w.a[0], w.b[1] - w.a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    if len2 == 0.0 {
        return p;
    }
    let t = ((p[0] - w.a[0]) * d[0] + (p[1] - w.a[1]) * d[1]) / len2;
    let foot = [w.a[0] + t * d[0], w.a[1] + t * d[1]];
    [2.0 * foot[0] - p[0], 2.0 * foot[1] - p[1]]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deploy_tags() {
        let mut w = WorldModel::default();
        w.deploy_tag([1.0, 2.0], 0).unwrap();
        w.deploy_tag([3.0, 2.0], 1).unwrap();
        assert_eq!(w.tags.len(), 2);
        assert_eq!(w.deploy_tag([0.0, 0.0], 1), Err(WorldError::DuplicateTag(1)));
    }

    #[test]
    fn occlusion_and_reflection() {
        let mut w = WorldModel::default();
        w.walls.push(Wall {
            a: [1.0, -1.0],
            b: [1.0, 1.0],
            rcs: 1.0,
        });
        assert!(w.occluded([0.0, 0.0], [2.0, 0.0]));
        assert!(!w.occluded([0.0, 0.0], [0.5, 0.0]));
        assert_eq!(reflect_across([0.0, 0.5], &w.walls[0]), [2.0, 0.5]);
    }

    #[test]
    fn scatterers_are_fixed_by_seed() {
        let mut w = WorldModel::default();
        w.clutter.push(ClutterDisc {
            x: 0.0,
            y: 0.0,
            radius: 0.5,
            count: 20,
            rcs: 0.1,
        });
        let a = w.scatterers();
        assert_eq!(a, w.scatterers());
        assert!(a.iter().all(|s| s.x.hypot(s.y) <= 0.5));
        w.seed = 1;
        assert_ne!(a, w.scatterers());
    }
}
