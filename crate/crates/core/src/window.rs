//! Moving-window accumulation of pose-stamped radar scan points and
//! prominent point-feature extraction.
//!
//! The window holds up to `m1 + n + m2` scans. Clustering only looks at the
//! central `n`; the `m1` older and `m2` newer scans are used to check that a
//! candidate is isolated.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dbscan::{centroid, dbscan};
use crate::geometry::{dist, dist2, Pose2D};

/// Translation/rotation slack when comparing against displacement thresholds.
const DISP_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WindowError {
    #[error("window holds {have} scans, extraction needs {need}")]
    NotReady { have: usize, need: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub n: usize,
    pub m1: usize,
    pub m2: usize,
    pub w: usize,
    pub min_disp_trans: f64,
    pub min_disp_rot: f64,
    pub r1: f64,
    pub r2: f64,
    pub dbscan_eps: f64,
    pub dbscan_min_samples: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            n: 50,
            m1: 150,
            m2: 50,
            w: 2,
            min_disp_trans: 0.005,
            min_disp_rot: 2.5e-3,
            r1: 0.30,
            r2: 0.15,
            dbscan_eps: 0.20,
            dbscan_min_samples: 10,
        }
    }
}

impl WindowConfig {
    pub fn capacity(&self) -> usize {
        self.m1 + self.n + self.m2
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.n == 0 || self.w >= self.n {
            return Err("window: need 0 <= w < n".into());
        }
        if !(self.r2 > 0.0 && self.r2 < self.r1) {
            return Err("window: need 0 < r2 < r1".into());
        }
        if !(self.dbscan_eps > 0.0) || self.dbscan_min_samples == 0 {
            return Err("window: dbscan eps must be positive and min_samples >= 1".into());
        }
        if !(self.min_disp_trans >= 0.0 && self.min_disp_rot >= 0.0) {
            return Err("window: displacement thresholds must be non-negative".into());
        }
        Ok(())
    }
}

/// True when the odometry has moved far enough to take a new scan.
pub fn should_accumulate(prev: &Pose2D, new: &Pose2D, cfg: &WindowConfig) -> bool {
    let trans = prev.distance_to(new);
    let rot = crate::geometry::wrap(new.theta - prev.theta).abs();
    trans >= cfg.min_disp_trans - DISP_TOLERANCE || rot >= cfg.min_disp_rot - DISP_TOLERANCE
}

/// A scan point in the odometry frame, with the sensor pair that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub position: [f64; 2],
    pub sensors: (u32, u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanEntry {
    /// Accumulation index (1-based, global).
    pub index: usize,
    pub pose: Pose2D,
    pub points: Vec<ScanPoint>,
}

#[derive(Debug, Clone)]
pub struct ScanBuffer {
    capacity: usize,
    entries: VecDeque<ScanEntry>,
}

impl ScanBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            entries: VecDeque::with_capacity(capacity + 1),
        }
    }

    pub fn for_config(cfg: &WindowConfig) -> Self {
        Self::new(cfg.capacity())
    }

    /// Appends a scan; returns the evicted oldest entry when over capacity.
    pub fn push_scan(&mut self, entry: ScanEntry) -> Option<ScanEntry> {
        self.entries.push_back(entry);
        if self.entries.len() > self.capacity {
            self.entries.pop_front()
        } else {
            None
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn entries(&self) -> impl Iterator<Item = &ScanEntry> {
        self.entries.iter()
    }

    pub fn get(&self, i: usize) -> Option<&ScanEntry> {
        self.entries.get(i)
    }

    pub fn all_points(&self) -> Vec<[f64; 2]> {
        self.entries
            .iter()
            .flat_map(|e| e.points.iter().map(|p| p.position))
            .collect()
    }
}

/// Isolation check: no window point in the annulus `r2 < d <= r1` around `centre`.
///
/// An empty neighbourhood passes vacuously; callers must first make sure a
/// cluster exists.
pub fn prominence_test(centre: [f64; 2], window_points: &[[f64; 2]], r1: f64, r2: f64) -> bool {
    let (r1s, r2s) = (r1 * r1, r2 * r2);
    let mut inner = 0usize;
    let mut outer = 0usize;
    for p in window_points {
        let d = dist2(centre, *p);
        if d <= r1s {
            outer += 1;
            if d <= r2s {
                inner += 1;
            }
        }
    }
    inner == outer
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointFeatureObservation {
    pub range: f64,
    pub bearing: f64,
    /// Pose the range/bearing are measured from.
    pub reference: Pose2D,
    /// Feature position in the odometry frame.
    pub position: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub x0: Pose2D,
    pub xt: Pose2D,
    pub observations: Vec<PointFeatureObservation>,
    /// Cluster means that failed the isolation test.
    pub rejected: Vec<[f64; 2]>,
}

/// Clusters the central scans and keeps isolated cluster means as
/// range/bearing observations from the pose `w` scans into the central block.
pub fn extract_features(buffer: &ScanBuffer, cfg: &WindowConfig) -> Result<Extraction, WindowError> {
    let need = cfg.n + cfg.m2;
    let len = buffer.len();
    if len < need {
        return Err(WindowError::NotReady { have: len, need });
    }
    let start = len - cfg.m2 - cfg.n;
    let central: Vec<&ScanEntry> = buffer.entries.range(start..start + cfg.n).collect();
    let x0 = central[0].pose;
    let xt = central[cfg.w].pose;

    let central_points: Vec<[f64; 2]> = central
        .iter()
        .flat_map(|e| e.points.iter().map(|p| p.position))
        .collect();
    let window_points = buffer.all_points();

    let clustering = dbscan(&central_points, cfg.dbscan_eps, cfg.dbscan_min_samples);
    let mut prominent = Vec::new();
    let mut rejected = Vec::new();
    for members in &clustering.clusters {
        if members.len() < cfg.dbscan_min_samples {
            continue;
        }
        let mean = centroid(&central_points, members);
        if prominence_test(mean, &window_points, cfg.r1, cfg.r2) {
            prominent.push(mean);
        } else {
            rejected.push(mean);
        }
    }

    let merged = merge_close(prominent, cfg.r2);
    let observations = merged
        .into_iter()
        .filter(|m| prominence_test(*m, &window_points, cfg.r1, cfg.r2))
        .filter_map(|m| {
            let local = xt.inverse_transform_point(m);
            let range = local[0].hypot(local[1]);
            (range > 0.0).then(|| PointFeatureObservation {
                range,
                bearing: local[1].atan2(local[0]),
                reference: xt,
                position: m,
            })
        })
        .collect();

    Ok(Extraction {
        x0,
        xt,
        observations,
        rejected,
    })
}

/// Repeatedly averages the closest pair of means while it is closer than `radius`.
fn merge_close(mut means: Vec<[f64; 2]>, radius: f64) -> Vec<[f64; 2]> {
    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..means.len() {
            for j in i + 1..means.len() {
                let d = dist(means[i], means[j]);
                if d < radius && best.is_none_or(|(_, _, bd)| d < bd) {
                    best = Some((i, j, d));
                }
            }
        }
        match best {
            Some((i, j, _)) => {
                let b = means.remove(j);
                let a = means[i];
                means[i] = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
            }
            None => return means,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(index: usize, x: f64, pts: &[[f64; 2]]) -> ScanEntry {
        ScanEntry {
            index,
            pose: Pose2D::new(x, 0.0, 0.0),
            points: pts
                .iter()
                .map(|&position| ScanPoint {
                    position,
                    sensors: (0, 1),
                })
                .collect(),
        }
    }

    #[test]
    fn accumulate_thresholds() {
        let cfg = WindowConfig::default();
        let p = Pose2D::new(1.0, 2.0, 0.3);
        assert!(!should_accumulate(&p, &p, &cfg));
        let fwd = |d: f64| Pose2D::new(1.0 + d * 0.3f64.cos(), 2.0 + d * 0.3f64.sin(), 0.3);
        assert!(should_accumulate(&p, &fwd(0.006), &cfg));
        assert!(!should_accumulate(&p, &fwd(0.001), &cfg));
        assert!(should_accumulate(&p, &Pose2D::new(1.0, 2.0, 0.303), &cfg));
    }

    #[test]
    fn push_and_evict() {
        let mut b = ScanBuffer::new(250);
        assert!(b.push_scan(entry(1, 0.0, &[])).is_none());
        assert_eq!(b.len(), 1);
        for i in 2..=250 {
            assert!(b.push_scan(entry(i, 0.0, &[])).is_none());
        }
        let ev = b.push_scan(entry(251, 0.0, &[])).unwrap();
        assert_eq!(ev.index, 1);
        assert_eq!(b.len(), 250);
        let idx: Vec<usize> = b.entries().map(|e| e.index).collect();
        assert_eq!(idx, (2..=251).collect::<Vec<_>>());
    }

    #[test]
    fn prominence_examples() {
        let cluster: Vec<[f64; 2]> = (0..10).map(|i| [0.01 * i as f64, 0.0]).collect();
        assert!(prominence_test([0.05, 0.0], &cluster, 0.30, 0.15));
        let mut with_stray = cluster.clone();
        with_stray.push([0.25, 0.0]);
        assert!(!prominence_test([0.05, 0.0], &with_stray, 0.30, 0.15));
        assert!(prominence_test([5.0, 5.0], &cluster, 0.30, 0.15));
    }

    #[test]
    fn not_ready_until_n_plus_m2() {
        let cfg = WindowConfig::default();
        let mut b = ScanBuffer::for_config(&cfg);
        for i in 1..100 {
            b.push_scan(entry(i, i as f64 * 0.01, &[]));
        }
        assert_eq!(
            extract_features(&b, &cfg),
            Err(WindowError::NotReady { have: 99, need: 100 })
        );
        b.push_scan(entry(100, 1.0, &[]));
        let ex = extract_features(&b, &cfg).unwrap();
        assert!(ex.observations.is_empty());
        assert_eq!(ex.x0.x, 0.01);
        assert!((ex.xt.x - 0.03).abs() < 1e-12);
    }

    #[test]
    fn isolated_feature_is_extracted() {
        let cfg = WindowConfig::default();
        let mut b = ScanBuffer::for_config(&cfg);
        let feature = [1.0, 1.5];
        for i in 1..=250 {
            let jitter = 0.002 * ((i % 7) as f64 - 3.0);
            b.push_scan(entry(i, i as f64 * 0.005, &[[feature[0] + jitter, feature[1] - jitter]]));
        }
        let ex = extract_features(&b, &cfg).unwrap();
        assert_eq!(ex.observations.len(), 1);
        let o = ex.observations[0];
        assert!(dist(o.position, feature) < 0.005);
        let back = o.reference.transform_point([o.range * o.bearing.cos(), o.range * o.bearing.sin()]);
        assert!(dist(back, o.position) < 1e-9);
    }

    #[test]
    fn wall_is_not_a_feature() {
        let cfg = WindowConfig::default();
        let mut b = ScanBuffer::for_config(&cfg);
        for i in 1..=250 {
            let x = i as f64 * 0.005;
            b.push_scan(entry(i, x, &[[x, 1.5]]));
        }
        let ex = extract_features(&b, &cfg).unwrap();
        assert!(ex.observations.is_empty());
        assert!(!ex.rejected.is_empty());
    }

    #[test]
    fn merge_averages_close_means() {
        let m = merge_close(vec![[0.0, 0.0], [0.1, 0.0], [5.0, 0.0]], 0.15);
        assert_eq!(m, vec![[0.05, 0.0], [5.0, 0.0]]);
    }
}
