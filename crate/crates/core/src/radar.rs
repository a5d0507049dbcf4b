//! UWB radar preprocessing: rectification, Savitzky–Golay smoothing, peak
//! picking, bin-to-range conversion and two-sensor trilateration.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{wrap, Pose2D};

/// Range covered by one radar bin.
pub const DEFAULT_BIN_RESOLUTION: f64 = 0.0064;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RadarError {
    #[error("Savitzky-Golay window must be odd and larger than the polynomial order (window {window}, order {order})")]
    InvalidWindow { window: usize, order: usize },
    #[error("frame of {len} samples is shorter than the smoothing window {window}")]
    FrameTooShort { len: usize, window: usize },
    #[error("radar sensors {0} and {1} share a centre; trilateration is undefined")]
    CoincidentSensors(u32, u32),
    #[error("invalid radar frame: {0}")]
    InvalidFrame(&'static str),
}

/// One sensor's raw amplitude profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarFrame {
    pub sensor_id: u32,
    pub amplitudes: Vec<f64>,
    pub bin_resolution: f64,
}

impl RadarFrame {
    pub fn new(sensor_id: u32, amplitudes: Vec<f64>, bin_resolution: f64) -> Result<Self, RadarError> {
        let frame = Self {
            sensor_id,
            amplitudes,
            bin_resolution,
        };
        frame.validate()?;
        Ok(frame)
    }

    pub fn validate(&self) -> Result<(), RadarError> {
        if self.amplitudes.is_empty() {
            return Err(RadarError::InvalidFrame("no amplitude bins"));
        }
        if !(self.bin_resolution > 0.0) {
            return Err(RadarError::InvalidFrame("bin resolution must be positive"));
        }
        Ok(())
    }

    fn with_amplitudes(&self, amplitudes: Vec<f64>) -> Self {
        Self {
            sensor_id: self.sensor_id,
            amplitudes,
            bin_resolution: self.bin_resolution,
        }
    }
}

/// Mounting and coverage of one radar module.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarSensorConfig {
    pub id: u32,
    /// Mounting pose in the robot frame; `theta` is the boresight.
    pub mount: Pose2D,
    pub fov_halfangle: f64,
    pub min_range: f64,
    pub max_range: f64,
}

impl RadarSensorConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.fov_halfangle > 0.0 && self.fov_halfangle < std::f64::consts::PI) {
            return Err(format!("radar {}: fov_halfangle must lie in (0, pi)", self.id));
        }
        if !(self.min_range >= 0.0 && self.min_range < self.max_range) {
            return Err(format!("radar {}: need 0 <= min_range < max_range", self.id));
        }
        Ok(())
    }

    /// Whether a robot-frame point lies inside this sensor's cone.
    pub fn in_fov(&self, p: [f64; 2]) -> bool {
        let dx = p[0] - self.mount.x;
        let dy = p[1] - self.mount.y;
        if dx == 0.0 && dy == 0.0 {
            return false;
        }
        wrap(dy.atan2(dx) - self.mount.theta).abs() <= self.fov_halfangle + 1e-12
    }

    pub fn in_range(&self, range: f64) -> bool {
        range >= self.min_range && range <= self.max_range
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadarPeak {
    pub bin: usize,
    pub range: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrilateratedPoint {
    /// Robot-frame position.
    pub position: [f64; 2],
    pub sensors: (u32, u32),
}

pub fn rectify(frame: &RadarFrame) -> RadarFrame {
    frame.with_amplitudes(frame.amplitudes.iter().map(|a| a.abs()).collect())
}

/// Savitzky–Golay evaluation weights for a `window`-point, `order`-degree fit.
///
/// Row `j` of the returned matrix holds the weights that evaluate the local
/// least-squares polynomial at window offset `j`.
#[derive(Debug, Clone)]
pub struct SavitzkyGolay {
    window: usize,
    weights: DMatrix<f64>,
}

impl SavitzkyGolay {
    pub fn new(window: usize, order: usize) -> Result<Self, RadarError> {
        if window.is_multiple_of(2) || window <= order {
            return Err(RadarError::InvalidWindow { window, order });
        }
        let half = (window / 2) as f64;
        let vander = DMatrix::from_fn(window, order + 1, |i, k| (i as f64 - half).powi(k as i32));
        // Projection onto the polynomial column space: V (VᵀV)⁻¹ Vᵀ.
        let gram = vander.transpose() * &vander;
        let gram_inv = gram
            .cholesky()
            .ok_or(RadarError::InvalidWindow { window, order })?
            .inverse();
        let weights = &vander * gram_inv * vander.transpose();
        Ok(Self { window, weights })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Weights applied to the window centred on a sample.
    pub fn centre_weights(&self) -> Vec<f64> {
        self.weights.row(self.window / 2).iter().copied().collect()
    }

    pub fn apply(&self, data: &[f64]) -> Result<Vec<f64>, RadarError> {
        let n = data.len();
        let w = self.window;
        if n < w {
            return Err(RadarError::FrameTooShort { len: n, window: w });
        }
        let half = w / 2;
        let centre = self.weights.row(half);
        let mut out = vec![0.0; n];
        for i in half..n - half {
            out[i] = centre
                .iter()
                .zip(&data[i - half..i + half + 1])
                .map(|(c, x)| c * x)
                .sum();
        }
        // Edges: evaluate the fit of the first/last full window off-centre.
        let head = DVector::from_column_slice(&data[..w]);
        let tail = DVector::from_column_slice(&data[n - w..]);
        let head_fit = &self.weights * head;
        let tail_fit = &self.weights * tail;
        out[..half].copy_from_slice(&head_fit.as_slice()[..half]);
        out[n - half..].copy_from_slice(&tail_fit.as_slice()[w - half..]);
        Ok(out)
    }
}

pub fn smooth(frame: &RadarFrame, window: usize, polyorder: usize) -> Result<RadarFrame, RadarError> {
    let sg = SavitzkyGolay::new(window, polyorder)?;
    Ok(frame.with_amplitudes(sg.apply(&frame.amplitudes)?))
}

pub fn bin_to_range(bin_index: usize, bin_resolution: f64) -> f64 {
    bin_index as f64 * bin_resolution
}

/// Strict local maxima at or above `amplitude_threshold`, thinned greedily by
/// descending amplitude so that survivors are at least `min_separation_bins`
/// apart. Returned in ascending bin order.
pub fn detect_peaks(frame: &RadarFrame, amplitude_threshold: f64, min_separation_bins: usize) -> Vec<RadarPeak> {
    let a = &frame.amplitudes;
    let mut candidates: Vec<usize> = (1..a.len().saturating_sub(1))
        .filter(|&i| a[i] >= amplitude_threshold && a[i] > a[i - 1] && a[i] > a[i + 1])
        .collect();
    candidates.sort_by(|&i, &j| a[j].total_cmp(&a[i]).then(i.cmp(&j)));

    let mut kept: Vec<usize> = Vec::new();
    for c in candidates {
        if kept.iter().all(|&k| c.abs_diff(k) >= min_separation_bins) {
            kept.push(c);
        }
    }
    kept.sort_unstable();
    kept.into_iter()
        .map(|bin| RadarPeak {
            bin,
            range: bin_to_range(bin, frame.bin_resolution),
            amplitude: a[bin],
        })
        .collect()
}

/// Fractional bin of a peak by fitting a parabola through the log-amplitudes
/// of the peak bin and its two neighbours (exact for Gaussian pulses).
/// Falls back to a linear-amplitude parabola when a neighbour is not positive.
pub fn refine_peak_bin(amplitudes: &[f64], bin: usize) -> f64 {
    if bin == 0 || bin + 1 >= amplitudes.len() {
        return bin as f64;
    }
    let (l, c, r) = (amplitudes[bin - 1], amplitudes[bin], amplitudes[bin + 1]);
    let (l, c, r) = if l > 0.0 && c > 0.0 && r > 0.0 {
        (l.ln(), c.ln(), r.ln())
    } else {
        (l, c, r)
    };
    let denom = l - 2.0 * c + r;
    if denom >= 0.0 {
        return bin as f64;
    }
    let offset = 0.5 * (l - r) / denom;
    bin as f64 + offset.clamp(-0.5, 0.5)
}

/// Median of the absolute amplitudes.
pub fn median_abs(amplitudes: &[f64]) -> f64 {
    if amplitudes.is_empty() {
        return 0.0;
    }
    let mut v: Vec<f64> = amplitudes.iter().map(|a| a.abs()).collect();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Tunables for turning raw frames into ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadarProcessing {
    pub sg_window: usize,
    pub sg_polyorder: usize,
    /// Detection threshold as a multiple of the frame's median |amplitude|.
    pub threshold_factor: f64,
    /// Lower bound on the detection threshold.
    pub amplitude_floor: f64,
    pub min_separation_bins: usize,
    /// Refine integer peak bins to sub-bin precision before ranging.
    pub subbin_refine: bool,
}

impl Default for RadarProcessing {
    fn default() -> Self {
        Self {
            sg_window: 11,
            sg_polyorder: 3,
            threshold_factor: 3.0,
            amplitude_floor: 0.05,
            min_separation_bins: 10,
            subbin_refine: true,
        }
    }
}

impl RadarProcessing {
    pub fn validate(&self) -> Result<(), String> {
        if self.sg_window.is_multiple_of(2) || self.sg_window <= self.sg_polyorder {
            return Err("radar.sg_window must be odd and exceed radar.sg_polyorder".into());
        }
        if !(self.threshold_factor >= 0.0) || !(self.amplitude_floor > 0.0) {
            return Err("radar thresholds must be positive".into());
        }
        Ok(())
    }
}

/// Full per-frame chain: rectify, smooth, threshold, pick and range peaks.
///
/// Peaks outside the sensor's `[min_range, max_range]` are dropped; the
/// region below `min_range` is dominated by direct-path coupling.
pub fn process_frame(
    frame: &RadarFrame,
    sensor: &RadarSensorConfig,
    proc: &RadarProcessing,
    sg: &SavitzkyGolay,
) -> Result<Vec<RadarPeak>, RadarError> {
    frame.validate()?;
    let rect = rectify(frame);
    let threshold = (proc.threshold_factor * median_abs(&rect.amplitudes)).max(proc.amplitude_floor);
    let smoothed = rect.with_amplitudes(sg.apply(&rect.amplitudes)?);
    let mut peaks = detect_peaks(&smoothed, threshold, proc.min_separation_bins);
    if proc.subbin_refine {
        for p in &mut peaks {
            p.range = refine_peak_bin(&smoothed.amplitudes, p.bin) * frame.bin_resolution;
        }
    }
    peaks.retain(|p| sensor.in_range(p.range));
    Ok(peaks)
}

/// Intersects the range circles of two sensors and returns the solution lying
/// inside both fields of view, if any.
pub fn trilaterate(
    range_a: f64,
    range_b: f64,
    cfg_a: &RadarSensorConfig,
    cfg_b: &RadarSensorConfig,
) -> Result<Option<TrilateratedPoint>, RadarError> {
    let pa = cfg_a.mount.position();
    let pb = cfg_b.mount.position();
    let ex = [pb[0] - pa[0], pb[1] - pa[1]];
    let d = ex[0].hypot(ex[1]);
    if d < 1e-9 {
        return Err(RadarError::CoincidentSensors(cfg_a.id, cfg_b.id));
    }
    if !(range_a > 0.0 && range_b > 0.0) || range_a + range_b < d || (range_a - range_b).abs() > d {
        return Ok(None);
    }
    let ux = [ex[0] / d, ex[1] / d];
    let along = (range_a * range_a - range_b * range_b + d * d) / (2.0 * d);
    let h = (range_a * range_a - along * along).max(0.0).sqrt();
    let base = [pa[0] + along * ux[0], pa[1] + along * ux[1]];
    let perp = [-ux[1], ux[0]];
    let candidates = [
        [base[0] + h * perp[0], base[1] + h * perp[1]],
        [base[0] - h * perp[0], base[1] - h * perp[1]],
    ];
    let boresight = [
        cfg_a.mount.theta.cos() + cfg_b.mount.theta.cos(),
        cfg_a.mount.theta.sin() + cfg_b.mount.theta.sin(),
    ];
    let best = candidates
        .iter()
        .filter(|p| cfg_a.in_fov(**p) && cfg_b.in_fov(**p))
        .max_by(|p, q| {
            let dp = (p[0] - base[0]) * boresight[0] + (p[1] - base[1]) * boresight[1];
            let dq = (q[0] - base[0]) * boresight[0] + (q[1] - base[1]) * boresight[1];
            dp.total_cmp(&dq)
        });
    Ok(best.map(|&position| TrilateratedPoint {
        position,
        sensors: (cfg_a.id, cfg_b.id),
    }))
}

/// Trilaterates every compatible peak pairing between two sensors.
pub fn trilaterate_pair(
    peaks_a: &[RadarPeak],
    peaks_b: &[RadarPeak],
    cfg_a: &RadarSensorConfig,
    cfg_b: &RadarSensorConfig,
) -> Result<Vec<TrilateratedPoint>, RadarError> {
    let mut out = Vec::new();
    for pa in peaks_a {
        for pb in peaks_b {
            if let Some(p) = trilaterate(pa.range, pb.range, cfg_a, cfg_b)? {
                out.push(p);
            }
        }
    }
    Ok(out)
}
