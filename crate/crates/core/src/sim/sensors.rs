//! Synthetic radar frames and AOA readings.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::noise::NoiseConfig;
use super::world::{reflect_across, PointFeature, WorldModel};
use crate::aoa::{AnchorRingConfig, AoaReading, Provenance};
use crate::geometry::{point_segment_distance, wrap, Pose2D};
use crate::radar::{RadarFrame, RadarSensorConfig};

pub const BIN_RESOLUTION: f64 = 0.0064;

/// Bins beyond the sensor's maximum range kept in each frame.
const TAIL_BINS: usize = 32;

fn gaussian<R: Rng>(rng: &mut R, sigma: f64) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).expect("finite sigma").sample(rng)
    } else {
        0.0
    }
}

fn add_bump(amplitudes: &mut [f64], centre_bin: f64, amplitude: f64, sigma_bins: f64) {
    let reach = (5.0 * sigma_bins).ceil() as i64;
    let c = centre_bin.round() as i64;
    for k in (c - reach).max(0)..=(c + reach).min(amplitudes.len() as i64 - 1) {
        let z = (k as f64 - centre_bin) / sigma_bins;
        amplitudes[k as usize] += amplitude * (-0.5 * z * z).exp();
    }
}

/// One frame per sensor for the true robot pose.
///
/// Visible point features and scatterers produce a Gaussian return at their
/// range scaled by `rcs / range`; walls return from the foot of the
/// perpendicular when that foot is inside the cone. Anything behind a wall
/// is hidden.
pub fn synth_radar_frames<R: Rng>(
    world: &WorldModel,
    scatterers: &[PointFeature],
    truth: &Pose2D,
    sensors: &[RadarSensorConfig],
    noise: &NoiseConfig,
    rng: &mut R,
) -> Vec<RadarFrame> {
    let mut frames = Vec::with_capacity(sensors.len());
    for sensor in sensors {
        let bins = (sensor.max_range / BIN_RESOLUTION).ceil() as usize + TAIL_BINS;
        let mut amplitudes = vec![0.0; bins];
        let mount = truth.compose(&sensor.mount);
        let origin = mount.position();
        let robot_point = |p: [f64; 2]| truth.inverse_transform_point(p);

        let mut returns: Vec<(f64, f64)> = Vec::new();
        for f in world.features.iter().chain(scatterers) {
            let p = f.position();
            let range = (p[0] - origin[0]).hypot(p[1] - origin[1]);
            if sensor.in_fov(robot_point(p)) && sensor.in_range(range) && !world.occluded(origin, p) {
                returns.push((range, f.rcs));
            }
        }
        for w in &world.walls {
            let (range, foot) = point_segment_distance(origin, w.a, w.b);
            let interior = foot != w.a && foot != w.b;
            if interior && sensor.in_fov(robot_point(foot)) && sensor.in_range(range) {
                returns.push((range, w.rcs));
            }
        }
        for (range, rcs) in returns {
            let jittered = range + gaussian(rng, noise.radar.range_jitter_sigma);
            add_bump(
                &mut amplitudes,
                jittered / BIN_RESOLUTION,
                rcs / range.max(0.1),
                noise.radar.bump_sigma_bins,
            );
        }
        if noise.radar.amplitude_sigma > 0.0 {
            for a in &mut amplitudes {
                *a += gaussian(rng, noise.radar.amplitude_sigma);
            }
        }
        if noise.radar.quantization > 0.0 {
            let q = noise.radar.quantization;
            for a in &mut amplitudes {
                *a = (*a / q).round() * q;
                if *a == 0.0 {
                    // Avoid writing negative zero.
                    *a = 0.0;
                }
            }
        }
        frames.push(RadarFrame {
            sensor_id: sensor.id,
            amplitudes,
            bin_resolution: BIN_RESOLUTION,
        });
    }
    frames
}

/// Robot speeds and timestamp attached to every reading of a tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReadingContext {
    pub t: f64,
    pub v_trans: f64,
    pub v_rot: f64,
}

/// Readings from every anchor that can see a deployed tag, plus ghosts when
/// the robot is close to a wall. `seq` numbers every emitted reading.
pub fn synth_aoa_readings<R: Rng>(
    world: &WorldModel,
    truth: &Pose2D,
    ring: &AnchorRingConfig,
    noise: &NoiseConfig,
    ctx: ReadingContext,
    seq: &mut u64,
    rng: &mut R,
) -> Vec<AoaReading> {
    let mut out = Vec::new();
    let half_fov = ring.fov / 2.0;
    let ghost_wall = if noise.ghost.p_ghost > 0.0 {
        world
            .nearest_wall(truth.position())
            .filter(|(d, _)| *d < noise.ghost.near_wall)
            .map(|(_, w)| *w)
    } else {
        None
    };
    let rssi = &noise.rssi;

    for tag in &world.tags {
        for anchor_id in 0..ring.count() as u32 {
            let anchor = truth.compose(&ring.anchor_pose(anchor_id).expect("id within ring"));
            let local = anchor.inverse_transform_point(tag.position());
            let range = local[0].hypot(local[1]);
            let phi = local[1].atan2(local[0]);
            let in_range = range >= ring.det_range_min && range <= ring.det_range_max;
            let visible = in_range && phi.abs() <= half_fov;

            let mut emit = |range: f64, phi: f64, nlos: bool, ghost: bool, rng: &mut R| {
                let delta = if nlos {
                    rssi.nlos_delta_min + rng.random::<f64>() * rssi.nlos_delta_spread
                } else {
                    rng.random::<f64>() * rssi.los_delta_max
                };
                out.push(AoaReading {
                    t: ctx.t,
                    anchor_id,
                    tag_id: tag.id,
                    range: range.max(0.0),
                    phi: phi.clamp(-half_fov, half_fov),
                    fp_rssi: rssi.rx_base - delta,
                    rx_rssi: rssi.rx_base,
                    v_trans: ctx.v_trans,
                    v_rot: ctx.v_rot,
                    provenance: Some(Provenance { seq: *seq, ghost }),
                });
                *seq += 1;
            };

            if visible {
                let nlos = world.occluded(anchor.position(), tag.position());
                let d = range + gaussian(rng, noise.aoa.range_sigma);
                let b = phi + gaussian(rng, noise.aoa.bearing_sigma);
                emit(d, b, nlos, false, rng);
            }

            let Some(wall) = ghost_wall else { continue };
            if !in_range || rng.random::<f64>() >= noise.ghost.p_ghost {
                continue;
            }
            let (base_range, base_phi) = if visible {
                // Reflection off the nearby wall.
                let image = anchor.inverse_transform_point(reflect_across(tag.position(), &wall));
                (image[0].hypot(image[1]), image[1].atan2(image[0]))
            } else {
                // Front-back ambiguity of an anchor facing away from the tag.
                (range, wrap(PI - phi))
            };
            let [lo, hi] = noise.ghost.range_offset;
            let offset = lo + rng.random::<f64>() * (hi - lo);
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let d = base_range + sign * offset;
            let b = wrap(base_phi + gaussian(rng, noise.ghost.bearing_sigma));
            emit(d, b, false, true, rng);
        }
    }
    out
}
