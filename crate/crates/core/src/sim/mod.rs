//! Seeded synthesis of ground truth, drifting odometry, radar frames and AOA
//! readings.
//!
//! Ground truth and odometry both integrate the commanded increments; only
//! the odometry copy is corrupted, so with the noise model switched off the
//! two are bit-identical.

pub mod noise;
pub mod script;
pub mod sensors;
pub mod world;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use noise::{AoaNoise, GhostModel, NoiseConfig, OdomNoise, RadarNoise, RssiModel};
pub use script::{ScriptRunner, ScriptStep, TrajectoryScript};
pub use sensors::{synth_aoa_readings, synth_radar_frames, ReadingContext, BIN_RESOLUTION};
pub use world::{ClutterDisc, DeployedTag, PointFeature, Wall, WorldError, WorldModel};

use crate::aoa::{AnchorRingConfig, AoaReading};
use crate::geometry::{MotionIncrement, Pose2D};
use crate::radar::{RadarFrame, RadarSensorConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimClock {
    pub t: f64,
    pub dt: f64,
    pub seed: u64,
}

/// Everything the simulator produced for one tick.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTick {
    pub t: f64,
    pub truth: Pose2D,
    pub odom: Pose2D,
    pub command: MotionIncrement,
    pub frames: Vec<RadarFrame>,
    pub readings: Vec<AoaReading>,
}

/// Applies the odometry error model to one commanded increment.
pub fn corrupt_increment<D: rand::Rng>(u: &MotionIncrement, noise: &OdomNoise, rng: &mut D) -> MotionIncrement {
    let mut g = |sigma: f64| {
        if sigma > 0.0 {
            Normal::new(0.0, sigma).expect("finite sigma").sample(rng)
        } else {
            0.0
        }
    };
    // Variances grow linearly with distance and angle, so drift does not
    // depend on the tick length.
    let d = u.trans.abs();
    let trans = u.trans * (1.0 + noise.trans_bias) + g(noise.trans_sigma_per_m * d.sqrt());
    let heading = noise.heading_bias_per_m * d + g(noise.heading_sigma_per_m * d.sqrt());
    let rot1 = u.rot1 * (1.0 + noise.rot_bias) + g(noise.rot_sigma_per_rad * u.rot1.abs().sqrt()) + heading;
    let rot2 = u.rot2 * (1.0 + noise.rot_bias) + g(noise.rot_sigma_per_rad * u.rot2.abs().sqrt());
    MotionIncrement { rot1, trans, rot2 }
}

pub struct Simulator {
    pub world: WorldModel,
    scatterers: Vec<PointFeature>,
    runner: ScriptRunner,
    noise: NoiseConfig,
    ring: AnchorRingConfig,
    sensors: Vec<RadarSensorConfig>,
    clock: SimClock,
    truth: Pose2D,
    odom: Pose2D,
    rng: ChaCha8Rng,
    seq: u64,
    ghosts: u64,
    started: bool,
}

impl Simulator {
    pub fn new(
        world: WorldModel,
        script: TrajectoryScript,
        noise: NoiseConfig,
        ring: AnchorRingConfig,
        sensors: Vec<RadarSensorConfig>,
        dt: f64,
        seed: u64,
    ) -> Self {
        let start = script.start;
        Self {
            scatterers: world.scatterers(),
            world,
            runner: ScriptRunner::new(script),
            noise,
            ring,
            sensors,
            clock: SimClock { t: 0.0, dt, seed },
            truth: start,
            odom: start,
            rng: ChaCha8Rng::seed_from_u64(seed),
            seq: 0,
            ghosts: 0,
            started: false,
        }
    }

    pub fn truth(&self) -> Pose2D {
        self.truth
    }

    pub fn odom(&self) -> Pose2D {
        self.odom
    }

    pub fn clock(&self) -> SimClock {
        self.clock
    }

    /// Number of ghost readings emitted so far.
    pub fn ghosts_emitted(&self) -> u64 {
        self.ghosts
    }

    pub fn readings_emitted(&self) -> u64 {
        self.seq
    }

    /// Advances one tick. With `halt` the robot stands still and the script
    /// does not progress. Returns `None` once the script is exhausted. The
    /// first call reports the start pose without moving.
    pub fn step(&mut self, halt: bool) -> Option<SimTick> {
        let command = if !self.started {
            self.started = true;
            MotionIncrement::zero()
        } else if halt {
            self.clock.t = self.next_time();
            MotionIncrement::zero()
        } else {
            let u = self.runner.next_command(&self.truth, self.clock.dt)?;
            self.clock.t = self.next_time();
            u
        };
        self.truth = command.apply(&self.truth);
        let noisy = corrupt_increment(&command, &self.noise.odom, &mut self.rng);
        self.odom = noisy.apply(&self.odom);

        let frames = synth_radar_frames(&self.world, &self.scatterers, &self.truth, &self.sensors, &self.noise, &mut self.rng);
        let ctx = ReadingContext {
            t: self.clock.t,
            v_trans: command.trans.abs() / self.clock.dt,
            v_rot: (command.rot1 + command.rot2).abs() / self.clock.dt,
        };
        let readings = synth_aoa_readings(&self.world, &self.truth, &self.ring, &self.noise, ctx, &mut self.seq, &mut self.rng);
        self.ghosts += readings.iter().filter(|r| r.is_ghost()).count() as u64;
        Some(SimTick {
            t: self.clock.t,
            truth: self.truth,
            odom: self.odom,
            command,
            frames,
            readings,
        })
    }

    /// Integer tick count keeps timestamps free of accumulated round-off.
    fn next_time(&self) -> f64 {
        let k = (self.clock.t / self.clock.dt).round() + 1.0;
        k * self.clock.dt
    }
}
