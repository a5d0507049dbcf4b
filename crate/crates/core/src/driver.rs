//! Sequential orchestrator: displacement-gated radar accumulation,
//! motion-gated tag collection, window-triggered SLAM steps and tag
//! deployment.
//!
//! The EKF robot pose tracks the odometry pose `w` scans into the central
//! block of the moving window, so each SLAM step predicts from the previous
//! such pose to the current one and then applies radar and tag updates.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aoa::{
    anchor_to_robot_frame, filter_tag_observations, gate_reading, initialize_tag, motion_gate, static_gates,
    AnchorRingConfig, AoaError, AoaReading, DeploymentMonitor, GateConfig, TagBuffer, TagFilterOutcome, TagPrior,
    TagSample,
};
use crate::config::DriverConfig;
use crate::ekf::{Association, EkfError, LandmarkKind, RangeBearingObs, SlamState};
use crate::geometry::{odometry_motion_model, Pose2D};
use crate::log::{DeployEvent, DeployRecord, FeatureRecord, OdomRecord, Record, RunLog, Snapshot};
use crate::radar::{process_frame, trilaterate_pair, RadarError, RadarFrame, SavitzkyGolay};
use crate::window::{extract_features, ScanBuffer, ScanEntry, ScanPoint, WindowConfig, WindowError};

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("tick at t={t} precedes previous tick at t={prev}")]
    OutOfOrder { t: f64, prev: f64 },
    #[error(transparent)]
    Radar(#[from] RadarError),
    #[error(transparent)]
    Window(#[from] WindowError),
    #[error(transparent)]
    Ekf(#[from] EkfError),
    #[error(transparent)]
    Aoa(#[from] AoaError),
}

/// Which sensors feed the estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Full,
    RadarOnly,
    AoaOnly,
    OdomOnly,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Full, Mode::RadarOnly, Mode::AoaOnly, Mode::OdomOnly];

    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Full => "full",
            Mode::RadarOnly => "radar_only",
            Mode::AoaOnly => "aoa_only",
            Mode::OdomOnly => "odom_only",
        }
    }

    pub fn radar_updates(&self) -> bool {
        matches!(self, Mode::Full | Mode::RadarOnly)
    }

    pub fn tags(&self) -> bool {
        matches!(self, Mode::Full | Mode::AoaOnly)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown mode '{s}' (expected one of full, radar_only, aoa_only, odom_only)"))
    }
}

/// All sensor input sharing one timestamp.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TickInput {
    pub t: f64,
    pub odom: Option<OdomRecord>,
    pub radar: Vec<RadarFrame>,
    pub aoa: Vec<AoaReading>,
}

impl TickInput {
    pub fn records(&self) -> impl Iterator<Item = Record> + '_ {
        let t = self.t;
        self.odom
            .iter()
            .cloned()
            .map(Record::Odom)
            .chain(self.radar.iter().map(move |f| {
                Record::Radar(crate::log::RadarRecord {
                    t,
                    frame: f.clone(),
                })
            }))
            .chain(self.aoa.iter().cloned().map(Record::Aoa))
    }
}

/// Groups consecutive input records with equal timestamps into ticks;
/// output records are skipped.
pub fn group_ticks(records: &[Record]) -> Vec<TickInput> {
    let mut ticks: Vec<TickInput> = Vec::new();
    for r in records.iter().filter(|r| r.is_input()) {
        let t = r.t();
        if ticks.last().is_none_or(|tick| tick.t != t) {
            ticks.push(TickInput {
                t,
                ..TickInput::default()
            });
        }
        let tick = ticks.last_mut().expect("just pushed");
        match r {
            Record::Odom(o) => tick.odom = Some(o.clone()),
            Record::Radar(f) => tick.radar.push(f.frame.clone()),
            Record::Aoa(a) => tick.aoa.push(a.clone()),
            _ => {}
        }
    }
    ticks
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEntry {
    pub step: usize,
    /// Accumulation index of the tracked pose.
    pub scan: usize,
    pub t: f64,
    pub estimate: Pose2D,
    pub odom: Pose2D,
    pub truth: Option<Pose2D>,
}

/// Invariant bookkeeping, filled in when auditing is enabled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Audit {
    pub steps: usize,
    pub max_asymmetry: f64,
    /// Steps after which Σ had an eigenvalue below −[`PSD_TOLERANCE`].
    pub psd_violations: usize,
    pub updates: usize,
    /// Updates whose trace increased beyond round-off.
    pub trace_violations: usize,
    /// Steps where a tag update preceded a radar update.
    pub order_violations: usize,
    /// Buffered samples that fail a static gate.
    pub gate_violations: usize,
    /// Buffered samples captured while the robot was actually stationary.
    pub halt_violations: usize,
    /// Readings rejected while the robot was actually stationary.
    pub halt_rejections: usize,
    pub buffered: usize,
}

impl Default for Audit {
    fn default() -> Self {
        Self {
            steps: 0,
            max_asymmetry: 0.0,
            psd_violations: 0,
            updates: 0,
            trace_violations: 0,
            order_violations: 0,
            gate_violations: 0,
            halt_violations: 0,
            halt_rejections: 0,
            buffered: 0,
        }
    }
}

pub const PSD_TOLERANCE: f64 = 1e-9;
pub const SYMMETRY_TOLERANCE: f64 = 1e-9;

/// Relative tolerance for the trace check; Joseph-form round-off only.
const TRACE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
enum Phase {
    Normal,
    Initializing {
        tag_id: u32,
        since: f64,
        samples: Vec<(f64, f64)>,
    },
}

#[derive(Debug, Clone, PartialEq)]
struct PendingTag {
    tag_id: u32,
    /// Odometry pose the tag was measured from.
    pose: Pose2D,
    range: f64,
    bearing: f64,
    q: Matrix2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct ScanMeta {
    t: f64,
    truth: Option<Pose2D>,
}

/// Output of one tick.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TickOutput {
    pub records: Vec<Record>,
    /// Tag the robot drops this tick.
    pub deploy: Option<u32>,
    pub slam_step: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct AssociationStats {
    pub associated: usize,
    pub new_landmarks: usize,
    pub tag_updates: usize,
    pub tag_rejections: usize,
}

pub struct Driver {
    cfg: DriverConfig,
    mode: Mode,
    window: WindowConfig,
    ring: AnchorRingConfig,
    gates: GateConfig,
    sg: SavitzkyGolay,
    audit_enabled: bool,

    last_t: Option<f64>,
    odom: Option<OdomRecord>,
    speeds: (f64, f64),
    last_scan_pose: Option<Pose2D>,
    scans: ScanBuffer,
    scan_meta: Vec<ScanMeta>,
    tag_buffer: TagBuffer,

    ekf: Option<SlamState>,
    tracked: Option<Pose2D>,
    step: usize,

    monitor: DeploymentMonitor,
    phase: Phase,
    started: bool,
    next_tag: u32,
    pending: Vec<PendingTag>,
    known_tags: BTreeSet<u32>,

    trajectory: Vec<TrajectoryEntry>,
    accepted_seqs: BTreeSet<u64>,
    stats: AssociationStats,
    deployments: Vec<u32>,
    audit: Audit,
}

impl Driver {
    pub fn new(cfg: DriverConfig, mode: Mode) -> Result<Self, DriverError> {
        cfg.validate().map_err(DriverError::Config)?;
        let window = cfg.window();
        let sg = SavitzkyGolay::new(cfg.radar.sg_window, cfg.radar.sg_polyorder)?;
        Ok(Self {
            mode,
            ring: cfg.ring(),
            gates: cfg.gates(),
            scans: ScanBuffer::for_config(&window),
            tag_buffer: TagBuffer::new(cfg.tag_horizon),
            monitor: DeploymentMonitor::new(cfg.dep_dist),
            window,
            sg,
            audit_enabled: false,
            last_t: None,
            odom: None,
            speeds: (0.0, 0.0),
            last_scan_pose: None,
            scan_meta: Vec::new(),
            ekf: None,
            tracked: None,
            step: 0,
            phase: Phase::Normal,
            started: false,
            next_tag: 0,
            pending: Vec::new(),
            known_tags: BTreeSet::new(),
            trajectory: Vec::new(),
            accepted_seqs: BTreeSet::new(),
            stats: AssociationStats::default(),
            deployments: Vec::new(),
            audit: Audit::default(),
            cfg,
        })
    }

    /// Turns on per-step covariance and gate auditing (costly on large maps).
    pub fn with_audit(mut self, enabled: bool) -> Self {
        self.audit_enabled = enabled;
        self
    }

    pub fn config(&self) -> &DriverConfig {
        &self.cfg
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn state(&self) -> Option<&SlamState> {
        self.ekf.as_ref()
    }

    pub fn trajectory(&self) -> &[TrajectoryEntry] {
        &self.trajectory
    }

    pub fn slam_steps(&self) -> usize {
        self.step
    }

    pub fn accumulations(&self) -> usize {
        self.scan_meta.len()
    }

    /// True when no audited invariant has been violated so far.
    pub fn audit_clean(&self) -> bool {
        let a = &self.audit;
        a.max_asymmetry <= SYMMETRY_TOLERANCE
            && a.psd_violations == 0
            && a.trace_violations == 0
            && a.order_violations == 0
            && a.gate_violations == 0
            && a.halt_violations == 0
    }

    pub fn audit(&self) -> &Audit {
        &self.audit
    }

    pub fn stats(&self) -> &AssociationStats {
        &self.stats
    }

    pub fn deployments(&self) -> &[u32] {
        &self.deployments
    }

    /// Provenance sequence numbers of readings that were members of an
    /// accepted tag cluster.
    pub fn accepted_seqs(&self) -> &BTreeSet<u64> {
        &self.accepted_seqs
    }

    /// True while a freshly dropped tag is being initialized.
    pub fn halt_requested(&self) -> bool {
        matches!(self.phase, Phase::Initializing { .. })
    }

    pub fn speeds(&self) -> (f64, f64) {
        self.speeds
    }

    pub fn tick(&mut self, input: &TickInput) -> Result<TickOutput, DriverError> {
        if let Some(prev) = self.last_t {
            if input.t < prev {
                return Err(DriverError::OutOfOrder { t: input.t, prev });
            }
        }
        self.last_t = Some(input.t);
        let mut out = TickOutput::default();

        if !self.started {
            self.started = true;
            if self.mode.tags() {
                self.command_deploy(input.t, &mut out);
            }
        }

        if let Some(odom) = &input.odom {
            if let Some(prev) = &self.odom {
                let dt = odom.t - prev.t;
                if dt > 0.0 {
                    let (a, b) = (prev.pose(), odom.pose());
                    self.speeds = (a.distance_to(&b) / dt, crate::geometry::wrap(b.theta - a.theta).abs() / dt);
                }
            }
            self.odom = Some(odom.clone());
            let pose = odom.pose();
            let moved = self
                .last_scan_pose
                .is_none_or(|p| crate::window::should_accumulate(&p, &pose, &self.window));
            if moved {
                self.accumulate(input, pose, odom.truth())?;
                self.last_scan_pose = Some(pose);
                if self.scans.len() >= self.cfg.n + self.cfg.m2 && self.scan_meta.len() > self.cfg.n + self.cfg.m2 {
                    self.slam_step(input.t, &mut out)?;
                }
            }
        }

        self.handle_readings(input, &mut out)?;
        Ok(out)
    }

    fn command_deploy(&mut self, t: f64, out: &mut TickOutput) {
        let tag_id = self.next_tag;
        self.next_tag += 1;
        self.phase = Phase::Initializing {
            tag_id,
            since: t,
            samples: Vec::new(),
        };
        self.monitor.reset();
        self.deployments.push(tag_id);
        out.deploy = Some(tag_id);
        out.records.push(Record::Deploy(DeployRecord {
            t,
            tag_id,
            event: DeployEvent::Command,
            x: None,
            y: None,
            gt_x: None,
            gt_y: None,
        }));
    }

    fn accumulate(&mut self, input: &TickInput, pose: Pose2D, truth: Option<Pose2D>) -> Result<(), DriverError> {
        let mut peaks = Vec::new();
        for sensor in &self.cfg.rig.sensors {
            let found = match input.radar.iter().find(|f| f.sensor_id == sensor.id) {
                Some(frame) => process_frame(frame, sensor, &self.cfg.radar, &self.sg)?,
                None => Vec::new(),
            };
            peaks.push((sensor.id, found));
        }
        let peaks_of = |id: u32| peaks.iter().find(|(s, _)| *s == id).map(|(_, p)| p.as_slice()).unwrap_or(&[]);
        let mut points = Vec::new();
        for [a, b] in &self.cfg.rig.pairs {
            let (Some(ca), Some(cb)) = (self.cfg.rig.sensor(*a), self.cfg.rig.sensor(*b)) else {
                continue;
            };
            for p in trilaterate_pair(peaks_of(*a), peaks_of(*b), ca, cb)? {
                points.push(ScanPoint {
                    position: pose.transform_point(p.position),
                    sensors: p.sensors,
                });
            }
        }
        let index = self.scan_meta.len();
        self.scans.push_scan(ScanEntry { index, pose, points });
        self.scan_meta.push(ScanMeta { t: input.t, truth });
        Ok(())
    }

    fn slam_step(&mut self, t: f64, out: &mut TickOutput) -> Result<(), DriverError> {
        let start = self.scans.len() - self.cfg.m2 - self.cfg.n;
        let tracked_entry = self.scans.get(start + self.cfg.w).expect("window is populated");
        let (xt, scan) = (tracked_entry.pose, tracked_entry.index);
        let extraction = if self.mode == Mode::OdomOnly {
            None
        } else {
            Some(extract_features(&self.scans, &self.window)?)
        };

        let displacement = match self.tracked {
            Some(prev) => {
                let u = odometry_motion_model(&prev, &xt);
                let ekf = self.ekf.as_mut().expect("tracked implies state");
                ekf.predict(&u, &self.cfg.motion_noise);
                prev.distance_to(&xt)
            }
            None => {
                self.ekf = Some(SlamState::new(xt));
                0.0
            }
        };
        self.tracked = Some(xt);
        self.step += 1;

        let ekf = self.ekf.as_mut().expect("state exists");
        for p in self.pending.drain(..) {
            let offset = xt.inverse().compose(&p.pose);
            ekf.augment_landmark_from(
                &offset,
                &RangeBearingObs::tag(p.tag_id, p.range, p.bearing),
                LandmarkKind::Tag,
                &p.q,
            );
        }

        let mut order = Vec::new();
        let feature_seen = extraction.as_ref().is_some_and(|e| !e.observations.is_empty());
        if let (true, Some(ext)) = (self.mode.radar_updates(), &extraction) {
            for o in &ext.observations {
                let obs = RangeBearingObs::radar(o.range, o.bearing);
                let dim = ekf.dim();
                let before = ekf.sigma.view((0, 0), (dim, dim)).trace();
                let report = ekf.associate_and_update_unknown(&[obs], &self.cfg.q_r, self.cfg.alpha_r)?;
                let assoc = report[0];
                if let Association::Associated { .. } = assoc {
                    self.stats.associated += 1;
                    order.push(false);
                    if self.audit_enabled {
                        self.audit.updates += 1;
                        if ekf.trace() > before + TRACE_TOLERANCE * before.abs().max(1.0) {
                            self.audit.trace_violations += 1;
                        }
                    }
                } else {
                    self.stats.new_landmarks += 1;
                }
                out.records.push(Record::Feature(FeatureRecord {
                    t,
                    step: self.step,
                    range: o.range,
                    bearing: o.bearing,
                    x: o.position[0],
                    y: o.position[1],
                    landmark_id: Some(assoc.landmark_id()),
                    associated: matches!(assoc, Association::Associated { .. }),
                }));
            }
        } else if let Some(ext) = &extraction {
            for o in &ext.observations {
                out.records.push(Record::Feature(FeatureRecord {
                    t,
                    step: self.step,
                    range: o.range,
                    bearing: o.bearing,
                    x: o.position[0],
                    y: o.position[1],
                    landmark_id: None,
                    associated: false,
                }));
            }
        }

        if self.mode.tags() {
            self.tag_buffer.evict(self.scan_meta.len());
            let tag_ids: Vec<u32> = ekf.landmarks.iter().filter_map(|l| l.tag_id).collect();
            for tag_id in tag_ids {
                let samples: Vec<&TagSample> = self.tag_buffer.samples(tag_id).collect();
                if samples.is_empty() {
                    continue;
                }
                let points: Vec<[f64; 2]> = samples.iter().map(|s| s.point).collect();
                let prior = tag_prior(ekf, tag_id, &xt, &self.cfg.q_t.matrix())?;
                let outcome = filter_tag_observations(
                    &points,
                    self.cfg.dbscan_t.eps,
                    self.cfg.dbscan_t.n,
                    Some(&prior),
                    self.cfg.alpha_t,
                );
                let TagFilterOutcome::Accepted { centroid, members } = outcome else {
                    self.stats.tag_rejections += 1;
                    continue;
                };
                for &m in &members {
                    if let Some(p) = samples[m].reading.provenance {
                        self.accepted_seqs.insert(p.seq);
                    }
                }
                let local = xt.inverse_transform_point(centroid);
                let range = local[0].hypot(local[1]);
                if range <= 0.0 {
                    continue;
                }
                let before = ekf.trace();
                ekf.update_known(&RangeBearingObs::tag(tag_id, range, local[1].atan2(local[0])), &self.cfg.q_t)?;
                self.stats.tag_updates += 1;
                order.push(true);
                if self.audit_enabled {
                    self.audit.updates += 1;
                    if ekf.trace() > before + TRACE_TOLERANCE * before.abs().max(1.0) {
                        self.audit.trace_violations += 1;
                    }
                }
            }
        }

        if self.audit_enabled {
            self.audit.steps += 1;
            self.audit.max_asymmetry = self.audit.max_asymmetry.max(ekf.asymmetry());
            if !ekf.is_psd(PSD_TOLERANCE) {
                self.audit.psd_violations += 1;
            }
            if order.windows(2).any(|w| w[0] && !w[1]) {
                self.audit.order_violations += 1;
            }
        }

        let estimate = ekf.robot();
        self.trajectory.push(TrajectoryEntry {
            step: self.step,
            scan,
            t: self.scan_meta[scan].t,
            estimate,
            odom: xt,
            truth: self.scan_meta[scan].truth,
        });
        if self.cfg.snapshot_every > 0 && self.step.is_multiple_of(self.cfg.snapshot_every) {
            out.records.push(Record::Snapshot(Snapshot::from_state(t, self.step, ekf)));
        }
        out.slam_step = true;

        if self.mode.tags() && !self.halt_requested() && self.monitor.update(displacement, feature_seen) {
            self.command_deploy(t, out);
        }
        Ok(())
    }

    fn handle_readings(&mut self, input: &TickInput, out: &mut TickOutput) -> Result<(), DriverError> {
        let Some(pose) = self.odom.as_ref().map(OdomRecord::pose) else {
            return Ok(());
        };
        let instant = self.scan_meta.len();
        for reading in &input.aoa {
            if let Phase::Initializing { tag_id, samples, .. } = &mut self.phase {
                if reading.tag_id == *tag_id {
                    if static_gates(reading, &self.ring, self.gates.rssi_threshold).is_ok() {
                        let p = anchor_to_robot_frame(reading, &self.ring)?;
                        samples.push((p[0].hypot(p[1]), p[1].atan2(p[0])));
                    }
                    continue;
                }
            }
            if !self.mode.tags() || !self.known_tags.contains(&reading.tag_id) {
                continue;
            }
            let truly_stationary = !motion_gate(reading, self.gates.min_vel_trans, self.gates.min_vel_rot);
            let gated = gate_reading(reading, &self.ring, &self.gates, self.speeds.0, self.speeds.1);
            if gated.is_err() {
                if truly_stationary {
                    self.audit.halt_rejections += 1;
                }
                continue;
            }
            if self.audit_enabled {
                self.audit.buffered += 1;
                if static_gates(reading, &self.ring, self.gates.rssi_threshold).is_err() {
                    self.audit.gate_violations += 1;
                }
                if truly_stationary {
                    self.audit.halt_violations += 1;
                }
            }
            let local = anchor_to_robot_frame(reading, &self.ring)?;
            self.tag_buffer.push(
                reading.tag_id,
                TagSample {
                    instant,
                    point: pose.transform_point(local),
                    pose,
                    reading: reading.clone(),
                    speeds: self.speeds,
                },
            );
        }

        if let Phase::Initializing { tag_id, since, samples } = &self.phase {
            let tag_id = *tag_id;
            let ready = samples.len() >= self.cfg.tag_init.samples;
            let expired = input.t - since > self.cfg.tag_init.timeout;
            if ready || expired {
                let result = if ready {
                    initialize_tag(
                        samples,
                        &Pose2D::origin(),
                        self.cfg.tag_init.samples,
                        self.cfg.tag_init.min_survivors,
                    )
                    .ok()
                } else {
                    None
                };
                self.phase = Phase::Normal;
                let mut record = DeployRecord {
                    t: input.t,
                    tag_id,
                    event: DeployEvent::Failed,
                    x: None,
                    y: None,
                    gt_x: None,
                    gt_y: None,
                };
                if let Some(init) = result {
                    let floor = self.cfg.tag_init.min_variance;
                    let q = Matrix2::new(
                        (init.range_std * init.range_std).max(floor),
                        0.0,
                        0.0,
                        (init.bearing_std * init.bearing_std).max(floor),
                    );
                    let local = [init.range * init.bearing.cos(), init.range * init.bearing.sin()];
                    let map_pose = match (&self.ekf, self.tracked) {
                        (Some(ekf), Some(tracked)) => ekf.robot().compose(&tracked.inverse().compose(&pose)),
                        _ => pose,
                    };
                    let [x, y] = map_pose.transform_point(local);
                    record.event = DeployEvent::Initialized;
                    record.x = Some(x);
                    record.y = Some(y);
                    self.known_tags.insert(tag_id);
                    self.pending.push(PendingTag {
                        tag_id,
                        pose,
                        range: init.range,
                        bearing: init.bearing,
                        q,
                    });
                }
                out.records.push(Record::Deploy(record));
            }
        }
        Ok(())
    }

    /// Final snapshot of the current state, if the estimator has started.
    pub fn finish(&self) -> Option<Record> {
        let ekf = self.ekf.as_ref()?;
        let t = self.last_t.unwrap_or(0.0);
        Some(Record::Snapshot(Snapshot::from_state(t, self.step, ekf)))
    }

    /// Feeds every input record of `log` through a fresh driver and returns
    /// the output records followed by the final snapshot.
    pub fn replay(log: &RunLog, cfg: DriverConfig, mode: Mode) -> Result<(Driver, Vec<Record>), DriverError> {
        let mut driver = Driver::new(cfg, mode)?;
        let mut records = Vec::new();
        for tick in group_ticks(log.records()) {
            records.extend(driver.tick(&tick)?.records);
        }
        records.extend(driver.finish());
        Ok((driver, records))
    }
}

/// Predicted odometry-frame tag position and its Cartesian spread, for gating
/// clustered tag readings against the current estimate.
fn tag_prior(ekf: &SlamState, tag_id: u32, xt: &Pose2D, q: &Matrix2<f64>) -> Result<TagPrior, DriverError> {
    let lm = ekf.tag_landmark(tag_id).ok_or(EkfError::UnknownTag(tag_id))?.clone();
    let robot = ekf.robot();
    let local = robot.inverse_transform_point(ekf.landmark_position(&lm));
    let range = local[0].hypot(local[1]);
    let bearing = local[1].atan2(local[0]);
    let (_, s) = ekf.innovation(&lm, &RangeBearingObs::tag(tag_id, range, bearing), q)?;
    let (sb, cb) = bearing.sin_cos();
    let (st, ct) = xt.theta.sin_cos();
    let polar = Matrix2::new(cb, -range * sb, sb, range * cb);
    let g = Matrix2::new(ct, -st, st, ct) * polar;
    Ok(TagPrior {
        mean: xt.transform_point(local),
        cov: g * s * g.transpose(),
    })
}
