//! Closed-loop runs: the simulator feeds the driver, and the driver's
//! deployment and halt requests feed back into the simulator.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::driver::{Audit, AssociationStats, Driver, DriverError, Mode, TickInput, TrajectoryEntry};
use crate::eval::{build_report, EvalError, MetricsReport};
use crate::log::{DeployEvent, DeployRecord, LogError, OdomRecord, Record, RunLog, Snapshot};
use crate::scenario::Scenario;
use crate::sim::{Simulator, WorldError, WorldModel};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Driver(#[from] DriverError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("run exceeded {0} ticks")]
    TooLong(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub mode: Mode,
    pub seed: u64,
    pub record_log: bool,
    pub audit: bool,
}

impl RunOptions {
    pub fn new(mode: Mode, seed: u64) -> Self {
        Self {
            mode,
            seed,
            record_log: false,
            audit: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub mode: Mode,
    pub seed: u64,
    pub config_hash: String,
    pub log: Option<RunLog>,
    pub trajectory: Vec<TrajectoryEntry>,
    pub final_snapshot: Option<Snapshot>,
    /// World including the tags dropped during the run.
    pub world: WorldModel,
    pub deployments: usize,
    pub ghosts_injected: u64,
    pub ghosts_accepted: u64,
    pub audit: Audit,
    pub stats: AssociationStats,
    pub ticks: usize,
    pub halt_ticks: usize,
}

impl RunResult {
    pub fn report(&self) -> Result<MetricsReport, EvalError> {
        let landmarks = self.final_snapshot.as_ref().map(|s| s.landmarks.as_slice()).unwrap_or(&[]);
        build_report(
            self.mode,
            self.seed,
            self.config_hash.clone(),
            &self.trajectory,
            landmarks,
            &self.world,
            self.deployments,
            (self.ghosts_injected, self.ghosts_accepted),
        )
    }
}

pub fn run_scenario(scenario: &Scenario, opts: &RunOptions) -> Result<RunResult, HarnessError> {
    let cfg = scenario.driver.clone();
    let config_hash = cfg.hash();
    let mut sim = Simulator::new(
        scenario.world.clone(),
        scenario.script.clone(),
        scenario.noise.clone(),
        cfg.ring(),
        cfg.rig.sensors.clone(),
        scenario.sim.dt,
        opts.seed,
    );
    let mut driver = Driver::new(cfg, opts.mode)?.with_audit(opts.audit);
    let mut log = opts.record_log.then(RunLog::new);
    let mut ghost_seqs = BTreeSet::new();
    let mut ticks = 0;
    let mut halt_ticks = 0;

    loop {
        let halt = driver.halt_requested();
        let Some(tick) = sim.step(halt) else { break };
        ticks += 1;
        if ticks > scenario.sim.max_ticks {
            return Err(HarnessError::TooLong(scenario.sim.max_ticks));
        }
        if halt {
            halt_ticks += 1;
        }
        for r in &tick.readings {
            if let Some(p) = r.provenance.filter(|p| p.ghost) {
                ghost_seqs.insert(p.seq);
            }
        }
        let input = TickInput {
            t: tick.t,
            odom: Some(OdomRecord::new(tick.t, tick.odom, Some(tick.truth))),
            radar: tick.frames,
            aoa: tick.readings,
        };
        if let Some(log) = log.as_mut() {
            for r in input.records() {
                log.push(r)?;
            }
        }
        let out = driver.tick(&input)?;
        if let Some(log) = log.as_mut() {
            for r in out.records {
                log.push(r)?;
            }
        }
        if let Some(tag_id) = out.deploy {
            let at = tick.truth.transform_point(scenario.sim.deploy_offset);
            sim.world.deploy_tag(at, tag_id)?;
            if let Some(log) = log.as_mut() {
                log.push(Record::Deploy(DeployRecord {
                    t: tick.t,
                    tag_id,
                    event: DeployEvent::Placed,
                    x: None,
                    y: None,
                    gt_x: Some(at[0]),
                    gt_y: Some(at[1]),
                }))?;
            }
        }
    }

    let final_snapshot = match driver.finish() {
        Some(Record::Snapshot(s)) => Some(s),
        _ => None,
    };
    if let (Some(log), Some(s)) = (log.as_mut(), &final_snapshot) {
        log.push(Record::Snapshot(s.clone()))?;
    }
    let ghosts_accepted = driver.accepted_seqs().intersection(&ghost_seqs).count() as u64;
    Ok(RunResult {
        mode: opts.mode,
        seed: opts.seed,
        config_hash,
        log,
        trajectory: driver.trajectory().to_vec(),
        final_snapshot,
        world: sim.world.clone(),
        deployments: driver.deployments().len(),
        ghosts_injected: ghost_seqs.len() as u64,
        ghosts_accepted,
        audit: driver.audit().clone(),
        stats: driver.stats().clone(),
        ticks,
        halt_ticks,
    })
}

/// Runs `scenario` in `mode` and evaluates it.
pub fn run_ablation(scenario: &Scenario, mode: Mode, seed: u64) -> Result<MetricsReport, HarnessError> {
    Ok(run_scenario(scenario, &RunOptions::new(mode, seed))?.report()?)
}

/// World with tags placed where the log says they landed.
pub fn world_from_log(base: &WorldModel, log: &RunLog) -> Result<WorldModel, WorldError> {
    let mut world = base.clone();
    for r in log.records() {
        if let Record::Deploy(d) = r {
            if let (DeployEvent::Placed, Some(x), Some(y)) = (d.event, d.gt_x, d.gt_y) {
                world.deploy_tag([x, y], d.tag_id)?;
            }
        }
    }
    Ok(world)
}
