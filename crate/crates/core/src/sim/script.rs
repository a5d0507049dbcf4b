use serde::{Deserialize, Serialize};

use crate::geometry::{wrap, MotionIncrement, Pose2D};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScriptStep {
    /// Turn in place towards the point, then drive to it.
    Goto { x: f64, y: f64, speed: f64 },
    /// Stand still for `duration` seconds.
    Halt { duration: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectoryScript {
    pub start: Pose2D,
    pub steps: Vec<ScriptStep>,
    /// In-place turning rate, rad/s.
    pub turn_rate: f64,
}

impl Default for TrajectoryScript {
    fn default() -> Self {
        Self {
            start: Pose2D::origin(),
            steps: Vec::new(),
            turn_rate: 0.5,
        }
    }
}

impl TrajectoryScript {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.turn_rate > 0.0) {
            return Err("script.turn_rate must be positive".into());
        }
        for s in &self.steps {
            match *s {
                ScriptStep::Goto { x, y, speed } => {
                    if !(speed > 0.0) || !x.is_finite() || !y.is_finite() {
                        return Err("script goto needs finite target and positive speed".into());
                    }
                }
                ScriptStep::Halt { duration } => {
                    if !(duration >= 0.0) {
                        return Err("script halt duration must be non-negative".into());
                    }
                }
            }
        }
        Ok(())
    }

    /// Total path length of the goto legs from the start pose.
    pub fn path_length(&self) -> f64 {
        let mut p = self.start.position();
        let mut total = 0.0;
        for s in &self.steps {
            if let ScriptStep::Goto { x, y, .. } = *s {
                total += (x - p[0]).hypot(y - p[1]);
                p = [x, y];
            }
        }
        total
    }
}

/// Heading tolerance before driving straight.
const HEADING_TOLERANCE: f64 = 1e-9;
/// Distance at which a goto target counts as reached.
const ARRIVAL_TOLERANCE: f64 = 1e-9;

/// Turns a script into per-tick motion commands.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptRunner {
    script: TrajectoryScript,
    index: usize,
    halt_left: Option<f64>,
}

impl ScriptRunner {
    pub fn new(script: TrajectoryScript) -> Self {
        Self {
            script,
            index: 0,
            halt_left: None,
        }
    }

    pub fn finished(&self) -> bool {
        self.index >= self.script.steps.len()
    }

    /// Command for the next `dt` seconds given the true pose; `None` once
    /// the script is exhausted.
    pub fn next_command(&mut self, pose: &Pose2D, dt: f64) -> Option<MotionIncrement> {
        loop {
            let step = *self.script.steps.get(self.index)?;
            match step {
                ScriptStep::Halt { duration } => {
                    let left = self.halt_left.get_or_insert(duration);
                    if *left > 1e-12 {
                        *left -= dt;
                        return Some(MotionIncrement::zero());
                    }
                    self.halt_left = None;
                    self.index += 1;
                }
                ScriptStep::Goto { x, y, speed } => {
                    let dx = x - pose.x;
                    let dy = y - pose.y;
                    let d = dx.hypot(dy);
                    if d <= ARRIVAL_TOLERANCE {
                        self.index += 1;
                        continue;
                    }
                    let err = wrap(dy.atan2(dx) - pose.theta);
                    let max_turn = self.script.turn_rate * dt;
                    if err.abs() > max_turn {
                        return Some(MotionIncrement {
                            rot1: max_turn.copysign(err),
                            trans: 0.0,
                            rot2: 0.0,
                        });
                    }
                    let rot1 = if err.abs() > HEADING_TOLERANCE { err } else { 0.0 };
                    return Some(MotionIncrement {
                        rot1,
                        trans: (speed * dt).min(d),
                        rot2: 0.0,
                    });
                }
            }
        }
    }
}
