//! JSON-lines run log.
//!
//! One record per line, discriminated by `"type"`:
//!
//! | type       | fields |
//! |------------|--------|
//! | `odom`     | `t, x, y, theta` and optional ground truth `gt_x, gt_y, gt_theta` |
//! | `radar`    | `t, sensor_id, bin_resolution, amplitudes[]` |
//! | `aoa`      | `t, anchor_id, tag_id, D, phi, fp_rssi, rx_rssi, v_trans, v_rot`, optional `seq, ghost` |
//! | `feature`  | `t, step, range, bearing, x, y, landmark_id, associated` |
//! | `snapshot` | `t, step, mu[], sigma_flat[]` (row-major), `landmarks[{id, kind, x, y}]` |
//! | `deploy`   | `t, tag_id, event` and, depending on the event, `x, y, gt_x, gt_y` |
//!
//! `odom`, `radar` and `aoa` are pipeline inputs; the rest are outputs and
//! are ignored on replay. Floats are written with round-trip precision.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aoa::AoaReading;
use crate::ekf::{LandmarkKind, SlamState};
use crate::geometry::Pose2D;
use crate::radar::RadarFrame;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: timestamp {t} precedes {prev}")]
    OutOfOrder { line: usize, t: f64, prev: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdomRecord {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_y: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_theta: Option<f64>,
}

impl OdomRecord {
    pub fn new(t: f64, pose: Pose2D, truth: Option<Pose2D>) -> Self {
        Self {
            t,
            x: pose.x,
            y: pose.y,
            theta: pose.theta,
            gt_x: truth.map(|p| p.x),
            gt_y: truth.map(|p| p.y),
            gt_theta: truth.map(|p| p.theta),
        }
    }

    pub fn pose(&self) -> Pose2D {
        Pose2D::new(self.x, self.y, self.theta)
    }

    pub fn truth(&self) -> Option<Pose2D> {
        Some(Pose2D::new(self.gt_x?, self.gt_y?, self.gt_theta?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarRecord {
    pub t: f64,
    #[serde(flatten)]
    pub frame: RadarFrame,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub t: f64,
    pub step: usize,
    pub range: f64,
    pub bearing: f64,
    /// Odometry-frame position of the cluster mean.
    pub x: f64,
    pub y: f64,
    pub landmark_id: Option<u32>,
    pub associated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkEntry {
    pub id: u32,
    pub kind: LandmarkKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag_id: Option<u32>,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub step: usize,
    pub mu: Vec<f64>,
    pub sigma_flat: Vec<f64>,
    pub landmarks: Vec<LandmarkEntry>,
}

impl Snapshot {
    pub fn from_state(t: f64, step: usize, state: &SlamState) -> Self {
        let n = state.dim();
        let mut sigma_flat = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                sigma_flat.push(state.sigma[(i, j)]);
            }
        }
        Self {
            t,
            step,
            mu: state.mu.iter().copied().collect(),
            sigma_flat,
            landmarks: state
                .landmarks
                .iter()
                .map(|l| {
                    let [x, y] = state.landmark_position(l);
                    LandmarkEntry {
                        id: l.id,
                        kind: l.kind,
                        tag_id: l.tag_id,
                        x,
                        y,
                    }
                })
                .collect(),
        }
    }

    pub fn robot(&self) -> Pose2D {
        Pose2D::new(self.mu[0], self.mu[1], self.mu[2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeployEvent {
    /// The robot drops a tag and halts.
    Command,
    /// Where the simulator actually placed the tag.
    Placed,
    Initialized,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeployRecord {
    pub t: f64,
    pub tag_id: u32,
    pub event: DeployEvent,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_y: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Record {
    Odom(OdomRecord),
    Radar(RadarRecord),
    Aoa(AoaReading),
    Feature(FeatureRecord),
    Snapshot(Snapshot),
    Deploy(DeployRecord),
}

impl Record {
    pub fn t(&self) -> f64 {
        match self {
            Record::Odom(r) => r.t,
            Record::Radar(r) => r.t,
            Record::Aoa(r) => r.t,
            Record::Feature(r) => r.t,
            Record::Snapshot(r) => r.t,
            Record::Deploy(r) => r.t,
        }
    }

    pub fn is_input(&self) -> bool {
        matches!(self, Record::Odom(_) | Record::Radar(_) | Record::Aoa(_))
    }
}

/// Append-only record sequence with non-decreasing timestamps.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunLog {
    records: Vec<Record>,
}

impl RunLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends `record`, rejecting timestamps that go backwards.
    pub fn push(&mut self, record: Record) -> Result<(), LogError> {
        if let Some(last) = self.records.last() {
            if record.t() < last.t() {
                return Err(LogError::OutOfOrder {
                    line: self.records.len() + 1,
                    t: record.t(),
                    prev: last.t(),
                });
            }
        }
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last_snapshot(&self) -> Option<&Snapshot> {
        self.records.iter().rev().find_map(|r| match r {
            Record::Snapshot(s) => Some(s),
            _ => None,
        })
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<(), LogError> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r).map_err(std::io::Error::other)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    /// Parses a JSON-lines log. A final line without a terminating newline
    /// that fails to parse is treated as a truncated write and dropped.
    pub fn read_jsonl<R: BufRead>(mut input: R) -> Result<Self, LogError> {
        let mut log = RunLog::new();
        let mut line = String::new();
        let mut number = 0;
        loop {
            line.clear();
            if input.read_line(&mut line)? == 0 {
                return Ok(log);
            }
            number += 1;
            let terminated = line.ends_with('\n');
            let text = line.trim();
            if text.is_empty() {
                continue;
            }
            match serde_json::from_str::<Record>(text) {
                Ok(r) => log.push(r).map_err(|e| match e {
                    LogError::OutOfOrder { t, prev, .. } => LogError::OutOfOrder { line: number, t, prev },
                    other => other,
                })?,
                Err(_) if !terminated => return Ok(log),
                Err(e) => {
                    return Err(LogError::Parse {
                        line: number,
                        message: e.to_string(),
                    })
                }
            }
        }
    }

    pub fn from_jsonl_str(s: &str) -> Result<Self, LogError> {
        Self::read_jsonl(s.as_bytes())
    }
}

impl FromIterator<Record> for RunLog {
    /// Collects without order checks; use [`RunLog::push`] when order matters.
    fn from_iter<I: IntoIterator<Item = Record>>(iter: I) -> Self {
        Self {
            records: iter.into_iter().collect(),
        }
    }
}
