//! Raw tracks, velocity estimation, and tokenised trajectories.

use serde::{Deserialize, Serialize};

use crate::codebook::Codebook;
use crate::error::{Error, Result};

pub type TrajId = u64;

/// One tracked position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawPoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

impl RawPoint {
    pub fn new(t: f64, x: f64, y: f64) -> Self {
        Self { t, x, y }
    }
}

/// A track as it comes out of a tracker: time-ordered positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTrajectory {
    pub id: TrajId,
    pub points: Vec<RawPoint>,
}

/// A position with its estimated velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionPoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
}

impl MotionPoint {
    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }
}

/// Finite-difference velocities over a frame window.
///
/// Interior points use the central difference between the points `window`
/// frames before and after; near the ends the stencil is truncated to the
/// available side.
pub fn estimate_velocities(points: &[RawPoint], window: usize) -> Result<Vec<MotionPoint>> {
    if points.len() < 2 {
        return Err(Error::invalid_input(format!(
            "velocity estimation needs at least 2 points, got {}",
            points.len()
        )));
    }
    let window = window.max(1);
    let n = points.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let lo = i.saturating_sub(window);
        let hi = (i + window).min(n - 1);
        let (a, b) = (points[lo], points[hi]);
        let dt = b.t - a.t;
        if !(dt > 0.0) {
            return Err(Error::invalid_input(format!(
                "timestamps must be strictly increasing (t = {} .. {})",
                a.t, b.t
            )));
        }
        let p = points[i];
        out.push(MotionPoint { t: p.t, x: p.x, y: p.y, vx: (b.x - a.x) / dt, vy: (b.y - a.y) / dt });
    }
    Ok(out)
}

/// One observation `w`: a space token, a timestamp and a speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub traj_id: TrajId,
    /// Restaurant index of the space HDP.
    pub group_id: usize,
    pub cell: u32,
    /// Seconds from dataset start.
    pub timestamp: f64,
    /// Scene units per second.
    pub speed: f64,
    pub position: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub traj_id: TrajId,
    pub observations: Vec<Observation>,
}

impl Trajectory {
    /// Tokenises a motion track. `time_origin` is subtracted from every
    /// timestamp. Returns the trajectory and the number of clamped positions.
    pub fn from_motion(
        traj_id: TrajId,
        motion: &[MotionPoint],
        codebook: &Codebook,
        time_origin: f64,
    ) -> Result<(Self, usize)> {
        let mut clamped = 0;
        let mut observations = Vec::with_capacity(motion.len());
        for m in motion {
            let tok = codebook.tokenize((m.x, m.y), (m.vx, m.vy))?;
            clamped += tok.clamped as usize;
            observations.push(Observation {
                traj_id,
                group_id: 0,
                cell: tok.cell,
                timestamp: m.t - time_origin,
                speed: m.speed(),
                position: (m.x, m.y),
            });
        }
        let traj = Trajectory { traj_id, observations };
        traj.validate()?;
        Ok((traj, clamped))
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let mut prev = f64::NEG_INFINITY;
        for o in &self.observations {
            if o.traj_id != self.traj_id {
                return Err(Error::invalid_input(format!(
                    "observation of trajectory {} filed under {}",
                    o.traj_id, self.traj_id
                )));
            }
            if !(o.timestamp >= 0.0) || !(o.speed >= 0.0) {
                return Err(Error::invalid_input(format!(
                    "trajectory {}: negative timestamp or speed",
                    self.traj_id
                )));
            }
            if o.timestamp < prev {
                return Err(Error::invalid_input(format!(
                    "trajectory {}: timestamps decrease",
                    self.traj_id
                )));
            }
            prev = o.timestamp;
        }
        Ok(())
    }

    pub fn first_position(&self) -> Option<(f64, f64)> {
        self.observations.first().map(|o| o.position)
    }

    pub fn last_position(&self) -> Option<(f64, f64)> {
        self.observations.last().map(|o| o.position)
    }
}
