//! Labelled synthetic trajectories along declared paths.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::{RawPoint, RawTrajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthFlow {
    /// Polyline waypoints in scene units.
    pub path: Vec<(f64, f64)>,
    pub time_mean: f64,
    pub time_std: f64,
    pub speed_mean: f64,
    pub speed_std: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub flows: Vec<SynthFlow>,
    /// Standard deviation of the positional noise.
    pub noise: f64,
    /// Seconds between frames.
    pub frame_dt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic {
    pub trajectories: Vec<RawTrajectory>,
    /// Generating flow of each trajectory.
    pub labels: Vec<usize>,
}

fn point_at(path: &[(f64, f64)], mut d: f64) -> (f64, f64) {
    for w in path.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
        if d <= len && len > 0.0 {
            let f = d / len;
            return (a.0 + f * (b.0 - a.0), a.1 + f * (b.1 - a.1));
        }
        d -= len;
    }
    *path.last().expect("non-empty path")
}

fn path_length(path: &[(f64, f64)]) -> f64 {
    path.windows(2).map(|w| ((w[1].0 - w[0].0).powi(2) + (w[1].1 - w[0].1).powi(2)).sqrt()).sum()
}

/// Trajectories flow by flow; ids are consecutive from 0.
pub fn generate_synthetic<R: Rng + ?Sized>(spec: &SynthSpec, rng: &mut R) -> Result<Synthetic> {
    if spec.flows.is_empty() {
        return Err(Error::invalid_input("synthetic spec has no flows"));
    }
    if !(spec.frame_dt > 0.0) || !(spec.noise >= 0.0) {
        return Err(Error::invalid_input("frame_dt must be > 0 and noise >= 0"));
    }
    let noise = Normal::new(0.0, spec.noise).map_err(|e| Error::invalid_input(e.to_string()))?;
    let mut trajectories = Vec::new();
    let mut labels = Vec::new();
    for (k, f) in spec.flows.iter().enumerate() {
        let len = path_length(&f.path);
        if f.path.len() < 2 || !(len > 0.0) {
            return Err(Error::invalid_input(format!("flow {k}: path needs two distinct waypoints")));
        }
        if !(f.speed_mean > 0.0) || !(f.time_std >= 0.0) || !(f.speed_std >= 0.0) {
            return Err(Error::invalid_input(format!("flow {k}: invalid time or speed peak")));
        }
        let entry = Normal::new(f.time_mean, f.time_std).map_err(|e| Error::invalid_input(e.to_string()))?;
        let speed = Normal::new(f.speed_mean, f.speed_std).map_err(|e| Error::invalid_input(e.to_string()))?;
        for _ in 0..f.count {
            let t0 = entry.sample(rng);
            let mut s = speed.sample(rng);
            let mut tries = 0;
            while s <= 0.05 * f.speed_mean && tries < 100 {
                s = speed.sample(rng);
                tries += 1;
            }
            let s = s.max(0.05 * f.speed_mean);
            let steps = ((len / (s * spec.frame_dt)).ceil() as usize).max(1);
            let points = (0..=steps)
                .map(|i| {
                    let (x, y) = point_at(&f.path, (i as f64 * s * spec.frame_dt).min(len));
                    RawPoint::new(t0 + i as f64 * spec.frame_dt, x + noise.sample(rng), y + noise.sample(rng))
                })
                .collect();
            trajectories.push(RawTrajectory { id: trajectories.len() as u64, points });
            labels.push(k);
        }
    }
    Ok(Synthetic { trajectories, labels })
}
