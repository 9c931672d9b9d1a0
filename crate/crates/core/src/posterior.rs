//! Fitted posterior: weighted space flows, each with a time and a speed
//! profile over globally shared Gaussian modes.

use serde::{Deserialize, Serialize};

use crate::codebook::Codebook;
use crate::error::{Error, Result};
use crate::stats::{Gaussian, SparseCategorical};
use crate::util::ln_sum_exp;

/// The three observation dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dim {
    Space,
    Time,
    Speed,
}

impl Dim {
    pub const ALL: [Dim; 3] = [Dim::Space, Dim::Time, Dim::Speed];

    pub fn name(self) -> &'static str {
        match self {
            Dim::Space => "space",
            Dim::Time => "time",
            Dim::Speed => "speed",
        }
    }
}

/// Weighted mixture of univariate Gaussians.
pub fn mixture_ln_pdf(weights: &[f64], modes: &[Gaussian], x: f64) -> f64 {
    let terms: Vec<f64> = weights
        .iter()
        .zip(modes)
        .filter(|(w, _)| **w > 0.0)
        .map(|(w, g)| w.ln() + g.ln_pdf(x))
        .collect();
    ln_sum_exp(&terms)
}

pub fn mixture_cdf(weights: &[f64], modes: &[Gaussian], x: f64) -> f64 {
    weights.iter().zip(modes).map(|(w, g)| w * g.cdf(x)).sum()
}

/// One space flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flow {
    pub weight: f64,
    pub space: SparseCategorical,
    /// Weights over the global time modes.
    pub time_weights: Vec<f64>,
    /// Weights over the global speed modes.
    pub speed_weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThdpPosterior {
    pub codebook: Codebook,
    pub flows: Vec<Flow>,
    /// Weight of flows pruned for reporting, before renormalization.
    pub other_weight: f64,
    /// Weight of an unseen flow, before renormalization.
    pub unseen_weight: f64,
    pub time_modes: Vec<Gaussian>,
    pub time_mode_weights: Vec<f64>,
    pub speed_modes: Vec<Gaussian>,
    pub speed_mode_weights: Vec<f64>,
}

impl ThdpPosterior {
    pub fn n_flows(&self) -> usize {
        self.flows.len()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.flows.iter().map(|f| f.weight).collect()
    }

    pub fn ln_space(&self, k: usize, cell: u32) -> f64 {
        self.flows[k].space.prob(cell).ln()
    }

    pub fn ln_time(&self, k: usize, t: f64) -> f64 {
        mixture_ln_pdf(&self.flows[k].time_weights, &self.time_modes, t)
    }

    pub fn ln_speed(&self, k: usize, v: f64) -> f64 {
        mixture_ln_pdf(&self.flows[k].speed_weights, &self.speed_modes, v)
    }

    pub fn ln_dim(&self, k: usize, dim: Dim, cell: u32, t: f64, v: f64) -> f64 {
        match dim {
            Dim::Space => self.ln_space(k, cell),
            Dim::Time => self.ln_time(k, t),
            Dim::Speed => self.ln_speed(k, v),
        }
    }

    /// Mixture weights and modes of one flow along `dim` (time or speed).
    pub fn profile(&self, k: usize, dim: Dim) -> (&[f64], &[Gaussian]) {
        match dim {
            Dim::Time => (&self.flows[k].time_weights, &self.time_modes),
            Dim::Speed => (&self.flows[k].speed_weights, &self.speed_modes),
            Dim::Space => panic!("space has no scalar profile"),
        }
    }

    /// Flow-conditional posterior over flows for a single observation.
    pub fn observation_posterior(&self, cell: u32, t: f64, v: f64) -> Vec<f64> {
        let ll: Vec<f64> = (0..self.n_flows())
            .map(|k| self.flows[k].weight.ln() + self.ln_space(k, cell) + self.ln_time(k, t) + self.ln_speed(k, v))
            .collect();
        crate::util::normalize_ln(&ll)
    }

    pub fn validate(&self) -> Result<()> {
        let close = |xs: &[f64]| (xs.iter().sum::<f64>() - 1.0).abs() <= 1e-9 && xs.iter().all(|x| *x >= 0.0);
        if self.flows.is_empty() {
            return Err(Error::invalid_input("posterior has no flows"));
        }
        if !close(&self.weights()) {
            return Err(Error::invalid_input("flow weights do not sum to 1"));
        }
        let v = self.codebook.vocab_size();
        for (k, f) in self.flows.iter().enumerate() {
            if f.time_weights.len() != self.time_modes.len() || f.speed_weights.len() != self.speed_modes.len() {
                return Err(Error::invalid_input(format!("flow {k} references missing modes")));
            }
            if !close(&f.time_weights) || !close(&f.speed_weights) {
                return Err(Error::invalid_input(format!("flow {k} profile weights do not sum to 1")));
            }
            if f.space.vocab_size != v || f.space.cells.iter().any(|&(c, _)| c as usize >= v) {
                return Err(Error::invalid_input(format!("flow {k} does not match the codebook")));
            }
        }
        for g in self.time_modes.iter().chain(&self.speed_modes) {
            if !(g.var > 0.0) || !g.mean.is_finite() {
                return Err(Error::invalid_input("degenerate Gaussian mode"));
            }
        }
        Ok(())
    }
}
