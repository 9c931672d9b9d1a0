//! Scores comparing data against a posterior (AL) and two posteriors
//! against each other (DPD).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::posterior::{Dim, ThdpPosterior};
use crate::stats::Gaussian;
use crate::trajectory::Observation;

/// Which dimensions an AL score keeps; the rest are marginalized out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlVariant {
    Overall,
    SpaceTime,
    SpaceSpeed,
    TimeSpeed,
    SpaceOnly,
    TimeOnly,
    SpeedOnly,
}

impl AlVariant {
    pub const ALL: [AlVariant; 7] = [
        AlVariant::Overall,
        AlVariant::SpaceTime,
        AlVariant::SpaceSpeed,
        AlVariant::TimeSpeed,
        AlVariant::SpaceOnly,
        AlVariant::TimeOnly,
        AlVariant::SpeedOnly,
    ];

    /// `[space, time, speed]` membership.
    pub fn dims(self) -> [bool; 3] {
        match self {
            AlVariant::Overall => [true, true, true],
            AlVariant::SpaceTime => [true, true, false],
            AlVariant::SpaceSpeed => [true, false, true],
            AlVariant::TimeSpeed => [false, true, true],
            AlVariant::SpaceOnly => [true, false, false],
            AlVariant::TimeOnly => [false, true, false],
            AlVariant::SpeedOnly => [false, false, true],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AlVariant::Overall => "overall",
            AlVariant::SpaceTime => "space_time",
            AlVariant::SpaceSpeed => "space_speed",
            AlVariant::TimeSpeed => "time_speed",
            AlVariant::SpaceOnly => "space_only",
            AlVariant::TimeOnly => "time_only",
            AlVariant::SpeedOnly => "speed_only",
        }
    }
}

/// Average over observations of `Σ_k β_k Π_{d ∈ variant} p(obs_d | k)`.
pub fn al_metric(variant: AlVariant, observations: &[Observation], post: &ThdpPosterior) -> Result<f64> {
    if observations.is_empty() {
        return Err(Error::invalid_input("no observations to score"));
    }
    let v = post.codebook.vocab_size();
    let keep = variant.dims();
    let mut total = 0.0;
    for o in observations {
        if o.cell as usize >= v {
            return Err(Error::invalid_input(format!("observation cell {} is outside the model's codebook ({v} cells)", o.cell)));
        }
        for (k, f) in post.flows.iter().enumerate() {
            let mut ln = 0.0;
            for (d, dim) in Dim::ALL.into_iter().enumerate() {
                if keep[d] {
                    ln += post.ln_dim(k, dim, o.cell, o.timestamp, o.speed);
                }
            }
            total += f.weight * ln.exp();
        }
    }
    Ok(total / observations.len() as f64)
}

/// Base-2 Jensen-Shannon divergence of two probability vectors.
///
/// Inputs are normalized first; they must be non-negative with positive mass.
pub fn jsd(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::invalid_input(format!("support mismatch: {} vs {} points", p.len(), q.len())));
    }
    let mass = |xs: &[f64]| -> Result<f64> {
        if xs.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::invalid_input("densities must be finite and non-negative"));
        }
        let s: f64 = xs.iter().sum();
        if !(s > 0.0) {
            return Err(Error::invalid_input("density has no mass"));
        }
        Ok(s)
    };
    let (sp, sq) = (mass(p)?, mass(q)?);
    let mut d = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let (a, b) = (a / sp, b / sq);
        let m = 0.5 * (a + b);
        d += half_kl(a, m) + half_kl(b, m);
    }
    Ok(d.clamp(0.0, 1.0))
}

fn half_kl(a: f64, m: f64) -> f64 {
    if a > 0.0 {
        0.5 * a * (a / m).log2()
    } else {
        0.0
    }
}

/// Quadrature for continuous JSD: `points` nodes spanning `span` standard
/// deviations past the outermost component of either mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quadrature {
    pub points: usize,
    pub span: f64,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self { points: 2048, span: 6.0 }
    }
}

/// A univariate Gaussian mixture by reference.
#[derive(Debug, Clone, Copy)]
pub struct Mixture<'a> {
    pub weights: &'a [f64],
    pub modes: &'a [Gaussian],
}

impl Mixture<'_> {
    pub fn pdf(&self, x: f64) -> f64 {
        self.weights.iter().zip(self.modes).filter(|(w, _)| **w > 0.0).map(|(w, g)| w * g.pdf(x)).sum()
    }

    fn extent(&self, span: f64) -> Option<(f64, f64)> {
        self.weights
            .iter()
            .zip(self.modes)
            .filter(|(w, _)| **w > 0.0)
            .map(|(_, g)| (g.mean - span * g.std_dev(), g.mean + span * g.std_dev()))
            .reduce(|a, b| (a.0.min(b.0), a.1.max(b.1)))
    }
}

impl Quadrature {
    /// Shared grid for a set of mixtures.
    pub fn grid(&self, mixtures: &[Mixture]) -> Result<Vec<f64>> {
        if self.points < 2 || !(self.span > 0.0) {
            return Err(Error::invalid_input("quadrature needs at least 2 points and a positive span"));
        }
        let (lo, hi) = mixtures
            .iter()
            .filter_map(|m| m.extent(self.span))
            .reduce(|a, b| (a.0.min(b.0), a.1.max(b.1)))
            .ok_or_else(|| Error::invalid_input("mixture has no weighted components"))?;
        let step = (hi - lo) / (self.points - 1) as f64;
        Ok((0..self.points).map(|i| lo + step * i as f64).collect())
    }
}

/// JSD of two univariate Gaussian mixtures on a shared grid.
pub fn jsd_mixtures(p: Mixture, q: Mixture, quad: Quadrature) -> Result<f64> {
    let grid = quad.grid(&[p, q])?;
    let pv: Vec<f64> = grid.iter().map(|&x| p.pdf(x)).collect();
    let qv: Vec<f64> = grid.iter().map(|&x| q.pdf(x)).collect();
    jsd(&pv, &qv)
}

/// JSD of two separable 2D densities `p1(x) p2(y)` and `q1(x) q2(y)`.
pub fn jsd_separable(p: [Mixture; 2], q: [Mixture; 2], quad: Quadrature) -> Result<f64> {
    let gx = quad.grid(&[p[0], q[0]])?;
    let gy = quad.grid(&[p[1], q[1]])?;
    let eval = |m: Mixture, g: &[f64]| -> Vec<f64> { g.iter().map(|&x| m.pdf(x)).collect() };
    let (px, py, qx, qy) = (eval(p[0], &gx), eval(p[1], &gy), eval(q[0], &gx), eval(q[1], &gy));
    let outer = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().flat_map(|&x| b.iter().map(move |&y| x * y)).collect() };
    jsd(&outer(&px, &py), &outer(&qx, &qy))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DpdVariant {
    Space,
    Time,
    Speed,
    TimeSpeed,
}

impl DpdVariant {
    pub const ALL: [DpdVariant; 4] = [DpdVariant::Space, DpdVariant::Time, DpdVariant::Speed, DpdVariant::TimeSpeed];

    pub fn name(self) -> &'static str {
        match self {
            DpdVariant::Space => "space",
            DpdVariant::Time => "time",
            DpdVariant::Speed => "speed",
            DpdVariant::TimeSpeed => "time_speed",
        }
    }
}

/// Flow `flow_a` of the first posterior against `flow_b` of the second.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DpdQuery {
    pub flow_a: usize,
    pub flow_b: usize,
    pub variant: DpdVariant,
}

fn mixture(post: &ThdpPosterior, k: usize, dim: Dim) -> Mixture<'_> {
    let (weights, modes) = post.profile(k, dim);
    Mixture { weights, modes }
}

fn check_codebooks(a: &ThdpPosterior, b: &ThdpPosterior) -> Result<()> {
    let (ca, cb) = (&a.codebook, &b.codebook);
    if ca.rows() != cb.rows() || ca.cols() != cb.cols() {
        return Err(Error::invalid_input(format!(
            "codebook mismatch: {}x{} vs {}x{} grid",
            ca.rows(),
            ca.cols(),
            cb.rows(),
            cb.cols()
        )));
    }
    Ok(())
}

pub fn space_jsd(a: &ThdpPosterior, ka: usize, b: &ThdpPosterior, kb: usize) -> Result<f64> {
    check_codebooks(a, b)?;
    jsd(&a.flows[ka].space.dense(), &b.flows[kb].space.dense())
}

pub fn dpd(query: DpdQuery, a: &ThdpPosterior, b: &ThdpPosterior, quad: Quadrature) -> Result<f64> {
    let DpdQuery { flow_a, flow_b, variant } = query;
    if flow_a >= a.n_flows() || flow_b >= b.n_flows() {
        return Err(Error::invalid_input(format!(
            "flow pair ({flow_a}, {flow_b}) out of range ({} and {} flows)",
            a.n_flows(),
            b.n_flows()
        )));
    }
    match variant {
        DpdVariant::Space => space_jsd(a, flow_a, b, flow_b),
        DpdVariant::Time => jsd_mixtures(mixture(a, flow_a, Dim::Time), mixture(b, flow_b, Dim::Time), quad),
        DpdVariant::Speed => jsd_mixtures(mixture(a, flow_a, Dim::Speed), mixture(b, flow_b, Dim::Speed), quad),
        DpdVariant::TimeSpeed => jsd_separable(
            [mixture(a, flow_a, Dim::Time), mixture(a, flow_a, Dim::Speed)],
            [mixture(b, flow_b, Dim::Time), mixture(b, flow_b, Dim::Speed)],
            quad,
        ),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowPair {
    pub flow_a: usize,
    pub flow_b: usize,
    pub space_jsd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowMatching {
    pub pairs: Vec<FlowPair>,
    pub unmatched_a: Vec<usize>,
    pub unmatched_b: Vec<usize>,
}

/// Greedy pairing: flows of `a` in decreasing weight each take the closest
/// (space JSD) still-free flow of `b`.
pub fn match_flows(a: &ThdpPosterior, b: &ThdpPosterior) -> Result<FlowMatching> {
    check_codebooks(a, b)?;
    let dense_b: Vec<Vec<f64>> = b.flows.iter().map(|f| f.space.dense()).collect();
    let mut order: Vec<usize> = (0..a.n_flows()).collect();
    order.sort_by(|&i, &j| a.flows[j].weight.total_cmp(&a.flows[i].weight).then(i.cmp(&j)));
    let mut free = vec![true; b.n_flows()];
    let mut pairs = Vec::new();
    let mut unmatched_a = Vec::new();
    for ka in order {
        let da = a.flows[ka].space.dense();
        let mut best: Option<(usize, f64)> = None;
        for (kb, db) in dense_b.iter().enumerate() {
            if !free[kb] {
                continue;
            }
            let d = jsd(&da, db)?;
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((kb, d));
            }
        }
        match best {
            Some((kb, d)) => {
                free[kb] = false;
                pairs.push(FlowPair { flow_a: ka, flow_b: kb, space_jsd: d });
            }
            None => unmatched_a.push(ka),
        }
    }
    let unmatched_b = (0..b.n_flows()).filter(|&k| free[k]).collect();
    Ok(FlowMatching { pairs, unmatched_a, unmatched_b })
}
