//! Per-flow linear dynamics over homogeneous 2D states `[x, y, 1]`, learned
//! by EM with both trajectory endpoints clamped.
//!
//! The constant third coordinate is never random: filtering and sampling run
//! on the affine 2D system `s_t = B₂ s_{t-1} + b + λ_t` read off the top rows
//! of `B` and the top-left block of `Λ`, while the M-step works on the full
//! 3×3 homogeneous moments.

use nalgebra::{Matrix2, Matrix3, SymmetricEigen, Vector2, Vector3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Observation noise on every homogeneous coordinate.
pub const OMEGA: f64 = 0.001;
/// Ridge added to a singular M-step denominator.
pub const RIDGE: f64 = 1e-8;
/// Isotropic jitter added to `Λ` wherever it is inverted, so a vanishing
/// process noise gives the small-noise limit instead of a singular system.
pub const JITTER: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowDynamics {
    /// Row-major transition matrix.
    pub b: [[f64; 3]; 3],
    /// Row-major process covariance.
    pub lambda: [[f64; 3]; 3],
    /// Diagonal of the observation covariance.
    pub omega: [f64; 3],
}

fn to_rows(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    [0, 1, 2].map(|i| [0, 1, 2].map(|j| m[(i, j)]))
}

fn from_rows(r: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| r[i][j])
}

impl FlowDynamics {
    pub fn new(b: Matrix3<f64>, lambda: Matrix3<f64>) -> Self {
        Self { b: to_rows(&b), lambda: to_rows(&lambda), omega: [OMEGA; 3] }
    }

    pub fn b_matrix(&self) -> Matrix3<f64> {
        from_rows(&self.b)
    }

    pub fn lambda_matrix(&self) -> Matrix3<f64> {
        from_rows(&self.lambda)
    }

    fn affine(&self) -> Affine {
        let b = self.b_matrix();
        let l = self.lambda_matrix();
        Affine {
            b: b.fixed_view::<2, 2>(0, 0).into_owned(),
            c: b.fixed_view::<2, 1>(0, 2).into_owned(),
            lambda: l.fixed_view::<2, 2>(0, 0).into_owned(),
            omega: Matrix2::from_diagonal(&Vector2::new(self.omega[0], self.omega[1])),
        }
    }

    /// Fails unless `Λ` is symmetric positive semidefinite.
    pub fn check(&self) -> Result<()> {
        let l = self.lambda_matrix();
        if l.iter().chain(self.b_matrix().iter()).any(|x| !x.is_finite()) {
            return Err(Error::invalid_input("dynamics contain non-finite entries"));
        }
        if (l - l.transpose()).abs().max() > 1e-12 * (1.0 + l.abs().max()) {
            return Err(Error::invalid_input("process covariance is not symmetric"));
        }
        let min = SymmetricEigen::new(l).eigenvalues.min();
        if min < -1e-10 * (1.0 + l.abs().max()) {
            return Err(Error::invalid_input(format!("process covariance is not positive semidefinite (eigenvalue {min:e})")));
        }
        Ok(())
    }
}

struct Affine {
    b: Matrix2<f64>,
    c: Vector2<f64>,
    lambda: Matrix2<f64>,
    omega: Matrix2<f64>,
}

impl Affine {
    fn lambda_eff(&self) -> Matrix2<f64> {
        self.lambda + Matrix2::identity() * JITTER
    }

    fn predict(&self, m: &Vector2<f64>, p: &Matrix2<f64>) -> (Vector2<f64>, Matrix2<f64>) {
        (self.b * m + self.c, sym(self.b * p * self.b.transpose() + self.lambda_eff()))
    }
}

fn sym(m: Matrix2<f64>) -> Matrix2<f64> {
    (m + m.transpose()) * 0.5
}

fn ln_gauss2(r: &Vector2<f64>, s: &Matrix2<f64>) -> Result<f64> {
    let chol = s.cholesky().ok_or_else(|| Error::Numerical("innovation covariance is not positive definite".into()))?;
    let l = chol.l();
    let ln_det = 2.0 * (l[(0, 0)].ln() + l[(1, 1)].ln());
    let q = r.dot(&chol.solve(r));
    Ok(-0.5 * (q + ln_det) - std::f64::consts::TAU.ln())
}

fn inverse_sym(s: &Matrix2<f64>) -> Result<Matrix2<f64>> {
    s.cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Numerical("covariance is not positive definite".into()))
}

/// Cholesky inverse, or the eigen pseudo-inverse for a numerically
/// singular matrix.
fn pinv_sym(s: &Matrix2<f64>) -> Result<Matrix2<f64>> {
    if let Ok(inv) = inverse_sym(s) {
        if inv.iter().all(|x| x.is_finite()) {
            return Ok(inv);
        }
    }
    let eig = SymmetricEigen::new(sym(*s));
    let top = eig.eigenvalues.abs().max();
    if !top.is_finite() {
        return Err(Error::Numerical("covariance is not finite".into()));
    }
    let d = eig.eigenvalues.map(|v| if v > 1e-12 * top { 1.0 / v } else { 0.0 });
    Ok(eig.eigenvectors * Matrix2::from_diagonal(&d) * eig.eigenvectors.transpose())
}

/// Smoothed moments of one trajectory.
#[derive(Debug, Clone)]
pub struct Smoothed {
    pub means: Vec<Vector2<f64>>,
    pub covs: Vec<Matrix2<f64>>,
    /// `Cov(s_t, s_{t-1})` for `t = 1..T` (index 0 unused).
    pub cross: Vec<Matrix2<f64>>,
    /// `ln p(x_2 … x_T | s_1 = x_1)` with `s_T = x_T` observed exactly.
    pub log_likelihood: f64,
}

impl Smoothed {
    /// `E[s_t s_tᵀ]` in homogeneous form.
    pub fn p_tt(&self, t: usize) -> Matrix3<f64> {
        outer_h(&self.means[t], &self.means[t], &self.covs[t])
    }

    /// `E[s_t s_{t-1}ᵀ]` in homogeneous form.
    pub fn p_t_prev(&self, t: usize) -> Matrix3<f64> {
        outer_h(&self.means[t], &self.means[t - 1], &self.cross[t])
    }
}

fn outer_h(a: &Vector2<f64>, b: &Vector2<f64>, cov: &Matrix2<f64>) -> Matrix3<f64> {
    let (ha, hb) = (Vector3::new(a.x, a.y, 1.0), Vector3::new(b.x, b.y, 1.0));
    let mut m = ha * hb.transpose();
    let mut top = m.fixed_view_mut::<2, 2>(0, 0);
    top += cov;
    m
}

/// Kalman filter and RTS smoother for one trajectory of at least 2 points.
pub fn smooth(dynamics: &FlowDynamics, xs: &[(f64, f64)]) -> Result<Smoothed> {
    let n = xs.len();
    if n < 2 {
        return Err(Error::invalid_input("smoothing needs at least 2 points"));
    }
    let a = dynamics.affine();
    let x = |t: usize| Vector2::new(xs[t].0, xs[t].1);
    let mut fm = vec![x(0)];
    let mut fp = vec![Matrix2::zeros()];
    let mut pm = vec![Vector2::zeros()];
    let mut pp = vec![Matrix2::zeros()];
    let mut ll = 0.0;
    for t in 1..n {
        let (m, p) = a.predict(&fm[t - 1], &fp[t - 1]);
        let r = x(t) - m;
        if t + 1 < n {
            let s = sym(p + a.omega);
            ll += ln_gauss2(&r, &s)?;
            let k = p * inverse_sym(&s)?;
            let ik = Matrix2::identity() - k;
            fm.push(m + k * r);
            fp.push(sym(ik * p * ik.transpose() + k * a.omega * k.transpose()));
        } else {
            ll += ln_gauss2(&r, &p)?;
            fm.push(x(t));
            fp.push(Matrix2::zeros());
        }
        pm.push(m);
        pp.push(p);
    }
    let mut means = fm.clone();
    let mut covs = fp.clone();
    let mut cross = vec![Matrix2::zeros(); n];
    for t in (0..n - 1).rev() {
        let j = fp[t] * a.b.transpose() * inverse_sym(&pp[t + 1])?;
        means[t] = fm[t] + j * (means[t + 1] - pm[t + 1]);
        covs[t] = sym(fp[t] + j * (covs[t + 1] - pp[t + 1]) * j.transpose());
        cross[t + 1] = covs[t + 1] * j.transpose();
    }
    Ok(Smoothed { means, covs, cross, log_likelihood: ll })
}

/// Accumulated homogeneous moments for the M-step.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSums {
    /// `Σ_i τ_i Σ_{t≥2} P_{t,t}`.
    pub p_tt: Matrix3<f64>,
    /// `Σ_i τ_i Σ_{t≥2} P_{t,t-1}`.
    pub p_t_prev: Matrix3<f64>,
    /// `Σ_i τ_i Σ_{t≥2} P_{t-1,t-1}`.
    pub p_prev: Matrix3<f64>,
    /// `Σ_i τ_i (T_i - 1)`.
    pub steps: f64,
}

impl MomentSums {
    pub fn zero() -> Self {
        Self { p_tt: Matrix3::zeros(), p_t_prev: Matrix3::zeros(), p_prev: Matrix3::zeros(), steps: 0.0 }
    }

    pub fn add(&mut self, s: &Smoothed, tau: f64) {
        for t in 1..s.means.len() {
            self.p_tt += s.p_tt(t) * tau;
            self.p_t_prev += s.p_t_prev(t) * tau;
            self.p_prev += s.p_tt(t - 1) * tau;
        }
        self.steps += tau * (s.means.len() - 1) as f64;
    }
}

/// M-step result; `ridged` reports a singular denominator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MStep {
    pub b: Matrix3<f64>,
    pub lambda: Matrix3<f64>,
    pub ridged: bool,
}

/// `B = S₁₀ S₀₀⁻¹`, `Λ = (S₁₁ - B S₁₀ᵀ) / Σ τ (T - 1)`, then symmetrized and
/// projected onto the PSD cone.
pub fn m_step_update(sums: &MomentSums) -> Result<MStep> {
    if !(sums.steps > 0.0) {
        return Err(Error::invalid_input("no transitions to estimate dynamics from"));
    }
    let scale = sums.p_prev.abs().max().max(1.0);
    let rcond = {
        let e = SymmetricEigen::new(sums.p_prev).eigenvalues;
        e.min() / e.max()
    };
    let (inv, ridged) = match sums.p_prev.try_inverse() {
        Some(inv) if rcond > 1e-12 => (inv, false),
        _ => {
            let r = sums.p_prev + Matrix3::identity() * RIDGE * scale;
            (r.try_inverse().ok_or_else(|| Error::Numerical("ridged M-step matrix is singular".into()))?, true)
        }
    };
    let b = sums.p_t_prev * inv;
    let raw = (sums.p_tt - b * sums.p_t_prev.transpose()) / sums.steps;
    let lambda = psd_floor((raw + raw.transpose()) * 0.5);
    if b.iter().chain(lambda.iter()).any(|x| !x.is_finite()) {
        return Err(Error::Numerical("M-step produced non-finite parameters".into()));
    }
    Ok(MStep { b, lambda, ridged })
}

fn psd_floor(m: Matrix3<f64>) -> Matrix3<f64> {
    let eig = SymmetricEigen::new(m);
    if eig.eigenvalues.min() >= 0.0 {
        return m;
    }
    let d = Matrix3::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0)));
    let out = eig.eigenvectors * d * eig.eigenvectors.transpose();
    (out + out.transpose()) * 0.5
}

/// Trajectory weighting in the M-step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauWeights {
    /// Proportional to each trajectory's mean observation density under its
    /// smoothed states, recomputed once per iteration.
    #[default]
    Likelihood,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdsConfig {
    pub max_iters: usize,
    /// Relative log-likelihood change that stops EM.
    pub tol: f64,
    pub weights: TauWeights,
}

impl Default for LdsConfig {
    fn default() -> Self {
        Self { max_iters: 200, tol: 1e-6, weights: TauWeights::Likelihood }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LdsFit {
    pub dynamics: FlowDynamics,
    /// Total log-likelihood at the start and after every iteration.
    pub log_likelihood: Vec<f64>,
    /// τ-weighted log-likelihood before and after each M-step, both under
    /// that iteration's weights.
    pub weighted_steps: Vec<(f64, f64)>,
    pub iterations: usize,
    pub converged: bool,
    /// Some M-step needed the ridge.
    pub ridged: bool,
}

/// Mean observation density `(1/T) Σ_t N(x_t; s_t, Ω)` with smoothed states.
fn observation_fit(s: &Smoothed, xs: &[(f64, f64)]) -> f64 {
    let omega = Matrix2::identity() * OMEGA;
    let total: f64 = xs
        .iter()
        .zip(&s.means)
        .map(|(&(x, y), m)| ln_gauss2(&(Vector2::new(x, y) - m), &omega).map_or(0.0, f64::exp))
        .sum();
    total / xs.len() as f64
}

fn tau(smoothed: &[Smoothed], trajs: &[&[(f64, f64)]], mode: TauWeights) -> Vec<f64> {
    let n = smoothed.len() as f64;
    if mode == TauWeights::Uniform {
        return vec![1.0 / n; smoothed.len()];
    }
    let raw: Vec<f64> = smoothed.iter().zip(trajs).map(|(s, xs)| observation_fit(s, xs)).collect();
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return vec![1.0 / n; smoothed.len()];
    }
    raw.iter().map(|r| r / total).collect()
}

/// Least-squares transition on the raw observations, as an EM start.
pub fn initial_dynamics(trajs: &[&[(f64, f64)]]) -> Result<FlowDynamics> {
    let mut sums = MomentSums::zero();
    for xs in trajs {
        for t in 1..xs.len() {
            let (a, b) = (Vector2::new(xs[t].0, xs[t].1), Vector2::new(xs[t - 1].0, xs[t - 1].1));
            sums.p_tt += outer_h(&a, &a, &Matrix2::zeros());
            sums.p_t_prev += outer_h(&a, &b, &Matrix2::zeros());
            sums.p_prev += outer_h(&b, &b, &Matrix2::zeros());
            sums.steps += 1.0;
        }
    }
    let m = m_step_update(&sums)?;
    let mut lambda = m.lambda;
    let mut top = lambda.fixed_view_mut::<2, 2>(0, 0);
    top += Matrix2::identity() * OMEGA;
    Ok(FlowDynamics::new(m.b, lambda))
}

/// EM over trajectories of one flow; trajectories shorter than 3 points are
/// ignored.
pub fn fit_flow_dynamics(trajectories: &[Vec<(f64, f64)>], cfg: &LdsConfig) -> Result<LdsFit> {
    let trajs: Vec<&[(f64, f64)]> = trajectories.iter().filter(|t| t.len() >= 3).map(|t| t.as_slice()).collect();
    if trajs.is_empty() {
        return Err(Error::invalid_input("dynamics need at least one trajectory of 3 or more points"));
    }
    if trajs.iter().flat_map(|t| t.iter()).any(|p| !(p.0.is_finite() && p.1.is_finite())) {
        return Err(Error::invalid_input("trajectory positions must be finite"));
    }
    let mut dynamics = initial_dynamics(&trajs)?;
    let smooth_all = |d: &FlowDynamics| trajs.iter().map(|xs| smooth(d, xs)).collect::<Result<Vec<_>>>();
    let mut smoothed = smooth_all(&dynamics)?;
    let mut trace = vec![smoothed.iter().map(|s| s.log_likelihood).sum::<f64>()];
    let mut weighted_steps = Vec::new();
    let mut ridged = false;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        let weights = tau(&smoothed, &trajs, cfg.weights);
        let weighted = |sm: &[Smoothed]| sm.iter().zip(&weights).map(|(s, w)| w * s.log_likelihood).sum::<f64>();
        let before = weighted(&smoothed);
        let mut sums = MomentSums::zero();
        for (s, w) in smoothed.iter().zip(&weights) {
            sums.add(s, *w);
        }
        let m = m_step_update(&sums)?;
        ridged |= m.ridged;
        dynamics = FlowDynamics::new(m.b, m.lambda);
        smoothed = smooth_all(&dynamics)?;
        weighted_steps.push((before, weighted(&smoothed)));
        let ll: f64 = smoothed.iter().map(|s| s.log_likelihood).sum();
        let prev = trace[trace.len() - 1];
        trace.push(ll);
        iterations += 1;
        if ((ll - prev) / prev.abs().max(1e-300)).abs() < cfg.tol {
            converged = true;
            break;
        }
    }
    Ok(LdsFit { dynamics, log_likelihood: trace, weighted_steps, iterations, converged, ridged })
}

fn sample_gaussian2<R: Rng + ?Sized>(cov: &Matrix2<f64>, rng: &mut R) -> Vector2<f64> {
    let eig = SymmetricEigen::new(sym(*cov));
    let z: Vector2<f64> = Vector2::new(StandardNormal.sample(rng), StandardNormal.sample(rng));
    eig.eigenvectors * Vector2::new(eig.eigenvalues[0].max(0.0).sqrt() * z[0], eig.eigenvalues[1].max(0.0).sqrt() * z[1])
}

/// Draws a `len`-point path from the dynamics conditioned on both endpoints.
pub fn sample_guided_trajectory<R: Rng + ?Sized>(
    dynamics: &FlowDynamics,
    start: (f64, f64),
    end: (f64, f64),
    len: usize,
    rng: &mut R,
) -> Result<Vec<(f64, f64)>> {
    if len < 2 {
        return Err(Error::invalid_input("guided trajectories need at least 2 points"));
    }
    dynamics.check()?;
    let a = dynamics.affine();
    let deterministic = a.lambda.iter().all(|&x| x == 0.0);
    let mut m = vec![Vector2::new(start.0, start.1)];
    let mut p = vec![Matrix2::zeros()];
    for t in 1..len {
        let (mt, pt) = a.predict(&m[t - 1], &p[t - 1]);
        m.push(mt);
        p.push(pt);
    }
    let mut path = vec![(0.0, 0.0); len];
    let mut next = Vector2::new(end.0, end.1);
    path[len - 1] = end;
    for t in (1..len - 1).rev() {
        let j = p[t] * a.b.transpose() * pinv_sym(&p[t + 1])?;
        let mean = m[t] + j * (next - m[t + 1]);
        let cov = sym(p[t] - j * p[t + 1] * j.transpose());
        let s = if deterministic { mean } else { mean + sample_gaussian2(&cov, rng) };
        path[t] = (s.x, s.y);
        next = s;
    }
    path[0] = start;
    Ok(path)
}

/// Linear resampling of timed points onto a fixed frame interval.
pub fn resample_track(points: &[(f64, f64, f64)], dt: f64) -> Vec<(f64, f64)> {
    if points.is_empty() || !(dt > 0.0) {
        return Vec::new();
    }
    let (t0, t1) = (points[0].0, points[points.len() - 1].0);
    let n = ((t1 - t0) / dt).floor() as usize + 1;
    let mut out = Vec::with_capacity(n + 1);
    let mut i = 0;
    for s in 0..n {
        let t = t0 + s as f64 * dt;
        while i + 1 < points.len() - 1 && points[i + 1].0 < t {
            i += 1;
        }
        out.push(lerp(points, i, t));
    }
    let last = points[points.len() - 1];
    if out.last().is_none_or(|&(x, y)| (x, y) != (last.1, last.2)) && t1 - (t0 + (n - 1) as f64 * dt) > 1e-9 * dt {
        out.push((last.1, last.2));
    }
    out
}

fn lerp(points: &[(f64, f64, f64)], i: usize, t: f64) -> (f64, f64) {
    if points.len() == 1 {
        return (points[0].1, points[0].2);
    }
    let (a, b) = (points[i], points[i + 1]);
    let w = if b.0 > a.0 { ((t - a.0) / (b.0 - a.0)).clamp(0.0, 1.0) } else { 0.0 };
    (a.1 + w * (b.1 - a.1), a.2 + w * (b.2 - a.2))
}
