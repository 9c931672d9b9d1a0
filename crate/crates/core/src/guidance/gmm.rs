//! 2D Gaussian mixtures for start and destination regions, order picked by
//! BIC.

use nalgebra::{Matrix2, Vector2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::{ln_sum_exp, sample_probs};

/// Smallest variance along any axis of a component.
pub const VARIANCE_FLOOR: f64 = 1e-6;
const EM_ITERS: usize = 500;
const EM_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmComponent {
    pub weight: f64,
    pub mean: [f64; 2],
    /// Row-major covariance.
    pub cov: [[f64; 2]; 2],
}

impl GmmComponent {
    fn cov_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.cov[0][0], self.cov[0][1], self.cov[1][0], self.cov[1][1])
    }

    pub fn ln_pdf(&self, p: (f64, f64)) -> f64 {
        let c = self.cov_matrix();
        let det = c.determinant();
        let r = Vector2::new(p.0 - self.mean[0], p.1 - self.mean[1]);
        let q = match c.try_inverse() {
            Some(inv) => r.dot(&(inv * r)),
            None => return f64::NEG_INFINITY,
        };
        -0.5 * (q + det.ln()) - std::f64::consts::TAU.ln()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gmm {
    pub components: Vec<GmmComponent>,
}

impl Gmm {
    /// One component at `p` with floored variance.
    pub fn point(p: (f64, f64)) -> Self {
        Self { components: vec![GmmComponent { weight: 1.0, mean: [p.0, p.1], cov: [[VARIANCE_FLOOR, 0.0], [0.0, VARIANCE_FLOOR]] }] }
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn ln_pdf(&self, p: (f64, f64)) -> f64 {
        let terms: Vec<f64> = self.components.iter().map(|c| c.weight.ln() + c.ln_pdf(p)).collect();
        ln_sum_exp(&terms)
    }

    pub fn log_likelihood(&self, points: &[(f64, f64)]) -> f64 {
        points.iter().map(|&p| self.ln_pdf(p)).sum()
    }

    /// Free parameters: weights, means and symmetric covariances.
    pub fn n_params(&self) -> usize {
        6 * self.components.len() - 1
    }

    pub fn bic(&self, points: &[(f64, f64)]) -> f64 {
        -2.0 * self.log_likelihood(points) + self.n_params() as f64 * (points.len() as f64).ln()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let w: Vec<f64> = self.components.iter().map(|c| c.weight).collect();
        let c = &self.components[sample_probs(&w, rng)];
        let l = c.cov_matrix().cholesky().map(|ch| ch.l()).unwrap_or_else(|| Matrix2::identity() * VARIANCE_FLOOR.sqrt());
        let z: Vector2<f64> = Vector2::new(StandardNormal.sample(rng), StandardNormal.sample(rng));
        let d = l * z;
        (c.mean[0] + d.x, c.mean[1] + d.y)
    }
}

fn floor_cov(c: Matrix2<f64>) -> Matrix2<f64> {
    let c = (c + c.transpose()) * 0.5;
    let eig = c.symmetric_eigen();
    let d = Matrix2::from_diagonal(&eig.eigenvalues.map(|v| v.max(VARIANCE_FLOOR)));
    let out = eig.eigenvectors * d * eig.eigenvectors.transpose();
    (out + out.transpose()) * 0.5
}

fn dist2(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)
}

/// Farthest-point seeding starting from the point nearest the centroid.
fn seeds(points: &[(f64, f64)], k: usize) -> Vec<(f64, f64)> {
    let n = points.len() as f64;
    let c = points.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0 / n, a.1 + p.1 / n));
    let first = (0..points.len()).min_by(|&i, &j| dist2(points[i], c).total_cmp(&dist2(points[j], c))).unwrap();
    let mut chosen = vec![points[first]];
    let mut near: Vec<f64> = points.iter().map(|&p| dist2(p, points[first])).collect();
    while chosen.len() < k {
        let far = (0..points.len()).max_by(|&i, &j| near[i].total_cmp(&near[j]).then(j.cmp(&i))).unwrap();
        let p = points[far];
        chosen.push(p);
        for (d, &q) in near.iter_mut().zip(points) {
            *d = d.min(dist2(q, p));
        }
    }
    chosen
}

/// EM for a fixed number of components.
pub fn fit_gmm(points: &[(f64, f64)], k: usize) -> Result<Gmm> {
    if points.len() < 2 {
        return Err(Error::invalid_input("a mixture needs at least 2 points"));
    }
    if k == 0 || k > points.len() {
        return Err(Error::invalid_input(format!("cannot fit {k} components to {} points", points.len())));
    }
    if points.iter().any(|p| !(p.0.is_finite() && p.1.is_finite())) {
        return Err(Error::invalid_input("points must be finite"));
    }
    let n = points.len();
    // hard assignment to the seeds for the first M-step
    let centers = seeds(points, k);
    let mut resp = vec![vec![0.0; k]; n];
    for (i, &p) in points.iter().enumerate() {
        let j = (0..k).min_by(|&a, &b| dist2(p, centers[a]).total_cmp(&dist2(p, centers[b]))).unwrap();
        resp[i][j] = 1.0;
    }
    let mut gmm = m_step(points, &resp);
    let mut prev = gmm.log_likelihood(points);
    for _ in 0..EM_ITERS {
        for (i, &p) in points.iter().enumerate() {
            let ln: Vec<f64> = gmm.components.iter().map(|c| c.weight.ln() + c.ln_pdf(p)).collect();
            resp[i] = crate::util::normalize_ln(&ln);
        }
        gmm = m_step(points, &resp);
        let ll = gmm.log_likelihood(points);
        if (ll - prev).abs() <= EM_TOL * prev.abs().max(1.0) {
            break;
        }
        prev = ll;
    }
    Ok(gmm)
}

fn m_step(points: &[(f64, f64)], resp: &[Vec<f64>]) -> Gmm {
    let n = points.len() as f64;
    let k = resp[0].len();
    let components = (0..k)
        .map(|j| {
            let nj: f64 = resp.iter().map(|r| r[j]).sum();
            let nj_safe = nj.max(1e-300);
            let mean = points.iter().zip(resp).fold(Vector2::zeros(), |a, (p, r)| a + Vector2::new(p.0, p.1) * r[j]) / nj_safe;
            let cov = points.iter().zip(resp).fold(Matrix2::zeros(), |a, (p, r)| {
                let d = Vector2::new(p.0, p.1) - mean;
                a + d * d.transpose() * r[j]
            }) / nj_safe;
            let cov = floor_cov(cov);
            GmmComponent {
                weight: (nj / n).max(1e-300),
                mean: [mean.x, mean.y],
                cov: [[cov[(0, 0)], cov[(0, 1)]], [cov[(1, 0)], cov[(1, 1)]]],
            }
        })
        .collect::<Vec<_>>();
    let total: f64 = components.iter().map(|c| c.weight).sum();
    Gmm { components: components.into_iter().map(|c| GmmComponent { weight: c.weight / total, ..c }).collect() }
}

/// Lowest-BIC mixture over `1..=max_components` components.
pub fn fit_endpoint_gmm(points: &[(f64, f64)], max_components: usize) -> Result<Gmm> {
    if points.len() < 2 {
        return Err(Error::invalid_input("an endpoint mixture needs at least 2 points"));
    }
    let mut best: Option<(f64, Gmm)> = None;
    for k in 1..=max_components.max(1).min(points.len()) {
        let g = fit_gmm(points, k)?;
        let bic = g.bic(points);
        if best.as_ref().is_none_or(|(b, _)| bic < *b) {
            best = Some((bic, g));
        }
    }
    Ok(best.expect("at least one order").1)
}
