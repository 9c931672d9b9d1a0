//! Conjugate sufficient statistics for dishes.
//!
//! Space dishes are Multinomials over codebook cells with a symmetric
//! Dirichlet prior; time and speed dishes are Gaussians with a
//! Normal-Inverse-Gamma prior. Both expose posterior-predictive densities
//! with the dish's current customers folded in.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Sufficient statistics of a conjugate dish.
pub trait Conjugate: Clone + PartialEq + std::fmt::Debug {
    type Value: Copy + std::fmt::Debug;

    fn observe(&mut self, x: Self::Value);
    fn forget(&mut self, x: Self::Value);
    fn count(&self) -> usize;
    /// Same prior, no data.
    fn empty_like(&self) -> Self;
    /// `ln p(x | customers folded into self)`.
    fn ln_predictive(&self, x: Self::Value) -> f64;

    /// `ln p(x_1, ..., x_n | customers folded into self)`: the sequential
    /// product of predictives.
    fn ln_joint_predictive(&self, xs: &[Self::Value]) -> f64 {
        let mut s = self.clone();
        let mut acc = 0.0;
        for &x in xs {
            acc += s.ln_predictive(x);
            s.observe(x);
        }
        acc
    }

    /// Log marginal likelihood of the folded customers under the prior.
    fn ln_marginal(&self) -> f64;
}

// ---------------------------------------------------------------------------
// Dirichlet-Multinomial

/// Cell counts of a space dish under a symmetric Dirichlet(eta) prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirMultStats {
    eta: f64,
    counts: Vec<u32>,
    total: u64,
}

impl DirMultStats {
    pub fn new(vocab_size: usize, eta: f64) -> Result<Self> {
        if vocab_size == 0 {
            return Err(Error::invalid_config("vocabulary size must be positive"));
        }
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(Error::invalid_config("Dirichlet concentration eta must be > 0"));
        }
        Ok(Self { eta, counts: vec![0; vocab_size], total: 0 })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn vocab_size(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// `(counts[cell] + eta) / (total + V eta)`.
    pub fn predictive(&self, cell: u32) -> f64 {
        (self.counts[cell as usize] as f64 + self.eta)
            / (self.total as f64 + self.vocab_size() as f64 * self.eta)
    }

    /// Non-zero cells and their counts, in cell order.
    pub fn occupied(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.counts.iter().enumerate().filter(|(_, &c)| c > 0).map(|(i, &c)| (i as u32, c))
    }
}

impl Conjugate for DirMultStats {
    type Value = u32;

    fn observe(&mut self, cell: u32) {
        self.counts[cell as usize] += 1;
        self.total += 1;
    }

    fn forget(&mut self, cell: u32) {
        let c = &mut self.counts[cell as usize];
        assert!(*c > 0, "forgetting cell {cell} that was never observed");
        *c -= 1;
        self.total -= 1;
    }

    fn count(&self) -> usize {
        self.total as usize
    }

    fn empty_like(&self) -> Self {
        Self { eta: self.eta, counts: vec![0; self.counts.len()], total: 0 }
    }

    fn ln_predictive(&self, cell: u32) -> f64 {
        self.predictive(cell).ln()
    }

    /// Closed form: a ratio of Gamma functions per distinct cell.
    fn ln_joint_predictive(&self, cells: &[u32]) -> f64 {
        if cells.is_empty() {
            return 0.0;
        }
        let mut sorted = cells.to_vec();
        sorted.sort_unstable();
        let eta = self.eta;
        let mut acc = 0.0;
        let mut i = 0;
        while i < sorted.len() {
            let cell = sorted[i];
            let mut j = i;
            while j < sorted.len() && sorted[j] == cell {
                j += 1;
            }
            let base = self.counts[cell as usize] as f64 + eta;
            let k = (j - i) as f64;
            acc += if k == 1.0 { base.ln() } else { ln_gamma(base + k) - ln_gamma(base) };
            i = j;
        }
        let denom = self.total as f64 + self.vocab_size() as f64 * eta;
        let n = cells.len() as f64;
        acc - if n == 1.0 { denom.ln() } else { ln_gamma(denom + n) - ln_gamma(denom) }
    }

    fn ln_marginal(&self) -> f64 {
        let eta = self.eta;
        let lg_eta = ln_gamma(eta);
        let cells: f64 = self.counts.iter().filter(|&&c| c > 0).map(|&c| ln_gamma(c as f64 + eta) - lg_eta).sum();
        let v_eta = self.vocab_size() as f64 * eta;
        cells + ln_gamma(v_eta) - ln_gamma(self.total as f64 + v_eta)
    }
}

// ---------------------------------------------------------------------------
// Normal-Inverse-Gamma

/// Parameters `(mu0, kappa0, a0, b0)` of a Normal-Inverse-Gamma prior:
/// `sigma² ~ InvGamma(a0, b0)`, `mu | sigma² ~ N(mu0, sigma² / kappa0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NigPrior {
    pub mu0: f64,
    pub kappa0: f64,
    pub a0: f64,
    pub b0: f64,
}

impl NigPrior {
    pub fn new(mu0: f64, kappa0: f64, a0: f64, b0: f64) -> Result<Self> {
        let p = Self { mu0, kappa0, a0, b0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu0.is_finite() {
            return Err(Error::invalid_config("NIG mu0 must be finite"));
        }
        for (name, v) in [("kappa0", self.kappa0), ("a0", self.a0), ("b0", self.b0)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid_config(format!("NIG {name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Data-driven default: centred on the sample mean, `kappa0 = 0.01` so
    /// that component means may sit anywhere in the data range, `a0 = 1` and
    /// `b0` a tenth of the sample variance.
    pub fn from_data(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid_input("cannot build a prior from no data"));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let scale = mean.abs().max(1.0);
        // all-equal data: keep the prior proper
        let var = if var > 1e-12 * scale * scale { var } else { 1e-6 * scale * scale };
        Self::new(mean, DATA_PRIOR_KAPPA0, 1.0, var * DATA_PRIOR_VARIANCE_FRACTION)
    }
}

pub const DATA_PRIOR_KAPPA0: f64 = 0.01;
pub const DATA_PRIOR_VARIANCE_FRACTION: f64 = 0.1;

/// Fixed-point resolution for the exact running sums.
const FIXED_SCALE: f64 = (1u64 << 30) as f64;

fn to_fixed(x: f64) -> i128 {
    debug_assert!(x.abs() < 1e9, "value {x} outside the fixed-point range");
    (x * FIXED_SCALE).round() as i128
}

/// Gaussian sufficient statistics `(n, Σx, Σx²)` under a NIG prior.
///
/// Sums are kept in 2⁻³⁰ fixed point so that adding and removing customers in
/// any order is exact, which makes full recounts comparable bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NigStats {
    prior: NigPrior,
    n: u64,
    sum: i128,
    sum_sq: i128,
}

/// NIG posterior parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NigPosterior {
    pub mu: f64,
    pub kappa: f64,
    pub a: f64,
    pub b: f64,
}

/// A univariate Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mean: f64,
    pub var: f64,
}

impl Gaussian {
    pub fn new(mean: f64, var: f64) -> Self {
        Self { mean, var }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        let d = x - self.mean;
        -0.5 * ((2.0 * PI * self.var).ln() + d * d / self.var)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let z = (x - self.mean) / (2.0 * self.var).sqrt();
        0.5 * statrs::function::erf::erfc(-z)
    }

    pub fn std_dev(&self) -> f64 {
        self.var.sqrt()
    }
}

impl NigStats {
    pub fn new(prior: NigPrior) -> Self {
        Self { prior, n: 0, sum: 0, sum_sq: 0 }
    }

    pub fn prior(&self) -> &NigPrior {
        &self.prior
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn sum(&self) -> f64 {
        self.sum as f64 / FIXED_SCALE
    }

    pub fn sum_sq(&self) -> f64 {
        self.sum_sq as f64 / (FIXED_SCALE * FIXED_SCALE)
    }

    /// Sum of squared deviations from the sample mean.
    fn centered_ss(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        let n = self.n as i128;
        let exact = n.checked_mul(self.sum_sq).and_then(|a| {
            self.sum.checked_mul(self.sum).and_then(|b| a.checked_sub(b))
        });
        let ss = match exact {
            Some(v) => v as f64 / (FIXED_SCALE * FIXED_SCALE) / self.n as f64,
            None => {
                let (s, s2) = (self.sum(), self.sum_sq());
                s2 - s * s / self.n as f64
            }
        };
        ss.max(0.0)
    }

    pub fn posterior(&self) -> NigPosterior {
        let p = &self.prior;
        if self.n == 0 {
            return NigPosterior { mu: p.mu0, kappa: p.kappa0, a: p.a0, b: p.b0 };
        }
        let n = self.n as f64;
        let mean = self.sum() / n;
        let kappa = p.kappa0 + n;
        let mu = (p.kappa0 * p.mu0 + self.sum()) / kappa;
        let a = p.a0 + 0.5 * n;
        let b = p.b0 + 0.5 * self.centered_ss() + p.kappa0 * n * (mean - p.mu0).powi(2) / (2.0 * kappa);
        NigPosterior { mu, kappa, a, b }
    }
}

impl NigPosterior {
    /// Student-t predictive `(df, location, scale)`.
    pub fn predictive_t(&self) -> (f64, f64, f64) {
        let df = 2.0 * self.a;
        let scale2 = self.b * (self.kappa + 1.0) / (self.a * self.kappa);
        (df, self.mu, scale2.sqrt())
    }

    /// Posterior mean of `(mu, sigma²)`; the variance falls back to the
    /// mode when the mean does not exist.
    pub fn mean_gaussian(&self) -> Gaussian {
        let var = if self.a > 1.0 { self.b / (self.a - 1.0) } else { self.b / (self.a + 1.0) };
        Gaussian::new(self.mu, var)
    }

    pub fn sample_gaussian<R: Rng + ?Sized>(&self, rng: &mut R) -> Gaussian {
        // sigma² ~ InvGamma(a, b)  <=>  1/sigma² ~ Gamma(a, rate b)
        let precision = Gamma::new(self.a, 1.0 / self.b).expect("valid NIG posterior").sample(rng);
        let var = 1.0 / precision.max(f64::MIN_POSITIVE);
        let mu = Normal::new(self.mu, (var / self.kappa).sqrt()).expect("finite").sample(rng);
        Gaussian::new(mu, var)
    }
}

/// Log density of a location-scale Student-t.
pub fn student_t_ln_pdf(x: f64, df: f64, loc: f64, scale: f64) -> f64 {
    let z = (x - loc) / scale;
    ln_gamma(0.5 * (df + 1.0)) - ln_gamma(0.5 * df) - 0.5 * (df * PI).ln() - scale.ln()
        - 0.5 * (df + 1.0) * (z * z / df).ln_1p()
}

impl Conjugate for NigStats {
    type Value = f64;

    fn observe(&mut self, x: f64) {
        let q = to_fixed(x);
        self.n += 1;
        self.sum += q;
        self.sum_sq += q * q;
    }

    fn forget(&mut self, x: f64) {
        assert!(self.n > 0, "forgetting from empty Gaussian stats");
        let q = to_fixed(x);
        self.n -= 1;
        self.sum -= q;
        self.sum_sq -= q * q;
    }

    fn count(&self) -> usize {
        self.n as usize
    }

    fn empty_like(&self) -> Self {
        Self::new(self.prior)
    }

    fn ln_predictive(&self, x: f64) -> f64 {
        let (df, loc, scale) = self.posterior().predictive_t();
        student_t_ln_pdf(x, df, loc, scale)
    }

    fn ln_joint_predictive(&self, xs: &[f64]) -> f64 {
        match xs.len() {
            0 => 0.0,
            1 => self.ln_predictive(xs[0]),
            _ => {
                let mut post = self.clone();
                for &x in xs {
                    post.observe(x);
                }
                post.ln_marginal() - self.ln_marginal()
            }
        }
    }

    fn ln_marginal(&self) -> f64 {
        let p = &self.prior;
        let post = self.posterior();
        ln_gamma(post.a) - ln_gamma(p.a0) + p.a0 * p.b0.ln() - post.a * post.b.ln()
            + 0.5 * (p.kappa0.ln() - post.kappa.ln())
            - 0.5 * self.n as f64 * (2.0 * PI).ln()
    }
}

// ---------------------------------------------------------------------------
// Reported dish parameters

/// How dish parameters and mixture weights are reported from a seating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reporting {
    /// One posterior draw.
    #[default]
    Draw,
    /// Posterior means.
    Mean,
}

/// A categorical over a large vocabulary stored as explicit cells plus a
/// shared probability for every unlisted cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseCategorical {
    pub vocab_size: usize,
    /// `(cell, probability)`, sorted by cell.
    pub cells: Vec<(u32, f64)>,
    pub background: f64,
}

impl SparseCategorical {
    pub fn prob(&self, cell: u32) -> f64 {
        match self.cells.binary_search_by_key(&cell, |&(c, _)| c) {
            Ok(i) => self.cells[i].1,
            Err(_) => self.background,
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.cells.iter().map(|c| c.1).sum::<f64>()
            + self.background * (self.vocab_size - self.cells.len()) as f64
    }

    pub fn dense(&self) -> Vec<f64> {
        let mut v = vec![self.background; self.vocab_size];
        for &(c, p) in &self.cells {
            v[c as usize] = p;
        }
        v
    }
}

/// Posterior summaries of a dish's parameters.
pub trait DishParams: Conjugate {
    type Params: Clone + std::fmt::Debug;
    fn mean_params(&self) -> Self::Params;
    fn draw_params<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::Params;

    fn report<R: Rng + ?Sized>(&self, mode: Reporting, rng: &mut R) -> Self::Params {
        match mode {
            Reporting::Draw => self.draw_params(rng),
            Reporting::Mean => self.mean_params(),
        }
    }
}

impl DishParams for DirMultStats {
    type Params = SparseCategorical;

    fn mean_params(&self) -> SparseCategorical {
        let denom = self.total as f64 + self.vocab_size() as f64 * self.eta;
        SparseCategorical {
            vocab_size: self.vocab_size(),
            cells: self.occupied().map(|(c, n)| (c, (n as f64 + self.eta) / denom)).collect(),
            background: self.eta / denom,
        }
    }

    /// Occupied cells get their own Gamma draw; the unoccupied remainder is
    /// drawn as one aggregate and split evenly.
    fn draw_params<R: Rng + ?Sized>(&self, rng: &mut R) -> SparseCategorical {
        let occupied: Vec<(u32, u32)> = self.occupied().collect();
        let rest = self.vocab_size() - occupied.len();
        let mut cells: Vec<(u32, f64)> = occupied
            .iter()
            .map(|&(c, n)| (c, gamma_draw(n as f64 + self.eta, rng)))
            .collect();
        let rest_mass = if rest > 0 { gamma_draw(rest as f64 * self.eta, rng) } else { 0.0 };
        let total = cells.iter().map(|c| c.1).sum::<f64>() + rest_mass;
        if !(total > 0.0) {
            return self.mean_params();
        }
        for c in &mut cells {
            c.1 /= total;
        }
        let background = if rest > 0 { rest_mass / total / rest as f64 } else { 0.0 };
        SparseCategorical { vocab_size: self.vocab_size(), cells, background }
    }
}

impl DishParams for NigStats {
    type Params = Gaussian;

    fn mean_params(&self) -> Gaussian {
        self.posterior().mean_gaussian()
    }

    fn draw_params<R: Rng + ?Sized>(&self, rng: &mut R) -> Gaussian {
        self.posterior().sample_gaussian(rng)
    }
}

pub(crate) fn gamma_draw<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    Gamma::new(shape, 1.0).expect("positive gamma shape").sample(rng)
}

/// Dirichlet draw (or mean) for the given concentration vector.
pub fn dirichlet<R: Rng + ?Sized>(alphas: &[f64], mode: Reporting, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = match mode {
        Reporting::Mean => alphas.to_vec(),
        Reporting::Draw => alphas.iter().map(|&a| if a > 0.0 { gamma_draw(a, rng) } else { 0.0 }).collect(),
    };
    let total: f64 = raw.iter().sum();
    if total > 0.0 && total.is_finite() {
        raw.into_iter().map(|x| x / total).collect()
    } else {
        let t: f64 = alphas.iter().sum();
        alphas.iter().map(|a| a / t).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn dirmult_predictive_examples() {
        let mut s = DirMultStats::new(4, 1.0).unwrap();
        s.observe(0);
        s.observe(0);
        assert_relative_eq!(s.predictive(0), 0.5);
        let empty = DirMultStats::new(4, 1.0).unwrap();
        for c in 0..4 {
            assert_relative_eq!(empty.predictive(c), 0.25);
        }
        let mut s = DirMultStats::new(5, 0.5).unwrap();
        s.observe(0);
        s.observe(1);
        assert_relative_eq!(s.predictive(2), 0.5 / 4.5, epsilon = 1e-15);
    }

    #[test]
    fn dirmult_joint_matches_beta_ratio() {
        // two identical customers: ((c+η)/(T+Vη)) · ((c+1+η)/(T+1+Vη))
        let mut s = DirMultStats::new(6, 0.7).unwrap();
        for c in [1, 1, 3, 4, 1] {
            s.observe(c);
        }
        let (c, t, v, eta) = (3.0, 5.0, 6.0, 0.7);
        let expect = ((c + eta) / (t + v * eta)) * ((c + 1.0 + eta) / (t + 1.0 + v * eta));
        assert_relative_eq!(s.ln_joint_predictive(&[1, 1]).exp(), expect, max_relative = 1e-12);
        // sequential (trait default) and closed form agree on a mixed batch
        let batch = [0, 1, 1, 5, 0, 2, 1];
        let mut seq = s.clone();
        let mut acc = 0.0;
        for &x in &batch {
            acc += seq.ln_predictive(x);
            seq.observe(x);
        }
        assert_relative_eq!(s.ln_joint_predictive(&batch), acc, max_relative = 1e-12);
    }

    #[test]
    fn t_density_of_default_prior() {
        let s = NigStats::new(NigPrior::new(0.0, 1.0, 1.0, 1.0).unwrap());
        assert_relative_eq!(s.ln_predictive(0.0).exp(), 0.25, max_relative = 1e-12);
        for d in [0.3, 1.0, 7.5] {
            assert_relative_eq!(s.ln_predictive(d), s.ln_predictive(-d), max_relative = 1e-14);
        }
    }

    #[test]
    fn t_density_integrates_to_one() {
        // Simpson on a wide window plus analytic-free tail check
        let mut s = NigStats::new(NigPrior::new(2.0, 0.5, 3.0, 2.0).unwrap());
        for x in [1.0, 2.5, 3.1] {
            s.observe(x);
        }
        let (lo, hi, n) = (-400.0, 400.0, 400_000usize);
        let h = (hi - lo) / n as f64;
        let f = |x: f64| s.ln_predictive(x).exp();
        let mut acc = f(lo) + f(hi);
        for i in 1..n {
            let x = lo + i as f64 * h;
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        assert!((acc * h / 3.0 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn predictive_peaks_at_data() {
        let mut s = NigStats::new(NigPrior::new(0.0, 1.0, 1.0, 1.0).unwrap());
        for _ in 0..4 {
            s.observe(1.0);
        }
        // grid search oracle
        let best = (0..=2000)
            .map(|i| -1.0 + i as f64 * 0.002)
            .max_by(|a, b| s.ln_predictive(*a).total_cmp(&s.ln_predictive(*b)))
            .unwrap();
        // pulled slightly towards mu0 = 0 by kappa0 = 1
        assert!((best - 0.8).abs() < 0.01, "argmax {best}");
        assert!((best - 1.0).abs() < 0.25);
    }

    #[test]
    fn nig_joint_matches_sequential() {
        let mut s = NigStats::new(NigPrior::new(1.0, 2.0, 1.5, 0.7).unwrap());
        s.observe(0.3);
        let batch = [0.1, 2.0, -1.0, 0.4];
        let mut seq = s.clone();
        let mut acc = 0.0;
        for &x in &batch {
            acc += seq.ln_predictive(x);
            seq.observe(x);
        }
        assert_relative_eq!(s.ln_joint_predictive(&batch), acc, max_relative = 1e-9);
    }

    #[test]
    fn dirichlet_mean_by_monte_carlo() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let n = 100_000;
        let mut acc = [0.0; 3];
        for _ in 0..n {
            let w = dirichlet(&[6.0, 2.0, 1.0], Reporting::Draw, &mut rng);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for i in 0..3 {
                acc[i] += w[i] / n as f64;
            }
        }
        for (a, e) in acc.iter().zip([6.0 / 9.0, 2.0 / 9.0, 1.0 / 9.0]) {
            assert!((a - e).abs() < 0.01 * e.max(0.1), "{a} vs {e}");
        }
        assert_eq!(dirichlet(&[6.0, 2.0, 1.0], Reporting::Mean, &mut rng), vec![6.0 / 9.0, 2.0 / 9.0, 1.0 / 9.0]);
    }

    #[test]
    fn sparse_params_are_normalized() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let mut s = DirMultStats::new(1000, 0.5).unwrap();
        for c in [3, 3, 9, 500] {
            s.observe(c);
        }
        for mode in [Reporting::Mean, Reporting::Draw] {
            let p = s.report(mode, &mut rng);
            assert!((p.total_mass() - 1.0).abs() < 1e-12);
            assert!((p.dense().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert_relative_eq!(s.mean_params().prob(3), s.predictive(3));
        assert_relative_eq!(s.mean_params().prob(4), s.predictive(4));
    }

    proptest! {
        #[test]
        fn dirmult_predictive_sums_to_one(cells in prop::collection::vec(0u32..12, 0..40), eta in 0.01f64..5.0) {
            let mut s = DirMultStats::new(12, eta).unwrap();
            for &c in &cells { s.observe(c); }
            let total: f64 = (0..12).map(|c| s.predictive(c)).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }

        #[test]
        fn add_remove_restores_prior(xs in prop::collection::vec(-1e4f64..1e4, 1..30), cells in prop::collection::vec(0u32..9, 1..30)) {
            let prior = NigStats::new(NigPrior::new(0.0, 1.0, 1.0, 1.0).unwrap());
            let mut s = prior.clone();
            for &x in &xs { s.observe(x); }
            for &x in xs.iter().rev() { s.forget(x); }
            prop_assert_eq!(&s, &prior);
            let d0 = DirMultStats::new(9, 0.5).unwrap();
            let mut d = d0.clone();
            for &c in &cells { d.observe(c); }
            for &c in &cells { d.forget(c); }
            prop_assert_eq!(d, d0);
        }

        #[test]
        fn fixed_point_sums_are_order_independent(mut xs in prop::collection::vec(-1e5f64..1e5, 1..30)) {
            let prior = NigPrior::new(0.0, 1.0, 1.0, 1.0).unwrap();
            let mut a = NigStats::new(prior);
            for &x in &xs { a.observe(x); }
            xs.reverse();
            let mut b = NigStats::new(prior);
            for &x in &xs { b.observe(x); }
            prop_assert_eq!(&a, &b);
            let exact: f64 = xs.iter().sum();
            prop_assert!((a.sum() - exact).abs() < 1e-6);
        }
    }
}
