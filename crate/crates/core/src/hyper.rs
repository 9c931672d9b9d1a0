//! Concentration parameters and their auxiliary-variable resampling.

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest concentration a resampling step may return.
const MIN_CONCENTRATION: f64 = 1e-300;

/// A DP concentration with a `Gamma(shape, rate)` prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Concentration {
    pub value: f64,
    pub shape: f64,
    pub rate: f64,
}

impl Concentration {
    pub fn new(value: f64, shape: f64, rate: f64) -> Result<Self> {
        let c = Self { value, shape, rate };
        c.validate()?;
        Ok(c)
    }

    pub fn fixed(value: f64) -> Self {
        Self { value, shape: 1.0, rate: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("value", self.value), ("shape", self.shape), ("rate", self.rate)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid_config(format!("concentration {name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    fn prior_draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        gamma_rate(self.shape, self.rate, rng)
    }

    /// Top-level concentration given `dishes` components over `tables` draws.
    pub fn resample_top<R: Rng + ?Sized>(&mut self, dishes: usize, tables: usize, rng: &mut R) {
        if tables == 0 {
            self.value = self.prior_draw(rng);
            return;
        }
        let (a, b) = (self.shape, self.rate);
        let k = dishes as f64;
        let m = tables as f64;
        let eta = Beta::new(self.value + 1.0, m).expect("positive beta parameters").sample(rng);
        let rate = b - eta.max(f64::MIN_POSITIVE).ln();
        let odds = (a + k - 1.0) / (m * rate);
        let pi = odds / (1.0 + odds);
        let shape = if rng.random::<f64>() < pi { a + k } else { a + k - 1.0 };
        self.value = gamma_rate(shape, rate, rng);
    }

    /// Group-level concentration shared by restaurants with
    /// `(customers, tables)` counts.
    pub fn resample_groups<R: Rng + ?Sized>(&mut self, groups: &[(usize, usize)], rng: &mut R) {
        let live: Vec<_> = groups.iter().filter(|(n, _)| *n > 0).collect();
        if live.is_empty() {
            self.value = self.prior_draw(rng);
            return;
        }
        let alpha = self.value;
        let mut sum_ln_w = 0.0;
        let mut sum_s = 0.0;
        let mut tables = 0usize;
        for &&(n, m) in &live {
            let nf = n as f64;
            let w = Beta::new(alpha + 1.0, nf).expect("positive beta parameters").sample(rng);
            sum_ln_w += w.max(f64::MIN_POSITIVE).ln();
            if rng.random::<f64>() < nf / (nf + alpha) {
                sum_s += 1.0;
            }
            tables += m;
        }
        let shape = self.shape + tables as f64 - sum_s;
        self.value = gamma_rate(shape, self.rate - sum_ln_w, rng);
    }
}

fn gamma_rate<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    Gamma::new(shape, 1.0 / rate).expect("positive gamma parameters").sample(rng).max(MIN_CONCENTRATION)
}

/// All six concentrations of the coupled model plus the subsample size used
/// when scoring a whole table's linked time/speed customers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub gamma_s: Concentration,
    pub alpha_s: Concentration,
    pub gamma_t: Concentration,
    pub alpha_t: Concentration,
    pub gamma_e: Concentration,
    pub alpha_e: Concentration,
    pub customer_selection: usize,
}

pub const DEFAULT_CONCENTRATION: f64 = 0.1;
pub const DEFAULT_CUSTOMER_SELECTION: usize = 1000;

impl Default for HyperParams {
    fn default() -> Self {
        Self::with_prior(1.0, 1.0)
    }
}

impl HyperParams {
    /// Every concentration starts at 0.1 under a `Gamma(shape, rate)` prior.
    pub fn with_prior(shape: f64, rate: f64) -> Self {
        let c = Concentration { value: DEFAULT_CONCENTRATION, shape, rate };
        Self {
            gamma_s: c,
            alpha_s: c,
            gamma_t: c,
            alpha_t: c,
            gamma_e: c,
            alpha_e: c,
            customer_selection: DEFAULT_CUSTOMER_SELECTION,
        }
    }

    pub fn all(&self) -> [Concentration; 6] {
        [self.gamma_s, self.alpha_s, self.gamma_t, self.alpha_t, self.gamma_e, self.alpha_e]
    }

    pub fn validate(&self) -> Result<()> {
        for c in self.all() {
            c.validate()?;
        }
        if self.customer_selection == 0 {
            return Err(Error::invalid_config("customer_selection must be >= 1"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn defaults() {
        let h = HyperParams::default();
        assert!(h.all().iter().all(|c| c.value == 0.1));
        assert_eq!(h.customer_selection, 1000);
        h.validate().unwrap();
    }

    #[test]
    fn prior_draw_without_data() {
        // Gamma(2, rate 4): mean 0.5, variance 0.125
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut c = Concentration::new(0.1, 2.0, 4.0).unwrap();
        let n = 50_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| {
                c.resample_top(0, 0, &mut rng);
                c.value
            })
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "{mean}");
        assert!((var - 0.125).abs() < 0.01, "{var}");
        let mut g = Concentration::new(0.1, 2.0, 4.0).unwrap();
        let mean_g = (0..n)
            .map(|_| {
                g.resample_groups(&[(0, 0)], &mut rng);
                g.value
            })
            .sum::<f64>()
            / n as f64;
        assert!((mean_g - 0.5).abs() < 0.01);
    }

    fn chain_mean(mut f: impl FnMut(&mut Concentration, &mut ChaCha8Rng)) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut c = Concentration::new(0.1, 1.0, 1.0).unwrap();
        for _ in 0..200 {
            f(&mut c, &mut rng);
        }
        let n = 20_000;
        (0..n).map(|_| {
            f(&mut c, &mut rng);
            c.value
        }).sum::<f64>() / n as f64
    }

    #[test]
    fn more_dishes_per_table_raise_concentration() {
        let few = chain_mean(|c, r| c.resample_top(2, 50, r));
        let many = chain_mean(|c, r| c.resample_top(20, 50, r));
        assert!(many > 3.0 * few, "{few} vs {many}");
        let g_few = chain_mean(|c, r| c.resample_groups(&[(100, 2), (100, 2)], r));
        let g_many = chain_mean(|c, r| c.resample_groups(&[(100, 20), (100, 20)], r));
        assert!(g_many > 3.0 * g_few, "{g_few} vs {g_many}");
    }

    #[test]
    fn values_stay_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut c = Concentration::new(1e-300, 1e-3, 1e3).unwrap();
        for _ in 0..1000 {
            c.resample_top(1, 1000, &mut rng);
            assert!(c.value > 0.0);
            c.resample_groups(&[(1000, 1)], &mut rng);
            assert!(c.value > 0.0);
        }
    }
}
