//! End-to-end fitting: space-only burn-in, coupled sweeps, extraction.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::codebook::Codebook;
use crate::crfl::ThdpSeating;
use crate::error::{Error, Result};
use crate::hyper::HyperParams;
use crate::posterior::{Flow, ThdpPosterior};
use crate::stats::{dirichlet, DirMultStats, NigPrior, NigStats, Reporting};
use crate::trajectory::Observation;

pub const DEFAULT_BURN_IN: usize = 5000;
pub const DEFAULT_MAX_ITERS: usize = 2000;
pub const DEFAULT_STABILITY_WINDOW: usize = 200;
pub const DEFAULT_ETA: f64 = 0.5;
pub const DEFAULT_PRUNE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub burn_in: usize,
    pub max_iters: usize,
    /// Stop once the space dish count is unchanged and the log-likelihood
    /// spread stays within `stability_tol` (relative) over this many sweeps.
    pub stability_window: Option<usize>,
    pub stability_tol: f64,
    pub hypers: HyperParams,
    pub resample_hypers: bool,
    pub eta: f64,
    /// Defaults to a prior fitted to the data.
    pub time_prior: Option<NigPrior>,
    pub speed_prior: Option<NigPrior>,
    pub reporting: Reporting,
    pub prune: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            burn_in: DEFAULT_BURN_IN,
            max_iters: DEFAULT_MAX_ITERS,
            stability_window: Some(DEFAULT_STABILITY_WINDOW),
            stability_tol: 1e-3,
            hypers: HyperParams::default(),
            resample_hypers: true,
            eta: DEFAULT_ETA,
            time_prior: None,
            speed_prior: None,
            reporting: Reporting::Draw,
            prune: DEFAULT_PRUNE,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        self.hypers.validate()?;
        if !(self.eta > 0.0) {
            return Err(Error::invalid_config("eta must be > 0"));
        }
        if !(0.0..1.0).contains(&self.prune) {
            return Err(Error::invalid_config("prune threshold must be in [0, 1)"));
        }
        if self.stability_window == Some(0) {
            return Err(Error::invalid_config("stability window must be >= 1"));
        }
        for p in [self.time_prior, self.speed_prior].into_iter().flatten() {
            p.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub burn_in_sweeps: usize,
    pub sweeps: usize,
    pub stopped_early: bool,
    pub ln_likelihood: Vec<f64>,
    pub space_dishes: usize,
    pub time_dishes: usize,
    pub speed_dishes: usize,
    pub hypers: HyperParams,
}

#[derive(Debug, Clone)]
pub struct FitOutput {
    pub posterior: ThdpPosterior,
    pub diagnostics: FitDiagnostics,
    pub seating: ThdpSeating,
}

/// Builds the seating with priors resolved against the data.
pub fn prepare_seating(observations: &[Observation], codebook: &Codebook, cfg: &FitConfig) -> Result<ThdpSeating> {
    if observations.is_empty() {
        return Err(Error::invalid_input("no observations to fit"));
    }
    cfg.validate()?;
    let times: Vec<f64> = observations.iter().map(|o| o.timestamp).collect();
    let speeds: Vec<f64> = observations.iter().map(|o| o.speed).collect();
    let time_prior = match cfg.time_prior {
        Some(p) => p,
        None => NigPrior::from_data(&times)?,
    };
    let speed_prior = match cfg.speed_prior {
        Some(p) => p,
        None => NigPrior::from_data(&speeds)?,
    };
    ThdpSeating::new(
        observations,
        DirMultStats::new(codebook.vocab_size(), cfg.eta)?,
        NigStats::new(time_prior),
        NigStats::new(speed_prior),
    )
}

fn stable(window: &[f64], tol: f64) -> bool {
    let lo = window.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = window.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scale = window.iter().map(|x| x.abs()).sum::<f64>() / window.len() as f64;
    hi - lo <= tol * scale.max(1e-300)
}

/// Space-only burn-in followed by coupled sweeps.
pub fn fit<R: Rng + ?Sized>(
    observations: &[Observation],
    codebook: &Codebook,
    cfg: &FitConfig,
    rng: &mut R,
) -> Result<FitOutput> {
    let mut seating = prepare_seating(observations, codebook, cfg)?;
    let mut hypers = cfg.hypers;
    seating.init_space();
    for _ in 0..cfg.burn_in {
        seating.space_sweep(&mut hypers, cfg.resample_hypers, rng)?;
    }
    seating.init_dependents()?;
    let mut trace = Vec::new();
    let mut dish_counts = Vec::new();
    let mut stopped_early = false;
    for _ in 0..cfg.max_iters {
        seating.sweep(&mut hypers, cfg.resample_hypers, rng)?;
        trace.push(seating.ln_likelihood());
        dish_counts.push(seating.space.n_dishes());
        if let Some(w) = cfg.stability_window {
            if trace.len() >= w {
                let counts = &dish_counts[dish_counts.len() - w..];
                if counts.iter().all(|&c| c == counts[0]) && stable(&trace[trace.len() - w..], cfg.stability_tol) {
                    stopped_early = trace.len() < cfg.max_iters;
                    break;
                }
            }
        }
    }
    if cfg!(debug_assertions) {
        seating.check_consistency()?;
    }
    let posterior = extract_posterior(&seating, codebook, &hypers, cfg.reporting, cfg.prune, rng)?;
    let diagnostics = FitDiagnostics {
        burn_in_sweeps: cfg.burn_in,
        sweeps: trace.len(),
        stopped_early,
        ln_likelihood: trace,
        space_dishes: seating.space.n_dishes(),
        time_dishes: seating.time.n_dishes(),
        speed_dishes: seating.speed.n_dishes(),
        hypers,
    };
    Ok(FitOutput { posterior, diagnostics, seating })
}

/// The space HDP alone: burn-in sweeps only, with a single shared time and
/// speed mode so that every flow carries the same profile.
pub fn fit_space_only<R: Rng + ?Sized>(
    observations: &[Observation],
    codebook: &Codebook,
    cfg: &FitConfig,
    rng: &mut R,
) -> Result<FitOutput> {
    let cfg = FitConfig { max_iters: 0, ..cfg.clone() };
    fit(observations, codebook, &cfg, rng)
}

/// Reads weights and parameters off a coupled seating.
///
/// Flow weights come from `Dirichlet(m_1, …, m_K, γ_s)`, global time and
/// speed weights likewise from their table counts, and each flow's profile
/// from its restaurant's customer counts smoothed towards the global weights.
pub fn extract_posterior<R: Rng + ?Sized>(
    seating: &ThdpSeating,
    codebook: &Codebook,
    hypers: &HyperParams,
    mode: Reporting,
    prune: f64,
    rng: &mut R,
) -> Result<ThdpPosterior> {
    if !seating.is_coupled() {
        return Err(Error::consistency("extracting a posterior before dependents were initialized"));
    }
    let space = seating.space.extract_posterior(hypers.gamma_s.value, mode, rng);
    let time = seating.time.extract_posterior(hypers.gamma_t.value, mode, rng);
    let speed = seating.speed.extract_posterior(hypers.gamma_e.value, mode, rng);

    let profile = |s: &crate::crf::HdpSeating<NigStats>,
                   ids: &[usize],
                   global: &[f64],
                   alpha: f64,
                   k: usize,
                   rng: &mut R| {
        let counts = s.restaurant_dish_customers(k);
        let alphas: Vec<f64> = ids.iter().zip(global).map(|(&l, &w)| counts[l] as f64 + alpha * w).collect();
        dirichlet(&alphas, mode, rng)
    };

    let mut flows = Vec::with_capacity(space.dish_ids.len());
    for (i, &k) in space.dish_ids.iter().enumerate() {
        let time_weights = profile(&seating.time, &time.dish_ids, &time.weights, hypers.alpha_t.value, k, rng);
        let speed_weights = profile(&seating.speed, &speed.dish_ids, &speed.weights, hypers.alpha_e.value, k, rng);
        flows.push(Flow { weight: space.weights[i], space: space.params[i].clone(), time_weights, speed_weights });
    }
    let (flows, other_weight) = prune_flows(flows, prune);
    let posterior = ThdpPosterior {
        codebook: codebook.clone(),
        flows,
        other_weight,
        unseen_weight: space.unseen_weight,
        time_modes: time.params,
        time_mode_weights: time.weights,
        speed_modes: speed.params,
        speed_mode_weights: speed.weights,
    };
    posterior.validate().map_err(|e| Error::Numerical(format!("extracted posterior is invalid: {e}")))?;
    Ok(posterior)
}

/// Drops flows below `threshold`, keeping at least the heaviest, and
/// renormalizes the rest. Returns the dropped mass.
pub fn prune_flows(mut flows: Vec<Flow>, threshold: f64) -> (Vec<Flow>, f64) {
    let heaviest = flows.iter().map(|f| f.weight).fold(f64::NEG_INFINITY, f64::max);
    let mut other = 0.0;
    flows.retain(|f| {
        let keep = f.weight >= threshold || f.weight == heaviest;
        if !keep {
            other += f.weight;
        }
        keep
    });
    let kept: f64 = flows.iter().map(|f| f.weight).sum();
    for f in &mut flows {
        f.weight /= kept;
    }
    (flows, other)
}
