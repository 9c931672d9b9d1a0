//! Simulation guidance: per-flow endpoint regions, entry time and speed
//! mixtures and learned dynamics, sampled into agent specifications.

pub mod gmm;
pub mod lds;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::posterior::ThdpPosterior;
use crate::stats::Gaussian;
use crate::trajectory::Trajectory;
use crate::util::{quantile, sample_probs};

pub use gmm::{fit_endpoint_gmm, Gmm};
pub use lds::{fit_flow_dynamics, sample_guided_trajectory, FlowDynamics, LdsConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    /// Flows with fewer classified trajectories get no dynamics.
    pub min_trajectories: usize,
    pub max_components: usize,
    /// Frame interval for dynamics fitting; the median interval of the data
    /// when unset.
    pub frame_interval: Option<f64>,
    pub lds: LdsConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self { min_trajectories: 3, max_components: 5, frame_interval: None, lds: LdsConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowGuidance {
    /// Index of the flow in the source posterior.
    pub flow: usize,
    pub weight: f64,
    pub trajectories: usize,
    pub start: Gmm,
    pub destination: Gmm,
    /// Weights over the scenario's time modes.
    pub time_weights: Vec<f64>,
    /// Weights over the scenario's speed modes.
    pub speed_weights: Vec<f64>,
    pub dynamics: Option<FlowDynamics>,
    /// No dynamics: targets are straight lines.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceScenario {
    pub flows: Vec<FlowGuidance>,
    pub time_modes: Vec<Gaussian>,
    pub speed_modes: Vec<Gaussian>,
    /// Entry times are kept inside this interval.
    pub horizon: (f64, f64),
    /// Seconds between consecutive target points.
    pub frame_interval: f64,
    /// Posterior flows left out for lack of classified trajectories.
    pub skipped_flows: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub flow: usize,
    pub start: (f64, f64),
    pub destination: (f64, f64),
    pub entry_time: f64,
    pub desired_speed: f64,
    pub target: Option<Vec<(f64, f64)>>,
}

fn timed_points(t: &Trajectory) -> Vec<(f64, f64, f64)> {
    t.observations.iter().map(|o| (o.timestamp, o.position.0, o.position.1)).collect()
}

/// Median gap between consecutive observations over all trajectories.
pub fn median_frame_interval(trajectories: &[Trajectory]) -> Option<f64> {
    let gaps: Vec<f64> = trajectories
        .iter()
        .flat_map(|t| t.observations.windows(2).map(|w| w[1].timestamp - w[0].timestamp))
        .filter(|g| *g > 0.0)
        .collect();
    (!gaps.is_empty()).then(|| quantile(&gaps, 0.5))
}

/// `assignments[i]` is the flow of `trajectories[i]`.
pub fn build_scenario(
    post: &ThdpPosterior,
    trajectories: &[Trajectory],
    assignments: &[usize],
    cfg: &ScenarioConfig,
) -> Result<GuidanceScenario> {
    if post.flows.is_empty() {
        return Err(Error::invalid_input("posterior has no flows"));
    }
    if trajectories.len() != assignments.len() {
        return Err(Error::invalid_input(format!(
            "{} trajectories but {} assignments",
            trajectories.len(),
            assignments.len()
        )));
    }
    if let Some(&k) = assignments.iter().find(|&&k| k >= post.n_flows()) {
        return Err(Error::invalid_input(format!("assignment to missing flow {k}")));
    }
    let frame_interval = match cfg.frame_interval {
        Some(dt) if dt > 0.0 => dt,
        Some(dt) => return Err(Error::invalid_config(format!("frame interval must be positive, got {dt}"))),
        None => median_frame_interval(trajectories).unwrap_or(1.0),
    };
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for t in trajectories {
        for o in &t.observations {
            lo = lo.min(o.timestamp);
            hi = hi.max(o.timestamp);
        }
    }
    if !(lo <= hi) {
        return Err(Error::invalid_input("no observations to build a scenario from"));
    }

    let mut flows = Vec::new();
    let mut skipped = Vec::new();
    for (k, f) in post.flows.iter().enumerate() {
        let members: Vec<&Trajectory> =
            trajectories.iter().zip(assignments).filter(|(t, &a)| a == k && !t.is_empty()).map(|(t, _)| t).collect();
        if members.is_empty() {
            skipped.push(k);
            continue;
        }
        let starts: Vec<(f64, f64)> = members.iter().filter_map(|t| t.first_position()).collect();
        let ends: Vec<(f64, f64)> = members.iter().filter_map(|t| t.last_position()).collect();
        let region = |pts: &[(f64, f64)]| if pts.len() >= 2 { fit_endpoint_gmm(pts, cfg.max_components) } else { Ok(Gmm::point(pts[0])) };
        let dynamics = if members.len() >= cfg.min_trajectories {
            let tracks: Vec<Vec<(f64, f64)>> = members.iter().map(|t| lds::resample_track(&timed_points(t), frame_interval)).collect();
            if tracks.iter().any(|t| t.len() >= 3) {
                Some(fit_flow_dynamics(&tracks, &cfg.lds)?.dynamics)
            } else {
                None
            }
        } else {
            None
        };
        flows.push(FlowGuidance {
            flow: k,
            weight: f.weight,
            trajectories: members.len(),
            start: region(&starts)?,
            destination: region(&ends)?,
            time_weights: f.time_weights.clone(),
            speed_weights: f.speed_weights.clone(),
            fallback: dynamics.is_none(),
            dynamics,
        });
    }
    let total: f64 = flows.iter().map(|f| f.weight).sum();
    if flows.is_empty() || !(total > 0.0) {
        return Err(Error::invalid_input("no flow has classified trajectories"));
    }
    for f in &mut flows {
        f.weight /= total;
    }
    Ok(GuidanceScenario {
        flows,
        time_modes: post.time_modes.clone(),
        speed_modes: post.speed_modes.clone(),
        horizon: (lo, hi),
        frame_interval,
        skipped_flows: skipped,
    })
}

const MAX_REDRAWS: usize = 1000;
/// Longest target trajectory handed to a simulator.
pub const MAX_TARGET_POINTS: usize = 10_000;

fn draw_mixture<R: Rng + ?Sized>(weights: &[f64], modes: &[Gaussian], rng: &mut R) -> f64 {
    let g = modes[sample_probs(weights, rng)];
    g.mean + g.std_dev() * rng.sample::<f64, _>(rand_distr::StandardNormal)
}

impl GuidanceScenario {
    fn entry_time<R: Rng + ?Sized>(&self, f: &FlowGuidance, rng: &mut R) -> f64 {
        let (lo, hi) = self.horizon;
        for _ in 0..MAX_REDRAWS {
            let t = draw_mixture(&f.time_weights, &self.time_modes, rng);
            if (lo..=hi).contains(&t) {
                return t;
            }
        }
        draw_mixture(&f.time_weights, &self.time_modes, rng).clamp(lo, hi)
    }

    fn desired_speed<R: Rng + ?Sized>(&self, f: &FlowGuidance, rng: &mut R) -> f64 {
        for _ in 0..MAX_REDRAWS {
            let v = draw_mixture(&f.speed_weights, &self.speed_modes, rng);
            if v > 0.0 {
                return v;
            }
        }
        let mean: f64 = f.speed_weights.iter().zip(&self.speed_modes).map(|(w, g)| w * g.mean).sum();
        mean.abs().max(f64::MIN_POSITIVE)
    }

    /// Agent `flow` fields are posterior flow indices.
    pub fn sample_agents<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<AgentSpec>> {
        let weights: Vec<f64> = self.flows.iter().map(|f| f.weight).collect();
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let k = sample_probs(&weights, rng);
            let f = &self.flows[k];
            let start = f.start.sample(rng);
            let destination = f.destination.sample(rng);
            let entry_time = self.entry_time(f, rng);
            let desired_speed = self.desired_speed(f, rng);
            let target = match &f.dynamics {
                Some(d) => {
                    let dist = ((destination.0 - start.0).powi(2) + (destination.1 - start.1).powi(2)).sqrt();
                    let len = ((dist / (desired_speed * self.frame_interval)).round() as usize + 1).clamp(2, MAX_TARGET_POINTS);
                    Some(sample_guided_trajectory(d, start, destination, len, rng)?)
                }
                None => None,
            };
            out.push(AgentSpec { flow: f.flow, start, destination, entry_time, desired_speed, target });
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::{Bounds, Codebook};
    use crate::posterior::Flow;
    use crate::stats::SparseCategorical;
    use crate::trajectory::Observation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn posterior(weights: &[f64]) -> ThdpPosterior {
        ThdpPosterior {
            codebook: Codebook::new(2, 2, Bounds::new(0.0, 0.0, 20.0, 20.0), 0.0).unwrap(),
            flows: weights
                .iter()
                .enumerate()
                .map(|(k, &w)| Flow {
                    weight: w,
                    space: SparseCategorical { vocab_size: 20, cells: vec![(k as u32, 1.0)], background: 0.0 },
                    time_weights: vec![1.0],
                    speed_weights: vec![1.0],
                })
                .collect(),
            other_weight: 0.0,
            unseen_weight: 0.0,
            time_modes: vec![Gaussian::new(50.0, 100.0)],
            time_mode_weights: vec![1.0],
            speed_modes: vec![Gaussian::new(1.0, 0.04)],
            speed_mode_weights: vec![1.0],
        }
    }

    fn track(id: u64, from: (f64, f64), to: (f64, f64), t0: f64, rng: &mut ChaCha8Rng) -> Trajectory {
        let n = 12;
        let observations = (0..n)
            .map(|i| {
                let w = i as f64 / (n - 1) as f64;
                let jitter = if i == 0 || i == n - 1 { 0.0 } else { 0.05 * rng.random_range(-1.0..1.0) };
                Observation {
                    traj_id: id,
                    group_id: 0,
                    cell: 0,
                    timestamp: t0 + i as f64,
                    speed: 1.0,
                    position: (from.0 + w * (to.0 - from.0) + jitter, from.1 + w * (to.1 - from.1) + jitter),
                }
            })
            .collect();
        Trajectory { traj_id: id, observations }
    }

    fn data(counts: &[usize]) -> (Vec<Trajectory>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ends = [((0.0, 5.0), (15.0, 5.0)), ((5.0, 0.0), (5.0, 15.0)), ((15.0, 15.0), (0.0, 15.0))];
        let mut trajs = Vec::new();
        let mut labels = Vec::new();
        for (k, &c) in counts.iter().enumerate() {
            for _ in 0..c {
                let (a, b) = ends[k];
                let a = (a.0 + rng.random_range(-0.5..0.5), a.1 + rng.random_range(-0.5..0.5));
                let b = (b.0 + rng.random_range(-0.5..0.5), b.1 + rng.random_range(-0.5..0.5));
                let t0 = rng.random_range(0.0..80.0);
                trajs.push(track(trajs.len() as u64, a, b, t0, &mut rng));
                labels.push(k);
            }
        }
        (trajs, labels)
    }

    #[test]
    fn three_flow_scenario() {
        let (trajs, labels) = data(&[10, 20, 10]);
        let post = posterior(&[0.25, 0.5, 0.25]);
        let s = build_scenario(&post, &trajs, &labels, &ScenarioConfig::default()).unwrap();
        assert_eq!(s.flows.len(), 3);
        for (f, want) in s.flows.iter().zip([0.25, 0.5, 0.25]) {
            assert!((f.weight - want).abs() < 0.1);
            assert!(!f.fallback && f.dynamics.is_some());
        }
        assert_eq!(s.frame_interval, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let agents = s.sample_agents(200, &mut rng).unwrap();
        for a in &agents {
            assert!(a.desired_speed > 0.0);
            assert!(a.entry_time >= s.horizon.0 && a.entry_time <= s.horizon.1);
            let target = a.target.as_ref().unwrap();
            assert_eq!(target[0], a.start);
            assert_eq!(*target.last().unwrap(), a.destination);
        }
        let json = serde_json::to_string(&s).unwrap();
        let back: GuidanceScenario = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
        assert_eq!(serde_json::to_string(&back).unwrap(), json);
    }

    #[test]
    fn single_flow_and_fallback() {
        let (trajs, labels) = data(&[5]);
        let s = build_scenario(&posterior(&[1.0]), &trajs, &labels, &ScenarioConfig::default()).unwrap();
        assert_eq!(s.flows.len(), 1);
        assert_eq!(s.flows[0].weight, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(s.sample_agents(50, &mut rng).unwrap().iter().all(|a| a.flow == 0));

        let (trajs, labels) = data(&[4, 1]);
        let s = build_scenario(&posterior(&[0.6, 0.3, 0.1]), &trajs, &labels, &ScenarioConfig::default()).unwrap();
        assert_eq!(s.skipped_flows, vec![2]);
        assert!(s.flows[1].fallback && s.flows[1].dynamics.is_none());
        assert_eq!(s.flows[1].start.n_components(), 1);
        assert!((s.flows[0].weight - 0.6 / 0.9).abs() < 1e-12);
        assert!(s.sample_agents(20, &mut rng).unwrap().iter().filter(|a| a.flow == 1).all(|a| a.target.is_none()));
    }

    #[test]
    fn agent_counts_follow_weights() {
        let (trajs, labels) = data(&[2, 2]);
        let cfg = ScenarioConfig { min_trajectories: 10, ..Default::default() };
        let s = build_scenario(&posterior(&[0.7, 0.3]), &trajs, &labels, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 10_000;
        let agents = s.sample_agents(n, &mut rng).unwrap();
        let first = agents.iter().filter(|a| a.flow == 0).count() as f64;
        let sd = (n as f64 * 0.7 * 0.3).sqrt();
        assert!((first - 0.7 * n as f64).abs() <= 3.0 * sd, "{first}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let (trajs, labels) = data(&[3]);
        let mut post = posterior(&[1.0]);
        assert!(build_scenario(&post, &trajs, &labels[..2], &ScenarioConfig::default()).is_err());
        assert!(build_scenario(&post, &trajs, &vec![4; 3], &ScenarioConfig::default()).is_err());
        post.flows.clear();
        assert!(build_scenario(&post, &trajs, &labels, &ScenarioConfig::default()).is_err());
    }
}
