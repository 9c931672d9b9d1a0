//! Classification, conditional prominence, profiles and anomaly scoring.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::posterior::{mixture_cdf, mixture_ln_pdf, Dim, ThdpPosterior};
use crate::trajectory::{Observation, TrajId, Trajectory};
use crate::util::{normalize_ln, quantile};

/// Per-flow log-likelihood of a trajectory, split by dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowLikelihoods {
    /// `ln β_k + Σ_d dims[k][d]`.
    pub total: Vec<f64>,
    /// `[space, time, speed]` sums over observations, without `ln β_k`.
    pub dims: Vec<[f64; 3]>,
}

fn check_observation(post: &ThdpPosterior, o: &Observation) -> Result<()> {
    if o.cell as usize >= post.codebook.vocab_size() {
        return Err(Error::invalid_input(format!(
            "trajectory {}: cell {} is outside the model's codebook ({} cells)",
            o.traj_id,
            o.cell,
            post.codebook.vocab_size()
        )));
    }
    Ok(())
}

pub fn trajectory_log_likelihood(post: &ThdpPosterior, traj: &Trajectory) -> Result<FlowLikelihoods> {
    if traj.is_empty() {
        return Err(Error::invalid_input(format!("trajectory {} is empty", traj.traj_id)));
    }
    for o in &traj.observations {
        check_observation(post, o)?;
    }
    let mut total = Vec::with_capacity(post.n_flows());
    let mut dims = Vec::with_capacity(post.n_flows());
    for k in 0..post.n_flows() {
        let mut d = [0.0; 3];
        for o in &traj.observations {
            d[0] += post.ln_space(k, o.cell);
            d[1] += post.ln_time(k, o.timestamp);
            d[2] += post.ln_speed(k, o.speed);
        }
        total.push(post.flows[k].weight.ln() + d.iter().sum::<f64>());
        dims.push(d);
    }
    Ok(FlowLikelihoods { total, dims })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowAssignment {
    pub traj_id: TrajId,
    pub probabilities: Vec<f64>,
    pub flow: usize,
    /// `[space, time, speed]` log-likelihoods under the assigned flow.
    pub dim_log_likelihoods: [f64; 3],
}

fn argmax(xs: &[f64]) -> usize {
    xs.iter().enumerate().fold(0, |best, (i, &x)| if x > xs[best] { i } else { best })
}

/// Softmax over per-flow log-likelihoods.
pub fn softmax(ll: &[f64]) -> Vec<f64> {
    normalize_ln(ll)
}

pub fn classify(post: &ThdpPosterior, traj: &Trajectory) -> Result<FlowAssignment> {
    let ll = trajectory_log_likelihood(post, traj)?;
    let probabilities = softmax(&ll.total);
    let flow = argmax(&ll.total);
    Ok(FlowAssignment { traj_id: traj.traj_id, probabilities, flow, dim_log_likelihoods: ll.dims[flow] })
}

/// Most probable flow of each single observation.
pub fn classify_observations(post: &ThdpPosterior, observations: &[Observation]) -> Result<Vec<usize>> {
    observations
        .iter()
        .map(|o| {
            check_observation(post, o)?;
            Ok(argmax(&post.observation_posterior(o.cell, o.timestamp, o.speed)))
        })
        .collect()
}

/// A closed interval along the time or speed axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub dim: Dim,
    pub lo: f64,
    pub hi: f64,
}

/// `β_k · P(value ∈ [lo, hi] | flow k)`, normalized over flows.
pub fn flow_prominence(post: &ThdpPosterior, cond: Condition) -> Result<Vec<f64>> {
    if cond.dim == Dim::Space {
        return Err(Error::invalid_input("prominence conditions on time or speed"));
    }
    if !(cond.hi > cond.lo) {
        return Err(Error::invalid_input("condition interval is empty"));
    }
    let mass: Vec<f64> = (0..post.n_flows())
        .map(|k| {
            let (w, g) = post.profile(k, cond.dim);
            post.flows[k].weight * (mixture_cdf(w, g, cond.hi) - mixture_cdf(w, g, cond.lo)).max(0.0)
        })
        .collect();
    let total: f64 = mass.iter().sum();
    if !(total > 0.0) {
        return Err(Error::invalid_input("no flow has mass inside the condition interval"));
    }
    Ok(mass.into_iter().map(|m| m / total).collect())
}

/// `p(t | k) p(v | k)` on a grid; rows follow `times`, columns `speeds`.
pub fn time_speed_profile(post: &ThdpPosterior, k: usize, times: &[f64], speeds: &[f64]) -> Result<Vec<Vec<f64>>> {
    if times.is_empty() || speeds.is_empty() {
        return Err(Error::invalid_input("empty profile grid"));
    }
    if k >= post.n_flows() {
        return Err(Error::invalid_input(format!("flow {k} does not exist")));
    }
    let (tw, tg) = post.profile(k, Dim::Time);
    let (sw, sg) = post.profile(k, Dim::Speed);
    let pt: Vec<f64> = times.iter().map(|&t| mixture_ln_pdf(tw, tg, t).exp()).collect();
    let ps: Vec<f64> = speeds.iter().map(|&v| mixture_ln_pdf(sw, sg, v).exp()).collect();
    Ok(pt.iter().map(|a| ps.iter().map(|b| a * b).collect()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyReport {
    pub traj_id: TrajId,
    pub flow: usize,
    /// Per-observation log-likelihood under the assigned flow.
    pub score: f64,
    pub total_log_likelihood: f64,
    pub flagged: bool,
    /// `[space, time, speed]`; near a vertex means that dimension is normal.
    pub barycentric: [f64; 3],
    /// The dimension with the smallest coordinate.
    pub driver: Dim,
}

/// Normalizes relative probabilities to simplex coordinates.
pub fn barycentric(relative: [f64; 3]) -> [f64; 3] {
    let s: f64 = relative.iter().sum();
    if !(s > 0.0) {
        return [1.0 / 3.0; 3];
    }
    relative.map(|r| r / s)
}

/// Flags trajectories whose length-normalized log-likelihood lies strictly
/// below the `q`-quantile and attributes every score to the three dimensions.
pub fn anomaly_scores(post: &ThdpPosterior, trajectories: &[Trajectory], q: f64) -> Result<Vec<AnomalyReport>> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::invalid_input(format!("quantile must lie in (0, 1), got {q}")));
    }
    if trajectories.is_empty() {
        return Err(Error::invalid_input("no trajectories to score"));
    }
    let mut per = Vec::with_capacity(trajectories.len());
    for t in trajectories {
        let ll = trajectory_log_likelihood(post, t)?;
        let k = argmax(&ll.total);
        let n = t.len() as f64;
        per.push((k, ll.dims[k].map(|d| d / n), ll.total[k]));
    }
    let scores: Vec<f64> = per.iter().map(|(_, d, _)| d.iter().sum()).collect();
    let cut = quantile(&scores, q);
    let mut best = [f64::NEG_INFINITY; 3];
    for (_, d, _) in &per {
        for i in 0..3 {
            best[i] = best[i].max(d[i]);
        }
    }
    Ok(trajectories
        .iter()
        .zip(per)
        .zip(&scores)
        .map(|((t, (k, d, total)), &score)| {
            let rel = [0, 1, 2].map(|i| (d[i] - best[i]).exp());
            let b = barycentric(rel);
            let driver = Dim::ALL[(0..3).fold(0, |m, i| if b[i] < b[m] { i } else { m })];
            AnomalyReport {
                traj_id: t.traj_id,
                flow: k,
                score,
                total_log_likelihood: total,
                flagged: score < cut,
                barycentric: b,
                driver,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::{Bounds, Codebook};
    use crate::posterior::Flow;
    use crate::stats::{Gaussian, SparseCategorical};
    use proptest::prelude::*;

    fn posterior() -> ThdpPosterior {
        let flow = |w: f64, cells: Vec<(u32, f64)>, tw: Vec<f64>, sw: Vec<f64>| {
            let bg = (1.0 - cells.iter().map(|c| c.1).sum::<f64>()) / (20 - cells.len()) as f64;
            Flow { weight: w, space: SparseCategorical { vocab_size: 20, cells, background: bg }, time_weights: tw, speed_weights: sw }
        };
        ThdpPosterior {
            codebook: Codebook::new(2, 2, Bounds::new(0.0, 0.0, 1.0, 1.0), 0.0).unwrap(),
            flows: vec![
                flow(0.6, vec![(0, 0.5), (1, 0.3)], vec![1.0, 0.0], vec![0.5, 0.5]),
                flow(0.4, vec![(1, 0.2), (7, 0.6)], vec![0.0, 1.0], vec![0.1, 0.9]),
            ],
            other_weight: 0.0,
            unseen_weight: 0.0,
            time_modes: vec![Gaussian::new(10.0, 4.0), Gaussian::new(100.0, 4.0)],
            time_mode_weights: vec![0.5, 0.5],
            speed_modes: vec![Gaussian::new(1.0, 0.25), Gaussian::new(2.0, 1.0)],
            speed_mode_weights: vec![0.5, 0.5],
        }
    }

    fn obs(id: u64, cell: u32, t: f64, v: f64) -> Observation {
        Observation { traj_id: id, group_id: 0, cell, timestamp: t, speed: v, position: (0.0, 0.0) }
    }

    fn traj(id: u64, pts: &[(u32, f64, f64)]) -> Trajectory {
        Trajectory { traj_id: id, observations: pts.iter().map(|&(c, t, v)| obs(id, c, t, v)).collect() }
    }

    fn ln_normal(x: f64, m: f64, var: f64) -> f64 {
        -(x - m).powi(2) / (2.0 * var) - 0.5 * (2.0 * std::f64::consts::PI * var).ln()
    }

    fn normal(x: f64, m: f64, var: f64) -> f64 {
        (-(x - m).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
    }

    #[test]
    fn manual_fold() {
        let post = posterior();
        let pts = [(0, 11.0, 1.2), (1, 9.0, 0.8), (7, 12.5, 1.9)];
        let ll = trajectory_log_likelihood(&post, &traj(1, &pts)).unwrap();
        // flow 0
        let mut want0 = 0.6f64.ln();
        let space0: [f64; 3] = [0.5, 0.3, 0.2 / 18.0];
        for (i, &(_, t, v)) in pts.iter().enumerate() {
            want0 += space0[i].ln() + ln_normal(t, 10.0, 4.0) + (0.5 * normal(v, 1.0, 0.25) + 0.5 * normal(v, 2.0, 1.0)).ln();
        }
        // flow 1
        let mut want1 = 0.4f64.ln();
        let space1: [f64; 3] = [0.2 / 18.0, 0.2, 0.6];
        for (i, &(_, t, v)) in pts.iter().enumerate() {
            want1 += space1[i].ln() + ln_normal(t, 100.0, 4.0) + (0.1 * normal(v, 1.0, 0.25) + 0.9 * normal(v, 2.0, 1.0)).ln();
        }
        assert!((ll.total[0] - want0).abs() < 1e-9 * want0.abs());
        assert!((ll.total[1] - want1).abs() < 1e-9 * want1.abs());
        let a = classify(&post, &traj(1, &pts)).unwrap();
        assert_eq!(a.flow, 0);
        assert_eq!(a.dim_log_likelihoods, ll.dims[0]);
    }

    #[test]
    fn duplicating_doubles_the_observation_terms() {
        let post = posterior();
        let pts = [(0, 11.0, 1.2), (1, 30.0, 0.8)];
        let once = trajectory_log_likelihood(&post, &traj(1, &pts)).unwrap();
        let twice = trajectory_log_likelihood(&post, &traj(1, &[pts, pts].concat())).unwrap();
        for k in 0..2 {
            let lb = post.flows[k].weight.ln();
            assert!((twice.total[k] - lb - 2.0 * (once.total[k] - lb)).abs() < 1e-9);
        }
    }

    #[test]
    fn codebook_mismatch() {
        assert!(matches!(trajectory_log_likelihood(&posterior(), &traj(1, &[(20, 1.0, 1.0)])), Err(Error::InvalidInput(_))));
        assert!(trajectory_log_likelihood(&posterior(), &traj(1, &[])).is_err());
    }

    #[test]
    fn softmax_values() {
        assert_eq!(softmax(&[-3.0, -3.0]), vec![0.5, 0.5]);
        let p = softmax(&[9f64.ln() - 1000.0, -1000.0]);
        assert!((p[0] - 0.9).abs() < 1e-12 && (p[1] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn prominence_full_support_is_beta() {
        let post = posterior();
        for dim in [Dim::Time, Dim::Speed] {
            let w = flow_prominence(&post, Condition { dim, lo: f64::NEG_INFINITY, hi: f64::INFINITY }).unwrap();
            assert_eq!(w, post.weights());
        }
        let w = flow_prominence(&post, Condition { dim: Dim::Time, lo: 0.0, hi: 20.0 }).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-6 && w[1] < 1e-6);
        assert!(flow_prominence(&post, Condition { dim: Dim::Time, lo: 1e6, hi: 1e6 + 1.0 }).is_err());
        assert!(flow_prominence(&post, Condition { dim: Dim::Time, lo: 5.0, hi: 5.0 }).is_err());
        assert!(flow_prominence(&post, Condition { dim: Dim::Space, lo: 0.0, hi: 1.0 }).is_err());
    }

    #[test]
    fn profile_grid() {
        let post = posterior();
        let times: Vec<f64> = (0..=400).map(|i| i as f64 * 0.1).collect();
        let speeds: Vec<f64> = (0..=600).map(|i| -4.0 + i as f64 * 0.02).collect();
        let g = time_speed_profile(&post, 0, &times, &speeds).unwrap();
        let mass: f64 = g.iter().flatten().sum::<f64>() * 0.1 * 0.02;
        assert!((mass - 1.0).abs() < 1e-3, "{mass}");
        let (i, j) = (0..times.len())
            .flat_map(|i| (0..speeds.len()).map(move |j| (i, j)))
            .max_by(|a, b| g[a.0][a.1].total_cmp(&g[b.0][b.1]))
            .unwrap();
        assert!((times[i] - 10.0).abs() < 1e-9);
        let mode = (0..=40000)
            .map(|i| -4.0 + i as f64 * 3e-4)
            .max_by(|&a, &b| (normal(a, 1.0, 0.25) + normal(a, 2.0, 1.0)).total_cmp(&(normal(b, 1.0, 0.25) + normal(b, 2.0, 1.0))))
            .unwrap();
        assert!((speeds[j] - mode).abs() <= 0.01 + 3e-4, "{} vs {mode}", speeds[j]);
        let pt = (-(times[3] - 10.0f64).powi(2) / 8.0).exp() / (8.0 * std::f64::consts::PI).sqrt();
        let pv = 0.5 * normal(speeds[250], 1.0, 0.25) + 0.5 * normal(speeds[250], 2.0, 1.0);
        assert!((g[3][250] - pt * pv).abs() < 1e-12);
        assert!(time_speed_profile(&post, 0, &[], &speeds).is_err());
        assert!(time_speed_profile(&post, 2, &times, &speeds).is_err());
    }

    #[test]
    fn barycentric_normalizes() {
        assert_eq!(barycentric([1.0, 0.5, 0.5]), [0.5, 0.25, 0.25]);
    }

    #[test]
    fn identical_trajectories_not_flagged() {
        let t = traj(0, &[(0, 10.0, 1.0), (1, 11.0, 1.0)]);
        let ts: Vec<Trajectory> = (0..20).map(|i| Trajectory { traj_id: i, ..t.clone() }).collect();
        let r = anomaly_scores(&posterior(), &ts, 0.05).unwrap();
        assert!(r.iter().all(|a| !a.flagged));
        assert!(anomaly_scores(&posterior(), &ts, 0.0).is_err());
        assert!(anomaly_scores(&posterior(), &ts, 1.0).is_err());
        assert!(anomaly_scores(&posterior(), &[], 0.5).is_err());
    }

    #[test]
    fn time_shifted_copy_is_flagged_on_time() {
        let post = posterior();
        let base = [(0, 9.0, 1.0), (0, 10.0, 1.1), (1, 11.0, 0.9), (0, 12.0, 1.0)];
        let mut ts: Vec<Trajectory> = (0..30)
            .map(|i| {
                let d = (i as f64 - 15.0) * 0.05;
                traj(i, &base.map(|(c, t, v)| (c, t + d, v)))
            })
            .collect();
        ts.push(traj(99, &base.map(|(c, t, v)| (c, t + 25.0, v))));
        let r = anomaly_scores(&post, &ts, 0.05).unwrap();
        let planted = r.iter().find(|a| a.traj_id == 99).unwrap();
        assert!(planted.flagged);
        assert_eq!(planted.driver, Dim::Time);
        assert!(planted.barycentric[1] < planted.barycentric[0] && planted.barycentric[1] < planted.barycentric[2]);
        assert!(r.iter().all(|a| a.score >= planted.score));
    }

    #[test]
    fn length_normalized_score() {
        let post = posterior();
        let pts = [(0, 11.0, 1.2), (1, 9.0, 0.8), (7, 12.5, 1.9)];
        let ts = vec![traj(0, &pts), traj(1, &[pts, pts].concat())];
        let r = anomaly_scores(&post, &ts, 0.5).unwrap();
        assert!((r[0].score - r[1].score).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn shift_invariance(ll in prop::collection::vec(-500.0f64..0.0, 1..8), c in -1e3f64..1e3) {
            let p = softmax(&ll);
            let shifted: Vec<f64> = ll.iter().map(|x| x + c).collect();
            let q = softmax(&shifted);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert_eq!(argmax(&ll), argmax(&shifted));
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn barycentric_is_simplex(pts in prop::collection::vec((0u32..20, 0.0f64..120.0, 0.0f64..4.0), 1..6), n in 1usize..12) {
            let ts: Vec<Trajectory> = (0..n as u64).map(|i| {
                let shifted: Vec<_> = pts.iter().map(|&(c, t, v)| (c, t + i as f64 * 7.0, v)).collect();
                traj(i, &shifted)
            }).collect();
            for a in anomaly_scores(&posterior(), &ts, 0.3).unwrap() {
                prop_assert!(a.barycentric.iter().all(|b| (0.0..=1.0).contains(b)));
                prop_assert!((a.barycentric.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }
}
