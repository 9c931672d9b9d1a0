//! Tabular plot series.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analysis::{anomaly_scores, flow_prominence, time_speed_profile, Condition};
use crate::error::{Error, Result};
use crate::metrics::{Mixture, Quadrature};
use crate::posterior::{Dim, ThdpPosterior};
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesKind {
    FlowWeights,
    TimeProfiles,
    SpeedProfiles,
    Prominence,
    TimeSpeedGrid,
    AnomalyTable,
}

impl SeriesKind {
    pub const ALL: [SeriesKind; 6] = [
        SeriesKind::FlowWeights,
        SeriesKind::TimeProfiles,
        SeriesKind::SpeedProfiles,
        SeriesKind::Prominence,
        SeriesKind::TimeSpeedGrid,
        SeriesKind::AnomalyTable,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SeriesKind::FlowWeights => "flow_weights",
            SeriesKind::TimeProfiles => "time_profiles",
            SeriesKind::SpeedProfiles => "speed_profiles",
            SeriesKind::Prominence => "prominence",
            SeriesKind::TimeSpeedGrid => "time_speed_grid",
            SeriesKind::AnomalyTable => "anomaly_table",
        }
    }
}

impl fmt::Display for SeriesKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SeriesKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SeriesKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid_input(format!("unknown series kind `{s}`")))
    }
}

/// Shortest round-trip text, in exponent form for very small or large
/// magnitudes.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || !a.is_finite() || (1e-4..1e15).contains(&a) {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(headers: Vec<String>) -> Self {
        Self { headers, rows: Vec::new() }
    }

    pub fn push<T: ToString>(&mut self, row: impl IntoIterator<Item = T>) {
        self.rows.push(row.into_iter().map(|c| c.to_string()).collect());
    }

    /// Appends a row of numbers.
    pub fn push_nums(&mut self, row: impl IntoIterator<Item = f64>) {
        self.rows.push(row.into_iter().map(num).collect());
    }

    /// Column `name` parsed as numbers.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.headers.iter().position(|h| h == name)?;
        self.rows.iter().map(|r| r[i].parse().ok()).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        self.write_to(std::fs::File::create(path).map_err(|e| Error::file(path, e))?)
    }

    pub fn write_to<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.headers)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesOptions {
    /// Points along each continuous axis.
    pub points: usize,
    /// Standard deviations past the outermost mode covered by the axis.
    pub span: f64,
    /// Points along each axis of the time/speed grid.
    pub grid_points: usize,
    /// Intervals per axis for prominence.
    pub bins: usize,
    pub anomaly_quantile: f64,
}

impl Default for SeriesOptions {
    fn default() -> Self {
        Self { points: 512, span: 6.0, grid_points: 64, bins: 20, anomaly_quantile: 0.05 }
    }
}

fn flow_headers(first: &[&str], post: &ThdpPosterior) -> Vec<String> {
    first.iter().map(|s| s.to_string()).chain((0..post.n_flows()).map(|k| format!("flow_{k}"))).collect()
}

fn axis(post: &ThdpPosterior, dim: Dim, points: usize, span: f64) -> Result<Vec<f64>> {
    let mixtures: Vec<Mixture> = (0..post.n_flows())
        .map(|k| {
            let (weights, modes) = post.profile(k, dim);
            Mixture { weights, modes }
        })
        .collect();
    Quadrature { points, span }.grid(&mixtures)
}

/// `β_k p(x | k)` along `dim`, one column per flow.
fn profiles(post: &ThdpPosterior, dim: Dim, opts: &SeriesOptions) -> Result<Table> {
    let mut t = Table::new(flow_headers(&[dim.name()], post));
    for x in axis(post, dim, opts.points, opts.span)? {
        let row = std::iter::once(x).chain((0..post.n_flows()).map(|k| post.flows[k].weight * post.ln_dim(k, dim, 0, x, x).exp()));
        t.push_nums(row);
    }
    Ok(t)
}

fn prominence(post: &ThdpPosterior, opts: &SeriesOptions) -> Result<Table> {
    if opts.bins == 0 {
        return Err(Error::invalid_input("prominence needs at least one bin"));
    }
    let mut t = Table::new(flow_headers(&["dim", "lo", "hi"], post));
    for dim in [Dim::Time, Dim::Speed] {
        let grid = axis(post, dim, opts.points, opts.span)?;
        let (lo, hi) = (grid[0], grid[grid.len() - 1]);
        let w = (hi - lo) / opts.bins as f64;
        for b in 0..opts.bins {
            let (a, z) = (lo + w * b as f64, lo + w * (b + 1) as f64);
            let mut row = vec![dim.name().to_string(), num(a), num(z)];
            match flow_prominence(post, Condition { dim, lo: a, hi: z }) {
                Ok(p) => row.extend(p.iter().map(|&x| num(x))),
                Err(_) => row.extend((0..post.n_flows()).map(|_| "0".to_string())),
            }
            t.rows.push(row);
        }
    }
    Ok(t)
}

/// `β_k p(t | k) p(v | k)` on a `grid_points × grid_points` grid.
fn time_speed_grid(post: &ThdpPosterior, opts: &SeriesOptions) -> Result<Table> {
    let times = axis(post, Dim::Time, opts.grid_points, opts.span)?;
    let speeds = axis(post, Dim::Speed, opts.grid_points, opts.span)?;
    let grids = (0..post.n_flows()).map(|k| time_speed_profile(post, k, &times, &speeds)).collect::<Result<Vec<_>>>()?;
    let mut t = Table::new(flow_headers(&["time", "speed"], post));
    for (i, &ti) in times.iter().enumerate() {
        for (j, &vj) in speeds.iter().enumerate() {
            let row = [ti, vj].into_iter().chain(grids.iter().enumerate().map(|(k, g)| post.flows[k].weight * g[i][j]));
            t.push_nums(row);
        }
    }
    Ok(t)
}

fn anomaly_table(post: &ThdpPosterior, trajectories: &[Trajectory], opts: &SeriesOptions) -> Result<Table> {
    let headers = [
        "traj_id", "flow", "score", "total_log_likelihood", "flagged", "bary_space", "bary_time", "bary_speed", "driver",
    ];
    let mut t = Table::new(headers.iter().map(|s| s.to_string()).collect());
    for r in anomaly_scores(post, trajectories, opts.anomaly_quantile)? {
        t.rows.push(vec![
            r.traj_id.to_string(),
            r.flow.to_string(),
            num(r.score),
            num(r.total_log_likelihood),
            (r.flagged as u8).to_string(),
            num(r.barycentric[0]),
            num(r.barycentric[1]),
            num(r.barycentric[2]),
            r.driver.name().to_string(),
        ]);
    }
    Ok(t)
}

/// Builds one series. `anomaly_table` needs trajectories.
pub fn plot_series(kind: SeriesKind, post: &ThdpPosterior, trajectories: Option<&[Trajectory]>, opts: &SeriesOptions) -> Result<Table> {
    match kind {
        SeriesKind::FlowWeights => {
            let mut t = Table::new(vec!["flow".into(), "weight".into()]);
            for (k, f) in post.flows.iter().enumerate() {
                t.push([k.to_string(), num(f.weight)]);
            }
            Ok(t)
        }
        SeriesKind::TimeProfiles => profiles(post, Dim::Time, opts),
        SeriesKind::SpeedProfiles => profiles(post, Dim::Speed, opts),
        SeriesKind::Prominence => prominence(post, opts),
        SeriesKind::TimeSpeedGrid => time_speed_grid(post, opts),
        SeriesKind::AnomalyTable => {
            let trajs = trajectories.ok_or_else(|| Error::invalid_input("the anomaly table needs trajectories"))?;
            anomaly_table(post, trajs, opts)
        }
    }
}

pub fn export_plot_series(
    kind: SeriesKind,
    post: &ThdpPosterior,
    trajectories: Option<&[Trajectory]>,
    opts: &SeriesOptions,
    path: &Path,
) -> Result<Table> {
    let t = plot_series(kind, post, trajectories, opts)?;
    t.write_csv(path)?;
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::{Bounds, Codebook};
    use crate::posterior::Flow;
    use crate::stats::{Gaussian, SparseCategorical};
    use crate::trajectory::Observation;

    fn posterior() -> ThdpPosterior {
        let flow = |w: f64, cell: u32, tw: Vec<f64>, sw: Vec<f64>| Flow {
            weight: w,
            space: SparseCategorical { vocab_size: 20, cells: vec![(cell, 0.9)], background: 0.1 / 19.0 },
            time_weights: tw,
            speed_weights: sw,
        };
        ThdpPosterior {
            codebook: Codebook::new(2, 2, Bounds::new(0.0, 0.0, 1.0, 1.0), 0.0).unwrap(),
            flows: vec![flow(0.7, 0, vec![0.9, 0.1], vec![1.0, 0.0]), flow(0.3, 5, vec![0.2, 0.8], vec![0.4, 0.6])],
            other_weight: 0.0,
            unseen_weight: 0.0,
            time_modes: vec![Gaussian::new(10.0, 4.0), Gaussian::new(40.0, 9.0)],
            time_mode_weights: vec![0.6, 0.4],
            speed_modes: vec![Gaussian::new(1.0, 0.01), Gaussian::new(2.0, 0.04)],
            speed_mode_weights: vec![0.5, 0.5],
        }
    }

    fn trajectories() -> Vec<Trajectory> {
        (0..10u64)
            .map(|id| Trajectory {
                traj_id: id,
                observations: (0..5)
                    .map(|i| Observation {
                        traj_id: id,
                        group_id: 0,
                        cell: if id % 2 == 0 { 0 } else { 5 },
                        timestamp: 10.0 + 3.0 * id as f64 + i as f64,
                        speed: 1.0 + 0.1 * id as f64,
                        position: (0.0, 0.0),
                    })
                    .collect(),
            })
            .collect()
    }

    fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
        xs.windows(2).zip(ys.windows(2)).map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1])).sum()
    }

    #[test]
    fn kinds_parse() {
        for k in SeriesKind::ALL {
            assert_eq!(k.name().parse::<SeriesKind>().unwrap(), k);
        }
        assert!(matches!("heatmap".parse::<SeriesKind>(), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn flow_weights_sum_to_one() {
        let t = plot_series(SeriesKind::FlowWeights, &posterior(), None, &SeriesOptions::default()).unwrap();
        let w = t.column("weight").unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn profiles_integrate_to_flow_weight() {
        let post = posterior();
        for (kind, axis) in [(SeriesKind::TimeProfiles, "time"), (SeriesKind::SpeedProfiles, "speed")] {
            let t = plot_series(kind, &post, None, &SeriesOptions::default()).unwrap();
            let xs = t.column(axis).unwrap();
            for k in 0..2 {
                let area = trapezoid(&xs, &t.column(&format!("flow_{k}")).unwrap());
                assert!((area - post.flows[k].weight).abs() < 1e-3, "{kind} flow {k}: {area}");
            }
        }
    }

    #[test]
    fn prominence_rows_are_distributions() {
        let t = plot_series(SeriesKind::Prominence, &posterior(), None, &SeriesOptions::default()).unwrap();
        assert_eq!(t.rows.len(), 40);
        let (a, b) = (t.column("flow_0").unwrap(), t.column("flow_1").unwrap());
        for (x, y) in a.iter().zip(&b) {
            let s = x + y;
            assert!(s == 0.0 || (s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn grid_mass() {
        let post = posterior();
        let opts = SeriesOptions { grid_points: 200, ..Default::default() };
        let t = plot_series(SeriesKind::TimeSpeedGrid, &post, None, &opts).unwrap();
        assert_eq!(t.rows.len(), 200 * 200);
        let (times, speeds) = (t.column("time").unwrap(), t.column("speed").unwrap());
        let (dt, dv) = (times[200] - times[0], speeds[1] - speeds[0]);
        let mass: f64 = t.column("flow_1").unwrap().iter().sum::<f64>() * dt * dv;
        assert!((mass - 0.3).abs() < 0.01, "{mass}");
    }

    #[test]
    fn anomaly_table_barycentric_sums() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        let trajs = trajectories();
        let t = export_plot_series(SeriesKind::AnomalyTable, &posterior(), Some(&trajs), &SeriesOptions::default(), &path).unwrap();
        assert_eq!(t.rows.len(), trajs.len());
        let cols: Vec<Vec<f64>> = ["bary_space", "bary_time", "bary_speed"].iter().map(|c| t.column(c).unwrap()).collect();
        for i in 0..trajs.len() {
            assert!((cols[0][i] + cols[1][i] + cols[2][i] - 1.0).abs() < 1e-12);
        }
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("traj_id,flow,score"));
        assert_eq!(text.lines().count(), trajs.len() + 1);
        assert!(plot_series(SeriesKind::AnomalyTable, &posterior(), None, &SeriesOptions::default()).is_err());
    }
}
