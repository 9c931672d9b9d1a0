//! Trajectory files and their conversion to grouped observations.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::codebook::{Bounds, Codebook, OutOfBounds, DEFAULT_STATIC_THRESHOLD};
use crate::error::{Error, Result};
use crate::trajectory::{estimate_velocities, Observation, RawPoint, RawTrajectory, TrajId, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    /// Header `traj_id,t,x,y`.
    Csv,
    /// One pre-tokenized observation per line.
    Jsonl,
}

impl Format {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("ndjson") => Format::Jsonl,
            _ => Format::Csv,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadOptions {
    pub grid_rows: usize,
    pub grid_cols: usize,
    /// Defaults to the data's bounding box.
    pub bounds: Option<Bounds>,
    pub static_threshold: f64,
    pub velocity_window: usize,
    pub segments: usize,
    pub out_of_bounds: OutOfBounds,
    /// Raw time mapped to zero; the earliest timestamp when unset.
    #[serde(default)]
    pub time_origin: Option<f64>,
}

impl LoadOptions {
    /// Options reproducing an existing tokenization.
    pub fn matching(codebook: &Codebook, time_origin: f64, velocity_window: usize, segments: usize) -> Self {
        Self {
            grid_rows: codebook.rows(),
            grid_cols: codebook.cols(),
            bounds: Some(codebook.bounds()),
            static_threshold: codebook.static_threshold(),
            velocity_window,
            segments,
            out_of_bounds: codebook.out_of_bounds(),
            time_origin: Some(time_origin),
        }
    }
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            grid_rows: 40,
            grid_cols: 40,
            bounds: None,
            static_threshold: DEFAULT_STATIC_THRESHOLD,
            velocity_window: 1,
            segments: 1,
            out_of_bounds: OutOfBounds::Clamp,
            time_origin: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    /// 1-based line number, 0 for whole-trajectory rejections.
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub source: String,
    pub codebook: Codebook,
    pub segments: usize,
    pub observations: usize,
    pub trajectories: usize,
    /// Raw timestamp subtracted from every observation.
    pub time_origin: f64,
    pub time_span: f64,
    pub rejected_rows: usize,
    pub rejected_trajectories: usize,
    pub clamped_positions: usize,
    pub rejections: Vec<Rejection>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub trajectories: Vec<Trajectory>,
    pub manifest: DatasetManifest,
}

impl Dataset {
    /// All observations, trajectory by trajectory.
    pub fn observations(&self) -> Vec<Observation> {
        self.trajectories.iter().flat_map(|t| t.observations.iter().copied()).collect()
    }
}

/// Parsed raw tracks plus the rows that were turned away.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawLoad {
    pub trajectories: Vec<RawTrajectory>,
    pub rejections: Vec<Rejection>,
}

fn finite(v: f64, name: &str) -> std::result::Result<f64, String> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("non-finite {name}"))
    }
}

/// Reads a `traj_id,t,x,y` CSV. Malformed rows and rows whose timestamp does
/// not increase within their trajectory are rejected individually.
pub fn read_csv(path: &Path) -> Result<RawLoad> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::file(path, io),
        other => Error::invalid_input(format!("{}: {other:?}", path.display())),
    })?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::invalid_input(format!("missing column `{name}` in {}", path.display())))
    };
    let (ci, ct, cx, cy) = (col("traj_id")?, col("t")?, col("x")?, col("y")?);
    let mut tracks: BTreeMap<TrajId, Vec<RawPoint>> = BTreeMap::new();
    let mut rejections = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let parsed = rec.map_err(|e| e.to_string()).and_then(|r| {
            let field = |c: usize, name: &str| r.get(c).ok_or_else(|| format!("missing field `{name}`"));
            let id: TrajId = field(ci, "traj_id")?.parse().map_err(|e| format!("bad traj_id: {e}"))?;
            let num = |c: usize, name: &str| -> std::result::Result<f64, String> {
                let v: f64 = field(c, name)?.parse().map_err(|e| format!("bad {name}: {e}"))?;
                finite(v, name)
            };
            Ok((id, RawPoint::new(num(ct, "t")?, num(cx, "x")?, num(cy, "y")?)))
        });
        match parsed {
            Ok((id, p)) => {
                let track = tracks.entry(id).or_default();
                match track.last() {
                    Some(last) if p.t <= last.t => rejections.push(Rejection {
                        line,
                        reason: format!("trajectory {id}: timestamp {} does not follow {}", p.t, last.t),
                    }),
                    _ => track.push(p),
                }
            }
            Err(reason) => rejections.push(Rejection { line, reason }),
        }
    }
    let trajectories = tracks.into_iter().map(|(id, points)| RawTrajectory { id, points }).collect();
    Ok(RawLoad { trajectories, rejections })
}

#[derive(Debug, Deserialize)]
struct TokenRecord {
    traj_id: TrajId,
    t: f64,
    cell: u32,
    speed: f64,
    #[serde(default)]
    x: f64,
    #[serde(default)]
    y: f64,
}

/// Reads pre-tokenized JSON lines `{traj_id, t, cell, speed, [x, y]}`.
pub fn load_jsonl(path: &Path, opts: &LoadOptions) -> Result<Dataset> {
    let codebook = Codebook::new(opts.grid_rows, opts.grid_cols, opts.bounds.unwrap_or(Bounds::unit()), opts.static_threshold)?
        .with_out_of_bounds(opts.out_of_bounds);
    let v = codebook.vocab_size();
    let reader = BufReader::new(File::open(path).map_err(|e| Error::file(path, e))?);
    let mut tracks: BTreeMap<TrajId, Vec<TokenRecord>> = BTreeMap::new();
    let mut rejections = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let text = line?;
        if text.trim().is_empty() {
            continue;
        }
        let rec: TokenRecord = match serde_json::from_str(&text) {
            Ok(r) => r,
            Err(e) => {
                rejections.push(Rejection { line: line_no, reason: e.to_string() });
                continue;
            }
        };
        let bad = if rec.cell as usize >= v {
            Some(format!("cell {} outside vocabulary {v}", rec.cell))
        } else if !rec.t.is_finite() || !(rec.speed >= 0.0) || !rec.speed.is_finite() {
            Some("non-finite time or negative speed".to_string())
        } else {
            None
        };
        if let Some(reason) = bad {
            rejections.push(Rejection { line: line_no, reason });
            continue;
        }
        let track = tracks.entry(rec.traj_id).or_default();
        if let Some(last) = track.last() {
            if rec.t <= last.t {
                rejections.push(Rejection {
                    line: line_no,
                    reason: format!("trajectory {}: timestamp {} does not follow {}", rec.traj_id, rec.t, last.t),
                });
                continue;
            }
        }
        track.push(rec);
    }
    let origin = opts.time_origin.unwrap_or_else(|| tracks.values().flatten().map(|r| r.t).fold(f64::INFINITY, f64::min));
    let trajectories: Vec<Trajectory> = tracks
        .into_iter()
        .map(|(id, recs)| Trajectory {
            traj_id: id,
            observations: recs
                .into_iter()
                .map(|r| Observation {
                    traj_id: id,
                    group_id: 0,
                    cell: r.cell,
                    timestamp: r.t - origin,
                    speed: r.speed,
                    position: (r.x, r.y),
                })
                .collect(),
        })
        .collect();
    finish(trajectories, codebook, origin, rejections, 0, 0, opts.segments, path)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    mut trajectories: Vec<Trajectory>,
    codebook: Codebook,
    time_origin: f64,
    rejections: Vec<Rejection>,
    rejected_trajectories: usize,
    clamped_positions: usize,
    segments: usize,
    source: &Path,
) -> Result<Dataset> {
    if trajectories.is_empty() {
        return Err(Error::invalid_input(format!("no usable trajectories in {}", source.display())));
    }
    let time_span = segment_into_groups(&mut trajectories, segments)?;
    let manifest = DatasetManifest {
        source: source.display().to_string(),
        codebook,
        segments,
        observations: trajectories.iter().map(|t| t.len()).sum(),
        trajectories: trajectories.len(),
        time_origin,
        time_span,
        rejected_rows: rejections.iter().filter(|r| r.line > 0).count(),
        rejected_trajectories,
        clamped_positions,
        rejections,
    };
    Ok(Dataset { trajectories, manifest })
}

/// Estimates velocities, tokenizes against a grid over the data (or the
/// given bounds) and assigns temporal groups.
pub fn tokenize_raw(raw: RawLoad, opts: &LoadOptions, source: &Path) -> Result<Dataset> {
    let RawLoad { trajectories: raw, mut rejections } = raw;
    let bounds = match opts.bounds {
        Some(b) => b,
        None => {
            let pts = raw.iter().flat_map(|t| t.points.iter().map(|p| (p.x, p.y)));
            let b = Bounds::enclosing(pts, 0.0).ok_or_else(|| Error::invalid_input("no points"))?;
            let pad = 1e-6 * b.width().max(b.height()).max(1.0);
            Bounds::new(b.min_x - pad, b.min_y - pad, b.max_x + pad, b.max_y + pad)
        }
    };
    let codebook =
        Codebook::new(opts.grid_rows, opts.grid_cols, bounds, opts.static_threshold)?.with_out_of_bounds(opts.out_of_bounds);
    let origin = opts.time_origin.unwrap_or_else(|| raw.iter().flat_map(|t| t.points.iter().map(|p| p.t)).fold(f64::INFINITY, f64::min));
    let mut trajectories = Vec::with_capacity(raw.len());
    let mut rejected_trajectories = 0;
    let mut clamped = 0;
    for t in &raw {
        let result = estimate_velocities(&t.points, opts.velocity_window)
            .and_then(|m| Trajectory::from_motion(t.id, &m, &codebook, origin));
        match result {
            Ok((traj, c)) => {
                clamped += c;
                trajectories.push(traj);
            }
            Err(e) => {
                rejected_trajectories += 1;
                rejections.push(Rejection { line: 0, reason: format!("trajectory {}: {e}", t.id) });
            }
        }
    }
    finish(trajectories, codebook, origin, rejections, rejected_trajectories, clamped, opts.segments, source)
}

pub fn load_trajectories(path: &Path, format: Format, opts: &LoadOptions) -> Result<Dataset> {
    match format {
        Format::Csv => tokenize_raw(read_csv(path)?, opts, path),
        Format::Jsonl => load_jsonl(path, opts),
    }
}

/// Splits the dataset's time span into `n` equal intervals and tags every
/// observation with its interval. Returns the time span.
pub fn segment_into_groups(trajectories: &mut [Trajectory], n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid_config("segment count must be >= 1"));
    }
    let times = trajectories.iter().flat_map(|t| t.observations.iter().map(|o| o.timestamp));
    let (lo, hi) = times.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| (lo.min(t), hi.max(t)));
    let span = if hi >= lo { hi - lo } else { 0.0 };
    let width = span / n as f64;
    for o in trajectories.iter_mut().flat_map(|t| t.observations.iter_mut()) {
        o.group_id = if width > 0.0 { (((o.timestamp - lo) / width) as usize).min(n - 1) } else { 0 };
    }
    Ok(span)
}

/// Keeps a uniform random subset of `max` trajectories, in id order.
pub fn subsample_trajectories<R: Rng + ?Sized>(trajectories: &mut Vec<Trajectory>, max: usize, rng: &mut R) {
    if trajectories.len() <= max {
        return;
    }
    let mut keep = index::sample(rng, trajectories.len(), max).into_vec();
    keep.sort_unstable();
    let mut it = keep.into_iter().peekable();
    let mut i = 0;
    trajectories.retain(|_| {
        let k = it.peek() == Some(&i);
        if k {
            it.next();
        }
        i += 1;
        k
    });
}

/// Writes raw tracks as `traj_id,t,x,y`.
pub fn write_csv(path: &Path, trajectories: &[RawTrajectory]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::file(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["traj_id", "t", "x", "y"])?;
    for t in trajectories {
        for p in &t.points {
            w.write_record(&[t.id.to_string(), p.t.to_string(), p.x.to_string(), p.y.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}
