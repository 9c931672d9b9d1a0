//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on invalid input or configuration, 2 when an
//! internal invariant breaks.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use crowdflow::analysis::{anomaly_scores, classify};
use crowdflow::fit::{fit, FitConfig, DEFAULT_BURN_IN, DEFAULT_MAX_ITERS, DEFAULT_PRUNE};
use crowdflow::guidance::{build_scenario, ScenarioConfig};
use crowdflow::hyper::DEFAULT_CUSTOMER_SELECTION;
use crowdflow::io::dataset::{load_trajectories, segment_into_groups, subsample_trajectories, write_csv, Dataset, Format, LoadOptions};
use crowdflow::io::export::{export_plot_series, num, SeriesKind, SeriesOptions, Table};
use crowdflow::io::model::{load_model, save_model, Association, Model, PosteriorModel};
use crowdflow::io::synth::{generate_synthetic, SynthSpec};
use crowdflow::metrics::{al_metric, dpd, match_flows, AlVariant, DpdQuery, DpdVariant, Quadrature};
use crowdflow::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "crowdflow", version, about = "Space/time/speed activity modes of crowd trajectories")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a posterior to a trajectory file.
    Fit(FitArgs),
    /// Assign every trajectory to its most probable flow.
    Classify(DataArgs),
    /// Score trajectories and flag the least likely ones.
    Anomaly {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 0.05)]
        quantile: f64,
    },
    /// Compare data or posteriors.
    #[command(subcommand)]
    Metrics(MetricsCommand),
    /// Build or sample simulation guidance.
    #[command(subcommand)]
    Guide(GuideCommand),
    /// Generate labelled synthetic trajectories.
    Synth {
        /// JSON flow specification.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Trajectory CSV.
        #[arg(long)]
        out: PathBuf,
        /// Optional `traj_id,label` CSV.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Write a plot series as CSV.
    Export {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        kind: String,
        /// Trajectories, needed by `anomaly_table`.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 0.05)]
        quantile: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum MetricsCommand {
    /// Average likelihood of a dataset under a posterior.
    Al {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value = "all")]
        variant: AlChoice,
    },
    /// Distances between matched flows of two posteriors.
    Dpd {
        #[arg(long)]
        model_a: PathBuf,
        #[arg(long)]
        model_b: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum GuideCommand {
    /// Endpoint mixtures and dynamics per flow.
    Build {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 3)]
        min_trajectories: usize,
        #[arg(long, default_value_t = 5)]
        max_components: usize,
        /// Seconds between resampled frames; the median gap of the data when unset.
        #[arg(long)]
        frame_interval: Option<f64>,
    },
    /// Draw agents from a scenario.
    Sample {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        agents: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AlChoice {
    All,
    Overall,
    SpaceTime,
    SpaceSpeed,
    TimeSpeed,
    SpaceOnly,
    TimeOnly,
    SpeedOnly,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatChoice {
    Csv,
    Jsonl,
}

#[derive(Args)]
struct DataArgs {
    /// Posterior model file.
    #[arg(long)]
    model: PathBuf,
    /// Trajectory file, tokenized like the model's training data.
    data: PathBuf,
    #[arg(long, value_enum)]
    format: Option<FormatChoice>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    data: PathBuf,
    #[arg(long, value_enum)]
    format: Option<FormatChoice>,
    #[arg(long, default_value_t = 40)]
    grid_rows: usize,
    #[arg(long, default_value_t = 40)]
    grid_cols: usize,
    #[arg(long, default_value_t = 1)]
    segments: usize,
    #[arg(long, default_value_t = 1)]
    velocity_window: usize,
    #[arg(long, default_value_t = DEFAULT_BURN_IN)]
    burn_in: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
    iters: usize,
    /// Run all iterations instead of stopping once the chain settles.
    #[arg(long)]
    no_early_stop: bool,
    #[arg(long, default_value_t = DEFAULT_CUSTOMER_SELECTION)]
    customer_selection: usize,
    #[arg(long, default_value_t = DEFAULT_PRUNE)]
    prune: f64,
    /// Keep a uniform random subset of this many trajectories.
    #[arg(long)]
    max_trajectories: Option<usize>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn format_of(path: &Path, choice: Option<FormatChoice>) -> Format {
    match choice {
        Some(FormatChoice::Csv) => Format::Csv,
        Some(FormatChoice::Jsonl) => Format::Jsonl,
        None => Format::from_path(path),
    }
}

fn invalid(msg: impl std::fmt::Display) -> Error {
    Error::InvalidInput(msg.to_string())
}

/// Writes to `out`, or stdout when unset.
fn emit(out: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match out {
        Some(p) => {
            let mut file = io::BufWriter::new(fs::File::create(p)?);
            f(&mut file)?;
            file.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock)?;
        }
    }
    Ok(())
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    emit(out, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(invalid)?;
        writeln!(w)?;
        Ok(())
    })
}

fn load_posterior_model(path: &Path) -> Result<PosteriorModel> {
    load_model(path)?.into_posterior()
}

/// Loads data with the model's grid, bounds and time origin.
fn load_like_model(model: &PosteriorModel, data: &DataArgs) -> Result<Dataset> {
    load_trajectories(&data.data, format_of(&data.data, data.format), &model.load)
}

fn cmd_fit(a: FitArgs) -> Result<()> {
    let opts = LoadOptions {
        grid_rows: a.grid_rows,
        grid_cols: a.grid_cols,
        segments: a.segments,
        velocity_window: a.velocity_window,
        ..Default::default()
    };
    let mut ds = load_trajectories(&a.data, format_of(&a.data, a.format), &opts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    if let Some(max) = a.max_trajectories {
        if max == 0 {
            return Err(Error::InvalidConfig("--max-trajectories must be >= 1".into()));
        }
        subsample_trajectories(&mut ds.trajectories, max, &mut rng);
        segment_into_groups(&mut ds.trajectories, a.segments)?;
    }
    let mut config = FitConfig { burn_in: a.burn_in, max_iters: a.iters, prune: a.prune, ..Default::default() };
    config.hypers.customer_selection = a.customer_selection;
    if a.no_early_stop {
        config.stability_window = None;
    }
    let out = fit(&ds.observations(), &ds.manifest.codebook, &config, &mut rng)?;
    let associations = ds
        .trajectories
        .iter()
        .map(|t| Ok(Association { traj_id: t.traj_id, flow: classify(&out.posterior, t)?.flow }))
        .collect::<Result<Vec<_>>>()?;
    let load = LoadOptions::matching(&ds.manifest.codebook, ds.manifest.time_origin, a.velocity_window, a.segments);
    let model = PosteriorModel {
        posterior: out.posterior,
        load,
        config,
        seed: Some(a.seed),
        diagnostics: Some(out.diagnostics),
        associations,
    };
    let d = model.diagnostics.as_ref().expect("set above");
    eprintln!(
        "fitted {} flows on {} observations ({} trajectories, {} rejected rows) in {} sweeps",
        model.posterior.n_flows(),
        ds.manifest.observations,
        ds.trajectories.len(),
        ds.manifest.rejected_rows,
        d.sweeps
    );
    save_model(&Model::Posterior(Box::new(model)), &a.out)
}

fn cmd_classify(a: DataArgs) -> Result<()> {
    let model = load_posterior_model(&a.model)?;
    let ds = load_like_model(&model, &a)?;
    let post = &model.posterior;
    let mut headers = vec!["traj_id".to_string(), "flow".to_string()];
    headers.extend((0..post.n_flows()).map(|k| format!("p_{k}")));
    let mut table = Table::new(headers);
    for t in &ds.trajectories {
        let c = classify(post, t)?;
        table.push([c.traj_id.to_string(), c.flow.to_string()].into_iter().chain(c.probabilities.iter().map(|&p| num(p))));
    }
    emit(a.out.as_deref(), |w| table.write_to(w))
}

fn cmd_anomaly(a: DataArgs, quantile: f64) -> Result<()> {
    let model = load_posterior_model(&a.model)?;
    let ds = load_like_model(&model, &a)?;
    let reports = anomaly_scores(&model.posterior, &ds.trajectories, quantile)?;
    let mut table = Table::new(
        ["traj_id", "flow", "score", "total_log_likelihood", "flagged", "bary_space", "bary_time", "bary_speed", "driver"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
    );
    for r in reports {
        table.push([
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
    emit(a.out.as_deref(), |w| table.write_to(w))
}

fn cmd_al(a: DataArgs, variant: AlChoice) -> Result<()> {
    let model = load_posterior_model(&a.model)?;
    let ds = load_like_model(&model, &a)?;
    let variants = match variant {
        AlChoice::All => AlVariant::ALL.to_vec(),
        AlChoice::Overall => vec![AlVariant::Overall],
        AlChoice::SpaceTime => vec![AlVariant::SpaceTime],
        AlChoice::SpaceSpeed => vec![AlVariant::SpaceSpeed],
        AlChoice::TimeSpeed => vec![AlVariant::TimeSpeed],
        AlChoice::SpaceOnly => vec![AlVariant::SpaceOnly],
        AlChoice::TimeOnly => vec![AlVariant::TimeOnly],
        AlChoice::SpeedOnly => vec![AlVariant::SpeedOnly],
    };
    let obs = ds.observations();
    let mut table = Table::new(vec!["variant".into(), "al".into()]);
    for v in variants {
        table.push([v.name().to_string(), num(al_metric(v, &obs, &model.posterior)?)]);
    }
    emit(a.out.as_deref(), |w| table.write_to(w))
}

fn cmd_dpd(a: &Path, b: &Path, out: Option<&Path>) -> Result<()> {
    let (ma, mb) = (load_posterior_model(a)?, load_posterior_model(b)?);
    let (pa, pb) = (&ma.posterior, &mb.posterior);
    let matching = match_flows(pa, pb)?;
    let mut headers = vec!["flow_a".to_string(), "flow_b".to_string()];
    headers.extend(DpdVariant::ALL.iter().map(|v| v.name().to_string()));
    let mut table = Table::new(headers);
    for p in &matching.pairs {
        let mut row = vec![p.flow_a.to_string(), p.flow_b.to_string()];
        for variant in DpdVariant::ALL {
            let q = DpdQuery { flow_a: p.flow_a, flow_b: p.flow_b, variant };
            row.push(num(dpd(q, pa, pb, Quadrature::default())?));
        }
        table.rows.push(row);
    }
    if !matching.unmatched_a.is_empty() || !matching.unmatched_b.is_empty() {
        eprintln!("unmatched flows: a {:?}, b {:?}", matching.unmatched_a, matching.unmatched_b);
    }
    emit(out, |w| table.write_to(w))
}

fn cmd_guide_build(a: DataArgs, cfg: ScenarioConfig) -> Result<()> {
    let model = load_posterior_model(&a.model)?;
    let ds = load_like_model(&model, &a)?;
    let assignments = ds.trajectories.iter().map(|t| Ok(classify(&model.posterior, t)?.flow)).collect::<Result<Vec<_>>>()?;
    let scenario = build_scenario(&model.posterior, &ds.trajectories, &assignments, &cfg)?;
    if !scenario.skipped_flows.is_empty() {
        eprintln!("flows without trajectories left out: {:?}", scenario.skipped_flows);
    }
    let m = Model::Scenario(Box::new(scenario));
    match a.out {
        Some(p) => save_model(&m, &p),
        None => {
            print!("{}", crowdflow::io::model::to_json(&m)?);
            Ok(())
        }
    }
}

fn cmd_guide_sample(scenario: &Path, agents: usize, seed: u64, out: Option<&Path>) -> Result<()> {
    let s = load_model(scenario)?.into_scenario()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let agents = s.sample_agents(agents, &mut rng)?;
    emit_json(out, &agents)
}

fn cmd_synth(spec: &Path, seed: u64, out: &Path, labels: Option<&Path>) -> Result<()> {
    let text = fs::read_to_string(spec)?;
    let spec: SynthSpec = serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", spec.display())))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let syn = generate_synthetic(&spec, &mut rng)?;
    write_csv(out, &syn.trajectories)?;
    if let Some(p) = labels {
        let mut table = Table::new(vec!["traj_id".into(), "label".into()]);
        for (t, l) in syn.trajectories.iter().zip(&syn.labels) {
            table.push([t.id, *l as u64]);
        }
        table.write_csv(p)?;
    }
    Ok(())
}

fn cmd_export(model: &Path, kind: &str, data: Option<&Path>, quantile: f64, out: &Path) -> Result<()> {
    let kind: SeriesKind = kind.parse()?;
    let m = load_posterior_model(model)?;
    let ds = match data {
        Some(p) => Some(load_trajectories(p, Format::from_path(p), &m.load)?),
        None => None,
    };
    let opts = SeriesOptions { anomaly_quantile: quantile, ..Default::default() };
    export_plot_series(kind, &m.posterior, ds.as_ref().map(|d| d.trajectories.as_slice()), &opts, out)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Classify(a) => cmd_classify(a),
        Command::Anomaly { data, quantile } => cmd_anomaly(data, quantile),
        Command::Metrics(MetricsCommand::Al { data, variant }) => cmd_al(data, variant),
        Command::Metrics(MetricsCommand::Dpd { model_a, model_b, out }) => cmd_dpd(&model_a, &model_b, out.as_deref()),
        Command::Guide(GuideCommand::Build { data, min_trajectories, max_components, frame_interval }) => {
            let cfg = ScenarioConfig { min_trajectories, max_components, frame_interval, ..Default::default() };
            cmd_guide_build(data, cfg)
        }
        Command::Guide(GuideCommand::Sample { scenario, agents, seed, out }) => cmd_guide_sample(&scenario, agents, seed, out.as_deref()),
        Command::Synth { spec, seed, out, labels } => cmd_synth(&spec, seed, &out, labels.as_deref()),
        Command::Export { model, kind, data, quantile, out } => cmd_export(&model, &kind, data.as_deref(), quantile, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_internal() { 2 } else { 1 })
        }
    }
}
