//! Versioned model files.
//!
//! A model file is one JSON document `{format, version, kind, body}` where
//! `kind` is `posterior` or `scenario`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{FitConfig, FitDiagnostics};
use crate::guidance::GuidanceScenario;
use crate::io::dataset::LoadOptions;
use crate::posterior::ThdpPosterior;
use crate::trajectory::TrajId;

pub const FORMAT: &str = "crowdflow-model";
pub const VERSION: u32 = 1;

/// Flow of one training trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Association {
    pub traj_id: TrajId,
    pub flow: usize,
}

/// A fitted posterior with what is needed to tokenize new data like the
/// training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorModel {
    pub posterior: ThdpPosterior,
    /// Tokenization of the training data, with bounds and time origin fixed.
    pub load: LoadOptions,
    pub config: FitConfig,
    pub seed: Option<u64>,
    pub diagnostics: Option<FitDiagnostics>,
    pub associations: Vec<Association>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "body", rename_all = "snake_case")]
pub enum Model {
    Posterior(Box<PosteriorModel>),
    Scenario(Box<GuidanceScenario>),
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Posterior(_) => "posterior",
            Model::Scenario(_) => "scenario",
        }
    }

    pub fn into_posterior(self) -> Result<PosteriorModel> {
        match self {
            Model::Posterior(p) => Ok(*p),
            other => Err(Error::invalid_input(format!("expected a posterior model, found a {}", other.kind()))),
        }
    }

    pub fn into_scenario(self) -> Result<GuidanceScenario> {
        match self {
            Model::Scenario(s) => Ok(*s),
            other => Err(Error::invalid_input(format!("expected a guidance scenario, found a {}", other.kind()))),
        }
    }
}

#[derive(Serialize)]
struct EnvelopeOut<'a> {
    format: &'static str,
    version: u32,
    #[serde(flatten)]
    model: &'a Model,
}

#[derive(Deserialize)]
struct Header {
    format: Option<String>,
    version: Option<u32>,
}

#[derive(Deserialize)]
struct EnvelopeIn {
    #[serde(flatten)]
    model: Model,
}

pub fn to_json(model: &Model) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&EnvelopeOut { format: FORMAT, version: VERSION, model })
        .map_err(|e| Error::invalid_input(format!("model cannot be serialized: {e}")))?;
    s.push('\n');
    Ok(s)
}

pub fn from_json(text: &str) -> Result<Model> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Corrupt(e.to_string()))?;
    let header: Header = serde_json::from_value(value.clone()).map_err(|e| Error::Corrupt(e.to_string()))?;
    if header.format.as_deref() != Some(FORMAT) {
        return Err(Error::Corrupt(format!("not a {FORMAT} file")));
    }
    match header.version {
        Some(VERSION) => {}
        Some(found) => return Err(Error::VersionMismatch { found, expected: VERSION }),
        None => return Err(Error::Corrupt("missing version".into())),
    }
    let env: EnvelopeIn = serde_json::from_value(value).map_err(|e| Error::Corrupt(e.to_string()))?;
    match &env.model {
        Model::Posterior(p) => p.posterior.validate().map_err(|e| Error::Corrupt(e.to_string()))?,
        Model::Scenario(s) if s.flows.is_empty() => return Err(Error::Corrupt("scenario has no flows".into())),
        Model::Scenario(_) => {}
    }
    Ok(env.model)
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    fs::write(path, to_json(model)?).map_err(|e| Error::file(path, e))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Model> {
    from_json(&fs::read_to_string(path).map_err(|e| Error::file(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::classify;
    use crate::fit::fit;
    use crate::io::dataset::{tokenize_raw, RawLoad};
    use crate::io::synth::{generate_synthetic, SynthFlow, SynthSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fitted() -> (PosteriorModel, Vec<crate::trajectory::Trajectory>) {
        let f = |path: Vec<(f64, f64)>, t: f64| SynthFlow { path, time_mean: t, time_std: 5.0, speed_mean: 1.0, speed_std: 0.1, count: 8 };
        let spec = SynthSpec {
            flows: vec![f(vec![(0.0, 0.0), (10.0, 0.0)], 20.0), f(vec![(0.0, 10.0), (0.0, 0.0)], 60.0)],
            noise: 0.1,
            frame_dt: 1.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let syn = generate_synthetic(&spec, &mut rng).unwrap();
        let opts = LoadOptions { grid_rows: 4, grid_cols: 4, segments: 2, ..Default::default() };
        let ds = tokenize_raw(RawLoad { trajectories: syn.trajectories, rejections: vec![] }, &opts, Path::new("mem")).unwrap();
        let config = FitConfig { burn_in: 20, max_iters: 20, ..Default::default() };
        let out = fit(&ds.observations(), &ds.manifest.codebook, &config, &mut rng).unwrap();
        let associations = ds
            .trajectories
            .iter()
            .map(|t| Association { traj_id: t.traj_id, flow: classify(&out.posterior, t).unwrap().flow })
            .collect();
        let model = PosteriorModel {
            posterior: out.posterior,
            load: opts,
            config,
            seed: Some(4),
            diagnostics: Some(out.diagnostics),
            associations,
        };
        (model, ds.trajectories)
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let (pm, trajs) = fitted();
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
        let model = Model::Posterior(Box::new(pm));
        save_model(&model, &a).unwrap();
        let back = load_model(&a).unwrap();
        assert_eq!(back, model);
        save_model(&back, &b).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
        let (p0, p1) = (model.into_posterior().unwrap().posterior, back.into_posterior().unwrap().posterior);
        for t in &trajs {
            assert_eq!(classify(&p0, t).unwrap(), classify(&p1, t).unwrap());
        }
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let (pm, _) = fitted();
        let text = to_json(&Model::Posterior(Box::new(pm))).unwrap();
        for cut in [0, 1, text.len() / 2, text.len() - 3] {
            assert!(matches!(from_json(&text[..cut]), Err(Error::Corrupt(_))), "cut {cut}");
        }
    }

    #[test]
    fn wrong_version_and_format() {
        let (pm, _) = fitted();
        let text = to_json(&Model::Posterior(Box::new(pm))).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["version"] = 7.into();
        match from_json(&v.to_string()) {
            Err(Error::VersionMismatch { found, expected }) => assert_eq!((found, expected), (7, VERSION)),
            other => panic!("{other:?}"),
        }
        v["format"] = "something-else".into();
        assert!(matches!(from_json(&v.to_string()), Err(Error::Corrupt(_))));
    }

    #[test]
    fn invalid_posterior_is_corrupt() {
        let (mut pm, _) = fitted();
        pm.posterior.flows[0].weight += 0.5;
        let text = to_json(&Model::Posterior(Box::new(pm))).unwrap();
        assert!(matches!(from_json(&text), Err(Error::Corrupt(_))));
    }

    #[test]
    fn kind_mismatch() {
        let (pm, _) = fitted();
        let m = Model::Posterior(Box::new(pm));
        assert_eq!(m.kind(), "posterior");
        assert!(matches!(m.into_scenario(), Err(Error::InvalidInput(_))));
    }
}
