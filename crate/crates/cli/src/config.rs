//! Flag and config-file resolution.
//!
//! Every pipeline setting can come from a flag or from a TOML config file
//! given with `--config`. Flags win over the file, and the file wins over
//! built-in defaults. Config keys are the flag names without dashes
//! (`backend-coarse = "oracle-coarse"`, `q = 3`); underscores work too.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use actloc::backends::{OracleParams, SegBackendSpec};
use actloc::features::{BlockSet, ExtractorSpec};
use actloc::pipeline::{MapChoice, PipelineParams};
use clap::Args;

use crate::CliError;

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// TOML file of settings; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Dataset directory.
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    /// Model bundle path.
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    /// Output directory (or file, for `train`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// `file:DIR`, `oracle-coarse`, `oracle-fine`, `oracle-exact`, optionally with `:sigma=..,blur=..,stride=..,confusion=..`.
    #[arg(long, global = true)]
    pub backend_coarse: Option<String>,
    #[arg(long, global = true)]
    pub backend_fine: Option<String>,
    /// Maximum number of refinement windows.
    #[arg(long, global = true)]
    pub m: Option<usize>,
    /// Minimum peak separation in pixels.
    #[arg(long, global = true)]
    pub p: Option<f64>,
    /// Window side as a fraction of the longer image side.
    #[arg(long, global = true)]
    pub window_frac: Option<f64>,
    /// Local maxima per object channel for Otsu regions.
    #[arg(long, global = true)]
    pub l: Option<usize>,
    /// Candidates kept per image after ranking.
    #[arg(long, global = true)]
    pub q: Option<usize>,
    /// SVM regularization.
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: logical CPUs).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Feature blocks among G,Face,C,F,Obj (also O, MO).
    #[arg(long, global = true)]
    pub ablate: Option<String>,
    /// `builtin` or `external:DIM:COMMAND`.
    #[arg(long, global = true)]
    pub extractor: Option<String>,
    /// Map candidates are generated from: `fine` or `coarse`.
    #[arg(long, global = true)]
    pub candidate_map: Option<String>,
}

/// Fully resolved settings.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub coarse: SegBackendSpec,
    pub fine: SegBackendSpec,
    pub params: PipelineParams,
    pub jobs: Option<usize>,
    pub ablate: Option<String>,
    pub extractor: ExtractorSpec,
}

struct FileValues(toml::Table);

impl FileValues {
    fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(FileValues(toml::Table::new())) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let table: toml::Table =
            text.parse().map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))?;
        for key in table.keys() {
            if !KEYS.contains(&key.replace('_', "-").as_str()) {
                return Err(CliError::Usage(format!("unknown config key `{key}`")));
            }
        }
        Ok(FileValues(table))
    }

    fn get(&self, key: &str) -> Option<String> {
        let v = self.0.get(key).or_else(|| self.0.get(&key.replace('-', "_")))?;
        Some(match v {
            toml::Value::String(s) => s.clone(),
            other => other.to_string(),
        })
    }
}

const KEYS: &[&str] = &[
    "data",
    "model",
    "out",
    "backend-coarse",
    "backend-fine",
    "m",
    "p",
    "window-frac",
    "l",
    "q",
    "lambda",
    "seed",
    "jobs",
    "ablate",
    "extractor",
    "candidate-map",
];

fn pick<T: FromStr>(flag: Option<T>, file: &FileValues, key: &str) -> Result<Option<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    if flag.is_some() {
        return Ok(flag);
    }
    match file.get(key) {
        None => Ok(None),
        Some(s) => s.parse().map(Some).map_err(|e| CliError::Usage(format!("config `{key}`: {e}"))),
    }
}

fn parse<T: FromStr>(s: &str, what: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e| CliError::Usage(format!("--{what}: {e}")))
}

impl RunConfig {
    pub fn resolve(c: &Common) -> Result<Self, CliError> {
        let f = FileValues::load(c.config.as_deref())?;
        let mut params = PipelineParams::default();
        if let Some(m) = pick(c.m, &f, "m")? {
            params.refine.m = m;
        }
        if let Some(p) = pick(c.p, &f, "p")? {
            params.refine.p = p;
        }
        if let Some(w) = pick(c.window_frac, &f, "window-frac")? {
            params.refine.window_side_fraction = w;
        }
        if let Some(l) = pick(c.l, &f, "l")? {
            params.candidates.l = l;
        }
        if let Some(q) = pick(c.q, &f, "q")? {
            params.q = q;
        }
        if let Some(lambda) = pick(c.lambda, &f, "lambda")? {
            params.svm.lambda = lambda;
        }
        if let Some(seed) = pick(c.seed, &f, "seed")? {
            params.seed = seed;
        }
        if let Some(map) = pick(c.candidate_map.clone(), &f, "candidate-map")? {
            params.candidate_map = parse::<MapChoice>(&map, "candidate-map")?;
        }
        params.validate().map_err(|e| CliError::Usage(e.to_string()))?;

        let coarse = match pick(c.backend_coarse.clone(), &f, "backend-coarse")? {
            Some(s) => parse(&s, "backend-coarse")?,
            None => SegBackendSpec::Oracle(OracleParams::coarse_default()),
        };
        let fine = match pick(c.backend_fine.clone(), &f, "backend-fine")? {
            Some(s) => parse(&s, "backend-fine")?,
            None => SegBackendSpec::Oracle(OracleParams::fine_default()),
        };
        let extractor = match pick(c.extractor.clone(), &f, "extractor")? {
            Some(s) => parse(&s, "extractor")?,
            None => ExtractorSpec::Builtin,
        };
        let ablate = pick(c.ablate.clone(), &f, "ablate")?;
        if let Some(a) = &ablate {
            parse::<BlockSet>(a, "ablate")?;
        }
        let jobs = pick(c.jobs, &f, "jobs")?;
        if jobs == Some(0) {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        Ok(RunConfig {
            data: pick(c.data.clone(), &f, "data")?,
            model: pick(c.model.clone(), &f, "model")?,
            out: pick(c.out.clone(), &f, "out")?,
            coarse,
            fine,
            params,
            jobs,
            ablate,
            extractor,
        })
    }

    pub fn data(&self) -> Result<&Path, CliError> {
        self.data.as_deref().ok_or_else(|| CliError::Usage("--data is required".into()))
    }

    pub fn model(&self) -> Result<&Path, CliError> {
        self.model.as_deref().ok_or_else(|| CliError::Usage("--model is required".into()))
    }

    pub fn out(&self) -> Result<&Path, CliError> {
        self.out.as_deref().ok_or_else(|| CliError::Usage("--out is required".into()))
    }

    /// Settings echoed into reports.
    pub fn summary(&self) -> serde_json::Value {
        serde_json::json!({
            "backend_coarse": self.coarse.to_string(),
            "backend_fine": self.fine.to_string(),
            "extractor": self.extractor.to_string(),
            "params": self.params,
        })
    }
}
