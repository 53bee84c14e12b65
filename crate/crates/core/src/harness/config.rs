//! Experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grad::{EstimatorKind, LrSchedule, Schedule};
use crate::models::hh::HhParams;
use crate::models::slds::SldsSpec;
use crate::smc::{ResampleScheme, ResampleTrigger};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub model: ModelConfig,
    pub method: Method,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub smc: SmcSection,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub twist: Option<TwistSection>,
    #[serde(default)]
    pub evaluation: EvaluationSection,
    #[serde(default)]
    pub seeds: Seeds,
    /// Parameter file from an earlier run (`params.json`) to start from.
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Nasx,
    Nasmc,
    Rws,
    BpfEval,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Nasx => "nasx",
            Method::Nasmc => "nasmc",
            Method::Rws => "rws",
            Method::BpfEval => "bpf-eval",
        }
    }

    pub fn estimator(self) -> Option<EstimatorKind> {
        match self {
            Method::Nasx => Some(EstimatorKind::Nasx),
            Method::Nasmc => Some(EstimatorKind::Nasmc),
            Method::Rws => Some(EstimatorKind::Rws),
            Method::BpfEval => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    Lgssm {
        #[serde(default = "one")]
        sigma_x2: f64,
        #[serde(default = "one")]
        sigma_y2: f64,
        #[serde(rename = "T", default = "ten")]
        horizon: usize,
    },
    Slds {
        /// Regime count of the built-in example system.
        #[serde(rename = "K", default = "two")]
        k: usize,
        #[serde(rename = "D", default = "two")]
        dim_y: usize,
        #[serde(rename = "T", default = "eight")]
        horizon: usize,
        /// Full specification; overrides `K`, `D`, `T`.
        #[serde(default)]
        spec: Option<SldsSpec>,
        /// Perturbation added to `b` and `r` before training, so model
        /// learning starts away from the data-generating values.
        #[serde(default)]
        init_offset: f64,
    },
    Hh {
        #[serde(default)]
        params: HhParams,
        #[serde(default = "fifty")]
        t_ms: f64,
        #[serde(default)]
        stimulus: StimulusConfig,
    },
}

impl ModelConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelConfig::Lgssm { .. } => "lgssm",
            ModelConfig::Slds { .. } => "slds",
            ModelConfig::Hh { .. } => "hh",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StimulusConfig {
    Pulse { onset_ms: f64, offset_ms: f64, amplitude: f64 },
    File { path: PathBuf },
}

impl Default for StimulusConfig {
    fn default() -> Self {
        StimulusConfig::Pulse {
            onset_ms: 10.0,
            offset_ms: 40.0,
            amplitude: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub num_sequences: usize,
    /// JSON file with `{"sequences": [...]}` or `{"y": [...]}`.
    pub path: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            num_sequences: 1,
            path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmcSection {
    pub num_particles: usize,
    pub resample_scheme: ResampleScheme,
    pub resample_trigger: ResampleTrigger,
}

impl Default for SmcSection {
    fn default() -> Self {
        SmcSection {
            num_particles: 4,
            resample_scheme: ResampleScheme::default(),
            resample_trigger: ResampleTrigger::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub outer_rounds: usize,
    pub twist_steps: usize,
    pub proposal_steps: usize,
    pub schedule: Schedule,
    pub proposal_lr: LrSchedule,
    /// Absent or null freezes the model.
    pub model_lr: Option<LrSchedule>,
    pub log_every: usize,
}

impl Default for TrainingSection {
    fn default() -> Self {
        TrainingSection {
            outer_rounds: 10,
            twist_steps: 100,
            proposal_steps: 100,
            schedule: Schedule::Alternating,
            proposal_lr: LrSchedule::constant(1e-3),
            model_lr: None,
            log_every: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TwistSection {
    pub batch_size: usize,
    pub lr: LrSchedule,
    /// Global twist step from which iterates are averaged.
    pub average_from: Option<usize>,
}

impl Default for TwistSection {
    fn default() -> Self {
        TwistSection {
            batch_size: 32,
            lr: LrSchedule::constant(1e-3),
            average_from: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalProposal {
    /// The trained (or checkpointed) proposal with filtering targets.
    Learned,
    /// The model transition.
    Bootstrap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationSection {
    pub particle_counts: Vec<usize>,
    pub num_seeds: usize,
    /// Defaults to `bootstrap` for `bpf-eval` and `learned` otherwise.
    pub proposal: Option<EvalProposal>,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        EvaluationSection {
            particle_counts: vec![4, 8, 16, 32, 64, 128, 256],
            num_seeds: 20,
            proposal: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    pub data: u64,
    pub train: u64,
    pub eval: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds {
            data: 0,
            train: 1,
            eval: 2,
        }
    }
}

fn one() -> f64 {
    1.0
}
fn ten() -> usize {
    10
}
fn two() -> usize {
    2
}
fn eight() -> usize {
    8
}
fn fifty() -> f64 {
    50.0
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config; relative paths inside it are resolved
    /// against the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.checkpoint.as_mut() {
            fix(p);
        }
        if let Some(p) = self.data.path.as_mut() {
            fix(p);
        }
        if let ModelConfig::Hh {
            stimulus: StimulusConfig::File { path },
            ..
        } = &mut self.model
        {
            fix(path);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: &str| Err(Error::Config(format!("`{field}`: {msg}")));
        match (&self.model, self.method) {
            (ModelConfig::Hh { .. }, m) if m != Method::BpfEval => {
                return bad("method", &format!("`{}` is not available for the hh model; use bpf-eval", m.as_str()))
            }
            (ModelConfig::Lgssm { sigma_x2, sigma_y2, horizon }, _) => {
                if !(*sigma_x2 > 0.0 && *sigma_y2 > 0.0) {
                    return bad("model.sigma_x2/sigma_y2", "must be positive");
                }
                if *horizon == 0 {
                    return bad("model.T", "must be >= 1");
                }
            }
            (ModelConfig::Slds { k, dim_y, horizon, spec: None, .. }, _) if *k == 0 || *dim_y == 0 || *horizon == 0 => {
                return bad("model.K/D/T", "must be >= 1")
            }
            (ModelConfig::Hh { params, t_ms, stimulus }, _) => {
                params.validate().map_err(|e| Error::Config(format!("`model.params`: {e}")))?;
                if !(*t_ms > 0.0) {
                    return bad("model.t_ms", "must be positive");
                }
                if let StimulusConfig::File { path } = stimulus {
                    if !path.exists() {
                        return bad("model.stimulus.path", &format!("{} does not exist", path.display()));
                    }
                }
            }
            _ => {}
        }
        if self.method == Method::Nasx && self.twist.is_none() {
            return bad("twist", "method nasx requires a twist section");
        }
        if self.smc.num_particles == 0 {
            return bad("smc.num_particles", "must be >= 1");
        }
        if let ResampleTrigger::EssFraction(tau) = self.smc.resample_trigger {
            if !(tau > 0.0 && tau <= 1.0) {
                return bad("smc.resample_trigger", "ess fraction must lie in (0, 1]");
            }
        }
        if self.evaluation.particle_counts.iter().any(|&n| n == 0) {
            return bad("evaluation.particle_counts", "entries must be >= 1");
        }
        if self.evaluation.num_seeds == 0 {
            return bad("evaluation.num_seeds", "must be >= 1");
        }
        if self.data.path.is_none() && self.data.num_sequences == 0 {
            return bad("data.num_sequences", "must be >= 1");
        }
        if let Some(p) = &self.data.path {
            if !p.exists() {
                return bad("data.path", &format!("{} does not exist", p.display()));
            }
        }
        if let Some(p) = &self.checkpoint {
            if !p.exists() {
                return bad("checkpoint", &format!("{} does not exist", p.display()));
            }
        }
        if let Some(t) = &self.twist {
            if t.batch_size == 0 {
                return bad("twist.batch_size", "must be >= 1");
            }
        }
        Ok(())
    }

    pub fn eval_proposal(&self) -> EvalProposal {
        self.evaluation.proposal.unwrap_or(match self.method {
            Method::BpfEval => EvalProposal::Bootstrap,
            _ => EvalProposal::Learned,
        })
    }

    /// Canonical JSON used for hashing.
    pub fn canonical_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}
