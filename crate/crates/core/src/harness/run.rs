//! Experiment runner: data, training, bound evaluation and artifacts.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grad::{train_nasx, MetricRow, TrainConfig};
use crate::models::hh::{simulate_trace, HhModel, Stimulus};
use crate::models::lgssm::{kalman, LgssmParams, MeanFieldGaussian};
use crate::models::slds::{enumerate_posterior, Slds, SldsMeanField, SldsSpec, SldsTwist, ENUMERATION_BUDGET};
use crate::smc::SmcConfig;
use crate::ssm::{Bootstrap, ModelGradient, ParamVec, Parameterized, ProposalGradient, RngStream, StateSpaceModel};
use crate::twist::{DreTwist, QuadraticTwist, TwistTrainConfig};

use super::bounds::{bound_sweep, write_bounds_csv, BoundRow};
use super::config::{EvalProposal, ExperimentConfig, Method, ModelConfig, StimulusConfig};

pub const METRICS_HEADER: &str = "step,metric,value";
pub const MANIFEST_FORMAT: &str = "nasx-manifest/1";
pub const PARAMS_FORMAT: &str = "nasx-run-params/1";

/// What a run or sweep produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub files: Vec<String>,
    pub bounds: Vec<BoundRow>,
    pub config_sha256: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Train (unless `bpf-eval`), then evaluate.
    Run,
    /// Evaluate only, starting from the checkpoint if one is given.
    Sweep,
}

/// Resolves `output_dir` against `root` when it is relative.
pub fn output_path(cfg: &ExperimentConfig, root: Option<&Path>) -> PathBuf {
    match root {
        Some(r) if cfg.output_dir.is_relative() => r.join(&cfg.output_dir),
        _ => cfg.output_dir.clone(),
    }
}

pub fn config_hash(cfg: &ExperimentConfig) -> Result<String> {
    let digest = Sha256::digest(cfg.canonical_json()?.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

pub fn run_experiment(cfg: &ExperimentConfig, root: Option<&Path>) -> Result<RunSummary> {
    execute(cfg, root, Mode::Run)
}

pub fn run_sweep(cfg: &ExperimentConfig, root: Option<&Path>) -> Result<RunSummary> {
    execute(cfg, root, Mode::Sweep)
}

struct Artifacts {
    dir: PathBuf,
    files: Vec<String>,
}

impl Artifacts {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        self.files.push(name.to_string());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    fn json(&mut self, name: &str, v: &Value) -> Result<()> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, v)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }
}

fn execute(cfg: &ExperimentConfig, root: Option<&Path>, mode: Mode) -> Result<RunSummary> {
    cfg.validate()?;
    let dir = output_path(cfg, root);
    std::fs::create_dir_all(&dir)?;
    let mut art = Artifacts { dir: dir.clone(), files: Vec::new() };
    let hash = config_hash(cfg)?;
    let checkpoint = cfg.checkpoint.as_deref().map(read_checkpoint).transpose()?;

    let outcome = match &cfg.model {
        ModelConfig::Lgssm { sigma_x2, sigma_y2, horizon } => {
            let model = LgssmParams::new(*sigma_x2, *sigma_y2, *horizon)?;
            let data: Vec<Vec<f64>> = match &cfg.data.path {
                Some(p) => read_sequences(p)?,
                None => generate(&model, *horizon, cfg),
            };
            let oracle: Vec<Value> = data
                .iter()
                .map(|ys| Ok(serde_json::to_value(kalman(&model, ys)?)?))
                .collect::<Result<_>>()?;
            art.json("oracle.json", &json!({ "model": "lgssm", "sequences": oracle }))?;
            let proposals = data.iter().map(|ys| MeanFieldGaussian::standard(ys.len())).collect();
            let twist = QuadraticTwist::new(*horizon);
            pipeline(cfg, mode, &mut art, model, proposals, twist, &data, checkpoint.as_ref())
        }
        ModelConfig::Slds { k, dim_y, horizon, spec, init_offset } => {
            let spec = spec.clone().unwrap_or_else(|| SldsSpec::example(*k, *dim_y, *horizon));
            let truth = Slds::new(spec.clone())?;
            let t = spec.horizon;
            let data: Vec<Vec<Vec<f64>>> = match &cfg.data.path {
                Some(p) => read_sequences(p)?,
                None => generate(&truth, t, cfg),
            };
            let paths = (truth.num_regimes() as u128).checked_pow(t as u32).unwrap_or(u128::MAX);
            if !truth.is_recurrent() && paths <= ENUMERATION_BUDGET {
                let oracle: Vec<Value> = data
                    .iter()
                    .map(|ys| Ok(serde_json::to_value(enumerate_posterior(&truth, ys)?)?))
                    .collect::<Result<_>>()?;
                art.json("oracle.json", &json!({ "model": "slds", "sequences": oracle }))?;
            }
            let mut model = truth.clone();
            if *init_offset != 0.0 {
                let v: Vec<f64> = model.values().iter().map(|x| x + init_offset).collect();
                model.set_values(&v)?;
            }
            let kk = truth.num_regimes();
            let proposals = data.iter().map(|ys| SldsMeanField::new(ys.len(), kk)).collect();
            let twist = SldsTwist::new(t, kk, truth.dim_y());
            pipeline(cfg, mode, &mut art, model, proposals, twist, &data, checkpoint.as_ref())
        }
        ModelConfig::Hh { params, t_ms, stimulus } => {
            let stim = match stimulus {
                StimulusConfig::Pulse { onset_ms, offset_ms, amplitude } => Stimulus::pulse(*onset_ms, *offset_ms, *amplitude),
                StimulusConfig::File { path } => Stimulus::from_csv(BufReader::new(File::open(path)?))?,
            };
            stim.write_csv(art.create("stimulus.csv")?)?;
            let model = HhModel::new(params.clone(), stim.clone(), *t_ms)?;
            let mut data = Vec::with_capacity(cfg.data.num_sequences);
            for i in 0..cfg.data.num_sequences {
                let mut rng = RngStream::new(cfg.seeds.data, i as u64);
                let tr = simulate_trace(params, &stim, *t_ms, &mut rng)?;
                tr.write_csv(art.create(&format!("trace_{i}.csv"))?)?;
                data.push(tr.obs);
            }
            evaluate_only(cfg, &mut art, &model, &data)
        }
    };

    let bounds = match outcome {
        Ok(b) => b,
        Err(e) => {
            write_manifest(cfg, &mut art, &hash, Some(&e))?;
            return Err(e);
        }
    };
    write_manifest(cfg, &mut art, &hash, None)?;
    Ok(RunSummary {
        output_dir: dir,
        files: art.files,
        bounds,
        config_sha256: hash,
    })
}

fn generate<M: StateSpaceModel>(model: &M, horizon: usize, cfg: &ExperimentConfig) -> Vec<Vec<M::Obs>> {
    (0..cfg.data.num_sequences)
        .map(|i| {
            let mut rng = RngStream::new(cfg.seeds.data, i as u64);
            model.sample_joint(horizon, &mut rng).1
        })
        .collect()
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SequenceFile<O> {
    Many { sequences: Vec<Vec<O>> },
    One { y: Vec<O> },
}

fn read_sequences<O: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<Vec<O>>> {
    let f: SequenceFile<O> = serde_json::from_reader(BufReader::new(File::open(path)?))
        .map_err(|e| Error::Config(format!("`data.path` {}: {e}", path.display())))?;
    Ok(match f {
        SequenceFile::Many { sequences } => sequences,
        SequenceFile::One { y } => vec![y],
    })
}

struct Checkpoint {
    model: Option<ParamVec>,
    proposals: Vec<ParamVec>,
    twist: Option<ParamVec>,
}

fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let v: Value = serde_json::from_reader(BufReader::new(File::open(path)?))
        .map_err(|e| Error::Config(format!("`checkpoint` {}: {e}", path.display())))?;
    let parse = |v: &Value| ParamVec::from_json(&v.to_string());
    Ok(Checkpoint {
        model: v.get("model").map(parse).transpose()?,
        proposals: v
            .get("proposals")
            .and_then(Value::as_array)
            .map(|a| a.iter().map(parse).collect::<Result<Vec<_>>>())
            .transpose()?
            .unwrap_or_default(),
        twist: v.get("twist").filter(|t| !t.is_null()).map(parse).transpose()?,
    })
}

fn param_value(p: &impl Parameterized) -> Result<Value> {
    Ok(serde_json::from_str(&p.params().to_json()?)?)
}

#[allow(clippy::too_many_arguments)]
fn pipeline<M, P, Tw>(
    cfg: &ExperimentConfig,
    mode: Mode,
    art: &mut Artifacts,
    mut model: M,
    mut proposals: Vec<P>,
    mut twist: Tw,
    data: &[Vec<M::Obs>],
    checkpoint: Option<&Checkpoint>,
) -> Result<Vec<BoundRow>>
where
    M: ModelGradient,
    P: ProposalGradient<M>,
    Tw: DreTwist<M>,
{
    if let Some(ck) = checkpoint {
        if let Some(m) = &ck.model {
            model.load_params(m)?;
        }
        if ck.proposals.len() == proposals.len() {
            for (p, v) in proposals.iter_mut().zip(&ck.proposals) {
                p.load_params(v)?;
            }
        }
        if let Some(t) = &ck.twist {
            twist.load_params(t)?;
        }
    }

    let mut metrics = Vec::new();
    let mut trained = Ok(());
    if mode == Mode::Run {
        if let Some(est) = cfg.method.estimator() {
            let tc = train_config(cfg, est, model.horizon());
            let mut rng = RngStream::new(cfg.seeds.train, 0);
            let tw = (cfg.method == Method::Nasx).then_some(&mut twist);
            trained = train_nasx(&mut model, &mut proposals, tw, data, &tc, &mut rng, &mut metrics, |_, _, _| Vec::new());
        }
        write_metrics(art, &metrics)?;
    }

    let twist_out = if cfg.method == Method::Nasx { param_value(&twist)? } else { Value::Null };
    art.json(
        "params.json",
        &json!({
            "format": PARAMS_FORMAT,
            "model": param_value(&model)?,
            "proposals": proposals.iter().map(param_value).collect::<Result<Vec<_>>>()?,
            "twist": twist_out,
        }),
    )?;
    trained?;

    let base = SmcConfig::filtering(1)
        .with_trigger(cfg.smc.resample_trigger)
        .with_scheme(cfg.smc.resample_scheme);
    let ns = &cfg.evaluation.particle_counts;
    let mut rows = Vec::new();
    for (i, ys) in data.iter().enumerate() {
        let r = match cfg.eval_proposal() {
            EvalProposal::Learned => bound_sweep(&model, ys, &proposals[i], None, &base, ns, cfg.evaluation.num_seeds, cfg.seeds.eval, i)?,
            EvalProposal::Bootstrap => bound_sweep(&model, ys, &Bootstrap, None, &base, ns, cfg.evaluation.num_seeds, cfg.seeds.eval, i)?,
        };
        rows.extend(r);
    }
    write_bounds_csv(&rows, art.create("bounds.csv")?)?;
    Ok(rows)
}

fn evaluate_only<M: StateSpaceModel>(cfg: &ExperimentConfig, art: &mut Artifacts, model: &M, data: &[Vec<M::Obs>]) -> Result<Vec<BoundRow>> {
    write_metrics(art, &[])?;
    let base = SmcConfig::filtering(1)
        .with_trigger(cfg.smc.resample_trigger)
        .with_scheme(cfg.smc.resample_scheme);
    let mut rows = Vec::new();
    for (i, ys) in data.iter().enumerate() {
        rows.extend(bound_sweep(model, ys, &Bootstrap, None, &base, &cfg.evaluation.particle_counts, cfg.evaluation.num_seeds, cfg.seeds.eval, i)?);
    }
    write_bounds_csv(&rows, art.create("bounds.csv")?)?;
    Ok(rows)
}

pub fn train_config(cfg: &ExperimentConfig, est: crate::grad::EstimatorKind, horizon: usize) -> TrainConfig {
    let t = &cfg.training;
    TrainConfig {
        estimator: est,
        num_particles: cfg.smc.num_particles,
        resample_trigger: cfg.smc.resample_trigger,
        resample_scheme: cfg.smc.resample_scheme,
        outer_rounds: t.outer_rounds,
        twist_steps: t.twist_steps,
        proposal_steps: t.proposal_steps,
        schedule: t.schedule.clone(),
        proposal_lr: t.proposal_lr.clone(),
        model_lr: t.model_lr.clone(),
        twist: cfg.twist.as_ref().map(|tw| TwistTrainConfig {
            batch_size: tw.batch_size,
            horizon,
            lr: tw.lr.clone(),
            average_from: tw.average_from,
        }),
        log_every: t.log_every,
    }
}

fn write_metrics(art: &mut Artifacts, rows: &[MetricRow]) -> Result<()> {
    let mut sorted: Vec<&MetricRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.step.cmp(&b.step).then_with(|| a.metric.cmp(&b.metric)));
    let mut w = art.create("metrics.csv")?;
    writeln!(w, "{METRICS_HEADER}")?;
    for r in sorted {
        writeln!(w, "{},{},{}", r.step, r.metric, r.value)?;
    }
    w.flush()?;
    Ok(())
}

fn write_manifest(cfg: &ExperimentConfig, art: &mut Artifacts, hash: &str, error: Option<&Error>) -> Result<()> {
    let mut files = art.files.clone();
    files.push("manifest.json".into());
    let v = json!({
        "format": MANIFEST_FORMAT,
        "name": cfg.name,
        "model": cfg.model.kind(),
        "method": cfg.method.as_str(),
        "config_sha256": hash,
        "seeds": {
            "data": cfg.seeds.data,
            "train": cfg.seeds.train,
            "eval": cfg.seeds.eval,
            "eval_replicates": (0..cfg.evaluation.num_seeds).collect::<Vec<_>>(),
        },
        "status": match error { None => "ok".to_string(), Some(e) => format!("error: {e}") },
        "files": files,
    });
    art.json("manifest.json", &v)
}

/// Summary of an output directory, as printed by the `report` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub manifest: Value,
    pub bounds: Vec<BoundRow>,
    /// Last recorded value of every metric.
    pub final_metrics: Vec<(String, usize, f64)>,
}

pub fn read_report(dir: &Path) -> Result<Report> {
    let manifest: Value = serde_json::from_reader(BufReader::new(File::open(dir.join("manifest.json"))?))?;
    let mut bounds = Vec::new();
    let text = std::fs::read_to_string(dir.join("bounds.csv"))?;
    for line in text.lines().skip(1).filter(|l| !l.is_empty()) {
        let c: Vec<&str> = line.split(',').collect();
        let num = |i: usize| -> Result<f64> {
            c.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Config(format!("bounds.csv: malformed line `{line}`")))
        };
        bounds.push(BoundRow {
            sequence: num(0)? as usize,
            n_particles: num(1)? as usize,
            num_seeds: num(2)? as usize,
            mean_log_z: num(3)?,
            se_log_z: num(4)?,
            mean_log_z_per_step: num(5)?,
            se_log_z_per_step: num(6)?,
        });
    }
    let mut final_metrics: Vec<(String, usize, f64)> = Vec::new();
    if let Ok(text) = std::fs::read_to_string(dir.join("metrics.csv")) {
        for line in text.lines().skip(1) {
            let c: Vec<&str> = line.split(',').collect();
            if c.len() != 3 {
                continue;
            }
            let (Ok(step), Ok(v)) = (c[0].parse::<usize>(), c[2].parse::<f64>()) else { continue };
            match final_metrics.iter_mut().find(|m| m.0 == c[1]) {
                Some(m) if m.1 <= step => *m = (c[1].to_string(), step, v),
                Some(_) => {}
                None => final_metrics.push((c[1].to_string(), step, v)),
            }
        }
    }
    final_metrics.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(Report { manifest, bounds, final_metrics })
}

