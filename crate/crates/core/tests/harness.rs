//! Output schema, example configs and bound-sweep properties.

use std::path::{Path, PathBuf};

use nasx::harness::{bound_sweep, read_report, run_experiment, run_sweep, ExperimentConfig};
use nasx::models::lgssm::{kalman, LgssmParams};
use nasx::smc::SmcConfig;
use nasx::ssm::{Bootstrap, RngStream, StateSpaceModel};
use serde_json::{json, Value};

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn golden(name: &str) -> String {
    std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)).unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

/// Replaces every leaf by its JSON type and every array by its first element.
fn shape(v: &Value) -> Value {
    match v {
        Value::Object(m) => Value::Object(m.iter().map(|(k, x)| (k.clone(), shape(x))).collect()),
        Value::Array(a) => Value::Array(a.first().map(shape).into_iter().collect()),
        Value::Null => json!("null"),
        Value::Bool(_) => json!("boolean"),
        Value::Number(n) if n.is_f64() => json!("number"),
        Value::Number(_) => json!("integer"),
        Value::String(_) => json!("string"),
    }
}

const SMOKE: &str = r#"{"name":"golden","model":{"kind":"lgssm","T":6},"method":"nasx",
    "data":{"num_sequences":2},"smc":{"num_particles":4},"twist":{"batch_size":16},
    "training":{"outer_rounds":2,"twist_steps":20,"proposal_steps":20,"log_every":5},
    "evaluation":{"particle_counts":[4,8],"num_seeds":3},"output_dir":"out"}"#;

#[test]
fn artifacts_match_golden_structure() {
    let cfg = ExperimentConfig::from_json(SMOKE).unwrap();
    let root = tempfile::tempdir().unwrap();
    let summary = run_experiment(&cfg, Some(root.path())).unwrap();
    let dir = &summary.output_dir;

    let first_line = |f: &str| std::fs::read_to_string(dir.join(f)).unwrap().lines().next().unwrap().to_string() + "\n";
    assert_eq!(first_line("metrics.csv"), golden("metrics_header.csv"));
    assert_eq!(first_line("bounds.csv"), golden("bounds_header.csv"));

    let mut manifest = read_json(&dir.join("manifest.json"));
    let hash = manifest["config_sha256"].as_str().unwrap().to_string();
    assert_eq!(hash.len(), 64);
    assert!(hash.chars().all(|c| c.is_ascii_hexdigit()));
    assert_eq!(hash, summary.config_sha256);
    manifest["config_sha256"] = json!("<sha256>");
    let expected: Value = serde_json::from_str(&golden("manifest.json")).unwrap();
    assert_eq!(manifest, expected);

    for (file, gold) in [("params.json", "params_shape.json"), ("oracle.json", "oracle_shape.json")] {
        let got = shape(&read_json(&dir.join(file)));
        let want: Value = serde_json::from_str(&golden(gold)).unwrap();
        assert_eq!(got, want, "{file}: {}", serde_json::to_string_pretty(&got).unwrap());
    }

    let bounds = std::fs::read_to_string(dir.join("bounds.csv")).unwrap();
    let keys: Vec<(usize, usize)> = bounds
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            assert_eq!(f.len(), 7);
            (f[0].parse().unwrap(), f[1].parse().unwrap())
        })
        .collect();
    assert_eq!(keys, vec![(0, 4), (0, 8), (1, 4), (1, 8)]);

    let metrics = std::fs::read_to_string(dir.join("metrics.csv")).unwrap();
    let steps: Vec<usize> = metrics.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert!(steps.windows(2).all(|w| w[0] <= w[1]), "metrics rows not sorted by step");
}

#[test]
fn every_artifact_is_reproducible() {
    let cfg = ExperimentConfig::from_json(SMOKE).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let sa = run_experiment(&cfg, Some(a.path())).unwrap();
    let sb = run_experiment(&cfg, Some(b.path())).unwrap();
    assert_eq!(sa.files, sb.files);
    for f in &sa.files {
        let x = std::fs::read(sa.output_dir.join(f)).unwrap();
        let y = std::fs::read(sb.output_dir.join(f)).unwrap();
        assert!(x == y, "{f} differs between runs");
    }
}

#[test]
fn sweep_from_checkpoint_reproduces_run_bounds() {
    let cfg = ExperimentConfig::from_json(SMOKE).unwrap();
    let root = tempfile::tempdir().unwrap();
    let run = run_experiment(&cfg, Some(root.path())).unwrap();

    let mut sweep_cfg = cfg.clone();
    sweep_cfg.checkpoint = Some(run.output_dir.join("params.json"));
    sweep_cfg.output_dir = "sweep".into();
    let sweep = run_sweep(&sweep_cfg, Some(root.path())).unwrap();
    assert_eq!(run.bounds, sweep.bounds);

    let report = read_report(&sweep.output_dir).unwrap();
    assert_eq!(report.bounds, sweep.bounds);
    assert!(report.final_metrics.is_empty());
}

#[test]
fn example_configs_load_and_validate() {
    let dir = repo_root().join("configs");
    let mut count = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "json") {
            ExperimentConfig::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            count += 1;
        }
    }
    assert!(count >= 5, "only {count} example configs");
}

/// Every key the config serialises to is declared in the published schema.
#[test]
fn schema_declares_every_config_field() {
    let schema = read_json(&repo_root().join("schema/experiment.schema.json"));
    let props = &schema["properties"];
    let models = schema["$defs"]["model"]["oneOf"].as_array().unwrap();
    for kind in ["lgssm", "slds", "hh"] {
        let cfg = ExperimentConfig::from_json(&format!(
            r#"{{"model":{{"kind":"{kind}"}},"method":"bpf-eval","twist":{{}},"output_dir":"o"}}"#
        ))
        .unwrap();
        let v = serde_json::to_value(&cfg).unwrap();
        for (key, section) in v.as_object().unwrap() {
            assert!(props.get(key).is_some(), "top-level `{key}` missing from schema");
            if key == "model" {
                let branch = models.iter().find(|b| b["properties"]["kind"]["const"] == kind).unwrap();
                for k in section.as_object().unwrap().keys() {
                    assert!(branch["properties"].get(k).is_some(), "model.{k} ({kind}) missing from schema");
                }
            } else if let Some(obj) = section.as_object() {
                for k in obj.keys() {
                    assert!(props[key]["properties"].get(k).is_some(), "{key}.{k} missing from schema");
                }
            }
        }
    }
}

#[test]
fn bootstrap_bounds_rise_with_n_and_stay_below_log_z() {
    let model = LgssmParams::new(1.0, 1.0, 10).unwrap();
    let ys = model.sample_joint(10, &mut RngStream::new(21, 0)).1;
    let log_z = kalman(&model, &ys).unwrap().log_z;
    let rows = bound_sweep(&model, &ys, &Bootstrap, None, &SmcConfig::filtering(1), &[4, 16, 64, 256], 100, 3, 0).unwrap();
    for w in rows.windows(2) {
        let slack = 3.0 * (w[0].se_log_z.powi(2) + w[1].se_log_z.powi(2)).sqrt();
        assert!(w[1].mean_log_z + slack >= w[0].mean_log_z, "{:?} -> {:?}", w[0], w[1]);
    }
    for r in &rows {
        assert!(r.mean_log_z <= log_z + 3.0 * r.se_log_z, "N={} mean {} exceeds log Z {log_z}", r.n_particles, r.mean_log_z);
    }
    assert!(rows[3].mean_log_z > rows[0].mean_log_z);
}

#[test]
fn nasx_bound_beats_nasmc_at_four_particles() {
    let dir = repo_root().join("configs");
    let root = tempfile::tempdir().unwrap();
    let mut at4 = Vec::new();
    for name in ["lgssm_nasx.json", "lgssm_nasmc.json"] {
        let mut cfg = ExperimentConfig::load(&dir.join(name)).unwrap();
        cfg.evaluation.particle_counts = vec![4];
        let s = run_experiment(&cfg, Some(root.path())).unwrap();
        at4.push(s.bounds[0].mean_log_z);
    }
    assert!(at4[0] >= at4[1], "nasx {} < nasmc {}", at4[0], at4[1]);
}

#[test]
fn missing_data_file_is_a_config_error() {
    let e = ExperimentConfig::from_json(
        r#"{"model":{"kind":"lgssm"},"method":"rws","data":{"path":"/no/such/file.json"},"output_dir":"o"}"#,
    )
    .unwrap_err();
    assert!(matches!(e, nasx::Error::Config(_)));
    assert!(e.to_string().contains("`data.path`"), "{e}");
}

#[test]
fn sequences_can_be_read_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("ys.json");
    std::fs::write(&data, r#"{"sequences": [[0.5, -1.0, 2.0], [1.0, 1.0, 1.0]]}"#).unwrap();
    let cfg_path = dir.path().join("cfg.json");
    std::fs::write(
        &cfg_path,
        r#"{"model":{"kind":"lgssm","T":3},"method":"bpf-eval","data":{"path":"ys.json"},
            "evaluation":{"particle_counts":[8],"num_seeds":2},"output_dir":"out"}"#,
    )
    .unwrap();
    let cfg = ExperimentConfig::load(&cfg_path).unwrap();
    let s = run_experiment(&cfg, Some(dir.path())).unwrap();
    assert_eq!(s.bounds.len(), 2);
    let oracle = read_json(&s.output_dir.join("oracle.json"));
    let model = LgssmParams::new(1.0, 1.0, 3).unwrap();
    let expect = kalman(&model, &[0.5, -1.0, 2.0]).unwrap().log_z;
    assert_eq!(oracle["sequences"][0]["log_z"].as_f64().unwrap(), expect);
}
