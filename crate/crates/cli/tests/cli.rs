use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn hnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hnn")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

const TINY: &str = r#"
name = "tiny"
seed = 5

[data]
synthetic = { dgp = "demo", n = 140, seed = 2 }

[target]
mnemonic = "PRICE"
scale = 400.0

[features]
expansion = "single"

[[hemispheres]]
name = "lr"
include_trend = true
role = "coefficient"

[[hemispheres]]
name = "sr"
mnemonics = ["EXP01", "EXP02"]

[[hemispheres]]
name = "g"
mnemonics = ["ACT01", "ACT02", "ACT03"]

[[hemispheres]]
name = "c"
mnemonics = ["COM01", "OIL"]

[model]
state = { layers = 1, neurons = 8 }
coefficient = { layers = 1, neurons = 4 }

[train]
epochs = 40
ensemble_size = 2
inference_size = 12

[output]
save_weights = false
"#;

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.toml");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn run_ok(args: &[&str]) -> Output {
    let o = hnn(args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    o
}

fn series(components: &Path) -> Vec<String> {
    let mut rd = csv::Reader::from_path(components).unwrap();
    let mut names: Vec<String> = Vec::new();
    for r in rd.records() {
        let n = r.unwrap()[1].to_string();
        if !names.contains(&n) {
            names.push(n);
        }
    }
    names
}

#[test]
fn estimate_writes_components_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("out");
    run_ok(&["estimate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    let names = series(&out.join("components.csv"));
    for h in ["lr", "sr", "g", "c", "prediction"] {
        assert!(names.iter().any(|n| n == h), "{names:?}");
    }
    let m: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "estimate");
    assert_eq!(m["seed"], 5);
    assert_eq!(m["draws"].as_array().unwrap().len(), 12);
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
    for file in ["components.csv", "shares.csv", "paths.json"] {
        assert!(m["outputs"][file].is_string(), "{file}");
    }
}

#[test]
fn same_seed_gives_identical_bytes_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run_ok(&["estimate", "--config", &cfg, "--threads", "1", "--out", a.to_str().unwrap()]);
    run_ok(&["estimate", "--config", &cfg, "--threads", "3", "--out", b.to_str().unwrap()]);
    for f in ["components.csv", "shares.csv", "paths.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let c = dir.path().join("c");
    run_ok(&["estimate", "--config", &cfg, "--seed", "6", "--out", c.to_str().unwrap()]);
    assert_ne!(fs::read(a.join("components.csv")).unwrap(), fs::read(c.join("components.csv")).unwrap());
}

#[test]
fn variant_flag_switches_architecture() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("out");
    run_ok(&["estimate", "--config", &cfg, "--variant", "additive", "--out", out.to_str().unwrap()]);
    let names = series(&out.join("components.csv"));
    assert!(!names.iter().any(|n| n.ends_with(".coef")), "{names:?}");
    let o = hnn(&["estimate", "--config", &cfg, "--variant", "bogus", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn missing_mnemonic_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("panel.csv");
    run_ok(&["simulate", "--n", "120", "--out", csv_path.to_str().unwrap()]);
    let text = TINY
        .replace(r#"synthetic = { dgp = "demo", n = 140, seed = 2 }"#, r#"path = "panel.csv""#)
        .replace(r#""COM01", "OIL""#, r#""COM01", "NOSUCHSERIES""#);
    let cfg = write_config(dir.path(), &text);
    let o = hnn(&["estimate", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("NOSUCHSERIES"), "{}", stderr(&o));
}

#[test]
fn missing_data_file_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = TINY.replace(r#"synthetic = { dgp = "demo", n = 140, seed = 2 }"#, r#"path = "absent.csv""#);
    let cfg = write_config(dir.path(), &text);
    let o = hnn(&["estimate", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn schema_violations_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &TINY.replace("[train]", "[train]\nepoch = 3"));
    let o = hnn(&["estimate", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("epoch"), "{}", stderr(&o));
    let o = hnn(&["estimate", "--config", "/nonexistent/run.toml"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn empty_forecast_plan_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "{TINY}\n[forecast]\nplan = {{ first_origin = \"1985Q1\", last_origin = \"1984Q4\" }}\n"
    );
    let cfg = write_config(dir.path(), &text);
    let o = hnn(&["forecast", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn forecast_scores_network_and_benchmarks() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "{TINY}\n[forecast]\nplan = {{ first_origin = \"1988Q1\", last_origin = \"1989Q4\", estimation_start = \"1961Q3\" }}\n"
    );
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("o");
    run_ok(&["forecast", "--config", &cfg, "--out", out.to_str().unwrap()]);
    let mut rd = csv::Reader::from_path(out.join("rmse.csv")).unwrap();
    let models: Vec<String> = rd.records().map(|r| r.unwrap()[2].to_string()).collect();
    for m in ["hnn", "ar4", "mean4", "mean40"] {
        assert!(models.iter().any(|x| x == m), "{models:?}");
    }
}

#[test]
fn vi_ranks_the_planted_driver_first() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
name = "planted"
seed = 3

[data]
synthetic = { dgp = "planted_driver", n = 240, seed = 9 }

[target]
mnemonic = "PI"

[features]
expansion = "single"

[[hemispheres]]
name = "lr"
include_trend = true
role = "coefficient"

[[hemispheres]]
name = "g"
mnemonics = ["X01", "X02", "X03", "X04", "X05", "X06", "X07", "X08", "X09", "X10"]

[model]
variant = "additive"
state = { layers = 1, neurons = 16 }

[train]
epochs = 150
ensemble_size = 4
inference_size = 8
patience = 30

[vi]
hemispheres = ["g"]
reps = 5
"#;
    let cfg = write_config(dir.path(), text);
    let out = dir.path().join("o");
    run_ok(&["vi", "--config", &cfg, "--out", out.to_str().unwrap()]);
    let mut rd = csv::Reader::from_path(out.join("vi_g.csv")).unwrap();
    let first = rd.records().next().unwrap().unwrap();
    assert_eq!(&first[1], "X01");
}

#[test]
fn export_relevels_saved_draws() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("out");
    run_ok(&["estimate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    let wide = dir.path().join("wide.csv");
    let narrow = dir.path().join("narrow.csv");
    run_ok(&["export", "--from", out.to_str().unwrap(), "--out", wide.to_str().unwrap(), "--level", "0.9"]);
    run_ok(&["export", "--from", out.to_str().unwrap(), "--out", narrow.to_str().unwrap(), "--level", "0.5"]);
    let read = |p: &Path| -> Vec<(f64, f64)> {
        csv::Reader::from_path(p)
            .unwrap()
            .records()
            .map(|r| r.unwrap())
            .filter(|r| &r[3] != "NA")
            .map(|r| (r[3].parse().unwrap(), r[4].parse().unwrap()))
            .collect()
    };
    let (w, n) = (read(&wide), read(&narrow));
    assert!(!w.is_empty());
    assert_eq!(w.len(), n.len());
    for ((wl, wu), (nl, nu)) in w.iter().zip(&n) {
        assert!(wl <= nl && wu >= nu);
    }
    let json = dir.path().join("c.json");
    run_ok(&["export", "--from", out.to_str().unwrap(), "--out", json.to_str().unwrap(), "--format", "json"]);
    let v: serde_json::Value = serde_json::from_slice(&fs::read(json).unwrap()).unwrap();
    assert!(v["dates"].is_array());
    let o = hnn(&["export", "--from", dir.path().join("none").to_str().unwrap(), "--out", "x.csv"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    run_ok(&["simulate", "--dgp", "latent-state", "--n", "80", "--seed", "4", "--out", a.to_str().unwrap()]);
    run_ok(&["simulate", "--dgp", "latent-state", "--n", "80", "--seed", "4", "--out", b.to_str().unwrap()]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let rows = fs::read_to_string(&a).unwrap().lines().count();
    assert_eq!(rows, 82);
}

#[test]
fn shipped_synthetic_config_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = repo().join("configs/synthetic.toml");
    let out = dir.path().join("o");
    run_ok(&["estimate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let names = series(&out.join("components.csv"));
    let contributions: Vec<_> = ["lr", "sr", "g", "c"].iter().filter(|h| names.iter().any(|n| n == *h)).collect();
    assert_eq!(contributions.len(), 4);
    let m: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["outputs"].as_object().unwrap().len(), 3 + 128);
}
