use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command as Process;

use chlab_cli::{run, Command, Overrides, RunConfig, MANIFEST};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn small(text: &str) -> RunConfig {
    let base = "[grid]\nn = 16\ndt = 1e-3\nfinal_time = 0.1\n";
    toml::from_str(&format!("{base}{text}")).unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn into(dir: &Path) -> Overrides {
    Overrides { out: Some(dir.to_path_buf()), ..Default::default() }
}

#[test]
fn shipped_configs_parse_and_validate() {
    for name in ["desk.toml", "exceedance.toml"] {
        let cfg = RunConfig::load(&configs().join(name)).unwrap();
        cfg.validate().unwrap();
    }
}

#[test]
fn zero_datum_gives_a_zero_skeleton() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small("[model]\nu0 = []\n");
    let out = run(Command::Skeleton, &cfg, &into(tmp.path())).unwrap();
    let text = fs::read_to_string(out.dir.join("trajectory.csv")).unwrap();
    let mut rows = csv::Reader::from_reader(text.as_bytes());
    let mut count = 0;
    for rec in rows.records() {
        let rec = rec.unwrap();
        assert!(rec.iter().skip(1).all(|v| v.parse::<f64>().unwrap() == 0.0));
        count += 1;
    }
    assert_eq!(count, 101);
    let manifest = json(&out.dir.join(MANIFEST));
    assert_eq!(manifest["command"], "skeleton");
    assert_eq!(manifest["artifacts"].as_array().unwrap().len(), 2);
}

#[test]
fn green_check_reports_both_exponents() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(Command::GreenCheck, &small(""), &into(tmp.path())).unwrap();
    let doc = json(&out.dir.join("green.json"));
    let g = doc["gamma_hat"].as_f64().unwrap();
    let gp = doc["gamma_hat_prime"].as_f64().unwrap();
    // spatial increments decay at least like |y - z|^1
    assert!(g >= 0.95, "gamma {g}");
    assert!((gp - 0.75).abs() < 0.05, "gamma' {gp}");
}

#[test]
fn manifest_hashes_match_the_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small("[noise]\nreplicas = [20]\nepsilon = [0.1]\n");
    let out = run(Command::Mc, &cfg, &into(tmp.path())).unwrap();
    for entry in json(&out.dir.join(MANIFEST))["artifacts"].as_array().unwrap() {
        let bytes = fs::read(out.dir.join(entry["name"].as_str().unwrap())).unwrap();
        assert_eq!(entry["sha256"], chlab_cli::artifacts::sha256_hex(&bytes));
    }
}

#[test]
fn reruns_into_different_directories_are_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small("[noise]\nreplicas = [8]\nepsilon = [0.05]\ndump = true\n");
    let a = run(Command::Simulate, &cfg, &into(&tmp.path().join("a"))).unwrap();
    let b = run(Command::Simulate, &cfg, &into(&tmp.path().join("b"))).unwrap();
    for name in ["trajectory.csv", "summary.json", "noise.bin", MANIFEST] {
        assert_eq!(fs::read(a.dir.join(name)).unwrap(), fs::read(b.dir.join(name)).unwrap(), "{name}");
    }
    let other = Overrides { seed: Some(43), ..into(&tmp.path().join("c")) };
    let c = run(Command::Simulate, &cfg, &other).unwrap();
    assert_ne!(fs::read(a.dir.join("noise.bin")).unwrap(), fs::read(c.dir.join("noise.bin")).unwrap());
}

#[test]
fn binary_runs_a_command_and_applies_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("run.toml");
    fs::write(&config, "[grid]\nn = 16\ndt = 1e-3\nfinal_time = 0.1\n").unwrap();
    let out = tmp.path().join("out");
    let status = Process::new(env!("CARGO_BIN_EXE_chlab"))
        .args(["mc", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .args(["--replicas", "10", "--epsilon", "0.2,0.1"])
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let manifest = json(&out.join(MANIFEST));
    assert_eq!(manifest["config"]["noise"]["epsilon"], serde_json::json!([0.2, 0.1]));
    assert_eq!(manifest["config"]["noise"]["replicas"], serde_json::json!([10]));
    assert!(manifest["config"].get("output").is_none());
}

#[test]
fn binary_rejects_hypothesis_violations_with_exit_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("bad.toml");
    fs::write(&config, "[exponents]\nalpha = 0.3\n").unwrap();
    let res = Process::new(env!("CARGO_BIN_EXE_chlab"))
        .args(["skeleton", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(tmp.path().join("never"))
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("(H3')"));
    assert!(!tmp.path().join("never").exists());

    fs::write(&config, "[model]\ndrift = [-1.0, 0.0, 0.0, 0.0]\n").unwrap();
    let res = Process::new(env!("CARGO_BIN_EXE_chlab")).args(["skeleton", "--config"]).arg(&config).output().unwrap();
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("(H1)"));
}
