use serde_json::Value;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn brsim(config: &str, out: &Path, extra: &[&str]) -> Output {
    let cfg = out.with_extension("json");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_brsim"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn summary(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap()
}

const MARGINS: &str = r#"{
  "command": "verify-margins",
  "seed": 42,
  "replicates": 5000,
  "variogram": { "kind": "fractional", "dim": 1, "alpha": 1.0 },
  "sites": [[0.0], [1.0]]
}"#;

#[test]
fn verify_margins_passes_with_ks_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = brsim(MARGINS, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&out);
    assert_eq!(s["pass"], true);
    assert_eq!(s["config"]["seed"], 42);
    assert_eq!(s["config"]["stop"]["hard_cap"], 10000);
    let ks = s["reports"][0]["marginal_ks"].as_array().unwrap();
    assert_eq!(ks.len(), 2);
    assert!(ks.iter().all(|k| k["n"] == 5000 && k["pass"] == true));
}

#[test]
fn invalid_alpha_exits_2_with_pointer() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = brsim(&MARGINS.replace("\"alpha\": 1.0", "\"alpha\": 3.0"), &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("/variogram") && err.contains("(0, 2]"), "{err}");
    assert_eq!(summary(&out)["error"]["pointer"], "/variogram");
}

#[test]
fn unknown_field_and_missing_seed_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = brsim(&MARGINS.replace("\"seed\": 42,", "\"seed\": 42, \"sedd\": 1,"), &dir.path().join("a"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sedd"));

    let unseeded = MARGINS.replace("\"seed\": 42,", "").replace("5000", "200");
    let o = brsim(&unseeded, &dir.path().join("b"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/seed"));
    let o = brsim(&unseeded, &dir.path().join("c"), &["--seed", "9"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(summary(&dir.path().join("c"))["config"]["seed"], 9);
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = MARGINS.replace("5000", "1000").replace("\"sites\": [[0.0], [1.0]]", "\"sites\": [[0.0], [1.0]], \"pairs\": [[0, 1]], \"outputs\": { \"samples_csv\": true }");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(brsim(&cfg, &a, &["--threads", "1"]).status.code(), Some(0));
    assert_eq!(brsim(&cfg, &b, &["--threads", "3"]).status.code(), Some(0));
    for f in ["summary.json", "samples.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn statistical_failure_exits_1_naming_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = r#"{
      "command": "converge-thm22", "seed": 1, "replicates": 500, "n": 500,
      "variogram": { "kind": "fractional", "dim": 1, "alpha": 1.0 },
      "sites": [[0.0], [1.0]],
      "tolerances": { "se_multiplier": 1e-9, "abs_tol": 0.0 }
    }"#;
    let o = brsim(cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("thm22"));
    assert_eq!(summary(&out)["pass"], false);
}

#[test]
fn m3_extract_writes_only_into_the_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = r#"{
      "command": "m3-extract", "seed": 4, "replicates": 50,
      "variogram": { "kind": "fractional", "dim": 1, "alpha": 1.0 },
      "lattice": { "start": [-1.0], "step": [0.5], "shape": [5] }
    }"#;
    let o = brsim(cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let mut names: Vec<String> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["summary.json", "topdecomp.csv"]);
    let csv = fs::read_to_string(out.join("topdecomp.csv")).unwrap();
    assert!(csv.starts_with("T_0,M,F(-2),F(-1.5),F(-1),F(-0.5),F(0),F(0.5),F(1),F(1.5),F(2)\n"), "{csv}");
    assert_eq!(csv.lines().count(), 51);
}

#[test]
fn shipped_configs_parse() {
    let docs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/configs");
    let mut seen = 0;
    for entry in fs::read_dir(docs).unwrap() {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        let v: Value = serde_json::from_str(&text).unwrap();
        assert!(v["seed"].is_u64(), "{}", path.display());
        seen += 1;
    }
    assert_eq!(seen, 10);
}
