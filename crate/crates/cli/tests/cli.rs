use proptest::prelude::*;
use serde_json::Value;
use sptree_cli::config::{RuleSpec, RunConfig};
use sptree_cli::format::g17;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_sptree");

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn sptree(args: &[&str], cache: Option<&Path>) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args).env_remove("SPTREE_CACHE_DIR");
    if let Some(c) = cache {
        cmd.env("SPTREE_CACHE_DIR", c);
    }
    cmd.output().unwrap()
}

fn run_in(dir: &Path, sub: &str, config: &str, extra: &[&str]) -> (i32, String, PathBuf) {
    let cfg = write_config(dir, &format!("{sub}.json"), config);
    let out = dir.join(format!("out-{sub}"));
    let mut args = vec![sub, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = sptree(&args, None);
    (o.status.code().unwrap(), String::from_utf8_lossy(&o.stderr).into_owned(), out)
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn published_schema_is_current() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schema/run_config.schema.json");
    let fresh = sptree_cli::config::schema_json();
    if std::env::var_os("SPTREE_UPDATE_SCHEMA").is_some() {
        fs::write(&path, &fresh).unwrap();
    }
    assert_eq!(fs::read_to_string(&path).unwrap(), fresh, "regenerate with SPTREE_UPDATE_SCHEMA=1");
}

#[test]
fn tree_info_reports_shell_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, out) = run_in(dir.path(), "tree-info", r#"{"tree": {"gamma": 0.5, "depth": 17}}"#, &[]);
    assert_eq!(code, 0);
    let v = json(&out.join("tree_info.json"));
    assert_eq!(v["alpha"][17], 32);
    assert_eq!(v["sparse_positions"], serde_json::json!([2, 16]));
    assert_eq!(v["g"].as_array().unwrap().len(), 17);
}

#[test]
fn paper_rule_positions() {
    let p = RuleSpec::Paper.to_rule().positions(u64::MAX);
    assert_eq!(&p[..3], &[2, 16, 134217728]);
}

#[test]
fn config_errors_exit_2_with_field() {
    let dir = tempfile::tempdir().unwrap();
    let (code, err, _) = run_in(dir.path(), "tree-info", r#"{"tree": {"gamma": 1.2, "depth": 17}}"#, &[]);
    assert_eq!(code, 2);
    assert!(err.contains("gamma"), "{err}");
    let (code, err, _) = run_in(dir.path(), "tree-info", "{\"tree\": {\"gamma\": 0.5,\n \"depth\": 17}, \"nope\": 1}", &[]);
    assert_eq!(code, 2);
    assert!(err.contains("line 2") && err.contains("nope"), "{err}");
    let (code, err, _) = run_in(dir.path(), "dynamics", r#"{"tree": {"gamma": 0.5, "depth": 17}, "operator": {"kind": "truncated_free", "cut": 40}}"#, &[]);
    assert_eq!(code, 2, "{err}");
    let o = sptree(&["verify"], None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn resource_limits_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let (code, err, _) = run_in(dir.path(), "tree-info", r#"{"tree": {"gamma": 0.5, "depth": 200000000}}"#, &[]);
    assert_eq!(code, 3, "{err}");
    let big = r#"{"tree": {"gamma": 0.5, "rule": {"explicit": [8, 24, 60, 130]}, "depth": 150}}"#;
    let (code, err, _) = run_in(dir.path(), "verify", big, &[]);
    assert_eq!(code, 3);
    assert!(err.contains("dense limit"), "{err}");
}

#[test]
fn verify_passes_on_small_tree_and_catches_fault() {
    let dir = tempfile::tempdir().unwrap();
    let (code, err, out) = run_in(dir.path(), "verify", r#"{"tree": {"gamma": 0.5, "depth": 20}}"#, &["--seed", "3"]);
    assert_eq!(code, 0, "{err}");
    let v = json(&out.join("verify.json"));
    assert_eq!(v["seed"], 3);
    assert_eq!(v["checks"].as_array().unwrap().len(), 6);
    assert!(v["checks"].as_array().unwrap().iter().all(|c| c["pass"] == true));

    let sub = dir.path().join("fault");
    fs::create_dir(&sub).unwrap();
    let (code, _, out) = run_in(&sub, "verify", r#"{"tree": {"gamma": 0.5, "depth": 20}, "fault_injection": "eq41_sign"}"#, &[]);
    assert_eq!(code, 1);
    let v = json(&out.join("verify.json"));
    for c in v["checks"].as_array().unwrap() {
        assert_eq!(c["pass"], c["name"] != "integer_identity", "{c}");
    }
}

#[test]
fn bound_state_has_zero_exponent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"tree": {"gamma": 0.5, "depth": 4},
        "operator": {"kind": "explicit", "d": [0.5, 1.25, 2.0, 2.75], "b": [0, 0, 0]},
        "t_grid": {"t_min": 1, "t_max": 10000, "points": 25}, "p": [2], "method": "both"}"#;
    let (code, err, out) = run_in(dir.path(), "dynamics", cfg, &[]);
    assert_eq!(code, 0, "{err}");
    let s = json(&out.join("summary.json"));
    assert!(s["betas"][0]["beta_hat"].as_f64().unwrap().abs() <= 0.02, "{s}");
    assert!(s["dimension"]["dim_upper"].as_f64().unwrap() < 0.05);
    let profile = fs::read_to_string(out.join("profile.csv")).unwrap();
    assert_eq!(profile.lines().next(), Some("n,a"));
    assert_eq!(profile.lines().count(), 5);
}

#[test]
fn both_methods_agree_on_a_finite_block() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"tree": {"gamma": 0.5, "rule": {"explicit": [8, 24]}, "depth": 60},
        "t_grid": {"t_min": 1, "t_max": 1000, "points": 13}, "p": [1, 2], "method": "both"}"#;
    let (code, err, out) = run_in(dir.path(), "dynamics", cfg, &[]);
    let s = json(&out.join("summary.json"));
    assert!(s["method_deviation"].as_f64().unwrap() <= 1e-6, "{s}");
    assert!(s["profile"]["discrepancy"].as_f64().unwrap() <= 1e-6, "{s}");
    assert!(s["betas"][0]["target"].as_f64().is_some());
    let dim_ok = s["dim_checks"].as_array().unwrap().iter().all(|c| c["pass"] == true);
    assert_eq!(code, if dim_ok { 0 } else { 1 }, "{err}");
    let moments = fs::read_to_string(out.join("moments.csv")).unwrap();
    assert_eq!(moments.lines().next(), Some("T,p,moment,local_slope"));
    assert_eq!(moments.lines().count(), 1 + 2 * 13);
}

#[test]
fn eigensum_refuses_half_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"tree": {"gamma": 0.5, "depth": 4}, "operator": {"kind": "free", "size": null}, "method": "eigensum"}"#;
    let (code, err, _) = run_in(dir.path(), "dynamics", cfg, &[]);
    assert_eq!(code, 2, "{err}");
}

const SMALL_SURROGATE: &str = r#"{"tree": {"gamma": 0.5, "rule": {"explicit": [8, 64]}, "depth": 120},
    "operator": {"kind": "truncated_free", "cut": 65},
    "state": {"kind": "first_kind", "nu": 0.25, "center": 2.0, "half_width": 1.5},
    "t_grid": {"t_min": 1, "t_max": 1024, "points": 13}, "p": [1, 2]}"#;

#[test]
fn dynamics_is_deterministic_and_cache_transparent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "sur.json", SMALL_SURROGATE);
    let cache = dir.path().join("cache");
    let mut runs = Vec::new();
    for (name, workers, cached) in [("cold", "4", true), ("warm", "2", true), ("nocache", "1", false)] {
        let out = dir.path().join(name);
        let args = ["dynamics", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--workers", workers];
        let o = sptree(&args, if cached { Some(&cache) } else { None });
        assert!(o.status.code().is_some_and(|c| c <= 1), "{}", String::from_utf8_lossy(&o.stderr));
        runs.push(out);
    }
    let entries = fs::read_dir(&cache).unwrap().count();
    assert_eq!(entries, 13);
    for file in ["profile.csv", "moments.csv", "summary.json"] {
        let a = fs::read(runs[0].join(file)).unwrap();
        for r in &runs[1..] {
            assert_eq!(a, fs::read(r.join(file)).unwrap(), "{file} differs in {}", r.display());
        }
    }
}

#[test]
fn corrupt_cache_entries_are_recomputed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "sur.json", SMALL_SURROGATE);
    let cache = dir.path().join("cache");
    let run = |name: &str| {
        let out = dir.path().join(name);
        sptree(&["dynamics", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], Some(&cache));
        fs::read(out.join("summary.json")).unwrap()
    };
    let first = run("a");
    for e in fs::read_dir(&cache).unwrap() {
        let p = e.unwrap().path();
        let mut b = fs::read(&p).unwrap();
        let last = b.len() - 1;
        b[last] ^= 0xff;
        fs::write(&p, b).unwrap();
    }
    assert_eq!(first, run("b"));
}

#[test]
fn config_round_trips_through_serde() {
    let cfg = RunConfig::from_json(SMALL_SURROGATE).unwrap();
    let text = serde_json::to_string(&cfg).unwrap();
    assert_eq!(RunConfig::from_json(&text).unwrap(), cfg);
}

proptest! {
    #[test]
    fn g17_round_trips(bits in any::<u64>()) {
        let x = f64::from_bits(bits);
        prop_assume!(x.is_finite());
        let s = g17(x);
        prop_assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{}", s);
    }
}
