// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use relrank::runner::RunManifest;

const SMALL: &str = r#"
[arity]
arities = [3, 4]
prompts_per_arity = 6

[diag]
layers = [1, 2, 3]
bootstrap_resamples = 50

[edge]
n_prompts = 3

[steer]
alpha_steps = 4
bootstrap_resamples = 20
site_order_resamples = 20
methods = ["shape_only", "centroid_only"]
"#;

fn relrank(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relrank")).args(args).output().unwrap()
}

fn small_config(dir: &Path) -> String {
    let p = dir.join("small.toml");
    std::fs::write(&p, SMALL).unwrap();
    p.to_str().unwrap().to_string()
}

fn manifest_path(o: &Output) -> PathBuf {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    PathBuf::from(String::from_utf8(o.stdout.clone()).unwrap().trim())
}

#[test]
fn verify_fresh_run_then_tamper() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("bank");
    let m = manifest_path(&relrank(&["bank", "gen-arity", "--config", &cfg, "--out", out.to_str().unwrap()]));
    assert!(m.ends_with("manifest.json"));

    let ok = relrank(&["manifest", "verify", m.to_str().unwrap()]);
    assert!(ok.status.success());
    let ok_dir = relrank(&["manifest", "verify", out.to_str().unwrap()]);
    assert!(ok_dir.status.success());

    let victim = out.join("arity_bank.json");
    let mut bytes = std::fs::read(&victim).unwrap();
    bytes[10] ^= 1;
    std::fs::write(&victim, bytes).unwrap();
    let bad = relrank(&["manifest", "verify", m.to_str().unwrap()]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("arity_bank.json"));
}

#[test]
fn diag_run_twice_same_seed_same_digests() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let run = |name: &str| {
        let out = dir.path().join(name);
        let m = manifest_path(&relrank(&["diag", "run", "--config", &cfg, "--seed", "9", "--out", out.to_str().unwrap()]));
        RunManifest::read(&m).unwrap()
    };
    let (a, b) = (run("a"), run("b"));
    assert_eq!(a.outputs, b.outputs);
    assert_eq!(a.config, b.config);

    let c = manifest_path(&relrank(&[
        "diag", "run", "--config", &cfg, "--seed", "10", "--out", dir.path().join("c").to_str().unwrap(),
    ]));
    assert_ne!(RunManifest::read(&c).unwrap().outputs, a.outputs);
}

#[test]
fn rerun_from_manifest_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let first = manifest_path(&relrank(&[
        "diag", "heldout", "--config", &cfg, "--out", dir.path().join("a").to_str().unwrap(),
    ]));
    let again = manifest_path(&relrank(&[
        "diag", "heldout", "--config", first.to_str().unwrap(), "--out", dir.path().join("b").to_str().unwrap(),
    ]));
    assert_eq!(RunManifest::read(&first).unwrap().outputs, RunManifest::read(&again).unwrap().outputs);
}

#[test]
fn steering_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let run = dir.path().join("steer");
    manifest_path(&relrank(&["steer", "run", "--config", &cfg, "--out", run.to_str().unwrap()]));
    let plots = dir.path().join("plots");
    let m = manifest_path(&relrank(&[
        "report", "plots", "--from", run.to_str().unwrap(), "--out", plots.to_str().unwrap(),
    ]));
    let man = RunManifest::verify(&m).unwrap();
    for f in ["baseline_bars.csv", "method_auc.csv", "heatmap_beh.csv", "heatmap_res.csv", "heatmap_coup.csv", "frontier.csv"] {
        assert!(man.output(f).is_some(), "{f}");
    }
}

#[test]
fn unknown_subcommand_fails_with_usage() {
    let o = relrank(&["frobnicate"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    let o = relrank(&["diag", "nope"]);
    assert!(!o.status.success());
}

#[test]
fn bad_config_fails() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    std::fs::write(&p, "[glassbox]\npatch_layer = 99\n").unwrap();
    let o = relrank(&["bank", "gen-edgegrid", "--config", p.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
}
