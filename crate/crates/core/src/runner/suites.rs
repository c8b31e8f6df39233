// SPDX-License-Identifier: MIT OR Apache-2.0

//! Steering and site/order suites on the glass box, and plot data derived
//! from a finished steering run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::config::SuiteConfig;
use super::manifest::{RunManifest, RunOutputs};
use super::steer::{run_steering, PathRow, SteeringRun};
use super::table::{num, opt, Table};
use crate::banks::gen_edge_grid_bank;
use crate::banks::serialization::{BankBody, BankFile};
use crate::diagnostics::BootstrapCI;
use crate::harness::GlassBox;
use crate::metrics::PathQualityRow;
use crate::steering::SteeringMethod;
use crate::{Error, Result};

pub const PATH_QUALITY_CSV: &str = "edge_grid_centroid_rotation_path_quality.csv";
pub const PATH_LONG_CSV: &str = "edge_grid_path_long.csv";
pub const SITE_ORDER_CSV: &str = "site_order_audit.csv";
pub const SITE_ORDER_LONG_CSV: &str = "site_order_path_long.csv";

pub const QUALITY_HEADER: &[&str] = &[
    "model",
    "method",
    "endpoint_beh",
    "endpoint_beh_lo",
    "endpoint_beh_hi",
    "endpoint_res",
    "endpoint_res_lo",
    "endpoint_res_hi",
    "corr",
    "coupled_auc",
    "coupled_auc_lo",
    "coupled_auc_hi",
    "off_target_auc",
    "edge_rec",
    "edge_score",
    "corr_degenerate",
    "n_prompts",
    "excluded_beh",
    "excluded_res",
    "excluded_edge",
    "boundary",
];

pub const LONG_HEADER: &[&str] = &[
    "model",
    "method",
    "prompt_id",
    "alpha",
    "g_patch",
    "r_beh",
    "r_res",
    "r_coup",
    "off_target",
    "p_clean",
    "p_corrupt",
    "p_all_off",
    "p_all_on",
    "edge_d",
    "r_edge",
    "donor_prompt_id",
];

/// Long-CSV columns that must be present on every row.
pub const LONG_REQUIRED: &[&str] =
    &["alpha", "g_patch", "r_beh", "r_res", "r_coup", "off_target", "p_clean", "p_corrupt", "p_all_off", "p_all_on"];

fn ci_cells(ci: &Option<BootstrapCI>) -> [String; 3] {
    [opt(ci.map(|c| c.point)), opt(ci.map(|c| c.low)), opt(ci.map(|c| c.high))]
}

pub fn quality_table(rows: &[PathQualityRow], boundary: bool) -> Table {
    let mut t = Table::new(QUALITY_HEADER);
    for r in rows {
        let mut v = vec![r.model.clone(), r.method.name().to_string()];
        v.extend(ci_cells(&r.endpoint_beh));
        v.extend(ci_cells(&r.endpoint_res));
        v.push(num(r.corr));
        v.extend(ci_cells(&r.coupled_auc));
        v.push(num(r.off_target_auc));
        v.push(opt(r.edge_rec));
        v.push(opt(r.edge_score));
        v.push(r.corr_degenerate.to_string());
        v.push(r.n_prompts.to_string());
        v.push(r.excluded_beh.to_string());
        v.push(r.excluded_res.to_string());
        v.push(r.excluded_edge.to_string());
        v.push(boundary.to_string());
        t.push(v);
    }
    t
}

/// Rows ordered by (method as listed, prompt, α).
pub fn long_table(rows: &[PathRow], methods: &[SteeringMethod]) -> Table {
    let rank: BTreeMap<SteeringMethod, usize> = methods.iter().enumerate().map(|(i, m)| (*m, i)).collect();
    let mut sorted: Vec<&PathRow> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        (rank[&a.method], a.prompt_id)
            .cmp(&(rank[&b.method], b.prompt_id))
            .then(a.alpha.total_cmp(&b.alpha))
    });
    let mut t = Table::new(LONG_HEADER);
    for r in sorted {
        t.push(vec![
            r.model.clone(),
            r.method.name().into(),
            r.prompt_id.to_string(),
            num(r.alpha),
            num(r.g_patch),
            opt(r.r_beh),
            opt(r.r_res),
            opt(r.r_coup),
            num(r.off_target),
            num(r.p_clean),
            num(r.p_corrupt),
            num(r.p_all_off),
            num(r.p_all_on),
            opt(r.edge_d),
            opt(r.r_edge),
            r.donor_prompt_id.map(|d| d.to_string()).unwrap_or_default(),
        ]);
    }
    t
}

/// Runs the glass box over the configured edge-grid bank and writes the
/// quality and long CSVs. Audit failures abort before the manifest is sealed.
fn steering_suite(
    cfg: &SuiteConfig,
    out_dir: &Path,
    suite: &str,
    methods: &[SteeringMethod],
    resamples: usize,
    files: (&str, &str),
) -> Result<(PathBuf, SteeringRun)> {
    cfg.validate()?;
    let model = GlassBox::build(cfg.glassbox.clone())?;
    let bank = gen_edge_grid_bank(&cfg.edge)?;
    let bank_bytes = BankFile::new(BankBody::EdgeGrid(bank.clone())).to_bytes()?;
    let run = run_steering(&model, &bank, &cfg.steer, methods, resamples)?;

    if run.audit.wrong_site_marker_changes != 0 {
        return Err(Error::Audit(format!(
            "{} of {} wrong-site evaluations moved a marker state",
            run.audit.wrong_site_marker_changes, run.audit.wrong_site_checks
        )));
    }
    let boundary = !run.gate.pass;
    let quality = quality_table(&run.summary, boundary);
    quality.audit(&["model", "method"], &["off_target_auc", "corr"])?;
    let long = long_table(&run.rows, methods);
    let expected = bank.prompts.len() * methods.len() * (cfg.steer.alpha_steps + 1);
    if long.len() != expected {
        return Err(Error::Audit(format!("long CSV has {} rows, expected {expected}", long.len())));
    }
    let excluded: BTreeMap<&str, usize> = [
        ("degenerate_gap_prompts", run.audit.degenerate_gap_prompts),
        ("degenerate_residual_prompts", run.audit.degenerate_residual_prompts),
    ]
    .into();
    let required: Vec<&str> = if excluded.values().all(|&n| n == 0) {
        LONG_REQUIRED.to_vec()
    } else {
        LONG_REQUIRED.iter().copied().filter(|c| !c.starts_with("r_")).collect()
    };
    long.audit(&["method", "prompt_id", "alpha"], &required)?;

    let mut out = RunOutputs::create(out_dir, suite)?;
    let sha = out.write_bytes("edge_grid_bank.json", &bank_bytes)?;
    out.record_bank("edge_grid", sha);
    out.write_bytes(files.0, &quality.to_bytes()?)?;
    out.write_bytes(files.1, &long.to_bytes()?)?;
    out.write_json("competence.json", &run.gate)?;
    for (k, v) in excluded {
        out.exclude(k, v);
    }
    out.exclude("undefined_edge_prompts", run.audit.undefined_edge_prompts);
    out.exclude("wrong_site_checks", run.audit.wrong_site_checks);
    out.gate = Some(run.gate);
    out.boundary = boundary;
    if boundary {
        out.notes.push("competence gate failed: competence-boundary run, not evidence".into());
    }
    for r in &run.summary {
        if r.endpoint_beh.is_none() || r.endpoint_res.is_none() || r.coupled_auc.is_none() {
            out.notes.push(format!("{}: a summary metric is undefined for every prompt", r.method));
        }
    }
    let path = out.seal(cfg)?;
    Ok((path, run))
}

pub fn run_steering_suite(cfg: &SuiteConfig, out_dir: &Path) -> Result<(PathBuf, SteeringRun)> {
    steering_suite(
        cfg,
        out_dir,
        "steer-run",
        &cfg.steer.methods,
        cfg.steer.bootstrap_resamples,
        (PATH_QUALITY_CSV, PATH_LONG_CSV),
    )
}

pub fn run_site_order_audit(cfg: &SuiteConfig, out_dir: &Path) -> Result<(PathBuf, SteeringRun)> {
    steering_suite(
        cfg,
        out_dir,
        "steer-site-order",
        &SteeringMethod::SITE_ORDER,
        cfg.steer.site_order_resamples,
        (SITE_ORDER_CSV, SITE_ORDER_LONG_CSV),
    )
}

/// Writes the configured arity bank with a manifest.
pub fn write_arity_bank(cfg: &SuiteConfig, out_dir: &Path) -> Result<PathBuf> {
    cfg.validate()?;
    let bank = crate::banks::gen_arity_bank(&cfg.arity)?;
    for p in &bank.prompts {
        p.audit()?;
    }
    let mut out = RunOutputs::create(out_dir, "bank-gen-arity")?;
    let sha = out.write_bytes("arity_bank.json", &BankFile::new(BankBody::Arity(bank)).to_bytes()?)?;
    out.record_bank("arity", sha);
    out.seal(cfg)
}

/// Writes the configured edge-grid bank with a manifest.
pub fn write_edge_grid_bank(cfg: &SuiteConfig, out_dir: &Path) -> Result<PathBuf> {
    cfg.validate()?;
    let bank = gen_edge_grid_bank(&cfg.edge)?;
    for p in &bank.prompts {
        p.audit()?;
    }
    let mut out = RunOutputs::create(out_dir, "bank-gen-edgegrid")?;
    let sha = out.write_bytes("edge_grid_bank.json", &BankFile::new(BankBody::EdgeGrid(bank)).to_bytes()?)?;
    out.record_bank("edge_grid", sha);
    out.seal(cfg)
}

fn read_table(dir: &Path, name: &str) -> Result<Table> {
    let p = dir.join(name);
    let bytes = std::fs::read(&p).map_err(|e| Error::io(&p, e))?;
    Table::from_bytes(&bytes)
}

/// Per-figure data files from a verified steering run in `run_dir`.
pub fn emit_plot_data(run_dir: &Path, out_dir: &Path) -> Result<PathBuf> {
    let src = RunManifest::verify(&run_dir.join(super::manifest::MANIFEST_FILE))?;
    if src.output(PATH_QUALITY_CSV).is_none() || src.output(PATH_LONG_CSV).is_none() {
        return Err(Error::Config(format!("{} is not a steering run", run_dir.display())));
    }
    let quality = read_table(run_dir, PATH_QUALITY_CSV)?;
    let long = read_table(run_dir, PATH_LONG_CSV)?;

    let mut bars = Table::new(&["method", "metric", "value", "lo", "hi"]);
    let mut auc = Table::new(&["method", "coupled_auc", "lo", "hi", "off_target_auc"]);
    let mut frontier = Table::new(&["method", "endpoint_res", "endpoint_beh"]);
    for i in 0..quality.len() {
        let m = quality.get(i, "method")?.to_string();
        for metric in ["endpoint_beh", "endpoint_res"] {
            bars.push(vec![
                m.clone(),
                metric.into(),
                quality.get(i, metric)?.into(),
                quality.get(i, &format!("{metric}_lo"))?.into(),
                quality.get(i, &format!("{metric}_hi"))?.into(),
            ]);
        }
        auc.push(vec![
            m.clone(),
            quality.get(i, "coupled_auc")?.into(),
            quality.get(i, "coupled_auc_lo")?.into(),
            quality.get(i, "coupled_auc_hi")?.into(),
            quality.get(i, "off_target_auc")?.into(),
        ]);
        frontier.push(vec![m, quality.get(i, "endpoint_res")?.into(), quality.get(i, "endpoint_beh")?.into()]);
    }

    // Mean over prompts per (method, α), skipping undefined cells.
    let mut methods: Vec<String> = Vec::new();
    let mut alphas: Vec<String> = Vec::new();
    let mut sums: BTreeMap<(String, String, &str), (f64, usize)> = BTreeMap::new();
    let fields = ["r_beh", "r_res", "r_coup"];
    for i in 0..long.len() {
        let m = long.get(i, "method")?.to_string();
        let a = long.get(i, "alpha")?.to_string();
        if !methods.contains(&m) {
            methods.push(m.clone());
        }
        if !alphas.contains(&a) {
            alphas.push(a.clone());
        }
        for f in fields {
            let e = sums.entry((m.clone(), a.clone(), f)).or_insert((0.0, 0));
            if let Some(v) = long.get_f64(i, f)? {
                e.0 += v;
                e.1 += 1;
            }
        }
    }
    let mut out = RunOutputs::create(out_dir, "report-plots")?;
    out.write_bytes("baseline_bars.csv", &bars.to_bytes()?)?;
    out.write_bytes("method_auc.csv", &auc.to_bytes()?)?;
    for (f, name) in fields.iter().zip(["heatmap_beh.csv", "heatmap_res.csv", "heatmap_coup.csv"]) {
        let mut header = vec!["method".to_string()];
        header.extend(alphas.iter().cloned());
        let mut t = Table { header, rows: Vec::new() };
        for m in &methods {
            let mut row = vec![m.clone()];
            for a in &alphas {
                let (s, n) = sums[&(m.clone(), a.clone(), *f)];
                row.push(if n == 0 { String::new() } else { num(s / n as f64) });
            }
            t.push(row);
        }
        out.write_bytes(name, &t.to_bytes()?)?;
    }
    out.write_bytes("frontier.csv", &frontier.to_bytes()?)?;
    out.notes.push(format!("plot data derived from a steering run with {} outputs", src.outputs.len()));
    for o in &src.outputs {
        if o.path == PATH_QUALITY_CSV || o.path == PATH_LONG_CSV {
            out.notes.push(format!("source {} sha256 {}", o.path, o.sha256));
        }
    }
    out.boundary = src.boundary;
    out.gate = src.gate;
    out.seal(&src.config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SuiteConfig {
        let mut cfg = SuiteConfig::default();
        cfg.edge.n_prompts = 3;
        cfg.steer.alpha_steps = 4;
        cfg.steer.bootstrap_resamples = 20;
        cfg.steer.methods = vec![SteeringMethod::ShapeOnly, SteeringMethod::CentroidOnly, SteeringMethod::LinearMarker];
        cfg
    }

    #[test]
    fn steering_suite_files_and_plots() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small();
        let (path, run) = run_steering_suite(&cfg, &dir.path().join("s")).unwrap();
        assert!(run.gate.pass);
        let m = RunManifest::verify(&path).unwrap();
        assert!(!m.boundary);
        let long = read_table(&dir.path().join("s"), PATH_LONG_CSV).unwrap();
        assert_eq!(long.len(), 3 * 3 * 5);
        assert_eq!(long.get(0, "method").unwrap(), "shape_only");
        assert_eq!(long.get(5, "prompt_id").unwrap(), "1");
        let q = read_table(&dir.path().join("s"), PATH_QUALITY_CSV).unwrap();
        assert_eq!(q.header, QUALITY_HEADER);
        assert_eq!(q.len(), 3);

        let pp = emit_plot_data(&dir.path().join("s"), &dir.path().join("p")).unwrap();
        RunManifest::verify(&pp).unwrap();
        let h = read_table(&dir.path().join("p"), "heatmap_beh.csv").unwrap();
        assert_eq!((h.len(), h.header.len()), (3, 1 + 5));
        let f = read_table(&dir.path().join("p"), "frontier.csv").unwrap();
        assert_eq!(f.len(), 3);
    }

    #[test]
    fn boundary_flag_when_gate_fails() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small();
        cfg.steer.methods = vec![SteeringMethod::ShapeOnly];
        cfg.steer.gate_threshold = 1.5;
        let (path, _) = run_steering_suite(&cfg, dir.path()).unwrap();
        let m = RunManifest::read(&path).unwrap();
        assert!(m.boundary);
        let q = read_table(dir.path(), PATH_QUALITY_CSV).unwrap();
        assert_eq!(q.get(0, "boundary").unwrap(), "true");
    }
}
