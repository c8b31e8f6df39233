// SPDX-License-Identifier: MIT OR Apache-2.0

//! Controlled-arity diagnostic suites: layer sweep, held-out layer audit and
//! per-template audit.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::config::SuiteConfig;
use super::manifest::RunOutputs;
use super::table::{num, opt, Table};
use crate::banks::serialization::{BankBody, BankFile};
use crate::banks::{gen_arity_bank, ArityBank, Constructor};
use crate::diagnostics::{
    compute_cells, constructor_margin, heldout_audit, layer_sweep, ArityStates, BootConfig, CellConfig, RankCell,
    RankProfile,
};
use crate::geometry::make_projection;
use crate::harness::{ingest, PlantedSubstrate};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagPart {
    /// Profiles, per-layer margins and the best-layer diagonal table.
    Sweep,
    HeldOut,
    MultiTemplate,
}

impl DiagPart {
    pub fn suite_name(self) -> &'static str {
        match self {
            DiagPart::Sweep => "diag-run",
            DiagPart::HeldOut => "diag-heldout",
            DiagPart::MultiTemplate => "diag-multitemplate",
        }
    }
}

/// Cells for one substrate.
pub struct SubstrateCells {
    pub tag: String,
    pub cells: Vec<RankCell>,
}

fn boot(cfg: &SuiteConfig) -> BootConfig {
    BootConfig {
        resamples: cfg.diag.bootstrap_resamples,
        level: cfg.diag.bootstrap_level,
        seed: cfg.diag.bootstrap_seed,
    }
}

fn cells_for(bank: &ArityBank, src: &dyn ArityStates, cfg: &SuiteConfig) -> Result<Vec<RankCell>> {
    let p = make_projection(src.model_dim(), cfg.diag.projection_dim, cfg.diag.projection_seed)?;
    let cc = CellConfig {
        layers: cfg.diag.layers.clone(),
        constructors: cfg.diag.constructors.clone(),
        budget: cfg.diag.tuple_budget,
        tuple_seed: cfg.diag.tuple_seed,
    };
    compute_cells(bank, src, &p, &cc)
}

/// Builds the bank and computes cells for every configured substrate.
pub fn diagnostic_cells(cfg: &SuiteConfig) -> Result<(ArityBank, Vec<SubstrateCells>)> {
    let bank = gen_arity_bank(&cfg.arity)?;
    let mut out = Vec::new();
    if let Some(path) = &cfg.diag.ingest_manifest {
        let digest = BankFile::new(BankBody::Arity(bank.clone())).digest()?;
        let ing = ingest(path, &bank, &digest)?;
        let covered = ing.covered_bank(&bank);
        out.push(SubstrateCells { tag: ing.manifest.source.clone(), cells: cells_for(&covered, &ing, cfg)? });
    } else {
        for s in &cfg.planted {
            let src = PlantedSubstrate { config: s.config.clone() };
            out.push(SubstrateCells { tag: s.tag.clone(), cells: cells_for(&bank, &src, cfg)? });
        }
    }
    if out.is_empty() {
        return Err(Error::Config("no diagnostic substrate configured".into()));
    }
    Ok((bank, out))
}

fn profile_rows(t: &mut Table, tag: &str, p: &RankProfile) {
    let k_star = p.constructor.expected_rank(p.arity);
    for e in p.entries.values() {
        t.push(vec![
            tag.into(),
            p.layer.to_string(),
            p.constructor.name().into(),
            p.arity.to_string(),
            e.k.to_string(),
            (e.k == k_star).to_string(),
            num(e.mean_d),
            num(e.ci.low),
            num(e.ci.high),
            e.n_prompts.to_string(),
        ]);
    }
}

const MARGIN_HEADER: &[&str] =
    &["model", "constructor", "r", "expected_k", "layer", "d", "ci_low", "ci_high", "max_off_diagonal", "margin"];

fn margin_row(tag: &str, p: &RankProfile, notes: &mut Vec<String>) -> Vec<String> {
    let k_star = p.constructor.expected_rank(p.arity);
    let at = p.entries.get(&k_star);
    let m = constructor_margin(p, tag).ok();
    if at.is_none() {
        notes.push(format!("{tag} {} r={} layer {}: no usable cell at the expected rank", p.constructor.name(), p.arity, p.layer));
    }
    vec![
        tag.into(),
        p.constructor.name().into(),
        p.arity.to_string(),
        k_star.to_string(),
        p.layer.to_string(),
        opt(at.map(|e| e.mean_d)),
        opt(at.map(|e| e.ci.low)),
        opt(at.map(|e| e.ci.high)),
        opt(m.as_ref().map(|m| m.max_off_diagonal)),
        opt(m.as_ref().map(|m| m.margin)),
    ]
}

fn record_exclusions(out: &mut RunOutputs, s: &SubstrateCells) {
    let undefined = s.cells.iter().filter(|c| !c.defined()).count();
    let tiny: usize = s.cells.iter().map(|c| c.tiny_minors).sum();
    out.exclude(&format!("{}:undefined_cells", s.tag), undefined);
    out.exclude(&format!("{}:tiny_minors", s.tag), tiny);
}

fn sweep_tables(subs: &[SubstrateCells], cfg: &SuiteConfig, notes: &mut Vec<String>) -> Result<[Table; 3]> {
    let mut profiles = Table::new(&[
        "model", "layer", "constructor", "r", "k", "expected", "d", "ci_low", "ci_high", "n_prompts",
    ]);
    let mut margins = Table::new(MARGIN_HEADER);
    let mut diagonal = Table::new(&["model", "r", "expected_k", "layer", "d", "ci_low", "ci_high", "margin"]);
    for s in subs {
        let sweep = layer_sweep(&s.cells, &boot(cfg))?;
        let mut by_key: BTreeMap<(usize, Constructor, usize), &RankProfile> = BTreeMap::new();
        for p in &sweep.profiles {
            profile_rows(&mut profiles, &s.tag, p);
            for &k in &p.omitted_ranks {
                notes.push(format!("{} {} r={} layer {}: rank {k} omitted, no usable cell", s.tag, p.constructor.name(), p.arity, p.layer));
            }
            by_key.insert((p.arity, p.constructor, p.layer), p);
        }
        for p in by_key.values() {
            margins.push(margin_row(&s.tag, p, notes));
        }
        for (&(arity, c), &layer) in &sweep.best {
            if c != Constructor::ArgsOnly {
                continue;
            }
            let p = by_key[&(arity, c, layer)];
            let row = margin_row(&s.tag, p, notes);
            diagonal.push(vec![
                row[0].clone(),
                row[2].clone(),
                row[3].clone(),
                row[4].clone(),
                row[5].clone(),
                row[6].clone(),
                row[7].clone(),
                row[9].clone(),
            ]);
        }
    }
    margins.audit(&["model", "constructor", "r", "layer"], &[])?;
    diagonal.audit(&["model", "r"], &["d"])?;
    Ok([profiles, margins, diagonal])
}

fn heldout_table(subs: &[SubstrateCells], cfg: &SuiteConfig) -> Result<Table> {
    let mut t = Table::new(&[
        "model", "constructor", "r", "expected_k", "dev_layer", "heldout_d", "ci_low", "ci_high", "pos_frac",
        "n_selection", "n_evaluation",
    ]);
    for s in subs {
        for &c in &cfg.diag.constructors {
            for &r in &cfg.arity.arities {
                let h = heldout_audit(&s.cells, r, c, &boot(cfg))?;
                t.push(vec![
                    s.tag.clone(),
                    c.name().into(),
                    r.to_string(),
                    c.expected_rank(r).to_string(),
                    h.dev_layer.to_string(),
                    num(h.heldout_d),
                    num(h.ci.low),
                    num(h.ci.high),
                    num(h.pos_frac),
                    h.selection_ids.len().to_string(),
                    h.evaluation_ids.len().to_string(),
                ]);
            }
        }
    }
    t.audit(&["model", "constructor", "r"], &["heldout_d", "pos_frac"])?;
    Ok(t)
}

fn multitemplate_table(subs: &[SubstrateCells], cfg: &SuiteConfig, notes: &mut Vec<String>) -> Result<Table> {
    let mut t = Table::new(&[
        "model", "constructor", "r", "expected_k", "layer", "template", "d", "ci_low", "ci_high", "margin", "n_prompts",
    ]);
    for s in subs {
        let sweep = layer_sweep(&s.cells, &boot(cfg))?;
        for (&(arity, c), &layer) in &sweep.best {
            let mut groups: Vec<(String, Vec<RankCell>)> = Vec::new();
            let here: Vec<RankCell> = s
                .cells
                .iter()
                .filter(|x| x.arity == arity && x.constructor == c && x.layer == layer)
                .cloned()
                .collect();
            groups.push(("all".into(), here.clone()));
            for &tid in &cfg.arity.templates {
                groups.push((tid.to_string(), here.iter().filter(|x| x.template_id == tid).cloned().collect()));
            }
            for (name, cells) in groups {
                if cells.is_empty() {
                    notes.push(format!("{} {} r={}: template {name} has no prompts", s.tag, c.name(), arity));
                    continue;
                }
                let p = crate::diagnostics::aggregate_profile(&cells, &boot(cfg))?;
                let k_star = c.expected_rank(arity);
                let at = p.entries.get(&k_star);
                let m = constructor_margin(&p, &s.tag).ok();
                t.push(vec![
                    s.tag.clone(),
                    c.name().into(),
                    arity.to_string(),
                    k_star.to_string(),
                    layer.to_string(),
                    name,
                    opt(at.map(|e| e.mean_d)),
                    opt(at.map(|e| e.ci.low)),
                    opt(at.map(|e| e.ci.high)),
                    opt(m.map(|m| m.margin)),
                    at.map(|e| e.n_prompts).unwrap_or(0).to_string(),
                ]);
            }
        }
    }
    t.audit(&["model", "constructor", "r", "template"], &[])?;
    Ok(t)
}

/// Runs one diagnostic suite into `out_dir` and returns the manifest path.
pub fn run_diagnostic_suite(cfg: &SuiteConfig, out_dir: &Path, part: DiagPart) -> Result<PathBuf> {
    cfg.validate()?;
    let (bank, subs) = diagnostic_cells(cfg)?;
    let mut out = RunOutputs::create(out_dir, part.suite_name())?;
    let sha = out.write_bytes("arity_bank.json", &BankFile::new(BankBody::Arity(bank)).to_bytes()?)?;
    out.record_bank("arity", sha);
    for s in &subs {
        record_exclusions(&mut out, s);
    }
    let mut notes = Vec::new();
    match part {
        DiagPart::Sweep => {
            let [profiles, margins, diagonal] = sweep_tables(&subs, cfg, &mut notes)?;
            out.write_bytes("arity_profiles.csv", &profiles.to_bytes()?)?;
            out.write_bytes("arity_layer_margins.csv", &margins.to_bytes()?)?;
            out.write_bytes("arity_diagonal.csv", &diagonal.to_bytes()?)?;
        }
        DiagPart::HeldOut => {
            out.write_bytes("arity_heldout.csv", &heldout_table(&subs, cfg)?.to_bytes()?)?;
        }
        DiagPart::MultiTemplate => {
            out.write_bytes("arity_multitemplate.csv", &multitemplate_table(&subs, cfg, &mut notes)?.to_bytes()?)?;
        }
    }
    out.notes = notes;
    out.seal(cfg)
}

/// Validates a capture against the configured arity bank and records a
/// per-file summary.
pub fn run_capture_ingest(cfg: &SuiteConfig, capture: &Path, out_dir: &Path) -> Result<PathBuf> {
    cfg.validate()?;
    let bank = gen_arity_bank(&cfg.arity)?;
    let file = BankFile::new(BankBody::Arity(bank.clone()));
    let ing = ingest(capture, &bank, &file.digest()?)?;
    let mut t = Table::new(&["prompt_id", "layer", "rows", "cols", "sha256"]);
    for f in &ing.manifest.files {
        t.push(vec![
            f.prompt_id.to_string(),
            f.layer.to_string(),
            f.shape[0].to_string(),
            f.shape[1].to_string(),
            f.sha256.clone(),
        ]);
    }
    let mut out = RunOutputs::create(out_dir, "capture-ingest")?;
    let sha = out.write_bytes("arity_bank.json", &file.to_bytes()?)?;
    out.record_bank("arity", sha);
    out.write_bytes("ingest_summary.csv", &t.to_bytes()?)?;
    let skipped = bank.prompts.len() - ing.prompt_ids().len();
    out.exclude("uncaptured_prompts", skipped);
    out.notes.push(format!("capture source {}", ing.manifest.source));
    out.notes.extend(ing.manifest.warnings.iter().map(|w| format!("capture warning: {w}")));
    let mut snapshot = cfg.clone();
    snapshot.diag.ingest_manifest = Some(capture.to_path_buf());
    out.seal(&snapshot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runner::manifest::RunManifest;

    fn small() -> SuiteConfig {
        let mut cfg = SuiteConfig::default();
        cfg.arity.prompts_per_arity = 6;
        cfg.arity.arities = vec![3, 4];
        cfg.diag.layers = vec![1, 2, 3];
        cfg.diag.bootstrap_resamples = 50;
        cfg.planted.truncate(2);
        cfg
    }

    #[test]
    fn sweep_schema_and_counts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small();
        let path = run_diagnostic_suite(&cfg, dir.path(), DiagPart::Sweep).unwrap();
        RunManifest::verify(&path).unwrap();
        let read = |n: &str| Table::from_bytes(&std::fs::read(dir.path().join(n)).unwrap()).unwrap();
        let margins = read("arity_layer_margins.csv");
        assert_eq!(margins.len(), 2 * 2 * 2 * 3);
        let diag = read("arity_diagonal.csv");
        assert_eq!(diag.header, ["model", "r", "expected_k", "layer", "d", "ci_low", "ci_high", "margin"]);
        assert_eq!(diag.len(), 2 * 2);
        for i in 0..diag.len() {
            assert!(diag.get_f64(i, "d").unwrap().unwrap() > 0.0);
        }
    }

    #[test]
    fn heldout_and_multitemplate_rows() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small();
        run_diagnostic_suite(&cfg, &dir.path().join("h"), DiagPart::HeldOut).unwrap();
        let t = Table::from_bytes(&std::fs::read(dir.path().join("h/arity_heldout.csv")).unwrap()).unwrap();
        assert_eq!(t.len(), 2 * 2 * 2);
        run_diagnostic_suite(&cfg, &dir.path().join("m"), DiagPart::MultiTemplate).unwrap();
        let t = Table::from_bytes(&std::fs::read(dir.path().join("m/arity_multitemplate.csv")).unwrap()).unwrap();
        assert_eq!(t.len(), 2 * 2 * 2 * 4);
    }

    #[test]
    fn ingested_substrate_runs_the_sweep() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small();
        let bank = gen_arity_bank(&cfg.arity).unwrap();
        let digest = BankFile::new(BankBody::Arity(bank.clone())).digest().unwrap();
        let src = PlantedSubstrate { config: cfg.planted[0].config.clone() };
        let data: Vec<_> = bank.prompts.iter().map(|p| (p.prompt_id, src.states(p).unwrap())).collect();
        let layers: Vec<usize> = (0..src.n_layers()).collect();
        let cap = crate::harness::write_capture(&dir.path().join("cap"), &digest, "captured", &layers, &data).unwrap();
        let m = run_capture_ingest(&cfg, &cap, &dir.path().join("i")).unwrap();
        RunManifest::verify(&m).unwrap();
        cfg.diag.ingest_manifest = Some(cap);
        run_diagnostic_suite(&cfg, &dir.path().join("d"), DiagPart::Sweep).unwrap();
        let t = Table::from_bytes(&std::fs::read(dir.path().join("d/arity_diagonal.csv")).unwrap()).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.get(0, "model").unwrap(), "captured");
    }

    #[test]
    fn rerun_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small();
        let a = run_diagnostic_suite(&cfg, &dir.path().join("a"), DiagPart::Sweep).unwrap();
        let again = SuiteConfig::load(&a).unwrap();
        assert_eq!(again, cfg);
        let b = run_diagnostic_suite(&again, &dir.path().join("b"), DiagPart::Sweep).unwrap();
        let (ma, mb) = (RunManifest::read(&a).unwrap(), RunManifest::read(&b).unwrap());
        assert_eq!(ma.outputs, mb.outputs);
    }
}
