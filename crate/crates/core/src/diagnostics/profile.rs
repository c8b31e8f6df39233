// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::banks::Constructor;
use crate::diagnostics::bootstrap::{bootstrap_ci, BootstrapCI};
use crate::diagnostics::cells::RankCell;
use crate::rng::{label, stream_id};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootConfig {
    pub resamples: usize,
    pub level: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileEntry {
    pub k: usize,
    pub mean_d: f64,
    pub n_prompts: usize,
    pub ci: BootstrapCI,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankProfile {
    pub layer: usize,
    pub constructor: Constructor,
    pub arity: usize,
    pub entries: BTreeMap<usize, ProfileEntry>,
    /// Admissible ranks with no usable cell.
    pub omitted_ranks: Vec<usize>,
    /// Cells dropped because a selector entropy was undefined.
    pub excluded_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginRow {
    pub model: String,
    pub constructor: Constructor,
    pub arity: usize,
    pub expected_rank: usize,
    pub layer: usize,
    pub d_expected: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub max_off_diagonal: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeldOutReport {
    pub arity: usize,
    pub constructor: Constructor,
    pub dev_layer: usize,
    pub heldout_d: f64,
    pub ci: BootstrapCI,
    pub pos_frac: f64,
    pub selection_ids: Vec<usize>,
    pub evaluation_ids: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub profiles: Vec<RankProfile>,
    /// Best layer per (arity, constructor) by mean D at the expected rank.
    pub best: BTreeMap<(usize, Constructor), usize>,
}

fn boot_seed(boot: &BootConfig, parts: &[u64]) -> u64 {
    let mut v = vec![label("profile"), boot.seed];
    v.extend_from_slice(parts);
    stream_id(&v)
}

/// Mean D per admissible rank over usable prompt cells, with prompt-level
/// bootstrap intervals.
pub fn aggregate_profile(cells: &[RankCell], boot: &BootConfig) -> Result<RankProfile> {
    let first = cells
        .first()
        .ok_or_else(|| Error::InvalidArgument("no cells to aggregate".into()))?;
    let (layer, constructor, arity) = (first.layer, first.constructor, first.arity);
    if cells
        .iter()
        .any(|c| c.layer != layer || c.constructor != constructor || c.arity != arity)
    {
        return Err(Error::InvalidArgument(
            "cells passed to aggregate_profile mix layers, constructors or arities".into(),
        ));
    }
    let mut by_k: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
    let mut excluded = 0;
    for c in cells {
        constructor.check_rank(arity, c.k)?;
        match c.usable_d() {
            Some(d) => by_k.entry(c.k).or_default().push((c.prompt_id, d)),
            None => excluded += 1,
        }
    }
    let mut entries = BTreeMap::new();
    let mut omitted = Vec::new();
    for k in 1..=constructor.max_rank(arity) {
        let Some(mut v) = by_k.remove(&k) else {
            omitted.push(k);
            continue;
        };
        v.sort_by_key(|&(id, _)| id);
        let values: Vec<f64> = v.iter().map(|&(_, d)| d).collect();
        let seed = boot_seed(boot, &[layer as u64, label(constructor.name()), arity as u64, k as u64]);
        let ci = bootstrap_ci(&values, boot.resamples, boot.level, seed)?;
        entries.insert(
            k,
            ProfileEntry {
                k,
                mean_d: ci.point,
                n_prompts: values.len(),
                ci,
            },
        );
    }
    Ok(RankProfile {
        layer,
        constructor,
        arity,
        entries,
        omitted_ranks: omitted,
        excluded_cells: excluded,
    })
}

/// D at the expected rank minus the largest D at any other admissible rank.
pub fn constructor_margin(profile: &RankProfile, model: &str) -> Result<MarginRow> {
    let k_star = profile.constructor.expected_rank(profile.arity);
    let at = profile.entries.get(&k_star).ok_or_else(|| {
        Error::Undefined(format!(
            "no usable cell at expected rank {k_star} for {} r={}",
            profile.constructor.name(),
            profile.arity
        ))
    })?;
    let max_off = profile
        .entries
        .iter()
        .filter(|(&k, _)| k != k_star)
        .map(|(_, e)| e.mean_d)
        .fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.max(d))))
        .ok_or_else(|| Error::Undefined("no off-diagonal rank to compare against".into()))?;
    Ok(MarginRow {
        model: model.to_string(),
        constructor: profile.constructor,
        arity: profile.arity,
        expected_rank: k_star,
        layer: profile.layer,
        d_expected: at.mean_d,
        ci_low: at.ci.low,
        ci_high: at.ci.high,
        max_off_diagonal: max_off,
        margin: at.mean_d - max_off,
    })
}

/// Argmax over layers of mean D at the expected rank; lower layer wins ties.
pub fn best_layers(profiles: &[RankProfile]) -> BTreeMap<(usize, Constructor), usize> {
    let mut best: BTreeMap<(usize, Constructor), (usize, f64)> = BTreeMap::new();
    for p in profiles {
        let Some(e) = p.entries.get(&p.constructor.expected_rank(p.arity)) else {
            continue;
        };
        let key = (p.arity, p.constructor);
        match best.get(&key) {
            Some(&(layer, d)) if d > e.mean_d || (d == e.mean_d && layer < p.layer) => {}
            _ => {
                best.insert(key, (p.layer, e.mean_d));
            }
        }
    }
    best.into_iter().map(|(k, (l, _))| (k, l)).collect()
}

/// Profiles for every (layer, constructor, arity) present in `cells`.
pub fn layer_sweep(cells: &[RankCell], boot: &BootConfig) -> Result<SweepResult> {
    let mut groups: BTreeMap<(usize, Constructor, usize), Vec<RankCell>> = BTreeMap::new();
    for c in cells {
        groups.entry((c.layer, c.constructor, c.arity)).or_default().push(c.clone());
    }
    let profiles = groups
        .values()
        .map(|g| aggregate_profile(g, boot))
        .collect::<Result<Vec<_>>>()?;
    let best = best_layers(&profiles);
    Ok(SweepResult { profiles, best })
}

/// Select a layer on even prompt ids, evaluate on odd ones.
pub fn heldout_audit(
    cells: &[RankCell],
    arity: usize,
    constructor: Constructor,
    boot: &BootConfig,
) -> Result<HeldOutReport> {
    let k_star = constructor.expected_rank(arity);
    let relevant: Vec<&RankCell> = cells
        .iter()
        .filter(|c| c.arity == arity && c.constructor == constructor && c.k == k_star)
        .collect();
    let mut selection_ids: Vec<usize> = relevant.iter().filter(|c| c.prompt_id % 2 == 0).map(|c| c.prompt_id).collect();
    let mut evaluation_ids: Vec<usize> = relevant.iter().filter(|c| c.prompt_id % 2 == 1).map(|c| c.prompt_id).collect();
    selection_ids.sort_unstable();
    selection_ids.dedup();
    evaluation_ids.sort_unstable();
    evaluation_ids.dedup();
    if selection_ids.is_empty() || evaluation_ids.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "held-out audit for r={arity} needs both even and odd prompt ids"
        )));
    }
    let mut per_layer: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for c in relevant.iter().filter(|c| c.prompt_id % 2 == 0) {
        let e = per_layer.entry(c.layer).or_insert((0.0, 0));
        if let Some(d) = c.usable_d() {
            e.0 += d;
            e.1 += 1;
        }
    }
    let mut dev_layer = None;
    let mut best = f64::NEG_INFINITY;
    for (&l, &(sum, n)) in &per_layer {
        if n == 0 {
            continue;
        }
        let m = sum / n as f64;
        if m > best {
            best = m;
            dev_layer = Some(l);
        }
    }
    let dev_layer = dev_layer.ok_or_else(|| Error::Undefined("no usable selection cells".into()))?;
    let mut eval: Vec<(usize, f64)> = relevant
        .iter()
        .filter(|c| c.prompt_id % 2 == 1 && c.layer == dev_layer)
        .filter_map(|c| c.usable_d().map(|d| (c.prompt_id, d)))
        .collect();
    eval.sort_by_key(|&(id, _)| id);
    let values: Vec<f64> = eval.iter().map(|&(_, d)| d).collect();
    if values.is_empty() {
        return Err(Error::Undefined("no usable evaluation cells".into()));
    }
    let seed = boot_seed(boot, &[label("heldout"), label(constructor.name()), arity as u64]);
    let ci = bootstrap_ci(&values, boot.resamples, boot.level, seed)?;
    let pos = values.iter().filter(|&&d| d > 0.0).count();
    Ok(HeldOutReport {
        arity,
        constructor,
        dev_layer,
        heldout_d: ci.point,
        ci,
        pos_frac: pos as f64 / values.len() as f64,
        selection_ids,
        evaluation_ids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const BOOT: BootConfig = BootConfig {
        resamples: 200,
        level: 0.95,
        seed: 3,
    };

    fn cell(prompt_id: usize, layer: usize, k: usize, d: f64) -> RankCell {
        RankCell {
            prompt_id,
            layer,
            constructor: Constructor::ArgsOnly,
            arity: 3,
            k,
            template_id: 0,
            h_true: Some(0.0),
            h_scrambled: Some(d),
            h_rand: Some(1.0),
            d: Some(d),
            tiny_minors: 0,
        }
    }

    fn profile_of(ds: &[f64]) -> RankProfile {
        let cells: Vec<RankCell> = ds.iter().enumerate().map(|(i, &d)| cell(0, 0, i + 1, d)).collect();
        aggregate_profile(&cells, &BOOT).unwrap()
    }

    #[test]
    fn single_prompt_and_mean() {
        let p = aggregate_profile(&[cell(0, 0, 3, 0.4)], &BOOT).unwrap();
        let e = &p.entries[&3];
        assert_eq!((e.mean_d, e.ci.low, e.ci.high), (0.4, 0.4, 0.4));
        assert_eq!(p.omitted_ranks, vec![1, 2]);
        let p = aggregate_profile(&[cell(0, 0, 3, 0.2), cell(1, 0, 3, 0.4)], &BOOT).unwrap();
        assert!((p.entries[&3].mean_d - 0.3).abs() < 1e-15);
    }

    #[test]
    fn undefined_cells_are_excluded_whole() {
        let mut c = cell(1, 0, 3, 0.9);
        c.h_rand = None;
        let p = aggregate_profile(&[cell(0, 0, 3, 0.2), c], &BOOT).unwrap();
        assert_eq!(p.entries[&3].n_prompts, 1);
        assert_eq!(p.excluded_cells, 1);
    }

    #[test]
    fn margin_formula() {
        let m = constructor_margin(&profile_of(&[0.1, -0.2, 0.64]), "m").unwrap();
        assert!((m.margin - 0.54).abs() < 1e-12);
        assert_eq!(m.expected_rank, 3);
        let flat = constructor_margin(&profile_of(&[0.3, 0.3, 0.3]), "m").unwrap();
        assert_eq!(flat.margin, 0.0);
    }

    #[test]
    fn margin_can_exceed_diagonal() {
        let m = constructor_margin(&profile_of(&[-0.008, -0.05, 0.640]), "8B").unwrap();
        assert!((m.margin - 0.648).abs() < 1e-12);
        assert!(m.margin > m.d_expected);
        assert!((m.d_expected - m.margin - (-0.008)).abs() < 1e-12);
    }

    #[test]
    fn missing_expected_rank() {
        let p = profile_of(&[0.1, 0.2]);
        assert!(constructor_margin(&p, "m").is_err());
    }

    #[test]
    fn best_layer_shift_invariant_and_ties_low() {
        let mut cells = Vec::new();
        for (layer, d) in [(0, 0.1), (1, 0.5), (2, 0.5), (3, 0.2)] {
            cells.push(cell(0, layer, 3, d));
            cells.push(cell(0, layer, 1, 0.0));
        }
        let s = layer_sweep(&cells, &BOOT).unwrap();
        assert_eq!(s.best[&(3, Constructor::ArgsOnly)], 1);
        for c in &mut cells {
            c.d = c.d.map(|d| d + 7.0);
        }
        let s = layer_sweep(&cells, &BOOT).unwrap();
        assert_eq!(s.best[&(3, Constructor::ArgsOnly)], 1);
    }

    #[test]
    fn heldout_partition() {
        let mut cells = Vec::new();
        for id in 0..6 {
            cells.push(cell(id, 0, 3, 0.1));
            cells.push(cell(id, 1, 3, if id % 2 == 0 { 0.9 } else { 0.3 }));
        }
        let r = heldout_audit(&cells, 3, Constructor::ArgsOnly, &BOOT).unwrap();
        assert_eq!(r.dev_layer, 1);
        assert_eq!(r.selection_ids, vec![0, 2, 4]);
        assert_eq!(r.evaluation_ids, vec![1, 3, 5]);
        assert!((r.heldout_d - 0.3).abs() < 1e-12);
        assert_eq!(r.pos_frac, 1.0);
        let again = heldout_audit(&cells, 3, Constructor::ArgsOnly, &BOOT).unwrap();
        assert_eq!(r, again);
        let evens: Vec<RankCell> = cells.iter().filter(|c| c.prompt_id % 2 == 0).cloned().collect();
        assert!(heldout_audit(&evens, 3, Constructor::ArgsOnly, &BOOT).is_err());
    }
}
