// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::banks::vocab::TokenId;
use crate::banks::{changed_edges, ChangedEdgeSet, EdgeGridBank, EdgeGridPrompt};
use crate::diagnostics::BootConfig;
use crate::geometry::{make_projection, ProjectionMatrix};
use crate::harness::{
    base_traces, competence_from_traces, logit_gap, option_probs, BaseTraces, CompetenceReport, GlassBox, GridLayout,
};
use crate::metrics::{
    alpha_grid, behavior_recovery, edge_plucker_scalar, residual_blade_vector, residual_recovery, summarize_method,
    EdgePluckerTriple, PathQualityRow, PromptCurve, RecoveryCurve,
};
use crate::rng::{label, seeded, stream_id};
use crate::steering::{build_plan, decompose_frame, HammingProvider, PathInputs, RelationFrameCloud, SteeringMethod};
use crate::{Error, Matrix, Result, Vector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SteerConfig {
    pub model_tag: String,
    pub alpha_steps: usize,
    pub projection_dim: usize,
    pub projection_seed: u64,
    pub subspace_dim: usize,
    pub tuple_budget: usize,
    pub path_seed: u64,
    pub bootstrap_resamples: usize,
    pub site_order_resamples: usize,
    pub bootstrap_level: f64,
    pub bootstrap_seed: u64,
    pub gate_threshold: f64,
    pub methods: Vec<SteeringMethod>,
    pub edge_metrics: bool,
}

impl Default for SteerConfig {
    fn default() -> Self {
        SteerConfig {
            model_tag: "glass-box".into(),
            alpha_steps: 20,
            projection_dim: 64,
            projection_seed: 42,
            subspace_dim: 8,
            tuple_budget: 8,
            path_seed: 5,
            bootstrap_resamples: 300,
            site_order_resamples: 500,
            bootstrap_level: 0.95,
            bootstrap_seed: 13,
            gate_threshold: crate::harness::DEFAULT_GATE_THRESHOLD,
            methods: SteeringMethod::DEFAULT.to_vec(),
            edge_metrics: true,
        }
    }
}

impl SteerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha_steps == 0 {
            return Err(Error::Config("alpha_steps must be positive".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no steering methods selected".into()));
        }
        let mut seen = self.methods.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.methods.len() {
            return Err(Error::Config("steering method listed twice".into()));
        }
        Ok(())
    }
}

/// One (prompt, method, α) record of the long CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRow {
    pub model: String,
    pub prompt_id: usize,
    pub method: SteeringMethod,
    pub alpha: f64,
    pub g_patch: f64,
    pub r_beh: Option<f64>,
    pub r_res: Option<f64>,
    pub r_coup: Option<f64>,
    pub off_target: f64,
    pub p_clean: f64,
    pub p_corrupt: f64,
    pub p_all_off: f64,
    pub p_all_on: f64,
    pub edge_d: Option<f64>,
    pub r_edge: Option<f64>,
    pub donor_prompt_id: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SteerAudit {
    /// Wrong-site (prompt, α) evaluations whose marker states moved.
    pub wrong_site_marker_changes: usize,
    pub wrong_site_checks: usize,
    pub degenerate_gap_prompts: usize,
    pub degenerate_residual_prompts: usize,
    pub undefined_edge_prompts: usize,
}

pub struct SteeringRun {
    pub gate: CompetenceReport,
    pub rows: Vec<PathRow>,
    pub curves: BTreeMap<SteeringMethod, Vec<PromptCurve>>,
    pub summary: Vec<PathQualityRow>,
    pub audit: SteerAudit,
}

struct Prepared<'a> {
    prompt: &'a EdgeGridPrompt,
    traces: BaseTraces,
    layout: GridLayout,
    changed: ChangedEdgeSet,
    corrupt: RelationFrameCloud,
    clean: RelationFrameCloud,
    wrong: RelationFrameCloud,
    g_clean: f64,
    g_corrupt: f64,
    v_clean: Option<Vector>,
    v_corrupt: Option<Vector>,
    d_clean: Option<f64>,
    d_corrupt: Option<f64>,
}

struct Intermediate<'a> {
    model: &'a GlassBox,
    prompt: &'a EdgeGridPrompt,
    changed: &'a ChangedEdgeSet,
}

impl HammingProvider for Intermediate<'_> {
    fn changed_rows(&self) -> usize {
        self.changed.entries.len()
    }

    fn states(&self, switched: &[usize]) -> Result<Matrix> {
        let mut map = self.prompt.corrupt_map.clone();
        for &i in switched {
            let (row, clean, _) = self.changed.entries[i];
            map[row] = clean;
        }
        let tokens: Vec<TokenId> = self.prompt.render_map(&map).tokens;
        self.model
            .states_before_binding(&tokens, &self.changed.marker_positions, self.model.config.patch_layer)
    }
}

fn prompt_seed(seed: u64, prompt_id: usize, what: &str) -> u64 {
    stream_id(&[seed, prompt_id as u64, label(what)])
}

fn residual_vector(states: &Matrix, p: &ProjectionMatrix, prompt: &EdgeGridPrompt, changed: &ChangedEdgeSet) -> Result<Option<Vector>> {
    residual_blade_vector(states, p, changed, &prompt.row_token_positions, &prompt.col_token_positions)
}

fn prepare<'a>(
    model: &GlassBox,
    prompt: &'a EdgeGridPrompt,
    p: &ProjectionMatrix,
    cfg: &SteerConfig,
) -> Result<Prepared<'a>> {
    let traces = base_traces(model, prompt)?;
    let layout = model.parse_layout(&prompt.tokens_corrupt)?;
    let changed = changed_edges(prompt);
    if changed.is_empty() {
        return Err(Error::Audit(format!("edge prompt {} has no changed rows", prompt.prompt_id)));
    }
    let (pl, rl) = (model.config.patch_layer, model.config.readout_layer);
    let e = &changed.marker_positions;
    let corrupt = decompose_frame(e.clone(), traces.corrupt.layers[pl].select_rows(e.iter()))?;
    let clean = decompose_frame(e.clone(), traces.clean.layers[pl].select_rows(e.iter()))?;
    let scaffold = prompt.scaffold_positions();
    let mut rng = seeded(prompt_seed(cfg.path_seed, prompt.prompt_id, "wrong-sites"), 0);
    let mut sites: Vec<usize> = scaffold.choose_multiple(&mut rng, e.len()).copied().collect();
    sites.sort_unstable();
    if sites.len() != e.len() {
        return Err(Error::Audit(format!("edge prompt {} has too few scaffold sites", prompt.prompt_id)));
    }
    let wrong = decompose_frame(sites.clone(), traces.corrupt.layers[pl].select_rows(sites.iter()))?;
    let g_clean = logit_gap(prompt, &traces.clean.answer_logits);
    let g_corrupt = logit_gap(prompt, &traces.corrupt.answer_logits);
    let v_clean = residual_vector(&traces.clean.layers[rl], p, prompt, &changed)?;
    let v_corrupt = residual_vector(&traces.corrupt.layers[rl], p, prompt, &changed)?;
    let (d_clean, d_corrupt) = if cfg.edge_metrics {
        let seed = prompt_seed(cfg.path_seed, prompt.prompt_id, "edge");
        (
            edge_plucker_scalar(&traces.clean.layers[rl], p, e, cfg.tuple_budget, seed)?.scalar,
            edge_plucker_scalar(&traces.corrupt.layers[rl], p, e, cfg.tuple_budget, seed)?.scalar,
        )
    } else {
        (None, None)
    };
    Ok(Prepared {
        prompt,
        traces,
        layout,
        changed,
        corrupt,
        clean,
        wrong,
        g_clean,
        g_corrupt,
        v_clean,
        v_corrupt,
        d_clean,
        d_corrupt,
    })
}

struct PromptResult {
    rows: Vec<PathRow>,
    curves: Vec<(SteeringMethod, PromptCurve)>,
    wrong_site_changes: usize,
    wrong_site_checks: usize,
}

fn evaluate_prompt(
    model: &GlassBox,
    prep: &Prepared<'_>,
    donor: &Prepared<'_>,
    p: &ProjectionMatrix,
    cfg: &SteerConfig,
    methods: &[SteeringMethod],
) -> Result<PromptResult> {
    let alphas = alpha_grid(cfg.alpha_steps);
    let rl = model.config.readout_layer;
    let prompt = prep.prompt;
    let provider = Intermediate { model, prompt, changed: &prep.changed };
    let mut inputs = PathInputs::new(
        &prep.corrupt,
        &prep.clean,
        cfg.subspace_dim,
        prompt_seed(cfg.path_seed, prompt.prompt_id, "paths"),
    );
    inputs.donor_clean = Some(&donor.clean);
    inputs.donor_corrupt = Some(&donor.corrupt);
    inputs.donor_prompt_id = Some(donor.prompt.prompt_id);
    inputs.wrong_sites = Some(&prep.wrong);
    inputs.hamming = Some(&provider);
    let edge_seed = prompt_seed(cfg.path_seed, prompt.prompt_id, "edge");
    let base_readout = &prep.traces.corrupt.layers[rl];
    let all_markers = prompt.all_marker_positions();

    let mut out = PromptResult { rows: Vec::new(), curves: Vec::new(), wrong_site_changes: 0, wrong_site_checks: 0 };
    for &method in methods {
        let mut r_beh = Vec::with_capacity(alphas.len());
        let mut r_res = Vec::with_capacity(alphas.len());
        let mut probs = Vec::with_capacity(alphas.len());
        let mut d_patch = Vec::with_capacity(alphas.len());
        let mut gaps = Vec::with_capacity(alphas.len());
        let mut donors = Vec::with_capacity(alphas.len());
        for &alpha in &alphas {
            let plan = build_plan(method, &inputs, alpha)?;
            let (readout, logits) = model.patched_readout(&prep.traces.corrupt, &prep.layout, &plan)?;
            if method.patches_wrong_sites() {
                out.wrong_site_checks += 1;
                let moved = all_markers.iter().any(|&m| readout.row(m) != base_readout.row(m));
                out.wrong_site_changes += moved as usize;
            }
            let g = logit_gap(prompt, &logits);
            gaps.push(g);
            r_beh.push(behavior_recovery(prep.g_clean, prep.g_corrupt, g));
            let v = residual_vector(&readout, p, prompt, &prep.changed)?;
            r_res.push(match (&prep.v_clean, &prep.v_corrupt, &v) {
                (Some(c), Some(k), Some(v)) => residual_recovery(c, k, v),
                _ => None,
            });
            probs.push(option_probs(prompt, &logits));
            d_patch.push(if cfg.edge_metrics {
                edge_plucker_scalar(&readout, p, &prep.changed.marker_positions, cfg.tuple_budget, edge_seed)?.scalar
            } else {
                None
            });
            donors.push(plan.donor_prompt_id);
        }
        let curve = RecoveryCurve::new(alphas.clone(), r_beh, r_res, &probs)?;
        let edge = if cfg.edge_metrics {
            Some(EdgePluckerTriple::new(&alphas, prep.d_clean, prep.d_corrupt, d_patch, &curve.r_beh)?)
        } else {
            None
        };
        for (i, &alpha) in alphas.iter().enumerate() {
            out.rows.push(PathRow {
                model: cfg.model_tag.clone(),
                prompt_id: prompt.prompt_id,
                method,
                alpha,
                g_patch: gaps[i],
                r_beh: curve.r_beh[i],
                r_res: curve.r_res[i],
                r_coup: curve.r_coup[i],
                off_target: curve.off_target[i],
                p_clean: probs[i][0],
                p_corrupt: probs[i][1],
                p_all_off: probs[i][2],
                p_all_on: probs[i][3],
                edge_d: edge.as_ref().and_then(|e| e.d_patch[i]),
                r_edge: edge.as_ref().and_then(|e| e.r_edge[i]),
                donor_prompt_id: donors[i],
            });
        }
        out.curves.push((method, PromptCurve { prompt_id: prompt.prompt_id, curve, edge }));
    }
    Ok(out)
}

/// Evaluates every (prompt, method, α) on the glass box.
pub fn run_steering(
    model: &GlassBox,
    bank: &EdgeGridBank,
    cfg: &SteerConfig,
    methods: &[SteeringMethod],
    resamples: usize,
) -> Result<SteeringRun> {
    cfg.validate()?;
    if bank.prompts.is_empty() {
        return Err(Error::InvalidArgument("edge-grid bank is empty".into()));
    }
    let p = make_projection(model.config.hidden_dim, cfg.projection_dim, cfg.projection_seed)?;
    let prepared: Vec<Prepared<'_>> = bank
        .prompts
        .par_iter()
        .map(|pr| prepare(model, pr, &p, cfg))
        .collect::<Result<_>>()?;
    let traces: Vec<&BaseTraces> = prepared.iter().map(|x| &x.traces).collect();
    let gate = competence_from_traces(&bank.prompts, &traces, cfg.gate_threshold)?;
    let n = prepared.len();
    let results: Vec<PromptResult> = (0..n)
        .into_par_iter()
        .map(|i| evaluate_prompt(model, &prepared[i], &prepared[(i + 1) % n], &p, cfg, methods))
        .collect::<Result<_>>()?;

    let mut audit = SteerAudit::default();
    for prep in &prepared {
        audit.degenerate_gap_prompts += behavior_recovery(prep.g_clean, prep.g_corrupt, 0.0).is_none() as usize;
        audit.degenerate_residual_prompts += match (&prep.v_clean, &prep.v_corrupt) {
            (Some(c), Some(k)) => residual_recovery(c, k, c).is_none() as usize,
            _ => 1,
        };
        audit.undefined_edge_prompts += match (prep.d_clean, prep.d_corrupt) {
            (Some(c), Some(k)) => crate::metrics::edge_plucker_recovery(c, k, c).is_none() as usize,
            _ => 1,
        };
    }
    let mut rows = Vec::with_capacity(n * methods.len() * (cfg.alpha_steps + 1));
    let mut curves: BTreeMap<SteeringMethod, Vec<PromptCurve>> = BTreeMap::new();
    for r in results {
        rows.extend(r.rows);
        audit.wrong_site_changes_add(r.wrong_site_changes, r.wrong_site_checks);
        for (m, c) in r.curves {
            curves.entry(m).or_default().push(c);
        }
    }
    let boot = BootConfig { resamples, level: cfg.bootstrap_level, seed: cfg.bootstrap_seed };
    let summary = methods
        .iter()
        .map(|m| summarize_method(&cfg.model_tag, *m, &curves[m], &boot))
        .collect::<Result<Vec<_>>>()?;
    Ok(SteeringRun { gate, rows, curves, summary, audit })
}

impl SteerAudit {
    fn wrong_site_changes_add(&mut self, changes: usize, checks: usize) {
        self.wrong_site_marker_changes += changes;
        self.wrong_site_checks += checks;
    }
}
