// SPDX-License-Identifier: MIT OR Apache-2.0

//! Constructed relation network for the steering assay.
//!
//! Every layer applies a fixed orthogonal mixing to each token on its own.
//! The one cross-token step sits between `patch_layer` and `patch_layer + 1`:
//! each row label reads the YES/NO readout of its markers at `patch_layer`
//! and writes a soft one-hot over column codes. The answer head at
//! `readout_layer` decodes those codes and scores every listed option
//! against them.

use serde::{Deserialize, Serialize};

use crate::banks::vocab::{TokenId, Vocab, MAX_GRID};
use crate::banks::{EdgeGridBank, EdgeGridPrompt, OptionKind};
use crate::geometry::haar_orthogonal_from;
use crate::rng::{gaussian_matrix, label, seeded, stream_id, Rng};
use crate::steering::PatchPlan;
use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GlassBoxConfig {
    pub depth: usize,
    pub hidden_dim: usize,
    pub patch_layer: usize,
    pub readout_layer: usize,
    pub seed: u64,
    /// Half-distance between YES and NO along the label direction.
    pub label_scale: f64,
    /// Slope of the marker-to-binding sigmoid.
    pub binding_gain: f64,
    /// Size of the column code written into a row label.
    pub write_gain: f64,
    pub head_gain: f64,
    pub position_scale: f64,
    pub max_len: usize,
}

impl Default for GlassBoxConfig {
    fn default() -> Self {
        GlassBoxConfig {
            depth: 12,
            hidden_dim: 128,
            patch_layer: 5,
            readout_layer: 9,
            seed: 17,
            label_scale: 1.0,
            binding_gain: 6.0,
            write_gain: 2.0,
            head_gain: 10.0,
            position_scale: 0.3,
            max_len: 512,
        }
    }
}

impl GlassBoxConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0 < self.patch_layer && self.patch_layer < self.readout_layer && self.readout_layer < self.depth) {
            return Err(Error::Config(format!(
                "need 0 < patch_layer ({}) < readout_layer ({}) < depth ({})",
                self.patch_layer, self.readout_layer, self.depth
            )));
        }
        if self.hidden_dim < 2 + MAX_GRID + 8 {
            return Err(Error::Config(format!(
                "hidden_dim {} leaves no room for the label and column codes",
                self.hidden_dim
            )));
        }
        for (name, v) in [
            ("label_scale", self.label_scale),
            ("binding_gain", self.binding_gain),
            ("write_gain", self.write_gain),
            ("head_gain", self.head_gain),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.position_scale.is_finite() && self.position_scale >= 0.0) {
            return Err(Error::Config("position_scale must be non-negative".into()));
        }
        Ok(())
    }
}

/// Hidden states per layer (embedding layer first) and the option logits
/// in answer-letter order.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub layers: Vec<Matrix>,
    pub answer_logits: Vec<f64>,
}

/// Grid structure the network reads from a token sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct GridLayout {
    pub n: usize,
    pub rows: Vec<usize>,
    pub markers: Vec<Vec<usize>>,
    /// Per answer letter: the `[row][col]` template the option asserts.
    pub templates: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Other,
    Row(usize),
    Col(usize),
    Answer(usize),
    Yes,
    No,
    None,
    All,
    Options,
    Semi,
}

pub struct GlassBox {
    pub config: GlassBoxConfig,
    embeddings: Matrix,
    positions: Matrix,
    /// Per-layer mixing, `h_{l+1} = h_l M_l` for each token.
    mixing: Vec<Matrix>,
    label_at_patch: Vec<f64>,
    codes_after_patch: Vec<Vec<f64>>,
    codes_at_readout: Vec<Vec<f64>>,
    roles: Vec<Role>,
}

fn rng_for(seed: u64, what: &str) -> Rng {
    seeded(seed, stream_id(&[label("glass-box"), label(what)]))
}

/// `x M` with a fixed summation order, shared by every forward variant.
fn mix_row(m: &Matrix, x: &[f64], out: &mut [f64]) {
    let d = x.len();
    let data = m.as_slice();
    for (j, o) in out.iter_mut().enumerate() {
        let col = &data[j * d..(j + 1) * d];
        let mut acc = [0.0f64; 4];
        for (xs, cs) in x.chunks_exact(4).zip(col.chunks_exact(4)) {
            for k in 0..4 {
                acc[k] += xs[k] * cs[k];
            }
        }
        let mut tail = 0.0;
        for i in (d - d % 4)..d {
            tail += x[i] * col[i];
        }
        *o = (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail;
    }
}

fn put_row(m: &mut Matrix, i: usize, v: &[f64]) {
    for (j, &x) in v.iter().enumerate() {
        m[(i, j)] = x;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn is_permutation(t: &[Vec<f64>]) -> bool {
    let n = t.len();
    let mut seen = vec![false; n];
    for row in t {
        let ones: Vec<usize> = (0..row.len()).filter(|&b| row[b] == 1.0).collect();
        if ones.len() != 1 || row.iter().any(|&v| v != 0.0 && v != 1.0) || seen[ones[0]] {
            return false;
        }
        seen[ones[0]] = true;
    }
    true
}

impl GlassBox {
    pub fn build(config: GlassBoxConfig) -> Result<Self> {
        config.validate()?;
        let d = config.hidden_dim;
        let vocab = Vocab::standard();
        let basis = haar_orthogonal_from(&mut rng_for(config.seed, "basis"), d);
        let general = basis.columns(1 + MAX_GRID, d - 1 - MAX_GRID).into_owned();
        let in_general = |rng: &mut Rng, scale: f64| -> Vec<f64> {
            let g = gaussian_matrix(rng, general.ncols(), 1);
            let v = &general * (&g / g.norm()) * scale;
            v.as_slice().to_vec()
        };

        let mut rng = rng_for(config.seed, "embeddings");
        let mut embeddings = Matrix::zeros(vocab.len(), d);
        for t in 0..vocab.len() {
            put_row(&mut embeddings, t, &in_general(&mut rng, 1.0));
        }
        let label_dir: Vec<f64> = basis.column(0).iter().copied().collect();
        let shared = in_general(&mut rng, 1.0);
        for (tok, sign) in [("YES", 1.0), ("NO", -1.0)] {
            let row: Vec<f64> = (0..d)
                .map(|i| shared[i] + sign * config.label_scale * label_dir[i])
                .collect();
            put_row(&mut embeddings, vocab.id(tok) as usize, &row);
        }

        let mut rng = rng_for(config.seed, "positions");
        let mut positions = Matrix::zeros(config.max_len, d);
        for i in 0..config.max_len {
            put_row(&mut positions, i, &in_general(&mut rng, config.position_scale));
        }

        let mut rng = rng_for(config.seed, "mixing");
        let mixing: Vec<Matrix> = (0..config.depth).map(|_| haar_orthogonal_from(&mut rng, d)).collect();

        let carry = |v: Vec<f64>, from: usize, to: usize| -> Vec<f64> {
            let mut cur = v;
            let mut next = vec![0.0; d];
            for m in &mixing[from..to] {
                mix_row(m, &cur, &mut next);
                std::mem::swap(&mut cur, &mut next);
            }
            cur
        };
        let label_at_patch = carry(label_dir, 0, config.patch_layer);
        let codes: Vec<Vec<f64>> = (0..MAX_GRID)
            .map(|b| basis.column(1 + b).iter().copied().collect())
            .collect();
        let codes_after_patch: Vec<Vec<f64>> = codes
            .iter()
            .map(|c| carry(c.clone(), 0, config.patch_layer + 1))
            .collect();
        let codes_at_readout: Vec<Vec<f64>> = codes_after_patch
            .iter()
            .map(|c| carry(c.clone(), config.patch_layer + 1, config.readout_layer))
            .collect();

        let mut roles = vec![Role::Other; vocab.len()];
        for i in 0..MAX_GRID {
            roles[vocab.row(i) as usize] = Role::Row(i);
            roles[vocab.col(i) as usize] = Role::Col(i);
        }
        for i in 0..4 {
            roles[vocab.answer(i) as usize] = Role::Answer(i);
        }
        for (tok, role) in [
            ("YES", Role::Yes),
            ("NO", Role::No),
            ("NONE", Role::None),
            ("ALL", Role::All),
            ("OPTIONS", Role::Options),
            (";", Role::Semi),
        ] {
            roles[vocab.id(tok) as usize] = role;
        }

        Ok(GlassBox {
            config,
            embeddings,
            positions,
            mixing,
            label_at_patch,
            codes_after_patch,
            codes_at_readout,
            roles,
        })
    }

    fn role(&self, t: TokenId) -> Result<Role> {
        self.roles
            .get(t as usize)
            .copied()
            .ok_or(Error::OutOfRange { index: t as usize, len: self.roles.len() })
    }

    /// Reads the grid and option listing off the token ids.
    pub fn parse_layout(&self, tokens: &[TokenId]) -> Result<GridLayout> {
        let bad = |msg: &str| Error::InvalidArgument(format!("glass box cannot read prompt: {msg}"));
        let mut rows: Vec<usize> = Vec::new();
        let mut markers: Vec<Vec<Option<usize>>> = Vec::new();
        let mut i = 0;
        let mut current: Option<usize> = None;
        let mut pending_col: Option<usize> = None;
        while i < tokens.len() {
            match self.role(tokens[i])? {
                Role::Options => break,
                Role::Row(a) => {
                    if a != rows.len() {
                        return Err(bad("row labels out of order"));
                    }
                    rows.push(i);
                    markers.push(vec![None; MAX_GRID]);
                    current = Some(a);
                }
                Role::Col(b) if current.is_some() => pending_col = Some(b),
                Role::Yes | Role::No => {
                    let (a, b) = match (current, pending_col.take()) {
                        (Some(a), Some(b)) => (a, b),
                        _ => return Err(bad("marker outside a row listing")),
                    };
                    markers[a][b] = Some(i);
                }
                _ => {}
            }
            i += 1;
        }
        let n = rows.len();
        if n == 0 || n > MAX_GRID {
            return Err(bad("no grid rows"));
        }
        let markers: Vec<Vec<usize>> = markers
            .iter()
            .map(|r| r[..n].iter().map(|m| m.ok_or_else(|| bad("missing marker"))).collect())
            .collect::<Result<_>>()?;

        let mut templates: Vec<Option<Vec<Vec<f64>>>> = vec![None; 4];
        let mut letter: Option<usize> = None;
        let mut listed: Vec<usize> = Vec::new();
        let mut fill: Option<f64> = None;
        for &t in &tokens[i.min(tokens.len())..] {
            match self.role(t)? {
                Role::Answer(l) => {
                    letter = Some(l);
                    listed.clear();
                    fill = None;
                }
                Role::Col(b) if letter.is_some() => listed.push(b),
                Role::None if letter.is_some() => fill = Some(0.0),
                Role::All if letter.is_some() => fill = Some(1.0),
                Role::Semi => {
                    if let Some(l) = letter.take() {
                        let t = match fill {
                            Some(v) => vec![vec![v; n]; n],
                            None if listed.len() == n && listed.iter().all(|&b| b < n) => (0..n)
                                .map(|a| (0..n).map(|b| if listed[a] == b { 1.0 } else { 0.0 }).collect())
                                .collect(),
                            None => return Err(bad("option listing does not cover every row")),
                        };
                        templates[l] = Some(t);
                    }
                }
                _ => {}
            }
        }
        let templates = templates
            .into_iter()
            .map(|t| t.ok_or_else(|| bad("missing answer option")))
            .collect::<Result<_>>()?;
        Ok(GridLayout {
            n,
            rows,
            markers,
            templates,
        })
    }

    fn embed_row(&self, token: TokenId, pos: usize, out: &mut [f64]) -> Result<()> {
        if pos >= self.config.max_len {
            return Err(Error::OutOfRange { index: pos, len: self.config.max_len });
        }
        let e = self.embeddings.row(token as usize);
        let p = self.positions.row(pos);
        for (j, o) in out.iter_mut().enumerate() {
            *o = e[j] + p[j];
        }
        Ok(())
    }

    /// Binding strengths `p(a, b)` from the marker states at `patch_layer`.
    fn bindings(&self, patch_states: &Matrix, layout: &GridLayout) -> Vec<Vec<f64>> {
        let beta = self.config.binding_gain;
        layout
            .markers
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&m| {
                        let x: Vec<f64> = patch_states.row(m).iter().copied().collect();
                        sigmoid(beta * dot(&x, &self.label_at_patch))
                    })
                    .collect()
            })
            .collect()
    }

    /// Row label state after the binding step: mixing plus the written code.
    fn bind_row(&self, x: &[f64], p: &[f64], out: &mut [f64]) {
        mix_row(&self.mixing[self.config.patch_layer], x, out);
        for (b, &pb) in p.iter().enumerate() {
            let w = &self.codes_after_patch[b];
            for (o, wj) in out.iter_mut().zip(w) {
                *o += self.config.write_gain * pb * wj;
            }
        }
    }

    /// Option logits in letter order from the readout-layer states.
    pub fn head(&self, readout: &Matrix, layout: &GridLayout) -> Vec<f64> {
        let n = layout.n;
        let decoded: Vec<Vec<f64>> = layout
            .rows
            .iter()
            .map(|&r| {
                let x: Vec<f64> = readout.row(r).iter().copied().collect();
                (0..n)
                    .map(|b| (dot(&x, &self.codes_at_readout[b]) / self.config.write_gain).clamp(0.0, 1.0))
                    .collect()
            })
            .collect();
        layout
            .templates
            .iter()
            .map(|t| {
                let agree: Vec<f64> = (0..n)
                    .map(|a| (0..n).map(|b| 1.0 - (decoded[a][b] - t[a][b]).abs()).product())
                    .collect();
                let pooled = if is_permutation(t) {
                    (agree.iter().map(|v| v.ln()).sum::<f64>() / n as f64).exp()
                } else {
                    agree.iter().sum::<f64>() / n as f64
                };
                self.config.head_gain * pooled
            })
            .collect()
    }

    fn check_plan(&self, plan: &PatchPlan, len: usize) -> Result<()> {
        let d = self.config.hidden_dim;
        if plan.replacement.shape() != (plan.positions.len(), d) {
            return Err(Error::Dimension(format!(
                "plan replaces {} positions with a {:?} matrix",
                plan.positions.len(),
                plan.replacement.shape()
            )));
        }
        if let Some(&p) = plan.positions.iter().find(|&&p| p >= len) {
            return Err(Error::OutOfRange { index: p, len });
        }
        Ok(())
    }

    /// Full forward pass; the plan's states replace layer `patch_layer`
    /// before later layers are computed.
    pub fn forward_with_patch(&self, tokens: &[TokenId], plan: Option<&PatchPlan>) -> Result<ForwardTrace> {
        let layout = self.parse_layout(tokens)?;
        let (n, d) = (tokens.len(), self.config.hidden_dim);
        if let Some(plan) = plan {
            self.check_plan(plan, n)?;
        }
        let mut layers = Vec::with_capacity(self.config.depth + 1);
        let mut h = Matrix::zeros(n, d);
        let mut buf = vec![0.0; d];
        for (i, &t) in tokens.iter().enumerate() {
            self.embed_row(t, i, &mut buf)?;
            put_row(&mut h, i, &buf);
        }
        layers.push(h);
        let mut row_of = vec![None; n];
        for (a, &r) in layout.rows.iter().enumerate() {
            row_of[r] = Some(a);
        }
        for l in 0..self.config.depth {
            if l == self.config.patch_layer {
                if let Some(plan) = plan {
                    let cur = layers.last_mut().expect("embedding layer present");
                    for (k, &p) in plan.positions.iter().enumerate() {
                        cur.set_row(p, &plan.replacement.row(k));
                    }
                }
            }
            let prev = layers.last().expect("at least one layer");
            let binding = (l == self.config.patch_layer).then(|| self.bindings(prev, &layout));
            let mut next = Matrix::zeros(n, d);
            let mut x = vec![0.0; d];
            for i in 0..n {
                x.iter_mut().zip(prev.row(i).iter()).for_each(|(a, b)| *a = *b);
                match (&binding, row_of[i]) {
                    (Some(p), Some(a)) => self.bind_row(&x, &p[a], &mut buf),
                    _ => mix_row(&self.mixing[l], &x, &mut buf),
                }
                put_row(&mut next, i, &buf);
            }
            layers.push(next);
        }
        let answer_logits = self.head(&layers[self.config.readout_layer], &layout);
        Ok(ForwardTrace { layers, answer_logits })
    }

    /// Readout-layer states and logits for a patched run, recomputing only
    /// the rows a patch can reach. Bitwise equal to the matching rows of
    /// `forward_with_patch`.
    pub fn patched_readout(&self, base: &ForwardTrace, layout: &GridLayout, plan: &PatchPlan) -> Result<(Matrix, Vec<f64>)> {
        let (pl, rl, d) = (self.config.patch_layer, self.config.readout_layer, self.config.hidden_dim);
        let n = base.layers[0].nrows();
        self.check_plan(plan, n)?;
        let mut patch_states = base.layers[pl].clone();
        for (k, &p) in plan.positions.iter().enumerate() {
            patch_states.set_row(p, &plan.replacement.row(k));
        }
        let mut readout = base.layers[rl].clone();
        let binding = self.bindings(&patch_states, layout);
        let mut dirty: Vec<(usize, Option<usize>)> = plan.positions.iter().map(|&p| (p, None)).collect();
        for (a, &r) in layout.rows.iter().enumerate() {
            match dirty.iter_mut().find(|(p, _)| *p == r) {
                Some(slot) => slot.1 = Some(a),
                None => dirty.push((r, Some(a))),
            }
        }
        let mut cur = vec![0.0; d];
        let mut next = vec![0.0; d];
        for &(pos, row) in &dirty {
            cur.iter_mut().zip(patch_states.row(pos).iter()).for_each(|(a, b)| *a = *b);
            match row {
                Some(a) => self.bind_row(&cur, &binding[a], &mut next),
                None => mix_row(&self.mixing[pl], &cur, &mut next),
            }
            std::mem::swap(&mut cur, &mut next);
            for m in &self.mixing[pl + 1..rl] {
                mix_row(m, &cur, &mut next);
                std::mem::swap(&mut cur, &mut next);
            }
            put_row(&mut readout, pos, &cur);
        }
        let logits = self.head(&readout, layout);
        Ok((readout, logits))
    }

    /// States at `layer <= patch_layer` for selected positions; every such
    /// layer is token-local.
    pub fn states_before_binding(&self, tokens: &[TokenId], positions: &[usize], layer: usize) -> Result<Matrix> {
        if layer > self.config.patch_layer {
            return Err(Error::InvalidArgument(format!(
                "layer {layer} is past the binding step at {}",
                self.config.patch_layer
            )));
        }
        let d = self.config.hidden_dim;
        let mut out = Matrix::zeros(positions.len(), d);
        let mut cur = vec![0.0; d];
        let mut next = vec![0.0; d];
        for (k, &p) in positions.iter().enumerate() {
            let t = *tokens.get(p).ok_or(Error::OutOfRange { index: p, len: tokens.len() })?;
            self.embed_row(t, p, &mut cur)?;
            for m in &self.mixing[..layer] {
                mix_row(m, &cur, &mut next);
                std::mem::swap(&mut cur, &mut next);
            }
            put_row(&mut out, k, &cur);
        }
        Ok(out)
    }

    /// Label direction as seen at `patch_layer`.
    pub fn label_direction(&self) -> &[f64] {
        &self.label_at_patch
    }
}

/// Option logits re-ordered to (clean, corrupt, all-off, all-on).
pub fn logits_by_kind(prompt: &EdgeGridPrompt, logits: &[f64]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for kind in OptionKind::ALL {
        out[kind as usize] = logits[prompt.option(kind).letter];
    }
    out
}

/// Softmax over the four options, in kind order.
pub fn option_probs(prompt: &EdgeGridPrompt, logits: &[f64]) -> [f64; 4] {
    let by_kind = logits_by_kind(prompt, logits);
    let max = by_kind.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = by_kind.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = exp.iter().sum();
    [exp[0] / z, exp[1] / z, exp[2] / z, exp[3] / z]
}

/// Clean-option minus corrupt-option logit.
pub fn logit_gap(prompt: &EdgeGridPrompt, logits: &[f64]) -> f64 {
    let k = logits_by_kind(prompt, logits);
    k[0] - k[1]
}

pub fn argmax_kind(prompt: &EdgeGridPrompt, logits: &[f64]) -> OptionKind {
    let k = logits_by_kind(prompt, logits);
    let mut best = 0;
    for i in 1..4 {
        if k[i] > k[best] {
            best = i;
        }
    }
    OptionKind::ALL[best]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompetenceReport {
    pub clean_accuracy: f64,
    pub corrupt_answer_selection: f64,
    pub mean_logit_gap: f64,
    pub threshold: f64,
    pub pass: bool,
}

pub const DEFAULT_GATE_THRESHOLD: f64 = 0.85;

impl CompetenceReport {
    pub fn from_values(clean_accuracy: f64, corrupt_answer_selection: f64, mean_logit_gap: f64, threshold: f64) -> Result<Self> {
        for v in [clean_accuracy, corrupt_answer_selection] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidArgument(format!("accuracy {v} outside [0, 1]")));
            }
        }
        Ok(CompetenceReport {
            clean_accuracy,
            corrupt_answer_selection,
            mean_logit_gap,
            threshold,
            pass: clean_accuracy >= threshold && corrupt_answer_selection >= threshold,
        })
    }
}

/// Per-prompt clean and corrupt forwards, shared by the gate and the
/// steering suites.
pub struct BaseTraces {
    pub clean: ForwardTrace,
    pub corrupt: ForwardTrace,
}

pub fn base_traces(model: &GlassBox, prompt: &EdgeGridPrompt) -> Result<BaseTraces> {
    Ok(BaseTraces {
        clean: model.forward_with_patch(&prompt.tokens_clean, None)?,
        corrupt: model.forward_with_patch(&prompt.tokens_corrupt, None)?,
    })
}

pub fn competence_from_traces(prompts: &[EdgeGridPrompt], traces: &[&BaseTraces], threshold: f64) -> Result<CompetenceReport> {
    if prompts.is_empty() || prompts.len() != traces.len() {
        return Err(Error::InvalidArgument("competence gate needs one trace pair per prompt".into()));
    }
    let n = prompts.len() as f64;
    let mut clean_ok = 0usize;
    let mut corrupt_ok = 0usize;
    let mut gap = 0.0;
    for (p, t) in prompts.iter().zip(traces) {
        clean_ok += (argmax_kind(p, &t.clean.answer_logits) == OptionKind::Clean) as usize;
        corrupt_ok += (argmax_kind(p, &t.corrupt.answer_logits) == OptionKind::Corrupt) as usize;
        gap += logit_gap(p, &t.clean.answer_logits) - logit_gap(p, &t.corrupt.answer_logits);
    }
    CompetenceReport::from_values(clean_ok as f64 / n, corrupt_ok as f64 / n, gap / n, threshold)
}

pub fn competence_gate(model: &GlassBox, bank: &EdgeGridBank, threshold: f64) -> Result<CompetenceReport> {
    let traces = bank
        .prompts
        .iter()
        .map(|p| base_traces(model, p))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&BaseTraces> = traces.iter().collect();
    competence_from_traces(&bank.prompts, &refs, threshold)
}
