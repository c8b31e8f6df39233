// SPDX-License-Identifier: MIT OR Apache-2.0

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::banks::{enumerate_tuples, random_tuples, scrambled_tuples, ArityBank, Constructor, ControlledArityPrompt, TupleSet};
use crate::geometry::minors::minor_det;
use crate::geometry::{project_states, sign_entropy, thin_svd, MinorSign, ProjectionMatrix, SvdFactors};
use crate::{Error, Matrix, Result};

/// Minors with magnitude below this are counted for reporting only.
pub const TINY_MINOR: f64 = 1e-12;

/// The matched true / scrambled / random sets for one (prompt, constructor, k).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TupleSets {
    pub true_set: TupleSet,
    pub scrambled: TupleSet,
    pub random: TupleSet,
}

impl TupleSets {
    pub fn build(prompt: &ControlledArityPrompt, constructor: Constructor, k: usize, budget: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            true_set: enumerate_tuples(prompt, constructor, k, budget, seed)?,
            scrambled: scrambled_tuples(prompt, constructor, k, budget, seed)?,
            random: random_tuples(prompt, constructor, k, budget, seed)?,
        })
    }

    pub fn k(&self) -> usize {
        self.true_set.k
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankCell {
    pub prompt_id: usize,
    pub layer: usize,
    pub constructor: Constructor,
    pub arity: usize,
    pub k: usize,
    pub template_id: usize,
    pub h_true: Option<f64>,
    pub h_scrambled: Option<f64>,
    pub h_rand: Option<f64>,
    pub d: Option<f64>,
    pub tiny_minors: usize,
}

impl RankCell {
    /// All three selectors have a defined entropy.
    pub fn defined(&self) -> bool {
        self.h_true.is_some() && self.h_scrambled.is_some() && self.h_rand.is_some()
    }

    /// `D` if the whole cell is usable for aggregation.
    pub fn usable_d(&self) -> Option<f64> {
        if self.defined() {
            self.d
        } else {
            None
        }
    }
}

fn selector_entropy(f: &SvdFactors, set: &TupleSet, tiny: &mut usize) -> Result<Option<f64>> {
    let mut signs = Vec::with_capacity(set.tuples.len());
    for t in &set.tuples {
        let det = minor_det(&f.u, t, set.k)?;
        if det.abs() < TINY_MINOR {
            *tiny += 1;
        }
        signs.push(MinorSign::from_det(det));
    }
    Ok(sign_entropy(&signs).bits())
}

pub fn rank_cell_from_factors(
    f: &SvdFactors,
    sets: &TupleSets,
    prompt: &ControlledArityPrompt,
    layer: usize,
) -> Result<RankCell> {
    let k = sets.k();
    if k > f.rank_capacity() {
        return Err(Error::InvalidArgument(format!(
            "rank {k} exceeds min(n, p) = {}",
            f.rank_capacity()
        )));
    }
    let mut tiny = 0;
    let h_true = selector_entropy(f, &sets.true_set, &mut tiny)?;
    let h_scrambled = selector_entropy(f, &sets.scrambled, &mut tiny)?;
    let h_rand = selector_entropy(f, &sets.random, &mut tiny)?;
    let d = match (h_true, h_scrambled) {
        (Some(t), Some(s)) => Some(s - t),
        _ => None,
    };
    Ok(RankCell {
        prompt_id: prompt.prompt_id,
        layer,
        constructor: sets.true_set.constructor,
        arity: prompt.arity,
        k,
        template_id: prompt.template_id,
        h_true,
        h_scrambled,
        h_rand,
        d,
        tiny_minors: tiny,
    })
}

pub fn prompt_rank_cell(
    states: &Matrix,
    p: &ProjectionMatrix,
    sets: &TupleSets,
    prompt: &ControlledArityPrompt,
    layer: usize,
) -> Result<RankCell> {
    if states.nrows() != prompt.tokens.len() {
        return Err(Error::Dimension(format!(
            "prompt {} has {} tokens but {} state rows",
            prompt.prompt_id,
            prompt.tokens.len(),
            states.nrows()
        )));
    }
    let x = project_states(states, p)?;
    let f = thin_svd(&x)?;
    rank_cell_from_factors(&f, sets, prompt, layer)
}

/// Per-layer hidden states for controlled-arity prompts.
pub trait ArityStates: Sync {
    fn n_layers(&self) -> usize;
    fn model_dim(&self) -> usize;
    /// One `tokens x d` matrix per layer.
    fn states(&self, prompt: &ControlledArityPrompt) -> Result<Vec<Matrix>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellConfig {
    pub layers: Vec<usize>,
    pub constructors: Vec<Constructor>,
    pub budget: usize,
    pub tuple_seed: u64,
}

/// All rank cells for a bank, ordered by (prompt, layer, constructor, k).
pub fn compute_cells(
    bank: &ArityBank,
    src: &dyn ArityStates,
    p: &ProjectionMatrix,
    cfg: &CellConfig,
) -> Result<Vec<RankCell>> {
    if let Some(&l) = cfg.layers.iter().find(|&&l| l >= src.n_layers()) {
        return Err(Error::InvalidArgument(format!(
            "layer {l} outside substrate depth {}",
            src.n_layers()
        )));
    }
    let per_prompt: Vec<Vec<RankCell>> = bank
        .prompts
        .par_iter()
        .map(|prompt| -> Result<Vec<RankCell>> {
            let mut sets = Vec::new();
            for &c in &cfg.constructors {
                for k in 1..=c.max_rank(prompt.arity) {
                    sets.push(TupleSets::build(prompt, c, k, cfg.budget, cfg.tuple_seed)?);
                }
            }
            let layers = src.states(prompt)?;
            let mut out = Vec::with_capacity(cfg.layers.len() * sets.len());
            for &l in &cfg.layers {
                let h = &layers[l];
                if h.nrows() != prompt.tokens.len() {
                    return Err(Error::Dimension(format!(
                        "prompt {} layer {l}: {} rows for {} tokens",
                        prompt.prompt_id,
                        h.nrows(),
                        prompt.tokens.len()
                    )));
                }
                let f = thin_svd(&project_states(h, p)?)?;
                for s in &sets {
                    out.push(rank_cell_from_factors(&f, s, prompt, l)?);
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(per_prompt.into_iter().flatten().collect())
}
