// SPDX-License-Identifier: MIT OR Apache-2.0

//! Planted-geometry substrate with known orientation ground truth.
//!
//! Per prompt, an orthonormal anchor frame `A` (`d x (r+1)`) is drawn. Each
//! relation `j` gets an `r x r` orthogonal `Q_j` and its argument states are
//! the rows of `c · Q_j A[:, :r]ᵀ`, so the rank-`r` minor over a relation's
//! arguments has the sign of `det Q_j`. That sign equals the prompt's
//! reference sign with probability `ρ`; otherwise the first anchor row is
//! reflected. Predicates sit on the extra anchor axis with a fixed sign and
//! a smaller weight, which moves the `pred_plus_args` signal to rank
//! `r + 1`. Gaussian noise of total scale `σ` is added to every token; other
//! tokens and non-signal layers carry noise only.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::banks::ControlledArityPrompt;
use crate::diagnostics::ArityStates;
use crate::geometry::grassmann::orthonormal_basis;
use crate::geometry::procrustes::haar_orthogonal_from;
use crate::rng::{gaussian_matrix, label, seeded, stream_id};
use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantedBankConfig {
    pub rho: f64,
    pub sigma: f64,
    pub layers: usize,
    pub signal_layers: Vec<usize>,
    pub hidden_dim: usize,
    pub signal_scale: f64,
    pub predicate_weight: f64,
    pub seed: u64,
}

impl Default for PlantedBankConfig {
    fn default() -> Self {
        Self {
            rho: 0.95,
            sigma: 0.1,
            layers: 6,
            signal_layers: vec![2, 3],
            hidden_dim: 128,
            signal_scale: 1.0,
            predicate_weight: 0.5,
            seed: 7,
        }
    }
}

impl PlantedBankConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.5..=1.0).contains(&self.rho) {
            return Err(Error::InvalidArgument(format!("rho {} outside [0.5, 1]", self.rho)));
        }
        if !(self.sigma >= 0.0) {
            return Err(Error::InvalidArgument(format!("sigma {} is negative", self.sigma)));
        }
        if self.layers == 0 || self.signal_layers.iter().any(|&l| l >= self.layers) {
            return Err(Error::InvalidArgument("signal layer outside the layer range".into()));
        }
        Ok(())
    }
}

/// Per-layer planted states for one prompt.
pub fn planted_states(prompt: &ControlledArityPrompt, cfg: &PlantedBankConfig) -> Result<Vec<Matrix>> {
    cfg.validate()?;
    let r = prompt.arity;
    let d = cfg.hidden_dim;
    if r + 1 > d {
        return Err(Error::InvalidArgument(format!("hidden dim {d} too small for arity {r}")));
    }
    let n = prompt.tokens.len();
    let mut rng = seeded(cfg.seed, stream_id(&[label("planted-frame"), prompt.prompt_id as u64]));
    let anchor = orthonormal_basis(&gaussian_matrix(&mut rng, d, r + 1));
    let reference = if rng.random_bool(0.5) { 1.0 } else { -1.0 };

    let mut signal = Matrix::zeros(n, d);
    for rel in &prompt.relations {
        let mut q = haar_orthogonal_from(&mut rng, r);
        let agree = rng.random_bool(cfg.rho);
        let want = if agree { reference } else { -reference };
        if q.determinant() * want < 0.0 {
            q.row_mut(0).neg_mut();
        }
        let frame = &q * anchor.columns(0, r).transpose() * cfg.signal_scale;
        for (s, &pos) in rel.argument_positions.iter().enumerate() {
            signal.row_mut(pos).copy_from(&frame.row(s));
        }
        let pred = anchor.column(r).transpose() * (cfg.predicate_weight * reference);
        signal.row_mut(rel.predicate_position).copy_from(&pred);
    }

    let noise_scale = cfg.sigma / (d as f64).sqrt();
    let mut out = Vec::with_capacity(cfg.layers);
    for layer in 0..cfg.layers {
        let mut nrng = seeded(
            cfg.seed,
            stream_id(&[label("planted-noise"), prompt.prompt_id as u64, layer as u64]),
        );
        let mut h = gaussian_matrix(&mut nrng, n, d) * noise_scale;
        if cfg.signal_layers.contains(&layer) {
            h += &signal;
        }
        out.push(h);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct PlantedSubstrate {
    pub config: PlantedBankConfig,
}

impl ArityStates for PlantedSubstrate {
    fn n_layers(&self) -> usize {
        self.config.layers
    }

    fn model_dim(&self) -> usize {
        self.config.hidden_dim
    }

    fn states(&self, prompt: &ControlledArityPrompt) -> Result<Vec<Matrix>> {
        planted_states(prompt, &self.config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::banks::{gen_arity_bank, ArityBankConfig, Constructor};
    use crate::diagnostics::{compute_cells, CellConfig};
    use crate::geometry::make_projection;

    #[test]
    fn noiseless_consistent_bank_has_zero_true_entropy() {
        let bank = gen_arity_bank(&ArityBankConfig {
            arities: vec![3, 5],
            prompts_per_arity: 4,
            ..ArityBankConfig::default()
        })
        .unwrap();
        let cfg = PlantedBankConfig {
            rho: 1.0,
            sigma: 0.0,
            layers: 2,
            signal_layers: vec![1],
            ..PlantedBankConfig::default()
        };
        let src = PlantedSubstrate { config: cfg };
        let proj = make_projection(128, 64, 42).unwrap();
        let cells = compute_cells(
            &bank,
            &src,
            &proj,
            &CellConfig {
                layers: vec![1],
                constructors: vec![Constructor::ArgsOnly, Constructor::PredPlusArgs],
                budget: 20,
                tuple_seed: 1,
            },
        )
        .unwrap();
        for c in cells.iter().filter(|c| c.k == c.constructor.expected_rank(c.arity)) {
            assert_eq!(c.h_true, Some(0.0), "{c:?}");
        }
    }

    #[test]
    fn rejects_bad_config() {
        let bad = PlantedBankConfig {
            rho: 0.3,
            ..PlantedBankConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = PlantedBankConfig {
            signal_layers: vec![9],
            ..PlantedBankConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
