// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Vector};

/// Denominator floor shared by every normalized recovery.
pub const EPS_GAP: f64 = 1e-6;

/// `steps + 1` evenly spaced fractions from 0 to 1, computed as `i / steps`
/// so the grid points are exact where they can be.
pub fn alpha_grid(steps: usize) -> Vec<f64> {
    (0..=steps).map(|i| i as f64 / steps as f64).collect()
}

pub fn check_grid(alphas: &[f64]) -> Result<()> {
    if alphas.len() < 2 || alphas[0] != 0.0 || *alphas.last().unwrap() != 1.0 {
        return Err(Error::InvalidArgument("alpha grid must start at 0 and end at 1".into()));
    }
    if alphas.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("alpha grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Trapezoid rule over consecutive pairs.
pub fn trapezoid(alphas: &[f64], values: &[f64]) -> Result<f64> {
    check_grid(alphas)?;
    if alphas.len() != values.len() {
        return Err(Error::Dimension(format!(
            "{} grid points but {} values",
            alphas.len(),
            values.len()
        )));
    }
    Ok(alphas
        .windows(2)
        .zip(values.windows(2))
        .map(|(a, v)| (a[1] - a[0]) * (v[0] + v[1]) / 2.0)
        .sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitGapTriple {
    pub g_clean: f64,
    pub g_corrupt: f64,
    pub g_patch: Vec<f64>,
}

/// `None` when the clean/corrupt gap is within `EPS_GAP`.
pub fn behavior_recovery(g_clean: f64, g_corrupt: f64, g_patch: f64) -> Option<f64> {
    let den = g_clean - g_corrupt;
    if den.abs() > EPS_GAP {
        Some((g_patch - g_corrupt) / den)
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualVectorTriple {
    pub v_clean: Option<Vector>,
    pub v_corrupt: Option<Vector>,
    pub v_patch: Vec<Option<Vector>>,
}

/// `(v_patch - v_corrupt)·v_clean / (v_clean - v_corrupt)·v_clean`, which is
/// `(cos_patch - cos_corrupt) / (1 - cos_corrupt)` for unit vectors and hits
/// 0 and 1 exactly at the endpoints.
pub fn residual_recovery(v_clean: &Vector, v_corrupt: &Vector, v_patch: &Vector) -> Option<f64> {
    let den = (v_clean - v_corrupt).dot(v_clean);
    if den <= EPS_GAP {
        return None;
    }
    Some((v_patch - v_corrupt).dot(v_clean) / den)
}

pub fn coupled_auc(alphas: &[f64], r_coup: &[f64]) -> Result<f64> {
    trapezoid(alphas, r_coup)
}

/// Index of the all-off and all-on options in the canonical option order
/// (clean, corrupt, all-off, all-on).
pub const OFF_TARGET: [usize; 2] = [2, 3];

pub fn off_target_mass(probs: &[f64]) -> Result<f64> {
    if probs.len() != 4 {
        return Err(Error::Dimension(format!("expected 4 option probabilities, got {}", probs.len())));
    }
    let total: f64 = probs.iter().sum();
    if probs.iter().any(|p| !(0.0..=1.0).contains(p)) || (total - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidArgument(format!("malformed option distribution {probs:?}")));
    }
    Ok(OFF_TARGET.iter().map(|&i| probs[i]).sum())
}

pub fn off_target_auc(alphas: &[f64], probs: &[[f64; 4]]) -> Result<f64> {
    let mass = probs
        .iter()
        .map(|p| off_target_mass(p))
        .collect::<Result<Vec<_>>>()?;
    trapezoid(alphas, &mass)
}

/// Per-prompt recovery readouts along one method's path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryCurve {
    pub alphas: Vec<f64>,
    pub r_beh: Vec<Option<f64>>,
    pub r_res: Vec<Option<f64>>,
    pub r_coup: Vec<Option<f64>>,
    pub coupled_auc: Option<f64>,
    pub off_target: Vec<f64>,
    pub off_target_auc: f64,
}

impl RecoveryCurve {
    pub fn new(
        alphas: Vec<f64>,
        r_beh: Vec<Option<f64>>,
        r_res: Vec<Option<f64>>,
        probs: &[[f64; 4]],
    ) -> Result<Self> {
        check_grid(&alphas)?;
        let n = alphas.len();
        if r_beh.len() != n || r_res.len() != n || probs.len() != n {
            return Err(Error::Dimension("recovery series length differs from the alpha grid".into()));
        }
        let r_coup: Vec<Option<f64>> = r_beh
            .iter()
            .zip(&r_res)
            .map(|(b, r)| Some((*b)? * (*r)?))
            .collect();
        let coupled = if r_coup.iter().all(Option::is_some) {
            let vals: Vec<f64> = r_coup.iter().map(|v| v.unwrap()).collect();
            Some(trapezoid(&alphas, &vals)?)
        } else {
            None
        };
        let off_target = probs.iter().map(|p| off_target_mass(p)).collect::<Result<Vec<_>>>()?;
        let off_target_auc = trapezoid(&alphas, &off_target)?;
        Ok(RecoveryCurve {
            alphas,
            r_beh,
            r_res,
            r_coup,
            coupled_auc: coupled,
            off_target,
            off_target_auc,
        })
    }

    pub fn endpoint_beh(&self) -> Option<f64> {
        *self.r_beh.last()?
    }

    pub fn endpoint_res(&self) -> Option<f64> {
        *self.r_res.last()?
    }
}
