// SPDX-License-Identifier: MIT OR Apache-2.0

use rand::seq::{IndexedRandom, SliceRandom};
use serde::{Deserialize, Serialize};

use super::recovery::{trapezoid, EPS_GAP};
use crate::geometry::{minor_sign, project_states, sign_entropy, thin_svd, ProjectionMatrix, SvdFactors};
use crate::rng::{label, seeded, stream_id, Rng};
use crate::{Error, Matrix, Result};

/// Edge-orientation readout of one state matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgePluckerValue {
    /// `(D2 + D3) / 2`, `None` if either contrast is undefined.
    pub scalar: Option<f64>,
    pub d2: Option<f64>,
    pub d3: Option<f64>,
    /// Random-tuple entropies, logged for audit only.
    pub h_rand2: Option<f64>,
    pub h_rand3: Option<f64>,
}

fn entropy_of(f: &SvdFactors, tuples: &[Vec<usize>], k: usize) -> Result<Option<f64>> {
    let signs = tuples
        .iter()
        .map(|t| minor_sign(f, t, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(sign_entropy(&signs).bits())
}

fn windows(order: &[usize], k: usize, budget: usize) -> Vec<Vec<usize>> {
    order.windows(k).take(budget).map(<[usize]>::to_vec).collect()
}

/// Edge scalar from precomputed factors of the projected states.
pub fn edge_plucker_from_factors(f: &SvdFactors, e: &[usize], budget: usize, seed: u64) -> Result<EdgePluckerValue> {
    let mut rng = seeded(seed, stream_id(&[label("edge-plucker")]));
    let mut shuffled = e.to_vec();
    shuffled.shuffle(&mut rng);
    edge_plucker_with_shuffle(f, e, &shuffled, budget, &mut rng)
}

/// Edge scalar with an explicit scrambled assignment: `shuffled[i]` is the
/// state row placed at role slot `i`.
pub fn edge_plucker_with_shuffle(
    f: &SvdFactors,
    e: &[usize],
    shuffled: &[usize],
    budget: usize,
    rng: &mut Rng,
) -> Result<EdgePluckerValue> {
    if e.len() < 3 {
        return Err(Error::InvalidArgument(format!("edge set needs at least 3 markers, got {}", e.len())));
    }
    if budget == 0 {
        return Err(Error::InvalidArgument("tuple budget must be positive".into()));
    }
    if shuffled.len() != e.len() {
        return Err(Error::Dimension("scrambled assignment must cover the edge set".into()));
    }
    let n = f.u.nrows();
    let pool: Vec<usize> = (0..n).filter(|i| !e.contains(i)).collect();

    let mut d = [None, None];
    let mut h_rand = [None, None];
    for (slot, k) in [2usize, 3].into_iter().enumerate() {
        if f.rank_capacity() < k {
            continue;
        }
        let truth = windows(e, k, budget);
        let scr = windows(shuffled, k, budget);
        let ht = entropy_of(f, &truth, k)?;
        let hs = entropy_of(f, &scr, k)?;
        d[slot] = match (hs, ht) {
            (Some(s), Some(t)) => Some(s - t),
            _ => None,
        };
        if pool.len() >= k {
            let rand_tuples: Vec<Vec<usize>> = (0..truth.len())
                .map(|_| pool.choose_multiple(rng, k).copied().collect())
                .collect();
            h_rand[slot] = entropy_of(f, &rand_tuples, k)?;
        }
    }
    let scalar = match (d[0], d[1]) {
        (Some(a), Some(b)) => Some((a + b) / 2.0),
        _ => None,
    };
    Ok(EdgePluckerValue {
        scalar,
        d2: d[0],
        d3: d[1],
        h_rand2: h_rand[0],
        h_rand3: h_rand[1],
    })
}

/// `D^{2,3}` over the edge markers `e` (role order) of one prompt's states.
pub fn edge_plucker_scalar(
    states: &Matrix,
    p: &ProjectionMatrix,
    e: &[usize],
    budget: usize,
    seed: u64,
) -> Result<EdgePluckerValue> {
    if let Some(&bad) = e.iter().find(|&&i| i >= states.nrows()) {
        return Err(Error::OutOfRange { index: bad, len: states.nrows() });
    }
    let f = thin_svd(&project_states(states, p)?)?;
    edge_plucker_from_factors(&f, e, budget, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgePluckerTriple {
    pub d_clean: Option<f64>,
    pub d_corrupt: Option<f64>,
    pub d_patch: Vec<Option<f64>>,
    pub r_edge: Vec<Option<f64>>,
    /// Trapezoid path average of `R_beh · R_edge`.
    pub coupled_edge_score: Option<f64>,
}

pub fn edge_plucker_recovery(d_clean: f64, d_corrupt: f64, d_patch: f64) -> Option<f64> {
    let den = d_clean - d_corrupt;
    (den.abs() > EPS_GAP).then(|| (d_patch - d_corrupt) / den)
}

impl EdgePluckerTriple {
    pub fn new(
        alphas: &[f64],
        d_clean: Option<f64>,
        d_corrupt: Option<f64>,
        d_patch: Vec<Option<f64>>,
        r_beh: &[Option<f64>],
    ) -> Result<Self> {
        let r_edge: Vec<Option<f64>> = d_patch
            .iter()
            .map(|dp| edge_plucker_recovery(d_clean?, d_corrupt?, (*dp)?))
            .collect();
        let prod: Option<Vec<f64>> = r_edge
            .iter()
            .zip(r_beh)
            .map(|(e, b)| Some((*e)? * (*b)?))
            .collect();
        let coupled_edge_score = match prod {
            Some(v) => Some(trapezoid(alphas, &v)?),
            None => None,
        };
        Ok(EdgePluckerTriple {
            d_clean,
            d_corrupt,
            d_patch,
            r_edge,
            coupled_edge_score,
        })
    }

    pub fn endpoint(&self) -> Option<f64> {
        *self.r_edge.last()?
    }
}
