// SPDX-License-Identifier: MIT OR Apache-2.0

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng::seeded;
use crate::{Error, Result};

/// Percentile bootstrap interval for a mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCI {
    pub point: f64,
    pub low: f64,
    pub high: f64,
    pub resamples: usize,
    pub level: f64,
    pub seed: u64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn bootstrap_ci(values: &[f64], resamples: usize, level: f64, seed: u64) -> Result<BootstrapCI> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("bootstrap of an empty sample".into()));
    }
    if resamples == 0 || !(0.0..1.0).contains(&level) {
        return Err(Error::InvalidArgument(format!(
            "bootstrap needs resamples > 0 and level in [0, 1); got {resamples}, {level}"
        )));
    }
    let point = mean(values);
    let n = values.len();
    let mut rng = seeded(seed, 0xB007);
    let mut means = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let mut acc = 0.0;
        for _ in 0..n {
            acc += values[rng.random_range(0..n)];
        }
        means.push(acc / n as f64);
    }
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let low = quantile(&means, tail);
    let high = quantile(&means, 1.0 - tail);
    Ok(BootstrapCI {
        point,
        low,
        high,
        resamples,
        level,
        seed,
    })
}
