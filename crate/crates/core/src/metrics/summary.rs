// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use super::edge::EdgePluckerTriple;
use super::recovery::RecoveryCurve;
use crate::diagnostics::{bootstrap_ci, BootConfig, BootstrapCI};
use crate::rng::{label, stream_id};
use crate::steering::SteeringMethod;
use crate::{Error, Result};

/// One prompt's readouts along one method's path.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptCurve {
    pub prompt_id: usize,
    pub curve: RecoveryCurve,
    pub edge: Option<EdgePluckerTriple>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathQualityRow {
    pub model: String,
    pub method: SteeringMethod,
    pub endpoint_beh: Option<BootstrapCI>,
    pub endpoint_res: Option<BootstrapCI>,
    pub corr: f64,
    pub corr_degenerate: bool,
    pub coupled_auc: Option<BootstrapCI>,
    pub off_target_auc: f64,
    pub edge_rec: Option<f64>,
    pub edge_score: Option<f64>,
    pub n_prompts: usize,
    pub excluded_beh: usize,
    pub excluded_res: usize,
    pub excluded_edge: usize,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Pearson correlation; `(0.0, true)` when either series has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<(f64, bool)> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::Dimension(format!("pearson over {} and {} points", x.len(), y.len())));
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok((0.0, true));
    }
    Ok(((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0), false))
}

fn ci(values: &[f64], boot: &BootConfig, method: SteeringMethod, field: &str) -> Result<Option<BootstrapCI>> {
    if values.is_empty() {
        return Ok(None);
    }
    let seed = stream_id(&[boot.seed, label(method.name()), label(field)]);
    bootstrap_ci(values, boot.resamples, boot.level, seed).map(Some)
}

/// Per-α mean over prompts with a defined value; `None` where no prompt is.
fn prompt_average(series: &[&[Option<f64>]], n_alpha: usize) -> Vec<Option<f64>> {
    (0..n_alpha)
        .map(|i| {
            let vals: Vec<f64> = series.iter().filter_map(|s| s[i]).collect();
            (!vals.is_empty()).then(|| mean(&vals))
        })
        .collect()
}

pub fn summarize_method(
    model: &str,
    method: SteeringMethod,
    prompts: &[PromptCurve],
    boot: &BootConfig,
) -> Result<PathQualityRow> {
    if prompts.is_empty() {
        return Err(Error::InvalidArgument("no prompt curves to summarize".into()));
    }
    let n_alpha = prompts[0].curve.alphas.len();
    if prompts.iter().any(|p| p.curve.alphas != prompts[0].curve.alphas) {
        return Err(Error::InvalidArgument("prompt curves use different alpha grids".into()));
    }
    let beh: Vec<f64> = prompts.iter().filter_map(|p| p.curve.endpoint_beh()).collect();
    let res: Vec<f64> = prompts.iter().filter_map(|p| p.curve.endpoint_res()).collect();
    let auc: Vec<f64> = prompts.iter().filter_map(|p| p.curve.coupled_auc).collect();
    let off: Vec<f64> = prompts.iter().map(|p| p.curve.off_target_auc).collect();

    let beh_series: Vec<&[Option<f64>]> = prompts.iter().map(|p| p.curve.r_beh.as_slice()).collect();
    let res_series: Vec<&[Option<f64>]> = prompts.iter().map(|p| p.curve.r_res.as_slice()).collect();
    let avg_beh = prompt_average(&beh_series, n_alpha);
    let avg_res = prompt_average(&res_series, n_alpha);
    let (xs, ys): (Vec<f64>, Vec<f64>) = avg_beh
        .iter()
        .zip(&avg_res)
        .filter_map(|(b, r)| Some(((*b)?, (*r)?)))
        .unzip();
    let (corr, corr_degenerate) = if xs.is_empty() { (0.0, true) } else { pearson(&xs, &ys)? };

    let edges: Vec<&EdgePluckerTriple> = prompts.iter().filter_map(|p| p.edge.as_ref()).collect();
    let edge_end: Vec<f64> = edges.iter().filter_map(|e| e.endpoint()).collect();
    let edge_score: Vec<f64> = edges.iter().filter_map(|e| e.coupled_edge_score).collect();

    Ok(PathQualityRow {
        model: model.to_string(),
        method,
        endpoint_beh: ci(&beh, boot, method, "endpoint_beh")?,
        endpoint_res: ci(&res, boot, method, "endpoint_res")?,
        corr,
        corr_degenerate,
        coupled_auc: ci(&auc, boot, method, "coupled_auc")?,
        off_target_auc: mean(&off),
        edge_rec: (!edge_end.is_empty()).then(|| mean(&edge_end)),
        edge_score: (!edge_score.is_empty()).then(|| mean(&edge_score)),
        n_prompts: prompts.len(),
        excluded_beh: prompts.len() - beh.len(),
        excluded_res: prompts.len() - res.len(),
        excluded_edge: prompts.len() - edge_end.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::recovery::alpha_grid;
    use crate::rng::{seeded, standard_normal};

    fn curve(beh: impl Fn(f64) -> f64, res: impl Fn(f64) -> f64) -> RecoveryCurve {
        let grid = alpha_grid(20);
        RecoveryCurve::new(
            grid.clone(),
            grid.iter().map(|&a| Some(beh(a))).collect(),
            grid.iter().map(|&a| Some(res(a))).collect(),
            &vec![[1.0, 0.0, 0.0, 0.0]; 21],
        )
        .unwrap()
    }

    fn boot() -> BootConfig {
        BootConfig { resamples: 300, level: 0.95, seed: 3 }
    }

    #[test]
    fn perfect_single_prompt() {
        let p = PromptCurve { prompt_id: 0, curve: curve(|_| 1.0, |_| 1.0), edge: None };
        let row = summarize_method("m", SteeringMethod::ShapeOnly, &[p], &boot()).unwrap();
        assert_eq!(row.endpoint_beh.as_ref().unwrap().point, 1.0);
        assert_eq!(row.endpoint_res.as_ref().unwrap().point, 1.0);
        assert_eq!((row.corr, row.corr_degenerate), (0.0, true));
        assert_eq!(row.coupled_auc.unwrap().point, 1.0);
        assert_eq!(row.edge_rec, None);
    }

    #[test]
    fn endpoint_mean_of_two() {
        let a = PromptCurve { prompt_id: 0, curve: curve(|x| 0.9 * x, |x| x), edge: None };
        let b = PromptCurve { prompt_id: 1, curve: curve(|x| 1.1 * x, |x| x), edge: None };
        let row = summarize_method("m", SteeringMethod::LinearMarker, &[a, b], &boot()).unwrap();
        assert!((row.endpoint_beh.unwrap().point - 1.0).abs() < 1e-15);
        assert!((row.corr - 1.0).abs() < 1e-12);
        assert!(!row.corr_degenerate);
    }

    #[test]
    fn ci_brackets_mean_on_32_prompts() {
        let mut rng = seeded(8, 0);
        let prompts: Vec<PromptCurve> = (0..32)
            .map(|i| {
                let e = 0.8 + 0.1 * standard_normal(&mut rng);
                PromptCurve { prompt_id: i, curve: curve(move |x| e * x, |x| x * x), edge: None }
            })
            .collect();
        let row = summarize_method("m", SteeringMethod::GrassmannShape, &prompts, &boot()).unwrap();
        let ci = row.endpoint_beh.unwrap();
        assert!(ci.low < ci.point && ci.point < ci.high);
        assert_eq!(ci.resamples, 300);
    }

    #[test]
    fn pearson_examples() {
        let (up, d1) = pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap();
        let (down, d2) = pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap();
        assert!((up - 1.0).abs() < 1e-15 && (down + 1.0).abs() < 1e-15 && !d1 && !d2);
        assert_eq!(pearson(&[1.0, 1.0], &[0.0, 5.0]).unwrap(), (0.0, true));
        assert!(pearson(&[1.0], &[]).is_err());
    }
}
