use ndarray::{ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::stats::normal_sf;

/// Denominator of the Wald statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaldMode {
    /// `mean / (sd / √n)`: standard error of the mean.
    #[default]
    StandardError,
    /// `mean / sd`.
    Literal,
}

/// One-sided Wald test outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wald {
    pub z: f64,
    pub pvalue: f64,
    pub degenerate: bool,
}

/// `z` and `p = 1 - Φ(z)`. A zero `sd` is degenerate: `p = 0` for a positive
/// mean, otherwise `p = 1`, with `z` reported as 0.
pub fn wald_pvalue(mean: f64, sd: f64, n_test: usize, mode: WaldMode) -> Wald {
    debug_assert!(sd >= 0.0);
    if !(sd > 0.0) {
        return Wald { z: 0.0, pvalue: if mean > 0.0 { 0.0 } else { 1.0 }, degenerate: true };
    }
    let denom = match mode {
        WaldMode::StandardError => sd / (n_test as f64).sqrt(),
        WaldMode::Literal => sd,
    };
    let z = mean / denom;
    Wald { z, pvalue: normal_sf(z).clamp(0.0, 1.0), degenerate: false }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSummary {
    pub mean: f64,
    pub sd: f64,
    pub wald: Wald,
}

/// Double average over samples and draws, spread of per-sample averages
/// (`n - 1` denominator) and the Wald test. Spread below rounding level of
/// the losses counts as zero.
pub fn summarize_losses(values: ArrayView2<f64>, mode: WaldMode) -> LossSummary {
    let n = values.nrows();
    let per_sample = values.mean_axis(Axis(1)).expect("at least one draw");
    let mean = per_sample.sum() / n as f64;
    let sd = if n > 1 {
        (per_sample.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let scale = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let sd = if sd <= 4.0 * f64::EPSILON * scale { 0.0 } else { sd };
    LossSummary { mean, sd, wald: wald_pvalue(mean, sd, n, mode) }
}
