//! Detection metrics and calibration diagnostics.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::stats::normal_cdf;

/// Nominal level used throughout unless configured otherwise.
pub const DEFAULT_ALPHA: f64 = 0.05;

/// Per-run evaluation against ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    /// Undefined when the support is all-true or all-false.
    pub auc: Option<f64>,
    pub type1_error: Option<f64>,
    pub power: Option<f64>,
    pub runtime_seconds: f64,
    pub pvalues: Vec<f64>,
}

impl EvalResult {
    pub fn evaluate(pvalues: &[f64], support: &[bool], alpha: f64, runtime_seconds: f64) -> Result<Self> {
        if pvalues.len() != support.len() {
            return Err(Error::DimensionMismatch { expected: support.len(), got: pvalues.len() });
        }
        Ok(EvalResult {
            auc: auc_score(pvalues, support).ok(),
            type1_error: type1_error(pvalues, support, alpha).ok(),
            power: power(pvalues, support, alpha).ok(),
            runtime_seconds,
            pvalues: pvalues.to_vec(),
        })
    }
}

/// Midranks (1-based) of `values`, ties sharing their average rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// ROC-AUC of `scores` (higher = more likely positive), ties counted as 1/2.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: labels.len(), got: scores.len() });
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric("AUC needs both positive and negative labels".into()));
    }
    let ranks = midranks(scores);
    let pos_rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    let u = pos_rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}

/// AUC of the ranking by increasing p-value against the true support.
pub fn auc_score(pvalues: &[f64], support: &[bool]) -> Result<f64> {
    let scores: Vec<f64> = pvalues.iter().map(|p| -p).collect();
    roc_auc(&scores, support)
}

fn rejection_rate(pvalues: &[f64], support: &[bool], want: bool, alpha: f64) -> Option<f64> {
    let group: Vec<f64> = pvalues.iter().zip(support).filter(|(_, &s)| s == want).map(|(&p, _)| p).collect();
    if group.is_empty() {
        return None;
    }
    Some(group.iter().filter(|&&p| p < alpha).count() as f64 / group.len() as f64)
}

/// Share of null variables with `p < alpha`.
pub fn type1_error(pvalues: &[f64], support: &[bool], alpha: f64) -> Result<f64> {
    rejection_rate(pvalues, support, false, alpha).ok_or_else(|| Error::UndefinedMetric("no null variables".into()))
}

/// Share of informative variables with `p < alpha`.
pub fn power(pvalues: &[f64], support: &[bool], alpha: f64) -> Result<f64> {
    rejection_rate(pvalues, support, true, alpha).ok_or_else(|| Error::UndefinedMetric("no informative variables".into()))
}

/// Survival function of the Kolmogorov distribution, `P(K > λ)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.0 {
        // P(K ≤ λ) = √(2π)/λ Σ_{k≥1} exp(-(2k-1)² π² / (8λ²))
        let c = -std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let mut sum = 0.0;
        for k in 1..=50 {
            let odd = (2 * k - 1) as f64;
            let term = (c * odd * odd).exp();
            sum += term;
            if term < 1e-17 {
                break;
            }
        }
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * sum).clamp(0.0, 1.0)
    } else {
        let mut sum = 0.0;
        for k in 1..=100 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * lambda * lambda).exp();
            sum += if k % 2 == 1 { term } else { -term };
            if term < 1e-17 {
                break;
            }
        }
        (2.0 * sum).clamp(0.0, 1.0)
    }
}

/// One-sample KS distance of `xs` against `cdf`.
pub fn ks_statistic<F: Fn(f64) -> f64>(xs: &[f64], cdf: F) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted.iter().enumerate().fold(0.0_f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
    })
}

/// KS test of z-scores against `N(0,1)`: `(D, asymptotic p-value)`.
pub fn ks_normality(zscores: &[f64]) -> Result<(f64, f64)> {
    if zscores.len() < 20 {
        return invalid(format!("KS normality check needs at least 20 scores, got {}", zscores.len()));
    }
    if zscores.iter().any(|z| !z.is_finite()) {
        return invalid("z-scores must be finite");
    }
    let d = ks_statistic(zscores, normal_cdf);
    Ok((d, kolmogorov_sf((zscores.len() as f64).sqrt() * d)))
}

/// Two-sample KS test: `(D, asymptotic p-value)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.is_empty() || b.is_empty() {
        return invalid("two-sample KS needs non-empty samples");
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j, mut d) = (0, 0, 0.0_f64);
    while i < na && j < nb {
        let v = a[i].min(b[j]);
        while i < na && a[i] <= v {
            i += 1;
        }
        while j < nb && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let en = ((na * nb) as f64 / (na + nb) as f64).sqrt();
    Ok((d, kolmogorov_sf(en * d)))
}

/// `(expected uniform quantile, observed p-value)` pairs on the `(i-0.5)/n` grid.
pub fn qq_points(pvalues: &[f64]) -> Result<Vec<(f64, f64)>> {
    if pvalues.is_empty() {
        return invalid("QQ plot needs at least one p-value");
    }
    let mut sorted = pvalues.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    Ok(sorted.into_iter().enumerate().map(|(i, p)| ((i as f64 + 0.5) / n, p)).collect())
}

/// Largest `|observed - expected|` over QQ points.
pub fn qq_max_deviation(points: &[(f64, f64)]) -> f64 {
    points.iter().map(|(e, o)| (o - e).abs()).fold(0.0, f64::max)
}

/// Dvoretzky–Kiefer–Wolfowitz band half-width at confidence `1 - alpha`.
pub fn dkw_bound(n: usize, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt()
}
