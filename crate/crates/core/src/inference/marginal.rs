use ndarray::ArrayView1;

use crate::data::{Dataset, Task};
use crate::error::{invalid, Result};
use crate::inference::report::{Flag, ImportanceReport, Method, VariableImportance};
use crate::stats::{normal_sf, student_t_two_sided};

/// Univariate association test of each covariate with the outcome.
///
/// Regression: slope t-test of `y ~ 1 + x_j` with `n - 2` degrees of
/// freedom. Binary: logistic score test of the slope at zero. Both are
/// two-sided; `mean` holds `|statistic|` and `z` the signed statistic.
pub fn marginal_importance(data: &Dataset) -> Result<ImportanceReport> {
    if data.n() < 3 {
        return invalid("marginal tests need at least three samples");
    }
    let variables = (0..data.p())
        .map(|j| {
            let (stat, pvalue, se) = match data.task {
                Task::Regression => slope_t(data.x.column(j), data.y()),
                Task::Binary => score_z(data.x.column(j), data.y()),
            };
            match stat {
                Some(t) => VariableImportance {
                    variable: format!("x{}", j + 1),
                    index: j,
                    mean: t.abs(),
                    std: se,
                    z: t,
                    pvalue,
                    rank: 0,
                    flags: Vec::new(),
                },
                None => VariableImportance {
                    variable: format!("x{}", j + 1),
                    index: j,
                    mean: 0.0,
                    std: 0.0,
                    z: 0.0,
                    pvalue: 1.0,
                    rank: 0,
                    flags: vec![Flag::DegenerateVariance],
                },
            }
        })
        .collect();
    Ok(ImportanceReport::new(Method::Marginal, variables))
}

fn centered(v: ArrayView1<f64>) -> Vec<f64> {
    let m = v.mean().unwrap_or(0.0);
    v.iter().map(|a| a - m).collect()
}

/// `(t, p, se(slope))`, or `None` for a constant covariate.
fn slope_t(x: ArrayView1<f64>, y: ArrayView1<f64>) -> (Option<f64>, f64, f64) {
    let n = x.len() as f64;
    let xc = centered(x);
    let yc = centered(y);
    let sxx: f64 = xc.iter().map(|a| a * a).sum();
    let syy: f64 = yc.iter().map(|a| a * a).sum();
    if sxx <= 0.0 || sxx.sqrt() <= 1e-12 * x.iter().fold(0.0_f64, |m, v| m.max(v.abs())) * n.sqrt() {
        return (None, 1.0, 0.0);
    }
    let sxy: f64 = xc.iter().zip(&yc).map(|(a, b)| a * b).sum();
    let slope = sxy / sxx;
    let rss = (syy - slope * sxy).max(0.0);
    let se = (rss / (n - 2.0) / sxx).sqrt();
    if se == 0.0 {
        // perfect fit: saturate instead of emitting an infinity that JSON cannot hold
        let t = if slope == 0.0 { 0.0 } else { slope.signum() * f64::MAX };
        return (Some(t), if slope == 0.0 { 1.0 } else { 0.0 }, 0.0);
    }
    let t = slope / se;
    (Some(t), student_t_two_sided(t, n - 2.0), se)
}

fn score_z(x: ArrayView1<f64>, y: ArrayView1<f64>) -> (Option<f64>, f64, f64) {
    let ybar = y.mean().unwrap_or(0.0);
    let xc = centered(x);
    let sxx: f64 = xc.iter().map(|a| a * a).sum();
    let scale = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if sxx <= 0.0 || sxx.sqrt() <= 1e-12 * scale * (x.len() as f64).sqrt() {
        return (None, 1.0, 0.0);
    }
    let v = ybar * (1.0 - ybar) * sxx;
    if v <= 0.0 {
        // single-class outcome carries no information
        return (Some(0.0), 1.0, 0.0);
    }
    let u: f64 = xc.iter().zip(y).map(|(a, b)| a * (b - ybar)).sum();
    let z = u / v.sqrt();
    (Some(z), (2.0 * normal_sf(z.abs())).min(1.0), v.sqrt())
}
