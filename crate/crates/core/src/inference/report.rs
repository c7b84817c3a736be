use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::wald::LossSummary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Cpi,
    Pi,
    Loco,
    Marginal,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Cpi => "cpi",
            Method::Pi => "pi",
            Method::Loco => "loco",
            Method::Marginal => "marginal",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cpi" => Ok(Method::Cpi),
            "pi" | "permfit" => Ok(Method::Pi),
            "loco" => Ok(Method::Loco),
            "marginal" => Ok(Method::Marginal),
            other => Err(Error::UnknownTag(other.to_string())),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    DegenerateVariance,
}

/// Importance of a single variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableImportance {
    pub variable: String,
    pub index: usize,
    pub mean: f64,
    pub std: f64,
    pub z: f64,
    pub pvalue: f64,
    /// 1 = most significant.
    pub rank: usize,
    pub flags: Vec<Flag>,
}

impl VariableImportance {
    pub fn from_summary(index: usize, s: &LossSummary) -> Self {
        VariableImportance {
            variable: format!("x{}", index + 1),
            index,
            mean: s.mean,
            std: s.sd,
            z: s.wald.z,
            pvalue: s.wald.pvalue,
            rank: 0,
            flags: if s.wald.degenerate { vec![Flag::DegenerateVariance] } else { Vec::new() },
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.flags.contains(&Flag::DegenerateVariance)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub method: Method,
    pub variables: Vec<VariableImportance>,
}

impl ImportanceReport {
    /// Builds the report and assigns ranks by ascending p-value, ties broken
    /// by larger mean importance, then by index.
    pub fn new(method: Method, mut variables: Vec<VariableImportance>) -> Self {
        let mut order: Vec<usize> = (0..variables.len()).collect();
        order.sort_by(|&a, &b| {
            let (va, vb) = (&variables[a], &variables[b]);
            va.pvalue.total_cmp(&vb.pvalue).then(vb.mean.total_cmp(&va.mean)).then(va.index.cmp(&vb.index))
        });
        for (r, &k) in order.iter().enumerate() {
            variables[k].rank = r + 1;
        }
        ImportanceReport { method, variables }
    }

    pub fn pvalues(&self) -> Vec<f64> {
        self.variables.iter().map(|v| v.pvalue).collect()
    }

    pub fn zscores(&self) -> Vec<f64> {
        self.variables.iter().map(|v| v.z).collect()
    }

    pub fn means(&self) -> Vec<f64> {
        self.variables.iter().map(|v| v.mean).collect()
    }

    /// Replace default `x{j}` labels with column names.
    pub fn with_names(mut self, names: &[String]) -> Self {
        for v in &mut self.variables {
            if let Some(name) = names.get(v.index) {
                v.variable = name.clone();
            }
        }
        self
    }
}
