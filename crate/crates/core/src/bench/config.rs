use std::collections::HashSet;
use std::path::PathBuf;

use serde::{Deserialize, Deserializer, Serialize};

use crate::condsampler::{Construction, SamplerConfig};
use crate::error::{invalid, Result};
use crate::inference::{Method, WaldMode, DEFAULT_B};
use crate::learners::LearnerSpec;
use crate::metrics::DEFAULT_ALPHA;
use crate::simgen::ScenarioSpec;

/// Experiment description, read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub scenarios: Vec<ScenarioEntry>,
    pub methods: Vec<MethodEntry>,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default = "default_b", rename = "B", alias = "b")]
    pub b: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub wald: WaldMode,
    /// Base conditional-sampler settings; methods may override depth and
    /// construction.
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_runs() -> usize {
    30
}

fn default_b() -> usize {
    DEFAULT_B
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEntry {
    /// Label used in reports and file names.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(flatten)]
    pub spec: ScenarioSpec,
}

impl ScenarioEntry {
    pub fn new(spec: ScenarioSpec) -> Self {
        ScenarioEntry { name: None, spec }
    }

    pub fn label(&self) -> String {
        match &self.name {
            Some(n) => n.clone(),
            None => format!("{}_n{}_p{}_rho{}", self.spec.scenario, self.spec.n, self.spec.p, self.spec.rho),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodEntry {
    #[serde(default)]
    pub name: Option<String>,
    pub method: Method,
    /// `"mlp"`, `"rf"`, or a full learner object. Ignored by `marginal`.
    #[serde(default, deserialize_with = "learner_field")]
    pub learner: LearnerSpec,
    #[serde(default)]
    pub construction: Construction,
    /// Fixed conditional-forest depth; absent means cross-validated.
    #[serde(default)]
    pub sampler_depth: Option<usize>,
}

fn learner_field<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<LearnerSpec, D::Error> {
    let v = serde_json::Value::deserialize(d)?;
    match v {
        serde_json::Value::String(s) => s.parse().map_err(serde::de::Error::custom),
        other => serde_json::from_value(other).map_err(serde::de::Error::custom),
    }
}

impl MethodEntry {
    pub fn new(method: Method, learner: LearnerSpec) -> Self {
        MethodEntry { name: None, method, learner, construction: Construction::Additive, sampler_depth: None }
    }

    pub fn with_construction(mut self, c: Construction) -> Self {
        self.construction = c;
        self
    }

    pub fn with_sampler_depth(mut self, depth: usize) -> Self {
        self.sampler_depth = Some(depth);
        self
    }

    pub fn uses_learner(&self) -> bool {
        self.method != Method::Marginal
    }

    pub fn label(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        if !self.uses_learner() {
            return self.method.to_string();
        }
        let mut label = format!("{}-{}", self.method, self.learner.label());
        if self.method == Method::Cpi {
            if self.construction == Construction::LeafSampling {
                label.push_str("-leaf");
            }
            if let Some(d) = self.sampler_depth {
                label.push_str(&format!("-d{d}"));
            }
        }
        label
    }

    /// Sampler settings for this method on top of the bench-wide base.
    pub fn sampler(&self, base: &SamplerConfig) -> SamplerConfig {
        let mut cfg = base.clone();
        cfg.construction = self.construction;
        match self.sampler_depth {
            Some(d) => cfg.with_depth(Some(d)),
            None => cfg,
        }
    }
}

impl BenchConfig {
    pub fn new(scenarios: Vec<ScenarioEntry>, methods: Vec<MethodEntry>) -> Self {
        BenchConfig {
            name: None,
            scenarios,
            methods,
            runs: default_runs(),
            b: DEFAULT_B,
            alpha: DEFAULT_ALPHA,
            seed: 0,
            workers: 1,
            wald: WaldMode::default(),
            sampler: SamplerConfig::default(),
            out: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: BenchConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return invalid("runs must be at least 1");
        }
        if self.b == 0 {
            return invalid("B must be at least 1");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return invalid("alpha must lie in (0, 1)");
        }
        if self.workers == 0 {
            return invalid("workers must be at least 1");
        }
        if self.scenarios.is_empty() {
            return invalid("at least one scenario is required");
        }
        let mut seen = HashSet::new();
        for s in &self.scenarios {
            s.spec.validate()?;
            if !seen.insert(s.label()) {
                return invalid(format!("duplicate scenario label {}", s.label()));
            }
        }
        let mut seen = HashSet::new();
        for m in &self.methods {
            if !seen.insert(m.label()) {
                return invalid(format!("duplicate method label {}", m.label()));
            }
        }
        Ok(())
    }
}
