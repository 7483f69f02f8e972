pub mod diagnose;
pub mod fit;
pub mod ppc;
pub mod simulate;
pub mod study;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use lspm_core::postprocess::{
    align_traces, effective_dimensions, gelman_rubin_traces, posterior_summary, procrustes_correlation,
};
use lspm_core::{
    ChainTrace, EdgeKind, EffectiveDimensionReport, EffectiveDimensionRule, FileFormat, Hyperparams, LatentConfig,
    Link, LoadOptions, Parameter, PosteriorSummary, SamplerConfig, ScalarSummary, Truth,
};
use serde::{Deserialize, Serialize};

use crate::manifest::Acceptance;
use crate::UsageError;

/// How to read the observed network.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSpec {
    pub format: FileFormat,
    pub directed: bool,
    pub index_base: u8,
    pub nodes: Option<usize>,
}

impl Default for DataSpec {
    fn default() -> Self {
        let d = LoadOptions::default();
        Self { format: d.format, directed: d.directed, index_base: d.index_base, nodes: d.nodes }
    }
}

impl DataSpec {
    pub fn load_options(&self, kind: EdgeKind) -> LoadOptions {
        LoadOptions { format: self.format, kind, directed: self.directed, index_base: self.index_base, nodes: self.nodes }
    }
}

/// Resolved configuration of one fit; stored verbatim in its manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSpec {
    pub input: Option<PathBuf>,
    pub data: DataSpec,
    pub model: Link,
    pub chains: usize,
    pub prior: Hyperparams,
    pub sampler: SamplerConfig,
}

impl FitSpec {
    pub fn defaults(model: Link) -> Self {
        Self {
            input: None,
            data: DataSpec::default(),
            model,
            chains: 1,
            prior: Hyperparams::default(),
            sampler: SamplerConfig::for_kind(model.edge_kind()),
        }
    }
}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Refuses truncation levels at or above half the node count.
pub fn check_dims(p: usize, n: usize) -> Result<()> {
    if p == 0 || 2 * p >= n {
        return Err(usage(format!("truncation level {p} must satisfy 1 <= p < n / 2 = {}", n as f64 / 2.0)));
    }
    Ok(())
}

pub fn acceptance(traces: &[ChainTrace]) -> Vec<Acceptance> {
    traces
        .iter()
        .enumerate()
        .map(|(k, t)| Acceptance { chain: k, seed: t.seed, z: t.accept_z.rate(), alpha: t.accept_alpha.rate() })
        .collect()
}

pub fn read_truth(path: &Path) -> Result<Truth> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Posterior summaries shared by `diagnose` and `study`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitDigest {
    pub chains: usize,
    pub draws_per_chain: Vec<usize>,
    pub n_draws: usize,
    pub alpha: ScalarSummary,
    pub delta: Vec<ScalarSummary>,
    pub variance: Vec<ScalarSummary>,
    pub log_lik: ScalarSummary,
    pub effective_dimension: Option<EffectiveDimensionReport>,
    /// Potential scale reduction per parameter, with at least two chains.
    pub r_hat: BTreeMap<String, f64>,
    pub acceptance: Vec<Acceptance>,
    /// Against the first min(p, p*) true dimensions, when the truth is known.
    pub procrustes_correlation: Option<f64>,
}

pub fn digest(
    traces: &[ChainTrace],
    rule: &EffectiveDimensionRule,
    truth: Option<&LatentConfig>,
) -> Result<(FitDigest, PosteriorSummary)> {
    let aligned = align_traces(traces)?;
    let s = posterior_summary(&aligned)?;
    let p = s.delta.len();
    let effective_dimension = if p >= 2 { Some(effective_dimensions(&s.delta, rule)?) } else { None };
    let mut r_hat = BTreeMap::new();
    if traces.len() >= 2 && traces.iter().all(|t| t.len() >= 10 && t.len() == traces[0].len()) {
        let params = [Parameter::Alpha, Parameter::LogLik].into_iter().chain((0..p).map(Parameter::Delta));
        for param in params {
            match gelman_rubin_traces(traces, param) {
                Ok(r) => {
                    r_hat.insert(param.name(), r);
                }
                Err(e) => log::warn!("R-hat for {} unavailable: {e}", param.name()),
            }
        }
    }
    let procrustes = match truth {
        Some(t) => {
            let k = p.min(t.p());
            Some(procrustes_correlation(&s.z_mean.leading_dims(k)?, &t.leading_dims(k)?)?)
        }
        None => None,
    };
    let d = FitDigest {
        chains: traces.len(),
        draws_per_chain: traces.iter().map(ChainTrace::len).collect(),
        n_draws: s.n_draws,
        alpha: s.alpha,
        delta: s.delta.clone(),
        variance: s.variance.clone(),
        log_lik: s.log_lik,
        effective_dimension,
        r_hat,
        acceptance: acceptance(traces),
        procrustes_correlation: procrustes,
    };
    Ok((d, s))
}
