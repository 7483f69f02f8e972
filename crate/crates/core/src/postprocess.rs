//! Procrustes identification, posterior summaries, effective dimensions and
//! convergence diagnostics.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LspmError, Result};
use crate::linalg::svd;
use crate::model::LatentConfig;
use crate::prior::Hyperparams;
use crate::sampler::{ChainTrace, Draw};

fn centered(a: &Array2<f64>) -> Array2<f64> {
    let means = a.mean_axis(Axis(0)).expect("non-empty configuration");
    a - &means
}

/// Orthogonal p x p matrix R minimising ‖(Z − z̄)R − (Z_ref − z̄_ref)‖_F.
pub fn procrustes_rotation(z: &LatentConfig, reference: &LatentConfig) -> Result<Array2<f64>> {
    if z.as_array().dim() != reference.as_array().dim() {
        return Err(LspmError::ShapeMismatch(format!(
            "configuration is {:?} but reference is {:?}",
            z.as_array().dim(),
            reference.as_array().dim()
        )));
    }
    let cross = centered(z.as_array()).t().dot(&centered(reference.as_array()));
    let (u, _, v) = svd(&cross);
    Ok(u.dot(&v.t()))
}

/// Translates, rotates and reflects `z` onto `reference`.
pub fn procrustes_transform(z: &LatentConfig, reference: &LatentConfig) -> Result<LatentConfig> {
    let r = procrustes_rotation(z, reference)?;
    let target_mean = reference.as_array().mean_axis(Axis(0)).expect("non-empty");
    LatentConfig::new(centered(z.as_array()).dot(&r) + &target_mean)
}

/// Copy of `trace` with every Z draw aligned to `reference`.
pub fn procrustes_align(trace: &ChainTrace, reference: &LatentConfig) -> Result<ChainTrace> {
    let draws = trace
        .draws
        .iter()
        .map(|d| Ok(Draw { z: procrustes_transform(&d.z, reference)?, ..d.clone() }))
        .collect::<Result<Vec<_>>>()?;
    Ok(ChainTrace { draws, ..trace.clone() })
}

/// Burn-in reference with the highest log-likelihood across chains.
pub fn best_reference(traces: &[ChainTrace]) -> Result<&LatentConfig> {
    traces
        .iter()
        .max_by(|a, b| a.reference_log_lik.total_cmp(&b.reference_log_lik))
        .map(|t| &t.reference)
        .ok_or_else(|| LspmError::InvalidArgument("no traces to align".into()))
}

/// Aligns all chains to their common best reference.
pub fn align_traces(traces: &[ChainTrace]) -> Result<Vec<ChainTrace>> {
    let reference = best_reference(traces)?.clone();
    traces.iter().map(|t| procrustes_align(t, &reference)).collect()
}

fn pad_columns(a: &Array2<f64>, p: usize) -> Array2<f64> {
    let mut out = Array2::zeros((a.nrows(), p));
    out.slice_mut(ndarray::s![.., ..a.ncols()]).assign(a);
    out
}

/// Procrustes correlation √(1 − m²) in [0, 1], where m² is the residual of
/// the optimal orthogonal-plus-scale fit between unit-norm centered configs.
pub fn procrustes_correlation(a: &LatentConfig, b: &LatentConfig) -> Result<f64> {
    if a.n() != b.n() {
        return Err(LspmError::ShapeMismatch(format!("{} versus {} nodes", a.n(), b.n())));
    }
    let p = a.p().max(b.p());
    let ac = centered(&pad_columns(a.as_array(), p));
    let bc = centered(&pad_columns(b.as_array(), p));
    let na = ac.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = bc.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na <= f64::MIN_POSITIVE || nb <= f64::MIN_POSITIVE {
        return Err(LspmError::Undefined("Procrustes correlation of a zero-variance configuration".into()));
    }
    let (_, s, _) = svd(&(ac.t().dot(&bc) / (na * nb)));
    Ok(s.sum().clamp(0.0, 1.0))
}

/// Linear-interpolation (type 7) quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of empty data");
    let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mean, median and central 95% interval of a scalar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarSummary {
    pub mean: f64,
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
}

impl ScalarSummary {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return invalid("cannot summarise an empty sample");
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            median: quantile_sorted(&sorted, 0.5),
            lower: quantile_sorted(&sorted, 0.025),
            upper: quantile_sorted(&sorted, 0.975),
        })
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Pooled posterior summary over one or more (aligned) chains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub n_draws: usize,
    pub alpha: ScalarSummary,
    pub delta: Vec<ScalarSummary>,
    /// Per-dimension latent variances 1/ω_ℓ.
    pub variance: Vec<ScalarSummary>,
    pub log_lik: ScalarSummary,
    pub z_mean: LatentConfig,
}

pub fn posterior_summary(traces: &[ChainTrace]) -> Result<PosteriorSummary> {
    let draws: Vec<&Draw> = traces.iter().flat_map(|t| &t.draws).collect();
    let first = draws.first().ok_or_else(|| LspmError::InvalidArgument("posterior summary of an empty trace".into()))?;
    let p = first.delta.len();
    let (n, zp) = first.z.as_array().dim();
    if draws.iter().any(|d| d.delta.len() != p || d.z.as_array().dim() != (n, zp)) {
        return Err(LspmError::ShapeMismatch("draws have differing dimensions".into()));
    }
    let collect = |f: &dyn Fn(&Draw) -> f64| draws.iter().map(|d| f(d)).collect::<Vec<f64>>();
    let mut z_mean = Array2::<f64>::zeros((n, zp));
    for d in &draws {
        z_mean += d.z.as_array();
    }
    z_mean /= draws.len() as f64;
    Ok(PosteriorSummary {
        n_draws: draws.len(),
        alpha: ScalarSummary::from_values(&collect(&|d| d.alpha))?,
        delta: (0..p).map(|h| ScalarSummary::from_values(&collect(&|d| d.delta[h]))).collect::<Result<_>>()?,
        variance: (0..p).map(|h| ScalarSummary::from_values(&collect(&|d| 1.0 / d.omega[h]))).collect::<Result<_>>()?,
        log_lik: ScalarSummary::from_values(&collect(&|d| d.log_lik))?,
        z_mean: LatentConfig::new(z_mean)?,
    })
}

/// Thresholds of the effective-dimension heuristic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EffectiveDimensionRule {
    pub jump_factor: f64,
    pub width_factor: f64,
    /// Reference mean for δ₂, which has no earlier ratio to compare with.
    pub first_baseline: f64,
}

impl Default for EffectiveDimensionRule {
    fn default() -> Self {
        Self::for_prior(&Hyperparams::default())
    }
}

impl EffectiveDimensionRule {
    /// Uses the prior mean of a truncated-gamma strength as δ₂'s reference.
    pub fn for_prior(hp: &Hyperparams) -> Self {
        Self { jump_factor: 2.0, width_factor: 2.0, first_baseline: truncated_gamma_mean(hp.a2, hp.b2, hp.c2) }
    }
}

/// E[X | X ≥ c] for X ~ Gamma(a, b) (shape, rate).
pub fn truncated_gamma_mean(a: f64, b: f64, c: f64) -> f64 {
    use statrs::function::gamma::checked_gamma_ur;
    if c <= 0.0 {
        return a / b;
    }
    let num = checked_gamma_ur(a + 1.0, b * c).unwrap_or(f64::NAN);
    let den = checked_gamma_ur(a, b * c).unwrap_or(f64::NAN);
    if num.is_finite() && den > 1e-300 {
        a / b * num / den
    } else {
        // Deep tail: the conditional mean approaches c + 1/b.
        c + 1.0 / b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveDimensionReport {
    /// `None` when no jump was found: the truth is at least the truncation level.
    pub effective: Option<usize>,
    pub truncation: usize,
    /// Mean of δ_h over its reference, for h = 2..=p.
    pub jump_ratios: Vec<f64>,
    pub width_ratios: Vec<f64>,
    pub rule: EffectiveDimensionRule,
    pub message: String,
}

/// Smallest h ≥ 2 whose δ_h mean jumps by `jump_factor` over its reference
/// (δ_{h−1}, or `first_baseline` for h = 2) and whose 95% interval is
/// `width_factor` times wider than δ_{h−1}'s. The effective dimension is h − 1.
pub fn effective_dimensions(delta: &[ScalarSummary], rule: &EffectiveDimensionRule) -> Result<EffectiveDimensionReport> {
    let p = delta.len();
    if p < 2 {
        return invalid("effective-dimension report needs at least two dimensions");
    }
    let mut jump_ratios = Vec::with_capacity(p - 1);
    let mut width_ratios = Vec::with_capacity(p - 1);
    let mut effective = None;
    for h in 1..p {
        let base = if h == 1 { rule.first_baseline } else { delta[h - 1].mean };
        let jump = delta[h].mean / base;
        let prev_width = delta[h - 1].width();
        let width = if prev_width > 0.0 { delta[h].width() / prev_width } else { f64::INFINITY };
        jump_ratios.push(jump);
        width_ratios.push(width);
        if effective.is_none() && jump > rule.jump_factor && width > rule.width_factor {
            effective = Some(h);
        }
    }
    let message = match effective {
        Some(d) => format!("effective dimension {d}"),
        None => format!("effective dimension >= {p}; raise the truncation level"),
    };
    Ok(EffectiveDimensionReport { effective, truncation: p, jump_ratios, width_ratios, rule: *rule, message })
}

/// Potential scale reduction factor of equal-length chains.
pub fn gelman_rubin(chains: &[Vec<f64>]) -> Result<f64> {
    let m = chains.len();
    if m < 2 {
        return invalid(format!("Gelman-Rubin needs at least two chains, got {m}"));
    }
    let n = chains[0].len();
    if n < 10 || chains.iter().any(|c| c.len() != n) {
        return invalid("Gelman-Rubin needs chains of equal length of at least 10");
    }
    let nf = n as f64;
    let means: Vec<f64> = chains.iter().map(|c| c.iter().sum::<f64>() / nf).collect();
    let grand = means.iter().sum::<f64>() / m as f64;
    let b = nf * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>() / (m as f64 - 1.0);
    let w = chains
        .iter()
        .zip(&means)
        .map(|(c, mu)| c.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (nf - 1.0))
        .sum::<f64>()
        / m as f64;
    if !(w > 0.0) {
        return Err(LspmError::Undefined("Gelman-Rubin with zero within-chain variance".into()));
    }
    let v = (nf - 1.0) / nf * w + b / nf;
    Ok((v / w).sqrt())
}

/// Scalar quantity extracted from each draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameter {
    Alpha,
    /// 0-based dimension.
    Delta(usize),
    /// Latent variance 1/ω of a 0-based dimension.
    Variance(usize),
    LogLik,
}

impl Parameter {
    pub fn extract(self, d: &Draw) -> f64 {
        match self {
            Parameter::Alpha => d.alpha,
            Parameter::Delta(h) => d.delta[h],
            Parameter::Variance(h) => 1.0 / d.omega[h],
            Parameter::LogLik => d.log_lik,
        }
    }

    pub fn name(self) -> String {
        match self {
            Parameter::Alpha => "alpha".into(),
            Parameter::Delta(h) => format!("delta_{}", h + 1),
            Parameter::Variance(h) => format!("variance_{}", h + 1),
            Parameter::LogLik => "loglik".into(),
        }
    }
}

/// R̂ of one parameter across traces.
pub fn gelman_rubin_traces(traces: &[ChainTrace], param: Parameter) -> Result<f64> {
    let chains: Vec<Vec<f64>> = traces.iter().map(|t| t.draws.iter().map(|d| param.extract(d)).collect()).collect();
    gelman_rubin(&chains)
}

/// Sample autocorrelations at lags 0..=max_lag.
pub fn autocorrelation(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = series.len();
    if n <= max_lag {
        return invalid(format!("series of length {n} is too short for lag {max_lag}"));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let dev: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let denom: f64 = dev.iter().map(|d| d * d).sum();
    if !(denom > 0.0) {
        return Err(LspmError::Undefined("autocorrelation of a constant series".into()));
    }
    Ok((0..=max_lag)
        .map(|k| dev[..n - k].iter().zip(&dev[k..]).map(|(a, b)| a * b).sum::<f64>() / denom)
        .collect())
}
