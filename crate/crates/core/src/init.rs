//! Chain initialization: MDS on geodesics, a link-appropriate regression of
//! edges on squared distance, rescaling, and an empirical shrinkage state.

use log::warn;
use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::symmetric_eigen;
use crate::model::{log_likelihood, sq_distance_rows, LatentConfig, Link, ModelParams};
use crate::network::{geodesic_distances, GeodesicMatrix, Network};
use crate::prior::{Hyperparams, ShrinkageState};
use crate::sampler::ChainState;

const IRLS_TOL: f64 = 1e-8;
const IRLS_MAX_ITERS: usize = 100;

/// Classical (Torgerson) scaling of a distance matrix into `p` dimensions.
///
/// Coordinates are √λ_k v_k for the top-p eigenpairs of −½ J D∘D J; columns
/// for non-positive eigenvalues are zero.
pub fn classical_mds(d: &GeodesicMatrix, p: usize) -> Result<LatentConfig> {
    let n = d.n();
    if p >= n {
        return invalid(format!("MDS needs p < n, got p = {p} with n = {n}"));
    }
    let sq = d.as_array().mapv(|v| v * v);
    let row_means = sq.mean_axis(Axis(1)).expect("n > 0");
    let col_means = sq.mean_axis(Axis(0)).expect("n > 0");
    let grand = row_means.mean().expect("n > 0");
    let b = Array2::from_shape_fn((n, n), |(i, j)| -0.5 * (sq[[i, j]] - row_means[i] - col_means[j] + grand));
    let (values, vectors) = symmetric_eigen(&b);

    let mut z = Array2::zeros((n, p));
    for k in 0..p {
        if values[k] > 0.0 {
            let s = values[k].sqrt();
            z.column_mut(k).assign(&(&vectors.column(k) * s));
        }
    }
    let means = z.mean_axis(Axis(0)).expect("n > 0");
    z -= &means;
    LatentConfig::new(z)
}

/// Outcome of the initial regression of edges on −d².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub alpha: f64,
    pub beta: f64,
    pub iterations: usize,
    pub converged: bool,
    /// True when the fit failed and (link(mean response), 1) was used.
    pub fallback: bool,
}

/// Maximum-likelihood fit of α − β d² by Newton/IRLS over ordered pairs.
///
/// Separation, singular weights or divergence fall back to α̂ = link(ȳ), β̂ = 1.
pub fn init_regression(net: &Network, z0: &LatentConfig, link: Link) -> Result<RegressionFit> {
    let n = net.n();
    if z0.n() != n {
        return invalid(format!("network has {n} nodes, configuration has {}", z0.n()));
    }
    if link.edge_kind() != net.kind() {
        return invalid(format!("{link:?} link does not match {:?} edges", net.kind()));
    }
    let m = n * (n - 1);
    let mut x = Vec::with_capacity(m);
    let mut y = Vec::with_capacity(m);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                x.push(-sq_distance_rows(z0.row(i), z0.row(j)));
                y.push(f64::from(net.get(i, j)));
            }
        }
    }
    let x = Array1::from(x);
    let y = Array1::from(y);
    let ybar = y.mean().unwrap_or(0.0);
    let floor = 1.0 / (2.0 * m as f64);
    let base_alpha = match link {
        Link::Logit => {
            let q = ybar.clamp(floor, 1.0 - floor);
            (q / (1.0 - q)).ln()
        }
        Link::Log => ybar.max(floor).ln(),
    };
    let fallback = |why: &str, iterations: usize| {
        warn!("initial regression fell back to intercept-only fit: {why}");
        RegressionFit { alpha: base_alpha, beta: 1.0, iterations, converged: false, fallback: true }
    };

    let xmin = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let xmax = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(xmax - xmin > 1e-12 * (1.0 + xmin.abs())) {
        return Ok(fallback("latent distances are all equal", 0));
    }
    if link == Link::Logit && (ybar <= 0.0 || ybar >= 1.0) {
        return Ok(fallback("responses are all equal (complete separation)", 0));
    }
    if link == Link::Log && ybar <= 0.0 {
        return Ok(fallback("all counts are zero", 0));
    }

    let loglik = |a: f64, b: f64| -> f64 {
        x.iter()
            .zip(y.iter())
            .map(|(&xi, &yi)| {
                let eta = a + b * xi;
                match link {
                    Link::Logit => yi * eta - crate::model::softplus(eta),
                    Link::Log => yi * eta - eta.exp(),
                }
            })
            .sum()
    };

    let (mut a, mut b) = (base_alpha, 0.0);
    let mut current = loglik(a, b);
    for iter in 1..=IRLS_MAX_ITERS {
        // Score and Fisher information for (α, β).
        let (mut g0, mut g1, mut h00, mut h01, mut h11) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&xi, &yi) in x.iter().zip(y.iter()) {
            let eta = a + b * xi;
            let (mu, w) = match link {
                Link::Logit => {
                    let q = crate::model::edge_mean(eta, 0.0, Link::Logit);
                    (q, q * (1.0 - q))
                }
                Link::Log => {
                    let l = eta.min(700.0).exp();
                    (l, l)
                }
            };
            let r = yi - mu;
            g0 += r;
            g1 += r * xi;
            h00 += w;
            h01 += w * xi;
            h11 += w * xi * xi;
        }
        let det = h00 * h11 - h01 * h01;
        if !(det.is_finite() && det > 1e-12 * h00 * h11) {
            return Ok(fallback("singular IRLS weights", iter));
        }
        let da = (h11 * g0 - h01 * g1) / det;
        let db = (h00 * g1 - h01 * g0) / det;

        // Step halving keeps the log-likelihood non-decreasing.
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let (na, nb) = (a + scale * da, b + scale * db);
            let ll = loglik(na, nb);
            if ll.is_finite() && ll >= current - 1e-10 * current.abs() {
                accepted = Some((na, nb, ll));
                break;
            }
            scale *= 0.5;
        }
        let Some((na, nb, ll)) = accepted else {
            return Ok(fallback("no improving IRLS step", iter));
        };
        let change = (na - a).abs().max((nb - b).abs());
        a = na;
        b = nb;
        current = ll;
        if !(a.is_finite() && b.is_finite()) || b.abs() > 1e6 || a.abs() > 1e6 {
            return Ok(fallback("coefficients diverged (quasi-separation)", iter));
        }
        if change < IRLS_TOL {
            return Ok(RegressionFit { alpha: a, beta: b, iterations: iter, converged: true, fallback: false });
        }
    }
    warn!("initial regression did not converge in {IRLS_MAX_ITERS} iterations; using last iterate");
    Ok(RegressionFit { alpha: a, beta: b, iterations: IRLS_MAX_ITERS, converged: false, fallback: false })
}

/// Knobs for chain initialization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitOptions {
    /// Multiplier applied to the regression intercept.
    pub alpha_inflation: f64,
    /// Standard deviation of Gaussian noise added to the initial positions.
    pub jitter_sd: f64,
}

impl Default for InitOptions {
    fn default() -> Self {
        Self { alpha_inflation: 1.5, jitter_sd: 0.0 }
    }
}

/// Shrinkage state matching the empirical column precisions of `z`.
///
/// ω_ℓ = 1/var(column ℓ); δ₁ = ω₁ and δ_h = max(ω_h/ω_{h−1}, 1). A column
/// with zero variance inherits the previous precision.
pub fn empirical_shrinkage(z: &LatentConfig) -> Result<ShrinkageState> {
    let n = z.n();
    if n < 2 {
        return invalid("empirical shrinkage needs at least two nodes");
    }
    let mut delta = Vec::with_capacity(z.p());
    let mut prev_omega: Option<f64> = None;
    for col in z.as_array().columns() {
        let var = col.var(1.0);
        let omega = if var > 1e-12 && var.is_finite() { Some(1.0 / var) } else { None };
        let d = match (prev_omega, omega) {
            (None, Some(w)) => w,
            (None, None) => 1.0,
            (Some(prev), Some(w)) => (w / prev).max(1.0),
            (Some(_), None) => 1.0,
        };
        prev_omega = Some(prev_omega.map_or(d, |p| p * d));
        delta.push(d);
    }
    ShrinkageState::from_delta(delta)
}

/// Deterministic part of initialization shared by all chains on a network.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseInit {
    /// Rescaled MDS configuration, before jitter.
    pub z: LatentConfig,
    pub alpha: f64,
    pub regression: RegressionFit,
}

/// MDS on geodesics, regression, and rescaling by √|β̂|.
pub fn base_initialization(net: &Network, hp: &Hyperparams, link: Link, alpha_inflation: f64) -> Result<BaseInit> {
    hp.validate(Some(net.n()))?;
    if !(alpha_inflation.is_finite() && alpha_inflation > 0.0) {
        return invalid(format!("alpha inflation must be positive, got {alpha_inflation}"));
    }
    let geo = geodesic_distances(net);
    let mds = classical_mds(&geo, hp.p)?;
    let regression = init_regression(net, &mds, link)?;
    let z = LatentConfig::new(mds.into_array() * regression.beta.abs().sqrt())?;
    Ok(BaseInit { z, alpha: regression.alpha * alpha_inflation, regression })
}

/// Builds a chain state from a base initialization plus optional jitter.
pub fn state_from_base<R: Rng + ?Sized>(net: &Network, base: &BaseInit, link: Link, jitter_sd: f64, rng: &mut R) -> Result<ChainState> {
    if !(jitter_sd.is_finite() && jitter_sd >= 0.0) {
        return invalid(format!("jitter sd must be non-negative, got {jitter_sd}"));
    }
    let mut z = base.z.clone();
    if jitter_sd > 0.0 {
        for v in z.as_array_mut().iter_mut() {
            let e: f64 = StandardNormal.sample(rng);
            *v += jitter_sd * e;
        }
    }
    let shrink = empirical_shrinkage(&z)?;
    let params = ModelParams { alpha: base.alpha, link };
    let log_lik = log_likelihood(net, &z, &params)?;
    Ok(ChainState { z, alpha: base.alpha, shrink, log_lik, iteration: 0, link })
}

/// Full initialization of one chain.
pub fn initialize_chain<R: Rng + ?Sized>(
    net: &Network,
    hp: &Hyperparams,
    link: Link,
    opts: &InitOptions,
    rng: &mut R,
) -> Result<(ChainState, RegressionFit)> {
    let base = base_initialization(net, hp, link, opts.alpha_inflation)?;
    let state = state_from_base(net, &base, link, opts.jitter_sd, rng)?;
    Ok((state, base.regression))
}
