//! Linear predictor, logistic and Poisson likelihoods, and the log full
//! conditionals of the latent shrinkage position model.

use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

use crate::error::{invalid, LspmError, Result};
use crate::network::{EdgeKind, Network};
use crate::prior::Hyperparams;

/// Link function tying the linear predictor to the edge mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    /// Binary edges, Bernoulli with logit link.
    Logit,
    /// Count edges, Poisson with log link.
    Log,
}

impl Link {
    pub fn for_kind(kind: EdgeKind) -> Self {
        match kind {
            EdgeKind::Binary => Link::Logit,
            EdgeKind::Count => Link::Log,
        }
    }

    pub fn edge_kind(self) -> EdgeKind {
        match self {
            Link::Logit => EdgeKind::Binary,
            Link::Log => EdgeKind::Count,
        }
    }
}

impl std::str::FromStr for Link {
    type Err = LspmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "logit" | "logistic" | "binary" => Ok(Link::Logit),
            "log" | "poisson" | "count" => Ok(Link::Log),
            other => Err(LspmError::InvalidArgument(format!("unknown model `{other}`"))),
        }
    }
}

/// n x p matrix of latent positions; row i is node i.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentConfig(Array2<f64>);

impl LatentConfig {
    pub fn new(z: Array2<f64>) -> Result<Self> {
        if z.iter().any(|v| !v.is_finite()) {
            return invalid("latent positions must be finite");
        }
        Ok(Self(z))
    }

    pub fn zeros(n: usize, p: usize) -> Self {
        Self(Array2::zeros((n, p)))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn p(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn as_array_mut(&mut self) -> &mut Array2<f64> {
        &mut self.0
    }

    pub fn into_array(self) -> Array2<f64> {
        self.0
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.0.row(i)
    }

    #[inline]
    pub fn get(&self, i: usize, l: usize) -> f64 {
        self.0[[i, l]]
    }

    /// The first `k` latent dimensions.
    pub fn leading_dims(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.p() {
            return Err(LspmError::InvalidArgument(format!("cannot take {k} of {} dimensions", self.p())));
        }
        Self::new(self.0.slice(ndarray::s![.., ..k]).to_owned())
    }
}

/// Global connectivity and link of a fitted model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub alpha: f64,
    pub link: Link,
}

/// Bound applied to the linear predictor before exponentiation.
pub const ETA_CLIP: f64 = 700.0;

static CLIP_EVENTS: AtomicU64 = AtomicU64::new(0);

/// Number of times a linear predictor has been clipped in this process.
pub fn eta_clip_events() -> u64 {
    CLIP_EVENTS.load(Ordering::Relaxed)
}

#[inline]
pub(crate) fn clip_eta(eta: f64) -> f64 {
    if eta.abs() > ETA_CLIP {
        CLIP_EVENTS.fetch_add(1, Ordering::Relaxed);
        eta.clamp(-ETA_CLIP, ETA_CLIP)
    } else {
        eta
    }
}

/// log(1 + e^x) without overflow.
#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub(crate) fn sq_distance_rows(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Squared Euclidean distance between the latent positions of nodes i and j.
pub fn sq_distance(z: &LatentConfig, i: usize, j: usize) -> Result<f64> {
    if i == j {
        return invalid(format!("squared distance needs distinct nodes, got {i} twice"));
    }
    if i >= z.n() || j >= z.n() {
        return invalid(format!("node index out of range for n = {}", z.n()));
    }
    Ok(sq_distance_rows(z.row(i), z.row(j)))
}

/// Edge probability (logit) or Poisson rate (log) for predictor α − d².
pub fn edge_mean(alpha: f64, d2: f64, link: Link) -> f64 {
    let eta = clip_eta(alpha - d2);
    match link {
        Link::Logit => {
            if eta >= 0.0 {
                1.0 / (1.0 + (-eta).exp())
            } else {
                let e = eta.exp();
                e / (1.0 + e)
            }
        }
        Link::Log => eta.exp(),
    }
}

fn check_shapes(net: &Network, z: &LatentConfig, link: Option<Link>) -> Result<()> {
    if net.n() != z.n() {
        return Err(LspmError::ShapeMismatch(format!(
            "network has {} nodes but latent configuration has {} rows",
            net.n(),
            z.n()
        )));
    }
    if let Some(link) = link {
        if link.edge_kind() != net.kind() {
            return Err(LspmError::InvalidArgument(format!(
                "{link:?} link does not match {:?} edges",
                net.kind()
            )));
        }
    }
    Ok(())
}

/// Log-likelihood summed over ordered pairs i ≠ j in row-major order.
pub fn log_likelihood(net: &Network, z: &LatentConfig, params: &ModelParams) -> Result<f64> {
    check_shapes(net, z, Some(params.link))?;
    let n = net.n();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let y = f64::from(net.get(i, j));
            let eta = clip_eta(params.alpha - sq_distance_rows(z.row(i), z.row(j)));
            total += match params.link {
                Link::Logit => eta * y - softplus(eta),
                Link::Log => eta * y - eta.exp() - ln_factorial(u64::from(net.get(i, j))),
            };
        }
    }
    Ok(total)
}

/// Log density of the latent positions under N(0, Ω⁻¹), dropping constants.
pub fn log_prior_z(z: &LatentConfig, omega: &[f64]) -> Result<f64> {
    if omega.len() != z.p() {
        return Err(LspmError::ShapeMismatch(format!(
            "{} precisions for {} latent dimensions",
            omega.len(),
            z.p()
        )));
    }
    let mut total = 0.0;
    for row in z.as_array().rows() {
        for (v, w) in row.iter().zip(omega) {
            total -= 0.5 * w * v * v;
        }
    }
    Ok(total)
}

/// Log full conditional of Z up to an additive constant.
pub fn log_full_conditional_z(net: &Network, z: &LatentConfig, params: &ModelParams, omega: &[f64]) -> Result<f64> {
    Ok(log_likelihood(net, z, params)? + log_prior_z(z, omega)?)
}

/// Log full conditional of α up to an additive constant.
pub fn log_full_conditional_alpha(net: &Network, z: &LatentConfig, params: &ModelParams, hp: &Hyperparams) -> Result<f64> {
    let dev = params.alpha - hp.mu_alpha;
    Ok(log_likelihood(net, z, params)? - 0.5 * dev * dev / hp.sigma2_alpha)
}

/// Shape and rate of a (possibly truncated) gamma full conditional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaParams {
    pub shape: f64,
    pub rate: f64,
    /// Left truncation point; 0 for an untruncated gamma.
    pub lower: f64,
}

fn check_delta(z: &LatentConfig, delta: &[f64]) -> Result<()> {
    if delta.len() != z.p() {
        return Err(LspmError::ShapeMismatch(format!(
            "{} shrinkage strengths for {} latent dimensions",
            delta.len(),
            z.p()
        )));
    }
    Ok(())
}

/// Column sums of squared latent positions, Σ_i z_iℓ².
pub(crate) fn column_sq_sums(z: &LatentConfig) -> Vec<f64> {
    let mut sums = vec![0.0; z.p()];
    for row in z.as_array().rows() {
        for (s, v) in sums.iter_mut().zip(row) {
            *s += v * v;
        }
    }
    sums
}

/// Gamma full conditional of δ₁ given Z and δ₂..δ_p.
pub fn delta1_conditional_params(z: &LatentConfig, delta: &[f64], hp: &Hyperparams) -> Result<GammaParams> {
    check_delta(z, delta)?;
    Ok(delta1_from_sums(&column_sq_sums(z), z.n(), delta, hp))
}

pub(crate) fn delta1_from_sums(col_sq: &[f64], n: usize, delta: &[f64], hp: &Hyperparams) -> GammaParams {
    let p = delta.len();
    let mut partial = 1.0;
    let mut quad = 0.0;
    for l in 0..p {
        if l > 0 {
            partial *= delta[l];
        }
        quad += partial * col_sq[l];
    }
    GammaParams { shape: (n * p) as f64 / 2.0 + hp.a1, rate: hp.b1 + 0.5 * quad, lower: 0.0 }
}

/// Truncated gamma full conditional of δ_h for 1-based `dim` in 2..=p.
pub fn deltah_conditional_params(dim: usize, z: &LatentConfig, delta: &[f64], hp: &Hyperparams) -> Result<GammaParams> {
    check_delta(z, delta)?;
    let p = delta.len();
    if dim < 2 || dim > p {
        return invalid(format!("dimension {dim} outside 2..={p}"));
    }
    Ok(deltah_from_sums(dim, &column_sq_sums(z), z.n(), delta, hp))
}

pub(crate) fn deltah_from_sums(dim: usize, col_sq: &[f64], n: usize, delta: &[f64], hp: &Hyperparams) -> GammaParams {
    let p = delta.len();
    let h = dim - 1;
    // Product of δ_m for m < h, then extended past h without δ_h itself.
    let mut partial: f64 = delta[..h].iter().product();
    let mut quad = 0.0;
    for l in h..p {
        if l > h {
            partial *= delta[l];
        }
        quad += partial * col_sq[l];
    }
    GammaParams {
        shape: (n * (p - h)) as f64 / 2.0 + hp.a2,
        rate: hp.b2 + 0.5 * quad,
        lower: hp.c2,
    }
}
