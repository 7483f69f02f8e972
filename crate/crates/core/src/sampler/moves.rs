//! Individual Metropolis and Gibbs moves, computed without caches. The
//! engine uses cached equivalents; these are the reference versions.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{LspmError, Result};
use crate::model::{clip_eta, column_sq_sums, delta1_from_sums, deltah_from_sums, log_likelihood, log_prior_z, softplus, sq_distance_rows, LatentConfig, Link, ModelParams};
use crate::network::Network;
use crate::prior::{sample_truncated_gamma, Hyperparams, ShrinkageState};

use super::ChainState;

/// Log-likelihood contribution of an unordered pair with y_ij + y_ji = `s`,
/// excluding the log-factorial terms of the Poisson model.
#[inline]
pub(crate) fn pair_term(link: Link, eta: f64, s: f64) -> f64 {
    match link {
        Link::Logit => eta * s - 2.0 * softplus(eta),
        Link::Log => eta * s - 2.0 * eta.exp(),
    }
}

/// Mean and variance function of the edge distribution at predictor η.
#[inline]
pub(crate) fn mean_and_weight(link: Link, eta: f64) -> (f64, f64) {
    match link {
        Link::Logit => {
            let e = (-eta.abs()).exp();
            let q = if eta >= 0.0 { 1.0 / (1.0 + e) } else { e / (1.0 + e) };
            (q, q * (1.0 - q))
        }
        Link::Log => {
            let l = eta.exp();
            (l, l)
        }
    }
}

/// Sums needed by the α move: pair log-likelihood, Σμ and Σw over ordered pairs.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct AlphaStats {
    pub ll: f64,
    pub sum_mu: f64,
    pub sum_w: f64,
}

impl AlphaStats {
    #[inline]
    pub(crate) fn add(&mut self, link: Link, eta: f64, s: f64) -> f64 {
        let (term, mu, w) = match link {
            Link::Logit => {
                // One exponential serves the softplus and the sigmoid.
                let e = (-eta.abs()).exp();
                let q = if eta >= 0.0 { 1.0 / (1.0 + e) } else { e / (1.0 + e) };
                (eta * s - 2.0 * (eta.max(0.0) + e.ln_1p()), q, q * (1.0 - q))
            }
            Link::Log => {
                let l = eta.exp();
                (eta * s - 2.0 * l, l, l)
            }
        };
        self.ll += term;
        self.sum_mu += 2.0 * mu;
        self.sum_w += 2.0 * w;
        term
    }
}

/// Normal proposal for α from a second-order expansion of its conditional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaProposal {
    pub mean: f64,
    pub variance: f64,
}

impl AlphaProposal {
    pub(crate) fn from_stats(alpha: f64, sum_y: f64, stats: &AlphaStats, hp: &Hyperparams, step_alpha: f64) -> Self {
        let variance = step_alpha / (stats.sum_w + 1.0 / hp.sigma2_alpha);
        let score = sum_y - stats.sum_mu + (hp.mu_alpha - alpha) / hp.sigma2_alpha;
        Self { mean: alpha + variance * score, variance }
    }

    /// Log density at `x`, dropping the constant −½ log 2π.
    pub fn log_density(&self, x: f64) -> f64 {
        let d = x - self.mean;
        -0.5 * self.variance.ln() - 0.5 * d * d / self.variance
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let e: f64 = StandardNormal.sample(rng);
        self.mean + self.variance.sqrt() * e
    }
}

fn alpha_stats(net: &Network, z: &LatentConfig, alpha: f64, link: Link) -> AlphaStats {
    let n = net.n();
    let mut stats = AlphaStats::default();
    for i in 0..n {
        for j in (i + 1)..n {
            let eta = clip_eta(alpha - sq_distance_rows(z.row(i), z.row(j)));
            let s = f64::from(net.get(i, j)) + f64::from(net.get(j, i));
            stats.add(link, eta, s);
        }
    }
    stats
}

/// Informed proposal for α at the state's current value.
pub fn informed_alpha_proposal(state: &ChainState, net: &Network, hp: &Hyperparams, step_alpha: f64) -> Result<AlphaProposal> {
    proposal_at(state, net, hp, step_alpha, state.alpha)
}

fn proposal_at(state: &ChainState, net: &Network, hp: &Hyperparams, step_alpha: f64, alpha: f64) -> Result<AlphaProposal> {
    if net.n() != state.z.n() {
        return Err(LspmError::ShapeMismatch("network and state sizes differ".into()));
    }
    let stats = alpha_stats(net, &state.z, alpha, state.link);
    Ok(AlphaProposal::from_stats(alpha, net.total() as f64, &stats, hp, step_alpha))
}

pub(crate) fn log_alpha_prior(alpha: f64, hp: &Hyperparams) -> f64 {
    let d = alpha - hp.mu_alpha;
    -0.5 * d * d / hp.sigma2_alpha
}

/// Metropolis–Hastings step for a candidate α drawn from the informed
/// proposal; the reverse proposal is rebuilt at the candidate.
pub fn accept_alpha<R: Rng + ?Sized>(
    state: &mut ChainState,
    candidate: f64,
    net: &Network,
    hp: &Hyperparams,
    step_alpha: f64,
    rng: &mut R,
) -> Result<bool> {
    let forward = proposal_at(state, net, hp, step_alpha, state.alpha)?;
    let reverse = proposal_at(state, net, hp, step_alpha, candidate)?;
    let cand_ll = log_likelihood(net, &state.z, &ModelParams { alpha: candidate, link: state.link })?;
    let log_ratio = cand_ll + log_alpha_prior(candidate, hp) - state.log_lik - log_alpha_prior(state.alpha, hp)
        + reverse.log_density(state.alpha)
        - forward.log_density(candidate);
    let u: f64 = rng.random();
    let accept = u.ln() < log_ratio;
    if accept {
        state.alpha = candidate;
        state.log_lik = cand_ll;
    }
    Ok(accept)
}

/// Random-walk candidate: z̃_iℓ = z_iℓ + √(k/ω_ℓ) ε. With `node` set only that
/// row moves.
pub fn propose_z<R: Rng + ?Sized>(state: &ChainState, step_z: f64, node: Option<usize>, rng: &mut R) -> LatentConfig {
    let sds: Vec<f64> = state.shrink.omega().iter().map(|w| (step_z / w).sqrt()).collect();
    let mut cand = state.z.clone();
    let mut perturb = |row: ndarray::ArrayViewMut1<'_, f64>| {
        for (v, sd) in row.into_iter().zip(&sds) {
            let e: f64 = StandardNormal.sample(rng);
            *v += sd * e;
        }
    };
    match node {
        Some(i) => perturb(cand.as_array_mut().row_mut(i)),
        None => {
            for row in cand.as_array_mut().rows_mut() {
                perturb(row);
            }
        }
    }
    cand
}

/// Accepts a symmetric random-walk candidate with probability
/// min(1, likelihood ratio × prior ratio).
pub fn accept_z<R: Rng + ?Sized>(state: &mut ChainState, candidate: LatentConfig, net: &Network, rng: &mut R) -> Result<bool> {
    let params = ModelParams { alpha: state.alpha, link: state.link };
    let omega = state.shrink.omega();
    let cand_ll = log_likelihood(net, &candidate, &params)?;
    let log_ratio = cand_ll - state.log_lik + log_prior_z(&candidate, omega)? - log_prior_z(&state.z, omega)?;
    let u: f64 = rng.random();
    let accept = u.ln() < log_ratio;
    if accept {
        state.z = candidate;
        state.log_lik = cand_ll;
    }
    Ok(accept)
}

/// One Gibbs sweep over δ₁, δ₂, …, δ_p in order, each conditioned on the
/// already-updated earlier strengths.
pub fn gibbs_update_deltas<R: Rng + ?Sized>(
    z: &LatentConfig,
    current: &ShrinkageState,
    hp: &Hyperparams,
    rng: &mut R,
) -> Result<ShrinkageState> {
    if current.p() != z.p() {
        return Err(LspmError::ShapeMismatch(format!("{} strengths for {} dimensions", current.p(), z.p())));
    }
    let col_sq = column_sq_sums(z);
    let n = z.n();
    let mut delta = current.delta().to_vec();
    let g = delta1_from_sums(&col_sq, n, &delta, hp);
    delta[0] = Gamma::new(g.shape, 1.0 / g.rate)
        .map_err(|e| LspmError::InvalidArgument(format!("delta_1 conditional: {e}")))?
        .sample(rng);
    for dim in 2..=delta.len() {
        let g = deltah_from_sums(dim, &col_sq, n, &delta, hp);
        delta[dim - 1] = sample_truncated_gamma(g.shape, g.rate, g.lower, rng)?;
    }
    ShrinkageState::from_delta(delta)
}
