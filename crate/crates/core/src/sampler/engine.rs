//! Cached sampler loop and multi-chain orchestration.

use log::{debug, info};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use statrs::function::factorial::ln_factorial;

use crate::error::{LspmError, Result};
use crate::init::{base_initialization, state_from_base, RegressionFit};
use crate::model::{clip_eta, log_likelihood, LatentConfig, Link, ModelParams};
use crate::network::Network;
use crate::prior::Hyperparams;

use super::moves::{gibbs_update_deltas, log_alpha_prior, mean_and_weight, pair_term, AlphaProposal, AlphaStats};
use super::{AcceptCounter, ChainState, ChainTrace, Draw, SamplerConfig, ZUpdateMode};

/// Iterations between full recomputations of the cached log-likelihood.
const REVALIDATE_EVERY: u64 = 1000;

/// One chain's state plus the caches that make each move O(n²) or cheaper.
///
/// `d2` and `pair` are flat n x n symmetric matrices of squared distances and
/// unordered-pair log-likelihood terms at the current (Z, α).
pub struct ChainSampler<'a> {
    net: &'a Network,
    hp: Hyperparams,
    cfg: SamplerConfig,
    state: ChainState,
    n: usize,
    s: Vec<f64>,
    d2: Vec<f64>,
    pair: Vec<f64>,
    scratch_d2: Vec<f64>,
    scratch_pair: Vec<f64>,
    /// Σ log y! over ordered pairs, zero for binary data.
    log_fact: f64,
    sum_y: f64,
    accept_z: AcceptCounter,
    accept_alpha: AcceptCounter,
}

impl<'a> ChainSampler<'a> {
    pub fn new(net: &'a Network, hp: &Hyperparams, cfg: &SamplerConfig, state: ChainState) -> Result<Self> {
        // The p < n / 2 guideline is enforced by initialization; a hand-built
        // state only needs fewer dimensions than nodes.
        hp.validate(None)?;
        cfg.validate()?;
        let n = net.n();
        if hp.p >= n {
            return Err(LspmError::InvalidArgument(format!("{} dimensions for {n} nodes", hp.p)));
        }
        if state.z.n() != n || state.z.p() != hp.p || state.shrink.p() != hp.p {
            return Err(LspmError::ShapeMismatch(format!(
                "state is {}x{} with {} strengths; expected {n}x{}",
                state.z.n(),
                state.z.p(),
                state.shrink.p(),
                hp.p
            )));
        }
        if state.link.edge_kind() != net.kind() {
            return Err(LspmError::InvalidArgument(format!("{:?} link does not match {:?} edges", state.link, net.kind())));
        }
        let mut state = state;
        state.z = LatentConfig::new(state.z.as_array().as_standard_layout().to_owned())?;

        let mut s = vec![0.0; n * n];
        let mut log_fact = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s[i * n + j] = f64::from(net.get(i, j)) + f64::from(net.get(j, i));
                    if state.link == Link::Log {
                        log_fact += ln_factorial(u64::from(net.get(i, j)));
                    }
                }
            }
        }
        let mut sampler = Self {
            net,
            hp: *hp,
            cfg: *cfg,
            state,
            n,
            s,
            d2: vec![0.0; n * n],
            pair: vec![0.0; n * n],
            scratch_d2: vec![0.0; n * n],
            scratch_pair: vec![0.0; n * n],
            log_fact,
            sum_y: net.total() as f64,
            accept_z: AcceptCounter::default(),
            accept_alpha: AcceptCounter::default(),
        };
        sampler.rebuild_caches();
        Ok(sampler)
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn into_state(self) -> ChainState {
        self.state
    }

    pub fn acceptance(&self) -> (AcceptCounter, AcceptCounter) {
        (self.accept_z, self.accept_alpha)
    }

    fn z_slice(&self) -> &[f64] {
        self.state.z.as_array().as_slice().expect("standard layout")
    }

    fn rebuild_caches(&mut self) {
        let (n, p) = (self.n, self.state.z.p());
        let z = self.state.z.as_array().as_slice().expect("standard layout").to_vec();
        let alpha = self.state.alpha;
        for i in 0..n {
            for j in (i + 1)..n {
                let d: f64 = (0..p).map(|l| (z[i * p + l] - z[j * p + l]).powi(2)).sum();
                let t = pair_term(self.state.link, clip_eta(alpha - d), self.s[i * n + j]);
                self.d2[i * n + j] = d;
                self.d2[j * n + i] = d;
                self.pair[i * n + j] = t;
                self.pair[j * n + i] = t;
            }
        }
        self.state.log_lik = self.cached_log_lik();
    }

    fn cached_log_lik(&self) -> f64 {
        let n = self.n;
        let mut total = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                total += self.pair[i * n + j];
            }
        }
        total - self.log_fact
    }

    /// Runs one full iteration: Z move(s), α move, δ Gibbs sweep.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        match self.cfg.z_update {
            ZUpdateMode::PerNode => self.per_node_sweep(rng),
            ZUpdateMode::WholeMatrix => self.whole_matrix_move(rng),
        }
        self.alpha_move(rng);
        let iteration = self.state.iteration + 1;
        self.state.shrink = gibbs_update_deltas(&self.state.z, &self.state.shrink, &self.hp, rng).map_err(|e| LspmError::NonFinite {
            iteration,
            detail: format!("shrinkage update failed: {e}; last good state: {}", self.dump()),
        })?;
        self.state.iteration = iteration;
        if !(self.state.alpha.is_finite() && self.state.log_lik.is_finite()) {
            return Err(LspmError::NonFinite { iteration, detail: format!("last good state: {}", self.dump()) });
        }
        if iteration.is_multiple_of(REVALIDATE_EVERY) {
            self.revalidate()?;
        }
        Ok(())
    }

    fn dump(&self) -> String {
        serde_json::json!({
            "iteration": self.state.iteration,
            "alpha": self.state.alpha,
            "delta": self.state.shrink.delta(),
            "log_lik": self.state.log_lik,
            "z": self.state.z.as_array().rows().into_iter().map(|r| r.to_vec()).collect::<Vec<_>>(),
        })
        .to_string()
    }

    fn revalidate(&self) -> Result<()> {
        let params = ModelParams { alpha: self.state.alpha, link: self.state.link };
        let exact = log_likelihood(self.net, &self.state.z, &params)?;
        let cached = self.state.log_lik;
        if (exact - cached).abs() > 1e-7 * (1.0 + exact.abs()) {
            return Err(LspmError::NonFinite {
                iteration: self.state.iteration,
                detail: format!("cached log-likelihood {cached} disagrees with recomputed {exact}"),
            });
        }
        Ok(())
    }

    fn proposal_sds(&self) -> Vec<f64> {
        self.state.shrink.omega().iter().map(|w| (self.cfg.step_z / w).sqrt()).collect()
    }

    fn per_node_sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let (n, p) = (self.n, self.state.z.p());
        let link = self.state.link;
        let alpha = self.state.alpha;
        let sds = self.proposal_sds();
        let omega = self.state.shrink.omega().to_vec();
        let mut cand = vec![0.0; p];
        let mut new_d2 = vec![0.0; n];
        let mut new_pair = vec![0.0; n];
        for i in 0..n {
            let mut delta_prior = 0.0;
            {
                let z = self.z_slice();
                for l in 0..p {
                    let e: f64 = StandardNormal.sample(rng);
                    let old = z[i * p + l];
                    let c = old + sds[l] * e;
                    cand[l] = c;
                    delta_prior -= 0.5 * omega[l] * (c * c - old * old);
                }
                let mut delta_ll = 0.0;
                for j in 0..n {
                    if j == i {
                        continue;
                    }
                    let zj = &z[j * p..(j + 1) * p];
                    let d: f64 = cand.iter().zip(zj).map(|(a, b)| (a - b) * (a - b)).sum();
                    let t = pair_term(link, clip_eta(alpha - d), self.s[i * n + j]);
                    new_d2[j] = d;
                    new_pair[j] = t;
                    delta_ll += t - self.pair[i * n + j];
                }
                let u: f64 = rng.random();
                let accept = u.ln() < delta_ll + delta_prior;
                self.accept_z.record(accept);
                if !accept {
                    continue;
                }
            }
            let zmut = self.state.z.as_array_mut().as_slice_mut().expect("standard layout");
            zmut[i * p..(i + 1) * p].copy_from_slice(&cand);
            for j in 0..n {
                if j == i {
                    continue;
                }
                self.d2[i * n + j] = new_d2[j];
                self.d2[j * n + i] = new_d2[j];
                self.pair[i * n + j] = new_pair[j];
                self.pair[j * n + i] = new_pair[j];
            }
        }
        self.state.log_lik = self.cached_log_lik();
    }

    fn whole_matrix_move<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let (n, p) = (self.n, self.state.z.p());
        let link = self.state.link;
        let alpha = self.state.alpha;
        let sds = self.proposal_sds();
        let omega = self.state.shrink.omega();
        let z = self.z_slice();
        let mut cand = z.to_vec();
        let mut delta_prior = 0.0;
        for i in 0..n {
            for l in 0..p {
                let e: f64 = StandardNormal.sample(rng);
                let old = cand[i * p + l];
                let c = old + sds[l] * e;
                cand[i * p + l] = c;
                delta_prior -= 0.5 * omega[l] * (c * c - old * old);
            }
        }
        let mut delta_ll = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let d: f64 = (0..p).map(|l| (cand[i * p + l] - cand[j * p + l]).powi(2)).sum();
                let t = pair_term(link, clip_eta(alpha - d), self.s[i * n + j]);
                self.scratch_d2[i * n + j] = d;
                self.scratch_d2[j * n + i] = d;
                self.scratch_pair[i * n + j] = t;
                self.scratch_pair[j * n + i] = t;
                delta_ll += t - self.pair[i * n + j];
            }
        }
        let u: f64 = rng.random();
        let accept = u.ln() < delta_ll + delta_prior;
        self.accept_z.record(accept);
        if accept {
            self.state.z.as_array_mut().as_slice_mut().expect("standard layout").copy_from_slice(&cand);
            std::mem::swap(&mut self.d2, &mut self.scratch_d2);
            std::mem::swap(&mut self.pair, &mut self.scratch_pair);
            self.state.log_lik = self.cached_log_lik();
        }
    }

    /// Stats at a candidate α; pair terms are written to scratch.
    fn alpha_stats(&mut self, alpha: f64) -> AlphaStats {
        let n = self.n;
        let link = self.state.link;
        let mut stats = AlphaStats::default();
        for i in 0..n {
            for j in (i + 1)..n {
                let eta = clip_eta(alpha - self.d2[i * n + j]);
                let t = stats.add(link, eta, self.s[i * n + j]);
                self.scratch_pair[i * n + j] = t;
                self.scratch_pair[j * n + i] = t;
            }
        }
        stats
    }

    /// Σμ and Σw at the current α; the log-likelihood comes from the cache.
    fn current_alpha_stats(&self) -> AlphaStats {
        let n = self.n;
        let alpha = self.state.alpha;
        let mut stats = AlphaStats { ll: self.state.log_lik + self.log_fact, ..AlphaStats::default() };
        for i in 0..n {
            for j in (i + 1)..n {
                let (mu, w) = mean_and_weight(self.state.link, clip_eta(alpha - self.d2[i * n + j]));
                stats.sum_mu += 2.0 * mu;
                stats.sum_w += 2.0 * w;
            }
        }
        stats
    }

    fn alpha_move<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let alpha = self.state.alpha;
        let step = self.cfg.step_alpha;
        let here = self.current_alpha_stats();
        let forward = AlphaProposal::from_stats(alpha, self.sum_y, &here, &self.hp, step);
        let cand = forward.sample(rng);
        let there = self.alpha_stats(cand);
        let reverse = AlphaProposal::from_stats(cand, self.sum_y, &there, &self.hp, step);
        let log_ratio = there.ll + log_alpha_prior(cand, &self.hp) - here.ll - log_alpha_prior(alpha, &self.hp)
            + reverse.log_density(alpha)
            - forward.log_density(cand);
        let u: f64 = rng.random();
        let accept = log_ratio.is_finite() && u.ln() < log_ratio;
        self.accept_alpha.record(accept);
        if accept {
            self.state.alpha = cand;
            std::mem::swap(&mut self.pair, &mut self.scratch_pair);
            self.state.log_lik = there.ll - self.log_fact;
        }
    }
}

/// Samples from an explicit starting state; `rng` continues the chain's stream.
pub fn run_chain_from<R: Rng + ?Sized>(
    net: &Network,
    hp: &Hyperparams,
    cfg: &SamplerConfig,
    state: ChainState,
    regression: Option<RegressionFit>,
    rng: &mut R,
) -> Result<ChainTrace> {
    let mut sampler = ChainSampler::new(net, hp, cfg, state)?;
    let mut reference = sampler.state().z.clone();
    let mut reference_log_lik = sampler.state().log_lik;
    let mut draws = Vec::with_capacity(cfg.n_draws() as usize);
    let report_every = (cfg.total_iters / 10).max(1);
    for s in 1..=cfg.total_iters {
        sampler.step(rng)?;
        let st = sampler.state();
        if s <= cfg.burn_in {
            if st.log_lik > reference_log_lik {
                reference_log_lik = st.log_lik;
                reference = st.z.clone();
            }
        } else if (s - cfg.burn_in).is_multiple_of(cfg.thin) {
            draws.push(Draw::from_state(st));
        }
        if s % report_every == 0 {
            let (az, aa) = sampler.acceptance();
            debug!(
                "seed {}: iteration {s}/{} alpha {:.4} loglik {:.2} accept z {:.3} alpha {:.3}",
                cfg.seed,
                cfg.total_iters,
                st.alpha,
                st.log_lik,
                az.rate(),
                aa.rate()
            );
        }
    }
    let (accept_z, accept_alpha) = sampler.acceptance();
    info!("chain seed {} done: acceptance z {:.3}, alpha {:.3}", cfg.seed, accept_z.rate(), accept_alpha.rate());
    Ok(ChainTrace { seed: cfg.seed, draws, reference, reference_log_lik, accept_z, accept_alpha, regression })
}

/// Initializes from the network and runs one chain seeded by `cfg.seed`.
pub fn run_chain(net: &Network, hp: &Hyperparams, cfg: &SamplerConfig) -> Result<ChainTrace> {
    run_chains(net, hp, cfg, 1).map(|mut v| v.remove(0))
}

/// Runs `n_chains` chains with seeds `cfg.seed + k`, concurrently on the
/// current rayon pool. Each chain's jitter is drawn from its own stream.
pub fn run_chains(net: &Network, hp: &Hyperparams, cfg: &SamplerConfig, n_chains: usize) -> Result<Vec<ChainTrace>> {
    if n_chains == 0 {
        return Err(LspmError::InvalidArgument("need at least one chain".into()));
    }
    cfg.validate()?;
    let link = Link::for_kind(net.kind());
    let base = base_initialization(net, hp, link, cfg.init.alpha_inflation)?;
    (0..n_chains)
        .into_par_iter()
        .map(|k| {
            let chain_cfg = SamplerConfig { seed: cfg.seed.wrapping_add(k as u64), ..*cfg };
            let mut rng = ChaCha8Rng::seed_from_u64(chain_cfg.seed);
            state_from_base(net, &base, link, cfg.init.jitter_sd, &mut rng)
                .and_then(|state| run_chain_from(net, hp, &chain_cfg, state, Some(base.regression), &mut rng))
                .map_err(|e| LspmError::Chain { chain: k, source: Box::new(e) })
        })
        .collect()
}
