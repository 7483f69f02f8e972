//! Metropolis-within-Gibbs sampler: random-walk moves on Z, informed
//! proposals on α, and Gibbs updates of the shrinkage strengths.

mod engine;
mod moves;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::init::{InitOptions, RegressionFit};
use crate::model::{LatentConfig, Link};
use crate::network::EdgeKind;
use crate::prior::ShrinkageState;

pub use engine::{run_chain, run_chain_from, run_chains, ChainSampler};
pub use moves::{accept_alpha, accept_z, gibbs_update_deltas, informed_alpha_proposal, propose_z, AlphaProposal};

/// Granularity of the latent-position random walk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ZUpdateMode {
    /// One joint proposal for the whole n x p matrix per iteration.
    #[serde(rename = "whole")]
    WholeMatrix,
    /// A sweep of n single-row proposals per iteration.
    #[serde(rename = "pernode")]
    PerNode,
}

impl std::str::FromStr for ZUpdateMode {
    type Err = crate::error::LspmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "whole" | "wholematrix" | "whole-matrix" => Ok(ZUpdateMode::WholeMatrix),
            "pernode" | "per-node" | "node" => Ok(ZUpdateMode::PerNode),
            other => invalid(format!("unknown z-update mode `{other}`")),
        }
    }
}

/// Run length, proposal scales and seeding for one chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub total_iters: u64,
    pub burn_in: u64,
    pub thin: u64,
    /// Multiplier k of the per-dimension proposal variance k / ω_ℓ.
    pub step_z: f64,
    /// Multiplier of the informed α proposal variance.
    pub step_alpha: f64,
    pub z_update: ZUpdateMode,
    pub seed: u64,
    pub init: InitOptions,
}

pub const DEFAULT_STEP_Z: f64 = 0.02;

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            total_iters: 500_000,
            burn_in: 50_000,
            thin: 2_000,
            step_z: DEFAULT_STEP_Z,
            step_alpha: 1.0,
            z_update: ZUpdateMode::PerNode,
            seed: 0,
            init: InitOptions::default(),
        }
    }
}

impl SamplerConfig {
    /// Full-length defaults; count networks burn in longer.
    pub fn for_kind(kind: EdgeKind) -> Self {
        match kind {
            EdgeKind::Binary => Self::default(),
            EdgeKind::Count => Self { burn_in: 200_000, ..Self::default() },
        }
    }

    /// Scaled-down run lengths used for quick fits and test suites.
    pub fn desk() -> Self {
        Self { total_iters: 50_000, burn_in: 5_000, thin: 50, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_iters == 0 {
            return invalid("total iterations must be positive");
        }
        if self.burn_in >= self.total_iters {
            return invalid(format!(
                "burn-in ({}) must be below the total iterations ({})",
                self.burn_in, self.total_iters
            ));
        }
        if self.thin == 0 {
            return invalid("thinning interval must be at least 1");
        }
        for (name, v) in [("step_z", self.step_z), ("step_alpha", self.step_alpha)] {
            if !(0.01..=10.0).contains(&v) {
                return invalid(format!("{name} must lie in [0.01, 10], got {v}"));
            }
        }
        if !(self.init.alpha_inflation.is_finite() && self.init.alpha_inflation > 0.0) {
            return invalid("alpha inflation must be positive");
        }
        if !(self.init.jitter_sd.is_finite() && self.init.jitter_sd >= 0.0) {
            return invalid("jitter sd must be non-negative");
        }
        Ok(())
    }

    /// Number of retained draws, ⌊(S − burn_in) / thin⌋.
    pub fn n_draws(&self) -> u64 {
        (self.total_iters.saturating_sub(self.burn_in)) / self.thin.max(1)
    }
}

/// Current point of a chain. `log_lik` caches the log-likelihood at (Z, α).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub z: LatentConfig,
    pub alpha: f64,
    pub shrink: ShrinkageState,
    pub log_lik: f64,
    pub iteration: u64,
    pub link: Link,
}

/// One retained post-burn-in draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub iteration: u64,
    pub z: LatentConfig,
    pub alpha: f64,
    pub delta: Vec<f64>,
    pub omega: Vec<f64>,
    pub log_lik: f64,
}

impl Draw {
    pub fn from_state(s: &ChainState) -> Self {
        Self {
            iteration: s.iteration,
            z: s.z.clone(),
            alpha: s.alpha,
            delta: s.shrink.delta().to_vec(),
            omega: s.shrink.omega().to_vec(),
            log_lik: s.log_lik,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcceptCounter {
    pub accepted: u64,
    pub proposed: u64,
}

impl AcceptCounter {
    pub fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += u64::from(accepted);
    }

    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// Output of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainTrace {
    pub seed: u64,
    pub draws: Vec<Draw>,
    /// Highest log-likelihood configuration seen during burn-in.
    pub reference: LatentConfig,
    pub reference_log_lik: f64,
    pub accept_z: AcceptCounter,
    pub accept_alpha: AcceptCounter,
    pub regression: Option<RegressionFit>,
}

impl ChainTrace {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn alphas(&self) -> Vec<f64> {
        self.draws.iter().map(|d| d.alpha).collect()
    }

    /// Trace of δ_h for 0-based dimension `h`.
    pub fn deltas(&self, h: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d.delta[h]).collect()
    }

    pub fn log_liks(&self) -> Vec<f64> {
        self.draws.iter().map(|d| d.log_lik).collect()
    }
}
