//! Latent shrinkage position models for binary and count networks.
//!
//! Nodes sit in a latent space whose per-dimension precisions follow a
//! multiplicative truncated gamma process, so superfluous dimensions are
//! shrunk away and the effective dimension is inferred from one fit.
//! Inference is Metropolis-within-Gibbs; see [`sampler::run_chains`].

// `!(x > 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod init;
pub mod linalg;
pub mod model;
pub mod network;
pub mod postprocess;
pub mod ppc;
pub mod prior;
pub mod sampler;
pub mod simulate;
pub mod trace_io;

pub use error::{LspmError, Result};
pub use init::{InitOptions, RegressionFit};
pub use model::{LatentConfig, Link, ModelParams};
pub use network::{EdgeKind, FileFormat, GeodesicMatrix, LoadOptions, Network};
pub use postprocess::{EffectiveDimensionReport, EffectiveDimensionRule, Parameter, PosteriorSummary, ScalarSummary};
pub use ppc::{PpcOptions, PpcReport};
pub use prior::{Hyperparams, ShrinkageState};
pub use sampler::{ChainState, ChainTrace, Draw, SamplerConfig, ZUpdateMode};
pub use simulate::{SimulatedNetwork, StudyGrid, StudySetting, Truth};
