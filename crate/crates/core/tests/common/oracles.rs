//! Reference computations shared by the oracle and acceptance suites.

use lspm_core::model::{LatentConfig, Link};
use lspm_core::network::{EdgeKind, Network};
use lspm_core::prior::{sample_truncated_gamma, Hyperparams, ShrinkageState};
use lspm_core::sampler::{run_chain_from, ChainSampler, ChainState, SamplerConfig};
use lspm_core::simulate::sample_edges;
use ndarray::{array, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use statrs::distribution::{ContinuousCDF, Gamma as GammaDist};
use statrs::function::gamma::checked_gamma_ur;

use super::{batch_mean_se, ks_one_sample, ks_two_sample};

fn rejection_oracle(shape: f64, rate: f64, lower: f64, rng: &mut ChaCha8Rng) -> f64 {
    let g = Gamma::new(shape, 1.0 / rate).unwrap();
    loop {
        let x: f64 = g.sample(rng);
        if x >= lower {
            return x;
        }
    }
}

/// Two-sample KS statistic of the truncated gamma sampler (lower bound 1)
/// against rejection from the untruncated gamma, and its 0.001-level critical value.
pub fn truncated_gamma_ks(shape: f64, rate: f64, m: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ours: Vec<f64> = (0..m).map(|_| sample_truncated_gamma(shape, rate, 1.0, &mut rng).unwrap()).collect();
    let oracle: Vec<f64> = (0..m).map(|_| rejection_oracle(shape, rate, 1.0, &mut rng)).collect();
    assert!(ours.iter().all(|&x| x >= 1.0));
    (ks_two_sample(&ours, &oracle), 1.95 * (2.0 / m as f64).sqrt())
}

/// Grid posterior of the n = 3, p = 1 logistic model with δ₁ integrated out:
/// p(z) ∝ (b1 + Σz²/2)^-(a1 + 3/2).
struct ToyGrid {
    alpha: Vec<f64>,
    alpha_mass: Vec<f64>,
    delta_cdf_at: Vec<f64>,
    delta_cdf: Vec<f64>,
    d12_cdf_at: Vec<f64>,
    d12_cdf: Vec<f64>,
}

fn toy_grid(net: &Network, hp: &Hyperparams) -> ToyGrid {
    let (gz, lz) = (81usize, 6.0);
    let (ga, lo, hi) = (161usize, -10.0, 10.0);
    let hz = 2.0 * lz / gz as f64;
    let ha = (hi - lo) / ga as f64;
    let zs: Vec<f64> = (0..gz).map(|k| -lz + (k as f64 + 0.5) * hz).collect();
    let alpha: Vec<f64> = (0..ga).map(|k| lo + (k as f64 + 0.5) * ha).collect();
    let y = |i: usize, j: usize| f64::from(net.get(i, j) + net.get(j, i));
    let s = [y(0, 1), y(0, 2), y(1, 2)];
    let shape = hp.a1 + 1.5;
    let log_prior_alpha: Vec<f64> = alpha.iter().map(|a| -(a - hp.mu_alpha).powi(2) / (2.0 * hp.sigma2_alpha)).collect();

    let mut alpha_mass = vec![0.0; ga];
    // Posterior z-mass binned by Σz² (bin width 0.01) and by the signed cell offset of z1 − z2.
    let ss_bin = 0.01;
    let mut ss_mass = vec![(0.0, 0.0); (3.0 * lz * lz / ss_bin) as usize + 1];
    let mut offset_mass = vec![0.0; 2 * gz - 1];
    let mut logs = vec![0.0; ga];
    for (i1, &z1) in zs.iter().enumerate() {
        for (i2, &z2) in zs.iter().enumerate() {
            for &z3 in &zs {
                let d2 = [(z1 - z2).powi(2), (z1 - z3).powi(2), (z2 - z3).powi(2)];
                let ss = z1 * z1 + z2 * z2 + z3 * z3;
                let lp_z = -shape * (hp.b1 + ss / 2.0).ln();
                for (k, &a) in alpha.iter().enumerate() {
                    let mut ll = 0.0;
                    for (&d, &sv) in d2.iter().zip(&s) {
                        let eta: f64 = a - d;
                        ll += eta * sv - 2.0 * (eta.max(0.0) + (-eta.abs()).exp().ln_1p());
                    }
                    logs[k] = ll + lp_z + log_prior_alpha[k];
                }
                let mut zmass = 0.0;
                for k in 0..ga {
                    // Every log term is non-positive here, so exp cannot overflow.
                    let w = logs[k].exp();
                    alpha_mass[k] += w;
                    zmass += w;
                }
                let bin = &mut ss_mass[(ss / ss_bin) as usize];
                bin.0 += zmass;
                bin.1 += zmass * ss;
                offset_mass[i1 + gz - 1 - i2] += zmass;
            }
        }
    }
    let total: f64 = alpha_mass.iter().sum();
    alpha_mass.iter_mut().for_each(|m| *m /= total);

    let delta_cdf_at: Vec<f64> = (1..=400).map(|k| k as f64 * 0.02).collect();
    let delta_cdf = delta_cdf_at
        .iter()
        .map(|&d| {
            ss_mass
                .iter()
                .filter(|b| b.0 > 0.0)
                .map(|&(w, wss)| w * GammaDist::new(shape, hp.b1 + wss / w / 2.0).unwrap().cdf(d))
                .sum::<f64>()
                / total
        })
        .collect();
    // Within a cell pair the offset z1 − z2 is triangular on (m − 1, m + 1) cells.
    let tri = |t: f64| match t {
        t if t <= -1.0 => 0.0,
        t if t <= 0.0 => (1.0 + t).powi(2) / 2.0,
        t if t < 1.0 => 1.0 - (1.0 - t).powi(2) / 2.0,
        _ => 1.0,
    };
    let d12_cdf_at: Vec<f64> = (1..=600).map(|k| k as f64 * 0.01).collect();
    let d12_cdf = d12_cdf_at
        .iter()
        .map(|&x| {
            offset_mass
                .iter()
                .enumerate()
                .map(|(k, &w)| {
                    let m = (k as f64 - (gz - 1) as f64) * hz;
                    w * (tri((x - m) / hz) - tri((-x - m) / hz))
                })
                .sum::<f64>()
                / total
        })
        .collect();
    ToyGrid { alpha, alpha_mass, delta_cdf_at, delta_cdf, d12_cdf_at, d12_cdf }
}

/// Piecewise-linear CDF through (x_k, F_k), starting from (x_0 - h, 0).
fn interp_cdf(xs: &[f64], fs: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        let h = xs[1] - xs[0];
        return fs[0] * ((x - (xs[0] - h)) / h).max(0.0);
    }
    match xs.iter().position(|&v| v >= x) {
        None => 1.0,
        Some(k) => fs[k - 1] + (fs[k] - fs[k - 1]) * (x - xs[k - 1]) / (xs[k] - xs[k - 1]),
    }
}

/// KS distances of 10⁵ thinned draws of α, δ₁ and |z₁ − z₂| from the grid posterior
/// of the three-node toy.
pub fn toy_posterior_ks() -> [f64; 3] {
    let net = Network::new(array![[0, 1, 0], [1, 0, 1], [0, 0, 0]], EdgeKind::Binary, true).unwrap();
    // Lighter-tailed δ₁ prior keeps the grid truncation error negligible.
    let hp = Hyperparams { a1: 3.0, b1: 2.0, ..Hyperparams::with_dims(1) };
    let grid = toy_grid(&net, &hp);

    let cfg = SamplerConfig { total_iters: 2_010_000, burn_in: 10_000, thin: 20, step_z: 1.0, seed: 3, ..SamplerConfig::default() };
    let state = ChainState {
        z: LatentConfig::new(array![[0.1], [-0.1], [0.3]]).unwrap(),
        alpha: 0.0,
        shrink: ShrinkageState::from_delta(vec![1.0]).unwrap(),
        log_lik: 0.0,
        iteration: 0,
        link: Link::Logit,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let trace = run_chain_from(&net, &hp, &cfg, state, None, &mut rng).unwrap();
    assert_eq!(trace.len(), 100_000);

    let h = grid.alpha[1] - grid.alpha[0];
    let mut cum = vec![0.0];
    for m in &grid.alpha_mass {
        cum.push(cum.last().unwrap() + m);
    }
    let edges: Vec<f64> = (0..=grid.alpha.len()).map(|k| grid.alpha[0] - h / 2.0 + k as f64 * h).collect();
    let d_alpha = ks_one_sample(&trace.alphas(), |x| interp_cdf(&edges, &cum, x).clamp(0.0, 1.0));
    let d_delta = ks_one_sample(&trace.deltas(0), |x| interp_cdf(&grid.delta_cdf_at, &grid.delta_cdf, x));
    let d12: Vec<f64> = trace.draws.iter().map(|d| (d.z.get(0, 0) - d.z.get(1, 0)).abs()).collect();
    let d_dist = ks_one_sample(&d12, |x| interp_cdf(&grid.d12_cdf_at, &grid.d12_cdf, x));
    [d_alpha, d_delta, d_dist]
}

/// Exact prior moments of (α, δ₁, δ₂).
fn prior_moments(hp: &Hyperparams) -> [(f64, f64); 3] {
    let (a, b, c) = (hp.a2, hp.b2, hp.c2);
    let q = |s: f64| checked_gamma_ur(s, b * c).unwrap();
    let m1 = a / b * q(a + 1.0) / q(a);
    let m2 = a * (a + 1.0) / (b * b) * q(a + 2.0) / q(a);
    [(hp.mu_alpha, hp.sigma2_alpha), (hp.a1 / hp.b1, hp.a1 / (hp.b1 * hp.b1)), (m1, m2 - m1 * m1)]
}

/// Simulated moment against its exact value, with batch-means standard error.
pub struct MomentCheck {
    pub name: String,
    pub estimate: f64,
    pub exact: f64,
    pub se: f64,
}

impl MomentCheck {
    pub fn z_score(&self) -> f64 {
        (self.estimate - self.exact).abs() / self.se
    }
}

/// Successive-conditional simulator on n = 4, p = 2: alternate y | θ and one
/// sampler sweep θ | y. The stationary θ-marginal is the prior.
pub fn geweke_moments(iters: usize) -> Vec<MomentCheck> {
    let hp = Hyperparams::with_dims(2);
    let cfg = SamplerConfig { total_iters: 10, burn_in: 0, thin: 1, step_z: 0.5, ..SamplerConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let n = 4;
    let alpha0: f64 = Normal::new(0.0, 3.0).unwrap().sample(&mut rng);
    let mut state = ChainState {
        z: LatentConfig::new(Array2::from_shape_fn((n, 2), |(i, l)| (i as f64 - 1.5) * 0.3 / (l + 1) as f64)).unwrap(),
        alpha: alpha0,
        shrink: ShrinkageState::from_delta(vec![1.1, 2.5]).unwrap(),
        log_lik: 0.0,
        iteration: 0,
        link: Link::Logit,
    };
    let mut series = [Vec::with_capacity(iters), Vec::with_capacity(iters), Vec::with_capacity(iters)];
    for _ in 0..iters {
        let net = sample_edges(&state.z, state.alpha, EdgeKind::Binary, true, &mut rng).unwrap();
        let mut sampler = ChainSampler::new(&net, &hp, &cfg, state).unwrap();
        sampler.step(&mut rng).unwrap();
        state = sampler.into_state();
        let d = state.shrink.delta();
        series[0].push(state.alpha);
        series[1].push(d[0]);
        series[2].push(d[1]);
    }
    let mut out = Vec::new();
    for ((x, (mean, var)), name) in series.iter().zip(prior_moments(&hp)).zip(["alpha", "delta_1", "delta_2"]) {
        let (m, se_m) = batch_mean_se(x, 50);
        let sq: Vec<f64> = x.iter().map(|v| (v - mean).powi(2)).collect();
        let (v, se_v) = batch_mean_se(&sq, 50);
        out.push(MomentCheck { name: format!("{name} mean"), estimate: m, exact: mean, se: se_m });
        out.push(MomentCheck { name: format!("{name} variance"), estimate: v, exact: var, se: se_v });
    }
    out
}
