//! Acceptance suite. Runs every criterion in order and prints one
//! `criterion N ... PASS|FAIL` line each; exits non-zero if any fails.
//!
//! Positional numeric arguments select a subset, e.g.
//! `cargo test -p lspm-core --test acceptance -- 1 6 9`.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use common::oracles::{geweke_moments, toy_posterior_ks, truncated_gamma_ks};
use lspm_core::model::LatentConfig;
use lspm_core::network::{transitivity, EdgeKind, Network};
use lspm_core::postprocess::{
    align_traces, effective_dimensions, gelman_rubin, gelman_rubin_traces, posterior_summary, procrustes_correlation,
    EffectiveDimensionRule, Parameter,
};
use lspm_core::ppc::{accuracy_f1, confusion, hamming, pseudo_r2, run_ppc, PpcOptions};
use lspm_core::prior::{expected_sq_distance_dim, expected_sq_distance_total, incomplete_gamma_ratio, Hyperparams};
use lspm_core::sampler::{run_chain, run_chains, AcceptCounter, ChainTrace, Draw, SamplerConfig};
use lspm_core::simulate::simulate_network;
use lspm_core::trace_io::{write_trace_csv, write_z_draws_csv};
use lspm_core::InitOptions;
use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

// ---------------------------------------------------------------- criterion 1

fn closed_form() -> Outcome {
    let hp = Hyperparams::default();
    let d1 = expected_sq_distance_dim(1, &hp).unwrap();
    let d2 = expected_sq_distance_dim(2, &hp).unwrap();
    let total = expected_sq_distance_total(&Hyperparams { p: 5000, ..hp }).unwrap();
    let r2 = incomplete_gamma_ratio(2.0).unwrap();
    let r0 = incomplete_gamma_ratio(1e-9).unwrap();
    let pass = (d1 - 20.0).abs() < 1e-9
        && (d2 - 10.0).abs() < 1e-9
        && (total - 40.0).abs() < 1e-9
        && (r2 - 0.5).abs() < 1e-9
        && (r0 - 0.68).abs() < 0.005;
    outcome(pass, format!("E d1 {d1:.12}, E d2 {d2:.12}, total limit {total:.12}, ratio(2) {r2:.12}, ratio(0+) {r0:.5}"))
}

// ---------------------------------------------------------------- criterion 2

fn sampler_oracles() -> Outcome {
    let t = Instant::now();
    let ks = toy_posterior_ks();
    let grid_time = t.elapsed().as_secs_f64();
    let grid_ok = ks.iter().all(|&d| d < 0.05) && grid_time < 120.0;

    let t = Instant::now();
    let moments = geweke_moments(1_500_000);
    let geweke_time = t.elapsed().as_secs_f64();
    let worst = moments.iter().map(|m| m.z_score()).fold(0.0, f64::max);
    let geweke_ok = worst < 3.0 && geweke_time < 300.0;

    let (d_tg, crit) = truncated_gamma_ks(0.01, 1.0, 20_000, 11);
    let tg_ok = d_tg < crit;

    outcome(
        grid_ok && geweke_ok && tg_ok,
        format!(
            "(a) grid KS alpha {:.4} delta_1 {:.4} |z1-z2| {:.4} in {grid_time:.0}s; \
             (b) Geweke worst |z| {worst:.2} in {geweke_time:.0}s; \
             (c) truncated gamma shape 0.01 KS {d_tg:.4} < {crit:.4}",
            ks[0], ks[1], ks[2]
        ),
    )
}

// ---------------------------------------------------------- criteria 3 and 4

struct RecoveryFit {
    seed: u64,
    effective: Option<usize>,
    delta_ratio: f64,
    procrustes: f64,
}

fn recovery_fits() -> Vec<RecoveryFit> {
    (1..=10u64)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sim = simulate_network(100, &[0.5, 1.1], 3.0, EdgeKind::Binary, false, &mut rng).unwrap();
            let hp = Hyperparams::with_dims(5);
            let cfg = SamplerConfig { seed, ..SamplerConfig::desk() };
            let aligned = align_traces(&[run_chain(&sim.network, &hp, &cfg).unwrap()]).unwrap();
            let s = posterior_summary(&aligned).unwrap();
            let eff = effective_dimensions(&s.delta, &EffectiveDimensionRule::for_prior(&hp)).unwrap();
            let z2 = s.z_mean.leading_dims(2).unwrap();
            RecoveryFit {
                seed,
                effective: eff.effective,
                delta_ratio: s.delta[2].mean / s.delta[1].mean,
                procrustes: procrustes_correlation(&z2, &sim.z_true).unwrap(),
            }
        })
        .collect()
}

fn dimension_recovery(fits: &[RecoveryFit]) -> Outcome {
    let hits = fits.iter().filter(|f| f.effective == Some(2) && f.delta_ratio > 2.0).count();
    let runs: Vec<String> =
        fits.iter().map(|f| format!("{}:{:?}/{:.2}", f.seed, f.effective, f.delta_ratio)).collect();
    outcome(hits >= 8, format!("{hits}/10 runs report 2 with delta_3/delta_2 > 2 [seed:effective/ratio {}]", runs.join(" ")))
}

fn position_recovery(fits: &[RecoveryFit]) -> Outcome {
    let hits = fits.iter().filter(|f| f.procrustes >= 0.90).count();
    let min = fits.iter().map(|f| f.procrustes).fold(1.0, f64::min);
    outcome(hits >= 8, format!("{hits}/10 runs with Procrustes correlation >= 0.90 (min {min:.3})"))
}

// ---------------------------------------------------------------- criterion 5

fn alpha_bias() -> Outcome {
    let (mut under, mut over) = (Vec::new(), Vec::new());
    for seed in 1..=5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sim = simulate_network(100, &[0.5, 1.1, 1.05, 1.15], 6.0, EdgeKind::Binary, false, &mut rng).unwrap();
        for p in [3usize, 8] {
            let cfg = SamplerConfig { seed, ..SamplerConfig::desk() };
            let trace = run_chain(&sim.network, &Hyperparams::with_dims(p), &cfg).unwrap();
            let mean = posterior_summary(&[trace]).unwrap().alpha.mean;
            if p == 3 { under.push(mean) } else { over.push(mean) }
        }
    }
    let below = under.iter().filter(|&&a| a < 6.0).count();
    let above = over.iter().filter(|&&a| a > 6.0).count();
    let fmt = |v: &[f64]| v.iter().map(|a| format!("{a:.2}")).collect::<Vec<_>>().join(" ");
    outcome(
        below >= 4 && above >= 4,
        format!("p=3: {below}/5 below 6 [{}]; p=8: {above}/5 above 6 [{}]", fmt(&under), fmt(&over)),
    )
}

// ---------------------------------------------------------------- criterion 6

fn random_network(rng: &mut ChaCha8Rng, n: usize, kind: EdgeKind, directed: bool, p_edge: f64) -> Network {
    let mut m = Array2::<u32>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if i == j || (!directed && j < i) {
                continue;
            }
            let v = match kind {
                EdgeKind::Binary => u32::from(rng.random::<f64>() < p_edge),
                EdgeKind::Count if rng.random::<f64>() < p_edge => rng.random_range(1..5),
                EdgeKind::Count => 0,
            };
            m[[i, j]] = v;
            if !directed {
                m[[j, i]] = v;
            }
        }
    }
    Network::new(m, kind, directed).unwrap()
}

/// Triangles and connected triples by brute force over node triples.
fn transitivity_oracle(net: &Network) -> f64 {
    let n = net.n();
    let adj = |i: usize, j: usize| net.get(i, j) > 0 || net.get(j, i) > 0;
    let (mut triangles, mut triples) = (0u64, 0u64);
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let e = [adj(i, j), adj(j, k), adj(i, k)].iter().filter(|&&b| b).count();
                match e {
                    3 => {
                        triangles += 1;
                        triples += 3;
                    }
                    2 => triples += 1,
                    _ => {}
                }
            }
        }
    }
    if triples == 0 { 0.0 } else { 3.0 * triangles as f64 / triples as f64 }
}

fn ppc_metric_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);

    let mut identity_failures = 0;
    for _ in 0..1000 {
        let n = rng.random_range(2..15);
        let directed = rng.random::<bool>();
        let p = rng.random::<f64>();
        let obs = random_network(&mut rng, n, EdgeKind::Binary, directed, p);
        let rep = random_network(&mut rng, n, EdgeKind::Binary, directed, p);
        let (acc, _) = accuracy_f1(&obs, &rep).unwrap();
        if (hamming(&obs, &rep).unwrap() - (1.0 - acc)).abs() > 1e-12 {
            identity_failures += 1;
        }
    }

    let mut transitivity_failures = 0;
    for case in 0..500 {
        let n = case % 13;
        let kind = if case % 3 == 0 { EdgeKind::Count } else { EdgeKind::Binary };
        let p = rng.random::<f64>();
        let net = random_network(&mut rng, n, kind, case % 2 == 0, p);
        if (transitivity(&net) - transitivity_oracle(&net)).abs() > 1e-12 {
            transitivity_failures += 1;
        }
    }

    let counts = Network::new(array![[0, 1, 4, 0], [5, 0, 2, 0], [7, 3, 0, 1], [0, 0, 2, 0]], EdgeKind::Count, true).unwrap();
    let ybar = counts.total() as f64 / 12.0;
    let saturated = pseudo_r2(&counts, &counts.edges().mapv(f64::from)).unwrap();
    let null = pseudo_r2(&counts, &Array2::from_elem((4, 4), ybar)).unwrap();

    // Hand-counted: TP (0,1) (1,2); FP (1,0); FN (0,2) (2,1); TN (2,0).
    let obs = Network::new(array![[0, 1, 1], [0, 0, 1], [0, 1, 0]], EdgeKind::Binary, true).unwrap();
    let rep = Network::new(array![[0, 1, 0], [1, 0, 1], [0, 0, 0]], EdgeKind::Binary, true).unwrap();
    let (acc, f1) = accuracy_f1(&obs, &rep).unwrap();
    let hand_ok = confusion(&obs, &rep).unwrap() == (2, 1, 2, 1) && acc == 0.5 && (f1 - 4.0 / 7.0).abs() < 1e-15;

    outcome(
        identity_failures == 0 && transitivity_failures == 0 && saturated == 1.0 && null == 0.0 && hand_ok,
        format!(
            "hamming identity failures {identity_failures}/1000; transitivity mismatches {transitivity_failures}/500; \
             pseudo R2 saturated {saturated}, null {null}; hand confusion {}",
            if hand_ok { "ok" } else { "mismatch" }
        ),
    )
}

// ---------------------------------------------------------------- criterion 7

/// A trace whose only draw is the data-generating state.
fn pinned_trace(z: &LatentConfig, alpha: f64, delta: &[f64], omega: &[f64]) -> ChainTrace {
    ChainTrace {
        seed: 0,
        draws: vec![Draw { iteration: 0, z: z.clone(), alpha, delta: delta.to_vec(), omega: omega.to_vec(), log_lik: 0.0 }],
        reference: z.clone(),
        reference_log_lik: 0.0,
        accept_z: AcceptCounter::default(),
        accept_alpha: AcceptCounter::default(),
        regression: None,
    }
}

fn calibration_under_truth() -> Outcome {
    let mut covered = 0;
    for s in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(700 + s);
        let sim = simulate_network(50, &[0.5, 1.1], 3.0, EdgeKind::Binary, false, &mut rng).unwrap();
        let t = &sim.truth;
        let trace = pinned_trace(&sim.z_true, t.alpha, &t.delta, &t.omega);
        let opts = PpcOptions { n_replicates: 200, seed: s, ..PpcOptions::default() };
        let report = run_ppc(&[trace], &sim.network, &opts, None).unwrap();
        if report.bands["density"].contains(report.observed.density) {
            covered += 1;
        }
    }
    outcome(covered >= 45, format!("observed density inside the 95% band for {covered}/50 networks"))
}

// ---------------------------------------------------------------- criterion 8

fn convergence_tooling() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let stream: Vec<f64> = (0..20_000).map(|_| normal.sample(&mut rng)).collect();
    let split: Vec<Vec<f64>> = stream.chunks(5_000).map(<[f64]>::to_vec).collect();
    let r_iid = gelman_rubin(&split).unwrap();

    let divergent: Vec<Vec<f64>> =
        (0..4).map(|c| (0..1_000).map(|_| 10.0 * c as f64 + normal.sample(&mut rng)).collect()).collect();
    let r_div = gelman_rubin(&divergent).unwrap();

    let sim = simulate_network(50, &[0.5, 1.1], 3.0, EdgeKind::Binary, false, &mut rng).unwrap();
    let cfg = SamplerConfig { seed: 80, init: InitOptions { jitter_sd: 0.5, ..InitOptions::default() }, ..SamplerConfig::desk() };
    let traces = align_traces(&run_chains(&sim.network, &Hyperparams::with_dims(2), &cfg, 4).unwrap()).unwrap();
    let r_alpha = gelman_rubin_traces(&traces, Parameter::Alpha).unwrap();

    outcome(
        (0.99..=1.02).contains(&r_iid) && r_div > 5.0 && r_alpha < 1.1,
        format!("split i.i.d. {r_iid:.4}; divergent {r_div:.1}; 4-chain fit alpha {r_alpha:.4}"),
    )
}

// ---------------------------------------------------------------- criterion 9

fn pipeline_bytes() -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let sim = simulate_network(30, &[0.5, 1.1], 3.0, EdgeKind::Binary, false, &mut rng).unwrap();
    let cfg = SamplerConfig {
        total_iters: 5_000,
        burn_in: 1_000,
        thin: 20,
        seed: 90,
        init: InitOptions { jitter_sd: 0.2, ..InitOptions::default() },
        ..SamplerConfig::default()
    };
    let traces = run_chains(&sim.network, &Hyperparams::with_dims(3), &cfg, 3).unwrap();
    let mut bytes = Vec::new();
    for t in &traces {
        write_trace_csv(t, &mut bytes).unwrap();
        write_z_draws_csv(t, &mut bytes).unwrap();
    }
    let summary = posterior_summary(&align_traces(&traces).unwrap()).unwrap();
    bytes.extend(serde_json::to_vec(&summary).unwrap());
    let report = run_ppc(&traces, &sim.network, &PpcOptions { n_replicates: 50, seed: 91, ..PpcOptions::default() }, None).unwrap();
    bytes.extend(serde_json::to_vec(&report).unwrap());
    bytes
}

fn determinism() -> Outcome {
    let in_pool = |threads: usize| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(pipeline_bytes)
    };
    let first = in_pool(1);
    let again = in_pool(1);
    let wide = in_pool(3);
    outcome(
        first == again && first == wide,
        format!(
            "{} bytes of traces, summary and PPC report; rerun {}, 3-thread pool {}",
            first.len(),
            if first == again { "identical" } else { "differs" },
            if first == wide { "identical" } else { "differs" }
        ),
    )
}

// ------------------------------------------------------------------- driver

fn run(number: u32, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f));
    let secs = t.elapsed().as_secs_f64();
    let (pass, detail) = match result {
        Ok(o) => (o.pass, o.detail),
        Err(e) => {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            (false, format!("panicked: {}", msg.unwrap_or_default()))
        }
    };
    println!("criterion {number} {name}: {} ({secs:.1}s) {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}

fn main() {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wants = |k: u32| selected.is_empty() || selected.contains(&k);
    let mut ok = true;
    if wants(1) {
        ok &= run(1, "closed-form prior properties", closed_form);
    }
    if wants(2) {
        ok &= run(2, "sampler correctness oracles", sampler_oracles);
    }
    if wants(3) || wants(4) {
        let t = Instant::now();
        match catch_unwind(recovery_fits) {
            Ok(fits) => {
                println!("(ten n=100 recovery fits took {:.0}s)", t.elapsed().as_secs_f64());
                if wants(3) {
                    ok &= run(3, "dimension recovery", || dimension_recovery(&fits));
                }
                if wants(4) {
                    ok &= run(4, "latent position recovery", || position_recovery(&fits));
                }
            }
            Err(_) => {
                for (k, name) in [(3, "dimension recovery"), (4, "latent position recovery")] {
                    if wants(k) {
                        ok &= run(k, name, || outcome(false, "recovery fits panicked"));
                    }
                }
            }
        }
    }
    if wants(5) {
        ok &= run(5, "alpha bias direction", alpha_bias);
    }
    if wants(6) {
        ok &= run(6, "PPC metric suite", ppc_metric_suite);
    }
    if wants(7) {
        ok &= run(7, "calibration under truth", calibration_under_truth);
    }
    if wants(8) {
        ok &= run(8, "convergence tooling", convergence_tooling);
    }
    if wants(9) {
        ok &= run(9, "determinism", determinism);
    }
    if !ok {
        std::process::exit(1);
    }
}
