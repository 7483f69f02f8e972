//! Posterior predictive replicates and goodness-of-fit metrics.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LspmError, Result};
use crate::model::{edge_mean, sq_distance_rows, LatentConfig, Link};
use crate::network::{density, transitivity, EdgeKind, Network};
use crate::postprocess::{align_traces, posterior_summary, quantile_sorted, ScalarSummary};
use crate::sampler::ChainTrace;
use crate::simulate::sample_edges;

/// Replicate network drawn from the model at one posterior state.
pub fn replicate_network<R: Rng + ?Sized>(z: &LatentConfig, alpha: f64, kind: EdgeKind, directed: bool, rng: &mut R) -> Result<Network> {
    sample_edges(z, alpha, kind, directed, rng)
}

fn same_size(a: &Network, b: &Network) -> Result<()> {
    if a.n() != b.n() {
        return Err(LspmError::ShapeMismatch(format!("networks have {} and {} nodes", a.n(), b.n())));
    }
    if a.n() < 2 {
        return invalid("metrics need at least two nodes");
    }
    Ok(())
}

fn require_binary(net: &Network, what: &str) -> Result<()> {
    if net.kind() != EdgeKind::Binary {
        return invalid(format!("{what} is defined for binary networks only"));
    }
    Ok(())
}

fn require_count(net: &Network, what: &str) -> Result<()> {
    if net.kind() != EdgeKind::Count {
        return invalid(format!("{what} is defined for count networks only"));
    }
    Ok(())
}

fn off_diagonal(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
}

/// Confusion counts over ordered pairs: (tp, fp, fn, tn).
pub fn confusion(obs: &Network, rep: &Network) -> Result<(u64, u64, u64, u64)> {
    same_size(obs, rep)?;
    require_binary(obs, "confusion counts")?;
    require_binary(rep, "confusion counts")?;
    let mut c = (0, 0, 0, 0);
    for (i, j) in off_diagonal(obs.n()) {
        match (obs.get(i, j) > 0, rep.get(i, j) > 0) {
            (true, true) => c.0 += 1,
            (false, true) => c.1 += 1,
            (true, false) => c.2 += 1,
            (false, false) => c.3 += 1,
        }
    }
    Ok(c)
}

/// Accuracy and F1 of `rep` as a prediction of `obs`. F1 is 0 when both
/// precision and recall are 0 or undefined.
pub fn accuracy_f1(obs: &Network, rep: &Network) -> Result<(f64, f64)> {
    let (tp, fp, fneg, tn) = confusion(obs, rep)?;
    let total = (tp + fp + fneg + tn) as f64;
    let accuracy = (tp + tn) as f64 / total;
    let f1 = if tp == 0 { 0.0 } else { 2.0 * tp as f64 / (2 * tp + fp + fneg) as f64 };
    Ok((accuracy, f1))
}

/// Normalised Hamming distance over ordered pairs.
pub fn hamming(obs: &Network, rep: &Network) -> Result<f64> {
    same_size(obs, rep)?;
    require_binary(obs, "Hamming distance")?;
    require_binary(rep, "Hamming distance")?;
    let n = obs.n();
    let diff = off_diagonal(n).filter(|&(i, j)| (obs.get(i, j) > 0) != (rep.get(i, j) > 0)).count();
    Ok(diff as f64 / (n * (n - 1)) as f64)
}

/// Frequencies of off-diagonal values 0..=max_count followed by one overflow bucket.
pub fn count_frequency_table(net: &Network, max_count: u32) -> Vec<u64> {
    let mut table = vec![0u64; max_count as usize + 2];
    for (i, j) in off_diagonal(net.n()) {
        let y = net.get(i, j);
        table[if y > max_count { max_count as usize + 1 } else { y as usize }] += 1;
    }
    table
}

/// Mean absolute difference of counts over ordered pairs.
pub fn mean_absolute_difference(obs: &Network, rep: &Network) -> Result<f64> {
    same_size(obs, rep)?;
    let n = obs.n();
    let total: u64 = off_diagonal(n).map(|(i, j)| u64::from(obs.get(i, j).abs_diff(rep.get(i, j)))).sum();
    Ok(total as f64 / (n * (n - 1)) as f64)
}

/// Half the Poisson deviance Σ[y ln(y/λ) − (y − λ)] over off-diagonal pairs.
fn half_deviance(obs: &Network, rate: impl Fn(usize, usize) -> f64) -> Result<f64> {
    let mut dev = 0.0;
    for (i, j) in off_diagonal(obs.n()) {
        let y = f64::from(obs.get(i, j));
        let lam = rate(i, j);
        // A zero count admits a zero rate; that is the saturated fit there.
        if !(lam.is_finite() && (lam > 0.0 || (lam == 0.0 && y == 0.0))) {
            return invalid(format!("fitted rate at ({i}, {j}) must be positive, got {lam}"));
        }
        if y > 0.0 {
            dev += y * (y / lam).ln();
        }
        dev -= y - lam;
    }
    Ok(dev)
}

/// Deviance pseudo R² of fitted rates against the constant-rate null:
/// 1 − D(λ̂)/D(ȳ). The saturated fit λ̂ = y gives exactly 1 and λ̂ = ȳ gives
/// exactly 0, since both deviances go through the same summation.
pub fn pseudo_r2(obs: &Network, lambda_hat: &Array2<f64>) -> Result<f64> {
    require_count(obs, "pseudo R²")?;
    let n = obs.n();
    if lambda_hat.dim() != (n, n) {
        return Err(LspmError::ShapeMismatch(format!("rates are {:?} for {n} nodes", lambda_hat.dim())));
    }
    if n < 2 {
        return invalid("pseudo R² needs at least two nodes");
    }
    let ybar = obs.total() as f64 / (n * (n - 1)) as f64;
    let null = half_deviance(obs, |_, _| ybar)?;
    if null == 0.0 || obs.total() == 0 {
        return Err(LspmError::Undefined("pseudo R² with all counts equal".into()));
    }
    let fit = half_deviance(obs, |i, j| lambda_hat[[i, j]])?;
    Ok(1.0 - fit / null)
}

/// Pairwise Euclidean distance ratios of `z_hat` over `z_true`, for i < j.
pub fn distance_ratio_distribution(z_hat: &LatentConfig, z_true: &LatentConfig) -> Result<Vec<f64>> {
    let n = z_true.n();
    if z_hat.n() != n {
        return Err(LspmError::ShapeMismatch(format!("{} versus {n} nodes", z_hat.n())));
    }
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let truth = sq_distance_rows(z_true.row(i), z_true.row(j)).sqrt();
            if truth == 0.0 {
                return Err(LspmError::Undefined(format!("nodes {i} and {j} coincide in the true configuration")));
            }
            out.push(sq_distance_rows(z_hat.row(i), z_hat.row(j)).sqrt() / truth);
        }
    }
    Ok(out)
}

/// Posterior-mean edge means averaged over posterior states.
pub fn posterior_mean_rates(states: &[(&LatentConfig, f64)], link: Link) -> Result<Array2<f64>> {
    let (first, _) = states.first().ok_or_else(|| LspmError::InvalidArgument("no posterior states".into()))?;
    let n = first.n();
    let mut out = Array2::<f64>::zeros((n, n));
    for (z, alpha) in states {
        for (i, j) in off_diagonal(n) {
            out[[i, j]] += edge_mean(*alpha, sq_distance_rows(z.row(i), z.row(j)), link);
        }
    }
    out /= states.len() as f64;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpcOptions {
    pub n_replicates: usize,
    pub seed: u64,
    pub max_count: u32,
}

impl Default for PpcOptions {
    fn default() -> Self {
        Self { n_replicates: 100, seed: 0, max_count: 10 }
    }
}

/// Metrics of one replicate network. Fields not applicable to the edge type are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub chain: usize,
    pub draw: usize,
    pub density: f64,
    pub transitivity: f64,
    pub accuracy: Option<f64>,
    pub f1: Option<f64>,
    pub hamming: Option<f64>,
    pub mean_absolute_difference: Option<f64>,
    pub count_frequencies: Option<Vec<u64>>,
}

/// Mean and central 95% band of a metric across replicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Band {
    fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Some(Self {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            lower: quantile_sorted(&sorted, 0.025),
            upper: quantile_sorted(&sorted, 0.975),
        })
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedStats {
    pub density: f64,
    pub transitivity: f64,
    pub count_frequencies: Option<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceRatios {
    pub summary: ScalarSummary,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpcReport {
    pub kind: EdgeKind,
    pub options: PpcOptions,
    pub observed: ObservedStats,
    pub records: Vec<ReplicateRecord>,
    /// Keyed by metric name.
    pub bands: BTreeMap<String, Band>,
    /// Per-count bands of the frequency table, counts networks only.
    pub count_frequency_bands: Option<Vec<Band>>,
    pub pseudo_r2: Option<f64>,
    /// Why the pseudo R² is missing for a count network.
    pub pseudo_r2_note: Option<String>,
    pub distance_ratios: Option<DistanceRatios>,
}

fn replicate_rng(seed: u64, replicate: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64 + 1);
    rng
}

/// Draws `n_replicates` states uniformly from the pooled traces and scores a
/// replicate network at each. Replicate r uses its own generator stream, so
/// results do not depend on the thread count.
pub fn run_ppc(traces: &[ChainTrace], net: &Network, opts: &PpcOptions, z_true: Option<&LatentConfig>) -> Result<PpcReport> {
    let pool: Vec<(usize, usize)> =
        traces.iter().enumerate().flat_map(|(c, t)| (0..t.draws.len()).map(move |d| (c, d))).collect();
    if pool.is_empty() {
        return invalid("posterior predictive check needs at least one draw");
    }
    let kind = net.kind();
    let count = kind == EdgeKind::Count;
    let observed = ObservedStats {
        density: density(net)?,
        transitivity: transitivity(net),
        count_frequencies: count.then(|| count_frequency_table(net, opts.max_count)),
    };
    let mut chooser = ChaCha8Rng::seed_from_u64(opts.seed);
    let picks: Vec<(usize, usize)> = (0..opts.n_replicates).map(|_| pool[chooser.random_range(0..pool.len())]).collect();

    let records = picks
        .par_iter()
        .enumerate()
        .map(|(r, &(chain, draw))| {
            let state = &traces[chain].draws[draw];
            let rep = replicate_network(&state.z, state.alpha, kind, net.is_directed(), &mut replicate_rng(opts.seed, r))?;
            let (accuracy, f1, ham) = if count {
                (None, None, None)
            } else {
                let (a, f) = accuracy_f1(net, &rep)?;
                (Some(a), Some(f), Some(hamming(net, &rep)?))
            };
            Ok(ReplicateRecord {
                replicate: r,
                chain,
                draw,
                density: density(&rep)?,
                transitivity: transitivity(&rep),
                accuracy,
                f1,
                hamming: ham,
                mean_absolute_difference: if count { Some(mean_absolute_difference(net, &rep)?) } else { None },
                count_frequencies: count.then(|| count_frequency_table(&rep, opts.max_count)),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut bands = BTreeMap::new();
    type Metric = (&'static str, fn(&ReplicateRecord) -> Option<f64>);
    let metrics: [Metric; 6] = [
        ("density", |r| Some(r.density)),
        ("transitivity", |r| Some(r.transitivity)),
        ("accuracy", |r| r.accuracy),
        ("f1", |r| r.f1),
        ("hamming", |r| r.hamming),
        ("mean_absolute_difference", |r| r.mean_absolute_difference),
    ];
    for (name, get) in metrics {
        let values: Vec<f64> = records.iter().filter_map(get).collect();
        if let Some(b) = Band::from_values(&values) {
            bands.insert(name.to_string(), b);
        }
    }
    let count_frequency_bands = if count && !records.is_empty() {
        let width = opts.max_count as usize + 2;
        Some(
            (0..width)
                .map(|k| {
                    let v: Vec<f64> = records.iter().map(|r| r.count_frequencies.as_ref().expect("count record")[k] as f64).collect();
                    Band::from_values(&v).expect("non-empty")
                })
                .collect(),
        )
    } else {
        None
    };

    let (pseudo_r2, pseudo_r2_note) = if count && !picks.is_empty() {
        let states: Vec<(&LatentConfig, f64)> =
            picks.iter().map(|&(c, d)| (&traces[c].draws[d].z, traces[c].draws[d].alpha)).collect();
        match pseudo_r2(net, &posterior_mean_rates(&states, Link::Log)?) {
            Ok(v) => (Some(v), None),
            Err(LspmError::Undefined(msg)) => (None, Some(msg)),
            Err(e) => return Err(e),
        }
    } else {
        (None, None)
    };

    let distance_ratios = match z_true {
        Some(truth) => {
            let summary = posterior_summary(&align_traces(traces)?)?;
            let values = distance_ratio_distribution(&summary.z_mean, truth)?;
            Some(DistanceRatios { summary: ScalarSummary::from_values(&values)?, values })
        }
        None => None,
    };

    Ok(PpcReport {
        kind,
        options: *opts,
        observed,
        records,
        bands,
        count_frequency_bands,
        pseudo_r2,
        pseudo_r2_note,
        distance_ratios,
    })
}
