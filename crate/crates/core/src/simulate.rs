//! Generative model and the simulation-study presets.

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LspmError, Result};
use crate::model::{edge_mean, sq_distance_rows, LatentConfig, Link};
use crate::network::{EdgeKind, Network};
use crate::prior::ShrinkageState;

/// Data-generating parameters and latent positions of a simulated network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub n: usize,
    pub p_star: usize,
    pub alpha: f64,
    pub delta: Vec<f64>,
    pub omega: Vec<f64>,
    pub kind: EdgeKind,
    pub directed: bool,
    pub seed: Option<u64>,
    /// Row-major n x p_star latent positions.
    pub z: Vec<Vec<f64>>,
}

impl Truth {
    pub fn latent(&self) -> Result<LatentConfig> {
        let flat: Vec<f64> = self.z.iter().flatten().copied().collect();
        let arr = ndarray::Array2::from_shape_vec((self.n, self.p_star), flat)
            .map_err(|e| LspmError::ShapeMismatch(format!("truth positions: {e}")))?;
        LatentConfig::new(arr)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedNetwork {
    pub network: Network,
    pub z_true: LatentConfig,
    pub truth: Truth,
}

/// Draws z_iℓ ~ N(0, 1/ω_ℓ) and then edges from the model.
///
/// Undirected networks draw each unordered pair once and mirror it.
pub fn simulate_network<R: Rng + ?Sized>(
    n: usize,
    delta: &[f64],
    alpha: f64,
    kind: EdgeKind,
    directed: bool,
    rng: &mut R,
) -> Result<SimulatedNetwork> {
    if n < 2 {
        return invalid(format!("simulation needs n >= 2, got {n}"));
    }
    if !alpha.is_finite() {
        return invalid("alpha must be finite");
    }
    let shrink = ShrinkageState::from_delta(delta.to_vec())?;
    let p = shrink.p();
    let sds: Vec<f64> = shrink.variances().iter().map(|v| v.sqrt()).collect();
    let mut z = ndarray::Array2::zeros((n, p));
    for i in 0..n {
        for l in 0..p {
            z[[i, l]] = Normal::new(0.0, sds[l]).expect("finite sd").sample(rng);
        }
    }
    let z = LatentConfig::new(z)?;
    let network = sample_edges(&z, alpha, kind, directed, rng)?;
    let truth = Truth {
        n,
        p_star: p,
        alpha,
        delta: shrink.delta().to_vec(),
        omega: shrink.omega().to_vec(),
        kind,
        directed,
        seed: None,
        z: z.as_array().rows().into_iter().map(|r| r.to_vec()).collect(),
    };
    Ok(SimulatedNetwork { network, z_true: z, truth })
}

/// Edges given positions: Bernoulli(q_ij) or Poisson(λ_ij) per pair.
pub fn sample_edges<R: Rng + ?Sized>(z: &LatentConfig, alpha: f64, kind: EdgeKind, directed: bool, rng: &mut R) -> Result<Network> {
    let n = z.n();
    let link = Link::for_kind(kind);
    let mut m = ndarray::Array2::<u32>::zeros((n, n));
    for i in 0..n {
        let start = if directed { 0 } else { i + 1 };
        for j in start..n {
            if i == j {
                continue;
            }
            let mean = edge_mean(alpha, sq_distance_rows(z.row(i), z.row(j)), link);
            let y = match kind {
                EdgeKind::Binary => u32::from(rng.random::<f64>() < mean),
                EdgeKind::Count => {
                    if mean <= 0.0 {
                        0
                    } else {
                        let draw: f64 = Poisson::new(mean)
                            .map_err(|e| LspmError::InvalidArgument(format!("Poisson rate {mean}: {e}")))?
                            .sample(rng);
                        draw.min(f64::from(u32::MAX)) as u32
                    }
                }
            };
            m[[i, j]] = y;
            if !directed {
                m[[j, i]] = y;
            }
        }
    }
    Network::new(m, kind, directed)
}

/// One data-generating setting within a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySetting {
    pub label: String,
    pub n: usize,
    pub alpha: f64,
    pub delta: Vec<f64>,
    pub kind: EdgeKind,
    /// Truncation levels to fit to each simulated network.
    pub fit_dims: Vec<usize>,
}

/// Parameter grid of a simulation study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyGrid {
    pub id: u8,
    pub name: String,
    pub settings: Vec<StudySetting>,
    /// Networks simulated per setting.
    pub replicates: usize,
}

pub const STUDY3_ALPHAS: [f64; 6] = [0.0, 1.0, 5.0, 10.0, 20.0, 30.0];
/// Network size for the count-network study, which does not state one.
pub const STUDY4_N: usize = 100;

/// Grid of study `id` (1 to 4). `variant` selects a single setting by label
/// (for example `n=50`, `alpha=10`, `high`); `None` keeps all of them.
pub fn study_preset(id: u8, variant: Option<&str>) -> Result<StudyGrid> {
    let binary = EdgeKind::Binary;
    let (name, settings): (&str, Vec<StudySetting>) = match id {
        1 => (
            "network size",
            [20, 50, 100, 200]
                .iter()
                .map(|&n| StudySetting {
                    label: format!("n={n}"),
                    n,
                    alpha: 3.0,
                    delta: vec![0.5, 1.1],
                    kind: binary,
                    fit_dims: vec![5],
                })
                .collect(),
        ),
        2 => (
            "truncation level",
            vec![StudySetting {
                label: "n=100".into(),
                n: 100,
                alpha: 6.0,
                delta: vec![0.5, 1.1, 1.05, 1.15],
                kind: binary,
                fit_dims: vec![3, 4, 8],
            }],
        ),
        3 => (
            "network density",
            STUDY3_ALPHAS
                .iter()
                .map(|&alpha| StudySetting {
                    label: format!("alpha={alpha}"),
                    n: 50,
                    alpha,
                    delta: vec![0.5, 1.1, 1.05],
                    kind: binary,
                    fit_dims: vec![5],
                })
                .collect(),
        ),
        4 => (
            "count overdispersion",
            [("low", 0.5, [1.5, 1.5]), ("moderate", 1.5, [0.5, 1.5]), ("high", 5.0, [0.1, 1.5])]
                .iter()
                .map(|&(label, alpha, delta)| StudySetting {
                    label: label.into(),
                    n: STUDY4_N,
                    alpha,
                    delta: delta.to_vec(),
                    kind: EdgeKind::Count,
                    fit_dims: vec![5],
                })
                .collect(),
        ),
        other => return invalid(format!("unknown study {other}; expected 1 to 4")),
    };
    let settings = match variant {
        None => settings,
        Some(v) => {
            let picked: Vec<_> = settings.into_iter().filter(|s| s.label == v).collect();
            if picked.is_empty() {
                return invalid(format!("study {id} has no variant `{v}`"));
            }
            picked
        }
    };
    Ok(StudyGrid { id, name: name.into(), settings, replicates: 30 })
}

/// Sample mean and (n − 1)-denominator variance of the off-diagonal entries.
pub fn overdispersion_stats(net: &Network) -> Result<(f64, f64)> {
    if net.kind() != EdgeKind::Count {
        return invalid("overdispersion statistics need a count network");
    }
    let n = net.n();
    if n < 2 {
        return invalid("need at least two nodes");
    }
    let values: Vec<f64> = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| f64::from(net.get(i, j)))
        .collect();
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let var = if values.len() > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0) } else { 0.0 };
    Ok((mean, var))
}
