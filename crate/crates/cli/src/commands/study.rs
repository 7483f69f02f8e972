use std::path::Path;
use std::time::Instant;

use anyhow::Result;
use lspm_core::network::density;
use lspm_core::ppc::run_ppc;
use lspm_core::sampler::run_chains;
use lspm_core::simulate::study_preset;
use lspm_core::{EdgeKind, EffectiveDimensionRule, Hyperparams, PpcOptions, SamplerConfig, StudySetting};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::simulate::{dir_name, network_seeds, simulate_setting, write_simulated};
use super::{check_dims, digest, usage, FitDigest};
use crate::config::{peek, read_config_file, resolve, Overrides};
use crate::manifest::{write_json, Manifest, MANIFEST_FILE};
use crate::StudyArgs;

pub const RESULTS_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Desk,
    Full,
}

/// Resolved study configuration; stored in the study manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySpec {
    pub study: u8,
    pub variant: Option<String>,
    pub scale: Scale,
    pub networks: usize,
    pub chains: usize,
    /// Run length for binary networks; `seed` here is ignored in favour of derived seeds.
    pub sampler: SamplerConfig,
    /// Burn-in for count networks.
    pub burn_in_count: u64,
    pub ppc_replicates: usize,
    pub seed: u64,
    pub directed: bool,
    /// Hyperparameters; `p` is replaced by each setting's truncation levels.
    pub prior: Hyperparams,
}

impl StudySpec {
    /// Desk scale shrinks the run 10x and uses 5 networks of 1 chain with
    /// 10 replicates. Full scale keeps the default run lengths with 30
    /// networks of 10 chains and 300 replicates.
    pub fn defaults(study: u8, scale: Scale) -> Self {
        let full = SamplerConfig::default();
        let (sampler, burn_in_count, networks, chains, ppc_replicates) = match scale {
            Scale::Desk => (SamplerConfig { total_iters: 50_000, burn_in: 10_000, thin: 50, ..full }, 10_000, 5, 1, 10),
            Scale::Full => (full, SamplerConfig::for_kind(EdgeKind::Count).burn_in, 30, 10, 300),
        };
        Self {
            study,
            variant: None,
            scale,
            networks,
            chains,
            sampler,
            burn_in_count,
            ppc_replicates,
            seed: 0,
            directed: false,
            prior: Hyperparams::default(),
        }
    }

    fn sampler_for(&self, kind: EdgeKind, seed: u64) -> SamplerConfig {
        let burn_in = if kind == EdgeKind::Count { self.burn_in_count } else { self.sampler.burn_in };
        SamplerConfig { burn_in, seed, ..self.sampler }
    }
}

/// One fitted (setting, network, truncation level) combination.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyRow {
    pub setting: String,
    pub network: usize,
    pub network_seed: u64,
    pub n: usize,
    pub p_star: usize,
    pub fit_dims: usize,
    pub alpha_true: f64,
    pub observed_density: f64,
    pub digest: FitDigest,
    pub ppc_density: Option<lspm_core::ppc::Band>,
}

struct Job<'a> {
    setting: &'a StudySetting,
    network: usize,
    network_seed: u64,
    fit_dims: usize,
}

fn fit_seed(network_seed: u64, p: usize) -> u64 {
    network_seed.wrapping_add(1_000_003u64.wrapping_mul(p as u64))
}

fn run_job(spec: &StudySpec, job: &Job, out: &Path) -> Result<StudyRow> {
    let s = job.setting;
    let sim = simulate_setting(s, spec.directed, job.network_seed)?;
    let sub = out.join(dir_name(&s.label));
    let stem = format!("network_{:03}", job.network);
    let hp = Hyperparams { p: job.fit_dims, ..spec.prior };
    let seed = fit_seed(job.network_seed, job.fit_dims);
    let traces = run_chains(&sim.network, &hp, &spec.sampler_for(s.kind, seed), spec.chains)?;
    let (d, _) = digest(&traces, &EffectiveDimensionRule::for_prior(&hp), Some(&sim.z_true))?;
    let ppc_density = if spec.ppc_replicates > 0 {
        let opts = PpcOptions { n_replicates: spec.ppc_replicates, seed, max_count: 10 };
        run_ppc(&traces, &sim.network, &opts, None)?.bands.get("density").copied()
    } else {
        None
    };
    log::info!("{} network {} p={}: alpha {:.3}", s.label, job.network, job.fit_dims, d.alpha.mean);
    let row = StudyRow {
        setting: s.label.clone(),
        network: job.network,
        network_seed: job.network_seed,
        n: s.n,
        p_star: s.delta.len(),
        fit_dims: job.fit_dims,
        alpha_true: s.alpha,
        observed_density: density(&sim.network)?,
        digest: d,
        ppc_density,
    };
    write_json(&sub.join(format!("{stem}_p{}.summary.json", job.fit_dims)), &row)?;
    Ok(row)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return f64::NAN;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_results(rows: &[StudyRow], study: u8, path: &Path) -> Result<()> {
    let p_max = rows.iter().map(|r| r.fit_dims).max().unwrap_or(0);
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = [
        "study", "setting", "network", "network_seed", "n", "p_star", "fit_dims", "alpha_true", "alpha_mean",
        "alpha_lower", "alpha_upper", "effective_dim", "procrustes", "r_hat_alpha", "accept_z", "observed_density",
        "ppc_density_mean", "ppc_density_lower", "ppc_density_upper",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((1..=p_max).map(|h| format!("delta_mean_{h}")));
    header.extend((1..=p_max).map(|h| format!("variance_mean_{h}")));
    w.write_record(&header)?;
    for r in rows {
        let d = &r.digest;
        let eff = d.effective_dimension.as_ref().map_or(String::new(), |e| match e.effective {
            Some(k) => k.to_string(),
            None => format!(">={}", e.truncation),
        });
        let mut rec = vec![
            study.to_string(),
            r.setting.clone(),
            r.network.to_string(),
            r.network_seed.to_string(),
            r.n.to_string(),
            r.p_star.to_string(),
            r.fit_dims.to_string(),
            r.alpha_true.to_string(),
            d.alpha.mean.to_string(),
            d.alpha.lower.to_string(),
            d.alpha.upper.to_string(),
            eff,
            fmt_opt(d.procrustes_correlation),
            fmt_opt(d.r_hat.get("alpha").copied()),
            mean(&d.acceptance.iter().map(|a| a.z).collect::<Vec<_>>()).to_string(),
            r.observed_density.to_string(),
            fmt_opt(r.ppc_density.map(|b| b.mean)),
            fmt_opt(r.ppc_density.map(|b| b.lower)),
            fmt_opt(r.ppc_density.map(|b| b.upper)),
        ];
        for h in 0..p_max {
            rec.push(fmt_opt(d.delta.get(h).map(|s| s.mean)));
        }
        for h in 0..p_max {
            rec.push(fmt_opt(d.variance.get(h).map(|s| s.mean)));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Per (setting, truncation level) averages across networks.
pub fn write_summary(rows: &[StudyRow], path: &Path) -> Result<()> {
    let p_max = rows.iter().map(|r| r.fit_dims).max().unwrap_or(0);
    let mut groups: Vec<(String, usize)> = Vec::new();
    for r in rows {
        let key = (r.setting.clone(), r.fit_dims);
        if !groups.contains(&key) {
            groups.push(key);
        }
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = ["setting", "fit_dims", "fits", "alpha_true", "alpha_mean", "alpha_mean_sd", "procrustes_mean", "procrustes_sd", "effective_dim_matches"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=p_max).map(|h| format!("delta_mean_{h}")));
    header.extend((1..=p_max).map(|h| format!("variance_mean_{h}")));
    w.write_record(&header)?;
    for (setting, p) in groups {
        let g: Vec<&StudyRow> = rows.iter().filter(|r| r.setting == setting && r.fit_dims == p).collect();
        let alphas: Vec<f64> = g.iter().map(|r| r.digest.alpha.mean).collect();
        let procrustes: Vec<f64> = g.iter().filter_map(|r| r.digest.procrustes_correlation).collect();
        let matches = g
            .iter()
            .filter(|r| r.digest.effective_dimension.as_ref().and_then(|e| e.effective) == Some(r.p_star))
            .count();
        let mut rec = vec![
            setting.clone(),
            p.to_string(),
            g.len().to_string(),
            g[0].alpha_true.to_string(),
            mean(&alphas).to_string(),
            sd(&alphas).to_string(),
            mean(&procrustes).to_string(),
            sd(&procrustes).to_string(),
            matches.to_string(),
        ];
        for h in 0..p_max {
            let v: Vec<f64> = g.iter().filter_map(|r| r.digest.delta.get(h).map(|s| s.mean)).collect();
            rec.push(if v.is_empty() { String::new() } else { mean(&v).to_string() });
        }
        for h in 0..p_max {
            let v: Vec<f64> = g.iter().filter_map(|r| r.digest.variance.get(h).map(|s| s.mean)).collect();
            rec.push(if v.is_empty() { String::new() } else { mean(&v).to_string() });
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn resolve_spec(args: &StudyArgs) -> Result<StudySpec> {
    let file = args.config.as_deref().map(read_config_file).transpose()?;
    let mut o = Overrides::default();
    o.set("study", args.study)
        .set("variant", args.variant.as_ref())
        .set("scale", args.scale.map(|s| match s {
            crate::ScaleArg::Desk => Scale::Desk,
            crate::ScaleArg::Full => Scale::Full,
        }))
        .set("networks", args.networks)
        .set("chains", args.chains)
        .set("sampler.total_iters", args.iters)
        .set("sampler.burn_in", args.burnin)
        .set("burn_in_count", args.burnin)
        .set("sampler.thin", args.thin)
        .set("ppc_replicates", args.replicates)
        .set("seed", args.seed);
    let flags = o.into_value();
    let study: u8 = peek("study", file.as_ref(), &flags)?.ok_or_else(|| usage("--study is required"))?;
    if !(1..=4).contains(&study) {
        return Err(usage(format!("study must be 1 to 4, got {study}")));
    }
    let scale: Scale = peek("scale", file.as_ref(), &flags)?.unwrap_or(Scale::Desk);
    let spec: StudySpec = resolve(&StudySpec::defaults(study, scale), file, flags)?;
    if spec.networks == 0 || spec.chains == 0 {
        return Err(usage("networks and chains must be positive"));
    }
    spec.sampler.validate().map_err(|e| usage(e.to_string()))?;
    spec.sampler_for(EdgeKind::Count, 0).validate().map_err(|e| usage(e.to_string()))?;
    Ok(spec)
}

pub fn run(args: StudyArgs) -> Result<()> {
    let started = Instant::now();
    let spec = resolve_spec(&args)?;
    let grid = study_preset(spec.study, spec.variant.as_deref()).map_err(|e| usage(e.to_string()))?;
    let out = &args.out_dir;
    let mut jobs = Vec::new();
    for (k, setting) in grid.settings.iter().enumerate() {
        std::fs::create_dir_all(out.join(dir_name(&setting.label)))?;
        for (r, network_seed) in network_seeds(spec.seed, k, spec.networks).into_iter().enumerate() {
            // Write each network once before the truncation levels race for it.
            let sim = simulate_setting(setting, spec.directed, network_seed)?;
            write_simulated(&sim, &out.join(dir_name(&setting.label)), &format!("network_{r:03}"))?;
            for &p in &setting.fit_dims {
                check_dims(p, setting.n)?;
                jobs.push(Job { setting, network: r, network_seed, fit_dims: p });
            }
        }
    }
    log::info!("study {} ({}): {} fits", grid.id, grid.name, jobs.len());
    let rows = jobs.par_iter().map(|j| run_job(&spec, j, out)).collect::<Result<Vec<_>>>()?;

    write_results(&rows, spec.study, &out.join(RESULTS_FILE))?;
    write_summary(&rows, &out.join(SUMMARY_FILE))?;
    let mut manifest = Manifest::new("study", serde_json::to_value(&spec)?);
    manifest.seeds = jobs.iter().map(|j| j.network_seed).collect();
    manifest.acceptance = rows.iter().flat_map(|r| r.digest.acceptance.iter().cloned()).collect();
    manifest.outputs = vec![RESULTS_FILE.into(), SUMMARY_FILE.into()];
    manifest.finish(started, out, MANIFEST_FILE)
}
