use std::fs::File;
use std::io::BufWriter;
use std::time::Instant;

use anyhow::Result;
use lspm_core::trace_io::{load_chains, write_latent_csv};
use lspm_core::EffectiveDimensionRule;

use super::{digest, read_truth, FitSpec};
use crate::manifest::{read_manifest, write_json, Manifest};
use crate::DiagnoseArgs;

pub const SUMMARY_FILE: &str = "summary.json";
pub const ALIGNED_Z_FILE: &str = "aligned_Z.csv";

pub fn run(args: DiagnoseArgs) -> Result<()> {
    let started = Instant::now();
    let fit = read_manifest(&args.run_dir)?;
    let spec: FitSpec = serde_json::from_value(fit.config.clone())?;
    let traces = load_chains(&args.run_dir)?;
    let mut rule = EffectiveDimensionRule::for_prior(&spec.prior);
    if let Some(j) = args.jump_factor {
        rule.jump_factor = j;
    }
    if let Some(w) = args.width_factor {
        rule.width_factor = w;
    }
    let truth = args.truth.as_deref().map(read_truth).transpose()?;
    let z_true = truth.as_ref().map(|t| t.latent()).transpose()?;
    let (d, summary) = digest(&traces, &rule, z_true.as_ref())?;
    if let Some(e) = &d.effective_dimension {
        log::info!("{}", e.message);
    }
    for (name, r) in &d.r_hat {
        log::info!("R-hat {name}: {r:.3}");
    }

    let out = args.out_dir.clone().unwrap_or_else(|| args.run_dir.clone());
    std::fs::create_dir_all(&out)?;
    write_json(&out.join(SUMMARY_FILE), &d)?;
    write_latent_csv(&summary.z_mean, BufWriter::new(File::create(out.join(ALIGNED_Z_FILE))?))?;

    let config = serde_json::json!({
        "run_dir": args.run_dir,
        "truth": args.truth,
        "rule": rule,
    });
    let mut manifest = Manifest::new("diagnose", config);
    manifest.seeds = traces.iter().map(|t| t.seed).collect();
    manifest.acceptance = d.acceptance.clone();
    manifest.outputs = vec![SUMMARY_FILE.into(), ALIGNED_Z_FILE.into()];
    manifest.finish(started, &out, "diagnose_manifest.json")
}
