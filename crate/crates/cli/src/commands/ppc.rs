use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use lspm_core::network::load_network;
use lspm_core::ppc::run_ppc;
use lspm_core::trace_io::load_chains;
use lspm_core::{PpcOptions, PpcReport};

use super::{read_truth, usage, FitSpec};
use crate::manifest::{read_manifest, write_json, Manifest};
use crate::PpcArgs;

pub const REPORT_FILE: &str = "ppc_report.json";
pub const METRICS_FILE: &str = "ppc_metrics.csv";

/// One row per replicate; metrics that do not apply are left empty.
pub fn write_metrics_csv(report: &PpcReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    let mut header: Vec<String> = ["replicate", "chain", "draw", "density", "transitivity", "accuracy", "f1", "hamming", "mean_absolute_difference"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let k = report.options.max_count;
    let counts = report.kind == lspm_core::EdgeKind::Count;
    if counts {
        header.extend((0..=k).map(|c| format!("freq_{c}")));
        header.push(format!("freq_over_{k}"));
    }
    w.write_record(&header)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in &report.records {
        let mut row = vec![
            r.replicate.to_string(),
            r.chain.to_string(),
            r.draw.to_string(),
            r.density.to_string(),
            r.transitivity.to_string(),
            opt(r.accuracy),
            opt(r.f1),
            opt(r.hamming),
            opt(r.mean_absolute_difference),
        ];
        if let Some(freq) = &r.count_frequencies {
            row.extend(freq.iter().map(u64::to_string));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn run(args: PpcArgs) -> Result<()> {
    let started = Instant::now();
    let fit = read_manifest(&args.run_dir)?;
    let spec: FitSpec = serde_json::from_value(fit.config.clone())?;
    let input = args
        .input
        .clone()
        .or_else(|| spec.input.clone())
        .ok_or_else(|| usage("no observed network: pass --input"))?;
    let net = load_network(&input, &spec.data.load_options(spec.model.edge_kind()))
        .with_context(|| format!("loading {}", input.display()))?;
    let traces = load_chains(&args.run_dir)?;
    let truth = args.truth.as_deref().map(read_truth).transpose()?;
    let z_true = truth.as_ref().map(|t| t.latent()).transpose()?;
    let opts = PpcOptions { n_replicates: args.replicates, seed: args.seed, max_count: args.max_count };
    let report = run_ppc(&traces, &net, &opts, z_true.as_ref())?;
    for (name, b) in &report.bands {
        log::info!("{name}: mean {:.4}, 95% band [{:.4}, {:.4}]", b.mean, b.lower, b.upper);
    }
    if let Some(r2) = report.pseudo_r2 {
        log::info!("pseudo R2 {r2:.4}");
    }

    let out = args.out_dir.clone().unwrap_or_else(|| args.run_dir.clone());
    std::fs::create_dir_all(&out)?;
    write_json(&out.join(REPORT_FILE), &report)?;
    write_metrics_csv(&report, &out.join(METRICS_FILE))?;

    let config = serde_json::json!({
        "run_dir": args.run_dir,
        "input": input,
        "truth": args.truth,
        "options": opts,
    });
    let mut manifest = Manifest::new("ppc", config);
    manifest.seeds = vec![args.seed];
    manifest.outputs = vec![REPORT_FILE.into(), METRICS_FILE.into()];
    manifest.finish(started, &out, "ppc_manifest.json")
}
