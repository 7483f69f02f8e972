use std::time::Instant;

use anyhow::{Context, Result};
use lspm_core::network::load_network;
use lspm_core::sampler::run_chains;
use lspm_core::trace_io::save_chain;
use lspm_core::Link;

use super::{acceptance, check_dims, usage, FitSpec};
use crate::config::{peek, read_config_file, resolve, Overrides};
use crate::manifest::{Manifest, MANIFEST_FILE};
use crate::FitArgs;

pub fn resolve_spec(args: &FitArgs) -> Result<FitSpec> {
    let file = args.config.as_deref().map(read_config_file).transpose()?;
    let mut o = Overrides::default();
    o.set("input", args.input.as_ref())
        .set("data.format", args.format.map(lspm_core::FileFormat::from))
        .set("data.index_base", args.index_base)
        .set("data.directed", args.directed)
        .set("data.nodes", args.nodes)
        .set("model", args.model.map(Link::from))
        .set("chains", args.chains)
        .set("prior.p", args.dims)
        .set("prior.a1", args.a1)
        .set("prior.b1", args.b1)
        .set("prior.a2", args.a2)
        .set("prior.b2", args.b2)
        .set("prior.mu_alpha", args.mu_alpha)
        .set("prior.sigma2_alpha", args.sigma2_alpha)
        .set("sampler.total_iters", args.iters)
        .set("sampler.burn_in", args.burnin)
        .set("sampler.thin", args.thin)
        .set("sampler.seed", args.seed)
        .set("sampler.step_z", args.step_z)
        .set("sampler.step_alpha", args.step_alpha)
        .set("sampler.z_update", args.z_update.map(lspm_core::ZUpdateMode::from))
        .set("sampler.init.jitter_sd", args.jitter);
    let flags = o.into_value();
    // Run-length defaults depend on the edge type.
    let model: Link = peek("model", file.as_ref(), &flags)?.unwrap_or(Link::Logit);
    let spec = resolve(&FitSpec::defaults(model), file, flags)?;
    if spec.chains == 0 {
        return Err(usage("at least one chain is required"));
    }
    spec.sampler.validate().map_err(|e| usage(e.to_string()))?;
    spec.prior.validate(None).map_err(|e| usage(e.to_string()))?;
    Ok(spec)
}

pub fn run(args: FitArgs) -> Result<()> {
    let started = Instant::now();
    let mut spec = resolve_spec(&args)?;
    let input = spec.input.clone().ok_or_else(|| usage("--input is required (flag or config)"))?;
    let input = std::fs::canonicalize(&input).with_context(|| format!("input {}", input.display()))?;
    spec.input = Some(input.clone());
    let net = load_network(&input, &spec.data.load_options(spec.model.edge_kind()))
        .with_context(|| format!("loading {}", input.display()))?;
    check_dims(spec.prior.p, net.n())?;
    log::info!(
        "fitting {} nodes, p = {}, {} chain(s) of {} iterations",
        net.n(),
        spec.prior.p,
        spec.chains,
        spec.sampler.total_iters
    );

    let traces = run_chains(&net, &spec.prior, &spec.sampler, spec.chains)?;
    std::fs::create_dir_all(&args.out_dir)?;
    let mut manifest = Manifest::new("fit", serde_json::to_value(&spec)?);
    for (k, t) in traces.iter().enumerate() {
        let files = save_chain(&args.out_dir, k, t)?;
        for f in [files.trace, files.z, files.reference, files.meta] {
            manifest.outputs.push(f.file_name().expect("file").to_string_lossy().into_owned());
        }
        log::info!("chain {k}: Z acceptance {:.3}, alpha acceptance {:.3}", t.accept_z.rate(), t.accept_alpha.rate());
    }
    manifest.seeds = traces.iter().map(|t| t.seed).collect();
    manifest.acceptance = acceptance(&traces);
    manifest.finish(started, &args.out_dir, MANIFEST_FILE)
}
