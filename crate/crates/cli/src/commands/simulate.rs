use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use anyhow::Result;
use lspm_core::network::write_network;
use lspm_core::simulate::{simulate_network, study_preset};
use lspm_core::{FileFormat, Link, SimulatedNetwork, StudySetting};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::usage;
use crate::manifest::{write_json, Manifest, MANIFEST_FILE};
use crate::SimulateArgs;

/// Seeds of the networks of one setting: stream `setting` of the master seed.
pub fn network_seeds(master: u64, setting: usize, count: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(setting as u64);
    (0..count).map(|_| rng.next_u64()).collect()
}

/// Directory-safe form of a setting label, e.g. `n=50` -> `n50`, `alpha=0.5` -> `alpha0p5`.
pub fn dir_name(label: &str) -> String {
    label.chars().filter(|&c| c != '=').map(|c| if c == '.' { 'p' } else { c }).collect()
}

pub fn simulate_setting(setting: &StudySetting, directed: bool, seed: u64) -> Result<SimulatedNetwork> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sim = simulate_network(setting.n, &setting.delta, setting.alpha, setting.kind, directed, &mut rng)?;
    sim.truth.seed = Some(seed);
    Ok(sim)
}

/// Writes `<stem>.csv` (dense adjacency) and `<stem>.truth.json`.
pub fn write_simulated(sim: &SimulatedNetwork, dir: &Path, stem: &str) -> Result<[String; 2]> {
    let net_file = format!("{stem}.csv");
    let truth_file = format!("{stem}.truth.json");
    write_network(&sim.network, BufWriter::new(File::create(dir.join(&net_file))?), FileFormat::Dense, 0)?;
    write_json(&dir.join(&truth_file), &sim.truth)?;
    Ok([net_file, truth_file])
}

pub fn run(args: SimulateArgs) -> Result<()> {
    let started = Instant::now();
    let (settings, replicates) = match (args.study, args.n) {
        (Some(id), _) => {
            let grid = study_preset(id, args.variant.as_deref()).map_err(|e| usage(e.to_string()))?;
            (grid.settings, args.replicates.unwrap_or(grid.replicates))
        }
        (None, Some(n)) => {
            let (alpha, delta) = (args.alpha.expect("required by clap"), args.delta.clone().expect("required by clap"));
            let kind = Link::from(args.model).edge_kind();
            let setting = StudySetting { label: "custom".into(), n, alpha, delta, kind, fit_dims: vec![] };
            (vec![setting], args.replicates.unwrap_or(1))
        }
        (None, None) => return Err(usage("pass either --study or --n/--alpha/--delta")),
    };

    std::fs::create_dir_all(&args.out_dir)?;
    let mut manifest = Manifest::new(
        "simulate",
        json!({
            "study": args.study,
            "variant": args.variant,
            "settings": settings,
            "replicates": replicates,
            "directed": args.directed,
            "seed": args.seed,
        }),
    );
    for (k, setting) in settings.iter().enumerate() {
        let sub = dir_name(&setting.label);
        let dir = args.out_dir.join(&sub);
        std::fs::create_dir_all(&dir)?;
        for (r, seed) in network_seeds(args.seed, k, replicates).into_iter().enumerate() {
            let sim = simulate_setting(setting, args.directed, seed)?;
            for f in write_simulated(&sim, &dir, &format!("network_{r:03}"))? {
                manifest.outputs.push(format!("{sub}/{f}"));
            }
            manifest.seeds.push(seed);
        }
        log::info!("{}: {replicates} network(s) in {}", setting.label, dir.display());
    }
    manifest.finish(started, &args.out_dir, MANIFEST_FILE)
}
