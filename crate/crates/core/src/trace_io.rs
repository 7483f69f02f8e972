//! CSV and JSON persistence of chain output.
//!
//! Floats are written in shortest round-trip form, so a saved chain reloads
//! bit-identically.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{LspmError, Result};
use crate::init::RegressionFit;
use crate::model::LatentConfig;
use crate::sampler::{AcceptCounter, ChainTrace, Draw};

fn parse_err(line: usize, msg: impl Into<String>) -> LspmError {
    LspmError::Parse { line, msg: msg.into() }
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, k: usize, line: usize) -> Result<T> {
    let raw = rec.get(k).ok_or_else(|| parse_err(line, format!("missing column {}", k + 1)))?;
    raw.trim().parse().map_err(|_| parse_err(line, format!("cannot parse {raw:?}")))
}

fn record_line(rec: &csv::StringRecord) -> usize {
    rec.position().map_or(0, |p| p.line() as usize)
}

/// `iter,alpha,delta_1..delta_p,omega_1..omega_p,loglik`, one row per draw.
pub fn write_trace_csv<W: Write>(trace: &ChainTrace, w: W) -> Result<()> {
    let p = trace.draws.first().map_or(trace.reference.p(), |d| d.delta.len());
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["iter".to_string(), "alpha".to_string()];
    header.extend((1..=p).map(|h| format!("delta_{h}")));
    header.extend((1..=p).map(|h| format!("omega_{h}")));
    header.push("loglik".into());
    out.write_record(&header)?;
    for d in &trace.draws {
        let mut row = vec![d.iteration.to_string(), d.alpha.to_string()];
        row.extend(d.delta.iter().chain(&d.omega).map(f64::to_string));
        row.push(d.log_lik.to_string());
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Long-format Z draws: `draw,node,z_1..z_p`.
pub fn write_z_draws_csv<W: Write>(trace: &ChainTrace, w: W) -> Result<()> {
    let p = trace.reference.p();
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["draw".to_string(), "node".to_string()];
    header.extend((1..=p).map(|l| format!("z_{l}")));
    out.write_record(&header)?;
    for (k, d) in trace.draws.iter().enumerate() {
        for (i, row) in d.z.as_array().rows().into_iter().enumerate() {
            let mut rec = vec![k.to_string(), i.to_string()];
            rec.extend(row.iter().map(f64::to_string));
            out.write_record(&rec)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// One configuration: `node,z_1..z_p`.
pub fn write_latent_csv<W: Write>(z: &LatentConfig, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["node".to_string()];
    header.extend((1..=z.p()).map(|l| format!("z_{l}")));
    out.write_record(&header)?;
    for (i, row) in z.as_array().rows().into_iter().enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(row.iter().map(f64::to_string));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_latent_csv<R: Read>(r: R) -> Result<LatentConfig> {
    let mut reader = csv::Reader::from_reader(r);
    let p = reader.headers()?.len().saturating_sub(1);
    let mut values = Vec::new();
    let mut n = 0;
    for rec in reader.records() {
        let rec = rec?;
        let line = record_line(&rec);
        let node: usize = field(&rec, 0, line)?;
        if node != n {
            return Err(parse_err(line, format!("expected node {n}, found {node}")));
        }
        for l in 0..p {
            values.push(field::<f64>(&rec, l + 1, line)?);
        }
        n += 1;
    }
    LatentConfig::new(Array2::from_shape_vec((n, p), values).map_err(|e| LspmError::ShapeMismatch(e.to_string()))?)
}

/// Scalar columns of a trace CSV, in file order.
pub struct ScalarRow {
    pub iteration: u64,
    pub alpha: f64,
    pub delta: Vec<f64>,
    pub omega: Vec<f64>,
    pub log_lik: f64,
}

pub fn read_trace_csv<R: Read>(r: R) -> Result<Vec<ScalarRow>> {
    let mut reader = csv::Reader::from_reader(r);
    let width = reader.headers()?.len();
    if width < 5 || (width - 3) % 2 != 0 {
        return Err(parse_err(1, format!("unexpected trace header with {width} columns")));
    }
    let p = (width - 3) / 2;
    reader
        .records()
        .map(|rec| {
            let rec = rec?;
            let line = record_line(&rec);
            Ok(ScalarRow {
                iteration: field(&rec, 0, line)?,
                alpha: field(&rec, 1, line)?,
                delta: (0..p).map(|h| field(&rec, 2 + h, line)).collect::<Result<_>>()?,
                omega: (0..p).map(|h| field(&rec, 2 + p + h, line)).collect::<Result<_>>()?,
                log_lik: field(&rec, 2 + 2 * p, line)?,
            })
        })
        .collect()
}

pub fn read_z_draws_csv<R: Read>(r: R, n: usize) -> Result<Vec<LatentConfig>> {
    let mut reader = csv::Reader::from_reader(r);
    let p = reader.headers()?.len().saturating_sub(2);
    let mut draws = Vec::new();
    let mut current = Vec::with_capacity(n * p);
    for rec in reader.records() {
        let rec = rec?;
        let line = record_line(&rec);
        let (draw, node): (usize, usize) = (field(&rec, 0, line)?, field(&rec, 1, line)?);
        if draw != draws.len() || node != current.len() / p.max(1) {
            return Err(parse_err(line, format!("out-of-order row for draw {draw}, node {node}")));
        }
        for l in 0..p {
            current.push(field::<f64>(&rec, l + 2, line)?);
        }
        if node + 1 == n {
            let z = Array2::from_shape_vec((n, p), std::mem::take(&mut current)).expect("n x p values");
            draws.push(LatentConfig::new(z)?);
        }
    }
    if !current.is_empty() {
        return Err(parse_err(0, "truncated final draw"));
    }
    Ok(draws)
}

/// Per-chain metadata stored beside the CSV files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainMeta {
    pub chain: usize,
    pub seed: u64,
    pub n: usize,
    pub p: usize,
    pub n_draws: usize,
    pub reference_log_lik: f64,
    pub accept_z: AcceptCounter,
    pub accept_alpha: AcceptCounter,
    pub regression: Option<RegressionFit>,
}

/// File names used for chain `k` inside an output directory.
pub struct ChainFiles {
    pub trace: PathBuf,
    pub z: PathBuf,
    pub reference: PathBuf,
    pub meta: PathBuf,
}

impl ChainFiles {
    pub fn new(dir: &Path, k: usize) -> Self {
        Self {
            trace: dir.join(format!("chain_{k}_trace.csv")),
            z: dir.join(format!("chain_{k}_z.csv")),
            reference: dir.join(format!("chain_{k}_reference.csv")),
            meta: dir.join(format!("chain_{k}_meta.json")),
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| {
        LspmError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?))
}

pub fn save_chain(dir: &Path, k: usize, trace: &ChainTrace) -> Result<ChainFiles> {
    std::fs::create_dir_all(dir)?;
    let files = ChainFiles::new(dir, k);
    write_trace_csv(trace, create(&files.trace)?)?;
    write_z_draws_csv(trace, create(&files.z)?)?;
    write_latent_csv(&trace.reference, create(&files.reference)?)?;
    let meta = ChainMeta {
        chain: k,
        seed: trace.seed,
        n: trace.reference.n(),
        p: trace.reference.p(),
        n_draws: trace.len(),
        reference_log_lik: trace.reference_log_lik,
        accept_z: trace.accept_z,
        accept_alpha: trace.accept_alpha,
        regression: trace.regression,
    };
    let mut w = create(&files.meta)?;
    serde_json::to_writer_pretty(&mut w, &meta)?;
    w.flush()?;
    Ok(files)
}

pub fn load_chain(dir: &Path, k: usize) -> Result<ChainTrace> {
    let files = ChainFiles::new(dir, k);
    let meta: ChainMeta = serde_json::from_reader(open(&files.meta)?)?;
    let rows = read_trace_csv(open(&files.trace)?)?;
    let zs = read_z_draws_csv(open(&files.z)?, meta.n)?;
    if rows.len() != zs.len() || rows.len() != meta.n_draws {
        return Err(LspmError::ShapeMismatch(format!(
            "chain {k}: {} scalar rows, {} Z draws, {} expected",
            rows.len(),
            zs.len(),
            meta.n_draws
        )));
    }
    let draws = rows
        .into_iter()
        .zip(zs)
        .map(|(r, z)| Draw { iteration: r.iteration, z, alpha: r.alpha, delta: r.delta, omega: r.omega, log_lik: r.log_lik })
        .collect();
    Ok(ChainTrace {
        seed: meta.seed,
        draws,
        reference: read_latent_csv(open(&files.reference)?)?,
        reference_log_lik: meta.reference_log_lik,
        accept_z: meta.accept_z,
        accept_alpha: meta.accept_alpha,
        regression: meta.regression,
    })
}

/// Loads chains 0, 1, ... until the first missing metadata file.
pub fn load_chains(dir: &Path) -> Result<Vec<ChainTrace>> {
    let mut out = Vec::new();
    while ChainFiles::new(dir, out.len()).meta.exists() {
        out.push(load_chain(dir, out.len())?);
    }
    if out.is_empty() {
        return Err(LspmError::InvalidArgument(format!("no chain output found in {}", dir.display())));
    }
    Ok(out)
}
