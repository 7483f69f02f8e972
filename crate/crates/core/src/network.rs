//! Network representation, CSV ingestion and serialization, and the graph
//! statistics used by initialization and posterior predictive checks.

use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{LspmError, Result};

/// Edge type of a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Binary,
    Count,
}

impl std::str::FromStr for EdgeKind {
    type Err = LspmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "binary" | "logit" => Ok(EdgeKind::Binary),
            "count" | "poisson" => Ok(EdgeKind::Count),
            other => Err(LspmError::InvalidArgument(format!("unknown edge kind `{other}`"))),
        }
    }
}

/// A square adjacency matrix of non-negative integer edge values.
///
/// Invariants enforced at construction: the diagonal is zero, binary
/// networks only hold 0/1 and undirected networks are symmetric.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Network {
    edges: Array2<u32>,
    kind: EdgeKind,
    directed: bool,
}

impl Network {
    pub fn new(edges: Array2<u32>, kind: EdgeKind, directed: bool) -> Result<Self> {
        let (rows, cols) = edges.dim();
        if rows != cols {
            return Err(LspmError::InvalidNetwork(format!(
                "adjacency matrix is {rows}x{cols}, expected square"
            )));
        }
        for i in 0..rows {
            if edges[[i, i]] != 0 {
                return Err(LspmError::InvalidNetwork(format!(
                    "self-loop at node {i} (value {})",
                    edges[[i, i]]
                )));
            }
        }
        if kind == EdgeKind::Binary {
            if let Some(((i, j), v)) = edges.indexed_iter().find(|(_, &v)| v > 1) {
                return Err(LspmError::InvalidNetwork(format!(
                    "binary network has value {v} at ({i}, {j})"
                )));
            }
        }
        if !directed {
            for i in 0..rows {
                for j in (i + 1)..rows {
                    if edges[[i, j]] != edges[[j, i]] {
                        return Err(LspmError::InvalidNetwork(format!(
                            "undirected network is asymmetric at ({i}, {j})"
                        )));
                    }
                }
            }
        }
        Ok(Self { edges, kind, directed })
    }

    /// Network with no edges.
    pub fn empty(n: usize, kind: EdgeKind, directed: bool) -> Self {
        Self { edges: Array2::zeros((n, n)), kind, directed }
    }

    /// Like [`Network::new`], but undirected input is first symmetrized by the
    /// elementwise max of (i, j) and (j, i).
    pub fn from_matrix_symmetrized(mut edges: Array2<u32>, kind: EdgeKind, directed: bool) -> Result<Self> {
        let (rows, cols) = edges.dim();
        if rows != cols {
            return Err(LspmError::InvalidNetwork(format!(
                "adjacency matrix is {rows}x{cols}, expected square"
            )));
        }
        if !directed {
            for i in 0..rows {
                for j in (i + 1)..rows {
                    let v = edges[[i, j]].max(edges[[j, i]]);
                    edges[[i, j]] = v;
                    edges[[j, i]] = v;
                }
            }
        }
        Self::new(edges, kind, directed)
    }

    pub fn n(&self) -> usize {
        self.edges.nrows()
    }

    pub fn kind(&self) -> EdgeKind {
        self.kind
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.edges[[i, j]]
    }

    pub fn edges(&self) -> &Array2<u32> {
        &self.edges
    }

    /// Number of nonzero off-diagonal entries (ordered pairs).
    pub fn nonzero_count(&self) -> usize {
        self.edges.iter().filter(|&&v| v > 0).count()
    }

    /// Sum of all off-diagonal entries.
    pub fn total(&self) -> u64 {
        self.edges.iter().map(|&v| u64::from(v)).sum()
    }

    /// Undirected 0/1 adjacency: an edge exists if either direction is nonzero.
    pub fn undirected_adjacency(&self) -> Vec<Vec<usize>> {
        let n = self.n();
        let mut adj = vec![Vec::new(); n];
        for i in 0..n {
            for j in (i + 1)..n {
                if self.edges[[i, j]] > 0 || self.edges[[j, i]] > 0 {
                    adj[i].push(j);
                    adj[j].push(i);
                }
            }
        }
        adj
    }
}

/// Pairwise shortest-path hop counts.
#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicMatrix(Array2<f64>);

impl GeodesicMatrix {
    /// Wraps an arbitrary distance matrix (used for MDS on non-graph input).
    pub fn from_matrix(d: Array2<f64>) -> Result<Self> {
        let (r, c) = d.dim();
        if r != c {
            return Err(LspmError::ShapeMismatch(format!("distance matrix is {r}x{c}")));
        }
        if d.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(LspmError::InvalidArgument(
                "distances must be finite and non-negative".into(),
            ));
        }
        Ok(Self(d))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[[i, j]]
    }
}

/// Fraction of nonzero off-diagonal entries over the n(n-1) ordered pairs.
pub fn density(net: &Network) -> Result<f64> {
    let n = net.n();
    if n < 2 {
        return Err(LspmError::InvalidArgument(format!("density needs n >= 2, got {n}")));
    }
    Ok(net.nonzero_count() as f64 / (n * (n - 1)) as f64)
}

/// Global clustering coefficient of the binarized, symmetrized graph:
/// 3 x triangles / connected triples, or 0 when there are no triples.
pub fn transitivity(net: &Network) -> f64 {
    let n = net.n();
    let adj = net.undirected_adjacency();
    let mut mark = vec![false; n];
    let mut closed = 0u64; // ordered (j, k) neighbour pairs that are adjacent
    let mut triples = 0u64;
    for nbrs in &adj {
        let d = nbrs.len() as u64;
        triples += d * d.saturating_sub(1) / 2;
        for &j in nbrs {
            mark[j] = true;
        }
        for &j in nbrs {
            closed += adj[j].iter().filter(|&&k| mark[k]).count() as u64;
        }
        for &j in nbrs {
            mark[j] = false;
        }
    }
    if triples == 0 {
        return 0.0;
    }
    // Each triangle is seen twice at each of its three centres.
    (closed / 2) as f64 / triples as f64
}

/// BFS hop counts on the binarized, symmetrized graph. Unreachable pairs are
/// set to one more than the largest finite distance.
pub fn geodesic_distances(net: &Network) -> GeodesicMatrix {
    let n = net.n();
    let adj = net.undirected_adjacency();
    let mut d = Array2::<f64>::from_elem((n, n), f64::INFINITY);
    let mut queue = VecDeque::with_capacity(n);
    let mut max_finite = 0.0f64;
    for s in 0..n {
        d[[s, s]] = 0.0;
        queue.clear();
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            let du = d[[s, u]];
            for &v in &adj[u] {
                if d[[s, v]].is_infinite() {
                    d[[s, v]] = du + 1.0;
                    max_finite = max_finite.max(du + 1.0);
                    queue.push_back(v);
                }
            }
        }
    }
    let fill = max_finite + 1.0;
    d.mapv_inplace(|v| if v.is_infinite() { fill } else { v });
    GeodesicMatrix(d)
}

/// On-disk layout of a network file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileFormat {
    /// `from,to[,count]` rows, optional header.
    EdgeList,
    /// n rows of n comma-separated values.
    Dense,
}

impl std::str::FromStr for FileFormat {
    type Err = LspmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "edgelist" | "edge-list" | "edges" => Ok(FileFormat::EdgeList),
            "dense" | "matrix" | "adjacency" => Ok(FileFormat::Dense),
            other => Err(LspmError::InvalidArgument(format!("unknown file format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoadOptions {
    pub format: FileFormat,
    pub kind: EdgeKind,
    pub directed: bool,
    /// 0 or 1; applies to edge lists only.
    pub index_base: u8,
    /// Node count for edge lists with trailing isolated nodes.
    pub nodes: Option<usize>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self { format: FileFormat::EdgeList, kind: EdgeKind::Binary, directed: false, index_base: 1, nodes: None }
    }
}

pub fn load_network(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<Network> {
    let file = File::open(path.as_ref())?;
    parse_network(BufReader::new(file), opts)
}

pub fn parse_network<R: Read>(reader: R, opts: &LoadOptions) -> Result<Network> {
    if opts.index_base > 1 {
        return Err(LspmError::InvalidArgument(format!(
            "index base must be 0 or 1, got {}",
            opts.index_base
        )));
    }
    let rows = read_rows(BufReader::new(reader))?;
    match opts.format {
        FileFormat::EdgeList => parse_edge_list(&rows, opts),
        FileFormat::Dense => parse_dense(&rows, opts),
    }
}

fn read_rows<R: BufRead>(reader: R) -> Result<Vec<(usize, Vec<String>)>> {
    let mut rows = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields = trimmed.split(',').map(|f| f.trim().to_string()).collect();
        rows.push((idx + 1, fields));
    }
    Ok(rows)
}

fn parse_value(field: &str, line: usize) -> Result<u32> {
    if let Ok(v) = field.parse::<u32>() {
        return Ok(v);
    }
    match field.parse::<f64>() {
        Ok(v) if v < 0.0 => Err(LspmError::Parse { line, msg: format!("negative entry `{field}`") }),
        Ok(v) if v.fract() == 0.0 && v <= f64::from(u32::MAX) => Ok(v as u32),
        Ok(_) => Err(LspmError::Parse { line, msg: format!("non-integer count `{field}`") }),
        Err(_) => {
            if field.starts_with('-') {
                Err(LspmError::Parse { line, msg: format!("negative entry `{field}`") })
            } else {
                Err(LspmError::Parse { line, msg: format!("not a number: `{field}`") })
            }
        }
    }
}

fn is_header(fields: &[String]) -> bool {
    fields.iter().any(|f| f.parse::<f64>().is_err())
}

fn parse_edge_list(rows: &[(usize, Vec<String>)], opts: &LoadOptions) -> Result<Network> {
    let base = usize::from(opts.index_base);
    let body = match rows.first() {
        Some((_, f)) if is_header(f) => &rows[1..],
        _ => rows,
    };
    let mut triples = Vec::with_capacity(body.len());
    let mut max_index = 0usize;
    for (line, fields) in body {
        let line = *line;
        if fields.len() < 2 || fields.len() > 3 {
            return Err(LspmError::Parse {
                line,
                msg: format!("expected `from,to[,count]`, found {} fields", fields.len()),
            });
        }
        let from = parse_value(&fields[0], line)? as usize;
        let to = parse_value(&fields[1], line)? as usize;
        if from < base || to < base {
            return Err(LspmError::Parse { line, msg: format!("node index below base {base}") });
        }
        let (i, j) = (from - base, to - base);
        let w = if fields.len() == 3 { parse_value(&fields[2], line)? } else { 1 };
        if i == j && w != 0 {
            return Err(LspmError::InvalidNetwork(format!(
                "self-loop on node {from} (line {line})"
            )));
        }
        max_index = max_index.max(i).max(j);
        triples.push((line, i, j, w));
    }
    let n = match opts.nodes {
        Some(n) if n <= max_index && !triples.is_empty() => {
            return Err(LspmError::InvalidArgument(format!(
                "edge list references node {} but only {n} nodes declared",
                max_index + base
            )))
        }
        Some(n) => n,
        None if triples.is_empty() => 0,
        None => max_index + 1,
    };
    let mut edges = Array2::<u32>::zeros((n, n));
    for (line, i, j, w) in triples {
        if i == j {
            continue;
        }
        match opts.kind {
            EdgeKind::Binary => {
                if w > 1 {
                    return Err(LspmError::Parse { line, msg: format!("binary edge with weight {w}") });
                }
                edges[[i, j]] = edges[[i, j]].max(w);
            }
            EdgeKind::Count => edges[[i, j]] = edges[[i, j]].saturating_add(w),
        }
    }
    Network::from_matrix_symmetrized(edges, opts.kind, opts.directed)
}

fn parse_dense(rows: &[(usize, Vec<String>)], opts: &LoadOptions) -> Result<Network> {
    let n = rows.len();
    let mut edges = Array2::<u32>::zeros((n, n));
    for (r, (line, fields)) in rows.iter().enumerate() {
        if fields.len() != n {
            return Err(LspmError::InvalidNetwork(format!(
                "dense matrix is not square: line {line} has {} columns, expected {n}",
                fields.len()
            )));
        }
        for (c, f) in fields.iter().enumerate() {
            edges[[r, c]] = parse_value(f, *line)?;
        }
    }
    Network::from_matrix_symmetrized(edges, opts.kind, opts.directed)
}

/// Writes a network. Undirected edge lists only list i < j; the index base
/// is applied to edge lists.
pub fn write_network<W: Write>(net: &Network, mut w: W, format: FileFormat, index_base: u8) -> Result<()> {
    let base = usize::from(index_base);
    let n = net.n();
    match format {
        FileFormat::EdgeList => {
            writeln!(w, "from,to,count")?;
            for i in 0..n {
                let start = if net.is_directed() { 0 } else { i + 1 };
                for j in start..n {
                    let v = net.get(i, j);
                    if i != j && v > 0 {
                        writeln!(w, "{},{},{}", i + base, j + base, v)?;
                    }
                }
            }
        }
        FileFormat::Dense => {
            for i in 0..n {
                let row: Vec<String> = (0..n).map(|j| net.get(i, j).to_string()).collect();
                writeln!(w, "{}", row.join(","))?;
            }
        }
    }
    Ok(())
}

pub fn save_network(net: &Network, path: impl AsRef<Path>, format: FileFormat, index_base: u8) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    write_network(net, &mut w, format, index_base)?;
    w.flush()?;
    Ok(())
}
