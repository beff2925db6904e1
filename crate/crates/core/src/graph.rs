//! Communication topologies, Metropolis-Hastings weights and the spectral
//! statistic `β = σ₂(P)`.
//!
//! Nodes are 0-based in memory and 1-based in every serialized form.

use std::collections::{BTreeSet, VecDeque};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{seeded_start, top_eigenvalue_psd};
use crate::rng::{streams, Stream};

/// Absolute tolerance on row and column sums of a weight matrix.
pub const DOUBLY_STOCHASTIC_TOL: f64 = 1e-12;

/// Maximum number of Erdős–Rényi samples drawn before giving up.
pub const MAX_RESAMPLES: usize = 1000;

const SPECTRAL_REL_TOL: f64 = 1e-10;
/// Residual floor for `P ≈ J/n`, where `P − J/n` is pure rounding noise.
const SPECTRAL_ABS_TOL: f64 = 1e-24;
const SPECTRAL_MAX_ITER: usize = 100_000;

/// Undirected simple graph on `n` nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl Topology {
    /// Builds a topology from 0-based pairs. Pairs are normalized to `(min, max)`;
    /// self-loops, out-of-range nodes and duplicates are rejected.
    pub fn new(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("topology needs at least one node".into()));
        }
        let mut edges = BTreeSet::new();
        for (i, j) in pairs {
            if i == j {
                return Err(Error::InvalidInput(format!("self-loop at node {}", i + 1)));
            }
            if i >= n || j >= n {
                return Err(Error::InvalidInput(format!(
                    "edge ({}, {}) out of range for n = {n}",
                    i + 1,
                    j + 1
                )));
            }
            let e = (i.min(j), i.max(j));
            if !edges.insert(e) {
                return Err(Error::InvalidInput(format!(
                    "duplicate edge ({}, {})",
                    e.0 + 1,
                    e.1 + 1
                )));
            }
        }
        Ok(Self { n, edges })
    }

    pub fn complete(n: usize) -> Self {
        let pairs = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j)));
        Self::new(n, pairs).expect("complete graph is valid")
    }

    pub fn path(n: usize) -> Self {
        Self::new(n, (1..n).map(|i| (i - 1, i))).expect("path graph is valid")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Edges as 0-based `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n];
        for &(i, j) in &self.edges {
            d[i] += 1;
            d[j] += 1;
        }
        d
    }

    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        adj
    }

    pub fn is_connected(&self) -> bool {
        let adj = self.neighbors();
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.n
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TopologyDoc {
    n: usize,
    edges: Vec<[usize; 2]>,
}

impl Serialize for Topology {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        TopologyDoc {
            n: self.n,
            edges: self.edges.iter().map(|&(i, j)| [i + 1, j + 1]).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Topology {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let doc = TopologyDoc::deserialize(d)?;
        let mut pairs = Vec::with_capacity(doc.edges.len());
        for [i, j] in doc.edges {
            if i == 0 || j == 0 {
                return Err(D::Error::custom("node indices are 1-based"));
            }
            pairs.push((i - 1, j - 1));
        }
        Topology::new(doc.n, pairs).map_err(D::Error::custom)
    }
}

/// Samples `G(n, ratio)`, resampling with seed `seed + k` on attempt `k` until
/// the sample is connected.
///
/// Pairs are visited in lexicographic order with one uniform draw each.
pub fn erdos_renyi(n: usize, ratio: f64, seed: u64) -> Result<Topology> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("erdos_renyi needs n >= 2, got {n}")));
    }
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::InvalidInput(format!("edge probability {ratio} not in (0, 1]")));
    }
    for attempt in 0..MAX_RESAMPLES {
        let mut rng = Stream::new(seed.wrapping_add(attempt as u64), streams::GRAPH);
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.uniform() < ratio {
                    pairs.push((i, j));
                }
            }
        }
        let topo = Topology::new(n, pairs)?;
        if topo.is_connected() {
            if attempt > 0 {
                log::debug!("erdos_renyi: connected sample after {} resamples", attempt);
            }
            return Ok(topo);
        }
    }
    Err(Error::ResampleExhausted {
        n,
        ratio,
        attempts: MAX_RESAMPLES,
    })
}

/// Dense doubly stochastic consensus matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    entries: Array2<f64>,
}

impl WeightMatrix {
    /// Wraps a square matrix after checking nonnegativity, a positive
    /// diagonal and unit row/column sums.
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        let w = Self { entries };
        w.validate()?;
        Ok(w)
    }

    pub fn identity(n: usize) -> Self {
        Self { entries: Array2::eye(n) }
    }

    /// `(1/n)·J`, exact averaging in one step.
    pub fn averaging(n: usize) -> Self {
        Self {
            entries: Array2::from_elem((n, n), 1.0 / n as f64),
        }
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[[i, j]]
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.n();
        (0..n).all(|i| (0..i).all(|j| self.entries[[i, j]] == self.entries[[j, i]]))
    }

    /// Checks the weight-matrix invariants.
    pub fn validate(&self) -> Result<()> {
        let (r, c) = self.entries.dim();
        if r != c || r == 0 {
            return Err(Error::InvalidInput(format!("weight matrix must be square and nonempty, got {r}x{c}")));
        }
        for ((i, j), &p) in self.entries.indexed_iter() {
            if !p.is_finite() || !(0.0..=1.0 + DOUBLY_STOCHASTIC_TOL).contains(&p) {
                return Err(Error::InvalidInput(format!("p[{},{}] = {p} outside [0, 1]", i + 1, j + 1)));
            }
        }
        for i in 0..r {
            if self.entries[[i, i]] <= 0.0 {
                return Err(Error::InvalidInput(format!("diagonal entry p[{0},{0}] is not positive", i + 1)));
            }
            let row: f64 = self.entries.row(i).sum();
            let col: f64 = self.entries.column(i).sum();
            if (row - 1.0).abs() > DOUBLY_STOCHASTIC_TOL || (col - 1.0).abs() > DOUBLY_STOCHASTIC_TOL {
                return Err(Error::InvalidInput(format!(
                    "row/column {} sums to {row}/{col}, not 1",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    /// Checks that nonzero off-diagonal weights sit on edges of `topo`.
    pub fn respects(&self, topo: &Topology) -> bool {
        let n = self.n();
        if topo.n() != n {
            return false;
        }
        let edges: BTreeSet<_> = topo.edges().collect();
        (0..n).all(|i| {
            (0..n).all(|j| i == j || self.entries[[i, j]] == 0.0 || edges.contains(&(i.min(j), i.max(j))))
        })
    }

    /// `Σ_j p_ij v_j`, summed in index order over nonzero weights.
    pub fn mix_row(&self, i: usize, vs: &[&Array1<f64>]) -> Array1<f64> {
        let mut out = Array1::zeros(vs[0].len());
        for (j, v) in vs.iter().enumerate() {
            let p = self.entries[[i, j]];
            if p != 0.0 {
                out.scaled_add(p, v);
            }
        }
        out
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightDoc {
    n: usize,
    rows: Vec<Vec<f64>>,
}

impl Serialize for WeightMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        WeightDoc {
            n: self.n(),
            rows: self.entries.rows().into_iter().map(|r| r.to_vec()).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for WeightMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let doc = WeightDoc::deserialize(d)?;
        if doc.rows.len() != doc.n || doc.rows.iter().any(|r| r.len() != doc.n) {
            return Err(D::Error::custom(format!("rows do not form a {0}x{0} matrix", doc.n)));
        }
        let flat: Vec<f64> = doc.rows.into_iter().flatten().collect();
        let entries = Array2::from_shape_vec((doc.n, doc.n), flat).map_err(D::Error::custom)?;
        WeightMatrix::new(entries).map_err(D::Error::custom)
    }
}

/// Metropolis–Hastings weights: `p_ij = 1/(1 + max(d_i, d_j))` on edges and
/// the remaining mass on the diagonal.
pub fn metropolis_weights(topo: &Topology) -> Result<WeightMatrix> {
    if !topo.is_connected() {
        return Err(Error::Disconnected);
    }
    let n = topo.n();
    let deg = topo.degrees();
    let mut p = Array2::zeros((n, n));
    for (i, j) in topo.edges() {
        let w = 1.0 / (1.0 + deg[i].max(deg[j]) as f64);
        p[[i, j]] = w;
        p[[j, i]] = w;
    }
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| p[[i, j]]).sum();
        p[[i, i]] = 1.0 - off;
    }
    WeightMatrix::new(p)
}

/// Second-largest singular value of a doubly stochastic matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralInfo {
    pub beta: f64,
    pub spectral_gap: f64,
}

/// `β = ‖P − J/n‖₂`, which equals `σ₂(P)` for doubly stochastic `P`.
///
/// The top singular pair `(1, 1/√n)` is deflated and the largest eigenvalue
/// of `MᵀM`, `M = P − J/n`, is found by power iteration from a seeded start
/// vector projected off `1`.
pub fn second_singular_value(p: &WeightMatrix) -> Result<SpectralInfo> {
    let n = p.n();
    let pm = p.entries();
    let deflate = |v: &Array1<f64>| v - v.mean().unwrap_or(0.0);
    let start = deflate(&seeded_start(n));
    let lambda = top_eigenvalue_psd(
        |v| {
            let mv = deflate(&pm.dot(v));
            deflate(&pm.t().dot(&mv))
        },
        start,
        SPECTRAL_REL_TOL,
        SPECTRAL_ABS_TOL,
        SPECTRAL_MAX_ITER,
        "second singular value power iteration",
    )?;
    let beta = lambda.max(0.0).sqrt();
    Ok(SpectralInfo {
        beta,
        spectral_gap: 1.0 - beta,
    })
}
