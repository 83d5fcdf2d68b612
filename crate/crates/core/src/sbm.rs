//! Two-community symmetric stochastic block model: parameters, graphs,
//! labelings, generation and the local statistics everything else is built on.

use std::fmt;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Model constants of `G(2n, a ln n / n, b ln n / n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SbmParams {
    n: usize,
    a: f64,
    b: f64,
}

impl SbmParams {
    /// Requires `a > b > 1` and `a ln n / n < 1`.
    pub fn new(n: usize, a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::InvalidParams(format!("non-finite rates a={a}, b={b}")));
        }
        if b <= 1.0 {
            return Err(Error::InvalidParams(format!("b must exceed 1, got {b}")));
        }
        if a <= b {
            return Err(Error::InvalidParams(format!("a must exceed b, got a={a}, b={b}")));
        }
        if n < 2 {
            return Err(Error::InvalidParams(format!("n must be at least 2, got {n}")));
        }
        let params = Self { n, a, b };
        if params.p() >= 1.0 {
            return Err(Error::InvalidParams(format!(
                "n={n} too small for a={a}: within-community probability {} >= 1",
                params.p()
            )));
        }
        Ok(params)
    }

    /// Parameterize by divergence `D` at fixed `b`: `a = (sqrt(D) + sqrt(b))^2`.
    pub fn from_divergence(n: usize, divergence: f64, b: f64) -> Result<Self> {
        if !(divergence > 0.0) {
            return Err(Error::InvalidParams(format!("D must be positive, got {divergence}")));
        }
        if !(b > 0.0) {
            return Err(Error::InvalidParams(format!("b must be positive, got {b}")));
        }
        let a = (divergence.sqrt() + b.sqrt()).powi(2);
        Self::new(n, a, b)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn num_nodes(&self) -> usize {
        2 * self.n
    }

    pub fn ln_n(&self) -> f64 {
        (self.n as f64).ln()
    }

    /// Within-community edge probability.
    pub fn p(&self) -> f64 {
        self.a * self.ln_n() / self.n as f64
    }

    /// Cross-community edge probability.
    pub fn q(&self) -> f64 {
        self.b * self.ln_n() / self.n as f64
    }

    /// Half-sum `(a + b) / 2`.
    pub fn m(&self) -> f64 {
        (self.a + self.b) / 2.0
    }

    /// Half-difference `(a - b) / 2`.
    pub fn delta(&self) -> f64 {
        (self.a - self.b) / 2.0
    }

    /// `(sqrt(a) - sqrt(b))^2`.
    pub fn divergence(&self) -> f64 {
        (self.a.sqrt() - self.b.sqrt()).powi(2)
    }
}

/// A `±1` assignment to every node.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<i8>", into = "Vec<i8>")]
pub struct Labeling(Vec<i8>);

impl Labeling {
    pub fn new(values: Vec<i8>) -> Result<Self> {
        if let Some(pos) = values.iter().position(|&s| s != 1 && s != -1) {
            return Err(Error::InvalidLabeling(format!(
                "entry {pos} is {}, expected +1 or -1",
                values[pos]
            )));
        }
        Ok(Self(values))
    }

    pub fn constant(len: usize, sign: i8) -> Self {
        assert!(sign == 1 || sign == -1);
        Self(vec![sign; len])
    }

    /// Map a real vector to labels by sign; exact zeros map to `+1`.
    pub fn from_signs(values: &[f64]) -> Self {
        Self(values.iter().map(|&x| if x < 0.0 { -1 } else { 1 }).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn get(&self, v: usize) -> i8 {
        self.0[v]
    }

    pub fn set(&mut self, v: usize, sign: i8) {
        assert!(sign == 1 || sign == -1);
        self.0[v] = sign;
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.0
    }

    pub fn negated(&self) -> Self {
        Self(self.0.iter().map(|&s| -s).collect())
    }

    pub fn count_positive(&self) -> usize {
        self.0.iter().filter(|&&s| s == 1).count()
    }
}

impl TryFrom<Vec<i8>> for Labeling {
    type Error = Error;

    fn try_from(values: Vec<i8>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<Labeling> for Vec<i8> {
    fn from(l: Labeling) -> Self {
        l.0
    }
}

/// Undirected simple graph in compressed sparse row form.
///
/// Neighbour lists are sorted ascending; every edge appears in both
/// endpoints' lists.
#[derive(Clone, PartialEq)]
pub struct Graph {
    offsets: Vec<usize>,
    targets: Vec<u32>,
    provenance: Option<Provenance>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Provenance {
    pub params: SbmParams,
    pub seed: u64,
}

impl fmt::Debug for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Graph")
            .field("num_nodes", &self.num_nodes())
            .field("num_edges", &self.num_edges())
            .field("provenance", &self.provenance)
            .finish()
    }
}

impl Graph {
    /// Build from an edge list. Self-loops and repeated edges are rejected.
    pub fn from_edges(num_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if num_nodes > u32::MAX as usize {
            return Err(Error::InvalidGraph(format!("{num_nodes} nodes is too many")));
        }
        let mut normalized = Vec::with_capacity(edges.len());
        for &(u, v) in edges {
            for x in [u, v] {
                if x >= num_nodes {
                    return Err(Error::NodeOutOfRange { index: x, num_nodes });
                }
            }
            if u == v {
                return Err(Error::InvalidGraph(format!("self-loop at node {u}")));
            }
            normalized.push((u.min(v), u.max(v)));
        }
        normalized.sort_unstable();
        if let Some(w) = normalized.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidGraph(format!(
                "duplicate edge ({}, {})",
                w[0].0, w[0].1
            )));
        }
        Ok(Self::from_unique_edges(num_nodes, &normalized))
    }

    fn from_unique_edges(num_nodes: usize, edges: &[(usize, usize)]) -> Self {
        let mut degree = vec![0usize; num_nodes];
        for &(u, v) in edges {
            degree[u] += 1;
            degree[v] += 1;
        }
        let mut offsets = Vec::with_capacity(num_nodes + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets[..num_nodes].to_vec();
        let mut targets = vec![0u32; 2 * edges.len()];
        for &(u, v) in edges {
            targets[fill[u]] = v as u32;
            fill[u] += 1;
            targets[fill[v]] = u as u32;
            fill[v] += 1;
        }
        for v in 0..num_nodes {
            targets[offsets[v]..offsets[v + 1]].sort_unstable();
        }
        Self {
            offsets,
            targets,
            provenance: None,
        }
    }

    pub fn empty(num_nodes: usize) -> Self {
        Self::from_unique_edges(num_nodes, &[])
    }

    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn num_edges(&self) -> usize {
        self.targets.len() / 2
    }

    #[inline]
    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.targets[self.offsets[v]..self.offsets[v + 1]]
    }

    #[inline]
    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn mean_degree(&self) -> f64 {
        if self.num_nodes() == 0 {
            0.0
        } else {
            self.targets.len() as f64 / self.num_nodes() as f64
        }
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&(v as u32)).is_ok()
    }

    /// Edges as `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_nodes()).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .map(|&v| v as usize)
                .filter(move |&v| v > u)
                .map(move |v| (u, v))
        })
    }

    pub fn provenance(&self) -> Option<&Provenance> {
        self.provenance.as_ref()
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = Some(provenance);
        self
    }

    fn check_node(&self, v: usize) -> Result<()> {
        if v >= self.num_nodes() {
            Err(Error::NodeOutOfRange {
                index: v,
                num_nodes: self.num_nodes(),
            })
        } else {
            Ok(())
        }
    }

    fn check_labeling(&self, labeling: &Labeling) -> Result<()> {
        if labeling.len() != self.num_nodes() {
            Err(Error::LengthMismatch {
                expected: self.num_nodes(),
                actual: labeling.len(),
            })
        } else {
            Ok(())
        }
    }
}

/// Draw labels i.i.d. uniform, then each same-label pair with probability `p`
/// and each cross-label pair with probability `q`.
///
/// Pairs are enumerated in lexicographic order inside each label block and
/// visited by geometric skips, so the cost is linear in the number of edges.
pub fn generate_sbm(params: &SbmParams, seed: u64) -> (Graph, Labeling) {
    let mut rng = rng::stream(seed);
    let num_nodes = params.num_nodes();
    let labels: Vec<i8> = (0..num_nodes)
        .map(|_| if rng.random::<bool>() { 1 } else { -1 })
        .collect();
    let pos: Vec<usize> = (0..num_nodes).filter(|&v| labels[v] == 1).collect();
    let neg: Vec<usize> = (0..num_nodes).filter(|&v| labels[v] == -1).collect();

    let mut edges = Vec::new();
    for block in [&pos, &neg] {
        let m = block.len() as u64;
        let mut row = 0u64;
        let mut row_start = 0u64;
        skip_sample(&mut rng, m * m.saturating_sub(1) / 2, params.p(), |k| {
            // Row `i` holds the m - 1 - i pairs (i, j) with j > i.
            while k >= row_start + (m - 1 - row) {
                row_start += m - 1 - row;
                row += 1;
            }
            let col = row + 1 + (k - row_start);
            edges.push((block[row as usize], block[col as usize]));
        });
    }
    let width = neg.len() as u64;
    skip_sample(&mut rng, pos.len() as u64 * width, params.q(), |k| {
        let (u, v) = (pos[(k / width) as usize], neg[(k % width) as usize]);
        edges.push((u.min(v), u.max(v)));
    });
    edges.sort_unstable();

    let graph = Graph::from_unique_edges(num_nodes, &edges).with_provenance(Provenance {
        params: *params,
        seed,
    });
    (graph, Labeling(labels))
}

/// Visit each index in `0..len` independently with probability `prob`.
fn skip_sample<R: Rng>(rng: &mut R, len: u64, prob: f64, mut visit: impl FnMut(u64)) {
    if len == 0 || prob <= 0.0 {
        return;
    }
    if prob >= 1.0 {
        (0..len).for_each(visit);
        return;
    }
    let log_fail = (-prob).ln_1p();
    let mut next = 0u64;
    loop {
        // Failures before the next success: floor(ln U / ln(1 - p)), U in (0, 1].
        let u = 1.0 - rng.random::<f64>();
        let skip = (u.ln() / log_fail).floor();
        if skip >= (len - next) as f64 {
            return;
        }
        next += skip as u64;
        visit(next);
        next += 1;
        if next >= len {
            return;
        }
    }
}

/// Same-label neighbours minus cross-label neighbours of `v`.
pub fn differential_degree(graph: &Graph, labeling: &Labeling, v: usize) -> Result<i64> {
    graph.check_node(v)?;
    graph.check_labeling(labeling)?;
    Ok(diff_degree_unchecked(graph, labeling.as_slice(), v))
}

#[inline]
pub(crate) fn diff_degree_unchecked(graph: &Graph, labels: &[i8], v: usize) -> i64 {
    let own = labels[v] as i64;
    graph
        .neighbors(v)
        .iter()
        .map(|&u| own * labels[u as usize] as i64)
        .sum()
}

/// Differential degree of every node.
pub fn differential_degrees(graph: &Graph, labeling: &Labeling) -> Result<Vec<i64>> {
    graph.check_labeling(labeling)?;
    Ok((0..graph.num_nodes())
        .map(|v| diff_degree_unchecked(graph, labeling.as_slice(), v))
        .collect())
}

/// Nodes without a strict neighbourhood majority (`d* <= 0`).
pub fn minority_count(graph: &Graph, labeling: &Labeling) -> Result<usize> {
    Ok(differential_degrees(graph, labeling)?
        .into_iter()
        .filter(|&d| d <= 0)
        .count())
}

/// Nodes with strictly more cross-label than same-label neighbours (`d* < 0`).
pub fn minority_count_strict(graph: &Graph, labeling: &Labeling) -> Result<usize> {
    Ok(differential_degrees(graph, labeling)?
        .into_iter()
        .filter(|&d| d < 0)
        .count())
}

/// Mismatches of `predicted` against `truth` under the better global sign,
/// together with that sign.
pub fn aligned_mismatches(predicted: &Labeling, truth: &Labeling) -> Result<(usize, i8)> {
    if predicted.len() != truth.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            actual: predicted.len(),
        });
    }
    let direct = predicted
        .as_slice()
        .iter()
        .zip(truth.as_slice())
        .filter(|(x, y)| x != y)
        .count();
    let flipped = truth.len() - direct;
    Ok(if flipped < direct {
        (flipped, -1)
    } else {
        (direct, 1)
    })
}

/// Fraction of mislabeled nodes, minimized over the global sign.
pub fn error_rate(predicted: &Labeling, truth: &Labeling) -> Result<f64> {
    let (mismatches, _) = aligned_mismatches(predicted, truth)?;
    Ok(if truth.is_empty() {
        0.0
    } else {
        mismatches as f64 / truth.len() as f64
    })
}

/// On-disk graph format: labels plus a lexicographically sorted `u < v` edge list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub n: Option<usize>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub seed: Option<u64>,
    pub labels: Labeling,
    pub edges: Vec<[usize; 2]>,
}

impl GraphFile {
    pub fn new(graph: &Graph, labels: &Labeling) -> Self {
        let prov = graph.provenance();
        Self {
            n: prov.map(|p| p.params.n()),
            a: prov.map(|p| p.params.a()),
            b: prov.map(|p| p.params.b()),
            seed: prov.map(|p| p.seed),
            labels: labels.clone(),
            edges: graph.edges().map(|(u, v)| [u, v]).collect(),
        }
    }

    pub fn params(&self) -> Result<Option<SbmParams>> {
        match (self.n, self.a, self.b) {
            (Some(n), Some(a), Some(b)) => SbmParams::new(n, a, b).map(Some),
            _ => Ok(None),
        }
    }

    pub fn into_parts(self) -> Result<(Graph, Labeling)> {
        let num_nodes = self.labels.len();
        if let Some(n) = self.n {
            if 2 * n != num_nodes {
                return Err(Error::LengthMismatch {
                    expected: 2 * n,
                    actual: num_nodes,
                });
            }
        }
        let edges: Vec<(usize, usize)> = self.edges.iter().map(|e| (e[0], e[1])).collect();
        let mut graph = Graph::from_edges(num_nodes, &edges)?;
        if let Some(params) = self.params()? {
            graph = graph.with_provenance(Provenance {
                params,
                seed: self.seed.unwrap_or(0),
            });
        }
        Ok((graph, self.labels))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        Ok(serde_json::from_reader(file)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(&mut out, self)?;
        std::io::Write::flush(&mut out)?;
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn labels(values: &[i8]) -> Labeling {
        Labeling::new(values.to_vec()).unwrap()
    }

    /// Triangle labeled (+1, +1, -1).
    pub fn triangle() -> (Graph, Labeling) {
        let g = Graph::from_edges(3, &[(0, 1), (0, 2), (1, 2)]).unwrap();
        (g, labels(&[1, 1, -1]))
    }

    /// Star with center 0 labeled +1 and leaves 1, 2, 3 labeled (-1, -1, +1).
    pub fn star() -> (Graph, Labeling) {
        let g = Graph::from_edges(4, &[(0, 1), (0, 2), (0, 3)]).unwrap();
        (g, labels(&[1, -1, -1, 1]))
    }

    pub fn clique(size: usize) -> Graph {
        let edges: Vec<_> = (0..size)
            .flat_map(|u| (u + 1..size).map(move |v| (u, v)))
            .collect();
        Graph::from_edges(size, &edges).unwrap()
    }
}
