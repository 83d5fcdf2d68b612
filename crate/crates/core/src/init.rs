//! Weakly consistent initial clustering.
//!
//! Pipeline: trim abnormally high-degree nodes, bisect the remaining graph
//! by the sign of the second adjacency eigenvector, then run a replica step
//! in which each node is relabeled by its neighbourhood majority against a
//! clustering computed without it. Trimmed nodes are assigned last by
//! majority vote, and an optional synchronous majority pass follows.
//!
//! Tie rules: a zero neighbourhood sum keeps the current label; a zero
//! eigenvector entry maps to `+1`.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, purpose};
use crate::sbm::{Graph, Labeling};
use crate::spectral::top_two_eigenvectors;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitConfig {
    /// Number of replica parts; 1 disables the replica step.
    pub replicas: usize,
    pub max_iter: usize,
    pub tol: f64,
    /// Nodes with degree above `trim_multiplier * M ln n` are trimmed.
    pub trim_multiplier: f64,
    /// Finish with one [`majority_refine`] pass.
    pub refine: bool,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            replicas: 5,
            max_iter: 300,
            tol: 1e-8,
            trim_multiplier: 20.0,
            refine: false,
        }
    }
}

impl InitConfig {
    pub fn validate(&self, num_nodes: usize) -> Result<()> {
        if self.replicas == 0 || self.replicas > num_nodes.max(1) {
            return Err(Error::InvalidArgument(format!(
                "replicas must be in 1..={num_nodes}, got {}",
                self.replicas
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tolerance must be positive, got {}", self.tol)));
        }
        if !(self.trim_multiplier > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "trim multiplier must be positive, got {}",
                self.trim_multiplier
            )));
        }
        Ok(())
    }
}

/// Starting vectors for orthogonal iteration.
///
/// `leading` is strictly positive; the sign pattern of `bisecting` fixes the
/// orientation of the result, and negating it negates the output labeling.
#[derive(Debug, Clone, PartialEq)]
pub struct StartVectors {
    pub leading: Vec<f64>,
    pub bisecting: Vec<f64>,
}

impl StartVectors {
    pub fn random<R: Rng>(num_nodes: usize, rng: &mut R) -> Self {
        let leading = (0..num_nodes).map(|_| rng.random_range(0.5..1.5)).collect();
        let bisecting = (0..num_nodes).map(|_| rng.random_range(-1.0..1.0)).collect();
        Self { leading, bisecting }
    }

    pub fn with_bisecting_negated(&self) -> Self {
        Self {
            leading: self.leading.clone(),
            bisecting: self.bisecting.iter().map(|x| -x).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicaStats {
    pub held_out: usize,
    /// Fraction of shared nodes on which the replica clustering agrees with
    /// the full bisection after sign alignment.
    pub overlap: f64,
    pub flipped: bool,
    pub converged: bool,
    /// Held-out nodes whose label differs from the full bisection.
    pub relabeled: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitReport {
    pub labeling: Labeling,
    pub trimmed: Vec<usize>,
    pub replicas: Vec<ReplicaStats>,
    pub eigenvalues: [f64; 2],
    pub converged: bool,
}

/// On-disk form of an initial labeling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterFile {
    pub tau_prime: Labeling,
    pub converged: bool,
    pub trimmed: Vec<usize>,
}

impl From<&InitReport> for ClusterFile {
    fn from(report: &InitReport) -> Self {
        Self {
            tau_prime: report.labeling.clone(),
            converged: report.converged,
            trimmed: report.trimmed.clone(),
        }
    }
}

/// Initial labeling with start vectors and replica partition drawn from `seed`.
pub fn initial_labeling(graph: &Graph, config: &InitConfig, seed: u64) -> Result<InitReport> {
    let mut rng = rng::stream(rng::derive_seed(seed, &[purpose::INIT]));
    let start = StartVectors::random(graph.num_nodes(), &mut rng);
    initial_labeling_with_start(graph, config, &start, seed)
}

/// As [`initial_labeling`] but with explicit start vectors; `seed` only
/// drives the replica partition.
pub fn initial_labeling_with_start(
    graph: &Graph,
    config: &InitConfig,
    start: &StartVectors,
    seed: u64,
) -> Result<InitReport> {
    let num_nodes = graph.num_nodes();
    config.validate(num_nodes)?;
    if start.leading.len() != num_nodes || start.bisecting.len() != num_nodes {
        return Err(Error::LengthMismatch {
            expected: num_nodes,
            actual: start.leading.len().min(start.bisecting.len()),
        });
    }

    // M ln n estimated as half the mean degree, so no model parameters are needed.
    let trim_threshold = config.trim_multiplier * graph.mean_degree() / 2.0;
    let keep: Vec<bool> = (0..num_nodes)
        .map(|v| graph.degree(v) as f64 <= trim_threshold)
        .collect();
    let trimmed: Vec<usize> = (0..num_nodes).filter(|&v| !keep[v]).collect();

    let bisect = |mask: &[bool]| {
        let eig = top_two_eigenvectors(
            graph,
            mask,
            [&start.leading, &start.bisecting],
            config.max_iter,
            config.tol,
        );
        // Exact zeros (nodes cut off by the mask) follow the start vector.
        let signs: Vec<f64> = eig.vectors[1]
            .iter()
            .zip(&start.bisecting)
            .map(|(&x, &s)| if x == 0.0 { s } else { x })
            .collect();
        (Labeling::from_signs(&signs), eig)
    };

    let (base, base_eig) = bisect(&keep);
    let mut converged = base_eig.converged;
    let mut labels: Vec<i8> = base.as_slice().to_vec();
    let mut replicas = Vec::new();

    if config.replicas > 1 {
        let mut part_rng = rng::stream(rng::derive_seed(seed, &[purpose::INIT, 1]));
        let mut order: Vec<usize> = (0..num_nodes).filter(|&v| keep[v]).collect();
        order.shuffle(&mut part_rng);
        let mut part_of = vec![usize::MAX; num_nodes];
        for (pos, &v) in order.iter().enumerate() {
            part_of[v] = pos % config.replicas;
        }

        for part in 0..config.replicas {
            let mask: Vec<bool> = (0..num_nodes).map(|v| keep[v] && part_of[v] != part).collect();
            let (mut replica, eig) = bisect(&mask);
            converged &= eig.converged;

            let shared = mask.iter().filter(|&&m| m).count();
            let agree = (0..num_nodes)
                .filter(|&v| mask[v] && replica.get(v) == base.get(v))
                .count();
            let flipped = 2 * agree < shared;
            if flipped {
                replica = replica.negated();
            }

            let mut relabeled = 0;
            let mut held_out = 0;
            for v in (0..num_nodes).filter(|&v| keep[v] && part_of[v] == part) {
                held_out += 1;
                let vote: i64 = graph
                    .neighbors(v)
                    .iter()
                    .map(|&u| u as usize)
                    .filter(|&u| mask[u])
                    .map(|u| replica.get(u) as i64)
                    .sum();
                labels[v] = match vote.signum() {
                    0 => base.get(v),
                    s => s as i8,
                };
                relabeled += usize::from(labels[v] != base.get(v));
            }
            replicas.push(ReplicaStats {
                held_out,
                overlap: if shared == 0 {
                    0.0
                } else {
                    agree.max(shared - agree) as f64 / shared as f64
                },
                flipped,
                converged: eig.converged,
                relabeled,
            });
        }
    }

    for &v in &trimmed {
        let vote: i64 = graph
            .neighbors(v)
            .iter()
            .map(|&u| u as usize)
            .filter(|&u| keep[u])
            .map(|u| labels[u] as i64)
            .sum();
        // Ties fall back to the start vector so that orientation flips carry through.
        labels[v] = match vote.signum() {
            0 if start.bisecting[v] < 0.0 => -1,
            0 => 1,
            s => s as i8,
        };
    }

    let mut labeling = Labeling::new(labels)?;
    if config.refine {
        labeling = majority_refine(graph, &labeling)?;
    }
    Ok(InitReport {
        labeling,
        trimmed,
        replicas,
        eigenvalues: base_eig.values,
        converged,
    })
}

/// One synchronous pass assigning every node the sign of its neighbourhood
/// sum under `labeling`; zero sums keep the current label.
pub fn majority_refine(graph: &Graph, labeling: &Labeling) -> Result<Labeling> {
    if labeling.len() != graph.num_nodes() {
        return Err(Error::LengthMismatch {
            expected: graph.num_nodes(),
            actual: labeling.len(),
        });
    }
    let labels = labeling.as_slice();
    let refined = (0..graph.num_nodes())
        .map(|v| {
            let vote: i64 = graph.neighbors(v).iter().map(|&u| labels[u as usize] as i64).sum();
            match vote.signum() {
                0 => labels[v],
                s => s as i8,
            }
        })
        .collect();
    Labeling::new(refined)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sbm::fixtures::{clique, labels, star};
    use crate::sbm::{error_rate, generate_sbm, minority_count, SbmParams};

    fn two_cliques(size: usize) -> (Graph, Labeling) {
        let mut edges = Vec::new();
        for offset in [0, size] {
            for u in 0..size {
                for v in u + 1..size {
                    edges.push((offset + u, offset + v));
                }
            }
        }
        let truth: Vec<i8> = (0..2 * size).map(|v| if v < size { 1 } else { -1 }).collect();
        (
            Graph::from_edges(2 * size, &edges).unwrap(),
            Labeling::new(truth).unwrap(),
        )
    }

    #[test]
    fn separable_cliques_are_recovered() {
        let (g, truth) = two_cliques(50);
        for seed in 0..5 {
            let report = initial_labeling(&g, &InitConfig::default(), seed).unwrap();
            assert!(report.trimmed.is_empty());
            assert_eq!(error_rate(&report.labeling, &truth).unwrap(), 0.0);
        }
    }

    #[test]
    fn empty_graph_is_deterministic() {
        let g = Graph::empty(20);
        let r1 = initial_labeling(&g, &InitConfig::default(), 3).unwrap();
        let r2 = initial_labeling(&g, &InitConfig::default(), 3).unwrap();
        assert!(!r1.converged);
        assert_eq!(r1.labeling, r2.labeling);
        assert_eq!(r1.labeling.len(), 20);
    }

    #[test]
    fn rejects_bad_config() {
        let g = clique(4);
        let bad = InitConfig { replicas: 0, ..InitConfig::default() };
        assert!(initial_labeling(&g, &bad, 0).is_err());
        let bad = InitConfig { replicas: 5, ..InitConfig::default() };
        assert!(initial_labeling(&g, &bad, 0).is_err());
        let bad = InitConfig { tol: 0.0, ..InitConfig::default() };
        assert!(initial_labeling(&g, &bad, 0).is_err());
    }

    #[test]
    fn refine_fixed_point_and_flips() {
        let g = clique(6);
        let all_plus = Labeling::constant(6, 1);
        assert_eq!(majority_refine(&g, &all_plus).unwrap(), all_plus);

        let mut one_off = all_plus.clone();
        one_off.set(3, -1);
        assert_eq!(majority_refine(&g, &one_off).unwrap(), all_plus);

        let (s, sl) = star();
        // center sees (-1, -1, +1) -> -1; each leaf sees the center's +1.
        assert_eq!(majority_refine(&s, &sl).unwrap(), labels(&[-1, 1, 1, 1]));
    }

    #[test]
    fn trims_only_high_degree_hubs() {
        // A hub attached to every node of a sparse ring.
        let n = 200;
        let mut edges: Vec<(usize, usize)> = (0..n - 1).map(|v| (v, (v + 1) % (n - 1))).collect();
        edges.extend((0..n - 1).map(|v| (v, n - 1)));
        let g = Graph::from_edges(n, &edges).unwrap();
        let config = InitConfig { trim_multiplier: 4.0, ..InitConfig::default() };
        let report = initial_labeling(&g, &config, 1).unwrap();
        assert_eq!(report.trimmed, vec![n - 1]);
        let threshold = config.trim_multiplier * g.mean_degree() / 2.0;
        assert!(report.trimmed.iter().all(|&v| g.degree(v) as f64 > threshold));
    }

    #[test]
    fn negated_start_negates_labeling() {
        let params = SbmParams::new(300, 4.5, 2.0).unwrap();
        let (g, _) = generate_sbm(&params, 17);
        let mut rng = rng::stream(99);
        let start = StartVectors::random(g.num_nodes(), &mut rng);
        for refine in [false, true] {
            let config = InitConfig { refine, trim_multiplier: 1.5, ..InitConfig::default() };
            let r1 = initial_labeling_with_start(&g, &config, &start, 5).unwrap();
            let r2 = initial_labeling_with_start(&g, &config, &start.with_bisecting_negated(), 5).unwrap();
            assert!(!r1.trimmed.is_empty());
            assert_eq!(r2.labeling, r1.labeling.negated());
        }
    }

    #[test]
    fn sbm_initializer_is_accurate() {
        let params = SbmParams::new(1000, 4.5, 2.0).unwrap();
        let (g, truth) = generate_sbm(&params, 4);
        let report = initial_labeling(&g, &InitConfig::default(), 4).unwrap();
        assert!(report.converged);
        assert_eq!(report.replicas.len(), 5);
        assert!(error_rate(&report.labeling, &truth).unwrap() < 0.1);
    }

    #[test]
    fn refine_does_not_add_minorities_when_they_are_isolated() {
        // Scan SBM instances for labelings whose minority nodes are pairwise
        // non-adjacent and check the refinement invariant there.
        let params = SbmParams::new(300, 6.0, 2.0).unwrap();
        let mut checked = 0;
        for seed in 0..20 {
            let (g, _) = generate_sbm(&params, seed);
            let tau = initial_labeling(&g, &InitConfig::default(), seed).unwrap().labeling;
            let d = crate::sbm::differential_degrees(&g, &tau).unwrap();
            let minority: Vec<usize> = (0..g.num_nodes()).filter(|&v| d[v] <= 0).collect();
            let isolated = minority
                .iter()
                .all(|&u| minority.iter().all(|&v| u == v || !g.has_edge(u, v)));
            if !isolated {
                continue;
            }
            checked += 1;
            let refined = majority_refine(&g, &tau).unwrap();
            assert!(minority_count(&g, &refined).unwrap() <= minority.len());
        }
        assert!(checked > 0);
    }
}
