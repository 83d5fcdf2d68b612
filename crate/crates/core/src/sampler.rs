//! Label-query sampling: rank nodes by differential degree under the initial
//! labeling, query the lowest-ranked ones, and overwrite them with the
//! answers.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::init::majority_refine;
use crate::sbm::{differential_degrees, Graph, Labeling, SbmParams};
use crate::theory::sample_budget;

/// Holds the hidden labels and counts distinct queried nodes.
#[derive(Debug, Clone)]
pub struct Oracle {
    truth: Labeling,
    queried: Vec<bool>,
    count: usize,
}

impl Oracle {
    pub fn new(truth: Labeling) -> Self {
        let queried = vec![false; truth.len()];
        Self {
            truth,
            queried,
            count: 0,
        }
    }

    pub fn query(&mut self, v: usize) -> Result<i8> {
        if v >= self.truth.len() {
            return Err(Error::NodeOutOfRange {
                index: v,
                num_nodes: self.truth.len(),
            });
        }
        if !self.queried[v] {
            self.queried[v] = true;
            self.count += 1;
        }
        Ok(self.truth.get(v))
    }

    /// Distinct nodes queried so far.
    pub fn queries(&self) -> usize {
        self.count
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleReport {
    /// Queried nodes in rank order.
    pub sampled: Vec<usize>,
    pub budget_requested: usize,
    pub budget_used: usize,
    /// Whether the initial labeling was negated to match the oracle.
    pub flipped: bool,
    /// Largest differential degree (under the initial labeling) among sampled nodes.
    pub max_sampled_differential_degree: Option<i64>,
    pub labeling: Labeling,
}

/// Node ids sorted by `(d*, id)` ascending under `tau_prime`.
pub fn rank_by_differential_degree(graph: &Graph, tau_prime: &Labeling) -> Result<Vec<usize>> {
    let d = differential_degrees(graph, tau_prime)?;
    let mut order: Vec<usize> = (0..graph.num_nodes()).collect();
    order.sort_by_key(|&v| (d[v], v));
    Ok(order)
}

/// Budget from the sufficient condition, as a node count.
pub fn auto_budget(params: &SbmParams) -> usize {
    sample_budget(params).resolve(params.num_nodes())
}

/// Query the `budget` lowest-ranked nodes and return the corrected labeling.
///
/// The initial labeling is known only up to a global sign. Before the answers
/// are written in, it is oriented so that the final labeling cuts fewer edges
/// between sampled and unsampled nodes; ties keep `tau_prime` as given.
pub fn run_algorithm1(
    graph: &Graph,
    tau_prime: &Labeling,
    budget: usize,
    oracle: &mut Oracle,
) -> Result<SampleReport> {
    run_sampling(graph, tau_prime, budget, oracle, false)
}

/// [`run_algorithm1`] followed by one majority pass over the unsampled nodes.
pub fn run_algorithm1_refined(
    graph: &Graph,
    tau_prime: &Labeling,
    budget: usize,
    oracle: &mut Oracle,
) -> Result<SampleReport> {
    run_sampling(graph, tau_prime, budget, oracle, true)
}

fn run_sampling(
    graph: &Graph,
    tau_prime: &Labeling,
    budget: usize,
    oracle: &mut Oracle,
    refine: bool,
) -> Result<SampleReport> {
    let num_nodes = graph.num_nodes();
    if budget > num_nodes {
        return Err(Error::InvalidArgument(format!(
            "budget {budget} exceeds node count {num_nodes}"
        )));
    }
    if oracle.truth.len() != num_nodes {
        return Err(Error::LengthMismatch {
            expected: num_nodes,
            actual: oracle.truth.len(),
        });
    }
    let d = differential_degrees(graph, tau_prime)?;
    let mut order: Vec<usize> = (0..num_nodes).collect();
    order.sort_by_key(|&v| (d[v], v));
    let sampled: Vec<usize> = order[..budget].to_vec();
    let answers: Vec<i8> = sampled
        .iter()
        .map(|&v| oracle.query(v))
        .collect::<Result<_>>()?;

    let mut is_sampled = vec![false; num_nodes];
    sampled.iter().for_each(|&v| is_sampled[v] = true);
    let mut agreement = 0i64;
    for (&v, &answer) in sampled.iter().zip(&answers) {
        let unsampled_sum: i64 = graph
            .neighbors(v)
            .iter()
            .map(|&u| u as usize)
            .filter(|&u| !is_sampled[u])
            .map(|u| tau_prime.get(u) as i64)
            .sum();
        agreement += answer as i64 * unsampled_sum;
    }
    let flipped = agreement < 0;
    let mut labeling = if flipped {
        tau_prime.negated()
    } else {
        tau_prime.clone()
    };
    for (&v, &answer) in sampled.iter().zip(&answers) {
        labeling.set(v, answer);
    }
    if refine {
        let refined = majority_refine(graph, &labeling)?;
        for v in (0..num_nodes).filter(|&v| !is_sampled[v]) {
            labeling.set(v, refined.get(v));
        }
    }

    Ok(SampleReport {
        max_sampled_differential_degree: sampled.iter().map(|&v| d[v]).max(),
        sampled,
        budget_requested: budget,
        budget_used: oracle.queries(),
        flipped,
        labeling,
    })
}
