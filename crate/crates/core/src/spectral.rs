//! Leading eigenpairs of a (masked) adjacency matrix by orthogonal iteration.

use crate::sbm::Graph;

/// Outcome of [`top_two_eigenvectors`].
#[derive(Debug, Clone)]
pub struct EigenPair2 {
    /// Unit vectors, zero outside the mask.
    pub vectors: [Vec<f64>; 2],
    /// Rayleigh quotients of the returned vectors.
    pub values: [f64; 2],
    pub iterations: usize,
    pub converged: bool,
}

/// `y = A x` restricted to the nodes where `mask` is set.
fn masked_matvec(graph: &Graph, mask: &[bool], x: &[f64], y: &mut [f64]) {
    for v in 0..graph.num_nodes() {
        y[v] = if mask[v] {
            graph
                .neighbors(v)
                .iter()
                .filter(|&&u| mask[u as usize])
                .map(|&u| x[u as usize])
                .sum()
        } else {
            0.0
        };
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// Gram-Schmidt the pair in place. Returns false if either column vanishes.
fn orthonormalize(first: &mut [f64], second: &mut [f64]) -> bool {
    let n1 = norm(first);
    if !(n1 > 0.0) {
        return false;
    }
    first.iter_mut().for_each(|x| *x /= n1);
    let proj = dot(first, second);
    second.iter_mut().zip(first.iter()).for_each(|(s, f)| *s -= proj * f);
    let n2 = norm(second);
    if !(n2 > 0.0) {
        return false;
    }
    second.iter_mut().for_each(|x| *x /= n2);
    true
}

/// Top two eigenvectors (by magnitude) of the adjacency matrix of the
/// subgraph induced by `mask`.
///
/// Convergence is declared when both columns have relative residual
/// `|A q - (q'Aq) q| / |q'Aq|` at most `tol`. Otherwise the last iterate is
/// returned with `converged = false`. Negating `start[1]` negates
/// `vectors[1]` exactly.
pub fn top_two_eigenvectors(
    graph: &Graph,
    mask: &[bool],
    start: [&[f64]; 2],
    max_iter: usize,
    tol: f64,
) -> EigenPair2 {
    let n = graph.num_nodes();
    let masked = |s: &[f64]| -> Vec<f64> {
        s.iter()
            .zip(mask)
            .map(|(&x, &m)| if m { x } else { 0.0 })
            .collect()
    };
    let mut q = [masked(start[0]), masked(start[1])];
    let mut result = EigenPair2 {
        vectors: q.clone(),
        values: [0.0; 2],
        iterations: 0,
        converged: false,
    };
    if !orthonormalize_pair(&mut q) {
        return result;
    }
    result.vectors = q.clone();

    let mut z = [vec![0.0; n], vec![0.0; n]];
    for iter in 0..max_iter {
        masked_matvec(graph, mask, &q[0], &mut z[0]);
        masked_matvec(graph, mask, &q[1], &mut z[1]);
        let values = [dot(&q[0], &z[0]), dot(&q[1], &z[1])];
        result.values = values;
        result.iterations = iter;

        let residual = |k: usize| -> f64 {
            let r: f64 = z[k]
                .iter()
                .zip(&q[k])
                .map(|(zi, qi)| (zi - values[k] * qi).powi(2))
                .sum::<f64>()
                .sqrt();
            r / values[k].abs()
        };
        if values[0] != 0.0 && values[1] != 0.0 && residual(0) <= tol && residual(1) <= tol {
            result.converged = true;
            result.vectors = q;
            return result;
        }

        if !orthonormalize_pair(&mut z) {
            return result;
        }
        std::mem::swap(&mut q, &mut z);
        result.vectors.clone_from(&q);
    }
    result.iterations = max_iter;
    result
}

fn orthonormalize_pair(pair: &mut [Vec<f64>; 2]) -> bool {
    let [first, second] = pair;
    orthonormalize(first, second)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sbm::fixtures::clique;

    fn disjoint_cliques(size: usize) -> Graph {
        let mut edges = Vec::new();
        for offset in [0, size] {
            for u in 0..size {
                for v in u + 1..size {
                    edges.push((offset + u, offset + v));
                }
            }
        }
        Graph::from_edges(2 * size, &edges).unwrap()
    }

    #[test]
    fn clique_leading_eigenvalue() {
        let g = clique(10);
        let mask = vec![true; 10];
        let s0: Vec<f64> = (0..10).map(|i| 1.0 + 0.1 * i as f64).collect();
        let s1: Vec<f64> = (0..10).map(|i| if i % 2 == 0 { 1.0 } else { -0.7 }).collect();
        let res = top_two_eigenvectors(&g, &mask, [&s0, &s1], 500, 1e-10);
        assert!(res.converged);
        assert!((res.values[0] - 9.0).abs() < 1e-8);
        assert!((res.values[1] + 1.0).abs() < 1e-8);
        assert!(dot(&res.vectors[0], &res.vectors[1]).abs() < 1e-10);
    }

    #[test]
    fn separates_disjoint_cliques() {
        let g = disjoint_cliques(6);
        let mask = vec![true; 12];
        let s0: Vec<f64> = (0..12).map(|i| 0.5 + (i as f64 * 0.37).fract()).collect();
        let s1: Vec<f64> = (0..12).map(|i| (i as f64 * 0.61).fract() - 0.5).collect();
        let res = top_two_eigenvectors(&g, &mask, [&s0, &s1], 300, 1e-8);
        assert!(res.converged);
        let signs: Vec<bool> = res.vectors[1].iter().map(|&x| x > 0.0).collect();
        assert!(signs[..6].iter().all(|&s| s == signs[0]));
        assert!(signs[6..].iter().all(|&s| s != signs[0]));
    }

    #[test]
    fn mask_restricts_support() {
        let g = clique(6);
        let mask = vec![true, true, true, false, true, false];
        let s: Vec<f64> = (0..6).map(|i| 1.0 + i as f64).collect();
        let t: Vec<f64> = (0..6).map(|i| (-1.0f64).powi(i)).collect();
        let res = top_two_eigenvectors(&g, &mask, [&s, &t], 300, 1e-9);
        assert_eq!(res.vectors[0][3], 0.0);
        assert_eq!(res.vectors[1][5], 0.0);
        assert!((res.values[0] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn empty_graph_does_not_converge() {
        let g = Graph::empty(4);
        let mask = vec![true; 4];
        let res = top_two_eigenvectors(&g, &mask, [&[1.0, 1.0, 1.0, 1.0], &[1.0, -1.0, 2.0, 0.5]], 10, 1e-8);
        assert!(!res.converged);
    }
}
