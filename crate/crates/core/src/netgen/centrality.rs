//! Betweenness, PageRank and HITS hub scores on a weighted digraph.
//!
//! `w[(src, dst)]` is the weight of edge `src → dst`; self-loops are ignored.

use std::collections::VecDeque;

use crate::matrix::Matrix;

const DAMPING: f64 = 0.85;
const TOL: f64 = 1e-12;
const MAX_ITER: usize = 100_000;

fn out_neighbours(w: &Matrix<f64>) -> Vec<Vec<usize>> {
    let n = w.rows();
    (0..n).map(|s| (0..n).filter(|&d| d != s && w[(s, d)] > 0.0).collect()).collect()
}

/// Brandes' algorithm on the unweighted digraph, endpoints excluded.
pub fn betweenness(w: &Matrix<f64>) -> Vec<f64> {
    let n = w.rows();
    let adj = out_neighbours(w);
    let mut score = vec![0.0; n];
    for s in 0..n {
        let mut stack = Vec::with_capacity(n);
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut sigma = vec![0.0f64; n];
        let mut dist = vec![usize::MAX; n];
        sigma[s] = 1.0;
        dist[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            stack.push(v);
            for &x in &adj[v] {
                if dist[x] == usize::MAX {
                    dist[x] = dist[v] + 1;
                    queue.push_back(x);
                }
                if dist[x] == dist[v] + 1 {
                    sigma[x] += sigma[v];
                    preds[x].push(v);
                }
            }
        }
        let mut delta = vec![0.0; n];
        while let Some(x) = stack.pop() {
            for &v in &preds[x] {
                delta[v] += sigma[v] / sigma[x] * (1.0 + delta[x]);
            }
            if x != s {
                score[x] += delta[x];
            }
        }
    }
    score
}

/// Damping 0.85; dangling nodes spread their mass uniformly.
pub fn pagerank(w: &Matrix<f64>) -> Vec<f64> {
    let n = w.rows();
    if n == 0 {
        return Vec::new();
    }
    let out_weight: Vec<f64> = (0..n).map(|s| (0..n).filter(|&d| d != s).map(|d| w[(s, d)]).sum()).collect();
    let uniform = 1.0 / n as f64;
    let mut rank = vec![uniform; n];
    for _ in 0..MAX_ITER {
        let dangling: f64 = (0..n).filter(|&s| out_weight[s] <= 0.0).map(|s| rank[s]).sum();
        let base = (1.0 - DAMPING) * uniform + DAMPING * dangling * uniform;
        let mut next = vec![base; n];
        for s in 0..n {
            if out_weight[s] <= 0.0 {
                continue;
            }
            let share = DAMPING * rank[s] / out_weight[s];
            for d in 0..n {
                if d != s && w[(s, d)] > 0.0 {
                    next[d] += share * w[(s, d)];
                }
            }
        }
        let change: f64 = next.iter().zip(&rank).map(|(a, b)| (a - b).abs()).sum();
        rank = next;
        if change < TOL {
            break;
        }
    }
    rank
}

/// Principal eigenvector of `W·Wᵀ` (self-loops removed) from a uniform start.
pub fn hubs(w: &Matrix<f64>) -> Vec<f64> {
    let n = w.rows();
    let mut g = w.clone();
    for i in 0..n {
        g[(i, i)] = 0.0;
    }
    let mut h = vec![1.0 / n.max(1) as f64; n];
    for _ in 0..MAX_ITER {
        let auth = g.tmatvec(&h);
        let mut next = g.matvec(&auth);
        let total: f64 = next.iter().sum();
        if total <= 0.0 {
            return vec![0.0; n];
        }
        next.iter_mut().for_each(|v| *v /= total);
        let change: f64 = next.iter().zip(&h).map(|(a, b)| (a - b).abs()).sum();
        h = next;
        if change < TOL {
            break;
        }
    }
    h
}

/// Rescales to sum `total`; an all-zero vector stays zero.
pub fn normalize_to(values: &mut [f64], total: f64) {
    let sum: f64 = values.iter().sum();
    if sum > 0.0 {
        values.iter_mut().for_each(|v| *v *= total / sum);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn digraph(n: usize, edges: &[(usize, usize)]) -> Matrix<f64> {
        let mut w = Matrix::zeros(n, n);
        for &(s, d) in edges {
            w[(s, d)] = 1.0;
        }
        w
    }

    #[test]
    fn cycle_pagerank_uniform() {
        let w = digraph(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]);
        let mut pr = pagerank(&w);
        normalize_to(&mut pr, 8.0);
        for v in pr {
            assert!((v - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn star_centre_wins() {
        let w = digraph(5, &[(1, 0), (2, 0), (3, 0), (4, 0)]);
        let pr = pagerank(&w);
        assert!((1..5).all(|k| pr[0] > pr[k]));
    }

    /// All shortest paths by explicit enumeration of simple paths.
    fn brute_betweenness(w: &Matrix<f64>) -> Vec<f64> {
        let n = w.rows();
        let adj = out_neighbours(w);
        let mut paths: Vec<Vec<usize>> = Vec::new();
        fn walk(adj: &[Vec<usize>], path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            out.push(path.clone());
            let last = *path.last().unwrap();
            for &x in &adj[last] {
                if !path.contains(&x) {
                    path.push(x);
                    walk(adj, path, out);
                    path.pop();
                }
            }
        }
        for s in 0..n {
            walk(&adj, &mut vec![s], &mut paths);
        }
        let mut score = vec![0.0; n];
        for s in 0..n {
            for t in 0..n {
                if s == t {
                    continue;
                }
                let st: Vec<&Vec<usize>> = paths.iter().filter(|p| p[0] == s && *p.last().unwrap() == t).collect();
                let Some(shortest) = st.iter().map(|p| p.len()).min() else {
                    continue;
                };
                let best: Vec<&&Vec<usize>> = st.iter().filter(|p| p.len() == shortest).collect();
                for p in &best {
                    for &v in &p[1..p.len() - 1] {
                        score[v] += 1.0 / best.len() as f64;
                    }
                }
            }
        }
        score
    }

    #[test]
    fn betweenness_matches_enumeration() {
        let w = digraph(5, &[(0, 1), (0, 2), (1, 3), (2, 3), (3, 4), (4, 0), (1, 2), (2, 1), (4, 4)]);
        let fast = betweenness(&w);
        let slow = brute_betweenness(&w);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12, "{fast:?} vs {slow:?}");
        }
    }

    #[test]
    fn path_betweenness() {
        let w = digraph(3, &[(0, 1), (1, 2)]);
        assert_eq!(betweenness(&w), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn hubs_point_at_authorities() {
        // node 0 links to everyone else; nobody links back
        let w = digraph(4, &[(0, 1), (0, 2), (0, 3)]);
        let h = hubs(&w);
        assert!((h[0] - 1.0).abs() < 1e-12);
        assert!(h[1..].iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn normalisation() {
        let mut v = vec![1.0, 3.0];
        normalize_to(&mut v, 4.0);
        assert_eq!(v, vec![1.0, 3.0]);
        let mut z = vec![0.0; 3];
        normalize_to(&mut z, 6.0);
        assert_eq!(z, vec![0.0; 3]);
    }
}
