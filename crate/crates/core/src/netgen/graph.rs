//! Random undirected graph models.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::NetgenError;
use crate::matrix::Matrix;

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GraphModel {
    /// Each pair joined independently with probability `p`.
    Er { p: f64 },
    /// Ring lattice of even degree `k`, each edge rewired with probability `beta`.
    Ws { k: usize, beta: f64 },
    /// Preferential attachment, `attach` edges per new node.
    Ba { attach: usize },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Er,
    Ws,
    Ba,
}

impl ModelKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "er" => Some(Self::Er),
            "ws" => Some(Self::Ws),
            "ba" => Some(Self::Ba),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Er => "er",
            Self::Ws => "ws",
            Self::Ba => "ba",
        }
    }
}

impl GraphModel {
    /// Defaults with mean degree about 4 on `n` nodes.
    pub fn default_for(kind: ModelKind, n: usize) -> Self {
        match kind {
            ModelKind::Er => GraphModel::Er {
                p: (4.0 / (n.max(2) - 1) as f64).min(1.0),
            },
            ModelKind::Ws => GraphModel::Ws { k: 4, beta: 0.1 },
            ModelKind::Ba => GraphModel::Ba { attach: 2 },
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            GraphModel::Er { .. } => ModelKind::Er,
            GraphModel::Ws { .. } => ModelKind::Ws,
            GraphModel::Ba { .. } => ModelKind::Ba,
        }
    }
}

fn probability(name: &str, p: f64) -> Result<(), NetgenError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(NetgenError::InvalidParams(format!("{name} = {p} outside [0, 1]")))
    }
}

/// Symmetric 0/1 adjacency matrix with zero diagonal.
pub fn generate_graph(model: GraphModel, n: usize, seed: u64) -> Result<Matrix<f64>, NetgenError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adj = Matrix::zeros(n, n);
    let link = |adj: &mut Matrix<f64>, a: usize, b: usize| {
        adj[(a, b)] = 1.0;
        adj[(b, a)] = 1.0;
    };
    match model {
        GraphModel::Er { p } => {
            probability("p", p)?;
            for i in 0..n {
                for j in i + 1..n {
                    if rng.random::<f64>() < p {
                        link(&mut adj, i, j);
                    }
                }
            }
        }
        GraphModel::Ws { k, beta } => {
            probability("beta", beta)?;
            if k % 2 != 0 || k == 0 || k >= n {
                return Err(NetgenError::InvalidParams(format!(
                    "ring degree k = {k} must be even, positive and below n = {n}"
                )));
            }
            for u in 0..n {
                for d in 1..=k / 2 {
                    link(&mut adj, u, (u + d) % n);
                }
            }
            for d in 1..=k / 2 {
                for u in 0..n {
                    let v = (u + d) % n;
                    if adj[(u, v)] == 0.0 || rng.random::<f64>() >= beta {
                        continue;
                    }
                    let degree = (0..n).filter(|&w| adj[(u, w)] != 0.0).count();
                    if degree >= n - 1 {
                        continue;
                    }
                    let w = loop {
                        let w = rng.random_range(0..n);
                        if w != u && adj[(u, w)] == 0.0 {
                            break w;
                        }
                    };
                    adj[(u, v)] = 0.0;
                    adj[(v, u)] = 0.0;
                    link(&mut adj, u, w);
                }
            }
        }
        GraphModel::Ba { attach } => {
            if attach == 0 || attach >= n {
                return Err(NetgenError::InvalidParams(format!(
                    "attachment count {attach} must lie in 1..{n}"
                )));
            }
            // one entry per edge endpoint, so sampling is degree-proportional
            let mut ends = Vec::new();
            for i in 0..=attach {
                for j in i + 1..=attach {
                    link(&mut adj, i, j);
                    ends.push(i);
                    ends.push(j);
                }
            }
            for new in attach + 1..n {
                let mut targets: Vec<usize> = Vec::with_capacity(attach);
                while targets.len() < attach {
                    let t = *ends.choose(&mut rng).expect("seed graph has edges");
                    if !targets.contains(&t) {
                        targets.push(t);
                    }
                }
                for t in targets {
                    link(&mut adj, new, t);
                    ends.push(new);
                    ends.push(t);
                }
            }
        }
    }
    Ok(adj)
}

pub fn edge_count(adj: &Matrix<f64>) -> usize {
    let n = adj.rows();
    (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).filter(|&(i, j)| adj[(i, j)] != 0.0).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simple(adj: &Matrix<f64>) -> bool {
        let n = adj.rows();
        (0..n).all(|i| adj[(i, i)] == 0.0 && (0..n).all(|j| adj[(i, j)] == adj[(j, i)]))
    }

    #[test]
    fn er_extremes() {
        let full = generate_graph(GraphModel::Er { p: 1.0 }, 6, 1).unwrap();
        assert_eq!(edge_count(&full), 15);
        let empty = generate_graph(GraphModel::Er { p: 0.0 }, 6, 1).unwrap();
        assert_eq!(edge_count(&empty), 0);
        assert!(generate_graph(GraphModel::Er { p: 1.5 }, 6, 1).is_err());
    }

    #[test]
    fn ws_without_rewiring_is_ring() {
        let adj = generate_graph(GraphModel::Ws { k: 4, beta: 0.0 }, 10, 3).unwrap();
        for i in 0..10 {
            for j in 0..10 {
                let d = (i as i64 - j as i64).rem_euclid(10).min((j as i64 - i as i64).rem_euclid(10));
                assert_eq!(adj[(i, j)] == 1.0, d == 1 || d == 2, "{i} {j}");
            }
        }
        assert!(generate_graph(GraphModel::Ws { k: 3, beta: 0.1 }, 10, 3).is_err());
        assert!(generate_graph(GraphModel::Ws { k: 10, beta: 0.1 }, 10, 3).is_err());
    }

    #[test]
    fn ws_rewiring_keeps_edge_count() {
        let adj = generate_graph(GraphModel::Ws { k: 4, beta: 0.3 }, 30, 9).unwrap();
        assert_eq!(edge_count(&adj), 60);
        assert!(simple(&adj));
    }

    #[test]
    fn ba_edge_count() {
        let adj = generate_graph(GraphModel::Ba { attach: 2 }, 20, 5).unwrap();
        assert_eq!(edge_count(&adj), 37);
        assert!(simple(&adj));
    }

    #[test]
    fn deterministic_per_seed() {
        for model in [
            GraphModel::Er { p: 0.3 },
            GraphModel::Ws { k: 4, beta: 0.2 },
            GraphModel::Ba { attach: 2 },
        ] {
            let a = generate_graph(model, 20, 42).unwrap();
            assert_eq!(a, generate_graph(model, 20, 42).unwrap());
            assert!(simple(&a));
        }
    }
}
