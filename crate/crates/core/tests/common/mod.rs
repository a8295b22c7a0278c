#![allow(dead_code)]

use latentgraph::graph::Graph;
use latentgraph::rng::{rng_from_seed, Rng};
use ndarray::Array2;
use rand::Rng as _;

/// Connected weighted graph: a random spanning path plus each other pair
/// with probability `p`. Weights are drawn from [0.1, 2).
pub fn random_connected_graph(rng: &mut Rng, n: usize, p: f64) -> Graph {
    let mut order: Vec<usize> = (0..n).collect();
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), rng);
    let mut a = Array2::<f64>::zeros((n, n));
    for w in order.windows(2) {
        let x = rng.random_range(0.1..2.0);
        a[[w[0], w[1]]] = x;
        a[[w[1], w[0]]] = x;
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if a[[i, j]] == 0.0 && rng.random::<f64>() < p {
                let x = rng.random_range(0.1..2.0);
                a[[i, j]] = x;
                a[[j, i]] = x;
            }
        }
    }
    Graph::from_adjacency(a).unwrap()
}

pub fn random_matrix(rng: &mut Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
}

pub fn seeded(seed: u64) -> Rng {
    rng_from_seed(seed)
}

/// Largest absolute entry of `a - b`.
pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
