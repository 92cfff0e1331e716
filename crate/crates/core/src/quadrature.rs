//! Gauss–Hermite rules for expectations under a standard Gaussian.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::linalg::{eigh, SymMatrix};

pub const DEFAULT_ORDER: usize = 40;

#[derive(Clone, Debug)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Rules are built once per order and shared.
    pub fn shared(order: usize) -> Arc<GaussHermite> {
        static RULES: OnceLock<Mutex<HashMap<usize, Arc<GaussHermite>>>> = OnceLock::new();
        let mut rules = RULES.get_or_init(Default::default).lock().unwrap_or_else(|e| e.into_inner());
        rules.entry(order).or_insert_with(|| Arc::new(GaussHermite::new(order))).clone()
    }

    /// Golub–Welsch on the Jacobi matrix of the probabilists' Hermite
    /// polynomials; weights sum to one.
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "quadrature order must be positive");
        let mut j = vec![0.0; order * order];
        for i in 1..order {
            let b = (i as f64).sqrt();
            j[i * order + i - 1] = b;
            j[(i - 1) * order + i] = b;
        }
        let e = eigh(&SymMatrix::new(order, j).expect("tridiagonal is symmetric"));
        let mut weights: Vec<f64> = (0..order).map(|c| e.vectors[c].powi(2)).collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        // symmetrise to remove rounding asymmetry
        let mut nodes = e.values;
        for i in 0..order / 2 {
            let m = 0.5 * (nodes[order - 1 - i] - nodes[i]);
            nodes[i] = -m;
            nodes[order - 1 - i] = m;
            let w = 0.5 * (weights[i] + weights[order - 1 - i]);
            weights[i] = w;
            weights[order - 1 - i] = w;
        }
        if order % 2 == 1 {
            nodes[order / 2] = 0.0;
        }
        GaussHermite { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn expect<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    /// log E exp(g(z)), stabilised.
    pub fn log_expect_exp<F: Fn(f64) -> f64>(&self, g: F) -> f64 {
        let vals: Vec<f64> = self.nodes.iter().map(|&x| g(x)).collect();
        let m = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        m + vals.iter().zip(&self.weights).map(|(v, w)| w * (v - m).exp()).sum::<f64>().ln()
    }
}
