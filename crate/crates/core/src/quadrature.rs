//! Generalized Gauss–Laguerre rules for the weight `x^a e^{-x}` on `[0, ∞)`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};
use statrs::function::gamma::ln_gamma;

/// Nodes and weights of an `n`-point rule.
#[derive(Debug, Clone)]
pub struct GaussLaguerre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Rescales the orthonormal recurrence when values get this large.
const RESCALE: f64 = 1e150;

type RuleCache = HashMap<(usize, u64), Arc<GaussLaguerre>>;

impl GaussLaguerre {
    /// Golub–Welsch nodes polished by Newton steps; weights from Christoffel numbers.
    pub fn new(n: usize, a: f64) -> Self {
        assert!(n >= 1 && a > -1.0);
        let mut jac = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            jac[(i, i)] = 2.0 * i as f64 + 1.0 + a;
            if i + 1 < n {
                let b = ((i + 1) as f64 * (i as f64 + 1.0 + a)).sqrt();
                jac[(i, i + 1)] = b;
                jac[(i + 1, i)] = b;
            }
        }
        let mut nodes: Vec<f64> = SymmetricEigen::new(jac)
            .eigenvalues
            .iter()
            .copied()
            .collect();
        nodes.sort_by(f64::total_cmp);
        let ln_mass = ln_gamma(a + 1.0);
        let mut weights = Vec::with_capacity(n);
        for x in nodes.iter_mut() {
            for _ in 0..3 {
                let (p, dp) = monic_laguerre(n, a, *x);
                if dp == 0.0 || !dp.is_finite() {
                    break;
                }
                let step = p / dp;
                *x -= step;
                if step.abs() <= 1e-16 * x.abs() {
                    break;
                }
            }
            weights.push((-ln_christoffel_sum(n, a, *x, ln_mass)).exp());
        }
        GaussLaguerre { nodes, weights }
    }

    /// Shared instance from a process-wide cache.
    pub fn cached(n: usize, a: f64) -> Arc<GaussLaguerre> {
        static CACHE: OnceLock<Mutex<RuleCache>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let key = (n, a.to_bits());
        if let Some(rule) = cache.lock().expect("quadrature cache poisoned").get(&key) {
            return Arc::clone(rule);
        }
        let rule = Arc::new(GaussLaguerre::new(n, a));
        cache
            .lock()
            .expect("quadrature cache poisoned")
            .entry(key)
            .or_insert(rule)
            .clone()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Ratio-safe values `(p_n(x), p_n'(x))` of a scaled monic Laguerre polynomial.
fn monic_laguerre(n: usize, a: f64, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (0.0, 1.0);
    let (mut d0, mut d1) = (0.0, 0.0);
    for j in 0..n {
        let aj = 2.0 * j as f64 + 1.0 + a;
        let bj = j as f64 * (j as f64 + a);
        let p2 = (x - aj) * p1 - bj * p0;
        let d2 = p1 + (x - aj) * d1 - bj * d0;
        p0 = p1;
        p1 = p2;
        d0 = d1;
        d1 = d2;
        let m = p1.abs().max(d1.abs());
        if m > RESCALE {
            p0 /= m;
            p1 /= m;
            d0 /= m;
            d1 /= m;
        }
    }
    (p1, d1)
}

/// `ln Σ_{j<n} q_j(x)^2` for the orthonormal polynomials of the weight.
fn ln_christoffel_sum(n: usize, a: f64, x: f64, ln_mass: f64) -> f64 {
    let mut log_scale = -0.5 * ln_mass;
    let (mut q_prev, mut q) = (0.0, 1.0);
    let mut sum = 1.0;
    for j in 0..n - 1 {
        let aj = 2.0 * j as f64 + 1.0 + a;
        let bj = (j as f64 * (j as f64 + a)).sqrt();
        let bn = ((j + 1) as f64 * (j as f64 + 1.0 + a)).sqrt();
        let q_next = ((x - aj) * q - bj * q_prev) / bn;
        q_prev = q;
        q = q_next;
        sum += q * q;
        let m = q.abs().max(q_prev.abs());
        if m > RESCALE {
            q /= m;
            q_prev /= m;
            sum /= m * m;
            log_scale += m.ln();
        }
    }
    sum.ln() + 2.0 * log_scale
}
