#![allow(dead_code)]

use lagrg::laguerre::LaguerreFactored;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// `Δθ p` for a polynomial given by its coefficients.
pub fn poly_delta_theta(c: &[f64], theta: f64) -> Vec<f64> {
    let mut out = vec![0.0; c.len()];
    for k in 1..c.len() {
        out[k - 1] = k as f64 * (theta + (k - 1) as f64) * c[k];
    }
    out
}

/// `exp(tΔθ) p` for a polynomial by the terminating power series in `t`.
pub fn poly_heat(c: &[f64], theta: f64, t: f64) -> Vec<f64> {
    let mut out = c.to_vec();
    let mut term = c.to_vec();
    for m in 1..c.len() {
        term = poly_delta_theta(&term, theta);
        let f = t / m as f64;
        for (o, x) in out.iter_mut().zip(term.iter_mut()) {
            *x *= f;
            *o += *x;
        }
    }
    out
}

pub fn poly_eval(c: &[f64], z: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &x| acc * z + x)
}

/// Coefficients of `∏ (1 + γ_j z)`.
pub fn poly_from_roots(gammas: &[f64]) -> Vec<f64> {
    let mut c = vec![1.0];
    for &g in gammas {
        let mut next = vec![0.0; c.len() + 1];
        for (j, &x) in c.iter().enumerate() {
            next[j] += x;
            next[j + 1] += g * x;
        }
        c = next;
    }
    c
}

/// Log-derivatives `φ^(k)`, `k = 1..=kmax`, of `C e^{αz} ∏(1 + γ_j z)` at 0.
pub fn product_log_derivs(alpha: f64, gammas: &[f64], kmax: usize) -> Vec<f64> {
    (1..=kmax)
        .map(|k| {
            let mut fact = 1.0;
            for j in 1..k {
                fact *= j as f64;
            }
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            let s: f64 = gammas.iter().map(|g| g.powi(k as i32)).sum();
            sign * fact * s + if k == 1 { alpha } else { 0.0 }
        })
        .collect()
}

pub fn random_gammas(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Random normalized member of `L(λ)`.
pub fn random_class_seed(
    rng: &mut ChaCha8Rng,
    theta: f64,
    delta: u32,
    lambda: f64,
) -> LaguerreFactored {
    let n = rng.random_range(6..14);
    let mut gammas = random_gammas(rng, n, 0.2, 1.0);
    let alpha = if rng.random_bool(0.5) {
        rng.random_range(0.0..0.5)
    } else {
        0.0
    };
    // more zeros of comparable size shrink m_2/(α + m_1)^2 until the seed qualifies
    loop {
        let seed = LaguerreFactored::new(1.0, 0, alpha, gammas.clone()).unwrap();
        if seed.in_class_lambda(theta, delta, lambda).unwrap().member {
            return seed;
        }
        gammas.push(rng.random_range(0.2..1.0));
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
