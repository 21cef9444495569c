mod common;

use common::*;
use lagrg::dynamics::{
    run_orbit, step_q, step_q_tilde, step_t, EvolutionParams, Termination, Variant,
};
use lagrg::laguerre::LaguerreFactored;
use lagrg::TruncatedSeries;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn seed() -> LaguerreFactored {
    LaguerreFactored::new(1.0, 0, 0.2, vec![0.7, 0.5, 0.4, 0.3, 0.2, 0.1]).unwrap()
}

#[test]
fn q_and_t_agree_under_beta_substitution() {
    let g: TruncatedSeries = seed().to_series(64);
    for &(delta, lambda, beta) in &[(2u32, 0.25, 0.4), (3, 0.1, 0.7), (2, 0.4, 1.1)] {
        let p = EvolutionParams::new(1.3, lambda, delta, beta);
        let via_t = step_t(&g, &p, 1.0).unwrap().scale_argument(beta);
        let via_q = step_q(&g.scale_argument(beta), &p).unwrap();
        for j in 0..=40 {
            assert!(
                rel_err(via_q.coeff(j), via_t.coeff(j)) < 1e-10,
                "degree {j}"
            );
        }
    }
}

#[test]
fn theta_zero_multiplies_constants_exactly() {
    let p = EvolutionParams::new(0.0, 0.25, 2, 0.2).with_n_max(15);
    let orbit = run_orbit(&seed().with_c(1.7).unwrap(), &p, Variant::T).unwrap();
    for w in orbit.records.windows(2) {
        assert!((w[1].log_c - 2.0 * w[0].log_c).abs() <= 1e-15 * w[1].log_c.abs());
        assert!(w[1].log_y.abs() < 1e-15);
    }
}

#[test]
fn tilde_and_plain_log_derivatives_correspond() {
    let p = EvolutionParams::new(1.0, 0.25, 2, 0.3).with_n_max(12);
    let plain = run_orbit(&seed(), &p, Variant::Q).unwrap();
    let tilde = run_orbit(&seed(), &p, Variant::QTilde).unwrap();
    let d = 2f64;
    for (a, b) in plain.records.iter().zip(&tilde.records) {
        let s = d.powf(a.n as f64 * p.lambda);
        assert!(rel_err(b.phi1, s * a.phi1) < 1e-8, "n = {}", a.n);
        assert!(rel_err(b.phi2, s * s * a.phi2) < 1e-8, "n = {}", a.n);
    }
}

#[test]
fn orbits_keep_sign_rule_and_positive_constants() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..10 {
        let g = random_class_seed(&mut rng, 1.0, 2, 0.25);
        let beta = 0.5 / (g.alpha() + g.moments(1)[0]);
        let p = EvolutionParams::new(1.0, 0.25, 2, beta).with_n_max(30);
        for variant in [Variant::T, Variant::Q, Variant::QTilde] {
            let orbit = run_orbit(&g, &p, variant).unwrap();
            for r in &orbit.records {
                assert!(r.sign_violation < 1e-9);
                assert!(r.log_c.is_finite());
                assert!(r.phi2 <= 1e-10);
            }
        }
    }
}

#[test]
fn weak_coupling_decays_like_delta_to_minus_lambda() {
    let (delta, lambda) = (2u32, 0.3);
    let p = EvolutionParams::new(1.0, lambda, delta, 1e-4)
        .with_n_max(40)
        .with_tol(0.0);
    let orbit = run_orbit(&seed(), &p, Variant::Q).unwrap();
    let r = &orbit.records;
    let ratio = r[40].phi1 / r[39].phi1;
    assert!(
        (ratio - (delta as f64).powf(-lambda)).abs() < 1e-3,
        "ratio {ratio}"
    );
}

#[test]
fn q_tilde_tends_to_rescale_power() {
    let g: TruncatedSeries = seed().to_series(64);
    let p = EvolutionParams::new(1.0, 0.25, 2, 1.0);
    let far = step_q_tilde(&g, 400, &p).unwrap();
    let (plain, _) = g
        .scale_argument(0.5)
        .pow_integer(2)
        .unwrap()
        .normalized()
        .unwrap();
    for j in 0..=20 {
        assert!((far.coeff(j) - plain.coeff(j)).abs() < 1e-12 * plain.coeff(j).max(1e-300) + 1e-20);
    }
}

#[test]
fn q_tilde_moves_exponential_rate_by_shift_identity() {
    let (delta, lambda) = (3u32, 0.2);
    let p = EvolutionParams::new(2.0, lambda, delta, 0.3).with_n_max(10);
    let v0 = 0.8;
    let seed = LaguerreFactored::exponential(1.0, v0 / p.beta).unwrap();
    let orbit = run_orbit(&seed, &p, Variant::QTilde).unwrap();
    let dl = (delta as f64).powf(lambda);
    let mut v = v0;
    for r in &orbit.records[1..] {
        let t = (dl - 1.0) / dl.powi(r.n as i32);
        v /= 1.0 - t * v;
        assert!(rel_err(r.phi1, v) < 1e-12, "n = {}", r.n);
        assert!(r.phi2.abs() < 1e-12);
    }
}

#[test]
fn exponential_critical_orbit_converges() {
    let p = EvolutionParams::new(1.0, 0.25, 2, 1.0)
        .with_n_max(50)
        .with_tol(1e-10);
    let orbit = run_orbit(
        &LaguerreFactored::exponential(1.0, 1.0).unwrap(),
        &p,
        Variant::Q,
    )
    .unwrap();
    assert_eq!(orbit.termination, Termination::Converged { step: 3 });
    assert!((orbit.last().phi1 - 1.0).abs() < 1e-12);
}
