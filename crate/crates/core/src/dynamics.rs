//! The renormalization maps `T`, `Q`, `Q̃` and orbit runners.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::laguerre::LaguerreFactored;
use crate::precision::{DoubleDouble, Precision, Real};
use crate::semigroup::heat_apply_raw;
use crate::series::{TruncatedSeries, DEFAULT_K};

/// Relative tail above which a step is rejected.
pub const TAIL_THRESHOLD: f64 = 1e-6;

/// Number of log-derivatives inspected for the sign rule.
pub const SIGN_RULE_DEPTH: usize = 8;

fn default_k() -> usize {
    DEFAULT_K
}

fn default_n_max() -> usize {
    60
}

/// Parameters shared by every step of an orbit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionParams {
    pub theta: f64,
    pub lambda: f64,
    pub delta: u32,
    /// Coupling; the time parameter is `τ = β(δ^λ - 1)`.
    pub beta: f64,
    #[serde(rename = "K", default = "default_k")]
    pub k: usize,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    /// Convergence tolerance; `<= 0` disables early stopping.
    #[serde(default)]
    pub tol: f64,
}

impl EvolutionParams {
    pub fn new(theta: f64, lambda: f64, delta: u32, beta: f64) -> Self {
        EvolutionParams {
            theta,
            lambda,
            delta,
            beta,
            k: DEFAULT_K,
            n_max: default_n_max(),
            tol: 0.0,
        }
    }

    /// Sets `β` from `τ`.
    pub fn with_tau(mut self, tau: f64) -> Self {
        self.beta = tau / self.delta_lambda_minus_one();
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn with_n_max(mut self, n_max: usize) -> Self {
        self.n_max = n_max;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn delta_lambda_minus_one(&self) -> f64 {
        (self.delta as f64).powf(self.lambda) - 1.0
    }

    pub fn tau(&self) -> f64 {
        self.beta * self.delta_lambda_minus_one()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta.is_finite() && self.theta >= 0.0) {
            return Err(invalid("theta must be nonnegative"));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(invalid("lambda must be positive"));
        }
        if self.delta < 2 {
            return Err(invalid("delta must be at least 2"));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(invalid("beta must be nonnegative"));
        }
        if self.k < 4 {
            return Err(invalid("truncation degree must be at least 4"));
        }
        if self.tol.is_nan() {
            return Err(invalid("tol must be a number"));
        }
        Ok(())
    }
}

/// Which map generates the orbit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// `f_n = T(f_{n-1})` started from `g`.
    T,
    /// `g_n = Q(g_{n-1})` started from `g(βz)`.
    Q,
    /// Normalized `g̃_n = Q̃_n(g̃_{n-1})` started from `g(βz)`.
    #[serde(rename = "Q_tilde")]
    QTilde,
}

/// Bit positions of [`InequalityFlags`].
pub mod flag {
    pub const CE1: u16 = 1 << 0;
    pub const CE2: u16 = 1 << 1;
    pub const CE3: u16 = 1 << 2;
    pub const E4: u16 = 1 << 3;
    pub const E5: u16 = 1 << 4;
    pub const E6: u16 = 1 << 5;
    pub const E1: u16 = 1 << 6;
    pub const E2: u16 = 1 << 7;
    pub const E3: u16 = 1 << 8;
    /// `φ_{n-1}^(1) < (1 - δ^{-λ})^{-1}` held before the step.
    pub const INEQ: u16 = 1 << 9;
}

/// Which estimates were checked at a step and which held.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InequalityFlags {
    pub evaluated: u16,
    pub held: u16,
}

impl InequalityFlags {
    fn record(&mut self, bit: u16, ok: bool) {
        self.evaluated |= bit;
        if ok {
            self.held |= bit;
        }
    }

    /// Every evaluated estimate held.
    pub fn all_held(&self) -> bool {
        self.evaluated & !self.held == 0
    }

    pub fn failed(&self) -> u16 {
        self.evaluated & !self.held
    }
}

/// `lhs >= rhs` up to `1e-9 · max(1, |lhs|, |rhs|)`.
fn geq(lhs: f64, rhs: f64) -> bool {
    lhs >= rhs - 1e-9 * 1f64.max(lhs.abs()).max(rhs.abs())
}

/// Diagnostics of one orbit step.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrbitRecord {
    pub n: usize,
    /// `ln C_n`, where `C_n` is the value at 0 before normalization.
    pub log_c: f64,
    /// `ln Y_n = ln C_n - δ ln C_{n-1}`.
    pub log_y: f64,
    /// First two log-derivatives in the orbit's own coordinates.
    pub phi1: f64,
    pub phi2: f64,
    pub nu: Option<f64>,
    pub kappa: Option<f64>,
    pub flags: InequalityFlags,
    pub tail_estimate: f64,
    /// Largest sign-rule violation over the first few log-derivatives.
    pub sign_violation: f64,
    /// Orbit element divided by its value at 0.
    pub series: TruncatedSeries<f64>,
}

impl OrbitRecord {
    pub fn c_n(&self) -> f64 {
        self.log_c.exp()
    }
}

/// Why an orbit stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Termination {
    Converged {
        step: usize,
    },
    MaxIterations,
    /// The bound `φ^(1) < (1 - δ^{-λ})^{-1}` failed before this step.
    DomainExit {
        step: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Orbit {
    pub variant: Variant,
    pub records: Vec<OrbitRecord>,
    pub termination: Termination,
}

impl Orbit {
    pub fn last(&self) -> &OrbitRecord {
        self.records
            .last()
            .expect("orbit has at least the seed record")
    }
}

struct Consts<T: Real> {
    theta: T,
    delta: u32,
    dl: T,
    dml: T,
    scale_t: T,
    inv_delta: T,
    tau: T,
    qtime: T,
}

impl<T: Real> Consts<T> {
    fn new(p: &EvolutionParams) -> Self {
        let d = T::from_f64(p.delta as f64);
        let lam = T::from_f64(p.lambda);
        let dl = d.powf(lam);
        let one = T::one();
        let beta = T::from_f64(p.beta);
        Consts {
            theta: T::from_f64(p.theta),
            delta: p.delta,
            dl,
            dml: one / dl,
            scale_t: one / (d * dl),
            inv_delta: one / d,
            tau: beta * (dl - one),
            qtime: dl - one,
        }
    }

    fn qtilde_time(&self, n: usize) -> T {
        self.qtime / self.dl.powi(n as i32)
    }
}

/// `exp(time·Δθ)[f(scale·z)]^power`.
pub fn renormalize<T: Real>(
    f: &TruncatedSeries<T>,
    scale: T,
    power: u32,
    theta: T,
    time: T,
) -> Result<TruncatedSeries<T>> {
    let powered = f.scale_argument(scale).pow_integer(power)?;
    heat_apply_raw(&powered, theta, time)
}

/// `T_t f = exp(tτΔθ)[f(δ^{-1-λ}z)]^δ`.
pub fn step_t<T: Real>(
    f: &TruncatedSeries<T>,
    p: &EvolutionParams,
    t: f64,
) -> Result<TruncatedSeries<T>> {
    if !(0.0..=1.0).contains(&t) {
        return Err(invalid("partial time must lie in [0, 1]"));
    }
    let c = Consts::<T>::new(p);
    renormalize(f, c.scale_t, c.delta, c.theta, c.tau * T::from_f64(t))
}

/// `Q g = exp((δ^λ - 1)Δθ)[g(δ^{-1-λ}z)]^δ`.
pub fn step_q<T: Real>(g: &TruncatedSeries<T>, p: &EvolutionParams) -> Result<TruncatedSeries<T>> {
    let c = Consts::<T>::new(p);
    renormalize(g, c.scale_t, c.delta, c.theta, c.qtime)
}

/// `Q̃_n g`: time `δ^{-nλ}(δ^λ - 1)`, argument scale `1/δ`, normalized to 1 at 0.
pub fn step_q_tilde<T: Real>(
    g: &TruncatedSeries<T>,
    n: usize,
    p: &EvolutionParams,
) -> Result<TruncatedSeries<T>> {
    Ok(step_q_tilde_with_norm(g, n, p)?.0)
}

/// As [`step_q_tilde`], also returning the normalizer `Ỹ_n`.
pub fn step_q_tilde_with_norm<T: Real>(
    g: &TruncatedSeries<T>,
    n: usize,
    p: &EvolutionParams,
) -> Result<(TruncatedSeries<T>, T)> {
    let c = Consts::<T>::new(p);
    let raw = renormalize(g, c.inv_delta, c.delta, c.theta, c.qtilde_time(n))?;
    let (out, y) = raw.normalized()?;
    Ok((out, y))
}

/// Initial element of an orbit for the given variant.
pub fn orbit_seed<T: Real>(
    seed: &LaguerreFactored,
    p: &EvolutionParams,
    variant: Variant,
) -> Result<TruncatedSeries<T>> {
    match variant {
        Variant::T => Ok(seed.to_series(p.k)),
        Variant::Q | Variant::QTilde => Ok(seed.rescaled(p.beta)?.to_series(p.k)),
    }
}

/// Runs an orbit from a Laguerre seed in double precision.
pub fn run_orbit(seed: &LaguerreFactored, p: &EvolutionParams, variant: Variant) -> Result<Orbit> {
    run_orbit_with_precision(seed, p, variant, Precision::Double)
}

/// Runs an orbit with the requested arithmetic. `Auto` means double here.
pub fn run_orbit_with_precision(
    seed: &LaguerreFactored,
    p: &EvolutionParams,
    variant: Variant,
    precision: Precision,
) -> Result<Orbit> {
    p.validate()?;
    if seed.value_at_zero() <= 0.0 {
        return Err(Error::DegenerateInput("seed must be positive at 0".into()));
    }
    let interval = seed.coupling_interval(p.delta, p.lambda);
    let tau = p.tau();
    if tau > interval.hi * (1.0 + 1e-12) {
        return Err(invalid(format!(
            "tau = {tau} lies outside the admissible interval [0, {}]",
            interval.hi
        )));
    }
    match precision {
        Precision::Extended => {
            run_orbit_series::<DoubleDouble>(orbit_seed(seed, p, variant)?, p, variant)
        }
        Precision::Double | Precision::Auto => {
            run_orbit_series::<f64>(orbit_seed(seed, p, variant)?, p, variant)
        }
    }
}

/// Runs an orbit from an arbitrary initial series.
pub fn run_orbit_series<T: Real>(
    f0: TruncatedSeries<T>,
    p: &EvolutionParams,
    variant: Variant,
) -> Result<Orbit> {
    p.validate()?;
    let c = Consts::<T>::new(p);
    let delta_f = p.delta as f64;
    let dml = c.dml.to_f64();
    let one_minus_dml = 1.0 - dml;
    let d2l1 = delta_f.powf(2.0 * p.lambda - 1.0);
    let theta = p.theta;
    let beta = p.beta;
    // factor converting φ^(k) of the orbit into the coordinates of Q
    let to_q = |k: i32, n: usize| -> f64 {
        match variant {
            Variant::T => beta.powi(k),
            Variant::Q => 1.0,
            Variant::QTilde => delta_f.powf(-(n as f64) * p.lambda * k as f64),
        }
    };
    let limits: Vec<f64> = match variant {
        Variant::T => {
            if beta > 0.0 {
                vec![0.0, 1.0 / beta]
            } else {
                vec![0.0]
            }
        }
        Variant::Q => vec![0.0, 1.0],
        Variant::QTilde => Vec::new(),
    };

    let c0 = f0.value_at_zero();
    if !(c0 > T::zero()) {
        return Err(Error::DegenerateInput(
            "orbit start must be positive at 0".into(),
        ));
    }
    let (mut h, _) = f0.normalized()?;
    let log_c0 = c0.ln().to_f64();
    let depth = SIGN_RULE_DEPTH.min(p.k);
    let ld = h.log_derivatives(depth)?;
    let mut records = vec![OrbitRecord {
        n: 0,
        log_c: log_c0,
        log_y: 0.0,
        phi1: ld.get(1).to_f64(),
        phi2: ld.get(2).to_f64(),
        nu: None,
        kappa: None,
        flags: InequalityFlags::default(),
        tail_estimate: h.tail_estimate(),
        sign_violation: ld.sign_rule_violation(depth),
        series: h.to_f64(),
    }];
    let mut streak = 0usize;
    let mut termination = Termination::MaxIterations;

    for n in 1..=p.n_max {
        let prev = &records[n - 1];
        let phi1_q = prev.phi1 * to_q(1, n - 1);
        let phi2_q = prev.phi2 * to_q(2, n - 1);
        let mut flags = InequalityFlags::default();
        if !(phi1_q < 1.0 / one_minus_dml) {
            termination = Termination::DomainExit { step: n };
            break;
        }
        flags.record(flag::INEQ, true);
        let nu = 1.0 / (1.0 - one_minus_dml * phi1_q);
        let kappa = dml * nu;

        let raw = match variant {
            Variant::T => renormalize(&h, c.scale_t, c.delta, c.theta, c.tau)?,
            Variant::Q => renormalize(&h, c.scale_t, c.delta, c.theta, c.qtime)?,
            Variant::QTilde => renormalize(&h, c.inv_delta, c.delta, c.theta, c.qtilde_time(n))?,
        };
        let y = raw.value_at_zero();
        if !(y > T::zero()) {
            return Err(Error::DegenerateInput(format!(
                "nonpositive value at 0 at step {n}"
            )));
        }
        let (next, _) = raw.normalized()?;
        if next.tail_estimate() > TAIL_THRESHOLD {
            return Err(Error::TruncationFailure {
                step: n,
                tail: next.tail_estimate(),
            });
        }
        h = next;
        let log_y = y.ln().to_f64();
        let log_c = delta_f * prev.log_c + log_y;
        let ld = h.log_derivatives(depth)?;
        let phi1 = ld.get(1).to_f64();
        let phi2 = ld.get(2).to_f64();

        match variant {
            Variant::T | Variant::Q => {
                let yv = y.to_f64();
                let nth = nu.powf(theta);
                flags.record(flag::CE1, geq(yv, 1.0));
                flags.record(flag::CE2, geq(nth, yv));
                let expo = 0.5
                    * theta
                    * (theta + 1.0)
                    * kappa
                    * kappa
                    * one_minus_dml.powi(2)
                    * d2l1
                    * phi2_q;
                flags.record(flag::CE3, geq(yv, nth * expo.exp()));
                let p1 = phi1 * to_q(1, n);
                let p2 = phi2 * to_q(2, n);
                flags.record(flag::E4, geq(p2, d2l1 * kappa.powi(4) * phi2_q));
                flags.record(flag::E5, geq(kappa * phi1_q, p1));
                let lower =
                    kappa * phi1_q + (theta + 1.0) * one_minus_dml * d2l1 * kappa.powi(3) * phi2_q;
                flags.record(flag::E6, geq(p1, lower));
            }
            Variant::QTilde => {
                let prev1 = prev.phi1;
                let prev2 = prev.phi2;
                flags.record(flag::E1, geq(phi2, nu.powi(4) * prev2 / delta_f));
                flags.record(flag::E2, geq(nu * prev1, phi1));
                let lower = nu * prev1
                    + (theta + 1.0) * one_minus_dml / delta_f
                        * nu.powi(3)
                        * delta_f.powf(-((n - 1) as f64) * p.lambda)
                        * prev2;
                flags.record(flag::E3, geq(phi1, lower));
            }
        }

        let converged = p.tol > 0.0 && phi2.abs() < p.tol && {
            if limits.is_empty() {
                (phi1 - prev.phi1).abs() < p.tol
            } else {
                limits.iter().any(|l| (phi1 - l).abs() < p.tol)
            }
        };
        records.push(OrbitRecord {
            n,
            log_c,
            log_y,
            phi1,
            phi2,
            nu: Some(nu),
            kappa: Some(kappa),
            flags,
            tail_estimate: h.tail_estimate(),
            sign_violation: ld.sign_rule_violation(depth),
            series: h.to_f64(),
        });
        streak = if converged { streak + 1 } else { 0 };
        if streak >= 3 {
            termination = Termination::Converged { step: n };
            break;
        }
    }
    Ok(Orbit {
        variant,
        records,
        termination,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> EvolutionParams {
        EvolutionParams::new(1.0, 0.25, 2, 0.5).with_n_max(10)
    }

    #[test]
    fn tau_from_beta() {
        let p = params();
        assert!((p.tau() - 0.5 * (2f64.powf(0.25) - 1.0)).abs() < 1e-16);
        assert!((p.with_tau(0.1).beta * p.delta_lambda_minus_one() - 0.1).abs() < 1e-16);
    }

    #[test]
    fn constant_is_fixed_by_q() {
        let g = TruncatedSeries::<f64>::constant(1.0, 16);
        assert_eq!(step_q(&g, &params()).unwrap(), g);
    }

    #[test]
    fn q_tilde_output_is_normalized() {
        let g: TruncatedSeries = LaguerreFactored::product(vec![0.5, 0.3])
            .unwrap()
            .to_series(32);
        let out = step_q_tilde(&g, 3, &params()).unwrap();
        assert_eq!(out.value_at_zero(), 1.0);
    }

    #[test]
    fn exponential_step_t_closed_form() {
        let p = EvolutionParams::new(1.5, 0.25, 2, 0.8);
        let (cc, u) = (1.3, 0.7);
        let f = TruncatedSeries::<f64>::exponential(u, 64).scale(cc);
        let out = step_t(&f, &p, 1.0).unwrap();
        let dml = 2f64.powf(-0.25);
        let den = 1.0 - u * p.tau() * dml;
        let rate = u * dml / den;
        let pref = cc * cc * den.powf(-1.5);
        let want = TruncatedSeries::<f64>::exponential(rate, 64).scale(pref);
        for k in 0..=16 {
            assert!((out.coeff(k) / want.coeff(k) - 1.0).abs() < 1e-12, "k={k}");
        }
    }

    #[test]
    fn domain_exit_is_recorded() {
        let seed = LaguerreFactored::product(vec![1.0; 3]).unwrap();
        let p = EvolutionParams::new(0.0, 0.25, 2, 3.0).with_n_max(40);
        let orbit = run_orbit(&seed, &p, Variant::Q).unwrap();
        assert!(matches!(orbit.termination, Termination::DomainExit { .. }));
    }

    #[test]
    fn rejects_tau_outside_interval() {
        let seed = LaguerreFactored::exponential(1.0, 1.0).unwrap();
        let p = EvolutionParams::new(0.0, 0.25, 2, 2.0);
        assert!(run_orbit(&seed, &p, Variant::T).is_err());
    }

    #[test]
    fn extended_matches_double_on_short_orbit() {
        let seed = LaguerreFactored::product(vec![0.4; 3]).unwrap();
        let p = EvolutionParams::new(1.0, 0.25, 2, 0.9).with_n_max(6);
        let a = run_orbit_with_precision(&seed, &p, Variant::Q, Precision::Double).unwrap();
        let b = run_orbit_with_precision(&seed, &p, Variant::Q, Precision::Extended).unwrap();
        for (x, y) in a.records.iter().zip(&b.records) {
            assert!((x.phi1 - y.phi1).abs() < 1e-12);
            assert!((x.log_c - y.log_c).abs() < 1e-12);
        }
    }
}
