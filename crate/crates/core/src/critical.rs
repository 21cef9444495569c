//! Fixed points, spectra, the exponential-family oracle and the searches for
//! the critical coupling `β_*` and the corridor constant `ζ_*`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dynamics::{orbit_seed, run_orbit_series, step_q, EvolutionParams, Variant};
use crate::error::{invalid, Error, Result};
use crate::laguerre::{Interval, LaguerreFactored};
use crate::precision::{DoubleDouble, Precision, Real};
use crate::semigroup::heat_apply_raw;
use crate::series::TruncatedSeries;

/// Bracket width below which `Precision::Auto` switches to extended arithmetic.
pub const AUTO_EXTENDED_WIDTH: f64 = 1e-8;

/// Slack in `ln C_n` allowed on both sides of the corridor.
pub const CORRIDOR_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FixedPointKind {
    Trivial,
    Critical,
}

/// `C_* e^{u_* z}`, a fixed point of `T` (or of `Q` when `variant` is `Q`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub which: FixedPointKind,
    pub c_star: f64,
    pub u_star: f64,
    pub variant: Variant,
}

/// `C_{2,*} = δ^{-λθ/(δ-1)}`.
pub fn critical_constant(p: &EvolutionParams) -> f64 {
    let d = p.delta as f64;
    d.powf(-p.lambda * p.theta / (d - 1.0))
}

impl FixedPoint {
    pub fn trivial(variant: Variant) -> Self {
        FixedPoint {
            which: FixedPointKind::Trivial,
            c_star: 1.0,
            u_star: 0.0,
            variant,
        }
    }

    /// Nontrivial fixed point; for `T` the rate is `(δ^λ - 1)/τ`.
    pub fn critical(p: &EvolutionParams, variant: Variant) -> Result<Self> {
        let u_star = match variant {
            Variant::T => {
                if !(p.tau() > 0.0) {
                    return Err(invalid("critical fixed point of T needs tau > 0"));
                }
                p.delta_lambda_minus_one() / p.tau()
            }
            Variant::Q => 1.0,
            Variant::QTilde => return Err(invalid("Q_tilde has no fixed points")),
        };
        Ok(FixedPoint {
            which: FixedPointKind::Critical,
            c_star: critical_constant(p),
            u_star,
            variant,
        })
    }

    /// Diffusion time of one step of the underlying map.
    fn time(&self, p: &EvolutionParams) -> f64 {
        match self.variant {
            Variant::T => p.tau(),
            _ => p.delta_lambda_minus_one(),
        }
    }

    pub fn to_series(&self, k: usize) -> TruncatedSeries {
        TruncatedSeries::exponential(self.u_star, k).scale(self.c_star)
    }
}

/// `ln C_n` and `u_n` of the orbit of `C_0 e^{αz}` under `T`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExponentialState {
    pub log_c: f64,
    pub u: f64,
}

/// Closed-form orbit of the exponential family.
pub fn exponential_orbit_oracle(
    c0: f64,
    alpha: f64,
    p: &EvolutionParams,
    n: usize,
) -> Result<ExponentialState> {
    if !(c0 > 0.0) {
        return Err(invalid("C_0 must be positive"));
    }
    let d = p.delta as f64;
    let a = alpha * p.beta;
    let dml = d.powf(-p.lambda);
    let big_d = |l: usize| (1.0 - a) + a * dml.powi(l as i32);
    for l in 1..=n {
        if !(big_d(l) > 0.0) {
            return Err(Error::SingularOrbit { step: l });
        }
    }
    // ln Ξ_n = Σ_{l=1}^n δ^{n-l} θ (ln D_{l-1} - ln D_l)
    let mut log_xi = 0.0;
    for l in 1..=n {
        log_xi += d.powi((n - l) as i32) * p.theta * (big_d(l - 1).ln() - big_d(l).ln());
    }
    Ok(ExponentialState {
        log_c: d.powi(n as i32) * c0.ln() + log_xi,
        u: alpha * dml.powi(n as i32) / big_d(n),
    })
}

/// Partial product for the initial constant `C(τ)` that keeps `C_n` bounded.
pub fn c_of_tau(p: &EvolutionParams, alpha: f64, terms: usize) -> Result<f64> {
    let a = alpha * p.beta;
    if a > 1.0 + 1e-12 {
        return Err(invalid("tau exceeds the critical value"));
    }
    if p.theta == 0.0 {
        return Ok(1.0);
    }
    let d = p.delta as f64;
    let dml = d.powf(-p.lambda);
    let big_d = |k: usize| (1.0 - a) + a * dml.powi(k as i32);
    let mut log_c = 0.0;
    for k in 0..terms {
        log_c += p.theta * d.powi(-(k as i32) - 1) * (big_d(k + 1).ln() - big_d(k).ln());
    }
    Ok(log_c.exp())
}

/// Analytic eigenvalues `Λ_0..Λ_kmax` of the linearization at `fp`.
pub fn linearization_eigenvalues(fp: &FixedPoint, p: &EvolutionParams, kmax: usize) -> Vec<f64> {
    let d = p.delta as f64;
    let dml = d.powf(-p.lambda);
    let den = 1.0 - fp.u_star * dml * fp.time(p);
    (0..=kmax)
        .map(|k| {
            let kf = k as f64;
            d.powf(-kf * p.lambda - kf + 1.0) / den.powi(2 * k as i32)
        })
        .collect()
}

/// `δ exp(tΔθ)((f_*^{δ-1} h)(δ^{-1-λ} z))`.
pub fn linearized_step(
    fp: &FixedPoint,
    h: &TruncatedSeries,
    p: &EvolutionParams,
) -> Result<TruncatedSeries> {
    let k = h.degree();
    let d = p.delta as f64;
    let f = fp.to_series(k);
    let fpow = f.pow_integer(p.delta - 1)?;
    let prod = fpow.mul(h)?;
    let scaled = prod.scale_argument(1.0 / d.powf(1.0 + p.lambda));
    Ok(heat_apply_raw(&scaled, p.theta, fp.time(p))?.scale(d))
}

/// Eigenvalues of the linearization restricted to `{f_* p : deg p <= kmax}`,
/// sorted in decreasing order.
pub fn numeric_spectrum(fp: &FixedPoint, p: &EvolutionParams, kmax: usize) -> Result<Vec<f64>> {
    let k = p.k;
    if 2 * kmax > k {
        return Err(invalid("kmax must not exceed K/2"));
    }
    let f = fp.to_series(k);
    let inv_f = TruncatedSeries::exponential(-fp.u_star, k).scale(1.0 / fp.c_star);
    let n = kmax + 1;
    let mut m = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let h = f.mul(&TruncatedSeries::monomial(j, k))?;
        let out = linearized_step(fp, &h, p)?.mul(&inv_f)?;
        for i in 0..n {
            m[(i, j)] = out.coeff(i);
        }
    }
    let mut eig: Vec<f64> = m.complex_eigenvalues().iter().map(|c| c.re).collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    Ok(eig)
}

/// Outcome of classifying one coupling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Sub,
    Super,
    Undecided,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Verdict::Sub => "sub",
            Verdict::Super => "super",
            Verdict::Undecided => "undecided",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub beta: f64,
    pub verdict: Verdict,
    pub exit_step: usize,
    pub precision: Precision,
}

/// Search settings for [`find_beta_star`] and [`find_zeta_star`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchOptions {
    pub beta_tol: f64,
    /// Maximum orbit length used to classify a coupling.
    pub horizon: usize,
    pub precision: Precision,
    /// Steps of the `C_n` recursion used to classify `ζ`.
    pub zeta_horizon: usize,
    pub max_bisections: usize,
    /// Upper end of the search when the seed has `α = 0` and no better bound is known.
    pub beta_cap: Option<f64>,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            beta_tol: 1e-10,
            horizon: 400,
            precision: Precision::Auto,
            zeta_horizon: 40,
            max_bisections: 200,
            beta_cap: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriticalResult {
    pub beta_star: f64,
    pub tau_star: f64,
    pub bracket: Interval,
    /// `ζ_*(β_*)`, the initial constant whose orbit stays in the corridor.
    pub zeta_star: f64,
    pub zeta_bracket: Interval,
    pub trace: Vec<TraceEntry>,
}

/// Classifies `β` by where `φ_n^(1)` of the `Q` orbit of `g(βz)` leaves `(1, Φ^(1))`.
pub fn classify_beta(
    seed: &LaguerreFactored,
    beta: f64,
    p: &EvolutionParams,
    phi1_bound: f64,
    horizon: usize,
    precision: Precision,
) -> Result<(Verdict, usize)> {
    let q = p.with_beta(beta);
    match precision {
        Precision::Extended => classify_in::<DoubleDouble>(seed, &q, phi1_bound, horizon),
        _ => classify_in::<f64>(seed, &q, phi1_bound, horizon),
    }
}

fn classify_in<T: Real>(
    seed: &LaguerreFactored,
    p: &EvolutionParams,
    phi1_bound: f64,
    horizon: usize,
) -> Result<(Verdict, usize)> {
    let dml = (p.delta as f64).powf(-p.lambda);
    let ineq = 1.0 / (1.0 - dml);
    let g0: TruncatedSeries<T> = orbit_seed(seed, p, Variant::Q)?;
    let (mut g, _) = g0.normalized()?;
    for n in 0..=horizon {
        let phi1 = g.log_derivatives(1)?.get(1).to_f64();
        if phi1 < 1.0 {
            return Ok((Verdict::Sub, n));
        }
        if phi1 >= phi1_bound || phi1 >= ineq {
            return Ok((Verdict::Super, n));
        }
        if n == horizon {
            break;
        }
        // above 1 the only way to lose the series is a blow-up toward the domain edge
        let next = match step_q(&g, p) {
            Ok(next) => next,
            Err(Error::DivergentSum { .. }) => return Ok((Verdict::Super, n + 1)),
            Err(e) => return Err(e),
        };
        if next.tail_estimate() / next.value_at_zero().to_f64() > crate::dynamics::TAIL_THRESHOLD {
            return Ok((Verdict::Super, n + 1));
        }
        g = next.normalized()?.0;
    }
    Ok((Verdict::Undecided, horizon))
}

/// Bisection for the critical coupling of a class-`L(λ)` seed.
pub fn find_beta_star(
    seed: &LaguerreFactored,
    p: &EvolutionParams,
    opts: &SearchOptions,
) -> Result<CriticalResult> {
    p.validate()?;
    let dlm1 = p.delta_lambda_minus_one();
    if seed.is_exponential() {
        if !(seed.alpha() > 0.0) {
            return Err(Error::DegenerateInput(
                "constant seed has no critical coupling".into(),
            ));
        }
        let b = 1.0 / seed.alpha();
        let zeta = c_of_tau(&p.with_beta(b), seed.alpha(), 400)?;
        return Ok(CriticalResult {
            beta_star: b,
            tau_star: b * dlm1,
            bracket: Interval::new(b, b),
            zeta_star: zeta,
            zeta_bracket: Interval::new(zeta, zeta),
            trace: Vec::new(),
        });
    }
    let membership = seed.in_class_lambda(p.theta, p.delta, p.lambda)?;
    let constants = membership.constants.ok_or_else(|| {
        Error::DegenerateInput(format!(
            "seed is outside the class (ratio {:.6})",
            membership.ratio
        ))
    })?;
    let m1 = seed.moments(1)[0];
    let s = seed.alpha() + m1;
    let j_max = if seed.alpha() > 0.0 {
        1.0 / seed.alpha()
    } else {
        opts.beta_cap.unwrap_or(f64::INFINITY)
    };
    let mut lo = 1.0 / s;
    let mut hi = (constants.phi1 / s).min(j_max);
    let mut trace = Vec::new();
    let precision_for = |width: f64| match opts.precision {
        Precision::Auto if width < AUTO_EXTENDED_WIDTH => Precision::Extended,
        Precision::Auto => Precision::Double,
        other => other,
    };
    let classify = |beta: f64, width: f64, trace: &mut Vec<TraceEntry>| -> Result<Verdict> {
        let prec = precision_for(width);
        let (verdict, exit_step) =
            classify_beta(seed, beta, p, constants.phi1, opts.horizon, prec)?;
        trace.push(TraceEntry {
            beta,
            verdict,
            exit_step,
            precision: prec,
        });
        Ok(verdict)
    };

    let mut v_lo = classify(lo, hi - lo, &mut trace)?;
    let mut tries = 0;
    while v_lo != Verdict::Sub && tries < 60 {
        lo *= 0.5;
        v_lo = classify(lo, hi - lo, &mut trace)?;
        tries += 1;
    }
    let mut v_hi = classify(hi, hi - lo, &mut trace)?;
    tries = 0;
    while v_hi != Verdict::Super && tries < 60 && hi < j_max {
        hi = (hi + (hi - lo)).min(j_max);
        v_hi = classify(hi, hi - lo, &mut trace)?;
        tries += 1;
    }
    if v_lo == v_hi || v_lo != Verdict::Sub || v_hi != Verdict::Super {
        return Err(Error::NoBracket {
            verdict: format!("{v_lo}/{v_hi}"),
        });
    }
    let mut iterations = 0;
    while hi - lo > opts.beta_tol && iterations < opts.max_bisections {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match classify(mid, hi - lo, &mut trace)? {
            Verdict::Sub => lo = mid,
            Verdict::Super => hi = mid,
            Verdict::Undecided => {
                return Err(Error::Undecided {
                    beta: mid,
                    width: hi - lo,
                })
            }
        }
        iterations += 1;
    }
    let beta_star = 0.5 * (lo + hi);
    let zeta = find_zeta_star(seed, beta_star, p, opts)?;
    Ok(CriticalResult {
        beta_star,
        tau_star: beta_star * dlm1,
        bracket: Interval::new(lo, hi),
        zeta_star: zeta.zeta_star,
        zeta_bracket: zeta.bracket,
        trace,
    })
}

/// Sub verdicts all lie below super verdicts along a trace.
pub fn trace_is_monotone(trace: &[TraceEntry]) -> bool {
    let max_sub = trace
        .iter()
        .filter(|e| e.verdict == Verdict::Sub)
        .map(|e| e.beta)
        .fold(f64::NEG_INFINITY, f64::max);
    let min_super = trace
        .iter()
        .filter(|e| e.verdict == Verdict::Super)
        .map(|e| e.beta)
        .fold(f64::INFINITY, f64::min);
    max_sub < min_super
}

/// Lower end `ζ^- = δ^{-θ(1+2λ)/(4(δ-1))}` of the corridor.
pub fn zeta_minus(p: &EvolutionParams) -> f64 {
    let d = p.delta as f64;
    d.powf(-p.theta * (1.0 + 2.0 * p.lambda) / (4.0 * (d - 1.0)))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ZetaResult {
    pub zeta_star: f64,
    pub bracket: Interval,
    pub zeta_minus: f64,
    /// `ln Y_n` for `n = 1..=horizon` along the normalized orbit.
    pub log_y: Vec<f64>,
}

/// Where the sequence `ln C_n` goes for a given `ln C_0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CorridorExit {
    Above(usize),
    Below(usize),
    Stays,
}

/// Runs `x_n = δ x_{n-1} + ln Y_n` from `x_0 = ln ζ` against `[ln ζ^-, 0]`.
pub fn corridor_walk<T: Real>(
    log_zeta: T,
    log_y: &[f64],
    delta: u32,
    log_zeta_minus: f64,
) -> (CorridorExit, T) {
    walk_band(log_zeta, log_y, delta, log_zeta_minus, 0.0)
}

fn walk_band<T: Real>(
    log_zeta: T,
    log_y: &[f64],
    delta: u32,
    lower: f64,
    upper: f64,
) -> (CorridorExit, T) {
    let d = T::from_f64(delta as f64);
    let (lower, upper) = (T::from_f64(lower), T::from_f64(upper));
    let mut x = log_zeta;
    for (i, &ly) in log_y.iter().enumerate() {
        x = d * x + T::from_f64(ly);
        if x > upper {
            return (CorridorExit::Above(i + 1), x);
        }
        if x < lower {
            return (CorridorExit::Below(i + 1), x);
        }
    }
    (CorridorExit::Stays, x)
}

/// `ln C_n` for `n = 0..=log_y.len()` starting from `ln ζ`.
pub fn corridor_path(log_zeta: f64, log_y: &[f64], delta: u32) -> Vec<f64> {
    let d = delta as f64;
    let mut out = Vec::with_capacity(log_y.len() + 1);
    let mut x = log_zeta;
    out.push(x);
    for ly in log_y {
        x = d * x + ly;
        out.push(x);
    }
    out
}

/// Bisection for the constant `ζ = C_0` keeping `C_n` in `[ζ^-, 1]`.
pub fn find_zeta_star(
    seed: &LaguerreFactored,
    beta: f64,
    p: &EvolutionParams,
    opts: &SearchOptions,
) -> Result<ZetaResult> {
    let zm = zeta_minus(p);
    if p.theta == 0.0 {
        return Ok(ZetaResult {
            zeta_star: 1.0,
            bracket: Interval::new(1.0, 1.0),
            zeta_minus: zm,
            log_y: Vec::new(),
        });
    }
    if seed.m() != 0 {
        return Err(Error::DegenerateInput("seed vanishes at 0".into()));
    }
    let normalized = seed.with_c(1.0)?;
    let q = p
        .with_beta(beta)
        .with_n_max(opts.zeta_horizon)
        .with_tol(0.0);
    let precision = match opts.precision {
        Precision::Extended => Precision::Extended,
        _ => Precision::Double,
    };
    let orbit = match precision {
        Precision::Extended => run_orbit_series::<DoubleDouble>(
            orbit_seed(&normalized, &q, Variant::Q)?,
            &q,
            Variant::Q,
        )?,
        _ => run_orbit_series::<f64>(orbit_seed(&normalized, &q, Variant::Q)?, &q, Variant::Q)?,
    };
    let log_y: Vec<f64> = orbit.records.iter().skip(1).map(|r| r.log_y).collect();
    // the walk amplifies an error in ln ζ by δ^n, so it runs in extended arithmetic
    type Dd = DoubleDouble;
    let lzm = zm.ln();
    let (mut lo, mut hi) = (Dd::from_f64(lzm), Dd::zero());
    let mid_corridor = Dd::from_f64(0.5 * lzm);
    let half = Dd::from_f64(0.5);
    for _ in 0..opts.max_bisections {
        let mid = half * (lo + hi);
        if !(mid > lo && mid < hi) {
            break;
        }
        let too_big = match corridor_walk(mid, &log_y, p.delta, lzm) {
            (CorridorExit::Above(_), _) => true,
            (CorridorExit::Below(_), _) => false,
            (CorridorExit::Stays, last) => last > mid_corridor,
        };
        if too_big {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let log_star = half * (lo + hi);
    if let (CorridorExit::Above(n) | CorridorExit::Below(n), _) =
        walk_band(log_star, &log_y, p.delta, lzm - CORRIDOR_TOL, CORRIDOR_TOL)
    {
        return Err(Error::CorridorViolation { step: n });
    }
    Ok(ZetaResult {
        zeta_star: log_star.to_f64().exp(),
        bracket: Interval::new(lo.to_f64().exp(), hi.to_f64().exp()),
        zeta_minus: zm,
        log_y,
    })
}

/// Closed form of the critical limit at partial time `t`, with `τ = τ_*` taken from `p`.
pub fn critical_profile(p: &EvolutionParams, t: f64, z: f64) -> Result<f64> {
    let tau = p.tau();
    if !(tau > 0.0) {
        return Err(invalid("critical profile needs tau_* > 0"));
    }
    let d = p.delta as f64;
    let a = 1.0 - d.powf(-p.lambda);
    let den = 1.0 - t * a;
    if !(den > 0.0) {
        return Err(invalid("t(1 - δ^{-λ}) must be below 1"));
    }
    let pref = d.powf(-d * p.theta * p.lambda / (d - 1.0));
    Ok(pref * den.powf(-p.theta) * (a * z / (tau * den)).exp())
}

/// Least-squares slope of `ln φ_n^(1)` against `n` over `values[from..]`.
pub fn fit_log_slope(values: &[f64], from: usize) -> Option<f64> {
    let pts: Vec<(f64, f64)> = values
        .iter()
        .enumerate()
        .skip(from)
        .filter(|(_, v)| **v > 0.0)
        .map(|(i, v)| (i as f64, v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}
