//! The operator `Δθ = (θ + zD)D` and its semigroup `exp(tΔθ)`.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Error, Result};
use crate::precision::Real;
use crate::quadrature::GaussLaguerre;
use crate::series::TruncatedSeries;

/// Default tolerance for the node-doubling test of the integral form.
pub const DEFAULT_QUAD_TOL: f64 = 1e-10;

const QUAD_NODES: [usize; 4] = [32, 64, 128, 256];

/// Parameters of one application of `exp(tΔθ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemigroupParams {
    pub theta: f64,
    pub t: f64,
    /// Declared exponential type `a` of the input; `a·t < 1` is required.
    #[serde(default)]
    pub type_bound: Option<f64>,
}

impl SemigroupParams {
    pub fn new(theta: f64, t: f64) -> Self {
        SemigroupParams {
            theta,
            t,
            type_bound: None,
        }
    }

    pub fn with_type_bound(mut self, a: f64) -> Self {
        self.type_bound = Some(a);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta.is_finite() && self.theta >= 0.0) {
            return Err(invalid("theta must be nonnegative"));
        }
        if !(self.t.is_finite() && self.t >= 0.0) {
            return Err(invalid("time must be nonnegative"));
        }
        if let Some(a) = self.type_bound {
            if a * self.t >= 1.0 {
                return Err(Error::SingularTime { uv: a * self.t });
            }
        }
        Ok(())
    }
}

/// Coefficient `k` of the output is `(k+1)(θ+k) c_{k+1}`; the top degree becomes 0.
pub fn delta_theta<T: Real>(f: &TruncatedSeries<T>, theta: T) -> TruncatedSeries<T> {
    let k = f.degree();
    let c = f.coeffs();
    let mut out = vec![T::zero(); k + 1];
    for (j, o) in out.iter_mut().enumerate().take(k) {
        let jj = T::from_usize(j);
        *o = (jj + T::one()) * (theta + jj) * c[j + 1];
    }
    let tail = f.tail_estimate() * (k + 1) as f64 * (theta.to_f64() + k as f64 + 1.0);
    TruncatedSeries::from_parts(out, tail)
}

/// `exp(tΔθ) f` on coefficients, with validation of the parameters.
pub fn heat_apply(f: &TruncatedSeries, p: &SemigroupParams) -> Result<TruncatedSeries> {
    p.validate()?;
    heat_apply_raw(f, p.theta, p.t)
}

/// Generic form of [`heat_apply`] without parameter validation.
pub fn heat_apply_raw<T: Real>(
    f: &TruncatedSeries<T>,
    theta: T,
    t: T,
) -> Result<TruncatedSeries<T>> {
    let kdeg = f.degree();
    let c = f.coeffs();
    let tail_in = f.tail_estimate();
    let check_upto = kdeg / 4;
    let mut out = vec![T::zero(); kdeg + 1];
    let mut remainder = 0.0;
    let mut terms = Vec::with_capacity(kdeg + 1);
    for (k, o) in out.iter_mut().enumerate() {
        terms.clear();
        let mut w = T::one();
        let mut sum = T::zero();
        let mut comp = T::zero();
        for j in 0..=kdeg - k {
            if j > 0 {
                let idx = T::from_usize(k + j);
                w = w * t * idx * (theta + idx - T::one()) / T::from_usize(j);
            }
            // underflowed coefficients would turn an overflowed weight into NaN
            let term = if c[k + j] == T::zero() {
                T::zero()
            } else {
                w * c[k + j]
            };
            terms.push(term.to_f64().abs());
            let y = term - comp;
            let s = sum + y;
            comp = (s - sum) - y;
            sum = s;
        }
        *o = sum;
        if tail_in > 0.0 && terms.len() >= 2 {
            let last = terms[terms.len() - 1];
            let prev = terms[terms.len() - 2];
            let total: f64 = terms.iter().sum();
            let ratio = if prev > 0.0 { last / prev } else { 0.0 };
            if k <= check_upto && terms.len() >= 8 && ratio >= 1.0 && last > 1e-8 * total {
                return Err(Error::DivergentSum { degree: k });
            }
            remainder += if ratio < 1.0 {
                last * ratio / (1.0 - ratio)
            } else {
                last * terms.len() as f64
            };
        }
        if !sum.is_finite() {
            return Err(Error::DivergentSum { degree: k });
        }
    }
    let tail = if tail_in == 0.0 {
        0.0
    } else {
        tail_in + remainder
    };
    Ok(TruncatedSeries::from_parts(out, tail))
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let mx = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !mx.is_finite() {
        return mx;
    }
    mx + xs.iter().map(|x| (x - mx).exp()).sum::<f64>().ln()
}

/// `ln w_θ(x)` for `x >= 0`, summed in log space.
pub fn ln_w_theta(x: f64, theta: f64) -> f64 {
    assert!(x >= 0.0 && theta > 0.0);
    let first = -ln_gamma(theta);
    if x == 0.0 {
        return first;
    }
    let lx = x.ln();
    let mut logs = vec![first];
    let mut best = first;
    let mut k = 1usize;
    loop {
        let kf = k as f64;
        let term = kf * lx - ln_gamma(kf + 1.0) - ln_gamma(theta + kf);
        logs.push(term);
        best = best.max(term);
        if kf * kf > x && term < best - 45.0 {
            break;
        }
        k += 1;
    }
    log_sum_exp(&logs)
}

/// `w_θ(z) = Σ z^k / (k! Γ(θ+k))`, summed until the remaining terms are below `tol`.
pub fn w_theta(z: f64, theta: f64, tol: f64) -> f64 {
    assert!(theta > 0.0);
    if z >= 0.0 {
        let direct = direct_w_theta(z, theta, tol);
        if direct.is_finite() && z < 50.0 {
            return direct;
        }
        return ln_w_theta(z, theta).exp();
    }
    direct_w_theta(z, theta, tol)
}

fn direct_w_theta(z: f64, theta: f64, tol: f64) -> f64 {
    let mut term = (-ln_gamma(theta)).exp();
    let mut sum = term;
    let mut k = 1usize;
    loop {
        let kf = k as f64;
        term *= z / (kf * (theta + kf - 1.0));
        sum += term;
        // once k^2 > |z| the terms decrease faster than geometrically
        let ratio = z.abs() / ((kf + 1.0) * (theta + kf));
        if kf * kf > z.abs() && ratio < 0.5 && term.abs() * ratio / (1.0 - ratio) < tol {
            break;
        }
        if k > 100_000 {
            break;
        }
        k += 1;
    }
    sum
}

/// Integral form of `(exp(tΔθ) g)(z)` by generalized Gauss–Laguerre quadrature.
///
/// The node count doubles from 32 to 256 until two successive values agree
/// within `quad_tol` (relative to `max(1, |value|)`).
pub fn heat_apply_integral(
    g: impl Fn(f64) -> f64,
    p: &SemigroupParams,
    z: f64,
    quad_tol: f64,
) -> Result<f64> {
    p.validate()?;
    if !(p.t > 0.0 && p.theta > 0.0) {
        return Err(invalid("integral form needs t > 0 and theta > 0"));
    }
    let (t, theta) = (p.t, p.theta);
    let a = theta - 1.0;
    let kernel = |s: f64| -> f64 {
        let x = z * s / t;
        let ln_part = if x >= 0.0 {
            ln_w_theta(x, theta) - z / t
        } else {
            return direct_w_theta(x, theta, 1e-17) * (-z / t).exp() * g(t * s);
        };
        ln_part.exp() * g(t * s)
    };
    let mut prev: Option<f64> = None;
    let mut change = f64::INFINITY;
    for &n in &QUAD_NODES {
        let value = GaussLaguerre::cached(n, a).integrate(kernel);
        if let Some(pv) = prev {
            change = (value - pv).abs();
            if change <= quad_tol * value.abs().max(1.0) {
                return Ok(value);
            }
        }
        prev = Some(value);
    }
    Err(Error::QuadratureNonconvergent {
        change,
        nodes: QUAD_NODES[QUAD_NODES.len() - 1],
    })
}

/// Splits `exp(uΔθ)[e^{vz} h]` as `e^{rz} h_u(z)`; returns `(r, h_u)`.
pub fn shift_identity<T: Real>(
    h: &TruncatedSeries<T>,
    v: T,
    u: T,
    theta: T,
) -> Result<(T, TruncatedSeries<T>)> {
    let one = T::one();
    let uv = u * v;
    if uv >= one {
        return Err(Error::SingularTime { uv: uv.to_f64() });
    }
    let d = one - uv;
    let rate = v / d;
    let stretched = h.scale_argument(one / (d * d));
    let heated = heat_apply_raw(&stretched, theta, u * d)?;
    let pref = d.powf(-theta);
    Ok((rate, heated.scale(pref)))
}
