//! Truncated Taylor series at the origin.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, Error, Result};
use crate::precision::Real;

/// Default truncation degree.
pub const DEFAULT_K: usize = 64;

/// Coefficients `c_0..c_K` of an entire function together with a bound on the
/// mass that has been discarded past degree `K`.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedSeries<T: Real = f64> {
    coeffs: Vec<T>,
    tail: f64,
}

/// Log-derivatives `φ^(k) = (D^k log f)(0)` for `k = 1..=upto`.
#[derive(Clone, Debug, PartialEq)]
pub struct LogDerivs<T: Real = f64> {
    pub phi: Vec<T>,
}

/// Result of [`TruncatedSeries::norm_b`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BNorm {
    pub value: f64,
    /// Degree at which the maximum is attained.
    pub argmax: usize,
    pub tail: f64,
    /// The maximum sits at the truncation degree, so the true sup may be larger.
    pub truncation_dominated: bool,
}

/// How [`TruncatedSeries::pow_integer_via`] computes a power.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PowRoute {
    /// Truncated convolution by binary powering.
    ///
    /// For Laguerre-class input all coefficients are nonnegative, so the
    /// products involve no cancellation; the log/exp recurrences do cancel
    /// heavily at high degree once the zeros are not small.
    Auto,
    LogExp,
    Convolution,
}

fn factorial_f64(k: usize) -> f64 {
    (1..=k).fold(1.0, |acc, j| acc * j as f64)
}

fn ln_factorial(k: usize) -> f64 {
    (2..=k).map(|j| (j as f64).ln()).sum()
}

/// Full (untruncated) product of two coefficient vectors.
fn convolve_full(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

impl<T: Real> TruncatedSeries<T> {
    /// Builds a series from coefficients `c_0..c_K`.
    pub fn new(coeffs: Vec<T>, tail: f64) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(invalid("series needs at least one coefficient"));
        }
        if let Some(i) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(invalid(format!("coefficient {i} is not finite")));
        }
        if tail.is_nan() || tail < 0.0 {
            return Err(invalid("tail estimate must be nonnegative"));
        }
        Ok(TruncatedSeries { coeffs, tail })
    }

    pub(crate) fn from_parts(coeffs: Vec<T>, tail: f64) -> Self {
        debug_assert!(!coeffs.is_empty());
        TruncatedSeries { coeffs, tail }
    }

    pub fn from_f64_coeffs(coeffs: &[f64], tail: f64) -> Result<Self> {
        Self::new(coeffs.iter().map(|&c| T::from_f64(c)).collect(), tail)
    }

    pub fn zero(k: usize) -> Self {
        Self::from_parts(vec![T::zero(); k + 1], 0.0)
    }

    pub fn constant(c: T, k: usize) -> Self {
        let mut s = Self::zero(k);
        s.coeffs[0] = c;
        s
    }

    /// The monomial `z^j` (zero if `j > k`).
    pub fn monomial(j: usize, k: usize) -> Self {
        let mut s = Self::zero(k);
        if j <= k {
            s.coeffs[j] = T::one();
        } else {
            s.tail = 1.0;
        }
        s
    }

    /// `exp(v z)` truncated at degree `k`.
    pub fn exponential(v: T, k: usize) -> Self {
        let mut coeffs = Vec::with_capacity(k + 1);
        let mut c = T::one();
        coeffs.push(c);
        for j in 1..=k {
            c = c * v / T::from_usize(j);
            coeffs.push(c);
        }
        let va = v.to_f64().abs();
        let mut term = c.to_f64().abs();
        let mut tail = 0.0;
        for j in k + 1..k + 2000 {
            term *= va / j as f64;
            tail += term;
            if term <= tail * 1e-17 || term == 0.0 {
                break;
            }
        }
        Self::from_parts(coeffs, tail)
    }

    /// Truncation degree `K`.
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn coeff(&self, j: usize) -> T {
        self.coeffs.get(j).copied().unwrap_or_else(T::zero)
    }

    pub fn tail_estimate(&self) -> f64 {
        self.tail
    }

    pub fn with_tail(mut self, tail: f64) -> Self {
        self.tail = tail;
        self
    }

    pub fn value_at_zero(&self) -> T {
        self.coeffs[0]
    }

    /// Horner evaluation of the truncated polynomial.
    pub fn eval(&self, z: T) -> T {
        self.coeffs
            .iter()
            .rev()
            .fold(T::zero(), |acc, &c| acc * z + c)
    }

    /// `Σ |c_k|`.
    pub fn l1_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.to_f64().abs()).sum()
    }

    pub fn to_f64(&self) -> TruncatedSeries<f64> {
        TruncatedSeries::from_parts(self.coeffs.iter().map(|c| c.to_f64()).collect(), self.tail)
    }

    /// Converts to another scalar type.
    pub fn convert<U: Real>(&self) -> TruncatedSeries<U> {
        TruncatedSeries::from_parts(
            self.coeffs
                .iter()
                .map(|c| U::from_f64(c.to_f64()))
                .collect(),
            self.tail,
        )
    }

    /// Changes the truncation degree. Dropped coefficients go into the tail.
    pub fn resized(&self, k: usize) -> Self {
        let mut coeffs = self.coeffs.clone();
        let mut tail = self.tail;
        if k < self.degree() {
            tail += coeffs[k + 1..]
                .iter()
                .map(|c| c.to_f64().abs())
                .sum::<f64>();
        }
        coeffs.resize(k + 1, T::zero());
        Self::from_parts(coeffs, tail)
    }

    fn check_same_degree(&self, other: &Self) -> Result<()> {
        if self.degree() == other.degree() {
            Ok(())
        } else {
            Err(invalid(format!(
                "degree mismatch: {} vs {}",
                self.degree(),
                other.degree()
            )))
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_degree(other)?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(&a, &b)| a + b)
            .collect();
        Ok(Self::from_parts(coeffs, self.tail + other.tail))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_degree(other)?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(&a, &b)| a - b)
            .collect();
        Ok(Self::from_parts(coeffs, self.tail + other.tail))
    }

    /// Multiplies every coefficient by `c`.
    pub fn scale(&self, c: T) -> Self {
        Self::from_parts(
            self.coeffs.iter().map(|&a| a * c).collect(),
            self.tail * c.to_f64().abs(),
        )
    }

    /// Truncated product.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_same_degree(other)?;
        let k = self.degree();
        let mut coeffs = vec![T::zero(); k + 1];
        let mut dropped = 0.0;
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in other.coeffs.iter().enumerate() {
                if i + j <= k {
                    coeffs[i + j] += a * b;
                } else {
                    dropped += (a * b).to_f64().abs();
                }
            }
        }
        let (na, nb) = (self.l1_norm(), other.l1_norm());
        let tail = dropped + self.tail * (nb + other.tail) + other.tail * na;
        Ok(Self::from_parts(coeffs, tail))
    }

    /// `f(s z)`: coefficient `k` becomes `c_k s^k`.
    pub fn scale_argument(&self, s: T) -> Self {
        let mut p = T::one();
        let mut coeffs = Vec::with_capacity(self.coeffs.len());
        for &c in &self.coeffs {
            coeffs.push(c * p);
            p *= s;
        }
        let sa = s.to_f64().abs();
        let tail = if self.tail == 0.0 {
            0.0
        } else if sa <= 1.0 {
            self.tail * sa.powi(self.degree() as i32)
        } else {
            f64::INFINITY
        };
        Self::from_parts(coeffs, tail)
    }

    /// Divides by `c_0`, returning the normalized series and `c_0`.
    pub fn normalized(&self) -> Result<(Self, T)> {
        let c0 = self.coeffs[0];
        if !(c0.abs() > T::zero()) {
            return Err(Error::ZeroConstantTerm);
        }
        let inv = T::one() / c0;
        Ok((self.scale(inv), c0))
    }

    /// Truncated power `f^p`, default route.
    pub fn pow_integer(&self, p: u32) -> Result<Self> {
        self.pow_integer_via(p, PowRoute::Auto)
    }

    pub fn pow_integer_via(&self, p: u32, route: PowRoute) -> Result<Self> {
        if p == 0 {
            return Err(invalid("power must be at least 1"));
        }
        let c0 = self.coeffs[0];
        let use_log = match route {
            PowRoute::Auto => false,
            PowRoute::LogExp => {
                if !(c0 > T::zero()) {
                    return Err(Error::ZeroConstantTerm);
                }
                true
            }
            PowRoute::Convolution => false,
        };
        let mut out = if use_log {
            let inv = T::one() / c0;
            let g = self.scale(inv);
            let l = g.log_coefficients();
            let pl: Vec<T> = l.iter().map(|&x| x * T::from_f64(p as f64)).collect();
            let e = exp_coefficients(&pl, T::one());
            let c0p = c0.powi(p as i32);
            let mut coeffs: Vec<T> = e.into_iter().map(|x| x * c0p).collect();
            if self.tail == 0.0 {
                // exact polynomial: the power has known degree, drop rounding noise above it
                let d = self
                    .coeffs
                    .iter()
                    .rposition(|c| *c != T::zero())
                    .unwrap_or(0);
                for c in coeffs.iter_mut().skip(d * p as usize + 1) {
                    *c = T::zero();
                }
            }
            Self::from_parts(coeffs, 0.0)
        } else {
            let mut base = self.clone().with_tail(0.0);
            let mut acc: Option<Self> = None;
            let mut m = p;
            while m > 0 {
                if m & 1 == 1 {
                    acc = Some(match acc {
                        Some(a) => a.mul(&base)?,
                        None => base.clone(),
                    });
                }
                m >>= 1;
                if m > 0 {
                    base = base.mul(&base)?;
                }
            }
            acc.expect("p >= 1")
        };
        out.tail = self.pow_tail(p);
        Ok(out)
    }

    /// Mass past degree `K` of `|f|^p` plus the propagated input tail.
    fn pow_tail(&self, p: u32) -> f64 {
        let k = self.degree();
        let abs: Vec<f64> = self.coeffs.iter().map(|c| c.to_f64().abs()).collect();
        let mut full = abs.clone();
        for _ in 1..p {
            full = convolve_full(&full, &abs);
        }
        let dropped: f64 = full.iter().skip(k + 1).sum();
        let l1 = self.l1_norm();
        let carried = if self.tail > 0.0 {
            p as f64 * self.tail * (l1 + self.tail).powi(p as i32 - 1)
        } else {
            0.0
        };
        dropped + carried
    }

    /// Coefficients of `log f` with `c_0 = 1` assumed by the caller for index 0.
    fn log_coefficients(&self) -> Vec<T> {
        let k = self.degree();
        let c = &self.coeffs;
        let c0 = c[0];
        let mut l = vec![T::zero(); k + 1];
        l[0] = c0.ln();
        for m in 1..=k {
            let mut acc = T::from_usize(m) * c[m];
            for j in 1..m {
                acc -= T::from_usize(j) * l[j] * c[m - j];
            }
            l[m] = acc / (T::from_usize(m) * c0);
        }
        l
    }

    /// Series of `log f`; needs `c_0 > 0`.
    pub fn log(&self) -> Result<Self> {
        let c0 = self.coeffs[0];
        if !(c0 > T::zero()) {
            return Err(Error::ZeroConstantTerm);
        }
        let tail = self.tail / c0.to_f64();
        Ok(Self::from_parts(self.log_coefficients(), tail))
    }

    /// Series of `exp f`.
    pub fn exp(&self) -> Self {
        let e0 = self.coeffs[0].exp();
        let coeffs = exp_coefficients(&self.coeffs, e0);
        let out = Self::from_parts(coeffs, 0.0);
        let tail = self.tail * out.l1_norm();
        out.with_tail(tail)
    }

    /// `φ^(k) = k! · [z^k] log f` for `k = 1..=upto`.
    pub fn log_derivatives(&self, upto: usize) -> Result<LogDerivs<T>> {
        if upto > self.degree() {
            return Err(invalid(format!(
                "upto = {upto} exceeds truncation degree {}",
                self.degree()
            )));
        }
        if !(self.coeffs[0] > T::zero()) {
            return Err(Error::ZeroConstantTerm);
        }
        let head = Self::from_parts(self.coeffs[..=upto].to_vec(), 0.0);
        let l = head.log_coefficients();
        let mut fact = T::one();
        let mut phi = Vec::with_capacity(upto);
        for (m, &lm) in l.iter().enumerate().skip(1) {
            fact *= T::from_usize(m);
            phi.push(lm * fact);
        }
        Ok(LogDerivs { phi })
    }

    /// `max_k b^{-k} k! |c_k|` over the stored degrees.
    pub fn norm_b(&self, b: f64) -> BNorm {
        let lb = b.ln();
        let mut best = f64::NEG_INFINITY;
        let mut argmax = 0;
        for (k, c) in self.coeffs.iter().enumerate() {
            let a = c.to_f64().abs();
            if a == 0.0 {
                continue;
            }
            let v = ln_factorial(k) + a.ln() - k as f64 * lb;
            if v > best {
                best = v;
                argmax = k;
            }
        }
        let value = if best == f64::NEG_INFINITY {
            0.0
        } else {
            best.exp()
        };
        BNorm {
            value,
            argmax,
            tail: self.tail,
            truncation_dominated: argmax == self.degree() && self.degree() > 0,
        }
    }

    /// `f^(k)(0) = k! c_k`.
    pub fn derivative_at_zero(&self, k: usize) -> T {
        self.coeff(k) * T::from_f64(factorial_f64(k))
    }
}

/// Coefficients of `exp(l)` given `l` and `e_0 = exp(l_0)`.
fn exp_coefficients<T: Real>(l: &[T], e0: T) -> Vec<T> {
    let k = l.len() - 1;
    let mut e = vec![T::zero(); k + 1];
    e[0] = e0;
    for m in 1..=k {
        let mut acc = T::zero();
        for j in 1..=m {
            acc += T::from_usize(j) * l[j] * e[m - j];
        }
        e[m] = acc / T::from_usize(m);
    }
    e
}

impl<T: Real> LogDerivs<T> {
    /// `φ^(k)`, 1-based.
    pub fn get(&self, k: usize) -> T {
        self.phi[k - 1]
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    /// Largest amount by which `(-1)^(k-1) φ^(k) >= 0` fails, over `k <= upto`.
    ///
    /// Each term is divided by `max(1, |φ^(1)|)^k`, the natural size of `φ^(k)`,
    /// so the value does not depend on rescaling the argument.
    pub fn sign_rule_violation(&self, upto: usize) -> f64 {
        let scale = self.phi.first().map_or(1.0, |p| p.to_f64().abs().max(1.0));
        self.phi
            .iter()
            .take(upto)
            .enumerate()
            .map(|(i, &p)| {
                let signed = if i % 2 == 0 { p } else { -p };
                (-signed.to_f64()).max(0.0) / scale.powi(i as i32 + 1)
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SeriesRepr {
    #[serde(rename = "K")]
    k: usize,
    coeffs: Vec<f64>,
    tail: f64,
}

impl<T: Real> Serialize for TruncatedSeries<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        SeriesRepr {
            k: self.degree(),
            coeffs: self.coeffs.iter().map(|c| c.to_f64()).collect(),
            tail: self.tail,
        }
        .serialize(serializer)
    }
}

impl<'de, T: Real> Deserialize<'de> for TruncatedSeries<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let r = SeriesRepr::deserialize(deserializer)?;
        if r.coeffs.len() != r.k + 1 {
            return Err(serde::de::Error::custom(format!(
                "expected {} coefficients, found {}",
                r.k + 1,
                r.coeffs.len()
            )));
        }
        TruncatedSeries::from_f64_coeffs(&r.coeffs, r.tail).map_err(serde::de::Error::custom)
    }
}
