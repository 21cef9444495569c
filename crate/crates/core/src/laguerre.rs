//! Laguerre entire functions in factored form `C z^m e^{αz} ∏(1 + γ_j z)`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::precision::Real;
use crate::series::TruncatedSeries;

/// Closed interval `[lo, hi]`; `hi` may be infinite.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FactoredRepr {
    #[serde(rename = "C")]
    c: f64,
    #[serde(default)]
    m: u32,
    #[serde(default)]
    alpha: f64,
    #[serde(default)]
    gammas: Vec<f64>,
}

impl TryFrom<FactoredRepr> for LaguerreFactored {
    type Error = Error;

    fn try_from(r: FactoredRepr) -> Result<Self> {
        LaguerreFactored::new(r.c, r.m, r.alpha, r.gammas)
    }
}

/// A finite instance of the canonical product representation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FactoredRepr")]
pub struct LaguerreFactored {
    #[serde(rename = "C")]
    c: f64,
    m: u32,
    alpha: f64,
    gammas: Vec<f64>,
}

/// Constants attached to a member of the class `L(λ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassConstants {
    pub epsilon: f64,
    pub theta_lambda: f64,
    pub sigma: f64,
    pub phi1: f64,
    pub phi2: f64,
}

/// Outcome of [`LaguerreFactored::in_class_lambda`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Membership {
    pub member: bool,
    /// `m_2 / (α + m_1)^2`.
    pub ratio: f64,
    /// `m_2 / m_1^2`.
    pub ratio_no_alpha: f64,
    /// Present when `member` is true.
    pub constants: Option<ClassConstants>,
}

/// `ϑ(λ) = (1 - δ^{-ε}) / (δ^λ - δ^{-ε})` with `ε = (1 - 2λ)/4`.
pub fn theta_lambda(delta: u32, lambda: f64) -> f64 {
    let d = delta as f64;
    let eps = (1.0 - 2.0 * lambda) / 4.0;
    (1.0 - d.powf(-eps)) / (d.powf(lambda) - d.powf(-eps))
}

impl LaguerreFactored {
    /// Validates and sorts `gammas` into nonincreasing order.
    pub fn new(c: f64, m: u32, alpha: f64, mut gammas: Vec<f64>) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(invalid("C must be positive and finite"));
        }
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(invalid("alpha must be nonnegative and finite"));
        }
        if gammas.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(invalid("gammas must be nonnegative and finite"));
        }
        gammas.sort_by(|a, b| b.total_cmp(a));
        Ok(LaguerreFactored {
            c,
            m,
            alpha,
            gammas,
        })
    }

    /// `C e^{αz}`.
    pub fn exponential(c: f64, alpha: f64) -> Result<Self> {
        Self::new(c, 0, alpha, Vec::new())
    }

    /// `∏(1 + γ_j z)` with `g(0) = 1`.
    pub fn product(gammas: Vec<f64>) -> Result<Self> {
        Self::new(1.0, 0, 0.0, gammas)
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    pub fn value_at_zero(&self) -> f64 {
        if self.m == 0 {
            self.c
        } else {
            0.0
        }
    }

    /// `C z^m e^{αz} ∏(1 + γ_j z)`.
    pub fn value_at(&self, z: f64) -> f64 {
        let prod: f64 = self.gammas.iter().map(|g| 1.0 + g * z).product();
        self.c * z.powi(self.m as i32) * (self.alpha * z).exp() * prod
    }

    /// No finite zeros: a member of the exponential family.
    pub fn is_exponential(&self) -> bool {
        self.m == 0 && self.gammas.iter().all(|&g| g == 0.0)
    }

    /// `g(βz)`.
    pub fn rescaled(&self, beta: f64) -> Result<Self> {
        Self::new(
            self.c * beta.powi(self.m as i32),
            self.m,
            self.alpha * beta,
            self.gammas.iter().map(|g| g * beta).collect(),
        )
    }

    /// Same function with a different front constant.
    pub fn with_c(&self, c: f64) -> Result<Self> {
        Self::new(c, self.m, self.alpha, self.gammas.clone())
    }

    /// Power sums `m_k = Σ γ_j^k` for `k = 1..=kmax`.
    pub fn moments(&self, kmax: usize) -> Vec<f64> {
        (1..=kmax)
            .map(|k| self.gammas.iter().map(|g| g.powi(k as i32)).sum())
            .collect()
    }

    /// The admissible coupling interval `I(g)`.
    pub fn coupling_interval(&self, delta: u32, lambda: f64) -> Interval {
        if self.alpha > 0.0 {
            Interval::new(0.0, ((delta as f64).powf(lambda) - 1.0) / self.alpha)
        } else {
            Interval::new(0.0, f64::INFINITY)
        }
    }

    /// Exact `φ^(k)` for `k = 1..=kmax` from the moments (requires `m = 0`).
    pub fn exact_log_derivatives(&self, kmax: usize) -> Vec<f64> {
        let mk = self.moments(kmax);
        let mut fact = 1.0;
        (1..=kmax)
            .map(|k| {
                if k > 1 {
                    fact *= (k - 1) as f64;
                }
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                let base = sign * fact * mk[k - 1];
                if k == 1 {
                    base + self.alpha
                } else {
                    base
                }
            })
            .collect()
    }

    fn check_normalized(&self) -> Result<()> {
        let v = self.value_at_zero();
        if (v - 1.0).abs() > 1e-12 {
            return Err(Error::NotNormalized { value: v });
        }
        Ok(())
    }

    /// Tests both inequalities defining `L(λ)` and computes the corridor constants.
    pub fn in_class_lambda(&self, theta: f64, delta: u32, lambda: f64) -> Result<Membership> {
        if !(lambda > 0.0 && lambda < 0.5) {
            return Err(invalid("lambda must lie in (0, 1/2)"));
        }
        if delta < 2 {
            return Err(invalid("delta must be at least 2"));
        }
        self.check_normalized()?;
        if self.gammas.iter().all(|&g| g == 0.0) {
            return Err(Error::DegenerateInput(
                "no finite zeros: exponential family member".into(),
            ));
        }
        let mk = self.moments(2);
        let (m1, m2) = (mk[0], mk[1]);
        let ratio = m2 / (self.alpha + m1).powi(2);
        let ratio_no_alpha = m2 / (m1 * m1);
        let d = delta as f64;
        let pref = d.sqrt() / (theta + 1.0);
        let tl = theta_lambda(delta, lambda);
        let member = ratio <= pref * tl && ratio_no_alpha <= pref;
        let constants = member.then(|| class_constants(ratio, theta, delta, lambda));
        Ok(Membership {
            member,
            ratio,
            ratio_no_alpha,
            constants,
        })
    }

    /// Truncated series of the represented function.
    pub fn to_series<T: Real>(&self, k: usize) -> TruncatedSeries<T> {
        let mut s = TruncatedSeries::<T>::exponential(T::from_f64(self.alpha), k)
            .scale(T::from_f64(self.c));
        for &g in &self.gammas {
            let gt = T::from_f64(g);
            let c = s.coeffs();
            let dropped = c[k].to_f64().abs() * g;
            let mut next = c.to_vec();
            for j in (1..=k).rev() {
                next[j] += gt * c[j - 1];
            }
            let tail = s.tail_estimate() * (1.0 + g) + dropped;
            s = TruncatedSeries::from_parts(next, tail);
        }
        if self.m > 0 {
            let m = self.m as usize;
            let c = s.coeffs();
            let mut next = vec![T::zero(); k + 1];
            let mut tail = s.tail_estimate();
            for (j, &cj) in c.iter().enumerate() {
                if j + m <= k {
                    next[j + m] = cj;
                } else {
                    tail += cj.to_f64().abs();
                }
            }
            s = TruncatedSeries::from_parts(next, tail);
        }
        s
    }
}

/// `σ`, `Φ^(1)`, `Φ^(2)` for a given ratio `r = m_2/(α + m_1)^2`.
pub fn class_constants(ratio: f64, theta: f64, delta: u32, lambda: f64) -> ClassConstants {
    let d = delta as f64;
    let dl = d.powf(lambda);
    let q = ratio * (theta + 1.0) / d.sqrt();
    let sigma = (1.0 - q * dl) / (1.0 - q);
    let phi1 = (1.0 - sigma / dl) / (1.0 - 1.0 / dl);
    let phi2 =
        -phi1 * d.powf(1.0 - lambda) / (theta + 1.0) * sigma * sigma * (1.0 - sigma) / (dl - 1.0);
    ClassConstants {
        epsilon: (1.0 - 2.0 * lambda) / 4.0,
        theta_lambda: theta_lambda(delta, lambda),
        sigma,
        phi1,
        phi2,
    }
}
