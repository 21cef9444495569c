//! Probabilistic side: isotropic transforms, hierarchical measure recursions
//! on a grid, and the limit verdicts for abnormal and classical normalization.

use serde::{Deserialize, Serialize};

use crate::critical::{find_beta_star, SearchOptions};
use crate::dynamics::{
    run_orbit_with_precision, step_t, EvolutionParams, Orbit, Termination, Variant,
};
use crate::error::{invalid, Error, Result};
use crate::laguerre::LaguerreFactored;
use crate::precision::Precision;
use crate::series::TruncatedSeries;

/// Largest tolerated probability mass near the edges of a grid.
pub const MASS_LEAK_TOL: f64 = 1e-8;

/// `θ = (N + d)/2`.
pub fn theta_from_dimension(n: u32, d: f64) -> Result<f64> {
    if n == 0 {
        return Err(invalid("dimension must be positive"));
    }
    if !(d >= -(n as f64)) {
        return Err(invalid(format!("d = {d} must be at least -N = -{n}")));
    }
    Ok((n as f64 + d) / 2.0)
}

/// Radial profile `f` of an isotropic transform `F(x) = f((x, x))` on `R^N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsotropicTransform {
    pub f: TruncatedSeries,
    #[serde(rename = "N")]
    pub n: u32,
}

impl IsotropicTransform {
    pub fn new(f: TruncatedSeries, n: u32) -> Result<Self> {
        if n == 0 {
            return Err(invalid("dimension must be positive"));
        }
        Ok(IsotropicTransform { f, n })
    }

    /// `F(x)` at a point with `|x|^2 = r2`.
    pub fn eval_radial(&self, r2: f64) -> f64 {
        self.f.eval(r2)
    }
}

/// `E|Y|^2 = 2N f'(0)` of the measure with transform `tr`.
pub fn second_moment(tr: &IsotropicTransform) -> Result<f64> {
    let c0 = tr.f.coeff(0);
    if (c0 - 1.0).abs() > 1e-12 {
        return Err(Error::NotNormalized { value: c0 });
    }
    Ok(2.0 * tr.n as f64 * tr.f.coeff(1))
}

/// Dimension, drift and depth of the hierarchy together with the map parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HierarchyParams {
    #[serde(rename = "N")]
    pub n: u32,
    #[serde(default)]
    pub d: f64,
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(flatten)]
    pub evolution: EvolutionParams,
}

fn default_depth() -> usize {
    400
}

impl HierarchyParams {
    /// Sets `θ` of the inner parameters from `N` and `d`.
    pub fn new(n: u32, d: f64, evolution: EvolutionParams) -> Result<Self> {
        let theta = theta_from_dimension(n, d)?;
        let mut evolution = evolution;
        evolution.theta = theta;
        Ok(HierarchyParams {
            n,
            d,
            depth: default_depth(),
            evolution,
        })
    }

    pub fn with_depth(mut self, depth: usize) -> Self {
        self.depth = depth;
        self
    }

    pub fn theta(&self) -> Result<f64> {
        theta_from_dimension(self.n, self.d)
    }

    pub fn validate(&self) -> Result<()> {
        let theta = self.theta()?;
        if (theta - self.evolution.theta).abs() > 1e-12 {
            return Err(invalid(format!(
                "theta = {} disagrees with (N + d)/2 = {theta}",
                self.evolution.theta
            )));
        }
        self.evolution.validate()
    }
}

/// Which normalization of the block sums is used.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// Sums divided by `δ^{(1+λ)/2}`, weight `exp((τ/4) y^2)`.
    Abnormal,
    /// Sums divided by `√δ`, weight `exp((δ^{-nλ} τ/4) y^2)` at level `n`.
    Classical,
}

/// A probability density of one real variable sampled on `y_i = (i - mid)·h`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridDensity {
    pub spacing: f64,
    pub values: Vec<f64>,
}

impl GridDensity {
    /// Symmetric grid `[-half_width, half_width]` filled from `density`.
    pub fn from_fn(half_width: f64, spacing: f64, density: impl Fn(f64) -> f64) -> Result<Self> {
        if !(spacing > 0.0 && half_width > spacing) {
            return Err(invalid("grid needs 0 < spacing < half_width"));
        }
        let m = (half_width / spacing).round() as usize;
        let values = (0..=2 * m)
            .map(|i| density((i as f64 - m as f64) * spacing))
            .collect();
        Ok(GridDensity { spacing, values })
    }

    pub fn gaussian(variance: f64, half_width: f64, spacing: f64) -> Result<Self> {
        let norm = (2.0 * std::f64::consts::PI * variance).sqrt();
        Self::from_fn(half_width, spacing, |y| {
            (-y * y / (2.0 * variance)).exp() / norm
        })
    }

    /// `½N(a, s²) + ½N(-a, s²)`.
    pub fn symmetric_mixture(a: f64, s: f64, half_width: f64, spacing: f64) -> Result<Self> {
        let norm = 2.0 * (2.0 * std::f64::consts::PI).sqrt() * s;
        Self::from_fn(half_width, spacing, |y| {
            ((-(y - a).powi(2) / (2.0 * s * s)).exp() + (-(y + a).powi(2) / (2.0 * s * s)).exp())
                / norm
        })
    }

    fn mid(&self) -> usize {
        self.values.len() / 2
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let mid = self.mid() as f64;
        self.values
            .iter()
            .enumerate()
            .map(move |(i, &v)| ((i as f64 - mid) * self.spacing, v))
    }

    pub fn mass(&self) -> f64 {
        self.spacing * self.values.iter().sum::<f64>()
    }

    pub fn moment(&self, k: i32) -> f64 {
        self.spacing * self.points().map(|(y, v)| y.powi(k) * v).sum::<f64>()
    }

    /// Mass in the outer tenth of the grid on each side.
    pub fn edge_mass(&self) -> f64 {
        let n = self.values.len();
        let edge = (n / 10).max(1);
        let s: f64 = self.values[..edge]
            .iter()
            .chain(&self.values[n - edge..])
            .sum();
        s * self.spacing
    }

    /// Density at `y` by linear interpolation, zero off the grid.
    pub fn density_at(&self, y: f64) -> f64 {
        let pos = y / self.spacing + self.mid() as f64;
        if pos < 0.0 || pos > (self.values.len() - 1) as f64 {
            return 0.0;
        }
        let i = pos.floor() as usize;
        if i + 1 >= self.values.len() {
            return self.values[i];
        }
        let w = pos - i as f64;
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }

    /// `∫ e^{x y} μ(dy)` by the rectangle rule.
    pub fn laplace(&self, x: f64) -> f64 {
        self.spacing * self.points().map(|(y, v)| (x * y).exp() * v).sum::<f64>()
    }

    fn convolve(&self, other: &GridDensity) -> GridDensity {
        let (a, b) = (&self.values, &other.values);
        let mut out = vec![0.0; a.len() + b.len() - 1];
        for (i, &x) in a.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (j, &y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        for v in &mut out {
            *v *= self.spacing;
        }
        GridDensity {
            spacing: self.spacing,
            values: out,
        }
    }

    /// Drops leading and trailing entries below `floor`.
    fn trimmed(mut self, floor: f64) -> GridDensity {
        let n = self.values.len();
        let mid = n / 2;
        let keep = (0..mid)
            .find(|&i| self.values[i] > floor || self.values[n - 1 - i] > floor)
            .unwrap_or(mid);
        self.values = self.values[keep..n - keep].to_vec();
        self
    }
}

/// One level of the hierarchical measure recursion for `N = 1`.
///
/// `level` is the index `n` of the produced measure; it only enters the
/// classical weight. `tau` is the map parameter, so the weight is `τ/4`.
pub fn measure_step_oracle(
    mu: &GridDensity,
    hp: &HierarchyParams,
    normalization: Normalization,
    level: usize,
) -> Result<GridDensity> {
    if hp.n != 1 {
        return Err(invalid("the grid oracle supports N = 1 only"));
    }
    if mu.values.len().is_multiple_of(2) {
        return Err(invalid(
            "grid must be symmetric with an odd number of points",
        ));
    }
    let p = &hp.evolution;
    let d = p.delta as f64;
    let tau = p.tau();
    let (scale, weight) = match normalization {
        Normalization::Abnormal => (d.powf(0.5 * (1.0 + p.lambda)), 0.25 * tau),
        Normalization::Classical => (d.sqrt(), 0.25 * tau * d.powf(-(level as f64) * p.lambda)),
    };
    let mut sum = mu.clone();
    for _ in 1..p.delta {
        sum = sum.convolve(mu);
    }
    let peak = sum.values.iter().cloned().fold(0.0, f64::max);
    let sum = sum.trimmed(peak * 1e-300);
    let mut out = GridDensity {
        spacing: sum.spacing / scale,
        values: sum.values.iter().map(|v| v * scale).collect(),
    };
    let pts: Vec<f64> = out.points().map(|(y, _)| y).collect();
    for (v, y) in out.values.iter_mut().zip(pts) {
        *v *= (weight * y * y).exp();
    }
    let m = out.mass();
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::MassLeak { mass: m });
    }
    for v in &mut out.values {
        *v /= m;
    }
    let leak = out.edge_mass();
    if leak > MASS_LEAK_TOL {
        return Err(Error::MassLeak { mass: leak });
    }
    Ok(out)
}

/// Same as [`measure_step_oracle`] iterated `levels` times.
pub fn measure_orbit_oracle(
    mu0: &GridDensity,
    hp: &HierarchyParams,
    normalization: Normalization,
    levels: usize,
) -> Result<Vec<GridDensity>> {
    let mut out = vec![mu0.clone()];
    for n in 1..=levels {
        let next = measure_step_oracle(&out[n - 1], hp, normalization, n)?;
        out.push(next);
    }
    Ok(out)
}

/// Radial profile of the transform of `½N(a, s²) + ½N(-a, s²)`:
/// `e^{s² z/2} cosh(a √z)`.
pub fn mixture_profile(a: f64, s: f64, k: usize) -> TruncatedSeries {
    let mut ch = vec![0.0; k + 1];
    let mut term = 1.0;
    for (j, c) in ch.iter_mut().enumerate() {
        if j > 0 {
            term *= a * a / ((2 * j - 1) as f64 * (2 * j) as f64);
        }
        *c = term;
    }
    let cosh = TruncatedSeries::from_f64_coeffs(&ch, 0.0).expect("finite coefficients");
    let gauss = TruncatedSeries::exponential(0.5 * s * s, k);
    gauss.mul(&cosh).expect("same truncation order")
}

/// Normalized transform profiles `f_n / f_n(0)` for `n = 0..=levels` under `T`.
pub fn transform_orbit(
    f0: &TruncatedSeries,
    p: &EvolutionParams,
    levels: usize,
) -> Result<Vec<TruncatedSeries>> {
    let mut out = vec![f0.normalized()?.0];
    for n in 1..=levels {
        let next = step_t(&out[n - 1], p, 1.0)?;
        out.push(next.normalized()?.0);
    }
    Ok(out)
}

/// Limit of the measure sequence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "lowercase")]
pub enum Verdict {
    Degenerate,
    Gaussian { variance: f64 },
    Divergent,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LimitReport {
    #[serde(flatten)]
    pub verdict: Verdict,
    pub normalization: Normalization,
    pub tau: f64,
    pub tau_star: f64,
    /// `φ^(1..=3)` of the record the verdict was read from.
    pub log_derivs: Vec<f64>,
    pub step: usize,
    /// `φ̃_0^(1) ∏ ν_n` along a classical orbit.
    pub tilde_bound: Option<f64>,
}

/// Runs an orbit, keeping the steps before a truncation failure.
fn run_orbit_prefix(
    seed: &LaguerreFactored,
    p: &EvolutionParams,
    variant: Variant,
    precision: Precision,
) -> Result<Orbit> {
    match run_orbit_with_precision(seed, p, variant, precision) {
        Err(Error::TruncationFailure { step, .. }) if step > 1 => {
            run_orbit_with_precision(seed, &p.with_n_max(step - 1), variant, precision)
        }
        other => other,
    }
}

/// Record minimizing `|φ2|`, ties broken by the latest step.
fn most_converged(orbit: &Orbit) -> usize {
    let mut best = 0;
    for (i, r) in orbit.records.iter().enumerate() {
        if r.phi2.abs() <= orbit.records[best].phi2.abs() {
            best = i;
        }
    }
    best
}

/// Record minimizing `|φ1/u - 1| + |φ2|/u²`.
fn closest_to_rate(orbit: &Orbit, u: f64) -> usize {
    let dist = |i: usize| {
        let r = &orbit.records[i];
        (r.phi1 / u - 1.0).abs() + r.phi2.abs() / (u * u)
    };
    (0..orbit.records.len())
        .min_by(|&a, &b| dist(a).total_cmp(&dist(b)))
        .unwrap_or(0)
}

fn log_derivs_of(orbit: &Orbit, idx: usize) -> Result<Vec<f64>> {
    let ld = orbit.records[idx].series.log_derivatives(3)?;
    Ok((1..=3).map(|k| ld.get(k)).collect())
}

/// Gaussian-or-degenerate verdict for the measure sequence started at the
/// measure whose radial transform is `seed`.
pub fn limit_verdict(
    seed: &LaguerreFactored,
    hp: &HierarchyParams,
    normalization: Normalization,
    opts: &SearchOptions,
) -> Result<LimitReport> {
    hp.validate()?;
    let p = hp.evolution;
    let tau = p.tau();
    let crit = find_beta_star(seed, &p, opts)?;
    let tau_star = crit.tau_star;
    let n2 = 2.0 * hp.n as f64;
    let tol = 1e-10;
    let run = p.with_n_max(hp.depth).with_tol(tol);
    if tau > tau_star * (1.0 + 1e-9) {
        return Ok(LimitReport {
            verdict: Verdict::Divergent,
            normalization,
            tau,
            tau_star,
            log_derivs: Vec::new(),
            step: 0,
            tilde_bound: None,
        });
    }
    match normalization {
        Normalization::Abnormal => {
            // at a numerically located β_* the orbit leaves the fixed point eventually,
            // with errors growing like δ^{λn}
            let width = crit.bracket.width().max(1e-12 * crit.beta_star);
            let critical = (p.beta - crit.beta_star).abs() <= width;
            let precision = match opts.precision {
                Precision::Auto if critical => Precision::Extended,
                Precision::Auto => Precision::Double,
                other => other,
            };
            // the normalized orbit keeps φ1 near 1, so its type stays small for truncation
            let (variant, scale) = if p.beta > 0.0 {
                (Variant::Q, p.beta)
            } else {
                (Variant::T, 1.0)
            };
            let orbit = run_orbit_prefix(seed, &run, variant, precision)?;
            let u_star = 1.0 / p.beta;
            let idx = if critical {
                closest_to_rate(&orbit, u_star * scale)
            } else {
                match orbit.termination {
                    Termination::Converged { step } => step,
                    _ => most_converged(&orbit),
                }
            };
            let rec = &orbit.records[idx];
            let log_derivs: Vec<f64> = log_derivs_of(&orbit, idx)?
                .into_iter()
                .zip(1..)
                .map(|(v, k)| v / scale.powi(k))
                .collect();
            let phi1 = log_derivs[0];
            let phi2 = log_derivs[1].abs() / (u_star * u_star);
            let verdict = if phi1.abs() < 1e-6 * u_star && phi2 < 1e-6 {
                Verdict::Degenerate
            } else if (phi1 / u_star - 1.0).abs() < 1e-3 && phi2 < 1e-6 {
                Verdict::Gaussian {
                    variance: n2 * phi1,
                }
            } else {
                Verdict::Divergent
            };
            Ok(LimitReport {
                verdict,
                normalization,
                tau,
                tau_star,
                log_derivs,
                step: rec.n,
                tilde_bound: None,
            })
        }
        Normalization::Classical => {
            if !(p.beta > 0.0) {
                return Err(invalid("classical limit needs tau > 0"));
            }
            let precision = match opts.precision {
                Precision::Extended => Precision::Extended,
                _ => Precision::Double,
            };
            let orbit = run_orbit_prefix(seed, &run, Variant::QTilde, precision)?;
            let converged = matches!(orbit.termination, Termination::Converged { .. });
            let idx = match orbit.termination {
                Termination::Converged { step } => step,
                _ => most_converged(&orbit),
            };
            let rec = &orbit.records[idx];
            let bound = orbit.records[0].phi1
                * orbit.records[1..=idx]
                    .iter()
                    .map(|r| r.nu.unwrap_or(1.0))
                    .product::<f64>();
            let verdict = if converged && rec.phi1 > 0.0 && rec.phi2.abs() < 1e-6 {
                Verdict::Gaussian {
                    variance: n2 * rec.phi1 / p.beta,
                }
            } else {
                Verdict::Divergent
            };
            Ok(LimitReport {
                verdict,
                normalization,
                tau,
                tau_star,
                log_derivs: log_derivs_of(&orbit, idx)?,
                step: rec.n,
                tilde_bound: Some(bound),
            })
        }
    }
}
