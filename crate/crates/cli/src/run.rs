use std::fmt::Write as _;
use std::path::PathBuf;

use lagrg::critical::{
    exponential_orbit_oracle, find_beta_star, linearization_eigenvalues, numeric_spectrum,
    trace_is_monotone, FixedPoint, FixedPointKind,
};
use lagrg::dynamics::{run_orbit_with_precision, Orbit, Variant};
use lagrg::limits::limit_verdict;
use lagrg::semigroup::{heat_apply, shift_identity, SemigroupParams};
use lagrg::TruncatedSeries;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Command, ExperimentConfig};
use crate::error::CliError;

/// Files to write and a one-line summary for the terminal.
pub struct Outcome {
    pub artifacts: Vec<(PathBuf, String)>,
    pub summary: String,
    /// Set when the artifacts were produced but the command still failed.
    pub failure: Option<CliError>,
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    match cfg.command {
        Command::Orbit => orbit(cfg),
        Command::FindCritical => find_critical(cfg),
        Command::Eigenvalues => eigenvalues(cfg),
        Command::Limit => limit(cfg),
        Command::OracleCheck => oracle_check(cfg),
    }
}

/// Shortest round-trip form; exponent notation outside `[1e-5, 1e16)`.
fn num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-5..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn csv_header(cfg: &ExperimentConfig, columns: &str) -> String {
    format!("# config: {}\n{columns}\n", cfg.to_json_line())
}

fn json_doc(cfg: &ExperimentConfig, body: Value) -> String {
    let mut doc = json!({ "config": cfg });
    if let (Value::Object(out), Value::Object(extra)) = (&mut doc, body) {
        out.extend(extra);
    }
    let mut s = serde_json::to_string_pretty(&doc).expect("output serializes");
    s.push('\n');
    s
}

fn to_value(x: &impl Serialize) -> Value {
    serde_json::to_value(x).expect("output serializes")
}

pub fn orbit_csv(cfg: &ExperimentConfig, orbit: &Orbit) -> String {
    let mut out = csv_header(cfg, "n,logC,phi1,phi2,nu,kappa,flags,tail_estimate");
    for r in &orbit.records {
        writeln!(
            out,
            "{},{},{},{},{},{},{}/{},{}",
            r.n,
            num(r.log_c),
            num(r.phi1),
            num(r.phi2),
            opt(r.nu),
            opt(r.kappa),
            r.flags.held,
            r.flags.evaluated,
            num(r.tail_estimate)
        )
        .unwrap();
    }
    out
}

fn orbit(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let p = cfg.evolution()?;
    let orbit = run_orbit_with_precision(&cfg.seed, &p, cfg.variant, cfg.precision())
        .map_err(CliError::core("dynamics", "run_orbit"))?;
    let summary = format!(
        "orbit: {} records, termination {:?}",
        orbit.records.len(),
        orbit.termination
    );
    let meta = json_doc(
        cfg,
        json!({
            "beta": p.beta,
            "tau": p.tau(),
            "steps": orbit.records.len() - 1,
            "termination": orbit.termination,
        }),
    );
    Ok(Outcome {
        artifacts: vec![
            (cfg.output_path("csv"), orbit_csv(cfg, &orbit)),
            (cfg.output_path("json"), meta),
        ],
        summary,
        failure: None,
    })
}

fn find_critical(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let p = cfg.evolution()?;
    let res = find_beta_star(&cfg.seed, &p, &cfg.search)
        .map_err(CliError::core("critical", "find_beta_star"))?;
    let summary = format!(
        "find-critical: beta_star = {}, tau_star = {}, zeta_star = {}",
        res.beta_star, res.tau_star, res.zeta_star
    );
    let doc = json_doc(
        cfg,
        json!({
            "result": res,
            "trace_monotone": trace_is_monotone(&res.trace),
        }),
    );
    Ok(Outcome {
        artifacts: vec![(cfg.output_path("json"), doc)],
        summary,
        failure: None,
    })
}

fn eigenvalues(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let p = cfg.evolution()?;
    let kmax = cfg.eigen.kmax;
    let fp = match cfg.eigen.fixed_point {
        FixedPointKind::Trivial => FixedPoint::trivial(cfg.variant),
        FixedPointKind::Critical => FixedPoint::critical(&p, cfg.variant)
            .map_err(CliError::core("critical", "fixed_point"))?,
    };
    let analytic = linearization_eigenvalues(&fp, &p, kmax);
    // a larger subspace sharpens the leading eigenvalues
    let subspace = (2 * kmax).min(p.k / 2).max(kmax);
    let numeric = numeric_spectrum(&fp, &p, subspace)
        .map_err(CliError::core("critical", "numeric_spectrum"))?;
    let mut out = csv_header(cfg, "k,analytic,numeric,abs_diff");
    let mut worst = 0f64;
    for (k, (a, b)) in analytic.iter().zip(&numeric).enumerate() {
        worst = worst.max((a - b).abs());
        writeln!(out, "{k},{},{},{}", num(*a), num(*b), num((a - b).abs())).unwrap();
    }
    Ok(Outcome {
        artifacts: vec![(cfg.output_path("csv"), out)],
        summary: format!("eigenvalues: k <= {kmax}, max |analytic - numeric| = {worst:.3e}"),
        failure: None,
    })
}

fn limit(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let hp = cfg.hierarchy()?;
    let report = limit_verdict(&cfg.seed, &hp, cfg.normalization, &cfg.search)
        .map_err(CliError::core("limits", "limit_verdict"))?;
    let summary = format!("limit: {:?} at step {}", report.verdict, report.step);
    let doc = json_doc(cfg, json!({ "report": report }));
    Ok(Outcome {
        artifacts: vec![(cfg.output_path("json"), doc)],
        summary,
        failure: None,
    })
}

#[derive(Serialize)]
struct Check {
    name: &'static str,
    cases: usize,
    max_error: f64,
    tolerance: f64,
    passed: bool,
}

impl Check {
    fn new(name: &'static str, cases: usize, max_error: f64, tolerance: f64) -> Self {
        Check {
            name,
            cases,
            max_error,
            tolerance,
            passed: max_error <= tolerance,
        }
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn shift_identity_check(cfg: &ExperimentConfig) -> Result<Check, CliError> {
    let k = cfg.params.k.max(128);
    let h: TruncatedSeries = cfg.seed.to_series(k);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.random_seed);
    let mut worst = 0f64;
    for _ in 0..cfg.oracle.cases {
        let v: f64 = rng.random_range(-1.0..1.0);
        let mut u: f64 = rng.random_range(0.0..1.0);
        // rounding in e^{vz} h carries type |v| + α, which the heat sum must absorb
        u = u.min(0.5 / (v.abs() + cfg.seed.alpha()));
        let theta: f64 = rng.random_range(0.0..3.0);
        let (rate, hu) = shift_identity(&h, v, u, theta)
            .map_err(CliError::core("semigroup", "shift_identity"))?;
        let f = TruncatedSeries::exponential(v, k)
            .mul(&h)
            .map_err(CliError::core("series", "mul"))?;
        let direct = heat_apply(&f, &SemigroupParams::new(theta, u))
            .map_err(CliError::core("semigroup", "heat_apply"))?;
        for z in [0.0, 0.25, 0.5, 1.0] {
            worst = worst.max(rel_err(direct.eval(z), (rate * z).exp() * hu.eval(z)));
        }
    }
    Ok(Check::new("shift_identity", cfg.oracle.cases, worst, 1e-9))
}

fn exponential_check(cfg: &ExperimentConfig) -> Result<Check, CliError> {
    let p = cfg.evolution()?;
    let orbit = run_orbit_with_precision(&cfg.seed, &p, Variant::T, cfg.precision())
        .map_err(CliError::core("dynamics", "run_orbit"))?;
    let mut worst = 0f64;
    for r in &orbit.records {
        let want = exponential_orbit_oracle(cfg.seed.c(), cfg.seed.alpha(), &p, r.n)
            .map_err(CliError::core("critical", "exponential_orbit_oracle"))?;
        worst = worst
            .max((r.log_c - want.log_c).abs() / want.log_c.abs().max(1.0))
            .max(rel_err(r.phi1, want.u));
    }
    Ok(Check::new(
        "exponential_orbit",
        orbit.records.len(),
        worst,
        1e-10,
    ))
}

fn sign_rule_check(cfg: &ExperimentConfig) -> Result<Check, CliError> {
    let p = cfg.evolution()?;
    let orbit = run_orbit_with_precision(&cfg.seed, &p, cfg.variant, cfg.precision())
        .map_err(CliError::core("dynamics", "run_orbit"))?;
    let worst = orbit
        .records
        .iter()
        .map(|r| r.sign_violation)
        .fold(0.0, f64::max);
    Ok(Check::new("sign_rule", orbit.records.len(), worst, 1e-9))
}

fn oracle_check(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let mut checks = vec![shift_identity_check(cfg)?];
    if cfg.seed.is_exponential() && cfg.seed.m() == 0 {
        checks.push(exponential_check(cfg)?);
    }
    if cfg.seed.m() == 0 {
        checks.push(sign_rule_check(cfg)?);
    }
    let failed: Vec<&str> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name)
        .collect();
    let passed = failed.is_empty();
    let mut summary = String::from("oracle-check:");
    for c in &checks {
        write!(
            summary,
            " {} {} ({:.2e});",
            c.name,
            if c.passed { "PASS" } else { "FAIL" },
            c.max_error
        )
        .unwrap();
    }
    summary.pop();
    let doc = json_doc(
        cfg,
        json!({ "checks": to_value(&checks), "passed": passed }),
    );
    Ok(Outcome {
        artifacts: vec![(cfg.output_path("json"), doc)],
        summary,
        failure: (!passed).then(|| CliError::OracleMismatch(failed.join(", "))),
    })
}
