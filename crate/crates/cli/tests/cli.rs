use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_lagrg"));
    c.env_remove("LAGRG_PRECISION");
    c
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn run(dir: &Path, config: &Path, extra: &[&str]) -> Output {
    bin()
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(dir.join("out"))
        .arg("--quiet")
        .args(extra)
        .output()
        .unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text
        .lines()
        .find(|l| l.starts_with('{'))
        .expect("error JSON on stderr");
    serde_json::from_str(line).unwrap()
}

/// Header-stripped CSV rows as maps from column name to raw field.
fn read_csv(path: &Path) -> (String, Vec<Vec<(String, String)>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_string();
    let cols: Vec<String> = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| {
            cols.iter()
                .cloned()
                .zip(l.split(',').map(String::from))
                .collect()
        })
        .collect();
    (header, rows)
}

fn field(row: &[(String, String)], name: &str) -> f64 {
    row.iter()
        .find(|(k, _)| k == name)
        .unwrap()
        .1
        .parse()
        .unwrap()
}

const FREE_ORBIT: &str = r#"{
  "schema_version": 1,
  "command": "orbit",
  "seed": {"C": 1.0, "alpha": 1.5},
  "params": {"theta": 1.0, "lambda": 0.25, "delta": 2, "tau": 0.0, "n_max": 12}
}"#;

#[test]
fn free_exponential_orbit_decays_geometrically() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "free.json", FREE_ORBIT);
    let out = run(tmp.path(), &cfg, &[]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let (header, rows) = read_csv(&tmp.path().join("out/orbit.csv"));
    let embedded: Value = serde_json::from_str(header.strip_prefix("# config: ").unwrap()).unwrap();
    assert_eq!(embedded["command"], "orbit");
    assert_eq!(embedded["params"]["n_max"], 12);
    assert_eq!(rows.len(), 13);
    for row in &rows {
        let n = field(row, "n");
        let want = 1.5 * 2f64.powf(-0.25 * n);
        assert!((field(row, "phi1") - want).abs() < 1e-14 * want, "n = {n}");
        assert_eq!(field(row, "logC"), 0.0);
    }
    let meta = read_json(&tmp.path().join("out/orbit.json"));
    assert_eq!(meta["termination"]["kind"], "max_iterations");
    assert_eq!(meta["config"]["seed"]["alpha"], 1.5);
}

#[test]
fn find_critical_on_cubic_seed() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "crit.json",
        r#"{
          "schema_version": 1,
          "command": "find-critical",
          "seed": {"C": 1.0, "gammas": [0.5, 0.5, 0.5]},
          "params": {"theta": 0.0, "lambda": 0.25, "delta": 2}
        }"#,
    );
    let out = run(tmp.path(), &cfg, &[]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let doc = read_json(&tmp.path().join("out/find-critical.json"));
    let res = &doc["result"];
    let beta = res["beta_star"].as_f64().unwrap();
    let zeta = res["zeta_star"].as_f64().unwrap();
    assert!(beta > 0.0 && zeta == 1.0);
    let (lo, hi) = (
        res["bracket"]["lo"].as_f64().unwrap(),
        res["bracket"]["hi"].as_f64().unwrap(),
    );
    assert!(hi - lo < 1e-10 && lo <= beta && beta <= hi);

    // every sub coupling lies below every super coupling
    let trace = res["trace"].as_array().unwrap();
    let of = |v: &str| -> Vec<f64> {
        trace
            .iter()
            .filter(|e| e["verdict"] == v)
            .map(|e| e["beta"].as_f64().unwrap())
            .collect()
    };
    let max_sub = of("sub").into_iter().fold(f64::NEG_INFINITY, f64::max);
    let min_super = of("super").into_iter().fold(f64::INFINITY, f64::min);
    assert!(max_sub < min_super);
    assert_eq!(doc["trace_monotone"], true);
}

#[test]
fn eigenvalue_tables() {
    let tmp = TempDir::new().unwrap();
    let (delta, lambda) = (3f64, 0.2);
    for (kind, exponent) in [
        (
            "critical",
            Box::new(|k: f64| k * lambda - k + 1.0) as Box<dyn Fn(f64) -> f64>,
        ),
        ("trivial", Box::new(|k: f64| 1.0 - k - k * lambda)),
    ] {
        let body = format!(
            r#"{{
              "schema_version": 1,
              "command": "eigenvalues",
              "seed": {{"C": 1.0, "alpha": 1.0}},
              "params": {{"theta": 1.5, "lambda": {lambda}, "delta": {delta}, "beta": 0.6}},
              "variant": "Q",
              "eigen": {{"kmax": 4, "fixed_point": "{kind}"}},
              "output": {{"stem": "{kind}"}}
            }}"#
        );
        let cfg = write_config(tmp.path(), &format!("{kind}.json"), &body);
        let out = run(tmp.path(), &cfg, &[]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        let (_, rows) = read_csv(&tmp.path().join(format!("out/{kind}.csv")));
        assert_eq!(rows.len(), 5);
        for row in &rows {
            let k = field(row, "k");
            let want = delta.powf(exponent(k));
            assert!(
                (field(row, "analytic") - want).abs() < 1e-12 * want.max(1.0),
                "{kind} k = {k}"
            );
            assert!(
                (field(row, "numeric") - want).abs() < 1e-6,
                "{kind} k = {k}"
            );
        }
    }
}

#[test]
fn limit_of_exponential_seed_at_criticality() {
    let tmp = TempDir::new().unwrap();
    let (n, delta, lambda, alpha) = (3.0, 2f64, 0.25, 1.25);
    // for e^{αz} the critical coupling is β = 1/α
    let body = format!(
        r#"{{
          "schema_version": 1,
          "command": "limit",
          "seed": {{"C": 1.0, "alpha": {alpha}}},
          "params": {{"N": {n}, "lambda": {lambda}, "delta": {delta}, "beta": {}}}
        }}"#,
        1.0 / alpha
    );
    let cfg = write_config(tmp.path(), "limit.json", &body);
    let out = run(tmp.path(), &cfg, &[]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = &read_json(&tmp.path().join("out/limit.json"))["report"];
    assert_eq!(report["verdict"], "gaussian");
    let tau_star = (delta.powf(lambda) - 1.0) / alpha;
    let want = 2.0 * n * (delta.powf(lambda) - 1.0) / tau_star;
    let got = report["variance"].as_f64().unwrap();
    assert!((got - want).abs() < 1e-9 * want, "{got} vs {want}");
}

const ORACLE: &str = r#"{
  "schema_version": 1,
  "command": "oracle-check",
  "seed": {"C": 2.0, "alpha": 0.7},
  "params": {"theta": 1.5, "lambda": 0.25, "delta": 2, "beta": 0.9, "n_max": 20},
  "oracle": {"cases": 8},
  "random_seed": 11
}"#;

#[test]
fn oracle_check_passes_and_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "oracle.json", ORACLE);
    let path = tmp.path().join("out/oracle-check.json");
    let out = run(tmp.path(), &cfg, &[]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let first = std::fs::read(&path).unwrap();
    let doc: Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(doc["passed"], true);
    let names: Vec<&str> = doc["checks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["shift_identity", "exponential_orbit", "sign_rule"]);

    assert!(run(tmp.path(), &cfg, &[]).status.success());
    assert_eq!(std::fs::read(&path).unwrap(), first);
}

#[test]
fn overrides_take_precedence() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "free.json", FREE_ORBIT);
    let header = |tmp: &TempDir| {
        let (h, rows) = read_csv(&tmp.path().join("out/orbit.csv"));
        let v: Value = serde_json::from_str(h.strip_prefix("# config: ").unwrap()).unwrap();
        (v, rows.len())
    };

    let out = run(
        tmp.path(),
        &cfg,
        &["--max-iter", "3", "--precision", "extended"],
    );
    assert!(out.status.success());
    let (v, rows) = header(&tmp);
    assert_eq!((v["precision"].as_str(), rows), (Some("extended"), 4));

    let out = bin()
        .args(["--config", cfg.to_str().unwrap(), "--out"])
        .arg(tmp.path().join("out"))
        .arg("-q")
        .env("LAGRG_PRECISION", "extended")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(header(&tmp).0["precision"], "extended");

    let out = bin()
        .args([
            "--config",
            cfg.to_str().unwrap(),
            "--precision",
            "double",
            "--out",
        ])
        .arg(tmp.path().join("out"))
        .arg("-q")
        .env("LAGRG_PRECISION", "extended")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(header(&tmp).0["precision"], "double");

    let out = run(tmp.path(), &cfg, &["--command", "oracle-check"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(tmp.path().join("out/oracle-check.json").exists());
}

#[test]
fn several_configs_write_separate_directories() {
    let tmp = TempDir::new().unwrap();
    let a = write_config(tmp.path(), "a.json", FREE_ORBIT);
    let b = write_config(tmp.path(), "b.json", ORACLE);
    let out = bin()
        .arg("--config")
        .arg(&a)
        .arg("--config")
        .arg(&b)
        .arg("--out")
        .arg(tmp.path().join("out"))
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(tmp.path().join("out/a/orbit.csv").exists());
    assert!(tmp.path().join("out/b/oracle-check.json").exists());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("orbit:") && stdout.contains("oracle-check:"));
}

#[test]
fn invalid_configs_are_rejected_with_json_errors() {
    let tmp = TempDir::new().unwrap();
    let cases = [
        (
            "unknown.json",
            FREE_ORBIT.replace("\"n_max\": 12", "\"n_max\": 12, \"steps\": 3"),
        ),
        (
            "version.json",
            FREE_ORBIT.replace("\"schema_version\": 1", "\"schema_version\": 9"),
        ),
        (
            "both.json",
            FREE_ORBIT.replace("\"tau\": 0.0", "\"tau\": 0.0, \"beta\": 1.0"),
        ),
        (
            "lambda.json",
            FREE_ORBIT.replace("\"lambda\": 0.25", "\"lambda\": 0.5"),
        ),
        ("seed.json", FREE_ORBIT.replace("\"C\": 1.0", "\"C\": -1.0")),
        (
            "theta.json",
            FREE_ORBIT.replace("\"theta\": 1.0", "\"theta\": 1.0, \"N\": 1"),
        ),
        ("command.json", FREE_ORBIT.replace("\"orbit\"", "\"plot\"")),
    ];
    for (name, body) in cases {
        let cfg = write_config(tmp.path(), name, &body);
        let out = run(tmp.path(), &cfg, &[]);
        assert!(!out.status.success(), "{name}");
        let err = stderr_json(&out);
        assert_eq!(err["error"]["kind"], "ConfigInvalid", "{name}: {err}");
        assert_eq!(err["config"], cfg.to_str().unwrap());
    }
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn library_errors_carry_provenance() {
    let tmp = TempDir::new().unwrap();
    // e^{αz} admits couplings up to 1/α only
    let body = FREE_ORBIT.replace("\"tau\": 0.0", "\"beta\": 2.0");
    let cfg = write_config(tmp.path(), "beyond.json", &body);
    let out = run(tmp.path(), &cfg, &[]);
    assert!(!out.status.success());
    let err = stderr_json(&out);
    assert_eq!(err["error"]["kind"], "InvalidParameter");
    assert_eq!(err["error"]["module"], "dynamics");
    assert_eq!(err["error"]["op"], "run_orbit");

    let missing = tmp.path().join("missing.json");
    let out = run(tmp.path(), &missing, &[]);
    assert!(!out.status.success());
    assert_eq!(stderr_json(&out)["error"]["kind"], "Io");
}

#[test]
fn bundled_configs_run() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut configs: Vec<PathBuf> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    configs.sort();
    assert!(!configs.is_empty());
    let tmp = TempDir::new().unwrap();
    for cfg in &configs {
        let out = run(&tmp.path().join(cfg.file_stem().unwrap()), cfg, &[]);
        assert!(
            out.status.success(),
            "{}: {}",
            cfg.display(),
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn search_precision_is_the_fallback() {
    let tmp = TempDir::new().unwrap();
    let body = FREE_ORBIT.replace(
        "\"command\": \"orbit\",",
        "\"command\": \"orbit\", \"search\": {\"precision\": \"extended\"},",
    );
    let cfg = write_config(tmp.path(), "search.json", &body);
    assert!(run(tmp.path(), &cfg, &[]).status.success());
    let meta = read_json(&tmp.path().join("out/orbit.json"));
    assert_eq!(meta["config"]["precision"], "extended");
    assert_eq!(meta["config"]["search"]["precision"], "extended");
}
