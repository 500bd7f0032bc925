use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::Value;
use tempfile::TempDir;
use wassbound::gaussian::{w2_squared_gaussian, GaussianDist};
use wassbound::wasserstein::{decay_constant, estimate_bounds, w2_squared, EmpiricalMeasure};
use wassbound_cli::config::parse_config;
use wassbound_cli::samples::{read_samples, write_binary, write_csv};

fn wassbound(args: &[&str], workers: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_wassbound"));
    cmd.args(args).env_remove("WB_WORKERS");
    if let Some(w) = workers {
        cmd.env("WB_WORKERS", w);
    }
    cmd.output().expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_measure(dir: &Path, name: &str, rows: &[Vec<f64>]) -> PathBuf {
    let path = dir.join(name);
    write_csv(&path, &EmpiricalMeasure::from_rows(rows).unwrap()).unwrap();
    path
}

fn run_estimate(nu: &Path, mu: &Path, mu_prime: &Path, out: &Path) -> Value {
    let o = wassbound(&["estimate", "--nu", p(nu), "--mu", p(mu), "--mu-prime", p(mu_prime), "--alpha", "0.05", "--out", p(out)], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_str(&fs::read_to_string(out).unwrap()).unwrap()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for q in permutations(n - 1) {
        for k in 0..n {
            let mut r = q.clone();
            r.insert(k, n - 1);
            out.push(r);
        }
    }
    out
}

fn brute_w2_sq(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let d2 = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(u, v)| (u - v) * (u - v)).sum::<f64>();
    permutations(a.len())
        .iter()
        .map(|s| s.iter().enumerate().map(|(i, &j)| d2(&a[i], &b[j])).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
        / a.len() as f64
}

#[test]
fn estimate_matches_library_and_enumeration_oracle() {
    let dir = TempDir::new().unwrap();
    let nu = vec![vec![0.0, 3.0], vec![2.5, -1.0], vec![-1.5, 0.5], vec![4.0, 2.0]];
    let mu = vec![vec![0.1, 0.2], vec![-0.7, 0.4], vec![0.5, -0.9], vec![1.1, 1.3]];
    let mu_prime = vec![vec![0.3, -0.4], vec![-1.2, 0.8], vec![0.9, 0.1], vec![0.2, 1.6]];
    let files = [("nu.csv", &nu), ("mu.csv", &mu), ("mu_prime.csv", &mu_prime)].map(|(n, r)| write_measure(dir.path(), n, r));
    let report = run_estimate(&files[0], &files[1], &files[2], &dir.path().join("out.json"));

    let m = |r: &[Vec<f64>]| EmpiricalMeasure::from_rows(r).unwrap();
    let lib = estimate_bounds(&m(&nu), &m(&mu), &m(&mu_prime)).unwrap().with_intervals(0.05).unwrap();
    let get = |k: &str, f: &str| report[k][f].as_f64().unwrap();
    let ci = |k: &str| (report[k]["ci"]["lo"].as_f64().unwrap(), report[k]["ci"]["hi"].as_f64().unwrap());
    assert_eq!(get("upper", "value"), lib.upper.value);
    assert_eq!(get("lower", "value"), lib.lower.value);
    assert_eq!(get("lower_squared", "value"), lib.lower_squared.value);
    assert_eq!(get("upper", "jackknife_variance"), lib.upper.jackknife_variance);
    assert_eq!(get("lower", "jackknife_variance"), lib.lower.jackknife_variance);
    assert_eq!(ci("upper"), lib.upper.ci.unwrap());
    assert_eq!(ci("lower"), lib.lower.ci.unwrap());
    assert_eq!(ci("lower_squared"), lib.lower_squared.ci.unwrap());
    assert_eq!(report["decay_constant"].as_f64().unwrap(), decay_constant(&m(&mu), &m(&nu)).unwrap());

    // Independent oracle: enumeration, paired deletion, jackknife formula.
    let drop = |r: &[Vec<f64>], i: usize| r.iter().enumerate().filter(|(k, _)| *k != i).map(|(_, x)| x.clone()).collect::<Vec<_>>();
    let u_of = |a: &[Vec<f64>], b: &[Vec<f64>], c: &[Vec<f64>]| brute_w2_sq(a, b) - brute_w2_sq(c, b);
    let l_of = |a: &[Vec<f64>], b: &[Vec<f64>], c: &[Vec<f64>]| brute_w2_sq(a, b).sqrt() - brute_w2_sq(c, b).sqrt();
    let jk = |vals: &[f64]| {
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        (n - 1.0) / n * vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
    };
    let u = u_of(&nu, &mu, &mu_prime);
    let l = l_of(&nu, &mu, &mu_prime);
    let u_loo: Vec<f64> = (0..4).map(|i| u_of(&drop(&nu, i), &drop(&mu, i), &drop(&mu_prime, i))).collect();
    let l_loo: Vec<f64> = (0..4).map(|i| l_of(&drop(&nu, i), &drop(&mu, i), &drop(&mu_prime, i))).collect();
    let close = |a: f64, b: f64| assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{a} vs {b}");
    close(get("upper", "value"), u);
    close(get("lower", "value"), l);
    close(get("lower_squared", "value"), l.signum() * l * l);
    close(get("upper", "jackknife_variance"), jk(&u_loo));
    close(get("lower", "jackknife_variance"), jk(&l_loo));
    let z = 1.959_963_984_540_054;
    let half = ci("upper").1 - get("upper", "value");
    assert!((half - z * jk(&u_loo).sqrt()).abs() <= 1e-8 * half);
    close(ci("lower").0, l - jk(&l_loo).sqrt() / 0.05f64.sqrt());
}

#[test]
fn identical_nu_and_mu_prime_give_zero_bounds() {
    let dir = TempDir::new().unwrap();
    let a = vec![vec![1.0], vec![-2.0], vec![0.5]];
    let b = vec![vec![0.0], vec![3.0], vec![-1.0]];
    let nu = write_measure(dir.path(), "a.csv", &a);
    let mu = write_measure(dir.path(), "b.csv", &b);
    let nu2 = write_measure(dir.path(), "a2.csv", &a);
    let report = run_estimate(&nu, &mu, &nu2, &dir.path().join("out.json"));
    for k in ["upper", "lower", "lower_squared"] {
        assert_eq!(report[k]["value"].as_f64().unwrap(), 0.0);
    }
}

#[test]
fn gaussian_upper_bound_sits_above_the_closed_form() {
    let (n, d) = (1000, 10);
    let dir = TempDir::new().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(20261017);
    let mut draw = |sd: f64| {
        let v: Vec<f64> = (0..n * d).map(|_| { let z: f64 = StandardNormal.sample(&mut rng); sd * z }).collect();
        EmpiricalMeasure::new(n, d, v).unwrap()
    };
    let nu = draw(10f64.sqrt());
    let mu = draw(1.0);
    let mu_prime = draw(1.0);
    let paths: Vec<PathBuf> = [("nu.bin", &nu), ("mu.bin", &mu), ("mu_prime.bin", &mu_prime)]
        .iter()
        .map(|(name, m)| {
            let path = dir.path().join(name);
            write_binary(&path, m).unwrap();
            path
        })
        .collect();
    let report = run_estimate(&paths[0], &paths[1], &paths[2], &dir.path().join("out.json"));
    let truth = w2_squared_gaussian(&GaussianDist::isotropic(d, 10.0).unwrap(), &GaussianDist::standard(d).unwrap()).unwrap();
    let u = report["upper"]["value"].as_f64().unwrap();
    let hi = report["upper"]["ci"]["hi"].as_f64().unwrap();
    assert!(truth <= hi, "truth {truth} above the interval ending at {hi}");
    let plug_in = w2_squared(&nu, &mu).unwrap().0;
    assert!(u - truth < plug_in - truth, "U {u}, plug-in {plug_in}, truth {truth}");
}

#[test]
fn estimate_rejects_bad_input() {
    let dir = TempDir::new().unwrap();
    let a = write_measure(dir.path(), "a.csv", &[vec![1.0, 2.0], vec![3.0, 4.0]]);
    let b = write_measure(dir.path(), "b.csv", &[vec![1.0], vec![3.0]]);
    let junk = dir.path().join("junk.csv");
    fs::write(&junk, "1,2\n3\n").unwrap();
    let out = dir.path().join("o.json");
    let o = wassbound(&["estimate", "--nu", p(&a), "--mu", p(&b), "--mu-prime", p(&a), "--out", p(&out)], None);
    assert_eq!(o.status.code(), Some(3));
    let o = wassbound(&["estimate", "--nu", p(&junk), "--mu", p(&a), "--mu-prime", p(&a), "--out", p(&out)], None);
    assert_eq!(o.status.code(), Some(3));
    assert!(!String::from_utf8_lossy(&o.stderr).is_empty());
    let missing = dir.path().join("missing.csv");
    let o = wassbound(&["estimate", "--nu", p(&missing), "--mu", p(&a), "--mu-prime", p(&a), "--out", p(&out)], None);
    assert_eq!(o.status.code(), Some(3));
    let o = wassbound(&["estimate", "--nu", p(&a), "--mu", p(&a), "--mu-prime", p(&a), "--alpha", "1.5", "--out", p(&out)], None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn convert_round_trips_bit_identically() {
    let dir = TempDir::new().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let v: Vec<f64> = (0..60).map(|_| StandardNormal.sample(&mut rng)).collect();
    let m = EmpiricalMeasure::new(20, 3, v).unwrap();
    let csv = dir.path().join("m.csv");
    write_csv(&csv, &m).unwrap();
    let bin = dir.path().join("m.bin");
    let back = dir.path().join("back.csv");
    assert!(wassbound(&["convert", "--csv", p(&csv), "--out", p(&bin)], None).status.success());
    assert!(wassbound(&["convert", "--bin", p(&bin), "--out", p(&back)], None).status.success());
    assert_eq!(read_samples(&bin).unwrap(), m);
    assert_eq!(read_samples(&back).unwrap(), m);
    assert_eq!(fs::read(&csv).unwrap(), fs::read(&back).unwrap());
}

fn gibbs_config(seed: u64, coupling: bool) -> String {
    let coupling = if coupling { r#", "coupling": {"lag": 40, "pairs": 6, "cap": 20000}"# } else { "" };
    format!(
        r#"{{
  "experiment": "gibbs_ar1",
  "seed": {seed},
  "n_chains": 24,
  "target": {{"kind": "ar1_circulant", "d": 6, "rho": 0.8}},
  "kernel": {{"kind": "gibbs"}},
  "initial": {{"kind": "scaled_target", "factor": 4.0}},
  "horizon": 120,
  "thin": 2,
  "reference_iteration": 120,
  "asymptote": {{"start": 60, "end": 100, "stride": 4}}{coupling}
}}"#
    )
}

fn run_config(text: &str, cmd: &str, workers: Option<&str>) -> (TempDir, Output) {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, text).unwrap();
    let out = dir.path().join("out");
    let o = wassbound(&[cmd, "--config", p(&cfg), "--out", p(&out)], workers);
    (dir, o)
}

fn read_table(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn run_is_deterministic_across_worker_counts() {
    let cfg = gibbs_config(11, true);
    let (a, oa) = run_config(&cfg, "run", Some("1"));
    let (b, ob) = run_config(&cfg, "run", Some("3"));
    assert!(oa.status.success(), "{}", String::from_utf8_lossy(&oa.stderr));
    assert!(ob.status.success(), "{}", String::from_utf8_lossy(&ob.stderr));
    let ta = fs::read(a.path().join("out/trajectory.csv")).unwrap();
    assert_eq!(ta, fs::read(b.path().join("out/trajectory.csv")).unwrap());
    assert_eq!(
        fs::read(a.path().join("out/summary.json")).unwrap(),
        fs::read(b.path().join("out/summary.json")).unwrap()
    );

    let (header, rows) = read_table(&a.path().join("out/trajectory.csv"));
    assert_eq!(
        header,
        ["t", "upper", "upper_ci_lo", "upper_ci_hi", "lower_sq", "lower_ci_lo", "lower_ci_hi", "exact", "coupling"]
    );
    let t: Vec<usize> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert_eq!(t, (0..120).step_by(2).collect::<Vec<_>>());
    assert!(rows.iter().all(|r| r[7].parse::<f64>().is_ok() && r[8].parse::<f64>().is_ok()));

    let (c, oc) = run_config(&gibbs_config(12, true), "run", None);
    assert!(oc.status.success());
    assert_ne!(ta, fs::read(c.path().join("out/trajectory.csv")).unwrap());
}

#[test]
fn coupling_column_is_reproducible_from_stored_traces() {
    let cfg = r#"{
  "experiment": "coupling_baseline",
  "seed": 3,
  "n_chains": 4,
  "target": {"kind": "standard_gaussian", "d": 1},
  "kernel": {"kind": "rwm", "step": 1.5},
  "initial": {"kind": "isotropic", "variance": 9.0},
  "horizon": 400,
  "thin": 1,
  "reference_iteration": 400,
  "asymptote": {"start": 300, "end": 350, "stride": 1},
  "coupling": {"lag": 3, "pairs": 1, "cap": 100000}
}"#;
    let (dir, o) = run_config(cfg, "coupling", None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let traces: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out/traces.json")).unwrap()).unwrap();
    let trace: Vec<f64> = traces[0]["distance_sq_trace"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    let tau = traces[0]["meeting_time"].as_u64().unwrap() as usize;
    assert_eq!(trace.len(), tau - 3);
    let (header, rows) = read_table(&dir.path().join("out/coupling.csv"));
    assert_eq!(header, ["t", "coupling", "coupling_sq"]);
    assert_eq!(rows.len(), 400);
    for row in rows {
        let t: usize = row[0].parse().unwrap();
        let value: f64 = row[1].parse().unwrap();
        let by_hand: f64 = (t..trace.len()).step_by(3).map(|s| trace[s].sqrt()).sum();
        assert!((value - by_hand).abs() <= 1e-12 * (1.0 + by_hand), "t = {t}");
        assert_eq!(row[2].parse::<f64>().unwrap(), value * value);
        if t >= trace.len() {
            assert_eq!(value, 0.0);
        }
    }
}

#[test]
fn coupling_refuses_unmet_pairs() {
    let cfg = gibbs_config(5, false).replace(
        r#""asymptote": {"start": 60, "end": 100, "stride": 4}"#,
        r#""asymptote": {"start": 60, "end": 100, "stride": 4}, "coupling": {"lag": 2, "pairs": 3, "cap": 2}"#,
    );
    let cfg = cfg.replace("\"gibbs_ar1\"", "\"coupling_baseline\"").replace("\"factor\": 4.0", "\"factor\": 400.0");
    let (dir, o) = run_config(&cfg, "coupling", None);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unmet"));
    assert!(!dir.path().join("out/coupling.csv").exists());
}

#[test]
fn configuration_errors_exit_with_code_two() {
    let good = gibbs_config(1, false);
    let cases = [
        good.replace("\"seed\"", "\"sede\""),
        good.replace("\"rho\": 0.8", "\"rho\": 0.8, \"extra\": 1"),
        good.replace("\"thin\": 2", "\"thin\": 7"),
        good.replace("\"start\": 60", "\"start\": 130"),
        good.replace("\"gibbs\"", "\"teleport\""),
        good.replace("\"ar1_circulant\"", "\"ar1_covariance\"").replace(", \"rho\": 0.8", ""),
        "{ not json".to_string(),
    ];
    for text in &cases {
        let (_dir, o) = run_config(text, "run", None);
        assert_eq!(o.status.code(), Some(2), "{text}\n{}", String::from_utf8_lossy(&o.stderr));
    }
    let (_dir, o) = run_config(&good, "run", Some("zero"));
    assert_eq!(o.status.code(), Some(2));
    let (_dir, o) = run_config(&good, "run", Some("0"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn divergent_ula_reports_the_iteration() {
    let cfg = r#"{
  "experiment": "stochastic_volatility",
  "seed": 1,
  "n_chains": 4,
  "target": {"kind": "stochastic_volatility", "len": 50, "beta": 0.65, "phi": 0.98, "sigma": 0.15, "data_seed": 2},
  "kernel": {"kind": "ula", "step": 50.0},
  "initial": {"kind": "prior"},
  "horizon": 200,
  "thin": 1,
  "reference_iteration": 200,
  "asymptote": {"start": 100, "end": 150, "stride": 1}
}"#;
    let (_dir, o) = run_config(cfg, "run", None);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("iteration"), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn configs_parse_with_defaults() {
    let cfg = parse_config(&gibbs_config(9, false)).unwrap();
    match cfg {
        wassbound_cli::config::ExperimentConfig::GibbsAr1(c) => {
            assert_eq!(c.alpha, 0.05);
            assert!(c.coupling.is_none());
            assert_eq!(c.validate().unwrap(), (60..=100).step_by(4).collect::<Vec<_>>());
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn shipped_configs_parse_and_validate() {
    use wassbound_cli::config::{read_config, ExperimentConfig, KernelConfig};
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        seen += 1;
        match read_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display())) {
            ExperimentConfig::EstimateFromSamples(c) => assert!(c.nu.starts_with(&dir)),
            ExperimentConfig::UlaMalaScaling(c) => {
                for &d in &c.dimensions {
                    c.mala.experiment(&c, d, KernelConfig::Mala { step: c.mala.step_rule.step(d) }).validate().unwrap();
                    c.ula.experiment(&c, d, KernelConfig::Ula { step: c.ula.step_rule.step(d) }).validate().unwrap();
                }
            }
            ExperimentConfig::GibbsAr1(c) | ExperimentConfig::StochasticVolatility(c) | ExperimentConfig::CouplingBaseline(c) => {
                c.validate().unwrap();
                c.target.build().unwrap();
            }
        }
    }
    assert_eq!(seen, 6);
}

#[test]
fn estimate_config_reads_samples_beside_it() {
    let dir = TempDir::new().unwrap();
    let a = write_measure(dir.path(), "nu.csv", &[vec![1.0], vec![-2.0], vec![0.5]]);
    let b = write_measure(dir.path(), "mu.csv", &[vec![0.0], vec![3.0], vec![-1.0]]);
    let c = write_measure(dir.path(), "mu_prime.csv", &[vec![0.2], vec![2.0], vec![-1.5]]);
    let cfg = r#"{"experiment": "estimate_from_samples", "nu": "nu.csv", "mu": "mu.csv", "mu_prime": "mu_prime.csv"}"#;
    fs::write(dir.path().join("cfg.json"), cfg).unwrap();
    let out = dir.path().join("out");
    let elsewhere = TempDir::new().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_wassbound"))
        .current_dir(elsewhere.path())
        .args(["run", "--config", p(&dir.path().join("cfg.json")), "--out", p(&out)])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let via_run: Value = serde_json::from_str(&fs::read_to_string(out.join("estimate.json")).unwrap()).unwrap();
    let direct = run_estimate(&a, &b, &c, &dir.path().join("direct.json"));
    assert_eq!(via_run, direct);
}
