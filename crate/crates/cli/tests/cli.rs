use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn ppdiag(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ppdiag"))
        .args(args)
        .current_dir(dir)
        .env("PPDIAG_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn read_points(path: &Path) -> Vec<(f64, f64)> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,y"));
    lines
        .map(|l| {
            let (x, y) = l.split_once(',').unwrap();
            (x.parse().unwrap(), y.parse().unwrap())
        })
        .collect()
}

/// Columns of a table CSV by name; empty fields become NaN.
fn read_table(path: &Path) -> Vec<(String, Vec<f64>)> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let mut cols: Vec<(String, Vec<f64>)> =
        lines.next().unwrap().split(',').map(|n| (n.to_string(), Vec::new())).collect();
    for l in lines {
        for (c, f) in cols.iter_mut().zip(l.split(',')) {
            c.1.push(if f.is_empty() { f64::NAN } else { f.parse().unwrap() });
        }
    }
    cols
}

fn col<'a>(t: &'a [(String, Vec<f64>)], name: &str) -> &'a [f64] {
    &t.iter().find(|(n, _)| n == name).unwrap_or_else(|| panic!("no column {name}")).1
}

fn poisson_model(log_kappa: Value) -> Value {
    json!({
        "first_order": {"covariates": [{"kind": "constant"}], "coefficients": [log_kappa]},
        "interaction": {"kind": {"kind": "none"}, "phi": 0.0}
    })
}

fn strauss_model(log_kappa: f64, gamma: f64, r: f64) -> Value {
    json!({
        "first_order": {"covariates": [{"kind": "constant"}], "coefficients": [log_kappa]},
        "interaction": {"kind": {"kind": "strauss", "r": r}, "phi": gamma.ln()}
    })
}

fn simulate(dir: &Path, model: Value, seed: u64) -> PathBuf {
    let out = dir.join(format!("sim{seed}"));
    let cfg = write_config(dir, &format!("sim{seed}.json"), &json!({ "model": model }));
    let o = ppdiag(
        &["simulate", "--config", cfg.to_str().unwrap(), "--seed", &seed.to_string(), "--out", out.to_str().unwrap()],
        dir,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out.join("pattern.csv")
}

fn pair_count(pts: &[(f64, f64)], r: f64) -> usize {
    let mut c = 0;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let (dx, dy) = (pts[i].0 - pts[j].0, pts[i].1 - pts[j].1);
            if dx * dx + dy * dy <= r * r {
                c += 1;
            }
        }
    }
    c
}

#[test]
fn zero_intensity_gives_empty_pattern() {
    let dir = tempfile::tempdir().unwrap();
    let path = simulate(dir.path(), poisson_model(json!("-inf")), 1);
    assert_eq!(fs::read_to_string(&path).unwrap(), "x,y\n");
    let side: Value = serde_json::from_str(&fs::read_to_string(path.with_extension("json")).unwrap()).unwrap();
    assert_eq!(side["seed"], 1);
    assert_eq!(side["window"]["x_max"], 1.0);
}

#[test]
fn seeded_runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let m = strauss_model(100f64.ln(), 0.5, 0.05);
    let a = fs::read(simulate(dir.path(), m.clone(), 5)).unwrap();
    let cfg = write_config(dir.path(), "again.json", &json!({ "model": m }));
    let again = dir.path().join("again");
    let o = ppdiag(&["simulate", "--config", cfg.to_str().unwrap(), "--seed", "5", "--out", again.to_str().unwrap()], dir.path());
    assert!(o.status.success());
    assert_eq!(a, fs::read(again.join("pattern.csv")).unwrap());
    let b = fs::read(simulate(dir.path(), m, 6)).unwrap();
    assert_ne!(a, b);
}

#[test]
fn csr_fit_gives_empirical_intensity() {
    let dir = tempfile::tempdir().unwrap();
    let path = simulate(dir.path(), poisson_model(json!(100f64.ln())), 2);
    let n = read_points(&path).len() as f64;
    let out = dir.path().join("fit");
    let o = ppdiag(&["fit", path.to_str().unwrap(), "--out", out.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rec: Value = serde_json::from_str(&fs::read_to_string(out.join("fit.json")).unwrap()).unwrap();
    let kappa = rec["model"]["first_order"]["coefficients"][0].as_f64().unwrap().exp();
    assert!((kappa / n - 1.0).abs() < 1e-6, "kappa {kappa} n {n}");
    assert_eq!(rec["convergence"]["converged"], true);
}

#[test]
fn empty_diagnostic_list_is_a_no_op() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &json!({ "diagnostics": [] }));
    let out = dir.path().join("out");
    let o = ppdiag(&["diag", "missing.csv", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], dir.path());
    assert!(o.status.success());
    assert_eq!(fs::read_dir(&out).unwrap().count(), 0);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let bad = write_config(d, "bad.json", &json!({ "model": poisson_model(json!(1.0)), "sed": 3 }));
    assert_eq!(ppdiag(&["simulate", "--config", bad.to_str().unwrap()], d).status.code(), Some(2));
    let no_model = write_config(d, "nomodel.json", &json!({}));
    assert_eq!(ppdiag(&["simulate", "--config", no_model.to_str().unwrap()], d).status.code(), Some(2));
    let unstable = write_config(d, "unstable.json", &json!({ "model": strauss_model(4.0, 2.0, 0.05) }));
    assert_eq!(ppdiag(&["simulate", "--config", unstable.to_str().unwrap()], d).status.code(), Some(2));
    assert_eq!(ppdiag(&["fit", "nowhere.csv", "--config", no_model.to_str().unwrap()], d).status.code(), Some(4));
    let path = simulate(d, poisson_model(json!(4.0)), 3);
    let strict = write_config(
        d,
        "strict.json",
        &json!({ "model": strauss_model(4.0, 0.5, 0.05), "fit": {"max_iter": 1, "gradient_tol": 1e-300} }),
    );
    assert_eq!(ppdiag(&["fit", path.to_str().unwrap(), "--config", strict.to_str().unwrap()], d).status.code(), Some(3));
    fs::write(d.join("junk.csv"), "x,y\n0.5,abc\n").unwrap();
    let win = write_config(d, "win.json", &json!({ "window": {"x_min": 0, "x_max": 1, "y_min": 0, "y_max": 1} }));
    assert_eq!(ppdiag(&["fit", "junk.csv", "--config", win.to_str().unwrap()], d).status.code(), Some(4));
}

#[test]
fn wide_r_grid_warns() {
    let dir = tempfile::tempdir().unwrap();
    let path = simulate(dir.path(), poisson_model(json!(4.0)), 4);
    let cfg = write_config(
        dir.path(),
        "c.json",
        &json!({ "diagnostics": [{"kind": "k"}], "r_grid": {"r_max": 0.5, "n": 11} }),
    );
    let o = ppdiag(&["diag", path.to_str().unwrap(), "--config", cfg.to_str().unwrap()], dir.path());
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("quarter"));
    let t = read_table(&dir.path().join("k.csv"));
    assert_eq!(t[0].0, "r");
    assert_eq!(col(&t, "k").len(), 11);
}

/// Poisson and Strauss fits to Strauss data: the Poisson K̂ residual is
/// negative at the interaction range.
#[test]
fn wrong_model_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let path = simulate(d, strauss_model(200f64.ln(), 0.1, 0.05), 7);
    let mut files = Vec::new();
    for (name, model) in [("poisson", poisson_model(json!(0.0))), ("strauss", strauss_model(0.0, 0.5, 0.05))] {
        let cfg = write_config(d, &format!("{name}.json"), &json!({ "model": model }));
        let out = d.join(name);
        let o = ppdiag(&["fit", path.to_str().unwrap(), "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], d);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let f = d.join(format!("{name}.json"));
        fs::copy(out.join("fit.json"), &f).unwrap();
        files.push(f);
    }
    let cfg = write_config(
        d,
        "diag.json",
        &json!({
            "diagnostics": [{"kind": "residual", "statistic": {"stat": "khat_local"}, "smooth": true, "name": "kres"}],
            "r_grid": {"r_max": 0.1, "n": 21}
        }),
    );
    let out = d.join("diag");
    let o = ppdiag(
        &[
            "diag",
            path.to_str().unwrap(),
            "--config",
            cfg.to_str().unwrap(),
            "--model",
            files[0].to_str().unwrap(),
            "--model",
            files[1].to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
        d,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("kres_poisson.csv").exists() && out.join("kres_strauss.csv").exists());
    let t = read_table(&out.join("kres_compare.csv"));
    let k = 10; // r = 0.05
    assert!((col(&t, "r")[k] - 0.05).abs() < 1e-12);
    let poisson = col(&t, "res_poisson")[k];
    let strauss = col(&t, "res_strauss")[k];
    assert!(poisson < 0.0, "poisson residual {poisson}");
    assert!(strauss.abs() < poisson.abs(), "strauss {strauss} poisson {poisson}");
    assert!(col(&t, "res_smooth_poisson").iter().all(|v| v.is_finite()));
}

#[test]
fn csr_residual_inside_envelope() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let path = simulate(d, poisson_model(json!(100f64.ln())), 8);
    let cfg = write_config(
        d,
        "env.json",
        &json!({
            "envelope": {"diagnostic": {"kind": "residual", "statistic": {"stat": "khat_local"}}, "n_sims": 99},
            "r_grid": {"r_max": 0.2, "n": 41},
            "seed": 11
        }),
    );
    let o = ppdiag(&["envelope", path.to_str().unwrap(), "--config", cfg.to_str().unwrap()], d);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let t = read_table(&d.join("envelope.csv"));
    let names: Vec<&str> = t.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["r", "data", "mean", "lo", "hi"]);
    let (data, lo, hi) = (col(&t, "data"), col(&t, "lo"), col(&t, "hi"));
    let inside = (0..data.len()).filter(|&k| lo[k] <= data[k] && data[k] <= hi[k]).count();
    assert!(inside as f64 >= 0.9 * data.len() as f64, "{inside} of {}", data.len());
}

#[test]
fn score_test_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let path = simulate(d, poisson_model(json!(100f64.ln())), 9);
    let cfg = write_config(
        d,
        "st.json",
        &json!({
            "score_test": {"covariate": {"kind": "x"}, "kernel": {"kind": "gaussian", "sigma": 0.1}, "field_resolution": 16},
            "pixel_resolution": 64
        }),
    );
    let o = ppdiag(&["score-test", path.to_str().unwrap(), "--config", cfg.to_str().unwrap()], d);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s: Value = serde_json::from_str(&fs::read_to_string(d.join("score_test.json")).unwrap()).unwrap();
    assert!(s["t"].as_f64().unwrap().is_finite());
    assert!(s["hotspot"].is_array());
    let t = read_table(&d.join("threshold.csv"));
    assert_eq!(col(&t, "r").len(), 101);
    let n = read_points(&path).len() as f64;
    assert_eq!(*col(&t, "s").last().unwrap(), n);
    let asc = fs::read_to_string(d.join("field_t.asc")).unwrap();
    assert!(asc.starts_with("ncols 16\nnrows 16\n"));
    assert_eq!(asc.lines().count(), 6 + 16);
}

/// Inhomogeneous Strauss patterns have fewer close pairs per point than
/// Poisson patterns with the same trend.
#[test]
fn strauss_inhibition_ordering() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let trend = |phi: f64| {
        json!({
            "first_order": {
                "covariates": [{"kind": "constant"}, {"kind": "x"}, {"kind": "y"}, {"kind": "monomial", "px": 2, "py": 0}],
                "coefficients": [200f64.ln(), 2.0, 2.0, 3.0]
            },
            "interaction": {"kind": {"kind": if phi == 0.0 { "none" } else { "strauss" }, "r": 0.05}, "phi": phi}
        })
    };
    let ratio = |model: Value, base: u64| {
        (0..5)
            .map(|s| {
                let pts = read_points(&simulate(d, model.clone(), base + s));
                pair_count(&pts, 0.05) as f64 / pts.len() as f64
            })
            .sum::<f64>()
            / 5.0
    };
    let strauss = ratio(trend(0.1f64.ln()), 100);
    let poisson = ratio(trend(0.0), 200);
    assert!(strauss < poisson, "strauss {strauss} poisson {poisson}");
}

/// Geyer clustering raises the point count above the γ = 1 Poisson mean.
/// With these parameters the mean count is several times the Poisson mean.
#[test]
fn geyer_count_ordering() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let model = json!({
        "first_order": {"covariates": [{"kind": "constant"}], "coefficients": [4.0]},
        "interaction": {"kind": {"kind": "geyer_sat", "r": 0.05, "s": 4.5}, "phi": 0.4}
    });
    let mean = (0..50).map(|s| read_points(&simulate(d, model.clone(), 300 + s)).len() as f64).sum::<f64>() / 50.0;
    let poisson = 4f64.exp();
    assert!(mean > poisson, "mean {mean} vs {poisson}");
}
