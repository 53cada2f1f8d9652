use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde_json::json;

use ppdiag::diagnostics::{evaluate, simulate_model, smooth, DiagOptions};
use ppdiag::envelopes::{envelope as run_envelope, EnvelopeSpec};
use ppdiag::fit::{fit_mple, FittedModel, FittedModelRecord};
use ppdiag::io::{self, PatternMeta};
use ppdiag::summaries::{f_hat, g_hat, k_hat, FunctionTable, RGrid};
use ppdiag::trend::{cox_score_test, hotspot, smoothed_residual_field, threshold_profile};
use ppdiag::{FirstOrderSpec, ModelSpec, PixelGrid, PointPattern, Window};

use crate::config::{DiagRequest, NullModel, RunConfig};
use crate::CliError;

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Reads a pattern, taking the window from its sidecar or else the config.
fn load(cfg: &RunConfig, path: &Path) -> Result<PointPattern, CliError> {
    if !path.is_file() {
        return Err(io_err(path, "no such file"));
    }
    let window = if io::sidecar_path(path).exists() {
        None
    } else {
        Some(cfg.window.ok_or_else(|| {
            CliError::Schema(format!("{} has no sidecar JSON and the config gives no window", path.display()))
        })?)
    };
    io::load_pattern(path, window).map(|(p, _)| p).map_err(|e| io_err(path, e))
}

fn save_table(path: &Path, t: &FunctionTable) -> Result<(), CliError> {
    io::save_table(path, t).map_err(|e| io_err(path, e))
}

fn save_json(path: &Path, v: &impl serde::Serialize) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| io_err(path, e))?;
    s.push('\n');
    std::fs::write(path, s).map_err(|e| io_err(path, e))
}

fn model_form(cfg: &RunConfig) -> ModelSpec {
    cfg.model.clone().unwrap_or_else(|| ModelSpec::poisson(FirstOrderSpec::constant(1.0)))
}

pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let model = cfg.model.as_ref().ok_or_else(|| CliError::Schema("simulate needs a model".into()))?;
    model.validate()?;
    model.check_simulable()?;
    let w = cfg.window.unwrap_or_else(Window::unit);
    let seed = cfg.seed.unwrap_or(0);
    let p = simulate_model(model, &w, seed, &cfg.mcmc)?;
    let path = out.join("pattern.csv");
    let meta = PatternMeta { window: w, seed: Some(seed), model: Some(model.clone()) };
    io::save_pattern(&path, &p, &meta).map_err(|e| io_err(&path, e))?;
    println!("simulated {} points -> {}", p.n(), path.display());
    Ok(())
}

pub fn fit(cfg: &RunConfig, pattern: &Path, out: &Path) -> Result<(), CliError> {
    let p = load(cfg, pattern)?;
    let fm = fit_mple(&p, &model_form(cfg), &cfg.fit)?;
    let rec = fm.record();
    let path = out.join("fit.json");
    save_json(&path, &rec)?;
    println!(
        "converged in {} iterations; coefficients {:?}; phi {}",
        rec.convergence.iterations, rec.model.first_order.coefficients, rec.model.interaction.phi
    );
    Ok(())
}

/// One diagnostic table for `p`. Residual requests need `fm`.
pub fn run_diag(
    req: &DiagRequest,
    p: &PointPattern,
    fm: Option<&FittedModel>,
    r: &RGrid,
    cfg: &RunConfig,
) -> ppdiag::Result<FunctionTable> {
    let w = *p.window();
    let poisson_cdf = |rho: f64| -> Vec<f64> { r.values().iter().map(|x| 1.0 - (-rho * PI * x * x).exp()).collect() };
    let mut t = FunctionTable::new(r);
    match req {
        DiagRequest::Residual { statistic, rule, smooth: do_smooth, bandwidth, .. } => {
            let fm = fm.ok_or_else(|| ppdiag::Error::InvalidParameter("residual diagnostics need a model".into()))?;
            let opts = DiagOptions { rule: *rule, pixel_resolution: cfg.pixel_resolution };
            t = evaluate(statistic, fm, p, r, fm.mode, &opts)?.to_table()?;
            if *do_smooth {
                for (src, dst) in [("res", "res_smooth"), ("pres", "pres_smooth")] {
                    if let Some(col) = t.get(src).map(<[f64]>::to_vec) {
                        t.push(dst, smooth(&col, r, *bandwidth)?)?;
                    }
                }
            }
            t.set_meta("statistic", statistic.name());
        }
        DiagRequest::K { estimator, .. } => {
            t.push("k", k_hat(p, r, estimator)?)?;
            t.push("theo", r.values().iter().map(|x| PI * x * x).collect())?;
        }
        DiagRequest::G { estimator, .. } => {
            t.push("g", g_hat(p, r, estimator)?)?;
            t.push("theo", poisson_cdf(p.intensity()))?;
        }
        DiagRequest::F { estimator, .. } => {
            let res = cfg.pixel_resolution();
            let grid = PixelGrid::new(w, res, res)?;
            t.push("f", f_hat(p, r, estimator, &grid)?)?;
            t.push("theo", poisson_cdf(p.intensity()))?;
        }
    }
    Ok(t)
}

fn file_stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into())
}

pub fn diag(cfg: &RunConfig, pattern: &Path, model_files: &[PathBuf], out: &Path) -> Result<(), CliError> {
    if cfg.diagnostics.is_empty() {
        log::info!("no diagnostics requested");
        return Ok(());
    }
    let mut seen = BTreeSet::new();
    for d in &cfg.diagnostics {
        if !seen.insert(d.name()) {
            return Err(CliError::Schema(format!("duplicate diagnostic name {}", d.name())));
        }
    }
    let p = load(cfg, pattern)?;
    let r = cfg.r_grid(p.window())?;
    let mut models: Vec<(String, FittedModel)> = Vec::new();
    if cfg.diagnostics.iter().any(DiagRequest::needs_model) {
        if model_files.is_empty() {
            models.push(("fit".into(), fit_mple(&p, &model_form(cfg), &cfg.fit)?));
        }
        for f in model_files {
            let text = std::fs::read_to_string(f).map_err(|e| io_err(f, e))?;
            let rec: FittedModelRecord =
                serde_json::from_str(&text).map_err(|e| CliError::Schema(format!("{}: {e}", f.display())))?;
            models.push((file_stem(f), FittedModel::from_record(rec, &p)?));
        }
        let stems: BTreeSet<&String> = models.iter().map(|(s, _)| s).collect();
        if stems.len() != models.len() {
            return Err(CliError::Schema("fitted-model files must have distinct names".into()));
        }
    }
    for req in &cfg.diagnostics {
        let name = req.name();
        if !req.needs_model() {
            let t = run_diag(req, &p, None, &r, cfg)?;
            save_table(&out.join(format!("{name}.csv")), &t)?;
            continue;
        }
        if models.len() == 1 {
            let t = run_diag(req, &p, Some(&models[0].1), &r, cfg)?;
            save_table(&out.join(format!("{name}.csv")), &t)?;
            continue;
        }
        let mut compare = FunctionTable::new(&r);
        for (stem, fm) in &models {
            let t = run_diag(req, &p, Some(fm), &r, cfg)?;
            for (col, v) in &t.columns {
                compare.push(format!("{col}_{stem}"), v.clone())?;
            }
            save_table(&out.join(format!("{name}_{stem}.csv")), &t)?;
        }
        save_table(&out.join(format!("{name}_compare.csv")), &compare)?;
    }
    Ok(())
}

pub fn envelope(cfg: &RunConfig, pattern: &Path, out: &Path) -> Result<(), CliError> {
    let ec = cfg.envelope.as_ref().ok_or_else(|| CliError::Schema("envelope needs an envelope section".into()))?;
    let p = load(cfg, pattern)?;
    let r = cfg.r_grid(p.window())?;
    let data_fit = match ec.null {
        NullModel::Fitted => fit_mple(&p, &model_form(cfg), &cfg.fit)?,
        NullModel::Known => {
            let m = cfg.model.clone().ok_or_else(|| CliError::Schema("known null model needs a model".into()))?;
            FittedModel::known(m, &p, cfg.fit.mode, cfg.fit.m)?
        }
    };
    let column = ec.column.clone().unwrap_or_else(|| ec.diagnostic.default_column().to_string());
    let spec = EnvelopeSpec {
        n_sims: ec.n_sims,
        lo: ec.lo,
        hi: ec.hi,
        refit: ec.refit.unwrap_or(column.contains("stdres")),
        seed: cfg.seed.unwrap_or(0),
    };
    let diag = |q: &PointPattern, fm: &FittedModel| -> ppdiag::Result<Vec<f64>> {
        let t = run_diag(&ec.diagnostic, q, Some(fm), &r, cfg)?;
        t.get(&column)
            .map(<[f64]>::to_vec)
            .ok_or_else(|| ppdiag::Error::InvalidParameter(format!("diagnostic has no column {column}")))
    };
    let mut t = run_envelope(diag, &p, &data_fit, r.values(), &spec, &cfg.mcmc, &cfg.fit)?;
    t.set_meta("column", column);
    save_table(&out.join("envelope.csv"), &t)?;
    println!("envelope from {} simulations ({} dropped)", spec.n_sims, t.meta["dropped"]);
    Ok(())
}

pub fn score_test(cfg: &RunConfig, pattern: &Path, out: &Path) -> Result<(), CliError> {
    let sc = cfg.score_test.as_ref().ok_or_else(|| CliError::Schema("score-test needs a score_test section".into()))?;
    let p = load(cfg, pattern)?;
    let w = *p.window();
    let z = sc.covariate()?;
    let res = cfg.pixel_resolution();
    let grid = PixelGrid::new(w, res, res)?;
    let st = cox_score_test(&p, &z, &grid)?;
    let fm = fit_mple(&p, &model_form(cfg), &cfg.fit)?;
    let z_grid = match &sc.z_grid {
        Some(g) => g.clone(),
        None => {
            let vals = grid.centres().iter().chain(p.points()).map(|u| z.eval(u)).collect::<Vec<f64>>();
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !(hi > lo) {
                return Err(CliError::Schema("covariate is constant over the window".into()));
            }
            (0..101).map(|k| lo + (hi - lo) * k as f64 / 100.0).collect()
        }
    };
    let profile = threshold_profile(&p, &fm, &z, &z_grid, &grid)?;
    save_table(&out.join("threshold.csv"), &profile)?;
    let mut summary = json!({ "s": st.s, "expected": st.expected, "variance": st.variance, "t": st.t });
    if let Some(k) = &sc.kernel {
        let nx = sc.field_resolution;
        let ny = ((nx as f64 * w.height() / w.width()).round() as usize).max(1);
        let out_grid = PixelGrid::new(w, nx, ny)?;
        let field = smoothed_residual_field(&p, &fm, k, &out_grid, &grid)?;
        for (name, v) in [
            ("field_smoothed", &field.smoothed),
            ("field_expected", &field.expected),
            ("field_residual", &field.residual),
            ("field_t", &field.t),
        ] {
            let path = out.join(format!("{name}.asc"));
            io::save_esri_ascii(&path, &out_grid, v).map_err(|e| io_err(&path, e))?;
        }
        summary["max_t"] = json!(field.max_t);
        summary["hotspot"] = json!(hotspot(&field).map(|u| [u.x, u.y]));
    }
    save_json(&out.join("score_test.json"), &summary)?;
    println!("score test T = {:.4}", st.t);
    Ok(())
}
