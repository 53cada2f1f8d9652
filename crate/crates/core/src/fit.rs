//! Maximum pseudo-likelihood by the Berman–Turner device.
//!
//! The log pseudo-likelihood is approximated on a quadrature scheme by a
//! weighted Poisson log-likelihood `Σ_j w_j (y_j η_j − exp η_j)` with
//! `y_j = 1{data}/w_j`, maximised by Newton–Raphson (IRLS) with step halving.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Point, Window};
use crate::models::{InteractionContext, ModelEvaluator, ModelSpec, Mode};
use crate::pattern::PointPattern;

/// One quadrature point. `data` holds the pattern index for data nodes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadNode {
    pub point: Point,
    pub weight: f64,
    pub data: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureScheme {
    pub nodes: Vec<QuadNode>,
    pub m: usize,
    pub window: Window,
}

impl QuadratureScheme {
    pub fn total_weight(&self) -> f64 {
        self.nodes.iter().map(|q| q.weight).sum()
    }

    pub fn n_data(&self) -> usize {
        self.nodes.iter().filter(|q| q.data.is_some()).count()
    }
}

/// `max(25, 10 ⌊1 + 2√n/10⌋)`.
pub fn default_dummy_resolution(n: usize) -> usize {
    let k = (1.0 + 2.0 * (n as f64).sqrt() / 10.0).floor() as usize;
    25.max(10 * k)
}

/// Data points plus an `m x m` grid of dummy points at tile centres, with
/// counting weights: each tile's area is shared equally by the nodes in it.
pub fn make_quadrature(p: &PointPattern, m: Option<usize>) -> Result<QuadratureScheme> {
    let m = m.unwrap_or_else(|| default_dummy_resolution(p.n()));
    if m == 0 {
        return Err(Error::InvalidParameter("quadrature resolution must be positive".into()));
    }
    let w = *p.window();
    let tile = |q: &Point| -> usize {
        let i = (((q.x - w.x_min) / w.width() * m as f64).floor().max(0.0) as usize).min(m - 1);
        let j = (((q.y - w.y_min) / w.height() * m as f64).floor().max(0.0) as usize).min(m - 1);
        j * m + i
    };
    let mut count = vec![1usize; m * m];
    for q in p.points() {
        count[tile(q)] += 1;
    }
    let tile_area = w.area() / (m * m) as f64;
    let mut nodes = Vec::with_capacity(p.n() + m * m);
    for (i, q) in p.points().iter().enumerate() {
        nodes.push(QuadNode { point: *q, weight: tile_area / count[tile(q)] as f64, data: Some(i) });
    }
    for j in 0..m {
        for i in 0..m {
            let u = Point::new(
                w.x_min + (i as f64 + 0.5) * w.width() / m as f64,
                w.y_min + (j as f64 + 0.5) * w.height() / m as f64,
            );
            nodes.push(QuadNode { point: u, weight: tile_area / count[j * m + i] as f64, data: None });
        }
    }
    Ok(QuadratureScheme { nodes, m, window: w })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitOptions {
    /// Dummy grid resolution; default from the pattern size.
    pub m: Option<usize>,
    pub mode: Mode,
    pub max_iter: usize,
    /// Bound on the scaled gradient at convergence.
    pub gradient_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { m: None, mode: Mode::Unconditional, max_iter: 100, gradient_tol: 1e-6 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub iterations: usize,
    /// Max over parameters of `|score_k| / (1 + Σ_data |X_jk|)`.
    pub gradient_norm: f64,
    pub converged: bool,
    /// Objective after each accepted step, starting value first.
    pub objective_trace: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Berman–Turner regression data restricted to nodes in the free window.
#[derive(Clone, Debug)]
pub struct Design {
    /// Row-major, `n_rows x n_cols`.
    pub x: Vec<f64>,
    pub n_cols: usize,
    pub weights: Vec<f64>,
    pub is_data: Vec<bool>,
    /// Index into the quadrature scheme of each row.
    pub node: Vec<usize>,
}

impl Design {
    pub fn n_rows(&self) -> usize {
        self.weights.len()
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.x[j * self.n_cols..(j + 1) * self.n_cols]
    }

    /// `Σ_data η_j − Σ_j w_j exp(η_j)`.
    pub fn objective(&self, theta: &[f64]) -> f64 {
        let mut s = 0.0;
        for j in 0..self.n_rows() {
            let eta = linear_predictor(self.row(j), theta);
            if self.is_data[j] {
                s += eta;
            }
            s -= self.weights[j] * eta.exp();
        }
        s
    }
}

#[inline]
fn linear_predictor(row: &[f64], theta: &[f64]) -> f64 {
    row.iter().zip(theta).map(|(x, t)| if *x == 0.0 { 0.0 } else { x * t }).sum()
}

/// Assembles the design: covariates followed by `Δ_u V` (unless Poisson).
pub fn build_design(p: &PointPattern, spec: &ModelSpec, quad: &QuadratureScheme, mode: Mode) -> Result<Design> {
    let free = mode.free_window(p.window())?;
    let n_cols = spec.n_params();
    let grid = spec.pixel_grid(p.window());
    let ctx = InteractionContext::new(spec.interaction.kind, p, Some(grid));
    let poisson = spec.is_poisson();
    let keep: Vec<usize> = (0..quad.nodes.len()).filter(|&k| free.contains(&quad.nodes[k].point)).collect();
    let rows: Vec<Vec<f64>> = keep
        .par_iter()
        .map(|&k| {
            let q = &quad.nodes[k];
            let mut row = vec![0.0; n_cols];
            spec.first_order.design_row(&q.point, &mut row);
            if !poisson {
                row[n_cols - 1] = match q.data {
                    Some(i) => ctx.delta_data(i),
                    None => ctx.delta_new(&q.point),
                };
            }
            row
        })
        .collect();
    let mut x = Vec::with_capacity(rows.len() * n_cols);
    for r in &rows {
        x.extend_from_slice(r);
    }
    Ok(Design {
        x,
        n_cols,
        weights: keep.iter().map(|&k| quad.nodes[k].weight).collect(),
        is_data: keep.iter().map(|&k| quad.nodes[k].data.is_some()).collect(),
        node: keep,
    })
}

/// Newton–Raphson with step halving on the Berman–Turner objective.
pub fn maximise_design(d: &Design, start: &[f64], opts: &FitOptions) -> Result<(Vec<f64>, ConvergenceReport)> {
    let p = d.n_cols;
    let mut theta = start.to_vec();
    let mut obj = d.objective(&theta);
    let mut report = ConvergenceReport { objective_trace: vec![obj], ..Default::default() };
    let mut scale = vec![1.0; p];
    for j in 0..d.n_rows() {
        if d.is_data[j] {
            for (s, x) in scale.iter_mut().zip(d.row(j)) {
                *s += x.abs();
            }
        }
    }
    let score_and_info = |theta: &[f64]| {
        let mut g = DVector::<f64>::zeros(p);
        let mut h = DMatrix::<f64>::zeros(p, p);
        for j in 0..d.n_rows() {
            let row = d.row(j);
            let mu = d.weights[j] * linear_predictor(row, theta).exp();
            for a in 0..p {
                let xa = row[a];
                if d.is_data[j] {
                    g[a] += xa;
                }
                g[a] -= mu * xa;
                if xa == 0.0 {
                    continue;
                }
                for b in 0..=a {
                    h[(a, b)] += mu * xa * row[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                h[(b, a)] = h[(a, b)];
            }
        }
        (g, h)
    };
    let scaled = |g: &DVector<f64>| (0..p).map(|k| g[k].abs() / scale[k]).fold(0.0, f64::max);
    let interaction_col = p - 1;
    for it in 0..opts.max_iter {
        let (g, h) = score_and_info(&theta);
        let singular = || Error::Numerical("information matrix is singular; the design is rank deficient".into());
        let chol = h.clone().cholesky().ok_or_else(singular)?;
        // a pivot that is tiny relative to its diagonal entry means collinear columns
        let l = chol.l_dirty();
        if (0..p).any(|k| l[(k, k)] * l[(k, k)] <= 1e-12 * h[(k, k)].abs()) {
            return Err(singular());
        }
        report.gradient_norm = scaled(&g);
        report.iterations = it;
        if report.gradient_norm <= opts.gradient_tol * 1e-3 {
            report.converged = true;
            break;
        }
        let step = chol.solve(&g);
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..60 {
            let cand: Vec<f64> = theta.iter().zip(step.iter()).map(|(a, b)| a + t * b).collect();
            let c_obj = d.objective(&cand);
            if c_obj.is_finite() && c_obj >= obj {
                theta = cand;
                obj = c_obj;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        report.objective_trace.push(obj);
        let step_size = step.iter().map(|v| (v * t).abs()).fold(0.0, f64::max);
        if !improved || step_size <= 1e-13 * (1.0 + theta.iter().map(|v| v.abs()).fold(0.0, f64::max)) {
            let (g, _) = score_and_info(&theta);
            report.gradient_norm = scaled(&g);
            report.iterations = it + 1;
            report.converged = report.gradient_norm <= opts.gradient_tol;
            break;
        }
        report.iterations = it + 1;
    }
    if !report.converged {
        let (g, _) = score_and_info(&theta);
        report.gradient_norm = scaled(&g);
        report.converged = report.gradient_norm <= opts.gradient_tol;
    }
    Ok((theta, report)).map(|(theta, mut report)| {
        if p >= 2 && theta[interaction_col].abs() > 20.0 {
            report.warnings.push(format!(
                "interaction parameter {:.3} exceeds 20 in magnitude; the data may be separated",
                theta[interaction_col]
            ));
        }
        (theta, report)
    })
}

/// A model with fitted (or known) parameters and its quadrature scheme.
#[derive(Clone, Debug)]
pub struct FittedModel {
    pub spec: ModelSpec,
    pub quadrature: QuadratureScheme,
    pub mode: Mode,
    pub log_pseudo_likelihood: f64,
    pub report: ConvergenceReport,
}

impl FittedModel {
    /// Wraps a model with known parameters for use in diagnostics.
    pub fn known(spec: ModelSpec, p: &PointPattern, mode: Mode, m: Option<usize>) -> Result<Self> {
        spec.validate()?;
        let quadrature = make_quadrature(p, m)?;
        Ok(FittedModel {
            spec,
            quadrature,
            mode,
            log_pseudo_likelihood: f64::NAN,
            report: ConvergenceReport { converged: true, ..Default::default() },
        })
    }

    pub fn evaluator<'a>(&'a self, p: &'a PointPattern) -> ModelEvaluator<'a> {
        ModelEvaluator::new(&self.spec, p)
    }

    pub fn gamma(&self) -> f64 {
        self.spec.interaction.gamma()
    }

    pub fn record(&self) -> FittedModelRecord {
        FittedModelRecord {
            model: self.spec.clone(),
            mode: self.mode,
            quadrature: QuadratureSummary {
                m: self.quadrature.m,
                n_nodes: self.quadrature.nodes.len(),
                n_data: self.quadrature.n_data(),
                total_weight: self.quadrature.total_weight(),
            },
            log_pseudo_likelihood: if self.log_pseudo_likelihood.is_finite() {
                Some(self.log_pseudo_likelihood)
            } else {
                None
            },
            convergence: self.report.clone(),
        }
    }

    /// Rebuilds a fitted model from its record and the data it was fitted to.
    pub fn from_record(rec: FittedModelRecord, p: &PointPattern) -> Result<Self> {
        rec.model.validate()?;
        let quadrature = make_quadrature(p, Some(rec.quadrature.m))?;
        Ok(FittedModel {
            spec: rec.model,
            quadrature,
            mode: rec.mode,
            log_pseudo_likelihood: rec.log_pseudo_likelihood.unwrap_or(f64::NAN),
            report: rec.convergence,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSummary {
    pub m: usize,
    pub n_nodes: usize,
    pub n_data: usize,
    pub total_weight: f64,
}

/// JSON form of a fitted model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FittedModelRecord {
    pub model: ModelSpec,
    pub mode: Mode,
    pub quadrature: QuadratureSummary,
    pub log_pseudo_likelihood: Option<f64>,
    pub convergence: ConvergenceReport,
}

/// Fits all first-order coefficients and the interaction parameter.
pub fn fit_mple(p: &PointPattern, spec: &ModelSpec, opts: &FitOptions) -> Result<FittedModel> {
    spec.validate()?;
    let quadrature = make_quadrature(p, opts.m)?;
    let design = build_design(p, spec, &quadrature, opts.mode)?;
    let free = opts.mode.free_window(p.window())?;
    let n_free = design.is_data.iter().filter(|&&b| b).count();
    if n_free == 0 {
        return Err(Error::TooFewPoints("no data points in the fitting window".into()));
    }
    let mut start = vec![0.0; design.n_cols];
    start[0] = (n_free as f64 / free.area()).ln();
    let (theta, report) = maximise_design(&design, &start, opts)?;
    if !report.converged {
        let separated = design.n_cols >= 2 && !spec.is_poisson() && theta[design.n_cols - 1].abs() > 20.0;
        if !separated {
            return Err(Error::NonConvergence { iterations: report.iterations, gradient: report.gradient_norm });
        }
    }
    for w in &report.warnings {
        log::warn!("{w}");
    }
    let mut fitted = spec.clone();
    let k = spec.first_order.len();
    fitted.first_order.coefficients = theta[..k].to_vec();
    if !spec.is_poisson() {
        fitted.interaction.phi = theta[k];
        if matches!(spec.interaction.kind, crate::models::InteractionKind::Strauss { .. }) && theta[k] > 0.0 {
            log::warn!("fitted Strauss interaction is attractive (phi = {:.4}); the model cannot be simulated", theta[k]);
        }
    }
    let log_pl = design.objective(&theta);
    Ok(FittedModel { spec: fitted, quadrature, mode: opts.mode, log_pseudo_likelihood: log_pl, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Covariate, FirstOrderSpec, InteractionKind, InteractionSpec};
    use crate::simulate::{sample_gibbs, sample_poisson, McmcConfig};

    #[test]
    fn default_resolution_examples() {
        assert_eq!(default_dummy_resolution(100), 30);
        assert_eq!(default_dummy_resolution(36), 25);
        assert_eq!(default_dummy_resolution(400), 50);
        assert_eq!(default_dummy_resolution(0), 25);
    }

    #[test]
    fn quadrature_weights_partition_window() {
        let p = sample_poisson(&FirstOrderSpec::constant(300.0), &Window::unit(), 4).unwrap();
        let q = make_quadrature(&p, None).unwrap();
        assert!((q.total_weight() - 1.0).abs() < 1e-9);
        let mut seen = vec![0; p.n()];
        for node in &q.nodes {
            if let Some(i) = node.data {
                seen[i] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn homogeneous_poisson_fit_is_n_over_area() {
        let w = Window::new(0.0, 2.0, 0.0, 1.0).unwrap();
        let p = sample_poisson(&FirstOrderSpec::constant(80.0), &w, 12).unwrap();
        let f = fit_mple(&p, &ModelSpec::poisson(FirstOrderSpec::constant(1.0)), &FitOptions::default()).unwrap();
        let kappa = f.spec.first_order.coefficients[0].exp();
        assert!((kappa - p.n() as f64 / 2.0).abs() < 1e-9 * kappa);
    }

    #[test]
    fn log_linear_score_equation() {
        let fo = FirstOrderSpec::with_intercept(4.0, vec![(Covariate::X, 1.5), (Covariate::Y, -0.5)]);
        let p = sample_poisson(&fo, &Window::unit(), 3).unwrap();
        let f = fit_mple(&p, &ModelSpec::poisson(fo.clone()), &FitOptions::default()).unwrap();
        let ev = f.evaluator(&p);
        for (k, cov) in fo.covariates.iter().enumerate() {
            let lhs: f64 = p.points().iter().map(|u| cov.eval(u)).sum();
            let rhs: f64 = f
                .quadrature
                .nodes
                .iter()
                .map(|q| q.weight * cov.eval(&q.point) * ev.lambda_at(&q.point, q.data))
                .sum();
            assert!((lhs - rhs).abs() < 1e-6, "covariate {k}: {lhs} vs {rhs}");
        }
        assert!(f.report.objective_trace.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn strauss_fit_pseudo_score_identity_and_monotone() {
        let m = ModelSpec::new(
            FirstOrderSpec::constant(200.0),
            InteractionSpec::from_gamma(InteractionKind::Strauss { r: 0.05 }, 0.3),
        )
        .unwrap();
        let p = sample_gibbs(&m, &Window::unit(), &McmcConfig { n_steps: 20_000, seed: 5, ..Default::default() }).unwrap();
        for mode in [Mode::Unconditional, Mode::Conditional { range: 0.05 }] {
            let f = fit_mple(&p, &m, &FitOptions { mode, m: Some(40), ..Default::default() }).unwrap();
            assert!(f.report.converged);
            assert!(f.report.gradient_norm <= 1e-6);
            assert!(f.report.objective_trace.windows(2).all(|w| w[1] >= w[0]));
            let free = mode.free_window(p.window()).unwrap();
            let ev = f.evaluator(&p);
            let n_free = p.points().iter().filter(|u| free.contains(u)).count() as f64;
            let integral: f64 = f
                .quadrature
                .nodes
                .iter()
                .filter(|q| free.contains(&q.point))
                .map(|q| q.weight * ev.lambda_at(&q.point, q.data))
                .sum();
            assert!((n_free - integral).abs() < 1e-6, "{n_free} vs {integral}");
        }
    }

    #[test]
    fn rank_deficient_design_is_an_error() {
        let p = sample_poisson(&FirstOrderSpec::constant(50.0), &Window::unit(), 1).unwrap();
        let fo = FirstOrderSpec::with_intercept(0.0, vec![(Covariate::Linear { a: 1.0, b: 0.0, c: 0.0 }, 0.0)]);
        assert!(fit_mple(&p, &ModelSpec::poisson(fo), &FitOptions::default()).is_err());
    }

    #[test]
    fn separated_hard_core_warns() {
        // no r-close pairs at all: the Strauss estimate runs off to -∞
        let m = ModelSpec::new(
            FirstOrderSpec::constant(100.0),
            InteractionSpec::new(InteractionKind::Strauss { r: 0.04 }, f64::NEG_INFINITY),
        )
        .unwrap();
        let p = sample_gibbs(&m, &Window::unit(), &McmcConfig { n_steps: 20_000, seed: 2, ..Default::default() }).unwrap();
        let spec = ModelSpec::new(FirstOrderSpec::constant(1.0), InteractionSpec::new(InteractionKind::Strauss { r: 0.04 }, 0.0)).unwrap();
        let f = fit_mple(&p, &spec, &FitOptions::default()).unwrap();
        assert!(f.spec.interaction.phi < -20.0);
        assert!(!f.report.warnings.is_empty());
    }

    #[test]
    fn record_round_trip() {
        let p = sample_poisson(&FirstOrderSpec::constant(60.0), &Window::unit(), 8).unwrap();
        let spec = ModelSpec::new(FirstOrderSpec::constant(1.0), InteractionSpec::new(InteractionKind::geyer(0.05), 0.0)).unwrap();
        let f = fit_mple(&p, &spec, &FitOptions::default()).unwrap();
        let json = serde_json::to_string(&f.record()).unwrap();
        let back: FittedModelRecord = serde_json::from_str(&json).unwrap();
        let g = FittedModel::from_record(back, &p).unwrap();
        assert_eq!(g.spec, f.spec);
        assert_eq!(g.quadrature, f.quadrature);
    }
}
