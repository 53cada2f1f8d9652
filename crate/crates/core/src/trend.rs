//! Score-test diagnostics for the first-order trend: the Cox/Berman
//! covariate test, threshold profiles with lurking-variable residuals, and
//! kernel-smoothed residual fields.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::FittedModel;
use crate::geom::{PixelGrid, Point};
use crate::models::Covariate;
use crate::pattern::PointPattern;
use crate::summaries::FunctionTable;

/// Spatial covariate evaluated over the window.
pub type CovariateField = Covariate;

/// Smoothing kernel on the plane, normalised to unit mass.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kernel2D {
    Gaussian { sigma: f64 },
    UniformDisc { h: f64 },
}

impl Kernel2D {
    pub fn validate(&self) -> Result<()> {
        let s = match *self {
            Kernel2D::Gaussian { sigma } => sigma,
            Kernel2D::UniformDisc { h } => h,
        };
        if s > 0.0 && s.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("kernel bandwidth {s}")))
        }
    }

    /// Value at squared distance `d2`.
    pub fn eval(&self, d2: f64) -> f64 {
        match *self {
            Kernel2D::Gaussian { sigma } => {
                let s2 = sigma * sigma;
                (-0.5 * d2 / s2).exp() / (2.0 * std::f64::consts::PI * s2)
            }
            Kernel2D::UniformDisc { h } => {
                if d2 <= h * h {
                    1.0 / (std::f64::consts::PI * h * h)
                } else {
                    0.0
                }
            }
        }
    }

    /// Radius beyond which the kernel is treated as zero.
    pub fn support(&self) -> f64 {
        match *self {
            Kernel2D::Gaussian { sigma } => 6.0 * sigma,
            Kernel2D::UniformDisc { h } => h,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreTest {
    /// `Σ_i Z(x_i)`.
    pub s: f64,
    /// `κ̂ ∫ Z`.
    pub expected: f64,
    /// `κ̂ ∫ Z²`.
    pub variance: f64,
    pub t: f64,
}

/// Unconditional Cox score test `T = (S − κ̂∫Z) / √(κ̂∫Z²)` with `κ̂ = n/|W|`.
/// Integrals use the pixel midpoint rule on `grid`.
pub fn cox_score_test(p: &PointPattern, z: &CovariateField, grid: &PixelGrid) -> Result<ScoreTest> {
    if p.is_empty() {
        return Err(Error::TooFewPoints("score test needs at least one point".into()));
    }
    let a = grid.pixel_area();
    let (mut iz, mut iz2) = (0.0, 0.0);
    for c in grid.centres() {
        let v = z.eval(&c);
        iz += v * a;
        iz2 += v * v * a;
    }
    if !(iz2 > 0.0) {
        return Err(Error::InvalidParameter("degenerate covariate".into()));
    }
    let kappa = p.intensity();
    let s: f64 = p.points().iter().map(|u| z.eval(u)).sum();
    let expected = kappa * iz;
    let variance = kappa * iz2;
    Ok(ScoreTest { s, expected, variance, t: (s - expected) / variance.sqrt() })
}

/// Threshold score profile over `z_grid`.
///
/// Columns: `s` = `#{Z(x_i) ≤ z}`, `kappa_a` = `κ̂ A(z)` with `A(z)` the
/// pixel area of `{Z ≤ z}`, `t` = `(s − κ̂A)/√(κ̂A)` (NaN where `A(z) = 0`),
/// and `lurking` = `Σ_i 1{Z(x_i) ≤ z} − ∫ 1{Z(u) ≤ z} λ̂(u, x) du`, with the
/// integral taken over the fitted model's quadrature scheme and free window.
pub fn threshold_profile(
    p: &PointPattern,
    fm: &FittedModel,
    z: &CovariateField,
    z_grid: &[f64],
    grid: &PixelGrid,
) -> Result<FunctionTable> {
    if z_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("z grid must be strictly increasing".into()));
    }
    let w = *p.window();
    let free = fm.mode.free_window(&w)?;
    let kappa = p.intensity();
    let nz = z_grid.len();
    let bin = |v: f64| z_grid.partition_point(|&zz| zz < v);
    let cumulative = |items: &mut dyn Iterator<Item = (f64, f64)>| {
        let mut c = vec![0.0; nz];
        for (v, wgt) in items {
            let k = bin(v);
            if k < nz {
                c[k] += wgt;
            }
        }
        crate::summaries::cumulate(&mut c);
        c
    };
    let s = cumulative(&mut p.points().iter().map(|u| (z.eval(u), 1.0)));
    let area = cumulative(&mut grid.centres().into_iter().map(|c| (z.eval(&c), grid.pixel_area())));
    let s_free = cumulative(&mut p.points().iter().filter(|u| free.contains(u)).map(|u| (z.eval(u), 1.0)));
    let ev = fm.evaluator(p);
    let comp = cumulative(
        &mut fm
            .quadrature
            .nodes
            .iter()
            .filter(|q| free.contains(&q.point))
            .map(|q| (z.eval(&q.point), q.weight * ev.lambda_at(&q.point, q.data))),
    );
    let kappa_a: Vec<f64> = area.iter().map(|a| kappa * a).collect();
    let t = s
        .iter()
        .zip(&kappa_a)
        .map(|(s, e)| if *e > 0.0 { (s - e) / e.sqrt() } else { f64::NAN })
        .collect();
    let lurking = s_free.iter().zip(&comp).map(|(a, b)| a - b).collect();
    let mut table = FunctionTable::with_r(z_grid.to_vec());
    table.push("s", s)?;
    table.push("kappa_a", kappa_a)?;
    table.push("t", t)?;
    table.push("lurking", lurking)?;
    table.set_meta("abscissa", "z");
    Ok(table)
}

/// Smoothed residual field and hot-spot statistics on an output grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothedField {
    pub grid: PixelGrid,
    /// `Σ_i k(x_i − v)`.
    pub smoothed: Vec<f64>,
    /// `∫ k(u − v) λ̂(u) du`; equals `κ̂ M₁(v)` under CSR.
    pub expected: Vec<f64>,
    /// `∫ k(u − v)² λ̂(u) du`; equals `κ̂ M₂(v)` under CSR.
    pub variance: Vec<f64>,
    /// `smoothed − expected`.
    pub residual: Vec<f64>,
    /// `residual / √variance` (NaN where the variance vanishes).
    pub t: Vec<f64>,
    pub max_t: f64,
}

/// Kernel-smoothed residual field over `out_grid`, with integrals on the
/// pixel centres of `integration` using the fitted conditional intensity.
pub fn smoothed_residual_field(
    p: &PointPattern,
    fm: &FittedModel,
    k: &Kernel2D,
    out_grid: &PixelGrid,
    integration: &PixelGrid,
) -> Result<SmoothedField> {
    k.validate()?;
    let ev = fm.evaluator(p);
    let _ = p.index();
    let lam: Vec<f64> = integration.centres().par_iter().map(|u| ev.lambda_new(u)).collect();
    let a = integration.pixel_area();
    let centres = out_grid.centres();
    let rows: Vec<(f64, f64, f64)> = centres
        .par_iter()
        .map(|v| {
            let mut sm = 0.0;
            p.index().for_each_within(v, k.support(), |_, d2| sm += k.eval(d2));
            let (mut m1, mut m2) = (0.0, 0.0);
            integration.for_each_in_disc(v, k.support(), |idx, d2| {
                let kv = k.eval(d2);
                m1 += kv * lam[idx] * a;
                m2 += kv * kv * lam[idx] * a;
            });
            (sm, m1, m2)
        })
        .collect();
    let smoothed: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let expected: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let variance: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let residual: Vec<f64> = rows.iter().map(|r| r.0 - r.1).collect();
    let t: Vec<f64> =
        residual.iter().zip(&variance).map(|(r, v)| if *v > 0.0 { r / v.sqrt() } else { f64::NAN }).collect();
    let max_t = t.iter().copied().filter(|v| !v.is_nan()).fold(f64::NAN, f64::max);
    Ok(SmoothedField { grid: *out_grid, smoothed, expected, variance, residual, t, max_t })
}

/// Centre of the output pixel with the largest `T`.
pub fn hotspot(field: &SmoothedField) -> Option<Point> {
    let (idx, _) = field
        .t
        .iter()
        .enumerate()
        .filter(|(_, v)| !v.is_nan())
        .max_by(|a, b| a.1.total_cmp(b.1))?;
    let g = field.grid;
    Some(g.centre(idx % g.nx, idx / g.nx))
}
