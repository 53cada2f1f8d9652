//! Pointwise Monte Carlo envelopes for any diagnostic that produces a column.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::simulate_model;
use crate::error::{Error, Result};
use crate::fit::{fit_mple, FitOptions, FittedModel};
use crate::pattern::PointPattern;
use crate::simulate::{stream_seed, McmcConfig};
use crate::summaries::FunctionTable;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvelopeSpec {
    pub n_sims: usize,
    pub lo: f64,
    pub hi: f64,
    /// Refit the null model to every simulated pattern.
    pub refit: bool,
    pub seed: u64,
}

impl Default for EnvelopeSpec {
    fn default() -> Self {
        EnvelopeSpec { n_sims: 1000, lo: 0.025, hi: 0.975, refit: false, seed: 0 }
    }
}

impl EnvelopeSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.lo && self.lo < self.hi && self.hi < 1.0) {
            return Err(Error::InvalidParameter(format!("quantiles ({}, {})", self.lo, self.hi)));
        }
        if self.n_sims < 19 {
            return Err(Error::InvalidParameter(format!("n_sims = {} < 19", self.n_sims)));
        }
        Ok(())
    }
}

/// Value of rank `⌈q·n⌉` (1-based) in the sorted sample.
fn order_stat(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Simulation envelope of `diag` under the model in `data_fit`.
///
/// `diag(pattern, fitted)` is applied to the data with `data_fit` and to
/// each simulated pattern with either the refitted model (`spec.refit`) or
/// the data fit's parameters. Replicates whose simulation, fit or
/// diagnostic fails are dropped; more than 5% dropped is an error.
/// Returns columns `data, mean, lo, hi` over `abscissa`.
pub fn envelope<F>(
    diag: F,
    data: &PointPattern,
    data_fit: &FittedModel,
    abscissa: &[f64],
    spec: &EnvelopeSpec,
    mcmc: &McmcConfig,
    fit_opts: &FitOptions,
) -> Result<FunctionTable>
where
    F: Fn(&PointPattern, &FittedModel) -> Result<Vec<f64>> + Sync,
{
    spec.validate()?;
    data_fit.spec.check_simulable()?;
    let nr = abscissa.len();
    let observed = diag(data, data_fit)?;
    if observed.len() != nr {
        return Err(Error::InvalidParameter("diagnostic length does not match abscissa".into()));
    }
    let w = *data.window();
    let null = &data_fit.spec;
    let replicate = |i: u64| -> Result<Vec<f64>> {
        let sim = simulate_model(null, &w, stream_seed(spec.seed, i), mcmc)?;
        let fm = if spec.refit {
            fit_mple(&sim, null, fit_opts)?
        } else {
            FittedModel::known(null.clone(), &sim, data_fit.mode, Some(data_fit.quadrature.m))?
        };
        let v = diag(&sim, &fm)?;
        if v.len() != nr {
            return Err(Error::InvalidParameter("diagnostic length does not match abscissa".into()));
        }
        Ok(v)
    };
    let results: Vec<Result<Vec<f64>>> = (0..spec.n_sims as u64).into_par_iter().map(replicate).collect();
    let mut sims = Vec::with_capacity(spec.n_sims);
    let mut dropped = 0usize;
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => sims.push(v),
            Err(e) => {
                log::warn!("envelope replicate {i} dropped: {e}");
                dropped += 1;
            }
        }
    }
    if dropped * 20 > spec.n_sims {
        return Err(Error::TooManyDropped { dropped, total: spec.n_sims });
    }
    let mut mean = vec![f64::NAN; nr];
    let mut lo = vec![f64::NAN; nr];
    let mut hi = vec![f64::NAN; nr];
    let mut col = Vec::with_capacity(sims.len());
    for k in 0..nr {
        col.clear();
        col.extend(sims.iter().map(|v| v[k]).filter(|x| !x.is_nan()));
        if col.is_empty() {
            continue;
        }
        col.sort_by(f64::total_cmp);
        mean[k] = col.iter().sum::<f64>() / col.len() as f64;
        lo[k] = order_stat(&col, spec.lo);
        hi[k] = order_stat(&col, spec.hi);
    }
    let mut t = FunctionTable::with_r(abscissa.to_vec());
    t.push("data", observed)?;
    t.push("mean", mean)?;
    t.push("lo", lo)?;
    t.push("hi", hi)?;
    t.set_meta("n_sims", spec.n_sims.to_string());
    t.set_meta("dropped", dropped.to_string());
    t.set_meta("seed", spec.seed.to_string());
    t.set_meta("refit", spec.refit.to_string());
    Ok(t)
}
