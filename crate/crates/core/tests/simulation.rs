//! Stationarity of the birth–death sampler checked through the identity
//! `E n(X) = E ∫ λ(u, X) du`.

use ppdiag::fit::FittedModel;
use ppdiag::simulate::{sample_gibbs, McmcConfig};
use ppdiag::{FirstOrderSpec, InteractionKind, InteractionSpec, Mode, ModelSpec, PixelGrid, Window};

fn count_vs_integral(m: &ModelSpec, n_sims: u64) -> (f64, f64) {
    let g = PixelGrid::new(Window::unit(), 100, 100).unwrap();
    let diffs: Vec<f64> = (0..n_sims)
        .map(|s| {
            let cfg = McmcConfig { n_steps: 200_000, birth_prob: 0.5, seed: 1000 + s };
            let p = sample_gibbs(m, &Window::unit(), &cfg).unwrap();
            let fm = FittedModel::known(m.clone(), &p, Mode::Unconditional, None).unwrap();
            let ev = fm.evaluator(&p);
            let integral: f64 = g.centres().iter().map(|u| ev.lambda_new(u)).sum::<f64>() * g.pixel_area();
            p.n() as f64 - integral
        })
        .collect();
    let k = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / k;
    let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt();
    (mean, sd / k.sqrt())
}

#[test]
fn gnz_count_identity_geyer() {
    let m = ModelSpec::new(
        FirstOrderSpec::constant(4f64.exp()),
        InteractionSpec::new(InteractionKind::GeyerSat { r: 0.05, s: 4.5 }, 0.4),
    )
    .unwrap();
    let (mean, se) = count_vs_integral(&m, 20);
    assert!(mean.abs() < 4.0 * se + 1.0, "mean innovation {mean} (se {se})");
}

#[test]
fn gnz_count_identity_strauss() {
    let m = ModelSpec::new(
        FirstOrderSpec::constant(200.0),
        InteractionSpec::from_gamma(InteractionKind::Strauss { r: 0.05 }, 0.1),
    )
    .unwrap();
    let (mean, se) = count_vs_integral(&m, 20);
    assert!(mean.abs() < 4.0 * se + 1.0, "mean innovation {mean} (se {se})");
}
