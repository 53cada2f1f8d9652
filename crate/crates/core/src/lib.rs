//! Simulation, pseudo-likelihood fitting and residual diagnostics for
//! Gibbs point process models on rectangular windows.
//!
//! The main entry points are [`simulate::sample_gibbs`], [`fit::fit_mple`],
//! the summaries in [`summaries`] and the residual machinery in
//! [`diagnostics`].

pub mod diagnostics;
pub mod envelopes;
pub mod error;
pub mod fit;
pub mod geom;
pub mod io;
pub mod models;
pub mod pattern;
pub mod simulate;
pub mod summaries;
pub mod trend;

pub use error::{Error, Result};
pub use geom::{PixelGrid, Point, Window};
pub use models::{Covariate, FirstOrderSpec, InteractionKind, InteractionSpec, Mode, ModelSpec};
pub use pattern::PointPattern;
