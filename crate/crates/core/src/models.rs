//! Covariates, interaction potentials and the Papangelou conditional intensity.
//!
//! A model has log-linear first-order term `β·Z(u)` and one interaction
//! term `φ·V(x)`, so that `λ(u, x) = exp(β·Z(u) + φ·Δ_u V(x))`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{coverage_count_field, union_discs_area, PixelGrid, Point, SpatialIndex, Window};
use crate::pattern::PointPattern;

/// Gridded covariate sampled at pixel centres, bilinearly interpolated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Raster {
    pub window: Window,
    pub nx: usize,
    pub ny: usize,
    /// Row-major, row 0 at `y_min`.
    pub values: Vec<f64>,
}

impl Raster {
    pub fn new(window: Window, nx: usize, ny: usize, values: Vec<f64>) -> Result<Self> {
        window.validate()?;
        if nx == 0 || ny == 0 || values.len() != nx * ny {
            return Err(Error::InvalidParameter(format!(
                "raster {nx}x{ny} with {} values",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("raster has non-finite values".into()));
        }
        Ok(Raster { window, nx, ny, values })
    }

    pub fn from_fn(grid: &PixelGrid, f: impl Fn(&Point) -> f64) -> Result<Self> {
        let values = grid.centres().iter().map(f).collect();
        Raster::new(grid.window, grid.nx, grid.ny, values)
    }

    pub fn grid(&self) -> PixelGrid {
        PixelGrid { window: self.window, nx: self.nx, ny: self.ny }
    }

    pub fn value_at(&self, u: &Point) -> f64 {
        let dx = self.window.width() / self.nx as f64;
        let dy = self.window.height() / self.ny as f64;
        let fx = ((u.x - self.window.x_min) / dx - 0.5).clamp(0.0, (self.nx - 1) as f64);
        let fy = ((u.y - self.window.y_min) / dy - 0.5).clamp(0.0, (self.ny - 1) as f64);
        let (i0, j0) = (fx.floor() as usize, fy.floor() as usize);
        let (i1, j1) = ((i0 + 1).min(self.nx - 1), (j0 + 1).min(self.ny - 1));
        let (tx, ty) = (fx - i0 as f64, fy - j0 as f64);
        let v = |i: usize, j: usize| self.values[j * self.nx + i];
        (1.0 - ty) * ((1.0 - tx) * v(i0, j0) + tx * v(i1, j0))
            + ty * ((1.0 - tx) * v(i0, j1) + tx * v(i1, j1))
    }
}

/// A real-valued spatial covariate `Z(u)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Covariate {
    Constant,
    X,
    Y,
    /// `x^px y^py`
    Monomial { px: u32, py: u32 },
    /// `a + b x + c y`
    Linear { a: f64, b: f64, c: f64 },
    Raster { raster: Arc<Raster> },
}

impl Covariate {
    #[inline]
    pub fn eval(&self, u: &Point) -> f64 {
        match self {
            Covariate::Constant => 1.0,
            Covariate::X => u.x,
            Covariate::Y => u.y,
            Covariate::Monomial { px, py } => u.x.powi(*px as i32) * u.y.powi(*py as i32),
            Covariate::Linear { a, b, c } => a + b * u.x + c * u.y,
            Covariate::Raster { raster } => raster.value_at(u),
        }
    }
}

/// Log-linear first-order term. The first covariate is always the constant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FirstOrderSpec {
    pub covariates: Vec<Covariate>,
    /// `-inf` (written as the string `"-inf"`) gives zero intensity.
    #[serde(with = "extended_float::vec")]
    pub coefficients: Vec<f64>,
}

impl FirstOrderSpec {
    pub fn new(covariates: Vec<Covariate>, coefficients: Vec<f64>) -> Result<Self> {
        let fo = FirstOrderSpec { covariates, coefficients };
        fo.validate()?;
        Ok(fo)
    }

    /// Homogeneous intensity `kappa`.
    pub fn constant(kappa: f64) -> Self {
        FirstOrderSpec { covariates: vec![Covariate::Constant], coefficients: vec![kappa.ln()] }
    }

    /// Intercept plus the given covariates.
    pub fn with_intercept(log_kappa: f64, extra: Vec<(Covariate, f64)>) -> Self {
        let mut covariates = vec![Covariate::Constant];
        let mut coefficients = vec![log_kappa];
        for (c, b) in extra {
            covariates.push(c);
            coefficients.push(b);
        }
        FirstOrderSpec { covariates, coefficients }
    }

    pub fn validate(&self) -> Result<()> {
        if self.covariates.first() != Some(&Covariate::Constant) {
            return Err(Error::InvalidParameter("first covariate must be the constant".into()));
        }
        if self.covariates.len() != self.coefficients.len() {
            return Err(Error::InvalidParameter(format!(
                "{} covariates but {} coefficients",
                self.covariates.len(),
                self.coefficients.len()
            )));
        }
        if self.coefficients.iter().any(|b| b.is_nan() || *b == f64::INFINITY) {
            return Err(Error::InvalidParameter("coefficients must be finite".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.covariates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.covariates.is_empty()
    }

    #[inline]
    pub fn log_intensity(&self, u: &Point) -> f64 {
        let mut s = self.coefficients[0];
        for (c, b) in self.covariates.iter().zip(&self.coefficients).skip(1) {
            if *b != 0.0 {
                s += b * c.eval(u);
            }
        }
        s
    }

    #[inline]
    pub fn intensity(&self, u: &Point) -> f64 {
        self.log_intensity(u).exp()
    }

    pub fn design_row(&self, u: &Point, out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.covariates) {
            *o = c.eval(u);
        }
    }

    /// Upper bound on the intensity over `w` from a fine lattice search,
    /// inflated slightly to absorb curvature between lattice nodes.
    pub fn max_intensity(&self, w: &Window) -> f64 {
        let k = 256usize;
        let mut best = f64::NEG_INFINITY;
        for j in 0..=k {
            for i in 0..=k {
                let u = Point::new(
                    w.x_min + w.width() * i as f64 / k as f64,
                    w.y_min + w.height() * j as f64 / k as f64,
                );
                best = best.max(self.log_intensity(&u));
            }
        }
        (best + 0.02).exp()
    }

    pub fn is_homogeneous(&self) -> bool {
        self.coefficients.iter().skip(1).all(|b| *b == 0.0)
    }
}

/// Interaction potential families.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InteractionKind {
    None,
    /// `V_S`: number of r-close pairs.
    Strauss { r: f64 },
    /// `V_{G,s} = Σ_i min(s, t(x_i, x_{-i}, r))`; `s = 1` counts points with an r-close neighbour.
    GeyerSat { r: f64, s: f64 },
    /// `V_A = -|W ∩ ∪ B(x_i, r)|`, pixel approximated.
    AreaInteraction { r: f64 },
    /// `Σ_{i<j, d ≤ cutoff} σ⁴/d⁴`.
    SoftCore { sigma2: f64, cutoff: f64 },
    /// `V_T`: triples whose three sides are all at most `r`.
    Triplet { r: f64 },
}

impl InteractionKind {
    /// Geyer saturation with `s = 1`.
    pub fn geyer(r: f64) -> Self {
        InteractionKind::GeyerSat { r, s: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        match *self {
            InteractionKind::None => Ok(()),
            InteractionKind::Strauss { r }
            | InteractionKind::AreaInteraction { r }
            | InteractionKind::Triplet { r } => {
                if r > 0.0 && r.is_finite() {
                    Ok(())
                } else {
                    bad("interaction radius must be positive")
                }
            }
            InteractionKind::GeyerSat { r, s } => {
                if !(r > 0.0 && r.is_finite()) {
                    bad("interaction radius must be positive")
                } else if !(s > 0.0) {
                    bad("saturation must be positive")
                } else {
                    Ok(())
                }
            }
            InteractionKind::SoftCore { sigma2, cutoff } => {
                if sigma2 > 0.0 && cutoff > 0.0 && cutoff.is_finite() {
                    Ok(())
                } else {
                    bad("soft core needs sigma2 > 0 and cutoff > 0")
                }
            }
        }
    }

    /// Interaction range: points further than this from `u` do not affect `Δ_u V`.
    pub fn range(&self) -> f64 {
        match *self {
            InteractionKind::None => 0.0,
            InteractionKind::Strauss { r } | InteractionKind::Triplet { r } => r,
            InteractionKind::GeyerSat { r, .. } | InteractionKind::AreaInteraction { r } => 2.0 * r,
            InteractionKind::SoftCore { cutoff, .. } => cutoff,
        }
    }

    /// Radius within which neighbours of `u` enter `Δ_u V` directly.
    pub fn reach(&self) -> f64 {
        match *self {
            InteractionKind::None => 0.0,
            InteractionKind::Strauss { r }
            | InteractionKind::Triplet { r }
            | InteractionKind::GeyerSat { r, .. }
            | InteractionKind::AreaInteraction { r } => r,
            InteractionKind::SoftCore { cutoff, .. } => cutoff,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            InteractionKind::None => "poisson",
            InteractionKind::Strauss { .. } => "strauss",
            InteractionKind::GeyerSat { .. } => "geyer",
            InteractionKind::AreaInteraction { .. } => "area",
            InteractionKind::SoftCore { .. } => "soft_core",
            InteractionKind::Triplet { .. } => "triplet",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionSpec {
    pub kind: InteractionKind,
    /// Interaction parameter; `γ = exp(φ)`. Hard cores use `φ = -∞`.
    #[serde(with = "extended_float")]
    pub phi: f64,
}

impl InteractionSpec {
    pub fn none() -> Self {
        InteractionSpec { kind: InteractionKind::None, phi: 0.0 }
    }

    pub fn new(kind: InteractionKind, phi: f64) -> Self {
        InteractionSpec { kind, phi }
    }

    pub fn from_gamma(kind: InteractionKind, gamma: f64) -> Self {
        InteractionSpec { kind, phi: gamma.ln() }
    }

    pub fn gamma(&self) -> f64 {
        self.phi.exp()
    }

    pub fn is_none(&self) -> bool {
        matches!(self.kind, InteractionKind::None)
    }
}

/// Serialises `±∞` as the strings "inf"/"-inf" since JSON has no infinities.
mod extended_float {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                _ => Err(serde::de::Error::custom(format!("bad number {s:?}"))),
            },
        }
    }

    pub mod vec {
        use serde::ser::SerializeSeq;
        use serde::{Deserialize, Deserializer, Serializer};

        #[derive(Deserialize)]
        struct Item(#[serde(with = "super")] f64);

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            let mut seq = s.serialize_seq(Some(v.len()))?;
            for x in v {
                if x.is_infinite() {
                    seq.serialize_element(if *x > 0.0 { "inf" } else { "-inf" })?;
                } else {
                    seq.serialize_element(x)?;
                }
            }
            seq.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            Ok(Vec::<Item>::deserialize(d)?.into_iter().map(|i| i.0).collect())
        }
    }
}

fn default_pixel_resolution() -> usize {
    256
}

/// Full model: first-order term plus one interaction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub first_order: FirstOrderSpec,
    pub interaction: InteractionSpec,
    /// Pixel resolution used for area-interaction potentials.
    #[serde(default = "default_pixel_resolution")]
    pub pixel_resolution: usize,
}

impl ModelSpec {
    pub fn new(first_order: FirstOrderSpec, interaction: InteractionSpec) -> Result<Self> {
        let m = ModelSpec { first_order, interaction, pixel_resolution: default_pixel_resolution() };
        m.validate()?;
        Ok(m)
    }

    pub fn poisson(first_order: FirstOrderSpec) -> Self {
        ModelSpec {
            first_order,
            interaction: InteractionSpec::none(),
            pixel_resolution: default_pixel_resolution(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.first_order.validate()?;
        self.interaction.kind.validate()?;
        if self.interaction.phi.is_nan() {
            return Err(Error::InvalidParameter("phi is NaN".into()));
        }
        if self.pixel_resolution == 0 {
            return Err(Error::InvalidParameter("pixel_resolution must be positive".into()));
        }
        Ok(())
    }

    pub fn range(&self) -> f64 {
        self.interaction.kind.range()
    }

    pub fn is_poisson(&self) -> bool {
        self.interaction.is_none()
    }

    /// Number of fitted parameters (β plus φ unless Poisson).
    pub fn n_params(&self) -> usize {
        self.first_order.len() + usize::from(!self.is_poisson())
    }

    pub fn pixel_grid(&self, w: &Window) -> PixelGrid {
        PixelGrid { window: *w, nx: self.pixel_resolution, ny: self.pixel_resolution }
    }

    pub fn with_pixel_resolution(mut self, n: usize) -> Self {
        self.pixel_resolution = n;
        self
    }

    /// Whether the density is known to be integrable for simulation.
    pub fn check_simulable(&self) -> Result<()> {
        let phi = self.interaction.phi;
        match self.interaction.kind {
            InteractionKind::Strauss { .. } | InteractionKind::Triplet { .. } if phi > 0.0 => {
                Err(Error::NotSimulable(format!(
                    "{} with phi = {phi} > 0 is not integrable",
                    self.interaction.kind.name()
                )))
            }
            InteractionKind::SoftCore { .. } if phi > 0.0 => Err(Error::NotSimulable(
                "soft core needs phi <= 0 to be repulsive".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// Smallest cutoff at which the soft-core pair potential `σ⁴/d⁴` drops to `eps`.
pub fn soft_core_cutoff(sigma2: f64, eps: f64) -> f64 {
    sigma2.sqrt() / eps.powf(0.25)
}

/// Diagnostic conditioning mode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Unconditional,
    /// Condition on the points in the border strip of width `range`.
    Conditional { range: f64 },
}

impl Mode {
    /// `(W_free, range)`; the free window is the whole window when unconditional.
    pub fn free_window(&self, w: &Window) -> Result<Window> {
        match *self {
            Mode::Unconditional => Ok(*w),
            Mode::Conditional { range } => {
                if !(range >= 0.0) {
                    return Err(Error::InvalidParameter(format!("border range {range}")));
                }
                w.erode(range).ok_or(Error::EmptyErosion(range))
            }
        }
    }

    pub fn range(&self) -> f64 {
        match *self {
            Mode::Unconditional => 0.0,
            Mode::Conditional { range } => range,
        }
    }
}

// ---------------------------------------------------------------------------
// Potentials

/// `V(x)` for the given interaction family.
pub fn potential(kind: &InteractionKind, pts: &[Point], grid: &PixelGrid) -> f64 {
    match *kind {
        InteractionKind::None => 0.0,
        InteractionKind::Strauss { r } => {
            let mut c = 0usize;
            for i in 0..pts.len() {
                for j in 0..i {
                    if pts[i].dist2(&pts[j]) <= r * r {
                        c += 1;
                    }
                }
            }
            c as f64
        }
        InteractionKind::GeyerSat { r, s } => (0..pts.len())
            .map(|i| {
                let t = (0..pts.len())
                    .filter(|&j| j != i && pts[i].dist2(&pts[j]) <= r * r)
                    .count() as f64;
                t.min(s)
            })
            .sum(),
        InteractionKind::AreaInteraction { r } => -union_discs_area(pts, r, grid),
        InteractionKind::SoftCore { sigma2, cutoff } => {
            let s4 = sigma2 * sigma2;
            let mut v = 0.0;
            for i in 0..pts.len() {
                for j in 0..i {
                    let d2 = pts[i].dist2(&pts[j]);
                    if d2 <= cutoff * cutoff {
                        v += s4 / (d2 * d2);
                    }
                }
            }
            v
        }
        InteractionKind::Triplet { r } => {
            let r2 = r * r;
            let mut c = 0usize;
            for i in 0..pts.len() {
                for j in 0..i {
                    if pts[i].dist2(&pts[j]) > r2 {
                        continue;
                    }
                    for k in 0..j {
                        if pts[i].dist2(&pts[k]) <= r2 && pts[j].dist2(&pts[k]) <= r2 {
                            c += 1;
                        }
                    }
                }
            }
            c as f64
        }
    }
}

/// `Δ_u V(x) = V(x ∪ u) − V(x)` for `u` not in the pattern.
pub fn delta_potential(kind: &InteractionKind, p: &PointPattern, u: &Point, grid: &PixelGrid) -> f64 {
    InteractionContext::new(*kind, p, Some(*grid)).delta_new(u)
}

/// Per-pattern caches for evaluating `Δ_u V` at many locations.
#[derive(Clone, Debug)]
pub struct InteractionContext<'a> {
    kind: InteractionKind,
    pattern: &'a PointPattern,
    grid: Option<PixelGrid>,
    /// Geyer: r-neighbour counts of each data point.
    counts: Vec<u32>,
    /// Area interaction: coverage counts per pixel.
    cover: Vec<u32>,
}

impl<'a> InteractionContext<'a> {
    pub fn new(kind: InteractionKind, pattern: &'a PointPattern, grid: Option<PixelGrid>) -> Self {
        let mut counts = Vec::new();
        let mut cover = Vec::new();
        match kind {
            InteractionKind::GeyerSat { r, .. } => {
                let idx = pattern.index();
                counts = pattern
                    .points()
                    .iter()
                    .enumerate()
                    .map(|(i, x)| {
                        let mut c = 0u32;
                        idx.for_each_within(x, r, |j, _| c += u32::from(j != i));
                        c
                    })
                    .collect();
            }
            InteractionKind::AreaInteraction { r } => {
                let g = grid.unwrap_or(PixelGrid { window: *pattern.window(), nx: 256, ny: 256 });
                cover = coverage_count_field(pattern.points(), r, &g);
            }
            _ => {}
        }
        let grid = match kind {
            InteractionKind::AreaInteraction { .. } => {
                Some(grid.unwrap_or(PixelGrid { window: *pattern.window(), nx: 256, ny: 256 }))
            }
            _ => grid,
        };
        InteractionContext { kind, pattern, grid, counts, cover }
    }

    pub fn kind(&self) -> &InteractionKind {
        &self.kind
    }

    pub fn pattern(&self) -> &PointPattern {
        self.pattern
    }

    fn index(&self) -> &SpatialIndex {
        self.pattern.index()
    }

    /// `Δ_u V(x)` for a location `u` that is not a data point.
    pub fn delta_new(&self, u: &Point) -> f64 {
        self.delta(u, None)
    }

    /// `Δ_{x_i} V(x_{-i}) = V(x) − V(x_{-i})`.
    pub fn delta_data(&self, i: usize) -> f64 {
        self.delta(&self.pattern.points()[i], Some(i))
    }

    fn delta(&self, u: &Point, excl: Option<usize>) -> f64 {
        let pts = self.pattern.points();
        match self.kind {
            InteractionKind::None => 0.0,
            InteractionKind::Strauss { r } => {
                let mut c = 0usize;
                self.index().for_each_within(u, r, |j, _| c += usize::from(Some(j) != excl));
                c as f64
            }
            InteractionKind::GeyerSat { r, s } => {
                let mut tu = 0.0f64;
                let mut acc = 0.0;
                self.index().for_each_within(u, r, |j, _| {
                    if Some(j) == excl {
                        return;
                    }
                    tu += 1.0;
                    let t = self.counts[j] as f64;
                    acc += if excl.is_some() {
                        // counts include x_i itself
                        t.min(s) - (t - 1.0).min(s)
                    } else {
                        (t + 1.0).min(s) - t.min(s)
                    };
                });
                tu.min(s) + acc
            }
            InteractionKind::AreaInteraction { r } => {
                let g = self.grid.as_ref().expect("area context has a grid");
                let target = if excl.is_some() { 1 } else { 0 };
                let mut c = 0usize;
                g.for_each_in_disc(u, r, |k, _| c += usize::from(self.cover[k] == target));
                -(c as f64) * g.pixel_area()
            }
            InteractionKind::SoftCore { sigma2, cutoff } => {
                let s4 = sigma2 * sigma2;
                let mut v = 0.0;
                self.index().for_each_within(u, cutoff, |j, d2| {
                    if Some(j) != excl {
                        v += s4 / (d2 * d2);
                    }
                });
                v
            }
            InteractionKind::Triplet { r } => {
                let mut nb = Vec::new();
                self.index().for_each_within(u, r, |j, _| {
                    if Some(j) != excl {
                        nb.push(j);
                    }
                });
                let r2 = r * r;
                let mut c = 0usize;
                for a in 0..nb.len() {
                    for b in 0..a {
                        if pts[nb[a]].dist2(&pts[nb[b]]) <= r2 {
                            c += 1;
                        }
                    }
                }
                c as f64
            }
        }
    }
}

/// `φ·Δ` with the convention `φ·0 = 0` so that hard cores (`φ = −∞`) work.
#[inline]
pub fn interaction_term(phi: f64, delta: f64) -> f64 {
    if delta == 0.0 || phi == 0.0 {
        0.0
    } else {
        phi * delta
    }
}

/// Evaluates `λ_θ(u, x)` for a fixed model and pattern.
#[derive(Clone, Debug)]
pub struct ModelEvaluator<'a> {
    spec: &'a ModelSpec,
    ctx: InteractionContext<'a>,
}

impl<'a> ModelEvaluator<'a> {
    pub fn new(spec: &'a ModelSpec, pattern: &'a PointPattern) -> Self {
        let grid = spec.pixel_grid(pattern.window());
        ModelEvaluator { spec, ctx: InteractionContext::new(spec.interaction.kind, pattern, Some(grid)) }
    }

    pub fn spec(&self) -> &ModelSpec {
        self.spec
    }

    pub fn context(&self) -> &InteractionContext<'a> {
        &self.ctx
    }

    pub fn delta_new(&self, u: &Point) -> f64 {
        self.ctx.delta_new(u)
    }

    pub fn delta_data(&self, i: usize) -> f64 {
        self.ctx.delta_data(i)
    }

    pub fn lambda_new(&self, u: &Point) -> f64 {
        let d = if self.spec.is_poisson() { 0.0 } else { self.ctx.delta_new(u) };
        (self.spec.first_order.log_intensity(u) + interaction_term(self.spec.interaction.phi, d)).exp()
    }

    pub fn lambda_data(&self, i: usize) -> f64 {
        let u = self.ctx.pattern().points()[i];
        let d = if self.spec.is_poisson() { 0.0 } else { self.ctx.delta_data(i) };
        (self.spec.first_order.log_intensity(&u) + interaction_term(self.spec.interaction.phi, d)).exp()
    }

    /// `λ(u, x)`; a `u` coinciding with data point `x_i` gives `λ(x_i, x_{-i})`.
    pub fn lambda_at(&self, u: &Point, data_index: Option<usize>) -> f64 {
        match data_index {
            Some(i) => self.lambda_data(i),
            None => self.lambda_new(u),
        }
    }
}

fn locate(p: &PointPattern, u: &Point) -> Option<usize> {
    let mut hit = None;
    p.index().for_each_within(u, 0.0, |j, _| hit = Some(j));
    hit
}

/// Papangelou conditional intensity `λ_θ(u, x)`.
///
/// In conditional mode the result is zero outside `W ⊖ R`, and `Δ_u V` is
/// still evaluated against the full pattern.
pub fn cond_intensity(m: &ModelSpec, u: &Point, p: &PointPattern, mode: Mode) -> Result<f64> {
    let w = p.window();
    if !w.contains(u) {
        return Err(Error::OutsideDomain { x: u.x, y: u.y });
    }
    let free = mode.free_window(w)?;
    if !free.contains(u) {
        return Ok(0.0);
    }
    let ev = ModelEvaluator::new(m, p);
    Ok(ev.lambda_at(u, locate(p, u)))
}

/// `λ₂(u, v, x) = λ(u, x) λ(v, x ∪ u)`.
pub fn second_order_cond_intensity(m: &ModelSpec, u: &Point, v: &Point, p: &PointPattern) -> Result<f64> {
    if u == v {
        return Err(Error::InvalidParameter("second-order intensity needs u != v".into()));
    }
    let w = p.window();
    for q in [u, v] {
        if !w.contains(q) {
            return Err(Error::OutsideDomain { x: q.x, y: q.y });
        }
    }
    let lu = cond_intensity(m, u, p, Mode::Unconditional)?;
    let pu = p.with_point(*u)?;
    let lv = ModelEvaluator::new(m, &pu).lambda_new(v);
    Ok(lu * lv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn grid() -> PixelGrid {
        PixelGrid::new(Window::unit(), 256, 256).unwrap()
    }

    fn random_pattern(seed: u64, n: usize) -> PointPattern {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = (0..n).map(|_| Point::new(rng.random(), rng.random())).collect();
        PointPattern::new(pts, Window::unit()).unwrap()
    }

    fn all_kinds() -> Vec<InteractionKind> {
        vec![
            InteractionKind::Strauss { r: 0.08 },
            InteractionKind::geyer(0.08),
            InteractionKind::GeyerSat { r: 0.08, s: 4.5 },
            InteractionKind::GeyerSat { r: 0.1, s: 2.0 },
            InteractionKind::AreaInteraction { r: 0.06 },
            InteractionKind::SoftCore { sigma2: 0.001, cutoff: 0.15 },
            InteractionKind::Triplet { r: 0.1 },
        ]
    }

    #[test]
    fn potential_hand_counts() {
        let g = grid();
        let pts = [Point::new(0.0, 0.0), Point::new(0.03, 0.0), Point::new(0.5, 0.5)];
        assert_eq!(potential(&InteractionKind::Strauss { r: 0.05 }, &pts, &g), 1.0);
        assert_eq!(potential(&InteractionKind::geyer(0.05), &pts, &g), 2.0);
        assert_eq!(potential(&InteractionKind::Triplet { r: 0.05 }, &pts, &g), 0.0);
        let h = 0.04 * 3f64.sqrt() / 2.0;
        let tri = [Point::new(0.5, 0.5), Point::new(0.54, 0.5), Point::new(0.52, 0.5 + h)];
        assert_eq!(potential(&InteractionKind::Triplet { r: 0.05 }, &tri, &g), 1.0);
        assert_eq!(potential(&InteractionKind::Strauss { r: 0.05 }, &tri, &g), 3.0);
        assert_eq!(potential(&InteractionKind::geyer(0.05), &tri, &g), 3.0);
        let va = potential(&InteractionKind::AreaInteraction { r: 0.1 }, &[Point::new(0.5, 0.5)], &g);
        assert!((va + PI * 0.01).abs() < 16.0 * g.pixel_area());
    }

    #[test]
    fn delta_locality() {
        let g = grid();
        let p = PointPattern::new(vec![Point::new(0.1, 0.1), Point::new(0.2, 0.1)], Window::unit()).unwrap();
        let far = Point::new(0.7, 0.7);
        assert_eq!(delta_potential(&InteractionKind::Strauss { r: 0.05 }, &p, &far, &g), 0.0);
        assert_eq!(delta_potential(&InteractionKind::geyer(0.05), &p, &far, &g), 0.0);
        let da = delta_potential(&InteractionKind::AreaInteraction { r: 0.05 }, &p, &far, &g);
        assert!((da + PI * 0.0025).abs() < 16.0 * g.pixel_area());
        let near = Point::new(0.14, 0.1);
        assert_eq!(delta_potential(&InteractionKind::Strauss { r: 0.07 }, &p, &near, &g), 2.0);
    }

    #[test]
    fn delta_matches_recompute() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for seed in 0..5 {
            let p = random_pattern(seed, 80);
            for kind in all_kinds() {
                let ctx = InteractionContext::new(kind, &p, Some(g));
                let base = potential(&kind, p.points(), &g);
                for _ in 0..10 {
                    let u = Point::new(rng.random(), rng.random());
                    let oracle = potential(&kind, p.with_point(u).unwrap().points(), &g) - base;
                    let d = ctx.delta_new(&u);
                    // the recompute oracle cancels two sums of size |V(x)|
                    assert!((d - oracle).abs() <= 1e-10 * (1.0 + base.abs()), "{kind:?}: {d} vs {oracle}");
                }
                for i in [0, 17, 79] {
                    let oracle = base - potential(&kind, p.without(i).points(), &g);
                    let d = ctx.delta_data(i);
                    assert!((d - oracle).abs() <= 1e-10 * (1.0 + base.abs()), "{kind:?} data: {d} vs {oracle}");
                }
            }
        }
    }

    #[test]
    fn cond_intensity_examples() {
        let w = Window::unit();
        let p = PointPattern::new(vec![Point::new(0.5, 0.5), Point::new(0.9, 0.9)], w).unwrap();
        let pois = ModelSpec::poisson(FirstOrderSpec::constant(100.0));
        let l = cond_intensity(&pois, &Point::new(0.2, 0.3), &p, Mode::Unconditional).unwrap();
        assert!((l - 100.0).abs() < 1e-12);
        let st = ModelSpec::new(
            FirstOrderSpec::constant(100.0),
            InteractionSpec::from_gamma(InteractionKind::Strauss { r: 0.1 }, 0.5),
        )
        .unwrap();
        let l = cond_intensity(&st, &Point::new(0.55, 0.5), &p, Mode::Unconditional).unwrap();
        assert!((l - 50.0).abs() < 1e-12);
        // conditional: zero in the border strip
        let l = cond_intensity(&st, &Point::new(0.05, 0.5), &p, Mode::Conditional { range: 0.1 }).unwrap();
        assert_eq!(l, 0.0);
        assert!(cond_intensity(&st, &Point::new(1.5, 0.5), &p, Mode::Unconditional).is_err());
    }

    #[test]
    fn cond_intensity_matches_density_ratio() {
        let g = grid();
        let fo = FirstOrderSpec::with_intercept(4.0, vec![(Covariate::X, 0.7), (Covariate::Monomial { px: 2, py: 1 }, -1.2)]);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for kind in all_kinds() {
            let m = ModelSpec::new(fo.clone(), InteractionSpec::new(kind, -0.4)).unwrap();
            let p = random_pattern(3, 60);
            for _ in 0..10 {
                let u = Point::new(rng.random(), rng.random());
                let lam = cond_intensity(&m, &u, &p, Mode::Unconditional).unwrap();
                let logf = |pts: &[Point]| {
                    pts.iter().map(|q| fo.log_intensity(q)).sum::<f64>() - 0.4 * potential(&kind, pts, &g)
                };
                let oracle = (logf(p.with_point(u).unwrap().points()) - logf(p.points())).exp();
                assert!((lam - oracle).abs() <= 1e-10 * oracle, "{kind:?}: {lam} vs {oracle}");
            }
        }
    }

    #[test]
    fn phi_zero_is_first_order() {
        let fo = FirstOrderSpec::with_intercept(3.0, vec![(Covariate::Y, 1.5)]);
        let p = random_pattern(4, 50);
        for kind in all_kinds() {
            let m = ModelSpec::new(fo.clone(), InteractionSpec::new(kind, 0.0)).unwrap();
            let u = Point::new(0.31, 0.77);
            let l = cond_intensity(&m, &u, &p, Mode::Unconditional).unwrap();
            assert_eq!(l, fo.intensity(&u));
        }
    }

    #[test]
    fn second_order_examples() {
        let p = random_pattern(6, 40);
        let pois = ModelSpec::poisson(FirstOrderSpec::constant(100.0));
        let (u, v) = (Point::new(0.2, 0.2), Point::new(0.25, 0.2));
        let l2 = second_order_cond_intensity(&pois, &u, &v, &p).unwrap();
        assert!((l2 - 1e4).abs() < 1e-8);
        let r = 0.1;
        let st = ModelSpec::new(
            FirstOrderSpec::constant(100.0),
            InteractionSpec::from_gamma(InteractionKind::Strauss { r }, 0.5),
        )
        .unwrap();
        let tu = crate::pattern::close_pair_count(&p, &u, r, None) as i32;
        let tv = crate::pattern::close_pair_count(&p, &v, r, None) as i32;
        let l2 = second_order_cond_intensity(&st, &u, &v, &p).unwrap();
        let expect = 1e4 * 0.5f64.powi(tu + tv + 1);
        assert!((l2 - expect).abs() < 1e-9 * expect);
        assert!(second_order_cond_intensity(&st, &u, &u, &p).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for kind in all_kinds() {
            let m = ModelSpec::new(FirstOrderSpec::constant(50.0), InteractionSpec::new(kind, -0.3)).unwrap();
            for _ in 0..5 {
                let u = Point::new(rng.random(), rng.random());
                let v = Point::new(u.x + rng.random_range(-0.05..0.05), u.y + 0.01).clamp_unit();
                let a = second_order_cond_intensity(&m, &u, &v, &p).unwrap();
                let b = second_order_cond_intensity(&m, &v, &u, &p).unwrap();
                assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{kind:?}");
            }
        }
    }

    trait ClampUnit {
        fn clamp_unit(self) -> Self;
    }
    impl ClampUnit for Point {
        fn clamp_unit(self) -> Self {
            Point::new(self.x.clamp(0.0, 1.0), self.y.clamp(0.0, 1.0))
        }
    }

    #[test]
    fn ranges_and_simulability() {
        assert_eq!(InteractionKind::Strauss { r: 0.05 }.range(), 0.05);
        assert_eq!(InteractionKind::geyer(0.05).range(), 0.1);
        assert_eq!(InteractionKind::AreaInteraction { r: 0.05 }.range(), 0.1);
        assert_eq!(InteractionKind::SoftCore { sigma2: 0.1, cutoff: 1.0 }.range(), 1.0);
        let m = ModelSpec::new(
            FirstOrderSpec::constant(100.0),
            InteractionSpec::new(InteractionKind::Strauss { r: 0.05 }, 0.3),
        )
        .unwrap();
        assert!(m.check_simulable().is_err());
        assert!((soft_core_cutoff(1.0, 1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn spec_json_round_trip() {
        let m = ModelSpec::new(
            FirstOrderSpec::with_intercept(5.29, vec![(Covariate::X, 2.0), (Covariate::Y, 2.0), (Covariate::Monomial { px: 2, py: 0 }, 3.0)]),
            InteractionSpec::new(InteractionKind::Strauss { r: 0.05 }, f64::NEG_INFINITY),
        )
        .unwrap();
        let s = serde_json::to_string(&m).unwrap();
        let back: ModelSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        let empty = ModelSpec::poisson(FirstOrderSpec::constant(0.0));
        let s = serde_json::to_string(&empty).unwrap();
        assert!(s.contains(r#""coefficients":["-inf"]"#));
        assert_eq!(serde_json::from_str::<ModelSpec>(&s).unwrap(), empty);
    }

    #[test]
    fn raster_bilinear() {
        let g = PixelGrid::new(Window::unit(), 10, 10).unwrap();
        let r = Raster::from_fn(&g, |p| 2.0 * p.x + p.y).unwrap();
        // linear functions are reproduced between centres
        let u = Point::new(0.37, 0.61);
        assert!((r.value_at(&u) - (0.74 + 0.61)).abs() < 1e-12);
    }
}
