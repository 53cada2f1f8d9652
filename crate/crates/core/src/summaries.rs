//! Edge-corrected estimators of the K, G and F functions.
//!
//! Each estimator can be computed on the full window, restricted to
//! `(W_free, x_free)`, or reweighted so that only points of `W_free` are
//! summed over while all points still act as neighbours.
//! Values that are undefined at some `r` are stored as NaN.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{circle_window_fraction, PixelGrid, Point, SpatialIndex, Window};
use crate::pattern::PointPattern;

/// Increasing grid of distances starting at 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct RGrid {
    values: Vec<f64>,
}

impl TryFrom<Vec<f64>> for RGrid {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        RGrid::new(v)
    }
}

impl From<RGrid> for Vec<f64> {
    fn from(g: RGrid) -> Self {
        g.values
    }
}

impl RGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.first() != Some(&0.0) {
            return Err(Error::InvalidParameter("r grid must start at 0".into()));
        }
        if values.windows(2).any(|w| !(w[1] > w[0])) || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("r grid must be strictly increasing".into()));
        }
        Ok(RGrid { values })
    }

    /// `n` equally spaced values on `[0, r_max]`.
    pub fn linspace(r_max: f64, n: usize) -> Result<Self> {
        if n < 2 || !(r_max > 0.0) {
            return Err(Error::InvalidParameter("r grid needs n >= 2 and r_max > 0".into()));
        }
        RGrid::new((0..n).map(|k| r_max * k as f64 / (n - 1) as f64).collect())
    }

    /// 513 values on `[0, min side / 4]`.
    pub fn default_for(w: &Window) -> Self {
        RGrid::linspace(w.min_side() / 4.0, 513).expect("valid default grid")
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn r_max(&self) -> f64 {
        *self.values.last().expect("nonempty grid")
    }

    /// First index `k` with `r_k >= d` (equals `len` if none).
    #[inline]
    pub fn first_at_least(&self, d: f64) -> usize {
        self.values.partition_point(|&r| r < d)
    }

    /// First index `k` with `r_k > d` (equals `len` if none).
    #[inline]
    pub fn first_above(&self, d: f64) -> usize {
        self.values.partition_point(|&r| r <= d)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KCorrection {
    Raw,
    Translation,
    Isotropic,
    Border,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GCorrection {
    HanischD4,
    HanischConventional,
    Border,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FCorrection {
    Raw,
    Border,
}

/// Which points and which window an estimator sums over.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DomainMode {
    #[default]
    Full,
    /// Use only `x_free` in `W_free = W ⊖ range`.
    Restriction { range: f64 },
    /// Sum over `x_free` with all points as neighbours.
    Reweighting { range: f64 },
}

impl DomainMode {
    pub fn range(&self) -> f64 {
        match *self {
            DomainMode::Full => 0.0,
            DomainMode::Restriction { range } | DomainMode::Reweighting { range } => range,
        }
    }

    pub fn free_window(&self, w: &Window) -> Result<Window> {
        let r = self.range();
        if !(r >= 0.0) {
            return Err(Error::InvalidParameter(format!("domain range {r}")));
        }
        w.erode(r).ok_or(Error::EmptyErosion(r))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KEstimator {
    pub correction: KCorrection,
    #[serde(default)]
    pub domain: DomainMode,
}

impl Default for KEstimator {
    fn default() -> Self {
        KEstimator { correction: KCorrection::Translation, domain: DomainMode::Full }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GEstimator {
    pub correction: GCorrection,
    #[serde(default)]
    pub domain: DomainMode,
}

impl Default for GEstimator {
    fn default() -> Self {
        GEstimator { correction: GCorrection::HanischConventional, domain: DomainMode::Full }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FEstimator {
    pub correction: FCorrection,
    #[serde(default)]
    pub domain: DomainMode,
}

impl Default for FEstimator {
    fn default() -> Self {
        FEstimator { correction: FCorrection::Border, domain: DomainMode::Full }
    }
}

/// Named columns sharing one r grid.
#[derive(Clone, Debug, PartialEq)]
pub struct FunctionTable {
    pub r: Vec<f64>,
    pub columns: Vec<(String, Vec<f64>)>,
    pub meta: BTreeMap<String, String>,
}

impl FunctionTable {
    pub fn new(r: &RGrid) -> Self {
        FunctionTable { r: r.values().to_vec(), columns: Vec::new(), meta: BTreeMap::new() }
    }

    pub fn with_r(r: Vec<f64>) -> Self {
        FunctionTable { r, columns: Vec::new(), meta: BTreeMap::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, col: Vec<f64>) -> Result<()> {
        let name = name.into();
        if col.len() != self.r.len() {
            return Err(Error::InvalidParameter(format!(
                "column {name} has {} values for {} r values",
                col.len(),
                self.r.len()
            )));
        }
        if name == "r" || self.columns.iter().any(|(n, _)| *n == name) {
            return Err(Error::InvalidParameter(format!("duplicate column {name}")));
        }
        self.columns.push((name, col));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, c)| c.as_slice())
    }

    pub fn set_meta(&mut self, k: impl Into<String>, v: impl Into<String>) {
        self.meta.insert(k.into(), v.into());
    }
}

// ---------------------------------------------------------------------------
// Shared helpers

/// Turn a per-bin increment vector into cumulative sums.
pub(crate) fn cumulate(v: &mut [f64]) {
    let mut acc = 0.0;
    for x in v.iter_mut() {
        acc += *x;
        *x = acc;
    }
}

/// Translation weight `|W| / |W ∩ (W + (u − v))|`, or the reweighted form
/// `|W_free| / |W ∩ (W_free + (u − v))|`.
#[inline]
pub fn translation_weight(w: &Window, free: &Window, u: &Point, v: &Point) -> f64 {
    free.area() / w.shifted_overlap(free, u.x - v.x, u.y - v.y)
}

/// Ripley's isotropic weight `2π d / length(∂B(u, d) ∩ W)`.
#[inline]
pub fn isotropic_weight(w: &Window, u: &Point, v: &Point) -> f64 {
    1.0 / circle_window_fraction(u, u.dist(v), w)
}

/// The window, point indices summed over, neighbour indices, and
/// normalising counts for a domain mode.
pub(crate) struct Domain {
    pub window: Window,
    pub free: Window,
    /// Indices summed over (outer sum).
    pub outer: Vec<usize>,
    /// Neighbour candidates (inner sum).
    pub inner: Vec<usize>,
}

pub(crate) fn domain_for(p: &PointPattern, mode: DomainMode) -> Result<Domain> {
    let w = *p.window();
    let free = mode.free_window(&w)?;
    let free_idx: Vec<usize> = (0..p.n()).filter(|&i| free.contains(&p.points()[i])).collect();
    let all: Vec<usize> = (0..p.n()).collect();
    Ok(match mode {
        DomainMode::Full => Domain { window: w, free: w, outer: all.clone(), inner: all },
        DomainMode::Restriction { .. } => Domain { window: free, free, outer: free_idx.clone(), inner: free_idx },
        DomainMode::Reweighting { .. } => Domain { window: w, free, outer: free_idx, inner: all },
    })
}

// ---------------------------------------------------------------------------
// K

/// Ripley's K function with the chosen edge correction and domain mode.
pub fn k_hat(p: &PointPattern, r: &RGrid, est: &KEstimator) -> Result<Vec<f64>> {
    let dom = domain_for(p, est.domain)?;
    let n_inner = dom.inner.len();
    if n_inner < 2 {
        return Err(Error::TooFewPoints("K undefined for fewer than two points".into()));
    }
    let pts = p.points();
    let r_max = r.r_max();
    let nr = r.len();
    // pairs (i in outer, j in inner, j != i) within r_max
    let sub: Vec<Point> = dom.inner.iter().map(|&j| pts[j]).collect();
    let idx = SpatialIndex::new(&sub, r_max.max(1e-9));
    let mut out = vec![0.0; nr];
    let mut denom_border = vec![0.0; nr];
    for &i in &dom.outer {
        let u = pts[i];
        let b = dom.window.boundary_distance(&u);
        if est.correction == KCorrection::Border {
            // n(outer ∩ window ⊖ r) counts points with b >= r
            let k = r.first_above(b);
            denom_border[0] += 1.0;
            if k < nr {
                denom_border[k] -= 1.0;
            }
        }
        idx.for_each_within(&u, r_max, |jj, d2| {
            let j = dom.inner[jj];
            if j == i {
                return;
            }
            let v = pts[j];
            let d = d2.sqrt();
            let k0 = r.first_at_least(d);
            match est.correction {
                KCorrection::Raw => out[k0] += 1.0,
                KCorrection::Translation => out[k0] += translation_weight(&dom.window, &dom.free, &u, &v),
                KCorrection::Isotropic => out[k0] += isotropic_weight(&dom.window, &u, &v),
                KCorrection::Border => {
                    let k1 = r.first_above(b);
                    if k0 < k1 {
                        out[k0] += 1.0;
                        if k1 < nr {
                            out[k1] -= 1.0;
                        }
                    }
                }
            }
        });
    }
    cumulate(&mut out);
    let area_w = dom.window.area();
    match est.correction {
        KCorrection::Border => {
            cumulate(&mut denom_border);
            // |W| / (n(inner) · n(outer ∩ W ⊖ r)) for full and reweighting, same with W_free for restriction
            let n = n_inner as f64;
            for (o, dn) in out.iter_mut().zip(&denom_border) {
                *o = if *dn > 0.0 { area_w * *o / (n * dn) } else { f64::NAN };
            }
        }
        _ => {
            let n = n_inner as f64;
            let rho2 = n * (n - 1.0) / (area_w * area_w);
            let scale = 1.0 / (rho2 * dom.free.area());
            for o in out.iter_mut() {
                *o *= scale;
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// G

/// Nearest-neighbour distance function estimate.
pub fn g_hat(p: &PointPattern, r: &RGrid, est: &GEstimator) -> Result<Vec<f64>> {
    let dom = domain_for(p, est.domain)?;
    if dom.inner.len() < 2 {
        return Err(Error::TooFewPoints("G undefined for fewer than two points".into()));
    }
    let pts = p.points();
    let sub: Vec<Point> = dom.inner.iter().map(|&j| pts[j]).collect();
    let idx = SpatialIndex::new(&sub, (dom.window.area() / sub.len() as f64).sqrt());
    let nn: Vec<(f64, f64)> = dom
        .outer
        .iter()
        .map(|&i| {
            let ex = dom.inner.iter().position(|&j| j == i);
            let d = idx.nearest_two(&pts[i], ex, f64::INFINITY).d1;
            (dom.window.boundary_distance(&pts[i]), d)
        })
        .collect();
    Ok(g_from_nn(&nn, dom.inner.len(), &dom.window, &dom.free, r, est.correction))
}

/// Ĝ from `(boundary distance, nn distance)` of the summed-over points;
/// `n_norm` is the point count used in the conventional intensity.
pub(crate) fn g_from_nn(
    nn: &[(f64, f64)],
    n_norm: usize,
    window: &Window,
    free: &Window,
    r: &RGrid,
    corr: GCorrection,
) -> Vec<f64> {
    let nr = r.len();
    let mut out = vec![0.0; nr];
    // |free ∩ W ⊖ d|; free = W ⊖ R for the modes we build
    let range = 0.5 * (window.width() - free.width());
    let ht_area = |d: f64| window.eroded_area(d.max(range));
    match corr {
        GCorrection::HanischConventional | GCorrection::HanischD4 => {
            let mut total = 0.0;
            for &(b, d) in nn {
                if b >= d && d.is_finite() {
                    let a = ht_area(d);
                    if a <= 0.0 {
                        continue;
                    }
                    total += 1.0 / a;
                    let k = r.first_at_least(d);
                    if k < nr {
                        out[k] += 1.0 / a;
                    }
                }
            }
            cumulate(&mut out);
            let scale = if corr == GCorrection::HanischConventional {
                window.area() / n_norm as f64
            } else if total > 0.0 {
                1.0 / total
            } else {
                f64::NAN
            };
            for o in out.iter_mut() {
                *o *= scale;
            }
        }
        GCorrection::Border => {
            let mut denom = vec![0.0; nr];
            for &(b, d) in nn {
                let k1 = r.first_above(b);
                denom[0] += 1.0;
                if k1 < nr {
                    denom[k1] -= 1.0;
                }
                let k0 = r.first_at_least(d);
                if k0 < k1 {
                    out[k0] += 1.0;
                    if k1 < nr {
                        out[k1] -= 1.0;
                    }
                }
            }
            cumulate(&mut out);
            cumulate(&mut denom);
            for (o, dn) in out.iter_mut().zip(&denom) {
                *o = if *dn > 0.0 { *o / dn } else { f64::NAN };
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// F

/// Empty-space function estimate on a pixel grid.
pub fn f_hat(p: &PointPattern, r: &RGrid, est: &FEstimator, grid: &PixelGrid) -> Result<Vec<f64>> {
    let w = *p.window();
    let free = est.domain.free_window(&w)?;
    let (pts, win): (Vec<Point>, Window) = match est.domain {
        DomainMode::Restriction { .. } => {
            (p.points().iter().copied().filter(|u| free.contains(u)).collect(), free)
        }
        _ => (p.points().to_vec(), w),
    };
    let nr = r.len();
    let r_max = r.r_max();
    let idx = SpatialIndex::new(&pts, r_max.max(1e-9));
    let mut num = vec![0.0; nr];
    let mut den = vec![0.0; nr];
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let c = grid.centre(i, j);
            if !free.contains(&c) {
                continue;
            }
            let d = if pts.is_empty() { f64::INFINITY } else { idx.nearest_two(&c, None, r_max).d1 };
            let k0 = r.first_at_least(d);
            match est.correction {
                FCorrection::Raw => {
                    den[0] += 1.0;
                    if k0 < nr {
                        num[k0] += 1.0;
                    }
                }
                FCorrection::Border => {
                    let k1 = r.first_above(win.boundary_distance(&c));
                    den[0] += 1.0;
                    if k1 < nr {
                        den[k1] -= 1.0;
                    }
                    if k0 < k1 {
                        num[k0] += 1.0;
                        if k1 < nr {
                            num[k1] -= 1.0;
                        }
                    }
                }
            }
        }
    }
    cumulate(&mut num);
    cumulate(&mut den);
    Ok(num.iter().zip(&den).map(|(a, b)| if *b > 0.0 { a / b } else { f64::NAN }).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::PixelGrid;
    use crate::models::{potential, FirstOrderSpec, InteractionKind};
    use crate::simulate::{sample_poisson, stream_seed};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_pattern(seed: u64, n: usize) -> PointPattern {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = (0..n).map(|_| Point::new(rng.random(), rng.random())).collect();
        PointPattern::new(pts, Window::unit()).unwrap()
    }

    /// Direct double-sum oracle for the Horvitz–Thompson K estimators.
    fn k_oracle(p: &PointPattern, r: f64, est: &KEstimator) -> f64 {
        let w = *p.window();
        let free = est.domain.free_window(&w).unwrap();
        let pts = p.points();
        let is_free = |i: usize| free.contains(&pts[i]);
        let (win, outer, inner): (Window, Vec<usize>, Vec<usize>) = match est.domain {
            DomainMode::Full => (w, (0..p.n()).collect(), (0..p.n()).collect()),
            DomainMode::Restriction { .. } => {
                let f: Vec<usize> = (0..p.n()).filter(|&i| is_free(i)).collect();
                (free, f.clone(), f)
            }
            DomainMode::Reweighting { .. } => (w, (0..p.n()).filter(|&i| is_free(i)).collect(), (0..p.n()).collect()),
        };
        let n = inner.len() as f64;
        let mut s = 0.0;
        let mut n_border = 0.0;
        for &i in &outer {
            if win.boundary_distance(&pts[i]) >= r {
                n_border += 1.0;
            }
            for &j in &inner {
                if i == j || pts[i].dist(&pts[j]) > r {
                    continue;
                }
                let (u, v) = (pts[i], pts[j]);
                s += match est.correction {
                    KCorrection::Raw => 1.0,
                    KCorrection::Translation => {
                        let ov = (win.width() - (u.x - v.x).abs()).max(0.0);
                        let oh = (win.height() - (u.y - v.y).abs()).max(0.0);
                        match est.domain {
                            DomainMode::Reweighting { range } => {
                                // overlap of W with W_free shifted by u - v
                                let lx = (w.x_max.min(free.x_max + u.x - v.x) - w.x_min.max(free.x_min + u.x - v.x)).max(0.0);
                                let ly = (w.y_max.min(free.y_max + u.y - v.y) - w.y_min.max(free.y_min + u.y - v.y)).max(0.0);
                                let _ = range;
                                free.area() / (lx * ly)
                            }
                            _ => win.area() / (ov * oh),
                        }
                    }
                    KCorrection::Isotropic => 1.0 / circle_window_fraction(&u, u.dist(&v), &win),
                    KCorrection::Border => {
                        if win.boundary_distance(&u) >= r {
                            1.0
                        } else {
                            0.0
                        }
                    }
                };
            }
        }
        if est.correction == KCorrection::Border {
            win.area() * s / (n * n_border)
        } else {
            let d_area = match est.domain {
                DomainMode::Full => w.area(),
                _ => free.area(),
            };
            win.area() * win.area() * s / (n * (n - 1.0) * d_area)
        }
    }

    #[test]
    fn k_matches_direct_oracle() {
        let p = random_pattern(21, 120);
        let grid = RGrid::linspace(0.2, 41).unwrap();
        for corr in [KCorrection::Raw, KCorrection::Translation, KCorrection::Isotropic, KCorrection::Border] {
            for domain in [DomainMode::Full, DomainMode::Restriction { range: 0.1 }, DomainMode::Reweighting { range: 0.1 }] {
                let est = KEstimator { correction: corr, domain };
                let k = k_hat(&p, &grid, &est).unwrap();
                for (ri, &rv) in grid.values().iter().enumerate() {
                    let o = k_oracle(&p, rv, &est);
                    if o.is_nan() {
                        assert!(k[ri].is_nan());
                    } else {
                        assert!((k[ri] - o).abs() <= 1e-10 * (1.0 + o.abs()), "{corr:?} {domain:?} r={rv}: {} vs {o}", k[ri]);
                    }
                }
            }
        }
    }

    #[test]
    fn k_translation_two_point_example() {
        let p = PointPattern::new(vec![Point::new(0.4, 0.5), Point::new(0.6, 0.5)], Window::unit()).unwrap();
        let grid = RGrid::new(vec![0.0, 0.1, 0.25]).unwrap();
        let k = k_hat(&p, &grid, &KEstimator::default()).unwrap();
        assert_eq!(k[1], 0.0);
        assert!((k[2] - 1.25).abs() < 1e-12);
    }

    #[test]
    fn k_raw_is_scaled_strauss_potential() {
        let p = random_pattern(2, 150);
        let grid = RGrid::linspace(0.25, 26).unwrap();
        let k = k_hat(&p, &grid, &KEstimator { correction: KCorrection::Raw, domain: DomainMode::Full }).unwrap();
        let g = PixelGrid::new(Window::unit(), 4, 4).unwrap();
        let n = p.n() as f64;
        for (i, &rv) in grid.values().iter().enumerate().skip(1) {
            let vs = potential(&InteractionKind::Strauss { r: rv }, p.points(), &g);
            assert!((k[i] - 2.0 * vs / (n * (n - 1.0))).abs() < 1e-14);
        }
    }

    #[test]
    fn reweighting_with_zero_range_is_full() {
        let p = random_pattern(5, 90);
        let grid = RGrid::linspace(0.25, 51).unwrap();
        for corr in [KCorrection::Raw, KCorrection::Translation, KCorrection::Isotropic, KCorrection::Border] {
            let a = k_hat(&p, &grid, &KEstimator { correction: corr, domain: DomainMode::Full }).unwrap();
            let b = k_hat(&p, &grid, &KEstimator { correction: corr, domain: DomainMode::Reweighting { range: 0.0 } }).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
            }
        }
    }

    #[test]
    fn k_needs_two_points() {
        let p = PointPattern::new(vec![Point::new(0.5, 0.5)], Window::unit()).unwrap();
        assert!(k_hat(&p, &RGrid::linspace(0.1, 5).unwrap(), &KEstimator::default()).is_err());
    }

    #[test]
    fn g_examples() {
        let grid = RGrid::new(vec![0.0, 0.05, 0.2]).unwrap();
        let p = PointPattern::new(vec![Point::new(0.45, 0.5), Point::new(0.55, 0.5)], Window::unit()).unwrap();
        for corr in [GCorrection::HanischD4, GCorrection::HanischConventional, GCorrection::Border] {
            let g = g_hat(&p, &grid, &GEstimator { correction: corr, domain: DomainMode::Full }).unwrap();
            assert_eq!(g[0], 0.0);
        }
        let g = g_hat(&p, &grid, &GEstimator { correction: GCorrection::Border, domain: DomainMode::Full }).unwrap();
        assert_eq!(g[2], 1.0);
    }

    /// Direct oracle following the estimator definitions point by point.
    fn g_oracle(p: &PointPattern, r: f64, est: &GEstimator) -> f64 {
        let w = *p.window();
        let free = est.domain.free_window(&w).unwrap();
        let pts = p.points();
        let range = est.domain.range();
        let fidx: Vec<usize> = (0..p.n()).filter(|&i| free.contains(&pts[i])).collect();
        let (win, outer, inner): (Window, Vec<usize>, Vec<usize>) = match est.domain {
            DomainMode::Full => (w, (0..p.n()).collect(), (0..p.n()).collect()),
            DomainMode::Restriction { .. } => (free, fidx.clone(), fidx.clone()),
            DomainMode::Reweighting { .. } => (w, fidx.clone(), (0..p.n()).collect()),
        };
        let nnd = |i: usize| inner.iter().filter(|&&j| j != i).map(|&j| pts[i].dist(&pts[j])).fold(f64::INFINITY, f64::min);
        let reweight = matches!(est.domain, DomainMode::Reweighting { .. });
        let ht = |d: f64| if reweight { w.eroded_area(d.max(range)) } else { win.eroded_area(d) };
        match est.correction {
            GCorrection::Border => {
                let (mut a, mut b) = (0.0, 0.0);
                for &i in &outer {
                    if win.boundary_distance(&pts[i]) >= r {
                        b += 1.0;
                        if nnd(i) <= r {
                            a += 1.0;
                        }
                    }
                }
                a / b
            }
            _ => {
                let (mut dr, mut dinf) = (0.0, 0.0);
                for &i in &outer {
                    let d = nnd(i);
                    if win.boundary_distance(&pts[i]) >= d {
                        dinf += 1.0 / ht(d);
                        if d <= r {
                            dr += 1.0 / ht(d);
                        }
                    }
                }
                if est.correction == GCorrection::HanischD4 {
                    dr / dinf
                } else {
                    win.area() / inner.len() as f64 * dr
                }
            }
        }
    }

    #[test]
    fn g_matches_direct_oracle() {
        let p = random_pattern(31, 100);
        let grid = RGrid::linspace(0.2, 41).unwrap();
        for corr in [GCorrection::HanischD4, GCorrection::HanischConventional, GCorrection::Border] {
            for domain in [DomainMode::Full, DomainMode::Restriction { range: 0.1 }, DomainMode::Reweighting { range: 0.1 }] {
                let est = GEstimator { correction: corr, domain };
                let g = g_hat(&p, &grid, &est).unwrap();
                for (ri, &rv) in grid.values().iter().enumerate() {
                    let o = g_oracle(&p, rv, &est);
                    if o.is_nan() {
                        assert!(g[ri].is_nan());
                    } else {
                        assert!((g[ri] - o).abs() <= 1e-10 * (1.0 + o.abs()), "{corr:?} {domain:?} r={rv}: {} vs {o}", g[ri]);
                    }
                }
            }
        }
    }

    #[test]
    fn f_examples() {
        let w = Window::unit();
        let grid = RGrid::linspace(0.2, 21).unwrap();
        let pix = PixelGrid::new(w, 256, 256).unwrap();
        let empty = PointPattern::empty(w);
        let f = f_hat(&empty, &grid, &FEstimator::default(), &pix).unwrap();
        assert!(f.iter().all(|&v| v == 0.0));
        let one = PointPattern::new(vec![Point::new(0.5, 0.5)], w).unwrap();
        let f = f_hat(&one, &grid, &FEstimator { correction: FCorrection::Raw, domain: DomainMode::Full }, &pix).unwrap();
        let c = Point::new(0.5, 0.5);
        for (k, &rv) in grid.values().iter().enumerate() {
            let hits = pix.centres().iter().filter(|q| q.dist(&c) <= rv).count() as f64;
            assert!((f[k] - hits / pix.len() as f64).abs() < 1e-12);
            assert!((f[k] - PI * rv * rv).abs() < 32.0 * pix.pixel_area());
        }
    }

    #[test]
    fn summaries_nondecreasing() {
        let p = random_pattern(8, 80);
        let grid = RGrid::linspace(0.25, 101).unwrap();
        let pix = PixelGrid::new(Window::unit(), 128, 128).unwrap();
        let mono = |v: &[f64]| v.windows(2).all(|w| w[1] + 1e-15 >= w[0]);
        for c in [KCorrection::Raw, KCorrection::Translation, KCorrection::Isotropic] {
            assert!(mono(&k_hat(&p, &grid, &KEstimator { correction: c, domain: DomainMode::Full }).unwrap()));
        }
        for c in [GCorrection::HanischD4, GCorrection::HanischConventional] {
            assert!(mono(&g_hat(&p, &grid, &GEstimator { correction: c, domain: DomainMode::Full }).unwrap()));
        }
        assert!(mono(&f_hat(&p, &grid, &FEstimator { correction: FCorrection::Raw, domain: DomainMode::Full }, &pix).unwrap()));
    }

    #[test]
    fn csr_means_match_poisson_laws() {
        let fo = FirstOrderSpec::constant(100.0);
        let w = Window::unit();
        let grid = RGrid::linspace(0.1, 21).unwrap();
        let pix = PixelGrid::new(w, 128, 128).unwrap();
        let sims = 500;
        let mut gm = vec![0.0; grid.len()];
        let mut fm = vec![0.0; grid.len()];
        for s in 0..sims {
            let p = sample_poisson(&fo, &w, stream_seed(77, s)).unwrap();
            let g = g_hat(&p, &grid, &GEstimator::default()).unwrap();
            let f = f_hat(&p, &grid, &FEstimator::default(), &pix).unwrap();
            for k in 0..grid.len() {
                gm[k] += g[k] / sims as f64;
                fm[k] += f[k] / sims as f64;
            }
        }
        for (k, &rv) in grid.values().iter().enumerate() {
            let nu = 100.0 * PI * rv * rv;
            if (0.2..=2.0).contains(&nu) {
                let th = 1.0 - (-nu).exp();
                assert!((gm[k] / th - 1.0).abs() < 0.03, "G r={rv}: {} vs {th}", gm[k]);
                assert!((fm[k] / th - 1.0).abs() < 0.03, "F r={rv}: {} vs {th}", fm[k]);
            }
        }
    }

    proptest! {
        #[test]
        fn translation_weight_symmetric(ax in 0.0f64..1.0, ay in 0.0f64..1.0, bx in 0.0f64..1.0, by in 0.0f64..1.0, range in 0.0f64..0.2) {
            let w = Window::unit();
            let free = w.erode(range).unwrap();
            let (u, v) = (Point::new(ax, ay), Point::new(bx, by));
            let a = translation_weight(&w, &free, &u, &v);
            let b = translation_weight(&w, &free, &v, &u);
            prop_assert!(a == b || (a - b).abs() <= 1e-12 * a.abs());
        }
    }
}
