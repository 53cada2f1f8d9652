//! Residual diagnostics for fitted Gibbs models.
//!
//! For a statistic `S(x, r)` with local contributions `s(u, x, r)` and
//! increments `Δ_u S(x, r)`, this module evaluates
//!
//! * the sum `Σ_i s(x_i, x_{-i}, r)` and its compensator `∫ s(u, x, r) λ̂(u, x) du`,
//! * the pseudo-sum `Σ_i Δ_{x_i} S(x, r)` and pseudo-compensator `∫ Δ_u S(x, r) λ̂(u, x) du`,
//! * the Poincaré variances `∫ s² λ̂` and `∫ (Δ_u S)² λ̂`,
//!
//! on an r grid in a single pass over the integration nodes. In conditional
//! mode sums run over the free points and integrals over `W ⊖ R`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::FittedModel;
use crate::geom::{disc_window_area, DiscCluster, NearestTwo, PixelGrid, Point, SpatialIndex, Window};
use crate::models::{ModelSpec, Mode};
use crate::pattern::PointPattern;
use crate::simulate::{sample_gibbs, sample_poisson, stream_seed, McmcConfig};
use crate::summaries::{
    cumulate, domain_for, translation_weight, DomainMode, FCorrection, FEstimator, FunctionTable, GCorrection,
    GEstimator, KCorrection, KEstimator, RGrid,
};

/// Statistic whose residuals are computed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stat", rename_all = "snake_case")]
pub enum LocalStatistic {
    /// Strauss pair count `V_S`.
    Vs,
    /// K̂ with a symmetric edge correction.
    KhatLocal {
        #[serde(default)]
        estimator: KEstimator,
    },
    /// Geyer statistic with saturation 1, `Σ_i 1{d(x_i, x_{-i}) ≤ r}`.
    Vg,
    /// Geyer saturation statistic `Σ_i min(s, t(x_i, x_{-i}, r))`.
    VgSat { s: f64 },
    GhatLocal {
        #[serde(default)]
        estimator: GEstimator,
    },
    /// Covered fraction `|W ∩ ∪ B(x_i, r)| / |W|`; pseudo-diagnostics only.
    Va,
    /// Increments of F̂; pseudo-diagnostics only.
    FhatIncrement {
        #[serde(default)]
        estimator: FEstimator,
    },
    /// Triplet count `V_T`.
    Vt,
}

impl LocalStatistic {
    pub fn name(&self) -> String {
        match self {
            LocalStatistic::Vs => "vs".into(),
            LocalStatistic::KhatLocal { estimator } => format!("khat_{:?}", estimator.correction).to_lowercase(),
            LocalStatistic::Vg => "vg".into(),
            LocalStatistic::VgSat { s } => format!("vgsat_{s}"),
            LocalStatistic::GhatLocal { estimator } => format!("ghat_{:?}", estimator.correction).to_lowercase(),
            LocalStatistic::Va => "va".into(),
            LocalStatistic::FhatIncrement { estimator } => format!("fhat_{:?}", estimator.correction).to_lowercase(),
            LocalStatistic::Vt => "vt".into(),
        }
    }

    /// Whether the statistic has a natural decomposition into local contributions.
    pub fn has_local(&self) -> bool {
        !matches!(self, LocalStatistic::Va | LocalStatistic::FhatIncrement { .. })
    }

    fn validate(&self) -> Result<()> {
        match self {
            LocalStatistic::KhatLocal { estimator } if estimator.correction == KCorrection::Isotropic => {
                Err(Error::Unsupported(
                    "isotropic K correction is asymmetric and has no compensator".into(),
                ))
            }
            LocalStatistic::VgSat { s } if !(*s > 0.0) => {
                Err(Error::InvalidParameter(format!("saturation {s} must be positive")))
            }
            _ => Ok(()),
        }
    }
}

/// How compensator integrals are evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum IntegrationRule {
    /// The fitted model's quadrature scheme, data points included.
    #[default]
    Quadrature,
    /// Pixel centres of an `nx × ny` grid over the window.
    Pixels { nx: usize, ny: usize },
    /// Closed form; homogeneous Poisson models with `Vs` or raw K̂ only.
    Analytic,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DiagOptions {
    #[serde(default)]
    pub rule: IntegrationRule,
    /// Pixel resolution for F̂ increments; defaults to the model's.
    #[serde(default)]
    pub pixel_resolution: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flavor {
    Residual,
    Pseudo,
}

/// All diagnostic columns for one statistic. Columns that do not exist for
/// the statistic (or integration rule) are `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticColumns {
    pub r: Vec<f64>,
    pub sum: Option<Vec<f64>>,
    pub compensator: Option<Vec<f64>>,
    pub variance: Option<Vec<f64>>,
    pub pseudo_sum: Option<Vec<f64>>,
    pub pseudo_compensator: Option<Vec<f64>>,
    pub pseudo_variance: Option<Vec<f64>>,
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

impl DiagnosticColumns {
    pub fn residual(&self) -> Option<Vec<f64>> {
        Some(sub(self.sum.as_ref()?, self.compensator.as_ref()?))
    }

    pub fn pseudo_residual(&self) -> Option<Vec<f64>> {
        Some(sub(self.pseudo_sum.as_ref()?, self.pseudo_compensator.as_ref()?))
    }

    /// Table with columns `emp, comp, res, var, stdres` and `psum, pcomp, pres, pvar, pstdres`
    /// where available. Undefined standardized values are NaN.
    pub fn to_table(&self) -> Result<FunctionTable> {
        let mut t = FunctionTable::with_r(self.r.clone());
        if let (Some(s), Some(c)) = (&self.sum, &self.compensator) {
            let res = sub(s, c);
            t.push("emp", s.clone())?;
            t.push("comp", c.clone())?;
            t.push("res", res.clone())?;
            if let Some(v) = &self.variance {
                t.push("var", v.clone())?;
                t.push("stdres", standardized(&res, v)?)?;
            }
        }
        if let (Some(s), Some(c)) = (&self.pseudo_sum, &self.pseudo_compensator) {
            let res = sub(s, c);
            t.push("psum", s.clone())?;
            t.push("pcomp", c.clone())?;
            t.push("pres", res.clone())?;
            if let Some(v) = &self.pseudo_variance {
                t.push("pvar", v.clone())?;
                t.push("pstdres", standardized(&res, v)?)?;
            }
        }
        Ok(t)
    }
}

// ---------------------------------------------------------------------------
// Local terms

/// Evaluates `s(u, x, r)` and `Δ_u S(x, r)` over the r grid.
trait Terms: Sync {
    /// Location `u` not in the pattern.
    fn new_terms(&self, u: &Point, s: &mut [f64], d: &mut [f64]);
    /// Data point `x_i`: `s(x_i, x_{-i})` and `S(x) − S(x_{-i})`.
    fn data_terms(&self, i: usize, s: &mut [f64], d: &mut [f64]);
    fn has_local(&self) -> bool {
        true
    }
    fn has_pseudo(&self) -> bool {
        true
    }
}

fn bump(diff: &mut [f64], k0: usize, k1: usize, v: f64) {
    if k0 < k1 {
        diff[k0] += v;
        if k1 < diff.len() {
            diff[k1] -= v;
        }
    }
}

/// Cumulative neighbour count `t(u, x, r)` over the grid.
fn neighbour_counts(p: &PointPattern, r: &RGrid, u: &Point, exclude: Option<usize>, out: &mut [f64]) {
    p.index().for_each_within(u, r.r_max(), |j, d2| {
        if Some(j) != exclude {
            out[r.first_at_least(d2.sqrt())] += 1.0;
        }
    });
    cumulate(out);
}

struct VsTerms<'a> {
    p: &'a PointPattern,
    r: &'a RGrid,
}

impl Terms for VsTerms<'_> {
    fn new_terms(&self, u: &Point, s: &mut [f64], d: &mut [f64]) {
        neighbour_counts(self.p, self.r, u, None, d);
        for (a, b) in s.iter_mut().zip(d.iter()) {
            *a = 0.5 * b;
        }
    }

    fn data_terms(&self, i: usize, s: &mut [f64], d: &mut [f64]) {
        neighbour_counts(self.p, self.r, &self.p.points()[i], Some(i), d);
        for (a, b) in s.iter_mut().zip(d.iter()) {
            *a = 0.5 * b;
        }
    }
}

struct VtTerms<'a> {
    p: &'a PointPattern,
    r: &'a RGrid,
}

impl VtTerms<'_> {
    /// Number of neighbour pairs of `u` that close a triangle of side at most r.
    fn closed_pairs(&self, u: &Point, exclude: Option<usize>, d: &mut [f64]) {
        let mut nb: Vec<(usize, f64)> = Vec::new();
        self.p.index().for_each_within(u, self.r.r_max(), |j, d2| {
            if Some(j) != exclude {
                nb.push((j, d2.sqrt()));
            }
        });
        let pts = self.p.points();
        for a in 0..nb.len() {
            for b in (a + 1)..nb.len() {
                let m = nb[a].1.max(nb[b].1).max(pts[nb[a].0].dist(&pts[nb[b].0]));
                if m <= self.r.r_max() {
                    d[self.r.first_at_least(m)] += 1.0;
                }
            }
        }
        cumulate(d);
    }
}

impl Terms for VtTerms<'_> {
    fn new_terms(&self, u: &Point, s: &mut [f64], d: &mut [f64]) {
        self.closed_pairs(u, None, d);
        for (a, b) in s.iter_mut().zip(d.iter()) {
            *a = b / 3.0;
        }
    }

    fn data_terms(&self, i: usize, s: &mut [f64], d: &mut [f64]) {
        self.closed_pairs(&self.p.points()[i], Some(i), d);
        for (a, b) in s.iter_mut().zip(d.iter()) {
            *a = b / 3.0;
        }
    }
}

struct GeyerTerms<'a> {
    p: &'a PointPattern,
    r: &'a RGrid,
    sat: f64,
    /// Sorted neighbour distances of each data point, up to `r_max`.
    nbr: Vec<Vec<f64>>,
}

impl<'a> GeyerTerms<'a> {
    fn new(p: &'a PointPattern, r: &'a RGrid, sat: f64) -> Self {
        let nbr = (0..p.n())
            .map(|i| {
                let mut v = Vec::new();
                p.index().for_each_within(&p.points()[i], r.r_max(), |j, d2| {
                    if j != i {
                        v.push(d2.sqrt());
                    }
                });
                v.sort_by(f64::total_cmp);
                v
            })
            .collect();
        GeyerTerms { p, r, sat, nbr }
    }

    /// Adds `clamp(s − (t_j(r) − offset), 0, 1)` for `r ≥ d` into `diff`.
    fn walk(&self, j: usize, d: f64, offset: f64, diff: &mut [f64]) {
        let r = self.r;
        let k0 = r.first_at_least(d);
        let f = |t: f64| (self.sat - t).clamp(0.0, 1.0);
        let sorted = &self.nbr[j];
        let mut t = sorted.partition_point(|&x| x <= r.values()[k0]) as f64;
        let mut v = f(t - offset);
        diff[k0] += v;
        for &x in sorted {
            if v == 0.0 {
                break;
            }
            let kk = r.first_at_least(x);
            if kk <= k0 {
                continue;
            }
            t += 1.0;
            let nv = f(t - offset);
            diff[kk] += nv - v;
            v = nv;
        }
    }

    fn terms(&self, u: &Point, exclude: Option<usize>, s: &mut [f64], d: &mut [f64]) {
        neighbour_counts(self.p, self.r, u, exclude, s);
        let offset = if exclude.is_some() { 1.0 } else { 0.0 };
        self.p.index().for_each_within(u, self.r.r_max(), |j, d2| {
            if Some(j) != exclude {
                self.walk(j, d2.sqrt(), offset, d);
            }
        });
        cumulate(d);
        for (a, b) in s.iter_mut().zip(d.iter_mut()) {
            *a = a.min(self.sat);
            *b += *a;
        }
    }
}

impl Terms for GeyerTerms<'_> {
    fn new_terms(&self, u: &Point, s: &mut [f64], d: &mut [f64]) {
        self.terms(u, None, s, d)
    }

    fn data_terms(&self, i: usize, s: &mut [f64], d: &mut [f64]) {
        self.terms(&self.p.points()[i], Some(i), s, d)
    }
}

struct KTerms<'a> {
    p: &'a PointPattern,
    r: &'a RGrid,
    corr: KCorrection,
    /// Window for boundary distances and the `|W|` factor.
    window: Window,
    /// Domain of the outer sum.
    free: Window,
    outer: Vec<bool>,
    inner: Vec<bool>,
    n: f64,
    /// Weighted pair sum `P(r)`, or the border numerator `B(r)`.
    base: Vec<f64>,
    /// Border: outer points with `b ≥ r`.
    m: Vec<f64>,
    value: Vec<f64>,
}

impl<'a> KTerms<'a> {
    fn new(p: &'a PointPattern, r: &'a RGrid, est: KEstimator) -> Result<Self> {
        let dom = domain_for(p, est.domain)?;
        if dom.inner.len() < 2 {
            return Err(Error::TooFewPoints("K undefined for fewer than two points".into()));
        }
        let mut outer = vec![false; p.n()];
        let mut inner = vec![false; p.n()];
        dom.outer.iter().for_each(|&i| outer[i] = true);
        dom.inner.iter().for_each(|&i| inner[i] = true);
        let nr = r.len();
        let mut t = KTerms {
            p,
            r,
            corr: est.correction,
            window: dom.window,
            free: dom.free,
            outer,
            inner,
            n: dom.inner.len() as f64,
            base: vec![0.0; nr],
            m: vec![0.0; nr],
            value: vec![0.0; nr],
        };
        let mut a = vec![0.0; nr];
        let mut b = vec![0.0; nr];
        let mut base = vec![0.0; nr];
        let mut m = vec![0.0; nr];
        for &i in &dom.outer {
            a.fill(0.0);
            b.fill(0.0);
            t.pair_sums(i, &mut a, &mut b);
            for k in 0..nr {
                base[k] += a[k];
            }
            bump(&mut m, 0, r.first_above(t.window.boundary_distance(&p.points()[i])), 1.0);
        }
        cumulate(&mut m);
        t.base = base;
        t.m = m;
        t.value = t.eval(&t.base, &t.m, t.n);
        Ok(t)
    }

    fn c(&self, n: f64) -> f64 {
        if n < 2.0 {
            return f64::NAN;
        }
        let a = self.window.area();
        a * a / (n * (n - 1.0) * self.free.area())
    }

    fn eval(&self, base: &[f64], m: &[f64], n: f64) -> Vec<f64> {
        match self.corr {
            KCorrection::Border => {
                let a = self.window.area();
                base.iter().zip(m).map(|(b, m)| if *m > 0.0 { a * b / (n * m) } else { f64::NAN }).collect()
            }
            _ => {
                let c = self.c(n);
                base.iter().map(|b| c * b).collect()
            }
        }
    }

    fn weight(&self, outer_pt: &Point, inner_pt: &Point) -> f64 {
        match self.corr {
            KCorrection::Translation => translation_weight(&self.window, &self.free, outer_pt, inner_pt),
            _ => 1.0,
        }
    }

    /// Pair contributions of a point at `u` (data index `me`, if any):
    /// `a` as an outer point, `b` as a neighbour of outer points.
    fn contributions(&self, u: &Point, me: Option<usize>, uo: bool, ui: bool, a: &mut [f64], b: &mut [f64]) {
        let r = self.r;
        let border = self.corr == KCorrection::Border;
        let ku = r.first_above(self.window.boundary_distance(u));
        let pts = self.p.points();
        self.p.index().for_each_within(u, r.r_max(), |j, d2| {
            if Some(j) == me {
                return;
            }
            let k = r.first_at_least(d2.sqrt());
            if uo && self.inner[j] {
                if border {
                    bump(a, k, ku, 1.0);
                } else {
                    a[k] += self.weight(u, &pts[j]);
                }
            }
            if ui && self.outer[j] {
                if border {
                    bump(b, k, r.first_above(self.window.boundary_distance(&pts[j])), 1.0);
                } else {
                    b[k] += self.weight(&pts[j], u);
                }
            }
        });
        cumulate(a);
        cumulate(b);
    }

    fn pair_sums(&self, i: usize, a: &mut [f64], b: &mut [f64]) {
        let u = self.p.points()[i];
        self.contributions(&u, Some(i), self.outer[i], self.inner[i], a, b);
    }
}

impl Terms for KTerms<'_> {
    fn new_terms(&self, u: &Point, s: &mut [f64], d: &mut [f64]) {
        let nr = self.r.len();
        let uo = self.free.contains(u);
        let ui = self.window.contains(u);
        let mut a = vec![0.0; nr];
        let mut b = vec![0.0; nr];
        self.contributions(u, None, uo, ui, &mut a, &mut b);
        let n1 = self.n + if ui { 1.0 } else { 0.0 };
        let mut m1 = self.m.clone();
        if uo {
            let ku = self.r.first_above(self.window.boundary_distance(u));
            m1.iter_mut().take(ku).for_each(|m| *m += 1.0);
        }
        let base1: Vec<f64> = (0..nr).map(|k| self.base[k] + a[k] + b[k]).collect();
        let v1 = self.eval(&base1, &m1, n1);
        let sv = self.eval(&a, &m1, n1);
        for k in 0..nr {
            s[k] = if a[k] == 0.0 { 0.0 } else { sv[k] };
            d[k] = v1[k] - self.value[k];
        }
    }

    fn data_terms(&self, i: usize, s: &mut [f64], d: &mut [f64]) {
        let nr = self.r.len();
        let mut a = vec![0.0; nr];
        let mut b = vec![0.0; nr];
        self.pair_sums(i, &mut a, &mut b);
        let n0 = self.n - if self.inner[i] { 1.0 } else { 0.0 };
        let mut m0 = self.m.clone();
        if self.outer[i] {
            let ki = self.r.first_above(self.window.boundary_distance(&self.p.points()[i]));
            m0.iter_mut().take(ki).for_each(|m| *m -= 1.0);
        }
        let base0: Vec<f64> = (0..nr).map(|k| self.base[k] - a[k] - b[k]).collect();
        let v0 = self.eval(&base0, &m0, n0);
        let sv = self.eval(&a, &self.m, self.n);
        for k in 0..nr {
            s[k] = if a[k] == 0.0 { 0.0 } else { sv[k] };
            d[k] = self.value[k] - v0[k];
        }
    }

    fn has_pseudo(&self) -> bool {
        self.n > 2.0
    }
}

struct GTerms<'a> {
    p: &'a PointPattern,
    r: &'a RGrid,
    corr: GCorrection,
    window: Window,
    free: Window,
    /// Reweighting range entering `|W_free ∩ W ⊖ d|`.
    ht_range: f64,
    outer: Vec<bool>,
    inner: Vec<bool>,
    inner_index: SpatialIndex,
    inner_ids: Vec<usize>,
    n: f64,
    b: Vec<f64>,
    nn: Vec<NearestTwo>,
    /// Outer points whose nearest inner neighbour is the given point.
    rev: Vec<Vec<usize>>,
    search: f64,
    num: Vec<f64>,
    total: f64,
    den: Vec<f64>,
    value: Vec<f64>,
}

#[derive(Clone)]
struct GAcc {
    num: Vec<f64>,
    total: f64,
    den: Vec<f64>,
}

impl<'a> GTerms<'a> {
    fn new(p: &'a PointPattern, r: &'a RGrid, est: GEstimator) -> Result<Self> {
        let dom = domain_for(p, est.domain)?;
        if dom.inner.len() < 2 {
            return Err(Error::TooFewPoints("G undefined for fewer than two points".into()));
        }
        let pts = p.points();
        let mut outer = vec![false; p.n()];
        let mut inner = vec![false; p.n()];
        dom.outer.iter().for_each(|&i| outer[i] = true);
        dom.inner.iter().for_each(|&i| inner[i] = true);
        let sub: Vec<Point> = dom.inner.iter().map(|&j| pts[j]).collect();
        let inner_index = SpatialIndex::new(&sub, (dom.window.area() / sub.len() as f64).sqrt());
        let mut local_id = vec![None; p.n()];
        dom.inner.iter().enumerate().for_each(|(k, &j)| local_id[j] = Some(k));
        let nn: Vec<NearestTwo> = (0..p.n())
            .map(|i| {
                let mut q = inner_index.nearest_two(&pts[i], local_id[i], f64::INFINITY);
                q.i1 = q.i1.map(|k| dom.inner[k]);
                q.i2 = q.i2.map(|k| dom.inner[k]);
                q
            })
            .collect();
        let mut rev = vec![Vec::new(); p.n()];
        let mut search: f64 = 0.0;
        for &j in &dom.outer {
            if let Some(i1) = nn[j].i1 {
                rev[i1].push(j);
            }
            search = search.max(nn[j].d1);
        }
        let b = pts.iter().map(|u| dom.window.boundary_distance(u)).collect();
        let ht_range = match est.domain {
            DomainMode::Reweighting { range } => range,
            _ => 0.0,
        };
        let nr = r.len();
        let mut t = GTerms {
            p,
            r,
            corr: est.correction,
            window: dom.window,
            free: dom.free,
            ht_range,
            outer,
            inner,
            inner_index,
            inner_ids: dom.inner.clone(),
            n: dom.inner.len() as f64,
            b,
            nn,
            rev,
            search,
            num: vec![0.0; nr],
            total: 0.0,
            den: vec![0.0; nr],
            value: vec![0.0; nr],
        };
        let mut acc = t.zero_acc();
        for &i in &dom.outer {
            t.add_item(&mut acc, t.b[i], t.nn[i].d1, 1.0);
        }
        cumulate(&mut acc.num);
        cumulate(&mut acc.den);
        t.num = acc.num;
        t.total = acc.total;
        t.den = acc.den;
        t.value = t.eval(&t.num, t.total, &t.den, t.n);
        Ok(t)
    }

    fn zero_acc(&self) -> GAcc {
        GAcc { num: vec![0.0; self.r.len()], total: 0.0, den: vec![0.0; self.r.len()] }
    }

    /// Horvitz–Thompson weight `1 / |W_free ∩ W ⊖ d|`.
    fn ht(&self, d: f64) -> f64 {
        let a = self.window.eroded_area(d.max(self.ht_range));
        if a > 0.0 {
            1.0 / a
        } else {
            0.0
        }
    }

    fn add_item(&self, acc: &mut GAcc, b: f64, d: f64, sign: f64) {
        let r = self.r;
        match self.corr {
            GCorrection::Border => {
                let k1 = r.first_above(b);
                bump(&mut acc.den, 0, k1, sign);
                bump(&mut acc.num, r.first_at_least(d), k1, sign);
            }
            _ => {
                if d.is_finite() && b >= d {
                    let w = self.ht(d);
                    acc.total += sign * w;
                    let k = r.first_at_least(d);
                    if k < r.len() {
                        acc.num[k] += sign * w;
                    }
                }
            }
        }
    }

    fn eval(&self, num: &[f64], total: f64, den: &[f64], n: f64) -> Vec<f64> {
        match self.corr {
            GCorrection::HanischConventional => {
                let c = self.window.area() / n;
                num.iter().map(|v| c * v).collect()
            }
            GCorrection::HanischD4 => num.iter().map(|v| v / total).collect(),
            GCorrection::Border => {
                num.iter().zip(den).map(|(a, b)| if *b > 0.0 { a / b } else { f64::NAN }).collect()
            }
        }
    }

    /// Local contribution of a summed-over point with boundary distance `b`
    /// and nearest-neighbour distance `d`, in a pattern with the given totals.
    fn local(&self, b: f64, d: f64, total: f64, den: &[f64], n: f64, s: &mut [f64]) {
        let r = self.r;
        match self.corr {
            GCorrection::Border => {
                let k1 = r.first_above(b);
                for k in r.first_at_least(d)..k1.min(r.len()) {
                    s[k] = 1.0 / den[k];
                }
            }
            _ => {
                if d.is_finite() && b >= d {
                    let w = self.ht(d);
                    let c = if self.corr == GCorrection::HanischConventional { self.window.area() / n } else { 1.0 / total };
                    for v in s.iter_mut().skip(r.first_at_least(d)) {
                        *v = c * w;
                    }
                }
            }
        }
    }

    fn finish(&self, acc: GAcc, n: f64) -> (Vec<f64>, f64, Vec<f64>) {
        let mut num = acc.num;
        let mut den = acc.den;
        cumulate(&mut num);
        cumulate(&mut den);
        for k in 0..num.len() {
            num[k] += self.num[k];
            den[k] += self.den[k];
        }
        let total = self.total + acc.total;
        (self.eval(&num, total, &den, n), total, den)
    }
}

impl Terms for GTerms<'_> {
    fn new_terms(&self, u: &Point, s: &mut [f64], d: &mut [f64]) {
        let uo = self.free.contains(u);
        let ui = self.window.contains(u);
        let mut acc = self.zero_acc();
        let du = self.inner_index.nearest_two(u, None, f64::INFINITY).d1;
        let bu = self.window.boundary_distance(u);
        if uo {
            self.add_item(&mut acc, bu, du, 1.0);
        }
        if ui {
            self.p.index().for_each_within(u, self.search, |j, d2| {
                let dj = d2.sqrt();
                if self.outer[j] && dj < self.nn[j].d1 {
                    self.add_item(&mut acc, self.b[j], self.nn[j].d1, -1.0);
                    self.add_item(&mut acc, self.b[j], dj, 1.0);
                }
            });
        }
        let n1 = self.n + if ui { 1.0 } else { 0.0 };
        let (v1, total1, den1) = self.finish(acc, n1);
        if uo {
            self.local(bu, du, total1, &den1, n1, s);
        }
        for k in 0..d.len() {
            d[k] = v1[k] - self.value[k];
        }
    }

    fn data_terms(&self, i: usize, s: &mut [f64], d: &mut [f64]) {
        let mut acc = self.zero_acc();
        if self.outer[i] {
            self.add_item(&mut acc, self.b[i], self.nn[i].d1, -1.0);
            self.local(self.b[i], self.nn[i].d1, self.total, &self.den, self.n, s);
        }
        if self.inner[i] {
            for &j in &self.rev[i] {
                if j == i {
                    continue;
                }
                self.add_item(&mut acc, self.b[j], self.nn[j].d1, -1.0);
                self.add_item(&mut acc, self.b[j], self.nn[j].d2, 1.0);
            }
        }
        let n0 = self.n - if self.inner[i] { 1.0 } else { 0.0 };
        let (v0, _, _) = self.finish(acc, n0);
        for k in 0..d.len() {
            d[k] = self.value[k] - v0[k];
        }
    }

    fn has_pseudo(&self) -> bool {
        // removing a point from a two-point pattern leaves G undefined
        self.inner_ids.len() > 2
    }
}

#[derive(Clone, Copy)]
/// Exact increments of the covered fraction `|W ∩ ∪ B(x_i, r)| / |W|`.
struct CoverTerms<'a> {
    p: &'a PointPattern,
    r: &'a RGrid,
}

impl CoverTerms<'_> {
    fn increments(&self, u: &Point, exclude: Option<usize>, d: &mut [f64]) {
        let w = self.p.window();
        let pts = self.p.points();
        let mut near = Vec::new();
        self.p.index().for_each_within(u, 2.0 * self.r.r_max(), |j, _| {
            if Some(j) != exclude {
                near.push(pts[j]);
            }
        });
        let mut cluster = DiscCluster::new(u, &near, w);
        // B(u, r) ∩ W covered implies B(u, r') ∩ W covered for r' > r (W is convex)
        let mut covered = false;
        for (k, &rv) in self.r.values().iter().enumerate() {
            d[k] = if covered { 0.0 } else { cluster.uncovered_area(rv) / w.area() };
            covered = rv > 0.0 && d[k] == 0.0;
        }
    }
}

impl Terms for CoverTerms<'_> {
    fn new_terms(&self, u: &Point, _s: &mut [f64], d: &mut [f64]) {
        self.increments(u, None, d);
    }

    fn data_terms(&self, i: usize, _s: &mut [f64], d: &mut [f64]) {
        self.increments(&self.p.points()[i], Some(i), d);
    }

    fn has_local(&self) -> bool {
        false
    }
}

struct PixInfo {
    b: f64,
    d1: f64,
    d2: f64,
}

/// Pixel-based increments of F̂.
struct PixTerms<'a> {
    r: &'a RGrid,
    grid: PixelGrid,
    border: bool,
    /// Increments only when `u` lies here (restriction).
    u_domain: Option<Window>,
    inner: Vec<bool>,
    slot: Vec<usize>,
    pix: Vec<PixInfo>,
    owned: Vec<Vec<usize>>,
    norm: Vec<f64>,
}

impl<'a> PixTerms<'a> {
    fn new(p: &PointPattern, r: &'a RGrid, est: FEstimator, grid: PixelGrid) -> Result<Self> {
        let dom = domain_for(p, est.domain)?;
        let pts = p.points();
        let mut inner = vec![false; p.n()];
        dom.inner.iter().for_each(|&i| inner[i] = true);
        let sub: Vec<Point> = dom.inner.iter().map(|&j| pts[j]).collect();
        let idx = SpatialIndex::new(&sub, r.r_max().max(1e-9));
        let mut slot = vec![usize::MAX; grid.len()];
        let mut pix = Vec::new();
        let mut owned = vec![Vec::new(); p.n()];
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let c = grid.centre(i, j);
                if !dom.free.contains(&c) {
                    continue;
                }
                let q = if sub.is_empty() { NearestTwo::default() } else { idx.nearest_two(&c, None, r.r_max()) };
                if let Some(k) = q.i1 {
                    owned[dom.inner[k]].push(pix.len());
                }
                slot[j * grid.nx + i] = pix.len();
                pix.push(PixInfo { b: dom.window.boundary_distance(&c), d1: q.d1, d2: q.d2 });
            }
        }
        let border = est.correction == FCorrection::Border;
        let norm = if border {
            let mut den = vec![0.0; r.len()];
            for q in &pix {
                bump(&mut den, 0, r.first_above(q.b), 1.0);
            }
            cumulate(&mut den);
            den.iter().map(|&c| if c > 0.0 { 1.0 / c } else { f64::NAN }).collect()
        } else {
            vec![1.0 / pix.len().max(1) as f64; r.len()]
        };
        let u_domain = match est.domain {
            DomainMode::Restriction { .. } => Some(dom.free),
            _ => None,
        };
        Ok(PixTerms { r, grid, border, u_domain, inner, slot, pix, owned, norm })
    }

    fn interval(&self, q: &PixInfo, start: f64, end: f64, diff: &mut [f64]) {
        let r = self.r;
        let mut k1 = r.first_at_least(end);
        if self.border {
            k1 = k1.min(r.first_above(q.b));
        }
        bump(diff, r.first_at_least(start), k1, 1.0);
    }

    fn finish(&self, d: &mut [f64]) {
        cumulate(d);
        for (v, c) in d.iter_mut().zip(&self.norm) {
            if *v != 0.0 {
                *v *= c;
            }
        }
    }
}

impl Terms for PixTerms<'_> {
    fn new_terms(&self, u: &Point, _s: &mut [f64], d: &mut [f64]) {
        if let Some(w) = &self.u_domain {
            if !w.contains(u) {
                return;
            }
        }
        self.grid.for_each_in_disc(u, self.r.r_max(), |flat, d2| {
            let sl = self.slot[flat];
            if sl != usize::MAX {
                let q = &self.pix[sl];
                self.interval(q, d2.sqrt(), q.d1, d);
            }
        });
        self.finish(d);
    }

    fn data_terms(&self, i: usize, _s: &mut [f64], d: &mut [f64]) {
        if !self.inner[i] {
            return;
        }
        for &sl in &self.owned[i] {
            let q = &self.pix[sl];
            self.interval(q, q.d1, q.d2, d);
        }
        self.finish(d);
    }

    fn has_local(&self) -> bool {
        false
    }
}

fn prepare<'a>(
    stat: &LocalStatistic,
    p: &'a PointPattern,
    r: &'a RGrid,
    pixel_resolution: usize,
) -> Result<Box<dyn Terms + 'a>> {
    stat.validate()?;
    let grid = || PixelGrid::new(*p.window(), pixel_resolution, pixel_resolution);
    Ok(match *stat {
        LocalStatistic::Vs => Box::new(VsTerms { p, r }),
        LocalStatistic::Vt => Box::new(VtTerms { p, r }),
        LocalStatistic::Vg => Box::new(GeyerTerms::new(p, r, 1.0)),
        LocalStatistic::VgSat { s } => Box::new(GeyerTerms::new(p, r, s)),
        LocalStatistic::KhatLocal { estimator } => Box::new(KTerms::new(p, r, estimator)?),
        LocalStatistic::GhatLocal { estimator } => Box::new(GTerms::new(p, r, estimator)?),
        LocalStatistic::Va => Box::new(CoverTerms { p, r }),
        LocalStatistic::FhatIncrement { estimator } => Box::new(PixTerms::new(p, r, estimator, grid()?)?),
    })
}

// ---------------------------------------------------------------------------
// Evaluation

struct Integrals {
    comp: Vec<f64>,
    var: Vec<f64>,
    pcomp: Vec<f64>,
    pvar: Vec<f64>,
}

impl Integrals {
    fn zeros(nr: usize) -> Self {
        Integrals { comp: vec![0.0; nr], var: vec![0.0; nr], pcomp: vec![0.0; nr], pvar: vec![0.0; nr] }
    }

    fn add(&mut self, o: &Integrals) {
        for k in 0..self.comp.len() {
            self.comp[k] += o.comp[k];
            self.var[k] += o.var[k];
            self.pcomp[k] += o.pcomp[k];
            self.pvar[k] += o.pvar[k];
        }
    }
}

/// Sum and pseudo-sum over the points of `W_free`.
fn data_sums(terms: &dyn Terms, p: &PointPattern, free: &Window, nr: usize) -> (Vec<f64>, Vec<f64>) {
    let mut sum = vec![0.0; nr];
    let mut psum = vec![0.0; nr];
    let mut s = vec![0.0; nr];
    let mut d = vec![0.0; nr];
    for (i, u) in p.points().iter().enumerate() {
        if !free.contains(u) {
            continue;
        }
        s.fill(0.0);
        d.fill(0.0);
        terms.data_terms(i, &mut s, &mut d);
        for k in 0..nr {
            sum[k] += s[k];
            psum[k] += d[k];
        }
    }
    (sum, psum)
}

/// Pseudo-sum `Σ_i Δ_{x_i} S(x, r)` over all points, with no model involved.
pub fn pseudo_sum(stat: &LocalStatistic, p: &PointPattern, r: &RGrid, opts: &DiagOptions) -> Result<Vec<f64>> {
    let terms = prepare(stat, p, r, opts.pixel_resolution.unwrap_or(256))?;
    if !terms.has_pseudo() {
        return Err(Error::TooFewPoints("pseudo-sum undefined for this pattern size".into()));
    }
    Ok(data_sums(terms.as_ref(), p, p.window(), r.len()).1)
}

/// Every diagnostic column for one statistic, fitted model and pattern.
pub fn evaluate(
    stat: &LocalStatistic,
    fm: &FittedModel,
    p: &PointPattern,
    r: &RGrid,
    mode: Mode,
    opts: &DiagOptions,
) -> Result<DiagnosticColumns> {
    let nr = r.len();
    let w = *p.window();
    let free = mode.free_window(&w)?;
    let res = opts.pixel_resolution.unwrap_or(fm.spec.pixel_resolution);
    let terms = prepare(stat, p, r, res)?;
    let (sum, psum) = data_sums(terms.as_ref(), p, &free, nr);
    let local = terms.has_local();
    let pseudo = terms.has_pseudo();

    let integrals = match opts.rule {
        IntegrationRule::Analytic => return analytic(stat, fm, p, r, &free, sum, psum, pseudo),
        IntegrationRule::Quadrature => {
            if fm.quadrature.n_data() != p.n() || fm.quadrature.window != w {
                return Err(Error::InvalidParameter(
                    "fitted model's quadrature does not belong to this pattern".into(),
                ));
            }
            let nodes: Vec<(Point, f64, Option<usize>)> =
                fm.quadrature.nodes.iter().map(|q| (q.point, q.weight, q.data)).collect();
            integrate(terms.as_ref(), fm, p, &free, &nodes, nr)
        }
        IntegrationRule::Pixels { nx, ny } => {
            let g = PixelGrid::new(w, nx, ny)?;
            let a = g.pixel_area();
            let nodes: Vec<(Point, f64, Option<usize>)> = g.centres().into_iter().map(|c| (c, a, None)).collect();
            integrate(terms.as_ref(), fm, p, &free, &nodes, nr)
        }
    };
    Ok(DiagnosticColumns {
        r: r.values().to_vec(),
        sum: local.then_some(sum),
        compensator: local.then(|| integrals.comp.clone()),
        variance: local.then(|| integrals.var.clone()),
        pseudo_sum: pseudo.then_some(psum),
        pseudo_compensator: pseudo.then(|| integrals.pcomp.clone()),
        pseudo_variance: pseudo.then_some(integrals.pvar),
    })
}

fn integrate(
    terms: &dyn Terms,
    fm: &FittedModel,
    p: &PointPattern,
    free: &Window,
    nodes: &[(Point, f64, Option<usize>)],
    nr: usize,
) -> Integrals {
    let ev = fm.evaluator(p);
    // force the lazily built index before the parallel section
    let _ = p.index();
    let parts: Vec<Integrals> = nodes
        .par_chunks(64)
        .map(|chunk| {
            let mut acc = Integrals::zeros(nr);
            let mut s = vec![0.0; nr];
            let mut d = vec![0.0; nr];
            for (u, wt, data) in chunk {
                if *wt <= 0.0 || !free.contains(u) {
                    continue;
                }
                let lam = ev.lambda_at(u, *data);
                if lam == 0.0 {
                    continue;
                }
                s.fill(0.0);
                d.fill(0.0);
                match data {
                    Some(i) => terms.data_terms(*i, &mut s, &mut d),
                    None => terms.new_terms(u, &mut s, &mut d),
                }
                let wl = wt * lam;
                for k in 0..nr {
                    acc.comp[k] += wl * s[k];
                    acc.var[k] += wl * s[k] * s[k];
                    acc.pcomp[k] += wl * d[k];
                    acc.pvar[k] += wl * d[k] * d[k];
                }
            }
            acc
        })
        .collect();
    let mut total = Integrals::zeros(nr);
    for part in &parts {
        total.add(part);
    }
    total
}

#[allow(clippy::too_many_arguments)]
fn analytic(
    stat: &LocalStatistic,
    fm: &FittedModel,
    p: &PointPattern,
    r: &RGrid,
    free: &Window,
    sum: Vec<f64>,
    psum: Vec<f64>,
    pseudo: bool,
) -> Result<DiagnosticColumns> {
    if !fm.spec.is_poisson() || !fm.spec.first_order.is_homogeneous() {
        return Err(Error::Unsupported("analytic integration needs a homogeneous Poisson model".into()));
    }
    let kappa = fm.spec.first_order.intensity(&p.window().centre());
    // ∫_{W_free} t(u, x, r) du = Σ_i |W_free ∩ B(x_i, r)|
    let disc_sum: Vec<f64> =
        r.values().iter().map(|&rv| p.points().iter().map(|x| disc_window_area(x, rv, free)).sum()).collect();
    let (comp, pcomp) = match *stat {
        LocalStatistic::Vs => {
            let c: Vec<f64> = disc_sum.iter().map(|v| 0.5 * kappa * v).collect();
            let pc = c.iter().map(|v| 2.0 * v).collect();
            (c, pc)
        }
        LocalStatistic::KhatLocal { estimator: KEstimator { correction: KCorrection::Raw, domain: DomainMode::Full } } => {
            let kt = KTerms::new(p, r, KEstimator { correction: KCorrection::Raw, domain: DomainMode::Full })?;
            let c1 = kt.c(kt.n + 1.0);
            let c0 = kt.c(kt.n);
            let c: Vec<f64> = disc_sum.iter().map(|v| kappa * c1 * v).collect();
            let pc = (0..r.len())
                .map(|k| kappa * ((c1 - c0) * kt.base[k] * free.area() + 2.0 * c1 * disc_sum[k]))
                .collect();
            (c, pc)
        }
        _ => {
            return Err(Error::Unsupported(format!(
                "no closed-form compensator for statistic {}",
                stat.name()
            )))
        }
    };
    Ok(DiagnosticColumns {
        r: r.values().to_vec(),
        sum: Some(sum),
        compensator: Some(comp),
        variance: None,
        pseudo_sum: pseudo.then_some(psum),
        pseudo_compensator: pseudo.then_some(pcomp),
        pseudo_variance: None,
    })
}

fn need(col: Option<Vec<f64>>, what: &str, stat: &LocalStatistic) -> Result<Vec<f64>> {
    col.ok_or_else(|| Error::Unsupported(format!("{what} is not available for statistic {}", stat.name())))
}

/// `∫ s(u, x, r) λ̂(u, x) du`.
pub fn compensator(
    stat: &LocalStatistic,
    fm: &FittedModel,
    p: &PointPattern,
    r: &RGrid,
    mode: Mode,
    opts: &DiagOptions,
) -> Result<Vec<f64>> {
    need(evaluate(stat, fm, p, r, mode, opts)?.compensator, "compensator", stat)
}

/// `Σ_i s(x_i, x_{-i}, r) − ∫ s(u, x, r) λ̂(u, x) du`.
pub fn residual(
    stat: &LocalStatistic,
    fm: &FittedModel,
    p: &PointPattern,
    r: &RGrid,
    mode: Mode,
    opts: &DiagOptions,
) -> Result<Vec<f64>> {
    need(evaluate(stat, fm, p, r, mode, opts)?.residual(), "residual", stat)
}

/// `∫ Δ_u S(x, r) λ̂(u, x) du`.
pub fn pseudo_compensator(
    stat: &LocalStatistic,
    fm: &FittedModel,
    p: &PointPattern,
    r: &RGrid,
    mode: Mode,
    opts: &DiagOptions,
) -> Result<Vec<f64>> {
    need(evaluate(stat, fm, p, r, mode, opts)?.pseudo_compensator, "pseudo-compensator", stat)
}

pub fn pseudo_residual(
    stat: &LocalStatistic,
    fm: &FittedModel,
    p: &PointPattern,
    r: &RGrid,
    mode: Mode,
    opts: &DiagOptions,
) -> Result<Vec<f64>> {
    need(evaluate(stat, fm, p, r, mode, opts)?.pseudo_residual(), "pseudo-residual", stat)
}

/// `∫ s² λ̂` (residual flavour) or `∫ (Δ_u S)² λ̂` (pseudo flavour).
pub fn poincare_variance(
    stat: &LocalStatistic,
    fm: &FittedModel,
    p: &PointPattern,
    r: &RGrid,
    mode: Mode,
    opts: &DiagOptions,
    flavor: Flavor,
) -> Result<Vec<f64>> {
    let cols = evaluate(stat, fm, p, r, mode, opts)?;
    match flavor {
        Flavor::Residual => need(cols.variance, "Poincaré variance", stat),
        Flavor::Pseudo => need(cols.pseudo_variance, "Poincaré pseudo-variance", stat),
    }
}

/// `residual / √variance`; `x / 0` is undefined (NaN).
pub fn standardized(residual: &[f64], variance: &[f64]) -> Result<Vec<f64>> {
    if residual.len() != variance.len() {
        return Err(Error::InvalidParameter("residual and variance lengths differ".into()));
    }
    let mut warned = false;
    residual
        .iter()
        .zip(variance)
        .map(|(&x, &v)| {
            if v < 0.0 {
                return Err(Error::Numerical(format!("negative variance {v}")));
            }
            if v == 0.0 {
                if x != 0.0 && !x.is_nan() && !warned {
                    log::warn!("nonzero residual {x} with zero variance; reported as undefined");
                    warned = true;
                }
                return Ok(f64::NAN);
            }
            Ok(x / v.sqrt())
        })
        .collect()
}

/// Gaussian Nadaraya–Watson smoothing over r; NaN entries get no weight.
/// The default bandwidth is `0.05 · r_max`.
pub fn smooth(col: &[f64], r: &RGrid, bandwidth: Option<f64>) -> Result<Vec<f64>> {
    if col.len() != r.len() {
        return Err(Error::InvalidParameter("column length does not match r grid".into()));
    }
    let h = bandwidth.unwrap_or(0.05 * r.r_max());
    if !(h >= 0.0) {
        return Err(Error::InvalidParameter(format!("bandwidth {h}")));
    }
    if h == 0.0 {
        return Ok(col.to_vec());
    }
    let rv = r.values();
    Ok(rv
        .iter()
        .map(|&r0| {
            let (mut num, mut den) = (0.0, 0.0);
            for (&rj, &y) in rv.iter().zip(col) {
                if y.is_nan() {
                    continue;
                }
                let z = (r0 - rj) / h;
                let k = (-0.5 * z * z).exp();
                num += k * y;
                den += k;
            }
            if den > 0.0 {
                num / den
            } else {
                f64::NAN
            }
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Monte Carlo innovations

/// Moments of the innovations over simulations from a model with known parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct McInnovation {
    pub r: Vec<f64>,
    pub n_sims: usize,
    pub mean: Option<Vec<f64>>,
    pub variance: Option<Vec<f64>>,
    /// Mean of the Poincaré variance `∫ s² λ`.
    pub mean_poincare: Option<Vec<f64>>,
    pub pseudo_mean: Option<Vec<f64>>,
    pub pseudo_variance: Option<Vec<f64>>,
    pub mean_pseudo_poincare: Option<Vec<f64>>,
}

impl McInnovation {
    /// Monte Carlo standard error of a mean column.
    pub fn standard_error(&self, variance: &[f64]) -> Vec<f64> {
        variance.iter().map(|v| (v / self.n_sims as f64).sqrt()).collect()
    }
}

fn moments(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() as f64;
    let nr = rows.first().map_or(0, |r| r.len());
    let mut mean = vec![0.0; nr];
    for row in rows {
        for k in 0..nr {
            mean[k] += row[k] / n;
        }
    }
    let mut var = vec![0.0; nr];
    for row in rows {
        for k in 0..nr {
            var[k] += (row[k] - mean[k]).powi(2) / (n - 1.0);
        }
    }
    (mean, var)
}

/// Simulate a pattern from `model` on `w` with the given stream seed.
pub fn simulate_model(model: &ModelSpec, w: &Window, seed: u64, mcmc: &McmcConfig) -> Result<PointPattern> {
    if model.is_poisson() {
        sample_poisson(&model.first_order, w, seed)
    } else {
        sample_gibbs(model, w, &McmcConfig { seed, ..*mcmc })
    }
}

/// Innovation moments `Σ s(x_i, x_{-i}) − ∫ s λ_θ` under the true model.
#[allow(clippy::too_many_arguments)]
pub fn mc_innovation(
    stat: &LocalStatistic,
    model: &ModelSpec,
    w: &Window,
    n_sims: usize,
    r: &RGrid,
    seed: u64,
    mcmc: &McmcConfig,
    opts: &DiagOptions,
) -> Result<McInnovation> {
    if n_sims < 2 {
        return Err(Error::InvalidParameter("need at least two simulations".into()));
    }
    model.check_simulable()?;
    let cols: Vec<DiagnosticColumns> = (0..n_sims as u64)
        .into_par_iter()
        .map(|i| {
            let p = simulate_model(model, w, stream_seed(seed, i), mcmc)?;
            let fm = FittedModel::known(model.clone(), &p, Mode::Unconditional, None)?;
            evaluate(stat, &fm, &p, r, Mode::Unconditional, opts)
        })
        .collect::<Result<_>>()?;
    let gather = |f: &dyn Fn(&DiagnosticColumns) -> Option<Vec<f64>>| -> Option<Vec<Vec<f64>>> {
        cols.iter().map(f).collect()
    };
    let innov = gather(&|c| c.residual());
    let pinnov = gather(&|c| c.pseudo_residual());
    let var = gather(&|c| c.variance.clone());
    let pvar = gather(&|c| c.pseudo_variance.clone());
    let (mean, variance) = innov.map(|v| moments(&v)).unzip();
    let (pseudo_mean, pseudo_variance) = pinnov.map(|v| moments(&v)).unzip();
    Ok(McInnovation {
        r: r.values().to_vec(),
        n_sims,
        mean,
        variance,
        mean_poincare: var.map(|v| moments(&v).0),
        pseudo_mean,
        pseudo_variance,
        mean_pseudo_poincare: pvar.map(|v| moments(&v).0),
    })
}

/// Monte Carlo estimate of the innovation variance.
pub fn mc_innovation_variance(
    stat: &LocalStatistic,
    model: &ModelSpec,
    w: &Window,
    n_sims: usize,
    r: &RGrid,
    seed: u64,
    mcmc: &McmcConfig,
    opts: &DiagOptions,
) -> Result<Vec<f64>> {
    let m = mc_innovation(stat, model, w, n_sims, r, seed, mcmc, opts)?;
    need(m.variance, "innovation variance", stat)
}
