//! Poisson thinning and birth–death Metropolis–Hastings for Gibbs models.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{PixelGrid, Point, Window};
use crate::models::{interaction_term, FirstOrderSpec, InteractionKind, ModelSpec};
use crate::pattern::PointPattern;

pub type SimRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McmcConfig {
    /// Total number of proposals, burn-in included.
    pub n_steps: u64,
    pub birth_prob: f64,
    pub seed: u64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig { n_steps: 100_000, birth_prob: 0.5, seed: 0 }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.birth_prob > 0.0 && self.birth_prob < 1.0) {
            return Err(Error::InvalidParameter(format!("birth_prob {}", self.birth_prob)));
        }
        if self.n_steps == 0 {
            return Err(Error::InvalidParameter("n_steps must be positive".into()));
        }
        Ok(())
    }
}

/// Seed for replicate `index` of a run seeded with `seed` (SplitMix64 finaliser).
pub fn stream_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn uniform_in(w: &Window, rng: &mut impl Rng) -> Point {
    Point::new(
        w.x_min + w.width() * rng.random::<f64>(),
        w.y_min + w.height() * rng.random::<f64>(),
    )
}

/// Inhomogeneous Poisson points by thinning a dominating homogeneous process.
pub fn sample_poisson_points(fo: &FirstOrderSpec, w: &Window, rng: &mut impl Rng) -> Result<Vec<Point>> {
    fo.validate()?;
    let bound = fo.max_intensity(w);
    if bound.is_nan() || bound.is_infinite() {
        return Err(Error::Numerical(format!("intensity bound {bound} is not finite")));
    }
    let mean = bound * w.area();
    if mean <= 0.0 {
        return Ok(Vec::new());
    }
    let n = Poisson::new(mean)
        .map_err(|e| Error::Numerical(format!("poisson mean {mean}: {e}")))?
        .sample(rng) as usize;
    let mut pts = Vec::with_capacity(n);
    for _ in 0..n {
        let u = uniform_in(w, rng);
        let lam = fo.intensity(&u);
        if !lam.is_finite() {
            return Err(Error::Numerical(format!("intensity {lam} at ({}, {})", u.x, u.y)));
        }
        if lam > bound {
            return Err(Error::Numerical("intensity exceeds the thinning bound".into()));
        }
        if rng.random::<f64>() * bound < lam {
            pts.push(u);
        }
    }
    Ok(pts)
}

pub fn sample_poisson(fo: &FirstOrderSpec, w: &Window, seed: u64) -> Result<PointPattern> {
    let mut rng = rng_from_seed(seed);
    PointPattern::new(sample_poisson_points(fo, w, &mut rng)?, *w)
}

/// Birth–death Metropolis–Hastings run from a Poisson(first-order) start.
pub fn sample_gibbs(m: &ModelSpec, w: &Window, cfg: &McmcConfig) -> Result<PointPattern> {
    let mut rng = rng_from_seed(cfg.seed);
    let start = sample_poisson_points(&m.first_order, w, &mut rng)?;
    let mut chain = BirthDeathChain::new(m, SiteSpace::Continuous(*w), cfg.birth_prob, start)?;
    for _ in 0..cfg.n_steps {
        chain.step(&mut rng);
    }
    chain.into_pattern()
}

/// Where births are proposed.
#[derive(Clone, Debug)]
pub enum SiteSpace {
    /// Uniform over the window.
    Continuous(Window),
    /// Uniform over a finite set of sites; each site holds at most one point.
    Sites { window: Window, sites: Vec<Point> },
}

impl SiteSpace {
    fn window(&self) -> &Window {
        match self {
            SiteSpace::Continuous(w) => w,
            SiteSpace::Sites { window, .. } => window,
        }
    }

    /// Reference measure of the proposal space.
    fn measure(&self) -> f64 {
        match self {
            SiteSpace::Continuous(w) => w.area(),
            SiteSpace::Sites { sites, .. } => sites.len() as f64,
        }
    }
}

/// Bucket grid supporting insertion and swap-removal of points.
#[derive(Clone, Debug)]
struct DynamicGrid {
    x0: f64,
    y0: f64,
    cell: f64,
    nx: usize,
    ny: usize,
    cells: Vec<Vec<u32>>,
    /// For each point: (cell, position in cell).
    slot: Vec<(u32, u32)>,
}

impl DynamicGrid {
    fn new(w: &Window, reach: f64) -> Self {
        let side = w.width().max(w.height());
        let mut cell = if reach > 0.0 { reach } else { side };
        while ((w.width() / cell).ceil() * (w.height() / cell).ceil()) > 1.0e6 {
            cell *= 2.0;
        }
        let nx = ((w.width() / cell).ceil() as usize).max(1);
        let ny = ((w.height() / cell).ceil() as usize).max(1);
        DynamicGrid { x0: w.x_min, y0: w.y_min, cell, nx, ny, cells: vec![Vec::new(); nx * ny], slot: Vec::new() }
    }

    fn cell_of(&self, p: &Point) -> usize {
        let i = (((p.x - self.x0) / self.cell).floor().max(0.0) as usize).min(self.nx - 1);
        let j = (((p.y - self.y0) / self.cell).floor().max(0.0) as usize).min(self.ny - 1);
        j * self.nx + i
    }

    fn push(&mut self, p: &Point) {
        let id = self.slot.len() as u32;
        let c = self.cell_of(p);
        self.slot.push((c as u32, self.cells[c].len() as u32));
        self.cells[c].push(id);
    }

    /// Removes point `i`; the last point takes index `i`.
    fn swap_remove(&mut self, i: usize) {
        let (c, pos) = self.slot[i];
        let list = &mut self.cells[c as usize];
        list.swap_remove(pos as usize);
        if (pos as usize) < list.len() {
            let moved = list[pos as usize] as usize;
            self.slot[moved].1 = pos;
        }
        let last = self.slot.len() - 1;
        if i != last {
            let (lc, lpos) = self.slot[last];
            self.cells[lc as usize][lpos as usize] = i as u32;
            self.slot[i] = (lc, lpos);
        }
        self.slot.pop();
    }

    fn for_each_within(&self, pts: &[Point], u: &Point, r: f64, mut f: impl FnMut(usize, f64)) {
        let r2 = r * r;
        let i0 = (((u.x - r - self.x0) / self.cell).floor() as isize).max(0);
        let i1 = (((u.x + r - self.x0) / self.cell).floor() as isize).min(self.nx as isize - 1);
        let j0 = (((u.y - r - self.y0) / self.cell).floor() as isize).max(0);
        let j1 = (((u.y + r - self.y0) / self.cell).floor() as isize).min(self.ny as isize - 1);
        for j in j0..=j1 {
            for i in i0..=i1 {
                for &k in &self.cells[j as usize * self.nx + i as usize] {
                    let d2 = pts[k as usize].dist2(u);
                    if d2 <= r2 {
                        f(k as usize, d2);
                    }
                }
            }
        }
    }
}

/// Birth–death Metropolis–Hastings chain with incremental interaction caches.
#[derive(Clone, Debug)]
pub struct BirthDeathChain {
    model: ModelSpec,
    space: SiteSpace,
    birth_prob: f64,
    pts: Vec<Point>,
    grid: DynamicGrid,
    /// Geyer: r-neighbour counts.
    counts: Vec<u32>,
    /// Area interaction: pixel coverage counts.
    cover: Vec<u16>,
    pixels: Option<PixelGrid>,
    /// Sites: site index of each point, occupancy per site.
    site_of: Vec<usize>,
    occupied: Vec<bool>,
    accepted: u64,
    steps: u64,
}

impl BirthDeathChain {
    pub fn new(model: &ModelSpec, space: SiteSpace, birth_prob: f64, start: Vec<Point>) -> Result<Self> {
        model.validate()?;
        model.check_simulable()?;
        if !(birth_prob > 0.0 && birth_prob < 1.0) {
            return Err(Error::InvalidParameter(format!("birth_prob {birth_prob}")));
        }
        let w = *space.window();
        let grid = DynamicGrid::new(&w, model.interaction.kind.reach());
        let pixels = match model.interaction.kind {
            InteractionKind::AreaInteraction { .. } => Some(model.pixel_grid(&w)),
            _ => None,
        };
        let (n_sites, site_lookup) = match &space {
            SiteSpace::Sites { sites, .. } => (sites.len(), Some(sites.clone())),
            SiteSpace::Continuous(_) => (0, None),
        };
        let mut chain = BirthDeathChain {
            model: model.clone(),
            space,
            birth_prob,
            pts: Vec::new(),
            grid,
            counts: Vec::new(),
            cover: pixels.map(|g| vec![0u16; g.len()]).unwrap_or_default(),
            pixels,
            site_of: Vec::new(),
            occupied: vec![false; n_sites],
            accepted: 0,
            steps: 0,
        };
        for p in start {
            if !w.contains(&p) {
                return Err(Error::PointOutsideWindow { x: p.x, y: p.y });
            }
            let site = match &site_lookup {
                Some(sites) => Some(
                    sites
                        .iter()
                        .position(|s| *s == p)
                        .ok_or_else(|| Error::InvalidParameter("start point is not a site".into()))?,
                ),
                None => None,
            };
            chain.insert(p, site);
        }
        Ok(chain)
    }

    pub fn points(&self) -> &[Point] {
        &self.pts
    }

    pub fn n(&self) -> usize {
        self.pts.len()
    }

    /// Site indices currently occupied (site spaces only), sorted.
    pub fn occupied_sites(&self) -> Vec<usize> {
        let mut s = self.site_of.clone();
        s.sort_unstable();
        s
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.accepted as f64 / self.steps as f64
        }
    }

    pub fn into_pattern(self) -> Result<PointPattern> {
        PointPattern::new(self.pts, *self.space.window())
    }

    /// `Δ_u V(x)` for `u` not in the state, or `Δ_{x_i} V(x_{-i})` when `excl = Some(i)`.
    fn delta(&self, u: &Point, excl: Option<usize>) -> f64 {
        match self.model.interaction.kind {
            InteractionKind::None => 0.0,
            InteractionKind::Strauss { r } => {
                let mut c = 0usize;
                self.grid.for_each_within(&self.pts, u, r, |j, _| c += usize::from(Some(j) != excl));
                c as f64
            }
            InteractionKind::GeyerSat { r, s } => {
                let mut tu = 0.0f64;
                let mut acc = 0.0;
                self.grid.for_each_within(&self.pts, u, r, |j, _| {
                    if Some(j) == excl {
                        return;
                    }
                    tu += 1.0;
                    let t = self.counts[j] as f64;
                    acc += if excl.is_some() {
                        t.min(s) - (t - 1.0).min(s)
                    } else {
                        (t + 1.0).min(s) - t.min(s)
                    };
                });
                tu.min(s) + acc
            }
            InteractionKind::AreaInteraction { r } => {
                let g = self.pixels.as_ref().expect("pixel grid for area interaction");
                let target = u16::from(excl.is_some());
                let mut c = 0usize;
                g.for_each_in_disc(u, r, |k, _| c += usize::from(self.cover[k] == target));
                -(c as f64) * g.pixel_area()
            }
            InteractionKind::SoftCore { sigma2, cutoff } => {
                let s4 = sigma2 * sigma2;
                let mut v = 0.0;
                self.grid.for_each_within(&self.pts, u, cutoff, |j, d2| {
                    if Some(j) != excl {
                        v += s4 / (d2 * d2);
                    }
                });
                v
            }
            InteractionKind::Triplet { r } => {
                let mut nb = Vec::new();
                self.grid.for_each_within(&self.pts, u, r, |j, _| {
                    if Some(j) != excl {
                        nb.push(j);
                    }
                });
                let r2 = r * r;
                let mut c = 0usize;
                for a in 0..nb.len() {
                    for b in 0..a {
                        c += usize::from(self.pts[nb[a]].dist2(&self.pts[nb[b]]) <= r2);
                    }
                }
                c as f64
            }
        }
    }

    fn log_lambda(&self, u: &Point, excl: Option<usize>) -> f64 {
        let d = self.delta(u, excl);
        self.model.first_order.log_intensity(u) + interaction_term(self.model.interaction.phi, d)
    }

    fn insert(&mut self, u: Point, site: Option<usize>) {
        if let InteractionKind::GeyerSat { r, .. } = self.model.interaction.kind {
            let mut t = 0u32;
            let counts = &mut self.counts;
            self.grid.for_each_within(&self.pts, &u, r, |j, _| {
                counts[j] += 1;
                t += 1;
            });
            self.counts.push(t);
        }
        if let (InteractionKind::AreaInteraction { r }, Some(g)) = (self.model.interaction.kind, self.pixels) {
            let cover = &mut self.cover;
            g.for_each_in_disc(&u, r, |k, _| cover[k] += 1);
        }
        self.grid.push(&u);
        self.pts.push(u);
        if let Some(s) = site {
            self.site_of.push(s);
            self.occupied[s] = true;
        }
    }

    fn remove(&mut self, i: usize) {
        let u = self.pts[i];
        if let InteractionKind::GeyerSat { r, .. } = self.model.interaction.kind {
            let counts = &mut self.counts;
            self.grid.for_each_within(&self.pts, &u, r, |j, _| {
                if j != i {
                    counts[j] -= 1;
                }
            });
            self.counts.swap_remove(i);
        }
        if let (InteractionKind::AreaInteraction { r }, Some(g)) = (self.model.interaction.kind, self.pixels) {
            let cover = &mut self.cover;
            g.for_each_in_disc(&u, r, |k, _| cover[k] -= 1);
        }
        self.grid.swap_remove(i);
        self.pts.swap_remove(i);
        if !self.site_of.is_empty() {
            let s = self.site_of.swap_remove(i);
            self.occupied[s] = false;
        }
    }

    /// One proposal; returns whether it was accepted.
    pub fn step(&mut self, rng: &mut impl Rng) -> bool {
        self.steps += 1;
        let n = self.pts.len() as f64;
        let measure = self.space.measure();
        // proposal asymmetry; equals 1 at birth_prob = 0.5
        let q = (1.0 - self.birth_prob) / self.birth_prob;
        let accepted = if rng.random::<f64>() < self.birth_prob {
            let (u, site) = match &self.space {
                SiteSpace::Continuous(w) => (uniform_in(w, rng), None),
                SiteSpace::Sites { sites, .. } => {
                    let k = rng.random_range(0..sites.len());
                    if self.occupied[k] {
                        return false;
                    }
                    (sites[k], Some(k))
                }
            };
            let log_ratio = self.log_lambda(&u, None) + (measure * q / (n + 1.0)).ln();
            let ok = log_ratio >= 0.0 || rng.random::<f64>() < log_ratio.exp();
            if ok {
                self.insert(u, site);
            }
            ok
        } else {
            if self.pts.is_empty() {
                return false;
            }
            let i = rng.random_range(0..self.pts.len());
            let u = self.pts[i];
            let log_ratio = (n / (measure * q)).ln() - self.log_lambda(&u, Some(i));
            let ok = log_ratio >= 0.0 || rng.random::<f64>() < log_ratio.exp();
            if ok {
                self.remove(i);
            }
            ok
        };
        self.accepted += u64::from(accepted);
        accepted
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{potential, Covariate, InteractionSpec};

    #[test]
    fn zero_intensity_gives_empty() {
        let fo = FirstOrderSpec::constant(0.0);
        let p = sample_poisson(&fo, &Window::unit(), 1).unwrap();
        assert_eq!(p.n(), 0);
    }

    #[test]
    fn poisson_mean_count() {
        let fo = FirstOrderSpec::constant(100.0);
        let sims = 2000;
        let total: usize = (0..sims).map(|k| sample_poisson(&fo, &Window::unit(), stream_seed(1, k)).unwrap().n()).sum();
        let mean = total as f64 / sims as f64;
        assert!((mean - 100.0).abs() < 3.0 * (100.0f64 / sims as f64).sqrt(), "{mean}");
    }

    #[test]
    fn inhomogeneous_mean_count_matches_grid_integral() {
        let fo = FirstOrderSpec::with_intercept(
            200f64.ln(),
            vec![(Covariate::X, 2.0), (Covariate::Y, 2.0), (Covariate::Monomial { px: 2, py: 0 }, 3.0)],
        );
        let g = PixelGrid::new(Window::unit(), 2048, 2048).unwrap();
        let integral: f64 = g.centres().iter().map(|u| fo.intensity(u)).sum::<f64>() * g.pixel_area();
        let sims = 400;
        let counts: Vec<f64> = (0..sims)
            .map(|k| sample_poisson(&fo, &Window::unit(), stream_seed(2, k)).unwrap().n() as f64)
            .collect();
        let mean = counts.iter().sum::<f64>() / sims as f64;
        let se = (integral / sims as f64).sqrt();
        assert!((mean - integral).abs() < 3.0 * se, "{mean} vs {integral}");
    }

    #[test]
    fn deterministic_given_seed() {
        let m = ModelSpec::new(
            FirstOrderSpec::constant(100.0),
            InteractionSpec::from_gamma(InteractionKind::Strauss { r: 0.05 }, 0.5),
        )
        .unwrap();
        let cfg = McmcConfig { n_steps: 5000, birth_prob: 0.5, seed: 99 };
        let a = sample_gibbs(&m, &Window::unit(), &cfg).unwrap();
        let b = sample_gibbs(&m, &Window::unit(), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn hard_core_has_no_close_pairs() {
        let r = 0.05;
        let m = ModelSpec::new(
            FirstOrderSpec::constant(150.0),
            InteractionSpec::new(InteractionKind::Strauss { r }, f64::NEG_INFINITY),
        )
        .unwrap();
        for seed in 0..5 {
            let cfg = McmcConfig { n_steps: 20_000, birth_prob: 0.5, seed };
            let p = sample_gibbs(&m, &Window::unit(), &cfg).unwrap();
            let g = PixelGrid::new(Window::unit(), 8, 8).unwrap();
            assert_eq!(potential(&InteractionKind::Strauss { r }, p.points(), &g), 0.0);
        }
    }

    #[test]
    fn refuses_attractive_strauss() {
        let m = ModelSpec::new(
            FirstOrderSpec::constant(100.0),
            InteractionSpec::new(InteractionKind::Strauss { r: 0.05 }, 0.2),
        )
        .unwrap();
        assert!(matches!(
            sample_gibbs(&m, &Window::unit(), &McmcConfig::default()),
            Err(Error::NotSimulable(_))
        ));
    }

    #[test]
    fn caches_stay_consistent() {
        // after many moves the incremental caches equal a fresh rebuild
        let w = Window::unit();
        for kind in [InteractionKind::GeyerSat { r: 0.07, s: 2.5 }, InteractionKind::AreaInteraction { r: 0.05 }] {
            let m = ModelSpec::new(FirstOrderSpec::constant(80.0), InteractionSpec::new(kind, 0.3))
                .unwrap()
                .with_pixel_resolution(64);
            let mut rng = rng_from_seed(5);
            let start = sample_poisson_points(&m.first_order, &w, &mut rng).unwrap();
            let mut chain = BirthDeathChain::new(&m, SiteSpace::Continuous(w), 0.5, start).unwrap();
            for _ in 0..3000 {
                chain.step(&mut rng);
            }
            let fresh = BirthDeathChain::new(&m, SiteSpace::Continuous(w), 0.5, chain.points().to_vec()).unwrap();
            assert_eq!(chain.counts, fresh.counts);
            assert_eq!(chain.cover, fresh.cover);
            for (i, u) in chain.points().iter().enumerate() {
                assert_eq!(chain.delta(u, Some(i)), fresh.delta(u, Some(i)));
            }
        }
    }
}
