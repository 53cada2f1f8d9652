//! Rectangular windows, pixel grids, disc/window intersections and a
//! bucket-grid index for fixed-radius neighbour search.
//!
//! Balls are closed throughout: a point at distance exactly `r` is inside.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    #[inline]
    pub fn dist2(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    #[inline]
    pub fn dist(&self, other: &Point) -> f64 {
        self.dist2(other).sqrt()
    }
}

/// Axis-aligned rectangle `[x_min, x_max] x [y_min, y_max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Window {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Window {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        let w = Window { x_min, x_max, y_min, y_max };
        w.validate()?;
        Ok(w)
    }

    pub fn unit() -> Self {
        Window { x_min: 0.0, x_max: 1.0, y_min: 0.0, y_max: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x_min, self.x_max, self.y_min, self.y_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || !(self.x_min < self.x_max) || !(self.y_min < self.y_max) {
            return Err(Error::InvalidWindow(format!("{self:?}")));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn min_side(&self) -> f64 {
        self.width().min(self.height())
    }

    pub fn diameter(&self) -> f64 {
        self.width().hypot(self.height())
    }

    /// Boundary points count as inside.
    #[inline]
    pub fn contains(&self, p: &Point) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    /// Distance from an interior point to the window boundary.
    #[inline]
    pub fn boundary_distance(&self, p: &Point) -> f64 {
        (p.x - self.x_min)
            .min(self.x_max - p.x)
            .min(p.y - self.y_min)
            .min(self.y_max - p.y)
    }

    /// `W ⊖ r`, or `None` when a side collapses.
    pub fn erode(&self, r: f64) -> Option<Window> {
        let w = Window {
            x_min: self.x_min + r,
            x_max: self.x_max - r,
            y_min: self.y_min + r,
            y_max: self.y_max - r,
        };
        if w.x_min < w.x_max && w.y_min < w.y_max {
            Some(w)
        } else {
            None
        }
    }

    /// Area of `W ⊖ r`, zero when empty.
    pub fn eroded_area(&self, r: f64) -> f64 {
        (self.width() - 2.0 * r).max(0.0) * (self.height() - 2.0 * r).max(0.0)
    }

    /// `|self ∩ (other + (dx, dy))|`.
    pub fn shifted_overlap(&self, other: &Window, dx: f64, dy: f64) -> f64 {
        let lx = (self.x_max.min(other.x_max + dx) - self.x_min.max(other.x_min + dx)).max(0.0);
        let ly = (self.y_max.min(other.y_max + dy) - self.y_min.max(other.y_min + dy)).max(0.0);
        lx * ly
    }

    pub fn centre(&self) -> Point {
        Point::new(0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))
    }
}

/// Regular `nx x ny` pixelation of a window; pixel values are stored row-major
/// with row 0 at `y_min`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PixelGrid {
    pub window: Window,
    pub nx: usize,
    pub ny: usize,
}

impl PixelGrid {
    pub fn new(window: Window, nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidParameter("pixel grid needs nx, ny > 0".into()));
        }
        window.validate()?;
        Ok(PixelGrid { window, nx, ny })
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dx(&self) -> f64 {
        self.window.width() / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.window.height() / self.ny as f64
    }

    pub fn pixel_area(&self) -> f64 {
        self.window.area() / (self.nx * self.ny) as f64
    }

    #[inline]
    pub fn centre(&self, i: usize, j: usize) -> Point {
        Point::new(
            self.window.x_min + (i as f64 + 0.5) * self.dx(),
            self.window.y_min + (j as f64 + 0.5) * self.dy(),
        )
    }

    pub fn centres(&self) -> Vec<Point> {
        let mut out = Vec::with_capacity(self.len());
        for j in 0..self.ny {
            for i in 0..self.nx {
                out.push(self.centre(i, j));
            }
        }
        out
    }

    /// Column range `[lo, hi)` of pixel centres with x in `[a, b]`.
    pub fn col_range(&self, a: f64, b: f64) -> (usize, usize) {
        axis_range(self.window.x_min, self.dx(), self.nx, a, b)
    }

    /// Row range `[lo, hi)` of pixel centres with y in `[a, b]`.
    pub fn row_range(&self, a: f64, b: f64) -> (usize, usize) {
        axis_range(self.window.y_min, self.dy(), self.ny, a, b)
    }

    /// Visit every pixel whose centre lies in the closed disc `B(c, r)`,
    /// passing the flat index and the squared distance to `c`.
    pub fn for_each_in_disc(&self, c: &Point, r: f64, mut f: impl FnMut(usize, f64)) {
        let r2 = r * r;
        let (j0, j1) = self.row_range(c.y - r, c.y + r);
        let (i0, i1) = self.col_range(c.x - r, c.x + r);
        for j in j0..j1 {
            let py = self.window.y_min + (j as f64 + 0.5) * self.dy();
            let dy2 = (py - c.y) * (py - c.y);
            if dy2 > r2 {
                continue;
            }
            for i in i0..i1 {
                let px = self.window.x_min + (i as f64 + 0.5) * self.dx();
                let d2 = (px - c.x) * (px - c.x) + dy2;
                if d2 <= r2 {
                    f(j * self.nx + i, d2);
                }
            }
        }
    }
}

fn axis_range(origin: f64, step: f64, n: usize, a: f64, b: f64) -> (usize, usize) {
    // centre k sits at origin + (k + 0.5) step
    let lo = ((a - origin) / step - 0.5).ceil().max(0.0);
    let hi = ((b - origin) / step - 0.5).floor() + 1.0;
    let lo = (lo as usize).min(n);
    let hi = if hi <= 0.0 { 0 } else { (hi as usize).min(n) };
    (lo, hi.max(lo))
}

/// Antiderivative of `sqrt(r^2 - x^2)`.
fn semicircle_primitive(x: f64, r: f64) -> f64 {
    let x = x.clamp(-r, r);
    let s = (r * r - x * x).max(0.0).sqrt();
    0.5 * (x * s + r * r * (x / r).clamp(-1.0, 1.0).asin())
}

fn semicircle_integral(lo: f64, hi: f64, r: f64) -> f64 {
    if hi <= lo {
        0.0
    } else {
        semicircle_primitive(hi, r) - semicircle_primitive(lo, r)
    }
}

/// Area of `{x^2 + y^2 <= r^2, x <= a, y <= b}`.
fn disc_quadrant_area(a: f64, b: f64, r: f64) -> f64 {
    if a <= -r || b <= -r {
        return 0.0;
    }
    let a = a.min(r);
    if b >= r {
        return 2.0 * semicircle_integral(-r, a, r);
    }
    let c = (r * r - b * b).max(0.0).sqrt();
    let lin = |lo: f64, hi: f64| if hi > lo { b * (hi - lo) } else { 0.0 };
    if b >= 0.0 {
        // chord y = b cuts the upper half for |x| < c
        2.0 * semicircle_integral(-r, a.min(-c), r)
            + semicircle_integral(-c, a.min(c), r)
            + lin(-c, a.min(c))
            + 2.0 * semicircle_integral(c, a, r)
    } else {
        semicircle_integral(-c, a.min(c), r) + lin(-c, a.min(c))
    }
}

/// Exact area of `B(c, r) ∩ W`.
pub fn disc_window_area(c: &Point, r: f64, w: &Window) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    if w.contains(c) && w.boundary_distance(c) >= r {
        return PI * r * r;
    }
    let (x0, x1) = (w.x_min - c.x, w.x_max - c.x);
    let (y0, y1) = (w.y_min - c.y, w.y_max - c.y);
    let a = disc_quadrant_area(x1, y1, r) - disc_quadrant_area(x0, y1, r)
        - disc_quadrant_area(x1, y0, r)
        + disc_quadrant_area(x0, y0, r);
    a.clamp(0.0, (PI * r * r).min(w.area()))
}

/// Fraction of the circle `∂B(c, d)` lying inside `W`.
pub fn circle_window_fraction(c: &Point, d: f64, w: &Window) -> f64 {
    if d <= 0.0 || (w.contains(c) && w.boundary_distance(c) >= d) {
        return 1.0;
    }
    let mut angles = vec![0.0, 2.0 * PI];
    let mut push = |t: f64| {
        let t = t.rem_euclid(2.0 * PI);
        angles.push(t);
    };
    for dx in [w.x_min - c.x, w.x_max - c.x] {
        if dx.abs() < d {
            let t = (dx / d).acos();
            push(t);
            push(-t);
        }
    }
    for dy in [w.y_min - c.y, w.y_max - c.y] {
        if dy.abs() < d {
            let t = (dy / d).asin();
            push(t);
            push(PI - t);
        }
    }
    angles.sort_by(|a, b| a.total_cmp(b));
    let mut inside = 0.0;
    for win in angles.windows(2) {
        let (a, b) = (win[0], win[1]);
        if b - a <= 0.0 {
            continue;
        }
        let m = 0.5 * (a + b);
        let q = Point::new(c.x + d * m.cos(), c.y + d * m.sin());
        if w.contains(&q) {
            inside += b - a;
        }
    }
    inside / (2.0 * PI)
}

const TAU: f64 = 2.0 * PI;

/// Adds the arc of half-width `half` centred at angle `centre`, split at 0.
fn push_arc(out: &mut Vec<(f64, f64)>, centre: f64, half: f64) {
    if half <= 0.0 {
        return;
    }
    if half >= PI {
        out.push((0.0, TAU));
        return;
    }
    let s = (centre - half).rem_euclid(TAU);
    let e = s + 2.0 * half;
    if e <= TAU {
        out.push((s, e));
    } else {
        out.push((s, TAU));
        out.push((0.0, e - TAU));
    }
}

/// Arcs of the circle `(c, ρ)` lying outside `W` (coordinates relative to any origin).
fn push_outside_window(out: &mut Vec<(f64, f64)>, c: &Point, rho: f64, w: &Window) {
    // `cos(θ − centre) > t` is an arc of half-width acos(t); t ≥ 1 is empty, t ≤ −1 everything
    let mut beyond = |centre: f64, t: f64| {
        if t < 1.0 {
            push_arc(out, centre, if t <= -1.0 { PI } else { t.acos() });
        }
    };
    beyond(PI, (c.x - w.x_min) / rho);
    beyond(0.0, (w.x_max - c.x) / rho);
    beyond(1.5 * PI, (c.y - w.y_min) / rho);
    beyond(0.5 * PI, (w.y_max - c.y) / rho);
}

/// Complement in `[0, 2π)` of the union of `arcs`.
fn free_arcs(arcs: &mut [(f64, f64)], out: &mut Vec<(f64, f64)>) {
    out.clear();
    arcs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    let mut pos = 0.0;
    for &(s, e) in arcs.iter() {
        if s > pos {
            out.push((pos, s));
        }
        pos = f64::max(pos, e);
    }
    if pos < TAU {
        out.push((pos, TAU));
    }
}

/// `½∮(x dy − y dx)` along the arc `[s, e]` of the circle `(c, ρ)`, anticlockwise.
fn arc_term(c: &Point, rho: f64, s: f64, e: f64) -> f64 {
    let ((se, ce), (ss, cs)) = (e.sin_cos(), s.sin_cos());
    0.5 * (rho * rho * (e - s) + c.x * rho * (se - ss) - c.y * rho * (ce - cs))
}

/// Parameter interval of the segment `a + t·dir`, `t ∈ [0, len]`, inside `B(c, r)`.
fn chord(a: &Point, dir: (f64, f64), len: f64, c: &Point, r: f64) -> Option<(f64, f64)> {
    let f = (a.x - c.x, a.y - c.y);
    let b = f.0 * dir.0 + f.1 * dir.1;
    let disc = b * b - (f.0 * f.0 + f.1 * f.1 - r * r);
    if disc <= 0.0 {
        return None;
    }
    let h = disc.sqrt();
    let (t0, t1) = ((-b - h).max(0.0), (-b + h).min(len));
    (t1 > t0).then_some((t0, t1))
}

/// A disc centre `u` with neighbouring centres, for evaluating
/// `|B(u, r) ∩ W \ ∪_j B(c_j, r)|` at several radii. Directions and distances
/// are computed once; each radius only needs the arc half-widths.
#[derive(Clone, Debug)]
pub struct DiscCluster {
    /// Window relative to `u`.
    w: Window,
    /// Neighbours relative to `u`, by increasing distance.
    rel: Vec<Point>,
    dist: Vec<f64>,
    ang: Vec<f64>,
    /// Row-major distances and directions between neighbours.
    pair_d: Vec<f64>,
    pair_ang: Vec<f64>,
    /// Per-radius scratch: arc half-widths `acos(d / 2r)`.
    half: Vec<f64>,
    forbidden: Vec<(f64, f64)>,
    allowed: Vec<(f64, f64)>,
    cuts: Vec<(f64, f64)>,
}

impl DiscCluster {
    pub fn new(u: &Point, others: &[Point], w: &Window) -> Self {
        let mut rel: Vec<(f64, Point)> = others
            .iter()
            .map(|c| {
                let v = Point::new(c.x - u.x, c.y - u.y);
                (v.x.hypot(v.y), v)
            })
            .collect();
        rel.sort_by(|a, b| a.0.total_cmp(&b.0));
        let k = rel.len();
        let mut pair_d = vec![0.0; k * k];
        let mut pair_ang = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                if i != j {
                    let (a, b) = (rel[i].1, rel[j].1);
                    pair_d[i * k + j] = a.dist(&b);
                    pair_ang[i * k + j] = (b.y - a.y).atan2(b.x - a.x);
                }
            }
        }
        DiscCluster {
            w: Window { x_min: w.x_min - u.x, x_max: w.x_max - u.x, y_min: w.y_min - u.y, y_max: w.y_max - u.y },
            dist: rel.iter().map(|p| p.0).collect(),
            ang: rel.iter().map(|p| p.1.y.atan2(p.1.x)).collect(),
            rel: rel.into_iter().map(|p| p.1).collect(),
            pair_d,
            pair_ang,
            half: vec![0.0; k * k],
            forbidden: Vec::with_capacity(k + 8),
            allowed: Vec::new(),
            cuts: Vec::new(),
        }
    }

    /// Uncovered area of `B(u, r)`; neighbours `2r` or further away are ignored.
    pub fn uncovered_area(&mut self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        let k = self.rel.len();
        let m = self.dist.partition_point(|&d| d < 2.0 * r);
        let w = self.w;
        let o = Point::new(0.0, 0.0);
        if m == 0 {
            return disc_window_area(&o, r, &w);
        }
        if self.dist[0] == 0.0 {
            return 0.0;
        }
        let mut area = 0.0;
        for j in 0..m {
            for q in j + 1..m {
                let dq = self.pair_d[j * k + q];
                if dq > 0.0 && dq < 2.0 * r {
                    let h = (dq / (2.0 * r)).acos();
                    self.half[j * k + q] = h;
                    self.half[q * k + j] = h;
                }
            }
            // the diagonal holds the half-width towards u
            self.half[j * k + j] = (self.dist[j] / (2.0 * r)).acos();
        }

        // boundary of B(u, r): outside W or inside another disc is excluded
        self.forbidden.clear();
        push_outside_window(&mut self.forbidden, &o, r, &w);
        for j in 0..m {
            push_arc(&mut self.forbidden, self.ang[j], self.half[j * k + j]);
        }
        free_arcs(&mut self.forbidden, &mut self.allowed);
        for &(s, e) in &self.allowed {
            area += arc_term(&o, r, s, e);
        }

        // boundaries of the other discs, inside B(u, r), traversed clockwise
        for j in 0..m {
            let c = self.rel[j];
            self.forbidden.clear();
            push_outside_window(&mut self.forbidden, &c, r, &w);
            push_arc(&mut self.forbidden, self.ang[j], PI - self.half[j * k + j]);
            for q in 0..m {
                if q == j {
                    continue;
                }
                let dq = self.pair_d[j * k + q];
                if dq == 0.0 {
                    // coincident discs: keep the boundary once
                    if q < j {
                        push_arc(&mut self.forbidden, 0.0, PI);
                    }
                } else if dq < 2.0 * r {
                    push_arc(&mut self.forbidden, self.pair_ang[j * k + q], self.half[j * k + q]);
                }
            }
            free_arcs(&mut self.forbidden, &mut self.allowed);
            for &(s, e) in &self.allowed {
                area -= arc_term(&c, r, s, e);
            }
        }

        // window edges inside B(u, r) and outside the other discs, anticlockwise
        let corners = [
            Point::new(w.x_min, w.y_min),
            Point::new(w.x_max, w.y_min),
            Point::new(w.x_max, w.y_max),
            Point::new(w.x_min, w.y_max),
        ];
        for e in 0..4 {
            let (a, b) = (corners[e], corners[(e + 1) % 4]);
            let len = a.dist(&b);
            let dir = ((b.x - a.x) / len, (b.y - a.y) / len);
            let Some((t0, t1)) = chord(&a, dir, len, &o, r) else {
                continue;
            };
            self.cuts.clear();
            self.cuts.extend(self.rel[..m].iter().filter_map(|c| chord(&a, dir, len, c, r)));
            self.cuts.sort_unstable_by(|x, y| x.0.total_cmp(&y.0));
            let mut pos = t0;
            let mut segment = |s: f64, e: f64| {
                let p = Point::new(a.x + s * dir.0, a.y + s * dir.1);
                let q = Point::new(a.x + e * dir.0, a.y + e * dir.1);
                area += 0.5 * (p.x * q.y - p.y * q.x);
            };
            for &(s, e) in &self.cuts {
                if s > pos {
                    segment(pos, s.min(t1));
                }
                pos = pos.max(e);
                if pos >= t1 {
                    break;
                }
            }
            if pos < t1 {
                segment(pos, t1);
            }
        }
        area.max(0.0)
    }
}

/// Exact `|B(u, r) ∩ W \ ∪_j B(c_j, r)|` by Green's theorem over the region's
/// boundary: arcs of `∂B(u, r)`, arcs of each `∂B(c_j, r)` and window edges.
pub fn uncovered_disc_area(u: &Point, r: f64, others: &[Point], w: &Window) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    let near: Vec<Point> = others.iter().filter(|c| c.dist2(u) < 4.0 * r * r).copied().collect();
    if near.is_empty() {
        return disc_window_area(u, r, w);
    }
    DiscCluster::new(u, &near, w).uncovered_area(r)
}

/// Exact `|W ∩ ∪ B(x_i, r)|`, adding each disc's part not covered by earlier ones.
pub fn union_discs_area_exact(pts: &[Point], r: f64, w: &Window) -> f64 {
    if r <= 0.0 || pts.is_empty() {
        return 0.0;
    }
    let idx = SpatialIndex::new(pts, 2.0 * r);
    let mut earlier = Vec::new();
    let mut total = 0.0;
    for (i, u) in pts.iter().enumerate() {
        earlier.clear();
        idx.for_each_within(u, 2.0 * r, |j, _| {
            if j < i {
                earlier.push(pts[j]);
            }
        });
        total += uncovered_disc_area(u, r, &earlier, w);
    }
    total
}

/// Pixel approximation of `|W ∩ ∪ B(x_i, r)|`.
pub fn union_discs_area(pts: &[Point], r: f64, grid: &PixelGrid) -> f64 {
    let cov = coverage_count_field(pts, r, grid);
    cov.iter().filter(|&&c| c > 0).count() as f64 * grid.pixel_area()
}

/// Per-pixel count of points within distance `r` of the pixel centre.
pub fn coverage_count_field(pts: &[Point], r: f64, grid: &PixelGrid) -> Vec<u32> {
    let mut field = vec![0u32; grid.len()];
    if r < 0.0 {
        return field;
    }
    for p in pts {
        grid.for_each_in_disc(p, r, |k, _| field[k] += 1);
    }
    field
}

/// Indices of `pts` within closed distance `r` of `u`, in increasing order.
pub fn neighbors_within(pts: &[Point], u: &Point, r: f64) -> Vec<usize> {
    if pts.len() < 32 {
        let r2 = r * r;
        return (0..pts.len()).filter(|&i| pts[i].dist2(u) <= r2).collect();
    }
    let idx = SpatialIndex::new(pts, r.max(1e-12));
    let mut out = Vec::new();
    idx.for_each_within(u, r, |j, _| out.push(j));
    out.sort_unstable();
    out
}

/// Static uniform bucket grid over a point set.
#[derive(Clone, Debug)]
pub struct SpatialIndex {
    pts: Vec<Point>,
    x0: f64,
    y0: f64,
    cell: f64,
    nx: usize,
    ny: usize,
    start: Vec<usize>,
    items: Vec<usize>,
}

impl SpatialIndex {
    /// Builds an index with cell side close to `cell_hint`; the cell is
    /// enlarged when the grid would hold far more cells than points.
    pub fn new(pts: &[Point], cell_hint: f64) -> Self {
        let (mut x0, mut x1, mut y0, mut y1) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        if let Some(p) = pts.first() {
            (x0, x1, y0, y1) = (p.x, p.x, p.y, p.y);
            for q in pts {
                x0 = x0.min(q.x);
                x1 = x1.max(q.x);
                y0 = y0.min(q.y);
                y1 = y1.max(q.y);
            }
        }
        let span = (x1 - x0).max(y1 - y0).max(1e-12);
        let mut cell = if cell_hint.is_finite() && cell_hint > 0.0 { cell_hint } else { span };
        let max_cells = 4 * pts.len() + 16;
        loop {
            let nx = ((x1 - x0) / cell).floor() as usize + 1;
            let ny = ((y1 - y0) / cell).floor() as usize + 1;
            if nx.saturating_mul(ny) <= max_cells {
                break;
            }
            cell *= 1.5;
        }
        let nx = ((x1 - x0) / cell).floor() as usize + 1;
        let ny = ((y1 - y0) / cell).floor() as usize + 1;
        let mut counts = vec![0usize; nx * ny + 1];
        let cell_of = |p: &Point| -> usize {
            let i = (((p.x - x0) / cell) as usize).min(nx - 1);
            let j = (((p.y - y0) / cell) as usize).min(ny - 1);
            j * nx + i
        };
        for p in pts {
            counts[cell_of(p) + 1] += 1;
        }
        for k in 1..counts.len() {
            counts[k] += counts[k - 1];
        }
        let start = counts.clone();
        let mut fill = counts;
        let mut items = vec![0usize; pts.len()];
        for (idx, p) in pts.iter().enumerate() {
            let c = cell_of(p);
            items[fill[c]] = idx;
            fill[c] += 1;
        }
        SpatialIndex { pts: pts.to_vec(), x0, y0, cell, nx, ny, start, items }
    }

    pub fn points(&self) -> &[Point] {
        &self.pts
    }

    fn cell_coords(&self, u: &Point) -> (isize, isize) {
        (
            ((u.x - self.x0) / self.cell).floor() as isize,
            ((u.y - self.y0) / self.cell).floor() as isize,
        )
    }

    /// Calls `f(j, d2)` for every point `j` with `|u - x_j| <= r`.
    pub fn for_each_within(&self, u: &Point, r: f64, mut f: impl FnMut(usize, f64)) {
        if self.pts.is_empty() || r < 0.0 {
            return;
        }
        let r2 = r * r;
        let i0 = (((u.x - r - self.x0) / self.cell).floor() as isize).max(0);
        let i1 = (((u.x + r - self.x0) / self.cell).floor() as isize).min(self.nx as isize - 1);
        let j0 = (((u.y - r - self.y0) / self.cell).floor() as isize).max(0);
        let j1 = (((u.y + r - self.y0) / self.cell).floor() as isize).min(self.ny as isize - 1);
        if i0 > i1 || j0 > j1 {
            return;
        }
        for j in j0..=j1 {
            for i in i0..=i1 {
                let c = j as usize * self.nx + i as usize;
                for &k in &self.items[self.start[c]..self.start[c + 1]] {
                    let d2 = self.pts[k].dist2(u);
                    if d2 <= r2 {
                        f(k, d2);
                    }
                }
            }
        }
    }

    /// The two nearest points to `u`, skipping `exclude`, searching no further
    /// than `max_r`. Missing neighbours are reported with infinite distance.
    pub fn nearest_two(&self, u: &Point, exclude: Option<usize>, max_r: f64) -> NearestTwo {
        let mut best = NearestTwo::default();
        if self.pts.is_empty() {
            return best;
        }
        let (ci, cj) = self.cell_coords(u);
        let ci = ci.clamp(0, self.nx as isize - 1);
        let cj = cj.clamp(0, self.ny as isize - 1);
        // distance from u to the nearest edge of its (clamped) cell block
        let off_x = (u.x - (self.x0 + ci as f64 * self.cell))
            .min(self.x0 + (ci + 1) as f64 * self.cell - u.x);
        let off_y = (u.y - (self.y0 + cj as f64 * self.cell))
            .min(self.y0 + (cj + 1) as f64 * self.cell - u.y);
        let slack = off_x.min(off_y).max(0.0);
        let max_ring = self.nx.max(self.ny) as isize;
        for ring in 0..=max_ring {
            for j in (cj - ring)..=(cj + ring) {
                if j < 0 || j >= self.ny as isize {
                    continue;
                }
                let on_edge_row = j == cj - ring || j == cj + ring;
                let mut i = ci - ring;
                while i <= ci + ring {
                    if i >= 0 && i < self.nx as isize {
                        let c = j as usize * self.nx + i as usize;
                        for &k in &self.items[self.start[c]..self.start[c + 1]] {
                            if Some(k) == exclude {
                                continue;
                            }
                            best.offer(k, self.pts[k].dist(u));
                        }
                    }
                    if on_edge_row || ring == 0 {
                        i += 1;
                    } else {
                        i += 2 * ring;
                    }
                }
            }
            // anything not yet visited is at least this far away
            let reach = ring as f64 * self.cell + slack;
            if best.d2 <= reach || reach > max_r {
                break;
            }
        }
        if best.d1 > max_r {
            best = NearestTwo::default();
        } else if best.d2 > max_r {
            best.d2 = f64::INFINITY;
            best.i2 = None;
        }
        best
    }
}

/// Result of a two-nearest-neighbour query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NearestTwo {
    pub d1: f64,
    pub i1: Option<usize>,
    pub d2: f64,
    pub i2: Option<usize>,
}

impl Default for NearestTwo {
    fn default() -> Self {
        NearestTwo { d1: f64::INFINITY, i1: None, d2: f64::INFINITY, i2: None }
    }
}

impl NearestTwo {
    fn offer(&mut self, k: usize, d: f64) {
        if d < self.d1 || (d == self.d1 && Some(k) < self.i1) {
            self.d2 = self.d1;
            self.i2 = self.i1;
            self.d1 = d;
            self.i1 = Some(k);
        } else if d < self.d2 {
            self.d2 = d;
            self.i2 = Some(k);
        }
    }
}

/// Area of the intersection of two discs of radius `r` whose centres are `d` apart.
pub fn lens_area(d: f64, r: f64) -> f64 {
    if d >= 2.0 * r {
        return 0.0;
    }
    2.0 * r * r * (d / (2.0 * r)).acos() - 0.5 * d * (4.0 * r * r - d * d).max(0.0).sqrt()
}
