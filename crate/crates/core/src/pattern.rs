//! Point patterns, nearest-neighbour distances, pair counts and border splits.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::geom::{Point, SpatialIndex, Window};

/// A finite simple point pattern in a rectangular window.
#[derive(Debug)]
pub struct PointPattern {
    points: Vec<Point>,
    window: Window,
    index: OnceLock<SpatialIndex>,
}

impl Clone for PointPattern {
    fn clone(&self) -> Self {
        PointPattern { points: self.points.clone(), window: self.window, index: OnceLock::new() }
    }
}

impl PartialEq for PointPattern {
    fn eq(&self, other: &Self) -> bool {
        self.window == other.window && self.points == other.points
    }
}

impl PointPattern {
    /// Validates that every point is inside `window` and that no point repeats.
    pub fn new(points: Vec<Point>, window: Window) -> Result<Self> {
        window.validate()?;
        for p in &points {
            if !p.x.is_finite() || !p.y.is_finite() || !window.contains(p) {
                return Err(Error::PointOutsideWindow { x: p.x, y: p.y });
            }
        }
        let mut sorted: Vec<(f64, f64)> = points.iter().map(|p| (p.x, p.y)).collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        for w in sorted.windows(2) {
            if w[0] == w[1] {
                return Err(Error::DuplicatePoint { x: w[0].0, y: w[0].1 });
            }
        }
        Ok(PointPattern { points, window, index: OnceLock::new() })
    }

    pub fn empty(window: Window) -> Self {
        PointPattern { points: Vec::new(), window, index: OnceLock::new() }
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn intensity(&self) -> f64 {
        self.n() as f64 / self.window.area()
    }

    /// Lazily built bucket index, cell side about one mean spacing.
    pub fn index(&self) -> &SpatialIndex {
        self.index.get_or_init(|| {
            let n = self.n().max(1) as f64;
            SpatialIndex::new(&self.points, (self.window.area() / n).sqrt())
        })
    }

    /// Pattern with point `i` removed.
    pub fn without(&self, i: usize) -> PointPattern {
        let mut pts = self.points.clone();
        pts.remove(i);
        PointPattern { points: pts, window: self.window, index: OnceLock::new() }
    }

    /// Pattern with `u` added; `u` must be inside the window and new.
    pub fn with_point(&self, u: Point) -> Result<PointPattern> {
        if !self.window.contains(&u) {
            return Err(Error::PointOutsideWindow { x: u.x, y: u.y });
        }
        if self.points.iter().any(|p| *p == u) {
            return Err(Error::DuplicatePoint { x: u.x, y: u.y });
        }
        let mut pts = self.points.clone();
        pts.push(u);
        Ok(PointPattern { points: pts, window: self.window, index: OnceLock::new() })
    }

    /// Subpattern formed by the given indices, in a new window.
    pub fn subset(&self, idx: &[usize], window: Window) -> PointPattern {
        let pts = idx.iter().map(|&i| self.points[i]).collect();
        PointPattern { points: pts, window, index: OnceLock::new() }
    }
}

/// Distance from `x_i` to its nearest neighbour in `x_{-i}`.
pub fn nn_distance(p: &PointPattern, i: usize) -> Result<f64> {
    if p.n() < 2 {
        return Err(Error::TooFewPoints("nearest neighbor undefined".into()));
    }
    if i >= p.n() {
        return Err(Error::InvalidParameter(format!("index {i} out of range")));
    }
    Ok(p.index().nearest_two(&p.points()[i], Some(i), f64::INFINITY).d1)
}

pub fn nn_distances(p: &PointPattern) -> Result<Vec<f64>> {
    (0..p.n()).map(|i| nn_distance(p, i)).collect()
}

/// `t(u, x, r)`: number of pattern points within `r` of `u`, skipping `exclude`.
pub fn close_pair_count(p: &PointPattern, u: &Point, r: f64, exclude: Option<usize>) -> usize {
    let mut c = 0;
    p.index().for_each_within(u, r, |j, _| {
        if Some(j) != exclude {
            c += 1;
        }
    });
    c
}

/// Partition of a pattern into points in `W ⊖ R` (free) and the rest (fixed).
#[derive(Clone, Debug, PartialEq)]
pub struct BorderSplit {
    pub range: f64,
    pub free_window: Window,
    pub free_points: Vec<usize>,
    pub fixed_points: Vec<usize>,
}

impl BorderSplit {
    pub fn is_free(&self, i: usize) -> bool {
        self.free_points.binary_search(&i).is_ok()
    }
}

pub fn split_border(p: &PointPattern, range: f64) -> Result<BorderSplit> {
    if !(range >= 0.0) {
        return Err(Error::InvalidParameter(format!("border range {range}")));
    }
    let free_window = p.window().erode(range).ok_or(Error::EmptyErosion(range))?;
    let (mut free_points, mut fixed_points) = (Vec::new(), Vec::new());
    for (i, q) in p.points().iter().enumerate() {
        if free_window.contains(q) {
            free_points.push(i);
        } else {
            fixed_points.push(i);
        }
    }
    Ok(BorderSplit { range, free_window, free_points, fixed_points })
}
