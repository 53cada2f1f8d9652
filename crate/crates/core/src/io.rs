//! Text formats: pattern CSV with a JSON sidecar, function-table CSV and
//! ESRI ASCII rasters.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! write, read, write cycle reproduces the file byte for byte.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{PixelGrid, Point, Window};
use crate::models::{ModelSpec, Raster};
use crate::pattern::PointPattern;
use crate::summaries::FunctionTable;

/// Sidecar metadata stored next to a pattern CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternMeta {
    pub window: Window,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub model: Option<ModelSpec>,
}

impl PatternMeta {
    pub fn new(window: Window) -> Self {
        PatternMeta { window, seed: None, model: None }
    }
}

/// `points.csv` → `points.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

fn parse_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Parse(format!("line {line}: {msg}"))
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|e| parse_err(line, format!("{e} in {s:?}")))
}

pub fn write_pattern_csv<W: Write>(mut out: W, p: &PointPattern) -> Result<()> {
    writeln!(out, "x,y")?;
    for u in p.points() {
        writeln!(out, "{},{}", u.x, u.y)?;
    }
    Ok(())
}

/// Reads `x,y` rows (header required, blank lines skipped).
pub fn read_points_csv<R: BufRead>(input: R) -> Result<Vec<Point>> {
    let mut lines = input.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, l)) => {
                let l = l?;
                if !l.trim().is_empty() {
                    break l;
                }
            }
            None => return Err(Error::Parse("empty pattern file".into())),
        }
    };
    let cols: Vec<&str> = header.trim().split(',').map(str::trim).collect();
    if cols != ["x", "y"] {
        return Err(Error::Parse(format!("expected header x,y, found {:?}", header.trim())));
    }
    let mut pts = Vec::new();
    for (k, l) in lines {
        let l = l?;
        let l = l.trim();
        if l.is_empty() {
            continue;
        }
        let mut f = l.split(',');
        let (Some(x), Some(y), None) = (f.next(), f.next(), f.next()) else {
            return Err(parse_err(k + 1, "expected two fields"));
        };
        pts.push(Point::new(parse_f64(x, k + 1)?, parse_f64(y, k + 1)?));
    }
    Ok(pts)
}

pub fn read_pattern_csv<R: BufRead>(input: R, window: Window) -> Result<PointPattern> {
    PointPattern::new(read_points_csv(input)?, window)
}

/// Writes `path` and its sidecar JSON.
pub fn save_pattern(path: &Path, p: &PointPattern, meta: &PatternMeta) -> Result<()> {
    if meta.window != *p.window() {
        return Err(Error::InvalidParameter("sidecar window differs from the pattern window".into()));
    }
    let mut f = BufWriter::new(fs::File::create(path)?);
    write_pattern_csv(&mut f, p)?;
    f.flush()?;
    let mut js = serde_json::to_string_pretty(meta)?;
    js.push('\n');
    fs::write(sidecar_path(path), js)?;
    Ok(())
}

/// Reads a pattern CSV, taking the window from `window` if given and from
/// the sidecar JSON otherwise.
pub fn load_pattern(path: &Path, window: Option<Window>) -> Result<(PointPattern, PatternMeta)> {
    let meta = match window {
        Some(w) => PatternMeta::new(w),
        None => {
            let side = sidecar_path(path);
            let text = fs::read_to_string(&side).map_err(|e| {
                Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", side.display())))
            })?;
            serde_json::from_str(&text)?
        }
    };
    let f = BufReader::new(fs::File::open(path)?);
    let p = read_pattern_csv(f, meta.window)?;
    Ok((p, meta))
}

fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

/// `r,<columns>`; NaN becomes an empty field.
pub fn write_table_csv<W: Write>(mut out: W, t: &FunctionTable) -> Result<()> {
    write!(out, "r")?;
    for (name, _) in &t.columns {
        if name.contains(',') || name.contains('\n') {
            return Err(Error::InvalidParameter(format!("column name {name:?}")));
        }
        write!(out, ",{name}")?;
    }
    writeln!(out)?;
    let mut line = String::new();
    for k in 0..t.r.len() {
        line.clear();
        line.push_str(&fmt_value(t.r[k]));
        for (_, c) in &t.columns {
            line.push(',');
            line.push_str(&fmt_value(c[k]));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_table_csv<R: BufRead>(input: R) -> Result<FunctionTable> {
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty table".into()))??;
    let names: Vec<String> = header.trim().split(',').map(|s| s.trim().to_string()).collect();
    if names.first().map(String::as_str) != Some("r") {
        return Err(Error::Parse("table header must start with r".into()));
    }
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for (k, l) in lines.enumerate() {
        let l = l?;
        if l.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = l.split(',').collect();
        if fields.len() != names.len() {
            return Err(parse_err(k + 2, format!("expected {} fields", names.len())));
        }
        for (c, f) in cols.iter_mut().zip(fields) {
            c.push(if f.trim().is_empty() { f64::NAN } else { parse_f64(f, k + 2)? });
        }
    }
    let mut it = names.into_iter().zip(cols);
    let (_, r) = it.next().expect("header has r");
    let mut t = FunctionTable::with_r(r);
    for (n, c) in it {
        t.push(n, c)?;
    }
    Ok(t)
}

pub fn save_table(path: &Path, t: &FunctionTable) -> Result<()> {
    let mut f = BufWriter::new(fs::File::create(path)?);
    write_table_csv(&mut f, t)?;
    f.flush()?;
    Ok(())
}

pub const NODATA: f64 = -9999.0;

/// ESRI ASCII grid. `values` are row-major with row 0 at `y_min`; the file
/// lists rows from the top (`y_max`) down, as the format requires. NaN is
/// written as the NODATA value. Non-square pixels are written with `dx`/`dy`
/// header lines in place of `cellsize`.
pub fn write_esri_ascii<W: Write>(mut out: W, grid: &PixelGrid, values: &[f64]) -> Result<()> {
    if values.len() != grid.len() {
        return Err(Error::InvalidParameter(format!("{} values for a {}x{} grid", values.len(), grid.nx, grid.ny)));
    }
    let (dx, dy) = (grid.dx(), grid.dy());
    writeln!(out, "ncols {}", grid.nx)?;
    writeln!(out, "nrows {}", grid.ny)?;
    writeln!(out, "xllcorner {}", grid.window.x_min)?;
    writeln!(out, "yllcorner {}", grid.window.y_min)?;
    if (dx - dy).abs() <= 1e-12 * dx.max(dy) {
        writeln!(out, "cellsize {dx}")?;
    } else {
        writeln!(out, "dx {dx}")?;
        writeln!(out, "dy {dy}")?;
    }
    writeln!(out, "NODATA_value {NODATA}")?;
    let mut line = String::new();
    for j in (0..grid.ny).rev() {
        line.clear();
        for i in 0..grid.nx {
            if i > 0 {
                line.push(' ');
            }
            let v = values[j * grid.nx + i];
            line.push_str(&if v.is_nan() { NODATA.to_string() } else { v.to_string() });
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn save_esri_ascii(path: &Path, grid: &PixelGrid, values: &[f64]) -> Result<()> {
    let mut f = BufWriter::new(fs::File::create(path)?);
    write_esri_ascii(&mut f, grid, values)?;
    f.flush()?;
    Ok(())
}

/// Reads an ESRI ASCII grid as a raster covariate. NODATA cells are rejected
/// because covariates must be defined everywhere in the window.
pub fn read_esri_ascii<R: BufRead>(input: R) -> Result<Raster> {
    let mut text = String::new();
    let mut input = input;
    input.read_to_string(&mut text)?;
    let mut tokens = text.split_whitespace().peekable();
    let mut header = std::collections::BTreeMap::new();
    while let Some(t) = tokens.peek() {
        if t.chars().next().is_some_and(|c| c.is_ascii_alphabetic()) {
            let key = tokens.next().unwrap().to_ascii_lowercase();
            let val = tokens.next().ok_or_else(|| Error::Parse(format!("missing value for {key}")))?;
            let v = val.parse::<f64>().map_err(|e| Error::Parse(format!("{key}: {e}")))?;
            header.insert(key, v);
        } else {
            break;
        }
    }
    let get = |k: &str| header.get(k).copied().ok_or_else(|| Error::Parse(format!("missing {k}")));
    let nx = get("ncols")? as usize;
    let ny = get("nrows")? as usize;
    let (dx, dy) = match header.get("cellsize") {
        Some(&c) => (c, c),
        None => (get("dx")?, get("dy")?),
    };
    let (x0, y0) = match (header.get("xllcorner"), header.get("xllcenter")) {
        (Some(&x), _) => (x, get("yllcorner")?),
        (None, Some(&x)) => (x - 0.5 * dx, get("yllcenter")? - 0.5 * dy),
        _ => return Err(Error::Parse("missing xllcorner".into())),
    };
    let nodata = header.get("nodata_value").copied();
    let vals: Vec<f64> = tokens
        .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("raster value {t:?}: {e}"))))
        .collect::<Result<_>>()?;
    if vals.len() != nx * ny {
        return Err(Error::Parse(format!("expected {} raster values, found {}", nx * ny, vals.len())));
    }
    if let Some(nd) = nodata {
        if vals.contains(&nd) {
            return Err(Error::Parse("raster covariate contains NODATA cells".into()));
        }
    }
    let mut values = vec![0.0; nx * ny];
    for (row, chunk) in vals.chunks(nx).enumerate() {
        let j = ny - 1 - row;
        values[j * nx..(j + 1) * nx].copy_from_slice(chunk);
    }
    let w = Window::new(x0, x0 + nx as f64 * dx, y0, y0 + ny as f64 * dy)?;
    Raster::new(w, nx, ny, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::FirstOrderSpec;
    use crate::simulate::sample_poisson;
    use proptest::prelude::*;

    #[test]
    fn pattern_round_trip_is_byte_identical() {
        let p = sample_poisson(&FirstOrderSpec::constant(200.0), &Window::unit(), 9).unwrap();
        let mut a = Vec::new();
        write_pattern_csv(&mut a, &p).unwrap();
        let q = read_pattern_csv(&a[..], Window::unit()).unwrap();
        let mut b = Vec::new();
        write_pattern_csv(&mut b, &q).unwrap();
        assert_eq!(a, b);
        assert_eq!(p.points(), q.points());
    }

    #[test]
    fn empty_pattern_file() {
        let p = PointPattern::empty(Window::unit());
        let mut a = Vec::new();
        write_pattern_csv(&mut a, &p).unwrap();
        assert_eq!(a, b"x,y\n");
        assert_eq!(read_pattern_csv(&a[..], Window::unit()).unwrap().n(), 0);
    }

    #[test]
    fn pattern_parse_errors() {
        assert!(matches!(read_points_csv(&b"a,b\n1,2\n"[..]), Err(Error::Parse(_))));
        assert!(matches!(read_points_csv(&b"x,y\n1\n"[..]), Err(Error::Parse(_))));
        assert!(matches!(read_points_csv(&b"x,y\n1,zz\n"[..]), Err(Error::Parse(_))));
        assert!(matches!(read_pattern_csv(&b"x,y\n2,0.5\n"[..], Window::unit()), Err(Error::PointOutsideWindow { .. })));
    }

    #[test]
    fn save_and_load_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pts.csv");
        let w = Window::new(0.0, 2.0, 0.0, 1.0).unwrap();
        let p = PointPattern::new(vec![Point::new(0.1, 0.2), Point::new(1.5, 0.123456789)], w).unwrap();
        let meta = PatternMeta { window: w, seed: Some(7), model: None };
        save_pattern(&path, &p, &meta).unwrap();
        let (q, m) = load_pattern(&path, None).unwrap();
        assert_eq!(m, meta);
        assert_eq!(q.points(), p.points());
    }

    #[test]
    fn table_nan_as_empty_field() {
        let mut t = FunctionTable::with_r(vec![0.0, 0.5]);
        t.push("a", vec![1.0, f64::NAN]).unwrap();
        t.push("b", vec![f64::NAN, 0.25]).unwrap();
        let mut out = Vec::new();
        write_table_csv(&mut out, &t).unwrap();
        assert_eq!(String::from_utf8(out.clone()).unwrap(), "r,a,b\n0,1,\n0.5,,0.25\n");
        let back = read_table_csv(&out[..]).unwrap();
        assert_eq!(back.r, t.r);
        assert!(back.get("a").unwrap()[1].is_nan());
        assert_eq!(back.get("b").unwrap()[1], 0.25);
    }

    #[test]
    fn esri_layout_and_round_trip() {
        let grid = PixelGrid::new(Window::new(0.0, 3.0, 0.0, 2.0).unwrap(), 3, 2).unwrap();
        let vals = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.5];
        let mut out = Vec::new();
        write_esri_ascii(&mut out, &grid, &vals).unwrap();
        let text = String::from_utf8(out.clone()).unwrap();
        assert_eq!(
            text,
            "ncols 3\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n4 5 6.5\n1 2 3\n"
        );
        let r = read_esri_ascii(&out[..]).unwrap();
        assert_eq!(r.values, vals);
        assert_eq!(r.grid(), grid);
        let rect = PixelGrid::new(Window::unit(), 2, 4).unwrap();
        let mut out = Vec::new();
        write_esri_ascii(&mut out, &rect, &[0.0; 8]).unwrap();
        assert!(String::from_utf8(out.clone()).unwrap().contains("dx 0.5\ndy 0.25\n"));
        assert_eq!(read_esri_ascii(&out[..]).unwrap().grid(), rect);
    }

    proptest! {
        #[test]
        fn float_formatting_round_trips(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            let s = fmt_value(x);
            prop_assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }
}
