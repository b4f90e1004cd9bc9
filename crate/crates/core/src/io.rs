//! File formats shared by the command-line subcommands.
//!
//! A [`FieldSeries`] is stored as a CSV table whose header row is `t\x`
//! followed by the grid coordinates, and whose data rows are
//! `t, u(x_0, t), ..., u(x_N, t)`. A JSON sidecar with the same stem carries
//! the grid and time-step metadata. Numbers are written with Rust's shortest
//! round-trip formatting, so a write/read cycle is lossless.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FieldSeries, Grid1D, X_MAX, X_MIN};

pub const FIELD_HEADER: &str = "t\\x";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldMeta {
    pub n_points: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub spacing: f64,
    pub n_times: usize,
    pub dt: f64,
    pub t_end: f64,
}

impl FieldMeta {
    pub fn of(field: &FieldSeries) -> Self {
        Self {
            n_points: field.n_points(),
            x_min: X_MIN,
            x_max: X_MAX,
            spacing: field.grid().spacing(),
            n_times: field.n_times(),
            dt: field.dt(),
            t_end: field.t_end(),
        }
    }
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

pub fn field_to_csv(field: &FieldSeries) -> String {
    let mut s = String::with_capacity(field.data().len() * 20);
    s.push_str(FIELD_HEADER);
    for x in field.grid().points() {
        let _ = write!(s, ",{x}");
    }
    s.push('\n');
    for (n, row) in field.rows().enumerate() {
        let _ = write!(s, "{}", field.time(n));
        for v in row {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

pub fn field_from_csv(text: &str, dt_hint: Option<f64>) -> Result<FieldSeries> {
    let what = "field CSV";
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::parse(what, "empty file"))?;
    let mut cols = header.split(',');
    if cols.next().map(str::trim) != Some(FIELD_HEADER) {
        return Err(Error::parse(what, format!("header must start with `{FIELD_HEADER}`")));
    }
    let n_points = cols.count();
    let grid = Grid1D::new(n_points)?;
    let mut times = Vec::new();
    let mut data = Vec::new();
    for (k, line) in lines.enumerate() {
        let mut fields = line.split(',').map(|s| s.trim().parse::<f64>());
        let t = fields
            .next()
            .ok_or_else(|| Error::parse(what, format!("row {k} is empty")))?
            .map_err(|e| Error::parse(what, format!("row {k}: {e}")))?;
        times.push(t);
        let before = data.len();
        for v in fields {
            data.push(v.map_err(|e| Error::parse(what, format!("row {k}: {e}")))?);
        }
        if data.len() - before != n_points {
            return Err(Error::parse(
                what,
                format!("row {k} has {} values, expected {n_points}", data.len() - before),
            ));
        }
    }
    let dt = match dt_hint {
        Some(dt) => dt,
        None if times.len() >= 2 => times[1] - times[0],
        None => 1.0,
    };
    FieldSeries::new(grid, dt, times.len(), data)
}

/// Writes the CSV table and its JSON sidecar.
pub fn write_field(path: &Path, field: &FieldSeries) -> Result<()> {
    write_text(path, &field_to_csv(field))?;
    write_json(&sidecar_path(path), &FieldMeta::of(field))
}

/// Reads a field; the time step comes from the sidecar when it exists.
pub fn read_field(path: &Path) -> Result<FieldSeries> {
    let text = read_text(path)?;
    let side = sidecar_path(path);
    let meta: Option<FieldMeta> = if side.exists() { Some(read_json(&side)?) } else { None };
    let field = field_from_csv(&text, meta.as_ref().map(|m| m.dt))?;
    if let Some(m) = meta {
        if m.n_points != field.n_points() || m.n_times != field.n_times() {
            return Err(Error::parse(
                "field sidecar",
                format!("{} disagrees with the CSV shape", side.display()),
            ));
        }
    }
    Ok(field)
}

/// Two-column `x,u` table for spatial profiles.
pub fn profile_to_csv(grid: &Grid1D, profile: &[f64]) -> String {
    let mut s = String::from("x,u\n");
    for (i, v) in profile.iter().enumerate() {
        let _ = writeln!(s, "{},{v}", grid.x(i));
    }
    s
}

pub fn profile_from_csv(text: &str) -> Result<Vec<f64>> {
    let what = "profile CSV";
    let mut out = Vec::new();
    for (k, line) in text.lines().skip(1).filter(|l| !l.trim().is_empty()).enumerate() {
        let v = line
            .split(',')
            .nth(1)
            .ok_or_else(|| Error::parse(what, format!("row {k} has no value column")))?;
        out.push(
            v.trim()
                .parse()
                .map_err(|e| Error::parse(what, format!("row {k}: {e}")))?,
        );
    }
    Ok(out)
}

/// Long-format `x,t,u` table (one row per space-time sample).
pub fn field_to_long_csv(field: &FieldSeries) -> String {
    let mut s = String::from("x,t,u\n");
    let xs = field.grid().points();
    for (n, row) in field.rows().enumerate() {
        let t = field.time(n);
        for (x, v) in xs.iter().zip(row) {
            let _ = writeln!(s, "{x},{t},{v}");
        }
    }
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
        _ => Error::io(path, e),
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::parse("JSON", e))?;
    write_text(path, &(text + "\n"))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| Error::parse(format!("JSON {}", path.display()), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn field_csv_round_trip_is_lossless(
            n_points in 3usize..12,
            n_times in 1usize..6,
            seed in any::<u64>(),
            dt in 1e-4f64..1.0,
        ) {
            let grid = Grid1D::new(n_points).unwrap();
            let mut rng = crate::rng::seeded(seed);
            let data: Vec<f64> = (0..n_points * n_times)
                .map(|_| crate::rng::standard_normal(&mut rng) * 1e3)
                .collect();
            let f = FieldSeries::new(grid, dt, n_times, data).unwrap();
            let back = field_from_csv(&field_to_csv(&f), Some(dt)).unwrap();
            prop_assert_eq!(back, f);
        }
    }

    #[test]
    fn header_and_shape_errors() {
        assert!(field_from_csv("x,1,2,3\n0,1,2,3\n", None).is_err());
        assert!(field_from_csv("t\\x,1,2,3\n0,1,2\n", None).is_err());
        let f = field_from_csv("t\\x,-1,0,1\n0,1,2,3\n0.5,4,5,6\n", None).unwrap();
        assert_eq!(f.n_times(), 2);
        assert_eq!(f.dt(), 0.5);
        assert_eq!(f.get(1, 2), 6.0);
    }

    #[test]
    fn missing_file_is_missing_artifact() {
        let err = read_field(Path::new("/nonexistent/field.csv")).unwrap_err();
        assert!(matches!(err, Error::MissingArtifact(_)));
    }

    #[test]
    fn profile_round_trip() {
        let g = Grid1D::new(5).unwrap();
        let p = vec![0.1, -2.0, 3.5, 1e-17, 4.0];
        assert_eq!(profile_from_csv(&profile_to_csv(&g, &p)).unwrap(), p);
    }
}
