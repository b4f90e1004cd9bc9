//! Uniform grids on `[-1, 1]`, space-time field storage and trapezoid quadrature.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const X_MIN: f64 = -1.0;
pub const X_MAX: f64 = 1.0;

/// Uniform grid on `[X_MIN, X_MAX]` including both endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    n_points: usize,
}

impl Grid1D {
    pub fn new(n_points: usize) -> Result<Self> {
        if n_points < 3 {
            return Err(Error::invalid(format!("grid needs at least 3 points, got {n_points}")));
        }
        Ok(Self { n_points })
    }

    /// Grid whose spacing is `spacing` (must divide the domain length).
    pub fn with_spacing(spacing: f64) -> Result<Self> {
        let cells = (X_MAX - X_MIN) / spacing;
        let rounded = cells.round();
        if !(spacing > 0.0) || (cells - rounded).abs() > 1e-9 * cells.max(1.0) {
            return Err(Error::invalid(format!(
                "spacing {spacing} does not divide [{X_MIN}, {X_MAX}]"
            )));
        }
        Self::new(rounded as usize + 1)
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn spacing(&self) -> f64 {
        (X_MAX - X_MIN) / (self.n_points - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        X_MIN + i as f64 * self.spacing()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.x(i)).collect()
    }

    /// Profile `f(x_i)` sampled at every grid point.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..self.n_points).map(|i| f(self.x(i))).collect()
    }

    /// Grid keeping every `factor`-th point.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !(self.n_points - 1).is_multiple_of(factor) {
            return Err(Error::invalid(format!(
                "{} intervals are not divisible by coarsening factor {factor}",
                self.n_points - 1
            )));
        }
        Self::new((self.n_points - 1) / factor + 1)
    }

    /// Composite trapezoid weights in space.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        trapezoid_weights(self.n_points, self.spacing())
    }
}

/// Dirichlet data `u(-1, t) = left`, `u(1, t) = right`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCondition {
    pub left: f64,
    pub right: f64,
}

impl BoundaryCondition {
    pub fn new(left: f64, right: f64) -> Result<Self> {
        if !left.is_finite() || !right.is_finite() {
            return Err(Error::invalid("boundary values must be finite"));
        }
        Ok(Self { left, right })
    }
}

pub(crate) fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n];
    if n > 0 {
        w[0] *= 0.5;
        w[n - 1] *= 0.5;
    }
    w
}

/// Space-time samples `u(x_i, t_n)` with `t_n = n * dt`, stored row-major by time.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSeries {
    grid: Grid1D,
    dt: f64,
    n_times: usize,
    data: Vec<f64>,
}

impl FieldSeries {
    pub fn new(grid: Grid1D, dt: f64, n_times: usize, data: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::invalid(format!("time step must be positive, got {dt}")));
        }
        if n_times == 0 {
            return Err(Error::invalid("field needs at least one time sample"));
        }
        if data.len() != n_times * grid.n_points() {
            return Err(Error::invalid(format!(
                "field data has {} entries, expected {} x {}",
                data.len(),
                n_times,
                grid.n_points()
            )));
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite field entry at time index {}, point {}",
                k / grid.n_points(),
                k % grid.n_points()
            )));
        }
        Ok(Self {
            grid,
            dt,
            n_times,
            data,
        })
    }

    pub fn from_rows(grid: Grid1D, dt: f64, rows: &[Vec<f64>]) -> Result<Self> {
        let data = rows.iter().flatten().copied().collect();
        Self::new(grid, dt, rows.len(), data)
    }

    /// Field `f(x, t)` sampled on the grid at `n_times` instants.
    pub fn from_fn(grid: Grid1D, dt: f64, n_times: usize, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(n_times * grid.n_points());
        for n in 0..n_times {
            let t = n as f64 * dt;
            data.extend((0..grid.n_points()).map(|i| f(grid.x(i), t)));
        }
        Self::new(grid, dt, n_times, data)
    }

    /// Skips the finiteness scan; callers guarantee valid data.
    pub(crate) fn from_parts_unchecked(grid: Grid1D, dt: f64, n_times: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), n_times * grid.n_points());
        Self {
            grid,
            dt,
            n_times,
            data,
        }
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    pub fn n_points(&self) -> usize {
        self.grid.n_points()
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.n_times - 1)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_times).map(|n| self.time(n)).collect()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, n: usize) -> &[f64] {
        let p = self.n_points();
        &self.data[n * p..(n + 1) * p]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.n_points())
    }

    pub fn get(&self, n: usize, i: usize) -> f64 {
        self.data[n * self.n_points() + i]
    }

    /// Values at grid point `i` over time.
    pub fn column(&self, i: usize) -> Vec<f64> {
        self.rows().map(|r| r[i]).collect()
    }

    /// Pointwise map; fails if the result is not finite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(
            self.grid,
            self.dt,
            self.n_times,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same_axes(other)?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Self::new(self.grid, self.dt, self.n_times, data)
    }

    pub fn same_axes(&self, other: &Self) -> bool {
        self.grid == other.grid && self.n_times == other.n_times && (self.dt - other.dt).abs() <= 1e-9 * self.dt
    }

    pub fn check_same_axes(&self, other: &Self) -> Result<()> {
        if self.same_axes(other) {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "field shapes differ: ({} times x {} points, dt {}) vs ({} x {}, dt {})",
                self.n_times,
                self.n_points(),
                self.dt,
                other.n_times,
                other.n_points(),
                other.dt
            )))
        }
    }

    /// Keep every `factor`-th spatial point, endpoints included; time axis unchanged.
    pub fn restrict(&self, factor: usize) -> Result<Self> {
        let coarse = self.grid.coarsen(factor)?;
        let data = self.rows().flat_map(|r| r.iter().step_by(factor).copied()).collect();
        Ok(Self::from_parts_unchecked(coarse, self.dt, self.n_times, data))
    }

    /// Trapezoid approximation of the time integral over `[0, T]` at every grid point.
    pub fn time_integral(&self) -> Result<Vec<f64>> {
        if self.n_times < 2 {
            return Err(Error::invalid("time integral needs at least two time samples"));
        }
        let wt = trapezoid_weights(self.n_times, self.dt);
        let mut out = vec![0.0; self.n_points()];
        for (row, w) in self.rows().zip(&wt) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += w * v;
            }
        }
        Ok(out)
    }
}

/// Restrict a spatial profile by keeping every `factor`-th entry.
pub fn restrict_profile(profile: &[f64], factor: usize) -> Result<Vec<f64>> {
    if profile.len() < 3 || factor == 0 || !(profile.len() - 1).is_multiple_of(factor) {
        return Err(Error::invalid(format!(
            "profile of {} points cannot be coarsened by {factor}",
            profile.len()
        )));
    }
    Ok(profile.iter().step_by(factor).copied().collect())
}

/// Relative space-time L² error `‖a − b‖ / ‖b‖` with trapezoid quadrature in
/// both axes. The normalization uses the reference `b`, so the metric is not
/// symmetric in its arguments.
pub fn l2_spacetime_error(a: &FieldSeries, b: &FieldSeries) -> Result<f64> {
    a.check_same_axes(b)?;
    let wx = a.grid.trapezoid_weights();
    let wt = if a.n_times > 1 {
        trapezoid_weights(a.n_times, a.dt)
    } else {
        vec![1.0]
    };
    let mut num = 0.0;
    let mut den = 0.0;
    for ((ra, rb), w_t) in a.rows().zip(b.rows()).zip(&wt) {
        let mut row_num = 0.0;
        let mut row_den = 0.0;
        for ((&va, &vb), w_x) in ra.iter().zip(rb).zip(&wx) {
            row_num += w_x * (va - vb) * (va - vb);
            row_den += w_x * vb * vb;
        }
        num += w_t * row_num;
        den += w_t * row_den;
    }
    if den == 0.0 {
        return Err(Error::DegenerateReference);
    }
    Ok((num / den).sqrt())
}

/// Relative spatial L² error at each time level, normalized by the reference row.
pub fn l2_error_per_time(a: &FieldSeries, b: &FieldSeries) -> Result<Vec<f64>> {
    a.check_same_axes(b)?;
    let wx = a.grid.trapezoid_weights();
    a.rows()
        .zip(b.rows())
        .map(|(ra, rb)| {
            let (num, den) = ra.iter().zip(rb).zip(&wx).fold((0.0, 0.0), |(n, d), ((&va, &vb), w)| {
                (n + w * (va - vb) * (va - vb), d + w * vb * vb)
            });
            if den == 0.0 {
                Err(Error::DegenerateReference)
            } else {
                Ok((num / den).sqrt())
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Grid1D {
        Grid1D::new(n).unwrap()
    }

    #[test]
    fn grid_points_include_endpoints() {
        let g = grid(2001);
        assert_eq!(g.x(0), -1.0);
        assert!((g.x(2000) - 1.0).abs() < 1e-15);
        assert!((g.spacing() - 0.001).abs() < 1e-15);
        assert!(Grid1D::new(2).is_err());
        assert_eq!(Grid1D::with_spacing(0.004).unwrap().n_points(), 501);
        assert!(Grid1D::with_spacing(0.3).is_err());
    }

    #[test]
    fn restrict_constant_and_linear() {
        let c = FieldSeries::from_fn(grid(9), 0.1, 3, |_, _| 2.5).unwrap();
        let r = c.restrict(4).unwrap();
        assert_eq!(r.n_points(), 3);
        assert!(r.data().iter().all(|&v| v == 2.5));

        let fine = grid(2001);
        let lin = FieldSeries::from_fn(fine, 0.1, 2, |x, _| x).unwrap();
        let r = lin.restrict(4).unwrap();
        assert_eq!(r.n_points(), 501);
        for n in 0..2 {
            for i in 0..501 {
                assert_eq!(r.get(n, i), fine.x(4 * i));
            }
        }
        assert!(matches!(lin.restrict(3), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn time_integral_cases() {
        let g = grid(5);
        let ones = FieldSeries::from_fn(g, 0.25, 9, |_, _| 1.0).unwrap();
        for v in ones.time_integral().unwrap() {
            assert!((v - 2.0).abs() < 1e-15);
        }
        let lin = FieldSeries::from_fn(g, 0.1, 11, |_, t| t).unwrap();
        for v in lin.time_integral().unwrap() {
            assert!((v - 0.5).abs() < 1e-15);
        }
        let quad = FieldSeries::from_fn(g, 0.01, 101, |_, t| t * t).unwrap();
        for v in quad.time_integral().unwrap() {
            // trapezoid error is dt^2 T / 6 * f'' / 2 ~ 1.7e-5
            assert!((v - 1.0 / 3.0).abs() < 1e-4);
        }
        let single = FieldSeries::from_fn(g, 0.1, 1, |_, _| 1.0).unwrap();
        assert!(single.time_integral().is_err());
    }

    #[test]
    fn l2_error_cases() {
        let g = grid(41);
        let b = FieldSeries::from_fn(g, 0.05, 21, |x, t| 1.0 + x * t).unwrap();
        assert_eq!(l2_spacetime_error(&b, &b).unwrap(), 0.0);
        let a = b.map(|v| 2.0 * v).unwrap();
        assert!((l2_spacetime_error(&a, &b).unwrap() - 1.0).abs() < 1e-14);

        // b = 1, a = 1.01 on [0,1] x [-1,1]: sqrt(0.01^2 * 2 / 2)
        let one = FieldSeries::from_fn(g, 0.05, 21, |_, _| 1.0).unwrap();
        let shifted = one.map(|v| v + 0.01).unwrap();
        assert!((l2_spacetime_error(&shifted, &one).unwrap() - 0.01).abs() < 1e-6);

        let zero = one.map(|_| 0.0).unwrap();
        assert!(matches!(
            l2_spacetime_error(&one, &zero),
            Err(Error::DegenerateReference)
        ));
        let other = FieldSeries::from_fn(grid(21), 0.05, 21, |_, _| 1.0).unwrap();
        assert!(matches!(l2_spacetime_error(&one, &other), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn quadrature_exact_on_affine_data() {
        let g = grid(17);
        let f = FieldSeries::from_fn(g, 0.125, 9, |x, t| 3.0 + 2.0 * x - 0.5 * t).unwrap();
        // space-time integral of the affine field over [-1,1]x[0,1] is 6 - 0.5 = 5.5
        let wx = g.trapezoid_weights();
        let total: f64 = f.time_integral().unwrap().iter().zip(&wx).map(|(v, w)| v * w).sum();
        assert!((total - 5.5).abs() < 1e-12 * 5.5);
    }

    #[test]
    fn constructors_reject_non_finite() {
        let g = grid(3);
        assert!(FieldSeries::new(g, 0.1, 1, vec![0.0, f64::NAN, 0.0]).is_err());
        assert!(FieldSeries::new(g, 0.1, 1, vec![0.0, f64::INFINITY, 0.0]).is_err());
        assert!(FieldSeries::new(g, 0.1, 2, vec![0.0; 3]).is_err());
        assert!(BoundaryCondition::new(f64::NAN, 1.0).is_err());
    }
}
