//! Gaussian spatial filtering `ū = u * G_δ` on a uniform grid.
//!
//! Row `i` of the discrete filter carries weights proportional to
//! `exp(−(x_i − x_j)² / δ²)` for `|x_i − x_j| ≤ 4δ`, renormalized to unit
//! sum. Near the boundary the support is cut at the domain edge and the
//! surviving weights are renormalized the same way, so constants are
//! preserved on every row.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FieldSeries, Grid1D};

/// Kernel support radius in units of δ.
pub const TRUNCATION_RADIUS: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub delta: f64,
}

impl FilterSpec {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::invalid(format!("filter width must be positive, got {delta}")));
        }
        Ok(Self { delta })
    }
}

/// Precomputed rowwise weights for one grid and filter width.
#[derive(Debug, Clone)]
pub struct GaussianFilter {
    grid: Grid1D,
    spec: FilterSpec,
    /// (first column, weights) per row.
    rows: Vec<(usize, Vec<f64>)>,
}

impl GaussianFilter {
    pub fn new(grid: Grid1D, spec: FilterSpec) -> Result<Self> {
        FilterSpec::new(spec.delta)?;
        let h = grid.spacing();
        if spec.delta < h * (1.0 - 1e-12) {
            return Err(Error::UnderResolvedFilter {
                delta: spec.delta,
                spacing: h,
            });
        }
        let reach = (TRUNCATION_RADIUS * spec.delta / h + 1e-9).floor() as usize;
        let kernel: Vec<f64> = (0..=reach)
            .map(|k| {
                let d = k as f64 * h / spec.delta;
                (-d * d).exp()
            })
            .collect();
        let n = grid.n_points();
        let rows = (0..n)
            .map(|i| {
                let lo = i.saturating_sub(reach);
                let hi = (i + reach).min(n - 1);
                let mut w: Vec<f64> = (lo..=hi).map(|j| kernel[i.abs_diff(j)]).collect();
                let total: f64 = w.iter().sum();
                for v in &mut w {
                    *v /= total;
                }
                (lo, w)
            })
            .collect();
        Ok(Self { grid, spec, rows })
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn spec(&self) -> FilterSpec {
        self.spec
    }

    /// Nonzero weights of row `center` as `(column, weight)` pairs.
    pub fn row(&self, center: usize) -> Result<Vec<(usize, f64)>> {
        let (lo, w) = self.rows.get(center).ok_or_else(|| {
            Error::invalid(format!(
                "center index {center} outside grid of {} points",
                self.grid.n_points()
            ))
        })?;
        Ok(w.iter().enumerate().map(|(k, &v)| (lo + k, v)).collect())
    }

    /// Whether row `i` has its full symmetric support inside the domain.
    pub fn is_interior(&self, i: usize) -> bool {
        let (lo, w) = &self.rows[i];
        *lo + w.len() - 1 - i == i - *lo
    }

    pub fn apply_profile(&self, u: &[f64], out: &mut [f64]) {
        debug_assert_eq!(u.len(), self.grid.n_points());
        // weights sum to one, so summing offsets from the center value keeps
        // constants exact
        for (i, (o, (lo, w))) in out.iter_mut().zip(&self.rows).enumerate() {
            let c = u[i];
            *o = c + w.iter().zip(&u[*lo..]).map(|(a, b)| a * (b - c)).sum::<f64>();
        }
    }

    pub fn apply(&self, field: &FieldSeries) -> Result<FieldSeries> {
        if field.grid() != &self.grid {
            return Err(Error::invalid(format!(
                "filter built for {} points applied to a field on {} points",
                self.grid.n_points(),
                field.n_points()
            )));
        }
        let p = field.n_points();
        let mut data = vec![0.0; field.data().len()];
        for (row, out) in field.rows().zip(data.chunks_exact_mut(p)) {
            self.apply_profile(row, out);
        }
        Ok(FieldSeries::from_parts_unchecked(
            *field.grid(),
            field.dt(),
            field.n_times(),
            data,
        ))
    }
}

/// The weight row used by [`filter_field`] at `center_index`.
pub fn kernel_weights(grid: &Grid1D, center_index: usize, spec: &FilterSpec) -> Result<Vec<(usize, f64)>> {
    if center_index >= grid.n_points() {
        return Err(Error::invalid(format!(
            "center index {center_index} outside grid of {} points",
            grid.n_points()
        )));
    }
    GaussianFilter::new(*grid, *spec)?.row(center_index)
}

pub fn filter_field(field: &FieldSeries, spec: &FilterSpec) -> Result<FieldSeries> {
    GaussianFilter::new(*field.grid(), *spec)?.apply(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn grid(n: usize) -> Grid1D {
        Grid1D::new(n).unwrap()
    }

    #[test]
    fn rejects_bad_widths() {
        let g = grid(2001);
        assert!(matches!(FilterSpec::new(0.0), Err(Error::InvalidInput(_))));
        assert!(matches!(FilterSpec::new(-1.0), Err(Error::InvalidInput(_))));
        let f = FieldSeries::from_fn(g, 0.1, 1, |x, _| x).unwrap();
        let spec = FilterSpec { delta: 0.0005 };
        assert!(matches!(
            filter_field(&f, &spec),
            Err(Error::UnderResolvedFilter { .. })
        ));
        assert!(kernel_weights(&g, 2001, &FilterSpec::new(0.01).unwrap()).is_err());
    }

    #[test]
    fn kernel_rows() {
        let g = grid(201);
        let spec = FilterSpec::new(0.05).unwrap();
        let mid = kernel_weights(&g, 100, &spec).unwrap();
        let pos = mid.iter().position(|&(j, _)| j == 100).unwrap();
        for k in 1..=pos {
            assert_eq!(mid[pos - k].1, mid[pos + k].1);
        }
        for i in [0, 1, 7, 100, 199, 200] {
            let s: f64 = kernel_weights(&g, i, &spec).unwrap().iter().map(|w| w.1).sum();
            assert!((s - 1.0).abs() < 1e-14);
            assert!(kernel_weights(&g, i, &spec).unwrap().iter().all(|w| w.1 >= 0.0));
        }
        let tight = FilterSpec::new(g.spacing()).unwrap();
        let row = kernel_weights(&g, 50, &tight).unwrap();
        let center = row.iter().find(|w| w.0 == 50).unwrap().1;
        assert!(row.iter().filter(|w| w.0 != 50).all(|w| w.1 < center));
    }

    #[test]
    fn constants_preserved_everywhere() {
        let g = grid(501);
        let c = FieldSeries::from_fn(g, 0.1, 3, |_, _| -0.731).unwrap();
        for delta in [0.004, 0.04, 0.3] {
            let f = filter_field(&c, &FilterSpec::new(delta).unwrap()).unwrap();
            for v in f.data() {
                assert!((v + 0.731).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn sinusoid_close_to_unfiltered() {
        let g = grid(2001);
        let spec = FilterSpec::new(0.01).unwrap();
        let u = FieldSeries::from_fn(g, 1.0, 1, |x, _| (PI * x).sin()).unwrap();
        let filt = GaussianFilter::new(g, spec).unwrap();
        let ub = filt.apply(&u).unwrap();
        let damping = (-PI * PI * 0.01 * 0.01 / 4.0).exp();
        let mut worst: f64 = 0.0;
        for i in (0..2001).filter(|&i| filt.is_interior(i)) {
            let exact = u.get(0, i);
            worst = worst.max((ub.get(0, i) - exact).abs());
            // discrete Gaussian sum matches the continuum factor closely
            assert!((ub.get(0, i) - damping * exact).abs() < 1e-6);
        }
        assert!(worst <= 1e-3, "max deviation {worst}");
    }

    #[test]
    fn affine_preserved_in_interior() {
        let g = grid(401);
        let filt = GaussianFilter::new(g, FilterSpec::new(0.03).unwrap()).unwrap();
        let u = FieldSeries::from_fn(g, 1.0, 1, |x, _| x).unwrap();
        let ub = filt.apply(&u).unwrap();
        for i in (0..401).filter(|&i| filt.is_interior(i)) {
            assert!((ub.get(0, i) - g.x(i)).abs() < 1e-12);
        }
    }

    #[test]
    fn converges_as_width_shrinks() {
        let g = grid(801);
        let u = FieldSeries::from_fn(g, 1.0, 1, |x, _| (2.0 * x).sin() + x * x).unwrap();
        let errs: Vec<f64> = [0.08, 0.04, 0.02, 0.01]
            .iter()
            .map(|&d| {
                let ub = filter_field(&u, &FilterSpec::new(d).unwrap()).unwrap();
                ub.data()
                    .iter()
                    .zip(u.data())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    }

    fn h1_seminorm(v: &[f64]) -> f64 {
        v.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum()
    }

    #[test]
    fn smoothing_contracts_oscillation() {
        let g = grid(201);
        let filt = GaussianFilter::new(g, FilterSpec::new(0.03).unwrap()).unwrap();
        let mut rng = crate::rng::seeded(7);
        for _ in 0..100 {
            let u: Vec<f64> = (0..201).map(|_| crate::rng::standard_normal(&mut rng)).collect();
            let mut ub = vec![0.0; 201];
            filt.apply_profile(&u, &mut ub);
            assert!(h1_seminorm(&ub) <= h1_seminorm(&u));
        }
    }

    proptest! {
        #[test]
        fn filter_is_linear(seed in any::<u64>(), alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
            let g = grid(101);
            let filt = GaussianFilter::new(g, FilterSpec::new(0.05).unwrap()).unwrap();
            let mut rng = crate::rng::seeded(seed);
            let u: Vec<f64> = (0..101).map(|_| crate::rng::standard_normal(&mut rng)).collect();
            let v: Vec<f64> = (0..101).map(|_| crate::rng::standard_normal(&mut rng)).collect();
            let comb: Vec<f64> = u.iter().zip(&v).map(|(a, b)| alpha * a + beta * b).collect();
            let (mut fu, mut fv, mut fc) = (vec![0.0; 101], vec![0.0; 101], vec![0.0; 101]);
            filt.apply_profile(&u, &mut fu);
            filt.apply_profile(&v, &mut fv);
            filt.apply_profile(&comb, &mut fc);
            for i in 0..101 {
                prop_assert!((fc[i] - (alpha * fu[i] + beta * fv[i])).abs() < 1e-13);
            }
        }
    }
}
