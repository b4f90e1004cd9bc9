//! Fractional Brownian motion sample paths.
//!
//! Two generators are provided:
//!
//! * [`ExactFbm`] / [`generate_exact`] factor the covariance matrix
//!   `E[B(t)B(s)] = ½(|t|^{2H} + |s|^{2H} − |t−s|^{2H})` of the requested time
//!   set and color a vector of independent normals with the Cholesky factor.
//!   The finite-dimensional law is exact, which is why this generator serves
//!   as the oracle for everything else.
//! * [`generate_wm`] evaluates a truncated randomized Weierstrass–Mandelbrot
//!   series `w(t) = Σ_j C_j r^{jH} sin(2π r^{−j} t + d_j)` and subtracts `w(0)`
//!   so the path starts at zero.
//!
//! All generators are pure functions of their inputs and seed.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Hurst exponent, strictly inside `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct HurstParam(f64);

impl HurstParam {
    pub fn new(value: f64) -> Result<Self> {
        if value > 0.0 && value < 1.0 {
            Ok(Self(value))
        } else {
            Err(Error::invalid(format!(
                "Hurst parameter must lie in (0, 1), got {value}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `½(|t|^{2H} + |s|^{2H} − |t−s|^{2H})`
    pub fn covariance(self, t: f64, s: f64) -> f64 {
        let e = 2.0 * self.0;
        0.5 * (t.abs().powf(e) + s.abs().powf(e) - (t - s).abs().powf(e))
    }
}

impl TryFrom<f64> for HurstParam {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<HurstParam> for f64 {
    fn from(h: HurstParam) -> f64 {
        h.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    #[default]
    Exact,
    Wm,
}

impl std::str::FromStr for GeneratorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Self::Exact),
            "wm" => Ok(Self::Wm),
            other => Err(Error::invalid(format!("unknown generator `{other}` (exact | wm)"))),
        }
    }
}

/// A sampled path. `times[0] == 0` and `values[0] == 0` always hold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FbmPath {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub hurst: HurstParam,
    pub seed: u64,
    pub kind: GeneratorKind,
}

impl FbmPath {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Weierstrass–Mandelbrot series parameters: ratio `r` and the kept range
/// `j_min..=j_max` of the doubly infinite sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WmConfig {
    pub r: f64,
    pub j_min: i32,
    pub j_max: i32,
    pub seed: u64,
}

impl Default for WmConfig {
    fn default() -> Self {
        Self {
            r: 0.9,
            j_min: -64,
            j_max: 64,
            seed: 0,
        }
    }
}

impl WmConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0 && self.r < 1.0) {
            return Err(Error::invalid(format!("WM ratio r must lie in (0, 1), got {}", self.r)));
        }
        if self.j_min >= self.j_max {
            return Err(Error::invalid(format!(
                "WM truncation needs j_min < j_max, got [{}, {}]",
                self.j_min, self.j_max
            )));
        }
        Ok(())
    }
}

fn validate_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::invalid("time set is empty"));
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::invalid("time set contains non-finite values"));
    }
    if times[0] < 0.0 {
        return Err(Error::invalid(format!("times must be non-negative, got {}", times[0])));
    }
    if let Some(w) = times.windows(2).find(|w| w[1] <= w[0]) {
        return Err(Error::invalid(format!(
            "times must be strictly increasing ({} then {})",
            w[0], w[1]
        )));
    }
    Ok(())
}

/// Prepends `t = 0` when the set does not start there.
fn anchored_times(times: &[f64]) -> Vec<f64> {
    if times[0] == 0.0 {
        times.to_vec()
    } else {
        std::iter::once(0.0).chain(times.iter().copied()).collect()
    }
}

/// `t_n = n * t_end / n_steps` for `n = 0..=n_steps`.
pub fn uniform_times(n_steps: usize, t_end: f64) -> Vec<f64> {
    let dt = t_end / n_steps as f64;
    (0..=n_steps).map(|n| n as f64 * dt).collect()
}

const JITTER_LEVELS: [f64; 3] = [1e-14, 1e-12, 1e-10];

/// Exact generator with the covariance factor computed once, so many
/// independent paths on the same time set are cheap.
#[derive(Debug, Clone)]
pub struct ExactFbm {
    times: Vec<f64>,
    hurst: HurstParam,
    /// Row-packed lower Cholesky factor for the nonzero times (`times[1..]`).
    factor: Vec<f64>,
    jitter: f64,
}

impl ExactFbm {
    pub fn new(times: &[f64], hurst: HurstParam) -> Result<Self> {
        validate_times(times)?;
        let times = anchored_times(times);
        let positive = &times[1..];
        let n = positive.len();
        if n == 0 {
            return Ok(Self {
                times,
                hurst,
                factor: Vec::new(),
                jitter: 0.0,
            });
        }
        let cov = DMatrix::from_fn(n, n, |i, j| hurst.covariance(positive[i], positive[j]));
        let max_diag = (0..n).map(|i| cov[(i, i)]).fold(0.0, f64::max);

        let mut jitter = 0.0;
        let mut chol = Cholesky::new(cov.clone());
        for level in JITTER_LEVELS {
            if chol.is_some() {
                break;
            }
            jitter = level * max_diag;
            let mut shifted = cov.clone();
            for i in 0..n {
                shifted[(i, i)] += jitter;
            }
            chol = Cholesky::new(shifted);
        }
        let chol = chol.ok_or_else(|| {
            Error::Numerical(format!(
                "fBM covariance factorization failed for {n} times even with relative jitter {}",
                JITTER_LEVELS[JITTER_LEVELS.len() - 1]
            ))
        })?;
        if jitter > 0.0 {
            log::warn!("fBM covariance needed diagonal jitter {jitter:e}");
        }
        let l = chol.l();
        let mut factor = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            factor.extend((0..=i).map(|j| l[(i, j)]));
        }
        Ok(Self {
            times,
            hurst,
            factor,
            jitter,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn hurst(&self) -> HurstParam {
        self.hurst
    }

    /// Diagonal shift that was needed to factor the covariance (0 if none).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Path values for `seed`, aligned with [`ExactFbm::times`].
    pub fn sample_values(&self, seed: u64) -> Vec<f64> {
        let n = self.times.len() - 1;
        let mut z = vec![0.0; n];
        rng::fill_standard_normal(&mut rng::seeded(seed), &mut z);
        let mut values = Vec::with_capacity(n + 1);
        values.push(0.0);
        let mut start = 0;
        for i in 0..n {
            let row = &self.factor[start..start + i + 1];
            values.push(row.iter().zip(&z).map(|(l, z)| l * z).sum());
            start += i + 1;
        }
        values
    }

    pub fn sample(&self, seed: u64) -> FbmPath {
        FbmPath {
            times: self.times.clone(),
            values: self.sample_values(seed),
            hurst: self.hurst,
            seed,
            kind: GeneratorKind::Exact,
        }
    }
}

/// Exact fBM at `times`. If `times` does not start at 0, a zero anchor is
/// prepended to the returned path.
pub fn generate_exact(times: &[f64], hurst: HurstParam, seed: u64) -> Result<FbmPath> {
    Ok(ExactFbm::new(times, hurst)?.sample(seed))
}

/// Truncated randomized Weierstrass–Mandelbrot approximation, pinned at zero.
///
/// The series has the fBM increment scaling but not its normalization: with
/// the default configuration `Var w(1)` is about 230 for `H = 0.75`, so the
/// paths are a scaled fBM rather than a standard one.
pub fn generate_wm(times: &[f64], hurst: HurstParam, config: &WmConfig) -> Result<FbmPath> {
    validate_times(times)?;
    config.validate()?;
    let times = anchored_times(times);
    let h = hurst.value();
    let mut rng = rng::seeded(config.seed);
    // (amplitude C_j r^{jH}, angular frequency 2π r^{-j}, phase d_j), drawn in order of j
    let terms: Vec<(f64, f64, f64)> = (config.j_min..=config.j_max)
        .map(|j| {
            let c = rng::standard_normal(&mut rng);
            let d = 2.0 * PI * rng::unit_uniform(&mut rng);
            let jf = f64::from(j);
            (c * config.r.powf(jf * h), 2.0 * PI * config.r.powf(-jf), d)
        })
        .collect();
    let w = |t: f64| -> f64 { terms.iter().map(|&(a, om, d)| a * (om * t + d).sin()).sum() };
    let w0 = w(0.0);
    let values = times.iter().map(|&t| if t == 0.0 { 0.0 } else { w(t) - w0 }).collect();
    Ok(FbmPath {
        times,
        values,
        hurst,
        seed: config.seed,
        kind: GeneratorKind::Wm,
    })
}

pub fn generate(times: &[f64], hurst: HurstParam, kind: GeneratorKind, seed: u64) -> Result<FbmPath> {
    match kind {
        GeneratorKind::Exact => generate_exact(times, hurst, seed),
        GeneratorKind::Wm => generate_wm(times, hurst, &WmConfig::with_seed(seed)),
    }
}

/// `values[i+1] − values[i]`.
pub fn increments(path: &FbmPath) -> Result<Vec<f64>> {
    if path.values.len() < 2 {
        return Err(Error::invalid("increments need at least two samples"));
    }
    Ok(path.values.windows(2).map(|w| w[1] - w[0]).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HurstEstimate {
    pub hurst: f64,
    /// Slope of log mean-squared increment against log lag (`2H`).
    pub slope: f64,
    /// Set when the estimate sits at or beyond the edge of `(0, 1)`.
    pub warning: Option<String>,
}

/// Mean of `(v[i+lag] − v[i])²` over all admissible `i`.
pub fn mean_squared_increment(values: &[f64], lag: usize) -> f64 {
    let n = values.len() - lag;
    values[lag..]
        .iter()
        .zip(values)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n as f64
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

const HURST_EDGE: f64 = 0.01;

/// Variogram estimate of H from lags given in samples.
pub fn estimate_hurst(path: &FbmPath, lags: &[usize]) -> Result<HurstEstimate> {
    let mut distinct: Vec<usize> = lags.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::invalid("Hurst estimation needs at least 3 distinct lags"));
    }
    if distinct[0] == 0 {
        return Err(Error::invalid("lags must be positive"));
    }
    let max_lag = *distinct.last().unwrap();
    if max_lag > path.len() / 4 {
        return Err(Error::invalid(format!(
            "path of {} samples is too short for lag {max_lag} (need len >= 4 * lag)",
            path.len()
        )));
    }
    let mut log_lag = Vec::with_capacity(distinct.len());
    let mut log_msd = Vec::with_capacity(distinct.len());
    for &lag in &distinct {
        let msd = mean_squared_increment(&path.values, lag);
        if !(msd > 0.0) {
            return Err(Error::Numerical(format!("path has no variation at lag {lag}")));
        }
        log_lag.push((lag as f64).ln());
        log_msd.push(msd.ln());
    }
    let slope = ls_slope(&log_lag, &log_msd);
    let hurst = slope / 2.0;
    let warning = if hurst >= 1.0 - HURST_EDGE {
        Some(format!("estimate {hurst:.4} at the smooth-path boundary H = 1"))
    } else if hurst <= HURST_EDGE {
        Some(format!("estimate {hurst:.4} at the rough boundary H = 0"))
    } else {
        None
    };
    Ok(HurstEstimate { hurst, slope, warning })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(v: f64) -> HurstParam {
        HurstParam::new(v).unwrap()
    }

    #[test]
    fn hurst_param_bounds() {
        assert!(HurstParam::new(0.0).is_err());
        assert!(HurstParam::new(1.0).is_err());
        assert!(HurstParam::new(f64::NAN).is_err());
        assert_eq!(h(0.75).value(), 0.75);
        assert!(serde_json::from_str::<HurstParam>("1.5").is_err());
    }

    #[test]
    fn single_time_zero_is_zero() {
        for kind in [GeneratorKind::Exact, GeneratorKind::Wm] {
            let p = generate(&[0.0], h(0.3), kind, 99).unwrap();
            assert_eq!(p.values, vec![0.0]);
            assert_eq!(p.times, vec![0.0]);
        }
    }

    #[test]
    fn anchor_prepended() {
        let p = generate_exact(&[0.5, 1.0], h(0.5), 1).unwrap();
        assert_eq!(p.times, vec![0.0, 0.5, 1.0]);
        assert_eq!(p.values[0], 0.0);
        let w = generate_wm(&[0.5, 1.0], h(0.5), &WmConfig::default()).unwrap();
        assert_eq!(w.times.len(), 3);
        assert_eq!(w.values[0], 0.0);
    }

    #[test]
    fn rejects_bad_times_and_config() {
        assert!(generate_exact(&[0.0, 0.5, 0.5], h(0.5), 0).is_err());
        assert!(generate_exact(&[0.0, 0.7, 0.5], h(0.5), 0).is_err());
        assert!(generate_exact(&[], h(0.5), 0).is_err());
        assert!(generate_exact(&[-0.1, 0.5], h(0.5), 0).is_err());
        let bad_r = WmConfig {
            r: 1.0,
            ..WmConfig::default()
        };
        assert!(generate_wm(&[0.0, 1.0], h(0.5), &bad_r).is_err());
        let bad_j = WmConfig {
            j_min: 3,
            j_max: 3,
            ..WmConfig::default()
        };
        assert!(generate_wm(&[0.0, 1.0], h(0.5), &bad_j).is_err());
    }

    #[test]
    fn reproducible_bit_for_bit() {
        let times = uniform_times(64, 1.0);
        for kind in [GeneratorKind::Exact, GeneratorKind::Wm] {
            let a = generate(&times, h(0.75), kind, 1234).unwrap();
            let b = generate(&times, h(0.75), kind, 1234).unwrap();
            let c = generate(&times, h(0.75), kind, 1235).unwrap();
            assert_eq!(a, b);
            assert_ne!(a.values, c.values);
        }
    }

    #[test]
    fn increments_basic() {
        let mut p = generate_exact(&[0.0, 1.0, 2.0], h(0.5), 0).unwrap();
        p.values = vec![0.0, 1.0, 3.0];
        assert_eq!(increments(&p).unwrap(), vec![1.0, 2.0]);
        p.values = vec![0.0, 0.0, 0.0];
        assert_eq!(increments(&p).unwrap(), vec![0.0, 0.0]);
        let single = generate_exact(&[0.0], h(0.5), 0).unwrap();
        assert!(increments(&single).is_err());
    }

    #[test]
    fn brownian_increments_uncorrelated() {
        let times = uniform_times(8, 1.0);
        let gen = ExactFbm::new(&times, h(0.5)).unwrap();
        let m = 10_000;
        let (mut sxy, mut sxx, mut syy, mut sx, mut sy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for seed in 0..m {
            let v = gen.sample_values(seed);
            let (a, b) = (v[4] - v[3], v[5] - v[4]);
            sx += a;
            sy += b;
            sxy += a * b;
            sxx += a * a;
            syy += b * b;
        }
        let mf = m as f64;
        let cov = sxy / mf - sx * sy / (mf * mf);
        let corr = cov / ((sxx / mf - (sx / mf).powi(2)) * (syy / mf - (sy / mf).powi(2))).sqrt();
        assert!(corr.abs() < 0.05, "corr = {corr}");
    }

    #[test]
    fn brownian_covariance_is_min() {
        let gen = ExactFbm::new(&[0.0, 0.5, 1.0], h(0.5)).unwrap();
        let m = 10_000;
        let mut s = 0.0;
        for seed in 0..m {
            let v = gen.sample_values(seed);
            s += v[1] * v[2];
        }
        let cov = s / m as f64;
        assert!((cov - 0.5).abs() < 0.05 * 0.5, "cov = {cov}");
    }

    #[test]
    fn variance_at_one_for_h075() {
        let gen = ExactFbm::new(&[0.0, 1.0], h(0.75)).unwrap();
        let m = 10_000;
        let var = (0..m).map(|s| gen.sample_values(s)[1].powi(2)).sum::<f64>() / m as f64;
        assert!((var - 1.0).abs() < 0.05, "var = {var}");
    }

    #[test]
    fn stationary_increments_exact() {
        let n = 16;
        let times = uniform_times(n, 1.0);
        let gen = ExactFbm::new(&times, h(0.75)).unwrap();
        let m = 10_000;
        let lag = 2;
        let mut acc = vec![0.0; n + 1 - lag];
        for seed in 0..m {
            let v = gen.sample_values(seed);
            for (i, a) in acc.iter_mut().enumerate() {
                *a += (v[i + lag] - v[i]).powi(2);
            }
        }
        let vars: Vec<f64> = acc.iter().map(|a| a / m as f64).collect();
        let mean = vars.iter().sum::<f64>() / vars.len() as f64;
        let dev = vars.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
        assert!(dev < 0.1 * mean, "max deviation {dev} vs mean {mean}");
    }

    #[test]
    fn hurst_estimator_edges() {
        let times = uniform_times(63, 1.0);
        let mut p = generate_exact(&times, h(0.5), 0).unwrap();
        p.values = times.clone();
        let est = estimate_hurst(&p, &[1, 2, 4, 8]).unwrap();
        assert!((est.hurst - 1.0).abs() < 1e-9);
        assert!(est.warning.is_some());

        assert!(estimate_hurst(&p, &[1, 2]).is_err());
        assert!(estimate_hurst(&p, &[1, 2, 32]).is_err());
        assert!(estimate_hurst(&p, &[0, 1, 2]).is_err());
        p.values = vec![0.0; times.len()];
        assert!(estimate_hurst(&p, &[1, 2, 4]).is_err());
    }

    #[test]
    fn hurst_estimator_recovers_exact_paths() {
        let times = uniform_times(4095, 1.0);
        let lags = [1, 2, 4, 8, 16, 32, 64];
        for (hv, lo, hi) in [(0.75, 0.70, 0.80), (0.5, 0.45, 0.55)] {
            let gen = ExactFbm::new(&times, h(hv)).unwrap();
            let mean = (0..100)
                .map(|s| estimate_hurst(&gen.sample(s), &lags).unwrap().hurst)
                .sum::<f64>()
                / 100.0;
            assert!(mean > lo && mean < hi, "H = {hv}: mean estimate {mean}");
        }
    }
}
