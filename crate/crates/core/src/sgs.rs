//! Subgrid-scale residual extraction and closure estimation.
//!
//! For a fine-mesh realization `u`, the residual is `R = ū³ − filter(u³)`
//! with `ū = filter(u)`. Expectations are ensemble averages over
//! realizations. The closure is
//!
//! ```text
//! R ≈ f(ū) + σ(x) dB^H/dt,   f(ū) = a0 + a1 ū + a2 ū² + a3 ū³
//! ```
//!
//! with the cubic fitted by quadrature-weighted least squares against the
//! ensemble-mean residual, and
//! `σ(x) = T^{−H} sqrt(E[(∫₀ᵀ (R − E R) dt)²])`.

use nalgebra::{DMatrix, DVector, Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::ensemble::{check_members, mean_field, run_members};
use crate::error::{Error, Result};
use crate::fbm::{estimate_hurst, FbmPath, GeneratorKind, HurstEstimate, HurstParam};
use crate::filter::{FilterSpec, GaussianFilter};
use crate::grid::{restrict_profile, trapezoid_weights, FieldSeries};

/// Subgrid-scale residual of one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct SgsField(pub FieldSeries);

impl SgsField {
    pub fn field(&self) -> &FieldSeries {
        &self.0
    }

    pub fn into_field(self) -> FieldSeries {
        self.0
    }
}

/// `(ū, R)` for one member using a prebuilt filter.
pub fn extract_sgs_with(filter: &GaussianFilter, member: &FieldSeries) -> Result<(FieldSeries, SgsField)> {
    let u_bar = filter.apply(member)?;
    let cubed = member.map(|v| v * v * v)?;
    let cubed_bar = filter.apply(&cubed)?;
    let r = u_bar.zip_map(&cubed_bar, |ub, c| ub * ub * ub - c)?;
    Ok((u_bar, SgsField(r)))
}

pub fn extract_sgs(member: &FieldSeries, spec: &FilterSpec) -> Result<SgsField> {
    let filter = GaussianFilter::new(*member.grid(), *spec)?;
    Ok(extract_sgs_with(&filter, member)?.1)
}

/// Pointwise mean over members; needs at least two.
pub fn ensemble_mean(fields: &[SgsField]) -> Result<FieldSeries> {
    let plain: Vec<&FieldSeries> = fields.iter().map(SgsField::field).collect();
    check_refs(&plain, 2)?;
    mean_field(&fields.iter().map(|f| f.0.clone()).collect::<Vec<_>>())
}

fn check_refs(fields: &[&FieldSeries], min: usize) -> Result<()> {
    if fields.len() < min {
        return Err(Error::invalid(format!(
            "need at least {min} ensemble members, got {}",
            fields.len()
        )));
    }
    for (k, f) in fields.iter().enumerate().skip(1) {
        f.check_same_axes(fields[0]).map_err(|e| e.for_member(k))?;
    }
    Ok(())
}

/// Space-time trapezoid weights, row-major like the field data.
fn spacetime_weights(field: &FieldSeries) -> Vec<f64> {
    let wx = field.grid().trapezoid_weights();
    let wt = if field.n_times() > 1 {
        trapezoid_weights(field.n_times(), field.dt())
    } else {
        vec![1.0]
    };
    wt.iter().flat_map(|t| wx.iter().map(move |x| t * x)).collect()
}

pub fn eval_cubic(a: &[f64; 4], u: f64) -> f64 {
    a[0] + a[1] * u + a[2] * u * u + a[3] * u * u * u
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubicFit {
    pub coeffs: [f64; 4],
    /// Numerical rank of the weighted design.
    pub rank: usize,
    pub rank_deficient: bool,
    /// `sqrt(Σ w (f(ū) − E R)²)`, the quadrature-weighted residual.
    pub residual_norm: f64,
    pub n_samples: usize,
}

/// Quadrature-weighted residual `sqrt(∫∫ (f(ū) − target)² dx dt)`.
pub fn weighted_residual(coeffs: &[f64; 4], u_bar: &FieldSeries, target: &FieldSeries) -> Result<f64> {
    u_bar.check_same_axes(target)?;
    let w = spacetime_weights(target);
    Ok(u_bar
        .data()
        .iter()
        .zip(target.data())
        .zip(&w)
        .map(|((&u, &r), &w)| w * (eval_cubic(coeffs, u) - r).powi(2))
        .sum::<f64>()
        .sqrt())
}

const RANK_TOL: f64 = 1e-10;

/// Least-squares cubic `f(ū)` against `mean_r`, with `ū` the ensemble mean of
/// `u_bar_members`. Householder QR of the weighted design followed by an SVD
/// of the 4×4 triangular factor gives the minimum-norm solution when the
/// design is rank deficient.
pub fn fit_cubic_mean(u_bar_members: &[FieldSeries], mean_r: &FieldSeries) -> Result<CubicFit> {
    if u_bar_members.is_empty() {
        return Err(Error::invalid("cubic fit needs at least one filtered member"));
    }
    check_members(u_bar_members, 1)?;
    u_bar_members[0].check_same_axes(mean_r)?;
    let u_bar = mean_field(u_bar_members)?;
    fit_cubic_to(&u_bar, mean_r)
}

fn fit_cubic_to(u_bar: &FieldSeries, target: &FieldSeries) -> Result<CubicFit> {
    let w = spacetime_weights(target);
    let m = w.len();
    if m < 4 {
        return Err(Error::invalid("cubic fit needs at least 4 samples"));
    }
    let mut design = DMatrix::<f64>::zeros(m, 4);
    let mut rhs = DVector::<f64>::zeros(m);
    for (k, ((&u, &r), &wk)) in u_bar.data().iter().zip(target.data()).zip(&w).enumerate() {
        let s = wk.sqrt();
        design[(k, 0)] = s;
        design[(k, 1)] = s * u;
        design[(k, 2)] = s * u * u;
        design[(k, 3)] = s * u * u * u;
        rhs[k] = s * r;
    }
    let qr = design.qr();
    qr.q_tr_mul(&mut rhs);
    let r: Matrix4<f64> = qr.r().fixed_view::<4, 4>(0, 0).into_owned();
    let qtb = Vector4::new(rhs[0], rhs[1], rhs[2], rhs[3]);

    let svd = r.svd(true, true);
    let s_max = svd.singular_values.max();
    let cutoff = RANK_TOL * s_max;
    let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
    let x = if s_max > 0.0 {
        svd.solve(&qtb, cutoff)
            .map_err(|e| Error::Numerical(format!("cubic fit solve failed: {e}")))?
    } else {
        Vector4::zeros()
    };
    let coeffs = [x[0], x[1], x[2], x[3]];
    if coeffs.iter().any(|c| !c.is_finite()) {
        return Err(Error::Numerical("cubic fit produced non-finite coefficients".into()));
    }
    let rank_deficient = rank < 4;
    if rank_deficient {
        log::warn!("cubic closure fit is rank deficient (rank {rank}); using the minimum-norm solution");
    }
    Ok(CubicFit {
        coeffs,
        rank,
        rank_deficient,
        residual_norm: weighted_residual(&coeffs, u_bar, target)?,
        n_samples: m,
    })
}

/// Per point, the mean over members of `I_k(x)²` with
/// `I_k(x) = ∫₀ᵀ (F_k − mean)(x, t) dt` (trapezoid).
fn mean_square_integrated_fluctuation(members: &[&FieldSeries], mean: &FieldSeries) -> Result<Vec<f64>> {
    mean.check_same_axes(members[0])?;
    if mean.n_times() < 2 {
        return Err(Error::invalid("estimators need at least two time samples"));
    }
    let wt = trapezoid_weights(mean.n_times(), mean.dt());
    let p = mean.n_points();
    let mut acc = vec![0.0; p];
    let mut integral = vec![0.0; p];
    for member in members {
        integral.iter_mut().for_each(|v| *v = 0.0);
        for ((row, mrow), w) in member.rows().zip(mean.rows()).zip(&wt) {
            for ((i, v), m) in integral.iter_mut().zip(row).zip(mrow) {
                *i += w * (v - m);
            }
        }
        for (a, i) in acc.iter_mut().zip(&integral) {
            *a += i * i;
        }
    }
    let m = members.len() as f64;
    Ok(acc.into_iter().map(|a| a / m).collect())
}

/// `σ(x) = T^{−H} sqrt(mean_k (∫₀ᵀ (R_k − E R) dt)²)` with `T` the last time.
pub fn estimate_sigma_profile(members: &[SgsField], mean_r: &FieldSeries, hurst: HurstParam) -> Result<Vec<f64>> {
    let refs: Vec<&FieldSeries> = members.iter().map(SgsField::field).collect();
    check_refs(&refs, 2)?;
    let ms = mean_square_integrated_fluctuation(&refs, mean_r)?;
    let scale = mean_r.t_end().powf(hurst.value());
    Ok(ms.into_iter().map(|v| v.sqrt() / scale).collect())
}

/// Intensity of multiplicative white noise `F = E F + σ ũ dB/dt` from the
/// Itô isometry: `σ² = E(∫₀ᵀ (F − E F) dt)² / E ∫₀ᵀ ũ² dt`.
pub fn estimate_sigma_model_uncertainty(
    f_members: &[FieldSeries],
    u_tilde_members: &[FieldSeries],
) -> Result<Vec<f64>> {
    if f_members.len() != u_tilde_members.len() {
        return Err(Error::invalid(format!(
            "{} model-error members but {} state members",
            f_members.len(),
            u_tilde_members.len()
        )));
    }
    check_members(f_members, 2)?;
    check_members(u_tilde_members, 2)?;
    f_members[0].check_same_axes(&u_tilde_members[0])?;
    let mean_f = mean_field(f_members)?;
    let refs: Vec<&FieldSeries> = f_members.iter().collect();
    let numerator = mean_square_integrated_fluctuation(&refs, &mean_f)?;

    let p = mean_f.n_points();
    let mut denominator = vec![0.0; p];
    for u in u_tilde_members {
        let sq = u.map(|v| v * v)?;
        for (d, v) in denominator.iter_mut().zip(sq.time_integral()?) {
            *d += v;
        }
    }
    let m = u_tilde_members.len() as f64;
    let grid = *mean_f.grid();
    numerator
        .iter()
        .zip(&denominator)
        .enumerate()
        .map(|(i, (&num, &den))| {
            let den = den / m;
            if den > 0.0 {
                Ok((num / den).sqrt())
            } else {
                Err(Error::DegenerateState {
                    index: i,
                    x: grid.x(i),
                    reason: "state has zero mean-square time integral".into(),
                })
            }
        })
        .collect()
}

/// Fitted stochastic closure `f(ū) + σ(x) dB^H/dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct SgsClosure {
    pub cubic_coeffs: [f64; 4],
    pub sigma_profile: Vec<f64>,
    pub hurst: HurstParam,
    pub horizon: f64,
}

impl SgsClosure {
    /// Zero drift and zero noise on `n_points`.
    pub fn zero(n_points: usize, hurst: HurstParam, horizon: f64) -> Self {
        Self {
            cubic_coeffs: [0.0; 4],
            sigma_profile: vec![0.0; n_points],
            hurst,
            horizon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cubic_coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("closure coefficients must be finite"));
        }
        if self.sigma_profile.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::invalid("closure intensity must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn drift(&self, u: f64) -> f64 {
        eval_cubic(&self.cubic_coeffs, u)
    }

    pub fn is_zero(&self) -> bool {
        self.cubic_coeffs.iter().all(|&c| c == 0.0) && self.sigma_profile.iter().all(|&s| s == 0.0)
    }

    /// Intensity profile restricted to a grid `factor` times coarser.
    pub fn restrict(&self, factor: usize) -> Result<Self> {
        Ok(Self {
            sigma_profile: restrict_profile(&self.sigma_profile, factor)?,
            ..self.clone()
        })
    }

    /// This closure on a grid of `n_points`, restricting if it was fitted on a
    /// finer nested grid.
    pub fn on_grid(&self, n_points: usize) -> Result<Self> {
        let fine = self.sigma_profile.len();
        if fine == n_points {
            return Ok(self.clone());
        }
        if n_points >= 2 && fine > n_points && (fine - 1).is_multiple_of(n_points - 1) {
            return self.restrict((fine - 1) / (n_points - 1));
        }
        Err(Error::invalid(format!(
            "closure intensity has {fine} points and cannot be mapped onto {n_points}"
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosureDiagnostics {
    pub fit_residual_norm: f64,
    /// Residual relative to the weighted norm of the mean residual field.
    pub fit_relative_residual: f64,
    pub fit_rank: usize,
    pub fit_rank_deficient: bool,
    pub fit_samples: usize,
    /// Members entering the σ(x) estimate at every grid point.
    pub estimator_members: usize,
    pub sigma_max: f64,
    pub sigma_mean: f64,
    /// Hurst estimate of the time-integrated, space-averaged fluctuation of
    /// the residual, averaged over members. Informational only.
    pub hurst_diagnostic: Option<f64>,
}

/// Closure JSON exchanged between `fit` and `solve-les`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosureFile {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub sigma: Vec<f64>,
    #[serde(rename = "H")]
    pub hurst: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<ClosureDiagnostics>,
}

impl ClosureFile {
    pub fn new(closure: &SgsClosure, diagnostics: Option<ClosureDiagnostics>) -> Self {
        let [a0, a1, a2, a3] = closure.cubic_coeffs;
        Self {
            a0,
            a1,
            a2,
            a3,
            sigma: closure.sigma_profile.clone(),
            hurst: closure.hurst.value(),
            horizon: closure.horizon,
            diagnostics,
        }
    }

    pub fn closure(&self) -> Result<SgsClosure> {
        let c = SgsClosure {
            cubic_coeffs: [self.a0, self.a1, self.a2, self.a3],
            sigma_profile: self.sigma.clone(),
            hurst: HurstParam::new(self.hurst)?,
            horizon: self.horizon,
        };
        c.validate()?;
        Ok(c)
    }
}

/// Intermediate products of closure estimation.
#[derive(Debug, Clone)]
pub struct ClosureEstimate {
    pub closure: SgsClosure,
    pub diagnostics: ClosureDiagnostics,
    pub fit: CubicFit,
    pub u_bar_members: Vec<FieldSeries>,
    pub sgs_members: Vec<SgsField>,
    pub mean_r: FieldSeries,
}

/// Filter every member, extract residuals, and estimate `f` and `σ(x)`.
pub fn build_closure(members: &[FieldSeries], spec: &FilterSpec, hurst: HurstParam) -> Result<ClosureEstimate> {
    check_members(members, 2)?;
    let filter = GaussianFilter::new(*members[0].grid(), *spec)?;
    let pairs = run_members(members.len(), |k| extract_sgs_with(&filter, &members[k]))?;
    let (u_bar_members, sgs_members): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    closure_from_residuals(u_bar_members, sgs_members, hurst)
}

/// Closure estimation from already extracted `(ū_k, R_k)` pairs.
pub fn closure_from_residuals(
    u_bar_members: Vec<FieldSeries>,
    sgs_members: Vec<SgsField>,
    hurst: HurstParam,
) -> Result<ClosureEstimate> {
    let mean_r = ensemble_mean(&sgs_members)?;
    let fit = fit_cubic_mean(&u_bar_members, &mean_r)?;
    let sigma = estimate_sigma_profile(&sgs_members, &mean_r, hurst)?;

    let target_norm = weighted_residual(&[0.0; 4], &mean_r.map(|_| 0.0)?, &mean_r)?;
    let diagnostics = ClosureDiagnostics {
        fit_residual_norm: fit.residual_norm,
        fit_relative_residual: if target_norm > 0.0 {
            fit.residual_norm / target_norm
        } else {
            0.0
        },
        fit_rank: fit.rank,
        fit_rank_deficient: fit.rank_deficient,
        fit_samples: fit.n_samples,
        estimator_members: sgs_members.len(),
        sigma_max: sigma.iter().copied().fold(0.0, f64::max),
        sigma_mean: sigma.iter().sum::<f64>() / sigma.len() as f64,
        hurst_diagnostic: fluctuation_hurst(&sgs_members, &mean_r, hurst),
    };
    let closure = SgsClosure {
        cubic_coeffs: fit.coeffs,
        sigma_profile: sigma,
        hurst,
        horizon: mean_r.t_end(),
    };
    Ok(ClosureEstimate {
        closure,
        diagnostics,
        fit,
        u_bar_members,
        sgs_members,
        mean_r,
    })
}

fn fluctuation_hurst(members: &[SgsField], mean_r: &FieldSeries, hurst: HurstParam) -> Option<f64> {
    let n = mean_r.n_times();
    let lags: Vec<usize> = [1, 2, 4, 8, 16].into_iter().filter(|&l| 4 * l <= n).collect();
    if lags.len() < 3 {
        return None;
    }
    let wx = mean_r.grid().trapezoid_weights();
    let len: f64 = wx.iter().sum();
    let dt = mean_r.dt();
    let mut total = 0.0;
    let mut count = 0usize;
    for m in members {
        let avg: Vec<f64> = m
            .field()
            .rows()
            .zip(mean_r.rows())
            .map(|(r, mr)| r.iter().zip(mr).zip(&wx).map(|((a, b), w)| w * (a - b)).sum::<f64>() / len)
            .collect();
        let mut path = Vec::with_capacity(n);
        path.push(0.0);
        for w in avg.windows(2) {
            path.push(path.last().unwrap() + 0.5 * dt * (w[0] + w[1]));
        }
        let p = FbmPath {
            times: mean_r.times(),
            values: path,
            hurst,
            seed: 0,
            kind: GeneratorKind::Exact,
        };
        if let Ok(HurstEstimate { hurst, .. }) = estimate_hurst(&p, &lags) {
            total += hurst;
            count += 1;
        }
    }
    (count > 0).then(|| total / count as f64)
}
