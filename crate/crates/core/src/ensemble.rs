//! Seeded collections of realizations and their pointwise statistics.
//!
//! Reductions always run over members in index order, so statistics are
//! bit-stable no matter how the members were scheduled.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::FieldSeries;

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleRun {
    pub members: Vec<FieldSeries>,
    pub seeds: Vec<u64>,
}

impl EnsembleRun {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn mean(&self) -> Result<FieldSeries> {
        mean_field(&self.members)
    }

    /// Pointwise sample standard deviation (`1/(M−1)` normalization).
    pub fn std_dev(&self) -> Result<FieldSeries> {
        std_field(&self.members)
    }
}

/// Runs `solve(k)` for `k in 0..n` in parallel and returns results in index order.
pub(crate) fn run_members<T, F>(n: usize, solve: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    (0..n)
        .into_par_iter()
        .map(|k| solve(k).map_err(|e| e.for_member(k)))
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

pub(crate) fn check_members(fields: &[FieldSeries], min: usize) -> Result<()> {
    if fields.len() < min {
        return Err(Error::invalid(format!(
            "need at least {min} ensemble members, got {}",
            fields.len()
        )));
    }
    for (k, f) in fields.iter().enumerate().skip(1) {
        f.check_same_axes(&fields[0]).map_err(|e| e.for_member(k))?;
    }
    Ok(())
}

/// Pointwise arithmetic mean, accumulated in member order as offsets from
/// the first member (identical members give that member back exactly).
pub fn mean_field(fields: &[FieldSeries]) -> Result<FieldSeries> {
    check_members(fields, 1)?;
    let first = &fields[0];
    let mut acc = vec![0.0; first.data().len()];
    for f in &fields[1..] {
        for ((a, v), v0) in acc.iter_mut().zip(f.data()).zip(first.data()) {
            *a += v - v0;
        }
    }
    let m = fields.len() as f64;
    for (a, v0) in acc.iter_mut().zip(first.data()) {
        *a = v0 + *a / m;
    }
    FieldSeries::new(*first.grid(), first.dt(), first.n_times(), acc)
}

pub fn std_field(fields: &[FieldSeries]) -> Result<FieldSeries> {
    check_members(fields, 2)?;
    let mean = mean_field(fields)?;
    let mut acc = vec![0.0; mean.data().len()];
    for f in fields {
        for ((a, v), m) in acc.iter_mut().zip(f.data()).zip(mean.data()) {
            *a += (v - m) * (v - m);
        }
    }
    let denom = (fields.len() - 1) as f64;
    FieldSeries::new(
        *mean.grid(),
        mean.dt(),
        mean.n_times(),
        acc.into_iter().map(|a| (a / denom).sqrt()).collect(),
    )
}
