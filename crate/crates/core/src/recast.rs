//! Contrast transforms that remove the group means, and the one-parameter
//! MLE of `σ²` on the resulting mean-zero variables.
//!
//! Row `j` (1-based, `j < m`) of the Helmert basis maps group `t` to
//! `Y_jt = (Σ_{i≤j} x_it − j·x_{j+1,t}) / √(j(j+1))`. The rows are orthonormal
//! and orthogonal to the constant vector, so `Σ_j Y_jt²` is the within-group
//! sum of squares and each `Y_jt ~ NIID(0, σ²)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::PanelData;

/// `(m−1) × n` contrasts, stored group-major (`values[t·(m−1) + j]`).
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastSeries {
    m: usize,
    n: usize,
    values: Vec<f64>,
}

impl ContrastSeries {
    pub fn new(m: usize, n: usize, values: Vec<f64>) -> Result<Self> {
        if m < 2 {
            return Err(Error::TooFewReplicates(m));
        }
        if values.len() != (m - 1) * n {
            return Err(Error::Dimension(format!(
                "{} contrasts for m={m}, n={n}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("contrast value".into()));
        }
        Ok(ContrastSeries { m, n, values })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rows(&self) -> usize {
        self.m - 1
    }

    /// Contrast `j` (zero-based) of group `t` (zero-based).
    pub fn get(&self, j: usize, t: usize) -> f64 {
        self.values[t * (self.m - 1) + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecastEstimate {
    pub sigma2_hat: f64,
    pub n_eff: usize,
    /// `2·σ̂⁴ / n_eff`.
    pub crlb: f64,
    pub degenerate: bool,
}

/// `Y_t = (x_1t − x_2t)/√2`; only defined for two replicates.
pub fn difference_transform(data: &PanelData) -> Result<ContrastSeries> {
    if data.m() != 2 {
        return Err(Error::RequiresTwoReplicates(data.m()));
    }
    let norm = 2.0f64.sqrt();
    let values = data.groups().map(|g| (g[0] - g[1]) / norm).collect();
    Ok(ContrastSeries {
        m: 2,
        n: data.n(),
        values,
    })
}

/// The `m−1` orthonormal Helmert contrasts of every group.
pub fn helmert_transform(data: &PanelData) -> Result<ContrastSeries> {
    let m = data.m();
    if m < 2 {
        return Err(Error::TooFewReplicates(m));
    }
    let norms: Vec<f64> = (1..m).map(|j| ((j * (j + 1)) as f64).sqrt()).collect();
    let mut values = Vec::with_capacity((m - 1) * data.n());
    // Rows annihilate constants, so work on offsets from the first replicate;
    // close replicates then subtract exactly and the head sums stay small.
    for g in data.groups() {
        let origin = g[0];
        let mut head = 0.0;
        for (j, norm) in (1..m).zip(&norms) {
            head += g[j - 1] - origin;
            values.push((head - j as f64 * (g[j] - origin)) / norm);
        }
    }
    Ok(ContrastSeries {
        m,
        n: data.n(),
        values,
    })
}

/// Rows of the `(m−1) × m` Helmert contrast matrix.
pub fn helmert_matrix(m: usize) -> Vec<Vec<f64>> {
    (1..m)
        .map(|j| {
            let norm = ((j * (j + 1)) as f64).sqrt();
            (0..m)
                .map(|i| match i.cmp(&j) {
                    std::cmp::Ordering::Less => 1.0 / norm,
                    std::cmp::Ordering::Equal => -(j as f64) / norm,
                    std::cmp::Ordering::Greater => 0.0,
                })
                .collect()
        })
        .collect()
}

/// `σ̂² = (1/n_eff)·Σ Y²` with `n_eff = (m−1)·n`.
pub fn sigma2_mle_recast(series: &ContrastSeries) -> Result<RecastEstimate> {
    if series.is_empty() {
        return Err(Error::EmptySeries);
    }
    let n_eff = series.len();
    let sigma2_hat = series.values.iter().map(|y| y * y).sum::<f64>() / n_eff as f64;
    Ok(RecastEstimate {
        sigma2_hat,
        n_eff,
        crlb: 2.0 * sigma2_hat * sigma2_hat / n_eff as f64,
        degenerate: sigma2_hat == 0.0,
    })
}

/// Fisher information for `σ²` carried by `n_eff` NIID(0, σ²) variables.
pub fn fisher_information_sigma2(sigma2: f64, n_eff: usize) -> Result<f64> {
    if !(sigma2.is_finite() && sigma2 > 0.0) {
        return Err(Error::NonPositiveVariance(sigma2));
    }
    if n_eff == 0 {
        return Err(Error::EmptySeries);
    }
    Ok(n_eff as f64 / (2.0 * sigma2 * sigma2))
}

/// Recast estimate straight from a panel via the Helmert contrasts.
pub fn recast_sigma2(data: &PanelData) -> Result<RecastEstimate> {
    sigma2_mle_recast(&helmert_transform(data)?)
}
