//! The naive full-parameter likelihood over `(μ_1, …, μ_n, σ²)`.
//!
//! With `N = m·n` observations and `W(μ) = Σ_t Σ_i (x_it − μ_t)²` the kernel is
//! `ln L = −(N/2)·ln σ² − W/(2σ²)`, which is `−n·ln σ² − W/(2σ²)` at `m = 2`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::PanelData;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Relative tolerance used to decide whether a point is stationary.
pub const STATIONARY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaFull {
    pub mu_hat: Vec<f64>,
    pub sigma2: f64,
}

impl ThetaFull {
    pub fn new(mu_hat: Vec<f64>, sigma2: f64) -> Self {
        ThetaFull { mu_hat, sigma2 }
    }

    /// Parameters as a flat vector ordered `(μ_1, …, μ_n, σ²)`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.mu_hat.clone();
        v.push(self.sigma2);
        v
    }

    pub fn from_slice(params: &[f64]) -> Self {
        let (sigma2, mu) = params.split_last().expect("at least sigma2");
        ThetaFull::new(mu.to_vec(), *sigma2)
    }

    pub fn len(&self) -> usize {
        self.mu_hat.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GroupStats {
    /// Group sample mean.
    pub mu_hat_t: f64,
    /// `(1/m)·Σ_i (x_it − μ̂_t)²`.
    pub s2_t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NaiveMle {
    pub theta: ThetaFull,
    pub group_stats: Vec<GroupStats>,
    /// `σ̂² = 0`: every group has identical replicates and the likelihood is unbounded.
    pub degenerate: bool,
}

fn check(theta: &ThetaFull, data: &PanelData) -> Result<()> {
    if theta.mu_hat.len() != data.n() {
        return Err(Error::Dimension(format!(
            "theta has {} means, panel has {} groups",
            theta.mu_hat.len(),
            data.n()
        )));
    }
    if !(theta.sigma2.is_finite() && theta.sigma2 > 0.0) {
        return Err(Error::NonPositiveVariance(theta.sigma2));
    }
    Ok(())
}

fn observation_count(data: &PanelData) -> f64 {
    (data.m() * data.n()) as f64
}

/// `W(μ) = Σ_t Σ_i (x_it − μ_t)²`.
pub fn residual_sum_of_squares(mu: &[f64], data: &PanelData) -> f64 {
    data.groups()
        .zip(mu)
        .map(|(g, &mu_t)| g.iter().map(|x| (x - mu_t).powi(2)).sum::<f64>())
        .sum()
}

pub fn log_likelihood_kernel(theta: &ThetaFull, data: &PanelData) -> Result<f64> {
    check(theta, data)?;
    let w = residual_sum_of_squares(&theta.mu_hat, data);
    Ok(-0.5 * observation_count(data) * theta.sigma2.ln() - w / (2.0 * theta.sigma2))
}

/// Kernel plus the dropped `−(N/2)·ln(2π)`: the exact joint Normal log-density.
pub fn log_density_full(theta: &ThetaFull, data: &PanelData) -> Result<f64> {
    Ok(log_likelihood_kernel(theta, data)? - 0.5 * observation_count(data) * LN_2PI)
}

/// Gradient of the kernel ordered `(μ_1, …, μ_n, σ²)`.
pub fn score(theta: &ThetaFull, data: &PanelData) -> Result<Vec<f64>> {
    check(theta, data)?;
    let s = theta.sigma2;
    let mut grad = Vec::with_capacity(theta.len());
    let mut w = 0.0;
    for (g, &mu_t) in data.groups().zip(&theta.mu_hat) {
        let mut dev = 0.0;
        for &x in g {
            dev += x - mu_t;
            w += (x - mu_t).powi(2);
        }
        grad.push(dev / s);
    }
    grad.push(-0.5 * observation_count(data) / s + w / (2.0 * s * s));
    Ok(grad)
}

/// Exact Hessian of the kernel in block form.
///
/// The `μ` block is `mu_diag·I`, `cross[t] = ∂²/∂σ²∂μ_t`, and `sigma_sigma` is
/// `∂²/∂(σ²)²`. No other entries are non-zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HessianBlocks {
    pub mu_diag: f64,
    pub cross: Vec<f64>,
    pub sigma_sigma: f64,
}

pub fn hessian_blocks(theta: &ThetaFull, data: &PanelData) -> Result<HessianBlocks> {
    check(theta, data)?;
    let s = theta.sigma2;
    let mut w = 0.0;
    let cross = data
        .groups()
        .zip(&theta.mu_hat)
        .map(|(g, &mu_t)| {
            let mut dev = 0.0;
            for &x in g {
                dev += x - mu_t;
                w += (x - mu_t).powi(2);
            }
            -dev / (s * s)
        })
        .collect();
    Ok(HessianBlocks {
        mu_diag: -(data.m() as f64) / s,
        cross,
        sigma_sigma: 0.5 * observation_count(data) / (s * s) - w / (s * s * s),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SecondOrderReport {
    /// `∂²/∂μ_t²`, identical for every t: `−m/σ²`.
    pub d2_mu: f64,
    /// Per-group `∂²/∂σ²∂μ_t`.
    pub cross: Vec<f64>,
    pub max_abs_cross: f64,
    /// `∂²/∂(σ²)²`; `−mn/(2σ̂⁴)` at the MLE.
    pub d2_sigma2: f64,
    /// Smallest per-group `d2_mu·d2_sigma2 − cross_t²`.
    pub min_determinant: f64,
    /// The point satisfies the first-order conditions to `STATIONARY_TOL`.
    pub stationary: bool,
    /// Diagonal terms negative and every 2×2 determinant positive.
    pub is_maximum: bool,
}

/// Evaluates the second-order conditions at `theta`, which should be the MLE.
///
/// A point that is not stationary is reported with `stationary = false`
/// rather than rejected.
pub fn second_order_check(theta: &ThetaFull, data: &PanelData) -> Result<SecondOrderReport> {
    let h = hessian_blocks(theta, data)?;
    let s = theta.sigma2;

    // First-order conditions, each scaled by the magnitude of its own terms.
    let mut stationary = true;
    let mut w = 0.0;
    for (g, &mu_t) in data.groups().zip(&theta.mu_hat) {
        let dev: f64 = g.iter().map(|x| x - mu_t).sum();
        let scale = g
            .iter()
            .map(|x| x.abs())
            .sum::<f64>()
            .max(mu_t.abs())
            .max(1.0);
        if dev.abs() > STATIONARY_TOL * scale {
            stationary = false;
        }
        w += g.iter().map(|x| (x - mu_t).powi(2)).sum::<f64>();
    }
    let n_obs = observation_count(data);
    if (w / (n_obs * s) - 1.0).abs() > STATIONARY_TOL {
        stationary = false;
    }

    let max_abs_cross = h.cross.iter().fold(0.0f64, |a, c| a.max(c.abs()));
    let min_determinant = h
        .cross
        .iter()
        .map(|c| h.mu_diag * h.sigma_sigma - c * c)
        .fold(f64::INFINITY, f64::min);
    let is_maximum = h.mu_diag < 0.0 && h.sigma_sigma < 0.0 && min_determinant > 0.0;
    Ok(SecondOrderReport {
        d2_mu: h.mu_diag,
        cross: h.cross,
        max_abs_cross,
        d2_sigma2: h.sigma_sigma,
        min_determinant,
        stationary,
        is_maximum,
    })
}

/// Closed-form naive MLE: group means, and `σ̂² = (1/n)·Σ_t s_t²`.
pub fn mle_closed_form(data: &PanelData) -> NaiveMle {
    let m = data.m() as f64;
    let group_stats: Vec<GroupStats> = data
        .groups()
        .map(|g| {
            let mu_hat_t = g.iter().sum::<f64>() / m;
            let s2_t = g.iter().map(|x| (x - mu_hat_t).powi(2)).sum::<f64>() / m;
            GroupStats { mu_hat_t, s2_t }
        })
        .collect();
    let sigma2 = group_stats.iter().map(|g| g.s2_t).sum::<f64>() / data.n() as f64;
    NaiveMle {
        theta: ThetaFull::new(group_stats.iter().map(|g| g.mu_hat_t).collect(), sigma2),
        group_stats,
        degenerate: sigma2 == 0.0,
    }
}

/// Per-group within sum of squares `Σ_i (x_it − x̄_t)²`.
pub fn within_group_ss(data: &PanelData) -> Vec<f64> {
    let m = data.m() as f64;
    data.groups()
        .map(|g| {
            let mean = g.iter().sum::<f64>() / m;
            g.iter().map(|x| (x - mean).powi(2)).sum()
        })
        .collect()
}
