//! Damped Newton ascent on the naive kernel, exploiting the arrow-shaped
//! Hessian (diagonal `μ` block, one `σ²` row and column) for O(n) steps.
//!
//! When the Hessian is not negative definite (far from the optimum, `σ²` well
//! above `2W/N`), the step falls back to Fisher scoring, whose curvature
//! `diag(−m/σ², −N/(2σ⁴))` is always negative. `σ²` stays in its natural
//! coordinate: steps are clipped to stay above `min_sigma2`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::likelihood::{self, hessian_blocks, score, ThetaFull};
use crate::model::PanelData;
use crate::rng::NormalStream;

const ARMIJO: f64 = 1e-4;
const FRACTION_TO_BOUNDARY: f64 = 0.99;
const MAX_BACKTRACKS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimizerConfig {
    pub grad_tol: f64,
    pub max_iter: usize,
    pub step_shrink: f64,
    pub min_sigma2: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            grad_tol: 1e-9,
            max_iter: 200,
            step_shrink: 0.5,
            min_sigma2: 1e-12,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::OptimizerConfig(what.to_string()));
        if self.grad_tol.is_nan() || self.grad_tol <= 0.0 {
            return bad("grad_tol must be > 0");
        }
        if self.max_iter == 0 {
            return bad("max_iter must be > 0");
        }
        if !(self.step_shrink > 0.0 && self.step_shrink < 1.0) {
            return bad("step_shrink must lie in (0, 1)");
        }
        if self.min_sigma2.is_nan() || self.min_sigma2 <= 0.0 {
            return bad("min_sigma2 must be > 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIterations,
    /// `σ²` was driven onto the `min_sigma2` barrier.
    Boundary,
    /// No ascent step could be found along the search direction.
    Stalled,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizeResult {
    pub theta: ThetaFull,
    pub iterations: usize,
    pub converged: bool,
    pub final_grad_norm: f64,
    pub termination: Termination,
    /// Kernel value at the start and after every accepted step.
    pub kernel_trace: Vec<f64>,
    /// Kernel increase of every accepted step, computed without cancellation.
    pub increments: Vec<f64>,
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

/// Kernel difference `ℓ(μ + δ, s + Δs) − ℓ(μ, s)`, accurate when the step is small.
fn kernel_increment(
    data: &PanelData,
    theta: &ThetaFull,
    w: f64,
    mu_step: &[f64],
    sigma_step: f64,
) -> f64 {
    let m = data.m() as f64;
    let mut dw = 0.0;
    for ((g, &mu_t), &delta) in data.groups().zip(&theta.mu_hat).zip(mu_step) {
        let dev: f64 = g.iter().map(|x| x - mu_t).sum();
        dw += delta * (m * delta - 2.0 * dev);
    }
    let s = theta.sigma2;
    let s_new = s + sigma_step;
    let n_obs = (data.m() * data.n()) as f64;
    -0.5 * n_obs * (sigma_step / s).ln_1p() - (s * dw - w * sigma_step) / (2.0 * s * s_new)
}

/// Ascent direction: exact Newton where the Hessian is negative definite,
/// Fisher scoring otherwise.
fn search_direction(theta: &ThetaFull, data: &PanelData, grad: &[f64]) -> Result<(Vec<f64>, f64)> {
    let h = hessian_blocks(theta, data)?;
    let (g_mu, g_s) = grad.split_at(data.n());
    let g_s = g_s[0];
    let a = h.mu_diag;
    let c_dot_c: f64 = h.cross.iter().map(|c| c * c).sum();
    let c_dot_g: f64 = h.cross.iter().zip(g_mu).map(|(c, g)| c * g).sum();
    let schur = h.sigma_sigma - c_dot_c / a;
    if a < 0.0 && schur < 0.0 && schur.is_finite() {
        let d_s = (-g_s + c_dot_g / a) / schur;
        let d_mu = g_mu
            .iter()
            .zip(&h.cross)
            .map(|(g, c)| (-g - c * d_s) / a)
            .collect();
        Ok((d_mu, d_s))
    } else {
        let s = theta.sigma2;
        let n_obs = (data.m() * data.n()) as f64;
        let d_mu = g_mu.iter().map(|g| g * s / data.m() as f64).collect();
        Ok((d_mu, g_s * 2.0 * s * s / n_obs))
    }
}

/// Maximizes the naive kernel from `init`.
pub fn maximize_naive_likelihood(
    data: &PanelData,
    init: &ThetaFull,
    config: &OptimizerConfig,
) -> Result<OptimizeResult> {
    config.validate()?;
    if init.mu_hat.len() != data.n() {
        return Err(Error::Dimension(format!(
            "init has {} means, panel has {} groups",
            init.mu_hat.len(),
            data.n()
        )));
    }
    if !init.sigma2.is_finite() || init.sigma2 <= config.min_sigma2 {
        return Err(Error::OptimizerConfig(format!(
            "init sigma2 {} must exceed min_sigma2 {}",
            init.sigma2, config.min_sigma2
        )));
    }

    let mut theta = init.clone();
    let mut kernel = likelihood::log_likelihood_kernel(&theta, data)?;
    let mut kernel_trace = vec![kernel];
    let mut increments = Vec::new();
    let mut iterations = 0;

    let finish =
        |theta: ThetaFull, iterations, grad_norm: f64, termination, kernel_trace, increments| {
            OptimizeResult {
                theta,
                iterations,
                converged: termination == Termination::Converged,
                final_grad_norm: grad_norm,
                termination,
                kernel_trace,
                increments,
            }
        };

    loop {
        let grad = score(&theta, data)?;
        let grad_norm = sup_norm(&grad);
        if grad_norm <= config.grad_tol {
            return Ok(finish(
                theta,
                iterations,
                grad_norm,
                Termination::Converged,
                kernel_trace,
                increments,
            ));
        }
        if iterations >= config.max_iter {
            return Ok(finish(
                theta,
                iterations,
                grad_norm,
                Termination::MaxIterations,
                kernel_trace,
                increments,
            ));
        }

        let (d_mu, d_s) = search_direction(&theta, data, &grad)?;
        let slope: f64 = grad[..data.n()]
            .iter()
            .zip(&d_mu)
            .map(|(g, d)| g * d)
            .sum::<f64>()
            + grad[data.n()] * d_s;

        let mut alpha = 1.0;
        if d_s < 0.0 && theta.sigma2 + d_s <= config.min_sigma2 {
            alpha = FRACTION_TO_BOUNDARY * (theta.sigma2 - config.min_sigma2) / -d_s;
        }
        let w = likelihood::residual_sum_of_squares(&theta.mu_hat, data);
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let mu_step: Vec<f64> = d_mu.iter().map(|d| alpha * d).collect();
            let gain = kernel_increment(data, &theta, w, &mu_step, alpha * d_s);
            if gain.is_finite() && gain >= ARMIJO * alpha * slope {
                accepted = Some((mu_step, alpha * d_s, gain));
                break;
            }
            alpha *= config.step_shrink;
        }
        let Some((mu_step, sigma_step, gain)) = accepted else {
            return Ok(finish(
                theta,
                iterations,
                grad_norm,
                Termination::Stalled,
                kernel_trace,
                increments,
            ));
        };

        for (mu, d) in theta.mu_hat.iter_mut().zip(&mu_step) {
            *mu += d;
        }
        theta.sigma2 = (theta.sigma2 + sigma_step).max(config.min_sigma2);
        iterations += 1;
        kernel = likelihood::log_likelihood_kernel(&theta, data)?;
        kernel_trace.push(kernel);
        increments.push(gain);

        if theta.sigma2 <= 2.0 * config.min_sigma2 {
            let grad = score(&theta, data)?;
            if grad[data.n()] < 0.0 {
                let grad_norm = sup_norm(&grad);
                return Ok(finish(
                    theta,
                    iterations,
                    grad_norm,
                    Termination::Boundary,
                    kernel_trace,
                    increments,
                ));
            }
        }
    }
}

/// `μ_t ←` group means, `σ² ←` variance of all cells pooled (1 if that is zero).
pub fn default_init(data: &PanelData) -> ThetaFull {
    let m = data.m() as f64;
    let mu = data.groups().map(|g| g.iter().sum::<f64>() / m).collect();
    let all = data.values();
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    let var = all.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / all.len() as f64;
    ThetaFull::new(mu, if var > 0.0 { var } else { 1.0 })
}

/// Group means jittered by `N(0, mu_spread²)` and pooled variance scaled by a
/// log-uniform factor in `[1/sigma_factor, sigma_factor]`.
pub fn randomized_init(
    data: &PanelData,
    seed: u64,
    mu_spread: f64,
    sigma_factor: f64,
) -> ThetaFull {
    let mut stream = NormalStream::new(seed);
    let base = default_init(data);
    let mu = base
        .mu_hat
        .iter()
        .map(|mu| mu + mu_spread * stream.next_standard())
        .collect();
    // Normal quantile clipped to +-3 mapped onto [-1, 1].
    let u = (stream.next_standard() / 3.0).clamp(-1.0, 1.0);
    ThetaFull::new(mu, base.sigma2 * sigma_factor.powf(u))
}

/// Central-difference gradient of `f` at `theta`, coordinate by coordinate.
pub fn finite_diff_gradient<F>(f: F, theta: &ThetaFull, step: f64) -> Result<Vec<f64>>
where
    F: Fn(&ThetaFull) -> f64,
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::NonFinite(format!("finite-difference step {step}")));
    }
    let base = theta.to_vec();
    let mut probe = base.clone();
    let mut grad = Vec::with_capacity(base.len());
    for k in 0..base.len() {
        probe[k] = base[k] + step;
        let up = f(&ThetaFull::from_slice(&probe));
        probe[k] = base[k] - step;
        let down = f(&ThetaFull::from_slice(&probe));
        probe[k] = base[k];
        if !(up.is_finite() && down.is_finite()) {
            return Err(Error::NonFinite(format!(
                "objective at coordinate {k} +- {step}: {up}, {down}"
            )));
        }
        grad.push((up - down) / (2.0 * step));
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::mle_closed_form;
    use crate::model::{generate_panel, make_spec, MeanScheme};

    fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()))
    }

    #[test]
    fn starting_at_mle_is_already_stationary() {
        let spec = make_spec(2, 30, 1.0, &MeanScheme::default()).unwrap();
        let data = generate_panel(&spec, 11).unwrap();
        let mle = mle_closed_form(&data).theta;
        let res = maximize_naive_likelihood(&data, &mle, &OptimizerConfig::default()).unwrap();
        assert!(res.converged);
        assert!(res.iterations <= 1);
        assert!(sup_diff(&res.theta.to_vec(), &mle.to_vec()) < 1e-12);
    }

    #[test]
    fn offset_init_reaches_closed_form() {
        let spec = make_spec(2, 20, 1.0, &MeanScheme::default()).unwrap();
        let data = generate_panel(&spec, 12).unwrap();
        let mle = mle_closed_form(&data).theta;
        let init = ThetaFull::new(mle.mu_hat.iter().map(|m| m + 10.0).collect(), 4.0);
        let res = maximize_naive_likelihood(&data, &init, &OptimizerConfig::default()).unwrap();
        assert!(res.converged, "{res:?}");
        assert!(sup_diff(&res.theta.to_vec(), &mle.to_vec()) < 1e-8);
        assert!(res.increments.iter().all(|&g| g >= 0.0));
    }

    #[test]
    fn identical_replicates_hit_the_barrier() {
        let data = PanelData::from_groups(2, 3, vec![1.0, 1.0, 2.0, 2.0, -4.0, -4.0]).unwrap();
        let res =
            maximize_naive_likelihood(&data, &default_init(&data), &OptimizerConfig::default())
                .unwrap();
        assert_eq!(res.termination, Termination::Boundary);
        assert!(!res.converged);
        assert!(res.theta.sigma2 > OptimizerConfig::default().min_sigma2);
    }

    #[test]
    fn max_iter_reported() {
        let spec = make_spec(3, 10, 2.0, &MeanScheme::default()).unwrap();
        let data = generate_panel(&spec, 2).unwrap();
        let init = randomized_init(&data, 3, 50.0, 100.0);
        let cfg = OptimizerConfig {
            max_iter: 1,
            ..Default::default()
        };
        let res = maximize_naive_likelihood(&data, &init, &cfg).unwrap();
        assert_eq!(res.termination, Termination::MaxIterations);
        assert!(!res.converged);
        assert_eq!(res.iterations, 1);
    }

    #[test]
    fn config_and_init_validation() {
        let data = PanelData::from_groups(2, 1, vec![0.0, 1.0]).unwrap();
        let bad = OptimizerConfig {
            step_shrink: 1.0,
            ..Default::default()
        };
        assert!(maximize_naive_likelihood(&data, &default_init(&data), &bad).is_err());
        let init = ThetaFull::new(vec![0.0], 1e-13);
        assert!(maximize_naive_likelihood(&data, &init, &OptimizerConfig::default()).is_err());
        let init = ThetaFull::new(vec![0.0, 0.0], 1.0);
        assert!(matches!(
            maximize_naive_likelihood(&data, &init, &OptimizerConfig::default()),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let th = ThetaFull::new(vec![1.0, -2.0], 3.0);
        let g = finite_diff_gradient(|_| 7.5, &th, 1e-3).unwrap();
        assert_eq!(g, vec![0.0; 3]);
    }

    #[test]
    fn non_finite_objective_is_an_error() {
        let th = ThetaFull::new(vec![0.0], 1e-9);
        let data = PanelData::from_groups(2, 1, vec![0.0, 1.0]).unwrap();
        let f = |t: &ThetaFull| likelihood::log_likelihood_kernel(t, &data).unwrap_or(f64::NAN);
        assert!(matches!(
            finite_diff_gradient(f, &th, 1e-6),
            Err(Error::NonFinite(_))
        ));
        assert!(finite_diff_gradient(|_| 0.0, &th, 0.0).is_err());
    }

    #[test]
    fn central_difference_error_is_second_order() {
        // Quartic probe with analytic gradient 4x^3 + 3x^2.
        let f = |t: &ThetaFull| {
            t.to_vec()
                .iter()
                .map(|x| x.powi(4) + x.powi(3))
                .sum::<f64>()
        };
        let th = ThetaFull::new(vec![0.7, -1.3], 1.1);
        let exact: Vec<f64> = th
            .to_vec()
            .iter()
            .map(|x| 4.0 * x.powi(3) + 3.0 * x * x)
            .collect();
        let err = |h: f64| sup_diff(&finite_diff_gradient(f, &th, h).unwrap(), &exact);
        let ratio = err(1e-2) / err(5e-3);
        assert!((ratio - 4.0).abs() < 0.2, "ratio {ratio}");
    }
}
