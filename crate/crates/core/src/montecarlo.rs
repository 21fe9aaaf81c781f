//! Replicated experiments over the panel model.
//!
//! Replication `r` at grid point `k` draws its panel from
//! [`derive_seed`]`(master_seed, k, r)`. Replications are grouped into fixed
//! blocks of [`BLOCK_SIZE`]; each block is accumulated sequentially and blocks
//! are merged in index order, so results do not depend on the worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::mle_closed_form;
use crate::model::{generate_panel, make_spec, MeanScheme, PanelData};
use crate::recast::{helmert_transform, recast_sigma2};
use crate::rng::{derive_aux_seed, derive_seed};
use crate::stats::Moments;

pub const BLOCK_SIZE: usize = 32;

/// Default acceptance width in standard errors.
pub const SE_MULTIPLIER: f64 = 5.0;

pub const NAIVE: &str = "naive";
pub const RECAST: &str = "recast";
pub const BIAS_CORRECTED: &str = "bias_corrected_naive";
pub const MU_HAT_1: &str = "mu_hat_1";

pub const SEED_DERIVATION: &str =
    "seed(k, r) = mix64(mix64(mix64(master + G) ^ (k+1)*G) ^ (r+1)*D), mix64 = SplitMix64 finalizer, \
     G = 0x9E3779B97F4A7C15, D = 0xD1B54A32D192ED03; k = grid index, r = replication index";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub sigma2: f64,
    #[serde(default = "default_m")]
    pub m: usize,
    pub n_grid: Vec<usize>,
    pub replications: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub scheme: MeanScheme,
}

fn default_m() -> usize {
    2
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2.is_finite() && self.sigma2 > 0.0) {
            return Err(Error::NonPositiveVariance(self.sigma2));
        }
        if self.m < 2 {
            return Err(Error::TooFewReplicates(self.m));
        }
        if self.n_grid.is_empty() {
            return Err(Error::Config("n_grid must not be empty".into()));
        }
        if self.n_grid[0] < 1 {
            return Err(Error::Config("n_grid entries must be >= 1".into()));
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("n_grid must be strictly ascending".into()));
        }
        if self.replications < 1 {
            return Err(Error::Config("replications must be >= 1".into()));
        }
        // Schemes are materialized per grid point; check the largest up front.
        self.scheme.materialize(*self.n_grid.last().unwrap())?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorSummary {
    pub estimator: String,
    pub n: usize,
    pub replications: usize,
    /// The value the estimator is compared against (σ², or μ_1 for `mu_hat_1`).
    pub target: f64,
    pub mean: f64,
    pub bias: f64,
    pub variance: f64,
    pub mse: f64,
    pub std_error_of_mean: f64,
    pub std_error_of_variance: f64,
    pub crlb_ratio: Option<f64>,
    /// Fewer than two replications: spread statistics are reported as 0.
    pub low_replication: bool,
}

impl EstimatorSummary {
    fn from_moments(
        estimator: &str,
        n: usize,
        target: f64,
        moments: &Moments,
        crlb: Option<f64>,
    ) -> Self {
        let mean = moments.mean();
        let bias = mean - target;
        let variance = moments.variance();
        EstimatorSummary {
            estimator: estimator.to_string(),
            n,
            replications: moments.count() as usize,
            target,
            mean,
            bias,
            variance,
            mse: variance + bias * bias,
            std_error_of_mean: moments.std_error_of_mean(),
            std_error_of_variance: moments.std_error_of_variance(),
            crlb_ratio: crlb.map(|c| variance / c),
            low_replication: moments.count() < 2,
        }
    }
}

fn with_workers<T, F>(workers: usize, job: F) -> Result<T>
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    if workers == 0 {
        return Ok(job());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()?;
    Ok(pool.install(job))
}

/// Runs `replicate(r)` for `r in 0..replications` and accumulates the `K`
/// outputs in fixed blocks merged in order.
fn accumulate<const K: usize, F>(
    replications: usize,
    workers: usize,
    replicate: F,
) -> Result<[Moments; K]>
where
    F: Fn(usize) -> Result<[f64; K]> + Sync,
{
    let blocks = replications.div_ceil(BLOCK_SIZE);
    let partials: Vec<Result<[Moments; K]>> = with_workers(workers, || {
        (0..blocks)
            .into_par_iter()
            .map(|b| {
                let mut acc = [Moments::new(); K];
                for r in b * BLOCK_SIZE..((b + 1) * BLOCK_SIZE).min(replications) {
                    for (a, x) in acc.iter_mut().zip(replicate(r)?) {
                        a.push(x);
                    }
                }
                Ok(acc)
            })
            .collect()
    })?;
    let mut total = [Moments::new(); K];
    for part in partials {
        for (t, p) in total.iter_mut().zip(part?) {
            t.merge(&p);
        }
    }
    Ok(total)
}

/// Naive, recast, and bias-corrected naive `σ²` estimates of one panel.
pub fn panel_estimates(data: &PanelData) -> Result<[f64; 3]> {
    let naive = mle_closed_form(data).theta.sigma2;
    let recast = recast_sigma2(data)?.sigma2_hat;
    let m = data.m() as f64;
    Ok([naive, recast, naive * m / (m - 1.0)])
}

/// For every `n` in the grid, `R` independent panels summarized for the naive,
/// recast, and bias-corrected naive estimators (in that order).
pub fn run_bias_experiment(
    config: &ExperimentConfig,
    workers: usize,
) -> Result<Vec<EstimatorSummary>> {
    config.validate()?;
    let mut out = Vec::with_capacity(3 * config.n_grid.len());
    for (k, &n) in config.n_grid.iter().enumerate() {
        let spec = make_spec(config.m, n, config.sigma2, &config.scheme)?;
        let [naive, recast, corrected] = accumulate(config.replications, workers, |r| {
            let panel = generate_panel(&spec, derive_seed(config.master_seed, k as u64, r as u64))?;
            panel_estimates(&panel)
        })?;
        let n_eff = ((config.m - 1) * n) as f64;
        let crlb = 2.0 * config.sigma2 * config.sigma2 / n_eff;
        out.push(EstimatorSummary::from_moments(
            NAIVE,
            n,
            config.sigma2,
            &naive,
            None,
        ));
        out.push(EstimatorSummary::from_moments(
            RECAST,
            n,
            config.sigma2,
            &recast,
            Some(crlb),
        ));
        out.push(EstimatorSummary::from_moments(
            BIAS_CORRECTED,
            n,
            config.sigma2,
            &corrected,
            Some(crlb),
        ));
    }
    Ok(out)
}

/// Bias experiment over a grid of at least three sizes spanning two decades.
pub fn run_consistency_sweep(
    config: &ExperimentConfig,
    workers: usize,
) -> Result<Vec<EstimatorSummary>> {
    config.validate()?;
    let lo = config.n_grid[0] as f64;
    let hi = *config.n_grid.last().unwrap() as f64;
    if config.n_grid.len() < 3 || hi / lo < 100.0 {
        return Err(Error::Config(
            "a consistency sweep needs >= 3 grid points spanning >= 2 orders of magnitude".into(),
        ));
    }
    run_bias_experiment(config, workers)
}

/// Sampling distribution of the first group mean `μ̂_1` at every grid size.
pub fn run_group_mean_experiment(
    config: &ExperimentConfig,
    workers: usize,
) -> Result<Vec<EstimatorSummary>> {
    config.validate()?;
    let mut out = Vec::with_capacity(config.n_grid.len());
    for (k, &n) in config.n_grid.iter().enumerate() {
        let spec = make_spec(config.m, n, config.sigma2, &config.scheme)?;
        let [mu1] = accumulate(config.replications, workers, |r| {
            let panel = generate_panel(&spec, derive_seed(config.master_seed, k as u64, r as u64))?;
            let fit = mle_closed_form(&panel);
            Ok([fit.theta.mu_hat[0]])
        })?;
        let crlb = config.sigma2 / config.m as f64;
        out.push(EstimatorSummary::from_moments(
            MU_HAT_1,
            n,
            spec.mu()[0],
            &mu1,
            Some(crlb),
        ));
    }
    Ok(out)
}

pub fn find<'a>(
    summaries: &'a [EstimatorSummary],
    estimator: &str,
    n: usize,
) -> Option<&'a EstimatorSummary> {
    summaries
        .iter()
        .find(|s| s.estimator == estimator && s.n == n)
}

/// Largest pairwise bias gap in units of combined standard error.
pub fn bias_flatness(summaries: &[EstimatorSummary], estimator: &str) -> f64 {
    let rows: Vec<&EstimatorSummary> = summaries
        .iter()
        .filter(|s| s.estimator == estimator)
        .collect();
    let mut worst = 0.0f64;
    for (i, a) in rows.iter().enumerate() {
        for b in &rows[i + 1..] {
            let se = (a.std_error_of_mean.powi(2) + b.std_error_of_mean.powi(2)).sqrt();
            let gap = (a.bias - b.bias).abs();
            worst = worst.max(if se > 0.0 {
                gap / se
            } else if gap > 0.0 {
                f64::INFINITY
            } else {
                0.0
            });
        }
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplePath {
    pub n_points: Vec<usize>,
    pub naive_estimates: Vec<f64>,
    pub recast_estimates: Vec<f64>,
}

/// Running naive and recast estimates over prefixes of one long panel.
pub fn run_sample_path(
    sigma2: f64,
    m: usize,
    n_max: usize,
    seed: u64,
    checkpoints: &[usize],
) -> Result<SamplePath> {
    if checkpoints.is_empty() {
        return Err(Error::Config("checkpoints must not be empty".into()));
    }
    if checkpoints[0] < 1 || checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(
            "checkpoints must be strictly ascending and >= 1".into(),
        ));
    }
    if *checkpoints.last().unwrap() > n_max {
        return Err(Error::Config(format!("checkpoint exceeds n_max = {n_max}")));
    }
    let spec = make_spec(m, n_max, sigma2, &MeanScheme::default())?;
    let panel = generate_panel(&spec, seed)?;
    let fit = mle_closed_form(&panel);
    let contrasts = helmert_transform(&panel)?;
    let rows = m - 1;

    let mut path = SamplePath {
        n_points: checkpoints.to_vec(),
        naive_estimates: Vec::with_capacity(checkpoints.len()),
        recast_estimates: Vec::with_capacity(checkpoints.len()),
    };
    let (mut s2_sum, mut y2_sum) = (0.0, 0.0);
    let mut next = checkpoints.iter().peekable();
    for t in 0..n_max {
        s2_sum += fit.group_stats[t].s2_t;
        y2_sum += contrasts.values()[t * rows..(t + 1) * rows]
            .iter()
            .map(|y| y * y)
            .sum::<f64>();
        if next.peek() == Some(&&(t + 1)) {
            next.next();
            let n = (t + 1) as f64;
            path.naive_estimates.push(s2_sum / n);
            path.recast_estimates.push(y2_sum / (rows as f64 * n));
        }
        if next.peek().is_none() {
            break;
        }
    }
    Ok(path)
}

/// Seed used for a sample path launched from an experiment's master seed.
pub fn sample_path_seed(master_seed: u64) -> u64 {
    derive_aux_seed(master_seed, 0x5A17)
}

/// `count` roughly log-spaced checkpoints per decade from 1 to `n_max` inclusive.
pub fn log_checkpoints(n_max: usize, per_decade: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let decades = (n_max as f64).log10();
    let steps = (decades * per_decade as f64).ceil() as usize;
    for k in 0..=steps {
        let v = (10f64.powf(k as f64 / per_decade as f64)).round() as usize;
        let v = v.clamp(1, n_max);
        if out.last() != Some(&v) {
            out.push(v);
        }
    }
    if out.last() != Some(&n_max) {
        out.push(n_max);
    }
    out
}

/// Largest `|estimate − target|` over checkpoints with `lo ≤ n ≤ hi`.
pub fn max_deviation(
    path: &SamplePath,
    estimates: &[f64],
    target: f64,
    lo: usize,
    hi: usize,
) -> f64 {
    path.n_points
        .iter()
        .zip(estimates)
        .filter(|(n, _)| (lo..=hi).contains(*n))
        .fold(0.0f64, |a, (_, e)| a.max((e - target).abs()))
}

/// How the number of free parameters scales with the number of groups:
/// `per_group·n + fixed`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParameterGrowth {
    pub per_group: usize,
    pub fixed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticReport {
    pub parameter_count: usize,
    pub observation_count: usize,
    pub observations_per_parameter: f64,
    /// `lim_{n→∞}` of the ratio, absent when it diverges.
    pub limiting_ratio: Option<f64>,
    pub warning: bool,
    pub message: String,
    pub naive_sigma2: Option<f64>,
    /// `m/(m−1)·σ̂²_naive`, which equals the recast estimate.
    pub suggested_sigma2: Option<f64>,
}

/// Observations-per-parameter check for `m` replicates of `n` groups under the
/// given parameter growth. The ratio must diverge for standard ML asymptotics;
/// a bounded ratio raises the warning.
pub fn information_growth(m: usize, n: usize, growth: ParameterGrowth) -> DiagnosticReport {
    let parameter_count = growth.per_group * n + growth.fixed;
    let observation_count = m * n;
    let ratio = observation_count as f64 / parameter_count.max(1) as f64;
    let limiting_ratio = (growth.per_group > 0).then(|| m as f64 / growth.per_group as f64);
    let warning = limiting_ratio.is_some();
    let message = match limiting_ratio {
        Some(lim) => format!(
            "parameter count grows with the number of groups: observations per parameter = {ratio:.4} \
             and stays bounded by {lim} as n grows, so each incidental parameter is estimated from a fixed \
             number of observations and the naive MLE of sigma2 cannot be consistent; \
             eliminate the group means (contrast transform) or rescale by m/(m-1)"
        ),
        None => format!(
            "fixed parameter count: observations per parameter = {ratio:.4} grows without bound in n"
        ),
    };
    DiagnosticReport {
        parameter_count,
        observation_count,
        observations_per_parameter: ratio,
        limiting_ratio,
        warning,
        message,
        naive_sigma2: None,
        suggested_sigma2: None,
    }
}

/// The panel model has one mean per group plus `σ²`.
pub fn thin_information_diagnostic(data: &PanelData) -> DiagnosticReport {
    let mut report = information_growth(
        data.m(),
        data.n(),
        ParameterGrowth {
            per_group: 1,
            fixed: 1,
        },
    );
    let naive = mle_closed_form(data).theta.sigma2;
    let m = data.m() as f64;
    report.naive_sigma2 = Some(naive);
    report.suggested_sigma2 = Some(naive * m / (m - 1.0));
    report
}

/// One checked prediction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub claim: String,
    pub observed: f64,
    pub predicted: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {:.6} vs predicted {:.6} (tol {:.3e}): {}",
            self.claim,
            self.observed,
            self.predicted,
            self.tolerance,
            if self.pass { "PASS" } else { "FAIL" }
        )
    }
}

fn verdict(claim: String, observed: f64, predicted: f64, tolerance: f64) -> Verdict {
    Verdict {
        claim,
        observed,
        predicted,
        tolerance,
        pass: (observed - predicted).abs() <= tolerance,
    }
}

/// Mean checks for the naive (`(m−1)/m·σ²`), recast and bias-corrected (`σ²`)
/// estimators at every grid size, at `SE_MULTIPLIER` standard errors.
pub fn bias_verdicts(config: &ExperimentConfig, summaries: &[EstimatorSummary]) -> Vec<Verdict> {
    let m = config.m as f64;
    let s2 = config.sigma2;
    summaries
        .iter()
        .filter(|s| s.estimator != MU_HAT_1)
        .map(|s| {
            let predicted_bias = if s.estimator == NAIVE { -s2 / m } else { 0.0 };
            verdict(
                format!("{} bias at n={}", s.estimator, s.n),
                s.bias,
                predicted_bias,
                SE_MULTIPLIER * s.std_error_of_mean,
            )
        })
        .collect()
}

/// Bias-flatness of the naive estimator and `1/n` variance decay of the recast one.
pub fn sweep_verdicts(config: &ExperimentConfig, summaries: &[EstimatorSummary]) -> Vec<Verdict> {
    let mut out = bias_verdicts(config, summaries);
    out.push(verdict(
        "naive bias flatness, max pairwise gap in combined SE".into(),
        bias_flatness(summaries, NAIVE),
        0.0,
        SE_MULTIPLIER,
    ));
    let lo = config.n_grid[0];
    let hi = *config.n_grid.last().unwrap();
    if let (Some(a), Some(b)) = (find(summaries, RECAST, lo), find(summaries, RECAST, hi)) {
        let predicted = hi as f64 / lo as f64;
        out.push(verdict(
            format!("recast variance ratio var(n={lo})/var(n={hi})"),
            a.variance / b.variance,
            predicted,
            0.3 * predicted,
        ));
    }
    out
}

pub fn group_mean_verdicts(
    config: &ExperimentConfig,
    summaries: &[EstimatorSummary],
) -> Vec<Verdict> {
    summaries
        .iter()
        .map(|s| {
            verdict(
                format!("variance of mu_hat_1 at n={}", s.n),
                s.variance,
                config.sigma2 / config.m as f64,
                SE_MULTIPLIER * s.std_error_of_variance,
            )
        })
        .collect()
}

/// Final-checkpoint tolerances: `SE_MULTIPLIER` asymptotic standard deviations
/// of each estimator at the last checkpoint.
pub fn path_verdicts(sigma2: f64, m: usize, path: &SamplePath) -> Vec<Verdict> {
    let n = *path.n_points.last().unwrap() as f64;
    let mf = m as f64;
    let n_eff = (mf - 1.0) * n;
    let naive_limit = (mf - 1.0) / mf * sigma2;
    // naive = (m-1)/m * recast, recast variance 2σ⁴/n_eff
    let recast_sd = (2.0 * sigma2 * sigma2 / n_eff).sqrt();
    let naive_sd = (mf - 1.0) / mf * recast_sd;
    vec![
        verdict(
            format!("naive estimate at n={n}"),
            *path.naive_estimates.last().unwrap(),
            naive_limit,
            SE_MULTIPLIER * naive_sd,
        ),
        verdict(
            format!("recast estimate at n={n}"),
            *path.recast_estimates.last().unwrap(),
            sigma2,
            SE_MULTIPLIER * recast_sd,
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(n_grid: Vec<usize>, replications: usize) -> ExperimentConfig {
        ExperimentConfig {
            sigma2: 1.0,
            m: 2,
            n_grid,
            replications,
            master_seed: 1,
            scheme: MeanScheme::default(),
        }
    }

    #[test]
    fn config_validation() {
        assert!(config(vec![], 10).validate().is_err());
        assert!(config(vec![10, 10], 10).validate().is_err());
        assert!(config(vec![0, 10], 10).validate().is_err());
        assert!(config(vec![10], 0).validate().is_err());
        assert!(config(vec![10, 20], 1).validate().is_ok());
    }

    #[test]
    fn sweep_requires_two_decades() {
        assert!(run_consistency_sweep(&config(vec![10, 100], 2), 1).is_err());
        assert!(run_consistency_sweep(&config(vec![10, 20, 500], 2), 1).is_err());
    }

    #[test]
    fn single_replication_is_flagged() {
        let out = run_consistency_sweep(&config(vec![1, 10, 100], 1), 1).unwrap();
        assert_eq!(out.len(), 9);
        for s in &out {
            assert_eq!(s.variance, 0.0);
            assert_eq!(s.std_error_of_mean, 0.0);
            assert!(s.low_replication);
        }
    }

    #[test]
    fn mse_decomposition() {
        let out = run_bias_experiment(&config(vec![5, 50], 40), 2).unwrap();
        for s in &out {
            let want = s.variance + s.bias * s.bias;
            assert!((s.mse - want).abs() <= 1e-12 * want);
            assert!((s.std_error_of_mean - (s.variance / 40.0).sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let cfg = config(vec![3, 30], 100);
        let a = run_bias_experiment(&cfg, 1).unwrap();
        let b = run_bias_experiment(&cfg, 3).unwrap();
        let c = run_bias_experiment(&cfg, 0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn single_group_path() {
        let path = run_sample_path(1.0, 3, 5, 9, &[1]).unwrap();
        let spec = make_spec(3, 5, 1.0, &MeanScheme::default()).unwrap();
        let panel = generate_panel(&spec, 9).unwrap();
        let s2 = mle_closed_form(&panel).group_stats[0].s2_t;
        assert_eq!(path.naive_estimates[0], s2);
        let ratio = path.recast_estimates[0] / path.naive_estimates[0];
        assert!((ratio - 1.5).abs() < 1e-12);
    }

    #[test]
    fn path_checkpoint_validation() {
        assert!(run_sample_path(1.0, 2, 10, 0, &[]).is_err());
        assert!(run_sample_path(1.0, 2, 10, 0, &[3, 2]).is_err());
        assert!(run_sample_path(1.0, 2, 10, 0, &[0, 2]).is_err());
        assert!(run_sample_path(1.0, 2, 10, 0, &[2, 11]).is_err());
    }

    #[test]
    fn log_checkpoints_cover_range() {
        let c = log_checkpoints(100_000, 4);
        assert_eq!(c[0], 1);
        assert_eq!(*c.last().unwrap(), 100_000);
        assert!(c.windows(2).all(|w| w[0] < w[1]));
        assert!(c.contains(&10) && c.contains(&10_000));
    }

    #[test]
    fn diagnostic_ratio_for_two_replicates() {
        let r = information_growth(
            2,
            100,
            ParameterGrowth {
                per_group: 1,
                fixed: 1,
            },
        );
        assert_eq!(r.parameter_count, 101);
        assert_eq!(r.observation_count, 200);
        assert!((r.observations_per_parameter - 200.0 / 101.0).abs() < 1e-15);
        assert!(r.warning);

        let r = information_growth(
            2,
            1_000_000,
            ParameterGrowth {
                per_group: 1,
                fixed: 1,
            },
        );
        assert!((r.observations_per_parameter - 2.0).abs() < 1e-5);
        assert_eq!(r.limiting_ratio, Some(2.0));
        assert!(r.warning);
    }

    #[test]
    fn fixed_parameter_model_does_not_warn() {
        let small = information_growth(
            2,
            100,
            ParameterGrowth {
                per_group: 0,
                fixed: 2,
            },
        );
        let big = information_growth(
            2,
            10_000,
            ParameterGrowth {
                per_group: 0,
                fixed: 2,
            },
        );
        assert_eq!(small.observations_per_parameter, 100.0);
        assert_eq!(big.observations_per_parameter, 10_000.0);
        assert!(!small.warning && !big.warning);
        assert!(small.limiting_ratio.is_none());
    }

    #[test]
    fn panel_diagnostic_suggests_rescaled_estimate() {
        let data = PanelData::from_groups(2, 2, vec![1.0, 3.0, 0.0, 2.0]).unwrap();
        let r = thin_information_diagnostic(&data);
        assert!(r.warning);
        assert_eq!(r.naive_sigma2, Some(1.0));
        assert_eq!(r.suggested_sigma2, Some(2.0));
    }
}
