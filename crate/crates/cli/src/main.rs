//! `neyman-scott` command-line driver.
//!
//! Exit codes: 0 success, 1 runtime or I/O failure, 2 usage or config error.

mod scheme;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use neyman_scott::io::{self, contrasts_to_csv, sample_path_to_csv, summaries_to_csv};
use neyman_scott::montecarlo::{
    self, bias_verdicts, group_mean_verdicts, log_checkpoints, path_verdicts, sample_path_seed,
    sweep_verdicts, Verdict,
};
use neyman_scott::optimizer::default_init;
use neyman_scott::{
    generate_panel, helmert_transform, make_spec, maximize_naive_likelihood, mle_closed_form,
    score, second_order_check, sigma2_mle_recast, thin_information_diagnostic, ExperimentConfig,
    MeanScheme, OptimizerConfig, PanelData,
};

use scheme::SchemeArg;

/// Relative output paths are resolved against this directory when set.
const OUTPUT_DIR_ENV: &str = "NEYMAN_SCOTT_OUTPUT_DIR";
const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(
    name = "neyman-scott",
    version,
    about = "Neyman-Scott panel model: simulate, estimate, run Monte Carlo experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a panel and write it as CSV plus a JSON sidecar.
    Generate(GenerateArgs),
    /// Estimate sigma2 from a panel CSV and print a JSON report.
    Estimate(EstimateArgs),
    /// Run a Monte Carlo experiment and print one verdict per prediction.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Replicates per group (>= 2).
    #[arg(long, default_value_t = 2)]
    m: usize,
    /// Number of groups (>= 1).
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    /// Group means: constant:<c> | linear:<a>,<b> | explicit:@<file> | randomwalk:<sd>.
    #[arg(long, default_value = "linear:0,1")]
    scheme: SchemeArg,
    #[arg(long)]
    seed: u64,
    /// Panel CSV path; the sidecar is written next to it with a .json extension.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Method {
    /// Closed-form naive MLE.
    Closed,
    /// Damped Newton on the naive likelihood.
    Newton,
    /// MLE of sigma2 on the mean-free contrasts.
    Recast,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    /// Panel CSV (`group,replicate,value`).
    #[arg(short, long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = Method::Closed)]
    method: Method,
    /// Write the JSON report here instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// With --method recast, also write the contrasts as CSV.
    #[arg(long)]
    contrasts: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-9)]
    grad_tol: f64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum Kind {
    /// Naive, recast and bias-corrected estimators at each n.
    Bias,
    /// Bias experiment over >= 3 sizes spanning two decades.
    Sweep,
    /// Running estimates along one long panel; n_grid gives the checkpoints.
    Path,
    /// Sampling variance of the first group mean.
    GroupMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// JSON config with a top-level "version": 1; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    kind: Option<Kind>,
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long)]
    m: Option<usize>,
    /// Comma-separated ascending group counts.
    #[arg(long, value_delimiter = ',')]
    n_grid: Option<Vec<usize>>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    scheme: Option<SchemeArg>,
    /// Worker threads (0 = all cores). Results do not depend on this.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum SchemeValue {
    Grammar(String),
    Structured(MeanScheme),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    version: u32,
    kind: Option<Kind>,
    sigma2: Option<f64>,
    m: Option<usize>,
    n_grid: Option<Vec<usize>>,
    replications: Option<usize>,
    master_seed: Option<u64>,
    scheme: Option<SchemeValue>,
    workers: Option<usize>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<neyman_scott::Error> for CliError {
    fn from(e: neyman_scott::Error) -> Self {
        if e.is_usage() {
            CliError::Usage(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

fn resolve_output(path: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(dir) if path.is_relative() && !dir.is_empty() => PathBuf::from(dir).join(path),
        _ => path.to_path_buf(),
    }
}

fn prepare_output(path: &Path) -> CliResult<PathBuf> {
    let path = resolve_output(path);
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", parent.display())))?;
    }
    Ok(path)
}

fn write(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn cmd_generate(args: GenerateArgs) -> CliResult<()> {
    let scheme = args.scheme.resolve(args.seed).map_err(CliError::Usage)?;
    let spec = make_spec(args.m, args.n, args.sigma2, &scheme)?;
    let panel = generate_panel(&spec, args.seed)?;
    let path = prepare_output(&args.output)?;
    io::write_panel(&panel, &path)?;
    println!(
        "wrote {} and {}",
        path.display(),
        io::sidecar_path(&path).display()
    );
    Ok(())
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

fn naive_report(
    panel: &PanelData,
    method: Method,
    args: &EstimateArgs,
) -> CliResult<serde_json::Value> {
    let fit = mle_closed_form(panel);
    let mut report = json!({
        "closed_form_sigma2": fit.theta.sigma2,
        "degenerate": fit.degenerate,
    });
    let theta = match method {
        Method::Newton => {
            let cfg = OptimizerConfig {
                grad_tol: args.grad_tol,
                max_iter: args.max_iter,
                ..Default::default()
            };
            let res = maximize_naive_likelihood(panel, &default_init(panel), &cfg)?;
            let gap = sup_norm(
                &res.theta
                    .to_vec()
                    .iter()
                    .zip(fit.theta.to_vec())
                    .map(|(a, b)| a - b)
                    .collect::<Vec<_>>(),
            );
            report["optimizer"] = json!({
                "iterations": res.iterations,
                "converged": res.converged,
                "termination": res.termination,
                "final_grad_norm": res.final_grad_norm,
                "max_abs_gap_to_closed_form": gap,
            });
            res.theta
        }
        _ => fit.theta.clone(),
    };
    report["sigma2_hat"] = json!(theta.sigma2);
    if theta.sigma2 > 0.0 {
        report["score_sup_norm"] = json!(sup_norm(&score(&theta, panel)?));
        report["second_order"] = serde_json::to_value(second_order_check(&theta, panel)?)?;
    }
    report["mu_hat"] = json!(theta.mu_hat);
    Ok(report)
}

fn recast_report(panel: &PanelData, args: &EstimateArgs) -> CliResult<serde_json::Value> {
    let contrasts = helmert_transform(panel)?;
    if let Some(out) = &args.contrasts {
        let path = prepare_output(out)?;
        write(&path, &contrasts_to_csv(&contrasts))?;
    }
    let est = sigma2_mle_recast(&contrasts)?;
    let naive = mle_closed_form(panel).theta.sigma2;
    let m = panel.m() as f64;
    let expected = m / (m - 1.0) * naive;
    let rel = if expected == 0.0 {
        est.sigma2_hat.abs()
    } else {
        ((est.sigma2_hat - expected) / expected).abs()
    };
    Ok(json!({
        "sigma2_hat": est.sigma2_hat,
        "n_eff": est.n_eff,
        "crlb": est.crlb,
        "degenerate": est.degenerate,
        "identity_check": {
            "naive_sigma2": naive,
            "rescaled_naive": expected,
            "relative_error": rel,
            "passed": rel <= 1e-12,
        },
    }))
}

fn cmd_estimate(args: EstimateArgs) -> CliResult<()> {
    let panel = io::read_panel(&args.input)?;
    let body = match args.method {
        Method::Closed | Method::Newton => naive_report(&panel, args.method, &args)?,
        Method::Recast => recast_report(&panel, &args)?,
    };
    let mut report = json!({
        "input": args.input.display().to_string(),
        "method": args.method,
        "m": panel.m(),
        "n": panel.n(),
        "seed": panel.seed(),
        "spec": panel.spec(),
        "diagnostic": thin_information_diagnostic(&panel),
    });
    if let (serde_json::Value::Object(dst), serde_json::Value::Object(src)) = (&mut report, body) {
        dst.extend(src);
    }
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    match &args.output {
        Some(out) => write(&prepare_output(out)?, &text)?,
        None => print!("{text}"),
    }
    Ok(())
}

struct Resolved {
    kind: Kind,
    config: ExperimentConfig,
    workers: usize,
}

fn resolve_experiment(args: &ExperimentArgs) -> CliResult<Resolved> {
    let file = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            let cfg: ConfigFile = serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            if cfg.version != CONFIG_VERSION {
                return Err(CliError::Usage(format!(
                    "{}: unsupported config version {} (expected {CONFIG_VERSION})",
                    path.display(),
                    cfg.version
                )));
            }
            Some(cfg)
        }
        None => None,
    };
    let file = file.as_ref();
    let master_seed = args
        .seed
        .or(file.and_then(|f| f.master_seed))
        .unwrap_or(20_130_101);
    let scheme = match (&args.scheme, file.and_then(|f| f.scheme.as_ref())) {
        (Some(flag), _) => flag.resolve(master_seed).map_err(CliError::Usage)?,
        (None, Some(SchemeValue::Structured(s))) => s.clone(),
        (None, Some(SchemeValue::Grammar(g))) => g
            .parse::<SchemeArg>()
            .and_then(|s| s.resolve(master_seed))
            .map_err(CliError::Usage)?,
        (None, None) => MeanScheme::default(),
    };
    let config = ExperimentConfig {
        sigma2: args.sigma2.or(file.and_then(|f| f.sigma2)).unwrap_or(1.0),
        m: args.m.or(file.and_then(|f| f.m)).unwrap_or(2),
        n_grid: args
            .n_grid
            .clone()
            .or(file.and_then(|f| f.n_grid.clone()))
            .unwrap_or_else(|| vec![100, 1_000, 10_000]),
        replications: args
            .replications
            .or(file.and_then(|f| f.replications))
            .unwrap_or(1_000),
        master_seed,
        scheme,
    };
    config.validate()?;
    Ok(Resolved {
        kind: args
            .kind
            .or(file.and_then(|f| f.kind))
            .unwrap_or(Kind::Bias),
        config,
        workers: args.workers.or(file.and_then(|f| f.workers)).unwrap_or(0),
    })
}

fn cmd_experiment(args: ExperimentArgs) -> CliResult<()> {
    let Resolved {
        kind,
        config,
        workers,
    } = resolve_experiment(&args)?;

    let (csv, results, verdicts): (String, serde_json::Value, Vec<Verdict>) = match kind {
        Kind::Bias | Kind::Sweep => {
            let summaries = if kind == Kind::Sweep {
                montecarlo::run_consistency_sweep(&config, workers)?
            } else {
                montecarlo::run_bias_experiment(&config, workers)?
            };
            let verdicts = if kind == Kind::Sweep {
                sweep_verdicts(&config, &summaries)
            } else {
                bias_verdicts(&config, &summaries)
            };
            (
                summaries_to_csv(&summaries),
                serde_json::to_value(&summaries)?,
                verdicts,
            )
        }
        Kind::GroupMean => {
            let summaries = montecarlo::run_group_mean_experiment(&config, workers)?;
            let verdicts = group_mean_verdicts(&config, &summaries);
            (
                summaries_to_csv(&summaries),
                serde_json::to_value(&summaries)?,
                verdicts,
            )
        }
        Kind::Path => {
            let n_max = *config.n_grid.last().unwrap();
            let checkpoints = if config.n_grid.len() > 1 {
                config.n_grid.clone()
            } else {
                log_checkpoints(n_max, 10)
            };
            let path = montecarlo::run_sample_path(
                config.sigma2,
                config.m,
                n_max,
                sample_path_seed(config.master_seed),
                &checkpoints,
            )?;
            let verdicts = path_verdicts(config.sigma2, config.m, &path);
            (
                sample_path_to_csv(&path),
                serde_json::to_value(&path)?,
                verdicts,
            )
        }
    };

    for v in &verdicts {
        println!("{v}");
    }

    let (ext, contents) = match args.format {
        Format::Csv => ("csv", csv),
        Format::Json => {
            let mut report = json!({
                "version": CONFIG_VERSION,
                "kind": kind,
                "config": config,
                "master_seed": config.master_seed,
                "seed_derivation": montecarlo::SEED_DERIVATION,
                "block_size": montecarlo::BLOCK_SIZE,
                "results": results,
                "verdicts": verdicts,
            });
            if kind == Kind::Path {
                report["path_seed"] = json!(sample_path_seed(config.master_seed));
            }
            let mut text = serde_json::to_string_pretty(&report)?;
            text.push('\n');
            ("json", text)
        }
    };
    let default_name = PathBuf::from(format!(
        "neyman-scott-{}.{ext}",
        kind.to_possible_value().unwrap().get_name()
    ));
    let path = prepare_output(args.output.as_deref().unwrap_or(&default_name))?;
    write(&path, &contents)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Experiment(a) => cmd_experiment(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("see `neyman-scott --help` for usage");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
