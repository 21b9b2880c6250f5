//! Single-artifact commands: generate instances, evaluate the forward map,
//! draw samples, recover parameters, and judge conditioning.

use super::{generator_config, map_stability, numerical_from_recovery, stream_rng, Family};
use crate::config::{pick, require, FileConfig};
use crate::errors::{CliError, CliResult};
use crate::io::{
    center_columns, data_csv_bytes, load_data_csv, load_graph_json, load_matrix_csv,
    load_params_json,
};
use clap::Args;

use lsem_core::instances::{random_parameters, GeneratorConfig};
use lsem_core::linalg::Matrix;
use lsem_core::recovery::{recover_lambda, recover_omega};
use lsem_core::scm::{forward_covariance, sample_covariance, sample_observations};
use lsem_core::stability::{
    condition_heuristic, randomized_condition_number, PerturbMode, PerturbTarget,
    PerturbationSpec, Verdict,
};
use serde_json::json;
use std::path::{Path, PathBuf};

fn write_file(out_dir: &Path, name: &Path, bytes: &[u8]) -> CliResult<PathBuf> {
    let path = if name.is_absolute() {
        name.to_path_buf()
    } else {
        out_dir.join(name)
    };
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| {
                CliError::validation(format!("cannot create {}: {e}", parent.display()))
            })?;
        }
    }
    std::fs::write(&path, bytes)
        .map_err(|e| CliError::validation(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn json_bytes<T: serde::Serialize>(value: &T) -> CliResult<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| CliError::validation(format!("serialization failed: {e}")))?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Loads a covariance either directly from a matrix CSV or by forming the
/// second-moment covariance of a data CSV.
fn covariance_input(
    sigma: Option<&Path>,
    data: Option<&Path>,
    center: bool,
) -> CliResult<Matrix> {
    match (sigma, data) {
        (Some(path), None) => {
            let m = load_matrix_csv(path)?;
            if !m.is_square() {
                return Err(CliError::validation(format!(
                    "{}: covariance must be square, got {}x{}",
                    path.display(),
                    m.rows(),
                    m.cols()
                )));
            }
            Ok(m)
        }
        (None, Some(path)) => {
            let (_, batch) = load_data_csv(path)?;
            let data = if center {
                center_columns(&batch.data)
            } else {
                batch.data
            };
            Ok(sample_covariance(&lsem_core::scm::ObservationBatch { data })
                .map_err(|e| CliError::validation(e.to_string()))?
                .matrix)
        }
        (Some(_), Some(_)) => Err(CliError::validation(
            "--sigma and --data are mutually exclusive",
        )),
        (None, None) => Err(CliError::validation(
            "one of --sigma or --data is required",
        )),
    }
}

// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// Graph family: path | clique | layered
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Parameters JSON file name
    #[arg(long, default_value = "params.json")]
    out_params: PathBuf,
    /// Also write the exact covariance as CSV
    #[arg(long)]
    out_sigma: Option<PathBuf>,
    /// Also write the graph alone as JSON
    #[arg(long)]
    out_graph: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

pub fn generate(args: GenerateArgs) -> CliResult<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let family = Family::parse(&pick(args.family, file.family, "path".into()))?;
    let n = pick(args.n, file.n, 10);
    let k = pick(args.k, file.k, 1);
    let p_drop = pick(args.p, file.p, 0.5);
    let h = pick(args.h, file.h, 0.5);
    let d = pick(args.d, file.d, GeneratorConfig::default_dimension(n));
    let seed = require(args.seed, file.seed, "seed")?;
    let out = pick(args.out, file.out, PathBuf::from("."));

    let mut rng = stream_rng(seed, 0);
    let g = family.build(n, k, p_drop, &mut rng)?;
    let cfg = generator_config(h, d, family.ortho_depth(k))?;
    let mut gen_rng = stream_rng(seed, 1);
    let params = random_parameters(&g, &cfg, &mut gen_rng)
        .map_err(|e| CliError::validation(e.to_string()))?;

    let written = write_file(&out, &args.out_params, &json_bytes(&params)?)?;
    println!("wrote {}", written.display());
    if let Some(name) = args.out_sigma {
        let sigma = forward_covariance(&params)
            .map_err(|e| CliError::numerical(e.to_string()))?
            .matrix;
        let written = write_file(&out, &name, sigma.to_csv_string().as_bytes())?;
        println!("wrote {}", written.display());
    }
    if let Some(name) = args.out_graph {
        let written = write_file(&out, &name, &json_bytes(&g)?)?;
        println!("wrote {}", written.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct ForwardArgs {
    /// Parameters JSON
    #[arg(long)]
    params: PathBuf,
    /// Covariance CSV file name
    #[arg(long, default_value = "sigma.csv")]
    out_sigma: PathBuf,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

pub fn forward(args: ForwardArgs) -> CliResult<()> {
    let params = load_params_json(&args.params)?;
    let sigma = forward_covariance(&params)
        .map_err(|e| CliError::numerical(e.to_string()))?
        .matrix;
    let written = write_file(&args.out, &args.out_sigma, sigma.to_csv_string().as_bytes())?;
    println!("wrote {}", written.display());
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct SampleArgs {
    /// Parameters JSON
    #[arg(long)]
    params: PathBuf,
    /// Number of observations
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Data CSV file name
    #[arg(long, default_value = "data.csv")]
    out_data: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

pub fn sample(args: SampleArgs) -> CliResult<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let m = pick(args.m, file.m, 1000);
    let seed = require(args.seed, file.seed, "seed")?;
    let out = pick(args.out, file.out, PathBuf::from("."));
    if m == 0 {
        return Err(CliError::validation("--m must be positive"));
    }
    let params = load_params_json(&args.params)?;
    let mut rng = stream_rng(seed, 0);
    let batch = sample_observations(&params, m, &mut rng)
        .map_err(|e| CliError::numerical(e.to_string()))?;
    let names: Vec<String> = (0..params.n()).map(|i| format!("x{i}")).collect();
    let written = write_file(&out, &args.out_data, &data_csv_bytes(&names, &batch.data))?;
    println!("wrote {} ({} samples)", written.display(), m);
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct RecoverArgs {
    /// Covariance CSV
    #[arg(long)]
    sigma: Option<PathBuf>,
    /// Observational data CSV (covariance formed from second moments)
    #[arg(long)]
    data: Option<PathBuf>,
    /// Subtract column means before forming the covariance
    #[arg(long)]
    center: bool,
    /// Graph JSON (the causal hypothesis)
    #[arg(long)]
    graph: PathBuf,
    /// Also recover the noise covariance
    #[arg(long)]
    omega: bool,
    /// Result JSON file; prints to stdout when absent
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

pub fn recover(args: RecoverArgs) -> CliResult<()> {
    let g = load_graph_json(&args.graph)?;
    let sigma = covariance_input(args.sigma.as_deref(), args.data.as_deref(), args.center)?;
    if sigma.rows() != g.n() {
        return Err(CliError::validation(format!(
            "covariance is {}x{} but the graph has {} vertices",
            sigma.rows(),
            sigma.cols(),
            g.n()
        )));
    }
    let mut result = recover_lambda(&sigma, &g).map_err(numerical_from_recovery)?;
    if args.omega {
        result.omega_hat = Some(
            recover_omega(&sigma, &result.lambda_hat)
                .map_err(numerical_from_recovery)?,
        );
    }
    let bytes = json_bytes(&result)?;
    match args.output {
        Some(name) => {
            let written = write_file(&args.out, &name, &bytes)?;
            println!("wrote {}", written.display());
        }
        None => print!("{}", String::from_utf8_lossy(&bytes)),
    }
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct ConditionArgs {
    /// Covariance CSV
    #[arg(long)]
    sigma: PathBuf,
    /// Graph JSON
    #[arg(long)]
    graph: PathBuf,
    /// Perturbation mode: gaussian | relative | uniform
    #[arg(long)]
    mode: Option<String>,
    /// Gaussian std dev (gaussian mode)
    #[arg(long)]
    eps: Option<f64>,
    /// Relative / constant magnitude (relative and uniform modes)
    #[arg(long)]
    gamma: Option<f64>,
    /// Entries to perturb: nonzero | all
    #[arg(long)]
    target: Option<String>,
    /// Mirror shifts across the diagonal
    #[arg(long)]
    symmetric: bool,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Report JSON file; prints to stdout when absent
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

pub fn condition(args: ConditionArgs) -> CliResult<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let mode_name = pick(args.mode, file.mode, "gaussian".into());
    let eps = pick(args.eps, file.eps, 1e-6);
    let gamma = pick(args.gamma, file.gamma, 1e-9);
    let target_name = pick(args.target, file.target, "nonzero".into());
    let symmetric = args.symmetric || file.symmetric.unwrap_or(false);
    let trials = pick(args.trials, file.trials, 100);
    let seed = require(args.seed, file.seed, "seed")?;
    let out = pick(args.out, file.out, PathBuf::from("."));

    let mode = match mode_name.as_str() {
        "gaussian" => PerturbMode::GaussianAdditive { eps },
        "relative" => PerturbMode::RelativeGamma { gamma },
        "uniform" => PerturbMode::UniformAdditive { gamma },
        other => {
            return Err(CliError::validation(format!(
                "unknown mode {other:?} (expected gaussian, relative or uniform)"
            )))
        }
    };
    let target = match target_name.as_str() {
        "nonzero" => PerturbTarget::NonzeroEntries,
        "all" => PerturbTarget::AllEntries,
        other => {
            return Err(CliError::validation(format!(
                "unknown target {other:?} (expected nonzero or all)"
            )))
        }
    };
    let spec = PerturbationSpec::new(mode, target, symmetric)
        .map_err(|e| CliError::validation(e.to_string()))?;
    let g = load_graph_json(&args.graph)?;
    let sigma = load_matrix_csv(&args.sigma)?;
    if sigma.rows() != g.n() || !sigma.is_square() {
        return Err(CliError::validation(format!(
            "covariance is {}x{} but the graph has {} vertices",
            sigma.rows(),
            sigma.cols(),
            g.n()
        )));
    }
    let mut rng = stream_rng(seed, 0);
    let report =
        randomized_condition_number(&sigma, &g, &spec, trials, &mut rng).map_err(map_stability)?;
    let bytes = json_bytes(&report)?;
    match args.output {
        Some(name) => {
            let written = write_file(&out, &name, &bytes)?;
            println!("wrote {}", written.display());
        }
        None => print!("{}", String::from_utf8_lossy(&bytes)),
    }
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct HeuristicArgs {
    /// Covariance CSV
    #[arg(long)]
    sigma: Option<PathBuf>,
    /// Observational data CSV
    #[arg(long)]
    data: Option<PathBuf>,
    /// Subtract column means before forming the covariance
    #[arg(long)]
    center: bool,
    /// Graph JSON
    #[arg(long)]
    graph: PathBuf,
    /// Ill-conditioning threshold on the mean kappa
    #[arg(long)]
    tau: Option<f64>,
    /// Trial count override (default n^4)
    #[arg(long)]
    trials: Option<usize>,
    /// Noise level override (default 1/n^4)
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Report JSON file (verdict always goes to stdout)
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

pub fn heuristic(args: HeuristicArgs) -> CliResult<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let tau = require(args.tau, file.tau, "tau")?;
    let trials = args.trials.or(file.trials);
    let eps = args.eps.or(file.eps);
    let seed = require(args.seed, file.seed, "seed")?;
    let out = pick(args.out, file.out, PathBuf::from("."));

    let g = load_graph_json(&args.graph)?;
    let sigma = covariance_input(args.sigma.as_deref(), args.data.as_deref(), args.center)?;
    if sigma.rows() != g.n() {
        return Err(CliError::validation(format!(
            "covariance is {}x{} but the graph has {} vertices",
            sigma.rows(),
            sigma.cols(),
            g.n()
        )));
    }
    let mut rng = stream_rng(seed, 0);
    let outcome =
        condition_heuristic(&sigma, &g, tau, trials, eps, &mut rng).map_err(map_stability)?;
    let verdict = match outcome.verdict {
        Verdict::IllConditioned => "ill-conditioned",
        Verdict::WellConditioned => "well-conditioned",
    };
    println!(
        "verdict: {verdict} (mean kappa {:.6e} vs tau {:.3e}; {} trials at eps {:.3e}, {} failed)",
        outcome.mean_kappa, tau, outcome.trials, outcome.eps, outcome.report.failed_trials
    );
    if let Some(name) = args.output {
        let payload = json!({
            "verdict": verdict,
            "mean_kappa": outcome.mean_kappa,
            "tau": outcome.tau,
            "eps": outcome.eps,
            "trials": outcome.trials,
            "report": outcome.report,
        });
        let written = write_file(&out, &name, &json_bytes(&payload)?)?;
        println!("wrote {}", written.display());
    }
    Ok(())
}
