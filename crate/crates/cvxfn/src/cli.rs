//! Command implementations behind the `cvxfn` binary.
//!
//! Exit codes: 0 success, 1 I/O or parse failure, 2 domain violation
//! (inconsistent data, certificate failure, method/model mismatch),
//! 3 internal invariant breach. Output files are written atomically.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::json;

use crate::cnf::{embed_dualnet, CnfModel, CNF_FORMAT};
use crate::dual::{BuildConfig, DualNet, DUALNET_FORMAT};
use crate::error::{CvxError, Result};
use crate::extension::primal_envelope;
use crate::geometry::{NetConfig, SampleSet, Vector};
use crate::io;
use crate::reference::Reference;
use crate::relu::{compile_max, compile_min, AssembledNetwork, ReluNetwork, RELUMLP_FORMAT};
use crate::rng;
use crate::training::{self, jensen_gap, TrainConfig, ABLATION_TARGET_WIDTH};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARSE: i32 = 1;
pub const EXIT_DOMAIN: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "cvxfn",
    about = "Reconstruct, certify, and train convex Lipschitz functions from samples",
    after_help = "File formats: sample CSV has header x1,...,xd,y with one row per \
                  sample; models are versioned JSON (dualnet/1, cnf/1, relumlp/1). \
                  Ablation CSV columns: dim,run,param_ratio,train_mse,test_mse,jensen_gap."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a max-affine reconstruction from sample data.
    Reconstruct {
        /// Sample CSV (header x1,...,xd,y).
        #[arg(long)]
        samples: PathBuf,
        /// Lipschitz constant of the sampled function.
        #[arg(long)]
        lipschitz: f64,
        /// Target uniform accuracy.
        #[arg(long)]
        epsilon: f64,
        /// Cap on the number of slope directions; the net radius coarsens
        /// to respect it.
        #[arg(long, default_value_t = 100_000)]
        m_cap: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output model path (dualnet/1 JSON).
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a model on points from a CSV.
    Eval {
        /// Model file (dualnet/1, cnf/1, or relumlp/1), depending on method.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Points CSV (header x1,...,xd; a trailing y column is ignored).
        #[arg(long)]
        points: PathBuf,
        /// dual | primal | cnf | mlp
        #[arg(long, default_value = "dual")]
        method: String,
        /// Sample CSV, required by the primal method.
        #[arg(long)]
        samples: Option<PathBuf>,
        /// Lipschitz constant accompanying --samples.
        #[arg(long)]
        lipschitz: Option<f64>,
        /// Iteration budget for the primal envelope solver.
        #[arg(long, default_value_t = 500)]
        budget: usize,
        /// Also report the sup gap against a named reference functional
        /// (norm | huber | maxaffine).
        #[arg(long)]
        reference: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV path (defaults to stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the structural convexity certificate of a stored model.
    Certify {
        /// cnf/1 model file.
        #[arg(long)]
        cnf: PathBuf,
        /// Jensen/Lipschitz probe count.
        #[arg(long, default_value_t = 1000)]
        probes: usize,
        /// Half-width of the probe box around the origin.
        #[arg(long, default_value_t = 1.0)]
        box_halfwidth: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train one certified model against a random convex target.
    Train {
        #[arg(long)]
        target_dim: usize,
        #[arg(long, default_value_t = 1)]
        runs: usize,
        #[arg(long, default_value_t = 200)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = ABLATION_TARGET_WIDTH)]
        target_width: usize,
        #[arg(long, default_value_t = 1e-3)]
        learning_rate: f64,
        /// Output CSV (dim,run,param_ratio,train_mse,test_mse,jensen_gap).
        #[arg(long)]
        out: PathBuf,
    },
    /// Dimensional ablation over several input dimensions.
    Ablate {
        /// Comma-separated input dimensions, e.g. 1,20,50,100.
        #[arg(long, value_delimiter = ',')]
        dims: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        runs: usize,
        #[arg(long, default_value_t = 200)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = ABLATION_TARGET_WIDTH)]
        target_width: usize,
        #[arg(long, default_value_t = 1e-3)]
        learning_rate: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export a reconstruction as a single ReLU network.
    ExportMlp {
        /// dualnet/1 model file.
        #[arg(long)]
        model: PathBuf,
        /// Output relumlp/1 JSON.
        #[arg(long)]
        out: PathBuf,
    },
}

/// Run a parsed command, mapping errors onto the exit-code convention.
pub fn run(cli: Cli) -> i32 {
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code_for(&err)
        }
    }
}

fn exit_code_for(err: &CvxError) -> i32 {
    match err {
        CvxError::Io(_) | CvxError::Json(_) | CvxError::Csv(_) | CvxError::Parse(_) => EXIT_PARSE,
        _ => EXIT_DOMAIN,
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Reconstruct { samples, lipschitz, epsilon, m_cap, seed, out } => {
            cmd_reconstruct(&samples, lipschitz, epsilon, m_cap, seed, &out)
        }
        Command::Eval {
            model,
            points,
            method,
            samples,
            lipschitz,
            budget,
            reference,
            seed,
            out,
        } => cmd_eval(
            model.as_deref(),
            &points,
            &method,
            samples.as_deref(),
            lipschitz,
            budget,
            reference.as_deref(),
            seed,
            out.as_deref(),
        ),
        Command::Certify { cnf, probes, box_halfwidth, seed } => {
            cmd_certify(&cnf, probes, box_halfwidth, seed)
        }
        Command::Train { target_dim, runs, iters, seed, target_width, learning_rate, out } => {
            cmd_ablate(&[target_dim], runs, iters, seed, target_width, learning_rate, &out)
        }
        Command::Ablate { dims, runs, iters, seed, target_width, learning_rate, out } => {
            cmd_ablate(&dims, runs, iters, seed, target_width, learning_rate, &out)
        }
        Command::ExportMlp { model, out } => cmd_export_mlp(&model, &out),
    }
}

fn cmd_reconstruct(
    samples_path: &Path,
    lipschitz: f64,
    epsilon: f64,
    m_cap: usize,
    seed: u64,
    out: &Path,
) -> Result<i32> {
    let samples = io::read_samples_csv(samples_path, lipschitz)?;
    let cfg = BuildConfig { m_cap: Some(m_cap), net: NetConfig { seed, ..NetConfig::default() } };
    let net = DualNet::build(&samples, epsilon, &cfg)?;
    io::write_atomic(out, &net.to_json()?)?;
    let meta = net.meta();
    println!(
        "{}",
        json!({
            "N": meta.n,
            "d": meta.d,
            "M": meta.m,
            "epsilon": meta.epsilon,
            "eta": meta.eta,
            "eta_achieved": meta.eta_achieved,
            "degenerate": meta.degenerate,
            "out": out.display().to_string(),
        })
    );
    Ok(EXIT_OK)
}

/// A loaded model file, dispatched by its `format` field.
enum ModelFile {
    Dual(DualNet),
    Cnf(CnfModel),
    Mlp(ReluNetwork),
}

fn load_model(path: &Path) -> Result<ModelFile> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let format = value.get("format").and_then(|f| f.as_str()).unwrap_or("");
    match format {
        DUALNET_FORMAT => Ok(ModelFile::Dual(DualNet::from_json(&text)?)),
        CNF_FORMAT => Ok(ModelFile::Cnf(CnfModel::from_json(&text)?)),
        RELUMLP_FORMAT => Ok(ModelFile::Mlp(ReluNetwork::from_json(&text)?)),
        other => Err(CvxError::Parse(format!(
            "{}: unknown model format '{other}'",
            path.display()
        ))),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    model_path: Option<&Path>,
    points_path: &Path,
    method: &str,
    samples_path: Option<&Path>,
    lipschitz: Option<f64>,
    budget: usize,
    reference: Option<&str>,
    seed: u64,
    out: Option<&Path>,
) -> Result<i32> {
    let (points, _) = io::read_points_csv(points_path, false)?;
    let values: Vec<f64> = match method {
        "dual" => {
            let net = require_dual(model_path)?;
            net.evaluate_batch(&points)?
        }
        "cnf" => {
            let model = match load_model(require_path(model_path, "cnf")?)? {
                ModelFile::Cnf(m) => m,
                ModelFile::Dual(net) => embed_dualnet(&net),
                ModelFile::Mlp(_) => {
                    return Err(CvxError::InvalidModel(
                        "method cnf needs a cnf/1 or dualnet/1 model".into(),
                    ))
                }
            };
            let report = model.validate();
            if let Some(first) = report.first() {
                return Err(CvxError::InvalidModel(first.to_string()));
            }
            points.iter().map(|x| model.forward(x)).collect::<Result<Vec<f64>>>()?
        }
        "mlp" => {
            match load_model(require_path(model_path, "mlp")?)? {
                ModelFile::Mlp(net) => points
                    .iter()
                    .map(|x| net.forward_scalar(x.coords()))
                    .collect::<Result<Vec<f64>>>()?,
                ModelFile::Dual(dual) => {
                    let asm = AssembledNetwork::from_dualnet(&dual)?;
                    points.iter().map(|x| asm.evaluate(x)).collect::<Result<Vec<f64>>>()?
                }
                ModelFile::Cnf(_) => {
                    return Err(CvxError::InvalidModel(
                        "method mlp needs a relumlp/1 or dualnet/1 model".into(),
                    ))
                }
            }
        }
        "primal" => {
            let (spath, l) = match (samples_path, lipschitz) {
                (Some(s), Some(l)) => (s, l),
                _ => {
                    return Err(CvxError::InvalidModel(
                        "method primal needs --samples and --lipschitz".into(),
                    ))
                }
            };
            let samples = io::read_samples_csv(spath, l)?;
            points
                .iter()
                .map(|x| primal_envelope(&samples, x, budget))
                .collect::<Result<Vec<f64>>>()?
        }
        other => {
            return Err(CvxError::Parse(format!(
                "unknown method '{other}' (expected dual, primal, cnf, or mlp)"
            )))
        }
    };

    let csv = io::points_to_csv_with_column(&points, &values, "value");
    match out {
        Some(path) => io::write_atomic(path, &csv)?,
        None => print!("{csv}"),
    }

    if let Some(name) = reference {
        let dim = points.first().map_or(0, Vector::dim);
        let reference = Reference::by_name(name, dim, seed)?;
        let worst = points
            .iter()
            .zip(&values)
            .map(|(x, v)| (reference.evaluate(x) - v).abs())
            .fold(0.0f64, f64::max);
        println!("{}", json!({ "reference": name, "uniform_error": worst }));
    }
    Ok(EXIT_OK)
}

fn require_path<'p>(path: Option<&'p Path>, method: &str) -> Result<&'p Path> {
    path.ok_or_else(|| CvxError::InvalidModel(format!("method {method} needs --model")))
}

fn require_dual(path: Option<&Path>) -> Result<DualNet> {
    match load_model(require_path(path, "dual")?)? {
        ModelFile::Dual(net) => Ok(net),
        _ => Err(CvxError::InvalidModel("method dual needs a dualnet/1 model".into())),
    }
}

fn cmd_certify(cnf_path: &Path, probes: usize, box_halfwidth: f64, seed: u64) -> Result<i32> {
    let text = std::fs::read_to_string(cnf_path)?;
    let file: crate::cnf::CnfFile = serde_json::from_str(&text)?;
    let model = CnfModel::from_file_unvalidated(file)?;
    let report = model.validate();
    if !report.is_valid() {
        println!(
            "{}",
            json!({
                "structural": "fail",
                "violations": report.violations.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
            })
        );
        return Ok(EXIT_DOMAIN);
    }

    let dim = model.input_dim();
    let lo = vec![-box_halfwidth; dim];
    let hi = vec![box_halfwidth; dim];
    let gap = jensen_gap(|x| model.forward_unchecked(x), probes, &lo, &hi, seed);
    let bound = model.lipschitz_bound();
    // sampled Lipschitz ratio against the certificate bound
    let mut r = rng::stream(seed, "certify-lipschitz");
    let mut ratio_max = 0.0f64;
    use rand::Rng;
    for _ in 0..probes.max(1) {
        let a = Vector::new((0..dim).map(|_| r.gen_range(-box_halfwidth..box_halfwidth)).collect())
            .expect("finite draw");
        let b = Vector::new((0..dim).map(|_| r.gen_range(-box_halfwidth..box_halfwidth)).collect())
            .expect("finite draw");
        let d = a.dist(&b);
        if d > 1e-12 {
            let ratio = (model.forward_unchecked(&a) - model.forward_unchecked(&b)).abs() / d;
            ratio_max = ratio_max.max(ratio);
        }
    }
    println!(
        "{}",
        json!({
            "structural": "pass",
            "lipschitz_bound": bound,
            "sampled_lipschitz_ratio": ratio_max,
            "sampled_jensen_gap": gap,
            "probes": probes,
        })
    );
    Ok(EXIT_OK)
}

fn cmd_ablate(
    dims: &[usize],
    runs: usize,
    iters: usize,
    seed: u64,
    target_width: usize,
    learning_rate: f64,
    out: &Path,
) -> Result<i32> {
    let cfg = TrainConfig {
        iterations: iters,
        learning_rate,
        batch_size: 1000,
        seed,
        jensen_probes: 200,
    };
    let table = training::ablation(dims, runs, target_width, &cfg)?;
    io::write_atomic(out, &table.to_csv())?;
    for s in &table.summaries {
        println!(
            "{}",
            json!({
                "dim": s.dim,
                "param_ratio": format!("{:.3} +/- {:.3}", s.param_ratio_mean, s.param_ratio_std),
                "train_mse": format!("{:.3e} +/- {:.3e}", s.train_mse_mean, s.train_mse_std),
                "test_mse": format!("{:.3e} +/- {:.3e}", s.test_mse_mean, s.test_mse_std),
                "jensen_gap": format!("{:.3e} +/- {:.3e}", s.jensen_gap_mean, s.jensen_gap_std),
            })
        );
    }
    Ok(EXIT_OK)
}

fn cmd_export_mlp(model_path: &Path, out: &Path) -> Result<i32> {
    let net = match load_model(model_path)? {
        ModelFile::Dual(net) => net,
        _ => return Err(CvxError::InvalidModel("export-mlp needs a dualnet/1 model".into())),
    };
    let m = net.size();
    let n = net.meta().n.max(1);
    let phi = compile_max(m)?;
    let psi = compile_min(n)?;
    for (name, q, c) in [("max", m, phi.complexity()), ("min", n, psi.complexity())] {
        if q >= 2 {
            let stages = (q as f64).log2().ceil() as usize;
            if c.size > 16 * q || c.width > 3 * q || c.activation_stages > stages {
                eprintln!("internal error: compiled {name} network exceeds its size bounds: {c:?}");
                return Ok(EXIT_INTERNAL);
            }
        }
    }
    let asm = AssembledNetwork::from_dualnet(&net)?;
    let fused = asm.fused_mlp();
    io::write_atomic(out, &fused.to_json()?)?;
    println!(
        "{}",
        json!({
            "out": out.display().to_string(),
            "fused": fused.complexity(),
            "max_net": phi.complexity(),
            "min_net": psi.complexity(),
        })
    );
    Ok(EXIT_OK)
}
