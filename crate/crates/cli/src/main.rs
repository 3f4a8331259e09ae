use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use scorefeat::error::Error;
use scorefeat::pipeline::{self, ExperimentConfig, PipelineOutcome};
use scorefeat::poly::{PolyFunction, PolySpec};
use scorefeat::spectral::{self, DecompConfig, DecompositionResult, InitMethod};
use scorefeat::stein::{self, LabeledDataset};
use scorefeat::tensor::{io, DenseTensor};
use scorefeat::{ModelSpec, ScoreOrder};

const GATE_FAILURE: u8 = 4;

#[derive(Parser)]
#[command(name = "scorefeat", version, about = "Higher-order score functions, Stein cross-moments and tensor decomposition")]
struct Cli {
    /// Directory that relative paths are resolved against.
    #[arg(long, global = true, default_value = ".")]
    workdir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate S_m at every point of a CSV file (header x1..xd).
    ScoreEval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        order: usize,
        /// Output tensor with the point index as first mode.
        #[arg(long)]
        out: PathBuf,
        /// Use the closed-form density-derivative route instead of the recursion.
        #[arg(long)]
        explicit: bool,
    },
    /// Cross-moment (1/N) Σ y_i ⊗ S_m(x_i) of a labeled dataset.
    Moment {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        order: usize,
        #[arg(long)]
        out: PathBuf,
        /// Also write entrywise standard errors.
        #[arg(long)]
        se_out: Option<PathBuf>,
    },
    /// Monte-Carlo check of E[G ⊗ S_m] = E[∇^m G]; exits 4 beyond the threshold.
    SteinCheck {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        g: PathBuf,
        #[arg(long)]
        order: usize,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Gate in standard errors.
        #[arg(long, default_value_t = 5.0)]
        threshold: f64,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Rank-k symmetric decomposition of an order-3 tensor (order 2: eigenpairs).
    Decompose {
        #[arg(long)]
        tensor: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        inits: Option<usize>,
        #[arg(long, default_value_t = 100)]
        iters: usize,
        #[arg(long, default_value_t = 0.5)]
        nu: f64,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "random")]
        init: InitMethod,
        /// Second-moment matrix used to whiten before decomposing.
        #[arg(long)]
        whiten_with: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment configuration end to end.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        /// Gate: fail with exit 4 if any planted direction is recovered worse than this.
        #[arg(long)]
        max_recovery_error: Option<f64>,
        /// Gate: fail with exit 4 if the Stein gap exceeds this many standard errors.
        #[arg(long)]
        max_stein_gap: Option<f64>,
    },
    /// Refit mixing weights on target inputs, then run the pipeline on the target.
    Selftaught {
        #[arg(long)]
        config: PathBuf,
        /// Source inputs (header x1..xd); synthesized from the config when absent.
        #[arg(long, requires = "target")]
        source: Option<PathBuf>,
        /// Target dataset (header x1..xd,y1); synthesized when absent.
        #[arg(long, requires = "source")]
        target: Option<PathBuf>,
        #[arg(long)]
        max_stein_gap: Option<f64>,
        /// Fail with exit 4 when the target log-likelihood is flagged low.
        #[arg(long)]
        strict_likelihood: bool,
    },
}

enum Outcome {
    Ok,
    Gate(String),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Gate(msg)) => {
            eprintln!("gate failed: {msg}");
            ExitCode::from(GATE_FAILURE)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Validation(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), Error> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).unwrap_or_default());
}

fn run(cli: &Cli) -> Result<Outcome, Error> {
    let at = |p: &Path| cli.workdir.join(p);
    match &cli.command {
        Command::ScoreEval {
            model,
            points,
            order,
            out,
            explicit,
        } => {
            let model: scorefeat::Model = ModelSpec::load(at(model))?.build()?;
            let m = ScoreOrder::new(*order)?;
            let (d, xs) = stein::read_points_csv(std::fs::File::open(at(points))?)?;
            if d != model.dim() {
                return Err(Error::Shape(format!("points have {d} columns, model dimension is {}", model.dim())));
            }
            let n = xs.len() / d;
            let mut data = Vec::with_capacity(n * d.pow(*order as u32));
            for (i, x) in xs.chunks(d).enumerate() {
                let s = if *explicit { model.score_explicit(x, m) } else { model.score(x, m) };
                data.extend_from_slice(s.map_err(|e| at_row(e, i))?.data());
            }
            let mut dims = vec![n];
            dims.extend(std::iter::repeat_n(d, *order));
            let t = DenseTensor::new(dims.clone(), data)?;
            io::save(at(out), &t)?;
            print_json(&json!({"points": n, "order": order, "dims": dims, "out": out}));
            Ok(Outcome::Ok)
        }
        Command::Moment {
            data,
            model,
            order,
            out,
            se_out,
        } => {
            let model: scorefeat::Model = ModelSpec::load(at(model))?.build()?;
            let data = LabeledDataset::load(at(data))?;
            let est = stein::cross_moment(&data, &model, ScoreOrder::new(*order)?)?;
            io::save(at(out), &est.value)?;
            if let Some(p) = se_out {
                io::save(at(p), &est.std_error)?;
            }
            print_json(&json!({
                "n": est.n,
                "dims": est.value.dims(),
                "max_std_error": est.max_std_error(),
                "mean_std_error": est.mean_std_error(),
                "out": out,
            }));
            Ok(Outcome::Ok)
        }
        Command::SteinCheck {
            model,
            g,
            order,
            samples,
            seed,
            threshold,
            report,
        } => {
            let model: scorefeat::Model = ModelSpec::load(at(model))?.build()?;
            let spec: PolySpec = read_json(&at(g))?;
            let g = PolyFunction::from_spec(&spec)?;
            let r = stein::stein_residual(&model, &g, ScoreOrder::new(*order)?, *samples, *seed)?;
            let pass = r.within(*threshold);
            let summary = json!({
                "order": order,
                "samples": samples,
                "seed": seed,
                "max_abs_gap": r.max_abs_gap,
                "max_gap_in_std_errors": r.max_gap_in_std_errors,
                "max_std_error": r.estimate.max_std_error(),
                "threshold": threshold,
                "pass": pass,
            });
            if let Some(p) = report {
                write_json(&at(p), &summary)?;
            }
            print_json(&summary);
            Ok(if pass {
                Outcome::Ok
            } else {
                Outcome::Gate(format!(
                    "Stein gap {:.2} standard errors exceeds {threshold}",
                    r.max_gap_in_std_errors
                ))
            })
        }
        Command::Decompose {
            tensor,
            k,
            inits,
            iters,
            nu,
            tol,
            seed,
            init,
            whiten_with,
            out,
        } => {
            let t = io::load(at(tensor))?;
            let mut cfg = DecompConfig::new(*k).with_seed(*seed);
            cfg.inits = inits.unwrap_or(cfg.inits);
            cfg.iters = *iters;
            cfg.nu = *nu;
            cfg.tol = *tol;
            cfg.init = *init;
            let result = match t.order() {
                2 => {
                    let components = spectral::matrix_decompose(&t, *k)?;
                    DecompositionResult {
                        residual_fro: t
                            .sub(&scorefeat::tensor::rank1_sum(
                                &components.iter().map(|c| c.weight).collect::<Vec<_>>(),
                                &components.iter().map(|c| c.vector.clone()).collect::<Vec<_>>(),
                                2,
                            )?)?
                            .frobenius_norm(),
                        candidates_kept: components.len(),
                        components,
                        starts: Vec::new(),
                    }
                }
                3 => match whiten_with {
                    Some(p) => spectral::decompose_whitened(&t, &io::load(at(p))?, &cfg)?,
                    None => spectral::decompose(&t, &cfg)?,
                },
                other => {
                    return Err(Error::Validation(format!("decompose takes order 2 or 3 tensors, got order {other}")));
                }
            };
            write_json(&at(out), &result)?;
            for (j, c) in result.components.iter().enumerate() {
                println!("[{j}] weight {:+.6e}", c.weight);
            }
            println!("residual {:.3e}", result.residual_fro);
            Ok(Outcome::Ok)
        }
        Command::Pipeline {
            config,
            max_recovery_error,
            max_stein_gap,
        } => {
            let mut cfg = ExperimentConfig::load(at(config))?;
            default_outputs(&mut cfg);
            let outcome = pipeline::run_pipeline_in(&cfg, &cli.workdir)?;
            finish(&outcome, *max_recovery_error, *max_stein_gap, false)
        }
        Command::Selftaught {
            config,
            source,
            target,
            max_stein_gap,
            strict_likelihood,
        } => {
            let mut cfg = ExperimentConfig::load(at(config))?;
            default_outputs(&mut cfg);
            let (xs, data) = match (source, target) {
                (Some(s), Some(t)) => {
                    let (_, xs) = stein::read_points_csv(std::fs::File::open(at(s))?)?;
                    (xs, LabeledDataset::load(at(t))?)
                }
                _ => pipeline::selftaught_synthesize(&cfg)?,
            };
            let outcome = pipeline::selftaught_pipeline_in(&xs, &data, &cfg, &cli.workdir)?;
            finish(&outcome, None, *max_stein_gap, *strict_likelihood)
        }
    }
}

fn at_row(e: Error, row: usize) -> Error {
    match e {
        Error::Degenerate { reason, .. } => Error::Degenerate { row: Some(row), reason },
        other => other,
    }
}

fn default_outputs(cfg: &mut ExperimentConfig) {
    let o = &mut cfg.outputs;
    o.report.get_or_insert_with(|| "report.json".into());
    o.summary.get_or_insert_with(|| "report.txt".into());
    o.components.get_or_insert_with(|| "components.json".into());
    o.timings.get_or_insert_with(|| "timings.json".into());
}

fn finish(
    outcome: &PipelineOutcome,
    max_recovery_error: Option<f64>,
    max_stein_gap: Option<f64>,
    strict_likelihood: bool,
) -> Result<Outcome, Error> {
    let report = &outcome.report;
    print!("{}", report.to_text());
    for t in &outcome.timings {
        eprintln!("{:>12}: {:.3} s", t.stage, t.seconds);
    }
    if let (Some(gate), Some(err)) = (max_recovery_error, report.max_recovery_error) {
        if err > gate {
            return Ok(Outcome::Gate(format!("recovery error {err:.3e} exceeds {gate}")));
        }
    }
    if let (Some(gate), Some(gap)) = (max_stein_gap, report.stein_gap) {
        if gap.max_gap_in_std_errors > gate {
            return Ok(Outcome::Gate(format!(
                "Stein gap {:.2} standard errors exceeds {gate}",
                gap.max_gap_in_std_errors
            )));
        }
    }
    if strict_likelihood && report.selftaught.as_ref().is_some_and(|s| s.low_likelihood) {
        return Ok(Outcome::Gate("target log-likelihood below the source by more than the threshold".into()));
    }
    Ok(Outcome::Ok)
}
