use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nalgebra::DVector;
use serde::Deserialize;

use trunclr::error::Error;
use trunclr::interval::IntervalUnion;
use trunclr::model::sample_truncated;
use trunclr::pipeline::{
    self, obtain_dataset, stage_rng, Mode, RunConfig, RunOptions, TraceSink,
};
use trunclr::{fixtures, EstimateReport};

const EXIT_CONFIG: u8 = 2;
const EXIT_STAGE: u8 = 3;
const EXIT_ASSUMPTION: u8 = 4;

#[derive(Parser)]
#[command(name = "trunclr", about = "Linear regression from truncated samples", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the estimator described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Where to write the report JSON (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Directory for per-run iterate traces.
        #[arg(long)]
        trace_dir: Option<PathBuf>,
        /// Parallel PSGD runs; 1 keeps everything on one thread.
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Escalate assumption-violation warnings to a failing exit code.
        #[arg(long)]
        strict: bool,
    },
    /// Generate a dataset from a config's model (or a named fixture).
    Generate {
        #[arg(long, conflicts_with = "fixture")]
        config: Option<PathBuf>,
        /// Built-in model: `desk` or `basis-pair-plus` / `basis-pair-minus`.
        #[arg(long)]
        fixture: Option<String>,
        /// Sample count for fixture generation.
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        /// Seed for fixture generation.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare a report against known ground truth.
    Eval {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
}

#[derive(Deserialize)]
struct Truth {
    w_star: Vec<f64>,
    #[serde(default)]
    survival_set: Option<IntervalUnion>,
}

fn exit_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Schema { .. } => EXIT_CONFIG,
        Error::Stage { source, .. } => exit_for(source),
        _ => EXIT_STAGE,
    }
}

fn cmd_run(
    config: PathBuf,
    out: Option<PathBuf>,
    trace_dir: Option<PathBuf>,
    workers: usize,
    strict: bool,
) -> Result<u8, Error> {
    let cfg = RunConfig::from_json_file(&config)?;
    if cfg.mode == Mode::GenerateOnly {
        return Err(Error::Config(
            "generate_only configs belong to the `generate` command".into(),
        ));
    }
    let options = RunOptions {
        trace: trace_dir.map(|dir| TraceSink { dir }),
        workers: workers.max(1),
    };
    let report = pipeline::run(&cfg, &options)?;
    if let Some(sink) = &options.trace {
        pipeline::write_metrics(&report, &sink.dir.join("metrics.csv"))?;
    }
    if report.diagnostics.assumption_violation {
        eprintln!(
            "warning: ill-conditioned feature design (min eigenvalue {:.3e}); \
             some directions of the weight vector are not identifiable from this data",
            report.diagnostics.min_design_eigenvalue
        );
    }
    match &out {
        Some(path) => pipeline::save_report(&report, path)?,
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    if strict && report.diagnostics.assumption_violation {
        return Ok(EXIT_ASSUMPTION);
    }
    Ok(0)
}

fn cmd_generate(
    config: Option<PathBuf>,
    fixture: Option<String>,
    n: usize,
    seed: u64,
    out: PathBuf,
) -> Result<u8, Error> {
    let data = match (config, fixture) {
        (Some(path), None) => {
            let cfg = RunConfig::from_json_file(&path)?;
            if cfg.model.is_none() {
                return Err(Error::Config("generate requires a config with a `model`".into()));
            }
            obtain_dataset(&cfg)?
        }
        (None, Some(name)) => {
            let mut rng = stage_rng(seed, "generate");
            let model = match name.as_str() {
                "desk" => fixtures::desk_model(&mut rng)?,
                "basis-pair-plus" => fixtures::basis_vector_pair(10.0, 3, &mut rng)?.0,
                "basis-pair-minus" => fixtures::basis_vector_pair(10.0, 3, &mut rng)?.1,
                other => {
                    return Err(Error::Config(format!("unknown fixture `{other}`")));
                }
            };
            sample_truncated(&model, n, &mut rng)?
        }
        _ => {
            return Err(Error::Config(
                "generate needs exactly one of --config or --fixture".into(),
            ))
        }
    };
    data.save_csv(&out)?;
    eprintln!("wrote {} rows to {}", data.len(), out.display());
    Ok(0)
}

fn cmd_eval(report_path: PathBuf, truth_path: PathBuf) -> Result<u8, Error> {
    let report: EstimateReport = pipeline::load_report(&report_path)?;
    let text = std::fs::read_to_string(&truth_path)?;
    let truth: Truth = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", truth_path.display())))?;
    if truth.w_star.len() != report.w_final.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.w_star.len(),
            got: report.w_final.len(),
        });
    }
    let w_star = DVector::from_vec(truth.w_star.clone());
    let w_final = DVector::from_vec(report.w_final.clone());
    let w_warm = DVector::from_vec(report.w_hat_warm.clone());
    let mut summary = serde_json::json!({
        "final_error": (&w_final - &w_star).norm(),
        "warm_start_error": (&w_warm - &w_star).norm(),
    });
    if let Some(true_set) = &truth.survival_set {
        let sym = report.learned_set.symdiff(true_set);
        summary["set_symdiff_mass_at_origin"] = serde_json::json!(sym.gaussian_mass(0.0));
    }
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out, trace_dir, workers, strict } => {
            cmd_run(config, out, trace_dir, workers, strict)
        }
        Command::Generate { config, fixture, n, seed, out } => {
            cmd_generate(config, fixture, n, seed, out)
        }
        Command::Eval { report, truth } => cmd_eval(report, truth),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            let mut src = std::error::Error::source(&err);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(exit_for(&err))
        }
    }
}
