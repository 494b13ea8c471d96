use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use ampud::amp::{self, AmpConfig, Denoiser};
use ampud::harness::{
    self, generate_instance, parse_tagged, read_instance, write_instance, DenoiserSpec, ExperimentConfig,
    InstanceMeta, TuneConfig, INSTANCE_SCHEMA,
};
use ampud::model::{measurements_for_rate, sdr_db, io, SignalSource};
use ampud::universal::UniversalDenoiser;
use ampud::{Error, Result};

/// Compressed-sensing recovery with approximate message passing and a
/// universal context-clustering denoiser.
#[derive(Parser)]
#[command(name = "ampud", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a signal, Gaussian matrix and noisy measurements.
    Generate(GenerateArgs),
    /// Run AMP on an instance directory written by `generate`.
    Reconstruct(ReconstructArgs),
    /// Run an experiment sweep from a JSON config.
    Sweep(SweepArgs),
    /// Sweep with a window denoiser and compare with state evolution.
    SeCompare(SweepArgs),
    /// Grid search for the decay-rate coefficients b1, b2.
    TuneBeta(TuneArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Source kind (`mconst`, `sparse_laplace`, ...) or a JSON object.
    #[arg(long)]
    source: String,
    #[arg(long)]
    n: usize,
    #[arg(long, conflicts_with = "rate")]
    m: Option<usize>,
    #[arg(long)]
    rate: Option<f64>,
    #[arg(long)]
    snr_db: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write CSV copies of x, A and y.
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct ReconstructArgs {
    #[arg(long)]
    input: PathBuf,
    /// Denoiser kind or a JSON object, e.g. `{"kind":"window_mconst","k":1}`.
    #[arg(long)]
    denoiser: String,
    #[arg(long, default_value_t = 100)]
    t_max: usize,
    #[arg(long, default_value_t = 0.1)]
    lambda: f64,
    #[arg(long)]
    damp_onsager: bool,
    #[arg(long)]
    out: PathBuf,
    /// Write per-iteration cluster diagnostics (universal denoiser only).
    #[arg(long)]
    diagnostics: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Overrides `output` in the config.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Args)]
struct TuneArgs {
    /// Optional JSON config; defaults are used for missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    output: Option<PathBuf>,
}

fn generate(args: GenerateArgs) -> Result<serde_json::Value> {
    let source: SignalSource = parse_tagged(&args.source)?;
    let m = match (args.m, args.rate) {
        (Some(m), _) => m,
        (None, Some(r)) if r > 0.0 => measurements_for_rate(args.n, r),
        _ => return Err(Error::InvalidArgument("give --m or a positive --rate".into())),
    };
    let inst = generate_instance(&source, args.n, m, args.snr_db, args.seed, 0)?;
    let meta = InstanceMeta {
        schema: INSTANCE_SCHEMA.into(),
        source,
        n: args.n,
        m,
        snr_db: args.snr_db,
        sigma_z_sq: inst.system.sigma_z_sq(),
        seed: args.seed,
    };
    write_instance(&args.out, &meta, &inst, args.csv)?;
    Ok(json!({ "out": args.out, "n": args.n, "m": m, "sigma_z_sq": meta.sigma_z_sq }))
}

fn reconstruct(args: ReconstructArgs) -> Result<serde_json::Value> {
    let (meta, sys, x) = read_instance(&args.input)?;
    let spec: DenoiserSpec = parse_tagged(&args.denoiser)?;
    let recorder = match (&spec, args.diagnostics) {
        (DenoiserSpec::Universal(cfg), true) => Some(UniversalDenoiser::recording(cfg.clone())),
        (_, true) => return Err(Error::InvalidArgument("--diagnostics needs the universal denoiser".into())),
        _ => None,
    };
    let built;
    let denoiser: &dyn Denoiser = match &recorder {
        Some(r) => r,
        None => {
            built = spec.build(&meta.source)?;
            built.as_ref()
        }
    };
    let cfg = AmpConfig { t_max: args.t_max, lambda: args.lambda, damp_onsager: args.damp_onsager };
    fs::create_dir_all(&args.out)?;
    let outcome = amp::run(&sys, denoiser, &cfg, x.as_deref());
    if let Some(r) = &recorder {
        fs::write(args.out.join("diagnostics.json"), serde_json::to_string_pretty(&r.take_diagnostics())?)?;
    }
    let run = match outcome {
        Ok(run) => run,
        Err(fail) => {
            fail.trace.write_csv(args.out.join("trace.csv"))?;
            return Err(fail.error);
        }
    };
    run.trace.write_csv(args.out.join("trace.csv"))?;
    io::write_f64_le(args.out.join("x_hat.bin"), &run.state.x)?;
    let sdr = x.as_deref().map(|x| sdr_db(x, &run.state.x)).transpose()?;
    let result = json!({
        "schema": "ampud.reconstruct.v1",
        "denoiser": spec,
        "iterations": run.state.t,
        "sigma_hat_sq": run.state.sigma_hat_sq,
        "sdr_db": sdr,
    });
    fs::write(args.out.join("result.json"), serde_json::to_string_pretty(&result)?)?;
    Ok(result)
}

fn load_experiment(args: &SweepArgs) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg: ExperimentConfig = serde_json::from_str(&fs::read_to_string(&args.config)?)?;
    cfg.seed = args.seed;
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(o) = &args.output {
        cfg.output = Some(o.clone());
    }
    let out = cfg.output.clone().ok_or_else(|| Error::InvalidArgument("no output directory given".into()))?;
    cfg.validate()?;
    Ok((cfg, out))
}

fn cell_report(cells: &[harness::CellSummary], out: &Path) -> serde_json::Value {
    json!({ "out": out, "cells": cells })
}

fn sweep(args: SweepArgs) -> Result<serde_json::Value> {
    let (cfg, out) = load_experiment(&args)?;
    let result = harness::run_experiment(&cfg)?;
    harness::write_experiment(&result, &out)?;
    Ok(cell_report(&result.cells, &out))
}

fn se_compare(args: SweepArgs) -> Result<serde_json::Value> {
    let (cfg, out) = load_experiment(&args)?;
    let (result, rows) = harness::run_se_comparison(&cfg)?;
    harness::write_experiment(&result, &out)?;
    harness::write_se_comparison(&rows, out.join("se_compare.csv"))?;
    Ok(cell_report(&result.cells, &out))
}

fn tune_beta(args: TuneArgs) -> Result<serde_json::Value> {
    let mut cfg: TuneConfig = match &args.config {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?)?,
        None => serde_json::from_value(json!({ "seed": args.seed }))?,
    };
    cfg.seed = args.seed;
    if let Some(o) = &args.output {
        cfg.output = Some(o.clone());
    }
    let out = cfg.output.clone().ok_or_else(|| Error::InvalidArgument("no output directory given".into()))?;
    let result = harness::run_tune_beta(&cfg)?;
    harness::write_tune_beta(&result, &out)?;
    Ok(json!({ "out": out, "best": result.best }))
}

fn fail(kind: &str, message: String, code: u8) -> ExitCode {
    eprintln!("{}", json!({ "error": { "kind": kind, "message": message } }));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string(), 2),
    };
    let outcome = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Reconstruct(a) => reconstruct(a),
        Command::Sweep(a) => sweep(a),
        Command::SeCompare(a) => se_compare(a),
        Command::TuneBeta(a) => tune_beta(a),
    };
    match outcome {
        Ok(report) => {
            println!("{}", serde_json::to_string_pretty(&report).unwrap_or_default());
            ExitCode::SUCCESS
        }
        Err(e) => fail(e.kind(), e.to_string(), 1),
    }
}
