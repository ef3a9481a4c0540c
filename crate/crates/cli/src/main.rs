use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde_json::json;
use spectra_count::determinant::{coeff_bound_check, decay_slope, taylor_coeffs, TaylorOptions};
use spectra_count::dynkin::{
    calibrate_dbar_ladder, calibrate_recover, cauchy_green_reconstruct, default_dbar_ladder, recover_coeff_bounds,
    verify_dbar_bound, CoefficientSource, DynkinExtension, PolarGrid, QuadSpec,
};
use spectra_count::extremal::{plant_zeros, write_plant_outputs, PlantOptions, SurrogateOuter};
use spectra_count::harness::{
    emit_report, evaluate_bounds, run_experiment, Cell, ExperimentConfig, ExperimentKind, Grid, ReportFormat, OUT_ENV,
};
use spectra_count::model::{gevrey_potential, PotentialKind, PotentialSpec};
use spectra_count::zeros::{count_eigenvalues, CountMethod, CountOptions};
use spectra_count::{ConstantsConfig, Result};

#[derive(Parser)]
#[command(name = "spectra-count", version, about = "Eigenvalue counting for non-selfadjoint Jacobi matrices")]
struct Cli {
    /// Experiment config (JSON). When given, it replaces the subcommand flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// ConstantsConfig JSON used by the bound calculators.
    #[arg(long, global = true)]
    constants: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, env = OUT_ENV, default_value = "spectra-count-out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Diagonal,
    Offdiagonal,
    ComplexPhase,
}

impl From<Kind> for PotentialKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Diagonal => PotentialKind::Diagonal,
            Kind::Offdiagonal => PotentialKind::Offdiagonal,
            Kind::ComplexPhase => PotentialKind::ComplexPhase,
        }
    }
}

#[derive(Args)]
struct PotentialArgs {
    /// PotentialSpec JSON; overrides the envelope flags.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long = "B", default_value_t = 1.0)]
    b: f64,
    #[arg(long = "D", default_value_t = 2.0)]
    d: f64,
    #[arg(long, default_value_t = 0.75)]
    gamma: f64,
    #[arg(long, value_enum, default_value_t = Kind::Diagonal)]
    kind: Kind,
    #[arg(long, default_value_t = 1e-16)]
    cutoff_tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl PotentialArgs {
    fn build(&self) -> Result<PotentialSpec> {
        match &self.spec {
            Some(path) => PotentialSpec::from_json(&fs::read_to_string(path)?),
            None => gevrey_potential(self.b, self.d, self.gamma, self.kind.into(), self.cutoff_tol, self.seed),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Argument,
    Eigen,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
    Md,
}

#[derive(Subcommand)]
enum Command {
    /// Count eigenvalues off [-1, 1].
    Eigcount {
        #[command(flatten)]
        potential: PotentialArgs,
        #[arg(long, value_enum, default_value_t = Method::Both)]
        method: Method,
        #[arg(long, default_value_t = 0.999)]
        r_max: f64,
        #[arg(long)]
        no_locate: bool,
    },
    /// Taylor coefficients of the perturbation determinant, as CSV.
    Coeffs {
        #[command(flatten)]
        potential: PotentialArgs,
        #[arg(long = "J", default_value_t = 40)]
        order: usize,
    },
    /// Evaluate every bound whose parameters are given.
    Bounds {
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long = "A")]
        a: Option<f64>,
        #[arg(long)]
        a_f: Option<f64>,
        #[arg(long)]
        a_f_prime: Option<f64>,
        #[arg(long)]
        d_f: Option<f64>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long = "B")]
        b: Option<f64>,
        #[arg(long = "D")]
        d: Option<f64>,
    },
    /// Build the extension of a Gevrey series and check its dbar bound.
    DynkinVerify {
        #[arg(long, default_value_t = 0.0)]
        beta: f64,
        #[arg(long, default_value_t = 1.0)]
        a_f: f64,
        #[arg(long, default_value_t = 1.0)]
        a_f_prime: f64,
        #[arg(long, default_value_t = 64)]
        grid: usize,
        /// Calibrate (C, C_1) and C_recover instead of using the constants as given.
        #[arg(long)]
        calibrate: bool,
    },
    /// Plant zeros by subtracting an arc interpolant.
    Plant {
        #[arg(long = "A", default_value_t = 16.0)]
        a: f64,
        #[arg(long = "thetaA", default_value_t = 0.1)]
        theta_a: f64,
        #[arg(long = "N", default_value_t = 20)]
        n: usize,
        /// Arc halfwidth; defaults to 0.8 theta_A.
        #[arg(long)]
        arc: Option<f64>,
        #[arg(long, default_value_t = 0.99)]
        node_radius: f64,
    },
    /// Grid sweep of eigenvalue counts against the bounds.
    Sweep {
        #[arg(long, value_delimiter = ',', default_value = "0.75")]
        gamma: Vec<f64>,
        #[arg(long = "B", value_delimiter = ',', default_value = "1")]
        b: Vec<f64>,
        #[arg(long = "D", value_delimiter = ',', default_value = "2,4,8,16,32")]
        d: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        parallelism: usize,
    },
    /// Emit a report for a finished run directory.
    Report {
        run: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Md)]
        format: Format,
    },
}

fn load_constants(path: Option<&Path>) -> Result<ConstantsConfig> {
    let consts = match path {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?)?,
        None => ConstantsConfig::default(),
    };
    consts.validate()?;
    Ok(consts)
}

fn print_json(v: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn run_config(mut cfg: ExperimentConfig, cli: &Cli) -> Result<()> {
    if cfg.output_dir.is_none() {
        cfg.output_dir = Some(cli.out.clone());
    }
    let (manifest, dir) = run_experiment(&cfg)?;
    let report = emit_report(&dir, ReportFormat::Md, None)?;
    emit_report(&dir, ReportFormat::Csv, None)?;
    print_json(&json!({
        "run_dir": dir,
        "manifest_id": manifest.id,
        "report": report,
        "cells": manifest.cells.iter().map(|c| json!({"label": c.label, "status": c.status})).collect::<Vec<_>>(),
    }))
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(path) = &cli.config {
        let mut cfg = ExperimentConfig::load(path)?;
        if cfg.constants.is_none() && cfg.constants_file.is_none() && cli.constants.is_some() {
            cfg.constants = Some(load_constants(cli.constants.as_deref())?);
        }
        return run_config(cfg, cli);
    }
    let consts = load_constants(cli.constants.as_deref())?;
    let Some(command) = &cli.command else {
        return Err(spectra_count::Error::Config("a subcommand or --config is required".into()));
    };
    match command {
        Command::Eigcount { potential, method, r_max, no_locate } => {
            let spec = potential.build()?;
            let opts = CountOptions {
                r_max: *r_max,
                method: match method {
                    Method::Argument => CountMethod::ArgumentPrinciple,
                    Method::Eigen => CountMethod::Eigensolver,
                    Method::Both => CountMethod::Both,
                },
                locate: !no_locate,
                ..CountOptions::default()
            };
            println!("{}", count_eigenvalues(&spec, &opts)?.to_json()?);
        }
        Command::Coeffs { potential, order } => {
            let spec = potential.build()?;
            let series = taylor_coeffs(&spec, *order, &TaylorOptions::default())?;
            series.write_csv(std::io::stdout())?;
            if let Some(env) = spec.decay() {
                let check = coeff_bound_check(&series, env.b, env.d, env.gamma, &consts);
                let slope = decay_slope(&series, env.gamma, 5, (*order).min(40));
                eprintln!(
                    "{}",
                    json!({"consistency_gap": series.consistency_gap, "reliable": series.is_reliable(),
                           "decay_slope": slope, "bound_pass": check.pass, "log_D1": check.log_d1})
                );
            }
        }
        Command::Bounds { beta, a, a_f, a_f_prime, d_f, gamma, b, d } => {
            let cell = Cell {
                beta: *beta,
                a: *a,
                a_f: *a_f,
                a_f_prime: *a_f_prime,
                d_f: *d_f,
                gamma: *gamma,
                b: *b,
                d: *d,
                ..Cell::default()
            };
            println!("{}", evaluate_bounds(&cell, &consts).to_json()?);
        }
        Command::DynkinVerify { beta, a_f, a_f_prime, grid, calibrate } => {
            let alpha = (1.0 + beta) / (2.0 + beta);
            let source = CoefficientSource::Gevrey { alpha, a: *a_f, a_prime: *a_f_prime };
            let ext = DynkinExtension::new(source, *beta, *a_f, *a_f_prime)?;
            let grid = PolarGrid { n_r: *grid, n_theta: *grid };
            let consts = if *calibrate {
                let c = calibrate_dbar_ladder(&ext, grid, &default_dbar_ladder(), &consts)?;
                calibrate_recover(&ext, 0..=200, &c)
            } else {
                consts
            };
            let dbar = verify_dbar_bound(&ext, grid, &consts)?;
            let recon: Vec<_> = [Complex64::new(0.0, 0.0), Complex64::new(0.3, 0.4), Complex64::new(0.0, 0.5)]
                .iter()
                .map(|&z| {
                    cauchy_green_reconstruct(&ext, z, &QuadSpec::default()).map(|r| {
                        json!({"z": [z.re, z.im], "value": [r.value.re, r.value.im],
                                        "error": (r.value - ext.extend(z)).norm(), "levels": r.levels})
                    })
                })
                .collect::<Result<_>>()?;
            let recover = recover_coeff_bounds(&ext, 0..=200, &consts);
            print_json(&json!({
                "m_max": ext.m_max, "gamma_dyn": ext.gamma_dyn, "tail_bound": ext.tail_bound,
                "block_starts": ext.block_starts, "constants": consts, "dbar": dbar,
                "reconstruction": recon, "recover_pass": recover.pass,
            }))?;
        }
        Command::Plant { a, theta_a, n, arc, node_radius } => {
            let g = SurrogateOuter::new(*a, *theta_a)?;
            let opts = PlantOptions { node_radius: *node_radius, ..PlantOptions::default() };
            let (_, report) = plant_zeros(&g, *n, arc.unwrap_or(0.8 * theta_a), &opts)?;
            write_plant_outputs(&report, &cli.out)?;
            println!("{}", report.to_json()?);
        }
        Command::Sweep { gamma, b, d, parallelism } => {
            let grid = Grid { gamma: gamma.clone(), b: b.clone(), d: d.clone(), ..Grid::default() };
            let mut cfg = ExperimentConfig::new(ExperimentKind::Sweep, grid);
            cfg.constants = Some(consts);
            cfg.options.parallelism = *parallelism;
            run_config(cfg, cli)?;
        }
        Command::Report { run, format } => {
            let format = match format {
                Format::Csv => ReportFormat::Csv,
                Format::Json => ReportFormat::Json,
                Format::Md => ReportFormat::Md,
            };
            let override_consts = cli.constants.as_ref().map(|_| consts);
            println!("{}", emit_report(run, format, override_consts.as_ref())?.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
