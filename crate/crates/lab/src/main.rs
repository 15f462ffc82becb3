use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use onsagerlab::config::RunConfig;
use onsagerlab::fixtures;
use onsagerlab::io::{read_field, write_field, write_field_csv};
use onsagerlab::runner::{self, CommutatorRow, DefectRow};
use onsagerlab::{report, LabError};
use onsagerlab_core::besov::{fit_regularity_exponent, ShiftSweep};
use onsagerlab_core::commutators::commutator_integrals;
use onsagerlab_core::defect::{defect_report, weak_energy_residual_with_floor};
use onsagerlab_core::mollify::mollification_rate_check;
use onsagerlab_core::{Axes, Closure, Field};

#[derive(Parser)]
#[command(
    name = "onsagerlab",
    version,
    about = "Energy-conservation diagnostics for sampled Euler flows"
)]
struct Cli {
    /// Output directory.
    #[arg(long, global = true, env = "ONSAGERLAB_OUT")]
    out: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Replaces every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate every configured fixture and write its fields.
    Generate {
        #[arg(long)]
        config: PathBuf,
        /// Also write CSV copies.
        #[arg(long)]
        csv: bool,
    },
    /// Fit the smoothness exponent of each component of a field file.
    BesovFit {
        #[arg(long)]
        field: PathBuf,
        #[arg(long, default_value_t = 3.0)]
        p: f64,
    },
    /// Decay of mollification errors and gradients of a field file.
    MollifyRates {
        #[arg(long)]
        field: PathBuf,
        /// Radii in cells; at least four.
        #[arg(long, value_delimiter = ',', required = true)]
        eps_cells: Vec<f64>,
        #[arg(long, default_value_t = 3.0)]
        p: f64,
    },
    /// Commutator integrals of stored fields for the configured radii and test functions.
    CommutatorSweep {
        #[command(flatten)]
        state: StateArgs,
    },
    /// Weak energy residual and commutator limit of stored fields.
    EnergyDefect {
        #[command(flatten)]
        state: StateArgs,
    },
    /// Run the whole sweep matrix of a configuration.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Summarize a finished run.
    Report,
}

#[derive(clap::Args)]
struct StateArgs {
    /// Supplies the law, radii and test functions; its grid is replaced by the fields' grid.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    rho: PathBuf,
    #[arg(long)]
    u: PathBuf,
    /// Pressure field; makes the system incompressible.
    #[arg(long)]
    pressure: Option<PathBuf>,
}

fn out_dir(cli: &Cli, config: Option<&RunConfig>) -> Result<PathBuf> {
    cli.out
        .clone()
        .or_else(|| config.and_then(|c| c.out.as_ref().map(PathBuf::from)))
        .context("no output directory: pass --out, set ONSAGERLAB_OUT or set `out` in the config")
}

fn load(path: &Path, seed: Option<u64>) -> Result<RunConfig> {
    let mut c = RunConfig::load(path)?;
    if let Some(s) = seed {
        c.override_seed(s);
    }
    Ok(c)
}

fn print_csv<T: serde::Serialize>(rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(std::io::stdout());
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn components(f: &Field) -> Vec<(String, Field)> {
    (0..f.components()).map(|c| (format!("c{c}"), f.component(c))).collect()
}

/// Loads the fields and checks the config's sweep against their grid; configured fixtures are ignored.
fn state_plan(s: &StateArgs, seed: Option<u64>) -> Result<(Field, Field, Option<Field>, onsagerlab::Plan)> {
    let rho = read_field(&s.rho)?;
    let u = read_field(&s.u)?;
    let p = s.pressure.as_deref().map(read_field).transpose()?;
    let mut cfg = load(&s.config, seed)?;
    cfg.fixtures.clear();
    let plan = cfg.plan_on(*rho.grid())?;
    Ok((rho, u, p, plan))
}

fn execute(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Generate { config, csv } => {
            let cfg = load(config, cli.seed)?;
            let plan = cfg.plan()?;
            let out = out_dir(cli, Some(&cfg))?.join("fields");
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            for (k, spec) in cfg.fixtures.iter().enumerate() {
                let fx = fixtures::build(spec, plan.grid, plan.law.as_ref(), plan.seeds[k])?;
                let mut parts = vec![("rho", &fx.state.rho), ("u", &fx.state.u)];
                if let Some(p) = &fx.state.pressure {
                    parts.push(("p", p));
                }
                for (name, f) in parts {
                    write_field(&out.join(format!("{}.{name}.bin", fx.id)), f)?;
                    if *csv {
                        write_field_csv(&out.join(format!("{}.{name}.csv", fx.id)), f)?;
                    }
                }
                println!("{} -> {}", fx.id, out.display());
            }
            Ok(true)
        }
        Command::BesovFit { field, p } => {
            let f = read_field(field)?;
            let sweep = ShiftSweep::standard(f.grid(), Axes::Space)?;
            println!("component,p,alpha_hat,r_squared,exact_constancy");
            for (name, c) in components(&f) {
                let fit = fit_regularity_exponent(&c, *p, &sweep)?;
                println!("{name},{p},{},{},{}", fit.alpha_hat, fit.r_squared, fit.exact_constancy);
            }
            Ok(true)
        }
        Command::MollifyRates { field, eps_cells, p } => {
            let f = read_field(field)?;
            let eps: Vec<f64> = eps_cells.iter().map(|c| c * f.grid().dx()).collect();
            println!("component,p,difference_slope,gradient_slope,exactly_smooth");
            let show = |s: Option<f64>| s.map(|v| v.to_string()).unwrap_or_default();
            for (name, c) in components(&f) {
                let r = mollification_rate_check(&c, *p, &eps, Axes::Space)?;
                let (d, g) = (r.difference_fit.map(|f| f.slope), r.gradient_fit.map(|f| f.slope));
                println!("{name},{p},{},{},{}", show(d), show(g), r.exactly_smooth);
            }
            Ok(true)
        }
        Command::CommutatorSweep { state } => {
            let (rho, u, p, plan) = state_plan(state, cli.seed)?;
            let closure = closure_of(&p, &plan)?;
            let mut rows = Vec::new();
            for (id, phi) in &plan.phis {
                for &e in &plan.eps {
                    let c = commutator_integrals(&rho, &u, closure, phi, e)?;
                    rows.push(CommutatorRow {
                        fixture: "input".into(),
                        phi: id.clone(),
                        eps: e,
                        r1: c.r1,
                        r2: c.r2,
                        r3: c.r3,
                        s: c.s_int,
                        total: c.total(),
                        pointwise_sup: c.pointwise_sup,
                    });
                }
            }
            print_csv(&rows)?;
            Ok(true)
        }
        Command::EnergyDefect { state } => {
            let (rho, u, p, plan) = state_plan(state, cli.seed)?;
            let closure = closure_of(&p, &plan)?;
            let mut rows = Vec::new();
            for (id, phi) in &plan.phis {
                let weak = weak_energy_residual_with_floor(&rho, &u, closure, phi)?;
                let rep = defect_report("input", &rho, &u, closure, phi, &plan.eps)?;
                let finest = rep.residuals.last().copied().unwrap_or(0.0);
                rows.push(DefectRow {
                    fixture: "input".into(),
                    system: rep.system,
                    phi: id.clone(),
                    weak_residual: weak.value,
                    quadrature_floor: weak.quadrature_floor,
                    finest_residual: finest,
                    extrapolated_defect: rep.extrapolated_defect,
                    cauchy_slope: rep.rate_fit.map(|f| f.slope),
                    oracle: None,
                    oracle_rate: None,
                    phi_time_integral: None,
                });
            }
            print_csv(&rows)?;
            Ok(true)
        }
        Command::Run { config } => {
            let cfg = load(config, cli.seed)?;
            let plan = cfg.plan()?;
            let out = out_dir(cli, Some(&cfg))?;
            let summary = runner::run(&plan, &out, cli.workers)?;
            if summary.resumed > 0 {
                eprintln!(
                    "resumed: {} of {} jobs were already done",
                    summary.resumed, summary.jobs
                );
            }
            print!("{}", report::render(&summary.criteria));
            Ok(summary.failures() == 0)
        }
        Command::Report => {
            let out = out_dir(cli, None)?;
            let text = report::report(&out)?;
            print!("{text}");
            Ok(!text.contains("criteria fail"))
        }
    }
}

fn closure_of<'a>(p: &'a Option<Field>, plan: &'a onsagerlab::Plan) -> Result<Closure<'a>> {
    match (p, plan.law.as_ref()) {
        (Some(p), _) => Ok(Closure::Incompressible(p)),
        (None, Some(l)) => Ok(Closure::Compressible(l)),
        (None, None) => bail!(LabError::Config {
            entry: "law".into(),
            reason: "pass --pressure or configure a law".into()
        }),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
