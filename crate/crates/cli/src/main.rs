//! `robust-dde`: steady states, spectra, critical manifolds, normal vectors,
//! robust optimization, vertex checks and simulation of the built-in delay
//! models from the command line.

mod commands;
mod config;
mod error;
mod model;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{parse_assignment, ModelName, RunConfig};
use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "robust-dde",
    version,
    about,
    subcommand_required = true,
    arg_required_else_help = true
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand. Each can also be set through the
/// environment variable shown in `--help`; flags win over the environment,
/// which wins over the config file.
#[derive(Debug, Args)]
struct Common {
    /// JSON config or a manifest from an earlier run.
    #[arg(long, global = true, env = "ROBUST_DDE_CONFIG")]
    config: Option<PathBuf>,
    /// Output directory [default: out].
    #[arg(long, global = true, env = "ROBUST_DDE_OUT")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, env = "ROBUST_DDE_MODEL")]
    model: Option<ModelName>,
    /// Carrier grid points of the laser model.
    #[arg(long = "K", global = true, env = "ROBUST_DDE_K")]
    k: Option<usize>,
    /// Delay of the hayes model.
    #[arg(long, global = true, env = "ROBUST_DDE_DELAY")]
    delay: Option<f64>,
    /// Nominal value of the hayes parameter `a`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    a: Option<f64>,
    /// Nominal value of the hayes parameter `b`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    b: Option<f64>,
    /// Nominal parameter value, `name=value`; repeatable.
    #[arg(long = "set", global = true, value_parser = parse_assignment)]
    set: Vec<(String, f64)>,
    /// Decay-rate target (≤ 0).
    #[arg(
        long,
        global = true,
        allow_hyphen_values = true,
        env = "ROBUST_DDE_SIGMA"
    )]
    sigma: Option<f64>,
    /// Starting discretization order of the spectrum.
    #[arg(long = "N", global = true, env = "ROBUST_DDE_N")]
    order: Option<usize>,
}

#[derive(Debug, Args)]
struct CriticalArgs {
    /// Manifold type: fold or hopf.
    #[arg(long, env = "ROBUST_DDE_KIND")]
    kind: Option<String>,
    /// Parameter walked from the nominal point to the first crossing.
    #[arg(long, env = "ROBUST_DDE_RAY")]
    ray: Option<String>,
    /// Direction of that walk, +1 or −1.
    #[arg(long, allow_hyphen_values = true, env = "ROBUST_DDE_RAY_DIR")]
    ray_dir: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Steady state at the nominal parameters.
    Steady,
    /// Rightmost eigenvalues of the linearization at the steady state.
    Eigs,
    /// Continue a critical manifold through a parameter plane.
    Manifold {
        #[command(flatten)]
        critical: CriticalArgs,
        /// Two parameter names, comma separated.
        #[arg(long, env = "ROBUST_DDE_PLANE")]
        plane: Option<String>,
        /// Continuation steps in each direction.
        #[arg(long, env = "ROBUST_DDE_STEPS")]
        steps: Option<usize>,
        /// Arclength step in scaled parameters.
        #[arg(long, env = "ROBUST_DDE_ARC_STEP")]
        arc_step: Option<f64>,
    },
    /// Normal vector at the first critical point along the ray.
    NormalVector {
        #[command(flatten)]
        critical: CriticalArgs,
    },
    /// Maximize the model objective, naively or robustly.
    Optimize {
        #[command(flatten)]
        critical: CriticalArgs,
        #[arg(long, conflicts_with = "naive")]
        robust: bool,
        #[arg(long)]
        naive: bool,
    },
    /// Stability of the steady state at every corner of the uncertainty box.
    VerifyVertices,
    /// Integrate from a perturbed steady state.
    Simulate {
        #[arg(long, env = "ROBUST_DDE_DT")]
        dt: Option<f64>,
        #[arg(long, env = "ROBUST_DDE_T_END")]
        t_end: Option<f64>,
        /// Factor applied to the perturbed components of the steady state.
        #[arg(long, allow_hyphen_values = true, env = "ROBUST_DDE_PERTURB_FACTOR")]
        perturb_factor: Option<f64>,
        /// Added to the perturbed components after scaling.
        #[arg(long, allow_hyphen_values = true, env = "ROBUST_DDE_PERTURB_OFFSET")]
        perturb_offset: Option<f64>,
        /// State indices to perturb, comma separated.
        #[arg(long, value_delimiter = ',', env = "ROBUST_DDE_PERTURB")]
        perturb: Option<Vec<usize>>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Steady => "steady",
            Command::Eigs => "eigs",
            Command::Manifold { .. } => "manifold",
            Command::NormalVector { .. } => "normal-vector",
            Command::Optimize { .. } => "optimize",
            Command::VerifyVertices => "verify-vertices",
            Command::Simulate { .. } => "simulate",
        }
    }
}

fn apply_critical(cfg: &mut RunConfig, c: &CriticalArgs) {
    if let Some(k) = &c.kind {
        cfg.analysis.kind = Some(k.clone());
    }
    if let Some(r) = &c.ray {
        cfg.analysis.ray = Some(r.clone());
    }
    if let Some(d) = c.ray_dir {
        cfg.analysis.ray_dir = d;
    }
}

/// Config file, then flags and environment.
fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let c = &cli.common;
    let mut cfg = match &c.config {
        Some(p) => config::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(m) = c.model {
        cfg.model = m;
    }
    if let Some(o) = &c.out {
        cfg.out = Some(o.clone());
    }
    if let Some(k) = c.k {
        cfg.laser.k = k;
    }
    if let Some(t) = c.delay {
        cfg.hayes.tau = t;
    }
    if let Some(a) = c.a {
        cfg.set_nominal("a", a);
    }
    if let Some(b) = c.b {
        cfg.set_nominal("b", b);
    }
    for (name, v) in &c.set {
        cfg.set_nominal(name, *v);
    }
    if let Some(s) = c.sigma {
        cfg.analysis.sigma = s;
    }
    if let Some(n) = c.order {
        cfg.analysis.order = n;
    }
    match &cli.command {
        Command::Manifold {
            critical,
            plane,
            steps,
            arc_step,
        } => {
            apply_critical(&mut cfg, critical);
            if let Some(p) = plane {
                let names: Vec<&str> = p.split(',').map(str::trim).collect();
                let [a, b] = names[..] else {
                    return Err(CliError::Usage(format!(
                        "--plane needs two names, got '{p}'"
                    )));
                };
                cfg.analysis.plane = Some([a.to_string(), b.to_string()]);
            }
            if let Some(s) = steps {
                cfg.analysis.steps = *s;
            }
            if let Some(h) = arc_step {
                cfg.analysis.arc_step = *h;
            }
        }
        Command::NormalVector { critical } => apply_critical(&mut cfg, critical),
        Command::Optimize {
            critical,
            robust,
            naive,
        } => {
            apply_critical(&mut cfg, critical);
            if *naive {
                cfg.analysis.mode = robust_dde::robust::Mode::Naive;
            } else if *robust {
                cfg.analysis.mode = robust_dde::robust::Mode::Robust;
            }
        }
        Command::Simulate {
            dt,
            t_end,
            perturb_factor,
            perturb_offset,
            perturb,
        } => {
            cfg.analysis.dt = dt.or(cfg.analysis.dt);
            cfg.analysis.t_end = t_end.or(cfg.analysis.t_end);
            if let Some(f) = perturb_factor {
                cfg.analysis.perturb_factor = *f;
            }
            cfg.analysis.perturb_offset = perturb_offset.or(cfg.analysis.perturb_offset);
            if let Some(p) = perturb {
                cfg.analysis.perturb_components = Some(p.clone());
            }
        }
        Command::Steady | Command::Eigs | Command::VerifyVertices => {}
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = resolve(&cli)?;
    commands::run(cli.command.name(), cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
