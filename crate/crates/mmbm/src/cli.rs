//! Argument definitions.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mmbm_core::simulation::BoundaryScheme;
use mmbm_core::SimConfig;

#[derive(Debug, Clone, Parser)]
#[command(name = "mmbm", version, about = "Stationary laws of two-sided reflected MMBM and its fluid approximations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Closed-form stationary density of the MMBM.
    Solve {
        #[command(flatten)]
        io: IoArgs,
        #[arg(long, default_value_t = 1000)]
        grid: usize,
    },
    /// Finite-buffer fluid approximation at one ε.
    Fluid {
        #[command(flatten)]
        io: IoArgs,
        #[arg(long, default_value_t = 1000)]
        grid: usize,
        #[arg(long)]
        eps: f64,
        /// Also solve through boundary balance and report the discrepancy.
        #[arg(long)]
        check_alt: bool,
    },
    /// Distance between the fluid family and the limit over several ε.
    Sweep {
        #[command(flatten)]
        io: IoArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        eps_list: Vec<f64>,
    },
    /// Monte Carlo estimate of the stationary law.
    Simulate {
        #[command(flatten)]
        io: IoArgs,
        #[arg(long, value_enum, default_value_t = Mode::Mmbm)]
        mode: Mode,
        /// Required with `--mode fluid`.
        #[arg(long)]
        eps: Option<f64>,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Closed form against the time-reversed form, the grid oracle and simulation.
    Compare {
        #[command(flatten)]
        io: IoArgs,
        /// Cells of the discretization oracle.
        #[arg(long, default_value_t = 2000)]
        cells: usize,
        #[command(flatten)]
        sim: SimArgs,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Solve { .. } => "solve",
            Command::Fluid { .. } => "fluid",
            Command::Sweep { .. } => "sweep",
            Command::Simulate { .. } => "simulate",
            Command::Compare { .. } => "compare",
        }
    }

    pub fn io(&self) -> &IoArgs {
        match self {
            Command::Solve { io, .. }
            | Command::Fluid { io, .. }
            | Command::Sweep { io, .. }
            | Command::Simulate { io, .. }
            | Command::Compare { io, .. } => io,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct IoArgs {
    /// Model JSON: {"Q": [[...]], "mu": [...], "sigma2": [...], "b": ...}.
    pub model: PathBuf,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Fluid,
    Mmbm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Boundary {
    Bridge,
    Clamp,
}

#[derive(Debug, Clone, Args)]
pub struct SimArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 2e5)]
    pub horizon: f64,
    #[arg(long, default_value_t = 1e3)]
    pub burn_in: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub step: f64,
    #[arg(long, default_value_t = 1e-2)]
    pub sample_dt: f64,
    #[arg(long, default_value_t = 100)]
    pub bins: usize,
    /// Independent paths; they run in parallel and the result does not
    /// depend on the number of threads.
    #[arg(long, default_value_t = 8)]
    pub paths: usize,
    #[arg(long, value_enum, default_value_t = Boundary::Bridge)]
    pub boundary: Boundary,
}

impl SimArgs {
    pub fn config(&self) -> SimConfig {
        SimConfig {
            horizon: self.horizon,
            burn_in: self.burn_in,
            step: self.step,
            sample_dt: self.sample_dt,
            seed: self.seed,
            bins: self.bins,
            paths: self.paths,
            scheme: match self.boundary {
                Boundary::Bridge => BoundaryScheme::Bridge,
                Boundary::Clamp => BoundaryScheme::Clamp,
            },
        }
    }

    pub fn echo(&self) -> serde_json::Value {
        serde_json::json!({
            "seed": self.seed,
            "horizon": self.horizon,
            "burn_in": self.burn_in,
            "step": self.step,
            "sample_dt": self.sample_dt,
            "bins": self.bins,
            "paths": self.paths,
            "boundary": match self.boundary {
                Boundary::Bridge => "bridge",
                Boundary::Clamp => "clamp",
            },
        })
    }
}
