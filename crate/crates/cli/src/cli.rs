use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use h2sync::sim::Noise;
use h2sync::ProtocolKind;

const OUTPUTS: &str = "\
Outputs (written to --out, UTF-8, fixed column order):
  report.txt                    solvability report, one `key = value` per line
  protocol_rho<ρ>.txt           protocol realization (kind, rho, delta, P, Q)
  analysis.csv                  rho,h2,rho_times_h2,spectral_abscissa
  trajectory_rho<ρ>.csv         t,x_1[1],…,x_1[n],…,x_N[n],sync_error (first seed only)
  summary.csv                   case,rho,delta,seed,rms_sync_error
  run.txt, model.txt, graph.txt resolved configuration and the exact inputs used

Model file: `n m p w` then A (n×n), B (n×m), C (p×n), E (n×w), row-major.
Graph file: `N` then `i j w` lines (a_ij = w, 1-based), or `N` then an N×N matrix.

Exit codes: 0 success, 1 solvability failure, 2 input error, 3 numerical failure.";

#[derive(Debug, Parser)]
#[command(name = "h2sync", version, about = "Scale-free H2 almost state synchronization of multi-agent systems", after_help = OUTPUTS)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate the solvability conditions for a model and graph.
    Check {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        out: OutDir,
    },
    /// Synthesize protocol realizations for each ρ.
    Synth {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        protocol: ProtocolArgs,
        #[command(flatten)]
        out: OutDir,
    },
    /// Tabulate the closed-loop H2 norm against ρ (analysis.csv).
    Analyze {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        protocol: ProtocolArgs,
        #[command(flatten)]
        out: OutDir,
    },
    /// Simulate the network for each ρ (trajectory and summary CSVs).
    Simulate {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        protocol: ProtocolArgs,
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        out: OutDir,
    },
    /// Triple-integrator agents on the built-in three-agent graph.
    #[command(name = "reproduce-case1")]
    ReproduceCase1(ReproduceArgs),
    /// Triple-integrator agents on the built-in twenty-agent graph.
    #[command(name = "reproduce-case2")]
    ReproduceCase2(ReproduceArgs),
}

#[derive(Debug, Args)]
pub struct Inputs {
    /// Agent model file.
    #[arg(long)]
    pub model: PathBuf,
    /// Communication graph file.
    #[arg(long)]
    pub graph: PathBuf,
}

#[derive(Debug, Args)]
pub struct OutDir {
    /// Output directory (created if missing).
    #[arg(long, default_value = "h2sync-out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProtocolArg {
    /// Full-state coupling (requires C = I).
    P1,
    /// Partial-state coupling with a local filter.
    P2,
}

impl From<ProtocolArg> for ProtocolKind {
    fn from(p: ProtocolArg) -> Self {
        match p {
            ProtocolArg::P1 => ProtocolKind::P1,
            ProtocolArg::P2 => ProtocolKind::P2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NoiseArg {
    Off,
    White,
}

impl From<NoiseArg> for Noise {
    fn from(n: NoiseArg) -> Self {
        match n {
            NoiseArg::Off => Noise::Off,
            NoiseArg::White => Noise::White,
        }
    }
}

#[derive(Debug, Args)]
pub struct ProtocolArgs {
    #[arg(long, value_enum, default_value = "p2")]
    pub protocol: ProtocolArg,
    /// Comma-separated gains, each ≥ 1.
    #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
    pub rho: Vec<f64>,
    /// Filter parameter for p2; searched by halving from 1 when omitted.
    #[arg(long)]
    pub delta: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    /// First seed; initial conditions and noise derive from it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of consecutive seeds per ρ.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long = "t-final", default_value_t = 200.0)]
    pub t_final: f64,
    #[arg(long, value_enum, default_value = "white")]
    pub noise: NoiseArg,
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    #[arg(long, value_enum, default_value = "p2")]
    pub protocol: ProtocolArg,
    #[arg(long, value_delimiter = ',', default_value = "4,6,10", num_args = 1..)]
    pub rho: Vec<f64>,
    /// Filter parameter for p2.
    #[arg(long, default_value_t = h2sync::cases::DELTA)]
    pub delta: f64,
    #[command(flatten)]
    pub sim: SimArgs,
    #[command(flatten)]
    pub out: OutDir,
}
