use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sphs_cli::spec::{
    load_spec, DecomposeSpec, EvalSpec, GenerateSpec, Overrides, PodSpec, PredictSpec, TrainSpec,
    VerifySpec,
};
use sphs_cli::{commands, CmdError};

/// Learn, certify, and run stable dynamics models in port-Hamiltonian form.
#[derive(Parser)]
#[command(name = "sphs", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run spec.
    #[arg(long)]
    spec: PathBuf,
    /// Override the spec's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the spec's training step count.
    #[arg(long)]
    steps: Option<usize>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides { out: self.out.clone(), seed: self.seed, steps: self.steps, mu: None }
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    common: Common,
    /// Override the spinning-body friction coefficient (0 = conservative).
    #[arg(long)]
    mu: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate benchmark datasets (trajectories plus derivative pairs).
    Generate(GenerateArgs),
    /// Fit one or more model instances to data.
    Train(Common),
    /// Roll a trained model forward in time.
    Predict(Common),
    /// Score prediction files against a ground-truth trajectory.
    Eval(Common),
    /// Certify the stability of a trained model.
    Verify(Common),
    /// Sample the learned conservative/dissipative/input field split.
    Decompose(Common),
    /// Fit or apply a proper-orthogonal-decomposition basis.
    Pod(Common),
}

fn run(cli: Cli) -> Result<(), CmdError> {
    match cli.command {
        Command::Generate(c) => {
            let mut s: GenerateSpec = load_spec(&c.common.spec)?;
            let mut ov = c.common.overrides();
            ov.mu = c.mu;
            s.apply(&ov);
            commands::generate(&s)
        }
        Command::Train(c) => {
            let mut s: TrainSpec = load_spec(&c.spec)?;
            s.apply(&c.overrides());
            commands::train(&s)
        }
        Command::Predict(c) => {
            let mut s: PredictSpec = load_spec(&c.spec)?;
            s.apply(&c.overrides());
            commands::predict(&s)
        }
        Command::Eval(c) => {
            let mut s: EvalSpec = load_spec(&c.spec)?;
            s.apply(&c.overrides());
            commands::eval(&s)
        }
        Command::Verify(c) => {
            let mut s: VerifySpec = load_spec(&c.spec)?;
            s.apply(&c.overrides());
            commands::verify(&s)
        }
        Command::Decompose(c) => {
            let mut s: DecomposeSpec = load_spec(&c.spec)?;
            s.apply(&c.overrides());
            commands::decompose(&s)
        }
        Command::Pod(c) => {
            let mut s: PodSpec = load_spec(&c.spec)?;
            s.apply(&c.overrides());
            commands::pod(&s)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
