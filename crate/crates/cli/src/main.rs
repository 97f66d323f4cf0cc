//! `bethe`: exact, Bethe and mean-field partition functions from the command line.
//!
//! Every command prints a JSON result record (or CSV rows with `--format csv`).
//! Exit codes: 0 success, 1 numerical refusal or failed verification, 2 input error.

mod commands;
mod record;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use record::ResultRecord;

#[derive(Parser, Debug)]
#[command(name = "bethe", version, about = "Exact, Bethe and mean-field partition functions")]
pub struct Cli {
    /// Worker threads for trial loops and enumeration (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,

    /// Also write CSV rows to this file.
    #[arg(long, global = true)]
    pub csv: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Both,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArg {
    /// Factor-graph JSON file.
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct OptimizerArgs {
    #[arg(long, default_value_t = 64)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Clone)]
pub struct PottsArgs {
    /// Graph JSON file `{"n_vertices", "edges"}`.
    #[arg(long)]
    pub graph: PathBuf,
    /// Number of states; real-valued for the random-cluster form.
    #[arg(long)]
    pub q: f64,
    /// Uniform coupling on every edge.
    #[arg(long, conflicts_with = "couplings")]
    pub j: Option<f64>,
    /// Per-edge couplings, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub couplings: Option<Vec<f64>>,
    /// Uniform field, one value per state, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub field: Option<Vec<f64>>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Exact partition function by enumeration.
    Z {
        #[command(flatten)]
        model: ModelArg,
        /// Refuse joint spaces larger than this.
        #[arg(long, default_value_t = 1 << 26)]
        cap: u128,
    },
    /// Damped sum-product belief propagation.
    Bp {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, default_value_t = 0.5)]
        damping: f64,
        #[arg(long, default_value_t = 10_000)]
        max_iters: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Random initial messages from this seed instead of uniform ones.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Best Bethe value over BP restarts, refined on the local polytope.
    ZBethe {
        #[command(flatten)]
        model: ModelArg,
        #[command(flatten)]
        opt: OptimizerArgs,
        #[arg(long, default_value_t = 3000)]
        refine_iters: usize,
    },
    /// Naive mean-field lower bound by coordinate ascent.
    ZMeanfield {
        #[command(flatten)]
        model: ModelArg,
        #[command(flatten)]
        opt: OptimizerArgs,
    },
    /// Graph covers of a factor graph.
    Cover {
        #[command(subcommand)]
        action: CoverAction,
    },
    /// Potts partition function by spin enumeration.
    Potts {
        #[command(flatten)]
        potts: PottsArgs,
        /// Also compute the Bethe and mean-field values.
        #[arg(long)]
        bounds: bool,
        #[command(flatten)]
        opt: OptimizerArgs,
    },
    /// Random-cluster partition function, or the weight of one edge subset.
    Rc {
        #[command(flatten)]
        potts: PottsArgs,
        /// Edge subset as comma-separated 0/1 flags in edge order.
        #[arg(long, value_delimiter = ',')]
        subset: Option<Vec<u8>>,
    },
    /// The three-spin frustrated Potts example and its Bethe gap.
    Counterexample {
        #[command(flatten)]
        opt: OptimizerArgs,
        /// Evaluate a single reading of the parameters instead of all four.
        #[arg(long, value_enum)]
        convention: Option<ConventionArg>,
        /// Include the model as a factor-graph JSON document.
        #[arg(long)]
        emit_model: bool,
    },
    /// Weight enumerator of a linear code with its Bethe and mean-field bounds.
    Wef {
        /// Generator matrix: `q k n` then k rows of n field elements.
        #[arg(long)]
        code: PathBuf,
        #[arg(long)]
        lambda: f64,
        #[command(flatten)]
        opt: OptimizerArgs,
    },
    /// Matroid Potts model of a matrix over GF(q).
    Matroid {
        #[arg(long)]
        code: PathBuf,
        /// Uniform coupling on every column.
        #[arg(long, conflicts_with = "couplings")]
        j: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        couplings: Option<Vec<f64>>,
        #[arg(long)]
        bounds: bool,
        #[command(flatten)]
        opt: OptimizerArgs,
    },
    /// Weighted homomorphism model `{edges, w, a, b}`.
    Hom {
        /// Hom-model JSON file.
        #[arg(long)]
        model: PathBuf,
        /// Sampled exchange-inequality tuples; 0 skips the log-supermodularity check.
        #[arg(long, default_value_t = 1000)]
        lsm_samples: usize,
        #[arg(long)]
        bounds: bool,
        #[command(flatten)]
        opt: OptimizerArgs,
    },
    /// Checks that every factor of a binary model is log-supermodular.
    CheckLsm {
        #[command(flatten)]
        model: ModelArg,
    },
    /// Runs a seeded check suite.
    Verify {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(bethe_core::verify::SUITES))]
        suite: String,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 64)]
        restarts: usize,
    },
}

#[derive(Subcommand, Debug)]
pub enum CoverAction {
    /// Uniformly random labelled M-cover.
    Sample {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long = "M", alias = "m")]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Lifted factor graph of a cover file.
    Build {
        #[arg(long)]
        cover: PathBuf,
    },
    /// Checks a candidate model and copy map against a base model.
    Validate {
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        candidate: PathBuf,
        /// `{"variables": [...], "factors": [...]}` mapping candidate nodes to base nodes.
        #[arg(long)]
        map: PathBuf,
    },
    /// `(mean Z(H))^{1/M}` over sampled or all canonical covers.
    Estimate {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long = "M", alias = "m")]
        m: usize,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Average over every canonical cover instead of sampling.
        #[arg(long)]
        exhaustive: bool,
        #[arg(long, default_value_t = 100_000)]
        limit: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ConventionArg {
    UnorderedMultiplicative,
    UnorderedExponential,
    OrderedMultiplicative,
    OrderedExponential,
}

/// Failure of a command, split by exit code.
#[derive(Debug)]
pub enum Failure {
    Input(String),
    Numerical(String),
}

impl From<bethe_core::Error> for Failure {
    fn from(e: bethe_core::Error) -> Self {
        if e.is_input_error() {
            Failure::Input(e.to_string())
        } else {
            Failure::Numerical(e.to_string())
        }
    }
}

fn emit(cli: &Cli, record: &ResultRecord) -> std::io::Result<()> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match cli.format {
        Format::Json => record.write_json(&mut out)?,
        Format::Csv => record.write_csv(&mut out, true)?,
        Format::Both => {
            record.write_json(&mut out)?;
            record.write_csv(&mut out, true)?;
        }
    }
    out.flush()?;
    if let Some(path) = &cli.csv {
        let mut f = std::fs::File::create(path)?;
        record.write_csv(&mut f, true)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be positive");
            return ExitCode::from(2);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .expect("thread pool is configured once");
    }
    let start = std::time::Instant::now();
    match commands::run(&cli.command) {
        Ok(mut record) => {
            record.runtime_ms = start.elapsed().as_secs_f64() * 1e3;
            if let Err(e) = emit(&cli, &record) {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
            if record.passed == Some(false) {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("refused: {msg}");
            ExitCode::from(1)
        }
    }
}
