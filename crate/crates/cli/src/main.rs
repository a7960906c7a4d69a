mod report;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lossbalance::LossKind;

use crate::run::RunSpec;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Schema(String),
    #[error("{0}")]
    Solver(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Schema(_) => 3,
            CliError::Solver(_) => 4,
        }
    }
}

impl From<lossbalance::Error> for CliError {
    fn from(e: lossbalance::Error) -> Self {
        use lossbalance::Error as E;
        match e {
            E::Schema(_) | E::Cell { .. } => CliError::Schema(e.to_string()),
            e if e.is_solver_failure() => CliError::Solver(e.to_string()),
            e => CliError::Input(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "lossbalance",
    version,
    about = "Train predictors under an equalized-loss constraint"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train at one gamma for every seed
    Train(TrainArgs),
    /// Train over a list of gammas for every seed
    Sweep(SweepArgs),
    /// Merge result files into per-algorithm trade-off curves
    Report(ReportArgs),
    /// Write a synthetic fixture CSV plus its schema
    Generate(GenerateArgs),
    /// Write a random frozen hidden layer sized for a dataset
    InitMap(InitMapArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    Mse,
    Bce,
}

impl From<LossArg> for LossKind {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::Mse => LossKind::SquaredError,
            LossArg::Bce => LossKind::BinaryCrossEntropy,
        }
    }
}

#[derive(Args)]
struct CommonArgs {
    /// Comma-separated algorithms: erm, alg2, alg3, penalty, linre, fairbatch
    #[arg(long, value_delimiter = ',', required = true)]
    algo: Vec<String>,
    #[arg(long, value_enum)]
    loss: LossArg,
    #[arg(long, default_value_t = 0.002)]
    eta: f64,
    #[arg(long, default_value_t = 0.01)]
    epsilon: f64,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    seeds: Vec<u64>,
    #[arg(long)]
    data: PathBuf,
    /// Defaults to the data path with a `.schema` extension
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Frozen hidden layer applied after standardization
    #[arg(long)]
    feature_map: Option<PathBuf>,
    /// Result CSV; the summary table goes to stdout
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.7)]
    train_ratio: f64,
    /// Write measured wall-clock times instead of 0 (output is then not reproducible)
    #[arg(long)]
    record_runtime: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    gamma: f64,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_delimiter = ',', default_value = "0.025,0.05,0.1,0.15,0.2")]
    gammas: Vec<f64>,
}

#[derive(Args)]
struct ReportArgs {
    /// Result CSVs written by train or sweep
    #[arg(required = true)]
    results: Vec<PathBuf>,
    /// Directory for curve_<algo>.csv files
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum FixtureKind {
    Regression,
    Classification,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    kind: FixtureKind,
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 0.3)]
    share_g1: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InitMapArgs {
    #[arg(long, default_value_t = 125)]
    units: usize,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn run_spec(common: CommonArgs, gammas: Vec<f64>) -> Result<RunSpec, CliError> {
    let algorithms = common
        .algo
        .iter()
        .map(|tag| {
            lossbalance::Algorithm::from_tag(tag)
                .filter(|a| run::SUPPORTED.contains(a))
                .ok_or_else(|| CliError::Input(format!("unknown algorithm '{tag}'")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if gammas.is_empty() || common.seeds.is_empty() {
        return Err(CliError::Input("gamma list and seed list must be nonempty".into()));
    }
    if let Some(g) = gammas.iter().find(|g| !(**g >= 0.0 && g.is_finite())) {
        return Err(CliError::Input(format!(
            "gamma must be a finite non-negative number, got {g}"
        )));
    }
    Ok(RunSpec {
        algorithms,
        gammas,
        loss: common.loss.into(),
        eta: common.eta,
        epsilon: common.epsilon,
        seeds: common.seeds,
        schema: common.schema.unwrap_or_else(|| common.data.with_extension("schema")),
        data: common.data,
        feature_map: common.feature_map,
        out: common.out,
        train_ratio: common.train_ratio,
        record_runtime: common.record_runtime,
    })
}

fn generate(args: GenerateArgs) -> Result<(), CliError> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(args.seed);
    let data = match args.kind {
        FixtureKind::Regression => lossbalance::data::regression_fixture(args.n, args.share_g1, &mut rng)?,
        FixtureKind::Classification => lossbalance::data::classification_fixture(args.n, args.share_g1, &mut rng)?,
    };
    let file = std::fs::File::create(&args.out)?;
    lossbalance::data::write_csv(&data, std::io::BufWriter::new(file))?;
    let schema_path = args.out.with_extension("schema");
    std::fs::write(&schema_path, lossbalance::data::written_csv_schema(&data))?;
    println!(
        "wrote {} rows to {} (schema {})",
        data.len(),
        args.out.display(),
        schema_path.display()
    );
    Ok(())
}

fn init_map(args: InitMapArgs) -> Result<(), CliError> {
    let schema_path = args.schema.unwrap_or_else(|| args.data.with_extension("schema"));
    let data = run::load_dataset(&args.data, &schema_path)?;
    let map = lossbalance::FrozenFeatureMap::random(
        args.units,
        data.n_features(),
        lossbalance::Activation::Sigmoid,
        args.seed,
    );
    std::fs::write(&args.out, lossbalance::data::format_feature_map(&map))?;
    println!(
        "wrote {}x{} sigmoid map to {}",
        map.units(),
        map.input_dim(),
        args.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => run_spec(a.common, vec![a.gamma]).and_then(|s| run::execute(&s)),
        Command::Sweep(a) => run_spec(a.common, a.gammas).and_then(|s| run::execute(&s)),
        Command::Report(a) => report::execute(&a.results, &a.out),
        Command::Generate(a) => generate(a),
        Command::InitMap(a) => init_map(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
