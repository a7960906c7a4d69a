use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use lossbalance::baselines::{FairBatchConfig, PenaltyConfig};
use lossbalance::timing::Stopwatch;
use lossbalance::{
    Algorithm, DatasetSchema, ElConfig, EmpiricalProblem, FrozenFeatureMap, GroupLosses, GroupOptima, GroupedDataset,
    LossKind, LossSpec, SolverConfig, TwoGroupProblem,
};
use rayon::prelude::*;

use crate::CliError;

pub const SUPPORTED: [Algorithm; 6] = [
    Algorithm::Unconstrained,
    Algorithm::OptimalEl,
    Algorithm::SuboptimalEl,
    Algorithm::Penalty,
    Algorithm::LinearRelaxation,
    Algorithm::FairBatch,
];

pub const HEADER: [&str; 9] = [
    "algo",
    "gamma",
    "seed",
    "split",
    "loss",
    "loss_g0",
    "loss_g1",
    "gap",
    "runtime_ms",
];

pub struct RunSpec {
    pub algorithms: Vec<Algorithm>,
    pub gammas: Vec<f64>,
    pub loss: LossKind,
    pub eta: f64,
    pub epsilon: f64,
    pub seeds: Vec<u64>,
    pub data: PathBuf,
    pub schema: PathBuf,
    pub feature_map: Option<PathBuf>,
    pub out: PathBuf,
    pub train_ratio: f64,
    pub record_runtime: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub algo: String,
    pub gamma: f64,
    pub seed: u64,
    pub split: String,
    pub loss: f64,
    pub loss_g0: f64,
    pub loss_g1: f64,
    pub gap: f64,
    pub runtime_ms: u64,
}

impl ResultRow {
    fn new(algo: Algorithm, gamma: f64, seed: u64, split: &str, l: GroupLosses, runtime_ms: u64) -> Self {
        Self {
            algo: algo.tag().to_string(),
            gamma,
            seed,
            split: split.to_string(),
            loss: l.overall,
            loss_g0: l.loss_g0,
            loss_g1: l.loss_g1,
            gap: l.gap,
            runtime_ms,
        }
    }

    pub fn record(&self) -> [String; 9] {
        [
            self.algo.clone(),
            self.gamma.to_string(),
            self.seed.to_string(),
            self.split.clone(),
            self.loss.to_string(),
            self.loss_g0.to_string(),
            self.loss_g1.to_string(),
            self.gap.to_string(),
            self.runtime_ms.to_string(),
        ]
    }
}

/// The only writer of a result file; rows arrive in a fixed order so output is
/// reproducible regardless of how many threads produced them.
pub struct Appender<W: Write> {
    out: W,
}

impl<W: Write> Appender<W> {
    pub fn new(mut out: W) -> std::io::Result<Self> {
        writeln!(out, "{}", HEADER.join(","))?;
        Ok(Self { out })
    }

    pub fn append(&mut self, row: &ResultRow) -> std::io::Result<()> {
        writeln!(self.out, "{}", row.record().join(","))
    }

    pub fn finish(mut self) -> std::io::Result<()> {
        self.out.flush()
    }
}

pub fn load_dataset(data: &Path, schema: &Path) -> Result<GroupedDataset, CliError> {
    if !data.is_file() {
        return Err(CliError::Input(format!("dataset not found: {}", data.display())));
    }
    if !schema.is_file() {
        return Err(CliError::Schema(format!("schema not found: {}", schema.display())));
    }
    let schema = DatasetSchema::from_file(schema)?;
    Ok(lossbalance::load_csv(data, &schema)?)
}

/// Worker count from `LOSSBALANCE_THREADS`, or rayon's default when unset.
pub fn thread_count() -> Result<Option<usize>, CliError> {
    match std::env::var("LOSSBALANCE_THREADS") {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(CliError::Input(format!(
                "LOSSBALANCE_THREADS must be a positive integer, got '{v}'"
            ))),
        },
    }
}

struct Prepared {
    seed: u64,
    train: GroupedDataset,
    test: GroupedDataset,
    /// Shared by every gamma of the EL algorithms; `None` when not needed or when
    /// computing it failed (each cell then reproduces the error itself).
    optima: Option<GroupOptima>,
}

fn prepare(
    spec: &RunSpec,
    data: &GroupedDataset,
    map: Option<&FrozenFeatureMap>,
    seed: u64,
) -> lossbalance::Result<Prepared> {
    let (mut train, mut test) = lossbalance::split_and_standardize(data, spec.train_ratio, seed)?;
    if let Some(map) = map {
        train = lossbalance::apply_feature_map(map, &train)?;
        test = lossbalance::apply_feature_map(map, &test)?;
    }
    let needs_optima = spec
        .algorithms
        .iter()
        .any(|a| matches!(a, Algorithm::OptimalEl | Algorithm::SuboptimalEl));
    let optima = if needs_optima {
        EmpiricalProblem::new(&train, LossSpec::new(spec.loss, spec.eta))
            .and_then(|problem| lossbalance::group_optima(&problem, &SolverConfig::default()))
            .ok()
    } else {
        None
    };
    Ok(Prepared {
        seed,
        train,
        test,
        optima,
    })
}

/// Unregularized losses; the regularizer is part of training, not of the reported metric.
fn evaluate(data: &GroupedDataset, kind: LossKind, w: &lossbalance::WeightVector) -> lossbalance::Result<GroupLosses> {
    let problem = EmpiricalProblem::new(data, LossSpec::new(kind, 0.0))?;
    Ok(problem.losses(w.values()))
}

fn train_one(spec: &RunSpec, p: &Prepared, algo: Algorithm, gamma: f64) -> lossbalance::Result<[ResultRow; 2]> {
    let loss_spec = LossSpec::new(spec.loss, spec.eta);
    let solver = SolverConfig::default();
    let clock = Stopwatch::start();
    let w = match algo {
        Algorithm::LinearRelaxation => lossbalance::linear_relaxation_train(&p.train, &loss_spec, gamma, &solver)?.w,
        Algorithm::FairBatch => {
            let cfg = FairBatchConfig {
                seed: p.seed,
                ..Default::default()
            };
            lossbalance::fairbatch_train(&p.train, &loss_spec, gamma, &cfg)?.w
        }
        _ => {
            let problem = EmpiricalProblem::new(&p.train, loss_spec)?;
            let el = ElConfig {
                gamma,
                epsilon: spec.epsilon,
                solver,
            };
            match algo {
                Algorithm::Unconstrained => lossbalance::unconstrained_train(&problem, &solver)?.w,
                Algorithm::OptimalEl => match &p.optima {
                    Some(optima) => lossbalance::el::optimal_gamma_el_with(&problem, optima, &el)?.w,
                    None => lossbalance::optimal_gamma_el(&problem, &el)?.w,
                },
                Algorithm::SuboptimalEl => match &p.optima {
                    Some(optima) => lossbalance::el::suboptimal_gamma_el_with(&problem, optima, &el)?.w,
                    None => lossbalance::suboptimal_gamma_el(&problem, &el)?.w,
                },
                Algorithm::Penalty => {
                    let cfg = PenaltyConfig {
                        lr: if spec.feature_map.is_some() { 0.001 } else { 0.005 },
                        ..Default::default()
                    };
                    lossbalance::penalty_train(&problem, gamma, &cfg)?.w
                }
                other => unreachable!("{other:?} handled above"),
            }
        }
    };
    let runtime = if spec.record_runtime { clock.elapsed_ms() } else { 0 };
    Ok([
        ResultRow::new(
            algo,
            gamma,
            p.seed,
            "train",
            evaluate(&p.train, spec.loss, &w)?,
            runtime,
        ),
        ResultRow::new(algo, gamma, p.seed, "test", evaluate(&p.test, spec.loss, &w)?, runtime),
    ])
}

pub fn execute(spec: &RunSpec) -> Result<(), CliError> {
    let data = load_dataset(&spec.data, &spec.schema)?;
    let map = match &spec.feature_map {
        Some(path) if !path.is_file() => {
            return Err(CliError::Input(format!("feature map not found: {}", path.display())));
        }
        Some(path) => Some(lossbalance::data::read_feature_map(path)?),
        None => None,
    };

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count()? {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Input(e.to_string()))?;

    let (prepared, cells) = pool.install(|| -> Result<_, CliError> {
        let prepared = spec
            .seeds
            .par_iter()
            .map(|&seed| prepare(spec, &data, map.as_ref(), seed))
            .collect::<lossbalance::Result<Vec<_>>>()?;
        let jobs: Vec<(usize, Algorithm, f64)> = spec
            .algorithms
            .iter()
            .flat_map(|&a| {
                spec.gammas
                    .iter()
                    .flat_map(move |&g| (0..spec.seeds.len()).map(move |s| (s, a, g)))
            })
            .collect();
        let cells: Vec<_> = jobs
            .par_iter()
            .map(|&(s, a, g)| ((s, a, g), train_one(spec, &prepared[s], a, g)))
            .collect();
        Ok((prepared, cells))
    })?;
    drop(prepared);

    let file =
        File::create(&spec.out).map_err(|e| CliError::Input(format!("cannot create {}: {e}", spec.out.display())))?;
    let mut appender = Appender::new(BufWriter::new(file))?;
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for ((s, a, g), result) in cells {
        match result {
            Ok(pair) => {
                for row in &pair {
                    appender.append(row)?;
                }
                rows.extend(pair);
            }
            Err(e) => {
                eprintln!("warning: {} gamma={g} seed={} failed: {e}", a.tag(), spec.seeds[s]);
                failures.push(e);
            }
        }
    }
    appender.finish()?;

    print!("{}", summary_table(&rows));
    match failures.len() {
        0 => Ok(()),
        n => {
            let first = failures.swap_remove(0);
            let err = CliError::from(first);
            Err(match err {
                CliError::Solver(msg) => CliError::Solver(format!("{n} run(s) failed; first: {msg}")),
                other => other,
            })
        }
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn cell(values: &[f64]) -> String {
    let (m, s) = mean_std(values);
    format!("{m:.4} ± {s:.4}")
}

/// One line per (algo, gamma, split) with `mean ± std` over seeds.
pub fn summary_table(rows: &[ResultRow]) -> String {
    let mut keys: Vec<(String, f64, String)> = Vec::new();
    for r in rows {
        let key = (r.algo.clone(), r.gamma, r.split.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    let mut out = format!(
        "{:<10} {:>7} {:<6} {:>17} {:>17} {:>17} {:>17}\n",
        "algo", "gamma", "split", "loss", "loss_g0", "loss_g1", "gap"
    );
    for (algo, gamma, split) in keys {
        let sel: Vec<&ResultRow> = rows
            .iter()
            .filter(|r| r.algo == algo && r.gamma == gamma && r.split == split)
            .collect();
        let col = |f: fn(&ResultRow) -> f64| cell(&sel.iter().map(|r| f(r)).collect::<Vec<_>>());
        out.push_str(&format!(
            "{:<10} {:>7} {:<6} {:>17} {:>17} {:>17} {:>17}\n",
            algo,
            gamma,
            split,
            col(|r| r.loss),
            col(|r| r.loss_g0),
            col(|r| r.loss_g1),
            col(|r| r.gap),
        ));
    }
    out
}
