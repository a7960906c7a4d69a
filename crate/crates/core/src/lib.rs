//! Training under an equalized-loss fairness constraint: `|L_0(w) - L_1(w)| <= gamma`
//! for two groups, via bisection over convex level-constrained subproblems.
//!
//! ```
//! use lossbalance::data::regression_fixture;
//! use lossbalance::{optimal_gamma_el, split_and_standardize, ElConfig, EmpiricalProblem, LossKind, LossSpec};
//! use rand::SeedableRng;
//!
//! let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
//! let data = regression_fixture(500, 0.3, &mut rng)?;
//! let (train, _test) = split_and_standardize(&data, 0.7, 0)?;
//! let problem = EmpiricalProblem::new(&train, LossSpec::new(LossKind::SquaredError, 0.002))?;
//! let report = optimal_gamma_el(&problem, &ElConfig::new(0.05, 1e-4))?;
//! assert!(report.train.gap <= 0.05 + 1e-3);
//! # Ok::<(), lossbalance::Error>(())
//! ```

pub mod baselines;
pub mod data;
pub mod el;
pub mod error;
pub mod model;
pub mod solver;
pub mod timing;

pub use baselines::{
    fairbatch_train, fairbatch_train_traced, linear_relaxation_train, penalty_train, penalty_train_traced, Adam,
    FairBatchConfig, FairBatchRun, PenaltyConfig, PenaltyRun, PenaltyStage, RelaxedConstraint,
};
pub use data::{
    load_csv, read_csv, split_and_standardize, synth_oracle_solve, train_test_split, DatasetSchema, Standardizer,
    SyntheticQuadratic,
};
pub use el::{
    bgl_report, check_assumption2, el_minimizer, group_optima, optimal_gamma_el, suboptimal_gamma_el,
    unconstrained_train, Algorithm, BglReport, ElConfig, GroupOptima, SolveReport,
};
pub use error::{Error, Result};
pub use model::{
    apply_feature_map, empirical_loss, loss_gradient, loss_hessian, predict_score, Activation, EmpiricalProblem,
    FrozenFeatureMap, Group, GroupLosses, GroupSelector, GroupedDataset, LossKind, LossSpec, Objective,
    TwoGroupProblem, WeightVector,
};
pub use solver::{minimize_level_constrained, minimize_unconstrained, ConstrainedSolution, SolverConfig};
