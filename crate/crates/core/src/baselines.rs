//! Comparison methods: quadratic penalty, linearly relaxed constraint, and adaptive
//! group resampling.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::el::{Algorithm, SolveReport};
use crate::error::{Error, Result};
use crate::model::{EmpiricalProblem, Group, GroupedDataset, LossKind, LossSpec, Objective, TwoGroupProblem};
use crate::solver::{minimize_unconstrained, LevelConstrainedSolver, SolverConfig};
use crate::timing::Stopwatch;

/// Losses beyond this are treated as divergence.
const DIVERGENCE_LIMIT: f64 = 1e12;

/// Adaptive first-order optimizer with per-coordinate second-moment scaling.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: DVector<f64>,
    v: DVector<f64>,
    t: i32,
}

impl Adam {
    pub fn new(dim: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: DVector::zeros(dim),
            v: DVector::zeros(dim),
            t: 0,
        }
    }

    pub fn step(&mut self, w: &mut DVector<f64>, grad: &DVector<f64>) {
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        for i in 0..w.len() {
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * grad[i];
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            w[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyConfig {
    pub t0: f64,
    pub growth: f64,
    pub grow_every: usize,
    pub lr: f64,
    pub max_iters: usize,
    /// Stop once the penalized objective at consecutive stage ends differs by less
    /// than this; 0 disables early stopping.
    pub stop_delta: f64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self {
            t0: 0.1,
            growth: 2.0,
            grow_every: 100,
            lr: 0.005,
            max_iters: 1000,
            stop_delta: 1e-6,
        }
    }
}

impl PenaltyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t0 > 0.0 && self.t0.is_finite()) {
            return Err(Error::InvalidInput(format!("t0 must be positive, got {}", self.t0)));
        }
        if !(self.growth > 1.0 && self.growth.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "growth must exceed 1, got {}",
                self.growth
            )));
        }
        if self.grow_every == 0 || self.max_iters == 0 {
            return Err(Error::InvalidInput("grow_every and max_iters must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if !(self.stop_delta >= 0.0) {
            return Err(Error::InvalidInput("stop_delta must be non-negative".into()));
        }
        Ok(())
    }
}

/// Penalized objective at the first and last iterate of one penalty level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyStage {
    pub t: f64,
    pub start_value: f64,
    pub end_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyRun {
    pub report: SolveReport,
    pub stages: Vec<PenaltyStage>,
    pub iterations: usize,
}

fn penalized(problem: &dyn TwoGroupProblem, w: &DVector<f64>, gamma: f64, t: f64) -> f64 {
    let l = problem.losses(w);
    let excess = (l.gap.abs() - gamma).max(0.0);
    l.overall + t * excess * excess
}

fn penalized_gradient(problem: &dyn TwoGroupProblem, w: &DVector<f64>, gamma: f64, t: f64) -> DVector<f64> {
    let mut g = problem.overall().gradient(w);
    let d = problem.group_value(Group::Zero, w) - problem.group_value(Group::One, w);
    let excess = d.abs() - gamma;
    if excess > 0.0 {
        let dd = problem.group(Group::Zero).gradient(w) - problem.group(Group::One).gradient(w);
        g.axpy(2.0 * t * excess * d.signum(), &dd, 1.0);
    }
    g
}

/// Minimizes `L(w) + t max(0, |L_0(w) - L_1(w)| - gamma)^2`, multiplying `t` by
/// `growth` every `grow_every` iterations.
pub fn penalty_train(problem: &dyn TwoGroupProblem, gamma: f64, cfg: &PenaltyConfig) -> Result<SolveReport> {
    penalty_train_traced(problem, gamma, cfg).map(|run| run.report)
}

pub fn penalty_train_traced(problem: &dyn TwoGroupProblem, gamma: f64, cfg: &PenaltyConfig) -> Result<PenaltyRun> {
    cfg.validate()?;
    check_gamma(gamma)?;
    let clock = Stopwatch::start();
    let mut w = DVector::zeros(problem.dim());
    let mut adam = Adam::new(w.len(), cfg.lr);
    let mut t = cfg.t0;
    let mut stages = Vec::new();
    let mut stage_start = penalized(problem, &w, gamma, t);
    let mut previous_stage_end: Option<f64> = None;
    let mut iterations = 0;

    for it in 1..=cfg.max_iters {
        let grad = penalized_gradient(problem, &w, gamma, t);
        adam.step(&mut w, &grad);
        iterations = it;
        let value = penalized(problem, &w, gamma, t);
        if !value.is_finite() || value > DIVERGENCE_LIMIT || w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { iteration: it });
        }
        if it % cfg.grow_every != 0 && it != cfg.max_iters {
            continue;
        }
        stages.push(PenaltyStage {
            t,
            start_value: stage_start,
            end_value: value,
        });
        let converged =
            cfg.stop_delta > 0.0 && previous_stage_end.is_some_and(|prev: f64| (prev - value).abs() < cfg.stop_delta);
        if converged || it == cfg.max_iters {
            break;
        }
        previous_stage_end = Some(value);
        t *= cfg.growth;
        stage_start = penalized(problem, &w, gamma, t);
    }

    let mut report = SolveReport::new(Algorithm::Penalty, gamma, w, problem);
    report.wallclock_ms = clock.elapsed_ms();
    Ok(PenaltyRun {
        report,
        stages,
        iterations,
    })
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma.is_nan() || gamma < 0.0 {
        return Err(Error::InvalidInput(format!("gamma must be non-negative, got {gamma}")));
    }
    Ok(())
}

/// The affine surrogate `a·w + b` of `L_0 - L_1` used by the linear relaxation.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedConstraint {
    pub a: DVector<f64>,
    pub b: f64,
}

impl RelaxedConstraint {
    /// Regression: difference of mean residuals `Y - w·x̃`.
    /// Classification: difference of means of `(Y - 1/2) w·x̃`.
    pub fn from_data(data: &GroupedDataset, kind: LossKind) -> Result<Self> {
        let dim = data.weight_dim();
        let mut a = DVector::zeros(dim);
        let mut b = 0.0;
        for g in Group::BOTH {
            let rows = data.indices_of(g);
            if rows.is_empty() {
                return Err(Error::EmptyGroup(g));
            }
            let sign = if g == Group::Zero { 1.0 } else { -1.0 };
            let scale = sign / rows.len() as f64;
            for &i in &rows {
                let y = data.targets()[i];
                let coef = match kind {
                    LossKind::SquaredError => {
                        b += scale * y;
                        -scale
                    }
                    LossKind::BinaryCrossEntropy => scale * (y - 0.5),
                };
                for j in 0..data.n_features() {
                    a[j] += coef * data.features()[(i, j)];
                }
                a[dim - 1] += coef;
            }
        }
        Ok(Self { a, b })
    }

    pub fn value(&self, w: &DVector<f64>) -> f64 {
        self.a.dot(w) + self.b
    }

    fn negated(&self) -> Self {
        Self {
            a: -&self.a,
            b: -self.b,
        }
    }
}

impl Objective for RelaxedConstraint {
    fn dim(&self) -> usize {
        self.a.len()
    }

    fn value(&self, w: &DVector<f64>) -> f64 {
        RelaxedConstraint::value(self, w)
    }

    fn gradient(&self, _w: &DVector<f64>) -> DVector<f64> {
        self.a.clone()
    }

    fn hessian(&self, _w: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(self.a.len(), self.a.len())
    }
}

/// Minimizes the regularized loss subject to `-gamma <= a·w + b <= gamma`.
///
/// The two half-spaces are parallel, so at most one side is active: the
/// unconstrained optimum is tried first, then the violated side alone.
pub fn linear_relaxation_train(
    data: &GroupedDataset,
    spec: &LossSpec,
    gamma: f64,
    cfg: &SolverConfig,
) -> Result<SolveReport> {
    check_gamma(gamma)?;
    let clock = Stopwatch::start();
    let problem = EmpiricalProblem::new(data, *spec)?;
    let constraint = RelaxedConstraint::from_data(data, spec.kind)?;
    let overall = problem.overall();
    let w_o = minimize_unconstrained(&overall, &DVector::zeros(problem.dim()), cfg)?;
    let c = constraint.value(&w_o);

    let mut report = if c.abs() <= gamma || gamma.is_infinite() {
        let mut r = SolveReport::new(Algorithm::LinearRelaxation, gamma, w_o, &problem);
        r.returned_unconstrained = true;
        r
    } else {
        // violated side as `con <= gamma`
        let side = if c > gamma { constraint } else { constraint.negated() };
        let mut solver = LevelConstrainedSolver::new(&overall, &side, *cfg)
            .with_objective_minimizer(w_o)
            .unbounded_constraint();
        let sol = solver.solve(gamma)?;
        SolveReport::new(Algorithm::LinearRelaxation, gamma, sol.w.into_inner(), &problem)
    };
    report.wallclock_ms = clock.elapsed_ms();
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FairBatchConfig {
    pub alpha: f64,
    pub batch_size: usize,
    pub lr: f64,
    pub max_epochs: usize,
    pub seed: u64,
    /// Stop once the overall training loss changes by less than this between
    /// epochs; 0 disables early stopping.
    pub stop_delta: f64,
}

impl Default for FairBatchConfig {
    fn default() -> Self {
        Self {
            alpha: 0.005,
            batch_size: 100,
            lr: 0.005,
            max_epochs: 50,
            seed: 0,
            stop_delta: 1e-6,
        }
    }
}

impl FairBatchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidInput(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidInput(format!(
                "batch size must be at least 2, got {}",
                self.batch_size
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if self.max_epochs == 0 {
            return Err(Error::InvalidInput("max_epochs must be positive".into()));
        }
        if !(self.stop_delta >= 0.0) {
            return Err(Error::InvalidInput("stop_delta must be non-negative".into()));
        }
        Ok(())
    }
}

/// Bounds applied to each group's sampling rate.
pub const SAMPLING_RATE_BOUNDS: (f64, f64) = (0.05, 0.95);

#[derive(Debug, Clone, PartialEq)]
pub struct FairBatchRun {
    pub report: SolveReport,
    /// Sampling rates `(SR_0, SR_1)` at initialization and after every epoch.
    pub sampling_rates: Vec<(f64, f64)>,
    /// Training losses at the end of every epoch, used for that epoch's rate update.
    pub epoch_losses: Vec<crate::model::GroupLosses>,
}

/// One rate update given the signed difference `L_0 - L_1`: the group whose loss exceeds the other's by more than `gamma`
/// gains `alpha`, then rates are clipped and renormalized.
pub fn update_sampling_rates(rates: (f64, f64), gap: f64, gamma: f64, alpha: f64) -> (f64, f64) {
    let (mut s0, mut s1) = rates;
    if gap > gamma {
        s0 += alpha;
        s1 -= alpha;
    } else if -gap > gamma {
        s0 -= alpha;
        s1 += alpha;
    }
    let (lo, hi) = SAMPLING_RATE_BOUNDS;
    s0 = s0.clamp(lo, hi);
    s1 = s1.clamp(lo, hi);
    let total = s0 + s1;
    (s0 / total, s1 / total)
}

/// Mini-batch training where each sample's group is drawn with probabilities `SR`
/// and the row uniformly within that group.
pub fn fairbatch_train(
    data: &GroupedDataset,
    spec: &LossSpec,
    gamma: f64,
    cfg: &FairBatchConfig,
) -> Result<SolveReport> {
    fairbatch_train_traced(data, spec, gamma, cfg).map(|run| run.report)
}

pub fn fairbatch_train_traced(
    data: &GroupedDataset,
    spec: &LossSpec,
    gamma: f64,
    cfg: &FairBatchConfig,
) -> Result<FairBatchRun> {
    cfg.validate()?;
    check_gamma(gamma)?;
    let clock = Stopwatch::start();
    let problem = EmpiricalProblem::new(data, *spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (n0, n1) = (data.count(Group::Zero) as f64, data.count(Group::One) as f64);
    let mut rates = (n0 / (n0 + n1), n1 / (n0 + n1));
    let mut sampling_rates = vec![rates];
    let mut epoch_losses = Vec::new();

    let dim = problem.dim();
    let mut w = DVector::zeros(dim);
    let mut adam = Adam::new(dim, cfg.lr);
    let batches = (data.len() / cfg.batch_size).max(1);
    let mut previous = problem.losses(&w).overall;
    let mut grad = DVector::zeros(dim);

    for epoch in 1..=cfg.max_epochs {
        for _ in 0..batches {
            grad.fill(0.0);
            for _ in 0..cfg.batch_size {
                let g = if rng.gen::<f64>() < rates.0 {
                    Group::Zero
                } else {
                    Group::One
                };
                let loss = problem.group_loss(g);
                let i = rng.gen_range(0..loss.len());
                let x = loss.design().row(i);
                let score: f64 = (0..dim).map(|j| x[j] * w[j]).sum();
                let d = spec.kind.d_score(loss.targets()[i], score);
                for j in 0..dim {
                    grad[j] += d * x[j];
                }
            }
            grad /= cfg.batch_size as f64;
            grad.axpy(2.0 * spec.eta, &w, 1.0);
            adam.step(&mut w, &grad);
        }
        let losses = problem.losses(&w);
        if !losses.overall.is_finite() || losses.overall > DIVERGENCE_LIMIT {
            return Err(Error::Diverged { iteration: epoch });
        }
        rates = update_sampling_rates(rates, losses.loss_g0 - losses.loss_g1, gamma, cfg.alpha);
        sampling_rates.push(rates);
        epoch_losses.push(losses);
        let converged = cfg.stop_delta > 0.0 && (previous - losses.overall).abs() < cfg.stop_delta;
        previous = losses.overall;
        if converged {
            break;
        }
    }

    let mut report = SolveReport::new(Algorithm::FairBatch, gamma, w, &problem);
    report.wallclock_ms = clock.elapsed_ms();
    Ok(FairBatchRun {
        report,
        sampling_rates,
        epoch_losses,
    })
}
