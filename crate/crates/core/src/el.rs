//! Training under the equalized-loss constraint `|L_0(w) - L_1(w)| <= gamma`.
//!
//! * [`el_minimizer`] bisects over a loss level `lambda`; each step solves the convex
//!   problem `min L_1 + gamma  s.t.  L_0 <= lambda` and moves the bracket according
//!   to whether the constrained optimum of the shifted group-1 loss lies above `lambda`.
//! * [`optimal_gamma_el`] runs it for `+gamma` and `-gamma` and keeps the better
//!   candidate, unless the unconstrained optimum is already fair.
//! * [`suboptimal_gamma_el`] walks the segment from the unconstrained optimum toward
//!   the disadvantaged group's own optimum and bisects on the loss gap along it; only
//!   unconstrained solves are needed.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::{Group, GroupLosses, TwoGroupProblem, WeightVector};
use crate::solver::{minimize_unconstrained, LevelConstrainedSolver, SolverConfig};
use crate::timing::Stopwatch;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElConfig {
    pub gamma: f64,
    /// Bisection stops once the bracket is no wider than this.
    pub epsilon: f64,
    pub solver: SolverConfig,
}

impl Default for ElConfig {
    fn default() -> Self {
        Self {
            gamma: 0.0,
            epsilon: 0.01,
            solver: SolverConfig::default(),
        }
    }
}

impl ElConfig {
    pub fn new(gamma: f64, epsilon: f64) -> Self {
        Self {
            gamma,
            epsilon,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidInput(format!(
                "gamma must be finite and >= 0, got {}",
                self.gamma
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidInput(format!(
                "epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        self.solver.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    Unconstrained,
    ElMinimizer,
    OptimalEl,
    SuboptimalEl,
    Penalty,
    LinearRelaxation,
    FairBatch,
}

impl Algorithm {
    pub fn tag(self) -> &'static str {
        match self {
            Algorithm::Unconstrained => "erm",
            Algorithm::ElMinimizer => "elmin",
            Algorithm::OptimalEl => "alg2",
            Algorithm::SuboptimalEl => "alg3",
            Algorithm::Penalty => "penalty",
            Algorithm::LinearRelaxation => "linre",
            Algorithm::FairBatch => "fairbatch",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        [
            Algorithm::Unconstrained,
            Algorithm::ElMinimizer,
            Algorithm::OptimalEl,
            Algorithm::SuboptimalEl,
            Algorithm::Penalty,
            Algorithm::LinearRelaxation,
            Algorithm::FairBatch,
        ]
        .into_iter()
        .find(|a| a.tag() == tag)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BisectionStep {
    /// Level bisection: bracket, midpoint and `L_1(w*) + gamma` at the midpoint's solution.
    Level { start: f64, end: f64, mid: f64, value: f64 },
    /// Segment bisection: bracket, midpoint and `g(mid) - gamma`.
    Segment { start: f64, end: f64, mid: f64, value: f64 },
}

impl BisectionStep {
    pub fn bracket(&self) -> (f64, f64) {
        match *self {
            BisectionStep::Level { start, end, .. } | BisectionStep::Segment { start, end, .. } => (start, end),
        }
    }

    pub fn mid(&self) -> f64 {
        match *self {
            BisectionStep::Level { mid, .. } | BisectionStep::Segment { mid, .. } => mid,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BisectionTrace {
    pub steps: Vec<BisectionStep>,
}

impl BisectionTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.steps
            .iter()
            .map(|s| {
                let (a, b) = s.bracket();
                b - a
            })
            .collect()
    }

    /// Every bracket lies inside its predecessor and is half as wide.
    pub fn is_nested_halving(&self, rel_tol: f64) -> bool {
        self.steps.windows(2).all(|pair| {
            let (a0, b0) = pair[0].bracket();
            let (a1, b1) = pair[1].bracket();
            let w0 = b0 - a0;
            a1 >= a0 && b1 <= b0 && ((b1 - a1) - 0.5 * w0).abs() <= rel_tol * w0
        })
    }
}

/// Output of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub algorithm: Algorithm,
    pub gamma: f64,
    pub w: WeightVector,
    pub train: GroupLosses,
    pub test: Option<GroupLosses>,
    pub trace: BisectionTrace,
    /// Bracket left when the bisection stopped.
    pub final_bracket: Option<(f64, f64)>,
    /// The unconstrained optimum already satisfied the constraint.
    pub returned_unconstrained: bool,
    /// `(signed gamma, overall loss)` of every candidate considered.
    pub candidates: Vec<(f64, f64)>,
    pub wallclock_ms: u64,
}

impl SolveReport {
    pub(crate) fn new(algorithm: Algorithm, gamma: f64, w: DVector<f64>, problem: &dyn TwoGroupProblem) -> Self {
        let train = problem.losses(&w);
        Self {
            algorithm,
            gamma,
            w: WeightVector::new(w).expect("finite weights"),
            train,
            test: None,
            trace: BisectionTrace::default(),
            final_bracket: None,
            returned_unconstrained: false,
            candidates: Vec::new(),
            wallclock_ms: 0,
        }
    }

    /// Evaluates the weights on held-out data.
    pub fn evaluate_test(&mut self, problem: &dyn TwoGroupProblem) {
        self.test = Some(problem.losses(self.w.values()));
    }
}

/// Unconstrained minimizers of `L_0`, `L_1` and `L`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupOptima {
    pub w_g0: DVector<f64>,
    pub w_g1: DVector<f64>,
    pub w_o: DVector<f64>,
}

impl GroupOptima {
    pub fn group(&self, g: Group) -> &DVector<f64> {
        match g {
            Group::Zero => &self.w_g0,
            Group::One => &self.w_g1,
        }
    }
}

/// Unconstrained minimizer of the overall loss `L`.
pub fn unconstrained_train(problem: &dyn TwoGroupProblem, cfg: &SolverConfig) -> Result<SolveReport> {
    let clock = Stopwatch::start();
    let w = minimize_unconstrained(&problem.overall(), &DVector::zeros(problem.dim()), cfg)?;
    let mut report = SolveReport::new(Algorithm::Unconstrained, 0.0, w, problem);
    report.returned_unconstrained = true;
    report.wallclock_ms = clock.elapsed_ms();
    Ok(report)
}

pub fn group_optima(problem: &dyn TwoGroupProblem, cfg: &SolverConfig) -> Result<GroupOptima> {
    let start = DVector::zeros(problem.dim());
    let w_o = minimize_unconstrained(&problem.overall(), &start, cfg)?;
    let w_g0 = minimize_unconstrained(problem.group(Group::Zero), &w_o, cfg)?;
    let w_g1 = minimize_unconstrained(problem.group(Group::One), &w_o, cfg)?;
    Ok(GroupOptima { w_g0, w_g1, w_o })
}

/// Whether each group does at least as well as the other at its own optimum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Assumption2Check {
    pub holds: bool,
    /// `(L_1(w_G0) - L_0(w_G0), L_0(w_G1) - L_1(w_G1))`.
    pub margins: (f64, f64),
}

pub fn check_assumption2(problem: &dyn TwoGroupProblem, w_g0: &DVector<f64>, w_g1: &DVector<f64>) -> Assumption2Check {
    let l = |g: Group, w: &DVector<f64>| problem.group_value(g, w);
    let m0 = l(Group::One, w_g0) - l(Group::Zero, w_g0);
    let m1 = l(Group::Zero, w_g1) - l(Group::One, w_g1);
    Assumption2Check {
        holds: m0 >= 0.0 && m1 >= 0.0,
        margins: (m0, m1),
    }
}

/// Level bisection for `L_0(w) - L_1(w) = gamma`; `gamma` may be negative.
///
/// Requires `L_1(w_G0) - L_0(w_G0) > -gamma` and `L_0(w_G1) - L_1(w_G1) > gamma`, so
/// that the initial bracket `[L_0(w_G0), L_0(w_G1)]` contains the crossing level.
pub fn el_minimizer(
    problem: &dyn TwoGroupProblem,
    w_g0: &DVector<f64>,
    w_g1: &DVector<f64>,
    epsilon: f64,
    gamma: f64,
    cfg: &SolverConfig,
) -> Result<SolveReport> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidInput(format!("epsilon must be > 0, got {epsilon}")));
    }
    let clock = Stopwatch::start();
    let check = check_assumption2(problem, w_g0, w_g1);
    let (m0, m1) = check.margins;
    let failing = if !(m0 > -gamma) {
        Some("group-0 optimum margin L_1(w_G0) - L_0(w_G0) must exceed -gamma")
    } else if !(m1 > gamma) {
        Some("group-1 optimum margin L_0(w_G1) - L_1(w_G1) must exceed gamma")
    } else {
        None
    };
    if let Some(failing) = failing {
        return Err(Error::Assumption {
            failing,
            margin_g0: m0,
            margin_g1: m1,
            gamma,
        });
    }

    let l0 = problem.group(Group::Zero);
    let l1 = problem.group(Group::One);
    let mut start = l0.value(w_g0);
    let mut end = l0.value(w_g1);
    let mut solver = LevelConstrainedSolver::new(l1, l0, *cfg)
        .with_objective_minimizer(w_g1.clone())
        .with_constraint_minimum(start);

    let mut trace = BisectionTrace::default();
    let mut last = None;
    // At least one subproblem is solved even when the initial bracket is already narrow.
    while end - start > epsilon || last.is_none() {
        let mid = 0.5 * (start + end);
        let sol = solver.solve(mid)?;
        let value = sol.objective_value + gamma;
        trace.steps.push(BisectionStep::Level { start, end, mid, value });
        if value >= mid {
            start = mid;
        } else {
            end = mid;
        }
        last = Some(sol);
    }
    let w = last.expect("loop runs at least once").w.into_inner();
    let mut report = SolveReport::new(Algorithm::ElMinimizer, gamma, w, problem);
    report.trace = trace;
    report.final_bracket = Some((start, end));
    report.wallclock_ms = clock.elapsed_ms();
    Ok(report)
}

/// Optimal `gamma`-EL predictor.
pub fn optimal_gamma_el(problem: &dyn TwoGroupProblem, cfg: &ElConfig) -> Result<SolveReport> {
    cfg.validate()?;
    let clock = Stopwatch::start();
    let optima = group_optima(problem, &cfg.solver)?;
    let mut report = optimal_gamma_el_with(problem, &optima, cfg)?;
    report.wallclock_ms = clock.elapsed_ms();
    Ok(report)
}

/// [`optimal_gamma_el`] with precomputed group optima.
pub fn optimal_gamma_el_with(
    problem: &dyn TwoGroupProblem,
    optima: &GroupOptima,
    cfg: &ElConfig,
) -> Result<SolveReport> {
    cfg.validate()?;
    let clock = Stopwatch::start();
    let gamma = cfg.gamma;
    let free = problem.losses(&optima.w_o);
    if free.gap <= gamma {
        let mut report = SolveReport::new(Algorithm::OptimalEl, gamma, optima.w_o.clone(), problem);
        report.returned_unconstrained = true;
        report.candidates.push((gamma, free.overall));
        report.wallclock_ms = clock.elapsed_ms();
        return Ok(report);
    }
    let (m0, m1) = check_assumption2(problem, &optima.w_g0, &optima.w_g1).margins;
    let failing = if !(m0 > gamma) {
        Some("group-0 optimum margin L_1(w_G0) - L_0(w_G0) must exceed gamma")
    } else if !(m1 > gamma) {
        Some("group-1 optimum margin L_0(w_G1) - L_1(w_G1) must exceed gamma")
    } else {
        None
    };
    if let Some(failing) = failing {
        return Err(Error::Assumption {
            failing,
            margin_g0: m0,
            margin_g1: m1,
            gamma,
        });
    }

    let run = |g: f64| el_minimizer(problem, &optima.w_g0, &optima.w_g1, cfg.epsilon, g, &cfg.solver);
    let plus = run(gamma);
    let minus = if gamma == 0.0 { None } else { Some(run(-gamma)) };
    let (best, candidates) = match (plus, minus) {
        (Ok(p), None) => {
            let c = vec![(gamma, p.train.overall)];
            (p, c)
        }
        (Ok(p), Some(Ok(m))) => {
            let c = vec![(gamma, p.train.overall), (-gamma, m.train.overall)];
            (if p.train.overall <= m.train.overall { p } else { m }, c)
        }
        (Err(plus), Some(Err(minus))) => {
            return Err(Error::BranchesFailed {
                plus: Box::new(plus),
                minus: Box::new(minus),
            })
        }
        (Err(e), _) | (Ok(_), Some(Err(e))) => return Err(e),
    };
    let mut report = best;
    report.algorithm = Algorithm::OptimalEl;
    report.gamma = gamma;
    report.candidates = candidates;
    report.wallclock_ms = clock.elapsed_ms();
    Ok(report)
}

/// Group with the larger loss at `w`; ties go to group 0.
pub fn disadvantaged_group(problem: &dyn TwoGroupProblem, w: &DVector<f64>) -> Group {
    let losses = problem.losses(w);
    if losses.loss_g1 > losses.loss_g0 {
        Group::One
    } else {
        Group::Zero
    }
}

/// The segment `w(beta) = (1 - beta) w_O + beta w_G`, with `g` the loss gap of the
/// disadvantaged group over the other and `h` the overall loss along it.
pub struct Segment<'a> {
    problem: &'a dyn TwoGroupProblem,
    from: &'a DVector<f64>,
    to: &'a DVector<f64>,
    disadvantaged: Group,
}

impl<'a> Segment<'a> {
    pub fn new(
        problem: &'a dyn TwoGroupProblem,
        w_o: &'a DVector<f64>,
        w_g: &'a DVector<f64>,
        disadvantaged: Group,
    ) -> Self {
        Self {
            problem,
            from: w_o,
            to: w_g,
            disadvantaged,
        }
    }

    pub fn point(&self, beta: f64) -> DVector<f64> {
        self.from * (1.0 - beta) + self.to * beta
    }

    pub fn gap(&self, beta: f64) -> f64 {
        let w = self.point(beta);
        self.problem.group_value(self.disadvantaged, &w) - self.problem.group_value(self.disadvantaged.other(), &w)
    }

    pub fn overall(&self, beta: f64) -> f64 {
        self.problem.losses(&self.point(beta)).overall
    }
}

/// Sub-optimal `gamma`-EL predictor on the segment from `w_O` to the disadvantaged
/// group's optimum.
pub fn suboptimal_gamma_el(problem: &dyn TwoGroupProblem, cfg: &ElConfig) -> Result<SolveReport> {
    cfg.validate()?;
    let clock = Stopwatch::start();
    let start = DVector::zeros(problem.dim());
    let w_o = minimize_unconstrained(&problem.overall(), &start, &cfg.solver)?;
    let a_hat = disadvantaged_group(problem, &w_o);
    let mut report = suboptimal_from(
        problem,
        &w_o,
        || minimize_unconstrained(problem.group(a_hat), &w_o, &cfg.solver),
        cfg,
    )?;
    report.wallclock_ms = clock.elapsed_ms();
    Ok(report)
}

/// [`suboptimal_gamma_el`] with precomputed group optima.
pub fn suboptimal_gamma_el_with(
    problem: &dyn TwoGroupProblem,
    optima: &GroupOptima,
    cfg: &ElConfig,
) -> Result<SolveReport> {
    cfg.validate()?;
    let clock = Stopwatch::start();
    let a_hat = disadvantaged_group(problem, &optima.w_o);
    let mut report = suboptimal_from(problem, &optima.w_o, || Ok(optima.group(a_hat).clone()), cfg)?;
    report.wallclock_ms = clock.elapsed_ms();
    Ok(report)
}

fn suboptimal_from(
    problem: &dyn TwoGroupProblem,
    w_o: &DVector<f64>,
    target: impl FnOnce() -> Result<DVector<f64>>,
    cfg: &ElConfig,
) -> Result<SolveReport> {
    let gamma = cfg.gamma;
    let a_hat = disadvantaged_group(problem, w_o);
    let free = problem.losses(w_o);
    let gap_at_start = free.group(a_hat) - free.group(a_hat.other());
    if gap_at_start - gamma <= 0.0 {
        let mut report = SolveReport::new(Algorithm::SuboptimalEl, gamma, w_o.clone(), problem);
        report.returned_unconstrained = true;
        report.candidates.push((gamma, free.overall));
        return Ok(report);
    }
    let w_g = target()?;
    let segment = Segment::new(problem, w_o, &w_g, a_hat);
    let gap_at_end = segment.gap(1.0);
    if gap_at_end - gamma >= 0.0 {
        let m = -gap_at_end;
        let (margin_g0, margin_g1) = match a_hat {
            Group::Zero => (m, f64::NAN),
            Group::One => (f64::NAN, m),
        };
        return Err(Error::Assumption {
            failing: "the disadvantaged group's own optimum does not close the gap to gamma",
            margin_g0,
            margin_g1,
            gamma,
        });
    }

    let mut trace = BisectionTrace::default();
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut beta = None;
    while hi - lo > cfg.epsilon || beta.is_none() {
        let mid = 0.5 * (lo + hi);
        let value = segment.gap(mid) - gamma;
        trace.steps.push(BisectionStep::Segment {
            start: lo,
            end: hi,
            mid,
            value,
        });
        if value >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        beta = Some(mid);
    }
    let w = segment.point(beta.expect("loop runs at least once"));
    let mut report = SolveReport::new(Algorithm::SuboptimalEl, gamma, w, problem);
    report.trace = trace;
    report.final_bracket = Some((lo, hi));
    report.candidates.push((gamma, report.train.overall));
    Ok(report)
}

/// Bounded-group-loss view of a solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BglReport {
    pub min_loss: f64,
    pub max_loss: f64,
    /// Smallest `c` such that every group loss is at most `c`.
    pub bgl_level: f64,
    /// `bgl_level <= 2 gamma`.
    pub within_two_gamma: bool,
}

pub fn bgl_report(losses: &GroupLosses, gamma: f64) -> BglReport {
    let min_loss = losses.loss_g0.min(losses.loss_g1);
    let max_loss = losses.loss_g0.max(losses.loss_g1);
    BglReport {
        min_loss,
        max_loss,
        bgl_level: max_loss,
        within_two_gamma: max_loss <= 2.0 * gamma,
    }
}
