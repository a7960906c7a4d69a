//! Newton-type solvers for the two convex problems the fairness algorithms reduce to:
//! unconstrained minimization of a strictly convex function, and
//!
//! ```text
//! min obj(w)  s.t.  con(w) <= lambda
//! ```
//!
//! The constrained problem is solved through its scalar dual. For `mu >= 0` let
//! `w(mu) = argmin obj + mu * con`; `con(w(mu))` is nonincreasing in `mu`, so when the
//! constraint is active the optimal multiplier is the root of `con(w(mu)) = lambda`.
//! The root is bracketed and then found by bisection, accelerated with Newton steps on
//! `mu` whenever they land inside the bracket.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{Combination, Objective, WeightVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Stop when the sup-norm of the gradient is below this.
    pub grad_tol: f64,
    pub max_newton_iters: usize,
    /// Target accuracy of `con(w) - lambda` for active constraints.
    pub dual_tol: f64,
    /// Target for the complementarity product `mu * (lambda - con)`.
    pub complementarity_tol: f64,
    pub dual_mu_max: f64,
    pub max_dual_iters: usize,
    pub line_search: LineSearch,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearch {
    pub shrink: f64,
    pub sufficient_decrease: f64,
    pub max_backtracks: usize,
}

impl Default for LineSearch {
    fn default() -> Self {
        Self {
            shrink: 0.5,
            sufficient_decrease: 1e-4,
            max_backtracks: 60,
        }
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            grad_tol: 1e-8,
            max_newton_iters: 200,
            dual_tol: 1e-9,
            complementarity_tol: 1e-7,
            dual_mu_max: 1e8,
            max_dual_iters: 200,
            line_search: LineSearch::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.grad_tol,
            self.dual_tol,
            self.complementarity_tol,
            self.dual_mu_max,
            self.line_search.sufficient_decrease,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidInput("solver tolerances must be positive".into()));
        }
        if !(self.line_search.shrink > 0.0 && self.line_search.shrink < 1.0) {
            return Err(Error::InvalidInput("line-search shrink must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Newton's method with backtracking; falls back to a gradient step when the Newton
/// direction does not decrease the objective.
pub fn minimize_unconstrained(
    objective: &dyn Objective,
    start: &DVector<f64>,
    cfg: &SolverConfig,
) -> Result<DVector<f64>> {
    if start.len() != objective.dim() {
        return Err(Error::DimensionMismatch {
            expected: objective.dim(),
            found: start.len(),
        });
    }
    let mut w = start.clone();
    let mut f = objective.value(&w);
    if !f.is_finite() {
        return Err(Error::NonFiniteStart);
    }
    let mut grad_norm = f64::INFINITY;
    for _ in 0..cfg.max_newton_iters {
        let g = objective.gradient(&w);
        grad_norm = g.amax();
        if grad_norm <= cfg.grad_tol {
            return Ok(w);
        }
        let h = objective.hessian(&w);
        let step = newton_direction(h, &g)
            .and_then(|dir| backtrack(objective, &w, f, &g, &dir, 1.0, &cfg.line_search))
            .or_else(|| {
                let dir = -&g;
                let t0 = 1.0 / g.norm().max(1.0);
                backtrack(objective, &w, f, &g, &dir, t0, &cfg.line_search)
            });
        match step {
            Some((w_next, f_next)) => {
                w = w_next;
                f = f_next;
            }
            None => break,
        }
    }
    let g = objective.gradient(&w);
    grad_norm = grad_norm.min(g.amax());
    if g.amax() <= cfg.grad_tol {
        return Ok(w);
    }
    Err(Error::NotConverged {
        iterations: cfg.max_newton_iters,
        grad_norm,
        best: w,
    })
}

fn newton_direction(mut h: DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    let scale = h.diagonal().amax().max(1e-300);
    let mut damping = 0.0;
    for _ in 0..12 {
        if let Some(chol) = h.clone().cholesky() {
            let dir = -chol.solve(g);
            if dir.iter().all(|v| v.is_finite()) {
                return Some(dir);
            }
        }
        let next = if damping == 0.0 { 1e-10 * scale } else { damping * 10.0 };
        for j in 0..h.nrows() {
            h[(j, j)] += next - damping;
        }
        damping = next;
    }
    None
}

fn backtrack(
    objective: &dyn Objective,
    w: &DVector<f64>,
    f: f64,
    g: &DVector<f64>,
    dir: &DVector<f64>,
    t0: f64,
    ls: &LineSearch,
) -> Option<(DVector<f64>, f64)> {
    let slope = g.dot(dir);
    if !(slope < 0.0) {
        return None;
    }
    // Inside the quadratic-convergence region decreases are below rounding noise.
    let noise = 1e-14 * (1.0 + f.abs());
    let mut t = t0;
    for _ in 0..ls.max_backtracks {
        let candidate = w + dir * t;
        let fc = objective.value(&candidate);
        if fc.is_finite() && (fc <= f + ls.sufficient_decrease * t * slope || (-slope * t < noise && fc <= f + noise)) {
            return Some((candidate, fc));
        }
        t *= ls.shrink;
    }
    None
}

/// Result of a level-constrained solve.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedSolution {
    pub w: WeightVector,
    pub objective_value: f64,
    /// `con(w)`.
    pub constraint_value: f64,
    pub multiplier: f64,
    pub active: bool,
}

/// One evaluation of the dual function during the multiplier search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualProbe {
    pub multiplier: f64,
    pub constraint_value: f64,
}

/// KKT residuals of a constrained solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    /// `‖∇obj + mu ∇con‖∞`.
    pub stationarity: f64,
    /// `max(0, con - lambda)`.
    pub primal_infeasibility: f64,
    /// `|mu * (lambda - con)|`.
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn compute(obj: &dyn Objective, con: &dyn Objective, lambda: f64, sol: &ConstrainedSolution) -> Self {
        let w = sol.w.values();
        let mut g = obj.gradient(w);
        if sol.multiplier != 0.0 {
            g.axpy(sol.multiplier, &con.gradient(w), 1.0);
        }
        let c = con.value(w);
        Self {
            stationarity: g.amax(),
            primal_infeasibility: (c - lambda).max(0.0),
            complementarity: (sol.multiplier * (lambda - c)).abs(),
        }
    }

    /// Stationarity `≤ 1e-6 (1 + mu)`, feasibility `≤ 1e-7`, complementarity `≤ 1e-6`.
    pub fn within_default_tolerances(&self, multiplier: f64) -> bool {
        self.stationarity <= 1e-6 * (1.0 + multiplier)
            && self.primal_infeasibility <= 1e-7
            && self.complementarity <= 1e-6
    }
}

/// Solver for `min obj s.t. con <= lambda` that keeps warm-start state between calls
/// with different levels. Not reentrant; use one instance per thread.
pub struct LevelConstrainedSolver<'a> {
    obj: &'a dyn Objective,
    con: &'a dyn Objective,
    cfg: SolverConfig,
    check_feasibility: bool,
    obj_minimizer: Option<DVector<f64>>,
    con_minimum: Option<f64>,
    warm: Option<(f64, DVector<f64>)>,
    probes: Vec<DualProbe>,
}

impl<'a> LevelConstrainedSolver<'a> {
    pub fn new(obj: &'a dyn Objective, con: &'a dyn Objective, cfg: SolverConfig) -> Self {
        Self {
            obj,
            con,
            cfg,
            check_feasibility: true,
            obj_minimizer: None,
            con_minimum: None,
            warm: None,
            probes: Vec::new(),
        }
    }

    /// Supplies the unconstrained minimizer of `obj` if already known.
    pub fn with_objective_minimizer(mut self, w: DVector<f64>) -> Self {
        self.obj_minimizer = Some(w);
        self
    }

    /// Supplies `min con` if already known.
    pub fn with_constraint_minimum(mut self, value: f64) -> Self {
        self.con_minimum = Some(value);
        self
    }

    /// For constraints without a finite minimum (affine ones); disables the
    /// infeasibility check.
    pub fn unbounded_constraint(mut self) -> Self {
        self.check_feasibility = false;
        self
    }

    /// Multiplier/constraint pairs evaluated by all solves so far.
    pub fn probes(&self) -> &[DualProbe] {
        &self.probes
    }

    fn objective_minimizer(&mut self) -> Result<DVector<f64>> {
        if self.obj_minimizer.is_none() {
            let start = DVector::zeros(self.obj.dim());
            self.obj_minimizer = Some(minimize_unconstrained(self.obj, &start, &self.cfg)?);
        }
        Ok(self.obj_minimizer.clone().unwrap())
    }

    fn constraint_minimum(&mut self) -> Result<f64> {
        if self.con_minimum.is_none() {
            let start = DVector::zeros(self.con.dim());
            let w = minimize_unconstrained(self.con, &start, &self.cfg)?;
            self.con_minimum = Some(self.con.value(&w));
        }
        Ok(self.con_minimum.unwrap())
    }

    /// `w(mu)` minimizing `(obj + mu con) / (1 + mu)`.
    fn lagrangian_minimizer(&self, mu: f64, start: &DVector<f64>) -> Result<DVector<f64>> {
        let s = 1.0 / (1.0 + mu);
        let lagrangian = Combination::new(vec![(s, self.obj), (mu * s, self.con)]);
        minimize_unconstrained(&lagrangian, start, &self.cfg)
    }

    /// `d con(w(mu)) / d mu = -∇con' (∇²obj + mu ∇²con)^{-1} ∇con`.
    fn dual_slope(&self, mu: f64, w: &DVector<f64>) -> Option<f64> {
        let gc = self.con.gradient(w);
        let mut h = self.obj.hessian(w);
        if mu != 0.0 {
            h += self.con.hessian(w) * mu;
        }
        let chol = h.cholesky()?;
        let slope = -gc.dot(&chol.solve(&gc));
        (slope.is_finite() && slope < 0.0).then_some(slope)
    }

    pub fn solve(&mut self, lambda: f64) -> Result<ConstrainedSolution> {
        self.cfg.validate()?;
        if !lambda.is_finite() {
            return Err(Error::InvalidInput(format!("level must be finite, got {lambda}")));
        }
        let w_free = self.objective_minimizer()?;
        let c_free = self.con.value(&w_free);
        if c_free <= lambda {
            return Ok(self.solution(w_free, 0.0, false));
        }
        if self.check_feasibility {
            let minimum = self.constraint_minimum()?;
            if lambda < minimum {
                return Err(Error::Infeasible { lambda, minimum });
            }
        }

        let evaluate = |this: &mut Self, mu: f64, start: &DVector<f64>| -> Result<(DVector<f64>, f64)> {
            let w = this.lagrangian_minimizer(mu, start)?;
            let c = this.con.value(&w);
            this.probes.push(DualProbe {
                multiplier: mu,
                constraint_value: c,
            });
            Ok((w, c - lambda))
        };

        // Bracket: phi(lo) > 0 >= phi(hi).
        let (mu0, start0) = match &self.warm {
            Some((mu, w)) if *mu > 0.0 => (*mu, w.clone()),
            _ => (1.0, w_free.clone()),
        };
        let mut lo = 0.0;
        let mut lo_w = w_free;
        let (mut w, mut phi) = evaluate(self, mu0, &start0)?;
        let mut mu = mu0;
        let mut hi;
        let mut hi_w;
        if phi <= 0.0 {
            hi = mu;
            hi_w = w.clone();
        } else {
            lo = mu;
            lo_w = w.clone();
            loop {
                let next = mu * 4.0;
                if next > self.cfg.dual_mu_max {
                    return Err(Error::DualBracket {
                        lambda,
                        mu_max: self.cfg.dual_mu_max,
                    });
                }
                let (wn, pn) = evaluate(self, next, &w)?;
                mu = next;
                w = wn;
                phi = pn;
                if phi <= 0.0 {
                    hi = mu;
                    hi_w = w.clone();
                    break;
                }
                lo = mu;
                lo_w = w.clone();
            }
        }

        let (dual_tol, comp_tol) = (self.cfg.dual_tol, self.cfg.complementarity_tol);
        let tolerance = |mu: f64| dual_tol.min(comp_tol / mu.max(1e-300));
        let mut width_before = hi - lo;
        for _ in 0..self.cfg.max_dual_iters {
            if phi.abs() <= tolerance(mu) {
                break;
            }
            if hi - lo <= 4.0 * f64::EPSILON * hi {
                // Bracket exhausted in floating point; the upper end is feasible.
                mu = hi;
                w = hi_w.clone();
                break;
            }
            let newton = self.dual_slope(mu, &w).map(|slope| mu - phi / slope);
            let mid = if lo > 0.0 && hi / lo > 16.0 {
                (lo * hi).sqrt()
            } else {
                0.5 * (lo + hi)
            };
            let candidate = match newton {
                Some(c) if c > lo && c < hi && (hi - lo) <= 0.75 * width_before => c,
                _ => mid,
            };
            width_before = hi - lo;
            let start = if phi > 0.0 { &lo_w } else { &hi_w };
            let (wn, pn) = evaluate(self, candidate, &start.clone())?;
            mu = candidate;
            w = wn;
            phi = pn;
            if phi > 0.0 {
                lo = mu;
                lo_w = w.clone();
            } else {
                hi = mu;
                hi_w = w.clone();
            }
        }
        self.warm = Some((mu, w.clone()));
        Ok(self.solution(w, mu, true))
    }

    fn solution(&self, w: DVector<f64>, multiplier: f64, active: bool) -> ConstrainedSolution {
        ConstrainedSolution {
            objective_value: self.obj.value(&w),
            constraint_value: self.con.value(&w),
            multiplier,
            active,
            w: WeightVector::new(w).expect("solver iterates are finite"),
        }
    }
}

/// One-shot `min obj s.t. con <= lambda`.
pub fn minimize_level_constrained(
    obj: &dyn Objective,
    con: &dyn Objective,
    lambda: f64,
    cfg: &SolverConfig,
) -> Result<ConstrainedSolution> {
    LevelConstrainedSolver::new(obj, con, *cfg).solve(lambda)
}
