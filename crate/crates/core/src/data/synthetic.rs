//! Two-group quadratic problems with an exact solution, and generated tabular fixtures.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{Group, GroupedDataset, Objective, TwoGroupProblem};

/// `(w - center)' Q (w - center) + offset` with `Q` symmetric positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticLoss {
    pub center: DVector<f64>,
    pub curvature: DMatrix<f64>,
    pub offset: f64,
}

impl QuadraticLoss {
    pub fn new(center: DVector<f64>, curvature: DMatrix<f64>, offset: f64) -> Result<Self> {
        let d = center.len();
        if curvature.nrows() != d || curvature.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: curvature.nrows(),
            });
        }
        if (&curvature - curvature.transpose()).amax() > 1e-12 * (1.0 + curvature.amax()) {
            return Err(Error::InvalidInput("curvature matrix is not symmetric".into()));
        }
        if curvature.clone().cholesky().is_none() {
            return Err(Error::InvalidInput("curvature matrix is not positive definite".into()));
        }
        Ok(Self {
            center,
            curvature,
            offset,
        })
    }
}

impl Objective for QuadraticLoss {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, w: &DVector<f64>) -> f64 {
        let r = w - &self.center;
        r.dot(&(&self.curvature * &r)) + self.offset
    }

    fn gradient(&self, w: &DVector<f64>) -> DVector<f64> {
        (&self.curvature * (w - &self.center)) * 2.0
    }

    fn hessian(&self, _: &DVector<f64>) -> DMatrix<f64> {
        &self.curvature * 2.0
    }
}

/// Two quadratic group losses with group weights `(p_0, p_1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticQuadratic {
    pub groups: [QuadraticLoss; 2],
    pub weights: (f64, f64),
}

impl SyntheticQuadratic {
    pub fn new(g0: QuadraticLoss, g1: QuadraticLoss, weights: (f64, f64)) -> Result<Self> {
        if g0.dim() != g1.dim() {
            return Err(Error::DimensionMismatch {
                expected: g0.dim(),
                found: g1.dim(),
            });
        }
        let (p0, p1) = weights;
        if !(0.0..=1.0).contains(&p0) || (p0 + p1 - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("invalid group weights ({p0}, {p1})")));
        }
        Ok(Self {
            groups: [g0, g1],
            weights,
        })
    }

    /// `L_0 = (w - c_0)^2`, `L_1 = (w - c_1)^2` in one dimension.
    pub fn scalar_pair(c0: f64, c1: f64, p0: f64) -> Self {
        let unit = |c: f64| QuadraticLoss {
            center: DVector::from_element(1, c),
            curvature: DMatrix::identity(1, 1),
            offset: 0.0,
        };
        Self {
            groups: [unit(c0), unit(c1)],
            weights: (p0, 1.0 - p0),
        }
    }

    /// Random instance whose group optima satisfy `L_1(c_0) - L_0(c_0) > gamma` and
    /// `L_0(c_1) - L_1(c_1) > gamma`.
    pub fn random<R: Rng + ?Sized>(dim: usize, gamma: f64, rng: &mut R) -> Self {
        loop {
            let mut curvature = || {
                let a = DMatrix::<f64>::from_fn(dim, dim, |_, _| StandardNormal.sample(rng));
                &a * a.transpose() / dim as f64 + DMatrix::identity(dim, dim) * 0.3
            };
            let q0 = curvature();
            let q1 = curvature();
            let c0 = DVector::<f64>::from_fn(dim, |_, _| {
                let z: f64 = StandardNormal.sample(rng);
                1.5 * z
            });
            let c1 = DVector::<f64>::from_fn(dim, |_, _| {
                let z: f64 = StandardNormal.sample(rng);
                1.5 * z
            });
            let diff = &c0 - &c1;
            let cross0 = diff.dot(&(&q0 * &diff));
            let cross1 = diff.dot(&(&q1 * &diff));
            // offset difference delta = d1 - d0 must lie in (gamma - cross1, cross0 - gamma)
            let (lo, hi) = (gamma - cross1, cross0 - gamma);
            if hi - lo < 0.2 {
                continue;
            }
            let delta = lo + (hi - lo) * rng.gen_range(0.1..0.9);
            let d0 = 0.1 * rng.gen::<f64>();
            let p0 = rng.gen_range(0.2..0.8);
            return Self {
                groups: [
                    QuadraticLoss {
                        center: c0,
                        curvature: q0,
                        offset: d0,
                    },
                    QuadraticLoss {
                        center: c1,
                        curvature: q1,
                        offset: d0 + delta,
                    },
                ],
                weights: (p0, 1.0 - p0),
            };
        }
    }

    /// `L_1(c_0) - L_0(c_0)` and `L_0(c_1) - L_1(c_1)`.
    pub fn margins(&self) -> (f64, f64) {
        let [g0, g1] = &self.groups;
        (
            g1.value(&g0.center) - g0.value(&g0.center),
            g0.value(&g1.center) - g1.value(&g1.center),
        )
    }

    /// Minimizer of `(p_0 + mu) L_0 + (p_1 - mu) L_1` for `mu ∈ [-p_0, p_1]`; sweeps
    /// from `c_1` (at `-p_0`) to `c_0` (at `p_1`).
    pub fn tradeoff_point(&self, mu: f64) -> DVector<f64> {
        let [g0, g1] = &self.groups;
        let (p0, p1) = self.weights;
        let a = (p0 + mu).max(0.0);
        let b = (p1 - mu).max(0.0);
        let lhs = &g0.curvature * a + &g1.curvature * b;
        let rhs = &g0.curvature * &g0.center * a + &g1.curvature * &g1.center * b;
        lhs.cholesky().expect("positive definite combination").solve(&rhs)
    }

    fn gap(&self, w: &DVector<f64>) -> f64 {
        self.groups[0].value(w) - self.groups[1].value(w)
    }

    fn overall_value(&self, w: &DVector<f64>) -> f64 {
        self.weights.0 * self.groups[0].value(w) + self.weights.1 * self.groups[1].value(w)
    }
}

impl TwoGroupProblem for SyntheticQuadratic {
    fn dim(&self) -> usize {
        self.groups[0].dim()
    }

    fn group(&self, g: Group) -> &dyn Objective {
        &self.groups[g.index()]
    }

    fn shares(&self) -> (f64, f64) {
        self.weights
    }
}

/// Closed-form `gamma`-EL optimum of a quadratic instance.
///
/// The optimum is the unconstrained minimizer when that is fair; otherwise it lies on
/// the trade-off curve [`SyntheticQuadratic::tradeoff_point`], along which
/// `L_0 - L_1` decreases monotonically, at the point where the gap equals `+gamma` or
/// `-gamma`, whichever has the smaller overall loss.
pub fn synth_oracle_solve(problem: &SyntheticQuadratic, gamma: f64) -> Result<(DVector<f64>, f64)> {
    let (p0, p1) = problem.weights;
    let w_o = problem.tradeoff_point(0.0);
    if problem.gap(&w_o).abs() <= gamma {
        return Ok((w_o.clone(), problem.overall_value(&w_o)));
    }
    let (m0, m1) = problem.margins();
    if !(m0 > gamma && m1 > gamma) {
        return Err(Error::Assumption {
            failing: "group optimum margins must exceed gamma",
            margin_g0: m0,
            margin_g1: m1,
            gamma,
        });
    }
    let crossing = |target: f64| {
        let (mut lo, mut hi) = (-p0, p1);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if problem.gap(&problem.tradeoff_point(mid)) > target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= f64::EPSILON {
                break;
            }
        }
        problem.tradeoff_point(0.5 * (lo + hi))
    };
    let best = [gamma, -gamma]
        .into_iter()
        .map(crossing)
        .map(|w| {
            let l = problem.overall_value(&w);
            (w, l)
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("two candidates");
    Ok(best)
}

/// Linear-regression fixture: one feature, groups with different slopes.
///
/// Group 1 makes up `share_g1` of the rows. Targets are `1.0 x + N(0, 0.5²)` in group 0
/// and `-0.5 x + 0.8 + N(0, 0.6²)` in group 1.
pub fn regression_fixture<R: Rng + ?Sized>(n: usize, share_g1: f64, rng: &mut R) -> Result<GroupedDataset> {
    let mut rows = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    let mut groups = Vec::with_capacity(n);
    for i in 0..n {
        // guarantee both groups regardless of the draw
        let g = if i == 0 {
            Group::Zero
        } else if i == 1 || rng.gen::<f64>() < share_g1 {
            Group::One
        } else {
            Group::Zero
        };
        let x: f64 = StandardNormal.sample(rng);
        let e: f64 = StandardNormal.sample(rng);
        let y = match g {
            Group::Zero => x + 0.5 * e,
            Group::One => -0.5 * x + 0.8 + 0.6 * e,
        };
        rows.push(vec![x]);
        targets.push(y);
        groups.push(g);
    }
    GroupedDataset::from_rows(&rows, &targets, &groups)
}

/// Logistic fixture: two features, group-dependent decision boundaries.
pub fn classification_fixture<R: Rng + ?Sized>(n: usize, share_g1: f64, rng: &mut R) -> Result<GroupedDataset> {
    let mut rows = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    let mut groups = Vec::with_capacity(n);
    for i in 0..n {
        let g = if i == 0 {
            Group::Zero
        } else if i == 1 || rng.gen::<f64>() < share_g1 {
            Group::One
        } else {
            Group::Zero
        };
        let x1: f64 = StandardNormal.sample(rng);
        let x2: f64 = StandardNormal.sample(rng);
        let logit = match g {
            Group::Zero => 2.0 * x1 - x2 + 0.3,
            Group::One => -x1 + 1.5 * x2 - 0.2,
        };
        let y = if rng.gen::<f64>() < crate::model::sigmoid(logit) {
            1.0
        } else {
            0.0
        };
        rows.push(vec![x1, x2]);
        targets.push(y);
        groups.push(g);
    }
    GroupedDataset::from_rows(&rows, &targets, &groups)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn symmetric_pair_oracle() {
        let (w, l) = synth_oracle_solve(&SyntheticQuadratic::scalar_pair(1.0, -1.0, 0.5), 0.0).unwrap();
        assert!(w[0].abs() < 1e-12);
        assert!((l - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weighted_pair_oracle() {
        let (w, l) = synth_oracle_solve(&SyntheticQuadratic::scalar_pair(1.0, -1.0, 0.75), 1.0).unwrap();
        assert!((w[0] - 0.25).abs() < 1e-12);
        assert!((l - 0.8125).abs() < 1e-12);
    }

    #[test]
    fn oracle_rejects_assumption_violation() {
        let mut p = SyntheticQuadratic::scalar_pair(0.0, 0.3, 0.5);
        p.groups[1].offset = 2.0;
        assert!(matches!(synth_oracle_solve(&p, 0.0), Err(Error::Assumption { .. })));
    }

    #[test]
    fn random_instances_respect_margins() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for dim in 1..=3 {
            for gamma in [0.0, 0.1, 1.0] {
                let p = SyntheticQuadratic::random(dim, gamma, &mut rng);
                let (m0, m1) = p.margins();
                assert!(m0 > gamma && m1 > gamma);
            }
        }
    }

    #[test]
    fn tradeoff_curve_endpoints_are_group_optima() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = SyntheticQuadratic::random(2, 0.0, &mut rng);
        let (p0, p1) = p.weights;
        assert!((p.tradeoff_point(-p0) - &p.groups[1].center).amax() < 1e-10);
        assert!((p.tradeoff_point(p1) - &p.groups[0].center).amax() < 1e-10);
    }

    #[test]
    fn quadratic_loss_validation() {
        let c = DVector::zeros(2);
        assert!(QuadraticLoss::new(c.clone(), DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]), 0.0).is_err());
        assert!(QuadraticLoss::new(c.clone(), DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]), 0.0).is_err());
        assert!(QuadraticLoss::new(c, DMatrix::identity(2, 2), 0.0).is_ok());
    }
}
