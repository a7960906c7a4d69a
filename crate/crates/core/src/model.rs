//! Datasets, linear predictors and the per-group losses every algorithm consumes.
//!
//! A linear predictor scores a feature vector `x` as `w · [x, 1]`; the bias is the
//! trailing weight coordinate. Group losses are regularized: `L̄_a(w) = L_a(w) + η‖w‖²`
//! with the bias included in the norm, and the overall loss is `p_0·L̄_0 + p_1·L̄_1`.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Binary sensitive attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Group {
    Zero,
    One,
}

impl Group {
    pub const BOTH: [Group; 2] = [Group::Zero, Group::One];

    pub fn index(self) -> usize {
        match self {
            Group::Zero => 0,
            Group::One => 1,
        }
    }

    pub fn other(self) -> Group {
        match self {
            Group::Zero => Group::One,
            Group::One => Group::Zero,
        }
    }

    pub fn from_index(index: usize) -> Option<Group> {
        match index {
            0 => Some(Group::Zero),
            1 => Some(Group::One),
            _ => None,
        }
    }
}

/// Which subset of the data a loss is evaluated on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupSelector {
    Group(Group),
    All,
}

impl From<Group> for GroupSelector {
    fn from(g: Group) -> Self {
        GroupSelector::Group(g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    SquaredError,
    BinaryCrossEntropy,
}

impl LossKind {
    /// Per-sample loss of `score` against `target`.
    #[inline]
    pub fn value(self, target: f64, score: f64) -> f64 {
        match self {
            LossKind::SquaredError => {
                let r = score - target;
                r * r
            }
            // max(s, 0) - s*y + ln(1 + e^{-|s|}) never overflows
            LossKind::BinaryCrossEntropy => score.max(0.0) - score * target + (-score.abs()).exp().ln_1p(),
        }
    }

    /// First derivative of the per-sample loss with respect to the score.
    #[inline]
    pub fn d_score(self, target: f64, score: f64) -> f64 {
        match self {
            LossKind::SquaredError => 2.0 * (score - target),
            LossKind::BinaryCrossEntropy => sigmoid(score) - target,
        }
    }

    /// Second derivative of the per-sample loss with respect to the score.
    #[inline]
    pub fn d2_score(self, score: f64) -> f64 {
        match self {
            LossKind::SquaredError => 2.0,
            LossKind::BinaryCrossEntropy => {
                let p = sigmoid(score);
                p * (1.0 - p)
            }
        }
    }
}

#[inline]
pub fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// Loss kind, ridge coefficient and optional group weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec {
    pub kind: LossKind,
    pub eta: f64,
    /// `(p_0, p_1)`; `None` uses the empirical shares `n_a / n`.
    pub group_weights: Option<(f64, f64)>,
}

impl LossSpec {
    pub fn new(kind: LossKind, eta: f64) -> Self {
        Self {
            kind,
            eta,
            group_weights: None,
        }
    }

    pub fn with_group_weights(mut self, p0: f64, p1: f64) -> Self {
        self.group_weights = Some((p0, p1));
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0) || !self.eta.is_finite() {
            return Err(Error::InvalidInput(format!(
                "regularizer coefficient must be finite and >= 0, got {}",
                self.eta
            )));
        }
        if let Some((p0, p1)) = self.group_weights {
            let in_unit = |p: f64| (0.0..=1.0).contains(&p);
            if !in_unit(p0) || !in_unit(p1) || (p0 + p1 - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidInput(format!(
                    "group weights must lie in [0,1] and sum to 1, got ({p0}, {p1})"
                )));
            }
        }
        Ok(())
    }

    /// Group weights resolved against a dataset.
    pub fn resolved_weights(&self, data: &GroupedDataset) -> (f64, f64) {
        self.group_weights.unwrap_or_else(|| {
            let n = data.len() as f64;
            (data.count(Group::Zero) as f64 / n, data.count(Group::One) as f64 / n)
        })
    }
}

/// Model parameters `w ∈ R^{d+1}`, bias last.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(DVector<f64>);

impl WeightVector {
    pub fn new(values: DVector<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("weight vector has non-finite entries".into()));
        }
        Ok(Self(values))
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(DVector::zeros(dim))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }

    pub fn bias(&self) -> f64 {
        self.0[self.0.len() - 1]
    }
}

/// Features, targets and a binary group attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedDataset {
    features: DMatrix<f64>,
    targets: DVector<f64>,
    groups: Vec<Group>,
    counts: [usize; 2],
    /// Feature names, one per column.
    pub feature_names: Vec<String>,
    /// Columns holding numeric (standardizable) features.
    pub numeric_columns: Vec<usize>,
}

impl GroupedDataset {
    pub fn new(features: DMatrix<f64>, targets: DVector<f64>, groups: Vec<Group>) -> Result<Self> {
        let n = features.nrows();
        if targets.len() != n || groups.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: if targets.len() != n {
                    targets.len()
                } else {
                    groups.len()
                },
            });
        }
        let mut counts = [0usize; 2];
        for g in &groups {
            counts[g.index()] += 1;
        }
        if counts[0] == 0 || counts[1] == 0 {
            return Err(Error::EmptyGroup(if counts[0] == 0 { Group::Zero } else { Group::One }));
        }
        if features.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("dataset contains non-finite values".into()));
        }
        let d = features.ncols();
        Ok(Self {
            features,
            targets,
            groups,
            counts,
            feature_names: (0..d).map(|j| format!("x{j}")).collect(),
            numeric_columns: (0..d).collect(),
        })
    }

    /// Builds a dataset from row-major feature rows.
    pub fn from_rows(rows: &[Vec<f64>], targets: &[f64], groups: &[Group]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: bad.len(),
            });
        }
        let features = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
        Self::new(features, DVector::from_column_slice(targets), groups.to_vec())
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    /// Dimension of the weight vector of a linear model on this data.
    pub fn weight_dim(&self) -> usize {
        self.features.ncols() + 1
    }

    pub fn count(&self, g: Group) -> usize {
        self.counts[g.index()]
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn targets(&self) -> &DVector<f64> {
        &self.targets
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    /// Checks the target domain required by a loss kind.
    pub fn validate_for(&self, kind: LossKind) -> Result<()> {
        if kind == LossKind::BinaryCrossEntropy {
            if let Some(i) = self.targets.iter().position(|&y| y != 0.0 && y != 1.0) {
                return Err(Error::InvalidInput(format!(
                    "binary cross-entropy needs targets in {{0,1}}; row {i} has {}",
                    self.targets[i]
                )));
            }
        }
        Ok(())
    }

    pub fn indices_of(&self, g: Group) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.groups[i] == g).collect()
    }

    /// Rows in the given order; names and numeric-column metadata are kept.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let features = self.features.select_rows(rows.iter());
        let targets = DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.targets[i]));
        let groups = rows.iter().map(|&i| self.groups[i]).collect();
        let mut out = Self::new(features, targets, groups)?;
        out.feature_names = self.feature_names.clone();
        out.numeric_columns = self.numeric_columns.clone();
        Ok(out)
    }

    /// Replaces the feature matrix, keeping targets and groups.
    pub fn with_features(&self, features: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        if features.nrows() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: features.nrows(),
            });
        }
        let mut out = Self::new(features, self.targets.clone(), self.groups.clone())?;
        out.numeric_columns = (0..names.len()).collect();
        out.feature_names = names;
        Ok(out)
    }

    /// Design matrix `[X_a, 1]` and targets of one group.
    fn design(&self, g: Group) -> (DMatrix<f64>, DVector<f64>) {
        let rows = self.indices_of(g);
        let d = self.n_features();
        let x = DMatrix::from_fn(
            rows.len(),
            d + 1,
            |r, j| {
                if j < d {
                    self.features[(rows[r], j)]
                } else {
                    1.0
                }
            },
        );
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.targets[i]));
        (x, y)
    }
}

/// Linear score `w · [x, 1]`.
pub fn predict_score(w: &WeightVector, x: &[f64]) -> Result<f64> {
    if x.len() + 1 != w.dim() {
        return Err(Error::DimensionMismatch {
            expected: w.dim() - 1,
            found: x.len(),
        });
    }
    let v = w.as_slice();
    Ok(x.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() + v[x.len()])
}

/// A twice-differentiable function of the weights.
pub trait Objective: Sync {
    fn dim(&self) -> usize;
    fn value(&self, w: &DVector<f64>) -> f64;
    fn gradient(&self, w: &DVector<f64>) -> DVector<f64>;
    fn hessian(&self, w: &DVector<f64>) -> DMatrix<f64>;
}

/// Two group losses `L_0`, `L_1` plus the weights defining `L = p_0 L_0 + p_1 L_1`.
pub trait TwoGroupProblem: Sync {
    fn dim(&self) -> usize;
    fn group(&self, g: Group) -> &dyn Objective;
    fn shares(&self) -> (f64, f64);

    fn overall(&self) -> Combination<'_> {
        let (p0, p1) = self.shares();
        Combination::new(vec![(p0, self.group(Group::Zero)), (p1, self.group(Group::One))])
    }

    fn group_value(&self, g: Group, w: &DVector<f64>) -> f64 {
        self.group(g).value(w)
    }

    fn losses(&self, w: &DVector<f64>) -> GroupLosses {
        let l0 = self.group(Group::Zero).value(w);
        let l1 = self.group(Group::One).value(w);
        let (p0, p1) = self.shares();
        GroupLosses::new(l0, l1, p0 * l0 + p1 * l1)
    }
}

/// Per-group and overall losses at one weight vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupLosses {
    pub loss_g0: f64,
    pub loss_g1: f64,
    pub overall: f64,
    pub gap: f64,
}

impl GroupLosses {
    pub fn new(loss_g0: f64, loss_g1: f64, overall: f64) -> Self {
        Self {
            loss_g0,
            loss_g1,
            overall,
            gap: (loss_g0 - loss_g1).abs(),
        }
    }

    pub fn group(&self, g: Group) -> f64 {
        match g {
            Group::Zero => self.loss_g0,
            Group::One => self.loss_g1,
        }
    }
}

/// Nonnegative combination `Σ c_k f_k` of objectives.
pub struct Combination<'a> {
    terms: Vec<(f64, &'a dyn Objective)>,
}

impl<'a> Combination<'a> {
    pub fn new(terms: Vec<(f64, &'a dyn Objective)>) -> Self {
        assert!(!terms.is_empty(), "combination needs at least one term");
        Self { terms }
    }
}

impl Objective for Combination<'_> {
    fn dim(&self) -> usize {
        self.terms[0].1.dim()
    }

    fn value(&self, w: &DVector<f64>) -> f64 {
        self.terms
            .iter()
            .filter(|(c, _)| *c != 0.0)
            .map(|(c, f)| c * f.value(w))
            .sum()
    }

    fn gradient(&self, w: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.dim());
        for (c, f) in self.terms.iter().filter(|(c, _)| *c != 0.0) {
            g.axpy(*c, &f.gradient(w), 1.0);
        }
        g
    }

    fn hessian(&self, w: &DVector<f64>) -> DMatrix<f64> {
        let d = self.dim();
        let mut h = DMatrix::zeros(d, d);
        for (c, f) in self.terms.iter().filter(|(c, _)| *c != 0.0) {
            h += f.hessian(w) * *c;
        }
        h
    }
}

/// Regularized empirical loss of one group: mean per-sample loss plus `η‖w‖²`.
pub struct EmpiricalGroupLoss {
    design: DMatrix<f64>,
    targets: DVector<f64>,
    kind: LossKind,
    eta: f64,
    // Squared error has a constant Hessian.
    constant_hessian: OnceLock<DMatrix<f64>>,
}

impl EmpiricalGroupLoss {
    fn new(design: DMatrix<f64>, targets: DVector<f64>, spec: &LossSpec) -> Self {
        Self {
            design,
            targets,
            kind: spec.kind,
            eta: spec.eta,
            constant_hessian: OnceLock::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn targets(&self) -> &DVector<f64> {
        &self.targets
    }

    fn scores(&self, w: &DVector<f64>) -> DVector<f64> {
        &self.design * w
    }

    fn curvature(&self, w: &DVector<f64>) -> DMatrix<f64> {
        let n = self.len() as f64;
        let scores = self.scores(w);
        let mut scaled = self.design.clone();
        for (i, mut row) in scaled.row_iter_mut().enumerate() {
            row *= self.kind.d2_score(scores[i]).sqrt();
        }
        let mut h = scaled.tr_mul(&scaled) / n;
        for j in 0..h.nrows() {
            h[(j, j)] += 2.0 * self.eta;
        }
        h
    }
}

impl Objective for EmpiricalGroupLoss {
    fn dim(&self) -> usize {
        self.design.ncols()
    }

    fn value(&self, w: &DVector<f64>) -> f64 {
        let scores = self.scores(w);
        let data: f64 = scores
            .iter()
            .zip(self.targets.iter())
            .map(|(&s, &y)| self.kind.value(y, s))
            .sum::<f64>()
            / self.len() as f64;
        data + self.eta * w.norm_squared()
    }

    fn gradient(&self, w: &DVector<f64>) -> DVector<f64> {
        let scores = self.scores(w);
        let n = self.len() as f64;
        let residual = DVector::from_iterator(
            self.len(),
            scores
                .iter()
                .zip(self.targets.iter())
                .map(|(&s, &y)| self.kind.d_score(y, s) / n),
        );
        let mut g = self.design.tr_mul(&residual);
        g.axpy(2.0 * self.eta, w, 1.0);
        g
    }

    fn hessian(&self, w: &DVector<f64>) -> DMatrix<f64> {
        match self.kind {
            LossKind::SquaredError => self.constant_hessian.get_or_init(|| self.curvature(w)).clone(),
            LossKind::BinaryCrossEntropy => self.curvature(w),
        }
    }
}

/// The two regularized empirical group losses of a dataset.
pub struct EmpiricalProblem {
    groups: [EmpiricalGroupLoss; 2],
    shares: (f64, f64),
    spec: LossSpec,
}

impl EmpiricalProblem {
    pub fn new(data: &GroupedDataset, spec: LossSpec) -> Result<Self> {
        spec.validate()?;
        data.validate_for(spec.kind)?;
        let (x0, y0) = data.design(Group::Zero);
        let (x1, y1) = data.design(Group::One);
        Ok(Self {
            groups: [
                EmpiricalGroupLoss::new(x0, y0, &spec),
                EmpiricalGroupLoss::new(x1, y1, &spec),
            ],
            shares: spec.resolved_weights(data),
            spec,
        })
    }

    pub fn spec(&self) -> &LossSpec {
        &self.spec
    }

    pub fn group_loss(&self, g: Group) -> &EmpiricalGroupLoss {
        &self.groups[g.index()]
    }
}

impl TwoGroupProblem for EmpiricalProblem {
    fn dim(&self) -> usize {
        self.groups[0].dim()
    }

    fn group(&self, g: Group) -> &dyn Objective {
        &self.groups[g.index()]
    }

    fn shares(&self) -> (f64, f64) {
        self.shares
    }
}

fn check_weight_dim(w: &WeightVector, data: &GroupedDataset) -> Result<()> {
    if w.dim() != data.weight_dim() {
        return Err(Error::DimensionMismatch {
            expected: data.weight_dim(),
            found: w.dim(),
        });
    }
    Ok(())
}

fn with_selection<T>(
    w: &WeightVector,
    data: &GroupedDataset,
    spec: &LossSpec,
    selector: GroupSelector,
    eval: impl Fn(&dyn Objective, &DVector<f64>) -> T,
    combine: impl Fn(f64, T, f64, T) -> T,
) -> Result<T> {
    check_weight_dim(w, data)?;
    let problem = EmpiricalProblem::new(data, *spec)?;
    Ok(match selector {
        GroupSelector::Group(g) => eval(problem.group(g), w.values()),
        GroupSelector::All => {
            let (p0, p1) = problem.shares();
            combine(
                p0,
                eval(problem.group(Group::Zero), w.values()),
                p1,
                eval(problem.group(Group::One), w.values()),
            )
        }
    })
}

/// Regularized empirical loss `L̄_a` of a group, or `p_0 L̄_0 + p_1 L̄_1` for `All`.
pub fn empirical_loss(
    w: &WeightVector,
    data: &GroupedDataset,
    spec: &LossSpec,
    selector: GroupSelector,
) -> Result<f64> {
    with_selection(
        w,
        data,
        spec,
        selector,
        |f, w| f.value(w),
        |p0, a, p1, b| p0 * a + p1 * b,
    )
}

pub fn loss_gradient(
    w: &WeightVector,
    data: &GroupedDataset,
    spec: &LossSpec,
    selector: GroupSelector,
) -> Result<DVector<f64>> {
    with_selection(
        w,
        data,
        spec,
        selector,
        |f, w| f.gradient(w),
        |p0, a, p1, b| a * p0 + b * p1,
    )
}

pub fn loss_hessian(
    w: &WeightVector,
    data: &GroupedDataset,
    spec: &LossSpec,
    selector: GroupSelector,
) -> Result<DMatrix<f64>> {
    with_selection(
        w,
        data,
        spec,
        selector,
        |f, w| f.hessian(w),
        |p0, a, p1, b| a * p0 + b * p1,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Identity,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(v),
            Activation::Identity => v,
        }
    }
}

/// Frozen hidden layer `W̃` of a one-hidden-layer network. Training a linear model on
/// the mapped features `[1, act(W̃x)]` fine-tunes the network's output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenFeatureMap {
    weights: DMatrix<f64>,
    activation: Activation,
}

impl FrozenFeatureMap {
    pub fn new(weights: DMatrix<f64>, activation: Activation) -> Result<Self> {
        if weights.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("feature map has non-finite weights".into()));
        }
        Ok(Self { weights, activation })
    }

    /// Seeded uniform Glorot initialization with `units` hidden neurons.
    pub fn random(units: usize, input_dim: usize, activation: Activation, seed: u64) -> Self {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let limit = (6.0 / (units + input_dim) as f64).sqrt();
        let weights = DMatrix::from_fn(units, input_dim, |_, _| rng.gen_range(-limit..limit));
        Self { weights, activation }
    }

    pub fn units(&self) -> usize {
        self.weights.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }
}

/// Maps every row `x` to `[1, act(W̃x)]`; targets and groups are unchanged.
pub fn apply_feature_map(map: &FrozenFeatureMap, data: &GroupedDataset) -> Result<GroupedDataset> {
    if map.input_dim() != data.n_features() {
        return Err(Error::DimensionMismatch {
            expected: map.input_dim(),
            found: data.n_features(),
        });
    }
    let hidden = data.features() * map.weights.transpose();
    let m = map.units();
    let features = DMatrix::from_fn(data.len(), m + 1, |i, j| {
        if j == 0 {
            1.0
        } else {
            map.activation.apply(hidden[(i, j - 1)])
        }
    });
    let mut names = vec!["const".to_string()];
    names.extend((0..m).map(|k| format!("h{k}")));
    let mut out = data.with_features(features, names)?;
    out.numeric_columns.clear();
    Ok(out)
}
