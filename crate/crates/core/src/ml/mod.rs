//! RBF kernel machines: epsilon-SVR for quality scores and one-vs-one C-SVC
//! for distortion labels.
//!
//! Inputs are min-max scaled per feature with a [`Scaler`] fit on the
//! training set; regression targets are scaled to `[0, 1]` for the solver and
//! mapped back on output. Training samples are put into a canonical order
//! before solving, so the fitted model does not depend on input order.

mod grid;
mod persist;
pub(crate) mod smo;

use std::cmp::Ordering;

use thiserror::Error;

pub use grid::{grid_search_svc, grid_search_svr, GridResult, SvcGrid, SvrGrid};
pub use persist::{load_model, save_model, MODEL_VERSION};

use smo::DualProblem;

/// Iteration budget per dual solve.
const MAX_SMO_ITER: usize = 1_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum MlError {
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("{features} feature rows but {targets} targets")]
    LengthMismatch { features: usize, targets: usize },
    #[error("feature rows have inconsistent or zero dimension")]
    BadDimension,
    #[error("non-finite value in training data")]
    NonFinite,
    #[error("only one class present in the training labels")]
    SingleClass,
    #[error("model was trained for {model:?}, not {requested:?}")]
    TaskMismatch { model: Task, requested: Task },
    #[error("invalid hyperparameters: {0}")]
    BadHyper(String),
    #[error("need at least 2 content groups for cross-validation, got {0}")]
    TooFewGroups(usize),
    #[error("model file version {found} is not supported (expected {expected})")]
    SchemaVersionMismatch { found: String, expected: u32 },
    #[error("corrupt model file: {0}")]
    CorruptModel(String),
    #[error("i/o error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Regression,
    Classification,
}

/// `K(a, b) = exp(-gamma * |a - b|^2)`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RbfKernel {
    pub gamma: f64,
}

impl RbfKernel {
    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        (-self.gamma * d2).exp()
    }

    fn gram(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        let n = rows.len();
        let mut k = vec![0.0; n * n];
        for a in 0..n {
            k[a * n + a] = 1.0;
            for b in a + 1..n {
                let v = self.eval(&rows[a], &rows[b]);
                k[a * n + b] = v;
                k[b * n + a] = v;
            }
        }
        k
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvrHyper {
    pub c: f64,
    pub gamma: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvcHyper {
    pub c: f64,
    pub gamma: f64,
}

fn check_positive(name: &str, v: f64) -> Result<(), MlError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(MlError::BadHyper(format!("{name} must be positive, got {v}")))
    }
}

impl SvrHyper {
    fn validate(&self) -> Result<(), MlError> {
        check_positive("c", self.c)?;
        check_positive("gamma", self.gamma)?;
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(MlError::BadHyper(format!(
                "epsilon must be non-negative, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

impl SvcHyper {
    fn validate(&self) -> Result<(), MlError> {
        check_positive("c", self.c)?;
        check_positive("gamma", self.gamma)
    }
}

/// Per-feature min-max scaling fit on training inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Scaler {
    pub fn fit<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let dim = rows.first().map_or(0, |r| r.as_ref().len());
        let mut min = vec![f64::INFINITY; dim];
        let mut max = vec![f64::NEG_INFINITY; dim];
        for row in rows {
            for (d, &v) in row.as_ref().iter().enumerate() {
                min[d] = min[d].min(v);
                max[d] = max[d].max(v);
            }
        }
        Self { min, max }
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// Maps the training range of each feature onto `[0, 1]`; constant
    /// features map to 0. Inputs outside the training range are not clipped.
    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(&v, (&lo, &hi))| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 })
            .collect()
    }
}

/// Affine map between the raw target range and `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetScale {
    pub min: f64,
    pub max: f64,
}

impl TargetScale {
    fn fit(y: &[f64]) -> Self {
        let min = y.iter().copied().fold(f64::INFINITY, f64::min);
        let max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self { min, max }
    }

    fn range(&self) -> f64 {
        self.max - self.min
    }

    fn forward(&self, v: f64) -> f64 {
        if self.range() > 0.0 {
            (v - self.min) / self.range()
        } else {
            0.0
        }
    }

    fn inverse(&self, v: f64) -> f64 {
        self.min + self.range() * v
    }
}

/// One binary (or the single regression) kernel expansion.
#[derive(Debug, Clone, PartialEq)]
pub struct Machine {
    /// Label indices for classification: positive decision means `pos`.
    pub pos: usize,
    pub neg: usize,
    pub support_vectors: Vec<Vec<f64>>,
    pub dual_coefs: Vec<f64>,
    pub bias: f64,
}

impl Machine {
    /// `sum coef_i K(sv_i, x) + bias` for an already scaled input.
    pub fn decision(&self, kernel: &RbfKernel, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.dual_coefs)
            .map(|(sv, &a)| a * kernel.eval(sv, x))
            .sum::<f64>()
            + self.bias
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    Score(f64),
    Label(String),
}

/// A trained support vector machine together with its input scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct SvModel {
    pub task: Task,
    pub kernel: RbfKernel,
    pub c: f64,
    pub epsilon: f64,
    pub scaler: Scaler,
    /// Regression only.
    pub target: Option<TargetScale>,
    /// Sorted class names; empty for regression.
    pub labels: Vec<String>,
    /// One machine for regression and binary classification, one per class
    /// pair (in `(0,1), (0,2), ..., (1,2), ...` order) otherwise.
    pub machines: Vec<Machine>,
    converged: bool,
}

impl SvModel {
    /// Whether every dual solve reached the KKT tolerance.
    pub fn converged(&self) -> bool {
        self.converged
    }

    /// True for a regression model fit on identical targets: it predicts that
    /// value everywhere.
    pub fn is_constant(&self) -> bool {
        self.task == Task::Regression && self.target.is_some_and(|t| t.range() == 0.0)
    }

    pub fn support_vector_count(&self) -> usize {
        self.machines.iter().map(|m| m.support_vectors.len()).sum()
    }

    fn check_input(&self, x: &[f64]) -> Result<Vec<f64>, MlError> {
        if x.len() != self.scaler.dim() {
            return Err(MlError::BadDimension);
        }
        Ok(self.scaler.transform(x))
    }

    /// Predicted score in the original target units.
    pub fn predict_score(&self, x: &[f64]) -> Result<f64, MlError> {
        if self.task != Task::Regression {
            return Err(MlError::TaskMismatch {
                model: self.task,
                requested: Task::Regression,
            });
        }
        let z = self.check_input(x)?;
        let raw = self.machines[0].decision(&self.kernel, &z);
        Ok(self.target.map_or(raw, |t| t.inverse(raw)))
    }

    /// Predicted class; multi-class models take the one-vs-one majority vote,
    /// ties going to the earlier label.
    pub fn predict_label(&self, x: &[f64]) -> Result<&str, MlError> {
        if self.task != Task::Classification {
            return Err(MlError::TaskMismatch {
                model: self.task,
                requested: Task::Classification,
            });
        }
        let z = self.check_input(x)?;
        Ok(self.vote(&z))
    }

    /// One-vs-one vote on an already scaled input.
    pub(crate) fn vote(&self, z: &[f64]) -> &str {
        let mut votes = vec![0usize; self.labels.len()];
        for m in &self.machines {
            if m.decision(&self.kernel, z) > 0.0 {
                votes[m.pos] += 1;
            } else {
                votes[m.neg] += 1;
            }
        }
        let best = votes
            .iter()
            .enumerate()
            .fold(0, |best, (i, &v)| if v > votes[best] { i } else { best });
        &self.labels[best]
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction, MlError> {
        match self.task {
            Task::Regression => self.predict_score(x).map(Prediction::Score),
            Task::Classification => self
                .predict_label(x)
                .map(|l| Prediction::Label(l.to_string())),
        }
    }
}

fn validate_rows<R: AsRef<[f64]>>(x: &[R], n_targets: usize) -> Result<(), MlError> {
    if x.len() != n_targets {
        return Err(MlError::LengthMismatch {
            features: x.len(),
            targets: n_targets,
        });
    }
    if x.len() < 2 {
        return Err(MlError::TooFewSamples(x.len()));
    }
    let dim = x[0].as_ref().len();
    if dim == 0 || x.iter().any(|r| r.as_ref().len() != dim) {
        return Err(MlError::BadDimension);
    }
    if x.iter().flat_map(|r| r.as_ref()).any(|v| !v.is_finite()) {
        return Err(MlError::NonFinite);
    }
    Ok(())
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Scaled epsilon-SVR fit on a precomputed Gram matrix. Returns the machine in
/// scaled-target units (`pos`/`neg` unused) and whether SMO converged.
pub(crate) fn fit_svr_gram(
    rows: &[Vec<f64>],
    gram: &[f64],
    y: &[f64],
    c: f64,
    epsilon: f64,
) -> (Machine, bool) {
    let n = rows.len();
    // variables 0..n carry +alpha, n..2n carry -alpha*
    let mut p = Vec::with_capacity(2 * n);
    p.extend(y.iter().map(|&t| epsilon - t));
    p.extend(y.iter().map(|&t| epsilon + t));
    let mut sign = vec![1.0; n];
    sign.resize(2 * n, -1.0);
    let problem = DualProblem {
        kernel: gram,
        n,
        vars: (0..n).chain(0..n).collect(),
        y: sign,
        p,
        c,
    };
    let sol = problem.solve(MAX_SMO_ITER);
    let mut machine = Machine {
        pos: 0,
        neg: 0,
        support_vectors: Vec::new(),
        dual_coefs: Vec::new(),
        bias: -sol.rho,
    };
    for i in 0..n {
        let coef = sol.alpha[i] - sol.alpha[i + n];
        if coef != 0.0 {
            machine.support_vectors.push(rows[i].clone());
            machine.dual_coefs.push(coef);
        }
    }
    (machine, sol.converged)
}

/// Binary C-SVC on a Gram matrix restricted to `members`; `positive[t]` gives
/// the class of `members[t]`.
pub(crate) fn fit_svc_gram(
    rows: &[Vec<f64>],
    gram: &[f64],
    members: &[usize],
    positive: &[bool],
    c: f64,
) -> (Vec<Vec<f64>>, Vec<f64>, f64, bool) {
    let y: Vec<f64> = positive.iter().map(|&p| if p { 1.0 } else { -1.0 }).collect();
    let problem = DualProblem {
        kernel: gram,
        n: rows.len(),
        vars: members.to_vec(),
        p: vec![-1.0; members.len()],
        y: y.clone(),
        c,
    };
    let sol = problem.solve(MAX_SMO_ITER);
    let mut svs = Vec::new();
    let mut coefs = Vec::new();
    for (t, &m) in members.iter().enumerate() {
        if sol.alpha[t] > 0.0 {
            svs.push(rows[m].clone());
            coefs.push(y[t] * sol.alpha[t]);
        }
    }
    (svs, coefs, -sol.rho, sol.converged)
}

/// Scaled, canonically ordered regression training set.
pub(crate) struct PreparedSvr {
    pub scaler: Scaler,
    pub target: TargetScale,
    pub rows: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

pub(crate) fn prepare_svr<R: AsRef<[f64]>>(
    features: &[R],
    targets: &[f64],
) -> Result<PreparedSvr, MlError> {
    validate_rows(features, targets.len())?;
    if targets.iter().any(|t| !t.is_finite()) {
        return Err(MlError::NonFinite);
    }
    let scaler = Scaler::fit(features);
    let target = TargetScale::fit(targets);
    let mut samples: Vec<(Vec<f64>, f64)> = features
        .iter()
        .zip(targets)
        .map(|(r, &t)| (scaler.transform(r.as_ref()), target.forward(t)))
        .collect();
    samples.sort_by(|a, b| lexicographic(&a.0, &b.0).then(a.1.total_cmp(&b.1)));
    let (rows, y) = samples.into_iter().unzip();
    Ok(PreparedSvr {
        scaler,
        target,
        rows,
        y,
    })
}

/// Scaled, canonically ordered classification training set.
pub(crate) struct PreparedSvc {
    pub scaler: Scaler,
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub classes: Vec<usize>,
}

pub(crate) fn prepare_svc<R: AsRef<[f64]>, S: AsRef<str>>(
    features: &[R],
    labels: &[S],
) -> Result<PreparedSvc, MlError> {
    validate_rows(features, labels.len())?;
    let mut names: Vec<String> = labels.iter().map(|l| l.as_ref().to_string()).collect();
    names.sort();
    names.dedup();
    if names.len() < 2 {
        return Err(MlError::SingleClass);
    }
    let scaler = Scaler::fit(features);
    let mut samples: Vec<(Vec<f64>, usize)> = features
        .iter()
        .zip(labels)
        .map(|(r, l)| {
            let class = names
                .binary_search_by(|n| n.as_str().cmp(l.as_ref()))
                .expect("label collected above");
            (scaler.transform(r.as_ref()), class)
        })
        .collect();
    samples.sort_by(|a, b| lexicographic(&a.0, &b.0).then(a.1.cmp(&b.1)));
    let (rows, classes) = samples.into_iter().unzip();
    Ok(PreparedSvc {
        scaler,
        names,
        rows,
        classes,
    })
}

impl PreparedSvc {
    /// One-vs-one machines for every class pair on a precomputed Gram matrix.
    pub fn fit(&self, gram: &[f64], kernel: RbfKernel, c: f64) -> SvModel {
        let mut machines = Vec::new();
        let mut converged = true;
        for pos in 0..self.names.len() {
            for neg in pos + 1..self.names.len() {
                let members: Vec<usize> = (0..self.rows.len())
                    .filter(|&t| self.classes[t] == pos || self.classes[t] == neg)
                    .collect();
                let positive: Vec<bool> =
                    members.iter().map(|&t| self.classes[t] == pos).collect();
                let (svs, coefs, bias, ok) = fit_svc_gram(&self.rows, gram, &members, &positive, c);
                converged &= ok;
                machines.push(Machine {
                    pos,
                    neg,
                    support_vectors: svs,
                    dual_coefs: coefs,
                    bias,
                });
            }
        }
        SvModel {
            task: Task::Classification,
            kernel,
            c,
            epsilon: 0.0,
            scaler: self.scaler.clone(),
            target: None,
            labels: self.names.clone(),
            machines,
            converged,
        }
    }
}

/// Trains an epsilon-SVR on raw features and targets.
///
/// Identical targets are not an error: the result is a constant predictor,
/// reported by [`SvModel::is_constant`].
pub fn train_svr<R: AsRef<[f64]>>(
    features: &[R],
    targets: &[f64],
    hyper: SvrHyper,
) -> Result<SvModel, MlError> {
    hyper.validate()?;
    let prep = prepare_svr(features, targets)?;
    let kernel = RbfKernel { gamma: hyper.gamma };
    let gram = kernel.gram(&prep.rows);
    let (machine, converged) = fit_svr_gram(&prep.rows, &gram, &prep.y, hyper.c, hyper.epsilon);
    Ok(SvModel {
        task: Task::Regression,
        kernel,
        c: hyper.c,
        epsilon: hyper.epsilon,
        scaler: prep.scaler,
        target: Some(prep.target),
        labels: Vec::new(),
        machines: vec![machine],
        converged,
    })
}

/// Trains a C-SVC; more than two classes use one-vs-one voting.
pub fn train_svc<R: AsRef<[f64]>, S: AsRef<str>>(
    features: &[R],
    labels: &[S],
    hyper: SvcHyper,
) -> Result<SvModel, MlError> {
    hyper.validate()?;
    let prep = prepare_svc(features, labels)?;
    let kernel = RbfKernel { gamma: hyper.gamma };
    let gram = kernel.gram(&prep.rows);
    Ok(prep.fit(&gram, kernel, hyper.c))
}
