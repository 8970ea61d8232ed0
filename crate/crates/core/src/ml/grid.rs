//! Hyperparameter selection by content-grouped k-fold cross-validation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{
    fit_svr_gram, prepare_svc, prepare_svr, validate_rows, MlError, RbfKernel,
    SvcHyper, SvrHyper,
};
use crate::eval::spearman;

/// Regression search space, with scores measured on MOS scaled to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvrGrid {
    pub c: Vec<f64>,
    pub gamma: Vec<f64>,
    pub epsilon: Vec<f64>,
}

impl Default for SvrGrid {
    fn default() -> Self {
        Self {
            c: vec![1.0, 10.0, 100.0],
            gamma: vec![0.125, 0.25, 0.5, 1.0, 2.0, 4.0],
            epsilon: vec![0.01, 0.1],
        }
    }
}

impl SvrGrid {
    pub fn single(h: SvrHyper) -> Self {
        Self {
            c: vec![h.c],
            gamma: vec![h.gamma],
            epsilon: vec![h.epsilon],
        }
    }

    /// Deduplicated points ordered by `(c, gamma, epsilon)`.
    pub fn points(&self) -> Vec<SvrHyper> {
        let (c, gamma, epsilon) = (sorted(&self.c), sorted(&self.gamma), sorted(&self.epsilon));
        let mut out = Vec::new();
        for &c in &c {
            for &gamma in &gamma {
                for &epsilon in &epsilon {
                    out.push(SvrHyper { c, gamma, epsilon });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvcGrid {
    pub c: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl Default for SvcGrid {
    fn default() -> Self {
        let svr = SvrGrid::default();
        Self {
            c: svr.c,
            gamma: svr.gamma,
        }
    }
}

impl SvcGrid {
    pub fn single(h: SvcHyper) -> Self {
        Self {
            c: vec![h.c],
            gamma: vec![h.gamma],
        }
    }

    /// Deduplicated points ordered by `(c, gamma)`.
    pub fn points(&self) -> Vec<SvcHyper> {
        let gamma = sorted(&self.gamma);
        sorted(&self.c)
            .into_iter()
            .flat_map(|c| gamma.iter().map(move |&gamma| SvcHyper { c, gamma }))
            .collect()
    }
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult<H> {
    pub best: H,
    /// Mean validation score of `best`; NaN when the grid had a single point
    /// and no cross-validation was run.
    pub score: f64,
    /// Every evaluated point with its mean validation score, in grid order.
    pub scores: Vec<(H, f64)>,
}

/// Assigns each sample to a fold so that no group straddles two folds.
/// Groups are sorted, shuffled with `seed`, then dealt round-robin.
pub(crate) fn group_folds<S: AsRef<str>>(
    groups: &[S],
    k: usize,
    seed: u64,
) -> Result<(Vec<usize>, usize), MlError> {
    let mut ids: Vec<&str> = groups.iter().map(AsRef::as_ref).collect();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() < 2 {
        return Err(MlError::TooFewGroups(ids.len()));
    }
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let k = k.clamp(2, ids.len());
    let fold_of: Vec<usize> = groups
        .iter()
        .map(|g| ids.iter().position(|id| *id == g.as_ref()).unwrap() % k)
        .collect();
    Ok((fold_of, k))
}

/// Picks the highest mean score; the earliest point (smaller `c`, then smaller
/// `gamma`, then smaller `epsilon`) wins ties.
fn pick<H: Copy>(points: Vec<H>, means: Vec<f64>) -> GridResult<H> {
    let mut best = 0;
    for (i, &m) in means.iter().enumerate() {
        if m > means[best] {
            best = i;
        }
    }
    GridResult {
        best: points[best],
        score: means[best],
        scores: points.into_iter().zip(means).collect(),
    }
}

fn fold_split(fold_of: &[usize], f: usize) -> (Vec<usize>, Vec<usize>) {
    (0..fold_of.len()).partition(|&i| fold_of[i] != f)
}

/// Selects SVR hyperparameters by mean validation Spearman correlation over
/// `k` content-disjoint folds. Folds whose correlation is undefined score 0.
pub fn grid_search_svr<R, S>(
    features: &[R],
    targets: &[f64],
    groups: &[S],
    grid: &SvrGrid,
    k: usize,
    seed: u64,
) -> Result<GridResult<SvrHyper>, MlError>
where
    R: AsRef<[f64]> + Sync,
    S: AsRef<str>,
{
    let points = grid.points();
    if points.is_empty() {
        return Err(MlError::BadHyper("empty grid".into()));
    }
    for p in &points {
        p.validate()?;
    }
    validate_rows(features, targets.len())?;
    if groups.len() != targets.len() {
        return Err(MlError::LengthMismatch {
            features: groups.len(),
            targets: targets.len(),
        });
    }
    if points.len() == 1 {
        return Ok(GridResult {
            best: points[0],
            score: f64::NAN,
            scores: vec![(points[0], f64::NAN)],
        });
    }
    let (fold_of, k) = group_folds(groups, k, seed)?;
    let gammas = sorted(&grid.gamma);
    let tasks: Vec<(usize, f64)> = (0..k)
        .flat_map(|f| gammas.iter().map(move |&g| (f, g)))
        .collect();

    // each task yields (gamma, fold scores for every (c, epsilon) with that gamma)
    let results: Vec<Result<Vec<(SvrHyper, f64)>, MlError>> = tasks
        .par_iter()
        .map(|&(f, gamma)| {
            let (train, val) = fold_split(&fold_of, f);
            let tr_x: Vec<&[f64]> = train.iter().map(|&i| features[i].as_ref()).collect();
            let tr_y: Vec<f64> = train.iter().map(|&i| targets[i]).collect();
            let prep = prepare_svr(&tr_x, &tr_y)?;
            let kernel = RbfKernel { gamma };
            let gram = kernel.gram(&prep.rows);
            let val_rows: Vec<Vec<f64>> = val
                .iter()
                .map(|&i| prep.scaler.transform(features[i].as_ref()))
                .collect();
            let val_y: Vec<f64> = val.iter().map(|&i| targets[i]).collect();
            let mut out = Vec::new();
            for p in points.iter().filter(|p| p.gamma == gamma) {
                let (machine, _) = fit_svr_gram(&prep.rows, &gram, &prep.y, p.c, p.epsilon);
                let pred: Vec<f64> = val_rows.iter().map(|z| machine.decision(&kernel, z)).collect();
                let score = spearman(&pred, &val_y).unwrap_or(0.0);
                out.push((*p, score));
            }
            Ok(out)
        })
        .collect();

    let mut sums = vec![0.0; points.len()];
    for r in results {
        for (p, s) in r? {
            let idx = points.iter().position(|q| *q == p).unwrap();
            sums[idx] += s;
        }
    }
    let means = sums.into_iter().map(|s| s / k as f64).collect();
    Ok(pick(points, means))
}

/// Selects SVC hyperparameters by mean validation accuracy over `k`
/// content-disjoint folds.
pub fn grid_search_svc<R, L, S>(
    features: &[R],
    labels: &[L],
    groups: &[S],
    grid: &SvcGrid,
    k: usize,
    seed: u64,
) -> Result<GridResult<SvcHyper>, MlError>
where
    R: AsRef<[f64]> + Sync,
    L: AsRef<str> + Sync,
    S: AsRef<str>,
{
    let points = grid.points();
    if points.is_empty() {
        return Err(MlError::BadHyper("empty grid".into()));
    }
    for p in &points {
        p.validate()?;
    }
    validate_rows(features, labels.len())?;
    if groups.len() != labels.len() {
        return Err(MlError::LengthMismatch {
            features: groups.len(),
            targets: labels.len(),
        });
    }
    if points.len() == 1 {
        return Ok(GridResult {
            best: points[0],
            score: f64::NAN,
            scores: vec![(points[0], f64::NAN)],
        });
    }
    let (fold_of, k) = group_folds(groups, k, seed)?;
    let gammas = sorted(&grid.gamma);
    let tasks: Vec<(usize, f64)> = (0..k)
        .flat_map(|f| gammas.iter().map(move |&g| (f, g)))
        .collect();

    let results: Vec<Result<Vec<(SvcHyper, f64)>, MlError>> = tasks
        .par_iter()
        .map(|&(f, gamma)| {
            let (train, val) = fold_split(&fold_of, f);
            let tr_x: Vec<&[f64]> = train.iter().map(|&i| features[i].as_ref()).collect();
            let tr_l: Vec<&str> = train.iter().map(|&i| labels[i].as_ref()).collect();
            let prep = prepare_svc(&tr_x, &tr_l)?;
            let kernel = RbfKernel { gamma };
            let gram = kernel.gram(&prep.rows);
            let val_rows: Vec<Vec<f64>> = val
                .iter()
                .map(|&i| prep.scaler.transform(features[i].as_ref()))
                .collect();
            let mut out = Vec::new();
            for p in points.iter().filter(|p| p.gamma == gamma) {
                let model = prep.fit(&gram, kernel, p.c);
                let correct = val
                    .iter()
                    .zip(&val_rows)
                    .filter(|(&i, z)| model.vote(z) == labels[i].as_ref())
                    .count();
                let acc = if val.is_empty() {
                    0.0
                } else {
                    correct as f64 / val.len() as f64
                };
                out.push((*p, acc));
            }
            Ok(out)
        })
        .collect();

    let mut sums = vec![0.0; points.len()];
    for r in results {
        for (p, s) in r? {
            let idx = points.iter().position(|q| *q == p).unwrap();
            sums[idx] += s;
        }
    }
    let means = sums.into_iter().map(|s| s / k as f64).collect();
    Ok(pick(points, means))
}
