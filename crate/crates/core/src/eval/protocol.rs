//! Repeated content-disjoint train/test evaluation.
//!
//! Every repetition draws its own ChaCha8 stream from `(seed, repetition)`,
//! shuffles the sorted content ids, and trains only on the first share of
//! them. Samples are put in a canonical order before anything is drawn, so
//! the manifest row order and the thread count never change a result.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use super::{evaluate, EvalError};
use crate::features::{extract, MdmParams};
use crate::imgio::{fmt_real, load_gray, DatasetManifest, GrayImage, ImageError, ManifestError};
use crate::ml::{
    grid_search_svc, grid_search_svr, train_svc, train_svr, MlError, SvcGrid, SvcHyper, SvrGrid,
    SvrHyper,
};
use crate::pixelops::{self, PixelError};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("{path}: {source}")]
    Image { path: String, source: ImageError },
    #[error("{path}: {source}")]
    Pixel { path: String, source: PixelError },
    #[error(transparent)]
    Ml(#[from] MlError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("invalid split: {0}")]
    BadSplit(String),
    #[error("every repetition was degenerate ({0} dropped)")]
    AllDropped(usize),
    #[error("sweep grids must be nonempty")]
    EmptyGrid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub repetitions: usize,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_frac: 0.8,
            repetitions: 1000,
            seed: 0,
        }
    }
}

impl SplitSpec {
    fn validate(&self) -> Result<(), ProtocolError> {
        if !(self.train_frac > 0.0 && self.train_frac < 1.0) {
            return Err(ProtocolError::BadSplit(format!(
                "train fraction {} outside (0, 1)",
                self.train_frac
            )));
        }
        if self.repetitions == 0 {
            return Err(ProtocolError::BadSplit("zero repetitions".into()));
        }
        Ok(())
    }

    /// Training content count: the fraction rounded at the content level and
    /// kept within `[1, n - 1]` so both sides are nonempty.
    pub fn train_contents(&self, n: usize) -> usize {
        ((self.train_frac * n as f64).round() as usize).clamp(1, n - 1)
    }
}

/// Model-selection and feature settings shared by the protocol runners.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolOptions {
    pub svr_grid: SvrGrid,
    pub svc_grid: SvcGrid,
    /// Cross-validation folds inside each training split.
    pub folds: usize,
    pub downsample: bool,
}

impl Default for ProtocolOptions {
    fn default() -> Self {
        Self {
            svr_grid: SvrGrid::default(),
            svc_grid: SvcGrid::default(),
            folds: 5,
            downsample: true,
        }
    }
}

/// One record reduced to what the protocol needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub content_id: String,
    pub mos: f64,
    pub label: String,
    pub features: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepRecord {
    pub repetition: usize,
    pub train_contents: usize,
    pub test_contents: usize,
    pub n_test: usize,
    pub hyper: SvrHyper,
    pub src: f64,
    pub pcc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolReport {
    /// Median test Spearman correlation over kept repetitions.
    pub src: f64,
    /// Median test Pearson correlation after the logistic mapping.
    pub pcc: f64,
    pub repetitions: usize,
    pub dropped: usize,
    pub train_contents: usize,
    pub test_contents: usize,
    /// Kept repetitions in repetition order.
    pub reps: Vec<RepRecord>,
}

impl ProtocolReport {
    /// `metric,value` CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        let _ = writeln!(out, "src,{}", fmt_real(self.src));
        let _ = writeln!(out, "pcc,{}", fmt_real(self.pcc));
        let _ = writeln!(out, "repetitions,{}", self.repetitions);
        let _ = writeln!(out, "kept,{}", self.reps.len());
        let _ = writeln!(out, "dropped,{}", self.dropped);
        let _ = writeln!(out, "train_contents,{}", self.train_contents);
        let _ = writeln!(out, "test_contents,{}", self.test_contents);
        out
    }

    pub fn reps_csv(&self) -> String {
        let mut out =
            String::from("repetition,train_contents,test_contents,n_test,c,gamma,epsilon,src,pcc\n");
        for r in &self.reps {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.repetition,
                r.train_contents,
                r.test_contents,
                r.n_test,
                fmt_real(r.hyper.c),
                fmt_real(r.hyper.gamma),
                fmt_real(r.hyper.epsilon),
                fmt_real(r.src),
                fmt_real(r.pcc)
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassRep {
    pub repetition: usize,
    pub n_test: usize,
    pub hyper: SvcHyper,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationReport {
    pub accuracy: f64,
    pub repetitions: usize,
    pub dropped: usize,
    pub reps: Vec<ClassRep>,
}

impl ClassificationReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        let _ = writeln!(out, "accuracy,{}", fmt_real(self.accuracy));
        let _ = writeln!(out, "repetitions,{}", self.repetitions);
        let _ = writeln!(out, "kept,{}", self.reps.len());
        let _ = writeln!(out, "dropped,{}", self.dropped);
        out
    }

    pub fn reps_csv(&self) -> String {
        let mut out = String::from("repetition,n_test,c,gamma,accuracy\n");
        for r in &self.reps {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.repetition,
                r.n_test,
                fmt_real(r.hyper.c),
                fmt_real(r.hyper.gamma),
                fmt_real(r.accuracy)
            );
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub rho: u32,
    pub q: u32,
    pub src: f64,
    pub pcc: f64,
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("rho,q,src,pcc\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.rho, r.q, fmt_real(r.src), fmt_real(r.pcc));
    }
    out
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Loads every manifest image, block-averaged once when `downsample` is set.
/// The result is in manifest order.
pub fn load_images(
    manifest: &DatasetManifest,
    downsample: bool,
) -> Result<Vec<GrayImage>, ProtocolError> {
    manifest
        .records
        .par_iter()
        .map(|r| {
            let path = r.image_path.display().to_string();
            let img = load_gray(&r.image_path).map_err(|source| ProtocolError::Image {
                path: path.clone(),
                source,
            })?;
            if !downsample {
                return Ok(img);
            }
            let m = pixelops::downsample_factor(img.height(), img.width());
            pixelops::downsample(&img, m).map_err(|source| ProtocolError::Pixel { path, source })
        })
        .collect()
}

/// Samples in canonical order (content id, then image path) with features
/// computed from already-prepared images.
fn samples_from(
    manifest: &DatasetManifest,
    images: &[GrayImage],
    params: MdmParams,
) -> Vec<Sample> {
    let mut order: Vec<usize> = (0..manifest.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (&manifest.records[a], &manifest.records[b]);
        ra.content_id
            .cmp(&rb.content_id)
            .then_with(|| ra.image_path.cmp(&rb.image_path))
    });
    order
        .par_iter()
        .map(|&i| {
            let r = &manifest.records[i];
            // images are already reduced; the no-downsample path cannot fail
            let f = extract(&images[i], params, false).expect("extraction without downsampling");
            Sample {
                content_id: r.content_id.clone(),
                mos: r.mos,
                label: r.distortion.to_string(),
                features: f.to_array(),
            }
        })
        .collect()
}

struct Split {
    train: Vec<usize>,
    test: Vec<usize>,
    train_contents: usize,
    test_contents: usize,
    fold_seed: u64,
}

fn draw_split(samples: &[Sample], contents: &[&str], split: &SplitSpec, rep: usize) -> Split {
    let mut rng = ChaCha8Rng::seed_from_u64(split.seed);
    rng.set_stream(rep as u64);
    let mut ids = contents.to_vec();
    ids.shuffle(&mut rng);
    let n_train = split.train_contents(ids.len());
    let mut train_ids = ids[..n_train].to_vec();
    train_ids.sort_unstable();
    let (train, test) = (0..samples.len())
        .partition(|&i| train_ids.binary_search(&samples[i].content_id.as_str()).is_ok());
    Split {
        train,
        test,
        train_contents: n_train,
        test_contents: ids.len() - n_train,
        fold_seed: rng.random(),
    }
}

fn content_ids(samples: &[Sample]) -> Vec<&str> {
    let mut ids: Vec<&str> = samples.iter().map(|s| s.content_id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    ids
}

/// Picks SVR hyperparameters on the training side of a split. With fewer than
/// two training contents cross-validation is impossible and the first
/// (smallest) grid point is used.
fn select_svr(
    samples: &[Sample],
    train: &[usize],
    train_contents: usize,
    opts: &ProtocolOptions,
    seed: u64,
) -> Result<SvrHyper, MlError> {
    let points = opts.svr_grid.points();
    if points.len() == 1 || train_contents < 2 {
        return points
            .first()
            .copied()
            .ok_or_else(|| MlError::BadHyper("empty grid".into()));
    }
    let x: Vec<[f64; 3]> = train.iter().map(|&i| samples[i].features).collect();
    let y: Vec<f64> = train.iter().map(|&i| samples[i].mos).collect();
    let g: Vec<&str> = train.iter().map(|&i| samples[i].content_id.as_str()).collect();
    let k = opts.folds.min(train_contents);
    Ok(grid_search_svr(&x, &y, &g, &opts.svr_grid, k, seed)?.best)
}

fn select_svc(
    samples: &[Sample],
    train: &[usize],
    train_contents: usize,
    opts: &ProtocolOptions,
    seed: u64,
) -> Result<SvcHyper, MlError> {
    let points = opts.svc_grid.points();
    if points.len() == 1 || train_contents < 2 {
        return points
            .first()
            .copied()
            .ok_or_else(|| MlError::BadHyper("empty grid".into()));
    }
    let x: Vec<[f64; 3]> = train.iter().map(|&i| samples[i].features).collect();
    let l: Vec<&str> = train.iter().map(|&i| samples[i].label.as_str()).collect();
    let g: Vec<&str> = train.iter().map(|&i| samples[i].content_id.as_str()).collect();
    let k = opts.folds.min(train_contents);
    Ok(grid_search_svc(&x, &l, &g, &opts.svc_grid, k, seed)?.best)
}

/// Regression protocol over precomputed samples. Repetitions whose test side
/// cannot be evaluated (constant MOS, constant predictions, too few images)
/// are dropped and counted.
pub fn run_protocol_on(
    samples: &[Sample],
    split: &SplitSpec,
    opts: &ProtocolOptions,
) -> Result<ProtocolReport, ProtocolError> {
    split.validate()?;
    let contents = content_ids(samples);
    if contents.len() < 2 {
        return Err(ManifestError::TooFewContents(contents.len()).into());
    }

    let outcomes: Vec<Result<Option<RepRecord>, ProtocolError>> = (0..split.repetitions)
        .into_par_iter()
        .map(|rep| {
            let s = draw_split(samples, &contents, split, rep);
            let hyper = select_svr(samples, &s.train, s.train_contents, opts, s.fold_seed)?;
            let x: Vec<[f64; 3]> = s.train.iter().map(|&i| samples[i].features).collect();
            let y: Vec<f64> = s.train.iter().map(|&i| samples[i].mos).collect();
            let model = train_svr(&x, &y, hyper)?;
            let pred = s
                .test
                .iter()
                .map(|&i| model.predict_score(&samples[i].features))
                .collect::<Result<Vec<f64>, MlError>>()?;
            let mos: Vec<f64> = s.test.iter().map(|&i| samples[i].mos).collect();
            Ok(evaluate(&pred, &mos).ok().map(|r| RepRecord {
                repetition: rep,
                train_contents: s.train_contents,
                test_contents: s.test_contents,
                n_test: s.test.len(),
                hyper,
                src: r.src,
                pcc: r.pcc,
            }))
        })
        .collect();

    let mut reps = Vec::new();
    let mut dropped = 0;
    for o in outcomes {
        match o? {
            Some(r) => reps.push(r),
            None => dropped += 1,
        }
    }
    if reps.is_empty() {
        return Err(ProtocolError::AllDropped(dropped));
    }
    let n_train = split.train_contents(contents.len());
    Ok(ProtocolReport {
        src: median(reps.iter().map(|r| r.src).collect()),
        pcc: median(reps.iter().map(|r| r.pcc).collect()),
        repetitions: split.repetitions,
        dropped,
        train_contents: n_train,
        test_contents: contents.len() - n_train,
        reps,
    })
}

/// Loads and features every manifest record, in canonical order.
pub fn extract_samples(
    manifest: &DatasetManifest,
    params: MdmParams,
    downsample: bool,
) -> Result<Vec<Sample>, ProtocolError> {
    let images = load_images(manifest, downsample)?;
    Ok(samples_from(manifest, &images, params))
}

/// Loads the manifest images, extracts features and runs the regression
/// protocol.
pub fn run_protocol(
    manifest: &DatasetManifest,
    params: MdmParams,
    split: &SplitSpec,
    opts: &ProtocolOptions,
) -> Result<ProtocolReport, ProtocolError> {
    manifest.ensure_splittable()?;
    let images = load_images(manifest, opts.downsample)?;
    run_protocol_on(&samples_from(manifest, &images, params), split, opts)
}

/// Distortion-type classification under the same split scheme. Labels are
/// the manifest distortion tags. Repetitions whose training side holds a
/// single class are dropped.
pub fn run_classification(
    manifest: &DatasetManifest,
    params: MdmParams,
    split: &SplitSpec,
    opts: &ProtocolOptions,
) -> Result<ClassificationReport, ProtocolError> {
    manifest.ensure_splittable()?;
    let images = load_images(manifest, opts.downsample)?;
    classification_on_samples(&samples_from(manifest, &images, params), split, opts)
}

/// Classification protocol over precomputed samples.
pub fn classification_on_samples(
    samples: &[Sample],
    split: &SplitSpec,
    opts: &ProtocolOptions,
) -> Result<ClassificationReport, ProtocolError> {
    split.validate()?;
    let contents = content_ids(samples);
    if contents.len() < 2 {
        return Err(ManifestError::TooFewContents(contents.len()).into());
    }
    let outcomes: Vec<Result<Option<ClassRep>, ProtocolError>> = (0..split.repetitions)
        .into_par_iter()
        .map(|rep| {
            let s = draw_split(samples, &contents, split, rep);
            let hyper = match select_svc(samples, &s.train, s.train_contents, opts, s.fold_seed) {
                Err(MlError::SingleClass) => return Ok(None),
                other => other?,
            };
            let x: Vec<[f64; 3]> = s.train.iter().map(|&i| samples[i].features).collect();
            let l: Vec<&str> = s.train.iter().map(|&i| samples[i].label.as_str()).collect();
            let model = match train_svc(&x, &l, hyper) {
                Err(MlError::SingleClass) => return Ok(None),
                other => other?,
            };
            let mut correct = 0;
            for &i in &s.test {
                if model.predict_label(&samples[i].features)? == samples[i].label {
                    correct += 1;
                }
            }
            Ok(Some(ClassRep {
                repetition: rep,
                n_test: s.test.len(),
                hyper,
                accuracy: correct as f64 / s.test.len() as f64,
            }))
        })
        .collect();

    let mut reps = Vec::new();
    let mut dropped = 0;
    for o in outcomes {
        match o? {
            Some(r) => reps.push(r),
            None => dropped += 1,
        }
    }
    if reps.is_empty() {
        return Err(ProtocolError::AllDropped(dropped));
    }
    Ok(ClassificationReport {
        accuracy: median(reps.iter().map(|r| r.accuracy).collect()),
        repetitions: split.repetitions,
        dropped,
        reps,
    })
}

/// Runs the regression protocol for every `(rho, q)` pair, rho-major. Images
/// are loaded and reduced once.
pub fn sweep(
    manifest: &DatasetManifest,
    rho_grid: &[u32],
    q_grid: &[u32],
    split: &SplitSpec,
    opts: &ProtocolOptions,
) -> Result<Vec<SweepRow>, ProtocolError> {
    if rho_grid.is_empty() || q_grid.is_empty() {
        return Err(ProtocolError::EmptyGrid);
    }
    manifest.ensure_splittable()?;
    let images = load_images(manifest, opts.downsample)?;
    let mut rows = Vec::with_capacity(rho_grid.len() * q_grid.len());
    for &rho in rho_grid {
        for &q in q_grid {
            let params = MdmParams::new(rho, q)
                .ok_or_else(|| ProtocolError::BadSplit(format!("invalid rho={rho} q={q}")))?;
            let r = run_protocol_on(&samples_from(manifest, &images, params), split, opts)?;
            rows.push(SweepRow {
                rho,
                q,
                src: r.src,
                pcc: r.pcc,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Contents with a shared monotone severity signal in feature 0.
    fn synthetic(contents: usize, levels: usize) -> Vec<Sample> {
        let mut out = Vec::new();
        for c in 0..contents {
            for l in 0..levels {
                let sev = l as f64 / levels as f64;
                let wobble = ((c * 7 + l * 3) % 5) as f64 * 0.01;
                out.push(Sample {
                    content_id: format!("c{c:02}"),
                    mos: 1.0 + 8.0 / (1.0 + sev),
                    label: if l % 2 == 0 { "gamma".into() } else { "meanshift".into() },
                    features: [sev + wobble, 0.5 - 0.3 * sev, (l % 2) as f64 + wobble],
                });
            }
        }
        out
    }

    fn fixed() -> ProtocolOptions {
        ProtocolOptions {
            svr_grid: SvrGrid::single(SvrHyper { c: 100.0, gamma: 1.0, epsilon: 0.01 }),
            svc_grid: SvcGrid::single(SvcHyper { c: 10.0, gamma: 1.0 }),
            ..ProtocolOptions::default()
        }
    }

    #[test]
    fn forced_split_equals_single_run() {
        let samples = synthetic(2, 6);
        let split = SplitSpec { train_frac: 0.5, repetitions: 1, seed: 3 };
        let report = run_protocol_on(&samples, &split, &fixed()).unwrap();
        assert_eq!((report.train_contents, report.test_contents), (1, 1));

        let rec = &report.reps[0];
        let s = draw_split(&samples, &content_ids(&samples), &split, 0);
        let x: Vec<[f64; 3]> = s.train.iter().map(|&i| samples[i].features).collect();
        let y: Vec<f64> = s.train.iter().map(|&i| samples[i].mos).collect();
        let model = train_svr(&x, &y, rec.hyper).unwrap();
        let pred: Vec<f64> = s.test.iter().map(|&i| model.predict_score(&samples[i].features).unwrap()).collect();
        let mos: Vec<f64> = s.test.iter().map(|&i| samples[i].mos).collect();
        let single = evaluate(&pred, &mos).unwrap();
        assert_eq!(report.src, single.src);
        assert_eq!(report.pcc, single.pcc);
    }

    #[test]
    fn monotone_signal_is_learned() {
        let split = SplitSpec { train_frac: 0.8, repetitions: 20, seed: 1 };
        let report = run_protocol_on(&synthetic(10, 5), &split, &fixed()).unwrap();
        assert!(report.src >= 0.95, "{report:?}");
        assert_eq!(report.reps.len() + report.dropped, 20);
    }

    #[test]
    fn splits_are_content_disjoint() {
        let samples = synthetic(9, 3);
        let contents = content_ids(&samples);
        for rep in 0..50 {
            let s = draw_split(&samples, &contents, &SplitSpec { train_frac: 0.8, repetitions: 1, seed: 9 }, rep);
            assert_eq!((s.train_contents, s.test_contents), (7, 2));
            for &a in &s.train {
                assert!(s.test.iter().all(|&b| samples[a].content_id != samples[b].content_id));
            }
            assert_eq!(s.train.len() + s.test.len(), samples.len());
        }
    }

    #[test]
    fn same_seed_same_report() {
        let samples = synthetic(6, 4);
        let split = SplitSpec { train_frac: 0.67, repetitions: 8, seed: 5 };
        let opts = ProtocolOptions { folds: 3, ..ProtocolOptions::default() };
        let a = run_protocol_on(&samples, &split, &opts).unwrap();
        let b = run_protocol_on(&samples, &split, &opts).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.reps_csv(), b.reps_csv());
    }

    #[test]
    fn degenerate_tests_are_dropped() {
        // content c01 holds one MOS value only; whenever it is the test side
        // the repetition cannot be scored
        let mut samples = synthetic(2, 6);
        for s in samples.iter_mut().filter(|s| s.content_id == "c01") {
            s.mos = 4.0;
        }
        let split = SplitSpec { train_frac: 0.5, repetitions: 16, seed: 2 };
        match run_protocol_on(&samples, &split, &fixed()) {
            Ok(r) => {
                assert!(r.dropped > 0);
                assert_eq!(r.reps.len() + r.dropped, 16);
            }
            Err(ProtocolError::AllDropped(n)) => assert_eq!(n, 16),
            Err(e) => panic!("{e}"),
        }
    }

    #[test]
    fn classification_on_separable_labels() {
        let split = SplitSpec { train_frac: 0.8, repetitions: 10, seed: 4 };
        let r = classification_on_samples(&synthetic(10, 4), &split, &fixed()).unwrap();
        assert!(r.accuracy >= 0.9, "{r:?}");
    }

    #[test]
    fn median_handles_even_counts() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn invalid_splits() {
        let samples = synthetic(3, 3);
        for split in [
            SplitSpec { train_frac: 0.0, repetitions: 1, seed: 0 },
            SplitSpec { train_frac: 1.0, repetitions: 1, seed: 0 },
            SplitSpec { train_frac: 0.5, repetitions: 0, seed: 0 },
        ] {
            assert!(matches!(run_protocol_on(&samples, &split, &fixed()), Err(ProtocolError::BadSplit(_))));
        }
    }
}
