//! The `mdm` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 I/O error, 3 model or data error.
//! Results go to stdout (or `--out`); diagnostics go to stderr.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::eval::{
    extract_samples, run_classification, run_protocol, sweep, sweep_csv, ProtocolError,
    ProtocolOptions, SplitSpec,
};
use crate::features::{extract, FeatureVector, MdmParams};
use crate::imgio::{fmt_real, load_gray, parse_manifest, GrayImage, ImageError, ManifestError};
use crate::ml::{
    grid_search_svc, grid_search_svr, load_model, save_model, train_svc, train_svr, MlError,
    Prediction, SvcGrid, SvrGrid,
};
use crate::pixelops::PixelError;
use crate::synth::{generate_sources_with, make_dataset, Kind, SynthError, DEFAULT_VARIATION};

#[derive(Debug, Parser)]
#[command(
    name = "mdm",
    version,
    about = "No-reference quality scoring of contrast-distorted grayscale images",
    after_help = "Exit codes: 0 ok, 1 usage, 2 I/O, 3 model/data. File formats are described in FORMATS.md."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the feature vector of one image, plus a prediction with --model.
    Score(ScoreArgs),
    /// Write a feature CSV for a list of images or a manifest.
    Extract(ExtractArgs),
    /// Fit a quality regressor on a manifest and save it as JSON.
    Train(TrainArgs),
    /// Fit a distortion-type classifier on a manifest and save it as JSON.
    ClassifyTrain(TrainArgs),
    /// Label images with a classifier model.
    Classify(ClassifyArgs),
    /// Repeated content-disjoint train/test evaluation.
    Eval(EvalArgs),
    /// Evaluate every (rho, q) pair of two grids.
    Sweep(SweepArgs),
    /// Generate a synthetic distorted dataset with a manifest.
    Synth(SynthArgs),
    /// Time feature extraction on random images.
    Bench(BenchArgs),
}

#[derive(Debug, Args, Clone, Copy)]
struct FeatureOpts {
    /// Minkowski order.
    #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u32).range(1..))]
    rho: u32,
    /// Power-law exponent.
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u32).range(1..))]
    q: u32,
    /// Use the image at full resolution instead of block-averaging first.
    #[arg(long)]
    no_downsample: bool,
}

impl FeatureOpts {
    fn params(&self) -> MdmParams {
        MdmParams {
            rho: self.rho,
            q: self.q,
        }
    }
}

#[derive(Debug, Args)]
struct JobsOpt {
    /// Worker threads; 0 picks one per core. Results do not depend on it.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Debug, Args, Clone)]
struct GridOpts {
    /// Box constraint values to search (comma separated).
    #[arg(long = "c", value_delimiter = ',', num_args = 1..)]
    c: Option<Vec<f64>>,
    /// RBF gamma values to search (comma separated).
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    gamma: Option<Vec<f64>>,
    /// Regression tube widths to search, on MOS scaled to [0, 1].
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    epsilon: Option<Vec<f64>>,
    /// Content-disjoint cross-validation folds.
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(2..))]
    folds: u64,
}

impl GridOpts {
    fn svr(&self) -> SvrGrid {
        let d = SvrGrid::default();
        SvrGrid {
            c: self.c.clone().unwrap_or(d.c),
            gamma: self.gamma.clone().unwrap_or(d.gamma),
            epsilon: self.epsilon.clone().unwrap_or(d.epsilon),
        }
    }

    fn svc(&self) -> SvcGrid {
        let d = SvcGrid::default();
        SvcGrid {
            c: self.c.clone().unwrap_or(d.c),
            gamma: self.gamma.clone().unwrap_or(d.gamma),
        }
    }
}

#[derive(Debug, Args)]
struct ScoreArgs {
    image: PathBuf,
    #[command(flatten)]
    features: FeatureOpts,
    /// Model file from `train` or `classify-train`.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExtractArgs {
    /// Images to process.
    #[arg(required_unless_present = "manifest", conflicts_with = "manifest")]
    images: Vec<PathBuf>,
    /// Take the image list from a manifest instead.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[command(flatten)]
    features: FeatureOpts,
    #[command(flatten)]
    jobs: JobsOpt,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Destination of the model JSON.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    features: FeatureOpts,
    #[command(flatten)]
    grid: GridOpts,
    /// Seed for the fold assignment.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    jobs: JobsOpt,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(required = true)]
    images: Vec<PathBuf>,
    #[command(flatten)]
    features: FeatureOpts,
}

#[derive(Debug, Args, Clone, Copy)]
struct SplitOpts {
    /// Share of contents used for training.
    #[arg(long, default_value_t = 0.8)]
    train_frac: f64,
    /// Number of random splits.
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    reps: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SplitOpts {
    fn spec(&self) -> SplitSpec {
        SplitSpec {
            train_frac: self.train_frac,
            repetitions: self.reps as usize,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum EvalTask {
    Regression,
    Classification,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Score MOS prediction or distortion-type labeling.
    #[arg(long, value_enum, default_value_t = EvalTask::Regression)]
    task: EvalTask,
    #[command(flatten)]
    features: FeatureOpts,
    #[command(flatten)]
    split: SplitOpts,
    #[command(flatten)]
    grid: GridOpts,
    /// Also write one CSV row per repetition to this file.
    #[arg(long)]
    dump_reps: Option<PathBuf>,
    #[command(flatten)]
    jobs: JobsOpt,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "2,4,8,16,32,64,128")]
    rho_grid: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_value = "2,4,8,16")]
    q_grid: Vec<u32>,
    #[arg(long)]
    no_downsample: bool,
    #[command(flatten)]
    split: SplitOpts,
    #[command(flatten)]
    grid: GridOpts,
    #[command(flatten)]
    jobs: JobsOpt,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Output directory; receives the images and manifest.csv.
    #[arg(long)]
    out: PathBuf,
    /// Number of procedural source scenes.
    #[arg(long, default_value_t = 20)]
    contents: usize,
    /// Source size as WIDTHxHEIGHT.
    #[arg(long, default_value = "256x256", value_parser = parse_size)]
    size: (usize, usize),
    #[arg(long, value_delimiter = ',', default_value = "gamma,meanshift", value_parser = parse_kind)]
    kinds: Vec<Kind>,
    /// Severity levels: |ln g| for gamma, |delta| for mean shift.
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4,0.5")]
    levels: Vec<f64>,
    /// Spread of per-scene tone and range in [0, 1]; larger values make
    /// undistorted contents differ more.
    #[arg(long, default_value_t = DEFAULT_VARIATION, value_parser = parse_unit)]
    variation: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Image sizes as WIDTHxHEIGHT, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "384x512,2160x3840", value_parser = parse_size)]
    sizes: Vec<(usize, usize)>,
    /// Timed runs per size.
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    reps: u64,
    #[command(flatten)]
    features: FeatureOpts,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let bad = || format!("bad size {s:?}: expected WIDTHxHEIGHT, e.g. 384x512");
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let w: usize = w.trim().parse().map_err(|_| bad())?;
    let h: usize = h.trim().parse().map_err(|_| bad())?;
    if w == 0 || h == 0 {
        return Err(bad());
    }
    Ok((w, h))
}

fn parse_unit(s: &str) -> Result<f64, String> {
    match s.trim().parse::<f64>() {
        Ok(v) if (0.0..=1.0).contains(&v) => Ok(v),
        _ => Err(format!("bad value {s:?}: expected a number in [0, 1]")),
    }
}

fn parse_kind(s: &str) -> Result<Kind, String> {
    Kind::parse(s).ok_or_else(|| format!("unknown distortion kind {s:?} (gamma, meanshift)"))
}

/// A failed command, carrying its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(m: impl Into<String>) -> Self {
        Self { code: 1, message: m.into() }
    }
    fn io(m: impl Into<String>) -> Self {
        Self { code: 2, message: m.into() }
    }
    fn data(m: impl Into<String>) -> Self {
        Self { code: 3, message: m.into() }
    }
}

fn image_err(path: &Path, e: ImageError) -> CliError {
    // unreadable or undecodable input is an I/O failure
    CliError::io(format!("{}: {e}", path.display()))
}

fn pixel_err(path: &Path, e: PixelError) -> CliError {
    CliError::data(format!("{}: {e}", path.display()))
}

impl From<ManifestError> for CliError {
    fn from(e: ManifestError) -> Self {
        match e {
            ManifestError::Io(_) => CliError::io(e.to_string()),
            _ => CliError::data(e.to_string()),
        }
    }
}

impl From<MlError> for CliError {
    fn from(e: MlError) -> Self {
        match e {
            MlError::Io(_) => CliError::io(e.to_string()),
            MlError::BadHyper(_) => CliError::usage(e.to_string()),
            _ => CliError::data(e.to_string()),
        }
    }
}

impl From<ProtocolError> for CliError {
    fn from(e: ProtocolError) -> Self {
        match e {
            ProtocolError::Manifest(m) => m.into(),
            ProtocolError::Ml(m) => m.into(),
            ProtocolError::Image { .. } => CliError::io(e.to_string()),
            ProtocolError::BadSplit(_) | ProtocolError::EmptyGrid => CliError::usage(e.to_string()),
            _ => CliError::data(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Io(_) | SynthError::Image(_) => CliError::io(e.to_string()),
            _ => CliError::usage(e.to_string()),
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the exit
/// code. Output and diagnostics go to the given writers.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = stdout.write_all(text.as_bytes());
                    0
                }
                _ => {
                    let _ = stderr.write_all(text.as_bytes());
                    1
                }
            };
        }
    };
    match dispatch(cli.command) {
        Ok(out) => match stdout.write_all(out.as_bytes()) {
            Ok(()) => 0,
            Err(e) => {
                let _ = writeln!(stderr, "mdm: cannot write output: {e}");
                2
            }
        },
        Err(e) => {
            let _ = writeln!(stderr, "mdm: {}", e.message);
            e.code
        }
    }
}

fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::usage(format!("cannot start {jobs} workers: {e}")))?;
    Ok(pool.install(f))
}

/// Writes `text` to `out` when given (returning nothing for stdout),
/// otherwise returns it for stdout.
fn emit(text: String, out: Option<&Path>) -> Result<String, CliError> {
    match out {
        Some(p) => {
            fs::write(p, text).map_err(|e| CliError::io(format!("{}: {e}", p.display())))?;
            Ok(String::new())
        }
        None => Ok(text),
    }
}

fn dispatch(cmd: Command) -> Result<String, CliError> {
    match cmd {
        Command::Score(a) => score(a),
        Command::Extract(a) => with_jobs(a.jobs.jobs, || extract_cmd(&a))?,
        Command::Train(a) => with_jobs(a.jobs.jobs, || train_cmd(&a, false))?,
        Command::ClassifyTrain(a) => with_jobs(a.jobs.jobs, || train_cmd(&a, true))?,
        Command::Classify(a) => classify(a),
        Command::Eval(a) => with_jobs(a.jobs.jobs, || eval_cmd(&a))?,
        Command::Sweep(a) => with_jobs(a.jobs.jobs, || sweep_cmd(&a))?,
        Command::Synth(a) => synth(a),
        Command::Bench(a) => bench(a),
    }
}

fn features_of(path: &Path, opts: FeatureOpts) -> Result<FeatureVector, CliError> {
    let img = load_gray(path).map_err(|e| image_err(path, e))?;
    extract(&img, opts.params(), !opts.no_downsample).map_err(|e| pixel_err(path, e))
}

fn score(a: ScoreArgs) -> Result<String, CliError> {
    // load the model first so a bad model fails before any image work
    let model = a.model.as_deref().map(load_model).transpose()?;
    let f = features_of(&a.image, a.features)?;
    let mut out = String::from("metric,value\n");
    let _ = writeln!(out, "mdm_d,{}", fmt_real(f.mdm_d));
    let _ = writeln!(out, "mdm_dc,{}", fmt_real(f.mdm_dc));
    let _ = writeln!(out, "entropy,{}", fmt_real(f.entropy_bits));
    if let Some(model) = model {
        match model.predict(&f.to_array())? {
            Prediction::Score(q) => {
                let _ = writeln!(out, "quality,{}", fmt_real(q));
            }
            Prediction::Label(l) => {
                let _ = writeln!(out, "class,{l}");
            }
        }
    }
    Ok(out)
}

fn extract_cmd(a: &ExtractArgs) -> Result<String, CliError> {
    let paths: Vec<PathBuf> = match &a.manifest {
        Some(m) => parse_manifest(m)?
            .records
            .into_iter()
            .map(|r| r.image_path)
            .collect(),
        None => a.images.clone(),
    };
    let rows = paths
        .par_iter()
        .map(|p| features_of(p, a.features))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = String::from("path,mdm_d,mdm_dc,entropy\n");
    for (p, f) in paths.iter().zip(rows) {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            p.display(),
            fmt_real(f.mdm_d),
            fmt_real(f.mdm_dc),
            fmt_real(f.entropy_bits)
        );
    }
    emit(out, a.out.as_deref())
}

fn train_cmd(a: &TrainArgs, classify: bool) -> Result<String, CliError> {
    let manifest = parse_manifest(&a.manifest)?;
    let samples = extract_samples(&manifest, a.features.params(), !a.features.no_downsample)?;
    let x: Vec<[f64; 3]> = samples.iter().map(|s| s.features).collect();
    let groups: Vec<&str> = samples.iter().map(|s| s.content_id.as_str()).collect();
    let n_groups = {
        let mut g = groups.clone();
        g.dedup();
        g.len()
    };
    let folds = (a.grid.folds as usize).min(n_groups);
    let mut out = String::from("metric,value\n");

    let model = if classify {
        let labels: Vec<&str> = samples.iter().map(|s| s.label.as_str()).collect();
        let grid = a.grid.svc();
        let best = if grid.points().len() == 1 {
            grid.points()[0]
        } else {
            let r = grid_search_svc(&x, &labels, &groups, &grid, folds, a.seed)?;
            let _ = writeln!(out, "cv_accuracy,{}", fmt_real(r.score));
            r.best
        };
        let _ = writeln!(out, "c,{}", fmt_real(best.c));
        let _ = writeln!(out, "gamma,{}", fmt_real(best.gamma));
        train_svc(&x, &labels, best)?
    } else {
        let y: Vec<f64> = samples.iter().map(|s| s.mos).collect();
        let grid = a.grid.svr();
        let best = if grid.points().len() == 1 {
            grid.points()[0]
        } else {
            let r = grid_search_svr(&x, &y, &groups, &grid, folds, a.seed)?;
            let _ = writeln!(out, "cv_src,{}", fmt_real(r.score));
            r.best
        };
        let _ = writeln!(out, "c,{}", fmt_real(best.c));
        let _ = writeln!(out, "gamma,{}", fmt_real(best.gamma));
        let _ = writeln!(out, "epsilon,{}", fmt_real(best.epsilon));
        train_svr(&x, &y, best)?
    };
    if !model.converged() {
        eprintln!("mdm: warning: SMO hit its iteration cap; the model may be suboptimal");
    }
    if model.is_constant() {
        eprintln!("mdm: warning: all training targets are equal; the model is constant");
    }
    let _ = writeln!(out, "support_vectors,{}", model.support_vector_count());
    save_model(&model, &a.out)?;
    Ok(out)
}

fn classify(a: ClassifyArgs) -> Result<String, CliError> {
    let model = load_model(&a.model)?;
    let mut out = String::from("path,label\n");
    for p in &a.images {
        let f = features_of(p, a.features)?;
        let label = model.predict_label(&f.to_array())?;
        let _ = writeln!(out, "{},{label}", p.display());
    }
    Ok(out)
}

fn options(grid: &GridOpts, no_downsample: bool) -> ProtocolOptions {
    ProtocolOptions {
        svr_grid: grid.svr(),
        svc_grid: grid.svc(),
        folds: grid.folds as usize,
        downsample: !no_downsample,
    }
}

fn eval_cmd(a: &EvalArgs) -> Result<String, CliError> {
    let manifest = parse_manifest(&a.manifest)?;
    let opts = options(&a.grid, a.features.no_downsample);
    let split = a.split.spec();
    let (report, reps) = match a.task {
        EvalTask::Regression => {
            let r = run_protocol(&manifest, a.features.params(), &split, &opts)?;
            (r.to_csv(), r.reps_csv())
        }
        EvalTask::Classification => {
            let r = run_classification(&manifest, a.features.params(), &split, &opts)?;
            (r.to_csv(), r.reps_csv())
        }
    };
    if let Some(p) = &a.dump_reps {
        fs::write(p, reps).map_err(|e| CliError::io(format!("{}: {e}", p.display())))?;
    }
    emit(report, a.out.as_deref())
}

fn sweep_cmd(a: &SweepArgs) -> Result<String, CliError> {
    if a.rho_grid.contains(&0) || a.q_grid.contains(&0) {
        return Err(CliError::usage("rho and q must be positive"));
    }
    let manifest = parse_manifest(&a.manifest)?;
    let rows = sweep(
        &manifest,
        &a.rho_grid,
        &a.q_grid,
        &a.split.spec(),
        &options(&a.grid, a.no_downsample),
    )?;
    emit(sweep_csv(&rows), a.out.as_deref())
}

fn synth(a: SynthArgs) -> Result<String, CliError> {
    let (w, h) = a.size;
    let sources = generate_sources_with(a.contents, w, h, a.seed, a.variation);
    make_dataset(&sources, &a.kinds, &a.levels, a.seed, &a.out)?;
    Ok(format!("{}\n", a.out.join("manifest.csv").display()))
}

fn random_image(w: usize, h: usize, rng: &mut ChaCha8Rng) -> GrayImage {
    let levels: Vec<u8> = (0..w * h).map(|_| rng.random()).collect();
    GrayImage::from_levels(w, h, &levels).expect("nonzero size")
}

fn bench(a: BenchArgs) -> Result<String, CliError> {
    let mut out = String::from("width,height,reps,median_ms\n");
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    for &(w, h) in &a.sizes {
        let img = random_image(w, h, &mut rng);
        let mut times = Vec::with_capacity(a.reps as usize);
        for _ in 0..a.reps {
            let start = Instant::now();
            let f = extract(&img, a.features.params(), !a.features.no_downsample)
                .map_err(|e| CliError::data(format!("{w}x{h}: {e}")))?;
            times.push(start.elapsed().as_secs_f64() * 1e3);
            std::hint::black_box(f);
        }
        times.sort_by(f64::total_cmp);
        let n = times.len();
        let median = if n % 2 == 1 {
            times[n / 2]
        } else {
            (times[n / 2 - 1] + times[n / 2]) / 2.0
        };
        let _ = writeln!(out, "{w},{h},{},{median:.6}", a.reps);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let mut full = vec!["mdm"];
        full.extend_from_slice(args);
        let code = run(full, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn sizes_parse() {
        assert_eq!(parse_size("384x512"), Ok((384, 512)));
        assert!(parse_size("384").is_err());
        assert!(parse_size("0x5").is_err());
        assert!(parse_size("ax5").is_err());
    }

    #[test]
    fn unknown_flag_is_usage_error() {
        let (code, out, err) = run_capture(&["score", "x.pgm", "--bogus"]);
        assert_eq!(code, 1);
        assert!(out.is_empty());
        assert!(!err.is_empty());
    }

    #[test]
    fn help_is_success() {
        let (code, out, _) = run_capture(&["--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("bench"));
    }

    #[test]
    fn missing_image_is_io_error() {
        let (code, out, err) = run_capture(&["score", "/nonexistent/img.pgm"]);
        assert_eq!(code, 2);
        assert!(out.is_empty());
        assert!(err.contains("img.pgm"));
    }

    #[test]
    fn bad_model_is_model_error() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("a.pgm");
        GrayImage::constant(8, 8, 0.5).unwrap().save_pgm(&img).unwrap();
        let model = dir.path().join("m.json");
        fs::write(&model, "{\"version\": 1, \"task\": ").unwrap();
        let (code, _, _) = run_capture(&["score", img.to_str().unwrap(), "--model", model.to_str().unwrap()]);
        assert_eq!(code, 3);
    }

    #[test]
    fn score_checkerboard() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("board.pgm");
        let levels: Vec<u8> = (0..16).map(|i| if (i % 4 + i / 4) % 2 == 0 { 0 } else { 255 }).collect();
        GrayImage::from_levels(4, 4, &levels).unwrap().save_pgm(&img).unwrap();
        let (code, out, _) =
            run_capture(&["score", img.to_str().unwrap(), "--rho", "2", "--q", "1", "--no-downsample"]);
        assert_eq!(code, 0);
        let mdm_d: f64 = out.lines().find_map(|l| l.strip_prefix("mdm_d,")).unwrap().parse().unwrap();
        assert!((mdm_d - 0.5f64.powf(0.25)).abs() < 1e-12);
    }

    #[test]
    fn bench_single_row() {
        let (code, out, _) = run_capture(&["bench", "--sizes", "64x48", "--reps", "1"]);
        assert_eq!(code, 0);
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines.len(), 2);
        let ms: f64 = lines[1].rsplit(',').next().unwrap().parse().unwrap();
        assert!(ms.is_finite() && ms >= 0.0);
    }

    #[test]
    fn bench_rejects_bad_size() {
        assert_eq!(run_capture(&["bench", "--sizes", "12by4"]).0, 1);
    }
}
