//! End-to-end protocol behaviour on a small generated dataset.

use mdm_iqa::eval::{run_protocol, sweep, ProtocolOptions, SplitSpec};
use mdm_iqa::features::MdmParams;
use mdm_iqa::imgio::{parse_manifest, DatasetManifest};
use mdm_iqa::ml::SvrGrid;
use mdm_iqa::synth::{generate_sources, make_dataset, Kind};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn dataset(dir: &std::path::Path) -> DatasetManifest {
    let sources = generate_sources(6, 48, 48, 5);
    make_dataset(&sources, &[Kind::Gamma, Kind::MeanShift], &[0.1, 0.3, 0.5], 9, dir).unwrap()
}

fn small_opts() -> ProtocolOptions {
    ProtocolOptions {
        svr_grid: SvrGrid { c: vec![1.0, 10.0], gamma: vec![0.5, 2.0], epsilon: vec![0.05] },
        folds: 3,
        ..ProtocolOptions::default()
    }
}

fn split() -> SplitSpec {
    SplitSpec { train_frac: 0.67, repetitions: 6, seed: 13 }
}

#[test]
fn manifest_row_order_does_not_matter() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path());
    let reread = parse_manifest(dir.path().join("manifest.csv")).unwrap();
    assert_eq!(reread.len(), manifest.len());

    let mut shuffled = reread.records.clone();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(77));
    assert_ne!(shuffled, reread.records);
    let shuffled = DatasetManifest::new(shuffled);
    shuffled.write_csv(dir.path().join("shuffled.csv")).unwrap();
    let shuffled = parse_manifest(dir.path().join("shuffled.csv")).unwrap();

    let a = run_protocol(&reread, MdmParams::default(), &split(), &small_opts()).unwrap();
    let b = run_protocol(&shuffled, MdmParams::default(), &split(), &small_opts()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.repetitions + a.dropped, 6);
}

#[test]
fn sweep_emits_one_row_per_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path());
    let rows = sweep(&manifest, &[4, 64], &[2, 4, 8], &split(), &small_opts()).unwrap();
    assert_eq!(rows.len(), 6);
    let order: Vec<(u32, u32)> = rows.iter().map(|r| (r.rho, r.q)).collect();
    assert_eq!(order, [(4, 2), (4, 4), (4, 8), (64, 2), (64, 4), (64, 8)]);
    assert!(rows.iter().all(|r| r.src.is_finite() && r.pcc.is_finite()));
}

#[test]
fn single_point_sweep_equals_protocol_run() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path());
    let params = MdmParams::new(16, 4).unwrap();
    let rows = sweep(&manifest, &[16], &[4], &split(), &small_opts()).unwrap();
    let report = run_protocol(&manifest, params, &split(), &small_opts()).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!((rows[0].src, rows[0].pcc), (report.src, report.pcc));
}
