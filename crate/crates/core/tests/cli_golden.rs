//! `mdm score` on a bundled fixture against values computed with exact
//! arithmetic by `tests/fixtures/make_golden.py`.

use std::path::{Path, PathBuf};
use std::process::Command;

const TOL: f64 = 1e-12;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn parse_metrics(text: &str) -> Vec<(String, f64)> {
    text.lines()
        .filter(|l| !l.is_empty())
        .map(|l| {
            let (k, v) = l.split_once(',').expect("metric,value row");
            (k.to_string(), v.parse().expect("numeric value"))
        })
        .collect()
}

fn score(image: &Path, extra: &[&str]) -> Vec<(String, f64)> {
    let out = Command::new(env!("CARGO_BIN_EXE_mdm"))
        .arg("score")
        .arg(image)
        .args(extra)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("metric,value"));
    parse_metrics(&lines.collect::<Vec<_>>().join("\n"))
}

fn check(case: &str, extra: &[&str]) {
    let golden = parse_metrics(&std::fs::read_to_string(fixture(&format!("textured_48x32.{case}.golden.csv"))).unwrap());
    let got = score(&fixture("textured_48x32.pgm"), extra);
    assert_eq!(got.len(), golden.len(), "{case}: {got:?}");
    for ((gk, gv), (wk, wv)) in got.iter().zip(&golden) {
        assert_eq!(gk, wk);
        assert!((gv - wv).abs() <= TOL, "{case} {gk}: {gv} vs exact {wv}");
    }
}

#[test]
fn default_settings_match_exact_oracle() {
    check("default", &[]);
}

#[test]
fn full_resolution_matches_exact_oracle() {
    check("no_downsample", &["--no-downsample"]);
}

#[test]
fn other_orders_match_exact_oracle() {
    check("rho16_q2", &["--rho", "16", "--q", "2"]);
}

#[test]
fn png_and_pgm_encodings_score_identically() {
    let img = mdm_iqa::imgio::load_gray(fixture("textured_48x32.pgm")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fixture.png");
    let file = std::fs::File::create(&path).unwrap();
    let mut enc = png::Encoder::new(std::io::BufWriter::new(file), img.width() as u32, img.height() as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    enc.write_header().unwrap().write_image_data(&img.to_levels()).unwrap();

    let from_png = score(&path, &[]);
    let from_pgm = score(&fixture("textured_48x32.pgm"), &[]);
    assert_eq!(from_png, from_pgm);
}
