use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use symfilt::pgm::{read_pgm, write_pgm};
use symfilt::synthetic::{two_region, Region};
use tempfile::TempDir;

fn symfilt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_symfilt"))
        .args(args)
        .env("SYMFILT_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn fixture(dir: &TempDir) -> PathBuf {
    let path = dir.path().join("disk.pgm");
    write_pgm(&path, &two_region(24, 24, Region::Disk, 0.7, 0.3)).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn record(out: &Output) -> Vec<(String, String)> {
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from);
    let values = lines.next().unwrap().split(',').map(String::from);
    header.zip(values).collect()
}

fn field(rec: &[(String, String)], key: &str) -> String {
    rec.iter().find(|(k, _)| k == key).unwrap().1.clone()
}

#[test]
fn gsf_without_noise_is_near_identity() {
    let dir = TempDir::new().unwrap();
    let input = fixture(&dir);
    let out = symfilt(&["denoise", "--method", "gsf", "--input", s(&input), "--sigma-added", "0"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let psnr: f64 = field(&record(&out), "psnr").parse().unwrap();
    assert!(psnr > 50.0);
}

#[test]
fn denoise_writes_output_and_model() {
    let dir = TempDir::new().unwrap();
    let input = fixture(&dir);
    let output = dir.path().join("out.pgm");
    let model = dir.path().join("model.json");
    let out = symfilt(&[
        "denoise", "--method", "gsf", "--input", s(&input), "--output", s(&output), "--sigma-added", "20", "--k", "6",
        "--model-out", s(&model), "--em-iters", "20",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read_pgm(&output).unwrap().dims(), (24, 24));
    let m = symfilt::model::load_model(&model).unwrap();
    assert_eq!(m.k(), 6);
    let rec = record(&out);
    assert_eq!(field(&rec, "chosen_k"), "6");
    assert!(field(&rec, "em_iterations").parse::<usize>().unwrap() <= 20);
}

#[test]
fn smoothers_report_and_dump_affinity() {
    let dir = TempDir::new().unwrap();
    let input = fixture(&dir);
    let dump = dir.path().join("w.txt");
    for method in ["nlm", "onestep", "sinkhorn"] {
        let out = symfilt(&[
            "denoise", "--method", method, "--input", s(&input), "--sigma-added", "20", "--window-radius", "3",
            "--dump-affinity", s(&dump),
        ]);
        assert!(out.status.success(), "{method}: {}", String::from_utf8_lossy(&out.stderr));
        let psnr: f64 = field(&record(&out), "psnr").parse().unwrap();
        assert!(psnr > 25.0, "{method}: {psnr}");
    }
    let text = std::fs::read_to_string(&dump).unwrap();
    let first: Vec<&str> = text.lines().next().unwrap().split(' ').collect();
    assert_eq!(first.len(), 3);
    assert!(text.lines().count() <= 576 * 49);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let input = fixture(&dir);
    let missing = symfilt(&["denoise", "--input", "/definitely/not/here.pgm"]);
    assert_eq!(missing.status.code(), Some(3));
    let bad = symfilt(&["denoise", "--method", "nlm", "--sinkhorn-iters", "1", "--input", s(&input)]);
    assert_eq!(bad.status.code(), Some(2));
    let bad = symfilt(&["denoise", "--method", "bm3d", "--input", s(&input)]);
    assert_eq!(bad.status.code(), Some(2));
    let bad = symfilt(&["denoise", "--method", "gsf", "--k", "0", "--input", s(&input)]);
    assert_eq!(bad.status.code(), Some(2));
    let bad = symfilt(&["denoise", "--method", "nlm", "--input", s(&input), "--patch-side", "4", "--sigma-added", "5"]);
    assert_eq!(bad.status.code(), Some(2));
    let colour = dir.path().join("c.ppm");
    std::fs::write(&colour, b"P6\n1 1\n255\n\0\0\0").unwrap();
    let bad = symfilt(&["denoise", "--input", s(&colour)]);
    assert_eq!(bad.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("colour"));
}

#[test]
fn benchmark_csv_is_reproducible() {
    let dir = TempDir::new().unwrap();
    fixture(&dir);
    let args = [
        "benchmark", "--method", "nlm,onestep", "--input", s(dir.path()), "--sigma-added", "20", "--trials", "1",
        "--grid-hr", "0.6,0.8", "--window-radius", "3", "--seed", "9",
    ];
    let a = symfilt(&args);
    let b = symfilt(&args);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert_eq!(text.lines().next().unwrap(), "image,method,sigma,h_r,trial,psnr");
    assert!(text.lines().skip(1).all(|l| l.split(',').count() == 6));
    assert!(text.contains(",best,"));
}

#[test]
fn sweeps_emit_tables() {
    let dir = TempDir::new().unwrap();
    let input = fixture(&dir);
    let csv = dir.path().join("sweep.csv");
    let out = symfilt(&[
        "sweep", "--axis", "sinkhorn-iters", "--input", s(&input), "--grid-iters", "3", "--window-radius", "3", "--csv",
        s(&csv),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 5);
    let out = symfilt(&[
        "sweep", "--axis", "lambda", "--input", s(&input), "--k", "4", "--grid-lambda", "0,1,10", "--em-iters", "10",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next().unwrap(), "lambda,sure,mse,psnr,sure_optimal");
    assert_eq!(text.lines().count(), 5);
    let out = symfilt(&["sweep", "--axis", "k", "--input", s(&input), "--grid-k", "2,4", "--em-iters", "10"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 3);
    let bad = symfilt(&["sweep", "--axis", "k", "--input", s(&input), "--grid-k", "100000"]);
    assert_eq!(bad.status.code(), Some(2));
}
