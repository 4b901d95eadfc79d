use std::path::Path;
use std::process::Command;

use aquasi::{io, MultiChannelImage};
use aquasi_cli::synthetic;

fn aquasi(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_aquasi")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn zero_noise_degrade_copies_the_input() {
    let dir = tempfile::tempdir().unwrap();
    let (input, out) = (dir.path().join("in.f32"), dir.path().join("out.f32"));
    io::write_image(&input, &MultiChannelImage::single(synthetic::scene(24, 20))).unwrap();
    let run = aquasi(&["degrade", "--input", s(&input), "--output", s(&out), "--set", "noise_sigma=0"]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(std::fs::read(&input).unwrap(), std::fs::read(&out).unwrap());
}

#[test]
fn unregularized_denoise_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let (input, out) = (dir.path().join("in.f32"), dir.path().join("out.f32"));
    io::write_image(&input, &synthetic::rgb_guide(16, 16)).unwrap();
    let run = aquasi(&[
        "denoise", "--input", s(&input), "--output", s(&out), "--set", "lambda=0", "--set", "mu=0",
    ]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(io::read_image(&input).unwrap(), io::read_image(&out).unwrap());
}

#[test]
fn failures_print_one_error_line() {
    let run = aquasi(&["denoise", "--input", "/nonexistent/in.f32", "--output", "/tmp/x.f32"]);
    assert!(!run.status.success());
    let stderr = String::from_utf8(run.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1);
    assert!(stderr.starts_with("error: io: "), "{stderr}");

    let run = aquasi(&["denoise", "--no-such-flag"]);
    assert_eq!(run.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&run.stderr).starts_with("error: usage: "));
}

#[test]
fn residual_hist_writes_csv_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.pgm");
    io::write_image(&input, &MultiChannelImage::single(synthetic::depth(32, 32))).unwrap();
    let run = aquasi(&["residual-hist", "--input", s(&input), "--set", "bins=16"]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let csv = String::from_utf8(run.stdout).unwrap();
    assert_eq!(csv.lines().count(), 17);
}
