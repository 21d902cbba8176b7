use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sne_core::corpus::synthetic_image;
use sne_core::eval::write_pnm;
use sne_core::RngStream;
use tempfile::TempDir;

fn sne(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sne")).args(args).current_dir(dir).output().expect("spawn sne")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_image(dir: &Path, name: &str, seed: u64, size: usize) {
    let img = synthetic_image(size, size, &mut RngStream::new(seed));
    fs::write(dir.join(name), write_pnm(&img).unwrap()).unwrap();
}

const TINY_RUN: &str = "\
train_images = a.pgm, b.pgm
val_images = c.pgm
state_dim = 4
patch_edge = 4
total_epochs = 3
switch_epoch = 2
reg_period = 2
batch = 16
quality = 0.5
seed = 1
";

#[test]
fn eval_of_identical_images_is_perfect() {
    let dir = TempDir::new().unwrap();
    write_image(dir.path(), "a.pgm", 3, 16);
    let out = sne(&["eval", "a.pgm", "a.pgm"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.lines().any(|l| l == "psnr=99"), "{text}");
    assert!(text.lines().any(|l| l == "ssim=1"), "{text}");
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let out = sne(&["eval", "--frobnicate", "a", "b"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("Usage"), "{}", stderr(&out));
    assert_eq!(sne(&[], dir.path()).status.code(), Some(2));
}

#[test]
fn missing_input_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let out = sne(&["decode-baseline", "nope.sneq", "-o", "x.pgm"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("nope.sneq"));
}

#[test]
fn encode_then_baseline_decode_round_trips() {
    let dir = TempDir::new().unwrap();
    write_image(dir.path(), "a.pgm", 4, 32);
    let enc = sne(&["encode", "a.pgm", "-o", "a.sneq", "--quality", "0.5"], dir.path());
    assert!(enc.status.success(), "{}", stderr(&enc));
    assert!(stdout(&enc).starts_with("bpp="));
    let dec = sne(&["decode-baseline", "a.sneq", "-o", "a_hat.pgm"], dir.path());
    assert!(dec.status.success(), "{}", stderr(&dec));
    let ev = sne(&["eval", "a.pgm", "a_hat.pgm", "--rep", "a.sneq"], dir.path());
    let text = stdout(&ev);
    let psnr: f64 = text.lines().find_map(|l| l.strip_prefix("psnr=")).unwrap().parse().unwrap();
    assert!(psnr > 20.0 && psnr < 99.0, "{text}");
    assert!(text.contains("bpp="));
}

#[test]
fn invalid_quality_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    write_image(dir.path(), "a.pgm", 4, 16);
    let out = sne(&["encode", "a.pgm", "-o", "a.sneq", "--quality", "3"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn training_is_reproducible_and_feeds_decode() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    write_image(d, "a.pgm", 1, 16);
    write_image(d, "b.pgm", 2, 16);
    write_image(d, "c.pgm", 3, 16);
    fs::write(d.join("run.cfg"), TINY_RUN).unwrap();
    for tag in ["1", "2"] {
        let out = sne(
            &[
                "train",
                "--config",
                "run.cfg",
                "--seed",
                "7",
                "--checkpoint",
                &format!("m{tag}.snec"),
                "--log",
                &format!("l{tag}.csv"),
            ],
            d,
        );
        assert!(out.status.success(), "{}", stderr(&out));
    }
    assert_eq!(fs::read(d.join("m1.snec")).unwrap(), fs::read(d.join("m2.snec")).unwrap());
    let log = fs::read_to_string(d.join("l1.csv")).unwrap();
    assert_eq!(log, fs::read_to_string(d.join("l2.csv")).unwrap());
    assert_eq!(log.lines().count(), 4);
    assert!(log.starts_with("epoch,channel,K,sigma2,lr,mode,train_loss,val_psnr"));

    assert!(sne(&["encode", "c.pgm", "-o", "c.sneq", "--quality", "0.5", "--block-edge", "4"], d).status.success());
    let dec = sne(&["decode", "c.sneq", "--checkpoint", "m1.snec", "-o", "c_hat.pgm", "-k", "3"], d);
    assert!(dec.status.success(), "{}", stderr(&dec));
    let sweep = sne(&["sweep-k", "c.sneq", "--reference", "c.pgm", "--checkpoint", "m1.snec", "-k", "1,2,3"], d);
    assert!(sweep.status.success(), "{}", stderr(&sweep));
    let table = stdout(&sweep);
    assert!(table.contains("K = 3") && table.contains("PSNR"), "{table}");
}

#[test]
fn decode_with_incomplete_checkpoint_fails_cleanly() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    write_image(d, "a.pgm", 5, 16);
    assert!(sne(&["encode", "a.pgm", "-o", "a.sneq"], d).status.success());
    let cfg = sne_core::ModelConfig { state_dim: 4, patch_edge: 8, ..sne_core::ModelConfig::default() };
    let full = sne_core::SneParams::init(cfg.clone(), &mut RngStream::new(1), 0.05).unwrap();
    let mut tensors = full.tensors().clone();
    let victim = tensors.keys().find(|n| n.starts_with("src.")).cloned().unwrap();
    tensors.remove(&victim);
    let partial = sne_core::SneParams::from_tensors(cfg, tensors).unwrap();
    let bytes = sne_core::save_checkpoint(&partial);
    fs::write(d.join("bad.snec"), &bytes).unwrap();
    let out = sne(&["decode", "a.sneq", "--checkpoint", "bad.snec", "-o", "x.pgm"], d);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    assert!(stderr(&out).to_lowercase().contains("checkpoint"), "{}", stderr(&out));
}
