use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

fn ppn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ppn"))
        .args(args)
        .env_remove("PPN_THREADS")
        .output()
        .expect("spawn ppn")
}

fn ok(args: &[&str]) -> String {
    let out = ppn(args);
    assert!(
        out.status.success(),
        "ppn {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    ppn(args).status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

/// Metric value from a `metric\tvalue` report.
fn metric(tsv: &str, name: &str) -> f64 {
    tsv.lines()
        .find_map(|l| l.strip_prefix(&format!("{name}\t")))
        .unwrap_or_else(|| panic!("no {name} in report"))
        .parse()
        .unwrap()
}

struct Fixture {
    _tmp: tempfile::TempDir,
    bundle: std::path::PathBuf,
    ckpt: std::path::PathBuf,
}

fn fixture(epochs: &str) -> Fixture {
    let tmp = tempfile::tempdir().unwrap();
    let bundle = tmp.path().join("bundle");
    let ckpt = tmp.path().join("ckpt");
    ok(&["synth", "--out", s(&bundle), "--seed", "2"]);
    ok(&["train", "--bundle", s(&bundle), "--out", s(&ckpt), "--epochs", epochs, "--batch-size", "16"]);
    Fixture {
        _tmp: tmp,
        bundle,
        ckpt,
    }
}

#[test]
fn synth_is_reproducible_and_respects_dims() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    ok(&["synth", "--out", s(&a), "--seed", "9", "--attributes", "12", "--regions", "3"]);
    ok(&["synth", "--out", s(&b), "--seed", "9", "--attributes", "12", "--regions", "3"]);
    ok(&["synth", "--out", s(&c), "--seed", "10", "--attributes", "12", "--regions", "3"]);
    assert_eq!(dir_bytes(&a), dir_bytes(&b));
    assert_ne!(dir_bytes(&a), dir_bytes(&c));
    let manifest = fs::read_to_string(a.join("manifest.txt")).unwrap();
    assert!(manifest.starts_with("PPNB 1\n"));
    let info = ok(&["inspect", s(&a)]);
    assert!(info.contains("A=12") && info.contains("R=3"), "{info}");
}

#[test]
fn config_file_is_layered_under_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "# test config\nsynth.attributes = 11\nsynth.regions = 5\n").unwrap();
    let out = tmp.path().join("b");
    ok(&["--config", s(&cfg), "synth", "--out", s(&out), "--regions", "2"]);
    let info = ok(&["inspect", s(&out)]);
    assert!(info.contains("A=11") && info.contains("R=2"), "{info}");
}

#[test]
fn train_writes_checkpoints_and_log_quickly() {
    let tmp = tempfile::tempdir().unwrap();
    let bundle = tmp.path().join("bundle");
    ok(&["synth", "--out", s(&bundle)]);
    let out = tmp.path().join("run");
    let t = Instant::now();
    ok(&["train", "--bundle", s(&bundle), "--out", s(&out), "--epochs", "1"]);
    assert!(t.elapsed().as_secs_f64() < 10.0);
    let log = fs::read_to_string(out.join("train_log.tsv")).unwrap();
    assert_eq!(log.lines().count(), 2);
    assert!(log.starts_with("epoch\tloss_total"));
    assert!(out.join("last").join("manifest.txt").exists());
    assert!(fs::read_to_string(out.join("manifest.txt")).unwrap().starts_with("PPNC 1\n"));
}

#[test]
fn zero_epochs_gives_initial_checkpoint() {
    let f = fixture("0");
    let info = ok(&["inspect", s(&f.ckpt)]);
    assert!(info.contains("meta epoch 0\n"), "{info}");
    let log = fs::read_to_string(f.ckpt.join("train_log.tsv")).unwrap();
    assert_eq!(log.lines().count(), 1);
}

#[test]
fn eval_reports_and_warnings() {
    let f = fixture("5");
    let dir = f.ckpt.parent().unwrap();
    let report = dir.join("report.tsv");
    ok(&["eval", "--bundle", s(&f.bundle), "--checkpoint", s(&f.ckpt), "--out", s(&report)]);
    let tsv = fs::read_to_string(&report).unwrap();
    assert!(tsv.contains("multiplicative z=1e8"), "{tsv}");
    let (u, s_acc, h) = (metric(&tsv, "u"), metric(&tsv, "s"), metric(&tsv, "h"));
    assert_eq!(h, ppn_h(u, s_acc));

    let zsl = ppn(&["eval", "--bundle", s(&f.bundle), "--checkpoint", s(&f.ckpt), "--mode", "zsl", "--z", "10"]);
    assert!(zsl.status.success());
    assert!(String::from_utf8_lossy(&zsl.stderr).contains("ignored in zsl mode"));
    assert!(String::from_utf8_lossy(&zsl.stdout).contains("ZSL  T1"));

    // Existing output without --force is refused.
    let again = ["eval", "--bundle", s(&f.bundle), "--checkpoint", s(&f.ckpt), "--out", s(&report)];
    assert_eq!(code(&again), 1);
    let mut forced = again.to_vec();
    forced.push("--force");
    ok(&forced);
}

fn ppn_h(u: f64, s: f64) -> f64 {
    if u + s == 0.0 {
        0.0
    } else {
        2.0 * u * s / (u + s)
    }
}

#[test]
fn one_point_sweep_matches_eval() {
    let f = fixture("5");
    let (b, c) = (s(&f.bundle), s(&f.ckpt));
    let sweep = ok(&["sweep", "--bundle", b, "--checkpoint", c, "--grid", "1000"]);
    let row: Vec<f64> = sweep.lines().nth(1).unwrap().split('\t').map(|x| x.parse().unwrap()).collect();
    let dir = f.ckpt.parent().unwrap();
    let report = dir.join("r.tsv");
    ok(&["eval", "--bundle", b, "--checkpoint", c, "--z", "1000", "--out", s(&report)]);
    let tsv = fs::read_to_string(&report).unwrap();
    assert_eq!(row, vec![1000.0, metric(&tsv, "u"), metric(&tsv, "s"), metric(&tsv, "h")]);

    let full = ok(&["sweep", "--bundle", b, "--checkpoint", c]);
    assert!(full.starts_with("z\tu\ts\th\n"));
    assert_eq!(full.lines().count(), 1 + 41);
    let add = ok(&["sweep", "--bundle", b, "--checkpoint", c, "--calibration", "additive", "--grid", "0,0.5,0.9"]);
    assert!(add.starts_with("gamma\t"));
    assert_eq!(add.lines().count(), 4);
    assert_eq!(code(&["sweep", "--bundle", b, "--checkpoint", c, "--grid", "10,1"]), 1);
}

#[test]
fn gradcheck_passes_and_negative_control_fails() {
    let out = ok(&["gradcheck", "--instances", "2"]);
    for p in ["alpha_weight", "alpha_bias", "w", "beta_weight", "beta_bias"] {
        assert!(out.lines().any(|l| l.starts_with(&format!("{p}\t"))), "{p} missing");
    }
    assert_eq!(out.matches("result: PASS").count(), 2);
    let bad = ppn(&["gradcheck", "--corrupt"]);
    assert_eq!(bad.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&bad.stdout).contains("result: FAIL"));
}

#[test]
fn exit_codes_follow_error_classes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["frobnicate"]), 1);
    assert_eq!(code(&["eval"]), 1);
    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, "train.epoch = 3\n").unwrap();
    let out = ppn(&["--config", s(&cfg), "synth", "--out", s(&tmp.path().join("x"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown config key"));
    assert_eq!(code(&["synth", "--out", s(&tmp.path().join("y")), "--noise", "-1"]), 1);
    let missing = tmp.path().join("missing");
    assert_eq!(code(&["eval", "--bundle", s(&missing), "--checkpoint", s(&missing)]), 2);

    let garbage = tmp.path().join("garbage");
    fs::create_dir(&garbage).unwrap();
    fs::write(garbage.join("manifest.txt"), "NOPE 1\n").unwrap();
    assert_eq!(code(&["inspect", s(&garbage)]), 2);

    let bundle = tmp.path().join("b");
    ok(&["synth", "--out", s(&bundle), "--seen-classes", "6", "--unseen-classes", "3", "--attributes", "9"]);
    let run = tmp.path().join("run");
    let out = ppn(&["train", "--bundle", s(&bundle), "--out", s(&run), "--epochs", "3", "--lr", "1e308"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(run.join("last_good").join("manifest.txt").exists());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(stderr.lines().filter(|l| l.starts_with("error:")).count(), 1, "{stderr}");
}
