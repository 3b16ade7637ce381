use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cli(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sparse-coders"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = cli(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> (i32, String) {
    let out = cli(dir, args);
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn small_dataset(dir: &Path, mode: &str) {
    ok(
        dir,
        &[
            "datagen", "--out", "d", "--seed", "3", "--m_true=32", "--d_in=8", "--k_true=2",
            "--count=2000", &format!("--mode={mode}"),
        ],
    );
}

const TRAIN: [&str; 6] = [
    "--data_dir=d",
    "--n_latents=32",
    "--k=4",
    "--steps=60",
    "--batch_size=64",
    "--log_every=3",
];

fn train(dir: &Path, out: &str, extra: &[&str]) {
    let mut args = vec!["train", "--out", out];
    args.extend(TRAIN);
    args.extend(extra);
    ok(dir, &args);
}

#[test]
fn config_file_with_comments_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("gen.cfg");
    fs::write(
        &cfg,
        "# small problem\nm_true = 32\nd_in=8  # inline\nk_true=2\ncount=1000\n\n",
    )
    .unwrap();
    ok(dir.path(), &["datagen", "gen.cfg", "--out", "a"]);
    ok(dir.path(), &["datagen", "gen.cfg", "--out", "b", "--count=500"]);
    let a = fs::read_to_string(dir.path().join("a/dataset.txt")).unwrap();
    let b = fs::read_to_string(dir.path().join("b/dataset.txt")).unwrap();
    assert!(a.contains("tokens=1000"), "{a}");
    assert!(b.contains("tokens=500"), "{b}");
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("bad.cfg"), "m_true=32\nthis line has no equals\n").unwrap();
    fs::write(p.join("dup.cfg"), "count=10\ncount=20\n").unwrap();

    let (c, err) = code(p, &["datagen", "bad.cfg"]);
    assert_eq!(c, 2);
    assert!(err.contains("bad.cfg:2"), "{err}");
    assert_eq!(code(p, &["datagen", "dup.cfg"]).0, 2);
    let (c, err) = code(p, &["datagen", "--no_such_key=1"]);
    assert_eq!(c, 2);
    assert!(err.contains("no_such_key"), "{err}");
    assert_eq!(code(p, &["datagen", "--count=0"]).0, 2);
    assert_eq!(code(p, &["datagen", "--count=many"]).0, 2);
    assert_eq!(code(p, &["frobnicate"]).0, 2);
    assert_eq!(code(p, &["train", "--synthetic=true", "--data_dir=x"]).0, 2);
    assert_eq!(code(p, &["compare", "only_one.txt"]).0, 2);
}

#[test]
fn io_and_mismatch_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    small_dataset(p, "sae");
    assert_eq!(code(p, &["train", "--data_dir=missing"]).0, 3);
    assert_eq!(code(p, &["eval", "--checkpoint=none.sbck", "--data_dir=d"]).0, 3);
    assert_eq!(code(p, &["compare", "x.txt", "y.txt"]).0, 3);

    // a transcoder checkpoint scored on SAE shards of another width
    fs::create_dir(p.join("t")).unwrap();
    ok(
        &p.join("t"),
        &["datagen", "--out", "d", "--mode=transcoder", "--m_true=32", "--d_in=6", "--k_true=2", "--count=500"],
    );
    ok(
        &p.join("t"),
        &["train", "--out", "r", "--data_dir=d", "--kind=transcoder", "--n_latents=16", "--k=2", "--steps=5", "--batch_size=32"],
    );
    let (c, err) = code(p, &["eval", "--checkpoint=t/r/checkpoint.sbck", "--data_dir=d"]);
    assert_eq!(c, 3, "{err}");
}

#[test]
fn numeric_blowup_exits_4_with_diagnostic_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    small_dataset(p, "sae");
    let (c, err) = code(p, &["train", "--out", "r", "--data_dir=d", "--lr=1e30", "--steps=20"]);
    assert_eq!(c, 4, "{err}");
    assert!(p.join("r/diagnostic.sbck").exists());
}

#[test]
fn resume_continues_from_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    small_dataset(p, "sae");
    train(p, "a", &[]);
    train(p, "b", &["--resume=a/checkpoint_step00000030.sbck"]);

    let log = |run: &str| -> Vec<String> {
        fs::read_to_string(p.join(run).join("train_log.csv"))
            .unwrap()
            .lines()
            .skip(1)
            .map(String::from)
            .collect()
    };
    let (full, resumed) = (log("a"), log("b"));
    assert!(resumed[0].starts_with("31,"), "{}", resumed[0]);
    for row in &resumed[1..] {
        assert!(full.contains(row), "{row} not in the uninterrupted log");
    }
    assert_eq!(
        fs::read(p.join("a/checkpoint.sbck")).unwrap(),
        fs::read(p.join("b/checkpoint.sbck")).unwrap()
    );
    assert_eq!(code(p, &["train", "--data_dir=d", "--k=2,4", "--resume=a/checkpoint.sbck"]).0, 2);
}

#[test]
fn k_sweep_writes_one_run_per_k() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    small_dataset(p, "sae");
    ok(
        p,
        &["train", "--out", "s", "--data_dir=d", "--n_latents=32", "--k=2,4", "--steps=10", "--batch_size=32"],
    );
    for k in [2, 4] {
        assert!(p.join(format!("s/k{k}/checkpoint.sbck")).exists());
        assert!(p.join(format!("s/k{k}/train_log.csv")).exists());
    }
}

#[test]
fn compare_with_itself_has_zero_deltas() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    small_dataset(p, "transcoder");
    train(p, "r", &["--kind=skip_transcoder", "--binary=true"]);
    ok(
        p,
        &["eval", "--out", "e", "--checkpoint=r/checkpoint.sbck", "--data_dir=d", "--readout_tokens=1000"],
    );
    let summary = fs::read_to_string(p.join("e/summary.txt")).unwrap();
    for key in ["variant=", "fvu=", "f1_weighted=", "ultra_high_count=", "loss_increase="] {
        assert!(summary.contains(key), "missing {key} in {summary}");
    }
    ok(p, &["compare", "--out", "c", "e/summary.txt", "e/summary.txt"]);
    let csv = fs::read_to_string(p.join("c/compare.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header, ["metric", "run", "variant", "k", "value", "delta"]);
    let delta = header.iter().position(|h| *h == "delta").unwrap();
    let mut rows = 0;
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        let d = cells[delta];
        assert!(d.is_empty() || d.parse::<f64>().unwrap() == 0.0, "{line}");
        rows += 1;
    }
    assert!(rows > 0);
}

#[test]
fn ablate_writes_binned_curve() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    small_dataset(p, "transcoder");
    train(p, "r", &["--kind=skip_transcoder"]);
    ok(p, &["eval", "--out", "e", "--checkpoint=r/checkpoint.sbck", "--data_dir=d"]);
    ok(
        p,
        &["ablate", "--out", "a", "--checkpoint=r/checkpoint.sbck", "--data_dir=d", "--scores=e/f1.csv", "--n_bins=3", "--downstream=mse"],
    );
    let csv = fs::read_to_string(p.join("a/ablation.csv")).unwrap();
    assert!(csv.starts_with('#'));
    assert!(csv.contains("bin_index,score_lo,score_hi,fire_count,delta_loss"));
}
