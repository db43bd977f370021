//! End-to-end tests of the command-line interface, including the exit-code
//! contract: 0 success, 1 I/O|state, 2 usage, 3 numerical.

use std::path::Path;
use std::process::{Command, Output};

fn densemapnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_densemapnet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn assert_code(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout:\n{}\nstderr:\n{}",
        stdout(out),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().display().to_string();
                files.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn synth_writes_deterministic_datasets() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        let out = densemapnet(&[
            "synth", "--count", "3", "--height", "32", "--width", "48", "--dmax", "8", "--seed",
            "1", "--out",
            dir.to_str().unwrap(),
        ]);
        assert_code(&out, 0);
        assert!(stdout(&out).contains("3 samples"));
    }
    assert_eq!(read_tree(&a), read_tree(&b), "synth output not byte-identical");
    assert!(a.join("meta.cfg").is_file());
    assert!(a.join("left/0000.png").is_file());
    assert!(a.join("disp/0002.pfm").is_file());
}

#[test]
fn synth_rejects_dmax_at_width() {
    let tmp = tempfile::tempdir().unwrap();
    let out = densemapnet(&[
        "synth", "--count", "1", "--height", "32", "--width", "128", "--dmax", "128", "--seed",
        "1", "--out",
        tmp.path().join("x").to_str().unwrap(),
    ]);
    assert_code(&out, 2);
}

#[test]
fn params_reports_table_and_totals() {
    let out = densemapnet(&["params", "--channels", "3"]);
    assert_code(&out, 0);
    let text = stdout(&out);
    assert!(text.contains("layer=Conv2D_1 kind=conv"));
    assert!(text.contains("conv_layers=18 disparity_conv_layers=13"));
    let total: usize = text
        .lines()
        .find_map(|l| l.strip_prefix("total_trainable="))
        .and_then(|rest| rest.split_whitespace().next())
        .and_then(|v| v.parse().ok())
        .expect("total_trainable line");
    assert!((285_000..=295_000).contains(&total), "total {total}");
}

#[test]
fn train_eval_predict_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    let out = densemapnet(&[
        "synth", "--count", "4", "--height", "32", "--width", "48", "--dmax", "8", "--seed", "2",
        "--out",
        ds.to_str().unwrap(),
    ]);
    assert_code(&out, 0);

    // two identical short train runs: identical stdout and checkpoints
    let ckpt_a = tmp.path().join("a.dmnw");
    let ckpt_b = tmp.path().join("b.dmnw");
    let train = |ckpt: &Path| {
        densemapnet(&[
            "train",
            "--dataset-dir",
            ds.to_str().unwrap(),
            "--epochs",
            "3",
            "--seed",
            "5",
            "--checkpoint-path",
            ckpt.to_str().unwrap(),
            "--no-timing",
        ])
    };
    let run_a = train(&ckpt_a);
    assert_code(&run_a, 0);
    let run_b = train(&ckpt_b);
    assert_code(&run_b, 0);
    let text_a = stdout(&run_a);
    assert!(text_a.contains("epoch=1 loss="), "{text_a}");
    assert!(!text_a.contains("seconds="), "--no-timing must strip timing");
    let text_b = stdout(&run_b)
        .replace(ckpt_b.to_str().unwrap(), ckpt_a.to_str().unwrap());
    assert_eq!(text_a, text_b, "train stdout differs between runs");
    assert_eq!(
        std::fs::read(&ckpt_a).unwrap(),
        std::fs::read(&ckpt_b).unwrap(),
        "checkpoints differ"
    );

    // eval with the trained checkpoint
    let eval_dir = tmp.path().join("evalout");
    let out = densemapnet(&[
        "eval",
        "--dataset-dir",
        ds.to_str().unwrap(),
        "--checkpoint-path",
        ckpt_a.to_str().unwrap(),
        "--output-dir",
        eval_dir.to_str().unwrap(),
        "--no-timing",
    ]);
    assert_code(&out, 0);
    let text = stdout(&out);
    assert!(text.contains("epe="), "{text}");
    assert!(text.contains("samples_evaluated=4"));
    assert!(!text.contains("wall_seconds"), "timing not stripped");
    assert!(eval_dir.join("eval.txt").is_file());

    // eval with a missing checkpoint is a state error
    let out = densemapnet(&[
        "eval",
        "--dataset-dir",
        ds.to_str().unwrap(),
        "--checkpoint-path",
        tmp.path().join("nope.dmnw").to_str().unwrap(),
    ]);
    assert_code(&out, 1);

    // predict on one stereo pair from the dataset
    let pred_dir = tmp.path().join("pred");
    let out = densemapnet(&[
        "predict",
        "--left",
        ds.join("left/0000.png").to_str().unwrap(),
        "--right",
        ds.join("right/0000.png").to_str().unwrap(),
        "--checkpoint",
        ckpt_a.to_str().unwrap(),
        "--out",
        pred_dir.to_str().unwrap(),
        "--dmax",
        "8",
    ]);
    assert_code(&out, 0);
    assert!(pred_dir.join("disparity_gray16.png").is_file());
    assert!(pred_dir.join("disparity_color.png").is_file());

    // predict with identical left/right images still produces a map
    let same_dir = tmp.path().join("pred_same");
    let out = densemapnet(&[
        "predict",
        "--left",
        ds.join("left/0001.png").to_str().unwrap(),
        "--right",
        ds.join("left/0001.png").to_str().unwrap(),
        "--checkpoint",
        ckpt_a.to_str().unwrap(),
        "--out",
        same_dir.to_str().unwrap(),
        "--dmax",
        "8",
    ]);
    assert_code(&out, 0);
    assert!(same_dir.join("disparity_gray16.png").is_file());
}

#[test]
fn config_file_with_flag_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    let out = densemapnet(&[
        "synth", "--count", "2", "--height", "32", "--width", "48", "--dmax", "8", "--seed", "3",
        "--out",
        ds.to_str().unwrap(),
    ]);
    assert_code(&out, 0);

    let cfg = tmp.path().join("run.cfg");
    std::fs::write(
        &cfg,
        format!(
            "dataset_dir={}\nepochs=1\nseed=4\ncheckpoint_path={}\n",
            ds.display(),
            tmp.path().join("cfg.dmnw").display()
        ),
    )
    .unwrap();
    let out = densemapnet(&["train", "--config", cfg.to_str().unwrap(), "--no-timing"]);
    assert_code(&out, 0);
    assert!(stdout(&out).contains("epoch=1"));
    assert!(!stdout(&out).contains("epoch=2"), "config epochs=1 respected");

    // flag overrides the file value
    let out = densemapnet(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--epochs",
        "2",
        "--no-timing",
    ]);
    assert_code(&out, 0);
    assert!(stdout(&out).contains("epoch=2"));

    // unknown keys are usage errors
    std::fs::write(&cfg, "bogus_key=1\n").unwrap();
    let out = densemapnet(&["train", "--config", cfg.to_str().unwrap()]);
    assert_code(&out, 2);
}

#[test]
fn usage_errors_exit_2() {
    // unknown subcommand (clap)
    let out = densemapnet(&["frobnicate"]);
    assert_code(&out, 2);
    // missing dataset_dir
    let out = densemapnet(&["train"]);
    assert_code(&out, 2);
    // bad split value
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    densemapnet(&[
        "synth", "--count", "2", "--height", "32", "--width", "48", "--dmax", "8", "--seed", "3",
        "--out",
        ds.to_str().unwrap(),
    ]);
    let out = densemapnet(&[
        "train",
        "--dataset-dir",
        ds.to_str().unwrap(),
        "--split",
        "half",
    ]);
    assert_code(&out, 2);
    // missing dataset directory is a state error, not usage
    let out = densemapnet(&["train", "--dataset-dir", "/definitely/not/here"]);
    assert_code(&out, 1);
}

#[test]
fn bench_small_is_deterministic() {
    let out = densemapnet(&[
        "bench",
        "--height",
        "32",
        "--width",
        "32",
        "--iterations",
        "10",
        "--no-timing",
    ]);
    assert_code(&out, 0);
    let text = stdout(&out);
    assert!(text.contains("deterministic=true"), "{text}");
    assert!(text.contains("checksum=0x"));
    assert!(
        !text.contains("images_per_second"),
        "--no-timing must strip timing"
    );
    // iterations below the contract are a usage error
    let out = densemapnet(&["bench", "--iterations", "5"]);
    assert_code(&out, 2);
}
