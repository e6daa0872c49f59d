//! End-to-end tests running the compiled binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use melc::data::Dataset;
use melc::synth::{gaussian_pair, xor_gaussians};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_melc"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "melc {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

fn write_libsvm(ds: &Dataset, path: &Path) {
    let mut text = String::new();
    for i in 0..ds.len() {
        text.push_str(if ds.label(i) == 1 { "+1" } else { "-1" });
        for (j, x) in ds.point(i).iter().enumerate() {
            text.push_str(&format!(" {}:{}", j + 1, x));
        }
        text.push('\n');
    }
    fs::write(path, text).expect("write dataset");
}

fn xor_file(dir: &Path) -> PathBuf {
    let path = dir.join("xor.libsvm");
    write_libsvm(&xor_gaussians(100, 0.3, 4).unwrap(), &path);
    path
}

#[test]
fn train_reports_divergence_and_threshold_count() {
    let dir = tempfile::tempdir().unwrap();
    let data = xor_file(dir.path());
    let model = dir.path().join("m.txt");
    let out = run_ok(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--gamma",
        "1",
        "--restarts",
        "16",
        "--seed",
        "7",
        "--out",
        model.to_str().unwrap(),
    ]);
    let text = stdout(&out);
    let mut lines = text.lines();
    let dcs_line = lines.next().unwrap();
    let k_line = lines.next().unwrap();
    assert!(dcs_line.starts_with("dcs\t"), "{dcs_line}");
    let dcs: f64 = dcs_line.split('\t').nth(1).unwrap().parse().unwrap();
    assert!(dcs > 0.0);
    let k: usize = k_line.strip_prefix("k\t").unwrap().parse().unwrap();
    assert!(k >= 2, "XOR projection needs at least two thresholds, got {k}");
    let saved = fs::read_to_string(&model).unwrap();
    assert!(saved.starts_with("melc-model v1\n"));
}

#[test]
fn predict_emits_label_and_likelihood_per_row() {
    let dir = tempfile::tempdir().unwrap();
    let data = xor_file(dir.path());
    let model = dir.path().join("m.txt");
    run_ok(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--seed",
        "7",
        "--out",
        model.to_str().unwrap(),
    ]);
    let out = run_ok(&[
        "predict",
        "--model",
        model.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
    ]);
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 400);
    let mut correct = 0;
    for (i, line) in lines.iter().enumerate() {
        let (label, likelihood) = line.split_once('\t').expect("tab-separated");
        let label: i8 = label.parse().unwrap();
        let likelihood: f64 = likelihood.parse().unwrap();
        assert!(label == 1 || label == -1);
        assert!((0.0..=1.0).contains(&likelihood));
        assert_eq!(label == 1, likelihood >= 0.5, "line {i}");
        let expected = if i < 200 { 1 } else { -1 };
        correct += usize::from(label == expected);
    }
    assert!(correct >= 380, "only {correct}/400 training points correct");
}

#[test]
fn predict_is_deterministic_on_1000_points() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.libsvm");
    write_libsvm(&gaussian_pair(4, 100, 3.0, 11).unwrap(), &train);
    let fresh = dir.path().join("fresh.libsvm");
    write_libsvm(&gaussian_pair(4, 500, 3.0, 99).unwrap(), &fresh);
    let model = dir.path().join("m.txt");
    run_ok(&[
        "train",
        "--data",
        train.to_str().unwrap(),
        "--seed",
        "2",
        "--out",
        model.to_str().unwrap(),
    ]);
    let a = run_ok(&[
        "predict",
        "--model",
        model.to_str().unwrap(),
        "--data",
        fresh.to_str().unwrap(),
    ]);
    let b = run_ok(&[
        "predict",
        "--model",
        model.to_str().unwrap(),
        "--data",
        fresh.to_str().unwrap(),
    ]);
    assert_eq!(stdout(&a).lines().count(), 1000);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn eval_tsv_shape_and_summary_decimals() {
    let dir = tempfile::tempdir().unwrap();
    let data = xor_file(dir.path());
    let out = bin()
        .args([
            "eval",
            "--data",
            data.to_str().unwrap(),
            "--folds",
            "5",
            "--gammas",
            "1,2",
            "--seed",
            "7",
            "--restarts",
            "4",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let tsv = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = tsv.lines().collect();
    assert_eq!(lines[0], "gamma\tfold\tacc\twac\tmcc\tdcs\tk");
    // 2 gammas x 5 folds data rows, 2 summary rows per gamma, chosen line
    assert_eq!(lines.len(), 1 + 10 + 4 + 1);
    assert!(lines[15].starts_with("chosen_gamma\t"));
    let summary = String::from_utf8(out.stderr).unwrap();
    for key in ["chosen_gamma\t", "mean_wac\t", "mean_mcc\t", "mean_k\t"] {
        assert!(summary.contains(key), "missing {key:?} in {summary}");
    }
    let wac_line = summary.lines().find(|l| l.starts_with("mean_wac")).unwrap();
    let decimals = wac_line.split('.').nth(1).map_or(0, str::len);
    assert_eq!(decimals, 3, "3-decimal summary, got {wac_line}");
}

#[test]
fn eval_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let data = xor_file(dir.path());
    let args = [
        "eval",
        "--data",
        data.to_str().unwrap(),
        "--folds",
        "3",
        "--gammas",
        "1",
        "--seed",
        "5",
        "--restarts",
        "2",
    ];
    let one = bin().args(args).env("MELC_THREADS", "1").output().unwrap();
    let four = bin().args(args).env("MELC_THREADS", "4").output().unwrap();
    assert!(one.status.success() && four.status.success());
    assert_eq!(one.stdout, four.stdout);
    assert_eq!(one.stderr, four.stderr);
}

#[test]
fn thresholds_prints_sorted_cut_points() {
    let dir = tempfile::tempdir().unwrap();
    let data = xor_file(dir.path());
    let model = dir.path().join("m.txt");
    run_ok(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--seed",
        "7",
        "--out",
        model.to_str().unwrap(),
    ]);
    let out = run_ok(&["thresholds", "--model", model.to_str().unwrap()]);
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    let k: usize = lines[0].strip_prefix("k\t").unwrap().parse().unwrap();
    let leftmost: i8 = lines[1].strip_prefix("leftmost\t").unwrap().parse().unwrap();
    assert!(leftmost == 1 || leftmost == -1);
    let ts: Vec<f64> = lines[2..]
        .iter()
        .map(|l| l.strip_prefix("t\t").unwrap().parse().unwrap())
        .collect();
    assert_eq!(ts.len(), k);
    assert!(ts.windows(2).all(|w| w[0] < w[1]), "unsorted {ts:?}");
}

#[test]
fn density_curve_rows_scan_the_axis() {
    let dir = tempfile::tempdir().unwrap();
    let data = xor_file(dir.path());
    let model = dir.path().join("m.txt");
    run_ok(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--seed",
        "7",
        "--out",
        model.to_str().unwrap(),
    ]);
    let out = run_ok(&[
        "density-curve",
        "--model",
        model.to_str().unwrap(),
        "--samples",
        "64",
    ]);
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "x\tkde_pos\tkde_neg");
    assert_eq!(lines.len(), 65);
    let mut prev = f64::NEG_INFINITY;
    for line in &lines[1..] {
        let cells: Vec<f64> = line.split('\t').map(|c| c.parse().unwrap()).collect();
        assert_eq!(cells.len(), 3);
        assert!(cells[0] > prev);
        assert!(cells[1] >= 0.0 && cells[2] >= 0.0);
        prev = cells[0];
    }
}

#[test]
fn gradcheck_reports_small_errors() {
    let dir = tempfile::tempdir().unwrap();
    let data = xor_file(dir.path());
    let out = run_ok(&[
        "gradcheck",
        "--data",
        data.to_str().unwrap(),
        "--trials",
        "5",
        "--seed",
        "1",
    ]);
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 6);
    for (i, line) in lines[..5].iter().enumerate() {
        assert!(line.starts_with(&format!("trial\t{i}\t")), "{line}");
    }
    let max: f64 = lines[5].strip_prefix("max\t").unwrap().parse().unwrap();
    assert!(max < 1e-5, "finite differences disagree: {max}");
}

#[test]
fn bound_matches_precomputed_values() {
    let out = run_ok(&["bound", "--n", "1000", "--dim", "10", "--k", "1"]);
    assert_eq!(stdout(&out), "bound\t0.7409073532832543\n");
    let out = run_ok(&["bound", "--n", "1000000", "--margin", "1", "--k", "1"]);
    assert_eq!(stdout(&out), "bound\t0.3842223885990387\n");
}

#[test]
fn csv_input_round_trips_through_training() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("data.csv");
    let mut text = String::from("label,f1,f2\n");
    for i in 0..20 {
        let x = i as f64 / 10.0;
        text.push_str(&format!("1,{},{}\n", 3.0 + x, 1.0 - x));
        text.push_str(&format!("-1,{},{}\n", -3.0 - x, x));
    }
    fs::write(&csv, text).unwrap();
    let model = dir.path().join("m.txt");
    run_ok(&[
        "train",
        "--data",
        csv.to_str().unwrap(),
        "--format",
        "csv",
        "--label-column",
        "label",
        "--seed",
        "1",
        "--out",
        model.to_str().unwrap(),
    ]);
    let out = run_ok(&[
        "predict",
        "--model",
        model.to_str().unwrap(),
        "--data",
        csv.to_str().unwrap(),
        "--format",
        "csv",
        "--label-column",
        "0",
    ]);
    let lines: Vec<String> = stdout(&out).lines().map(String::from).collect();
    assert_eq!(lines.len(), 40);
    for pair in lines.chunks(2) {
        assert!(pair[0].starts_with("1\t"), "{pair:?}");
        assert!(pair[1].starts_with("-1\t"), "{pair:?}");
    }
}

#[test]
fn zero_labels_accepted_only_with_flag() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("zero.libsvm");
    fs::write(&data, "+1 1:2.0\n+1 1:2.5\n0 1:-2.0\n0 1:-2.5\n").unwrap();
    let model = dir.path().join("m.txt");
    let refused = bin()
        .args([
            "train",
            "--data",
            data.to_str().unwrap(),
            "--out",
            model.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(refused.status.code(), Some(2));
    run_ok(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--zero-negative",
        "--out",
        model.to_str().unwrap(),
    ]);
}

#[test]
fn seed_vector_file_feeds_the_search() {
    let dir = tempfile::tempdir().unwrap();
    let data = xor_file(dir.path());
    let seed_file = dir.path().join("dir.txt");
    fs::write(&seed_file, "1 1\n").unwrap();
    let model = dir.path().join("m.txt");
    let out = run_ok(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--restarts",
        "0",
        "--seed-vector",
        seed_file.to_str().unwrap(),
        "--out",
        model.to_str().unwrap(),
    ]);
    let text = stdout(&out);
    let k: usize = text
        .lines()
        .nth(1)
        .unwrap()
        .strip_prefix("k\t")
        .unwrap()
        .parse()
        .unwrap();
    assert!(k >= 2);
}

#[test]
fn exit_codes_distinguish_usage_from_data_errors() {
    // unknown flag: usage
    let out = bin().args(["train", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    // missing subcommand: usage
    let out = bin().output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    // out-of-range numeric flag: usage
    let dir = tempfile::tempdir().unwrap();
    let data = xor_file(dir.path());
    let model = dir.path().join("m.txt");
    let out = bin()
        .args([
            "train",
            "--data",
            data.to_str().unwrap(),
            "--gamma",
            "0",
            "--out",
            model.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    // missing input file: data
    let out = bin()
        .args([
            "train",
            "--data",
            dir.path().join("absent.libsvm").to_str().unwrap(),
            "--out",
            model.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    // malformed model file: data
    let bad_model = dir.path().join("bad.txt");
    fs::write(&bad_model, "not a model\n").unwrap();
    let out = bin()
        .args([
            "predict",
            "--model",
            bad_model.to_str().unwrap(),
            "--data",
            data.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    // help: success
    let out = bin().args(["--help"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn thresholds_only_model_predict_refused_but_thresholds_work() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("tonly.txt");
    fs::write(
        &model,
        "melc-model v1\nd 2\ngamma 1\nv 0.6 0.8\nwidth_pos 0.5\nwidth_neg 0.5\nthresholds 2 -0.7 0.7\nleftmost +1\n",
    )
    .unwrap();
    let out = run_ok(&["thresholds", "--model", model.to_str().unwrap()]);
    let text = stdout(&out);
    assert!(text.starts_with("k\t2\nleftmost\t1\n"), "{text}");
    let data = xor_file(dir.path());
    let refused = bin()
        .args([
            "predict",
            "--model",
            model.to_str().unwrap(),
            "--data",
            data.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(refused.status.code(), Some(2));
    let err = String::from_utf8(refused.stderr).unwrap();
    assert!(err.contains("projection"), "{err}");
}

#[test]
fn narrower_prediction_rows_are_zero_padded() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.libsvm");
    // second feature is informative, first is noise around zero
    fs::write(
        &train,
        "+1 1:0.1 2:3.0\n+1 1:-0.1 2:3.5\n+1 1:0.0 2:2.8\n-1 1:0.1 2:-3.0\n-1 1:-0.1 2:-3.2\n-1 1:0.0 2:-2.9\n",
    )
    .unwrap();
    let model = dir.path().join("m.txt");
    run_ok(&[
        "train",
        "--data",
        train.to_str().unwrap(),
        "--out",
        model.to_str().unwrap(),
    ]);
    // rows mentioning only feature 1 parse as one-dimensional
    let narrow = dir.path().join("narrow.libsvm");
    fs::write(&narrow, "+1 1:0.05\n-1 1:-0.05\n").unwrap();
    let out = run_ok(&[
        "predict",
        "--model",
        model.to_str().unwrap(),
        "--data",
        narrow.to_str().unwrap(),
    ]);
    assert_eq!(stdout(&out).lines().count(), 2);
}
