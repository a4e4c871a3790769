use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use imvc::cli::RunReport;
use imvc::dataio::load_dataset_at;
use imvc::trainer::TrainConfig;

fn imvc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_imvc")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = imvc(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn stderr_line(out: &Output) -> String {
    let text = String::from_utf8_lossy(&out.stderr).to_string();
    assert_eq!(text.trim_end().lines().count(), 1, "{text}");
    text.trim_end().to_string()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, n: usize, views: usize, seed: u64) {
    ok(&[
        "synth", "--n", &n.to_string(), "--k", "3", "--views", &views.to_string(), "--view-dim", "6",
        "--latent-dim", "4", "--seed", &seed.to_string(), "--out", p(dir),
    ]);
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn synth_is_loadable_and_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        ok(&["synth", "--n", "1000", "--k", "5", "--views", "3", "--seed", "7", "--out", p(dir)]);
    }
    let data = load_dataset_at(&a).unwrap();
    assert_eq!((data.n_samples(), data.n_views(), data.n_classes()), (1000, 3, Some(5)));
    assert_eq!(files(&a), files(&b));
}

#[test]
fn synth_rejects_zero_clusters() {
    let tmp = tempfile::tempdir().unwrap();
    let out = imvc(&["synth", "--k", "0", "--out", p(tmp.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_line(&out).starts_with("error[config]:"));
}

#[test]
fn mask_counts_and_bounds() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    ok(&["synth", "--n", "1000", "--k", "5", "--views", "3", "--out", p(&data)]);

    let half = tmp.path().join("half");
    ok(&["mask", "--data", p(&data), "--missing-rate", "0.5", "--seed", "1", "--out", p(&half)]);
    let masked = load_dataset_at(&half).unwrap();
    assert_eq!(masked.missing_count(), 1500);
    assert!((0..1000).all(|i| masked.mask_row(i).iter().any(|&w| w == 1)));

    let none = tmp.path().join("none");
    ok(&["mask", "--data", p(&data), "--missing-rate", "0", "--out", p(&none)]);
    assert!(load_dataset_at(&none).unwrap().mask().iter().all(|&w| w == 1));

    let two = tmp.path().join("two");
    synth(&two, 50, 2, 0);
    let out = imvc(&["mask", "--data", p(&two), "--missing-rate", "0.9", "--out", p(&tmp.path().join("x"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_line(&out).starts_with("error[validation]:"));
}

fn train_args<'a>(data: &'a str, out: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut args = vec![
        "train", "--data", data, "--out", out, "--latent-dim", "4", "--flow-layers", "2", "--encoder-hidden", "16",
        "--coupling-hidden", "8", "--epochs-stage1", "3", "--epochs-stage2", "2", "--epochs-stage3", "2",
        "--batch-stage12", "32", "--batch-stage3", "64", "--seed", "3",
    ];
    args.extend_from_slice(extra);
    args
}

#[test]
fn train_writes_artifacts_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let (full, data) = (tmp.path().join("full"), tmp.path().join("data"));
    synth(&full, 90, 3, 1);
    ok(&["mask", "--data", p(&full), "--missing-rate", "0.5", "--out", p(&data)]);

    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&train_args(p(&data), p(&a), &[]));
    ok(&train_args(p(&data), p(&b), &[]));
    for name in ["report.json", "curves.csv", "labels_pred.csv", "embedding.csv"] {
        assert!(a.join(name).exists(), "{name}");
    }
    for s in 1..=3 {
        assert!(a.join(format!("checkpoint_stage{s}.bin")).exists());
    }
    assert_eq!(fs::read(a.join("labels_pred.csv")).unwrap(), fs::read(b.join("labels_pred.csv")).unwrap());

    let report: RunReport = serde_json::from_slice(&fs::read(a.join("report.json")).unwrap()).unwrap();
    let again: RunReport = serde_json::from_slice(&fs::read(b.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.metrics, again.metrics);
    assert!(report.metrics.is_some());
    assert_eq!(report.variant, "NAC + PC");
    assert_eq!(report.recovered_slots, 135);
    assert_eq!(report.stage_seconds.len(), 3);

    let header = fs::read_to_string(a.join("curves.csv")).unwrap();
    assert_eq!(
        header.lines().next().unwrap(),
        "stage,epoch,loss_total,loss_rec,loss_flow_nll,loss_dtl,loss_nac,loss_pc"
    );
    assert_eq!(header.lines().count(), 1 + 3 + 2 + 2);
}

#[test]
fn ablation_flags_set_variant_and_resume_matches() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, 60, 2, 2);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&train_args(p(&data), p(&a), &["--alpha", "0", "--beta", "0"]));
    let report: RunReport = serde_json::from_slice(&fs::read(a.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.variant, "None");

    let ckpt = a.join("checkpoint_stage2.bin");
    ok(&train_args(p(&data), p(&b), &["--alpha", "0", "--beta", "0", "--resume", p(&ckpt)]));
    assert_eq!(fs::read(a.join("labels_pred.csv")).unwrap(), fs::read(b.join("labels_pred.csv")).unwrap());
    assert_eq!(fs::read(a.join("curves.csv")).unwrap(), fs::read(b.join("curves.csv")).unwrap());

    let out = imvc(&train_args(p(&data), p(&b), &["--resume", p(&ckpt)]));
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_line(&out).starts_with("error[checkpoint]:"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, 40, 2, 4);
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"alpha": 0.0, "beta": 0.5, "gamma": 0.2}"#).unwrap();
    let out = tmp.path().join("out");
    ok(&train_args(p(&data), p(&out), &["--config", p(&cfg), "--beta", "0"]));
    let report: RunReport = serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!((report.config.alpha, report.config.beta, report.config.gamma), (0.0, 0.0, 0.2));

    fs::write(&cfg, r#"{"alpah": 1.0}"#).unwrap();
    let bad = imvc(&train_args(p(&data), p(&out), &["--config", p(&cfg)]));
    assert!(stderr_line(&bad).starts_with("error[config]:"));
}

#[test]
fn eval_scores_label_files() {
    let tmp = tempfile::tempdir().unwrap();
    let (pred, truth, short) = (tmp.path().join("p.csv"), tmp.path().join("t.csv"), tmp.path().join("s.csv"));
    fs::write(&pred, "0\n0\n1\n1\n").unwrap();
    fs::write(&truth, "0\n1\n1\n1\n").unwrap();
    fs::write(&short, "0\n1\n").unwrap();

    assert_eq!(
        ok(&["eval", "--pred", p(&pred), "--truth", p(&pred)]).trim(),
        r#"{"acc":1.000000,"nmi":1.000000,"ari":1.000000}"#
    );
    let out = ok(&["eval", "--pred", p(&pred), "--truth", p(&truth)]);
    assert!(out.starts_with(r#"{"acc":0.750000,"#), "{out}");

    let mismatch = imvc(&["eval", "--pred", p(&pred), "--truth", p(&short)]);
    assert_eq!(mismatch.status.code(), Some(1));
    assert!(stderr_line(&mismatch).starts_with("error[validation]:"));

    let gone = tmp.path().join("missing.csv");
    let missing = imvc(&["eval", "--pred", p(&gone), "--truth", p(&truth)]);
    assert_eq!(missing.status.code(), Some(1));
    let line = stderr_line(&missing);
    assert!(line.starts_with("error[io]:") && line.contains("missing.csv"), "{line}");
}

#[test]
fn usage_errors_exit_two() {
    let out = imvc(&["train", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_line(&out).starts_with("error[usage]:"));
}

/// Every train flag documents a default equal to `TrainConfig::default()`.
#[test]
fn train_help_defaults_match_config() {
    let help = ok(&["train", "--help"]);
    let defaults = serde_json::to_value(TrainConfig::default()).unwrap();
    let defaults = defaults.as_object().unwrap();
    let mut seen = 0;
    let mut flag = None;
    for line in help.lines() {
        let line = line.trim();
        if let Some(rest) = line.strip_prefix("--") {
            flag = rest.split_whitespace().next().map(|f| f.replace('-', "_"));
        }
        let (Some(name), Some(start)) = (&flag, line.find("[default: ")) else {
            continue;
        };
        let shown = line[start + 10..].trim_end_matches(']');
        let expected = &defaults[name.as_str()];
        let rendered = match expected {
            serde_json::Value::Null => "none".to_string(),
            serde_json::Value::String(s) => s.clone(),
            serde_json::Value::Array(items) => items.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","),
            serde_json::Value::Number(n) => {
                let x = n.as_f64().unwrap();
                assert_eq!(shown.parse::<f64>().unwrap(), x, "--{name}");
                seen += 1;
                continue;
            }
            other => other.to_string(),
        };
        assert_eq!(shown, rendered, "--{name}");
        seen += 1;
    }
    assert_eq!(seen, defaults.len(), "{help}");
}
