use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use featagg::data::{load_model, write_bags, BagContainer};
use featagg::{FeatureBag, Matrix};

fn featagg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_featagg")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn concentric(&self, name: &str, bags: &str, seed: &str) -> PathBuf {
        let p = self.path(name);
        let out = featagg(&[
            "gen-data",
            "--dataset",
            "concentric",
            "--bags-per-class",
            bags,
            "--features-per-bag",
            "20",
            "--seed",
            seed,
            "--out",
            s(&p),
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        p
    }

    fn planar_3d(&self) -> PathBuf {
        let bags = (0..4)
            .map(|i| {
                let m = Matrix::from_rows(&[[i as f64, 0.5, 1.0], [0.0, 1.0, 2.0]]).unwrap();
                FeatureBag::new(format!("b{i}"), i % 2, m).unwrap()
            })
            .collect();
        let p = self.path("3d.lfab");
        write_bags(&BagContainer::new(2, 3, bags).unwrap(), &p).unwrap();
        p
    }
}

fn line_value(text: &str, prefix: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(prefix))
        .unwrap_or_else(|| panic!("no {prefix:?} line in {text}"))
        .trim()
        .to_owned()
}

#[test]
fn gen_data_is_deterministic() {
    let ws = Workspace::new();
    let a = ws.concentric("a.lfab", "10", "3");
    let b = ws.concentric("b.lfab", "10", "3");
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let c = featagg::data::read_bags(&a).unwrap();
    assert_eq!(c.len(), 20);
}

#[test]
fn negative_noise_is_a_usage_error() {
    let ws = Workspace::new();
    let out = featagg(&[
        "gen-data",
        "--dataset",
        "xor",
        "--noise",
        "-1",
        "--out",
        s(&ws.path("x")),
    ]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("--noise"), "{}", stderr(&out));
}

#[test]
fn unknown_flags_are_rejected() {
    assert_eq!(code(&featagg(&["eval", "--model", "m", "--data", "d", "--verbose"])), 1);
    assert_eq!(code(&featagg(&["frobnicate"])), 1);
    assert_eq!(code(&featagg(&["--help"])), 0);
}

#[test]
fn help_lists_flags_with_defaults() {
    let out = featagg(&["train", "--help"]);
    let help = stdout(&out);
    for flag in [
        "--train",
        "--test",
        "--encoder",
        "--k",
        "--gamma",
        "--init",
        "--epochs",
        "--lr-w",
        "--lr-c",
        "--lr-sigma",
        "--subsample",
        "--chi2-map",
        "--seed",
        "--model-out",
        "--metrics-out",
    ] {
        assert!(help.contains(flag), "missing {flag}");
    }
    for default in [
        "[default: t1]",
        "[default: 2]",
        "[default: kmeans]",
        "[default: 30]",
        "[default: 0.001]",
    ] {
        assert!(help.contains(default), "missing {default}");
    }
    let gradcheck = stdout(&featagg(&["gradcheck", "--help"]));
    assert!(gradcheck.contains("--trials") && gradcheck.contains("[default: 100]"));
}

#[test]
fn train_then_eval() {
    let ws = Workspace::new();
    let train = ws.concentric("train.lfab", "30", "1");
    let test = ws.concentric("test.lfab", "10", "2");
    let model = ws.path("m.lfam");
    let metrics = ws.path("m.csv");
    let out = featagg(&[
        "train",
        "--train",
        s(&train),
        "--test",
        s(&test),
        "--epochs",
        "3",
        "--model-out",
        s(&model),
        "--metrics-out",
        s(&metrics),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let printed = stdout(&out);
    let csv = fs::read_to_string(&metrics).unwrap();
    assert!(csv.starts_with("epoch,train_loss,train_acc,test_acc\n"));
    assert_eq!(csv.lines().count(), 1 + 4);

    let eval = featagg(&["eval", "--model", s(&model), "--data", s(&train)]);
    assert_eq!(code(&eval), 0);
    assert_eq!(
        line_value(&stdout(&eval), "accuracy:"),
        line_value(&printed, "train accuracy:")
    );
    let eval_test = stdout(&featagg(&["eval", "--model", s(&model), "--data", s(&test)]));
    assert_eq!(
        line_value(&eval_test, "accuracy:"),
        line_value(&printed, "test accuracy:")
    );
    assert_eq!(line_value(&eval_test, "accuracy:").len(), "0.0000".len());
}

#[test]
fn zero_epochs_keeps_the_initial_model() {
    let ws = Workspace::new();
    let train = ws.concentric("train.lfab", "10", "1");
    let model = ws.path("m.lfam");
    let metrics = ws.path("m.csv");
    let out = featagg(&[
        "train",
        "--train",
        s(&train),
        "--epochs",
        "0",
        "--finetune-epochs",
        "0",
        "--model-out",
        s(&model),
        "--metrics-out",
        s(&metrics),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = fs::read_to_string(&metrics).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.lines().nth(1).unwrap().ends_with(','));
    assert!(load_model(&model)
        .unwrap()
        .params
        .precisions
        .log_precisions
        .as_slice()
        .iter()
        .all(|&v| v == 0.0));
}

#[test]
fn bow_matches_frozen_t1() {
    let ws = Workspace::new();
    let train = ws.concentric("train.lfab", "10", "1");
    let bow = ws.path("bow.lfam");
    let t1 = ws.path("t1.lfam");
    let common = ["--train", s(&train), "--epochs", "2", "--gamma", "0.5"];
    let mut a = vec!["train", "--encoder", "bow", "--model-out", s(&bow)];
    a.extend(common);
    let mut b = vec![
        "train",
        "--encoder",
        "t1",
        "--lr-c",
        "0",
        "--lr-sigma",
        "0",
        "--model-out",
        s(&t1),
    ];
    b.extend(common);
    assert_eq!(code(&featagg(&a)), 0);
    assert_eq!(code(&featagg(&b)), 0);
    let (bow, t1) = (load_model(&bow).unwrap(), load_model(&t1).unwrap());
    assert_eq!(bow.params.codebook, t1.params.codebook);
    assert_eq!(bow.params.precisions, t1.params.precisions);
    assert_eq!(bow.classifier, t1.classifier);
    assert_eq!(bow.metrics, t1.metrics);
}

#[test]
fn dimension_mismatch_is_a_runtime_error() {
    let ws = Workspace::new();
    let train = ws.concentric("train.lfab", "10", "1");
    let model = ws.path("m.lfam");
    assert_eq!(
        code(&featagg(&[
            "train",
            "--train",
            s(&train),
            "--epochs",
            "1",
            "--model-out",
            s(&model)
        ])),
        0
    );
    let out = featagg(&["eval", "--model", s(&model), "--data", s(&ws.planar_3d())]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("D=3"));
}

#[test]
fn divergence_is_a_runtime_error() {
    let ws = Workspace::new();
    let train = ws.concentric("train.lfab", "10", "1");
    let out = featagg(&[
        "train",
        "--train",
        s(&train),
        "--lr-w",
        "1e6",
        "--lr-c",
        "1e6",
        "--lr-sigma",
        "1e6",
        "--epochs",
        "5",
        "--model-out",
        s(&ws.path("m")),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("diverged"), "{}", stderr(&out));
}

#[test]
fn t2_rejects_the_chi2_map() {
    let ws = Workspace::new();
    let train = ws.concentric("train.lfab", "10", "1");
    let out = featagg(&[
        "train",
        "--train",
        s(&train),
        "--encoder",
        "t2",
        "--chi2-map",
        "on",
        "--model-out",
        s(&ws.path("m")),
    ]);
    assert_eq!(code(&out), 1);
    assert_eq!(code(&featagg(&["gradcheck", "--encoder", "t2", "--chi2-map", "on"])), 1);
}

#[test]
fn gradcheck_exit_codes() {
    let ok = featagg(&["gradcheck", "--trials", "20"]);
    assert_eq!(code(&ok), 0, "{}", stdout(&ok));
    let max: f64 = line_value(&stdout(&ok), "max:").parse().unwrap();
    assert!(max < 1e-5);
    let t2 = featagg(&["gradcheck", "--encoder", "t2", "--trials", "20"]);
    assert_eq!(code(&t2), 0);
    let perturbed = Command::new(env!("CARGO_BIN_EXE_featagg"))
        .args(["gradcheck", "--trials", "5"])
        .env("FEATAGG_GRADCHECK_PERTURB", "0.01")
        .output()
        .unwrap();
    assert_eq!(code(&perturbed), 3);
}

#[test]
fn export_plots() {
    let ws = Workspace::new();
    let train = ws.concentric("train.lfab", "10", "1");
    let model = ws.path("m.lfam");
    let metrics = ws.path("m.csv");
    let out = featagg(&[
        "train",
        "--train",
        s(&train),
        "--k",
        "3",
        "--epochs",
        "2",
        "--model-out",
        s(&model),
        "--metrics-out",
        s(&metrics),
    ]);
    assert_eq!(code(&out), 0);

    let svg = ws.path("codebook.svg");
    assert_eq!(
        code(&featagg(&[
            "export-plot",
            "--model",
            s(&model),
            "--data",
            s(&train),
            "--out",
            s(&svg)
        ])),
        0
    );
    let text = fs::read_to_string(&svg).unwrap();
    assert_eq!(text.matches(r#"class="codeword""#).count(), 3);
    let twin = fs::read_to_string(ws.path("codebook.csv")).unwrap();
    assert_eq!(twin.lines().filter(|l| l.starts_with("codeword,")).count(), 3);

    let curve = ws.path("curve.svg");
    assert_eq!(
        code(&featagg(&["export-plot", "--metrics", s(&metrics), "--out", s(&curve)])),
        0
    );
    assert_eq!(fs::read_to_string(&curve).unwrap().matches("<polyline").count(), 1);
    assert_eq!(fs::read(ws.path("curve.csv")).unwrap(), fs::read(&metrics).unwrap());

    let bad = featagg(&[
        "export-plot",
        "--model",
        s(&model),
        "--data",
        s(&ws.planar_3d()),
        "--out",
        s(&svg),
    ]);
    assert_eq!(code(&bad), 1);
    assert_eq!(code(&featagg(&["export-plot", "--out", s(&svg)])), 1);
}

#[test]
fn sweep_gamma_reports_each_candidate() {
    let ws = Workspace::new();
    let train = ws.concentric("train.lfab", "12", "1");
    let out = featagg(&[
        "sweep-gamma",
        "--train",
        s(&train),
        "--gammas",
        "0.5,2",
        "--epochs",
        "1",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().nth(1).unwrap().starts_with("0.5,"));
    assert!(stderr(&out).contains("best gamma"));
}
