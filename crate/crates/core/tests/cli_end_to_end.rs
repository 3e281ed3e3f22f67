use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fermiborn::baselines::model_covariance;
use fermiborn::cli::persist::{load_model, save_model};
use fermiborn::engine::FbmModel;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fermiborn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fermiborn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn generate_grid(dir: &Path, name: &str, dims: &str, count: usize, seed: u64) -> PathBuf {
    let path = dir.join(name);
    let out = fermiborn(&[
        "generate",
        "grid-mn",
        "--dims",
        dims,
        "--count",
        &count.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        p(&path),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    path
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.json");
    fs::write(&path, body).unwrap();
    path
}

fn history_epochs(dir: &Path) -> Vec<usize> {
    fs::read_to_string(dir.join("history.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect()
}

fn history_losses(dir: &Path) -> Vec<f64> {
    fs::read_to_string(dir.join("history.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect()
}

fn final_loss(stdout: &str) -> f64 {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix("final loss "))
        .expect("final loss line")
        .parse()
        .unwrap()
}

#[test]
fn generate_writes_the_requested_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let grid = generate_grid(dir.path(), "grid.txt", "3x4", 1000, 1);
    let text = fs::read_to_string(grid).unwrap();
    assert_eq!(text.lines().count(), 1000);
    assert!(text.lines().all(|l| l.len() == 12));

    let life = dir.path().join("life.txt");
    let out = fermiborn(&[
        "generate",
        "game-of-life",
        "--dims",
        "6x7",
        "--count",
        "50",
        "--out",
        p(&life),
    ]);
    assert_eq!(code(&out), 0);
    let text = fs::read_to_string(life).unwrap();
    assert_eq!(text.lines().count(), 50);
    assert!(text.lines().all(|l| l.len() == 42 && l.contains('1')));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.txt");
    assert_eq!(
        code(&fermiborn(&["generate", "grid-mn", "--dims", "3by4", "--out", p(&out)])),
        2
    );
    assert_eq!(code(&fermiborn(&["generate", "spirals", "--out", p(&out)])), 2);
    assert_eq!(code(&fermiborn(&["frobnicate"])), 2);
    assert_eq!(
        code(&fermiborn(&["--workers", "0", "generate", "grid-mn", "--out", p(&out)])),
        2
    );
    let config = write_config(dir.path(), r#"{"model": {"N": 1}, "bogus": 1}"#);
    assert_eq!(code(&fermiborn(&["train", "--config", p(&config)])), 2);
    assert_eq!(
        code(&fermiborn(&[
            "oracle-check",
            "--model",
            p(&dir.path().join("missing.json"))
        ])),
        2
    );
}

#[test]
fn train_resume_and_eval_agree() {
    let dir = tempfile::tempdir().unwrap();
    generate_grid(dir.path(), "train.txt", "2x3", 400, 3);
    let config = write_config(
        dir.path(),
        r#"{
            "model": {"N": 2, "layers": 2, "seed": 4},
            "training": {"epochs": 6, "lr": 0.05, "resample": false,
                         "kernels": [{"kind": "gaussian", "sigma": 1.0, "ell_max": 3, "n_ops": 100}]},
            "data": {"train": "train.txt"},
            "output": {"dir": "run", "checkpoint_every": 3}
        }"#,
    );
    let out = fermiborn(&["train", "--config", p(&config)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let run = dir.path().join("run");
    assert_eq!(history_epochs(&run), (1..=6).collect::<Vec<_>>());
    let trained = final_loss(&stdout(&out));
    let (_, file) = load_model(run.join("model.json")).unwrap();
    assert_eq!(file.epoch, 6);

    // eval on the training data reproduces the training objective exactly
    let eval = fermiborn(&[
        "eval",
        "--model",
        p(&run.join("model.json")),
        "--data",
        p(&dir.path().join("train.txt")),
        "--config",
        p(&config),
        "--out",
        p(&dir.path().join("metrics")),
    ]);
    assert_eq!(code(&eval), 0, "{}", String::from_utf8_lossy(&eval.stderr));
    let objective: f64 = stdout(&eval)
        .lines()
        .find_map(|l| l.strip_prefix("training objective "))
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(objective, trained);
    let mmd = fs::read_to_string(dir.path().join("metrics/mmd.csv")).unwrap();
    assert_eq!(mmd.lines().count(), 6);

    // resuming continues the epoch numbering
    let resumed = dir.path().join("resumed");
    let out = fermiborn(&[
        "train",
        "--config",
        p(&config),
        "--resume",
        p(&run.join("checkpoint.json")),
        "--out",
        p(&resumed),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(history_epochs(&resumed), (1..=12).collect::<Vec<_>>());
}

#[test]
fn median_bandwidths_are_logged() {
    let dir = tempfile::tempdir().unwrap();
    generate_grid(dir.path(), "train.txt", "2x3", 200, 5);
    let config = write_config(
        dir.path(),
        r#"{
            "model": {"N": 2},
            "training": {"epochs": 2, "lr": 0.01, "kernels": [{"kind": "gaussian", "sigma": "median"}]},
            "data": {"train": "train.txt"}
        }"#,
    );
    let out = fermiborn(&["train", "--config", p(&config), "--out", p(&dir.path().join("r"))]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("median heuristic bandwidths"));
}

#[test]
fn worker_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    generate_grid(dir.path(), "train.txt", "2x3", 300, 6);
    let config = write_config(
        dir.path(),
        r#"{
            "model": {"N": 2, "layers": 2, "seed": 1},
            "training": {"epochs": 4, "lr": 0.05, "kernels": [{"kind": "gaussian", "sigma": 2.0, "n_ops": 300}]},
            "data": {"train": "train.txt"}
        }"#,
    );
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(
        code(&fermiborn(&[
            "--workers",
            "1",
            "train",
            "--config",
            p(&config),
            "--out",
            p(&a)
        ])),
        0
    );
    assert_eq!(
        code(&fermiborn(&[
            "--workers",
            "4",
            "train",
            "--config",
            p(&config),
            "--out",
            p(&b)
        ])),
        0
    );
    assert_eq!(history_losses(&a), history_losses(&b));
    assert_eq!(
        fs::read_to_string(a.join("model.json")).unwrap(),
        fs::read_to_string(b.join("model.json")).unwrap()
    );
}

fn saved_random_model(dir: &Path, registers: usize, layers: usize, seed: u64) -> (FbmModel, PathBuf) {
    let model = FbmModel::random(registers, layers, &mut ChaCha8Rng::seed_from_u64(seed));
    let path = dir.join(format!("model{registers}.json"));
    save_model(&model, seed, 0, &path).unwrap();
    (model, path)
}

#[test]
fn eval_covariance_matches_the_model() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate_grid(dir.path(), "test.txt", "2x3", 100, 2);
    let (model, path) = saved_random_model(dir.path(), 2, 2, 8);
    let metrics = dir.path().join("m");
    let out = fermiborn(&[
        "eval",
        "--model",
        p(&path),
        "--data",
        p(&data),
        "--exact",
        "--out",
        p(&metrics),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout(&out).lines().filter(|l| l.contains(',')).count(), 6);
    let written: Vec<f64> = fs::read_to_string(metrics.join("covariance_model.csv"))
        .unwrap()
        .lines()
        .flat_map(|l| l.split(',').map(|x| x.parse::<f64>().unwrap()).collect::<Vec<_>>())
        .collect();
    let expected = model_covariance(&model).unwrap();
    assert_eq!(written.len(), 36);
    assert!(written.iter().zip(&expected).all(|(a, b)| (a - b).abs() < 1e-8));
}

#[test]
fn export_formats() {
    let dir = tempfile::tempdir().unwrap();
    let (model, path) = saved_random_model(dir.path(), 2, 3, 1);
    let qasm = dir.path().join("c.qasm");
    assert_eq!(
        code(&fermiborn(&[
            "export",
            "--model",
            p(&path),
            "--format",
            "qasm",
            "--out",
            p(&qasm)
        ])),
        0
    );
    let text = fs::read_to_string(&qasm).unwrap();
    assert!(text.starts_with("OPENQASM 2.0;"));
    assert!(text.contains("include \"qelib1.inc\";"));

    // a compiled export has N input rotations, 3N CNOTs, one rotation layer and n measurements
    let native = dir.path().join("c.txt");
    let out = fermiborn(&["export", "--model", p(&path), "--compile", "--out", p(&native)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let list = fermiborn::compiler::parse_native(&fs::read_to_string(&native).unwrap()).unwrap();
    let (n, d) = (model.registers(), model.modes());
    assert_eq!(list.gates.len(), n + 3 * n + d * (2 * d - 1) + model.variables());
    assert_eq!(
        code(&fermiborn(&[
            "export",
            "--model",
            p(&path),
            "--format",
            "svg",
            "--out",
            p(&native)
        ])),
        2
    );
}

#[test]
fn oracle_check_accepts_small_and_refuses_large_models() {
    let dir = tempfile::tempdir().unwrap();
    let (_, small) = saved_random_model(dir.path(), 2, 2, 3);
    let out = fermiborn(&["oracle-check", "--model", p(&small)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let (_, large) = saved_random_model(dir.path(), 40, 1, 3);
    assert_eq!(code(&fermiborn(&["oracle-check", "--model", p(&large)])), 2);
}

#[test]
fn corrupted_model_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (_, path) = saved_random_model(dir.path(), 1, 1, 0);
    let text = fs::read_to_string(&path).unwrap();
    fs::write(&path, &text[..text.len() / 2]).unwrap();
    assert_eq!(code(&fermiborn(&["oracle-check", "--model", p(&path)])), 2);
    fs::write(&path, text.replace("\"version\": 1", "\"version\": 99")).unwrap();
    assert_eq!(
        code(&fermiborn(&[
            "export",
            "--model",
            p(&path),
            "--out",
            p(&dir.path().join("o"))
        ])),
        2
    );
}
