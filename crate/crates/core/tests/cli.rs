use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn darqn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_darqn"))
        .args(args)
        .env_remove("DARQN_DETERMINISTIC")
        .output()
        .unwrap()
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn small_config(dir: &Path, model: &str) -> String {
    let path = dir.join(format!("{model}.conf"));
    fs::write(
        &path,
        format!(
            "# quick run\nmodel = {model}\nprofile = small\nenv = catch\nout_dir = {}\n",
            dir.join(format!("run_{model}")).display()
        ),
    )
    .unwrap();
    path.display().to_string()
}

fn init_checkpoint(dir: &Path, model: &str) -> (String, String) {
    let config = small_config(dir, model);
    let out = darqn(&["train", "--config", &config, "--set", "total_steps=0"]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let ckpt = dir.join(format!("run_{model}")).join("init.darq");
    assert!(ckpt.exists());
    (config, ckpt.display().to_string())
}

#[test]
fn count_params_prints_the_integer() {
    let out = darqn(&["count-params", "darqn_soft", "paper", "18"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(text(&out.stdout), "845171\n");
    let out = darqn(&["count-params", "darqn_hard", "paper", "18"]);
    assert_eq!(text(&out.stdout), "845428\n");
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(darqn(&[]).status.code(), Some(1));
    assert_eq!(darqn(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(
        darqn(&["count-params", "resnet", "paper", "18"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(darqn(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_config_file_is_named() {
    let out = darqn(&["train", "--config", "/nonexistent/run.conf"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("/nonexistent/run.conf"));
}

#[test]
fn bad_config_values_are_rejected_before_work() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), "dqn");
    for bad in [
        "gamma=1.5",
        "unroll=0",
        "batch_size=0",
        "colour=red",
        "model=linear",
    ] {
        let out = darqn(&["train", "--config", &config, "--set", bad]);
        assert_eq!(out.status.code(), Some(1), "{bad}");
        assert!(!dir.path().join("run_dqn").exists(), "{bad}");
    }
}

#[test]
fn zero_step_training_writes_initial_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    init_checkpoint(dir.path(), "darqn_soft");
    let run = dir.path().join("run_darqn_soft");
    let metrics = fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert_eq!(
        metrics,
        "epoch,steps,mean_eval_reward,mean_q,loss,epsilon,alpha\n"
    );
    assert!(!run.join("final.darq").exists());
}

#[test]
fn printed_config_parses_back_identically() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), "drqn");
    let out = darqn(&[
        "train",
        "--config",
        &config,
        "--set",
        "total_steps=0",
        "--set",
        "gamma=0.9",
    ]);
    let printed = text(&out.stdout);
    let config_part: String = printed
        .lines()
        .take_while(|l| l.contains(" = "))
        .map(|l| format!("{l}\n"))
        .collect();
    assert!(config_part.contains("gamma = 0.9\n"));
    let again = dir.path().join("again.conf");
    fs::write(&again, &config_part).unwrap();
    let out2 = darqn(&["train", "--config", again.to_str().unwrap()]);
    assert!(out2.status.success(), "{}", text(&out2.stderr));
    assert!(text(&out2.stdout).starts_with(&config_part));
}

#[test]
fn deterministic_variable_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), "dqn");
    let out = Command::new(env!("CARGO_BIN_EXE_darqn"))
        .args([
            "train",
            "--config",
            &config,
            "--set",
            "total_steps=0",
            "--set",
            "deterministic=false",
        ])
        .env("DARQN_DETERMINISTIC", "1")
        .output()
        .unwrap();
    assert!(text(&out.stdout).contains("deterministic = true\n"));
}

#[test]
fn eval_reports_mean_and_spread() {
    let dir = tempfile::tempdir().unwrap();
    let (config, ckpt) = init_checkpoint(dir.path(), "dqn");
    let out = darqn(&[
        "eval",
        "--checkpoint",
        &ckpt,
        "--config",
        &config,
        "--episodes",
        "4",
    ]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let last = text(&out.stdout).lines().last().unwrap().to_string();
    assert!(last.starts_with("episodes 4 steps 92 reward "), "{last}");
    assert!(last.contains(" ± "));
}

#[test]
fn corrupt_checkpoint_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let (config, _) = init_checkpoint(dir.path(), "dqn");
    let bad = dir.path().join("bad.darq");
    fs::write(&bad, b"not a checkpoint at all").unwrap();
    let out = darqn(&[
        "eval",
        "--checkpoint",
        bad.to_str().unwrap(),
        "--config",
        &config,
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        text(&out.stderr).contains("bad checkpoint"),
        "{}",
        text(&out.stderr)
    );
}

#[test]
fn checkpoint_for_another_architecture_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (_, soft) = init_checkpoint(dir.path(), "darqn_soft");
    let dqn_config = small_config(dir.path(), "dqn");
    let out = darqn(&[
        "eval",
        "--checkpoint",
        &soft,
        "--config",
        &dqn_config,
        "--episodes",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = text(&out.stderr);
    assert!(err.contains("darqn_soft") && err.contains("dqn"), "{err}");
}

#[test]
fn visualize_writes_frames_and_index() {
    let dir = tempfile::tempdir().unwrap();
    for (model, sampled) in [("darqn_soft", false), ("darqn_hard", true)] {
        let (config, ckpt) = init_checkpoint(dir.path(), model);
        let out_dir = dir.path().join(format!("viz_{model}"));
        let run = |d: &Path| {
            darqn(&[
                "visualize",
                "--checkpoint",
                &ckpt,
                "--config",
                &config,
                "--steps",
                "5",
                "--out",
                d.to_str().unwrap(),
                "--set",
                "mix_prob=0",
            ])
        };
        let out = run(&out_dir);
        assert!(out.status.success(), "{}", text(&out.stderr));
        let index = fs::read_to_string(out_dir.join("index.csv")).unwrap();
        let rows: Vec<&str> = index.lines().skip(1).collect();
        assert_eq!(rows.len(), 5);
        for (i, row) in rows.iter().enumerate() {
            assert!(out_dir.join(format!("step_{i:06}.ppm")).exists());
            let att = row.split(',').nth(4).unwrap();
            assert_eq!(!att.is_empty(), sampled, "{model}: {row}");
        }
        let again = dir.path().join(format!("viz_{model}_again"));
        run(&again);
        for i in 0..5 {
            let name = format!("step_{i:06}.ppm");
            assert_eq!(
                fs::read(out_dir.join(&name)).unwrap(),
                fs::read(again.join(&name)).unwrap()
            );
        }
    }
}
