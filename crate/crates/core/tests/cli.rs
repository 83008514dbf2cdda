use std::path::Path;
use std::process::{Command, Output};

fn roida(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_roida"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Pools and a 5/3 mixture in `dir`.
fn make_mixture(dir: &Path) {
    for (policy, n, out) in [("expert", "10", "experts.tset"), ("random", "20", "subs.tset")] {
        let o = roida(&["gen-data", "--env", "lineworld1d", "--policy", policy, "--n", n, "--out", out], dir);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let o = roida(
        &["mix", "--setting", "5/3", "--expert-pool", "experts.tset", "--suboptimal-pool", "subs.tset", "--out", "mix"],
        dir,
    );
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn mix_reports_composition() {
    let dir = tempfile::tempdir().unwrap();
    make_mixture(dir.path());
    let o = roida(&["stats", "--data", "mix/auxiliary.tset"], dir.path());
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("trajectories:     23"), "{text}");
    assert!(text.contains("aux_expert:     3"), "{text}");
}

#[test]
fn contradictory_flags_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    make_mixture(dir.path());
    let o = roida(
        &["train", "--expert", "mix/expert.tset", "--aux", "mix/auxiliary.tset", "--out", "run", "--method", "bc_exp", "--no-td"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(!dir.path().join("run/final.txt").exists());
}

#[test]
fn unknown_flag_suggests_a_key() {
    let dir = tempfile::tempdir().unwrap();
    let o = roida(&["train", "--expert", "e", "--aux", "a", "--out", "o", "--tau-treshold", "2"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--tau_threshold"), "{}", stderr(&o));
}

#[test]
fn missing_input_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = roida(&["stats", "--data", "nope.tset"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    make_mixture(dir.path());
    let o = roida(
        &[
            "train", "--expert", "mix/expert.tset", "--aux", "mix/auxiliary.tset", "--out", "run",
            "--total-steps", "60", "--eval-every", "6", "--eval-episodes", "2", "--batch-size", "8",
            "--policy-hidden", "8", "--critic-hidden", "8", "--disc-hidden", "8", "--disc-steps", "20",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["config.txt", "log.csv", "policy.ckpt", "discriminator.ckpt", "final.txt"] {
        assert!(dir.path().join("run").join(f).exists(), "missing {f}");
    }
    let config = std::fs::read_to_string(dir.path().join("run/config.txt")).unwrap();
    assert!(config.contains("total_steps=60"));
}

#[test]
fn sweep_then_report_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let plan = "name=p\nenv=lineworld1d\nsettings=5/0\nn_suboptimal=20\nmethods=bc_exp,bc_all\nseeds=0,1\n\
                total_steps=60\neval_every=6\neval_episodes=2\nbatch_size=8\npolicy_hidden=8\nbootstrap_reps=50\n";
    std::fs::write(dir.path().join("p.plan"), plan).unwrap();
    let o = roida(&["sweep", "--plan", "p.plan", "--results", "res"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read(dir.path().join("res/p/report.csv")).unwrap();
    let o = roida(&["report", "--dir", "res/p"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read(dir.path().join("res/p/report.csv")).unwrap(), csv);

    let o = roida(&["sweep", "--plan", "p.plan", "--results", "res"], dir.path());
    assert!(stderr(&o).contains("skipped"));
    assert_eq!(std::fs::read(dir.path().join("res/p/report.csv")).unwrap(), csv);
}

#[test]
fn selftest_exits_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let o = roida(&["selftest", "--n", "5"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("selftest passed"));
}
