use std::fs;
use std::path::Path;
use std::process::Command;

use hift_cli::commands::{self, AblationOutcome, ABLATION_VARIANTS};
use hift_cli::{CliError, RunConfig};
use hift_core::synth::{gen_suite, Difficulty};
use hift_core::HiftError;

const TINY: &str = "
[backbone]
stem_channels = 4,6
channels_per_level = 6,8,8
template_size = 39
search_size = 57

[transformer]
channels = 16
heads = 2
ffn_hidden = 32

[train]
steps = 4
batch_size = 1

[synth]
train_sequences = 2
eval_sequences = 2
frames = 6

[gradcheck]
seeds = 1
samples_per_param = 2

[ablate]
steps = 2
";

fn tiny() -> RunConfig {
    RunConfig::from_ini_str(TINY).unwrap()
}

fn read(p: &Path) -> Vec<u8> {
    fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn echoed_config_reproduces_training() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    commands::cmd_train(&tiny(), None, &a).unwrap();
    let echoed = RunConfig::load(&a.join(commands::CONFIG_ECHO)).unwrap();
    assert_eq!(echoed, tiny());
    commands::cmd_train(&echoed, None, &b).unwrap();
    for f in [commands::LOSS_CSV, commands::CHECKPOINT, commands::CONFIG_ECHO] {
        assert_eq!(read(&a.join(f)), read(&b.join(f)), "{f}");
    }
    let csv = fs::read_to_string(a.join(commands::LOSS_CSV)).unwrap();
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn track_and_eval_a_sequence_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny();
    let run = dir.path().join("run");
    let s = commands::cmd_train(&cfg, None, &run).unwrap();

    let seq = &gen_suite(1, 42, Difficulty::Easy, 5).unwrap()[0];
    let seq_dir = dir.path().join("seq");
    seq.save(&seq_dir).unwrap();

    let out = dir.path().join("track");
    commands::cmd_track(&cfg, &s.checkpoint, Some(&seq_dir), true, 1, &out).unwrap();
    let results = fs::read_to_string(out.join(commands::RESULTS)).unwrap();
    assert_eq!(results.lines().count(), 5);
    let scores: Vec<_> = fs::read_dir(out.join(commands::SCORES_DIR)).unwrap().collect();
    assert_eq!(scores.len(), 4);
    let one = fs::read_to_string(out.join(commands::SCORES_DIR).join("frame_00002.csv")).unwrap();
    assert_eq!(one.lines().count(), 6);
    assert!(one.lines().all(|l| l.split(',').count() == 6));

    let eval = commands::cmd_eval(
        &out.join(commands::RESULTS),
        Some(&seq_dir.join("groundtruth.txt")),
        &out,
    )
    .unwrap();
    assert_eq!(eval.per_sequence.len(), 1);
    let metrics = fs::read_to_string(out.join(commands::METRICS_CSV)).unwrap();
    assert!(metrics.starts_with("sequence,precision@20,success_auc\n"));
    assert_eq!(
        fs::read_to_string(out.join(commands::SUCCESS_CSV))
            .unwrap()
            .lines()
            .count(),
        22
    );
    assert_eq!(
        fs::read_to_string(out.join(commands::PRECISION_CSV))
            .unwrap()
            .lines()
            .count(),
        52
    );
}

#[test]
fn tracking_needs_a_first_box() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny();
    let s = commands::cmd_train(&cfg, None, &dir.path().join("run")).unwrap();
    let mut seq = gen_suite(1, 1, Difficulty::Easy, 3).unwrap().remove(0);
    seq.groundtruth.clear();
    let seq_dir = dir.path().join("seq");
    seq.save(&seq_dir).unwrap();
    let err = commands::cmd_track(&cfg, &s.checkpoint, Some(&seq_dir), false, 1, &dir.path().join("t")).unwrap_err();
    assert!(matches!(err, CliError::Core(HiftError::Contract(_))), "{err}");
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn suite_tracking_is_independent_of_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny();
    let s = commands::cmd_train(&cfg, None, &dir.path().join("run")).unwrap();
    let one = dir.path().join("j1");
    let two = dir.path().join("j2");
    commands::cmd_track(&cfg, &s.checkpoint, None, false, 1, &one).unwrap();
    let dirs = commands::cmd_track(&cfg, &s.checkpoint, None, false, 2, &two).unwrap();
    assert_eq!(dirs.len(), 2);
    for d in dirs {
        let name = d.file_name().unwrap();
        let rel = Path::new(commands::TRACKS_DIR).join(name).join(commands::RESULTS);
        assert_eq!(read(&one.join(&rel)), read(&two.join(&rel)));
    }
    let e1 = commands::cmd_eval(&one.join(commands::TRACKS_DIR), None, &one).unwrap();
    let e2 = commands::cmd_eval(&two.join(commands::TRACKS_DIR), None, &two).unwrap();
    assert_eq!(e1.overall.success.scores, e2.overall.success.scores);
}

#[test]
fn checkpoint_for_another_architecture_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let s = commands::cmd_train(&tiny(), None, &dir.path().join("run")).unwrap();
    let mut other = tiny();
    other.model.transformer.variant = hift_core::transformer::Variant::None;
    assert!(commands::load_model(&other, &s.checkpoint).is_err());
}

#[test]
fn ablation_table_has_six_rows_and_a_zero_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let rows = commands::cmd_ablate(&tiny(), 1, dir.path()).unwrap();
    assert_eq!(rows.len(), 6);
    for (r, v) in rows.iter().zip(ABLATION_VARIANTS) {
        assert_eq!(r.variant, v);
        assert!(matches!(r.outcome, AblationOutcome::Done { .. }));
    }
    let csv = fs::read_to_string(dir.path().join(commands::ABLATION_CSV)).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 7);
    assert!(lines[0].starts_with("variant,precision@20,success_auc,delta_precision_pct,delta_success_pct"));
    let base: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(base[0], "Baseline");
    assert!(base[3] == "0.00" || base[3] == "n/a");
    assert!(base[4] == "0.00" || base[4] == "n/a");
    assert!(lines[6].starts_with("Baseline+HFT,"));
    assert!(lines[6].ends_with(",0.763,0.566"));
    let table = commands::ablation_table(&rows);
    assert!(table.contains("not reproducible"));
}

#[test]
fn failed_variant_is_marked() {
    let rows = vec![hift_cli::commands::AblationRow {
        variant: ABLATION_VARIANTS[2],
        outcome: AblationOutcome::Failed("loss is NaN".into()),
    }];
    let csv = commands::ablation_csv(&rows);
    assert!(csv.lines().nth(1).unwrap().contains("FAILED"));
}

fn hift(args: &[&str], cwd: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_hift"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.ini");
    fs::write(&bad, "[train]\nsteeps = 3\n").unwrap();
    let out = hift(&["gradcheck", "--config", bad.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("steeps"));

    let missing = hift(&["eval", "--results", "nowhere.txt"], dir.path());
    assert_eq!(missing.status.code(), Some(1));

    let good = dir.path().join("tiny.ini");
    fs::write(&good, TINY).unwrap();
    let out = hift(
        &["gradcheck", "--config", good.to_str().unwrap(), "--out", "gc"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().filter(|l| l.starts_with("PASS ")).count() > 10);
    assert!(dir.path().join("gc").join(commands::CONFIG_ECHO).exists());
}

#[test]
fn end_to_end_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.ini");
    fs::write(&cfg, TINY).unwrap();
    let c = cfg.to_str().unwrap();
    assert!(hift(&["train", "--config", c, "--out", "r", "--seed", "3"], dir.path())
        .status
        .success());
    let echo = fs::read_to_string(dir.path().join("r").join(commands::CONFIG_ECHO)).unwrap();
    assert!(echo.contains("[run]\nseed = 3\n"));
    let ck = dir.path().join("r").join(commands::CHECKPOINT);
    let t = hift(
        &[
            "track",
            "--config",
            c,
            "--seed",
            "3",
            "--checkpoint",
            ck.to_str().unwrap(),
            "--out",
            "r",
        ],
        dir.path(),
    );
    assert!(t.status.success(), "{}", String::from_utf8_lossy(&t.stderr));
    let e = hift(&["eval", "--results", "r/tracks", "--out", "r"], dir.path());
    assert!(e.status.success());
    assert!(String::from_utf8_lossy(&e.stdout).contains("overall"));
}
