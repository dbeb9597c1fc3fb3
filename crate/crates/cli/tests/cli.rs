use std::path::Path;
use std::process::Command;

fn melab(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_melab")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn synth_classify_writes_its_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "[classify]\nmax_epochs = 5\n");
    let out = dir.path().join("run");
    let o = melab(&["synth-classify", "--config", &cfg, "--seed", "3", "--out", out.to_str().unwrap(), "--threads", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["trace.csv", "me_plot.svg", "meta.toml"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let meta = std::fs::read_to_string(out.join("meta.toml")).unwrap();
    assert!(meta.contains("seed = 3"), "{meta}");
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1 + 6);
}

#[test]
fn unknown_config_key_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "[classify.optimizer]\nlearning_rte = 0.1\n");
    let o = melab(&["synth-classify", "--config", &cfg, "--out", dir.path().join("x").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("learning_rte"), "{err}");
}

#[test]
fn mismatched_kind_and_bad_flags_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "kind = \"sweep\"\n");
    assert_eq!(melab(&["oracle", "--config", &cfg]).status.code(), Some(1));
    assert_eq!(melab(&["oracle", "--seed", "minus-one"]).status.code(), Some(1));
    assert_eq!(melab(&["no-such-experiment"]).status.code(), Some(1));
    assert_eq!(melab(&["--help"]).status.code(), Some(0));
}

#[test]
fn unreadable_corpus_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "[mt_novelty]\nsource = \"/nonexistent/a\"\ntarget = \"/nonexistent/b\"\n");
    let o = melab(&["mt-novelty", "--config", &cfg, "--out", dir.path().join("x").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn unwritable_output_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = write(dir.path(), "file", "");
    let cfg = write(dir.path(), "c.toml", "[classify]\nmax_epochs = 1\n");
    let o = melab(&["synth-classify", "--config", &cfg, "--out", &format!("{blocker}/sub")]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}
