use std::path::Path;
use std::process::{Command, Output};

fn corrnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_corrnet"))
        .args(args)
        .output()
        .expect("run corrnet")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: &str = r#"
[data]
cases = 4
folds = 2
samples = 128

[generator]
subdivisions = 2

[train]
epochs = 2
n_points = 64
"#;

#[test]
fn pipeline_runs_end_to_end_and_reproduces() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let data = dir.path().join("data");
    ok(&corrnet(&["gen-data", "--config", s(&cfg), "--out", s(&data)]));
    assert!(data.join("manifest.json").is_file());
    assert!(data.join("case_002/samples.csv").is_file());

    let run = dir.path().join("run");
    ok(&corrnet(&["train", "--config", s(&cfg), "--data", s(&data), "--out", s(&run)]));
    for f in ["checkpoint.bin", "loss.csv", "run.json"] {
        assert!(run.join(f).is_file(), "{f}");
    }
    let loss = std::fs::read_to_string(run.join("loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 3);

    let ckpt = run.join("checkpoint.bin");
    let case = data.join("case_001");
    let (a, b) = (dir.path().join("a.ply"), dir.path().join("b.obj"));
    ok(&corrnet(&["simulate", "--checkpoint", s(&ckpt), "--case", s(&case), "--out", s(&a)]));
    ok(&corrnet(&["simulate", "--checkpoint", s(&ckpt), "--case", s(&case), "--out", s(&b)]));
    let again = dir.path().join("again.ply");
    ok(&corrnet(&["convert", s(&b), s(&again)]));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&again).unwrap());

    let eval = dir.path().join("eval");
    ok(&corrnet(&["evaluate", "--data", s(&data), "--checkpoint", s(&ckpt), "--out", s(&eval)]));
    let metrics = std::fs::read_to_string(eval.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("case,"), "{metrics}");
    assert!(eval.join("metrics.json").is_file());
    assert_eq!(std::fs::read_dir(eval.join("error_maps")).unwrap().count(), 2);

    let single = corrnet(&[
        "evaluate",
        "--pred",
        s(&a),
        "--gt",
        s(&case.join("skin_post.ply")),
        "--labels",
        s(&case.join("labels.csv")),
    ]);
    ok(&single);
    assert!(String::from_utf8_lossy(&single.stdout).contains("entire"));

    let run2 = dir.path().join("run2");
    ok(&corrnet(&["train", "--config", s(&cfg), "--data", s(&data), "--out", s(&run2)]));
    // run.json records the output directory, so only the artefacts are compared.
    for f in ["checkpoint.bin", "loss.csv"] {
        assert!(std::fs::read(run.join(f)).unwrap() == std::fs::read(run2.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn errors_are_one_line_with_a_category() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nothing");
    let out = corrnet(&["train", "--data", s(&missing), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error[config]:"), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[train]\nepochz = 3\n").unwrap();
    let out = corrnet(&["gen-data", "--config", s(&bad), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epochz"));

    let junk = dir.path().join("junk.ply");
    std::fs::write(&junk, "not a mesh").unwrap();
    let out = corrnet(&["convert", s(&junk), s(&dir.path().join("x.obj"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error["));
}

#[test]
fn gradcheck_command_passes() {
    let out = corrnet(&["gradcheck", "--seeds", "3", "--probes", "3"]);
    ok(&out);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().count() > 10);
    assert!(!text.contains("FAIL"));
}
