use std::path::Path;
use std::process::{Command, Output};

fn fssat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fssat")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = fssat(args);
    assert!(
        out.status.success(),
        "fssat {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn end_to_end_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["synth-gen", "--out", p(&data), "--domains", "alpha,beta", "--train", "4", "--val", "2", "--test", "4", "--seed", "3"]);
    let manifest = data.join("manifest.jsonl");
    assert_eq!(std::fs::read_to_string(&manifest).unwrap().lines().count(), 20);

    let codes = dir.path().join("codes.fsvc");
    ok(&["extract", "--in", p(&data.join("clips/alpha-train-00000.fsvc")), "--kind", "ldp", "--out", p(&codes)]);
    let clip = fusion_ssat::synth::read_clip(&codes).unwrap();
    // LDP codes with three bits set map to at least 7/255
    assert!(clip.data().iter().all(|&v| v >= 7.0 / 255.0 - 1e-6));

    let config = dir.path().join("desk.toml");
    std::fs::write(&config, "epochs = 1\ntrain_domain = \"alpha\"\n").unwrap();
    let run = dir.path().join("run");
    ok(&["train", "--config", p(&config), "--manifest", p(&manifest), "--out", p(&run)]);
    let log = std::fs::read_to_string(run.join("train_log.jsonl")).unwrap();
    assert!(log.lines().next().unwrap().contains("\"kind\":\"init\""));

    let report = dir.path().join("report");
    let stdout = ok(&[
        "eval", "--checkpoint", p(&run.join("checkpoint.fsck")), "--manifest", p(&manifest), "--report", p(&report),
    ]);
    assert!(stdout.contains("auc[alpha]") && stdout.contains("auc[beta]"));
    assert!(report.join("eval.json").is_file());

    let unmasked = dir.path().join("unmasked");
    ok(&[
        "eval", "--checkpoint", p(&run.join("checkpoint.fsck")), "--manifest", p(&manifest), "--report", p(&unmasked),
        "--split", "val", "--mask-mode", "unmasked",
    ]);

    let svg = dir.path().join("roc.svg");
    ok(&["roc-plot", "--report", p(&report), "--out", p(&svg)]);
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));

    let ablation = dir.path().join("ablation");
    let table = ok(&[
        "ablate", "--config", p(&config), "--pairs", "rgb-ldp,lbp-lbp", "--manifest", p(&manifest), "--out", p(&ablation),
    ]);
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows[0], "pair,alpha,beta");
    assert!(rows[1].starts_with("RGB-LDP,") && rows[2].starts_with("LBP-LBP,"));
    assert!(ablation.join("roc_alpha.svg").is_file());
}

#[test]
fn bad_arguments_fail_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.fsvc");
    let out = fssat(&["extract", "--in", p(&missing), "--kind", "ldp", "--out", p(&dir.path().join("o.fsvc"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.fsvc"));

    let out = fssat(&["extract", "--in", p(&missing), "--kind", "hog", "--out", "o"]);
    assert!(!out.status.success());

    let out = fssat(&["ablate", "--config", "c.toml", "--pairs", "rgb-lbp", "--manifest", "m", "--out", "o"]);
    assert!(!out.status.success());

    let out = fssat(&["synth-gen", "--out", p(dir.path()), "--domains", "gamma"]);
    assert!(!out.status.success());
    let out = fssat(&["synth-gen", "--out", p(dir.path()), "--train", "3"]);
    assert!(!out.status.success());
}
