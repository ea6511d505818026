use std::path::Path;
use std::process::{Command, Output};

fn gaplab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gaplab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn list_shows_the_catalog() {
    let o = gaplab(&["list"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.lines().count() >= 6);
    for name in [
        "conformal-blow-up",
        "conformal-shrink",
        "bubble-insert",
        "hole-shrink",
    ] {
        assert!(text.contains(name), "{name} missing");
    }
}

#[test]
fn band_output_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        let o = gaplab(&[
            "bands",
            "--config",
            "free-hill-bands",
            "--out",
            dir.path().to_str().unwrap(),
            "--threads",
            "3",
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let read = |d: &Path, f: &str| std::fs::read(d.join(f)).unwrap();
    for file in [
        "free-hill-bands_bands.csv",
        "free-hill-bands_gaps.json",
        "free-hill-bands.json",
    ] {
        assert_eq!(read(a.path(), file), read(b.path(), file), "{file} differs");
    }
    let csv = String::from_utf8(read(a.path(), "free-hill-bands_bands.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("l,re_theta,im_theta,k,lambda"));
}

#[test]
fn block_not_smaller_than_supercell_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    let text = include_str!("../configs/bubble-insert.toml").replace("n = 8", "n = 2");
    std::fs::write(&path, text).unwrap();
    let o = gaplab(&[
        "thm1",
        "--config",
        path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("n > m"), "{}", stderr(&o));
}

#[test]
fn unknown_fields_and_names_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("typo.toml");
    std::fs::write(
        &path,
        "kind = \"weyl\"\n[weyl]\nsides = [1.0, 1.0]\nelement = [4, 4]\n",
    )
    .unwrap();
    let o = gaplab(&["weyl", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = gaplab(&["weyl", "--config", "no-such-experiment"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn subcommand_must_match_the_config() {
    let o = gaplab(&["weyl", "--config", "free-hill-bands"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("gaplab bands"), "{}", stderr(&o));
}

#[test]
fn failed_check_exits_one() {
    // an unreachable growth ratio fails a check without any error
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("greedy.toml");
    let text = include_str!("../configs/hole-shrink.toml")
        .replace("min-ratio = 10.0", "min-ratio = 1.0e6");
    std::fs::write(&path, text).unwrap();
    let o = gaplab(&[
        "shrink",
        "--config",
        path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--resolution-scale",
        "0.5",
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("hole-shrink.json")).unwrap())
            .unwrap();
    assert_eq!(report["pass"], false);
}

#[test]
fn level_outside_every_gap_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("level.toml");
    let text = include_str!("../configs/hill-gap-count.toml")
        .replace("level = \"gap-midpoint:4\"", "level = 0.5");
    std::fs::write(&path, text).unwrap();
    let o = gaplab(&[
        "gaps",
        "--config",
        path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("LevelNotInGap"), "{}", stderr(&o));
}
