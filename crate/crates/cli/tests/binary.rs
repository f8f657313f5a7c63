use std::path::Path;
use std::process::{Command, Output};

use attrib_cli::RunReport;

fn attrib(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_attrib"))
        .args(args)
        .current_dir(cwd)
        .env_remove("ATTRIB_CACHE_DIR")
        .output()
        .unwrap()
}

fn report(out: &Path) -> RunReport {
    serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn exact_match_on_identical_finetunes() {
    let dir = tempfile::tempdir().unwrap();
    let o = attrib(&["run", "--method", "exact", "--strength", "0", "--out", "run"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&dir.path().join("run"));
    assert_eq!(r.tp, [r.targets]);
}

#[test]
fn restricted_level_rejects_finetune_inputs() {
    let dir = tempfile::tempdir().unwrap();
    for repr in ["I_F", "I_BF"] {
        let o = attrib(&["run", "--level", "K_R", "--repr", repr, "--out", "run"], dir.path());
        assert_eq!(o.status.code(), Some(2));
        assert!(String::from_utf8_lossy(&o.stderr).contains("K_R"));
    }
    assert!(!dir.path().join("run").exists());
}

#[test]
fn configuration_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["run", "--method", "oracle", "--out", "x"][..],
        &["run", "--suite", "missing.json", "--out", "x"],
        &["run", "--method", "perplexity", "--prompts", "P3", "--out", "x"],
        &["frobnicate"],
    ] {
        assert_eq!(attrib(args, dir.path()).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), "method = \"perplexity\"\nseeds = [0, 1]\nstrength = 0.0\n").unwrap();
    let o = attrib(&["run", "--config", "run.toml", "--method", "exact", "--out", "run"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&dir.path().join("run"));
    assert_eq!((r.method.as_str(), r.seeds.as_slice()), ("exact", &[0, 1][..]));

    std::fs::write(dir.path().join("bad.toml"), "methd = \"exact\"\n").unwrap();
    assert_eq!(attrib(&["run", "--config", "bad.toml", "--out", "x"], dir.path()).status.code(), Some(2));
}

#[test]
fn manifest_rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let o = attrib(&["run", "--seeds", "0,1", "--json", "--out", "first"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: RunReport = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary, report(&dir.path().join("first")));

    let o = attrib(&["run", "--manifest", "first/manifest.json", "--out", "second"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let (a, b) = (files(&dir.path().join("first")), files(&dir.path().join("second")));
    assert!(a.len() > 4);
    assert_eq!(a, b);
}
