use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn strategem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_strategem")).args(args).env_remove("STRATEGEM_SEED").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn body(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

fn write(path: &Path, text: &str) -> String {
    std::fs::write(path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn exit_codes() {
    assert_eq!(strategem(&["verify", "outer"]).status.code(), Some(0));
    assert_eq!(strategem(&["verify", "outer", "--tamper"]).status.code(), Some(1));
    assert_eq!(strategem(&["verify", "nonsense"]).status.code(), Some(2));
    assert_eq!(strategem(&["--no-such-flag"]).status.code(), Some(2));
    assert_eq!(strategem(&["--help"]).status.code(), Some(0));
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent").join("out.csv");
    let o = strategem(&["verify", "outer", "--out", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let absent_cfg = dir.path().join("absent.toml");
    assert_eq!(
        strategem(&["--config", absent_cfg.to_str().unwrap(), "verify", "outer"]).status.code(),
        Some(3)
    );
}

#[test]
fn verify_failure_names_the_suite() {
    let o = strategem(&["verify", "lemma", "--tamper"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("lemma: FAIL"), "{err}");
    assert!(err.contains("verification failed"), "{err}");
}

#[test]
fn curves_schema_and_row_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir.path().join("c.toml"), "n = 300\niterations = 12\nwindow_step = 30\n");
    let o = strategem(&["--config", &cfg, "experiment", "curves"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.starts_with("# strategem experiment curves\n"));
    let rows = body(&text);
    assert_eq!(rows[0], "iter,cosine,l2,kl,mean_shift,ce_gd,ce_icl");
    assert_eq!(rows.len(), 1 + 13);
    for (i, row) in rows[1..].iter().enumerate() {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols.len(), 7);
        assert_eq!(cols[0].parse::<usize>().unwrap(), i);
        assert!(cols[1..].iter().all(|c| c.parse::<f64>().unwrap().is_finite()));
    }
    assert!(text.contains("# final_cosine = "));
}

#[test]
fn rerun_from_written_output_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir.path().join("c.toml"), "seed = 9\nn = 300\niterations = 8\nfolds = 3\n");
    for (kind, ext) in [("curves", "csv"), ("table", "json")] {
        let first = dir.path().join(format!("{kind}.{ext}"));
        let first_s = first.to_str().unwrap();
        let o = strategem(&["--config", &cfg, "--format", ext, "--out", first_s, "experiment", kind]);
        assert_eq!(o.status.code(), Some(0));
        let again = strategem(&["--config", first_s, "--format", ext, "experiment", kind]);
        assert_eq!(again.status.code(), Some(0));
        assert_eq!(std::fs::read(&first).unwrap(), again.stdout, "{kind}");
    }
}

#[test]
fn gendata_header_rows_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir.path().join("g.toml"), "n = 25\nd = 3\n");
    let a = stdout(&strategem(&["--config", &cfg, "gendata"]));
    let rows = body(&a);
    assert_eq!(rows[0], "x0,x1,x2,label");
    assert_eq!(rows.len(), 26);
    assert!(a.contains("# n = 25"));
    assert_eq!(a, stdout(&strategem(&["--config", &cfg, "gendata"])));
    let b = stdout(&strategem(&["--config", &cfg, "--seed", "1", "gendata"]));
    assert_ne!(body(&a)[1..], body(&b)[1..]);

    let empty = write(&dir.path().join("e.toml"), "n = 0\n");
    assert_eq!(strategem(&["--config", &empty, "gendata"]).status.code(), Some(2));
    assert_eq!(strategem(&["--format", "json", "gendata"]).status.code(), Some(2));
}

#[test]
fn generated_data_feeds_back_in() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir.path().join("g.toml"), "n = 200\nd = 4\n");
    let data = dir.path().join("data.csv");
    let o = strategem(&["--config", &cfg, "--out", data.to_str().unwrap(), "gendata"]);
    assert_eq!(o.status.code(), Some(0));
    let run = write(
        &dir.path().join("r.toml"),
        &format!("dataset = {:?}\nfolds = 2\niterations = 5\n", data.to_str().unwrap()),
    );
    let o = strategem(&["--config", &run, "--format", "json", "experiment", "table"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 2);
}

#[test]
fn json_structure() {
    let o = strategem(&["--format", "json", "verify", "softmax"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["metadata"]["command"], "verify softmax");
    assert_eq!(v["metadata"]["config"]["seed"], 0);
    let rows = v["rows"].as_array().unwrap();
    let suites: Vec<&str> = rows.iter().map(|r| r["suite"].as_str().unwrap()).collect();
    assert_eq!(suites, ["softmax", "softmax-alpha"]);
    assert!(rows.iter().all(|r| r["pass"] == true));
}

#[test]
fn seed_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir.path().join("s.toml"), "seed = 5\nn = 10\nd = 2\n");
    let seed_of = |o: Output| {
        let text = stdout(&o);
        text.lines().find(|l| l.starts_with("# seed = ")).unwrap().to_owned()
    };
    let run = |env: Option<&str>, args: &[&str]| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_strategem"));
        c.env_remove("STRATEGEM_SEED");
        if let Some(s) = env {
            c.env("STRATEGEM_SEED", s);
        }
        c.args(args).output().unwrap()
    };
    let tiny = write(&dir.path().join("t.toml"), "n = 10\nd = 2\n");
    assert_eq!(seed_of(run(None, &["--config", &tiny, "gendata"])), "# seed = 0");
    assert_eq!(seed_of(run(Some("3"), &["--config", &tiny, "gendata"])), "# seed = 3");
    assert_eq!(seed_of(run(Some("3"), &["--config", &cfg, "gendata"])), "# seed = 5");
    assert_eq!(seed_of(run(Some("3"), &["--config", &cfg, "--seed", "7", "gendata"])), "# seed = 7");
    assert_eq!(run(Some("x"), &["gendata"]).status.code(), Some(2));
}

#[test]
fn help_documents_formats_and_exit_codes() {
    let text = stdout(&strategem(&["--help"]));
    for needle in ["OUTPUT FORMATS", "csv", "json", "EXIT STATUS", "STRATEGEM_SEED", "experiment curves"] {
        assert!(text.contains(needle), "missing {needle}");
    }
}
