use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn alirec(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_alirec"))
        .args(args)
        .current_dir(cwd)
        .env_remove("LLM_ENDPOINT")
        .env_remove("LLM_API_KEY")
        .output()
        .unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/llm")
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn simulate_is_byte_identical() {
    let t = tempfile::tempdir().unwrap();
    ok(&alirec(&["simulate", "--seed", "7", "--n", "200", "--out", "a"], t.path()));
    ok(&alirec(&["simulate", "--seed", "7", "--n", "200", "--out", "b"], t.path()));
    ok(&alirec(&["simulate", "--seed", "8", "--n", "200", "--out", "c"], t.path()));
    let a = files(&t.path().join("a"));
    assert_eq!(a.len(), 5);
    assert_eq!(a, files(&t.path().join("b")));
    assert_ne!(a, files(&t.path().join("c")));
}

#[test]
fn match_recover_analyze_chain() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    ok(&alirec(&["simulate", "--seed", "3", "--n", "150", "--out", "cohort"], d));
    ok(&alirec(&["roadmap", "original", "--out", "original.csv"], d));
    let summary: serde_json::Value =
        serde_json::from_str(&ok(&alirec(&["match", "--roadmap", "original.csv", "--cohort", "cohort", "--out", "m.csv"], d)))
            .unwrap();
    assert_eq!(summary["terms"], 21);
    ok(&alirec(&["recover", "--cohort", "cohort", "--matches", "m.csv", "--out", "rec"], d));
    let flow: serde_json::Value = serde_json::from_str(&ok(&alirec(
        &["analyze", "flowchart", "--cohort", "cohort", "--sources", "original=rec/statuses.csv", "--out", "f.csv"],
        d,
    )))
    .unwrap();
    for row in flow.as_array().unwrap() {
        let total = row["healthy"].as_u64().unwrap() + row["unhealthy"].as_u64().unwrap() + row["missing"].as_u64().unwrap();
        assert_eq!(total, 1500);
    }
    ok(&alirec(
        &["analyze", "pairs", "--cohort", "cohort", "--sources", "original=rec/statuses.csv", "--out", "p.csv"],
        d,
    ));
    let pairs = std::fs::read_to_string(d.join("p.csv")).unwrap();
    for line in pairs.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        assert!(f[2].parse::<f64>().unwrap() >= f[1].parse::<f64>().unwrap());
    }
    ok(&alirec(&["analyze", "regress", "--cohort", "cohort", "--out", "r.json"], d));
    ok(&alirec(&["ali", "--cohort", "cohort", "--out", "ali.csv"], d));
}

#[test]
fn enhance_replay_and_adjudicate_export() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    let responses = fixtures().join("context");
    let responses = responses.to_str().unwrap();
    ok(&alirec(&["enhance", "--mode", "context", "--responses", responses, "--transcripts", "tr", "--out", "llm.csv"], d));
    ok(&alirec(&["enhance", "--replay", "tr", "--out", "llm2.csv"], d));
    assert_eq!(std::fs::read(d.join("llm.csv")).unwrap(), std::fs::read(d.join("llm2.csv")).unwrap());

    ok(&alirec(&["simulate", "--seed", "5", "--n", "100", "--out", "cohort"], d));
    let export = |out: &str| {
        let s = ok(&alirec(
            &["adjudicate", "export", "--roadmap", "llm.csv", "--cohort", "cohort", "--log", "d.jsonl", "--out", out],
            d,
        ));
        serde_json::from_str::<serde_json::Value>(&s).unwrap()
    };
    let v = export("adj.csv");
    assert_eq!(v["progress"]["decided"], 0);
    assert_eq!(v["retained"], 21);
}

#[test]
fn exit_codes() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    let out = alirec(&["match", "--roadmap", "missing.csv", "--out", "x.csv"], d);
    assert_eq!(out.status.code(), Some(2));
    let out = alirec(&["enhance", "--mode", "baseline", "--iterations", "1", "--out", "x.csv"], d);
    assert_eq!(out.status.code(), Some(2), "no endpoint configured");
    let out = alirec(
        &["enhance", "--mode", "baseline", "--iterations", "1", "--retries", "0", "--endpoint", "http://127.0.0.1:9/", "--out", "x.csv"],
        d,
    );
    assert_eq!(out.status.code(), Some(3));
    std::fs::write(d.join("bad.toml"), "output_dir = \"o\"\ncatalog = \"nope.tsv\"\n[cohort]\nsimulate = 10\n[[roadmaps]]\nname = \"r\"\nbuiltin = \"clinicians_original\"\n").unwrap();
    let out = alirec(&["pipeline", "run", "--config", "bad.toml"], d);
    assert_eq!(out.status.code(), Some(2));
    assert!(!d.join("o").exists());
    let out = alirec(&["--log-json", "-v", "roadmap", "stats"], d);
    assert!(out.status.success());
    for line in String::from_utf8_lossy(&out.stderr).lines() {
        serde_json::from_str::<serde_json::Value>(line).expect("json log line");
    }
}
