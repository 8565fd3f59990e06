use std::path::Path;

use ali_core::llm::{run_enhancement, LlmRunConfig, PromptMode, ScriptedClient};
use ali_core::pipeline::{run_pipeline, PipelineConfig};
use ali_core::{Roadmap, ThresholdTable};

fn archive_transcripts(dir: &Path) {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/llm/context");
    let client = ScriptedClient::from_dir(&fixtures).unwrap();
    let cfg = LlmRunConfig {
        mode: PromptMode::Context,
        transcript_dir: Some(dir.to_path_buf()),
        backoff_ms: 0,
        ..LlmRunConfig::default()
    };
    let original = Roadmap::clinicians_original();
    run_enhancement(&cfg, &ThresholdTable::default(), Some(&original), &client).unwrap();
}

fn config(root: &Path, out: &str) -> PipelineConfig {
    let text = format!(
        r#"
output_dir = "{out}"
seed = 7

[cohort]
simulate = 300

[[roadmaps]]
name = "original"
builtin = "clinicians_original"

[[roadmaps]]
name = "llm_context"
transcripts = "transcripts"

[[roadmaps]]
name = "combined"
transcripts = "transcripts"
union_original = true
"#
    );
    let mut cfg = PipelineConfig::from_toml(&text).unwrap();
    cfg.resolve_paths(root);
    cfg
}

#[test]
fn end_to_end_outputs_and_determinism() {
    let root = tempfile::tempdir().unwrap();
    archive_transcripts(&root.path().join("transcripts"));

    let first = run_pipeline(&config(root.path(), "run1")).unwrap();
    let second = run_pipeline(&config(root.path(), "run2")).unwrap();
    assert_eq!(first.outputs, second.outputs);
    assert_eq!(first.inputs, second.inputs);

    let out = root.path().join("run1");
    for f in [
        "match_summary.csv",
        "flowchart.csv",
        "regression.json",
        "ali.csv",
        "missingness.csv",
        "review/flowchart.csv",
        "pairs/ehr_vs_combined.csv",
        "cohort/truth.csv",
        "manifest.json",
    ] {
        assert!(out.join(f).is_file(), "{f}");
    }

    let flow = std::fs::read_to_string(out.join("flowchart.csv")).unwrap();
    let mut rows = csv::Reader::from_reader(flow.as_bytes());
    for r in rows.records() {
        let r = r.unwrap();
        let sum: usize = (2..5).map(|i| r[i].parse::<usize>().unwrap()).sum();
        assert_eq!(sum, 3000, "{:?}", r);
    }

    let summary = std::fs::read_to_string(out.join("match_summary.csv")).unwrap();
    assert!(summary.starts_with("roadmap,terms,codes_overall,codes_in_sample\noriginal,21,"));

    let reg: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("regression.json")).unwrap()).unwrap();
    let sources: Vec<&str> = reg.as_array().unwrap().iter().map(|r| r["source"].as_str().unwrap()).collect();
    assert_eq!(sources, ["ehr", "original", "llm_context", "combined"]);
    assert!(reg[0]["fit"]["coefficients"][1]["odds_ratio"].is_number());

    // Deleting the output directory and rerunning reproduces it.
    std::fs::remove_dir_all(&out).unwrap();
    let third = run_pipeline(&config(root.path(), "run1")).unwrap();
    assert_eq!(third.outputs, first.outputs);
}

