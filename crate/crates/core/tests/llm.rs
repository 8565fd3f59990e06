use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::time::Duration;

use ali_core::llm::{
    parse_response, replay_transcripts, run_enhancement, ChatClient, ChatRequest, HttpChatClient, LlmRunConfig,
    PromptMode, ScriptedClient,
};
use ali_core::roadmap::union_roadmaps;
use ali_core::{AliComponent, Catalog, Provenance, Roadmap, ThresholdTable};

fn fixture_dir(mode: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/llm").join(mode)
}

fn oracle(mode: &str) -> BTreeSet<(String, String)> {
    let text = std::fs::read_to_string(fixture_dir(mode).join("union_oracle.tsv")).unwrap();
    text.lines()
        .skip(1)
        .map(|l| {
            let (c, w) = l.split_once('\t').unwrap();
            (c.to_string(), w.to_string())
        })
        .collect()
}

fn keys(r: &Roadmap) -> BTreeSet<(String, String)> {
    r.terms.iter().map(|t| (t.component.key().to_string(), t.words.join(" "))).collect()
}

fn config(mode: PromptMode) -> LlmRunConfig {
    LlmRunConfig {
        mode,
        backoff_ms: 0,
        ..LlmRunConfig::default()
    }
}

#[test]
fn fixture_runs_match_union_oracle() {
    for (dir, mode, prov) in [
        ("context", PromptMode::Context, Provenance::LlmContext),
        ("baseline", PromptMode::Baseline, Provenance::LlmBaseline),
    ] {
        let client = ScriptedClient::from_dir(&fixture_dir(dir)).unwrap();
        assert_eq!(client.len(), 20);
        let original = Roadmap::clinicians_original();
        let out = run_enhancement(&config(mode), &ThresholdTable::default(), Some(&original), &client).unwrap();
        assert!(out.failed_runs.is_empty());
        assert_eq!(keys(&out.roadmap), oracle(dir), "{dir}");
        assert!(out.roadmap.terms.iter().all(|t| t.provenance == prov));

        let mut reversed = out.runs.clone();
        reversed.reverse();
        assert_eq!(keys(&union_roadmaps(&reversed, "r")), oracle(dir));
    }
}

#[test]
fn parser_is_idempotent_on_transcripts() {
    let dir = tempfile::tempdir().unwrap();
    let client = ScriptedClient::from_dir(&fixture_dir("context")).unwrap();
    let mut cfg = config(PromptMode::Context);
    cfg.transcript_dir = Some(dir.path().to_path_buf());
    cfg.parallelism = 4;
    let original = Roadmap::clinicians_original();
    let live = run_enhancement(&cfg, &ThresholdTable::default(), Some(&original), &client).unwrap();
    for t in &live.transcripts {
        assert_eq!(parse_response(t.response.as_deref().unwrap()).terms, t.parsed);
    }
    let replayed = replay_transcripts(dir.path()).unwrap();
    assert_eq!(keys(&replayed.roadmap), oracle("context"));
}

#[test]
fn payloads_carry_no_patient_data() {
    struct Recorder(std::sync::Mutex<Vec<String>>);
    impl ChatClient for Recorder {
        fn complete(&self, _: usize, request: &ChatRequest) -> Result<String, ali_core::llm::CallError> {
            self.0.lock().unwrap().push(serde_json::to_string(request).unwrap());
            Ok("```roadmap\nBody Mass Index: obesity\n```".into())
        }
    }
    let cohort = ali_core::synthetic::generate(
        3,
        50,
        &Default::default(),
        &Catalog::embedded_fixture(),
        &Roadmap::clinicians_original(),
        &ThresholdTable::default(),
    )
    .unwrap()
    .cohort;
    let rec = Recorder(Default::default());
    let original = Roadmap::clinicians_original();
    run_enhancement(&config(PromptMode::Context), &ThresholdTable::default(), Some(&original), &rec).unwrap();
    let payloads = rec.0.into_inner().unwrap();
    assert_eq!(payloads.len(), 20);
    for p in &payloads {
        for patient in &cohort.patients {
            assert!(!p.contains(&patient.patient_id));
            for code in &patient.diagnoses {
                assert!(!p.contains(code.as_dotted()), "{code:?}");
            }
        }
    }
}

/// One-shot HTTP server answering each connection with the given status and body.
fn serve(responses: Vec<(u16, String)>) -> (String, std::thread::JoinHandle<Vec<String>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let handle = std::thread::spawn(move || {
        let mut bodies = Vec::new();
        for (status, body) in responses {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            bodies.push(String::from_utf8(buf).unwrap());
            let reply = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(reply.as_bytes()).unwrap();
        }
        bodies
    });
    (addr, handle)
}

#[test]
fn http_client_retries_then_succeeds() {
    let ok = serde_json::json!({"choices": [{"message": {"content": "```roadmap\nHomocysteine: folate deficiency\n```"}}]});
    let (addr, handle) = serve(vec![(503, "{}".into()), (200, ok.to_string())]);
    let client = HttpChatClient::new(&addr, Some("k".into()), Duration::from_secs(5), Duration::ZERO).unwrap();
    let mut cfg = config(PromptMode::Baseline);
    cfg.iterations = 1;
    cfg.retries = 1;
    cfg.model = "test-model".into();
    let out = run_enhancement(&cfg, &ThresholdTable::default(), None, &client).unwrap();
    assert_eq!(out.transcripts[0].attempts, 2);
    assert_eq!(out.roadmap.terms[0].component, AliComponent::Homocysteine);
    let bodies = handle.join().unwrap();
    let sent: serde_json::Value = serde_json::from_str(&bodies[1]).unwrap();
    assert_eq!(sent["model"], "test-model");
    assert_eq!(sent["messages"][0]["role"], "user");
}

#[test]
fn unreachable_endpoint_is_reported() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = format!("http://{}/", listener.local_addr().unwrap());
    drop(listener);
    let client = HttpChatClient::new(&addr, None, Duration::from_secs(2), Duration::ZERO).unwrap();
    let mut cfg = config(PromptMode::Baseline);
    cfg.iterations = 2;
    cfg.retries = 1;
    let err = run_enhancement(&cfg, &ThresholdTable::default(), None, &client).unwrap_err();
    assert!(matches!(err, ali_core::llm::LlmError::EndpointUnreachable { .. }), "{err}");
}
