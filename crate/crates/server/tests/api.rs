use std::collections::BTreeSet;
use std::path::Path;

use ali_core::adjudication::{build_queue, Adjudication, DecisionStore, Progress};
use ali_core::matcher::{match_roadmap, MatchOptions};
use ali_core::roadmap::union_roadmaps;
use ali_core::{AliComponent, Catalog, IcdCode, Provenance, Roadmap, SearchTerm, TermStatus};
use ali_server::{router, AppState};
use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use tower::ServiceExt;

fn adjudication(log: &Path) -> Adjudication {
    let catalog = Catalog::embedded_fixture();
    let mut llm = Roadmap::new("llm_context");
    for (c, p) in [
        (AliComponent::CRP, "pneumonia"),
        (AliComponent::CRP, "meningitis"),
        (AliComponent::HbA1c, "hyperglycemia"),
        (AliComponent::CRP, "Sepsis"),
    ] {
        llm.terms.push(SearchTerm::new(c, p, Provenance::LlmContext, TermStatus::Proposed).unwrap());
    }
    let roadmap = union_roadmaps([&Roadmap::clinicians_original(), &llm], "combined");
    let sample: BTreeSet<IcdCode> = catalog.entries().iter().map(|e| e.code.clone()).collect();
    let opts = MatchOptions {
        include_proposed: true,
        ..Default::default()
    };
    let matches = match_roadmap(&roadmap, &catalog, Some(&sample), opts);
    let queue = build_queue(&roadmap, &matches, &catalog, None);
    Adjudication::new(roadmap, queue, DecisionStore::open(log).unwrap())
}

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<serde_json::Value>) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

fn json(bytes: &[u8]) -> serde_json::Value {
    serde_json::from_slice(bytes).unwrap()
}

fn decision(term: &str, reviewer: &str, verdict: &str) -> serde_json::Value {
    serde_json::json!({"term_id": term, "reviewer_id": reviewer, "verdict": verdict, "note": ""})
}

#[tokio::test]
async fn queue_term_and_placeholder() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(AppState::new(adjudication(&dir.path().join("log.jsonl"))), None);

    let (s, body) = call(&app, "GET", "/api/queue", None).await;
    assert_eq!(s, StatusCode::OK);
    let q = json(&body);
    let ids: Vec<&str> = q.as_array().unwrap().iter().map(|i| i["term"]["id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["CRP:meningitis", "CRP:pneumonia", "HbA1c:hyperglycemia"]);
    assert!(q[0]["codes"][0]["description"].as_str().unwrap().to_lowercase().contains("meningitis"));

    let (s, body) = call(&app, "GET", "/api/terms/CRP:pneumonia", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(json(&body)["term"]["phrase"], "pneumonia");
    let (s, _) = call(&app, "GET", "/api/terms/CRP:nothing", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let (s, body) = call(&app, "GET", "/", None).await;
    assert_eq!(s, StatusCode::OK);
    assert!(String::from_utf8(body).unwrap().contains("/api/queue"));
}

#[tokio::test]
async fn decisions_update_progress_and_export() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(AppState::new(adjudication(&dir.path().join("log.jsonl"))), None);

    let (_, body) = call(&app, "GET", "/api/progress", None).await;
    let p: Progress = serde_json::from_slice(&body).unwrap();
    assert_eq!((p.queued, p.pending, p.decided, p.retained_if_exported), (3, 3, 0, 0));

    let (s, body) = call(&app, "POST", "/api/decisions", Some(decision("CRP:pneumonia", "a", "approve"))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(json(&body)["progress"]["retained_if_exported"], 1);
    call(&app, "POST", "/api/decisions", Some(decision("CRP:pneumonia", "b", "reject"))).await;
    call(&app, "POST", "/api/decisions", Some(decision("CRP:meningitis", "b", "reject"))).await;

    let (_, body) = call(&app, "GET", "/api/progress", None).await;
    let p: Progress = serde_json::from_slice(&body).unwrap();
    assert_eq!((p.pending, p.decided, p.retained_if_exported), (1, 2, 1));

    let (s, body) = call(&app, "POST", "/api/decisions", Some(decision("CRP:pneumonia", "a", "perhaps"))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(json(&body)["error"].as_str().unwrap().contains("verdict"));
    let (s, _) = call(&app, "POST", "/api/decisions", Some(decision("CRP:unknown", "a", "approve"))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call(&app, "POST", "/api/decisions", Some(serde_json::json!({"term_id": "x"}))).await;
    assert!(s.is_client_error());

    let (s, body) = call(&app, "GET", "/api/export?rule=any_approve", None).await;
    assert_eq!(s, StatusCode::OK);
    let csv = String::from_utf8(body).unwrap();
    assert!(csv.contains("CRP,pneumonia,llm_context_clinician,retained"));
    assert!(csv.contains("CRP,meningitis,llm_context,excluded"));
    let (_, body) = call(&app, "GET", "/api/export?rule=all_approve", None).await;
    assert!(String::from_utf8(body).unwrap().contains("CRP,pneumonia,llm_context,excluded"));
    let (s, _) = call(&app, "GET", "/api/export?rule=whatever", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_reviewers_converge_and_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("log.jsonl");
    let app = router(AppState::new(adjudication(&log)), None);
    let terms = ["CRP:meningitis", "CRP:pneumonia", "HbA1c:hyperglycemia"];

    let mut handles = Vec::new();
    for reviewer in ["a", "b"] {
        let app = app.clone();
        handles.push(tokio::spawn(async move {
            for round in 0..10 {
                for (i, t) in terms.iter().enumerate() {
                    let verdict = if (i + round) % 2 == 0 { "approve" } else { "reject" };
                    let (s, _) = call(&app, "POST", "/api/decisions", Some(decision(t, reviewer, verdict))).await;
                    assert_eq!(s, StatusCode::OK);
                }
            }
        }));
    }
    for h in handles {
        h.await.unwrap();
    }
    // Round 9 is each reviewer's last word: terms 0 and 2 rejected, term 1 approved.
    let (_, before) = call(&app, "GET", "/api/export", None).await;
    let (_, progress) = call(&app, "GET", "/api/progress", None).await;
    let p: Progress = serde_json::from_slice(&progress).unwrap();
    assert_eq!((p.decided, p.retained_if_exported), (3, 1));
    let (_, q) = call(&app, "GET", "/api/queue", None).await;
    assert!(json(&q).as_array().unwrap().iter().all(|i| i["decisions"].as_array().unwrap().len() == 2));

    let lines = std::fs::read_to_string(&log).unwrap().lines().count();
    assert_eq!(lines, 60);

    drop(app);
    let restarted = router(AppState::new(adjudication(&log)), None);
    let (_, after) = call(&restarted, "GET", "/api/export", None).await;
    assert_eq!(before, after);
}

#[tokio::test]
async fn static_dir_is_served() {
    let dir = tempfile::tempdir().unwrap();
    let ui = dir.path().join("ui");
    std::fs::create_dir(&ui).unwrap();
    std::fs::write(ui.join("index.html"), "<p>review ui</p>").unwrap();
    let app = router(AppState::new(adjudication(&dir.path().join("log.jsonl"))), Some(ui));
    let (s, body) = call(&app, "GET", "/", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body, b"<p>review ui</p>");
    let (s, _) = call(&app, "GET", "/api/progress", None).await;
    assert_eq!(s, StatusCode::OK);
}
