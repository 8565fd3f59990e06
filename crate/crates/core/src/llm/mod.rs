//! LLM-assisted roadmap enhancement: prompt, query, parse, union.

mod client;
mod parse;
mod prompt;

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use client::{extract_reply, CallError, ChatClient, ChatMessage, ChatRequest, HttpChatClient, ScriptedClient};
pub use parse::{looks_like_acronym, parse_response, ParsedRun};
pub use prompt::{build_prompt, PromptMode};

use crate::component::AliComponent;
use crate::phenotype::ThresholdTable;
use crate::roadmap::{union_roadmaps, Provenance, Roadmap, SearchTerm, TermStatus};

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("context mode needs the original roadmap")]
    MissingOriginalRoadmap,
    #[error("LLM endpoint unreachable on run {run}: {reason}")]
    EndpointUnreachable { run: usize, reason: String },
    #[error("none of the {0} runs produced a parseable roadmap")]
    AllRunsUnparseable(usize),
    #[error("invalid LLM configuration: {0}")]
    Config(String),
    #[error("no transcripts found in {0}")]
    NoTranscripts(String),
    #[error("bad transcript {path}: {reason}")]
    BadTranscript { path: String, reason: String },
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmRunConfig {
    pub endpoint: Option<String>,
    pub model: String,
    pub iterations: usize,
    pub mode: PromptMode,
    pub temperature: Option<f64>,
    pub timeout_secs: u64,
    /// Extra attempts per run after a transient failure.
    pub retries: u32,
    pub backoff_ms: u64,
    pub min_interval_ms: u64,
    pub parallelism: usize,
    pub transcript_dir: Option<PathBuf>,
}

impl Default for LlmRunConfig {
    fn default() -> Self {
        LlmRunConfig {
            endpoint: None,
            model: "default".into(),
            iterations: 20,
            mode: PromptMode::Context,
            temperature: None,
            timeout_secs: 120,
            retries: 3,
            backoff_ms: 1000,
            min_interval_ms: 0,
            parallelism: 1,
            transcript_dir: None,
        }
    }
}

impl LlmRunConfig {
    /// Fills endpoint and model from `LLM_ENDPOINT` / `LLM_MODEL` when unset.
    pub fn with_env(mut self) -> Self {
        if self.endpoint.is_none() {
            self.endpoint = std::env::var("LLM_ENDPOINT").ok().filter(|s| !s.is_empty());
        }
        if let Ok(m) = std::env::var("LLM_MODEL") {
            if !m.is_empty() {
                self.model = m;
            }
        }
        self
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.iterations == 0 {
            return Err(LlmError::Config("iterations must be at least 1".into()));
        }
        if self.parallelism == 0 {
            return Err(LlmError::Config("parallelism must be at least 1".into()));
        }
        if let Some(t) = self.temperature {
            if !(0.0..=2.0).contains(&t) {
                return Err(LlmError::Config(format!("temperature {t} outside [0, 2]")));
            }
        }
        Ok(())
    }

    /// HTTP client for the configured endpoint. The key comes from `LLM_API_KEY`.
    pub fn http_client(&self) -> Result<HttpChatClient, LlmError> {
        let endpoint = self
            .endpoint
            .as_deref()
            .ok_or_else(|| LlmError::Config("no endpoint; set LLM_ENDPOINT".into()))?;
        HttpChatClient::new(
            endpoint,
            std::env::var("LLM_API_KEY").ok().filter(|s| !s.is_empty()),
            Duration::from_secs(self.timeout_secs),
            Duration::from_millis(self.min_interval_ms),
        )
    }
}

/// Everything exchanged in one run, written as `run_NN.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmTranscript {
    pub run_index: usize,
    pub mode: PromptMode,
    pub request: ChatRequest,
    pub attempts: u32,
    pub response: Option<String>,
    pub error: Option<String>,
    pub parsed: BTreeMap<AliComponent, Vec<String>>,
    pub diagnostics: Vec<String>,
    pub parse_ok: bool,
}

impl LlmTranscript {
    pub fn file_name(run_index: usize) -> String {
        format!("run_{run_index:02}.json")
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, LlmError> {
        std::fs::create_dir_all(dir).map_err(|e| LlmError::Io(dir.display().to_string(), e))?;
        let path = dir.join(Self::file_name(self.run_index));
        let json = serde_json::to_string_pretty(self).expect("transcript serializes");
        std::fs::write(&path, json + "\n").map_err(|e| LlmError::Io(path.display().to_string(), e))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path).map_err(|e| LlmError::Io(path.display().to_string(), e))?;
        serde_json::from_str(&text).map_err(|e| LlmError::BadTranscript {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct EnhancementOutcome {
    pub roadmap: Roadmap,
    pub runs: Vec<Roadmap>,
    pub transcripts: Vec<LlmTranscript>,
    /// Runs whose reply yielded no terms.
    pub failed_runs: Vec<usize>,
}

pub fn provenance_for(mode: PromptMode) -> Provenance {
    match mode {
        PromptMode::Baseline => Provenance::LlmBaseline,
        PromptMode::Context => Provenance::LlmContext,
    }
}

/// Roadmap of proposed terms from one parsed reply.
pub fn run_roadmap(parsed: &ParsedRun, mode: PromptMode, name: &str) -> Roadmap {
    let provenance = provenance_for(mode);
    let mut run = Roadmap::new(name);
    for (component, phrases) in &parsed.terms {
        for phrase in phrases {
            if let Some(t) = SearchTerm::new(*component, phrase, provenance, TermStatus::Proposed) {
                run.terms.push(t);
            }
        }
    }
    union_roadmaps([&run], name)
}

/// Union whose file form does not depend on run order: terms sorted by id,
/// and the smallest spelling seen wins when runs differ only in case or punctuation.
fn canonical_union(runs: &[Roadmap], name: &str) -> Roadmap {
    let mut out = union_roadmaps(runs, name);
    let mut spelling: HashMap<_, &str> = HashMap::new();
    for t in runs.iter().flat_map(|r| &r.terms) {
        let e = spelling.entry(t.key()).or_insert(t.phrase.as_str());
        if t.phrase.as_str() < *e {
            *e = t.phrase.as_str();
        }
    }
    for t in &mut out.terms {
        t.phrase = spelling[&t.key()].to_string();
    }
    out.terms.sort_by(|a, b| (a.component, &a.id).cmp(&(b.component, &b.id)));
    out
}

fn roadmap_name(mode: PromptMode) -> &'static str {
    match mode {
        PromptMode::Baseline => "llm_baseline",
        PromptMode::Context => "llm_context",
    }
}

fn assemble(mode: PromptMode, mut transcripts: Vec<LlmTranscript>) -> Result<EnhancementOutcome, LlmError> {
    transcripts.sort_by_key(|t| t.run_index);
    let name = roadmap_name(mode);
    let mut runs = Vec::new();
    let mut failed_runs = Vec::new();
    for t in &transcripts {
        if !t.parse_ok {
            log::warn!("run {} produced no parseable roadmap", t.run_index);
            failed_runs.push(t.run_index);
            continue;
        }
        let parsed = ParsedRun {
            terms: t.parsed.clone(),
            diagnostics: Vec::new(),
        };
        runs.push(run_roadmap(&parsed, mode, &format!("{name}_run{:02}", t.run_index)));
    }
    if runs.is_empty() {
        return Err(LlmError::AllRunsUnparseable(transcripts.len()));
    }
    Ok(EnhancementOutcome {
        roadmap: canonical_union(&runs, name),
        runs,
        transcripts,
        failed_runs,
    })
}

fn run_once(
    client: &dyn ChatClient,
    config: &LlmRunConfig,
    run_index: usize,
    request: &ChatRequest,
) -> Result<LlmTranscript, LlmError> {
    let mut attempts = 0;
    let reply = loop {
        attempts += 1;
        match client.complete(run_index, request) {
            Ok(text) => break Ok(text),
            Err(CallError::Transient(reason)) if attempts <= config.retries => {
                log::warn!("run {run_index} attempt {attempts} failed: {reason}; retrying");
                let wait = config.backoff_ms.saturating_mul(1 << (attempts - 1).min(10));
                std::thread::sleep(Duration::from_millis(wait));
            }
            Err(CallError::Transient(reason)) => {
                return Err(LlmError::EndpointUnreachable { run: run_index, reason });
            }
            Err(CallError::Fatal(reason)) => break Err(reason),
        }
    };
    let (response, error, parsed) = match reply {
        Ok(text) => {
            let parsed = parse_response(&text);
            (Some(text), None, parsed)
        }
        Err(reason) => (
            None,
            Some(reason.clone()),
            ParsedRun {
                terms: BTreeMap::new(),
                diagnostics: vec![reason],
            },
        ),
    };
    Ok(LlmTranscript {
        run_index,
        mode: config.mode,
        request: request.clone(),
        attempts,
        response,
        error,
        parse_ok: parsed.is_ok(),
        parsed: parsed.terms,
        diagnostics: parsed.diagnostics,
    })
}

/// Query the model `config.iterations` times and union the parsed replies.
/// Only roadmap text and thresholds go into the prompt; no patient data.
pub fn run_enhancement(
    config: &LlmRunConfig,
    thresholds: &ThresholdTable,
    original: Option<&Roadmap>,
    client: &dyn ChatClient,
) -> Result<EnhancementOutcome, LlmError> {
    config.validate()?;
    let prompt = build_prompt(config.mode, thresholds, original)?;
    let request = ChatRequest::user(&config.model, &prompt, config.temperature);

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Result<LlmTranscript, LlmError>>> = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..config.parallelism.min(config.iterations) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= config.iterations {
                    break;
                }
                let r = run_once(client, config, i, &request);
                let stop = r.is_err();
                results.lock().unwrap_or_else(|e| e.into_inner()).push(r);
                if stop {
                    next.store(config.iterations, Ordering::SeqCst);
                }
            });
        }
    });

    let mut transcripts = Vec::new();
    for r in results.into_inner().unwrap_or_else(|e| e.into_inner()) {
        let t = r?;
        if let Some(dir) = &config.transcript_dir {
            t.write(dir)?;
        }
        transcripts.push(t);
    }
    assemble(config.mode, transcripts)
}

/// Rebuild an enhancement from saved transcripts, re-parsing each raw reply.
pub fn replay_transcripts(dir: &Path) -> Result<EnhancementOutcome, LlmError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| LlmError::Io(dir.display().to_string(), e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|x| x == "json")
                && p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("run_"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(LlmError::NoTranscripts(dir.display().to_string()));
    }
    let mut transcripts = Vec::new();
    let mut mode = None;
    for p in paths {
        let mut t = LlmTranscript::read(&p)?;
        if *mode.get_or_insert(t.mode) != t.mode {
            return Err(LlmError::BadTranscript {
                path: p.display().to_string(),
                reason: "transcripts mix prompt modes".into(),
            });
        }
        let parsed = t.response.as_deref().map(parse_response).unwrap_or_else(|| ParsedRun {
            terms: BTreeMap::new(),
            diagnostics: Vec::new(),
        });
        if parsed.terms != t.parsed {
            log::warn!("{}: stored terms differ from re-parsed reply; using re-parsed", p.display());
        }
        t.parse_ok = parsed.is_ok();
        t.parsed = parsed.terms;
        transcripts.push(t);
    }
    assemble(mode.expect("at least one transcript"), transcripts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reply(line: &str) -> String {
        format!("Here you go.\n```roadmap\n{line}\n```\n")
    }

    fn quick(mode: PromptMode, n: usize) -> LlmRunConfig {
        LlmRunConfig {
            iterations: n,
            mode,
            backoff_ms: 0,
            ..LlmRunConfig::default()
        }
    }

    #[test]
    fn union_of_runs_with_failed_run() {
        let client = ScriptedClient::new(vec![
            reply("C-Reactive Protein: sepsis; lupus"),
            "no block here".to_string(),
            reply("C-Reactive Protein: Sepsis\nHomocysteine: folate deficiency"),
        ]);
        let out = run_enhancement(&quick(PromptMode::Baseline, 3), &ThresholdTable::default(), None, &client).unwrap();
        assert_eq!(out.failed_runs, vec![1]);
        assert_eq!(out.roadmap.terms.len(), 3);
        assert!(out
            .roadmap
            .terms
            .iter()
            .all(|t| t.provenance == Provenance::LlmBaseline && t.status == TermStatus::Proposed));
    }

    #[test]
    fn transient_failures_retry_then_give_up() {
        let client = ScriptedClient::new(vec![reply("BMI: obesity")])
            .with_failure(1, CallError::Transient("connection refused".into()));
        let mut cfg = quick(PromptMode::Baseline, 2);
        cfg.retries = 2;
        let err = run_enhancement(&cfg, &ThresholdTable::default(), None, &client).unwrap_err();
        assert!(matches!(err, LlmError::EndpointUnreachable { run: 1, .. }));
    }

    #[test]
    fn all_unparseable() {
        let client = ScriptedClient::new(vec!["nothing".to_string(), "nada".to_string()]);
        let err = run_enhancement(&quick(PromptMode::Baseline, 2), &ThresholdTable::default(), None, &client).unwrap_err();
        assert!(matches!(err, LlmError::AllRunsUnparseable(2)));
    }

    #[test]
    fn transcripts_replay_to_same_roadmap() {
        let dir = tempfile::tempdir().unwrap();
        let client = ScriptedClient::new(vec![
            reply("Hemoglobin A1C: diabetes; hyperglycemia"),
            reply("Hemoglobin A1C:\n- insulin resistance"),
        ]);
        let mut cfg = quick(PromptMode::Context, 2);
        cfg.transcript_dir = Some(dir.path().to_path_buf());
        cfg.parallelism = 2;
        let original = Roadmap::clinicians_original();
        let live = run_enhancement(&cfg, &ThresholdTable::default(), Some(&original), &client).unwrap();
        let replayed = replay_transcripts(dir.path()).unwrap();
        assert_eq!(live.roadmap.key_set(), replayed.roadmap.key_set());
        assert_eq!(live.roadmap.to_csv_string(), replayed.roadmap.to_csv_string());
        assert!(dir.path().join("run_00.json").exists());
    }
}
