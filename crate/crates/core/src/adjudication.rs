//! Clinician adjudication of LLM-proposed terms: review queue, durable
//! decision log and export under a retention rule.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, IcdCode};
use crate::cohort::Cohort;
use crate::matcher::RoadmapMatches;
use crate::roadmap::{Provenance, Roadmap, SearchTerm, TermId, TermStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Approve,
    Reject,
}

impl std::str::FromStr for Verdict {
    type Err = AdjudicationError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "approve" => Ok(Verdict::Approve),
            "reject" => Ok(Verdict::Reject),
            _ => Err(AdjudicationError::InvalidVerdict(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetentionRule {
    /// Retained when at least one reviewer approves.
    #[default]
    AnyApprove,
    /// Retained when every reviewer who decided approves.
    AllApprove,
    /// Retained when approvals strictly outnumber rejections.
    Majority,
}

impl RetentionRule {
    pub fn retains(self, verdicts: impl IntoIterator<Item = Verdict>) -> bool {
        let (mut approve, mut reject) = (0usize, 0usize);
        for v in verdicts {
            match v {
                Verdict::Approve => approve += 1,
                Verdict::Reject => reject += 1,
            }
        }
        match self {
            RetentionRule::AnyApprove => approve > 0,
            RetentionRule::AllApprove => approve > 0 && reject == 0,
            RetentionRule::Majority => approve > reject,
        }
    }
}

impl std::str::FromStr for RetentionRule {
    type Err = AdjudicationError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "any_approve" | "any" => Ok(RetentionRule::AnyApprove),
            "all_approve" | "all" => Ok(RetentionRule::AllApprove),
            "majority" => Ok(RetentionRule::Majority),
            _ => Err(AdjudicationError::UnknownRule(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdjudicationDecision {
    pub term_id: TermId,
    pub reviewer_id: String,
    pub verdict: Verdict,
    #[serde(default)]
    pub note: String,
    pub timestamp: String,
}

/// Decision as submitted by a client, before validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionInput {
    pub term_id: String,
    pub reviewer_id: String,
    pub verdict: String,
    #[serde(default)]
    pub note: String,
    #[serde(default)]
    pub timestamp: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum AdjudicationError {
    #[error("unknown term {0}")]
    UnknownTerm(String),
    #[error("invalid verdict {0:?}; expected approve or reject")]
    InvalidVerdict(String),
    #[error("reviewer_id must not be empty")]
    EmptyReviewer,
    #[error("unknown retention rule {0:?}")]
    UnknownRule(String),
    #[error("{path}:{line}: corrupt decision record: {reason}")]
    CorruptLog { path: String, line: usize, reason: String },
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QueueCode {
    pub code: IcdCode,
    pub description: String,
    /// Patients in the cohort carrying the code, when a cohort was supplied.
    pub patient_count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReviewQueueItem {
    pub term: SearchTerm,
    pub codes: Vec<QueueCode>,
    /// Latest decision per reviewer.
    pub decisions: Vec<AdjudicationDecision>,
}

/// Proposed terms with at least one in-sample match, ordered by component then phrase.
pub fn build_queue(
    roadmap: &Roadmap,
    matches: &RoadmapMatches,
    catalog: &Catalog,
    cohort: Option<&Cohort>,
) -> Vec<ReviewQueueItem> {
    let counts: Option<BTreeMap<&IcdCode, usize>> = cohort.map(|c| {
        let mut m = BTreeMap::new();
        for p in &c.patients {
            for code in &p.diagnoses {
                *m.entry(code).or_insert(0) += 1;
            }
        }
        m
    });
    let mut queue: Vec<ReviewQueueItem> = roadmap
        .terms
        .iter()
        .filter(|t| t.provenance != Provenance::ClinicianOriginal)
        .filter_map(|t| {
            let result = matches.get(&t.id)?;
            if result.in_sample_codes.is_empty() {
                return None;
            }
            let codes = result
                .in_sample_codes
                .iter()
                .map(|code| QueueCode {
                    code: code.clone(),
                    description: catalog.get(code).map(|e| e.description.clone()).unwrap_or_default(),
                    patient_count: counts.as_ref().map(|m| m.get(code).copied().unwrap_or(0)),
                })
                .collect();
            Some(ReviewQueueItem {
                term: t.clone(),
                codes,
                decisions: Vec::new(),
            })
        })
        .collect();
    queue.sort_by(|a, b| {
        (a.term.component, a.term.phrase.to_lowercase(), &a.term.id)
            .cmp(&(b.term.component, b.term.phrase.to_lowercase(), &b.term.id))
    });
    queue
}

/// Latest verdict per (term, reviewer).
pub type LatestDecisions = BTreeMap<TermId, BTreeMap<String, AdjudicationDecision>>;

/// Append-only JSONL decision log. Each record is fsynced before `append` returns.
#[derive(Debug)]
pub struct DecisionStore {
    path: Option<PathBuf>,
    file: Option<File>,
    history: Vec<AdjudicationDecision>,
    latest: LatestDecisions,
}

impl DecisionStore {
    pub fn in_memory() -> Self {
        DecisionStore {
            path: None,
            file: None,
            history: Vec::new(),
            latest: BTreeMap::new(),
        }
    }

    /// Opens or creates the log, replaying existing records. A torn final
    /// line from an interrupted write is dropped with a warning.
    pub fn open(path: &Path) -> Result<Self, AdjudicationError> {
        let io = |e| AdjudicationError::Io(path.display().to_string(), e);
        let mut store = DecisionStore::in_memory();
        let mut valid_len = None;
        if path.exists() {
            let text = std::fs::read_to_string(path).map_err(io)?;
            let mut offset = 0;
            let lines: Vec<&str> = text.split_inclusive('\n').collect();
            for (i, raw) in lines.iter().enumerate() {
                let line = raw.trim();
                if !line.is_empty() {
                    match serde_json::from_str::<AdjudicationDecision>(line) {
                        Ok(d) => store.apply(d),
                        Err(e) if i + 1 == lines.len() && !raw.ends_with('\n') => {
                            log::warn!("{}: dropping torn final record: {e}", path.display());
                            valid_len = Some(offset as u64);
                            break;
                        }
                        Err(e) => {
                            return Err(AdjudicationError::CorruptLog {
                                path: path.display().to_string(),
                                line: i + 1,
                                reason: e.to_string(),
                            })
                        }
                    }
                }
                offset += raw.len();
            }
        }
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        if let Some(len) = valid_len {
            file.set_len(len).and_then(|_| file.sync_data()).map_err(io)?;
        }
        store.file = Some(file);
        store.path = Some(path.to_path_buf());
        Ok(store)
    }

    fn apply(&mut self, d: AdjudicationDecision) {
        self.latest
            .entry(d.term_id.clone())
            .or_default()
            .insert(d.reviewer_id.clone(), d.clone());
        self.history.push(d);
    }

    pub fn append(&mut self, d: AdjudicationDecision) -> Result<(), AdjudicationError> {
        if let Some(file) = self.file.as_mut() {
            let path = self.path.as_ref().expect("file implies path").display().to_string();
            let mut line = serde_json::to_string(&d).expect("decision serializes");
            line.push('\n');
            file.write_all(line.as_bytes())
                .and_then(|_| file.sync_data())
                .map_err(|e| AdjudicationError::Io(path, e))?;
        }
        self.apply(d);
        Ok(())
    }

    pub fn history(&self) -> &[AdjudicationDecision] {
        &self.history
    }

    pub fn history_for(&self, term: &TermId) -> Vec<&AdjudicationDecision> {
        self.history.iter().filter(|d| &d.term_id == term).collect()
    }

    pub fn latest(&self) -> &LatestDecisions {
        &self.latest
    }
}

/// Export: clinician originals kept, queued terms passing `rule` become
/// retained `llm_context_clinician`, every other proposed term is excluded.
pub fn export_adjudicated(
    roadmap: &Roadmap,
    queue: &[ReviewQueueItem],
    decisions: &LatestDecisions,
    rule: RetentionRule,
) -> Roadmap {
    let queued: std::collections::BTreeSet<&TermId> = queue.iter().map(|q| &q.term.id).collect();
    let mut out = Roadmap::new("llm_context_clinician");
    for t in &roadmap.terms {
        let mut t = t.clone();
        if t.provenance == Provenance::ClinicianOriginal {
            out.terms.push(t);
            continue;
        }
        let approved = queued.contains(&t.id)
            && decisions
                .get(&t.id)
                .is_some_and(|by| rule.retains(by.values().map(|d| d.verdict)));
        if approved {
            t.provenance = Provenance::LlmContextClinician;
            t.status = TermStatus::Retained;
        } else {
            t.status = TermStatus::Excluded;
        }
        out.terms.push(t);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub queued: usize,
    pub pending: usize,
    pub decided: usize,
    /// Queued terms the default rule would retain.
    pub retained_if_exported: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermTally {
    pub term_id: TermId,
    pub approvals: usize,
    pub rejections: usize,
    pub history_len: usize,
}

/// Queue plus decision store; the state behind the review service.
#[derive(Debug)]
pub struct Adjudication {
    roadmap: Roadmap,
    queue: Vec<ReviewQueueItem>,
    index: BTreeMap<TermId, usize>,
    store: DecisionStore,
}

impl Adjudication {
    pub fn new(roadmap: Roadmap, queue: Vec<ReviewQueueItem>, store: DecisionStore) -> Self {
        let index: BTreeMap<TermId, usize> = queue.iter().enumerate().map(|(i, q)| (q.term.id.clone(), i)).collect();
        let stray = store.latest().keys().filter(|id| !index.contains_key(*id)).count();
        if stray > 0 {
            log::warn!("decision log mentions {stray} terms not in the queue; they are ignored");
        }
        Adjudication {
            roadmap,
            queue,
            index,
            store,
        }
    }

    pub fn roadmap(&self) -> &Roadmap {
        &self.roadmap
    }

    pub fn store(&self) -> &DecisionStore {
        &self.store
    }

    fn with_decisions(&self, item: &ReviewQueueItem) -> ReviewQueueItem {
        let mut item = item.clone();
        item.decisions = self
            .store
            .latest()
            .get(&item.term.id)
            .map(|by| by.values().cloned().collect())
            .unwrap_or_default();
        item
    }

    pub fn queue(&self) -> Vec<ReviewQueueItem> {
        self.queue.iter().map(|q| self.with_decisions(q)).collect()
    }

    pub fn item(&self, id: &str) -> Option<ReviewQueueItem> {
        let i = *self.index.get(&TermId(id.to_string()))?;
        Some(self.with_decisions(&self.queue[i]))
    }

    pub fn tally(&self, id: &TermId) -> TermTally {
        let latest = self.store.latest().get(id);
        let count = |v| latest.map_or(0, |by| by.values().filter(|d| d.verdict == v).count());
        TermTally {
            term_id: id.clone(),
            approvals: count(Verdict::Approve),
            rejections: count(Verdict::Reject),
            history_len: self.store.history_for(id).len(),
        }
    }

    /// Validates, persists, then applies a decision.
    pub fn submit(&mut self, input: DecisionInput) -> Result<TermTally, AdjudicationError> {
        let term_id = TermId(input.term_id.trim().to_string());
        if !self.index.contains_key(&term_id) {
            return Err(AdjudicationError::UnknownTerm(input.term_id));
        }
        let verdict: Verdict = input.verdict.parse()?;
        let reviewer_id = input.reviewer_id.trim().to_string();
        if reviewer_id.is_empty() {
            return Err(AdjudicationError::EmptyReviewer);
        }
        let decision = AdjudicationDecision {
            term_id: term_id.clone(),
            reviewer_id,
            verdict,
            note: input.note,
            timestamp: input.timestamp.unwrap_or_else(now_rfc3339),
        };
        self.store.append(decision)?;
        Ok(self.tally(&term_id))
    }

    pub fn progress(&self) -> Progress {
        let latest = self.store.latest();
        let decided = self.queue.iter().filter(|q| latest.get(&q.term.id).is_some_and(|m| !m.is_empty())).count();
        let retained = self
            .queue
            .iter()
            .filter(|q| {
                latest
                    .get(&q.term.id)
                    .is_some_and(|by| RetentionRule::AnyApprove.retains(by.values().map(|d| d.verdict)))
            })
            .count();
        Progress {
            queued: self.queue.len(),
            pending: self.queue.len() - decided,
            decided,
            retained_if_exported: retained,
        }
    }

    pub fn export(&self, rule: RetentionRule) -> Roadmap {
        export_adjudicated(&self.roadmap, &self.queue, self.store.latest(), rule)
    }
}

fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::component::AliComponent;
    use crate::matcher::{match_roadmap, MatchOptions};
    use crate::roadmap::union_roadmaps;

    fn setup() -> (Roadmap, Vec<ReviewQueueItem>) {
        let catalog = Catalog::embedded_fixture();
        let mut llm = Roadmap::new("llm_context");
        for (c, p) in [
            (AliComponent::CRP, "Sepsis"),
            (AliComponent::CRP, "pneumonia"),
            (AliComponent::HbA1c, "hyperglycemia"),
            (AliComponent::CRP, "zzzz nonexistent"),
        ] {
            llm.terms.push(SearchTerm::new(c, p, Provenance::LlmContext, TermStatus::Proposed).unwrap());
        }
        let roadmap = union_roadmaps([&Roadmap::clinicians_original(), &llm], "combined");
        let opts = MatchOptions {
            include_proposed: true,
            ..Default::default()
        };
        let sample: std::collections::BTreeSet<IcdCode> = catalog.entries().iter().map(|e| e.code.clone()).collect();
        let matches = match_roadmap(&roadmap, &catalog, Some(&sample), opts);
        let queue = build_queue(&roadmap, &matches, &catalog, None);
        (roadmap, queue)
    }

    fn input(term: &str, reviewer: &str, verdict: &str) -> DecisionInput {
        DecisionInput {
            term_id: term.into(),
            reviewer_id: reviewer.into(),
            verdict: verdict.into(),
            note: String::new(),
            timestamp: Some("2026-01-01T00:00:00.000Z".into()),
        }
    }

    #[test]
    fn queue_excludes_originals_and_unmatched() {
        let (_, queue) = setup();
        let ids: Vec<_> = queue.iter().map(|q| q.term.id.as_str()).collect();
        assert!(ids.contains(&"CRP:pneumonia"));
        assert!(!ids.contains(&"CRP:sepsis"));
        assert!(!ids.iter().any(|i| i.contains("nonexistent")));
        assert!(queue.iter().all(|q| !q.codes.is_empty() && q.codes.iter().all(|c| !c.description.is_empty())));
    }

    #[test]
    fn overwrite_keeps_history() {
        let (roadmap, queue) = setup();
        let mut adj = Adjudication::new(roadmap, queue, DecisionStore::in_memory());
        adj.submit(input("CRP:pneumonia", "a", "approve")).unwrap();
        let t = adj.submit(input("CRP:pneumonia", "a", "reject")).unwrap();
        assert_eq!((t.approvals, t.rejections, t.history_len), (0, 1, 2));
        assert!(matches!(adj.submit(input("CRP:nope", "a", "approve")), Err(AdjudicationError::UnknownTerm(_))));
        assert!(matches!(
            adj.submit(input("CRP:pneumonia", "a", "maybe")),
            Err(AdjudicationError::InvalidVerdict(_))
        ));
    }

    #[test]
    fn rules_and_export() {
        let (roadmap, queue) = setup();
        let mut adj = Adjudication::new(roadmap.clone(), queue, DecisionStore::in_memory());
        let none = adj.export(RetentionRule::AnyApprove);
        assert_eq!(none.retained().count(), Roadmap::clinicians_original().terms.len());

        adj.submit(input("CRP:pneumonia", "a", "approve")).unwrap();
        adj.submit(input("CRP:pneumonia", "b", "reject")).unwrap();
        let any = adj.export(RetentionRule::AnyApprove);
        let t = any.get(&TermId("CRP:pneumonia".into())).unwrap();
        assert_eq!((t.provenance, t.status), (Provenance::LlmContextClinician, TermStatus::Retained));
        let all = adj.export(RetentionRule::AllApprove);
        assert_eq!(all.get(&TermId("CRP:pneumonia".into())).unwrap().status, TermStatus::Excluded);
        let maj = adj.export(RetentionRule::Majority);
        assert_eq!(maj.get(&TermId("CRP:pneumonia".into())).unwrap().status, TermStatus::Excluded);
        assert_eq!(any.terms.len(), roadmap.terms.len());

        let p = adj.progress();
        assert_eq!((p.decided, p.retained_if_exported), (1, 1));
        assert_eq!(p.pending, p.queued - 1);
    }

    #[test]
    fn log_survives_reopen_and_torn_tail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("decisions.jsonl");
        let (roadmap, queue) = setup();
        let mut adj = Adjudication::new(roadmap.clone(), queue.clone(), DecisionStore::open(&path).unwrap());
        adj.submit(input("CRP:pneumonia", "a", "approve")).unwrap();
        adj.submit(input("HbA1c:hyperglycemia", "b", "reject")).unwrap();
        let before = adj.export(RetentionRule::AnyApprove).to_csv_string();
        drop(adj);

        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"term_id\":\"CRP:pn").unwrap();
        drop(f);
        let store = DecisionStore::open(&path).unwrap();
        assert_eq!(store.history().len(), 2);
        let mut adj = Adjudication::new(roadmap.clone(), queue.clone(), store);
        assert_eq!(adj.export(RetentionRule::AnyApprove).to_csv_string(), before);
        adj.submit(input("HbA1c:hyperglycemia", "a", "approve")).unwrap();
        drop(adj);
        let store = DecisionStore::open(&path).unwrap();
        assert_eq!(store.history().len(), 3);
    }
}
