//! Roadmaps: per-component lists of diagnosis search phrases with provenance.
//!
//! A term is identified by its component and its tokenized words, so
//! `Renal Failure` and `renal failure` are the same term.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::catalog::tokenize;
use crate::component::AliComponent;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    ClinicianOriginal,
    LlmBaseline,
    LlmContext,
    LlmContextClinician,
}

impl Provenance {
    pub const ALL: [Provenance; 4] = [
        Provenance::ClinicianOriginal,
        Provenance::LlmBaseline,
        Provenance::LlmContext,
        Provenance::LlmContextClinician,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::ClinicianOriginal => "clinician_original",
            Provenance::LlmBaseline => "llm_baseline",
            Provenance::LlmContext => "llm_context",
            Provenance::LlmContextClinician => "llm_context_clinician",
        }
    }
}

impl FromStr for Provenance {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim().to_ascii_lowercase().replace([' ', '-'], "_");
        Provenance::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or(s)
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermStatus {
    Proposed,
    Retained,
    Excluded,
}

impl TermStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TermStatus::Proposed => "proposed",
            TermStatus::Retained => "retained",
            TermStatus::Excluded => "excluded",
        }
    }
}

impl FromStr for TermStatus {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "proposed" => Ok(TermStatus::Proposed),
            "retained" => Ok(TermStatus::Retained),
            "excluded" => Ok(TermStatus::Excluded),
            other => Err(other.to_string()),
        }
    }
}

impl fmt::Display for TermStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Identity of a term: component plus tokenized words.
pub type TermKey = (AliComponent, Vec<String>);

/// Stable term identifier, e.g. `Homocysteine:vitamin-deficiency`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TermId(pub String);

impl TermId {
    pub fn from_key(component: AliComponent, words: &[String]) -> Self {
        TermId(format!("{}:{}", component.key(), words.join("-")))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TermId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchTerm {
    pub id: TermId,
    pub component: AliComponent,
    pub phrase: String,
    pub words: Vec<String>,
    pub provenance: Provenance,
    pub status: TermStatus,
}

impl SearchTerm {
    /// Returns `None` when the phrase tokenizes to nothing.
    pub fn new(
        component: AliComponent,
        phrase: &str,
        provenance: Provenance,
        status: TermStatus,
    ) -> Option<Self> {
        let words = tokenize(phrase);
        if words.is_empty() {
            return None;
        }
        Some(SearchTerm {
            id: TermId::from_key(component, &words),
            component,
            phrase: phrase.trim().to_string(),
            words,
            provenance,
            status,
        })
    }

    pub fn key(&self) -> TermKey {
        (self.component, self.words.clone())
    }

    pub fn is_retained(&self) -> bool {
        self.status == TermStatus::Retained
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RoadmapError {
    #[error("roadmap file not found: {0}")]
    MissingFile(String),
    #[error("line {line}: unknown ALI component {name:?}")]
    UnknownComponent { line: u64, name: String },
    #[error("line {0}: empty search phrase")]
    EmptyPhrase(u64),
    #[error("line {line}: unknown provenance {value:?}")]
    BadProvenance { line: u64, value: String },
    #[error("line {line}: unknown status {value:?}")]
    BadStatus { line: u64, value: String },
    #[error("line {0}: clinician_original terms must have status retained")]
    ClinicianTermNotRetained(u64),
    #[error("roadmap header must start with component,phrase")]
    BadHeader,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A duplicate row collapsed during parsing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DuplicateRow {
    pub line: u64,
    pub id: TermId,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Roadmap {
    pub name: String,
    pub terms: Vec<SearchTerm>,
}

const CLINICIANS_ORIGINAL: &str = include_str!("../data/roadmap_clinicians_original.csv");

impl Roadmap {
    pub fn new(name: impl Into<String>) -> Self {
        Roadmap {
            name: name.into(),
            terms: Vec::new(),
        }
    }

    /// The clinicians' original roadmap shipped with the crate.
    pub fn clinicians_original() -> Self {
        Self::from_reader(CLINICIANS_ORIGINAL.as_bytes(), "clinicians_original")
            .expect("bundled roadmap is valid")
    }

    pub fn load(path: &Path) -> Result<Self, RoadmapError> {
        Ok(Self::load_with_report(path)?.0)
    }

    pub fn load_with_report(path: &Path) -> Result<(Self, Vec<DuplicateRow>), RoadmapError> {
        if !path.is_file() {
            return Err(RoadmapError::MissingFile(path.display().to_string()));
        }
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("roadmap")
            .to_string();
        Self::parse_with_report(std::fs::File::open(path)?, &name)
    }

    pub fn from_reader<R: Read>(reader: R, name: &str) -> Result<Self, RoadmapError> {
        Ok(Self::parse_with_report(reader, name)?.0)
    }

    /// Columns: component, phrase, provenance, status. The last two may be
    /// omitted and default to `clinician_original` / `retained`.
    pub fn parse_with_report<R: Read>(
        reader: R,
        name: &str,
    ) -> Result<(Self, Vec<DuplicateRow>), RoadmapError> {
        let mut rdr = csv::ReaderBuilder::new()
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.len() < 2
            || !header[0].eq_ignore_ascii_case("component")
            || !header[1].eq_ignore_ascii_case("phrase")
        {
            return Err(RoadmapError::BadHeader);
        }
        let mut roadmap = Roadmap::new(name);
        let mut seen = HashSet::new();
        let mut duplicates = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            if record.iter().all(str::is_empty) {
                continue;
            }
            let comp_name = record.get(0).unwrap_or("");
            let component: AliComponent =
                comp_name
                    .parse()
                    .map_err(|_| RoadmapError::UnknownComponent {
                        line,
                        name: comp_name.to_string(),
                    })?;
            let phrase = record.get(1).unwrap_or("");
            let provenance = match record.get(2).filter(|s| !s.is_empty()) {
                None => Provenance::ClinicianOriginal,
                Some(v) => v.parse().map_err(|_| RoadmapError::BadProvenance {
                    line,
                    value: v.to_string(),
                })?,
            };
            let status = match record.get(3).filter(|s| !s.is_empty()) {
                None => TermStatus::Retained,
                Some(v) => v.parse().map_err(|_| RoadmapError::BadStatus {
                    line,
                    value: v.to_string(),
                })?,
            };
            if provenance == Provenance::ClinicianOriginal && status != TermStatus::Retained {
                return Err(RoadmapError::ClinicianTermNotRetained(line));
            }
            let term = SearchTerm::new(component, phrase, provenance, status)
                .ok_or(RoadmapError::EmptyPhrase(line))?;
            if seen.insert(term.key()) {
                roadmap.terms.push(term);
            } else {
                log::warn!("{name}: line {line}: duplicate term {} collapsed", term.id);
                duplicates.push(DuplicateRow { line, id: term.id });
            }
        }
        Ok((roadmap, duplicates))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), RoadmapError> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["component", "phrase", "provenance", "status"])?;
        for t in &self.terms {
            wtr.write_record([
                t.component.key(),
                &t.phrase,
                t.provenance.as_str(),
                t.status.as_str(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("utf-8")
    }

    pub fn save(&self, path: &Path) -> Result<(), RoadmapError> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn get(&self, id: &TermId) -> Option<&SearchTerm> {
        self.terms.iter().find(|t| &t.id == id)
    }

    pub fn retained(&self) -> impl Iterator<Item = &SearchTerm> {
        self.terms.iter().filter(|t| t.is_retained())
    }

    pub fn terms_for(&self, component: AliComponent) -> impl Iterator<Item = &SearchTerm> {
        self.terms.iter().filter(move |t| t.component == component)
    }

    pub fn key_set(&self) -> HashSet<TermKey> {
        self.terms.iter().map(SearchTerm::key).collect()
    }

    /// Number of distinct word sets regardless of component. A phrase listed
    /// under two components counts once.
    pub fn distinct_phrase_count(&self) -> usize {
        self.terms
            .iter()
            .map(|t| t.words.clone())
            .collect::<HashSet<_>>()
            .len()
    }

    pub fn stats(&self) -> RoadmapStats {
        let mut per_component = BTreeMap::new();
        for c in AliComponent::ALL {
            per_component.insert(c, 0);
        }
        let mut by_provenance = BTreeMap::new();
        let mut retained = 0;
        for t in &self.terms {
            *per_component.entry(t.component).or_insert(0) += 1;
            *by_provenance.entry(t.provenance).or_insert(0) += 1;
            if t.is_retained() {
                retained += 1;
            }
        }
        RoadmapStats {
            name: self.name.clone(),
            terms: self.terms.len(),
            distinct_phrases: self.distinct_phrase_count(),
            retained,
            per_component,
            by_provenance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RoadmapStats {
    pub name: String,
    pub terms: usize,
    pub distinct_phrases: usize,
    pub retained: usize,
    pub per_component: BTreeMap<AliComponent, usize>,
    pub by_provenance: BTreeMap<Provenance, usize>,
}

/// Set union keyed by term identity. The first input that contains a term
/// decides its phrase, provenance and status.
pub fn union_roadmaps<'a, I>(maps: I, name: &str) -> Roadmap
where
    I: IntoIterator<Item = &'a Roadmap>,
{
    let mut out = Roadmap::new(name);
    let mut seen = HashSet::new();
    for map in maps {
        for term in &map.terms {
            if seen.insert(term.key()) {
                out.terms.push(term.clone());
            }
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ComponentDiff {
    pub added: Vec<SearchTerm>,
    pub removed: Vec<SearchTerm>,
    pub common: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RoadmapDiff {
    pub components: BTreeMap<AliComponent, ComponentDiff>,
}

impl RoadmapDiff {
    pub fn is_empty(&self) -> bool {
        self.components
            .values()
            .all(|d| d.added.is_empty() && d.removed.is_empty())
    }

    pub fn added_count(&self) -> usize {
        self.components.values().map(|d| d.added.len()).sum()
    }

    pub fn removed_count(&self) -> usize {
        self.components.values().map(|d| d.removed.len()).sum()
    }
}

/// Terms present only in `b` are added, only in `a` removed.
pub fn diff_roadmaps(a: &Roadmap, b: &Roadmap) -> RoadmapDiff {
    let a_keys: HashMap<TermKey, &SearchTerm> = a.terms.iter().map(|t| (t.key(), t)).collect();
    let b_keys: HashMap<TermKey, &SearchTerm> = b.terms.iter().map(|t| (t.key(), t)).collect();
    let mut diff = RoadmapDiff::default();
    for c in AliComponent::ALL {
        diff.components.insert(c, ComponentDiff::default());
    }
    for t in &a.terms {
        let entry = diff.components.get_mut(&t.component).unwrap();
        if b_keys.contains_key(&t.key()) {
            entry.common += 1;
        } else {
            entry.removed.push(t.clone());
        }
    }
    for t in &b.terms {
        if !a_keys.contains_key(&t.key()) {
            diff.components.get_mut(&t.component).unwrap().added.push(t.clone());
        }
    }
    for d in diff.components.values_mut() {
        d.added.sort_by(|x, y| x.id.cmp(&y.id));
        d.removed.sort_by(|x, y| x.id.cmp(&y.id));
    }
    diff
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn term(c: AliComponent, phrase: &str) -> SearchTerm {
        SearchTerm::new(c, phrase, Provenance::LlmContext, TermStatus::Proposed).unwrap()
    }

    fn map(name: &str, terms: &[(AliComponent, &str)]) -> Roadmap {
        Roadmap {
            name: name.into(),
            terms: terms.iter().map(|(c, p)| term(*c, p)).collect(),
        }
    }

    #[test]
    fn parses_table_rows() {
        let csv = "component,phrase,provenance,status\n\
                   CRP,Sepsis,clinician_original,retained\n\
                   HbA1c,Impaired Glycemic Control,clinician_original,retained\n";
        let r = Roadmap::from_reader(csv.as_bytes(), "t").unwrap();
        assert_eq!(r.terms[0].words, ["sepsis"]);
        assert_eq!(r.terms[1].words, ["impaired", "glycemic", "control"]);
        assert_eq!(r.terms[1].id.as_str(), "HbA1c:impaired-glycemic-control");
    }

    #[test]
    fn unknown_component_and_empty_phrase() {
        let err = Roadmap::from_reader("component,phrase\nX,foo\n".as_bytes(), "t").unwrap_err();
        assert!(matches!(err, RoadmapError::UnknownComponent { line: 2, .. }));
        let err = Roadmap::from_reader("component,phrase\nCRP, -- \n".as_bytes(), "t").unwrap_err();
        assert!(matches!(err, RoadmapError::EmptyPhrase(2)));
    }

    #[test]
    fn clinician_terms_must_be_retained() {
        let csv = "component,phrase,provenance,status\nCRP,Sepsis,clinician_original,excluded\n";
        assert!(matches!(
            Roadmap::from_reader(csv.as_bytes(), "t"),
            Err(RoadmapError::ClinicianTermNotRetained(2))
        ));
    }

    #[test]
    fn duplicates_collapse_case_insensitively() {
        let csv = "component,phrase\nCreatinineClearance,Renal Failure\nCreatinineClearance,renal failure\n";
        let (r, dups) = Roadmap::parse_with_report(csv.as_bytes(), "t").unwrap();
        assert_eq!(r.terms.len(), 1);
        assert_eq!(dups.len(), 1);
        assert_eq!(dups[0].line, 3);
    }

    #[test]
    fn shipped_original_roadmap_shape() {
        let r = Roadmap::clinicians_original();
        assert_eq!(r.distinct_phrase_count(), 20);
        assert_eq!(r.terms.len(), 21);
        assert_eq!(r.terms_for(AliComponent::SerumAlbumin).count(), 0);
        assert!(r.terms.iter().all(|t| t.is_retained()));
    }

    #[test]
    fn union_is_set_union_with_first_provenance() {
        use AliComponent::CRP;
        let a = map("a", &[(CRP, "a"), (CRP, "b")]);
        let mut b = map("b", &[(CRP, "B"), (CRP, "c")]);
        b.terms[0].provenance = Provenance::LlmBaseline;
        let u = union_roadmaps([&a, &b], "u");
        let words: Vec<_> = u.terms.iter().map(|t| t.words.join(" ")).collect();
        assert_eq!(words, ["a", "b", "c"]);
        assert_eq!(u.terms[1].provenance, Provenance::LlmContext);
        assert_eq!(union_roadmaps([&a, &a], "aa").key_set(), a.key_set());
    }

    #[test]
    fn diff_reports_added_and_removed() {
        use AliComponent::*;
        let a = map("a", &[(CRP, "sepsis"), (HbA1c, "diabetes")]);
        assert!(diff_roadmaps(&a, &a).is_empty());
        let mut b = a.clone();
        b.terms.push(term(CRP, "pneumonia"));
        let d = diff_roadmaps(&a, &b);
        assert_eq!(d.added_count(), 1);
        assert_eq!(d.components[&CRP].added[0].phrase, "pneumonia");
        assert_eq!(d.removed_count(), 0);
    }

    #[test]
    fn csv_round_trip() {
        let r = Roadmap::clinicians_original();
        let again = Roadmap::from_reader(r.to_csv_string().as_bytes(), &r.name).unwrap();
        assert_eq!(again, r);
    }

    fn arb_roadmap() -> impl Strategy<Value = Roadmap> {
        prop::collection::vec((0usize..10, "[a-d]{1,2}( [a-d]{1,2})?"), 0..12).prop_map(|rows| {
            let terms: Vec<_> = rows
                .into_iter()
                .map(|(c, p)| term(AliComponent::ALL[c], &p))
                .collect();
            union_roadmaps([&Roadmap { name: "x".into(), terms }], "x")
        })
    }

    proptest! {
        #[test]
        fn union_laws(a in arb_roadmap(), b in arb_roadmap(), c in arb_roadmap()) {
            let ab = union_roadmaps([&a, &b], "ab");
            let ba = union_roadmaps([&b, &a], "ba");
            prop_assert_eq!(ab.key_set(), ba.key_set());
            let left = union_roadmaps([&ab, &c], "l");
            let bc = union_roadmaps([&b, &c], "bc");
            let right = union_roadmaps([&a, &bc], "r");
            prop_assert_eq!(left.key_set(), right.key_set());
            prop_assert_eq!(union_roadmaps([&a, &a], "aa").key_set(), a.key_set());
        }

        #[test]
        fn diff_partitions_exactly(a in arb_roadmap(), b in arb_roadmap()) {
            let d = diff_roadmaps(&a, &b);
            let common: HashSet<_> = a.key_set().intersection(&b.key_set()).cloned().collect();
            let removed: HashSet<_> = d.components.values().flat_map(|x| x.removed.iter().map(SearchTerm::key)).collect();
            let added: HashSet<_> = d.components.values().flat_map(|x| x.added.iter().map(SearchTerm::key)).collect();
            prop_assert_eq!(common.union(&removed).cloned().collect::<HashSet<_>>(), a.key_set());
            prop_assert_eq!(common.union(&added).cloned().collect::<HashSet<_>>(), b.key_set());
        }
    }
}
