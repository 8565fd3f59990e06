//! Conjunctive word matching between search terms and ICD-10 descriptions.
//!
//! A code matches a term iff every word of the term occurs as a whole token
//! of the code's description. Matching intersects posting lists from the
//! catalog's inverted index.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::catalog::{Catalog, IcdCode};
use crate::component::AliComponent;
use crate::roadmap::{Roadmap, SearchTerm, TermId, TermStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MatchMode {
    /// Each word must equal a description token.
    #[default]
    Token,
    /// Each word must be a substring of some description token. Sensitivity
    /// analysis only.
    Substring,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MatchOptions {
    pub mode: MatchMode,
    /// Also match terms whose status is `proposed` (unadjudicated roadmaps).
    pub include_proposed: bool,
}

impl MatchOptions {
    pub fn participates(&self, term: &SearchTerm) -> bool {
        match term.status {
            TermStatus::Retained => true,
            TermStatus::Proposed => self.include_proposed,
            TermStatus::Excluded => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("search term {0} has no words")]
pub struct EmptyTerm(pub TermId);

/// Sorted entry positions of catalog entries matching every word.
pub fn match_words(words: &[String], catalog: &Catalog, mode: MatchMode) -> Vec<u32> {
    if words.is_empty() {
        return Vec::new();
    }
    let mut lists: Vec<Vec<u32>> = words
        .iter()
        .map(|w| match mode {
            MatchMode::Token => catalog.postings(w).to_vec(),
            MatchMode::Substring => substring_postings(w, catalog),
        })
        .collect();
    lists.sort_by_key(Vec::len);
    let mut acc = lists[0].clone();
    for list in &lists[1..] {
        if acc.is_empty() {
            break;
        }
        acc = intersect_sorted(&acc, list);
    }
    acc
}

fn substring_postings(word: &str, catalog: &Catalog) -> Vec<u32> {
    let set: BTreeSet<u32> = catalog
        .index()
        .iter()
        .filter(|(token, _)| token.contains(word))
        .flat_map(|(_, list)| list.iter().copied())
        .collect();
    set.into_iter().collect()
}

fn intersect_sorted(a: &[u32], b: &[u32]) -> Vec<u32> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::with_capacity(a.len().min(b.len()));
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

pub fn match_term(
    term: &SearchTerm,
    catalog: &Catalog,
    mode: MatchMode,
) -> Result<BTreeSet<IcdCode>, EmptyTerm> {
    if term.words.is_empty() {
        return Err(EmptyTerm(term.id.clone()));
    }
    Ok(match_words(&term.words, catalog, mode)
        .into_iter()
        .map(|pos| catalog.entry(pos).code.clone())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MatchResult {
    pub term_id: TermId,
    pub component: AliComponent,
    pub phrase: String,
    pub matched_codes: BTreeSet<IcdCode>,
    /// Subset of `matched_codes` present among the cohort's diagnoses.
    pub in_sample_codes: BTreeSet<IcdCode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct MatchSummary {
    pub terms: usize,
    pub codes_overall: usize,
    pub codes_in_sample: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RoadmapMatches {
    /// Sorted by term id.
    pub results: Vec<MatchResult>,
    pub summary: MatchSummary,
}

/// Codes matched per component, each with the term ids that matched it.
pub type ComponentCodes = BTreeMap<AliComponent, BTreeMap<IcdCode, Vec<TermId>>>;

impl RoadmapMatches {
    pub fn component_codes(&self) -> ComponentCodes {
        let mut out: ComponentCodes = AliComponent::ALL
            .into_iter()
            .map(|c| (c, BTreeMap::new()))
            .collect();
        for r in &self.results {
            let per = out.get_mut(&r.component).unwrap();
            for code in &r.matched_codes {
                per.entry(code.clone()).or_default().push(r.term_id.clone());
            }
        }
        out
    }

    pub fn all_codes(&self) -> BTreeSet<IcdCode> {
        self.results
            .iter()
            .flat_map(|r| r.matched_codes.iter().cloned())
            .collect()
    }

    pub fn get(&self, id: &TermId) -> Option<&MatchResult> {
        self.results
            .binary_search_by(|r| r.term_id.cmp(id))
            .ok()
            .map(|i| &self.results[i])
    }

    /// Drop (component, code) pairs listed in `exclusions` and recompute the
    /// summary.
    pub fn exclude(&mut self, exclusions: &CodeExclusions) {
        if exclusions.is_empty() {
            return;
        }
        for r in &mut self.results {
            r.matched_codes
                .retain(|c| !exclusions.contains(&(r.component, c.clone())));
            r.in_sample_codes
                .retain(|c| !exclusions.contains(&(r.component, c.clone())));
        }
        self.summary = summarize(&self.results, self.summary.terms);
    }

    /// Rows `(term_id, component, phrase, code, in_sample)`, one per matched code.
    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["term_id", "component", "phrase", "code", "in_sample"])?;
        for r in &self.results {
            for code in &r.matched_codes {
                let in_sample = r.in_sample_codes.contains(code);
                wtr.write_record([
                    r.term_id.as_str(),
                    r.component.key(),
                    &r.phrase,
                    code.as_dotted(),
                    if in_sample { "1" } else { "0" },
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }

    /// Inverse of [`RoadmapMatches::write_csv`]. Terms without any matched
    /// code do not appear in that file and therefore not in the result.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, MatchFileError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut by_term: BTreeMap<TermId, MatchResult> = BTreeMap::new();
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            if record.len() < 5 {
                return Err(MatchFileError::Row(line, "expected 5 columns".into()));
            }
            let component: AliComponent = record[1]
                .parse()
                .map_err(|e: crate::component::UnknownComponent| {
                    MatchFileError::Row(line, e.to_string())
                })?;
            let code = IcdCode::parse(&record[3])
                .map_err(|e| MatchFileError::Row(line, e.to_string()))?;
            let in_sample = match record[4].trim() {
                "1" | "true" => true,
                "0" | "false" => false,
                other => return Err(MatchFileError::Row(line, format!("bad flag {other:?}"))),
            };
            let id = TermId(record[0].to_string());
            let entry = by_term.entry(id.clone()).or_insert_with(|| MatchResult {
                term_id: id,
                component,
                phrase: record[2].to_string(),
                matched_codes: BTreeSet::new(),
                in_sample_codes: BTreeSet::new(),
            });
            if in_sample {
                entry.in_sample_codes.insert(code.clone());
            }
            entry.matched_codes.insert(code);
        }
        let results: Vec<_> = by_term.into_values().collect();
        let terms = results.len();
        Ok(RoadmapMatches {
            summary: summarize(&results, terms),
            results,
        })
    }

    pub fn load(path: &Path) -> Result<Self, MatchFileError> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MatchFileError {
    #[error("match file line {0}: {1}")]
    Row(u64, String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn summarize(results: &[MatchResult], terms: usize) -> MatchSummary {
    let overall: BTreeSet<&IcdCode> = results.iter().flat_map(|r| &r.matched_codes).collect();
    let in_sample: BTreeSet<&IcdCode> = results.iter().flat_map(|r| &r.in_sample_codes).collect();
    MatchSummary {
        terms,
        codes_overall: overall.len(),
        codes_in_sample: in_sample.len(),
    }
}

/// Match every participating term of `roadmap`. When `sample_codes` is given,
/// in-sample subsets are restricted to it; otherwise they are empty.
pub fn match_roadmap(
    roadmap: &Roadmap,
    catalog: &Catalog,
    sample_codes: Option<&BTreeSet<IcdCode>>,
    options: MatchOptions,
) -> RoadmapMatches {
    let mut results: Vec<MatchResult> = roadmap
        .terms
        .iter()
        .filter(|t| options.participates(t) && !t.words.is_empty())
        .map(|t| {
            let matched_codes = match_term(t, catalog, options.mode).unwrap_or_default();
            let in_sample_codes = match sample_codes {
                Some(sample) => matched_codes.intersection(sample).cloned().collect(),
                None => BTreeSet::new(),
            };
            MatchResult {
                term_id: t.id.clone(),
                component: t.component,
                phrase: t.phrase.clone(),
                matched_codes,
                in_sample_codes,
            }
        })
        .collect();
    results.sort_by(|a, b| a.term_id.cmp(&b.term_id));
    let terms = results.len();
    RoadmapMatches {
        summary: summarize(&results, terms),
        results,
    }
}

/// (component, code) pairs removed from matching after code-level review.
pub type CodeExclusions = BTreeSet<(AliComponent, IcdCode)>;

/// Read a `component,code` file of code-level exclusions.
pub fn load_code_exclusions(path: &Path) -> Result<CodeExclusions, MatchFileError> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = CodeExclusions::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let component: AliComponent = record
            .get(0)
            .unwrap_or("")
            .parse()
            .map_err(|e: crate::component::UnknownComponent| MatchFileError::Row(line, e.to_string()))?;
        let code = IcdCode::parse(record.get(1).unwrap_or(""))
            .map_err(|e| MatchFileError::Row(line, e.to_string()))?;
        out.insert((component, code));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{CatalogFormat, IcdEntry};
    use crate::roadmap::Provenance;

    fn catalog(rows: &[(&str, &str)]) -> Catalog {
        Catalog::from_entries(
            rows.iter()
                .map(|(c, d)| IcdEntry::new(IcdCode::parse(c).unwrap(), *d))
                .collect(),
        )
        .unwrap()
    }

    fn term(c: AliComponent, phrase: &str) -> SearchTerm {
        SearchTerm::new(c, phrase, Provenance::ClinicianOriginal, TermStatus::Retained).unwrap()
    }

    #[test]
    fn vitamin_deficiency_requires_both_words() {
        let cat = catalog(&[
            ("E55.9", "Vitamin D deficiency, unspecified"),
            ("T45.8X1A", "Vitamin D intoxication"),
        ]);
        let t = term(AliComponent::Homocysteine, "vitamin deficiency");
        let got = match_term(&t, &cat, MatchMode::Token).unwrap();
        assert_eq!(got.len(), 1);
        assert!(got.contains(&IcdCode::parse("E559").unwrap()));
    }

    #[test]
    fn whole_token_vs_substring() {
        let cat = catalog(&[("N39.0", "Urinary tract infection, site not specified")]);
        let t = term(AliComponent::CRP, "infect");
        assert!(match_term(&t, &cat, MatchMode::Token).unwrap().is_empty());
        assert_eq!(match_term(&t, &cat, MatchMode::Substring).unwrap().len(), 1);
        let t = term(AliComponent::CRP, "infection");
        assert_eq!(match_term(&t, &cat, MatchMode::Token).unwrap().len(), 1);
    }

    #[test]
    fn no_plural_folding() {
        let cat = catalog(&[("E34.9", "Endocrine disorder, unspecified syndrome")]);
        let t = term(AliComponent::CRP, "syndromes");
        assert!(match_term(&t, &cat, MatchMode::Token).unwrap().is_empty());
    }

    #[test]
    fn empty_term_is_an_error() {
        let mut t = term(AliComponent::CRP, "sepsis");
        t.words.clear();
        assert!(match_term(&t, &Catalog::default(), MatchMode::Token).is_err());
    }

    #[test]
    fn zero_retained_terms_give_zero_summary() {
        let mut r = Roadmap::clinicians_original();
        for t in &mut r.terms {
            t.status = TermStatus::Excluded;
        }
        let m = match_roadmap(&r, &Catalog::embedded_fixture(), None, MatchOptions::default());
        assert_eq!(m.summary, MatchSummary::default());
    }

    #[test]
    fn proposed_terms_need_opt_in() {
        let cat = catalog(&[("A41.9", "Sepsis, unspecified organism")]);
        let mut r = Roadmap::new("r");
        let mut t = term(AliComponent::CRP, "sepsis");
        t.provenance = Provenance::LlmContext;
        t.status = TermStatus::Proposed;
        r.terms.push(t);
        assert_eq!(match_roadmap(&r, &cat, None, MatchOptions::default()).summary.terms, 0);
        let opts = MatchOptions {
            include_proposed: true,
            ..Default::default()
        };
        assert_eq!(match_roadmap(&r, &cat, None, opts).summary.codes_overall, 1);
    }

    #[test]
    fn in_sample_restriction_and_csv_round_trip() {
        let cat = Catalog::from_reader(
            "A41.9\tSepsis, unspecified organism\nN39.0\tUrinary tract infection, site not specified\nI10\tEssential (primary) hypertension\n"
                .as_bytes(),
            CatalogFormat::Tsv,
        )
        .unwrap();
        let r = Roadmap::clinicians_original();
        let sample: BTreeSet<_> = [IcdCode::parse("N390").unwrap()].into();
        let m = match_roadmap(&r, &cat, Some(&sample), MatchOptions::default());
        assert_eq!(m.summary.codes_overall, 3);
        assert_eq!(m.summary.codes_in_sample, 1);
        for res in &m.results {
            assert!(res.in_sample_codes.is_subset(&res.matched_codes));
        }
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let back = RoadmapMatches::read_csv(buf.as_slice()).unwrap();
        let nonempty: Vec<_> = m.results.iter().filter(|r| !r.matched_codes.is_empty()).cloned().collect();
        assert_eq!(back.results, nonempty);
    }

    #[test]
    fn exclusions_remove_codes() {
        let cat = catalog(&[
            ("E23.2", "Diabetes insipidus"),
            ("E11.9", "Type 2 diabetes mellitus without complications"),
        ]);
        let r = Roadmap::clinicians_original();
        let mut m = match_roadmap(&r, &cat, None, MatchOptions::default());
        assert_eq!(m.summary.codes_overall, 2);
        let ex: CodeExclusions = [(AliComponent::HbA1c, IcdCode::parse("E23.2").unwrap())].into();
        m.exclude(&ex);
        assert_eq!(m.summary.codes_overall, 1);
    }
}
