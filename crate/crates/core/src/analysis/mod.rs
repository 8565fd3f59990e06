//! Evaluation machinery: four-category data-point accounting against the
//! EHR, missingness profiles, paired ALI tables and logistic regression.

pub mod logistic;
pub mod stats;

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::component::AliComponent;
use crate::phenotype::{compute_ali, ComponentStatus, StatusVector};
use crate::recovery::percent;

pub use logistic::{fit_logistic, RegressionError, RegressionFit};
pub use stats::{five_number, FiveNumber};

/// Chart-review protocol errors count as missing in every comparison.
pub fn remap_protocol_errors(statuses: &StatusVector) -> StatusVector {
    let mut out = *statuses;
    for s in &mut out {
        if *s == ComponentStatus::ProtocolError {
            *s = ComponentStatus::Missing;
        }
    }
    out
}

/// One status vector per patient, aligned with a shared patient id list.
#[derive(Debug, Clone, PartialEq)]
pub struct StatusSource {
    pub name: String,
    pub statuses: Vec<StatusVector>,
}

impl StatusSource {
    pub fn new(name: impl Into<String>, statuses: Vec<StatusVector>) -> Self {
        StatusSource {
            name: name.into(),
            statuses,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("source {name:?} covers {got} patients, expected {expected}")]
    SourceMismatch {
        name: String,
        got: usize,
        expected: usize,
    },
    #[error("source {0:?} still contains protocol-error statuses")]
    UnmappedProtocolError(String),
}

fn check_sources(expected: usize, sources: &[&StatusSource]) -> Result<(), AnalysisError> {
    for s in sources {
        if s.statuses.len() != expected {
            return Err(AnalysisError::SourceMismatch {
                name: s.name.clone(),
                got: s.statuses.len(),
                expected,
            });
        }
        if s.statuses.iter().flatten().any(|&x| x == ComponentStatus::ProtocolError) {
            return Err(AnalysisError::UnmappedProtocolError(s.name.clone()));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowchartCounts {
    pub source: String,
    pub patients: usize,
    pub healthy: usize,
    pub unhealthy: usize,
    pub missing: usize,
    /// Data points missing in the EHR source.
    pub ehr_missing: usize,
    /// EHR-missing data points that are not missing in this source.
    pub recovered: usize,
    /// Of `recovered`, those classified unhealthy.
    pub recovered_unhealthy: usize,
    pub recovered_percent: f64,
}

/// Tally each source against the EHR; the EHR itself is reported first.
pub fn flowchart(
    ehr: &StatusSource,
    sources: &[StatusSource],
) -> Result<Vec<FlowchartCounts>, AnalysisError> {
    let n = ehr.statuses.len();
    let mut all = vec![ehr];
    all.extend(sources.iter());
    check_sources(n, &all)?;
    let ehr_missing = ehr.statuses.iter().flatten().filter(|s| s.is_missing()).count();
    Ok(all
        .into_iter()
        .map(|src| {
            let mut c = FlowchartCounts {
                source: src.name.clone(),
                patients: n,
                healthy: 0,
                unhealthy: 0,
                missing: 0,
                ehr_missing,
                recovered: 0,
                recovered_unhealthy: 0,
                recovered_percent: 0.0,
            };
            for (row, base) in src.statuses.iter().zip(&ehr.statuses) {
                for (s, b) in row.iter().zip(base) {
                    match s {
                        ComponentStatus::Healthy => c.healthy += 1,
                        ComponentStatus::Unhealthy => c.unhealthy += 1,
                        _ => c.missing += 1,
                    }
                    if b.is_missing() && !s.is_missing() {
                        c.recovered += 1;
                        if *s == ComponentStatus::Unhealthy {
                            c.recovered_unhealthy += 1;
                        }
                    }
                }
            }
            c.recovered_percent = percent(c.recovered, ehr_missing);
            c
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MissingnessProfile {
    pub source: String,
    /// Non-missing component count per patient, in source order.
    pub non_missing_per_patient: Vec<u8>,
    pub non_missing_summary: Option<FiveNumber>,
    pub missing_per_component: BTreeMap<AliComponent, usize>,
}

pub fn missingness_profiles(sources: &[StatusSource]) -> Vec<MissingnessProfile> {
    sources
        .iter()
        .map(|src| {
            let per_patient: Vec<u8> = src
                .statuses
                .iter()
                .map(|row| row.iter().filter(|s| !s.is_missing()).count() as u8)
                .collect();
            let as_f64: Vec<f64> = per_patient.iter().map(|&v| f64::from(v)).collect();
            let mut per_component: BTreeMap<AliComponent, usize> =
                AliComponent::ALL.into_iter().map(|c| (c, 0)).collect();
            for row in &src.statuses {
                for c in AliComponent::ALL {
                    if row[c.index()].is_missing() {
                        *per_component.get_mut(&c).unwrap() += 1;
                    }
                }
            }
            MissingnessProfile {
                source: src.name.clone(),
                non_missing_summary: five_number(&as_f64),
                non_missing_per_patient: per_patient,
                missing_per_component: per_component,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AliPair {
    pub patient_id: String,
    pub ali_a: f64,
    pub ali_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AliPairs {
    pub source_a: String,
    pub source_b: String,
    pub rows: Vec<AliPair>,
    /// Patients whose ALI is undefined (all missing) in either source.
    pub excluded: usize,
}

pub fn ali_pairs(
    patient_ids: &[String],
    a: &StatusSource,
    b: &StatusSource,
) -> Result<AliPairs, AnalysisError> {
    check_sources(patient_ids.len(), &[a, b])?;
    let mut rows = Vec::new();
    let mut excluded = 0;
    for ((id, sa), sb) in patient_ids.iter().zip(&a.statuses).zip(&b.statuses) {
        match (compute_ali(sa), compute_ali(sb)) {
            (Ok(x), Ok(y)) => rows.push(AliPair {
                patient_id: id.clone(),
                ali_a: x.value,
                ali_b: y.value,
            }),
            _ => excluded += 1,
        }
    }
    rows.sort_by(|x, y| x.patient_id.cmp(&y.patient_id));
    Ok(AliPairs {
        source_a: a.name.clone(),
        source_b: b.name.clone(),
        rows,
        excluded,
    })
}

impl AliPairs {
    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["patient_id", &format!("ali_{}", self.source_a), &format!("ali_{}", self.source_b)])?;
        for r in &self.rows {
            w.write_record([r.patient_id.clone(), fmt_f64(r.ali_a), fmt_f64(r.ali_b)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Per-patient ALI for one source; `None` where every component is missing.
pub fn ali_values(source: &StatusSource) -> Vec<Option<f64>> {
    source
        .statuses
        .iter()
        .map(|s| compute_ali(s).ok().map(|a| a.value))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AliDistribution {
    pub source: String,
    pub defined: usize,
    pub undefined: usize,
    pub summary: Option<FiveNumber>,
}

pub fn ali_distribution(source: &StatusSource) -> AliDistribution {
    let vals = ali_values(source);
    let defined: Vec<f64> = vals.iter().flatten().copied().collect();
    AliDistribution {
        source: source.name.clone(),
        defined: defined.len(),
        undefined: vals.len() - defined.len(),
        summary: five_number(&defined),
    }
}

/// Fixed six-decimal rendering used in every CSV output.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.6}")
}


pub fn write_flowchart_csv<W: Write>(writer: W, counts: &[FlowchartCounts]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "source",
        "patients",
        "healthy",
        "unhealthy",
        "missing",
        "ehr_missing",
        "recovered",
        "recovered_unhealthy",
        "recovered_percent",
    ])?;
    for c in counts {
        w.write_record([
            c.source.clone(),
            c.patients.to_string(),
            c.healthy.to_string(),
            c.unhealthy.to_string(),
            c.missing.to_string(),
            c.ehr_missing.to_string(),
            c.recovered.to_string(),
            c.recovered_unhealthy.to_string(),
            fmt_f64(c.recovered_percent),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Long format: one row per (source, component) with the missing count.
pub fn write_missingness_csv<W: Write>(writer: W, profiles: &[MissingnessProfile]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["source", "component", "missing"])?;
    for p in profiles {
        for (c, n) in &p.missing_per_component {
            w.write_record([p.source.as_str(), c.key(), &n.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Engagement regressed on one source's ALI. Patients with undefined ALI are
/// dropped; a failed fit is reported, not hidden.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionReport {
    pub source: String,
    pub used: usize,
    pub excluded_undefined_ali: usize,
    pub fit: Option<RegressionFit>,
    pub error: Option<String>,
}

pub fn regress_engagement(engaged: &[bool], source: &StatusSource) -> Result<RegressionReport, AnalysisError> {
    check_sources(engaged.len(), &[source])?;
    let (mut y, mut x) = (Vec::new(), Vec::new());
    for (e, a) in engaged.iter().zip(ali_values(source)) {
        if let Some(a) = a {
            y.push(*e);
            x.push(a);
        }
    }
    let (fit, error) = match fit_logistic(&y, &x) {
        Ok(f) => (Some(f), None),
        Err(e) => {
            log::warn!("regression on {}: {e}", source.name);
            (None, Some(e.to_string()))
        }
    };
    Ok(RegressionReport {
        source: source.name.clone(),
        used: y.len(),
        excluded_undefined_ali: engaged.len() - y.len(),
        fit,
        error,
    })
}
