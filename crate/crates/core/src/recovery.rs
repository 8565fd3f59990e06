//! Missing-data recovery: a component missing from the EHR becomes unhealthy
//! when the patient carries a diagnosis code matched by a retained roadmap
//! term for that component. Observed components are never touched and
//! nothing is ever recovered to healthy.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::catalog::{Catalog, IcdCode};
use crate::cohort::Cohort;
use crate::component::AliComponent;
use crate::matcher::ComponentCodes;
use crate::phenotype::{ComponentStatus, StatusVector};
use crate::roadmap::TermId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RecoveryRecord {
    pub patient_id: String,
    pub component: AliComponent,
    pub prior_status: ComponentStatus,
    pub new_status: ComponentStatus,
    /// (code, term) pairs that triggered the recovery; never empty.
    pub evidence: Vec<(IcdCode, TermId)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatientRecovery {
    pub statuses: StatusVector,
    pub records: Vec<RecoveryRecord>,
}

pub fn recover_patient(
    patient_id: &str,
    statuses: &StatusVector,
    diagnoses: &[IcdCode],
    matches: &ComponentCodes,
) -> PatientRecovery {
    let mut out = *statuses;
    let mut records = Vec::new();
    for c in AliComponent::ALL {
        if statuses[c.index()] != ComponentStatus::Missing {
            continue;
        }
        let Some(codes) = matches.get(&c) else {
            continue;
        };
        let evidence: Vec<(IcdCode, TermId)> = diagnoses
            .iter()
            .filter_map(|d| codes.get(d).map(|terms| (d, terms)))
            .flat_map(|(d, terms)| terms.iter().map(move |t| (d.clone(), t.clone())))
            .collect();
        if !evidence.is_empty() {
            out[c.index()] = ComponentStatus::Unhealthy;
            records.push(RecoveryRecord {
                patient_id: patient_id.to_string(),
                component: c,
                prior_status: ComponentStatus::Missing,
                new_status: ComponentStatus::Unhealthy,
                evidence,
            });
        }
    }
    PatientRecovery {
        statuses: out,
        records,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoverySummary {
    pub patients: usize,
    pub missing_before: usize,
    pub recovered: usize,
    pub percent: f64,
    pub per_component: BTreeMap<AliComponent, ComponentRecovery>,
    /// Diagnosis codes (occurrences) that are absent from the catalog.
    pub unknown_codes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ComponentRecovery {
    pub missing_before: usize,
    pub recovered: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohortRecovery {
    pub patient_ids: Vec<String>,
    pub before: Vec<StatusVector>,
    pub after: Vec<StatusVector>,
    pub records: Vec<RecoveryRecord>,
    pub summary: RecoverySummary,
}

/// `ehr` holds one status vector per cohort patient, in cohort order.
pub fn recover_cohort(
    cohort: &Cohort,
    ehr: &[StatusVector],
    matches: &ComponentCodes,
    catalog: &Catalog,
) -> CohortRecovery {
    assert_eq!(cohort.patients.len(), ehr.len(), "one status vector per patient");
    let mut unknown_codes = 0;
    let mut per_component: BTreeMap<AliComponent, ComponentRecovery> = AliComponent::ALL
        .into_iter()
        .map(|c| (c, ComponentRecovery::default()))
        .collect();
    let mut after = Vec::with_capacity(ehr.len());
    let mut records = Vec::new();
    for (patient, statuses) in cohort.patients.iter().zip(ehr) {
        unknown_codes += patient
            .diagnoses
            .iter()
            .filter(|d| !catalog.contains(d))
            .count();
        let rec = recover_patient(&patient.patient_id, statuses, &patient.diagnoses, matches);
        for c in AliComponent::ALL {
            if statuses[c.index()] == ComponentStatus::Missing {
                per_component.get_mut(&c).unwrap().missing_before += 1;
            }
        }
        for r in &rec.records {
            per_component.get_mut(&r.component).unwrap().recovered += 1;
        }
        after.push(rec.statuses);
        records.extend(rec.records);
    }
    if unknown_codes > 0 {
        log::warn!("{unknown_codes} diagnosis code occurrences are not in the catalog and were ignored");
    }
    records.sort_by(|a, b| {
        (a.patient_id.as_str(), a.component).cmp(&(b.patient_id.as_str(), b.component))
    });
    let missing_before: usize = per_component.values().map(|c| c.missing_before).sum();
    let recovered = records.len();
    CohortRecovery {
        patient_ids: cohort.patients.iter().map(|p| p.patient_id.clone()).collect(),
        before: ehr.to_vec(),
        after,
        summary: RecoverySummary {
            patients: cohort.patients.len(),
            missing_before,
            recovered,
            percent: percent(recovered, missing_before),
            per_component,
            unknown_codes,
        },
        records,
    }
}

pub(crate) fn percent(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}

impl CohortRecovery {
    /// `(patient_id, component, ehr_status, recovered_status)` in canonical order.
    pub fn write_statuses<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["patient_id", "component", "ehr_status", "recovered_status"])?;
        let mut order: Vec<usize> = (0..self.patient_ids.len()).collect();
        order.sort_by(|&a, &b| self.patient_ids[a].cmp(&self.patient_ids[b]));
        for i in order {
            for c in AliComponent::ALL {
                w.write_record([
                    self.patient_ids[i].as_str(),
                    c.key(),
                    self.before[i][c.index()].as_str(),
                    self.after[i][c.index()].as_str(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// `(patient_id, component, code, term_id)`, one row per evidence pair.
    pub fn write_evidence<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["patient_id", "component", "code", "term_id"])?;
        for r in &self.records {
            for (code, term) in &r.evidence {
                w.write_record([
                    r.patient_id.as_str(),
                    r.component.key(),
                    code.as_dotted(),
                    term.as_str(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
