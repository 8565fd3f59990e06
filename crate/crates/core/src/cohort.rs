//! Patient cohorts: CSV ingestion, validation and canonical serialization.
//!
//! A cohort directory holds `patients.csv`, `diagnoses.csv`, `readings.csv`
//! and optionally `review.csv`.

use std::collections::{BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::catalog::IcdCode;
use crate::component::AliComponent;
use crate::phenotype::{ComponentStatus, PhenotypeError, Sex, StatusVector, ThresholdTable, ALL_MISSING};

pub type Readings = [Option<f64>; AliComponent::COUNT];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Patient {
    pub patient_id: String,
    pub age: u32,
    pub sex: Option<Sex>,
    pub race: String,
    pub ethnicity: String,
    /// At least one ED visit or hospitalization in the study window.
    pub engaged: bool,
    /// Sorted, unique.
    pub diagnoses: Vec<IcdCode>,
    pub readings: Readings,
    pub chart_review: Option<StatusVector>,
}

impl Patient {
    pub fn new(patient_id: impl Into<String>) -> Self {
        Patient {
            patient_id: patient_id.into(),
            age: 0,
            sex: None,
            race: String::new(),
            ethnicity: String::new(),
            engaged: false,
            diagnoses: Vec::new(),
            readings: [None; AliComponent::COUNT],
            chart_review: None,
        }
    }

    pub fn ehr_statuses(&self, thresholds: &ThresholdTable) -> Result<StatusVector, PhenotypeError> {
        thresholds.classify_all(&self.readings, self.sex)
    }

    pub fn missing_count(&self) -> usize {
        self.readings.iter().filter(|r| r.is_none()).count()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Cohort {
    pub name: String,
    pub patients: Vec<Patient>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CohortFiles {
    pub patients: PathBuf,
    pub diagnoses: PathBuf,
    pub readings: PathBuf,
    pub review: Option<PathBuf>,
}

impl CohortFiles {
    /// Standard file names inside `dir`; `review.csv` only when present.
    pub fn in_dir(dir: &Path) -> Self {
        let review = dir.join("review.csv");
        CohortFiles {
            patients: dir.join("patients.csv"),
            diagnoses: dir.join("diagnoses.csv"),
            readings: dir.join("readings.csv"),
            review: review.is_file().then_some(review),
        }
    }

    pub fn all(&self) -> Vec<&Path> {
        let mut v = vec![
            self.patients.as_path(),
            self.diagnoses.as_path(),
            self.readings.as_path(),
        ];
        if let Some(r) = &self.review {
            v.push(r);
        }
        v
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CohortError {
    #[error("cohort file not found: {0}")]
    MissingFile(String),
    #[error("{file} line {line}: {reason}")]
    SchemaViolation {
        file: String,
        line: u64,
        reason: String,
    },
    #[error("{file} line {line}: patient {patient_id:?} is not in patients.csv")]
    OrphanRow {
        file: String,
        line: u64,
        patient_id: String,
    },
    #[error("duplicate patient id {0:?}")]
    DuplicatePatient(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "y" => Some(true),
        "0" | "false" | "no" | "n" => Some(false),
        _ => None,
    }
}

struct Table {
    file: String,
    reader: csv::Reader<std::fs::File>,
    columns: HashMap<String, usize>,
}

impl Table {
    fn open(path: &Path, required: &[&str]) -> Result<Self, CohortError> {
        if !path.is_file() {
            return Err(CohortError::MissingFile(path.display().to_string()));
        }
        let file = path
            .file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_default();
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)?;
        let columns: HashMap<String, usize> = reader
            .headers()?
            .iter()
            .enumerate()
            .map(|(i, h)| (h.to_ascii_lowercase(), i))
            .collect();
        for col in required {
            if !columns.contains_key(*col) {
                return Err(CohortError::SchemaViolation {
                    file,
                    line: 1,
                    reason: format!("missing column {col:?}"),
                });
            }
        }
        Ok(Table {
            file,
            reader,
            columns,
        })
    }

    fn rows(&mut self) -> Result<Vec<(u64, csv::StringRecord)>, CohortError> {
        let mut out = Vec::new();
        for rec in self.reader.records() {
            let rec = rec?;
            if rec.iter().all(str::is_empty) {
                continue;
            }
            out.push((rec.position().map(|p| p.line()).unwrap_or(0), rec));
        }
        Ok(out)
    }

    fn field<'r>(&self, rec: &'r csv::StringRecord, col: &str) -> &'r str {
        self.columns.get(col).and_then(|&i| rec.get(i)).unwrap_or("")
    }

    fn violation(&self, line: u64, reason: impl Into<String>) -> CohortError {
        CohortError::SchemaViolation {
            file: self.file.clone(),
            line,
            reason: reason.into(),
        }
    }

    fn orphan(&self, line: u64, patient_id: &str) -> CohortError {
        CohortError::OrphanRow {
            file: self.file.clone(),
            line,
            patient_id: patient_id.to_string(),
        }
    }
}

impl Cohort {
    pub fn n(&self) -> usize {
        self.patients.len()
    }

    pub fn n_reviewed(&self) -> usize {
        self.patients.iter().filter(|p| p.chart_review.is_some()).count()
    }

    pub fn load_dir(dir: &Path) -> Result<Self, CohortError> {
        let name = dir
            .file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_else(|| "cohort".into());
        Self::ingest(&CohortFiles::in_dir(dir), &name)
    }

    pub fn ingest(files: &CohortFiles, name: &str) -> Result<Self, CohortError> {
        let mut patients = Vec::new();
        let mut by_id: HashMap<String, usize> = HashMap::new();

        let mut t = Table::open(
            &files.patients,
            &["patient_id", "age", "sex", "race", "ethnicity", "engaged"],
        )?;
        for (line, rec) in t.rows()? {
            let id = t.field(&rec, "patient_id").to_string();
            if id.is_empty() {
                return Err(t.violation(line, "empty patient_id"));
            }
            if by_id.contains_key(&id) {
                return Err(CohortError::DuplicatePatient(id));
            }
            let age_s = t.field(&rec, "age");
            let age = age_s
                .parse::<u32>()
                .map_err(|_| t.violation(line, format!("bad age {age_s:?}")))?;
            let sex_s = t.field(&rec, "sex");
            let sex = if sex_s.is_empty() || sex_s.eq_ignore_ascii_case("unknown") {
                None
            } else {
                Some(
                    sex_s
                        .parse::<Sex>()
                        .map_err(|_| t.violation(line, format!("bad sex {sex_s:?}")))?,
                )
            };
            let engaged_s = t.field(&rec, "engaged");
            let engaged = parse_bool(engaged_s)
                .ok_or_else(|| t.violation(line, format!("bad engaged flag {engaged_s:?}")))?;
            let mut p = Patient::new(id.clone());
            p.age = age;
            p.sex = sex;
            p.race = t.field(&rec, "race").to_string();
            p.ethnicity = t.field(&rec, "ethnicity").to_string();
            p.engaged = engaged;
            by_id.insert(id, patients.len());
            patients.push(p);
        }

        let mut t = Table::open(&files.diagnoses, &["patient_id", "code"])?;
        let mut dx: Vec<BTreeSet<IcdCode>> = vec![BTreeSet::new(); patients.len()];
        for (line, rec) in t.rows()? {
            let id = t.field(&rec, "patient_id");
            let &i = by_id.get(id).ok_or_else(|| t.orphan(line, id))?;
            let code = IcdCode::parse(t.field(&rec, "code"))
                .map_err(|e| t.violation(line, e.to_string()))?;
            dx[i].insert(code);
        }
        for (p, set) in patients.iter_mut().zip(dx) {
            p.diagnoses = set.into_iter().collect();
        }

        let mut t = Table::open(&files.readings, &["patient_id", "component", "value"])?;
        for (line, rec) in t.rows()? {
            let id = t.field(&rec, "patient_id");
            let &i = by_id.get(id).ok_or_else(|| t.orphan(line, id))?;
            let comp: AliComponent = t
                .field(&rec, "component")
                .parse()
                .map_err(|e: crate::component::UnknownComponent| t.violation(line, e.to_string()))?;
            let raw = t.field(&rec, "value");
            if raw.is_empty() || raw.eq_ignore_ascii_case("na") {
                continue;
            }
            let v = raw
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| t.violation(line, format!("bad value {raw:?}")))?;
            let slot = &mut patients[i].readings[comp.index()];
            if slot.is_some() {
                return Err(t.violation(line, format!("second reading for {comp}")));
            }
            *slot = Some(v);
        }

        if let Some(review) = &files.review {
            let mut t = Table::open(review, &["patient_id", "component", "category"])?;
            for (line, rec) in t.rows()? {
                let id = t.field(&rec, "patient_id");
                let &i = by_id.get(id).ok_or_else(|| t.orphan(line, id))?;
                let comp: AliComponent = t.field(&rec, "component").parse().map_err(
                    |e: crate::component::UnknownComponent| t.violation(line, e.to_string()),
                )?;
                let cat_s = t.field(&rec, "category");
                let status: ComponentStatus = cat_s
                    .parse()
                    .map_err(|_| t.violation(line, format!("bad category {cat_s:?}")))?;
                let review = patients[i].chart_review.get_or_insert(ALL_MISSING);
                review[comp.index()] = status;
            }
        }

        Ok(Cohort {
            name: name.to_string(),
            patients,
        })
    }

    /// Every distinct diagnosis code in the cohort.
    pub fn diagnosis_codes(&self) -> BTreeSet<IcdCode> {
        self.patients
            .iter()
            .flat_map(|p| p.diagnoses.iter().cloned())
            .collect()
    }

    pub fn ehr_statuses(&self, thresholds: &ThresholdTable) -> Result<Vec<StatusVector>, CohortError> {
        self.patients
            .iter()
            .map(|p| {
                p.ehr_statuses(thresholds).map_err(|e| CohortError::SchemaViolation {
                    file: "readings.csv".into(),
                    line: 0,
                    reason: format!("patient {}: {e}", p.patient_id),
                })
            })
            .collect()
    }

    /// Write the cohort in canonical order (by patient id, then component,
    /// then code). Review file is written only when some patient was reviewed.
    pub fn write_dir(&self, dir: &Path) -> Result<(), CohortError> {
        std::fs::create_dir_all(dir)?;
        let mut order: Vec<&Patient> = self.patients.iter().collect();
        order.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));

        let mut w = csv::Writer::from_path(dir.join("patients.csv"))?;
        w.write_record(["patient_id", "age", "sex", "race", "ethnicity", "engaged"])?;
        for p in &order {
            w.write_record([
                p.patient_id.as_str(),
                &p.age.to_string(),
                p.sex.map(Sex::as_str).unwrap_or(""),
                &p.race,
                &p.ethnicity,
                if p.engaged { "1" } else { "0" },
            ])?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("diagnoses.csv"))?;
        w.write_record(["patient_id", "code"])?;
        for p in &order {
            for code in &p.diagnoses {
                w.write_record([p.patient_id.as_str(), code.as_dotted()])?;
            }
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("readings.csv"))?;
        w.write_record(["patient_id", "component", "value"])?;
        for p in &order {
            for c in AliComponent::ALL {
                if let Some(v) = p.readings[c.index()] {
                    w.write_record([p.patient_id.as_str(), c.key(), &v.to_string()])?;
                }
            }
        }
        w.flush()?;

        let review_path = dir.join("review.csv");
        if self.n_reviewed() > 0 {
            let mut w = csv::Writer::from_path(&review_path)?;
            w.write_record(["patient_id", "component", "category"])?;
            for p in &order {
                if let Some(review) = &p.chart_review {
                    for c in AliComponent::ALL {
                        w.write_record([p.patient_id.as_str(), c.key(), review[c.index()].as_str()])?;
                    }
                }
            }
            w.flush()?;
        } else if review_path.exists() {
            std::fs::remove_file(review_path)?;
        }
        Ok(())
    }
}

/// Write `(patient_id, component, status)` rows for one status source.
pub fn write_status_table<W: Write>(
    writer: W,
    ids: &[&str],
    statuses: &[StatusVector],
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["patient_id", "component", "status"])?;
    for (id, row) in ids.iter().zip(statuses) {
        for c in AliComponent::ALL {
            w.write_record([*id, c.key(), row[c.index()].as_str()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a status table aligned to `ids`. The status column may be named
/// `status`, `recovered_status` or `category`; unlisted cells are missing.
pub fn read_status_table<R: Read>(
    reader: R,
    file: &str,
    ids: &[String],
) -> Result<Vec<StatusVector>, CohortError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name));
    let schema = |line: u64, reason: String| CohortError::SchemaViolation {
        file: file.to_string(),
        line,
        reason,
    };
    let (Some(pid), Some(comp)) = (col("patient_id"), col("component")) else {
        return Err(schema(1, "needs patient_id and component columns".into()));
    };
    let status_col = ["recovered_status", "status", "category"]
        .iter()
        .find_map(|n| col(n))
        .ok_or_else(|| schema(1, "needs a status, recovered_status or category column".into()))?;
    let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let mut out = vec![ALL_MISSING; ids.len()];
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let id = rec.get(pid).unwrap_or_default().trim();
        let &i = index.get(id).ok_or_else(|| CohortError::OrphanRow {
            file: file.to_string(),
            line,
            patient_id: id.to_string(),
        })?;
        let c: AliComponent = rec
            .get(comp)
            .unwrap_or_default()
            .parse()
            .map_err(|e: crate::component::UnknownComponent| schema(line, e.to_string()))?;
        let status: ComponentStatus = rec
            .get(status_col)
            .unwrap_or_default()
            .parse()
            .map_err(|v| schema(line, format!("unknown status {v:?}")))?;
        out[i][c.index()] = status;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &Path, name: &str, body: &str) {
        fs::write(dir.join(name), body).unwrap();
    }

    fn minimal(dir: &Path) {
        write(dir, "patients.csv", "patient_id,age,sex,race,ethnicity,engaged\nP1,48,female,White,Not Hispanic,1\n");
        write(dir, "diagnoses.csv", "patient_id,code\nP1,e119\nP1,E11.9\nP1,I10\n");
        write(dir, "readings.csv", "patient_id,component,value\nP1,SystolicBP,150\nP1,HbA1c,5.4\n");
    }

    #[test]
    fn status_table_round_trip() {
        let ids = vec!["P1".to_string(), "P2".to_string()];
        let mut rows = vec![ALL_MISSING; 2];
        rows[0][0] = ComponentStatus::Unhealthy;
        rows[1][9] = ComponentStatus::Healthy;
        let mut buf = Vec::new();
        write_status_table(&mut buf, &["P1", "P2"], &rows).unwrap();
        assert_eq!(read_status_table(buf.as_slice(), "t.csv", &ids).unwrap(), rows);
        let orphan = "patient_id,component,status\nP9,BMI,healthy\n";
        assert!(matches!(
            read_status_table(orphan.as_bytes(), "t.csv", &ids),
            Err(CohortError::OrphanRow { .. })
        ));
    }

    #[test]
    fn ingests_minimal_cohort() {
        let dir = tempfile::tempdir().unwrap();
        minimal(dir.path());
        let c = Cohort::load_dir(dir.path()).unwrap();
        assert_eq!(c.n(), 1);
        assert_eq!(c.n_reviewed(), 0);
        let p = &c.patients[0];
        assert_eq!(p.diagnoses.len(), 2);
        assert_eq!(p.diagnoses[0].as_dotted(), "E11.9");
        assert_eq!(p.readings[AliComponent::SystolicBP.index()], Some(150.0));
        assert_eq!(p.missing_count(), 8);
    }

    #[test]
    fn review_keeps_protocol_error() {
        let dir = tempfile::tempdir().unwrap();
        minimal(dir.path());
        write(dir.path(), "review.csv", "patient_id,component,category\nP1,CRP,protocol error\nP1,SystolicBP,unhealthy\n");
        let c = Cohort::load_dir(dir.path()).unwrap();
        let r = c.patients[0].chart_review.unwrap();
        assert_eq!(r[AliComponent::CRP.index()], ComponentStatus::ProtocolError);
        assert_eq!(r[AliComponent::SystolicBP.index()], ComponentStatus::Unhealthy);
        assert_eq!(r[AliComponent::BMI.index()], ComponentStatus::Missing);
    }

    #[test]
    fn rejects_orphans_and_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        minimal(dir.path());
        write(dir.path(), "diagnoses.csv", "patient_id,code\nP2,I10\n");
        assert!(matches!(
            Cohort::load_dir(dir.path()),
            Err(CohortError::OrphanRow { line: 2, .. })
        ));
        minimal(dir.path());
        write(dir.path(), "patients.csv", "patient_id,age,sex,race,ethnicity,engaged\nP1,1,m,,,0\nP1,2,f,,,1\n");
        assert!(matches!(
            Cohort::load_dir(dir.path()),
            Err(CohortError::DuplicatePatient(_))
        ));
    }

    #[test]
    fn rejects_schema_violations() {
        let dir = tempfile::tempdir().unwrap();
        minimal(dir.path());
        write(dir.path(), "readings.csv", "patient_id,component,value\nP1,Cortisol,3\n");
        assert!(matches!(
            Cohort::load_dir(dir.path()),
            Err(CohortError::SchemaViolation { .. })
        ));
        write(dir.path(), "readings.csv", "patient_id,value\nP1,3\n");
        assert!(matches!(
            Cohort::load_dir(dir.path()),
            Err(CohortError::SchemaViolation { line: 1, .. })
        ));
        write(dir.path(), "readings.csv", "patient_id,component,value\nP1,CRP,1\nP1,CRP,2\n");
        assert!(Cohort::load_dir(dir.path()).is_err());
    }

    #[test]
    fn write_then_ingest_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        minimal(dir.path());
        write(dir.path(), "review.csv", "patient_id,component,category\nP1,CRP,unhealthy\n");
        let c = Cohort::load_dir(dir.path()).unwrap();
        let out = tempfile::tempdir().unwrap();
        c.write_dir(out.path()).unwrap();
        let mut back = Cohort::load_dir(out.path()).unwrap();
        back.name = c.name.clone();
        assert_eq!(back, c);
    }
}
