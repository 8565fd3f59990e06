//! Biomarker thresholds, component classification and the ALI itself.

use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::component::AliComponent;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Male,
    Female,
}

impl Sex {
    pub fn as_str(self) -> &'static str {
        match self {
            Sex::Male => "male",
            Sex::Female => "female",
        }
    }
}

impl FromStr for Sex {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "male" | "m" => Ok(Sex::Male),
            "female" | "f" => Ok(Sex::Female),
            other => Err(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ComponentStatus {
    Healthy,
    Unhealthy,
    Missing,
    /// Chart-review only: a value recorded from outside the study window.
    ProtocolError,
}

impl ComponentStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ComponentStatus::Healthy => "healthy",
            ComponentStatus::Unhealthy => "unhealthy",
            ComponentStatus::Missing => "missing",
            ComponentStatus::ProtocolError => "protocol error",
        }
    }

    pub fn is_missing(self) -> bool {
        self == ComponentStatus::Missing
    }
}

impl FromStr for ComponentStatus {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let norm = s.trim().to_ascii_lowercase().replace(['_', '-'], " ");
        match norm.as_str() {
            "healthy" => Ok(ComponentStatus::Healthy),
            "unhealthy" => Ok(ComponentStatus::Unhealthy),
            "missing" => Ok(ComponentStatus::Missing),
            "protocol error" => Ok(ComponentStatus::ProtocolError),
            _ => Err(s.to_string()),
        }
    }
}

impl fmt::Display for ComponentStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One status per component, indexed by [`AliComponent::index`].
pub type StatusVector = [ComponentStatus; AliComponent::COUNT];

pub const ALL_MISSING: StatusVector = [ComponentStatus::Missing; AliComponent::COUNT];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Comparator {
    Gt,
    Ge,
    Lt,
    Le,
}

impl Comparator {
    pub fn holds(self, reading: f64, threshold: f64) -> bool {
        match self {
            Comparator::Gt => reading > threshold,
            Comparator::Ge => reading >= threshold,
            Comparator::Lt => reading < threshold,
            Comparator::Le => reading <= threshold,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Comparator::Gt => "gt",
            Comparator::Ge => "ge",
            Comparator::Lt => "lt",
            Comparator::Le => "le",
        }
    }

    /// True when high readings are the unhealthy direction.
    pub fn high_is_unhealthy(self) -> bool {
        matches!(self, Comparator::Gt | Comparator::Ge)
    }
}

impl FromStr for Comparator {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gt" | ">" => Ok(Comparator::Gt),
            "ge" | ">=" => Ok(Comparator::Ge),
            "lt" | "<" => Ok(Comparator::Lt),
            "le" | "<=" => Ok(Comparator::Le),
            other => Err(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Cutoff {
    Single(f64),
    BySex { male: f64, female: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub component: AliComponent,
    pub comparator: Comparator,
    pub cutoff: Cutoff,
    /// Free-text caveat carried from the threshold file.
    pub note: Option<String>,
}

impl Threshold {
    pub fn cutoff_for(&self, sex: Option<Sex>) -> Result<f64, PhenotypeError> {
        match (self.cutoff, sex) {
            (Cutoff::Single(v), _) => Ok(v),
            (Cutoff::BySex { male, .. }, Some(Sex::Male)) => Ok(male),
            (Cutoff::BySex { female, .. }, Some(Sex::Female)) => Ok(female),
            (Cutoff::BySex { .. }, None) => Err(PhenotypeError::MissingSex(self.component)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PhenotypeError {
    #[error("non-finite reading {reading} for {component}")]
    NonFiniteReading { component: AliComponent, reading: f64 },
    #[error("sex is required to classify {0}")]
    MissingSex(AliComponent),
    #[error("all ten components are missing; ALI is undefined")]
    AllMissing,
    #[error("protocol-error status must be remapped before computing the ALI")]
    UnmappedProtocolError,
}

#[derive(Debug, thiserror::Error)]
pub enum ThresholdFileError {
    #[error("threshold file line {line}: {reason}")]
    Row { line: u64, reason: String },
    #[error("threshold file has no row for {0}")]
    MissingComponent(AliComponent),
    #[error("threshold file has two rows for {0}")]
    DuplicateComponent(AliComponent),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Exactly one threshold per component.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdTable {
    rows: Vec<Threshold>,
}

const DEFAULT_THRESHOLDS: &str = include_str!("../data/thresholds.csv");

impl Default for ThresholdTable {
    fn default() -> Self {
        Self::from_reader(DEFAULT_THRESHOLDS.as_bytes()).expect("bundled thresholds are valid")
    }
}

impl ThresholdTable {
    pub fn load(path: &Path) -> Result<Self, ThresholdFileError> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    /// Columns: component, comparator, value, male_value, female_value[, note].
    pub fn from_reader<R: Read>(reader: R) -> Result<Self, ThresholdFileError> {
        let mut rdr = csv::ReaderBuilder::new()
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut slots: Vec<Option<Threshold>> = vec![None; AliComponent::COUNT];
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let bad = |reason: String| ThresholdFileError::Row { line, reason };
            let component: AliComponent = record
                .get(0)
                .unwrap_or("")
                .parse()
                .map_err(|e: crate::component::UnknownComponent| bad(e.to_string()))?;
            let comparator: Comparator = record
                .get(1)
                .unwrap_or("")
                .parse()
                .map_err(|v| bad(format!("unknown comparator {v:?}")))?;
            let num = |i: usize| -> Result<Option<f64>, ThresholdFileError> {
                match record.get(i).filter(|s| !s.is_empty()) {
                    None => Ok(None),
                    Some(s) => s
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .map(Some)
                        .ok_or_else(|| ThresholdFileError::Row {
                            line,
                            reason: format!("bad number {s:?}"),
                        }),
                }
            };
            let cutoff = match (num(2)?, num(3)?, num(4)?) {
                (Some(v), None, None) => Cutoff::Single(v),
                (None, Some(male), Some(female)) => Cutoff::BySex { male, female },
                _ => {
                    return Err(bad(
                        "give either value or both male_value and female_value".into(),
                    ))
                }
            };
            let note = record.get(5).filter(|s| !s.is_empty()).map(str::to_string);
            let slot = &mut slots[component.index()];
            if slot.is_some() {
                return Err(ThresholdFileError::DuplicateComponent(component));
            }
            *slot = Some(Threshold {
                component,
                comparator,
                cutoff,
                note,
            });
        }
        let rows = slots
            .into_iter()
            .zip(AliComponent::ALL)
            .map(|(s, c)| s.ok_or(ThresholdFileError::MissingComponent(c)))
            .collect::<Result<Vec<_>, _>>()?;
        for t in &rows {
            if let Some(note) = &t.note {
                log::info!("threshold for {}: {note}", t.component);
            }
        }
        Ok(ThresholdTable { rows })
    }

    pub fn get(&self, component: AliComponent) -> &Threshold {
        &self.rows[component.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Threshold> {
        self.rows.iter()
    }

    /// Unhealthy iff the comparator holds against the (sex-resolved) cutoff.
    pub fn classify(
        &self,
        component: AliComponent,
        reading: f64,
        sex: Option<Sex>,
    ) -> Result<ComponentStatus, PhenotypeError> {
        if !reading.is_finite() {
            return Err(PhenotypeError::NonFiniteReading { component, reading });
        }
        let t = self.get(component);
        let cutoff = t.cutoff_for(sex)?;
        Ok(if t.comparator.holds(reading, cutoff) {
            ComponentStatus::Unhealthy
        } else {
            ComponentStatus::Healthy
        })
    }

    /// Classify a full reading vector; absent readings become `Missing`.
    pub fn classify_all(
        &self,
        readings: &[Option<f64>; AliComponent::COUNT],
        sex: Option<Sex>,
    ) -> Result<StatusVector, PhenotypeError> {
        let mut out = ALL_MISSING;
        for c in AliComponent::ALL {
            if let Some(v) = readings[c.index()] {
                out[c.index()] = self.classify(c, v, sex)?;
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AliValue {
    pub numerator: u8,
    pub denominator: u8,
    pub value: f64,
}

/// Proportion of unhealthy components among the non-missing ones.
pub fn compute_ali(statuses: &StatusVector) -> Result<AliValue, PhenotypeError> {
    let mut unhealthy = 0u8;
    let mut observed = 0u8;
    for s in statuses {
        match s {
            ComponentStatus::Unhealthy => {
                unhealthy += 1;
                observed += 1;
            }
            ComponentStatus::Healthy => observed += 1,
            ComponentStatus::Missing => {}
            ComponentStatus::ProtocolError => return Err(PhenotypeError::UnmappedProtocolError),
        }
    }
    if observed == 0 {
        return Err(PhenotypeError::AllMissing);
    }
    Ok(AliValue {
        numerator: unhealthy,
        denominator: observed,
        value: f64::from(unhealthy) / f64::from(observed),
    })
}
