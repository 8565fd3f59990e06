use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The ten biomarkers that make up the allostatic load index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AliComponent {
    SystolicBP,
    DiastolicBP,
    BMI,
    Triglycerides,
    TotalCholesterol,
    CRP,
    HbA1c,
    SerumAlbumin,
    CreatinineClearance,
    Homocysteine,
}

/// Body system grouping used when presenting components.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BodySystem {
    Cardiovascular,
    Metabolic,
    Inflammation,
}

impl AliComponent {
    pub const ALL: [AliComponent; 10] = [
        AliComponent::SystolicBP,
        AliComponent::DiastolicBP,
        AliComponent::BMI,
        AliComponent::Triglycerides,
        AliComponent::TotalCholesterol,
        AliComponent::CRP,
        AliComponent::HbA1c,
        AliComponent::SerumAlbumin,
        AliComponent::CreatinineClearance,
        AliComponent::Homocysteine,
    ];

    pub const COUNT: usize = 10;

    /// Position in [`AliComponent::ALL`]; used for fixed-size per-patient arrays.
    pub fn index(self) -> usize {
        self as usize
    }

    /// Identifier used in every file format.
    pub fn key(self) -> &'static str {
        match self {
            AliComponent::SystolicBP => "SystolicBP",
            AliComponent::DiastolicBP => "DiastolicBP",
            AliComponent::BMI => "BMI",
            AliComponent::Triglycerides => "Triglycerides",
            AliComponent::TotalCholesterol => "TotalCholesterol",
            AliComponent::CRP => "CRP",
            AliComponent::HbA1c => "HbA1c",
            AliComponent::SerumAlbumin => "SerumAlbumin",
            AliComponent::CreatinineClearance => "CreatinineClearance",
            AliComponent::Homocysteine => "Homocysteine",
        }
    }

    /// Human-readable biomarker name.
    pub fn display_name(self) -> &'static str {
        match self {
            AliComponent::SystolicBP => "Systolic Blood Pressure",
            AliComponent::DiastolicBP => "Diastolic Blood Pressure",
            AliComponent::BMI => "Body Mass Index",
            AliComponent::Triglycerides => "Triglycerides",
            AliComponent::TotalCholesterol => "Total Cholesterol",
            AliComponent::CRP => "C-Reactive Protein",
            AliComponent::HbA1c => "Hemoglobin A1C",
            AliComponent::SerumAlbumin => "Serum Albumin",
            AliComponent::CreatinineClearance => "Creatinine Clearance",
            AliComponent::Homocysteine => "Homocysteine",
        }
    }

    pub fn body_system(self) -> BodySystem {
        use AliComponent::*;
        match self {
            SystolicBP | DiastolicBP => BodySystem::Cardiovascular,
            BMI | Triglycerides | TotalCholesterol => BodySystem::Metabolic,
            CRP | HbA1c | SerumAlbumin | CreatinineClearance | Homocysteine => {
                BodySystem::Inflammation
            }
        }
    }
}

impl fmt::Display for AliComponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown ALI component: {0:?}")]
pub struct UnknownComponent(pub String);

fn squash(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

impl FromStr for AliComponent {
    type Err = UnknownComponent;

    /// Accepts the file key (`HbA1c`), the display name (`Hemoglobin A1C`) and
    /// snake/kebab variants, ignoring case and punctuation.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted = squash(s);
        if wanted.is_empty() {
            return Err(UnknownComponent(s.to_string()));
        }
        AliComponent::ALL
            .into_iter()
            .find(|c| squash(c.key()) == wanted || squash(c.display_name()) == wanted)
            .or(match wanted.as_str() {
                "sbp" => Some(AliComponent::SystolicBP),
                "dbp" => Some(AliComponent::DiastolicBP),
                "hba1c" | "a1c" => Some(AliComponent::HbA1c),
                "albumin" => Some(AliComponent::SerumAlbumin),
                "creatinine" => Some(AliComponent::CreatinineClearance),
                "cholesterol" => Some(AliComponent::TotalCholesterol),
                _ => None,
            })
            .ok_or_else(|| UnknownComponent(s.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_and_display_names() {
        for c in AliComponent::ALL {
            assert_eq!(c.key().parse::<AliComponent>().unwrap(), c);
            assert_eq!(c.display_name().parse::<AliComponent>().unwrap(), c);
        }
        assert_eq!(
            "c_reactive_protein".parse::<AliComponent>().unwrap(),
            AliComponent::CRP
        );
        assert!("X".parse::<AliComponent>().is_err());
    }

    #[test]
    fn index_matches_all_order() {
        for (i, c) in AliComponent::ALL.iter().enumerate() {
            assert_eq!(c.index(), i);
        }
    }
}
