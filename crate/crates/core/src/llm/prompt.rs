use serde::{Deserialize, Serialize};

use crate::component::AliComponent;
use crate::phenotype::ThresholdTable;
use crate::roadmap::Roadmap;

use super::LlmError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptMode {
    /// Biomarker names and unhealthy direction only.
    Baseline,
    /// Additionally embeds the original roadmap's terms as examples.
    Context,
}

impl std::str::FromStr for PromptMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "baseline" => Ok(PromptMode::Baseline),
            "context" => Ok(PromptMode::Context),
            other => Err(other.to_string()),
        }
    }
}

const BASELINE_INSTRUCTION: &str = "Please propose an exhaustive list of terms (avoiding acronyms) that will be used to search ICD descriptions to identify each of the missing biomarkers and create a dataframe with these codes. I want you to repeat this process 20 times, creating a new dataframe each time with each having a unique name starting with df_nocontext. Each time you repeat this, be sure to make as exhaustive a list as possible. These lists can vary.";

const CONTEXT_INSTRUCTION: &str = "Please propose an exhaustive list of terms (avoiding acronyms) that will be used to search ICD descriptions to identify each of the missing biomarkers and create a dataframe with these codes. I want you to repeat this process 20 times, creating a new dataframe each time with each having a unique name starting with df_context. Each time you repeat this, be sure to include the examples given in (e.g.,) and make as exhaustive a list as possible. These lists can vary.";

const FORMAT_INSTRUCTION: &str = "Output format: each reply is one repetition. Put this repetition's list in a single fenced code block labelled roadmap. Inside the block write one line per biomarker: the biomarker name exactly as listed above, a colon, then its terms separated by semicolons. For example:\n```roadmap\nBiomarker Name: first term; second term; third term\n```";

/// Prompt text for one enhancement request.
pub fn build_prompt(
    mode: PromptMode,
    thresholds: &ThresholdTable,
    original: Option<&Roadmap>,
) -> Result<String, LlmError> {
    let original = match mode {
        PromptMode::Baseline => None,
        PromptMode::Context => Some(original.ok_or(LlmError::MissingOriginalRoadmap)?),
    };
    let mut out = String::new();
    out.push_str(match mode {
        PromptMode::Baseline => BASELINE_INSTRUCTION,
        PromptMode::Context => CONTEXT_INSTRUCTION,
    });
    out.push_str("\n\nMissing biomarkers:\n");
    for c in AliComponent::ALL {
        let direction = if thresholds.get(c).comparator.high_is_unhealthy() {
            "higher values are unhealthy"
        } else {
            "lower values are unhealthy"
        };
        out.push_str(&format!("- {}: {direction}", c.display_name()));
        if let Some(roadmap) = original {
            let examples: Vec<&str> = roadmap.terms_for(c).map(|t| t.phrase.as_str()).collect();
            if !examples.is_empty() {
                out.push_str(&format!(" (e.g., {})", examples.join("; ")));
            }
        }
        out.push('\n');
    }
    out.push('\n');
    out.push_str(FORMAT_INSTRUCTION);
    out.push('\n');
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baseline_has_no_roadmap_terms() {
        let p = build_prompt(PromptMode::Baseline, &ThresholdTable::default(), None).unwrap();
        let lower = p.to_lowercase();
        for t in Roadmap::clinicians_original().terms {
            assert!(!lower.contains(&t.phrase.to_lowercase()), "{}", t.phrase);
        }
        assert!(p.contains("avoiding acronyms"));
        assert!(p.contains("df_nocontext"));
        assert!(p.contains("Creatinine Clearance: lower values are unhealthy"));
    }

    #[test]
    fn context_embeds_examples() {
        let r = Roadmap::clinicians_original();
        let p = build_prompt(PromptMode::Context, &ThresholdTable::default(), Some(&r)).unwrap();
        assert!(p.contains("Hypertriglyceridemia"));
        assert!(p.contains("avoiding acronyms"));
        assert!(p.contains("be sure to include the examples given in"));
        assert!(p.contains("(e.g., Sepsis; Infection; Auto-Immune; Inflammatory Syndrome)"));
        assert!(p.contains("- Serum Albumin: higher values are unhealthy\n"));
    }

    #[test]
    fn context_requires_roadmap() {
        assert!(matches!(
            build_prompt(PromptMode::Context, &ThresholdTable::default(), None),
            Err(LlmError::MissingOriginalRoadmap)
        ));
    }
}
