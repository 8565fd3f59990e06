//! Recovery of missing allostatic load index (ALI) components from ICD-10
//! diagnosis codes using clinician- and LLM-authored search-term roadmaps.

pub mod adjudication;
pub mod analysis;
pub mod catalog;
pub mod cohort;
pub mod component;
pub mod llm;
pub mod matcher;
pub mod pipeline;
pub mod phenotype;
pub mod recovery;
pub mod roadmap;
pub mod synthetic;

pub use catalog::{tokenize, Catalog, IcdCode, IcdEntry};
pub use cohort::{Cohort, Patient};
pub use component::AliComponent;
pub use phenotype::{compute_ali, AliValue, ComponentStatus, Sex, StatusVector, ThresholdTable};
pub use roadmap::{Provenance, Roadmap, SearchTerm, TermId, TermStatus};
