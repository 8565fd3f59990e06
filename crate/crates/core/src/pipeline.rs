//! End-to-end run driven by a TOML config: match, recover, ALI tables,
//! analysis outputs and a digest manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{
    ali_distribution, ali_pairs, ali_values, flowchart, fmt_f64, missingness_profiles, regress_engagement,
    remap_protocol_errors, write_flowchart_csv, write_missingness_csv, StatusSource,
};
use crate::catalog::Catalog;
use crate::cohort::{Cohort, CohortFiles};
use crate::llm::{replay_transcripts, run_enhancement, LlmRunConfig, PromptMode};
use crate::matcher::{load_code_exclusions, match_roadmap, MatchOptions, RoadmapMatches};
use crate::phenotype::{StatusVector, ThresholdTable};
use crate::recovery::{recover_cohort, CohortRecovery};
use crate::roadmap::{union_roadmaps, Roadmap};
use crate::synthetic::{generate, SyntheticConfig};

pub const BUILTIN_ORIGINAL: &str = "clinicians_original";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadmapSpec {
    pub name: String,
    /// Roadmap CSV file.
    #[serde(default)]
    pub path: Option<PathBuf>,
    /// Name of a shipped roadmap; only `clinicians_original` exists.
    #[serde(default)]
    pub builtin: Option<String>,
    /// Directory of archived LLM transcripts to replay.
    #[serde(default)]
    pub transcripts: Option<PathBuf>,
    /// Query the configured LLM endpoint live in this mode.
    #[serde(default)]
    pub enhance: Option<PromptMode>,
    /// Union the clinicians' original roadmap in front of this one.
    #[serde(default)]
    pub union_original: bool,
    /// Match `proposed` terms too. Defaults to true for LLM sources.
    #[serde(default)]
    pub include_proposed: Option<bool>,
}

impl RoadmapSpec {
    fn is_llm(&self) -> bool {
        self.transcripts.is_some() || self.enhance.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortSpec {
    /// Directory with patients.csv, diagnoses.csv, readings.csv and optionally review.csv.
    #[serde(default)]
    pub dir: Option<PathBuf>,
    /// Generate a synthetic cohort of this size from the run seed instead.
    #[serde(default)]
    pub simulate: Option<usize>,
    #[serde(default)]
    pub synthetic_config: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub catalog: Option<PathBuf>,
    #[serde(default)]
    pub thresholds: Option<PathBuf>,
    #[serde(default)]
    pub exclusions: Option<PathBuf>,
    pub cohort: CohortSpec,
    pub roadmaps: Vec<RoadmapSpec>,
    /// Roadmap names to run; all when absent.
    #[serde(default)]
    pub selection: Option<Vec<String>>,
    #[serde(default)]
    pub llm: Option<LlmRunConfig>,
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("stage {stage} failed: {cause}")]
    Stage { stage: &'static str, cause: String },
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Validation(_) => 2,
            PipelineError::Stage { .. } => 3,
        }
    }
}

fn invalid(msg: impl Into<String>) -> PipelineError {
    PipelineError::Validation(msg.into())
}

fn stage<E: std::fmt::Display>(stage: &'static str) -> impl Fn(E) -> PipelineError {
    move |e| PipelineError::Stage {
        stage,
        cause: e.to_string(),
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| invalid(e.to_string()))
    }

    /// Reads the config and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.output_dir);
        for p in [&mut self.catalog, &mut self.thresholds, &mut self.exclusions]
            .into_iter()
            .flatten()
        {
            resolve(base, p);
        }
        for p in [&mut self.cohort.dir, &mut self.cohort.synthetic_config].into_iter().flatten() {
            resolve(base, p);
        }
        for r in &mut self.roadmaps {
            for p in [&mut r.path, &mut r.transcripts].into_iter().flatten() {
                resolve(base, p);
            }
        }
        if let Some(dir) = self.llm.as_mut().and_then(|l| l.transcript_dir.as_mut()) {
            resolve(base, dir);
        }
    }

    /// Roadmaps selected for this run, in config order.
    pub fn selected(&self) -> Vec<&RoadmapSpec> {
        match &self.selection {
            None => self.roadmaps.iter().collect(),
            Some(names) => self.roadmaps.iter().filter(|r| names.contains(&r.name)).collect(),
        }
    }

    /// Checks every referenced path and name before anything runs.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let file = |label: &str, p: &Path| {
            if p.is_file() {
                Ok(())
            } else {
                Err(invalid(format!("{label} not found: {}", p.display())))
            }
        };
        let dir = |label: &str, p: &Path| {
            if p.is_dir() {
                Ok(())
            } else {
                Err(invalid(format!("{label} directory not found: {}", p.display())))
            }
        };
        if let Some(p) = &self.catalog {
            file("catalog", p)?;
        }
        if let Some(p) = &self.thresholds {
            file("thresholds", p)?;
        }
        if let Some(p) = &self.exclusions {
            file("exclusions", p)?;
        }
        match (&self.cohort.dir, self.cohort.simulate) {
            (Some(d), None) => {
                dir("cohort", d)?;
                let files = CohortFiles::in_dir(d);
                for p in [&files.patients, &files.diagnoses, &files.readings] {
                    file("cohort file", p)?;
                }
            }
            (None, Some(0)) => return Err(invalid("cohort.simulate must be at least 1")),
            (None, Some(_)) => {}
            _ => return Err(invalid("cohort needs exactly one of `dir` or `simulate`")),
        }
        if let Some(p) = &self.cohort.synthetic_config {
            file("synthetic config", p)?;
        }
        if self.roadmaps.is_empty() {
            return Err(invalid("at least one roadmap is required"));
        }
        let mut names = BTreeSet::new();
        for r in &self.roadmaps {
            let safe = !r.name.is_empty()
                && r.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
            if !safe {
                return Err(invalid(format!("roadmap name {:?} must be non-empty [A-Za-z0-9_-]", r.name)));
            }
            if matches!(r.name.as_str(), "ehr" | "chart_review") {
                return Err(invalid(format!("roadmap name {:?} is reserved", r.name)));
            }
            if !names.insert(r.name.as_str()) {
                return Err(invalid(format!("duplicate roadmap name {:?}", r.name)));
            }
            let sources = [r.path.is_some(), r.builtin.is_some(), r.transcripts.is_some(), r.enhance.is_some()];
            if sources.iter().filter(|&&s| s).count() != 1 {
                return Err(invalid(format!(
                    "roadmap {:?} needs exactly one of path, builtin, transcripts, enhance",
                    r.name
                )));
            }
            if let Some(p) = &r.path {
                file(&format!("roadmap {}", r.name), p)?;
            }
            if let Some(p) = &r.transcripts {
                dir(&format!("roadmap {} transcripts", r.name), p)?;
            }
            if let Some(b) = &r.builtin {
                if b != BUILTIN_ORIGINAL {
                    return Err(invalid(format!("unknown builtin roadmap {b:?}")));
                }
            }
            if r.enhance.is_some() {
                let llm = self.llm.clone().unwrap_or_default().with_env();
                llm.validate().map_err(|e| invalid(e.to_string()))?;
                if llm.endpoint.is_none() {
                    return Err(invalid(format!("roadmap {:?} queries an LLM but no endpoint is set", r.name)));
                }
            }
        }
        if let Some(sel) = &self.selection {
            for s in sel {
                if !names.contains(s.as_str()) {
                    return Err(invalid(format!("selection names unknown roadmap {s:?}")));
                }
            }
        }
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    /// Not covered by the output digests.
    pub created_at: String,
    pub roadmaps: Vec<String>,
    pub inputs: BTreeMap<String, InputDigest>,
    pub outputs: BTreeMap<String, String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

struct Outputs {
    root: PathBuf,
}

impl Outputs {
    fn write(&self, rel: &str, bytes: &[u8]) -> Result<(), PipelineError> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(stage("write"))?;
        }
        std::fs::write(&path, bytes).map_err(|e| PipelineError::Stage {
            stage: "write",
            cause: format!("{}: {e}", path.display()),
        })
    }

    fn csv(
        &self,
        rel: &str,
        f: impl FnOnce(&mut Vec<u8>) -> csv::Result<()>,
    ) -> Result<(), PipelineError> {
        let mut buf = Vec::new();
        f(&mut buf).map_err(stage("write"))?;
        self.write(rel, &buf)
    }

    fn json<T: Serialize>(&self, rel: &str, value: &T) -> Result<(), PipelineError> {
        let mut text = serde_json::to_string_pretty(value).map_err(stage("write"))?;
        text.push('\n');
        self.write(rel, text.as_bytes())
    }
}

fn digest_file(label: &str, path: &Path, inputs: &mut BTreeMap<String, InputDigest>) -> Result<(), PipelineError> {
    let bytes = std::fs::read(path).map_err(stage("load"))?;
    inputs.insert(
        label.to_string(),
        InputDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        },
    );
    Ok(())
}

fn digest_dir(label: &str, dir: &Path, inputs: &mut BTreeMap<String, InputDigest>) -> Result<(), PipelineError> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(stage("load"))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    entries.sort();
    for p in entries {
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        digest_file(&format!("{label}/{name}"), &p, inputs)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct MatchRow<'a> {
    roadmap: &'a str,
    terms: usize,
    codes_overall: usize,
    codes_in_sample: usize,
}

/// Runs every stage; returns the manifest written to `output_dir/manifest.json`.
pub fn run_pipeline(config: &PipelineConfig) -> Result<Manifest, PipelineError> {
    config.validate()?;
    let out = Outputs {
        root: config.output_dir.clone(),
    };
    let mut inputs = BTreeMap::new();

    // load
    let catalog = match &config.catalog {
        Some(p) => {
            digest_file("catalog", p, &mut inputs)?;
            Catalog::load(p).map_err(stage("load"))?
        }
        None => Catalog::embedded_fixture(),
    };
    let thresholds = match &config.thresholds {
        Some(p) => {
            digest_file("thresholds", p, &mut inputs)?;
            ThresholdTable::load(p).map_err(stage("load"))?
        }
        None => ThresholdTable::default(),
    };
    let exclusions = match &config.exclusions {
        Some(p) => {
            digest_file("exclusions", p, &mut inputs)?;
            Some(load_code_exclusions(p).map_err(stage("load"))?)
        }
        None => None,
    };
    let original = Roadmap::clinicians_original();

    // roadmaps
    let mut roadmaps: Vec<(&RoadmapSpec, Roadmap)> = Vec::new();
    for spec in config.selected() {
        let mut r = if let Some(p) = &spec.path {
            digest_file(&format!("roadmap/{}", spec.name), p, &mut inputs)?;
            Roadmap::load(p).map_err(stage("roadmap"))?
        } else if spec.builtin.is_some() {
            original.clone()
        } else if let Some(dir) = &spec.transcripts {
            digest_dir(&format!("transcripts/{}", spec.name), dir, &mut inputs)?;
            replay_transcripts(dir).map_err(stage("enhance"))?.roadmap
        } else {
            let mode = spec.enhance.expect("validated");
            let mut llm = config.llm.clone().unwrap_or_default().with_env();
            llm.mode = mode;
            llm.transcript_dir = Some(out.root.join("transcripts").join(&spec.name));
            let client = llm.http_client().map_err(stage("enhance"))?;
            run_enhancement(&llm, &thresholds, Some(&original), &client)
                .map_err(stage("enhance"))?
                .roadmap
        };
        if spec.union_original {
            r = union_roadmaps([&original, &r], &r.name.clone());
        }
        r.name = spec.name.clone();
        out.write(&format!("roadmaps/{}.csv", spec.name), r.to_csv_string().as_bytes())?;
        roadmaps.push((spec, r));
    }

    // cohort
    let cohort = match (&config.cohort.dir, config.cohort.simulate) {
        (Some(dir), _) => {
            digest_dir("cohort", dir, &mut inputs)?;
            Cohort::load_dir(dir).map_err(stage("cohort"))?
        }
        (None, Some(n)) => {
            let syn_cfg = match &config.cohort.synthetic_config {
                Some(p) => {
                    digest_file("synthetic_config", p, &mut inputs)?;
                    let text = std::fs::read_to_string(p).map_err(stage("cohort"))?;
                    toml::from_str::<SyntheticConfig>(&text).map_err(stage("cohort"))?
                }
                None => SyntheticConfig::default(),
            };
            let syn = generate(config.seed, n, &syn_cfg, &catalog, &original, &thresholds).map_err(stage("cohort"))?;
            syn.write_dir(&out.root.join("cohort")).map_err(stage("cohort"))?;
            syn.cohort
        }
        _ => unreachable!("validated"),
    };
    let ids: Vec<String> = cohort.patients.iter().map(|p| p.patient_id.clone()).collect();
    let ehr = cohort.ehr_statuses(&thresholds).map_err(stage("phenotype"))?;
    let sample = cohort.diagnosis_codes();

    // match
    let mut match_rows = Vec::new();
    let mut matched: Vec<RoadmapMatches> = Vec::new();
    for (spec, r) in &roadmaps {
        let opts = MatchOptions {
            include_proposed: spec.include_proposed.unwrap_or(spec.is_llm()),
            ..Default::default()
        };
        let mut m = match_roadmap(r, &catalog, Some(&sample), opts);
        if let Some(ex) = &exclusions {
            m.exclude(ex);
        }
        out.csv(&format!("matches/{}.csv", spec.name), |b| m.write_csv(b))?;
        match_rows.push((spec.name.clone(), m.summary));
        matched.push(m);
    }
    out.csv("match_summary.csv", |b| {
        let mut w = csv::Writer::from_writer(b);
        for (name, s) in &match_rows {
            w.serialize(MatchRow {
                roadmap: name,
                terms: s.terms,
                codes_overall: s.codes_overall,
                codes_in_sample: s.codes_in_sample,
            })?;
        }
        w.flush()?;
        Ok(())
    })?;

    // recover
    let mut recoveries: Vec<(String, CohortRecovery)> = Vec::new();
    let mut recovery_summaries = BTreeMap::new();
    for ((spec, _), m) in roadmaps.iter().zip(&matched) {
        let rec = recover_cohort(&cohort, &ehr, &m.component_codes(), &catalog);
        out.csv(&format!("recovery/{}_statuses.csv", spec.name), |b| rec.write_statuses(b))?;
        out.csv(&format!("recovery/{}_evidence.csv", spec.name), |b| rec.write_evidence(b))?;
        recovery_summaries.insert(spec.name.clone(), rec.summary.clone());
        recoveries.push((spec.name.clone(), rec));
    }
    out.json("recovery_summary.json", &recovery_summaries)?;

    // ali + analysis over the full cohort
    let ehr_source = StatusSource::new("ehr", ehr.clone());
    let algo_sources: Vec<StatusSource> = recoveries
        .iter()
        .map(|(name, rec)| StatusSource::new(name.clone(), rec.after.clone()))
        .collect();
    let mut all_sources = vec![ehr_source.clone()];
    all_sources.extend(algo_sources.iter().cloned());
    write_ali_table(&out, "ali.csv", &ids, &all_sources)?;
    let distributions: Vec<_> = all_sources.iter().map(ali_distribution).collect();
    out.json("ali_summary.json", &distributions)?;

    let fc = flowchart(&ehr_source, &algo_sources).map_err(stage("analysis"))?;
    out.csv("flowchart.csv", |b| write_flowchart_csv(b, &fc))?;
    let miss = missingness_profiles(&all_sources);
    out.csv("missingness.csv", |b| write_missingness_csv(b, &miss))?;
    out.json("missingness.json", &miss)?;
    for src in &algo_sources {
        let pairs = ali_pairs(&ids, &ehr_source, src).map_err(stage("analysis"))?;
        out.csv(&format!("pairs/ehr_vs_{}.csv", src.name), |b| pairs.write_csv(b))?;
    }

    let engaged: Vec<bool> = cohort.patients.iter().map(|p| p.engaged).collect();
    let mut regressions = Vec::new();
    for src in &all_sources {
        regressions.push(regress_engagement(&engaged, src).map_err(stage("regression"))?);
    }
    out.json("regression.json", &regressions)?;

    // chart-reviewed subset, when present
    let reviewed: Vec<usize> = (0..cohort.patients.len())
        .filter(|&i| cohort.patients[i].chart_review.is_some())
        .collect();
    if !reviewed.is_empty() {
        let pick = |v: &[StatusVector]| -> Vec<StatusVector> { reviewed.iter().map(|&i| v[i]).collect() };
        let sub_ids: Vec<String> = reviewed.iter().map(|&i| ids[i].clone()).collect();
        let review = StatusSource::new(
            "chart_review",
            reviewed
                .iter()
                .map(|&i| remap_protocol_errors(cohort.patients[i].chart_review.as_ref().expect("reviewed")))
                .collect(),
        );
        let sub_ehr = StatusSource::new("ehr", pick(&ehr));
        let mut sub_sources = vec![review];
        sub_sources.extend(algo_sources.iter().map(|s| StatusSource::new(s.name.clone(), pick(&s.statuses))));
        let fc = flowchart(&sub_ehr, &sub_sources).map_err(stage("analysis"))?;
        out.csv("review/flowchart.csv", |b| write_flowchart_csv(b, &fc))?;
        let mut subset_all = vec![sub_ehr.clone()];
        subset_all.extend(sub_sources.iter().cloned());
        let miss = missingness_profiles(&subset_all);
        out.csv("review/missingness.csv", |b| write_missingness_csv(b, &miss))?;
        write_ali_table(&out, "review/ali.csv", &sub_ids, &subset_all)?;
        for src in &sub_sources[1..] {
            let pairs = ali_pairs(&sub_ids, &sub_sources[0], src).map_err(stage("analysis"))?;
            out.csv(&format!("review/pairs/chart_review_vs_{}.csv", src.name), |b| pairs.write_csv(b))?;
        }
    }

    // manifest
    let outputs = digest_outputs(&out.root)?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        roadmaps: roadmaps.iter().map(|(s, _)| s.name.clone()).collect(),
        inputs,
        outputs,
    };
    out.json(MANIFEST_FILE, &manifest)?;
    log::info!("pipeline wrote {} files to {}", manifest.outputs.len() + 1, out.root.display());
    Ok(manifest)
}

fn write_ali_table(out: &Outputs, rel: &str, ids: &[String], sources: &[StatusSource]) -> Result<(), PipelineError> {
    let columns: Vec<Vec<Option<f64>>> = sources.iter().map(ali_values).collect();
    out.csv(rel, |b| {
        let mut w = csv::Writer::from_writer(b);
        let mut header = vec!["patient_id".to_string()];
        header.extend(sources.iter().map(|s| format!("ali_{}", s.name)));
        w.write_record(&header)?;
        let mut order: Vec<usize> = (0..ids.len()).collect();
        order.sort_by(|&a, &b| ids[a].cmp(&ids[b]));
        for i in order {
            let mut row = vec![ids[i].clone()];
            row.extend(columns.iter().map(|c| c[i].map(fmt_f64).unwrap_or_default()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    })
}

/// sha256 of every file under `root` except the manifest, keyed by relative path.
pub fn digest_outputs(root: &Path) -> Result<BTreeMap<String, String>, PipelineError> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).map_err(stage("manifest"))? {
            let path = entry.map_err(stage("manifest"))?.path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let rel = path
                .strip_prefix(root)
                .expect("under root")
                .components()
                .map(|c| c.as_os_str().to_string_lossy().into_owned())
                .collect::<Vec<_>>()
                .join("/");
            if rel == MANIFEST_FILE {
                continue;
            }
            let bytes = std::fs::read(&path).map_err(stage("manifest"))?;
            out.insert(rel, sha256_hex(&bytes));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
output_dir = "out"
seed = 7

[cohort]
simulate = 120

[[roadmaps]]
name = "original"
builtin = "clinicians_original"
"#;

    #[test]
    fn sha_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn validation_catches_missing_paths_and_names() {
        let mut cfg = PipelineConfig::from_toml(BASIC).unwrap();
        cfg.validate().unwrap();
        cfg.catalog = Some("/nonexistent/catalog.tsv".into());
        let err = cfg.validate().unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("catalog not found"));

        let mut cfg = PipelineConfig::from_toml(BASIC).unwrap();
        cfg.roadmaps.push(cfg.roadmaps[0].clone());
        assert!(cfg.validate().unwrap_err().to_string().contains("duplicate"));

        let mut cfg = PipelineConfig::from_toml(BASIC).unwrap();
        cfg.selection = Some(vec!["nope".into()]);
        assert!(cfg.validate().is_err());

        assert!(PipelineConfig::from_toml("output_dir = 1").is_err());
    }

    #[test]
    fn missing_catalog_fails_before_any_output() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = PipelineConfig::from_toml(BASIC).unwrap();
        cfg.resolve_paths(dir.path());
        cfg.catalog = Some(dir.path().join("missing.tsv"));
        let err = run_pipeline(&cfg).unwrap_err();
        assert!(matches!(err, PipelineError::Validation(_)));
        assert!(!dir.path().join("out").exists());
    }
}
