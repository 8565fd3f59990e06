//! Seeded synthetic cohorts for desk-scale experiments.
//!
//! Every draw is an integer draw from a ChaCha8 stream, so a given
//! `(seed, n, config)` produces the same files on every platform. Each
//! component missing from the synthetic EHR carries a hidden true status and
//! a flag saying whether an anchoring diagnosis was emitted, so recovery can
//! be scored against a known truth.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::stats::median;
use crate::catalog::{Catalog, IcdCode};
use crate::cohort::{Cohort, CohortError, Patient};
use crate::component::AliComponent;
use crate::matcher::{match_roadmap, MatchOptions};
use crate::phenotype::{ComponentStatus, Sex, ThresholdTable, ALL_MISSING};
use crate::roadmap::Roadmap;

/// Probabilities are integers in parts per thousand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    /// Age at the 0th, 25th, 50th, 75th and 100th percentiles.
    pub age_quantiles: [u32; 5],
    pub male_per_mille: u32,
    pub race_weights: Vec<(String, u32)>,
    pub ethnicity_weights: Vec<(String, u32)>,
    /// Unique diagnosis count at the 0th..100th percentiles (quartile knots).
    pub diagnosis_count_quantiles: [u32; 5],
    /// Per component, in [`AliComponent::ALL`] order.
    pub missing_per_mille: [u32; 10],
    /// Chance that a component (observed or hidden) is truly unhealthy.
    pub unhealthy_per_mille: [u32; 10],
    /// Chance a truly unhealthy component leaves an anchoring diagnosis.
    pub anchor_if_unhealthy_per_mille: u32,
    /// Chance a truly healthy component still leaves an anchoring diagnosis.
    pub anchor_if_healthy_per_mille: u32,
    /// Exactly `round(n · engaged_per_mille / 1000)` patients are engaged.
    pub engaged_per_mille: u32,
    /// Relative engagement weight indexed by the number of truly unhealthy
    /// components; inclusion is approximately proportional to the weight.
    pub engagement_weight_by_unhealthy: [u32; 11],
    /// Fraction of patients with a chart review.
    pub reviewed_per_mille: u32,
    /// Chance a reviewer finds a truly unhealthy missing component.
    pub review_finds_per_mille: u32,
    /// Chance a reviewer records an out-of-window value instead.
    pub review_protocol_error_per_mille: u32,
    /// Allowed absolute deviation of marginal fractions (N ≥ 500).
    pub fraction_tolerance: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            age_quantiles: [18, 35, 48, 57, 65],
            male_per_mille: 395,
            race_weights: vec![
                ("American Indian or Alaska Native".into(), 6),
                ("Asian Indian".into(), 30),
                ("Black or African American".into(), 181),
                ("Other".into(), 68),
                ("White or Caucasian".into(), 715),
            ],
            ethnicity_weights: vec![
                ("Hispanic, Latino or Spanish".into(), 61),
                ("Not Hispanic, Latino or Spanish".into(), 934),
                ("Patient Refused".into(), 5),
            ],
            diagnosis_count_quantiles: [1, 16, 30, 48, 150],
            missing_per_mille: [0, 0, 2, 350, 330, 955, 400, 350, 500, 983],
            unhealthy_per_mille: [250, 200, 400, 350, 400, 300, 150, 900, 300, 50],
            anchor_if_unhealthy_per_mille: 450,
            anchor_if_healthy_per_mille: 40,
            engaged_per_mille: 318,
            engagement_weight_by_unhealthy: [100, 122, 149, 182, 223, 272, 332, 406, 495, 605, 739],
            reviewed_per_mille: 100,
            review_finds_per_mille: 300,
            review_protocol_error_per_mille: 30,
            fraction_tolerance: 0.03,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SyntheticError {
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Cohort(#[from] CohortError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), SyntheticError> {
        let bad = |m: &str| Err(SyntheticError::InvalidConfig(m.to_string()));
        let per_mille = [
            self.male_per_mille,
            self.engaged_per_mille,
            self.anchor_if_unhealthy_per_mille,
            self.anchor_if_healthy_per_mille,
            self.reviewed_per_mille,
            self.review_finds_per_mille,
            self.review_protocol_error_per_mille,
        ];
        if per_mille
            .iter()
            .chain(&self.missing_per_mille)
            .chain(&self.unhealthy_per_mille)
            .any(|&p| p > 1000)
        {
            return bad("per-mille values must be ≤ 1000");
        }
        if self.review_finds_per_mille + self.review_protocol_error_per_mille > 1000 {
            return bad("review_finds + review_protocol_error exceed 1000");
        }
        if self.engagement_weight_by_unhealthy.iter().any(|&w| w == 0 || w > 1_000_000) {
            return bad("engagement weights must be in 1..=1000000");
        }
        if !self.age_quantiles.windows(2).all(|w| w[0] <= w[1])
            || !self.diagnosis_count_quantiles.windows(2).all(|w| w[0] <= w[1])
        {
            return bad("quantile knots must be non-decreasing");
        }
        for (name, w) in [("race", &self.race_weights), ("ethnicity", &self.ethnicity_weights)] {
            if w.is_empty() || w.iter().map(|(_, x)| x).sum::<u32>() == 0 {
                return bad(&format!("{name} weights must be non-empty with positive total"));
            }
        }
        if self.fraction_tolerance.is_nan() || self.fraction_tolerance <= 0.0 {
            return bad("fraction_tolerance must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TruthRow {
    pub patient_id: String,
    pub component: AliComponent,
    pub true_status: ComponentStatus,
    pub anchor_emitted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCohort {
    pub cohort: Cohort,
    /// One row per component missing from the EHR readings.
    pub truth: Vec<TruthRow>,
}

/// Integer-valued inclusive ranges (tenths of the unit) readings are drawn from.
fn reading_range_tenths(c: AliComponent) -> (u32, u32) {
    use AliComponent::*;
    match c {
        SystolicBP => (900, 2000),
        DiastolicBP => (500, 1200),
        BMI => (170, 500),
        Triglycerides => (400, 5000),
        TotalCholesterol => (1200, 3200),
        CRP => (1, 600),
        HbA1c => (40, 120),
        SerumAlbumin => (20, 50),
        CreatinineClearance => (300, 1600),
        Homocysteine => (50, 800),
    }
}

fn exact_count(n: usize, per_mille: u32) -> usize {
    (n * per_mille as usize + 500) / 1000
}

struct Draw(ChaCha8Rng);

impl Draw {
    /// Membership flags for a uniformly random subset of exactly `k` of `n`.
    fn exact_subset(&mut self, n: usize, k: usize) -> Vec<bool> {
        let mut idx: Vec<usize> = (0..n).collect();
        let mut flags = vec![false; n];
        for t in 0..k.min(n) {
            let j = self.0.gen_range(t..n);
            idx.swap(t, j);
            flags[idx[t]] = true;
        }
        flags
    }

    fn chance(&mut self, per_mille: u32) -> bool {
        self.0.gen_range(0..1000u32) < per_mille
    }

    /// Piecewise-linear inverse CDF through quartile knots.
    fn quantile(&mut self, knots: &[u32; 5]) -> u32 {
        let u = self.0.gen_range(0..1_000_000u64);
        let seg = (u / 250_000) as usize;
        let lo = u64::from(knots[seg]);
        let hi = u64::from(knots[seg + 1]);
        let frac = u - seg as u64 * 250_000;
        ((lo * 250_000 + (hi - lo) * frac + 125_000) / 250_000) as u32
    }

    fn weighted<'a>(&mut self, weights: &'a [(String, u32)]) -> &'a str {
        let total: u32 = weights.iter().map(|(_, w)| w).sum();
        let mut x = self.0.gen_range(0..total);
        for (label, w) in weights {
            if x < *w {
                return label;
            }
            x -= w;
        }
        &weights[weights.len() - 1].0
    }

    fn pick<'a, T>(&mut self, items: &'a [T]) -> Option<&'a T> {
        (!items.is_empty()).then(|| &items[self.0.gen_range(0..items.len())])
    }

    fn reading(
        &mut self,
        thresholds: &ThresholdTable,
        c: AliComponent,
        sex: Sex,
        want: ComponentStatus,
    ) -> f64 {
        let (lo, hi) = reading_range_tenths(c);
        loop {
            let v = f64::from(self.0.gen_range(lo..=hi)) / 10.0;
            if thresholds.classify(c, v, Some(sex)).ok() == Some(want) {
                return v;
            }
        }
    }
}

/// Generate a synthetic cohort. Anchor codes for each component are the
/// catalog codes matched by `roadmap`'s retained terms; filler diagnoses are
/// drawn from codes no term matches.
pub fn generate(
    seed: u64,
    n: usize,
    config: &SyntheticConfig,
    catalog: &Catalog,
    roadmap: &Roadmap,
    thresholds: &ThresholdTable,
) -> Result<SyntheticCohort, SyntheticError> {
    if n == 0 {
        return Err(SyntheticError::InvalidConfig("N must be at least 1".into()));
    }
    config.validate()?;
    let matches = match_roadmap(roadmap, catalog, None, MatchOptions::default());
    let anchors: Vec<Vec<IcdCode>> = {
        let per = matches.component_codes();
        AliComponent::ALL
            .iter()
            .map(|c| per[c].keys().cloned().collect())
            .collect()
    };
    let matched = matches.all_codes();
    let filler: Vec<IcdCode> = catalog
        .entries()
        .iter()
        .map(|e| e.code.clone())
        .filter(|c| !matched.contains(c))
        .collect();
    if filler.is_empty() {
        return Err(SyntheticError::InvalidConfig(
            "catalog has no codes outside the roadmap's matches".into(),
        ));
    }

    let mut rng = Draw(ChaCha8Rng::seed_from_u64(seed));
    let width = n.to_string().len().max(4);
    let mut patients = Vec::with_capacity(n);
    let mut truth = Vec::new();
    let males = rng.exact_subset(n, exact_count(n, config.male_per_mille));
    let reviewed_flags = rng.exact_subset(n, exact_count(n, config.reviewed_per_mille));
    let mut engagement_keys = Vec::with_capacity(n);

    for i in 0..n {
        let mut p = Patient::new(format!("P{:0width$}", i + 1));
        p.age = rng.quantile(&config.age_quantiles);
        let sex = if males[i] {
            Sex::Male
        } else {
            Sex::Female
        };
        p.sex = Some(sex);
        p.race = rng.weighted(&config.race_weights).to_string();
        p.ethnicity = rng.weighted(&config.ethnicity_weights).to_string();

        let mut dx: BTreeSet<IcdCode> = BTreeSet::new();
        let mut true_status = ALL_MISSING;
        let mut truly_unhealthy = 0usize;
        let mut review = ALL_MISSING;
        let reviewed = reviewed_flags[i];

        for c in AliComponent::ALL {
            let k = c.index();
            let unhealthy = rng.chance(config.unhealthy_per_mille[k]);
            let status = if unhealthy {
                ComponentStatus::Unhealthy
            } else {
                ComponentStatus::Healthy
            };
            true_status[k] = status;
            truly_unhealthy += usize::from(unhealthy);
            let missing = rng.chance(config.missing_per_mille[k]);
            let anchor_chance = if unhealthy {
                config.anchor_if_unhealthy_per_mille
            } else {
                config.anchor_if_healthy_per_mille
            };
            let anchor = rng.chance(anchor_chance);
            let mut emitted = false;
            if anchor {
                if let Some(code) = rng.pick(&anchors[k]) {
                    dx.insert(code.clone());
                    emitted = true;
                }
            }
            if missing {
                truth.push(TruthRow {
                    patient_id: p.patient_id.clone(),
                    component: c,
                    true_status: status,
                    anchor_emitted: emitted,
                });
                let roll = rng.0.gen_range(0..1000u32);
                review[k] = if unhealthy && roll < config.review_finds_per_mille {
                    ComponentStatus::Unhealthy
                } else if roll >= 1000 - config.review_protocol_error_per_mille {
                    ComponentStatus::ProtocolError
                } else {
                    ComponentStatus::Missing
                };
            } else {
                p.readings[k] = Some(rng.reading(thresholds, c, sex, status));
                review[k] = status;
            }
        }
        p.chart_review = reviewed.then_some(review);
        let u = rng.0.gen_range(1..=u64::from(u32::MAX));
        engagement_keys.push((u, u64::from(config.engagement_weight_by_unhealthy[truly_unhealthy])));

        let target = (rng.quantile(&config.diagnosis_count_quantiles) as usize).min(filler.len());
        let mut pool: Vec<usize> = (0..filler.len()).collect();
        let mut taken = 0;
        while dx.len() < target.max(1) && taken < pool.len() {
            let j = rng.0.gen_range(taken..pool.len());
            pool.swap(taken, j);
            dx.insert(filler[pool[taken]].clone());
            taken += 1;
        }
        p.diagnoses = dx.into_iter().collect();
        patients.push(p);
    }

    // Sequential Poisson sampling: the k smallest u/w keys are engaged.
    // Keys are compared by cross-multiplication to stay in integers.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let (ua, wa) = engagement_keys[a];
        let (ub, wb) = engagement_keys[b];
        (ua * wb).cmp(&(ub * wa)).then(a.cmp(&b))
    });
    for &i in order.iter().take(exact_count(n, config.engaged_per_mille)) {
        patients[i].engaged = true;
    }

    Ok(SyntheticCohort {
        cohort: Cohort {
            name: format!("synthetic-seed{seed}-n{n}"),
            patients,
        },
        truth,
    })
}

impl SyntheticCohort {
    /// Cohort CSVs plus `truth.csv`.
    pub fn write_dir(&self, dir: &Path) -> Result<(), SyntheticError> {
        self.cohort.write_dir(dir)?;
        let file = std::fs::File::create(dir.join("truth.csv"))?;
        self.write_truth(std::io::BufWriter::new(file))?;
        Ok(())
    }

    pub fn write_truth<W: Write>(&self, writer: W) -> Result<(), SyntheticError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["patient_id", "component", "true_status", "anchor_emitted"])?;
        for t in &self.truth {
            w.write_record([
                t.patient_id.as_str(),
                t.component.key(),
                t.true_status.as_str(),
                if t.anchor_emitted { "1" } else { "0" },
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn marginals(&self) -> Marginals {
        Marginals::of(&self.cohort)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Marginals {
    pub n: usize,
    pub median_age: f64,
    pub male_fraction: f64,
    pub engaged_fraction: f64,
    pub median_unique_diagnoses: f64,
    pub median_missing_components: f64,
}

impl Marginals {
    pub fn of(cohort: &Cohort) -> Self {
        let n = cohort.n().max(1) as f64;
        let ages: Vec<f64> = cohort.patients.iter().map(|p| f64::from(p.age)).collect();
        let dx: Vec<f64> = cohort.patients.iter().map(|p| p.diagnoses.len() as f64).collect();
        let miss: Vec<f64> = cohort.patients.iter().map(|p| p.missing_count() as f64).collect();
        Marginals {
            n: cohort.n(),
            median_age: median(&ages).unwrap_or(f64::NAN),
            male_fraction: cohort.patients.iter().filter(|p| p.sex == Some(Sex::Male)).count() as f64 / n,
            engaged_fraction: cohort.patients.iter().filter(|p| p.engaged).count() as f64 / n,
            median_unique_diagnoses: median(&dx).unwrap_or(f64::NAN),
            median_missing_components: median(&miss).unwrap_or(f64::NAN),
        }
    }
}
