use ali_core::synthetic::{generate, SyntheticConfig};
use ali_core::{Catalog, Roadmap, ThresholdTable};

fn cohort(seed: u64, n: usize) -> ali_core::synthetic::SyntheticCohort {
    generate(
        seed,
        n,
        &SyntheticConfig::default(),
        &Catalog::embedded_fixture(),
        &Roadmap::clinicians_original(),
        &ThresholdTable::default(),
    )
    .unwrap()
}

#[test]
#[allow(clippy::approx_constant)]
fn default_config_hits_cohort_marginals() {
    let cfg = SyntheticConfig::default();
    for seed in [1, 7, 42] {
        let m = cohort(seed, 1000).marginals();
        println!("{m:?}");
        assert!((m.engaged_fraction - 0.318).abs() <= cfg.fraction_tolerance, "{m:?}");
        assert!((m.male_fraction - 0.395).abs() <= cfg.fraction_tolerance, "{m:?}");
        assert_eq!(m.median_missing_components, 4.0, "{m:?}");
        assert!((m.median_age - 48.0).abs() <= 2.0, "{m:?}");
        assert!((m.median_unique_diagnoses - 30.0).abs() <= 3.0, "{m:?}");
    }
}

#[test]
fn files_are_byte_identical_for_same_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    cohort(7, 300).write_dir(a.path()).unwrap();
    cohort(7, 300).write_dir(b.path()).unwrap();
    for f in ["patients.csv", "diagnoses.csv", "readings.csv", "review.csv", "truth.csv"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert_eq!(x, y, "{f}");
    }
}

#[test]
fn written_cohort_ingests_back_unchanged() {
    let s = cohort(11, 120);
    let dir = tempfile::tempdir().unwrap();
    s.write_dir(dir.path()).unwrap();
    let mut back = ali_core::Cohort::load_dir(dir.path()).unwrap();
    back.name = s.cohort.name.clone();
    assert_eq!(back, s.cohort);
}
