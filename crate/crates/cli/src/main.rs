mod args;

use std::collections::BTreeSet;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ali_core::adjudication::{build_queue, Adjudication, DecisionStore, RetentionRule};
use ali_core::analysis::{
    ali_pairs, ali_values, flowchart, fmt_f64, missingness_profiles, regress_engagement, remap_protocol_errors,
    write_flowchart_csv, write_missingness_csv, StatusSource,
};
use ali_core::cohort::read_status_table;
use ali_core::llm::{replay_transcripts, run_enhancement, LlmRunConfig, PromptMode, ScriptedClient};
use ali_core::matcher::{load_code_exclusions, match_roadmap, MatchMode, MatchOptions, RoadmapMatches};
use ali_core::pipeline::{run_pipeline, PipelineConfig};
use ali_core::recovery::recover_cohort;
use ali_core::roadmap::{diff_roadmaps, union_roadmaps};
use ali_core::synthetic::{generate, SyntheticConfig};
use ali_core::{compute_ali, Catalog, Cohort, Roadmap, ThresholdTable};
use clap::Parser;
use serde::Serialize;

use args::*;

/// Exit 2 for bad input, 3 for a failure while running.
enum Failure {
    Invalid(String),
    Failed(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Invalid(_) => 2,
            Failure::Failed(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Invalid(m) | Failure::Failed(m) => m,
        }
    }
}

type Res<T = ()> = Result<T, Failure>;

fn invalid<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Invalid(e.to_string())
}

fn failed<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Failed(e.to_string())
}

fn init_logging(json: bool, verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let mut b = env_logger::Builder::new();
    b.filter_level(level).parse_default_env();
    if json {
        b.format(|buf, r| {
            let line = serde_json::json!({
                "level": r.level().as_str(),
                "target": r.target(),
                "message": r.args().to_string(),
            });
            writeln!(buf, "{line}")
        });
    }
    b.init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.log_json, cli.verbose);
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn run(cmd: Command) -> Res {
    match cmd {
        Command::Catalog(CatalogCmd::Stats(c)) => catalog_stats(&c),
        Command::Roadmap(r) => roadmap_cmd(r),
        Command::Match(a) => match_cmd(&a),
        Command::Recover(a) => recover_cmd(&a),
        Command::Ali(a) => ali_cmd(&a),
        Command::Enhance(a) => enhance_cmd(&a),
        Command::Adjudicate(a) => adjudicate_cmd(a),
        Command::Analyze(a) => analyze_cmd(&a),
        Command::Simulate(a) => simulate_cmd(&a),
        Command::Pipeline(PipelineCmd::Run { config }) => {
            let cfg = PipelineConfig::load(&config).map_err(invalid)?;
            match run_pipeline(&cfg) {
                Ok(m) => print_json(&m),
                Err(e) if e.exit_code() == 2 => Err(invalid(e)),
                Err(e) => Err(failed(e)),
            }
        }
    }
}

/// Write to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) -> Res {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(failed(e)),
        _ => Ok(()),
    }
}

fn print_json<T: Serialize>(v: &T) -> Res {
    emit(&serde_json::to_string_pretty(v).map_err(failed)?)
}

fn load_catalog(c: &CatalogArg) -> Res<Catalog> {
    match &c.catalog {
        Some(p) => Catalog::load(p).map_err(invalid),
        None => Ok(Catalog::embedded_fixture()),
    }
}

fn load_thresholds(p: &Option<PathBuf>) -> Res<ThresholdTable> {
    match p {
        Some(p) => ThresholdTable::load(p).map_err(invalid),
        None => Ok(ThresholdTable::default()),
    }
}

fn load_roadmap(p: &Path) -> Res<Roadmap> {
    let (r, dups) = Roadmap::load_with_report(p).map_err(invalid)?;
    for d in dups {
        log::warn!("{}: line {} repeats {}", p.display(), d.line, d.id);
    }
    Ok(r)
}

fn load_cohort(p: &Path) -> Res<Cohort> {
    Cohort::load_dir(p).map_err(invalid)
}

fn create_parent(path: &Path) -> Res {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(failed)?;
    }
    Ok(())
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Res {
    create_parent(path)?;
    std::fs::write(path, bytes).map_err(|e| failed(format!("{}: {e}", path.display())))
}

fn write_csv(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> csv::Result<()>) -> Res {
    let mut buf = Vec::new();
    f(&mut buf).map_err(failed)?;
    write_bytes(path, &buf)
}

fn catalog_stats(c: &CatalogArg) -> Res {
    let catalog = load_catalog(c)?;
    print_json(&serde_json::json!({
        "entries": catalog.len(),
        "vocabulary": catalog.vocabulary_size(),
        "index_consistent": catalog.index_is_consistent(),
    }))
}

fn roadmap_cmd(cmd: RoadmapCmd) -> Res {
    match cmd {
        RoadmapCmd::Validate { path } => {
            let r = load_roadmap(&path)?;
            print_json(&serde_json::json!({
                "terms": r.terms.len(),
                "distinct_phrases": r.distinct_phrase_count(),
                "valid": true,
            }))
        }
        RoadmapCmd::Stats { path } => {
            let r = match path {
                Some(p) => load_roadmap(&p)?,
                None => Roadmap::clinicians_original(),
            };
            print_json(&r.stats())
        }
        RoadmapCmd::Diff { a, b } => {
            let diff = diff_roadmaps(&load_roadmap(&a)?, &load_roadmap(&b)?);
            print_json(&serde_json::json!({
                "added": diff.added_count(),
                "removed": diff.removed_count(),
                "components": diff.components,
            }))
        }
        RoadmapCmd::Original { out } => write_bytes(&out, Roadmap::clinicians_original().to_csv_string().as_bytes()),
    }
}

fn match_options(o: &MatchOpts) -> MatchOptions {
    MatchOptions {
        mode: if o.substring { MatchMode::Substring } else { MatchMode::Token },
        include_proposed: o.include_proposed,
    }
}

fn compute_matches(
    roadmap: &Roadmap,
    catalog: &Catalog,
    cohort: Option<&Cohort>,
    opts: &MatchOpts,
) -> Res<RoadmapMatches> {
    let sample = cohort.map(Cohort::diagnosis_codes);
    let mut m = match_roadmap(roadmap, catalog, sample.as_ref(), match_options(opts));
    if let Some(p) = &opts.exclusions {
        m.exclude(&load_code_exclusions(p).map_err(invalid)?);
    }
    Ok(m)
}

fn match_cmd(a: &MatchArgs) -> Res {
    let catalog = load_catalog(&a.opts.catalog)?;
    let roadmap = load_roadmap(&a.roadmap)?;
    let cohort = a.cohort.as_deref().map(load_cohort).transpose()?;
    let m = compute_matches(&roadmap, &catalog, cohort.as_ref(), &a.opts)?;
    write_csv(&a.out, |b| m.write_csv(b))?;
    print_json(&m.summary)
}

fn recover_cmd(a: &RecoverArgs) -> Res {
    let catalog = load_catalog(&a.opts.catalog)?;
    let thresholds = load_thresholds(&a.thresholds)?;
    let cohort = load_cohort(&a.cohort)?;
    let matches = match (&a.matches, &a.roadmap) {
        (Some(m), _) => RoadmapMatches::load(m).map_err(invalid)?,
        (None, Some(r)) => compute_matches(&load_roadmap(r)?, &catalog, Some(&cohort), &a.opts)?,
        (None, None) => return Err(invalid("need --roadmap or --matches")),
    };
    let ehr = cohort.ehr_statuses(&thresholds).map_err(invalid)?;
    let rec = recover_cohort(&cohort, &ehr, &matches.component_codes(), &catalog);
    write_csv(&a.out.join("statuses.csv"), |b| rec.write_statuses(b))?;
    write_csv(&a.out.join("evidence.csv"), |b| rec.write_evidence(b))?;
    let summary = serde_json::to_string_pretty(&rec.summary).map_err(failed)?;
    write_bytes(&a.out.join("summary.json"), (summary.clone() + "\n").as_bytes())?;
    emit(&summary)
}

/// EHR source plus `name=path` status tables, all aligned to the cohort.
fn status_sources(cohort: &Cohort, thresholds: &ThresholdTable, specs: &[String]) -> Res<(Vec<String>, Vec<StatusSource>)> {
    let ids: Vec<String> = cohort.patients.iter().map(|p| p.patient_id.clone()).collect();
    let mut sources = vec![StatusSource::new("ehr", cohort.ehr_statuses(thresholds).map_err(invalid)?)];
    for spec in specs {
        let (name, path) = spec
            .split_once('=')
            .ok_or_else(|| invalid(format!("source {spec:?} must be name=path")))?;
        let file = std::fs::File::open(path).map_err(|e| invalid(format!("{path}: {e}")))?;
        let statuses = read_status_table(file, path, &ids).map_err(invalid)?;
        sources.push(StatusSource::new(name, statuses));
    }
    let mut seen = BTreeSet::new();
    for s in &sources {
        if !seen.insert(s.name.clone()) {
            return Err(invalid(format!("duplicate source name {:?}", s.name)));
        }
    }
    Ok((ids, sources))
}

fn ali_cmd(a: &AliArgs) -> Res {
    let cohort = load_cohort(&a.cohort)?;
    let thresholds = load_thresholds(&a.thresholds)?;
    let (ids, sources) = status_sources(&cohort, &thresholds, &a.sources)?;
    write_csv(&a.out, |b| {
        let mut w = csv::Writer::from_writer(b);
        let mut header = vec!["patient_id".to_string()];
        for s in &sources {
            header.extend([format!("{}_numerator", s.name), format!("{}_denominator", s.name), format!("ali_{}", s.name)]);
        }
        w.write_record(&header)?;
        let mut order: Vec<usize> = (0..ids.len()).collect();
        order.sort_by(|&x, &y| ids[x].cmp(&ids[y]));
        for i in order {
            let mut row = vec![ids[i].clone()];
            for s in &sources {
                match compute_ali(&remap_protocol_errors(&s.statuses[i])) {
                    Ok(v) => row.extend([v.numerator.to_string(), v.denominator.to_string(), fmt_f64(v.value)]),
                    Err(_) => row.extend(["0".into(), "0".into(), String::new()]),
                }
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    })
}

fn enhance_cmd(a: &EnhanceArgs) -> Res {
    let mode = match a.mode {
        ModeArg::Baseline => PromptMode::Baseline,
        ModeArg::Context => PromptMode::Context,
    };
    let original = match &a.roadmap {
        Some(p) => load_roadmap(p)?,
        None => Roadmap::clinicians_original(),
    };
    let outcome = if let Some(dir) = &a.replay {
        replay_transcripts(dir).map_err(invalid)?
    } else {
        let thresholds = load_thresholds(&a.thresholds)?;
        let mut cfg = LlmRunConfig {
            endpoint: a.endpoint.clone(),
            iterations: a.iterations,
            mode,
            temperature: a.temperature,
            timeout_secs: a.timeout_secs,
            retries: a.retries,
            parallelism: a.parallel,
            min_interval_ms: a.min_interval_ms,
            transcript_dir: a.transcripts.clone(),
            ..LlmRunConfig::default()
        }
        .with_env();
        if let Some(m) = &a.model {
            cfg.model = m.clone();
        }
        cfg.validate().map_err(invalid)?;
        let result = match &a.responses {
            Some(dir) => {
                let client = ScriptedClient::from_dir(dir).map_err(invalid)?;
                run_enhancement(&cfg, &thresholds, Some(&original), &client)
            }
            None => {
                let client = cfg.http_client().map_err(invalid)?;
                run_enhancement(&cfg, &thresholds, Some(&original), &client)
            }
        };
        result.map_err(failed)?
    };
    let mut roadmap = outcome.roadmap;
    if a.union_original {
        roadmap = union_roadmaps([&original, &roadmap], &roadmap.name.clone());
    }
    write_bytes(&a.out, roadmap.to_csv_string().as_bytes())?;
    let flagged: usize = outcome.transcripts.iter().map(|t| t.diagnostics.len()).sum();
    print_json(&serde_json::json!({
        "runs": outcome.transcripts.len(),
        "failed_runs": outcome.failed_runs,
        "terms": roadmap.terms.len(),
        "diagnostics": flagged,
        "stats": roadmap.stats(),
    }))
}

fn review_state(s: &ReviewSetup) -> Res<Adjudication> {
    let catalog = load_catalog(&s.catalog)?;
    let original = match &s.original {
        Some(p) => load_roadmap(p)?,
        None => Roadmap::clinicians_original(),
    };
    let proposed = load_roadmap(&s.roadmap)?;
    let combined = union_roadmaps([&original, &proposed], "combined");
    let cohort = s.cohort.as_deref().map(load_cohort).transpose()?;
    let matches = match &s.matches {
        Some(p) => RoadmapMatches::load(p).map_err(invalid)?,
        None => {
            let opts = MatchOpts {
                catalog: CatalogArg { catalog: None },
                include_proposed: true,
                substring: false,
                exclusions: None,
            };
            compute_matches(&combined, &catalog, cohort.as_ref(), &opts)?
        }
    };
    let queue = build_queue(&combined, &matches, &catalog, cohort.as_ref());
    let store = DecisionStore::open(&s.log).map_err(invalid)?;
    Ok(Adjudication::new(combined, queue, store))
}

fn adjudicate_cmd(cmd: AdjudicateCmd) -> Res {
    match cmd {
        AdjudicateCmd::Serve { setup, port, host, ui } => {
            let state = review_state(&setup)?;
            let progress = state.progress();
            log::info!("{} terms queued, {} pending", progress.queued, progress.pending);
            let addr: SocketAddr = format!("{host}:{port}").parse().map_err(invalid)?;
            let app = ali_server::router(ali_server::AppState::new(state), ui);
            let rt = tokio::runtime::Runtime::new().map_err(failed)?;
            eprintln!("review service on http://{addr}");
            rt.block_on(ali_server::serve(addr, app)).map_err(failed)
        }
        AdjudicateCmd::Export { setup, rule, out } => {
            let rule: RetentionRule = rule.parse().map_err(invalid)?;
            let state = review_state(&setup)?;
            let exported = state.export(rule);
            write_bytes(&out, exported.to_csv_string().as_bytes())?;
            print_json(&serde_json::json!({
                "progress": state.progress(),
                "retained": exported.retained().count(),
                "stats": exported.stats(),
            }))
        }
        AdjudicateCmd::Progress { setup } => print_json(&review_state(&setup)?.progress()),
    }
}

fn analyze_cmd(a: &AnalyzeArgs) -> Res {
    let cohort = load_cohort(&a.cohort)?;
    let thresholds = load_thresholds(&a.thresholds)?;
    let (mut ids, mut sources) = status_sources(&cohort, &thresholds, &a.sources)?;
    let mut engaged: Vec<bool> = cohort.patients.iter().map(|p| p.engaged).collect();
    if a.with_review {
        let keep: Vec<usize> = (0..ids.len()).filter(|&i| cohort.patients[i].chart_review.is_some()).collect();
        if keep.is_empty() {
            return Err(invalid("--with-review: no patient has a chart review"));
        }
        let review = keep
            .iter()
            .map(|&i| remap_protocol_errors(cohort.patients[i].chart_review.as_ref().expect("reviewed")))
            .collect();
        for s in &mut sources {
            s.statuses = keep.iter().map(|&i| s.statuses[i]).collect();
        }
        sources.insert(1, StatusSource::new("chart_review", review));
        ids = keep.iter().map(|&i| ids[i].clone()).collect();
        engaged = keep.iter().map(|&i| engaged[i]).collect();
    }
    for s in &mut sources {
        s.statuses = s.statuses.iter().map(remap_protocol_errors).collect();
    }
    match a.kind {
        AnalysisKind::Flowchart => {
            let fc = flowchart(&sources[0], &sources[1..]).map_err(invalid)?;
            write_csv(&a.out, |b| write_flowchart_csv(b, &fc))?;
            print_json(&fc)
        }
        AnalysisKind::Missingness => {
            let profiles = missingness_profiles(&sources);
            write_csv(&a.out, |b| write_missingness_csv(b, &profiles))?;
            let summary: Vec<_> = profiles
                .iter()
                .map(|p| serde_json::json!({"source": p.source, "non_missing": p.non_missing_summary, "missing_per_component": p.missing_per_component}))
                .collect();
            print_json(&summary)
        }
        AnalysisKind::Pairs => {
            let find = |name: &str| {
                sources
                    .iter()
                    .find(|s| s.name == name)
                    .ok_or_else(|| invalid(format!("unknown source {name:?}")))
            };
            let a_name = a.a.clone().unwrap_or_else(|| "ehr".into());
            let b_name = match &a.b {
                Some(b) => b.clone(),
                None => sources
                    .get(1)
                    .map(|s| s.name.clone())
                    .ok_or_else(|| invalid("pairs needs a second source"))?,
            };
            let pairs = ali_pairs(&ids, find(&a_name)?, find(&b_name)?).map_err(invalid)?;
            write_csv(&a.out, |b| pairs.write_csv(b))?;
            print_json(&serde_json::json!({"rows": pairs.rows.len(), "excluded": pairs.excluded}))
        }
        AnalysisKind::Regress => {
            let mut reports = Vec::new();
            for s in &sources {
                reports.push(regress_engagement(&engaged, s).map_err(invalid)?);
            }
            let text = serde_json::to_string_pretty(&reports).map_err(failed)?;
            write_bytes(&a.out, (text.clone() + "\n").as_bytes())?;
            let defined: Vec<usize> = sources.iter().map(|s| ali_values(s).iter().flatten().count()).collect();
            log::info!("defined ALI per source: {defined:?}");
            emit(&text)
        }
    }
}

fn simulate_cmd(a: &SimulateArgs) -> Res {
    let catalog = load_catalog(&a.catalog)?;
    let thresholds = load_thresholds(&a.thresholds)?;
    let config = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| invalid(format!("{}: {e}", p.display())))?;
            toml::from_str::<SyntheticConfig>(&text).map_err(invalid)?
        }
        None => SyntheticConfig::default(),
    };
    let syn = generate(a.seed, a.n, &config, &catalog, &Roadmap::clinicians_original(), &thresholds).map_err(invalid)?;
    syn.write_dir(&a.out).map_err(failed)?;
    print_json(&syn.marginals())
}
