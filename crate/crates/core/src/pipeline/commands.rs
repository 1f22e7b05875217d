use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{FeatureSet, KtVariant, RunConfig};
use super::manifest::Manifest;
use super::Layout;
use crate::analysis::{
    lda_project_1d, nlg, nlg_comparison, skill_ttest_map, t_test, write_ttest_table,
    ClassHistogram, OneTailedTest, TTestResult, HISTOGRAM_BINS, NLG_WINDOW,
};
use crate::classify::{Family, TrainedClassifier};
use crate::cohort::generate_cohort;
use crate::data::{
    deduplicate_labeled, parse_clickstream, parse_profiles, LabeledStudent, SkillVocabulary,
    StudentSequence, PROFILE_FEATURES,
};
use crate::dkt::{self, checkpoint, DktModel};
use crate::error::{Error, Result};
use crate::eval::{default_sizes, grid_search, nested_cv, rfe, EvalReport, GridSearch, ReportRow};
use crate::features::{build_features_named, extract_last_state, FeatureMatrix};
use crate::matrix::Matrix;

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, command: &str) -> Result<T> {
    if !path.is_file() {
        return Err(Error::MissingArtifact {
            path: path.to_owned(),
            command: command.to_owned(),
        });
    }
    Ok(serde_json::from_reader(open(path)?)?)
}

fn stage_dir(layout: &Layout, command: &str) -> Result<PathBuf> {
    let dir = layout.stage(command);
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn prepare(config: &RunConfig) -> Result<Layout> {
    config.validate()?;
    Ok(Layout::new(&config.out_dir))
}

/// A configured input file, or the generated cohort's copy.
fn cohort_input(
    config: &RunConfig,
    layout: &Layout,
    configured: &Option<PathBuf>,
    file: &str,
) -> Result<PathBuf> {
    match configured {
        Some(p) => Ok(p.clone()),
        None => {
            Manifest::require(&layout.cohort(), "generate", config)?;
            Ok(layout.cohort().join(file))
        }
    }
}

fn family_stem(family: Family) -> String {
    family.to_string().to_lowercase()
}

/// Labeled profile rows with duplicates removed, in file order.
fn labeled_students(path: &Path) -> Result<Vec<LabeledStudent>> {
    let records = parse_profiles(open(path)?)?;
    let labeled = records.iter().filter_map(|r| r.labeled()).collect();
    let (students, dropped) = deduplicate_labeled(labeled)?;
    if dropped > 0 {
        log::warn!("dropped {dropped} duplicate labeled profile rows");
    }
    if students.is_empty() {
        return Err(Error::DegenerateLabels("no labeled students".into()));
    }
    Ok(students)
}

fn write_states(path: &Path, names: &[String], rows: &[(String, Vec<f64>)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["student_id".to_owned()];
    header.extend(names.iter().cloned());
    w.write_record(&header)?;
    for (id, state) in rows {
        let mut rec = vec![id.clone()];
        rec.extend(state.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn read_states(path: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    let mut r = csv::Reader::from_reader(open(path)?);
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let values = rec
            .iter()
            .skip(1)
            .map(|v| {
                v.parse::<f64>().map_err(|_| Error::Row {
                    line,
                    message: format!("state value `{v}` is not a number"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push((rec[0].to_owned(), values));
    }
    Ok(rows)
}

fn load_model(layout: &Layout, variant: KtVariant) -> Result<DktModel> {
    let path = layout.kt().join(format!("{}.ckpt", variant.file_stem()));
    if !path.is_file() {
        return Err(Error::MissingArtifact {
            path,
            command: "train-kt".into(),
        });
    }
    checkpoint::load(open(&path)?)
}

/// Generates a synthetic cohort into `<out>/cohort`.
pub fn generate(config: &RunConfig) -> Result<Manifest> {
    let layout = prepare(config)?;
    let dir = stage_dir(&layout, "generate")?;
    let cohort = generate_cohort(&config.cohort_config()?)?;
    log::info!(
        "generated {} students ({} interactions)",
        cohort.sequences.len(),
        cohort.interaction_count()
    );
    cohort.write_dir(&dir)?;
    let mut manifest = Manifest::new("generate", config)?;
    for file in ["clickstream.csv", "profiles.csv", "truth.csv", "vocabulary.txt"] {
        manifest.add_output(&dir, &dir.join(file))?;
    }
    manifest.write(&dir)?;
    Ok(manifest)
}

/// Trains a DKT and a DKT+ network on every sequence of the clickstream.
pub fn train_kt(config: &RunConfig) -> Result<Manifest> {
    let layout = prepare(config)?;
    let clickstream = cohort_input(config, &layout, &config.clickstream, "clickstream.csv")?;
    let parsed = parse_clickstream(open(&clickstream)?, None)?;
    if parsed.rejected_rows > 0 {
        log::warn!("skipped {} clickstream rows with empty fields", parsed.rejected_rows);
    }
    let dir = stage_dir(&layout, "train-kt")?;
    let mut manifest = Manifest::new("train-kt", config)?;
    manifest.add_input(&clickstream)?;

    let vocab_path = dir.join("vocabulary.txt");
    parsed.vocabulary.write(create(&vocab_path)?)?;
    manifest.add_output(&dir, &vocab_path)?;
    for variant in KtVariant::ALL {
        let train_config = config.kt_config(variant)?;
        log::info!(
            "training {variant} on {} students, {} skills",
            parsed.sequences.len(),
            parsed.vocabulary.len()
        );
        let (model, log) = dkt::train(&parsed.sequences, parsed.vocabulary.len(), &train_config)?;
        let best = &log.epochs[log.best_epoch];
        log::info!("{variant}: best epoch {} with validation AUC {:.4}", best.epoch, best.val_auc);
        let ckpt = dir.join(format!("{}.ckpt", variant.file_stem()));
        checkpoint::save(&model, create(&ckpt)?)?;
        let log_path = dir.join(format!("{}_log.csv", variant.file_stem()));
        log.write_csv(create(&log_path)?)?;
        manifest.add_output(&dir, &ckpt)?;
        manifest.add_output(&dir, &log_path)?;
    }
    manifest.write(&dir)?;
    Ok(manifest)
}

/// Last knowledge states of every student and the labeled feature tables.
pub fn extract(config: &RunConfig) -> Result<Manifest> {
    let layout = prepare(config)?;
    Manifest::require(&layout.kt(), "train-kt", config)?;
    let vocabulary = SkillVocabulary::read(open(&layout.kt().join("vocabulary.txt"))?)?;
    if let Some(clash) = vocabulary
        .names()
        .iter()
        .find(|n| PROFILE_FEATURES.contains(&n.as_str()) || n.as_str() == "label")
    {
        return Err(Error::Config(format!(
            "skill name `{clash}` collides with a profile column"
        )));
    }
    let clickstream = cohort_input(config, &layout, &config.clickstream, "clickstream.csv")?;
    let profiles = cohort_input(config, &layout, &config.profiles, "profiles.csv")?;
    let parsed = parse_clickstream(open(&clickstream)?, Some(&vocabulary))?;
    let students = labeled_students(&profiles)?;

    let dir = stage_dir(&layout, "extract")?;
    let mut manifest = Manifest::new("extract", config)?;
    manifest.add_input(&clickstream)?;
    manifest.add_input(&profiles)?;

    let names = vocabulary.names().to_vec();
    let mut states: HashMap<KtVariant, HashMap<String, Vec<f64>>> = HashMap::new();
    for variant in KtVariant::ALL {
        let model = load_model(&layout, variant)?;
        if model.n_skills() != vocabulary.len() {
            return Err(Error::Shape(format!(
                "{variant} checkpoint has {} skills, vocabulary has {}",
                model.n_skills(),
                vocabulary.len()
            )));
        }
        let rows: Vec<(String, Vec<f64>)> = parsed
            .sequences
            .par_iter()
            .map(|s| Ok((s.student_id().to_owned(), extract_last_state(&model, s)?)))
            .collect::<Result<_>>()?;
        let path = dir.join(format!("states_{}.csv", variant.file_stem()));
        write_states(&path, &names, &rows)?;
        manifest.add_output(&dir, &path)?;
        states.insert(variant, rows.into_iter().collect());
    }

    let labels: Vec<bool> = students.iter().map(|s| s.stem).collect();
    for &set in &config.features {
        let mut vectors = Vec::with_capacity(students.len());
        let mut missing = Vec::new();
        for s in &students {
            let state: &[f64] = match set.variant() {
                None => &[],
                Some(v) => match states[&v].get(&s.profile.student_id) {
                    Some(state) => state,
                    None => {
                        missing.push(s.profile.student_id.clone());
                        continue;
                    }
                },
            };
            vectors.push(build_features_named(&s.profile, state, set.mode(), &names)?);
        }
        if !missing.is_empty() {
            return Err(Error::format(
                "clickstream",
                format!(
                    "{} labeled students have no interactions (first: {})",
                    missing.len(),
                    missing[0]
                ),
            ));
        }
        let table = FeatureMatrix::from_vectors(vectors, labels.clone())?;
        let path = dir.join(format!("{}.csv", set.file_stem()));
        table.write_csv(create(&path)?)?;
        manifest.add_output(&dir, &path)?;
        log::info!("{set}: {} students × {} features", table.x.rows(), table.x.cols());
    }
    manifest.write(&dir)?;
    Ok(manifest)
}

fn read_features(layout: &Layout, set: FeatureSet) -> Result<FeatureMatrix> {
    let path = layout.features().join(format!("{}.csv", set.file_stem()));
    if !path.is_file() {
        return Err(Error::MissingArtifact {
            path,
            command: "extract".into(),
        });
    }
    FeatureMatrix::read_csv(open(&path)?)
}

fn grid_path(layout: &Layout, set: FeatureSet, family: Family) -> PathBuf {
    layout
        .models()
        .join(format!("{}_{}_grid.json", set.file_stem(), family_stem(family)))
}

/// Grid-searches every family on every feature set and refits the selected
/// specification on all labeled students.
pub fn train_predictor(config: &RunConfig) -> Result<Manifest> {
    let layout = prepare(config)?;
    Manifest::require(&layout.features(), "extract", config)?;
    let dir = stage_dir(&layout, "train-predictor")?;
    let mut manifest = Manifest::new("train-predictor", config)?;
    let seed = config.seed()?;
    for &set in &config.features {
        let table = read_features(&layout, set)?;
        for &family in &config.eval.families {
            let grid = config.eval.grid(family);
            let search = grid_search(
                &grid,
                &table.schema,
                &table.x,
                &table.labels,
                config.eval.folds,
                seed,
            )?;
            let best = search.best_result();
            log::info!(
                "{family} on {set}: {} (test combined {:.4})",
                best.spec,
                best.test.combined.mean
            );
            let model = TrainedClassifier::fit_table(&best.spec, &table)?;
            let model_path = dir.join(format!("{}_{}.json", set.file_stem(), family_stem(family)));
            model.save(create(&model_path)?)?;
            let search_path = grid_path(&layout, set, family);
            write_json(&search_path, &search)?;
            manifest.add_output(&dir, &model_path)?;
            manifest.add_output(&dir, &search_path)?;
        }
    }
    manifest.write(&dir)?;
    Ok(manifest)
}

/// Builds the evaluation report from the stored grid searches, optionally
/// adding nested-CV estimates and feature-elimination rows.
pub fn evaluate(config: &RunConfig) -> Result<Manifest> {
    let layout = prepare(config)?;
    Manifest::require(&layout.models(), "train-predictor", config)?;
    let dir = stage_dir(&layout, "evaluate")?;
    let mut manifest = Manifest::new("evaluate", config)?;
    let (seed, k) = (config.seed()?, config.eval.folds);

    let mut report = EvalReport::default();
    let mut searches = HashMap::new();
    for &set in &config.features {
        for &family in &config.eval.families {
            let search: GridSearch = read_json(&grid_path(&layout, set, family), "train-predictor")?;
            let best = search.best_result();
            report.rows.push(ReportRow {
                model: family,
                features: set.to_string(),
                spec: best.spec,
                train: best.train,
                test: best.test,
                nested_test: None,
                selected: None,
            });
            searches.insert((set, family), search);
        }
    }

    if config.eval.nested_cv {
        let mut nested = BTreeMap::new();
        for row in &mut report.rows {
            let set = *config
                .features
                .iter()
                .find(|s| s.to_string() == row.features)
                .expect("row built from a configured set");
            let table = read_features(&layout, set)?;
            let result = nested_cv(
                &config.eval.grid(row.model),
                &table.schema,
                &table.x,
                &table.labels,
                k,
                seed,
            )?;
            row.nested_test = Some(result.test);
            nested.insert(format!("{} {}", row.model, row.features), result);
        }
        let path = dir.join("nested_cv.json");
        write_json(&path, &nested)?;
        manifest.add_output(&dir, &path)?;
    }

    if config.eval.rfe {
        let mut results = BTreeMap::new();
        for &set in &config.eval.rfe_features {
            if !config.features.contains(&set) {
                log::warn!("skipping elimination on {set}: not among the configured feature sets");
                continue;
            }
            let table = read_features(&layout, set)?;
            let sizes = config
                .eval
                .rfe_sizes
                .clone()
                .unwrap_or_else(|| default_sizes(table.x.cols()));
            for &family in &config.eval.rfe_families {
                let Some(search) = searches.get(&(set, family)) else {
                    log::warn!("skipping elimination for {family}: family not evaluated");
                    continue;
                };
                if family == Family::Svm {
                    log::warn!("skipping elimination for SVM: the RBF kernel has no coefficients");
                    continue;
                }
                let result = rfe(
                    &search.best_spec(),
                    &table.schema,
                    &table.x,
                    &table.labels,
                    &sizes,
                    k,
                    seed,
                )?;
                let best = result.best_subset();
                report.rows.push(ReportRow {
                    model: family,
                    features: format!("{set} RFE"),
                    spec: search.best_spec(),
                    train: best.cv.train,
                    test: best.cv.test,
                    nested_test: None,
                    selected: Some(best.names.clone()),
                });
                results.insert(format!("{family} {set}"), result);
            }
        }
        let path = dir.join("rfe.json");
        write_json(&path, &results)?;
        manifest.add_output(&dir, &path)?;
    }

    let csv_path = dir.join("report.csv");
    report.write_csv(create(&csv_path)?)?;
    let json_path = dir.join("report.json");
    write_json(&json_path, &report)?;
    manifest.add_output(&dir, &csv_path)?;
    manifest.add_output(&dir, &json_path)?;
    manifest.write(&dir)?;
    Ok(manifest)
}

/// Headline numbers of [`analyze`], also written as `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSummary {
    pub n_stem: usize,
    pub n_non_stem: usize,
    /// Histogram overlap of the 1-D discriminant projection, per input
    /// (`SP`, `DKT`, `DKT+`); lower means better separated classes.
    pub overlap: BTreeMap<String, f64>,
    /// Model whose trajectories the learning gains come from.
    pub nlg_model: KtVariant,
    pub nlg_window: usize,
    /// STEM gain above non-STEM gain, one-tailed.
    pub nlg: OneTailedTest,
}

fn ttest_or_none(a: &[f64], b: &[f64]) -> Result<Option<TTestResult>> {
    match t_test(a, b) {
        Ok(t) => Ok(Some(t)),
        Err(Error::DegenerateVariance) => Ok(None),
        Err(e) => Err(e),
    }
}

fn split_by_label(rows: &[Vec<f64>], labels: &[bool]) -> Result<(Matrix, Matrix)> {
    let pick = |want: bool| -> Vec<Vec<f64>> {
        rows.iter()
            .zip(labels)
            .filter(|(_, &l)| l == want)
            .map(|(r, _)| r.clone())
            .collect()
    };
    Ok((Matrix::from_rows(&pick(true))?, Matrix::from_rows(&pick(false))?))
}

/// Group comparisons: profile attribute t-tests, per-skill t-scores of both
/// models' last states, discriminant projections with class histograms and
/// the learning-gain test.
pub fn analyze(config: &RunConfig) -> Result<Manifest> {
    let layout = prepare(config)?;
    Manifest::require(&layout.kt(), "train-kt", config)?;
    Manifest::require(&layout.features(), "extract", config)?;
    let profiles = cohort_input(config, &layout, &config.profiles, "profiles.csv")?;
    let clickstream = cohort_input(config, &layout, &config.clickstream, "clickstream.csv")?;
    let students = labeled_students(&profiles)?;
    let vocabulary = SkillVocabulary::read(open(&layout.kt().join("vocabulary.txt"))?)?;
    let dir = stage_dir(&layout, "analyze")?;
    let mut manifest = Manifest::new("analyze", config)?;
    manifest.add_input(&profiles)?;
    manifest.add_input(&clickstream)?;

    let column = |j: usize, want: bool| -> Vec<f64> {
        students
            .iter()
            .filter(|s| s.stem == want)
            .map(|s| s.profile.feature_values()[j])
            .collect()
    };
    let table: Vec<(String, Option<TTestResult>)> = PROFILE_FEATURES
        .iter()
        .enumerate()
        .map(|(j, name)| Ok((name.to_string(), ttest_or_none(&column(j, false), &column(j, true))?)))
        .collect::<Result<_>>()?;
    let path = dir.join("profile_ttests.csv");
    write_ttest_table(&table, create(&path)?)?;
    manifest.add_output(&dir, &path)?;

    // Knowledge-state analyses use the labeled students present in the clickstream.
    let mut state_maps = HashMap::new();
    for variant in KtVariant::ALL {
        let path = layout
            .features()
            .join(format!("states_{}.csv", variant.file_stem()));
        if !path.is_file() {
            return Err(Error::MissingArtifact {
                path,
                command: "extract".into(),
            });
        }
        state_maps.insert(variant, read_states(&path)?.into_iter().collect::<HashMap<_, _>>());
    }
    let tracked: Vec<&LabeledStudent> = students
        .iter()
        .filter(|s| KtVariant::ALL.iter().all(|v| state_maps[v].contains_key(&s.profile.student_id)))
        .collect();
    let labels: Vec<bool> = tracked.iter().map(|s| s.stem).collect();
    let n_stem = labels.iter().filter(|&&l| l).count();
    if n_stem == 0 || n_stem == labels.len() {
        return Err(Error::DegenerateLabels(
            "both groups need students with interactions".into(),
        ));
    }

    let mut overlap = BTreeMap::new();
    let profile_rows: Vec<Vec<f64>> = tracked.iter().map(|s| s.profile.feature_values().to_vec()).collect();
    let mut projection_inputs = vec![("SP".to_owned(), "sp", profile_rows)];
    for variant in KtVariant::ALL {
        let rows: Vec<Vec<f64>> = tracked
            .iter()
            .map(|s| state_maps[&variant][&s.profile.student_id].clone())
            .collect();
        let (stem, non_stem) = split_by_label(&rows, &labels)?;
        let map = skill_ttest_map(&stem, &non_stem)?;
        let named: Vec<(String, Option<TTestResult>)> = map
            .into_iter()
            .map(|s| (vocabulary.names()[s.skill].clone(), s.test))
            .collect();
        let path = dir.join(format!("skill_ttests_{}.csv", variant.file_stem()));
        write_ttest_table(&named, create(&path)?)?;
        manifest.add_output(&dir, &path)?;
        projection_inputs.push((variant.to_string(), variant.file_stem(), rows));
    }
    for (name, stem, rows) in projection_inputs {
        let projection = lda_project_1d(&Matrix::from_rows(&rows)?, &labels)?;
        let histogram = ClassHistogram::new(&projection.values, &labels, HISTOGRAM_BINS)?;
        let path = dir.join(format!("projection_{stem}.csv"));
        histogram.write_csv(create(&path)?)?;
        manifest.add_output(&dir, &path)?;
        overlap.insert(name, histogram.overlap_coefficient());
    }

    let nlg_model = KtVariant::DktPlus;
    let model = load_model(&layout, nlg_model)?;
    let parsed = parse_clickstream(open(&clickstream)?, Some(&vocabulary))?;
    let sequences: HashMap<&str, &StudentSequence> =
        parsed.sequences.iter().map(|s| (s.student_id(), s)).collect();
    let gains: Vec<f64> = tracked
        .par_iter()
        .map(|s| {
            let seq = sequences.get(s.profile.student_id.as_str()).ok_or_else(|| {
                Error::format("clickstream", format!("no interactions for `{}`", s.profile.student_id))
            })?;
            nlg(&model.predict(seq)?, NLG_WINDOW)
        })
        .collect::<Result<_>>()?;
    let path = dir.join("nlg.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record(["student_id", "label", "nlg"])?;
    for (s, g) in tracked.iter().zip(&gains) {
        w.write_record([
            s.profile.student_id.clone(),
            u8::from(s.stem).to_string(),
            g.to_string(),
        ])?;
    }
    w.flush()?;
    drop(w);
    manifest.add_output(&dir, &path)?;
    let pick = |want: bool| -> Vec<f64> {
        gains
            .iter()
            .zip(&labels)
            .filter(|(_, &l)| l == want)
            .map(|(g, _)| *g)
            .collect()
    };
    let comparison = nlg_comparison(&pick(true), &pick(false))?;

    let summary = AnalysisSummary {
        n_stem,
        n_non_stem: labels.len() - n_stem,
        overlap,
        nlg_model,
        nlg_window: NLG_WINDOW,
        nlg: comparison.test,
    };
    let path = dir.join("summary.json");
    write_json(&path, &summary)?;
    manifest.add_output(&dir, &path)?;
    manifest.write(&dir)?;
    Ok(manifest)
}

/// Runs the stages in order, generating a cohort only when no input files
/// are configured.
pub fn run_all(config: &RunConfig) -> Result<()> {
    if config.clickstream.is_none() || config.profiles.is_none() {
        generate(config)?;
    }
    train_kt(config)?;
    extract(config)?;
    train_predictor(config)?;
    evaluate(config)?;
    analyze(config)?;
    Ok(())
}
