//! The four pipeline stages and the corpus materializer.
//!
//! Every stage takes in-memory inputs, writes its artifacts under a
//! stage subdirectory of the output directory, and returns both the
//! in-memory outputs (for the next stage) and the relative paths of
//! what it wrote (for the manifest). Loader counterparts re-read the
//! artifacts, so a cached stage's outputs feed later stages without
//! recomputation.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifest::hash_value;
use super::synth::{synth_corpus, Archetype, SynthCorpus, TRUTH_FILE};
use super::{derive_seed, stage_err, InputSpec, PipelineConfig, PipelineError};
use crate::features::{
    assemble_matrix, extract_for_family, schema, FeatureFamily, FeatureMatrix, NanRepair,
};
use crate::forecast::{
    backtest_day_ahead, write_scores_csv, ForecastError, ForecastReport, ModelKind,
};
use crate::ingest::{
    align_covariates, atomic_write, impute_nearest, parse_meter_csv, parse_weather_csv,
    read_corpus_archive, write_corpus_archive, ArchiveManifestEntry, Corpus,
};
use crate::metrics::{confusion, report, ClassificationReport};
use crate::selector::{
    grid_search_cv, make_labels, predict_rows, split_75_25, top_k_importances, ForestParams,
    GridSearchResult, LabeledMatrix,
};

/// Corpus archive subdirectory of the output directory.
pub const CORPUS_DIR: &str = "corpus";
const CORPUS_HASH_FILE: &str = "corpus/corpus_hash.json";

fn write_rel(out: &Path, rel: &str, bytes: &[u8]) -> Result<(), PipelineError> {
    let path = out.join(rel);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    atomic_write(&path, bytes)?;
    Ok(())
}

fn write_json<T: Serialize>(out: &Path, rel: &str, value: &T) -> Result<(), PipelineError> {
    let mut json = serde_json::to_string_pretty(value)?;
    json.push('\n');
    write_rel(out, rel, json.as_bytes())
}

fn read_json<T: for<'de> Deserialize<'de>>(out: &Path, rel: &str) -> Result<T, PipelineError> {
    Ok(serde_json::from_slice(&std::fs::read(out.join(rel))?)?)
}

/// Produce the corpus under `out/corpus`, either synthetically or by
/// ingesting the configured files, and return it with its input hash.
/// An archive whose recorded hash matches is reused as-is.
pub fn materialize_corpus(
    config: &PipelineConfig,
    out: &Path,
) -> Result<(Corpus, Option<BTreeMap<String, Archetype>>, String, bool), PipelineError> {
    let synth_seed = derive_seed(config.seed, "synth");
    let input_hash = match &config.input {
        InputSpec::Synthetic(spec) => hash_value(&("synthetic", spec, synth_seed))?,
        InputSpec::Files {
            meter_csv,
            weather_csv,
            columns,
        } => {
            let meter = super::manifest::hash_file(meter_csv)?;
            let weather = super::manifest::hash_file(weather_csv)?;
            hash_value(&("files", meter, weather, columns))?
        }
    };

    #[derive(Serialize, Deserialize)]
    struct CorpusStamp {
        input_hash: String,
    }

    let stamp: Option<CorpusStamp> = read_json(out, CORPUS_HASH_FILE).ok();
    if stamp.is_some_and(|s| s.input_hash == input_hash) {
        if let Ok((corpus, _)) = read_corpus_archive(&out.join(CORPUS_DIR)) {
            let truth: Option<BTreeMap<String, Archetype>> =
                read_json(out, &format!("{CORPUS_DIR}/{TRUTH_FILE}")).ok();
            return Ok((corpus, truth, input_hash, true));
        }
    }

    let (corpus, truth, discarded) = match &config.input {
        InputSpec::Synthetic(spec) => {
            let SynthCorpus { corpus, truth } = synth_corpus(spec, synth_seed)?;
            (corpus, Some(truth), Vec::new())
        }
        InputSpec::Files {
            meter_csv,
            weather_csv,
            columns,
        } => {
            let meter = std::fs::File::open(meter_csv)?;
            let raw_series = parse_meter_csv(meter, columns)?;
            let weather_file = std::fs::File::open(weather_csv)?;
            let weather = parse_weather_csv(weather_file, columns.timestamp_format.as_deref())?;
            let mut corpus = Corpus::new();
            let mut discarded = Vec::new();
            for raw in &raw_series {
                let series = impute_nearest(raw)?;
                if series.mean() == 0.0 {
                    discarded.push(ArchiveManifestEntry::discarded_from(&series));
                    continue;
                }
                let frame = align_covariates(&series, &weather)?;
                corpus.insert(series, frame)?;
            }
            (corpus, None, discarded)
        }
    };
    if corpus.is_empty() {
        return Err(PipelineError::Config(
            "corpus is empty after preprocessing".into(),
        ));
    }

    write_corpus_archive(&out.join(CORPUS_DIR), &corpus, &discarded)?;
    if let Some(truth) = &truth {
        write_json(out, &format!("{CORPUS_DIR}/{TRUTH_FILE}"), truth)?;
    }
    write_json(out, CORPUS_HASH_FILE, &CorpusStamp { input_hash: input_hash.clone() })?;
    Ok((corpus, truth, input_hash, false))
}

/// Backtest all four forecasters per building. Buildings whose series
/// cannot support the backtest land in a skip list instead of failing
/// the stage; a configuration problem fails it outright.
pub fn stage_forecast(
    config: &PipelineConfig,
    corpus: &Corpus,
    out: &Path,
) -> Result<(Vec<ForecastReport>, Vec<String>), PipelineError> {
    const STAGE: &str = "forecast";
    let buildings: Vec<(&str, &crate::ingest::Building)> = corpus.iter().collect();
    let outcomes: Vec<(String, Result<ForecastReport, ForecastError>)> = buildings
        .par_iter()
        .map(|(id, building)| {
            let got = backtest_day_ahead(
                &building.series,
                &building.frame,
                &config.backtest,
                &ModelKind::ALL,
            );
            (id.to_string(), got)
        })
        .collect();

    let mut reports = Vec::new();
    let mut skipped = BTreeMap::new();
    for (id, outcome) in outcomes {
        match outcome {
            Ok(report) => reports.push(report),
            Err(ForecastError::InvalidConfig(message)) => {
                return Err(stage_err(STAGE, format!("invalid config: {message}")));
            }
            Err(err) => {
                skipped.insert(id, err.to_string());
            }
        }
    }
    if reports.is_empty() {
        return Err(stage_err(STAGE, "every building was skipped"));
    }

    let mut artifacts = Vec::new();
    for report in &reports {
        let rel = format!("forecast/reports/{}.json", report.building_id);
        write_json(out, &rel, report)?;
        artifacts.push(rel);
    }
    let mut scores = Vec::new();
    write_scores_csv(&reports, &mut scores).map_err(|e| stage_err(STAGE, e))?;
    write_rel(out, "forecast/scores.csv", &scores)?;
    artifacts.push("forecast/scores.csv".into());
    write_json(out, "forecast/skipped.json", &skipped)?;
    artifacts.push("forecast/skipped.json".into());
    Ok((reports, artifacts))
}

/// Re-read the per-building forecast reports written by
/// [`stage_forecast`], in building-id order.
pub fn load_forecast_reports(out: &Path) -> Result<Vec<ForecastReport>, PipelineError> {
    let dir = out.join("forecast/reports");
    let mut paths: Vec<_> = std::fs::read_dir(&dir)?
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .map(|entry| entry.path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| Ok(serde_json::from_slice(&std::fs::read(p)?)?))
        .collect()
}

/// Extract all three feature matrices over the buildings that support
/// every registry; the rest go to a skip list shared by all families,
/// so the three matrices always cover identical rows.
pub fn stage_features(
    corpus: &Corpus,
    out: &Path,
) -> Result<(BTreeMap<FeatureFamily, FeatureMatrix>, Vec<String>), PipelineError> {
    const STAGE: &str = "features";
    let mut retained = Corpus::new();
    let mut skipped = BTreeMap::new();
    for (id, building) in corpus.iter() {
        match extract_for_family(building, FeatureFamily::Combined) {
            Ok(_) => {
                retained
                    .insert(building.series.clone(), building.frame.clone())
                    .map_err(|e| stage_err(STAGE, e))?;
            }
            Err(err) => {
                skipped.insert(id.to_string(), err.to_string());
            }
        }
    }
    if retained.is_empty() {
        return Err(stage_err(STAGE, "every building was skipped"));
    }

    let mut artifacts = Vec::new();
    let mut matrices = BTreeMap::new();
    let mut repairs: BTreeMap<&'static str, Vec<NanRepair>> = BTreeMap::new();
    for family in FeatureFamily::ALL {
        let matrix = assemble_matrix(&retained, family).map_err(|e| stage_err(STAGE, e))?;
        let mut csv_bytes = Vec::new();
        matrix.to_csv(&mut csv_bytes).map_err(|e| stage_err(STAGE, e))?;
        let rel = format!("features/{}.csv", family.name());
        write_rel(out, &rel, &csv_bytes)?;
        artifacts.push(rel);
        let rel = format!("features/{}.schema.json", family.name());
        write_json(out, &rel, &schema(family))?;
        artifacts.push(rel);
        repairs.insert(family.name(), matrix.repairs().to_vec());
        matrices.insert(family, matrix);
    }
    write_json(out, "features/repairs.json", &repairs)?;
    artifacts.push("features/repairs.json".into());
    write_json(out, "features/skipped.json", &skipped)?;
    artifacts.push("features/skipped.json".into());
    Ok((matrices, artifacts))
}

/// Re-read the three feature matrices written by [`stage_features`].
/// The repair audit stays on disk; reloaded matrices carry none.
pub fn load_feature_matrices(
    out: &Path,
) -> Result<BTreeMap<FeatureFamily, FeatureMatrix>, PipelineError> {
    let mut matrices = BTreeMap::new();
    for family in FeatureFamily::ALL {
        let path = out.join(format!("features/{}.csv", family.name()));
        let (columns, ids, values) = read_matrix_csv(&path, 0)?;
        matrices.insert(
            family,
            FeatureMatrix::new(family, columns, ids, values, Vec::new()),
        );
    }
    Ok(matrices)
}

/// Parse a feature CSV (`building_id`, feature columns, and `trailing`
/// extra columns that the caller interprets).
fn read_matrix_csv(
    path: &Path,
    trailing: usize,
) -> Result<(Vec<String>, Vec<String>, Vec<f64>), PipelineError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| PipelineError::Io(std::io::Error::other(e.to_string())))?;
    let headers = reader
        .headers()
        .map_err(|e| PipelineError::Io(std::io::Error::other(e.to_string())))?
        .clone();
    let names: Vec<String> = headers.iter().map(str::to_string).collect();
    if names.first().map(String::as_str) != Some("building_id") || names.len() < 2 + trailing {
        return Err(PipelineError::Io(std::io::Error::other(format!(
            "{} is not a feature matrix CSV",
            path.display()
        ))));
    }
    let columns: Vec<String> = names[1..names.len() - trailing].to_vec();
    let mut ids = Vec::new();
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| PipelineError::Io(std::io::Error::other(e.to_string())))?;
        ids.push(record.get(0).unwrap_or_default().to_string());
        for cell in record.iter().take(names.len() - trailing).skip(1) {
            let value: f64 = cell.parse().map_err(|e| {
                PipelineError::Io(std::io::Error::other(format!(
                    "{}: bad cell {cell:?}: {e}",
                    path.display()
                )))
            })?;
            values.push(value);
        }
    }
    Ok((columns, ids, values))
}

/// Per-label row counts written by [`stage_label`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSummary {
    pub counts: BTreeMap<ModelKind, usize>,
    pub total: usize,
}

/// Label every feature matrix with its building's best backtested
/// model. Rows without a label (buildings the forecast stage skipped)
/// are dropped from the labeled matrices.
pub fn stage_label(
    reports: &[ForecastReport],
    matrices: &BTreeMap<FeatureFamily, FeatureMatrix>,
    out: &Path,
) -> Result<(BTreeMap<FeatureFamily, LabeledMatrix>, LabelSummary, Vec<String>), PipelineError> {
    const STAGE: &str = "label";
    let labels = make_labels(reports).map_err(|e| stage_err(STAGE, e))?;

    let mut artifacts = Vec::new();
    write_json(out, "labels/labels.json", &labels)?;
    artifacts.push("labels/labels.json".into());

    let mut labeled = BTreeMap::new();
    let mut summary: Option<LabelSummary> = None;
    for (family, matrix) in matrices {
        let keep: Vec<usize> = (0..matrix.n_rows())
            .filter(|&i| labels.contains_key(&matrix.building_ids()[i]))
            .collect();
        if keep.is_empty() {
            return Err(stage_err(STAGE, "no building has both features and a label"));
        }
        let ids: Vec<String> = keep
            .iter()
            .map(|&i| matrix.building_ids()[i].clone())
            .collect();
        let mut values = Vec::with_capacity(keep.len() * matrix.n_cols());
        for &i in &keep {
            values.extend_from_slice(matrix.row(i));
        }
        let subset = FeatureMatrix::new(
            *family,
            matrix.columns().to_vec(),
            ids,
            values,
            Vec::new(),
        );
        let attached = LabeledMatrix::attach(subset, &labels).map_err(|e| stage_err(STAGE, e))?;

        let counts = attached.label_counts();
        let family_summary = LabelSummary {
            total: counts.values().sum(),
            counts,
        };
        debug_assert!(
            summary.as_ref().map_or(true, |s| *s == family_summary),
            "families must agree on label counts"
        );
        summary = Some(family_summary);

        let mut csv_bytes = Vec::new();
        attached
            .to_csv(&mut csv_bytes)
            .map_err(|e| stage_err(STAGE, e))?;
        let rel = format!("labels/{}_labeled.csv", family.name());
        write_rel(out, &rel, &csv_bytes)?;
        artifacts.push(rel);
        labeled.insert(*family, attached);
    }

    let summary = summary.ok_or_else(|| stage_err(STAGE, "no feature matrices to label"))?;
    write_json(out, "labels/label_counts.json", &summary)?;
    artifacts.push("labels/label_counts.json".into());
    Ok((labeled, summary, artifacts))
}

/// Re-read the labeled matrices written by [`stage_label`].
pub fn load_labeled_matrices(
    out: &Path,
) -> Result<BTreeMap<FeatureFamily, LabeledMatrix>, PipelineError> {
    let mut labeled = BTreeMap::new();
    for family in FeatureFamily::ALL {
        let path = out.join(format!("labels/{}_labeled.csv", family.name()));
        let (columns, ids, values) = read_matrix_csv(&path, 1)?;
        let mut reader = csv::Reader::from_path(&path)
            .map_err(|e| PipelineError::Io(std::io::Error::other(e.to_string())))?;
        let mut labels = Vec::with_capacity(ids.len());
        for record in reader.records() {
            let record =
                record.map_err(|e| PipelineError::Io(std::io::Error::other(e.to_string())))?;
            let cell = record.iter().last().unwrap_or_default();
            let label = ModelKind::from_str(cell).map_err(|e| {
                PipelineError::Io(std::io::Error::other(format!(
                    "{}: bad label {cell:?}: {e}",
                    path.display()
                )))
            })?;
            labels.push(label);
        }
        let matrix = FeatureMatrix::new(family, columns, ids, values, Vec::new());
        labeled.insert(family, LabeledMatrix::new(matrix, labels));
    }
    Ok(labeled)
}

/// One family's classification outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyOutcome {
    pub family: FeatureFamily,
    pub chosen_params: ForestParams,
    pub cv_mean_accuracy: f64,
    pub test_accuracy: f64,
    /// Accuracy on the test rows of always predicting the training
    /// set's majority class.
    pub majority_baseline: f64,
    pub train_rows: usize,
    pub test_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifySummary {
    pub families: BTreeMap<FeatureFamily, FamilyOutcome>,
}

/// Split, tune, fit, and evaluate the forest for every configured
/// family; emits the model, grid results, confusion matrix, report,
/// and top-5 importances per family plus a cross-family summary.
pub fn stage_classify(
    config: &PipelineConfig,
    labeled: &BTreeMap<FeatureFamily, LabeledMatrix>,
    out: &Path,
) -> Result<(ClassifySummary, Vec<String>), PipelineError> {
    const STAGE: &str = "classify";
    let classify_seed = derive_seed(config.seed, "classify");
    let mut artifacts = Vec::new();
    let mut families = BTreeMap::new();

    for &family in &config.families {
        let matrix = labeled.get(&family).ok_or_else(|| {
            stage_err(STAGE, format!("no labeled matrix for family {family}"))
        })?;
        let split_seed = derive_seed(classify_seed, &format!("{}.split", family.name()));
        let cv_seed = derive_seed(classify_seed, &format!("{}.cv", family.name()));
        let (train, test) =
            split_75_25(matrix, split_seed, true).map_err(|e| stage_err(STAGE, e))?;

        let grid = config.grid.expand(train.matrix().n_cols());
        let (grid_result, model) = grid_search_cv(&train, &grid, config.cv_folds, cv_seed)
            .map_err(|e| stage_err(STAGE, e))?;

        let predictions = predict_rows(&model, test.matrix()).map_err(|e| stage_err(STAGE, e))?;
        let cm = confusion(test.labels(), &predictions, &ModelKind::ALL)
            .map_err(|e| stage_err(STAGE, e))?;
        let class_report: ClassificationReport =
            report(&cm).map_err(|e| stage_err(STAGE, e))?;

        let train_counts = train.label_counts();
        let count_of = |k: &ModelKind| train_counts.get(k).copied().unwrap_or(0);
        let max_count = ModelKind::ALL.iter().map(count_of).max().unwrap_or(0);
        // Ties go to the earlier candidate-model kind.
        let majority = ModelKind::ALL
            .into_iter()
            .find(|k| count_of(k) == max_count)
            .expect("four candidate classes");
        let baseline_hits = test.labels().iter().filter(|&&l| l == majority).count();

        let outcome = FamilyOutcome {
            family,
            chosen_params: grid_result.candidates[grid_result.chosen_index].params,
            cv_mean_accuracy: grid_result.candidates[grid_result.chosen_index].mean_accuracy,
            test_accuracy: class_report.accuracy,
            majority_baseline: baseline_hits as f64 / test.n_rows() as f64,
            train_rows: train.n_rows(),
            test_rows: test.n_rows(),
        };

        let name = family.name();
        let rel = format!("classify/{name}_model.json");
        write_json(out, &rel, &model)?;
        artifacts.push(rel);
        let rel = format!("classify/{name}_grid.json");
        write_json::<GridSearchResult>(out, &rel, &grid_result)?;
        artifacts.push(rel);
        let rel = format!("classify/{name}_confusion.csv");
        write_rel(out, &rel, cm.to_csv().as_bytes())?;
        artifacts.push(rel);
        let rel = format!("classify/{name}_report.json");
        write_json(out, &rel, &class_report)?;
        artifacts.push(rel);
        let rel = format!("classify/{name}_importances.csv");
        let mut importances_csv = String::from("feature,weight\n");
        for (feature, weight) in top_k_importances(&model, 5) {
            importances_csv.push_str(&format!("{feature},{weight}\n"));
        }
        write_rel(out, &rel, importances_csv.as_bytes())?;
        artifacts.push(rel);

        families.insert(family, outcome);
    }

    let summary = ClassifySummary { families };
    write_json(out, "classify/summary.json", &summary)?;
    artifacts.push("classify/summary.json".into());
    Ok((summary, artifacts))
}
