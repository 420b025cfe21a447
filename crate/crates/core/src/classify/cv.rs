use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureFile, Metric};

use super::permutation::{permutation_test, PermutationResult};
use super::{
    assemble_matrix, Classifier, FeatureMatrix, ForestParams, LogRegParams, LogisticRegression,
    NearestCentroid, Preprocessor, RandomForest, ScalerKind,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    NearestCentroid,
    LogisticRegression(LogRegParams),
    RandomForest(ForestParams),
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::NearestCentroid => "nearest_centroid_l1",
            ModelKind::LogisticRegression(_) => "logistic_regression_l2",
            ModelKind::RandomForest(_) => "random_forest",
        }
    }

    pub fn scaler(&self) -> ScalerKind {
        match self {
            ModelKind::NearestCentroid => ScalerKind::Robust,
            ModelKind::LogisticRegression(_) => ScalerKind::Standard,
            ModelKind::RandomForest(_) => ScalerKind::None,
        }
    }

    /// Fits on preprocessed rows; the second value carries fit warnings.
    pub fn fit(&self, x: &[Vec<f64>], y: &[u8]) -> Result<(Box<dyn Classifier>, Option<String>)> {
        Ok(match self {
            ModelKind::NearestCentroid => (Box::new(NearestCentroid::fit(x, y)?), None),
            ModelKind::LogisticRegression(p) => {
                let m = LogisticRegression::fit(x, y, p)?;
                let warn = (!m.converged)
                    .then(|| format!("did not converge in {} iterations", m.iterations));
                (Box::new(m), warn)
            }
            ModelKind::RandomForest(p) => (Box::new(RandomForest::fit(x, y, p)?), None),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub folds: usize,
    /// Pick the decision threshold on the test fold's own scores. Optimistic.
    pub opt_threshold: bool,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            folds: 6,
            opt_threshold: false,
            seed: 0,
        }
    }
}

/// Fold index per sample: seeded shuffle within each class, then round-robin.
pub fn stratified_folds(y: &[u8], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidArgument("need at least 2 folds".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0; y.len()];
    for class in [0u8, 1] {
        let mut members: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        if members.len() < k {
            return Err(Error::InsufficientData(format!(
                "class {class} has {} samples, fewer than {k} folds",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for (pos, i) in members.into_iter().enumerate() {
            fold[i] = pos % k;
        }
    }
    Ok(fold)
}

/// Area under the ROC curve by the trapezoid rule; score ties count half.
/// NaN when either class is absent.
pub fn auc(scores: &[f64], y: &[u8]) -> f64 {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let pos = y.iter().filter(|&&c| c == 1).count() as f64;
    let neg = y.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return f64::NAN;
    }
    let (mut tp, mut fp, mut area) = (0.0, 0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let (tp0, fp0) = (tp, fp);
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if y[order[i]] == 1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        area += (fp - fp0) / neg * (tp + tp0) / (2.0 * pos);
    }
    area
}

/// `[[tn, fp], [fn, tp]]`; rows are the true class.
pub fn confusion(y_true: &[u8], y_pred: &[u8]) -> [[u64; 2]; 2] {
    let mut cm = [[0u64; 2]; 2];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        cm[t as usize][p as usize] += 1;
    }
    cm
}

fn macro_prf(cm: &[[u64; 2]; 2]) -> (f64, f64, f64) {
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let mut sums = (0.0, 0.0, 0.0);
    for c in 0..2 {
        let tp = cm[c][c];
        let precision = ratio(tp, cm[0][c] + cm[1][c]);
        let recall = ratio(tp, cm[c][0] + cm[c][1]);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        sums.0 += precision / 2.0;
        sums.1 += recall / 2.0;
        sums.2 += f1 / 2.0;
    }
    sums
}

/// Threshold maximizing accuracy of `score >= t`; the first best candidate in
/// ascending order wins.
fn best_threshold(scores: &[f64], y: &[u8]) -> f64 {
    let mut candidates: Vec<f64> = scores.to_vec();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    candidates.push(f64::INFINITY);
    let mut best = (usize::MAX, 0.0);
    for t in candidates {
        let correct = scores.iter().zip(y).filter(|(&s, &c)| u8::from(s >= t) == c).count();
        if best.0 == usize::MAX || correct > best.0 {
            best = (correct, t);
        }
    }
    best.1
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub accuracy: f64,
    pub auc: f64,
    pub precision_macro: f64,
    pub recall_macro: f64,
    pub f1_macro: f64,
    pub confusion: [[u64; 2]; 2],
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub model: String,
    pub folds: usize,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub auc_mean: f64,
    pub auc_std: f64,
    pub precision_macro: f64,
    pub recall_macro: f64,
    pub f1_macro: f64,
    pub threshold_optimized: bool,
    pub fold_results: Vec<FoldResult>,
    pub warnings: Vec<String>,
}

pub fn cross_validate(kind: &ModelKind, m: &FeatureMatrix, cfg: &CvConfig) -> Result<ModelReport> {
    let assignment = stratified_folds(&m.y, cfg.folds, cfg.seed)?;
    let per_fold: Vec<Result<(FoldResult, Vec<String>)>> = (0..cfg.folds)
        .into_par_iter()
        .map(|f| {
            let (train, test): (Vec<usize>, Vec<usize>) =
                (0..m.n_rows()).partition(|&i| assignment[i] != f);
            let rows = |idx: &[usize]| idx.iter().map(|&i| m.x[i].as_slice()).collect::<Vec<_>>();
            let labels = |idx: &[usize]| idx.iter().map(|&i| m.y[i]).collect::<Vec<u8>>();
            let pre = Preprocessor::fit(&rows(&train), kind.scaler())?;
            let (y_train, y_test) = (labels(&train), labels(&test));
            let (model, warn) = kind.fit(&pre.transform_all(&rows(&train)), &y_train)?;
            let x_test = pre.transform_all(&rows(&test));
            let scores: Vec<f64> = x_test.iter().map(|r| model.score(r)).collect();
            let (pred, threshold): (Vec<u8>, f64) = if cfg.opt_threshold {
                let t = best_threshold(&scores, &y_test);
                (scores.iter().map(|&s| u8::from(s >= t)).collect(), t)
            } else {
                (x_test.iter().map(|r| model.predict(r)).collect(), 0.5)
            };
            let cm = confusion(&y_test, &pred);
            let (precision_macro, recall_macro, f1_macro) = macro_prf(&cm);
            let mut warnings = Vec::new();
            if let Some(w) = warn {
                warnings.push(format!("fold {f}: {w}"));
            }
            if !pre.dropped.is_empty() {
                warnings.push(format!(
                    "fold {f}: dropped all-missing columns {:?}",
                    pre.dropped.iter().map(|&j| m.column_ids[j].to_string()).collect::<Vec<_>>()
                ));
            }
            Ok((
                FoldResult {
                    fold: f,
                    n_train: train.len(),
                    n_test: test.len(),
                    accuracy: (cm[0][0] + cm[1][1]) as f64 / test.len() as f64,
                    auc: auc(&scores, &y_test),
                    precision_macro,
                    recall_macro,
                    f1_macro,
                    confusion: cm,
                    threshold,
                },
                warnings,
            ))
        })
        .collect();

    let mut fold_results = Vec::with_capacity(cfg.folds);
    let mut warnings = Vec::new();
    for r in per_fold {
        let (fr, w) = r?;
        fold_results.push(fr);
        warnings.extend(w);
    }
    let col = |get: fn(&FoldResult) -> f64| fold_results.iter().map(get).collect::<Vec<f64>>();
    let (accuracy_mean, accuracy_std) = mean_std(&col(|f| f.accuracy));
    let (auc_mean, auc_std) = mean_std(&col(|f| f.auc));
    Ok(ModelReport {
        model: kind.name().to_string(),
        folds: cfg.folds,
        accuracy_mean,
        accuracy_std,
        auc_mean,
        auc_std,
        precision_macro: mean_std(&col(|f| f.precision_macro)).0,
        recall_macro: mean_std(&col(|f| f.recall_macro)).0,
        f1_macro: mean_std(&col(|f| f.f1_macro)).0,
        threshold_optimized: cfg.opt_threshold,
        fold_results,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyParams {
    pub metrics: Vec<Metric>,
    pub min_presence: f64,
    pub cv: CvConfig,
    pub n_perm: usize,
    pub logreg: LogRegParams,
    pub forest: ForestParams,
}

impl Default for ClassifyParams {
    fn default() -> Self {
        ClassifyParams {
            metrics: Metric::CLASSIFY_DEFAULT.to_vec(),
            min_presence: 1.0,
            cv: CvConfig::default(),
            n_perm: 999,
            logreg: LogRegParams::default(),
            forest: ForestParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CVReport {
    /// Device ids of class 0 and class 1.
    pub labels: [String; 2],
    pub n_sessions: [usize; 2],
    pub columns: Vec<String>,
    pub params: ClassifyParams,
    pub threshold_note: Option<String>,
    pub models: Vec<ModelReport>,
    /// Nearest-centroid permutation test.
    pub permutation: PermutationResult,
}

impl CVReport {
    pub fn model(&self, name: &str) -> Option<&ModelReport> {
        self.models.iter().find(|m| m.model == name)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// All three models under the same folds, plus the nearest-centroid permutation test.
pub fn run_classification(
    files_a: &[FeatureFile],
    files_b: &[FeatureFile],
    params: &ClassifyParams,
) -> Result<CVReport> {
    let m = assemble_matrix(files_a, files_b, &params.metrics, params.min_presence)?;
    let kinds = [
        ModelKind::NearestCentroid,
        ModelKind::LogisticRegression(params.logreg),
        ModelKind::RandomForest(params.forest),
    ];
    let models = kinds
        .iter()
        .map(|k| cross_validate(k, &m, &params.cv))
        .collect::<Result<Vec<_>>>()?;
    let permutation = permutation_test(&m, params.n_perm, &params.cv, params.cv.seed)?;
    let n1 = m.y.iter().filter(|&&c| c == 1).count();
    Ok(CVReport {
        labels: m.labels.clone(),
        n_sessions: [m.n_rows() - n1, n1],
        columns: m.column_ids.iter().map(ToString::to_string).collect(),
        params: params.clone(),
        threshold_note: params
            .cv
            .opt_threshold
            .then(|| "thresholds chosen on test-fold scores; metrics are optimistic".to_string()),
        models,
        permutation,
    })
}

/// One row per (model, fold).
pub fn classification_report_csv(report: &CVReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "model", "fold", "n_train", "n_test", "accuracy", "auc", "precision_macro",
        "recall_macro", "f1_macro", "tn", "fp", "fn", "tp", "threshold",
    ])
    .expect("in-memory write");
    for m in &report.models {
        for f in &m.fold_results {
            w.write_record([
                m.model.clone(),
                f.fold.to_string(),
                f.n_train.to_string(),
                f.n_test.to_string(),
                f.accuracy.to_string(),
                f.auc.to_string(),
                f.precision_macro.to_string(),
                f.recall_macro.to_string(),
                f.f1_macro.to_string(),
                f.confusion[0][0].to_string(),
                f.confusion[0][1].to_string(),
                f.confusion[1][0].to_string(),
                f.confusion[1][1].to_string(),
                f.threshold.to_string(),
            ])
            .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

/// One row per model; the permutation p-value is filled for nearest centroid only.
pub fn model_summary_csv(report: &CVReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "model", "scaler", "accuracy_mean", "accuracy_std", "auc_mean", "auc_std",
        "precision_macro", "recall_macro", "f1_macro", "perm_p_value",
    ])
    .expect("in-memory write");
    let nc = ModelKind::NearestCentroid.name();
    for m in &report.models {
        let scaler = [
            ModelKind::NearestCentroid,
            ModelKind::LogisticRegression(report.params.logreg),
            ModelKind::RandomForest(report.params.forest),
        ]
        .into_iter()
        .find(|k| k.name() == m.model)
        .map(|k| k.scaler().name())
        .unwrap_or_default();
        w.write_record([
            m.model.clone(),
            scaler.to_string(),
            m.accuracy_mean.to_string(),
            m.accuracy_std.to_string(),
            m.auc_mean.to_string(),
            m.auc_std.to_string(),
            m.precision_macro.to_string(),
            m.recall_macro.to_string(),
            m.f1_macro.to_string(),
            if m.model == nc { report.permutation.p_value.to_string() } else { String::new() },
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}
