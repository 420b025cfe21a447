//! Two-device classification over feature files.
//!
//! Class 0 is always the device whose id sorts first; ties in nearest-centroid
//! distance resolve to it.

mod centroid;
mod cv;
mod forest;
mod logreg;
mod permutation;
mod preprocess;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use centroid::NearestCentroid;
pub use cv::{
    auc, classification_report_csv, confusion, cross_validate, model_summary_csv,
    run_classification,
    stratified_folds, CVReport, ClassifyParams, CvConfig, FoldResult, ModelKind, ModelReport,
};
pub use forest::{ForestParams, RandomForest};
pub use logreg::{
    class_weights, gradient as logreg_gradient, objective as logreg_objective, LogRegParams,
    LogisticRegression,
};
pub use permutation::{permutation_p_value, permutation_test, PermutationResult};
pub use preprocess::{quantile, Preprocessor, ScalerKind};

use crate::error::{Error, Result};
use crate::features::{FeatureFile, Metric};

/// Per-class score and hard prediction; class 1 is the positive class.
pub trait Classifier: Send + Sync {
    /// Class-1 score in [0, 1].
    fn score(&self, row: &[f64]) -> f64;

    fn predict(&self, row: &[f64]) -> u8 {
        u8::from(self.score(row) > 0.5)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ColumnId {
    pub circuit_id: String,
    pub metric: Metric,
}

impl std::fmt::Display for ColumnId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.circuit_id, self.metric)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    /// One row per session; `None` where the session lacks the circuit.
    pub x: Vec<Vec<Option<f64>>>,
    pub y: Vec<u8>,
    pub column_ids: Vec<ColumnId>,
    /// `device/session` per row.
    pub row_ids: Vec<String>,
    /// Device id of class 0 and class 1.
    pub labels: [String; 2],
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.x.len()
    }

    pub fn n_cols(&self) -> usize {
        self.column_ids.len()
    }

    pub fn missing_count(&self) -> usize {
        self.x.iter().flatten().filter(|v| v.is_none()).count()
    }

    /// Same matrix with labels replaced (used by the permutation test).
    pub fn with_labels(&self, y: Vec<u8>) -> Self {
        FeatureMatrix { y, ..self.clone() }
    }
}

fn device_of(files: &[FeatureFile]) -> Result<String> {
    let ids: BTreeSet<&str> = files.iter().map(|f| f.device_id.as_str()).collect();
    match ids.len() {
        0 => Err(Error::InsufficientData("empty feature-file set".into())),
        1 => Ok(ids.into_iter().next().unwrap().to_string()),
        _ => Err(Error::InvalidArgument(format!(
            "feature-file set mixes devices: {ids:?}"
        ))),
    }
}

/// Builds the session × (circuit, metric) matrix over circuits present in at
/// least `min_presence` of each device's sessions.
pub fn assemble_matrix(
    files_a: &[FeatureFile],
    files_b: &[FeatureFile],
    metrics: &[Metric],
    min_presence: f64,
) -> Result<FeatureMatrix> {
    if metrics.is_empty() {
        return Err(Error::InvalidArgument("no metrics selected".into()));
    }
    if !(0.0..=1.0).contains(&min_presence) {
        return Err(Error::InvalidArgument(format!(
            "min_presence {min_presence} outside [0, 1]"
        )));
    }
    let (mut dev_a, mut dev_b) = (device_of(files_a)?, device_of(files_b)?);
    let (mut files_a, mut files_b) = (files_a, files_b);
    if dev_a == dev_b {
        return Err(Error::InvalidArgument(format!(
            "both file sets belong to device `{dev_a}`"
        )));
    }
    if dev_b < dev_a {
        std::mem::swap(&mut dev_a, &mut dev_b);
        std::mem::swap(&mut files_a, &mut files_b);
    }

    fn presence(files: &[FeatureFile]) -> BTreeMap<&str, usize> {
        let mut n: BTreeMap<&str, usize> = BTreeMap::new();
        for f in files {
            for c in f.features.keys() {
                *n.entry(c.as_str()).or_default() += 1;
            }
        }
        n
    }
    let (pa, pb) = (presence(files_a), presence(files_b));
    let enough = |count: usize, total: usize| count as f64 >= min_presence * total as f64 - 1e-9;
    let circuits: Vec<&str> = pa
        .iter()
        .filter(|(c, &n)| enough(n, files_a.len()) && enough(pb.get(*c).copied().unwrap_or(0), files_b.len()))
        .map(|(c, _)| *c)
        .collect();
    if circuits.is_empty() {
        return Err(Error::InsufficientData(
            "no circuit passes the presence filter for both devices".into(),
        ));
    }

    let column_ids: Vec<ColumnId> = circuits
        .iter()
        .flat_map(|c| {
            metrics.iter().map(move |&m| ColumnId {
                circuit_id: c.to_string(),
                metric: m,
            })
        })
        .collect();

    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut row_ids = Vec::new();
    for (label, files) in [(0u8, files_a), (1u8, files_b)] {
        for f in files {
            x.push(
                column_ids
                    .iter()
                    .map(|col| f.features.get(&col.circuit_id).map(|fv| fv.get(col.metric)))
                    .collect(),
            );
            y.push(label);
            row_ids.push(format!("{}/{}", f.device_id, f.session_id));
        }
    }
    Ok(FeatureMatrix {
        x,
        y,
        column_ids,
        row_ids,
        labels: [dev_a, dev_b],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{fingerprint, FeatureVector, ProbDist};

    fn fv(p: f64) -> FeatureVector {
        let d = ProbDist::new([("0".to_string(), p), ("1".to_string(), 1.0 - p)].into(), 1).unwrap();
        fingerprint(&d)
    }

    fn file(device: &str, session: usize, circuits: &[&str]) -> FeatureFile {
        FeatureFile {
            device_id: device.into(),
            session_id: format!("s{session:03}"),
            timestamp_utc: "2025-01-01T00:00:00Z".into(),
            features: circuits
                .iter()
                .map(|c| (c.to_string(), fv(0.3 + 0.01 * session as f64)))
                .collect(),
        }
    }

    #[test]
    fn default_classify_metrics() {
        let names: Vec<&str> = Metric::CLASSIFY_DEFAULT.iter().map(|m| m.name()).collect();
        assert_eq!(names, ["p0", "entropy", "js_uniform", "gini", "parity_bias"]);
    }

    #[test]
    fn dimensions() {
        let ids = crate::circuits::SUITE_IDS;
        let a: Vec<_> = (0..25).map(|i| file("dev_a", i, &ids)).collect();
        let b: Vec<_> = (0..25).map(|i| file("dev_b", i, &ids)).collect();
        let m = assemble_matrix(&a, &b, &Metric::CLASSIFY_DEFAULT, 1.0).unwrap();
        assert_eq!((m.n_rows(), m.n_cols()), (50, 60));
        assert_eq!(m.y.iter().filter(|&&v| v == 1).count(), 25);
        assert_eq!(m.missing_count(), 0);
    }

    #[test]
    fn presence_filter() {
        let mut a: Vec<_> = (0..4).map(|i| file("dev_a", i, &["pm", "ramsey"])).collect();
        let b: Vec<_> = (0..4).map(|i| file("dev_b", i, &["pm", "ramsey"])).collect();
        a[2].features.remove("ramsey");
        let strict = assemble_matrix(&a, &b, &[Metric::Entropy], 1.0).unwrap();
        assert_eq!(strict.column_ids.len(), 1);
        assert_eq!(strict.column_ids[0].circuit_id, "pm");
        let loose = assemble_matrix(&a, &b, &[Metric::Entropy], 0.75).unwrap();
        assert_eq!(loose.n_cols(), 2);
        assert_eq!(loose.missing_count(), 1);
    }

    #[test]
    fn label_order_is_lexicographic() {
        let a: Vec<_> = (0..2).map(|i| file("zeta", i, &["pm"])).collect();
        let b: Vec<_> = (0..2).map(|i| file("alpha", i, &["pm"])).collect();
        let m = assemble_matrix(&a, &b, &[Metric::P0], 1.0).unwrap();
        assert_eq!(m.labels, ["alpha".to_string(), "zeta".to_string()]);
        assert!(m.row_ids[0].starts_with("alpha/"));
    }

    #[test]
    fn empty_shared_set_is_error() {
        let a = vec![file("a", 0, &["pm"])];
        let b = vec![file("b", 0, &["ramsey"])];
        assert!(assemble_matrix(&a, &b, &[Metric::P0], 1.0).is_err());
        assert!(assemble_matrix(&[], &b, &[Metric::P0], 1.0).is_err());
    }
}
