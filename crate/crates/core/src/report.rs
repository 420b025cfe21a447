//! Plot-ready tables over a device's session history.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{
    aggregate, correlation_matrix, drift_index, session_distance_matrix, Aggregation,
    CorrelationMatrix, DistanceMatrix, DriftReport, FeatureFile, Metric,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftStep {
    pub device_id: String,
    /// Index of the later session in the series.
    pub step: usize,
    pub from_session: String,
    pub to_session: String,
    pub drift: DriftReport,
}

/// Drift between each consecutive pair of sessions, in the given order.
pub fn drift_series(files: &[FeatureFile], metric: Metric) -> Result<Vec<DriftStep>> {
    if files.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "drift needs at least 2 sessions, got {}",
            files.len()
        )));
    }
    files
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            Ok(DriftStep {
                device_id: w[1].device_id.clone(),
                step: i + 1,
                from_session: w[0].session_id.clone(),
                to_session: w[1].session_id.clone(),
                drift: drift_index(&w[1].features, &w[0].features, metric)?,
            })
        })
        .collect()
}

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

pub fn drift_totals_csv(steps: &[DriftStep]) -> String {
    csv_string(
        &["device_id", "step", "from_session", "to_session", "metric", "total"],
        steps.iter().map(|s| {
            vec![
                s.device_id.clone(),
                s.step.to_string(),
                s.from_session.clone(),
                s.to_session.clone(),
                s.drift.metric.clone(),
                s.drift.total.to_string(),
            ]
        }),
    )
}

/// One row per shared circuit per session pair.
pub fn delta_table_csv(steps: &[DriftStep]) -> String {
    csv_string(
        &["device_id", "step", "from_session", "to_session", "circuit_id", "metric", "delta"],
        steps.iter().flat_map(|s| {
            s.drift.per_circuit_delta.iter().map(move |(c, d)| {
                vec![
                    s.device_id.clone(),
                    s.step.to_string(),
                    s.from_session.clone(),
                    s.to_session.clone(),
                    c.clone(),
                    s.drift.metric.clone(),
                    d.to_string(),
                ]
            })
        }),
    )
}

/// Long-format per-run values of `metric` for every circuit.
pub fn series_csv(files: &[FeatureFile], metric: Metric) -> String {
    csv_string(
        &["device_id", "run", "session_id", "timestamp_utc", "circuit_id", "metric", "value"],
        files.iter().enumerate().flat_map(|(run, f)| {
            f.features.iter().map(move |(c, fv)| {
                vec![
                    f.device_id.clone(),
                    run.to_string(),
                    f.session_id.clone(),
                    f.timestamp_utc.clone(),
                    c.clone(),
                    metric.name().to_string(),
                    fv.get(metric).to_string(),
                ]
            })
        }),
    )
}

/// Per-run mean and median of `metric` across circuits.
pub fn aggregate_csv(files: &[FeatureFile], metric: Metric) -> String {
    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    csv_string(
        &["device_id", "run", "session_id", "metric", "mean", "median"],
        files.iter().enumerate().map(|(run, f)| {
            vec![
                f.device_id.clone(),
                run.to_string(),
                f.session_id.clone(),
                metric.name().to_string(),
                fmt(aggregate(&f.features, metric, Aggregation::Mean)),
                fmt(aggregate(&f.features, metric, Aggregation::Median)),
            ]
        }),
    )
}

pub fn distance_matrix_csv(dm: &DistanceMatrix) -> String {
    let mut header = vec!["session"];
    header.extend(dm.sessions.iter().map(String::as_str));
    csv_string(
        &header,
        dm.sessions.iter().zip(&dm.d).map(|(s, row)| {
            std::iter::once(s.clone())
                .chain(row.iter().map(|v| v.to_string()))
                .collect()
        }),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceReport {
    pub device_id: String,
    pub metric: String,
    pub sessions: Vec<String>,
    pub drift: Vec<DriftStep>,
    pub drift_total: f64,
    pub distance: DistanceMatrix,
    /// Pearson correlation of all fingerprint fields over every (session, circuit).
    pub correlation: CorrelationMatrix,
}

pub fn device_report(files: &[FeatureFile], metric: Metric) -> Result<DeviceReport> {
    let drift = drift_series(files, metric)?;
    let labelled: Vec<(String, _)> = files
        .iter()
        .map(|f| (f.session_id.clone(), f.features.clone()))
        .collect();
    let rows: Vec<_> = files.iter().flat_map(|f| f.features.values().cloned()).collect();
    Ok(DeviceReport {
        device_id: files[0].device_id.clone(),
        metric: metric.name().to_string(),
        sessions: files.iter().map(|f| f.session_id.clone()).collect(),
        drift_total: drift.iter().map(|s| s.drift.total).sum(),
        drift,
        distance: session_distance_matrix(&labelled, metric)?,
        correlation: correlation_matrix(&rows, &Metric::ALL)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{fingerprint, ProbDist};

    fn file(session: &str, p: f64) -> FeatureFile {
        let d = |p: f64| {
            fingerprint(&ProbDist::new([("0".into(), p), ("1".into(), 1.0 - p)].into(), 1).unwrap())
        };
        FeatureFile {
            device_id: "dev".into(),
            session_id: session.into(),
            timestamp_utc: "2025-01-01T00:00:00Z".into(),
            features: [("pm".to_string(), d(p)), ("ramsey".to_string(), d(p / 2.0))].into(),
        }
    }

    #[test]
    fn duplicated_sessions_have_zero_drift() {
        let files = vec![file("a", 0.3), file("b", 0.3), file("c", 0.3)];
        let steps = drift_series(&files, Metric::Entropy).unwrap();
        assert!(steps.iter().all(|s| s.drift.total == 0.0));
        let csv = drift_totals_csv(&steps);
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().skip(1).all(|l| l.ends_with(",0")));
    }

    #[test]
    fn row_counts() {
        let files: Vec<_> = (0..25).map(|i| file(&format!("s{i:02}"), 0.2 + 0.01 * i as f64)).collect();
        let steps = drift_series(&files, Metric::Entropy).unwrap();
        assert_eq!(steps.len(), 24);
        assert_eq!(drift_totals_csv(&steps).lines().count(), 25);
        // two shared circuits per pair
        assert_eq!(delta_table_csv(&steps).lines().count(), 1 + 24 * 2);
        let r = device_report(&files, Metric::Entropy).unwrap();
        assert_eq!(r.distance.d.len(), 25);
        assert!((r.drift_total - steps.iter().map(|s| s.drift.total).sum::<f64>()).abs() < 1e-15);
        assert_eq!(distance_matrix_csv(&r.distance).lines().count(), 26);
    }

    #[test]
    fn single_session_is_insufficient() {
        assert!(drift_series(&[file("a", 0.3)], Metric::Entropy).is_err());
    }
}
