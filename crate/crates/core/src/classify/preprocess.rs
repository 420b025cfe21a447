use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::median;

pub const SCALE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalerKind {
    Robust,
    Standard,
    None,
}

impl ScalerKind {
    pub fn name(self) -> &'static str {
        match self {
            ScalerKind::Robust => "robust",
            ScalerKind::Standard => "standard",
            ScalerKind::None => "none",
        }
    }
}

impl FromStr for ScalerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "robust" => Ok(ScalerKind::Robust),
            "standard" => Ok(ScalerKind::Standard),
            "none" => Ok(ScalerKind::None),
            other => Err(Error::InvalidArgument(format!("unknown scaler `{other}`"))),
        }
    }
}

/// Linear-interpolation quantile of sorted data (numpy's default rule).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Median imputer followed by an optional scaler, fitted on training rows only.
#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessor {
    pub kind: ScalerKind,
    /// Input columns kept (all-missing training columns are dropped).
    pub kept: Vec<usize>,
    pub dropped: Vec<usize>,
    pub fill: Vec<f64>,
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Preprocessor {
    pub fn fit(rows: &[&[Option<f64>]], kind: ScalerKind) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::InsufficientData("no training rows".into()));
        };
        let d = first.len();
        let mut pre = Preprocessor {
            kind,
            kept: Vec::new(),
            dropped: Vec::new(),
            fill: Vec::new(),
            center: Vec::new(),
            scale: Vec::new(),
        };
        for j in 0..d {
            let present: Vec<f64> = rows.iter().filter_map(|r| r[j]).collect();
            let Some(fill) = median(&present) else {
                pre.dropped.push(j);
                continue;
            };
            let mut col: Vec<f64> = rows.iter().map(|r| r[j].unwrap_or(fill)).collect();
            let (center, scale) = match kind {
                ScalerKind::None => (0.0, 1.0),
                ScalerKind::Robust => {
                    col.sort_by(f64::total_cmp);
                    let iqr = quantile(&col, 0.75) - quantile(&col, 0.25);
                    (quantile(&col, 0.5), iqr.max(SCALE_FLOOR))
                }
                ScalerKind::Standard => {
                    let n = col.len() as f64;
                    let mean = col.iter().sum::<f64>() / n;
                    let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                    (mean, var.sqrt().max(SCALE_FLOOR))
                }
            };
            pre.kept.push(j);
            pre.fill.push(fill);
            pre.center.push(center);
            pre.scale.push(scale);
        }
        if pre.kept.is_empty() {
            return Err(Error::InsufficientData("every column is missing in training rows".into()));
        }
        Ok(pre)
    }

    pub fn transform(&self, row: &[Option<f64>]) -> Vec<f64> {
        self.kept
            .iter()
            .enumerate()
            .map(|(k, &j)| (row[j].unwrap_or(self.fill[k]) - self.center[k]) / self.scale[k])
            .collect()
    }

    pub fn transform_all(&self, rows: &[&[Option<f64>]]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| self.transform(r)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(values: &[Option<f64>]) -> Vec<Vec<Option<f64>>> {
        values.iter().map(|v| vec![*v]).collect()
    }

    fn refs(rows: &[Vec<Option<f64>>]) -> Vec<&[Option<f64>]> {
        rows.iter().map(Vec::as_slice).collect()
    }

    #[test]
    fn median_imputation() {
        let rows = col(&[Some(1.0), Some(2.0), Some(3.0), None]);
        let p = Preprocessor::fit(&refs(&rows), ScalerKind::None).unwrap();
        assert_eq!(p.transform(&[None]), vec![2.0]);
    }

    #[test]
    fn constant_column_robust_is_zero() {
        let rows = col(&[Some(4.0); 5]);
        let p = Preprocessor::fit(&refs(&rows), ScalerKind::Robust).unwrap();
        assert!(p.transform_all(&refs(&rows)).iter().all(|r| r[0] == 0.0));
    }

    #[test]
    fn standard_scaling_moments() {
        let rows = col(&[Some(1.0), Some(5.0), Some(2.5), Some(-3.0), Some(7.25)]);
        let p = Preprocessor::fit(&refs(&rows), ScalerKind::Standard).unwrap();
        let z: Vec<f64> = p.transform_all(&refs(&rows)).iter().map(|r| r[0]).collect();
        let mean = z.iter().sum::<f64>() / z.len() as f64;
        let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / z.len() as f64;
        assert!(mean.abs() < 1e-9);
        assert!((var.sqrt() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn robust_uses_linear_quantiles() {
        // numpy: percentile([1,2,3,4], [25,50,75]) = 1.75, 2.5, 3.25
        let rows = col(&[Some(4.0), Some(1.0), Some(3.0), Some(2.0)]);
        let p = Preprocessor::fit(&refs(&rows), ScalerKind::Robust).unwrap();
        assert_eq!(p.center, vec![2.5]);
        assert!((p.scale[0] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn all_missing_column_dropped() {
        let rows = vec![vec![Some(1.0), None], vec![Some(2.0), None]];
        let p = Preprocessor::fit(&refs(&rows), ScalerKind::Standard).unwrap();
        assert_eq!(p.dropped, vec![1]);
        assert_eq!(p.transform(&[Some(1.5), Some(9.0)]).len(), 1);
    }
}
