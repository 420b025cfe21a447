use crate::error::{Error, Result};
use crate::features::median;

use super::Classifier;

/// Per-class median centroid, L1 distance.
#[derive(Debug, Clone, PartialEq)]
pub struct NearestCentroid {
    pub centroids: [Vec<f64>; 2],
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

impl NearestCentroid {
    pub fn fit(x: &[Vec<f64>], y: &[u8]) -> Result<Self> {
        let centroid = |class: u8| -> Result<Vec<f64>> {
            let rows: Vec<&Vec<f64>> = x.iter().zip(y).filter(|(_, &c)| c == class).map(|(r, _)| r).collect();
            if rows.is_empty() {
                return Err(Error::InsufficientData(format!(
                    "nearest centroid needs class {class} in the training set"
                )));
            }
            let d = rows[0].len();
            Ok((0..d)
                .map(|j| median(&rows.iter().map(|r| r[j]).collect::<Vec<_>>()).unwrap())
                .collect())
        };
        Ok(NearestCentroid {
            centroids: [centroid(0)?, centroid(1)?],
        })
    }

    pub fn distances(&self, row: &[f64]) -> (f64, f64) {
        (l1(row, &self.centroids[0]), l1(row, &self.centroids[1]))
    }
}

impl Classifier for NearestCentroid {
    /// `d0 / (d0 + d1)`: above 0.5 exactly when class 1 is strictly nearer.
    fn score(&self, row: &[f64]) -> f64 {
        let (d0, d1) = self.distances(row);
        if d0 + d1 == 0.0 {
            0.5
        } else {
            d0 / (d0 + d1)
        }
    }

    fn predict(&self, row: &[f64]) -> u8 {
        let (d0, d1) = self.distances(row);
        u8::from(d1 < d0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_in_one_dimension() {
        let x = vec![vec![0.0], vec![0.0], vec![0.0], vec![10.0], vec![10.0], vec![10.0]];
        let y = [0, 0, 0, 1, 1, 1];
        let nc = NearestCentroid::fit(&x, &y).unwrap();
        assert_eq!(nc.predict(&[1.0]), 0);
        assert_eq!(nc.predict(&[7.0]), 1);
        // equidistant goes to class 0
        assert_eq!(nc.predict(&[5.0]), 0);
        assert_eq!(nc.score(&[5.0]), 0.5);
    }

    #[test]
    fn median_resists_outlier() {
        let x = vec![vec![0.0], vec![0.0], vec![1000.0], vec![10.0], vec![10.0], vec![10.0]];
        let nc = NearestCentroid::fit(&x, &[0, 0, 0, 1, 1, 1]).unwrap();
        assert_eq!(nc.centroids[0], vec![0.0]);
    }

    #[test]
    fn uniform_rescale_keeps_predictions() {
        let x: Vec<Vec<f64>> = (0..12)
            .map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 1.3).cos() + (i / 6) as f64])
            .collect();
        let y: Vec<u8> = (0..12).map(|i| u8::from(i >= 6)).collect();
        let nc = NearestCentroid::fit(&x, &y).unwrap();
        let scaled: Vec<Vec<f64>> = x.iter().map(|r| r.iter().map(|v| v * 3.5).collect()).collect();
        let nc2 = NearestCentroid::fit(&scaled, &y).unwrap();
        for (a, b) in x.iter().zip(&scaled) {
            assert_eq!(nc.predict(a), nc2.predict(b));
        }
    }

    #[test]
    fn single_class_is_error() {
        assert!(NearestCentroid::fit(&[vec![1.0], vec![2.0]], &[0, 0]).is_err());
    }
}
