use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::Classifier;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 200,
            max_depth: 6,
            min_leaf: 2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    fn predict(&self, row: &[f64]) -> f64 {
        match self {
            Node::Leaf(p) => *p,
            Node::Split { feature, threshold, left, right } => {
                if row[*feature] <= *threshold {
                    left.predict(row)
                } else {
                    right.predict(row)
                }
            }
        }
    }
}

fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

struct TreeBuilder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [u8],
    max_depth: usize,
    min_leaf: usize,
    mtry: usize,
}

impl TreeBuilder<'_> {
    fn build(&self, idx: &mut [usize], depth: usize, rng: &mut ChaCha8Rng) -> Node {
        let n = idx.len();
        let pos = idx.iter().filter(|&&i| self.y[i] == 1).count();
        let leaf = Node::Leaf(pos as f64 / n as f64);
        if depth >= self.max_depth || n < 2 * self.min_leaf || pos == 0 || pos == n {
            return leaf;
        }

        let d = self.x[0].len();
        let parent = gini(pos, n);
        let mut best: Option<(f64, usize, f64)> = None;
        for feature in sample(rng, d, self.mtry.min(d)).into_iter() {
            idx.sort_by(|&a, &b| self.x[a][feature].total_cmp(&self.x[b][feature]));
            let mut left_pos = 0;
            for split in 1..n {
                left_pos += usize::from(self.y[idx[split - 1]] == 1);
                let (lo, hi) = (self.x[idx[split - 1]][feature], self.x[idx[split]][feature]);
                if split < self.min_leaf || n - split < self.min_leaf || lo == hi {
                    continue;
                }
                let right_pos = pos - left_pos;
                let impurity = (split as f64 * gini(left_pos, split)
                    + (n - split) as f64 * gini(right_pos, n - split))
                    / n as f64;
                if impurity < parent - 1e-12 && best.is_none_or(|(b, _, _)| impurity < b) {
                    best = Some((impurity, feature, 0.5 * (lo + hi)));
                }
            }
        }
        let Some((_, feature, threshold)) = best else {
            return leaf;
        };
        idx.sort_by(|&a, &b| self.x[a][feature].total_cmp(&self.x[b][feature]));
        let cut = idx.partition_point(|&i| self.x[i][feature] <= threshold);
        let (l, r) = idx.split_at_mut(cut);
        Node::Split {
            feature,
            threshold,
            left: Box::new(self.build(l, depth + 1, rng)),
            right: Box::new(self.build(r, depth + 1, rng)),
        }
    }
}

/// Bagged Gini trees; the score is the mean leaf class-1 frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    trees: Vec<Node>,
}

impl RandomForest {
    pub fn fit(x: &[Vec<f64>], y: &[u8], params: &ForestParams) -> Result<Self> {
        if params.n_trees == 0 || params.min_leaf == 0 {
            return Err(Error::InvalidArgument("n_trees and min_leaf must be >= 1".into()));
        }
        if x.len() != y.len() || x.len() < 2 * params.min_leaf {
            return Err(Error::InsufficientData(format!(
                "random forest needs at least {} samples",
                2 * params.min_leaf
            )));
        }
        let d = x[0].len();
        let builder = TreeBuilder {
            x,
            y,
            max_depth: params.max_depth,
            min_leaf: params.min_leaf,
            mtry: (d as f64).sqrt().ceil() as usize,
        };
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
                rng.set_stream(t as u64);
                let mut idx: Vec<usize> = (0..x.len()).map(|_| rng.gen_range(0..x.len())).collect();
                builder.build(&mut idx, 0, &mut rng)
            })
            .collect();
        Ok(RandomForest { trees })
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }
}

impl Classifier for RandomForest {
    fn score(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / self.trees.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs() -> (Vec<Vec<f64>>, Vec<u8>) {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 + if i >= 10 { 5.0 } else { 0.0 }, 0.0]).collect();
        let y = (0..20).map(|i| u8::from(i >= 10)).collect();
        (x, y)
    }

    #[test]
    fn stump_on_separable_data() {
        let (x, y) = blobs();
        let p = ForestParams { n_trees: 1, max_depth: 1, ..Default::default() };
        let f = RandomForest::fit(&x, &y, &p).unwrap();
        let acc = x.iter().zip(&y).filter(|(r, &c)| f.predict(r) == c).count() as f64 / 20.0;
        assert!(acc >= 0.5);
    }

    #[test]
    fn deterministic_given_seed() {
        let (x, y) = blobs();
        let p = ForestParams { n_trees: 25, seed: 7, ..Default::default() };
        let a = RandomForest::fit(&x, &y, &p).unwrap();
        let b = RandomForest::fit(&x, &y, &p).unwrap();
        assert_eq!(a, b);
        let scores: Vec<f64> = x.iter().map(|r| a.score(r)).collect();
        assert!(scores.iter().all(|s| (0.0..=1.0).contains(s)));
    }

    #[test]
    fn single_class_bootstrap_is_leaf() {
        let x = vec![vec![1.0], vec![2.0], vec![3.0], vec![4.0]];
        let f = RandomForest::fit(&x, &[1, 1, 1, 1], &ForestParams::default()).unwrap();
        assert_eq!(f.score(&[0.0]), 1.0);
    }

    #[test]
    fn too_few_samples() {
        assert!(RandomForest::fit(&[vec![1.0]], &[0], &ForestParams::default()).is_err());
    }
}
