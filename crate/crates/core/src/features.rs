//! Statistical fingerprint of measured outcome distributions, plus the
//! cross-session drift, distance and correlation metrics.
//!
//! All logarithms are natural (values in nats). `K` is always the full outcome
//! space `2^n`, so outcomes never observed still count against the uniform
//! reference in TV and JS.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::CountsTable;

#[derive(Debug, Clone, PartialEq)]
pub struct ProbDist {
    p: BTreeMap<String, f64>,
    n_bits: usize,
}

impl ProbDist {
    /// Validates `p` as a distribution over `n_bits`-bit outcomes.
    pub fn new(p: BTreeMap<String, f64>, n_bits: usize) -> Result<Self> {
        if n_bits == 0 || n_bits > 32 {
            return Err(Error::InvalidArgument(format!("unsupported width {n_bits}")));
        }
        let mut total = 0.0;
        for (k, &v) in &p {
            if k.len() != n_bits || !k.bytes().all(|b| b == b'0' || b == b'1') {
                return Err(Error::InvalidArgument(format!("bad outcome key `{k}`")));
            }
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("bad probability {v}")));
            }
            total += v;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "probabilities sum to {total}"
            )));
        }
        Ok(ProbDist { p, n_bits })
    }

    pub fn probabilities(&self) -> &BTreeMap<String, f64> {
        &self.p
    }

    pub fn n_bits(&self) -> usize {
        self.n_bits
    }

    /// Full outcome-space size `2^n`.
    pub fn k(&self) -> f64 {
        (1u64 << self.n_bits) as f64
    }

    pub fn prob(&self, outcome: &str) -> f64 {
        self.p.get(outcome).copied().unwrap_or(0.0)
    }
}

pub fn distribution_from_counts(counts: &CountsTable) -> Result<ProbDist> {
    counts.validate()?;
    let shots = counts.shots as f64;
    let p = counts
        .counts
        .iter()
        .map(|(k, &v)| (k.clone(), v as f64 / shots))
        .collect();
    ProbDist::new(p, counts.n_bits()?)
}

/// Per-circuit fingerprint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureVector {
    pub p0: f64,
    pub p1: f64,
    pub entropy: f64,
    pub entropy_norm: f64,
    pub perplexity: f64,
    pub gini: f64,
    pub parity_bias: f64,
    pub bernoulli_var: f64,
    pub tv_uniform: f64,
    pub kl_uniform: f64,
    pub js_uniform: f64,
    pub support: u64,
}

/// Selectable fingerprint field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    P0,
    P1,
    Entropy,
    EntropyNorm,
    Perplexity,
    Gini,
    ParityBias,
    BernoulliVar,
    TvUniform,
    KlUniform,
    JsUniform,
    Support,
}

impl Metric {
    pub const ALL: [Metric; 12] = [
        Metric::P0,
        Metric::P1,
        Metric::Entropy,
        Metric::EntropyNorm,
        Metric::Perplexity,
        Metric::Gini,
        Metric::ParityBias,
        Metric::BernoulliVar,
        Metric::TvUniform,
        Metric::KlUniform,
        Metric::JsUniform,
        Metric::Support,
    ];

    /// Classification default: p0, entropy, js_uniform, gini, parity_bias.
    pub const CLASSIFY_DEFAULT: [Metric; 5] = [
        Metric::P0,
        Metric::Entropy,
        Metric::JsUniform,
        Metric::Gini,
        Metric::ParityBias,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::P0 => "p0",
            Metric::P1 => "p1",
            Metric::Entropy => "entropy",
            Metric::EntropyNorm => "entropy_norm",
            Metric::Perplexity => "perplexity",
            Metric::Gini => "gini",
            Metric::ParityBias => "parity_bias",
            Metric::BernoulliVar => "bernoulli_var",
            Metric::TvUniform => "tv_uniform",
            Metric::KlUniform => "kl_uniform",
            Metric::JsUniform => "js_uniform",
            Metric::Support => "support",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::UnknownMetric(s.to_string()))
    }
}

impl FeatureVector {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::P0 => self.p0,
            Metric::P1 => self.p1,
            Metric::Entropy => self.entropy,
            Metric::EntropyNorm => self.entropy_norm,
            Metric::Perplexity => self.perplexity,
            Metric::Gini => self.gini,
            Metric::ParityBias => self.parity_bias,
            Metric::BernoulliVar => self.bernoulli_var,
            Metric::TvUniform => self.tv_uniform,
            Metric::KlUniform => self.kl_uniform,
            Metric::JsUniform => self.js_uniform,
            Metric::Support => self.support as f64,
        }
    }

    pub fn all_finite(&self) -> bool {
        Metric::ALL.iter().all(|&m| self.get(m).is_finite())
    }
}

fn xlnx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

pub fn fingerprint(dist: &ProbDist) -> FeatureVector {
    let k = dist.k();
    let zeros = "0".repeat(dist.n_bits);
    let p0 = dist.prob(&zeros);

    let mut entropy = 0.0;
    let mut sum_sq = 0.0;
    let mut even = 0.0;
    let mut support = 0;
    for (outcome, &p) in dist.probabilities() {
        entropy -= xlnx(p);
        sum_sq += p * p;
        if outcome.bytes().filter(|&b| b == b'1').count() % 2 == 0 {
            even += p;
        }
        if p > 0.0 {
            support += 1;
        }
    }
    // guard against -0.0 and sub-ulp negatives from rounding
    let entropy = entropy.max(0.0);
    let (tv, kl, js) = divergences(dist);

    FeatureVector {
        p0,
        p1: 1.0 - p0,
        entropy,
        entropy_norm: entropy / k.ln(),
        perplexity: entropy.exp(),
        gini: 1.0 - sum_sq,
        parity_bias: 2.0 * even - 1.0,
        bernoulli_var: p0 * (1.0 - p0),
        tv_uniform: tv,
        kl_uniform: kl,
        js_uniform: js,
        support,
    }
}

/// `(TV, KL, JS)` of `dist` against the uniform distribution over all `K` outcomes.
pub fn divergences(dist: &ProbDist) -> (f64, f64, f64) {
    let k = dist.k();
    let u = 1.0 / k;
    let present = dist.probabilities().len() as f64;
    let absent = k - present;

    let mut tv = 0.0;
    let mut kl = 0.0;
    let mut js = 0.0;
    for &p in dist.probabilities().values() {
        tv += (p - u).abs();
        if p > 0.0 {
            kl += p * (p / u).ln();
        }
        let m = 0.5 * (p + u);
        if p > 0.0 {
            js += 0.5 * p * (p / m).ln();
        }
        js += 0.5 * u * (u / m).ln();
    }
    // outcomes missing from the map: p = 0, m = u/2
    tv += absent * u;
    js += absent * 0.5 * u * 2f64.ln();

    (0.5 * tv, kl.max(0.0), js.max(0.0))
}

/// Per-session features keyed by circuit id.
pub type SessionFeatures = BTreeMap<String, FeatureVector>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub metric: String,
    pub per_circuit_delta: BTreeMap<String, f64>,
    pub total: f64,
}

/// `Σ_c |m_c(curr) − m_c(prev)|` over circuits present in both sessions.
pub fn drift_index(
    curr: &SessionFeatures,
    prev: &SessionFeatures,
    metric: Metric,
) -> Result<DriftReport> {
    let per_circuit_delta: BTreeMap<String, f64> = curr
        .iter()
        .filter_map(|(c, fv)| {
            prev.get(c)
                .map(|old| (c.clone(), (fv.get(metric) - old.get(metric)).abs()))
        })
        .collect();
    if per_circuit_delta.is_empty() {
        return Err(Error::NoSharedCircuits);
    }
    let total = per_circuit_delta.values().sum();
    Ok(DriftReport {
        metric: metric.name().to_string(),
        per_circuit_delta,
        total,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    pub metric: String,
    pub sessions: Vec<String>,
    pub d: Vec<Vec<f64>>,
}

/// L1 distance between sessions over the circuits each pair shares
/// (a pair with nothing in common gets 0).
pub fn session_distance_matrix(
    sessions: &[(String, SessionFeatures)],
    metric: Metric,
) -> Result<DistanceMatrix> {
    if sessions.len() < 2 {
        return Err(Error::InsufficientData(
            "distance matrix needs at least 2 sessions".into(),
        ));
    }
    let n = sessions.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (&sessions[i].1, &sessions[j].1);
            let dist: f64 = a
                .iter()
                .filter_map(|(c, fa)| b.get(c).map(|fb| (fa.get(metric) - fb.get(metric)).abs()))
                .sum();
            d[i][j] = dist;
            d[j][i] = dist;
        }
    }
    Ok(DistanceMatrix {
        metric: metric.name().to_string(),
        sessions: sessions.iter().map(|(s, _)| s.clone()).collect(),
        d,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub metrics: Vec<String>,
    pub r: Vec<Vec<f64>>,
    /// Metrics whose column was constant; their correlations are reported as 0.
    pub constant: Vec<String>,
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson correlation between every pair of `metrics` across `rows`.
pub fn correlation_matrix(rows: &[FeatureVector], metrics: &[Metric]) -> Result<CorrelationMatrix> {
    if rows.len() < 3 {
        return Err(Error::InsufficientData(
            "correlation needs at least 3 rows".into(),
        ));
    }
    if metrics.len() < 2 {
        return Err(Error::InsufficientData(
            "correlation needs at least 2 metrics".into(),
        ));
    }
    let columns: Vec<Vec<f64>> = metrics
        .iter()
        .map(|&m| rows.iter().map(|r| r.get(m)).collect())
        .collect();
    let constant: Vec<String> = metrics
        .iter()
        .zip(&columns)
        .filter(|(_, col)| col.iter().all(|v| *v == col[0]))
        .map(|(m, _)| m.name().to_string())
        .collect();
    let r = columns
        .iter()
        .map(|a| columns.iter().map(|b| pearson(a, b).unwrap_or(0.0)).collect())
        .collect();
    Ok(CorrelationMatrix {
        metrics: metrics.iter().map(|m| m.name().to_string()).collect(),
        r,
        constant,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregation {
    Mean,
    Median,
}

impl FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Aggregation::Mean),
            "median" => Ok(Aggregation::Median),
            other => Err(Error::InvalidArgument(format!("unknown aggregation `{other}`"))),
        }
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 0 {
        0.5 * (v[mid - 1] + v[mid])
    } else {
        v[mid]
    })
}

/// Collapses one session's per-circuit values of `metric` into a single number.
pub fn aggregate(features: &SessionFeatures, metric: Metric, how: Aggregation) -> Option<f64> {
    let values: Vec<f64> = features.values().map(|f| f.get(metric)).collect();
    match how {
        Aggregation::Mean if !values.is_empty() => {
            Some(values.iter().sum::<f64>() / values.len() as f64)
        }
        Aggregation::Mean => None,
        Aggregation::Median => median(&values),
    }
}

/// Structured feature export: one session of one device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureFile {
    pub device_id: String,
    pub session_id: String,
    pub timestamp_utc: String,
    pub features: SessionFeatures,
}

pub const FEATURE_FILE_SUFFIX: &str = ".features.json";

impl FeatureFile {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("features serialize");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// All `*.features.json` files in `dir`, sorted by session id.
    pub fn load_dir(dir: &Path) -> Result<Vec<Self>> {
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut files = Vec::new();
        for entry in entries {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            let is_feature_file = path
                .file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with(FEATURE_FILE_SUFFIX));
            if is_feature_file {
                files.push(Self::load(&path)?);
            }
        }
        files.sort_by(|a, b| a.session_id.cmp(&b.session_id));
        Ok(files)
    }
}

/// Flat export: one CSV row per (session, circuit) with every fingerprint field.
pub fn features_csv(files: &[FeatureFile]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["device_id", "session_id", "circuit_id"];
    header.extend(Metric::ALL.iter().map(|m| m.name()));
    w.write_record(&header).expect("in-memory write");
    for file in files {
        for (circuit, fv) in &file.features {
            let mut row = vec![file.device_id.clone(), file.session_id.clone(), circuit.clone()];
            row.extend(Metric::ALL.iter().map(|&m| match m {
                Metric::Support => fv.support.to_string(),
                m => fv.get(m).to_string(),
            }));
            w.write_record(&row).expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dist(pairs: &[(&str, f64)]) -> ProbDist {
        let n = pairs[0].0.len();
        ProbDist::new(pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect(), n).unwrap()
    }

    fn fv_with(entropy: f64) -> FeatureVector {
        let d = dist(&[("0", 1.0)]);
        FeatureVector {
            entropy,
            ..fingerprint(&d)
        }
    }

    #[test]
    fn distribution_examples() {
        let d = distribution_from_counts(&CountsTable::from_pairs([("0", 512), ("1", 512)]).unwrap())
            .unwrap();
        assert_eq!(d.prob("0"), 0.5);
        assert_eq!(d.k(), 2.0);
        let d = distribution_from_counts(&CountsTable::from_pairs([("00", 1024)]).unwrap()).unwrap();
        assert_eq!(d.prob("00"), 1.0);
        assert_eq!(d.k(), 4.0);
        let d = distribution_from_counts(&CountsTable::from_pairs([("00", 256), ("11", 768)]).unwrap())
            .unwrap();
        assert_eq!((d.prob("00"), d.prob("11")), (0.25, 0.75));
    }

    #[test]
    fn uniform_case() {
        let f = fingerprint(&dist(&[("00", 0.25), ("01", 0.25), ("10", 0.25), ("11", 0.25)]));
        assert!((f.entropy - 4f64.ln()).abs() < 1e-12);
        assert!((f.entropy_norm - 1.0).abs() < 1e-12);
        assert!((f.perplexity - 4.0).abs() < 1e-12);
        assert!((f.gini - 0.75).abs() < 1e-12);
        assert_eq!(f.support, 4);
        assert!(f.tv_uniform.abs() < 1e-12 && f.kl_uniform.abs() < 1e-12 && f.js_uniform.abs() < 1e-12);
    }

    #[test]
    fn point_mass_case() {
        let f = fingerprint(&dist(&[("00", 1.0)]));
        assert_eq!(f.entropy, 0.0);
        assert_eq!(f.perplexity, 1.0);
        assert_eq!(f.gini, 0.0);
        assert_eq!(f.p0, 1.0);
        assert_eq!(f.bernoulli_var, 0.0);
        assert_eq!(f.parity_bias, 1.0);
        assert!((f.tv_uniform - 0.75).abs() < 1e-12);
        assert!((f.kl_uniform - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn bell_like_case() {
        let f = fingerprint(&dist(&[("00", 0.5), ("11", 0.5)]));
        assert!((f.entropy - 2f64.ln()).abs() < 1e-12);
        assert_eq!(f.parity_bias, 1.0);
        assert!((f.gini - 0.5).abs() < 1e-12);
        let odd = fingerprint(&dist(&[("01", 0.5), ("10", 0.5)]));
        assert_eq!(odd.parity_bias, -1.0);
    }

    #[test]
    fn js_of_point_mass_matches_hand_value() {
        // p = δ, u = 1/4: m = (5/8, 1/8, 1/8, 1/8)
        let f = fingerprint(&dist(&[("00", 1.0)]));
        let kl_pm = (1.0f64 / 0.625).ln();
        let kl_um = 0.25 * (0.25f64 / 0.625).ln() + 3.0 * 0.25 * 2f64.ln();
        assert!((f.js_uniform - 0.5 * (kl_pm + kl_um)).abs() < 1e-12);
    }

    #[test]
    fn metric_names_roundtrip() {
        for m in Metric::ALL {
            assert_eq!(m.name().parse::<Metric>().unwrap(), m);
        }
        assert!(matches!("bogus".parse::<Metric>(), Err(Error::UnknownMetric(_))));
    }

    #[test]
    fn drift_examples() {
        let s: SessionFeatures = [("a".to_string(), fv_with(0.9))].into();
        let r = drift_index(&s, &s, Metric::Entropy).unwrap();
        assert_eq!(r.total, 0.0);
        let prev: SessionFeatures = [("a".to_string(), fv_with(0.7))].into();
        let r = drift_index(&s, &prev, Metric::Entropy).unwrap();
        assert!((r.total - 0.2).abs() < 1e-12);
        let other: SessionFeatures = [("b".to_string(), fv_with(0.7))].into();
        assert!(matches!(
            drift_index(&s, &other, Metric::Entropy),
            Err(Error::NoSharedCircuits)
        ));
    }

    #[test]
    fn distance_examples() {
        let sess = |e| -> SessionFeatures { [("c".to_string(), fv_with(e))].into() };
        let m = session_distance_matrix(
            &[("1".into(), sess(0.1)), ("2".into(), sess(0.4)), ("3".into(), sess(0.9))],
            Metric::Entropy,
        )
        .unwrap();
        assert!((m.d[0][2] - 0.8).abs() < 1e-12);
        assert_eq!(m.d[0][2], m.d[2][0]);
        assert!(m.d.iter().enumerate().all(|(i, row)| row[i] == 0.0));
        let dup = session_distance_matrix(&[("a".into(), sess(0.3)), ("b".into(), sess(0.3))], Metric::Entropy)
            .unwrap();
        assert_eq!(dup.d, vec![vec![0.0; 2]; 2]);
        assert!(session_distance_matrix(&[("a".into(), sess(0.3))], Metric::Entropy).is_err());
    }

    #[test]
    fn correlation_examples() {
        let rows: Vec<FeatureVector> = (0..5)
            .map(|i| FeatureVector {
                p0: i as f64,
                p1: -(i as f64),
                ..fv_with(1.0)
            })
            .collect();
        let c = correlation_matrix(&rows, &[Metric::P0, Metric::P1, Metric::Entropy]).unwrap();
        assert!((c.r[0][0] - 1.0).abs() < 1e-12);
        assert!((c.r[0][1] + 1.0).abs() < 1e-12);
        assert_eq!(c.r[2][2], 0.0);
        assert_eq!(c.constant, vec!["entropy".to_string()]);
        assert!(correlation_matrix(&rows[..2], &[Metric::P0, Metric::P1]).is_err());
    }

    #[test]
    fn perplexity_tracks_entropy() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<FeatureVector> = (0..100)
            .map(|_| {
                let w: Vec<f64> = (0..8).map(|_| rng.gen::<f64>().powi(3)).collect();
                let total: f64 = w.iter().sum();
                let p = w
                    .iter()
                    .enumerate()
                    .map(|(i, v)| (format!("{i:03b}"), v / total))
                    .collect();
                fingerprint(&ProbDist::new(p, 3).unwrap())
            })
            .collect();
        let c = correlation_matrix(&rows, &[Metric::Perplexity, Metric::Entropy]).unwrap();
        assert!(c.r[0][1] > 0.9, "{}", c.r[0][1]);
    }

    #[test]
    fn aggregation() {
        let s: SessionFeatures = [
            ("a".to_string(), fv_with(1.0)),
            ("b".to_string(), fv_with(2.0)),
            ("c".to_string(), fv_with(9.0)),
        ]
        .into();
        assert_eq!(aggregate(&s, Metric::Entropy, Aggregation::Mean), Some(4.0));
        assert_eq!(aggregate(&s, Metric::Entropy, Aggregation::Median), Some(2.0));
        assert_eq!(median(&[1.0, 3.0]), Some(2.0));
    }

    #[test]
    fn csv_has_row_per_circuit() {
        let file = FeatureFile {
            device_id: "d".into(),
            session_id: "s1".into(),
            timestamp_utc: "2025-10-12T00:00:00Z".into(),
            features: [("a".to_string(), fv_with(1.0)), ("b".to_string(), fv_with(2.0))].into(),
        };
        let csv = features_csv(&[file]);
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("device_id,session_id,circuit_id,p0,"));
    }

    fn arb_dist() -> impl Strategy<Value = ProbDist> {
        (1usize..=5)
            .prop_flat_map(|n| (Just(n), proptest::collection::vec(0.0..1.0f64, 1 << n)))
            .prop_filter_map("non-zero mass", |(n, w)| {
                let total: f64 = w.iter().sum();
                (total > 0.0).then(|| {
                    let p = w
                        .iter()
                        .enumerate()
                        .filter(|(_, v)| **v > 0.3)
                        .map(|(i, v)| (format!("{i:0n$b}"), *v))
                        .collect::<Vec<_>>();
                    (n, p)
                })
            })
            .prop_filter_map("non-empty", |(n, p)| {
                let total: f64 = p.iter().map(|(_, v)| v).sum();
                (total > 0.0).then(|| {
                    ProbDist::new(p.into_iter().map(|(k, v)| (k, v / total)).collect(), n).unwrap()
                })
            })
    }

    proptest! {
        #[test]
        fn features_within_ranges(d in arb_dist()) {
            let f = fingerprint(&d);
            let k = d.k();
            prop_assert!(f.entropy >= 0.0 && f.entropy <= k.ln() + 1e-12);
            prop_assert!((f.perplexity - f.entropy.exp()).abs() < 1e-9);
            prop_assert!((f.kl_uniform - (k.ln() - f.entropy)).abs() < 1e-9);
            prop_assert!(f.js_uniform >= 0.0 && f.js_uniform <= 2f64.ln() + 1e-12);
            prop_assert!(f.tv_uniform >= 0.0 && f.tv_uniform <= 1.0 - 1.0 / k + 1e-12);
            prop_assert!(f.gini >= 0.0 && f.gini <= 1.0 - 1.0 / k + 1e-12);
            prop_assert!((f.bernoulli_var - f.p0 * (1.0 - f.p0)).abs() < 1e-12);
            prop_assert!(f.parity_bias.abs() <= 1.0 + 1e-12);
        }

        #[test]
        fn relabeling_preserves_shape_features(d in arb_dist(), mask in any::<u32>()) {
            // XOR every outcome with a fixed mask: a bijection on the outcome space
            let n = d.n_bits();
            let relabeled = ProbDist::new(
                d.probabilities()
                    .iter()
                    .map(|(k, v)| {
                        let x = u32::from_str_radix(k, 2).unwrap() ^ (mask & ((1 << n) - 1));
                        (format!("{x:0n$b}"), *v)
                    })
                    .collect(),
                n,
            )
            .unwrap();
            let (a, b) = (fingerprint(&d), fingerprint(&relabeled));
            for m in [Metric::Entropy, Metric::Gini, Metric::Perplexity, Metric::TvUniform, Metric::KlUniform, Metric::JsUniform] {
                prop_assert!((a.get(m) - b.get(m)).abs() < 1e-12);
            }
        }
    }
}
