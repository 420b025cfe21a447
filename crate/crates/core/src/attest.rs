//! CHSH estimation and the session authenticity verdict.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::CountsTable;

/// Local-realism bound on S.
pub const CHSH_CLASSICAL_BOUND: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChshEvidence {
    pub e_ab: f64,
    pub e_ab_p: f64,
    pub e_ap_b: f64,
    pub e_ap_bp: f64,
    pub s: f64,
    /// Binomial standard error of `s`.
    pub sigma_s: f64,
    pub shots_per_setting: u64,
    pub threshold: f64,
    pub pass: bool,
}

impl ChshEvidence {
    pub fn correlations(&self) -> [f64; 4] {
        [self.e_ab, self.e_ab_p, self.e_ap_b, self.e_ap_bp]
    }

    /// Recomputes S from the stored correlations and re-derives the verdict.
    pub fn recheck(&self) -> std::result::Result<(), String> {
        let s = chsh_s(self.correlations()).map_err(|e| e.to_string())?;
        if s != self.s {
            return Err(format!("stored S {} != recomputed {}", self.s, s));
        }
        if (s >= self.threshold) != self.pass {
            return Err(format!(
                "pass flag {} inconsistent with S {} vs threshold {}",
                self.pass, s, self.threshold
            ));
        }
        Ok(())
    }

    /// Distance of S above the threshold in units of `sigma_s`.
    pub fn margin_sigmas(&self) -> f64 {
        (self.s - self.threshold) / self.sigma_s.max(f64::MIN_POSITIVE)
    }
}

/// `E = (N00 + N11 − N01 − N10) / shots` over 2-bit outcomes.
pub fn correlation_e(counts: &CountsTable) -> Result<f64> {
    counts.validate()?;
    if counts.n_bits()? != 2 {
        return Err(Error::InvalidCounts("correlation needs 2-bit outcomes".into()));
    }
    let agree = counts.get("00") + counts.get("11");
    let disagree = counts.get("01") + counts.get("10");
    Ok((agree as f64 - disagree as f64) / counts.shots as f64)
}

/// `S = E(ab) + E(ab') + E(a'b) − E(a'b')`.
pub fn chsh_s(e: [f64; 4]) -> Result<f64> {
    if let Some(bad) = e.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
        return Err(Error::InvalidArgument(format!(
            "correlation {bad} outside [-1, 1]"
        )));
    }
    Ok(e[0] + e[1] + e[2] - e[3])
}

/// `σ_S = √Σ (1 − E²)/shots`.
pub fn chsh_sigma(e: [f64; 4], shots: u64) -> f64 {
    e.iter()
        .map(|v| (1.0 - v * v).max(0.0) / shots as f64)
        .sum::<f64>()
        .sqrt()
}

/// Builds the evidence from the four setting tables, ordered ab, ab', a'b, a'b'.
pub fn attest_session(tables: &[CountsTable; 4], threshold: f64) -> Result<ChshEvidence> {
    let shots = tables[0].shots;
    if tables.iter().any(|t| t.shots != shots) {
        return Err(Error::InvalidArgument(
            "CHSH settings have mismatched shot counts".into(),
        ));
    }
    if !threshold.is_finite() {
        return Err(Error::InvalidArgument("threshold must be finite".into()));
    }
    let mut e = [0.0; 4];
    for (slot, table) in e.iter_mut().zip(tables) {
        *slot = correlation_e(table)?;
    }
    let s = chsh_s(e)?;
    Ok(ChshEvidence {
        e_ab: e[0],
        e_ab_p: e[1],
        e_ap_b: e[2],
        e_ap_bp: e[3],
        s,
        sigma_s: chsh_sigma(e, shots),
        shots_per_setting: shots,
        threshold,
        pass: s >= threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

    fn table(pairs: &[(&str, u64)]) -> CountsTable {
        CountsTable::from_pairs(pairs.iter().copied()).unwrap()
    }

    #[test]
    fn correlation_examples() {
        assert_eq!(correlation_e(&table(&[("00", 1024)])).unwrap(), 1.0);
        assert_eq!(correlation_e(&table(&[("01", 512), ("10", 512)])).unwrap(), -1.0);
        let even = table(&[("00", 250), ("11", 250), ("01", 250), ("10", 250)]);
        assert_eq!(correlation_e(&even).unwrap(), 0.0);
        assert!(correlation_e(&table(&[("000", 4)])).is_err());
    }

    #[test]
    fn s_examples() {
        assert_eq!(chsh_s([1.0, 1.0, 1.0, -1.0]).unwrap(), 4.0);
        let r = FRAC_1_SQRT_2;
        assert!((chsh_s([r, r, r, -r]).unwrap() - 2.0 * SQRT_2).abs() < 1e-12);
        assert_eq!(chsh_s([0.0; 4]).unwrap(), 0.0);
        assert!(chsh_s([1.1, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn attest_verdict_and_recheck() {
        let t = [
            table(&[("00", 90), ("11", 10)]),
            table(&[("00", 90), ("11", 10)]),
            table(&[("00", 90), ("11", 10)]),
            table(&[("01", 90), ("10", 10)]),
        ];
        let ev = attest_session(&t, 2.0).unwrap();
        assert_eq!(ev.s, 4.0);
        assert!(ev.pass);
        assert!(ev.recheck().is_ok());

        let mut forged = ev.clone();
        forged.s = 2.9;
        assert!(forged.recheck().is_err());
        let mut flipped = ev;
        flipped.pass = false;
        assert!(flipped.recheck().is_err());
    }

    #[test]
    fn mismatched_shots_rejected() {
        let t = [
            table(&[("00", 10)]),
            table(&[("00", 10)]),
            table(&[("00", 10)]),
            table(&[("00", 11)]),
        ];
        assert!(attest_session(&t, 2.0).is_err());
    }

    #[test]
    fn s_is_order_independent() {
        // the same multiset of outcomes in any insertion order gives the same table
        let a = table(&[("00", 3), ("01", 5), ("11", 2)]);
        let b = table(&[("11", 2), ("00", 3), ("01", 5)]);
        assert_eq!(correlation_e(&a).unwrap(), correlation_e(&b).unwrap());
    }
}
