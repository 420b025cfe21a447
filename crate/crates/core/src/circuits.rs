//! Seeded probe-circuit suite.
//!
//! Every circuit is regenerated bit-for-bit from `(circuit_id, seed, SuiteConfig)`.
//! Per-circuit seeds are derived from a session master seed by hashing, so the
//! master seed alone is enough to rebuild the whole suite later.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4, PI};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const BASELINE_READOUT: &str = "baseline_readout";
pub const RANDOM_1Q_A: &str = "random_1q_a";
pub const RANDOM_1Q_B: &str = "random_1q_b";
pub const RAMSEY: &str = "ramsey";
pub const SPIN_ECHO: &str = "spin_echo";
pub const PM: &str = "pm";
pub const INTERLEAVED_X: &str = "interleaved_x";
pub const INTERLEAVED_H: &str = "interleaved_h";
pub const INTERLEAVED_ID: &str = "interleaved_id";
pub const ENTANGLER_CHAIN: &str = "entangler_chain";
pub const CROSSTALK_PROBE: &str = "crosstalk_probe";
pub const CHSH_BELL: &str = "chsh_bell";

/// The fixed suite vocabulary, in suite order.
pub const SUITE_IDS: [&str; 12] = [
    BASELINE_READOUT,
    RANDOM_1Q_A,
    RANDOM_1Q_B,
    RAMSEY,
    SPIN_ECHO,
    PM,
    INTERLEAVED_X,
    INTERLEAVED_H,
    INTERLEAVED_ID,
    ENTANGLER_CHAIN,
    CROSSTALK_PROBE,
    CHSH_BELL,
];

/// 64-bit reproducibility seed. Serialized as 16 lowercase hex digits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Seed(pub u64);

impl Seed {
    pub fn value(self) -> u64 {
        self.0
    }
}

impl fmt::Display for Seed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl FromStr for Seed {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let valid = s.len() == 16 && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'));
        if !valid {
            return Err(Error::InvalidArgument(format!(
                "seed `{s}` is not 16 lowercase hex digits"
            )));
        }
        u64::from_str_radix(s, 16)
            .map(Seed)
            .map_err(|e| Error::InvalidArgument(e.to_string()))
    }
}

impl Serialize for Seed {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Seed {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Hash-based per-circuit seed derivation.
pub fn derive_circuit_seed(master: Seed, circuit_id: &str) -> Seed {
    let mut h = Sha256::new();
    h.update(b"qdna-circuit-seed/v1");
    h.update(master.0.to_le_bytes());
    h.update((circuit_id.len() as u64).to_le_bytes());
    h.update(circuit_id.as_bytes());
    let digest = h.finalize();
    let mut word = [0u8; 8];
    word.copy_from_slice(&digest[..8]);
    Seed(u64::from_le_bytes(word))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GateKind {
    #[serde(rename = "H")]
    H,
    #[serde(rename = "X")]
    X,
    #[serde(rename = "ID")]
    Id,
    #[serde(rename = "RX")]
    Rx,
    #[serde(rename = "RY")]
    Ry,
    #[serde(rename = "RZ")]
    Rz,
    #[serde(rename = "CNOT")]
    Cnot,
    #[serde(rename = "IDLE")]
    Idle,
}

impl GateKind {
    pub fn is_rotation(self) -> bool {
        matches!(self, GateKind::Rx | GateKind::Ry | GateKind::Rz)
    }

    pub fn is_two_qubit(self) -> bool {
        self == GateKind::Cnot
    }
}

/// One gate. `angle` is meaningful for rotations only, `duration` (idle-units)
/// for `IDLE` only. CNOT targets are `[control, target]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub kind: GateKind,
    pub targets: Vec<usize>,
    #[serde(default)]
    pub angle: f64,
    #[serde(default)]
    pub duration: u32,
}

impl Gate {
    fn fixed(kind: GateKind, q: usize) -> Self {
        Gate {
            kind,
            targets: vec![q],
            angle: 0.0,
            duration: 0,
        }
    }

    fn rotation(kind: GateKind, q: usize, angle: f64) -> Self {
        Gate {
            kind,
            targets: vec![q],
            angle,
            duration: 0,
        }
    }

    pub fn h(q: usize) -> Self {
        Self::fixed(GateKind::H, q)
    }

    pub fn x(q: usize) -> Self {
        Self::fixed(GateKind::X, q)
    }

    pub fn id(q: usize) -> Self {
        Self::fixed(GateKind::Id, q)
    }

    pub fn rx(q: usize, angle: f64) -> Self {
        Self::rotation(GateKind::Rx, q, angle)
    }

    pub fn ry(q: usize, angle: f64) -> Self {
        Self::rotation(GateKind::Ry, q, angle)
    }

    pub fn rz(q: usize, angle: f64) -> Self {
        Self::rotation(GateKind::Rz, q, angle)
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        Gate {
            kind: GateKind::Cnot,
            targets: vec![control, target],
            angle: 0.0,
            duration: 0,
        }
    }

    pub fn idle(targets: Vec<usize>, duration: u32) -> Self {
        Gate {
            kind: GateKind::Idle,
            targets,
            angle: 0.0,
            duration,
        }
    }

    /// Structural checks against a register of `n_qubits`.
    pub fn validate(&self, n_qubits: usize) -> Result<()> {
        if let Some(&q) = self.targets.iter().find(|&&q| q >= n_qubits) {
            return Err(Error::QubitOutOfRange { qubit: q, n_qubits });
        }
        match self.kind {
            GateKind::Cnot => {
                if self.targets.len() != 2 || self.targets[0] == self.targets[1] {
                    return Err(Error::InvalidGate(
                        "CNOT needs exactly two distinct targets".into(),
                    ));
                }
            }
            GateKind::Idle => {
                if self.targets.is_empty() {
                    return Err(Error::InvalidGate("IDLE needs at least one target".into()));
                }
            }
            _ => {
                if self.targets.len() != 1 {
                    return Err(Error::InvalidGate(format!(
                        "{:?} acts on exactly one qubit",
                        self.kind
                    )));
                }
            }
        }
        if self.kind.is_rotation() && !self.angle.is_finite() {
            return Err(Error::InvalidGate("rotation angle must be finite".into()));
        }
        Ok(())
    }
}

/// The four CHSH measurement settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ChshSetting {
    #[serde(rename = "ab")]
    AB,
    #[serde(rename = "ab'")]
    ABPrime,
    #[serde(rename = "a'b")]
    APrimeB,
    #[serde(rename = "a'b'")]
    APrimeBPrime,
}

impl ChshSetting {
    pub const ALL: [ChshSetting; 4] = [
        ChshSetting::AB,
        ChshSetting::ABPrime,
        ChshSetting::APrimeB,
        ChshSetting::APrimeBPrime,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            ChshSetting::AB => "ab",
            ChshSetting::ABPrime => "ab'",
            ChshSetting::APrimeB => "a'b",
            ChshSetting::APrimeBPrime => "a'b'",
        }
    }
}

/// Measurement angles (radians, RY before Z readout). Defaults are optimal for |Φ+⟩.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChshAngles {
    pub a: f64,
    pub a_prime: f64,
    pub b: f64,
    pub b_prime: f64,
}

impl Default for ChshAngles {
    fn default() -> Self {
        ChshAngles {
            a: 0.0,
            a_prime: FRAC_PI_2,
            b: FRAC_PI_4,
            b_prime: -FRAC_PI_4,
        }
    }
}

impl ChshAngles {
    pub fn for_setting(&self, setting: ChshSetting) -> (f64, f64) {
        match setting {
            ChshSetting::AB => (self.a, self.b),
            ChshSetting::ABPrime => (self.a, self.b_prime),
            ChshSetting::APrimeB => (self.a_prime, self.b),
            ChshSetting::APrimeBPrime => (self.a_prime, self.b_prime),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedCircuit {
    pub circuit_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub setting: Option<ChshSetting>,
    pub n_qubits: usize,
    pub seed: Seed,
    pub gates: Vec<Gate>,
    /// Qubits read out at the end, in bitstring order.
    pub measured: Vec<usize>,
}

impl NamedCircuit {
    /// Identity used for substream derivation and result keys (`chsh_bell/ab'`).
    pub fn label(&self) -> String {
        match self.setting {
            Some(s) => format!("{}/{}", self.circuit_id, s.tag()),
            None => self.circuit_id.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_qubits == 0 {
            return Err(Error::InvalidArgument("circuit has no qubits".into()));
        }
        if self.measured.is_empty() {
            return Err(Error::InvalidArgument("circuit measures no qubits".into()));
        }
        for &q in &self.measured {
            if q >= self.n_qubits {
                return Err(Error::QubitOutOfRange {
                    qubit: q,
                    n_qubits: self.n_qubits,
                });
            }
        }
        self.gates.iter().try_for_each(|g| g.validate(self.n_qubits))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub random_depth_min: usize,
    pub random_depth_max: usize,
    pub interleave_reps: usize,
    pub idle_units: u32,
    pub crosstalk_layers: usize,
    /// Ramsey/echo phase is drawn from `[-max, max]`.
    pub ramsey_phase_max: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            random_depth_min: 8,
            random_depth_max: 16,
            interleave_reps: 16,
            idle_units: 8,
            crosstalk_layers: 8,
            ramsey_phase_max: FRAC_PI_3,
        }
    }
}

pub fn build_suite(n_qubits: usize, master: Seed) -> Result<Vec<NamedCircuit>> {
    build_suite_with(n_qubits, master, &SuiteConfig::default())
}

pub fn build_suite_with(
    n_qubits: usize,
    master: Seed,
    config: &SuiteConfig,
) -> Result<Vec<NamedCircuit>> {
    if !(2..=5).contains(&n_qubits) {
        return Err(Error::InvalidArgument(format!(
            "suite needs 2..=5 qubits, got {n_qubits}"
        )));
    }
    SUITE_IDS
        .iter()
        .map(|id| build_circuit(id, n_qubits, derive_circuit_seed(master, id), config))
        .collect()
}

/// Regenerates one suite circuit from its id and its own seed.
pub fn build_circuit(
    circuit_id: &str,
    n_qubits: usize,
    seed: Seed,
    config: &SuiteConfig,
) -> Result<NamedCircuit> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.0);
    let all: Vec<usize> = (0..n_qubits).collect();
    let mut gates = Vec::new();
    let mut circuit_qubits = n_qubits;
    let mut measured = all.clone();

    match circuit_id {
        BASELINE_READOUT => {}
        RANDOM_1Q_A | RANDOM_1Q_B => {
            let depth = rng.gen_range(config.random_depth_min..=config.random_depth_max);
            for _ in 0..depth {
                for q in 0..n_qubits {
                    let angle = rng.gen_range(0.0..2.0 * PI);
                    gates.push(match rng.gen_range(0..3) {
                        0 => Gate::rx(q, angle),
                        1 => Gate::ry(q, angle),
                        _ => Gate::rz(q, angle),
                    });
                }
            }
        }
        RAMSEY => {
            let phi = rng.gen_range(-config.ramsey_phase_max..=config.ramsey_phase_max);
            gates.extend(all.iter().map(|&q| Gate::h(q)));
            gates.push(Gate::idle(all.clone(), config.idle_units));
            gates.extend(all.iter().map(|&q| Gate::rz(q, phi)));
            gates.extend(all.iter().map(|&q| Gate::h(q)));
        }
        SPIN_ECHO => {
            let phi = rng.gen_range(-config.ramsey_phase_max..=config.ramsey_phase_max);
            let half = config.idle_units / 2;
            gates.extend(all.iter().map(|&q| Gate::h(q)));
            gates.push(Gate::idle(all.clone(), half));
            gates.extend(all.iter().map(|&q| Gate::x(q)));
            gates.push(Gate::idle(all.clone(), config.idle_units - half));
            gates.extend(all.iter().map(|&q| Gate::rz(q, phi)));
            gates.extend(all.iter().map(|&q| Gate::h(q)));
        }
        PM => gates.extend(all.iter().map(|&q| Gate::h(q))),
        INTERLEAVED_X | INTERLEAVED_H | INTERLEAVED_ID => {
            let make: fn(usize) -> Gate = match circuit_id {
                INTERLEAVED_X => Gate::x,
                INTERLEAVED_H => Gate::h,
                _ => Gate::id,
            };
            for _ in 0..config.interleave_reps {
                gates.extend(all.iter().map(|&q| make(q)));
            }
        }
        ENTANGLER_CHAIN => {
            gates.extend(all.iter().map(|&q| Gate::h(q)));
            let mut links: Vec<usize> = (0..n_qubits - 1).collect();
            links.shuffle(&mut rng);
            gates.extend(links.into_iter().map(|i| Gate::cnot(i, i + 1)));
        }
        CROSSTALK_PROBE => {
            let rest: Vec<usize> = (1..n_qubits).collect();
            for _ in 0..config.crosstalk_layers {
                let angle = rng.gen_range(FRAC_PI_2..PI);
                gates.push(Gate::rx(0, angle));
                gates.push(Gate::idle(rest.clone(), 1));
            }
        }
        CHSH_BELL => {
            circuit_qubits = 2;
            measured = vec![0, 1];
            gates.push(Gate::h(0));
            gates.push(Gate::cnot(0, 1));
        }
        other => {
            return Err(Error::InvalidArgument(format!(
                "`{other}` is not in the suite vocabulary"
            )))
        }
    }

    let circuit = NamedCircuit {
        circuit_id: circuit_id.to_string(),
        setting: None,
        n_qubits: circuit_qubits,
        seed,
        gates,
        measured,
    };
    circuit.validate()?;
    Ok(circuit)
}

pub fn build_chsh_settings(base: &NamedCircuit) -> Result<[NamedCircuit; 4]> {
    build_chsh_settings_with(base, &ChshAngles::default())
}

/// Appends the pre-measurement RY pair for each of the four settings.
pub fn build_chsh_settings_with(
    base: &NamedCircuit,
    angles: &ChshAngles,
) -> Result<[NamedCircuit; 4]> {
    if base.n_qubits != 2 {
        return Err(Error::InvalidArgument(format!(
            "CHSH base must be a 2-qubit circuit, got {} qubits",
            base.n_qubits
        )));
    }
    Ok(ChshSetting::ALL.map(|setting| {
        let (theta_a, theta_b) = angles.for_setting(setting);
        let mut c = base.clone();
        c.setting = Some(setting);
        c.gates.push(Gate::ry(0, theta_a));
        c.gates.push(Gate::ry(1, theta_b));
        c.measured = vec![0, 1];
        c
    }))
}

/// One manifest line per circuit: `circuit_id<TAB>seed<TAB>gate_count`.
pub fn suite_manifest(suite: &[NamedCircuit]) -> String {
    suite
        .iter()
        .map(|c| format!("{}\t{}\t{}\n", c.label(), c.seed, c.gates.len()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn seed_derivation_is_deterministic_and_separates_ids() {
        let m = Seed(42);
        assert_eq!(derive_circuit_seed(m, RAMSEY), derive_circuit_seed(m, RAMSEY));
        assert_ne!(derive_circuit_seed(m, RAMSEY), derive_circuit_seed(m, SPIN_ECHO));
        assert_ne!(
            derive_circuit_seed(Seed(0), RAMSEY),
            derive_circuit_seed(Seed(1), RAMSEY)
        );
        // no collisions over the vocabulary for a spread of masters
        for master in 0..64 {
            let seeds: HashSet<_> = SUITE_IDS
                .iter()
                .map(|id| derive_circuit_seed(Seed(master), id))
                .collect();
            assert_eq!(seeds.len(), SUITE_IDS.len());
        }
    }

    #[test]
    fn suite_has_twelve_circuits_in_vocabulary_order() {
        for n in 2..=5 {
            let suite = build_suite(n, Seed(7)).unwrap();
            assert_eq!(suite.len(), 12);
            let ids: Vec<_> = suite.iter().map(|c| c.circuit_id.as_str()).collect();
            assert_eq!(ids, SUITE_IDS);
        }
    }

    #[test]
    fn suite_rejects_bad_qubit_counts() {
        assert!(build_suite(1, Seed(0)).is_err());
        assert!(build_suite(6, Seed(0)).is_err());
    }

    #[test]
    fn suite_regeneration_is_identical() {
        assert_eq!(build_suite(4, Seed(99)).unwrap(), build_suite(4, Seed(99)).unwrap());
    }

    #[test]
    fn circuit_regenerates_from_its_own_seed() {
        let cfg = SuiteConfig::default();
        for c in build_suite(3, Seed(5)).unwrap() {
            let again = build_circuit(&c.circuit_id, 3, c.seed, &cfg).unwrap();
            assert_eq!(c, again);
        }
    }

    #[test]
    fn random_angles_differ_between_masters() {
        let angles = |m| -> Vec<f64> {
            build_suite(3, Seed(m)).unwrap()[1]
                .gates
                .iter()
                .map(|g| g.angle)
                .collect()
        };
        assert_ne!(angles(1), angles(2));
    }

    #[test]
    fn random_depth_within_range() {
        for m in 0..50 {
            let suite = build_suite(2, Seed(m)).unwrap();
            for c in &suite[1..3] {
                let depth = c.gates.len() / 2;
                assert!((8..=16).contains(&depth), "depth {depth}");
                assert!(c.gates.iter().all(|g| g.kind.is_rotation()));
            }
        }
    }

    #[test]
    fn measurement_sets() {
        let suite = build_suite(4, Seed(3)).unwrap();
        for c in &suite {
            if c.circuit_id == CHSH_BELL {
                assert_eq!(c.measured, vec![0, 1]);
            } else {
                assert_eq!(c.measured, vec![0, 1, 2, 3]);
            }
        }
    }

    #[test]
    fn chsh_settings_are_tagged_and_rotated() {
        let suite = build_suite(3, Seed(1)).unwrap();
        let base = suite.iter().find(|c| c.circuit_id == CHSH_BELL).unwrap();
        let settings = build_chsh_settings(base).unwrap();
        let tags: HashSet<_> = settings.iter().map(|c| c.label()).collect();
        assert_eq!(tags.len(), 4);
        let last = &settings[3].gates;
        assert_eq!(last[last.len() - 2], Gate::ry(0, FRAC_PI_2));
        assert_eq!(last[last.len() - 1], Gate::ry(1, -FRAC_PI_4));
    }

    #[test]
    fn chsh_settings_need_two_qubits() {
        let suite = build_suite(3, Seed(1)).unwrap();
        assert!(build_chsh_settings(&suite[0]).is_err());
    }

    #[test]
    fn gate_validation() {
        assert!(Gate::cnot(1, 1).validate(3).is_err());
        assert!(Gate::x(3).validate(3).is_err());
        assert!(Gate::rx(0, f64::NAN).validate(1).is_err());
        assert!(Gate::idle(vec![], 2).validate(2).is_err());
        assert!(Gate::cnot(0, 2).validate(3).is_ok());
    }

    #[test]
    fn seed_hex_roundtrip() {
        let s = Seed(0xdead_beef_0000_0001);
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, "\"deadbeef00000001\"");
        assert_eq!(serde_json::from_str::<Seed>(&json).unwrap(), s);
        assert!("DEADBEEF00000001".parse::<Seed>().is_err());
    }

    #[test]
    fn manifest_lists_every_circuit() {
        let suite = build_suite(2, Seed(11)).unwrap();
        let manifest = suite_manifest(&suite);
        assert_eq!(manifest.lines().count(), 12);
        assert!(manifest.starts_with("baseline_readout\t"));
    }
}
