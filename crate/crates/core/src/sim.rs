//! Statevector simulator with stochastic-trajectory noise.
//!
//! Each shot evolves one pure state under a randomly sampled noisy unitary
//! realization and draws one bitstring from it. Qubit `q` is bit `q` of the
//! amplitude index; in outcome strings character `i` is the `i`-th measured
//! qubit, so `"10"` means qubit 0 read 1.
//!
//! Noise per trajectory:
//! - quasi-static detuning: one `Δ_q ~ N(0, detune_sigma)` per qubit per shot,
//!   applied as `RZ(Δ_q·t)` during `IDLE(t)` (refocusable by an echo),
//! - Markovian dephasing: per idle segment a `Z` with probability
//!   `(1 − (1 − 2p)^t)/2` where `p = t2_markov` per idle-unit (not refocusable),
//! - coherent over-rotation: every gate angle scaled by its kind's factor,
//! - depolarizing: after each gate a uniformly random non-identity Pauli on its
//!   targets with probability `depol_1q` / `depol_2q`,
//! - crosstalk: an `RX`/`RY` drive of angle θ on qubit `q` leaks `RX(κ_j·θ)` onto
//!   each chain neighbour `j = q ± 1`,
//! - readout confusion: each measured bit flips 0→1 with `eps0`, 1→0 with `eps1`.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::circuits::{Gate, GateKind, NamedCircuit, Seed};
use crate::error::{Error, Result};

const NORM_TOL: f64 = 1e-9;

const SIM_TORINO: &str = include_str!("../profiles/sim_torino.toml");
const SIM_BRISBANE: &str = include_str!("../profiles/sim_brisbane.toml");

/// Names of the shipped fixture profiles.
pub const FIXTURE_PROFILES: [&str; 2] = ["sim_torino", "sim_brisbane"];

fn one() -> f64 {
    1.0
}

/// Multiplicative angle error per gate kind. Fixed gates (H, X, CNOT) are
/// treated as rotations by π and scaled the same way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrotation {
    #[serde(default = "one")]
    pub h: f64,
    #[serde(default = "one")]
    pub x: f64,
    #[serde(default = "one")]
    pub rx: f64,
    #[serde(default = "one")]
    pub ry: f64,
    #[serde(default = "one")]
    pub rz: f64,
    #[serde(default = "one")]
    pub cnot: f64,
}

impl Default for Overrotation {
    fn default() -> Self {
        Overrotation {
            h: 1.0,
            x: 1.0,
            rx: 1.0,
            ry: 1.0,
            rz: 1.0,
            cnot: 1.0,
        }
    }
}

impl Overrotation {
    pub fn factor(&self, kind: GateKind) -> f64 {
        match kind {
            GateKind::H => self.h,
            GateKind::X => self.x,
            GateKind::Rx => self.rx,
            GateKind::Ry => self.ry,
            GateKind::Rz => self.rz,
            GateKind::Cnot => self.cnot,
            GateKind::Id | GateKind::Idle => 1.0,
        }
    }

    fn values(&self) -> [(&'static str, f64); 6] {
        [
            ("h", self.h),
            ("x", self.x),
            ("rx", self.rx),
            ("ry", self.ry),
            ("rz", self.rz),
            ("cnot", self.cnot),
        ]
    }
}

/// Parameterized noise model standing in for one physical device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceProfile {
    pub device_id: String,
    pub n_qubits: usize,
    pub readout_eps0: Vec<f64>,
    pub readout_eps1: Vec<f64>,
    #[serde(default)]
    pub overrotation: Overrotation,
    #[serde(default)]
    pub depol_1q: f64,
    #[serde(default)]
    pub depol_2q: f64,
    #[serde(default)]
    pub detune_sigma: f64,
    #[serde(default)]
    pub t2_markov: f64,
    pub crosstalk: Vec<f64>,
}

impl DeviceProfile {
    pub fn noiseless(device_id: &str, n_qubits: usize) -> Self {
        DeviceProfile {
            device_id: device_id.to_string(),
            n_qubits,
            readout_eps0: vec![0.0; n_qubits],
            readout_eps1: vec![0.0; n_qubits],
            overrotation: Overrotation::default(),
            depol_1q: 0.0,
            depol_2q: 0.0,
            detune_sigma: 0.0,
            t2_markov: 0.0,
            crosstalk: vec![0.0; n_qubits],
        }
    }

    /// One of the shipped fixture devices (`sim_torino`, `sim_brisbane`).
    pub fn fixture(name: &str) -> Result<Self> {
        match name {
            "sim_torino" => Self::from_toml_str(SIM_TORINO),
            "sim_brisbane" => Self::from_toml_str(SIM_BRISBANE),
            other => Err(Error::NotFound(format!("fixture profile `{other}`"))),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let profile: DeviceProfile =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        profile.validate()?;
        Ok(profile)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("profile serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidProfile(msg));
        if !(2..=5).contains(&self.n_qubits) {
            return bad(format!("n_qubits must be 2..=5, got {}", self.n_qubits));
        }
        for (name, v) in [
            ("readout_eps0", &self.readout_eps0),
            ("readout_eps1", &self.readout_eps1),
            ("crosstalk", &self.crosstalk),
        ] {
            if v.len() != self.n_qubits {
                return bad(format!("{name} needs {} entries, got {}", self.n_qubits, v.len()));
            }
            if v.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return bad(format!("{name} entries must lie in [0, 1]"));
            }
        }
        for (name, p) in [
            ("depol_1q", self.depol_1q),
            ("depol_2q", self.depol_2q),
            ("t2_markov", self.t2_markov),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if !(self.detune_sigma >= 0.0 && self.detune_sigma.is_finite()) {
            return bad(format!("detune_sigma must be >= 0, got {}", self.detune_sigma));
        }
        for (kind, f) in self.overrotation.values() {
            if !(f > 0.0 && f.is_finite()) {
                return bad(format!("overrotation.{kind} must be > 0, got {f}"));
            }
        }
        Ok(())
    }

    /// Flat key/value view of the calibration parameters.
    pub fn calibration_map(&self) -> BTreeMap<String, String> {
        let list = |v: &[f64]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut m = BTreeMap::new();
        m.insert("n_qubits".into(), self.n_qubits.to_string());
        m.insert("readout_eps0".into(), list(&self.readout_eps0));
        m.insert("readout_eps1".into(), list(&self.readout_eps1));
        m.insert("depol_1q".into(), self.depol_1q.to_string());
        m.insert("depol_2q".into(), self.depol_2q.to_string());
        m.insert("detune_sigma".into(), self.detune_sigma.to_string());
        m.insert("t2_markov".into(), self.t2_markov.to_string());
        m.insert("crosstalk".into(), list(&self.crosstalk));
        for (kind, f) in self.overrotation.values() {
            m.insert(format!("overrotation.{kind}"), f.to_string());
        }
        m
    }
}

/// Pure state of an `n`-qubit register.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

type Mat2 = [[Complex64; 2]; 2];

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

const HADAMARD: Mat2 = [
    [Complex64::new(FRAC_1_SQRT_2, 0.0), Complex64::new(FRAC_1_SQRT_2, 0.0)],
    [Complex64::new(FRAC_1_SQRT_2, 0.0), Complex64::new(-FRAC_1_SQRT_2, 0.0)],
];
const PAULI_X: Mat2 = [[ZERO, ONE], [ONE, ZERO]];
const PAULI_Y: Mat2 = [[ZERO, Complex64::new(0.0, -1.0)], [I, ZERO]];
const PAULI_Z: Mat2 = [[ONE, ZERO], [ZERO, Complex64::new(-1.0, 0.0)]];

fn rx(theta: f64) -> Mat2 {
    let (s, co) = (theta / 2.0).sin_cos();
    [[c(co), Complex64::new(0.0, -s)], [Complex64::new(0.0, -s), c(co)]]
}

fn ry(theta: f64) -> Mat2 {
    let (s, co) = (theta / 2.0).sin_cos();
    [[c(co), c(-s)], [c(s), c(co)]]
}

fn rz(theta: f64) -> Mat2 {
    let half = theta / 2.0;
    [
        [Complex64::from_polar(1.0, -half), ZERO],
        [ZERO, Complex64::from_polar(1.0, half)],
    ]
}

/// `X^f`: equals X at f = 1.
fn x_power(f: f64) -> Mat2 {
    if f == 1.0 {
        return PAULI_X;
    }
    let phase = Complex64::from_polar(1.0, PI * f / 2.0);
    rx(PI * f).map(|row| row.map(|z| z * phase))
}

/// Rotation by `π·f` about `(X+Z)/√2` with the phase that makes f = 1 exactly H.
fn h_power(f: f64) -> Mat2 {
    if f == 1.0 {
        return HADAMARD;
    }
    let (s, co) = (PI * f / 2.0).sin_cos();
    let a = s * FRAC_1_SQRT_2;
    // i·(cos I − i sin n·σ) = i cos I + sin n·σ
    [
        [Complex64::new(a, co), c(a)],
        [c(a), Complex64::new(-a, co)],
    ]
}

impl QuantumState {
    /// `|0…0⟩`.
    pub fn zero(n_qubits: usize) -> Self {
        let mut amplitudes = vec![ZERO; 1 << n_qubits];
        amplitudes[0] = ONE;
        QuantumState {
            n_qubits,
            amplitudes,
        }
    }

    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let len = amplitudes.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "amplitude vector length {len} is not 2^n"
            )));
        }
        let state = QuantumState {
            n_qubits: len.trailing_zeros() as usize,
            amplitudes,
        };
        state.check_norm()?;
        Ok(state)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    fn check_norm(&self) -> Result<()> {
        let n = self.norm_sqr();
        if (n - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized(n));
        }
        Ok(())
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    fn check_qubit(&self, q: usize) -> Result<()> {
        if q >= self.n_qubits {
            return Err(Error::QubitOutOfRange {
                qubit: q,
                n_qubits: self.n_qubits,
            });
        }
        Ok(())
    }

    fn apply_1q(&mut self, q: usize, m: &Mat2) {
        let bit = 1usize << q;
        for i in 0..self.amplitudes.len() {
            if i & bit == 0 {
                let j = i | bit;
                let (a0, a1) = (self.amplitudes[i], self.amplitudes[j]);
                self.amplitudes[i] = m[0][0] * a0 + m[0][1] * a1;
                self.amplitudes[j] = m[1][0] * a0 + m[1][1] * a1;
            }
        }
    }

    fn apply_controlled(&mut self, control: usize, target: usize, m: &Mat2) {
        let cbit = 1usize << control;
        let tbit = 1usize << target;
        for i in 0..self.amplitudes.len() {
            if i & cbit != 0 && i & tbit == 0 {
                let j = i | tbit;
                let (a0, a1) = (self.amplitudes[i], self.amplitudes[j]);
                self.amplitudes[i] = m[0][0] * a0 + m[0][1] * a1;
                self.amplitudes[j] = m[1][0] * a0 + m[1][1] * a1;
            }
        }
    }

    /// Applies `gate` with every angle scaled by `factor`. IDLE is a no-op here.
    fn apply_scaled(&mut self, gate: &Gate, factor: f64) {
        let q = gate.targets[0];
        match gate.kind {
            GateKind::H => self.apply_1q(q, &h_power(factor)),
            GateKind::X => self.apply_1q(q, &x_power(factor)),
            GateKind::Id | GateKind::Idle => {}
            GateKind::Rx => self.apply_1q(q, &rx(gate.angle * factor)),
            GateKind::Ry => self.apply_1q(q, &ry(gate.angle * factor)),
            GateKind::Rz => self.apply_1q(q, &rz(gate.angle * factor)),
            GateKind::Cnot => self.apply_controlled(q, gate.targets[1], &x_power(factor)),
        }
    }

    /// Marginal distribution over `measured` qubits, indexed so that bit `k`
    /// of the result index is `measured[k]`.
    pub fn marginal(&self, measured: &[usize]) -> Vec<f64> {
        let mut out = vec![0.0; 1 << measured.len()];
        for (i, a) in self.amplitudes.iter().enumerate() {
            let mut idx = 0;
            for (k, &q) in measured.iter().enumerate() {
                if i >> q & 1 == 1 {
                    idx |= 1 << k;
                }
            }
            out[idx] += a.norm_sqr();
        }
        out
    }
}

/// Ideal (noiseless) application of one gate.
pub fn apply_gate(state: &QuantumState, gate: &Gate) -> Result<QuantumState> {
    state.check_norm()?;
    gate.validate(state.n_qubits)?;
    for &q in &gate.targets {
        state.check_qubit(q)?;
    }
    let mut next = state.clone();
    next.apply_scaled(gate, 1.0);
    Ok(next)
}

/// Outcome table of one circuit execution. Keys are bitstrings of the measured qubits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountsTable {
    pub counts: BTreeMap<String, u64>,
    pub shots: u64,
}

impl CountsTable {
    pub fn new(counts: BTreeMap<String, u64>) -> Result<Self> {
        let shots = counts.values().sum();
        let table = CountsTable { counts, shots };
        table.validate()?;
        Ok(table)
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, u64)>) -> Result<Self> {
        Self::new(pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
    }

    pub fn validate(&self) -> Result<()> {
        if self.shots == 0 {
            return Err(Error::InvalidCounts("shots must be >= 1".into()));
        }
        if self.counts.values().sum::<u64>() != self.shots {
            return Err(Error::InvalidCounts("counts do not sum to shots".into()));
        }
        let width = self.n_bits()?;
        for key in self.counts.keys() {
            if key.len() != width || !key.bytes().all(|b| b == b'0' || b == b'1') {
                return Err(Error::InvalidCounts(format!(
                    "key `{key}` is not a {width}-bit string"
                )));
            }
        }
        Ok(())
    }

    pub fn n_bits(&self) -> Result<usize> {
        self.counts
            .keys()
            .next()
            .map(|k| k.len())
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::InvalidCounts("empty counts table".into()))
    }

    pub fn get(&self, outcome: &str) -> u64 {
        self.counts.get(outcome).copied().unwrap_or(0)
    }

    /// SHA-256 of the compact JSON encoding (keys sorted).
    pub fn digest(&self) -> [u8; 32] {
        let bytes = serde_json::to_vec(self).expect("counts serialize");
        Sha256::digest(bytes).into()
    }
}

/// Counter-based substream for one shot.
pub fn shot_stream(seed: Seed, label: &str, shot_index: u64) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(b"qdna-shot/v1");
    h.update(seed.0.to_le_bytes());
    h.update((label.len() as u64).to_le_bytes());
    h.update(label.as_bytes());
    h.update(shot_index.to_le_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

fn random_pauli<R: Rng>(rng: &mut R) -> &'static Mat2 {
    match rng.gen_range(0..3) {
        0 => &PAULI_X,
        1 => &PAULI_Y,
        _ => &PAULI_Z,
    }
}

/// One noisy realization of `circuit` on `profile`; returns the measured bitstring.
pub fn run_trajectory<R: Rng>(
    circuit: &NamedCircuit,
    profile: &DeviceProfile,
    rng: &mut R,
) -> Result<String> {
    if circuit.n_qubits > profile.n_qubits {
        return Err(Error::TooManyQubits {
            circuit: circuit.n_qubits,
            device: profile.n_qubits,
        });
    }
    circuit.validate()?;
    let n = circuit.n_qubits;
    let detuning: Vec<f64> = (0..n)
        .map(|_| profile.detune_sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();

    let mut state = QuantumState::zero(n);
    for gate in &circuit.gates {
        match gate.kind {
            GateKind::Idle => {
                let t = gate.duration;
                let flip = 0.5 * (1.0 - (1.0 - 2.0 * profile.t2_markov).powi(t as i32));
                for &q in &gate.targets {
                    state.apply_1q(q, &rz(detuning[q] * t as f64));
                    if rng.gen::<f64>() < flip {
                        state.apply_1q(q, &PAULI_Z);
                    }
                }
            }
            kind => {
                state.apply_scaled(gate, profile.overrotation.factor(kind));
                if matches!(kind, GateKind::Rx | GateKind::Ry) {
                    let q = gate.targets[0];
                    let theta = gate.angle * profile.overrotation.factor(kind);
                    for j in [q.wrapping_sub(1), q + 1] {
                        if j < n && profile.crosstalk[j] > 0.0 {
                            state.apply_1q(j, &rx(profile.crosstalk[j] * theta));
                        }
                    }
                }
                if kind.is_two_qubit() {
                    if rng.gen::<f64>() < profile.depol_2q {
                        // uniform over the 15 non-identity two-qubit Paulis
                        let which = rng.gen_range(1..16);
                        for (k, &q) in gate.targets.iter().enumerate() {
                            let m = match (which >> (2 * k)) & 3 {
                                0 => continue,
                                1 => &PAULI_X,
                                2 => &PAULI_Y,
                                _ => &PAULI_Z,
                            };
                            state.apply_1q(q, m);
                        }
                    }
                } else if rng.gen::<f64>() < profile.depol_1q {
                    let m = random_pauli(rng);
                    state.apply_1q(gate.targets[0], m);
                }
            }
        }
    }
    debug_assert!((state.norm_sqr() - 1.0).abs() < NORM_TOL);

    let marginal = state.marginal(&circuit.measured);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut outcome = marginal.len() - 1;
    for (idx, p) in marginal.iter().enumerate() {
        acc += p;
        if u < acc {
            outcome = idx;
            break;
        }
    }

    let mut bits = String::with_capacity(circuit.measured.len());
    for (k, &q) in circuit.measured.iter().enumerate() {
        let ideal = outcome >> k & 1 == 1;
        let flip_p = if ideal {
            profile.readout_eps1[q]
        } else {
            profile.readout_eps0[q]
        };
        let read = ideal ^ (rng.gen::<f64>() < flip_p);
        bits.push(if read { '1' } else { '0' });
    }
    Ok(bits)
}

/// Runs `shots` independent trajectories, each on its own substream derived
/// from `(seed, circuit label, shot index)`.
pub fn execute_circuit(
    circuit: &NamedCircuit,
    profile: &DeviceProfile,
    shots: u64,
    seed: Seed,
) -> Result<CountsTable> {
    if shots == 0 {
        return Err(Error::InvalidArgument("shots must be >= 1".into()));
    }
    let label = circuit.label();
    let outcomes = (0..shots)
        .into_par_iter()
        .map(|i| run_trajectory(circuit, profile, &mut shot_stream(seed, &label, i)))
        .collect::<Result<Vec<_>>>()?;
    let mut counts = BTreeMap::new();
    for o in outcomes {
        *counts.entry(o).or_insert(0) += 1;
    }
    Ok(CountsTable { counts, shots })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::{build_suite, INTERLEAVED_ID};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn circuit(n: usize, gates: Vec<Gate>) -> NamedCircuit {
        NamedCircuit {
            circuit_id: "test".into(),
            setting: None,
            n_qubits: n,
            seed: Seed(0),
            gates,
            measured: (0..n).collect(),
        }
    }

    #[test]
    fn hadamard_on_zero() {
        let s = apply_gate(&QuantumState::zero(1), &Gate::h(0)).unwrap();
        assert_abs_diff_eq!(s.amplitudes()[0].re, FRAC_1_SQRT_2, epsilon = 1e-12);
        assert_abs_diff_eq!(s.amplitudes()[1].re, FRAC_1_SQRT_2, epsilon = 1e-12);
    }

    #[test]
    fn x_on_zero() {
        let s = apply_gate(&QuantumState::zero(1), &Gate::x(0)).unwrap();
        assert_eq!(s.amplitudes(), &[ZERO, ONE]);
    }

    #[test]
    fn cnot_on_ten() {
        // "10": qubit 0 set -> index 1
        let s = apply_gate(&QuantumState::zero(2), &Gate::x(0)).unwrap();
        let s = apply_gate(&s, &Gate::cnot(0, 1)).unwrap();
        assert_abs_diff_eq!(s.amplitudes()[3].re, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn apply_gate_errors() {
        assert!(matches!(
            apply_gate(&QuantumState::zero(2), &Gate::x(2)),
            Err(Error::QubitOutOfRange { .. })
        ));
        let bad = QuantumState {
            n_qubits: 1,
            amplitudes: vec![ONE, ONE],
        };
        assert!(matches!(apply_gate(&bad, &Gate::x(0)), Err(Error::NotNormalized(_))));
        assert!(QuantumState::from_amplitudes(vec![ONE, ONE]).is_err());
    }

    #[test]
    fn fractional_gates_reduce_to_ideal() {
        let near = |a: Mat2, b: Mat2| {
            a.iter()
                .flatten()
                .zip(b.iter().flatten())
                .all(|(x, y)| (x - y).norm() < 1e-12)
        };
        assert!(near(h_power(1.0 - 1e-15), HADAMARD));
        assert!(near(x_power(1.0 + 1e-15), PAULI_X));
    }

    #[test]
    fn noiseless_empty_circuit_is_ground() {
        let p = DeviceProfile::noiseless("d", 3);
        let counts = execute_circuit(&circuit(3, vec![]), &p, 64, Seed(1)).unwrap();
        assert_eq!(counts.get("000"), 64);
    }

    #[test]
    fn forced_readout_flip() {
        let mut p = DeviceProfile::noiseless("d", 3);
        p.readout_eps0 = vec![1.0; 3];
        let counts = execute_circuit(&circuit(3, vec![]), &p, 32, Seed(1)).unwrap();
        assert_eq!(counts.get("111"), 32);
    }

    #[test]
    fn noiseless_bell_support() {
        let p = DeviceProfile::noiseless("d", 2);
        let c = circuit(2, vec![Gate::h(0), Gate::cnot(0, 1)]);
        let counts = execute_circuit(&c, &p, 2000, Seed(3)).unwrap();
        assert!(counts.counts.keys().all(|k| k == "00" || k == "11"));
        assert_eq!(counts.counts.len(), 2);
    }

    #[test]
    fn hadamard_sampling_is_binomial() {
        let p = DeviceProfile::noiseless("d", 2);
        let mut c = circuit(2, vec![Gate::h(0)]);
        c.measured = vec![0];
        let shots = 10_000u64;
        let counts = execute_circuit(&c, &p, shots, Seed(17)).unwrap();
        let p0 = counts.get("0") as f64 / shots as f64;
        let sigma = (0.25 / shots as f64).sqrt();
        assert!((p0 - 0.5).abs() <= 3.0 * sigma, "p0 = {p0}");
    }

    #[test]
    fn execution_is_deterministic() {
        let p = DeviceProfile::fixture("sim_torino").unwrap();
        let suite = build_suite(p.n_qubits, Seed(8)).unwrap();
        for c in &suite {
            let a = execute_circuit(c, &p, 256, Seed(2)).unwrap();
            let b = execute_circuit(c, &p, 256, Seed(2)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn interleaved_identity_is_identity_when_noiseless() {
        let p = DeviceProfile::noiseless("d", 4);
        let suite = build_suite(4, Seed(4)).unwrap();
        let c = suite.iter().find(|c| c.circuit_id == INTERLEAVED_ID).unwrap();
        let counts = execute_circuit(c, &p, 500, Seed(4)).unwrap();
        assert_eq!(counts.get("0000"), 500);
    }

    #[test]
    fn too_many_qubits_rejected() {
        let p = DeviceProfile::noiseless("d", 2);
        assert!(matches!(
            execute_circuit(&circuit(3, vec![]), &p, 1, Seed(0)),
            Err(Error::TooManyQubits { .. })
        ));
        assert!(execute_circuit(&circuit(2, vec![]), &p, 0, Seed(0)).is_err());
    }

    #[test]
    fn crosstalk_leaks_onto_neighbour_only() {
        let mut p = DeviceProfile::noiseless("d", 3);
        p.crosstalk = vec![0.0, 0.5, 0.5];
        let c = circuit(3, vec![Gate::rx(0, PI)]);
        let counts = execute_circuit(&c, &p, 4000, Seed(9)).unwrap();
        // qubit 0 flipped, qubit 1 rotated by π/2, qubit 2 untouched
        assert!(counts.counts.keys().all(|k| k.starts_with('1') && k.ends_with('0')));
        let ones_q1 = counts
            .counts
            .iter()
            .filter(|(k, _)| k.as_bytes()[1] == b'1')
            .map(|(_, v)| v)
            .sum::<u64>() as f64;
        assert!((ones_q1 / 4000.0 - 0.5).abs() < 0.05);
    }

    #[test]
    fn fixtures_load_and_differ() {
        let a = DeviceProfile::fixture("sim_torino").unwrap();
        let b = DeviceProfile::fixture("sim_brisbane").unwrap();
        assert_ne!(a.calibration_map(), b.calibration_map());
        assert!(DeviceProfile::fixture("nope").is_err());
        let again = DeviceProfile::from_toml_str(&a.to_toml_string()).unwrap();
        assert_eq!(a, again);
    }

    #[test]
    fn profile_validation() {
        let mut p = DeviceProfile::noiseless("d", 2);
        p.depol_1q = 1.5;
        assert!(p.validate().is_err());
        let mut p = DeviceProfile::noiseless("d", 2);
        p.overrotation.x = 0.0;
        assert!(p.validate().is_err());
        let mut p = DeviceProfile::noiseless("d", 2);
        p.crosstalk = vec![0.1];
        assert!(p.validate().is_err());
        assert!(DeviceProfile::noiseless("d", 6).validate().is_err());
    }

    #[test]
    fn counts_validation() {
        assert!(CountsTable::from_pairs([("00", 3), ("1", 1)]).is_err());
        assert!(CountsTable::from_pairs([("0a", 3)]).is_err());
        assert!(CountsTable::from_pairs([("00", 0)]).is_err());
        let t = CountsTable::from_pairs([("00", 3), ("11", 1)]).unwrap();
        assert_eq!(t.shots, 4);
    }

    fn arb_gate(n: usize) -> impl Strategy<Value = Gate> {
        let q = 0..n;
        prop_oneof![
            q.clone().prop_map(Gate::h),
            q.clone().prop_map(Gate::x),
            (q.clone(), -10.0..10.0f64).prop_map(|(q, a)| Gate::rx(q, a)),
            (q.clone(), -10.0..10.0f64).prop_map(|(q, a)| Gate::ry(q, a)),
            (q.clone(), -10.0..10.0f64).prop_map(|(q, a)| Gate::rz(q, a)),
            (q.clone(), 1..n).prop_map(move |(c, d)| Gate::cnot(c, (c + d) % n)),
        ]
    }

    proptest! {
        #[test]
        fn noisy_evolution_preserves_norm(
            gates in proptest::collection::vec(arb_gate(3), 0..40),
            f in 0.8..1.2f64,
            seed in any::<u64>(),
        ) {
            let mut p = DeviceProfile::noiseless("d", 3);
            p.overrotation = Overrotation { h: f, x: f, rx: f, ry: f, rz: f, cnot: f };
            p.depol_1q = 0.3;
            p.depol_2q = 0.3;
            p.crosstalk = vec![0.2; 3];
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut state = QuantumState::zero(3);
            for g in &gates {
                state.apply_scaled(g, f);
                let _ = random_pauli(&mut rng);
                prop_assert!((state.norm_sqr() - 1.0).abs() < 1e-9);
            }
            let c = circuit(3, gates);
            let bits = run_trajectory(&c, &p, &mut rng).unwrap();
            prop_assert_eq!(bits.len(), 3);
        }
    }
}
