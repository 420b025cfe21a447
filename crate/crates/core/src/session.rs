//! One probing session: suite → execution → attestation → fingerprint → record.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::attest::{attest_session, CHSH_CLASSICAL_BOUND};
use crate::circuits::{
    build_chsh_settings, build_suite_with, derive_circuit_seed, Seed, SuiteConfig, CHSH_BELL,
};
use crate::error::{Error, Result};
use crate::features::{distribution_from_counts, fingerprint, FeatureFile};
use crate::provenance::{
    seal, valid_id, CircuitEntry, Digest32, HmacKey, ProvenanceArtifact, SessionRecord,
    SigningKey, SCHEMA_VERSION,
};
use crate::sim::{execute_circuit, CountsTable, DeviceProfile};
use crate::store::Store;

pub const DEFAULT_SHOTS: u64 = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub session_id: String,
    pub master_seed: Seed,
    pub shots: u64,
    pub chsh_shots: u64,
    pub chsh_threshold: f64,
    /// RFC 3339 UTC time written into the record.
    pub timestamp_utc: String,
    /// Free-form cadence label, e.g. `8h`.
    pub interval_label: Option<String>,
}

impl SessionConfig {
    pub fn new(session_id: &str, master_seed: Seed, timestamp_utc: &str) -> Self {
        SessionConfig {
            session_id: session_id.to_string(),
            master_seed,
            shots: DEFAULT_SHOTS,
            chsh_shots: DEFAULT_SHOTS,
            chsh_threshold: CHSH_CLASSICAL_BOUND,
            timestamp_utc: timestamp_utc.to_string(),
            interval_label: None,
        }
    }
}

/// Shot-sampling seed for one device session. Circuits come from the master
/// seed alone so every session and device runs the same suite.
pub fn execution_seed(master: Seed, device_id: &str, session_id: &str) -> Seed {
    derive_circuit_seed(master, &format!("exec/{device_id}/{session_id}"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionOutput {
    pub record: SessionRecord,
    /// Raw counts keyed by circuit label, CHSH settings included.
    pub counts: BTreeMap<String, CountsTable>,
}

impl SessionOutput {
    pub fn feature_file(&self) -> FeatureFile {
        feature_file_of(&self.record)
    }
}

pub fn feature_file_of(record: &SessionRecord) -> FeatureFile {
    FeatureFile {
        device_id: record.device_id.clone(),
        session_id: record.session_id.clone(),
        timestamp_utc: record.timestamp_utc.clone(),
        features: record.features.clone(),
    }
}

pub fn run_session(profile: &DeviceProfile, cfg: &SessionConfig) -> Result<SessionOutput> {
    run_session_with(profile, cfg, &SuiteConfig::default())
}

pub fn run_session_with(
    profile: &DeviceProfile,
    cfg: &SessionConfig,
    suite_cfg: &SuiteConfig,
) -> Result<SessionOutput> {
    profile.validate()?;
    if !valid_id(&profile.device_id) || !valid_id(&cfg.session_id) {
        return Err(Error::InvalidArgument(
            "device and session ids must match [A-Za-z0-9._-]+".into(),
        ));
    }
    if cfg.shots == 0 || cfg.chsh_shots == 0 {
        return Err(Error::InvalidArgument("shots must be >= 1".into()));
    }
    let suite = build_suite_with(profile.n_qubits, cfg.master_seed, suite_cfg)?;
    let exec = execution_seed(cfg.master_seed, &profile.device_id, &cfg.session_id);

    let mut counts = BTreeMap::new();
    let mut features = BTreeMap::new();
    let mut circuits = Vec::new();
    for c in &suite {
        let table = execute_circuit(c, profile, cfg.shots, exec)?;
        features.insert(c.circuit_id.clone(), fingerprint(&distribution_from_counts(&table)?));
        counts.insert(c.label(), table);
        circuits.push(CircuitEntry {
            circuit_id: c.circuit_id.clone(),
            seed: Some(c.seed),
            gate_count: c.gates.len() as u64,
        });
    }

    let bell = suite
        .iter()
        .find(|c| c.circuit_id == CHSH_BELL)
        .expect("suite contains the Bell circuit");
    let settings = build_chsh_settings(bell)?;
    let mut tables = Vec::with_capacity(4);
    for s in &settings {
        let t = execute_circuit(s, profile, cfg.chsh_shots, exec)?;
        counts.insert(s.label(), t.clone());
        tables.push(t);
    }
    let tables: [CountsTable; 4] = tables.try_into().expect("four settings");
    let chsh = attest_session(&tables, cfg.chsh_threshold)?;

    let mut calibration_meta = profile.calibration_map();
    calibration_meta.insert("processor".into(), profile.device_id.clone());
    calibration_meta.insert("tool_version".into(), env!("CARGO_PKG_VERSION").into());
    calibration_meta.insert("chsh_shots".into(), cfg.chsh_shots.to_string());
    if let Some(label) = &cfg.interval_label {
        calibration_meta.insert("interval".into(), label.clone());
    }

    let record = SessionRecord {
        schema_version: SCHEMA_VERSION.into(),
        device_id: profile.device_id.clone(),
        session_id: cfg.session_id.clone(),
        timestamp_utc: cfg.timestamp_utc.clone(),
        master_seed: Some(cfg.master_seed),
        shots: cfg.shots,
        circuits,
        features,
        counts_digest: Some(
            counts
                .iter()
                .map(|(k, t)| (k.clone(), Digest32(t.digest())))
                .collect(),
        ),
        chsh,
        calibration_meta,
    };
    record.validate()?;
    Ok(SessionOutput { record, counts })
}

/// Runs a session, seals it onto the device's chain head and appends it.
pub fn record_session(
    store: &Store,
    profile: &DeviceProfile,
    cfg: &SessionConfig,
    hmac_key: &HmacKey,
    signing_key: &SigningKey,
) -> Result<(ProvenanceArtifact, usize)> {
    if store
        .index(&profile.device_id)?
        .iter()
        .any(|e| e.session_id == cfg.session_id)
    {
        return Err(Error::DuplicateSession {
            device: profile.device_id.clone(),
            session: cfg.session_id.clone(),
        });
    }
    let out = run_session(profile, cfg)?;
    let prev = store.head(&profile.device_id)?;
    let artifact = seal(out.record, prev, hmac_key, signing_key)?;
    let pos = store.append(&artifact, &signing_key.verifying_key(), Some(hmac_key))?;
    Ok((artifact, pos))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::SUITE_IDS;

    fn cfg(session: &str) -> SessionConfig {
        SessionConfig {
            shots: 128,
            chsh_shots: 256,
            ..SessionConfig::new(session, Seed(42), "2025-10-12T08:00:00Z")
        }
    }

    #[test]
    fn session_covers_suite_and_chsh() {
        let p = DeviceProfile::fixture("sim_torino").unwrap();
        let out = run_session(&p, &cfg("s001")).unwrap();
        assert_eq!(out.record.features.len(), 12);
        assert!(SUITE_IDS.iter().all(|id| out.record.features.contains_key(*id)));
        assert_eq!(out.counts.len(), 16);
        assert_eq!(out.record.counts_digest.as_ref().unwrap().len(), 16);
        assert_eq!(out.record.chsh.shots_per_setting, 256);
        assert!(out.record.chsh.recheck().is_ok());
    }

    #[test]
    fn deterministic_and_session_dependent() {
        let p = DeviceProfile::fixture("sim_brisbane").unwrap();
        let a = run_session(&p, &cfg("s001")).unwrap();
        let b = run_session(&p, &cfg("s001")).unwrap();
        assert_eq!(a, b);
        let c = run_session(&p, &cfg("s002")).unwrap();
        assert_ne!(a.counts, c.counts);
        // same circuits regardless of session
        assert_eq!(a.record.circuits, c.record.circuits);
    }

    #[test]
    fn bad_ids_rejected() {
        let p = DeviceProfile::fixture("sim_torino").unwrap();
        assert!(run_session(&p, &cfg("../up")).is_err());
    }
}
