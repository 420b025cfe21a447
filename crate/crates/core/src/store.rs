//! Append-only artifact store.
//!
//! Layout:
//!
//! ```text
//! <root>/<device_id>/index.txt                 session_id \t record_hash \t relative path
//! <root>/<device_id>/<session_id>.qdna.json    artifact bytes, never rewritten
//! ```
//!
//! One writer per device chain. Readers never lock.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::provenance::{
    valid_id, verify, CheckStatus, Digest32, HmacKey, ProvenanceArtifact, VerifyingKey,
    ARTIFACT_EXTENSION,
};

pub const INDEX_FILE: &str = "index.txt";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub session_id: String,
    pub record_hash: Digest32,
    /// Relative to the store root, `/`-separated.
    pub path: String,
}

impl IndexEntry {
    fn to_line(&self) -> String {
        format!("{}\t{}\t{}\n", self.session_id, self.record_hash, self.path)
    }

    fn parse(line: &str) -> std::result::Result<Self, String> {
        let mut parts = line.split('\t');
        let (Some(session_id), Some(hash), Some(path), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(format!("index line has wrong field count: {line:?}"));
        };
        Ok(IndexEntry {
            session_id: session_id.to_string(),
            record_hash: hash.parse().map_err(|e: Error| e.to_string())?,
            path: path.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditFinding {
    pub index: usize,
    pub session_id: String,
    pub problem: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub device_id: String,
    pub length: usize,
    pub clean: bool,
    pub first_break: Option<usize>,
    pub head_hash: Option<Digest32>,
    pub findings: Vec<AuditFinding>,
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

fn check_id(kind: &str, id: &str) -> Result<()> {
    if valid_id(id) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("invalid {kind} `{id}`")))
    }
}

impl Store {
    /// Opens (creating if needed) a store rooted at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(Store { root })
    }

    /// Opens an existing store without creating anything.
    pub fn open_existing(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        if !root.is_dir() {
            return Err(Error::NotFound(format!("store root {}", root.display())));
        }
        Ok(Store { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn device_dir(&self, device_id: &str) -> PathBuf {
        self.root.join(device_id)
    }

    fn index_path(&self, device_id: &str) -> PathBuf {
        self.device_dir(device_id).join(INDEX_FILE)
    }

    pub fn artifact_rel_path(device_id: &str, session_id: &str) -> String {
        format!("{device_id}/{session_id}.{ARTIFACT_EXTENSION}")
    }

    /// Devices with an index file, sorted.
    pub fn devices(&self) -> Result<Vec<String>> {
        let entries = fs::read_dir(&self.root).map_err(|e| Error::io(&self.root, e))?;
        let mut out = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&self.root, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if valid_id(&name) && entry.path().join(INDEX_FILE).is_file() {
                out.push(name);
            }
        }
        out.sort();
        Ok(out)
    }

    pub fn index(&self, device_id: &str) -> Result<Vec<IndexEntry>> {
        check_id("device id", device_id)?;
        let path = self.index_path(device_id);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(Error::io(&path, e)),
        };
        text.lines()
            .enumerate()
            .map(|(i, line)| {
                IndexEntry::parse(line).map_err(|m| {
                    Error::MalformedArtifact(format!("{}:{}: {m}", path.display(), i + 1))
                })
            })
            .collect()
    }

    pub fn head(&self, device_id: &str) -> Result<Option<Digest32>> {
        Ok(self.index(device_id)?.last().map(|e| e.record_hash))
    }

    /// Admits `artifact` if it verifies against `public_key` (and `hmac_key`
    /// when given) and extends the device head. Returns its chain position.
    pub fn append(
        &self,
        artifact: &ProvenanceArtifact,
        public_key: &VerifyingKey,
        hmac_key: Option<&HmacKey>,
    ) -> Result<usize> {
        let device = &artifact.record.device_id;
        let session = &artifact.record.session_id;
        check_id("device id", device)?;
        check_id("session id", session)?;

        let report = verify(artifact, public_key, hmac_key);
        if !report.passed {
            let failed = report.failed_checks();
            let why: Vec<String> = failed
                .iter()
                .map(|c| match report.details.get(*c) {
                    Some(d) => format!("{c}: {d}"),
                    None => c.to_string(),
                })
                .collect();
            return Err(Error::Rejected(why.join("; ")));
        }

        let index = self.index(device)?;
        if index.iter().any(|e| &e.session_id == session) {
            return Err(Error::DuplicateSession {
                device: device.clone(),
                session: session.clone(),
            });
        }
        let head = index.last().map(|e| e.record_hash);
        if artifact.prev_record_hash != head {
            let show = |d: Option<Digest32>| d.map_or("null".to_string(), |d| d.to_string());
            return Err(Error::ChainLink {
                device: device.clone(),
                expected: show(head),
                actual: show(artifact.prev_record_hash),
            });
        }

        let dir = self.device_dir(device);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let rel = Self::artifact_rel_path(device, session);
        let file_path = self.root.join(&rel);
        let mut file = match OpenOptions::new().write(true).create_new(true).open(&file_path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(Error::DuplicateSession {
                    device: device.clone(),
                    session: session.clone(),
                })
            }
            Err(e) => return Err(Error::io(&file_path, e)),
        };
        file.write_all(&artifact.to_bytes())
            .and_then(|_| file.sync_all())
            .map_err(|e| Error::io(&file_path, e))?;

        let entry = IndexEntry {
            session_id: session.clone(),
            record_hash: artifact.record_hash,
            path: rel,
        };
        let index_path = self.index_path(device);
        OpenOptions::new()
            .create(true)
            .append(true)
            .open(&index_path)
            .and_then(|mut f| {
                f.write_all(entry.to_line().as_bytes())?;
                f.sync_all()
            })
            .map_err(|e| Error::io(&index_path, e))?;
        Ok(index.len())
    }

    fn entry(&self, device_id: &str, session_id: &str) -> Result<IndexEntry> {
        check_id("session id", session_id)?;
        self.index(device_id)?
            .into_iter()
            .find(|e| e.session_id == session_id)
            .ok_or_else(|| Error::NotFound(format!("session {device_id}/{session_id}")))
    }

    /// Stored artifact bytes, exactly as written.
    pub fn get_bytes(&self, device_id: &str, session_id: &str) -> Result<Vec<u8>> {
        let entry = self.entry(device_id, session_id)?;
        let path = self.root.join(&entry.path);
        fs::read(&path).map_err(|e| Error::io(&path, e))
    }

    pub fn get(&self, device_id: &str, session_id: &str) -> Result<ProvenanceArtifact> {
        ProvenanceArtifact::from_bytes(&self.get_bytes(device_id, session_id)?)
    }

    /// All artifacts of a device in chain order.
    pub fn load_chain(&self, device_id: &str) -> Result<Vec<ProvenanceArtifact>> {
        self.index(device_id)?
            .iter()
            .map(|e| {
                let path = self.root.join(&e.path);
                let bytes = fs::read(&path).map_err(|err| Error::io(&path, err))?;
                ProvenanceArtifact::from_bytes(&bytes)
            })
            .collect()
    }

    /// Walks the chain from genesis, recomputing every hash from file bytes.
    /// Signatures are also checked when `public_key` is given.
    pub fn audit_chain(
        &self,
        device_id: &str,
        public_key: Option<&VerifyingKey>,
    ) -> Result<AuditReport> {
        let index = self.index(device_id)?;
        let mut findings = Vec::new();
        let mut prev: Option<Digest32> = None;

        for (i, entry) in index.iter().enumerate() {
            let mut flag = |problem: String| {
                findings.push(AuditFinding {
                    index: i,
                    session_id: entry.session_id.clone(),
                    problem,
                })
            };
            if entry.path != Self::artifact_rel_path(device_id, &entry.session_id) {
                flag(format!("unexpected artifact path {}", entry.path));
            }
            let path = self.root.join(&entry.path);
            let bytes = match fs::read(&path) {
                Ok(b) => b,
                Err(e) => {
                    flag(format!("cannot read artifact: {e}"));
                    prev = Some(entry.record_hash);
                    continue;
                }
            };
            match ProvenanceArtifact::from_bytes(&bytes) {
                Err(e) => flag(format!("unparseable artifact: {e}")),
                Ok(a) => {
                    if a.to_bytes() != bytes {
                        flag("artifact bytes are not canonically encoded".into());
                    }
                    if a.record.device_id != device_id || a.record.session_id != entry.session_id {
                        flag("artifact identity does not match index".into());
                    }
                    match a.recompute_hash() {
                        Ok(h) if h == a.record_hash => {}
                        Ok(_) => flag("record_hash does not match content".into()),
                        Err(m) => flag(format!("record_hash not recomputable: {m}")),
                    }
                    if a.record_hash != entry.record_hash {
                        flag("record_hash differs from index".into());
                    }
                    if a.prev_record_hash != prev {
                        flag("prev_record_hash does not link to previous entry".into());
                    }
                    if let Some(pk) = public_key {
                        if verify(&a, pk, None).signature_ok == CheckStatus::Fail {
                            flag("signature invalid".into());
                        }
                    }
                }
            }
            prev = Some(entry.record_hash);
        }

        let first_break = findings.first().map(|f| f.index);
        Ok(AuditReport {
            device_id: device_id.to_string(),
            length: index.len(),
            clean: findings.is_empty(),
            first_break,
            head_hash: index.last().map(|e| e.record_hash),
            findings,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attest::attest_session;
    use crate::circuits::Seed;
    use crate::features::FeatureVector;
    use crate::provenance::{seal, CircuitEntry, SessionRecord, SigningKey, SCHEMA_VERSION};
    use crate::sim::CountsTable;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use std::sync::OnceLock;

    fn keys() -> &'static (SigningKey, HmacKey) {
        static KEYS: OnceLock<(SigningKey, HmacKey)> = OnceLock::new();
        KEYS.get_or_init(|| {
            let mut rng = ChaCha20Rng::seed_from_u64(11);
            (
                SigningKey::generate(&mut rng, 2048).unwrap(),
                HmacKey::generate(&mut rng),
            )
        })
    }

    fn record(session: &str, entropy: f64) -> SessionRecord {
        let t = CountsTable::from_pairs([("00", 80), ("11", 20)]).unwrap();
        let anti = CountsTable::from_pairs([("01", 80), ("10", 20)]).unwrap();
        let fv = FeatureVector {
            p0: 0.8,
            p1: 0.2,
            entropy,
            entropy_norm: entropy / 4f64.ln(),
            perplexity: entropy.exp(),
            gini: 0.32,
            parity_bias: 1.0,
            bernoulli_var: 0.16,
            tv_uniform: 0.5,
            kl_uniform: 4f64.ln() - entropy,
            js_uniform: 0.1,
            support: 2,
        };
        SessionRecord {
            schema_version: SCHEMA_VERSION.into(),
            device_id: "sim_torino".into(),
            session_id: session.into(),
            timestamp_utc: "2025-10-12T08:00:00Z".into(),
            master_seed: Some(Seed(5)),
            shots: 100,
            circuits: vec![CircuitEntry {
                circuit_id: "pm".into(),
                seed: Some(Seed(9)),
                gate_count: 2,
            }],
            features: [("pm".to_string(), fv)].into(),
            counts_digest: Some([("pm".to_string(), Digest32(t.digest()))].into()),
            chsh: attest_session(&[t.clone(), t.clone(), t, anti], 2.0).unwrap(),
            calibration_meta: Default::default(),
        }
    }

    fn build_chain(store: &Store, n: usize) -> Vec<ProvenanceArtifact> {
        let (sk, hk) = keys();
        let mut out = Vec::new();
        let mut prev = None;
        for i in 0..n {
            let a = seal(record(&format!("s{i:03}"), 0.5 + i as f64 * 0.01), prev, hk, sk).unwrap();
            assert_eq!(store.append(&a, &sk.verifying_key(), Some(hk)).unwrap(), i);
            prev = Some(a.record_hash);
            out.push(a);
        }
        out
    }

    #[test]
    fn append_get_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let chain = build_chain(&store, 3);
        let bytes = store.get_bytes("sim_torino", "s001").unwrap();
        assert_eq!(bytes, chain[1].to_bytes());
        assert_eq!(store.get("sim_torino", "s001").unwrap(), chain[1]);
        let before = fs::read(store.index_path("sim_torino")).unwrap();
        let _ = store.get("sim_torino", "s002").unwrap();
        assert_eq!(fs::read(store.index_path("sim_torino")).unwrap(), before);
        assert!(matches!(store.get("sim_torino", "nope"), Err(Error::NotFound(_))));
        assert_eq!(store.devices().unwrap(), vec!["sim_torino".to_string()]);
        // chain linkage
        for pair in chain.windows(2) {
            assert_eq!(pair[1].prev_record_hash, Some(pair[0].record_hash));
        }
        assert_eq!(store.head("sim_torino").unwrap(), Some(chain[2].record_hash));
    }

    #[test]
    fn stale_prev_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        build_chain(&store, 2);
        let (sk, hk) = keys();
        let stale = seal(record("s100", 0.3), None, hk, sk).unwrap();
        assert!(matches!(
            store.append(&stale, &sk.verifying_key(), None),
            Err(Error::ChainLink { .. })
        ));
        assert_eq!(store.index("sim_torino").unwrap().len(), 2);
    }

    #[test]
    fn duplicate_and_invalid_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let chain = build_chain(&store, 1);
        let (sk, hk) = keys();
        let dup = seal(record("s000", 0.9), Some(chain[0].record_hash), hk, sk).unwrap();
        assert!(matches!(
            store.append(&dup, &sk.verifying_key(), None),
            Err(Error::DuplicateSession { .. })
        ));
        let mut bad = seal(record("s001", 0.9), Some(chain[0].record_hash), hk, sk).unwrap();
        bad.record.features.get_mut("pm").unwrap().p0 = 0.7;
        assert!(matches!(
            store.append(&bad, &sk.verifying_key(), None),
            Err(Error::Rejected(_))
        ));
        // a good artifact still appends afterwards: linkage and verification are independent gates
        let good = seal(record("s001", 0.9), Some(chain[0].record_hash), hk, sk).unwrap();
        assert_eq!(store.append(&good, &sk.verifying_key(), None).unwrap(), 1);
    }

    #[test]
    fn audit_localizes_edit() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        build_chain(&store, 6);
        let vk = keys().0.verifying_key();
        let clean = store.audit_chain("sim_torino", Some(&vk)).unwrap();
        assert!(clean.clean && clean.length == 6);

        let path = dir.path().join(Store::artifact_rel_path("sim_torino", "s003"));
        let text = fs::read_to_string(&path).unwrap();
        fs::write(&path, text.replacen("\"gini\": 0.32", "\"gini\": 0.33", 1)).unwrap();
        let report = store.audit_chain("sim_torino", Some(&vk)).unwrap();
        assert!(!report.clean);
        assert_eq!(report.first_break, Some(3));
    }

    #[test]
    fn audit_empty_chain() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let r = store.audit_chain("sim_brisbane", None).unwrap();
        assert!(r.clean && r.length == 0 && r.first_break.is_none());
    }

    #[test]
    fn path_traversal_ids_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        assert!(store.get("../etc", "passwd").is_err());
        assert!(store.get("sim_torino", "../x").is_err());
    }
}
