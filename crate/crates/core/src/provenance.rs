//! Sealed session records.
//!
//! Hash preimage for every artifact, redacted or not:
//!
//! ```text
//! canonical(public record) ‖ private_commitment ‖ prev_record_hash (absent for genesis)
//! ```
//!
//! where the public record is the session record without `master_seed`,
//! per-circuit seeds and `counts_digest`, and `private_commitment` is the
//! SHA-256 of the canonical encoding of exactly those stripped fields. A full
//! artifact recomputes the commitment from its own private fields; a redacted
//! one carries it. Redaction therefore leaves `record_hash`, the HMAC tag and
//! the RSA signature valid.
//!
//! Canonical encoding is compact JSON with object keys sorted bytewise and
//! numbers rendered as the shortest round-trip decimal.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use hmac::{Hmac, Mac};
use rand::{CryptoRng, RngCore};
use rsa::pkcs1v15;
use rsa::pkcs8::{DecodePrivateKey, DecodePublicKey, EncodePrivateKey, EncodePublicKey, LineEnding};
use rsa::signature::{SignatureEncoding, Signer, Verifier};
use rsa::traits::PublicKeyParts;
use rsa::{RsaPrivateKey, RsaPublicKey};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;
use sha2::{Digest as _, Sha256};

use crate::attest::ChshEvidence;
use crate::circuits::Seed;
use crate::error::{Error, Result};
use crate::features::FeatureVector;

pub const SCHEMA_VERSION: &str = "qdna-session/1";
pub const ARTIFACT_EXTENSION: &str = "qdna.json";
pub const MIN_RSA_BITS: usize = 2048;

type HmacSha256 = Hmac<Sha256>;

fn parse_lower_hex(s: &str, expected_len: Option<usize>) -> std::result::Result<Vec<u8>, String> {
    if expected_len.is_some_and(|n| s.len() != 2 * n) {
        return Err(format!("expected {} hex digits, got {}", 2 * expected_len.unwrap(), s.len()));
    }
    if !s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
        return Err("hex must be lowercase [0-9a-f]".into());
    }
    hex::decode(s).map_err(|e| e.to_string())
}

/// 32-byte SHA-256 / HMAC-SHA256 output, lowercase hex on the wire.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Digest32(pub [u8; 32]);

impl Digest32 {
    pub fn of(bytes: &[u8]) -> Self {
        Digest32(Sha256::digest(bytes).into())
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }
}

impl fmt::Display for Digest32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for Digest32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest32({self})")
    }
}

impl FromStr for Digest32 {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bytes = parse_lower_hex(s, Some(32)).map_err(Error::MalformedArtifact)?;
        let mut out = [0u8; 32];
        out.copy_from_slice(&bytes);
        Ok(Digest32(out))
    }
}

impl Serialize for Digest32 {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Digest32 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Variable-length signature bytes, lowercase hex on the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignatureBytes(pub Vec<u8>);

impl Serialize for SignatureBytes {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(&self.0))
    }
}

impl<'de> Deserialize<'de> for SignatureBytes {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        parse_lower_hex(&s, None)
            .map(SignatureBytes)
            .map_err(serde::de::Error::custom)
    }
}

/// Device and session ids double as path components, so keep them tame.
pub fn valid_id(s: &str) -> bool {
    !s.is_empty()
        && s.len() <= 128
        && !s.starts_with('.')
        && s.bytes().all(|b| b.is_ascii_alphanumeric() || matches!(b, b'_' | b'-' | b'.'))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitEntry {
    pub circuit_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<Seed>,
    pub gate_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionRecord {
    pub schema_version: String,
    pub device_id: String,
    pub session_id: String,
    pub timestamp_utc: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<Seed>,
    pub shots: u64,
    pub circuits: Vec<CircuitEntry>,
    pub features: BTreeMap<String, FeatureVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts_digest: Option<BTreeMap<String, Digest32>>,
    pub chsh: ChshEvidence,
    pub calibration_meta: BTreeMap<String, String>,
}

/// The fields removed by redaction.
#[derive(Debug, Clone, PartialEq, Serialize)]
struct PrivateFields {
    master_seed: Seed,
    circuit_seeds: BTreeMap<String, Seed>,
    counts_digest: BTreeMap<String, Digest32>,
}

impl SessionRecord {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::MalformedArtifact(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("unsupported schema `{}`", self.schema_version));
        }
        if !valid_id(&self.device_id) || !valid_id(&self.session_id) {
            return bad("device_id / session_id must match [A-Za-z0-9._-]+".into());
        }
        if chrono::DateTime::parse_from_rfc3339(&self.timestamp_utc).is_err() {
            return bad(format!("timestamp `{}` is not RFC 3339", self.timestamp_utc));
        }
        let listed: Vec<&str> = self.circuits.iter().map(|c| c.circuit_id.as_str()).collect();
        let featured: Vec<&str> = self.features.keys().map(String::as_str).collect();
        let mut sorted = listed.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != listed.len() || sorted != featured {
            return bad("circuit list does not match feature keys".into());
        }
        if let Some(digests) = &self.counts_digest {
            if digests.keys().any(|k| !self.features.contains_key(k.split('/').next().unwrap_or(k))) {
                return bad("counts digest names an unknown circuit".into());
            }
        }
        Ok(())
    }

    pub fn is_stripped(&self) -> bool {
        self.master_seed.is_none()
            && self.counts_digest.is_none()
            && self.circuits.iter().all(|c| c.seed.is_none())
    }

    fn private_fields(&self) -> Option<PrivateFields> {
        let circuit_seeds = self
            .circuits
            .iter()
            .map(|c| c.seed.map(|s| (c.circuit_id.clone(), s)))
            .collect::<Option<BTreeMap<_, _>>>()?;
        Some(PrivateFields {
            master_seed: self.master_seed?,
            circuit_seeds,
            counts_digest: self.counts_digest.clone()?,
        })
    }

    fn public_view(&self) -> SessionRecord {
        let mut r = self.clone();
        r.master_seed = None;
        r.counts_digest = None;
        for c in &mut r.circuits {
            c.seed = None;
        }
        r
    }
}

fn write_canonical(value: &Value, out: &mut Vec<u8>) {
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort_unstable();
            out.push(b'{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                out.extend(serde_json::to_vec(k).expect("string encodes"));
                out.push(b':');
                write_canonical(&map[k], out);
            }
            out.push(b'}');
        }
        Value::Array(items) => {
            out.push(b'[');
            for (i, v) in items.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_canonical(v, out);
            }
            out.push(b']');
        }
        scalar => out.extend(serde_json::to_vec(scalar).expect("scalar encodes")),
    }
}

/// Canonical encoding of any serializable value. Non-finite floats must be
/// rejected by the caller: serde_json silently maps them to `null`.
pub fn canonical_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let v = serde_json::to_value(value)?;
    let mut out = Vec::new();
    write_canonical(&v, &mut out);
    Ok(out)
}

/// Canonical bytes of a session record: its full content with sorted keys.
pub fn canonical_bytes(record: &SessionRecord) -> Result<Vec<u8>> {
    for (circuit, fv) in &record.features {
        if !fv.all_finite() {
            return Err(Error::NonFinite(format!("features.{circuit}")));
        }
    }
    for (name, v) in [
        ("chsh.s", record.chsh.s),
        ("chsh.sigma_s", record.chsh.sigma_s),
        ("chsh.threshold", record.chsh.threshold),
    ] {
        if !v.is_finite() {
            return Err(Error::NonFinite(name.into()));
        }
    }
    if !record.chsh.correlations().iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("chsh".into()));
    }
    canonical_json(record)
}

/// Commitment over the fields redaction removes. `None` if they are already gone.
pub fn private_commitment_of(record: &SessionRecord) -> Result<Option<Digest32>> {
    match record.private_fields() {
        Some(p) => Ok(Some(Digest32::of(&canonical_json(&p)?))),
        None => Ok(None),
    }
}

fn hash_preimage(
    record: &SessionRecord,
    commitment: &Digest32,
    prev: Option<&Digest32>,
) -> Result<Vec<u8>> {
    let mut bytes = canonical_bytes(&record.public_view())?;
    bytes.extend_from_slice(commitment.as_bytes());
    if let Some(p) = prev {
        bytes.extend_from_slice(p.as_bytes());
    }
    Ok(bytes)
}

/// 256-bit HMAC secret. Key file: 64 lowercase hex digits.
#[derive(Clone, PartialEq, Eq)]
pub struct HmacKey([u8; 32]);

impl fmt::Debug for HmacKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("HmacKey(..)")
    }
}

impl HmacKey {
    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        HmacKey(bytes)
    }

    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut k = [0u8; 32];
        rng.fill_bytes(&mut k);
        HmacKey(k)
    }

    pub fn from_hex(text: &str) -> Result<Self> {
        let bytes = parse_lower_hex(text.trim(), Some(32)).map_err(Error::Key)?;
        let mut k = [0u8; 32];
        k.copy_from_slice(&bytes);
        Ok(HmacKey(k))
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn tag(&self, message: &[u8]) -> Digest32 {
        let mut mac = HmacSha256::new_from_slice(&self.0).expect("hmac accepts any key length");
        mac.update(message);
        Digest32(mac.finalize().into_bytes().into())
    }

    fn check(&self, message: &[u8], tag: &Digest32) -> bool {
        let mut mac = HmacSha256::new_from_slice(&self.0).expect("hmac accepts any key length");
        mac.update(message);
        mac.verify_slice(tag.as_bytes()).is_ok()
    }
}

/// Short fingerprint of a public key: first 16 hex digits of SHA-256(SPKI DER).
pub fn key_id(public: &RsaPublicKey) -> Result<String> {
    let der = public
        .to_public_key_der()
        .map_err(|e| Error::Key(e.to_string()))?;
    Ok(hex::encode(Sha256::digest(der.as_bytes()))[..16].to_string())
}

#[derive(Clone)]
pub struct SigningKey {
    private: RsaPrivateKey,
    key_id: String,
}

impl fmt::Debug for SigningKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SigningKey({})", self.key_id)
    }
}

impl SigningKey {
    pub fn from_rsa(private: RsaPrivateKey) -> Result<Self> {
        let bits = private.n().bits();
        if bits < MIN_RSA_BITS {
            return Err(Error::Key(format!(
                "RSA modulus is {bits} bits, need at least {MIN_RSA_BITS}"
            )));
        }
        let key_id = key_id(&private.to_public_key())?;
        Ok(SigningKey { private, key_id })
    }

    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R, bits: usize) -> Result<Self> {
        let private = RsaPrivateKey::new(rng, bits).map_err(|e| Error::Key(e.to_string()))?;
        Self::from_rsa(private)
    }

    pub fn from_pem(pem: &str) -> Result<Self> {
        let private =
            RsaPrivateKey::from_pkcs8_pem(pem).map_err(|e| Error::Key(e.to_string()))?;
        Self::from_rsa(private)
    }

    pub fn to_pem(&self) -> Result<String> {
        self.private
            .to_pkcs8_pem(LineEnding::LF)
            .map(|z| z.to_string())
            .map_err(|e| Error::Key(e.to_string()))
    }

    pub fn key_id(&self) -> &str {
        &self.key_id
    }

    pub fn verifying_key(&self) -> VerifyingKey {
        VerifyingKey {
            public: self.private.to_public_key(),
            key_id: self.key_id.clone(),
        }
    }

    fn sign(&self, message: &[u8]) -> Vec<u8> {
        pkcs1v15::SigningKey::<Sha256>::new(self.private.clone())
            .sign(message)
            .to_vec()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyingKey {
    public: RsaPublicKey,
    key_id: String,
}

impl VerifyingKey {
    pub fn from_pem(pem: &str) -> Result<Self> {
        let public =
            RsaPublicKey::from_public_key_pem(pem).map_err(|e| Error::Key(e.to_string()))?;
        let key_id = key_id(&public)?;
        Ok(VerifyingKey { public, key_id })
    }

    pub fn to_pem(&self) -> Result<String> {
        self.public
            .to_public_key_pem(LineEnding::LF)
            .map_err(|e| Error::Key(e.to_string()))
    }

    pub fn key_id(&self) -> &str {
        &self.key_id
    }

    fn verify(&self, message: &[u8], signature: &[u8]) -> bool {
        let Ok(sig) = pkcs1v15::Signature::try_from(signature) else {
            return false;
        };
        pkcs1v15::VerifyingKey::<Sha256>::new(self.public.clone())
            .verify(message, &sig)
            .is_ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProvenanceArtifact {
    pub record: SessionRecord,
    pub prev_record_hash: Option<Digest32>,
    pub record_hash: Digest32,
    pub hmac_tag: Digest32,
    pub signature: SignatureBytes,
    pub signer_key_id: String,
    pub redacted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub private_commitment: Option<Digest32>,
}

impl ProvenanceArtifact {
    /// On-disk encoding: pretty JSON plus a trailing newline.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = serde_json::to_vec_pretty(self).expect("artifact serializes");
        b.push(b'\n');
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        serde_json::from_slice(bytes).map_err(|e| Error::MalformedArtifact(e.to_string()))
    }

    /// Commitment used in the hash preimage, whichever mode the artifact is in.
    fn effective_commitment(&self) -> std::result::Result<Digest32, String> {
        match (self.redacted, self.private_commitment) {
            (true, Some(c)) if self.record.is_stripped() => Ok(c),
            (true, Some(_)) => Err("redacted artifact still carries private fields".into()),
            (true, None) => Err("redacted artifact lacks private_commitment".into()),
            (false, Some(_)) => Err("unredacted artifact carries private_commitment".into()),
            (false, None) => private_commitment_of(&self.record)
                .map_err(|e| e.to_string())?
                .ok_or_else(|| "unredacted artifact is missing private fields".into()),
        }
    }

    pub fn recompute_hash(&self) -> std::result::Result<Digest32, String> {
        let commitment = self.effective_commitment()?;
        hash_preimage(&self.record, &commitment, self.prev_record_hash.as_ref())
            .map(|b| Digest32::of(&b))
            .map_err(|e| e.to_string())
    }
}

pub fn seal(
    record: SessionRecord,
    prev_hash: Option<Digest32>,
    hmac_key: &HmacKey,
    signing_key: &SigningKey,
) -> Result<ProvenanceArtifact> {
    record.validate()?;
    let commitment = private_commitment_of(&record)?.ok_or_else(|| {
        Error::InvalidArgument("record lacks seeds or counts digests; cannot seal".into())
    })?;
    let preimage = hash_preimage(&record, &commitment, prev_hash.as_ref())?;
    let record_hash = Digest32::of(&preimage);
    Ok(ProvenanceArtifact {
        hmac_tag: hmac_key.tag(&preimage),
        signature: SignatureBytes(signing_key.sign(record_hash.as_bytes())),
        signer_key_id: signing_key.key_id().to_string(),
        record,
        prev_record_hash: prev_hash,
        record_hash,
        redacted: false,
        private_commitment: None,
    })
}

/// Public-mode copy: seeds and counts digests replaced by their commitment.
pub fn redact(artifact: &ProvenanceArtifact) -> Result<ProvenanceArtifact> {
    if artifact.redacted {
        return Err(Error::AlreadyRedacted);
    }
    let commitment = private_commitment_of(&artifact.record)?
        .ok_or_else(|| Error::MalformedArtifact("record has no private fields".into()))?;
    let mut out = artifact.clone();
    out.record = artifact.record.public_view();
    out.redacted = true;
    out.private_commitment = Some(commitment);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Ok,
    Fail,
    Skipped,
}

impl CheckStatus {
    fn from_bool(ok: bool) -> Self {
        if ok {
            CheckStatus::Ok
        } else {
            CheckStatus::Fail
        }
    }

    pub fn is_fail(self) -> bool {
        self == CheckStatus::Fail
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub device_id: String,
    pub session_id: String,
    pub record_hash: String,
    /// File bytes are exactly the canonical re-encoding (byte-level checks only).
    pub encoding_ok: CheckStatus,
    pub schema_ok: CheckStatus,
    pub hash_ok: CheckStatus,
    pub hmac_ok: CheckStatus,
    pub signature_ok: CheckStatus,
    pub chsh_recheck_ok: CheckStatus,
    pub chain_link_ok: CheckStatus,
    pub details: BTreeMap<String, String>,
    pub passed: bool,
}

impl VerificationReport {
    pub fn checks(&self) -> [(&'static str, CheckStatus); 7] {
        [
            ("encoding", self.encoding_ok),
            ("schema", self.schema_ok),
            ("hash", self.hash_ok),
            ("hmac", self.hmac_ok),
            ("signature", self.signature_ok),
            ("chsh_recheck", self.chsh_recheck_ok),
            ("chain_link", self.chain_link_ok),
        ]
    }

    pub fn failed_checks(&self) -> Vec<&'static str> {
        self.checks()
            .into_iter()
            .filter(|(_, s)| s.is_fail())
            .map(|(n, _)| n)
            .collect()
    }

    fn finish(mut self) -> Self {
        self.passed = self.failed_checks().is_empty();
        self
    }
}

/// Independent recomputation of hash, HMAC (when keyed), signature, CHSH and link shape.
pub fn verify(
    artifact: &ProvenanceArtifact,
    public_key: &VerifyingKey,
    hmac_key: Option<&HmacKey>,
) -> VerificationReport {
    let mut details = BTreeMap::new();

    let schema_ok = match artifact.record.validate() {
        Ok(()) => CheckStatus::Ok,
        Err(e) => {
            details.insert("schema".into(), e.to_string());
            CheckStatus::Fail
        }
    };

    let preimage = artifact.effective_commitment().and_then(|c| {
        hash_preimage(&artifact.record, &c, artifact.prev_record_hash.as_ref())
            .map_err(|e| e.to_string())
    });
    let hash_ok = match &preimage {
        Ok(bytes) => {
            let ok = Digest32::of(bytes) == artifact.record_hash;
            if !ok {
                details.insert("hash".into(), "record_hash does not match content".into());
            }
            CheckStatus::from_bool(ok)
        }
        Err(msg) => {
            details.insert("hash".into(), msg.clone());
            CheckStatus::Fail
        }
    };

    let hmac_ok = match (hmac_key, &preimage) {
        (None, _) => {
            details.insert("hmac".into(), "skipped: no HMAC key supplied".into());
            CheckStatus::Skipped
        }
        (Some(key), Ok(bytes)) => {
            let ok = key.check(bytes, &artifact.hmac_tag);
            if !ok {
                details.insert("hmac".into(), "HMAC tag mismatch".into());
            }
            CheckStatus::from_bool(ok)
        }
        (Some(_), Err(_)) => {
            details.insert("hmac".into(), "no recomputable preimage".into());
            CheckStatus::Fail
        }
    };

    let signature_ok = if artifact.signer_key_id != public_key.key_id() {
        details.insert(
            "signature".into(),
            format!(
                "signer_key_id {} does not match supplied key {}",
                artifact.signer_key_id,
                public_key.key_id()
            ),
        );
        CheckStatus::Fail
    } else {
        let ok = public_key.verify(artifact.record_hash.as_bytes(), &artifact.signature.0);
        if !ok {
            details.insert("signature".into(), "RSA-SHA256 signature invalid".into());
        }
        CheckStatus::from_bool(ok)
    };

    let chsh_recheck_ok = match artifact.record.chsh.recheck() {
        Ok(()) => CheckStatus::Ok,
        Err(msg) => {
            details.insert("chsh_recheck".into(), msg);
            CheckStatus::Fail
        }
    };

    let chain_link_ok = if artifact.prev_record_hash == Some(artifact.record_hash) {
        details.insert("chain_link".into(), "artifact links to itself".into());
        CheckStatus::Fail
    } else {
        CheckStatus::Ok
    };

    VerificationReport {
        device_id: artifact.record.device_id.clone(),
        session_id: artifact.record.session_id.clone(),
        record_hash: artifact.record_hash.to_string(),
        encoding_ok: CheckStatus::Skipped,
        schema_ok,
        hash_ok,
        hmac_ok,
        signature_ok,
        chsh_recheck_ok,
        chain_link_ok,
        details,
        passed: false,
    }
    .finish()
}

/// Byte-level verification of an artifact file. Unparseable input is an error;
/// parseable but non-canonical bytes fail the encoding check.
pub fn verify_file_bytes(
    bytes: &[u8],
    public_key: &VerifyingKey,
    hmac_key: Option<&HmacKey>,
) -> Result<VerificationReport> {
    let artifact = ProvenanceArtifact::from_bytes(bytes)?;
    let mut report = verify(&artifact, public_key, hmac_key);
    let canonical = artifact.to_bytes() == bytes;
    if !canonical {
        report
            .details
            .insert("encoding".into(), "bytes differ from canonical encoding".into());
    }
    report.encoding_ok = CheckStatus::from_bool(canonical);
    Ok(report.finish())
}

/// Checks `artifact` against the chain head it claims to extend.
pub fn check_link(artifact: &ProvenanceArtifact, expected_prev: Option<&Digest32>) -> bool {
    artifact.prev_record_hash.as_ref() == expected_prev
}
