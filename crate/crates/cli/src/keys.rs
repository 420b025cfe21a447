//! Key files: `hmac.key` (hex), `signing_key.pem` (PKCS#8), `signing_pub.pem` (SPKI).

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use serde_json::json;

use qdna_core::provenance::{HmacKey, SigningKey, VerifyingKey, MIN_RSA_BITS};

use crate::{exit, Failure};

pub const HMAC_FILE: &str = "hmac.key";
pub const SIGNING_FILE: &str = "signing_key.pem";
pub const PUBLIC_FILE: &str = "signing_pub.pem";

fn create_new(path: &Path, contents: &str, private: bool) -> anyhow::Result<()> {
    let mut opts = OpenOptions::new();
    opts.write(true).create_new(true);
    #[cfg(unix)]
    if private {
        use std::os::unix::fs::OpenOptionsExt;
        opts.mode(0o600);
    }
    #[cfg(not(unix))]
    let _ = private;
    let mut f = opts
        .open(path)
        .with_context(|| format!("creating {}", path.display()))?;
    f.write_all(contents.as_bytes())
        .with_context(|| format!("writing {}", path.display()))?;
    f.sync_all().ok();
    Ok(())
}

/// Writes all three files into `dir`; refuses if any of them already exists.
pub fn generate(dir: &Path, bits: usize) -> Result<serde_json::Value, Failure> {
    if bits < MIN_RSA_BITS {
        return Err(Failure::new(
            exit::BAD_ARGS,
            anyhow!("--bits must be at least {MIN_RSA_BITS}"),
        ));
    }
    let paths: Vec<PathBuf> = [HMAC_FILE, SIGNING_FILE, PUBLIC_FILE]
        .iter()
        .map(|f| dir.join(f))
        .collect();
    if let Some(existing) = paths.iter().find(|p| p.exists()) {
        return Err(Failure::new(
            exit::IO,
            anyhow!("{} already exists; refusing to overwrite", existing.display()),
        ));
    }
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;

    let mut rng = rand::rngs::OsRng;
    let hmac = HmacKey::generate(&mut rng);
    let sk = SigningKey::generate(&mut rng, bits)?;
    create_new(&paths[0], &format!("{}\n", hmac.to_hex()), true)?;
    create_new(&paths[1], &sk.to_pem()?, true)?;
    create_new(&paths[2], &sk.verifying_key().to_pem()?, false)?;
    Ok(json!({
        "key_id": sk.key_id(),
        "rsa_bits": bits,
        "files": paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
    }))
}

fn read(path: &Path) -> Result<String, Failure> {
    Ok(fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?)
}

pub fn load_hmac(path: &Path) -> Result<HmacKey, Failure> {
    Ok(HmacKey::from_hex(&read(path)?)?)
}

pub fn load_public(path: &Path) -> Result<VerifyingKey, Failure> {
    Ok(VerifyingKey::from_pem(&read(path)?)?)
}

/// HMAC key and signing key from a keygen directory.
pub fn load_signing(dir: &Path) -> Result<(HmacKey, SigningKey), Failure> {
    let hmac = load_hmac(&dir.join(HMAC_FILE))?;
    let sk = SigningKey::from_pem(&read(&dir.join(SIGNING_FILE))?)?;
    Ok((hmac, sk))
}
