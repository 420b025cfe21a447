//! Thin async client for the read-only verification endpoint.

use std::time::Duration;

use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use url::Url;

use qdna_core::provenance::VerificationReport;
use qdna_core::store::{AuditReport, IndexEntry};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("bad base url `{0}`: {1}")]
    BaseUrl(String, url::ParseError),
    #[error("transport: {0}")]
    Transport(#[from] reqwest::Error),
    /// The server answered with a non-2xx status.
    #[error("server returned {status}: {message}")]
    Status { status: u16, message: String },
}

impl ClientError {
    pub fn status(&self) -> Option<u16> {
        match self {
            ClientError::Status { status, .. } => Some(*status),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct Health {
    pub status: String,
    pub signer_key_id: String,
    pub hmac_enabled: bool,
}

#[derive(Deserialize)]
struct ErrorBody {
    error: String,
}

#[derive(Debug, Clone)]
pub struct Client {
    base: Url,
    http: reqwest::Client,
}

impl Client {
    /// `base` like `http://127.0.0.1:8080`; a trailing path prefix is kept.
    pub fn new(base: &str) -> Result<Self> {
        let mut normalized = base.to_string();
        if !normalized.ends_with('/') {
            normalized.push('/');
        }
        let base = Url::parse(&normalized).map_err(|e| ClientError::BaseUrl(base.to_string(), e))?;
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()?;
        Ok(Client { base, http })
    }

    fn url(&self, segments: &[&str]) -> Url {
        let mut url = self.base.clone();
        url.path_segments_mut()
            .expect("http base url")
            .pop_if_empty()
            .extend(segments);
        url
    }

    async fn check(resp: reqwest::Response) -> Result<reqwest::Response> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp);
        }
        let text = resp.text().await.unwrap_or_default();
        let message = serde_json::from_str::<ErrorBody>(&text)
            .map(|b| b.error)
            .unwrap_or(text);
        Err(ClientError::Status {
            status: status.as_u16(),
            message,
        })
    }

    async fn get_json<T: DeserializeOwned>(&self, segments: &[&str]) -> Result<T> {
        let resp = self.http.get(self.url(segments)).send().await?;
        Ok(Self::check(resp).await?.json().await?)
    }

    pub async fn health(&self) -> Result<Health> {
        self.get_json(&["health"]).await
    }

    pub async fn devices(&self) -> Result<Vec<String>> {
        self.get_json(&["devices"]).await
    }

    pub async fn index(&self, device_id: &str) -> Result<Vec<IndexEntry>> {
        self.get_json(&["devices", device_id, "index"]).await
    }

    pub async fn audit(&self, device_id: &str) -> Result<AuditReport> {
        self.get_json(&["devices", device_id, "audit"]).await
    }

    /// Raw stored bytes; `None` when the server has no such artifact.
    pub async fn artifact(&self, device_id: &str, session_id: &str) -> Result<Option<Vec<u8>>> {
        let resp = self
            .http
            .get(self.url(&["artifacts", device_id, session_id]))
            .send()
            .await?;
        if resp.status() == StatusCode::NOT_FOUND {
            return Ok(None);
        }
        Ok(Some(Self::check(resp).await?.bytes().await?.to_vec()))
    }

    /// Uploads artifact bytes for verification by the server.
    pub async fn verify(&self, artifact_bytes: Vec<u8>) -> Result<VerificationReport> {
        let resp = self
            .http
            .post(self.url(&["verify"]))
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(artifact_bytes)
            .send()
            .await?;
        Ok(Self::check(resp).await?.json().await?)
    }
}
