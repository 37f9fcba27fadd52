//! Pluggable transcription and embedding backends.
//!
//! The curation rules and evaluation metrics need transcripts, language
//! probabilities, and embedding vectors, but the models that produce them at
//! full scale are deliberately outside this crate. Two implementations of
//! each contract are provided: a deterministic replay client backed by a
//! fixture JSON file (the workhorse for tests and reproducible runs), and a
//! subprocess adapter that exchanges one JSON line over stdio with an
//! external program, with timeout and retry policy supplied by the caller.
//!
//! Subprocess protocol: the request is a single JSON line on stdin, either
//! `{"id": "...", "wav_path": "/tmp/....wav"}` for transcription or
//! `{"id": "...", "text": "..."}` for embedding. The program answers with a
//! single JSON line on stdout: `{"text": "...", "language_prob": 0.9}` or
//! `{"vector": [..]}` and exits zero.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("no replay entry for id {0:?}")]
    MissingEntry(String),
    #[error("replay fixture {path}: {source}")]
    FixtureIo {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("replay fixture {path} is not valid JSON: {source}")]
    FixtureFormat {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("subprocess spawn failed for {program:?}: {source}")]
    Spawn {
        program: String,
        source: std::io::Error,
    },
    #[error("subprocess i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("subprocess timed out after {0:?}")]
    Timeout(Duration),
    #[error("subprocess exited with status {0}")]
    Failed(i32),
    #[error("malformed response: {0}")]
    Protocol(String),
    #[error("all {attempts} attempts failed; last error: {last}")]
    Exhausted { attempts: u32, last: String },
}

/// A transcription result: the text plus, when the backend performs language
/// identification, the probability that the audio is English.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsrResponse {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language_prob: Option<f64>,
}

/// Transcription backend contract. Requests are identified so replay
/// implementations can key on the segment id.
pub trait AsrClient {
    fn transcribe(&self, id: &str, wav_bytes: &[u8]) -> Result<AsrResponse, ClientError>;
}

/// Embedding backend contract, mirroring [`AsrClient`].
pub trait EmbedderClient {
    fn embed_text(&self, id: &str, text: &str) -> Result<Vec<f64>, ClientError>;
}

/// Deterministic client that replays recorded responses from a JSON fixture:
/// a map from request id to [`AsrResponse`]. Ids absent from the fixture
/// fail with [`ClientError::MissingEntry`], which curation turns into an
/// unresolved record.
pub struct ReplayAsrClient {
    responses: BTreeMap<String, AsrResponse>,
}

impl ReplayAsrClient {
    pub fn from_file(path: &Path) -> Result<Self, ClientError> {
        let text = std::fs::read_to_string(path).map_err(|source| ClientError::FixtureIo {
            path: path.to_path_buf(),
            source,
        })?;
        let responses =
            serde_json::from_str(&text).map_err(|source| ClientError::FixtureFormat {
                path: path.to_path_buf(),
                source,
            })?;
        Ok(ReplayAsrClient { responses })
    }

    pub fn from_map(responses: BTreeMap<String, AsrResponse>) -> Self {
        ReplayAsrClient { responses }
    }
}

impl AsrClient for ReplayAsrClient {
    fn transcribe(&self, id: &str, _wav_bytes: &[u8]) -> Result<AsrResponse, ClientError> {
        self.responses
            .get(id)
            .cloned()
            .ok_or_else(|| ClientError::MissingEntry(id.to_string()))
    }
}

/// Replay embedder: a map from request id to vector.
pub struct ReplayEmbedder {
    vectors: BTreeMap<String, Vec<f64>>,
}

impl ReplayEmbedder {
    pub fn from_file(path: &Path) -> Result<Self, ClientError> {
        let text = std::fs::read_to_string(path).map_err(|source| ClientError::FixtureIo {
            path: path.to_path_buf(),
            source,
        })?;
        let vectors =
            serde_json::from_str(&text).map_err(|source| ClientError::FixtureFormat {
                path: path.to_path_buf(),
                source,
            })?;
        Ok(ReplayEmbedder { vectors })
    }

    pub fn from_map(vectors: BTreeMap<String, Vec<f64>>) -> Self {
        ReplayEmbedder { vectors }
    }
}

impl EmbedderClient for ReplayEmbedder {
    fn embed_text(&self, id: &str, _text: &str) -> Result<Vec<f64>, ClientError> {
        self.vectors
            .get(id)
            .cloned()
            .ok_or_else(|| ClientError::MissingEntry(id.to_string()))
    }
}

/// Timeout and retry policy for subprocess clients.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub timeout: Duration,
    /// Total attempts, including the first.
    pub attempts: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            timeout: Duration::from_secs(30),
            attempts: 2,
        }
    }
}

#[derive(Serialize)]
struct AsrRequest<'a> {
    id: &'a str,
    wav_path: &'a str,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    id: &'a str,
    text: &'a str,
}

#[derive(Deserialize)]
struct EmbedResponse {
    vector: Vec<f64>,
}

/// Adapter that shells out to an external program per request, speaking one
/// JSON line each way over stdio.
pub struct SubprocessClient {
    program: String,
    args: Vec<String>,
    policy: RetryPolicy,
}

impl SubprocessClient {
    pub fn new(program: String, args: Vec<String>, policy: RetryPolicy) -> Self {
        SubprocessClient {
            program,
            args,
            policy,
        }
    }

    /// Parse a `cmd:program arg1 arg2` spec (whitespace-separated; no shell
    /// quoting).
    pub fn from_spec(spec: &str, policy: RetryPolicy) -> Result<Self, ClientError> {
        let mut parts = spec.split_whitespace();
        let program = parts
            .next()
            .ok_or_else(|| ClientError::Protocol("empty subprocess spec".to_string()))?
            .to_string();
        Ok(SubprocessClient::new(
            program,
            parts.map(|s| s.to_string()).collect(),
            policy,
        ))
    }

    fn run_once(&self, request_line: &str) -> Result<String, ClientError> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|source| ClientError::Spawn {
                program: self.program.clone(),
                source,
            })?;
        {
            // A child that exits without reading closes the pipe; its exit
            // status is the real signal, so a failed write is not itself an
            // error.
            let stdin = child.stdin.as_mut().expect("piped stdin");
            let _ = stdin.write_all(request_line.as_bytes());
            let _ = stdin.write_all(b"\n");
        }
        drop(child.stdin.take());

        let start = Instant::now();
        loop {
            match child.try_wait()? {
                Some(status) => {
                    if !status.success() {
                        return Err(ClientError::Failed(status.code().unwrap_or(-1)));
                    }
                    break;
                }
                None => {
                    if start.elapsed() > self.policy.timeout {
                        let _ = child.kill();
                        let _ = child.wait();
                        return Err(ClientError::Timeout(self.policy.timeout));
                    }
                    std::thread::sleep(Duration::from_millis(5));
                }
            }
        }
        let mut output = String::new();
        use std::io::Read;
        child
            .stdout
            .take()
            .expect("piped stdout")
            .read_to_string(&mut output)?;
        let line = output
            .lines()
            .next()
            .ok_or_else(|| ClientError::Protocol("empty response".to_string()))?;
        Ok(line.to_string())
    }

    fn run_with_retry(&self, request_line: &str) -> Result<String, ClientError> {
        let mut last = None;
        for _ in 0..self.policy.attempts.max(1) {
            match self.run_once(request_line) {
                Ok(line) => return Ok(line),
                Err(e) => last = Some(e),
            }
        }
        Err(ClientError::Exhausted {
            attempts: self.policy.attempts.max(1),
            last: last.expect("at least one attempt").to_string(),
        })
    }
}

impl AsrClient for SubprocessClient {
    fn transcribe(&self, id: &str, wav_bytes: &[u8]) -> Result<AsrResponse, ClientError> {
        // The waveform travels by temp file; ids become file names, so keep
        // them path-safe.
        let dir = tempfile::tempdir()?;
        let safe: String = id
            .chars()
            .map(|c| if c.is_alphanumeric() { c } else { '_' })
            .collect();
        let wav_path = dir.path().join(format!("{safe}.wav"));
        std::fs::write(&wav_path, wav_bytes)?;
        let request = serde_json::to_string(&AsrRequest {
            id,
            wav_path: wav_path.to_str().unwrap_or_default(),
        })
        .map_err(|e| ClientError::Protocol(e.to_string()))?;
        let line = self.run_with_retry(&request)?;
        serde_json::from_str(&line).map_err(|e| ClientError::Protocol(e.to_string()))
    }
}

impl EmbedderClient for SubprocessClient {
    fn embed_text(&self, id: &str, text: &str) -> Result<Vec<f64>, ClientError> {
        let request = serde_json::to_string(&EmbedRequest { id, text })
            .map_err(|e| ClientError::Protocol(e.to_string()))?;
        let line = self.run_with_retry(&request)?;
        let resp: EmbedResponse =
            serde_json::from_str(&line).map_err(|e| ClientError::Protocol(e.to_string()))?;
        Ok(resp.vector)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replay_asr_returns_recorded_responses() {
        let mut map = BTreeMap::new();
        map.insert(
            "seg1".to_string(),
            AsrResponse {
                text: "hello there".to_string(),
                language_prob: Some(0.92),
            },
        );
        let client = ReplayAsrClient::from_map(map);
        let r = client.transcribe("seg1", b"").unwrap();
        assert_eq!(r.text, "hello there");
        assert_eq!(r.language_prob, Some(0.92));
        assert!(matches!(
            client.transcribe("other", b""),
            Err(ClientError::MissingEntry(_))
        ));
    }

    #[test]
    fn replay_fixture_round_trips_through_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("replay.json");
        std::fs::write(
            &path,
            r#"{"a": {"text": "one", "language_prob": 0.5}, "b": {"text": ""}}"#,
        )
        .unwrap();
        let client = ReplayAsrClient::from_file(&path).unwrap();
        assert_eq!(client.transcribe("a", b"").unwrap().language_prob, Some(0.5));
        assert_eq!(client.transcribe("b", b"").unwrap().language_prob, None);
    }

    #[test]
    fn replay_embedder_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.json");
        std::fs::write(&path, r#"{"x": [1.0, -2.5, 0.25]}"#).unwrap();
        let client = ReplayEmbedder::from_file(&path).unwrap();
        assert_eq!(client.embed_text("x", "whatever").unwrap(), vec![1.0, -2.5, 0.25]);
    }

    #[test]
    fn subprocess_asr_speaks_json_over_stdio() {
        // A stand-in backend that ignores its input and answers a canned
        // transcription.
        let client = SubprocessClient::new(
            "sh".to_string(),
            vec![
                "-c".to_string(),
                r#"read line; echo '{"text": "spoken words", "language_prob": 0.8}'"#.to_string(),
            ],
            RetryPolicy::default(),
        );
        let r = client.transcribe("seg/odd id", b"RIFFfake").unwrap();
        assert_eq!(r.text, "spoken words");
        assert_eq!(r.language_prob, Some(0.8));
    }

    #[test]
    fn subprocess_failure_is_retried_then_reported() {
        let client = SubprocessClient::new(
            "sh".to_string(),
            vec!["-c".to_string(), "exit 3".to_string()],
            RetryPolicy {
                timeout: Duration::from_secs(5),
                attempts: 2,
            },
        );
        match client.embed_text("x", "t") {
            Err(ClientError::Exhausted { attempts: 2, last }) => {
                assert!(last.contains("status 3"), "unexpected last error: {last}");
            }
            other => panic!("expected exhaustion, got {other:?}"),
        }
    }

    #[test]
    fn subprocess_timeout_kills_the_child() {
        let client = SubprocessClient::new(
            "sh".to_string(),
            vec!["-c".to_string(), "sleep 30".to_string()],
            RetryPolicy {
                timeout: Duration::from_millis(100),
                attempts: 1,
            },
        );
        let started = Instant::now();
        let err = client.embed_text("x", "t");
        assert!(started.elapsed() < Duration::from_secs(5));
        assert!(matches!(err, Err(ClientError::Exhausted { .. })));
    }
}
