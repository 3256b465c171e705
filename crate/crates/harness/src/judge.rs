//! Existence judges and the concurrent verification step.
//!
//! Wire protocol for HTTP judges (POST, JSON):
//!
//! ```text
//! request  {"expression": str, "frames": [base64 image], "prompt": str}
//! response {"verdict": "present" | "absent", "confidence": number?}
//! ```
//!
//! A non-200 status, a body that does not match the schema or an unknown
//! verdict word becomes an `error` verdict.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};
use std::time::{Duration, Instant};

use base64::Engine as _;
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use rvos_core::gate::{
    parse_reply, render_prompt, subsample_indices, GateDecision, GatePolicy, JudgeVerdict, DEFAULT_PROMPT_TEMPLATE,
};
use rvos_core::{FrameRef, ReferringExpression, VideoSequence};

use crate::dataset::DatasetManifest;
use crate::error::{HarnessError, Result};
use crate::imageio;

pub const JUDGE_FIXTURE_FILE: &str = "judge_fixture.json";

/// What gets sent to every judge for one expression.
#[derive(Debug, Clone)]
pub struct JudgeRequest {
    pub expression_id: String,
    pub expression: String,
    pub prompt: String,
    /// Uniformly subsampled frames, in temporal order.
    pub frames: Vec<FrameRef>,
}

/// Subsamples `video` to at most `max_frames` frames and renders the prompt.
pub fn build_request(
    video: &VideoSequence,
    expr: &ReferringExpression,
    max_frames: usize,
    prompt_template: &str,
) -> JudgeRequest {
    let frames = subsample_indices(video.len(), max_frames)
        .into_iter()
        .map(|i| video.frames()[i].clone())
        .collect();
    JudgeRequest {
        expression_id: expr.expression_id().to_owned(),
        expression: expr.text().to_owned(),
        prompt: render_prompt(prompt_template, expr.text()),
        frames,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JudgeAnswer {
    pub present: bool,
    pub raw: Option<String>,
}

/// A target-existence judge. Implementations are called from several
/// threads at once.
pub trait Judge: Send + Sync {
    fn id(&self) -> &str;
    fn judge(&self, req: &JudgeRequest) -> std::result::Result<JudgeAnswer, String>;
}

/// Gate parameters for [`verify`].
#[derive(Debug, Clone)]
pub struct GateSettings {
    pub policy: GatePolicy,
    pub max_frames: usize,
    pub timeout: Duration,
    pub prompt_template: String,
}

impl Default for GateSettings {
    fn default() -> Self {
        Self {
            policy: GatePolicy::default(),
            max_frames: 32,
            timeout: Duration::from_secs(60),
            prompt_template: DEFAULT_PROMPT_TEMPLATE.to_owned(),
        }
    }
}

/// Asks every judge concurrently and applies the gate policy. Judges that
/// fail or miss the timeout produce error verdicts. Verdicts keep the order
/// of `judges`.
pub fn verify(
    video: &VideoSequence,
    expr: &ReferringExpression,
    judges: &[Arc<dyn Judge>],
    settings: &GateSettings,
) -> Result<GateDecision> {
    if judges.is_empty() {
        return Err(HarnessError::Config("the gate needs at least one judge".into()));
    }
    let request = Arc::new(build_request(video, expr, settings.max_frames, &settings.prompt_template));
    let (tx, rx) = mpsc::channel();
    let start = Instant::now();
    for (slot, judge) in judges.iter().enumerate() {
        let (judge, request, tx) = (Arc::clone(judge), Arc::clone(&request), tx.clone());
        std::thread::spawn(move || {
            let t0 = Instant::now();
            let answer = judge.judge(&request);
            // The receiver may be gone after a timeout.
            let _ = tx.send((slot, answer, t0.elapsed()));
        });
    }
    drop(tx);

    let deadline = start + settings.timeout;
    let mut verdicts: Vec<Option<JudgeVerdict>> = vec![None; judges.len()];
    let mut pending = judges.len();
    while pending > 0 {
        let left = deadline.saturating_duration_since(Instant::now());
        match rx.recv_timeout(left) {
            Ok((slot, answer, elapsed)) => {
                let ms = elapsed.as_millis() as u64;
                let id = judges[slot].id();
                verdicts[slot] = Some(match answer {
                    Ok(a) => JudgeVerdict::answered(id, a.present, ms, a.raw),
                    Err(e) => JudgeVerdict::error(id, ms, e),
                });
                pending -= 1;
            }
            Err(_) => break,
        }
    }
    let timeout_ms = settings.timeout.as_millis() as u64;
    let verdicts: Vec<JudgeVerdict> = verdicts
        .into_iter()
        .enumerate()
        .map(|(slot, v)| {
            v.unwrap_or_else(|| {
                JudgeVerdict::error(judges[slot].id(), timeout_ms, format!("timed out after {timeout_ms} ms"))
            })
        })
        .collect();
    if verdicts.iter().all(|v| v.outcome == rvos_core::gate::VerdictOutcome::Error) {
        log::warn!(
            "{}: every judge failed, proceeding without a gate verdict",
            expr.expression_id()
        );
    }
    Ok(GateDecision::new(expr.expression_id(), verdicts, &settings.policy)?)
}

/// Mock judge fixture: expression id to scripted verdict.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct JudgeFixture {
    #[serde(default = "schema_one")]
    pub schema_version: u32,
    pub verdicts: IndexMap<String, ScriptedVerdict>,
}

fn schema_one() -> u32 {
    1
}

/// `"present"` / `"absent"`, or a detailed entry with injected latency or
/// failure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptedVerdict {
    Plain(String),
    Detailed {
        #[serde(default)]
        verdict: Option<String>,
        #[serde(default)]
        latency_ms: Option<u64>,
        #[serde(default)]
        error: Option<String>,
    },
}

/// A judge that answers from a script. Unscripted expressions are errors.
#[derive(Debug)]
pub struct MockJudge {
    id: String,
    script: HashMap<String, ScriptedVerdict>,
    calls: AtomicUsize,
}

impl MockJudge {
    pub fn new(id: impl Into<String>, script: impl IntoIterator<Item = (String, ScriptedVerdict)>) -> Self {
        Self {
            id: id.into(),
            script: script.into_iter().collect(),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn from_file(id: impl Into<String>, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let fixture: JudgeFixture = serde_json::from_str(&text).map_err(|e| HarnessError::json(path, e))?;
        Ok(Self::new(id, fixture.verdicts))
    }

    /// Answers every expression of `manifest` according to its ground truth.
    pub fn oracle(id: impl Into<String>, manifest: &DatasetManifest) -> Self {
        Self::new(
            id,
            manifest.expressions().iter().filter_map(|e| {
                let present = e.gt_target_present()?;
                Some((
                    e.expression_id().to_owned(),
                    ScriptedVerdict::Plain(if present { "present" } else { "absent" }.into()),
                ))
            }),
        )
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

impl Judge for MockJudge {
    fn id(&self) -> &str {
        &self.id
    }

    fn judge(&self, req: &JudgeRequest) -> std::result::Result<JudgeAnswer, String> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let entry = self
            .script
            .get(&req.expression_id)
            .ok_or_else(|| format!("no scripted verdict for {}", req.expression_id))?;
        let (word, latency, error) = match entry {
            ScriptedVerdict::Plain(w) => (Some(w.as_str()), None, None),
            ScriptedVerdict::Detailed {
                verdict,
                latency_ms,
                error,
            } => (verdict.as_deref(), *latency_ms, error.as_deref()),
        };
        if let Some(ms) = latency {
            std::thread::sleep(Duration::from_millis(ms));
        }
        if let Some(e) = error {
            return Err(e.to_owned());
        }
        let word = word.ok_or("scripted entry has neither verdict nor error")?;
        let present = parse_reply(word).ok_or_else(|| format!("unparseable reply '{word}'"))?;
        Ok(JudgeAnswer {
            present,
            raw: Some(word.to_owned()),
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct JudgeWireRequest {
    pub expression: String,
    pub frames: Vec<String>,
    pub prompt: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct JudgeWireResponse {
    pub verdict: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

/// A judge behind the HTTP wire protocol.
pub struct HttpJudge {
    id: String,
    url: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl std::fmt::Debug for HttpJudge {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpJudge").field("id", &self.id).field("url", &self.url).finish()
    }
}

impl HttpJudge {
    /// `api_key`, when present, is sent as a bearer token.
    pub fn new(id: impl Into<String>, url: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            id: id.into(),
            url: url.into(),
            api_key,
            agent,
        }
    }

    pub fn encode_request(req: &JudgeRequest) -> Result<JudgeWireRequest> {
        let b64 = base64::engine::general_purpose::STANDARD;
        let frames = req
            .frames
            .iter()
            .map(|f| imageio::frame_bytes(f).map(|b| b64.encode(b)))
            .collect::<Result<Vec<_>>>()?;
        Ok(JudgeWireRequest {
            expression: req.expression.clone(),
            frames,
            prompt: req.prompt.clone(),
        })
    }
}

impl Judge for HttpJudge {
    fn id(&self) -> &str {
        &self.id
    }

    fn judge(&self, req: &JudgeRequest) -> std::result::Result<JudgeAnswer, String> {
        let body = Self::encode_request(req).map_err(|e| e.to_string())?;
        let mut call = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = call.send_json(&body).map_err(|e| format!("request failed: {e}"))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| format!("reading response: {e}"))?;
        if status != 200 {
            return Err(format!("HTTP {status}: {}", text.chars().take(200).collect::<String>()));
        }
        let wire: JudgeWireResponse =
            serde_json::from_str(&text).map_err(|e| format!("schema-invalid response: {e}"))?;
        let present = parse_reply(&wire.verdict).ok_or_else(|| format!("unknown verdict '{}'", wire.verdict))?;
        Ok(JudgeAnswer { present, raw: Some(text) })
    }
}
