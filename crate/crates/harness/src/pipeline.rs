//! The end-to-end run: gate, plan, compress, segment, assemble, persist,
//! evaluate.
//!
//! Expressions run on a bounded rayon pool; the tokens of one expression are
//! segmented concurrently on the same pool. Each worker returns its result
//! and its log events, and the orchestrator writes everything in manifest
//! order, so outputs do not depend on scheduling.
//!
//! Output layout under the run directory:
//!
//! ```text
//! predictions/<video>/<exp>/<frame>.png   predictions/predictions.json
//! report.json  report.txt                 (when ground truth is available)
//! gate.jsonl                              one GateDecision per expression
//! run_log.jsonl                           gate verdicts and backend calls
//! ```
//!
//! `gate.jsonl` and `run_log.jsonl` carry wall-clock latencies; everything
//! else is byte-deterministic for deterministic judges and backends.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use rvos_core::assemble::{assemble_masklet, SegmentResponse};
use rvos_core::gate::{GateDecision, GateOutcome, VerdictOutcome};
use rvos_core::kfc::compress_clip;
use rvos_core::metrics::{aggregate, render_table, score_expression, MetricsReport};
use rvos_core::scheduler::{plan, ClipPlan};
use rvos_core::{masklet_null, Image, Masklet, ReferringExpression};

use crate::backend::{check_response, SegmentRequest, SegmentationBackend};
use crate::config::{RunConfig, Services};
use crate::dataset::{self, DatasetManifest, GroundTruth, PredictionEntry, VideoEntry};
use crate::error::{HarnessError, Result};
use crate::imageio;
use crate::judge;

pub const PREDICTIONS_DIR: &str = "predictions";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";
pub const GATE_LOG: &str = "gate.jsonl";
pub const RUN_LOG: &str = "run_log.jsonl";

/// One structured log line.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    GateVerdict {
        expression_id: String,
        judge_id: String,
        outcome: VerdictOutcome,
        latency_ms: u64,
        #[serde(skip_serializing_if = "Option::is_none")]
        raw_response: Option<String>,
    },
    GateDecision {
        expression_id: String,
        outcome: GateOutcome,
    },
    BackendCall {
        expression_id: String,
        backend: String,
        token_id: usize,
        frames: usize,
        latency_ms: u64,
        #[serde(skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
    ExpressionDone {
        expression_id: String,
        null: bool,
        #[serde(skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
}

#[derive(Debug, Clone)]
pub struct ExpressionOutcome {
    pub expression_id: String,
    pub decision: GateDecision,
    pub masklet: std::result::Result<Masklet, String>,
    pub backend_calls: usize,
    pub events: Vec<Event>,
}

fn pool(parallelism: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| HarnessError::Config(format!("cannot start worker pool: {e}")))
}

fn gate_events(decision: &GateDecision) -> Vec<Event> {
    let mut events: Vec<Event> = decision
        .verdicts
        .iter()
        .map(|v| Event::GateVerdict {
            expression_id: decision.expression_id.clone(),
            judge_id: v.judge_id.clone(),
            outcome: v.outcome,
            latency_ms: v.latency_ms,
            raw_response: v.raw_response.clone(),
        })
        .collect();
    events.push(Event::GateDecision {
        expression_id: decision.expression_id.clone(),
        outcome: decision.outcome,
    });
    events
}

/// Runs the gate for one expression, or a pass-through when it is disabled.
pub fn gate_expression(
    entry: &VideoEntry,
    expr: &ReferringExpression,
    cfg: &RunConfig,
    services: &Services,
) -> Result<GateDecision> {
    if !cfg.gate.enabled {
        return Ok(GateDecision::bypassed(expr.expression_id()));
    }
    judge::verify(&entry.video, expr, &services.judges, &cfg.gate.settings())
}

/// Gate decisions for every expression, in manifest order.
pub fn gate_all(manifest: &DatasetManifest, cfg: &RunConfig, services: &Services) -> Result<Vec<GateDecision>> {
    cfg.validate()?;
    pool(cfg.parallelism)?.install(|| {
        manifest
            .expressions()
            .par_iter()
            .map(|e| gate_expression(manifest.video_of(e), e, cfg, services))
            .collect()
    })
}

/// Builds the per-token request for clip `k`.
pub fn segment_request(
    expr: &ReferringExpression,
    plan: &ClipPlan,
    frames: &[Arc<Image>],
    k: usize,
) -> Result<SegmentRequest> {
    let clip: Vec<Arc<Image>> = plan.clip_slots(k).iter().map(|&i| Arc::clone(&frames[i])).collect();
    let composite = compress_clip(k, &clip, plan.grid())?;
    let (width, height) = frames[0].dims();
    Ok(SegmentRequest {
        expression_id: expr.expression_id().to_owned(),
        expression: expr.text().to_owned(),
        clip_index: k,
        token_id: k,
        composite,
        frames: plan
            .governed_frames(k)
            .into_iter()
            .map(|f| (f, Arc::clone(&frames[f])))
            .collect(),
        width,
        height,
    })
}

/// Plans, compresses and segments one expression whose target passed the
/// gate. Appends a `BackendCall` event per request.
pub fn segment_expression(
    entry: &VideoEntry,
    expr: &ReferringExpression,
    cfg: &RunConfig,
    backend: &dyn SegmentationBackend,
    events: &mut Vec<Event>,
) -> std::result::Result<Masklet, String> {
    let video = &entry.video;
    let clip_plan = plan(video.len(), &cfg.scheduler).map_err(|e| format!("planning: {e}"))?;
    let frames = dataset::load_video_frames(entry).map_err(|e| e.to_string())?;
    let calls: Vec<(std::result::Result<SegmentResponse, String>, Event)> = (0..clip_plan.n_clips())
        .into_par_iter()
        .map(|k| {
            let t0 = Instant::now();
            let result = segment_request(expr, &clip_plan, &frames, k)
                .map_err(|e| e.to_string())
                .and_then(|req| {
                    let resp = backend.segment(&req)?;
                    check_response(&req, &resp)?;
                    Ok(resp)
                })
                .map_err(|e| format!("token {k}: {e}"));
            let event = Event::BackendCall {
                expression_id: expr.expression_id().to_owned(),
                backend: backend.name().to_owned(),
                token_id: k,
                frames: clip_plan.governed_frames(k).len(),
                latency_ms: t0.elapsed().as_millis() as u64,
                error: result.as_ref().err().cloned(),
            };
            (result, event)
        })
        .collect();
    let mut responses = Vec::with_capacity(calls.len());
    let mut first_error = None;
    for (result, event) in calls {
        events.push(event);
        match result {
            Ok(r) => responses.push(r),
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    if let Some(e) = first_error {
        return Err(e);
    }
    assemble_masklet(expr.expression_id(), &clip_plan, &responses, cfg.tau, video.dims())
        .map_err(|e| format!("assembling: {e}"))
}

/// Gate, then either the null masklet or the full segmentation path.
pub fn process_expression(
    manifest: &DatasetManifest,
    expr: &ReferringExpression,
    cfg: &RunConfig,
    services: &Services,
) -> ExpressionOutcome {
    let entry = manifest.video_of(expr);
    let id = expr.expression_id().to_owned();
    let (decision, mut events) = match gate_expression(entry, expr, cfg, services) {
        Ok(d) => {
            let ev = gate_events(&d);
            (d, ev)
        }
        Err(e) => {
            // Unreachable with a validated config; the expression fails on its own.
            let d = GateDecision::bypassed(id.as_str());
            let events = vec![Event::ExpressionDone {
                expression_id: id.clone(),
                null: false,
                error: Some(format!("gate: {e}")),
            }];
            return ExpressionOutcome {
                expression_id: id,
                decision: d,
                masklet: Err(format!("gate: {e}")),
                backend_calls: 0,
                events,
            };
        }
    };
    let (masklet, backend_calls) = if decision.is_null_target() {
        (Ok(masklet_null(&entry.video, &id)), 0)
    } else {
        let before = events.len();
        let m = segment_expression(entry, expr, cfg, services.backend.as_ref(), &mut events);
        (m, events.len() - before)
    };
    if let Err(e) = &masklet {
        log::error!("{id}: {e}");
    }
    events.push(Event::ExpressionDone {
        expression_id: id.clone(),
        null: masklet.as_ref().map(Masklet::is_null).unwrap_or(false),
        error: masklet.as_ref().err().cloned(),
    });
    ExpressionOutcome {
        expression_id: id,
        decision,
        masklet,
        backend_calls,
        events,
    }
}

/// Runs every expression without touching the filesystem beyond reading
/// frames. Outcomes are in manifest order.
pub fn infer(manifest: &DatasetManifest, cfg: &RunConfig, services: &Services) -> Result<Vec<ExpressionOutcome>> {
    cfg.validate()?;
    Ok(pool(cfg.parallelism)?.install(|| {
        manifest
            .expressions()
            .par_iter()
            .map(|e| process_expression(manifest, e, cfg, services))
            .collect()
    }))
}

/// Scores predictions against ground truth, in manifest order.
pub fn evaluate(
    manifest: &DatasetManifest,
    predictions: &[Masklet],
    truth: &GroundTruth,
    boundary_tolerance: Option<usize>,
) -> Result<MetricsReport> {
    let scores = manifest
        .expressions()
        .par_iter()
        .map(|e| {
            let id = e.expression_id();
            let pred = predictions
                .iter()
                .find(|m| m.expression_id() == id)
                .ok_or_else(|| HarnessError::Predictions(format!("no prediction for '{id}'")))?;
            let gt = match e.gt_target_present() {
                Some(true) => Some(
                    truth
                        .get(id)
                        .ok_or_else(|| HarnessError::Dataset(format!("no ground truth for '{id}'")))?,
                ),
                Some(false) => None,
                None => return Err(HarnessError::Dataset(format!("'{id}' has no ground-truth label"))),
            };
            Ok(score_expression(pred, gt, boundary_tolerance)?)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(&scores)?)
}

pub fn write_report(report: &MetricsReport, out_dir: &Path) -> Result<()> {
    let mut json = serde_json::to_string_pretty(report).expect("report serializes");
    json.push('\n');
    imageio::write_file(&out_dir.join(REPORT_JSON), json.as_bytes())?;
    imageio::write_file(&out_dir.join(REPORT_TXT), render_table(report).as_bytes())
}

fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    let mut text = String::new();
    for item in items {
        text.push_str(&serde_json::to_string(&item).expect("log line serializes"));
        text.push('\n');
    }
    imageio::write_file(path, text.as_bytes())
}

/// What a run produced.
#[derive(Debug)]
pub struct RunSummary {
    pub outcomes: Vec<ExpressionOutcome>,
    /// `(expression_id, error)` for every expression without a prediction.
    pub failures: Vec<(String, String)>,
    pub report: Option<MetricsReport>,
    pub out_dir: PathBuf,
}

impl RunSummary {
    pub fn predictions_dir(&self) -> PathBuf {
        self.out_dir.join(PREDICTIONS_DIR)
    }

    pub fn null_targets(&self) -> usize {
        self.outcomes.iter().filter(|o| o.decision.is_null_target()).count()
    }

    pub fn backend_calls(&self) -> usize {
        self.outcomes.iter().map(|o| o.backend_calls).sum()
    }
}

/// Writes predictions, the index and the logs. Expressions that failed get no
/// files and no index entry; the others are written whole.
pub fn persist(manifest: &DatasetManifest, outcomes: &[ExpressionOutcome], out_dir: &Path) -> Result<Vec<(String, String)>> {
    let pred_dir = out_dir.join(PREDICTIONS_DIR);
    if pred_dir.join(dataset::PREDICTIONS_INDEX).is_file() {
        fs::remove_dir_all(&pred_dir).map_err(|e| HarnessError::io(&pred_dir, e))?;
    }
    let written: Vec<std::result::Result<PredictionEntry, (String, String)>> = outcomes
        .par_iter()
        .map(|o| match &o.masklet {
            Ok(m) => dataset::write_masklet(manifest, m, &pred_dir).map_err(|e| (o.expression_id.clone(), e.to_string())),
            Err(e) => Err((o.expression_id.clone(), e.clone())),
        })
        .collect();
    let mut entries = Vec::new();
    let mut failures = Vec::new();
    for w in written {
        match w {
            Ok(entry) => entries.push(entry),
            Err(f) => failures.push(f),
        }
    }
    dataset::write_index(manifest, entries, &pred_dir)?;
    write_jsonl(&out_dir.join(GATE_LOG), outcomes.iter().map(|o| &o.decision))?;
    write_jsonl(&out_dir.join(RUN_LOG), outcomes.iter().flat_map(|o| &o.events))?;
    Ok(failures)
}

/// Full run. With `evaluate` set and ground truth available, also scores the
/// predictions and writes the report; a run with failed expressions gets no
/// report.
pub fn run(
    manifest: &DatasetManifest,
    cfg: &RunConfig,
    services: &Services,
    out_dir: &Path,
    evaluate_predictions: bool,
) -> Result<RunSummary> {
    let outcomes = infer(manifest, cfg, services)?;
    let failures = persist(manifest, &outcomes, out_dir)?;
    for (id, e) in &failures {
        log::error!("no prediction for {id}: {e}");
    }
    let report = if evaluate_predictions && manifest.has_annotations() && failures.is_empty() {
        let truth = GroundTruth::load(manifest)?;
        let preds: Vec<Masklet> = outcomes.iter().filter_map(|o| o.masklet.as_ref().ok().cloned()).collect();
        let report = evaluate(manifest, &preds, &truth, cfg.metrics.boundary_tolerance)?;
        write_report(&report, out_dir)?;
        Some(report)
    } else {
        None
    };
    Ok(RunSummary {
        outcomes,
        failures,
        report,
        out_dir: out_dir.to_owned(),
    })
}

/// Writes KFC composites per video (`<out>/composites/<video>/clipNN_{key,mosaic}.png`)
/// and, given a predictions directory, mask overlays per expression
/// (`<out>/overlays/<expression>/<frame>.png`). Returns the number of files.
pub fn render(
    manifest: &DatasetManifest,
    cfg: &RunConfig,
    predictions: Option<&Path>,
    only_video: Option<&str>,
    out_dir: &Path,
) -> Result<usize> {
    cfg.scheduler
        .validate()
        .map_err(|e| HarnessError::Config(format!("scheduler: {e}")))?;
    let videos: Vec<&VideoEntry> = manifest
        .videos()
        .iter()
        .filter(|v| only_video.is_none_or(|id| v.video.video_id() == id))
        .collect();
    if let Some(id) = only_video {
        if videos.is_empty() {
            return Err(HarnessError::Dataset(format!("unknown video '{id}'")));
        }
    }
    let counts = videos
        .par_iter()
        .map(|entry| -> Result<usize> {
            let frames = dataset::load_video_frames(entry)?;
            let clip_plan = plan(entry.video.len(), &cfg.scheduler)?;
            let dir = out_dir.join("composites").join(entry.video.video_id());
            let mut n = 0;
            for k in 0..clip_plan.n_clips() {
                let clip: Vec<Arc<Image>> = clip_plan.clip_slots(k).iter().map(|&i| Arc::clone(&frames[i])).collect();
                let comp = compress_clip(k, &clip, clip_plan.grid())?;
                imageio::write_file(&dir.join(format!("clip{k:02}_key.png")), &imageio::encode_rgb_png(&comp.key_image))?;
                imageio::write_file(&dir.join(format!("clip{k:02}_mosaic.png")), &imageio::encode_rgb_png(&comp.mosaic))?;
                n += 2;
            }
            if let Some(pred_dir) = predictions {
                for e in manifest
                    .expressions()
                    .iter()
                    .filter(|e| e.video_id() == entry.video.video_id())
                {
                    let m = dataset::read_masklet(manifest, e, pred_dir)?;
                    let edir = out_dir.join("overlays").join(e.expression_id());
                    for ((mask, frame), stem) in m.masks().iter().zip(&frames).zip(&entry.frame_names) {
                        imageio::write_file(
                            &edir.join(format!("{stem}.png")),
                            &imageio::encode_rgb_png(&imageio::overlay(frame, mask)),
                        )?;
                        n += 1;
                    }
                }
            }
            Ok(n)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(counts.into_iter().sum())
}
