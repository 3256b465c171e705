//! Segmentation backends: the interface, the in-tree mocks and an HTTP client.
//!
//! A backend receives one request per token (clip) and returns a soft mask
//! for every frame that token governs. Temporal propagation, if any, happens
//! inside the backend.
//!
//! Wire protocol (POST, JSON):
//!
//! ```text
//! request  {"expression": str, "token_id": int, "frame_indices": [int],
//!           "composite": {"key": base64 png, "mosaic": base64 png},
//!           "frames": [base64 png]}
//! response {"token_id": int, "masks": {"<frame_index>": soft-rle}}
//! ```
//!
//! Soft masks travel quantized to 8 bits (`q = round(255 * v)`, decoded as
//! `q / 255`) and run-length encoded in column-major order as
//! `"<w>x<h>:<q>*<n>,<q>*<n>,..."`.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use base64::Engine as _;
use serde::{Deserialize, Serialize};

use rvos_core::assemble::SegmentResponse;
use rvos_core::kfc::CompositeFrame;
use rvos_core::{BinaryMask, Image, SoftMask};

use crate::dataset::GroundTruth;
use crate::error::Result;
use crate::imageio;

/// Everything a backend gets for one token.
#[derive(Debug, Clone)]
pub struct SegmentRequest {
    pub expression_id: String,
    pub expression: String,
    pub clip_index: usize,
    /// Equals `clip_index`: clip k is prompted by token k.
    pub token_id: usize,
    pub composite: CompositeFrame,
    /// Original frames governed by the token, ascending by index. Always
    /// includes the clip's own frames.
    pub frames: Vec<(usize, Arc<Image>)>,
    pub width: usize,
    pub height: usize,
}

impl SegmentRequest {
    pub fn frame_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.frames.iter().map(|(i, _)| *i)
    }
}

pub trait SegmentationBackend: Send + Sync {
    fn name(&self) -> &str;
    fn segment(&self, req: &SegmentRequest) -> std::result::Result<SegmentResponse, String>;
}

fn respond(req: &SegmentRequest, mut mask_for: impl FnMut(usize) -> std::result::Result<SoftMask, String>) -> std::result::Result<SegmentResponse, String> {
    let masks = req
        .frame_indices()
        .map(|f| mask_for(f).map(|m| (f, m)))
        .collect::<std::result::Result<BTreeMap<_, _>, _>>()?;
    Ok(SegmentResponse {
        token_id: req.token_id,
        masks,
    })
}

/// Returns the ground-truth masks with score 1.0.
#[derive(Debug, Clone)]
pub struct OracleBackend {
    truth: Arc<GroundTruth>,
}

impl OracleBackend {
    pub fn new(truth: Arc<GroundTruth>) -> Self {
        Self { truth }
    }
}

impl SegmentationBackend for OracleBackend {
    fn name(&self) -> &str {
        "oracle"
    }

    fn segment(&self, req: &SegmentRequest) -> std::result::Result<SegmentResponse, String> {
        let gt = self
            .truth
            .get(&req.expression_id)
            .ok_or_else(|| format!("no ground truth for {}", req.expression_id))?;
        respond(req, |f| {
            gt.masks()
                .get(f)
                .map(SoftMask::from_binary)
                .ok_or_else(|| format!("ground truth has no frame {f}"))
        })
    }
}

/// A centred disk of radius `min(w, h) / 4` on every frame, whatever the
/// expression says.
#[derive(Debug, Clone, Copy, Default)]
pub struct ForcedMappingBackend;

impl ForcedMappingBackend {
    pub fn disk(width: usize, height: usize) -> BinaryMask {
        let r = (width.min(height) / 4) as f64;
        let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
        BinaryMask::from_fn(width, height, |x, y| {
            let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            dx * dx + dy * dy <= r * r
        })
    }
}

impl SegmentationBackend for ForcedMappingBackend {
    fn name(&self) -> &str {
        "forced_mapping"
    }

    fn segment(&self, req: &SegmentRequest) -> std::result::Result<SegmentResponse, String> {
        let disk = SoftMask::from_binary(&Self::disk(req.width, req.height));
        respond(req, |_| Ok(disk.clone()))
    }
}

/// All-zero soft masks.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroBackend;

impl SegmentationBackend for ZeroBackend {
    fn name(&self) -> &str {
        "zero"
    }

    fn segment(&self, req: &SegmentRequest) -> std::result::Result<SegmentResponse, String> {
        let zero = SoftMask::filled(req.width, req.height, 0.0).map_err(|e| e.to_string())?;
        respond(req, |_| Ok(zero.clone()))
    }
}

/// Counts requests per expression on top of another backend.
pub struct CountingBackend {
    inner: Arc<dyn SegmentationBackend>,
    counts: Mutex<HashMap<String, usize>>,
}

impl std::fmt::Debug for CountingBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CountingBackend").field("inner", &self.inner.name()).finish()
    }
}

impl CountingBackend {
    pub fn new(inner: Arc<dyn SegmentationBackend>) -> Self {
        Self {
            inner,
            counts: Mutex::new(HashMap::new()),
        }
    }

    pub fn calls_for(&self, expression_id: &str) -> usize {
        self.counts.lock().unwrap().get(expression_id).copied().unwrap_or(0)
    }

    pub fn total_calls(&self) -> usize {
        self.counts.lock().unwrap().values().sum()
    }
}

impl SegmentationBackend for CountingBackend {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn segment(&self, req: &SegmentRequest) -> std::result::Result<SegmentResponse, String> {
        *self.counts.lock().unwrap().entry(req.expression_id.clone()).or_default() += 1;
        self.inner.segment(req)
    }
}

/// Quantizes to 8 bits and run-length encodes, column-major.
pub fn encode_soft_rle(mask: &SoftMask) -> String {
    let (w, h) = mask.dims();
    let values = mask.values();
    let mut out = format!("{w}x{h}:");
    let mut run: Option<(u8, usize)> = None;
    let mut first = true;
    let mut flush = |out: &mut String, (q, n): (u8, usize)| {
        if !first {
            out.push(',');
        }
        first = false;
        let _ = write!(out, "{q}*{n}");
    };
    for x in 0..w {
        for y in 0..h {
            let q = (values[y * w + x] * 255.0).round() as u8;
            run = match run {
                Some((v, n)) if v == q => Some((v, n + 1)),
                Some(prev) => {
                    flush(&mut out, prev);
                    Some((q, 1))
                }
                None => Some((q, 1)),
            };
        }
    }
    if let Some(last) = run {
        flush(&mut out, last);
    }
    out
}

pub fn decode_soft_rle(text: &str) -> std::result::Result<SoftMask, String> {
    let (dims, runs) = text.split_once(':').ok_or("soft RLE lacks ':'")?;
    let (w, h) = dims.split_once('x').ok_or("soft RLE dims must be <w>x<h>")?;
    let w: usize = w.trim().parse().map_err(|_| format!("bad width '{w}'"))?;
    let h: usize = h.trim().parse().map_err(|_| format!("bad height '{h}'"))?;
    let mut values = vec![0f32; w * h];
    let mut pos = 0usize;
    for run in runs.split(',').filter(|r| !r.trim().is_empty()) {
        let (q, n) = run.split_once('*').ok_or_else(|| format!("bad run '{run}'"))?;
        let q: u8 = q.trim().parse().map_err(|_| format!("bad value in run '{run}'"))?;
        let n: usize = n.trim().parse().map_err(|_| format!("bad length in run '{run}'"))?;
        if pos + n > w * h {
            return Err(format!("runs exceed {w}x{h}"));
        }
        let v = q as f32 / 255.0;
        for p in pos..pos + n {
            values[(p % h) * w + p / h] = v;
        }
        pos += n;
    }
    if pos != w * h {
        return Err(format!("runs cover {pos} of {} pixels", w * h));
    }
    SoftMask::new(w, h, values).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CompositeWire {
    pub key: String,
    pub mosaic: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SegmentWireRequest {
    pub expression: String,
    pub token_id: usize,
    pub frame_indices: Vec<usize>,
    pub composite: CompositeWire,
    pub frames: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SegmentWireResponse {
    pub token_id: usize,
    pub masks: BTreeMap<String, String>,
}

pub fn encode_segment_request(req: &SegmentRequest) -> SegmentWireRequest {
    let b64 = base64::engine::general_purpose::STANDARD;
    SegmentWireRequest {
        expression: req.expression.clone(),
        token_id: req.token_id,
        frame_indices: req.frame_indices().collect(),
        composite: CompositeWire {
            key: b64.encode(imageio::encode_rgb_png(&req.composite.key_image)),
            mosaic: b64.encode(imageio::encode_rgb_png(&req.composite.mosaic)),
        },
        frames: req.frames.iter().map(|(_, img)| b64.encode(imageio::encode_rgb_png(img))).collect(),
    }
}

pub fn decode_segment_response(wire: SegmentWireResponse) -> std::result::Result<SegmentResponse, String> {
    let masks = wire
        .masks
        .into_iter()
        .map(|(k, v)| {
            let f: usize = k.parse().map_err(|_| format!("bad frame index '{k}'"))?;
            Ok((f, decode_soft_rle(&v)?))
        })
        .collect::<std::result::Result<_, String>>()?;
    Ok(SegmentResponse {
        token_id: wire.token_id,
        masks,
    })
}

/// A segmentation service behind the HTTP wire protocol.
pub struct HttpBackend {
    url: String,
    agent: ureq::Agent,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend").field("url", &self.url).finish()
    }
}

impl HttpBackend {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        Self {
            url: url.into(),
            agent: ureq::Agent::config_builder()
                .timeout_global(Some(timeout))
                .http_status_as_error(false)
                .build()
                .into(),
        }
    }
}

impl SegmentationBackend for HttpBackend {
    fn name(&self) -> &str {
        "http"
    }

    fn segment(&self, req: &SegmentRequest) -> std::result::Result<SegmentResponse, String> {
        let mut resp = self
            .agent
            .post(&self.url)
            .send_json(encode_segment_request(req))
            .map_err(|e| format!("request failed: {e}"))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .with_config()
            .limit(1 << 30)
            .read_to_string()
            .map_err(|e| format!("reading response: {e}"))?;
        if status != 200 {
            return Err(format!("HTTP {status}: {}", text.chars().take(200).collect::<String>()));
        }
        let wire: SegmentWireResponse =
            serde_json::from_str(&text).map_err(|e| format!("schema-invalid response: {e}"))?;
        if wire.token_id != req.token_id {
            return Err(format!("asked for token {}, got token {}", req.token_id, wire.token_id));
        }
        decode_segment_response(wire)
    }
}

/// Checks that a response covers exactly the requested frames at the right size.
pub fn check_response(req: &SegmentRequest, resp: &SegmentResponse) -> Result<(), String> {
    for f in req.frame_indices() {
        let m = resp
            .masks
            .get(&f)
            .ok_or_else(|| format!("no mask for governed frame {f}"))?;
        if m.dims() != (req.width, req.height) {
            return Err(format!(
                "mask for frame {f} is {}x{}, video is {}x{}",
                m.width(),
                m.height(),
                req.width,
                req.height
            ));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soft_rle_round_trip_is_quantized() {
        let values: Vec<f32> = (0..12).map(|i| (i % 5) as f32 / 4.0).collect();
        let m = SoftMask::new(4, 3, values).unwrap();
        let back = decode_soft_rle(&encode_soft_rle(&m)).unwrap();
        for (a, b) in m.values().iter().zip(back.values()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
        }
    }

    #[test]
    fn soft_rle_format() {
        let m = SoftMask::new(2, 2, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        // columns: (1,1) then (0,0)
        assert_eq!(encode_soft_rle(&m), "2x2:255*2,0*2");
        assert!(decode_soft_rle("2x2:255*3").is_err());
        assert!(decode_soft_rle("2x2:255*5").is_err());
        assert!(decode_soft_rle("2by2:0*4").is_err());
        assert_eq!(decode_soft_rle("0x0:").unwrap().values().len(), 0);
    }

    #[test]
    fn forced_disk_is_centred() {
        let d = ForcedMappingBackend::disk(64, 48);
        assert!(d.get(32, 24));
        assert!(!d.get(0, 0));
        assert!(d.count_ones() > 0);
    }
}
