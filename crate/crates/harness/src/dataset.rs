//! MeViS-style dataset layout, ground truth and prediction persistence.
//!
//! ```text
//! <root>/<split>/meta_expressions.json
//! <root>/<split>/JPEGImages/<video_id>/<frame>.{jpg,jpeg,png}
//! <root>/<split>/Annotations/<video_id>/<frame>.png      (optional)
//! ```
//!
//! `meta_expressions.json`:
//!
//! ```json
//! {"schema_version": 1,
//!  "videos": {"<video_id>": {"frames": ["00000", ...],
//!                            "expressions": {"<exp_id>": {"exp": "...", "obj_id": [1]}}}}}
//! ```
//!
//! Annotations are palette-indexed PNGs whose pixel index is the object id
//! (0 is background). An expression's ground truth is the union of its
//! objects; an empty `obj_id` list marks a no-target expression. Expression
//! ids are `<video_id>/<exp_id>`, which also gives the prediction layout
//! `<out>/<video_id>/<exp_id>/<frame>.png`.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use rvos_core::metrics::Counts;
use rvos_core::{BinaryMask, FrameRef, FrameSource, Image, Masklet, ReferringExpression, VideoSequence};

use crate::error::{HarnessError, Result};
use crate::imageio;

pub const SCHEMA_VERSION: u32 = 1;
pub const META_FILE: &str = "meta_expressions.json";
pub const FRAMES_DIR: &str = "JPEGImages";
pub const ANNOTATIONS_DIR: &str = "Annotations";
pub const PREDICTIONS_INDEX: &str = "predictions.json";

const FRAME_EXTENSIONS: [&str; 4] = ["jpg", "jpeg", "png", "JPG"];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetaFile {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub videos: IndexMap<String, MetaVideo>,
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetaVideo {
    pub frames: Vec<String>,
    #[serde(default)]
    pub expressions: IndexMap<String, MetaExpression>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetaExpression {
    pub exp: String,
    #[serde(default)]
    pub obj_id: Vec<u32>,
}

/// A video of the manifest with its frame file stems.
#[derive(Debug, Clone)]
pub struct VideoEntry {
    pub video: VideoSequence,
    pub frame_names: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct DatasetManifest {
    root: PathBuf,
    split: String,
    videos: Vec<VideoEntry>,
    video_index: HashMap<String, usize>,
    expressions: Vec<ReferringExpression>,
    has_annotations: bool,
}

pub fn expression_id(video_id: &str, exp_id: &str) -> String {
    format!("{video_id}/{exp_id}")
}

fn find_frame(dir: &Path, stem: &str) -> Option<PathBuf> {
    FRAME_EXTENSIONS
        .iter()
        .map(|ext| dir.join(format!("{stem}.{ext}")))
        .find(|p| p.is_file())
}

/// Reads `<root>/<split>`. Ground truth labels are filled in only when the
/// `Annotations` directory exists.
pub fn load_manifest(root: &Path, split: &str) -> Result<DatasetManifest> {
    let split_dir = root.join(split);
    let meta_path = split_dir.join(META_FILE);
    let text = fs::read_to_string(&meta_path).map_err(|e| HarnessError::io(&meta_path, e))?;
    let meta: MetaFile = serde_json::from_str(&text).map_err(|e| HarnessError::json(&meta_path, e))?;
    if meta.schema_version != SCHEMA_VERSION {
        return Err(HarnessError::Dataset(format!(
            "{}: unsupported schema_version {}",
            meta_path.display(),
            meta.schema_version
        )));
    }
    let has_annotations = split_dir.join(ANNOTATIONS_DIR).is_dir();

    let entries: Vec<_> = meta.videos.iter().collect();
    let loaded: Vec<Result<VideoEntry>> = entries
        .par_iter()
        .map(|(video_id, mv)| load_video(&split_dir, video_id, &mv.frames))
        .collect();
    let videos = loaded.into_iter().collect::<Result<Vec<_>>>()?;

    let mut expressions = Vec::new();
    for (video_id, mv) in &meta.videos {
        for (exp_id, me) in &mv.expressions {
            let gt = has_annotations.then(|| me.obj_id.clone());
            let expr = ReferringExpression::new(expression_id(video_id, exp_id), video_id.as_str(), me.exp.as_str(), gt)
                .map_err(|e| HarnessError::Dataset(format!("expression {video_id}/{exp_id}: {e}")))?;
            expressions.push(expr);
        }
    }
    DatasetManifest::new(root, split, videos, expressions, has_annotations)
}

fn load_video(split_dir: &Path, video_id: &str, frame_names: &[String]) -> Result<VideoEntry> {
    let dir = split_dir.join(FRAMES_DIR).join(video_id);
    if !dir.is_dir() {
        return Err(HarnessError::Dataset(format!(
            "video '{video_id}': frame directory {} not found",
            dir.display()
        )));
    }
    if frame_names.is_empty() {
        return Err(HarnessError::Dataset(format!("video '{video_id}' lists no frames")));
    }
    let mut frames = Vec::with_capacity(frame_names.len());
    let mut dims = None;
    for (index, stem) in frame_names.iter().enumerate() {
        let path = find_frame(&dir, stem).ok_or_else(|| {
            HarnessError::Dataset(format!("video '{video_id}': frame '{stem}' not found in {}", dir.display()))
        })?;
        let d = imageio::image_dims(&path)?;
        match dims {
            None => dims = Some(d),
            Some(first) if first != d => {
                return Err(HarnessError::Dataset(format!(
                    "video '{video_id}': frame '{stem}' is {}x{}, earlier frames are {}x{}",
                    d.0, d.1, first.0, first.1
                )))
            }
            _ => {}
        }
        frames.push(FrameRef {
            index,
            source: FrameSource::Path(path.to_string_lossy().into_owned()),
        });
    }
    let (w, h) = dims.expect("at least one frame");
    Ok(VideoEntry {
        video: VideoSequence::new(video_id, frames, w, h)?,
        frame_names: frame_names.to_vec(),
    })
}

impl DatasetManifest {
    pub fn new(
        root: &Path,
        split: &str,
        videos: Vec<VideoEntry>,
        expressions: Vec<ReferringExpression>,
        has_annotations: bool,
    ) -> Result<Self> {
        let mut video_index = HashMap::new();
        for (i, v) in videos.iter().enumerate() {
            if video_index.insert(v.video.video_id().to_owned(), i).is_some() {
                return Err(HarnessError::Dataset(format!("duplicate video id '{}'", v.video.video_id())));
            }
            if v.frame_names.len() != v.video.len() {
                return Err(HarnessError::Dataset(format!(
                    "video '{}': {} frame names for {} frames",
                    v.video.video_id(),
                    v.frame_names.len(),
                    v.video.len()
                )));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for e in &expressions {
            if !video_index.contains_key(e.video_id()) {
                return Err(HarnessError::Dataset(format!(
                    "expression '{}' refers to unknown video '{}'",
                    e.expression_id(),
                    e.video_id()
                )));
            }
            if !seen.insert(e.expression_id()) {
                return Err(HarnessError::Dataset(format!("duplicate expression id '{}'", e.expression_id())));
            }
        }
        Ok(Self {
            root: root.to_path_buf(),
            split: split.to_owned(),
            videos,
            video_index,
            expressions,
            has_annotations,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn split(&self) -> &str {
        &self.split
    }

    pub fn split_dir(&self) -> PathBuf {
        self.root.join(&self.split)
    }

    pub fn videos(&self) -> &[VideoEntry] {
        &self.videos
    }

    pub fn expressions(&self) -> &[ReferringExpression] {
        &self.expressions
    }

    pub fn has_annotations(&self) -> bool {
        self.has_annotations
    }

    pub fn video(&self, video_id: &str) -> Option<&VideoEntry> {
        self.video_index.get(video_id).map(|&i| &self.videos[i])
    }

    pub fn expression(&self, expression_id: &str) -> Option<&ReferringExpression> {
        self.expressions.iter().find(|e| e.expression_id() == expression_id)
    }

    pub fn video_of(&self, expr: &ReferringExpression) -> &VideoEntry {
        self.video(expr.video_id()).expect("manifest validates video references")
    }

    /// Target / no-target counts; zeros when no ground truth is loaded.
    pub fn counts(&self) -> Counts {
        let mut c = Counts {
            n_target: 0,
            n_notarget: 0,
        };
        for e in &self.expressions {
            match e.gt_target_present() {
                Some(true) => c.n_target += 1,
                Some(false) => c.n_notarget += 1,
                None => {}
            }
        }
        c
    }

    /// Object-id maps of every annotated frame of a video.
    pub fn load_annotations(&self, video_id: &str) -> Result<Vec<Vec<u8>>> {
        let entry = self
            .video(video_id)
            .ok_or_else(|| HarnessError::Dataset(format!("unknown video '{video_id}'")))?;
        let dir = self.split_dir().join(ANNOTATIONS_DIR).join(video_id);
        entry
            .frame_names
            .iter()
            .map(|stem| {
                let path = dir.join(format!("{stem}.png"));
                let (w, h, ids) = imageio::decode_single_channel_png(&imageio::read_file(&path)?)
                    .map_err(|e| HarnessError::image(&path, e))?;
                if (w, h) != entry.video.dims() {
                    return Err(HarnessError::Dataset(format!(
                        "{}: annotation is {w}x{h}, video is {}x{}",
                        path.display(),
                        entry.video.width(),
                        entry.video.height()
                    )));
                }
                Ok(ids)
            })
            .collect()
    }
}

/// Ground-truth masklets, built per video from its annotation maps.
#[derive(Debug, Default)]
pub struct GroundTruth {
    masklets: HashMap<String, Masklet>,
}

impl GroundTruth {
    /// Loads ground truth for every expression of an annotated manifest.
    /// No-target expressions get the null masklet.
    pub fn load(manifest: &DatasetManifest) -> Result<Self> {
        if !manifest.has_annotations() {
            return Err(HarnessError::Dataset(format!(
                "{} has no {ANNOTATIONS_DIR} directory",
                manifest.split_dir().display()
            )));
        }
        let per_video: Vec<Result<Vec<(String, Masklet)>>> = manifest
            .videos()
            .par_iter()
            .map(|entry| {
                let exprs: Vec<&ReferringExpression> = manifest
                    .expressions()
                    .iter()
                    .filter(|e| e.video_id() == entry.video.video_id())
                    .collect();
                if exprs.is_empty() {
                    return Ok(Vec::new());
                }
                let maps = manifest.load_annotations(entry.video.video_id())?;
                let (w, h) = entry.video.dims();
                exprs
                    .into_iter()
                    .map(|e| {
                        let ids = e.gt_object_ids().unwrap_or(&[]);
                        let masks = maps
                            .iter()
                            .map(|m| {
                                let mut mask = BinaryMask::new(w, h);
                                for (i, &v) in m.iter().enumerate() {
                                    if v != 0 && ids.contains(&(v as u32)) {
                                        mask.set_index(i, true);
                                    }
                                }
                                mask
                            })
                            .collect();
                        Ok((e.expression_id().to_owned(), Masklet::new(e.expression_id(), masks, &entry.video)?))
                    })
                    .collect()
            })
            .collect();
        let mut masklets = HashMap::new();
        for v in per_video {
            masklets.extend(v?);
        }
        Ok(Self { masklets })
    }

    pub fn from_masklets(masklets: impl IntoIterator<Item = Masklet>) -> Self {
        Self {
            masklets: masklets.into_iter().map(|m| (m.expression_id().to_owned(), m)).collect(),
        }
    }

    pub fn get(&self, expression_id: &str) -> Option<&Masklet> {
        self.masklets.get(expression_id)
    }
}

/// Loads the decoded frames of a video (all of them).
pub fn load_video_frames(entry: &VideoEntry) -> Result<Vec<std::sync::Arc<Image>>> {
    entry.video.frames().par_iter().map(imageio::load_frame).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionIndex {
    pub schema_version: u32,
    pub split: String,
    pub expressions: Vec<PredictionEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionEntry {
    pub expression_id: String,
    pub video_id: String,
    pub frames: Vec<String>,
    pub width: usize,
    pub height: usize,
    pub null: bool,
}

fn check_masklet<'m>(manifest: &'m DatasetManifest, masklet: &Masklet) -> Result<(&'m ReferringExpression, &'m VideoEntry)> {
    let expr = manifest.expression(masklet.expression_id()).ok_or_else(|| {
        HarnessError::Predictions(format!("masklet for unknown expression '{}'", masklet.expression_id()))
    })?;
    let entry = manifest.video_of(expr);
    if masklet.len() != entry.video.len() || masklet.dims() != entry.video.dims() {
        return Err(HarnessError::Predictions(format!(
            "masklet for '{}' is {} frames of {}x{}, video is {} frames of {}x{}",
            masklet.expression_id(),
            masklet.len(),
            masklet.dims().0,
            masklet.dims().1,
            entry.video.len(),
            entry.video.width(),
            entry.video.height()
        )));
    }
    Ok((expr, entry))
}

/// Writes one expression's masks to `<out_dir>/<expression_id>/<frame>.png`.
/// Files land in a staging directory first and are moved into place in one
/// rename, so a failure never leaves a half-written expression behind.
pub fn write_masklet(manifest: &DatasetManifest, masklet: &Masklet, out_dir: &Path) -> Result<PredictionEntry> {
    let (expr, entry) = check_masklet(manifest, masklet)?;
    let final_dir = out_dir.join(expr.expression_id());
    let staging = out_dir.join(format!(".staging-{}", expr.expression_id().replace('/', "__")));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| HarnessError::io(&staging, e))?;
    }
    fs::create_dir_all(&staging).map_err(|e| HarnessError::io(&staging, e))?;
    for (mask, stem) in masklet.masks().iter().zip(&entry.frame_names) {
        imageio::write_file(&staging.join(format!("{stem}.png")), &imageio::encode_mask_png(mask))?;
    }
    if final_dir.exists() {
        fs::remove_dir_all(&final_dir).map_err(|e| HarnessError::io(&final_dir, e))?;
    }
    if let Some(parent) = final_dir.parent() {
        fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
    }
    fs::rename(&staging, &final_dir).map_err(|e| HarnessError::io(&final_dir, e))?;
    Ok(PredictionEntry {
        expression_id: expr.expression_id().to_owned(),
        video_id: expr.video_id().to_owned(),
        frames: entry.frame_names.clone(),
        width: entry.video.width(),
        height: entry.video.height(),
        null: masklet.is_null(),
    })
}

pub fn write_index(manifest: &DatasetManifest, entries: Vec<PredictionEntry>, out_dir: &Path) -> Result<()> {
    let index = PredictionIndex {
        schema_version: SCHEMA_VERSION,
        split: manifest.split().to_owned(),
        expressions: entries,
    };
    let mut text = serde_json::to_string_pretty(&index).expect("index serializes");
    text.push('\n');
    imageio::write_file(&out_dir.join(PREDICTIONS_INDEX), text.as_bytes())
}

/// Writes one masklet per manifest expression plus the index, in manifest order.
pub fn write_predictions(manifest: &DatasetManifest, masklets: &[Masklet], out_dir: &Path) -> Result<()> {
    let by_id: HashMap<&str, &Masklet> = masklets.iter().map(|m| (m.expression_id(), m)).collect();
    if by_id.len() != masklets.len() {
        return Err(HarnessError::Predictions("more than one masklet for an expression".into()));
    }
    for m in masklets {
        check_masklet(manifest, m)?;
    }
    let ordered: Vec<&Masklet> = manifest
        .expressions()
        .iter()
        .map(|e| {
            by_id.get(e.expression_id()).copied().ok_or_else(|| {
                HarnessError::Predictions(format!("no masklet for expression '{}'", e.expression_id()))
            })
        })
        .collect::<Result<_>>()?;
    let entries = ordered
        .par_iter()
        .map(|m| write_masklet(manifest, m, out_dir))
        .collect::<Result<Vec<_>>>()?;
    write_index(manifest, entries, out_dir)
}

pub fn read_index(dir: &Path) -> Result<PredictionIndex> {
    let path = dir.join(PREDICTIONS_INDEX);
    let text = fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
    let index: PredictionIndex = serde_json::from_str(&text).map_err(|e| HarnessError::json(&path, e))?;
    if index.schema_version != SCHEMA_VERSION {
        return Err(HarnessError::Predictions(format!(
            "{}: unsupported schema_version {}",
            path.display(),
            index.schema_version
        )));
    }
    Ok(index)
}

/// Reads the prediction of one expression.
pub fn read_masklet(manifest: &DatasetManifest, expr: &ReferringExpression, dir: &Path) -> Result<Masklet> {
    let entry = manifest.video_of(expr);
    let exp_dir = dir.join(expr.expression_id());
    let masks = entry
        .frame_names
        .iter()
        .map(|stem| {
            let path = exp_dir.join(format!("{stem}.png"));
            if !path.is_file() {
                return Err(HarnessError::Predictions(format!(
                    "expression '{}': missing frame {}",
                    expr.expression_id(),
                    path.display()
                )));
            }
            let mask = imageio::read_mask_png(&path)?;
            if mask.dims() != entry.video.dims() {
                return Err(HarnessError::Predictions(format!(
                    "{}: mask is {}x{}, video is {}x{}",
                    path.display(),
                    mask.width(),
                    mask.height(),
                    entry.video.width(),
                    entry.video.height()
                )));
            }
            Ok(mask)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Masklet::new(expr.expression_id(), masks, &entry.video)?)
}

/// Reads every manifest expression's prediction, in manifest order.
pub fn read_predictions(manifest: &DatasetManifest, dir: &Path) -> Result<Vec<Masklet>> {
    let index = read_index(dir)?;
    for e in manifest.expressions() {
        if !index.expressions.iter().any(|p| p.expression_id == e.expression_id()) {
            return Err(HarnessError::Predictions(format!(
                "index lists no prediction for '{}'",
                e.expression_id()
            )));
        }
    }
    manifest
        .expressions()
        .par_iter()
        .map(|e| read_masklet(manifest, e, dir))
        .collect()
}
