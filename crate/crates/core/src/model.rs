//! Domain types: videos, expressions, masks and masklets.
//!
//! All types validate their invariants at construction and are immutable
//! afterwards. Masks are row-major with `(0, 0)` at the top-left corner.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Default binarization threshold for soft masks (inclusive).
pub const DEFAULT_TAU: f32 = 0.5;

/// An 8-bit RGB image, row-major, three bytes per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Image {
    /// A black image.
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height * 3],
        }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        let expected = width * height * 3;
        if data.len() != expected {
            return Err(Error::BufferLength {
                expected,
                found: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn put_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }
}

/// Where a frame's pixels come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FrameSource {
    /// A file path, resolved by whoever loads the frame.
    Path(String),
    /// Decoded pixels held in memory.
    Pixels(Arc<Image>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameRef {
    pub index: usize,
    pub source: FrameSource,
}

/// An ordered, non-empty sequence of equally sized frames.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VideoSequence {
    video_id: String,
    frames: Vec<FrameRef>,
    width: usize,
    height: usize,
}

impl VideoSequence {
    pub fn new(
        video_id: impl Into<String>,
        frames: Vec<FrameRef>,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let video_id = video_id.into();
        if frames.is_empty() {
            return Err(Error::EmptyVideo { video_id });
        }
        for (position, frame) in frames.iter().enumerate() {
            if frame.index != position {
                return Err(Error::FrameOrder {
                    position,
                    index: frame.index,
                });
            }
            if let FrameSource::Pixels(img) = &frame.source {
                if img.dims() != (width, height) {
                    return Err(Error::DimensionMismatch {
                        expected: (width, height),
                        found: img.dims(),
                    });
                }
            }
        }
        Ok(Self {
            video_id,
            frames,
            width,
            height,
        })
    }

    /// Builds a video from decoded images; dimensions come from the first one.
    pub fn from_images(video_id: impl Into<String>, images: Vec<Image>) -> Result<Self> {
        let (width, height) = images.first().map(Image::dims).unwrap_or((0, 0));
        let frames = images
            .into_iter()
            .enumerate()
            .map(|(index, img)| FrameRef {
                index,
                source: FrameSource::Pixels(Arc::new(img)),
            })
            .collect();
        Self::new(video_id, frames, width, height)
    }

    pub fn video_id(&self) -> &str {
        &self.video_id
    }

    pub fn frames(&self) -> &[FrameRef] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    /// Always false: empty videos are rejected at construction.
    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

/// A natural-language query against one video.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferringExpression {
    expression_id: String,
    video_id: String,
    text: String,
    gt_object_ids: Option<Vec<u32>>,
}

impl ReferringExpression {
    /// `gt_object_ids` is `None` when no ground truth is loaded. An empty list
    /// marks a no-target expression.
    pub fn new(
        expression_id: impl Into<String>,
        video_id: impl Into<String>,
        text: impl Into<String>,
        gt_object_ids: Option<Vec<u32>>,
    ) -> Result<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(Error::InvalidExpression("expression text is empty"));
        }
        let expression_id = expression_id.into();
        if expression_id.is_empty() {
            return Err(Error::InvalidExpression("expression id is empty"));
        }
        Ok(Self {
            expression_id,
            video_id: video_id.into(),
            text,
            gt_object_ids,
        })
    }

    pub fn expression_id(&self) -> &str {
        &self.expression_id
    }

    pub fn video_id(&self) -> &str {
        &self.video_id
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn gt_object_ids(&self) -> Option<&[u32]> {
        self.gt_object_ids.as_deref()
    }

    pub fn gt_target_present(&self) -> Option<bool> {
        self.gt_object_ids.as_ref().map(|ids| !ids.is_empty())
    }

    /// The same expression with ground truth stripped.
    pub fn without_ground_truth(&self) -> Self {
        Self {
            gt_object_ids: None,
            ..self.clone()
        }
    }
}

const WORD: usize = 64;

/// A packed binary mask. Bits past `width * height` in the last word are
/// always zero, so derived equality is bitwise equality of the mask.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    words: Vec<u64>,
}

impl core::fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("BinaryMask")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("ones", &self.count_ones())
            .finish()
    }
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            words: vec![0; (width * height).div_ceil(WORD)],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut mask = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    mask.set_index(y * width + x, true);
                }
            }
        }
        mask
    }

    /// Row-major booleans.
    pub fn from_bools(width: usize, height: usize, bits: &[bool]) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::BufferLength {
                expected: width * height,
                found: bits.len(),
            });
        }
        let mut mask = Self::new(width, height);
        for (i, &b) in bits.iter().enumerate() {
            if b {
                mask.set_index(i, true);
            }
        }
        Ok(mask)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn get_index(&self, i: usize) -> bool {
        self.words[i / WORD] >> (i % WORD) & 1 == 1
    }

    #[inline]
    pub fn set_index(&mut self, i: usize, value: bool) {
        let bit = 1u64 << (i % WORD);
        if value {
            self.words[i / WORD] |= bit;
        } else {
            self.words[i / WORD] &= !bit;
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.get_index(y * self.width + x)
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.set_index(y * self.width + x, value)
    }

    /// True when no bit is set.
    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// `(|self ∩ other|, |self ∪ other|)`.
    pub fn overlap_counts(&self, other: &BinaryMask) -> Result<(usize, usize)> {
        self.check_dims(other.dims())?;
        let (mut inter, mut union) = (0usize, 0usize);
        for (a, b) in self.words.iter().zip(&other.words) {
            inter += (a & b).count_ones() as usize;
            union += (a | b).count_ones() as usize;
        }
        Ok((inter, union))
    }

    /// Pixelwise OR.
    pub fn union(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.check_dims(other.dims())?;
        let words = self.words.iter().zip(&other.words).map(|(a, b)| a | b).collect();
        Ok(BinaryMask {
            width: self.width,
            height: self.height,
            words,
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len()).map(move |i| self.get_index(i))
    }

    pub(crate) fn check_dims(&self, other: (usize, usize)) -> Result<()> {
        if self.dims() != other {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: other,
            });
        }
        Ok(())
    }
}

/// Per-pixel scores in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftMask {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl SoftMask {
    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::BufferLength {
                expected: width * height,
                found: values.len(),
            });
        }
        if let Some(position) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::ScoreOutOfRange { position });
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// 1.0 where the mask is set, 0.0 elsewhere.
    pub fn from_binary(mask: &BinaryMask) -> Self {
        Self {
            width: mask.width,
            height: mask.height,
            values: mask.iter().map(|b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Pointwise mean of two soft masks.
    pub fn mean(&self, other: &SoftMask) -> Result<SoftMask> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: other.dims(),
            });
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| {
                // (a + b) / 2 can round just past the larger input for
                // nearly equal operands; clamp to stay inside [min, max].
                let m = (a + b) * 0.5;
                m.clamp(a.min(*b), a.max(*b))
            })
            .collect();
        Ok(SoftMask {
            width: self.width,
            height: self.height,
            values,
        })
    }
}

/// One binary mask per video frame for a single expression.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Masklet {
    expression_id: String,
    width: usize,
    height: usize,
    masks: Vec<BinaryMask>,
}

impl Masklet {
    /// Checks length and dimension alignment against `video`.
    pub fn new(
        expression_id: impl Into<String>,
        masks: Vec<BinaryMask>,
        video: &VideoSequence,
    ) -> Result<Self> {
        Self::with_shape(expression_id, masks, video.len(), video.width(), video.height())
    }

    pub fn with_shape(
        expression_id: impl Into<String>,
        masks: Vec<BinaryMask>,
        frame_count: usize,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        if masks.len() != frame_count {
            return Err(Error::FrameCount {
                expected: frame_count,
                found: masks.len(),
            });
        }
        for m in &masks {
            if m.dims() != (width, height) {
                return Err(Error::DimensionMismatch {
                    expected: (width, height),
                    found: m.dims(),
                });
            }
        }
        Ok(Self {
            expression_id: expression_id.into(),
            width,
            height,
            masks,
        })
    }

    pub fn expression_id(&self) -> &str {
        &self.expression_id
    }

    pub fn masks(&self) -> &[BinaryMask] {
        &self.masks
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// True when every frame's mask is empty.
    pub fn is_null(&self) -> bool {
        self.masks.iter().all(BinaryMask::is_empty)
    }

    /// The same masks under a different expression id.
    pub fn relabel(self, expression_id: impl Into<String>) -> Self {
        Self {
            expression_id: expression_id.into(),
            ..self
        }
    }
}

/// The all-empty masklet for `video`.
pub fn masklet_null(video: &VideoSequence, expression_id: &str) -> Masklet {
    Masklet {
        expression_id: expression_id.into(),
        width: video.width(),
        height: video.height(),
        masks: vec![BinaryMask::new(video.width(), video.height()); video.len()],
    }
}

/// Bit `i` is set iff `soft[i] >= tau`.
pub fn threshold(soft: &SoftMask, tau: f32) -> Result<BinaryMask> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::TauOutOfRange);
    }
    let mut mask = BinaryMask::new(soft.width, soft.height);
    for (i, &v) in soft.values.iter().enumerate() {
        if v >= tau {
            mask.set_index(i, true);
        }
    }
    Ok(mask)
}
