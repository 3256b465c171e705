//! Uniform+ frame sampling and clip planning.
//!
//! A plan lays `t_target` sampling slots over the video and cuts them into
//! `n_clips` clips of `c = g² + 1` slots. Each clip is driven by one
//! segmentation token whose id is the clip index.
//!
//! * Videos with at least `t_target` frames are sampled at `floor(i * V / t_target)`.
//!   Frames that are not sampled are governed by the nearest sampled frame
//!   (ties go to the earlier one), so every frame carries exactly one token.
//! * Shorter videos are split into `n_clips` contiguous groups starting at
//!   `floor(k * V / n_clips)`. A clip with room takes the next group's first
//!   frame as its last real slot, then repeats its last frame to fill `c`
//!   slots. Such boundary frames sit in two clips and carry both tokens.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};

/// Temporal configuration: `t_target` slots split into `n_clips` clips.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    pub t_target: usize,
    pub n_clips: usize,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            t_target: 100,
            n_clips: 10,
        }
    }
}

impl SchedulerConfig {
    pub fn new(t_target: usize, n_clips: usize) -> Result<Self> {
        let cfg = Self { t_target, n_clips };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Returns `(c, g)` with `c = t_target / n_clips = g² + 1`.
    pub fn validate(&self) -> Result<(usize, usize)> {
        if self.n_clips == 0 || self.t_target == 0 {
            return Err(Error::InvalidSchedule(format!(
                "t_target ({}) and n_clips ({}) must be positive",
                self.t_target, self.n_clips
            )));
        }
        if !self.t_target.is_multiple_of(self.n_clips) {
            return Err(Error::InvalidSchedule(format!(
                "t_target {} is not divisible by n_clips {}",
                self.t_target, self.n_clips
            )));
        }
        let c = self.t_target / self.n_clips;
        let g = grid_side(c).ok_or_else(|| {
            Error::InvalidSchedule(format!("clip length {c} is not g^2 + 1 for any g >= 1"))
        })?;
        Ok((c, g))
    }

    pub fn clip_len(&self) -> Result<usize> {
        self.validate().map(|(c, _)| c)
    }

    pub fn grid(&self) -> Result<usize> {
        self.validate().map(|(_, g)| g)
    }
}

/// `g` such that `c = g² + 1`, if any.
pub fn grid_side(c: usize) -> Option<usize> {
    if c < 2 {
        return None;
    }
    let n = c - 1;
    let mut g = 1usize;
    while (g + 1) * (g + 1) <= n {
        g += 1;
    }
    (g * g == n).then_some(g)
}

/// One clip: its key frame and the `c - 1` frames compressed into the mosaic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Clip {
    pub key_frame: usize,
    pub members: Vec<usize>,
}

/// The sampling and token layout for one video.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClipPlan {
    video_len: usize,
    clip_len: usize,
    grid: usize,
    sampled: Vec<usize>,
    clips: Vec<Clip>,
    #[serde(serialize_with = "tokens_as_map")]
    token_assignments: Vec<Vec<usize>>,
}

fn tokens_as_map<S: Serializer>(tokens: &[Vec<usize>], s: S) -> core::result::Result<S::Ok, S::Error> {
    let map: BTreeMap<usize, &Vec<usize>> = tokens.iter().enumerate().collect();
    map.serialize(s)
}

impl ClipPlan {
    pub fn video_len(&self) -> usize {
        self.video_len
    }

    pub fn clip_len(&self) -> usize {
        self.clip_len
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    /// Slot sequence: original frame indices, `n_clips * c` entries, non-decreasing.
    pub fn sampled(&self) -> &[usize] {
        &self.sampled
    }

    pub fn clips(&self) -> &[Clip] {
        &self.clips
    }

    pub fn n_clips(&self) -> usize {
        self.clips.len()
    }

    /// Frame indices occupying clip `k`'s slots, key frame first.
    pub fn clip_slots(&self, k: usize) -> &[usize] {
        &self.sampled[k * self.clip_len..(k + 1) * self.clip_len]
    }

    /// Token ids per original frame index.
    pub fn token_assignments(&self) -> &[Vec<usize>] {
        &self.token_assignments
    }

    /// Token ids governing `frame`: one id, or two consecutive ids for a
    /// frame shared by adjacent clips of a short video.
    pub fn governing_tokens(&self, frame: usize) -> Result<&[usize]> {
        self.token_assignments
            .get(frame)
            .map(Vec::as_slice)
            .ok_or(Error::FrameOutOfRange {
                index: frame,
                len: self.video_len,
            })
    }

    /// Original frames whose masks are decoded from `token`, ascending.
    pub fn governed_frames(&self, token: usize) -> Vec<usize> {
        self.token_assignments
            .iter()
            .enumerate()
            .filter(|(_, ids)| ids.contains(&token))
            .map(|(f, _)| f)
            .collect()
    }

    /// True when some frame carries two tokens.
    pub fn has_dual_tokens(&self) -> bool {
        self.token_assignments.iter().any(|ids| ids.len() == 2)
    }
}

/// Plans clips for a video of `video_len` frames.
pub fn plan(video_len: usize, cfg: &SchedulerConfig) -> Result<ClipPlan> {
    let (c, g) = cfg.validate()?;
    if video_len == 0 {
        return Err(Error::InvalidSchedule("video has no frames".into()));
    }
    if video_len >= cfg.t_target {
        Ok(plan_long(video_len, cfg.t_target, c, g))
    } else if video_len >= cfg.n_clips {
        Ok(plan_short(video_len, cfg.n_clips, c, g))
    } else {
        Err(Error::InvalidSchedule(format!(
            "video of {video_len} frames is shorter than n_clips {}",
            cfg.n_clips
        )))
    }
}

fn plan_long(video_len: usize, t_target: usize, c: usize, g: usize) -> ClipPlan {
    let sampled: Vec<usize> = (0..t_target)
        .map(|i| ((i as u64 * video_len as u64) / t_target as u64) as usize)
        .collect();

    let token_assignments = (0..video_len)
        .map(|f| {
            // First slot at or after f; compare with its predecessor.
            let after = sampled.partition_point(|&s| s < f);
            let slot = if after == sampled.len() {
                after - 1
            } else if after == 0 || sampled[after] == f {
                after
            } else if f - sampled[after - 1] <= sampled[after] - f {
                after - 1
            } else {
                after
            };
            alloc::vec![slot / c]
        })
        .collect();

    finish(video_len, c, g, sampled, token_assignments)
}

fn plan_short(video_len: usize, n_clips: usize, c: usize, g: usize) -> ClipPlan {
    let start = |k: usize| k * video_len / n_clips;
    let mut sampled = Vec::with_capacity(n_clips * c);
    let mut token_assignments: Vec<Vec<usize>> = alloc::vec![Vec::new(); video_len];

    for k in 0..n_clips {
        let mut slots: Vec<usize> = (start(k)..start(k + 1)).collect();
        if k + 1 < n_clips && slots.len() < c {
            slots.push(start(k + 1));
        }
        let last = *slots.last().expect("groups are non-empty when video_len >= n_clips");
        slots.resize(c, last);
        for &f in &slots {
            if token_assignments[f].last() != Some(&k) {
                token_assignments[f].push(k);
            }
        }
        sampled.extend_from_slice(&slots);
    }

    finish(video_len, c, g, sampled, token_assignments)
}

fn finish(
    video_len: usize,
    c: usize,
    g: usize,
    sampled: Vec<usize>,
    token_assignments: Vec<Vec<usize>>,
) -> ClipPlan {
    let clips = sampled
        .chunks(c)
        .map(|run| Clip {
            key_frame: run[0],
            members: run[1..].to_vec(),
        })
        .collect();
    ClipPlan {
        video_len,
        clip_len: c,
        grid: g,
        sampled,
        clips,
        token_assignments,
    }
}
