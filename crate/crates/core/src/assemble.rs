//! Joins per-token segmentation output into a masklet.
//!
//! Each frame takes the soft mask from its governing token. Frames shared by
//! two tokens take the pointwise mean of both soft masks. The result is then
//! thresholded.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{threshold, Masklet, SoftMask};
use crate::scheduler::ClipPlan;

/// Soft masks decoded from one token, keyed by original frame index.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentResponse {
    pub token_id: usize,
    pub masks: BTreeMap<usize, SoftMask>,
}

/// Builds the masklet for `plan` from one response per token. The order of
/// `responses` does not matter.
pub fn assemble_masklet(
    expression_id: &str,
    plan: &ClipPlan,
    responses: &[SegmentResponse],
    tau: f32,
    dims: (usize, usize),
) -> Result<Masklet> {
    let mut by_token: Vec<Option<&SegmentResponse>> = alloc::vec![None; plan.n_clips()];
    for r in responses {
        let slot = by_token
            .get_mut(r.token_id)
            .ok_or(Error::UnknownToken(r.token_id))?;
        if slot.replace(r).is_some() {
            return Err(Error::DuplicateToken(r.token_id));
        }
    }
    if let Some(missing) = by_token.iter().position(Option::is_none) {
        return Err(Error::MissingToken(missing));
    }

    let soft_for = |token: usize, frame: usize| -> Result<&SoftMask> {
        let mask = by_token[token]
            .and_then(|r| r.masks.get(&frame))
            .ok_or(Error::MissingFrameMask { token, frame })?;
        if mask.dims() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                found: mask.dims(),
            });
        }
        Ok(mask)
    };

    let mut masks = Vec::with_capacity(plan.video_len());
    for frame in 0..plan.video_len() {
        let mask = match *plan.governing_tokens(frame)? {
            [t] => threshold(soft_for(t, frame)?, tau)?,
            [a, b] => threshold(&soft_for(a, frame)?.mean(soft_for(b, frame)?)?, tau)?,
            _ => unreachable!("plans assign one or two tokens per frame"),
        };
        masks.push(mask);
    }
    Masklet::with_shape(expression_id, masks, plan.video_len(), dims.0, dims.1)
}
