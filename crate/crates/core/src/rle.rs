//! Column-major run-length encoding of binary masks (COCO layout).
//!
//! Runs alternate between 0s and 1s and always start with a 0-run, which may
//! be empty. Encoding is canonical: no other run is empty.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::BinaryMask;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RleMask {
    pub width: usize,
    pub height: usize,
    pub runs: Vec<u32>,
}

pub fn rle_encode(mask: &BinaryMask) -> RleMask {
    let (w, h) = mask.dims();
    let mut runs = Vec::new();
    let mut current = false;
    let mut len = 0u32;
    for x in 0..w {
        for y in 0..h {
            let bit = mask.get(x, y);
            if bit != current {
                runs.push(len);
                current = bit;
                len = 0;
            }
            len += 1;
        }
    }
    if w * h > 0 {
        runs.push(len);
    }
    RleMask {
        width: w,
        height: h,
        runs,
    }
}

/// Inverse of [`rle_encode`]. Non-canonical runs (empty interior runs) are
/// accepted; the run total must equal `width * height`.
pub fn rle_decode(rle: &RleMask) -> Result<BinaryMask> {
    let (w, h) = (rle.width, rle.height);
    let total: u64 = rle.runs.iter().map(|&r| r as u64).sum();
    if total != (w * h) as u64 {
        return Err(Error::RunSum {
            expected: w * h,
            found: total as usize,
        });
    }
    let mut mask = BinaryMask::new(w, h);
    let mut pos = 0usize;
    for (i, &run) in rle.runs.iter().enumerate() {
        let run = run as usize;
        if i % 2 == 1 {
            for p in pos..pos + run {
                // column-major position p -> (x, y)
                mask.set(p / h, p % h, true);
            }
        }
        pos += run;
    }
    Ok(mask)
}
