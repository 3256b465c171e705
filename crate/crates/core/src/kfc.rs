//! Key frame compression.
//!
//! A clip of `g² + 1` frames becomes its first frame, untouched, plus one
//! mosaic holding the other `g²` frames as a `g x g` grid of tiles in
//! temporal row-major order. The mosaic has the frame's dimensions; each tile
//! is `floor(W / g) x floor(H / g)` and any leftover right/bottom strip stays
//! black. Tiles are produced by integer box averaging, rounded half up.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::Image;

impl AsRef<Image> for Image {
    fn as_ref(&self) -> &Image {
        self
    }
}

/// Pixel rectangle `(x, y, width, height)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

/// A compressed clip: the key frame and a mosaic of the remaining frames.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompositeFrame {
    pub clip_index: usize,
    pub key_image: Arc<Image>,
    pub mosaic: Image,
    pub grid: usize,
    pub tile_width: usize,
    pub tile_height: usize,
}

impl CompositeFrame {
    pub fn tile_rect(&self, tile_index: usize) -> Result<Rect> {
        mosaic_tile_rect(self.grid, tile_index, self.mosaic.width(), self.mosaic.height())
    }

    /// Copies tile `tile_index` out of the mosaic.
    pub fn tile(&self, tile_index: usize) -> Result<Image> {
        let r = self.tile_rect(tile_index)?;
        let mut out = Image::new(r.width, r.height);
        for y in 0..r.height {
            for x in 0..r.width {
                out.put_pixel(x, y, self.mosaic.pixel(r.x + x, r.y + y));
            }
        }
        Ok(out)
    }
}

/// Rectangle of tile `tile_index` in a `g x g` mosaic of the given size.
pub fn mosaic_tile_rect(
    grid: usize,
    tile_index: usize,
    mosaic_width: usize,
    mosaic_height: usize,
) -> Result<Rect> {
    let tiles = grid * grid;
    if tile_index >= tiles {
        return Err(Error::TileOutOfRange {
            index: tile_index,
            tiles,
        });
    }
    let (w, h) = (mosaic_width / grid, mosaic_height / grid);
    Ok(Rect {
        x: (tile_index % grid) * w,
        y: (tile_index / grid) * h,
        width: w,
        height: h,
    })
}

/// Compresses a clip of exactly `grid² + 1` equally sized frames.
pub fn compress_clip<F>(clip_index: usize, frames: &[F], grid: usize) -> Result<CompositeFrame>
where
    F: AsRef<Image> + Clone + Into<Arc<Image>>,
{
    let expected = grid * grid + 1;
    if grid == 0 || frames.len() != expected {
        return Err(Error::ClipLength {
            expected,
            found: frames.len(),
        });
    }
    let dims = frames[0].as_ref().dims();
    if let Some(bad) = frames.iter().find(|f| f.as_ref().dims() != dims) {
        return Err(Error::DimensionMismatch {
            expected: dims,
            found: bad.as_ref().dims(),
        });
    }
    let (width, height) = dims;
    let (tile_width, tile_height) = (width / grid, height / grid);
    if tile_width == 0 || tile_height == 0 {
        return Err(Error::FrameTooSmall {
            width,
            height,
            grid,
        });
    }

    let mut mosaic = Image::new(width, height);
    for (tile_index, frame) in frames[1..].iter().enumerate() {
        let rect = mosaic_tile_rect(grid, tile_index, width, height)?;
        box_downscale_into(frame.as_ref(), &mut mosaic, rect);
    }

    Ok(CompositeFrame {
        clip_index,
        key_image: frames[0].clone().into(),
        mosaic,
        grid,
        tile_width,
        tile_height,
    })
}

/// Area-averages `src` into `rect` of `dst`.
fn box_downscale_into(src: &Image, dst: &mut Image, rect: Rect) {
    let (sw, sh) = src.dims();
    let x_edges: Vec<usize> = (0..=rect.width).map(|t| t * sw / rect.width).collect();
    let y_edges: Vec<usize> = (0..=rect.height).map(|t| t * sh / rect.height).collect();
    let raw = src.as_raw();
    for ty in 0..rect.height {
        let (y0, y1) = (y_edges[ty], y_edges[ty + 1]);
        for tx in 0..rect.width {
            let (x0, x1) = (x_edges[tx], x_edges[tx + 1]);
            let mut sum = [0u64; 3];
            for y in y0..y1 {
                let row = &raw[(y * sw + x0) * 3..(y * sw + x1) * 3];
                for px in row.chunks_exact(3) {
                    sum[0] += px[0] as u64;
                    sum[1] += px[1] as u64;
                    sum[2] += px[2] as u64;
                }
            }
            let n = ((x1 - x0) * (y1 - y0)) as u64;
            let avg = sum.map(|s| ((s + n / 2) / n) as u8);
            dst.put_pixel(rect.x + tx, rect.y + ty, avg);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn rect(x: usize, y: usize, width: usize, height: usize) -> Rect {
        Rect {
            x,
            y,
            width,
            height,
        }
    }

    #[test]
    fn tile_rects() {
        assert_eq!(mosaic_tile_rect(2, 0, 64, 64).unwrap(), rect(0, 0, 32, 32));
        assert_eq!(mosaic_tile_rect(2, 3, 64, 64).unwrap(), rect(32, 32, 32, 32));
        assert_eq!(mosaic_tile_rect(3, 4, 96, 96).unwrap(), rect(32, 32, 32, 32));
        assert_eq!(mosaic_tile_rect(3, 5, 96, 96).unwrap(), rect(64, 32, 32, 32));
        assert_eq!(
            mosaic_tile_rect(2, 4, 64, 64),
            Err(Error::TileOutOfRange { index: 4, tiles: 4 })
        );
    }

    #[test]
    fn c5_clip_layout() {
        let frames: Vec<Image> = (0..5).map(|i| Image::filled(64, 64, [i * 40, 0, 0])).collect();
        let comp = compress_clip(0, &frames, 2).unwrap();
        assert_eq!(comp.key_image.dims(), (64, 64));
        assert_eq!(comp.mosaic.dims(), (64, 64));
        assert_eq!((comp.tile_width, comp.tile_height), (32, 32));
        for t in 0..4 {
            let tile = comp.tile(t).unwrap();
            assert_eq!(tile, Image::filled(32, 32, [(t as u8 + 1) * 40, 0, 0]));
        }
    }

    #[test]
    fn identical_frames_give_identical_tiles() {
        let mut img = Image::new(30, 30);
        for y in 0..30 {
            for x in 0..30 {
                img.put_pixel(x, y, [(x * 8) as u8, (y * 8) as u8, ((x + y) * 3) as u8]);
            }
        }
        let frames = vec![img.clone(); 10];
        let comp = compress_clip(4, &frames, 3).unwrap();
        let first = comp.tile(0).unwrap();
        for t in 1..9 {
            assert_eq!(comp.tile(t).unwrap(), first);
        }
        assert_eq!(*comp.key_image, img);
        assert_eq!(comp.clip_index, 4);
    }

    #[test]
    fn non_divisible_frames_pad_with_black() {
        let frames = vec![Image::filled(10, 7, [9, 9, 9]); 5];
        let comp = compress_clip(0, &frames, 2).unwrap();
        assert_eq!((comp.tile_width, comp.tile_height), (5, 3));
        assert_eq!(comp.mosaic.dims(), (10, 7));
        assert_eq!(comp.mosaic.pixel(9, 5), [9, 9, 9]);
        assert_eq!(comp.mosaic.pixel(9, 6), [0, 0, 0]);
    }

    #[test]
    fn box_average_rounds_half_up() {
        // 2x1 source [0, 1] averaged into one pixel: (1 + 1) / 2 = 1.
        let mut src = Image::new(2, 2);
        src.put_pixel(1, 0, [1, 3, 255]);
        let mut dst = Image::new(1, 1);
        box_downscale_into(&src, &mut dst, rect(0, 0, 1, 1));
        // sums: r=1, g=3, b=255 over 4 pixels.
        assert_eq!(dst.pixel(0, 0), [0, 1, 64]);
    }

    #[test]
    fn errors() {
        let frames = vec![Image::new(8, 8); 4];
        assert!(matches!(
            compress_clip(0, &frames, 2),
            Err(Error::ClipLength { expected: 5, found: 4 })
        ));
        let mut frames = vec![Image::new(8, 8); 5];
        frames[3] = Image::new(8, 9);
        assert!(matches!(
            compress_clip(0, &frames, 2),
            Err(Error::DimensionMismatch { .. })
        ));
        let frames = vec![Image::new(2, 8); 10];
        assert!(matches!(
            compress_clip(0, &frames, 3),
            Err(Error::FrameTooSmall { .. })
        ));
    }
}
