//! Compact grid representations: crop frame regions at key-pose boxes,
//! resize them to fixed tiles, and assemble the tiles into one grayscale
//! image separated by zero-valued borders.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pose_data::{BBox, GrayImage, Keypoint2D};

pub const DEFAULT_TILE_SIZE: u32 = 112;
pub const DEFAULT_BORDER: u32 = 3;
pub const DEFAULT_ROWS: u32 = 2;
pub const DEFAULT_COLS: u32 = 4;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("bbox does not overlap the frame")]
    NoOverlap,
    #[error("expected {expected} tiles, got {got}")]
    TileCountMismatch { expected: usize, got: usize },
    #[error("tile {index} is {got_w}x{got_h}, expected {want}x{want}")]
    TileSizeMismatch {
        index: usize,
        got_w: u32,
        got_h: u32,
        want: u32,
    },
    #[error("no tiles to assemble")]
    EmptyTiles,
}

/// Grid geometry: tiles laid out row-major with a `border`-px zero margin
/// around and between them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridLayout {
    pub rows: u32,
    pub cols: u32,
    pub tile_size: u32,
    pub border: u32,
}

impl Default for GridLayout {
    fn default() -> Self {
        Self {
            rows: DEFAULT_ROWS,
            cols: DEFAULT_COLS,
            tile_size: DEFAULT_TILE_SIZE,
            border: DEFAULT_BORDER,
        }
    }
}

impl GridLayout {
    pub fn capacity(&self) -> usize {
        (self.rows * self.cols) as usize
    }

    pub fn grid_width(&self) -> u32 {
        self.cols * self.tile_size + (self.cols + 1) * self.border
    }

    pub fn grid_height(&self) -> u32 {
        self.rows * self.tile_size + (self.rows + 1) * self.border
    }

    /// Top-left pixel of tile `index` (row-major).
    pub fn tile_origin(&self, index: usize) -> (u32, u32) {
        let r = index as u32 / self.cols;
        let c = index as u32 % self.cols;
        (
            self.border + c * (self.tile_size + self.border),
            self.border + r * (self.tile_size + self.border),
        )
    }
}

/// One resized crop plus where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Tile {
    pub image: GrayImage,
    pub source_frame: u32,
    /// Box requested by the caller.
    pub source_bbox: BBox,
    /// Integer pixel rectangle actually cropped after clamping:
    /// (x0, y0, width, height).
    pub crop_rect: (u32, u32, u32, u32),
}

/// Bilinear resize with half-pixel centers; edge samples clamp.
pub fn resize_bilinear(src: &GrayImage, out_w: u32, out_h: u32) -> GrayImage {
    let mut out = GrayImage::new(out_w, out_h);
    let sx_scale = src.width() as f64 / out_w as f64;
    let sy_scale = src.height() as f64 / out_h as f64;
    let max_x = src.width() as i64 - 1;
    let max_y = src.height() as i64 - 1;
    for oy in 0..out_h {
        let sy = (oy as f64 + 0.5) * sy_scale - 0.5;
        let y0 = sy.floor();
        let fy = sy - y0;
        let y0i = (y0 as i64).clamp(0, max_y) as u32;
        let y1i = (y0 as i64 + 1).clamp(0, max_y) as u32;
        for ox in 0..out_w {
            let sx = (ox as f64 + 0.5) * sx_scale - 0.5;
            let x0 = sx.floor();
            let fx = sx - x0;
            let x0i = (x0 as i64).clamp(0, max_x) as u32;
            let x1i = (x0 as i64 + 1).clamp(0, max_x) as u32;
            let v00 = src.get(x0i, y0i) as f64;
            let v01 = src.get(x1i, y0i) as f64;
            let v10 = src.get(x0i, y1i) as f64;
            let v11 = src.get(x1i, y1i) as f64;
            let top = v00 * (1.0 - fx) + v01 * fx;
            let bottom = v10 * (1.0 - fx) + v11 * fx;
            let v = top * (1.0 - fy) + bottom * fy;
            out.set(ox, oy, v.round().clamp(0.0, 255.0) as u8);
        }
    }
    out
}

/// Clamp `bbox` to the frame, crop the covered integer pixel rectangle, and
/// resize it to `tile_size x tile_size`.
pub fn extract_tile(
    frame: &GrayImage,
    frame_index: u32,
    bbox: &BBox,
    tile_size: u32,
) -> Result<Tile, GridError> {
    if bbox.fully_outside(frame.width(), frame.height()) {
        return Err(GridError::NoOverlap);
    }
    let x0 = bbox.left.max(0.0).floor() as u32;
    let y0 = bbox.top.max(0.0).floor() as u32;
    let x1 = (bbox.right().min(frame.width() as f64).ceil() as u32).max(x0 + 1);
    let y1 = (bbox.bottom().min(frame.height() as f64).ceil() as u32).max(y0 + 1);
    let x1 = x1.min(frame.width());
    let y1 = y1.min(frame.height());
    if x1 <= x0 || y1 <= y0 {
        return Err(GridError::NoOverlap);
    }
    let (w, h) = (x1 - x0, y1 - y0);
    let mut crop = GrayImage::new(w, h);
    for y in 0..h {
        for x in 0..w {
            crop.set(x, y, frame.get(x0 + x, y0 + y));
        }
    }
    Ok(Tile {
        image: resize_bilinear(&crop, tile_size, tile_size),
        source_frame: frame_index,
        source_bbox: *bbox,
        crop_rect: (x0, y0, w, h),
    })
}

/// Stamp a bright 3x3 marker at each joint, mapped into tile coordinates.
pub fn draw_joint_markers(tile: &mut Tile, joints: &[Keypoint2D], tile_size: u32) {
    let (x0, y0, w, h) = tile.crop_rect;
    for j in joints {
        let tx = (j.x - x0 as f64) * tile_size as f64 / w as f64;
        let ty = (j.y - y0 as f64) * tile_size as f64 / h as f64;
        let cx = tx.round() as i64;
        let cy = ty.round() as i64;
        for dy in -1..=1i64 {
            for dx in -1..=1i64 {
                let px = cx + dx;
                let py = cy + dy;
                if px >= 0 && py >= 0 && (px as u32) < tile_size && (py as u32) < tile_size {
                    tile.image.set(px as u32, py as u32, 255);
                }
            }
        }
    }
}

/// Where one grid tile came from, for the sidecar provenance document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileSource {
    pub frame: u32,
    pub bbox: [f64; 4],
    /// True when this slot was filled by duplicating the last key-pose.
    pub padded: bool,
}

/// The classifier input: one grayscale montage of key-pose crops.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionGrid {
    pub image: GrayImage,
    pub layout: GridLayout,
    pub label: Option<u32>,
    pub sources: Vec<TileSource>,
}

/// Place exactly `rows x cols` tiles row-major with zero borders.
pub fn assemble_grid(
    tiles: &[Tile],
    layout: &GridLayout,
    label: Option<u32>,
) -> Result<ActionGrid, GridError> {
    assemble_with_flags(tiles, &vec![false; tiles.len()], layout, label)
}

fn assemble_with_flags(
    tiles: &[Tile],
    padded: &[bool],
    layout: &GridLayout,
    label: Option<u32>,
) -> Result<ActionGrid, GridError> {
    if tiles.len() != layout.capacity() {
        return Err(GridError::TileCountMismatch {
            expected: layout.capacity(),
            got: tiles.len(),
        });
    }
    for (i, t) in tiles.iter().enumerate() {
        if t.image.width() != layout.tile_size || t.image.height() != layout.tile_size {
            return Err(GridError::TileSizeMismatch {
                index: i,
                got_w: t.image.width(),
                got_h: t.image.height(),
                want: layout.tile_size,
            });
        }
    }
    let mut image = GrayImage::new(layout.grid_width(), layout.grid_height());
    for (i, t) in tiles.iter().enumerate() {
        let (gx, gy) = layout.tile_origin(i);
        for y in 0..layout.tile_size {
            for x in 0..layout.tile_size {
                image.set(gx + x, gy + y, t.image.get(x, y));
            }
        }
    }
    let sources = tiles
        .iter()
        .zip(padded.iter())
        .map(|(t, &pad)| TileSource {
            frame: t.source_frame,
            bbox: [
                t.source_bbox.left,
                t.source_bbox.top,
                t.source_bbox.width,
                t.source_bbox.height,
            ],
            padded: pad,
        })
        .collect();
    Ok(ActionGrid {
        image,
        layout: *layout,
        label,
        sources,
    })
}

/// Assemble after the padding rule: short tile lists are filled by
/// duplicating the last tile (flagged in provenance), oversized lists are
/// rejected.
pub fn build_grid(
    tiles: Vec<Tile>,
    layout: &GridLayout,
    label: Option<u32>,
) -> Result<ActionGrid, GridError> {
    if tiles.is_empty() {
        return Err(GridError::EmptyTiles);
    }
    if tiles.len() > layout.capacity() {
        return Err(GridError::TileCountMismatch {
            expected: layout.capacity(),
            got: tiles.len(),
        });
    }
    let mut padded = vec![false; tiles.len()];
    let mut tiles = tiles;
    while tiles.len() < layout.capacity() {
        tiles.push(tiles.last().unwrap().clone());
        padded.push(true);
    }
    assemble_with_flags(&tiles, &padded, layout, label)
}

/// Cut a grid image back into its tile images.
pub fn disassemble_grid(grid: &ActionGrid) -> Vec<GrayImage> {
    let layout = &grid.layout;
    (0..layout.capacity())
        .map(|i| {
            let (gx, gy) = layout.tile_origin(i);
            let mut img = GrayImage::new(layout.tile_size, layout.tile_size);
            for y in 0..layout.tile_size {
                for x in 0..layout.tile_size {
                    img.set(x, y, grid.image.get(gx + x, gy + y));
                }
            }
            img
        })
        .collect()
}

/// True iff every pixel in the border bands is exactly zero.
pub fn borders_are_zero(grid: &ActionGrid) -> bool {
    let layout = &grid.layout;
    let period = layout.tile_size + layout.border;
    let in_border = |v: u32| v % period < layout.border;
    for y in 0..grid.image.height() {
        for x in 0..grid.image.width() {
            if (in_border(x) || in_border(y)) && grid.image.get(x, y) != 0 {
                return false;
            }
        }
    }
    true
}
