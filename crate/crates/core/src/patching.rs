//! Target patches, the circular scan order and per-target context selection.
//!
//! Positions outside the grid read as ghost patches: all-zero blocks that are
//! never stored.

use crate::codec::{grid_extent, EncodeMode, QuantizedRepresentation};
use crate::error::{Result, SneError};
use crate::image::ImageBuffer;

pub type Offset = (i32, i32);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContextSpec {
    pub source_offsets: Vec<Offset>,
    pub co_offsets: Vec<Offset>,
}

impl Default for ContextSpec {
    fn default() -> Self {
        ContextSpec {
            source_offsets: vec![(-1, -1), (-1, 0), (-1, 1), (0, -1)],
            co_offsets: vec![(-2, -2), (-2, 0), (-2, 2), (0, -2)],
        }
    }
}

impl ContextSpec {
    pub fn new(source_offsets: Vec<Offset>, co_offsets: Vec<Offset>) -> Result<Self> {
        let spec = ContextSpec { source_offsets, co_offsets };
        spec.validate()?;
        Ok(spec)
    }

    /// Context blocks per estimator.
    pub fn n(&self) -> usize {
        self.source_offsets.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.source_offsets.is_empty() || self.source_offsets.len() != self.co_offsets.len() {
            return Err(SneError::Config(format!(
                "context sets must be non-empty and equal in size ({} vs {})",
                self.source_offsets.len(),
                self.co_offsets.len()
            )));
        }
        let all = self.source_offsets.iter().chain(&self.co_offsets);
        if all.clone().any(|&o| o == (0, 0)) {
            return Err(SneError::Config("the target offset (0,0) cannot be context".into()));
        }
        if self.source_offsets.iter().any(|o| self.co_offsets.contains(o)) {
            return Err(SneError::Config("source and co-estimator offsets overlap".into()));
        }
        let mut seen = Vec::new();
        for o in all {
            if seen.contains(o) {
                return Err(SneError::Config(format!("duplicate offset {o:?}")));
            }
            seen.push(*o);
        }
        Ok(())
    }

    /// `"-1:-1,-1:0"` style rendering used in run configs.
    pub fn format_offsets(offsets: &[Offset]) -> String {
        offsets.iter().map(|(r, c)| format!("{r}:{c}")).collect::<Vec<_>>().join(",")
    }

    pub fn parse_offsets(s: &str) -> Result<Vec<Offset>> {
        s.split(',')
            .map(|pair| {
                let (r, c) = pair
                    .trim()
                    .split_once(':')
                    .ok_or_else(|| SneError::Config(format!("offset '{pair}' is not row:col")))?;
                let parse = |v: &str| {
                    v.trim().parse::<i32>().map_err(|_| SneError::Config(format!("bad offset component '{v}'")))
                };
                Ok((parse(r)?, parse(c)?))
            })
            .collect()
    }
}

/// Interior positions (all eight raster neighbours present) in row-major order,
/// then the border clockwise from the top-left corner.
pub fn scan_order(grid_rows: usize, grid_cols: usize) -> Vec<usize> {
    let (r, c) = (grid_rows, grid_cols);
    let mut order = Vec::with_capacity(r * c);
    for y in 1..r.saturating_sub(1) {
        for x in 1..c.saturating_sub(1) {
            order.push(y * c + x);
        }
    }
    if r == 0 || c == 0 {
        return order;
    }
    let mut ring = Vec::new();
    ring.extend((0..c).map(|x| (0, x)));
    ring.extend((1..r).map(|y| (y, c - 1)));
    if r > 1 {
        ring.extend((0..c.saturating_sub(1)).rev().map(|x| (r - 1, x)));
    }
    if c > 1 {
        ring.extend((1..r.saturating_sub(1)).rev().map(|y| (y, 0)));
    }
    let mut seen = vec![false; r * c];
    for (y, x) in ring {
        let idx = y * c + x;
        if !seen[idx] {
            seen[idx] = true;
            order.push(idx);
        }
    }
    order
}

pub fn is_border(grid_rows: usize, grid_cols: usize, idx: usize) -> bool {
    let (y, x) = (idx / grid_cols, idx % grid_cols);
    y == 0 || x == 0 || y + 1 == grid_rows || x + 1 == grid_cols
}

/// Target patches of one image plane, with their scan order.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchGrid {
    grid_rows: usize,
    grid_cols: usize,
    patch_edge: usize,
    mode: EncodeMode,
    height: usize,
    width: usize,
    targets: Vec<Vec<f64>>,
    scan: Vec<usize>,
}

pub fn build_grid(img: &ImageBuffer, patch_edge: usize, mode: EncodeMode) -> Result<PatchGrid> {
    if img.channels() != 1 {
        return Err(SneError::Geometry(format!("patch grids are built per plane; got {} channels", img.channels())));
    }
    let grid_rows = grid_extent(img.height(), patch_edge, mode)?;
    let grid_cols = grid_extent(img.width(), patch_edge, mode)?;
    let stride = mode.stride(patch_edge);
    let targets = (0..grid_rows * grid_cols)
        .map(|idx| {
            let (gy, gx) = (idx / grid_cols, idx % grid_cols);
            let mut patch = Vec::with_capacity(patch_edge * patch_edge);
            for r in 0..patch_edge {
                for c in 0..patch_edge {
                    patch.push(img.get(gy * stride + r, gx * stride + c, 0));
                }
            }
            patch
        })
        .collect();
    Ok(PatchGrid {
        grid_rows,
        grid_cols,
        patch_edge,
        mode,
        height: img.height(),
        width: img.width(),
        targets,
        scan: scan_order(grid_rows, grid_cols),
    })
}

impl PatchGrid {
    pub fn grid_dims(&self) -> (usize, usize) {
        (self.grid_rows, self.grid_cols)
    }

    pub fn patch_edge(&self) -> usize {
        self.patch_edge
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn target(&self, idx: usize) -> &[f64] {
        &self.targets[idx]
    }

    pub fn scan(&self) -> &[usize] {
        &self.scan
    }

    pub fn is_border(&self, idx: usize) -> bool {
        is_border(self.grid_rows, self.grid_cols, idx)
    }

    /// The patch at a possibly out-of-grid position; ghosts read as zeros.
    pub fn patch_at(&self, row: i64, col: i64) -> Vec<f64> {
        match self.index_at(row, col) {
            Some(idx) => self.targets[idx].clone(),
            None => vec![0.0; self.patch_edge * self.patch_edge],
        }
    }

    pub fn index_at(&self, row: i64, col: i64) -> Option<usize> {
        grid_index(self.grid_rows, self.grid_cols, row, col)
    }

    /// Places patches given in grid-index order back into an image plane,
    /// averaging overlapping contributions.
    pub fn assemble(&self, patches: &[Vec<f64>]) -> Result<ImageBuffer> {
        assemble_plane(self.height, self.width, self.grid_dims(), self.patch_edge, self.mode, patches)
    }
}

fn grid_index(rows: usize, cols: usize, row: i64, col: i64) -> Option<usize> {
    if row < 0 || col < 0 || row >= rows as i64 || col >= cols as i64 {
        None
    } else {
        Some(row as usize * cols + col as usize)
    }
}

pub(crate) fn assemble_plane(
    height: usize,
    width: usize,
    (grid_rows, grid_cols): (usize, usize),
    edge: usize,
    mode: EncodeMode,
    patches: &[Vec<f64>],
) -> Result<ImageBuffer> {
    if patches.len() != grid_rows * grid_cols {
        return Err(SneError::Geometry(format!("{} patches for a {grid_rows}x{grid_cols} grid", patches.len())));
    }
    let stride = mode.stride(edge);
    let mut acc = vec![0.0; height * width];
    let mut hits = vec![0u32; height * width];
    for (idx, patch) in patches.iter().enumerate() {
        let (gy, gx) = (idx / grid_cols, idx % grid_cols);
        for r in 0..edge {
            for c in 0..edge {
                let p = (gy * stride + r) * width + gx * stride + c;
                acc[p] += patch[r * edge + c];
                hits[p] += 1;
            }
        }
    }
    let data = acc.iter().zip(&hits).map(|(&a, &h)| if h <= 1 { a } else { a / h as f64 }).collect();
    ImageBuffer::from_vec(height, width, 1, data)
}

/// Context blocks for one estimator, `N` of them, ghosts included.
#[derive(Clone, Debug, PartialEq)]
pub struct SiblingContext {
    pub blocks: Vec<Vec<f64>>,
    pub ghost: Vec<bool>,
}

impl SiblingContext {
    pub fn ghost_count(&self) -> usize {
        self.ghost.iter().filter(|&&g| g).count()
    }
}

/// Decoder-side inputs of one image plane: every block of the quantized
/// representation, dequantized to pixels and mapped to `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct EncodedPlane {
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub block_edge: usize,
    /// Scaled input blocks, indexed by grid position.
    pub inputs: Vec<Vec<f64>>,
    /// Dequantized pixel blocks clamped to `[0, 1]`.
    pub pixels: Vec<Vec<f64>>,
}

impl EncodedPlane {
    pub fn new(rep: &QuantizedRepresentation, channel: usize) -> Result<Self> {
        let (grid_rows, grid_cols) = rep.grid_dims();
        let mut inputs = Vec::with_capacity(grid_rows * grid_cols);
        let mut pixels = Vec::with_capacity(grid_rows * grid_cols);
        for idx in 0..grid_rows * grid_cols {
            let block = rep.pixel_block(channel, idx)?;
            inputs.push(block.iter().map(|v| 2.0 * v - 1.0).collect());
            pixels.push(block.iter().map(|v| v.clamp(0.0, 1.0)).collect());
        }
        Ok(EncodedPlane { grid_rows, grid_cols, block_edge: rep.block_edge(), inputs, pixels })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn context(&self, target_idx: usize, offsets: &[Offset]) -> SiblingContext {
        let (ty, tx) = ((target_idx / self.grid_cols) as i64, (target_idx % self.grid_cols) as i64);
        let n = self.block_edge * self.block_edge;
        let mut blocks = Vec::with_capacity(offsets.len());
        let mut ghost = Vec::with_capacity(offsets.len());
        for &(dy, dx) in offsets {
            match grid_index(self.grid_rows, self.grid_cols, ty + dy as i64, tx + dx as i64) {
                Some(idx) => {
                    blocks.push(self.inputs[idx].clone());
                    ghost.push(false);
                }
                None => {
                    blocks.push(vec![0.0; n]);
                    ghost.push(true);
                }
            }
        }
        SiblingContext { blocks, ghost }
    }
}

/// Source and co-estimator contexts of one target.
pub fn context_for(
    grid: &PatchGrid,
    rep: &QuantizedRepresentation,
    target_idx: usize,
    spec: &ContextSpec,
) -> Result<(SiblingContext, SiblingContext)> {
    if target_idx >= grid.len() {
        return Err(SneError::Geometry(format!("target {target_idx} outside grid of {}", grid.len())));
    }
    if rep.grid_dims() != grid.grid_dims() || rep.block_edge() != grid.patch_edge() {
        return Err(SneError::Geometry("representation and patch grid disagree".into()));
    }
    let plane = EncodedPlane::new(rep, 0)?;
    Ok((plane.context(target_idx, &spec.source_offsets), plane.context(target_idx, &spec.co_offsets)))
}
