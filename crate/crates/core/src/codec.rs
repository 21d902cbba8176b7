//! Block DCT encoder with uniform quantization, and the plain
//! dequantize-and-invert decoder used as the non-learned baseline.
//!
//! Any producer of a [`QuantizedRepresentation`] can feed the estimators; the
//! `SNEQ1` byte layout written by [`QuantizedRepresentation::to_bytes`] is the
//! exchange format:
//!
//! ```text
//! "SNEQ1"                       5 bytes
//! mode                          u8 (0 = aligned, 1 = overlapping)
//! height, width, channels       u32 LE each
//! block_edge                    u32 LE
//! quality                       f64 LE
//! table                         block_edge² × f64 LE, row-major
//! bpp_estimate                  f64 LE
//! coefficients                  i16 LE, channel-major, blocks in grid
//!                               row-major order, each block row-major
//! ```

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::error::{Result, SneError};
use crate::image::ImageBuffer;
use crate::numerics::Tensor2;

pub const SNEQ_MAGIC: &[u8; 5] = b"SNEQ1";

/// JPEG luminance table; resampled for other block sizes.
const BASE_TABLE: [f64; 64] = [
    16., 11., 10., 16., 24., 40., 51., 61., //
    12., 12., 14., 19., 26., 58., 60., 55., //
    14., 13., 16., 24., 40., 57., 69., 56., //
    14., 17., 22., 29., 51., 87., 80., 62., //
    18., 22., 37., 56., 68., 109., 103., 77., //
    24., 35., 55., 64., 81., 104., 113., 92., //
    49., 64., 78., 87., 103., 121., 120., 101., //
    72., 92., 95., 98., 112., 100., 103., 99., //
];

/// Pixel intensities are mapped to `255·v − 128` before the transform.
const LEVEL_SCALE: f64 = 255.0;
const LEVEL_SHIFT: f64 = 128.0;

#[derive(Clone, Debug, PartialEq)]
pub struct QuantTable {
    block_edge: usize,
    entries: Vec<f64>,
    quality: f64,
}

impl QuantTable {
    /// Luminance-style table divided by `quality` and floored at 1.
    pub fn standard(block_edge: usize, quality: f64) -> Result<Self> {
        if !(quality > 0.0 && quality <= 1.0) {
            return Err(SneError::Parameter(format!("quality {quality} outside (0, 1]")));
        }
        if block_edge == 0 {
            return Err(SneError::Parameter("block edge must be positive".into()));
        }
        let entries = (0..block_edge * block_edge)
            .map(|i| {
                let (r, c) = (i / block_edge, i % block_edge);
                let base = BASE_TABLE[(r * 8 / block_edge) * 8 + c * 8 / block_edge];
                (base / quality).max(1.0)
            })
            .collect();
        Ok(QuantTable { block_edge, entries, quality })
    }

    /// All-ones table; quantization reduces to rounding.
    pub fn unit(block_edge: usize) -> Self {
        QuantTable { block_edge, entries: vec![1.0; block_edge * block_edge], quality: 1.0 }
    }

    pub fn from_entries(block_edge: usize, entries: Vec<f64>, quality: f64) -> Result<Self> {
        if entries.len() != block_edge * block_edge {
            return Err(SneError::shape("quant table", (block_edge, block_edge), (entries.len(), 1)));
        }
        if entries.iter().any(|&e| !(e >= 1.0) || !e.is_finite()) {
            return Err(SneError::Parameter("quantization entries must be finite and >= 1".into()));
        }
        Ok(QuantTable { block_edge, entries, quality })
    }

    pub fn block_edge(&self) -> usize {
        self.block_edge
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn quality(&self) -> f64 {
        self.quality
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EncodeMode {
    /// Non-overlapping blocks tiling the image.
    Aligned,
    /// Blocks at a stride of half the block edge.
    Overlapping,
}

impl EncodeMode {
    pub fn stride(self, block_edge: usize) -> usize {
        match self {
            EncodeMode::Aligned => block_edge,
            EncodeMode::Overlapping => (block_edge / 2).max(1),
        }
    }

    fn tag(self) -> u8 {
        match self {
            EncodeMode::Aligned => 0,
            EncodeMode::Overlapping => 1,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(EncodeMode::Aligned),
            1 => Ok(EncodeMode::Overlapping),
            t => Err(SneError::Format(format!("unknown encode mode tag {t}"))),
        }
    }
}

impl std::str::FromStr for EncodeMode {
    type Err = SneError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "aligned" => Ok(EncodeMode::Aligned),
            "overlapping" => Ok(EncodeMode::Overlapping),
            other => Err(SneError::Config(format!("unknown mode '{other}'"))),
        }
    }
}

/// Number of block positions along one axis of length `len`.
pub fn grid_extent(len: usize, block_edge: usize, mode: EncodeMode) -> Result<usize> {
    let stride = mode.stride(block_edge);
    if len < block_edge || !(len - block_edge).is_multiple_of(stride) {
        let what = match mode {
            EncodeMode::Aligned => "a multiple of",
            EncodeMode::Overlapping => "block edge plus a multiple of half of",
        };
        return Err(SneError::Geometry(format!(
            "dimension {len} must be {what} the block edge {block_edge}; pad the image first"
        )));
    }
    Ok((len - block_edge) / stride + 1)
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedRepresentation {
    height: usize,
    width: usize,
    channels: usize,
    mode: EncodeMode,
    table: QuantTable,
    grid_rows: usize,
    grid_cols: usize,
    /// Per channel, `grid_rows·grid_cols·block_edge²` symbols.
    coeffs: Vec<Vec<i16>>,
    bpp_estimate: f64,
}

fn dct_matrix(n: usize) -> Tensor2 {
    Tensor2::from_fn(n, n, |k, i| {
        let alpha = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
        alpha * (PI * (2 * i + 1) as f64 * k as f64 / (2 * n) as f64).cos()
    })
}

fn check_square(block: &Tensor2) -> Result<()> {
    if block.rows() != block.cols() {
        return Err(SneError::shape("dct", block.shape(), (block.rows(), block.rows())));
    }
    Ok(())
}

/// Orthonormal 2-D type-II DCT.
pub fn dct_forward(block: &Tensor2) -> Result<Tensor2> {
    check_square(block)?;
    let c = dct_matrix(block.rows());
    Ok(c.matmul(block)?.matmul_bt(&c))
}

/// Inverse of [`dct_forward`] (type-III).
pub fn dct_inverse(coeffs: &Tensor2) -> Result<Tensor2> {
    check_square(coeffs)?;
    let c = dct_matrix(coeffs.rows());
    c.matmul_at(coeffs).matmul(&c)
}

/// `coeffs / table`, rounded half away from zero.
pub fn quantize(coeffs: &Tensor2, table: &QuantTable) -> Result<Vec<i32>> {
    if coeffs.rows() != table.block_edge || coeffs.cols() != table.block_edge {
        return Err(SneError::shape("quantize", coeffs.shape(), (table.block_edge, table.block_edge)));
    }
    Ok(coeffs.data().iter().zip(&table.entries).map(|(c, q)| (c / q).round() as i32).collect())
}

pub fn dequantize(symbols: &[i16], table: &QuantTable) -> Tensor2 {
    let n = table.block_edge;
    Tensor2::from_fn(n, n, |r, c| symbols[r * n + c] as f64 * table.entries[r * n + c])
}

/// Zeroth-order empirical entropy of a symbol stream, in bits per symbol.
pub fn symbol_entropy<'a>(symbols: impl IntoIterator<Item = &'a i16>) -> f64 {
    let mut counts: BTreeMap<i16, u64> = BTreeMap::new();
    let mut total = 0u64;
    for &s in symbols {
        *counts.entry(s).or_default() += 1;
        total += 1;
    }
    if total == 0 {
        return 0.0;
    }
    let total = total as f64;
    counts
        .values()
        .map(|&n| {
            let p = n as f64 / total;
            -p * p.log2()
        })
        .sum::<f64>()
        .max(0.0)
}

pub fn encode_image(img: &ImageBuffer, table: &QuantTable, mode: EncodeMode) -> Result<QuantizedRepresentation> {
    let edge = table.block_edge;
    let grid_rows = grid_extent(img.height(), edge, mode)?;
    let grid_cols = grid_extent(img.width(), edge, mode)?;
    let stride = mode.stride(edge);
    let mut coeffs = Vec::with_capacity(img.channels());
    for ch in 0..img.channels() {
        let mut plane = Vec::with_capacity(grid_rows * grid_cols * edge * edge);
        for gr in 0..grid_rows {
            for gc in 0..grid_cols {
                let block = Tensor2::from_fn(edge, edge, |r, c| {
                    img.get(gr * stride + r, gc * stride + c, ch) * LEVEL_SCALE - LEVEL_SHIFT
                });
                let q = quantize(&dct_forward(&block)?, table)?;
                plane.extend(q.into_iter().map(|v| v.clamp(i16::MIN as i32, i16::MAX as i32) as i16));
            }
        }
        coeffs.push(plane);
    }
    let symbols = coeffs.iter().map(|p| p.len()).sum::<usize>();
    let entropy = symbol_entropy(coeffs.iter().flatten());
    let bpp_estimate = entropy * symbols as f64 / (img.height() * img.width()) as f64;
    Ok(QuantizedRepresentation {
        height: img.height(),
        width: img.width(),
        channels: img.channels(),
        mode,
        table: table.clone(),
        grid_rows,
        grid_cols,
        coeffs,
        bpp_estimate,
    })
}

/// Dequantize, invert the transform and clamp to `[0, 1]`. Overlapping blocks
/// are averaged per pixel.
pub fn baseline_decode(rep: &QuantizedRepresentation) -> Result<ImageBuffer> {
    let edge = rep.block_edge();
    let stride = rep.mode.stride(edge);
    let mut planes = Vec::with_capacity(rep.channels);
    for ch in 0..rep.channels {
        let mut acc = vec![0.0; rep.height * rep.width];
        let mut hits = vec![0u32; rep.height * rep.width];
        for idx in 0..rep.grid_rows * rep.grid_cols {
            let (gr, gc) = (idx / rep.grid_cols, idx % rep.grid_cols);
            let block = rep.pixel_block(ch, idx)?;
            for r in 0..edge {
                for c in 0..edge {
                    let p = (gr * stride + r) * rep.width + gc * stride + c;
                    acc[p] += block[r * edge + c];
                    hits[p] += 1;
                }
            }
        }
        let data =
            acc.iter().zip(&hits).map(|(&a, &h)| if h == 0 { 0.0 } else { (a / h as f64).clamp(0.0, 1.0) }).collect();
        planes.push(ImageBuffer::from_vec(rep.height, rep.width, 1, data)?);
    }
    ImageBuffer::from_planes(&planes)
}

impl QuantizedRepresentation {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn mode(&self) -> EncodeMode {
        self.mode
    }

    pub fn table(&self) -> &QuantTable {
        &self.table
    }

    pub fn block_edge(&self) -> usize {
        self.table.block_edge
    }

    pub fn grid_dims(&self) -> (usize, usize) {
        (self.grid_rows, self.grid_cols)
    }

    pub fn bpp_estimate(&self) -> f64 {
        self.bpp_estimate
    }

    pub fn symbols(&self, channel: usize, idx: usize) -> &[i16] {
        let n = self.block_edge() * self.block_edge();
        &self.coeffs[channel][idx * n..(idx + 1) * n]
    }

    /// Dequantized block mapped back to unclamped pixel intensities.
    pub fn pixel_block(&self, channel: usize, idx: usize) -> Result<Vec<f64>> {
        if channel >= self.channels || idx >= self.grid_rows * self.grid_cols {
            return Err(SneError::Geometry(format!("block {idx} of channel {channel} out of range")));
        }
        let spatial = dct_inverse(&dequantize(self.symbols(channel, idx), &self.table))?;
        Ok(spatial.into_vec().into_iter().map(|v| (v + LEVEL_SHIFT) / LEVEL_SCALE).collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(SNEQ_MAGIC);
        out.push(self.mode.tag());
        for v in [self.height, self.width, self.channels, self.block_edge()] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.table.quality.to_le_bytes());
        for e in &self.table.entries {
            out.extend_from_slice(&e.to_le_bytes());
        }
        out.extend_from_slice(&self.bpp_estimate.to_le_bytes());
        for plane in &self.coeffs {
            for s in plane {
                out.extend_from_slice(&s.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rd = ByteReader { bytes, pos: 0 };
        if rd.take(5)? != SNEQ_MAGIC {
            return Err(SneError::Format("missing SNEQ1 magic".into()));
        }
        let mode = EncodeMode::from_tag(rd.take(1)?[0])?;
        let height = rd.u32()? as usize;
        let width = rd.u32()? as usize;
        let channels = rd.u32()? as usize;
        let edge = rd.u32()? as usize;
        if channels == 0 || edge == 0 {
            return Err(SneError::Format("zero channels or block edge".into()));
        }
        let quality = rd.f64()?;
        let entries = (0..edge * edge).map(|_| rd.f64()).collect::<Result<Vec<_>>>()?;
        let table = QuantTable::from_entries(edge, entries, quality)?;
        let bpp_estimate = rd.f64()?;
        let grid_rows = grid_extent(height, edge, mode)?;
        let grid_cols = grid_extent(width, edge, mode)?;
        let per_channel = grid_rows * grid_cols * edge * edge;
        let mut coeffs = Vec::with_capacity(channels);
        for _ in 0..channels {
            let raw = rd.take(per_channel * 2)?;
            coeffs.push(raw.chunks_exact(2).map(|b| i16::from_le_bytes([b[0], b[1]])).collect());
        }
        if rd.pos != bytes.len() {
            return Err(SneError::Format(format!("{} trailing bytes", bytes.len() - rd.pos)));
        }
        Ok(QuantizedRepresentation { height, width, channels, mode, table, grid_rows, grid_cols, coeffs, bpp_estimate })
    }
}

pub(crate) struct ByteReader<'a> {
    pub bytes: &'a [u8],
    pub pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| SneError::Format("unexpected end of data".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
