//! Full-reference quality metrics on `[0, 1]` images.

use std::fmt;

use crate::error::{Result, SneError};
use crate::image::ImageBuffer;

pub const PSNR_CAP: f64 = 99.0;
pub const SSIM_WINDOW: usize = 8;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;
pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

fn same_dims(op: &'static str, a: &ImageBuffer, b: &ImageBuffer) -> Result<()> {
    if a.dims() != b.dims() {
        let (ah, aw, ac) = a.dims();
        let (bh, bw, bc) = b.dims();
        return Err(SneError::Shape { op, left: format!("{ah}x{aw}x{ac}"), right: format!("{bh}x{bw}x{bc}") });
    }
    Ok(())
}

/// `10·log₁₀(1/MSE)`, capped at 99 dB.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    same_dims("psnr", a, b)?;
    let n = a.data().len().max(1) as f64;
    let mse = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / n;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

/// A single-channel plane, row-major.
#[derive(Clone, Debug)]
struct Plane {
    h: usize,
    w: usize,
    v: Vec<f64>,
}

impl Plane {
    fn of(img: &ImageBuffer, c: usize) -> Self {
        Plane { h: img.height(), w: img.width(), v: img.plane(c).data().to_vec() }
    }

    /// 2×2 mean, dropping an odd trailing row or column.
    fn downsample(&self) -> Self {
        let (h, w) = (self.h / 2, self.w / 2);
        let mut v = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                let at = |dy: usize, dx: usize| self.v[(2 * y + dy) * self.w + 2 * x + dx];
                v.push((at(0, 0) + at(0, 1) + at(1, 0) + at(1, 1)) / 4.0);
            }
        }
        Plane { h, w, v }
    }
}

/// Summed-area table with a zero border row and column.
struct Integral {
    w: usize,
    s: Vec<f64>,
}

impl Integral {
    fn new(h: usize, w: usize, f: impl Fn(usize) -> f64) -> Self {
        let mut s = vec![0.0; (h + 1) * (w + 1)];
        for y in 0..h {
            let mut row = 0.0;
            for x in 0..w {
                row += f(y * w + x);
                s[(y + 1) * (w + 1) + x + 1] = s[y * (w + 1) + x + 1] + row;
            }
        }
        Integral { w: w + 1, s }
    }

    fn window(&self, y: usize, x: usize, n: usize) -> f64 {
        let at = |yy: usize, xx: usize| self.s[yy * self.w + xx];
        at(y + n, x + n) - at(y, x + n) - at(y + n, x) + at(y, x)
    }
}

/// Mean SSIM and mean contrast-structure term over all 8×8 windows.
fn ssim_terms(a: &Plane, b: &Plane) -> (f64, f64) {
    let n = SSIM_WINDOW;
    let ia = Integral::new(a.h, a.w, |i| a.v[i]);
    let ib = Integral::new(a.h, a.w, |i| b.v[i]);
    let iaa = Integral::new(a.h, a.w, |i| a.v[i] * a.v[i]);
    let ibb = Integral::new(a.h, a.w, |i| b.v[i] * b.v[i]);
    let iab = Integral::new(a.h, a.w, |i| a.v[i] * b.v[i]);
    let area = (n * n) as f64;
    let (mut ssim_sum, mut cs_sum) = (0.0, 0.0);
    let count = (a.h - n + 1) * (a.w - n + 1);
    for y in 0..=a.h - n {
        for x in 0..=a.w - n {
            let mu_a = ia.window(y, x, n) / area;
            let mu_b = ib.window(y, x, n) / area;
            let var_a = iaa.window(y, x, n) / area - mu_a * mu_a;
            let var_b = ibb.window(y, x, n) / area - mu_b * mu_b;
            let cov = iab.window(y, x, n) / area - mu_a * mu_b;
            let lum = (2.0 * mu_a * mu_b + SSIM_C1) / (mu_a * mu_a + mu_b * mu_b + SSIM_C1);
            let cs = (2.0 * cov + SSIM_C2) / (var_a + var_b + SSIM_C2);
            ssim_sum += lum * cs;
            cs_sum += cs;
        }
    }
    (ssim_sum / count as f64, cs_sum / count as f64)
}

/// Mean SSIM over every 8×8 window position, averaged over channels.
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    same_dims("ssim", a, b)?;
    if a.height() < SSIM_WINDOW || a.width() < SSIM_WINDOW {
        return Err(SneError::Geometry(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {}x{}",
            a.height(),
            a.width()
        )));
    }
    let total: f64 = (0..a.channels()).map(|c| ssim_terms(&Plane::of(a, c), &Plane::of(b, c)).0).sum();
    Ok(total / a.channels() as f64)
}

/// Smallest edge that supports `scales` pyramid levels.
pub fn ms_ssim_min_size(scales: usize) -> usize {
    (1usize << scales.saturating_sub(1)) * SSIM_WINDOW
}

/// Largest scale count, at most five, that fits an `h`×`w` image.
pub fn max_scales(h: usize, w: usize) -> usize {
    (1..=MS_SSIM_WEIGHTS.len()).rev().find(|&s| h.min(w) >= ms_ssim_min_size(s)).unwrap_or(0)
}

/// Multi-scale SSIM: contrast-structure terms at the first `scales − 1` levels
/// and the full SSIM at the coarsest, combined with the standard exponents
/// (renormalized when fewer than five scales are used).
pub fn ms_ssim(a: &ImageBuffer, b: &ImageBuffer, scales: usize) -> Result<f64> {
    same_dims("ms_ssim", a, b)?;
    if scales == 0 || scales > MS_SSIM_WEIGHTS.len() {
        return Err(SneError::Parameter(format!("scales must be in 1..=5, got {scales}")));
    }
    let min = ms_ssim_min_size(scales);
    if a.height() < min || a.width() < min {
        return Err(SneError::Geometry(format!(
            "ms_ssim with {scales} scales needs at least {min}x{min} pixels, got {}x{}",
            a.height(),
            a.width()
        )));
    }
    let weights = &MS_SSIM_WEIGHTS[..scales];
    let norm: f64 = weights.iter().sum();
    let mut total = 0.0;
    for c in 0..a.channels() {
        let (mut pa, mut pb) = (Plane::of(a, c), Plane::of(b, c));
        let mut value = 1.0;
        for (s, w) in weights.iter().enumerate() {
            let (full, cs) = ssim_terms(&pa, &pb);
            let term = if s + 1 == scales { full } else { cs };
            value *= term.max(0.0).powf(w / norm);
            if s + 1 < scales {
                pa = pa.downsample();
                pb = pb.downsample();
            }
        }
        total += value;
    }
    Ok(total / a.channels() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricReport {
    pub psnr: f64,
    pub ssim: f64,
    pub ms_ssim: f64,
    pub bpp: Option<f64>,
}

impl MetricReport {
    /// All metrics for a pair; MS-SSIM uses as many scales as the size allows.
    pub fn compute(reference: &ImageBuffer, test: &ImageBuffer, bpp: Option<f64>) -> Result<Self> {
        let scales = max_scales(reference.height(), reference.width());
        if scales == 0 {
            return Err(SneError::Geometry(format!("metrics need at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels")));
        }
        Ok(MetricReport {
            psnr: psnr(reference, test)?,
            ssim: ssim(reference, test)?,
            ms_ssim: ms_ssim(reference, test, scales)?,
            bpp,
        })
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "psnr={}", self.psnr)?;
        writeln!(f, "ssim={}", self.ssim)?;
        writeln!(f, "ms_ssim={}", self.ms_ssim)?;
        if let Some(bpp) = self.bpp {
            writeln!(f, "bpp={bpp}")?;
        }
        Ok(())
    }
}
