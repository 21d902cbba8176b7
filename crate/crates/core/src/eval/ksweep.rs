use std::fmt;

use crate::codec::QuantizedRepresentation;
use crate::error::{Result, SneError};
use crate::estimator::{decode_image_with_stats, SneParams};
use crate::eval::metrics::psnr;
use crate::image::ImageBuffer;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KSweepRow {
    pub k: usize,
    pub psnr: f64,
    /// Source state updates per decoded patch.
    pub steps_per_patch: f64,
}

/// PSNR as a function of the refinement steps per episode, at a fixed bitrate.
#[derive(Clone, Debug, PartialEq)]
pub struct KSweepReport {
    pub bpp: f64,
    pub rows: Vec<KSweepRow>,
}

/// Decodes `rep` once per K with the same parameters and scores each result
/// against `reference`.
pub fn ksweep(
    rep: &QuantizedRepresentation,
    reference: &ImageBuffer,
    params: &SneParams,
    k_values: &[usize],
) -> Result<KSweepReport> {
    if k_values.is_empty() {
        return Err(SneError::Parameter("K sweep needs at least one K".into()));
    }
    if k_values[0] == 0 || k_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SneError::Parameter("K values must be positive and strictly increasing".into()));
    }
    let rows = k_values
        .iter()
        .map(|&k| {
            let (img, stats) = decode_image_with_stats(rep, params, k, params.config.skip)?;
            Ok(KSweepRow { k, psnr: psnr(reference, &img)?, steps_per_patch: stats.steps_per_patch() })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(KSweepReport { bpp: rep.bpp_estimate(), rows })
}

impl fmt::Display for KSweepReport {
    /// Two aligned rows, a `K = n` header and the PSNR values, under a bpp line.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let heads: Vec<String> = self.rows.iter().map(|r| format!("K = {}", r.k)).collect();
        let vals: Vec<String> = self.rows.iter().map(|r| format!("{:.4}", r.psnr)).collect();
        let label = "PSNR".len();
        writeln!(f, "bitrate {:.4} bpp", self.bpp)?;
        let mut head = format!("{:label$}", "");
        let mut row = String::from("PSNR");
        for (h, v) in heads.iter().zip(&vals) {
            let w = h.len().max(v.len());
            head.push_str(&format!(" | {h:>w$}"));
            row.push_str(&format!(" | {v:>w$}"));
        }
        writeln!(f, "{head}")?;
        writeln!(f, "{row}")
    }
}
