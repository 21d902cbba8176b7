//! Quality metrics, the K-sweep report and image file I/O.

pub mod ksweep;
pub mod metrics;
pub mod pnm;

pub use ksweep::{ksweep, KSweepReport, KSweepRow};
pub use metrics::{max_scales, ms_ssim, psnr, ssim, MetricReport};
pub use pnm::{read_pnm, write_pnm};
