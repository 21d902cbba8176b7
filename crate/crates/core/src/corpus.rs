//! Procedurally generated grayscale test images.
//!
//! The desk corpus is fixed: the same eight 64×64 images on every machine. Each
//! mixes a smooth illumination field, a few soft-edged shapes and a faint
//! oriented texture, which gives block-based quantization the usual mix of
//! blocking and ringing artifacts.

use crate::image::ImageBuffer;
use crate::numerics::RngStream;

pub const DESK_SIZE: usize = 64;
pub const DESK_COUNT: usize = 8;
const DESK_SEED: u64 = 0x5eed_0de5;

pub fn desk_corpus() -> Vec<ImageBuffer> {
    (0..DESK_COUNT as u64)
        .map(|i| synthetic_image(DESK_SIZE, DESK_SIZE, &mut RngStream::with_stream(DESK_SEED, i)))
        .collect()
}

/// Split used by the desk-scale experiments: first six train, last two held out.
pub fn desk_split() -> (Vec<ImageBuffer>, Vec<ImageBuffer>) {
    let mut all = desk_corpus();
    let held_out = all.split_off(6);
    (all, held_out)
}

/// Coverage of a pixel at signed distance `d` from a shape boundary:
/// 1 inside, 0 outside, with a 1.5 px linear ramp.
fn coverage(d: f64) -> f64 {
    ((0.75 - d) / 1.5).clamp(0.0, 1.0)
}

pub fn synthetic_image(height: usize, width: usize, rng: &mut RngStream) -> ImageBuffer {
    let waves: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.uniform(-0.08, 0.08),
                rng.uniform(-0.08, 0.08),
                rng.uniform(0.0, std::f64::consts::TAU),
                rng.uniform(0.05, 0.2),
            )
        })
        .collect();
    let base = rng.uniform(0.3, 0.7);
    enum Shape {
        Disc { cy: f64, cx: f64, r: f64 },
        Rect { y0: f64, x0: f64, y1: f64, x1: f64 },
    }
    let shapes: Vec<(Shape, f64)> = (0..3)
        .map(|_| {
            let level = rng.uniform(-0.35, 0.35);
            let shape = if rng.uniform(0.0, 1.0) < 0.5 {
                Shape::Disc {
                    cy: rng.uniform(0.0, height as f64),
                    cx: rng.uniform(0.0, width as f64),
                    r: rng.uniform(6.0, 20.0),
                }
            } else {
                let (y0, x0) = (rng.uniform(0.0, height as f64 * 0.7), rng.uniform(0.0, width as f64 * 0.7));
                Shape::Rect { y0, x0, y1: y0 + rng.uniform(8.0, 30.0), x1: x0 + rng.uniform(8.0, 30.0) }
            };
            (shape, level)
        })
        .collect();
    let tex_angle = rng.uniform(0.0, std::f64::consts::PI);
    let tex_freq = rng.uniform(0.6, 1.2);
    let tex_amp = rng.uniform(0.01, 0.04);

    let img = ImageBuffer::from_fn(height, width, |y, x| {
        let (fy, fx) = (y as f64, x as f64);
        let mut v = base;
        for &(ky, kx, phase, amp) in &waves {
            v += amp * (ky * fy * std::f64::consts::PI + kx * fx * std::f64::consts::PI + phase).cos();
        }
        for (shape, level) in &shapes {
            let inside_distance = match *shape {
                Shape::Disc { cy, cx, r } => ((fy - cy).powi(2) + (fx - cx).powi(2)).sqrt() - r,
                Shape::Rect { y0, x0, y1, x1 } => (y0 - fy).max(fy - y1).max(x0 - fx).max(fx - x1),
            };
            v += level * coverage(inside_distance);
        }
        v += tex_amp * ((fy * tex_angle.sin() + fx * tex_angle.cos()) * tex_freq).sin();
        v
    });
    // Normalize into [0.05, 0.95].
    let (lo, hi) = img.data().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = (hi - lo).max(1e-9);
    let data = img.data().iter().map(|v| 0.05 + 0.9 * (v - lo) / span).collect();
    ImageBuffer::from_vec(height, width, 1, data).expect("dimensions preserved")
}
