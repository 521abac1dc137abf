//! Synthetic surveillance-style benchmark sequences.
//!
//! A static background (smooth gradient plus a little seeded texture and a
//! few fixed structures) with one bright square target bouncing across it.
//! The generator returns the per-frame ground-truth target boxes, so the
//! same clips drive codec quality checks and tracker benchmarks.

use crate::error::{Error, Result};
use crate::frame::{Frame, VideoSequence};
use crate::measurement::GaussianStream;
use crate::tracker::BoundingBox;

#[derive(Debug, Clone)]
pub struct MovingSquareSpec {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    /// Side length of the square target, pixels.
    pub square: usize,
    /// Brightness of the target over the local background.
    pub contrast: i32,
    /// Per-frame target motion (dx, dy); the target bounces off the edges.
    pub speed: (i32, i32),
    /// Standard deviation of the static background texture.
    pub texture: f64,
    pub seed: u64,
    pub frame_rate: f32,
}

impl Default for MovingSquareSpec {
    fn default() -> Self {
        MovingSquareSpec {
            width: 96,
            height: 96,
            frames: 30,
            square: 12,
            contrast: 90,
            speed: (2, 2),
            texture: 3.0,
            seed: 9,
            frame_rate: 30.0,
        }
    }
}

/// Builds the clip and its ground-truth boxes.
pub fn moving_square_sequence(
    spec: &MovingSquareSpec,
) -> Result<(VideoSequence, Vec<BoundingBox>)> {
    if spec.frames == 0 {
        return Err(Error::param("frames", "must be at least 1"));
    }
    if spec.square + 2 >= spec.width.min(spec.height) {
        return Err(Error::param("square", "target does not fit in the frame"));
    }
    let background = background_plane(spec);
    let (w, h, s) = (spec.width, spec.height, spec.square);

    // Start away from the edges, bounce on contact.
    let mut x = (w / 4) as i32;
    let mut y = (h / 3) as i32;
    let (mut dx, mut dy) = spec.speed;
    let max_x = (w - s) as i32;
    let max_y = (h - s) as i32;

    let mut frames = Vec::with_capacity(spec.frames);
    let mut truth = Vec::with_capacity(spec.frames);
    for _ in 0..spec.frames {
        let mut data = background.clone();
        for r in 0..s {
            for c in 0..s {
                let i = (y as usize + r) * w + x as usize + c;
                data[i] = (data[i] as i32 + spec.contrast).clamp(0, 255) as u8;
            }
        }
        frames.push(Frame::new(w, h, data)?);
        truth.push(BoundingBox::new(
            x as f64 + s as f64 / 2.0,
            y as f64 + s as f64 / 2.0,
            s,
            s,
        ));

        x += dx;
        y += dy;
        if x < 0 || x > max_x {
            dx = -dx;
            x = x.clamp(0, max_x);
        }
        if y < 0 || y > max_y {
            dy = -dy;
            y = y.clamp(0, max_y);
        }
    }
    Ok((VideoSequence::new(frames, spec.frame_rate)?, truth))
}

/// One background frame: gradient, texture, and two fixed darker blocks.
fn background_plane(spec: &MovingSquareSpec) -> Vec<u8> {
    let (w, h) = (spec.width, spec.height);
    let mut noise = GaussianStream::new(spec.seed);
    let mut data = Vec::with_capacity(w * h);
    for r in 0..h {
        for c in 0..w {
            let grad = 60.0 + 70.0 * (c as f64 / w as f64) + 40.0 * (r as f64 / h as f64);
            let v = grad + spec.texture * noise.sample();
            data.push(v.round().clamp(0.0, 255.0) as u8);
        }
    }
    // Fixed scenery rectangles so key frames carry some structure.
    let mut rect = |x0: usize, y0: usize, rw: usize, rh: usize, delta: i32| {
        for r in y0..(y0 + rh).min(h) {
            for c in x0..(x0 + rw).min(w) {
                let i = r * w + c;
                data[i] = (data[i] as i32 + delta).clamp(0, 255) as u8;
            }
        }
    };
    rect(w / 12, (h * 2) / 3, w / 5, h / 4, -35);
    rect((w * 7) / 10, h / 8, w / 6, h / 5, 25);
    data
}

/// A single textured frame for transform-coder tests.
pub fn textured_frame(width: usize, height: usize, seed: u64) -> Result<Frame> {
    let spec = MovingSquareSpec {
        width,
        height,
        frames: 1,
        texture: 6.0,
        seed,
        ..MovingSquareSpec::default()
    };
    let (seq, _) = moving_square_sequence(&spec)?;
    Ok(seq.frames()[0].clone())
}
