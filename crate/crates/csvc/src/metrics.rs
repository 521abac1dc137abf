//! Quality metrics and noise injection.

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::measurement::GaussianStream;

/// PSNR cap reported for identical frames.
pub const PSNR_CAP_DB: f64 = 99.0;

/// Peak signal-to-noise ratio in dB: `10 log10(255^2 / MSE)`, capped at
/// [`PSNR_CAP_DB`] for identical frames.
pub fn psnr(a: &Frame, b: &Frame) -> Result<f64> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::dims(
            format!("{}x{}", a.width(), a.height()),
            format!("{}x{}", b.width(), b.height()),
        ));
    }
    let sq_err: u64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&p, &q)| {
            let d = p as i64 - q as i64;
            (d * d) as u64
        })
        .sum();
    if sq_err == 0 {
        return Ok(PSNR_CAP_DB);
    }
    let mse = sq_err as f64 / a.len() as f64;
    Ok(10.0 * (255.0 * 255.0 / mse).log10())
}

/// Mean PSNR over two equal-length frame lists.
pub fn mean_psnr(a: &[Frame], b: &[Frame]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dims(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::param("frame lists", "must be non-empty"));
    }
    let mut sum = 0.0;
    for (x, y) in a.iter().zip(b) {
        sum += psnr(x, y)?;
    }
    Ok(sum / a.len() as f64)
}

/// Adds seeded Gaussian noise of the given variance to every pixel, rounding
/// and clamping to `[0, 255]`. Deterministic per `(frame, variance, seed)`.
pub fn add_noise(f: &Frame, variance: f64, seed: u64) -> Result<Frame> {
    if variance < 0.0 {
        return Err(Error::param("variance", "must be non-negative"));
    }
    if variance == 0.0 {
        return Ok(f.clone());
    }
    let sigma = variance.sqrt();
    let mut stream = GaussianStream::new(seed);
    let data = f
        .data()
        .iter()
        .map(|&p| (p as f64 + sigma * stream.sample()).round().clamp(0.0, 255.0) as u8)
        .collect();
    Frame::new(f.width(), f.height(), data)
}
