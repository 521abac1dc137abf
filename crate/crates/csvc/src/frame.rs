//! Frames, residuals and sequences.
//!
//! A [`Frame`] is a single 8-bit grayscale plane stored row-major; a
//! [`Residual`] is the signed per-pixel difference between two frames.
//! Residuals are kept at 16 bits so that `diff` followed by `add` is exact.

use crate::error::{Error, Result};

/// Minimum frame dimension, set by the 8x8 transform block size.
pub const MIN_DIMENSION: usize = 8;

/// One 8-bit grayscale image plane, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Frame {
    /// Builds a frame from row-major luma samples.
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width < MIN_DIMENSION || height < MIN_DIMENSION {
            return Err(Error::param(
                "frame size",
                format!("{width}x{height} is below the {MIN_DIMENSION}-pixel floor"),
            ));
        }
        if data.len() != width * height {
            return Err(Error::dims(width * height, data.len()));
        }
        Ok(Frame {
            width,
            height,
            data,
        })
    }

    /// A frame filled with a constant value.
    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Frame::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of pixels.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    /// Pixels as `f64`, in row-major order.
    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&p| p as f64).collect()
    }

    fn check_same_dims(&self, other_w: usize, other_h: usize) -> Result<()> {
        if self.width != other_w || self.height != other_h {
            return Err(Error::dims(
                format!("{}x{}", self.width, self.height),
                format!("{other_w}x{other_h}"),
            ));
        }
        Ok(())
    }
}

/// Signed per-pixel difference plane, same dimensions as its source frames.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Residual {
    width: usize,
    height: usize,
    data: Vec<i16>,
}

impl Residual {
    /// Builds a residual; every sample must lie in `[-255, 255]`.
    pub fn new(width: usize, height: usize, data: Vec<i16>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::dims(width * height, data.len()));
        }
        if let Some(v) = data.iter().find(|v| v.unsigned_abs() > 255) {
            return Err(Error::param(
                "residual sample",
                format!("{v} outside [-255, 255]"),
            ));
        }
        Ok(Residual {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[i16] {
        &self.data
    }

    /// Samples as `f64`, row-major; this is the vector the solver sees.
    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    /// Rounds a real-valued solver output back to a residual, clamping each
    /// sample to the representable `[-255, 255]` range.
    pub fn from_f64_rounded(width: usize, height: usize, values: &[f64]) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::dims(width * height, values.len()));
        }
        let data = values
            .iter()
            .map(|&v| v.round().clamp(-255.0, 255.0) as i16)
            .collect();
        Residual::new(width, height, data)
    }
}

/// `a - b`, exact signed arithmetic, no clamping.
pub fn frame_diff(a: &Frame, b: &Frame) -> Result<Residual> {
    a.check_same_dims(b.width, b.height)?;
    let data = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| x as i16 - y as i16)
        .collect();
    Residual::new(a.width, a.height, data)
}

/// `base + r`, clamped to `[0, 255]`.
pub fn frame_add(base: &Frame, r: &Residual) -> Result<Frame> {
    base.check_same_dims(r.width, r.height)?;
    let data = base
        .data
        .iter()
        .zip(&r.data)
        .map(|(&p, &d)| (p as i32 + d as i32).clamp(0, 255) as u8)
        .collect();
    Frame::new(base.width, base.height, data)
}

/// An ordered, dimension-homogeneous list of frames.
#[derive(Debug, Clone)]
pub struct VideoSequence {
    frames: Vec<Frame>,
    frame_rate: f32,
}

impl VideoSequence {
    pub fn new(frames: Vec<Frame>, frame_rate: f32) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::NoFrames("<memory>".into()))?;
        let (w, h) = (first.width, first.height);
        for f in &frames {
            f.check_same_dims(w, h)?;
        }
        Ok(VideoSequence { frames, frame_rate })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn frame_rate(&self) -> f32 {
        self.frame_rate
    }

    pub fn width(&self) -> usize {
        self.frames[0].width
    }

    pub fn height(&self) -> usize {
        self.frames[0].height
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn frame_from_fn(w: usize, h: usize, f: impl Fn(usize, usize) -> u8) -> Frame {
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                data.push(f(x, y));
            }
        }
        Frame::new(w, h, data).unwrap()
    }

    #[test]
    fn rejects_wrong_buffer_length() {
        assert!(Frame::new(8, 8, vec![0; 63]).is_err());
        assert!(Frame::new(7, 8, vec![0; 56]).is_err());
    }

    #[test]
    fn diff_of_identical_frames_is_zero() {
        let f = frame_from_fn(16, 8, |x, y| (x * 7 + y * 13) as u8);
        let r = frame_diff(&f, &f).unwrap();
        assert!(r.data().iter().all(|&v| v == 0));
    }

    #[test]
    fn diff_reaches_range_extremes() {
        let a = Frame::filled(8, 8, 0).unwrap();
        let b = Frame::filled(8, 8, 255).unwrap();
        let r = frame_diff(&a, &b).unwrap();
        assert!(r.data().iter().all(|&v| v == -255));
        let r = frame_diff(&b, &a).unwrap();
        assert!(r.data().iter().all(|&v| v == 255));
    }

    #[test]
    fn add_saturates() {
        let base = Frame::filled(8, 8, 200).unwrap();
        let r = Residual::new(8, 8, vec![100; 64]).unwrap();
        let out = frame_add(&base, &r).unwrap();
        assert!(out.data().iter().all(|&p| p == 255));
    }

    #[test]
    fn add_of_zero_residual_is_identity() {
        let base = frame_from_fn(8, 16, |x, y| (x * y) as u8);
        let r = Residual::new(8, 16, vec![0; 128]).unwrap();
        assert_eq!(frame_add(&base, &r).unwrap(), base);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let a = Frame::filled(8, 8, 0).unwrap();
        let b = Frame::filled(16, 8, 0).unwrap();
        assert!(frame_diff(&a, &b).is_err());
    }

    #[test]
    fn sequence_requires_homogeneous_dims() {
        let a = Frame::filled(8, 8, 0).unwrap();
        let b = Frame::filled(16, 8, 0).unwrap();
        assert!(VideoSequence::new(vec![a.clone(), b], 30.0).is_err());
        assert!(VideoSequence::new(vec![], 30.0).is_err());
        assert!(VideoSequence::new(vec![a], 30.0).is_ok());
    }

    proptest! {
        // diff is exact in signed arithmetic, so add(b, diff(a, b)) == a.
        #[test]
        fn diff_then_add_round_trips(
            a in proptest::collection::vec(any::<u8>(), 96),
            b in proptest::collection::vec(any::<u8>(), 96),
        ) {
            let fa = Frame::new(12, 8, a).unwrap();
            let fb = Frame::new(12, 8, b).unwrap();
            let r = frame_diff(&fa, &fb).unwrap();
            let back = frame_add(&fb, &r).unwrap();
            prop_assert_eq!(back, fa);
        }
    }
}
