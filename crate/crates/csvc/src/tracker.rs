//! Template tracker used as the downstream-quality probe.
//!
//! Normalized cross-correlation search around the previous position, with a
//! slow exponential template update on confident matches. Deliberately
//! simple: its job is to expose how reconstruction quality degrades, not to
//! be a state-of-the-art tracker.

use crate::error::{Error, Result};
use crate::frame::{Frame, VideoSequence};

/// Axis-aligned box given by its center and size, in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl BoundingBox {
    pub fn new(cx: f64, cy: f64, width: usize, height: usize) -> Self {
        BoundingBox {
            cx,
            cy,
            width,
            height,
        }
    }

    fn left_top(&self) -> (i64, i64) {
        (
            (self.cx - self.width as f64 / 2.0).round() as i64,
            (self.cy - self.height as f64 / 2.0).round() as i64,
        )
    }

    fn fits(&self, frame_w: usize, frame_h: usize) -> bool {
        let (x, y) = self.left_top();
        x >= 0
            && y >= 0
            && (x as usize) + self.width <= frame_w
            && (y as usize) + self.height <= frame_h
    }

    pub fn center_distance(&self, other: &BoundingBox) -> f64 {
        ((self.cx - other.cx).powi(2) + (self.cy - other.cy).powi(2)).sqrt()
    }

    /// The same center with `margin` extra pixels on every side. A uniform
    /// target is invisible to normalized correlation unless its edges lie
    /// inside the window, so trackers are initialized with a little context.
    pub fn with_margin(&self, margin: usize) -> BoundingBox {
        BoundingBox {
            cx: self.cx,
            cy: self.cy,
            width: self.width + 2 * margin,
            height: self.height + 2 * margin,
        }
    }
}

/// Search and update parameters.
#[derive(Debug, Clone)]
pub struct TrackerConfig {
    /// Search radius around the previous center, in pixels.
    pub search_radius: usize,
    /// Exponential blend rate for template updates on confident matches.
    pub blend_rate: f64,
    /// NCC score at or above which a match counts as confident.
    pub confidence: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            search_radius: 16,
            blend_rate: 0.05,
            confidence: 0.55,
        }
    }
}

/// Default center-distance threshold for [`success_rate`], in pixels.
pub const DEFAULT_SR_THRESHOLD: f64 = 20.0;

fn window(frame: &Frame, x: usize, y: usize, w: usize, h: usize, out: &mut [f64]) {
    for r in 0..h {
        for c in 0..w {
            out[r * w + c] = frame.get(x + c, y + r) as f64;
        }
    }
}

/// Zero-normalized cross-correlation of `t` against `w`. Returns -1 when
/// either patch has no variance.
fn ncc(t: &[f64], w: &[f64]) -> f64 {
    let n = t.len() as f64;
    let mt = t.iter().sum::<f64>() / n;
    let mw = w.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut dt = 0.0;
    let mut dw = 0.0;
    for (a, b) in t.iter().zip(w) {
        let ta = a - mt;
        let wb = b - mw;
        num += ta * wb;
        dt += ta * ta;
        dw += wb * wb;
    }
    let denom = (dt * dw).sqrt();
    if denom <= 1e-12 {
        -1.0
    } else {
        num / denom
    }
}

/// Tracks the template initialized from `init` in frame 0 through the whole
/// sequence. Returns one box per frame; the first is `init` itself.
pub fn track(seq: &VideoSequence, init: BoundingBox, cfg: &TrackerConfig) -> Result<Vec<BoundingBox>> {
    let (fw, fh) = (seq.width(), seq.height());
    if !init.fits(fw, fh) {
        return Err(Error::param(
            "init box",
            format!("{init:?} is outside the {fw}x{fh} frame"),
        ));
    }
    let (bw, bh) = (init.width, init.height);
    if bw == 0 || bh == 0 {
        return Err(Error::param("init box", "zero-sized box"));
    }

    let (ix, iy) = init.left_top();
    let mut template = vec![0.0f64; bw * bh];
    window(&seq.frames()[0], ix as usize, iy as usize, bw, bh, &mut template);

    let mut boxes = Vec::with_capacity(seq.len());
    boxes.push(init);
    let mut cur = init;
    let mut win = vec![0.0f64; bw * bh];
    let radius = cfg.search_radius as i64;

    for frame in &seq.frames()[1..] {
        let (px, py) = cur.left_top();
        let mut best_score = f64::NEG_INFINITY;
        let mut best_xy = (
            px.clamp(0, (fw - bw) as i64) as usize,
            py.clamp(0, (fh - bh) as i64) as usize,
        );
        for dy in -radius..=radius {
            let y = py + dy;
            if y < 0 || y as usize + bh > fh {
                continue;
            }
            for dx in -radius..=radius {
                let x = px + dx;
                if x < 0 || x as usize + bw > fw {
                    continue;
                }
                window(frame, x as usize, y as usize, bw, bh, &mut win);
                let score = ncc(&template, &win);
                // Strict inequality keeps the scan-order-first candidate on
                // ties, so the search is deterministic.
                if score > best_score {
                    best_score = score;
                    best_xy = (x as usize, y as usize);
                }
            }
        }

        cur = BoundingBox::new(
            best_xy.0 as f64 + bw as f64 / 2.0,
            best_xy.1 as f64 + bh as f64 / 2.0,
            bw,
            bh,
        );
        boxes.push(cur);

        if best_score >= cfg.confidence {
            window(frame, best_xy.0, best_xy.1, bw, bh, &mut win);
            for (t, &w) in template.iter_mut().zip(&win) {
                *t = (1.0 - cfg.blend_rate) * *t + cfg.blend_rate * w;
            }
        }
    }
    Ok(boxes)
}

/// Percent of frames whose predicted center lies within `threshold` pixels
/// of the ground truth.
pub fn success_rate(pred: &[BoundingBox], truth: &[BoundingBox], threshold: f64) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::dims(truth.len(), pred.len()));
    }
    if pred.is_empty() {
        return Err(Error::param("boxes", "empty box lists"));
    }
    let hits = pred
        .iter()
        .zip(truth)
        .filter(|(p, t)| p.center_distance(t) <= threshold)
        .count();
    Ok(100.0 * hits as f64 / pred.len() as f64)
}

/// Parses a ground-truth boxes file: one `frame_index,cx,cy,w,h` line per
/// frame, in frame order.
pub fn parse_truth_boxes(text: &str) -> Result<Vec<BoundingBox>> {
    let mut boxes = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 5 {
            return Err(Error::malformed(
                "truth boxes",
                format!("line {}: want frame_index,cx,cy,w,h", lineno + 1),
            ));
        }
        let idx: usize = fields[0]
            .parse()
            .map_err(|_| Error::malformed("truth boxes", format!("line {}: bad index", lineno + 1)))?;
        if idx != boxes.len() {
            return Err(Error::malformed(
                "truth boxes",
                format!("line {}: expected frame {} got {}", lineno + 1, boxes.len(), idx),
            ));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::malformed("truth boxes", format!("line {}: bad number", lineno + 1)))
        };
        boxes.push(BoundingBox::new(
            num(fields[1])?,
            num(fields[2])?,
            num(fields[3])? as usize,
            num(fields[4])? as usize,
        ));
    }
    if boxes.is_empty() {
        return Err(Error::malformed("truth boxes", "no boxes"));
    }
    Ok(boxes)
}

/// Serializes boxes in the `frame_index,cx,cy,w,h` format.
pub fn format_boxes(boxes: &[BoundingBox]) -> String {
    let mut out = String::new();
    for (i, b) in boxes.iter().enumerate() {
        out.push_str(&format!("{i},{},{},{},{}\n", b.cx, b.cy, b.width, b.height));
    }
    out
}
