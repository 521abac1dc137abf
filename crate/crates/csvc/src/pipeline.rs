//! GOP assembly, closed-loop residual coding, container serialization and
//! compression-ratio accounting.
//!
//! Each GOP is one intra-coded key frame plus measured residuals. Residuals
//! are taken against the *decoded* key frame, computed at the encoder, so
//! the key codec's error cancels when the decoder adds the reconstructed
//! residual back onto the same decoded key frame.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frame::{frame_add, frame_diff, Frame, VideoSequence};
use crate::intra::{decode_intra, encode_at_cr, IntraBitstream};
use crate::measurement::{
    dequantize, quantize, rows_for_ratio, MatrixCache, MeasurementMatrix, QuantizedMeasurements,
};
use crate::solver::{reconstruct, solve_lossless, DenseLu, ReconResult, SolverParams};

pub const CONTAINER_MAGIC: [u8; 4] = *b"CSVC";
pub const CONTAINER_VERSION: u8 = 1;
const CONTAINER_HEADER_BYTES: usize = 4 + 1 + 2 + 2 + 4 + 1 + 4 + 4 + 4 + 8 + 4;

/// Encoder configuration for one video.
#[derive(Debug, Clone)]
pub struct GopConfig {
    /// Frames per GOP: one key frame plus `gop_size - 1` CS frames.
    pub gop_size: usize,
    /// Target key-frame compression ratio.
    pub cr_key: f64,
    /// Sample-count compression ratio of CS frames; 1 is the lossless
    /// diagnostic mode `m == n`.
    pub cr_cs: f64,
    /// Measurement-matrix seed; the decoder rebuilds the matrix from it.
    pub seed: u64,
    /// Derive a distinct matrix seed for each GOP (`seed ^ gop_index`).
    /// Available on the GOP-level API only: the v1 container layout has no
    /// field to carry it, so `write_container` rejects it.
    pub per_gop_seed: bool,
}

impl Default for GopConfig {
    fn default() -> Self {
        GopConfig {
            gop_size: 5,
            cr_key: 23.0,
            cr_cs: 50.0,
            seed: 42,
            per_gop_seed: false,
        }
    }
}

impl GopConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gop_size == 0 {
            return Err(Error::param("gop_size", "must be at least 1"));
        }
        if self.cr_key.is_nan() || self.cr_key <= 1.0 {
            return Err(Error::param("cr_key", "must exceed 1"));
        }
        if self.cr_cs.is_nan() || self.cr_cs < 1.0 {
            return Err(Error::param("cr_cs", "must be at least 1"));
        }
        Ok(())
    }

    /// Measurement count for a frame of `n` pixels.
    pub fn rows(&self, n: usize) -> usize {
        rows_for_ratio(n, self.cr_cs)
    }

    /// Matrix seed for GOP `index`.
    pub fn gop_seed(&self, index: usize) -> u64 {
        if self.per_gop_seed {
            self.seed ^ index as u64
        } else {
            self.seed
        }
    }
}

/// One encoded GOP.
#[derive(Debug, Clone)]
pub struct EncodedGop {
    pub key: IntraBitstream,
    pub cs_frames: Vec<QuantizedMeasurements>,
    /// Realized key-frame compression ratio (headers included).
    pub key_achieved_cr: f64,
    /// Whether the rate search hit the target within its tolerance.
    pub key_hit_target: bool,
}

/// Decoded GOP plus per-CS-frame solver metadata. Non-convergence is not an
/// error; the frame is still produced and flagged here.
#[derive(Debug, Clone)]
pub struct DecodedGop {
    pub frames: Vec<Frame>,
    pub cs_converged: Vec<bool>,
    pub cs_iterations: Vec<usize>,
}

fn check_matrix(cfg: &GopConfig, a: &MeasurementMatrix, n: usize) -> Result<()> {
    if a.n() != n {
        return Err(Error::dims(n, a.n()));
    }
    let want_m = cfg.rows(n);
    if a.m() != want_m {
        return Err(Error::dims(
            format!("m = {want_m} for cr_cs = {}", cfg.cr_cs),
            a.m(),
        ));
    }
    Ok(())
}

/// Encodes one GOP: intra-codes the first frame at the key-frame rate target,
/// decodes it locally, and measures every remaining frame's residual against
/// that decoded key frame.
pub fn encode_gop(
    frames: &[Frame],
    cfg: &GopConfig,
    a: &MeasurementMatrix,
) -> Result<EncodedGop> {
    cfg.validate()?;
    if frames.is_empty() || frames.len() > cfg.gop_size {
        return Err(Error::param(
            "gop frames",
            format!("got {} frames for gop_size {}", frames.len(), cfg.gop_size),
        ));
    }
    let n = frames[0].len();
    check_matrix(cfg, a, n)?;

    let rc = encode_at_cr(&frames[0], cfg.cr_key)?;
    let decoded_key = decode_intra(&rc.stream)?;

    let cs_frames = frames[1..]
        .iter()
        .map(|f| {
            let residual = frame_diff(f, &decoded_key)?;
            let y = a.measure(&residual.to_f64())?;
            quantize(&y)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(EncodedGop {
        key: rc.stream,
        cs_frames,
        key_achieved_cr: rc.achieved_cr,
        key_hit_target: rc.hit_target,
    })
}

/// Decodes one GOP. CS frames are reconstructed concurrently once the key
/// frame is available; in the lossless diagnostic mode the operator is
/// factored once and shared across frames.
pub fn decode_gop(
    gop: &EncodedGop,
    cfg: &GopConfig,
    a: &MeasurementMatrix,
    solver: &SolverParams,
) -> Result<DecodedGop> {
    cfg.validate()?;
    solver.validate()?;
    let key = decode_intra(&gop.key)?;
    let (w, h) = (key.width(), key.height());
    check_matrix(cfg, a, w * h)?;

    let lossless_lu = if a.m() == a.n() && !gop.cs_frames.is_empty() {
        Some(DenseLu::factor(a)?)
    } else {
        None
    };

    let recons: Vec<Result<ReconResult>> = gop
        .cs_frames
        .par_iter()
        .map(|q| {
            let y = dequantize(q);
            if y.len() != a.m() {
                return Err(Error::dims(a.m(), y.len()));
            }
            match &lossless_lu {
                Some(lu) => solve_lossless(a, lu, &y),
                None => reconstruct(a, &y, w, h, solver),
            }
        })
        .collect();

    let mut frames = Vec::with_capacity(gop.cs_frames.len() + 1);
    let mut cs_converged = Vec::with_capacity(gop.cs_frames.len());
    let mut cs_iterations = Vec::with_capacity(gop.cs_frames.len());
    frames.push(key.clone());
    for r in recons {
        let r = r?;
        let residual = crate::frame::Residual::from_f64_rounded(w, h, &r.x)?;
        frames.push(frame_add(&key, &residual)?);
        cs_converged.push(r.converged);
        cs_iterations.push(r.iterations);
    }
    Ok(DecodedGop {
        frames,
        cs_converged,
        cs_iterations,
    })
}

/// GOP-level nominal compression ratio: `G / (1/cr_key + (G-1)/cr_cs)`.
///
/// Follows from bits-per-GOP accounting: one frame at `cr_key` plus `G - 1`
/// frames at `cr_cs`, each frame weighing `n*8` bits uncompressed.
pub fn total_cr(gop_size: usize, cr_key: f64, cr_cs: f64) -> f64 {
    let g = gop_size as f64;
    g / (1.0 / cr_key + (g - 1.0) / cr_cs)
}

/// Parsed container header.
#[derive(Debug, Clone, PartialEq)]
pub struct ContainerHeader {
    pub version: u8,
    pub width: u16,
    pub height: u16,
    pub frame_count: u32,
    pub gop_size: u8,
    /// Realized key-frame CR, aggregated over GOPs (total key input bits
    /// over total key payload bits).
    pub cr_key_achieved: f32,
    pub cr_cs: f32,
    pub m: u32,
    pub seed: u64,
    pub frame_rate: f32,
}

impl ContainerHeader {
    /// Nominal total CR implied by the header configuration.
    pub fn nominal_total_cr(&self) -> f64 {
        total_cr(self.gop_size as usize, self.cr_key_achieved as f64, self.cr_cs as f64)
    }
}

/// Per-decode metadata returned alongside the frames.
#[derive(Debug, Clone)]
pub struct DecodeReport {
    pub header: ContainerHeader,
    /// Nominal total CR (sample-count accounting, as tabulated).
    pub nominal_cr: f64,
    /// Realized total CR: original bits over actual container bits.
    pub realized_cr: f64,
    /// Solver convergence flag for every CS frame, in frame order.
    pub cs_converged: Vec<bool>,
}

/// Splits `count` frames into GOP lengths of at most `gop_size`.
fn gop_lengths(count: usize, gop_size: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut left = count;
    while left > 0 {
        let take = left.min(gop_size);
        out.push(take);
        left -= take;
    }
    out
}

/// Encodes a whole sequence into the container byte format.
pub fn write_container(seq: &VideoSequence, cfg: &GopConfig) -> Result<Vec<u8>> {
    write_container_cached(seq, cfg, &MatrixCache::new())
}

/// [`write_container`] with a shared operator cache, so sweeps touching the
/// same `(seed, m, n)` build the matrix once.
pub fn write_container_cached(
    seq: &VideoSequence,
    cfg: &GopConfig,
    cache: &MatrixCache,
) -> Result<Vec<u8>> {
    cfg.validate()?;
    if cfg.per_gop_seed {
        return Err(Error::param(
            "per_gop_seed",
            "not representable in the v1 container layout",
        ));
    }
    if cfg.gop_size > u8::MAX as usize {
        return Err(Error::param("gop_size", "exceeds the container's limit of 255"));
    }
    let (w, h) = (seq.width(), seq.height());
    if w > u16::MAX as usize || h > u16::MAX as usize {
        return Err(Error::param("frame size", "dimension exceeds 65535"));
    }
    // The header carries cr_cs as f32; round it up front so the encoder and
    // every future decoder derive the identical measurement count.
    let cfg = GopConfig {
        cr_cs: (cfg.cr_cs as f32) as f64,
        ..cfg.clone()
    };
    let cfg = &cfg;
    let n = w * h;
    let m = cfg.rows(n);
    let a = cache.get(cfg.seed, m, n)?;

    let mut gops = Vec::new();
    let mut offset = 0usize;
    for len in gop_lengths(seq.len(), cfg.gop_size) {
        gops.push(encode_gop(&seq.frames()[offset..offset + len], cfg, &a)?);
        offset += len;
    }

    // When every key hit its rate target the achieved ratio IS the target;
    // otherwise record the realized bits-weighted ratio.
    let cr_key_achieved = if gops.iter().all(|g| g.key_hit_target) {
        cfg.cr_key
    } else {
        let key_payload_bits: usize = gops.iter().map(|g| g.key.size_bytes() * 8).sum();
        (gops.len() * n * 8) as f64 / key_payload_bits as f64
    };

    let mut out = Vec::new();
    out.extend_from_slice(&CONTAINER_MAGIC);
    out.push(CONTAINER_VERSION);
    out.extend_from_slice(&(w as u16).to_le_bytes());
    out.extend_from_slice(&(h as u16).to_le_bytes());
    out.extend_from_slice(&(seq.len() as u32).to_le_bytes());
    out.push(cfg.gop_size as u8);
    out.extend_from_slice(&(cr_key_achieved as f32).to_le_bytes());
    out.extend_from_slice(&(cfg.cr_cs as f32).to_le_bytes());
    out.extend_from_slice(&(m as u32).to_le_bytes());
    out.extend_from_slice(&cfg.seed.to_le_bytes());
    out.extend_from_slice(&seq.frame_rate().to_le_bytes());

    for gop in &gops {
        let key_bytes = gop.key.to_bytes();
        out.extend_from_slice(&(key_bytes.len() as u32).to_le_bytes());
        out.extend_from_slice(&key_bytes);
        for q in &gop.cs_frames {
            out.extend_from_slice(&q.scale.to_le_bytes());
            for &code in &q.codes {
                out.extend_from_slice(&code.to_le_bytes());
            }
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, count: usize) -> Result<&'a [u8]> {
        if self.pos + count > self.bytes.len() {
            return Err(Error::CorruptContainer(format!(
                "truncated at byte {} (need {count} more)",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + count];
        self.pos += count;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        let b = self.take(4)?;
        Ok(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn i16(&mut self) -> Result<i16> {
        let b = self.take(2)?;
        Ok(i16::from_le_bytes([b[0], b[1]]))
    }
}

/// Parses just the container header.
pub fn read_header(bytes: &[u8]) -> Result<ContainerHeader> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4)?;
    if magic != CONTAINER_MAGIC {
        return Err(Error::CorruptContainer("bad magic".into()));
    }
    let version = r.u8()?;
    if version != CONTAINER_VERSION {
        return Err(Error::Version(version));
    }
    let header = ContainerHeader {
        version,
        width: r.u16()?,
        height: r.u16()?,
        frame_count: r.u32()?,
        gop_size: r.u8()?,
        cr_key_achieved: r.f32()?,
        cr_cs: r.f32()?,
        m: r.u32()?,
        seed: r.u64()?,
        frame_rate: r.f32()?,
    };
    if header.frame_count == 0 {
        return Err(Error::CorruptContainer("zero frame count".into()));
    }
    if header.gop_size == 0 {
        return Err(Error::CorruptContainer("zero gop size".into()));
    }
    let n = header.width as usize * header.height as usize;
    if n == 0 {
        return Err(Error::CorruptContainer("zero frame dimensions".into()));
    }
    let want_m = rows_for_ratio(n, header.cr_cs as f64);
    if header.m as usize != want_m {
        return Err(Error::CorruptContainer(format!(
            "m = {} inconsistent with cr_cs = {} (want {want_m})",
            header.m, header.cr_cs
        )));
    }
    Ok(header)
}

/// Realized total CR of a container, from its actual byte size.
pub fn realized_cr(bytes: &[u8], header: &ContainerHeader) -> f64 {
    let n = header.width as usize * header.height as usize;
    (header.frame_count as usize * n * 8) as f64 / (bytes.len() * 8) as f64
}

/// Decodes a container back into a sequence.
pub fn read_container(
    bytes: &[u8],
    solver: &SolverParams,
) -> Result<(VideoSequence, DecodeReport)> {
    read_container_cached(bytes, solver, &MatrixCache::new())
}

/// [`read_container`] with a shared operator cache.
pub fn read_container_cached(
    bytes: &[u8],
    solver: &SolverParams,
    cache: &MatrixCache,
) -> Result<(VideoSequence, DecodeReport)> {
    let header = read_header(bytes)?;
    let mut r = Reader {
        bytes,
        pos: CONTAINER_HEADER_BYTES,
    };

    let n = header.width as usize * header.height as usize;
    let m = header.m as usize;
    let a = cache.get(header.seed, m, n)?;
    let cfg = GopConfig {
        gop_size: header.gop_size as usize,
        // The achieved key CR is informational on decode; any value > 1
        // validates.
        cr_key: (header.cr_key_achieved as f64).max(1.000001),
        cr_cs: header.cr_cs as f64,
        seed: header.seed,
        per_gop_seed: false,
    };

    let mut frames = Vec::with_capacity(header.frame_count as usize);
    let mut cs_converged = Vec::new();
    for gop_len in gop_lengths(header.frame_count as usize, header.gop_size as usize) {
        let key_len = r.u32()? as usize;
        let key_bytes = r.take(key_len)?;
        let (key, used) = IntraBitstream::from_bytes(key_bytes)?;
        if used != key_len {
            return Err(Error::CorruptContainer("key length mismatch".into()));
        }
        let mut cs_frames = Vec::with_capacity(gop_len - 1);
        for _ in 1..gop_len {
            let scale = r.f32()?;
            if !scale.is_finite() || scale <= 0.0 {
                return Err(Error::CorruptContainer("bad measurement scale".into()));
            }
            let mut codes = Vec::with_capacity(m);
            for _ in 0..m {
                codes.push(r.i16()?);
            }
            cs_frames.push(QuantizedMeasurements { scale, codes });
        }
        let gop = EncodedGop {
            key,
            cs_frames,
            key_achieved_cr: header.cr_key_achieved as f64,
            key_hit_target: true,
        };
        let decoded = decode_gop(&gop, &cfg, &a, solver)?;
        frames.extend(decoded.frames);
        cs_converged.extend(decoded.cs_converged);
    }
    if r.pos != bytes.len() {
        return Err(Error::CorruptContainer(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }

    let report = DecodeReport {
        nominal_cr: header.nominal_total_cr(),
        realized_cr: realized_cr(bytes, &header),
        cs_converged,
        header,
    };
    let seq = VideoSequence::new(frames, report.header.frame_rate)?;
    Ok((seq, report))
}
