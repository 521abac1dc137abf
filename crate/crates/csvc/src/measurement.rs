//! Seeded Gaussian measurement operator and 16-bit measurement quantization.
//!
//! The matrix never travels in a bitstream: a decoder rebuilds it from
//! `(seed, m, n)`. The generator is therefore frozen: a ChaCha8 stream seeded
//! with `seed`, mapped through Box-Muller using `libm` transcendentals so the
//! entries are bit-identical on every platform, then scaled by `1/sqrt(m)`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand_chacha::rand_core::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Largest signed 16-bit code used by the measurement quantizer.
const CODE_MAX: f64 = 32767.0;

/// Deterministic stream of standard normal samples.
///
/// Box-Muller over ChaCha8 output; `libm` is used for `log`, `sqrt`, `cos`
/// and `sin` so the values do not depend on the platform libm.
pub struct GaussianStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl GaussianStream {
    pub fn new(seed: u64) -> Self {
        GaussianStream {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    #[inline]
    fn unit_open(&mut self) -> f64 {
        // 53-bit mantissa draw in (0, 1]; never zero, so log() is finite.
        ((self.rng.next_u64() >> 11) + 1) as f64 * (1.0 / 9007199254740992.0)
    }

    /// Next standard normal sample.
    pub fn sample(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.unit_open();
        let u2 = self.unit_open();
        let r = libm::sqrt(-2.0 * libm::log(u1));
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * libm::sin(theta));
        r * libm::cos(theta)
    }
}

/// Dense Gaussian measurement operator `A` with entries `N(0, 1/m)`.
///
/// Both the row-major entries and a transposed copy are materialized so the
/// forward and adjoint products stream rows contiguously.
pub struct MeasurementMatrix {
    seed: u64,
    m: usize,
    n: usize,
    rows: Vec<f32>,   // m x n, row-major
    cols: Vec<f32>,   // n x m, row-major (the transpose)
}

/// Measurement rows for a pixel count `n` at sample-count compression ratio
/// `cr`: `m = round(n / cr)`, floored at 1.
pub fn rows_for_ratio(n: usize, cr: f64) -> usize {
    ((n as f64 / cr).round() as usize).clamp(1, n)
}

/// Builds the operator for `(seed, m, n)`.
///
/// `m > n` is rejected; `m == n` is the lossless diagnostic mode.
pub fn build_matrix(seed: u64, m: usize, n: usize) -> Result<MeasurementMatrix> {
    if m == 0 || n == 0 {
        return Err(Error::param("matrix size", "m and n must be positive"));
    }
    if m > n {
        return Err(Error::param(
            "matrix size",
            format!("m = {m} exceeds n = {n}; only m <= n is supported"),
        ));
    }
    let mut stream = GaussianStream::new(seed);
    let scale = 1.0 / libm::sqrt(m as f64);
    let mut rows = Vec::with_capacity(m * n);
    for _ in 0..m * n {
        rows.push((stream.sample() * scale) as f32);
    }
    let mut cols = vec![0.0f32; n * m];
    for i in 0..m {
        for j in 0..n {
            cols[j * m + i] = rows[i * n + j];
        }
    }
    Ok(MeasurementMatrix {
        seed,
        m,
        n,
        rows,
        cols,
    })
}

/// Contiguous dot product with a fixed 4-lane accumulation pattern.
///
/// The pattern is part of the determinism contract: the sum order never
/// depends on thread scheduling or chunk sizes.
#[inline]
fn dot_f32_f64(row: &[f32], x: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = row.len() / 4;
    for c in 0..chunks {
        let base = c * 4;
        acc[0] += row[base] as f64 * x[base];
        acc[1] += row[base + 1] as f64 * x[base + 1];
        acc[2] += row[base + 2] as f64 * x[base + 2];
        acc[3] += row[base + 3] as f64 * x[base + 3];
    }
    let mut tail = 0.0f64;
    for i in chunks * 4..row.len() {
        tail += row[i] as f64 * x[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

impl MeasurementMatrix {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of measurements (rows).
    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of pixels (columns).
    pub fn n(&self) -> usize {
        self.n
    }

    /// Raw row-major entries; used by tests that probe the distribution.
    pub fn entries(&self) -> &[f32] {
        &self.rows
    }

    /// `y = A x`.
    pub fn measure(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(Error::dims(self.n, x.len()));
        }
        let mut y = vec![0.0f64; self.m];
        y.par_iter_mut().enumerate().for_each(|(i, out)| {
            *out = dot_f32_f64(&self.rows[i * self.n..(i + 1) * self.n], x);
        });
        Ok(y)
    }

    /// `Aᵀ v`.
    pub fn adjoint(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.m {
            return Err(Error::dims(self.m, v.len()));
        }
        let mut out = vec![0.0f64; self.n];
        out.par_iter_mut().enumerate().for_each(|(j, slot)| {
            *slot = dot_f32_f64(&self.cols[j * self.m..(j + 1) * self.m], v);
        });
        Ok(out)
    }
}

/// Measurements quantized to signed 16-bit codes with a shared scale.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedMeasurements {
    /// Dequantized value = `code * scale`. Stored as `f32` because that is
    /// what the container serializes.
    pub scale: f32,
    pub codes: Vec<i16>,
}

/// Quantizes `y` to 16-bit codes: `scale = max|y| / 32767` (1 if all zero).
pub fn quantize(y: &[f64]) -> Result<QuantizedMeasurements> {
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("measurement vector"));
    }
    let max_abs = y.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let scale = if max_abs == 0.0 {
        1.0f32
    } else {
        (max_abs / CODE_MAX) as f32
    };
    let s = scale as f64;
    let codes = y
        .iter()
        .map(|&v| (v / s).round().clamp(-CODE_MAX, CODE_MAX) as i16)
        .collect();
    Ok(QuantizedMeasurements { scale, codes })
}

/// Inverse of [`quantize`].
pub fn dequantize(q: &QuantizedMeasurements) -> Vec<f64> {
    let s = q.scale as f64;
    q.codes.iter().map(|&c| c as f64 * s).collect()
}

/// Process-wide cache of built operators keyed by `(seed, m, n)`.
///
/// A QCIF matrix at ratio 50 is ~100 MB with its transpose, so rebuilding one
/// per sweep cell would dominate the run.
#[derive(Default)]
pub struct MatrixCache {
    map: Mutex<HashMap<(u64, usize, usize), Arc<MeasurementMatrix>>>,
}

impl MatrixCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, seed: u64, m: usize, n: usize) -> Result<Arc<MeasurementMatrix>> {
        let mut map = self.map.lock().unwrap();
        if let Some(a) = map.get(&(seed, m, n)) {
            return Ok(Arc::clone(a));
        }
        let built = Arc::new(build_matrix(seed, m, n)?);
        map.insert((seed, m, n), Arc::clone(&built));
        Ok(built)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rebuild_is_bit_identical() {
        let a = build_matrix(42, 37, 96).unwrap();
        let b = build_matrix(42, 37, 96).unwrap();
        assert_eq!(a.rows, b.rows);
        let c = build_matrix(43, 37, 96).unwrap();
        assert_ne!(a.rows, c.rows);
    }

    #[test]
    fn qcif_ratio_50_gives_507_rows() {
        assert_eq!(rows_for_ratio(176 * 144, 50.0), 507);
        assert_eq!(rows_for_ratio(176 * 144, 1.0), 176 * 144);
    }

    #[test]
    fn m_greater_than_n_is_rejected() {
        assert!(build_matrix(1, 10, 9).is_err());
        assert!(build_matrix(1, 9, 9).is_ok());
    }

    #[test]
    fn column_means_are_near_zero() {
        let m = 507;
        let n = 1024;
        let a = build_matrix(7, m, n).unwrap();
        let tol = 4.0 / (m as f64).sqrt();
        for j in 0..n {
            let mean: f64 = (0..m).map(|i| a.rows[i * n + j] as f64).sum::<f64>() / m as f64;
            assert!(mean.abs() <= tol, "column {j} mean {mean}");
        }
    }

    #[test]
    fn entry_variance_matches_one_over_m() {
        let a = build_matrix(11, 256, 512).unwrap();
        let var: f64 = a.rows.iter().map(|&e| (e as f64).powi(2)).sum::<f64>()
            / (a.rows.len() as f64);
        let want = 1.0 / 256.0;
        assert!((var - want).abs() < 0.05 * want, "variance {var} vs {want}");
    }

    #[test]
    fn measure_of_zero_is_zero() {
        let a = build_matrix(3, 8, 32).unwrap();
        let y = a.measure(&vec![0.0; 32]).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn measure_of_basis_vector_extracts_column() {
        let a = build_matrix(5, 6, 20).unwrap();
        let j = 13;
        let mut x = vec![0.0; 20];
        x[j] = 1.0;
        let y = a.measure(&x).unwrap();
        for i in 0..6 {
            assert_eq!(y[i], a.rows[i * 20 + j] as f64);
        }
    }

    #[test]
    fn adjoint_of_zero_is_zero() {
        let a = build_matrix(5, 6, 20).unwrap();
        let out = a.adjoint(&vec![0.0; 6]).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn adjoint_of_basis_vector_extracts_row() {
        let a = build_matrix(5, 6, 20).unwrap();
        let i = 4;
        let mut v = vec![0.0; 6];
        v[i] = 1.0;
        let out = a.adjoint(&v).unwrap();
        for j in 0..20 {
            assert_eq!(out[j], a.rows[i * 20 + j] as f64);
        }
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let a = build_matrix(5, 6, 20).unwrap();
        assert!(a.measure(&vec![0.0; 19]).is_err());
        assert!(a.adjoint(&vec![0.0; 20]).is_err());
    }

    #[test]
    fn adjoint_identity_holds_on_random_vectors() {
        let a = build_matrix(21, 40, 100).unwrap();
        let mut g = GaussianStream::new(99);
        for _ in 0..20 {
            let x: Vec<f64> = (0..100).map(|_| g.sample()).collect();
            let v: Vec<f64> = (0..40).map(|_| g.sample()).collect();
            let ax = a.measure(&x).unwrap();
            let atv = a.adjoint(&v).unwrap();
            let lhs: f64 = ax.iter().zip(&v).map(|(p, q)| p * q).sum();
            let rhs: f64 = x.iter().zip(&atv).map(|(p, q)| p * q).sum();
            let denom = lhs.abs().max(rhs.abs()).max(1e-300);
            assert!((lhs - rhs).abs() / denom < 1e-9);
        }
    }

    #[test]
    fn quantize_all_zero_round_trips_exactly() {
        let q = quantize(&vec![0.0; 16]).unwrap();
        assert_eq!(q.scale, 1.0);
        assert!(q.codes.iter().all(|&c| c == 0));
        assert!(dequantize(&q).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn quantize_rejects_non_finite() {
        assert!(quantize(&[1.0, f64::NAN]).is_err());
        assert!(quantize(&[f64::INFINITY]).is_err());
    }

    #[test]
    fn matrix_cache_returns_shared_instance() {
        let cache = MatrixCache::new();
        let a = cache.get(1, 4, 16).unwrap();
        let b = cache.get(1, 4, 16).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
    }

    proptest! {
        // |y_i - code_i * scale| <= scale / 2 for every element.
        #[test]
        fn quantizer_error_is_within_half_step(
            y in proptest::collection::vec(-1e4f64..1e4, 1..64),
        ) {
            let q = quantize(&y).unwrap();
            let back = dequantize(&q);
            let half = q.scale as f64 / 2.0;
            for (orig, deq) in y.iter().zip(&back) {
                prop_assert!((orig - deq).abs() <= half + 1e-12);
            }
        }
    }
}
