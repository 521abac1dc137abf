//! Orthonormal 8x8 DCT-II and its inverse.

use std::sync::OnceLock;

pub const BLOCK: usize = 8;

/// Basis matrix T[u][k] = c_u cos((2k+1) u pi / 16), built once with `libm`
/// so the table (and therefore every bitstream) is platform-independent.
fn basis() -> &'static [[f64; BLOCK]; BLOCK] {
    static T: OnceLock<[[f64; BLOCK]; BLOCK]> = OnceLock::new();
    T.get_or_init(|| {
        let mut t = [[0.0; BLOCK]; BLOCK];
        for (u, row) in t.iter_mut().enumerate() {
            let cu = if u == 0 {
                libm::sqrt(1.0 / BLOCK as f64)
            } else {
                libm::sqrt(2.0 / BLOCK as f64)
            };
            for (k, v) in row.iter_mut().enumerate() {
                *v = cu * libm::cos((2.0 * k as f64 + 1.0) * u as f64 * std::f64::consts::PI / 16.0);
            }
        }
        t
    })
}

/// Forward transform of one block: `coeffs = T block T^t`.
pub fn forward(block: &[f64; 64], coeffs: &mut [f64; 64]) {
    let t = basis();
    let mut tmp = [0.0f64; 64];
    // tmp = T * block
    for u in 0..BLOCK {
        for k in 0..BLOCK {
            let mut s = 0.0;
            for j in 0..BLOCK {
                s += t[u][j] * block[j * BLOCK + k];
            }
            tmp[u * BLOCK + k] = s;
        }
    }
    // coeffs = tmp * T^t
    for u in 0..BLOCK {
        for v in 0..BLOCK {
            let mut s = 0.0;
            for j in 0..BLOCK {
                s += tmp[u * BLOCK + j] * t[v][j];
            }
            coeffs[u * BLOCK + v] = s;
        }
    }
}

/// Inverse transform: `block = T^t coeffs T`.
pub fn inverse(coeffs: &[f64; 64], block: &mut [f64; 64]) {
    let t = basis();
    let mut tmp = [0.0f64; 64];
    for j in 0..BLOCK {
        for v in 0..BLOCK {
            let mut s = 0.0;
            for u in 0..BLOCK {
                s += t[u][j] * coeffs[u * BLOCK + v];
            }
            tmp[j * BLOCK + v] = s;
        }
    }
    for j in 0..BLOCK {
        for k in 0..BLOCK {
            let mut s = 0.0;
            for v in 0..BLOCK {
                s += tmp[j * BLOCK + v] * t[v][k];
            }
            block[j * BLOCK + k] = s;
        }
    }
}
