//! Orthonormal 8x8 type-II DCT and its inverse, in float64.

use std::sync::OnceLock;

pub type Block = [f64; 64];

/// `basis[u * 8 + x] = c(u) * cos((2x + 1) u pi / 16)` with orthonormal `c(u)`.
fn basis() -> &'static [f64; 64] {
    static BASIS: OnceLock<[f64; 64]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut b = [0.0; 64];
        for u in 0..8 {
            let c = if u == 0 { (1.0f64 / 8.0).sqrt() } else { 0.5 };
            for x in 0..8 {
                b[u * 8 + x] =
                    c * (((2 * x + 1) as f64 * u as f64 * std::f64::consts::PI) / 16.0).cos();
            }
        }
        b
    })
}

/// Forward 2-D DCT of a row-major block; output index is `v * 8 + u`
/// (vertical frequency major), matching the natural order of quantization tables.
pub fn forward(block: &Block) -> Block {
    let b = basis();
    let mut tmp = [0.0; 64];
    // rows
    for y in 0..8 {
        for u in 0..8 {
            let mut s = 0.0;
            for x in 0..8 {
                s += b[u * 8 + x] * block[y * 8 + x];
            }
            tmp[y * 8 + u] = s;
        }
    }
    let mut out = [0.0; 64];
    // columns
    for v in 0..8 {
        for u in 0..8 {
            let mut s = 0.0;
            for y in 0..8 {
                s += b[v * 8 + y] * tmp[y * 8 + u];
            }
            out[v * 8 + u] = s;
        }
    }
    out
}

pub fn inverse(coeffs: &Block) -> Block {
    let b = basis();
    let mut tmp = [0.0; 64];
    for v in 0..8 {
        for x in 0..8 {
            let mut s = 0.0;
            for u in 0..8 {
                s += b[u * 8 + x] * coeffs[v * 8 + u];
            }
            tmp[v * 8 + x] = s;
        }
    }
    let mut out = [0.0; 64];
    for y in 0..8 {
        for x in 0..8 {
            let mut s = 0.0;
            for v in 0..8 {
                s += b[v * 8 + y] * tmp[v * 8 + x];
            }
            out[y * 8 + x] = s;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Direct quadruple-sum definition, independent of the separable path.
    fn naive_forward(block: &Block) -> Block {
        let pi = std::f64::consts::PI;
        let c = |k: usize| if k == 0 { (0.125f64).sqrt() } else { 0.5 };
        let mut out = [0.0; 64];
        for v in 0..8 {
            for u in 0..8 {
                let mut s = 0.0;
                for y in 0..8 {
                    for x in 0..8 {
                        s += block[y * 8 + x]
                            * ((2 * x + 1) as f64 * u as f64 * pi / 16.0).cos()
                            * ((2 * y + 1) as f64 * v as f64 * pi / 16.0).cos();
                    }
                }
                out[v * 8 + u] = c(u) * c(v) * s;
            }
        }
        out
    }

    #[test]
    fn dc_of_constant_block() {
        let out = forward(&[10.0; 64]);
        assert!((out[0] - 80.0).abs() < 1e-12);
        assert!(out[1..].iter().all(|c| c.abs() < 1e-12));
    }

    proptest! {
        #[test]
        fn forward_inverse_roundtrip(v in prop::collection::vec(-128.0f64..128.0, 64)) {
            let block: Block = v.try_into().unwrap();
            let back = inverse(&forward(&block));
            for (a, b) in block.iter().zip(back.iter()) {
                prop_assert!((a - b).abs() < 1e-10);
            }
        }

        #[test]
        fn separable_matches_definition(v in prop::collection::vec(-128.0f64..128.0, 64)) {
            let block: Block = v.try_into().unwrap();
            let fast = forward(&block);
            let slow = naive_forward(&block);
            for (a, b) in fast.iter().zip(slow.iter()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
