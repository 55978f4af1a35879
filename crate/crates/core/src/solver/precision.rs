//! Reduced-precision storage of low-rank factors.

use super::compress::LowRank;
use super::scalar::Scalar;
use crate::C64;
use half::f16;
use serde::{Deserialize, Serialize};

/// Storage formats for one low-rank column pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StoragePrecision {
    Fp16,
    Fp24,
    Fp32,
}

impl StoragePrecision {
    /// Unit roundoff of the format.
    pub fn unit_roundoff(self) -> f64 {
        match self {
            StoragePrecision::Fp32 => 2f64.powi(-24),
            StoragePrecision::Fp24 => 2f64.powi(-16),
            StoragePrecision::Fp16 => 2f64.powi(-11),
        }
    }

    /// Bytes per real component.
    pub fn bytes_per_real(self) -> usize {
        match self {
            StoragePrecision::Fp32 => 4,
            StoragePrecision::Fp24 => 3,
            StoragePrecision::Fp16 => 2,
        }
    }

    fn index(self) -> usize {
        match self {
            StoragePrecision::Fp32 => 0,
            StoragePrecision::Fp24 => 1,
            StoragePrecision::Fp16 => 2,
        }
    }
}

/// 24-bit float: the top three bytes of an `f32`, rounded to nearest even
/// on the dropped byte.
pub fn encode_fp24(x: f32) -> [u8; 3] {
    let bits = x.to_bits();
    let rounded = if x.is_finite() {
        let low = bits & 0xff;
        let keep = bits >> 8;
        let up = low > 0x80 || (low == 0x80 && keep & 1 == 1);
        let r = keep + up as u32;
        // Rounding into the infinity exponent saturates at the largest finite value.
        if (r << 8) & 0x7f80_0000 == 0x7f80_0000 {
            keep
        } else {
            r
        }
    } else {
        bits >> 8
    };
    [(rounded & 0xff) as u8, ((rounded >> 8) & 0xff) as u8, ((rounded >> 16) & 0xff) as u8]
}

pub fn decode_fp24(b: [u8; 3]) -> f32 {
    f32::from_bits(((b[0] as u32) | (b[1] as u32) << 8 | (b[2] as u32) << 16) << 8)
}

fn encode_values(vals: &[C64], scale: f64, prec: StoragePrecision, out: &mut Vec<u8>) {
    for z in vals {
        for r in [z.re / scale, z.im / scale] {
            match prec {
                StoragePrecision::Fp32 => out.extend_from_slice(&(r as f32).to_le_bytes()),
                StoragePrecision::Fp24 => out.extend_from_slice(&encode_fp24(r as f32)),
                StoragePrecision::Fp16 => out.extend_from_slice(&f16::from_f64(r).to_le_bytes()),
            }
        }
    }
}

fn decode_values(bytes: &[u8], scale: f64, prec: StoragePrecision, out: &mut Vec<C64>) {
    let w = prec.bytes_per_real();
    let reals = bytes.chunks_exact(w).map(|c| match prec {
        StoragePrecision::Fp32 => f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64,
        StoragePrecision::Fp24 => decode_fp24([c[0], c[1], c[2]]) as f64,
        StoragePrecision::Fp16 => f16::from_le_bytes([c[0], c[1]]).to_f64(),
    });
    let mut it = reals;
    while let (Some(re), Some(im)) = (it.next(), it.next()) {
        out.push(C64::new(re * scale, im * scale));
    }
}

/// One column of `X` and the matching column of `Y` in a shared format.
/// Reduced formats store each column normalized by its largest component.
#[derive(Clone, Debug)]
struct MpColumn {
    precision: StoragePrecision,
    x: Vec<u8>,
    y: Vec<u8>,
    scales: Option<(f32, f32)>,
}

/// Low-rank pair whose columns are stored in precision buckets.
#[derive(Clone, Debug)]
pub struct MixedLowRank {
    pub nrows: usize,
    pub ncols: usize,
    columns: Vec<MpColumn>,
}

fn max_component(v: &[C64]) -> f64 {
    v.iter().map(|z| z.re.abs().max(z.im.abs())).fold(0.0, f64::max)
}

impl MixedLowRank {
    pub fn rank(&self) -> usize {
        self.columns.len()
    }

    /// Bytes stored per format, indexed fp32, fp24, fp16.
    pub fn bytes_by_precision(&self) -> [u64; 3] {
        let mut out = [0u64; 3];
        for c in &self.columns {
            let scale_bytes = if c.scales.is_some() { 8 } else { 0 };
            out[c.precision.index()] += (c.x.len() + c.y.len() + scale_bytes) as u64;
        }
        out
    }

    pub fn bytes(&self) -> u64 {
        self.bytes_by_precision().iter().sum()
    }

    pub fn precisions(&self) -> Vec<StoragePrecision> {
        self.columns.iter().map(|c| c.precision).collect()
    }

    /// Promotes every column back to working precision.
    pub fn decode<T: Scalar>(&self) -> LowRank<T> {
        let r = self.rank();
        let mut x = Vec::with_capacity(self.nrows * r);
        let mut y = Vec::with_capacity(self.ncols * r);
        let mut buf = Vec::new();
        for c in &self.columns {
            let (sx, sy) = c.scales.map_or((1.0, 1.0), |(a, b)| (a as f64, b as f64));
            buf.clear();
            decode_values(&c.x, sx, c.precision, &mut buf);
            x.extend(buf.iter().map(|&z| T::from_c64(z)));
            buf.clear();
            decode_values(&c.y, sy, c.precision, &mut buf);
            y.extend(buf.iter().map(|&z| T::from_c64(z)));
        }
        LowRank {
            nrows: self.nrows,
            ncols: self.ncols,
            rank: r,
            x,
            y,
        }
    }
}

/// Weight of column pair `i`, the product of the column norms.
fn column_weights<T: Scalar>(lr: &LowRank<T>) -> Vec<f64> {
    (0..lr.rank)
        .map(|i| {
            let nx: f64 = lr.x[i * lr.nrows..(i + 1) * lr.nrows].iter().map(|v| v.abs2()).sum();
            let ny: f64 = lr.y[i * lr.ncols..(i + 1) * lr.ncols].iter().map(|v| v.abs2()).sum();
            (nx * ny).sqrt()
        })
        .collect()
}

/// Cheapest format whose roundoff keeps column weight `w` within
/// `eps * w_max`.
pub fn choose_precision(w: f64, w_max: f64, eps: f64) -> StoragePrecision {
    for p in [StoragePrecision::Fp16, StoragePrecision::Fp24] {
        if p.unit_roundoff() * w <= eps * w_max {
            return p;
        }
    }
    StoragePrecision::Fp32
}

/// Stores each column pair of `lr` in the cheapest format allowed by its
/// weight relative to the dominant pair.
pub fn mp_partition<T: Scalar>(lr: &LowRank<T>, eps: f64) -> MixedLowRank {
    let weights = column_weights(lr);
    let w_max = weights.iter().cloned().fold(0.0, f64::max);
    let mut columns = Vec::with_capacity(lr.rank);
    for (i, &w) in weights.iter().enumerate() {
        let mut precision = choose_precision(w, w_max, eps);
        let reals = 2 * (lr.nrows + lr.ncols);
        if precision != StoragePrecision::Fp32 && reals * precision.bytes_per_real() + 8 >= reals * 4 {
            precision = StoragePrecision::Fp32;
        }
        let xs: Vec<C64> = lr.x[i * lr.nrows..(i + 1) * lr.nrows].iter().map(|v| v.to_c64()).collect();
        let ys: Vec<C64> = lr.y[i * lr.ncols..(i + 1) * lr.ncols].iter().map(|v| v.to_c64()).collect();
        let scales = if precision == StoragePrecision::Fp32 {
            None
        } else {
            let (a, b) = (max_component(&xs), max_component(&ys));
            Some(((if a > 0.0 { a } else { 1.0 }) as f32, (if b > 0.0 { b } else { 1.0 }) as f32))
        };
        let (sx, sy) = scales.map_or((1.0, 1.0), |(a, b)| (a as f64, b as f64));
        let mut x = Vec::new();
        let mut y = Vec::new();
        encode_values(&xs, sx, precision, &mut x);
        encode_values(&ys, sy, precision, &mut y);
        columns.push(MpColumn { precision, x, y, scales });
    }
    MixedLowRank {
        nrows: lr.nrows,
        ncols: lr.ncols,
        columns,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::C32;
    use proptest::prelude::*;

    fn decaying(m: usize, n: usize, r: usize, ratio: f64) -> LowRank<C32> {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..r {
            let norm = (m as f64).sqrt();
            for p in 0..m {
                x.push(C32::new(((p * (i + 3)) as f32 * 0.37).sin() / norm as f32, ((p + i) as f32 * 0.11).cos() / norm as f32));
            }
            let s = ratio.powi(i as i32);
            for q in 0..n {
                y.push(C32::new((s * ((q + 2 * i) as f64 * 0.23).cos()) as f32, (s * 0.5) as f32));
            }
        }
        LowRank { nrows: m, ncols: n, rank: r, x, y }
    }

    #[test]
    fn fp24_roundtrip_error_is_bounded() {
        for &v in &[1.0f32, -3.14159, 1e-20, 6.02e23, 0.1, -0.0] {
            let d = decode_fp24(encode_fp24(v));
            assert!((d - v).abs() as f64 <= StoragePrecision::Fp24.unit_roundoff() * v.abs() as f64 * 1.0001);
        }
        assert_eq!(decode_fp24(encode_fp24(f32::MAX)), f32::from_bits(f32::MAX.to_bits() & !0xff));
    }

    #[test]
    fn tight_threshold_keeps_everything_at_fp32() {
        let lr = decaying(50, 40, 6, 0.5);
        let mp = mp_partition(&lr, 1e-9);
        assert!(mp.precisions().iter().all(|&p| p == StoragePrecision::Fp32));
        assert_eq!(mp.bytes(), lr.bytes());
    }

    #[test]
    fn geometric_spectrum_fills_three_buckets() {
        let lr = decaying(64, 64, 20, 0.5);
        let eps = 1e-5;
        let mp = mp_partition(&lr, eps);
        let p = mp.precisions();
        for want in [StoragePrecision::Fp32, StoragePrecision::Fp24, StoragePrecision::Fp16] {
            assert!(p.contains(&want), "{p:?}");
        }
        let dense = lr.to_dense();
        let back = mp.decode::<C32>().to_dense();
        let w_max = column_weights(&lr).into_iter().fold(0.0, f64::max);
        let err = dense.iter().zip(&back).map(|(a, b)| (a - b).to_c64().norm_sqr()).sum::<f64>().sqrt();
        assert!(err <= 10.0 * eps * w_max, "err {err}");
        assert!(mp.bytes() < lr.bytes());
    }

    proptest! {
        #[test]
        fn mixed_storage_never_exceeds_fp32(r in 1usize..12, ratio in 0.05f64..0.95, eps in 1e-7f64..1e-2) {
            let lr = decaying(30, 20, r, ratio);
            let mp = mp_partition(&lr, eps);
            prop_assert!(mp.bytes() <= lr.bytes());
        }
    }
}
