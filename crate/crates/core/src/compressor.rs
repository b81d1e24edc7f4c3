//! Unbiased compression operators.
//!
//! Every compressor `C` here satisfies `E[C(u)] = u` and
//! `E‖C(u) − u‖² ≤ α‖u‖²` over its internal randomness. Only the bit cost of
//! a message is modeled; payloads are kept as decoded dense `f64` vectors.
//!
//! Wire convention: uncompressed values cost 32 bits each, a RAND-K entry
//! costs 32 value bits plus `⌈log₂ d⌉` index bits, and an int8 message costs
//! 8 bits per coordinate plus one 32-bit scale.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Bits per uncompressed coordinate.
pub const FLOAT_BITS: u64 = 32;
/// Largest int8 quantization level.
pub const INT8_LEVELS: f64 = 127.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompressorError {
    #[error("invalid compressor: {0}")]
    InvalidSpec(String),
    #[error("input has length {actual}, compressor expects {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("input contains NaN or infinite values")]
    NonFinite,
}

/// Compressor family, as it appears in experiment configs:
/// `{"kind": "identity" | "rand_k" | "int8_quant", "k": <int, rand_k only>}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CompressorKind {
    Identity,
    RandK { k: usize },
    Int8Quant,
}

/// A compressor bound to an ambient dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompressorSpec {
    kind: CompressorKind,
    d: usize,
}

/// Decoded message together with what it costs on the wire.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedMessage {
    pub payload: Vec<f64>,
    pub wire_bits: u64,
}

/// Raw int8 quantization: `payload_j = scale · levels_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Int8Quantized {
    pub scale: f64,
    pub levels: Vec<i8>,
}

impl Int8Quantized {
    pub fn dequantize(&self) -> Vec<f64> {
        self.levels
            .iter()
            .map(|&q| self.scale * f64::from(q))
            .collect()
    }
}

impl CompressorSpec {
    pub fn new(kind: CompressorKind, d: usize) -> Result<Self, CompressorError> {
        if d == 0 {
            return Err(CompressorError::InvalidSpec(
                "dimension d must be at least 1".into(),
            ));
        }
        if let CompressorKind::RandK { k } = kind {
            if k == 0 || k > d {
                return Err(CompressorError::InvalidSpec(format!(
                    "rand_k requires 1 <= k <= d, got k = {k}, d = {d}"
                )));
            }
        }
        Ok(Self { kind, d })
    }

    pub fn identity(d: usize) -> Result<Self, CompressorError> {
        Self::new(CompressorKind::Identity, d)
    }

    pub fn rand_k(k: usize, d: usize) -> Result<Self, CompressorError> {
        Self::new(CompressorKind::RandK { k }, d)
    }

    pub fn int8_quant(d: usize) -> Result<Self, CompressorError> {
        Self::new(CompressorKind::Int8Quant, d)
    }

    pub fn kind(&self) -> CompressorKind {
        self.kind
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Variance factor `α` with `E‖C(u) − u‖² ≤ α‖u‖²`.
    ///
    /// For int8 the per-coordinate rounding variance is at most `s²/4` with
    /// `s = max|u_j| / 127`, and `max|u_j|² ≤ ‖u‖²`, so `α = d / (4·127²)`.
    pub fn alpha(&self) -> f64 {
        let d = self.d as f64;
        match self.kind {
            CompressorKind::Identity => 0.0,
            CompressorKind::RandK { k } => d / k as f64 - 1.0,
            CompressorKind::Int8Quant => d / (4.0 * INT8_LEVELS * INT8_LEVELS),
        }
    }

    /// Fraction `δ ∈ (0, 1]` of a full-precision vector's information that a
    /// message carries.
    pub fn delta(&self) -> f64 {
        match self.kind {
            CompressorKind::Identity => 1.0,
            CompressorKind::RandK { k } => k as f64 / self.d as f64,
            CompressorKind::Int8Quant => 0.25,
        }
    }

    /// Exact wire cost of one message.
    pub fn payload_bits(&self) -> u64 {
        let d = self.d as u64;
        match self.kind {
            CompressorKind::Identity => FLOAT_BITS * d,
            CompressorKind::RandK { k } => k as u64 * (FLOAT_BITS + index_bits(self.d)),
            CompressorKind::Int8Quant => 8 * d + FLOAT_BITS,
        }
    }

    /// True when `compress` draws nothing from the random stream.
    pub fn is_deterministic(&self) -> bool {
        match self.kind {
            CompressorKind::Identity => true,
            CompressorKind::RandK { k } => k == self.d,
            CompressorKind::Int8Quant => false,
        }
    }

    pub fn compress<R: Rng + ?Sized>(
        &self,
        u: &[f64],
        rng: &mut R,
    ) -> Result<CompressedMessage, CompressorError> {
        if u.len() != self.d {
            return Err(CompressorError::DimensionMismatch {
                expected: self.d,
                actual: u.len(),
            });
        }
        if !u.iter().all(|v| v.is_finite()) {
            return Err(CompressorError::NonFinite);
        }
        let payload = match self.kind {
            CompressorKind::Identity => u.to_vec(),
            CompressorKind::RandK { k } => {
                let mut support = Vec::with_capacity(self.d);
                sample_support(k, self.d, rng, &mut support);
                let scale = rand_k_scale(k, self.d);
                let mut payload = vec![0.0; self.d];
                for &j in &support {
                    payload[j] = scale * u[j];
                }
                payload
            }
            CompressorKind::Int8Quant => quantize_int8(u, rng).dequantize(),
        };
        Ok(CompressedMessage {
            payload,
            wire_bits: self.payload_bits(),
        })
    }
}

/// `⌈log₂ d⌉`, the bits needed to address one of `d` coordinates.
pub fn index_bits(d: usize) -> u64 {
    if d <= 1 {
        0
    } else {
        u64::from(usize::BITS - (d - 1).leading_zeros())
    }
}

#[inline]
pub(crate) fn rand_k_scale(k: usize, d: usize) -> f64 {
    d as f64 / k as f64
}

/// Uniform random `k`-subset of `0..d` by a partial Fisher–Yates shuffle.
///
/// `out` receives the chosen indices in selection order. Indices are drawn
/// as `u32` so the stream consumption is platform independent.
pub fn sample_support<R: Rng + ?Sized>(k: usize, d: usize, rng: &mut R, out: &mut Vec<usize>) {
    debug_assert!(k <= d && d <= u32::MAX as usize);
    out.clear();
    out.extend(0..d);
    for i in 0..k {
        let j = rng.gen_range(i as u32..d as u32) as usize;
        out.swap(i, j);
    }
    out.truncate(k);
}

/// Max-abs scaled int8 quantization with stochastic rounding.
///
/// One uniform draw is consumed per coordinate, including exact levels.
pub fn quantize_int8<R: Rng + ?Sized>(u: &[f64], rng: &mut R) -> Int8Quantized {
    let max = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max == 0.0 {
        for _ in u {
            let _: f64 = rng.gen();
        }
        return Int8Quantized {
            scale: 0.0,
            levels: vec![0; u.len()],
        };
    }
    let scale = max / INT8_LEVELS;
    let levels = u
        .iter()
        .map(|&v| {
            let t = v / scale;
            let lo = t.floor();
            let r: f64 = rng.gen();
            let q = if r < t - lo { lo + 1.0 } else { lo };
            q.clamp(-INT8_LEVELS, INT8_LEVELS) as i8
        })
        .collect();
    Int8Quantized { scale, levels }
}

/// Exact first and second moments of RAND-K by enumerating every `k`-subset.
///
/// Returns `(E[C(u)], E‖C(u) − u‖²)`. Independent of [`CompressorSpec::compress`].
pub fn exhaustive_randk_moments(k: usize, u: &[f64]) -> Result<(Vec<f64>, f64), CompressorError> {
    let d = u.len();
    if d == 0 || d > 10 {
        return Err(CompressorError::InvalidSpec(format!(
            "exhaustive enumeration supports 1 <= d <= 10, got {d}"
        )));
    }
    if k == 0 || k > d {
        return Err(CompressorError::InvalidSpec(format!(
            "rand_k requires 1 <= k <= d, got k = {k}, d = {d}"
        )));
    }
    let scale = d as f64 / k as f64;
    let mut mean = vec![0.0; d];
    let mut err = 0.0;
    let mut count = 0usize;
    for mask in 0u32..(1 << d) {
        if mask.count_ones() as usize != k {
            continue;
        }
        count += 1;
        for j in 0..d {
            let c = if mask >> j & 1 == 1 {
                scale * u[j]
            } else {
                0.0
            };
            mean[j] += c;
            err += (c - u[j]) * (c - u[j]);
        }
    }
    let w = count as f64;
    mean.iter_mut().for_each(|m| *m /= w);
    Ok((mean, err / w))
}
