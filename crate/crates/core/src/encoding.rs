//! Binary fixed-point encoding of portfolio weights.
//!
//! Asset `i` owns bits `i*B .. (i+1)*B`; bit `j` (1-based significance) of that
//! block carries weight `2^-j`, so each weight is `m * 2^-B` for an integer
//! `m` in `0..2^B`. Weights can never be negative or reach 1.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Upper bound on bits per weight; keeps every grid point exactly representable.
pub const MAX_BITS_PER_WEIGHT: usize = 30;

#[derive(Debug, Error, PartialEq)]
pub enum EncodingError {
    #[error("bits per weight must be in 1..={MAX_BITS_PER_WEIGHT}, got {0}")]
    BadBits(usize),
    #[error("need at least one asset")]
    NoAssets,
    #[error("expected {expected} entries, got {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("weight {value} of asset {asset} is outside [0, 1)")]
    WeightOutOfRange { asset: usize, value: f64 },
    #[error("invalid bit character {0:?}")]
    BadBitChar(char),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Encoding {
    n_assets: usize,
    bits_per_weight: usize,
}

impl Encoding {
    pub fn new(n_assets: usize, bits_per_weight: usize) -> Result<Self, EncodingError> {
        if n_assets == 0 {
            return Err(EncodingError::NoAssets);
        }
        if bits_per_weight == 0 || bits_per_weight > MAX_BITS_PER_WEIGHT {
            return Err(EncodingError::BadBits(bits_per_weight));
        }
        Ok(Self {
            n_assets,
            bits_per_weight,
        })
    }

    pub fn n_assets(&self) -> usize {
        self.n_assets
    }

    pub fn bits_per_weight(&self) -> usize {
        self.bits_per_weight
    }

    pub fn total_bits(&self) -> usize {
        self.n_assets * self.bits_per_weight
    }

    /// Number of representable levels per weight (`2^B`).
    pub fn levels(&self) -> u64 {
        1 << self.bits_per_weight
    }

    /// Grid spacing `2^-B`.
    pub fn resolution(&self) -> f64 {
        (-(self.bits_per_weight as f64)).exp2()
    }

    /// Flat index of asset `asset`, significance `j` (1-based).
    pub fn bit_index(&self, asset: usize, j: usize) -> usize {
        asset * self.bits_per_weight + (j - 1)
    }

    /// Weight contributed by a set bit at flat index `u`: `2^-j`.
    pub fn bit_value(&self, u: usize) -> f64 {
        let j = u % self.bits_per_weight + 1;
        (-(j as f64)).exp2()
    }

    /// Asset that owns flat bit `u`.
    pub fn asset_of(&self, u: usize) -> usize {
        u / self.bits_per_weight
    }
}

/// Assignment of the binary decision variables, asset-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitVector(Vec<bool>);

impl BitVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![false; len])
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    /// Bits of `index` written most-significant first, i.e. the `index`-th
    /// vector in lexicographic order of length `len`.
    pub fn from_index(index: u64, len: usize) -> Self {
        Self((0..len).map(|u| (index >> (len - 1 - u)) & 1 == 1).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    pub fn get(&self, u: usize) -> bool {
        self.0[u]
    }

    pub fn flip(&mut self, u: usize) {
        self.0[u] = !self.0[u];
    }

    pub fn set(&mut self, u: usize, value: bool) {
        self.0[u] = value;
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|b| **b).count()
    }
}

impl fmt::Display for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            f.write_str(if *b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for BitVector {
    type Err = EncodingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(EncodingError::BadBitChar(other)),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Self)
    }
}

impl Serialize for BitVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BitVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `w_i = sum_j 2^-j * x[i*B + j - 1]`.
pub fn decode(enc: &Encoding, x: &BitVector) -> Result<Vec<f64>, EncodingError> {
    if x.len() != enc.total_bits() {
        return Err(EncodingError::LengthMismatch {
            expected: enc.total_bits(),
            found: x.len(),
        });
    }
    let b = enc.bits_per_weight;
    Ok(x.0
        .chunks(b)
        .map(|block| {
            let m = block.iter().fold(0u64, |acc, bit| (acc << 1) | u64::from(*bit));
            m as f64 * enc.resolution()
        })
        .collect())
}

/// Bits of the grid point nearest to each weight, ties going to the smaller level.
pub fn encode_nearest(enc: &Encoding, w: &[f64]) -> Result<BitVector, EncodingError> {
    if w.len() != enc.n_assets {
        return Err(EncodingError::LengthMismatch {
            expected: enc.n_assets,
            found: w.len(),
        });
    }
    let b = enc.bits_per_weight;
    let top = enc.levels() - 1;
    let mut bits = Vec::with_capacity(enc.total_bits());
    for (asset, &value) in w.iter().enumerate() {
        if !(0.0..1.0).contains(&value) {
            return Err(EncodingError::WeightOutOfRange { asset, value });
        }
        let scaled = value * enc.levels() as f64;
        let floor = scaled.floor();
        let m = if scaled - floor > 0.5 { floor + 1.0 } else { floor };
        let m = (m as u64).min(top);
        bits.extend((0..b).map(|k| (m >> (b - 1 - k)) & 1 == 1));
    }
    Ok(BitVector(bits))
}
