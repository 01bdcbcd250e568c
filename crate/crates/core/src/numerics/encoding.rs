//! Sinusoidal positional encoding of field coordinates.

use serde::{Deserialize, Serialize};

use super::Real;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub num_frequencies: usize,
    pub include_identity: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            num_frequencies: 10,
            include_identity: true,
        }
    }
}

impl EncoderConfig {
    pub fn new(num_frequencies: usize) -> Self {
        Self {
            num_frequencies,
            include_identity: true,
        }
    }

    /// Encoded length of a `dim`-vector.
    pub fn encoded_dim(&self, dim: usize) -> usize {
        let identity = usize::from(self.include_identity);
        dim * (identity + 2 * self.num_frequencies)
    }
}

/// Encodes `x` into `out`, laid out as
/// `[x, sin(x), cos(x), sin(2x), cos(2x), ..., sin(2^(L-1) x), cos(2^(L-1) x)]`
/// where every block holds all components of `x`.
pub fn encode_into<T: Real>(x: &[T], cfg: &EncoderConfig, out: &mut [T]) -> Result<()> {
    let dim = x.len();
    if out.len() != cfg.encoded_dim(dim) {
        return Err(Error::ShapeMismatch {
            expected: format!("encoded length {}", cfg.encoded_dim(dim)),
            found: out.len().to_string(),
        });
    }
    if let Some(bad) = x.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "positional encoding needs finite coordinates, got {bad}"
        )));
    }
    let mut offset = 0;
    if cfg.include_identity {
        out[..dim].copy_from_slice(x);
        offset = dim;
    }
    let mut freq = T::one();
    for _ in 0..cfg.num_frequencies {
        for (d, &v) in x.iter().enumerate() {
            let (s, c) = (v * freq).sin_cos();
            out[offset + d] = s;
            out[offset + dim + d] = c;
        }
        offset += 2 * dim;
        freq = freq + freq;
    }
    Ok(())
}

pub fn pe_encode<T: Real>(x: &[T], cfg: &EncoderConfig) -> Result<Vec<T>> {
    let mut out = vec![T::zero(); cfg.encoded_dim(x.len())];
    encode_into(x, cfg, &mut out)?;
    Ok(out)
}
