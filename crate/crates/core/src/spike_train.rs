use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A fixed-length binary spike sequence, one bit per time step or phase bin.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpikeTrain(Vec<bool>);

impl SpikeTrain {
    pub fn zeros(len: usize) -> Self {
        Self(vec![false; len])
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn get(&self, k: usize) -> bool {
        self.0[k]
    }

    pub fn set(&mut self, k: usize) {
        self.0[k] = true;
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    /// Indices of set bits in ascending order.
    pub fn ones(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    /// Rotates right by `r`: output bit `(i + r) mod len` is input bit `i`.
    pub fn rotated_right(&self, r: usize) -> Self {
        let n = self.len();
        if n == 0 {
            return self.clone();
        }
        let r = r % n;
        let mut out = vec![false; n];
        for (i, &b) in self.0.iter().enumerate() {
            out[(i + r) % n] = b;
        }
        Self(out)
    }

    /// ASCII `'0'`/`'1'` string, bit 0 first.
    pub fn to_bit_string(&self) -> String {
        self.0.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }

    pub fn from_bit_string(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Format(format!("invalid bit character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }
}
