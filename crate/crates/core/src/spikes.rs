//! Time-major binary spike records.

use crate::error::{Error, Result};

/// Binary activation record for one sequence: shape `(t_steps, units)`,
/// entries in {0, 1}, time-major (row `t` holds all units at step `t`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpikeTensor {
    t_steps: usize,
    units: usize,
    data: Vec<u8>,
}

impl SpikeTensor {
    pub fn zeros(t_steps: usize, units: usize) -> Self {
        Self {
            t_steps,
            units,
            data: vec![0; t_steps * units],
        }
    }

    /// Build from a predicate over (t, unit).
    pub fn from_fn(t_steps: usize, units: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut s = Self::zeros(t_steps, units);
        for t in 0..t_steps {
            for i in 0..units {
                if f(t, i) {
                    s.data[t * units + i] = 1;
                }
            }
        }
        s
    }

    pub fn t_steps(&self) -> usize {
        self.t_steps
    }

    pub fn units(&self) -> usize {
        self.units
    }

    pub fn get(&self, t: usize, unit: usize) -> u8 {
        self.data[t * self.units + unit]
    }

    pub fn set(&mut self, t: usize, unit: usize, fired: bool) {
        self.data[t * self.units + unit] = fired as u8;
    }

    pub fn row(&self, t: usize) -> &[u8] {
        &self.data[t * self.units..(t + 1) * self.units]
    }

    pub fn set_row(&mut self, t: usize, row: &[u8]) -> Result<()> {
        if row.len() != self.units {
            return Err(Error::DimMismatch(format!(
                "spike row has {} entries, tensor holds {} units",
                row.len(),
                self.units
            )));
        }
        if row.iter().any(|&v| v > 1) {
            return Err(Error::InvalidParam("spike entries must be 0 or 1".into()));
        }
        self.data[t * self.units..(t + 1) * self.units].copy_from_slice(row);
        Ok(())
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().map(|&v| v as usize).sum()
    }

    /// Pack to bytes, one bit per spike, each time-row padded to a whole
    /// byte. Bit k of a byte is unit `8*b + k` (LSB first).
    pub fn pack_rows(&self) -> Vec<u8> {
        let bpr = self.units.div_ceil(8);
        let mut out = vec![0u8; bpr * self.t_steps];
        for t in 0..self.t_steps {
            let row = self.row(t);
            let base = t * bpr;
            for (i, &v) in row.iter().enumerate() {
                if v != 0 {
                    out[base + i / 8] |= 1 << (i % 8);
                }
            }
        }
        out
    }

    /// Inverse of [`pack_rows`](Self::pack_rows).
    pub fn unpack_rows(t_steps: usize, units: usize, bytes: &[u8]) -> Result<Self> {
        let bpr = units.div_ceil(8);
        if bytes.len() != bpr * t_steps {
            return Err(Error::DimMismatch(format!(
                "packed payload is {} bytes, expected {}",
                bytes.len(),
                bpr * t_steps
            )));
        }
        let mut s = Self::zeros(t_steps, units);
        for t in 0..t_steps {
            let base = t * bpr;
            for i in 0..units {
                if bytes[base + i / 8] >> (i % 8) & 1 != 0 {
                    s.data[t * units + i] = 1;
                }
            }
        }
        Ok(s)
    }
}
