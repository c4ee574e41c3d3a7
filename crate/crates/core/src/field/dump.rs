//! Binary dump of a sampled field.
//!
//! Layout (little-endian): magic `ABFS0001`, rows `u32`, cols `u32`,
//! δx `f64`, δy `f64`, then `rows × cols` interleaved `(re, im)` `f32`
//! pairs in row-major order.

use std::io::{Read, Write};

use num_complex::{Complex32, Complex64};

use super::FieldSlice;
use crate::error::FormatError;
use crate::scenario::GridSpec;
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"ABFS0001";

#[derive(Debug, Clone, PartialEq)]
pub struct FieldDump {
    pub rows: usize,
    pub cols: usize,
    pub step_x: f64,
    pub step_y: f64,
    /// Row-major samples.
    pub data: Vec<Complex32>,
}

impl FieldDump {
    /// Stacks consecutive slices as the columns of one dump.
    pub fn from_slices(grid: &GridSpec, slices: &[FieldSlice]) -> Result<Self> {
        if let Some(bad) = slices.iter().find(|s| s.values.len() != grid.rows) {
            return Err(Error::Input(format!("slice at column {} has {} rows, grid has {}", bad.col, bad.values.len(), grid.rows)));
        }
        let cols = slices.len();
        let mut data = vec![Complex32::new(0.0, 0.0); grid.rows * cols];
        for (c, s) in slices.iter().enumerate() {
            for (r, v) in s.values.iter().enumerate() {
                data[r * cols + c] = Complex32::new(v.re as f32, v.im as f32);
            }
        }
        Ok(Self { rows: grid.rows, cols, step_x: grid.step_x, step_y: grid.step_y, data })
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        let v = self.data[row * self.cols + col];
        Complex64::new(v.re as f64, v.im as f64)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.rows as u32).to_le_bytes())?;
        w.write_all(&(self.cols as u32).to_le_bytes())?;
        w.write_all(&self.step_x.to_le_bytes())?;
        w.write_all(&self.step_y.to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.data.len() * 8);
        for v in &self.data {
            buf.extend_from_slice(&v.re.to_le_bytes());
            buf.extend_from_slice(&v.im.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() < 32 {
            return Err(FormatError::Truncated("field dump header".into()).into());
        }
        if &bytes[..8] != MAGIC {
            return Err(FormatError::BadMagic {
                expected: String::from_utf8_lossy(MAGIC).into_owned(),
                found: String::from_utf8_lossy(&bytes[..8]).into_owned(),
            }
            .into());
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let (rows, cols) = (u32_at(8), u32_at(12));
        let (step_x, step_y) = (f64_at(16), f64_at(24));
        let body = &bytes[32..];
        if body.len() != rows * cols * 8 {
            return Err(FormatError::Truncated(format!("expected {} sample bytes, found {}", rows * cols * 8, body.len())).into());
        }
        let data = body
            .chunks_exact(8)
            .map(|c| {
                Complex32::new(f32::from_le_bytes(c[..4].try_into().unwrap()), f32::from_le_bytes(c[4..].try_into().unwrap()))
            })
            .collect();
        Ok(Self { rows, cols, step_x, step_y, data })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let grid = GridSpec { cols: 3, rows: 2, step_x: 0.5, step_y: 0.25, row_origin: -1, rows_per_element: 1 };
        let slices: Vec<FieldSlice> = (0..3)
            .map(|c| FieldSlice {
                col: c,
                x: c as f64 * 0.5,
                values: vec![Complex64::new(c as f64, 1.0), Complex64::new(-2.0, c as f64 * 0.5)],
            })
            .collect();
        let dump = FieldDump::from_slices(&grid, &slices).unwrap();
        let mut buf = Vec::new();
        dump.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 32 + 6 * 8);
        let back = FieldDump::read_from(&buf[..]).unwrap();
        assert_eq!(back, dump);
        assert_eq!(back.get(1, 2), Complex64::new(-2.0, 1.0));
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let mut buf = b"ABFS0002".to_vec();
        buf.extend_from_slice(&[0u8; 24]);
        assert!(matches!(FieldDump::read_from(&buf[..]), Err(Error::Format(FormatError::BadMagic { .. }))));
        let mut ok = MAGIC.to_vec();
        ok.extend_from_slice(&1u32.to_le_bytes());
        ok.extend_from_slice(&1u32.to_le_bytes());
        ok.extend_from_slice(&[0u8; 16]);
        assert!(matches!(FieldDump::read_from(&ok[..]), Err(Error::Format(FormatError::Truncated(_)))));
    }
}
