//! Binary field dumps.
//!
//! Layout, all little endian: the 8-byte magic `NLABPFLD`, a `u32` format
//! version, a `u32` dimension, three `u64` axis lengths, three `f64` lower
//! corners, the `f64` spacing, then the values in grid order.

use crate::base::{Exterior, Field, Grid};
use crate::error::{Error, Result};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"NLABPFLD";
const VERSION: u32 = 1;

fn bad(msg: impl Into<String>) -> Error {
    std::io::Error::new(std::io::ErrorKind::InvalidData, msg.into()).into()
}

pub fn write_field(path: &Path, field: &Field) -> Result<()> {
    let g = &field.grid;
    let mut buf = Vec::with_capacity(80 + 8 * field.values.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(g.n as u32).to_le_bytes());
    for a in 0..3 {
        let d = if a < g.n { g.dims[a] } else { 1 };
        buf.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for a in 0..3 {
        let lo = if a < g.n { g.lo[a] } else { 0.0 };
        buf.extend_from_slice(&lo.to_le_bytes());
    }
    buf.extend_from_slice(&g.h.to_le_bytes());
    for v in &field.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

fn take<const N: usize>(data: &[u8], at: &mut usize) -> Result<[u8; N]> {
    let bytes = data.get(*at..*at + N).ok_or_else(|| bad("field dump is truncated"))?;
    *at += N;
    Ok(bytes.try_into().expect("slice length checked"))
}

/// Reads a dump; the stored grid must equal `expected` when given.
pub fn read_field(path: &Path, expected: Option<&Grid>) -> Result<Field> {
    let mut data = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut data)?;
    let mut at = 0;
    if &take::<8>(&data, &mut at)? != MAGIC {
        return Err(bad(format!("{} is not a field dump", path.display())));
    }
    let version = u32::from_le_bytes(take(&data, &mut at)?);
    if version != VERSION {
        return Err(bad(format!("unsupported dump version {version}")));
    }
    let n = u32::from_le_bytes(take(&data, &mut at)?) as usize;
    if !(1..=3).contains(&n) {
        return Err(bad(format!("bad dimension {n} in dump")));
    }
    let mut dims = [1usize; 3];
    for d in dims.iter_mut() {
        *d = u64::from_le_bytes(take(&data, &mut at)?) as usize;
    }
    let mut lo = [0.0; 3];
    for l in lo.iter_mut() {
        *l = f64::from_le_bytes(take(&data, &mut at)?);
    }
    let h = f64::from_le_bytes(take(&data, &mut at)?);
    let lo_v: Vec<f64> = lo[..n].to_vec();
    let hi_v: Vec<f64> = (0..n).map(|a| lo[a] + (dims[a] - 1) as f64 * h).collect();
    let grid = Grid::new(&lo_v, &hi_v, h)?;
    if let Some(e) = expected {
        if grid.dims != e.dims || grid.n != e.n || (0..n).any(|a| (grid.lo[a] - e.lo[a]).abs() > 1e-9 * h) || (grid.h - e.h).abs() > 1e-12 * h {
            return Err(Error::Config(format!("grid of {} does not match the configured grid", path.display())));
        }
    }
    let count = grid.len();
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        values.push(f64::from_le_bytes(take(&data, &mut at)?));
    }
    if at != data.len() {
        return Err(bad("trailing bytes after field values"));
    }
    let grid = expected.copied().unwrap_or(grid);
    Field::new(grid, values, Exterior::Zero)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_round_trip() {
        let g = Grid::cube(2, 1.0, 5).unwrap();
        let f = Field::from_fn(g, Exterior::Zero, |x| x[0] - 2.0 * x[1]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.bin");
        write_field(&path, &f).unwrap();
        let back = read_field(&path, Some(&g)).unwrap();
        assert_eq!(back.values, f.values);
        let other = Grid::cube(2, 1.0, 9).unwrap();
        assert!(read_field(&path, Some(&other)).is_err());
    }
}
