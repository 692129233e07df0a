//! Snapshot files and CSV tables.
//!
//! A snapshot is one scalar grid: the magic `SIPFW1\0`, then `dim: u8`,
//! `H: u32` per axis, `L: f64`, `t: f64`, the field name as `len: u8` plus
//! ASCII bytes, then `H^dim` little-endian `f64` values with x fastest.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::Grid;

pub const MAGIC: &[u8; 7] = b"SIPFW1\0";

/// Grids up to this many nodes also get a CSV sidecar.
pub const CSV_SIDECAR_LIMIT: usize = 1 << 16;

/// One named scalar grid at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSnapshot {
    pub name: String,
    pub grid: Grid,
    pub time: f64,
    pub values: Vec<f64>,
}

impl GridSnapshot {
    pub fn encode(&self) -> Result<Vec<u8>> {
        if !self.name.is_ascii() || self.name.len() > 255 {
            return Err(Error::Format(format!("field name `{}` must be ASCII and at most 255 bytes", self.name)));
        }
        if self.values.len() != self.grid.len() {
            return Err(Error::Format("value count does not match grid".into()));
        }
        let mut out = Vec::with_capacity(32 + self.name.len() + 8 * self.values.len());
        out.extend_from_slice(MAGIC);
        out.push(self.grid.dim as u8);
        for _ in 0..self.grid.dim {
            out.extend_from_slice(&(self.grid.n as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.grid.length.to_le_bytes());
        out.extend_from_slice(&self.time.to_le_bytes());
        out.push(self.name.len() as u8);
        out.extend_from_slice(self.name.as_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut take = |n: usize| -> Result<&[u8]> {
            if r.len() < n {
                return Err(Error::Format("truncated snapshot".into()));
            }
            let (a, b) = r.split_at(n);
            r = b;
            Ok(a)
        };
        if take(7)? != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let dim = take(1)?[0] as usize;
        if dim != 2 && dim != 3 {
            return Err(Error::Format(format!("unsupported dimension {dim}")));
        }
        let mut sizes = Vec::with_capacity(dim);
        for _ in 0..dim {
            sizes.push(u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize);
        }
        if sizes.iter().any(|&s| s != sizes[0]) || sizes[0] < 2 || sizes[0] % 2 != 0 {
            return Err(Error::Format(format!("unsupported grid shape {sizes:?}")));
        }
        let length = f64::from_le_bytes(take(8)?.try_into().unwrap());
        let time = f64::from_le_bytes(take(8)?.try_into().unwrap());
        let nlen = take(1)?[0] as usize;
        let name = String::from_utf8(take(nlen)?.to_vec()).map_err(|_| Error::Format("non-ASCII name".into()))?;
        let grid = Grid::new(dim, sizes[0], length);
        let body = take(8 * grid.len())?;
        let values = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        if !r.is_empty() {
            return Err(Error::Format("trailing bytes after snapshot data".into()));
        }
        Ok(Self { name, grid, time, values })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = BufWriter::new(File::create(path)?);
        f.write_all(&self.encode()?)?;
        f.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
        Self::decode(&bytes)
    }

    /// Node coordinates and values, one node per line.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = BufWriter::new(File::create(path)?);
        let axes = ["x1", "x2", "x3"];
        writeln!(f, "{},{}", axes[..self.grid.dim].join(","), self.name)?;
        for (i, v) in self.values.iter().enumerate() {
            let x = self.grid.node(i);
            for xj in &x[..self.grid.dim] {
                write!(f, "{xj},")?;
            }
            writeln!(f, "{v}")?;
        }
        f.flush()?;
        Ok(())
    }
}

/// Writes `{name}_{step:06}.bin` for each snapshot, plus a CSV sidecar for small grids.
pub fn write_snapshot_set(dir: &Path, step: usize, snaps: &[GridSnapshot]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for s in snaps {
        s.write(&dir.join(format!("{}_{step:06}.bin", s.name)))?;
        if s.grid.len() <= CSV_SIDECAR_LIMIT {
            s.write_csv(&dir.join(format!("{}_{step:06}.csv", s.name)))?;
        }
    }
    Ok(())
}

/// Writes a header and rows as comma-separated text with LF endings.
pub fn write_csv_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    writeln!(f, "{}", header.join(","))?;
    for row in rows {
        writeln!(f, "{}", row.join(","))?;
    }
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_bytes() {
        let grid = Grid::new(2, 4, 6.0);
        let s = GridSnapshot { name: "u".into(), grid, time: 0.25, values: (0..16).map(|i| i as f64 * -0.5).collect() };
        let bytes = s.encode().unwrap();
        assert_eq!(&bytes[..7], b"SIPFW1\0");
        assert_eq!(bytes.len(), 7 + 1 + 8 + 8 + 8 + 2 + 16 * 8);
        assert_eq!(GridSnapshot::decode(&bytes).unwrap(), s);
        assert!(GridSnapshot::decode(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(GridSnapshot::decode(&bad).is_err());
    }

    #[test]
    fn header_layout() {
        let grid = Grid::new(3, 2, 1.5);
        let s = GridSnapshot { name: "vw".into(), grid, time: 2.0, values: vec![1.0; 8] };
        let b = s.encode().unwrap();
        assert_eq!(b[7], 3);
        assert_eq!(&b[8..12], &2u32.to_le_bytes());
        assert_eq!(&b[20..28], &1.5f64.to_le_bytes());
        assert_eq!(&b[28..36], &2.0f64.to_le_bytes());
        assert_eq!(b[36], 2);
        assert_eq!(&b[37..39], b"vw");
        assert_eq!(&b[39..47], &1.0f64.to_le_bytes());
    }
}
