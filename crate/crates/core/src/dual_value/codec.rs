//! Binary field format, all integers and floats little-endian:
//!
//! ```text
//! magic     4 bytes  "RDVF"
//! version   u32      1
//! variant   u8       0 = inf-sup, 1 = sup-inf
//! dim       u32      number of constraints I
//! states    u32
//! shocks    u32
//! L         f64
//! horizons  I × u8   0 = two-period, 1 = infinite
//! axes      I × (u32 length, length × f64 knots)
//! values    states × shocks × nodes × f64, node index fastest
//! ```

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use super::field::{DualValueField, Variant};
use super::grid::{GammaGrid, GridError};
use crate::model::Horizon;

pub const MAGIC: &[u8; 4] = b"RDVF";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("not a field file (bad magic)")]
    Magic,
    #[error("unsupported field format version {0}")]
    Version(u32),
    #[error("corrupt field file: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn write_field(field: &DualValueField, mut w: impl Write) -> Result<(), CodecError> {
    let mut buf = Vec::with_capacity(64 + 8 * field.values().len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(match field.variant() {
        Variant::InfSup => 0,
        Variant::SupInf => 1,
    });
    for n in [field.dim(), field.num_states(), field.num_shocks()] {
        buf.extend_from_slice(&(n as u32).to_le_bytes());
    }
    buf.extend_from_slice(&field.lipschitz().to_le_bytes());
    buf.extend(field.horizons().iter().map(|h| match h {
        Horizon::Two => 0u8,
        Horizon::Infinite => 1u8,
    }));
    for ax in field.grid().axes() {
        buf.extend_from_slice(&(ax.len() as u32).to_le_bytes());
        ax.iter().for_each(|v| buf.extend_from_slice(&v.to_le_bytes()));
    }
    field.values().iter().for_each(|v| buf.extend_from_slice(&v.to_le_bytes()));
    w.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a>(&'a [u8]);

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], CodecError> {
        if self.0.len() < n {
            return Err(CodecError::Corrupt("truncated".into()));
        }
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        Ok(head)
    }
    fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, CodecError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_field(mut r: impl Read) -> Result<DualValueField, CodecError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut c = Cursor(&bytes);
    if c.take(4).map_err(|_| CodecError::Magic)? != MAGIC {
        return Err(CodecError::Magic);
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(CodecError::Version(version));
    }
    let variant = match c.u8()? {
        0 => Variant::InfSup,
        1 => Variant::SupInf,
        v => return Err(CodecError::Corrupt(format!("variant tag {v}"))),
    };
    let dim = c.u32()? as usize;
    let states = c.u32()? as usize;
    let shocks = c.u32()? as usize;
    let lipschitz = c.f64()?;
    let horizons = (0..dim)
        .map(|_| match c.u8()? {
            0 => Ok(Horizon::Two),
            1 => Ok(Horizon::Infinite),
            v => Err(CodecError::Corrupt(format!("horizon tag {v}"))),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut axes = Vec::with_capacity(dim);
    for _ in 0..dim {
        let len = c.u32()? as usize;
        axes.push((0..len).map(|_| c.f64()).collect::<Result<Vec<_>, _>>()?);
    }
    let grid = GammaGrid::from_axes(axes)?;
    let count = states * shocks * grid.len();
    if c.0.len() != 8 * count {
        return Err(CodecError::Corrupt(format!("expected {count} values, found {} bytes", c.0.len())));
    }
    let values = (0..count).map(|_| c.f64()).collect::<Result<Vec<_>, _>>()?;
    Ok(DualValueField::new(grid, states, shocks, values, lipschitz, variant, horizons))
}

pub fn save_field(field: &DualValueField, path: impl AsRef<Path>) -> Result<(), CodecError> {
    let f = std::fs::File::create(path)?;
    write_field(field, std::io::BufWriter::new(f))
}

pub fn load_field(path: impl AsRef<Path>) -> Result<DualValueField, CodecError> {
    read_field(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> DualValueField {
        let grid = GammaGrid::from_axes(vec![vec![0.0, 0.3], vec![0.0, 1.0, 2.5]]).unwrap();
        let values = (0..2 * 3 * 6).map(|k| k as f64 * 0.1 - 1.0).collect();
        DualValueField::new(grid, 2, 3, values, 2.5, Variant::SupInf, vec![Horizon::Two, Horizon::Infinite])
    }

    #[test]
    fn round_trip() {
        let f = sample();
        let mut buf = Vec::new();
        write_field(&f, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"RDVF");
        assert_eq!(read_field(buf.as_slice()).unwrap(), f);
    }

    #[test]
    fn rejects_damage() {
        let mut buf = Vec::new();
        write_field(&sample(), &mut buf).unwrap();
        assert!(matches!(read_field(&b"XXXX"[..]), Err(CodecError::Magic)));
        assert!(matches!(read_field(&buf[..buf.len() - 3]), Err(CodecError::Corrupt(_))));
        buf[4] = 9;
        assert!(matches!(read_field(buf.as_slice()), Err(CodecError::Version(9))));
    }
}
