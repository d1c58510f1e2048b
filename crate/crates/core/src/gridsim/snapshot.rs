//! Binary snapshots of grid wavefunctions.
//!
//! Layout (little endian): 8-byte magic, u32 version, u32 modes, u64 points,
//! f64 half width, f64 leaked norm, u32 tag length, tag bytes, then
//! `points^modes` pairs of f64 (re, im) in row-major order, mode 0 slowest.

use std::io::{Read, Write};

use num_complex::Complex64 as C64;

use super::{GridSpec, GridWavefunction};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"CVGRIDWF";
const VERSION: u32 = 1;

/// Records the quadrature convention the amplitudes were written under.
pub const CONVENTION_TAG: &str = "x=(a+a^dag)/sqrt2;vacuum-var=1/2;row-major;mode0-slowest";

pub fn write_snapshot(state: &GridWavefunction, mut w: impl Write) -> Result<()> {
    let g = state.grid();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(state.modes() as u32).to_le_bytes())?;
    w.write_all(&(g.points as u64).to_le_bytes())?;
    w.write_all(&g.half_width.to_le_bytes())?;
    w.write_all(&state.leaked().to_le_bytes())?;
    w.write_all(&(CONVENTION_TAG.len() as u32).to_le_bytes())?;
    w.write_all(CONVENTION_TAG.as_bytes())?;
    let mut buf = Vec::with_capacity(state.amplitudes().len() * 16);
    for a in state.amplitudes() {
        buf.extend_from_slice(&a.re.to_le_bytes());
        buf.extend_from_slice(&a.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn bytes<const K: usize>(r: &mut impl Read) -> Result<[u8; K]> {
    let mut b = [0u8; K];
    r.read_exact(&mut b)?;
    Ok(b)
}

pub fn read_snapshot(mut r: impl Read) -> Result<GridWavefunction> {
    if &bytes::<8>(&mut r)? != MAGIC {
        return Err(Error::Consistency("not a grid snapshot".into()));
    }
    let version = u32::from_le_bytes(bytes(&mut r)?);
    if version != VERSION {
        return Err(Error::Consistency(format!("unsupported snapshot version {version}")));
    }
    let modes = u32::from_le_bytes(bytes(&mut r)?) as usize;
    let points = u64::from_le_bytes(bytes(&mut r)?) as usize;
    let half_width = f64::from_le_bytes(bytes(&mut r)?);
    let leaked = f64::from_le_bytes(bytes(&mut r)?);
    let tag_len = u32::from_le_bytes(bytes(&mut r)?) as usize;
    if tag_len > 4096 {
        return Err(Error::Consistency("snapshot tag too long".into()));
    }
    let mut tag = vec![0u8; tag_len];
    r.read_exact(&mut tag)?;
    if tag != CONVENTION_TAG.as_bytes() {
        return Err(Error::Consistency(format!(
            "snapshot convention '{}' differs from '{CONVENTION_TAG}'",
            String::from_utf8_lossy(&tag)
        )));
    }
    let grid = GridSpec::new(points, half_width)?;
    let len = points
        .checked_pow(modes as u32)
        .filter(|n| *n <= 1 << 28)
        .ok_or_else(|| Error::Consistency("snapshot too large".into()))?;
    let mut raw = vec![0u8; len * 16];
    r.read_exact(&mut raw)?;
    let amps = raw
        .chunks_exact(16)
        .map(|c| {
            C64::new(f64::from_le_bytes(c[..8].try_into().unwrap()), f64::from_le_bytes(c[8..].try_into().unwrap()))
        })
        .collect();
    let mut state = GridWavefunction::new(grid, modes, amps)?;
    state.add_leak(leaked);
    Ok(state)
}
