//! Binary snapshot container and density CSV export.
//!
//! Layout (all little endian):
//!
//! ```text
//! magic   8 bytes  "LTSEFPSN"
//! version u32
//! dim     u32
//! per axis: a f64, b f64, N u64
//! t       f64
//! scheme  u32      (u32::MAX when not produced by a time stepper)
//! flags   u32      bit 0: coefficient block follows the node values
//! values  prod(N) x (re f64, im f64), row-major node order
//! coeffs  prod(N) x (re f64, im f64), natural FFT order (if flagged)
//! ```
//!
//! Import prefers the coefficient block, which makes the round trip bit-exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::propagator::Scheme;
use crate::spectral::{Domain, SpectralField, SpectralGrid};

pub const MAGIC: &[u8; 8] = b"LTSEFPSN";
pub const VERSION: u32 = 1;
const NO_SCHEME: u32 = u32::MAX;
const FLAG_COEFFS: u32 = 1;

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: f64,
    pub scheme: Option<Scheme>,
    pub field: SpectralField,
}

pub fn encode(field: &SpectralField, t: f64, scheme: Option<Scheme>) -> Vec<u8> {
    let g = field.grid();
    let mut out = Vec::with_capacity(64 + 32 * g.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(g.dim() as u32).to_le_bytes());
    for axis in 0..g.dim() {
        out.extend_from_slice(&g.domain().lower(axis).to_le_bytes());
        out.extend_from_slice(&g.domain().upper(axis).to_le_bytes());
        out.extend_from_slice(&(g.n(axis) as u64).to_le_bytes());
    }
    out.extend_from_slice(&t.to_le_bytes());
    out.extend_from_slice(&scheme.map(Scheme::id).unwrap_or(NO_SCHEME).to_le_bytes());
    out.extend_from_slice(&FLAG_COEFFS.to_le_bytes());
    for block in [&field.node_values()[..], field.natural_coeffs()] {
        for z in block {
            out.extend_from_slice(&z.re.to_le_bytes());
            out.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::Format(format!("snapshot truncated at byte {} (need {n} more)", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn complex_block(&mut self, n: usize) -> Result<Vec<Complex64>> {
        (0..n).map(|_| Ok(Complex64::new(self.f64()?, self.f64()?))).collect()
    }
}

pub fn decode(bytes: &[u8]) -> Result<Snapshot> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Format("not a snapshot file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported snapshot version {version}")));
    }
    let dim = r.u32()? as usize;
    if !(1..=2).contains(&dim) {
        return Err(Error::Format(format!("unsupported dimension {dim}")));
    }
    let mut bounds = Vec::with_capacity(dim);
    let mut n = Vec::with_capacity(dim);
    for _ in 0..dim {
        bounds.push((r.f64()?, r.f64()?));
        n.push(r.u64()? as usize);
    }
    let t = r.f64()?;
    let scheme_id = r.u32()?;
    let scheme = if scheme_id == NO_SCHEME {
        None
    } else {
        Some(Scheme::from_id(scheme_id).ok_or_else(|| Error::Format(format!("unknown scheme id {scheme_id}")))?)
    };
    let flags = r.u32()?;
    let domain = Domain::new(bounds).map_err(|e| Error::Format(e.to_string()))?;
    let grid = Arc::new(SpectralGrid::new(domain, &n).map_err(|e| Error::Format(e.to_string()))?);
    let values = r.complex_block(grid.len())?;
    let field = if flags & FLAG_COEFFS != 0 {
        let coeffs = r.complex_block(grid.len())?;
        SpectralField::from_natural_coeffs(grid, coeffs)?
    } else {
        SpectralField::from_values(grid, values)?
    };
    if r.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes after snapshot", bytes.len() - r.pos)));
    }
    Ok(Snapshot { t, scheme, field })
}

pub fn write_snapshot(path: &Path, field: &SpectralField, t: f64, scheme: Option<Scheme>) -> Result<()> {
    fs::write(path, encode(field, t, scheme))?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    decode(&fs::read(path)?)
}

/// `x,density` (1D) or `x,y,density` (2D) including the right endpoint of each axis.
pub fn density_csv(field: &SpectralField) -> String {
    let g = field.grid();
    let vals = field.node_values_with_endpoint();
    let coord = |axis: usize, j: usize| g.domain().lower(axis) + j as f64 * g.h(axis);
    let mut s = String::new();
    match g.dim() {
        1 => {
            s.push_str("x,density\n");
            for (j, z) in vals.iter().enumerate() {
                let _ = writeln!(s, "{:.10e},{:.16e}", coord(0, j), z.norm_sqr());
            }
        }
        _ => {
            s.push_str("x,y,density\n");
            let ny = g.n(1) + 1;
            for (k, z) in vals.iter().enumerate() {
                let _ = writeln!(s, "{:.10e},{:.10e},{:.16e}", coord(0, k / ny), coord(1, k % ny), z.norm_sqr());
            }
        }
    }
    s
}

pub fn write_density_csv(path: &Path, field: &SpectralField) -> Result<()> {
    fs::write(path, density_csv(field))?;
    Ok(())
}
