//! Binary container for per-voxel stretched-exponential fits.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic        8 bytes  "QSTRFIT\0"
//! version      u32      1
//! dims         3 × u32
//! voxel_size   3 × f64
//! affine       16 × f64 (row-major)
//! tau          f64
//! n_shells     u32, then n_shells × f64 shell centers
//! n_dirs       u32, then n_dirs × (u32 bundle, 3 × f64 direction)
//! voxels       nx·ny·nz records, x fastest:
//!   present    u8 (0 or 1); when 1:
//!   s0         f64
//!   n_dirs ×   (f64 D, f64 alpha, f64 rss, u32 n_iter, u8 flags)
//! ```
//!
//! Flag bits: 0 converged, 1 D at bound, 2 alpha at bound.

use std::fs;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::fitting::{DirectionFit, StretchedFitVolume, StretchedVoxelFit};
use crate::signal_model::StretchedParams;

pub const MAGIC: &[u8; 8] = b"QSTRFIT\0";
pub const VERSION: u32 = 1;

pub fn encode_fit_volume(fv: &StretchedFitVolume) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for d in fv.dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in fv.voxel_size {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for row in fv.affine {
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.extend_from_slice(&fv.tau.to_le_bytes());
    out.extend_from_slice(&(fv.shell_b.len() as u32).to_le_bytes());
    for b in &fv.shell_b {
        out.extend_from_slice(&b.to_le_bytes());
    }
    out.extend_from_slice(&(fv.directions.len() as u32).to_le_bytes());
    for (k, d) in &fv.directions {
        out.extend_from_slice(&(*k as u32).to_le_bytes());
        for c in d.iter() {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    for voxel in &fv.voxels {
        match voxel {
            None => out.push(0),
            Some(v) => {
                out.push(1);
                out.extend_from_slice(&v.s0.to_le_bytes());
                for f in &v.fits {
                    out.extend_from_slice(&f.params.d.to_le_bytes());
                    out.extend_from_slice(&f.params.alpha.to_le_bytes());
                    out.extend_from_slice(&f.rss.to_le_bytes());
                    out.extend_from_slice(&(f.n_iter as u32).to_le_bytes());
                    let flags = f.converged as u8 | (f.at_bound[0] as u8) << 1 | (f.at_bound[1] as u8) << 2;
                    out.push(flags);
                }
            }
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::FitFile(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_fit_volume(bytes: &[u8]) -> Result<StretchedFitVolume> {
    let mut c = Cursor { bytes, pos: 0 };
    let magic = c.take(8).map_err(|_| Error::FitFile("file too short for magic".into()))?;
    if magic != MAGIC {
        return Err(Error::FitFile(format!("bad magic {magic:02x?}")));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::FitFile(format!("unsupported version {version}")));
    }
    let dims = [c.u32()? as usize, c.u32()? as usize, c.u32()? as usize];
    let voxel_size = [c.f64()?, c.f64()?, c.f64()?];
    let mut affine = [[0.0; 4]; 4];
    for row in affine.iter_mut() {
        for v in row.iter_mut() {
            *v = c.f64()?;
        }
    }
    let tau = c.f64()?;
    let n_shells = c.u32()? as usize;
    let shell_b = (0..n_shells).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
    let n_dirs = c.u32()? as usize;
    let mut directions = Vec::with_capacity(n_dirs.min(1 << 16));
    for _ in 0..n_dirs {
        let k = c.u32()? as usize;
        directions.push((k, Vector3::new(c.f64()?, c.f64()?, c.f64()?)));
    }
    let n_vox: usize = dims.iter().product();
    let mut voxels = Vec::with_capacity(n_vox.min(1 << 24));
    for i in 0..n_vox {
        match c.u8()? {
            0 => voxels.push(None),
            1 => {
                let s0 = c.f64()?;
                let mut fits = Vec::with_capacity(n_dirs);
                for (k, d) in &directions {
                    let (dv, alpha, rss) = (c.f64()?, c.f64()?, c.f64()?);
                    let n_iter = c.u32()? as usize;
                    let flags = c.u8()?;
                    fits.push(DirectionFit {
                        direction: *d,
                        bundle: *k,
                        params: StretchedParams { d: dv, alpha },
                        rss,
                        n_iter,
                        converged: flags & 1 != 0,
                        at_bound: [flags & 2 != 0, flags & 4 != 0],
                    });
                }
                let voxel_index = [i % dims[0], (i / dims[0]) % dims[1], i / (dims[0] * dims[1])];
                voxels.push(Some(StretchedVoxelFit { fits, s0, voxel_index }));
            }
            other => return Err(Error::FitFile(format!("voxel {i}: bad presence byte {other}"))),
        }
    }
    if c.pos != bytes.len() {
        return Err(Error::FitFile(format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    Ok(StretchedFitVolume { dims, voxel_size, affine, tau, shell_b, directions, voxels })
}

pub fn write_fit_volume(fv: &StretchedFitVolume, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_fit_volume(fv))?;
    Ok(())
}

pub fn read_fit_volume(path: impl AsRef<Path>) -> Result<StretchedFitVolume> {
    decode_fit_volume(&fs::read(path)?)
}
