//! 8-bit binary PGM slices for quick visual checks.

use super::Volume4D;
use crate::analysis::percentile;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Window {
    Fixed(f64, f64),
    /// 2nd to 98th percentile of the finite slice values.
    Auto,
}

/// Extract the 2-D slice `index` along `axis` (0 = x, 1 = y, 2 = z) of volume `v`.
///
/// Returns (width, height, values) with rows ordered by the second in-plane axis.
pub fn extract_slice(vol: &Volume4D, v: usize, axis: usize, index: usize) -> Result<(usize, usize, Vec<f64>)> {
    let [nx, ny, nz] = vol.spatial_dims();
    if axis > 2 {
        return Err(Error::Input(format!("axis {axis} is not 0, 1 or 2")));
    }
    if v >= vol.n_volumes() {
        return Err(Error::Input(format!("volume {v} out of range (have {})", vol.n_volumes())));
    }
    let extent = [nx, ny, nz][axis];
    if index >= extent {
        return Err(Error::Input(format!("slice {index} out of range along axis {axis} (size {extent})")));
    }
    let data = vol.volume(v);
    let (w, h) = match axis {
        0 => (ny, nz),
        1 => (nx, nz),
        _ => (nx, ny),
    };
    let mut out = Vec::with_capacity(w * h);
    for r in 0..h {
        for c in 0..w {
            let (x, y, z) = match axis {
                0 => (index, c, r),
                1 => (c, index, r),
                _ => (c, r, index),
            };
            out.push(data[vol.linear_index(x, y, z)]);
        }
    }
    Ok((w, h, out))
}

fn to_byte(x: f64, lo: f64, hi: f64) -> u8 {
    if !x.is_finite() {
        return 0;
    }
    let t = (x - lo) / (hi - lo) * 255.0;
    (t + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Encode one slice as a binary (P5) PGM.
pub fn export_slice_pgm(vol: &Volume4D, v: usize, axis: usize, index: usize, window: Window) -> Result<Vec<u8>> {
    let (w, h, values) = extract_slice(vol, v, axis, index)?;
    let (lo, hi) = match window {
        Window::Fixed(lo, hi) => {
            if !(lo < hi) {
                return Err(Error::Input(format!("window ({lo}, {hi}) must have lo < hi")));
            }
            (lo, hi)
        }
        Window::Auto => {
            let mut finite: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
            finite.sort_by(f64::total_cmp);
            if finite.is_empty() {
                (0.0, 1.0)
            } else {
                let (lo, hi) = (percentile(&finite, 2.0), percentile(&finite, 98.0));
                if hi > lo {
                    (lo, hi)
                } else {
                    (lo, lo + 1.0)
                }
            }
        }
    };
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(values.iter().map(|&x| to_byte(x, lo, hi)));
    Ok(out)
}
