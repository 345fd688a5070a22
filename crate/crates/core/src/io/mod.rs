//! Volumes and the file formats they travel in.

pub mod csv;
pub mod fitfile;
pub mod nifti;
pub mod pgm;

pub use nifti::{read_nifti, read_nifti_bytes, write_nifti, write_nifti_bytes, NiftiDatatype, NiftiHeader};

use crate::error::{Error, Result};

/// Dense 4-D array, x fastest, then y, z, volume.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume4D {
    /// (nx, ny, nz, nv)
    pub dims: [usize; 4],
    /// Voxel size [mm].
    pub voxel_size: [f64; 3],
    /// Voxel-to-world transform, row-major.
    pub affine: [[f64; 4]; 4],
    pub data: Vec<f64>,
    /// Header this volume was read from, reused as a template when writing.
    pub header: Option<NiftiHeader>,
}

impl Volume4D {
    pub fn new(dims: [usize; 4], voxel_size: [f64; 3], data: Vec<f64>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Input(format!("volume dimensions must be positive, got {dims:?}")));
        }
        let n: usize = dims.iter().product();
        if data.len() != n {
            return Err(Error::Input(format!("volume {dims:?} needs {n} values, got {}", data.len())));
        }
        let mut affine = [[0.0; 4]; 4];
        for i in 0..3 {
            affine[i][i] = voxel_size[i];
        }
        affine[3][3] = 1.0;
        Ok(Self { dims, voxel_size, affine, data, header: None })
    }

    pub fn zeros(dims: [usize; 4], voxel_size: [f64; 3]) -> Self {
        Self::new(dims, voxel_size, vec![0.0; dims.iter().product()]).expect("dims checked by caller")
    }

    /// Spatial voxel count nx·ny·nz.
    pub fn n_voxels(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn n_volumes(&self) -> usize {
        self.dims[3]
    }

    pub fn spatial_dims(&self) -> [usize; 3] {
        [self.dims[0], self.dims[1], self.dims[2]]
    }

    pub fn voxel_coords(&self, linear: usize) -> [usize; 3] {
        let [nx, ny, _, _] = self.dims;
        [linear % nx, (linear / nx) % ny, linear / (nx * ny)]
    }

    pub fn linear_index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    /// All volumes at one voxel.
    pub fn voxel_series(&self, linear: usize) -> Vec<f64> {
        let stride = self.n_voxels();
        (0..self.dims[3]).map(|v| self.data[linear + v * stride]).collect()
    }

    /// One 3-D volume as a slice.
    pub fn volume(&self, v: usize) -> &[f64] {
        let stride = self.n_voxels();
        &self.data[v * stride..(v + 1) * stride]
    }

    /// Assemble a volume from per-voxel series (voxel-major input).
    pub fn from_series(spatial: [usize; 3], voxel_size: [f64; 3], series: &[Vec<f64>]) -> Result<Self> {
        let nv = series.first().map_or(0, Vec::len);
        let n = spatial.iter().product::<usize>();
        if series.len() != n || series.iter().any(|s| s.len() != nv) {
            return Err(Error::Input("ragged voxel series".into()));
        }
        let mut data = vec![0.0; n * nv];
        for (i, s) in series.iter().enumerate() {
            for (v, &x) in s.iter().enumerate() {
                data[i + v * n] = x;
            }
        }
        Self::new([spatial[0], spatial[1], spatial[2], nv], voxel_size, data)
    }

    /// A 3-D volume sharing this volume's geometry.
    pub fn like_3d(&self, data: Vec<f64>) -> Result<Self> {
        let mut out = Self::new([self.dims[0], self.dims[1], self.dims[2], 1], self.voxel_size, data)?;
        out.affine = self.affine;
        Ok(out)
    }
}

/// Mask from a volume: nonzero, finite voxels of the first volume.
pub fn mask_from_volume(vol: &Volume4D) -> Vec<bool> {
    vol.volume(0).iter().map(|v| v.is_finite() && *v != 0.0).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_is_x_fastest() {
        let vol = Volume4D::new([2, 3, 4, 2], [1.0; 3], (0..48).map(f64::from).collect()).unwrap();
        assert_eq!(vol.linear_index(1, 2, 3), 1 + 2 * (2 + 3 * 3));
        assert_eq!(vol.voxel_coords(23), [1, 2, 3]);
        assert_eq!(vol.voxel_series(23), vec![23.0, 47.0]);
        let back = Volume4D::from_series([2, 3, 4], [1.0; 3], &(0..24).map(|i| vol.voxel_series(i)).collect::<Vec<_>>()).unwrap();
        assert_eq!(back.data, vol.data);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Volume4D::new([0, 1, 1, 1], [1.0; 3], vec![]).is_err());
        assert!(Volume4D::new([2, 1, 1, 1], [1.0; 3], vec![1.0]).is_err());
    }
}
