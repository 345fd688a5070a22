//! NIfTI-1 reader and writer.
//!
//! Single-file `.nii` (magic `n+1`) in either byte order, optionally gzip
//! compressed, plus reading of `.hdr`/`.img` pairs (magic `ni1`). Writing is
//! always little-endian `.nii`, gzip when the path ends in `.gz`.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use super::Volume4D;
use crate::error::{Error, Result};

const HEADER_SIZE: usize = 348;
const SINGLE_FILE_OFFSET: usize = 352;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NiftiDatatype {
    Uint8,
    Int16,
    Int32,
    Float32,
    Float64,
}

impl NiftiDatatype {
    pub fn code(self) -> i16 {
        match self {
            NiftiDatatype::Uint8 => 2,
            NiftiDatatype::Int16 => 4,
            NiftiDatatype::Int32 => 8,
            NiftiDatatype::Float32 => 16,
            NiftiDatatype::Float64 => 64,
        }
    }

    pub fn from_code(code: i16) -> Result<Self> {
        Ok(match code {
            2 => NiftiDatatype::Uint8,
            4 => NiftiDatatype::Int16,
            8 => NiftiDatatype::Int32,
            16 => NiftiDatatype::Float32,
            64 => NiftiDatatype::Float64,
            other => return Err(Error::Nifti(format!("unsupported datatype code {other}"))),
        })
    }

    pub fn size(self) -> usize {
        match self {
            NiftiDatatype::Uint8 => 1,
            NiftiDatatype::Int16 => 2,
            NiftiDatatype::Int32 | NiftiDatatype::Float32 => 4,
            NiftiDatatype::Float64 => 8,
        }
    }
}

/// Every field of the 348-byte NIfTI-1 header.
#[derive(Clone, Debug, PartialEq)]
pub struct NiftiHeader {
    /// Bytes 4..40: unused ANALYZE fields, kept verbatim.
    pub legacy: [u8; 36],
    pub dim_info: u8,
    pub dim: [i16; 8],
    pub intent_p: [f32; 3],
    pub intent_code: i16,
    pub datatype: i16,
    pub bitpix: i16,
    pub slice_start: i16,
    pub pixdim: [f32; 8],
    pub vox_offset: f32,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub slice_end: i16,
    pub slice_code: u8,
    pub xyzt_units: u8,
    pub cal_max: f32,
    pub cal_min: f32,
    pub slice_duration: f32,
    pub toffset: f32,
    pub glmax: i32,
    pub glmin: i32,
    pub descrip: [u8; 80],
    pub aux_file: [u8; 24],
    pub qform_code: i16,
    pub sform_code: i16,
    pub quatern: [f32; 3],
    pub qoffset: [f32; 3],
    pub srow: [[f32; 4]; 3],
    pub intent_name: [u8; 16],
    pub magic: [u8; 4],
}

impl Default for NiftiHeader {
    fn default() -> Self {
        let mut legacy = [0u8; 36];
        legacy[34] = b'r'; // "regular"
        Self {
            legacy,
            dim_info: 0,
            dim: [0; 8],
            intent_p: [0.0; 3],
            intent_code: 0,
            datatype: 0,
            bitpix: 0,
            slice_start: 0,
            pixdim: [1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0],
            vox_offset: SINGLE_FILE_OFFSET as f32,
            scl_slope: 1.0,
            scl_inter: 0.0,
            slice_end: 0,
            slice_code: 0,
            xyzt_units: 2 | 8,
            cal_max: 0.0,
            cal_min: 0.0,
            slice_duration: 0.0,
            toffset: 0.0,
            glmax: 0,
            glmin: 0,
            descrip: [0; 80],
            aux_file: [0; 24],
            qform_code: 0,
            sform_code: 0,
            quatern: [0.0; 3],
            qoffset: [0.0; 3],
            srow: [[0.0; 4]; 3],
            intent_name: [0; 16],
            magic: *b"n+1\0",
        }
    }
}

impl NiftiHeader {
    pub fn set_description(&mut self, text: &str) {
        self.descrip = [0; 80];
        let bytes = text.as_bytes();
        let n = bytes.len().min(79);
        self.descrip[..n].copy_from_slice(&bytes[..n]);
    }

    pub fn description(&self) -> String {
        let end = self.descrip.iter().position(|&b| b == 0).unwrap_or(80);
        String::from_utf8_lossy(&self.descrip[..end]).into_owned()
    }

    /// Voxel-to-world transform: sform if set, else qform, else pixdim scaling.
    pub fn affine(&self) -> [[f64; 4]; 4] {
        let mut a = [[0.0; 4]; 4];
        a[3][3] = 1.0;
        if self.sform_code > 0 {
            for (r, row) in self.srow.iter().enumerate() {
                for c in 0..4 {
                    a[r][c] = row[c] as f64;
                }
            }
        } else if self.qform_code > 0 {
            let [b, c, d] = self.quatern.map(f64::from);
            let aa = (1.0 - (b * b + c * c + d * d)).max(0.0).sqrt();
            let rot = [
                [aa * aa + b * b - c * c - d * d, 2.0 * (b * c - aa * d), 2.0 * (b * d + aa * c)],
                [2.0 * (b * c + aa * d), aa * aa + c * c - b * b - d * d, 2.0 * (c * d - aa * b)],
                [2.0 * (b * d - aa * c), 2.0 * (c * d + aa * b), aa * aa + d * d - c * c - b * b],
            ];
            let qfac = if self.pixdim[0] < 0.0 { -1.0 } else { 1.0 };
            let scale = [self.pixdim[1] as f64, self.pixdim[2] as f64, qfac * self.pixdim[3] as f64];
            for r in 0..3 {
                for c in 0..3 {
                    a[r][c] = rot[r][c] * scale[c];
                }
                a[r][3] = self.qoffset[r] as f64;
            }
        } else {
            for i in 0..3 {
                a[i][i] = self.pixdim[i + 1] as f64;
            }
        }
        a
    }

    fn parse(bytes: &[u8]) -> Result<(Self, bool)> {
        if bytes.len() < HEADER_SIZE {
            return Err(Error::Nifti(format!("truncated header: {} bytes, need {HEADER_SIZE}", bytes.len())));
        }
        let le = i32::from_le_bytes(bytes[0..4].try_into().unwrap()) == HEADER_SIZE as i32;
        let be = i32::from_be_bytes(bytes[0..4].try_into().unwrap()) == HEADER_SIZE as i32;
        if !le && !be {
            return Err(Error::Nifti(format!("sizeof_hdr is not 348 (bytes {:02x?})", &bytes[0..4])));
        }
        let r = Reader { bytes, le };
        let magic: [u8; 4] = bytes[344..348].try_into().unwrap();
        if &magic != b"n+1\0" && &magic != b"ni1\0" {
            return Err(Error::Nifti(format!(
                "bad magic {:?} (bytes {:02x?}), expected \"n+1\" or \"ni1\"",
                String::from_utf8_lossy(&magic),
                magic
            )));
        }
        let h = NiftiHeader {
            legacy: bytes[4..40].try_into().unwrap(),
            dim_info: bytes[39],
            dim: std::array::from_fn(|i| r.i16(40 + 2 * i)),
            intent_p: std::array::from_fn(|i| r.f32(56 + 4 * i)),
            intent_code: r.i16(68),
            datatype: r.i16(70),
            bitpix: r.i16(72),
            slice_start: r.i16(74),
            pixdim: std::array::from_fn(|i| r.f32(76 + 4 * i)),
            vox_offset: r.f32(108),
            scl_slope: r.f32(112),
            scl_inter: r.f32(116),
            slice_end: r.i16(120),
            slice_code: bytes[122],
            xyzt_units: bytes[123],
            cal_max: r.f32(124),
            cal_min: r.f32(128),
            slice_duration: r.f32(132),
            toffset: r.f32(136),
            glmax: r.i32(140),
            glmin: r.i32(144),
            descrip: bytes[148..228].try_into().unwrap(),
            aux_file: bytes[228..252].try_into().unwrap(),
            qform_code: r.i16(252),
            sform_code: r.i16(254),
            quatern: std::array::from_fn(|i| r.f32(256 + 4 * i)),
            qoffset: std::array::from_fn(|i| r.f32(268 + 4 * i)),
            srow: std::array::from_fn(|row| std::array::from_fn(|c| r.f32(280 + 16 * row + 4 * c))),
            intent_name: bytes[328..344].try_into().unwrap(),
            magic,
        };
        Ok((h, le))
    }

    fn to_bytes(&self) -> Vec<u8> {
        let mut b = vec![0u8; HEADER_SIZE];
        let mut put = |off: usize, v: &[u8]| b[off..off + v.len()].copy_from_slice(v);
        put(0, &(HEADER_SIZE as i32).to_le_bytes());
        put(4, &self.legacy);
        put(39, &[self.dim_info]);
        for (i, d) in self.dim.iter().enumerate() {
            put(40 + 2 * i, &d.to_le_bytes());
        }
        for (i, p) in self.intent_p.iter().enumerate() {
            put(56 + 4 * i, &p.to_le_bytes());
        }
        put(68, &self.intent_code.to_le_bytes());
        put(70, &self.datatype.to_le_bytes());
        put(72, &self.bitpix.to_le_bytes());
        put(74, &self.slice_start.to_le_bytes());
        for (i, p) in self.pixdim.iter().enumerate() {
            put(76 + 4 * i, &p.to_le_bytes());
        }
        put(108, &self.vox_offset.to_le_bytes());
        put(112, &self.scl_slope.to_le_bytes());
        put(116, &self.scl_inter.to_le_bytes());
        put(120, &self.slice_end.to_le_bytes());
        put(122, &[self.slice_code, self.xyzt_units]);
        put(124, &self.cal_max.to_le_bytes());
        put(128, &self.cal_min.to_le_bytes());
        put(132, &self.slice_duration.to_le_bytes());
        put(136, &self.toffset.to_le_bytes());
        put(140, &self.glmax.to_le_bytes());
        put(144, &self.glmin.to_le_bytes());
        put(148, &self.descrip);
        put(228, &self.aux_file);
        put(252, &self.qform_code.to_le_bytes());
        put(254, &self.sform_code.to_le_bytes());
        for i in 0..3 {
            put(256 + 4 * i, &self.quatern[i].to_le_bytes());
            put(268 + 4 * i, &self.qoffset[i].to_le_bytes());
        }
        for (row, vals) in self.srow.iter().enumerate() {
            for (c, v) in vals.iter().enumerate() {
                put(280 + 16 * row + 4 * c, &v.to_le_bytes());
            }
        }
        put(328, &self.intent_name);
        put(344, &self.magic);
        b
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    le: bool,
}

impl Reader<'_> {
    fn arr<const N: usize>(&self, off: usize) -> [u8; N] {
        let mut a: [u8; N] = self.bytes[off..off + N].try_into().unwrap();
        if !self.le {
            a.reverse();
        }
        a
    }
    fn i16(&self, off: usize) -> i16 {
        i16::from_le_bytes(self.arr(off))
    }
    fn i32(&self, off: usize) -> i32 {
        i32::from_le_bytes(self.arr(off))
    }
    fn f32(&self, off: usize) -> f32 {
        f32::from_le_bytes(self.arr(off))
    }
    fn f64(&self, off: usize) -> f64 {
        f64::from_le_bytes(self.arr(off))
    }
    fn u8(&self, off: usize) -> u8 {
        self.bytes[off]
    }
}

fn maybe_gunzip(raw: Vec<u8>) -> Result<Vec<u8>> {
    if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::Nifti(format!("gzip: {e}")))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn decode(header: NiftiHeader, le: bool, data: &[u8]) -> Result<Volume4D> {
    let ndim = header.dim[0];
    if !(1..=7).contains(&ndim) {
        return Err(Error::Nifti(format!("dim[0] = {ndim} is outside 1..=7")));
    }
    let mut dims = [1usize; 4];
    for i in 0..ndim as usize {
        let d = header.dim[i + 1];
        if d < 1 {
            return Err(Error::Nifti(format!("dim[{}] = {d} is not positive", i + 1)));
        }
        if i < 4 {
            dims[i] = d as usize;
        } else {
            dims[3] *= d as usize;
        }
    }
    let dtype = NiftiDatatype::from_code(header.datatype)?;
    let n: usize = dims.iter().product();
    let need = n * dtype.size();
    if data.len() < need {
        return Err(Error::Nifti(format!("truncated data: {} bytes, need {need}", data.len())));
    }
    let r = Reader { bytes: data, le };
    let sz = dtype.size();
    let mut values: Vec<f64> = (0..n)
        .map(|i| match dtype {
            NiftiDatatype::Uint8 => r.u8(i) as f64,
            NiftiDatatype::Int16 => r.i16(i * sz) as f64,
            NiftiDatatype::Int32 => r.i32(i * sz) as f64,
            NiftiDatatype::Float32 => r.f32(i * sz) as f64,
            NiftiDatatype::Float64 => r.f64(i * sz),
        })
        .collect();
    let (slope, inter) = (header.scl_slope as f64, header.scl_inter as f64);
    if slope != 0.0 && slope.is_finite() && inter.is_finite() && (slope != 1.0 || inter != 0.0) {
        for v in &mut values {
            *v = *v * slope + inter;
        }
    }
    let voxel_size = [header.pixdim[1] as f64, header.pixdim[2] as f64, header.pixdim[3] as f64];
    let affine = header.affine();
    Ok(Volume4D { dims, voxel_size, affine, data: values, header: Some(header) })
}

/// Decode an in-memory `.nii` or `.nii.gz` image.
pub fn read_nifti_bytes(bytes: &[u8]) -> Result<Volume4D> {
    let bytes = maybe_gunzip(bytes.to_vec())?;
    let (header, le) = NiftiHeader::parse(&bytes)?;
    if &header.magic != b"n+1\0" {
        return Err(Error::Nifti("header-only (ni1) image needs its .img file; read it by path".into()));
    }
    let offset = (header.vox_offset as usize).max(SINGLE_FILE_OFFSET);
    if bytes.len() < offset {
        return Err(Error::Nifti(format!("truncated file: {} bytes, data starts at {offset}", bytes.len())));
    }
    decode(header, le, &bytes[offset..])
}

fn img_path_for(hdr: &Path) -> PathBuf {
    let s = hdr.to_string_lossy();
    if let Some(stem) = s.strip_suffix(".hdr.gz") {
        PathBuf::from(format!("{stem}.img.gz"))
    } else {
        hdr.with_extension("img")
    }
}

pub fn read_nifti(path: impl AsRef<Path>) -> Result<Volume4D> {
    let path = path.as_ref();
    let bytes = maybe_gunzip(fs::read(path)?)?;
    let (header, le) = NiftiHeader::parse(&bytes)?;
    if &header.magic == b"ni1\0" {
        let img = maybe_gunzip(fs::read(img_path_for(path))?)?;
        let offset = header.vox_offset as usize;
        if img.len() < offset {
            return Err(Error::Nifti("truncated .img file".into()));
        }
        return decode(header, le, &img[offset..]);
    }
    read_nifti_bytes(&bytes)
}

/// Encode a volume as a little-endian single-file NIfTI-1 image.
///
/// Geometry comes from the volume; the remaining header fields come from the
/// volume's source header when it has one. Affine and pixdim are stored as
/// f32 by the format.
pub fn write_nifti_bytes(vol: &Volume4D, datatype: NiftiDatatype) -> Result<Vec<u8>> {
    if !matches!(datatype, NiftiDatatype::Float32 | NiftiDatatype::Float64) {
        return Err(Error::Nifti("only float32 and float64 output is supported".into()));
    }
    let n: usize = vol.dims.iter().product();
    if vol.data.len() != n {
        return Err(Error::Input(format!("volume {:?} holds {} values", vol.dims, vol.data.len())));
    }
    let mut h = vol.header.clone().unwrap_or_default();
    h.magic = *b"n+1\0";
    h.dim = [0; 8];
    h.dim[0] = if vol.dims[3] > 1 { 4 } else { 3 };
    for i in 0..4 {
        h.dim[i + 1] = i16::try_from(vol.dims[i])
            .map_err(|_| Error::Nifti(format!("dimension {} too large for NIfTI-1", vol.dims[i])))?;
    }
    for d in h.dim.iter_mut().skip(5) {
        *d = 1;
    }
    h.datatype = datatype.code();
    h.bitpix = (datatype.size() * 8) as i16;
    if h.pixdim[0] == 0.0 {
        h.pixdim[0] = 1.0;
    }
    for i in 0..3 {
        h.pixdim[i + 1] = vol.voxel_size[i] as f32;
    }
    h.vox_offset = SINGLE_FILE_OFFSET as f32;
    h.scl_slope = 1.0;
    h.scl_inter = 0.0;
    h.cal_min = 0.0;
    h.cal_max = 0.0;
    if h.sform_code <= 0 {
        h.sform_code = 1;
    }
    for r in 0..3 {
        for c in 0..4 {
            h.srow[r][c] = vol.affine[r][c] as f32;
        }
    }

    let mut out = h.to_bytes();
    out.extend_from_slice(&[0u8; SINGLE_FILE_OFFSET - HEADER_SIZE]);
    out.reserve(n * datatype.size());
    match datatype {
        NiftiDatatype::Float32 => vol.data.iter().for_each(|v| out.extend_from_slice(&(*v as f32).to_le_bytes())),
        _ => vol.data.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
    }
    Ok(out)
}

pub fn write_nifti(vol: &Volume4D, path: impl AsRef<Path>, datatype: NiftiDatatype) -> Result<()> {
    let path = path.as_ref();
    let bytes = write_nifti_bytes(vol, datatype)?;
    let file = fs::File::create(path)?;
    if path.to_string_lossy().ends_with(".gz") {
        let mut enc = GzEncoder::new(file, Compression::default());
        enc.write_all(&bytes)?;
        enc.finish()?;
    } else {
        let mut file = file;
        file.write_all(&bytes)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Volume4D {
        let data = (0..24).map(|i| i as f64 * 0.37 - 2.0).collect();
        let mut v = Volume4D::new([2, 2, 2, 3], [1.5, 2.0, 2.5], data).unwrap();
        v.affine[0][3] = -90.5;
        v.affine[1][3] = 12.25;
        v
    }

    fn to_big_endian(le: &[u8], elem: usize) -> Vec<u8> {
        // swap every header field and the payload by hand
        let mut b = le.to_vec();
        let swap = |b: &mut Vec<u8>, off: usize, n: usize| b[off..off + n].reverse();
        swap(&mut b, 0, 4);
        for i in 0..8 {
            swap(&mut b, 40 + 2 * i, 2);
        }
        for off in [56, 60, 64] {
            swap(&mut b, off, 4);
        }
        for off in [68, 70, 72, 74, 120, 252, 254] {
            swap(&mut b, off, 2);
        }
        for i in 0..8 {
            swap(&mut b, 76 + 4 * i, 4);
        }
        for off in [108, 112, 116, 124, 128, 132, 136, 140, 144] {
            swap(&mut b, off, 4);
        }
        for i in 0..6 {
            swap(&mut b, 256 + 4 * i, 4);
        }
        for i in 0..12 {
            swap(&mut b, 280 + 4 * i, 4);
        }
        let mut off = SINGLE_FILE_OFFSET;
        while off < b.len() {
            swap(&mut b, off, elem);
            off += elem;
        }
        b
    }

    #[test]
    fn float64_round_trip_is_exact() {
        let v = sample();
        let back = read_nifti_bytes(&write_nifti_bytes(&v, NiftiDatatype::Float64).unwrap()).unwrap();
        assert_eq!(back.dims, v.dims);
        assert_eq!(back.data, v.data);
        assert_eq!(back.voxel_size, v.voxel_size);
        assert_eq!(back.affine, v.affine);
    }

    #[test]
    fn float32_round_trip_within_precision() {
        let v = sample();
        let back = read_nifti_bytes(&write_nifti_bytes(&v, NiftiDatatype::Float32).unwrap()).unwrap();
        for (a, b) in v.data.iter().zip(&back.data) {
            assert_eq!(*b, *a as f32 as f64);
            assert!((a - b).abs() <= (*a as f32).abs() as f64 * f32::EPSILON as f64);
        }
    }

    #[test]
    fn minimal_header_layout() {
        let bytes = write_nifti_bytes(&sample(), NiftiDatatype::Float32).unwrap();
        assert_eq!(bytes.len(), 352 + 24 * 4);
        assert_eq!(i32::from_le_bytes(bytes[0..4].try_into().unwrap()), 348);
        assert_eq!(&bytes[344..348], b"n+1\0");
        let dim: Vec<i16> = (0..5).map(|i| i16::from_le_bytes([bytes[40 + 2 * i], bytes[41 + 2 * i]])).collect();
        assert_eq!(dim, vec![4, 2, 2, 2, 3]);
        assert_eq!(i16::from_le_bytes([bytes[70], bytes[71]]), 16);
    }

    #[test]
    fn big_endian_is_transparent() {
        let v = sample();
        for (dt, size) in [(NiftiDatatype::Float64, 8), (NiftiDatatype::Float32, 4)] {
            let le = write_nifti_bytes(&v, dt).unwrap();
            let be = to_big_endian(&le, size);
            assert_ne!(le, be);
            assert_eq!(read_nifti_bytes(&be).unwrap().data, read_nifti_bytes(&le).unwrap().data);
        }
    }

    #[test]
    fn integer_types_and_scaling() {
        let mut h = NiftiHeader::default();
        h.dim = [3, 2, 1, 1, 1, 1, 1, 1];
        h.datatype = 4;
        h.bitpix = 16;
        h.scl_slope = 2.0;
        h.scl_inter = 1.0;
        let mut bytes = h.to_bytes();
        bytes.extend_from_slice(&[0; 4]);
        bytes.extend_from_slice(&3i16.to_le_bytes());
        bytes.extend_from_slice(&(-4i16).to_le_bytes());
        let v = read_nifti_bytes(&bytes).unwrap();
        assert_eq!(v.data, vec![7.0, -7.0]);

        h.datatype = 2;
        h.bitpix = 8;
        h.scl_slope = 0.0; // zero slope means "no scaling"
        let mut bytes = h.to_bytes();
        bytes.extend_from_slice(&[0, 0, 0, 0, 200, 9]);
        assert_eq!(read_nifti_bytes(&bytes).unwrap().data, vec![200.0, 9.0]);

        h.datatype = 8;
        h.bitpix = 32;
        let mut bytes = h.to_bytes();
        bytes.extend_from_slice(&[0; 4]);
        bytes.extend_from_slice(&(-70000i32).to_le_bytes());
        bytes.extend_from_slice(&5i32.to_le_bytes());
        assert_eq!(read_nifti_bytes(&bytes).unwrap().data, vec![-70000.0, 5.0]);
    }

    #[test]
    fn negative_cases() {
        let mut bytes = write_nifti_bytes(&sample(), NiftiDatatype::Float32).unwrap();
        bytes[344..348].copy_from_slice(b"abc\0");
        let err = read_nifti_bytes(&bytes).unwrap_err().to_string();
        assert!(err.contains("abc") && err.contains("61, 62, 63"), "{err}");

        let bytes = write_nifti_bytes(&sample(), NiftiDatatype::Float32).unwrap();
        assert!(read_nifti_bytes(&bytes[..400]).unwrap_err().to_string().contains("truncated"));
        assert!(read_nifti_bytes(&bytes[..100]).is_err());

        let mut bad_type = bytes.clone();
        bad_type[70..72].copy_from_slice(&128i16.to_le_bytes());
        assert!(read_nifti_bytes(&bad_type).unwrap_err().to_string().contains("datatype"));
    }

    #[test]
    fn qform_affine() {
        let mut h = NiftiHeader::default();
        h.qform_code = 1;
        h.pixdim = [-1.0, 2.0, 3.0, 4.0, 1.0, 0.0, 0.0, 0.0];
        h.qoffset = [10.0, 20.0, 30.0];
        // 180° about z: (b, c, d) = (0, 0, 1)
        h.quatern = [0.0, 0.0, 1.0];
        let a = h.affine();
        assert_eq!(a[0][0], -2.0);
        assert_eq!(a[1][1], -3.0);
        assert_eq!(a[2][2], -4.0);
        assert_eq!([a[0][3], a[1][3], a[2][3]], [10.0, 20.0, 30.0]);
    }

    #[test]
    fn gzip_and_header_pair_files() {
        let dir = tempfile::tempdir().unwrap();
        let v = sample();
        let gz = dir.path().join("v.nii.gz");
        write_nifti(&v, &gz, NiftiDatatype::Float64).unwrap();
        let raw = fs::read(&gz).unwrap();
        assert_eq!(&raw[..2], &[0x1f, 0x8b]);
        assert_eq!(read_nifti(&gz).unwrap().data, v.data);

        // hand-made ni1 pair
        let mut h = NiftiHeader::parse(&write_nifti_bytes(&v, NiftiDatatype::Float64).unwrap()).unwrap().0;
        h.magic = *b"ni1\0";
        h.vox_offset = 0.0;
        fs::write(dir.path().join("p.hdr"), h.to_bytes()).unwrap();
        let payload: Vec<u8> = v.data.iter().flat_map(|x| x.to_le_bytes()).collect();
        fs::write(dir.path().join("p.img"), payload).unwrap();
        assert_eq!(read_nifti(dir.path().join("p.hdr")).unwrap().data, v.data);
    }

    #[test]
    fn source_header_is_reused() {
        let mut v = sample();
        let mut h = NiftiHeader::default();
        h.set_description("rtop map");
        h.intent_code = 1001;
        v.header = Some(h);
        let back = read_nifti_bytes(&write_nifti_bytes(&v, NiftiDatatype::Float32).unwrap()).unwrap();
        let bh = back.header.unwrap();
        assert_eq!(bh.description(), "rtop map");
        assert_eq!(bh.intent_code, 1001);
    }
}
