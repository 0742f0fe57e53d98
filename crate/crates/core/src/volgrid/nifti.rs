//! NIfTI-1 single-file (`.nii`, `.nii.gz`) and pair (`.hdr`/`.img`) reading,
//! single-file writing.
//!
//! Affine precedence on read: sform when `sform_code > 0` and its 3x3 block is
//! non-singular, then qform when `qform_code > 0`, then a diagonal matrix from
//! `pixdim`. Both byte orders are accepted on read; files are written
//! little-endian with `vox_offset = 352`.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use nalgebra::{Matrix3, Matrix4};

use super::grid::{Grid, Image, LabelMap, Volume};
use crate::{Error, Result};

const HEADER_SIZE: usize = 348;
const DATA_OFFSET: usize = 352;

const DT_UINT8: i16 = 2;
const DT_INT16: i16 = 4;
const DT_INT32: i16 = 8;
const DT_FLOAT32: i16 = 16;
const DT_FLOAT64: i16 = 64;
const DT_INT8: i16 = 256;
const DT_UINT16: i16 = 512;
const DT_UINT32: i16 = 768;
const DT_INT64: i16 = 1024;
const DT_UINT64: i16 = 1280;

/// How voxel values are interpreted when reading.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpretation {
    Intensity,
    Labels,
}

/// Storage type used when writing a [`Volume`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FloatPrecision {
    #[default]
    Single,
    Double,
}

/// Header fields relevant to callers that only need geometry.
#[derive(Debug, Clone)]
pub struct HeaderInfo {
    pub grid: Grid,
    pub datatype: i16,
    pub scl_slope: f64,
    pub scl_inter: f64,
    pub big_endian: bool,
}

struct Fields<'a> {
    bytes: &'a [u8],
    big_endian: bool,
}

impl Fields<'_> {
    fn i16(&self, off: usize) -> i16 {
        let b = [self.bytes[off], self.bytes[off + 1]];
        if self.big_endian {
            i16::from_be_bytes(b)
        } else {
            i16::from_le_bytes(b)
        }
    }

    fn f32(&self, off: usize) -> f64 {
        let b: [u8; 4] = self.bytes[off..off + 4].try_into().unwrap();
        let v = if self.big_endian {
            f32::from_be_bytes(b)
        } else {
            f32::from_le_bytes(b)
        };
        v as f64
    }
}

fn element_size(datatype: i16) -> Result<usize> {
    Ok(match datatype {
        DT_UINT8 | DT_INT8 => 1,
        DT_INT16 | DT_UINT16 => 2,
        DT_INT32 | DT_UINT32 | DT_FLOAT32 => 4,
        DT_FLOAT64 | DT_INT64 | DT_UINT64 => 8,
        other => return Err(Error::UnsupportedType(other)),
    })
}

fn is_integer_type(datatype: i16) -> bool {
    !matches!(datatype, DT_FLOAT32 | DT_FLOAT64)
}

fn parse_header(bytes: &[u8]) -> Result<(HeaderInfo, usize, [usize; 3])> {
    if bytes.len() < HEADER_SIZE {
        return Err(Error::format(
            "sizeof_hdr",
            format!("file holds {} bytes, a NIfTI-1 header needs 348", bytes.len()),
        ));
    }
    let le = i32::from_le_bytes(bytes[0..4].try_into().unwrap());
    let be = i32::from_be_bytes(bytes[0..4].try_into().unwrap());
    let big_endian = match (le, be) {
        (348, _) => false,
        (_, 348) => true,
        _ => {
            return Err(Error::format(
                "sizeof_hdr",
                format!("expected 348, found {le}"),
            ))
        }
    };
    let magic = &bytes[344..348];
    if magic != b"n+1\0" && magic != b"ni1\0" {
        return Err(Error::format(
            "magic",
            format!("expected \"n+1\" or \"ni1\", found {:?}", String::from_utf8_lossy(magic)),
        ));
    }
    let f = Fields { bytes, big_endian };

    let ndim = f.i16(40);
    if !(1..=7).contains(&ndim) {
        return Err(Error::format("dim", format!("dim[0] = {ndim} is outside 1..=7")));
    }
    let mut dim = [1usize; 7];
    for (a, d) in dim.iter_mut().enumerate().take(ndim as usize) {
        let v = f.i16(42 + 2 * a);
        if v < 1 {
            return Err(Error::format("dim", format!("dim[{}] = {v} must be positive", a + 1)));
        }
        *d = v as usize;
    }
    let non_singleton = dim.iter().filter(|&&d| d > 1).count();
    if dim[3..].iter().any(|&d| d > 1) {
        return Err(Error::Dimensionality(non_singleton));
    }
    let dims = [dim[0], dim[1], dim[2]];

    let datatype = f.i16(70);
    element_size(datatype)?;

    let mut pixdim = [0.0f64; 8];
    for (a, p) in pixdim.iter_mut().enumerate() {
        *p = f.f32(76 + 4 * a);
    }
    let vox_offset = f.f32(108);
    if !vox_offset.is_finite() || vox_offset < 0.0 {
        return Err(Error::format("vox_offset", format!("invalid value {vox_offset}")));
    }
    let mut scl_slope = f.f32(112);
    let mut scl_inter = f.f32(116);
    if scl_slope == 0.0 || !scl_slope.is_finite() {
        scl_slope = 1.0;
        scl_inter = 0.0;
    }
    if !scl_inter.is_finite() {
        scl_inter = 0.0;
    }

    let affine = select_affine(&f, &pixdim)?;
    let grid = Grid::new(dims, affine).map_err(|e| Error::format("srow/qform", e.to_string()))?;
    let info = HeaderInfo {
        grid,
        datatype,
        scl_slope,
        scl_inter,
        big_endian,
    };
    Ok((info, vox_offset as usize, dims))
}

fn select_affine(f: &Fields<'_>, pixdim: &[f64; 8]) -> Result<Matrix4<f64>> {
    let sform_code = f.i16(254);
    if sform_code > 0 {
        let mut m = Matrix4::identity();
        for r in 0..3 {
            for c in 0..4 {
                m[(r, c)] = f.f32(280 + 16 * r + 4 * c);
            }
        }
        let det = m.fixed_view::<3, 3>(0, 0).determinant();
        if det != 0.0 && det.is_finite() && m.iter().all(|v| v.is_finite()) {
            return Ok(m);
        }
    }
    let qform_code = f.i16(252);
    if qform_code > 0 {
        let m = quatern_to_affine(
            [f.f32(256), f.f32(260), f.f32(264)],
            [f.f32(268), f.f32(272), f.f32(276)],
            pixdim,
        );
        if m.iter().all(|v| v.is_finite()) {
            return Ok(m);
        }
    }
    let mut m = Matrix4::identity();
    for a in 0..3 {
        let s = pixdim[a + 1].abs();
        m[(a, a)] = if s > 0.0 && s.is_finite() { s } else { 1.0 };
    }
    Ok(m)
}

fn quatern_to_affine(q: [f64; 3], offset: [f64; 3], pixdim: &[f64; 8]) -> Matrix4<f64> {
    let [mut b, mut c, mut d] = q;
    let mut a = 1.0 - (b * b + c * c + d * d);
    if a < 1e-7 {
        let n = 1.0 / (b * b + c * c + d * d).sqrt();
        b *= n;
        c *= n;
        d *= n;
        a = 0.0;
    } else {
        a = a.sqrt();
    }
    let pd = |v: f64| if v > 0.0 { v } else { 1.0 };
    let (dx, dy) = (pd(pixdim[1]), pd(pixdim[2]));
    let qfac = if pixdim[0] < 0.0 { -1.0 } else { 1.0 };
    let dz = pd(pixdim[3]) * qfac;

    let r = Matrix3::new(
        a * a + b * b - c * c - d * d,
        2.0 * (b * c - a * d),
        2.0 * (b * d + a * c),
        2.0 * (b * c + a * d),
        a * a + c * c - b * b - d * d,
        2.0 * (c * d - a * b),
        2.0 * (b * d - a * c),
        2.0 * (c * d + a * b),
        a * a + d * d - c * c - b * b,
    );
    let mut m = Matrix4::identity();
    for row in 0..3 {
        m[(row, 0)] = r[(row, 0)] * dx;
        m[(row, 1)] = r[(row, 1)] * dy;
        m[(row, 2)] = r[(row, 2)] * dz;
        m[(row, 3)] = offset[row];
    }
    m
}

/// Quaternion parameters `(b, c, d)` and `qfac` for the rotation part of an
/// affine whose columns have been normalized.
fn affine_to_quatern(affine: &Matrix4<f64>) -> ([f64; 3], f64) {
    let mut q: Matrix3<f64> = affine.fixed_view::<3, 3>(0, 0).into_owned();
    for c in 0..3 {
        let n = q.column(c).norm();
        if n > 0.0 {
            q.column_mut(c).scale_mut(1.0 / n);
        }
    }
    let qfac = if q.determinant() > 0.0 {
        1.0
    } else {
        q.column_mut(2).scale_mut(-1.0);
        -1.0
    };
    let r = |i: usize, j: usize| q[(i - 1, j - 1)];
    let (mut a, mut b, mut c, mut d);
    a = r(1, 1) + r(2, 2) + r(3, 3) + 1.0;
    if a > 0.5 {
        a = 0.5 * a.sqrt();
        b = 0.25 * (r(3, 2) - r(2, 3)) / a;
        c = 0.25 * (r(1, 3) - r(3, 1)) / a;
        d = 0.25 * (r(2, 1) - r(1, 2)) / a;
    } else {
        let xd = 1.0 + r(1, 1) - (r(2, 2) + r(3, 3));
        let yd = 1.0 + r(2, 2) - (r(1, 1) + r(3, 3));
        let zd = 1.0 + r(3, 3) - (r(1, 1) + r(2, 2));
        if xd > 1.0 {
            b = 0.5 * xd.sqrt();
            c = 0.25 * (r(1, 2) + r(2, 1)) / b;
            d = 0.25 * (r(1, 3) + r(3, 1)) / b;
            a = 0.25 * (r(3, 2) - r(2, 3)) / b;
        } else if yd > 1.0 {
            c = 0.5 * yd.sqrt();
            b = 0.25 * (r(1, 2) + r(2, 1)) / c;
            d = 0.25 * (r(2, 3) + r(3, 2)) / c;
            a = 0.25 * (r(1, 3) - r(3, 1)) / c;
        } else {
            d = 0.5 * zd.sqrt();
            b = 0.25 * (r(1, 3) + r(3, 1)) / d;
            c = 0.25 * (r(2, 3) + r(3, 2)) / d;
            a = 0.25 * (r(2, 1) - r(1, 2)) / d;
        }
        if a < 0.0 {
            b = -b;
            c = -c;
            d = -d;
        }
    }
    ([b, c, d], qfac)
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
        let mut out = Vec::with_capacity(raw.len() * 4);
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Reads only the header (and derives the grid) without touching voxel data.
pub fn read_header(path: impl AsRef<Path>) -> Result<HeaderInfo> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    parse_header(&bytes).map(|(info, _, _)| info)
}

fn decode_samples(bytes: &[u8], datatype: i16, big_endian: bool, n: usize) -> Result<Vec<f64>> {
    let size = element_size(datatype)?;
    if bytes.len() < n * size {
        return Err(Error::format(
            "vox_offset",
            format!("voxel data truncated: need {} bytes, found {}", n * size, bytes.len()),
        ));
    }
    macro_rules! conv {
        ($t:ty) => {
            bytes[..n * size]
                .chunks_exact(size)
                .map(|c| {
                    let b = c.try_into().unwrap();
                    (if big_endian {
                        <$t>::from_be_bytes(b)
                    } else {
                        <$t>::from_le_bytes(b)
                    }) as f64
                })
                .collect()
        };
    }
    Ok(match datatype {
        DT_UINT8 => bytes[..n].iter().map(|&v| v as f64).collect(),
        DT_INT8 => bytes[..n].iter().map(|&v| v as i8 as f64).collect(),
        DT_INT16 => conv!(i16),
        DT_UINT16 => conv!(u16),
        DT_INT32 => conv!(i32),
        DT_UINT32 => conv!(u32),
        DT_INT64 => conv!(i64),
        DT_UINT64 => conv!(u64),
        DT_FLOAT32 => conv!(f32),
        DT_FLOAT64 => conv!(f64),
        other => return Err(Error::UnsupportedType(other)),
    })
}

/// Decodes an in-memory NIfTI-1 single-file image (already decompressed).
pub fn decode_nifti(bytes: &[u8], interpretation: Interpretation) -> Result<Image> {
    let (info, offset, _) = parse_header(bytes)?;
    if &bytes[344..348] != b"n+1\0" {
        return Err(Error::format(
            "magic",
            "\"ni1\" headers keep voxel data in a separate .img file",
        ));
    }
    if offset < HEADER_SIZE || offset > bytes.len() {
        return Err(Error::format("vox_offset", format!("offset {offset} is out of range")));
    }
    decode_payload(info, &bytes[offset..], interpretation)
}

fn decode_payload(info: HeaderInfo, data: &[u8], interpretation: Interpretation) -> Result<Image> {
    let n = info.grid.len();
    let mut values = decode_samples(data, info.datatype, info.big_endian, n)?;
    if info.scl_slope != 1.0 || info.scl_inter != 0.0 {
        for v in &mut values {
            *v = *v * info.scl_slope + info.scl_inter;
        }
    }
    match interpretation {
        Interpretation::Intensity => {
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::format("datatype", "voxel data contains NaN or Inf"));
            }
            Ok(Image::Volume(Volume::from_parts_unchecked(info.grid, values)))
        }
        Interpretation::Labels => {
            let integral = is_integer_type(info.datatype) && info.scl_slope == 1.0 && info.scl_inter == 0.0;
            let mut labels = Vec::with_capacity(n);
            for v in values {
                if !(v >= 0.0 && v <= u32::MAX as f64) || (!integral && v.fract() != 0.0) {
                    return Err(Error::format(
                        "datatype",
                        format!("value {v} is not a non-negative integer label"),
                    ));
                }
                labels.push(v as u32);
            }
            Ok(Image::Labels(LabelMap::from_data(info.grid, labels)?))
        }
    }
}

/// Reads a NIfTI-1 image; `.nii.gz` is detected from the gzip magic bytes.
pub fn read_nifti(path: impl AsRef<Path>, interpretation: Interpretation) -> Result<Image> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let (info, offset, _) = parse_header(&bytes)?;
    if &bytes[344..348] == b"ni1\0" {
        let img = path.with_extension("img");
        let payload = read_bytes(&img)?;
        let payload = payload.get(offset..).unwrap_or(&[]);
        return decode_payload(info, payload, interpretation);
    }
    decode_nifti(&bytes, interpretation)
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume> {
    match read_nifti(path, Interpretation::Intensity)? {
        Image::Volume(v) => Ok(v),
        Image::Labels(_) => unreachable!(),
    }
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelMap> {
    match read_nifti(path, Interpretation::Labels)? {
        Image::Labels(l) => Ok(l),
        Image::Volume(_) => unreachable!(),
    }
}

fn encode_header(grid: &Grid, datatype: i16, bitpix: i16) -> Vec<u8> {
    let mut h = vec![0u8; DATA_OFFSET];
    let put_i16 = |h: &mut [u8], off: usize, v: i16| h[off..off + 2].copy_from_slice(&v.to_le_bytes());
    let put_i32 = |h: &mut [u8], off: usize, v: i32| h[off..off + 4].copy_from_slice(&v.to_le_bytes());
    let put_f32 =
        |h: &mut [u8], off: usize, v: f64| h[off..off + 4].copy_from_slice(&(v as f32).to_le_bytes());

    put_i32(&mut h, 0, HEADER_SIZE as i32);
    h[38] = b'r';
    let dims = grid.dims();
    put_i16(&mut h, 40, 3);
    for a in 0..3 {
        put_i16(&mut h, 42 + 2 * a, dims[a] as i16);
    }
    for a in 3..7 {
        put_i16(&mut h, 42 + 2 * a, 1);
    }
    put_i16(&mut h, 70, datatype);
    put_i16(&mut h, 72, bitpix);

    let affine = grid.affine();
    let (quat, qfac) = affine_to_quatern(affine);
    let spacing = grid.spacing();
    put_f32(&mut h, 76, qfac);
    for a in 0..3 {
        put_f32(&mut h, 80 + 4 * a, spacing[a]);
    }
    for a in 3..7 {
        put_f32(&mut h, 80 + 4 * a, 1.0);
    }
    put_f32(&mut h, 108, DATA_OFFSET as f64);
    put_f32(&mut h, 112, 1.0);
    put_f32(&mut h, 116, 0.0);
    h[123] = 2; // NIFTI_UNITS_MM
    let descrip = b"ulfsynth";
    h[148..148 + descrip.len()].copy_from_slice(descrip);
    put_i16(&mut h, 252, 1); // NIFTI_XFORM_SCANNER_ANAT
    put_i16(&mut h, 254, 1);
    for (i, q) in quat.iter().enumerate() {
        put_f32(&mut h, 256 + 4 * i, *q);
    }
    for r in 0..3 {
        put_f32(&mut h, 268 + 4 * r, affine[(r, 3)]);
        for c in 0..4 {
            put_f32(&mut h, 280 + 16 * r + 4 * c, affine[(r, c)]);
        }
    }
    h[344..348].copy_from_slice(b"n+1\0");
    h
}

fn dims_fit_header(grid: &Grid) -> Result<()> {
    if grid.dims().iter().any(|&d| d > i16::MAX as usize) {
        return Err(Error::contract("NIfTI-1 dimensions are limited to 32767 voxels per axis"));
    }
    Ok(())
}

pub fn encode_volume(vol: &Volume, precision: FloatPrecision) -> Result<Vec<u8>> {
    dims_fit_header(vol.grid())?;
    let (dt, bitpix) = match precision {
        FloatPrecision::Single => (DT_FLOAT32, 32),
        FloatPrecision::Double => (DT_FLOAT64, 64),
    };
    let mut out = encode_header(vol.grid(), dt, bitpix);
    match precision {
        FloatPrecision::Single => {
            for &v in vol.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        FloatPrecision::Double => {
            for &v in vol.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(out)
}

/// Encodes labels with the narrowest of uint8/uint16/int32 that holds them.
pub fn encode_labels(labels: &LabelMap) -> Result<Vec<u8>> {
    dims_fit_header(labels.grid())?;
    let max = labels.data().iter().copied().max().unwrap_or(0);
    let mut out;
    if max <= u8::MAX as u32 {
        out = encode_header(labels.grid(), DT_UINT8, 8);
        out.extend(labels.data().iter().map(|&v| v as u8));
    } else if max <= u16::MAX as u32 {
        out = encode_header(labels.grid(), DT_UINT16, 16);
        for &v in labels.data() {
            out.extend_from_slice(&(v as u16).to_le_bytes());
        }
    } else if max <= i32::MAX as u32 {
        out = encode_header(labels.grid(), DT_INT32, 32);
        for &v in labels.data() {
            out.extend_from_slice(&(v as i32).to_le_bytes());
        }
    } else {
        return Err(Error::contract(format!("label {max} exceeds the int32 range")));
    }
    Ok(out)
}

fn write_bytes(bytes: &[u8], path: &Path) -> Result<()> {
    let gz = path
        .file_name()
        .and_then(|n| n.to_str())
        .is_some_and(|n| n.ends_with(".gz"));
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    if gz {
        let mut enc = GzEncoder::new(w, Compression::new(6));
        enc.write_all(bytes).map_err(|e| Error::io(path, e))?;
        w = enc.finish().map_err(|e| Error::io(path, e))?;
    } else {
        w.write_all(bytes).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_volume(vol: &Volume, path: impl AsRef<Path>, precision: FloatPrecision) -> Result<()> {
    write_bytes(&encode_volume(vol, precision)?, path.as_ref())
}

pub fn write_labels(labels: &LabelMap, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(&encode_labels(labels)?, path.as_ref())
}

/// Writes either kind of image; volumes are stored as float32.
pub fn write_nifti(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    match image {
        Image::Volume(v) => write_volume(v, path, FloatPrecision::Single),
        Image::Labels(l) => write_labels(l, path),
    }
}
