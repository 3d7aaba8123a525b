//! The `.satc` binary tensor container and raster file helpers.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic   4 bytes  "SATC"
//! version 1 byte   currently 1
//! dtype   1 byte   0 = f32, 1 = bool (one byte per element, 0 or 1)
//! ndim    1 byte   1..=4
//! dims    ndim x u32
//! payload product(dims) elements, row-major, innermost dimension fastest
//! ```
//!
//! A `[2, 2]` f32 tensor therefore has a 15-byte header followed by 16
//! payload bytes. Readers reject wrong magic, unknown versions or dtypes,
//! out-of-range `ndim`, truncated payloads, and trailing garbage, so a file
//! either parses to exactly the bytes that were written or fails loudly.
//!
//! Writers stage into a sibling `*.tmp` file and rename over the final path,
//! so a crash never leaves a partial file at the destination.
//!
//! Rasters use two conventions on top of the container:
//! * a [`Grid2D`] is stored as a `[H, W]` f32 tensor plus a boolean
//!   companion at [`mask_path`] (same dims) carrying validity;
//! * a [`BandStack`] is a `[4, H, W]` f32 tensor plus a `[4, H, W]` mask.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{CoreError, Result};
use crate::grid::{BandStack, Grid2D};

pub const MAGIC: [u8; 4] = *b"SATC";
pub const VERSION: u8 = 1;
pub const MAX_NDIM: usize = 4;

/// Element type of a stored tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32 = 0,
    Bool = 1,
}

impl Dtype {
    fn from_code(code: u8) -> Option<Dtype> {
        match code {
            0 => Some(Dtype::F32),
            1 => Some(Dtype::Bool),
            _ => None,
        }
    }
}

/// Parsed header of a `.satc` file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorHeader {
    pub dtype: Dtype,
    pub dims: Vec<u32>,
}

impl TensorHeader {
    /// Number of elements (product of dims).
    pub fn len(&self) -> usize {
        self.dims.iter().map(|&d| d as usize).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Payload of a `.satc` file.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    Bool(Vec<bool>),
}

fn check_dims(dims: &[u32]) -> Result<usize> {
    if dims.is_empty() || dims.len() > MAX_NDIM {
        return Err(CoreError::InvalidArgument(format!(
            "tensor rank {} outside 1..={}",
            dims.len(),
            MAX_NDIM
        )));
    }
    let mut n: u64 = 1;
    for &d in dims {
        n = n
            .checked_mul(d as u64)
            .ok_or_else(|| CoreError::InvalidArgument("tensor element count overflows".into()))?;
    }
    usize::try_from(n).map_err(|_| CoreError::InvalidArgument("tensor too large for this platform".into()))
}

fn header_bytes(dtype: Dtype, dims: &[u32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(7 + 4 * dims.len());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(dtype as u8);
    out.push(dims.len() as u8);
    for &d in dims {
        out.extend_from_slice(&d.to_le_bytes());
    }
    out
}

/// Write bytes to `path` via a temporary sibling and atomic rename.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(|e| CoreError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| CoreError::io(&tmp, e))?;
    f.sync_all().map_err(|e| CoreError::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| CoreError::io(path, e))?;
    Ok(())
}

/// Write an f32 tensor.
pub fn write_tensor_f32(path: &Path, dims: &[u32], values: &[f32]) -> Result<()> {
    let n = check_dims(dims)?;
    if values.len() != n {
        return Err(CoreError::ShapeMismatch(format!(
            "dims {:?} imply {} elements, got {}",
            dims,
            n,
            values.len()
        )));
    }
    let mut bytes = header_bytes(Dtype::F32, dims);
    bytes.reserve(4 * n);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    write_atomic(path, &bytes)
}

/// Write a boolean tensor (one byte per element).
pub fn write_tensor_bool(path: &Path, dims: &[u32], values: &[bool]) -> Result<()> {
    let n = check_dims(dims)?;
    if values.len() != n {
        return Err(CoreError::ShapeMismatch(format!(
            "dims {:?} imply {} elements, got {}",
            dims,
            n,
            values.len()
        )));
    }
    let mut bytes = header_bytes(Dtype::Bool, dims);
    bytes.reserve(n);
    bytes.extend(values.iter().map(|&b| b as u8));
    write_atomic(path, &bytes)
}

/// Read any `.satc` tensor, validating the container strictly.
pub fn read_tensor(path: &Path) -> Result<(TensorHeader, TensorData)> {
    let bytes = fs::read(path).map_err(|e| CoreError::io(path, e))?;
    let bad = |reason: &str| CoreError::BadTensor { path: path.to_path_buf(), reason: reason.into() };
    if bytes.len() < 7 {
        return Err(bad("file shorter than the fixed header"));
    }
    if bytes[0..4] != MAGIC {
        return Err(bad("bad magic"));
    }
    if bytes[4] != VERSION {
        return Err(CoreError::BadTensor {
            path: path.to_path_buf(),
            reason: format!("unsupported version {}", bytes[4]),
        });
    }
    let dtype = Dtype::from_code(bytes[5]).ok_or_else(|| CoreError::BadTensor {
        path: path.to_path_buf(),
        reason: format!("unknown dtype code {}", bytes[5]),
    })?;
    let ndim = bytes[6] as usize;
    if ndim == 0 || ndim > MAX_NDIM {
        return Err(CoreError::BadTensor {
            path: path.to_path_buf(),
            reason: format!("rank {} outside 1..={}", ndim, MAX_NDIM),
        });
    }
    let header_len = 7 + 4 * ndim;
    if bytes.len() < header_len {
        return Err(bad("truncated dimension list"));
    }
    let mut dims = Vec::with_capacity(ndim);
    for i in 0..ndim {
        let off = 7 + 4 * i;
        dims.push(u32::from_le_bytes([bytes[off], bytes[off + 1], bytes[off + 2], bytes[off + 3]]));
    }
    let n = check_dims(&dims)?;
    let elem_size = match dtype {
        Dtype::F32 => 4,
        Dtype::Bool => 1,
    };
    let expected = header_len + n * elem_size;
    if bytes.len() < expected {
        return Err(bad("truncated payload"));
    }
    if bytes.len() > expected {
        return Err(bad("trailing bytes after payload"));
    }
    let payload = &bytes[header_len..];
    let data = match dtype {
        Dtype::F32 => {
            let mut v = Vec::with_capacity(n);
            for i in 0..n {
                let off = 4 * i;
                v.push(f32::from_le_bytes([
                    payload[off],
                    payload[off + 1],
                    payload[off + 2],
                    payload[off + 3],
                ]));
            }
            TensorData::F32(v)
        }
        Dtype::Bool => {
            let mut v = Vec::with_capacity(n);
            for (i, &b) in payload.iter().enumerate() {
                match b {
                    0 => v.push(false),
                    1 => v.push(true),
                    other => {
                        return Err(CoreError::BadTensor {
                            path: path.to_path_buf(),
                            reason: format!("bool element {} has byte value {}", i, other),
                        })
                    }
                }
            }
            TensorData::Bool(v)
        }
    };
    Ok((TensorHeader { dtype, dims }, data))
}

/// Read a tensor that must be f32.
pub fn read_tensor_f32(path: &Path) -> Result<(Vec<u32>, Vec<f32>)> {
    match read_tensor(path)? {
        (h, TensorData::F32(v)) => Ok((h.dims, v)),
        (h, TensorData::Bool(_)) => Err(CoreError::BadTensor {
            path: path.to_path_buf(),
            reason: format!("expected f32 tensor, found bool with dims {:?}", h.dims),
        }),
    }
}

/// Read a tensor that must be boolean.
pub fn read_tensor_bool(path: &Path) -> Result<(Vec<u32>, Vec<bool>)> {
    match read_tensor(path)? {
        (h, TensorData::Bool(v)) => Ok((h.dims, v)),
        (h, TensorData::F32(_)) => Err(CoreError::BadTensor {
            path: path.to_path_buf(),
            reason: format!("expected bool tensor, found f32 with dims {:?}", h.dims),
        }),
    }
}

/// Companion mask path for a raster file: `scene.satc` -> `scene.mask.satc`;
/// any other name gets `.mask.satc` appended.
pub fn mask_path(path: &Path) -> PathBuf {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
    let masked = match name.strip_suffix(".satc") {
        Some(stem) => format!("{}.mask.satc", stem),
        None => format!("{}.mask.satc", name),
    };
    path.with_file_name(masked)
}

/// Write a grid as a `[H, W]` f32 tensor plus its boolean mask companion.
pub fn write_grid(path: &Path, g: &Grid2D) -> Result<()> {
    let dims = [g.height() as u32, g.width() as u32];
    write_tensor_f32(path, &dims, g.values())?;
    write_tensor_bool(&mask_path(path), &dims, g.valid())
}

/// Read a grid written by [`write_grid`].
pub fn read_grid(path: &Path) -> Result<Grid2D> {
    let (dims, values) = read_tensor_f32(path)?;
    if dims.len() != 2 {
        return Err(CoreError::BadTensor {
            path: path.to_path_buf(),
            reason: format!("grid must be rank 2, found dims {:?}", dims),
        });
    }
    let mp = mask_path(path);
    let (mdims, valid) = read_tensor_bool(&mp)?;
    if mdims != dims {
        return Err(CoreError::BadTensor {
            path: mp,
            reason: format!("mask dims {:?} do not match grid dims {:?}", mdims, dims),
        });
    }
    Grid2D::new(dims[0] as usize, dims[1] as usize, values, valid)
}

/// Write a band stack as a `[4, H, W]` f32 tensor plus mask companion.
pub fn write_bands(path: &Path, s: &BandStack) -> Result<()> {
    let (h, w) = s.shape();
    let dims = [4u32, h as u32, w as u32];
    let mut values = Vec::with_capacity(4 * h * w);
    let mut valid = Vec::with_capacity(4 * h * w);
    for g in s.bands() {
        values.extend_from_slice(g.values());
        valid.extend_from_slice(g.valid());
    }
    write_tensor_f32(path, &dims, &values)?;
    write_tensor_bool(&mask_path(path), &dims, &valid)
}

/// Read a band stack written by [`write_bands`]. Validity is re-joined
/// across bands by the [`BandStack`] constructor.
pub fn read_bands(path: &Path) -> Result<BandStack> {
    let (dims, values) = read_tensor_f32(path)?;
    if dims.len() != 3 || dims[0] != 4 {
        return Err(CoreError::BadTensor {
            path: path.to_path_buf(),
            reason: format!("band stack must be [4, H, W], found dims {:?}", dims),
        });
    }
    let mp = mask_path(path);
    let (mdims, valid) = read_tensor_bool(&mp)?;
    if mdims != dims {
        return Err(CoreError::BadTensor {
            path: mp,
            reason: format!("mask dims {:?} do not match band dims {:?}", mdims, dims),
        });
    }
    let (h, w) = (dims[1] as usize, dims[2] as usize);
    let plane = h * w;
    let mut bands = Vec::with_capacity(4);
    for b in 0..4 {
        bands.push(Grid2D::new(
            h,
            w,
            values[b * plane..(b + 1) * plane].to_vec(),
            valid[b * plane..(b + 1) * plane].to_vec(),
        )?);
    }
    let bands: [Grid2D; 4] = match bands.try_into() {
        Ok(a) => a,
        Err(_) => unreachable!("exactly four bands collected"),
    };
    BandStack::new(bands, BandStack::DEFAULT_RESOLUTION_M)
}
