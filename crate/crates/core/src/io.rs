//! Binary artifact formats, PGM images and atomic file writes.
//!
//! All multi-byte values are little-endian. Every binary artifact may end
//! with a 36-byte trailer, `"AHCH"` followed by the SHA-256 of the
//! normalized config that produced it.
//!
//! ```text
//! field       "AHFB" u16 version u16 ndim u64 dims[ndim] f64 dx (f64 re, f64 im)*
//! voxels      "AHVX" u16 version u16 ndim u64 dims[ndim] f64 dx u8* f64 footer[6]
//! checkpoint  "AHCK" u16 version u16 ndim u64 dims[ndim] u64 iteration f64 loss
//!             u8 has_binarization f64 binarization f64 gamma*
//! ```
//!
//! The voxel footer holds `(c, rho, alpha)` of material 0, then material 1.

use std::fs;
use std::path::Path;

use ndarray::{Array2, Array3};

use crate::error::{HoloError, Result};
use crate::grid::{pad3, ComplexField, Grid, Material, MaterialBlock, PlaneField, C64};
use crate::material::MaterialPair;
use crate::optim::Checkpoint;

pub const FIELD_MAGIC: &[u8; 4] = b"AHFB";
pub const VOXEL_MAGIC: &[u8; 4] = b"AHVX";
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"AHCK";
pub const HASH_MAGIC: &[u8; 4] = b"AHCH";
pub const FORMAT_VERSION: u16 = 1;

/// SHA-256 of a normalized config dump.
pub type ConfigHash = [u8; 32];

pub fn hash_hex(h: &ConfigHash) -> String {
    h.iter().map(|b| format!("{b:02x}")).collect()
}

const TRAILER_LEN: usize = 36;

fn format_err(msg: impl Into<String>) -> HoloError {
    HoloError::Format(msg.into())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(format_err(format!(
                "truncated header: needed {n} more bytes at offset {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        if self.remaining() < 4 {
            return Err(format_err(format!(
                "file too short for magic {:?}",
                String::from_utf8_lossy(expected)
            )));
        }
        let found = self.take(4)?;
        if found != expected {
            return Err(format_err(format!(
                "bad magic: expected {:?}, found {:?}",
                String::from_utf8_lossy(expected),
                String::from_utf8_lossy(found)
            )));
        }
        let version = self.u16()?;
        if version != FORMAT_VERSION {
            return Err(format_err(format!("unsupported format version {version}")));
        }
        Ok(())
    }

    fn dims(&mut self) -> Result<Vec<usize>> {
        let ndim = self.u16()? as usize;
        if !(1..=3).contains(&ndim) {
            return Err(format_err(format!("unsupported dimension count {ndim}")));
        }
        (0..ndim)
            .map(|_| {
                let d = self.u64()?;
                usize::try_from(d).map_err(|_| format_err(format!("dimension {d} too large")))
            })
            .collect()
    }

    /// Slice of exactly `n` payload bytes.
    fn payload(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(format_err(format!(
                "truncated payload: expected {n} bytes, found {}",
                self.remaining()
            )));
        }
        self.take(n)
    }

    /// Optional config-hash trailer, then end of input.
    fn trailer(&mut self) -> Result<Option<ConfigHash>> {
        match self.remaining() {
            0 => Ok(None),
            TRAILER_LEN if &self.bytes[self.pos..self.pos + 4] == HASH_MAGIC => {
                self.pos += 4;
                Ok(Some(self.take(32)?.try_into().unwrap()))
            }
            n => Err(format_err(format!("{n} unexpected trailing bytes"))),
        }
    }
}

fn count(dims: &[usize], elem: usize) -> Result<usize> {
    dims.iter()
        .try_fold(elem, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| format_err("dimensions overflow"))
}

fn header(out: &mut Vec<u8>, magic: &[u8; 4], dims: &[usize]) {
    out.extend_from_slice(magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(dims.len() as u16).to_le_bytes());
    for &d in dims {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
}

fn push_trailer(out: &mut Vec<u8>, hash: Option<&ConfigHash>) {
    if let Some(h) = hash {
        out.extend_from_slice(HASH_MAGIC);
        out.extend_from_slice(h);
    }
}

/// Decoded field file. `dims` is the stored shape: a grid shape for
/// volumes, the storage plane shape for planes.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldFile {
    pub dims: Vec<usize>,
    pub dx: f64,
    pub values: Vec<C64>,
    pub config_hash: Option<ConfigHash>,
}

impl FieldFile {
    pub fn into_plane(self) -> Result<PlaneField> {
        if self.dims.len() != 2 {
            return Err(format_err(format!("expected a 2D plane, found dims {:?}", self.dims)));
        }
        let v = Array2::from_shape_vec([self.dims[0], self.dims[1]], self.values).expect("length checked on decode");
        PlaneField::new(self.dx, v)
    }

    pub fn into_volume(self, absorber_width: usize) -> Result<ComplexField> {
        let grid = Grid::new(&self.dims, self.dx, absorber_width)?;
        let v = Array3::from_shape_vec(grid.dims3(), self.values).expect("length checked on decode");
        ComplexField::new(grid, v)
    }
}

pub fn encode_field(dims: &[usize], dx: f64, values: impl IntoIterator<Item = C64>, hash: Option<&ConfigHash>) -> Vec<u8> {
    let mut out = Vec::new();
    header(&mut out, FIELD_MAGIC, dims);
    out.extend_from_slice(&dx.to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.re.to_le_bytes());
        out.extend_from_slice(&v.im.to_le_bytes());
    }
    push_trailer(&mut out, hash);
    out
}

pub fn decode_field(bytes: &[u8]) -> Result<FieldFile> {
    let mut c = Cursor::new(bytes);
    c.magic(FIELD_MAGIC)?;
    let dims = c.dims()?;
    let dx = c.f64()?;
    let n = count(&dims, 16)?;
    let payload = c.payload(n)?;
    let values = payload
        .chunks_exact(16)
        .map(|ch| {
            C64::new(
                f64::from_le_bytes(ch[..8].try_into().unwrap()),
                f64::from_le_bytes(ch[8..].try_into().unwrap()),
            )
        })
        .collect();
    let config_hash = c.trailer()?;
    Ok(FieldFile {
        dims,
        dx,
        values,
        config_hash,
    })
}

pub fn encode_plane(p: &PlaneField, hash: Option<&ConfigHash>) -> Vec<u8> {
    encode_field(&p.shape(), p.dx, p.values.iter().cloned(), hash)
}

pub fn encode_volume(f: &ComplexField, hash: Option<&ConfigHash>) -> Vec<u8> {
    encode_field(f.grid.shape(), f.grid.dx(), f.values.iter().cloned(), hash)
}

pub fn write_field(path: &Path, p: &PlaneField, hash: Option<&ConfigHash>) -> Result<()> {
    write_atomic(path, &encode_plane(p, hash))
}

pub fn read_field(path: &Path) -> Result<FieldFile> {
    decode_field(&fs::read(path)?)
}

/// Two-material voxel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelFile {
    /// Grid-order shape.
    pub dims: Vec<usize>,
    pub dx: f64,
    /// Material index per voxel, storage layout.
    pub indices: Array3<u8>,
    pub pair: MaterialPair,
    pub config_hash: Option<ConfigHash>,
}

impl VoxelFile {
    pub fn count(&self, index: u8) -> usize {
        self.indices.iter().filter(|&&i| i == index).count()
    }

    pub fn block(&self) -> MaterialBlock {
        crate::material::block_from_indices(&self.indices, &self.pair)
    }
}

/// Voxel file for a two-valued block. Any voxel matching neither material
/// of `pair` is an error.
pub fn export_voxels(block: &MaterialBlock, pair: &MaterialPair, dims: &[usize], dx: f64) -> Result<VoxelFile> {
    if pad3(dims, 1) != block.dims3() {
        return Err(HoloError::ShapeMismatch {
            expected: dims.to_vec(),
            found: block.dims3().to_vec(),
        });
    }
    let at = |m: &Material, i: (usize, usize, usize)| block.c[i] == m.c && block.rho[i] == m.rho && block.alpha[i] == m.alpha;
    let mut indices = Array3::zeros(block.dims3());
    for (i, v) in indices.indexed_iter_mut() {
        *v = if at(&pair.material1, i) {
            1
        } else if at(&pair.material0, i) {
            0
        } else {
            return Err(HoloError::InvalidMedium(format!("voxel {i:?} is neither of the two materials")));
        };
    }
    Ok(VoxelFile {
        dims: dims.to_vec(),
        dx,
        indices,
        pair: *pair,
        config_hash: None,
    })
}

pub fn encode_voxels(v: &VoxelFile) -> Vec<u8> {
    let mut out = Vec::new();
    header(&mut out, VOXEL_MAGIC, &v.dims);
    out.extend_from_slice(&v.dx.to_le_bytes());
    out.extend(v.indices.iter());
    for m in [v.pair.material0, v.pair.material1] {
        for x in [m.c, m.rho, m.alpha] {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    push_trailer(&mut out, v.config_hash.as_ref());
    out
}

pub fn decode_voxels(bytes: &[u8]) -> Result<VoxelFile> {
    let mut c = Cursor::new(bytes);
    c.magic(VOXEL_MAGIC)?;
    let dims = c.dims()?;
    if dims.len() < 2 {
        return Err(format_err("voxel grids need 2 or 3 axes"));
    }
    let dx = c.f64()?;
    let n = count(&dims, 1)?;
    let payload = c.payload(n + 48)?;
    if let Some(bad) = payload[..n].iter().find(|&&b| b > 1) {
        return Err(format_err(format!("material index {bad} out of range")));
    }
    let indices = Array3::from_shape_vec(pad3(&dims, 1), payload[..n].to_vec()).expect("length checked");
    let f: Vec<f64> = payload[n..]
        .chunks_exact(8)
        .map(|ch| f64::from_le_bytes(ch.try_into().unwrap()))
        .collect();
    let pair = MaterialPair::new(Material::new(f[0], f[1], f[2])?, Material::new(f[3], f[4], f[5])?)?;
    let config_hash = c.trailer()?;
    Ok(VoxelFile {
        dims,
        dx,
        indices,
        pair,
        config_hash,
    })
}

pub fn write_voxels(path: &Path, v: &VoxelFile) -> Result<()> {
    write_atomic(path, &encode_voxels(v))
}

pub fn read_voxels(path: &Path) -> Result<VoxelFile> {
    decode_voxels(&fs::read(path)?)
}

pub fn encode_checkpoint(cp: &Checkpoint, hash: Option<&ConfigHash>) -> Vec<u8> {
    let mut out = Vec::new();
    header(&mut out, CHECKPOINT_MAGIC, cp.gamma.shape());
    out.extend_from_slice(&(cp.iteration as u64).to_le_bytes());
    out.extend_from_slice(&cp.loss.to_le_bytes());
    out.push(u8::from(cp.binarization_error.is_some()));
    out.extend_from_slice(&cp.binarization_error.unwrap_or(0.0).to_le_bytes());
    for g in cp.gamma.iter() {
        out.extend_from_slice(&g.to_le_bytes());
    }
    push_trailer(&mut out, hash);
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(Checkpoint, Option<ConfigHash>)> {
    let mut c = Cursor::new(bytes);
    c.magic(CHECKPOINT_MAGIC)?;
    let dims = c.dims()?;
    if dims.len() != 3 {
        return Err(format_err("checkpoint gamma must be stored with 3 axes"));
    }
    let iteration = c.u64()? as usize;
    let loss = c.f64()?;
    let has = c.u8()?;
    let b = c.f64()?;
    let n = count(&dims, 8)?;
    let payload = c.payload(n)?;
    let gamma: Vec<f64> = payload
        .chunks_exact(8)
        .map(|ch| f64::from_le_bytes(ch.try_into().unwrap()))
        .collect();
    let gamma = Array3::from_shape_vec([dims[0], dims[1], dims[2]], gamma).expect("length checked");
    let hash = c.trailer()?;
    Ok((
        Checkpoint {
            iteration,
            gamma,
            loss,
            binarization_error: (has != 0).then_some(b),
        },
        hash,
    ))
}

/// Write via a temporary file in the same directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| HoloError::InvalidArgument(format!("not a file path: {}", path.display())))?
        .to_string_lossy();
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    let res = (|| {
        use std::io::Write;
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if res.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(res?)
}

/// Grayscale image from a P2 or P5 graymap, scaled to `[0, 1]`.
pub fn read_pgm(bytes: &[u8]) -> Result<Array2<f64>> {
    let mut pos = 0;
    let mut token = || -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(format_err("truncated PGM header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token()?;
    let num = |s: String| s.parse::<usize>().map_err(|_| format_err(format!("bad PGM header value {s:?}")));
    let w = num(token()?)?;
    let h = num(token()?)?;
    let maxval = num(token()?)?;
    if w == 0 || h == 0 || !(1..=65535).contains(&maxval) {
        return Err(format_err(format!("invalid PGM header {w}x{h} max {maxval}")));
    }
    let n = w * h;
    let scale = 1.0 / maxval as f64;
    let samples: Vec<usize> = match magic.as_str() {
        "P2" => (0..n).map(|_| num(token()?)).collect::<Result<_>>()?,
        "P5" => {
            // Exactly one whitespace byte separates the header from the raster.
            let start = pos + 1;
            let bpp = if maxval > 255 { 2 } else { 1 };
            let need = n * bpp;
            let have = bytes.len().saturating_sub(start);
            if have < need {
                return Err(format_err(format!("truncated payload: expected {need} bytes, found {have}")));
            }
            let raw = &bytes[start..start + need];
            if bpp == 1 {
                raw.iter().map(|&b| b as usize).collect()
            } else {
                raw.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as usize).collect()
            }
        }
        other => return Err(format_err(format!("bad magic: expected \"P2\" or \"P5\", found {other:?}"))),
    };
    if let Some(&s) = samples.iter().find(|&&s| s > maxval) {
        return Err(format_err(format!("PGM sample {s} exceeds maxval {maxval}")));
    }
    Ok(Array2::from_shape_vec([h, w], samples.into_iter().map(|s| s as f64 * scale).collect()).expect("length checked"))
}

/// 8-bit binary graymap, scaled so the maximum maps to 255, with an
/// optional one-line header comment.
pub fn write_pgm(image: &Array2<f64>, comment: Option<&str>) -> Vec<u8> {
    let [h, w] = [image.nrows(), image.ncols()];
    let max = image.iter().cloned().fold(0.0, f64::max);
    let comment = comment.map(|c| format!("# {}\n", c.replace('\n', " "))).unwrap_or_default();
    let mut out = format!("P5\n{comment}{w} {h}\n255\n").into_bytes();
    out.extend(image.iter().map(|&v| {
        if max > 0.0 && v > 0.0 {
            (v / max * 255.0).round().min(255.0) as u8
        } else {
            0
        }
    }));
    out
}
