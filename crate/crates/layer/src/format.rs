//! Binary volume and mask files.
//!
//! Volume: `LVOL`, u32 version, u32 nx, ny, nz, u8 modality code, then
//! `nx·ny·nz` little-endian f32 voxels, x fastest.
//! Mask: `LMSK`, u32 version, u32 nx, ny, nz, then one u8 label per voxel.

use std::path::Path;

use layer_core::volume::Dims;
use layer_core::{LayerMaskSet, Modality, VolumeGrid};

use crate::error::{read, write, Error, Result};

pub const VOLUME_MAGIC: [u8; 4] = *b"LVOL";
pub const MASK_MAGIC: [u8; 4] = *b"LMSK";
pub const FORMAT_VERSION: u32 = 1;

const DIMS_END: usize = 20;

fn put_header(out: &mut Vec<u8>, magic: [u8; 4], dims: Dims) {
    out.extend_from_slice(&magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for n in [dims.nx, dims.ny, dims.nz] {
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
}

pub fn encode_volume(v: &VolumeGrid) -> Vec<u8> {
    let mut out = Vec::with_capacity(DIMS_END + 1 + 4 * v.voxels().len());
    put_header(&mut out, VOLUME_MAGIC, v.dims());
    out.push(v.modality().code());
    for x in v.voxels() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn encode_mask(m: &LayerMaskSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(DIMS_END + m.labels().len());
    put_header(&mut out, MASK_MAGIC, m.dims());
    out.extend_from_slice(m.labels());
    out
}

fn u32_at(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    match bytes.get(at..at + 4) {
        Some(b) => Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]])),
        None => Err(Error::format(path, bytes.len(), "truncated header")),
    }
}

fn get_header(bytes: &[u8], magic: [u8; 4], path: &Path) -> Result<Dims> {
    match bytes.get(..4) {
        Some(m) if m == magic => {}
        Some(_) => {
            return Err(Error::format(path, 0, format!("bad magic, expected {}", String::from_utf8_lossy(&magic))))
        }
        None => return Err(Error::format(path, bytes.len(), "truncated header")),
    }
    let version = u32_at(bytes, 4, path)?;
    if version != FORMAT_VERSION {
        return Err(Error::format(path, 4, format!("unsupported version {version}")));
    }
    let mut n = [0usize; 3];
    for (i, slot) in n.iter_mut().enumerate() {
        let v = u32_at(bytes, 8 + 4 * i, path)?;
        if v == 0 {
            return Err(Error::format(path, 8 + 4 * i, "zero dimension"));
        }
        *slot = v as usize;
    }
    Ok(Dims::new(n[0], n[1], n[2]))
}

fn check_len(bytes: &[u8], start: usize, expected: usize, path: &Path) -> Result<()> {
    let got = bytes.len() - start.min(bytes.len());
    if got < expected {
        return Err(Error::format(path, bytes.len(), format!("truncated payload, expected {expected} bytes after offset {start}")));
    }
    if got > expected {
        return Err(Error::format(path, start + expected, "trailing bytes after payload"));
    }
    Ok(())
}

pub fn decode_volume(bytes: &[u8], path: &Path) -> Result<VolumeGrid> {
    let dims = get_header(bytes, VOLUME_MAGIC, path)?;
    let code = *bytes.get(DIMS_END).ok_or_else(|| Error::format(path, bytes.len(), "truncated header"))?;
    let modality = Modality::from_code(code).ok_or_else(|| Error::format(path, DIMS_END, format!("unknown modality code {code}")))?;
    let start = DIMS_END + 1;
    check_len(bytes, start, 4 * dims.len(), path)?;
    let mut voxels = Vec::with_capacity(dims.len());
    for (i, c) in bytes[start..].chunks_exact(4).enumerate() {
        let x = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
        if !x.is_finite() {
            return Err(Error::format(path, start + 4 * i, "non-finite voxel"));
        }
        voxels.push(x);
    }
    VolumeGrid::new(dims, modality, voxels).map_err(|e| Error::format(path, start, e.to_string()))
}

pub fn decode_mask(bytes: &[u8], path: &Path) -> Result<LayerMaskSet> {
    let dims = get_header(bytes, MASK_MAGIC, path)?;
    check_len(bytes, DIMS_END, dims.len(), path)?;
    let labels = &bytes[DIMS_END..];
    if let Some(i) = labels.iter().position(|&l| l > 6) {
        return Err(Error::format(path, DIMS_END + i, format!("label {} outside 0..=6", labels[i])));
    }
    LayerMaskSet::new(dims, labels.to_vec()).map_err(|e| Error::format(path, DIMS_END, e.to_string()))
}

pub fn write_volume(path: &Path, v: &VolumeGrid) -> Result<()> {
    write(path, &encode_volume(v))
}

pub fn read_volume(path: &Path) -> Result<VolumeGrid> {
    decode_volume(&read(path)?, path)
}

pub fn write_mask(path: &Path, m: &LayerMaskSet) -> Result<()> {
    write(path, &encode_mask(m))
}

pub fn read_mask(path: &Path) -> Result<LayerMaskSet> {
    decode_mask(&read(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> VolumeGrid {
        let d = Dims::new(3, 2, 2);
        VolumeGrid::new(d, Modality::Swe, (0..12).map(|i| i as f32 * 0.37).collect()).unwrap()
    }

    #[test]
    fn volume_round_trip_is_bit_exact() {
        let v = sample();
        let bytes = encode_volume(&v);
        assert_eq!(bytes.len(), 21 + 48);
        let back = decode_volume(&bytes, Path::new("v")).unwrap();
        assert_eq!(back, v);
        assert_eq!(encode_volume(&back), bytes);
    }

    #[test]
    fn errors_carry_offsets() {
        let p = Path::new("v.lvol");
        let good = encode_volume(&sample());
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode_volume(&bad, p), Err(Error::Format { offset: 0, .. })));
        let mut bad = good.clone();
        bad[4] = 9;
        assert!(matches!(decode_volume(&bad, p), Err(Error::Format { offset: 4, .. })));
        let mut bad = good.clone();
        bad[20] = 7;
        assert!(matches!(decode_volume(&bad, p), Err(Error::Format { offset: 20, .. })));
        let short = &good[..good.len() - 1];
        assert!(matches!(decode_volume(short, p), Err(Error::Format { .. })));
        let mut long = good.clone();
        long.push(0);
        assert!(matches!(decode_volume(&long, p), Err(Error::Format { offset: 69, .. })));
        let mut nan = good.clone();
        nan[25..29].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(decode_volume(&nan, p), Err(Error::Format { offset: 25, .. })));
    }

    #[test]
    fn mask_label_range_is_checked() {
        let d = Dims::new(2, 1, 1);
        let m = LayerMaskSet::new(d, vec![0, 6]).unwrap();
        let mut bytes = encode_mask(&m);
        assert_eq!(decode_mask(&bytes, Path::new("m")).unwrap(), m);
        bytes[21] = 7;
        assert!(matches!(decode_mask(&bytes, Path::new("m")), Err(Error::Format { offset: 21, .. })));
    }
}
