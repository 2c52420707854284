//! Truncated signed-distance volume and its binary file format.
//!
//! File layout (little-endian): magic `P3VL`, version `u8`, resolution
//! `u32 x 3`, origin `f32 x 3`, voxel size `f32`, truncation `f32`, then one
//! `(value: f32, weight: f32)` pair per voxel, x-fastest.

use std::io::{self, Read, Write};
use std::path::Path;

use thiserror::Error;

pub const VOLUME_MAGIC: [u8; 4] = *b"P3VL";
pub const VOLUME_VERSION: u8 = 1;

/// Guards against absurd allocations when reading untrusted files.
const MAX_VOXELS: u64 = 1 << 28;

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic, not a volume file")]
    BadMagic,
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("invalid resolution {0}x{1}x{2}")]
    BadResolution(u32, u32, u32),
    #[error("invalid voxel size {0}")]
    BadVoxelSize(f32),
    #[error("invalid truncation {0}")]
    BadTruncation(f32),
}

/// Per-voxel truncated signed distance plus fusion weight.
///
/// Values are clamped to `[-truncation, truncation]`; a zero weight marks an
/// unobserved voxel, which holds `+truncation` (outside) by convention.
#[derive(Debug, Clone)]
pub struct TsdfVolume {
    resolution: [u32; 3],
    origin: [f64; 3],
    voxel_size: f64,
    truncation: f64,
    values: Vec<f32>,
    weights: Vec<f32>,
}

impl TsdfVolume {
    /// Fresh, fully unobserved volume (all voxels `+truncation`, weight 0).
    pub fn new(resolution: [u32; 3], origin: [f64; 3], voxel_size: f64, truncation: f64) -> Self {
        let n = resolution.iter().map(|&r| r as usize).product();
        Self {
            resolution,
            origin,
            voxel_size,
            truncation,
            values: vec![truncation as f32; n],
            weights: vec![0.0; n],
        }
    }

    pub fn from_parts(
        resolution: [u32; 3],
        origin: [f64; 3],
        voxel_size: f64,
        truncation: f64,
        values: Vec<f32>,
        weights: Vec<f32>,
    ) -> Self {
        let n: usize = resolution.iter().map(|&r| r as usize).product();
        assert_eq!(values.len(), n);
        assert_eq!(weights.len(), n);
        Self {
            resolution,
            origin,
            voxel_size,
            truncation,
            values,
            weights,
        }
    }

    pub fn resolution(&self) -> [u32; 3] {
        self.resolution
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn truncation(&self) -> f64 {
        self.truncation
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn voxel_count(&self) -> usize {
        self.values.len()
    }

    /// Linear index, x-fastest.
    pub fn index(&self, x: u32, y: u32, z: u32) -> usize {
        ((z * self.resolution[1] + y) * self.resolution[0] + x) as usize
    }

    /// World position of the voxel center.
    pub fn voxel_center(&self, x: u32, y: u32, z: u32) -> [f64; 3] {
        [
            self.origin[0] + (x as f64 + 0.5) * self.voxel_size,
            self.origin[1] + (y as f64 + 0.5) * self.voxel_size,
            self.origin[2] + (z as f64 + 0.5) * self.voxel_size,
        ]
    }

    pub fn value_at(&self, x: u32, y: u32, z: u32) -> f32 {
        self.values[self.index(x, y, z)]
    }

    pub fn weight_at(&self, x: u32, y: u32, z: u32) -> f32 {
        self.weights[self.index(x, y, z)]
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), VolumeError> {
        w.write_all(&VOLUME_MAGIC)?;
        w.write_all(&[VOLUME_VERSION])?;
        for r in self.resolution {
            w.write_all(&r.to_le_bytes())?;
        }
        for o in self.origin {
            w.write_all(&(o as f32).to_le_bytes())?;
        }
        w.write_all(&(self.voxel_size as f32).to_le_bytes())?;
        w.write_all(&(self.truncation as f32).to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.values.len() * 8);
        for (v, wt) in self.values.iter().zip(&self.weights) {
            buf.extend_from_slice(&v.to_le_bytes());
            buf.extend_from_slice(&wt.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, VolumeError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if magic != VOLUME_MAGIC {
            return Err(VolumeError::BadMagic);
        }
        let mut version = [0u8; 1];
        r.read_exact(&mut version)?;
        if version[0] != VOLUME_VERSION {
            return Err(VolumeError::BadVersion(version[0]));
        }
        let mut u32buf = [0u8; 4];
        let mut res = [0u32; 3];
        for axis in &mut res {
            r.read_exact(&mut u32buf)?;
            *axis = u32::from_le_bytes(u32buf);
        }
        let total = res
            .iter()
            .try_fold(1u64, |acc, &x| acc.checked_mul(x as u64))
            .unwrap_or(u64::MAX);
        if res.contains(&0) || total > MAX_VOXELS {
            return Err(VolumeError::BadResolution(res[0], res[1], res[2]));
        }
        let mut f32buf = [0u8; 4];
        let mut origin = [0.0f64; 3];
        for o in &mut origin {
            r.read_exact(&mut f32buf)?;
            *o = f32::from_le_bytes(f32buf) as f64;
        }
        r.read_exact(&mut f32buf)?;
        let voxel_size = f32::from_le_bytes(f32buf);
        if !(voxel_size.is_finite() && voxel_size > 0.0) {
            return Err(VolumeError::BadVoxelSize(voxel_size));
        }
        r.read_exact(&mut f32buf)?;
        let truncation = f32::from_le_bytes(f32buf);
        if !(truncation.is_finite() && truncation > 0.0) {
            return Err(VolumeError::BadTruncation(truncation));
        }
        let mut data = vec![0u8; total as usize * 8];
        r.read_exact(&mut data)?;
        let mut values = Vec::with_capacity(total as usize);
        let mut weights = Vec::with_capacity(total as usize);
        for chunk in data.chunks_exact(8) {
            values.push(f32::from_le_bytes(chunk[0..4].try_into().unwrap()));
            weights.push(f32::from_le_bytes(chunk[4..8].try_into().unwrap()));
        }
        Ok(Self {
            resolution: res,
            origin,
            voxel_size: voxel_size as f64,
            truncation: truncation as f64,
            values,
            weights,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), VolumeError> {
        let file = std::fs::File::create(path)?;
        self.write_to(io::BufWriter::new(file))
    }

    pub fn load(path: &Path) -> Result<Self, VolumeError> {
        let file = std::fs::File::open(path)?;
        Self::read_from(io::BufReader::new(file))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let mut v = TsdfVolume::new([3, 4, 5], [-1.05; 3], 0.5, 0.1);
        let n = v.voxel_count();
        for i in 0..n {
            v.values[i] = (i as f32 * 0.01) - 0.05;
            v.weights[i] = i as f32;
        }
        let mut buf = Vec::new();
        v.write_to(&mut buf).unwrap();
        let back = TsdfVolume::read_from(buf.as_slice()).unwrap();
        assert_eq!(back.resolution(), [3, 4, 5]);
        assert_eq!(back.values(), v.values());
        assert_eq!(back.weights(), v.weights());
        assert_eq!(back.voxel_size(), 0.5);
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(
            TsdfVolume::read_from(&b"P3V"[..]),
            Err(VolumeError::Io(_))
        ));
        assert!(matches!(
            TsdfVolume::read_from(&b"XXXX\x01rest"[..]),
            Err(VolumeError::BadMagic)
        ));
        // Huge resolution must not allocate.
        let mut buf = Vec::new();
        buf.extend_from_slice(b"P3VL\x01");
        buf.extend_from_slice(&u32::MAX.to_le_bytes());
        buf.extend_from_slice(&u32::MAX.to_le_bytes());
        buf.extend_from_slice(&u32::MAX.to_le_bytes());
        buf.extend_from_slice(&[0u8; 20]);
        assert!(matches!(
            TsdfVolume::read_from(buf.as_slice()),
            Err(VolumeError::BadResolution(..))
        ));
    }

    #[test]
    fn unobserved_convention() {
        let v = TsdfVolume::new([2, 2, 2], [0.0; 3], 1.0, 0.25);
        assert_eq!(v.value_at(1, 1, 1), 0.25);
        assert_eq!(v.weight_at(1, 1, 1), 0.0);
    }
}
