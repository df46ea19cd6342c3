//! File formats.
//!
//! All binary payloads are little-endian. Cue maps and memory checkpoints
//! start with a `u32` byte length followed by a JSON header; grids start
//! with a fixed magic.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::camera::{CameraFrame, GeometricCues, Intrinsics};
use crate::classes::{SemanticClass, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::gaussian::SemanticGaussian;
use crate::memory::{Aabb, FrameStats, GaussianMemory};
use crate::quat::Quat;
use crate::scene::{GridPose, SyntheticScene};
use crate::splat::{GridSpec, VoxelGrid};

pub const GRID_MAGIC: &[u8; 8] = b"SGVOXEL1";
pub const CUES_FORMAT: &str = "semgauss-cues-v1";
pub const MEMORY_FORMAT: &str = "semgauss-memory-v1";
/// Bytes per Gaussian record in a checkpoint.
pub const GAUSSIAN_RECORD_BYTES: usize = 8 * (1 + 3 + 3 + 4 + 1 + NUM_CLASSES + 1);

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(open(path)?)?)
}

pub fn save_scene(path: &Path, scene: &SyntheticScene) -> Result<()> {
    write_json(path, scene)
}

pub fn load_scene(path: &Path) -> Result<SyntheticScene> {
    let scene: SyntheticScene = read_json(path)?;
    scene.validate()?;
    Ok(scene)
}

/// Poses as row-major 4x4 world-to-camera matrices sharing one intrinsics block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryFile {
    pub intrinsics: Intrinsics,
    pub poses: Vec<[f64; 16]>,
}

impl TrajectoryFile {
    pub fn from_frames(frames: &[CameraFrame]) -> Result<Self> {
        let intrinsics = frames
            .first()
            .map(|f| f.intrinsics)
            .ok_or_else(|| Error::InvalidArgument("trajectory is empty".into()))?;
        if frames.iter().any(|f| f.intrinsics != intrinsics) {
            return Err(Error::InvalidArgument("frames disagree on intrinsics".into()));
        }
        let poses = frames
            .iter()
            .map(|f| {
                let mut m = Matrix4::identity();
                m.fixed_view_mut::<3, 3>(0, 0).copy_from(&f.rotation);
                m.fixed_view_mut::<3, 1>(0, 3).copy_from(&f.translation);
                let mut out = [0.0; 16];
                for r in 0..4 {
                    for c in 0..4 {
                        out[4 * r + c] = m[(r, c)];
                    }
                }
                out
            })
            .collect();
        Ok(Self { intrinsics, poses })
    }

    pub fn to_frames(&self) -> Result<Vec<CameraFrame>> {
        self.poses
            .iter()
            .enumerate()
            .map(|(k, p)| {
                if p[12..] != [0.0, 0.0, 0.0, 1.0] {
                    return Err(Error::InvalidFrame(format!("pose {k}: last row must be 0 0 0 1")));
                }
                let rotation = Matrix3::new(p[0], p[1], p[2], p[4], p[5], p[6], p[8], p[9], p[10]);
                let translation = Vector3::new(p[3], p[7], p[11]);
                CameraFrame::new(rotation, translation, self.intrinsics)
                    .map_err(|e| Error::InvalidFrame(format!("pose {k}: {e}")))
            })
            .collect()
    }
}

pub fn save_trajectory(path: &Path, frames: &[CameraFrame]) -> Result<()> {
    write_json(path, &TrajectoryFile::from_frames(frames)?)
}

pub fn load_trajectory(path: &Path) -> Result<Vec<CameraFrame>> {
    read_json::<TrajectoryFile>(path)?.to_frames()
}

fn write_header<W: Write, T: Serialize>(w: &mut W, header: &T) -> Result<()> {
    let bytes = serde_json::to_vec(header)?;
    let len = u32::try_from(bytes.len()).map_err(|_| Error::Format("header too large".into()))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(&bytes)?;
    Ok(())
}

fn read_header<R: Read, T: DeserializeOwned>(r: &mut R) -> Result<T> {
    let len = read_u32(r)? as usize;
    let mut bytes = vec![0u8; len];
    r.read_exact(&mut bytes)
        .map_err(|_| Error::Format("truncated header".into()))?;
    Ok(serde_json::from_slice(&bytes)?)
}

fn read_bytes<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)
        .map_err(|_| Error::Format("unexpected end of file".into()))?;
    Ok(b)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    Ok(u32::from_le_bytes(read_bytes(r)?))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    Ok(u64::from_le_bytes(read_bytes(r)?))
}

fn read_f32<R: Read>(r: &mut R) -> Result<f32> {
    Ok(f32::from_le_bytes(read_bytes(r)?))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_le_bytes(read_bytes(r)?))
}

fn expect_eof<R: Read>(r: &mut R) -> Result<()> {
    let mut probe = [0u8; 1];
    match r.read(&mut probe)? {
        0 => Ok(()),
        _ => Err(Error::Format("trailing bytes after payload".into())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CuesHeader {
    format: String,
    width: u32,
    height: u32,
    channels: Vec<String>,
}

const CUE_CHANNELS: [&str; 5] = ["nx", "ny", "nz", "kappa", "depth"];

/// Cue maps as `f32` records `(nx, ny, nz, kappa, depth)` per pixel, row-major.
pub fn write_cues<W: Write>(w: &mut W, cues: &GeometricCues) -> Result<()> {
    cues.validate()?;
    let header = CuesHeader {
        format: CUES_FORMAT.into(),
        width: cues.width,
        height: cues.height,
        channels: CUE_CHANNELS.iter().map(|s| s.to_string()).collect(),
    };
    write_header(w, &header)?;
    for idx in 0..cues.normals.len() {
        let n = cues.normals[idx];
        for v in [n.x, n.y, n.z, cues.curvature[idx], cues.depth[idx]] {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_cues<R: Read>(r: &mut R) -> Result<GeometricCues> {
    let header: CuesHeader = read_header(r)?;
    if header.format != CUES_FORMAT || header.channels != CUE_CHANNELS {
        return Err(Error::Format(format!("unsupported cue format '{}'", header.format)));
    }
    let mut cues = GeometricCues::empty(header.width, header.height);
    for idx in 0..cues.normals.len() {
        let mut v = [0.0f64; 5];
        for x in &mut v {
            *x = read_f32(r)? as f64;
        }
        cues.normals[idx] = Vector3::new(v[0], v[1], v[2]);
        cues.curvature[idx] = v[3];
        cues.depth[idx] = v[4];
    }
    expect_eof(r)?;
    Ok(cues)
}

pub fn save_cues(path: &Path, cues: &GeometricCues) -> Result<()> {
    let mut w = create(path)?;
    write_cues(&mut w, cues)?;
    w.flush()?;
    Ok(())
}

pub fn load_cues(path: &Path) -> Result<GeometricCues> {
    read_cues(&mut open(path)?)
}

/// Magic, origin (3 x f64), dims (3 x u32), voxel size (f64), density flag
/// (u8), labels (u8, x fastest), then `f32` densities when flagged.
pub fn write_grid<W: Write>(w: &mut W, grid: &VoxelGrid, with_density: bool) -> Result<()> {
    let s = &grid.spec;
    w.write_all(GRID_MAGIC)?;
    for v in s.origin.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    for d in s.dims {
        let d = u32::try_from(d).map_err(|_| Error::Format("grid dimension exceeds u32".into()))?;
        w.write_all(&d.to_le_bytes())?;
    }
    w.write_all(&s.voxel_size.to_le_bytes())?;
    w.write_all(&[with_density as u8])?;
    w.write_all(&grid.labels)?;
    if with_density {
        for d in &grid.density {
            w.write_all(&(*d as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_grid<R: Read>(r: &mut R) -> Result<VoxelGrid> {
    let magic: [u8; 8] = read_bytes(r)?;
    if &magic != GRID_MAGIC {
        return Err(Error::Format("not a voxel grid file".into()));
    }
    let origin = Vector3::new(read_f64(r)?, read_f64(r)?, read_f64(r)?);
    let dims = [read_u32(r)? as usize, read_u32(r)? as usize, read_u32(r)? as usize];
    let voxel_size = read_f64(r)?;
    let spec = GridSpec::new(origin, dims, voxel_size).map_err(|e| Error::Format(e.to_string()))?;
    let [flag] = read_bytes::<1, _>(r)?;
    let n = spec.num_voxels();
    let mut labels = vec![0u8; n];
    r.read_exact(&mut labels)
        .map_err(|_| Error::Format("truncated label array".into()))?;
    if let Some(bad) = labels.iter().find(|&&l| l as usize >= NUM_CLASSES) {
        return Err(Error::Format(format!("label {bad} out of range")));
    }
    let density = match flag {
        0 => labels.iter().map(|&l| if l != 0 { 1.0 } else { 0.0 }).collect(),
        1 => (0..n).map(|_| read_f32(r).map(f64::from)).collect::<Result<_>>()?,
        f => return Err(Error::Format(format!("bad density flag {f}"))),
    };
    expect_eof(r)?;
    Ok(VoxelGrid { spec, labels, density })
}

pub fn save_grid(path: &Path, grid: &VoxelGrid, with_density: bool) -> Result<()> {
    let mut w = create(path)?;
    write_grid(&mut w, grid, with_density)?;
    w.flush()?;
    Ok(())
}

pub fn load_grid(path: &Path) -> Result<VoxelGrid> {
    read_grid(&mut open(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MemoryHeader {
    format: String,
    bounds: Aabb,
    pose: GridPose,
    count: usize,
    config_hash: String,
    update_log: Vec<FrameStats>,
}

/// Checkpoint: JSON header then one fixed-size `f64` record per Gaussian.
pub fn write_memory<W: Write>(w: &mut W, mem: &GaussianMemory, config_hash: &str) -> Result<()> {
    let header = MemoryHeader {
        format: MEMORY_FORMAT.into(),
        bounds: mem.bounds,
        pose: mem.pose,
        count: mem.len(),
        config_hash: config_hash.into(),
        update_log: mem.update_log.clone(),
    };
    write_header(w, &header)?;
    for g in &mem.gaussians {
        w.write_all(&g.id.to_le_bytes())?;
        let r = g.rotation.to_array();
        let fields = g
            .mean
            .iter()
            .chain(g.scale.iter())
            .chain(r.iter())
            .chain(std::iter::once(&g.opacity))
            .chain(g.logits.iter())
            .chain(std::iter::once(&g.fixed_weight));
        for v in fields {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Returns the memory and the config hash stored with it.
pub fn read_memory<R: Read>(r: &mut R) -> Result<(GaussianMemory, String)> {
    let header: MemoryHeader = read_header(r)?;
    if header.format != MEMORY_FORMAT {
        return Err(Error::Format(format!("unsupported memory format '{}'", header.format)));
    }
    let mut gaussians = Vec::with_capacity(header.count);
    for _ in 0..header.count {
        let id = read_u64(r)?;
        let mut v = [0.0f64; 3 + 3 + 4 + 1 + NUM_CLASSES + 1];
        for x in &mut v {
            *x = read_f64(r)?;
        }
        let mut logits = [0.0; NUM_CLASSES];
        logits.copy_from_slice(&v[11..11 + NUM_CLASSES]);
        gaussians.push(SemanticGaussian {
            id,
            mean: Vector3::new(v[0], v[1], v[2]),
            scale: Vector3::new(v[3], v[4], v[5]),
            rotation: Quat::new(v[6], v[7], v[8], v[9]),
            opacity: v[10],
            logits,
            fixed_weight: v[11 + NUM_CLASSES],
        });
    }
    expect_eof(r)?;
    let mem = GaussianMemory {
        gaussians,
        bounds: header.bounds,
        pose: header.pose,
        update_log: header.update_log,
    };
    mem.validate().map_err(|e| Error::Format(e.to_string()))?;
    Ok((mem, header.config_hash))
}

pub fn save_memory(path: &Path, mem: &GaussianMemory, config_hash: &str) -> Result<()> {
    let mut w = create(path)?;
    write_memory(&mut w, mem, config_hash)?;
    w.flush()?;
    Ok(())
}

pub fn load_memory(path: &Path) -> Result<(GaussianMemory, String)> {
    read_memory(&mut open(path)?)
}

/// ASCII point cloud of occupied voxel centers colored by label.
pub fn write_ply<W: Write>(w: &mut W, grid: &VoxelGrid) -> Result<()> {
    let occupied: Vec<usize> = (0..grid.labels.len()).filter(|&i| grid.labels[i] != 0).collect();
    writeln!(w, "ply\nformat ascii 1.0\nelement vertex {}", occupied.len())?;
    writeln!(w, "property float x\nproperty float y\nproperty float z")?;
    writeln!(w, "property uchar label")?;
    writeln!(w, "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header")?;
    for idx in occupied {
        let c = grid.spec.center_of(idx);
        let label = grid.labels[idx];
        let [r, g, b] = SemanticClass::from_id(label).unwrap_or(SemanticClass::Empty).color();
        writeln!(w, "{} {} {} {label} {r} {g} {b}", c.x as f32, c.y as f32, c.z as f32)?;
    }
    Ok(())
}

pub fn save_ply(path: &Path, grid: &VoxelGrid) -> Result<()> {
    let mut w = create(path)?;
    write_ply(&mut w, grid)?;
    w.flush()?;
    Ok(())
}
